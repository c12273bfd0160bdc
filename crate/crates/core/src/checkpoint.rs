//! Binary container for named tensors with a `key = value` text header.
//!
//! Layout: the 8-byte magic, header lines, an empty line, then per tensor the
//! name length, name bytes, rank, dims (all `u32` little-endian) and the
//! row-major `f64` little-endian values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"DMAGT001";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub header: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

fn corrupt(offset: usize, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        offset,
        message: message.into(),
    }
}

fn u32_of(n: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(n)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::invalid(format!("{what} {n} does not fit the checkpoint format")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(corrupt(self.pos, format!("truncated {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

impl Checkpoint {
    pub fn new() -> Checkpoint {
        Checkpoint::default()
    }

    pub fn with_header(mut self, key: impl Into<String>, value: impl Into<String>) -> Checkpoint {
        self.header.push((key.into(), value.into()));
        self
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Header lines as `key = value` text, in insertion order.
    pub fn header_text(&self) -> String {
        self.header.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = MAGIC.to_vec();
        for (k, v) in &self.header {
            if k.is_empty() || k.contains(['\n', '=']) || v.contains('\n') || k.trim() != k {
                return Err(Error::invalid(format!("header entry '{k}' cannot be stored")));
            }
        }
        out.extend_from_slice(self.header_text().as_bytes());
        out.push(b'\n');
        for (name, t) in &self.tensors {
            out.extend_from_slice(&u32_of(name.len(), "name length")?);
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&u32_of(t.shape().len(), "rank")?);
            for &d in t.shape() {
                out.extend_from_slice(&u32_of(d, "dimension")?);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < MAGIC.len() {
            return Err(corrupt(0, "truncated magic"));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt(0, "bad magic"));
        }
        let mut r = Reader { bytes, pos: MAGIC.len() };
        let mut header = Vec::new();
        loop {
            let start = r.pos;
            let len = bytes[start..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| corrupt(start, "unterminated header"))?;
            let line = std::str::from_utf8(r.take(len + 1, "header")?)
                .map_err(|_| corrupt(start, "header is not UTF-8"))?
                .trim_end_matches('\n');
            if line.is_empty() {
                break;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| corrupt(start, format!("malformed header line '{line}'")))?;
            header.push((k.to_string(), v.to_string()));
        }
        let mut tensors = Vec::new();
        while r.pos < bytes.len() {
            let start = r.pos;
            let name_len = r.u32("name length")?;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| corrupt(start + 4, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u32("rank")?;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u32("dimension")?);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|c| c.checked_mul(8))
                .ok_or_else(|| corrupt(start, "tensor size overflows"))?;
            let raw = r.take(count, "tensor values")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        Ok(Checkpoint { header, tensors })
    }

    /// Write via a temporary sibling file so readers never see a partial file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".partial");
        let tmp = std::path::PathBuf::from(tmp);
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new().with_header("kind", "model").with_header("seed", "7");
        c.push("w", Tensor::matrix(2, 3, vec![1.5, -0.0, f64::MIN_POSITIVE, 3.0e300, -7.25, 0.1]));
        c.push("b", Tensor::new(vec![2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back.header, c.header);
        for ((n1, t1), (n2, t2)) in back.tensors.iter().zip(&c.tensors) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let a: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn truncation_and_magic_name_offsets() {
        let bytes = sample().to_bytes().unwrap();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { .. }));
        assert!(err.to_string().contains("offset"), "{err}");
        let mut bad = bytes.clone();
        bad[3] = b'X';
        assert_eq!(
            Checkpoint::from_bytes(&bad).unwrap_err().to_string(),
            "checkpoint: bad magic at offset 0"
        );
        assert!(Checkpoint::from_bytes(b"DMAGT").is_err());
        assert!(Checkpoint::from_bytes(b"DMAGT001key = v").is_err());
    }

    #[test]
    fn header_values_with_separators() {
        let c = Checkpoint::new().with_header("model.mlp_widths", "256, 128 = x");
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back.header_value("model.mlp_widths"), Some("256, 128 = x"));
        assert!(Checkpoint::new().with_header("a\nb", "1").to_bytes().is_err());
    }
}
