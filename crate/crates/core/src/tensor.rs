//! Dense row-major `f64` tensors and the matrix-product kernels behind them.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// A `rows × cols` matrix. Panics if `data` has the wrong length.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Tensor {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor::matrix(rows.len(), cols, data)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::matrix(1, 1, vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    /// Leading dimension; 1 for rank 0.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Product of the trailing dimensions.
    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.shape,
                rhs: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::matrix(c, r, out)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `op(a) · op(b)` where `op` optionally transposes. Both operands must be matrices.
pub fn gemm(a: &Tensor, trans_a: bool, b: &Tensor, trans_b: bool) -> Tensor {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k) = if trans_a { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "gemm inner dimension");
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return Tensor::matrix(m, n, c);
    }

    // Trailing all-zero columns of `a` (padded sequence features) contribute nothing.
    let used = (0..ar)
        .map(|i| a.data[i * ac..(i + 1) * ac].iter().rposition(|v| *v != 0.0).map_or(0, |p| p + 1))
        .max()
        .unwrap_or(0);
    // Likewise trailing zero columns of an untransposed `b` leave output columns zero.
    let width = if trans_b {
        n
    } else {
        (0..br)
            .map(|i| b.data[i * bc..(i + 1) * bc].iter().rposition(|v| *v != 0.0).map_or(0, |p| p + 1))
            .max()
            .unwrap_or(0)
    };
    if used == 0 || width == 0 {
        return Tensor::matrix(m, n, c);
    }

    let nnz = (0..ar).map(|i| a.data[i * ac..i * ac + used].iter().filter(|v| **v != 0.0).count()).sum::<usize>();
    if nnz * 16 < a.len() {
        // Very sparse left operand (selection matrices): accumulate only its nonzeros.
        let (rsb, csb) = if trans_b { (1, bc) } else { (bc, 1) };
        for i in 0..ar {
            for j in 0..used {
                let v = a.data[i * ac + j];
                if v == 0.0 {
                    continue;
                }
                // Entry (i, j) of `a` lands at (row, inner) of op(a).
                let (row, inner) = if trans_a { (j, i) } else { (i, j) };
                let out = &mut c[row * n..(row + 1) * n];
                if csb == 1 {
                    let brow = &b.data[inner * rsb..inner * rsb + n];
                    for (o, bv) in out.iter_mut().zip(brow) {
                        *o += v * bv;
                    }
                } else {
                    for (col, o) in out.iter_mut().enumerate() {
                        *o += v * b.data[inner * rsb + col * csb];
                    }
                }
            }
        }
        return Tensor::matrix(m, n, c);
    }

    let (rsa, csa) = if trans_a { (1isize, ac as isize) } else { (ac as isize, 1isize) };
    let (rsb, csb) = if trans_b { (1isize, bc as isize) } else { (bc as isize, 1isize) };
    // With `a` transposed the zero columns become zero output rows; otherwise
    // they are zero inner indices.
    let (rows, inner) = if trans_a { (used, k) } else { (m, used) };
    // SAFETY: strides and extents describe sub-blocks of the owned buffers;
    // `rows <= m`, `inner <= k` and `width <= n` bound every access.
    unsafe {
        matrixmultiply::dgemm(
            rows, inner, width, 1.0,
            a.data.as_ptr(), rsa, csa,
            b.data.as_ptr(), rsb, csb,
            0.0, c.as_mut_ptr(), n as isize, 1,
        );
    }
    Tensor::matrix(m, n, c)
}
