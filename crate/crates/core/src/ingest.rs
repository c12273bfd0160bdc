//! Parsing of association, SMILES and sequence files into a validated [`Dataset`].
//!
//! All inputs are tab-separated text with one record per line. Blank lines and
//! lines starting with `#` are ignored.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Which curated database an association came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    NcDr,
    RnaInter,
    Sm2Mir,
    Other,
}

impl Source {
    pub fn parse(tag: &str) -> Source {
        match tag.to_ascii_lowercase().as_str() {
            "ncdr" => Source::NcDr,
            "rnainter" => Source::RnaInter,
            "sm2mir" => Source::Sm2Mir,
            _ => Source::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::NcDr => "ncDR",
            Source::RnaInter => "RNAInter",
            Source::Sm2Mir => "SM2miR",
            Source::Other => "other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationRecord {
    pub drug_id: String,
    pub mirna_id: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrugRecord {
    pub drug_id: String,
    pub smiles: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MirnaRecord {
    pub mirna_id: String,
    /// Uppercase, over `{A, C, G, U}`.
    pub sequence: String,
}

/// Drugs, miRNAs and the associations between them.
///
/// Node order is fixed at assembly: drugs in first-seen order, then miRNAs.
/// Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    drugs: Vec<DrugRecord>,
    mirnas: Vec<MirnaRecord>,
    associations: Vec<AssociationRecord>,
    drug_index: HashMap<String, usize>,
    mirna_index: HashMap<String, usize>,
}

/// What [`assemble_dataset`] threw away.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssemblyReport {
    pub dropped_unresolved: usize,
    pub dropped_duplicates: usize,
}

impl Dataset {
    pub fn drugs(&self) -> &[DrugRecord] {
        &self.drugs
    }

    pub fn mirnas(&self) -> &[MirnaRecord] {
        &self.mirnas
    }

    pub fn associations(&self) -> &[AssociationRecord] {
        &self.associations
    }

    pub fn n_drugs(&self) -> usize {
        self.drugs.len()
    }

    pub fn n_mirnas(&self) -> usize {
        self.mirnas.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.drugs.len() + self.mirnas.len()
    }

    pub fn drug_position(&self, drug_id: &str) -> Option<usize> {
        self.drug_index.get(drug_id).copied()
    }

    pub fn mirna_position(&self, mirna_id: &str) -> Option<usize> {
        self.mirna_index.get(mirna_id).copied()
    }

    /// Node identifiers in graph order (drugs first).
    pub fn node_ids(&self) -> Vec<&str> {
        self.drugs
            .iter()
            .map(|d| d.drug_id.as_str())
            .chain(self.mirnas.iter().map(|m| m.mirna_id.as_str()))
            .collect()
    }

    /// Associations as `(drug position, miRNA position)` pairs.
    pub fn positive_pairs(&self) -> Vec<(usize, usize)> {
        self.associations
            .iter()
            .map(|a| (self.drug_index[&a.drug_id], self.mirna_index[&a.mirna_id]))
            .collect()
    }

    /// Serialize as a single sectioned TSV document.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("[drugs]\n");
        for d in &self.drugs {
            out.push_str(&format!("{}\t{}\n", d.drug_id, d.smiles));
        }
        out.push_str("[mirnas]\n");
        for m in &self.mirnas {
            out.push_str(&format!("{}\t{}\n", m.mirna_id, m.sequence));
        }
        out.push_str("[associations]\n");
        for a in &self.associations {
            out.push_str(&format!("{}\t{}\t{}\n", a.drug_id, a.mirna_id, a.source));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// Parse the sectioned format written by [`Dataset::to_tsv`] and re-assemble it.
    pub fn from_tsv(text: &str, path: &Path) -> Result<Dataset> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Drugs,
            Mirnas,
            Assocs,
        }
        let mut section = Section::None;
        let mut drugs = Vec::new();
        let mut mirnas = Vec::new();
        let mut assocs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if is_skippable(line) {
                continue;
            }
            match line.trim() {
                "[drugs]" => {
                    section = Section::Drugs;
                    continue;
                }
                "[mirnas]" => {
                    section = Section::Mirnas;
                    continue;
                }
                "[associations]" => {
                    section = Section::Assocs;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::None => {
                    return Err(parse_err(path, line_no, "record outside of any section"));
                }
                Section::Drugs => drugs.push(parse_drug_line(line, path, line_no)?),
                Section::Mirnas => mirnas.push(parse_mirna_line(line, path, line_no)?),
                Section::Assocs => assocs.push(parse_assoc_line(line, path, line_no)?),
            }
        }
        assemble_dataset(assocs, drugs, mirnas).map(|(ds, _)| ds)
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Dataset::from_tsv(&text, path)
    }
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn split_fields<'a>(line: &'a str, expected: usize, path: &Path, line_no: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    if fields.len() != expected {
        return Err(parse_err(
            path,
            line_no,
            format!("expected {expected} tab-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn parse_assoc_line(line: &str, path: &Path, line_no: usize) -> Result<AssociationRecord> {
    let f = split_fields(line, 3, path, line_no)?;
    if f[0].is_empty() || f[1].is_empty() {
        return Err(parse_err(path, line_no, "empty identifier"));
    }
    Ok(AssociationRecord {
        drug_id: f[0].to_string(),
        mirna_id: f[1].to_string(),
        source: Source::parse(f[2]),
    })
}

fn parse_drug_line(line: &str, path: &Path, line_no: usize) -> Result<DrugRecord> {
    let f = split_fields(line, 2, path, line_no)?;
    if f[0].is_empty() {
        return Err(parse_err(path, line_no, "empty drug identifier"));
    }
    if f[1].is_empty() {
        return Err(parse_err(path, line_no, "empty SMILES"));
    }
    Ok(DrugRecord {
        drug_id: f[0].to_string(),
        smiles: f[1].to_string(),
    })
}

fn parse_mirna_line(line: &str, path: &Path, line_no: usize) -> Result<MirnaRecord> {
    let f = split_fields(line, 2, path, line_no)?;
    if f[0].is_empty() {
        return Err(parse_err(path, line_no, "empty miRNA identifier"));
    }
    if f[1].is_empty() {
        return Err(parse_err(path, line_no, "empty sequence"));
    }
    let sequence = normalize_rna(f[1]).map_err(|e| parse_err(path, line_no, e.to_string()))?;
    Ok(MirnaRecord {
        mirna_id: f[0].to_string(),
        sequence,
    })
}

/// Uppercase a nucleotide string and map `T` to `U`.
pub fn normalize_rna(seq: &str) -> Result<String> {
    seq.chars()
        .map(|c| match c.to_ascii_uppercase() {
            'T' => Ok('U'),
            n @ ('A' | 'C' | 'G' | 'U') => Ok(n),
            _ => Err(Error::InvalidNucleotide(c)),
        })
        .collect()
}

/// Parse association lines of the form `drug_id<TAB>mirna_id<TAB>source`.
///
/// Duplicates are preserved; [`assemble_dataset`] collapses them.
pub fn parse_associations_str(text: &str, path: &Path) -> Result<Vec<AssociationRecord>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !is_skippable(l))
        .map(|(n, l)| parse_assoc_line(l, path, n))
        .collect()
}

pub fn parse_associations(path: &Path) -> Result<Vec<AssociationRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_associations_str(&text, path)
}

pub fn parse_smiles_str(text: &str, path: &Path) -> Result<Vec<DrugRecord>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !is_skippable(l))
        .map(|(n, l)| parse_drug_line(l, path, n))
        .collect()
}

pub fn parse_sequences_str(text: &str, path: &Path) -> Result<Vec<MirnaRecord>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !is_skippable(l))
        .map(|(n, l)| parse_mirna_line(l, path, n))
        .collect()
}

/// Read the SMILES file and the miRNA sequence file.
pub fn parse_chemistry(smiles_path: &Path, seq_path: &Path) -> Result<(Vec<DrugRecord>, Vec<MirnaRecord>)> {
    let smiles = fs::read_to_string(smiles_path).map_err(|e| Error::io(smiles_path, e))?;
    let seqs = fs::read_to_string(seq_path).map_err(|e| Error::io(seq_path, e))?;
    Ok((
        parse_smiles_str(&smiles, smiles_path)?,
        parse_sequences_str(&seqs, seq_path)?,
    ))
}

/// Join associations with chemistry records.
///
/// Associations naming an ID without a chemistry record are dropped, repeated
/// (drug, miRNA) pairs keep their first occurrence, and chemistry records not
/// referenced by any surviving association are left out of the node set.
pub fn assemble_dataset(
    assocs: Vec<AssociationRecord>,
    drugs: Vec<DrugRecord>,
    mirnas: Vec<MirnaRecord>,
) -> Result<(Dataset, AssemblyReport)> {
    let mut smiles: HashMap<&str, &DrugRecord> = HashMap::new();
    for d in &drugs {
        smiles.entry(d.drug_id.as_str()).or_insert(d);
    }
    let mut seqs: HashMap<&str, &MirnaRecord> = HashMap::new();
    for m in &mirnas {
        seqs.entry(m.mirna_id.as_str()).or_insert(m);
    }

    let mut report = AssemblyReport::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut kept = Vec::with_capacity(assocs.len());
    for a in assocs {
        if !smiles.contains_key(a.drug_id.as_str()) || !seqs.contains_key(a.mirna_id.as_str()) {
            report.dropped_unresolved += 1;
            continue;
        }
        if !seen.insert((a.drug_id.clone(), a.mirna_id.clone())) {
            report.dropped_duplicates += 1;
            continue;
        }
        kept.push(a);
    }
    if kept.is_empty() {
        return Err(Error::invalid("no usable associations"));
    }

    let used_drugs: HashSet<&str> = kept.iter().map(|a| a.drug_id.as_str()).collect();
    let used_mirnas: HashSet<&str> = kept.iter().map(|a| a.mirna_id.as_str()).collect();

    let mut drug_index = HashMap::new();
    let mut out_drugs = Vec::new();
    for d in &drugs {
        if used_drugs.contains(d.drug_id.as_str()) && !drug_index.contains_key(&d.drug_id) {
            drug_index.insert(d.drug_id.clone(), out_drugs.len());
            out_drugs.push(d.clone());
        }
    }
    let mut mirna_index = HashMap::new();
    let mut out_mirnas = Vec::new();
    for m in &mirnas {
        if used_mirnas.contains(m.mirna_id.as_str()) && !mirna_index.contains_key(&m.mirna_id) {
            mirna_index.insert(m.mirna_id.clone(), out_mirnas.len());
            out_mirnas.push(m.clone());
        }
    }

    Ok((
        Dataset {
            drugs: out_drugs,
            mirnas: out_mirnas,
            associations: kept,
            drug_index,
            mirna_index,
        },
        report,
    ))
}
