//! Matrix-factorization and collaborative-filtering baselines over the
//! drug × miRNA interaction matrix.

use crate::error::{Error, Result};
use crate::graph::{symmetric_eigen, Pair};
use crate::metrics::{evaluate_scores, EvalReport};
use crate::tensor::{gemm, Tensor};
use crate::train::split_folds;

/// Drugs × miRNAs 0/1 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    pub values: Tensor,
}

impl InteractionMatrix {
    pub fn from_pairs(n_drugs: usize, n_mirnas: usize, pairs: &[Pair]) -> Result<InteractionMatrix> {
        let mut values = Tensor::zeros(&[n_drugs, n_mirnas]);
        for &(d, m) in pairs {
            if d >= n_drugs || m >= n_mirnas {
                return Err(Error::invalid(format!(
                    "pair ({d}, {m}) outside a {n_drugs} × {n_mirnas} matrix"
                )));
            }
            values.set(d, m, 1.0);
        }
        Ok(InteractionMatrix { values })
    }

    pub fn n_drugs(&self) -> usize {
        self.values.rows()
    }

    pub fn n_mirnas(&self) -> usize {
        self.values.cols()
    }
}

/// Rank-`rank` truncated SVD reconstruction of `m`.
///
/// The top eigenvectors of the smaller Gram matrix span the leading singular
/// subspace; projecting onto it gives `U_r Σ_r V_rᵀ` without dividing by
/// singular values.
pub fn svd_mf_score(matrix: &InteractionMatrix, rank: usize) -> Result<Tensor> {
    let m = &matrix.values;
    let (rows, cols) = (m.rows(), m.cols());
    if rank == 0 || rank > rows.min(cols) {
        return Err(Error::invalid(format!(
            "rank {rank} outside 1..={}",
            rows.min(cols)
        )));
    }
    let left = rows <= cols;
    let gram = if left { gemm(m, false, m, true) } else { gemm(m, true, m, false) };
    let eig = symmetric_eigen(&gram)?;
    let size = gram.rows();
    // Eigenvalues ascend, so the leading subspace is the last `rank` columns.
    let mut basis = Tensor::zeros(&[size, rank]);
    for (c, src) in (size - rank..size).enumerate() {
        for r in 0..size {
            basis.set(r, c, eig.vectors.get(r, src));
        }
    }
    Ok(if left {
        let coeff = gemm(&basis, true, m, false);
        gemm(&basis, false, &coeff, false)
    } else {
        let coeff = gemm(m, false, &basis, false);
        gemm(&coeff, false, &basis, true)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfMode {
    Drug,
    Mirna,
    Neighbor,
}

/// Cosine similarity between the rows of `m`; zero-norm rows are dissimilar to everything.
fn row_cosine(m: &Tensor) -> Tensor {
    let norms: Vec<f64> = (0..m.rows()).map(|r| m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut s = gemm(m, false, m, true);
    for i in 0..s.rows() {
        for j in 0..s.cols() {
            let den = norms[i] * norms[j];
            s.set(i, j, if den == 0.0 { 0.0 } else { s.get(i, j) / den });
        }
    }
    s
}

fn normalize_rows(s: &mut Tensor) {
    for r in 0..s.rows() {
        let row = s.row_mut(r);
        let total: f64 = row.iter().sum();
        if total != 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
}

/// Similarity-weighted averages of known interactions.
///
/// Drug mode averages the rows of similar drugs, miRNA mode the columns of
/// similar miRNAs, and neighbor mode takes the mean of both.
pub fn cf_score(matrix: &InteractionMatrix, mode: CfMode) -> Tensor {
    let m = &matrix.values;
    let by_drug = || {
        let mut s = row_cosine(m);
        normalize_rows(&mut s);
        gemm(&s, false, m, false)
    };
    let by_mirna = || {
        let mt = m.transpose();
        let mut s = row_cosine(&mt);
        normalize_rows(&mut s);
        gemm(m, false, &s, true)
    };
    match mode {
        CfMode::Drug => by_drug(),
        CfMode::Mirna => by_mirna(),
        CfMode::Neighbor => {
            let mut a = by_drug();
            let b = by_mirna();
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x = 0.5 * (*x + y);
            }
            a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Svd { rank: usize },
    Cf(CfMode),
}

impl Method {
    pub fn parse(name: &str, rank: usize) -> Result<Method> {
        match name {
            "svd" => Ok(Method::Svd { rank }),
            "cf-drug" => Ok(Method::Cf(CfMode::Drug)),
            "cf-mirna" => Ok(Method::Cf(CfMode::Mirna)),
            "cf-neighbor" => Ok(Method::Cf(CfMode::Neighbor)),
            other => Err(Error::Config(format!("unknown baseline '{other}'"))),
        }
    }

    pub fn score(&self, matrix: &InteractionMatrix) -> Result<Tensor> {
        match *self {
            Method::Svd { rank } => svd_mf_score(matrix, rank),
            Method::Cf(mode) => Ok(cf_score(matrix, mode)),
        }
    }
}

/// Default truncation rank for the SVD baseline.
pub const DEFAULT_SVD_RANK: usize = 10;

/// Cross-validate a baseline on the same folds the model uses for `seed`.
pub fn run_baseline_cv(
    n_drugs: usize,
    n_mirnas: usize,
    positives: &[Pair],
    folds: usize,
    seed: u64,
    method: Method,
) -> Result<EvalReport> {
    let splits = split_folds(n_drugs, n_mirnas, positives, folds, seed)?;
    let mut report = EvalReport::default();
    for split in &splits {
        let matrix = InteractionMatrix::from_pairs(n_drugs, n_mirnas, &split.train_pos)?;
        let scores = method.score(&matrix)?;
        let (pairs, labels) = split.test_pairs();
        let s: Vec<f64> = pairs.iter().map(|&(d, m)| scores.get(d, m)).collect();
        report.folds.push(evaluate_scores(&s, &labels)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&[f64]]) -> InteractionMatrix {
        InteractionMatrix {
            values: Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()),
        }
    }

    #[test]
    fn full_rank_reconstructs() {
        let m = from_rows(&[&[1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 1.0, 0.0], &[1.0, 1.0, 0.0, 1.0]]);
        let r = svd_mf_score(&m, 3).unwrap();
        assert!(r.max_abs_diff(&m.values) < 1e-8);
        let tall = InteractionMatrix { values: m.values.transpose() };
        assert!(svd_mf_score(&tall, 3).unwrap().max_abs_diff(&tall.values) < 1e-8);
        assert!(svd_mf_score(&m, 0).is_err());
        assert!(svd_mf_score(&m, 4).is_err());
    }

    #[test]
    fn rank_one_is_exact() {
        let m = from_rows(&[&[1.0, 0.0, 1.0], &[0.0, 0.0, 0.0], &[1.0, 0.0, 1.0]]);
        assert!(svd_mf_score(&m, 1).unwrap().max_abs_diff(&m.values) < 1e-8);
    }

    #[test]
    fn cf_cases() {
        let m = from_rows(&[&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]);
        let s = cf_score(&m, CfMode::Drug);
        assert_eq!(s.row(0), s.row(1));
        let zero = InteractionMatrix { values: Tensor::zeros(&[3, 4]) };
        for mode in [CfMode::Drug, CfMode::Mirna, CfMode::Neighbor] {
            assert!(cf_score(&zero, mode).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn cf_hand_case() {
        let m = from_rows(&[&[1.0, 1.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let rows: Vec<Vec<f64>> = (0..3).map(|r| m.values.row(r).to_vec()).collect();
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na * nb == 0.0 { 0.0 } else { dot / (na * nb) }
        };
        let drug = cf_score(&m, CfMode::Drug);
        for i in 0..3 {
            let w: Vec<f64> = (0..3).map(|k| cos(&rows[i], &rows[k])).collect();
            let z: f64 = w.iter().sum();
            for j in 0..3 {
                let want: f64 = (0..3).map(|k| w[k] * rows[k][j]).sum::<f64>() / z;
                assert!((drug.get(i, j) - want).abs() < 1e-12);
            }
        }
        let cols: Vec<Vec<f64>> = (0..3).map(|c| (0..3).map(|r| rows[r][c]).collect()).collect();
        let mirna = cf_score(&m, CfMode::Mirna);
        let both = cf_score(&m, CfMode::Neighbor);
        for j in 0..3 {
            let w: Vec<f64> = (0..3).map(|k| cos(&cols[j], &cols[k])).collect();
            let z: f64 = w.iter().sum();
            for i in 0..3 {
                let want: f64 = (0..3).map(|k| w[k] * rows[i][k]).sum::<f64>() / z;
                assert!((mirna.get(i, j) - want).abs() < 1e-12);
                assert!((both.get(i, j) - 0.5 * (want + drug.get(i, j))).abs() < 1e-12);
            }
        }
    }
}
