//! Bipartite association graphs, normalized-Laplacian positional encodings and
//! negative-pair sampling.
//!
//! Node indices put every drug first, then every miRNA: miRNA `m` is node
//! `n_drugs + m`. Pairs are always `(drug position, miRNA position)`.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::tensor::Tensor;

/// `(drug position, miRNA position)`.
pub type Pair = (usize, usize);

/// Eigenvalues below this count as the trivial (per-component) eigenspace.
pub const TRIVIAL_EIGENVALUE: f64 = 1e-8;
/// Smallest magnitude treated as a significant eigenvector component.
pub const SIGNIFICANT_COMPONENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    n_drugs: usize,
    n_mirnas: usize,
    edges: Vec<Pair>,
    adjacency: Vec<bool>,
    degrees: Vec<usize>,
}

impl BipartiteGraph {
    pub fn new(n_drugs: usize, n_mirnas: usize, edge_subset: &[Pair]) -> Result<BipartiteGraph> {
        let n = n_drugs + n_mirnas;
        let mut adjacency = vec![false; n * n];
        let mut degrees = vec![0; n];
        let mut edges = Vec::with_capacity(edge_subset.len());
        for &(d, m) in edge_subset {
            if d >= n_drugs || m >= n_mirnas {
                return Err(Error::invalid(format!(
                    "edge ({d}, {m}) references a node outside {n_drugs} drugs x {n_mirnas} miRNAs"
                )));
            }
            let j = n_drugs + m;
            if adjacency[d * n + j] {
                continue;
            }
            adjacency[d * n + j] = true;
            adjacency[j * n + d] = true;
            degrees[d] += 1;
            degrees[j] += 1;
            edges.push((d, m));
        }
        Ok(BipartiteGraph {
            n_drugs,
            n_mirnas,
            edges,
            adjacency,
            degrees,
        })
    }

    pub fn n_drugs(&self) -> usize {
        self.n_drugs
    }

    pub fn n_mirnas(&self) -> usize {
        self.n_mirnas
    }

    pub fn n_nodes(&self) -> usize {
        self.n_drugs + self.n_mirnas
    }

    pub fn edges(&self) -> &[Pair] {
        &self.edges
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n_nodes() + j]
    }

    pub fn mirna_node(&self, m: usize) -> usize {
        self.n_drugs + m
    }

    pub fn adjacency_matrix(&self) -> Tensor {
        let n = self.n_nodes();
        Tensor::matrix(
            n,
            n,
            self.adjacency.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect(),
        )
    }
}

/// Graph over all dataset nodes with exactly the given associations as edges.
pub fn build_graph(dataset: &Dataset, edge_subset: &[Pair]) -> Result<BipartiteGraph> {
    BipartiteGraph::new(dataset.n_drugs(), dataset.n_mirnas(), edge_subset)
}

/// `I - D^{-1/2} A D^{-1/2}`; isolated nodes get an identity row.
pub fn normalized_laplacian(graph: &BipartiteGraph) -> Tensor {
    let n = graph.n_nodes();
    let inv_sqrt: Vec<f64> = graph
        .degrees
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        out.set(i, i, 1.0);
        for j in 0..n {
            if graph.adjacent(i, j) {
                out.set(i, j, -inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    out
}

/// Eigenvalues (ascending) and unit eigenvectors (as columns) of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Tensor,
}

fn first_significant(vectors: &Tensor, col: usize) -> Option<usize> {
    (0..vectors.rows()).find(|&r| vectors.get(r, col).abs() > SIGNIFICANT_COMPONENT)
}

/// Cyclic Jacobi eigendecomposition.
///
/// Output columns are sorted by ascending eigenvalue, ties by ascending index
/// of the first significant component, and signed so that component is positive.
pub fn symmetric_eigen(matrix: &Tensor) -> Result<SymmetricEigen> {
    let n = matrix.rows();
    if !matrix.is_matrix() || matrix.cols() != n {
        return Err(Error::Shape {
            op: "symmetric_eigen",
            lhs: matrix.shape().to_vec(),
            rhs: vec![n, n],
        });
    }
    let mut a = matrix.data().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let raw = Tensor::matrix(n, n, v);
    let mut order: Vec<usize> = (0..n).collect();
    let values: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    order.sort_by(|&x, &y| {
        values[x]
            .total_cmp(&values[y])
            .then_with(|| first_significant(&raw, x).cmp(&first_significant(&raw, y)))
    });
    let mut vectors = Tensor::zeros(&[n, n]);
    for (dst, &src) in order.iter().enumerate() {
        let sign = match first_significant(&raw, src) {
            Some(r) if raw.get(r, src) < 0.0 => -1.0,
            _ => 1.0,
        };
        for r in 0..n {
            vectors.set(r, dst, sign * raw.get(r, src));
        }
    }
    Ok(SymmetricEigen {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors,
    })
}

/// Per-node positional coordinates from the smallest non-trivial Laplacian eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPE {
    /// `n × k`; columns past the available spectrum are zero.
    pub vectors: Tensor,
    /// One eigenvalue per non-padded column.
    pub eigenvalues: Vec<f64>,
    /// Number of eigenvalues discarded as trivial.
    pub trivial: usize,
}

impl LaplacianPE {
    pub fn k(&self) -> usize {
        self.vectors.cols()
    }
}

pub fn laplacian_pe(graph: &BipartiteGraph, k: usize) -> Result<LaplacianPE> {
    if k == 0 {
        return Err(Error::invalid("positional encoding width k must be at least 1"));
    }
    let eig = symmetric_eigen(&normalized_laplacian(graph))?;
    let n = graph.n_nodes();
    let trivial = eig.values.iter().filter(|&&l| l < TRIVIAL_EIGENVALUE).count();
    let available = (n - trivial).min(k);
    let mut vectors = Tensor::zeros(&[n, k]);
    for c in 0..available {
        for r in 0..n {
            vectors.set(r, c, eig.vectors.get(r, trivial + c));
        }
    }
    Ok(LaplacianPE {
        vectors,
        eigenvalues: eig.values[trivial..trivial + available].to_vec(),
        trivial,
    })
}

/// Draw `count` distinct drug–miRNA pairs outside `known_positives` and `exclude`.
pub fn sample_negatives(
    n_drugs: usize,
    n_mirnas: usize,
    known_positives: &HashSet<Pair>,
    count: usize,
    seed: u64,
    exclude: &HashSet<Pair>,
) -> Result<Vec<Pair>> {
    let mut candidates: Vec<Pair> = (0..n_drugs)
        .flat_map(|d| (0..n_mirnas).map(move |m| (d, m)))
        .filter(|p| !known_positives.contains(p) && !exclude.contains(p))
        .collect();
    if count > candidates.len() {
        return Err(Error::invalid(format!(
            "requested {count} negative pairs but only {} non-edges are available",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (picked, _) = candidates.partial_shuffle(&mut rng, count);
    Ok(picked.to_vec())
}
