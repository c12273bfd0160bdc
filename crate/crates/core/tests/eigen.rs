use dmagt::graph::{laplacian_pe, normalized_laplacian, symmetric_eigen, BipartiteGraph};
use dmagt::tensor::Tensor;
use proptest::prelude::*;

fn random_graph(n_drugs: usize, n_mirnas: usize, density: f64, bits: &[f64]) -> BipartiteGraph {
    let mut edges = Vec::new();
    for d in 0..n_drugs {
        for m in 0..n_mirnas {
            if bits[(d * n_mirnas + m) % bits.len()] < density {
                edges.push((d, m));
            }
        }
    }
    BipartiteGraph::new(n_drugs, n_mirnas, &edges).unwrap()
}

fn oracle_eigenvalues(m: &Tensor) -> Vec<f64> {
    let n = m.rows();
    let dm = nalgebra::DMatrix::from_row_slice(n, n, m.data());
    let mut vals: Vec<f64> = dm.symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn spectrum_matches_oracle_and_reconstructs(
        n_drugs in 1usize..20,
        n_mirnas in 1usize..30,
        density in 0.05f64..0.6,
        bits in proptest::collection::vec(0.0f64..1.0, 600),
    ) {
        let g = random_graph(n_drugs, n_mirnas, density, &bits);
        let lap = normalized_laplacian(&g);
        let eig = symmetric_eigen(&lap).unwrap();
        let n = g.n_nodes();

        for (got, want) in eig.values.iter().zip(oracle_eigenvalues(&lap)) {
            prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        }
        for w in eig.values.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        for &l in &eig.values {
            prop_assert!((-1e-9..=2.0 + 1e-9).contains(&l));
        }
        let u = &eig.vectors;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|r| u.get(r, i) * u.get(r, j)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-8);
                let rec: f64 = (0..n).map(|c| u.get(i, c) * eig.values[c] * u.get(j, c)).sum();
                prop_assert!((rec - lap.get(i, j)).abs() < 1e-8);
            }
        }

        let pe = laplacian_pe(&g, 8).unwrap();
        prop_assert_eq!(pe.vectors.shape(), &[n, 8]);
        for c in 0..pe.eigenvalues.len() {
            let norm: f64 = (0..n).map(|r| pe.vectors.get(r, c).powi(2)).sum();
            prop_assert!((norm - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn connected_graph_has_one_trivial_eigenvalue() {
    // complete bipartite 3 x 4
    let edges: Vec<(usize, usize)> = (0..3).flat_map(|d| (0..4).map(move |m| (d, m))).collect();
    let g = BipartiteGraph::new(3, 4, &edges).unwrap();
    let eig = symmetric_eigen(&normalized_laplacian(&g)).unwrap();
    assert_eq!(eig.values.iter().filter(|&&l| l < 1e-8).count(), 1);
    let pe = laplacian_pe(&g, 2).unwrap();
    assert_eq!(pe.trivial, 1);
}
