//! Matrix-factorization and collaborative-filtering baselines on the model's folds.

use dmagt::baselines::{run_baseline_cv, CfMode, Method};
use dmagt::synth::{generate, SynthConfig};

fn main() -> dmagt::Result<()> {
    let ds = generate(&SynthConfig::default())?;
    let pairs = ds.positive_pairs();
    let mut methods: Vec<(String, Method)> =
        [1, 2, 5, 10].iter().map(|&rank| (format!("svd rank {rank}"), Method::Svd { rank })).collect();
    for (name, mode) in [("cf drug", CfMode::Drug), ("cf miRNA", CfMode::Mirna), ("cf neighbor", CfMode::Neighbor)] {
        methods.push((name.into(), Method::Cf(mode)));
    }
    for (name, method) in methods {
        let report = run_baseline_cv(ds.n_drugs(), ds.n_mirnas(), &pairs, 5, 0, method)?;
        println!("{name:<12} {}", report.summary());
    }
    Ok(())
}
