//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Run with `cargo test --release --test acceptance`.

use std::path::Path;
use std::rc::Rc;
use std::time::Instant;

use clap::Parser;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dmagt::autodiff::Mask;
use dmagt::baselines::{run_baseline_cv, Method, DEFAULT_SVD_RANK};
use dmagt::cli::{run, Cli};
use dmagt::gradcheck::run_gradcheck;
use dmagt::graph::{laplacian_pe, normalized_laplacian, symmetric_eigen, BipartiteGraph};
use dmagt::metrics::{evaluate_scores, pr_auc, roc_auc, threshold_metrics, Confusion, EvalReport};
use dmagt::model::{init_params, predict, GraphInputs};
use dmagt::seqembed::{CbowConfig, EmbeddingSet};
use dmagt::synth::{generate, group_of, SynthConfig};
use dmagt::tensor::Tensor;
use dmagt::train::{run_cv, split_folds, training_inputs, Ablation, NodeFeatures, TrainConfig};

const SEEDS: [u64; 3] = [0, 1, 2];

struct Suite {
    failed: usize,
    total: usize,
}

impl Suite {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.total += 1;
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn note(text: String) {
    println!("     {text}");
}

fn gradients(suite: &mut Suite) {
    let start = Instant::now();
    let report = run_gradcheck(0).expect("gradcheck runs");
    let secs = start.elapsed().as_secs_f64();
    let worst = report.worst();
    suite.check(
        "gradient correctness",
        worst < 1e-4 && secs < 60.0,
        format!("worst relative error {worst:.2e} (< 1e-4) over {} entries in {secs:.1}s (< 60s)", report.entries),
    );
}

fn eigensolver(suite: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut range_err, mut ortho_err, mut recon_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let n_drugs = rng.random_range(1..=25);
        let n_mirnas = rng.random_range(1..=50 - n_drugs);
        let density: f64 = rng.random_range(0.02..0.6);
        let edges: Vec<(usize, usize)> = (0..n_drugs)
            .flat_map(|d| (0..n_mirnas).map(move |m| (d, m)))
            .filter(|_| rng.random::<f64>() < density)
            .collect();
        let g = BipartiteGraph::new(n_drugs, n_mirnas, &edges).unwrap();
        let lap = normalized_laplacian(&g);
        let eig = symmetric_eigen(&lap).unwrap();
        let n = g.n_nodes();
        for &l in &eig.values {
            range_err = range_err.max(-l).max(l - 2.0);
        }
        let u = &eig.vectors;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|r| u.get(r, i) * u.get(r, j)).sum();
                ortho_err = ortho_err.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
                let rec: f64 = (0..n).map(|c| u.get(i, c) * eig.values[c] * u.get(j, c)).sum();
                recon_err = recon_err.max((rec - lap.get(i, j)).abs());
            }
        }
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let k2 = laplacian_pe(&BipartiteGraph::new(1, 1, &[(0, 0)]).unwrap(), 1).unwrap();
    let k2_err = [
        (k2.eigenvalues[0] - 2.0).abs(),
        (k2.vectors.get(0, 0).abs() - s).abs(),
        (k2.vectors.get(0, 0) + k2.vectors.get(1, 0)).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let p3 = BipartiteGraph::new(1, 2, &[(0, 0), (0, 1)]).unwrap();
    let p3_vals = symmetric_eigen(&normalized_laplacian(&p3)).unwrap().values;
    let p3_err = p3_vals.iter().zip([0.0, 1.0, 2.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    suite.check(
        "eigensolver correctness",
        range_err <= 1e-9 && ortho_err < 1e-8 && recon_err < 1e-8 && k2_err < 1e-10 && p3_err < 1e-10,
        format!(
            "100 graphs: range excess {range_err:.1e}, orthonormality {ortho_err:.1e}, reconstruction {recon_err:.1e}; K2 {k2_err:.1e}, P3 {p3_err:.1e}"
        ),
    );
}

fn brute_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1.0 && labels[j] == 0.0 {
                pairs += 1.0;
                wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

fn step_sum_aupr(scores: &[f64], labels: &[f64]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let positives = labels.iter().filter(|&&y| y == 1.0).count() as f64;
    let (mut prev, mut area) = (0.0, 0.0);
    for t in thresholds {
        let above: Vec<f64> = scores.iter().zip(labels).filter(|(s, _)| **s >= t).map(|(_, y)| *y).collect();
        let tp: f64 = above.iter().sum();
        let recall = tp / positives;
        area += (recall - prev) * tp / above.len() as f64;
        prev = recall;
    }
    area
}

fn metrics_oracle(suite: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut auc_err, mut aupr_err) = (0.0f64, 0.0f64);
    for case in 0..100 {
        let n = rng.random_range(2..=200);
        let scores: Vec<f64> = (0..n)
            .map(|_| if case % 2 == 0 { rng.random_range(0..8) as f64 / 8.0 } else { rng.random() })
            .collect();
        let mut labels: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        labels[0] = 1.0;
        labels[n - 1] = 0.0;
        auc_err = auc_err.max((roc_auc(&scores, &labels).unwrap().area - brute_auc(&scores, &labels)).abs());
        aupr_err = aupr_err.max((pr_auc(&scores, &labels).unwrap().area - step_sum_aupr(&scores, &labels)).abs());
    }
    let mcc = threshold_metrics(&Confusion { tp: 3, tn: 4, fp: 1, fn_: 2 }).mcc;
    let mcc_err = (mcc - 10.0 / 600f64.sqrt()).abs();
    suite.check(
        "metrics oracle equivalence",
        auc_err < 1e-12 && aupr_err < 1e-10 && mcc_err < 1e-12,
        format!("AUC {auc_err:.1e} (< 1e-12), AUPR {aupr_err:.1e} (< 1e-10), MCC hand case {mcc_err:.1e} (< 1e-12)"),
    );
}

struct SeedRun {
    seed: u64,
    nodes: NodeFeatures,
    positives: Vec<(usize, usize)>,
    report: EvalReport,
    ceiling: f64,
}

/// AUC of a scorer that knows the planted groups and nothing else.
fn group_ceiling(positives: &[(usize, usize)], n_drugs: usize, n_mirnas: usize, seed: u64) -> f64 {
    let splits = split_folds(n_drugs, n_mirnas, positives, 5, seed).unwrap();
    let aucs: Vec<f64> = splits
        .iter()
        .map(|s| {
            let (pairs, labels) = s.test_pairs();
            let scores: Vec<f64> = pairs.iter().map(|&(d, m)| f64::from(u8::from(group_of(d) == group_of(m)))).collect();
            evaluate_scores(&scores, &labels).unwrap().auc
        })
        .collect();
    dmagt::metrics::mean(&aucs)
}

fn end_to_end(suite: &mut Suite) -> Vec<SeedRun> {
    let start = Instant::now();
    let mut runs = Vec::new();
    for seed in SEEDS {
        let ds = generate(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        let set = EmbeddingSet::train(&ds, &CbowConfig { seed, ..CbowConfig::default() }).unwrap();
        let nodes = NodeFeatures::from_embeddings(&ds, &set).unwrap();
        let positives = ds.positive_pairs();
        let config = TrainConfig { seed, ..TrainConfig::default() };
        let outcome = run_cv(&nodes, &positives, &config, |_, _, _| {}).unwrap();
        let ceiling = group_ceiling(&positives, ds.n_drugs(), ds.n_mirnas(), seed);
        note(format!(
            "seed {seed}: mean AUC {:.4}, folds {:?}, group-only scorer {ceiling:.4}",
            outcome.report.mean_auc(),
            outcome.report.column(5).iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>()
        ));
        runs.push(SeedRun { seed, nodes, positives, report: outcome.report, ceiling });
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = runs.iter().map(|r| r.report.mean_auc()).fold(f64::INFINITY, f64::min);
    let all: Vec<f64> = runs.iter().map(|r| r.report.mean_auc()).collect();
    note(format!(
        "best achievable by group membership alone: {:.4} (mean over seeds)",
        dmagt::metrics::mean(&runs.iter().map(|r| r.ceiling).collect::<Vec<_>>())
    ));
    suite.check(
        "end-to-end learning",
        worst >= 0.90 && secs < 900.0,
        format!(
            "per-seed mean AUC {:?} (each >= 0.90), overall {:.4}, {secs:.0}s (< 900s)",
            all.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>(),
            dmagt::metrics::mean(&all)
        ),
    );
    runs
}

fn ablation(suite: &mut Suite, base: &SeedRun) {
    let auc_for = |ablation: Ablation| {
        let config = TrainConfig { seed: base.seed, ablation, ..TrainConfig::default() };
        run_cv(&base.nodes, &base.positives, &config, |_, _, _| {}).unwrap().report.mean_auc()
    };
    let full = base.report.mean_auc();
    let nemb = auc_for(Ablation::Nemb);
    let npe = auc_for(Ablation::Npe);
    suite.check(
        "ablation direction",
        nemb <= full - 0.10 && npe >= nemb,
        format!("seed {}: full {full:.4}, nemb {nemb:.4} (<= full - 0.10), npe {npe:.4} (>= nemb)", base.seed),
    );
}

fn baseline(suite: &mut Suite, runs: &[SeedRun]) {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let svd = run_baseline_cv(
            r.nodes.n_drugs,
            r.nodes.n_mirnas,
            &r.positives,
            5,
            r.seed,
            Method::Svd { rank: DEFAULT_SVD_RANK },
        )
        .unwrap()
        .mean_auc();
        let model = r.report.mean_auc();
        pass &= model > svd;
        parts.push(format!("seed {}: model {model:.4} vs SVD-MF {svd:.4}", r.seed));
    }
    suite.check(
        "baseline ordering",
        pass,
        format!("rank {DEFAULT_SVD_RANK}, identical splits; {}", parts.join("; ")),
    );
}

fn cli(args: &[&str]) {
    let mut full = vec!["dmagt"];
    full.extend_from_slice(args);
    run(Cli::try_parse_from(full).unwrap()).unwrap();
}

fn run_pipeline(dir: &Path) {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    std::fs::write(
        dir.join("run.cfg"),
        "seed = 5\nmodel.hidden = 32\nmodel.heads = 4\nmodel.mlp_widths = 32,16\ntrain.epochs = 8\ncbow.epochs = 2\n",
    )
    .unwrap();
    let cfg = p("run.cfg");
    cli(&["synth", "--out", &p("ds.tsv"), "--seed", "5"]);
    cli(&["embed", "--dataset", &p("ds.tsv"), "--out", &p("emb.ckpt"), "--config", &cfg]);
    cli(&["pe", "--dataset", &p("ds.tsv"), "--out", &p("pe.tsv")]);
    cli(&["train", "--dataset", &p("ds.tsv"), "--emb", &p("emb.ckpt"), "--config", &cfg, "--fold", "2", "--fold-out", &p("fold")]);
    std::fs::create_dir_all(dir.join("eval")).unwrap();
    cli(&["eval", "--checkpoint", &p("fold/model.ckpt"), "--dataset", &p("ds.tsv"), "--emb", &p("emb.ckpt"), "--report", &p("eval/report.tsv")]);
    std::fs::create_dir_all(dir.join("cv")).unwrap();
    cli(&["cv", "--dataset", &p("ds.tsv"), "--config", &cfg, "--report", &p("cv/report.tsv")]);
    std::fs::create_dir_all(dir.join("svd")).unwrap();
    cli(&["baseline", "--dataset", &p("ds.tsv"), "--config", &cfg, "--report", &p("svd/report.tsv")]);
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(suite: &mut Suite) {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(a.path());
    run_pipeline(b.path());
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    suite.check(
        "determinism",
        fa.len() == fb.len() && differing.is_empty(),
        format!(
            "{} files from synth, embed, pe, train, eval, cv and baseline; {} differ {:?}",
            fa.len(),
            differing.len(),
            differing
        ),
    );
}

fn equivariance(suite: &mut Suite, base: &SeedRun) {
    let config = TrainConfig::default();
    let params = init_params(&config.model, 99).unwrap();
    let inputs = training_inputs(&base.nodes, &base.positives, &config).unwrap();
    let (nd, nm) = (base.nodes.n_drugs, base.nodes.n_mirnas);
    let n = nd + nm;
    let pairs: Vec<(usize, usize)> = (0..nd).flat_map(|d| (0..nm).map(move |m| (d, m))).collect();
    let reference = predict(&params, &config.model, &inputs, &pairs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let mut drugs: Vec<usize> = (0..nd).collect();
        let mut mirnas: Vec<usize> = (0..nm).collect();
        drugs.shuffle(&mut rng);
        mirnas.shuffle(&mut rng);
        let old_of: Vec<usize> = drugs.iter().copied().chain(mirnas.iter().map(|m| nd + m)).collect();
        let mut new_of = vec![0; n];
        for (new, &old) in old_of.iter().enumerate() {
            new_of[old] = new;
        }
        let permute = |t: &Tensor| Tensor::from_rows(&old_of.iter().map(|&o| t.row(o).to_vec()).collect::<Vec<_>>());
        let keep = (0..n * n).map(|i| inputs.mask.keeps(old_of[i / n], old_of[i % n])).collect();
        let permuted = GraphInputs {
            features: Rc::new(permute(&inputs.features)),
            pe: permute(&inputs.pe),
            mask: Mask::new(n, n, keep),
            n_drugs: nd,
        };
        let moved: Vec<(usize, usize)> = pairs.iter().map(|&(d, m)| (new_of[d], new_of[nd + m] - nd)).collect();
        let got = predict(&params, &config.model, &permuted, &moved).unwrap();
        worst = reference.iter().zip(&got).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    suite.check(
        "permutation equivariance",
        worst < 1e-10,
        format!("3 random node permutations of the {n}-node graph, {} pairs: max change {worst:.1e} (< 1e-10)", pairs.len()),
    );
}

fn main() {
    let mut suite = Suite { failed: 0, total: 0 };
    gradients(&mut suite);
    eigensolver(&mut suite);
    metrics_oracle(&mut suite);
    determinism(&mut suite);
    let runs = end_to_end(&mut suite);
    ablation(&mut suite, &runs[0]);
    baseline(&mut suite, &runs);
    equivariance(&mut suite, &runs[0]);
    println!("{} of {} criteria passed", suite.total - suite.failed, suite.total);
    if suite.failed > 0 {
        std::process::exit(1);
    }
}
