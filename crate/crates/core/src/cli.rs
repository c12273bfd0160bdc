//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::{run_baseline_cv, Method, DEFAULT_SVD_RANK};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gradcheck::run_gradcheck;
use crate::graph::{build_graph, laplacian_pe};
use crate::ingest::{assemble_dataset, parse_associations, parse_chemistry, Dataset};
use crate::metrics::{evaluate_scores, EvalReport};
use crate::model::predict;
use crate::seqembed::EmbeddingSet;
use crate::store::{embeddings_from_checkpoint, embeddings_to_checkpoint, ModelCheckpoint};
use crate::synth::{generate, SynthConfig};
use crate::train::{case_study, run_cv, split_folds, train_fold, training_inputs, Ablation, NodeFeatures};

/// Environment variable consulted for the seed when neither `--seed` nor the
/// config file sets one.
pub const SEED_ENV: &str = "DMAGT_SEED";

/// Published five-fold figures for the full model on the curated dataset.
pub const REFERENCE_LINE: &str = "reference (curated data): Acc 88.03±0.07  MCC 76.07±0.14  AUC 0.9525±0.0006";

#[derive(Parser, Debug)]
#[command(name = "dmagt", version, about = "Graph transformer for drug–miRNA association prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// `key = value` run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config file and the environment.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset written by `ingest` or `synth`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Embedding checkpoint from `embed`; trained on the fly when absent.
    #[arg(long)]
    pub emb: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the planted-block synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        drugs: usize,
        #[arg(long, default_value_t = 100)]
        mirnas: usize,
        #[arg(long, default_value_t = 0.3)]
        p_in: f64,
        #[arg(long, default_value_t = 0.02)]
        p_out: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Join association and chemistry files into a dataset.
    Ingest {
        #[arg(long)]
        associations: PathBuf,
        #[arg(long)]
        smiles: PathBuf,
        #[arg(long)]
        sequences: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train token embeddings and write them as a checkpoint.
    Embed {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Laplacian positional encodings of the full association graph.
    Pe {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one cross-validation fold and save the model.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Fold number, counted from 1.
        #[arg(long, default_value_t = 1)]
        fold: usize,
        /// Directory receiving `model.ckpt` and `loss.tsv`.
        #[arg(long)]
        fold_out: PathBuf,
    },
    /// Cross-validate the model.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        report: PathBuf,
        /// none, nemb or npe; overrides the config file.
        #[arg(long)]
        ablation: Option<String>,
    },
    /// Score a saved model on its held-out fold.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Hold out a drug's associations and rank every miRNA for it.
    Rank {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        drug: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Cross-validate a matrix-factorization or collaborative-filtering baseline.
    Baseline {
        #[arg(long)]
        dataset: PathBuf,
        /// svd, cf-drug, cf-mirna or cf-neighbor.
        #[arg(long, default_value = "svd")]
        method: String,
        #[arg(long, default_value_t = DEFAULT_SVD_RANK)]
        rank: usize,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Finite-difference check of the model gradients on a toy problem.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Defaults, then `DMAGT_SEED`, then the config file, then `--seed`.
pub fn resolve_config(run: &RunArgs, env_seed: Option<&str>) -> Result<RunConfig> {
    let base_seed = match env_seed {
        Some(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{s}' is not an unsigned integer")))?,
        None => 0,
    };
    let mut config = RunConfig::default().seeded(base_seed);
    if let Some(path) = &run.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        config = config.apply_text(&text, path)?;
    }
    if let Some(seed) = run.seed {
        config = config.seeded(seed);
    }
    Ok(config)
}

fn env_config(run: &RunArgs) -> Result<RunConfig> {
    let env = std::env::var(SEED_ENV).ok();
    let config = resolve_config(run, env.as_deref())?;
    eprintln!("seed={} config_hash={}", config.seed, config.hash());
    Ok(config)
}

fn node_features(dataset: &Dataset, emb: Option<&Path>, config: &RunConfig) -> Result<NodeFeatures> {
    let set = match emb {
        Some(path) => embeddings_from_checkpoint(&Checkpoint::load(path)?)?,
        None => EmbeddingSet::train(dataset, &config.cbow)?,
    };
    NodeFeatures::from_embeddings(dataset, &set)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, drugs, mirnas, p_in, p_out, seed } => {
            let config = env_config(&RunArgs { config: None, seed })?;
            let ds = generate(&SynthConfig { n_drugs: drugs, n_mirnas: mirnas, p_in, p_out, seed: config.seed })?;
            ds.save(&out)?;
            println!(
                "{} drugs, {} miRNAs, {} associations -> {}",
                ds.n_drugs(),
                ds.n_mirnas(),
                ds.associations().len(),
                out.display()
            );
        }
        Command::Ingest { associations, smiles, sequences, out } => {
            env_config(&RunArgs::default())?;
            let assocs = parse_associations(&associations)?;
            let (drugs, mirnas) = parse_chemistry(&smiles, &sequences)?;
            let (ds, report) = assemble_dataset(assocs, drugs, mirnas)?;
            ds.save(&out)?;
            println!(
                "{} drugs, {} miRNAs, {} associations ({} unresolved, {} duplicates dropped) -> {}",
                ds.n_drugs(),
                ds.n_mirnas(),
                ds.associations().len(),
                report.dropped_unresolved,
                report.dropped_duplicates,
                out.display()
            );
        }
        Command::Embed { dataset, out, window, negatives, epochs, run } => {
            let mut config = env_config(&run)?;
            if let Some(w) = window {
                config.cbow.window = w;
            }
            if let Some(n) = negatives {
                config.cbow.negatives_per_positive = n;
            }
            if let Some(e) = epochs {
                config.cbow.epochs = e;
            }
            config.validate()?;
            let ds = Dataset::load(&dataset)?;
            let set = EmbeddingSet::train(&ds, &config.cbow)?;
            embeddings_to_checkpoint(&set, &config).save(&out)?;
            println!(
                "{} drug tokens, {} miRNA tokens -> {}",
                set.drug_vocab.len(),
                set.mirna_vocab.len(),
                out.display()
            );
        }
        Command::Pe { dataset, k, out } => {
            env_config(&RunArgs::default())?;
            let ds = Dataset::load(&dataset)?;
            let graph = build_graph(&ds, &ds.positive_pairs())?;
            let pe = laplacian_pe(&graph, k)?;
            let mut text = String::from("node");
            for c in 1..=k {
                let _ = write!(text, "\tpe{c}");
            }
            text.push('\n');
            for (r, id) in ds.node_ids().into_iter().enumerate() {
                text.push_str(id);
                for v in pe.vectors.row(r) {
                    let _ = write!(text, "\t{v:.12}");
                }
                text.push('\n');
            }
            write_text(&out, &text)?;
            let eig: Vec<String> = pe.eigenvalues.iter().map(|l| format!("{l:.6}")).collect();
            println!("{} trivial eigenvalues skipped; kept [{}] -> {}", pe.trivial, eig.join(", "), out.display());
        }
        Command::Train { data, run, fold, fold_out } => {
            let config = env_config(&run)?;
            let ds = Dataset::load(&data.dataset)?;
            let nodes = node_features(&ds, data.emb.as_deref(), &config)?;
            let splits = split_folds(ds.n_drugs(), ds.n_mirnas(), &ds.positive_pairs(), config.train.folds, config.seed)?;
            let index = fold.checked_sub(1).filter(|&i| i < splits.len()).ok_or_else(|| {
                Error::Config(format!("fold {fold} outside 1..={}", config.train.folds))
            })?;
            let split = &splits[index];
            let model = train_fold(&nodes, split, &config.train, index, |e, l| {
                if e.is_multiple_of(10) {
                    eprintln!("epoch {e} loss {l:.6}");
                }
            })?;
            std::fs::create_dir_all(&fold_out).map_err(|e| Error::io(&fold_out, e))?;
            let mut loss = String::from("epoch\tloss\n");
            for (e, l) in model.loss_history.iter().enumerate() {
                let _ = writeln!(loss, "{}\t{l:.9}", e + 1);
            }
            write_text(&fold_out.join("loss.tsv"), &loss)?;
            let saved = ModelCheckpoint { config, fold: index, params: model.params, split: split.clone() };
            saved.to_checkpoint().save(&fold_out.join("model.ckpt"))?;
            println!("fold {fold}: final loss {:.6} -> {}", model.loss_history.last().unwrap_or(&f64::NAN), fold_out.display());
        }
        Command::Cv { data, run, report, ablation } => {
            let mut config = env_config(&run)?;
            if let Some(a) = ablation {
                config.train.ablation = Ablation::parse(&a)?;
            }
            let ds = Dataset::load(&data.dataset)?;
            let nodes = node_features(&ds, data.emb.as_deref(), &config)?;
            let outcome = run_cv(&nodes, &ds.positive_pairs(), &config.train, |f, e, l| {
                if e == config.train.epochs {
                    eprintln!("fold {f}: final loss {l:.6}");
                }
            })?;
            outcome.report.write(&report)?;
            println!("{} ({})", outcome.report.summary(), config.train.ablation.as_str());
            println!("{REFERENCE_LINE}");
        }
        Command::Eval { checkpoint, data, report } => {
            let saved = ModelCheckpoint::from_checkpoint(&Checkpoint::load(&checkpoint)?)?;
            eprintln!("seed={} config_hash={}", saved.config.seed, saved.config.hash());
            let ds = Dataset::load(&data.dataset)?;
            let nodes = node_features(&ds, data.emb.as_deref(), &saved.config)?;
            let inputs = training_inputs(&nodes, &saved.split.train_pos, &saved.config.train)?;
            let (pairs, labels) = saved.split.test_pairs();
            let scores = predict(&saved.params, &saved.config.train.model, &inputs, &pairs)?;
            let metrics = evaluate_scores(&scores, &labels)?;
            let single = EvalReport { folds: vec![metrics] };
            if let Some(path) = report {
                single.write(&path)?;
            }
            println!("fold {}: {}", saved.fold + 1, single.summary());
        }
        Command::Rank { data, run, drug, top } => {
            let config = env_config(&run)?;
            let ds = Dataset::load(&data.dataset)?;
            let nodes = node_features(&ds, data.emb.as_deref(), &config)?;
            let ranked = case_study(&ds, &nodes, &config.train, &drug)?;
            let d = ds.drug_position(&drug).expect("case_study checked the drug");
            let known: std::collections::HashSet<usize> =
                ds.positive_pairs().into_iter().filter(|p| p.0 == d).map(|p| p.1).collect();
            println!("rank\tmirna\tscore\tknown");
            for (i, (id, score)) in ranked.iter().take(top).enumerate() {
                let m = ds.mirna_position(id).expect("ranked ids come from the dataset");
                println!("{}\t{id}\t{score:.6}\t{}", i + 1, if known.contains(&m) { "yes" } else { "no" });
            }
        }
        Command::Baseline { dataset, method, rank, report, run } => {
            let config = env_config(&run)?;
            let ds = Dataset::load(&dataset)?;
            let method = Method::parse(&method, rank)?;
            let out = run_baseline_cv(
                ds.n_drugs(),
                ds.n_mirnas(),
                &ds.positive_pairs(),
                config.train.folds,
                config.seed,
                method,
            )?;
            out.write(&report)?;
            println!("{}", out.summary());
        }
        Command::Gradcheck { seed } => {
            eprintln!("seed={seed}");
            let started = std::time::Instant::now();
            let report = run_gradcheck(seed)?;
            for (name, err) in &report.per_param {
                println!("{name}\t{err:.3e}");
            }
            let worst = report.worst();
            println!(
                "worst relative error {worst:.3e} over {} entries in {:.1}s",
                report.entries,
                started.elapsed().as_secs_f64()
            );
            if !(worst < 1e-4) {
                return Err(Error::invalid(format!("gradient check failed: {worst:.3e} >= 1e-4")));
            }
        }
    }
    Ok(())
}
