//! Planted-block synthetic benchmark: two drug groups and two miRNA groups,
//! dense links inside matching groups, sparse links across, and group-specific
//! sequence composition.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{assemble_dataset, AssociationRecord, Dataset, DrugRecord, MirnaRecord, Source};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_drugs: usize,
    pub n_mirnas: usize,
    /// Link probability between matching groups.
    pub p_in: f64,
    /// Link probability across groups.
    pub p_out: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_drugs: 40,
            n_mirnas: 100,
            p_in: 0.3,
            p_out: 0.02,
            seed: 0,
        }
    }
}

const DRUG_ALPHABET: [char; 10] = ['C', 'O', '=', '(', ')', 'c', 'n', '1', '2', 'N'];
const DRUG_WEIGHTS: [[f64; 10]; 2] = [
    [5.0, 3.0, 2.0, 1.0, 1.0, 0.3, 0.3, 0.3, 0.3, 0.3],
    [0.3, 0.3, 0.3, 0.3, 0.3, 5.0, 3.0, 1.0, 1.0, 2.0],
];
const RNA_ALPHABET: [char; 4] = ['A', 'C', 'G', 'U'];
const RNA_WEIGHTS: [[f64; 4]; 2] = [[0.35, 0.15, 0.15, 0.35], [0.15, 0.35, 0.35, 0.15]];

/// Group of drug `i` or miRNA `m`: alternating, so both groups are balanced.
pub fn group_of(index: usize) -> usize {
    index % 2
}

pub fn drug_id(i: usize) -> String {
    format!("SYN-D{:03}", i + 1)
}

pub fn mirna_id(m: usize) -> String {
    format!("syn-miR-{:03}", m + 1)
}

fn sample_string(rng: &mut ChaCha8Rng, alphabet: &[char], weights: &[f64], len: usize) -> Result<String> {
    let dist = WeightedIndex::new(weights).map_err(|e| Error::invalid(format!("token weights: {e}")))?;
    Ok((0..len).map(|_| alphabet[dist.sample(rng)]).collect())
}

/// Generate the dataset. Every node is guaranteed at least one association so
/// the assembled dataset keeps all `n_drugs × n_mirnas` nodes.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    if config.n_drugs < 2 || config.n_mirnas < 2 {
        return Err(Error::Config("synthetic data needs at least 2 drugs and 2 miRNAs".into()));
    }
    for p in [config.p_in, config.p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("link probability {p} outside [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let drugs = (0..config.n_drugs)
        .map(|i| {
            let len = rng.random_range(20..=40);
            let smiles = sample_string(&mut rng, &DRUG_ALPHABET, &DRUG_WEIGHTS[group_of(i)], len)?;
            Ok(DrugRecord {
                drug_id: drug_id(i),
                smiles,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mirnas = (0..config.n_mirnas)
        .map(|m| {
            let len = rng.random_range(20..=24);
            let sequence = sample_string(&mut rng, &RNA_ALPHABET, &RNA_WEIGHTS[group_of(m)], len)?;
            Ok(MirnaRecord {
                mirna_id: mirna_id(m),
                sequence,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut edges = Vec::new();
    let mut drug_deg = vec![0usize; config.n_drugs];
    let mut mirna_deg = vec![0usize; config.n_mirnas];
    for d in 0..config.n_drugs {
        for m in 0..config.n_mirnas {
            let p = if group_of(d) == group_of(m) { config.p_in } else { config.p_out };
            if rng.random::<f64>() < p {
                edges.push((d, m));
                drug_deg[d] += 1;
                mirna_deg[m] += 1;
            }
        }
    }
    // Isolated nodes get one link into a matching group.
    for d in 0..config.n_drugs {
        if drug_deg[d] == 0 {
            let choices = (config.n_mirnas - group_of(d)).div_ceil(2);
            let m = group_of(d) + 2 * rng.random_range(0..choices);
            edges.push((d, m));
            mirna_deg[m] += 1;
        }
    }
    for m in 0..config.n_mirnas {
        if mirna_deg[m] == 0 {
            let choices = (config.n_drugs - group_of(m)).div_ceil(2);
            let d = group_of(m) + 2 * rng.random_range(0..choices);
            if !edges.contains(&(d, m)) {
                edges.push((d, m));
            }
        }
    }
    edges.sort_unstable();
    let assocs = edges
        .into_iter()
        .map(|(d, m)| AssociationRecord {
            drug_id: drug_id(d),
            mirna_id: mirna_id(m),
            source: Source::Other,
        })
        .collect();
    let (dataset, _) = assemble_dataset(assocs, drugs, mirnas)?;
    Ok(dataset)
}
