//! Generate the planted-block benchmark and look at where its links fall.

use dmagt::synth::{generate, group_of, SynthConfig};

fn main() -> dmagt::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let config = SynthConfig { seed, ..SynthConfig::default() };
    let ds = generate(&config)?;
    let pairs = ds.positive_pairs();
    let mut counts = [[0usize; 2]; 2];
    for &(d, m) in &pairs {
        counts[group_of(d)][group_of(m)] += 1;
    }
    println!("seed {seed}: {} drugs × {} miRNAs, {} links", ds.n_drugs(), ds.n_mirnas(), pairs.len());
    println!("links by (drug group, miRNA group):");
    for (g, row) in counts.iter().enumerate() {
        println!("  drug group {g}: {:>4} {:>4}", row[0], row[1]);
    }
    println!("{} ...", ds.drugs()[0].smiles);
    println!("{} ...", ds.drugs()[1].smiles);
    println!("{} / {}", ds.mirnas()[0].sequence, ds.mirnas()[1].sequence);

    let out = std::env::temp_dir().join(format!("synth_{seed}.tsv"));
    ds.save(&out)?;
    println!("written to {}", out.display());
    Ok(())
}
