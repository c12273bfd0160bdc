//! Parse association, SMILES and sequence tables and join them into a dataset.

use dmagt::ingest::{assemble_dataset, parse_associations, parse_chemistry, Dataset};

const ASSOCIATIONS: &str = "\
# drug\tmirna\tsource
DB00001\thsa-miR-21\tncDR
DB00001\thsa-miR-155\tncDR
DB00002\thsa-miR-21\tRNAInter
DB00002\thsa-miR-21\tSM2miR
DB00003\thsa-let-7a\tncDR
DB00009\thsa-miR-21\tncDR
";

const SMILES: &str = "\
DB00001\tCC(=O)OC1=CC=CC=C1C(=O)O
DB00002\tCN1C=NC2=C1C(=O)N(C(=O)N2C)C
DB00003\tC1=CC=C(C=C1)C=O
";

const SEQUENCES: &str = "\
hsa-miR-21\tUAGCUUAUCAGACUGAUGUUGA
hsa-miR-155\tuuaaugcuaaucgugauaggggu
hsa-let-7a\tTGAGGTAGTAGGTTGTATAGTT
";

fn main() -> dmagt::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let path = |name: &str| dir.path().join(name);
    std::fs::write(path("assoc.tsv"), ASSOCIATIONS).expect("write");
    std::fs::write(path("smiles.tsv"), SMILES).expect("write");
    std::fs::write(path("seqs.tsv"), SEQUENCES).expect("write");

    let assocs = parse_associations(&path("assoc.tsv"))?;
    let (drugs, mirnas) = parse_chemistry(&path("smiles.tsv"), &path("seqs.tsv"))?;
    let (dataset, report) = assemble_dataset(assocs, drugs, mirnas)?;
    println!(
        "{} drugs, {} miRNAs, {} associations; dropped {} unresolved and {} duplicate rows",
        dataset.n_drugs(),
        dataset.n_mirnas(),
        dataset.associations().len(),
        report.dropped_unresolved,
        report.dropped_duplicates
    );
    for m in dataset.mirnas() {
        println!("  {:<12} {}", m.mirna_id, m.sequence);
    }

    dataset.save(&path("dataset.tsv"))?;
    let back = Dataset::load(&path("dataset.tsv"))?;
    assert_eq!(back, dataset);
    println!("node order: {:?}", back.node_ids());
    Ok(())
}
