use std::process::Command;

fn dmagt(args: &[&str], seed_env: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dmagt"));
    cmd.args(args).env_remove("DMAGT_SEED");
    if let Some(s) = seed_env {
        cmd.env("DMAGT_SEED", s);
    }
    cmd.output().expect("binary runs")
}

#[test]
fn synth_pe_and_baseline_run_and_report_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let out = dmagt(&["synth", "--out", &p("ds.tsv"), "--drugs", "10", "--mirnas", "20"], Some("4"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed=4 config_hash="), "{stderr}");

    let out = dmagt(&["pe", "--dataset", &p("ds.tsv"), "--k", "3", "--out", &p("pe.tsv")], None);
    assert!(out.status.success());
    let pe = std::fs::read_to_string(p("pe.tsv")).unwrap();
    assert_eq!(pe.lines().count(), 31);
    assert!(pe.starts_with("node\tpe1\tpe2\tpe3\n"));

    let out = dmagt(&["baseline", "--dataset", &p("ds.tsv"), "--method", "cf-neighbor", "--report", &p("b.tsv"), "--seed", "1"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(p("b.tsv")).unwrap();
    assert!(report.starts_with("fold\tacc\tsen\tspec\tprec\tmcc\tauc\taupr\n"));
    assert!(dir.path().join("roc_fold5.csv").exists());
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let junk = junk.to_string_lossy().into_owned();

    let out = dmagt(&["gradcheck", "--bogus"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = dmagt(&["eval", "--checkpoint", &junk, "--dataset", &junk], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic at offset 0"));
    let out = dmagt(&["synth", "--out", &junk], Some("minus one"));
    assert_eq!(out.status.code(), Some(1));
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "train.epochz = 3\n").unwrap();
    let out = dmagt(&["cv", "--dataset", &junk, "--report", &junk, "--config", &cfg.to_string_lossy()], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}
