//! Central finite differences against reverse-mode gradients for every model parameter.
//!
//! Slow in debug builds; run with `--release`.

fn main() -> dmagt::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let start = std::time::Instant::now();
    let report = dmagt::gradcheck::run_gradcheck(seed)?;
    for (name, err) in &report.per_param {
        println!("{name:<20} {err:.2e}");
    }
    println!(
        "worst {:.2e} over {} entries, {:.1}s",
        report.worst(),
        report.entries,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
