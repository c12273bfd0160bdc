use clap::Parser;

fn main() {
    if let Err(e) = dmagt::cli::run(dmagt::cli::Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
