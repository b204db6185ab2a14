use clap::Parser;
use neuroevo_harness::cli::{self, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
