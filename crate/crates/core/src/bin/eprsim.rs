use clap::Parser;
use epr_ensemble::cli::{self, Cli};

fn main() {
    let args = Cli::parse();
    std::process::exit(cli::run(args.settings));
}
