use clap::Parser;
use mcar_monitor::cli::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
