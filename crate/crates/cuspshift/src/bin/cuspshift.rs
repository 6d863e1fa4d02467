use clap::Parser;
use cuspshift::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let quiet = cli.quiet;
    let code = match cli.into_config() {
        Ok(cfg) => run(&cfg, quiet),
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    std::process::exit(code);
}
