use clap::Parser;

use corrflow::cli::{error_record, Cli};

fn main() {
    env_logger::init();
    if let Err(e) = Cli::parse().execute() {
        eprintln!("{}", error_record(&e));
        std::process::exit(e.exit_code());
    }
}
