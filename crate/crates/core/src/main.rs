mod cli;

use clap::Parser;

fn main() {
    let args = cli::Cli::parse();
    if let Err(err) = cli::run(args) {
        let code = cli::exit_code(&err);
        eprintln!("error: {err:#}");
        std::process::exit(code);
    }
}
