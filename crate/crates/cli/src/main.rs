use clap::Parser;
use forcecheck_cli::args::{run, Cli};

fn main() {
    match run(Cli::parse()) {
        Ok(msg) => println!("{msg}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
