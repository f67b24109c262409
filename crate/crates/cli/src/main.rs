use clap::Parser;

use lipalpha_cli::{run, Cli};
use lipalpha_core::estimates::Exact;

fn main() {
    let cli = Cli::parse();
    let outcome = run(&cli, &Exact);
    for m in &outcome.messages {
        if outcome.code == 1 || outcome.code == 2 {
            eprintln!("{m}");
        } else {
            println!("{m}");
        }
    }
    std::process::exit(outcome.code);
}
