//! Drives the command-line front end in-process, as the binary does.

use srbm::cli::run_from;

fn main() {
    let model = concat!(env!("CARGO_MANIFEST_DIR"), "/models/network.json");
    match run_from(["srbm", "analyze", "--model", model, "--r", "0.2"]) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("{e:?}");
            std::process::exit(e.exit_code());
        }
    }
}
