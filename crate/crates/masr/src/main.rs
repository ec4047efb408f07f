use clap::Parser;

fn main() {
    let cli = masr::cli::Cli::parse();
    if let Err(e) = masr::cli::run(cli) {
        // One machine-parsable line on stderr, nonzero exit.
        let line = serde_json::json!({ "kind": e.kind(), "error": e.to_string() });
        eprintln!("{line}");
        std::process::exit(1);
    }
}
