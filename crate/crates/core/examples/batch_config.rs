//! Drives the batch interface from code: parses a configuration, runs every
//! subcommand into a temporary directory and prints the report summary.
//!
//! Run with `cargo run --release --example batch_config [path/to/config.ini]`.

use lplab::cli::{self, Format, Subcommand};

const DEFAULT: &str = "\
[model]
omega_V = 1
g = 0.2

[density]
variant = lorentzian
center = 1
width = 0.1

[grid]
N = 4096
samples = 201
";

fn main() {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path).expect("readable config"),
        None => DEFAULT.to_string(),
    };
    let cfg = match cli::parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config rejected: {e}");
            std::process::exit(e.exit_code());
        }
    };
    println!("config hash {}", cfg.hash());
    let dir = tempfile::tempdir().expect("temporary directory");
    for sub in Subcommand::ALL {
        match cli::run_subcommand(sub, &cfg, dir.path(), Format::Csv) {
            Ok(out) => {
                for f in out.files {
                    let name = f.file_name().unwrap().to_string_lossy().into_owned();
                    let lines = std::fs::read_to_string(&f).map(|t| t.lines().count()).unwrap_or(0);
                    println!("{sub:>9}: {name} ({lines} lines)");
                }
                for msg in out.failures {
                    println!("{sub:>9}: failed {msg}");
                }
            }
            Err(e) => println!("{sub:>9}: error {e} (exit code {})", e.exit_code()),
        }
    }
    let report = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&report).unwrap();
    println!("classification {}", doc["classification"]);
    println!("smatrix summary {}", doc["smatrix"]["summary"]);
}
