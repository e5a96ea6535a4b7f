//! Runs a builtin scenario in memory at reduced size and prints its checks and manifest.
//!
//! `cargo run --release --example run_scenario -- nonmarkov_gauge`

use jumpsym::scenario::{run_in_memory, ScenarioConfig};

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "iterated_map".into());
    let mut cfg = ScenarioConfig::builtin(&name).unwrap_or_else(|e| panic!("{e}"));
    cfg.paths = Some(500);
    cfg.csv_paths = Some(1);
    let out = run_in_memory(&cfg).unwrap();
    print!("{}", out.summary());
    println!("\n{}", out.manifest_json());
}
