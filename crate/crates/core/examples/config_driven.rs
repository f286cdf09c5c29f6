//! Loads a run configuration with dotted overrides, as the command-line tool
//! does, and prints the resolved JSON.
//!
//! cargo run --example config_driven -- inversion.alpha=2e-6 data.acquisition="top_only"

use faultscope::config::RunConfig;

fn main() -> faultscope::Result<()> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let cfg = RunConfig::parse("{}", &overrides)?;
    cfg.validate()?;
    println!("{}", serde_json::to_string_pretty(&cfg).unwrap());
    Ok(())
}
