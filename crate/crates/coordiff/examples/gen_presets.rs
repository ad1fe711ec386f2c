//! Rewrites `presets/*.toml` from `presets/recipes/*.toml` with every random draw recorded.
//!
//! ```text
//! cargo run -p coordiff --example gen_presets
//! ```

use std::path::Path;

use coordiff::cli::config::Config;
use coordiff::experiments::presets::{recipe_toml, PRESET_NAMES};
use coordiff::experiments::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    for name in PRESET_NAMES {
        let recipe = Config::from_toml(recipe_toml(name).expect("every preset has a recipe"))?;
        let scenario = Scenario::materialize(&recipe)?;
        let text = format!(
            "# Materialized from recipes/{name}.toml by the gen_presets example; do not edit by hand.\n{}",
            scenario.to_toml()
        );
        std::fs::write(dir.join(format!("{name}.toml")), text)?;
        println!("{name}: {}", scenario.hash());
    }
    Ok(())
}
