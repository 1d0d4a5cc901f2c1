//! Writes the built-in scenarios as scenario, map and grid files.
//!
//! `cargo run -p dcpp-core --example export_fixtures -- [dir]`, default
//! `crates/core/fixtures`.

use std::path::PathBuf;

use dcpp_core::fixtures;
use dcpp_core::sim::{Scenario, ScenarioObstacle};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    std::fs::create_dir_all(&dir).expect("create output directory");
    let mut written = Vec::new();
    for f in [
        fixtures::two_detours(),
        fixtures::single_detour(),
        fixtures::straight_corridor(30.0),
    ] {
        let scenario = Scenario::from_fixture(&f);
        written.push(scenario.write_files(&dir, f.name).expect("write scenario"));
    }
    // the blockage clears after 10 s, before an operator would answer
    let mut clearing = Scenario::from_fixture(&fixtures::two_detours());
    clearing.name = "clearing_obstacle".into();
    clearing.description = "Two detours, but the obstacle is removed after 10 s".into();
    clearing.obstacles = clearing
        .obstacles
        .into_iter()
        .map(|o| ScenarioObstacle {
            remove_at: Some(10.0),
            ..o
        })
        .collect();
    written.push(
        clearing
            .write_files(&dir, "clearing_obstacle")
            .expect("write scenario"),
    );
    for p in written {
        println!("{}", p.display());
    }
}
