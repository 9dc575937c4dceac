//! Browser bindings for the static demo page in `www/`.
//!
//! Every export takes a flat TOML config (the same format the command-line
//! tool reads; an empty string means defaults) and returns text: JSON for
//! reports, CSV for sweeps.

use latbeam::experiment::{fig1_demo, run_search, stats_sweep, sweep_csv, ExperimentConfig};
use latbeam::lattice::serialize;
use latbeam::search::HistoryLimit;
use wasm_bindgen::prelude::*;

fn config(toml: &str) -> Result<ExperimentConfig, String> {
    ExperimentConfig::from_toml(toml).map_err(|e| e.to_string())
}

/// Demo lattice as JSON: `lattice_text`, `sequences`, `path_count`, `merges`.
pub fn demo_json() -> Result<String, String> {
    let demo = fig1_demo().map_err(|e| e.to_string())?;
    serde_json::to_string(&demo).map_err(|e| e.to_string())
}

/// One search on the configured instance with the given `k` ("inf" allowed)
/// and beam size. Returns the search report plus the lattice text.
pub fn search_json(toml: &str, k: &str, beam: usize) -> Result<String, String> {
    let mut cfg = config(toml)?;
    let k: HistoryLimit = k.trim().parse().map_err(|e: latbeam::Error| e.to_string())?;
    cfg.k_values = vec![k];
    cfg.beam_sizes = vec![beam];
    let (result, report) = run_search(&cfg).map_err(|e| e.to_string())?;
    let value = serde_json::json!({
        "report": report,
        "lattice_text": serialize(&result.lattice),
        "nodes": result.lattice.nodes().len(),
        "arcs": result.lattice.arcs().len(),
    });
    Ok(value.to_string())
}

/// Statistics sweep over the configured `k_values` and `beam_sizes` as CSV.
pub fn sweep(toml: &str) -> Result<String, String> {
    let cfg = config(toml)?;
    stats_sweep(&cfg).map(|rows| sweep_csv(&rows)).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = demoLattice)]
pub fn demo_lattice() -> Result<String, JsValue> {
    demo_json().map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = searchInstance)]
pub fn search_instance(toml: &str, k: &str, beam: usize) -> Result<String, JsValue> {
    search_json(toml, k, beam).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = statsSweep)]
pub fn stats_sweep_csv(toml: &str) -> Result<String, JsValue> {
    sweep(toml).map_err(|e| JsValue::from_str(&e))
}
