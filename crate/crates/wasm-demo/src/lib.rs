//! Browser bindings for the solver. Every export takes and returns JSON
//! strings; the logic lives in [`demo`] so it also runs natively.

use wasm_bindgen::prelude::*;

pub mod demo;

fn to_js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Solves one channel draw with every scheme. See [`demo::DemoParams`].
#[wasm_bindgen(js_name = solveTrial)]
pub fn solve_trial(params: &str) -> Result<String, JsError> {
    to_js(
        demo::parse_params(params)
            .and_then(|p| demo::solve_trial(&p))
            .and_then(demo::to_json),
    )
}

/// Per-antenna surrogate scores over the search lattice at the converged
/// reference-layout solution.
#[wasm_bindgen(js_name = surrogateMap)]
pub fn surrogate_map(params: &str) -> Result<String, JsError> {
    to_js(
        demo::parse_params(params)
            .and_then(|p| demo::surrogate_map(&p))
            .and_then(demo::to_json),
    )
}

/// Time-domain OFDM link against the frequency-domain model.
#[wasm_bindgen(js_name = checkModel)]
pub fn check_model(params: &str) -> Result<String, JsError> {
    to_js(
        demo::parse_params(params)
            .and_then(|p| demo::check_model(&p))
            .and_then(demo::to_json),
    )
}
