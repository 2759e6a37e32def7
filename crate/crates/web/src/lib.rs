//! Browser bindings for three small demonstrations: clustering a synthetic
//! dataset, comparing particle degeneracy under two resampling rules, and
//! the EMA crossover strategy on a price path.
//!
//! Each export returns a JSON string. The computations live in [`demo`] so
//! they can be exercised without a JavaScript host.

use wasm_bindgen::prelude::*;

pub mod demo;

fn to_js<T: serde::Serialize>(r: lassomix::Result<T>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// Simulates a dataset and fits it; see [`demo::cluster`].
#[wasm_bindgen]
pub fn cluster_demo(seed: u32, n: usize, k: usize, iterations: usize, particles: usize) -> Result<String, JsError> {
    to_js(demo::cluster(seed.into(), n, k, iterations, particles))
}

/// Adaptive against every-step systematic resampling; see [`demo::degeneracy`].
#[wasm_bindgen]
pub fn degeneracy_demo(seed: u32, n: usize, particles: usize) -> Result<String, JsError> {
    to_js(demo::degeneracy(seed.into(), n, particles))
}

/// Crossover strategy on `prices` (one number per line) or, when blank, on
/// a simulated path; see [`demo::crossover`].
#[wasm_bindgen]
pub fn crossover_demo(prices: &str, seed: u32, alpha_fast: f64, alpha_slow: f64, vol_decay: f64) -> Result<String, JsError> {
    let series = if prices.trim().is_empty() {
        demo::random_walk(seed.into(), 500)
    } else {
        demo::parse_prices(prices).map_err(|e| JsError::new(&e.to_string()))?
    };
    to_js(demo::crossover(&series, alpha_fast, alpha_slow, vol_decay))
}
