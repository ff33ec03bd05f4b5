//! Browser bindings for a small interactive demo. Every entry point takes
//! plain numbers and returns a JSON string, so the page needs no glue beyond
//! the generated module.

use fairmle::dataset::{simulate_masked, DgpSpec, Graph};
use fairmle::el::ElState;
use fairmle::eval::mse;
use fairmle::train::{fit, Method, TrainConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct MethodRow {
    pub method: String,
    pub effect: f64,
    pub mse: f64,
    pub loglik: f64,
    pub iterations: usize,
}

#[derive(Serialize)]
struct SweepPoint {
    target: f64,
    effect: f64,
    mse: f64,
}

#[derive(Serialize)]
struct Tilt {
    lambda: f64,
    xs: Vec<f64>,
    weights: Vec<f64>,
    weighted_mean: f64,
}

fn to_js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(to_js)
}

/// Fits M0 through M4 on one simulated sample and reports the fitted
/// effect, held-out squared error and log-likelihood of each.
pub fn compare_methods_native(n: usize, seed: u64, epsilon: f64) -> fairmle::Result<Vec<MethodRow>> {
    let spec = DgpSpec::new(Graph::OneMediator, n, seed).with_missing(0.2);
    let (ds, held) = simulate_masked(&spec)?;
    let mut out = Vec::new();
    for method in Method::ALL {
        let cfg = TrainConfig::new(method, Graph::OneMediator).with_epsilon(-epsilon, epsilon);
        let f = fit(&ds, &cfg)?;
        out.push(MethodRow {
            method: method.to_string(),
            effect: f.effect_at_fit,
            mse: mse(&held, &f.predictions)?,
            loglik: f.loglik,
            iterations: f.diagnostics.iterations,
        });
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn compare_methods(n: usize, seed: u32, epsilon: f64) -> Result<String, JsValue> {
    json(&compare_methods_native(n, seed as u64, epsilon).map_err(to_js)?)
}

/// Held-out error of the hybrid fit when its effect is pinned to each of
/// `steps` targets between 0 and `max_target`.
#[wasm_bindgen]
pub fn target_sweep(n: usize, seed: u32, max_target: f64, steps: usize) -> Result<String, JsValue> {
    let spec = DgpSpec::new(Graph::OneMediator, n, seed as u64).with_missing(0.2);
    let (ds, held) = simulate_masked(&spec).map_err(to_js)?;
    let steps = steps.max(2);
    let mut points = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = max_target * k as f64 / (steps - 1) as f64;
        let cfg = TrainConfig::new(Method::M3, Graph::OneMediator).with_epsilon(t, t);
        let f = fit(&ds, &cfg).map_err(to_js)?;
        let err = mse(&held, &f.predictions).map_err(to_js)?;
        points.push(SweepPoint { target: t, effect: f.effect_at_fit, mse: err });
    }
    json(&points)
}

/// Empirical-likelihood weights that move the mean of a standard normal
/// sample to `target`.
#[wasm_bindgen]
pub fn el_tilt(n: usize, seed: u32, target: f64) -> Result<String, JsValue> {
    let ds = fairmle::dataset::simulate(&DgpSpec::new(Graph::OneMediator, n, seed as u64)).map_err(to_js)?;
    let mut xs = ds.x().to_vec();
    xs.sort_by(f64::total_cmp);
    let m: Vec<f64> = xs.iter().map(|x| x - target).collect();
    let el = ElState::from_constraint(&m).map_err(to_js)?;
    let weighted_mean = el.mean_of(&xs);
    json(&Tilt { lambda: el.lambda, xs, weights: el.weights, weighted_mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_methods_run_on_a_small_sample() {
        let rows = compare_methods_native(600, 3, 0.05).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows[1..].iter().all(|r| r.effect.abs() <= 0.05 + 1e-6));
    }

    #[test]
    fn tilt_hits_target() {
        let s = el_tilt(400, 1, 0.3).unwrap();
        let t: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!((t["weighted_mean"].as_f64().unwrap() - 0.3).abs() < 1e-8);
    }

    #[test]
    fn sweep_covers_the_requested_grid() {
        let s = target_sweep(600, 2, 1.0, 3).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        let t: Vec<f64> = v.as_array().unwrap().iter().map(|p| p["target"].as_f64().unwrap()).collect();
        assert_eq!(t, vec![0.0, 0.5, 1.0]);
    }
}
