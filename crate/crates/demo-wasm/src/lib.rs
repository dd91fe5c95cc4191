//! Browser bindings: a single step with its metric identity, one spiral
//! stage, and the exponent table. Every entry point returns JSON.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use mavk::field::{cm_norm, map_field, Field, Grid2, ScalarField2, SymMatrixField2, VectorField2};
use mavk::jet::JetPair;
use mavk::nk::{chi_alpha_limit, exponent_bound_exact, rate_budget_exact, rational, Family};
use mavk::random::{rng, smooth_scalar};
use mavk::stage::{calibrate_r0, run_stage_kallen, StageParams};
use mavk::steps::{apply_step, step_identity_residual, Axis, ImmersionPair, StepKind, StepSpec};

/// Largest grid the page may request; keeps a step under a second.
pub const MAX_NODES: usize = 257;

fn valid_rows(f: &ScalarField2) -> Vec<Vec<f64>> {
    let g = *f.grid();
    g.valid2().map(|j| g.valid1().map(|i| f.at(i, j)).collect()).collect()
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

/// One step on the unit square with a random amplitude 1 + 0.25 s and a
/// quadratic v; returns the identity residual and the perturbed component.
pub fn step_json(kind: &str, lambda: f64, n: usize, seed: u64) -> Result<Value, String> {
    if !(17..=MAX_NODES).contains(&n) {
        return Err(format!("grid size must lie in 17..={MAX_NODES}"));
    }
    let g = Grid2::new([0.0, 0.0], n, n, 1.0 / (n - 1) as f64, 0).map_err(err)?;
    let kind = match kind {
        "spiral" => StepKind::Spiral,
        "corrugation" => StepKind::Corrugation { axis: Axis::X1, component: 0 },
        other => return Err(format!("unknown step kind `{other}`")),
    };
    let amp = map_field(&smooth_scalar(g, &mut rng(seed), 4, 3.0), |x| 1.0 + 0.25 * x);
    let a2 = cm_norm(&amp, 2).map_err(err)?;
    let v = VectorField2::from_fn(g, 4, |c, x, y| 0.2 * (c as f64 + 1.0) * x * x + 0.3 * x * y);
    let p = ImmersionPair::new(v, VectorField2::zeros(g, 2)).map_err(err)?;
    let spec = StepSpec { amplitude: amp, frequency: lambda, kind };
    let q = apply_step(&p, &spec).map_err(err)?;
    let res = step_identity_residual(&p, &q, &spec).map_err(err)?;
    Ok(json!({
        "residual": res,
        "scaled_residual": res / (1.0 + a2 * a2),
        "h": g.h(),
        "field": valid_rows(&q.v.component(0)),
    }))
}

/// One spiral stage from v = w = 0 towards the target (1 + t x1 x2) Id.
pub fn stage_json(lambda: f64, n_iter: usize, tilt: f64, seed: u64) -> Result<Value, String> {
    let g = Grid2::covering([0.5, 0.5], [1.0, 1.0], 0.25, 129).map_err(err)?;
    let a = SymMatrixField2::from_fn(g, |x, y| {
        let s = 1.0 + tilt * (x - 0.5) * (y - 0.5);
        [s, 0.0, s]
    });
    let params = StageParams {
        l: 0.1,
        lambda,
        gamma: 0.05,
        n: n_iter,
        m_bound: None,
        sigma0: 1.0,
        r0: calibrate_r0(&g, 0.05, seed).map_err(err)?,
        beta: 1.0,
    };
    let (q, rep) = run_stage_kallen(&JetPair::zeros(g, 4).map_err(err)?, &a, &params).map_err(err)?;
    let d = q.defect(&a).map_err(err)?;
    Ok(json!({
        "defect_in": rep.defect_in_sup,
        "defect_out": rep.defect_out_sup,
        "exactness": rep.exactness_residual,
        "c_tilde": rep.c_tilde,
        "field": valid_rows(&d.d.trace()),
    }))
}

/// Exponent bounds and rate budgets for k = 1..=kmax at N recursion steps.
pub fn exponents_json(kmax: u32, n: u64, beta: f64) -> Result<Value, String> {
    let beta = rational(beta).map_err(err)?;
    let mut rows = vec![];
    for k in 1..=kmax.clamp(1, 12) {
        let family = if k >= 4 { Family::Kallen } else { Family::Chi };
        let rate = rate_budget_exact(n.max(1), k, family).map_err(err)?;
        rows.push(json!({
            "k": k,
            "family": format!("{family:?}").to_lowercase(),
            "bound": exponent_bound_exact(k, &beta, family).map_err(err)?.to_string(),
            "alpha_max": rate.alpha_max().to_string(),
            "chi_limit": chi_alpha_limit(k).to_string(),
        }));
    }
    Ok(Value::Array(rows))
}

fn js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn step(kind: &str, lambda: f64, n: usize, seed: u64) -> Result<String, JsValue> {
    js(step_json(kind, lambda, n, seed))
}

#[wasm_bindgen]
pub fn stage(lambda: f64, n_iter: usize, tilt: f64, seed: u64) -> Result<String, JsValue> {
    js(stage_json(lambda, n_iter, tilt, seed))
}

#[wasm_bindgen]
pub fn exponents(kmax: u32, n: u64, beta: f64) -> Result<String, JsValue> {
    js(exponents_json(kmax, n, beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_identity_is_small() {
        let v = step_json("corrugation", 8.0, 129, 1).unwrap();
        assert!(v["scaled_residual"].as_f64().unwrap() < 1e-4);
        assert_eq!(v["field"].as_array().unwrap().len(), 129);
        assert!(step_json("twist", 8.0, 129, 1).is_err());
        assert!(step_json("spiral", 8.0, 4000, 1).is_err());
    }

    #[test]
    fn stage_lowers_the_defect() {
        let v = stage_json(32.0, 1, 0.2, 0).unwrap();
        assert!(v["defect_out"].as_f64().unwrap() < v["defect_in"].as_f64().unwrap());
    }

    #[test]
    fn exponent_rows() {
        let v = exponents_json(5, 3, 1.0).unwrap();
        assert_eq!(v[0]["bound"], "1/3");
        assert_eq!(v[4]["bound"], "1/2");
    }
}
