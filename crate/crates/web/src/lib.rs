//! Browser bindings: tabular bound checks, label and coefficient curves,
//! and energy distance between two sampled point clouds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use musbo::bounds_verifier::{kappa, u_coefficient, verify_bounds, BoundCheck, VerifyOptions};
use musbo::orchestrator::energy_distance;
use musbo::uncertainty::label_from_gap;

fn to_js(err: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&err.to_string())
}

#[derive(Serialize)]
struct BoundPoint {
    draw: usize,
    check: &'static str,
    lhs: f64,
    rhs: f64,
    holds: bool,
    applicable: bool,
}

#[derive(Serialize)]
struct BoundSummary {
    kappa: f64,
    violations: usize,
    points: Vec<BoundPoint>,
}

/// Runs both bound checks on `draws` random MDP pairs; returns JSON with
/// one point per draw and check.
#[wasm_bindgen]
pub fn bound_checks(draws: usize, states: usize, gamma: f64, seed: u32) -> Result<String, JsValue> {
    let opts = VerifyOptions {
        draws,
        n_states: states,
        gamma,
        seed: u64::from(seed),
        ..VerifyOptions::default()
    };
    let rows = verify_bounds(&opts).map_err(to_js)?;
    let points: Vec<BoundPoint> = rows
        .iter()
        .map(|r| BoundPoint {
            draw: r.draw,
            check: match r.check {
                BoundCheck::Lemma1 => "lemma1",
                BoundCheck::Prop1 => "prop1",
            },
            lhs: r.report.lhs,
            rhs: r.report.rhs,
            holds: r.report.holds,
            applicable: r.report.applicable,
        })
        .collect();
    let summary = BoundSummary {
        kappa: kappa(gamma),
        violations: points.iter().filter(|p| p.applicable && !p.holds).count(),
        points,
    };
    serde_json::to_string(&summary).map_err(to_js)
}

#[derive(Serialize)]
struct Curves {
    gap: Vec<f64>,
    label: Vec<f64>,
    coefficient: Vec<f64>,
}

/// Label `exp(-alpha * gap)` and coefficient `(v_hat - kappa * gap) / v_hat`
/// sampled at `n` gaps in `[0, max_gap]`.
#[wasm_bindgen]
pub fn label_curves(alpha: f64, v_hat: f64, gamma: f64, max_gap: f64, n: usize) -> Result<String, JsValue> {
    if n < 2 || !(max_gap > 0.0) || !(alpha > 0.0) || !(gamma > 0.0 && gamma < 1.0) {
        return Err(to_js("need n >= 2, max_gap > 0, alpha > 0 and gamma in (0, 1)"));
    }
    let k = kappa(gamma);
    let gap: Vec<f64> = (0..n).map(|i| max_gap * i as f64 / (n - 1) as f64).collect();
    let label = gap.iter().map(|g| label_from_gap(alpha, *g)).collect();
    let coefficient = gap
        .iter()
        .map(|g| u_coefficient(v_hat, *g, k))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_js)?;
    serde_json::to_string(&Curves { gap, label, coefficient }).map_err(to_js)
}

#[derive(Serialize)]
struct Clouds {
    a: Vec<[f64; 2]>,
    b: Vec<[f64; 2]>,
    energy_distance: f64,
}

fn gaussian_cloud(n: usize, center: [f64; 2], spread: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| {
            // Box-Muller
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random();
            let r = (-2.0 * u1.ln()).sqrt() * spread;
            let t = std::f64::consts::TAU * u2;
            [center[0] + r * t.cos(), center[1] + r * t.sin()]
        })
        .collect()
}

/// Two Gaussian clouds of `n` points, the second shifted by `(shift, 0)`
/// and scaled by `spread_ratio`, with their energy distance.
#[wasm_bindgen]
pub fn energy_demo(n: usize, shift: f64, spread_ratio: f64, seed: u32) -> Result<String, JsValue> {
    if n == 0 || !(spread_ratio > 0.0) {
        return Err(to_js("need n >= 1 and spread_ratio > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
    let a = gaussian_cloud(n, [0.0, 0.0], 1.0, &mut rng);
    let b = gaussian_cloud(n, [shift, 0.0], spread_ratio, &mut rng);
    let va: Vec<Vec<f64>> = a.iter().map(|p| p.to_vec()).collect();
    let vb: Vec<Vec<f64>> = b.iter().map(|p| p.to_vec()).collect();
    let d = energy_distance(&va, &vb).map_err(to_js)?;
    serde_json::to_string(&Clouds { a, b, energy_distance: d }).map_err(to_js)
}
