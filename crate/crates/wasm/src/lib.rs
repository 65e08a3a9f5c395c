//! Browser bindings: each export takes plain numbers / JSON and returns JSON.
//! The work happens in ordinary functions so it can be tested natively.

use std::sync::Arc;

use cpslab::cps::{build_cps_1d, CpsOptions};
use cpslab::facelift::{concave_envelope, squeeze_report, static_upper_price, LowerOptions, PayoffCurve};
use cpslab::io::PayoffSpec;
use cpslab::paths::{Model, TimeGrid};
use cpslab::skeleton::{extract_ladder, extract_ladders, LadderOptions};
use cpslab::walk::{geometric_budget, integrability_schedule};
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Res<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
pub struct EnvelopeView {
    pub xs: Vec<f64>,
    pub payoff: Vec<f64>,
    pub envelope: Vec<f64>,
    pub vertices: Vec<(f64, f64)>,
    pub infinite: bool,
    pub at_s0: f64,
    pub slope_at_s0: f64,
    pub upper_price: f64,
    pub beta: f64,
    pub j_constant: f64,
}

/// Envelope of a payoff given as `PayoffSpec` JSON, sampled for plotting,
/// with the static upper price at `(s0, eps)`.
pub fn envelope_view(spec_json: &str, s0: f64, eps: f64) -> Res<EnvelopeView> {
    let spec: PayoffSpec = serde_json::from_str(spec_json).map_err(err)?;
    let curve = spec.to_curve().map_err(err)?;
    let env = concave_envelope(&curve);
    let up = static_upper_price(&curve, s0, eps, &[]).map_err(err)?;
    let hi = 1.5 * curve.xs.last().unwrap().max(s0);
    let xs: Vec<f64> = (1..=300).map(|i| hi * i as f64 / 300.0).collect();
    Ok(EnvelopeView {
        payoff: xs.iter().map(|x| curve.eval(*x)).collect(),
        envelope: xs.iter().map(|x| env.value(*x)).collect(),
        xs,
        vertices: env.vertices.clone(),
        infinite: env.infinite,
        at_s0: env.value(s0),
        slope_at_s0: env.right_derivative(s0),
        upper_price: up.price,
        beta: up.beta,
        j_constant: up.j_constant,
    })
}

#[derive(Serialize)]
pub struct LadderView {
    pub t: Vec<f64>,
    pub price: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
    pub stop_t: Vec<f64>,
    pub stop_anchor: Vec<f64>,
    pub marks: Vec<i8>,
    /// Shadow price of the displayed path (if requested).
    pub shadow: Option<Vec<f64>>,
    pub likelihood: Option<f64>,
}

/// One geometric fBm path with its ladder and band; optionally the shadow
/// price from a price system built over `batch` paths.
pub fn ladder_view(hurst: f64, sigma: f64, eps: f64, steps: usize, seed: u64, batch: usize) -> Res<LadderView> {
    let grid = Arc::new(TimeGrid::uniform(1.0, steps).map_err(err)?);
    let model = Model::Gfbm {
        hurst,
        sigma,
        s0: 100.0,
        drift_rate: 0.0,
    };
    let n = batch.max(1);
    let paths = model.sample(grid.clone(), n, seed).map_err(err)?;
    let skel = extract_ladder(&paths[0], eps, &LadderOptions::default()).map_err(err)?;
    let mut band_lo = Vec::with_capacity(grid.len());
    let mut band_hi = Vec::with_capacity(grid.len());
    let mut s = 0;
    for k in 0..grid.len() {
        while s + 1 < skel.stops.len() && skel.stops[s + 1].grid_index <= k {
            s += 1;
        }
        let a = skel.stops[s].anchor[0];
        band_lo.push(a / (1.0 + eps));
        band_hi.push(a * (1.0 + eps));
    }
    let (shadow, likelihood) = if batch > 1 {
        let skels = extract_ladders(&paths, eps, &LadderOptions::default()).map_err(err)?;
        let sched = integrability_schedule(|x| x, 100.0, eps, geometric_budget, 0.5).map_err(err)?;
        let opts = CpsOptions {
            interpolate: true,
            strict: false,
            ..CpsOptions::default()
        };
        let b = build_cps_1d(&paths, &skels, &sched, &opts).map_err(err)?;
        let sys = &b.systems[0];
        (sys.grid_values.clone(), Some(sys.likelihood))
    } else {
        (None, None)
    };
    Ok(LadderView {
        t: grid.times().to_vec(),
        price: (0..grid.len()).map(|k| paths[0].scalar(k)).collect(),
        band_lo,
        band_hi,
        stop_t: skel.stops.iter().map(|s| s.tau).collect(),
        stop_anchor: skel.stops.iter().map(|s| s.anchor[0]).collect(),
        marks: skel.marks.clone(),
        shadow,
        likelihood,
    })
}

/// Call-under-GBM squeeze table for a list of spreads (largest first).
pub fn squeeze_view(strike: f64, sigma: f64, n_paths: usize, seed: u64, eps: &[f64]) -> Res<cpslab::facelift::SqueezeReport> {
    let grid = Arc::new(TimeGrid::uniform(1.0, 250).map_err(err)?);
    let paths = Model::Gbm { mu: 0.0, sigma, s0: 100.0 }
        .sample(grid, n_paths, seed)
        .map_err(err)?;
    let xs: Vec<f64> = (1..=60).map(|i| 5.0 * i as f64).collect();
    let call = PayoffCurve::call(strike, &xs).map_err(err)?;
    squeeze_report(
        &call,
        100.0,
        eps,
        &paths,
        seed,
        &LowerOptions {
            delta: Some(1.0),
            ..LowerOptions::default()
        },
    )
    .map_err(err)
}

fn to_js<T: Serialize>(r: Res<T>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(err))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn envelope(spec_json: &str, s0: f64, eps: f64) -> Result<String, JsValue> {
    to_js(envelope_view(spec_json, s0, eps))
}

#[wasm_bindgen]
pub fn ladder(hurst: f64, sigma: f64, eps: f64, steps: usize, seed: u32, batch: usize) -> Result<String, JsValue> {
    to_js(ladder_view(hurst, sigma, eps, steps, seed as u64, batch))
}

#[wasm_bindgen]
pub fn squeeze(strike: f64, sigma: f64, n_paths: usize, seed: u32, eps: &[f64]) -> Result<String, JsValue> {
    to_js(squeeze_view(strike, sigma, n_paths, seed as u64, eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_envelope_is_flat() {
        let v = envelope_view(
            r#"{"points": [[50, 50], [100, 0], [150, 0]], "left_limit": 100, "right_slope": 0, "lower_bound": 0}"#,
            100.0,
            0.01,
        )
        .unwrap();
        assert!(v.envelope.iter().all(|e| (*e - 100.0).abs() < 1e-12));
        assert_eq!(v.upper_price, 100.0);
    }

    #[test]
    fn missing_slope_is_refused() {
        let e = envelope_view(r#"{"points": [[1, 1]], "left_limit": 0, "lower_bound": 0}"#, 1.0, 0.1);
        assert!(e.is_err());
    }

    #[test]
    fn ladder_band_holds_price() {
        let v = ladder_view(0.7, 0.3, 0.05, 128, 1, 200).unwrap();
        assert_eq!(v.t.len(), 129);
        assert_eq!(v.stop_t.len(), v.marks.len() + 1);
        for k in 0..v.t.len() {
            if !v.stop_t.contains(&v.t[k]) {
                assert!(v.price[k] > v.band_lo[k] && v.price[k] < v.band_hi[k]);
            }
        }
        let sh = v.shadow.unwrap();
        assert_eq!(sh.len(), 129);
    }

    #[test]
    fn squeeze_orders() {
        let r = squeeze_view(100.0, 0.2, 300, 2, &[0.08, 0.04]).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows[0].upper > r.rows[1].upper);
    }
}
