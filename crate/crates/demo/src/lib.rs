// SPDX-License-Identifier: MIT OR Apache-2.0

//! Browser bindings: the limiting spectrum of a split, and a seeded
//! simulate-then-detect run with its candidate trace.
//!
//! Errors surface as `Err(String)`, which wasm-bindgen throws as a JS error.

use covratio::detector::{Detector, DetectorConfig};
use covratio::rmt::{centering_integral, lsd_density, theorem_moments, AspectRatio, MomentForm};
use covratio::simulate::{generate, ScenarioKind, ScenarioSpec};
use wasm_bindgen::prelude::*;

/// `points` samples of the limiting density on its support, interleaved as
/// `[x0, f(x0), x1, f(x1), ...]`.
#[wasm_bindgen]
pub fn lsd_curve(gamma1: f64, gamma2: f64, points: usize) -> Result<Vec<f64>, String> {
    let ratio = AspectRatio::new(gamma1, gamma2).map_err(|e| e.to_string())?;
    let (a, b) = (ratio.a(), ratio.b());
    let points = points.max(2);
    let mut out = Vec::with_capacity(2 * points);
    for k in 0..points {
        // open interval: the density is zero at the edges
        let x = a + (b - a) * (k as f64 + 0.5) / points as f64;
        out.push(x);
        out.push(lsd_density(&ratio, x));
    }
    Ok(out)
}

/// `[a, b, center, mu, sigma2]` for a split of `p` variables with aspect
/// ratios `gamma1`, `gamma2`.
#[wasm_bindgen]
pub fn split_summary(gamma1: f64, gamma2: f64, p: usize) -> Result<Vec<f64>, String> {
    let ratio = AspectRatio::new(gamma1, gamma2).map_err(|e| e.to_string())?;
    let center = centering_integral(&ratio, p).map_err(|e| e.to_string())?;
    let (mu, sigma2) = theorem_moments(&ratio, MomentForm::Corrected);
    Ok(vec![ratio.a(), ratio.b(), center, mu, sigma2])
}

#[wasm_bindgen]
pub struct Scan {
    changepoints: Vec<u32>,
    truth: Vec<u32>,
    threshold: f64,
    trace_t: Vec<u32>,
    trace_values: Vec<f64>,
}

#[wasm_bindgen]
impl Scan {
    pub fn changepoints(&self) -> Vec<u32> {
        self.changepoints.clone()
    }

    pub fn truth(&self) -> Vec<u32> {
        self.truth.clone()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Candidates of the full-sample sweep.
    pub fn trace_t(&self) -> Vec<u32> {
        self.trace_t.clone()
    }

    /// Standardized statistic at each of `trace_t`.
    pub fn trace_values(&self) -> Vec<f64> {
        self.trace_values.clone()
    }
}

/// Simulates one seeded replicate and runs the detector on it.
///
/// With `changes == 0` the data have one scale change of size `delta` at the
/// midpoint and the single-change test runs; otherwise `changes` changes with
/// random locations and eigenvalue jumps, found by binary segmentation.
#[wasm_bindgen]
pub fn scan(n: usize, p: usize, delta: f64, changes: usize, rep: u32) -> Result<Scan, String> {
    let spec = if changes == 0 {
        ScenarioSpec::single_scale(n, p, delta, rep as u64)
    } else {
        let mut spec = ScenarioSpec::new(ScenarioKind::MultiD1, n, p, rep as u64);
        spec.num_changes = changes;
        spec
    };
    let (data, truth) = generate(&spec).map_err(|e| e.to_string())?;
    let detector = Detector::new(&data, &DetectorConfig::default()).map_err(|e| e.to_string())?;
    let (changepoints, threshold, trace) = if changes == 0 {
        let single = detector.detect_single().map_err(|e| e.to_string())?;
        (single.changepoint.into_iter().collect(), single.threshold, single.trace)
    } else {
        let seg = detector.binseg().map_err(|e| e.to_string())?;
        let trace = seg.traces.into_iter().next().expect("root segment is always traced");
        (seg.changepoints, seg.threshold, trace)
    };
    let to_u32 = |v: Vec<usize>| v.into_iter().map(|t| t as u32).collect();
    Ok(Scan {
        changepoints: to_u32(changepoints),
        truth: to_u32(truth.changepoints),
        threshold,
        trace_t: trace.candidates().map(|(t, _)| t as u32).collect(),
        trace_values: trace.values,
    })
}
