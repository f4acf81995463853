// SPDX-License-Identifier: MIT OR Apache-2.0

//! Detection and estimation error against a known ground truth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::simulate::GroundTruth;
use crate::spectrum::{DataMatrix, ScatterTable};
use crate::{Error, Result};

pub const DEFAULT_MATCH_TOLERANCE: usize = 20;

/// A true changepoint paired with the estimate that detects it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub truth: usize,
    pub estimate: usize,
}

impl Match {
    pub fn error(&self) -> usize {
        self.truth.abs_diff(self.estimate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tdr: f64,
    pub fdr: f64,
    pub mae: f64,
    /// `|τ̂ − τ|` per matched pair, in truth order.
    pub changepoint_errors: Vec<usize>,
    pub match_tolerance: usize,
}

/// One-to-one greedy matching: pairs within `tolerance` are taken in order of
/// increasing distance, ties going to the earlier truth, then the earlier
/// estimate. The result is sorted by truth.
pub fn match_changepoints(estimated: &[usize], truth: &[usize], tolerance: usize) -> Vec<Match> {
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (i, &tau) in truth.iter().enumerate() {
        for (j, &est) in estimated.iter().enumerate() {
            let d = tau.abs_diff(est);
            if d <= tolerance {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_unstable();
    let mut truth_used = vec![false; truth.len()];
    let mut est_used = vec![false; estimated.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !truth_used[i] && !est_used[j] {
            truth_used[i] = true;
            est_used[j] = true;
            out.push(Match {
                truth: truth[i],
                estimate: estimated[j],
            });
        }
    }
    out.sort_unstable_by_key(|m| (m.truth, m.estimate));
    out
}

/// `(TDR, FDR)`; TDR is 1 without true changes and FDR is 0 without estimates.
pub fn compute_tdr_fdr(estimated: &[usize], truth: &[usize], tolerance: usize) -> (f64, f64) {
    let matched = match_changepoints(estimated, truth, tolerance).len() as f64;
    let tdr = if truth.is_empty() {
        1.0
    } else {
        matched / truth.len() as f64
    };
    let fdr = if estimated.is_empty() {
        0.0
    } else {
        (estimated.len() as f64 - matched) / estimated.len() as f64
    };
    (tdr, fdr)
}

fn boundaries(changepoints: &[usize], n: usize, what: &str) -> Result<Vec<usize>> {
    let mut b = Vec::with_capacity(changepoints.len() + 2);
    b.push(0);
    b.extend_from_slice(changepoints);
    b.push(n);
    if b.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "{what} changepoints must be strictly increasing inside (0, {n}), got {changepoints:?}"
        )));
    }
    Ok(b)
}

fn entrywise_l1(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// `(1/n) Σ_i ‖Σ̂_i − Σ_i‖₁` with an arbitrary per-segment estimator.
///
/// The sum runs over the common refinement of both partitions, on which both
/// matrices are constant.
pub fn mae_with<F>(estimated: &[usize], n: usize, truth: &GroundTruth, mut estimate: F) -> Result<f64>
where
    F: FnMut(usize, usize) -> Result<DMatrix<f64>>,
{
    let est = boundaries(estimated, n, "estimated")?;
    let tru = boundaries(&truth.changepoints, n, "true")?;
    if truth.covariances.len() != tru.len() - 1 {
        return Err(Error::InvalidInput(format!(
            "truth has {} covariances for {} segments",
            truth.covariances.len(),
            tru.len() - 1
        )));
    }
    let mut cuts: Vec<usize> = est.iter().chain(&tru).copied().collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut total = 0.0;
    let (mut ei, mut ti) = (0, 0);
    let mut current: Option<DMatrix<f64>> = None;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        while est[ei + 1] <= a {
            ei += 1;
            current = None;
        }
        while tru[ti + 1] <= a {
            ti += 1;
        }
        if current.is_none() {
            current = Some(estimate(est[ei], est[ei + 1])?);
        }
        let sigma_hat = current.as_ref().expect("estimate present");
        total += (b - a) as f64 * entrywise_l1(sigma_hat, &truth.covariances[ti]);
    }
    Ok(total / n as f64)
}

/// MAE with each segment's covariance estimated by its uncentered second
/// moment, matching the zero-mean generators.
pub fn compute_mae(estimated: &[usize], data: &DataMatrix, truth: &GroundTruth) -> Result<f64> {
    let table = ScatterTable::new(data);
    mae_with(estimated, data.n(), truth, |s, e| table.segment_covariance(s, e))
}

pub fn evaluate(
    estimated: &[usize],
    data: &DataMatrix,
    truth: &GroundTruth,
    tolerance: usize,
) -> Result<EvalReport> {
    let (tdr, fdr) = compute_tdr_fdr(estimated, &truth.changepoints, tolerance);
    let changepoint_errors = match_changepoints(estimated, &truth.changepoints, tolerance)
        .iter()
        .map(Match::error)
        .collect();
    Ok(EvalReport {
        tdr,
        fdr,
        mae: compute_mae(estimated, data, truth)?,
        changepoint_errors,
        match_tolerance: tolerance,
    })
}
