// SPDX-License-Identifier: MIT OR Apache-2.0

//! Candidate sweep, single-change test and ratio binary segmentation.

use serde::{Deserialize, Serialize};

use crate::rmt::{normal_upper_quantile, AspectRatio, MomentForm, MomentSet};
use crate::spectrum::{ratio_statistic, DataMatrix, ScatterTable};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Significance level before the Bonferroni correction.
    pub alpha: f64,
    /// Minimum segment length `ℓ`; `None` resolves to `max(4p, 30)`.
    pub minseglen: Option<usize>,
    /// Subtract the global column means before anything else.
    pub center_mean: bool,
    /// Raw threshold on the standardized statistic, bypassing the quantile.
    pub threshold_override: Option<f64>,
    pub moments: MomentForm,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            minseglen: None,
            center_mean: true,
            threshold_override: None,
            moments: MomentForm::default(),
        }
    }
}

impl DetectorConfig {
    pub fn default_minseglen(p: usize) -> usize {
        (4 * p).max(30)
    }

    pub fn minseglen_for(&self, p: usize) -> usize {
        self.minseglen.unwrap_or_else(|| Self::default_minseglen(p))
    }

    pub fn with_minseglen(mut self, minseglen: usize) -> Self {
        self.minseglen = Some(minseglen);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_center_mean(mut self, center: bool) -> Self {
        self.center_mean = center;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let l = self.minseglen_for(p);
        if l < p + 1 {
            return Err(Error::Config(format!(
                "minseglen {l} must be at least p + 1 = {} for invertible segment covariances",
                p + 1
            )));
        }
        if let Some(v) = self.threshold_override {
            if !v.is_finite() {
                return Err(Error::Config(format!("threshold override must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Copy with `minseglen` filled in for dimension `p`.
    pub fn resolved(&self, p: usize) -> Result<Self> {
        self.validate(p)?;
        Ok(Self {
            minseglen: Some(self.minseglen_for(p)),
            ..*self
        })
    }

    /// `q(1 − α/n)`, or the override.
    pub fn single_threshold(&self, n: usize) -> Result<f64> {
        match self.threshold_override {
            Some(v) => Ok(v),
            None => normal_upper_quantile(self.alpha / n as f64),
        }
    }

    /// `q(1 − 2α/(n(n+1)))`, or the override.
    pub fn multiple_threshold(&self, n: usize) -> Result<f64> {
        match self.threshold_override {
            Some(v) => Ok(v),
            None => {
                let n = n as f64;
                normal_upper_quantile(2.0 * self.alpha / (n * (n + 1.0)))
            }
        }
    }
}

/// Standardized statistic over the candidates `s + ℓ ..= e − ℓ` of a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub segment: (usize, usize),
    /// First candidate; `values[k]` belongs to `start + k`.
    pub start: usize,
    pub values: Vec<f64>,
    pub argmax: Option<usize>,
    pub max_value: Option<f64>,
}

impl CandidateTrace {
    fn empty(s: usize, e: usize) -> Self {
        Self {
            segment: (s, e),
            start: s,
            values: Vec::new(),
            argmax: None,
            max_value: None,
        }
    }

    fn from_values(s: usize, e: usize, start: usize, values: Vec<f64>) -> Self {
        let mut best: Option<(usize, f64)> = None;
        for (k, &v) in values.iter().enumerate() {
            // strict comparison keeps the smallest index on ties
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((start + k, v));
            }
        }
        Self {
            segment: (s, e),
            start,
            values,
            argmax: best.map(|b| b.0),
            max_value: best.map(|b| b.1),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// `(t, T̃(t))` pairs.
    pub fn candidates(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(move |(k, &v)| (self.start + k, v))
    }

    pub fn value_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(self.start).and_then(|k| self.values.get(k).copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleChange {
    pub changepoint: Option<usize>,
    pub threshold: f64,
    pub trace: CandidateTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub n: usize,
    pub p: usize,
    pub changepoints: Vec<usize>,
    /// One per tested segment, in depth-first (parent, left, right) order.
    pub traces: Vec<CandidateTrace>,
    pub threshold: f64,
    pub config: DetectorConfig,
}

/// Subtracts the column-wise sample mean.
pub fn preprocess_center(data: &DataMatrix) -> DataMatrix {
    let means = data.column_means();
    let mut values = data.values().clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    DataMatrix::from_trusted(values)
}

/// Prepared data for repeated sweeps: centered (if configured) and tabulated.
#[derive(Debug, Clone)]
pub struct Detector {
    table: ScatterTable,
    config: DetectorConfig,
}

impl Detector {
    pub fn new(data: &DataMatrix, config: &DetectorConfig) -> Result<Self> {
        let config = config.resolved(data.p())?;
        let table = if config.center_mean {
            ScatterTable::new(&preprocess_center(data))
        } else {
            ScatterTable::new(data)
        };
        Ok(Self { table, config })
    }

    pub fn n(&self) -> usize {
        self.table.n()
    }

    pub fn p(&self) -> usize {
        self.table.p()
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn minseglen(&self) -> usize {
        self.config.minseglen_for(self.p())
    }

    pub fn table(&self) -> &ScatterTable {
        &self.table
    }

    /// Raw `T(Σ̄(s, t), Σ̄(t, e))`.
    pub fn raw_statistic(&self, s: usize, t: usize, e: usize) -> Result<f64> {
        if !(s < t && t < e && e <= self.n()) {
            return Err(Error::Index { s, t: e, n: self.n() });
        }
        let left = self.table.scatter(s, t)?;
        let right = self.table.scatter(t, e)?;
        ratio_statistic(&left, t - s, &right, e - t).map_err(|err| match err {
            Error::SingularScatter { side } => Error::SingularSegment { s, t, e, side },
            other => other,
        })
    }

    /// Standardized `T̃(t)` for the split of `(s, e)` at `t`, with segment-local `γ`.
    pub fn standardized(&self, s: usize, t: usize, e: usize) -> Result<f64> {
        let raw = self.raw_statistic(s, t, e)?;
        let ratio = AspectRatio::from_sizes(self.p(), t - s, e - t)?;
        Ok(MomentSet::new(&ratio, self.p(), self.config.moments)?.standardize(raw))
    }

    pub fn sweep(&self, s: usize, e: usize) -> Result<CandidateTrace> {
        if s >= e || e > self.n() {
            return Err(Error::Index { s, t: e, n: self.n() });
        }
        let l = self.minseglen();
        if e - s < 2 * l {
            return Ok(CandidateTrace::empty(s, e));
        }
        let (lo, hi) = (s + l, e - l);
        let values = self.evaluate_range(s, e, lo, hi)?;
        Ok(CandidateTrace::from_values(s, e, lo, values))
    }

    #[cfg(feature = "parallel")]
    fn evaluate_range(&self, s: usize, e: usize, lo: usize, hi: usize) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        (lo..=hi)
            .into_par_iter()
            .map(|t| self.standardized(s, t, e))
            .collect()
    }

    #[cfg(not(feature = "parallel"))]
    fn evaluate_range(&self, s: usize, e: usize, lo: usize, hi: usize) -> Result<Vec<f64>> {
        (lo..=hi).map(|t| self.standardized(s, t, e)).collect()
    }

    fn require_length(&self) -> Result<()> {
        let l = self.minseglen();
        if self.n() < 2 * l {
            return Err(Error::Config(format!(
                "series length {} is shorter than 2 * minseglen = {}",
                self.n(),
                2 * l
            )));
        }
        Ok(())
    }

    pub fn detect_single(&self) -> Result<SingleChange> {
        self.require_length()?;
        let threshold = self.config.single_threshold(self.n())?;
        let trace = self.sweep(0, self.n())?;
        let changepoint = match (trace.argmax, trace.max_value) {
            (Some(t), Some(v)) if v > threshold => Some(t),
            _ => None,
        };
        Ok(SingleChange {
            changepoint,
            threshold,
            trace,
        })
    }

    pub fn binseg(&self) -> Result<Segmentation> {
        self.require_length()?;
        let threshold = self.config.multiple_threshold(self.n())?;
        let (mut changepoints, traces) = self.split(0, self.n(), threshold)?;
        changepoints.sort_unstable();
        Ok(Segmentation {
            n: self.n(),
            p: self.p(),
            changepoints,
            traces,
            threshold,
            config: self.config,
        })
    }

    fn split(&self, s: usize, e: usize, threshold: f64) -> Result<(Vec<usize>, Vec<CandidateTrace>)> {
        let trace = self.sweep(s, e)?;
        let cut = match (trace.argmax, trace.max_value) {
            (Some(t), Some(v)) if v > threshold => Some(t),
            _ => None,
        };
        let mut traces = vec![trace];
        let Some(t) = cut else {
            return Ok((Vec::new(), traces));
        };
        let (left, right) = join(|| self.split(s, t, threshold), || self.split(t, e, threshold));
        let (lc, lt) = left?;
        let (rc, rt) = right?;
        let mut changepoints = lc;
        changepoints.push(t);
        changepoints.extend(rc);
        traces.extend(lt);
        traces.extend(rt);
        Ok((changepoints, traces))
    }
}

#[cfg(feature = "parallel")]
fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA,
    B: FnOnce() -> RB,
{
    (a(), b())
}

pub fn sweep(data: &DataMatrix, s: usize, e: usize, config: &DetectorConfig) -> Result<CandidateTrace> {
    Detector::new(data, config)?.sweep(s, e)
}

pub fn detect_single(data: &DataMatrix, config: &DetectorConfig) -> Result<SingleChange> {
    Detector::new(data, config)?.detect_single()
}

pub fn ratio_binseg(data: &DataMatrix, config: &DetectorConfig) -> Result<Segmentation> {
    Detector::new(data, config)?.binseg()
}
