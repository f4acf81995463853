// SPDX-License-Identifier: MIT OR Apache-2.0

//! Changepoint detection in the covariance of moderate-dimensional time series.
//!
//! Two adjacent segments are compared through the eigenvalues `λ_j` of the
//! ratio matrix `Σ̄₂⁻¹Σ̄₁` of their sample covariances, summarized by
//!
//! ```text
//! T = Σ_j (1 − λ_j)² + (1 − 1/λ_j)²
//! ```
//!
//! Under the null of no change `T` does not depend on the common covariance,
//! and its fluctuations around `p·∫f* dF_γ` (the centering term given by the
//! limiting spectral distribution of an F-matrix) are asymptotically normal
//! with known moments. The standardized statistic drives a Bonferroni test
//! and a binary segmentation search for multiple changes.
//!
//! Modules, bottom-up:
//!
//! - [`spectrum`]: data, prefix scatter table, ratio eigenvalues, `T`.
//! - [`rmt`]: limiting spectral density, centering integral, asymptotic moments,
//!   normal quantiles.
//! - [`detector`]: candidate sweep, single-change test, binary segmentation.
//! - [`simulate`]: seeded scenario generators.
//! - [`metrics`]: TDR, FDR, MAE against a ground truth.
//!
//! ```
//! use covratio::detector::{ratio_binseg, DetectorConfig};
//! use covratio::simulate::{generate, ScenarioKind, ScenarioSpec};
//!
//! let spec = ScenarioSpec::single_scale(600, 5, 2.0, 0);
//! let (data, truth) = generate(&spec).unwrap();
//! let seg = ratio_binseg(&data, &DetectorConfig::default()).unwrap();
//! assert_eq!(truth.changepoints, vec![300]);
//! assert_eq!(seg.changepoints.len(), 1);
//! assert!(seg.changepoints[0].abs_diff(300) <= 20);
//! # let _ = ScenarioKind::Null;
//! ```

mod error;

pub mod detector;
pub mod metrics;
pub mod rmt;
pub mod simulate;
pub mod spectrum;

pub use error::{Error, Result, ScatterSide};
