// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;

use serde::{Deserialize, Serialize};

/// Which scatter of a two-sample ratio failed to be positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatterSide {
    /// The `A` (left segment) scatter, the numerator of `B⁻¹A`.
    Numerator,
    /// The `B` (right segment) scatter, the one that gets factorized.
    Denominator,
}

impl fmt::Display for ScatterSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScatterSide::Numerator => f.write_str("numerator"),
            ScatterSide::Denominator => f.write_str("denominator"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("segment bounds ({s}, {t}) invalid for series of length {n}")]
    Index { s: usize, t: usize, n: usize },

    #[error("{side} scatter is not positive definite")]
    SingularScatter { side: ScatterSide },

    #[error("{side} scatter of split ({s}, {t}, {e}) is not positive definite")]
    SingularSegment {
        s: usize,
        t: usize,
        e: usize,
        side: ScatterSide,
    },

    #[error("value {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error(
        "quadrature did not converge for gamma = ({gamma1}, {gamma2}): \
         last two estimates {coarse} and {fine} with {nodes} nodes"
    )]
    Quadrature {
        gamma1: f64,
        gamma2: f64,
        coarse: f64,
        fine: f64,
        nodes: usize,
    },

    #[error("asymptotic variance {sigma2} is not positive for gamma = ({gamma1}, {gamma2})")]
    NonPositiveVariance {
        gamma1: f64,
        gamma2: f64,
        sigma2: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularScatter { .. }
                | Error::SingularSegment { .. }
                | Error::Quadrature { .. }
                | Error::NonPositiveVariance { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
