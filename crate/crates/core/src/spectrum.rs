// SPDX-License-Identifier: MIT OR Apache-2.0

//! Segment scatter bookkeeping and the ratio-matrix eigenvalue statistic.
//!
//! Segments use half-open row ranges: `(s, t)` covers rows `s..t` in 0-based
//! indexing, i.e. observations `s+1..=t` when counting from one. A changepoint
//! `τ` therefore splits a segment `(s, e)` into `(s, τ)` and `(τ, e)`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, ScatterSide};

/// Eigenvalues of the reduced ratio matrix below this are treated as a
/// singular scatter rather than clamped.
pub const SINGULAR_EIGENVALUE: f64 = 1e-12;

/// An `n × p` observation matrix, one row per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "data matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        for col in 0..values.ncols() {
            for row in 0..values.nrows() {
                if !values[(row, col)].is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
            }
        }
        Ok(Self { values })
    }

    /// Builds from a row-major buffer of `n * p` values.
    pub fn from_row_major(n: usize, p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::InvalidInput(format!(
                "expected {} values for a {n}x{p} matrix, got {}",
                n * p,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, p, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::InvalidInput(format!(
                "row {i} has {} columns, expected {p}",
                r.len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), p, &flat)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Rows in reverse time order.
    pub fn reversed(&self) -> Self {
        let n = self.n();
        let values = DMatrix::from_fn(n, self.p(), |i, j| self.values[(n - 1 - i, j)]);
        Self { values }
    }

    /// Maps every observation `x ↦ Mx`, i.e. returns `X·Mᵀ`.
    pub fn transformed(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.ncols() != self.p() {
            return Err(Error::InvalidInput(format!(
                "transform has {} columns, data has {}",
                m.ncols(),
                self.p()
            )));
        }
        Self::new(&self.values * m.transpose())
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.values * c)
    }

    /// Rows `s..t` as a new matrix.
    pub fn slice_rows(&self, s: usize, t: usize) -> Result<Self> {
        if s >= t || t > self.n() {
            return Err(Error::Index { s, t, n: self.n() });
        }
        Self::new(self.values.rows(s, t - s).into_owned())
    }

    /// Column-wise sample mean.
    pub fn column_means(&self) -> DVector<f64> {
        let n = self.n() as f64;
        DVector::from_iterator(
            self.p(),
            self.values.column_iter().map(|c| c.iter().sum::<f64>() / n),
        )
    }

    pub(crate) fn from_trusted(values: DMatrix<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }
}

/// Prefix sums of outer products, `prefix[t] = Σ_{i<t} x_i x_iᵀ`.
///
/// Only the upper triangle is stored. Prefixes are accumulated with Kahan
/// compensation, so a segment extracted as a difference of two prefixes
/// carries an absolute error of order `ε·‖prefix[t]‖` rather than `ε·t·‖·‖`.
#[derive(Debug, Clone)]
pub struct ScatterTable {
    n: usize,
    p: usize,
    packed: Vec<f64>,
}

fn packed_len(p: usize) -> usize {
    p * (p + 1) / 2
}

impl ScatterTable {
    pub fn new(data: &DataMatrix) -> Self {
        let (n, p) = (data.n(), data.p());
        let m = packed_len(p);
        let mut packed = vec![0.0; (n + 1) * m];
        let mut sum = vec![0.0; m];
        let mut comp = vec![0.0; m];
        let mut row = vec![0.0; p];
        for t in 0..n {
            for (j, r) in row.iter_mut().enumerate() {
                *r = data.values[(t, j)];
            }
            let mut k = 0;
            for i in 0..p {
                for j in i..p {
                    let y = row[i] * row[j] - comp[k];
                    let s = sum[k] + y;
                    comp[k] = (s - sum[k]) - y;
                    sum[k] = s;
                    k += 1;
                }
            }
            packed[(t + 1) * m..(t + 2) * m].copy_from_slice(&sum);
        }
        Self { n, p, packed }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    fn packed_at(&self, t: usize) -> &[f64] {
        let m = packed_len(self.p);
        &self.packed[t * m..(t + 1) * m]
    }

    fn unpack(&self, f: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let p = self.p;
        let mut out = DMatrix::zeros(p, p);
        let mut k = 0;
        for i in 0..p {
            for j in i..p {
                let v = f(k);
                out[(i, j)] = v;
                out[(j, i)] = v;
                k += 1;
            }
        }
        out
    }

    /// `Σ_{i<t} x_i x_iᵀ` for `t` in `0..=n`.
    pub fn prefix(&self, t: usize) -> Result<DMatrix<f64>> {
        if t > self.n {
            return Err(Error::Index { s: 0, t, n: self.n });
        }
        let a = self.packed_at(t);
        Ok(self.unpack(|k| a[k]))
    }

    /// Unnormalized scatter of rows `s..t`.
    pub fn scatter(&self, s: usize, t: usize) -> Result<DMatrix<f64>> {
        if s >= t || t > self.n {
            return Err(Error::Index { s, t, n: self.n });
        }
        let hi = self.packed_at(t);
        let lo = self.packed_at(s);
        Ok(self.unpack(|k| hi[k] - lo[k]))
    }

    /// Sample second-moment matrix `Σ̄(s, t) = scatter(s, t) / (t − s)`.
    pub fn segment_covariance(&self, s: usize, t: usize) -> Result<DMatrix<f64>> {
        let len = t.saturating_sub(s) as f64;
        Ok(self.scatter(s, t)? / len)
    }
}

pub fn build_scatter_table(data: &DataMatrix) -> ScatterTable {
    ScatterTable::new(data)
}

pub fn segment_covariance(table: &ScatterTable, s: usize, t: usize) -> Result<DMatrix<f64>> {
    table.segment_covariance(s, t)
}

/// Descending eigenvalues of `Σ̄₂⁻¹Σ̄₁` together with the two sample sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSpectrum {
    eigenvalues: Vec<f64>,
    n1: usize,
    n2: usize,
}

impl RatioSpectrum {
    /// Wraps a known spectrum. Values are sorted into descending order.
    pub fn new(mut eigenvalues: Vec<f64>, n1: usize, n2: usize) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidInput("empty spectrum".into()));
        }
        if let Some(&bad) = eigenvalues.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain {
                value: bad,
                domain: "ratio eigenvalues (0, inf)",
            });
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(Self {
            eigenvalues,
            n1,
            n2,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn statistic(&self) -> f64 {
        statistic_t(self)
    }
}

/// Eigenvalues of `R(Σ̄₁, Σ̄₂) = Σ̄₂⁻¹Σ̄₁` with `Σ̄₁ = a_scatter/n1` and
/// `Σ̄₂ = b_scatter/n2`.
///
/// Solved as the symmetric-definite problem `Σ̄₁v = λΣ̄₂v`: with `Σ̄₂ = LLᵀ`
/// the spectrum is that of the symmetric matrix `L⁻¹Σ̄₁L⁻ᵀ`, so it is real.
pub fn ratio_spectrum(
    a_scatter: &DMatrix<f64>,
    n1: usize,
    b_scatter: &DMatrix<f64>,
    n2: usize,
) -> Result<RatioSpectrum> {
    let p = a_scatter.nrows();
    if a_scatter.shape() != (p, p) || b_scatter.shape() != (p, p) || p == 0 {
        return Err(Error::InvalidInput(format!(
            "scatters must be square and equal-sized, got {:?} and {:?}",
            a_scatter.shape(),
            b_scatter.shape()
        )));
    }
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidInput("segment lengths must be positive".into()));
    }
    let mut eigenvalues = reduced_eigenvalues(a_scatter, n1, b_scatter, n2)?;
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(RatioSpectrum {
        eigenvalues,
        n1,
        n2,
    })
}

fn reduced_eigenvalues(
    a_scatter: &DMatrix<f64>,
    n1: usize,
    b_scatter: &DMatrix<f64>,
    n2: usize,
) -> Result<Vec<f64>> {
    let denominator = b_scatter / n2 as f64;
    let numerator = a_scatter / n1 as f64;

    let chol = denominator.cholesky().ok_or(Error::SingularScatter {
        side: ScatterSide::Denominator,
    })?;
    let l = chol.l();
    let (lo, hi) = l
        .diagonal()
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if !(lo > 0.0) || (lo / hi).powi(2) < SINGULAR_EIGENVALUE {
        return Err(Error::SingularScatter {
            side: ScatterSide::Denominator,
        });
    }

    // C = L⁻¹ Σ̄₁ L⁻ᵀ, built from two triangular solves.
    let half = l
        .solve_lower_triangular(&numerator)
        .ok_or(Error::SingularScatter {
            side: ScatterSide::Denominator,
        })?;
    let reduced = l
        .solve_lower_triangular(&half.transpose())
        .ok_or(Error::SingularScatter {
            side: ScatterSide::Denominator,
        })?;
    let reduced = (&reduced + reduced.transpose()) * 0.5;

    let eigenvalues: Vec<f64> = reduced.symmetric_eigenvalues().iter().copied().collect();
    if eigenvalues
        .iter()
        .any(|v| !v.is_finite() || *v < SINGULAR_EIGENVALUE)
    {
        return Err(Error::SingularScatter {
            side: ScatterSide::Numerator,
        });
    }
    Ok(eigenvalues)
}

/// `T = Σ_j (1 − λ_j)² + (1 − λ_j⁻¹)²`.
pub fn statistic_t(spectrum: &RatioSpectrum) -> f64 {
    spectrum
        .eigenvalues
        .iter()
        .map(|&l| (1.0 - l).powi(2) + (1.0 - 1.0 / l).powi(2))
        .sum()
}

/// `T` for the split of two scatters, skipping the sort.
pub fn ratio_statistic(
    a_scatter: &DMatrix<f64>,
    n1: usize,
    b_scatter: &DMatrix<f64>,
    n2: usize,
) -> Result<f64> {
    let eig = reduced_eigenvalues(a_scatter, n1, b_scatter, n2)?;
    Ok(eig
        .iter()
        .map(|&l| (1.0 - l).powi(2) + (1.0 - 1.0 / l).powi(2))
        .sum())
}
