// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded scenario generators.
//!
//! Every draw comes from ChaCha20 keyed by [`seed_for`] (noise) or
//! [`covariance_seed`] (covariance sequences), one stream per purpose or
//! segment. The noise seed depends on `(n, p, rep)` only, so specs that differ
//! in `delta`, `phi` or `dist` transform the same standard-normal array.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rmt::normal_cdf;
use crate::spectrum::DataMatrix;
use crate::{Error, Result};

const NOISE_STREAM: u64 = 0;
const CHI2_STREAM: u64 = 1;
const AR_INIT_STREAM: u64 = 2;
const LOCATION_STREAM: u64 = 3;

const NOISE_TAG: u64 = 0x6e6f_6973_655f_7631;
const COVARIANCE_TAG: u64 = 0x636f_7661_725f_7631;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Null,
    SingleScale,
    Ar1,
    ErrorDist,
    MultiD1,
    MultiD2,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Null => "null",
            Self::SingleScale => "single_scale",
            Self::Ar1 => "ar1",
            Self::ErrorDist => "error_dist",
            Self::MultiD1 => "multi_d1",
            Self::MultiD2 => "multi_d2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDist {
    #[default]
    Normal,
    /// Uniform(−1/2, 1/2).
    Uniform,
    /// Exponential(1), centered.
    Exponential,
    /// Student t with 5 degrees of freedom.
    StudentT5,
}

impl ErrorDist {
    /// Variance of one entry before the scale factor.
    pub fn variance(&self, unit_variance: bool) -> f64 {
        if unit_variance {
            return 1.0;
        }
        match self {
            Self::Normal | Self::Exponential => 1.0,
            Self::Uniform => 1.0 / 12.0,
            Self::StudentT5 => 5.0 / 3.0,
        }
    }
}

fn default_delta() -> f64 {
    1.0
}
fn default_num_changes() -> usize {
    4
}
fn default_kappa() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub dist: ErrorDist,
    #[serde(default = "default_num_changes")]
    pub num_changes: usize,
    #[serde(default = "default_kappa")]
    pub kappa1: f64,
    #[serde(default = "default_kappa")]
    pub kappa2: f64,
    #[serde(default)]
    pub rep: u64,
    /// Rescale uniform and t(5) entries to unit variance.
    #[serde(default)]
    pub unit_variance: bool,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, n: usize, p: usize, rep: u64) -> Self {
        Self {
            kind,
            n,
            p,
            delta: 1.0,
            phi: 0.0,
            dist: ErrorDist::Normal,
            num_changes: default_num_changes(),
            kappa1: default_kappa(),
            kappa2: default_kappa(),
            rep,
            unit_variance: false,
        }
    }

    pub fn null(n: usize, p: usize, rep: u64) -> Self {
        Self::new(ScenarioKind::Null, n, p, rep)
    }

    pub fn single_scale(n: usize, p: usize, delta: f64, rep: u64) -> Self {
        Self {
            delta,
            ..Self::new(ScenarioKind::SingleScale, n, p, rep)
        }
    }

    pub fn ar1(n: usize, p: usize, phi: f64, delta: f64, rep: u64) -> Self {
        Self {
            phi,
            delta,
            ..Self::new(ScenarioKind::Ar1, n, p, rep)
        }
    }

    pub fn error_dist(n: usize, p: usize, dist: ErrorDist, delta: f64, rep: u64) -> Self {
        Self {
            dist,
            delta,
            ..Self::new(ScenarioKind::ErrorDist, n, p, rep)
        }
    }

    pub fn multi_d1(n: usize, p: usize, rep: u64) -> Self {
        Self::new(ScenarioKind::MultiD1, n, p, rep)
    }

    pub fn multi_d2(n: usize, p: usize, rep: u64) -> Self {
        Self::new(ScenarioKind::MultiD2, n, p, rep)
    }

    pub fn with_rep(&self, rep: u64) -> Self {
        Self { rep, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.p == 0 {
            return fail(format!("n and p must be positive, got n = {}, p = {}", self.n, self.p));
        }
        if !(self.delta.is_finite() && self.delta >= 1.0) {
            return fail(format!("delta must be a finite value >= 1, got {}", self.delta));
        }
        if !(self.phi >= 0.0 && self.phi < 1.0) {
            return fail(format!("phi must lie in [0, 1), got {}", self.phi));
        }
        let kind = self.kind;
        if self.phi != 0.0 && kind != ScenarioKind::Ar1 {
            return fail(format!("phi is only used by ar1, not {}", kind.name()));
        }
        if self.dist != ErrorDist::Normal && kind != ScenarioKind::ErrorDist {
            return fail(format!("dist is only used by error_dist, not {}", kind.name()));
        }
        match kind {
            ScenarioKind::Null if self.delta != 1.0 => {
                return fail("null scenario requires delta = 1".into());
            }
            ScenarioKind::MultiD1 | ScenarioKind::MultiD2 => {
                if self.delta != 1.0 {
                    return fail(format!("delta is not used by {}", kind.name()));
                }
                if !(self.kappa1 > 0.0 && self.kappa1.is_finite()) {
                    return fail(format!("kappa1 must be positive, got {}", self.kappa1));
                }
                if !(self.kappa2 > 0.0 && self.kappa2.is_finite()) {
                    return fail(format!("kappa2 must be positive, got {}", self.kappa2));
                }
                let spacing = min_spacing(self.n, self.p);
                let needed = (self.num_changes + 1) * spacing;
                if self.n < needed {
                    return fail(format!(
                        "n = {} cannot hold {} changes with spacing {spacing} (needs n >= {needed})",
                        self.n, self.num_changes
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub changepoints: Vec<usize>,
    /// One per segment.
    #[serde(with = "matrix_list")]
    pub covariances: Vec<DMatrix<f64>>,
}

impl GroundTruth {
    /// `Σ` in force at time index `i` (0-based row).
    pub fn covariance_at(&self, i: usize) -> &DMatrix<f64> {
        let k = self.changepoints.partition_point(|&c| c <= i);
        &self.covariances[k]
    }
}

/// Serializes matrices as nested row arrays.
mod matrix_list {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(list: &[DMatrix<f64>], ser: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Vec<f64>>> = list
            .iter()
            .map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect();
        rows.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let rows: Vec<Vec<Vec<f64>>> = Vec::deserialize(de)?;
        rows.into_iter()
            .map(|m| {
                let p = m.len();
                if m.iter().any(|r| r.len() != p) {
                    return Err(D::Error::custom("covariance must be square"));
                }
                let flat: Vec<f64> = m.into_iter().flatten().collect();
                Ok(DMatrix::from_row_slice(p, p, &flat))
            })
            .collect()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn mix(words: &[u64]) -> u64 {
    words.iter().fold(0u64, |h, &w| splitmix64(h ^ splitmix64(w)))
}

/// Noise seed: a hash of `(n, p, rep)` only.
pub fn seed_for(spec: &ScenarioSpec) -> u64 {
    mix(&[NOISE_TAG, spec.n as u64, spec.p as u64, spec.rep])
}

/// Covariance-sequence seed: a hash of `(p, rep)` only.
pub fn covariance_seed(spec: &ScenarioSpec) -> u64 {
    mix(&[COVARIANCE_TAG, spec.p as u64, spec.rep])
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `n × p` standard normals drawn row by row from the noise stream.
pub fn standard_noise(spec: &ScenarioSpec) -> DMatrix<f64> {
    let mut rng = stream(seed_for(spec), NOISE_STREAM);
    let flat: Vec<f64> = (0..spec.n * spec.p).map(|_| StandardNormal.sample(&mut rng)).collect();
    DMatrix::from_row_slice(spec.n, spec.p, &flat)
}

/// First row of the post-change regime.
fn change_row(n: usize) -> usize {
    n / 2
}

fn scale_tail(x: &mut DMatrix<f64>, from: usize, delta: f64) {
    if delta != 1.0 {
        x.rows_mut(from, x.nrows() - from).scale_mut(delta);
    }
}

fn single_truth(n: usize, p: usize, var: f64, delta: f64) -> GroundTruth {
    let base = DMatrix::identity(p, p) * var;
    if delta == 1.0 {
        GroundTruth {
            changepoints: Vec::new(),
            covariances: vec![base],
        }
    } else {
        GroundTruth {
            changepoints: vec![change_row(n)],
            covariances: vec![base.clone(), base * (delta * delta)],
        }
    }
}

fn require(spec: &ScenarioSpec, kinds: &[ScenarioKind]) -> Result<()> {
    spec.validate()?;
    if !kinds.contains(&spec.kind) {
        return Err(Error::Config(format!("generator does not handle kind {}", spec.kind.name())));
    }
    Ok(())
}

pub fn gen_single_scale(spec: &ScenarioSpec) -> Result<(DataMatrix, GroundTruth)> {
    require(spec, &[ScenarioKind::Null, ScenarioKind::SingleScale])?;
    let mut x = standard_noise(spec);
    scale_tail(&mut x, change_row(spec.n), spec.delta);
    Ok((DataMatrix::new(x)?, single_truth(spec.n, spec.p, 1.0, spec.delta)))
}

/// `X_i = φX_{i−1} + s_i ε_i`, with `s_i = δ` from row `n/2` on and the row
/// before the first drawn from the stationary law `N(0, I/(1−φ²))`.
///
/// The truth covariances are the stationary marginals of the two regimes.
pub fn gen_ar1(spec: &ScenarioSpec) -> Result<(DataMatrix, GroundTruth)> {
    require(spec, &[ScenarioKind::Ar1])?;
    let (n, p, phi) = (spec.n, spec.p, spec.phi);
    let eps = standard_noise(spec);
    let mut init_rng = stream(seed_for(spec), AR_INIT_STREAM);
    let stationary = 1.0 / (1.0 - phi * phi).sqrt();
    let mut prev: Vec<f64> = (0..p)
        .map(|_| {
            let w: f64 = StandardNormal.sample(&mut init_rng);
            stationary * w
        })
        .collect();
    let cut = change_row(n);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let s = if i >= cut { spec.delta } else { 1.0 };
        for j in 0..p {
            let e = if s == 1.0 { eps[(i, j)] } else { s * eps[(i, j)] };
            let v = phi * prev[j] + e;
            x[(i, j)] = v;
            prev[j] = v;
        }
    }
    let var = 1.0 / (1.0 - phi * phi);
    Ok((DataMatrix::new(x)?, single_truth(n, p, var, spec.delta)))
}

/// Entries `F⁻¹(Φ(Z))` of the shared normal array, minus the distribution mean.
///
/// The t(5) entries are `Z·sqrt(5/χ²₅)` with the chi-square draws from their
/// own stream, so they too share `Z` with the other distributions.
pub fn gen_error_dist(spec: &ScenarioSpec) -> Result<(DataMatrix, GroundTruth)> {
    require(spec, &[ScenarioKind::ErrorDist])?;
    let mut x = standard_noise(spec);
    let unit = spec.unit_variance;
    match spec.dist {
        ErrorDist::Normal => {}
        ErrorDist::Uniform => {
            let scale = if unit { 12f64.sqrt() } else { 1.0 };
            x.apply(|z| *z = scale * (normal_cdf(*z) - 0.5));
        }
        ErrorDist::Exponential => {
            x.apply(|z| {
                // Φ(−z) is uniform; take whichever tail keeps the log accurate
                let upper = normal_cdf(-*z);
                let e = if upper > 0.5 {
                    -(-normal_cdf(*z)).ln_1p()
                } else {
                    -upper.ln()
                };
                *z = e - 1.0;
            });
        }
        ErrorDist::StudentT5 => {
            let chi2 = ChiSquared::new(5.0).expect("valid degrees of freedom");
            let mut rng = stream(seed_for(spec), CHI2_STREAM);
            let scale = if unit { (3.0f64 / 5.0).sqrt() } else { 1.0 };
            // row-major to match the noise layout
            for i in 0..spec.n {
                for j in 0..spec.p {
                    let c: f64 = chi2.sample(&mut rng);
                    x[(i, j)] *= scale * (5.0 / c).sqrt();
                }
            }
        }
    }
    scale_tail(&mut x, change_row(spec.n), spec.delta);
    let var = spec.dist.variance(unit);
    Ok((DataMatrix::new(x)?, single_truth(spec.n, spec.p, var, spec.delta)))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of `Q` signed so that `diag(R) > 0`.
pub fn haar_orthogonal<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let flat: Vec<f64> = (0..p * p).map(|_| StandardNormal.sample(rng)).collect();
    let qr = DMatrix::from_row_slice(p, p, &flat).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn conjugate(rotation: &DMatrix<f64>, eigenvalues: &[f64]) -> DMatrix<f64> {
    let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
    let s = rotation.transpose() * lambda * rotation;
    (&s + s.transpose()) * 0.5
}

fn initial_eigenvalues<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(0.1..10.0)).collect()
}

/// Eigenvalue sequence for the `d1` mechanism; segment `k` draws from stream `k`.
pub fn d1_eigenvalues(p: usize, num_segments: usize, kappa1: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(num_segments);
    for k in 0..num_segments {
        let mut rng = stream(seed, k as u64);
        let next = match out.last() {
            None => initial_eigenvalues(p, &mut rng),
            Some(prev) => {
                let mut lam: Vec<f64> = prev
                    .iter()
                    .map(|&l| rng.random_range((l - kappa1).max(0.1)..l + kappa1))
                    .collect();
                let forced = rng.random_range(0..p);
                lam[forced] = prev[forced] + kappa1;
                lam
            }
        };
        out.push(next);
    }
    out
}

/// Eigen-multipliers `(1 + u)^{±1}` for one `d2` step, `u` the circular
/// spacings of `p` uniforms on `(0, κ₂p)`.
pub fn d2_multipliers<R: Rng + ?Sized>(p: usize, kappa2: f64, rng: &mut R) -> Vec<f64> {
    let width = kappa2 * p as f64;
    let spacings = loop {
        let mut u: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..width)).collect();
        u.sort_by(f64::total_cmp);
        let mut s: Vec<f64> = u.windows(2).map(|w| w[1] - w[0]).collect();
        s.push(width - (u[p - 1] - u[0]));
        if s.iter().all(|&v| v > 0.0) {
            break s;
        }
    };
    spacings
        .into_iter()
        .map(|s| if rng.random_bool(0.5) { 1.0 / (1.0 + s) } else { 1.0 + s })
        .collect()
}

/// Eigenvalue sequence for the `d2` mechanism; segment `k` draws from stream `k`.
pub fn d2_eigenvalues(p: usize, num_segments: usize, kappa2: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(num_segments);
    for k in 0..num_segments {
        let mut rng = stream(seed, k as u64);
        let next = match out.last() {
            None => initial_eigenvalues(p, &mut rng),
            Some(prev) => {
                let m = d2_multipliers(p, kappa2, &mut rng);
                prev.iter().zip(&m).map(|(l, m)| l * m).collect()
            }
        };
        out.push(next);
    }
    out
}

/// Rotations come from stream `k` of a seed derived from `seed`, independent
/// of the eigenvalue streams.
fn rotate_all(eigen: &[Vec<f64>], seed: u64) -> Vec<DMatrix<f64>> {
    let rot_seed = mix(&[seed, 0x726f_74]);
    eigen
        .iter()
        .enumerate()
        .map(|(k, lam)| {
            let mut rng = stream(rot_seed, k as u64);
            conjugate(&haar_orthogonal(lam.len(), &mut rng), lam)
        })
        .collect()
}

pub fn gen_covariance_sequence_d1(p: usize, num_segments: usize, kappa1: f64, seed: u64) -> Vec<DMatrix<f64>> {
    rotate_all(&d1_eigenvalues(p, num_segments, kappa1, seed), seed)
}

pub fn gen_covariance_sequence_d2(p: usize, num_segments: usize, kappa2: f64, seed: u64) -> Vec<DMatrix<f64>> {
    rotate_all(&d2_eigenvalues(p, num_segments, kappa2, seed), seed)
}

/// `⌈p·ln n⌉`.
pub fn min_spacing(n: usize, p: usize) -> usize {
    (p as f64 * (n as f64).ln()).ceil() as usize
}

/// Uniform draw over increasing `τ_1 < … < τ_m` with every gap, including
/// `τ_1` and `n − τ_m`, at least `spacing`.
///
/// Bijective with multisets of slack offsets, so a single subset draw gives
/// the uniform law without rejection.
pub fn sample_changepoints<R: Rng + ?Sized>(
    n: usize,
    num_changes: usize,
    spacing: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let needed = (num_changes + 1) * spacing;
    if n < needed {
        return Err(Error::Config(format!(
            "n = {n} cannot hold {num_changes} changes with spacing {spacing}"
        )));
    }
    if num_changes == 0 {
        return Ok(Vec::new());
    }
    let slack = n - needed;
    let mut picks = index::sample(rng, slack + num_changes, num_changes).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(k, w)| (k + 1) * spacing + (w - k))
        .collect())
}

pub fn gen_multi(spec: &ScenarioSpec) -> Result<(DataMatrix, GroundTruth)> {
    require(spec, &[ScenarioKind::MultiD1, ScenarioKind::MultiD2])?;
    let (n, p) = (spec.n, spec.p);
    let mut loc_rng = stream(seed_for(spec), LOCATION_STREAM);
    let changepoints = sample_changepoints(n, spec.num_changes, min_spacing(n, p), &mut loc_rng)?;
    let cov_seed = covariance_seed(spec);
    let segments = spec.num_changes + 1;
    let covariances = match spec.kind {
        ScenarioKind::MultiD1 => gen_covariance_sequence_d1(p, segments, spec.kappa1, cov_seed),
        _ => gen_covariance_sequence_d2(p, segments, spec.kappa2, cov_seed),
    };
    let z = standard_noise(spec);
    let mut x = DMatrix::zeros(n, p);
    let mut bounds = vec![0];
    bounds.extend(&changepoints);
    bounds.push(n);
    for (k, w) in bounds.windows(2).enumerate() {
        let chol = covariances[k].clone().cholesky().ok_or_else(|| {
            Error::Config(format!("generated covariance {k} is not positive definite"))
        })?;
        let rows = z.rows(w[0], w[1] - w[0]) * chol.l().transpose();
        x.rows_mut(w[0], w[1] - w[0]).copy_from(&rows);
    }
    Ok((
        DataMatrix::new(x)?,
        GroundTruth {
            changepoints,
            covariances,
        },
    ))
}

pub fn generate(spec: &ScenarioSpec) -> Result<(DataMatrix, GroundTruth)> {
    match spec.kind {
        ScenarioKind::Null | ScenarioKind::SingleScale => gen_single_scale(spec),
        ScenarioKind::Ar1 => gen_ar1(spec),
        ScenarioKind::ErrorDist => gen_error_dist(spec),
        ScenarioKind::MultiD1 | ScenarioKind::MultiD2 => gen_multi(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::ratio_spectrum;

    fn column_variance(x: &DMatrix<f64>, rows: std::ops::Range<usize>, j: usize) -> f64 {
        let len = rows.len() as f64;
        let vals: Vec<f64> = rows.map(|i| x[(i, j)]).collect();
        let m = vals.iter().sum::<f64>() / len;
        vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (len - 1.0)
    }

    fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
        m.clone().symmetric_eigenvalues().iter().copied().collect()
    }

    #[test]
    fn seeds_ignore_parameters_but_not_dims() {
        let a = ScenarioSpec::single_scale(500, 10, 1.1, 3);
        let b = ScenarioSpec::single_scale(500, 10, 1.7, 3);
        let c = ScenarioSpec::error_dist(500, 10, ErrorDist::StudentT5, 1.0, 3);
        assert_eq!(seed_for(&a), seed_for(&b));
        assert_eq!(seed_for(&a), seed_for(&c));
        assert_ne!(seed_for(&a), seed_for(&ScenarioSpec::single_scale(501, 10, 1.1, 3)));
        assert_ne!(seed_for(&a), seed_for(&ScenarioSpec::single_scale(500, 11, 1.1, 3)));
        assert_ne!(seed_for(&a), seed_for(&a.with_rep(4)));
        let d = ScenarioSpec::multi_d2(2000, 30, 1);
        let e = ScenarioSpec::multi_d2(3000, 30, 1);
        assert_eq!(covariance_seed(&d), covariance_seed(&e));
        assert_ne!(seed_for(&d), seed_for(&e));
        assert_ne!(covariance_seed(&d), covariance_seed(&d.with_rep(2)));
    }

    #[test]
    fn validation_per_kind() {
        assert!(ScenarioSpec::single_scale(100, 3, 0.9, 0).validate().is_err());
        assert!(ScenarioSpec::ar1(100, 3, 1.0, 1.0, 0).validate().is_err());
        let mut s = ScenarioSpec::single_scale(100, 3, 1.2, 0);
        s.phi = 0.3;
        assert!(s.validate().is_err());
        let mut s = ScenarioSpec::null(100, 3, 0);
        s.dist = ErrorDist::Uniform;
        assert!(s.validate().is_err());
        let mut s = ScenarioSpec::null(100, 3, 0);
        s.delta = 1.5;
        assert!(s.validate().is_err());
        assert!(ScenarioSpec::multi_d1(200, 30, 0).validate().is_err());
        assert!(ScenarioSpec::multi_d1(2000, 30, 0).validate().is_ok());
        let mut s = ScenarioSpec::multi_d2(2000, 30, 0);
        s.kappa2 = 0.0;
        assert!(s.validate().is_err());
        assert!(matches!(generate(&ScenarioSpec::multi_d1(200, 30, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn spec_json_round_trip_and_defaults() {
        let spec: ScenarioSpec = serde_json::from_str(r#"{"kind":"multi_d2","n":2000,"p":30}"#).unwrap();
        assert_eq!(spec, ScenarioSpec::multi_d2(2000, 30, 0));
        let full = ScenarioSpec::error_dist(400, 5, ErrorDist::StudentT5, 1.3, 7);
        let text = serde_json::to_string(&full).unwrap();
        assert!(text.contains(r#""dist":"student_t5""#));
        assert!(text.contains(r#""kind":"error_dist""#));
        assert_eq!(serde_json::from_str::<ScenarioSpec>(&text).unwrap(), full);
    }

    #[test]
    fn null_has_empty_truth() {
        let (data, truth) = generate(&ScenarioSpec::null(300, 4, 0)).unwrap();
        assert_eq!(data.n(), 300);
        assert!(truth.changepoints.is_empty());
        assert_eq!(truth.covariances.len(), 1);
        let (_, truth) = generate(&ScenarioSpec::single_scale(300, 4, 1.0, 0)).unwrap();
        assert!(truth.changepoints.is_empty());
    }

    #[test]
    fn single_scale_second_moments() {
        let (n, p) = (4000, 6);
        let (data, truth) = generate(&ScenarioSpec::single_scale(n, p, 1.2, 1)).unwrap();
        assert_eq!(truth.changepoints, vec![2000]);
        assert!((truth.covariances[1][(0, 0)] - 1.44).abs() < 1e-12);
        let x = data.values();
        // SE of a sample variance is about σ²·sqrt(2/(m−1))
        let se = (2.0f64 / 1999.0).sqrt();
        for j in 0..p {
            assert!((column_variance(x, 0..2000, j) - 1.0).abs() < 3.0 * se);
            assert!((column_variance(x, 2000..n, j) - 1.44).abs() < 3.0 * 1.44 * se);
        }
    }

    #[test]
    fn first_halves_are_shared() {
        let (a, _) = generate(&ScenarioSpec::single_scale(400, 5, 1.05, 2)).unwrap();
        let (b, _) = generate(&ScenarioSpec::single_scale(400, 5, 1.1, 2)).unwrap();
        assert_eq!(a.values().rows(0, 200), b.values().rows(0, 200));
        assert_ne!(a.values().rows(200, 200), b.values().rows(200, 200));
    }

    #[test]
    fn generation_is_deterministic() {
        for spec in [
            ScenarioSpec::ar1(300, 4, 0.5, 1.3, 5),
            ScenarioSpec::error_dist(300, 4, ErrorDist::StudentT5, 1.0, 5),
            ScenarioSpec::multi_d1(1000, 5, 5),
            ScenarioSpec::multi_d2(1000, 5, 5),
        ] {
            let (a, ta) = generate(&spec).unwrap();
            let (b, tb) = generate(&spec).unwrap();
            assert_eq!(a, b);
            assert_eq!(ta, tb);
        }
    }

    #[test]
    fn ar1_with_zero_phi_is_single_scale() {
        let (a, ta) = generate(&ScenarioSpec::ar1(500, 4, 0.0, 1.4, 9)).unwrap();
        let (b, tb) = generate(&ScenarioSpec::single_scale(500, 4, 1.4, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn ar1_lag_one_autocorrelation() {
        let (n, phi) = (2000, 0.6);
        let (data, truth) = generate(&ScenarioSpec::ar1(n, 5, phi, 1.0, 4)).unwrap();
        assert!(truth.changepoints.is_empty());
        let x = data.values();
        // SE of the lag-1 sample autocorrelation ≈ sqrt((1−φ²)/n)
        let se = ((1.0 - phi * phi) / n as f64).sqrt();
        for j in 0..5 {
            let col: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let c0: f64 = col.iter().map(|v| (v - m).powi(2)).sum();
            let c1: f64 = col.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
            assert!((c1 / c0 - phi).abs() < 3.0 * se, "column {j}: {}", c1 / c0);
        }
    }

    #[test]
    fn normal_error_dist_matches_single_scale() {
        let (a, _) = generate(&ScenarioSpec::error_dist(300, 3, ErrorDist::Normal, 1.2, 1)).unwrap();
        let (b, _) = generate(&ScenarioSpec::single_scale(300, 3, 1.2, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn error_dist_moments() {
        let (n, p) = (20_000, 3);
        for (dist, var, range) in [
            (ErrorDist::Uniform, 1.0 / 12.0, Some(0.5)),
            (ErrorDist::Exponential, 1.0, None),
            (ErrorDist::StudentT5, 5.0 / 3.0, None),
        ] {
            let (data, truth) = generate(&ScenarioSpec::error_dist(n, p, dist, 1.0, 3)).unwrap();
            assert_eq!(truth.covariances[0][(0, 0)], var);
            let x = data.values();
            let mean = x.mean();
            assert!(mean.abs() < 0.05, "{dist:?} mean {mean}");
            let v = column_variance(x, 0..n, 0);
            assert!((v - var).abs() < 0.1 * var, "{dist:?} variance {v}");
            if let Some(r) = range {
                assert!(x.iter().all(|v| v.abs() < r));
            }
        }
        let (data, _) = generate(&ScenarioSpec::error_dist(n, p, ErrorDist::Exponential, 1.0, 3)).unwrap();
        assert!(data.values().iter().all(|v| *v > -1.0));
        let mut unit = ScenarioSpec::error_dist(n, p, ErrorDist::Uniform, 1.0, 3);
        unit.unit_variance = true;
        let (data, truth) = generate(&unit).unwrap();
        assert_eq!(truth.covariances[0][(0, 0)], 1.0);
        assert!((column_variance(data.values(), 0..n, 1) - 1.0).abs() < 0.05);
    }

    #[test]
    fn haar_rotations_are_orthogonal() {
        let mut rng = stream(11, 0);
        for p in [1, 2, 5, 20] {
            let q = haar_orthogonal(p, &mut rng);
            let err = (q.transpose() * &q - DMatrix::identity(p, p)).amax();
            assert!(err < 1e-10);
            assert!((q.determinant().abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn haar_first_entry_is_symmetric_in_sign() {
        // sign correction removes the QR bias toward a positive leading column
        let mut rng = stream(12, 0);
        let positive = (0..2000).filter(|_| haar_orthogonal(3, &mut rng)[(0, 0)] > 0.0).count();
        assert!((positive as f64 - 1000.0).abs() < 4.0 * 22.4, "{positive}");
    }

    #[test]
    fn d1_sequence_properties() {
        let (p, kappa) = (10, 2.0);
        for seed in 0..20 {
            let eig = d1_eigenvalues(p, 5, kappa, seed);
            for (k, lam) in eig.iter().enumerate() {
                assert!(lam.iter().all(|&l| l >= 0.1));
                if k > 0 {
                    let forced = lam.iter().zip(&eig[k - 1]).filter(|(a, b)| **a == **b + kappa).count();
                    assert!(forced >= 1);
                    let d: f64 = lam.iter().zip(&eig[k - 1]).map(|(a, b)| (a - b).powi(2)).sum();
                    assert!(d >= kappa * kappa);
                }
            }
            let covs = gen_covariance_sequence_d1(p, 5, kappa, seed);
            assert_eq!(covs, gen_covariance_sequence_d1(p, 5, kappa, seed));
            for (c, lam) in covs.iter().zip(&eig) {
                assert!(c.clone().cholesky().is_some());
                let mut got = sym_eigenvalues(c);
                got.sort_by(f64::total_cmp);
                let mut want = lam.clone();
                want.sort_by(f64::total_cmp);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-9 * w.max(1.0));
                }
                assert!(got[0] >= 0.1 - 1e-9);
            }
            for w in covs.windows(2) {
                let d1: f64 = sym_eigenvalues(&(&w[1] - &w[0])).iter().map(|l| l * l).sum();
                assert!(d1 >= 0.0);
            }
        }
    }

    #[test]
    fn d2_multipliers_never_one() {
        let mut rng = stream(13, 0);
        for p in [1, 2, 10, 30] {
            for _ in 0..50 {
                let m = d2_multipliers(p, 2.0, &mut rng);
                assert_eq!(m.len(), p);
                assert!(m.iter().all(|&v| v > 0.0 && v != 1.0));
                // the spacings telescope to κ₂p
                let total: f64 = m.iter().map(|&v| if v > 1.0 { v - 1.0 } else { 1.0 / v - 1.0 }).sum();
                assert!((total - 2.0 * p as f64).abs() < 1e-9 * p as f64);
            }
        }
    }

    #[test]
    fn d2_consecutive_distance_is_positive() {
        for seed in 0..100 {
            let covs = gen_covariance_sequence_d2(5, 3, 2.0, seed);
            for w in covs.windows(2) {
                assert!(w[0].clone().cholesky().is_some() && w[1].clone().cholesky().is_some());
                // λ(Σ_k⁻¹Σ_{k+1}) through the same reduction the detector uses
                let spec = ratio_spectrum(&w[1], 1, &w[0], 1).unwrap();
                let d2: f64 = spec.eigenvalues().iter().map(|l| (l * l - 1.0).powi(2)).sum();
                assert!(d2 > 0.0);
            }
        }
    }

    #[test]
    fn changepoint_sampling_respects_spacing_and_is_uniform() {
        assert_eq!(min_spacing(2000, 30), 229);
        let mut rng = stream(14, 0);
        for _ in 0..200 {
            let cps = sample_changepoints(2000, 4, 229, &mut rng).unwrap();
            let mut b = vec![0];
            b.extend(&cps);
            b.push(2000);
            assert!(b.windows(2).all(|w| w[1] - w[0] >= 229));
        }
        // the tight case has a single configuration
        assert_eq!(sample_changepoints(50, 4, 10, &mut rng).unwrap(), vec![10, 20, 30, 40]);
        assert!(sample_changepoints(49, 4, 10, &mut rng).is_err());
        // n = 7, m = 2, spacing 2: slack 1 gives C(3, 2) = 3 configurations
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..3000 {
            *counts.entry(sample_changepoints(7, 2, 2, &mut rng).unwrap()).or_insert(0) += 1;
        }
        assert_eq!(counts.keys().cloned().collect::<Vec<_>>(), vec![vec![2, 4], vec![2, 5], vec![3, 5]]);
        assert!(counts.values().all(|&c| (c as f64 - 1000.0).abs() < 120.0));
    }

    #[test]
    fn multi_truth_shape_and_shared_covariances() {
        let spec = ScenarioSpec::multi_d2(2000, 30, 0);
        let (data, truth) = generate(&spec).unwrap();
        assert_eq!(data.p(), 30);
        assert_eq!(truth.changepoints.len(), 4);
        assert_eq!(truth.covariances.len(), 5);
        let mut b = vec![0];
        b.extend(&truth.changepoints);
        b.push(2000);
        assert!(b.windows(2).all(|w| w[1] - w[0] >= 229));
        let (_, other) = generate(&ScenarioSpec::multi_d2(2500, 30, 0)).unwrap();
        assert_eq!(truth.covariances, other.covariances);
    }

    #[test]
    fn segment_covariance_converges_to_truth() {
        // one long segment per regime: n = 4·spacing + slack
        let mut spec = ScenarioSpec::multi_d1(10_000, 10, 0);
        spec.num_changes = 1;
        let (data, truth) = generate(&spec).unwrap();
        let t = truth.changepoints[0];
        let table = crate::spectrum::ScatterTable::new(&data);
        for (k, (s, e)) in [(0, t), (t, 10_000)].into_iter().enumerate() {
            if e - s < 2000 {
                continue;
            }
            let est = table.segment_covariance(s, s + 2000).unwrap();
            let scale = truth.covariances[k].amax();
            assert!((est - &truth.covariances[k]).amax() <= 0.2 * scale);
        }
        assert_eq!(truth.covariance_at(t - 1), &truth.covariances[0]);
        assert_eq!(truth.covariance_at(t), &truth.covariances[1]);
    }

    #[test]
    fn truth_json_round_trip() {
        let (_, truth) = generate(&ScenarioSpec::multi_d1(1000, 3, 2)).unwrap();
        let text = serde_json::to_string(&truth).unwrap();
        let back: GroundTruth = serde_json::from_str(&text).unwrap();
        assert_eq!(back, truth);
    }
}
