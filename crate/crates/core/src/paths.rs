//! Continuous positive price paths on a discrete time grid: geometric Brownian
//! motion, geometric fractional Brownian motion (exact, by dense Cholesky of the
//! fBm covariance), integrated processes, and Gaussian conditioning of fBm on
//! an observed prefix.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{Cholesky, SymMatrix};
use crate::rng::{self, AUX_STREAM_BASE};

/// Strictly increasing time axis starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return domain("time grid needs at least two points");
        }
        if times[0] != 0.0 {
            return domain(format!("time grid must start at 0, got {}", times[0]));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return domain(format!(
                "time grid must be strictly increasing ({} then {})",
                w[0], w[1]
            ));
        }
        if !times.iter().all(|t| t.is_finite()) {
            return domain("time grid contains non-finite values");
        }
        Ok(Self { times })
    }

    /// `steps + 1` equally spaced points on `[0, horizon]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || steps == 0 {
            return domain("uniform grid needs horizon > 0 and at least one step");
        }
        let mut times: Vec<f64> = (0..=steps)
            .map(|i| horizon * i as f64 / steps as f64)
            .collect();
        times[steps] = horizon;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Exact index of `t` on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
            .ok()
    }
}

/// A strictly positive `dim`-asset path. Values are stored row-major: the
/// prices at grid index `i` are `values[i * dim..(i + 1) * dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub grid: Arc<TimeGrid>,
    pub dim: usize,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: Arc<TimeGrid>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return domain("path dimension must be at least 1");
        }
        if values.len() != grid.len() * dim {
            return domain(format!(
                "path has {} values, expected {} x {}",
                values.len(),
                grid.len(),
                dim
            ));
        }
        if let Some(pos) = values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return domain(format!(
                "path value {} at grid index {} is not strictly positive",
                values[pos],
                pos / dim
            ));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Single-asset value at grid index `i`.
    #[inline]
    pub fn scalar(&self, i: usize) -> f64 {
        self.values[i * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> &[f64] {
        self.at(self.len() - 1)
    }

    /// Prefix of the path up to and including grid index `last`.
    pub fn prefix(&self, last: usize) -> Result<SamplePath> {
        let times = self.grid.times()[..=last].to_vec();
        if times.len() < 2 {
            // a one-point history is representable only as a bare value
            return domain("prefix must contain at least two grid points");
        }
        SamplePath::new(
            Arc::new(TimeGrid::new(times)?),
            self.dim,
            self.values[..(last + 1) * self.dim].to_vec(),
        )
    }
}

/// `Cov(B^H_t, B^H_s) = ½(t^{2H} + s^{2H} − |t−s|^{2H})`.
pub fn fbm_covariance(t: f64, s: f64, hurst: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return domain(format!("hurst must lie in (0, 1), got {hurst}"));
    }
    if !(t >= 0.0) || !(s >= 0.0) {
        return domain(format!("fbm covariance needs t, s >= 0 (got {t}, {s})"));
    }
    Ok(fbm_cov_unchecked(t, s, hurst))
}

#[inline]
fn fbm_cov_unchecked(t: f64, s: f64, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
}

/// Geometric fBm: `S_t = s0 · exp(σ X_t + f_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmSpec {
    pub hurst: f64,
    pub sigma: f64,
    /// Deterministic drift `f_t` sampled on the grid; empty means `f ≡ 0`.
    #[serde(default)]
    pub drift: Vec<f64>,
    pub s0: f64,
}

impl FbmSpec {
    pub fn new(hurst: f64, sigma: f64, s0: f64) -> Result<Self> {
        let spec = Self {
            hurst,
            sigma,
            drift: Vec::new(),
            s0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return domain(format!("hurst must lie in (0, 1), got {}", self.hurst));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return domain(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.s0 > 0.0) {
            return domain(format!("s0 must be > 0, got {}", self.s0));
        }
        Ok(())
    }

    fn drift_at(&self, i: usize) -> f64 {
        self.drift.get(i).copied().unwrap_or(0.0)
    }

    fn check_drift(&self, grid: &TimeGrid) -> Result<()> {
        if !self.drift.is_empty() && self.drift.len() != grid.len() {
            return domain(format!(
                "drift curve has {} samples, grid has {}",
                self.drift.len(),
                grid.len()
            ));
        }
        Ok(())
    }

    /// Log-path value `X_t` recovered from a price.
    pub fn log_state(&self, price: f64, i: usize) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        ((price / self.s0).ln() - self.drift_at(i)) / self.sigma
    }

    fn price(&self, x: f64, i: usize) -> f64 {
        self.s0 * (self.sigma * x + self.drift_at(i)).exp()
    }
}

fn fbm_covariance_matrix(times: &[f64], hurst: f64) -> SymMatrix {
    SymMatrix::from_fn(times.len(), |i, j| fbm_cov_unchecked(times[i], times[j], hurst))
}

/// Reusable exact sampler for geometric fBm on a fixed grid.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    spec: FbmSpec,
    grid: Arc<TimeGrid>,
    chol: Cholesky,
}

impl FbmSampler {
    pub fn new(spec: &FbmSpec, grid: Arc<TimeGrid>) -> Result<Self> {
        spec.validate()?;
        spec.check_drift(&grid)?;
        let cov = fbm_covariance_matrix(&grid.times()[1..], spec.hurst);
        let chol = Cholesky::new(&cov)?;
        Ok(Self {
            spec: spec.clone(),
            grid,
            chol,
        })
    }

    /// Fractional Brownian motion values on the grid (including `X_0 = 0`).
    pub fn sample_fbm<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.chol.n;
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = vec![0.0; n + 1];
        self.chol.mul_lower(&z, &mut x[1..]);
        x
    }

    pub fn sample_path<R: Rng>(&self, rng: &mut R) -> SamplePath {
        let x = self.sample_fbm(rng);
        let values = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| self.spec.price(xi, i))
            .collect();
        SamplePath {
            grid: self.grid.clone(),
            dim: 1,
            values,
        }
    }
}

/// Exact geometric fBm paths, one ChaCha stream per path.
pub fn sample_gfbm(
    spec: &FbmSpec,
    grid: Arc<TimeGrid>,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<SamplePath>> {
    if n_paths == 0 {
        return domain("n_paths must be at least 1");
    }
    let sampler = FbmSampler::new(spec, grid)?;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|p| sampler.sample_path(&mut rng::stream(seed, p as u64)))
        .collect())
}

/// Geometric Brownian motion by exact log increments.
pub fn sample_gbm(
    mu: f64,
    sigma: f64,
    s0: f64,
    grid: Arc<TimeGrid>,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<SamplePath>> {
    sample_multi_gbm(
        &[mu],
        &[sigma],
        &SymMatrix::from_fn(1, |_, _| 1.0),
        &[s0],
        grid,
        n_paths,
        seed,
    )
}

/// Correlated `d`-asset geometric Brownian motion. The correlation matrix may
/// be singular (e.g. perfectly correlated assets).
pub fn sample_multi_gbm(
    mu: &[f64],
    sigma: &[f64],
    corr: &SymMatrix,
    s0: &[f64],
    grid: Arc<TimeGrid>,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<SamplePath>> {
    let d = s0.len();
    if d == 0 || mu.len() != d || sigma.len() != d || corr.n != d {
        return domain("gbm parameter vectors and correlation must share one dimension");
    }
    if n_paths == 0 {
        return domain("n_paths must be at least 1");
    }
    if s0.iter().any(|s| !(*s > 0.0)) {
        return domain("gbm s0 must be > 0");
    }
    if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return domain("gbm sigma must be >= 0");
    }
    for i in 0..d {
        if (corr.get(i, i) - 1.0).abs() > 1e-12 {
            return domain("correlation matrix must have unit diagonal");
        }
    }
    let factor = Cholesky::semidefinite(corr, 1e-12);
    let times = grid.times().to_vec();
    Ok((0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng::stream(seed, p as u64);
            let mut values = Vec::with_capacity(times.len() * d);
            values.extend_from_slice(s0);
            let mut logs: Vec<f64> = s0.iter().map(|s| s.ln()).collect();
            let mut z = vec![0.0; d];
            let mut w = vec![0.0; d];
            for k in 1..times.len() {
                let dt = times[k] - times[k - 1];
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                factor.mul_lower(&z, &mut w);
                for i in 0..d {
                    logs[i] += (mu[i] - 0.5 * sigma[i] * sigma[i]) * dt + sigma[i] * dt.sqrt() * w[i];
                    values.push(logs[i].exp());
                }
            }
            SamplePath {
                grid: grid.clone(),
                dim: d,
                values,
            }
        })
        .collect())
}

/// Brownian-bridge refinement of a single-asset GBM path: inserts the
/// midpoint of every grid interval, conditionally on the coarse values.
pub fn refine_gbm_bridge(path: &SamplePath, sigma: f64, seed: u64, path_id: u64) -> Result<SamplePath> {
    if path.dim != 1 {
        return domain("bridge refinement is implemented for single-asset paths");
    }
    let times = path.grid.times();
    let mut rng = rng::stream(seed, AUX_STREAM_BASE + path_id);
    let mut fine_t = Vec::with_capacity(2 * times.len() - 1);
    let mut fine_v = Vec::with_capacity(2 * times.len() - 1);
    for k in 0..times.len() - 1 {
        let (t0, t1) = (times[k], times[k + 1]);
        let (a, b) = (path.scalar(k).ln(), path.scalar(k + 1).ln());
        let z: f64 = rng.sample(StandardNormal);
        let mid = 0.5 * (a + b) + 0.5 * sigma * (t1 - t0).sqrt() * z;
        fine_t.push(t0);
        fine_v.push(path.scalar(k));
        fine_t.push(0.5 * (t0 + t1));
        fine_v.push(mid.exp());
    }
    fine_t.push(*times.last().unwrap());
    fine_v.push(path.scalar(times.len() - 1));
    SamplePath::new(Arc::new(TimeGrid::new(fine_t)?), 1, fine_v)
}

/// `exp(∫_0^t ln S_u du)` by the cumulative trapezoid rule, coordinatewise.
pub fn integrate_path(path: &SamplePath) -> SamplePath {
    let times = path.grid.times();
    let d = path.dim;
    let mut values = Vec::with_capacity(path.values.len());
    let mut acc = vec![0.0; d];
    values.extend(std::iter::repeat(1.0).take(d));
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        for i in 0..d {
            acc[i] += 0.5 * dt * (path.at(k - 1)[i].ln() + path.at(k)[i].ln());
            values.push(acc[i].exp());
        }
    }
    SamplePath {
        grid: path.grid.clone(),
        dim: d,
        values,
    }
}

/// Conditional law of the remaining log-path given an observed prefix.
#[derive(Debug, Clone)]
pub struct GaussianConditioning {
    pub times: Vec<f64>,
    pub mean_curve: Vec<f64>,
    pub cov_matrix: SymMatrix,
}

/// Precomputed conditioning of fBm on the grid prefix `0..=split`: the
/// regression matrix and the (history-independent) conditional covariance.
#[derive(Debug, Clone)]
pub struct ConditionalFbm {
    spec: FbmSpec,
    grid: Arc<TimeGrid>,
    split: usize,
    /// `Γ_rp Γ_pp^{-1}`, rows = remaining times, cols = observed times > 0.
    regression: Vec<f64>,
    cov: SymMatrix,
    chol: Cholesky,
    /// Jitter added to the prefix covariance, if any.
    pub prefix_jitter: f64,
}

impl ConditionalFbm {
    pub fn new(spec: &FbmSpec, grid: Arc<TimeGrid>, split: usize) -> Result<Self> {
        spec.validate()?;
        spec.check_drift(&grid)?;
        let times = grid.times();
        if split + 1 >= times.len() {
            return domain("conditioning time must be before the horizon");
        }
        let observed: Vec<f64> = times[1..=split].to_vec();
        let remaining: Vec<f64> = times[split + 1..].to_vec();
        let p = observed.len();
        let r = remaining.len();
        let h = spec.hurst;
        let cov_rr = fbm_covariance_matrix(&remaining, h);
        let (regression, cov, prefix_jitter) = if p == 0 {
            (Vec::new(), cov_rr, 0.0)
        } else {
            let cov_pp = fbm_covariance_matrix(&observed, h);
            let pchol = Cholesky::new(&cov_pp)?;
            if pchol.jitter > 0.0 {
                eprintln!(
                    "warning: prefix covariance regularized with jitter {:e}",
                    pchol.jitter
                );
            }
            // regression rows: solve Γ_pp k = Γ_pr[:, j]
            let mut regression = vec![0.0; r * p];
            for (j, &tr) in remaining.iter().enumerate() {
                let col: Vec<f64> = observed.iter().map(|&tp| fbm_cov_unchecked(tr, tp, h)).collect();
                let k = pchol.solve(&col);
                regression[j * p..(j + 1) * p].copy_from_slice(&k);
            }
            let cov = SymMatrix::from_fn(r, |i, j| {
                let cross: f64 = observed
                    .iter()
                    .enumerate()
                    .map(|(q, &tp)| regression[i * p + q] * fbm_cov_unchecked(remaining[j], tp, h))
                    .sum();
                cov_rr.get(i, j) - cross
            });
            (regression, cov, pchol.jitter)
        };
        let chol = Cholesky::new(&cov)?;
        Ok(Self {
            spec: spec.clone(),
            grid,
            split,
            regression,
            cov,
            chol,
            prefix_jitter,
        })
    }

    pub fn split(&self) -> usize {
        self.split
    }

    /// Conditional mean of `X` on the remaining grid given observed `X_1..X_split`.
    pub fn mean(&self, observed_x: &[f64]) -> Vec<f64> {
        let p = self.split;
        let r = self.grid.len() - self.split - 1;
        (0..r)
            .map(|j| {
                self.regression[j * p..(j + 1) * p]
                    .iter()
                    .zip(observed_x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn conditioning(&self, observed_x: &[f64]) -> GaussianConditioning {
        GaussianConditioning {
            times: self.grid.times()[self.split + 1..].to_vec(),
            mean_curve: self.mean(observed_x),
            cov_matrix: self.cov.clone(),
        }
    }

    /// Observed `X_1..X_split` recovered from a price history.
    pub fn observed_from_prices(&self, history: &SamplePath) -> Vec<f64> {
        (1..=self.split)
            .map(|i| self.spec.log_state(history.scalar(i), i))
            .collect()
    }

    /// Draws one continuation and returns the full price path (observed prefix
    /// followed by the simulated suffix).
    pub fn continue_path<R: Rng>(&self, history: &SamplePath, rng: &mut R) -> SamplePath {
        let observed = self.observed_from_prices(history);
        let mean = self.mean(&observed);
        let r = mean.len();
        let z: Vec<f64> = (0..r).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = vec![0.0; r];
        self.chol.mul_lower(&z, &mut x);
        let mut values: Vec<f64> = (0..=self.split).map(|i| history.scalar(i)).collect();
        for j in 0..r {
            let i = self.split + 1 + j;
            values.push(self.spec.price(mean[j] + x[j], i));
        }
        SamplePath {
            grid: self.grid.clone(),
            dim: 1,
            values,
        }
    }
}

/// Exact conditional mean and covariance of the remaining fBm log-path given a
/// price history observed on the leading part of the grid.
pub fn condition_gaussian(
    history: &SamplePath,
    spec: &FbmSpec,
    remaining: &[f64],
) -> Result<GaussianConditioning> {
    let hist_t = history.grid.times();
    let v = *hist_t.last().unwrap();
    if remaining.is_empty() || remaining[0] <= v {
        return domain("remaining grid must be non-empty and strictly after the history");
    }
    let mut times = hist_t.to_vec();
    times.extend_from_slice(remaining);
    let grid = Arc::new(TimeGrid::new(times)?);
    let mut full_spec = spec.clone();
    if !spec.drift.is_empty() && spec.drift.len() != grid.len() {
        return domain("drift curve must cover the history and remaining grid");
    }
    full_spec.drift = spec.drift.clone();
    let cond = ConditionalFbm::new(&full_spec, grid, hist_t.len() - 1)?;
    let observed = cond.observed_from_prices(history);
    Ok(cond.conditioning(&observed))
}

/// Unconditional law of the fBm log-path on `times` (no observed history).
pub fn unconditional_gaussian(spec: &FbmSpec, times: &[f64]) -> Result<GaussianConditioning> {
    spec.validate()?;
    Ok(GaussianConditioning {
        times: times.to_vec(),
        mean_curve: vec![0.0; times.len()],
        cov_matrix: fbm_covariance_matrix(times, spec.hurst),
    })
}

/// Path models understood by the experiment runner and the audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Gbm {
        mu: f64,
        sigma: f64,
        s0: f64,
    },
    Gfbm {
        hurst: f64,
        sigma: f64,
        s0: f64,
        /// Linear drift `f_t = drift_rate · t`.
        #[serde(default)]
        drift_rate: f64,
    },
    /// `s0 · exp(∫ ln(geometric fBm))`: continuously differentiable paths.
    Integrated {
        hurst: f64,
        sigma: f64,
        s0: f64,
    },
    MultiGbm {
        mu: Vec<f64>,
        sigma: Vec<f64>,
        s0: Vec<f64>,
        corr: Vec<Vec<f64>>,
    },
    /// `s0 · e^{rate t}`; violates conditional full support.
    Deterministic {
        s0: f64,
        rate: f64,
    },
    /// Driftless-log GBM frozen forever once it first reaches `barrier`.
    AbsorbedGbm {
        sigma: f64,
        s0: f64,
        barrier: f64,
    },
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::MultiGbm { s0, .. } => s0.len(),
            _ => 1,
        }
    }

    pub fn s0(&self) -> Vec<f64> {
        match self {
            Model::Gbm { s0, .. }
            | Model::Gfbm { s0, .. }
            | Model::Integrated { s0, .. }
            | Model::Deterministic { s0, .. }
            | Model::AbsorbedGbm { s0, .. } => vec![*s0],
            Model::MultiGbm { s0, .. } => s0.clone(),
        }
    }

    pub fn fbm_spec(&self, grid: &TimeGrid) -> Option<FbmSpec> {
        match self {
            Model::Gfbm {
                hurst,
                sigma,
                s0,
                drift_rate,
            } => Some(FbmSpec {
                hurst: *hurst,
                sigma: *sigma,
                s0: *s0,
                drift: if *drift_rate == 0.0 {
                    Vec::new()
                } else {
                    grid.times().iter().map(|t| drift_rate * t).collect()
                },
            }),
            _ => None,
        }
    }

    pub fn sample(&self, grid: Arc<TimeGrid>, n_paths: usize, seed: u64) -> Result<Vec<SamplePath>> {
        match self {
            Model::Gbm { mu, sigma, s0 } => sample_gbm(*mu, *sigma, *s0, grid, n_paths, seed),
            Model::Gfbm { .. } => {
                let spec = self.fbm_spec(&grid).unwrap();
                sample_gfbm(&spec, grid, n_paths, seed)
            }
            Model::Integrated { hurst, sigma, s0 } => {
                let inner = FbmSpec::new(*hurst, *sigma, 1.0)?;
                let paths = sample_gfbm(&inner, grid, n_paths, seed)?;
                Ok(paths
                    .par_iter()
                    .map(|p| {
                        let mut out = integrate_path(p);
                        out.values.iter_mut().for_each(|v| *v *= s0);
                        out
                    })
                    .collect())
            }
            Model::MultiGbm { mu, sigma, s0, corr } => {
                let d = s0.len();
                if corr.len() != d || corr.iter().any(|r| r.len() != d) {
                    return domain("correlation matrix shape must be d x d");
                }
                for i in 0..d {
                    for j in 0..d {
                        if (corr[i][j] - corr[j][i]).abs() > 1e-12 {
                            return domain("correlation matrix must be symmetric");
                        }
                    }
                }
                let c = SymMatrix::from_fn(d, |i, j| corr[i][j]);
                sample_multi_gbm(mu, sigma, &c, s0, grid, n_paths, seed)
            }
            Model::Deterministic { s0, rate } => {
                if !(*s0 > 0.0) {
                    return domain("s0 must be > 0");
                }
                let values: Vec<f64> = grid.times().iter().map(|t| s0 * (rate * t).exp()).collect();
                let path = SamplePath::new(grid, 1, values)?;
                Ok(vec![path; n_paths])
            }
            Model::AbsorbedGbm { sigma, s0, barrier } => {
                if !(*barrier > *s0) {
                    return domain("absorbing barrier must lie above s0");
                }
                let mu = 0.5 * sigma * sigma;
                let mut paths = sample_gbm(mu, *sigma, *s0, grid, n_paths, seed)?;
                for p in paths.iter_mut() {
                    if let Some(hit) = p.values.iter().position(|v| *v >= *barrier) {
                        for v in p.values[hit..].iter_mut() {
                            *v = *barrier;
                        }
                    }
                }
                Ok(paths)
            }
        }
    }

    /// One conditional continuation of `history` (observed on grid indices
    /// `0..=split`) to the full grid. Supported for Markov models and gfbm.
    pub fn continuation_sampler(&self, grid: Arc<TimeGrid>, split: usize) -> Result<Continuation> {
        match self {
            Model::Gbm { mu, sigma, .. } => Ok(Continuation::Gbm {
                mu: *mu,
                sigma: *sigma,
                grid,
                split,
            }),
            Model::Gfbm { .. } => {
                let spec = self.fbm_spec(&grid).unwrap();
                Ok(Continuation::Fbm(Box::new(ConditionalFbm::new(&spec, grid, split)?)))
            }
            _ => Err(Error::Domain(
                "conditional continuation is available for gbm and gfbm models".into(),
            )),
        }
    }
}

/// Draws conditional continuations of a path history.
#[derive(Debug, Clone)]
pub enum Continuation {
    Gbm {
        mu: f64,
        sigma: f64,
        grid: Arc<TimeGrid>,
        split: usize,
    },
    Fbm(Box<ConditionalFbm>),
}

impl Continuation {
    pub fn continue_path<R: Rng>(&self, history: &SamplePath, rng: &mut R) -> SamplePath {
        match self {
            Continuation::Fbm(c) => c.continue_path(history, rng),
            Continuation::Gbm {
                mu,
                sigma,
                grid,
                split,
            } => {
                let times = grid.times();
                let mut values: Vec<f64> = (0..=*split).map(|i| history.scalar(i)).collect();
                let mut log = history.scalar(*split).ln();
                for k in split + 1..times.len() {
                    let dt = times[k] - times[k - 1];
                    let z: f64 = rng.sample(StandardNormal);
                    log += (mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * z;
                    values.push(log.exp());
                }
                SamplePath {
                    grid: grid.clone(),
                    dim: 1,
                    values,
                }
            }
        }
    }

    /// Conditional standard deviation of `ln S_t` at each remaining grid time.
    pub fn log_sd(&self) -> Vec<f64> {
        match self {
            Continuation::Fbm(c) => (0..c.cov.n)
                .map(|j| c.spec.sigma * c.cov.get(j, j).max(0.0).sqrt())
                .collect(),
            Continuation::Gbm { sigma, grid, split, .. } => {
                let tv = grid.times()[*split];
                grid.times()[split + 1..].iter().map(|t| sigma * (t - tv).sqrt()).collect()
            }
        }
    }

    /// The median continuation `S_v · exp(conditional mean)` used as a tube centre.
    pub fn centre(&self, history: &SamplePath) -> Vec<f64> {
        match self {
            Continuation::Fbm(c) => {
                let observed = c.observed_from_prices(history);
                let mean = c.mean(&observed);
                let mut out: Vec<f64> = (0..=c.split).map(|i| history.scalar(i)).collect();
                out.extend(
                    mean.iter()
                        .enumerate()
                        .map(|(j, m)| c.spec.price(*m, c.split + 1 + j)),
                );
                out
            }
            Continuation::Gbm { grid, split, .. } => {
                let sv = history.scalar(*split);
                let mut out: Vec<f64> = (0..=*split).map(|i| history.scalar(i)).collect();
                out.extend(std::iter::repeat(sv).take(grid.len() - split - 1));
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(times: &[f64]) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::new(times.to_vec()).unwrap())
    }

    #[test]
    fn covariance_examples() {
        assert!((fbm_covariance(1.0, 1.0, 0.75).unwrap() - 1.0).abs() < 1e-15);
        assert!((fbm_covariance(1.0, 2.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        let c = fbm_covariance(1.0, 2.0, 0.75).unwrap();
        assert!((c - 0.5 * 2f64.powf(1.5)).abs() < 1e-15);
        assert!((c - 1.414214).abs() < 1e-6);
    }

    #[test]
    fn covariance_domain_errors() {
        assert!(fbm_covariance(1.0, 1.0, 0.0).is_err());
        assert!(fbm_covariance(1.0, 1.0, 1.0).is_err());
        assert!(fbm_covariance(-1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.5, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0]).is_err());
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        assert_eq!(g.times(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.index_of(1.5), Some(3));
        assert_eq!(g.index_of(1.4), None);
    }

    #[test]
    fn path_rejects_nonpositive() {
        let g = grid(&[0.0, 1.0]);
        assert!(SamplePath::new(g.clone(), 1, vec![1.0, 0.0]).is_err());
        assert!(SamplePath::new(g, 1, vec![1.0]).is_err());
    }

    #[test]
    fn zero_sigma_gives_constant_paths() {
        let g = Arc::new(TimeGrid::uniform(1.0, 10).unwrap());
        let spec = FbmSpec::new(0.7, 0.0, 3.0).unwrap();
        for p in sample_gfbm(&spec, g.clone(), 3, 1).unwrap() {
            assert!(p.values().iter().all(|v| *v == 3.0));
        }
        for p in sample_gbm(0.0, 0.0, 3.0, g, 3, 1).unwrap() {
            assert!(p.values().iter().all(|v| (*v - 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn integrate_examples() {
        let g = grid(&[0.0, 0.5, 1.0]);
        let ones = SamplePath::new(g.clone(), 1, vec![1.0; 3]).unwrap();
        assert!(integrate_path(&ones).values().iter().all(|v| (*v - 1.0).abs() < 1e-15));

        let c: f64 = 0.3;
        let flat = SamplePath::new(g.clone(), 1, vec![c.exp(); 3]).unwrap();
        let out = integrate_path(&flat);
        for (i, t) in g.times().iter().enumerate() {
            assert!((out.scalar(i) - (c * t).exp()).abs() < 1e-12);
        }

        let lin = SamplePath::new(g, 1, vec![1.0, 0.5f64.exp(), 1.0f64.exp()]).unwrap();
        let out = integrate_path(&lin);
        let expected = [1.0, 0.125f64.exp(), 0.5f64.exp()];
        for i in 0..3 {
            assert!((out.scalar(i) - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn brownian_conditioning_is_markov() {
        let spec = FbmSpec::new(0.5, 1.0, 1.0).unwrap();
        let hist = SamplePath::new(grid(&[0.0, 0.5, 1.0]), 1, vec![1.0, 0.8f64.exp(), 0.3f64.exp()]).unwrap();
        let cond = condition_gaussian(&hist, &spec, &[1.5, 2.0]).unwrap();
        for m in &cond.mean_curve {
            assert!((m - 0.3).abs() < 1e-10);
        }
        let ts = [1.5f64, 2.0];
        for i in 0..2 {
            for j in 0..2 {
                let expected = ts[i].min(ts[j]) - 1.0;
                assert!((cond.cov_matrix.get(i, j) - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn one_point_conditioning_h075() {
        let spec = FbmSpec::new(0.75, 1.0, 1.0).unwrap();
        let hist = SamplePath::new(grid(&[0.0, 1.0]), 1, vec![1.0, 1.0]).unwrap();
        let cond = condition_gaussian(&hist, &spec, &[2.0]).unwrap();
        assert!(cond.mean_curve[0].abs() < 1e-14);
        let g12 = fbm_cov_unchecked(1.0, 2.0, 0.75);
        let expected = 2f64.powf(1.5) - g12 * g12;
        assert!((cond.cov_matrix.get(0, 0) - expected).abs() < 1e-12);
        assert!((cond.cov_matrix.get(0, 0) - 0.828427).abs() < 1e-6);
    }

    #[test]
    fn empty_history_is_unconditional() {
        let spec = FbmSpec::new(0.3, 1.0, 1.0).unwrap();
        let g = grid(&[0.0, 0.5, 1.0]);
        let cond = ConditionalFbm::new(&spec, g, 0).unwrap();
        let c = cond.conditioning(&[]);
        assert!(c.mean_curve.iter().all(|m| *m == 0.0));
        let u = unconditional_gaussian(&spec, &[0.5, 1.0]).unwrap();
        assert_eq!(c.cov_matrix, u.cov_matrix);
    }

    #[test]
    fn absorbed_model_freezes() {
        let g = Arc::new(TimeGrid::uniform(1.0, 500).unwrap());
        let m = Model::AbsorbedGbm {
            sigma: 0.5,
            s0: 1.0,
            barrier: 1.1,
        };
        let paths = m.sample(g, 50, 3).unwrap();
        let hit = paths
            .iter()
            .filter(|p| p.values().iter().any(|v| *v == 1.1))
            .count();
        assert!(hit > 0);
        for p in &paths {
            if let Some(k) = p.values().iter().position(|v| *v == 1.1) {
                assert!(p.values()[k..].iter().all(|v| *v == 1.1));
            }
        }
    }
}
