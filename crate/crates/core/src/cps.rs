//! ε-consistent price systems on top of stopping-time ladders.
//!
//! One asset: the snapped ladder is read as a retired walk, reweighted step by
//! step towards `Q^α`; the shadow price is the walk at stops and a regression
//! estimate of `E_Q[X_{n+1} | F_t]` in between.
//!
//! Several assets: the increments between stops are Esscher-tilted bucket by
//! bucket with `η_n = 2^{-n}`, and the shadow price is the resulting martingale.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::esscher::{self, IncrementCloud};
use crate::paths::SamplePath;
use crate::skeleton::{ladder_increments, LadderMode, LadderSkeleton};
use crate::stats::{self, Estimate};
use crate::walk::{step_measure, RetirementSchedule, StepMeasure, WalkState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpsOptions {
    /// Fill in shadow prices at every grid time, not just at stops.
    pub interpolate: bool,
    /// Bins for the in-band position (per asset).
    pub ratio_bins: usize,
    /// Bins for the remaining time.
    pub time_bins: usize,
    /// Smallest Esscher bucket solved on its own.
    pub min_bucket: usize,
    /// Tolerance on the tilted mean, relative to the cloud scale.
    pub esscher_tol: f64,
    /// Width of the certificate's confidence radius in standard errors.
    pub sigmas: f64,
    /// Turn sandwich violations into errors.
    pub strict: bool,
}

impl Default for CpsOptions {
    fn default() -> Self {
        Self {
            interpolate: false,
            ratio_bins: 24,
            time_bins: 16,
            min_bucket: 16,
            esscher_tol: 1e-12,
            sigmas: 3.0,
            strict: true,
        }
    }
}

/// Construction spread that certifies `target` through the `(1+ε)^3` band.
pub fn input_eps_for_target(target: f64) -> f64 {
    (1.0 + target).cbrt() - 1.0
}

/// Shadow prices and likelihood for one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistentPriceSystem {
    pub path_id: usize,
    pub dim: usize,
    pub eps: f64,
    pub eps_effective: f64,
    pub stop_grid_index: Vec<usize>,
    pub stop_tau: Vec<f64>,
    /// `S̃` at the stops, row-major.
    pub stop_values: Vec<f64>,
    /// `L_n` after each stop (`L_0 = 1`).
    pub stop_likelihood: Vec<f64>,
    /// `S̃` at every grid time, row-major, when interpolated.
    pub grid_values: Option<Vec<f64>>,
    pub likelihood: f64,
}

impl ConsistentPriceSystem {
    pub fn n_stops(&self) -> usize {
        self.stop_grid_index.len()
    }

    pub fn at_stop(&self, n: usize) -> &[f64] {
        &self.stop_values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn at_grid(&self, k: usize) -> Option<&[f64]> {
        self.grid_values.as_ref().map(|g| &g[k * self.dim..(k + 1) * self.dim])
    }

    /// A constant system equal to the path itself.
    fn grid_from_stops(&self, path: &SamplePath) -> Vec<f64> {
        let mut out = Vec::with_capacity(path.len() * self.dim);
        let mut n = 0;
        for k in 0..path.len() {
            while n + 1 < self.n_stops() && self.stop_grid_index[n + 1] <= k {
                n += 1;
            }
            out.extend_from_slice(self.at_stop(n));
        }
        out
    }
}

/// Reference mark statistics for one conditioning bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkRow {
    pub stop: usize,
    pub level: i64,
    pub alpha: f64,
    pub count_down: usize,
    pub count_retire: usize,
    pub count_up: usize,
    pub prob_down: f64,
    pub prob_retire: f64,
    pub prob_up: f64,
    /// Where the probabilities came from: `bucket`, `level`, `global` or
    /// `restricted`.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub stop: usize,
    pub residual: Vec<f64>,
    pub stderr: Vec<f64>,
    pub radius: Vec<f64>,
    pub n_active: usize,
    pub pass: bool,
}

/// Statistical evidence for the martingale property at the stops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleCertificate {
    pub rows: Vec<CertificateRow>,
    pub pass: bool,
    /// Prior-weighted mean of `L` (should be 1).
    pub likelihood: Estimate,
    pub likelihood_pass: bool,
    pub min_likelihood: f64,
    pub zero_likelihood_paths: usize,
    pub effective_sample_size: f64,
    /// `Σ_n E_Q |Δ_n|²` (several assets only).
    pub l2_total: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsscherRecord {
    pub stop: usize,
    pub bucket: String,
    pub n_points: usize,
    pub eta: f64,
    /// `esscher`, or `trivial` for an all-zero cloud.
    pub kind: String,
    pub moment_violation: f64,
    pub diagnostics: Option<esscher::EsscherDiagnostics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CpsBatch {
    pub systems: Vec<ConsistentPriceSystem>,
    pub certificate: MartingaleCertificate,
    pub sandwich: SandwichReport,
    pub marks: Vec<MarkRow>,
    pub esscher: Vec<EsscherRecord>,
}

// ---------------------------------------------------------------------------
// Walk reweighting (one asset)

/// Per-walk output of [`weight_walks`].
#[derive(Debug, Clone, PartialEq)]
pub struct WalkWeights {
    pub levels: Vec<i64>,
    /// `Z` for each of the marks `−1, 0, +1` at every step.
    pub z_table: Vec<[f64; 3]>,
    /// `L_0 = 1, L_1, …`.
    pub likelihood: Vec<f64>,
}

impl WalkWeights {
    pub fn final_likelihood(&self) -> f64 {
        *self.likelihood.last().unwrap()
    }
}

fn slot(mark: i8) -> usize {
    (mark + 1) as usize
}

fn step_probs(s: &StepMeasure) -> [f64; 3] {
    [s.lambda, s.alpha, s.mu]
}

#[derive(Default, Clone)]
struct MarkAcc {
    w: [f64; 3],
    c: [usize; 3],
}

impl MarkAcc {
    fn add(&mut self, mark: i8, w: f64) {
        self.w[slot(mark)] += w;
        self.c[slot(mark)] += 1;
    }

    fn covers(&self, q: &[f64; 3]) -> bool {
        (0..3).all(|m| q[m] == 0.0 || self.w[m] > 0.0)
    }

    fn probs(&self) -> [f64; 3] {
        let t: f64 = self.w.iter().sum();
        if t > 0.0 {
            [self.w[0] / t, self.w[1] / t, self.w[2] / t]
        } else {
            [0.0; 3]
        }
    }
}

/// The martingale step closest to `q` charging exactly the marks with positive
/// weight in `acc`: both exits (with or without retirement), or retirement
/// alone. `None` for one-sided buckets, which admit no such step.
fn restricted_step(q: &[f64; 3], acc: &MarkAcc, eps: f64) -> Option<[f64; 3]> {
    let seen = |m: usize| acc.w[m] > 0.0;
    if seen(0) && seen(2) && q[1] < 1.0 {
        if seen(1) {
            return Some(*q);
        }
        return step_measure(0.0, eps).ok().map(|s| step_probs(&s));
    }
    if seen(1) && !seen(0) && !seen(2) && q[1] > 0.0 {
        return Some([0.0, 1.0, 0.0]);
    }
    None
}

/// Reweights walks given by their mark sequences towards `Q^α`.
///
/// Reference probabilities are the `prior · L_{n−1}`-weighted mark frequencies
/// in the bucket `(n, level, α_n)`; this makes `Σ L` and the weighted walk
/// increments balance exactly within each bucket. A bucket that misses a mark
/// charged by `Q^α` uses the closest martingale step on the marks it did see
/// (no retirement if none was seen; sure retirement if nothing else was).
/// One-sided buckets admit no such step; there prior-weighted frequencies
/// pooled over the level, then over everything, stand in.
pub fn weight_walks(
    marks: &[&[i8]],
    eps: f64,
    schedule: &RetirementSchedule,
    prior: &[f64],
) -> Result<(Vec<WalkWeights>, Vec<MarkRow>)> {
    schedule.validate()?;
    if marks.len() != prior.len() {
        return domain("prior length differs from the number of walks");
    }
    for (i, ms) in marks.iter().enumerate() {
        if let Some(p) = ms.iter().position(|m| *m == 0) {
            if p + 1 != ms.len() {
                return domain(format!("walk {i} moves after retiring"));
            }
        }
        if ms.iter().any(|m| !(-1..=1).contains(m)) {
            return domain(format!("walk {i} has a mark outside {{-1, 0, 1}}"));
        }
    }
    if let Some(p) = prior.iter().find(|p| !(**p > 0.0)) {
        return domain(format!("prior weight {p} is not positive"));
    }
    let n_max = marks.iter().map(|m| m.len()).max().unwrap_or(0);

    // Pooled, prior-weighted fallbacks.
    let mut by_level: BTreeMap<(i64, u64), MarkAcc> = BTreeMap::new();
    let mut global = MarkAcc::default();
    for (ms, p) in marks.iter().zip(prior) {
        let mut state = WalkState::START;
        for &m in ms.iter() {
            let a = schedule.alpha(&state);
            by_level.entry((state.level, a.to_bits())).or_default().add(m, *p);
            global.add(m, *p);
            state = state.advance(m);
        }
    }

    let mut states = vec![WalkState::START; marks.len()];
    let mut out: Vec<WalkWeights> = marks
        .iter()
        .map(|ms| WalkWeights {
            levels: vec![0],
            z_table: Vec::with_capacity(ms.len()),
            likelihood: vec![1.0],
        })
        .collect();
    let mut rows = Vec::new();

    for n in 1..=n_max {
        let mut buckets: BTreeMap<(i64, u64), MarkAcc> = BTreeMap::new();
        for (i, ms) in marks.iter().enumerate() {
            if ms.len() >= n {
                let a = schedule.alpha(&states[i]);
                let l = *out[i].likelihood.last().unwrap();
                buckets
                    .entry((states[i].level, a.to_bits()))
                    .or_default()
                    .add(ms[n - 1], prior[i] * l);
            }
        }
        let mut tables: BTreeMap<(i64, u64), [f64; 3]> = BTreeMap::new();
        for (key, acc) in &buckets {
            let alpha = f64::from_bits(key.1);
            let q = step_probs(&step_measure(alpha, eps)?);
            let level_acc = &by_level[key];
            let (reference, target, source) = if acc.covers(&q) {
                (acc.probs(), q, "bucket")
            } else if let Some(r) = restricted_step(&q, acc, eps) {
                (acc.probs(), r, "restricted")
            } else if level_acc.covers(&q) {
                (level_acc.probs(), q, "level")
            } else if global.covers(&q) {
                (global.probs(), q, "global")
            } else {
                match restricted_step(&q, &global, eps) {
                    Some(r) => (global.probs(), r, "restricted"),
                    None => (global.probs(), [0.0; 3], "restricted"),
                }
            };
            let z = [0, 1, 2].map(|m| {
                if target[m] > 0.0 && reference[m] > 0.0 {
                    target[m] / reference[m]
                } else {
                    0.0
                }
            });
            tables.insert(*key, z);
            rows.push(MarkRow {
                stop: n,
                level: key.0,
                alpha,
                count_down: acc.c[0],
                count_retire: acc.c[1],
                count_up: acc.c[2],
                prob_down: reference[0],
                prob_retire: reference[1],
                prob_up: reference[2],
                source: source.to_string(),
            });
        }
        for (i, ms) in marks.iter().enumerate() {
            if ms.len() >= n {
                let a = schedule.alpha(&states[i]);
                let z = tables[&(states[i].level, a.to_bits())];
                let m = ms[n - 1];
                let w = &mut out[i];
                let l = *w.likelihood.last().unwrap() * z[slot(m)];
                w.likelihood.push(l);
                w.z_table.push(z);
                states[i] = states[i].advance(m);
                w.levels.push(states[i].level);
            }
        }
    }
    Ok((out, rows))
}

// ---------------------------------------------------------------------------
// Between-stop regressions

fn bin(x: f64, lo: f64, hi: f64, n: usize) -> usize {
    let f = ((x - lo) / (hi - lo) * n as f64).floor();
    (f.max(0.0) as usize).min(n - 1)
}

/// Position of `value` in the band around `anchor`, in units of `ln(1+ε)`.
fn band_position(value: f64, anchor: f64, log_step: f64) -> f64 {
    (value / anchor).ln() / log_step
}

/// Histogram estimate of `P(next mark | position in band, time left)`.
struct MarkRegression {
    nb: usize,
    nt: usize,
    horizon: f64,
    fine: Vec<[f64; 3]>,
    coarse: Vec<[f64; 3]>,
    global: [f64; 3],
}

impl MarkRegression {
    fn fit(
        paths: &[SamplePath],
        skels: &[LadderSkeleton],
        prior: &[f64],
        opts: &CpsOptions,
    ) -> Self {
        let nb = opts.ratio_bins.max(1);
        let nt = opts.time_bins.max(1);
        let horizon = paths[0].grid.horizon();
        let mut reg = Self {
            nb,
            nt,
            horizon,
            fine: vec![[0.0; 3]; nb * nt],
            coarse: vec![[0.0; 3]; nb],
            global: [0.0; 3],
        };
        for ((path, skel), p) in paths.iter().zip(skels).zip(prior) {
            let log_step = (1.0 + skel.eps).ln();
            let times = path.grid.times();
            for n in 0..skel.marks.len() {
                let anchor = skel.stops[n].anchor[0];
                let m = slot(skel.marks[n]);
                for k in skel.stops[n].grid_index + 1..skel.stops[n + 1].grid_index {
                    let (b, t) = reg.cell(band_position(path.scalar(k), anchor, log_step), times[k]);
                    reg.fine[b * nt + t][m] += p;
                    reg.coarse[b][m] += p;
                    reg.global[m] += p;
                }
            }
        }
        reg
    }

    fn cell(&self, u: f64, t: f64) -> (usize, usize) {
        let rem = (self.horizon - t) / self.horizon;
        (bin(u, -1.0, 1.0, self.nb), bin(rem, 0.0, 1.0, self.nt))
    }

    fn probs(&self, u: f64, t: f64) -> [f64; 3] {
        let (b, tb) = self.cell(u, t);
        for c in [&self.fine[b * self.nt + tb], &self.coarse[b], &self.global] {
            let s: f64 = c.iter().sum();
            if s > 0.0 {
                return [c[0] / s, c[1] / s, c[2] / s];
            }
        }
        [0.0; 3]
    }
}

/// Histogram estimate of `E_Q[M_{n+1}/M_n | position in band, time left]`
/// (coordinatewise), with observations weighted by `Z_{n+1}`.
struct RatioRegression {
    dim: usize,
    nb: usize,
    nt: usize,
    horizon: f64,
    fine: Vec<f64>,
    coarse: Vec<f64>,
    global: Vec<f64>,
}

impl RatioRegression {
    fn stride(&self) -> usize {
        self.dim + 1
    }

    fn cell(&self, pos: &[f64], t: f64) -> (usize, usize) {
        let mut b = 0;
        for u in pos {
            b = b * self.nb + bin(*u, -1.0, 1.0, self.nb);
        }
        let rem = (self.horizon - t) / self.horizon;
        (b, bin(rem, 0.0, 1.0, self.nt))
    }

    fn fit(
        paths: &[SamplePath],
        skels: &[LadderSkeleton],
        z: &[Vec<f64>],
        opts: &CpsOptions,
    ) -> Self {
        let dim = paths[0].dim;
        let nb = match dim {
            1 => opts.ratio_bins.max(1),
            2 => 8,
            _ => 3,
        };
        let nt = opts.time_bins.max(1);
        let cells = nb.pow(dim as u32);
        let mut reg = Self {
            dim,
            nb,
            nt,
            horizon: paths[0].grid.horizon(),
            fine: vec![0.0; cells * nt * (dim + 1)],
            coarse: vec![0.0; nt * (dim + 1)],
            global: vec![0.0; dim + 1],
        };
        let s = reg.stride();
        let mut pos = vec![0.0; dim];
        for ((path, skel), zs) in paths.iter().zip(skels).zip(z) {
            let log_step = (1.0 + skel.eps).ln();
            let times = path.grid.times();
            for n in 0..skel.marks.len() {
                let a0 = &skel.stops[n].anchor;
                let a1 = &skel.stops[n + 1].anchor;
                let w = zs[n];
                if w == 0.0 {
                    continue;
                }
                for k in skel.stops[n].grid_index + 1..skel.stops[n + 1].grid_index {
                    for j in 0..dim {
                        pos[j] = band_position(path.at(k)[j], a0[j], log_step);
                    }
                    let (b, tb) = reg.cell(&pos, times[k]);
                    let f = (b * nt + tb) * s;
                    let c = tb * s;
                    reg.fine[f] += w;
                    reg.coarse[c] += w;
                    reg.global[0] += w;
                    for j in 0..dim {
                        let r = a1[j] / a0[j];
                        reg.fine[f + 1 + j] += w * r;
                        reg.coarse[c + 1 + j] += w * r;
                        reg.global[1 + j] += w * r;
                    }
                }
            }
        }
        reg
    }

    fn ratio(&self, pos: &[f64], t: f64, out: &mut [f64]) {
        let (b, tb) = self.cell(pos, t);
        let s = self.stride();
        let f = (b * self.nt + tb) * s;
        let c = tb * s;
        for cell in [&self.fine[f..f + s], &self.coarse[c..c + s], &self.global[..]] {
            if cell[0] > 0.0 {
                for j in 0..self.dim {
                    out[j] = cell[1 + j] / cell[0];
                }
                return;
            }
        }
        out.iter_mut().for_each(|o| *o = 1.0);
    }
}

// ---------------------------------------------------------------------------
// One asset

fn check_batch(paths: &[SamplePath], skels: &[LadderSkeleton]) -> Result<f64> {
    if paths.is_empty() || paths.len() != skels.len() {
        return domain(format!(
            "need matching non-empty path and skeleton batches ({} vs {})",
            paths.len(),
            skels.len()
        ));
    }
    let eps = skels[0].eps;
    for (i, (p, s)) in paths.iter().zip(skels).enumerate() {
        if s.eps != eps || s.dim != p.dim {
            return domain(format!("skeleton {i} does not match the batch (eps or dimension)"));
        }
        if s.stops.last().map(|st| st.grid_index) != Some(p.len() - 1) {
            return domain(format!("skeleton {i} does not end at its path's horizon"));
        }
        if p.grid.times() != paths[0].grid.times() {
            return domain("paths must share one time grid");
        }
    }
    Ok(eps)
}

/// Builds the one-asset price systems from snapped multiplicative ladders.
pub fn build_cps_1d(
    paths: &[SamplePath],
    skels: &[LadderSkeleton],
    schedule: &RetirementSchedule,
    opts: &CpsOptions,
) -> Result<CpsBatch> {
    let x0 = skels.first().map_or(1.0, |s| s.x0()[0]);
    build_cps_1d_at(paths, skels, schedule, x0, opts)
}

/// As [`build_cps_1d`], with the walk started at `walk_x0` instead of the
/// initial price (as the two-point measure requires). The certified spread
/// widens by the factor between the two.
pub fn build_cps_1d_at(
    paths: &[SamplePath],
    skels: &[LadderSkeleton],
    schedule: &RetirementSchedule,
    walk_x0: f64,
    opts: &CpsOptions,
) -> Result<CpsBatch> {
    let eps = check_batch(paths, skels)?;
    let x0 = skels[0].x0()[0];
    if !(walk_x0 > 0.0) {
        return domain("walk start must be positive");
    }
    let shift = (walk_x0 / x0).max(x0 / walk_x0);
    let eps_cert = (1.0 + eps) * shift - 1.0;
    for (i, s) in skels.iter().enumerate() {
        if s.dim != 1 || !s.snapped || s.mode != LadderMode::Multiplicative {
            return domain(format!("skeleton {i} is not a snapped single-asset multiplicative ladder"));
        }
        if s.x0()[0] != x0 {
            return domain("all paths must start from the same price");
        }
    }
    let prior = vec![1.0; paths.len()];
    let marks: Vec<&[i8]> = skels.iter().map(|s| s.marks.as_slice()).collect();
    let (weights, rows) = weight_walks(&marks, eps, schedule, &prior)?;
    for (i, (w, s)) in weights.iter().zip(skels).enumerate() {
        if w.levels != s.levels {
            return Err(Error::Bucket {
                stop: 0,
                key: format!("path {i}"),
                reason: "walk levels disagree with the ladder".into(),
            });
        }
    }
    let reg = opts.interpolate.then(|| MarkRegression::fit(paths, skels, &prior, opts));

    let systems: Vec<ConsistentPriceSystem> = paths
        .par_iter()
        .zip(skels)
        .zip(&weights)
        .enumerate()
        .map(|(i, ((path, skel), w))| {
            let xs: Vec<f64> = skel.stops.iter().map(|s| s.anchor[0] * walk_x0 / x0).collect();
            let grid_values = reg.as_ref().map(|reg| shadow_1d(path, skel, w, &xs, reg));
            ConsistentPriceSystem {
                path_id: i,
                dim: 1,
                eps: eps_cert,
                eps_effective: (1.0 + eps_cert).powi(3) - 1.0,
                stop_grid_index: skel.stops.iter().map(|s| s.grid_index).collect(),
                stop_tau: skel.stops.iter().map(|s| s.tau).collect(),
                stop_values: xs,
                stop_likelihood: w.likelihood.clone(),
                grid_values,
                likelihood: w.final_likelihood(),
            }
        })
        .collect();

    finish(paths, systems, rows, Vec::new(), None, schedule.is_equivalent(), opts)
}

fn shadow_1d(path: &SamplePath, skel: &LadderSkeleton, w: &WalkWeights, xs: &[f64], reg: &MarkRegression) -> Vec<f64> {
    let g = 1.0 + skel.eps;
    let log_step = g.ln();
    let times = path.grid.times();
    let mut out = vec![0.0; path.len()];
    for n in 0..skel.marks.len() {
        let (k0, k1) = (skel.stops[n].grid_index, skel.stops[n + 1].grid_index);
        out[k0] = xs[n];
        let z = &w.z_table[n];
        for k in k0 + 1..k1 {
            let anchor = skel.stops[n].anchor[0];
            let p = reg.probs(band_position(path.scalar(k), anchor, log_step), times[k]);
            let q = [p[0] * z[0], p[1] * z[1], p[2] * z[2]];
            let s = q[0] + q[1] + q[2];
            out[k] = if s > 0.0 {
                xs[n] * (q[0] / g + q[1] + q[2] * g) / s
            } else {
                xs[n]
            };
        }
    }
    let last = skel.stops.len() - 1;
    out[skel.stops[last].grid_index] = xs[last];
    out
}

// ---------------------------------------------------------------------------
// Several assets

struct Observation {
    path: usize,
    delta: Vec<f64>,
}

/// Builds the Esscher-chain price systems from (unsnapped) ladders.
pub fn build_cps_multi(paths: &[SamplePath], skels: &[LadderSkeleton], opts: &CpsOptions) -> Result<CpsBatch> {
    let eps = check_batch(paths, skels)?;
    let d = skels[0].dim;
    let s0 = skels[0].x0().to_vec();
    if skels.iter().any(|s| s.x0() != s0.as_slice()) {
        return domain("all paths must start from the same price");
    }
    let log_step = (1.0 + eps).ln();
    let increments: Vec<Vec<Vec<f64>>> = skels.iter().map(ladder_increments).collect();
    let n_max = increments.iter().map(|v| v.len()).max().unwrap_or(0);
    let mut like: Vec<Vec<f64>> = vec![vec![1.0]; paths.len()];
    let mut zs: Vec<Vec<f64>> = increments.iter().map(|v| Vec::with_capacity(v.len())).collect();
    let mut records = Vec::new();
    let mut tail: Vec<(usize, Observation)> = Vec::new();

    let key_of = |skel: &LadderSkeleton, n: usize| -> Vec<i64> {
        skel.stops[n - 1]
            .anchor
            .iter()
            .zip(&s0)
            .map(|(a, s)| ((a / s).ln() / log_step).round() as i64)
            .collect()
    };

    for n in 1..=n_max {
        let eta = 0.5f64.powi(n as i32);
        let mut buckets: BTreeMap<Vec<i64>, Vec<Observation>> = BTreeMap::new();
        for (i, inc) in increments.iter().enumerate() {
            if inc.len() >= n {
                buckets.entry(key_of(&skels[i], n)).or_default().push(Observation {
                    path: i,
                    delta: inc[n - 1].clone(),
                });
            }
        }
        let mut residual: Vec<Observation> = Vec::new();
        let mut solved: Vec<(usize, f64)> = Vec::new();
        for (key, obs) in buckets {
            let label = format!("{key:?}");
            let w: Vec<f64> = obs.iter().map(|o| *like[o.path].last().unwrap()).collect();
            if obs.len() >= opts.min_bucket.max(d + 2) {
                if let Some((z, rec)) = try_solve(&obs, &w, n, &label, eta, d, opts)? {
                    records.push(rec);
                    solved.extend(obs.iter().map(|o| o.path).zip(z));
                    continue;
                }
            }
            residual.extend(obs);
        }
        if !residual.is_empty() {
            let w: Vec<f64> = residual.iter().map(|o| *like[o.path].last().unwrap()).collect();
            match try_solve(&residual, &w, n, "pool", eta, d, opts)? {
                Some((z, rec)) => {
                    records.push(rec);
                    solved.extend(residual.iter().map(|o| o.path).zip(z));
                }
                None => tail.extend(residual.into_iter().map(|o| (n, o))),
            }
        }
        // Paths waiting for the tail keep their likelihood until it is solved.
        for (p, z) in solved {
            zs[p].push(z);
            let l = *like[p].last().unwrap() * z;
            like[p].push(l);
        }
        for (n_t, o) in &tail {
            if *n_t == n {
                zs[o.path].push(f64::NAN);
                let l = *like[o.path].last().unwrap();
                like[o.path].push(l);
            }
        }
    }

    if !tail.is_empty() {
        // One prior-weighted cloud for every observation no bucket could carry.
        // If even that cloud is degenerate, earlier stops are folded in whole
        // (replacing their bucket solutions) until 0 is interior.
        let mut first = tail.iter().map(|(n, _)| *n).min().unwrap();
        let unfolded = first;
        let eta = 0.5f64.powi(tail.iter().map(|(n, _)| *n).max().unwrap() as i32);
        loop {
            let obs: Vec<Observation> = tail
                .iter()
                .map(|(_, o)| Observation {
                    path: o.path,
                    delta: o.delta.clone(),
                })
                .collect();
            let w = vec![1.0; obs.len()];
            if let Some((z, rec)) = try_solve(&obs, &w, first, "tail", eta, d, opts)? {
                records.retain(|r| r.stop < first || r.stop >= unfolded);
                records.push(rec);
                for ((n, o), z) in tail.iter().zip(z) {
                    zs[o.path][n - 1] = z;
                }
                break;
            }
            if first == 1 {
                return Err(Error::Bucket {
                    stop: first,
                    key: "tail".into(),
                    reason: "pooled increment cloud has no retirement mass or 0 is not interior".into(),
                });
            }
            first -= 1;
            let absorbed: std::collections::HashSet<(usize, usize)> = tail.iter().map(|(n, o)| (*n, o.path)).collect();
            for (i, inc) in increments.iter().enumerate() {
                if inc.len() >= first && !absorbed.contains(&(first, i)) {
                    tail.push((
                        first,
                        Observation {
                            path: i,
                            delta: inc[first - 1].clone(),
                        },
                    ));
                }
            }
        }
        for (p, z) in zs.iter().enumerate() {
            let mut l = vec![1.0];
            for zi in z {
                l.push(l.last().unwrap() * zi);
            }
            like[p] = l;
        }
    }

    let reg = opts.interpolate.then(|| RatioRegression::fit(paths, skels, &zs, opts));
    let systems: Vec<ConsistentPriceSystem> = paths
        .par_iter()
        .zip(skels)
        .zip(&like)
        .enumerate()
        .map(|(i, ((path, skel), l))| {
            let stop_values: Vec<f64> = skel.stops.iter().flat_map(|s| s.anchor.clone()).collect();
            let grid_values = reg.as_ref().map(|reg| shadow_multi(path, skel, reg));
            ConsistentPriceSystem {
                path_id: i,
                dim: d,
                eps,
                eps_effective: (1.0 + eps).powi(3) - 1.0,
                stop_grid_index: skel.stops.iter().map(|s| s.grid_index).collect(),
                stop_tau: skel.stops.iter().map(|s| s.tau).collect(),
                stop_values,
                stop_likelihood: l.clone(),
                grid_values,
                likelihood: *l.last().unwrap(),
            }
        })
        .collect();

    // Σ_n L_n |Δ_n|² per path.
    let l2: Vec<f64> = increments
        .iter()
        .zip(&like)
        .map(|(inc, l)| {
            inc.iter()
                .enumerate()
                .map(|(n, dlt)| l[n + 1] * dlt.iter().map(|x| x * x).sum::<f64>())
                .sum()
        })
        .collect();
    finish(
        paths,
        systems,
        Vec::new(),
        records,
        Some(stats::mean_stderr(&l2)),
        true,
        opts,
    )
}

#[allow(clippy::too_many_arguments)]
fn try_solve(
    obs: &[Observation],
    weights: &[f64],
    stop: usize,
    label: &str,
    eta: f64,
    d: usize,
    opts: &CpsOptions,
) -> Result<Option<(Vec<f64>, EsscherRecord)>> {
    // Paths already carrying zero likelihood take no part in the tilt.
    let live: Vec<usize> = (0..obs.len()).filter(|&i| weights[i] > 0.0).collect();
    let mut z = vec![0.0; obs.len()];
    if live.is_empty() {
        return Ok(Some((
            z,
            EsscherRecord {
                stop,
                bucket: label.to_string(),
                n_points: obs.len(),
                eta,
                kind: "trivial".into(),
                moment_violation: 0.0,
                diagnostics: None,
            },
        )));
    }
    if live.iter().all(|&i| obs[i].delta.iter().all(|x| *x == 0.0)) {
        for &i in &live {
            z[i] = 1.0;
        }
        return Ok(Some((
            z,
            EsscherRecord {
                stop,
                bucket: label.to_string(),
                n_points: obs.len(),
                eta,
                kind: "trivial".into(),
                moment_violation: 0.0,
                diagnostics: None,
            },
        )));
    }
    let cloud = IncrementCloud::new(
        d,
        live.iter().map(|&i| obs[i].delta.clone()).collect(),
        live.iter().map(|&i| weights[i]).collect(),
    )?;
    if cloud.zero_mass() <= 0.0 || !esscher::check_interior(&cloud).ok {
        return Ok(None);
    }
    let tol = opts.esscher_tol * cloud.scale();
    let res = esscher::esscher(&cloud, eta, tol)?;
    let violation = res.moment_violation();
    if violation > 1e-8 {
        return Err(Error::MomentBound(format!(
            "Esscher weights at stop {stop}, bucket {label} miss the moment conditions by {violation:e}"
        )));
    }
    for (k, &i) in live.iter().enumerate() {
        z[i] = res.z_weights[k];
    }
    Ok(Some((
        z,
        EsscherRecord {
            stop,
            bucket: label.to_string(),
            n_points: obs.len(),
            eta,
            kind: "esscher".into(),
            moment_violation: violation,
            diagnostics: Some(res.diagnostics),
        },
    )))
}

fn shadow_multi(path: &SamplePath, skel: &LadderSkeleton, reg: &RatioRegression) -> Vec<f64> {
    let d = path.dim;
    let log_step = (1.0 + skel.eps).ln();
    let times = path.grid.times();
    let mut out = vec![0.0; path.len() * d];
    let mut pos = vec![0.0; d];
    let mut ratio = vec![1.0; d];
    for n in 0..skel.marks.len() {
        let a = &skel.stops[n].anchor;
        let (k0, k1) = (skel.stops[n].grid_index, skel.stops[n + 1].grid_index);
        out[k0 * d..(k0 + 1) * d].copy_from_slice(a);
        for k in k0 + 1..k1 {
            for j in 0..d {
                pos[j] = band_position(path.at(k)[j], a[j], log_step);
            }
            reg.ratio(&pos, times[k], &mut ratio);
            for j in 0..d {
                out[k * d + j] = a[j] * ratio[j];
            }
        }
    }
    let last = skel.stops.last().unwrap();
    out[last.grid_index * d..(last.grid_index + 1) * d].copy_from_slice(&last.anchor);
    out
}

// ---------------------------------------------------------------------------
// Certificate and sandwich

fn finish(
    paths: &[SamplePath],
    systems: Vec<ConsistentPriceSystem>,
    marks: Vec<MarkRow>,
    esscher: Vec<EsscherRecord>,
    l2_total: Option<Estimate>,
    expect_positive: bool,
    opts: &CpsOptions,
) -> Result<CpsBatch> {
    let certificate = certify(&systems, opts.sigmas, expect_positive, l2_total);
    let eps = systems[0].eps;
    let sandwich = verify_sandwich(&systems, paths, eps);
    if opts.strict {
        if let Some(v) = &sandwich.first_violation {
            return Err(Error::Sandwich {
                path: v.path,
                t: v.t,
                ratio: v.ratio,
                lo: v.lo,
                hi: v.hi,
            });
        }
    }
    Ok(CpsBatch {
        systems,
        certificate,
        sandwich,
        marks,
        esscher,
    })
}

/// Weighted stop-level residuals `Σ L_n (S̃_n − S̃_{n−1}) / Σ L_n`, with paths
/// that already ended contributing a zero increment at their final weight.
pub fn certify(
    systems: &[ConsistentPriceSystem],
    sigmas: f64,
    expect_positive: bool,
    l2_total: Option<Estimate>,
) -> MartingaleCertificate {
    let d = systems[0].dim;
    let n_max = systems.iter().map(|s| s.n_stops() - 1).max().unwrap_or(0);
    let scale = systems[0].at_stop(0).iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let mut rows = Vec::with_capacity(n_max);
    let mut inc = vec![0.0; systems.len()];
    let mut wts = vec![0.0; systems.len()];
    for n in 1..=n_max {
        let mut row = CertificateRow {
            stop: n,
            residual: vec![0.0; d],
            stderr: vec![0.0; d],
            radius: vec![0.0; d],
            n_active: systems.iter().filter(|s| s.n_stops() > n).count(),
            pass: true,
        };
        for j in 0..d {
            for (i, s) in systems.iter().enumerate() {
                if s.n_stops() > n {
                    inc[i] = s.at_stop(n)[j] - s.at_stop(n - 1)[j];
                    wts[i] = s.stop_likelihood[n];
                } else {
                    inc[i] = 0.0;
                    wts[i] = s.likelihood;
                }
            }
            let e = stats::weighted_mean(&inc, &wts);
            let (mean, se) = if e.mean.is_nan() { (0.0, 0.0) } else { (e.mean, e.stderr) };
            row.residual[j] = mean;
            row.stderr[j] = se;
            row.radius[j] = sigmas * se + 1e-9 * scale.max(1.0);
            row.pass &= mean.abs() <= row.radius[j];
        }
        rows.push(row);
    }
    let ls: Vec<f64> = systems.iter().map(|s| s.likelihood).collect();
    let likelihood = stats::mean_stderr(&ls);
    let zero = ls.iter().filter(|l| !(**l > 0.0)).count();
    let likelihood_pass = likelihood.within(1.0, sigmas, 1e-9) && (!expect_positive || zero == 0);
    let l2_pass = l2_total.map_or(true, |e| e.mean <= 2.0 + sigmas * e.stderr);
    MartingaleCertificate {
        pass: rows.iter().all(|r| r.pass) && likelihood_pass && l2_pass,
        rows,
        likelihood,
        likelihood_pass,
        min_likelihood: ls.iter().copied().fold(f64::INFINITY, f64::min),
        zero_likelihood_paths: zero,
        effective_sample_size: stats::effective_sample_size(&ls),
        l2_total,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSandwich {
    pub path: usize,
    /// Extreme `S̃/S` per asset over all checked times.
    pub min_ratio: Vec<f64>,
    pub max_ratio: Vec<f64>,
    /// Extreme `S̃/S` per asset at the stops.
    pub stop_min_ratio: Vec<f64>,
    pub stop_max_ratio: Vec<f64>,
    /// Multiplicative allowance at stops for one grid step of price motion.
    pub stop_tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub path: usize,
    pub asset: usize,
    pub t: f64,
    pub ratio: f64,
    pub lo: f64,
    pub hi: f64,
    pub at_stop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub eps: f64,
    pub pass: bool,
    /// Whether times between stops were checked (needs interpolated systems).
    pub interior_checked: bool,
    pub worst_log_ratio: f64,
    pub paths: Vec<PathSandwich>,
    pub first_violation: Option<Violation>,
}

/// Audits `(1+ε)^{±3}` at every available time and `(1+ε)^{±1}` at stops (the
/// latter widened by the path's largest one-step move, which is how far a
/// discretely monitored exit can overshoot).
pub fn verify_sandwich(systems: &[ConsistentPriceSystem], paths: &[SamplePath], eps: f64) -> SandwichReport {
    let band3 = (1.0 + eps).powi(3);
    let per: Vec<(PathSandwich, Option<Violation>)> = systems
        .par_iter()
        .zip(paths)
        .map(|(s, path)| audit_path(s, path, eps, band3))
        .collect();
    let first_violation = per.iter().find_map(|(_, v)| v.clone());
    let worst = per
        .iter()
        .flat_map(|(p, _)| p.min_ratio.iter().chain(&p.max_ratio).map(|r| r.ln().abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    SandwichReport {
        eps,
        pass: first_violation.is_none(),
        interior_checked: systems.iter().all(|s| s.grid_values.is_some()),
        worst_log_ratio: worst,
        paths: per.into_iter().map(|(p, _)| p).collect(),
        first_violation,
    }
}

fn audit_path(s: &ConsistentPriceSystem, path: &SamplePath, eps: f64, band3: f64) -> (PathSandwich, Option<Violation>) {
    let d = s.dim;
    let times = path.grid.times();
    let step_move = (1..path.len())
        .flat_map(|k| (0..d).map(move |j| (k, j)))
        .map(|(k, j)| (path.at(k)[j] / path.at(k - 1)[j]).ln().abs())
        .fold(0.0, f64::max);
    let tol = step_move.exp();
    let mut rep = PathSandwich {
        path: s.path_id,
        min_ratio: vec![f64::INFINITY; d],
        max_ratio: vec![0.0; d],
        stop_min_ratio: vec![f64::INFINITY; d],
        stop_max_ratio: vec![0.0; d],
        stop_tolerance: tol,
        pass: true,
    };
    let mut violation = None;
    let mut flag = |rep: &mut PathSandwich, j: usize, k: usize, r: f64, lo: f64, hi: f64, at_stop: bool| {
        if !(r >= lo && r <= hi) {
            rep.pass = false;
            if violation.is_none() {
                violation = Some(Violation {
                    path: s.path_id,
                    asset: j,
                    t: times[k],
                    ratio: r,
                    lo,
                    hi,
                    at_stop,
                });
            }
        }
    };
    for n in 0..s.n_stops() {
        let k = s.stop_grid_index[n];
        for j in 0..d {
            let r = s.at_stop(n)[j] / path.at(k)[j];
            rep.stop_min_ratio[j] = rep.stop_min_ratio[j].min(r);
            rep.stop_max_ratio[j] = rep.stop_max_ratio[j].max(r);
            rep.min_ratio[j] = rep.min_ratio[j].min(r);
            rep.max_ratio[j] = rep.max_ratio[j].max(r);
            flag(&mut rep, j, k, r, 1.0 / ((1.0 + eps) * tol), (1.0 + eps) * tol, true);
        }
    }
    if let Some(g) = &s.grid_values {
        for k in 0..path.len() {
            for j in 0..d {
                let r = g[k * d + j] / path.at(k)[j];
                rep.min_ratio[j] = rep.min_ratio[j].min(r);
                rep.max_ratio[j] = rep.max_ratio[j].max(r);
                flag(&mut rep, j, k, r, 1.0 / band3, band3, false);
            }
        }
    }
    (rep, violation)
}

/// Fills in stop-constant grid values for systems built without interpolation.
pub fn piecewise_constant(systems: &mut [ConsistentPriceSystem], paths: &[SamplePath]) {
    for (s, p) in systems.iter_mut().zip(paths) {
        if s.grid_values.is_none() {
            s.grid_values = Some(s.grid_from_stops(p));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{Model, TimeGrid};
    use crate::skeleton::{extract_ladders, LadderOptions};
    use crate::walk::{ExactTree, MarkProbs};
    use std::sync::Arc;

    fn constant_paths(d: usize, n: usize) -> Vec<SamplePath> {
        let grid = Arc::new(TimeGrid::uniform(1.0, 10).unwrap());
        (0..n)
            .map(|_| SamplePath::new(grid.clone(), d, vec![100.0; 11 * d]).unwrap())
            .collect()
    }

    fn interp() -> CpsOptions {
        CpsOptions {
            interpolate: true,
            ..CpsOptions::default()
        }
    }

    #[test]
    fn constant_path_is_its_own_shadow() {
        let paths = constant_paths(1, 1);
        let skels = extract_ladders(&paths, 0.1, &LadderOptions::default()).unwrap();
        let b = build_cps_1d(&paths, &skels, &RetirementSchedule::Constant { alpha: 0.5 }, &interp()).unwrap();
        let s = &b.systems[0];
        assert_eq!(s.likelihood, 1.0);
        assert!(s.grid_values.as_ref().unwrap().iter().all(|v| *v == 100.0));
        assert!(b.sandwich.pass);
        assert_eq!(b.sandwich.worst_log_ratio, 0.0);
    }

    #[test]
    fn constant_paths_multi() {
        let paths = constant_paths(2, 3);
        let skels = extract_ladders(&paths, 0.1, &LadderOptions::default()).unwrap();
        let b = build_cps_multi(&paths, &skels, &interp()).unwrap();
        for s in &b.systems {
            assert_eq!(s.likelihood, 1.0);
            assert!(s.grid_values.as_ref().unwrap().iter().all(|v| *v == 100.0));
        }
        assert!(b.esscher.iter().all(|r| r.kind == "trivial"));
    }

    #[test]
    fn exact_tree_equivalence() {
        let eps = 0.1;
        let schedule = RetirementSchedule::Constant { alpha: 0.5 };
        let tree = ExactTree::build(1.0, eps, &schedule, &MarkProbs::UNIFORM, 6).unwrap();
        // Walk every root-to-leaf mark sequence.
        let mut seqs: Vec<(Vec<i8>, f64)> = Vec::new();
        let mut stack = vec![(0usize, Vec::<i8>::new())];
        while let Some((id, ms)) = stack.pop() {
            let node = &tree.nodes[id];
            if node.children.is_empty() {
                seqs.push((ms, node.p_mass));
                continue;
            }
            for &c in &node.children {
                let mut m = ms.clone();
                m.push((tree.nodes[c].state.level - node.state.level) as i8);
                stack.push((c, m));
            }
        }
        let marks: Vec<&[i8]> = seqs.iter().map(|(m, _)| m.as_slice()).collect();
        let prior: Vec<f64> = seqs.iter().map(|(_, p)| *p).collect();
        let (w, _) = weight_walks(&marks, eps, &schedule, &prior).unwrap();
        let mut law: BTreeMap<i64, f64> = BTreeMap::new();
        for ((ms, p), ww) in seqs.iter().zip(&w) {
            let level: i64 = ms.iter().map(|m| *m as i64).sum();
            *law.entry(level).or_default() += p * ww.final_likelihood();
        }
        let exact = tree.terminal_law();
        assert_eq!(law.len(), exact.len());
        for (k, q) in exact {
            assert!((law[&k] - q).abs() < 1e-10, "level {k}: {} vs {q}", law[&k]);
        }
    }

    #[test]
    fn gbm_martingale_closure() {
        let grid = Arc::new(TimeGrid::uniform(0.5, 400).unwrap());
        let model = Model::Gbm {
            mu: 0.0,
            sigma: 0.2,
            s0: 100.0,
        };
        let paths = model.sample(grid, 2000, 7).unwrap();
        let eps = 0.05;
        let skels = extract_ladders(&paths, eps, &LadderOptions::default()).unwrap();
        let schedule =
            crate::walk::integrability_schedule(|x| x, 100.0, eps, crate::walk::geometric_budget, 0.5).unwrap();
        let b = build_cps_1d(&paths, &skels, &schedule, &interp()).unwrap();
        assert!(b.sandwich.pass && b.sandwich.interior_checked);
        assert!(b.certificate.pass, "{:?} {:?} {} {}", b.certificate.rows.iter().find(|r| !r.pass), b.certificate.likelihood, b.certificate.zero_likelihood_paths, b.certificate.effective_sample_size);
        let terminal: Vec<f64> = b.systems.iter().map(|s| *s.stop_values.last().unwrap()).collect();
        let ls: Vec<f64> = b.systems.iter().map(|s| s.likelihood).collect();
        let e = stats::weighted_mean(&terminal, &ls);
        assert!(e.within(100.0, 3.0, 1e-9), "{e:?}");
        assert!(b.certificate.min_likelihood > 0.0);
    }

    #[test]
    fn corrupted_shadow_is_caught() {
        let grid = Arc::new(TimeGrid::uniform(0.25, 100).unwrap());
        let model = Model::Gbm {
            mu: 0.0,
            sigma: 0.2,
            s0: 100.0,
        };
        let paths = model.sample(grid, 50, 3).unwrap();
        let skels = extract_ladders(&paths, 0.1, &LadderOptions::default()).unwrap();
        let mut b = build_cps_1d(&paths, &skels, &RetirementSchedule::Constant { alpha: 0.5 }, &interp()).unwrap();
        assert!(verify_sandwich(&b.systems, &paths, 0.1).pass);
        b.systems[4].grid_values.as_mut().unwrap()[37] *= 1.1f64.powi(4);
        let r = verify_sandwich(&b.systems, &paths, 0.1);
        assert!(!r.pass);
        let v = r.first_violation.unwrap();
        assert_eq!(v.path, 4);
        assert!((v.t - paths[4].grid.times()[37]).abs() < 1e-15);
    }

    #[test]
    fn two_point_terminal_law() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 500).unwrap());
        let model = Model::Gbm {
            mu: 0.0,
            sigma: 0.2,
            s0: 100.0,
        };
        let paths = model.sample(grid, 4000, 11).unwrap();
        let tp = crate::walk::two_point_measure(100.0, 80.0, 120.0, 0.05).unwrap();
        let skels = extract_ladders(&paths, tp.eps_prime, &LadderOptions::default()).unwrap();
        let b = build_cps_1d_at(&paths, &skels, &tp.schedule(), tp.x0, &interp()).unwrap();
        assert!(b.sandwich.pass);
        assert!(b.systems[0].eps < 0.05);
        let mut hits = Vec::new();
        let mut ws = Vec::new();
        for s in &b.systems {
            let x = *s.stop_values.last().unwrap();
            if s.likelihood > 0.0 {
                assert!((x - 80.0).abs() < 1e-9 || (x - 120.0).abs() < 1e-9, "terminal {x}");
            }
            hits.push(if x > 100.0 { 1.0 } else { 0.0 });
            ws.push(s.likelihood);
        }
        let e = stats::weighted_mean(&hits, &ws);
        assert!(e.within(tp.prob_v, 3.0, 1e-9), "{e:?} vs {}", tp.prob_v);
    }

    #[test]
    fn two_asset_chain() {
        let grid = Arc::new(TimeGrid::uniform(0.25, 200).unwrap());
        let model = Model::MultiGbm {
            mu: vec![0.0, 0.0],
            sigma: vec![0.2, 0.2],
            s0: vec![100.0, 100.0],
            corr: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let paths = model.sample(grid, 2000, 5).unwrap();
        let skels = extract_ladders(&paths, 0.1, &LadderOptions::default()).unwrap();
        let b = build_cps_multi(&paths, &skels, &interp()).unwrap();
        assert!(b.sandwich.pass && b.sandwich.interior_checked);
        assert!(b.esscher.iter().all(|r| r.moment_violation <= 1e-8));
        let l2 = b.certificate.l2_total.unwrap();
        assert!(l2.mean <= 2.0 + 3.0 * l2.stderr);
        assert!(b.certificate.pass, "{:?}", b.certificate);
        assert_eq!(b.certificate.zero_likelihood_paths, 0);
    }

    #[test]
    fn target_spread() {
        let e = input_eps_for_target(0.1);
        assert!(((1.0 + e).powi(3) - 1.1).abs() < 1e-14);
    }
}
