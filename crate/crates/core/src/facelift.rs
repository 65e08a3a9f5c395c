//! Concave envelopes, wealth under proportional costs, and the static upper /
//! dual lower price bounds whose squeeze exhibits `p_0(g(S_T)) = ĝ(S_0)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cps::{self, CpsOptions};
use crate::error::{domain, Error, Result};
use crate::paths::SamplePath;
use crate::skeleton::{extract_ladders, LadderOptions};
use crate::stats::{self, Estimate};
use crate::walk::two_point_measure;

/// A payoff sampled at positive abscissae, with declared behaviour at the
/// ends: `g(0+) = left_limit` (possibly `+∞`) and slope `right_slope` beyond
/// the last sample. Between samples `g` is read as piecewise linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffCurve {
    pub xs: Vec<f64>,
    pub gs: Vec<f64>,
    pub lower_bound: f64,
    pub left_limit: f64,
    pub right_slope: f64,
}

impl PayoffCurve {
    pub fn new(mut points: Vec<(f64, f64)>, left_limit: f64, right_slope: f64, lower_bound: f64) -> Result<Self> {
        if points.is_empty() {
            return domain("payoff needs at least one sample");
        }
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                return domain(format!("duplicate payoff abscissa {}", w[0].0));
            }
        }
        for &(x, g) in &points {
            if !(x > 0.0 && x.is_finite()) || !g.is_finite() {
                return domain(format!("payoff sample ({x}, {g}) must have finite g and x > 0"));
            }
            if g < lower_bound {
                return domain(format!("payoff sample g({x}) = {g} below the declared lower bound {lower_bound}"));
            }
        }
        if left_limit.is_nan() || left_limit < lower_bound {
            return domain("left limit must be a number (or +inf) not below the lower bound");
        }
        if !right_slope.is_finite() {
            return domain("right slope must be finite");
        }
        if right_slope < 0.0 && lower_bound.is_finite() {
            // g would eventually cross any finite lower bound.
            return domain("a negative right slope contradicts a finite lower bound");
        }
        let (xs, gs) = points.into_iter().unzip();
        Ok(Self {
            xs,
            gs,
            lower_bound,
            left_limit,
            right_slope,
        })
    }

    /// `(x − k)⁺` sampled on `xs` plus the strike.
    pub fn call(strike: f64, xs: &[f64]) -> Result<Self> {
        Self::new(kinked(strike, xs, |x| (x - strike).max(0.0)), 0.0, 1.0, 0.0)
    }

    /// `(k − x)⁺` sampled on `xs` plus the strike.
    pub fn put(strike: f64, xs: &[f64]) -> Result<Self> {
        Self::new(kinked(strike, xs, |x| (strike - x).max(0.0)), strike, 0.0, 0.0)
    }

    pub fn linear(a: f64, b: f64, xs: &[f64]) -> Result<Self> {
        let lb = if b >= 0.0 { a.min(a + b * xs[0]) } else { f64::NEG_INFINITY };
        Self::new(xs.iter().map(|&x| (x, a + b * x)).collect(), a, b, lb)
    }

    pub fn constant(c: f64, xs: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| (x, c)).collect(), c, 0.0, c)
    }

    /// Piecewise-linear reading of the samples, joined to `(0, left_limit)` on
    /// the left and extended with `right_slope` on the right. With an infinite
    /// left limit the first sample value is used below the first abscissa.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            return self.gs[n - 1] + self.right_slope * (x - self.xs[n - 1]);
        }
        if x <= self.xs[0] {
            if !self.left_limit.is_finite() {
                return self.gs[0];
            }
            let t = x / self.xs[0];
            return self.left_limit + t * (self.gs[0] - self.left_limit);
        }
        let i = self.xs.partition_point(|v| *v <= x);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let t = (x - x0) / (x1 - x0);
        self.gs[i - 1] + t * (self.gs[i] - self.gs[i - 1])
    }
}

fn kinked(strike: f64, xs: &[f64], f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = xs.to_vec();
    if strike > 0.0 && !pts.contains(&strike) {
        pts.push(strike);
    }
    pts.into_iter().map(|x| (x, f(x))).collect()
}

/// The concave envelope `ĝ`: hull vertices (the first may sit at `x = 0`),
/// followed by a ray of slope `right_slope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub vertices: Vec<(f64, f64)>,
    pub ray_slope: f64,
    /// `ĝ ≡ +∞` (infinite left limit).
    pub infinite: bool,
    /// `ĝ` on the payoff's sample abscissae.
    pub values: Vec<f64>,
    pub contact: Vec<bool>,
}

impl EnvelopeResult {
    pub fn value(&self, x: f64) -> f64 {
        if self.infinite {
            return f64::INFINITY;
        }
        let v = &self.vertices;
        let last = v[v.len() - 1];
        if x >= last.0 {
            return last.1 + self.ray_slope * (x - last.0);
        }
        if x <= v[0].0 {
            // Only reachable when the hull starts right of 0 (never, since
            // the left point is always included); kept for safety.
            return v[0].1;
        }
        let i = v.partition_point(|p| p.0 <= x);
        let (a, b) = (v[i - 1], v[i]);
        a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
    }

    /// Right derivative `ĝ′₊(x)`: slope of the hull piece starting at or
    /// straddling `x`.
    pub fn right_derivative(&self, x: f64) -> f64 {
        if self.infinite {
            return f64::NAN;
        }
        let v = &self.vertices;
        let i = v.partition_point(|p| p.0 <= x);
        if i >= v.len() {
            return self.ray_slope;
        }
        if i == 0 {
            return (v[1.min(v.len() - 1)].1 - v[0].1) / (v[1.min(v.len() - 1)].0 - v[0].0);
        }
        (v[i].1 - v[i - 1].1) / (v[i].0 - v[i - 1].0)
    }

    /// End points of the hull piece containing `x`; `None` on the right means
    /// the ray.
    pub fn chord(&self, x: f64) -> (f64, Option<f64>) {
        let v = &self.vertices;
        let i = v.partition_point(|p| p.0 <= x);
        if i >= v.len() {
            (v[v.len() - 1].0, None)
        } else {
            (v[i.max(1) - 1].0, Some(v[i].0))
        }
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Upper concave hull of `(0, left_limit)` and the samples, capped by the
/// supporting ray of slope `right_slope`.
pub fn concave_envelope(curve: &PayoffCurve) -> EnvelopeResult {
    let n = curve.xs.len();
    if curve.left_limit == f64::INFINITY {
        return EnvelopeResult {
            vertices: vec![(0.0, f64::INFINITY)],
            ray_slope: curve.right_slope,
            infinite: true,
            values: vec![f64::INFINITY; n],
            contact: vec![false; n],
        };
    }
    let mut pts = Vec::with_capacity(n + 1);
    pts.push((0.0, curve.left_limit));
    pts.extend(curve.xs.iter().copied().zip(curve.gs.iter().copied()));
    // Vertex touched by the line of slope `right_slope`; the ray starts there.
    let r = curve.right_slope;
    let tangent = (0..pts.len())
        .max_by(|&a, &b| {
            let fa = pts[a].1 - r * pts[a].0;
            let fb = pts[b].1 - r * pts[b].0;
            fa.partial_cmp(&fb).unwrap().then(b.cmp(&a))
        })
        .unwrap();
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(tangent + 1);
    for &p in &pts[..=tangent] {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) >= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let mut env = EnvelopeResult {
        vertices: hull,
        ray_slope: r,
        infinite: false,
        values: Vec::new(),
        contact: Vec::new(),
    };
    env.values = curve.xs.iter().map(|&x| env.value(x)).collect();
    env.contact = env
        .values
        .iter()
        .zip(&curve.gs)
        .map(|(e, g)| (e - g).abs() <= 1e-12 * g.abs().max(1.0))
        .collect();
    env
}

/// Piecewise-constant position: `positions[k]` is held on
/// `(knots[k], knots[k+1]]`; nothing is held before the first knot and the
/// last position must be 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub knots: Vec<f64>,
    pub positions: Vec<f64>,
}

impl Strategy {
    pub fn buy_and_hold(amount: f64, horizon: f64) -> Self {
        Self {
            knots: vec![0.0, horizon],
            positions: vec![amount, 0.0],
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        if self.knots.is_empty() || self.knots.len() != self.positions.len() {
            return domain("strategy needs matching non-empty knots and positions");
        }
        if self.knots.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("strategy knots must be strictly increasing");
        }
        if self.knots[0] < 0.0 || *self.knots.last().unwrap() > horizon {
            return domain("strategy knots must lie in [0, T]");
        }
        if *self.positions.last().unwrap() != 0.0 {
            return domain("strategy must end flat");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wealth {
    pub terminal: f64,
    /// Minimum over grid times of the wealth after liquidating there.
    pub running_min: f64,
}

/// Self-financing wealth of `strategy` along `path` under proportional cost
/// `eps` (single asset).
pub fn wealth(strategy: &Strategy, path: &SamplePath, eps: f64) -> Result<Wealth> {
    if path.dim != 1 {
        return domain("wealth is defined for a single asset");
    }
    strategy.validate(path.grid.horizon())?;
    let idx: Vec<usize> = strategy
        .knots
        .iter()
        .map(|&t| path.grid.index_of(t).ok_or(Error::OffGridKnot(t)))
        .collect::<Result<_>>()?;
    let mut held = 0.0;
    let mut cash = 0.0; // gains minus costs so far
    let mut running_min = 0.0_f64;
    let mut next = 0;
    for k in 0..path.len() {
        let s = path.scalar(k);
        if k > 0 {
            cash += held * (s - path.scalar(k - 1));
        }
        if next < idx.len() && idx[next] == k {
            let target = strategy.positions[next];
            cash -= eps * s * (target - held).abs();
            held = target;
            next += 1;
        }
        running_min = running_min.min(cash - eps * s * held.abs());
    }
    Ok(Wealth {
        terminal: cash,
        running_min,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticUpper {
    pub price: f64,
    pub beta: f64,
    pub envelope: f64,
    /// `J` in `ĝ(S_0) + Jε`, i.e. `2|β|S_0`.
    pub j_constant: f64,
    pub infinite: bool,
    pub certified_paths: usize,
}

/// `ĝ(s0) + 2ε|β|s0` with `β − ε|β| = ĝ′₊(s0)`; the buy-and-hold hedge is
/// checked to superreplicate on every path supplied.
pub fn static_upper_price(curve: &PayoffCurve, s0: f64, eps: f64, paths: &[SamplePath]) -> Result<StaticUpper> {
    if !(s0 > 0.0) || !(0.0..1.0).contains(&eps) {
        return domain("static upper price needs s0 > 0 and eps in [0, 1)");
    }
    let env = concave_envelope(curve);
    if env.infinite {
        return Ok(StaticUpper {
            price: f64::INFINITY,
            beta: f64::NAN,
            envelope: f64::INFINITY,
            j_constant: f64::NAN,
            infinite: true,
            certified_paths: 0,
        });
    }
    let top = env.value(s0);
    let slope = env.right_derivative(s0);
    let beta = if slope >= 0.0 { slope / (1.0 - eps) } else { slope / (1.0 + eps) };
    let price = top + 2.0 * eps * beta.abs() * s0;
    let hedge = Strategy::buy_and_hold(beta, 0.0);
    let checks: Vec<Result<()>> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            if (p.scalar(0) - s0).abs() > 1e-9 * s0 {
                return domain(format!("path {i} does not start at s0"));
            }
            let st = Strategy {
                knots: vec![0.0, p.grid.horizon()],
                ..hedge.clone()
            };
            let w = wealth(&st, p, eps)?;
            let payoff = curve.eval(*p.terminal().first().unwrap());
            if price + w.terminal < payoff - 1e-9 * payoff.abs().max(price.abs()).max(1.0) {
                return Err(Error::Superreplication {
                    path: i,
                    wealth: price + w.terminal,
                    payoff,
                });
            }
            Ok(())
        })
        .collect();
    checks.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(StaticUpper {
        price,
        beta,
        envelope: top,
        j_constant: 2.0 * beta.abs() * s0,
        infinite: false,
        certified_paths: paths.len(),
    })
}

/// Chord value `g(u)(v − s)/(v − u) + g(v)(s − u)/(v − u)`.
pub fn chord_value(curve: &PayoffCurve, u: f64, v: f64, s: f64) -> f64 {
    (curve.eval(u) * (v - s) + curve.eval(v) * (s - u)) / (v - u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowerOptions {
    /// Defaults to `10⁻²·max(1, |ĝ(s0)|)`.
    pub delta: Option<f64>,
    /// Enforce the neighbourhood containments around `u` and `v`.
    pub strict: bool,
    /// Also run the full two-point price system and report its weighted mean.
    pub direct: bool,
}

impl Default for LowerOptions {
    fn default() -> Self {
        Self {
            delta: None,
            strict: false,
            direct: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualLower {
    pub price: Estimate,
    pub delta: f64,
    pub u: f64,
    pub v: f64,
    pub chord: f64,
    pub eps_prime: f64,
    pub x0: f64,
    pub prob_u: f64,
    pub prob_v: f64,
    /// Paths whose final segment fed the estimate.
    pub n_segments: usize,
    /// Share of ladder stops whose grid price overshot the snapped level by
    /// a full `ε'` step or more.
    pub coarse_rate: f64,
    /// Weighted mean of `g(S_T)` under the full two-point system, with its
    /// effective sample size.
    pub direct: Option<(Estimate, f64)>,
}

/// Largest tolerated share of level-skipping stops in [`dual_lower_price`].
pub const MAX_COARSE_RATE: f64 = 0.25;

/// Picks `(u, v)` around `s0` with chord value above `ĝ(s0) − δ/3`, starting
/// from the envelope piece containing `s0`, moving open ends geometrically
/// towards 0 and ∞ or, at a contact point, shrinking towards `s0`.

pub fn select_chord(curve: &PayoffCurve, env: &EnvelopeResult, s0: f64, delta: f64) -> Result<(f64, f64, f64)> {
    let target = env.value(s0) - delta / 3.0;
    let (a, b) = env.chord(s0);
    let a = (a > 0.0 && a < s0).then_some(a);
    let b = b.filter(|b| *b > s0);
    // Open ends are widened; when s0 is itself a contact point a narrow chord
    // around it may be the only one that gets close.
    for k in 1..=200 {
        let (wide, narrow) = (2f64.powi(k), 1.0 + 0.5f64.powi(k));
        for f in [wide, narrow] {
            let u = a.unwrap_or(s0 / f);
            let v = b.unwrap_or(s0 * f);
            let c = chord_value(curve, u, v, s0);
            if c > target {
                return Ok((u, v, c));
            }
        }
    }
    Err(Error::ChordBracket { u: 0.0, v: f64::INFINITY, s0 })
}

/// Dual lower bound `E_Q[g(S_T)]` for the two-point price system on `(u, v)`.
///
/// Under that system the walk ends at `u` or `v` with the exact
/// probabilities of the grid-fitted two-point law, and the price then stays
/// in the last band until `T`. The estimate combines the exact law with the
/// empirical distribution of that last-segment move `S_T / anchor`, read off
/// the ensemble's ladders at the fitted spread.
pub fn dual_lower_price(
    curve: &PayoffCurve,
    s0: f64,
    eps: f64,
    paths: &[SamplePath],
    opts: &LowerOptions,
) -> Result<DualLower> {
    if paths.is_empty() {
        return domain("dual lower price needs a path ensemble");
    }
    let env = concave_envelope(curve);
    if env.infinite {
        return domain("the envelope is infinite; the dual bound is unbounded");
    }
    let top = env.value(s0);
    let delta = opts.delta.unwrap_or(1e-2 * top.abs().max(1.0));
    if !(delta > 0.0) {
        return domain("delta must be positive");
    }
    let (u, v, chord) = select_chord(curve, &env, s0, delta)?;
    let tp = two_point_measure(s0, u, v, eps)?;
    if opts.strict {
        check_neighbourhoods(curve, &tp, delta)?;
    }
    let skels = extract_ladders(paths, tp.eps_prime, &LadderOptions::default())?;
    // A grid step that skips levels breaks the walk the two-point law lives on.
    let step = tp.eps_prime.ln_1p();
    let (mut coarse, mut stops) = (0usize, 0usize);
    for (sk, p) in skels.iter().zip(paths) {
        for st in &sk.stops[1..] {
            stops += 1;
            if (p.at(st.grid_index)[0] / st.anchor[0]).ln().abs() >= step {
                coarse += 1;
            }
        }
    }
    let coarse_rate = if stops == 0 { 0.0 } else { coarse as f64 / stops as f64 };
    if coarse_rate > MAX_COARSE_RATE {
        return Err(Error::EpsTooLarge {
            eps: tp.eps_prime,
            detail: format!(
                "{:.0}% of ladder stops skip a level at the fitted spread; refine the time grid or raise delta",
                100.0 * coarse_rate
            ),
        });
    }
    let scale = s0 / tp.x0;
    let h: Vec<f64> = skels
        .iter()
        .zip(paths)
        .map(|(sk, p)| {
            let anchor = sk.stops.last().unwrap().anchor[0];
            let rho = p.terminal()[0] / anchor;
            tp.prob_u * curve.eval(u * scale * rho) + tp.prob_v * curve.eval(v * scale * rho)
        })
        .collect();
    let price = stats::mean_stderr(&h);
    let direct = if opts.direct {
        let b = cps::build_cps_1d_at(
            paths,
            &skels,
            &tp.schedule(),
            tp.x0,
            &CpsOptions {
                strict: false,
                ..CpsOptions::default()
            },
        )?;
        let ls: Vec<f64> = b.systems.iter().map(|s| s.likelihood).collect();
        let gs: Vec<f64> = paths.iter().map(|p| curve.eval(p.terminal()[0])).collect();
        Some((stats::weighted_mean(&gs, &ls), stats::effective_sample_size(&ls)))
    } else {
        None
    };
    Ok(DualLower {
        price,
        delta,
        u,
        v,
        chord,
        eps_prime: tp.eps_prime,
        x0: tp.x0,
        prob_u: tp.prob_u,
        prob_v: tp.prob_v,
        n_segments: h.len(),
        coarse_rate,
        direct,
    })
}

/// `g ≥ g(u) − δ/2` on `u·(1+ε')^{[−3,3]}` and likewise at `v`: the shadow
/// terminal is within that range of the true one.
fn check_neighbourhoods(curve: &PayoffCurve, tp: &crate::walk::TwoPointMeasure, delta: f64) -> Result<()> {
    let reach = 3.0 * tp.eps_prime.ln_1p();
    for (name, c) in [("u", tp.u), ("v", tp.v)] {
        let floor = curve.eval(c) - delta / 2.0;
        for k in 0..=64 {
            let y = c * (reach * (2.0 * k as f64 / 64.0 - 1.0)).exp();
            if curve.eval(y) < floor {
                return Err(Error::EpsTooLarge {
                    eps: tp.eps_prime,
                    detail: format!("g({y}) < g({name}) − δ/2 near {name} = {c}"),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeRow {
    pub eps: f64,
    pub upper: f64,
    pub lower: f64,
    pub envelope: f64,
    pub mc_stderr_lower: f64,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeReport {
    pub rows: Vec<SqueezeRow>,
    pub delta: f64,
    /// Upper column non-increasing and `lower ≤ upper` (within 3 standard
    /// errors) throughout.
    pub ordered: bool,
    /// `ĝ(s0) − lower ≤ δ + 3·stderr` at the smallest ε.
    pub lower_close: bool,
    /// Static hedge per row: shares `β` and the constant `J = 2|β|s0`.
    pub hedges: Vec<Hedge>,
    pub details: Vec<DualLower>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hedge {
    pub eps: f64,
    pub beta: f64,
    pub j_constant: f64,
}

/// Upper and lower bounds for each ε (largest first).
pub fn squeeze_report(
    curve: &PayoffCurve,
    s0: f64,
    eps_seq: &[f64],
    paths: &[SamplePath],
    seed: u64,
    opts: &LowerOptions,
) -> Result<SqueezeReport> {
    if eps_seq.is_empty() || eps_seq.windows(2).any(|w| !(w[0] > w[1])) {
        return domain("eps sequence must be non-empty and strictly decreasing");
    }
    let mut rows = Vec::new();
    let mut details = Vec::new();
    let mut hedges = Vec::new();
    for &eps in eps_seq {
        let up = static_upper_price(curve, s0, eps, paths)?;
        let lo = dual_lower_price(curve, s0, eps, paths, opts)?;
        rows.push(SqueezeRow {
            eps,
            upper: up.price,
            lower: lo.price.mean,
            envelope: up.envelope,
            mc_stderr_lower: lo.price.stderr,
            n_paths: paths.len(),
            seed,
        });
        hedges.push(Hedge {
            eps,
            beta: up.beta,
            j_constant: up.j_constant,
        });
        details.push(lo);
    }
    let delta = details[0].delta;
    let ordered = rows.windows(2).all(|w| w[1].upper <= w[0].upper + 1e-12)
        && rows.iter().all(|r| r.lower <= r.upper + 3.0 * r.mc_stderr_lower);
    let last = rows.last().unwrap();
    let lower_close = last.envelope - last.lower <= delta + 3.0 * last.mc_stderr_lower;
    Ok(SqueezeReport {
        rows,
        delta,
        ordered,
        lower_close,
        hedges,
        details,
    })
}
