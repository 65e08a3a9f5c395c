//! Random walks with retirement on the geometric grid `x0 (1+ε)^k` and their
//! martingale measures `Q^α`: per-step measures, likelihood increments,
//! retirement schedules (constant, integrability-controlling, two-point) and
//! an exact enumerated tree for auditing.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng;

/// A realised walk: `X_n = x0 (1+ε)^{R_1 + … + R_n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetiredWalk {
    pub x0: f64,
    pub eps: f64,
    pub marks: Vec<i8>,
}

impl RetiredWalk {
    pub fn new(x0: f64, eps: f64, marks: Vec<i8>) -> Result<Self> {
        if !(x0 > 0.0) || !(eps > 0.0) {
            return domain("walk needs x0 > 0 and eps > 0");
        }
        if marks.iter().any(|m| !(-1..=1).contains(m)) {
            return domain("marks must lie in {-1, 0, 1}");
        }
        if let Some(first_zero) = marks.iter().position(|m| *m == 0) {
            if marks[first_zero..].iter().any(|m| *m != 0) {
                return domain("marks after retirement must all be 0");
            }
        }
        Ok(Self { x0, eps, marks })
    }

    pub fn is_retired(&self) -> bool {
        self.marks.last() == Some(&0)
    }

    /// First index `n` with `R_n = 0`.
    pub fn retirement_time(&self) -> Option<usize> {
        self.marks.iter().position(|m| *m == 0).map(|i| i + 1)
    }

    pub fn levels(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.marks.len() + 1);
        let mut z = 0i64;
        out.push(0);
        for m in &self.marks {
            z += *m as i64;
            out.push(z);
        }
        out
    }

    pub fn values(&self) -> Vec<f64> {
        self.levels()
            .into_iter()
            .map(|z| self.x0 * (1.0 + self.eps).powi(z as i32))
            .collect()
    }
}

/// Conditional probabilities of the marks `0, −1, +1` for one step under `Q^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMeasure {
    pub alpha: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl StepMeasure {
    pub fn prob(&self, mark: i8) -> f64 {
        match mark {
            0 => self.alpha,
            -1 => self.lambda,
            _ => self.mu,
        }
    }
}

/// Solves `α + λ + μ = 1`, `α + λ/(1+ε) + μ(1+ε) = 1` for `(λ, μ)`.
pub fn step_measure(alpha: f64, eps: f64) -> Result<StepMeasure> {
    if !(0.0..=1.0).contains(&alpha) {
        return domain(format!("alpha must lie in [0, 1], got {alpha}"));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return domain(format!("eps must be > 0, got {eps}"));
    }
    let rest = 1.0 - alpha;
    Ok(StepMeasure {
        alpha,
        lambda: rest * (1.0 + eps) / (2.0 + eps),
        mu: rest / (2.0 + eps),
    })
}

/// Reference (real-world) conditional probabilities of the marks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkProbs {
    pub down: f64,
    pub retire: f64,
    pub up: f64,
}

impl MarkProbs {
    pub const UNIFORM: MarkProbs = MarkProbs {
        down: 1.0 / 3.0,
        retire: 1.0 / 3.0,
        up: 1.0 / 3.0,
    };

    pub fn prob(&self, mark: i8) -> f64 {
        match mark {
            0 => self.retire,
            -1 => self.down,
            _ => self.up,
        }
    }
}

/// Likelihood increment `Z_n` for the realised mark. Equals 1 once the walk
/// has already retired.
pub fn density_increment(mark: i8, step: &StepMeasure, reference: &MarkProbs, retired: bool) -> Result<f64> {
    if retired {
        return Ok(1.0);
    }
    for m in [-1i8, 0, 1] {
        if !(reference.prob(m) > 0.0) {
            return Err(Error::ZeroReferenceProbability { mark: m });
        }
    }
    Ok(step.prob(mark) / reference.prob(mark))
}

/// What a schedule may look at before step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WalkState {
    /// Index of the step about to be taken (1-based).
    pub step: usize,
    pub level: i64,
    /// `max_{i < step} |level_i|`.
    pub max_abs: i64,
    /// Whether `max_abs` was first attained at the current level, i.e. the
    /// walk sits at a stopping time `τ_{max_abs}`.
    pub first_at_max: bool,
}

impl WalkState {
    pub const START: WalkState = WalkState {
        step: 1,
        level: 0,
        max_abs: 0,
        first_at_max: true,
    };

    pub fn advance(&self, mark: i8) -> WalkState {
        let level = self.level + mark as i64;
        let (max_abs, first_at_max) = if level.abs() > self.max_abs {
            (level.abs(), true)
        } else {
            (self.max_abs, false)
        };
        WalkState {
            step: self.step + 1,
            level,
            max_abs,
            first_at_max,
        }
    }
}

/// Predictable retirement probabilities `α_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RetirementSchedule {
    Constant {
        alpha: f64,
    },
    /// `alphas[n - 1]` at step `n`; the last entry repeats.
    StepIndexed {
        alphas: Vec<f64>,
    },
    /// Level-dependent probabilities with a default.
    LevelIndexed {
        alphas: BTreeMap<i64, f64>,
        default: f64,
    },
    /// Retire with probability `1 − δ_m` right after `|level|` first reaches
    /// `m − 1`; `default` elsewhere.
    Integrability {
        /// `deltas[m - 1] = δ_m`; the last entry repeats beyond the table.
        deltas: Vec<f64>,
        default: f64,
        /// Symmetrized, monotone level values `s_0, s_1, …`.
        levels: Vec<f64>,
    },
    /// Never retire until the level hits `lower` or `upper`, then retire surely.
    TwoPoint {
        lower: i64,
        upper: i64,
    },
    /// `inner` up to step `after`, then certain retirement.
    Truncated {
        inner: Box<RetirementSchedule>,
        after: usize,
    },
}

impl RetirementSchedule {
    pub fn alpha(&self, s: &WalkState) -> f64 {
        match self {
            RetirementSchedule::Constant { alpha } => *alpha,
            RetirementSchedule::StepIndexed { alphas } => {
                let i = (s.step - 1).min(alphas.len().saturating_sub(1));
                alphas.get(i).copied().unwrap_or(0.5)
            }
            RetirementSchedule::LevelIndexed { alphas, default } => {
                alphas.get(&s.level).copied().unwrap_or(*default)
            }
            RetirementSchedule::Integrability {
                deltas, default, ..
            } => {
                if s.first_at_max {
                    let m = s.max_abs as usize; // δ_{m+1} sits at index m
                    1.0 - deltas[m.min(deltas.len() - 1)]
                } else {
                    *default
                }
            }
            RetirementSchedule::TwoPoint { lower, upper } => {
                if s.level <= *lower || s.level >= *upper {
                    1.0
                } else {
                    0.0
                }
            }
            RetirementSchedule::Truncated { inner, after } => {
                if s.step > *after {
                    1.0
                } else {
                    inner.alpha(s)
                }
            }
        }
    }

    /// Whether `α_n` depends only on the step index.
    pub fn path_independent(&self) -> bool {
        match self {
            RetirementSchedule::Constant { .. } | RetirementSchedule::StepIndexed { .. } => true,
            RetirementSchedule::Truncated { inner, .. } => inner.path_independent(),
            _ => false,
        }
    }

    /// True when every `α_n ∈ (0, 1)`, i.e. `Q^α ~ P`.
    pub fn is_equivalent(&self) -> bool {
        let inside = |a: &f64| *a > 0.0 && *a < 1.0;
        match self {
            RetirementSchedule::Constant { alpha } => inside(alpha),
            RetirementSchedule::StepIndexed { alphas } => alphas.iter().all(inside),
            RetirementSchedule::LevelIndexed { alphas, default } => {
                alphas.values().all(inside) && inside(default)
            }
            RetirementSchedule::Integrability { deltas, default, .. } => {
                inside(default) && deltas.iter().all(|d| *d > 0.0 && *d < 1.0)
            }
            RetirementSchedule::TwoPoint { .. } | RetirementSchedule::Truncated { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |a: f64| (0.0..=1.0).contains(&a);
        let valid = match self {
            RetirementSchedule::Constant { alpha } => ok(*alpha),
            RetirementSchedule::StepIndexed { alphas } => !alphas.is_empty() && alphas.iter().all(|a| ok(*a)),
            RetirementSchedule::LevelIndexed { alphas, default } => alphas.values().all(|a| ok(*a)) && ok(*default),
            RetirementSchedule::Integrability { deltas, default, .. } => {
                !deltas.is_empty() && deltas.iter().all(|d| ok(*d)) && ok(*default)
            }
            RetirementSchedule::TwoPoint { lower, upper } => lower < &0 && upper > &0,
            RetirementSchedule::Truncated { inner, .. } => inner.validate().is_ok(),
        };
        if valid {
            Ok(())
        } else {
            domain("retirement schedule has probabilities outside [0, 1] or invalid levels")
        }
    }

    /// Upper bound `s_0 + Σ (s_m − s_{m−1}) η_m` on `E_Q[sup f(X_n)]`
    /// (integrability schedules only).
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            RetirementSchedule::Integrability { deltas, levels, .. } => {
                let mut eta = 1.0;
                let mut total = levels[0];
                for m in 1..levels.len() {
                    eta *= deltas[(m - 1).min(deltas.len() - 1)];
                    total += (levels[m] - levels[m - 1]) * eta;
                }
                Some(total)
            }
            _ => None,
        }
    }

    /// `η_m = ∏_{k ≤ m} δ_k` (integrability schedules only).
    pub fn eta(&self, m: usize) -> Option<f64> {
        match self {
            RetirementSchedule::Integrability { deltas, .. } => Some(
                (1..=m)
                    .map(|k| deltas[(k - 1).min(deltas.len() - 1)])
                    .product(),
            ),
            _ => None,
        }
    }
}

/// Number of grid levels tabulated by [`integrability_schedule`].
pub const INTEGRABILITY_LEVELS: usize = 4096;

/// Builds the retirement schedule that makes `E_Q[sup_n f(X_n)]` finite:
/// `f` is symmetrized and made monotone in `|level|`, and `δ_m` is chosen so
/// that `(s_m − s_{m−1}) η_m < budget(m)` (half the budget, for strictness).
pub fn integrability_schedule(
    f: impl Fn(f64) -> f64,
    x0: f64,
    eps: f64,
    budget: impl Fn(usize) -> f64,
    default_alpha: f64,
) -> Result<RetirementSchedule> {
    if !(x0 > 0.0) || !(eps > 0.0) {
        return domain("integrability schedule needs x0 > 0 and eps > 0");
    }
    if !(default_alpha > 0.0 && default_alpha < 1.0) {
        return domain("default alpha must lie in (0, 1)");
    }
    let m_max = INTEGRABILITY_LEVELS;
    let mut levels = Vec::with_capacity(m_max + 1);
    let mut running = f(x0);
    levels.push(running);
    for m in 1..=m_max {
        let up = f(x0 * (1.0 + eps).powi(m as i32));
        let down = f(x0 * (1.0 + eps).powi(-(m as i32)));
        running = running.max(up).max(down);
        levels.push(running);
    }
    let default_delta = 1.0 - default_alpha;
    let mut deltas = Vec::with_capacity(m_max);
    let mut eta_prev = 1.0_f64;
    for m in 1..=m_max {
        let gap = levels[m] - levels[m - 1];
        let delta = if gap > 0.0 && gap.is_finite() {
            let allowed = 0.5 * budget(m) / (gap * eta_prev);
            allowed.min(default_delta).max(f64::MIN_POSITIVE)
        } else if gap.is_finite() {
            default_delta
        } else {
            f64::MIN_POSITIVE
        };
        deltas.push(delta);
        eta_prev = (eta_prev * delta).max(f64::MIN_POSITIVE);
    }
    Ok(RetirementSchedule::Integrability {
        deltas,
        default: default_alpha,
        levels,
    })
}

/// `2^{-m}`.
pub fn geometric_budget(m: usize) -> f64 {
    0.5f64.powi(m as i32)
}

/// Grid fit and terminal law of the two-point martingale measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPointMeasure {
    pub eps_prime: f64,
    pub x0: f64,
    /// `u = x0 (1+ε')^j`, `j < 0`.
    pub j: i64,
    /// `v = x0 (1+ε')^k`, `k > 0`.
    pub k: i64,
    pub u: f64,
    pub v: f64,
    pub prob_u: f64,
    pub prob_v: f64,
}

impl TwoPointMeasure {
    pub fn schedule(&self) -> RetirementSchedule {
        RetirementSchedule::TwoPoint {
            lower: self.j,
            upper: self.k,
        }
    }
}

/// Finds `ε' < ε` and `x0` near `s0` such that `u` and `v` both sit on the
/// grid `x0 (1+ε')^ℤ`, by taking the smallest number of grid steps `m` between
/// `u` and `v` that works.
pub fn two_point_measure(s0: f64, u: f64, v: f64, eps: f64) -> Result<TwoPointMeasure> {
    if !(0.0 < u && u < s0 && s0 < v) || !v.is_finite() {
        return domain(format!("two-point measure needs 0 < u < s0 < v (got {u}, {s0}, {v})"));
    }
    if !(eps > 0.0) {
        return domain("eps must be > 0");
    }
    let span = (v / u).ln();
    let target = (s0 / u).ln();
    for m in 1..=10_000_000i64 {
        let step = span / m as f64;
        let eps_prime = step.exp_m1();
        if !(eps_prime < eps) {
            continue;
        }
        let i = (target / step).round() as i64;
        if i < 1 || i > m - 1 {
            continue;
        }
        let x0 = u * (i as f64 * step).exp();
        if !(x0 > s0 / (1.0 + eps_prime) && x0 < s0 * (1.0 + eps_prime)) {
            continue;
        }
        return Ok(TwoPointMeasure {
            eps_prime,
            x0,
            j: -i,
            k: m - i,
            u,
            v,
            prob_u: (v - x0) / (v - u),
            prob_v: (x0 - u) / (v - u),
        });
    }
    domain("no grid fit found for the two-point measure")
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    /// `E[L_n 1_{not retired by n}]` for `n = 1..=horizon`.
    pub residuals: Vec<f64>,
    pub horizon: usize,
    pub residual: f64,
    pub passed: bool,
}

/// Tracks the `Q^α` mass of not-yet-retired walks and checks that it decays
/// below `tol` (which makes `E[L] = 1`). Stops at the first step where the
/// residual is below `tol`, or at `max_horizon`.
pub fn verify_density_normalizes(
    schedule: &RetirementSchedule,
    eps: f64,
    tol: f64,
    max_horizon: usize,
) -> Result<DensityReport> {
    schedule.validate()?;
    let mut residuals = Vec::new();
    if schedule.path_independent() {
        let mut mass = 1.0;
        for n in 1..=max_horizon {
            let s = WalkState {
                step: n,
                ..WalkState::START
            };
            mass *= 1.0 - schedule.alpha(&s);
            residuals.push(mass);
            if mass < tol {
                break;
            }
        }
    } else {
        // Dropped states are counted as surviving, so the residual stays an
        // upper bound.
        const PRUNE: f64 = 1e-24;
        let mut states: HashMap<(i64, i64, bool), f64> = HashMap::new();
        states.insert((0, 0, true), 1.0);
        let mut pruned = 0.0;
        for n in 1..=max_horizon {
            let mut next: HashMap<(i64, i64, bool), f64> = HashMap::with_capacity(states.len() * 2);
            for (&(level, max_abs, first_at_max), &mass) in &states {
                let s = WalkState {
                    step: n,
                    level,
                    max_abs,
                    first_at_max,
                };
                let sm = step_measure(schedule.alpha(&s), eps)?;
                for (mark, p) in [(-1i8, sm.lambda), (1i8, sm.mu)] {
                    let w = mass * p;
                    if w <= 0.0 {
                        continue;
                    }
                    if w < PRUNE {
                        pruned += w;
                        continue;
                    }
                    let t = s.advance(mark);
                    *next.entry((t.level, t.max_abs, t.first_at_max)).or_insert(0.0) += w;
                }
            }
            states = next;
            let live: f64 = states.values().sum();
            residuals.push(live + pruned);
            if live + pruned < tol {
                break;
            }
        }
    }
    let residual = *residuals.last().unwrap_or(&1.0);
    Ok(DensityReport {
        horizon: residuals.len(),
        residuals,
        residual,
        passed: residual < tol,
    })
}

/// Default horizon cap for [`verify_density_normalizes`].
pub const DEFAULT_DENSITY_HORIZON: usize = 10_000;

/// One node of an enumerated walk tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub depth: usize,
    pub state: WalkState,
    pub retired: bool,
    pub x: f64,
    /// Reference probability of reaching the node.
    pub p_mass: f64,
    /// `Q^α` probability of reaching the node.
    pub q_mass: f64,
    /// Transition under `Q^α` (only for expanded, non-retired nodes).
    pub step: Option<StepMeasure>,
    pub children: Vec<usize>,
}

/// The walk enumerated as a (non-recombining) trinomial tree up to `depth`,
/// with exact reference and `Q^α` path probabilities.
#[derive(Debug, Clone)]
pub struct ExactTree {
    pub x0: f64,
    pub eps: f64,
    pub depth: usize,
    pub nodes: Vec<TreeNode>,
}

impl ExactTree {
    pub fn build(
        x0: f64,
        eps: f64,
        schedule: &RetirementSchedule,
        reference: &MarkProbs,
        depth: usize,
    ) -> Result<Self> {
        if !(x0 > 0.0) {
            return domain("x0 must be > 0");
        }
        schedule.validate()?;
        let root = TreeNode {
            depth: 0,
            state: WalkState::START,
            retired: false,
            x: x0,
            p_mass: 1.0,
            q_mass: 1.0,
            step: None,
            children: Vec::new(),
        };
        let mut nodes = vec![root];
        let mut frontier = vec![0usize];
        for d in 0..depth {
            let mut next = Vec::new();
            for &id in &frontier {
                if nodes[id].retired {
                    continue;
                }
                let state = nodes[id].state;
                let sm = step_measure(schedule.alpha(&state), eps)?;
                nodes[id].step = Some(sm);
                for mark in [-1i8, 0, 1] {
                    let z = density_increment(mark, &sm, reference, false)?;
                    let p = nodes[id].p_mass * reference.prob(mark);
                    let child = TreeNode {
                        depth: d + 1,
                        state: state.advance(mark),
                        retired: mark == 0,
                        x: nodes[id].x * (1.0 + eps).powi(mark as i32),
                        p_mass: p,
                        q_mass: nodes[id].q_mass * reference.prob(mark) * z,
                        step: None,
                        children: Vec::new(),
                    };
                    nodes.push(child);
                    let cid = nodes.len() - 1;
                    nodes[id].children.push(cid);
                    next.push(cid);
                }
            }
            frontier = next;
        }
        Ok(Self {
            x0,
            eps,
            depth,
            nodes,
        })
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.children.is_empty())
    }

    /// Largest `|E_Q[X_{n+1} | node] − X_n|` over expanded nodes.
    pub fn max_martingale_residual(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| {
                let sm = n.step?;
                let e: f64 = n
                    .children
                    .iter()
                    .map(|&c| {
                        let child = &self.nodes[c];
                        let mark = (child.state.level - n.state.level) as i8;
                        sm.prob(mark) * child.x
                    })
                    .sum();
                Some((e - n.x).abs())
            })
            .reduce(f64::max)
            .unwrap_or(0.0)
    }

    pub fn total_leaf_q_mass(&self) -> f64 {
        self.leaves().map(|n| n.q_mass).sum()
    }

    /// `Σ_leaves L · P(leaf)` with `L = Q/P`.
    pub fn density_normalization(&self) -> f64 {
        self.leaves()
            .filter(|n| n.p_mass > 0.0)
            .map(|n| (n.q_mass / n.p_mass) * n.p_mass)
            .sum()
    }

    /// `Q^α` law of the leaf levels.
    pub fn terminal_law(&self) -> BTreeMap<i64, f64> {
        let mut law = BTreeMap::new();
        for n in self.leaves() {
            *law.entry(n.state.level).or_insert(0.0) += n.q_mass;
        }
        law
    }

    /// CSV dump `n,level,prob_down,prob_retire,prob_up,X` of expanded nodes.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "level", "prob_down", "prob_retire", "prob_up", "X"])?;
        for n in &self.nodes {
            if let Some(sm) = n.step {
                w.write_record(&[
                    n.depth.to_string(),
                    n.state.level.to_string(),
                    sm.lambda.to_string(),
                    sm.alpha.to_string(),
                    sm.mu.to_string(),
                    n.x.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Terminal law of the two-point walk obtained by propagating the recombining
/// tree over the levels `j..=k` until the unabsorbed mass drops below `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPointLaw {
    pub prob_u: f64,
    pub prob_v: f64,
    pub unabsorbed: f64,
    pub steps: usize,
}

pub fn two_point_tree_law(tp: &TwoPointMeasure, tol: f64, max_steps: usize) -> Result<TwoPointLaw> {
    let sm = step_measure(0.0, tp.eps_prime)?;
    let width = (tp.k - tp.j) as usize;
    let offset = -tp.j as usize;
    let mut mass = vec![0.0; width + 1];
    mass[offset] = 1.0;
    let (mut pu, mut pv) = (0.0, 0.0);
    let mut steps = 0;
    let mut live = 1.0;
    while live >= tol && steps < max_steps {
        let mut next = vec![0.0; width + 1];
        for (i, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            next[i - 1] += m * sm.lambda;
            next[i + 1] += m * sm.mu;
        }
        pu += next[0];
        pv += next[width];
        next[0] = 0.0;
        next[width] = 0.0;
        mass = next;
        live = mass.iter().sum();
        steps += 1;
    }
    Ok(TwoPointLaw {
        prob_u: pu,
        prob_v: pv,
        unabsorbed: live,
        steps,
    })
}

/// Draws walks directly under `Q^α` (marks from the step measures), stopping
/// at retirement or after `max_steps`.
pub fn simulate_walks(
    x0: f64,
    eps: f64,
    schedule: &RetirementSchedule,
    n_walks: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Vec<RetiredWalk>> {
    schedule.validate()?;
    (0..n_walks)
        .map(|w| {
            let mut rng = rng::stream(seed, w as u64);
            let mut state = WalkState::START;
            let mut marks = Vec::new();
            for _ in 0..max_steps {
                let sm = step_measure(schedule.alpha(&state), eps)?;
                let u: f64 = rng.gen();
                let mark = if u < sm.alpha {
                    0
                } else if u < sm.alpha + sm.lambda {
                    -1
                } else {
                    1
                };
                marks.push(mark);
                if mark == 0 {
                    break;
                }
                state = state.advance(mark);
            }
            RetiredWalk::new(x0, eps, marks)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent 2x2 solve of α + λ + μ = 1, α + λ/(1+ε) + μ(1+ε) = 1 by
    /// Cramer's rule.
    fn cramer(alpha: f64, eps: f64) -> (f64, f64) {
        let (a11, a12, b1) = (1.0, 1.0, 1.0 - alpha);
        let (a21, a22, b2) = (1.0 / (1.0 + eps), 1.0 + eps, 1.0 - alpha);
        let det = a11 * a22 - a12 * a21;
        ((b1 * a22 - a12 * b2) / det, (a11 * b2 - b1 * a21) / det)
    }

    #[test]
    fn step_measure_examples() {
        let s = step_measure(1.0, 0.3).unwrap();
        assert_eq!((s.alpha, s.lambda, s.mu), (1.0, 0.0, 0.0));

        let s = step_measure(0.5, 0.1).unwrap();
        let (l, m) = cramer(0.5, 0.1);
        assert!((s.lambda - l).abs() < 1e-12 && (s.mu - m).abs() < 1e-12);
        assert!((s.lambda - 0.261905).abs() < 1e-6);
        assert!((s.mu - 0.238095).abs() < 1e-6);

        let s = step_measure(0.0, 0.1).unwrap();
        assert!((s.lambda - 1.1 / 2.1).abs() < 1e-15);
        assert!((s.mu - 1.0 / 2.1).abs() < 1e-15);
        assert!((s.lambda / 1.1 + s.mu * 1.1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_measure_domain() {
        assert!(step_measure(-0.1, 0.1).is_err());
        assert!(step_measure(1.1, 0.1).is_err());
        assert!(step_measure(0.5, 0.0).is_err());
    }

    #[test]
    fn density_increment_examples() {
        let sm = step_measure(0.5, 0.1).unwrap();
        assert_eq!(density_increment(1, &sm, &MarkProbs::UNIFORM, true).unwrap(), 1.0);
        let r = MarkProbs {
            down: 0.25,
            retire: 0.25,
            up: 0.5,
        };
        assert!((density_increment(0, &sm, &r, false).unwrap() - 2.0).abs() < 1e-15);
        let z = density_increment(1, &sm, &MarkProbs::UNIFORM, false).unwrap();
        assert!((z - 0.714286).abs() < 1e-6);
        let bad = MarkProbs {
            down: 0.0,
            retire: 0.5,
            up: 0.5,
        };
        assert!(matches!(
            density_increment(1, &sm, &bad, false),
            Err(Error::ZeroReferenceProbability { mark: -1 })
        ));
    }

    #[test]
    fn density_residual_examples() {
        let r = verify_density_normalizes(&RetirementSchedule::Constant { alpha: 0.5 }, 0.1, 1e-6, 10_000).unwrap();
        assert!(r.passed);
        for (n, v) in r.residuals.iter().enumerate() {
            assert!((v - 0.5f64.powi(n as i32 + 1)).abs() < 1e-15);
        }
        let r = verify_density_normalizes(&RetirementSchedule::Constant { alpha: 1.0 }, 0.1, 1e-6, 10_000).unwrap();
        assert_eq!(r.horizon, 1);
        assert_eq!(r.residual, 0.0);
        let r = verify_density_normalizes(&RetirementSchedule::Constant { alpha: 0.0 }, 0.1, 1e-6, 200).unwrap();
        assert!(!r.passed);
        assert_eq!(r.residual, 1.0);
    }

    #[test]
    fn path_dependent_density_residual_matches_constant_case() {
        // level-indexed schedule that is actually constant
        let s = RetirementSchedule::LevelIndexed {
            alphas: BTreeMap::new(),
            default: 0.5,
        };
        let r = verify_density_normalizes(&s, 0.1, 1e-6, 100).unwrap();
        assert!(r.passed);
        assert!((r.residuals[4] - 0.5f64.powi(5)).abs() < 1e-15);
    }

    #[test]
    fn zero_function_gives_half_everywhere() {
        let s = integrability_schedule(|_| 0.0, 1.0, 0.1, geometric_budget, 0.5).unwrap();
        for st in [
            WalkState::START,
            WalkState::START.advance(1),
            WalkState::START.advance(1).advance(-1),
        ] {
            assert_eq!(s.alpha(&st), 0.5);
        }
    }

    #[test]
    fn identity_function_meets_budget() {
        let s = integrability_schedule(|x| x, 1.0, 0.1, geometric_budget, 0.5).unwrap();
        if let RetirementSchedule::Integrability { levels, .. } = &s {
            for m in 1..60 {
                let gap = levels[m] - levels[m - 1];
                assert!(gap * s.eta(m).unwrap() < geometric_budget(m));
            }
            assert!((levels[3] - 1.1f64.powi(3)).abs() < 1e-12);
        }
        let bound = s.sup_bound().unwrap();
        assert!(bound <= 1.0 + 1.0 + 1e-12);
        assert!(s.is_equivalent());
    }

    #[test]
    fn two_point_grid_fit_example() {
        let tp = two_point_measure(100.0, 80.0, 120.0, 0.05).unwrap();
        assert_eq!(tp.k - tp.j, 9);
        assert!((tp.eps_prime - (1.5f64.powf(1.0 / 9.0) - 1.0)).abs() < 1e-14);
        assert!((tp.eps_prime - 0.046082).abs() < 1e-6);
        let oracle_x0 = 80.0 * (1.5f64.ln() * 5.0 / 9.0).exp();
        assert!((tp.x0 - oracle_x0).abs() < 1e-9);
        assert!((tp.x0 - 100.2117).abs() < 1e-3);
        assert!(tp.x0 > 100.0 / (1.0 + tp.eps_prime) && tp.x0 < 100.0 * (1.0 + tp.eps_prime));
        assert!((tp.prob_v - (oracle_x0 - 80.0) / 40.0).abs() < 1e-12);
        assert!((tp.u * tp.prob_u + tp.v * tp.prob_v - tp.x0).abs() < 1e-12);
        assert!((tp.x0 * (1.0 + tp.eps_prime).powi(tp.j as i32) - 80.0).abs() < 1e-9);
        assert!((tp.x0 * (1.0 + tp.eps_prime).powi(tp.k as i32) - 120.0).abs() < 1e-9);
    }

    #[test]
    fn two_point_near_u_has_small_upper_mass() {
        let tp = two_point_measure(80.01, 80.0, 120.0, 0.05).unwrap();
        assert!(tp.prob_v < 0.01);
        assert!(tp.x0 > tp.u);
    }

    #[test]
    fn exact_tree_is_a_martingale() {
        let tree = ExactTree::build(1.0, 0.1, &RetirementSchedule::Constant { alpha: 0.5 }, &MarkProbs::UNIFORM, 8).unwrap();
        assert!(tree.max_martingale_residual() < 1e-12);
        assert!((tree.total_leaf_q_mass() - 1.0).abs() < 1e-12);
        assert!((tree.density_normalization() - 1.0).abs() < 1e-12);
        let mut buf = Vec::new();
        tree.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,level,prob_down,prob_retire,prob_up,X"));
    }

    #[test]
    fn two_point_tree_terminal_law() {
        let tp = two_point_measure(100.0, 80.0, 120.0, 0.05).unwrap();
        let law = two_point_tree_law(&tp, 1e-15, 1_000_000).unwrap();
        assert!(law.unabsorbed < 1e-15);
        assert!((law.prob_v - tp.prob_v).abs() < 1e-9);
        assert!((law.prob_u - tp.prob_u).abs() < 1e-9);
    }

    #[test]
    fn simulated_walks_absorb() {
        let walks = simulate_walks(1.0, 0.1, &RetirementSchedule::Constant { alpha: 0.3 }, 500, 9, 10_000).unwrap();
        for w in &walks {
            assert!(w.is_retired());
            let rt = w.retirement_time().unwrap();
            assert_eq!(rt, w.marks.len());
        }
    }

    #[test]
    fn walk_rejects_unretirement() {
        assert!(RetiredWalk::new(1.0, 0.1, vec![1, 0, 1]).is_err());
        let w = RetiredWalk::new(1.0, 0.1, vec![1, 1, -1, 0]).unwrap();
        let v = w.values();
        assert!((v[2] - 1.21).abs() < 1e-12);
        assert_eq!(v[4], v[3]);
    }
}
