//! Statistical evidence for conditional full support: tube probabilities
//! under conditional continuations, three-mark positivity of ladders, and the
//! interior-hull condition for multi-asset increments.
//!
//! None of this proves support; a pass is positive-probability evidence at a
//! stated confidence level.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::esscher::{check_interior, IncrementCloud};
use crate::paths::{Model, SamplePath, TimeGrid};
use crate::rng::{stream, AUX_STREAM_BASE};
use crate::skeleton::{extract_ladders, ladder_increments, LadderOptions, LadderSkeleton};
use crate::stats::wilson_lower;

/// z-score for the 99% one-sided-ish Wilson bound.
pub const Z99: f64 = 2.576;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeQuery {
    /// Grid index of the history cut `v`.
    pub split: usize,
    /// Target `f` on grid indices `split..=N`.
    pub centre: Vec<f64>,
    pub eta: f64,
    /// Measure distance as `|ln S − ln f|` instead of `|S − f|`.
    #[serde(default)]
    pub log_metric: bool,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// 99% Wilson lower bound.
    pub lower: f64,
    pub hits: usize,
    pub samples: usize,
}

impl TubeEstimate {
    pub fn evidence(&self) -> bool {
        self.estimate > 0.0 && self.lower > 0.0
    }
}

/// `P(sup_{[v,T]} |S − f| < η | history up to v)` by conditional simulation.
pub fn tube_probability(
    model: &Model,
    grid: Arc<TimeGrid>,
    history: &SamplePath,
    query: &TubeQuery,
    seed: u64,
) -> Result<TubeEstimate> {
    let n = grid.len();
    if !(query.eta > 0.0) {
        return domain("tube radius must be positive");
    }
    if query.samples == 0 {
        return domain("tube estimate needs at least one sample");
    }
    if query.split + 1 >= n || query.centre.len() != n - query.split {
        return domain(format!(
            "tube centre must cover grid indices {}..={} ({} values given)",
            query.split,
            n - 1,
            query.centre.len()
        ));
    }
    if history.len() <= query.split {
        return domain("history is shorter than the cut time");
    }
    let sv = history.scalar(query.split);
    if (query.centre[0] - sv).abs() > 1e-9 * sv.abs().max(1.0) {
        return domain(format!("tube centre starts at {} but S_v = {sv}", query.centre[0]));
    }
    if query.log_metric && query.centre.iter().any(|c| !(*c > 0.0)) {
        return domain("log-metric tube centre must be positive");
    }
    let cont = model.continuation_sampler(grid, query.split)?;
    let inside: Vec<bool> = (0..query.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, AUX_STREAM_BASE + i as u64);
            let p = cont.continue_path(history, &mut rng);
            query.centre.iter().enumerate().all(|(j, f)| {
                let s = p.scalar(query.split + j);
                let d = if query.log_metric { (s / f).ln().abs() } else { (s - f).abs() };
                d < query.eta
            })
        })
        .collect();
    let hits = inside.iter().filter(|b| **b).count();
    let m = query.samples as f64;
    let estimate = hits as f64 / m;
    Ok(TubeEstimate {
        estimate,
        stderr: (estimate * (1.0 - estimate) / m).sqrt(),
        lower: wilson_lower(hits, query.samples, Z99),
        hits,
        samples: query.samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkCell {
    pub stop: usize,
    pub level: i64,
    pub count_down: usize,
    pub count_retire: usize,
    pub count_up: usize,
    pub populated: bool,
    /// Populated but missing at least one mark.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkPositivityReport {
    pub eps: f64,
    pub n_stops: usize,
    pub min_count: usize,
    pub cells: Vec<MarkCell>,
    pub populated: usize,
    pub flagged: usize,
    pub pass: bool,
}

/// Counts of the next mark `R_{n+1}` by (stop `n`, anchor level), for
/// `n < n_stops`, from snapped single-asset ladders.
pub fn mark_table(skels: &[LadderSkeleton], n_stops: usize, min_count: usize) -> Result<MarkPositivityReport> {
    let eps = skels.first().map(|s| s.eps).unwrap_or(f64::NAN);
    let mut counts: BTreeMap<(usize, i64), [usize; 3]> = BTreeMap::new();
    for (i, sk) in skels.iter().enumerate() {
        if sk.dim != 1 || sk.levels.is_empty() {
            return domain(format!("skeleton {i} has no level grid (needs a snapped single-asset ladder)"));
        }
        for (n, &mark) in sk.marks.iter().enumerate().take(n_stops) {
            counts.entry((n, sk.levels[n])).or_default()[(mark + 1) as usize] += 1;
        }
    }
    let cells: Vec<MarkCell> = counts
        .into_iter()
        .map(|((stop, level), c)| {
            let populated = c.iter().sum::<usize>() >= min_count;
            MarkCell {
                stop,
                level,
                count_down: c[0],
                count_retire: c[1],
                count_up: c[2],
                populated,
                flagged: populated && c.iter().any(|k| *k == 0),
            }
        })
        .collect();
    let populated = cells.iter().filter(|c| c.populated).count();
    let flagged = cells.iter().filter(|c| c.flagged).count();
    Ok(MarkPositivityReport {
        eps,
        n_stops,
        min_count,
        cells,
        populated,
        flagged,
        pass: populated > 0 && flagged == 0,
    })
}

/// Samples the model and tabulates mark presence per bucket.
pub fn mark_positivity(
    model: &Model,
    grid: Arc<TimeGrid>,
    eps: f64,
    n_stops: usize,
    samples: usize,
    seed: u64,
    min_count: usize,
) -> Result<MarkPositivityReport> {
    if model.dim() != 1 {
        return domain("mark positivity is defined for single-asset models");
    }
    let paths = model.sample(grid, samples, seed)?;
    let skels = extract_ladders(&paths, eps, &LadderOptions::default())?;
    mark_table(&skels, n_stops, min_count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullRow {
    pub stop: usize,
    pub key: Vec<i64>,
    pub n_points: usize,
    pub zero_mass: f64,
    pub interior: bool,
    pub delta: f64,
    pub exact: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullAudit {
    pub rows: Vec<HullRow>,
    pub populated: usize,
    pub failed: usize,
    pub pass: bool,
}

/// Interior and retired-mass check of one increment cloud.
pub fn audit_cloud(stop: usize, key: Vec<i64>, cloud: &IncrementCloud) -> HullRow {
    let c = check_interior(cloud);
    let zero_mass = cloud.zero_mass();
    HullRow {
        stop,
        key,
        n_points: cloud.len(),
        zero_mass,
        interior: c.ok,
        delta: c.delta,
        exact: c.exact,
        pass: c.ok && zero_mass > 0.0,
    }
}

/// Buckets the increments `Δ_n` by stop and rounded log-level of the previous
/// anchor (relative to `S_0`) and checks `0 ∈ int conv` with positive mass at
/// 0 in every bucket holding at least `min_bucket` points.
pub fn interior_hull_audit(skels: &[LadderSkeleton], min_bucket: usize) -> Result<HullAudit> {
    let Some(first) = skels.first() else {
        return domain("interior audit needs at least one skeleton");
    };
    let d = first.dim;
    let log_step = first.eps.ln_1p();
    let mut buckets: BTreeMap<(usize, Vec<i64>), Vec<Vec<f64>>> = BTreeMap::new();
    for sk in skels {
        if sk.dim != d {
            return domain("skeletons of mixed dimension");
        }
        let s0 = sk.x0();
        for (k, inc) in ladder_increments(sk).into_iter().enumerate() {
            let n = k + 1;
            let key: Vec<i64> = sk.stops[n - 1]
                .anchor
                .iter()
                .zip(s0)
                .map(|(a, s)| ((a / s).ln() / log_step).round() as i64)
                .collect();
            buckets.entry((n, key)).or_default().push(inc);
        }
    }
    let rows: Vec<HullRow> = buckets
        .into_iter()
        .filter(|(_, pts)| pts.len() >= min_bucket.max(1))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|((n, key), pts)| {
            let cloud = IncrementCloud::uniform(d, pts).expect("non-empty cloud of matching dimension");
            audit_cloud(n, key, &cloud)
        })
        .collect();
    let failed = rows.iter().filter(|r| !r.pass).count();
    Ok(HullAudit {
        populated: rows.len(),
        failed,
        pass: !rows.is_empty() && failed == 0,
        rows,
    })
}
