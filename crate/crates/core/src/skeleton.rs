//! Stopping-time ladders: successive first exits of the price from a band
//! around the last anchor, with up/down/retire marks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::paths::SamplePath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderMode {
    /// Band `((1+ε)^{-1}, 1+ε)` around the anchor ratio.
    Multiplicative,
    /// Band `(a − ε, a + ε)` around the anchor.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderOptions {
    pub mode: LadderMode,
    /// Snap single-asset anchors onto the exact barrier.
    pub snap: bool,
    pub max_stops: usize,
}

impl Default for LadderOptions {
    fn default() -> Self {
        Self {
            mode: LadderMode::Multiplicative,
            snap: true,
            max_stops: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub grid_index: usize,
    pub tau: f64,
    pub anchor: Vec<f64>,
}

/// The stop sequence of one path. `marks[n - 1]` is the mark `R_n` attached to
/// the move from stop `n - 1` to stop `n`; the last mark is always 0 and the
/// last stop is at the horizon. For several assets the mark is 1 for an exit
/// and 0 for retirement.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderSkeleton {
    pub eps: f64,
    pub mode: LadderMode,
    pub snapped: bool,
    pub dim: usize,
    pub stops: Vec<Stop>,
    pub marks: Vec<i8>,
    /// Integer grid level of each anchor (single asset, snapped); empty otherwise.
    pub levels: Vec<i64>,
    /// Largest `|ln(raw / anchor)|` (multiplicative) or `|raw − anchor|`
    /// (additive) over snapped stops.
    pub max_overshoot: f64,
}

impl LadderSkeleton {
    pub fn retired_at(&self) -> usize {
        self.stops.len() - 1
    }

    pub fn x0(&self) -> &[f64] {
        &self.stops[0].anchor
    }

    /// Whether `value` leaves the open band around `anchor`.
    pub fn exits(&self, value: f64, anchor: f64) -> bool {
        exits(self.mode, self.eps, value, anchor)
    }
}

#[inline]
fn exits(mode: LadderMode, eps: f64, value: f64, anchor: f64) -> bool {
    match mode {
        LadderMode::Multiplicative => {
            let r = value / anchor;
            r >= 1.0 + eps || r <= 1.0 / (1.0 + eps)
        }
        LadderMode::Additive => (value - anchor).abs() >= eps,
    }
}

fn level_value(mode: LadderMode, x0: f64, eps: f64, level: i64) -> f64 {
    match mode {
        LadderMode::Multiplicative => x0 * (1.0 + eps).powi(level as i32),
        LadderMode::Additive => x0 + eps * level as f64,
    }
}

/// Extracts the ladder of `path` for spread `eps`.
pub fn extract_ladder(path: &SamplePath, eps: f64, opts: &LadderOptions) -> Result<LadderSkeleton> {
    extract_ladder_indexed(path, eps, opts, 0)
}

fn extract_ladder_indexed(
    path: &SamplePath,
    eps: f64,
    opts: &LadderOptions,
    path_id: usize,
) -> Result<LadderSkeleton> {
    if !(eps > 0.0) || !eps.is_finite() {
        return domain(format!("eps must be > 0, got {eps}"));
    }
    let d = path.dim;
    let times = path.grid.times();
    let last = times.len() - 1;
    let snap = opts.snap && d == 1;
    let x0 = path.at(0).to_vec();

    let mut stops = vec![Stop {
        grid_index: 0,
        tau: 0.0,
        anchor: x0.clone(),
    }];
    let mut marks = Vec::new();
    let mut levels = if snap { vec![0i64] } else { Vec::new() };
    let mut anchor = x0.clone();
    let mut level = 0i64;
    let mut max_overshoot = 0.0_f64;

    let mut i = 1;
    loop {
        let exit_at = (i..=last).find(|&k| {
            path.at(k)
                .iter()
                .zip(&anchor)
                .any(|(v, a)| exits(opts.mode, eps, *v, *a))
        });
        match exit_at {
            Some(k) if k < last => {
                if stops.len() > opts.max_stops {
                    return Err(Error::LadderOverflow {
                        path: path_id,
                        max_stops: opts.max_stops,
                    });
                }
                let raw = path.at(k);
                let mark: i8;
                if snap {
                    let up = raw[0] > anchor[0];
                    mark = if up { 1 } else { -1 };
                    level += mark as i64;
                    let a = level_value(opts.mode, x0[0], eps, level);
                    let over = match opts.mode {
                        LadderMode::Multiplicative => (raw[0] / a).ln().abs(),
                        LadderMode::Additive => (raw[0] - a).abs(),
                    };
                    max_overshoot = max_overshoot.max(over);
                    anchor = vec![a];
                    levels.push(level);
                } else {
                    mark = if d == 1 {
                        if raw[0] > anchor[0] {
                            1
                        } else {
                            -1
                        }
                    } else {
                        1
                    };
                    anchor = raw.to_vec();
                }
                marks.push(mark);
                stops.push(Stop {
                    grid_index: k,
                    tau: times[k],
                    anchor: anchor.clone(),
                });
                i = k + 1;
            }
            _ => {
                // no exit strictly before the horizon: retirement at T
                marks.push(0);
                stops.push(Stop {
                    grid_index: last,
                    tau: times[last],
                    anchor: anchor.clone(),
                });
                if snap {
                    levels.push(level);
                }
                break;
            }
        }
    }

    Ok(LadderSkeleton {
        eps,
        mode: opts.mode,
        snapped: snap,
        dim: d,
        stops,
        marks,
        levels,
        max_overshoot,
    })
}

/// Ladders for a batch of paths (path-parallel, order preserving).
pub fn extract_ladders(paths: &[SamplePath], eps: f64, opts: &LadderOptions) -> Result<Vec<LadderSkeleton>> {
    paths
        .par_iter()
        .enumerate()
        .map(|(p, path)| extract_ladder_indexed(path, eps, opts, p))
        .collect()
}

/// Increments `Δ_n = anchor_n − anchor_{n−1}`, zero once retired.
pub fn ladder_increments(skel: &LadderSkeleton) -> Vec<Vec<f64>> {
    (1..skel.stops.len())
        .map(|n| {
            if skel.marks[n - 1] == 0 {
                vec![0.0; skel.dim]
            } else {
                skel.stops[n]
                    .anchor
                    .iter()
                    .zip(&skel.stops[n - 1].anchor)
                    .map(|(a, b)| a - b)
                    .collect()
            }
        })
        .collect()
}

/// Band audit of a skeleton against its path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandReport {
    /// Worst `max_i |ln(S_t^i / anchor^i)|` over grid times strictly between
    /// stops (plus the horizon after retirement).
    pub max_inside_log_ratio: f64,
    /// Worst `|ln(S_{τ_{n+1}} / S_{τ_n})|` over consecutive stops (raw values).
    pub max_two_step_log_ratio: f64,
    /// Largest one-step `|ln(S_{k}/S_{k-1})|` over the path.
    pub max_step_log_move: f64,
}

pub fn band_report(skel: &LadderSkeleton, path: &SamplePath) -> BandReport {
    let d = path.dim;
    let mut inside = 0.0_f64;
    let mut two_step = 0.0_f64;
    for n in 0..skel.stops.len() - 1 {
        let a = &skel.stops[n].anchor;
        let (k0, k1) = (skel.stops[n].grid_index, skel.stops[n + 1].grid_index);
        let end = if skel.marks[n] == 0 { k1 + 1 } else { k1 };
        for k in k0 + 1..end {
            for i in 0..d {
                inside = inside.max((path.at(k)[i] / a[i]).ln().abs());
            }
        }
        for i in 0..d {
            two_step = two_step.max((path.at(k1)[i] / path.at(k0)[i]).ln().abs());
        }
    }
    let mut step = 0.0_f64;
    for k in 1..path.len() {
        for i in 0..d {
            step = step.max((path.at(k)[i] / path.at(k - 1)[i]).ln().abs());
        }
    }
    BandReport {
        max_inside_log_ratio: inside,
        max_two_step_log_ratio: two_step,
        max_step_log_move: step,
    }
}
