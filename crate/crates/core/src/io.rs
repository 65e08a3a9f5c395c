//! CSV / JSON artifacts: paths, ladders, price systems, squeeze tables, mark
//! tables, payoff specs and Esscher diagnostics.
//!
//! Floats are written in Rust's shortest round-trip form, so a write/read
//! cycle reproduces values bit for bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cfs_check::MarkCell;
use crate::cps::{ConsistentPriceSystem, CpsBatch, EsscherRecord, MarkRow, MartingaleCertificate};
use crate::error::{domain, Error, Result};
use crate::facelift::{PayoffCurve, SqueezeRow};
use crate::paths::{SamplePath, TimeGrid};
use crate::skeleton::{LadderMode, LadderSkeleton, Stop};

fn num(x: f64) -> String {
    x.to_string()
}

fn parse(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Domain(format!("cannot parse {what} from {field:?}")))
}

fn asset_headers(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|j| format!("{prefix}_{j}")).collect()
}

/// One path as `t,asset_0,…`.
pub fn write_path<W: Write>(path: &SamplePath, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(asset_headers("asset", path.dim));
    w.write_record(&header)?;
    for (k, t) in path.grid.times().iter().enumerate() {
        let mut row = vec![num(*t)];
        row.extend(path.at(k).iter().map(|v| num(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format `path_id,t,asset_0,…`.
pub fn write_paths<W: Write>(paths: &[SamplePath], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = paths.first().map(|p| p.dim).unwrap_or(1);
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend(asset_headers("asset", d));
    w.write_record(&header)?;
    for (i, p) in paths.iter().enumerate() {
        for (k, t) in p.grid.times().iter().enumerate() {
            let mut row = vec![i.to_string(), num(*t)];
            row.extend(p.at(k).iter().map(|v| num(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads either layout; all paths must share one grid.
pub fn read_paths<R: Read>(input: R) -> Result<Vec<SamplePath>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let long = header.get(0) == Some("path_id");
    let t_col = usize::from(long);
    let d = header.len() - t_col - 1;
    if d == 0 || header.get(t_col) != Some("t") {
        return domain("path CSV needs columns [path_id,]t,asset_0,…");
    }
    let mut series: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let id = if long {
            rec[0]
                .parse::<usize>()
                .map_err(|_| Error::Domain(format!("bad path_id {:?}", &rec[0])))?
        } else {
            0
        };
        let e = series.entry(id).or_default();
        e.0.push(parse(&rec[t_col], "t")?);
        for j in 0..d {
            e.1.push(parse(&rec[t_col + 1 + j], "asset value")?);
        }
    }
    let Some((_, (times, _))) = series.iter().next() else {
        return domain("path CSV is empty");
    };
    let grid = Arc::new(TimeGrid::new(times.clone())?);
    series
        .into_iter()
        .map(|(id, (ts, vs))| {
            if ts != grid.times() {
                return domain(format!("path {id} uses a different time grid"));
            }
            SamplePath::new(grid.clone(), d, vs)
        })
        .collect()
}

/// Per-batch facts about ladders that the CSV does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSidecar {
    pub eps: f64,
    pub mode: LadderMode,
    pub snapped: bool,
    pub dim: usize,
    pub n_paths: usize,
    pub max_overshoot: Vec<f64>,
    pub mean_stops: f64,
}

impl SkeletonSidecar {
    pub fn of(skels: &[LadderSkeleton]) -> Result<Self> {
        let Some(f) = skels.first() else {
            return domain("no skeletons to describe");
        };
        Ok(Self {
            eps: f.eps,
            mode: f.mode,
            snapped: f.snapped,
            dim: f.dim,
            n_paths: skels.len(),
            max_overshoot: skels.iter().map(|s| s.max_overshoot).collect(),
            mean_stops: skels.iter().map(|s| s.stops.len() as f64).sum::<f64>() / skels.len() as f64,
        })
    }
}

/// Long format `path_id,n,tau,anchor_0,…,mark`; `mark` is the mark of the
/// move into stop `n` (empty at `n = 0`).
pub fn write_skeletons<W: Write>(skels: &[LadderSkeleton], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = skels.first().map(|s| s.dim).unwrap_or(1);
    let mut header = vec!["path_id".to_string(), "n".to_string(), "tau".to_string()];
    header.extend(asset_headers("anchor", d));
    header.push("mark".into());
    w.write_record(&header)?;
    for (i, sk) in skels.iter().enumerate() {
        for (n, st) in sk.stops.iter().enumerate() {
            let mut row = vec![i.to_string(), n.to_string(), num(st.tau)];
            row.extend(st.anchor.iter().map(|a| num(*a)));
            row.push(if n == 0 { String::new() } else { sk.marks[n - 1].to_string() });
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds skeletons from their CSV, sidecar and time grid.
pub fn read_skeletons<R: Read>(input: R, side: &SkeletonSidecar, grid: &TimeGrid) -> Result<Vec<LadderSkeleton>> {
    let mut r = csv::Reader::from_reader(input);
    let d = side.dim;
    let mut rows: BTreeMap<usize, Vec<(f64, Vec<f64>, Option<i8>)>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != d + 4 {
            return domain(format!("skeleton row has {} fields, expected {}", rec.len(), d + 4));
        }
        let id = rec[0]
            .parse::<usize>()
            .map_err(|_| Error::Domain(format!("bad path_id {:?}", &rec[0])))?;
        let tau = parse(&rec[2], "tau")?;
        let anchor = (0..d).map(|j| parse(&rec[3 + j], "anchor")).collect::<Result<Vec<_>>>()?;
        let mark = match rec[3 + d].trim() {
            "" => None,
            m => Some(m.parse::<i8>().map_err(|_| Error::Domain(format!("bad mark {m:?}")))?),
        };
        rows.entry(id).or_default().push((tau, anchor, mark));
    }
    if rows.len() != side.n_paths {
        return domain(format!("skeleton CSV has {} paths, sidecar says {}", rows.len(), side.n_paths));
    }
    let log_step = side.eps.ln_1p();
    rows.into_iter()
        .map(|(id, rs)| {
            let stops = rs
                .iter()
                .map(|(tau, anchor, _)| {
                    let grid_index = grid
                        .index_of(*tau)
                        .ok_or_else(|| Error::Domain(format!("stop time {tau} of path {id} is not on the grid")))?;
                    Ok(Stop {
                        grid_index,
                        tau: *tau,
                        anchor: anchor.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let marks: Vec<i8> = rs.iter().skip(1).map(|r| r.2.unwrap_or(0)).collect();
            let levels = if d == 1 && side.snapped && side.mode == LadderMode::Multiplicative {
                let x0 = stops[0].anchor[0];
                stops
                    .iter()
                    .map(|s| ((s.anchor[0] / x0).ln() / log_step).round() as i64)
                    .collect()
            } else if d == 1 && side.snapped {
                let x0 = stops[0].anchor[0];
                stops
                    .iter()
                    .map(|s| ((s.anchor[0] - x0) / side.eps).round() as i64)
                    .collect()
            } else {
                Vec::new()
            };
            Ok(LadderSkeleton {
                eps: side.eps,
                mode: side.mode,
                snapped: side.snapped,
                dim: d,
                stops,
                marks,
                levels,
                max_overshoot: side.max_overshoot.get(id).copied().unwrap_or(0.0),
            })
        })
        .collect()
}

/// Long format `path_id,n,tau,S_0,…,Stilde_0,…,L` at the stops.
pub fn write_cps<W: Write>(systems: &[ConsistentPriceSystem], paths: &[SamplePath], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = systems.first().map(|s| s.dim).unwrap_or(1);
    let mut header = vec!["path_id".to_string(), "n".to_string(), "tau".to_string()];
    header.extend(asset_headers("S", d));
    header.extend(asset_headers("Stilde", d));
    header.push("L".into());
    w.write_record(&header)?;
    for s in systems {
        let path = &paths[s.path_id];
        for n in 0..s.n_stops() {
            let mut row = vec![s.path_id.to_string(), n.to_string(), num(s.stop_tau[n])];
            row.extend(path.at(s.stop_grid_index[n]).iter().map(|v| num(*v)));
            row.extend(s.at_stop(n).iter().map(|v| num(*v)));
            row.push(num(s.stop_likelihood[n]));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpsSummary<'a> {
    pub eps: f64,
    pub eps_effective: f64,
    pub n_paths: usize,
    pub worst_log_ratio: f64,
    pub sandwich_pass: bool,
    pub interior_checked: bool,
    pub first_violation: &'a Option<crate::cps::Violation>,
    pub certificate: &'a MartingaleCertificate,
    pub esscher_solves: usize,
    pub max_moment_violation: f64,
}

impl<'a> CpsSummary<'a> {
    pub fn of(b: &'a CpsBatch) -> Self {
        Self {
            eps: b.sandwich.eps,
            eps_effective: b.systems.first().map(|s| s.eps_effective).unwrap_or(f64::NAN),
            n_paths: b.systems.len(),
            worst_log_ratio: b.sandwich.worst_log_ratio,
            sandwich_pass: b.sandwich.pass,
            interior_checked: b.sandwich.interior_checked,
            first_violation: &b.sandwich.first_violation,
            certificate: &b.certificate,
            esscher_solves: b.esscher.iter().filter(|r| r.kind == "esscher").count(),
            max_moment_violation: b.esscher.iter().map(|r| r.moment_violation).fold(0.0, f64::max),
        }
    }
}

pub fn write_json<W: Write, T: Serialize>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// `eps,upper,lower,envelope,mc_stderr_lower,n_paths,seed`.
pub fn write_squeeze<W: Write>(rows: &[SqueezeRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_squeeze<R: Read>(input: R) -> Result<Vec<SqueezeRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// `stop,level,count_down,count_retire,count_up`.
pub fn write_mark_cells<W: Write>(cells: &[MarkCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stop", "level", "count_down", "count_retire", "count_up"])?;
    for c in cells {
        w.write_record([
            c.stop.to_string(),
            c.level.to_string(),
            c.count_down.to_string(),
            c.count_retire.to_string(),
            c.count_up.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reference mark probabilities per bucket, as used by the one-asset system.
pub fn write_mark_rows<W: Write>(rows: &[MarkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per line.
pub fn write_esscher_lines<W: Write>(records: &[EsscherRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Payoff file contents. Boundary data is mandatory: it decides the envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffSpec {
    /// `[x, g(x)]` pairs.
    pub points: Vec<[f64; 2]>,
    /// `g(0+)`; `inf` allowed.
    pub left_limit: Option<f64>,
    pub right_slope: Option<f64>,
    pub lower_bound: Option<f64>,
}

impl PayoffSpec {
    pub fn to_curve(&self) -> Result<PayoffCurve> {
        let missing: Vec<&str> = [
            ("left_limit", self.left_limit.is_none()),
            ("right_slope", self.right_slope.is_none()),
            ("lower_bound", self.lower_bound.is_none()),
        ]
        .into_iter()
        .filter_map(|(k, m)| m.then_some(k))
        .collect();
        if !missing.is_empty() {
            return domain(format!(
                "payoff spec must declare {}: the concave envelope depends on the payoff's behaviour \
                 near 0 and at infinity, which samples alone cannot determine",
                missing.join(", ")
            ));
        }
        PayoffCurve::new(
            self.points.iter().map(|p| (p[0], p[1])).collect(),
            self.left_limit.unwrap(),
            self.right_slope.unwrap(),
            self.lower_bound.unwrap(),
        )
    }

    pub fn of(curve: &PayoffCurve) -> Self {
        Self {
            points: curve.xs.iter().zip(&curve.gs).map(|(x, g)| [*x, *g]).collect(),
            left_limit: Some(curve.left_limit),
            right_slope: Some(curve.right_slope),
            lower_bound: Some(curve.lower_bound),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::Model;
    use crate::skeleton::{extract_ladders, LadderOptions};

    fn sample(d: usize) -> Vec<SamplePath> {
        let grid = Arc::new(TimeGrid::uniform(0.5, 50).unwrap());
        let model = if d == 1 {
            Model::Gfbm {
                hurst: 0.3,
                sigma: 0.4,
                s0: 100.0,
                drift_rate: 0.0,
            }
        } else {
            Model::MultiGbm {
                mu: vec![0.0; 2],
                sigma: vec![0.3, 0.2],
                s0: vec![100.0, 50.0],
                corr: vec![vec![1.0, 0.3], vec![0.3, 1.0]],
            }
        };
        model.sample(grid, 7, 9).unwrap()
    }

    #[test]
    fn paths_round_trip() {
        for d in [1, 2] {
            let paths = sample(d);
            let mut buf = Vec::new();
            write_paths(&paths, &mut buf).unwrap();
            assert_eq!(read_paths(buf.as_slice()).unwrap(), paths);
            let mut one = Vec::new();
            write_path(&paths[3], &mut one).unwrap();
            assert!(std::str::from_utf8(&one).unwrap().starts_with("t,asset_0"));
            assert_eq!(read_paths(one.as_slice()).unwrap()[0], paths[3]);
        }
    }

    #[test]
    fn skeletons_round_trip() {
        for d in [1, 2] {
            let paths = sample(d);
            let skels = extract_ladders(&paths, 0.05, &LadderOptions::default()).unwrap();
            let mut buf = Vec::new();
            write_skeletons(&skels, &mut buf).unwrap();
            let side = SkeletonSidecar::of(&skels).unwrap();
            let back = read_skeletons(buf.as_slice(), &side, &paths[0].grid).unwrap();
            assert_eq!(back, skels);
        }
    }

    #[test]
    fn squeeze_header_and_round_trip() {
        let rows = vec![SqueezeRow {
            eps: 0.1,
            upper: 1.5,
            lower: 0.25,
            envelope: 1.0,
            mc_stderr_lower: 0.01,
            n_paths: 10,
            seed: 3,
        }];
        let mut buf = Vec::new();
        write_squeeze(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("eps,upper,lower,envelope,mc_stderr_lower,n_paths,seed\n"));
        assert_eq!(read_squeeze(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn payoff_spec_requires_boundary_data() {
        let spec: PayoffSpec = serde_json::from_str(r#"{"points": [[1, 0], [2, 1]], "left_limit": 0, "lower_bound": 0}"#).unwrap();
        let err = spec.to_curve().unwrap_err().to_string();
        assert!(err.contains("right_slope"), "{err}");
        let curve = PayoffCurve::call(100.0, &[50.0, 150.0]).unwrap();
        assert_eq!(PayoffSpec::of(&curve).to_curve().unwrap(), curve);
    }
}
