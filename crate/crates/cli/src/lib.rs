//! Stages of the `cpslab` experiment runner. Each stage reads the previous
//! stage's artifacts (from memory within `run`, from disk otherwise) and
//! writes its own; `manifest.json` records hashes of everything in the
//! output directory.

pub mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cpslab::cfs_check::{interior_hull_audit, mark_table, tube_probability, TubeQuery};
use cpslab::cps::{build_cps_1d, build_cps_1d_at, build_cps_multi, CpsBatch};
use cpslab::facelift::{squeeze_report, LowerOptions};
use cpslab::io::{self, CpsSummary, PayoffSpec, SkeletonSidecar};
use cpslab::paths::{SamplePath, TimeGrid};
use cpslab::skeleton::{extract_ladders, LadderSkeleton};
use cpslab::walk::{geometric_budget, integrability_schedule, two_point_measure, RetirementSchedule};
use cpslab::ErrorClass;
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{Loaded, ScheduleSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing upstream artifact {path} (run `cpslab {stage}` first)")]
    Missing { path: PathBuf, stage: &'static str },
    #[error(transparent)]
    Core(#[from] cpslab::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("checks failed: {}", .0.join("; "))]
    Checks(Vec<String>),
}

impl CliError {
    /// 1 validation, 2 numerical failure, 3 invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Missing { .. } | CliError::Io { .. } => 1,
            CliError::Core(e) => match e.class() {
                ErrorClass::Validation => 1,
                ErrorClass::Numerical => 2,
                ErrorClass::Invariant => 3,
            },
            CliError::Checks(_) => 3,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Ladder,
    Cps,
    Facelift,
    Audit,
}

/// Per-invocation state: the loaded config plus cached upstream results.
pub struct Context {
    pub loaded: Loaded,
    grid: Arc<TimeGrid>,
    paths: Option<Vec<SamplePath>>,
    ladders: BTreeMap<usize, Vec<LadderSkeleton>>,
    pub failures: Vec<String>,
}

impl Context {
    pub fn new(loaded: Loaded) -> Result<Self, CliError> {
        let grid = Arc::new(loaded.config.time_grid()?);
        fs::create_dir_all(&loaded.out).map_err(io_err(&loaded.out))?;
        Ok(Self {
            loaded,
            grid,
            paths: None,
            ladders: BTreeMap::new(),
            failures: Vec::new(),
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.loaded.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let p = self.out(name);
        Ok(BufWriter::new(File::create(&p).map_err(io_err(&p))?))
    }

    fn open(&self, name: &str, stage: &'static str) -> Result<BufReader<File>, CliError> {
        let p = self.out(name);
        match File::open(&p) {
            Ok(f) => Ok(BufReader::new(f)),
            Err(_) => Err(CliError::Missing { path: p, stage }),
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        io::write_json(value, &mut w)?;
        w.flush().map_err(io_err(&self.out(name)))
    }

    fn paths(&mut self) -> Result<&[SamplePath], CliError> {
        if self.paths.is_none() {
            let r = self.open("paths.csv", "simulate")?;
            let paths = io::read_paths(r)?;
            if paths.len() != self.loaded.config.n_paths || paths[0].grid.as_ref() != self.grid.as_ref() {
                return Err(CliError::Config(format!(
                    "{} does not match the configured grid and path count",
                    self.out("paths.csv").display()
                )));
            }
            self.paths = Some(paths);
        }
        Ok(self.paths.as_deref().unwrap())
    }

    fn ladder(&mut self, i: usize) -> Result<&[LadderSkeleton], CliError> {
        if !self.ladders.contains_key(&i) {
            let side: SkeletonSidecar = serde_json::from_reader(self.open(&format!("ladder_{i}.json"), "ladder")?)
                .map_err(cpslab::Error::from)?;
            let skels = io::read_skeletons(self.open(&format!("ladder_{i}.csv"), "ladder")?, &side, &self.grid)?;
            self.ladders.insert(i, skels);
        }
        Ok(&self.ladders[&i])
    }

    pub fn simulate(&mut self, write: bool) -> Result<(), CliError> {
        let cfg = &self.loaded.config;
        let paths = cfg.model.sample(self.grid.clone(), cfg.n_paths, self.loaded.seed)?;
        if write || cfg.write_paths {
            let mut w = self.create("paths.csv")?;
            io::write_paths(&paths, &mut w)?;
            w.flush().map_err(io_err(&self.out("paths.csv")))?;
        }
        self.paths = Some(paths);
        Ok(())
    }

    pub fn ladder_stage(&mut self) -> Result<(), CliError> {
        let opts = self.loaded.config.ladder_options();
        for (i, eps) in self.loaded.config.eps_seq().into_iter().enumerate() {
            let skels = extract_ladders(self.paths()?, eps, &opts)?;
            let mut w = self.create(&format!("ladder_{i}.csv"))?;
            io::write_skeletons(&skels, &mut w)?;
            w.flush().map_err(io_err(&self.out(&format!("ladder_{i}.csv"))))?;
            self.write_json(&format!("ladder_{i}.json"), &SkeletonSidecar::of(&skels)?)?;
            self.ladders.insert(i, skels);
        }
        Ok(())
    }

    fn build_cps(&mut self, i: usize, eps: f64) -> Result<CpsBatch, CliError> {
        let cfg = self.loaded.config.clone();
        let spec = cfg.cps.as_ref().ok_or_else(|| CliError::Config("cps: section missing".into()))?;
        let opts = &spec.options;
        if cfg.model.dim() > 1 {
            self.paths()?;
            self.ladder(i)?;
            return Ok(build_cps_multi(self.paths.as_ref().unwrap(), &self.ladders[&i], opts)?);
        }
        let s0 = cfg.model.s0()[0];
        let schedule = match spec.schedule.as_ref().unwrap() {
            ScheduleSpec::Constant { alpha } => RetirementSchedule::Constant { alpha: *alpha },
            ScheduleSpec::Integrability { power, default_alpha } => {
                let p = *power;
                integrability_schedule(|x| x.powf(p), s0, eps, geometric_budget, *default_alpha)?
            }
            ScheduleSpec::TwoPoint { u, v } => {
                let tp = two_point_measure(s0, *u, *v, eps)?;
                let paths = self.paths()?;
                let skels = extract_ladders(paths, tp.eps_prime, &cfg.ladder_options())?;
                return Ok(build_cps_1d_at(paths, &skels, &tp.schedule(), tp.x0, opts)?);
            }
        };
        self.paths()?;
        self.ladder(i)?;
        Ok(build_cps_1d(self.paths.as_ref().unwrap(), &self.ladders[&i], &schedule, opts)?)
    }

    pub fn cps_stage(&mut self) -> Result<(), CliError> {
        for (i, eps) in self.loaded.config.eps_seq().into_iter().enumerate() {
            let batch = self.build_cps(i, eps)?;
            let name = format!("cps_{i}.csv");
            let mut w = self.create(&name)?;
            io::write_cps(&batch.systems, self.paths()?, &mut w)?;
            w.flush().map_err(io_err(&self.out(&name)))?;
            self.write_json(&format!("cps_{i}_summary.json"), &CpsSummary::of(&batch))?;
            if !batch.marks.is_empty() {
                let mut w = self.create(&format!("cps_{i}_marks.csv"))?;
                io::write_mark_rows(&batch.marks, &mut w)?;
                w.flush().map_err(io_err(&self.out("marks")))?;
            }
            if !batch.esscher.is_empty() {
                let mut w = self.create(&format!("cps_{i}_esscher.jsonl"))?;
                io::write_esscher_lines(&batch.esscher, &mut w)?;
                w.flush().map_err(io_err(&self.out("esscher")))?;
            }
            if !batch.sandwich.pass {
                self.failures.push(format!("cps eps={eps}: sandwich violated"));
            }
            if !batch.certificate.pass {
                self.failures.push(format!("cps eps={eps}: martingale certificate failed"));
            }
        }
        Ok(())
    }

    pub fn facelift_stage(&mut self) -> Result<(), CliError> {
        let cfg = self.loaded.config.clone();
        let spec = cfg
            .facelift
            .as_ref()
            .ok_or_else(|| CliError::Config("facelift: section missing".into()))?;
        let file = self.loaded.base.join(&spec.payoff);
        let text = fs::read_to_string(&file).map_err(io_err(&file))?;
        let payoff: PayoffSpec =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
        let curve = payoff.to_curve()?;
        let opts = LowerOptions {
            delta: spec.delta,
            strict: spec.strict,
            direct: spec.direct,
        };
        let seed = self.loaded.seed;
        let report = squeeze_report(&curve, cfg.model.s0()[0], &cfg.eps_seq(), self.paths()?, seed, &opts)?;
        let mut w = self.create("squeeze.csv")?;
        io::write_squeeze(&report.rows, &mut w)?;
        w.flush().map_err(io_err(&self.out("squeeze.csv")))?;
        self.write_json("squeeze.json", &report)?;
        if !report.ordered {
            self.failures.push("squeeze: bounds out of order".into());
        }
        Ok(())
    }

    pub fn audit_stage(&mut self) -> Result<(), CliError> {
        let cfg = self.loaded.config.clone();
        let a = &cfg.audit;
        for i in 0..cfg.eps_seq().len() {
            let skels = self.ladder(i)?;
            if cfg.model.dim() == 1 && !skels[0].levels.is_empty() {
                let report = mark_table(skels, a.n_stops, a.min_count)?;
                let mut w = self.create(&format!("audit_marks_{i}.csv"))?;
                io::write_mark_cells(&report.cells, &mut w)?;
                w.flush().map_err(io_err(&self.out("audit marks")))?;
                self.write_json(&format!("audit_{i}.json"), &report)?;
            } else if cfg.model.dim() > 1 {
                let report = interior_hull_audit(skels, a.min_bucket)?;
                self.write_json(&format!("audit_{i}.json"), &report)?;
            }
        }
        if let Some(t) = &a.tube {
            let grid = self.grid.clone();
            let seed = self.loaded.seed;
            let history = self.paths()?[t.path].clone();
            let cont = cfg.model.continuation_sampler(grid.clone(), t.split)?;
            let query = TubeQuery {
                split: t.split,
                centre: cont.centre(&history)[t.split..].to_vec(),
                eta: t.eta,
                log_metric: t.log_metric,
                samples: t.samples,
            };
            let est = tube_probability(&cfg.model, grid, &history, &query, seed)?;
            #[derive(Serialize)]
            struct TubeReport<'a> {
                query: &'a config::TubeSpec,
                estimate: cpslab::cfs_check::TubeEstimate,
                evidence: bool,
            }
            self.write_json(
                "audit_tube.json",
                &TubeReport {
                    query: t,
                    estimate: est,
                    evidence: est.evidence(),
                },
            )?;
        }
        Ok(())
    }

    /// Hashes every file in the output directory (except the manifest).
    pub fn write_manifest(&self) -> Result<Manifest, CliError> {
        let dir = &self.loaded.out;
        let mut artifacts = BTreeMap::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == "manifest.json" || !entry.path().is_file() {
                continue;
            }
            let bytes = fs::read(entry.path()).map_err(io_err(&entry.path()))?;
            artifacts.insert(name, sha256_hex(&bytes));
        }
        let m = Manifest {
            config_sha256: self.loaded.sha256.clone(),
            seed: self.loaded.seed,
            n_paths: self.loaded.config.n_paths,
            versions: BTreeMap::from([
                ("cpslab".to_string(), cpslab::VERSION.to_string()),
                ("cpslab-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ]),
            artifacts,
        };
        self.write_json("manifest.json", &m)?;
        Ok(m)
    }

    pub fn run_stage(&mut self, stage: Stage) -> Result<(), CliError> {
        match stage {
            Stage::Simulate => self.simulate(true),
            Stage::Ladder => self.ladder_stage(),
            Stage::Cps => self.cps_stage(),
            Stage::Facelift => self.facelift_stage(),
            Stage::Audit => self.audit_stage(),
        }
    }

    /// All configured stages in order.
    pub fn run_all(&mut self) -> Result<(), CliError> {
        self.simulate(false)?;
        self.ladder_stage()?;
        if self.loaded.config.cps.is_some() {
            self.cps_stage()?;
        }
        if self.loaded.config.facelift.is_some() {
            self.facelift_stage()?;
        }
        self.audit_stage()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub n_paths: usize,
    pub versions: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

/// Loads the config, runs `stage` (or everything), writes the manifest and
/// turns failed checks into an error.
pub fn execute(
    config: &Path,
    stage: Option<Stage>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<&Path>,
) -> Result<Manifest, CliError> {
    let loaded = config::load(config, seed, out)?;
    let workers = workers.unwrap_or(loaded.config.workers);
    cpslab::rng::with_workers(workers, move || {
        let mut ctx = Context::new(loaded)?;
        match stage {
            Some(s) => ctx.run_stage(s)?,
            None => ctx.run_all()?,
        }
        let m = ctx.write_manifest()?;
        if ctx.failures.is_empty() {
            Ok(m)
        } else {
            Err(CliError::Checks(ctx.failures))
        }
    })
}
