//! Command-line front end: configuration, experiment orchestration and
//! report emission.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Control, RobotState, StateBelief, UtParams};
use crate::metrics::{self, AggregateRow, ConsistencyReport, RunSummary};
use crate::mppi::{self, MppiConfig, RiskConfig, Variant};
use crate::prediction::{self, PedestrianTrack};
use crate::rng::{Purpose, StreamKey};
use crate::sim::verify::{self, SweepSize};
use crate::sim::{self, EpisodeConfig, LocalizerConfig, PredictorSection, Regime, RunLimits, RunLog, RunSpec, SfmParams, WorldConfig};
use crate::{Error, Mat3, Result, Vec2};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub scenario: String,
    pub controller: Variant,
    pub loc: Regime,
    pub pred: Regime,
    pub seed: u64,
    pub runs: usize,
    pub output: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            scenario: "c3p3".into(),
            controller: Variant::Ducct,
            loc: Regime::Standard,
            pred: Regime::Standard,
            seed: 0,
            runs: 30,
            output: PathBuf::from("out"),
        }
    }
}

/// Full experiment description as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub world: WorldConfig,
    pub sfm: SfmParams,
    pub localizer: LocalizerConfig,
    pub predictor: PredictorSection,
    pub mppi: MppiConfig,
    pub risk: RiskConfig,
    pub ut: UtParams,
    pub limits: RunLimits,
}

impl ExperimentConfig {
    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig {
            world: self.world,
            sfm: self.sfm,
            localizer: self.localizer,
            predictor: self.predictor,
            mppi: self.mppi,
            risk: self.risk,
            ut: self.ut,
            limits: self.limits,
        }
    }

    pub fn spec(&self) -> RunSpec {
        RunSpec {
            scenario: self.experiment.scenario.clone(),
            variant: self.experiment.controller,
            loc: self.experiment.loc,
            pred: self.experiment.pred,
            seed: self.experiment.seed,
        }
    }

    /// Reads an optional TOML file and applies `section.key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let table = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        Self::from_table(table, overrides)
    }

    /// Parses TOML text; an empty string yields the defaults.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let table = text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(table, overrides)
    }

    fn from_table(mut table: toml::Table, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into::<ExperimentConfig>()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }
}

fn apply_override(table: &mut toml::Table, entry: &str) -> Result<()> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{entry}' is not key=value")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override key '{path}' must be section.key")))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let sec = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match sec {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!("'{section}' is not a section"))),
    }
}

#[derive(Debug, Parser)]
#[command(name = "ducct", version, about = "Uncertainty-aware MPPI crowd navigation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// TOML experiment configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a setting, e.g. `--set mppi.rollouts=200`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub controller: Option<String>,
    #[arg(long)]
    pub loc: Option<String>,
    #[arg(long)]
    pub pred: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(s) = &self.scenario {
            c.experiment.scenario = s.clone();
        }
        if let Some(v) = &self.controller {
            c.experiment.controller = v.parse()?;
        }
        if let Some(r) = &self.loc {
            c.experiment.loc = r.parse()?;
        }
        if let Some(r) = &self.pred {
            c.experiment.pred = r.parse()?;
        }
        if let Some(s) = self.seed {
            c.experiment.seed = s;
        }
        if let Some(o) = &self.out {
            c.experiment.output = o.clone();
        }
        sim::make_scenario(&c.experiment.scenario, 0)?;
        c.episode().validate(&c.spec())?;
        Ok(c)
    }
}

fn split_list<T: std::str::FromStr<Err = Error>>(s: &Option<String>, default: T) -> Result<Vec<T>> {
    match s {
        None => Ok(vec![default]),
        Some(s) => s.split(',').map(|x| x.trim().parse()).collect(),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its step CSV and JSON summary.
    Simulate(ConfigArgs),
    /// Run a grid of episodes and write per-run files plus aggregates.
    Batch {
        #[command(flatten)]
        config: ConfigArgs,
        /// Runs per cell (seeds base, base+1, ...).
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated scenarios (defaults to the configured one).
        #[arg(long)]
        scenarios: Option<String>,
        #[arg(long)]
        controllers: Option<String>,
        #[arg(long)]
        locs: Option<String>,
        #[arg(long)]
        preds: Option<String>,
    },
    /// Recompute aggregates from the per-run files of a batch directory.
    Report {
        dir: PathBuf,
    },
    /// Localizer and predictor NEES sweeps per calibration regime.
    VerifyCalibration {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 2000)]
        tracks: usize,
        #[arg(long, default_value_t = 60)]
        steps: usize,
        #[arg(long, default_value_t = 3)]
        episodes: usize,
    },
    /// Time control cycles on a synthetic crowd.
    BenchCycle {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 18)]
        peds: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
    },
    /// Print the effective configuration as TOML.
    PrintConfig(ConfigArgs),
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => {
            let cfg = args.resolve()?;
            let log = sim::run_episode(&cfg.spec(), &cfg.episode())?;
            let (csv, json) = log.write(&cfg.experiment.output)?;
            let s = log.summary();
            println!(
                "{} status={:?} TD={:.2} AV={:.3} CR={:.2} SF={:.3} APR={:.5} BS={:.5} LL={:.5}",
                cfg.spec().stem(),
                s.status,
                s.td,
                s.av,
                s.cr,
                s.sf,
                s.apr,
                s.bs,
                s.ll
            );
            println!("{}\n{}", csv.display(), json.display());
            Ok(())
        }
        Command::Batch {
            config,
            runs,
            scenarios,
            controllers,
            locs,
            preds,
        } => {
            let cfg = config.resolve()?;
            let grid = BatchGrid {
                scenarios: match &scenarios {
                    None => vec![cfg.experiment.scenario.clone()],
                    Some(s) => s.split(',').map(|x| x.trim().to_string()).collect(),
                },
                variants: split_list(&controllers, cfg.experiment.controller)?,
                locs: split_list(&locs, cfg.experiment.loc)?,
                preds: split_list(&preds, cfg.experiment.pred)?,
                runs: runs.unwrap_or(cfg.experiment.runs),
                base_seed: cfg.experiment.seed,
            };
            let result = run_batch(&grid, &cfg.episode(), Some(&cfg.experiment.output.join("runs")))?;
            write_batch_outputs(&cfg.experiment.output, &result)?;
            print!("{}", render_table(&result.aggregate));
            println!(
                "{} runs, {} fallback steps, {:.1} s wall",
                result.summaries.len(),
                result.aggregate.iter().map(|r| r.fallback_steps).sum::<usize>(),
                result.wall_seconds
            );
            Ok(())
        }
        Command::Report { dir } => {
            let summaries = read_runs(&dir.join("runs"))?;
            let aggregate = metrics::aggregate(&summaries);
            let result = BatchResult {
                summaries,
                aggregate,
                wall_seconds: 0.0,
            };
            write_batch_outputs(&dir, &result)?;
            print!("{}", render_table(&result.aggregate));
            Ok(())
        }
        Command::VerifyCalibration {
            config,
            tracks,
            steps,
            episodes,
        } => {
            let cfg = config.resolve()?;
            let reports = verify_calibration(&cfg, SweepSize { tracks, steps }, episodes)?;
            let out = &cfg.experiment.output;
            fs::create_dir_all(out)?;
            let mut hist = csv::Writer::from_path(out.join("nees_histograms.csv"))?;
            hist.write_record(["sweep", "bin_center", "empirical", "chi2_2"])?;
            for r in &reports {
                for (c, d, e) in &r.histogram {
                    hist.write_record([r.label.clone(), c.to_string(), d.to_string(), e.to_string()])?;
                }
                println!("{:<24} n={:<7} mean NEES={:>12.4} L2={:.5}", r.label, r.count, r.mean_nees, r.l2);
            }
            hist.flush()?;
            let mut json = serde_json::to_vec_pretty(&reports)?;
            json.push(b'\n');
            fs::write(out.join("consistency.json"), json)?;
            Ok(())
        }
        Command::BenchCycle { config, peds, reps } => {
            let cfg = config.resolve()?;
            let report = bench_cycle(&cfg, peds, reps)?;
            println!(
                "K={} T={} N_MC={} peds={} variant={}: cycle median {:.2} ms, p95 {:.2} ms; risk stage median {:.2} ms",
                cfg.mppi.rollouts,
                cfg.mppi.horizon,
                cfg.risk.n_mc,
                peds,
                cfg.experiment.controller,
                report.median_ms,
                report.p95_ms,
                report.risk_median_ms
            );
            Ok(())
        }
        Command::PrintConfig(args) => {
            let cfg = args.resolve()?;
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

/// Cells and seeds of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrid {
    pub scenarios: Vec<String>,
    pub variants: Vec<Variant>,
    pub locs: Vec<Regime>,
    pub preds: Vec<Regime>,
    pub runs: usize,
    pub base_seed: u64,
}

impl BatchGrid {
    pub fn specs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for s in &self.scenarios {
            for &variant in &self.variants {
                for &loc in &self.locs {
                    for &pred in &self.preds {
                        for i in 0..self.runs as u64 {
                            out.push(RunSpec {
                                scenario: s.clone(),
                                variant,
                                loc,
                                pred,
                                seed: self.base_seed + i,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub summaries: Vec<RunSummary>,
    pub aggregate: Vec<AggregateRow>,
    pub wall_seconds: f64,
}

/// Runs every spec of the grid concurrently; per-run files go to `runs_dir`.
pub fn run_specs(specs: &[RunSpec], config: &EpisodeConfig, runs_dir: Option<&Path>) -> Result<Vec<RunSummary>> {
    if specs.is_empty() {
        return Err(Error::Config("batch has no runs".into()));
    }
    specs
        .par_iter()
        .map(|spec| {
            let log = sim::run_episode(spec, config)?;
            if let Some(dir) = runs_dir {
                log.write(dir)?;
            }
            Ok(log.summary())
        })
        .collect()
}

pub fn run_batch(grid: &BatchGrid, config: &EpisodeConfig, runs_dir: Option<&Path>) -> Result<BatchResult> {
    let start = Instant::now();
    let summaries = run_specs(&grid.specs(), config, runs_dir)?;
    let aggregate = metrics::aggregate(&summaries);
    Ok(BatchResult {
        summaries,
        aggregate,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Loads run summaries and recomputes each from its step CSV. A summary that
/// disagrees with its recomputation is an error.
pub fn read_runs(dir: &Path) -> Result<Vec<RunSummary>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let stored: RunSummary = serde_json::from_slice(&fs::read(p)?)?;
            let steps = RunLog::read_csv(&p.with_extension("csv"))?;
            let log = RunLog {
                spec: RunSpec {
                    scenario: stored.scenario.clone(),
                    variant: stored.variant,
                    loc: stored.loc,
                    pred: stored.pred,
                    seed: stored.seed,
                },
                config: stored.config,
                status: stored.status,
                steps,
            };
            let again = log.summary();
            if again != stored {
                return Err(Error::Consistency(format!("{} does not match its step log", p.display())));
            }
            Ok(again)
        })
        .collect()
}

fn fmt_opt(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

pub fn write_batch_outputs(dir: &Path, result: &BatchResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut agg = csv::Writer::from_path(dir.join("aggregate.csv"))?;
    for row in &result.aggregate {
        agg.serialize(row)?;
    }
    agg.flush()?;

    let mut long = csv::Writer::from_path(dir.join("long.csv"))?;
    long.write_record(["metric", "scenario", "variant", "regime", "run", "value"])?;
    for r in &result.summaries {
        let regime = format!("loc-{}_pred-{}", r.loc, r.pred);
        let rows = [
            ("success", f64::from(u8::from(r.success))),
            ("TD", r.td),
            ("AV", r.av),
            ("CR", r.cr),
            ("SF", r.sf),
            ("APR", r.apr),
            ("BS", r.bs),
            ("LL", r.ll),
        ];
        for (m, v) in rows {
            long.write_record([
                m.to_string(),
                r.scenario.clone(),
                r.variant.to_string(),
                regime.clone(),
                r.seed.to_string(),
                fmt_opt(v),
            ])?;
        }
    }
    long.flush()?;
    fs::write(dir.join("table.txt"), render_table(&result.aggregate))?;
    Ok(())
}

/// Plain-text table with the navigation and calibration columns.
pub fn render_table(rows: &[AggregateRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<7} {:<8} {:<9} {:<9} {:>5} {:>15} {:>13} {:>13} {:>15} {:>7} {:>9} {:>9} {:>9}",
        "scene", "ctrl", "loc", "pred", "runs", "TD [s]", "AV [m/s]", "CR [%]", "SF", "SR [%]", "APR [%]", "BS", "LL"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<7} {:<8} {:<9} {:<9} {:>5} {:>7.2}±{:<7.2} {:>6.3}±{:<6.3} {:>6.2}±{:<6.2} {:>7.2}±{:<7.2} {:>7.2} {:>9.4} {:>9.4} {:>9.4}",
            r.scenario,
            r.variant.as_str(),
            r.loc.as_str(),
            r.pred.as_str(),
            r.runs,
            r.td_mean,
            r.td_std,
            r.av_mean,
            r.av_std,
            r.cr_mean,
            r.cr_std,
            r.sf_mean,
            r.sf_std,
            r.sr,
            100.0 * r.apr_all_mean,
            r.bs_all_mean,
            r.ll_all_mean
        );
    }
    s
}

/// Localizer sweeps for every regime, then predictor sweeps in the c9p9
/// layout for every regime.
pub fn verify_calibration(cfg: &ExperimentConfig, size: SweepSize, episodes: usize) -> Result<Vec<ConsistencyReport>> {
    let episode = cfg.episode();
    let seed = cfg.experiment.seed;
    let mut reports = Vec::new();
    for r in Regime::ALL {
        let v = verify::localizer_sweep(&cfg.localizer, r, cfg.mppi.dt, size, seed)?;
        reports.push(ConsistencyReport::new(format!("localizer_{r}"), v)?);
    }
    for r in Regime::ALL {
        let v = verify::predictor_sweep(&episode, r, episodes, 30.0, 10, seed)?;
        reports.push(ConsistencyReport::new(format!("predictor_{r}"), v)?);
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub risk_median_ms: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Times full control cycles and the risk stage alone on a synthetic crowd
/// of `peds` pedestrians walking around the robot.
pub fn bench_cycle(cfg: &ExperimentConfig, peds: usize, reps: usize) -> Result<BenchReport> {
    let episode = cfg.episode();
    let settings = episode.settings(cfg.experiment.controller);
    settings.validate()?;
    let predictor = episode.predictor.resolve(cfg.experiment.pred, &cfg.mppi);
    let mut rng = StreamKey::new(cfg.experiment.seed, Purpose::Verification).rng();
    use rand::Rng;
    let tubes: Vec<_> = (0..peds)
        .map(|i| {
            let pos = Vec2::new(rng.random_range(0.5..6.0), rng.random_range(-2.5..2.5));
            let track = PedestrianTrack {
                id: i,
                position: pos,
                velocity: Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                timestamp: 0.0,
            };
            prediction::predict(&track, &[pos + Vec2::new(-5.0, 0.0)], &predictor)
        })
        .collect::<Result<_>>()?;
    let cov = Mat3::from_diagonal(&nalgebra::Vector3::new(0.01, 0.01, 0.001));
    let belief = StateBelief::new(RobotState::new(0.0, 0.0, 0.0), cov)?;
    let nominal = vec![Control::new(0.8, 0.0); cfg.mppi.horizon];
    let goal = Vec2::new(3.0, 0.0);
    let reps = reps.max(1);
    let mut cycle = Vec::with_capacity(reps);
    let mut risk = Vec::with_capacity(reps);
    let footprint = cfg.risk.footprint()?;
    for r in 0..reps as u64 {
        let key = StreamKey::new(cfg.experiment.seed, Purpose::ControlNoise).cycle(r);
        let t0 = Instant::now();
        let (_, batch) = mppi::control_cycle_detailed(&belief, &tubes, goal, &nominal, &settings, key)?;
        cycle.push(t0.elapsed().as_secs_f64() * 1e3);
        let tube = mppi::robot_tube(&settings, &belief, &nominal)?;
        let t1 = Instant::now();
        mppi::evaluate_risk(&batch.trajectories, &tube, &tubes, &cfg.risk, &footprint, key)?;
        risk.push(t1.elapsed().as_secs_f64() * 1e3);
    }
    cycle.sort_by(f64::total_cmp);
    risk.sort_by(f64::total_cmp);
    Ok(BenchReport {
        median_ms: metrics::median(&cycle),
        p95_ms: percentile(&cycle, 0.95),
        risk_median_ms: metrics::median(&risk),
    })
}
