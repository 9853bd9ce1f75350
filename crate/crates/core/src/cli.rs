//! Command-line driver.
//!
//! Every subcommand resolves one [`ExperimentConfig`] (flags over config file
//! over per-command defaults), runs, and writes a JSON report that embeds the
//! resolved configuration. Outputs depend only on that configuration: the
//! worker count and the output directory are deliberately left out of it.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::breakpoints::{BreakpointOptions, BreakpointRun};
use crate::couplings::{uniform_grid, verify_coupling, verify_reduction, CouplingExtra, CouplingKind};
use crate::error::{Error, Result};
use crate::estimators::Status;
use crate::events::Construction;
use crate::experiments::{self as ex, id_range, OriginBatchSpec, BREAKPOINT_OFFSET, CONTACT_OFFSET, FIRST_CYCLE_OFFSET};
use crate::parallel::{resolve_workers, try_map_replicas, with_workers, WORKERS_ENV};
use crate::percolation::{bond_site_coupling_check, cluster_batch, edge_speed_from};
use crate::process::{evolve, RunOptions};
use crate::Configuration;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;

/// Version of the config-file schema.
pub const CONFIG_VERSION: u32 = 1;

/// A fixed-count break-point run may grow its horizon to this multiple of
/// the configured one.
const HORIZON_CAP_FACTOR: f64 = 16.0;
/// Level whose first passage time feeds the hitting-time speed estimate.
const HIT_LEVEL: i64 = 100;
/// Radius around the origin recorded for the convergence check.
const NEAR_RADIUS: i64 = 8;
/// Edge samples of break-point runs used for the lower-deviation tail.
const EDGE_GRID_STEP: f64 = 5.0;
/// Density report tolerance on `|I_t| / t` against `2 alpha theta`.
const DENSITY_TOLERANCE: f64 = 0.07;
const TAIL_MIN_R2: f64 = 0.9;
const TAIL_MIN_POINTS: usize = 5;
const PERCOLATION_MIN_HITS: usize = 10;

#[derive(Parser, Debug)]
#[command(name = "contactlab", version, about = "Coupled Monte Carlo for the three-state contact process")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the standard process and write edge trajectories.
    Simulate(Flags),
    /// Check the four coupling identities pathwise.
    Couplings(Flags),
    /// Locate break points and write the increments.
    Breakpoints(Flags),
    /// Edge speed: regeneration ratio against the direct slope.
    Speed(Flags),
    /// Central limit theorem for the right edge.
    Clt(Flags),
    /// Infected density of surviving replicas.
    Density(Flags),
    /// Complete convergence on finite sets.
    Converge(Flags),
    /// Exponential tail fits.
    Tails(Flags),
    /// Independence and identical law of the increments.
    Iid(Flags),
    /// Oriented site percolation: bond-to-site containment and edge speed.
    Percolation(Flags),
    /// All pathwise checks at small scale.
    Selfcheck(Flags),
}

impl Command {
    fn split(self) -> (&'static str, Flags) {
        match self {
            Command::Simulate(f) => ("simulate", f),
            Command::Couplings(f) => ("couplings", f),
            Command::Breakpoints(f) => ("breakpoints", f),
            Command::Speed(f) => ("speed", f),
            Command::Clt(f) => ("clt", f),
            Command::Density(f) => ("density", f),
            Command::Converge(f) => ("converge", f),
            Command::Tails(f) => ("tails", f),
            Command::Iid(f) => ("iid", f),
            Command::Percolation(f) => ("percolation", f),
            Command::Selfcheck(f) => ("selfcheck", f),
        }
    }
}

/// Flags shared by every subcommand; the ones a subcommand does not use are
/// ignored. Lists are comma separated.
#[derive(Args, Debug, Default)]
struct Flags {
    /// JSON config file (`"version": 1`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rate of each lambda-arrow (reinfection of recovered sites).
    #[arg(long)]
    lambda: Option<f64>,
    /// Infection rate of never-infected sites; at least `lambda`.
    #[arg(long)]
    mu: Option<f64>,
    /// Master seed of the construction.
    #[arg(long)]
    seed: Option<u64>,
    /// Standard-process replicas (seeds for `percolation`).
    #[arg(long)]
    replicas: Option<u64>,
    /// Run length; the half-line horizon for break points; `n_max` for
    /// `percolation`.
    #[arg(long)]
    horizon: Option<f64>,
    /// A process still alive this long after its start counts as surviving.
    #[arg(long)]
    survival_horizon: Option<f64>,
    /// Evaluation or sample times, e.g. `100,200,400`.
    #[arg(long)]
    t_eval: Option<String>,
    /// Observation window `LO,HI` for the all-infected process.
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    /// Test level.
    #[arg(long)]
    alpha_level: Option<f64>,
    /// Output directory; the report goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (also `CONTACTLAB_WORKERS`).
    #[arg(long)]
    workers: Option<usize>,
    /// Break-point replicas.
    #[arg(long)]
    bp_replicas: Option<u64>,
    /// Break points per replica; 0 collects all up to the horizon.
    #[arg(long)]
    max_points: Option<usize>,
    /// All-infected replicas.
    #[arg(long)]
    contact_replicas: Option<u64>,
    /// Time at which the invariant density is estimated.
    #[arg(long)]
    theta_time: Option<f64>,
    /// Finite sets for `converge`, e.g. `0;0,1;-2,3`.
    #[arg(long, allow_hyphen_values = true)]
    sets: Option<String>,
    /// Site parameter for `percolation`.
    #[arg(long)]
    p: Option<f64>,
    /// Bond parameters for the containment check, e.g. `0.6,0.8,0.95`.
    #[arg(long)]
    p_tilde: Option<String>,
    /// Add a run-length encoded configuration column to `simulate`.
    #[arg(long)]
    snapshots: bool,
}

/// Config file contents; every field but `version` is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    version: u32,
    lambda: Option<f64>,
    mu: Option<f64>,
    seed: Option<u64>,
    replicas: Option<u64>,
    horizon: Option<f64>,
    survival_horizon: Option<f64>,
    t_eval: Option<Vec<f64>>,
    window: Option<(i64, i64)>,
    alpha_level: Option<f64>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    bp_replicas: Option<u64>,
    max_points: Option<usize>,
    contact_replicas: Option<u64>,
    theta_time: Option<f64>,
    sets: Option<Vec<Vec<i64>>>,
    p: Option<f64>,
    p_tilde: Option<Vec<f64>>,
    snapshots: Option<bool>,
}

/// Fully resolved settings of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub command: String,
    pub lambda: f64,
    pub mu: f64,
    pub seed: u64,
    pub replicas: u64,
    pub bp_replicas: u64,
    pub max_points: usize,
    pub contact_replicas: u64,
    pub horizon: f64,
    pub survival_horizon: f64,
    pub t_eval: Vec<f64>,
    pub window: (i64, i64),
    pub theta_time: f64,
    pub sets: Vec<Vec<i64>>,
    pub alpha_level: f64,
    pub p: f64,
    pub p_tilde: Vec<f64>,
    pub snapshots: bool,
}

impl ExperimentConfig {
    /// Defaults of `command`.
    pub fn defaults(command: &str) -> Self {
        let mut c = ExperimentConfig {
            version: CONFIG_VERSION,
            command: command.to_string(),
            lambda: 1.0,
            mu: 2.0,
            seed: 42,
            replicas: 1000,
            bp_replicas: 100,
            max_points: 20,
            contact_replicas: 100,
            horizon: 200.0,
            survival_horizon: 150.0,
            t_eval: vec![400.0],
            window: (-200, 200),
            theta_time: 150.0,
            sets: vec![vec![0], vec![0, 1], vec![-2, 3]],
            alpha_level: 0.01,
            p: 0.95,
            p_tilde: vec![0.6, 0.8, 0.95],
            snapshots: false,
        };
        match command {
            "simulate" => {
                c.replicas = 100;
                c.horizon = 100.0;
                c.t_eval = uniform_grid(100.0, 21);
            }
            "couplings" => {
                c.replicas = 300;
                c.horizon = 100.0;
                c.t_eval = uniform_grid(100.0, 101);
            }
            "breakpoints" => {
                c.bp_replicas = 20;
                c.horizon = 600.0;
                c.max_points = 0;
            }
            "clt" => c.t_eval = vec![100.0, 200.0, 400.0],
            "converge" => {
                c.t_eval = vec![300.0];
                c.contact_replicas = 50;
            }
            "percolation" => {
                c.replicas = 500;
                c.horizon = 300.0;
            }
            "selfcheck" => {
                c.replicas = 20;
                c.horizon = 30.0;
                c.t_eval = uniform_grid(30.0, 31);
                c.p_tilde = vec![0.6, 0.8];
            }
            _ => {}
        }
        c
    }

    pub fn construction(&self) -> Result<Construction> {
        Construction::new(self.seed, self.lambda, self.mu)
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::input(format!("{name} must be positive, got {v}")))
            }
        };
        positive("horizon", self.horizon)?;
        positive("survival horizon", self.survival_horizon)?;
        positive("theta time", self.theta_time)?;
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(Error::input(format!("test level must lie in (0, 1), got {}", self.alpha_level)));
        }
        if self.replicas == 0 || self.bp_replicas == 0 || self.contact_replicas == 0 {
            return Err(Error::input("replica counts must be positive"));
        }
        if self.window.0 > self.window.1 {
            return Err(Error::input(format!("empty window {:?}", self.window)));
        }
        if let Some(t) = self.t_eval.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(Error::input(format!("evaluation time {t} is not a time")));
        }
        if self.t_eval.is_empty() {
            return Err(Error::input("no evaluation times"));
        }
        if uses_breakpoints(&self.command) && self.survival_horizon > self.horizon {
            return Err(Error::input(format!(
                "survival horizon {} exceeds horizon {}",
                self.survival_horizon, self.horizon
            )));
        }
        if ["couplings", "breakpoints"].contains(&self.command.as_str()) || uses_breakpoints(&self.command) {
            self.construction()?.require_ordered()?;
        }
        Ok(())
    }

    fn t_max_eval(&self) -> f64 {
        self.t_eval.iter().copied().fold(0.0, f64::max)
    }

    fn breakpoint_options(&self) -> BreakpointOptions {
        let opts = BreakpointOptions::new(self.horizon, self.survival_horizon);
        if self.max_points == 0 {
            opts
        } else {
            opts.max_points(self.max_points).horizon_cap(self.horizon * HORIZON_CAP_FACTOR)
        }
    }
}

fn uses_breakpoints(command: &str) -> bool {
    ["breakpoints", "speed", "clt", "density", "tails", "iid"].contains(&command)
}

fn parse_list<T: std::str::FromStr>(name: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::input(format!("--{name}: cannot parse {s:?}"))))
        .collect()
}

fn parse_window(text: &str) -> Result<(i64, i64)> {
    match parse_list::<i64>("window", text)?.as_slice() {
        &[lo, hi] => Ok((lo, hi)),
        _ => Err(Error::input(format!("--window expects LO,HI, got {text:?}"))),
    }
}

fn parse_sets(text: &str) -> Result<Vec<Vec<i64>>> {
    text.split(';').map(|s| parse_list("sets", s)).collect()
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    let file: FileConfig =
        serde_json::from_str(&text).map_err(|e| Error::input(format!("bad config {}: {e}", path.display())))?;
    if file.version != CONFIG_VERSION {
        return Err(Error::input(format!(
            "config {} has version {}, expected {CONFIG_VERSION}",
            path.display(),
            file.version
        )));
    }
    Ok(file)
}

/// Resolved configuration, output directory and worker count.
fn resolve(command: &str, flags: &Flags) -> Result<(ExperimentConfig, Option<PathBuf>, Option<usize>)> {
    let file = match &flags.config {
        Some(path) => read_file_config(path)?,
        None => FileConfig::default(),
    };
    let mut c = ExperimentConfig::defaults(command);
    macro_rules! layer {
        ($field:ident) => {
            if let Some(v) = file.$field.clone() {
                c.$field = v;
            }
        };
    }
    layer!(lambda);
    layer!(mu);
    layer!(seed);
    layer!(replicas);
    layer!(horizon);
    layer!(survival_horizon);
    layer!(t_eval);
    layer!(window);
    layer!(alpha_level);
    layer!(bp_replicas);
    layer!(max_points);
    layer!(contact_replicas);
    layer!(theta_time);
    layer!(sets);
    layer!(p);
    layer!(p_tilde);
    layer!(snapshots);
    macro_rules! flag {
        ($field:ident) => {
            if let Some(v) = flags.$field {
                c.$field = v;
            }
        };
    }
    flag!(lambda);
    flag!(mu);
    flag!(seed);
    flag!(replicas);
    flag!(horizon);
    flag!(survival_horizon);
    flag!(alpha_level);
    flag!(bp_replicas);
    flag!(max_points);
    flag!(contact_replicas);
    flag!(theta_time);
    flag!(p);
    if let Some(t) = &flags.t_eval {
        c.t_eval = parse_list("t-eval", t)?;
    }
    if let Some(w) = &flags.window {
        c.window = parse_window(w)?;
    }
    if let Some(s) = &flags.sets {
        c.sets = parse_sets(s)?;
    }
    if let Some(p) = &flags.p_tilde {
        c.p_tilde = parse_list("p-tilde", p)?;
    }
    c.snapshots |= flags.snapshots;
    c.validate()?;
    let out = flags.out.clone().or(file.out);
    // flag, then environment, then file
    let workers = match resolve_workers(flags.workers)? {
        Some(n) => Some(n),
        None => file.workers.map(|n| resolve_workers(Some(n))).transpose()?.flatten(),
    };
    Ok((c, out, workers))
}

/// What a subcommand produced.
pub struct Outcome {
    pub status: Status,
    /// Pathwise identity failed: exit 3 rather than 1.
    pub engine_violation: bool,
    pub report: serde_json::Value,
    /// `(file name, contents)`.
    pub tables: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn statistical(status: Status, report: serde_json::Value) -> Self {
        Outcome { status, engine_violation: false, report, tables: Vec::new() }
    }

    fn pathwise(passed: bool, report: serde_json::Value) -> Self {
        Outcome {
            status: Status::from_bool(passed),
            engine_violation: !passed,
            report,
            tables: Vec::new(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match (self.status, self.engine_violation) {
            (Status::Pass, _) => EXIT_PASS,
            (_, true) => EXIT_ENGINE,
            _ => EXIT_FAIL,
        }
    }
}

pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::Parameter(_) | Error::Input(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => EXIT_INPUT,
        Error::Engine(_) | Error::WindowBreach { .. } => EXIT_ENGINE,
        Error::InsufficientData(_) | Error::Degenerate(_) => EXIT_FAIL,
    }
}

fn csv_bytes<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn origin_spec(times: Vec<f64>) -> OriginBatchSpec {
    let t_end = times.iter().copied().fold(0.0, f64::max);
    OriginBatchSpec { t_end, sample_times: times, near: NEAR_RADIUS, hit_level: HIT_LEVEL }
}

fn breakpoint_batch(c: &ExperimentConfig, cons: &Construction, with_edges: bool) -> Result<Vec<BreakpointRun>> {
    let mut opts = c.breakpoint_options();
    if with_edges {
        let steps = (c.horizon / EDGE_GRID_STEP).floor() as usize;
        opts = opts.edge_grid((1..=steps).map(|k| k as f64 * EDGE_GRID_STEP));
    }
    ex::run_breakpoint_batch(cons, id_range(BREAKPOINT_OFFSET, c.bp_replicas), &opts)
}

/// Run one resolved configuration.
pub fn execute(c: &ExperimentConfig) -> Result<Outcome> {
    let cons = c.construction()?;
    match c.command.as_str() {
        "simulate" => simulate(c, &cons),
        "couplings" => couplings(c, &cons),
        "breakpoints" => breakpoints(c, &cons),
        "speed" => {
            let runs = breakpoint_batch(c, &cons, false)?;
            let origin = ex::run_origin_batch(&cons, 0..c.replicas, &origin_spec(c.t_eval.clone()))?;
            let r = ex::speed_from_batches(&runs, &origin, c.t_max_eval(), HIT_LEVEL)?;
            Ok(Outcome::statistical(r.status, to_json(&r)?))
        }
        "clt" => {
            let runs = breakpoint_batch(c, &cons, false)?;
            let origin = ex::run_origin_batch(&cons, 0..c.replicas, &origin_spec(c.t_eval.clone()))?;
            let r = ex::clt_from_batches(&runs, &origin, &c.t_eval, c.alpha_level)?;
            Ok(Outcome::statistical(r.status, to_json(&r)?))
        }
        "density" => {
            let runs = breakpoint_batch(c, &cons, false)?;
            let origin = ex::run_origin_batch(&cons, 0..c.replicas, &origin_spec(c.t_eval.clone()))?;
            let contact = ex::run_contact_batch(&cons, id_range(CONTACT_OFFSET, c.contact_replicas), &[c.theta_time], c.window)?;
            let r = ex::density_from_batches(
                &runs,
                &origin,
                &contact,
                &c.t_eval,
                c.theta_time,
                c.window,
                c.survival_horizon,
                DENSITY_TOLERANCE,
            )?;
            Ok(Outcome::statistical(r.status, to_json(&r)?))
        }
        "converge" => {
            let t = c.t_max_eval();
            let origin = ex::run_origin_batch(&cons, 0..c.replicas, &origin_spec(vec![t]))?;
            let contact = ex::run_contact_batch(&cons, id_range(CONTACT_OFFSET, c.contact_replicas), &[t], c.window)?;
            let r = ex::convergence_from_batches(&origin, &contact, &c.sets, t, c.window, c.survival_horizon, c.alpha_level)?;
            Ok(Outcome::statistical(r.status, to_json(&r)?))
        }
        "tails" => {
            let runs = breakpoint_batch(c, &cons, true)?;
            let first = ex::run_first_cycle_batch(&cons, id_range(FIRST_CYCLE_OFFSET, c.replicas), &c.breakpoint_options())?;
            let origin = ex::run_origin_batch(&cons, 0..c.replicas, &origin_spec(c.t_eval.clone()))?;
            let r = ex::tails_from_batches(&runs, &first, &origin, c.survival_horizon, TAIL_MIN_R2, TAIL_MIN_POINTS)?;
            Ok(Outcome::statistical(r.status, to_json(&r)?))
        }
        "iid" => {
            let runs = breakpoint_batch(c, &cons, false)?;
            let r = ex::iid_from_runs(&runs, c.alpha_level);
            Ok(Outcome::statistical(r.status, to_json(&r)?))
        }
        "percolation" => percolation(c),
        "selfcheck" => selfcheck(c, &cons),
        other => Err(Error::input(format!("unknown command {other:?}"))),
    }
}

fn simulate(c: &ExperimentConfig, cons: &Construction) -> Result<Outcome> {
    let opts = RunOptions::until(c.horizon).sampled_at(c.t_eval.iter().copied().filter(|&t| t <= c.horizon));
    let runs = try_map_replicas(0..c.replicas, |replica| evolve(cons, replica, &Configuration::standard(), &opts))?;
    #[derive(Serialize)]
    struct Row {
        replica: u64,
        t: f64,
        r: Option<i64>,
        l: Option<i64>,
        infected_count: u64,
        died: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        snapshot: Option<String>,
    }
    let rows = runs.iter().flat_map(|traj| {
        traj.samples.iter().map(move |s| Row {
            replica: traj.params.replica_id,
            t: s.state.time,
            r: s.state.r,
            l: s.state.l,
            infected_count: s.state.infected_count,
            died: traj.died_at.is_some_and(|d| d <= s.state.time),
            snapshot: c.snapshots.then(|| s.state.config.to_rle()),
        })
    });
    let mut header = vec!["replica", "t", "r", "l", "infected_count", "died"];
    if c.snapshots {
        header.push("snapshot");
    }
    let table = csv_bytes(&header, rows)?;
    let survived = runs.iter().filter(|t| t.died_at.is_none()).count();
    let speeds: Vec<f64> = runs
        .iter()
        .filter(|t| t.died_at.is_none())
        .filter_map(|t| t.final_state.r)
        .map(|r| r as f64 / c.horizon)
        .collect();
    let report = json!({
        "replicas": c.replicas,
        "survived": survived,
        "mean_edge_over_t": if speeds.is_empty() { None } else { Some(crate::estimators::mean(&speeds)) },
        "events_applied": runs.iter().map(|t| t.events_applied).sum::<u64>(),
    });
    Ok(Outcome {
        status: Status::Pass,
        engine_violation: false,
        report,
        tables: vec![("trajectory.csv".into(), table)],
    })
}

fn couplings(c: &ExperimentConfig, cons: &Construction) -> Result<Outcome> {
    let grid: Vec<f64> = c.t_eval.iter().copied().filter(|&t| t <= c.horizon).collect();
    let verdicts = CouplingKind::ALL
        .iter()
        .map(|&kind| verify_coupling(kind, cons, c.replicas, c.horizon, &grid, &CouplingExtra::default()))
        .collect::<Result<Vec<_>>>()?;
    let passed = verdicts.iter().all(|v| v.passed);
    Ok(Outcome::pathwise(passed, json!({ "verdicts": verdicts })))
}

fn breakpoints(c: &ExperimentConfig, cons: &Construction) -> Result<Outcome> {
    let runs = breakpoint_batch(c, cons, false)?;
    #[derive(Serialize)]
    struct Row {
        replica: u64,
        n: usize,
        k_n: i64,
        tau_kn: f64,
        x_n: Option<i64>,
        psi_n: Option<f64>,
        m_prev: Option<i64>,
        censored: bool,
    }
    let rows = runs.iter().flat_map(|run| {
        run.breakpoints.iter().skip(1).map(move |b| {
            let inc = run.increments.iter().find(|i| i.n == b.n);
            Row {
                replica: run.replica_id,
                n: b.n,
                k_n: b.k,
                tau_kn: b.tau,
                x_n: inc.map(|i| i.x),
                psi_n: inc.map(|i| i.psi),
                m_prev: inc.map(|i| i.m),
                censored: b.censored,
            }
        })
    });
    let table = csv_bytes(&["replica", "n", "K_n", "tau_Kn", "X_n", "Psi_n", "M_n-1", "censored"], rows)?;
    let increments = ex::all_increments(&runs);
    let report = json!({
        "replicas": runs.len(),
        "origin_survived": runs.iter().filter(|r| r.origin_survived).count(),
        "breakpoints": runs.iter().map(|r| r.breakpoints.len() - 1).sum::<usize>(),
        "increments": increments.len(),
        "restarts": runs.iter().map(|r| r.restarts.len()).sum::<usize>(),
        "dropped_unconditioned_first": runs.iter().map(|r| r.dropped.unconditioned_first).sum::<u32>(),
        "dropped_horizon_cut": runs.iter().map(|r| r.dropped.horizon_cut).sum::<u32>(),
        "alpha": crate::estimators::estimate_alpha(&increments).ok(),
    });
    Ok(Outcome {
        status: Status::Pass,
        engine_violation: false,
        report,
        tables: vec![("breakpoints.csv".into(), table)],
    })
}

fn percolation(c: &ExperimentConfig) -> Result<Outcome> {
    let n_max = c.horizon.round() as u64;
    let containment = c
        .p_tilde
        .iter()
        .map(|&pt| bond_site_coupling_check(pt, 0..c.replicas, n_max))
        .collect::<Result<Vec<_>>>()?;
    let batch = cluster_batch(c.p, 0..c.replicas, n_max, true)?;
    let speed = edge_speed_from(c.p, n_max, &batch, PERCOLATION_MIN_HITS);
    let rows = batch
        .iter()
        .flat_map(|s| s.rows.iter().map(move |&(n, size, r)| (s.seed, n, size, r)));
    let table = csv_bytes(&["replica", "n", "size", "R_n"], rows)?;
    let contained = containment.iter().all(|v| v.passed);
    let status = if contained { speed.status } else { Status::Fail };
    Ok(Outcome {
        status,
        engine_violation: !contained || speed.half_line_mismatches > 0,
        report: json!({ "containment": containment, "edge_speed": speed }),
        tables: vec![("percolation.csv".into(), table)],
    })
}

fn selfcheck(c: &ExperimentConfig, cons: &Construction) -> Result<Outcome> {
    let mut out = couplings(c, cons)?;
    let equal = Construction::new(c.seed, c.mu, c.mu)?;
    let reduction = verify_reduction(&equal, c.replicas, c.horizon, &c.t_eval)?;
    let n_max = (c.horizon.round() as u64).max(1);
    let containment = c
        .p_tilde
        .iter()
        .map(|&pt| bond_site_coupling_check(pt, 0..c.replicas, n_max))
        .collect::<Result<Vec<_>>>()?;
    let passed = out.status == Status::Pass && reduction.passed && containment.iter().all(|v| v.passed);
    out.report["reduction"] = to_json(&reduction)?;
    out.report["containment"] = to_json(&containment)?;
    Ok(Outcome::pathwise(passed, out.report))
}

/// The JSON document written for a run.
pub fn report_document(c: &ExperimentConfig, outcome: &Outcome) -> serde_json::Value {
    json!({
        "command": c.command,
        "seed": c.seed,
        "config": c,
        "status": outcome.status,
        "report": outcome.report,
    })
}

fn write_outputs(dir: &Path, c: &ExperimentConfig, outcome: &Outcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json_path = dir.join(format!("{}.json", c.command));
    let mut text = serde_json::to_string_pretty(&report_document(c, outcome))?;
    text.push('\n');
    fs::write(&json_path, text)?;
    written.push(json_path);
    for (name, bytes) in &outcome.tables {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// Parse `args` (program name first), run, write outputs, and return the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout())
}

/// [`run`] with the report and progress lines sent to `out`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_PASS,
                _ => EXIT_INPUT,
            };
        }
    };
    let (command, flags) = cli.command.split();
    match run_command(command, &flags, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("contactlab {command}: {e}");
            exit_code_for(&e)
        }
    }
}

fn run_command(command: &str, flags: &Flags, out: &mut dyn Write) -> Result<i32> {
    let (config, dir, workers) = resolve(command, flags)?;
    log::info!("{command}: seed {} workers {:?} ({WORKERS_ENV})", config.seed, workers);
    let outcome = with_workers(workers, || execute(&config))??;
    match &dir {
        Some(dir) => {
            for path in write_outputs(dir, &config, &outcome)? {
                writeln!(out, "wrote {}", path.display())?;
            }
        }
        None => writeln!(out, "{}", serde_json::to_string_pretty(&report_document(&config, &outcome))?)?,
    }
    let code = outcome.exit_code();
    if outcome.engine_violation {
        eprintln!("contactlab {command}: pathwise check failed; see the report");
    }
    writeln!(out, "{command}: {:?} (exit {code})", outcome.status)?;
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags_for(args: &[&str]) -> (&'static str, Flags) {
        let mut argv = vec!["contactlab"];
        argv.extend_from_slice(args);
        Cli::try_parse_from(argv).unwrap().command.split()
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"version": 1, "mu": 3.0, "replicas": 7, "t_eval": [5.0, 6.0]}"#).unwrap();
        let p = path.to_str().unwrap();
        let (cmd, flags) = flags_for(&["speed", "--config", p, "--replicas", "9"]);
        let (c, out, _) = resolve(cmd, &flags).unwrap();
        assert_eq!((c.mu, c.replicas, c.t_eval.clone()), (3.0, 9, vec![5.0, 6.0]));
        assert_eq!(c.lambda, 1.0);
        assert!(out.is_none());
        let (cmd, flags) = flags_for(&["clt", "--t-eval", "10,20", "--window=-5,5", "--sets", "0;1,2"]);
        let (c, _, _) = resolve(cmd, &flags).unwrap();
        assert_eq!(c.t_eval, vec![10.0, 20.0]);
        assert_eq!(c.window, (-5, 5));
        assert_eq!(c.sets, vec![vec![0], vec![1, 2]]);
    }

    #[test]
    fn bad_configs_are_input_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            r#"{"version": 2}"#,
            r#"{"version": 1, "nonsense": 1}"#,
            r#"{"mu": 2.0}"#,
            "not json",
        ];
        for (i, text) in cases.iter().enumerate() {
            let path = dir.path().join(format!("{i}.json"));
            fs::write(&path, text).unwrap();
            let (cmd, flags) = flags_for(&["iid", "--config", path.to_str().unwrap()]);
            assert!(matches!(resolve(cmd, &flags), Err(Error::Input(_))), "{text}");
        }
    }

    #[test]
    fn ordering_and_ranges_are_checked() {
        let (cmd, flags) = flags_for(&["breakpoints", "--lambda", "2", "--mu", "1"]);
        assert!(matches!(resolve(cmd, &flags), Err(Error::Parameter(_))));
        let (cmd, flags) = flags_for(&["speed", "--horizon", "100", "--survival-horizon", "150"]);
        assert!(matches!(resolve(cmd, &flags), Err(Error::Input(_))));
        let (cmd, flags) = flags_for(&["speed", "--alpha-level", "1.5"]);
        assert!(resolve(cmd, &flags).is_err());
        let (cmd, flags) = flags_for(&["couplings", "--window", "5,1"]);
        assert!(resolve(cmd, &flags).is_err());
    }

    #[test]
    fn parse_errors_exit_with_input_code() {
        assert_eq!(run(["contactlab", "speed", "--mu", "1", "--mu", "2"]), EXIT_INPUT);
        assert_eq!(run(["contactlab", "speed", "--unknown"]), EXIT_INPUT);
        assert_eq!(run(["contactlab", "nothing"]), EXIT_INPUT);
        assert_eq!(run(["contactlab", "breakpoints", "--lambda", "2", "--mu", "1"]), EXIT_INPUT);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code_for(&Error::Engine("x".into())), EXIT_ENGINE);
        assert_eq!(exit_code_for(&Error::InsufficientData("x".into())), EXIT_FAIL);
        assert_eq!(exit_code_for(&Error::Parameter("x".into())), EXIT_INPUT);
    }
}
