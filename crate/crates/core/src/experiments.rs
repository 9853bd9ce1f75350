//! Replica batches and the reports built from them.
//!
//! Batches of different kinds use disjoint replica-id ranges so that
//! estimates combined in one comparison are independent.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::breakpoints::{detect_breakpoints, hitting_times, BreakpointOptions, BreakpointRun, Increment};
use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::estimators::{
    auto_thresholds, clt_test, complete_convergence_report, density_report, estimate_alpha, estimate_sigma2,
    estimate_theta, fit_log_linear, iid_report, speed_report, tail_fit, CltReport, ConvergenceInput,
    ConvergenceReport, DensityReport, EdgeSpeedEstimate, IidReport, SpeedReport, Status, SurvivorSlice, TailFit,
    TailSample, ThetaEstimate,
};
use crate::events::Construction;
use crate::parallel::try_map_replicas;
use crate::process::{contact_evolve, evolve, ContactInit, RunOptions, WindowPolicy};

/// First replica id of break-point batches.
pub const BREAKPOINT_OFFSET: u64 = 1_000_000;
/// First replica id of all-infected contact batches.
pub const CONTACT_OFFSET: u64 = 2_000_000;
/// First replica id of first-cycle batches.
pub const FIRST_CYCLE_OFFSET: u64 = 3_000_000;

pub fn id_range(offset: u64, count: u64) -> Range<u64> {
    offset..offset + count
}

// ---------------------------------------------------------------------------
// Standard-process batch

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub r: Option<i64>,
    pub l: Option<i64>,
    pub count: u64,
    /// Infected sites within the `near` radius of the origin.
    pub near: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginObservation {
    pub replica: u64,
    pub died_at: Option<f64>,
    /// Sup of the right edge over the run.
    pub max_r: Option<i64>,
    /// First time the edge reached the hit level.
    pub hit_time: Option<f64>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginBatchSpec {
    pub t_end: f64,
    pub sample_times: Vec<f64>,
    pub near: i64,
    pub hit_level: i64,
}

/// Run the standard process on `ids` up to `spec.t_end`.
pub fn run_origin_batch(c: &Construction, ids: Range<u64>, spec: &OriginBatchSpec) -> Result<Vec<OriginObservation>> {
    let opts = RunOptions::until(spec.t_end).sampled_at(spec.sample_times.iter().copied());
    try_map_replicas(ids, |replica| {
        let traj = evolve(c, replica, &Configuration::standard(), &opts)?;
        let hit_time = hitting_times(&traj, spec.hit_level)
            .last()
            .filter(|&&(k, _)| k == spec.hit_level)
            .map(|&(_, t)| t);
        Ok(OriginObservation {
            replica,
            died_at: traj.died_at,
            max_r: traj.max_r(),
            hit_time,
            snapshots: traj
                .samples
                .iter()
                .map(|s| Snapshot {
                    t: s.state.time,
                    r: s.state.r,
                    l: s.state.l,
                    count: s.state.infected_count,
                    near: s.state.config.infected_in(-spec.near, spec.near),
                })
                .collect(),
        })
    })
}

fn snapshot_at(o: &OriginObservation, t: f64) -> Option<&Snapshot> {
    o.snapshots.iter().find(|s| s.t == t)
}

/// Replicas alive at the end of the batch: the proxy survivors for every
/// conditional statistic.
pub fn survivors(batch: &[OriginObservation]) -> impl Iterator<Item = &OriginObservation> {
    batch.iter().filter(|o| o.died_at.is_none())
}

/// Replicas alive at time `s`, out of the batch size.
pub fn survival_count(batch: &[OriginObservation], s: f64) -> usize {
    batch.iter().filter(|o| o.died_at.is_none_or(|d| d > s)).count()
}

// ---------------------------------------------------------------------------
// Break-point batch

pub fn run_breakpoint_batch(c: &Construction, ids: Range<u64>, opts: &BreakpointOptions) -> Result<Vec<BreakpointRun>> {
    try_map_replicas(ids, |replica| detect_breakpoints(c, replica, opts))
}

/// First increments `(tau_1, X_1, M_0)` of the replicas whose standard
/// process passes the survival proxy; the others are skipped before the
/// half-line run. `opts.max_points` is forced to 1.
pub fn run_first_cycle_batch(c: &Construction, ids: Range<u64>, opts: &BreakpointOptions) -> Result<Vec<Increment>> {
    let opts = opts.clone().max_points(1);
    let proxy = RunOptions::until(opts.survival_horizon).without_edges();
    let found = try_map_replicas(ids, |replica| {
        if evolve(c, replica, &Configuration::standard(), &proxy)?.died_at.is_some() {
            return Ok(None);
        }
        let run = detect_breakpoints(c, replica, &opts)?;
        Ok(run.increments.first().copied())
    })?;
    Ok(found.into_iter().flatten().collect())
}

pub fn all_increments(runs: &[BreakpointRun]) -> Vec<Increment> {
    runs.iter().flat_map(|r| r.increments.iter().copied()).collect()
}

pub fn increments_by_replica(runs: &[BreakpointRun]) -> BTreeMap<u64, Vec<Increment>> {
    runs.iter()
        .filter(|r| !r.increments.is_empty())
        .map(|r| (r.replica_id, r.increments.clone()))
        .collect()
}

// ---------------------------------------------------------------------------
// All-infected contact batch

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactObservation {
    pub replica: u64,
    /// Infected sites inside the probe at each sample time.
    pub snapshots: Vec<(f64, Vec<i64>)>,
}

/// Run `xi^Z` on `ids`, certified on `probe` at every time in `times`.
pub fn run_contact_batch(c: &Construction, ids: Range<u64>, times: &[f64], probe: (i64, i64)) -> Result<Vec<ContactObservation>> {
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let opts = RunOptions::until(t_end)
        .sampled_at(times.iter().copied())
        .window(WindowPolicy::default().with_probe(probe.0, probe.1))
        .without_edges();
    try_map_replicas(ids, |replica| {
        let traj = contact_evolve(c, replica, &ContactInit::All, &opts)?;
        Ok(ContactObservation {
            replica,
            snapshots: traj
                .samples
                .iter()
                .map(|s| (s.state.time, s.state.config.infected_in(probe.0, probe.1)))
                .collect(),
        })
    })
}

fn contact_at(o: &ContactObservation, t: f64) -> Result<&[i64]> {
    o.snapshots
        .iter()
        .find(|s| s.0 == t)
        .map(|s| s.1.as_slice())
        .ok_or_else(|| Error::input(format!("contact batch has no sample at t = {t}")))
}

/// Occupancy of `window` at `t`, averaged over the batch.
pub fn theta_from_batch(batch: &[ContactObservation], t: f64, window: (i64, i64)) -> Result<ThetaEstimate> {
    let width = (window.1 - window.0 + 1) as f64;
    let fractions = batch
        .iter()
        .map(|o| {
            let sites = contact_at(o, t)?;
            Ok(sites.iter().filter(|&&x| x >= window.0 && x <= window.1).count() as f64 / width)
        })
        .collect::<Result<Vec<f64>>>()?;
    estimate_theta(&fractions, t, window)
}

/// Per replica: fraction of the translates `F + j` inside `window` that miss
/// every infected site at `t`.
pub fn phi_fractions(batch: &[ContactObservation], t: f64, f: &[i64], window: (i64, i64)) -> Result<Vec<f64>> {
    let (Some(&fmin), Some(&fmax)) = (f.iter().min(), f.iter().max()) else {
        return Ok(vec![1.0; batch.len()]);
    };
    let shifts: Vec<i64> = (window.0 - fmin..=window.1 - fmax).collect();
    if shifts.is_empty() {
        return Err(Error::input(format!("set {f:?} does not fit in the window {window:?}")));
    }
    batch
        .iter()
        .map(|o| {
            let sites = contact_at(o, t)?;
            let missed = shifts
                .iter()
                .filter(|&&j| f.iter().all(|&x| sites.binary_search(&(x + j)).is_err()))
                .count();
            Ok(missed as f64 / shifts.len() as f64)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reports

/// Regeneration edge speed, falling back to an error when no increments were
/// collected.
pub fn alpha_from_runs(runs: &[BreakpointRun]) -> Result<EdgeSpeedEstimate> {
    estimate_alpha(&all_increments(runs))
}

pub fn speed_from_batches(
    runs: &[BreakpointRun],
    origin: &[OriginObservation],
    slope_time: f64,
    hit_level: i64,
) -> Result<SpeedReport> {
    let alpha = alpha_from_runs(runs)?;
    let slopes: Vec<f64> = survivors(origin)
        .filter_map(|o| snapshot_at(o, slope_time).and_then(|s| s.r))
        .map(|r| r as f64 / slope_time)
        .collect();
    let ratios: Vec<f64> = survivors(origin)
        .filter_map(|o| o.hit_time)
        .map(|t| t / hit_level as f64)
        .collect();
    Ok(speed_report(alpha, &slopes, slope_time, &ratios, hit_level))
}

pub fn clt_from_batches(runs: &[BreakpointRun], origin: &[OriginObservation], times: &[f64], level: f64) -> Result<CltReport> {
    let incs = all_increments(runs);
    let alpha = estimate_alpha(&incs)?;
    let sigma2 = estimate_sigma2(&incs, alpha.alpha_hat)?;
    let edges: Vec<(f64, Vec<i64>)> = times
        .iter()
        .map(|&t| (t, survivors(origin).filter_map(|o| snapshot_at(o, t).and_then(|s| s.r)).collect()))
        .collect();
    clt_test(&edges, alpha.alpha_hat, sigma2, level)
}

pub fn density_from_batches(
    runs: &[BreakpointRun],
    origin: &[OriginObservation],
    contact: &[ContactObservation],
    times: &[f64],
    theta_time: f64,
    theta_window: (i64, i64),
    survival_horizon: f64,
    tolerance: f64,
) -> Result<DensityReport> {
    let alpha = alpha_from_runs(runs)?;
    let theta = theta_from_batch(contact, theta_time, theta_window)?;
    let beta = survival_count(origin, survival_horizon) as f64 / origin.len().max(1) as f64;
    let slices: Vec<SurvivorSlice> = times
        .iter()
        .map(|&t| {
            let snaps: Vec<&Snapshot> = survivors(origin).filter_map(|o| snapshot_at(o, t)).collect();
            SurvivorSlice {
                t,
                counts: snaps.iter().map(|s| s.count).collect(),
                left: snaps.iter().filter_map(|s| s.l).collect(),
            }
        })
        .collect();
    Ok(density_report(&alpha, &theta, beta, &slices, tolerance))
}

pub fn convergence_from_batches(
    origin: &[OriginObservation],
    contact: &[ContactObservation],
    sets: &[Vec<i64>],
    t_eval: f64,
    phi_window: (i64, i64),
    survival_horizon: f64,
    level: f64,
) -> Result<ConvergenceReport> {
    let inputs = sets
        .iter()
        .map(|f| {
            let mut lhs_empty = 0;
            for o in origin {
                let snap = snapshot_at(o, t_eval)
                    .ok_or_else(|| Error::input(format!("standard batch has no sample at t = {t_eval}")))?;
                if f.iter().all(|x| snap.near.binary_search(x).is_err()) {
                    lhs_empty += 1;
                }
            }
            Ok(ConvergenceInput {
                f: f.clone(),
                lhs_empty,
                lhs_n: origin.len(),
                phi_fractions: phi_fractions(contact, t_eval, f, phi_window)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    complete_convergence_report(&inputs, survival_count(origin, survival_horizon), origin.len(), t_eval, level)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub variable: String,
    pub fit: Option<TailFit>,
    pub error: Option<String>,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailsReport {
    pub min_r2: f64,
    pub min_points: usize,
    pub deviation_slope: Option<f64>,
    pub checks: Vec<TailCheck>,
    /// Fit of the death time over replicas that died, `P(rho > t, rho < inf)`.
    pub death_time: Option<TailFit>,
    /// That fit evaluated at the survival horizon: the estimated chance that
    /// the proxy calls a dying replica a survivor.
    pub proxy_misclassification: Option<f64>,
    pub status: Status,
}

fn tail_check(variable: &str, fit: Result<TailFit>, min_r2: f64, min_points: usize) -> TailCheck {
    match fit {
        Ok(fit) => TailCheck {
            variable: variable.into(),
            status: Status::from_bool(fit.passes(min_r2, min_points)),
            fit: Some(fit),
            error: None,
        },
        Err(e) => TailCheck {
            variable: variable.into(),
            fit: None,
            error: Some(e.to_string()),
            status: match e {
                Error::InsufficientData(_) => Status::Inconclusive,
                _ => Status::Fail,
            },
        },
    }
}

const TAIL_POINTS: usize = 8;
const TAIL_MIN_EXCEEDANCES: usize = 10;

fn observed_fit(variable: &str, values: &[f64]) -> Result<TailFit> {
    let thresholds = auto_thresholds(values, TAIL_POINTS, TAIL_MIN_EXCEEDANCES);
    let samples: Vec<TailSample> = values.iter().map(|&v| TailSample::Observed(v)).collect();
    tail_fit(variable, &samples, &thresholds)
}

/// Survival fraction below `slope * t` on the grid, keeping times with at
/// least the minimum number of hits.
fn lower_deviation_fit(runs: &[BreakpointRun], slope: f64) -> Result<TailFit> {
    let mut grid: Vec<f64> = runs
        .first()
        .map(|r| r.edge_samples.iter().map(|s| s.0).filter(|&t| t > 0.0).collect())
        .unwrap_or_default();
    grid.sort_by(f64::total_cmp);
    let n = runs.len();
    let mut ts = Vec::new();
    let mut ps = Vec::new();
    for &t in &grid {
        let below = runs
            .iter()
            .filter(|r| r.edge_samples.iter().any(|&(u, e)| u == t && e.is_some_and(|e| (e as f64) < slope * t)))
            .count();
        if below >= TAIL_MIN_EXCEEDANCES {
            ts.push(t);
            ps.push(below as f64 / n as f64);
        }
    }
    fit_log_linear("rbar_t < a t", &ts, &ps, n, 0)
}

/// Exponential tail fits: the sup of the edge on death, the first break point
/// `(tau_1, X_1, M_0)` from `first`, and lower deviations `P(rbar_t < a t)`
/// of the half-line edge with `a = alpha_hat / 2`.
pub fn tails_from_batches(
    runs: &[BreakpointRun],
    first: &[Increment],
    origin: &[OriginObservation],
    survival_horizon: f64,
    min_r2: f64,
    min_points: usize,
) -> Result<TailsReport> {
    let dead: Vec<&OriginObservation> = origin.iter().filter(|o| o.died_at.is_some()).collect();
    let on_death: Vec<f64> = dead.iter().filter_map(|o| o.max_r).map(|r| r as f64).collect();
    let tau1: Vec<f64> = first.iter().map(|i| i.psi).collect();
    let x1: Vec<f64> = first.iter().map(|i| i.x as f64).collect();
    let m0: Vec<f64> = first.iter().map(|i| i.m as f64).collect();
    let mut checks = vec![
        tail_check("R on death", observed_fit("R on death", &on_death), min_r2, min_points),
        tail_check("tau_1", observed_fit("tau_1", &tau1), min_r2, min_points),
        tail_check("X_1", observed_fit("X_1", &x1), min_r2, min_points),
        tail_check("M_0", observed_fit("M_0", &m0), min_r2, min_points),
    ];
    let slope = alpha_from_runs(runs).ok().map(|a| a.alpha_hat / 2.0);
    let deviation = match slope {
        None => Err(Error::InsufficientData("no increments for the edge speed".into())),
        Some(a) => lower_deviation_fit(runs, a),
    };
    checks.push(tail_check("rbar_t < a t", deviation, min_r2, min_points));

    // Death times as a fraction of the whole batch, so the fitted line
    // estimates P(t < rho < inf) directly.
    let death_times: Vec<f64> = dead.iter().filter_map(|o| o.died_at).collect();
    let death_time = {
        let thresholds = auto_thresholds(&death_times, TAIL_POINTS, TAIL_MIN_EXCEEDANCES);
        let n = origin.len();
        let fractions: Vec<f64> = thresholds
            .iter()
            .map(|&t| death_times.iter().filter(|&&d| d > t).count() as f64 / n as f64)
            .collect();
        fit_log_linear("death time", &thresholds, &fractions, n, 0).ok()
    };
    let proxy_misclassification = death_time
        .as_ref()
        .filter(|f| f.gamma_hat > 0.0)
        .map(|f| (f.intercept - f.gamma_hat * survival_horizon).exp());
    Ok(TailsReport {
        min_r2,
        min_points,
        deviation_slope: slope,
        status: Status::all(checks.iter().map(|c| c.status)),
        checks,
        death_time,
        proxy_misclassification,
    })
}

pub fn iid_from_runs(runs: &[BreakpointRun], level: f64) -> IidReport {
    iid_report(&increments_by_replica(runs), level)
}
