//! Break points of the rightmost edge, located with the restart algorithm on
//! the half-line process.
//!
//! With `S` the survival horizon, call level `k >= 1` *persistent* when the
//! process restarted from `eta_k` at `T_k` (the first time the half-line edge
//! reaches `k`) is still alive at `T_k + S`. The restart loop finds the next
//! persistent level after the current break point without testing every
//! level: a restart that dies at `rho` rules out every level its edge (equal
//! to the half-line edge while it lives) reached before `rho`. The declared
//! break points are therefore exactly the persistent levels in increasing
//! order, which is what the brute-force oracle in the tests checks.

use serde::{Deserialize, Serialize};

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::events::Construction;
use crate::process::{evolve, RunOptions, Trajectory, WindowPolicy};

/// First passage times `(k, tau_k)` of the right edge, for `k` from
/// `max(r_0, 0)` to `k_max`. Unreached levels are omitted. The edge moves up
/// one site at a time, so the reported times are increasing in `k`.
pub fn hitting_times(trajectory: &Trajectory, k_max: i64) -> Vec<(i64, f64)> {
    let mut out = Vec::new();
    let Some(r0) = trajectory.edges.first().and_then(|e| e.r) else {
        return out;
    };
    let mut next = r0.max(0);
    for e in &trajectory.edges {
        match e.r {
            Some(r) if r >= next && next <= k_max => {
                debug_assert_eq!(r, next, "edge skipped a level");
                out.push((r, e.time));
                next = r + 1;
            }
            _ => {}
        }
    }
    out
}

/// Min and max of `r` over `[a, b)` from the edge record. `None` when the edge
/// is undefined somewhere in the interval.
fn edge_range(trajectory: &Trajectory, a: f64, b: f64) -> Option<(i64, i64)> {
    let first = trajectory.edge_at(a)?.r?;
    let (mut lo, mut hi) = (first, first);
    let start = trajectory.edges.partition_point(|e| e.time <= a);
    for e in trajectory.edges[start..].iter().take_while(|e| e.time < b) {
        let r = e.r?;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Some((lo, hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakpointOptions {
    /// Length of the half-line run. Candidate levels must be reached by
    /// then; restarts run on past it to their own survival horizon.
    pub horizon: f64,
    pub survival_horizon: f64,
    /// Stop after this many break points beyond the origin.
    pub max_points: usize,
    /// When `max_points` is finite and the horizon cuts the run short, the
    /// run is repeated with the horizon doubled, up to this cap. Cycle
    /// lengths are heavy tailed; keeping only the cycles that finish before a
    /// fixed horizon favours short cycles and biases the speed upward.
    pub horizon_cap: f64,
    /// Window policy of the half-line run.
    pub window: WindowPolicy,
    /// Times at which the half-line edge is reported.
    pub edge_grid: Vec<f64>,
}

impl BreakpointOptions {
    pub fn new(horizon: f64, survival_horizon: f64) -> Self {
        BreakpointOptions {
            horizon,
            survival_horizon,
            max_points: usize::MAX,
            horizon_cap: horizon,
            window: WindowPolicy::default(),
            edge_grid: Vec::new(),
        }
    }

    pub fn max_points(mut self, n: usize) -> Self {
        self.max_points = n;
        self
    }

    pub fn horizon_cap(mut self, cap: f64) -> Self {
        self.horizon_cap = cap;
        self
    }

    pub fn edge_grid(mut self, times: impl IntoIterator<Item = f64>) -> Self {
        self.edge_grid = times.into_iter().collect();
        self
    }

    fn validate(&self) -> Result<()> {
        if let Some(t) = self.edge_grid.iter().find(|&&t| !(0.0..=self.horizon).contains(&t)) {
            return Err(Error::input(format!("edge grid time {t} outside [0, {}]", self.horizon)));
        }
        if !(self.horizon_cap >= self.horizon && self.horizon_cap.is_finite()) {
            return Err(Error::input(format!(
                "horizon cap {} below horizon {}",
                self.horizon_cap, self.horizon
            )));
        }
        if !(self.survival_horizon > 0.0 && self.survival_horizon.is_finite()) {
            return Err(Error::input("survival horizon must be positive and finite"));
        }
        if !(self.horizon.is_finite() && self.survival_horizon <= self.horizon) {
            return Err(Error::input(format!(
                "survival horizon {} exceeds horizon {}",
                self.survival_horizon, self.horizon
            )));
        }
        Ok(())
    }
}

/// One restarted process `zeta^{[eta_Y, T_Y]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    /// Index of the break point being searched for.
    pub search: usize,
    /// Restart index within that search, from 1.
    pub n: usize,
    pub y: i64,
    pub t_y: f64,
    /// Death time; `None` when alive at the end of its run.
    pub rho: Option<f64>,
    /// Alive at `t_y + survival_horizon`: declared a break point.
    pub persistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakPointRecord {
    pub n: usize,
    pub k: i64,
    pub tau: f64,
    /// Survival was decided by the proxy. Always true: survival is never
    /// observed, only the proxy.
    pub censored: bool,
}

/// `(X_n, Psi_n, M_{n-1})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Increment {
    pub n: usize,
    pub x: i64,
    pub psi: f64,
    pub m: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DropCounts {
    /// First increment dropped because the origin process failed the proxy;
    /// its law is only the break-point law on survival.
    pub unconditioned_first: u32,
    /// Increment in progress when the half-line edge had not reached the
    /// next candidate level by the horizon.
    pub horizon_cut: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakpointRun {
    pub replica_id: u64,
    /// Horizon of the final attempt.
    pub horizon: f64,
    pub origin_survived: bool,
    pub restarts: Vec<RestartRecord>,
    pub breakpoints: Vec<BreakPointRecord>,
    pub increments: Vec<Increment>,
    pub dropped: DropCounts,
    /// Candidate level that was pending when the run stopped.
    pub undecided: Option<i64>,
    /// Half-line edge at the times of [`BreakpointOptions::edge_grid`].
    pub edge_samples: Vec<(f64, Option<i64>)>,
}

/// Locate break points on replica `replica_id`.
///
/// Every restart is checked against the half-line edge while it lives; a
/// mismatch is an [`Error::Engine`].
pub fn detect_breakpoints(
    construction: &Construction,
    replica_id: u64,
    opts: &BreakpointOptions,
) -> Result<BreakpointRun> {
    construction.require_ordered()?;
    opts.validate()?;
    let mut attempt = opts.clone();
    loop {
        let run = detect_once(construction, replica_id, &attempt)?;
        let short = run.undecided.is_some() && opts.max_points != usize::MAX;
        if !short || attempt.horizon >= opts.horizon_cap {
            return Ok(run);
        }
        attempt.horizon = (2.0 * attempt.horizon).min(opts.horizon_cap);
    }
}

fn detect_once(construction: &Construction, replica_id: u64, opts: &BreakpointOptions) -> Result<BreakpointRun> {
    let s = opts.survival_horizon;

    let origin = evolve(
        construction,
        replica_id,
        &Configuration::standard(),
        &RunOptions::until(s).without_edges(),
    )?;
    let origin_survived = origin.died_at.is_none();

    let bar = evolve(
        construction,
        replica_id,
        &Configuration::half_line(),
        &RunOptions::until(opts.horizon).window(opts.window.clone()),
    )?;
    let max_level = bar.max_r().unwrap_or(0);
    let hits: Vec<f64> = hitting_times(&bar, max_level).into_iter().map(|(_, t)| t).collect();

    let mut run = BreakpointRun {
        replica_id,
        horizon: opts.horizon,
        origin_survived,
        restarts: Vec::new(),
        breakpoints: vec![BreakPointRecord { n: 0, k: 0, tau: 0.0, censored: true }],
        increments: Vec::new(),
        dropped: DropCounts::default(),
        undecided: None,
        edge_samples: opts.edge_grid.iter().map(|&t| (t, bar.r_at(t))).collect(),
    };
    let (mut k_prev, mut tau_prev) = (0i64, 0.0f64);
    let mut y = 1i64;
    let mut restart_n = 1usize;

    while run.breakpoints.len() <= opts.max_points {
        let Some(&t_y) = hits.get(y as usize) else {
            run.undecided = Some(y);
            run.dropped.horizon_cut += 1;
            break;
        };
        let restart = evolve(
            construction,
            replica_id,
            &Configuration::single(y),
            &RunOptions::until(t_y + s).starting_at(t_y),
        )?;
        let end = restart.died_at.unwrap_or(t_y + s);
        if end <= opts.horizon {
            check_edges_agree(&restart, &bar, t_y, end, restart.died_at.is_none())?;
        } else {
            check_edges_agree(&restart, &bar, t_y, opts.horizon, true)?;
        }
        let search = run.breakpoints.len();
        run.restarts.push(RestartRecord {
            search,
            n: restart_n,
            y,
            t_y,
            rho: restart.died_at,
            persistent: restart.died_at.is_none(),
        });

        match restart.died_at {
            Some(rho) => {
                // the restart edge is the half-line edge while it lives
                let (_, sup) = edge_range(&restart, t_y, rho)
                    .ok_or_else(|| Error::Engine(format!("restart edge undefined on [{t_y}, {rho})")))?;
                y = sup + 1;
                restart_n += 1;
            }
            None => {
                let (inf, _) = edge_range(&bar, tau_prev, t_y)
                    .ok_or_else(|| Error::Engine(format!("half-line edge undefined on [{tau_prev}, {t_y})")))?;
                let inc = Increment { n: search, x: y - k_prev, psi: t_y - tau_prev, m: k_prev - inf };
                if search == 1 && !origin_survived {
                    run.dropped.unconditioned_first += 1;
                } else {
                    run.increments.push(inc);
                }
                run.breakpoints.push(BreakPointRecord { n: search, k: y, tau: t_y, censored: true });
                k_prev = y;
                tau_prev = t_y;
                y += 1;
                restart_n = 1;
            }
        }
    }
    Ok(run)
}

/// The restarted edge equals the half-line edge on `[a, b)` (on `[a, b]` when
/// `closed`).
fn check_edges_agree(restart: &Trajectory, bar: &Trajectory, a: f64, b: f64, closed: bool) -> Result<()> {
    let within = |t: f64| t >= a && (t < b || (closed && t <= b));
    let times = restart
        .edges
        .iter()
        .map(|e| e.time)
        .chain(bar.edges.iter().map(|e| e.time))
        .chain(std::iter::once(a))
        .filter(|&t| within(t));
    for t in times {
        let (x, y) = (restart.r_at(t), bar.r_at(t));
        if x != y {
            return Err(Error::Engine(format!(
                "replica {}: restart from {:?} at {a} has edge {x:?} but the half-line edge is {y:?} at t = {t}",
                restart.params.replica_id,
                restart.params.initial.rightmost(),
            )));
        }
    }
    Ok(())
}
