//! Pathwise checks of the coupling identities on a shared construction.
//!
//! Each check runs the coupled processes replica by replica and compares them
//! at every time of a sample grid; the edge identity is also compared at every
//! edge change. These hold for every realization when `mu >= lambda`, so a
//! single violation is an engine bug, not bad luck.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::breakpoints::hitting_times;
use crate::config::{Configuration, SiteState};
use crate::error::{Error, Result};
use crate::events::{mix_seed, Construction};
use crate::parallel::try_map_replicas;
use crate::process::{contact_evolve, evolve, ContactInit, RunOptions, Sample, Trajectory, WindowPolicy};

/// Violations kept per replica; the count is always exact.
const KEPT_PER_REPLICA: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CouplingKind {
    /// `eta <= eta'` implies `zeta^eta_t <= zeta^eta'_t`.
    Monotone,
    /// The standard process agrees with any `eta'` (origin infected, `-1` to
    /// the right) on every site `x >= l_t` while it is alive.
    RightmostIdentity,
    /// `I_t = xi^Z_t ∩ [l_t, r_t]` while `I_t` is nonempty.
    Sandwich,
    /// `zeta^O_t >= zeta^{[eta_k, tau_k]}_t` for `t >= tau_k`.
    RestartDomination,
}

impl CouplingKind {
    pub const ALL: [CouplingKind; 4] = [
        CouplingKind::Monotone,
        CouplingKind::RightmostIdentity,
        CouplingKind::Sandwich,
        CouplingKind::RestartDomination,
    ];
}

impl fmt::Display for CouplingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CouplingKind::Monotone => "monotone",
            CouplingKind::RightmostIdentity => "rightmost-identity",
            CouplingKind::Sandwich => "sandwich",
            CouplingKind::RestartDomination => "restart-domination",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub replica: u64,
    pub time: f64,
    pub site: Option<i64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: CouplingKind,
    pub replicas_checked: u64,
    pub sample_times_checked: u64,
    pub violation_count: u64,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

/// Kind-specific inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingExtra {
    /// Fixed pair for [`CouplingKind::Monotone`]; random ordered pairs per
    /// replica when absent.
    pub pair: Option<(Configuration, Configuration)>,
    /// Half-width of the random configurations.
    pub random_width: usize,
    /// Largest restart level per replica for [`CouplingKind::RestartDomination`].
    pub k_cap: i64,
}

impl Default for CouplingExtra {
    fn default() -> Self {
        CouplingExtra { pair: None, random_width: 8, k_cap: 50 }
    }
}

/// `points` evenly spaced times covering `[0, t_max]`.
pub fn uniform_grid(t_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![t_max],
        _ => (0..points).map(|i| t_max * i as f64 / (points - 1) as f64).collect(),
    }
}

#[derive(Default)]
struct ReplicaCheck {
    times: u64,
    count: u64,
    kept: Vec<Violation>,
}

impl ReplicaCheck {
    fn flag(&mut self, replica: u64, time: f64, site: Option<i64>, detail: impl FnOnce() -> String) {
        self.count += 1;
        if self.kept.len() < KEPT_PER_REPLICA {
            self.kept.push(Violation { replica, time, site, detail: detail() });
        }
    }
}

/// Check `kind` on replicas `0..replicas` up to `t_max`.
pub fn verify_coupling(
    kind: CouplingKind,
    construction: &Construction,
    replicas: u64,
    t_max: f64,
    sample_grid: &[f64],
    extra: &CouplingExtra,
) -> Result<Verdict> {
    construction.require_ordered()?;
    let mut grid: Vec<f64> = sample_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.iter().any(|&t| !(0.0..=t_max).contains(&t)) {
        return Err(Error::input(format!("sample grid must lie in [0, {t_max}]")));
    }
    if let Some((a, b)) = &extra.pair {
        if !a.le(b) {
            return Err(Error::input(format!("monotone pair is not ordered: {a} vs {b}")));
        }
    }
    let checks = try_map_replicas(0..replicas, |replica| {
        let mut chk = ReplicaCheck::default();
        match kind {
            CouplingKind::Monotone => monotone(construction, replica, t_max, &grid, extra, &mut chk)?,
            CouplingKind::RightmostIdentity => rightmost(construction, replica, t_max, &grid, extra, &mut chk)?,
            CouplingKind::Sandwich => sandwich(construction, replica, t_max, &grid, &mut chk)?,
            CouplingKind::RestartDomination => restart(construction, replica, t_max, &grid, extra, &mut chk)?,
        }
        Ok(chk)
    })?;
    let mut verdict = Verdict {
        kind,
        replicas_checked: replicas,
        sample_times_checked: 0,
        violation_count: 0,
        violations: Vec::new(),
        passed: true,
    };
    for chk in checks {
        verdict.sample_times_checked += chk.times;
        verdict.violation_count += chk.count;
        verdict.violations.extend(chk.kept);
    }
    verdict.passed = verdict.violation_count == 0;
    Ok(verdict)
}

fn replica_rng(construction: &Construction, replica: u64, tag: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(mix_seed(construction.master_seed, &[replica, tag, 0xC0_u64]))
}

fn random_state<R: Rng>(rng: &mut R) -> SiteState {
    [SiteState::Naive, SiteState::Recovered, SiteState::Infected][rng.random_range(0..3)]
}

fn raise<R: Rng>(rng: &mut R, s: SiteState) -> SiteState {
    match s {
        SiteState::Naive if rng.random_bool(0.4) => {
            if rng.random_bool(0.5) { SiteState::Recovered } else { SiteState::Infected }
        }
        SiteState::Recovered if rng.random_bool(0.4) => SiteState::Infected,
        s => s,
    }
}

/// Random finite pair `eta <= eta'` with non-infected defaults.
pub fn random_ordered_pair(construction: &Construction, replica: u64, width: usize) -> (Configuration, Configuration) {
    let mut rng = replica_rng(construction, replica, 1);
    let defaults = [SiteState::Naive, SiteState::Recovered];
    let (ld, rd) = (defaults[rng.random_range(0..2)], defaults[rng.random_range(0..2)]);
    let cells: Vec<SiteState> = (0..=2 * width).map(|_| random_state(&mut rng)).collect();
    let ld2 = if ld == SiteState::Naive && rng.random_bool(0.3) { SiteState::Recovered } else { ld };
    let rd2 = if rd == SiteState::Naive && rng.random_bool(0.3) { SiteState::Recovered } else { rd };
    let raised: Vec<SiteState> = cells.iter().map(|&s| raise(&mut rng, s)).collect();
    let lo = -(width as i64);
    (Configuration::new(ld, rd, lo, cells), Configuration::new(ld2, rd2, lo, raised))
}

/// Sites where both samples are exact: their certified ranges intersected
/// with the span where either configuration deviates from its defaults,
/// padded by one site.
fn comparable_range(a: &Sample, b: &Sample) -> (i64, i64) {
    let (ca, cb) = (&a.state.config, &b.state.config);
    let mut lo = ca.origin().min(cb.origin()) - 1;
    let mut hi = ca.end().max(cb.end()) + 1;
    for s in [a, b] {
        if let Some(x) = s.certified.0 {
            lo = lo.max(x);
        }
        if let Some(x) = s.certified.1 {
            hi = hi.min(x);
        }
    }
    (lo, hi)
}

fn monotone(
    c: &Construction,
    replica: u64,
    t_max: f64,
    grid: &[f64],
    extra: &CouplingExtra,
    chk: &mut ReplicaCheck,
) -> Result<()> {
    let (eta, eta2) = match &extra.pair {
        Some(p) => p.clone(),
        None => random_ordered_pair(c, replica, extra.random_width),
    };
    let opts = RunOptions::until(t_max).sampled_at(grid.iter().copied()).without_edges();
    let a = evolve(c, replica, &eta, &opts)?;
    let b = evolve(c, replica, &eta2, &opts)?;
    for (sa, sb) in a.samples.iter().zip(&b.samples) {
        chk.times += 1;
        let (lo, hi) = comparable_range(sa, sb);
        for x in lo..=hi {
            let (u, v) = (sa.state.config.get(x), sb.state.config.get(x));
            if u > v {
                chk.flag(replica, sa.state.time, Some(x), || format!("{u:?} above {v:?}"));
            }
        }
    }
    Ok(())
}

/// The alternative start for the edge identity: the half-line on even
/// replicas, a random left part on odd ones.
fn rightmost_partner(c: &Construction, replica: u64, width: usize) -> Configuration {
    if replica % 2 == 0 {
        return Configuration::half_line();
    }
    let mut rng = replica_rng(c, replica, 2);
    let left = random_state(&mut rng);
    let cells = (0..width).map(|_| random_state(&mut rng)).collect();
    Configuration::with_left_part(left, cells)
}

/// Min `l` and max `r` over the samples where the process is alive.
fn sampled_span(traj: &Trajectory) -> Option<(i64, i64)> {
    let l = traj.samples.iter().filter_map(|s| s.state.l).min()?;
    let r = traj.samples.iter().filter_map(|s| s.state.r).max()?;
    Some((l, r))
}

fn rightmost(
    c: &Construction,
    replica: u64,
    t_max: f64,
    grid: &[f64],
    extra: &CouplingExtra,
    chk: &mut ReplicaCheck,
) -> Result<()> {
    let opts = RunOptions::until(t_max).sampled_at(grid.iter().copied());
    let zo = evolve(c, replica, &Configuration::standard(), &opts)?;
    let partner = rightmost_partner(c, replica, extra.random_width);
    let mut popts = opts.clone();
    if let Some((l, r)) = sampled_span(&zo) {
        popts = popts.window(WindowPolicy::default().with_probe(l, r));
    }
    let zp = evolve(c, replica, &partner, &popts)?;

    for (sa, sb) in zo.samples.iter().zip(&zp.samples) {
        let Some(l) = sa.state.l else { continue };
        chk.times += 1;
        let (_, hi) = comparable_range(sa, sb);
        for x in l..=hi {
            let (u, v) = (sa.state.config.get(x), sb.state.config.get(x));
            if u != v {
                chk.flag(replica, sa.state.time, Some(x), || format!("site right of l_t: {u:?} vs {v:?}"));
            }
        }
    }
    let alive_until = zo.died_at.unwrap_or(f64::INFINITY);
    let times: BTreeSet<u64> = zo
        .edges
        .iter()
        .chain(&zp.edges)
        .map(|e| e.time)
        .filter(|&t| t < alive_until)
        .map(f64::to_bits)
        .collect();
    for t in times.into_iter().map(f64::from_bits) {
        let (u, v) = (zo.r_at(t), zp.r_at(t));
        if u != v {
            chk.flag(replica, t, u, || format!("edge {u:?} vs {v:?}"));
        }
    }
    Ok(())
}

fn sandwich(c: &Construction, replica: u64, t_max: f64, grid: &[f64], chk: &mut ReplicaCheck) -> Result<()> {
    let opts = RunOptions::until(t_max).sampled_at(grid.iter().copied()).without_edges();
    let zo = evolve(c, replica, &Configuration::standard(), &opts)?;
    let Some((l, r)) = sampled_span(&zo) else { return Ok(()) };
    let xi = contact_evolve(
        c,
        replica,
        &ContactInit::All,
        &opts.clone().window(WindowPolicy::default().with_probe(l, r)),
    )?;
    for (sa, sb) in zo.samples.iter().zip(&xi.samples) {
        let (Some(l), Some(r)) = (sa.state.l, sa.state.r) else { continue };
        chk.times += 1;
        let inside = sb.state.config.infected_in(l, r);
        let infected = sa.state.infected();
        if inside != infected {
            let site = inside
                .iter()
                .chain(&infected)
                .copied()
                .find(|x| inside.contains(x) != infected.contains(x));
            chk.flag(replica, sa.state.time, site, || {
                format!("{} infected vs {} in the all-infected process", infected.len(), inside.len())
            });
        }
    }
    Ok(())
}

fn restart(
    c: &Construction,
    replica: u64,
    t_max: f64,
    grid: &[f64],
    extra: &CouplingExtra,
    chk: &mut ReplicaCheck,
) -> Result<()> {
    let zo = evolve(c, replica, &Configuration::standard(), &RunOptions::until(t_max).sampled_at(grid.iter().copied()))?;
    for (k, tau) in hitting_times(&zo, extra.k_cap) {
        if k < 1 {
            continue;
        }
        let times: Vec<f64> = grid.iter().copied().filter(|&t| t >= tau).collect();
        let opts = RunOptions::until(t_max).starting_at(tau).sampled_at(times).without_edges();
        let zk = evolve(c, replica, &Configuration::single(k), &opts)?;
        for sk in &zk.samples {
            let so = zo
                .sample_at(sk.state.time)
                .ok_or_else(|| Error::Engine(format!("missing sample at {}", sk.state.time)))?;
            chk.times += 1;
            for x in sk.state.config.order_violations(&so.state.config) {
                chk.flag(replica, sk.state.time, Some(x), || {
                    format!("restart from {k} at {tau}: {:?} above {:?}", sk.state.config.get(x), so.state.config.get(x))
                });
            }
        }
    }
    Ok(())
}

/// Outcome of [`verify_reduction`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionVerdict {
    pub replicas_checked: u64,
    pub sample_times_checked: u64,
    pub mismatch_count: u64,
    pub mismatches: Vec<Violation>,
    pub passed: bool,
}

/// At `lambda == mu` the extra arrows vanish and the three-state process from
/// the origin is the contact process from the origin: compare infected sets
/// at every grid time.
pub fn verify_reduction(construction: &Construction, replicas: u64, t_max: f64, sample_grid: &[f64]) -> Result<ReductionVerdict> {
    if construction.lambda != construction.mu {
        return Err(Error::param(format!(
            "reduction needs lambda = mu, got lambda = {}, mu = {}",
            construction.lambda, construction.mu
        )));
    }
    if sample_grid.iter().any(|&t| !(0.0..=t_max).contains(&t)) {
        return Err(Error::input(format!("sample grid must lie in [0, {t_max}]")));
    }
    let opts = RunOptions::until(t_max).sampled_at(sample_grid.iter().copied()).without_edges();
    let checks = try_map_replicas(0..replicas, |replica| {
        let a = evolve(construction, replica, &Configuration::standard(), &opts)?;
        let b = contact_evolve(construction, replica, &ContactInit::Sites(BTreeSet::from([0])), &opts)?;
        let mut chk = ReplicaCheck::default();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            chk.times += 1;
            let (sx, sy) = (x.state.infected(), y.state.infected());
            if sx != sy {
                let (a, b): (BTreeSet<i64>, BTreeSet<i64>) = (sx.iter().copied().collect(), sy.iter().copied().collect());
                let site = a.symmetric_difference(&b).next().copied();
                chk.flag(replica, x.state.time, site, || {
                    format!("{} infected vs {} in the contact process", sx.len(), sy.len())
                });
            }
        }
        Ok(chk)
    })?;
    let mut verdict = ReductionVerdict {
        replicas_checked: replicas,
        sample_times_checked: 0,
        mismatch_count: 0,
        mismatches: Vec::new(),
        passed: true,
    };
    for chk in checks {
        verdict.sample_times_checked += chk.times;
        verdict.mismatch_count += chk.count;
        verdict.mismatches.extend(chk.kept);
    }
    verdict.passed = verdict.mismatch_count == 0;
    Ok(verdict)
}
