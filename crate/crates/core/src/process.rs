//! Evolution of three-state and plain contact processes on a [`Construction`].
//!
//! Only events whose source is infected can change a configuration, so the
//! engine keeps one pending event per infected site in a priority queue and
//! pulls the next event of a site lazily from its streams. The result is the
//! same as applying [`window_events`](crate::events::window_events) in order
//! with [`apply_event`], without touching the streams of idle sites.
//!
//! Configurations with infinitely many infected sites (a left half-line, or
//! all of Z) are simulated on a finite window. Sites outside the window are
//! frozen. The influence cone of each truncated boundary is walked along the
//! realized arrows; every reported quantity must lie outside the cones, and a
//! breach either widens the window and re-runs (same streams, same answer
//! inside) or surfaces as [`Error::WindowBreach`].

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::config::{Configuration, SiteState};
use crate::error::{Error, Result};
use crate::events::{Construction, Event, EventKey, EventKind, SiteStreams};

/// Which infection rule the arrows follow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dynamics {
    /// lambda-arrows infect `-1` and `0` targets, (mu - lambda)-arrows only `0`.
    ThreeState,
    /// Both arrow types infect any non-infected target (contact process at rate mu).
    Contact,
}

/// Window sizing for configurations with infinitely many infected sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    /// Sites simulated beyond the initial deviations and the probe on each
    /// truncated side. `None` uses [`WindowPolicy::default_margin`].
    pub margin: Option<u64>,
    /// Double the margin and re-run on a breach instead of failing.
    pub expandable: bool,
    pub max_expansions: u32,
    /// Sites that must be certified exact at every sample time.
    pub probe: Option<(i64, i64)>,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            margin: None,
            expandable: true,
            max_expansions: 6,
            probe: None,
        }
    }
}

impl WindowPolicy {
    pub fn fixed(margin: u64) -> Self {
        WindowPolicy {
            margin: Some(margin),
            expandable: false,
            ..WindowPolicy::default()
        }
    }

    pub fn with_probe(mut self, lo: i64, hi: i64) -> Self {
        self.probe = Some((lo, hi));
        self
    }

    /// Boundary influence advances by one site per arrow, a Poisson process of
    /// rate `mu`; the default margin sits six standard deviations beyond its
    /// mean reach over `duration`.
    pub fn default_margin(mu: f64, duration: f64) -> u64 {
        let reach = mu * duration.max(0.0);
        (reach + 6.0 * reach.sqrt() + 10.0).ceil() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub start_time: f64,
    pub t_max: f64,
    pub sample_times: Vec<f64>,
    pub window: WindowPolicy,
    /// Record every change of `r` or `l` in [`Trajectory::edges`].
    pub record_edges: bool,
}

impl RunOptions {
    pub fn until(t_max: f64) -> Self {
        RunOptions {
            start_time: 0.0,
            t_max,
            sample_times: Vec::new(),
            window: WindowPolicy::default(),
            record_edges: true,
        }
    }

    pub fn starting_at(mut self, start_time: f64) -> Self {
        self.start_time = start_time;
        self
    }

    pub fn sampled_at(mut self, times: impl IntoIterator<Item = f64>) -> Self {
        self.sample_times = times.into_iter().collect();
        self
    }

    pub fn window(mut self, policy: WindowPolicy) -> Self {
        self.window = policy;
        self
    }

    pub fn without_edges(mut self) -> Self {
        self.record_edges = false;
        self
    }
}

/// State of a process at one instant.
///
/// For windowed runs `config` is the simulated window (sites outside keep the
/// defaults) and `infected_count` counts infected sites inside the window;
/// `r`/`l` are `None` on a side with infinitely many infected sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessState {
    pub time: f64,
    pub config: Configuration,
    pub r: Option<i64>,
    pub l: Option<i64>,
    pub infected_count: u64,
}

impl ProcessState {
    pub fn is_alive(&self) -> bool {
        self.infected_count > 0
    }

    pub fn infected(&self) -> Vec<i64> {
        match (self.l, self.r) {
            (Some(l), Some(r)) => self.config.infected_in(l, r),
            _ => self.config.infected_in(self.config.origin(), self.config.end() - 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: ProcessState,
    /// Sites strictly inside both influence cones at the sample time.
    pub certified: (Option<i64>, Option<i64>),
}

/// Edge bookkeeping, recorded at the start and whenever `r` or `l` changes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub time: f64,
    pub r: Option<i64>,
    pub l: Option<i64>,
    pub infected_count: u64,
    /// Arrow events with an infected source applied so far.
    pub arrows: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    pub lambda: f64,
    pub mu: f64,
    pub replica_id: u64,
    pub dynamics: Dynamics,
    pub initial: Configuration,
    pub start_time: f64,
    pub t_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: TrajectoryParams,
    pub samples: Vec<Sample>,
    pub edges: Vec<EdgeRecord>,
    pub final_state: ProcessState,
    /// First time the (finite) infected set became empty.
    pub died_at: Option<f64>,
    pub window: (Option<i64>, Option<i64>),
    pub expansions: u32,
    pub events_applied: u64,
}

impl Trajectory {
    /// Sup of `r` over the recorded edges.
    pub fn max_r(&self) -> Option<i64> {
        self.edges.iter().filter_map(|e| e.r).max()
    }

    /// Value of `r` at time `t` (right-continuous), from the edge records.
    pub fn r_at(&self, t: f64) -> Option<i64> {
        self.edge_at(t).and_then(|e| e.r)
    }

    pub fn l_at(&self, t: f64) -> Option<i64> {
        self.edge_at(t).and_then(|e| e.l)
    }

    pub fn edge_at(&self, t: f64) -> Option<&EdgeRecord> {
        let idx = self.edges.partition_point(|e| e.time <= t);
        idx.checked_sub(1).map(|i| &self.edges[i])
    }

    pub fn alive_at(&self, t: f64) -> bool {
        self.died_at.is_none_or(|d| d > t)
    }

    pub fn sample_at(&self, t: f64) -> Option<&Sample> {
        self.samples.iter().find(|s| s.state.time == t)
    }
}

/// Apply one event to a configuration under the three-state rules.
pub fn apply_event(config: &Configuration, event: &Event) -> Configuration {
    apply_event_with(config, event, Dynamics::ThreeState)
}

pub fn apply_event_with(config: &Configuration, event: &Event, dynamics: Dynamics) -> Configuration {
    if !config.get(event.site).is_infected() {
        return config.clone();
    }
    if event.kind == EventKind::Recovery {
        return config.with(event.site, SiteState::Recovered);
    }
    let y = event.target();
    if infects(dynamics, event.kind, config.get(y)) {
        config.with(y, SiteState::Infected)
    } else {
        config.clone()
    }
}

#[inline]
fn infects(dynamics: Dynamics, kind: EventKind, target: SiteState) -> bool {
    match (dynamics, target) {
        (_, SiteState::Infected) => false,
        (Dynamics::Contact, _) => true,
        (Dynamics::ThreeState, SiteState::Recovered) => true,
        (Dynamics::ThreeState, SiteState::Naive) => kind.is_lambda_arrow(),
    }
}

/// Evolve the three-state process `zeta^{[initial, start]}`.
pub fn evolve(
    construction: &Construction,
    replica_id: u64,
    initial: &Configuration,
    opts: &RunOptions,
) -> Result<Trajectory> {
    construction.require_ordered()?;
    run_with_policy(construction, replica_id, Dynamics::ThreeState, initial, opts)
}

/// Initial condition of a plain contact process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ContactInit {
    Sites(BTreeSet<i64>),
    All,
}

impl ContactInit {
    pub fn configuration(&self) -> Configuration {
        match self {
            ContactInit::Sites(s) => Configuration::infected_set(s),
            ContactInit::All => Configuration::uniform(SiteState::Infected),
        }
    }
}

/// Evolve the contact process `xi^A` with infection rate `mu` on the same arrows.
pub fn contact_evolve(
    construction: &Construction,
    replica_id: u64,
    initial: &ContactInit,
    opts: &RunOptions,
) -> Result<Trajectory> {
    construction.require_ordered()?;
    run_with_policy(
        construction,
        replica_id,
        Dynamics::Contact,
        &initial.configuration(),
        opts,
    )
}

fn run_with_policy(
    construction: &Construction,
    replica_id: u64,
    dynamics: Dynamics,
    initial: &Configuration,
    opts: &RunOptions,
) -> Result<Trajectory> {
    validate(opts)?;
    let mut margin = opts
        .window
        .margin
        .unwrap_or_else(|| WindowPolicy::default_margin(construction.mu, opts.t_max - opts.start_time));
    let mut expansions = 0;
    loop {
        match Engine::new(construction, replica_id, dynamics, initial, opts, margin).run() {
            Ok(mut traj) => {
                traj.expansions = expansions;
                return Ok(traj);
            }
            Err(breach @ Error::WindowBreach { .. }) => {
                if !opts.window.expandable || expansions >= opts.window.max_expansions {
                    return Err(breach);
                }
                log::debug!("replica {replica_id}: {breach}; widening window margin {margin} -> {}", 2 * margin);
                margin = margin.max(1) * 2;
                expansions += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn validate(opts: &RunOptions) -> Result<()> {
    if !(opts.start_time >= 0.0 && opts.start_time.is_finite()) {
        return Err(Error::input(format!("start time must be finite and >= 0, got {}", opts.start_time)));
    }
    if !(opts.t_max >= opts.start_time && opts.t_max.is_finite()) {
        return Err(Error::input(format!(
            "t_max ({}) must be finite and >= start time ({})",
            opts.t_max, opts.start_time
        )));
    }
    if let Some(bad) = opts
        .sample_times
        .iter()
        .find(|&&s| !(s >= opts.start_time && s <= opts.t_max))
    {
        return Err(Error::input(format!(
            "sample time {bad} outside [{}, {}]",
            opts.start_time, opts.t_max
        )));
    }
    if let Some((a, b)) = opts.window.probe {
        if a > b {
            return Err(Error::input(format!("empty probe [{a}, {b}]")));
        }
    }
    Ok(())
}

/// Walk of the rightmost (or leftmost) site reachable from a boundary column.
struct Cone {
    jumps: Vec<(f64, i64)>,
    next: usize,
    pos: i64,
}

impl Cone {
    fn walk(construction: &Construction, replica_id: u64, from: i64, rightward: bool, start: f64, t_max: f64) -> Cone {
        let kinds: &[EventKind] = if rightward {
            &[EventKind::LambdaArrowRight, EventKind::MuLambdaArrowRight]
        } else {
            &[EventKind::LambdaArrowLeft, EventKind::MuLambdaArrowLeft]
        };
        let mut jumps = Vec::new();
        let mut site = from;
        let mut after = EventKey::end_of(start);
        loop {
            let mut streams = SiteStreams::new(construction, replica_id, site);
            streams.seek_after(construction, &after);
            let Some(ev) = streams.peek_kinds(construction, kinds) else {
                break;
            };
            if ev.time > t_max {
                break;
            }
            site = ev.target();
            jumps.push((ev.time, site));
            after = ev.key();
        }
        Cone {
            jumps,
            next: 0,
            pos: from,
        }
    }

    /// Consume jumps up to time `t`; returns positions passed through.
    fn advance_to(&mut self, t: f64) -> Option<(f64, i64)> {
        let mut last = None;
        while self.next < self.jumps.len() && self.jumps[self.next].0 <= t {
            self.pos = self.jumps[self.next].1;
            last = Some(self.jumps[self.next]);
            self.next += 1;
        }
        last
    }
}

struct Engine<'a> {
    c: &'a Construction,
    replica: u64,
    dynamics: Dynamics,
    initial: &'a Configuration,
    opts: &'a RunOptions,
    lo: Option<i64>,
    hi: Option<i64>,
    left_default: SiteState,
    right_default: SiteState,
    base: i64,
    states: Vec<SiteState>,
    streams: Vec<Option<Box<SiteStreams>>>,
    heap: BinaryHeap<Reverse<Event>>,
    count: u64,
    r: Option<i64>,
    l: Option<i64>,
    arrows: u64,
    applied: u64,
    edges: Vec<EdgeRecord>,
    left_cone: Option<Cone>,
    right_cone: Option<Cone>,
    finite: bool,
}

impl<'a> Engine<'a> {
    fn new(
        c: &'a Construction,
        replica: u64,
        dynamics: Dynamics,
        initial: &'a Configuration,
        opts: &'a RunOptions,
        margin: u64,
    ) -> Self {
        let margin = margin as i64;
        let (probe_lo, probe_hi) = opts.window.probe.unwrap_or((initial.origin(), initial.end()));
        let lo = initial
            .left_default()
            .is_infected()
            .then(|| initial.origin().min(probe_lo) - margin);
        let hi = initial
            .right_default()
            .is_infected()
            .then(|| (initial.end() - 1).max(probe_hi) + margin);
        let base = lo.unwrap_or(initial.origin() - 1);
        let top = hi.unwrap_or(initial.end());
        let states: Vec<SiteState> = (base..=top).map(|x| initial.get(x)).collect();
        let n = states.len();
        let left_cone = lo.map(|lo| Cone::walk(c, replica, lo - 1, true, opts.start_time, opts.t_max));
        let right_cone = hi.map(|hi| Cone::walk(c, replica, hi + 1, false, opts.start_time, opts.t_max));
        Engine {
            c,
            replica,
            dynamics,
            initial,
            opts,
            lo,
            hi,
            left_default: initial.left_default(),
            right_default: initial.right_default(),
            base,
            states,
            streams: (0..n).map(|_| None).collect(),
            heap: BinaryHeap::new(),
            count: 0,
            r: None,
            l: None,
            arrows: 0,
            applied: 0,
            edges: Vec::new(),
            left_cone,
            right_cone,
            finite: initial.has_finite_infection(),
        }
    }

    #[inline]
    fn in_window(&self, x: i64) -> bool {
        self.lo.is_none_or(|lo| x >= lo) && self.hi.is_none_or(|hi| x <= hi)
    }

    #[inline]
    fn get(&self, x: i64) -> SiteState {
        let i = x - self.base;
        if i < 0 {
            self.left_default
        } else if i as usize >= self.states.len() {
            self.right_default
        } else {
            self.states[i as usize]
        }
    }

    fn ensure(&mut self, x: i64) -> usize {
        if x < self.base {
            let grow = (self.base - x).max(self.states.len() as i64).max(16);
            let new_base = self.base - grow;
            let mut states: Vec<SiteState> = (new_base..self.base).map(|y| self.initial.get(y)).collect();
            states.append(&mut self.states);
            self.states = states;
            let mut streams: Vec<Option<Box<SiteStreams>>> = (0..grow).map(|_| None).collect();
            streams.append(&mut self.streams);
            self.streams = streams;
            self.base = new_base;
        } else if x >= self.base + self.states.len() as i64 {
            let grow = (x - self.base - self.states.len() as i64 + 1)
                .max(self.states.len() as i64)
                .max(16);
            let start = self.base + self.states.len() as i64;
            self.states.extend((start..start + grow).map(|y| self.initial.get(y)));
            self.streams.extend((0..grow).map(|_| None));
        }
        (x - self.base) as usize
    }

    fn activate(&mut self, x: i64, after: &EventKey) {
        let i = self.ensure(x);
        let (c, replica) = (self.c, self.replica);
        let streams = self.streams[i].get_or_insert_with(|| Box::new(SiteStreams::new(c, replica, x)));
        streams.seek_after(c, after);
        if let Some(ev) = streams.peek(c) {
            self.heap.push(Reverse(ev));
        }
    }

    fn record_edge(&mut self, time: f64) {
        if self.opts.record_edges {
            self.edges.push(EdgeRecord {
                time,
                r: self.r,
                l: self.l,
                infected_count: self.count,
                arrows: self.arrows,
            });
        }
    }

    fn init(&mut self) {
        let start = EventKey::end_of(self.opts.start_time);
        let infected: Vec<i64> = (self.base..self.base + self.states.len() as i64)
            .filter(|&x| self.in_window(x) && self.get(x).is_infected())
            .collect();
        self.count = infected.len() as u64;
        for &x in &infected {
            self.activate(x, &start);
        }
        if !self.right_default.is_infected() {
            self.r = infected.last().copied();
        }
        if !self.left_default.is_infected() {
            self.l = infected.first().copied();
        }
        self.record_edge(self.opts.start_time);
    }

    /// Cone position that has caught a tracked edge, if any.
    fn edge_breach(&self) -> Option<i64> {
        if !self.right_default.is_infected() {
            if let Some(cone) = &self.left_cone {
                if self.r.is_none_or(|r| r <= cone.pos) {
                    return Some(cone.pos);
                }
            }
        }
        if !self.left_default.is_infected() {
            if let Some(cone) = &self.right_cone {
                if self.l.is_none_or(|l| l >= cone.pos) {
                    return Some(cone.pos);
                }
            }
        }
        None
    }

    fn breach(&self, time: f64, site: i64) -> Error {
        Error::WindowBreach {
            time,
            site,
            lo: self.lo,
            hi: self.hi,
        }
    }

    /// Move the cones forward to `t`, checking the tracked edges at every jump.
    fn advance_cones(&mut self, t: f64) -> Result<()> {
        let mut moved = None;
        if let Some(cone) = self.left_cone.as_mut() {
            if let Some(j) = cone.advance_to(t) {
                moved = Some(j);
            }
        }
        if let Some(cone) = self.right_cone.as_mut() {
            if let Some(j) = cone.advance_to(t) {
                moved = Some(j);
            }
        }
        if let Some((time, _)) = moved {
            if let Some(site) = self.edge_breach() {
                return Err(self.breach(time, site));
            }
        }
        Ok(())
    }

    fn certified(&self) -> (Option<i64>, Option<i64>) {
        (
            self.left_cone.as_ref().map(|c| c.pos + 1),
            self.right_cone.as_ref().map(|c| c.pos - 1),
        )
    }

    fn snapshot(&self, time: f64) -> ProcessState {
        ProcessState {
            time,
            config: Configuration::new(self.left_default, self.right_default, self.base, self.states.clone()),
            r: self.r,
            l: self.l,
            infected_count: self.count,
        }
    }

    fn take_sample(&mut self, t: f64) -> Result<Sample> {
        self.advance_cones(t)?;
        if let Some((a, b)) = self.opts.window.probe {
            if let Some(cone) = &self.left_cone {
                if cone.pos >= a {
                    return Err(self.breach(t, cone.pos));
                }
            }
            if let Some(cone) = &self.right_cone {
                if cone.pos <= b {
                    return Err(self.breach(t, cone.pos));
                }
            }
        }
        Ok(Sample {
            state: self.snapshot(t),
            certified: self.certified(),
        })
    }

    fn scan_left(&self, from: i64) -> Option<i64> {
        let stop = self.l.or(self.lo).unwrap_or(self.base);
        (stop..=from).rev().find(|&y| self.get(y).is_infected())
    }

    fn scan_right(&self, from: i64) -> Option<i64> {
        let stop = self.r.or(self.hi).unwrap_or(self.base + self.states.len() as i64);
        (from..=stop).find(|&y| self.get(y).is_infected())
    }

    fn apply(&mut self, ev: Event) {
        self.applied += 1;
        let x = ev.site;
        let i = (x - self.base) as usize;
        debug_assert!(self.states[i].is_infected());
        let c = self.c;
        let streams = self.streams[i].as_mut().expect("infected site has streams");
        streams.advance(ev.kind);
        if ev.kind == EventKind::Recovery {
            self.states[i] = SiteState::Recovered;
            self.count -= 1;
            let (old_r, old_l) = (self.r, self.l);
            if self.count == 0 && self.finite {
                self.r = None;
                self.l = None;
            } else {
                if self.r == Some(x) {
                    self.r = self.scan_left(x - 1);
                }
                if self.l == Some(x) {
                    self.l = self.scan_right(x + 1);
                }
            }
            if (old_r, old_l) != (self.r, self.l) {
                self.record_edge(ev.time);
            }
            return;
        }
        self.arrows += 1;
        if let Some(next) = streams.peek(c) {
            self.heap.push(Reverse(next));
        }
        let y = ev.target();
        if !self.in_window(y) || !infects(self.dynamics, ev.kind, self.get(y)) {
            return;
        }
        let j = self.ensure(y);
        self.states[j] = SiteState::Infected;
        self.count += 1;
        self.activate(y, &ev.key());
        let mut changed = false;
        if !self.right_default.is_infected() && self.r.is_none_or(|r| y > r) {
            self.r = Some(y);
            changed = true;
        }
        if !self.left_default.is_infected() && self.l.is_none_or(|l| y < l) {
            self.l = Some(y);
            changed = true;
        }
        if changed {
            self.record_edge(ev.time);
        }
    }

    fn run(mut self) -> Result<Trajectory> {
        self.init();
        let mut sample_times = self.opts.sample_times.clone();
        sample_times.sort_by(f64::total_cmp);
        let mut samples = Vec::with_capacity(sample_times.len());
        let mut next_sample = 0;
        let mut died_at = None;
        if self.finite && self.count == 0 {
            died_at = Some(self.opts.start_time);
        }
        if let Some(site) = self.edge_breach() {
            return Err(self.breach(self.opts.start_time, site));
        }
        while died_at.is_none() {
            let next = self.heap.peek().map(|r| r.0).filter(|e| e.time <= self.opts.t_max);
            while next_sample < sample_times.len() && next.is_none_or(|e| sample_times[next_sample] < e.time) {
                samples.push(self.take_sample(sample_times[next_sample])?);
                next_sample += 1;
            }
            let Some(ev) = next else { break };
            self.heap.pop();
            self.advance_cones(ev.time)?;
            self.apply(ev);
            if let Some(site) = self.edge_breach() {
                return Err(self.breach(ev.time, site));
            }
            if self.finite && self.count == 0 {
                died_at = Some(ev.time);
            }
        }
        while next_sample < sample_times.len() {
            samples.push(self.take_sample(sample_times[next_sample])?);
            next_sample += 1;
        }
        if died_at.is_none() {
            self.advance_cones(self.opts.t_max)?;
        }
        let final_time = died_at.unwrap_or(self.opts.t_max);
        let final_state = self.snapshot(final_time);
        Ok(Trajectory {
            params: TrajectoryParams {
                lambda: self.c.lambda,
                mu: self.c.mu,
                replica_id: self.replica,
                dynamics: self.dynamics,
                initial: self.initial.clone(),
                start_time: self.opts.start_time,
                t_max: self.opts.t_max,
            },
            samples,
            edges: self.edges,
            final_state,
            died_at,
            window: (self.lo, self.hi),
            expansions: 0,
            events_applied: self.applied,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::window_events;

    fn cons(seed: u64, lambda: f64, mu: f64) -> Construction {
        Construction::new(seed, lambda, mu).unwrap()
    }

    /// Replays every event of a wide window in order with `apply_event_with`.
    fn naive(c: &Construction, replica: u64, dynamics: Dynamics, init: &Configuration, t_max: f64, samples: &[f64]) -> Vec<Configuration> {
        let events = window_events(c, replica, (-60, 60), t_max).unwrap();
        let mut out = Vec::new();
        let mut cfg = init.clone();
        let mut k = 0;
        for &s in samples {
            while k < events.len() && events[k].time <= s {
                cfg = apply_event_with(&cfg, &events[k], dynamics);
                k += 1;
            }
            out.push(cfg.clone());
        }
        out
    }

    #[test]
    fn apply_event_follows_the_rules() {
        let ev = |kind| Event { time: 1.0, site: 0, kind, counter: 0 };
        let cfg = Configuration::standard();
        let up = apply_event(&cfg, &ev(EventKind::LambdaArrowRight));
        assert_eq!(up.get(1), SiteState::Infected);
        let same = apply_event(&cfg, &ev(EventKind::MuLambdaArrowRight));
        assert_eq!(same, cfg);
        let rec = cfg.with(1, SiteState::Recovered);
        assert_eq!(apply_event(&rec, &ev(EventKind::MuLambdaArrowRight)).get(1), SiteState::Infected);
        let recovery_at_zero = Event { time: 1.0, site: 1, kind: EventKind::Recovery, counter: 0 };
        assert_eq!(apply_event(&rec, &recovery_at_zero), rec);
        assert_eq!(apply_event(&cfg, &ev(EventKind::Recovery)).get(0), SiteState::Recovered);
        // inert source
        let src_off = Event { time: 1.0, site: 3, kind: EventKind::LambdaArrowLeft, counter: 0 };
        assert_eq!(apply_event(&cfg, &src_off), cfg);
    }

    #[test]
    fn engine_matches_naive_replay() {
        for seed in 0..6 {
            let c = cons(seed, 1.0, 2.5);
            let times = [0.5, 1.0, 2.0, 3.5, 5.0];
            let init = Configuration::from_sites(
                SiteState::Naive,
                [(0, SiteState::Infected), (2, SiteState::Recovered), (-3, SiteState::Infected), (4, SiteState::Infected)],
            );
            let opts = RunOptions::until(5.0).sampled_at(times);
            let traj = evolve(&c, seed, &init, &opts).unwrap();
            let expected = naive(&c, seed, Dynamics::ThreeState, &init, 5.0, &times);
            for (s, e) in traj.samples.iter().zip(&expected) {
                assert_eq!(&s.state.config, e, "seed {seed} t {}", s.state.time);
            }
            let cp = contact_evolve(&c, seed, &ContactInit::Sites([0, 1].into()), &opts).unwrap();
            let expected = naive(&c, seed, Dynamics::Contact, &ContactInit::Sites([0, 1].into()).configuration(), 5.0, &times);
            for (s, e) in cp.samples.iter().zip(&expected) {
                assert_eq!(&s.state.config, e);
            }
        }
    }

    #[test]
    fn start_time_excludes_earlier_events() {
        let c = cons(4, 1.0, 2.0);
        let opts = RunOptions::until(6.0).starting_at(2.0).sampled_at([6.0]);
        let traj = evolve(&c, 1, &Configuration::standard(), &opts).unwrap();
        let events: Vec<Event> = window_events(&c, 1, (-60, 60), 6.0).unwrap().into_iter().filter(|e| e.time > 2.0).collect();
        let mut cfg = Configuration::standard();
        for e in &events {
            cfg = apply_event(&cfg, e);
        }
        assert_eq!(traj.samples[0].state.config, cfg);
    }

    #[test]
    fn empty_initial_configuration_is_dead_at_start() {
        let c = cons(1, 1.0, 2.0);
        let init = Configuration::uniform(SiteState::Naive);
        let traj = evolve(&c, 0, &init, &RunOptions::until(10.0).starting_at(3.0).sampled_at([4.0, 9.0])).unwrap();
        assert_eq!(traj.died_at, Some(3.0));
        assert!(traj.samples.iter().all(|s| s.state.config == init && s.state.infected_count == 0));
        let cp = contact_evolve(&c, 0, &ContactInit::Sites(BTreeSet::new()), &RunOptions::until(10.0).sampled_at([10.0])).unwrap();
        assert_eq!(cp.samples[0].state.infected_count, 0);
    }

    #[test]
    fn equal_rates_reduce_to_contact_process() {
        let c = cons(12, 2.0, 2.0);
        let times: Vec<f64> = (1..=40).map(|k| k as f64).collect();
        for replica in 0..20 {
            let opts = RunOptions::until(40.0).sampled_at(times.clone());
            let a = evolve(&c, replica, &Configuration::standard(), &opts).unwrap();
            let b = contact_evolve(&c, replica, &ContactInit::Sites([0].into()), &opts).unwrap();
            for (x, y) in a.samples.iter().zip(&b.samples) {
                assert_eq!(x.state.infected(), y.state.infected());
            }
        }
    }

    #[test]
    fn no_return_to_never_infected_and_absorbing_death() {
        let c = cons(3, 1.0, 2.0);
        let times: Vec<f64> = (0..=60).map(|k| k as f64 * 0.5).collect();
        for replica in 0..30 {
            let traj = evolve(&c, replica, &Configuration::standard(), &RunOptions::until(30.0).sampled_at(times.clone())).unwrap();
            for w in traj.samples.windows(2) {
                let (a, b) = (&w[0].state.config, &w[1].state.config);
                for x in a.origin().min(b.origin()) - 1..=a.end().max(b.end()) {
                    if a.get(x) != SiteState::Naive {
                        assert_ne!(b.get(x), SiteState::Naive);
                    }
                }
            }
            if let Some(d) = traj.died_at {
                assert!(traj.samples.iter().filter(|s| s.state.time >= d).all(|s| s.state.infected_count == 0));
            }
            let r0 = traj.edges[0].r.unwrap();
            for e in &traj.edges {
                if let Some(r) = e.r {
                    assert!(r - r0 <= e.arrows as i64);
                }
                assert_eq!(e.infected_count == 0, e.r.is_none() && e.l.is_none());
            }
        }
    }

    #[test]
    fn edges_and_counts_are_consistent_with_snapshots() {
        let c = cons(8, 1.0, 2.0);
        let times: Vec<f64> = (1..=50).map(|k| k as f64).collect();
        for replica in 0..10 {
            let traj = evolve(&c, replica, &Configuration::standard(), &RunOptions::until(50.0).sampled_at(times.clone())).unwrap();
            for s in &traj.samples {
                let inf = s.state.config.infected_sites().unwrap();
                assert_eq!(inf.len() as u64, s.state.infected_count);
                assert_eq!(inf.last().copied(), s.state.r);
                assert_eq!(inf.first().copied(), s.state.l);
                assert_eq!(traj.r_at(s.state.time), s.state.r);
                assert_eq!(traj.l_at(s.state.time), s.state.l);
            }
        }
    }

    #[test]
    fn windowed_half_line_matches_wide_window() {
        // a narrow certified window agrees with a much wider one on r
        let c = cons(21, 1.0, 2.0);
        for replica in 0..5 {
            let narrow = evolve(&c, replica, &Configuration::half_line(), &RunOptions::until(30.0)).unwrap();
            let wide = evolve(
                &c,
                replica,
                &Configuration::half_line(),
                &RunOptions::until(30.0).window(WindowPolicy::fixed(400)),
            )
            .unwrap();
            for t in (0..=300).map(|k| k as f64 * 0.1) {
                assert_eq!(narrow.r_at(t), wide.r_at(t), "replica {replica} t {t}");
            }
        }
    }

    #[test]
    fn too_small_fixed_window_is_reported() {
        let c = cons(2, 1.0, 2.0);
        let err = evolve(&c, 0, &Configuration::half_line(), &RunOptions::until(50.0).window(WindowPolicy::fixed(3))).unwrap_err();
        assert!(matches!(err, Error::WindowBreach { .. }));
        let grown = evolve(
            &c,
            0,
            &Configuration::half_line(),
            &RunOptions::until(50.0).window(WindowPolicy { margin: Some(3), ..WindowPolicy::default() }),
        )
        .unwrap();
        assert!(grown.expansions > 0);
    }

    #[test]
    fn all_infected_probe_matches_wider_window() {
        let c = cons(5, 2.0, 2.0);
        let opts = |m| RunOptions::until(20.0).sampled_at([10.0, 20.0]).window(WindowPolicy::fixed(m).with_probe(-10, 10));
        let a = contact_evolve(&c, 1, &ContactInit::All, &opts(80)).unwrap();
        let b = contact_evolve(&c, 1, &ContactInit::All, &opts(200)).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.state.config.infected_in(-10, 10), y.state.config.infected_in(-10, 10));
        }
    }

    #[test]
    fn no_recoveries_keeps_everything_infected() {
        let c = cons(5, 2.0, 2.0).without_recoveries();
        let traj = contact_evolve(&c, 0, &ContactInit::All, &RunOptions::until(10.0).sampled_at([10.0]).window(WindowPolicy::default().with_probe(-5, 5))).unwrap();
        assert_eq!(traj.samples[0].state.config.infected_in(-5, 5).len(), 11);
    }

    #[test]
    fn bad_options_are_input_errors() {
        let c = cons(1, 1.0, 2.0);
        let init = Configuration::standard();
        assert!(matches!(evolve(&c, 0, &init, &RunOptions::until(1.0).starting_at(2.0)), Err(Error::Input(_))));
        assert!(matches!(evolve(&c, 0, &init, &RunOptions::until(1.0).sampled_at([2.0])), Err(Error::Input(_))));
        let bad = Construction::new(1, 2.0, 1.0).unwrap();
        assert!(matches!(evolve(&bad, 0, &init, &RunOptions::until(1.0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn evolve_is_deterministic() {
        let c = cons(99, 1.0, 2.0);
        let opts = RunOptions::until(40.0).sampled_at([10.0, 40.0]);
        assert_eq!(
            evolve(&c, 7, &Configuration::standard(), &opts).unwrap(),
            evolve(&c, 7, &Configuration::standard(), &opts).unwrap()
        );
    }
}
