//! Oriented site percolation on `L = {(y, n) : n >= 0, y + n even}`.
//!
//! Site `(y, n)` is reached from `(y - 1, n - 1)` and `(y + 1, n - 1)`. Fields
//! are never stored: the state of a site is a hash of `(seed, y, n)`, so any
//! two fields with the same seed share their uniforms and differ only in the
//! threshold `p`.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit_log_linear, MeanEstimate, Status, TailFit};
use crate::events::mix_seed;
use crate::parallel::map_replicas;

const SITE_TAG: u64 = 0x5173;
const BOND_TAG: u64 = 0xB04D;

fn uniform(seed: u64, words: &[u64]) -> f64 {
    (mix_seed(seed, words) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Anything that decides which sites of `L` are open.
pub trait Openness {
    fn is_open(&self, y: i64, n: u64) -> bool;
}

/// Independent Bernoulli(`p`) sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteField {
    pub p: f64,
    pub seed: u64,
}

impl SiteField {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        check_probability("p", p)?;
        Ok(SiteField { p, seed })
    }

    pub fn uniform_at(&self, y: i64, n: u64) -> f64 {
        uniform(self.seed, &[SITE_TAG, y as u64, n])
    }
}

impl Openness for SiteField {
    fn is_open(&self, y: i64, n: u64) -> bool {
        self.uniform_at(y, n) < self.p
    }
}

/// Which incoming bond of a site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// From `(y - 1, n - 1)`.
    Left,
    /// From `(y + 1, n - 1)`.
    Right,
}

/// Independent Bernoulli(`p_tilde`) bonds, each site owning its two incoming
/// bonds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BondField {
    pub p_tilde: f64,
    pub seed: u64,
}

impl BondField {
    pub fn new(p_tilde: f64, seed: u64) -> Result<Self> {
        check_probability("p_tilde", p_tilde)?;
        Ok(BondField { p_tilde, seed })
    }

    pub fn bond_open(&self, y: i64, n: u64, side: Side) -> bool {
        let s = match side {
            Side::Left => 0,
            Side::Right => 1,
        };
        uniform(self.seed, &[BOND_TAG, y as u64, n, s]) < self.p_tilde
    }

    /// The site field it induces: a site is open when either incoming bond
    /// is. Sites own disjoint bonds, so they are independent with parameter
    /// `p_tilde (2 - p_tilde)`.
    pub fn sites(&self) -> InducedSites<'_> {
        InducedSites(self)
    }
}

pub struct InducedSites<'a>(&'a BondField);

impl Openness for InducedSites<'_> {
    fn is_open(&self, y: i64, n: u64) -> bool {
        self.0.bond_open(y, n, Side::Left) || self.0.bond_open(y, n, Side::Right)
    }
}

/// Site parameter dominating bond percolation at `p_tilde`.
pub fn induced_p(p_tilde: f64) -> f64 {
    p_tilde * (2.0 - p_tilde)
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::param(format!("{name} = {p} is not a probability")))
    }
}

/// Generation-0 set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterStart {
    /// `A_0 = {0}`.
    Origin,
    /// `A'_0 = {x <= 0 : x even}`, truncated at `-2 n_max`. Sites of `A'_n`
    /// at or right of `n - 2 n_max` only depend on the kept part, so `A'_n`
    /// is exact on `[-n_max, inf)` for every `n <= n_max`.
    LeftHalfLine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSlice {
    pub n: u64,
    /// Sorted.
    pub sites: Vec<i64>,
}

impl ClusterSlice {
    /// `R_n = max A_n`.
    pub fn r(&self) -> Option<i64> {
        self.sites.last().copied()
    }

    pub fn size(&self) -> usize {
        self.sites.len()
    }
}

fn initial(start: ClusterStart, n_max: u64) -> Vec<i64> {
    match start {
        ClusterStart::Origin => vec![0],
        ClusterStart::LeftHalfLine => {
            let lo = -2 * n_max as i64;
            (lo..=0).filter(|x| x % 2 == 0).collect()
        }
    }
}

/// Slices `A_0 .. A_{n_max}`; the empty set is absorbing.
pub fn grow_cluster(field: &impl Openness, n_max: u64, start: ClusterStart) -> Vec<ClusterSlice> {
    grow(n_max, start, |y, n, prev| {
        let from = |x: i64| prev.binary_search(&x).is_ok();
        (from(y - 1) || from(y + 1)) && field.is_open(y, n)
    })
}

/// Bond cluster: `y` joins generation `n` through an open bond from an
/// occupied parent.
pub fn grow_bond_cluster(field: &BondField, n_max: u64, start: ClusterStart) -> Vec<ClusterSlice> {
    grow(n_max, start, |y, n, prev| {
        let from = |x: i64| prev.binary_search(&x).is_ok();
        (from(y - 1) && field.bond_open(y, n, Side::Left)) || (from(y + 1) && field.bond_open(y, n, Side::Right))
    })
}

fn grow(n_max: u64, start: ClusterStart, reached: impl Fn(i64, u64, &[i64]) -> bool) -> Vec<ClusterSlice> {
    let mut slices = vec![ClusterSlice { n: 0, sites: initial(start, n_max) }];
    for n in 1..=n_max {
        let prev = &slices.last().expect("generation 0 present").sites;
        let candidates: BTreeSet<i64> = prev.iter().flat_map(|&x| [x - 1, x + 1]).collect();
        let sites: Vec<i64> = candidates.into_iter().filter(|&y| reached(y, n, prev)).collect();
        slices.push(ClusterSlice { n, sites });
    }
    slices
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentViolation {
    pub seed: u64,
    pub start: ClusterStart,
    pub n: u64,
    /// A bond-cluster site missing from the site cluster.
    pub site: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentVerdict {
    pub p_tilde: f64,
    pub p: f64,
    pub seeds_checked: usize,
    pub generations_checked: u64,
    pub violation_count: usize,
    /// At most one per seed and start.
    pub violations: Vec<ContainmentViolation>,
    pub passed: bool,
}

/// Check `B_n ⊆ A_n` for the bond cluster at `p_tilde` and the site cluster
/// of the induced field, from both the origin and the left half-line.
pub fn bond_site_coupling_check(p_tilde: f64, seeds: Range<u64>, n_max: u64) -> Result<ContainmentVerdict> {
    check_probability("p_tilde", p_tilde)?;
    let per_seed = map_replicas(seeds.clone(), |seed| {
        let bonds = BondField { p_tilde, seed };
        let mut found = Vec::new();
        let mut count = 0;
        for start in [ClusterStart::Origin, ClusterStart::LeftHalfLine] {
            let b = grow_bond_cluster(&bonds, n_max, start);
            let a = grow_cluster(&bonds.sites(), n_max, start);
            let mut first = None;
            for (bs, as_) in b.iter().zip(&a) {
                for &y in &bs.sites {
                    if as_.sites.binary_search(&y).is_err() {
                        count += 1;
                        first.get_or_insert(ContainmentViolation { seed, start, n: bs.n, site: y });
                    }
                }
            }
            found.extend(first);
        }
        (count, found)
    });
    let violation_count = per_seed.iter().map(|(c, _)| c).sum();
    Ok(ContainmentVerdict {
        p_tilde,
        p: induced_p(p_tilde),
        seeds_checked: per_seed.len(),
        generations_checked: n_max,
        violation_count,
        violations: per_seed.into_iter().flat_map(|(_, v)| v).collect(),
        passed: violation_count == 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercolationSpeed {
    pub p: f64,
    pub n_max: u64,
    pub replicas: usize,
    /// Origin clusters alive at `n_max`.
    pub survivors: usize,
    /// `mean(R_{n_max} / n_max)` over survivors.
    pub a_hat: Option<MeanEstimate>,
    /// Fit of `n -> P(R_n < a n, A survives to n_max)` at `a = a_hat / 2`.
    pub tail: Option<TailFit>,
    /// Survivors on which the left-half-line edge differed from the origin
    /// edge; zero when the construction is right.
    pub half_line_mismatches: usize,
    pub status: Status,
}

/// Per-replica record of the origin cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub seed: u64,
    /// `(n, |A_n|, R_n)` for `n = 0 ..= n_max`.
    pub rows: Vec<(u64, usize, Option<i64>)>,
    pub half_line_agrees: bool,
}

impl ClusterSummary {
    pub fn survived(&self) -> bool {
        self.rows.last().is_some_and(|r| r.1 > 0)
    }
}

/// Grow the origin cluster of each field and, when `half_line` is set, the
/// left-half-line cluster of the survivors for comparison.
pub fn cluster_batch(p: f64, seeds: Range<u64>, n_max: u64, half_line: bool) -> Result<Vec<ClusterSummary>> {
    check_probability("p", p)?;
    Ok(map_replicas(seeds, |seed| {
        let field = SiteField { p, seed };
        let a = grow_cluster(&field, n_max, ClusterStart::Origin);
        let survived = a.last().is_some_and(|s| s.size() > 0);
        let half_line_agrees = !(survived && half_line) || {
            let h = grow_cluster(&field, n_max, ClusterStart::LeftHalfLine);
            a.iter().zip(&h).all(|(x, y)| x.r() == y.r())
        };
        ClusterSummary {
            seed,
            rows: a.iter().map(|s| (s.n, s.size(), s.r())).collect(),
            half_line_agrees,
        }
    }))
}

/// Edge speed of surviving origin clusters and its lower-deviation tail.
/// Generations enter the fit while at least `min_hits` survivors lie below
/// the line.
pub fn percolation_edge_speed(p: f64, seeds: Range<u64>, n_max: u64, min_hits: usize) -> Result<PercolationSpeed> {
    if n_max == 0 {
        return Err(Error::input("n_max must be positive"));
    }
    let batch = cluster_batch(p, seeds, n_max, true)?;
    Ok(edge_speed_from(p, n_max, &batch, min_hits))
}

pub fn edge_speed_from(p: f64, n_max: u64, batch: &[ClusterSummary], min_hits: usize) -> PercolationSpeed {
    let alive: Vec<&ClusterSummary> = batch.iter().filter(|c| c.survived()).collect();
    let half_line_mismatches = alive.iter().filter(|c| !c.half_line_agrees).count();
    let speeds: Vec<f64> = alive
        .iter()
        .filter_map(|c| c.rows.last().and_then(|r| r.2))
        .map(|r| r as f64 / n_max as f64)
        .collect();
    let a_hat = MeanEstimate::of(&speeds).ok();
    let tail = a_hat.as_ref().and_then(|a| {
        let slope = a.value / 2.0;
        let mut ns = Vec::new();
        let mut ps = Vec::new();
        let mut deficit = 0;
        for n in 1..=n_max {
            // On L the event is n - R_n >= n - cut(n), which moves in steps
            // of two; inside a step the probability rises with n. Keep the
            // first generation of each step.
            let d = n as i64 - lattice_cut(slope, n);
            if d <= deficit {
                continue;
            }
            deficit = d;
            let below = alive
                .iter()
                .filter(|c| c.rows[n as usize].2.is_some_and(|r| (r as f64) < slope * n as f64))
                .count();
            if below < min_hits {
                break;
            }
            ns.push(n as f64);
            ps.push(below as f64 / batch.len() as f64);
        }
        fit_log_linear("R_n < a n", &ns, &ps, batch.len(), 0).ok()
    });
    let status = if alive.is_empty() {
        Status::Inconclusive
    } else {
        Status::from_bool(half_line_mismatches == 0)
    };
    PercolationSpeed {
        p,
        n_max,
        replicas: batch.len(),
        survivors: alive.len(),
        a_hat,
        tail,
        half_line_mismatches,
        status,
    }
}

/// Largest `y < slope * n` with `y + n` even.
fn lattice_cut(slope: f64, n: u64) -> i64 {
    let y = (slope * n as f64).ceil() as i64 - 1;
    if (y + n as i64).rem_euclid(2) == 0 {
        y
    } else {
        y - 1
    }
}

/// Largest `phi` for which `|x| <= b phi t` forces
/// `[x - c(1 - phi)t, x + c(1 - phi)t] ⊇ [-a t, a t]`: `(c - a) / (c + b)`.
pub fn phi_bound(a: f64, b: f64, c: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ![a, b, c].iter().all(|v| v.is_finite()) {
        return Err(Error::param(format!("phi_bound needs positive finite a, b, c; got ({a}, {b}, {c})")));
    }
    if a >= c {
        return Err(Error::param(format!("phi_bound needs a < c; got a = {a}, c = {c}")));
    }
    Ok((c - a) / (c + b))
}

/// The interval inclusion that [`phi_bound`] guarantees.
pub fn interval_covers(a: f64, c: f64, phi: f64, x: f64, t: f64) -> bool {
    let half = c * (1.0 - phi) * t;
    x - half <= -a * t && x + half >= a * t
}
