//! Estimators and hypothesis tests over increments and replica summaries.
//!
//! Everything here is a pure function of its inputs; the simulation drivers
//! that produce those inputs live in [`crate::experiments`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::breakpoints::Increment;
use crate::error::{Error, Result};

/// Outcome of a statistical check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    /// Fail dominates inconclusive, which dominates pass.
    pub fn all(items: impl IntoIterator<Item = Status>) -> Status {
        items.into_iter().fold(Status::Pass, |acc, s| match (acc, s) {
            (Status::Fail, _) | (_, Status::Fail) => Status::Fail,
            (Status::Inconclusive, _) | (_, Status::Inconclusive) => Status::Inconclusive,
            _ => Status::Pass,
        })
    }
}

pub(crate) fn standard_normal() -> Normal {
    Normal::standard()
}

/// Two-sided standard normal quantile for level `level`.
pub fn z_two_sided(level: f64) -> f64 {
    standard_normal().inverse_cdf(1.0 - level / 2.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two points.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn stderr(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Edge speed and diffusion constant

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpeedEstimate {
    pub alpha_hat: f64,
    pub stderr: f64,
    pub n_increments: usize,
}

/// Ratio estimator `mean(X) / mean(Psi)` with a delta-method standard error.
pub fn estimate_alpha(increments: &[Increment]) -> Result<EdgeSpeedEstimate> {
    if increments.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 increments, got {}",
            increments.len()
        )));
    }
    let n = increments.len() as f64;
    let mx = increments.iter().map(|i| i.x as f64).sum::<f64>() / n;
    let mp = increments.iter().map(|i| i.psi).sum::<f64>() / n;
    let alpha = mx / mp;
    let resid = residual_second_moment(increments, alpha);
    Ok(EdgeSpeedEstimate {
        alpha_hat: alpha,
        stderr: (resid / (n * mp * mp)).sqrt(),
        n_increments: increments.len(),
    })
}

fn residual_second_moment(increments: &[Increment], alpha: f64) -> f64 {
    increments
        .iter()
        .map(|i| (i.x as f64 - alpha * i.psi).powi(2))
        .sum::<f64>()
        / increments.len() as f64
}

/// `mean[(X - alpha Psi)^2] / mean(Psi)`. Zero (with a warning) when every
/// increment lies exactly on the line `X = alpha Psi`.
pub fn estimate_sigma2(increments: &[Increment], alpha_hat: f64) -> Result<f64> {
    if increments.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 increments, got {}",
            increments.len()
        )));
    }
    let mp = increments.iter().map(|i| i.psi).sum::<f64>() / increments.len() as f64;
    let s2 = residual_second_moment(increments, alpha_hat) / mp;
    if s2 == 0.0 {
        log::warn!("degenerate increments: sigma^2 estimate is 0, CLT check not applicable");
    }
    Ok(s2)
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    // the series converges slowly near 0, where the value is 1 to double precision
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Exact `P(D_n < d)` for the one-sample statistic (Marsaglia, Tsang and
/// Wang). Used for `n < 35`.
pub fn ks_exact_cdf(n: usize, d: f64) -> f64 {
    let nf = n as f64;
    if d <= 0.5 / nf {
        return 0.0;
    }
    if d >= 1.0 {
        return 1.0;
    }
    let k = (nf * d).floor() as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nf * d;
    let fact = |i: usize| (1..=i).fold(1.0f64, |a, j| a * j as f64);
    let mut hm = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                hm[i][j] = 1.0 / fact(i + 1 - j);
            }
        }
    }
    for i in 0..m {
        hm[i][0] -= h.powi(i as i32 + 1) / fact(i + 1);
        hm[m - 1][i] -= h.powi((m - i) as i32) / fact(m - i);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[m - 1][0] += (2.0 * h - 1.0).powi(m as i32) / fact(m);
    }
    let (q, mut exp) = mat_pow(&hm, n);
    let mut s = q[k - 1][k - 1];
    for i in 1..=n {
        s *= i as f64 / nf;
        if s < 1e-140 {
            s *= 1e140;
            exp -= 140;
        }
    }
    (s * 10f64.powi(exp)).clamp(0.0, 1.0)
}

type Mat = Vec<Vec<f64>>;

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let m = a.len();
    let mut c = vec![vec![0.0; m]; m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i][k];
            if aik != 0.0 {
                for j in 0..m {
                    c[i][j] += aik * b[k][j];
                }
            }
        }
    }
    c
}

/// `a^n` as `(mantissa matrix, decimal exponent)`.
fn mat_pow(a: &Mat, n: usize) -> (Mat, i32) {
    if n == 1 {
        return (a.clone(), 0);
    }
    let (half, e) = mat_pow(a, n / 2);
    let mut v = mat_mul(&half, &half);
    let mut exp = 2 * e;
    if n % 2 == 1 {
        v = mat_mul(a, &v);
    }
    let mid = v.len() / 2;
    if v[mid][mid] > 1e140 {
        for row in v.iter_mut() {
            for x in row.iter_mut() {
                *x *= 1e-140;
            }
        }
        exp += 140;
    }
    (v, exp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    /// Sample size, or `nm / (n + m)` for two samples.
    pub effective_n: f64,
    pub p_value: f64,
    /// Largest statistic accepted at `level`.
    pub critical: f64,
    pub level: f64,
    pub reject: bool,
}

/// p-value of a one-sample statistic.
pub fn ks_p_value(n: usize, d: f64) -> f64 {
    if n < 35 {
        1.0 - ks_exact_cdf(n, d)
    } else {
        kolmogorov_sf((n as f64).sqrt() * d)
    }
}

/// Critical value of the one-sample statistic at `level`.
pub fn ks_critical(n: usize, level: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ks_p_value(n, mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::input("NaN in sample"));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample test of `xs` against a continuous `cdf`.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64, level: f64) -> Result<KsTest> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let v = sorted(xs)?;
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let p = ks_p_value(v.len(), d);
    Ok(KsTest {
        statistic: d,
        effective_n: n,
        p_value: p,
        critical: ks_critical(v.len(), level),
        level,
        reject: p < level,
    })
}

/// One-sample test of integer data against the continuity-corrected `cdf`:
/// the empirical distribution function at each lattice point `k` is compared
/// with `cdf(k + 1/2)`. A plain comparison with a continuous `cdf` picks up
/// half a lattice step at every atom, which dominates the statistic once the
/// sample is large relative to the spread in lattice units.
pub fn ks_lattice(xs: &[i64], cdf: impl Fn(f64) -> f64, level: f64) -> Result<KsTest> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mut v = xs.to_vec();
    v.sort_unstable();
    let n = v.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < v.len() {
        let k = v[i];
        // F(k-) against cdf(k - 1/2): the flat stretch ending below k.
        d = d.max((i as f64 / n - cdf(k as f64 - 0.5)).abs());
        while i < v.len() && v[i] == k {
            i += 1;
        }
        d = d.max((i as f64 / n - cdf(k as f64 + 0.5)).abs());
    }
    Ok(KsTest {
        statistic: d,
        effective_n: n,
        p_value: ks_p_value(v.len(), d),
        critical: ks_critical(v.len(), level),
        level,
        reject: ks_p_value(v.len(), d) < level,
    })
}

/// Two-sample test with the asymptotic null at effective size `nm/(n+m)`.
/// Ties are handled by comparing the empirical distribution functions only
/// at distinct values, which keeps the test conservative for discrete data.
pub fn ks_two_sample(a: &[f64], b: &[f64], level: f64) -> Result<KsTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    let p = kolmogorov_sf(ne.sqrt() * d);
    let crit = {
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if kolmogorov_sf(mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi / ne.sqrt()
    };
    Ok(KsTest { statistic: d, effective_n: ne, p_value: p, critical: crit, level, reject: p < level })
}

// ---------------------------------------------------------------------------
// Central limit theorem

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltTime {
    pub t: f64,
    pub survivors: usize,
    pub mean_z: f64,
    pub var_z: f64,
    pub ks: Option<KsTest>,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub alpha_hat: f64,
    pub sigma2_hat: f64,
    pub sample_times: Vec<f64>,
    pub ks_statistics: Vec<Option<f64>>,
    pub per_time: Vec<CltTime>,
    /// Variance of `(r_T - alpha_hat T) / sqrt(T)` at the largest time, the
    /// direct counterpart of `sigma2_hat`.
    pub direct_variance: Option<f64>,
    pub level: f64,
    pub pass: bool,
    pub status: Status,
}

/// Fewer survivors than this make a time point inconclusive.
pub const MIN_SURVIVORS: usize = 100;

/// KS test of `(r_T - alpha T) / sqrt(T sigma2)` against N(0, 1) for each
/// `(T, edges of surviving replicas at T)`.
pub fn clt_test(edges: &[(f64, Vec<i64>)], alpha_hat: f64, sigma2_hat: f64, level: f64) -> Result<CltReport> {
    if !(sigma2_hat > 0.0 && sigma2_hat.is_finite()) {
        return Err(Error::input(format!("sigma^2 estimate must be positive, got {sigma2_hat}")));
    }
    let normal = standard_normal();
    let mut per_time = Vec::new();
    for (t, rs) in edges {
        let scale = (t * sigma2_hat).sqrt();
        let z: Vec<f64> = rs.iter().map(|&r| (r as f64 - alpha_hat * t) / scale).collect();
        let (ks, status) = if z.len() < MIN_SURVIVORS {
            (None, Status::Inconclusive)
        } else {
            let ks = ks_lattice(rs, |x| normal.cdf((x - alpha_hat * t) / scale), level)?;
            let st = Status::from_bool(!ks.reject);
            (Some(ks), st)
        };
        per_time.push(CltTime {
            t: *t,
            survivors: z.len(),
            mean_z: if z.is_empty() { f64::NAN } else { mean(&z) },
            var_z: variance(&z),
            ks,
            status,
        });
    }
    let direct_variance = edges
        .iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .filter(|(_, rs)| rs.len() >= 2)
        .map(|(t, rs)| {
            let w: Vec<f64> = rs.iter().map(|&r| (r as f64 - alpha_hat * t) / t.sqrt()).collect();
            variance(&w)
        });
    let status = Status::all(per_time.iter().map(|p| p.status));
    Ok(CltReport {
        alpha_hat,
        sigma2_hat,
        sample_times: edges.iter().map(|e| e.0).collect(),
        ks_statistics: per_time.iter().map(|p| p.ks.as_ref().map(|k| k.statistic)).collect(),
        per_time,
        direct_variance,
        level,
        pass: status == Status::Pass,
        status,
    })
}

// ---------------------------------------------------------------------------
// Law of large numbers cross-checks

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn of(xs: &[f64]) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 values, got {}", xs.len())));
        }
        Ok(MeanEstimate { value: mean(xs), stderr: stderr(xs), n: xs.len() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub a: String,
    pub b: String,
    pub difference: f64,
    pub joint_stderr: f64,
    /// `|difference| / joint_stderr`.
    pub z: f64,
    pub within: f64,
    pub status: Status,
}

/// `|a - b| <= within * sqrt(se_a^2 + se_b^2)` for independent estimates.
pub fn agreement(name_a: &str, a: (f64, f64), name_b: &str, b: (f64, f64), within: f64) -> Agreement {
    let diff = a.0 - b.0;
    let se = (a.1 * a.1 + b.1 * b.1).sqrt();
    let z = if se > 0.0 { diff.abs() / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
    Agreement {
        a: name_a.into(),
        b: name_b.into(),
        difference: diff,
        joint_stderr: se,
        z,
        within,
        status: Status::from_bool(z <= within),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub regeneration: EdgeSpeedEstimate,
    /// `mean(r_T / T)` over surviving replicas.
    pub direct_slope: Option<MeanEstimate>,
    pub slope_time: f64,
    /// `1 / mean(tau_k / k)` over surviving replicas, with its delta-method error.
    pub hitting_reciprocal: Option<MeanEstimate>,
    pub hitting_level: i64,
    pub agreements: Vec<Agreement>,
    pub status: Status,
}

/// Pairwise agreement of the three edge-speed estimates within two joint
/// standard errors. Only the regeneration/slope pair decides the status; the
/// hitting-time estimate is reported for the record.
pub fn speed_report(
    regeneration: EdgeSpeedEstimate,
    slopes: &[f64],
    slope_time: f64,
    hitting_ratios: &[f64],
    hitting_level: i64,
) -> SpeedReport {
    let direct = MeanEstimate::of(slopes).ok();
    let hitting = MeanEstimate::of(hitting_ratios).ok().map(|m| MeanEstimate {
        value: 1.0 / m.value,
        stderr: m.stderr / (m.value * m.value),
        n: m.n,
    });
    let reg = (regeneration.alpha_hat, regeneration.stderr);
    let mut agreements = Vec::new();
    let mut status = Status::Inconclusive;
    if let Some(d) = &direct {
        let a = agreement("regeneration", reg, "direct_slope", (d.value, d.stderr), 2.0);
        status = a.status;
        agreements.push(a);
    }
    if let Some(h) = &hitting {
        agreements.push(agreement("regeneration", reg, "hitting_reciprocal", (h.value, h.stderr), 2.0));
        if let Some(d) = &direct {
            agreements.push(agreement("direct_slope", (d.value, d.stderr), "hitting_reciprocal", (h.value, h.stderr), 2.0));
        }
    }
    SpeedReport {
        regeneration,
        direct_slope: direct,
        slope_time,
        hitting_reciprocal: hitting,
        hitting_level,
        agreements,
        status,
    }
}

// ---------------------------------------------------------------------------
// Density

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta_hat: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub t_eval: f64,
    pub window: (i64, i64),
}

/// Mean occupancy over replicas from per-replica occupancy fractions.
pub fn estimate_theta(fractions: &[f64], t_eval: f64, window: (i64, i64)) -> Result<ThetaEstimate> {
    let m = MeanEstimate::of(fractions)?;
    Ok(ThetaEstimate { theta_hat: m.value, stderr: m.stderr, replicas: m.n, t_eval, window })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCheck {
    pub t: f64,
    pub survivors: usize,
    /// Mean `|I_t| / t` over survivors.
    pub density: Option<MeanEstimate>,
    pub target: f64,
    pub relative_error: Option<f64>,
    pub density_status: Status,
    /// Mean `l_t / t` over survivors, compared with `-alpha_hat`.
    pub left_edge: Option<MeanEstimate>,
    pub left_edge_check: Option<Agreement>,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub theta_hat: f64,
    pub beta_hat: f64,
    pub alpha_hat: f64,
    pub tolerance: f64,
    pub ratio_checks: Vec<DensityCheck>,
    pub status: Status,
}

/// Per evaluation time `t`: the infected counts and left edges of surviving
/// replicas.
pub struct SurvivorSlice {
    pub t: f64,
    pub counts: Vec<u64>,
    pub left: Vec<i64>,
}

pub fn density_report(
    alpha: &EdgeSpeedEstimate,
    theta: &ThetaEstimate,
    beta_hat: f64,
    slices: &[SurvivorSlice],
    tolerance: f64,
) -> DensityReport {
    let target = 2.0 * alpha.alpha_hat * theta.theta_hat;
    let checks: Vec<DensityCheck> = slices
        .iter()
        .map(|s| {
            if s.counts.len() < 2 {
                return DensityCheck {
                    t: s.t,
                    survivors: s.counts.len(),
                    density: None,
                    target,
                    relative_error: None,
                    density_status: Status::Inconclusive,
                    left_edge: None,
                    left_edge_check: None,
                    status: Status::Inconclusive,
                };
            }
            let d: Vec<f64> = s.counts.iter().map(|&c| c as f64 / s.t).collect();
            let l: Vec<f64> = s.left.iter().map(|&x| x as f64 / s.t).collect();
            let density = MeanEstimate::of(&d).ok();
            let rel = density.as_ref().map(|m| (m.value - target).abs() / target);
            let density_status = Status::from_bool(rel.is_some_and(|r| r <= tolerance));
            let left_edge = MeanEstimate::of(&l).ok();
            let left_edge_check = left_edge
                .as_ref()
                .map(|m| agreement("l_t/t", (m.value, m.stderr), "-alpha_hat", (-alpha.alpha_hat, alpha.stderr), 2.0));
            let ls = left_edge_check.as_ref().map_or(Status::Inconclusive, |a| a.status);
            DensityCheck {
                t: s.t,
                survivors: s.counts.len(),
                density,
                target,
                relative_error: rel,
                density_status,
                left_edge,
                left_edge_check,
                status: Status::all([density_status, ls]),
            }
        })
        .collect();
    DensityReport {
        theta_hat: theta.theta_hat,
        beta_hat,
        alpha_hat: alpha.alpha_hat,
        tolerance,
        status: Status::all(checks.iter().map(|c| c.status)),
        ratio_checks: checks,
    }
}

// ---------------------------------------------------------------------------
// Complete convergence

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = z_two_sided(level);
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    pub f: Vec<i64>,
    /// `P(I_t ∩ F = ∅)` from the standard process.
    pub lhs: f64,
    pub lhs_interval: (f64, f64),
    pub beta_hat: f64,
    /// `P(xi^Z_t ∩ F = ∅)`.
    pub phi_hat: f64,
    pub phi_stderr: f64,
    /// `(1 - beta) + beta phi`.
    pub rhs: f64,
    pub rhs_interval: (f64, f64),
    pub overlap: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub t_eval: f64,
    pub level: f64,
    pub replicas: usize,
    pub checks: Vec<ConvergenceCheck>,
    pub status: Status,
}

/// Inputs for one finite set `F`.
pub struct ConvergenceInput {
    pub f: Vec<i64>,
    /// Standard-process replicas with `I_t ∩ F = ∅`, out of `lhs_n`.
    pub lhs_empty: usize,
    pub lhs_n: usize,
    /// Per-replica fraction of translates of `F` missed by `xi^Z_t`.
    pub phi_fractions: Vec<f64>,
}

/// Both sides with intervals at `level`; the survival estimate `beta_hat`
/// comes from `beta_survived` of `beta_n` replicas.
pub fn complete_convergence_report(
    inputs: &[ConvergenceInput],
    beta_survived: usize,
    beta_n: usize,
    t_eval: f64,
    level: f64,
) -> Result<ConvergenceReport> {
    if beta_n == 0 {
        return Err(Error::InsufficientData("no replicas for the survival estimate".into()));
    }
    let z = z_two_sided(level);
    let beta = beta_survived as f64 / beta_n as f64;
    let var_beta = beta * (1.0 - beta) / beta_n as f64;
    let mut checks = Vec::new();
    for inp in inputs {
        let lhs = if inp.lhs_n == 0 { f64::NAN } else { inp.lhs_empty as f64 / inp.lhs_n as f64 };
        let lhs_interval = wilson_interval(inp.lhs_empty, inp.lhs_n, level);
        let (phi, phi_se) = if inp.f.is_empty() {
            (1.0, 0.0)
        } else if inp.phi_fractions.len() < 2 {
            return Err(Error::InsufficientData("need at least 2 all-infected replicas".into()));
        } else {
            (mean(&inp.phi_fractions), stderr(&inp.phi_fractions))
        };
        let rhs = 1.0 - beta + beta * phi;
        let rhs_se = ((1.0 - phi).powi(2) * var_beta + beta * beta * phi_se * phi_se).sqrt();
        let rhs_interval = ((rhs - z * rhs_se).max(0.0), (rhs + z * rhs_se).min(1.0));
        let overlap = lhs_interval.0 <= rhs_interval.1 && rhs_interval.0 <= lhs_interval.1;
        checks.push(ConvergenceCheck {
            f: inp.f.clone(),
            lhs,
            lhs_interval,
            beta_hat: beta,
            phi_hat: phi,
            phi_stderr: phi_se,
            rhs,
            rhs_interval,
            overlap,
        });
    }
    let status = if checks.is_empty() {
        Status::Inconclusive
    } else {
        Status::from_bool(checks.iter().all(|c| c.overlap))
    };
    Ok(ConvergenceReport {
        t_eval,
        level,
        replicas: inputs.first().map_or(0, |i| i.lhs_n),
        checks,
        status,
    })
}

// ---------------------------------------------------------------------------
// Exponential tails

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TailSample {
    Observed(f64),
    /// Known only to exceed the value.
    Censored(f64),
}

impl TailSample {
    pub fn value(self) -> f64 {
        match self {
            TailSample::Observed(x) | TailSample::Censored(x) => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub variable: String,
    pub thresholds: Vec<f64>,
    pub log_survival: Vec<f64>,
    /// Decay rate: minus the fitted slope.
    pub gamma_hat: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_samples: usize,
    pub n_censored: usize,
}

impl TailFit {
    pub fn passes(&self, min_r2: f64, min_points: usize) -> bool {
        self.gamma_hat > 0.0 && self.r2 >= min_r2 && self.thresholds.len() >= min_points
    }
}

/// Kaplan-Meier estimate of `P(Y >= x)` at each threshold.
pub fn km_survival(samples: &[TailSample], thresholds: &[f64]) -> Vec<f64> {
    let mut v: Vec<TailSample> = samples.to_vec();
    v.sort_by(|a, b| a.value().total_cmp(&b.value()));
    // event values with their death counts, and the risk set at each
    let mut events: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    let n = v.len();
    while i < n {
        let x = v[i].value();
        let at_risk = (n - i) as f64;
        let mut deaths = 0.0;
        let mut j = i;
        while j < n && v[j].value() == x {
            if matches!(v[j], TailSample::Observed(_)) {
                deaths += 1.0;
            }
            j += 1;
        }
        if deaths > 0.0 {
            events.push((x, 1.0 - deaths / at_risk));
        }
        i = j;
    }
    thresholds
        .iter()
        .map(|&t| events.iter().take_while(|e| e.0 < t).map(|e| e.1).product())
        .collect()
}

/// Least squares of `ln S` on the thresholds, over thresholds with `S > 0`.
pub fn fit_log_linear(variable: &str, thresholds: &[f64], survival: &[f64], n_samples: usize, n_censored: usize) -> Result<TailFit> {
    let pts: Vec<(f64, f64)> = thresholds
        .iter()
        .zip(survival)
        .filter(|(_, &s)| s > 0.0)
        .map(|(&t, &s)| (t, s.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{variable}: {} thresholds with nonzero survival",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate(format!("{variable}: survival is flat over the thresholds")));
    }
    let slope = sxy / sxx;
    Ok(TailFit {
        variable: variable.into(),
        thresholds: pts.iter().map(|p| p.0).collect(),
        log_survival: pts.iter().map(|p| p.1).collect(),
        gamma_hat: -slope,
        intercept: my - slope * mx,
        r2: sxy * sxy / (sxx * syy),
        n_samples,
        n_censored,
    })
}

/// Fit `P(Y >= x) ~ C exp(-gamma x)` at the given thresholds.
pub fn tail_fit(variable: &str, samples: &[TailSample], thresholds: &[f64]) -> Result<TailFit> {
    let n_censored = samples.iter().filter(|s| matches!(s, TailSample::Censored(_))).count();
    if samples.is_empty() || n_censored == samples.len() {
        return Err(Error::InsufficientData(format!("{variable}: no uncensored samples")));
    }
    let first = samples[0].value();
    if samples.iter().all(|s| s.value() == first) {
        return Err(Error::Degenerate(format!("{variable}: constant sample")));
    }
    let s = km_survival(samples, thresholds);
    fit_log_linear(variable, thresholds, &s, samples.len(), n_censored)
}

/// `points` thresholds from the median up to the largest value still exceeded
/// by `min_tail` samples. Integer-valued samples get distinct integer
/// thresholds.
pub fn auto_thresholds(values: &[f64], points: usize, min_tail: usize) -> Vec<f64> {
    if values.is_empty() || points == 0 {
        return Vec::new();
    }
    let v = sorted(values).unwrap_or_default();
    let n = v.len();
    let lo = v[n / 2];
    let hi = v[n.saturating_sub(min_tail.max(1))];
    if hi <= lo {
        return Vec::new();
    }
    let integer = v.iter().all(|x| x.fract() == 0.0);
    let mut out: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64)
        .map(|x| if integer { x.round() } else { x })
        .collect();
    out.dedup();
    if integer && out.len() < points {
        // fall back to every integer in range
        let all: Vec<f64> = (lo as i64..=hi as i64).map(|k| k as f64).collect();
        if all.len() > out.len() {
            out = all;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// i.i.d. increments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagCorrelation {
    pub coordinate: String,
    pub pairs: usize,
    pub correlation: f64,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedKs {
    pub coordinate: String,
    pub comparison: String,
    pub sizes: (usize, usize),
    pub test: KsTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidReport {
    pub increments: usize,
    pub replicas: usize,
    pub level: f64,
    /// Level of each individual test (Bonferroni over all tests).
    pub per_test_level: f64,
    pub lag1_correlations: Vec<LagCorrelation>,
    pub two_sample_ks: Vec<NamedKs>,
    pub pass: bool,
    pub status: Status,
}

pub const IID_MIN_INCREMENTS: usize = 500;

fn coordinate(inc: &Increment, c: usize) -> f64 {
    match c {
        0 => inc.x as f64,
        1 => inc.psi,
        _ => inc.m as f64,
    }
}

const COORDS: [&str; 3] = ["X", "Psi", "M"];

/// Lag-1 autocorrelation within replicas and two-sample KS comparisons
/// (index 1 vs the rest, lower vs upper indices) for each coordinate, with the
/// family-wise level held at `level`.
pub fn iid_report(by_replica: &BTreeMap<u64, Vec<Increment>>, level: f64) -> IidReport {
    let all: Vec<Increment> = by_replica.values().flatten().copied().collect();
    let total = all.len();
    let tests = 9.0;
    let per = level / tests;
    let mut report = IidReport {
        increments: total,
        replicas: by_replica.len(),
        level,
        per_test_level: per,
        lag1_correlations: Vec::new(),
        two_sample_ks: Vec::new(),
        pass: false,
        status: Status::Inconclusive,
    };
    if total < IID_MIN_INCREMENTS || (total as f64) < 2.0 * by_replica.len() as f64 {
        return report;
    }
    let normal = standard_normal();
    let first: Vec<&Increment> = all.iter().filter(|i| i.n == 1).collect();
    let rest: Vec<&Increment> = all.iter().filter(|i| i.n >= 2).collect();
    let mut ns: Vec<usize> = all.iter().map(|i| i.n).collect();
    ns.sort_unstable();
    let median_n = ns[ns.len() / 2];
    let (lower, upper): (Vec<&Increment>, Vec<&Increment>) = all.iter().partition(|i| i.n < median_n);
    let mut ok = true;
    let mut inconclusive = false;
    for (c, name) in COORDS.iter().enumerate() {
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for incs in by_replica.values() {
            for w in incs.windows(2) {
                if w[1].n == w[0].n + 1 {
                    pairs.push((coordinate(&w[0], c), coordinate(&w[1], c)));
                }
            }
        }
        if pairs.len() >= 3 {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let r = pearson(&a, &b);
            let p = 2.0 * normal.sf(r.abs() * (pairs.len() as f64).sqrt());
            ok &= p >= per;
            report.lag1_correlations.push(LagCorrelation {
                coordinate: name.to_string(),
                pairs: pairs.len(),
                correlation: r,
                p_value: p,
                reject: p < per,
            });
        } else {
            inconclusive = true;
        }
        for (label, a, b) in [("index 1 vs index >= 2", &first, &rest), ("lower vs upper index", &lower, &upper)] {
            let xa: Vec<f64> = a.iter().map(|i| coordinate(i, c)).collect();
            let xb: Vec<f64> = b.iter().map(|i| coordinate(i, c)).collect();
            match ks_two_sample(&xa, &xb, per) {
                Ok(t) => {
                    ok &= !t.reject;
                    report.two_sample_ks.push(NamedKs {
                        coordinate: name.to_string(),
                        comparison: label.into(),
                        sizes: (xa.len(), xb.len()),
                        test: t,
                    });
                }
                Err(_) => inconclusive = true,
            }
        }
    }
    report.status = if !ok {
        Status::Fail
    } else if inconclusive {
        Status::Inconclusive
    } else {
        Status::Pass
    };
    report.pass = report.status == Status::Pass;
    report
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::SplitMix64;

    fn inc(n: usize, x: i64, psi: f64, m: i64) -> Increment {
        Increment { n, x, psi, m }
    }

    fn exp_draw<R: Rng>(rng: &mut R, rate: f64) -> f64 {
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        -u.ln() / rate
    }

    fn normal_draw<R: Rng>(rng: &mut R) -> f64 {
        let u: f64 = rng.random_range(1e-12..1.0 - 1e-12);
        standard_normal().inverse_cdf(u)
    }

    fn geometric<R: Rng>(rng: &mut R, p: f64) -> i64 {
        let mut k = 1;
        while !rng.random_bool(p) {
            k += 1;
        }
        k
    }

    /// Synthetic increments grouped by replica; `rho` > 0 makes Psi an AR(1)
    /// sequence within each replica.
    fn synthetic(seed: u64, replicas: u64, per: usize, rho: f64) -> BTreeMap<u64, Vec<Increment>> {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let mut out = BTreeMap::new();
        for r in 0..replicas {
            let mut prev = normal_draw(&mut rng);
            let mut v = Vec::new();
            for n in 1..=per {
                let e = normal_draw(&mut rng);
                let z = rho * prev + (1.0 - rho * rho).sqrt() * e;
                prev = z;
                let psi = (1.0 + 0.5 * z).exp();
                v.push(inc(n, geometric(&mut rng, 0.4), psi, geometric(&mut rng, 0.5) - 1));
            }
            out.insert(r, v);
        }
        out
    }

    #[test]
    fn alpha_examples() {
        let e = estimate_alpha(&[inc(1, 2, 1.0, 0), inc(2, 2, 1.0, 0), inc(3, 2, 1.0, 0)]).unwrap();
        assert_eq!((e.alpha_hat, e.stderr), (2.0, 0.0));
        let e = estimate_alpha(&[inc(1, 1, 1.0, 0), inc(2, 3, 1.0, 0)]).unwrap();
        assert_eq!(e.alpha_hat, 2.0);
        assert!(estimate_alpha(&[]).is_err());
        assert!(estimate_alpha(&[inc(1, 1, 1.0, 0)]).is_err());
    }

    #[test]
    fn sigma2_examples() {
        let same = [inc(1, 2, 1.0, 0), inc(2, 2, 1.0, 0)];
        assert_eq!(estimate_sigma2(&same, 2.0).unwrap(), 0.0);
        let two = [inc(1, 1, 1.0, 0), inc(2, 3, 1.0, 0)];
        assert_eq!(estimate_sigma2(&two, 2.0).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn alpha_is_permutation_invariant(xs in prop::collection::vec((1i64..20, 0.01f64..10.0), 2..40), seed: u64) {
            let incs: Vec<Increment> = xs.iter().enumerate().map(|(i, &(x, p))| inc(i + 1, x, p, 0)).collect();
            let mut shuffled = incs.clone();
            let mut rng = SplitMix64::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let a = estimate_alpha(&incs).unwrap();
            let b = estimate_alpha(&shuffled).unwrap();
            prop_assert!((a.alpha_hat - b.alpha_hat).abs() <= 1e-12 * a.alpha_hat);
        }

        #[test]
        fn wilson_interval_contains_estimate(k in 0usize..200, extra in 0usize..200) {
            let n = k + extra;
            prop_assume!(n > 0);
            let (lo, hi) = wilson_interval(k, n, 0.01);
            let p = k as f64 / n as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        }
    }

    #[test]
    fn kolmogorov_tail_values() {
        // known quantiles of the Kolmogorov distribution
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn exact_small_sample_distribution() {
        // n = 1: D = max(U, 1 - U), so P(D < d) = 2d - 1 on [1/2, 1]
        for d in [0.6, 0.75, 0.9] {
            assert!((ks_exact_cdf(1, d) - (2.0 * d - 1.0)).abs() < 1e-12);
        }
        // tabulated 5% critical value for n = 10 is 0.40925
        assert!((1.0 - ks_exact_cdf(10, 0.40925) - 0.05).abs() < 1e-3);
        // exact and asymptotic agree roughly near the switch
        let e = 1.0 - ks_exact_cdf(34, 0.25);
        let a = kolmogorov_sf(34f64.sqrt() * 0.25);
        assert!((e - a).abs() < 0.03, "{e} vs {a}");
    }

    #[test]
    fn one_sample_calibration() {
        let normal = standard_normal();
        let mut rng = SplitMix64::seed_from_u64(77);
        for n in [20usize, 500] {
            let trials = 400;
            let rejects = (0..trials)
                .filter(|_| {
                    let z: Vec<f64> = (0..n).map(|_| normal_draw(&mut rng)).collect();
                    ks_one_sample(&z, |x| normal.cdf(x), 0.05).unwrap().reject
                })
                .count();
            // nominal 5%; binomial 99.9% upper bound over 400 trials is ~ 0.09
            assert!((rejects as f64) / (trials as f64) <= 0.09, "n = {n}: {rejects} rejections");
        }
    }

    #[test]
    fn two_sample_calibration_and_power() {
        let mut rng = SplitMix64::seed_from_u64(5);
        let trials = 300;
        let rejects = (0..trials)
            .filter(|_| {
                let a: Vec<f64> = (0..300).map(|_| exp_draw(&mut rng, 1.0)).collect();
                let b: Vec<f64> = (0..200).map(|_| exp_draw(&mut rng, 1.0)).collect();
                ks_two_sample(&a, &b, 0.05).unwrap().reject
            })
            .count();
        assert!(rejects as f64 / trials as f64 <= 0.09);
        let a: Vec<f64> = (0..500).map(|_| exp_draw(&mut rng, 1.0)).collect();
        let b: Vec<f64> = (0..500).map(|_| exp_draw(&mut rng, 1.5)).collect();
        assert!(ks_two_sample(&a, &b, 0.01).unwrap().reject);
        // identical discrete samples give a zero statistic
        let d = [1.0, 1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&d, &d, 0.01).unwrap().statistic, 0.0);
    }

    #[test]
    fn clt_calibration_on_normal_input() {
        let mut rng = SplitMix64::seed_from_u64(19);
        let (alpha, sigma2) = (0.3, 0.8);
        let trials = 200;
        let mut passes = 0;
        for _ in 0..trials {
            // rounding a normal to the lattice gives exactly the
            // continuity-corrected law
            let edges: Vec<(f64, Vec<i64>)> = [100.0f64, 400.0]
                .iter()
                .map(|&t| {
                    let rs = (0..1000).map(|_| (alpha * t + (t * sigma2).sqrt() * normal_draw(&mut rng)).round() as i64).collect();
                    (t, rs)
                })
                .collect();
            if clt_test(&edges, alpha, sigma2, 0.01).unwrap().pass {
                passes += 1;
            }
        }
        assert!(passes as f64 / trials as f64 >= 0.97, "{passes} / {trials}");
        assert!(clt_test(&[], 0.3, 0.0, 0.01).is_err());
        let few = clt_test(&[(10.0, vec![1, 2, 3])], 0.3, 1.0, 0.01).unwrap();
        assert_eq!(few.status, Status::Inconclusive);
    }

    #[test]
    fn lattice_ks_removes_the_rounding_artifact() {
        let mut rng = SplitMix64::seed_from_u64(23);
        let xs: Vec<i64> = (0..5000).map(|_| (3.0 * normal_draw(&mut rng)).round() as i64).collect();
        let normal = standard_normal();
        let lattice = ks_lattice(&xs, |x| normal.cdf(x / 3.0), 0.01).unwrap();
        let plain: Vec<f64> = xs.iter().map(|&x| x as f64 / 3.0).collect();
        let plain = ks_one_sample(&plain, |x| normal.cdf(x), 0.01).unwrap();
        assert!(!lattice.reject, "{lattice:?}");
        assert!(plain.reject, "{plain:?}");
        // a shifted lattice law is still detected
        let shifted: Vec<i64> = xs.iter().map(|x| x + 1).collect();
        assert!(ks_lattice(&shifted, |x| normal.cdf(x / 3.0), 0.01).unwrap().reject);
    }

    #[test]
    fn tail_fit_recovers_exponential_rate() {
        let mut rng = SplitMix64::seed_from_u64(3);
        let samples: Vec<TailSample> = (0..10_000).map(|_| TailSample::Observed(exp_draw(&mut rng, 2.0))).collect();
        let thresholds: Vec<f64> = (0..8).map(|i| 0.25 * i as f64).collect();
        let fit = tail_fit("exp", &samples, &thresholds).unwrap();
        assert!((fit.gamma_hat - 2.0).abs() / 2.0 < 0.1, "{fit:?}");
        assert!(fit.r2 > 0.99);
        assert!(fit.passes(0.9, 5));
    }

    #[test]
    fn tail_fit_handles_censoring_and_degeneracy() {
        let mut rng = SplitMix64::seed_from_u64(4);
        // censor at a random time independent of the exponential
        let samples: Vec<TailSample> = (0..20_000)
            .map(|_| {
                let x = exp_draw(&mut rng, 1.0);
                let c = exp_draw(&mut rng, 0.5);
                if x <= c { TailSample::Observed(x) } else { TailSample::Censored(c) }
            })
            .collect();
        let fit = tail_fit("censored", &samples, &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5]).unwrap();
        assert!((fit.gamma_hat - 1.0).abs() < 0.1, "{fit:?}");
        let constant = vec![TailSample::Observed(3.0); 50];
        assert!(matches!(tail_fit("c", &constant, &[1.0, 2.0, 3.0]), Err(Error::Degenerate(_))));
        let censored = vec![TailSample::Censored(3.0); 5];
        assert!(matches!(tail_fit("c", &censored, &[1.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn km_without_censoring_is_empirical() {
        let s: Vec<TailSample> = [1.0, 2.0, 2.0, 3.0].iter().map(|&x| TailSample::Observed(x)).collect();
        assert_eq!(km_survival(&s, &[1.0, 2.0, 3.0, 4.0]), vec![1.0, 0.75, 0.25, 0.0]);
    }

    #[test]
    fn auto_thresholds_for_integers() {
        let v: Vec<f64> = (0..1000).map(|i| (i % 12) as f64).collect();
        let t = auto_thresholds(&v, 8, 10);
        assert!(t.len() >= 5);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!(t.iter().all(|x| x.fract() == 0.0));
    }

    #[test]
    fn iid_report_calibration_on_nulls() {
        let trials = 100;
        let passes = (0..trials).filter(|&s| iid_report(&synthetic(1000 + s, 150, 6, 0.0), 0.01).pass).count();
        assert!(passes as f64 / trials as f64 >= 0.97, "{passes} / {trials}");
    }

    #[test]
    fn iid_report_detects_correlation() {
        let r = iid_report(&synthetic(9, 300, 8, 0.5), 0.01);
        assert_eq!(r.status, Status::Fail);
        assert!(r.lag1_correlations.iter().any(|c| c.coordinate == "Psi" && c.reject));
    }

    #[test]
    fn iid_report_needs_data() {
        assert_eq!(iid_report(&synthetic(1, 10, 3, 0.0), 0.01).status, Status::Inconclusive);
    }

    #[test]
    fn convergence_with_empty_set_is_exact() {
        let inp = ConvergenceInput { f: vec![], lhs_empty: 500, lhs_n: 500, phi_fractions: vec![] };
        let r = complete_convergence_report(&[inp], 150, 500, 10.0, 0.01).unwrap();
        assert_eq!(r.checks[0].lhs, 1.0);
        assert_eq!(r.checks[0].rhs, 1.0);
        assert_eq!(r.status, Status::Pass);
    }

    #[test]
    fn density_report_arithmetic() {
        let alpha = EdgeSpeedEstimate { alpha_hat: 0.5, stderr: 0.01, n_increments: 100 };
        let theta = ThetaEstimate { theta_hat: 0.5, stderr: 0.0, replicas: 10, t_eval: 1.0, window: (0, 1) };
        let slice = SurvivorSlice { t: 10.0, counts: vec![5, 5], left: vec![-5, -5] };
        let r = density_report(&alpha, &theta, 0.3, &[slice], 0.07);
        let c = &r.ratio_checks[0];
        assert_eq!(c.target, 0.5);
        assert_eq!(c.relative_error, Some(0.0));
        assert_eq!(r.status, Status::Pass);
        let empty = SurvivorSlice { t: 10.0, counts: vec![], left: vec![] };
        assert_eq!(density_report(&alpha, &theta, 0.3, &[empty], 0.07).status, Status::Inconclusive);
    }

    #[test]
    fn status_combination() {
        assert_eq!(Status::all([Status::Pass, Status::Inconclusive]), Status::Inconclusive);
        assert_eq!(Status::all([Status::Inconclusive, Status::Fail]), Status::Fail);
        assert_eq!(Status::all([]), Status::Pass);
    }
}
