//! Lattice configurations with finitely many deviations from two defaults.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State of one site: never infected, previously infected, or infected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
#[repr(i8)]
pub enum SiteState {
    Naive = -1,
    Recovered = 0,
    Infected = 1,
}

impl SiteState {
    pub fn as_i8(self) -> i8 {
        self as i8
    }

    pub fn is_infected(self) -> bool {
        self == SiteState::Infected
    }
}

impl From<SiteState> for i8 {
    fn from(s: SiteState) -> i8 {
        s as i8
    }
}

impl TryFrom<i8> for SiteState {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(SiteState::Naive),
            0 => Ok(SiteState::Recovered),
            1 => Ok(SiteState::Infected),
            _ => Err(Error::input(format!("site state must be -1, 0 or 1, got {v}"))),
        }
    }
}

/// A `{-1,0,1}`-valued configuration on Z.
///
/// Sites `< origin` take `left_default`, sites `>= origin + cells.len()` take
/// `right_default`, and the cells in between are stored explicitly. The
/// representation is kept normalized (no leading cell equal to the left
/// default, no trailing cell equal to the right default) so structural
/// equality is configuration equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    left_default: SiteState,
    right_default: SiteState,
    origin: i64,
    cells: Vec<SiteState>,
}

impl Configuration {
    pub fn new(left_default: SiteState, right_default: SiteState, origin: i64, cells: Vec<SiteState>) -> Self {
        let mut c = Configuration {
            left_default,
            right_default,
            origin,
            cells,
        };
        c.normalize();
        c
    }

    /// Constant configuration.
    pub fn uniform(state: SiteState) -> Self {
        Configuration::new(state, state, 0, Vec::new())
    }

    /// Build from explicit sites over a common default.
    pub fn from_sites(default: SiteState, sites: impl IntoIterator<Item = (i64, SiteState)>) -> Self {
        let sites: Vec<(i64, SiteState)> = sites.into_iter().collect();
        let Some(lo) = sites.iter().map(|s| s.0).min() else {
            return Configuration::uniform(default);
        };
        let hi = sites.iter().map(|s| s.0).max().unwrap();
        let mut cells = vec![default; (hi - lo + 1) as usize];
        for (x, s) in sites {
            cells[(x - lo) as usize] = s;
        }
        Configuration::new(default, default, lo, cells)
    }

    /// The standard initial configuration: origin infected, all else `-1`.
    pub fn standard() -> Self {
        Configuration::single(0)
    }

    /// `eta_k`: site `k` infected, every other site never infected.
    pub fn single(k: i64) -> Self {
        Configuration::new(SiteState::Naive, SiteState::Naive, k, vec![SiteState::Infected])
    }

    /// `eta-bar`: every site `<= 0` infected, every site `>= 1` never infected.
    pub fn half_line() -> Self {
        Configuration::new(SiteState::Infected, SiteState::Naive, 1, Vec::new())
    }

    /// A configuration with the origin infected, all sites `>= 1` never
    /// infected, and arbitrary states to the left.
    pub fn with_left_part(left_default: SiteState, left_cells: Vec<SiteState>) -> Self {
        let origin = -(left_cells.len() as i64);
        let mut cells = left_cells;
        cells.push(SiteState::Infected);
        Configuration::new(left_default, SiteState::Naive, origin, cells)
    }

    /// Contact-process style set of infected sites over a recovered background.
    pub fn infected_set(sites: &BTreeSet<i64>) -> Self {
        Configuration::from_sites(
            SiteState::Recovered,
            sites.iter().map(|&x| (x, SiteState::Infected)),
        )
    }

    fn normalize(&mut self) {
        let lead = self.cells.iter().take_while(|&&s| s == self.left_default).count();
        if lead > 0 {
            self.cells.drain(..lead);
            self.origin += lead as i64;
        }
        while self.cells.last() == Some(&self.right_default) {
            self.cells.pop();
        }
        if self.cells.is_empty() && self.left_default == self.right_default {
            self.origin = 0;
        }
    }

    pub fn left_default(&self) -> SiteState {
        self.left_default
    }

    pub fn right_default(&self) -> SiteState {
        self.right_default
    }

    /// First explicitly stored site (or the default boundary when none).
    pub fn origin(&self) -> i64 {
        self.origin
    }

    /// One past the last explicitly stored site.
    pub fn end(&self) -> i64 {
        self.origin + self.cells.len() as i64
    }

    pub fn cells(&self) -> &[SiteState] {
        &self.cells
    }

    pub fn get(&self, x: i64) -> SiteState {
        if x < self.origin {
            self.left_default
        } else if x >= self.end() {
            self.right_default
        } else {
            self.cells[(x - self.origin) as usize]
        }
    }

    pub fn with(&self, x: i64, state: SiteState) -> Self {
        let lo = self.origin.min(x);
        let hi = self.end().max(x + 1);
        let mut cells: Vec<SiteState> = (lo..hi).map(|y| self.get(y)).collect();
        cells[(x - lo) as usize] = state;
        Configuration::new(self.left_default, self.right_default, lo, cells)
    }

    /// Whether the set of infected sites is finite.
    pub fn has_finite_infection(&self) -> bool {
        !self.left_default.is_infected() && !self.right_default.is_infected()
    }

    /// Infected sites, if finitely many.
    pub fn infected_sites(&self) -> Option<Vec<i64>> {
        self.has_finite_infection().then(|| self.infected_in(self.origin, self.end() - 1))
    }

    pub fn infected_in(&self, lo: i64, hi: i64) -> Vec<i64> {
        (lo..=hi).filter(|&x| self.get(x).is_infected()).collect()
    }

    /// Rightmost infected site; `None` if there is none or infinitely many to
    /// the right.
    pub fn rightmost(&self) -> Option<i64> {
        if self.right_default.is_infected() {
            return None;
        }
        if let Some(i) = self.cells.iter().rposition(|s| s.is_infected()) {
            return Some(self.origin + i as i64);
        }
        self.left_default.is_infected().then_some(self.origin - 1)
    }

    pub fn leftmost(&self) -> Option<i64> {
        if self.left_default.is_infected() {
            return None;
        }
        if let Some(i) = self.cells.iter().position(|s| s.is_infected()) {
            return Some(self.origin + i as i64);
        }
        self.right_default.is_infected().then_some(self.end())
    }

    /// Sites where `self` and `other` differ, with the defaults compared
    /// symbolically (a differing default is reported at the boundary site).
    pub fn differences(&self, other: &Configuration) -> Vec<i64> {
        let lo = self.origin.min(other.origin) - 1;
        let hi = self.end().max(other.end());
        (lo..=hi).filter(|&x| self.get(x) != other.get(x)).collect()
    }

    /// Sites violating `self <= other` componentwise (boundary sites stand in
    /// for the defaults).
    pub fn order_violations(&self, other: &Configuration) -> Vec<i64> {
        let lo = self.origin.min(other.origin) - 1;
        let hi = self.end().max(other.end());
        (lo..=hi).filter(|&x| self.get(x) > other.get(x)).collect()
    }

    pub fn le(&self, other: &Configuration) -> bool {
        self.order_violations(other).is_empty()
    }

    /// Run-length encoding `left|origin|state*len,...|right`.
    pub fn to_rle(&self) -> String {
        let mut runs: Vec<String> = Vec::new();
        let mut i = 0;
        while i < self.cells.len() {
            let s = self.cells[i];
            let j = self.cells[i..].iter().take_while(|&&c| c == s).count();
            runs.push(format!("{}*{}", s.as_i8(), j));
            i += j;
        }
        format!(
            "{}|{}|{}|{}",
            self.left_default.as_i8(),
            self.origin,
            runs.join(","),
            self.right_default.as_i8()
        )
    }

    pub fn from_rle(text: &str) -> Result<Self> {
        let bad = || Error::input(format!("malformed configuration encoding {text:?}"));
        let parts: Vec<&str> = text.split('|').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let parse_state = |s: &str| -> Result<SiteState> {
            let v: i8 = s.trim().parse().map_err(|_| bad())?;
            SiteState::try_from(v)
        };
        let left = parse_state(parts[0])?;
        let origin: i64 = parts[1].trim().parse().map_err(|_| bad())?;
        let right = parse_state(parts[3])?;
        let mut cells = Vec::new();
        for run in parts[2].split(',').filter(|r| !r.is_empty()) {
            let (s, n) = run.split_once('*').ok_or_else(bad)?;
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            cells.extend(std::iter::repeat_n(parse_state(s)?, n));
        }
        Ok(Configuration::new(left, right, origin, cells))
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rle())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn named_configurations() {
        let eta0 = Configuration::standard();
        assert_eq!(eta0.get(0), SiteState::Infected);
        assert_eq!(eta0.get(5), SiteState::Naive);
        assert_eq!(eta0.get(-5), SiteState::Naive);
        assert_eq!(eta0.rightmost(), Some(0));
        assert_eq!(eta0.leftmost(), Some(0));

        let bar = Configuration::half_line();
        assert_eq!(bar.get(0), SiteState::Infected);
        assert_eq!(bar.get(-100), SiteState::Infected);
        assert_eq!(bar.get(1), SiteState::Naive);
        assert_eq!(bar.rightmost(), Some(0));
        assert_eq!(bar.leftmost(), None);

        let prime = Configuration::with_left_part(SiteState::Recovered, vec![SiteState::Naive]);
        assert_eq!(prime.get(0), SiteState::Infected);
        assert_eq!(prime.get(-1), SiteState::Naive);
        assert_eq!(prime.get(-2), SiteState::Recovered);
        assert_eq!(prime.get(1), SiteState::Naive);
    }

    #[test]
    fn normalization_makes_equality_structural() {
        let a = Configuration::from_sites(SiteState::Naive, [(3, SiteState::Naive), (0, SiteState::Infected)]);
        assert_eq!(a, Configuration::standard());
        let b = Configuration::new(SiteState::Infected, SiteState::Naive, -3, vec![SiteState::Infected; 4]);
        assert_eq!(b, Configuration::half_line());
    }

    #[test]
    fn order_is_componentwise() {
        let lo = Configuration::standard();
        let hi = lo.with(1, SiteState::Recovered);
        assert!(lo.le(&hi));
        assert!(!hi.le(&lo));
        assert_eq!(hi.order_violations(&lo), vec![1]);
        assert!(Configuration::standard().le(&Configuration::half_line()));
    }

    #[test]
    fn state_rejects_out_of_range() {
        assert!(SiteState::try_from(2).is_err());
        assert!(Configuration::from_rle("-1|0|2*1|-1").is_err());
        assert!(Configuration::from_rle("garbage").is_err());
    }

    fn arb_state() -> impl Strategy<Value = SiteState> {
        prop_oneof![Just(SiteState::Naive), Just(SiteState::Recovered), Just(SiteState::Infected)]
    }

    proptest! {
        #[test]
        fn rle_roundtrip(left in arb_state(), right in arb_state(), origin in -50i64..50,
                         cells in proptest::collection::vec(arb_state(), 0..40)) {
            let c = Configuration::new(left, right, origin, cells);
            prop_assert_eq!(Configuration::from_rle(&c.to_rle()).unwrap(), c);
        }

        #[test]
        fn with_then_get(left in arb_state(), right in arb_state(), origin in -20i64..20,
                         cells in proptest::collection::vec(arb_state(), 0..20),
                         x in -40i64..40, s in arb_state()) {
            let c = Configuration::new(left, right, origin, cells).with(x, s);
            prop_assert_eq!(c.get(x), s);
        }
    }
}
