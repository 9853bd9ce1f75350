//! The graphical construction: independent Poisson event streams per site.
//!
//! Every stream is identified by a [`StreamKey`] and realized lazily from a
//! counter-based generator, so any prefix of any stream can be regenerated
//! on demand without storing it. Two processes evolved on the same
//! [`Construction`] and replica therefore see bit-identical arrows and
//! recovery marks, which is what makes the couplings exact.
//!
//! Time is cut into blocks of length [`BLOCK_LENGTH`]. The events of a
//! stream inside block `b` are drawn from a generator keyed on
//! `(master_seed, replica, site, kind, b)` by summing exponential gaps from
//! the block start and discarding the first gap that overshoots the block
//! end. By memorylessness the concatenation over blocks is an exact Poisson
//! process, and a reader can jump straight to the block containing a given
//! time.

use std::cmp::Ordering;

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of the time blocks a stream is realized in.
pub const BLOCK_LENGTH: f64 = 4.0;

/// Bits of an event counter reserved for the index inside a block.
const INDEX_BITS: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    LambdaArrowRight,
    LambdaArrowLeft,
    MuLambdaArrowRight,
    MuLambdaArrowLeft,
    Recovery,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::LambdaArrowRight,
        EventKind::LambdaArrowLeft,
        EventKind::MuLambdaArrowRight,
        EventKind::MuLambdaArrowLeft,
        EventKind::Recovery,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_arrow(self) -> bool {
        self != EventKind::Recovery
    }

    /// Arrows that can infect never-infected (`-1`) sites.
    pub fn is_lambda_arrow(self) -> bool {
        matches!(self, EventKind::LambdaArrowRight | EventKind::LambdaArrowLeft)
    }

    pub fn points_right(self) -> bool {
        matches!(self, EventKind::LambdaArrowRight | EventKind::MuLambdaArrowRight)
    }

    pub fn points_left(self) -> bool {
        matches!(self, EventKind::LambdaArrowLeft | EventKind::MuLambdaArrowLeft)
    }

    /// Site the event acts on: the arrow target, or the site itself for a
    /// recovery mark.
    pub fn target(self, site: i64) -> i64 {
        if self.points_right() {
            site + 1
        } else if self.points_left() {
            site - 1
        } else {
            site
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub replica_id: u64,
    pub site: i64,
    pub kind: EventKind,
}

/// One point of the graphical construction.
///
/// `counter` identifies the event inside its stream: the block index in the
/// high bits and the position inside the block in the low 24 bits. Events are
/// totally ordered by `(time, site, kind, counter)`, which is the tie-break
/// used by every merge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub site: i64,
    pub kind: EventKind,
    pub counter: u64,
}

impl Event {
    pub fn target(&self) -> i64 {
        self.kind.target(self.site)
    }

    pub fn key(&self) -> EventKey {
        EventKey {
            time: self.time,
            site: self.site,
            kind: self.kind,
            counter: self.counter,
        }
    }
}

/// Total order over events; also used as a "strictly after" threshold.
#[derive(Clone, Copy, Debug)]
pub struct EventKey {
    pub time: f64,
    pub site: i64,
    pub kind: EventKind,
    pub counter: u64,
}

impl EventKey {
    /// A key that sorts after every event at time `t` and before every event
    /// at a later time.
    pub fn end_of(t: f64) -> Self {
        EventKey {
            time: t,
            site: i64::MAX,
            kind: EventKind::Recovery,
            counter: u64::MAX,
        }
    }
}

impl PartialEq for EventKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for EventKey {}

impl PartialOrd for EventKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EventKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.site.cmp(&other.site))
            .then(self.kind.cmp(&other.kind))
            .then(self.counter.cmp(&other.counter))
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// The probability space: a master seed plus the two infection rates.
///
/// Recovery marks have rate 1. `without_recoveries` exists for engine tests
/// only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Construction {
    pub master_seed: u64,
    pub lambda: f64,
    pub mu: f64,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    recoveries: bool,
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

impl Construction {
    pub fn new(master_seed: u64, lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::param(format!("lambda must be positive and finite, got {lambda}")));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::param(format!("mu must be positive and finite, got {mu}")));
        }
        Ok(Construction {
            master_seed,
            lambda,
            mu,
            recoveries: true,
        })
    }

    #[doc(hidden)]
    pub fn without_recoveries(mut self) -> Self {
        self.recoveries = false;
        self
    }

    pub fn recoveries_enabled(&self) -> bool {
        self.recoveries
    }

    /// Errors unless `mu >= lambda`, the regime the construction is defined for.
    pub fn require_ordered(&self) -> Result<()> {
        if self.mu < self.lambda {
            Err(Error::param(format!(
                "mu ({}) < lambda ({}): the (mu - lambda)-arrow rate would be negative",
                self.mu, self.lambda
            )))
        } else {
            Ok(())
        }
    }

    pub fn rate(&self, kind: EventKind) -> f64 {
        match kind {
            EventKind::LambdaArrowRight | EventKind::LambdaArrowLeft => self.lambda,
            EventKind::MuLambdaArrowRight | EventKind::MuLambdaArrowLeft => (self.mu - self.lambda).max(0.0),
            EventKind::Recovery => {
                if self.recoveries {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn stream_seed(&self, key: StreamKey, block: u64) -> u64 {
        mix_seed(self.master_seed, &[key.replica_id, key.site as u64, key.kind.index() as u64, block])
    }

    /// Event times of `key` inside block `block`, appended to `out`.
    pub(crate) fn fill_block(&self, key: StreamKey, block: u64, out: &mut Vec<f64>) {
        out.clear();
        let rate = self.rate(key.kind);
        if rate <= 0.0 {
            return;
        }
        let start = block as f64 * BLOCK_LENGTH;
        let end = start + BLOCK_LENGTH;
        let mut rng = SplitMix64::seed_from_u64(self.stream_seed(key, block));
        let mut t = start;
        loop {
            let u: f64 = rng.sample(Open01);
            t += -u.ln() / rate;
            if t >= end {
                break;
            }
            out.push(t);
        }
        debug_assert!(out.len() < (1 << INDEX_BITS));
    }
}

/// Hash chain `h <- splitmix(h ^ word)` over `words`, starting from `seed`.
/// Every derived random source in the crate is keyed this way.
pub fn mix_seed(seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(seed, |h, &w| SplitMix64::seed_from_u64(h ^ w).next_u64())
}

pub(crate) fn make_counter(block: u64, index: usize) -> u64 {
    (block << INDEX_BITS) | index as u64
}

fn block_of(t: f64) -> u64 {
    if t <= 0.0 {
        0
    } else {
        (t / BLOCK_LENGTH).floor() as u64
    }
}

/// Lazy reader over one stream.
#[derive(Clone, Debug)]
pub(crate) struct StreamCursor {
    key: StreamKey,
    rate: f64,
    block: u64,
    times: Vec<f64>,
    pos: usize,
    primed: bool,
}

impl StreamCursor {
    pub(crate) fn new(construction: &Construction, key: StreamKey) -> Self {
        StreamCursor {
            key,
            rate: construction.rate(key.kind),
            block: 0,
            times: Vec::new(),
            pos: 0,
            primed: false,
        }
    }

    fn load(&mut self, construction: &Construction, block: u64) {
        self.block = block;
        self.pos = 0;
        construction.fill_block(self.key, block, &mut self.times);
        self.primed = true;
    }

    /// The next unread event, or `None` for a zero-rate stream.
    pub(crate) fn peek(&mut self, construction: &Construction) -> Option<Event> {
        if self.rate <= 0.0 {
            return None;
        }
        if !self.primed {
            self.load(construction, self.block);
        }
        while self.pos >= self.times.len() {
            let next = self.block + 1;
            self.load(construction, next);
        }
        Some(Event {
            time: self.times[self.pos],
            site: self.key.site,
            kind: self.key.kind,
            counter: make_counter(self.block, self.pos),
        })
    }

    pub(crate) fn advance(&mut self) {
        self.pos += 1;
    }

    /// Position the cursor on the first event whose key is strictly greater
    /// than `after`.
    pub(crate) fn seek_after(&mut self, construction: &Construction, after: &EventKey) {
        if self.rate <= 0.0 {
            return;
        }
        let target_block = block_of(after.time);
        if !self.primed || target_block > self.block {
            self.load(construction, target_block.max(self.block));
        }
        while let Some(ev) = self.peek(construction) {
            if ev.key() > *after {
                break;
            }
            self.advance();
        }
    }
}

/// All five streams of one site, merged in key order.
#[derive(Clone, Debug)]
pub(crate) struct SiteStreams {
    cursors: [StreamCursor; 5],
}

impl SiteStreams {
    pub(crate) fn new(construction: &Construction, replica_id: u64, site: i64) -> Self {
        let cursors = EventKind::ALL.map(|kind| {
            StreamCursor::new(
                construction,
                StreamKey {
                    replica_id,
                    site,
                    kind,
                },
            )
        });
        SiteStreams { cursors }
    }

    pub(crate) fn seek_after(&mut self, construction: &Construction, after: &EventKey) {
        for c in self.cursors.iter_mut() {
            c.seek_after(construction, after);
        }
    }

    /// Earliest unread event over the five streams.
    pub(crate) fn peek(&mut self, construction: &Construction) -> Option<Event> {
        let mut best: Option<Event> = None;
        for c in self.cursors.iter_mut() {
            if let Some(ev) = c.peek(construction) {
                if best.is_none_or(|b| ev.key() < b.key()) {
                    best = Some(ev);
                }
            }
        }
        best
    }

    pub(crate) fn advance(&mut self, kind: EventKind) {
        self.cursors[kind.index()].advance();
    }

    /// Earliest unread event among the given kinds.
    pub(crate) fn peek_kinds(&mut self, construction: &Construction, kinds: &[EventKind]) -> Option<Event> {
        let mut best: Option<Event> = None;
        for &k in kinds {
            if let Some(ev) = self.cursors[k.index()].peek(construction) {
                if best.is_none_or(|b| ev.key() < b.key()) {
                    best = Some(ev);
                }
            }
        }
        best
    }
}

/// Events of one stream up to and including `horizon`, in increasing time.
pub fn site_streams(construction: &Construction, key: StreamKey, horizon: f64) -> Result<Vec<Event>> {
    construction.require_ordered()?;
    if !(horizon > 0.0) {
        return Err(Error::input(format!("horizon must be positive, got {horizon}")));
    }
    let mut cursor = StreamCursor::new(construction, key);
    let mut out = Vec::new();
    while let Some(ev) = cursor.peek(construction) {
        if ev.time > horizon {
            break;
        }
        out.push(ev);
        cursor.advance();
    }
    Ok(out)
}

/// Merge of every stream of every site in `[x_lo, x_hi]`, sorted by event key.
pub fn window_events(
    construction: &Construction,
    replica_id: u64,
    window: (i64, i64),
    horizon: f64,
) -> Result<Vec<Event>> {
    let (x_lo, x_hi) = window;
    if x_lo > x_hi {
        return Err(Error::input(format!("empty window [{x_lo}, {x_hi}]")));
    }
    let mut out = Vec::new();
    for site in x_lo..=x_hi {
        for kind in EventKind::ALL {
            out.extend(site_streams(
                construction,
                StreamKey {
                    replica_id,
                    site,
                    kind,
                },
                horizon,
            )?);
        }
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(site: i64, kind: EventKind) -> StreamKey {
        StreamKey {
            replica_id: 3,
            site,
            kind,
        }
    }

    #[test]
    fn zero_rate_stream_is_empty() {
        let c = Construction::new(1, 1.0, 1.0).unwrap();
        let ev = site_streams(&c, key(0, EventKind::MuLambdaArrowRight), 100.0).unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn unordered_rates_are_refused() {
        let c = Construction::new(1, 2.0, 1.0).unwrap();
        assert!(matches!(
            site_streams(&c, key(0, EventKind::Recovery), 1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn tiny_horizon_is_almost_surely_empty() {
        let c = Construction::new(9, 1.0, 2.0).unwrap();
        let nonempty = (0..200)
            .filter(|&s| !site_streams(&c, key(s, EventKind::Recovery), 1e-9).unwrap().is_empty())
            .count();
        assert_eq!(nonempty, 0);
    }

    #[test]
    fn streams_are_strictly_increasing_and_replayable() {
        let c = Construction::new(77, 1.0, 2.0).unwrap();
        for kind in EventKind::ALL {
            let a = site_streams(&c, key(-4, kind), 60.0).unwrap();
            let b = site_streams(&c, key(-4, kind), 60.0).unwrap();
            assert_eq!(a, b);
            assert!(a.windows(2).all(|w| w[0].time < w[1].time));
            assert!(a.iter().all(|e| e.time <= 60.0 && e.time > 0.0));
        }
    }

    #[test]
    fn distinct_keys_give_distinct_streams() {
        let c = Construction::new(77, 1.0, 2.0).unwrap();
        let a = site_streams(&c, key(0, EventKind::LambdaArrowLeft), 20.0).unwrap();
        let b = site_streams(&c, key(0, EventKind::LambdaArrowRight), 20.0).unwrap();
        let d = site_streams(&c, key(1, EventKind::LambdaArrowLeft), 20.0).unwrap();
        assert_ne!(a.first().map(|e| e.time), b.first().map(|e| e.time));
        assert_ne!(a.first().map(|e| e.time), d.first().map(|e| e.time));
    }

    #[test]
    fn single_site_window_at_equal_rates() {
        let c = Construction::new(5, 1.5, 1.5).unwrap();
        let ev = window_events(&c, 0, (0, 0), 50.0).unwrap();
        assert!(!ev.is_empty());
        assert!(ev
            .iter()
            .all(|e| e.kind.is_lambda_arrow() || e.kind == EventKind::Recovery));
    }

    #[test]
    fn disjoint_windows_merge_to_union() {
        let c = Construction::new(5, 1.0, 2.0).unwrap();
        let mut left = window_events(&c, 2, (-3, 0), 10.0).unwrap();
        let right = window_events(&c, 2, (1, 4), 10.0).unwrap();
        let whole = window_events(&c, 2, (-3, 4), 10.0).unwrap();
        left.extend(right);
        left.sort_unstable();
        assert_eq!(left, whole);
    }

    #[test]
    fn seek_lands_after_threshold() {
        let c = Construction::new(5, 1.0, 2.0).unwrap();
        let k = key(2, EventKind::Recovery);
        let all = site_streams(&c, k, 40.0).unwrap();
        let mid = all[all.len() / 2];
        let mut cur = StreamCursor::new(&c, k);
        cur.seek_after(&c, &mid.key());
        assert_eq!(cur.peek(&c).unwrap(), all[all.len() / 2 + 1]);
        let mut cur = StreamCursor::new(&c, k);
        cur.seek_after(&c, &EventKey::end_of(mid.time - 1e-12));
        assert_eq!(cur.peek(&c).unwrap(), mid);
    }

    #[test]
    fn empty_window_is_an_input_error() {
        let c = Construction::new(5, 1.0, 2.0).unwrap();
        assert!(matches!(window_events(&c, 0, (1, 0), 1.0), Err(Error::Input(_))));
    }

    proptest::proptest! {
        #[test]
        fn longer_horizon_extends_the_stream(seed in 0u64..1000, site in -50i64..50, kind in 0usize..5, h1 in 0.1f64..30.0, extra in 0.0f64..30.0) {
            let c = Construction::new(seed, 1.0, 2.0).unwrap();
            let k = key(site, EventKind::ALL[kind]);
            let short = site_streams(&c, k, h1).unwrap();
            let long = site_streams(&c, k, h1 + extra).unwrap();
            proptest::prop_assert_eq!(&long[..short.len()], &short[..]);
            proptest::prop_assert!(long[short.len()..].iter().all(|e| e.time > h1));
        }
    }
}
