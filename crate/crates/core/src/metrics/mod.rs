//! OSPA, the track base distance and OSPA(2), with a sparse evaluation path
//! for large track sets.

mod assignment;

use std::ops::RangeInclusive;

use rayon::prelude::*;
use rstar::{RTree, RTreeObject, AABB};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::State;

pub use assignment::{hungarian, sparse_min_cost_matching};

/// A partial function from scan index to state, stored sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    times: Vec<u32>,
    states: Vec<State>,
}

impl Track {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            times: Vec::new(),
            states: Vec::new(),
        }
    }

    /// Builds a track from `(time, state)` pairs in any order; later
    /// duplicates of a time replace earlier ones.
    pub fn from_pairs(id: impl Into<String>, pairs: impl IntoIterator<Item = (u32, State)>) -> Self {
        let mut t = Self::new(id);
        for (k, x) in pairs {
            t.insert(k, x);
        }
        t
    }

    pub fn insert(&mut self, time: u32, state: State) {
        match self.times.last() {
            Some(&last) if last < time => {
                self.times.push(time);
                self.states.push(state);
            }
            None => {
                self.times.push(time);
                self.states.push(state);
            }
            _ => match self.times.binary_search(&time) {
                Ok(i) => self.states[i] = state,
                Err(i) => {
                    self.times.insert(i, time);
                    self.states.insert(i, state);
                }
            },
        }
    }

    pub fn get(&self, time: u32) -> Option<&State> {
        self.times.binary_search(&time).ok().map(|i| &self.states[i])
    }

    pub fn times(&self) -> &[u32] {
        &self.times
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &State)> + '_ {
        self.times.iter().copied().zip(self.states.iter())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The track restricted to `window`.
    pub fn restrict(&self, window: RangeInclusive<u32>) -> Track {
        let lo = self.times.partition_point(|&t| t < *window.start());
        let hi = self.times.partition_point(|&t| t <= *window.end());
        let (lo, hi) = (lo, hi.max(lo));
        Track {
            id: self.id.clone(),
            times: self.times[lo..hi].to_vec(),
            states: self.states[lo..hi].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseDistance {
    /// Euclidean distance between position components.
    #[default]
    Position,
    /// Euclidean distance between full state vectors.
    FullState,
}

impl BaseDistance {
    pub fn eval(&self, a: &State, b: &State) -> f64 {
        match self {
            BaseDistance::Position => ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
            BaseDistance::FullState => (a - b).norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub cutoff: f64,
    pub order: f64,
    pub base: BaseDistance,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            cutoff: 2.0,
            order: 1.0,
            base: BaseDistance::Position,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(Error::Config("metric cutoff must be positive".into()));
        }
        if !(self.order >= 1.0 && self.order.is_finite()) {
            return Err(Error::Config("metric order must be at least 1".into()));
        }
        Ok(())
    }

    fn cut(&self, a: &State, b: &State) -> f64 {
        self.base.eval(a, b).min(self.cutoff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    pub length: u32,
    pub stride: u32,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { length: 50, stride: 1 }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.stride == 0 {
            return Err(Error::Config("window length and stride must be positive".into()));
        }
        Ok(())
    }

    /// Scans covered by the window ending at `k`.
    pub fn at(&self, k: u32) -> RangeInclusive<u32> {
        k.saturating_sub(self.length - 1)..=k
    }
}

/// OSPA from an `m x n` matrix of already cut-off base distances.
fn ospa_from_matrix(dist: &[f64], m: usize, n: usize, c: f64, p: f64) -> f64 {
    if m == 0 && n == 0 {
        return 0.0;
    }
    let cost: Vec<f64> = dist.iter().map(|d| d.powf(p)).collect();
    let (total, _) = hungarian(&cost, m, n);
    ((total + c.powf(p) * (n - m) as f64) / n as f64).powf(1.0 / p)
}

fn ordered<'a, T>(x: &'a [T], y: &'a [T]) -> (&'a [T], &'a [T]) {
    if x.len() <= y.len() {
        (x, y)
    } else {
        (y, x)
    }
}

/// OSPA distance between two finite sets of states.
pub fn ospa(x: &[State], y: &[State], cfg: &MetricConfig) -> f64 {
    let (a, b) = ordered(x, y);
    let dist: Vec<f64> = a.iter().flat_map(|u| b.iter().map(move |v| cfg.cut(u, v))).collect();
    ospa_from_matrix(&dist, a.len(), b.len(), cfg.cutoff, cfg.order)
}

/// Mean per-scan OSPA between two tracks over the union of their domains.
pub fn track_distance(x: &Track, y: &Track, cutoff: f64, base: BaseDistance) -> f64 {
    let (tx, ty) = (x.times(), y.times());
    let (mut i, mut j) = (0, 0);
    let mut union = 0usize;
    let mut saturated = 0usize;
    let mut partial = 0.0;
    while i < tx.len() || j < ty.len() {
        union += 1;
        match (tx.get(i), ty.get(j)) {
            (Some(a), Some(b)) if a == b => {
                let d = base.eval(&x.states[i], &y.states[j]);
                if d < cutoff {
                    partial += d;
                } else {
                    saturated += 1;
                }
                i += 1;
                j += 1;
            }
            (Some(a), Some(b)) if a < b => {
                saturated += 1;
                i += 1;
            }
            (Some(_), None) => {
                saturated += 1;
                i += 1;
            }
            _ => {
                saturated += 1;
                j += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else if saturated == union {
        cutoff
    } else {
        (cutoff * saturated as f64 + partial) / union as f64
    }
}

/// OSPA(2): OSPA over tracks with [`track_distance`] as base distance.
pub fn ospa2(x: &[Track], y: &[Track], cfg: &MetricConfig) -> f64 {
    let (a, b) = ordered(x, y);
    let dist: Vec<f64> = a
        .iter()
        .flat_map(|u| b.iter().map(move |v| track_distance(u, v, cfg.cutoff, cfg.base)))
        .collect();
    ospa_from_matrix(&dist, a.len(), b.len(), cfg.cutoff, cfg.order)
}

/// Which assignment solver the windowed evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    Dense,
    #[default]
    Sparse,
}

/// Windowed OSPA(2) at every `k` of `horizon` (stepping by the window
/// stride), each over tracks restricted to the window ending at `k`.
pub fn ospa2_windowed(
    x: &[Track],
    y: &[Track],
    cfg: &MetricConfig,
    window: &WindowSpec,
    horizon: RangeInclusive<u32>,
) -> Vec<(u32, f64)> {
    ospa2_windowed_with(x, y, cfg, window, horizon, Solver::Sparse)
}

pub fn ospa2_windowed_with(
    x: &[Track],
    y: &[Track],
    cfg: &MetricConfig,
    window: &WindowSpec,
    horizon: RangeInclusive<u32>,
    solver: Solver,
) -> Vec<(u32, f64)> {
    let ks: Vec<u32> = horizon.step_by(window.stride.max(1) as usize).collect();
    ks.into_par_iter()
        .map(|k| {
            let w = window.at(k);
            let restrict = |tracks: &[Track]| -> Vec<Track> {
                tracks
                    .iter()
                    .map(|t| t.restrict(w.clone()))
                    .filter(|t| !t.is_empty())
                    .collect()
            };
            let (xr, yr) = (restrict(x), restrict(y));
            let value = match solver {
                Solver::Dense => ospa2(&xr, &yr, cfg),
                Solver::Sparse => ospa2_sparse(&xr, &yr, cfg),
            };
            (k, value)
        })
        .collect()
}

/// Per-scan OSPA on the instantaneous states of the two track sets.
pub fn ospa_series(x: &[Track], y: &[Track], cfg: &MetricConfig, horizon: RangeInclusive<u32>) -> Vec<(u32, f64)> {
    horizon
        .map(|k| {
            let at = |tracks: &[Track]| -> Vec<State> { tracks.iter().filter_map(|t| t.get(k).copied()).collect() };
            (k, ospa(&at(x), &at(y), cfg))
        })
        .collect()
}

/// Samples per spatial-index box along a track.
const CHUNK: usize = 16;

struct Chunk {
    envelope: AABB<[f64; 3]>,
    track: usize,
}

impl RTreeObject for Chunk {
    type Envelope = AABB<[f64; 3]>;

    fn envelope(&self) -> Self::Envelope {
        self.envelope
    }
}

fn chunks(t: &Track, inflate: f64) -> impl Iterator<Item = AABB<[f64; 3]>> + '_ {
    t.times.chunks(CHUNK).zip(t.states.chunks(CHUNK)).map(move |(ts, xs)| {
        let mut lo = [ts[0] as f64, f64::INFINITY, f64::INFINITY];
        let mut hi = [ts[ts.len() - 1] as f64, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for s in xs {
            for a in 0..2 {
                lo[a + 1] = lo[a + 1].min(s[a] - inflate);
                hi[a + 1] = hi[a + 1].max(s[a] + inflate);
            }
        }
        AABB::from_corners(lo, hi)
    })
}

/// Pairs `(i, j, d)` with `d = track_distance(x[i], y[j]) < c`.
///
/// Candidates come from an R-tree over time-chunked position boxes of `y`,
/// queried with `x`'s boxes inflated by `c`. A pair below the cutoff needs a
/// common scan where the positions are within `c`, which puts the two
/// chunks holding that scan in contact; every other pair is exactly `c`.
pub fn assignable_pairs(x: &[Track], y: &[Track], cfg: &MetricConfig) -> Vec<(usize, usize, f64)> {
    let c = cfg.cutoff;
    let tree = RTree::bulk_load(
        y.iter()
            .enumerate()
            .flat_map(|(j, t)| chunks(t, 0.0).map(move |envelope| Chunk { envelope, track: j }))
            .collect(),
    );
    // two empty tracks are at distance zero but have no boxes
    let empty_y: Vec<usize> = (0..y.len()).filter(|&j| y[j].is_empty()).collect();
    let per_row: Vec<Vec<(usize, usize, f64)>> = x
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            if t.is_empty() {
                return empty_y.iter().map(|&j| (i, j, 0.0)).collect();
            }
            let mut cand: Vec<usize> = chunks(t, c)
                .flat_map(|env| tree.locate_in_envelope_intersecting(&env).map(|h| h.track).collect::<Vec<_>>())
                .collect();
            cand.sort_unstable();
            cand.dedup();
            cand.into_iter()
                .filter_map(|j| {
                    let d = track_distance(t, &y[j], c, cfg.base);
                    (d < c).then_some((i, j, d))
                })
                .collect()
        })
        .collect();
    per_row.into_iter().flatten().collect()
}

/// Minimum over one-to-one matchings of `sum d^p + c^p (n - matched)`,
/// given the sparse below-cutoff pairs of an `m x n` problem with `m <= n`.
pub fn sparse_assignment(pairs: &[(usize, usize, f64)], m: usize, n: usize, c: f64, p: f64) -> f64 {
    let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for &(i, j, d) in pairs {
        edges[i].push((j, d.powf(p)));
    }
    let sat = c.powf(p);
    let matched = sparse_min_cost_matching(&edges, n, sat);
    matched.iter().map(|t| t.2).sum::<f64>() + sat * (n - matched.len()) as f64
}

/// OSPA(2) through the sparse pipeline.
pub fn ospa2_sparse(x: &[Track], y: &[Track], cfg: &MetricConfig) -> f64 {
    let (a, b) = ordered(x, y);
    if b.is_empty() {
        return 0.0;
    }
    let pairs = assignable_pairs(a, b, cfg);
    let total = sparse_assignment(&pairs, a.len(), b.len(), cfg.cutoff, cfg.order);
    (total / b.len() as f64).powf(1.0 / cfg.order)
}
