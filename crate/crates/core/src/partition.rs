//! Label-space partitioning from measurement-space gates.
//!
//! Every label gets an axis-aligned box in measurement space that contains
//! its next measurement with probability at least `P_G`. Labels whose boxes
//! overlap, directly or through a chain, end up in the same group.

use std::collections::{BTreeSet, HashMap};

use petgraph::unionfind::UnionFind;
use rstar::{RTree, RTreeObject, AABB};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::linalg::{Measurement, SingleObjectDensity};
use crate::models::SensorModel;

/// Quantile of the chi-square distribution with two degrees of freedom.
pub fn chi2_quantile_2d(p: f64) -> f64 {
    -2.0 * (-p).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub label: Label,
    pub min: [f64; 2],
    pub max: [f64; 2],
    /// Gate probability the box was sized for.
    pub gate_prob: f64,
}

impl BoundingBox {
    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1])]
    }

    /// Closed-interval intersection on both axes.
    pub fn overlaps(&self, other: &BoundingBox) -> bool {
        (0..2).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    pub fn contains(&self, z: &Measurement) -> bool {
        (0..2).all(|i| self.min[i] <= z[i] && z[i] <= self.max[i])
    }

    /// The same gate resized for another gate probability.
    pub fn at_gate(&self, gate_prob: f64) -> BoundingBox {
        if gate_prob == self.gate_prob {
            return *self;
        }
        let ratio = (chi2_quantile_2d(gate_prob) / chi2_quantile_2d(self.gate_prob)).sqrt();
        let c = self.center();
        let mut out = *self;
        for i in 0..2 {
            let half = 0.5 * (self.max[i] - self.min[i]) * ratio;
            out.min[i] = c[i] - half;
            out.max[i] = c[i] + half;
        }
        out.gate_prob = gate_prob;
        out
    }

    fn envelope(&self) -> AABB<[f64; 2]> {
        AABB::from_corners(self.min, self.max)
    }
}

/// Gate of one label: predicted measurement `± sqrt(chi2(P_G)) * sqrt(S_ii)`.
pub fn project_box(label: Label, marginal: &SingleObjectDensity, sensor: &SensorModel, gate_prob: f64) -> BoundingBox {
    let h = &sensor.observation;
    let m = h * marginal.mean;
    let s = h * marginal.cov * h.transpose() + sensor.noise;
    let k = chi2_quantile_2d(gate_prob).sqrt();
    let half = [k * s[(0, 0)].sqrt(), k * s[(1, 1)].sqrt()];
    BoundingBox {
        label,
        min: [m[0] - half[0], m[1] - half[1]],
        max: [m[0] + half[0], m[1] + half[1]],
        gate_prob,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPartition {
    pub groups: Vec<BTreeSet<Label>>,
    pub gate_prob_used: f64,
}

impl LabelPartition {
    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(|g| g.len()).max().unwrap_or(0)
    }

    pub fn group_of(&self) -> HashMap<Label, usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(gi, g)| g.iter().map(move |l| (*l, gi)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub max_group_size: usize,
    pub initial_gate_prob: f64,
    pub backoff_factor: f64,
    pub max_backoff_steps: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            max_group_size: 20,
            initial_gate_prob: 0.9999,
            backoff_factor: 0.9,
            max_backoff_steps: 5,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if self.max_group_size == 0 || self.max_backoff_steps == 0 {
            return Err(Error::Config("partition sizes must be positive".into()));
        }
        if !open(self.initial_gate_prob) || !open(self.backoff_factor) {
            return Err(Error::Config("gate probability and backoff factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

struct Indexed {
    envelope: AABB<[f64; 2]>,
    index: usize,
}

impl RTreeObject for Indexed {
    type Envelope = AABB<[f64; 2]>;

    fn envelope(&self) -> Self::Envelope {
        self.envelope
    }
}

/// Connected components of the box-overlap graph, as sorted index lists
/// ordered by their first index.
pub fn connected_groups(boxes: &[BoundingBox]) -> Vec<Vec<usize>> {
    let tree = RTree::bulk_load(
        boxes
            .iter()
            .enumerate()
            .map(|(index, b)| Indexed {
                envelope: b.envelope(),
                index,
            })
            .collect(),
    );
    let mut uf = UnionFind::<usize>::new(boxes.len());
    for (i, b) in boxes.iter().enumerate() {
        for hit in tree.locate_in_envelope_intersecting(&b.envelope()) {
            if hit.index > i {
                uf.union(i, hit.index);
            }
        }
    }
    components(&mut uf, boxes.len())
}

fn components(uf: &mut UnionFind<usize>, n: usize) -> Vec<Vec<usize>> {
    let mut by_root: HashMap<usize, usize> = HashMap::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = uf.find_mut(i);
        let slot = *by_root.entry(root).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[slot].push(i);
    }
    out
}

/// Groups labels by gate overlap, shrinking gates while any group exceeds
/// the cap and splitting whatever is still oversized afterwards.
pub fn build_partition(boxes: &[BoundingBox], cfg: &PartitionConfig) -> LabelPartition {
    let cap = cfg.max_group_size.max(1);
    let mut gate = cfg.initial_gate_prob;
    let mut current: Vec<BoundingBox> = boxes.iter().map(|b| b.at_gate(gate)).collect();
    let mut groups = connected_groups(&current);
    let mut steps = 0;
    while groups.iter().any(|g| g.len() > cap) && steps < cfg.max_backoff_steps {
        gate *= cfg.backoff_factor;
        current = boxes.iter().map(|b| b.at_gate(gate)).collect();
        groups = connected_groups(&current);
        steps += 1;
    }

    let mut out: Vec<BTreeSet<Label>> = Vec::with_capacity(groups.len());
    for g in groups {
        if g.len() <= cap {
            out.push(g.iter().map(|&i| boxes[i].label).collect());
        } else {
            let mut members = g;
            members.sort_by_key(|&i| boxes[i].label);
            for part in forced_split(&members, &current, cap) {
                out.push(part.iter().map(|&i| boxes[i].label).collect());
            }
        }
    }
    out.sort_by_key(|g| g.first().copied());
    LabelPartition {
        groups: out,
        gate_prob_used: gate,
    }
}

/// Recursive k-means split of `members` (sorted by label) into parts of at
/// most `cap`. Falls back to label-order chunks when k-means cannot
/// separate the centres.
fn forced_split(members: &[usize], boxes: &[BoundingBox], cap: usize) -> Vec<Vec<usize>> {
    if members.len() <= cap {
        return vec![members.to_vec()];
    }
    let k = members.len().div_ceil(cap);
    let centers: Vec<[f64; 2]> = members.iter().map(|&i| boxes[i].center()).collect();
    let assign = kmeans(&centers, k);
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &c) in assign.iter().enumerate() {
        clusters[c].push(members[pos]);
    }
    clusters.retain(|c| !c.is_empty());
    if clusters.len() == 1 {
        return members.chunks(cap).map(|c| c.to_vec()).collect();
    }
    clusters.into_iter().flat_map(|c| forced_split(&c, boxes, cap)).collect()
}

fn kmeans(points: &[[f64; 2]], k: usize) -> Vec<usize> {
    let n = points.len();
    let mut means: Vec<[f64; 2]> = (0..k).map(|j| points[j * n / k]).collect();
    let mut assign = vec![0usize; n];
    for _ in 0..50 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, m) in means.iter().enumerate() {
                let d = (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0f64; 3]; k];
        for (p, &a) in points.iter().zip(&assign) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            sums[a][2] += 1.0;
        }
        for (m, s) in means.iter_mut().zip(&sums) {
            if s[2] > 0.0 {
                *m = [s[0] / s[2], s[1] / s[2]];
            }
        }
        if !changed {
            break;
        }
    }
    assign
}

/// Measurement indices routed to each group, plus those no group claims.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoutedMeasurements {
    pub per_group: Vec<Vec<usize>>,
    pub unassigned: Vec<usize>,
}

/// Gives each measurement to every group whose region (the union of its
/// members' boxes) contains it.
pub fn route_measurements(partition: &LabelPartition, boxes: &[BoundingBox], measurements: &[Measurement]) -> RoutedMeasurements {
    let group_of = partition.group_of();
    let tree = RTree::bulk_load(
        boxes
            .iter()
            .filter_map(|b| {
                group_of.get(&b.label).map(|&g| Indexed {
                    envelope: b.envelope(),
                    index: g,
                })
            })
            .collect(),
    );
    let mut out = RoutedMeasurements {
        per_group: vec![Vec::new(); partition.groups.len()],
        unassigned: Vec::new(),
    };
    let mut hits: Vec<usize> = Vec::new();
    for (j, z) in measurements.iter().enumerate() {
        hits.clear();
        hits.extend(tree.locate_in_envelope_intersecting(&AABB::from_point([z[0], z[1]])).map(|h| h.index));
        hits.sort_unstable();
        hits.dedup();
        if hits.is_empty() {
            out.unassigned.push(j);
        }
        for &g in &hits {
            out.per_group[g].push(j);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::linalg::{State, StateCov};
    use crate::models::Region;

    fn bx(i: u32, min: [f64; 2], max: [f64; 2]) -> BoundingBox {
        BoundingBox {
            label: Label::new(0, i),
            min,
            max,
            gate_prob: 0.99,
        }
    }

    fn sensor(sigma: f64) -> SensorModel {
        SensorModel::position(sigma, 0.9, 1.0, Region::new([-100.0, -100.0], [100.0, 100.0]))
    }

    fn random_boxes(rng: &mut ChaCha8Rng, n: usize, extent: f64, size: f64) -> Vec<BoundingBox> {
        (0..n as u32)
            .map(|i| {
                let x = rng.random_range(0.0..extent);
                let y = rng.random_range(0.0..extent);
                let w = rng.random_range(0.1..size);
                let h = rng.random_range(0.1..size);
                bx(i, [x, y], [x + w, y + h])
            })
            .collect()
    }

    /// All-pairs overlap with a plain union-find.
    fn quadratic_groups(boxes: &[BoundingBox]) -> BTreeSet<BTreeSet<Label>> {
        let n = boxes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for i in 0..n {
            for j in i + 1..n {
                let a = &boxes[i];
                let b = &boxes[j];
                if a.min[0] <= b.max[0] && b.min[0] <= a.max[0] && a.min[1] <= b.max[1] && b.min[1] <= a.max[1] {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri] = rj;
                }
            }
        }
        let mut groups: HashMap<usize, BTreeSet<Label>> = HashMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().insert(boxes[i].label);
        }
        groups.into_values().collect()
    }

    #[test]
    fn chi_square_quantile_matches_table() {
        // tabulated 0.99 quantile with two degrees of freedom
        assert!((chi2_quantile_2d(0.99) - 9.2103).abs() < 1e-4);
        assert!((chi2_quantile_2d(0.95) - 5.9915).abs() < 1e-4);
    }

    #[test]
    fn isotropic_half_width() {
        let d = SingleObjectDensity::new(State::zeros(), StateCov::identity() * 1e-12);
        let s = sensor(2.0);
        let b = project_box(Label::new(0, 0), &d, &s, 0.99);
        let half = 0.5 * (b.max[0] - b.min[0]);
        assert!((half / 2.0 - 9.2103f64.sqrt()).abs() < 1e-4);
        assert!((half / 2.0 - 3.035).abs() < 1e-3);
    }

    #[test]
    fn box_grows_with_gate_probability() {
        let d = SingleObjectDensity::new(State::new(1.0, 2.0, 0.0, 0.0), StateCov::identity());
        let s = sensor(0.5);
        let mut last = 0.0;
        for p in [0.5, 0.9, 0.99, 0.999, 0.999999] {
            let b = project_box(Label::new(0, 0), &d, &s, p);
            let w = b.max[0] - b.min[0];
            assert!(w > last);
            last = w;
        }
        let b = project_box(Label::new(0, 0), &d, &s, 0.99);
        let r = b.at_gate(0.9);
        assert!(r.min[0] >= b.min[0] && r.max[1] <= b.max[1]);
        let direct = project_box(Label::new(0, 0), &d, &s, 0.9);
        assert!((r.min[0] - direct.min[0]).abs() < 1e-12 && (r.max[1] - direct.max[1]).abs() < 1e-12);
    }

    #[test]
    fn box_contains_gate_fraction_of_measurements() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cov = StateCov::from_diagonal(&State::new(0.7, 0.3, 1.0, 1.0));
        let d = SingleObjectDensity::new(State::new(3.0, -1.0, 0.0, 0.0), cov);
        let s = sensor(0.4);
        let gate = 0.9;
        let b = project_box(Label::new(0, 0), &d, &s, gate);
        let n = 100_000;
        let mut inside = 0;
        for _ in 0..n {
            let e: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let x = d.mean[0] + e[0] * cov[(0, 0)].sqrt() + e[2] * 0.4;
            let y = d.mean[1] + e[1] * cov[(1, 1)].sqrt() + e[3] * 0.4;
            if b.contains(&Measurement::new(x, y)) {
                inside += 1;
            }
        }
        let frac = inside as f64 / n as f64;
        let se = (gate * (1.0 - gate) / n as f64).sqrt();
        assert!(frac >= gate - 3.0 * se, "{frac}");
    }

    #[test]
    fn disjoint_boxes_are_singletons() {
        let boxes: Vec<_> = (0..5).map(|i| bx(i, [i as f64 * 3.0, 0.0], [i as f64 * 3.0 + 1.0, 1.0])).collect();
        let p = build_partition(&boxes, &PartitionConfig::default());
        assert_eq!(p.groups.len(), 5);
        assert!(p.groups.iter().all(|g| g.len() == 1));
    }

    #[test]
    fn chain_is_one_group() {
        let boxes = vec![
            bx(0, [0.0, 0.0], [1.0, 1.0]),
            bx(1, [1.0, 0.5], [2.0, 1.5]),
            bx(2, [1.8, 1.4], [3.0, 3.0]),
        ];
        let p = build_partition(&boxes, &PartitionConfig::default());
        assert_eq!(p.groups, vec![boxes.iter().map(|b| b.label).collect::<BTreeSet<_>>()]);
    }

    #[test]
    fn grouping_matches_quadratic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [1, 10, 100, 300, 500] {
            let boxes = random_boxes(&mut rng, n, 100.0, 6.0);
            let cfg = PartitionConfig {
                max_group_size: usize::MAX,
                initial_gate_prob: 0.99,
                ..Default::default()
            };
            let p = build_partition(&boxes, &cfg);
            let got: BTreeSet<BTreeSet<Label>> = p.groups.into_iter().collect();
            assert_eq!(got, quadratic_groups(&boxes));
        }
    }

    #[test]
    fn partition_is_exact_and_capped() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for trial in 0..30 {
            let n = rng.random_range(1..400);
            let boxes = random_boxes(&mut rng, n, 60.0, 8.0);
            let cfg = PartitionConfig {
                max_group_size: 1 + trial % 7,
                initial_gate_prob: 0.99,
                ..Default::default()
            };
            let p = build_partition(&boxes, &cfg);
            let mut seen = BTreeSet::new();
            for g in &p.groups {
                assert!(g.len() <= cfg.max_group_size);
                for l in g {
                    assert!(seen.insert(*l));
                }
            }
            assert_eq!(seen, boxes.iter().map(|b| b.label).collect());
            assert_eq!(p, build_partition(&boxes, &cfg));
        }
    }

    #[test]
    fn backoff_records_gate() {
        // two boxes that separate once shrunk
        let boxes = vec![bx(0, [0.0, 0.0], [2.0, 2.0]), bx(1, [1.9, 1.9], [3.9, 3.9])];
        let cfg = PartitionConfig {
            max_group_size: 1,
            initial_gate_prob: 0.99,
            backoff_factor: 0.9,
            max_backoff_steps: 5,
        };
        let p = build_partition(&boxes, &cfg);
        assert_eq!(p.groups.len(), 2);
        assert!((p.gate_prob_used - 0.99 * 0.9).abs() < 1e-12);

        // identical boxes never separate: forced split
        let same = vec![bx(0, [0.0, 0.0], [1.0, 1.0]), bx(1, [0.0, 0.0], [1.0, 1.0]), bx(2, [0.0, 0.0], [1.0, 1.0])];
        let p = build_partition(&same, &cfg);
        assert_eq!(p.groups.len(), 3);
        assert!((p.gate_prob_used - 0.99 * 0.9f64.powi(5)).abs() < 1e-12);
    }

    #[test]
    fn lower_gate_never_enlarges_boxes() {
        let d = SingleObjectDensity::new(State::new(1.0, 2.0, 0.0, 0.0), StateCov::identity());
        let s = sensor(0.3);
        let hi = project_box(Label::new(0, 0), &d, &s, 0.999);
        let lo = project_box(Label::new(0, 0), &d, &s, 0.95);
        assert!(lo.min[0] >= hi.min[0] && lo.min[1] >= hi.min[1] && lo.max[0] <= hi.max[0] && lo.max[1] <= hi.max[1]);
    }

    #[test]
    fn routing_examples() {
        let boxes = vec![bx(0, [0.0, 0.0], [1.0, 1.0]), bx(1, [5.0, 5.0], [6.0, 6.0])];
        let p = build_partition(&boxes, &PartitionConfig::default());
        let z = vec![Measurement::new(10.0, 10.0), Measurement::new(0.5, 0.5)];
        let r = route_measurements(&p, &boxes, &z);
        assert_eq!(r.unassigned, vec![0]);
        assert_eq!(r.per_group, vec![vec![1], vec![]]);
    }

    #[test]
    fn routing_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let boxes = random_boxes(&mut rng, 80, 50.0, 5.0);
            let cfg = PartitionConfig {
                max_group_size: 4,
                initial_gate_prob: 0.99,
                ..Default::default()
            };
            let p = build_partition(&boxes, &cfg);
            let z: Vec<Measurement> = (0..200)
                .map(|_| Measurement::new(rng.random_range(-5.0..60.0), rng.random_range(-5.0..60.0)))
                .collect();
            let r = route_measurements(&p, &boxes, &z);
            for (j, m) in z.iter().enumerate() {
                let mut expected = Vec::new();
                for (gi, g) in p.groups.iter().enumerate() {
                    if boxes.iter().any(|b| g.contains(&b.label) && b.contains(m)) {
                        expected.push(gi);
                    }
                }
                let got: Vec<usize> = (0..p.groups.len()).filter(|&g| r.per_group[g].contains(&j)).collect();
                assert_eq!(got, expected);
                assert_eq!(r.unassigned.contains(&j), expected.is_empty());
            }
        }
    }
}
