//! Labeled GLMB densities and the bookkeeping shared by every stage of the
//! tracker.

mod kld;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::StableHasher;
use crate::label::Label;
use crate::linalg::{SingleObjectDensity, State};

pub use kld::{kld, kld_factored, KLD_MAX_LABELS};

/// Opaque identifier of an association history.
///
/// A label's density is a function of the measurements it has been assigned
/// since birth, so the `(label, density)` pairs of a component identify its
/// lineage. Histories are derived from those pairs, which makes them
/// restrictable: dropping labels from a component gives the history of the
/// corresponding marginal term. [`HistoryId::UNIT`] is reserved for
/// components with an empty label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HistoryId(pub u64);

impl HistoryId {
    pub const UNIT: HistoryId = HistoryId(0);

    /// History of a component with the given per-label densities.
    pub fn of_densities(densities: &BTreeMap<Label, SingleObjectDensity>) -> HistoryId {
        Self::of_pairs(densities.iter())
    }

    /// History of the product of two label-disjoint components. Commutative,
    /// and an empty side contributes nothing.
    pub fn combine(a: &BTreeMap<Label, SingleObjectDensity>, b: &BTreeMap<Label, SingleObjectDensity>) -> HistoryId {
        let mut pairs: Vec<(&Label, &SingleObjectDensity)> = a.iter().chain(b.iter()).collect();
        pairs.sort_unstable_by_key(|(l, _)| **l);
        Self::of_pairs(pairs.into_iter())
    }

    fn of_pairs<'a>(pairs: impl Iterator<Item = (&'a Label, &'a SingleObjectDensity)>) -> HistoryId {
        let mut h = StableHasher::new(0xa55);
        let mut any = false;
        for (l, d) in pairs {
            any = true;
            h.write_u64(l.birth_time as u64)
                .write_u64(l.birth_index as u64)
                .write_u64(d.fingerprint());
        }
        if !any {
            return HistoryId::UNIT;
        }
        match h.finish() {
            0 => HistoryId(1),
            v => HistoryId(v),
        }
    }
}

/// One `(label set, history)` term of a GLMB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmbComponent {
    pub weight: f64,
    pub history: HistoryId,
    /// Per-label densities; the key set is the component's label set.
    pub densities: BTreeMap<Label, SingleObjectDensity>,
}

impl GlmbComponent {
    pub fn new(weight: f64, history: HistoryId, densities: BTreeMap<Label, SingleObjectDensity>) -> Self {
        Self {
            weight,
            history,
            densities,
        }
    }

    pub fn empty(weight: f64) -> Self {
        Self::new(weight, HistoryId::UNIT, BTreeMap::new())
    }

    pub fn labels(&self) -> impl ExactSizeIterator<Item = &Label> + '_ {
        self.densities.keys()
    }

    pub fn cardinality(&self) -> usize {
        self.densities.len()
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.densities.contains_key(label)
    }

    fn key(&self) -> (HistoryId, Vec<Label>) {
        (self.history, self.densities.keys().copied().collect())
    }
}

/// Deterministic ranking: weight descending, then history ascending, then
/// label set lexicographically.
pub fn rank_order(a: &GlmbComponent, b: &GlmbComponent) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then_with(|| a.history.cmp(&b.history))
        .then_with(|| a.labels().cmp(b.labels()))
}

/// Weighted mixture over `(history, label set)` pairs with per-label
/// densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledGlmb {
    components: Vec<GlmbComponent>,
    universe: BTreeSet<Label>,
}

impl Default for LabeledGlmb {
    fn default() -> Self {
        Self::unit()
    }
}

impl LabeledGlmb {
    /// Builds a density, merging components that share `(history, label
    /// set)` by adding their weights. The first occurrence keeps its position
    /// and densities. Empty label sets are all mapped to the unit history.
    pub fn from_components(components: Vec<GlmbComponent>) -> Self {
        let mut index: HashMap<(HistoryId, Vec<Label>), usize> = HashMap::with_capacity(components.len());
        let mut merged: Vec<GlmbComponent> = Vec::with_capacity(components.len());
        for mut c in components {
            if c.densities.is_empty() {
                c.history = HistoryId::UNIT;
            }
            match index.entry(c.key()) {
                std::collections::hash_map::Entry::Occupied(e) => merged[*e.get()].weight += c.weight,
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(merged.len());
                    merged.push(c);
                }
            }
        }
        let universe = merged.iter().flat_map(|c| c.labels().copied()).collect();
        Self {
            components: merged,
            universe,
        }
    }

    /// The density of "no objects": one empty component of weight one.
    pub fn unit() -> Self {
        Self::from_components(vec![GlmbComponent::empty(1.0)])
    }

    pub fn components(&self) -> &[GlmbComponent] {
        &self.components
    }

    pub fn into_components(self) -> Vec<GlmbComponent> {
        self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Union of all component label sets.
    pub fn label_universe(&self) -> &BTreeSet<Label> {
        &self.universe
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Scales weights to sum to one, preserving component order.
    pub fn normalize(mut self) -> Result<Self> {
        let total = self.total_weight();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::AllZeroWeights);
        }
        for c in &mut self.components {
            c.weight /= total;
        }
        Ok(self)
    }

    /// Keeps at most `max_components` of the highest-ranked components whose
    /// weight is at least `min_weight`, then renormalises. Kept components
    /// retain their input order. When nothing is dropped the input is
    /// returned as is, which makes truncation idempotent.
    pub fn truncate(self, max_components: usize, min_weight: f64) -> Result<Self> {
        let mut order: Vec<usize> = (0..self.components.len()).collect();
        order.sort_by(|&a, &b| rank_order(&self.components[a], &self.components[b]));
        let mut keep: Vec<usize> = order
            .into_iter()
            .filter(|&i| self.components[i].weight >= min_weight)
            .take(max_components)
            .collect();
        if keep.len() == self.components.len() {
            return Ok(self);
        }
        keep.sort_unstable();
        let mut components = self.components;
        let mut slots: Vec<Option<GlmbComponent>> = components.drain(..).map(Some).collect();
        let kept = keep.into_iter().filter_map(|i| slots[i].take()).collect();
        Self::from_components(kept).normalize()
    }

    pub fn cardinality(&self) -> CardinalityDistribution {
        let n_max = self.components.iter().map(GlmbComponent::cardinality).max().unwrap_or(0);
        let mut probabilities = vec![0.0; n_max + 1];
        for c in &self.components {
            probabilities[c.cardinality()] += c.weight;
        }
        CardinalityDistribution { probabilities }
    }

    /// Probability that `label` is present: the total weight of the
    /// components containing it.
    pub fn existence(&self, label: &Label) -> f64 {
        self.components.iter().filter(|c| c.contains(label)).map(|c| c.weight).sum()
    }

    /// Highest-ranked component.
    pub fn best_component(&self) -> Option<&GlmbComponent> {
        self.components.iter().min_by(|a, b| rank_order(a, b))
    }

    /// Highest-ranked component that contains `label`.
    pub fn best_component_with(&self, label: &Label) -> Option<&GlmbComponent> {
        self.components
            .iter()
            .filter(|c| c.contains(label))
            .min_by(|a, b| rank_order(a, b))
    }

    /// Maximum a-posteriori cardinality, then the highest-ranked component
    /// of that cardinality; returns its per-label means.
    pub fn extract_estimates(&self) -> BTreeMap<Label, State> {
        let n_star = self.cardinality().map_estimate();
        self.components
            .iter()
            .filter(|c| c.cardinality() == n_star)
            .min_by(|a, b| rank_order(a, b))
            .map(|c| c.densities.iter().map(|(l, d)| (*l, d.mean)).collect())
            .unwrap_or_default()
    }

    /// Checks the structural invariants: unique `(history, labels)` keys and
    /// a consistent universe.
    pub fn check_invariants(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        let keys_unique = self.components.iter().all(|c| seen.insert(c.key()));
        let universe: BTreeSet<Label> = self.components.iter().flat_map(|c| c.labels().copied()).collect();
        keys_unique && universe == self.universe && self.components.iter().all(|c| c.weight >= 0.0)
    }
}

/// Distribution of the number of objects.
#[derive(Debug, Clone, PartialEq)]
pub struct CardinalityDistribution {
    pub probabilities: Vec<f64>,
}

impl CardinalityDistribution {
    pub fn probability(&self, n: usize) -> f64 {
        self.probabilities.get(n).copied().unwrap_or(0.0)
    }

    /// Most probable count; ties go to the smaller count.
    pub fn map_estimate(&self) -> usize {
        let mut best = 0;
        for (n, p) in self.probabilities.iter().enumerate() {
            if *p > self.probabilities[best] {
                best = n;
            }
        }
        best
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}
