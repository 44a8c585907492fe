//! The factored posterior: marginalisation, products and refactorisation
//! onto a new label partition.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glmb::{GlmbComponent, HistoryId, LabeledGlmb};
use crate::label::Label;
use crate::partition::LabelPartition;

/// One factor of a [`FactoredGlmb`]: a density over the labels of `group`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub group: BTreeSet<Label>,
    pub density: LabeledGlmb,
}

impl Factor {
    pub fn new(group: BTreeSet<Label>, density: LabeledGlmb) -> Self {
        Self { group, density }
    }

    /// A factor whose group is exactly the density's label universe.
    pub fn from_density(density: LabeledGlmb) -> Self {
        Self::new(density.label_universe().clone(), density)
    }
}

/// Product of label-disjoint densities approximating the full posterior.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactoredGlmb {
    factors: Vec<Factor>,
}

/// Per-factor truncation applied after products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub max_components: usize,
    pub min_weight: f64,
}

impl Truncation {
    pub const NONE: Truncation = Truncation {
        max_components: usize::MAX,
        min_weight: 0.0,
    };

    pub fn new(max_components: usize, min_weight: f64) -> Self {
        Self {
            max_components,
            min_weight,
        }
    }

    fn apply(&self, g: LabeledGlmb) -> Result<LabeledGlmb> {
        if g.len() <= self.max_components && self.min_weight <= 0.0 {
            return Ok(g);
        }
        g.truncate(self.max_components, self.min_weight)
    }
}

impl FactoredGlmb {
    /// Checks that groups are disjoint and contain their factor's labels.
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for f in &factors {
            if let Some(l) = f.density.label_universe().iter().find(|l| !f.group.contains(l)) {
                return Err(Error::Config(format!("factor density uses label {l} outside its group")));
            }
            for l in &f.group {
                if !seen.insert(*l) {
                    return Err(Error::LabelCollision(*l));
                }
            }
        }
        Ok(Self { factors })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn into_factors(self) -> Vec<Factor> {
        self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Union of all factor groups.
    pub fn label_universe(&self) -> BTreeSet<Label> {
        self.factors.iter().flat_map(|f| f.group.iter().copied()).collect()
    }

    pub fn groups(&self) -> Vec<BTreeSet<Label>> {
        self.factors.iter().map(|f| f.group.clone()).collect()
    }

    /// Product of all factors. Only sensible for small problems.
    pub fn joint(&self) -> Result<LabeledGlmb> {
        self.factors
            .iter()
            .try_fold(LabeledGlmb::unit(), |acc, f| multiply(&acc, &f.density))
    }

    pub fn check_invariants(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.factors.iter().all(|f| {
            f.density.check_invariants()
                && (f.density.total_weight() - 1.0).abs() < 1e-9
                && f.density.label_universe().is_subset(&f.group)
                && f.group.iter().all(|l| seen.insert(*l))
        })
    }
}

/// Marginal of `glmb` on the labels in `keep`.
///
/// Each component's label set and densities are restricted to `keep`, and
/// components that then share a history and label set are merged by adding
/// weights. Total weight is preserved.
pub fn marginalize(glmb: &LabeledGlmb, keep: &BTreeSet<Label>) -> LabeledGlmb {
    if glmb.label_universe().is_subset(keep) {
        return glmb.clone();
    }
    let comps = glmb
        .components()
        .iter()
        .map(|c| {
            let densities: std::collections::BTreeMap<_, _> = c
                .densities
                .iter()
                .filter(|(l, _)| keep.contains(l))
                .map(|(l, d)| (*l, d.clone()))
                .collect();
            GlmbComponent::new(c.weight, HistoryId::of_densities(&densities), densities)
        })
        .collect();
    LabeledGlmb::from_components(comps)
}

/// Total weight the marginal on `keep` assigns to the label set `labels`,
/// summed over histories.
pub fn marginal_weight(glmb: &LabeledGlmb, keep: &BTreeSet<Label>, labels: &BTreeSet<Label>) -> f64 {
    glmb.components()
        .iter()
        .filter(|c| c.labels().filter(|l| keep.contains(l)).eq(labels.iter()))
        .map(|c| c.weight)
        .sum()
}

/// Product of two label-disjoint densities.
pub fn multiply(a: &LabeledGlmb, b: &LabeledGlmb) -> Result<LabeledGlmb> {
    if let Some(l) = a.label_universe().intersection(b.label_universe()).next() {
        return Err(Error::LabelCollision(*l));
    }
    let mut comps = Vec::with_capacity(a.len() * b.len());
    for ca in a.components() {
        for cb in b.components() {
            let history = HistoryId::combine(&ca.densities, &cb.densities);
            let mut densities = ca.densities.clone();
            densities.extend(cb.densities.iter().map(|(l, d)| (*l, d.clone())));
            comps.push(GlmbComponent::new(ca.weight * cb.weight, history, densities));
        }
    }
    Ok(LabeledGlmb::from_components(comps))
}

/// Re-expresses `current` over the groups of `partition`.
///
/// Each old factor is split into its marginals on the new groups it
/// intersects, then the pieces landing in each new group are multiplied.
/// Products are truncated per factor as they are built, so a group formed
/// from many old factors never materialises the untruncated product.
pub fn refactor(current: &FactoredGlmb, partition: &LabelPartition, truncation: Truncation) -> Result<FactoredGlmb> {
    let universe = current.label_universe();
    let covered: BTreeSet<Label> = partition.groups.iter().flatten().copied().collect();
    let total: usize = partition.groups.iter().map(|g| g.len()).sum();
    if covered != universe || total != covered.len() {
        return Err(Error::PartitionMismatch);
    }

    let mut owner = std::collections::HashMap::with_capacity(universe.len());
    for (gi, g) in partition.groups.iter().enumerate() {
        for l in g {
            owner.insert(*l, gi);
        }
    }

    // step 1: split every old factor over the new groups it touches
    let pieces: Vec<Vec<(usize, Factor)>> = current
        .factors
        .par_iter()
        .map(|f| {
            let mut targets: Vec<usize> = f.group.iter().map(|l| owner[l]).collect();
            targets.sort_unstable();
            targets.dedup();
            targets
                .into_iter()
                .map(|gi| {
                    let keep: BTreeSet<Label> = f.group.intersection(&partition.groups[gi]).copied().collect();
                    let density = marginalize(&f.density, &keep);
                    (gi, Factor::new(keep, density))
                })
                .collect()
        })
        .collect();

    let mut per_group: Vec<Vec<Factor>> = vec![Vec::new(); partition.groups.len()];
    for list in pieces {
        for (gi, piece) in list {
            per_group[gi].push(piece);
        }
    }

    // step 2: rebuild each new group's prior from its pieces
    let factors = per_group
        .into_par_iter()
        .zip(partition.groups.par_iter())
        .map(|(mut list, group)| -> Result<Factor> {
            if list.len() == 1 {
                let only = list.pop().expect("one piece");
                return Ok(Factor::new(group.clone(), truncation.apply(only.density)?));
            }
            let mut acc = LabeledGlmb::unit();
            for piece in list {
                acc = truncation.apply(multiply(&acc, &piece.density)?)?;
            }
            Ok(Factor::new(group.clone(), acc))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FactoredGlmb { factors })
}
