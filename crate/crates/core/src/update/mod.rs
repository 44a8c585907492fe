//! Joint prediction and measurement update of one label group.
//!
//! For every prior component the per-label factors of the posterior weight
//! are collected in a score table ([`PsiTable`]) with one row per label
//! (surviving or newborn) and one column per outcome: absent, misdetected,
//! or assigned to measurement `j`. A valid association map picks one column
//! per row with no measurement used twice; its posterior weight is the prior
//! weight times the product of the picked scores. Maps are drawn by Gibbs
//! sampling, or enumerated when the problem is small.

mod enumerate;
mod gibbs;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glmb::{GlmbComponent, HistoryId, LabeledGlmb};
use crate::hash::derive_seed;
use crate::label::Label;
use crate::linalg::{Measurement, SingleObjectDensity};
use crate::models::{predict_density, BirthCandidate, KalmanGain, MotionModel, SensorModel};

pub use enumerate::enumerate_maps;
pub use gibbs::gibbs_sample_with;

/// Clutter intensity used where the sensor model gives none, so that the
/// detection score stays finite.
const KAPPA_FLOOR: f64 = 1e-12;

/// Limit on `labels + births` for [`exhaustive_update`].
pub const EXHAUSTIVE_MAX_LABELS: usize = 6;
/// Limit on measurements for [`exhaustive_update`].
pub const EXHAUSTIVE_MAX_MEASUREMENTS: usize = 6;

/// Per-row outcome: `-1` absent (died or not born), `0` misdetected,
/// `j >= 1` assigned measurement `j` (1-based). Rows follow the score table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AssociationMap {
    pub assignment: Vec<i32>,
}

impl AssociationMap {
    pub fn new(assignment: Vec<i32>) -> Self {
        Self { assignment }
    }

    /// No measurement is assigned to more than one row.
    pub fn is_valid(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.assignment.iter().filter(|&&j| j > 0).all(|j| seen.insert(*j))
    }

    pub fn weight(&self, psi: &PsiTable) -> f64 {
        self.assignment
            .iter()
            .enumerate()
            .map(|(r, &c)| psi.score(r, c))
            .product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpdateConfig {
    /// Components kept in the posterior (K).
    pub requested_components: usize,
    /// Gibbs sweeps for a prior component of weight one; components get a
    /// share proportional to their weight.
    pub gibbs_iterations: usize,
    pub rng_seed: u64,
    /// Enumerate exactly when `rows + measurements` is below this.
    pub exact_threshold: usize,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            requested_components: 50,
            gibbs_iterations: 400,
            rng_seed: 0,
            exact_threshold: 7,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.requested_components == 0 || self.gibbs_iterations == 0 {
            return Err(Error::Config("requested components and Gibbs iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major non-negative scores, `rows x (measurements + 2)`; column `c`
/// of the association (`-1..=M`) is stored at offset `c + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiTable {
    labels: Vec<Label>,
    measurements: usize,
    scores: Vec<f64>,
}

impl PsiTable {
    pub fn new(labels: Vec<Label>, measurements: usize, scores: Vec<f64>) -> Self {
        assert_eq!(scores.len(), labels.len() * (measurements + 2), "score table shape");
        assert!(scores.iter().all(|s| *s >= 0.0), "scores must be non-negative");
        Self {
            labels,
            measurements,
            scores,
        }
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn measurements(&self) -> usize {
        self.measurements
    }

    pub fn score(&self, row: usize, column: i32) -> f64 {
        self.scores[row * (self.measurements + 2) + (column + 1) as usize]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.measurements + 2;
        &self.scores[row * w..(row + 1) * w]
    }

    pub fn scale_row(&mut self, row: usize, factor: f64) {
        let w = self.measurements + 2;
        for s in &mut self.scores[row * w..(row + 1) * w] {
            *s *= factor;
        }
    }
}

/// Gibbs sampling with the configured sweeps and seed.
pub fn gibbs_sample(psi: &PsiTable, cfg: &UpdateConfig) -> Vec<(AssociationMap, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    gibbs_sample_with(psi, cfg.gibbs_iterations, &mut rng)
}

/// Prediction and measurement-independent update terms for one label.
struct LabelPrep {
    predicted: SingleObjectDensity,
    gain: Option<KalmanGain>,
    detect_scores: Vec<f64>,
}

impl LabelPrep {
    fn new(predicted: SingleObjectDensity, measurements: &[Measurement], sensor: &SensorModel) -> Result<Self> {
        let pd = sensor.detection_prob;
        if pd <= 0.0 || measurements.is_empty() {
            return Ok(Self {
                predicted,
                gain: None,
                detect_scores: vec![0.0; measurements.len()],
            });
        }
        let gain = KalmanGain::new(&predicted, sensor)?;
        let clutter = sensor.clutter();
        let detect_scores = measurements
            .iter()
            .map(|z| pd * gain.likelihood(z) / clutter.at(z).max(KAPPA_FLOOR))
            .collect();
        Ok(Self {
            predicted,
            gain: Some(gain),
            detect_scores,
        })
    }

    fn density(&self, column: i32, measurements: &[Measurement]) -> SingleObjectDensity {
        match (column, &self.gain) {
            (c, Some(g)) if c > 0 => g.posterior(&measurements[c as usize - 1]),
            _ => self.predicted.clone(),
        }
    }
}

/// Everything needed to turn association maps of one prior component into
/// posterior components.
struct ComponentProblem {
    prior_weight: f64,
    psi: PsiTable,
    preps: Vec<Arc<LabelPrep>>,
}

struct Shared<'a> {
    measurements: &'a [Measurement],
    births: &'a [BirthCandidate],
    motion: &'a MotionModel,
    sensor: &'a SensorModel,
    birth_preps: Vec<Arc<LabelPrep>>,
    cache: HashMap<(Label, u64), Arc<LabelPrep>>,
}

impl<'a> Shared<'a> {
    fn new(
        measurements: &'a [Measurement],
        births: &'a [BirthCandidate],
        motion: &'a MotionModel,
        sensor: &'a SensorModel,
    ) -> Result<Self> {
        let birth_preps = births
            .iter()
            .map(|b| LabelPrep::new(b.density.clone(), measurements, sensor).map(Arc::new))
            .collect::<Result<_>>()?;
        Ok(Self {
            measurements,
            births,
            motion,
            sensor,
            birth_preps,
            cache: HashMap::new(),
        })
    }

    fn problem(&mut self, c: &GlmbComponent) -> Result<ComponentProblem> {
        let m = self.measurements.len();
        let ps = self.motion.survival_prob;
        let pd = self.sensor.detection_prob;
        let rows = c.densities.len() + self.births.len();
        let mut labels = Vec::with_capacity(rows);
        let mut scores = Vec::with_capacity(rows * (m + 2));
        let mut preps = Vec::with_capacity(rows);

        let mut push_row = |label: Label, exist: f64, prep: &Arc<LabelPrep>| {
            labels.push(label);
            scores.push(1.0 - exist);
            scores.push(exist * (1.0 - pd));
            scores.extend(prep.detect_scores.iter().map(|s| exist * s));
            preps.push(prep.clone());
        };

        for (label, density) in &c.densities {
            let key = (*label, density.fingerprint());
            let prep = match self.cache.get(&key) {
                Some(p) => p.clone(),
                None => {
                    let p = Arc::new(LabelPrep::new(
                        predict_density(density, self.motion),
                        self.measurements,
                        self.sensor,
                    )?);
                    self.cache.insert(key, p.clone());
                    p
                }
            };
            push_row(*label, ps, &prep);
        }
        for (b, prep) in self.births.iter().zip(&self.birth_preps) {
            push_row(b.label, b.birth_prob, prep);
        }
        Ok(ComponentProblem {
            prior_weight: c.weight,
            psi: PsiTable::new(labels, m, scores),
            preps,
        })
    }
}

impl ComponentProblem {
    fn log_weight(&self, map: &AssociationMap) -> f64 {
        self.prior_weight.ln()
            + map
                .assignment
                .iter()
                .enumerate()
                .map(|(r, &c)| self.psi.score(r, c).ln())
                .sum::<f64>()
    }

    fn component(&self, map: &AssociationMap, measurements: &[Measurement]) -> (GlmbComponent, BTreeMap<Label, i32>) {
        let mut densities = BTreeMap::new();
        let mut assoc = BTreeMap::new();
        for (r, &c) in map.assignment.iter().enumerate() {
            if c >= 0 {
                let label = self.psi.labels()[r];
                densities.insert(label, self.preps[r].density(c, measurements));
                assoc.insert(label, c);
            }
        }
        let history = HistoryId::of_densities(&densities);
        (GlmbComponent::new(0.0, history, densities), assoc)
    }
}

/// Posterior of a group together with the association behind each
/// component.
#[derive(Debug, Clone)]
pub struct UpdateOutput {
    pub posterior: LabeledGlmb,
    /// For each posterior component, the outcome of each present label:
    /// `0` misdetected or `j >= 1` measurement `j` (1-based).
    pub associations: Vec<BTreeMap<Label, i32>>,
}

impl UpdateOutput {
    /// Measurement indices (0-based) used by the highest-ranked component.
    pub fn used_by_best(&self) -> Vec<usize> {
        let best = self
            .posterior
            .components()
            .iter()
            .enumerate()
            .min_by(|a, b| crate::glmb::rank_order(a.1, b.1))
            .map(|(i, _)| i);
        let mut used: Vec<usize> = best
            .map(|i| {
                self.associations[i]
                    .values()
                    .filter(|&&c| c > 0)
                    .map(|&c| c as usize - 1)
                    .collect()
            })
            .unwrap_or_default();
        used.sort_unstable();
        used
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Strategy {
    Exhaustive,
    Configured,
}

fn run_update(
    prior: &LabeledGlmb,
    measurements: &[Measurement],
    births: &[BirthCandidate],
    motion: &MotionModel,
    sensor: &SensorModel,
    cfg: &UpdateConfig,
    strategy: Strategy,
) -> Result<UpdateOutput> {
    let mut shared = Shared::new(measurements, births, motion, sensor)?;
    let mut slots: HashMap<(HistoryId, Vec<Label>), usize> = HashMap::new();
    let mut components: Vec<GlmbComponent> = Vec::new();
    let mut log_weights: Vec<Vec<f64>> = Vec::new();
    let mut associations: Vec<BTreeMap<Label, i32>> = Vec::new();

    for (ci, c) in prior.components().iter().enumerate() {
        if c.weight <= 0.0 {
            continue;
        }
        let problem = shared.problem(c)?;
        let exact = strategy == Strategy::Exhaustive
            || problem.psi.rows() + measurements.len() < cfg.exact_threshold;
        let maps: Vec<AssociationMap> = if exact {
            enumerate_maps(&problem.psi)
        } else {
            let sweeps = ((cfg.gibbs_iterations as f64 * c.weight).ceil() as usize).max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, "gibbs", ci as u64, 0));
            let initial = AssociationMap::new(
                (0..problem.psi.rows())
                    .map(|r| if problem.psi.score(r, 0) > 0.0 { 0 } else { -1 })
                    .collect(),
            );
            std::iter::once(initial)
                .chain(gibbs_sample_with(&problem.psi, sweeps, &mut rng).into_iter().map(|(m, _)| m))
                .collect()
        };
        let mut seen = std::collections::HashSet::new();
        for map in maps {
            if !seen.insert(map.assignment.clone()) {
                continue;
            }
            let lw = problem.log_weight(&map);
            if lw == f64::NEG_INFINITY {
                continue;
            }
            let (comp, assoc) = problem.component(&map, measurements);
            let key = (comp.history, comp.densities.keys().copied().collect::<Vec<_>>());
            match slots.get(&key) {
                Some(&i) => log_weights[i].push(lw),
                None => {
                    slots.insert(key, components.len());
                    components.push(comp);
                    log_weights.push(vec![lw]);
                    associations.push(assoc);
                }
            }
        }
    }

    let max_lw = log_weights
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_lw.is_finite() {
        return Err(Error::AllZeroWeights);
    }
    for (c, lws) in components.iter_mut().zip(&log_weights) {
        c.weight = lws.iter().map(|lw| (lw - max_lw).exp()).sum();
    }
    let by_key: HashMap<(HistoryId, Vec<Label>), BTreeMap<Label, i32>> = components
        .iter()
        .zip(associations)
        .map(|(c, a)| ((c.history, c.densities.keys().copied().collect()), a))
        .collect();

    let mut posterior = LabeledGlmb::from_components(components).normalize()?;
    if strategy == Strategy::Configured {
        posterior = posterior.truncate(cfg.requested_components, 0.0)?;
    }
    let associations = posterior
        .components()
        .iter()
        .map(|c| {
            by_key
                .get(&(c.history, c.densities.keys().copied().collect()))
                .cloned()
                .unwrap_or_default()
        })
        .collect();
    Ok(UpdateOutput {
        posterior,
        associations,
    })
}

/// Joint prediction/update of one group: at most `requested_components`
/// posterior components, drawn by Gibbs sampling or, for small problems,
/// by exact enumeration.
pub fn joint_update(
    prior: &LabeledGlmb,
    measurements: &[Measurement],
    births: &[BirthCandidate],
    motion: &MotionModel,
    sensor: &SensorModel,
    cfg: &UpdateConfig,
) -> Result<LabeledGlmb> {
    joint_update_detailed(prior, measurements, births, motion, sensor, cfg).map(|o| o.posterior)
}

/// [`joint_update`], also reporting the association of each component.
pub fn joint_update_detailed(
    prior: &LabeledGlmb,
    measurements: &[Measurement],
    births: &[BirthCandidate],
    motion: &MotionModel,
    sensor: &SensorModel,
    cfg: &UpdateConfig,
) -> Result<UpdateOutput> {
    run_update(prior, measurements, births, motion, sensor, cfg, Strategy::Configured)
}

/// Exact posterior over every valid association map, without truncation.
pub fn exhaustive_update(
    prior: &LabeledGlmb,
    measurements: &[Measurement],
    births: &[BirthCandidate],
    motion: &MotionModel,
    sensor: &SensorModel,
) -> Result<LabeledGlmb> {
    exhaustive_update_detailed(prior, measurements, births, motion, sensor).map(|o| o.posterior)
}

pub fn exhaustive_update_detailed(
    prior: &LabeledGlmb,
    measurements: &[Measurement],
    births: &[BirthCandidate],
    motion: &MotionModel,
    sensor: &SensorModel,
) -> Result<UpdateOutput> {
    let labels = prior.label_universe().len() + births.len();
    if labels > EXHAUSTIVE_MAX_LABELS || measurements.len() > EXHAUSTIVE_MAX_MEASUREMENTS {
        return Err(Error::ProblemTooLarge {
            labels,
            measurements: measurements.len(),
        });
    }
    run_update(
        prior,
        measurements,
        births,
        motion,
        sensor,
        &UpdateConfig::default(),
        Strategy::Exhaustive,
    )
}

#[cfg(test)]
mod tests;
