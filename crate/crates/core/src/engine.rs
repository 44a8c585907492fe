//! The tracker loop.
//!
//! Each scan: gate every label, partition, refactor the prior onto the new
//! groups, route measurements, update all groups in parallel, then prune,
//! estimate and log.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{marginalize, refactor, Factor, FactoredGlmb, Truncation};
use crate::glmb::LabeledGlmb;
use crate::hash::derive_seed;
use crate::label::Label;
use crate::linalg::{Measurement, State};
use crate::metrics::Track;
use crate::models::{
    adaptive_births, predict_density, static_births, BirthCandidate, BirthMode, BirthModel, MotionModel, Region,
    SensorModel,
};
use crate::partition::{build_partition, project_box, route_measurements, BoundingBox, LabelPartition, PartitionConfig};
use crate::sim::ScanData;
use crate::update::{joint_update_detailed, UpdateConfig};

/// Scalar model parameters, as found in run configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub dt: f64,
    pub sigma_accel: f64,
    pub survival_prob: f64,
    pub meas_noise_sigma: f64,
    pub detection_prob: f64,
    pub clutter_rate: f64,
    pub region: Region,
    pub birth_prob: f64,
    pub birth_velocity_std: f64,
    pub birth_position_inflation: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            dt: 1.0,
            sigma_accel: 0.1,
            survival_prob: 0.999,
            meas_noise_sigma: 0.15,
            detection_prob: 0.9,
            clutter_rate: 100.0,
            region: Region::new([0.0, 0.0], [1600.0, 900.0]),
            birth_prob: 0.005,
            birth_velocity_std: 4.0,
            birth_position_inflation: 1.0,
        }
    }
}

impl ModelParams {
    pub fn build(&self) -> Result<Models> {
        if !(self.dt > 0.0) || !(self.sigma_accel >= 0.0) || !(self.meas_noise_sigma > 0.0) {
            return Err(Error::Config("dt and noise levels must be positive".into()));
        }
        if !(self.birth_velocity_std > 0.0) || !(self.birth_position_inflation > 0.0) {
            return Err(Error::Config("birth velocity spread and position inflation must be positive".into()));
        }
        let motion = MotionModel::constant_velocity(self.dt, self.sigma_accel, self.survival_prob);
        let sensor = SensorModel::position(self.meas_noise_sigma, self.detection_prob, self.clutter_rate, self.region);
        let mut birth = BirthModel::measurement_driven(self.birth_prob, self.birth_velocity_std);
        birth.position_inflation = self.birth_position_inflation;
        let models = Models { motion, sensor, birth };
        models.validate()?;
        Ok(models)
    }
}

/// Motion, sensor and birth models used by the tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub motion: MotionModel,
    pub sensor: SensorModel,
    pub birth: BirthModel,
}

impl Models {
    pub fn validate(&self) -> Result<()> {
        self.motion.validate()?;
        self.sensor.validate()?;
        self.birth.validate()
    }
}

/// Algorithm settings of the tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub update: UpdateConfig,
    pub partition: PartitionConfig,
    /// Components below this weight are dropped after each update.
    pub min_weight: f64,
    /// Labels whose existence falls below this are marginalised out.
    pub prune_existence: f64,
    /// A label stops being reported after `report_patience` consecutive
    /// scans with existence below `report_existence`.
    pub report_existence: f64,
    pub report_patience: u32,
    pub rng_seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            update: UpdateConfig::default(),
            partition: PartitionConfig::default(),
            min_weight: 1e-7,
            prune_existence: 0.01,
            report_existence: 0.1,
            report_patience: 3,
            rng_seed: 0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.update.validate()?;
        self.partition.validate()?;
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !unit(self.min_weight) || !unit(self.prune_existence) || !unit(self.report_existence) {
            return Err(Error::Config("weight and existence thresholds must lie in [0, 1)".into()));
        }
        if self.report_patience == 0 {
            return Err(Error::Config("report patience must be positive".into()));
        }
        Ok(())
    }

    fn truncation(&self) -> Truncation {
        Truncation::new(self.update.requested_components, self.min_weight)
    }
}

/// Per-scan statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanDiagnostics {
    pub scan: u32,
    pub measurements: usize,
    pub birth_candidates: usize,
    pub groups: usize,
    pub max_group_size: usize,
    pub gate_prob_used: f64,
    pub labels: usize,
    pub components: usize,
    pub estimated_cardinality: usize,
    pub mean_cardinality: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrackerState {
    pub factored: FactoredGlmb,
    /// Last processed scan.
    pub scan: u32,
    pub track_log: BTreeMap<Label, Track>,
    pub diagnostics: Vec<ScanDiagnostics>,
    /// Measurements of the last scan not used by any group's best
    /// component; they seed the next scan's births.
    pub unused: Vec<Measurement>,
    low_existence: HashMap<Label, u32>,
    terminated: HashSet<Label>,
}

impl TrackerState {
    /// A state expecting `first_scan` next.
    pub fn new(first_scan: u32) -> Self {
        Self {
            scan: first_scan.saturating_sub(1),
            ..Default::default()
        }
    }

    /// Estimates reported at the last processed scan.
    pub fn current_estimates(&self) -> BTreeMap<Label, State> {
        self.track_log
            .iter()
            .filter_map(|(l, t)| t.get(self.scan).map(|s| (*l, *s)))
            .collect()
    }
}

fn birth_candidates(state: &TrackerState, k: u32, models: &Models) -> Vec<BirthCandidate> {
    match models.birth.mode {
        BirthMode::MeasurementDriven => adaptive_births(&state.unused, k, &models.birth, &models.sensor)
            .into_iter()
            .map(|mut b| {
                // seeded from the previous scan, so predict to this one
                b.density = predict_density(&b.density, &models.motion);
                b
            })
            .collect(),
        BirthMode::Static => static_births(k, 0, &models.birth),
    }
}

fn gate_boxes(factored: &FactoredGlmb, births: &[BirthCandidate], models: &Models, gate: f64) -> Vec<BoundingBox> {
    let mut boxes = Vec::new();
    for f in factored.factors() {
        for l in &f.group {
            if let Some(c) = f.density.best_component_with(l) {
                let predicted = predict_density(&c.densities[l], &models.motion);
                boxes.push(project_box(*l, &predicted, &models.sensor, gate));
            }
        }
    }
    boxes.extend(births.iter().map(|b| project_box(b.label, &b.density, &models.sensor, gate)));
    boxes
}

/// Drops labels with existence below `threshold`, then makes the group the
/// remaining label universe. Returns `None` when nothing is left.
fn prune(density: LabeledGlmb, threshold: f64) -> Option<Factor> {
    let mut existence: BTreeMap<Label, f64> = BTreeMap::new();
    for c in density.components() {
        for l in c.labels() {
            *existence.entry(*l).or_default() += c.weight;
        }
    }
    let keep: BTreeSet<Label> = existence.into_iter().filter(|(_, e)| *e >= threshold).map(|(l, _)| l).collect();
    if keep.is_empty() {
        return None;
    }
    Some(Factor::from_density(marginalize(&density, &keep)))
}

/// Processes one scan.
pub fn step(state: &mut TrackerState, scan: &ScanData, models: &Models, cfg: &TrackerConfig) -> Result<()> {
    let k = scan.scan;
    if k != state.scan + 1 {
        return Err(Error::ScanOrder {
            expected: state.scan + 1,
            got: k,
        });
    }
    let started = Instant::now();
    let births = birth_candidates(state, k, models);
    let birth_index: HashMap<Label, usize> = births.iter().enumerate().map(|(i, b)| (b.label, i)).collect();

    let boxes = gate_boxes(&state.factored, &births, models, cfg.partition.initial_gate_prob);
    let partition = build_partition(&boxes, &cfg.partition);

    // existing labels of each group, in group order
    let existing: Vec<(usize, BTreeSet<Label>)> = partition
        .groups
        .iter()
        .enumerate()
        .map(|(gi, g)| (gi, g.iter().filter(|l| !birth_index.contains_key(l)).copied().collect::<BTreeSet<_>>()))
        .filter(|(_, g)| !g.is_empty())
        .collect();
    let prior_partition = LabelPartition {
        groups: existing.iter().map(|(_, g)| g.clone()).collect(),
        gate_prob_used: partition.gate_prob_used,
    };
    let refactored = refactor(&state.factored, &prior_partition, cfg.truncation())?;
    let mut priors: Vec<Option<LabeledGlmb>> = vec![None; partition.groups.len()];
    for ((gi, _), f) in existing.iter().zip(refactored.into_factors()) {
        priors[*gi] = Some(f.density);
    }

    // measurements are routed with full-size gates, whatever the backoff
    let routed = route_measurements(&partition, &boxes, &scan.measurements);

    let unit = LabeledGlmb::unit();
    let outputs = partition
        .groups
        .par_iter()
        .enumerate()
        .map(|(gi, group)| {
            let prior = priors[gi].as_ref().unwrap_or(&unit);
            let group_births: Vec<BirthCandidate> = group
                .iter()
                .filter_map(|l| birth_index.get(l).map(|&i| births[i].clone()))
                .collect();
            let z: Vec<Measurement> = routed.per_group[gi].iter().map(|&j| scan.measurements[j]).collect();
            let ucfg = UpdateConfig {
                rng_seed: derive_seed(cfg.rng_seed, "group", k as u64, gi as u64),
                ..cfg.update.clone()
            };
            joint_update_detailed(prior, &z, &group_births, &models.motion, &models.sensor, &ucfg).map_err(|e| {
                Error::GroupUpdate {
                    group: gi,
                    scan: k,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut used = vec![false; scan.measurements.len()];
    let mut factors = Vec::with_capacity(outputs.len());
    for (gi, out) in outputs.into_iter().enumerate() {
        for local in out.used_by_best() {
            used[routed.per_group[gi][local]] = true;
        }
        let posterior = out.posterior.truncate(cfg.update.requested_components, cfg.min_weight)?;
        if let Some(f) = prune(posterior, cfg.prune_existence) {
            factors.push(f);
        }
    }
    state.unused = scan
        .measurements
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(z, _)| *z)
        .collect();
    state.factored = FactoredGlmb::new(factors)?;

    // estimation and reporting
    let mut estimated = 0;
    let mut mean_cardinality = 0.0;
    let mut seen = HashSet::new();
    for f in state.factored.factors() {
        for l in &f.group {
            let e = f.density.existence(l);
            mean_cardinality += e;
            seen.insert(*l);
            let low = state.low_existence.entry(*l).or_default();
            if e < cfg.report_existence {
                *low += 1;
                if *low >= cfg.report_patience {
                    state.terminated.insert(*l);
                }
            } else {
                *low = 0;
            }
        }
        for (l, x) in f.density.extract_estimates() {
            if state.terminated.contains(&l) {
                continue;
            }
            estimated += 1;
            state
                .track_log
                .entry(l)
                .or_insert_with(|| Track::new(l.to_string()))
                .insert(k, x);
        }
    }
    state.low_existence.retain(|l, _| seen.contains(l));

    state.diagnostics.push(ScanDiagnostics {
        scan: k,
        measurements: scan.measurements.len(),
        birth_candidates: births.len(),
        groups: partition.groups.len(),
        max_group_size: partition.max_group_size(),
        gate_prob_used: partition.gate_prob_used,
        labels: state.factored.factors().iter().map(|f| f.group.len()).sum(),
        components: state.factored.factors().iter().map(|f| f.density.len()).sum(),
        estimated_cardinality: estimated,
        mean_cardinality,
        wall_time_s: started.elapsed().as_secs_f64(),
    });
    state.scan = k;
    Ok(())
}

/// Estimated tracks and per-scan diagnostics of a whole run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub tracks: Vec<Track>,
    pub diagnostics: Vec<ScanDiagnostics>,
}

/// Folds [`step`] over `scans`.
pub fn run(scans: &[ScanData], models: &Models, cfg: &TrackerConfig) -> Result<RunOutput> {
    let mut state = TrackerState::new(scans.first().map_or(1, |s| s.scan));
    for s in scans {
        step(&mut state, s, models, cfg)?;
    }
    Ok(RunOutput {
        tracks: state.track_log.into_values().collect(),
        diagnostics: state.diagnostics,
    })
}
