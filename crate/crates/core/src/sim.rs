//! Ground truth and measurement generation.
//!
//! New objects appear at Poisson rates inside birth windows, start at a
//! point drawn from a Gaussian mixture whose covariances are inverse-Wishart
//! draws, move at constant velocity, and die after a sampled lifetime or on
//! leaving the region.

use nalgebra::Matrix2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::linalg::{Measurement, State};
use crate::metrics::Track;
use crate::models::Region;

/// Births per scan during `[start, end]`, Poisson with mean `rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirthWindow {
    pub start: u32,
    pub end: u32,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub duration: u32,
    pub dt: f64,
    pub region: Region,
    pub birth_windows: Vec<BirthWindow>,
    pub birth_mixture_components: usize,
    pub mixture_scale_matrix: [[f64; 2]; 2],
    pub wishart_dof: u32,
    pub speed_range: (f64, f64),
    pub lifetime_range: (u32, u32),
    pub meas_noise_sigma: f64,
    pub detection_prob: f64,
    pub clutter_rate: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    /// Desk-scale profile: peak of roughly 150 objects, 100 false alarms
    /// per scan, 200 scans.
    fn default() -> Self {
        Self {
            duration: 200,
            dt: 1.0,
            region: Region::new([0.0, 0.0], [1600.0, 900.0]),
            birth_windows: vec![
                BirthWindow { start: 1, end: 80, rate: 1.2 },
                BirthWindow { start: 1, end: 20, rate: 2.0 },
                BirthWindow { start: 40, end: 60, rate: 2.0 },
                BirthWindow { start: 120, end: 160, rate: 0.75 },
            ],
            birth_mixture_components: 20,
            mixture_scale_matrix: [[1000.0, 0.0], [0.0, 1000.0]],
            wishart_dof: 4,
            speed_range: (1.0, 8.0),
            lifetime_range: (80, 140),
            meas_noise_sigma: 0.15,
            detection_prob: 0.9,
            clutter_rate: 100.0,
            rng_seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !self.region.is_valid() {
            return bad("scenario region must have positive area");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.speed_range.0 < 0.0 || self.speed_range.0 > self.speed_range.1 {
            return bad("speed range must be ordered and non-negative");
        }
        if self.lifetime_range.0 == 0 || self.lifetime_range.0 > self.lifetime_range.1 {
            return bad("lifetime range must be ordered and positive");
        }
        if self.birth_mixture_components == 0 {
            return bad("birth mixture needs at least one component");
        }
        if self.wishart_dof < 2 {
            return bad("inverse-Wishart degrees of freedom must be at least 2");
        }
        let s = Matrix2::from(self.mixture_scale_matrix).transpose();
        if (s - s.transpose()).abs().max() > 1e-9 * s.abs().max() || s.cholesky().is_none() {
            return bad("mixture scale matrix must be symmetric positive definite");
        }
        if self.birth_windows.iter().any(|w| w.start > w.end || !(w.rate >= 0.0)) {
            return bad("birth windows must be ordered with non-negative rates");
        }
        if !(0.0..=1.0).contains(&self.detection_prob) || !(self.clutter_rate >= 0.0) || !(self.meas_noise_sigma >= 0.0) {
            return bad("detection probability, clutter rate or noise out of range");
        }
        Ok(())
    }

    /// Expected number of births at scan `k`.
    pub fn birth_rate_at(&self, k: u32) -> f64 {
        self.birth_windows
            .iter()
            .filter(|w| w.start <= k && k <= w.end)
            .map(|w| w.rate)
            .sum()
    }
}

/// Measurements received at one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanData {
    pub scan: u32,
    pub measurements: Vec<Measurement>,
}

/// Inverse-Wishart draw via the Bartlett decomposition of the matching
/// Wishart.
fn inverse_wishart<R: Rng>(rng: &mut R, scale: &Matrix2<f64>, dof: u32) -> Matrix2<f64> {
    let inv = scale.try_inverse().expect("scale validated as positive definite");
    let l = inv.cholesky().expect("scale validated as positive definite").l();
    let mut a = Matrix2::zeros();
    for i in 0..2 {
        let chi = ChiSquared::new((dof - i as u32) as f64).expect("positive dof");
        a[(i, i)] = chi.sample(rng).sqrt();
    }
    a[(1, 0)] = StandardNormal.sample(rng);
    let w = l * a * a.transpose() * l.transpose();
    w.try_inverse().expect("Wishart draw is positive definite")
}

struct BirthMixture {
    means: Vec<[f64; 2]>,
    chol: Vec<Matrix2<f64>>,
}

impl BirthMixture {
    fn new<R: Rng>(rng: &mut R, cfg: &ScenarioConfig) -> Self {
        let scale = Matrix2::from(cfg.mixture_scale_matrix).transpose();
        let r = &cfg.region;
        let means = (0..cfg.birth_mixture_components)
            .map(|_| [rng.random_range(r.min[0]..r.max[0]), rng.random_range(r.min[1]..r.max[1])])
            .collect();
        let chol = (0..cfg.birth_mixture_components)
            .map(|_| {
                inverse_wishart(rng, &scale, cfg.wishart_dof)
                    .cholesky()
                    .expect("positive definite")
                    .l()
            })
            .collect();
        Self { means, chol }
    }

    /// Draws a point inside `region`, retrying a bounded number of times and
    /// clamping as a last resort.
    fn sample<R: Rng>(&self, rng: &mut R, region: &Region) -> [f64; 2] {
        let mut p = [0.0; 2];
        for _ in 0..100 {
            let j = rng.random_range(0..self.means.len());
            let e = nalgebra::Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
            let d = self.chol[j] * e;
            p = [self.means[j][0] + d[0], self.means[j][1] + d[1]];
            if region.contains(&Measurement::new(p[0], p[1])) {
                return p;
            }
        }
        [p[0].clamp(region.min[0], region.max[0]), p[1].clamp(region.min[1], region.max[1])]
    }
}

/// Constant-velocity trajectory born at `birth`, alive for at most
/// `lifetime` scans and cut at the first scan outside `region` or after
/// `last_scan`.
pub fn constant_velocity_track(
    id: impl Into<String>,
    birth: u32,
    position: [f64; 2],
    velocity: [f64; 2],
    lifetime: u32,
    dt: f64,
    last_scan: u32,
    region: &Region,
) -> Track {
    let end = birth.saturating_add(lifetime - 1).min(last_scan);
    let mut t = Track::new(id);
    for k in birth..=end {
        let s = (k - birth) as f64 * dt;
        let x = position[0] + velocity[0] * s;
        let y = position[1] + velocity[1] * s;
        if !region.contains(&Measurement::new(x, y)) {
            break;
        }
        t.insert(k, State::new(x, y, velocity[0], velocity[1]));
    }
    t
}

/// Ground-truth tracks, ordered by birth.
pub fn generate_truth(cfg: &ScenarioConfig) -> Vec<Track> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, "truth", 0, 0));
    let mixture = BirthMixture::new(&mut rng, cfg);
    let mut out = Vec::new();
    for k in 1..=cfg.duration {
        let rate = cfg.birth_rate_at(k);
        if rate <= 0.0 {
            continue;
        }
        let count = Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize;
        for _ in 0..count {
            let pos = mixture.sample(&mut rng, &cfg.region);
            let course = rng.random_range(0.0..std::f64::consts::TAU);
            let speed = if cfg.speed_range.0 < cfg.speed_range.1 {
                rng.random_range(cfg.speed_range.0..=cfg.speed_range.1)
            } else {
                cfg.speed_range.0
            };
            let lifetime = rng.random_range(cfg.lifetime_range.0..=cfg.lifetime_range.1);
            let vel = [speed * course.cos(), speed * course.sin()];
            let id = format!("truth-{}", out.len());
            let t = constant_velocity_track(id, k, pos, vel, lifetime, cfg.dt, cfg.duration, &cfg.region);
            if !t.is_empty() {
                out.push(t);
            }
        }
    }
    out
}

/// Object positions alive at each scan `1..=duration`.
pub fn truth_by_scan(truth: &[Track], duration: u32) -> Vec<Vec<State>> {
    let mut by_scan = vec![Vec::new(); duration as usize + 1];
    for t in truth {
        for (k, s) in t.iter() {
            if (1..=duration).contains(&k) {
                by_scan[k as usize].push(*s);
            }
        }
    }
    by_scan
}

/// Detections and clutter for every scan, shuffled per scan.
pub fn generate_measurements(truth: &[Track], cfg: &ScenarioConfig) -> Vec<ScanData> {
    let by_scan = truth_by_scan(truth, cfg.duration);
    let noise = Normal::new(0.0, cfg.meas_noise_sigma).expect("noise validated");
    let r = &cfg.region;
    (1..=cfg.duration)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, "measurements", k as u64, 0));
            let mut z = Vec::new();
            for s in &by_scan[k as usize] {
                if rng.random_bool(cfg.detection_prob) {
                    let m = Measurement::new(s[0] + noise.sample(&mut rng), s[1] + noise.sample(&mut rng));
                    if r.contains(&m) {
                        z.push(m);
                    }
                }
            }
            let n_clutter = if cfg.clutter_rate > 0.0 {
                Poisson::new(cfg.clutter_rate).expect("positive rate").sample(&mut rng) as usize
            } else {
                0
            };
            for _ in 0..n_clutter {
                z.push(Measurement::new(
                    rng.random_range(r.min[0]..r.max[0]),
                    rng.random_range(r.min[1]..r.max[1]),
                ));
            }
            z.shuffle(&mut rng);
            ScanData {
                scan: k,
                measurements: z,
            }
        })
        .collect()
}

/// Truth and measurements for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth: Vec<Track>,
    pub scans: Vec<ScanData>,
}

pub fn simulate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let truth = generate_truth(cfg);
    let scans = generate_measurements(&truth, cfg);
    Ok(Scenario { truth, scans })
}

/// True number of objects at each scan `1..=duration` (index 0 unused).
pub fn true_cardinality(truth: &[Track], duration: u32) -> Vec<usize> {
    truth_by_scan(truth, duration).iter().map(|v| v.len()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(cfg: ScenarioConfig) -> ScenarioConfig {
        ScenarioConfig {
            clutter_rate: 0.0,
            ..cfg
        }
    }

    #[test]
    fn default_config_is_valid() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn zero_birth_rate_gives_no_tracks() {
        let cfg = ScenarioConfig {
            birth_windows: vec![BirthWindow { start: 1, end: 200, rate: 0.0 }],
            ..Default::default()
        };
        assert!(generate_truth(&cfg).is_empty());
    }

    #[test]
    fn constant_velocity_displacement() {
        let region = Region::new([-100.0, -100.0], [100.0, 100.0]);
        let t = constant_velocity_track("a", 3, [0.0, 0.0], [2.0, 0.0], 10, 1.0, 100, &region);
        assert_eq!(t.len(), 10);
        assert_eq!(t.times().first(), Some(&3));
        for w in t.states().windows(2) {
            assert_eq!(((w[1] - w[0]).fixed_rows::<2>(0)).norm(), 2.0);
        }
        // leaving the region ends the track
        let t = constant_velocity_track("b", 1, [95.0, 0.0], [2.0, 0.0], 10, 1.0, 100, &region);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn steady_cardinality_matches_birth_death_expectation() {
        // no exits: huge region, slow objects
        let cfg = ScenarioConfig {
            duration: 300,
            region: Region::new([0.0, 0.0], [1e6, 1e6]),
            birth_windows: vec![BirthWindow { start: 1, end: 300, rate: 1.0 }],
            mixture_scale_matrix: [[1e6, 0.0], [0.0, 1e6]],
            speed_range: (1.0, 2.0),
            lifetime_range: (50, 70),
            clutter_rate: 0.0,
            ..Default::default()
        };
        let mut mean = 0.0;
        for seed in 0..20 {
            let c = ScenarioConfig {
                rng_seed: seed,
                ..cfg.clone()
            };
            mean += true_cardinality(&generate_truth(&c), c.duration)[200] as f64 / 20.0;
        }
        // rate times mean lifetime
        let expected = 1.0 * 60.0;
        assert!((mean - expected).abs() <= 0.1 * expected, "{mean}");
    }

    #[test]
    fn measurement_examples() {
        let cfg = ScenarioConfig {
            detection_prob: 0.0,
            ..quiet(ScenarioConfig::default())
        };
        let truth = generate_truth(&cfg);
        assert!(!truth.is_empty());
        assert!(generate_measurements(&truth, &cfg).iter().all(|s| s.measurements.is_empty()));

        let cfg = ScenarioConfig {
            detection_prob: 1.0,
            meas_noise_sigma: 0.0,
            ..quiet(ScenarioConfig::default())
        };
        let truth = generate_truth(&cfg);
        let by_scan = truth_by_scan(&truth, cfg.duration);
        for s in generate_measurements(&truth, &cfg) {
            let mut got: Vec<[u64; 2]> = s.measurements.iter().map(|m| [m[0].to_bits(), m[1].to_bits()]).collect();
            let mut want: Vec<[u64; 2]> = by_scan[s.scan as usize].iter().map(|x| [x[0].to_bits(), x[1].to_bits()]).collect();
            got.sort();
            want.sort();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn detection_fraction_is_binomial() {
        let region = Region::new([-1e4, -1e4], [1e4, 1e4]);
        // 500 objects over 200 scans, far from the border
        let truth: Vec<Track> = (0..500)
            .map(|i| constant_velocity_track(format!("{i}"), 1, [i as f64, 0.0], [0.0, 1.0], 200, 1.0, 200, &region))
            .collect();
        let cfg = ScenarioConfig {
            region,
            ..quiet(ScenarioConfig::default())
        };
        let total: usize = generate_measurements(&truth, &cfg).iter().map(|s| s.measurements.len()).sum();
        let n = 500.0 * 200.0;
        let frac = total as f64 / n;
        let se = (0.9 * 0.1 / n).sqrt();
        assert!((frac - 0.9).abs() < 3.0 * se, "{frac}");
    }

    #[test]
    fn clutter_mean_matches_poisson() {
        let cfg = ScenarioConfig::default();
        let scans = generate_measurements(&[], &cfg);
        let n = scans.len() as f64;
        let mean = scans.iter().map(|s| s.measurements.len()).sum::<usize>() as f64 / n;
        assert!((mean - cfg.clutter_rate).abs() < 3.0 * (cfg.clutter_rate / n).sqrt());
        assert!(scans.iter().flat_map(|s| &s.measurements).all(|z| cfg.region.contains(z)));
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = ScenarioConfig::default();
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = ScenarioConfig {
            rng_seed: 2,
            ..cfg.clone()
        };
        assert_ne!(simulate(&cfg).unwrap().truth, simulate(&other).unwrap().truth);
    }

    #[test]
    fn inverse_wishart_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scale = Matrix2::new(1000.0, 0.0, 0.0, 1000.0);
        let n = 200_000;
        let mut acc = Matrix2::zeros();
        for _ in 0..n {
            acc += inverse_wishart(&mut rng, &scale, 6);
        }
        // E = scale / (dof - p - 1) with p = 2
        let mean = acc / n as f64;
        assert!((mean[(0, 0)] - 1000.0 / 3.0).abs() < 0.02 * 1000.0 / 3.0, "{mean}");
        assert!(mean[(0, 1)].abs() < 5.0);
    }
}
