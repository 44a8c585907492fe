//! Linear-Gaussian single-object models: constant-velocity motion, position
//! sensor with uniform Poisson clutter, and static or measurement-driven
//! births.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::linalg::{symmetrize, MeasCov, Measurement, SingleObjectDensity, State, StateCov};

/// Axis-aligned rectangle in the measurement plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Region {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &Measurement) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn is_valid(&self) -> bool {
        self.width() > 0.0 && self.height() > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    pub transition: StateCov,
    pub process_noise: StateCov,
    pub survival_prob: f64,
}

impl MotionModel {
    /// Constant velocity over `dt` seconds with piecewise white acceleration
    /// of standard deviation `sigma_accel` on each axis.
    pub fn constant_velocity(dt: f64, sigma_accel: f64, survival_prob: f64) -> Self {
        #[rustfmt::skip]
        let transition = Matrix4::new(
            1.0, 0.0, dt, 0.0,
            0.0, 1.0, 0.0, dt,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        let q = sigma_accel * sigma_accel;
        let (a, b, c) = (dt.powi(4) / 4.0 * q, dt.powi(3) / 2.0 * q, dt * dt * q);
        #[rustfmt::skip]
        let process_noise = Matrix4::new(
            a,   0.0, b,   0.0,
            0.0, a,   0.0, b,
            b,   0.0, c,   0.0,
            0.0, b,   0.0, c,
        );
        Self {
            transition,
            process_noise,
            survival_prob,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.survival_prob > 0.0 && self.survival_prob <= 1.0) {
            return Err(Error::Config(format!("survival probability {} outside (0, 1]", self.survival_prob)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub observation: Matrix2x4<f64>,
    pub noise: MeasCov,
    pub detection_prob: f64,
    /// Expected number of false alarms per scan.
    pub clutter_rate: f64,
    pub region: Region,
}

impl SensorModel {
    /// Position sensor with isotropic noise `sigma` metres per axis.
    pub fn position(sigma: f64, detection_prob: f64, clutter_rate: f64, region: Region) -> Self {
        #[rustfmt::skip]
        let observation = Matrix2x4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
        );
        Self {
            observation,
            noise: Matrix2::identity() * (sigma * sigma),
            detection_prob,
            clutter_rate,
            region,
        }
    }

    pub fn clutter(&self) -> ClutterIntensity {
        ClutterIntensity {
            density: self.clutter_rate / self.region.area(),
            region: self.region,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.detection_prob) {
            return Err(Error::Config(format!("detection probability {} outside [0, 1]", self.detection_prob)));
        }
        if !(self.clutter_rate >= 0.0) {
            return Err(Error::Config(format!("clutter rate {} is negative", self.clutter_rate)));
        }
        if !self.region.is_valid() {
            return Err(Error::Config("surveillance region has no area".into()));
        }
        if self.noise.cholesky().is_none() {
            return Err(Error::Config("measurement noise is not positive definite".into()));
        }
        Ok(())
    }
}

/// Uniform clutter intensity over the surveillance region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutterIntensity {
    density: f64,
    region: Region,
}

impl ClutterIntensity {
    pub fn at(&self, z: &Measurement) -> f64 {
        if self.region.contains(z) {
            self.density
        } else {
            0.0
        }
    }

    /// Expected number of false alarms over the region.
    pub fn integral(&self) -> f64 {
        self.density * self.region.area()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BirthMode {
    Static,
    MeasurementDriven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticBirth {
    pub birth_prob: f64,
    pub density: SingleObjectDensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthModel {
    pub mode: BirthMode,
    pub static_components: Vec<StaticBirth>,
    pub adaptive_birth_prob: f64,
    pub adaptive_velocity_cov: MeasCov,
    /// Multiplier applied to the sensor noise for the position block of a
    /// measurement-driven birth.
    pub position_inflation: f64,
}

impl BirthModel {
    pub fn measurement_driven(birth_prob: f64, velocity_std: f64) -> Self {
        Self {
            mode: BirthMode::MeasurementDriven,
            static_components: Vec::new(),
            adaptive_birth_prob: birth_prob,
            adaptive_velocity_cov: Matrix2::identity() * (velocity_std * velocity_std),
            position_inflation: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: f64| r > 0.0 && r < 1.0;
        if !ok(self.adaptive_birth_prob) || !self.static_components.iter().all(|b| ok(b.birth_prob)) {
            return Err(Error::Config("birth probabilities must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// A label that may be born at the current scan.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthCandidate {
    pub label: Label,
    pub birth_prob: f64,
    pub density: SingleObjectDensity,
}

/// Kalman prediction.
pub fn predict_density(d: &SingleObjectDensity, m: &MotionModel) -> SingleObjectDensity {
    let f = &m.transition;
    SingleObjectDensity {
        mean: f * d.mean,
        cov: symmetrize(&(f * d.cov * f.transpose() + m.process_noise)),
    }
}

/// Measurement-independent part of a Kalman update, reusable across all
/// measurements of a scan.
#[derive(Debug, Clone)]
pub struct KalmanGain {
    predicted_measurement: Measurement,
    innovation_inv: MeasCov,
    log_norm: f64,
    gain: Matrix4x2<f64>,
    mean: State,
    posterior_cov: StateCov,
}

impl KalmanGain {
    pub fn new(d: &SingleObjectDensity, s: &SensorModel) -> Result<Self> {
        let h = &s.observation;
        let innovation_cov = symmetrize(&(h * d.cov * h.transpose() + s.noise));
        let chol = innovation_cov.cholesky().ok_or(Error::SingularInnovation)?;
        let innovation_inv = chol.inverse();
        let det = innovation_cov.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::SingularInnovation);
        }
        let gain = d.cov * h.transpose() * innovation_inv;
        let posterior_cov = symmetrize(&(d.cov - gain * innovation_cov * gain.transpose()));
        Ok(Self {
            predicted_measurement: h * d.mean,
            innovation_inv,
            log_norm: -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln(),
            gain,
            mean: d.mean,
            posterior_cov,
        })
    }

    /// Squared Mahalanobis distance of `z` from the predicted measurement.
    pub fn mahalanobis_sq(&self, z: &Measurement) -> f64 {
        let nu = z - self.predicted_measurement;
        (nu.transpose() * self.innovation_inv * nu)[(0, 0)]
    }

    /// `N(z; H m, S)`.
    pub fn likelihood(&self, z: &Measurement) -> f64 {
        (self.log_norm - 0.5 * self.mahalanobis_sq(z)).exp()
    }

    pub fn posterior(&self, z: &Measurement) -> SingleObjectDensity {
        let nu = z - self.predicted_measurement;
        SingleObjectDensity {
            mean: self.mean + self.gain * nu,
            cov: self.posterior_cov,
        }
    }
}

/// Returns `<g(z|.), p>` and the conditioned density.
pub fn measurement_likelihood(
    d: &SingleObjectDensity,
    z: &Measurement,
    s: &SensorModel,
) -> Result<(f64, SingleObjectDensity)> {
    let k = KalmanGain::new(d, s)?;
    Ok((k.likelihood(z), k.posterior(z)))
}

/// One birth candidate per measurement, labelled `(k, 0..n)` in input
/// order: position at the measurement with inflated sensor noise, velocity
/// zero-mean.
pub fn adaptive_births(
    unused: &[Measurement],
    k: u32,
    b: &BirthModel,
    s: &SensorModel,
) -> Vec<BirthCandidate> {
    let pos_cov = s.noise * b.position_inflation;
    unused
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let mut cov = StateCov::zeros();
            cov.fixed_view_mut::<2, 2>(0, 0).copy_from(&pos_cov);
            cov.fixed_view_mut::<2, 2>(2, 2).copy_from(&b.adaptive_velocity_cov);
            BirthCandidate {
                label: Label::new(k, i as u32),
                birth_prob: b.adaptive_birth_prob,
                density: SingleObjectDensity::new(State::new(z[0], z[1], 0.0, 0.0), cov),
            }
        })
        .collect()
}

/// Static birth candidates for scan `k`, labelled from `first_index`.
pub fn static_births(k: u32, first_index: u32, b: &BirthModel) -> Vec<BirthCandidate> {
    b.static_components
        .iter()
        .enumerate()
        .map(|(i, sb)| BirthCandidate {
            label: Label::new(k, first_index + i as u32),
            birth_prob: sb.birth_prob,
            density: sb.density.clone(),
        })
        .collect()
}
