//! State-space conventions: 2-D constant-velocity states `[x, y, vx, vy]`
//! in metres and metres per second, with position measurements `[x, y]`.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::hash::StableHasher;

pub type State = Vector4<f64>;
pub type StateCov = Matrix4<f64>;
pub type Measurement = Vector2<f64>;
pub type MeasCov = Matrix2<f64>;

/// Gaussian single-object density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleObjectDensity {
    pub mean: State,
    pub cov: StateCov,
}

impl SingleObjectDensity {
    pub fn new(mean: State, cov: StateCov) -> Self {
        Self { mean, cov }
    }

    pub fn position(&self) -> Measurement {
        Measurement::new(self.mean[0], self.mean[1])
    }

    /// Symmetric within `1e-9` relative tolerance and positive definite.
    pub fn is_valid(&self) -> bool {
        is_symmetric(&self.cov, 1e-9) && self.cov.cholesky().is_some()
    }

    /// Bit-level identity of the density parameters.
    pub fn fingerprint(&self) -> u64 {
        let mut h = StableHasher::new(0x5d);
        for v in self.mean.iter().chain(self.cov.iter()) {
            h.write_f64(*v);
        }
        h.finish()
    }
}

pub fn is_symmetric<const N: usize>(
    m: &nalgebra::SMatrix<f64, N, N>,
    rel_tol: f64,
) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= rel_tol * scale
}

/// Restores exact symmetry after floating-point round-off.
pub fn symmetrize<const N: usize>(m: &nalgebra::SMatrix<f64, N, N>) -> nalgebra::SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}
