//! Constant-velocity Kalman filter over (position, velocity) with
//! position-only measurements.

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanEstimate {
    /// (position px, velocity px/s)
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl KalmanEstimate {
    pub fn new(x: f64, v: f64, var_x: f64, var_v: f64) -> Self {
        Self {
            mean: Vector2::new(x, v),
            cov: Matrix2::new(var_x, 0.0, 0.0, var_v),
        }
    }

    pub fn position(&self) -> f64 {
        self.mean[0]
    }

    pub fn velocity(&self) -> f64 {
        self.mean[1]
    }
}

/// Symmetric 2×2 positive-definite test via Sylvester's criterion.
pub fn is_spd(m: &Matrix2<f64>) -> bool {
    m[(0, 1)] == m[(1, 0)] && m[(0, 0)] > 0.0 && m.determinant() > 0.0 && m.iter().all(|v| v.is_finite())
}

fn symmetrize(m: Matrix2<f64>) -> Matrix2<f64> {
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    Matrix2::new(m[(0, 0)], off, off, m[(1, 1)])
}

fn checked(est: KalmanEstimate, stage: &'static str) -> Result<KalmanEstimate> {
    if !est.mean.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(stage));
    }
    if !is_spd(&est.cov) {
        return Err(Error::CovarianceCollapse(stage));
    }
    Ok(est)
}

/// Propagate through `F = [[1, dt], [0, 1]]` with white-acceleration
/// process noise of intensity `q`.
pub fn kalman_predict(est: &KalmanEstimate, dt: f64, q: f64) -> Result<KalmanEstimate> {
    let f = Matrix2::new(1.0, dt, 0.0, 1.0);
    let dt2 = dt * dt;
    let process = q * Matrix2::new(dt2 * dt / 3.0, dt2 / 2.0, dt2 / 2.0, dt);
    let cov = symmetrize(f * est.cov * f.transpose() + process);
    checked(
        KalmanEstimate {
            mean: f * est.mean,
            cov,
        },
        "predict",
    )
}

/// Fuse a position measurement `z` with variance `r`. Uses the Joseph form
/// so the posterior stays symmetric and never exceeds the prior.
pub fn kalman_update(est: &KalmanEstimate, z: f64, r: f64) -> Result<KalmanEstimate> {
    if r.is_nan() || r <= 0.0 {
        return Err(Error::Config(format!("measurement variance must be positive, got {r}")));
    }
    let h = RowVector2::new(1.0, 0.0);
    let innovation = z - est.mean[0];
    let s = est.cov[(0, 0)] + r;
    let gain = est.cov * h.transpose() / s;
    let mean = est.mean + gain * innovation;
    let i_kh = Matrix2::identity() - gain * h;
    let cov = symmetrize(i_kh * est.cov * i_kh.transpose() + gain * r * gain.transpose());
    checked(KalmanEstimate { mean, cov }, "update")
}
