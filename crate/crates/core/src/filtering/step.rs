use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{psd_inverse, symmetrize_mut};
use crate::simulate::GapUpdate;

/// One linear-Gaussian transition `x' = a x + u`, `obs = c x + v` with
/// `cov(u, v) = [[q, s], [s', r]]`, independent of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepModel {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl StepModel {
    pub fn from_update(u: &GapUpdate) -> Self {
        let (q, s, r) = u.noise_blocks();
        Self {
            a: u.a_d.clone(),
            c: u.c_d.clone(),
            q,
            s,
            r,
        }
    }

    /// The same transition read backward, assuming unit state covariance at both ends.
    ///
    /// Regressing `(x, obs)` on `x'` gives `x = a' x' + ū`, `obs = (c a' + s') x' + v̄` with
    /// `cov(ū) = I - a'a`, `cov(ū, v̄) = c' - a' c̄'` and `cov(v̄) = c c' + r - c̄ c̄'`.
    pub fn reversed(&self) -> Self {
        let n = self.a.nrows();
        let a_t = self.a.transpose();
        let c_bar = &self.c * &a_t + self.s.transpose();
        let mut q = DMatrix::identity(n, n) - &a_t * &self.a;
        symmetrize_mut(&mut q);
        let s = self.c.transpose() - &a_t * c_bar.transpose();
        let mut r = &self.c * self.c.transpose() + &self.r - &c_bar * c_bar.transpose();
        symmetrize_mut(&mut r);
        Self {
            a: a_t,
            c: c_bar,
            q,
            s,
            r,
        }
    }
}

/// Inverse of an innovation covariance with the relative jitter `1e-12 trace / m`.
pub(crate) fn innovation_inverse(s: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let eps = 1e-12 * s.trace() / s.nrows() as f64;
    psd_inverse(s, eps.max(0.0)).map_err(|e| e.at_time(t))
}

/// Predictive Kalman step: returns `(x', Q', K)` after reading `obs`.
pub fn predictive_step(
    m: &StepModel,
    x: &DVector<f64>,
    q: &DMatrix<f64>,
    obs: &DVector<f64>,
    t: f64,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let qc = q * m.c.transpose();
    let innov = &m.c * &qc + &m.r;
    let sinv = innovation_inverse(&innov, t)?;
    let gain = (&m.a * &qc + &m.s) * sinv;
    let x_next = &m.a * x + &gain * (obs - &m.c * x);
    let mut q_next = &m.a * q * m.a.transpose() + &m.q - &gain * &innov * gain.transpose();
    symmetrize_mut(&mut q_next);
    if x_next.iter().chain(q_next.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            t: Some(t),
            what: "discrete filter update".into(),
        });
    }
    Ok((x_next, q_next, gain))
}

/// Prediction without data: `x' = a x`, `Q' = a Q a' + q`.
pub fn free_step(m: &StepModel, x: &DVector<f64>, q: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mut q_next = &m.a * q * m.a.transpose() + &m.q;
    symmetrize_mut(&mut q_next);
    (&m.a * x, q_next)
}
