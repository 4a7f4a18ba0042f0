use nalgebra::{Cholesky, DMatrix, DVector};

use super::pattern::Layout;
use super::step::{predictive_step, StepModel};
use super::{Direction, FilterResult};
use crate::error::{Error, Result};
use crate::model::BalancedModel;
use crate::numerics::{ensure_finite, rk4_step, symmetrize_mut};
use crate::simulate::{exact_discretize_steps, Trajectory};

/// `R^{-1}` for `R = D D'`, interpolated on step `k`.
struct NoiseInverse<'a> {
    bal: &'a BalancedModel,
    constant: Option<DMatrix<f64>>,
}

impl<'a> NoiseInverse<'a> {
    fn new(bal: &'a BalancedModel) -> Result<Self> {
        let constant = if bal.system().d().is_constant() {
            Some(Self::invert(&bal.system().ddt_at(0, 0.0), bal.system().grid().t0())?)
        } else {
            None
        };
        Ok(Self { bal, constant })
    }

    fn invert(r: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
        Cholesky::new(r.clone())
            .map(|c| c.inverse())
            .ok_or_else(|| Error::Singular {
                t: Some(t),
                what: "output noise intensity D D'".into(),
            })
    }

    fn at(&self, k: usize, theta: f64) -> Result<DMatrix<f64>> {
        match &self.constant {
            Some(r) => Ok(r.clone()),
            None => {
                let t = self.bal.system().grid().time(k) + theta * self.bal.system().grid().h();
                Self::invert(&self.bal.system().ddt_at(k, theta), t)
            }
        }
    }
}

fn zeros_gain(n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::zeros(n, m)
}

pub(super) fn forward(bal: &BalancedModel, layout: &Layout, traj: &Trajectory) -> Result<FilterResult> {
    let sys = bal.system();
    let grid = *sys.grid();
    let (n, m) = (sys.n(), sys.m());
    let h = grid.h();
    let rinv = NoiseInverse::new(bal)?;
    let gaps = layout.delta_y_gaps();

    let gain_at = |k: usize, theta: f64, q: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        Ok((q * sys.c_at(k, theta).transpose() + &*sys.bdt_at(k, theta)) * rinv.at(k, theta)?)
    };

    let mut x = Vec::with_capacity(grid.nodes());
    let mut q = Vec::with_capacity(grid.nodes());
    let mut gain = Vec::with_capacity(grid.nodes());
    let mut jumps = Vec::new();
    x.push(DVector::zeros(n));
    q.push(sys.p0().clone());

    for k in 0..grid.steps() {
        let (xk, qk) = (&x[k], &q[k]);
        let a = sys.a_at(k, 0.0);
        let (x_next, mut q_next) = if layout.step_active(k) {
            let c = sys.c_at(k, 0.0);
            let kk = gain_at(k, 0.0, qk)?;
            let x_next = xk + &*a * xk * h + &kk * (traj.dy(k) - &*c * xk * h);
            let mut err = None;
            let q_next = rk4_step(qk, h, |th, qq| {
                let a = sys.a_at(k, th);
                let kg = match gain_at(k, th, qq) {
                    Ok(g) => g,
                    Err(e) => {
                        err.get_or_insert(e);
                        return DMatrix::zeros(n, n);
                    }
                };
                let aq = &*a * qq;
                let r = sys.ddt_at(k, th);
                &aq + aq.transpose() - &kg * &*r * kg.transpose() + &*sys.bbt_at(k, th)
            });
            if let Some(e) = err {
                return Err(e);
            }
            gain.push(kk);
            (x_next, q_next)
        } else {
            gain.push(zeros_gain(n, m));
            let q_next = rk4_step(qk, h, |th, qq| {
                let aq = &*sys.a_at(k, th) * qq;
                &aq + aq.transpose() + &*sys.bbt_at(k, th)
            });
            (xk + &*a * xk * h, q_next)
        };
        symmetrize_mut(&mut q_next);
        ensure_finite(&q_next, grid.time(k + 1), "forward error covariance")?;
        x.push(x_next);
        q.push(q_next);

        if let Some(g) = gaps.iter().find(|g| g.to == k + 1) {
            let update = exact_discretize_steps(sys, g.from, g.to)?;
            let (xj, qj, _) = predictive_step(
                &StepModel::from_update(&update),
                &x[g.from],
                &q[g.from],
                &traj.delta_y(g.from, g.to),
                grid.time(g.to),
            )?;
            x[k + 1] = xj;
            q[k + 1] = qj;
            jumps.push(k + 1);
        }
    }
    let last = grid.steps();
    if last > 0 && layout.step_active(last - 1) {
        gain.push(gain_at(last - 1, 1.0, &q[last])?);
    } else {
        gain.push(zeros_gain(n, m));
    }
    Ok(FilterResult {
        direction: Direction::Forward,
        grid,
        x,
        q,
        gain,
        jumps,
    })
}

/// Runs in reversed time `τ = -t` from `x̄_+(T) = 0`, `Q̄_+(T) = I`.
///
/// With `K̃ = (Q̄ C̄' - B̄ D') R^{-1}` (so `K̄_+ = -K̃`), each step reads
/// `x̄_k = x̄_{k+1} + h A' x̄_{k+1} + K̃ (Δy_k - h C̄ x̄_{k+1})` and
/// `dQ̄/dτ = A' Q̄ + Q̄ A - K̃ R K̃' + B̄ B̄'`, coefficients taken at node `k+1`.
pub(super) fn backward(bal: &BalancedModel, layout: &Layout, traj: &Trajectory) -> Result<FilterResult> {
    let sys = bal.system();
    let grid = *sys.grid();
    let (n, m) = (sys.n(), sys.m());
    let h = grid.h();
    let steps = grid.steps();
    let rinv = NoiseInverse::new(bal)?;
    let gaps = layout.delta_y_gaps();

    // B̄ = B in balanced coordinates
    let gain_at = |k: usize, theta: f64, q: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        Ok((q * bal.backward_c_at(k, theta).transpose() - &*sys.bdt_at(k, theta)) * rinv.at(k, theta)?)
    };

    let mut x = vec![DVector::zeros(n); grid.nodes()];
    let mut q = vec![DMatrix::zeros(n, n); grid.nodes()];
    let mut gain = vec![zeros_gain(n, m); grid.nodes()];
    let mut jumps = Vec::new();
    q[steps] = DMatrix::identity(n, n);

    for k in (0..steps).rev() {
        let (xk, qk) = (&x[k + 1], &q[k + 1]);
        let a_t = sys.a_at(k, 1.0).transpose();
        let (x_prev, mut q_prev) = if layout.step_active(k) {
            let cbar = bal.backward_c_at(k, 1.0);
            let kt = gain_at(k, 1.0, qk)?;
            let x_prev = xk + &a_t * xk * h + &kt * (traj.dy(k) - &cbar * xk * h);
            let mut err = None;
            let q_prev = rk4_step(qk, h, |s, qq| {
                let th = 1.0 - s;
                let kg = match gain_at(k, th, qq) {
                    Ok(g) => g,
                    Err(e) => {
                        err.get_or_insert(e);
                        return DMatrix::zeros(n, n);
                    }
                };
                let qa = qq * &*sys.a_at(k, th);
                let r = sys.ddt_at(k, th);
                qa.transpose() + &qa - &kg * &*r * kg.transpose() + &*sys.bbt_at(k, th)
            });
            if let Some(e) = err {
                return Err(e);
            }
            gain[k + 1] = -kt;
            (x_prev, q_prev)
        } else {
            let q_prev = rk4_step(qk, h, |s, qq| {
                let qa = qq * &*sys.a_at(k, 1.0 - s);
                qa.transpose() + &qa + &*sys.bbt_at(k, 1.0 - s)
            });
            (xk + &a_t * xk * h, q_prev)
        };
        symmetrize_mut(&mut q_prev);
        ensure_finite(&q_prev, grid.time(k), "backward error covariance")?;
        x[k] = x_prev;
        q[k] = q_prev;

        if let Some(g) = gaps.iter().find(|g| g.from == k) {
            let update = exact_discretize_steps(sys, g.from, g.to)?;
            let (xj, qj, _) = predictive_step(
                &StepModel::from_update(&update).reversed(),
                &x[g.to],
                &q[g.to],
                &traj.delta_y(g.from, g.to),
                grid.time(g.from),
            )?;
            x[k] = xj;
            q[k] = qj;
            jumps.push(k);
        }
    }
    if steps > 0 && layout.step_active(0) {
        gain[0] = -gain_at(0, 0.0, &q[0])?;
    }
    jumps.reverse();
    Ok(FilterResult {
        direction: Direction::Backward,
        grid,
        x,
        q,
        gain,
        jumps,
    })
}
