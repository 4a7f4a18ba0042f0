use nalgebra::DMatrix;

use super::grid::{MatrixPath, TimeGrid};
use super::spd::symmetrize_mut;
use crate::error::{Error, Result};

/// One classical fourth-order Runge-Kutta step of length `h`.
///
/// `f(theta, x)` is the derivative at fraction `theta` (0, 1/2 or 1) of the step.
pub fn rk4_step<F>(x: &DMatrix<f64>, h: f64, mut f: F) -> DMatrix<f64>
where
    F: FnMut(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    let k1 = f(0.0, x);
    let k2 = f(0.5, &(x + &k1 * (0.5 * h)));
    let k3 = f(0.5, &(x + &k2 * (0.5 * h)));
    let k4 = f(1.0, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>, t: f64, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            t: Some(t),
            what: what.to_string(),
        })
    }
}

/// Integrates `dX/dt = rhs(k, theta, X)` over nodes `from..=to` of `grid`.
///
/// `rhs` receives the step index `k` and the fraction `theta` of the step
/// `[t_k, t_{k+1}]`. Returns one matrix per node, starting with `x0`. When
/// `symmetric` is set each iterate is symmetrized after the step.
pub fn integrate_matrix_ode<F>(
    grid: &TimeGrid,
    from: usize,
    to: usize,
    x0: DMatrix<f64>,
    symmetric: bool,
    mut rhs: F,
) -> Result<Vec<DMatrix<f64>>>
where
    F: FnMut(usize, f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    if from > to || to > grid.steps() {
        return Err(Error::Invalid(format!(
            "integration span {from}..={to} outside grid with {} steps",
            grid.steps()
        )));
    }
    ensure_finite(&x0, grid.time(from), "initial value")?;
    let mut path = Vec::with_capacity(to - from + 1);
    path.push(x0);
    for k in from..to {
        let mut next = rk4_step(path.last().unwrap(), grid.h(), |theta, x| rhs(k, theta, x));
        if symmetric {
            symmetrize_mut(&mut next);
        }
        ensure_finite(&next, grid.time(k + 1), "matrix ODE iterate")?;
        path.push(next);
    }
    Ok(path)
}

/// State transition matrix `Phi(t2, t1)` of `dPhi/dt = A(t) Phi` on the grid.
pub fn transition_matrix(
    grid: &TimeGrid,
    a: &MatrixPath,
    t1: f64,
    t2: f64,
) -> Result<DMatrix<f64>> {
    let k1 = grid.node(t1)?;
    let k2 = grid.node(t2)?;
    if k2 < k1 {
        return Err(Error::Invalid(format!(
            "transition matrix needs t1 <= t2 (got {t1} > {t2})"
        )));
    }
    let n = a.shape().0;
    let path = integrate_matrix_ode(grid, k1, k2, DMatrix::identity(n, n), false, |k, th, phi| {
        &*a.lerp(k, th) * phi
    })?;
    Ok(path.into_iter().last().unwrap())
}
