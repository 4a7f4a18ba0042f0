use nalgebra::{DMatrix, DVector};

use super::pattern::Layout;
use super::step::{free_step, predictive_step, StepModel};
use super::{Direction, FilterResult};
use crate::error::Result;
use crate::model::BalancedModel;
use crate::simulate::{discrete_step_update, exact_discretize_steps, Trajectory};

pub(super) fn forward(bal: &BalancedModel, layout: &Layout, traj: &Trajectory) -> Result<FilterResult> {
    let sys = bal.system();
    let grid = *sys.grid();
    let (n, m) = (sys.n(), sys.m());
    let gaps = layout.delta_y_gaps();
    let mut x = vec![DVector::zeros(n)];
    let mut q = vec![sys.p0().clone()];
    let mut gain = Vec::with_capacity(grid.nodes());
    let mut jumps = Vec::new();
    for k in 0..grid.steps() {
        let model = StepModel::from_update(&discrete_step_update(sys, k));
        let (xn, qn) = if layout.step_active(k) {
            let (xn, qn, g) = predictive_step(&model, &x[k], &q[k], &traj.dy(k), grid.time(k + 1))?;
            gain.push(g);
            (xn, qn)
        } else {
            gain.push(DMatrix::zeros(n, m));
            free_step(&model, &x[k], &q[k])
        };
        x.push(xn);
        q.push(qn);
        if let Some(g) = gaps.iter().find(|g| g.to == k + 1) {
            let update = StepModel::from_update(&exact_discretize_steps(sys, g.from, g.to)?);
            let obs = traj.delta_y(g.from, g.to);
            let (xj, qj, _) = predictive_step(&update, &x[g.from], &q[g.from], &obs, grid.time(g.to))?;
            x[k + 1] = xj;
            q[k + 1] = qj;
            jumps.push(k + 1);
        }
    }
    gain.push(DMatrix::zeros(n, m));
    Ok(FilterResult {
        direction: Direction::Forward,
        grid,
        x,
        q,
        gain,
        jumps,
    })
}

/// Backward recursion built from the regression reversal of each forward step.
///
/// For a balanced model this is the backward system with `x̄(t) = x(t+1)`,
/// `x̄(t-1) = A' x̄(t) + H' w̄(t)` and output coefficients `C A' + D B'`, `C H' + D J'`.
pub(super) fn backward(bal: &BalancedModel, layout: &Layout, traj: &Trajectory) -> Result<FilterResult> {
    let sys = bal.system();
    let grid = *sys.grid();
    let (n, m) = (sys.n(), sys.m());
    let steps = grid.steps();
    let gaps = layout.delta_y_gaps();
    let mut x = vec![DVector::zeros(n); grid.nodes()];
    let mut q = vec![DMatrix::zeros(n, n); grid.nodes()];
    let mut gain = vec![DMatrix::zeros(n, m); grid.nodes()];
    let mut jumps = Vec::new();
    q[steps] = DMatrix::identity(n, n);
    for k in (0..steps).rev() {
        let model = StepModel::from_update(&discrete_step_update(sys, k)).reversed();
        let (xp, qp) = if layout.step_active(k) {
            let (xp, qp, g) = predictive_step(&model, &x[k + 1], &q[k + 1], &traj.dy(k), grid.time(k))?;
            gain[k + 1] = g;
            (xp, qp)
        } else {
            free_step(&model, &x[k + 1], &q[k + 1])
        };
        x[k] = xp;
        q[k] = qp;
        if let Some(g) = gaps.iter().find(|g| g.from == k) {
            let update = StepModel::from_update(&exact_discretize_steps(sys, g.from, g.to)?).reversed();
            let obs = traj.delta_y(g.from, g.to);
            let (xj, qj, _) = predictive_step(&update, &x[g.to], &q[g.to], &obs, grid.time(g.from))?;
            x[k] = xj;
            q[k] = qj;
            jumps.push(k);
        }
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
