//! Forward and backward Kalman filters on balanced models with intermittent data.
//!
//! Both passes run in balanced coordinates, starting from the uninformative
//! boundary `x = 0`, `Q = I`. Continuous models are filtered step by step on the
//! grid; discrete models (including exactly discretized continuous ones) use the
//! discrete recursion. On `ProcessValues` gaps the forward pass absorbs `Δy` at the
//! gap end and the backward pass at the gap start; interior gap nodes see neither.

mod continuous;
mod discrete;
mod pattern;
mod step;

use nalgebra::{DMatrix, DVector};

pub use pattern::{Availability, GapMode, Interval, Layout, ObservationPattern, Segment};
pub use step::{free_step, predictive_step, StepModel};

use crate::error::{Error, Result};
use crate::model::{BalancedModel, TimeKind};
use crate::numerics::{min_eigenvalue, TimeGrid};
use crate::simulate::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Estimates and error covariances of one filtering pass, one entry per node.
///
/// Forward: `x_-`, `Q_-`, `K_-`. Backward: `x̄_+`, `Q̄_+`, `K̄_+`. Gains are zero on
/// steps without a data update.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub direction: Direction,
    pub grid: TimeGrid,
    pub x: Vec<DVector<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub gain: Vec<DMatrix<f64>>,
    /// Nodes where a discrete gap update replaced the free evolution.
    pub jumps: Vec<usize>,
}

impl FilterResult {
    fn check_spd(&self) -> Result<()> {
        for (k, q) in self.q.iter().enumerate() {
            let lo = min_eigenvalue(q);
            if !(lo > 0.0) {
                return Err(Error::NotSpd {
                    t: Some(self.grid.time(k)),
                    min_eig: lo,
                    max_eig: crate::numerics::eig_extremes(q).1,
                });
            }
        }
        Ok(())
    }
}

fn check_inputs(bal: &BalancedModel, traj: &Trajectory, layout: &Layout) -> Result<()> {
    let grid = bal.system().grid();
    if traj.grid != *grid {
        return Err(Error::PatternMismatch(format!(
            "trajectory grid ({} steps of {}) differs from the model grid ({} steps of {})",
            traj.grid.steps(),
            traj.grid.h(),
            grid.steps(),
            grid.h()
        )));
    }
    if traj.y.first().map(|y| y.len()) != Some(bal.system().m()) {
        return Err(Error::PatternMismatch("trajectory output dimension differs from the model".into()));
    }
    let missing = |k: usize| Error::PatternMismatch(format!("no output data at t = {}", grid.time(k)));
    for k in (0..grid.steps()).filter(|&k| layout.step_active(k)) {
        if traj.dy(k).iter().any(|v| !v.is_finite()) {
            return Err(missing(k));
        }
    }
    for g in layout.delta_y_gaps() {
        if traj.delta_y(g.from, g.to).iter().any(|v| !v.is_finite()) {
            return Err(missing(g.to));
        }
    }
    Ok(())
}

fn prepare(bal: &BalancedModel, pattern: &ObservationPattern, traj: &Trajectory) -> Result<(BalancedModel, Layout)> {
    let layout = pattern.resolve(bal.system().grid())?;
    check_inputs(bal, traj, &layout)?;
    let model = if layout.mode() == GapMode::SignalLoss {
        bal.with_signal_mask(layout.observed_steps().to_vec())?
    } else {
        bal.clone()
    };
    Ok((model, layout))
}

/// Causal estimate `x_-(t)` of the state from the data recorded before `t`.
pub fn forward_filter(
    bal: &BalancedModel,
    pattern: &ObservationPattern,
    traj: &Trajectory,
) -> Result<FilterResult> {
    let (model, layout) = prepare(bal, pattern, traj)?;
    let out = match model.kind() {
        TimeKind::Continuous => continuous::forward(&model, &layout, traj)?,
        TimeKind::Discrete => discrete::forward(&model, &layout, traj)?,
    };
    out.check_spd()?;
    Ok(out)
}

/// Anticausal estimate `x̄_+(t)` of the state from the data recorded after `t`.
pub fn backward_filter(
    bal: &BalancedModel,
    pattern: &ObservationPattern,
    traj: &Trajectory,
) -> Result<FilterResult> {
    let (model, layout) = prepare(bal, pattern, traj)?;
    let out = match model.kind() {
        TimeKind::Continuous => continuous::backward(&model, &layout, traj)?,
        TimeKind::Discrete => discrete::backward(&model, &layout, traj)?,
    };
    out.check_spd()?;
    Ok(out)
}
