#![allow(dead_code)]

use balfuse::filtering::{GapMode, Interval, ObservationPattern};
use balfuse::model::{balance, propagate_covariance, stationary_covariance};
use balfuse::simulate::{discrete_reference, simulate, Trajectory};
use balfuse::{BalancedModel, LtvSystem, TimeGrid, TimeKind};
use nalgebra::{DMatrix, DVector};

pub fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

/// Second-order example: position observed in unit-intensity noise, stationary start.
pub fn example_system(t_end: f64, h: f64) -> LtvSystem {
    let a = m(2, 2, &[0.0, 1.0, -0.3, -0.7]);
    let b = m(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    let p0 = stationary_covariance(TimeKind::Continuous, &a, &b).unwrap();
    LtvSystem::new(
        TimeKind::Continuous,
        TimeGrid::new(0.0, t_end, h).unwrap(),
        a,
        b,
        m(1, 2, &[1.0, 0.0]),
        m(1, 2, &[0.0, 1.0]),
        p0,
    )
    .unwrap()
}

pub fn example_balanced(t_end: f64, h: f64) -> BalancedModel {
    let sys = example_system(t_end, h);
    balance(&sys, &propagate_covariance(&sys).unwrap()).unwrap()
}

/// Exactly discretized example on `[0, 5]` with step 0.05, plus data sampled from
/// the continuous model at step 0.01.
pub fn reference(seed: u64) -> (BalancedModel, Trajectory) {
    let bal = example_balanced(5.0, 0.01);
    let traj = simulate(bal.system(), seed).unwrap().subsample(5).unwrap();
    let disc = discrete_reference(&bal, &traj.grid).unwrap();
    (disc, traj)
}

pub fn pattern(mode: GapMode, spec: &[(f64, f64, bool)]) -> ObservationPattern {
    let intervals = spec
        .iter()
        .map(|&(s, e, obs)| if obs { Interval::observed(s, e) } else { Interval::gap(s, e) })
        .collect();
    ObservationPattern::new(mode, intervals).unwrap()
}

pub fn three_interval(mode: GapMode) -> ObservationPattern {
    pattern(mode, &[(0.0, 1.5, true), (1.5, 3.5, false), (3.5, 5.0, true)])
}

pub fn max_vec_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}

pub fn max_mat_diff(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

pub fn max_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.max()
}
