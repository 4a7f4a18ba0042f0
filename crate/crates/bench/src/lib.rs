//! Fixtures shared by the benchmarks.

use balfuse::filtering::{GapMode, Interval, ObservationPattern};
use balfuse::model::{balance, propagate_covariance, stationary_covariance};
use balfuse::{BalancedModel, LtvSystem, TimeGrid, TimeKind};
use nalgebra::DMatrix;

/// Damped oscillator with position observed in unit noise, started in stationarity.
pub fn oscillator(t_end: f64, h: f64) -> LtvSystem {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.3, -0.7]);
    let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    let p0 = stationary_covariance(TimeKind::Continuous, &a, &b).expect("stable");
    LtvSystem::new(
        TimeKind::Continuous,
        TimeGrid::new(0.0, t_end, h).expect("grid"),
        a,
        b,
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        p0,
    )
    .expect("well-formed")
}

pub fn balanced_oscillator(t_end: f64, h: f64) -> BalancedModel {
    let sys = oscillator(t_end, h);
    balance(&sys, &propagate_covariance(&sys).expect("covariance")).expect("balance")
}

/// Alternating observed and gap windows of length `t_end / 5`.
pub fn alternating(mode: GapMode, t_end: f64) -> ObservationPattern {
    let w = t_end / 5.0;
    let intervals = (0..5)
        .map(|i| {
            let (s, e) = (i as f64 * w, (i + 1) as f64 * w);
            if i % 2 == 0 {
                Interval::observed(s, e)
            } else {
                Interval::gap(s, e)
            }
        })
        .collect();
    ObservationPattern::new(mode, intervals).expect("pattern")
}
