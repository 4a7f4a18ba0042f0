//! Dense Gaussian conditioning on the whole record.
//!
//! Every state `x_k` and every observation is written as a linear map of the
//! independent standard normals `(z0, w_0, ..., w_{N-1})`, so all covariances
//! follow from matrix products. Nothing here shares code with the filters.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filtering::{GapMode, ObservationPattern};
use crate::model::{LtvSystem, TimeKind};
use crate::numerics::{sqrtm_spd, symmetrize};
use crate::simulate::Trajectory;

/// Which records condition the estimate at node `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleView {
    /// Records ending at or before `t`, or starting at or after `t`.
    Smoothed,
    /// Records ending at or before `t`.
    Filtered,
    /// Records starting at or after `t`.
    BackwardFiltered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleOptions {
    pub view: OracleView,
    /// Also condition on gap increments `Δy` whose window contains `t` in its interior.
    pub include_straddling: bool,
}

impl OracleOptions {
    pub fn new(view: OracleView) -> Self {
        Self {
            view,
            include_straddling: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub mean: Vec<DVector<f64>>,
    pub cov: Vec<DMatrix<f64>>,
}

struct Record {
    start: usize,
    end: usize,
    map: DMatrix<f64>,
    value: DVector<f64>,
}

/// Smoothed conditional mean and covariance of `x(t_k)` at every node.
pub fn batch_oracle(
    sys: &LtvSystem,
    pattern: &ObservationPattern,
    traj: &Trajectory,
) -> Result<OracleResult> {
    batch_oracle_with(sys, pattern, traj, OracleOptions::new(OracleView::Smoothed))
}

pub fn batch_oracle_with(
    sys: &LtvSystem,
    pattern: &ObservationPattern,
    traj: &Trajectory,
    opts: OracleOptions,
) -> Result<OracleResult> {
    if sys.kind() != TimeKind::Discrete {
        return Err(Error::Invalid("the batch oracle needs a discrete (or exactly discretized) model".into()));
    }
    let grid = *sys.grid();
    if traj.grid != grid {
        return Err(Error::PatternMismatch("trajectory grid differs from the model grid".into()));
    }
    let layout = pattern.resolve(&grid)?;
    let (n, m, p, steps) = (sys.n(), sys.m(), sys.p(), grid.steps());
    let dim = n + steps * p;

    // state maps L_k with x_k = L_k ζ
    let mut states = Vec::with_capacity(grid.nodes());
    let mut l0 = DMatrix::zeros(n, dim);
    l0.columns_mut(0, n).copy_from(&sqrtm_spd(sys.p0())?);
    states.push(l0);
    let mut outputs = Vec::with_capacity(steps);
    for k in 0..steps {
        let a = sys.a().at(k);
        let signal = layout.mode() != GapMode::SignalLoss || layout.step_observed(k);
        let c = if signal { sys.c().at(k).clone() } else { DMatrix::zeros(m, n) };
        let lk = &states[k];
        let mut next = a * lk;
        let mut obs = &c * lk;
        let col = n + k * p;
        next.columns_mut(col, p).copy_from(sys.b().at(k));
        obs.columns_mut(col, p).copy_from(sys.d().at(k));
        states.push(next);
        outputs.push(obs);
    }

    let mut records = Vec::new();
    for k in 0..steps {
        if layout.step_active(k) {
            records.push(Record {
                start: k,
                end: k + 1,
                map: outputs[k].clone(),
                value: traj.dy(k),
            });
        }
    }
    for g in layout.delta_y_gaps() {
        let map = (g.from..g.to).fold(DMatrix::zeros(m, dim), |acc, j| acc + &outputs[j]);
        records.push(Record {
            start: g.from,
            end: g.to,
            map,
            value: traj.delta_y(g.from, g.to),
        });
    }

    let rows: usize = records.iter().map(|r| r.map.nrows()).sum();
    let mut y_map = DMatrix::zeros(rows, dim);
    let mut y_val = DVector::zeros(rows);
    let mut offset = 0;
    for r in &records {
        y_map.rows_mut(offset, r.map.nrows()).copy_from(&r.map);
        y_val.rows_mut(offset, r.map.nrows()).copy_from(&r.value);
        offset += r.map.nrows();
    }
    let yy = &y_map * y_map.transpose();

    let mut mean = Vec::with_capacity(grid.nodes());
    let mut cov = Vec::with_capacity(grid.nodes());
    for (t, lt) in states.iter().enumerate() {
        let mut idx = Vec::new();
        let mut offset = 0;
        for r in &records {
            let before = r.end <= t;
            let after = r.start >= t;
            let keep = match opts.view {
                OracleView::Smoothed => before || after || opts.include_straddling,
                OracleView::Filtered => before,
                OracleView::BackwardFiltered => after,
            };
            if keep {
                idx.extend(offset..offset + r.map.nrows());
            }
            offset += r.map.nrows();
        }
        let prior = lt * lt.transpose();
        if idx.is_empty() {
            mean.push(DVector::zeros(n));
            cov.push(symmetrize(&prior));
            continue;
        }
        let sub_yy = yy.select_rows(&idx).select_columns(&idx);
        let sub_val = y_val.select_rows(&idx);
        let xy = lt * y_map.select_rows(&idx).transpose();
        let chol = Cholesky::new(sub_yy).ok_or_else(|| Error::Singular {
            t: Some(grid.time(t)),
            what: "observation covariance of the batch record".into(),
        })?;
        let gain = chol.solve(&xy.transpose()).transpose();
        mean.push(&gain * sub_val);
        cov.push(symmetrize(&(prior - gain * xy.transpose())));
    }
    Ok(OracleResult { mean, cov })
}
