//! Deterministic invariant checks on one pipeline run.

use balfuse::filtering::{
    backward_filter, forward_filter, Availability, FilterResult, GapMode, Interval, ObservationPattern,
};
use balfuse::fusion::{batch_oracle_with, fuse, OracleOptions, OracleView, SmootherResult};
use balfuse::model::{balance_residual, propagate_covariance};
use balfuse::simulate::{discrete_reference, Trajectory};
use balfuse::{BalancedModel, Result, TimeGrid};
use nalgebra::{DMatrix, DVector};

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

pub fn max_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.max()
}

fn max_vec_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}

fn max_mat_diff(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}

/// Largest `‖A + A' + BB'‖_F` over the grid.
pub fn balance_identity(bal: &BalancedModel) -> f64 {
    balance_residual(bal.system()).0
}

/// Largest entry of `P(t) - I` when the balanced model is propagated from `I`.
pub fn covariance_drift(bal: &BalancedModel) -> Result<f64> {
    let cov = propagate_covariance(bal.system())?;
    let n = bal.system().n();
    let eye = DMatrix::<f64>::identity(n, n);
    Ok(cov.all().iter().map(|p| (p - &eye).amax()).fold(0.0, f64::max))
}

/// `(max λ_max - 1, min λ_min)` over all nodes.
pub fn q_bounds(res: &FilterResult) -> (f64, f64) {
    res.q.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), q| {
        (hi.max(max_eig(q) - 1.0), lo.min(min_eig(q)))
    })
}

/// Most negative eigenvalue of `Q_- - Q` and `Q̄_+ - Q`, sign flipped.
pub fn dominance_violation(fwd: &FilterResult, bwd: &FilterResult, sm: &SmootherResult) -> f64 {
    (0..sm.q.len())
        .map(|k| {
            let a = min_eig(&(&fwd.q[k] - &sm.q[k]));
            let b = min_eig(&(&bwd.q[k] - &sm.q[k]));
            -a.min(b)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest `trace Q - min(trace Q_-, trace Q̄_+)`; non-positive when the smoother never loses.
pub fn trace_excess(fwd: &FilterResult, bwd: &FilterResult, sm: &SmootherResult) -> f64 {
    (0..sm.q.len())
        .map(|k| sm.q[k].trace() - fwd.q[k].trace().min(bwd.q[k].trace()))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest growth of `trace Q_-` across a gap (end minus start), over all interior gaps.
pub fn gap_trace_growth(fwd: &FilterResult, pattern: &ObservationPattern) -> Result<Option<f64>> {
    let layout = pattern.resolve(&fwd.grid)?;
    let growth = layout
        .segments()
        .iter()
        .filter(|s| !s.observed)
        .map(|s| fwd.q[s.to].trace() - fwd.q[s.from].trace())
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))));
    Ok(growth)
}

/// Leading part of the trajectory, nodes `0..=steps`.
pub fn trajectory_window(traj: &Trajectory, steps: usize) -> Result<Trajectory> {
    Ok(Trajectory {
        grid: TimeGrid::from_steps(traj.grid.t0(), traj.grid.h(), steps)?,
        x: traj.x[..=steps].to_vec(),
        y: traj.y[..=steps].to_vec(),
        dw: traj.dw[..steps].to_vec(),
        seed: traj.seed,
        stream: traj.stream,
    })
}

/// The pattern restricted to `[t0, end]`.
pub fn pattern_window(pattern: &ObservationPattern, end: f64) -> Result<ObservationPattern> {
    let intervals: Vec<Interval> = pattern
        .intervals()
        .iter()
        .filter(|iv| iv.start < end)
        .map(|iv| Interval {
            end: iv.end.min(end),
            ..*iv
        })
        .collect();
    ObservationPattern::new(pattern.mode(), intervals)
}

/// Setup of the coarse comparison against the batch oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleWindow {
    /// Coarse step as a multiple of the model step.
    pub factor: usize,
    /// Number of coarse steps.
    pub steps: usize,
}

impl OracleWindow {
    /// Step near 0.05 and horizon at most 5, with every pattern endpoint on the coarse grid.
    pub fn choose(grid: &TimeGrid, pattern: &ObservationPattern) -> OracleWindow {
        let on_grid = |factor: usize| {
            let hc = grid.h() * factor as f64;
            pattern.intervals().iter().all(|iv| {
                [iv.start, iv.end].iter().all(|t| {
                    let r = (t - grid.t0()) / hc;
                    (r - r.round()).abs() < 1e-9 * r.abs().max(1.0)
                })
            })
        };
        let mut factor = ((0.05 / grid.h()).round() as usize).max(1);
        while factor > 1 && (grid.steps() % factor != 0 || !on_grid(factor)) {
            factor -= 1;
        }
        let coarse = grid.steps() / factor;
        let per_unit = 1.0 / (grid.h() * factor as f64);
        let steps = coarse.min((5.0 * per_unit).round() as usize).max(1);
        OracleWindow { factor, steps }
    }
}

/// Largest deviation of forward, backward and fused output from the batch oracle, plus
/// the effect of also conditioning on straddling gap increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleComparison {
    pub forward: f64,
    pub backward: f64,
    pub smoothed: f64,
    pub interior_delta_y: f64,
}

impl OracleComparison {
    pub fn max_error(&self) -> f64 {
        self.forward.max(self.backward).max(self.smoothed)
    }
}

/// Runs both filters and the oracle on the exactly discretized model over the window.
///
/// `bal` is the continuous balanced model and `traj` its trajectory on the model grid.
pub fn oracle_comparison(
    bal: &BalancedModel,
    traj: &Trajectory,
    pattern: &ObservationPattern,
    window: OracleWindow,
) -> Result<OracleComparison> {
    let fine_steps = window.steps * window.factor;
    let n = bal.system().n();
    let sys = bal.system().window(0, fine_steps, DMatrix::identity(n, n))?;
    let fine = BalancedModel::from_balanced(sys)?;
    let data = trajectory_window(traj, fine_steps)?.subsample(window.factor)?;
    let disc = discrete_reference(&fine, &data.grid)?;
    let pat = pattern_window(pattern, data.grid.t_end())?;

    let fwd = forward_filter(&disc, &pat, &data)?;
    let bwd = backward_filter(&disc, &pat, &data)?;
    let sm = fuse(&fwd, &bwd)?;
    let oracle = |view, include_straddling| {
        batch_oracle_with(disc.system(), &pat, &data, OracleOptions { view, include_straddling })
    };
    let of = oracle(OracleView::Filtered, false)?;
    let ob = oracle(OracleView::BackwardFiltered, false)?;
    let os = oracle(OracleView::Smoothed, false)?;
    let interior_delta_y = if pat.mode() == GapMode::ProcessValues
        && pat.intervals().iter().any(|iv| iv.state == Availability::Gap)
    {
        max_vec_diff(&oracle(OracleView::Smoothed, true)?.mean, &os.mean)
    } else {
        0.0
    };
    Ok(OracleComparison {
        forward: max_vec_diff(&fwd.x, &of.mean).max(max_mat_diff(&fwd.q, &of.cov)),
        backward: max_vec_diff(&bwd.x, &ob.mean).max(max_mat_diff(&bwd.q, &ob.cov)),
        smoothed: max_vec_diff(&sm.x, &os.mean).max(max_mat_diff(&sm.q, &os.cov)),
        interior_delta_y,
    })
}
