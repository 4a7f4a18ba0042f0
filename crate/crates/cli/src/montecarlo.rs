//! Replicated runs for the statistical properties of the filters and the smoother.
//!
//! Replication `r` uses stream `r` of the generator keyed by the base seed, so results
//! do not depend on thread scheduling; per-replication sums are reduced in order.

use balfuse::filtering::{backward_filter, forward_filter, ObservationPattern};
use balfuse::fusion::fuse;
use balfuse::simulate::{simulate_with, InitialState};
use balfuse::{BalancedModel, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Probe nodes as fractions of the horizon.
pub const PROBES: [f64; 3] = [0.1, 0.4, 0.8];
/// Increment windows `[s, t]` and `[a, b]` as fractions of the horizon.
pub const WINDOWS: [(f64, f64); 2] = [(0.2, 0.4), (0.6, 0.8)];

/// Largest per-entry deviation of each sample moment from its theoretical value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McResult {
    pub replications: usize,
    /// `cov(x - x_-)` against `Q_-`.
    pub forward_error_cov: f64,
    /// `cov(x - x̄_+)` against `Q̄_+`.
    pub backward_error_cov: f64,
    /// `E{x̄_+ x_-'}` against `(I - Q̄_+)(I - Q_-)`.
    pub cross_cov: f64,
    /// `E{(x - x_-) x_-'}` against 0.
    pub filter_orthogonality: f64,
    /// `E{(x - x̂) x_-'}` and `E{(x - x̂) x̄_+'}` against 0.
    pub smoother_orthogonality: f64,
    /// `E{Δw̄ Δw̄'} / (t - s)` against `I`.
    pub increment_normalization: f64,
    /// `E{Δw̄(a, b) Δw̄(s, t)'}`, scaled by the window lengths, against 0.
    pub increment_orthogonality: f64,
    /// `E{Δw̄(s, t) x(t)'} / sqrt(t - s)` against 0.
    pub increment_state: f64,
}

/// Sums of outer products accumulated over replications.
#[derive(Clone)]
struct Moments(Vec<DMatrix<f64>>);

impl Moments {
    fn add(mut self, other: &Moments) -> Moments {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
        self
    }
}

// layout of Moments: six blocks per probe, then three increment blocks
const PER_PROBE: usize = 6;

fn node(steps: usize, frac: f64) -> usize {
    ((steps as f64 * frac).round() as usize).min(steps)
}

fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

pub fn monte_carlo(
    bal: &BalancedModel,
    pattern: &ObservationPattern,
    replications: usize,
    seed: u64,
) -> Result<McResult> {
    let sys = bal.system();
    let grid = *sys.grid();
    let (n, p) = (sys.n(), sys.p());
    let h = grid.h();
    let probes: Vec<usize> = PROBES.iter().map(|&f| node(grid.steps(), f)).collect();
    let windows: Vec<(usize, usize)> = WINDOWS
        .iter()
        .map(|&(a, b)| (node(grid.steps(), a), node(grid.steps(), b)))
        .collect();

    // the noise that drives the backward model: dw̄ = dw - B' x dt, drift term by trapezoids
    let increment = |x: &[DVector<f64>], dw: &[DVector<f64>], (from, to): (usize, usize)| {
        (from..to).fold(DVector::zeros(p), |acc, k| {
            let drift = sys.b_at(k, 0.0).transpose() * &x[k] + sys.b_at(k, 1.0).transpose() * &x[k + 1];
            acc + &dw[k] - drift * (0.5 * h)
        })
    };

    let one = |r: usize| -> Result<Moments> {
        let traj = simulate_with(sys, seed, r as u64, &InitialState::Sampled)?;
        let fwd = forward_filter(bal, pattern, &traj)?;
        let bwd = backward_filter(bal, pattern, &traj)?;
        let sm = fuse(&fwd, &bwd)?;
        let mut out = Vec::with_capacity(PER_PROBE * probes.len() + 3);
        for &k in &probes {
            let x = &traj.x[k];
            let ef = x - &fwd.x[k];
            let eb = x - &bwd.x[k];
            let es = x - &sm.x[k];
            out.push(outer(&ef, &ef));
            out.push(outer(&eb, &eb));
            out.push(outer(&bwd.x[k], &fwd.x[k]));
            out.push(outer(&ef, &fwd.x[k]));
            out.push(outer(&es, &fwd.x[k]));
            out.push(outer(&es, &bwd.x[k]));
        }
        let d1 = increment(&traj.x, &traj.dw, windows[0]);
        let d2 = increment(&traj.x, &traj.dw, windows[1]);
        out.push(outer(&d1, &d1));
        out.push(outer(&d2, &d1));
        out.push(outer(&d1, &traj.x[windows[0].1]));
        Ok(Moments(out))
    };

    let parts: Vec<Moments> = (0..replications).into_par_iter().map(one).collect::<Result<_>>()?;
    let mut iter = parts.iter();
    let first = iter.next().expect("at least one replication").clone();
    let total = iter.fold(first, |acc, m| acc.add(m));
    let mean: Vec<DMatrix<f64>> = total.0.iter().map(|m| m / replications as f64).collect();

    // error covariances do not depend on the data
    let traj = simulate_with(sys, seed, 0, &InitialState::Sampled)?;
    let fwd = forward_filter(bal, pattern, &traj)?;
    let bwd = backward_filter(bal, pattern, &traj)?;
    let eye = DMatrix::<f64>::identity(n, n);

    let mut res = McResult {
        replications,
        forward_error_cov: 0.0,
        backward_error_cov: 0.0,
        cross_cov: 0.0,
        filter_orthogonality: 0.0,
        smoother_orthogonality: 0.0,
        increment_normalization: 0.0,
        increment_orthogonality: 0.0,
        increment_state: 0.0,
    };
    for (i, &k) in probes.iter().enumerate() {
        let m = &mean[i * PER_PROBE..(i + 1) * PER_PROBE];
        let (qf, qb) = (&fwd.q[k], &bwd.q[k]);
        res.forward_error_cov = res.forward_error_cov.max((&m[0] - qf).amax());
        res.backward_error_cov = res.backward_error_cov.max((&m[1] - qb).amax());
        res.cross_cov = res.cross_cov.max((&m[2] - (&eye - qb) * (&eye - qf)).amax());
        res.filter_orthogonality = res.filter_orthogonality.max(m[3].amax());
        res.smoother_orthogonality = res.smoother_orthogonality.max(m[4].amax()).max(m[5].amax());
    }
    let inc = &mean[PER_PROBE * probes.len()..];
    let len = |(a, b): (usize, usize)| (b - a) as f64 * h;
    let (l1, l2) = (len(windows[0]), len(windows[1]));
    res.increment_normalization = (&inc[0] / l1 - DMatrix::<f64>::identity(p, p)).amax();
    res.increment_orthogonality = inc[1].amax() / (l1 * l2).sqrt();
    res.increment_state = inc[2].amax() / l1.sqrt();
    Ok(res)
}
