use nalgebra::DMatrix;

use super::system::{LtvSystem, TimeKind};
use crate::error::Result;
use crate::numerics::{
    ddt_inv_sqrt_with, ensure_finite, integrate_matrix_ode, symmetrize_mut, SpdRoots, TimeGrid,
};

/// State covariance `P(t)` at every node, with its square roots and the
/// normalization rate `R(t) = [d/dt P^{-1/2}] P^{1/2}` (continuous time only).
#[derive(Debug, Clone)]
pub struct CovariancePath {
    kind: TimeKind,
    grid: TimeGrid,
    p: Vec<DMatrix<f64>>,
    roots: Vec<SpdRoots>,
    r: Option<Vec<DMatrix<f64>>>,
}

impl CovariancePath {
    pub fn kind(&self) -> TimeKind {
        self.kind
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn p(&self, k: usize) -> &DMatrix<f64> {
        &self.p[k]
    }

    pub fn all(&self) -> &[DMatrix<f64>] {
        &self.p
    }

    pub fn sqrt(&self, k: usize) -> &DMatrix<f64> {
        &self.roots[k].sqrt
    }

    pub fn inv_sqrt(&self, k: usize) -> &DMatrix<f64> {
        &self.roots[k].inv_sqrt
    }

    /// `R(t_k)`; `None` for discrete time.
    pub fn r(&self, k: usize) -> Option<&DMatrix<f64>> {
        self.r.as_ref().map(|r| &r[k])
    }

    /// True when every node equals `P(t0)` to `rel_tol` relative Frobenius distance.
    pub fn is_stationary(&self, rel_tol: f64) -> bool {
        let p0 = &self.p[0];
        let scale = p0.norm();
        self.p.iter().all(|p| (p - p0).norm() <= rel_tol * scale)
    }
}

/// Propagates the state covariance from `P0` across the grid.
///
/// Continuous time integrates `dP/dt = A P + P A' + B B'`; discrete time
/// iterates `P(t+1) = A P A' + B B'`.
pub fn propagate_covariance(sys: &LtvSystem) -> Result<CovariancePath> {
    let grid = *sys.grid();
    let p = match sys.kind() {
        TimeKind::Continuous => {
            integrate_matrix_ode(&grid, 0, grid.steps(), sys.p0().clone(), true, |k, th, p| {
                let a = sys.a_at(k, th);
                let ap = &*a * p;
                &ap + ap.transpose() + &*sys.bbt_at(k, th)
            })?
        }
        TimeKind::Discrete => {
            let mut out = Vec::with_capacity(grid.nodes());
            out.push(sys.p0().clone());
            for k in 0..grid.steps() {
                let a = sys.a().at(k);
                let mut next = a * &out[k] * a.transpose() + &*sys.bbt_at(k, 0.0);
                symmetrize_mut(&mut next);
                ensure_finite(&next, grid.time(k + 1), "state covariance")?;
                out.push(next);
            }
            out
        }
    };
    let roots = p
        .iter()
        .enumerate()
        .map(|(k, pk)| SpdRoots::new(pk).map_err(|e| e.at_time(grid.time(k))))
        .collect::<Result<Vec<_>>>()?;
    let r = match sys.kind() {
        TimeKind::Continuous => Some(
            (0..grid.nodes())
                .map(|k| {
                    let a = sys.a().at(if sys.a().is_constant() { 0 } else { k });
                    let ap = a * &p[k];
                    let bbt = sys.b().at(if sys.b().is_constant() { 0 } else { k });
                    let pdot = &ap + ap.transpose() + bbt * bbt.transpose();
                    ddt_inv_sqrt_with(&roots[k], &pdot) * &roots[k].sqrt
                })
                .collect(),
        ),
        TimeKind::Discrete => None,
    };
    Ok(CovariancePath {
        kind: sys.kind(),
        grid,
        p,
        roots,
        r,
    })
}
