//! Two-filter fusion and the brute-force conditioning oracle used to check it.

mod oracle;

use nalgebra::{DMatrix, DVector};

pub use oracle::{batch_oracle, batch_oracle_with, OracleOptions, OracleResult, OracleView};

use crate::error::{Error, Result};
use crate::filtering::{Direction, FilterResult};
use crate::numerics::{min_eigenvalue, psd_inverse, psd_inverse_shifted, symmetrize, TimeGrid};

/// Jitter passed to `psd_inverse` when inverting the filter covariances.
pub const FUSION_JITTER: f64 = 1e-12;

/// Smoothed estimate with its error covariance and mixing weights, one entry per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherResult {
    pub grid: TimeGrid,
    pub x: Vec<DVector<f64>>,
    pub q: Vec<DMatrix<f64>>,
    /// `L_- = Q Q_-^{-1}`.
    pub l_minus: Vec<DMatrix<f64>>,
    /// `L̄_+ = Q Q̄_+^{-1}`.
    pub l_plus: Vec<DMatrix<f64>>,
    /// Nodes where a filter covariance needed the jitter shift to be inverted.
    pub flagged: Vec<usize>,
}

/// Combines a forward and a backward pass over a balanced model:
/// `Q = (Q_-^{-1} + Q̄_+^{-1} - I)^{-1}`, `x̂ = Q (Q_-^{-1} x_- + Q̄_+^{-1} x̄_+)`.
pub fn fuse(fwd: &FilterResult, bwd: &FilterResult) -> Result<SmootherResult> {
    if fwd.direction != Direction::Forward || bwd.direction != Direction::Backward {
        return Err(Error::Invalid("fuse expects a forward and a backward pass".into()));
    }
    if fwd.grid != bwd.grid || fwd.x.len() != bwd.x.len() {
        return Err(Error::Invalid("filter results live on different grids".into()));
    }
    let grid = fwd.grid;
    let n = fwd.x.first().map_or(0, |x| x.len());
    let eye = DMatrix::<f64>::identity(n, n);
    let mut out = SmootherResult {
        grid,
        x: Vec::with_capacity(grid.nodes()),
        q: Vec::with_capacity(grid.nodes()),
        l_minus: Vec::with_capacity(grid.nodes()),
        l_plus: Vec::with_capacity(grid.nodes()),
        flagged: Vec::new(),
    };
    for k in 0..fwd.x.len() {
        let t = grid.time(k);
        let (im, sm) = psd_inverse_shifted(&fwd.q[k], FUSION_JITTER).map_err(|e| e.at_time(t))?;
        let (ip, sp) = psd_inverse_shifted(&bwd.q[k], FUSION_JITTER).map_err(|e| e.at_time(t))?;
        if sm > 0.0 || sp > 0.0 {
            out.flagged.push(k);
        }
        let info = symmetrize(&(&im + &ip - &eye));
        let lo = min_eigenvalue(&info);
        if !(lo > 0.0) {
            return Err(Error::Indefinite {
                t: Some(t),
                min_eig: lo,
                jitter: 0.0,
            });
        }
        let q = psd_inverse(&info, 0.0).map_err(|e| e.at_time(t))?;
        let x = &q * (&im * &fwd.x[k] + &ip * &bwd.x[k]);
        out.l_minus.push(&q * im);
        out.l_plus.push(&q * ip);
        out.x.push(x);
        out.q.push(q);
    }
    Ok(out)
}

/// Largest `‖Q^{-1} - Q_-^{-1} - Q̄_+^{-1} + I‖_F` over the nodes.
pub fn covariance_identity_residual(
    fwd: &FilterResult,
    bwd: &FilterResult,
    sm: &SmootherResult,
) -> f64 {
    let inv = |m: &DMatrix<f64>| m.clone().try_inverse().unwrap_or_else(|| m.map(|_| f64::NAN));
    (0..sm.q.len())
        .map(|k| {
            let n = sm.q[k].nrows();
            (inv(&sm.q[k]) - inv(&fwd.q[k]) - inv(&bwd.q[k]) + DMatrix::<f64>::identity(n, n)).norm()
        })
        .fold(0.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

/// Largest `‖Q Q_-^{-1} + Q Q̄_+^{-1} (I - Q̄_+) - I‖_F` over the nodes.
pub fn weight_identity_residual(bwd: &FilterResult, sm: &SmootherResult) -> f64 {
    (0..sm.q.len())
        .map(|k| {
            let n = sm.q[k].nrows();
            let eye = DMatrix::<f64>::identity(n, n);
            (&sm.l_minus[k] + &sm.l_plus[k] * (&eye - &bwd.q[k]) - eye).norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(direction: Direction, x: f64, q: f64) -> FilterResult {
        FilterResult {
            direction,
            grid: TimeGrid::unit(1),
            x: vec![DVector::from_element(1, x); 2],
            q: vec![DMatrix::from_element(1, 1, q); 2],
            gain: vec![DMatrix::zeros(1, 1); 2],
            jumps: vec![],
        }
    }

    #[test]
    fn no_information_anywhere() {
        let sm = fuse(&result(Direction::Forward, 0.0, 1.0), &result(Direction::Backward, 0.0, 1.0)).unwrap();
        assert_eq!(sm.q[0][(0, 0)], 1.0);
        assert_eq!(sm.x[0][0], 0.0);
    }

    #[test]
    fn scalar_formula() {
        let f = result(Direction::Forward, 0.9, 0.5);
        let b = result(Direction::Backward, 1.2, 0.5);
        let sm = fuse(&f, &b).unwrap();
        assert!((sm.q[0][(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((sm.x[0][0] - 1.4).abs() < 1e-14);
        assert!(covariance_identity_residual(&f, &b, &sm) < 1e-14);
        assert!(weight_identity_residual(&b, &sm) < 1e-14);
    }

    #[test]
    fn rejects_inconsistent_information() {
        // Q_- = Q̄_+ = 4 is not a balanced-model covariance: 1/4 + 1/4 - 1 < 0
        let err = fuse(&result(Direction::Forward, 0.0, 4.0), &result(Direction::Backward, 0.0, 4.0)).unwrap_err();
        assert!(matches!(err, Error::Indefinite { .. }));
    }
}
