use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below `SPD_RELATIVE_FLOOR * max eigenvalue` make a matrix count as singular.
pub const SPD_RELATIVE_FLOOR: f64 = 1e-12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize_mut(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest and largest eigenvalue of the symmetric part of `m`.
pub fn eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let ev = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    (ev.min(), ev.max())
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eig_extremes(m).0
}

/// Fails with `NotSpd` unless every eigenvalue is at least `1e-12` times the largest.
pub fn check_spd(m: &DMatrix<f64>) -> Result<()> {
    let (lo, hi) = eig_extremes(m);
    if !(hi > 0.0) || !(lo >= SPD_RELATIVE_FLOOR * hi) {
        return Err(Error::NotSpd {
            t: None,
            min_eig: lo,
            max_eig: hi,
        });
    }
    Ok(())
}

/// Square root and inverse square root of an SPD matrix sharing one eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpdRoots {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpdRoots {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim("spd matrix", format!("{:?} is not square", m.shape())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: None,
                what: "matrix passed to square root".into(),
            });
        }
        let eig = SymmetricEigen::new(symmetrize(m));
        let lo = eig.eigenvalues.min();
        let hi = eig.eigenvalues.max();
        if !(hi > 0.0) || !(lo >= SPD_RELATIVE_FLOOR * hi) {
            return Err(Error::NotSpd {
                t: None,
                min_eig: lo,
                max_eig: hi,
            });
        }
        let v = &eig.eigenvectors;
        let scaled = |f: fn(f64) -> f64| {
            let mut s = v.clone();
            for (j, lambda) in eig.eigenvalues.iter().enumerate() {
                let w = f(*lambda);
                s.column_mut(j).scale_mut(w);
            }
            symmetrize(&(s * v.transpose()))
        };
        Ok(Self {
            sqrt: scaled(f64::sqrt),
            inv_sqrt: scaled(|l| 1.0 / l.sqrt()),
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors.clone(),
        })
    }
}

/// Unique SPD square root via the symmetric eigendecomposition.
pub fn sqrtm_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(SpdRoots::new(m)?.sqrt)
}

/// Time derivative of `P^{-1/2}` along a path with `dP/dt = pdot`.
///
/// With `S = P^{-1/2}`, `X = dS/dt` solves `X S + S X = -P^{-1} pdot P^{-1}`.
/// In the eigenbasis of `P` the Sylvester operator is diagonal, so the solve is exact.
pub fn ddt_inv_sqrt(p: &DMatrix<f64>, pdot: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let roots = SpdRoots::new(p)?;
    Ok(ddt_inv_sqrt_with(&roots, pdot))
}

pub(crate) fn ddt_inv_sqrt_with(roots: &SpdRoots, pdot: &DMatrix<f64>) -> DMatrix<f64> {
    let v = &roots.eigenvectors;
    let lam = &roots.eigenvalues;
    let n = lam.len();
    let mut x = v.transpose() * symmetrize(pdot) * v;
    for i in 0..n {
        for j in 0..n {
            let si = 1.0 / lam[i].sqrt();
            let sj = 1.0 / lam[j].sqrt();
            x[(i, j)] = -x[(i, j)] / (lam[i] * lam[j] * (si + sj));
        }
    }
    symmetrize(&(v * x * v.transpose()))
}

/// Inverse of `m + max(0, eps - lambda_min) I`.
pub fn psd_inverse(m: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    psd_inverse_shifted(m, eps).map(|(inv, _)| inv)
}

/// As [`psd_inverse`], also returning the diagonal shift that was applied.
pub fn psd_inverse_shifted(m: &DMatrix<f64>, eps: f64) -> Result<(DMatrix<f64>, f64)> {
    if !m.is_square() {
        return Err(Error::dim("psd_inverse", format!("{:?} is not square", m.shape())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            t: None,
            what: "matrix passed to psd_inverse".into(),
        });
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let lo = eig.eigenvalues.min();
    if lo < -eps {
        return Err(Error::Indefinite {
            t: None,
            min_eig: lo,
            jitter: eps,
        });
    }
    let shift = (eps - lo).max(0.0);
    if eig.eigenvalues.iter().any(|l| !(l + shift > 0.0)) {
        return Err(Error::Singular {
            t: None,
            what: format!("psd_inverse with min eigenvalue {lo:e} and jitter {eps:e}"),
        });
    }
    let v = &eig.eigenvectors;
    let mut s = v.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        s.column_mut(j).scale_mut(1.0 / (lambda + shift));
    }
    Ok((symmetrize(&(s * v.transpose())), shift))
}
