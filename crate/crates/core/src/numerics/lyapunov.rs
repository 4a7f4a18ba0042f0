//! Dense Lyapunov solvers by Kronecker vectorization.
//!
//! The models handled here have a handful of states, so the `n^2 x n^2` linear
//! system is solved directly with a pivoted LU factorization followed by one
//! round of iterative refinement.

use nalgebra::{DMatrix, DVector};

use super::spd::{check_spd, symmetrize};
use crate::error::{Error, Result};

/// Relative residual bound met by every returned solution.
pub const LYAPUNOV_RESIDUAL: f64 = 1e-10;

fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unvec(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

fn solve_refined(op: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = op.clone().lu();
    let mut x = lu.solve(rhs)?;
    let r = rhs - op * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn check_square_pair(a: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    if !a.is_square() || s.shape() != (n, n) {
        return Err(Error::dim(
            "lyapunov",
            format!("A is {:?}, S is {:?}", a.shape(), s.shape()),
        ));
    }
    Ok(n)
}

/// Solves `A P + P A' + S = 0` for Hurwitz `A`.
pub fn solve_lyapunov_continuous(a: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = check_square_pair(a, s)?;
    let max_re = a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max_re < 0.0) {
        return Err(Error::NotHurwitz(format!(
            "eigenvalue with real part {max_re:e}"
        )));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(a) + a.kronecker(&eye);
    let x = solve_refined(&op, &(-vec_of(s)))
        .ok_or_else(|| Error::NotHurwitz("vectorized Lyapunov operator is singular".into()))?;
    let p = symmetrize(&unvec(&x, n));
    let residual = (a * &p + &p * a.transpose() + s).norm();
    let scale = a.norm() * p.norm() + s.norm();
    if residual > LYAPUNOV_RESIDUAL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotHurwitz(format!(
            "residual {residual:e} exceeds tolerance at scale {scale:e}"
        )));
    }
    check_spd(&p).map_err(|e| Error::NotHurwitz(format!("solution not SPD ({e})")))?;
    Ok(p)
}

/// Solves `P = A P A' + S` for Schur-stable `A`.
pub fn solve_lyapunov_discrete(a: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = check_square_pair(a, s)?;
    let radius = a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if !(radius < 1.0) {
        return Err(Error::NotSchurStable(format!("spectral radius {radius}")));
    }
    let op = DMatrix::<f64>::identity(n * n, n * n) - a.kronecker(a);
    let x = solve_refined(&op, &vec_of(s))
        .ok_or_else(|| Error::NotSchurStable("fixed-point operator is singular".into()))?;
    let p = symmetrize(&unvec(&x, n));
    let residual = (&p - a * &p * a.transpose() - s).norm();
    let scale = p.norm() + s.norm();
    if residual > LYAPUNOV_RESIDUAL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSchurStable(format!(
            "residual {residual:e} exceeds tolerance at scale {scale:e}"
        )));
    }
    check_spd(&p).map_err(|e| Error::NotSchurStable(format!("solution not SPD ({e})")))?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn scalar_continuous() {
        let p = solve_lyapunov_continuous(&m(1, 1, &[-0.5]), &m(1, 1, &[1.0])).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn oscillator_continuous() {
        let a = m(2, 2, &[0.0, 1.0, -0.3, -0.7]);
        let s = m(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let p = solve_lyapunov_continuous(&a, &s).unwrap();
        // frozen from the closed form p22 = 1/1.4, p11 = p22/0.3
        assert!((p[(0, 0)] - 50.0 / 21.0).abs() < 1e-12);
        assert!((p[(1, 1)] - 5.0 / 7.0).abs() < 1e-12);
        assert!(p[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn zero_forcing_is_rejected() {
        let a = -DMatrix::<f64>::identity(2, 2);
        let err = solve_lyapunov_continuous(&a, &DMatrix::zeros(2, 2)).unwrap_err();
        assert!(matches!(err, Error::NotHurwitz(_)));
    }

    #[test]
    fn unstable_is_rejected() {
        let a = m(2, 2, &[0.1, 1.0, 0.0, -1.0]);
        assert!(solve_lyapunov_continuous(&a, &DMatrix::identity(2, 2)).is_err());
        assert!(solve_lyapunov_discrete(&(a * 20.0), &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn discrete_trivial_cases() {
        let p = solve_lyapunov_discrete(&DMatrix::zeros(3, 3), &DMatrix::identity(3, 3)).unwrap();
        assert!((p - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
        let p = solve_lyapunov_discrete(&m(1, 1, &[0.5]), &m(1, 1, &[0.75])).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn discrete_matches_fixed_point_iteration() {
        let a = m(2, 2, &[0.2, 0.1, 0.0, 0.3]);
        let s = DMatrix::<f64>::identity(2, 2);
        let mut oracle = s.clone();
        loop {
            let next = &a * &oracle * a.transpose() + &s;
            let done = (&next - &oracle).norm() < 1e-14;
            oracle = next;
            if done {
                break;
            }
        }
        let p = solve_lyapunov_discrete(&a, &s).unwrap();
        assert!((p - oracle).norm() < 1e-12);
    }

    fn stable_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let a = DMatrix::from_vec(n, n, v);
            let shift = a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::MIN, f64::max);
            a - DMatrix::identity(n, n) * (shift + 0.5)
        })
    }

    proptest! {
        #[test]
        fn continuous_residual_bound(a in stable_matrix(3), b in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let b = DMatrix::from_vec(3, 2, b);
            let s = &b * b.transpose() + DMatrix::identity(3, 3) * 0.1;
            let p = solve_lyapunov_continuous(&a, &s).unwrap();
            let r = (&a * &p + &p * a.transpose() + &s).norm();
            prop_assert!(r <= LYAPUNOV_RESIDUAL * (a.norm() * p.norm() + s.norm()));
            prop_assert_eq!(&p, &p.transpose());
        }

        #[test]
        fn discrete_residual_bound(a in stable_matrix(3)) {
            let radius = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let a = a / (radius + 0.2);
            let s = DMatrix::identity(3, 3);
            let p = solve_lyapunov_discrete(&a, &s).unwrap();
            let r = (&p - &a * &p * a.transpose() - &s).norm();
            prop_assert!(r <= LYAPUNOV_RESIDUAL * (p.norm() + s.norm()));
        }
    }
}
