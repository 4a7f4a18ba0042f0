use nalgebra::DMatrix;

use super::allpass::{complete_orthogonal, AllPassExtension};
use super::covariance::CovariancePath;
use super::system::{LtvSystem, TimeKind};
use crate::error::{Error, Result};
use crate::numerics::MatrixPath;

/// Largest balanced-identity residual accepted by [`backward_model`].
pub const BALANCE_TOLERANCE: f64 = 1e-6;

/// Relative drift below which a covariance path counts as constant.
const STATIONARY_TOLERANCE: f64 = 1e-12;

/// Backward (time-reversed) coefficients of a balanced model.
///
/// Continuous time: `dx̄ = -A' x̄ dt + B̄ dw̄`, `dy = C̄ x̄ dt + D̄ dw̄`, where `a`
/// holds the drift `-A'`.
/// Discrete time: `x̄(t-1) = A(t)' x̄(t) + B̄(t) w̄(t)`, `y(t) = C̄(t) x̄(t) + D̄(t) w̄(t)`
/// with `x̄(t) = x(t+1)`, where `a` holds `A(t)'`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardModel {
    pub a: MatrixPath,
    pub b: MatrixPath,
    pub c: MatrixPath,
    pub d: MatrixPath,
    dbt: MatrixPath,
}

/// Realization with identity state covariance plus its backward dual and unitary extension.
#[derive(Debug, Clone)]
pub struct BalancedModel {
    forward: LtvSystem,
    backward: BackwardModel,
    extension: AllPassExtension,
}

impl BalancedModel {
    /// Wraps a system that is already balanced (`P0 = I`, identity preserved).
    pub fn from_balanced(forward: LtvSystem) -> Result<Self> {
        let n = forward.n();
        if (forward.p0() - DMatrix::<f64>::identity(n, n)).amax() > BALANCE_TOLERANCE {
            return Err(Error::NotBalanced {
                t: forward.grid().t0(),
                residual: (forward.p0() - DMatrix::<f64>::identity(n, n)).norm(),
            });
        }
        check_balanced(&forward, BALANCE_TOLERANCE)?;
        let extension = build_extension(&forward)?;
        let backward = build_backward(&forward, &extension);
        Ok(Self {
            forward,
            backward,
            extension,
        })
    }

    pub fn kind(&self) -> TimeKind {
        self.forward.kind()
    }

    pub fn system(&self) -> &LtvSystem {
        &self.forward
    }

    pub fn backward(&self) -> &BackwardModel {
        &self.backward
    }

    pub fn extension(&self) -> &AllPassExtension {
        &self.extension
    }

    /// Same model with the output signal removed on steps where `signal[k]` is false.
    pub fn with_signal_mask(&self, signal: Vec<bool>) -> Result<Self> {
        Ok(Self {
            forward: self.forward.clone().with_signal_mask(signal)?,
            backward: self.backward.clone(),
            extension: self.extension.clone(),
        })
    }

    /// Continuous backward output matrix on step `k`: `C + D B'`, with `C = 0` where the
    /// signal is lost.
    pub fn backward_c_at(&self, k: usize, theta: f64) -> DMatrix<f64> {
        &*self.forward.c_at(k, theta) + &*self.backward.dbt.lerp(k, theta)
    }

    /// Discrete backward output pair `(C̄, D̄)` on step `k`, honoring the signal mask.
    ///
    /// With `P = I` the general forms `C P A' + D B'` and `C P B̄ + D J'` collapse to
    /// `C A' + D B'` and `C H' + D J'`.
    pub fn backward_output_step(&self, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let c = self.forward.c_at(k, 0.0);
        let a = self.forward.a().at(k);
        let d = self.forward.d().at(k);
        let h = self.extension.h().at(k);
        let j = self.extension.j().at(k);
        let cbar = &*c * a.transpose() + self.backward.dbt.at(k);
        let dbar = &*c * h.transpose() + d * j.transpose();
        (cbar, dbar)
    }
}

fn pick(p: &MatrixPath, k: usize) -> &DMatrix<f64> {
    p.at(if p.is_constant() { 0 } else { k })
}

/// Maximum balanced-identity residual over the grid.
pub fn balance_residual(sys: &LtvSystem) -> (f64, usize) {
    let samples = match sys.kind() {
        TimeKind::Continuous => sys.grid().nodes(),
        TimeKind::Discrete => sys.grid().steps(),
    };
    let constant = sys.a().is_constant() && sys.b().is_constant();
    let count = if constant { samples.min(1) } else { samples };
    let n = sys.n();
    let mut worst = (0.0, 0);
    for k in 0..count {
        let a = pick(sys.a(), k);
        let b = pick(sys.b(), k);
        let res = match sys.kind() {
            TimeKind::Continuous => (a + a.transpose() + b * b.transpose()).norm(),
            TimeKind::Discrete => {
                (a * a.transpose() + b * b.transpose() - DMatrix::<f64>::identity(n, n)).norm()
            }
        };
        if res > worst.0 || res.is_nan() {
            worst = (res, k);
        }
    }
    worst
}

fn check_balanced(sys: &LtvSystem, tol: f64) -> Result<()> {
    let (res, k) = balance_residual(sys);
    if !(res <= tol) {
        return Err(Error::NotBalanced {
            t: sys.grid().time(k),
            residual: res,
        });
    }
    Ok(())
}

fn build_extension(sys: &LtvSystem) -> Result<AllPassExtension> {
    match sys.kind() {
        TimeKind::Continuous => {
            let h = sys.b().map(|b| -b.transpose());
            let j = MatrixPath::Constant(DMatrix::identity(sys.p(), sys.p()));
            Ok(AllPassExtension::new(TimeKind::Continuous, sys.a().clone(), sys.b().clone(), h, j))
        }
        TimeKind::Discrete => {
            let n = sys.n();
            let complete = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
                let mut fg = DMatrix::zeros(n, n + sys.p());
                fg.columns_mut(0, n).copy_from(a);
                fg.columns_mut(n, sys.p()).copy_from(b);
                complete_orthogonal(&fg)
            };
            let (h, j) = if sys.a().is_constant() && sys.b().is_constant() {
                let (h, j) = complete(sys.a().at(0), sys.b().at(0));
                (MatrixPath::Constant(h), MatrixPath::Constant(j))
            } else {
                let (hs, js): (Vec<_>, Vec<_>) = (0..sys.grid().steps())
                    .map(|k| complete(pick(sys.a(), k), pick(sys.b(), k)))
                    .unzip();
                (MatrixPath::Sampled(hs), MatrixPath::Sampled(js))
            };
            Ok(AllPassExtension::new(TimeKind::Discrete, sys.a().clone(), sys.b().clone(), h, j))
        }
    }
}

fn build_backward(sys: &LtvSystem, ext: &AllPassExtension) -> BackwardModel {
    let dbt = sys.d().zip_map(sys.b(), |d, b| d * b.transpose());
    match sys.kind() {
        TimeKind::Continuous => BackwardModel {
            a: sys.a().map(|a| -a.transpose()),
            b: sys.b().clone(),
            c: sys.c().zip_map(&dbt, |c, db| c + db),
            d: sys.d().clone(),
            dbt,
        },
        TimeKind::Discrete => {
            let a_t = sys.a().map(|a| a.transpose());
            let b = ext.h().map(|h| h.transpose());
            let c = sys
                .c()
                .zip_map(sys.a(), |c, a| c * a.transpose())
                .zip_map(&dbt, |ca, db| ca + db);
            let d = sys
                .c()
                .zip_map(&b, |c, bb| c * bb)
                .zip_map(&sys.d().zip_map(ext.j(), |d, j| d * j.transpose()), |x, y| x + y);
            BackwardModel {
                a: a_t,
                b,
                c,
                d,
                dbt,
            }
        }
    }
}

/// Normalizing substitution `x -> P^{-1/2} x` applied to `sys` along `cov`.
///
/// Continuous: `A <- P^{-1/2} A P^{1/2} + R`, `B <- P^{-1/2} B`, `C <- C P^{1/2}`.
/// Discrete: `A <- P(t+1)^{-1/2} A P(t)^{1/2}`, `B <- P(t+1)^{-1/2} B`, `C <- C P(t)^{1/2}`.
pub fn balance(sys: &LtvSystem, cov: &CovariancePath) -> Result<BalancedModel> {
    if cov.grid() != sys.grid() || cov.kind() != sys.kind() {
        return Err(Error::Invalid("covariance path does not belong to this system".into()));
    }
    let grid = *sys.grid();
    let constant = sys.is_time_invariant() && cov.is_stationary(STATIONARY_TOLERANCE);
    let samples = match sys.kind() {
        TimeKind::Continuous => grid.nodes(),
        TimeKind::Discrete => grid.steps(),
    };
    let count = if constant { 1 } else { samples };
    let mut a_b = Vec::with_capacity(count);
    let mut b_b = Vec::with_capacity(count);
    let mut c_b = Vec::with_capacity(count);
    for k in 0..count {
        let (a, b, c) = (pick(sys.a(), k), pick(sys.b(), k), pick(sys.c(), k));
        let next = match sys.kind() {
            TimeKind::Continuous => k,
            TimeKind::Discrete => k + 1,
        };
        let s_next = if constant { cov.inv_sqrt(0) } else { cov.inv_sqrt(next) };
        let mut ak = s_next * a * cov.sqrt(k);
        if let Some(r) = cov.r(k) {
            ak += r;
        }
        a_b.push(ak);
        b_b.push(s_next * b);
        c_b.push(c * cov.sqrt(k));
    }
    let wrap = |mut v: Vec<DMatrix<f64>>| {
        if constant {
            MatrixPath::Constant(v.pop().unwrap())
        } else {
            MatrixPath::Sampled(v)
        }
    };
    let n = sys.n();
    let mut forward = LtvSystem::new(
        sys.kind(),
        grid,
        wrap(a_b),
        wrap(b_b),
        wrap(c_b),
        sys.d().clone(),
        DMatrix::identity(n, n),
    )?;
    if let Some(mask) = sys.signal_mask() {
        forward = forward.with_signal_mask(mask.to_vec())?;
    }
    BalancedModel::from_balanced(forward)
}

/// Recomputes the backward coefficients of a balanced model, checking the balanced identity.
pub fn backward_model(bal: &BalancedModel) -> Result<BalancedModel> {
    BalancedModel::from_balanced(bal.forward.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{propagate_covariance, stationary_covariance};
    use crate::numerics::TimeGrid;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn example(t_end: f64, h: f64) -> LtvSystem {
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

    #[test]
    fn example_balances_to_known_values() {
        let sys = example(45.0, 0.01);
        let bal = balance(&sys, &propagate_covariance(&sys).unwrap()).unwrap();
        let f = bal.system().a().at(0);
        let s = 0.3f64.sqrt();
        let expected = m(2, 2, &[0.0, s, -s, -0.7]);
        assert!((f - expected).amax() < 1e-6);
        let g = bal.system().b().at(0);
        assert!((g * g.transpose() - m(2, 2, &[0.0, 0.0, 0.0, 1.4])).amax() < 1e-9);
        assert!((g[(1, 0)] - 1.4f64.sqrt()).abs() < 1e-9);
        assert!(balance_residual(bal.system()).0 < 1e-8);
        let cbar = bal.backward().c.at(0);
        assert!((cbar - m(1, 2, &[1.543_033_499_620_919, 0.0])).amax() < 1e-6);
    }

    #[test]
    fn balanced_input_is_fixed() {
        let sys = LtvSystem::new(
            TimeKind::Continuous,
            TimeGrid::new(0.0, 1.0, 0.1).unwrap(),
            m(1, 1, &[-0.5]),
            m(1, 2, &[1.0, 0.0]),
            m(1, 1, &[1.0]),
            m(1, 2, &[0.0, 1.0]),
            m(1, 1, &[1.0]),
        )
        .unwrap();
        let bal = balance(&sys, &propagate_covariance(&sys).unwrap()).unwrap();
        assert!((bal.system().a().at(0) - sys.a().at(0)).amax() < 1e-15);
        assert!((bal.system().b().at(0) - sys.b().at(0)).amax() < 1e-15);
        assert!((bal.backward().c.at(0)[(0, 0)] - 1.0).abs() < 1e-15);
        let ext = bal.extension();
        assert!((ext.h().at(0) - m(2, 1, &[-1.0, 0.0])).amax() < 1e-15);
        assert_eq!(ext.j().at(0), &DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn unbalanced_is_rejected() {
        let sys = LtvSystem::new(
            TimeKind::Continuous,
            TimeGrid::new(0.0, 1.0, 0.1).unwrap(),
            m(1, 1, &[-1.0]),
            m(1, 2, &[1.0, 0.0]),
            m(1, 1, &[1.0]),
            m(1, 2, &[0.0, 1.0]),
            m(1, 1, &[1.0]),
        )
        .unwrap();
        assert!(matches!(
            BalancedModel::from_balanced(sys),
            Err(Error::NotBalanced { .. })
        ));
    }

    #[test]
    fn time_varying_balance_and_repropagation() {
        let g = TimeGrid::new(0.0, 3.0, 0.01).unwrap();
        let a: Vec<_> = g
            .times()
            .map(|t| m(2, 2, &[-0.5 + 0.2 * t.sin(), 1.0, -0.4, -0.8 + 0.1 * t]))
            .collect();
        let b: Vec<_> = g
            .times()
            .map(|t| m(2, 2, &[0.3, 0.0, 1.0 + 0.2 * t.cos(), 0.0]))
            .collect();
        let sys = LtvSystem::new(
            TimeKind::Continuous,
            g,
            MatrixPath::Sampled(a),
            MatrixPath::Sampled(b),
            m(1, 2, &[1.0, 0.5]),
            m(1, 2, &[0.0, 1.0]),
            m(2, 2, &[0.8, 0.1, 0.1, 0.4]),
        )
        .unwrap();
        let bal = balance(&sys, &propagate_covariance(&sys).unwrap()).unwrap();
        assert!(balance_residual(bal.system()).0 < 1e-8);
        let again = propagate_covariance(bal.system()).unwrap();
        for p in again.all() {
            assert!((p - DMatrix::<f64>::identity(2, 2)).norm() < 1e-6);
        }
    }

    #[test]
    fn discrete_balance_identity() {
        let g = TimeGrid::unit(6);
        let a: Vec<_> = (0..6).map(|k| m(2, 2, &[0.5, 0.1 * k as f64, -0.2, 0.3])).collect();
        let sys = LtvSystem::new(
            TimeKind::Discrete,
            g,
            MatrixPath::Sampled(a),
            m(2, 3, &[1.0, 0.0, 0.0, 0.4, 0.7, 0.0]),
            m(1, 2, &[1.0, -1.0]),
            m(1, 3, &[0.0, 0.0, 1.0]),
            m(2, 2, &[2.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        let bal = balance(&sys, &propagate_covariance(&sys).unwrap()).unwrap();
        assert!(balance_residual(bal.system()).0 < 1e-8);
        let again = propagate_covariance(bal.system()).unwrap();
        for p in again.all() {
            assert!((p - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        }
    }
}
