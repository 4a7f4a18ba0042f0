use nalgebra::{Complex, DMatrix};

use super::balanced::BalancedModel;
use super::system::TimeKind;
use crate::error::{Error, Result};
use crate::numerics::MatrixPath;

pub type CMatrix = DMatrix<Complex<f64>>;

/// Unitary embedding `U = [F G; H J]` of a balanced model, one block per sample.
///
/// Continuous time uses `H = -G'`, `J = I`; discrete time completes `[F G]` to an
/// orthogonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AllPassExtension {
    kind: TimeKind,
    f: MatrixPath,
    g: MatrixPath,
    h: MatrixPath,
    j: MatrixPath,
}

impl AllPassExtension {
    pub(crate) fn new(
        kind: TimeKind,
        f: MatrixPath,
        g: MatrixPath,
        h: MatrixPath,
        j: MatrixPath,
    ) -> Self {
        Self { kind, f, g, h, j }
    }

    pub fn kind(&self) -> TimeKind {
        self.kind
    }

    pub fn f(&self) -> &MatrixPath {
        &self.f
    }

    pub fn g(&self) -> &MatrixPath {
        &self.g
    }

    pub fn h(&self) -> &MatrixPath {
        &self.h
    }

    pub fn j(&self) -> &MatrixPath {
        &self.j
    }

    /// The full `(n+p) x (n+p)` block matrix at sample `k`.
    pub fn u(&self, k: usize) -> DMatrix<f64> {
        let (f, g, h, j) = (self.f.at(k), self.g.at(k), self.h.at(k), self.j.at(k));
        let (n, p) = (f.nrows(), g.ncols());
        let mut u = DMatrix::zeros(n + p, n + p);
        u.view_mut((0, 0), (n, n)).copy_from(f);
        u.view_mut((0, n), (n, p)).copy_from(g);
        u.view_mut((n, 0), (p, n)).copy_from(h);
        u.view_mut((n, n), (p, p)).copy_from(j);
        u
    }
}

/// Rows `[H J]` completing the orthonormal rows of `[F G]` to an orthogonal matrix.
///
/// Householder QR of `[V | I]`, `V = [F G]'`, leaves an orthogonal `Q` whose first
/// `n` columns span the columns of `V`; the remaining columns give `[H J]'`. The last
/// row is negated when needed so that `det U = +1`.
pub(crate) fn complete_orthogonal(fg: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = fg.nrows();
    let total = fg.ncols();
    let p = total - n;
    let mut wide = DMatrix::zeros(total, n + total);
    wide.columns_mut(0, n).copy_from(&fg.transpose());
    wide.columns_mut(n, total).fill_with_identity();
    let q = wide.qr().q();
    let mut hj = q.columns(n, p).transpose();
    let mut u = DMatrix::zeros(total, total);
    u.rows_mut(0, n).copy_from(fg);
    u.rows_mut(n, p).copy_from(&hj);
    if u.determinant() < 0.0 {
        hj.row_mut(p - 1).neg_mut();
    }
    let h = hj.columns(0, n).into_owned();
    let j = hj.columns(n, p).into_owned();
    (h, j)
}

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex::new(v, 0.0))
}

/// `C (z I - A)^{-1} B`, failing with `Singular` when `z` is (numerically) an eigenvalue of `A`.
pub fn resolvent_product(
    c: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    z: Complex<f64>,
) -> Result<CMatrix> {
    let n = a.nrows();
    let shifted = CMatrix::from_diagonal_element(n, n, z) - to_complex(a);
    let lu = shifted.lu();
    let diag = lu.u().diagonal();
    let hi = diag.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let lo = diag.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
    let singular = || Error::Singular {
        t: None,
        what: format!("frequency {z} is an eigenvalue of the state matrix"),
    };
    if !(lo > 1e-13 * hi.max(1.0)) {
        return Err(singular());
    }
    let x = lu.solve(&to_complex(b)).ok_or_else(singular)?;
    let out = to_complex(c) * x;
    if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(singular());
    }
    Ok(out)
}

/// Value of the structural function at `freq` and its all-pass residual.
#[derive(Debug, Clone)]
pub struct StructuralValue {
    pub u: CMatrix,
    /// `‖U(z) U(1/z)' - I‖_F` (discrete) or `‖U(s) U(-s)' - I‖_F` (continuous).
    pub residual: f64,
}

/// Evaluates `U(freq) = H (freq I - F)^{-1} G + J` at sample `k`.
pub fn eval_structural_function(
    ext: &AllPassExtension,
    k: usize,
    freq: Complex<f64>,
) -> Result<StructuralValue> {
    let at = |freq| -> Result<CMatrix> {
        let r = resolvent_product(ext.h.at(k), ext.f.at(k), ext.g.at(k), freq)?;
        Ok(r + to_complex(ext.j.at(k)))
    };
    let u = at(freq)?;
    let dual = match ext.kind {
        TimeKind::Discrete => {
            if freq.norm() == 0.0 {
                return Err(Error::Singular {
                    t: None,
                    what: "dual point 1/z undefined at z = 0".into(),
                });
            }
            freq.inv()
        }
        TimeKind::Continuous => -freq,
    };
    let u_dual = at(dual)?;
    let p = u.nrows();
    let residual = (&u * u_dual.transpose() - CMatrix::identity(p, p)).norm();
    Ok(StructuralValue { u, residual })
}

/// Forward transfer function `W = C (freq I - A)^{-1} B + D` at sample `k`.
pub fn forward_transfer(bal: &BalancedModel, k: usize, freq: Complex<f64>) -> Result<CMatrix> {
    let sys = bal.system();
    let w = resolvent_product(sys.c().at(k), sys.a().at(k), sys.b().at(k), freq)?;
    Ok(w + to_complex(sys.d().at(k)))
}

/// Backward transfer function at sample `k`.
///
/// Continuous: `C̄ (s I + A')^{-1} B̄ + D̄`. Discrete: `C̄ (z^{-1} I - A')^{-1} B̄ + D̄`.
pub fn backward_transfer(bal: &BalancedModel, k: usize, freq: Complex<f64>) -> Result<CMatrix> {
    let bw = bal.backward();
    let a_t = bal.system().a().at(k).transpose();
    let point = match bal.kind() {
        TimeKind::Continuous => freq,
        TimeKind::Discrete => freq.inv(),
    };
    let drift = match bal.kind() {
        TimeKind::Continuous => -a_t,
        TimeKind::Discrete => a_t,
    };
    let w = resolvent_product(bw.c.at(k), &drift, bw.b.at(k), point)?;
    Ok(w + to_complex(bw.d.at(k)))
}
