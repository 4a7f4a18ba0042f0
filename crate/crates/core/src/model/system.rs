use std::borrow::Cow;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{check_spd, MatrixPath, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeKind {
    Continuous,
    Discrete,
}

/// Linear time-varying stochastic system on a finite grid.
///
/// Continuous time:
/// `dx = A(t) x dt + B(t) dw`, `dy = C(t) x dt + D(t) dw`, `y(t0) = 0`.
///
/// Discrete time (unit grid):
/// `x(t+1) = A(t) x(t) + B(t) w(t)`, `y(t) = C(t) x(t) + D(t) w(t)`.
///
/// `w` is normalized white noise with `p` components and `x(t0)` has covariance `P0`.
/// Continuous coefficients are sampled at every node; discrete coefficients at
/// every step. An optional per-step signal mask marks steps on which the output
/// carries only noise (`C = 0` there).
#[derive(Debug, Clone, PartialEq)]
pub struct LtvSystem {
    kind: TimeKind,
    grid: TimeGrid,
    n: usize,
    m: usize,
    p: usize,
    a: MatrixPath,
    b: MatrixPath,
    c: MatrixPath,
    d: MatrixPath,
    p0: DMatrix<f64>,
    signal: Option<Vec<bool>>,
    bbt: MatrixPath,
    bdt: MatrixPath,
    ddt: MatrixPath,
}

impl LtvSystem {
    pub fn new(
        kind: TimeKind,
        grid: TimeGrid,
        a: impl Into<MatrixPath>,
        b: impl Into<MatrixPath>,
        c: impl Into<MatrixPath>,
        d: impl Into<MatrixPath>,
        p0: DMatrix<f64>,
    ) -> Result<Self> {
        let (a, b, c, d) = (a.into(), b.into(), c.into(), d.into());
        let (n, n2) = a.shape();
        if n == 0 || n != n2 {
            return Err(Error::dim("A", format!("must be square and non-empty, got {n}x{n2}")));
        }
        let p = b.shape().1;
        let m = c.shape().0;
        if p == 0 || m == 0 {
            return Err(Error::dim("B/C", "need at least one noise channel and one output"));
        }
        let samples = match kind {
            TimeKind::Continuous => grid.nodes(),
            TimeKind::Discrete => grid.steps(),
        };
        a.validate("A", samples, (n, n))?;
        b.validate("B", samples, (n, p))?;
        c.validate("C", samples, (m, n))?;
        d.validate("D", samples, (m, p))?;
        if p0.shape() != (n, n) {
            return Err(Error::dim("P0", format!("expected {n}x{n}, got {:?}", p0.shape())));
        }
        check_spd(&p0).map_err(|e| e.at_time(grid.t0()))?;
        let ddt = d.map(|d| d * d.transpose());
        for k in 0..samples.max(1) {
            check_spd(ddt.at(if ddt.is_constant() { 0 } else { k })).map_err(|_| Error::Singular {
                t: Some(grid.time(k)),
                what: "D D' is not invertible (output has a deterministic component)".into(),
            })?;
            if ddt.is_constant() {
                break;
            }
        }
        let bbt = b.map(|b| b * b.transpose());
        let bdt = b.zip_map(&d, |b, d| b * d.transpose());
        Ok(Self {
            kind,
            grid,
            n,
            m,
            p,
            a,
            b,
            c,
            d,
            p0,
            signal: None,
            bbt,
            bdt,
            ddt,
        })
    }

    /// Same system with the output signal removed (`C = 0`) on steps where `signal[k]` is false.
    pub fn with_signal_mask(mut self, signal: Vec<bool>) -> Result<Self> {
        if signal.len() != self.grid.steps() {
            return Err(Error::dim(
                "signal mask",
                format!("expected {} steps, got {}", self.grid.steps(), signal.len()),
            ));
        }
        self.signal = if signal.iter().all(|&s| s) { None } else { Some(signal) };
        Ok(self)
    }

    pub fn with_p0(mut self, p0: DMatrix<f64>) -> Result<Self> {
        if p0.shape() != (self.n, self.n) {
            return Err(Error::dim("P0", format!("expected {0}x{0}", self.n)));
        }
        check_spd(&p0).map_err(|e| e.at_time(self.grid.t0()))?;
        self.p0 = p0;
        Ok(self)
    }

    pub fn kind(&self) -> TimeKind {
        self.kind
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn a(&self) -> &MatrixPath {
        &self.a
    }

    pub fn b(&self) -> &MatrixPath {
        &self.b
    }

    pub fn c(&self) -> &MatrixPath {
        &self.c
    }

    pub fn d(&self) -> &MatrixPath {
        &self.d
    }

    pub fn p0(&self) -> &DMatrix<f64> {
        &self.p0
    }

    pub fn signal_mask(&self) -> Option<&[bool]> {
        self.signal.as_deref()
    }

    /// Whether the output carries the state signal on step `k`.
    pub fn has_signal(&self, k: usize) -> bool {
        self.signal.as_ref().map_or(true, |s| s[k])
    }

    pub fn is_time_invariant(&self) -> bool {
        self.a.is_constant() && self.b.is_constant() && self.c.is_constant() && self.d.is_constant()
    }

    pub fn a_at(&self, k: usize, theta: f64) -> Cow<'_, DMatrix<f64>> {
        self.a.lerp(k, theta)
    }

    pub fn b_at(&self, k: usize, theta: f64) -> Cow<'_, DMatrix<f64>> {
        self.b.lerp(k, theta)
    }

    /// Output matrix on step `k`, zero where the signal is lost.
    pub fn c_at(&self, k: usize, theta: f64) -> Cow<'_, DMatrix<f64>> {
        if self.has_signal(k) {
            self.c.lerp(k, theta)
        } else {
            Cow::Owned(DMatrix::zeros(self.m, self.n))
        }
    }

    pub fn d_at(&self, k: usize, theta: f64) -> Cow<'_, DMatrix<f64>> {
        self.d.lerp(k, theta)
    }

    /// `B B'` interpolated on step `k`; noise enters the moment equations only through
    /// these node products.
    pub fn bbt_at(&self, k: usize, theta: f64) -> Cow<'_, DMatrix<f64>> {
        self.bbt.lerp(k, theta)
    }

    pub fn bdt_at(&self, k: usize, theta: f64) -> Cow<'_, DMatrix<f64>> {
        self.bdt.lerp(k, theta)
    }

    pub fn ddt_at(&self, k: usize, theta: f64) -> Cow<'_, DMatrix<f64>> {
        self.ddt.lerp(k, theta)
    }

    /// Restriction to nodes `from..=to` (continuous) or steps `from..to` (discrete).
    pub fn window(&self, from: usize, to: usize, p0: DMatrix<f64>) -> Result<Self> {
        if from >= to || to > self.grid.steps() {
            return Err(Error::Invalid(format!("window {from}..{to} outside grid")));
        }
        let grid = TimeGrid::from_steps(self.grid.time(from), self.grid.h(), to - from)?;
        let end = match self.kind {
            TimeKind::Continuous => to + 1,
            TimeKind::Discrete => to,
        };
        let cut = |p: &MatrixPath| match p {
            MatrixPath::Constant(m) => MatrixPath::Constant(m.clone()),
            MatrixPath::Sampled(v) => MatrixPath::Sampled(v[from..end].to_vec()),
        };
        let sys = LtvSystem::new(
            self.kind,
            grid,
            cut(&self.a),
            cut(&self.b),
            cut(&self.c),
            cut(&self.d),
            p0,
        )?;
        match &self.signal {
            Some(s) => sys.with_signal_mask(s[from..to].to_vec()),
            None => Ok(sys),
        }
    }
}

/// Stationary state covariance of a constant-coefficient system.
pub fn stationary_covariance(
    kind: TimeKind,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let s = b * b.transpose();
    match kind {
        TimeKind::Continuous => crate::numerics::solve_lyapunov_continuous(a, &s),
        TimeKind::Discrete => crate::numerics::solve_lyapunov_discrete(a, &s),
    }
}
