use std::borrow::Cow;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance used when matching a time against grid nodes.
pub const NODE_TOLERANCE: f64 = 1e-9;

/// Uniform time grid `t0, t0 + h, ..., t0 + N h`.
///
/// Discrete-time models use the unit grid (`t0 = 0`, `h = 1`) so that node `k`
/// is the integer time `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    h: f64,
    steps: usize,
}

impl TimeGrid {
    /// Grid over `[t0, t_end]` with step `h`; the span must be an integer number of steps.
    pub fn new(t0: f64, t_end: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::Invalid(format!(
                "grid needs finite t0, t_end and h > 0 (got t0 = {t0}, t_end = {t_end}, h = {h})"
            )));
        }
        if t_end < t0 {
            return Err(Error::Invalid(format!("grid end {t_end} precedes start {t0}")));
        }
        let ratio = (t_end - t0) / h;
        let steps = ratio.round();
        if (ratio - steps).abs() > NODE_TOLERANCE * ratio.max(1.0) {
            return Err(Error::OffGrid { t: t_end, t0, h });
        }
        Ok(Self {
            t0,
            h,
            steps: steps as usize,
        })
    }

    pub fn from_steps(t0: f64, h: f64, steps: usize) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() || !t0.is_finite() {
            return Err(Error::Invalid(format!("invalid grid t0 = {t0}, h = {h}")));
        }
        Ok(Self { t0, h, steps })
    }

    /// Integer grid `0, 1, ..., steps` for discrete-time models.
    pub fn unit(steps: usize) -> Self {
        Self {
            t0: 0.0,
            h: 1.0,
            steps,
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes()).map(|k| self.time(k))
    }

    /// Index of the node at time `t`, or `OffGrid`.
    pub fn node(&self, t: f64) -> Result<usize> {
        let off = || Error::OffGrid {
            t,
            t0: self.t0,
            h: self.h,
        };
        let ratio = (t - self.t0) / self.h;
        let k = ratio.round();
        if !ratio.is_finite() || k < 0.0 || k > self.steps as f64 {
            return Err(off());
        }
        if (ratio - k).abs() > NODE_TOLERANCE * ratio.abs().max(1.0) {
            return Err(off());
        }
        Ok(k as usize)
    }

    /// Grid with step `factor * h` over the same span.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::Invalid(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.steps
            )));
        }
        Ok(Self {
            t0: self.t0,
            h: self.h * factor as f64,
            steps: self.steps / factor,
        })
    }

    /// Grid with step `h / factor` over the same span.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Invalid("refinement factor must be positive".into()));
        }
        Ok(Self {
            t0: self.t0,
            h: self.h / factor as f64,
            steps: self.steps * factor,
        })
    }
}

/// A matrix-valued function of time sampled at grid nodes.
///
/// Between nodes the function is the linear interpolant of the two adjacent
/// samples. A constant path stores a single matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixPath {
    Constant(DMatrix<f64>),
    Sampled(Vec<DMatrix<f64>>),
}

impl MatrixPath {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MatrixPath::Constant(m) => m.shape(),
            MatrixPath::Sampled(v) => v.first().map(|m| m.shape()).unwrap_or((0, 0)),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MatrixPath::Constant(_))
    }

    /// Number of samples, `None` for a constant path.
    pub fn len(&self) -> Option<usize> {
        match self {
            MatrixPath::Constant(_) => None,
            MatrixPath::Sampled(v) => Some(v.len()),
        }
    }

    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        match self {
            MatrixPath::Constant(m) => m,
            MatrixPath::Sampled(v) => &v[k],
        }
    }

    /// Value at fraction `theta` in `[0, 1]` of the interval between nodes `k` and `k + 1`.
    pub fn lerp(&self, k: usize, theta: f64) -> Cow<'_, DMatrix<f64>> {
        match self {
            MatrixPath::Constant(m) => Cow::Borrowed(m),
            MatrixPath::Sampled(v) => {
                if theta == 0.0 {
                    Cow::Borrowed(&v[k])
                } else if theta == 1.0 {
                    Cow::Borrowed(&v[k + 1])
                } else {
                    Cow::Owned(&v[k] * (1.0 - theta) + &v[k + 1] * theta)
                }
            }
        }
    }

    pub fn map<F>(&self, mut f: F) -> MatrixPath
    where
        F: FnMut(&DMatrix<f64>) -> DMatrix<f64>,
    {
        match self {
            MatrixPath::Constant(m) => MatrixPath::Constant(f(m)),
            MatrixPath::Sampled(v) => MatrixPath::Sampled(v.iter().map(f).collect()),
        }
    }

    /// Pointwise combination; the result is constant only if both inputs are.
    pub fn zip_map<F>(&self, other: &MatrixPath, mut f: F) -> MatrixPath
    where
        F: FnMut(&DMatrix<f64>, &DMatrix<f64>) -> DMatrix<f64>,
    {
        match (self, other) {
            (MatrixPath::Constant(a), MatrixPath::Constant(b)) => MatrixPath::Constant(f(a, b)),
            _ => {
                let n = self.len().or(other.len()).unwrap_or(1);
                MatrixPath::Sampled((0..n).map(|k| f(self.at(k), other.at(k))).collect())
            }
        }
    }

    /// Checks the sample count and that every sample has the given shape and finite entries.
    pub fn validate(&self, field: &str, samples: usize, shape: (usize, usize)) -> Result<()> {
        if let Some(len) = self.len() {
            if len != samples {
                return Err(Error::dim(
                    field,
                    format!("expected {samples} samples, got {len}"),
                ));
            }
        }
        let check = |m: &DMatrix<f64>| -> Result<()> {
            if m.shape() != shape {
                return Err(Error::dim(
                    field,
                    format!(
                        "expected {}x{}, got {}x{}",
                        shape.0,
                        shape.1,
                        m.nrows(),
                        m.ncols()
                    ),
                ));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    t: None,
                    what: format!("{field} has non-finite entries"),
                });
            }
            Ok(())
        };
        match self {
            MatrixPath::Constant(m) => check(m),
            MatrixPath::Sampled(v) => v.iter().try_for_each(check),
        }
    }
}

impl From<DMatrix<f64>> for MatrixPath {
    fn from(m: DMatrix<f64>) -> Self {
        MatrixPath::Constant(m)
    }
}
