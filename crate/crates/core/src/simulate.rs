//! Sample paths and exact discretization across observation gaps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{balance, propagate_covariance, BalancedModel, LtvSystem, TimeKind};
use crate::numerics::{
    ensure_finite, integrate_matrix_ode, sqrtm_spd, symmetrize, MatrixPath, TimeGrid,
};

/// Sampled state, output and noise on a grid.
///
/// `y` is cumulative with `y(t0) = 0`. For continuous models `dy[k] = y[k+1] - y[k]`
/// is the output increment over step `k`; for discrete models it is the observation
/// `y(t_k) = C x_k + D w_k`, so both kinds expose per-step data the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub dw: Vec<DVector<f64>>,
    pub seed: u64,
    pub stream: u64,
}

impl Trajectory {
    /// Output data on step `k`.
    pub fn dy(&self, k: usize) -> DVector<f64> {
        &self.y[k + 1] - &self.y[k]
    }

    /// Output accumulated over nodes `from..to`.
    pub fn delta_y(&self, from: usize, to: usize) -> DVector<f64> {
        &self.y[to] - &self.y[from]
    }

    /// Every `factor`-th node, with noise increments summed per coarse step.
    pub fn subsample(&self, factor: usize) -> Result<Trajectory> {
        let grid = self.grid.coarsen(factor)?;
        let pick = |v: &[DVector<f64>]| (0..grid.nodes()).map(|k| v[k * factor].clone()).collect();
        let dw = (0..grid.steps())
            .map(|k| {
                self.dw[k * factor..(k + 1) * factor]
                    .iter()
                    .fold(DVector::zeros(self.dw[0].len()), |acc, d| acc + d)
            })
            .collect();
        Ok(Trajectory {
            grid,
            x: pick(&self.x),
            y: pick(&self.y),
            dw,
            seed: self.seed,
            stream: self.stream,
        })
    }
}

/// How the initial state is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// `x0 = P0^{1/2} z`, drawn first from the stream.
    Sampled,
    /// Deterministic start (the `P0 -> 0` limit).
    Fixed(DVector<f64>),
}

/// Euler-Maruyama sample path with `x0 ~ N(0, P0)`; replication 0 of `seed`.
pub fn simulate(sys: &LtvSystem, seed: u64) -> Result<Trajectory> {
    simulate_with(sys, seed, 0, &InitialState::Sampled)
}

/// Sample path from stream `stream` of the generator keyed by `seed`.
///
/// Continuous: `x_{k+1} = x_k + A_k x_k h + B_k dw_k`, `y_{k+1} = y_k + C_k x_k h + D_k dw_k`,
/// `dw_k ~ N(0, h I)`. Discrete: `x_{k+1} = A_k x_k + B_k w_k`, observation
/// `C_k x_k + D_k w_k`, `w_k ~ N(0, I)`.
pub fn simulate_with(
    sys: &LtvSystem,
    seed: u64,
    stream: u64,
    init: &InitialState,
) -> Result<Trajectory> {
    let grid = *sys.grid();
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut normal = |len: usize| DVector::from_fn(len, |_, _| StandardNormal.sample(&mut rng));
    let x0 = match init {
        InitialState::Sampled => sqrtm_spd(sys.p0())? * normal(n),
        InitialState::Fixed(x0) => {
            if x0.len() != n {
                return Err(Error::dim("x0", format!("expected length {n}, got {}", x0.len())));
            }
            x0.clone()
        }
    };
    let (scale, dt) = match sys.kind() {
        TimeKind::Continuous => (grid.h().sqrt(), grid.h()),
        TimeKind::Discrete => (1.0, 1.0),
    };
    let mut x = Vec::with_capacity(grid.nodes());
    let mut y = Vec::with_capacity(grid.nodes());
    let mut dw = Vec::with_capacity(grid.steps());
    x.push(x0);
    y.push(DVector::zeros(m));
    for k in 0..grid.steps() {
        let w = normal(p) * scale;
        let xk = &x[k];
        let drift = match sys.kind() {
            TimeKind::Continuous => xk + &*sys.a_at(k, 0.0) * xk * dt,
            TimeKind::Discrete => &*sys.a_at(k, 0.0) * xk,
        };
        let next = drift + &*sys.b_at(k, 0.0) * &w;
        let out = &y[k] + &*sys.c_at(k, 0.0) * xk * dt + &*sys.d_at(k, 0.0) * &w;
        if next.iter().chain(out.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: Some(grid.time(k + 1)),
                what: "simulated state or output".into(),
            });
        }
        x.push(next);
        y.push(out);
        dw.push(w);
    }
    Ok(Trajectory {
        grid,
        x,
        y,
        dw,
        seed,
        stream,
    })
}

/// Exact transition of `(x, Δy)` across a window `[t1, t2]`:
/// `x(t2) = A_d x(t1) + B_d v`, `Δy = C_d x(t1) + D_d v`, `v ~ N(0, I_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapUpdate {
    pub t1: f64,
    pub t2: f64,
    pub a_d: DMatrix<f64>,
    pub c_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub d_d: DMatrix<f64>,
    /// Covariance of the stacked noise `(B_d v, D_d v)`.
    pub joint_gramian: DMatrix<f64>,
}

impl GapUpdate {
    fn from_parts(t1: f64, t2: f64, psi: &DMatrix<f64>, sigma: DMatrix<f64>, n: usize) -> Self {
        let m = psi.nrows() - n;
        let sigma = symmetrize(&sigma);
        let root = psd_root(&sigma);
        GapUpdate {
            t1,
            t2,
            a_d: psi.view((0, 0), (n, n)).into_owned(),
            c_d: psi.view((n, 0), (m, n)).into_owned(),
            b_d: root.rows(0, n).into_owned(),
            d_d: root.rows(n, m).into_owned(),
            joint_gramian: sigma,
        }
    }

    /// Identity update over an empty window.
    pub fn identity(t: f64, n: usize, m: usize) -> Self {
        let psi = DMatrix::identity(n + m, n + m);
        Self::from_parts(t, t, &psi, DMatrix::zeros(n + m, n + m), n)
    }

    pub fn n(&self) -> usize {
        self.a_d.nrows()
    }

    pub fn m(&self) -> usize {
        self.c_d.nrows()
    }

    /// Noise blocks `(Q, S, R)` = `(B_d B_d', B_d D_d', D_d D_d')` read from the Gramian.
    pub fn noise_blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (n, m) = (self.n(), self.m());
        let g = &self.joint_gramian;
        (
            g.view((0, 0), (n, n)).into_owned(),
            g.view((0, n), (n, m)).into_owned(),
            g.view((n, n), (m, m)).into_owned(),
        )
    }

    /// Augmented transition `[[A_d, 0], [C_d, I]]` of `(x, y)`.
    pub fn augmented_transition(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut psi = DMatrix::identity(n + m, n + m);
        psi.view_mut((0, 0), (n, n)).copy_from(&self.a_d);
        psi.view_mut((n, 0), (m, n)).copy_from(&self.c_d);
        psi
    }
}

/// Symmetric PSD square root with negative eigenvalues clamped at zero.
fn psd_root(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut s = eig.eigenvectors.clone();
    for (j, l) in eig.eigenvalues.iter().enumerate() {
        s.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    symmetrize(&(s * eig.eigenvectors.transpose()))
}

/// Update over `[t1, t3]` from updates over `[t1, t2]` and `[t2, t3]`.
///
/// `Ψ13 = Ψ32 Ψ21` and `Σ13 = Ψ32 Σ21 Ψ32' + Σ32` for the augmented state `(x, y)`.
pub fn compose(first: &GapUpdate, second: &GapUpdate) -> Result<GapUpdate> {
    if first.n() != second.n() || first.m() != second.m() {
        return Err(Error::dim("gap update", "dimensions of composed updates differ"));
    }
    if (first.t2 - second.t1).abs() > 1e-9 * first.t2.abs().max(1.0) {
        return Err(Error::Invalid(format!(
            "cannot compose [{}, {}] with [{}, {}]",
            first.t1, first.t2, second.t1, second.t2
        )));
    }
    let psi2 = second.augmented_transition();
    let psi = &psi2 * first.augmented_transition();
    let sigma = &psi2 * &first.joint_gramian * psi2.transpose() + &second.joint_gramian;
    Ok(GapUpdate::from_parts(first.t1, second.t2, &psi, sigma, first.n()))
}

/// One-step update of a discrete model at step `k` (observation summed into `Δy`).
pub fn discrete_step_update(sys: &LtvSystem, k: usize) -> GapUpdate {
    let (n, m) = (sys.n(), sys.m());
    let grid = sys.grid();
    let mut psi = DMatrix::identity(n + m, n + m);
    psi.view_mut((0, 0), (n, n)).copy_from(&*sys.a_at(k, 0.0));
    psi.view_mut((n, 0), (m, n)).copy_from(&*sys.c_at(k, 0.0));
    let mut sigma = DMatrix::zeros(n + m, n + m);
    let bdt = sys.bdt_at(k, 0.0);
    sigma.view_mut((0, 0), (n, n)).copy_from(&*sys.bbt_at(k, 0.0));
    sigma.view_mut((0, n), (n, m)).copy_from(&*bdt);
    sigma.view_mut((n, 0), (m, n)).copy_from(&bdt.transpose());
    sigma.view_mut((n, n), (m, m)).copy_from(&*sys.ddt_at(k, 0.0));
    GapUpdate::from_parts(grid.time(k), grid.time(k + 1), &psi, sigma, n)
}

/// Exact update over the steps between nodes `k1` and `k2`.
pub fn exact_discretize_steps(sys: &LtvSystem, k1: usize, k2: usize) -> Result<GapUpdate> {
    let grid = *sys.grid();
    let (n, m) = (sys.n(), sys.m());
    if k1 > k2 || k2 > grid.steps() {
        return Err(Error::Invalid(format!("window {k1}..{k2} outside grid")));
    }
    if k1 == k2 {
        return Ok(GapUpdate::identity(grid.time(k1), n, m));
    }
    match sys.kind() {
        TimeKind::Discrete => {
            let mut acc = discrete_step_update(sys, k1);
            for k in k1 + 1..k2 {
                acc = compose(&acc, &discrete_step_update(sys, k))?;
            }
            Ok(acc)
        }
        TimeKind::Continuous => {
            // augmented drift [[A, 0], [C, 0]] and noise [B; D]
            let drift = |k: usize, th: f64| {
                let mut a = DMatrix::zeros(n + m, n + m);
                a.view_mut((0, 0), (n, n)).copy_from(&*sys.a_at(k, th));
                a.view_mut((n, 0), (m, n)).copy_from(&*sys.c_at(k, th));
                a
            };
            let forcing = |k: usize, th: f64| {
                let mut s = DMatrix::zeros(n + m, n + m);
                let bdt = sys.bdt_at(k, th);
                s.view_mut((0, 0), (n, n)).copy_from(&*sys.bbt_at(k, th));
                s.view_mut((0, n), (n, m)).copy_from(&*bdt);
                s.view_mut((n, 0), (m, n)).copy_from(&bdt.transpose());
                s.view_mut((n, n), (m, m)).copy_from(&*sys.ddt_at(k, th));
                s
            };
            let psi = integrate_matrix_ode(
                &grid,
                k1,
                k2,
                DMatrix::identity(n + m, n + m),
                false,
                |k, th, p| drift(k, th) * p,
            )?
            .pop()
            .unwrap();
            let sigma = integrate_matrix_ode(
                &grid,
                k1,
                k2,
                DMatrix::zeros(n + m, n + m),
                true,
                |k, th, s| {
                    let a = drift(k, th);
                    let as_ = &a * s;
                    &as_ + as_.transpose() + forcing(k, th)
                },
            )?
            .pop()
            .unwrap();
            ensure_finite(&sigma, grid.time(k2), "gap Gramian")?;
            Ok(GapUpdate::from_parts(grid.time(k1), grid.time(k2), &psi, sigma, n))
        }
    }
}

/// Exact update of `(x, Δy)` across `[t1, t2]`.
pub fn exact_discretize_gap(sys: &LtvSystem, t1: f64, t2: f64) -> Result<GapUpdate> {
    let k1 = sys.grid().node(t1)?;
    let k2 = sys.grid().node(t2)?;
    if k2 < k1 {
        return Err(Error::Invalid(format!("gap end {t2} precedes start {t1}")));
    }
    exact_discretize_steps(sys, k1, k2)
}

/// Discrete model whose step `k` is the exact update of `sys` over coarse step `k`.
///
/// `coarse` must be `sys.grid()` coarsened by an integer factor. The result has noise
/// dimension `n + m`, `B_d`, `D_d` taken from the symmetric root of each step Gramian,
/// and its observation on step `k` is the output increment of `sys` over that step.
pub fn discretize_system(sys: &LtvSystem, coarse: &TimeGrid) -> Result<LtvSystem> {
    if sys.kind() != TimeKind::Continuous {
        return Err(Error::Invalid("discretize_system expects a continuous model".into()));
    }
    let fine = sys.grid();
    let ratio = coarse.h() / fine.h();
    let factor = ratio.round() as usize;
    if factor == 0 || (ratio - factor as f64).abs() > 1e-9 * ratio || *coarse != fine.coarsen(factor)? {
        return Err(Error::Invalid(format!(
            "coarse step {} is not a multiple of the model step {}",
            coarse.h(),
            fine.h()
        )));
    }
    let updates = (0..coarse.steps())
        .map(|k| exact_discretize_steps(sys, k * factor, (k + 1) * factor))
        .collect::<Result<Vec<_>>>()?;
    let path = |f: fn(&GapUpdate) -> DMatrix<f64>| {
        MatrixPath::Sampled(updates.iter().map(f).collect())
    };
    LtvSystem::new(
        TimeKind::Discrete,
        *coarse,
        path(|u| u.a_d.clone()),
        path(|u| u.b_d.clone()),
        path(|u| u.c_d.clone()),
        path(|u| u.d_d.clone()),
        sys.p0().clone(),
    )
}

/// Exactly discretized balanced model on `coarse`, rebalanced in discrete time.
///
/// The gap Gramians are integrated on the fine grid of `bal`; the discrete model is
/// then renormalized so that `A A' + B B' = I` holds to roundoff on every step.
pub fn discrete_reference(bal: &BalancedModel, coarse: &TimeGrid) -> Result<BalancedModel> {
    let disc = discretize_system(bal.system(), coarse)?;
    let cov = propagate_covariance(&disc)?;
    balance(&disc, &cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn brownian(t_end: f64, h: f64) -> LtvSystem {
        // dx = dw1, dy = x dt + dw2
        LtvSystem::new(
            TimeKind::Continuous,
            TimeGrid::new(0.0, t_end, h).unwrap(),
            m(1, 1, &[0.0]),
            m(1, 2, &[1.0, 0.0]),
            m(1, 1, &[1.0]),
            m(1, 2, &[0.0, 1.0]),
            m(1, 1, &[1.0]),
        )
        .unwrap()
    }

    #[test]
    fn brownian_gap_closed_form() {
        let sys = brownian(3.0, 0.01);
        let g = exact_discretize_gap(&sys, 0.5, 2.5).unwrap();
        let tau: f64 = 2.0;
        assert!((g.a_d[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((g.c_d[(0, 0)] - tau).abs() < 1e-12);
        let expected = m(2, 2, &[tau, tau * tau / 2.0, tau * tau / 2.0, tau.powi(3) / 3.0 + tau]);
        assert!((&g.joint_gramian - expected).amax() < 1e-10);
        let mut stacked = DMatrix::zeros(2, 2);
        stacked.rows_mut(0, 1).copy_from(&g.b_d);
        stacked.rows_mut(1, 1).copy_from(&g.d_d);
        assert!((&stacked * stacked.transpose() - &g.joint_gramian).amax() < 1e-8);
    }

    #[test]
    fn brownian_gap_matches_trapezoid_quadrature() {
        // independent oracle: Σ = ∫ [1; t2-s][1; t2-s]' ds + diag(0, τ) by trapezoid
        let sys = brownian(2.0, 0.01);
        let g = exact_discretize_gap(&sys, 0.0, 1.5).unwrap();
        let steps = 30_000;
        let ds = 1.5 / steps as f64;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for i in 0..=steps {
            let r = 1.5 - i as f64 * ds;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            acc += m(2, 2, &[1.0, r, r, r * r + 1.0]) * (w * ds);
        }
        assert!((g.joint_gramian - acc).amax() < 1e-7);
    }

    #[test]
    fn empty_gap_is_identity() {
        let sys = brownian(1.0, 0.1);
        let g = exact_discretize_gap(&sys, 0.3, 0.3).unwrap();
        assert_eq!(g.a_d, DMatrix::identity(1, 1));
        assert_eq!(g.c_d, DMatrix::zeros(1, 1));
        assert_eq!(g.joint_gramian, DMatrix::zeros(2, 2));
        assert!(matches!(
            exact_discretize_gap(&sys, 0.3, 0.35),
            Err(Error::OffGrid { .. })
        ));
    }

    #[test]
    fn composition_matches_direct() {
        let a = m(2, 2, &[0.0, 1.0, -0.3, -0.7]);
        let sys = LtvSystem::new(
            TimeKind::Continuous,
            TimeGrid::new(0.0, 4.0, 0.01).unwrap(),
            a,
            m(2, 2, &[0.0, 0.0, 1.0, 0.0]),
            m(1, 2, &[1.0, 0.0]),
            m(1, 2, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let direct = exact_discretize_gap(&sys, 1.0, 3.0).unwrap();
        let left = exact_discretize_gap(&sys, 1.0, 2.2).unwrap();
        let right = exact_discretize_gap(&sys, 2.2, 3.0).unwrap();
        let composed = compose(&left, &right).unwrap();
        assert!((&composed.a_d - &direct.a_d).amax() < 1e-12);
        assert!((&composed.c_d - &direct.c_d).amax() < 1e-10);
        assert!((&composed.joint_gramian - &direct.joint_gramian).amax() < 1e-8);
        let lo = SymmetricEigen::new(direct.joint_gramian.clone()).eigenvalues.min();
        let hi = SymmetricEigen::new(direct.joint_gramian.clone()).eigenvalues.max();
        assert!(lo >= -1e-12 * hi);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let sys = brownian(1.0, 0.01);
        let a = simulate(&sys, 42).unwrap();
        let b = simulate(&sys, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_with(&sys, 42, 1, &InitialState::Sampled).unwrap();
        assert_ne!(a.x[1], c.x[1]);
        assert_eq!(a.y[0], DVector::zeros(1));
    }

    #[test]
    fn noise_free_flow_follows_transition() {
        let a = m(2, 2, &[0.0, 1.0, -0.3, -0.7]);
        let grid = TimeGrid::new(0.0, 2.0, 1e-3).unwrap();
        // B = 0 is allowed as a degenerate forcing; D stays nonsingular
        let sys = LtvSystem::new(
            TimeKind::Continuous,
            grid,
            a.clone(),
            m(2, 1, &[0.0, 0.0]),
            m(1, 2, &[1.0, 0.0]),
            m(1, 1, &[1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![1.0, -0.5]);
        let traj = simulate_with(&sys, 1, 0, &InitialState::Fixed(x0.clone())).unwrap();
        let phi = crate::numerics::transition_matrix(&grid, sys.a(), 0.0, 2.0).unwrap();
        assert!((&traj.x[grid.steps()] - phi * x0).amax() < 5e-3);
    }

    #[test]
    fn discrete_steps_compose_observations() {
        let sys = LtvSystem::new(
            TimeKind::Discrete,
            TimeGrid::unit(3),
            m(1, 1, &[0.5]),
            m(1, 2, &[1.0, 0.0]),
            m(1, 1, &[2.0]),
            m(1, 2, &[0.0, 1.0]),
            m(1, 1, &[1.0]),
        )
        .unwrap();
        let g = exact_discretize_steps(&sys, 0, 2).unwrap();
        // x2 = 0.25 x0 + 0.5 w0 + w1; y0 + y1 = 2 x0 + v0 + 2 (0.5 x0 + w0) + v1
        assert!((g.a_d[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((g.c_d[(0, 0)] - 3.0).abs() < 1e-15);
        let expected = m(2, 2, &[1.25, 1.0, 1.0, 6.0]);
        assert!((g.joint_gramian - expected).amax() < 1e-14);
    }

    #[test]
    fn discretized_system_reproduces_gap_updates() {
        let sys = brownian(1.0, 0.01);
        let coarse = sys.grid().coarsen(10).unwrap();
        let disc = discretize_system(&sys, &coarse).unwrap();
        assert_eq!(disc.kind(), TimeKind::Discrete);
        let over_two = exact_discretize_steps(&disc, 2, 4).unwrap();
        let direct = exact_discretize_gap(&sys, 0.2, 0.4).unwrap();
        assert!((over_two.joint_gramian - direct.joint_gramian).amax() < 1e-12);
    }
}
