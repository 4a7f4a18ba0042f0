mod common;

use balfuse::filtering::StepModel;
use balfuse::model::{
    allpass_extension, backward_transfer, balance, balance_residual, eval_structural_function,
    forward_transfer, propagate_covariance,
};
use balfuse::simulate::discrete_step_update;
use balfuse::{BalancedModel, LtvSystem, MatrixPath, TimeGrid, TimeKind};
use common::*;
use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;

/// Balanced discrete model built from the first rows of a random orthogonal matrix.
fn random_discrete(entries: &[f64], c: &[f64], d: &[f64], steps: usize) -> BalancedModel {
    let (n, p) = (3, 2);
    let q = DMatrix::from_row_slice(n + p, n + p, entries).qr().q();
    let sys = LtvSystem::new(
        TimeKind::Discrete,
        TimeGrid::unit(steps),
        q.view((0, 0), (n, n)).into_owned(),
        q.view((0, n), (n, p)).into_owned(),
        m(1, n, c),
        m(1, p, d),
        DMatrix::identity(n, n),
    )
    .unwrap();
    BalancedModel::from_balanced(sys).unwrap()
}

fn discrete_inputs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-1.0..1.0f64, 25),
        prop::collection::vec(-2.0..2.0f64, 3),
        (-1.0..1.0f64, 0.5..2.0f64).prop_map(|(a, b)| vec![a, b]),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn discrete_extension_is_orthogonal((e, c, d) in discrete_inputs()) {
        let bal = random_discrete(&e, &c, &d, 3);
        let ext = allpass_extension(&bal).unwrap();
        for k in 0..3 {
            let u = ext.u(k);
            let eye = DMatrix::<f64>::identity(5, 5);
            prop_assert!((&u * u.transpose() - &eye).norm() <= 1e-10);
            prop_assert!((u.transpose() * &u - &eye).norm() <= 1e-10);
        }
    }

    #[test]
    fn discrete_structural_function_is_all_pass((e, c, d) in discrete_inputs(), r in 0.2..3.0f64, phase in 0.0..6.28f64) {
        let bal = random_discrete(&e, &c, &d, 1);
        let z = Complex::from_polar(r, phase);
        if let Ok(v) = eval_structural_function(bal.extension(), 0, z) {
            prop_assert!(v.residual <= 1e-8 * (1.0 + v.u.norm().powi(2)));
        }
    }

    #[test]
    fn reversed_step_is_the_backward_model((e, c, d) in discrete_inputs()) {
        let bal = random_discrete(&e, &c, &d, 2);
        let ext = bal.extension();
        for k in 0..2 {
            let rev = StepModel::from_update(&discrete_step_update(bal.system(), k)).reversed();
            let (cbar, dbar) = bal.backward_output_step(k);
            let h = ext.h().at(k);
            prop_assert!((&rev.a - bal.system().a().at(k).transpose()).amax() < 1e-12);
            prop_assert!((&rev.c - &cbar).amax() < 1e-12);
            prop_assert!((&rev.q - h.transpose() * h).amax() < 1e-12);
            prop_assert!((&rev.s - h.transpose() * dbar.transpose()).amax() < 1e-12);
            prop_assert!((&rev.r - &dbar * dbar.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn continuous_structural_function_is_all_pass(omega in -50.0..50.0f64) {
        let bal = example_balanced(1.0, 0.01);
        let v = eval_structural_function(bal.extension(), 0, Complex::new(0.0, omega)).unwrap();
        prop_assert!(v.residual <= 1e-8);
    }

    #[test]
    fn forward_transfer_factors_through_backward(re in -3.0..3.0f64, im in -10.0..10.0f64) {
        let bal = example_balanced(1.0, 0.01);
        let s = Complex::new(re, im);
        // stay clear of the poles of both resolvents
        prop_assume!((s.re.abs() - 0.35).abs() > 0.05 || (s.im.abs() - 0.4213).abs() > 0.05);
        let w = forward_transfer(&bal, 0, s).unwrap();
        let wbar = backward_transfer(&bal, 0, s).unwrap();
        let u = eval_structural_function(bal.extension(), 0, s).unwrap().u;
        prop_assert!((&w - wbar * u).norm() <= 1e-8 * (1.0 + w.norm()));
    }

    #[test]
    fn time_varying_balance_holds(a1 in prop::collection::vec(-0.5..0.5f64, 4), b in prop::collection::vec(-1.0..1.0f64, 2), freq in 0.5..4.0f64) {
        let grid = TimeGrid::new(0.0, 2.0, 0.01).unwrap();
        let a = MatrixPath::Sampled(
            grid.times()
                .map(|t| m(2, 2, &[-1.0, 0.5, -0.5, -1.5]) + m(2, 2, &a1) * (freq * t).sin())
                .collect(),
        );
        let bm = m(2, 2, &[1.0, 0.0, b[0], b[1].abs() + 0.3]);
        let sys = LtvSystem::new(
            TimeKind::Continuous, grid, a, bm, m(1, 2, &[1.0, 0.0]), m(1, 2, &[0.0, 1.0]),
            m(2, 2, &[1.5, 0.2, 0.2, 0.7]),
        ).unwrap();
        let bal = balance(&sys, &propagate_covariance(&sys).unwrap()).unwrap();
        prop_assert!(balance_residual(bal.system()).0 <= 1e-8);
        let again = propagate_covariance(bal.system()).unwrap();
        let eye = DMatrix::<f64>::identity(2, 2);
        let drift = again.all().iter().map(|p| (p - &eye).amax()).fold(0.0, f64::max);
        prop_assert!(drift <= 1e-6, "drift {drift:e}");
    }
}

#[test]
fn example_balances_on_long_horizon() {
    let bal = example_balanced(45.0, 0.01);
    assert!(balance_residual(bal.system()).0 <= 1e-8);
    let cov = propagate_covariance(bal.system()).unwrap();
    let eye = DMatrix::<f64>::identity(2, 2);
    assert!(cov.all().iter().all(|p| (p - &eye).amax() <= 1e-6));
}
