//! Stage orchestration: simulate, filter both ways, fuse, check.

use std::fs;
use std::path::{Path, PathBuf};

use balfuse::filtering::{backward_filter, forward_filter, Direction, FilterResult, GapMode, Layout, ObservationPattern};
use balfuse::fusion::{covariance_identity_residual, fuse, weight_identity_residual, SmootherResult};
use balfuse::model::{balance, propagate_covariance};
use balfuse::simulate::{simulate_with, InitialState, Trajectory};
use balfuse::BalancedModel;
use rayon::prelude::*;

use crate::checks::{self, OracleWindow};
use crate::config::{MatrixSpec, ModeConfig, RunConfig};
use crate::error::CliError;
use crate::montecarlo::monte_carlo;
use crate::report::{Check, RunReport};
use crate::table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Run,
    Simulate,
    Filter,
    Smooth,
    Verify,
}

/// Config turned into core objects.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub balanced: BalancedModel,
    pub pattern: ObservationPattern,
    pub layout: Layout,
}

impl Prepared {
    pub fn new(config: &RunConfig) -> Result<Self, CliError> {
        config.validate()?;
        let sys = config.system()?;
        let cov = propagate_covariance(&sys)?;
        let balanced = balance(&sys, &cov)?;
        let pattern = config.pattern()?;
        let layout = pattern.resolve(sys.grid())?;
        Ok(Prepared {
            config: config.clone(),
            balanced,
            pattern,
            layout,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out.join(name)
    }

    /// The model that generates data: on signal-loss gaps the output carries noise only.
    pub fn source_model(&self) -> Result<BalancedModel, CliError> {
        Ok(source_model(&self.balanced, &self.layout)?)
    }

    pub fn simulate(&self, stream: u64) -> Result<Trajectory, CliError> {
        let src = self.source_model()?;
        Ok(simulate_with(src.system(), self.config.seed, stream, &InitialState::Sampled)?)
    }
}

pub fn source_model(bal: &BalancedModel, layout: &Layout) -> balfuse::Result<BalancedModel> {
    if layout.mode() == GapMode::SignalLoss {
        bal.with_signal_mask(layout.observed_steps().to_vec())
    } else {
        Ok(bal.clone())
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn stage_simulate(p: &Prepared, report: &mut RunReport) -> Result<Trajectory, CliError> {
    let traj = report.time("simulate", || p.simulate(0))?;
    let path = p.path(table::TRAJECTORY);
    table::write_trajectory(&path, &traj, &p.layout)?;
    report.files.push(path);
    Ok(traj)
}

fn stage_filter(p: &Prepared, traj: &Trajectory, report: &mut RunReport) -> Result<(FilterResult, FilterResult), CliError> {
    let fwd = report.time("forward_filter", || forward_filter(&p.balanced, &p.pattern, traj))?;
    let bwd = report.time("backward_filter", || backward_filter(&p.balanced, &p.pattern, traj))?;
    for (res, name) in [(&fwd, table::FORWARD), (&bwd, table::BACKWARD)] {
        let path = p.path(name);
        table::write_filter(&path, res, &p.layout)?;
        report.files.push(path);
    }
    Ok((fwd, bwd))
}

fn stage_smooth(p: &Prepared, fwd: &FilterResult, bwd: &FilterResult, report: &mut RunReport) -> Result<SmootherResult, CliError> {
    let sm = report.time("fuse", || fuse(fwd, bwd))?;
    let path = p.path(table::SMOOTHED);
    table::write_smoothed(&path, &sm)?;
    report.files.push(path);
    Ok(sm)
}

fn read_trajectory(p: &Prepared) -> Result<Trajectory, CliError> {
    let sys = p.balanced.system();
    table::read_trajectory(&p.path(table::TRAJECTORY), sys.grid(), sys.n(), sys.m(), sys.p())
}

fn read_filters(p: &Prepared) -> Result<(FilterResult, FilterResult), CliError> {
    let sys = p.balanced.system();
    let read = |name, dir| table::read_filter(&p.path(name), dir, sys.grid(), sys.n(), sys.m());
    Ok((read(table::FORWARD, Direction::Forward)?, read(table::BACKWARD, Direction::Backward)?))
}

/// Invariants of one run, recorded under fixed names.
fn deterministic_checks(
    p: &Prepared,
    traj: &Trajectory,
    fwd: &FilterResult,
    bwd: &FilterResult,
    sm: &SmootherResult,
    report: &mut RunReport,
) -> Result<(), CliError> {
    let bal = &p.balanced;
    report.insert("balance_identity", Check::within(checks::balance_identity(bal), 1e-8));
    let drift = report.time("covariance_drift", || checks::covariance_drift(bal))?;
    report.insert("balanced_covariance_drift", Check::within(drift, 1e-6));

    for (name, res) in [("forward", fwd), ("backward", bwd)] {
        let (hi, lo) = checks::q_bounds(res);
        report.insert(format!("{name}_q_upper"), Check::within(hi, 1e-8));
        report.insert(format!("{name}_q_positive"), Check::flag(lo, lo > 0.0));
    }
    report.insert("covariance_identity", Check::within(covariance_identity_residual(fwd, bwd, sm), 1e-8));
    report.insert("weight_identity", Check::within(weight_identity_residual(bwd, sm), 1e-8));
    report.insert("smoother_dominance", Check::within(checks::dominance_violation(fwd, bwd, sm), 1e-10));
    report.insert("fusion_jitter_nodes", Check::diagnostic(sm.flagged.len() as f64));

    let excess = checks::trace_excess(fwd, bwd, sm);
    report.insert("smoother_trace_minimal", Check::flag(excess, excess <= 1e-12));
    // gap growth is read off the increments-only forward pass, whatever the configured mode
    let dy_pattern = p.pattern.with_mode(GapMode::IncrementsOnly);
    let free = if p.pattern.mode() == GapMode::IncrementsOnly {
        fwd.clone()
    } else {
        forward_filter(bal, &dy_pattern, traj)?
    };
    if let Some(g) = checks::gap_trace_growth(&free, &dy_pattern)? {
        report.insert("gap_trace_growth", Check::flag(g, g > 0.0));
    }

    let window = OracleWindow::choose(bal.system().grid(), &p.pattern);
    let found = report.time("oracle", || -> Result<Vec<(ModeConfig, checks::OracleComparison)>, CliError> {
        let mut found = Vec::new();
        for mode in ModeConfig::ALL {
            let pat = p.pattern.with_mode(mode.gap_mode());
            let layout = pat.resolve(bal.system().grid())?;
            // signal-loss data differ from the others, so each mode gets its own path
            let data = if mode.gap_mode() == GapMode::SignalLoss || p.pattern.mode() == GapMode::SignalLoss {
                let src = source_model(bal, &layout)?;
                simulate_with(src.system(), p.config.seed, 0, &InitialState::Sampled)?
            } else {
                traj.clone()
            };
            found.push((mode, checks::oracle_comparison(bal, &data, &pat, window)?));
        }
        Ok(found)
    })?;
    for (mode, cmp) in found {
        report.insert(format!("oracle_max_error.{}", mode.name()), Check::within(cmp.max_error(), 1e-6));
        if mode == ModeConfig::Y {
            report.insert("interior_delta_y_effect", Check::diagnostic(cmp.interior_delta_y));
        }
    }
    Ok(())
}

/// Ratios of successive max-node differences of the forward estimate under step halving.
///
/// `levels = halvings + 2` grids share one Brownian path simulated on the finest; the
/// differences are averaged over `replications` paths.
pub fn convergence_ratios(config: &RunConfig, halvings: usize, replications: usize) -> Result<Vec<f64>, CliError> {
    let levels = halvings + 2;
    let prepared = (0..levels)
        .map(|j| {
            let mut cfg = config.clone();
            cfg.step = config.step / (1u64 << j) as f64;
            Prepared::new(&cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let finest = &prepared[levels - 1];
    let coarse_nodes = prepared[0].balanced.system().grid().nodes();
    let one = |r: usize| -> Result<Vec<f64>, CliError> {
        let path = finest.simulate(r as u64)?;
        let estimates = prepared
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let traj = path.subsample(1 << (levels - 1 - j))?;
                let fwd = forward_filter(&p.balanced, &p.pattern, &traj)?;
                Ok((0..coarse_nodes).map(|k| fwd.x[k << j].clone()).collect::<Vec<_>>())
            })
            .collect::<balfuse::Result<Vec<_>>>()?;
        Ok(estimates
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max))
            .collect())
    };
    let diffs: Vec<Vec<f64>> = (0..replications).into_par_iter().map(one).collect::<Result<_, _>>()?;
    let mean: Vec<f64> = (0..levels - 1)
        .map(|j| diffs.iter().map(|d| d[j]).sum::<f64>() / replications as f64)
        .collect();
    Ok(mean.windows(2).map(|w| w[0] / w[1]).collect())
}

/// The configured run cut to `[0, 5]` with step at most 0.02.
///
/// Euler-Maruyama paths and the Euler estimate update carry an `O(h)` bias that the
/// `5/sqrt(N)` tolerances cannot absorb at coarser steps. Per-node matrices are kept as is.
pub fn statistical_config(config: &RunConfig) -> RunConfig {
    let mut cfg = config.clone();
    let constant = [&cfg.system.a, &cfg.system.b, &cfg.system.c, &cfg.system.d]
        .iter()
        .all(|m| matches!(m, MatrixSpec::Constant(_)));
    if !constant {
        return cfg;
    }
    let refine = (config.step / 0.02 - 1e-9).ceil().max(1.0);
    cfg.step = config.step / refine;
    let limit = 5.0;
    let whole = (limit / config.step - (limit / config.step).round()).abs() < 1e-9;
    if cfg.horizon > limit && whole {
        cfg.horizon = limit;
        cfg.pattern.intervals.retain(|iv| iv.start < limit);
        for iv in &mut cfg.pattern.intervals {
            iv.end = iv.end.min(limit);
        }
    }
    cfg
}

/// Monte Carlo suite: tolerances `5/sqrt(N)`, increments `4/sqrt(N)`.
fn statistical_checks(p: &Prepared, report: &mut RunReport) -> Result<(), CliError> {
    let n = p.config.replications;
    let stat = Prepared::new(&statistical_config(&p.config))?;
    let src = stat.source_model()?;
    let mc = report.time("monte_carlo", || monte_carlo(&src, &stat.pattern, n, p.config.seed))?;
    let tol = 5.0 / (n as f64).sqrt();
    let inc_tol = 4.0 / (n as f64).sqrt();
    report.insert("mc_forward_error_covariance", Check::within(mc.forward_error_cov, tol));
    report.insert("mc_backward_error_covariance", Check::within(mc.backward_error_cov, tol));
    report.insert("mc_filter_cross_covariance", Check::within(mc.cross_cov, tol));
    report.insert("mc_filter_orthogonality", Check::within(mc.filter_orthogonality, tol));
    report.insert("mc_smoother_orthogonality", Check::within(mc.smoother_orthogonality, tol));
    report.insert("mc_increment_normalization", Check::within(mc.increment_normalization, inc_tol));
    report.insert("mc_increment_orthogonality", Check::within(mc.increment_orthogonality, inc_tol));
    report.insert("mc_increment_state_orthogonality", Check::within(mc.increment_state, inc_tol));

    let ratios = report.time("convergence", || convergence_ratios(&stat.config, 3, 16))?;
    for (i, r) in ratios.iter().enumerate() {
        report.insert(format!("convergence_ratio_{}", i + 1), Check::within((r - 2.0).abs(), 0.3));
    }
    Ok(())
}

fn determinism_check(p: &Prepared, report: &mut RunReport) -> Result<(), CliError> {
    let dir = p.path(".determinism");
    ensure_dir(&dir)?;
    let copy = dir.join(table::TRAJECTORY);
    table::write_trajectory(&copy, &p.simulate(0)?, &p.layout)?;
    let original = p.path(table::TRAJECTORY);
    let read = |path: &Path| fs::read(path).map_err(|e| CliError::io(path, e));
    let same = read(&original)? == read(&copy)?;
    fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    report.insert("determinism", Check::flag(if same { 0.0 } else { 1.0 }, same));
    Ok(())
}

pub fn run_pipeline(config: &RunConfig) -> Result<RunReport, CliError> {
    run_subcommand(Subcommand::Run, config)
}

pub fn run_subcommand(cmd: Subcommand, config: &RunConfig) -> Result<RunReport, CliError> {
    let mut report = RunReport::default();
    let p = report.time("prepare", || Prepared::new(config))?;
    ensure_dir(p.out_dir())?;
    match cmd {
        Subcommand::Simulate => {
            stage_simulate(&p, &mut report)?;
        }
        Subcommand::Filter => {
            let traj = read_trajectory(&p)?;
            stage_filter(&p, &traj, &mut report)?;
        }
        Subcommand::Smooth => {
            let (fwd, bwd) = read_filters(&p)?;
            stage_smooth(&p, &fwd, &bwd, &mut report)?;
        }
        Subcommand::Run | Subcommand::Verify => {
            let traj = stage_simulate(&p, &mut report)?;
            let (fwd, bwd) = stage_filter(&p, &traj, &mut report)?;
            let sm = stage_smooth(&p, &fwd, &bwd, &mut report)?;
            deterministic_checks(&p, &traj, &fwd, &bwd, &sm, &mut report)?;
            if cmd == Subcommand::Verify {
                statistical_checks(&p, &mut report)?;
                determinism_check(&p, &mut report)?;
            }
            report.write(p.out_dir())?;
        }
    }
    Ok(report)
}
