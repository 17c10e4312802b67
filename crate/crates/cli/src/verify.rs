//! The acceptance suite: each criterion runs a fixed experiment, compares a
//! measured quantity to its bound, and reports a verdict with its runtime.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ordergap::actor_critic::{ac_commutator_report, analytic_sigma_bar, ACModel, AcVariant};
use ordergap::analysis::{estimate_remainder, richardson_jacobian, validity_radius};
use ordergap::bandit::{
    analytic_commutator_entry, flat, gramian_diagnostics, BanditConfig, BanditEvent, BanditPair, BanditState, Selection,
};
use ordergap::linear::{GreedyNoiseSampler, LinearEvent, NoisyLinearSampler};
use ordergap::rlm::{fit_log_linear, rlm_coverage_report, sign_varying_example, RlmModel, RlmPair};
use ordergap::sgd::{MinibatchSampler, QuadraticProblem, SgdPair};
use ordergap::stopping::{gap_envelope, min_window, n_eps_m};
use ordergap::{
    child_rng, commutator_stats, effective_equilibrium, estimate_constants, noise_floor, root_rng, run_trajectory,
    stopping_bounds, windowed_stop, EquilibriumOptions, Event, EventSampler, FiniteEvents, JacobianPair, LinearPair,
    OperatorPair, StateVector, StoppingConfig, TheoryConstants,
};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::LoadedConfig;
use crate::experiment::run_experiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Module {
    Core,
    Analysis,
    Stopping,
    DomainBandit,
    DomainActorCritic,
    DomainRlm,
    DomainSgd,
    Harness,
}

impl Module {
    pub const ALL: [Module; 8] = [
        Module::Core,
        Module::Analysis,
        Module::Stopping,
        Module::DomainBandit,
        Module::DomainActorCritic,
        Module::DomainRlm,
        Module::DomainSgd,
        Module::Harness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Module::Core => "core",
            Module::Analysis => "analysis",
            Module::Stopping => "stopping",
            Module::DomainBandit => "domain_bandit",
            Module::DomainActorCritic => "domain_actor_critic",
            Module::DomainRlm => "domain_rlm",
            Module::DomainSgd => "domain_sgd",
            Module::Harness => "harness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Module(Module),
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(Suite::All);
        }
        Module::ALL.into_iter().find(|m| m.name() == s).map(Suite::Module).ok_or_else(|| {
            let names: Vec<_> = Module::ALL.iter().map(|m| m.name()).collect();
            format!("unknown suite {s:?}; expected all or one of {}", names.join(", "))
        })
    }
}

/// Knobs for exercising the suite itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Contraction factor declared for the linear fixture; the true value
    /// is 0.5.
    pub declared_rho: f64,
    /// Seeds for the noisy stopping criteria.
    pub noisy_seeds: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { declared_rho: 0.5, noisy_seeds: 200 }
    }
}

/// Outcome of one measurement against its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub measured: String,
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub module: Module,
    pub title: &'static str,
    pub measured: String,
    pub bound: String,
    pub passed: bool,
    pub runtime_s: f64,
    pub runtime_limit_s: f64,
}

impl CriterionResult {
    pub fn within_runtime(&self) -> bool {
        self.runtime_s < self.runtime_limit_s
    }

    pub fn ok(&self) -> bool {
        self.passed && self.within_runtime()
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{:>2}] {} / {}: measured {}; bound {}; {:.3} s (limit {} s)",
            if self.ok() { "PASS" } else { "FAIL" },
            self.id,
            self.module.name(),
            self.title,
            self.measured,
            self.bound,
            self.runtime_s,
            self.runtime_limit_s,
        )
    }
}

type Runner = fn(&VerifyOptions) -> Result<Check, String>;

pub struct Criterion {
    pub id: u8,
    pub module: Module,
    pub title: &'static str,
    pub runtime_limit_s: f64,
    run: Runner,
}

pub const CRITERIA: [Criterion; 11] = [
    Criterion {
        id: 1,
        module: Module::Core,
        title: "noiseless geometric decay",
        runtime_limit_s: 1.0,
        run: noiseless_decay,
    },
    Criterion {
        id: 2,
        module: Module::Stopping,
        title: "noiseless stopping bound",
        runtime_limit_s: 1.0,
        run: noiseless_stopping,
    },
    Criterion {
        id: 3,
        module: Module::Stopping,
        title: "noisy stopping statistics",
        runtime_limit_s: 30.0,
        run: noisy_fixed,
    },
    Criterion {
        id: 4,
        module: Module::Analysis,
        title: "effective equilibrium",
        runtime_limit_s: 5.0,
        run: equilibrium,
    },
    Criterion {
        id: 5,
        module: Module::DomainBandit,
        title: "bandit analytic commutator",
        runtime_limit_s: 5.0,
        run: bandit_commutator,
    },
    Criterion {
        id: 6,
        module: Module::DomainBandit,
        title: "bandit Gramian coverage",
        runtime_limit_s: 1.0,
        run: bandit_coverage,
    },
    Criterion {
        id: 7,
        module: Module::DomainActorCritic,
        title: "actor-critic rank deficiency",
        runtime_limit_s: 10.0,
        run: actor_critic,
    },
    Criterion {
        id: 8,
        module: Module::DomainRlm,
        title: "recursive model coverage and decay",
        runtime_limit_s: 5.0,
        run: rlm,
    },
    Criterion {
        id: 9,
        module: Module::DomainSgd,
        title: "vanilla SGD order-gap",
        runtime_limit_s: 1.0,
        run: vanilla_sgd,
    },
    Criterion {
        id: 10,
        module: Module::Stopping,
        title: "state-dependent sampling",
        runtime_limit_s: 30.0,
        run: noisy_greedy,
    },
    Criterion { id: 11, module: Module::Harness, title: "determinism", runtime_limit_s: 30.0, run: determinism },
];

pub fn run(suite: Suite, opts: &VerifyOptions) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .filter(|c| suite == Suite::All || suite == Suite::Module(c.module))
        .map(|c| run_one(c, opts))
        .collect()
}

pub fn run_one(c: &Criterion, opts: &VerifyOptions) -> CriterionResult {
    let start = Instant::now();
    let check =
        (c.run)(opts).unwrap_or_else(|e| Check { measured: format!("error: {e}"), bound: "-".into(), passed: false });
    CriterionResult {
        id: c.id,
        module: c.module,
        title: c.title,
        measured: check.measured,
        bound: check.bound,
        passed: check.passed,
        runtime_s: start.elapsed().as_secs_f64(),
        runtime_limit_s: c.runtime_limit_s,
    }
}

fn err(e: impl fmt::Display) -> String {
    e.to_string()
}

/// Slack allowed on floating-point bound comparisons.
const SLACK: f64 = 1e-12;

fn start_point() -> StateVector {
    StateVector::from_vec(vec![0.6, -0.8])
}

fn noiseless_decay(opts: &VerifyOptions) -> Result<Check, String> {
    let pair = LinearPair::diag_rotation();
    let (rho, l) = (opts.declared_rho, 1.0);
    let gamma = rho * l;
    let star = StateVector::zeros(2);
    let theta0 = start_point();
    let r0 = theta0.norm();
    let mut events = FiniteEvents::uniform(pair.events()).map_err(err)?;
    let traj = run_trajectory(&pair, &mut events, &theta0, 40, &mut root_rng(1), Some(&star)).map_err(err)?;
    let mut worst: f64 = f64::NEG_INFINITY;
    for s in &traj.trace.samples {
        let g = gamma.powi(s.t as i32);
        worst = worst.max(s.dist_to_ref.expect("reference set") - g * r0);
        worst = worst.max(s.omega - 2.0 * g * gamma * r0);
    }
    let est = estimate_constants(&pair, &mut events, Some(&star), 200, 1.0, &mut root_rng(2)).map_err(err)?;
    let rho_gap = (est.rho - rho).abs();
    Ok(Check {
        measured: format!(
            "max bound excess {worst:.3e} over 40 steps; |rho_hat - rho| = {rho_gap:.3e}, L_hat = {:.6}",
            est.lipschitz
        ),
        bound: format!("excess <= {SLACK:e}; |rho_hat - rho| <= 1e-9; L_hat <= {l}"),
        passed: worst <= SLACK && rho_gap <= 1e-9 && est.lipschitz <= l + SLACK,
    })
}

fn noiseless_stopping(opts: &VerifyOptions) -> Result<Check, String> {
    let pair = LinearPair::diag_rotation();
    let star = StateVector::zeros(2);
    let events = FiniteEvents::uniform(pair.events()).map_err(err)?;
    let jac = JacobianPair::from_pair(&pair, events.events(), &star, 1e-5).map_err(err)?;
    let report = commutator_stats(&jac, None, None).map_err(err)?;
    let remainder =
        estimate_remainder(&pair, &jac, events.events(), &[1e-2, 1e-1, 1.0], 8, &mut root_rng(3)).map_err(err)?;
    let r = validity_radius(report.mu0, remainder);
    let mu = report.mu0 / 2.0;
    let mut max_tau_excess = i64::MIN;
    let mut max_endpoint_ratio: f64 = 0.0;
    let mut all_triggered = true;
    let mut radius_ok = true;
    for theta0 in [start_point(), StateVector::from_vec(vec![3.0, 4.0]), StateVector::from_vec(vec![-10.0, 0.5])] {
        for eps in [0.1, 0.01] {
            for w in [1, 2, 5] {
                let c = TheoryConstants::new(opts.declared_rho, 1.0, 0.0, 0.0, theta0.norm())
                    .and_then(|c| c.with_mu(mu))
                    .and_then(|c| c.with_radius(r))
                    .map_err(err)?;
                let cfg = StoppingConfig::new(eps, w, 1000).map_err(err)?;
                let bounds = stopping_bounds(&c, &cfg).map_err(err)?;
                radius_ok &= bounds.det_radius_ok == Some(true);
                let run = windowed_stop(&pair, &mut events.clone(), &theta0, &cfg, &mut root_rng(4), Some(&star))
                    .map_err(err)?;
                all_triggered &= run.triggered;
                max_tau_excess = max_tau_excess.max(run.tau as i64 - (w as u64 + bounds.n_eps) as i64);
                let endpoint = run.final_state.norm();
                max_endpoint_ratio = max_endpoint_ratio.max(endpoint / bounds.endpoint_det.expect("mu set"));
            }
        }
    }
    let mu0_oracle = 0.25;
    Ok(Check {
        measured: format!(
            "mu0 = {:.12} (oracle {mu0_oracle}), r = {r}; max tau - (w + N_eps) = {max_tau_excess}; max |theta_tau - theta*| mu / eps = {max_endpoint_ratio:.4}",
            report.mu0
        ),
        bound: "|mu0 - 0.25| <= 1e-9; eps <= 2 gamma r; tau <= w + N_eps; ratio <= 1; all runs stop".into(),
        passed: (report.mu0 - mu0_oracle).abs() <= 1e-9
            && radius_ok
            && all_triggered
            && max_tau_excess <= 0
            && max_endpoint_ratio <= 1.0 + SLACK,
    })
}

/// Bounded noise radius for the noisy criteria.
const NOISE_M: f64 = 0.1;
const DELTA: f64 = 0.1;

fn noisy_fixed(opts: &VerifyOptions) -> Result<Check, String> {
    noisy_stopping(opts, || NoisyLinearSampler::new(2, &[1.0], NOISE_M).expect("valid sampler"))
}

fn noisy_greedy(opts: &VerifyOptions) -> Result<Check, String> {
    noisy_stopping(opts, || GreedyNoiseSampler { dim: 2, epsilon: 0.2, noise_radius: NOISE_M })
}

fn noisy_stopping<S, F>(opts: &VerifyOptions, make: F) -> Result<Check, String>
where
    S: EventSampler<LinearEvent>,
    F: Fn() -> S + Sync,
{
    let pair = LinearPair::diag_rotation();
    let star = StateVector::zeros(2);
    let events = FiniteEvents::uniform(pair.events()).map_err(err)?;
    let jac = JacobianPair::from_pair(&pair, events.events(), &star, 1e-5).map_err(err)?;
    let mu = commutator_stats(&jac, None, None).map_err(err)?.mu0 / 2.0;
    let theta0 = start_point();
    let c = TheoryConstants::new(opts.declared_rho, 1.0, NOISE_M, NOISE_M, theta0.norm())
        .and_then(|c| c.with_mu(mu))
        .and_then(|c| c.with_radius(f64::INFINITY))
        .map_err(err)?;
    let floor = noise_floor(&c).map_err(err)?.eps_star_m;
    let eps = floor + 0.2;
    let margin = eps - floor;
    let n = n_eps_m(c.gamma(), c.r0(), margin);
    let w = min_window(gap_envelope(&c).map_err(err)?, margin, n, DELTA) as usize;
    let cfg = StoppingConfig::new(eps, w, 2 * (w + n as usize)).and_then(|s| s.with_delta(DELTA)).map_err(err)?;
    let bounds = stopping_bounds(&c, &cfg).map_err(err)?;
    let nb = bounds.noisy.expect("delta set");
    let endpoint_bound = bounds.endpoint_noisy.expect("mu set");
    let outcomes = (0..opts.noisy_seeds)
        .into_par_iter()
        .map(|i| {
            let mut sampler = make();
            let run =
                windowed_stop(&pair, &mut sampler, &theta0, &cfg, &mut child_rng(2024, i), Some(&star)).map_err(err)?;
            let violated = !run.triggered || run.tau as u64 > nb.t0;
            Ok((violated, (!violated).then(|| run.final_state.norm())))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let violations = outcomes.iter().filter(|o| o.0).count();
    let fraction = violations as f64 / outcomes.len().max(1) as f64;
    let worst_endpoint = outcomes.iter().filter_map(|o| o.1).fold(0.0, f64::max);
    let endpoint_ok = outcomes.iter().filter_map(|o| o.1).all(|d| d <= endpoint_bound);
    Ok(Check {
        measured: format!(
            "eps = {eps:.4}, w = {w}, T0 = {}; {violations}/{} seeds with tau > T0 ({fraction:.3}); worst endpoint {worst_endpoint:.4}",
            nb.t0,
            outcomes.len()
        ),
        bound: format!("fraction <= {DELTA}; endpoint <= {endpoint_bound:.4} on non-violating seeds; window and radius conditions hold"),
        passed: nb.window_ok && bounds.noisy_radius_ok == Some(true) && fraction <= DELTA && endpoint_ok,
    })
}

fn equilibrium(_: &VerifyOptions) -> Result<Check, String> {
    let opts = EquilibriumOptions::default();
    let gamma = 0.5;
    let mut worst_dist: f64 = 0.0;
    let mut worst_factor: f64 = 0.0;
    let mut run = |pair: LinearPair, target: DVector<f64>| -> Result<(), String> {
        let events = FiniteEvents::uniform(pair.events()).map_err(err)?;
        let theta0 = StateVector::from_vec(vec![5.0, -3.0]);
        let r = effective_equilibrium(&pair, &events, &theta0, opts).map_err(err)?;
        worst_dist = worst_dist.max((&*r.theta_star_inf - target).norm());
        for w in r.residuals.windows(2) {
            if w[0] > 1e-10 {
                worst_factor = worst_factor.max(w[1] / w[0]);
            }
        }
        Ok(())
    };
    run(LinearPair::diag_rotation(), DVector::zeros(2))?;
    let centre = DVector::from_vec(vec![1.0, -2.0]);
    let i2 = DMatrix::<f64>::identity(2, 2);
    let q = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]);
    let rotation = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let reflection = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let about = |b: &DMatrix<f64>| (b.clone(), (&i2 - b) * &centre);
    let shifted =
        LinearPair::new(q.clone(), (&i2 - &q) * &centre, vec![about(&rotation), about(&reflection)]).map_err(err)?;
    run(shifted, centre)?;
    let rho = 0.5;
    let b = DVector::from_vec(vec![1.0, -2.0]);
    let affine = LinearPair::new(&i2 * rho, DVector::zeros(2), vec![(i2.clone(), b.clone())]).map_err(err)?;
    run(affine, &b * (rho / (1.0 - rho)))?;
    Ok(Check {
        measured: format!("max |theta*_inf - oracle| = {worst_dist:.3e}; max residual ratio = {worst_factor:.6}"),
        bound: format!("distance <= 1e-8; ratio <= gamma + 0.02 = {}", gamma + 0.02),
        passed: worst_dist <= 1e-8 && worst_factor <= gamma + 0.02,
    })
}

fn bandit_config(lambda: f64, kappa: f64) -> BanditConfig {
    BanditConfig {
        mu_arm: vec![0.0, 0.5, 1.0],
        sigma_r2: 1.0,
        mu_p: vec![0.2, 0.0, -0.1],
        lambda,
        kappa,
        selection: Selection::Fixed { probs: vec![0.4, 0.4, 0.2] },
    }
}

/// Commutator Jacobian of one bandit event from Richardson differences.
fn bandit_sigma(pair: &BanditPair, theta: &StateVector, e: &Event<BanditEvent>) -> Result<DMatrix<f64>, String> {
    let a = richardson_jacobian(|x| pair.consolidate(x), theta, 1e-3).map_err(err)?;
    let b = richardson_jacobian(|x| pair.expand(e, x), theta, 1e-3).map_err(err)?;
    Ok(&a * &b - &b * &a)
}

fn bandit_commutator(_: &VerifyOptions) -> Result<Check, String> {
    let mut rng = root_rng(5);
    let cfg = bandit_config(0.2, 0.5);
    let degenerate = bandit_config(0.5, 1.0);
    let pair = BanditPair::new(cfg.clone()).map_err(err)?;
    let flat_pair = BanditPair::new(degenerate.clone()).map_err(err)?;
    let mut max_rel: f64 = 0.0;
    let mut max_other: f64 = 0.0;
    let mut max_degenerate: f64 = 0.0;
    for _ in 0..100 {
        let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..3.0)).collect();
        let arm = rng.random_range(0..3);
        let reward = rng.random_range(-3.0..3.0);
        let state = BanditState::new(mu, s).map_err(err)?;
        let theta = state.flatten();
        let e = Event::new(arm as u64, BanditEvent { arm, reward });
        let sigma = bandit_sigma(&pair, &theta, &e)?;
        let entry = analytic_commutator_entry(&state, &e.payload, &cfg);
        for i in 0..6 {
            for j in 0..6 {
                if (i, j) == (arm, 3 + arm) {
                    max_rel = max_rel.max((sigma[(i, j)] - entry).abs() / entry.abs());
                } else {
                    max_other = max_other.max(sigma[(i, j)].abs());
                }
            }
        }
        max_degenerate = max_degenerate
            .max(bandit_sigma(&flat_pair, &theta, &e)?.amax())
            .max(analytic_commutator_entry(&state, &e.payload, &degenerate).abs());
    }
    Ok(Check {
        measured: format!("max relative entry error {max_rel:.3e}; max other entry {max_other:.3e}; degenerate max {max_degenerate:.3e}"),
        bound: "relative error <= 1e-6; other entries <= 1e-8; degenerate entries <= 1e-10".into(),
        passed: max_rel <= 1e-6 && max_other <= 1e-8 && max_degenerate <= 1e-10,
    })
}

fn bandit_coverage(_: &VerifyOptions) -> Result<Check, String> {
    let full = bandit_config(0.2, 0.5);
    let dropped = BanditConfig { selection: Selection::Fixed { probs: vec![0.5, 0.5, 0.0] }, ..full.clone() };
    let theta = flat(&full.mu_p, &[1.0, 1.0, 1.0]);
    let g_full = gramian_diagnostics(&full, &theta).map_err(err)?;
    let g_dropped = gramian_diagnostics(&dropped, &theta).map_err(err)?;
    let (r_full, r_dropped) = (g_full.report.rank_gramian, g_dropped.report.rank_gramian);
    Ok(Check {
        measured: format!(
            "lambda_min(G|variance) = {:.4e}, rank {r_full}; with p3 = 0 rank {r_dropped}",
            g_full.report.mu1_sq
        ),
        bound: "lambda_min > 0 at full rank 3; rank drops by exactly one".into(),
        passed: g_full.report.mu1_sq > 0.0 && r_full == 3 && r_dropped == 2,
    })
}

fn actor_critic(_: &VerifyOptions) -> Result<Check, String> {
    let mut rng = root_rng(7);
    let mut max_null: f64 = 0.0;
    let mut max_mu0_gap: f64 = 0.0;
    let mut max_block_gap: f64 = 0.0;
    let mut halving_exact = true;
    for i in 0..50 {
        let d = 1 + i % 3;
        let d_pi = 1 + (i / 3) % 3;
        let model = ACModel::random(d, d_pi, (0.1, 0.2, 0.3), &mut rng).map_err(err)?;
        let base = ac_commutator_report(&model, AcVariant::Baseline).map_err(err)?;
        max_null = max_null.max(base.policy_null_residual);
        let aug = ac_commutator_report(&model, AcVariant::Augmented).map_err(err)?;
        let predicted = aug.prediction.mu0.ok_or("rank condition failed on an admissible draw")?;
        max_mu0_gap = max_mu0_gap.max((aug.numeric.mu0 - predicted).abs());
        let halved = model.with_beta_prime(model.beta_prime / 2.0).map_err(err)?;
        let block = |m: &ACModel| analytic_sigma_bar(m, AcVariant::Augmented).view((0, d), (d, d_pi)).into_owned();
        halving_exact &= block(&model) * 0.5 == block(&halved);
        let numeric_half = ac_commutator_report(&halved, AcVariant::Augmented).map_err(err)?.numeric.sigma_bar;
        let gap = (aug.numeric.sigma_bar.view((0, d), (d, d_pi)) * 0.5 - numeric_half.view((0, d), (d, d_pi))).amax();
        max_block_gap = max_block_gap.max(gap);
    }
    Ok(Check {
        measured: format!(
            "max |baseline sigma_bar on policy| = {max_null:.3e}; max |mu0 - predicted| = {max_mu0_gap:.3e}; closed-form halving exact: {halving_exact}; numeric block gap {max_block_gap:.3e}"
        ),
        bound: "residual <= 1e-12; mu0 gap <= 1e-8; halving exact; numeric gap <= 1e-9".into(),
        passed: max_null <= 1e-12 && max_mu0_gap <= 1e-8 && halving_exact && max_block_gap <= 1e-9,
    })
}

fn rlm(_: &VerifyOptions) -> Result<Check, String> {
    let model = sign_varying_example();
    let cov = rlm_coverage_report(&model).map_err(err)?;
    let pair = RlmPair::new(model.clone());
    let zero = StateVector::zeros(2);
    let jac = JacobianPair::from_pair(&pair, &model.events(), &zero, 1e-5).map_err(err)?;
    let mut oracle_gap: f64 = 0.0;
    for (s, sign) in jac.sigmas().map_err(err)?.iter().zip([1.0, -1.0]) {
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.1 * sign, 0.0, 0.0]);
        oracle_gap = oracle_gap.max((s - expected).amax());
    }
    let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let diag = |a: f64, b: f64| DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b]);
    let commuting = RlmModel::new(p, 0.5, vec![(diag(-0.3, 0.2), 0.5), (diag(0.1, -0.4), 0.5)]).map_err(err)?;
    let cov_commuting = rlm_coverage_report(&commuting).map_err(err)?;
    let g_commuting = cov_commuting.report.gramian.amax();
    let gamma = model.joint_contraction();
    let s0 = StateVector::from_vec(vec![1.0, 1.0]);
    let traj =
        run_trajectory(&pair, &mut model.finite_events(), &s0, 41, &mut root_rng(8), Some(&zero)).map_err(err)?;
    let fit = fit_log_linear(&traj.trace.omegas(), 5, 41).map_err(err)?;
    Ok(Check {
        measured: format!(
            "|Sigma_e - beta[P, E_e]| = {:.3e} (hand oracle {oracle_gap:.3e}); commuting |G| = {g_commuting:.3e}, covered {}; fit R^2 = {:.6}, slope {:.4}",
            cov.closed_form_discrepancy, cov_commuting.covered, fit.r_squared, fit.slope
        ),
        bound: format!("discrepancies <= 1e-10; G = 0 and not covered; R^2 >= 0.99; slope <= log gamma + 0.05 = {:.4}", gamma.ln() + 0.05),
        passed: cov.closed_form_discrepancy <= 1e-10
            && oracle_gap <= 1e-10
            && cov.covered
            && g_commuting <= SLACK
            && !cov_commuting.covered
            && fit.r_squared >= 0.99
            && fit.slope <= gamma.ln() + 0.05,
    })
}

fn vanilla_sgd(_: &VerifyOptions) -> Result<Check, String> {
    let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    let run = |momentum: f64| -> Result<Vec<f64>, String> {
        let prob = QuadraticProblem::new(h.clone(), 0.1, 0.1, momentum).map_err(err)?;
        let pair = SgdPair::new(prob.clone());
        let theta0 = StateVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
        let traj = run_trajectory(&pair, &mut MinibatchSampler::new(&prob), &theta0, 1000, &mut root_rng(9), None)
            .map_err(err)?;
        Ok(traj.trace.omegas())
    };
    let vanilla = run(0.0)?;
    let nonzero = vanilla.iter().filter(|w| w.to_bits() != 0).count();
    let momentum = run(0.5)?;
    let control = momentum.iter().filter(|w| **w > 0.0).count();
    Ok(Check {
        measured: format!("{nonzero} of 1000 gaps not bitwise zero; momentum 0.5 control has {control} positive gaps"),
        bound: "0 nonzero gaps; control positive".into(),
        passed: nonzero == 0 && control > 0,
    })
}

/// One small config per domain.
pub const DETERMINISM_CONFIGS: [&str; 5] = [
    r#"
experiment_id = "det-linear"
seed = 3
seed_count = 4
[stopping]
epsilon = 0.45
window = 50
t_max = 400
delta = 0.1
[linear]
q = [[0.5, 0.0], [0.0, 0.25]]
maps = [{ b = [[0.0, -1.0], [1.0, 0.0]] }]
noise_radius = 0.1
theta0 = [0.6, -0.8]
"#,
    r#"
experiment_id = "det-bandit"
seed = 5
seed_count = 4
[stopping]
epsilon = 0.001
window = 20
t_max = 300
[bandit]
mu_arm = [0.0, 0.5, 1.0]
sigma_r2 = 0.5
mu_p = [0.0, 0.0, 0.0]
lambda = 0.2
kappa = 0.5
selection = { kind = "epsilon_greedy", epsilon = 0.2 }
"#,
    r#"
experiment_id = "det-ac"
seed = 7
seed_count = 3
[stopping]
epsilon = 1e-6
window = 5
t_max = 300
[actor_critic]
d = 2
d_pi = 2
variant = "augmented"
model_seed = 11
"#,
    r#"
experiment_id = "det-rlm"
seed = 9
seed_count = 3
[stopping]
epsilon = 1e-8
window = 3
t_max = 100
[rlm]
projection = [[1.0, 0.0], [0.0, 0.0]]
beta = 0.5
chunks = [{ matrix = [[-0.6, 0.2], [0.0, 0.0]], prob = 0.5 }, { matrix = [[-0.6, -0.2], [0.0, 0.0]], prob = 0.5 }]
s0 = [1.0, 1.0]
trigger_cost = 0.05
"#,
    r#"
experiment_id = "det-sgd"
seed = 13
seed_count = 3
[stopping]
epsilon = 0.01
window = 10
t_max = 300
[sgd]
h = [[1.0, 0.2], [0.2, 0.5]]
minibatch_noise = 0.01
eta = 0.1
momentum_coef = 0.5
w0 = [1.0, -1.0]
"#,
];

fn determinism(_: &VerifyOptions) -> Result<Check, String> {
    let mut files = 0;
    let mut mismatched = Vec::new();
    for text in DETERMINISM_CONFIGS {
        let loaded = LoadedConfig::parse(text).map_err(err)?;
        let a = run_experiment(&loaded).map_err(err)?.artifacts;
        let b = run_experiment(&loaded).map_err(err)?.artifacts;
        files += a.files.len();
        if a != b {
            mismatched.push(loaded.config.experiment_id.clone());
        }
    }
    Ok(Check {
        measured: format!("{files} artifacts over {} configs; mismatched: {mismatched:?}", DETERMINISM_CONFIGS.len()),
        bound: "byte-identical trace and report files".into(),
        passed: mismatched.is_empty() && files > 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_parse() {
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert_eq!("domain_rlm".parse::<Suite>().unwrap(), Suite::Module(Module::DomainRlm));
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn criteria_ids_are_sequential() {
        for (i, c) in CRITERIA.iter().enumerate() {
            assert_eq!(c.id as usize, i + 1);
        }
    }

    #[test]
    fn determinism_configs_validate() {
        for text in DETERMINISM_CONFIGS {
            LoadedConfig::parse(text).unwrap();
        }
    }
}
