//! Gaussian bandit with Bayesian expansion and shrinkage consolidation.
//!
//! The state is the flattened posterior `(mu_hat_1..A, s_1..A)`: all means,
//! then all variances. Observing reward `r` from arm `a` performs the
//! conjugate Gaussian update on that arm; consolidation shrinks means toward
//! a prior and deflates variances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, finite_diff_jacobian, CommutatorReport, EquilibriumOptions, EquilibriumReport};
use crate::dynamics::{check_probabilities, Event, EventSampler, Norm, OperatorPair, SamplingMode, StateVector};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::SimRng;
use crate::stopping::{windowed_stop_observed, StoppingConfig, StoppingReport};

/// Posterior means and variances per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub mu_hat: Vec<f64>,
    pub sigma2_hat: Vec<f64>,
}

impl BanditState {
    pub fn new(mu_hat: Vec<f64>, sigma2_hat: Vec<f64>) -> Result<Self> {
        if mu_hat.len() != sigma2_hat.len() {
            return Err(Error::DimensionMismatch { expected: mu_hat.len(), found: sigma2_hat.len() });
        }
        if mu_hat.is_empty() {
            return Err(Error::invalid("arms", "need at least one arm"));
        }
        if mu_hat.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite { step: None });
        }
        if sigma2_hat.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("sigma2_hat", "variances must be finite and > 0"));
        }
        Ok(BanditState { mu_hat, sigma2_hat })
    }

    pub fn arms(&self) -> usize {
        self.mu_hat.len()
    }

    pub fn flatten(&self) -> StateVector {
        StateVector::from_vec(self.mu_hat.iter().chain(&self.sigma2_hat).copied().collect())
    }

    pub fn from_flat(theta: &StateVector) -> Result<Self> {
        if theta.dim() % 2 != 0 {
            return Err(Error::invalid("theta", "bandit states have even dimension"));
        }
        let a = theta.dim() / 2;
        BanditState::new(theta.rows(0, a).iter().copied().collect(), theta.rows(a, a).iter().copied().collect())
    }
}

/// How arms are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Selection {
    /// State-independent probabilities.
    Fixed { probs: Vec<f64> },
    /// Greedy on posterior means (ties to the lowest index), uniform with
    /// probability `epsilon`.
    EpsilonGreedy { epsilon: f64 },
}

impl Selection {
    pub fn probabilities(&self, mu_hat: &[f64]) -> Vec<f64> {
        match self {
            Selection::Fixed { probs } => probs.clone(),
            Selection::EpsilonGreedy { epsilon } => {
                let n = mu_hat.len();
                let mut best = 0;
                for (i, m) in mu_hat.iter().enumerate() {
                    if *m > mu_hat[best] {
                        best = i;
                    }
                }
                let mut p = vec![epsilon / n as f64; n];
                p[best] += 1.0 - epsilon;
                p
            }
        }
    }

    pub fn mode(&self) -> SamplingMode {
        match self {
            Selection::Fixed { .. } => SamplingMode::Fixed,
            Selection::EpsilonGreedy { .. } => SamplingMode::StateDependent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditConfig {
    pub mu_arm: Vec<f64>,
    pub sigma_r2: f64,
    pub mu_p: Vec<f64>,
    pub lambda: f64,
    pub kappa: f64,
    pub selection: Selection,
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        let a = self.mu_arm.len();
        if a == 0 {
            return Err(Error::invalid("mu_arm", "need at least one arm"));
        }
        if self.mu_p.len() != a {
            return Err(Error::DimensionMismatch { expected: a, found: self.mu_p.len() });
        }
        if self.mu_arm.iter().chain(&self.mu_p).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: None });
        }
        if !(self.sigma_r2 > 0.0 && self.sigma_r2.is_finite()) {
            return Err(Error::invalid("sigma_r2", "must be finite and > 0"));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::invalid("lambda", "must lie in (0, 1)"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", "must be finite and > 0"));
        }
        match &self.selection {
            Selection::Fixed { probs } => {
                if probs.len() != a {
                    return Err(Error::DimensionMismatch { expected: a, found: probs.len() });
                }
                check_probabilities("selection.probs", probs)?;
            }
            Selection::EpsilonGreedy { epsilon } => {
                if !(0.0..=1.0).contains(epsilon) {
                    return Err(Error::invalid("selection.epsilon", "must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn arms(&self) -> usize {
        self.mu_arm.len()
    }

    /// Lipschitz constant of consolidation in the product norm,
    /// `max(1 - lambda, 1 / (1 + kappa))`.
    pub fn consolidation_lipschitz(&self) -> f64 {
        (1.0 - self.lambda).max(1.0 / (1.0 + self.kappa))
    }

    /// `(kappa (1 - lambda) - lambda) / (1 + kappa)`; the commutator vanishes
    /// identically when this is zero.
    pub fn mismatch_factor(&self) -> f64 {
        (self.kappa * (1.0 - self.lambda) - self.lambda) / (1.0 + self.kappa)
    }

    pub fn best_arm_mean(&self) -> f64 {
        self.mu_arm.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditEvent {
    pub arm: usize,
    pub reward: f64,
}

/// Conjugate update of arm `e.arm` on reward `e.reward`.
pub fn bandit_expansion(state: &BanditState, e: &BanditEvent, sigma_r2: f64) -> Result<BanditState> {
    if e.arm >= state.arms() {
        return Err(Error::invalid("arm", format!("index {} out of range", e.arm)));
    }
    let mut out = state.clone();
    let (m, s) = posterior(state.mu_hat[e.arm], state.sigma2_hat[e.arm], e.reward, sigma_r2);
    out.mu_hat[e.arm] = m;
    out.sigma2_hat[e.arm] = s;
    Ok(out)
}

fn posterior(mu: f64, s: f64, r: f64, sigma_r2: f64) -> (f64, f64) {
    let den = s + sigma_r2;
    ((mu * sigma_r2 + r * s) / den, s * sigma_r2 / den)
}

/// Shrinks means toward `mu_p` by `lambda` and divides variances by
/// `1 + kappa`.
pub fn bandit_consolidation(state: &BanditState, cfg: &BanditConfig) -> BanditState {
    BanditState {
        mu_hat: state.mu_hat.iter().zip(&cfg.mu_p).map(|(m, p)| (1.0 - cfg.lambda) * m + cfg.lambda * p).collect(),
        sigma2_hat: state.sigma2_hat.iter().map(|s| s / (1.0 + cfg.kappa)).collect(),
    }
}

/// The `(mu_a, s_a)` entry of the commutator Jacobian for event `(a, r)`,
/// `sigma_r^2 (r - mu_a) / (s_a + sigma_r^2)^2 * (kappa(1-lambda) - lambda) / (1 + kappa)`.
/// Every other entry is zero.
pub fn analytic_commutator_entry(state: &BanditState, e: &BanditEvent, cfg: &BanditConfig) -> f64 {
    let mu = state.mu_hat[e.arm];
    let s = state.sigma2_hat[e.arm];
    let den = s + cfg.sigma_r2;
    cfg.sigma_r2 * (e.reward - mu) / (den * den) * cfg.mismatch_factor()
}

/// The bandit as an operator pair on flattened states, in the product norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditPair {
    cfg: BanditConfig,
}

impl BanditPair {
    pub fn new(cfg: BanditConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(BanditPair { cfg })
    }

    pub fn config(&self) -> &BanditConfig {
        &self.cfg
    }

    /// The consolidation fixed point `(mu_p, 0)`.
    pub fn consolidation_fixed_point(&self) -> StateVector {
        let a = self.cfg.arms();
        StateVector::from_vec(self.cfg.mu_p.iter().copied().chain(std::iter::repeat_n(0.0, a)).collect())
    }

    pub fn mean_basis(&self) -> DMatrix<f64> {
        let a = self.cfg.arms();
        linalg::coordinate_basis(2 * a, &(0..a).collect::<Vec<_>>())
    }

    pub fn variance_basis(&self) -> DMatrix<f64> {
        let a = self.cfg.arms();
        linalg::coordinate_basis(2 * a, &(a..2 * a).collect::<Vec<_>>())
    }
}

impl OperatorPair for BanditPair {
    type Payload = BanditEvent;

    fn dim(&self) -> usize {
        2 * self.cfg.arms()
    }

    fn consolidate(&self, theta: &StateVector) -> StateVector {
        let a = self.cfg.arms();
        let mut out = theta.clone();
        for i in 0..a {
            out[i] = (1.0 - self.cfg.lambda) * theta[i] + self.cfg.lambda * self.cfg.mu_p[i];
            out[a + i] = theta[a + i] / (1.0 + self.cfg.kappa);
        }
        out
    }

    fn expand(&self, event: &Event<BanditEvent>, theta: &StateVector) -> StateVector {
        let a = self.cfg.arms();
        let arm = event.payload.arm;
        let mut out = theta.clone();
        let (m, s) = posterior(theta[arm], theta[a + arm], event.payload.reward, self.cfg.sigma_r2);
        out[arm] = m;
        out[a + arm] = s;
        out
    }

    fn norm(&self) -> Norm {
        Norm::BlockMax { block_len: self.cfg.arms() }
    }

    fn admissible(&self, theta: &StateVector) -> bool {
        theta.iter().skip(self.cfg.arms()).all(|&s| s >= 0.0)
    }
}

/// Chooses arms per the selection rule and draws Gaussian rewards.
#[derive(Debug, Clone)]
pub struct BanditSampler {
    cfg: BanditConfig,
}

impl BanditSampler {
    pub fn new(cfg: BanditConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(BanditSampler { cfg })
    }
}

impl EventSampler<BanditEvent> for BanditSampler {
    fn mode(&self) -> SamplingMode {
        self.cfg.selection.mode()
    }

    fn draw(&mut self, theta: &StateVector, rng: &mut SimRng) -> Result<Event<BanditEvent>> {
        let a = self.cfg.arms();
        theta.check_dim(2 * a)?;
        let p = self.cfg.selection.probabilities(&theta.as_slice()[..a]);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut arm = a - 1;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                arm = i;
                break;
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        let reward = self.cfg.mu_arm[arm] + self.cfg.sigma_r2.sqrt() * z;
        Ok(Event::new(arm as u64, BanditEvent { arm, reward }))
    }
}

/// Effective equilibrium of the expected step. The step is affine in the
/// reward, so the reward expectation is exact at `r = mu_arm`.
pub fn bandit_equilibrium(
    cfg: &BanditConfig,
    theta0: &BanditState,
    opts: EquilibriumOptions,
) -> Result<EquilibriumReport> {
    let pair = BanditPair::new(cfg.clone())?;
    let a = cfg.arms();
    let rule = analysis::FnExpectation(|theta: &StateVector| {
        let p = cfg.selection.probabilities(&theta.as_slice()[..a]);
        Ok(p.iter()
            .enumerate()
            .map(|(arm, pa)| (Event::new(arm as u64, BanditEvent { arm, reward: cfg.mu_arm[arm] }), *pa))
            .collect::<Vec<_>>())
    });
    analysis::effective_equilibrium(&pair, &rule, &theta0.flatten(), opts)
}

/// Fixed point of the expected mean update with every variance held at
/// `sigma2`, under fixed selection probabilities:
/// `mu_a = (lambda mu_p + (1-lambda) p_a g_a mu_arm) / (lambda + (1-lambda) p_a g_a)`
/// with gain `g_a = s_a / (s_a + sigma_r^2)`.
pub fn mean_block_equilibrium(cfg: &BanditConfig, sigma2: &[f64]) -> Result<Vec<f64>> {
    cfg.validate()?;
    let Selection::Fixed { probs } = &cfg.selection else {
        return Err(Error::invalid("selection", "fixed probabilities required"));
    };
    if sigma2.len() != cfg.arms() {
        return Err(Error::DimensionMismatch { expected: cfg.arms(), found: sigma2.len() });
    }
    let l = cfg.lambda;
    Ok((0..cfg.arms())
        .map(|i| {
            let g = sigma2[i] / (sigma2[i] + cfg.sigma_r2);
            let w = (1.0 - l) * probs[i] * g;
            (l * cfg.mu_p[i] + w * cfg.mu_arm[i]) / (l + w)
        })
        .collect())
}

/// Exact-moment commutator statistics for the bandit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditGramian {
    /// Statistics restricted to the variance subspace.
    pub report: CommutatorReport,
    /// Selection probabilities at the evaluation point.
    pub probabilities: Vec<f64>,
    /// `p_a sigma_r^6 m^2 / ((s_a + sigma_r^2)^4)` with `m` the mismatch
    /// factor: a lower bound on the `(s_a, s_a)` Gramian entry.
    pub variance_entry_lower_bounds: Vec<f64>,
    /// Spectral norm of the mean commutator, which lives in the mean rows.
    pub mean_block_first_moment: f64,
}

/// Assembles `sigma_bar` and `G` at `theta` from finite-difference Jacobians
/// of the actual maps, integrating the Gaussian reward exactly: the
/// commutator is affine in `r`, so `Sigma(r) = Sigma_0 + (r - mu_a) D_a` and
/// only the first two reward moments enter.
pub fn gramian_diagnostics(cfg: &BanditConfig, theta: &StateVector) -> Result<BanditGramian> {
    let pair = BanditPair::new(cfg.clone())?;
    let a = cfg.arms();
    theta.check_dim(2 * a)?;
    let h = analysis::DEFAULT_FD_STEP;
    let jac_q = finite_diff_jacobian(|x| pair.consolidate(x), theta, h)?;
    let sigma_at = |arm: usize, r: f64| -> Result<DMatrix<f64>> {
        let e = Event::new(arm as u64, BanditEvent { arm, reward: r });
        let b = finite_diff_jacobian(|x| pair.expand(&e, x), theta, h)?;
        analysis::commutator(&jac_q, &b)
    };
    let probs = cfg.selection.probabilities(&theta.as_slice()[..a]);
    let d = 2 * a;
    let mut sigma_bar = DMatrix::zeros(d, d);
    let mut gramian = DMatrix::zeros(d, d);
    let mut lower = Vec::with_capacity(a);
    for arm in 0..a {
        let mu = theta[arm];
        let s0 = sigma_at(arm, mu)?;
        let slope = sigma_at(arm, mu + 1.0)? - &s0;
        let m1 = cfg.mu_arm[arm] - mu;
        let m2 = cfg.sigma_r2 + m1 * m1;
        let p = probs[arm];
        sigma_bar += (&s0 + &slope * m1) * p;
        let cross = s0.transpose() * &slope;
        gramian += (s0.transpose() * &s0 + (&cross + cross.transpose()) * m1 + slope.transpose() * &slope * m2) * p;
        let den = theta[a + arm] + cfg.sigma_r2;
        lower.push(p * cfg.sigma_r2.powi(3) * cfg.mismatch_factor().powi(2) / den.powi(4));
    }
    let mean_block_first_moment = linalg::spectral_norm(&sigma_bar);
    let report = analysis::summarize(sigma_bar, gramian, None, Some(&pair.variance_basis()))?;
    Ok(BanditGramian { report, probabilities: probs, variance_entry_lower_bounds: lower, mean_block_first_moment })
}

/// A finished bandit run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditRun {
    pub report: StoppingReport,
    pub arms: Vec<usize>,
    pub rewards: Vec<f64>,
    /// `max mu_arm - mu_arm[a_t]` per step.
    pub regret: Vec<f64>,
}

/// Runs windowed stopping on the bandit, logging arms, rewards and regret.
pub fn simulate_bandit(
    cfg: &BanditConfig,
    theta0: &BanditState,
    stopping: &StoppingConfig,
    rng: &mut SimRng,
    reference: Option<&StateVector>,
) -> Result<BanditRun> {
    let pair = BanditPair::new(cfg.clone())?;
    let mut sampler = BanditSampler::new(cfg.clone())?;
    let best = cfg.best_arm_mean();
    let mut arms = Vec::new();
    let mut rewards = Vec::new();
    let mut regret = Vec::new();
    let report = windowed_stop_observed(&pair, &mut sampler, &theta0.flatten(), stopping, rng, reference, |v| {
        arms.push(v.event.payload.arm);
        rewards.push(v.event.payload.reward);
        regret.push(best - cfg.mu_arm[v.event.payload.arm]);
        Ok(())
    })?;
    Ok(BanditRun { report, arms, rewards, regret })
}

/// Flattened state from per-arm vectors.
pub fn flat(mu: &[f64], s: &[f64]) -> StateVector {
    StateVector::new(DVector::from_iterator(mu.len() + s.len(), mu.iter().chain(s).copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::root_rng;

    fn cfg(lambda: f64, kappa: f64) -> BanditConfig {
        BanditConfig {
            mu_arm: vec![0.0, 1.0],
            sigma_r2: 1.0,
            mu_p: vec![0.0, 0.0],
            lambda,
            kappa,
            selection: Selection::Fixed { probs: vec![0.5, 0.5] },
        }
    }

    #[test]
    fn expansion_example() {
        let s = BanditState::new(vec![0.0], vec![1.0]).unwrap();
        let out = bandit_expansion(&s, &BanditEvent { arm: 0, reward: 2.0 }, 1.0).unwrap();
        assert_eq!((out.mu_hat[0], out.sigma2_hat[0]), (1.0, 0.5));
        let s = BanditState::new(vec![0.3, -1.0], vec![2.0, 1.0]).unwrap();
        let out = bandit_expansion(&s, &BanditEvent { arm: 0, reward: 0.3 }, 1.0).unwrap();
        assert_eq!(out.mu_hat, s.mu_hat);
        assert!(out.sigma2_hat[0] < 2.0);
        assert_eq!(out.sigma2_hat[1], 1.0);
        let tiny = BanditState::new(vec![0.0], vec![1e-12]).unwrap();
        let out = bandit_expansion(&tiny, &BanditEvent { arm: 0, reward: 5.0 }, 1.0).unwrap();
        assert!(out.mu_hat[0].abs() < 1e-11);
        assert!(bandit_expansion(&tiny, &BanditEvent { arm: 3, reward: 0.0 }, 1.0).is_err());
    }

    #[test]
    fn consolidation_example() {
        let mut c = cfg(0.1, 1.0);
        c.mu_p = vec![0.0];
        let s = BanditState::new(vec![1.0], vec![1.0]).unwrap();
        let out = bandit_consolidation(&s, &c);
        assert!((out.mu_hat[0] - 0.9).abs() < 1e-15);
        assert_eq!(out.sigma2_hat[0], 0.5);
        assert_eq!(c.consolidation_lipschitz(), 0.9);
    }

    #[test]
    fn commutator_entry_example() {
        let c = cfg(0.1, 1.0);
        let s = BanditState::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let e = BanditEvent { arm: 0, reward: 2.0 };
        assert!((analytic_commutator_entry(&s, &e, &c) - 0.2).abs() < 1e-15);
        assert_eq!(analytic_commutator_entry(&s, &BanditEvent { arm: 0, reward: 0.0 }, &c), 0.0);
        assert_eq!(analytic_commutator_entry(&s, &e, &cfg(0.5, 1.0)), 0.0);
    }

    #[test]
    fn finite_difference_commutator_matches_entry() {
        let c = cfg(0.1, 1.0);
        let pair = BanditPair::new(c.clone()).unwrap();
        let state = BanditState::new(vec![0.4, -0.2], vec![0.7, 1.3]).unwrap();
        let theta = state.flatten();
        for (arm, r) in [(0, 2.0), (1, -0.5), (1, 3.0)] {
            let e = Event::new(arm as u64, BanditEvent { arm, reward: r });
            let jac = analysis::JacobianPair::from_pair(&pair, std::slice::from_ref(&e), &theta, 1e-5).unwrap();
            let sigma = &jac.sigmas().unwrap()[0];
            let want = analytic_commutator_entry(&state, &e.payload, &c);
            let got = sigma[(arm, 2 + arm)];
            assert!((got - want).abs() <= 1e-6 * want.abs(), "{got} vs {want}");
            for i in 0..4 {
                for j in 0..4 {
                    if (i, j) != (arm, 2 + arm) {
                        assert!(sigma[(i, j)].abs() <= 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = cfg(0.0, 0.0);
        assert!(c.validate().is_err());
        c.lambda = 0.1;
        assert!(c.validate().is_err());
        c.kappa = 1.0;
        assert!(c.validate().is_ok());
        c.selection = Selection::Fixed { probs: vec![0.7, 0.7] };
        assert!(c.validate().is_err());
    }

    #[test]
    fn greedy_probabilities_break_ties_low() {
        let s = Selection::EpsilonGreedy { epsilon: 0.2 };
        assert_eq!(s.probabilities(&[1.0, 1.0, 0.0]), vec![0.2 / 3.0 + 0.8, 0.2 / 3.0, 0.2 / 3.0]);
    }

    #[test]
    fn equilibrium_is_prior_with_collapsed_variance() {
        let c = cfg(0.1, 1.0);
        let theta0 = BanditState::new(vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
        let rep = bandit_equilibrium(&c, &theta0, EquilibriumOptions::default()).unwrap();
        let star = BanditPair::new(c).unwrap().consolidation_fixed_point();
        assert!((&*rep.theta_star_inf - &*star).amax() < 1e-9);
    }

    #[test]
    fn gramian_rank_counts_selected_arms() {
        let mut c = cfg(0.1, 1.0);
        let pair = BanditPair::new(c.clone()).unwrap();
        let theta = pair.consolidation_fixed_point();
        let g = gramian_diagnostics(&c, &theta).unwrap();
        assert_eq!(g.report.rank_gramian, 2);
        assert!(g.report.mu1_sq > 0.0);
        // At s = 0 the (s_a, s_a) entry is p_a E[(r - mu_p)^2] m^2 / sigma_r^2.
        let m = c.mismatch_factor();
        let want1 = 0.5 * (1.0 + 1.0) * m * m;
        assert!((g.report.gramian[(3, 3)] - want1).abs() < 1e-6);
        c.selection = Selection::Fixed { probs: vec![1.0, 0.0] };
        let g = gramian_diagnostics(&c, &theta).unwrap();
        assert_eq!(g.report.rank_gramian, 1);
        assert_eq!(g.report.mu1_sq, 0.0);
    }

    #[test]
    fn sampler_draws_selected_arm() {
        let mut c = cfg(0.1, 1.0);
        c.selection = Selection::Fixed { probs: vec![0.0, 1.0] };
        let mut s = BanditSampler::new(c).unwrap();
        let theta = flat(&[0.0, 0.0], &[1.0, 1.0]);
        let mut rng = root_rng(4);
        for _ in 0..50 {
            assert_eq!(s.draw(&theta, &mut rng).unwrap().payload.arm, 1);
        }
    }

    #[test]
    fn simulation_logs_regret() {
        let c = cfg(0.1, 1.0);
        let theta0 = BanditState::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let stop = StoppingConfig::new(1e-9, 10, 200).unwrap();
        let run = simulate_bandit(&c, &theta0, &stop, &mut root_rng(2), None).unwrap();
        assert_eq!(run.regret.len(), run.report.trace.len());
        for (a, r) in run.arms.iter().zip(&run.regret) {
            assert_eq!(*r, if *a == 0 { 1.0 } else { 0.0 });
        }
    }
}
