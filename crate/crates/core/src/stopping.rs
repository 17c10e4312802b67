//! Windowed order-gap stopping and its closed-form guarantees.
//!
//! The learner stops at the first full window whose mean order-gap is at
//! most `epsilon`. Under the contraction assumptions this happens within
//! `w + N_eps` steps (noiseless) or `T0 = w + N_{eps,M}` steps with
//! probability at least `1 - delta` (bounded noise), and the stopped state
//! lies within an explicit distance of the consolidation fixed point.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    at_step, order_gap, Event, EventSampler, FiniteEvents, GapSample, Norm, OperatorPair, OrderGap, OrderGapTrace,
    StateVector,
};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Contraction and noise constants of an operator pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    rho: f64,
    lipschitz: f64,
    sigma: f64,
    m: f64,
    r0: f64,
    mu: Option<f64>,
    r: Option<f64>,
}

impl TheoryConstants {
    /// `rho` in `[0, 1)`, `lipschitz >= 0`, `0 <= sigma <= m`, `r0 >= 0`,
    /// and `m = 0` whenever `sigma = 0`.
    pub fn new(rho: f64, lipschitz: f64, sigma: f64, m: f64, r0: f64) -> Result<Self> {
        for (name, v) in [("rho", rho), ("L", lipschitz), ("sigma", sigma), ("M", m), ("R0", r0)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        if rho >= 1.0 {
            return Err(Error::invalid("rho", "must be < 1"));
        }
        if m < sigma {
            return Err(Error::invalid("M", "must be >= sigma"));
        }
        if sigma == 0.0 && m != 0.0 {
            return Err(Error::invalid("M", "must be 0 when sigma = 0"));
        }
        Ok(TheoryConstants { rho, lipschitz, sigma, m, r0, mu: None, r: None })
    }

    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid("mu", "must be finite and > 0"));
        }
        self.mu = Some(mu);
        Ok(self)
    }

    /// Validity radius; may be infinite.
    pub fn with_radius(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::invalid("r", "must be > 0"));
        }
        self.r = Some(r);
        Ok(self)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn mu(&self) -> Option<f64> {
        self.mu
    }

    pub fn r(&self) -> Option<f64> {
        self.r
    }

    /// `rho * L`, the one-step contraction factor toward the fixed point.
    pub fn gamma(&self) -> f64 {
        self.rho * self.lipschitz
    }

    /// Radius `rho M / (1 - gamma)` of the noise ball around the fixed point.
    pub fn noise_ball(&self) -> Result<f64> {
        let g = self.contractive_gamma()?;
        Ok(self.rho * self.m / (1.0 - g))
    }

    fn contractive_gamma(&self) -> Result<f64> {
        let g = self.gamma();
        if g >= 1.0 {
            Err(Error::NotContractive { gamma: g })
        } else {
            Ok(g)
        }
    }
}

/// Asymptotic floor of the expected order-gap under noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloor {
    /// `(1 + rho) sigma`: the gap at the fixed point itself.
    pub eps_eq: f64,
    /// `2 gamma rho sigma / (1 - gamma)`: the residual trajectory wander.
    pub eps_traj: f64,
    pub eps_star: f64,
    /// Same floor with the almost-sure envelope `M` in place of `sigma`.
    pub eps_star_m: f64,
}

pub fn noise_floor(c: &TheoryConstants) -> Result<NoiseFloor> {
    let g = c.contractive_gamma()?;
    let floor = |s: f64| ((1.0 + c.rho) * s, 2.0 * g * c.rho * s / (1.0 - g));
    let (eps_eq, eps_traj) = floor(c.sigma);
    let (m_eq, m_traj) = floor(c.m);
    Ok(NoiseFloor { eps_eq, eps_traj, eps_star: eps_eq + eps_traj, eps_star_m: m_eq + m_traj })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Window the realized order-gaps.
    #[default]
    Empirical,
    /// Window the exact conditional expectation over a finite event set.
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub epsilon: f64,
    pub window: usize,
    pub t_max: usize,
    /// Failure probability; its presence selects the noisy regime.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub rule: StopRule,
}

impl StoppingConfig {
    pub fn new(epsilon: f64, window: usize, t_max: usize) -> Result<Self> {
        let cfg = StoppingConfig { epsilon, window, t_max, delta: None, rule: StopRule::Empirical };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = Some(delta);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", "must be finite and > 0"));
        }
        if self.window == 0 {
            return Err(Error::invalid("window", "must be >= 1"));
        }
        if self.t_max < self.window {
            return Err(Error::invalid("t_max", "must be >= window"));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::invalid("delta", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Bounds that hold with probability `1 - delta` under bounded noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyBounds {
    pub eps_star_m: f64,
    pub n_eps_m: u64,
    /// `w + N_{eps,M}`.
    pub t0: u64,
    /// Almost-sure order-gap envelope along the trajectory.
    pub k: f64,
    /// Window concentration slack at the configured `w`.
    pub eta: f64,
    /// Smallest window satisfying the window condition.
    pub w_min: u64,
    /// Whether the configured window meets the window condition.
    pub window_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingBounds {
    pub n_eps: u64,
    pub noisy: Option<NoisyBounds>,
    /// `epsilon / mu`.
    pub endpoint_det: Option<f64>,
    /// `(epsilon + eta) / mu + rho M / (1 - gamma)`.
    pub endpoint_noisy: Option<f64>,
    /// Steps until the trajectory enters the ball of radius `r`.
    pub containment_t0r: Option<u64>,
    /// `epsilon <= 2 gamma r`, needed for the noiseless endpoint bound.
    pub det_radius_ok: Option<bool>,
    /// `r >= rho M / (1 - gamma) + (epsilon - eps_star_M) / 4`.
    pub noisy_radius_ok: Option<bool>,
}

fn log_steps(ratio: f64, gamma: f64) -> u64 {
    if ratio <= 1.0 {
        0
    } else {
        (ratio.ln() / (1.0 / gamma).ln()).ceil() as u64
    }
}

/// `N_eps = ceil(log(2 gamma R0 / eps) / log(1 / gamma))`, or 0 when
/// `gamma = 0`, `R0 = 0` or `2 gamma R0 <= eps`.
pub fn n_eps(gamma: f64, r0: f64, epsilon: f64) -> u64 {
    if gamma == 0.0 || r0 == 0.0 {
        return 0;
    }
    log_steps(2.0 * gamma * r0 / epsilon, gamma)
}

/// `N_{eps,M} = ceil(log(4 R0 / (eps - eps_star_M)) / log(1 / gamma))`,
/// or 0 when `gamma = 0` or `4 R0 <= eps - eps_star_M`.
pub fn n_eps_m(gamma: f64, r0: f64, margin: f64) -> u64 {
    if gamma == 0.0 || r0 == 0.0 {
        return 0;
    }
    log_steps(4.0 * r0 / margin, gamma)
}

/// Almost-sure envelope `K = 2 rho L (R0 + rho M / (1 - gamma)) + (1 + rho) M`.
pub fn gap_envelope(c: &TheoryConstants) -> Result<f64> {
    let ball = c.noise_ball()?;
    Ok(2.0 * c.rho * c.lipschitz * (c.r0 + ball) + (1.0 + c.rho) * c.m)
}

/// `eta = K sqrt(2 ln(2 T0 / delta) / w)`.
pub fn concentration_slack(k: f64, t0: u64, delta: f64, w: usize) -> f64 {
    k * (2.0 * (2.0 * t0 as f64 / delta).ln() / w as f64).sqrt()
}

/// Smallest `w` with `w >= 8 K^2 / margin^2 * ln(2 (w + n) / delta)`.
///
/// Iterates `w <- ceil(rhs(w))` from the bound with `T0` dropped, which
/// increases monotonically to the least solution; falls back to doubling if
/// ten iterations do not settle.
pub fn min_window(k: f64, margin: f64, n: u64, delta: f64) -> u64 {
    let scale = 8.0 * k * k / (margin * margin);
    let rhs = |w: u64| (scale * (2.0 * (w + n) as f64 / delta).ln()).ceil().max(1.0) as u64;
    let ok = |w: u64| w as f64 >= scale * (2.0 * (w + n) as f64 / delta).ln();
    let mut w = (scale * (2.0 / delta).ln()).ceil().max(1.0) as u64;
    for _ in 0..10 {
        if ok(w) {
            return w;
        }
        w = rhs(w).max(w + 1);
    }
    while !ok(w) {
        w = w.saturating_mul(2);
    }
    w
}

/// Closed-form stopping-time, window and endpoint bounds.
pub fn stopping_bounds(c: &TheoryConstants, cfg: &StoppingConfig) -> Result<StoppingBounds> {
    cfg.validate()?;
    let g = c.contractive_gamma()?;
    let eps = cfg.epsilon;
    let ball = c.noise_ball()?;
    let noisy = match cfg.delta {
        Some(delta) => {
            let floor = noise_floor(c)?;
            if eps <= floor.eps_star_m {
                return Err(Error::BelowNoiseFloor { epsilon: eps, floor: floor.eps_star_m });
            }
            let margin = eps - floor.eps_star_m;
            let n = n_eps_m(g, c.r0, margin);
            let t0 = cfg.window as u64 + n;
            let k = gap_envelope(c)?;
            let w_min = min_window(k, margin, n, delta);
            Some(NoisyBounds {
                eps_star_m: floor.eps_star_m,
                n_eps_m: n,
                t0,
                k,
                eta: concentration_slack(k, t0, delta, cfg.window),
                w_min,
                window_ok: cfg.window as u64 >= w_min,
            })
        }
        None => None,
    };
    let endpoint_det = c.mu.map(|mu| eps / mu);
    let endpoint_noisy = match (c.mu, &noisy) {
        (Some(mu), Some(nb)) => Some((eps + nb.eta) / mu + ball),
        _ => None,
    };
    let containment_t0r = match c.r {
        Some(r) if r.is_infinite() => Some(0),
        Some(r) => Some(containment_time(c, r)?),
        None => None,
    };
    Ok(StoppingBounds {
        n_eps: n_eps(g, c.r0, eps),
        det_radius_ok: c.r.map(|r| eps <= 2.0 * g * r),
        noisy_radius_ok: match (c.r, &noisy) {
            (Some(r), Some(nb)) => Some(r >= ball + (eps - nb.eps_star_m) / 4.0),
            _ => None,
        },
        noisy,
        endpoint_det,
        endpoint_noisy,
        containment_t0r,
    })
}

/// Steps after which the trajectory stays within radius `r` of the fixed
/// point: 0 if `R0 <= r - rho M/(1-gamma)`, else
/// `ceil(log(R0 / (r - rho M/(1-gamma))) / log(1/gamma))`.
pub fn containment_time(c: &TheoryConstants, r: f64) -> Result<u64> {
    let g = c.contractive_gamma()?;
    let ball = c.noise_ball()?;
    if r <= ball {
        return Err(Error::RadiusTooSmall { r, ball });
    }
    let slack = r - ball;
    if c.r0 <= slack || g == 0.0 {
        return Ok(0);
    }
    Ok(log_steps(c.r0 / slack, g))
}

/// Optional inputs for [`suboptimality_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SuboptimalityInputs {
    /// Quadratic-growth modulus of the loss.
    pub m_qg: Option<f64>,
    /// Smoothness constant of the loss.
    pub m_sm: Option<f64>,
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuboptimalityBounds {
    /// `|theta - theta*| >= (E[Omega] - (1 + rho) sigma)_+ / (2 rho L)`.
    pub distance_lower: f64,
    /// `m_QG / 2 * distance_lower^2`.
    pub loss_lower: Option<f64>,
    /// `(M_sm / 2) (eps / mu)^2`.
    pub excess_det: Option<f64>,
    /// `(M_sm / 2) ((eps + eta) / mu + rho M / (1 - gamma))^2`.
    pub excess_noisy: Option<f64>,
}

/// Converts an observed mean order-gap into a lower bound on the distance to
/// the fixed point, and stopping tolerances into excess-loss upper bounds.
pub fn suboptimality_bounds(
    c: &TheoryConstants,
    observed_gap_mean: f64,
    inputs: SuboptimalityInputs,
) -> Result<SuboptimalityBounds> {
    if !(observed_gap_mean >= 0.0 && observed_gap_mean.is_finite()) {
        return Err(Error::invalid("observed_gap_mean", "must be finite and >= 0"));
    }
    let g = c.gamma();
    if g == 0.0 {
        return Err(Error::DegenerateGamma);
    }
    let distance_lower = (observed_gap_mean - (1.0 + c.rho) * c.sigma).max(0.0) / (2.0 * g);
    let loss_lower = inputs.m_qg.map(|m| m / 2.0 * distance_lower * distance_lower);
    let excess_det = match (inputs.m_sm, inputs.epsilon, c.mu) {
        (Some(s), Some(e), Some(mu)) => Some(s / 2.0 * (e / mu).powi(2)),
        _ => None,
    };
    let excess_noisy = match (inputs.m_sm, inputs.epsilon, inputs.eta, c.mu) {
        (Some(s), Some(e), Some(eta), Some(mu)) => Some(s / 2.0 * ((e + eta) / mu + c.noise_ball()?).powi(2)),
        _ => None,
    };
    Ok(SuboptimalityBounds { distance_lower, loss_lower, excess_det, excess_noisy })
}

/// Comparison of one run against its bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundChecks {
    pub tau_bound: Option<u64>,
    pub tau_within_bound: Option<bool>,
    pub endpoint_distance: Option<f64>,
    pub endpoint_bound: Option<f64>,
    pub endpoint_within_bound: Option<bool>,
}

/// Outcome of one stopping run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingReport {
    /// Stopping step, or `t_max` when the budget ran out.
    pub tau: usize,
    pub triggered: bool,
    pub final_state: StateVector,
    /// Windowed mean at each step, once the window is full.
    pub window_averages: Vec<Option<f64>>,
    /// Exact conditional expected gaps, for the expected-gap rule.
    pub expected_gaps: Option<Vec<f64>>,
    pub trace: OrderGapTrace,
    pub rule: StopRule,
    pub epsilon: f64,
    pub window: usize,
    pub norm: Norm,
    pub bounds: Option<StoppingBounds>,
    pub checks: Option<BoundChecks>,
    pub warnings: Vec<String>,
}

impl StoppingReport {
    /// Last computed window mean.
    pub fn last_window_average(&self) -> Option<f64> {
        self.window_averages.iter().rev().find_map(|w| *w)
    }

    /// Attaches bounds for `c` and checks the run against them. Sub-floor
    /// tolerances in the noisy regime produce a warning, not an error.
    pub fn with_bounds(mut self, c: &TheoryConstants, cfg: &StoppingConfig) -> Result<Self> {
        let bounds = match stopping_bounds(c, cfg) {
            Ok(b) => b,
            Err(Error::BelowNoiseFloor { epsilon, floor }) => {
                self.warnings.push(format!(
                    "epsilon {epsilon} is at or below the bounded-noise floor {floor}; noisy guarantees do not apply"
                ));
                stopping_bounds(c, &StoppingConfig { delta: None, ..*cfg })?
            }
            Err(e) => return Err(e),
        };
        if let Some(nb) = &bounds.noisy {
            if !nb.window_ok {
                self.warnings.push(format!("window {} is below w_min {}", cfg.window, nb.w_min));
            }
        }
        let noiseless = c.m() == 0.0;
        let tau_bound = match (&bounds.noisy, noiseless) {
            (Some(nb), _) => Some(nb.t0),
            (None, true) => Some(cfg.window as u64 + bounds.n_eps),
            (None, false) => None,
        };
        let endpoint_bound = if bounds.noisy.is_some() {
            bounds.endpoint_noisy
        } else if noiseless {
            bounds.endpoint_det
        } else {
            None
        };
        let endpoint_distance = match &self.trace.reference_point {
            Some(r) if self.triggered => Some(self.norm.distance(&self.final_state, r)),
            _ => None,
        };
        self.checks = Some(BoundChecks {
            tau_bound,
            tau_within_bound: tau_bound.map(|b| self.tau as u64 <= b),
            endpoint_distance,
            endpoint_bound,
            endpoint_within_bound: match (endpoint_distance, endpoint_bound) {
                (Some(d), Some(b)) => Some(d <= b),
                _ => None,
            },
        });
        self.bounds = Some(bounds);
        Ok(self)
    }
}

/// What an observer sees at each step of a stopping run.
pub struct StepView<'a, P> {
    pub t: usize,
    pub theta: &'a StateVector,
    pub event: &'a Event<P>,
    pub gap: &'a OrderGap,
}

/// Windowed stopping on realized order-gaps.
pub fn windowed_stop<O, S>(
    pair: &O,
    sampler: &mut S,
    theta0: &StateVector,
    cfg: &StoppingConfig,
    rng: &mut SimRng,
    reference: Option<&StateVector>,
) -> Result<StoppingReport>
where
    O: OperatorPair,
    S: EventSampler<O::Payload>,
{
    windowed_stop_observed(pair, sampler, theta0, cfg, rng, reference, |_| Ok(()))
}

/// [`windowed_stop`] with a callback at every step, for domain logging.
pub fn windowed_stop_observed<O, S, F>(
    pair: &O,
    sampler: &mut S,
    theta0: &StateVector,
    cfg: &StoppingConfig,
    rng: &mut SimRng,
    reference: Option<&StateVector>,
    mut observer: F,
) -> Result<StoppingReport>
where
    O: OperatorPair,
    S: EventSampler<O::Payload>,
    F: FnMut(&StepView<'_, O::Payload>) -> Result<()>,
{
    run_window(pair, sampler, theta0, cfg, rng, reference, StopRule::Empirical, |view| {
        observer(view)?;
        Ok(view.gap.omega)
    })
}

/// Windowed stopping on the exact conditional expected gap
/// `g_t = sum_e p_e Omega(theta_t; e)`, while the dynamics still follow
/// events sampled from the same set.
pub fn expected_gap_stop<O>(
    pair: &O,
    events: &FiniteEvents<O::Payload>,
    theta0: &StateVector,
    cfg: &StoppingConfig,
    rng: &mut SimRng,
    reference: Option<&StateVector>,
) -> Result<StoppingReport>
where
    O: OperatorPair,
{
    let mut sampler = events.clone();
    run_window(pair, &mut sampler, theta0, cfg, rng, reference, StopRule::Expected, |view| {
        let mut g = 0.0;
        for (e, p) in events.iter() {
            g += p * order_gap(pair, view.theta, e)?.omega;
        }
        Ok(g)
    })
}

#[allow(clippy::too_many_arguments)]
fn run_window<O, S, G>(
    pair: &O,
    sampler: &mut S,
    theta0: &StateVector,
    cfg: &StoppingConfig,
    rng: &mut SimRng,
    reference: Option<&StateVector>,
    rule: StopRule,
    mut signal: G,
) -> Result<StoppingReport>
where
    O: OperatorPair,
    S: EventSampler<O::Payload>,
    G: FnMut(&StepView<'_, O::Payload>) -> Result<f64>,
{
    cfg.validate()?;
    theta0.check_dim(pair.dim())?;
    if let Some(r) = reference {
        r.check_dim(pair.dim())?;
    }
    let norm = pair.norm();
    let mut trace = OrderGapTrace::new(reference.cloned());
    let mut window_averages = Vec::new();
    let mut expected = (rule == StopRule::Expected).then(Vec::new);
    let mut buffer: VecDeque<f64> = VecDeque::with_capacity(cfg.window);
    let mut theta = theta0.clone();
    let mut tau = cfg.t_max;
    let mut triggered = false;
    for t in 0..cfg.t_max {
        let event = sampler.draw(&theta, rng)?;
        let gap = order_gap(pair, &theta, &event).map_err(|e| at_step(e, t))?;
        let view = StepView { t, theta: &theta, event: &event, gap: &gap };
        let value = signal(&view).map_err(|e| at_step(e, t))?;
        if let Some(g) = expected.as_mut() {
            g.push(value);
        }
        trace.push(GapSample {
            t,
            event_id: event.id,
            omega: gap.omega,
            dist_to_ref: reference.map(|r| norm.distance(&theta, r)),
        });
        if buffer.len() == cfg.window {
            buffer.pop_front();
        }
        buffer.push_back(value);
        let mean = (buffer.len() == cfg.window).then(|| buffer.iter().sum::<f64>() / cfg.window as f64);
        window_averages.push(mean);
        theta = gap.expand_then_consolidate;
        if mean.is_some_and(|m| m <= cfg.epsilon) {
            tau = t + 1;
            triggered = true;
            break;
        }
    }
    Ok(StoppingReport {
        tau,
        triggered,
        final_state: theta,
        window_averages,
        expected_gaps: expected,
        trace,
        rule,
        epsilon: cfg.epsilon,
        window: cfg.window,
        norm,
        bounds: None,
        checks: None,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::LinearPair;
    use crate::rng::root_rng;
    use nalgebra::{DMatrix, DVector};

    fn consts(rho: f64, l: f64, sigma: f64, m: f64, r0: f64) -> TheoryConstants {
        TheoryConstants::new(rho, l, sigma, m, r0).unwrap()
    }

    #[test]
    fn constants_validation() {
        assert!(TheoryConstants::new(1.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(TheoryConstants::new(0.5, 1.0, 0.2, 0.1, 1.0).is_err());
        assert!(TheoryConstants::new(0.5, 1.0, 0.0, 0.1, 1.0).is_err());
        assert!(TheoryConstants::new(0.5, -1.0, 0.0, 0.0, 1.0).is_err());
        assert_eq!(consts(0.5, 0.8, 0.0, 0.0, 1.0).gamma(), 0.4);
        assert_eq!(noise_floor(&consts(0.9, 2.0, 0.0, 0.0, 1.0)).unwrap_err(), Error::NotContractive { gamma: 1.8 });
    }

    #[test]
    fn noise_floor_examples() {
        let f = noise_floor(&consts(0.5, 1.0, 0.1, 0.1, 1.0)).unwrap();
        assert!((f.eps_eq - 0.15).abs() < 1e-15);
        assert!((f.eps_traj - 0.1).abs() < 1e-15);
        assert!((f.eps_star - 0.25).abs() < 1e-15);
        assert!((f.eps_star_m - 0.25).abs() < 1e-15);
        let z = noise_floor(&consts(0.5, 1.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!((z.eps_eq, z.eps_traj, z.eps_star, z.eps_star_m), (0.0, 0.0, 0.0, 0.0));
        let d = noise_floor(&consts(0.5, 1.0, 0.1, 0.2, 1.0)).unwrap();
        assert!((d.eps_star_m - 2.0 * d.eps_star).abs() < 1e-15);
    }

    #[test]
    fn count_examples() {
        assert_eq!(n_eps(0.5, 1.0, 0.1), 4);
        assert_eq!(n_eps(0.5, 1.0, 1.0), 0);
        assert_eq!(n_eps(0.0, 1.0, 0.1), 0);
        assert_eq!(n_eps(0.5, 0.0, 0.1), 0);
        assert!((gap_envelope(&consts(0.5, 1.0, 0.1, 0.1, 1.0)).unwrap() - 1.25).abs() < 1e-15);
        let c = consts(0.5, 1.0, 0.1, 0.1, 1.0).with_radius(0.2).unwrap();
        assert_eq!(containment_time(&c, 0.2).unwrap(), 4);
        assert!(matches!(containment_time(&c, 0.1), Err(Error::RadiusTooSmall { .. })));
    }

    #[test]
    fn noiseless_bounds_reach_w_when_already_close() {
        let c = consts(0.5, 1.0, 0.0, 0.0, 0.05);
        let b = stopping_bounds(&c, &StoppingConfig::new(0.1, 3, 100).unwrap()).unwrap();
        assert_eq!(b.n_eps, 0);
        assert!(b.noisy.is_none() && b.endpoint_det.is_none());
    }

    #[test]
    fn noisy_bounds_reject_sub_floor_epsilon() {
        let c = consts(0.5, 1.0, 0.1, 0.1, 1.0);
        let cfg = StoppingConfig::new(0.25, 10, 100).unwrap().with_delta(0.1).unwrap();
        assert!(matches!(stopping_bounds(&c, &cfg), Err(Error::BelowNoiseFloor { .. })));
    }

    #[test]
    fn noisy_bounds_arithmetic() {
        let c = consts(0.5, 1.0, 0.1, 0.1, 1.0).with_mu(0.125).unwrap();
        let cfg = StoppingConfig::new(0.45, 100, 10_000).unwrap().with_delta(0.1).unwrap();
        let b = stopping_bounds(&c, &cfg).unwrap();
        let nb = b.noisy.unwrap();
        // 4 R0 / (0.45 - 0.25) = 20, log2(20) = 4.32
        assert_eq!(nb.n_eps_m, 5);
        assert_eq!(nb.t0, 105);
        let eta = 1.25 * (2.0 * (2.0 * 105.0 / 0.1f64).ln() / 100.0).sqrt();
        assert!((nb.eta - eta).abs() < 1e-14);
        assert!((b.endpoint_noisy.unwrap() - ((0.45 + eta) / 0.125 + 0.1)).abs() < 1e-12);
        assert!(!nb.window_ok);
    }

    #[test]
    fn min_window_is_least_solution() {
        let (k, margin, n, delta) = (1.25, 0.2, 5, 0.1);
        let w = min_window(k, margin, n, delta);
        let cond = |w: u64| w as f64 >= 8.0 * k * k / (margin * margin) * (2.0 * (w + n) as f64 / delta).ln();
        assert!(cond(w));
        assert!(!cond(w - 1));
        // Oracle: linear scan from 1.
        let scan = (1..).find(|&w| cond(w)).unwrap();
        assert_eq!(w, scan);
    }

    #[test]
    fn suboptimality_examples() {
        let c = consts(0.5, 1.0, 0.1, 0.1, 1.0);
        let s = suboptimality_bounds(&c, 0.5, SuboptimalityInputs::default()).unwrap();
        assert!((s.distance_lower - 0.35).abs() < 1e-15);
        assert_eq!(suboptimality_bounds(&c, 0.1, SuboptimalityInputs::default()).unwrap().distance_lower, 0.0);
        let c = consts(0.5, 1.0, 0.0, 0.0, 1.0).with_mu(0.2).unwrap();
        let s = suboptimality_bounds(
            &c,
            0.0,
            SuboptimalityInputs { m_sm: Some(2.0), epsilon: Some(0.1), ..Default::default() },
        )
        .unwrap();
        assert!((s.excess_det.unwrap() - 0.25).abs() < 1e-15);
        let z = consts(0.0, 1.0, 0.0, 0.0, 1.0);
        assert_eq!(suboptimality_bounds(&z, 0.1, SuboptimalityInputs::default()).unwrap_err(), Error::DegenerateGamma);
    }

    fn identity_pair() -> LinearPair {
        LinearPair::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            vec![(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), DVector::zeros(2))],
        )
        .unwrap()
    }

    #[test]
    fn zero_gaps_stop_at_first_full_window() {
        let pair = identity_pair();
        let mut s = FiniteEvents::uniform(pair.events()).unwrap();
        let cfg = StoppingConfig::new(1e-3, 5, 100).unwrap();
        let rep =
            windowed_stop(&pair, &mut s, &StateVector::from_vec(vec![1.0, 2.0]), &cfg, &mut root_rng(0), None).unwrap();
        assert!(rep.triggered);
        assert_eq!(rep.tau, 5);
        assert_eq!(rep.trace.len(), 5);
        assert_eq!(rep.last_window_average(), Some(0.0));
    }

    #[test]
    fn budget_exhaustion_returns_t_max() {
        let pair = LinearPair::new(
            DMatrix::identity(1, 1) * 0.5,
            DVector::zeros(1),
            vec![(DMatrix::identity(1, 1), DVector::from_vec(vec![1.0]))],
        )
        .unwrap();
        // Constant gap 0.5 at every state.
        let mut s = FiniteEvents::uniform(pair.events()).unwrap();
        let cfg = StoppingConfig::new(0.1, 3, 50).unwrap();
        let theta0 = StateVector::from_vec(vec![0.0]);
        let rep = windowed_stop(&pair, &mut s, &theta0, &cfg, &mut root_rng(0), None).unwrap();
        assert!(!rep.triggered);
        assert_eq!(rep.tau, 50);
        let mut theta = 0.0;
        for _ in 0..50 {
            theta = 0.5 * (theta + 1.0);
        }
        assert!((rep.final_state[0] - theta).abs() < 1e-15);
    }

    #[test]
    fn diag_rotation_stops_within_bound() {
        let pair = LinearPair::diag_rotation();
        let mut s = FiniteEvents::uniform(pair.events()).unwrap();
        let cfg = StoppingConfig::new(0.1, 2, 100).unwrap();
        let theta0 = StateVector::from_vec(vec![1.0, 0.0]);
        let star = StateVector::zeros(2);
        let rep = windowed_stop(&pair, &mut s, &theta0, &cfg, &mut root_rng(0), Some(&star)).unwrap();
        // Oracle: omegas 0.25, 0.0625, 0.03125, ... window means 0.15625 then 0.046875.
        assert_eq!(rep.tau, 3);
        let c = consts(0.5, 1.0, 0.0, 0.0, 1.0).with_mu(0.125).unwrap();
        let rep = rep.with_bounds(&c, &cfg).unwrap();
        let checks = rep.checks.unwrap();
        assert_eq!(checks.tau_bound, Some(6));
        assert_eq!(checks.tau_within_bound, Some(true));
        assert_eq!(checks.endpoint_within_bound, Some(true));
    }

    #[test]
    fn ties_trigger_stop() {
        let pair = LinearPair::new(
            DMatrix::identity(1, 1) * 0.5,
            DVector::zeros(1),
            vec![(DMatrix::identity(1, 1), DVector::from_vec(vec![1.0]))],
        )
        .unwrap();
        let mut s = FiniteEvents::uniform(pair.events()).unwrap();
        let cfg = StoppingConfig::new(0.5, 1, 10).unwrap();
        let rep = windowed_stop(&pair, &mut s, &StateVector::zeros(1), &cfg, &mut root_rng(0), None).unwrap();
        assert!(rep.triggered);
        assert_eq!(rep.tau, 1);
    }

    #[test]
    fn sub_floor_is_only_a_warning_for_the_run() {
        let pair = LinearPair::diag_rotation();
        let mut s = crate::linear::NoisyLinearSampler::new(2, &[1.0], 0.1).unwrap();
        let cfg = StoppingConfig::new(0.2, 5, 200).unwrap().with_delta(0.1).unwrap();
        let rep =
            windowed_stop(&pair, &mut s, &StateVector::from_vec(vec![1.0, 0.0]), &cfg, &mut root_rng(1), None).unwrap();
        let rep = rep.with_bounds(&consts(0.5, 1.0, 0.1, 0.1, 1.0), &cfg).unwrap();
        assert!(!rep.warnings.is_empty());
        assert!(rep.bounds.unwrap().noisy.is_none());
    }

    #[test]
    fn expected_rule_with_point_mass_matches_empirical() {
        let pair = LinearPair::diag_rotation();
        let events = FiniteEvents::uniform(pair.events()).unwrap();
        let cfg = StoppingConfig::new(0.01, 3, 100).unwrap();
        let theta0 = StateVector::from_vec(vec![0.7, -0.4]);
        let a = windowed_stop(&pair, &mut events.clone(), &theta0, &cfg, &mut root_rng(0), None).unwrap();
        let b = expected_gap_stop(&pair, &events, &theta0, &cfg, &mut root_rng(0), None).unwrap();
        assert_eq!(a.tau, b.tau);
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.window_averages, b.window_averages);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(StoppingConfig::new(0.0, 1, 10).is_err());
        assert!(StoppingConfig::new(0.1, 0, 10).is_err());
        assert!(StoppingConfig::new(0.1, 5, 4).is_err());
        assert!(StoppingConfig::new(0.1, 5, 10).unwrap().with_delta(1.0).is_err());
    }
}
