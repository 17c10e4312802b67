//! Local sensitivity analysis of an operator pair.
//!
//! Linearizing both operators at a reference point gives `A = DQ` and
//! `B_e = DP_e`. The commutator `Sigma_e = A B_e - B_e A` governs the
//! order-gap to first order: the smallest singular value `mu0` of its mean
//! lower-bounds the expected order-gap per unit distance, and the smallest
//! eigenvalue `mu1^2` of the Gramian `E[Sigma_e^T Sigma_e]` controls the
//! second moment even when first moments cancel across events.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Event, EventSampler, FiniteEvents, Norm, OperatorPair, StateVector};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::SimRng;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference Jacobian: column `j` is
/// `(f(theta + h u_j) - f(theta - h u_j)) / 2h`.
pub fn finite_diff_jacobian<F>(f: F, theta: &StateVector, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&StateVector) -> StateVector,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", "step must be finite and > 0"));
    }
    let n = theta.dim();
    let mut columns = Vec::with_capacity(n);
    let mut rows = None;
    for j in 0..n {
        let mut plus = theta.clone();
        plus[j] += h;
        let mut minus = theta.clone();
        minus[j] -= h;
        let fp = f(&plus);
        let fm = f(&minus);
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite { step: None });
        }
        let m = *rows.get_or_insert(fp.dim());
        fp.check_dim(m)?;
        fm.check_dim(m)?;
        columns.push((&*fp - &*fm) / (2.0 * h));
    }
    let m = rows.unwrap_or_else(|| f(theta).dim());
    Ok(DMatrix::from_fn(m, n, |r, c| columns[c][r]))
}

/// Richardson-extrapolated central differences, `(4 J(h/2) - J(h)) / 3`.
/// Cancels the leading truncation term when the operator scale is unknown.
pub fn richardson_jacobian<F>(f: F, theta: &StateVector, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&StateVector) -> StateVector,
{
    let coarse = finite_diff_jacobian(&f, theta, h)?;
    let fine = finite_diff_jacobian(&f, theta, h / 2.0)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

/// Central differences at `h`, falling back to Richardson extrapolation when
/// the `h` and `h/2` estimates disagree by more than `1e-6` relative.
pub fn adaptive_jacobian<F>(f: F, theta: &StateVector, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&StateVector) -> StateVector,
{
    let coarse = finite_diff_jacobian(&f, theta, h)?;
    let fine = finite_diff_jacobian(&f, theta, h / 2.0)?;
    let scale = coarse.amax().max(1.0);
    if linalg::max_abs_diff(&coarse, &fine) <= 1e-6 * scale {
        Ok(coarse)
    } else {
        Ok((fine * 4.0 - coarse) / 3.0)
    }
}

/// `A B - B A`.
pub fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::invalid("A", "must be square"));
    }
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.nrows() });
    }
    Ok(a * b - b * a)
}

/// Jacobians of `Q` and of each sampled `P_e` at one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianPair {
    pub a: DMatrix<f64>,
    pub b_samples: Vec<(u64, DMatrix<f64>)>,
    pub eval_point: StateVector,
}

impl JacobianPair {
    pub fn new(a: DMatrix<f64>, b_samples: Vec<(u64, DMatrix<f64>)>, eval_point: StateVector) -> Result<Self> {
        let d = eval_point.dim();
        for m in std::iter::once(&a).chain(b_samples.iter().map(|(_, b)| b)) {
            if m.shape() != (d, d) {
                return Err(Error::DimensionMismatch { expected: d, found: m.nrows() });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step: None });
            }
        }
        Ok(JacobianPair { a, b_samples, eval_point })
    }

    /// Finite-difference Jacobians of the pair's actual maps at `theta`.
    pub fn from_pair<O: OperatorPair>(
        pair: &O,
        events: &[Event<O::Payload>],
        theta: &StateVector,
        h: f64,
    ) -> Result<Self> {
        theta.check_dim(pair.dim())?;
        let a = finite_diff_jacobian(|x| pair.consolidate(x), theta, h)?;
        let b_samples = events
            .iter()
            .map(|e| Ok((e.id, finite_diff_jacobian(|x| pair.expand(e, x), theta, h)?)))
            .collect::<Result<Vec<_>>>()?;
        JacobianPair::new(a, b_samples, theta.clone())
    }

    pub fn sigmas(&self) -> Result<Vec<DMatrix<f64>>> {
        self.b_samples.iter().map(|(_, b)| commutator(&self.a, b)).collect()
    }
}

/// First- and second-moment summary of the commutator Jacobians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    #[serde(with = "crate::serde_matrix")]
    pub sigma_bar: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub gramian: DMatrix<f64>,
    /// Smallest singular value of `sigma_bar` (on the subspace, if any).
    pub mu0: f64,
    /// Smallest eigenvalue of the Gramian (on the subspace, if any).
    pub mu1_sq: f64,
    #[serde(skip)]
    pub per_event_sigmas: Option<Vec<DMatrix<f64>>>,
    pub rank_sigma_bar: usize,
    pub rank_gramian: usize,
    pub rank_tolerance: f64,
    #[serde(with = "crate::serde_matrix::option")]
    pub subspace: Option<DMatrix<f64>>,
}

impl CommutatorReport {
    /// `mu1^2 / (2C)`: the first-moment sensitivity implied by Gramian
    /// coverage under a uniform envelope `Omega <= C |x|`.
    pub fn gramian_sensitivity(&self, envelope: f64) -> f64 {
        if envelope > 0.0 {
            self.mu1_sq / (2.0 * envelope)
        } else {
            0.0
        }
    }
}

/// Assembles `sigma_bar = sum w_e Sigma_e` and `G = sum w_e Sigma_e^T Sigma_e`
/// with uniform weights unless given, and reports `mu0`, `mu1^2` and ranks,
/// optionally restricted to the span of `subspace`'s columns.
pub fn commutator_stats(
    jacobians: &JacobianPair,
    weights: Option<&[f64]>,
    subspace: Option<&DMatrix<f64>>,
) -> Result<CommutatorReport> {
    let n = jacobians.b_samples.len();
    if n == 0 {
        return Err(Error::EmptyEvents);
    }
    let uniform;
    let w = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: w.len() });
            }
            crate::dynamics::check_probabilities("weights", w)?;
            w
        }
        None => {
            uniform = vec![1.0 / n as f64; n];
            &uniform
        }
    };
    let sigmas = jacobians.sigmas()?;
    let d = jacobians.a.nrows();
    let mut sigma_bar = DMatrix::zeros(d, d);
    let mut gramian = DMatrix::zeros(d, d);
    for (s, wi) in sigmas.iter().zip(w) {
        sigma_bar += s * *wi;
        gramian += s.transpose() * s * *wi;
    }
    gramian = (&gramian + gramian.transpose()) * 0.5;
    summarize(sigma_bar, gramian, Some(sigmas), subspace)
}

/// Summary statistics from an already assembled `sigma_bar` and Gramian.
pub fn summarize(
    sigma_bar: DMatrix<f64>,
    gramian: DMatrix<f64>,
    per_event_sigmas: Option<Vec<DMatrix<f64>>>,
    subspace: Option<&DMatrix<f64>>,
) -> Result<CommutatorReport> {
    let d = sigma_bar.nrows();
    let basis = match subspace {
        Some(v) => {
            if v.nrows() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.nrows() });
            }
            let q = linalg::orthonormalize(v);
            if q.ncols() == 0 {
                return Err(Error::invalid("subspace", "basis spans no directions"));
            }
            Some(q)
        }
        None => None,
    };
    let (restricted_sigma, restricted_gram) = match &basis {
        Some(v) => (&sigma_bar * v, v.transpose() * &gramian * v),
        None => (sigma_bar.clone(), gramian.clone()),
    };
    let mu0 = linalg::min_gain(&restricted_sigma);
    let mu1_sq = linalg::symmetric_eigenvalues(&restricted_gram).first().copied().unwrap_or(0.0).max(0.0);
    Ok(CommutatorReport {
        rank_sigma_bar: linalg::rank(&restricted_sigma),
        rank_gramian: linalg::psd_rank(&restricted_gram),
        rank_tolerance: linalg::RANK_RTOL,
        sigma_bar,
        gramian,
        mu0,
        mu1_sq,
        per_event_sigmas,
        subspace: basis,
    })
}

/// Result of Banach iteration on the consolidation map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub theta: StateVector,
    pub residuals: Vec<f64>,
}

/// Iterates `theta <- Q(theta)` until `|Q(theta) - theta| <= tol`.
pub fn consolidation_fixed_point<F>(
    q: F,
    theta0: &StateVector,
    tol: f64,
    max_iter: usize,
    norm: Norm,
) -> Result<FixedPoint>
where
    F: Fn(&StateVector) -> StateVector,
{
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    let mut theta = theta0.clone();
    let mut residuals = Vec::new();
    for _ in 0..=max_iter {
        let next = q(&theta);
        if !next.is_finite() {
            return Err(Error::NonFinite { step: Some(residuals.len()) });
        }
        let res = norm.distance(&next, &theta);
        residuals.push(res);
        if res <= tol {
            return Ok(FixedPoint { theta, residuals });
        }
        theta = next;
    }
    Err(Error::NotConverged { iterations: max_iter, residual: residuals.last().copied().unwrap_or(f64::INFINITY) })
}

/// A rule producing weighted events at which to average the one-step map.
pub trait ExpectationRule<P> {
    /// Weighted events (weights summing to 1) conditioned on `theta`.
    fn weighted_events(&self, theta: &StateVector) -> Result<Vec<(Event<P>, f64)>>;

    /// Number of Monte-Carlo draws, when the rule is a sample average.
    fn sample_count(&self) -> Option<usize> {
        None
    }
}

impl<P: Clone> ExpectationRule<P> for FiniteEvents<P> {
    fn weighted_events(&self, _theta: &StateVector) -> Result<Vec<(Event<P>, f64)>> {
        Ok(self.iter().map(|(e, p)| (e.clone(), p)).collect())
    }
}

/// Exact expectation over a state-dependent finite law.
pub struct FnExpectation<F>(pub F);

impl<P, F> ExpectationRule<P> for FnExpectation<F>
where
    F: Fn(&StateVector) -> Result<Vec<(Event<P>, f64)>>,
{
    fn weighted_events(&self, theta: &StateVector) -> Result<Vec<(Event<P>, f64)>> {
        (self.0)(theta)
    }
}

/// Sample average over `n_mc` draws, using the same random numbers on every
/// call (common random numbers), so the averaged map is a fixed function.
/// State-dependent samplers are conditioned on the queried state.
pub struct MonteCarlo<S> {
    sampler: S,
    n_mc: usize,
    rng: SimRng,
}

impl<S> MonteCarlo<S> {
    pub const DEFAULT_SAMPLES: usize = 1024;

    pub fn new(sampler: S, n_mc: usize, rng: SimRng) -> Result<Self> {
        if n_mc == 0 {
            return Err(Error::invalid("n_mc", "must be >= 1"));
        }
        Ok(MonteCarlo { sampler, n_mc, rng })
    }
}

impl<P, S> ExpectationRule<P> for MonteCarlo<S>
where
    S: EventSampler<P> + Clone,
{
    fn weighted_events(&self, theta: &StateVector) -> Result<Vec<(Event<P>, f64)>> {
        let mut sampler = self.sampler.clone();
        let mut rng = self.rng.clone();
        let w = 1.0 / self.n_mc as f64;
        (0..self.n_mc).map(|_| Ok((sampler.draw(theta, &mut rng)?, w))).collect()
    }

    fn sample_count(&self) -> Option<usize> {
        Some(self.n_mc)
    }
}

/// Averaged one-step map `T(theta) = E_e[Q(P_e(theta))]` under a rule.
pub fn expected_step<O, R>(pair: &O, rule: &R, theta: &StateVector) -> Result<StateVector>
where
    O: OperatorPair,
    R: ExpectationRule<O::Payload> + ?Sized,
{
    let mut acc = DVector::zeros(pair.dim());
    for (e, w) in rule.weighted_events(theta)? {
        acc += &*pair.consolidate(&pair.expand(&e, theta)) * w;
    }
    let out = StateVector::new(acc);
    if !out.is_finite() {
        return Err(Error::NonFinite { step: None });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new iterate, in (0, 1].
    pub damping: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions { tol: 1e-10, max_iter: 10_000, damping: 1.0 }
    }
}

/// The consolidation fixed point and the effective equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub theta_star: Option<StateVector>,
    pub theta_star_inf: StateVector,
    /// `|T(theta_k) - theta_k|` per iteration.
    pub residuals: Vec<f64>,
    /// Ratios of consecutive residuals.
    pub contraction_factors: Vec<f64>,
    /// Mean of `|P_e(theta_inf) - theta_inf|` under the rule.
    pub sigma_inf_estimate: f64,
    /// Largest `|P_e(theta_inf) - theta_inf|` under the rule.
    pub m_inf_estimate: f64,
    /// Standard error of the Monte-Carlo average at the solution.
    pub mc_standard_error: Option<f64>,
    /// Set when the Monte-Carlo standard error exceeds `tol`.
    pub mc_noise_exceeds_tol: bool,
    pub converged: bool,
}

/// Damped fixed-point iteration on the averaged one-step map, plus Banach
/// iteration on `Q` alone from the same start.
pub fn effective_equilibrium<O, R>(
    pair: &O,
    rule: &R,
    theta0: &StateVector,
    opts: EquilibriumOptions,
) -> Result<EquilibriumReport>
where
    O: OperatorPair,
    R: ExpectationRule<O::Payload> + ?Sized,
{
    theta0.check_dim(pair.dim())?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::invalid("damping", "must lie in (0, 1]"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    let norm = pair.norm();
    let mut theta = theta0.clone();
    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..=opts.max_iter {
        let mapped = expected_step(pair, rule, &theta)?;
        let res = norm.distance(&mapped, &theta);
        residuals.push(res);
        if res <= opts.tol {
            converged = true;
            break;
        }
        let d = opts.damping;
        theta = StateVector::new(&*theta * (1.0 - d) + &*mapped * d);
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations: opts.max_iter,
            residual: residuals.last().copied().unwrap_or(f64::INFINITY),
        });
    }
    let contraction_factors = residuals.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();

    let events = rule.weighted_events(&theta)?;
    let mut sigma_inf = 0.0;
    let mut m_inf: f64 = 0.0;
    for (e, w) in &events {
        let wdist = norm.distance(&pair.expand(e, &theta), &theta);
        sigma_inf += w * wdist;
        m_inf = m_inf.max(wdist);
    }
    let mc_standard_error = rule.sample_count().map(|n| {
        let samples: Vec<DVector<f64>> =
            events.iter().map(|(e, _)| pair.consolidate(&pair.expand(e, &theta)).into_inner()).collect();
        let mean = samples.iter().fold(DVector::zeros(pair.dim()), |a, s| a + s) / n as f64;
        let var = samples.iter().fold(DVector::zeros(pair.dim()), |a, s| a + (s - &mean).map(|x| x * x))
            / (n.max(2) - 1) as f64;
        (var / n as f64).map(f64::sqrt).norm()
    });
    let theta_star = consolidation_fixed_point(|x| pair.consolidate(x), theta0, opts.tol, opts.max_iter, norm)
        .ok()
        .map(|fp| fp.theta);
    Ok(EquilibriumReport {
        theta_star,
        theta_star_inf: theta,
        residuals,
        contraction_factors,
        sigma_inf_estimate: sigma_inf,
        m_inf_estimate: m_inf,
        mc_noise_exceeds_tol: mc_standard_error.is_some_and(|se| se > opts.tol),
        mc_standard_error,
        converged,
    })
}

/// Empirical constants. `rho`, `lipschitz` and `m` are maxima over probes
/// and so are lower bounds on the true constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsEstimate {
    pub rho: f64,
    pub lipschitz: f64,
    pub sigma: f64,
    pub m: f64,
    pub probes: usize,
    pub lower_bounds: bool,
}

/// Probes Lipschitz ratios of `Q` and `P_e` on state pairs around
/// `theta_star` (every coordinate axis plus `probes` random directions at
/// scale `radius`), and samples `W_e = |P_e(theta*) - theta*|`. Probes
/// outside the admissible state space are discarded.
pub fn estimate_constants<O, S>(
    pair: &O,
    sampler: &mut S,
    theta_star: Option<&StateVector>,
    probes: usize,
    radius: f64,
    rng: &mut SimRng,
) -> Result<ConstantsEstimate>
where
    O: OperatorPair,
    S: EventSampler<O::Payload>,
{
    let theta_star = theta_star.ok_or_else(|| Error::invalid("theta_star", "fixed point required"))?;
    theta_star.check_dim(pair.dim())?;
    if !(radius > 0.0) {
        return Err(Error::invalid("radius", "must be > 0"));
    }
    let d = pair.dim();
    let norm = pair.norm();
    let mut pairs = Vec::new();
    for i in 0..d {
        let mut x = theta_star.clone();
        x[i] += radius;
        pairs.push((x, theta_star.clone()));
    }
    for _ in 0..probes {
        let mut draw = || {
            let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            StateVector::new(&**theta_star + u * radius)
        };
        let a = draw();
        let b = draw();
        pairs.push((a, b));
    }
    let mut rho: f64 = 0.0;
    let mut lipschitz: f64 = 0.0;
    let mut used = 0;
    for (a, b) in &pairs {
        let den = norm.distance(a, b);
        if den == 0.0 || !pair.admissible(a) || !pair.admissible(b) {
            continue;
        }
        used += 1;
        rho = rho.max(norm.distance(&pair.consolidate(a), &pair.consolidate(b)) / den);
        let e = sampler.draw(a, rng)?;
        lipschitz = lipschitz.max(norm.distance(&pair.expand(&e, a), &pair.expand(&e, b)) / den);
    }
    let n_w = probes.max(1);
    let mut sum = 0.0;
    let mut m: f64 = 0.0;
    for _ in 0..n_w {
        let e = sampler.draw(theta_star, rng)?;
        let w = norm.distance(&pair.expand(&e, theta_star), theta_star);
        sum += w;
        m = m.max(w);
    }
    Ok(ConstantsEstimate { rho, lipschitz, sigma: sum / n_w as f64, m, probes: used, lower_bounds: true })
}

/// Finite-difference estimate of the second-order remainder constant `R` in
/// `|Omega-vector(theta* + x) - Omega-vector(theta*) - Sigma_e x| <= R |x|^2`,
/// maximized over events, random directions and the given radii.
pub fn estimate_remainder<O>(
    pair: &O,
    jacobians: &JacobianPair,
    events: &[Event<O::Payload>],
    radii: &[f64],
    directions: usize,
    rng: &mut SimRng,
) -> Result<f64>
where
    O: OperatorPair,
{
    let theta = &jacobians.eval_point;
    let sigmas = jacobians.sigmas()?;
    if sigmas.len() != events.len() {
        return Err(Error::DimensionMismatch { expected: sigmas.len(), found: events.len() });
    }
    let d = pair.dim();
    let diff = |x: &StateVector, e: &Event<O::Payload>| -> DVector<f64> {
        pair.consolidate(&pair.expand(e, x)).into_inner() - pair.expand(e, &pair.consolidate(x)).into_inner()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..directions.max(1) {
        let mut u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = u.norm();
        if n == 0.0 {
            continue;
        }
        u /= n;
        for &r in radii {
            let x = &u * r;
            let point = StateVector::new(&**theta + &x);
            for (e, s) in events.iter().zip(&sigmas) {
                let rem = diff(&point, e) - diff(theta, e) - s * &x;
                if !rem.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite { step: None });
                }
                worst = worst.max(rem.norm() / (r * r));
            }
        }
    }
    Ok(worst)
}

/// Validity radius `mu0 / (2R)`; infinite when `R` vanishes.
pub fn validity_radius(mu0: f64, remainder: f64) -> f64 {
    if remainder <= f64::EPSILON * mu0.max(1.0) {
        f64::INFINITY
    } else {
        mu0 / (2.0 * remainder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::LinearPair;
    use crate::rng::root_rng;
    use approx::assert_abs_diff_eq;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn jacobian_of_linear_map_is_exact() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.5, -0.25, 4.0, 2.0]);
        let theta = StateVector::from_vec(vec![0.3, -1.1, 2.0]);
        let j = finite_diff_jacobian(|x| StateVector::new(&m * &**x), &theta, 1e-5).unwrap();
        assert!(linalg::max_abs_diff(&j, &m) < 1e-10);
    }

    #[test]
    fn jacobian_of_elementwise_square() {
        let theta = StateVector::from_vec(vec![1.0, 2.0]);
        let j = finite_diff_jacobian(|x| StateVector::new(x.map(|v| v * v)), &theta, 1e-5).unwrap();
        assert!(linalg::max_abs_diff(&j, &m2(2.0, 0.0, 0.0, 4.0)) < 1e-8);
    }

    #[test]
    fn jacobian_of_constant_is_zero() {
        let theta = StateVector::from_vec(vec![1.0, 2.0]);
        let j = finite_diff_jacobian(|_| StateVector::from_vec(vec![3.0, -1.0]), &theta, 1e-5).unwrap();
        assert_eq!(j, DMatrix::zeros(2, 2));
    }

    #[test]
    fn richardson_improves_cubic() {
        let theta = StateVector::from_vec(vec![1.3]);
        let f = |x: &StateVector| StateVector::from_vec(vec![x[0].powi(3)]);
        let exact = 3.0 * 1.3f64.powi(2);
        let plain = finite_diff_jacobian(f, &theta, 1e-2).unwrap()[(0, 0)];
        let rich = richardson_jacobian(f, &theta, 1e-2).unwrap()[(0, 0)];
        assert!((rich - exact).abs() < (plain - exact).abs() / 100.0);
        let auto = adaptive_jacobian(f, &theta, 1e-2).unwrap()[(0, 0)];
        assert_eq!(auto, rich);
    }

    #[test]
    fn bad_step_rejected() {
        let theta = StateVector::from_vec(vec![1.0]);
        assert!(finite_diff_jacobian(|x| x.clone(), &theta, 0.0).is_err());
    }

    #[test]
    fn commutator_examples() {
        let c = commutator(&m2(0.0, 1.0, 0.0, 0.0), &m2(0.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!(c, m2(1.0, 0.0, 0.0, -1.0));
        let a = m2(1.0, 2.0, 3.0, 4.0);
        assert_eq!(commutator(&a, &a).unwrap(), DMatrix::zeros(2, 2));
        assert_eq!(commutator(&m2(2.0, 0.0, 0.0, 3.0), &m2(-1.0, 0.0, 0.0, 5.0)).unwrap(), DMatrix::zeros(2, 2));
        assert!(commutator(&a, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn cancelling_first_moments_keep_gramian() {
        // A = diag(1, 0), B1 = [[0,1],[0,0]], B2 = -B1: Sigma_2 = -Sigma_1.
        let a = m2(1.0, 0.0, 0.0, 0.0);
        let b1 = m2(0.0, 1.0, 0.0, 0.0);
        let jac = JacobianPair::new(a, vec![(0, b1.clone()), (1, -b1)], StateVector::zeros(2)).unwrap();
        let rep = commutator_stats(&jac, None, None).unwrap();
        assert_eq!(rep.mu0, 0.0);
        assert_eq!(rep.rank_sigma_bar, 0);
        assert!(rep.gramian[(1, 1)] > 0.0);
        let restricted = commutator_stats(&jac, None, Some(&linalg::coordinate_basis(2, &[1]))).unwrap();
        assert!((restricted.mu1_sq - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_antidiagonal_sigma() {
        // Choose A, B with A B - B A = [[0, 0.03], [-0.04, 0]]:
        // A = diag(0, 1) and B = [[0, -0.03], [-0.04, 0]].
        let a = m2(0.0, 0.0, 0.0, 1.0);
        let b = m2(0.0, -0.03, -0.04, 0.0);
        let jac = JacobianPair::new(a, vec![(0, b)], StateVector::zeros(2)).unwrap();
        let rep = commutator_stats(&jac, Some(&[1.0]), None).unwrap();
        assert!(linalg::max_abs_diff(&rep.sigma_bar, &m2(0.0, 0.03, -0.04, 0.0)) < 1e-17);
        assert!((rep.mu0 - 0.03).abs() < 1e-15);
    }

    #[test]
    fn identical_jacobians_give_zero_report() {
        let a = m2(0.3, 0.1, -0.2, 0.7);
        let jac = JacobianPair::new(a.clone(), vec![(0, a.clone()), (1, a)], StateVector::zeros(2)).unwrap();
        let rep = commutator_stats(&jac, None, None).unwrap();
        assert_eq!(rep.sigma_bar, DMatrix::zeros(2, 2));
        assert_eq!(rep.gramian, DMatrix::zeros(2, 2));
        assert_eq!((rep.rank_sigma_bar, rep.rank_gramian), (0, 0));
    }

    #[test]
    fn empty_and_bad_weights() {
        let jac = JacobianPair::new(DMatrix::identity(2, 2), vec![], StateVector::zeros(2)).unwrap();
        assert_eq!(commutator_stats(&jac, None, None).unwrap_err(), Error::EmptyEvents);
        let jac = JacobianPair::new(DMatrix::identity(2, 2), vec![(0, DMatrix::identity(2, 2))], StateVector::zeros(2))
            .unwrap();
        assert!(commutator_stats(&jac, Some(&[0.5]), None).is_err());
    }

    #[test]
    fn affine_consolidation_fixed_point() {
        let q = |x: &StateVector| StateVector::new(&**x * 0.5 + DVector::from_vec(vec![1.0, 0.0]));
        let fp = consolidation_fixed_point(q, &StateVector::zeros(2), 1e-10, 200, Norm::Euclidean).unwrap();
        assert_abs_diff_eq!(fp.theta[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fp.theta[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_fixed_point_is_immediate() {
        let theta0 = StateVector::from_vec(vec![1.0, -3.0]);
        let fp = consolidation_fixed_point(|x| x.clone(), &theta0, 1e-10, 10, Norm::Euclidean).unwrap();
        assert_eq!(fp.theta, theta0);
        assert_eq!(fp.residuals, vec![0.0]);
    }

    #[test]
    fn expanding_map_does_not_converge() {
        let err = consolidation_fixed_point(
            |x| StateVector::new(&**x * 2.0),
            &StateVector::from_vec(vec![1.0]),
            1e-10,
            20,
            Norm::Euclidean,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 20, .. }));
    }

    #[test]
    fn affine_pair_effective_equilibrium() {
        // Q(x) = rho x, P(x) = x + b  =>  theta_inf = rho b / (1 - rho).
        let rho = 0.6;
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let pair = LinearPair::new(
            DMatrix::identity(2, 2) * rho,
            DVector::zeros(2),
            vec![(DMatrix::identity(2, 2), b.clone())],
        )
        .unwrap();
        let events = FiniteEvents::new(pair.events(), vec![1.0]).unwrap();
        let rep = effective_equilibrium(&pair, &events, &StateVector::zeros(2), EquilibriumOptions::default()).unwrap();
        let want = &b * (rho / (1.0 - rho));
        assert!((&*rep.theta_star_inf - want).norm() < 1e-8);
        for (f, r) in rep.contraction_factors.iter().zip(&rep.residuals) {
            if *r > 1e-6 {
                assert!((f - rho).abs() < 1e-9, "{f}");
            }
        }
        assert!(rep.theta_star.unwrap().norm() < 1e-9);
        assert!((rep.sigma_inf_estimate - b.norm()).abs() < 1e-8);
    }

    #[test]
    fn monte_carlo_rule_uses_common_random_numbers() {
        let pair = LinearPair::diag_rotation();
        let sampler = crate::linear::NoisyLinearSampler::new(2, &[1.0], 0.1).unwrap();
        let mc = MonteCarlo::new(sampler, 64, root_rng(5)).unwrap();
        let theta = StateVector::from_vec(vec![0.2, 0.1]);
        let a = expected_step(&pair, &mc, &theta).unwrap();
        let b = expected_step(&pair, &mc, &theta).unwrap();
        assert_eq!(a, b);
        let rep = effective_equilibrium(&pair, &mc, &theta, EquilibriumOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.mc_standard_error.unwrap() > 0.0);
        assert!(rep.mc_noise_exceeds_tol);
        assert!(rep.m_inf_estimate <= 0.1 + 1e-9);
    }

    #[test]
    fn noiseless_equilibrium_matches_fixed_point() {
        let pair = LinearPair::diag_rotation();
        let events = FiniteEvents::new(pair.events(), vec![1.0]).unwrap();
        let theta0 = StateVector::from_vec(vec![1.0, -2.0]);
        let rep = effective_equilibrium(&pair, &events, &theta0, EquilibriumOptions::default()).unwrap();
        let star = rep.theta_star.clone().unwrap();
        assert!((&*rep.theta_star_inf - &*star).norm() < 1e-9);
        assert!(rep.sigma_inf_estimate < 1e-9);
    }

    #[test]
    fn scaled_consolidation_rho_is_exact() {
        let pair = LinearPair::new(
            DMatrix::identity(3, 3) * 0.5,
            DVector::zeros(3),
            vec![(DMatrix::identity(3, 3), DVector::zeros(3))],
        )
        .unwrap();
        let mut events = FiniteEvents::new(pair.events(), vec![1.0]).unwrap();
        let est =
            estimate_constants(&pair, &mut events, Some(&StateVector::zeros(3)), 20, 0.5, &mut root_rng(1)).unwrap();
        assert!((est.rho - 0.5).abs() < 1e-15);
        assert!((est.lipschitz - 1.0).abs() < 1e-15);
        assert_eq!((est.sigma, est.m), (0.0, 0.0));
        assert!(estimate_constants(&pair, &mut events, None, 5, 0.5, &mut root_rng(1)).is_err());
    }

    #[test]
    fn linear_pair_remainder_vanishes() {
        let pair = LinearPair::diag_rotation();
        let jac = JacobianPair::from_pair(&pair, &pair.events(), &StateVector::zeros(2), DEFAULT_FD_STEP).unwrap();
        let r = estimate_remainder(&pair, &jac, &pair.events(), &[1e-1, 1e-2], 8, &mut root_rng(2)).unwrap();
        assert!(r < 1e-6, "{r}");
        let rep = commutator_stats(&jac, None, None).unwrap();
        assert!((rep.mu0 - 0.25).abs() < 1e-10);
    }

    #[test]
    fn quadratic_pair_remainder_is_detected() {
        // Q(x) = 0.5 x, P(x) = x + x^2 (elementwise): Omega has a quadratic term.
        struct Quad;
        impl OperatorPair for Quad {
            type Payload = ();
            fn dim(&self) -> usize {
                1
            }
            fn consolidate(&self, t: &StateVector) -> StateVector {
                StateVector::new(&**t * 0.5)
            }
            fn expand(&self, _e: &Event<()>, t: &StateVector) -> StateVector {
                StateVector::new(t.map(|v| v + v * v))
            }
        }
        let e = vec![Event::new(0, ())];
        let jac = JacobianPair::from_pair(&Quad, &e, &StateVector::zeros(1), DEFAULT_FD_STEP).unwrap();
        // Q(P(x)) - P(Q(x)) = 0.5 x^2 - 0.25 x^2 = 0.25 x^2
        let r = estimate_remainder(&Quad, &jac, &e, &[1e-2], 4, &mut root_rng(0)).unwrap();
        assert!((r - 0.25).abs() < 1e-6, "{r}");
        assert_eq!(validity_radius(0.0, 0.0), f64::INFINITY);
        assert_eq!(validity_radius(1.0, 0.25), 2.0);
    }
}
