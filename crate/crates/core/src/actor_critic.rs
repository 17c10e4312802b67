//! Linear actor-critic in coordinates centred at the equilibrium.
//!
//! The state is `(w, psi)`: critic weights then actor parameters. A TD event
//! updates only the critic; consolidation moves the actor along the
//! linearized policy field and decays the critic. The augmented variant also
//! pulls the critic toward `J_psi psi`, which couples the two blocks in both
//! directions and makes policy errors visible to the order-gap.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, CommutatorReport, JacobianPair};
use crate::dynamics::{check_probabilities, Event, OperatorPair, StateVector};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::SimRng;

/// Critic and actor parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ACParams {
    pub w: Vec<f64>,
    pub psi: Vec<f64>,
}

impl ACParams {
    pub fn flatten(&self) -> StateVector {
        StateVector::from_vec(self.w.iter().chain(&self.psi).copied().collect())
    }

    pub fn from_flat(theta: &StateVector, d: usize) -> Result<Self> {
        if theta.dim() < d {
            return Err(Error::DimensionMismatch { expected: d, found: theta.dim() });
        }
        Ok(ACParams { w: theta.as_slice()[..d].to_vec(), psi: theta.as_slice()[d..].to_vec() })
    }
}

/// One TD transition: features `phi` of the visited pair and the
/// temporal-difference direction `delta = gamma_rl phi' - phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEvent {
    pub phi: DVector<f64>,
    pub delta: DVector<f64>,
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcVariant {
    /// Critic decay only; the actor follows the linearized policy field.
    Baseline,
    /// Critic additionally tracks `J_psi psi`.
    Augmented,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ACModel {
    pub alpha: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub gamma_rl: f64,
    pub events: Vec<FeatureEvent>,
    pub h_w: DMatrix<f64>,
    pub h_psi: DMatrix<f64>,
    pub j_psi: DMatrix<f64>,
    m_feat: DMatrix<f64>,
}

impl ACModel {
    /// Validates shapes and probabilities, requires `H_psi` negative definite
    /// and `M = -sum p_e phi_e delta_e^T` positive definite (both through
    /// their symmetric parts).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        beta: f64,
        beta_prime: f64,
        gamma_rl: f64,
        events: Vec<FeatureEvent>,
        h_w: DMatrix<f64>,
        h_psi: DMatrix<f64>,
        j_psi: DMatrix<f64>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be finite and > 0"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid("beta", "must be finite and > 0"));
        }
        if !(beta_prime >= 0.0 && beta_prime.is_finite()) {
            return Err(Error::invalid("beta_prime", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&gamma_rl) {
            return Err(Error::invalid("gamma_rl", "must lie in [0, 1)"));
        }
        if events.is_empty() {
            return Err(Error::EmptyEvents);
        }
        let d = events[0].phi.len();
        let d_pi = h_psi.nrows();
        for e in &events {
            if e.phi.len() != d || e.delta.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: e.phi.len().max(e.delta.len()) });
            }
        }
        let probs: Vec<f64> = events.iter().map(|e| e.prob).collect();
        check_probabilities("event probabilities", &probs)?;
        let shapes = [
            ("H_w", h_w.shape(), (d_pi, d)),
            ("H_psi", h_psi.shape(), (d_pi, d_pi)),
            ("J_psi", j_psi.shape(), (d, d_pi)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::invalid(name, format!("expected shape {want:?}, found {got:?}")));
            }
        }
        if linalg::symmetric_eigenvalues(&h_psi).last().is_some_and(|e| *e >= 0.0) {
            return Err(Error::invalid("H_psi", "must be negative definite"));
        }
        let mut m_feat = DMatrix::zeros(d, d);
        for e in &events {
            m_feat -= &e.phi * e.delta.transpose() * e.prob;
        }
        if linalg::symmetric_eigenvalues(&m_feat).first().is_some_and(|e| *e <= 0.0) {
            return Err(Error::invalid("M_feat", "must be positive definite"));
        }
        Ok(ACModel { alpha, beta, beta_prime, gamma_rl, events, h_w, h_psi, j_psi, m_feat })
    }

    pub fn d(&self) -> usize {
        self.m_feat.nrows()
    }

    pub fn d_pi(&self) -> usize {
        self.h_psi.nrows()
    }

    /// `M = -sum_e p_e phi_e delta_e^T`.
    pub fn m_feat(&self) -> &DMatrix<f64> {
        &self.m_feat
    }

    pub fn probs(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.prob).collect()
    }

    pub fn with_beta_prime(&self, beta_prime: f64) -> Result<Self> {
        ACModel::new(
            self.alpha,
            self.beta,
            beta_prime,
            self.gamma_rl,
            self.events.clone(),
            self.h_w.clone(),
            self.h_psi.clone(),
            self.j_psi.clone(),
        )
    }

    /// Random model: features on the unit sphere, `delta = gamma_rl phi' - phi`,
    /// `d + 2` equiprobable events, Gaussian `H_w` and `J_psi`, and
    /// `H_psi = -(B B^T / d_pi + I / 2)`. Resamples until `M` is positive
    /// definite and both rank conditions hold.
    pub fn random(d: usize, d_pi: usize, rates: (f64, f64, f64), rng: &mut SimRng) -> Result<Self> {
        if d == 0 || d_pi == 0 {
            return Err(Error::invalid("dimensions", "must be >= 1"));
        }
        let (alpha, beta, beta_prime) = rates;
        let gamma_rl = 0.9;
        let n = d + 2;
        let gauss = |r: usize, c: usize, rng: &mut SimRng| -> DMatrix<f64> {
            DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
        };
        let unit = |rng: &mut SimRng| loop {
            let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        };
        for _ in 0..1000 {
            let events = (0..n)
                .map(|_| {
                    let phi = unit(rng);
                    let next = unit(rng);
                    FeatureEvent { delta: &next * gamma_rl - &phi, phi, prob: 1.0 / n as f64 }
                })
                .collect();
            let h_w = gauss(d_pi, d, rng);
            let j_psi = gauss(d, d_pi, rng);
            let b = gauss(d_pi, d_pi, rng);
            let h_psi: DMatrix<f64> = -(&b * b.transpose() / d_pi as f64 + DMatrix::identity(d_pi, d_pi) * 0.5);
            let Ok(model) = ACModel::new(alpha, beta, beta_prime, gamma_rl, events, h_w, h_psi, j_psi) else {
                continue;
            };
            let pred = mu0_prediction(&model);
            if pred.c1_ok && pred.c2_ok {
                return Ok(model);
            }
        }
        Err(Error::Sampler("no admissible random actor-critic model after 1000 draws".into()))
    }
}

/// Centred TD update of the critic, `w <- w + alpha phi_e (delta_e^T w)`.
pub fn td_expansion(p: &ACParams, event: usize, model: &ACModel) -> Result<ACParams> {
    let e = model.events.get(event).ok_or_else(|| Error::invalid("event", format!("index {event} out of range")))?;
    if p.w.len() != model.d() {
        return Err(Error::DimensionMismatch { expected: model.d(), found: p.w.len() });
    }
    let w = DVector::from_column_slice(&p.w);
    let out = &w + &e.phi * (model.alpha * e.delta.dot(&w));
    Ok(ACParams { w: out.iter().copied().collect(), psi: p.psi.clone() })
}

/// Baseline: `w <- (1 - beta') w`, `psi <- psi + beta (H_w w + H_psi psi)`.
/// Augmented adds `beta' J_psi psi` to the critic update.
pub fn ac_consolidation(p: &ACParams, model: &ACModel, variant: AcVariant) -> Result<ACParams> {
    if p.w.len() != model.d() {
        return Err(Error::DimensionMismatch { expected: model.d(), found: p.w.len() });
    }
    if p.psi.len() != model.d_pi() {
        return Err(Error::DimensionMismatch { expected: model.d_pi(), found: p.psi.len() });
    }
    let w = DVector::from_column_slice(&p.w);
    let psi = DVector::from_column_slice(&p.psi);
    let mut w_next = &w * (1.0 - model.beta_prime);
    if variant == AcVariant::Augmented {
        w_next += &model.j_psi * &psi * model.beta_prime;
    }
    let psi_next = &psi + (&model.h_w * &w + &model.h_psi * &psi) * model.beta;
    Ok(ACParams { w: w_next.iter().copied().collect(), psi: psi_next.iter().copied().collect() })
}

/// The actor-critic as an operator pair; events are indices into the model's
/// feature events.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticPair {
    model: ACModel,
    variant: AcVariant,
}

impl ActorCriticPair {
    pub fn new(model: ACModel, variant: AcVariant) -> Self {
        ActorCriticPair { model, variant }
    }

    pub fn model(&self) -> &ACModel {
        &self.model
    }

    pub fn variant(&self) -> AcVariant {
        self.variant
    }

    pub fn events(&self) -> Vec<Event<usize>> {
        (0..self.model.events.len()).map(|i| Event::new(i as u64, i)).collect()
    }
}

impl OperatorPair for ActorCriticPair {
    type Payload = usize;

    fn dim(&self) -> usize {
        self.model.d() + self.model.d_pi()
    }

    fn consolidate(&self, theta: &StateVector) -> StateVector {
        let p = ACParams::from_flat(theta, self.model.d()).expect("dimension checked by caller");
        ac_consolidation(&p, &self.model, self.variant).expect("dimension checked by caller").flatten()
    }

    fn expand(&self, event: &Event<usize>, theta: &StateVector) -> StateVector {
        let p = ACParams::from_flat(theta, self.model.d()).expect("dimension checked by caller");
        td_expansion(&p, event.payload, &self.model).expect("event index valid").flatten()
    }
}

/// Block Jacobians `A = DQ` and `B_e = DP_e` at the equilibrium.
pub fn analytic_jacobians(model: &ACModel, variant: AcVariant) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let (d, dp) = (model.d(), model.d_pi());
    let n = d + dp;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (d, d)).copy_from(&(DMatrix::identity(d, d) * (1.0 - model.beta_prime)));
    if variant == AcVariant::Augmented {
        a.view_mut((0, d), (d, dp)).copy_from(&(&model.j_psi * model.beta_prime));
    }
    a.view_mut((d, 0), (dp, d)).copy_from(&(&model.h_w * model.beta));
    a.view_mut((d, d), (dp, dp)).copy_from(&(DMatrix::identity(dp, dp) + &model.h_psi * model.beta));
    let bs = model
        .events
        .iter()
        .map(|e| {
            let mut b = DMatrix::identity(n, n);
            let block = DMatrix::identity(d, d) + &e.phi * e.delta.transpose() * model.alpha;
            b.view_mut((0, 0), (d, d)).copy_from(&block);
            b
        })
        .collect();
    (a, bs)
}

/// `sigma_bar = (0, alpha beta' M J_psi; -alpha beta H_w M, 0)`, with the
/// upper-right block absent for the baseline.
pub fn analytic_sigma_bar(model: &ACModel, variant: AcVariant) -> DMatrix<f64> {
    let (d, dp) = (model.d(), model.d_pi());
    let mut s = DMatrix::zeros(d + dp, d + dp);
    if variant == AcVariant::Augmented {
        s.view_mut((0, d), (d, dp)).copy_from(&(model.m_feat() * &model.j_psi * (model.alpha * model.beta_prime)));
    }
    s.view_mut((d, 0), (dp, d)).copy_from(&(&model.h_w * model.m_feat() * (-model.alpha * model.beta)));
    s
}

/// Closed-form sensitivity on the identifiable subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mu0Prediction {
    /// `min(alpha beta s_min(H_w M | V_w), alpha beta' s_min(M J_psi | V_psi))`,
    /// absent when a rank condition fails.
    pub mu0: Option<f64>,
    pub rank_hw_m: usize,
    pub rank_m_j: usize,
    /// `rank(H_w M) = min(d_pi, d)`.
    pub c1_ok: bool,
    /// `rank(M J_psi) = min(d, d_pi)`.
    pub c2_ok: bool,
    /// Orthonormal basis of `range(L^T)` in critic coordinates.
    #[serde(with = "crate::serde_matrix")]
    pub basis_w: DMatrix<f64>,
    /// Orthonormal basis of `range(U^T)` in actor coordinates.
    #[serde(with = "crate::serde_matrix")]
    pub basis_psi: DMatrix<f64>,
}

impl Mu0Prediction {
    /// Basis of `V_w x V_psi` in the flattened state.
    pub fn subspace(&self) -> DMatrix<f64> {
        let (d, kw) = self.basis_w.shape();
        let (dp, kp) = self.basis_psi.shape();
        let mut v = DMatrix::zeros(d + dp, kw + kp);
        v.view_mut((0, 0), (d, kw)).copy_from(&self.basis_w);
        v.view_mut((d, kw), (dp, kp)).copy_from(&self.basis_psi);
        v
    }
}

/// Smallest nonzero singular value, i.e. `s_min` of `m` restricted to the
/// row space of `m`.
fn restricted_min_gain(m: &DMatrix<f64>) -> f64 {
    let sv = linalg::singular_values(m);
    let max = sv.last().copied().unwrap_or(0.0);
    sv.into_iter().find(|s| *s > linalg::RANK_RTOL * max).unwrap_or(0.0)
}

pub fn mu0_prediction(model: &ACModel) -> Mu0Prediction {
    let (d, dp) = (model.d(), model.d_pi());
    let hw_m = &model.h_w * model.m_feat();
    let m_j = model.m_feat() * &model.j_psi;
    let rank_hw_m = linalg::rank(&hw_m);
    let rank_m_j = linalg::rank(&m_j);
    let c1_ok = rank_hw_m == d.min(dp);
    let c2_ok = rank_m_j == d.min(dp);
    let l = &hw_m * (-model.alpha * model.beta);
    let u = &m_j * (model.alpha * model.beta_prime);
    let mu0 = (c1_ok && c2_ok && model.beta_prime > 0.0).then(|| {
        (model.alpha * model.beta * restricted_min_gain(&hw_m))
            .min(model.alpha * model.beta_prime * restricted_min_gain(&m_j))
    });
    Mu0Prediction {
        mu0,
        rank_hw_m,
        rank_m_j,
        c1_ok,
        c2_ok,
        basis_w: linalg::column_space(&l.transpose()),
        basis_psi: linalg::column_space(&u.transpose()),
    }
}

/// Numerical commutator statistics beside the closed-form predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcCommutatorReport {
    pub variant: AcVariant,
    /// From finite-difference Jacobians of the actual maps, restricted to
    /// the identifiable subspace for the augmented variant when it exists.
    pub numeric: CommutatorReport,
    #[serde(with = "crate::serde_matrix")]
    pub analytic_sigma_bar: DMatrix<f64>,
    /// `max |numeric - analytic|` over `sigma_bar` entries.
    pub sigma_bar_discrepancy: f64,
    /// Largest `|sigma_bar (0, e_psi)|` over actor basis directions.
    pub policy_null_residual: f64,
    pub prediction: Mu0Prediction,
}

pub fn ac_commutator_report(model: &ACModel, variant: AcVariant) -> Result<AcCommutatorReport> {
    let pair = ActorCriticPair::new(model.clone(), variant);
    let origin = StateVector::zeros(pair.dim());
    let jac = JacobianPair::from_pair(&pair, &pair.events(), &origin, analysis::DEFAULT_FD_STEP)?;
    let prediction = mu0_prediction(model);
    let subspace = (variant == AcVariant::Augmented && prediction.mu0.is_some()).then(|| prediction.subspace());
    let numeric = analysis::commutator_stats(&jac, Some(&model.probs()), subspace.as_ref())?;
    let analytic = analytic_sigma_bar(model, variant);
    let d = model.d();
    let policy_null_residual = (0..model.d_pi()).map(|i| numeric.sigma_bar.column(d + i).norm()).fold(0.0, f64::max);
    Ok(AcCommutatorReport {
        variant,
        sigma_bar_discrepancy: linalg::max_abs_diff(&numeric.sigma_bar, &analytic),
        numeric,
        analytic_sigma_bar: analytic,
        policy_null_residual,
        prediction,
    })
}

/// The one-dimensional model with `alpha = 0.1`, `beta = 0.2`,
/// `beta' = 0.3`, `H_w = 2`, `H_psi = -1`, `J_psi = 1` and `M = 1`.
pub fn scalar_example() -> ACModel {
    let m = |v: f64| DMatrix::from_element(1, 1, v);
    ACModel::new(
        0.1,
        0.2,
        0.3,
        0.0,
        vec![FeatureEvent { phi: DVector::from_element(1, 1.0), delta: DVector::from_element(1, -1.0), prob: 1.0 }],
        m(2.0),
        m(-1.0),
        m(1.0),
    )
    .expect("valid scalar model")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::root_rng;

    #[test]
    fn td_examples() {
        let model = scalar_example();
        let p = ACParams { w: vec![2.0], psi: vec![0.0] };
        let out = td_expansion(&p, 0, &model).unwrap();
        assert!((out.w[0] - 1.8).abs() < 1e-15);
        let zero = ACParams { w: vec![0.0], psi: vec![0.7] };
        assert_eq!(td_expansion(&zero, 0, &model).unwrap(), zero);
        assert!(td_expansion(&zero, 1, &model).is_err());
    }

    #[test]
    fn consolidation_examples() {
        let model = scalar_example();
        let p = ACParams { w: vec![1.0], psi: vec![1.0] };
        let b = ac_consolidation(&p, &model, AcVariant::Baseline).unwrap();
        assert!((b.w[0] - 0.7).abs() < 1e-15 && (b.psi[0] - 1.2).abs() < 1e-15);
        let a = ac_consolidation(&p, &model, AcVariant::Augmented).unwrap();
        assert!((a.w[0] - 1.0).abs() < 1e-15 && (a.psi[0] - 1.2).abs() < 1e-15);
        let z = ACParams { w: vec![0.0], psi: vec![0.0] };
        assert_eq!(ac_consolidation(&z, &model, AcVariant::Augmented).unwrap(), z);
    }

    #[test]
    fn scalar_sigma_bar() {
        let rep = ac_commutator_report(&scalar_example(), AcVariant::Augmented).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 0.03, -0.04, 0.0]);
        assert!(linalg::max_abs_diff(&rep.analytic_sigma_bar, &want) < 1e-16);
        assert!(rep.sigma_bar_discrepancy < 1e-10);
        assert!((rep.numeric.mu0 - 0.03).abs() < 1e-10);
        assert!((rep.prediction.mu0.unwrap() - 0.03).abs() < 1e-15);
    }

    #[test]
    fn baseline_is_blind_to_policy() {
        let rep = ac_commutator_report(&scalar_example(), AcVariant::Baseline).unwrap();
        assert!(rep.policy_null_residual < 1e-12);
        assert!(rep.numeric.mu0 < 1e-12);
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let mut rng = root_rng(11);
        for variant in [AcVariant::Baseline, AcVariant::Augmented] {
            let model = ACModel::random(3, 2, (0.1, 0.2, 0.3), &mut rng).unwrap();
            let pair = ActorCriticPair::new(model.clone(), variant);
            let jac = JacobianPair::from_pair(&pair, &pair.events(), &StateVector::zeros(5), analysis::DEFAULT_FD_STEP)
                .unwrap();
            let (a, bs) = analytic_jacobians(&model, variant);
            assert!(linalg::max_abs_diff(&jac.a, &a) < 1e-8);
            for ((_, fd), b) in jac.b_samples.iter().zip(&bs) {
                assert!(linalg::max_abs_diff(fd, b) < 1e-8);
            }
        }
    }

    #[test]
    fn zero_consistency_map_fails_c2() {
        let mut model = scalar_example();
        model.j_psi = DMatrix::zeros(1, 1);
        let p = mu0_prediction(&model);
        assert!(!p.c2_ok);
        assert!(p.mu0.is_none());
    }

    #[test]
    fn square_full_rank_subspace_is_everything() {
        let model = ACModel::random(2, 2, (0.1, 0.2, 0.3), &mut root_rng(3)).unwrap();
        let p = mu0_prediction(&model);
        assert_eq!(p.subspace().shape(), (4, 4));
    }

    #[test]
    fn invalid_models_rejected() {
        let m = scalar_example();
        let bad = ACModel::new(
            0.1,
            0.2,
            0.3,
            0.0,
            m.events.clone(),
            m.h_w.clone(),
            DMatrix::from_element(1, 1, 1.0),
            m.j_psi.clone(),
        );
        assert!(bad.is_err());
        let mut events = m.events.clone();
        events[0].delta = DVector::from_element(1, 1.0);
        assert!(ACModel::new(0.1, 0.2, 0.3, 0.0, events, m.h_w.clone(), m.h_psi.clone(), m.j_psi.clone()).is_err());
    }
}
