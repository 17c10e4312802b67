//! Momentum SGD on a quadratic, split into a gradient expansion and a
//! momentum consolidation.
//!
//! The state is `(w, m)`. A minibatch event takes a noisy gradient step and
//! refreshes the momentum buffer; consolidation advances `w` along the
//! buffer without a new gradient. With zero momentum coefficient the
//! consolidation is the identity and the order-gap vanishes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_trajectory, Event, EventSampler, OperatorPair, OrderGapTrace, SamplingMode, StateVector};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub w: Vec<f64>,
    pub m: Vec<f64>,
}

impl SgdState {
    pub fn flatten(&self) -> StateVector {
        StateVector::from_vec(self.w.iter().chain(&self.m).copied().collect())
    }

    pub fn from_flat(theta: &StateVector) -> Result<Self> {
        if theta.dim() % 2 != 0 {
            return Err(Error::invalid("theta", "SGD states have even dimension"));
        }
        let d = theta.dim() / 2;
        Ok(SgdState { w: theta.as_slice()[..d].to_vec(), m: theta.as_slice()[d..].to_vec() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    h: DMatrix<f64>,
    /// Variance of each gradient-noise coordinate.
    pub minibatch_noise: f64,
    pub eta: f64,
    pub momentum_coef: f64,
}

impl QuadraticProblem {
    pub fn new(h: DMatrix<f64>, minibatch_noise: f64, eta: f64, momentum_coef: f64) -> Result<Self> {
        if !h.is_square() || h.nrows() == 0 {
            return Err(Error::invalid("H", "must be a nonempty square matrix"));
        }
        if linalg::max_abs_diff(&h, &h.transpose()) > 1e-10 {
            return Err(Error::invalid("H", "must be symmetric"));
        }
        if linalg::symmetric_eigenvalues(&h).first().is_some_and(|e| *e < -1e-12) {
            return Err(Error::invalid("H", "must be positive semidefinite"));
        }
        if !(minibatch_noise >= 0.0 && minibatch_noise.is_finite()) {
            return Err(Error::invalid("minibatch_noise", "must be finite and >= 0"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid("eta", "must be finite and > 0"));
        }
        if !(0.0..1.0).contains(&momentum_coef) {
            return Err(Error::invalid("momentum_coef", "must lie in [0, 1)"));
        }
        Ok(QuadraticProblem { h, minibatch_noise, eta, momentum_coef })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// Jacobians of consolidation and of the (noise-free) expansion.
    pub fn jacobians(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.dim();
        let i = DMatrix::<f64>::identity(d, d);
        let mut a = DMatrix::identity(2 * d, 2 * d);
        a.view_mut((0, d), (d, d)).copy_from(&(&i * (-self.eta * self.momentum_coef)));
        let mut b = DMatrix::zeros(2 * d, 2 * d);
        b.view_mut((0, 0), (d, d)).copy_from(&(&i - &self.h * self.eta));
        b.view_mut((d, 0), (d, d)).copy_from(&self.h);
        b.view_mut((d, d), (d, d)).copy_from(&(&i * self.momentum_coef));
        (a, b)
    }

    /// `max(|A B|, |B A|)`, a one-step contraction factor of the joint maps.
    pub fn joint_contraction(&self) -> f64 {
        let (a, b) = self.jacobians();
        linalg::spectral_norm(&(&a * &b)).max(linalg::spectral_norm(&(&b * &a)))
    }
}

/// Additive gradient noise of one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub noise: DVector<f64>,
}

/// `g = H w + xi`, `w <- w - eta g`, `m <- coef m + g`.
pub fn sgd_expansion(s: &SgdState, batch: &Minibatch, prob: &QuadraticProblem) -> SgdState {
    let w = DVector::from_column_slice(&s.w);
    let m = DVector::from_column_slice(&s.m);
    let g = prob.h() * &w + &batch.noise;
    SgdState {
        w: (&w - &g * prob.eta).iter().copied().collect(),
        m: (&m * prob.momentum_coef + &g).iter().copied().collect(),
    }
}

/// `w <- w - eta coef m`; `m` unchanged.
pub fn sgd_consolidation(s: &SgdState, prob: &QuadraticProblem) -> SgdState {
    let step = prob.eta * prob.momentum_coef;
    SgdState { w: s.w.iter().zip(&s.m).map(|(w, m)| w - step * m).collect(), m: s.m.clone() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdPair {
    prob: QuadraticProblem,
}

impl SgdPair {
    pub fn new(prob: QuadraticProblem) -> Self {
        SgdPair { prob }
    }

    pub fn problem(&self) -> &QuadraticProblem {
        &self.prob
    }
}

impl OperatorPair for SgdPair {
    type Payload = Minibatch;

    fn dim(&self) -> usize {
        2 * self.prob.dim()
    }

    fn consolidate(&self, theta: &StateVector) -> StateVector {
        let s = SgdState::from_flat(theta).expect("dimension checked by caller");
        sgd_consolidation(&s, &self.prob).flatten()
    }

    fn expand(&self, event: &Event<Minibatch>, theta: &StateVector) -> StateVector {
        let s = SgdState::from_flat(theta).expect("dimension checked by caller");
        sgd_expansion(&s, &event.payload, &self.prob).flatten()
    }
}

/// Isotropic Gaussian gradient noise with variance `minibatch_noise`.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    dim: usize,
    std: f64,
    next_id: u64,
}

impl MinibatchSampler {
    pub fn new(prob: &QuadraticProblem) -> Self {
        MinibatchSampler { dim: prob.dim(), std: prob.minibatch_noise.sqrt(), next_id: 0 }
    }
}

impl EventSampler<Minibatch> for MinibatchSampler {
    fn mode(&self) -> SamplingMode {
        SamplingMode::Fixed
    }

    fn draw(&mut self, _theta: &StateVector, rng: &mut SimRng) -> Result<Event<Minibatch>> {
        let noise = if self.std > 0.0 {
            DVector::from_fn(self.dim, |_, _| self.std * rng.sample::<f64, _>(StandardNormal))
        } else {
            DVector::zeros(self.dim)
        };
        let id = self.next_id;
        self.next_id += 1;
        Ok(Event::new(id, Minibatch { noise }))
    }
}

/// Order-gap trace together with the gradient/momentum alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdDiagnostic {
    pub trace: OrderGapTrace,
    pub final_state: StateVector,
    /// Angle in radians between `g_t` and `m_t` at each step, when both are
    /// nonzero.
    pub angles: Vec<Option<f64>>,
    /// Pearson correlation between `omega_t` and the angle, over steps where
    /// the angle is defined.
    pub correlation: Option<f64>,
}

/// Canonical momentum-SGD trajectory with the alignment diagnostic.
pub fn sgd_diagnostic_trace(
    prob: &QuadraticProblem,
    theta0: &SgdState,
    steps: usize,
    rng: &mut SimRng,
) -> Result<SgdDiagnostic> {
    let pair = SgdPair::new(prob.clone());
    let theta0 = theta0.flatten();
    theta0.check_dim(pair.dim())?;
    let d = prob.dim();
    let mut angles = Vec::with_capacity(steps);
    let mut sampler = MinibatchSampler::new(prob);
    let mut inner = crate::dynamics::FnSampler::fixed(|t: &StateVector, r: &mut SimRng| {
        let e = sampler.draw(t, r)?;
        let w = t.rows(0, d);
        let m = t.rows(d, d);
        let g = prob.h() * w + &e.payload.noise;
        angles.push(angle(&g, &m.into_owned()));
        Ok(e)
    });
    let traj = run_trajectory(&pair, &mut inner, &theta0, steps, rng, Some(&StateVector::zeros(2 * d)))?;
    let omegas = traj.trace.omegas();
    let pairs: Vec<(f64, f64)> = omegas.iter().zip(&angles).filter_map(|(o, a)| a.map(|a| (*o, a))).collect();
    Ok(SgdDiagnostic { correlation: pearson(&pairs), trace: traj.trace, final_state: traj.final_state, angles })
}

fn angle(a: &DVector<f64>, b: &DVector<f64>) -> Option<f64> {
    let (na, nb) = (a.norm(), b.norm());
    (na > 0.0 && nb > 0.0).then(|| (a.dot(b) / (na * nb)).clamp(-1.0, 1.0).acos())
}

/// Pearson correlation; `None` with fewer than three points or a constant
/// coordinate.
pub fn pearson(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::root_rng;

    fn scalar(h: f64, noise: f64, eta: f64, coef: f64) -> QuadraticProblem {
        QuadraticProblem::new(DMatrix::from_element(1, 1, h), noise, eta, coef).unwrap()
    }

    fn zero_batch(d: usize) -> Minibatch {
        Minibatch { noise: DVector::zeros(d) }
    }

    #[test]
    fn expansion_examples() {
        let p = scalar(2.0, 0.0, 0.1, 0.9);
        let out = sgd_expansion(&SgdState { w: vec![1.0], m: vec![0.0] }, &zero_batch(1), &p);
        assert!((out.w[0] - 0.8).abs() < 1e-15);
        assert_eq!(out.m[0], 2.0);
        let z = SgdState { w: vec![0.0], m: vec![0.0] };
        assert_eq!(sgd_expansion(&z, &zero_batch(1), &p), z);
    }

    #[test]
    fn consolidation_examples() {
        let p = scalar(2.0, 0.0, 0.1, 0.9);
        let out = sgd_consolidation(&SgdState { w: vec![1.0], m: vec![2.0] }, &p);
        assert!((out.w[0] - 0.82).abs() < 1e-15);
        let still = SgdState { w: vec![1.0], m: vec![0.0] };
        assert_eq!(sgd_consolidation(&still, &p), still);
    }

    #[test]
    fn vanilla_sgd_has_zero_gap_bitwise() {
        let p = QuadraticProblem::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), 0.3, 0.1, 0.0).unwrap();
        let s0 = SgdState { w: vec![1.0, -2.0], m: vec![0.5, 0.1] };
        let diag = sgd_diagnostic_trace(&p, &s0, 200, &mut root_rng(8)).unwrap();
        assert!(diag.trace.omegas().iter().all(|o| *o == 0.0));
    }

    #[test]
    fn noiseless_gap_vanishes() {
        let p = scalar(0.2, 0.0, 0.5, 0.5);
        let diag = sgd_diagnostic_trace(&p, &SgdState { w: vec![1.0], m: vec![0.0] }, 600, &mut root_rng(0)).unwrap();
        assert!(diag.trace.omegas().iter().rev().take(50).all(|o| *o < 1e-8));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let p = QuadraticProblem::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), 0.0, 0.1, 0.7).unwrap();
        let pair = SgdPair::new(p.clone());
        let e = Event::new(0, zero_batch(2));
        let jac = crate::analysis::JacobianPair::from_pair(&pair, &[e], &StateVector::zeros(4), 1e-5).unwrap();
        let (a, b) = p.jacobians();
        assert!(linalg::max_abs_diff(&jac.a, &a) < 1e-9);
        assert!(linalg::max_abs_diff(&jac.b_samples[0].1, &b) < 1e-9);
    }

    #[test]
    fn invalid_problems_rejected() {
        assert!(QuadraticProblem::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]), 0.0, 0.1, 0.5).is_err());
        assert!(QuadraticProblem::new(DMatrix::from_element(1, 1, -1.0), 0.0, 0.1, 0.5).is_err());
        assert!(QuadraticProblem::new(DMatrix::from_element(1, 1, 1.0), 0.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]), None);
    }
}
