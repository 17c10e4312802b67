//! Affine operator pairs `Q(x) = A x + a`, `P_e(x) = B_e x + b_e + xi`,
//! where `xi` is an optional bounded additive perturbation carried by the
//! event.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{check_probabilities, Event, EventSampler, OperatorPair, SamplingMode, StateVector};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Event payload for [`LinearPair`]: which affine map fires, and an
/// additive shift applied after it.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEvent {
    pub map: usize,
    pub shift: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPair {
    q: DMatrix<f64>,
    q_offset: DVector<f64>,
    maps: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl LinearPair {
    pub fn new(q: DMatrix<f64>, q_offset: DVector<f64>, maps: Vec<(DMatrix<f64>, DVector<f64>)>) -> Result<Self> {
        let d = q.nrows();
        if q.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: q.ncols() });
        }
        if q_offset.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: q_offset.len() });
        }
        if maps.is_empty() {
            return Err(Error::EmptyEvents);
        }
        for (b, off) in &maps {
            for n in [b.nrows(), b.ncols(), off.len()] {
                if n != d {
                    return Err(Error::DimensionMismatch { expected: d, found: n });
                }
            }
        }
        let finite = q.iter().chain(q_offset.iter()).all(|v| v.is_finite())
            && maps.iter().all(|(b, o)| b.iter().chain(o.iter()).all(|v| v.is_finite()));
        if !finite {
            return Err(Error::invalid("linear pair", "entries must be finite"));
        }
        Ok(LinearPair { q, q_offset, maps })
    }

    /// `Q = diag(0.5, 0.25)`, single expansion = rotation by 90 degrees.
    /// Fixed point 0, rho = 0.5, L = 1.
    pub fn diag_rotation() -> Self {
        LinearPair::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]),
            DVector::zeros(2),
            vec![(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]), DVector::zeros(2))],
        )
        .expect("valid fixture")
    }

    pub fn consolidation_matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn maps(&self) -> &[(DMatrix<f64>, DVector<f64>)] {
        &self.maps
    }

    /// Event firing map `index` with no additive shift.
    pub fn event(&self, index: usize) -> Event<LinearEvent> {
        Event::new(index as u64, LinearEvent { map: index, shift: None })
    }

    pub fn events(&self) -> Vec<Event<LinearEvent>> {
        (0..self.maps.len()).map(|i| self.event(i)).collect()
    }

    /// Operator 2-norm of `Q`'s linear part.
    pub fn rho(&self) -> f64 {
        crate::linalg::spectral_norm(&self.q)
    }

    /// Largest operator 2-norm over the expansion maps.
    pub fn lipschitz(&self) -> f64 {
        self.maps.iter().map(|(b, _)| crate::linalg::spectral_norm(b)).fold(0.0, f64::max)
    }

    /// Fixed point of `Q`, solving `(I - A) x = a`.
    pub fn consolidation_fixed_point(&self) -> Option<StateVector> {
        let d = self.q.nrows();
        let lhs = DMatrix::identity(d, d) - &self.q;
        lhs.lu().solve(&self.q_offset).map(StateVector::new)
    }
}

impl OperatorPair for LinearPair {
    type Payload = LinearEvent;

    fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn consolidate(&self, theta: &StateVector) -> StateVector {
        StateVector::new(&self.q * &**theta + &self.q_offset)
    }

    fn expand(&self, event: &Event<LinearEvent>, theta: &StateVector) -> StateVector {
        let (b, off) = &self.maps[event.payload.map];
        let mut out = b * &**theta + off;
        if let Some(shift) = &event.payload.shift {
            out += shift;
        }
        StateVector::new(out)
    }
}

/// Uniform draw from the closed Euclidean ball of `radius` in `dim`
/// dimensions.
pub fn uniform_in_ball(dim: usize, radius: f64, rng: &mut SimRng) -> DVector<f64> {
    if dim == 0 || radius == 0.0 {
        return DVector::zeros(dim);
    }
    let mut dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = dir.norm();
    if n == 0.0 {
        return DVector::zeros(dim);
    }
    dir /= n;
    let u: f64 = rng.random();
    dir * (radius * u.powf(1.0 / dim as f64))
}

/// Fixed-law sampler: picks a map by probability and adds a zero-mean shift
/// drawn uniformly from the ball of radius `noise_radius`.
#[derive(Debug, Clone)]
pub struct NoisyLinearSampler {
    dim: usize,
    index: rand::distr::weighted::WeightedIndex<f64>,
    noise_radius: f64,
}

impl NoisyLinearSampler {
    pub fn new(dim: usize, probs: &[f64], noise_radius: f64) -> Result<Self> {
        check_probabilities("probabilities", probs)?;
        if !(noise_radius >= 0.0 && noise_radius.is_finite()) {
            return Err(Error::invalid("noise_radius", "must be finite and >= 0"));
        }
        let index = rand::distr::weighted::WeightedIndex::new(probs)
            .map_err(|e| Error::invalid("probabilities", e.to_string()))?;
        Ok(NoisyLinearSampler { dim, index, noise_radius })
    }
}

impl EventSampler<LinearEvent> for NoisyLinearSampler {
    fn mode(&self) -> SamplingMode {
        SamplingMode::Fixed
    }

    fn draw(&mut self, _theta: &StateVector, rng: &mut SimRng) -> Result<Event<LinearEvent>> {
        use rand::distr::Distribution;
        let map = self.index.sample(rng);
        let shift = (self.noise_radius > 0.0).then(|| uniform_in_ball(self.dim, self.noise_radius, rng));
        Ok(Event::new(map as u64, LinearEvent { map, shift }))
    }
}

/// State-dependent epsilon-greedy choice between two zero-mean noise
/// sources, each bounded by `noise_radius`:
///
/// * source 0: uniform in the ball,
/// * source 1: `+-noise_radius` along the first coordinate axis.
///
/// The greedy source is 0 when `theta[0] >= 0` and 1 otherwise; with
/// probability `epsilon` the source is uniform. Every conditional law has
/// mean zero and norm at most `noise_radius`, whatever the state. Always
/// fires expansion map 0.
#[derive(Debug, Clone)]
pub struct GreedyNoiseSampler {
    pub dim: usize,
    pub epsilon: f64,
    pub noise_radius: f64,
}

impl GreedyNoiseSampler {
    pub fn source_probabilities(&self, theta: &StateVector) -> [f64; 2] {
        let greedy = if theta[0] >= 0.0 { 0 } else { 1 };
        let mut p = [self.epsilon / 2.0; 2];
        p[greedy] += 1.0 - self.epsilon;
        p
    }
}

impl EventSampler<LinearEvent> for GreedyNoiseSampler {
    fn mode(&self) -> SamplingMode {
        SamplingMode::StateDependent
    }

    fn draw(&mut self, theta: &StateVector, rng: &mut SimRng) -> Result<Event<LinearEvent>> {
        let p = self.source_probabilities(theta);
        let u: f64 = rng.random();
        let source = if u < p[0] { 0 } else { 1 };
        let shift = match source {
            0 => uniform_in_ball(self.dim, self.noise_radius, rng),
            _ => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut v = DVector::zeros(self.dim);
                v[0] = sign * self.noise_radius;
                v
            }
        };
        Ok(Event::new(source as u64, LinearEvent { map: 0, shift: Some(shift) }))
    }
}
