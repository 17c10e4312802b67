//! Two-operator dynamics over dense real state vectors.
//!
//! A learner alternates an event-driven expansion `P_e` with an event-free
//! consolidation `Q`; one canonical step is `theta <- Q(P_e(theta))`. The
//! order-gap `||Q(P_e(theta)) - P_e(Q(theta))||` measures how much the two
//! orderings disagree at the current state.

use std::ops::{Deref, DerefMut};

use nalgebra::DVector;
use rand::distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// The knowledge state: a finite real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateVector(DVector<f64>);

impl StateVector {
    pub fn new(values: DVector<f64>) -> Self {
        StateVector(values)
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        StateVector(DVector::from_vec(values))
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }

    /// Fails unless the vector has length `dim`.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: dim, found: self.dim() })
        }
    }
}

impl Deref for StateVector {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }
}

impl From<DVector<f64>> for StateVector {
    fn from(v: DVector<f64>) -> Self {
        StateVector(v)
    }
}

impl TryFrom<Vec<f64>> for StateVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        let s = StateVector::from_vec(v);
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::NonFinite { step: None })
        }
    }
}

impl From<StateVector> for Vec<f64> {
    fn from(s: StateVector) -> Vec<f64> {
        s.to_vec()
    }
}

/// Norm used to measure order-gaps and distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Norm {
    /// Flat Euclidean norm.
    #[default]
    Euclidean,
    /// Maximum over consecutive blocks of length `block_len` of each block's
    /// Euclidean norm (the product norm on a block-structured state).
    BlockMax { block_len: usize },
}

impl Norm {
    pub fn eval(&self, v: &DVector<f64>) -> f64 {
        match *self {
            Norm::Euclidean => v.norm(),
            Norm::BlockMax { block_len } => {
                if block_len == 0 {
                    return v.norm();
                }
                v.as_slice().chunks(block_len).map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
            }
        }
    }

    pub fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.eval(&(a - b))
    }
}

/// An incoming piece of evidence: an integer tag plus a domain payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub id: u64,
    pub payload: P,
}

impl<P> Event<P> {
    pub fn new(id: u64, payload: P) -> Self {
        Event { id, payload }
    }
}

/// A consolidation map `Q` together with an event-indexed expansion family
/// `P_e`, both acting on states of a fixed dimension.
///
/// Implementations must preserve dimension, and `consolidate` must depend
/// on the state alone.
pub trait OperatorPair {
    type Payload: Clone;

    fn dim(&self) -> usize;

    fn consolidate(&self, theta: &StateVector) -> StateVector;

    fn expand(&self, event: &Event<Self::Payload>, theta: &StateVector) -> StateVector;

    fn norm(&self) -> Norm {
        Norm::Euclidean
    }

    /// Whether `theta` lies in the state space the operators are defined on.
    fn admissible(&self, _theta: &StateVector) -> bool {
        true
    }
}

impl<T: OperatorPair + ?Sized> OperatorPair for &T {
    type Payload = T::Payload;
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn consolidate(&self, theta: &StateVector) -> StateVector {
        (**self).consolidate(theta)
    }
    fn expand(&self, event: &Event<Self::Payload>, theta: &StateVector) -> StateVector {
        (**self).expand(event, theta)
    }
    fn norm(&self) -> Norm {
        (**self).norm()
    }
    fn admissible(&self, theta: &StateVector) -> bool {
        (**self).admissible(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Event law independent of the state.
    Fixed,
    /// Event law conditioned on the current state.
    StateDependent,
}

/// Source of events for a trajectory.
pub trait EventSampler<P> {
    fn mode(&self) -> SamplingMode;

    fn draw(&mut self, theta: &StateVector, rng: &mut SimRng) -> Result<Event<P>>;
}

/// A finite event set with exact probabilities.
#[derive(Debug, Clone)]
pub struct FiniteEvents<P> {
    events: Vec<Event<P>>,
    probs: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl<P: Clone> FiniteEvents<P> {
    pub fn new(events: Vec<Event<P>>, probs: Vec<f64>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptyEvents);
        }
        if events.len() != probs.len() {
            return Err(Error::DimensionMismatch { expected: events.len(), found: probs.len() });
        }
        check_probabilities("probabilities", &probs)?;
        let index = WeightedIndex::new(&probs).map_err(|e| Error::invalid("probabilities", e.to_string()))?;
        Ok(FiniteEvents { events, probs, index })
    }

    /// Equal probability on every event.
    pub fn uniform(events: Vec<Event<P>>) -> Result<Self> {
        let n = events.len();
        Self::new(events, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Event<P>, f64)> {
        self.events.iter().zip(self.probs.iter().copied())
    }

    pub fn events(&self) -> &[Event<P>] {
        &self.events
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl<P: Clone> EventSampler<P> for FiniteEvents<P> {
    fn mode(&self) -> SamplingMode {
        SamplingMode::Fixed
    }

    fn draw(&mut self, _theta: &StateVector, rng: &mut SimRng) -> Result<Event<P>> {
        Ok(self.events[self.index.sample(rng)].clone())
    }
}

/// Cycles through a finite event list in order, ignoring the generator.
#[derive(Debug, Clone)]
pub struct RoundRobin<P> {
    events: Vec<Event<P>>,
    next: usize,
}

impl<P> RoundRobin<P> {
    pub fn new(events: Vec<Event<P>>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptyEvents);
        }
        Ok(RoundRobin { events, next: 0 })
    }
}

impl<P: Clone> EventSampler<P> for RoundRobin<P> {
    fn mode(&self) -> SamplingMode {
        SamplingMode::Fixed
    }

    fn draw(&mut self, _theta: &StateVector, _rng: &mut SimRng) -> Result<Event<P>> {
        let e = self.events[self.next].clone();
        self.next = (self.next + 1) % self.events.len();
        Ok(e)
    }
}

/// Adapts a closure `(theta, rng) -> Event` into a sampler.
pub struct FnSampler<F> {
    mode: SamplingMode,
    f: F,
}

impl<F> FnSampler<F> {
    pub fn fixed(f: F) -> Self {
        FnSampler { mode: SamplingMode::Fixed, f }
    }

    pub fn state_dependent(f: F) -> Self {
        FnSampler { mode: SamplingMode::StateDependent, f }
    }
}

impl<P, F> EventSampler<P> for FnSampler<F>
where
    F: FnMut(&StateVector, &mut SimRng) -> Result<Event<P>>,
{
    fn mode(&self) -> SamplingMode {
        self.mode
    }

    fn draw(&mut self, theta: &StateVector, rng: &mut SimRng) -> Result<Event<P>> {
        (self.f)(theta, rng)
    }
}

impl<F: Clone> Clone for FnSampler<F> {
    fn clone(&self) -> Self {
        FnSampler { mode: self.mode, f: self.f.clone() }
    }
}

pub(crate) fn check_probabilities(name: &str, probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid(name, "entries must be finite and >= 0"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(name, format!("must sum to 1 (sum = {total})")));
    }
    Ok(())
}

/// The order-gap at one state, along with the expand-then-consolidate branch
/// `Q(P_e(theta))`, which is also the next canonical state.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderGap {
    pub omega: f64,
    pub expand_then_consolidate: StateVector,
    pub consolidate_then_expand: StateVector,
}

/// Evaluates both operator orderings at `theta` and their distance.
pub fn order_gap<O: OperatorPair>(pair: &O, theta: &StateVector, event: &Event<O::Payload>) -> Result<OrderGap> {
    theta.check_dim(pair.dim())?;
    let forward = pair.consolidate(&pair.expand(event, theta));
    let backward = pair.expand(event, &pair.consolidate(theta));
    forward.check_dim(pair.dim())?;
    backward.check_dim(pair.dim())?;
    if !forward.is_finite() || !backward.is_finite() {
        return Err(Error::NonFinite { step: None });
    }
    let omega = pair.norm().distance(&forward, &backward);
    Ok(OrderGap { omega, expand_then_consolidate: forward, consolidate_then_expand: backward })
}

/// Order-gap measured after a decision map, in the Euclidean norm on
/// decision vectors.
pub fn decision_order_gap<O, D>(
    pair: &O,
    decision_map: D,
    theta: &StateVector,
    event: &Event<O::Payload>,
) -> Result<f64>
where
    O: OperatorPair,
    D: Fn(&StateVector) -> Result<DVector<f64>>,
{
    let gap = order_gap(pair, theta, event)?;
    let a = decision_map(&gap.expand_then_consolidate)?;
    let b = decision_map(&gap.consolidate_then_expand)?;
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok((a - b).norm())
}

/// One canonical step `Q(P_e(theta))`.
pub fn step<O: OperatorPair>(pair: &O, theta: &StateVector, event: &Event<O::Payload>) -> Result<StateVector> {
    theta.check_dim(pair.dim())?;
    let next = pair.consolidate(&pair.expand(event, theta));
    next.check_dim(pair.dim())?;
    if !next.is_finite() {
        return Err(Error::NonFinite { step: None });
    }
    Ok(next)
}

/// One recorded step of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub t: usize,
    pub event_id: u64,
    pub omega: f64,
    pub dist_to_ref: Option<f64>,
}

/// Per-step order-gap record along a trajectory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OrderGapTrace {
    pub samples: Vec<GapSample>,
    pub reference_point: Option<StateVector>,
}

impl OrderGapTrace {
    pub fn new(reference_point: Option<StateVector>) -> Self {
        OrderGapTrace { samples: Vec::new(), reference_point }
    }

    /// Appends a sample; step indices must increase and omega be nonnegative.
    pub fn push(&mut self, sample: GapSample) {
        debug_assert!(sample.omega >= 0.0);
        debug_assert!(self.samples.last().is_none_or(|s| s.t < sample.t));
        self.samples.push(sample);
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.omega).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A finished trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub trace: OrderGapTrace,
    pub final_state: StateVector,
}

/// Runs `steps` canonical steps from `theta0`, recording the order-gap at
/// every visited state.
pub fn run_trajectory<O, S>(
    pair: &O,
    sampler: &mut S,
    theta0: &StateVector,
    steps: usize,
    rng: &mut SimRng,
    reference: Option<&StateVector>,
) -> Result<Trajectory>
where
    O: OperatorPair,
    S: EventSampler<O::Payload>,
{
    if steps == 0 {
        return Err(Error::invalid("steps", "must be >= 1"));
    }
    theta0.check_dim(pair.dim())?;
    if let Some(r) = reference {
        r.check_dim(pair.dim())?;
    }
    let norm = pair.norm();
    let mut trace = OrderGapTrace::new(reference.cloned());
    let mut theta = theta0.clone();
    for t in 0..steps {
        let event = sampler.draw(&theta, rng)?;
        let gap = order_gap(pair, &theta, &event).map_err(|e| at_step(e, t))?;
        trace.push(GapSample {
            t,
            event_id: event.id,
            omega: gap.omega,
            dist_to_ref: reference.map(|r| norm.distance(&theta, r)),
        });
        theta = gap.expand_then_consolidate;
    }
    Ok(Trajectory { trace, final_state: theta })
}

pub(crate) fn at_step(e: Error, t: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::NonFinite { step: Some(t) },
        other => other,
    }
}
