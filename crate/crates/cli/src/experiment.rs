//! Runs a validated config: domain analysis once, then one stopping run per
//! seed stream, then a pure aggregation into report and trace artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use ordergap::actor_critic::{ac_commutator_report, AcVariant, ActorCriticPair};
use ordergap::bandit::{bandit_equilibrium, gramian_diagnostics, BanditPair, BanditSampler};
use ordergap::linear::{GreedyNoiseSampler, NoisyLinearSampler};
use ordergap::rlm::{default_transient, fit_log_linear, rlm_coverage_report, run_recursive, RecursionOptions, RlmPair};
use ordergap::sgd::{Minibatch, MinibatchSampler, SgdPair};
use ordergap::stopping::StepView;
use ordergap::{
    analysis, child_rng, commutator_stats, effective_equilibrium, estimate_constants, expected_gap_stop,
    stopping_bounds, windowed_stop_observed, EquilibriumOptions, EquilibriumReport, Event, EventSampler,
    ExpectationRule, FiniteEvents, JacobianPair, OperatorPair, SimRng, StateVector, StopRule, StoppingConfig,
    StoppingReport, TheoryConstants,
};
use rayon::prelude::*;

use crate::config::{ConfigError, Domain, LinearSampler, LoadedConfig, SCHEMA_VERSION};
use crate::report::{
    to_json, AnalysisReport, CommutatorSummary, EquilibriumSummary, ExperimentReport, ResolvedConstants, SeedRecord,
    SeedSummary, Source, Sourced, Summary, Verdict,
};
use crate::trace::{self, TraceHeader};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed stream {stream}: {source}")]
    Seed { stream: u64, source: ordergap::Error },
    #[error("analysis: {0}")]
    Analysis(ordergap::Error),
    #[error("serialization: {0}")]
    Serialize(String),
}

/// Output files keyed by path relative to the experiment directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Artifacts {
    pub files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub artifacts: Artifacts,
}

/// `<out>/<experiment_id>`, with `out` from the config unless overridden.
pub fn experiment_dir(loaded: &LoadedConfig, out: Option<&Path>) -> PathBuf {
    out.unwrap_or(&loaded.config.output.dir).join(&loaded.config.experiment_id)
}

/// Stream reserved for seed-independent analysis draws.
const ANALYSIS_STREAM: u64 = u64::MAX;

/// Analysis plus the theory constants the bounds are computed from.
struct Analysis {
    report: AnalysisReport,
    constants: Option<TheoryConstants>,
}

/// Domain-specific inputs to the analysis.
#[derive(Default)]
struct DomainFacts {
    rho: Option<Sourced>,
    lipschitz: Option<Sourced>,
    sigma: Option<Sourced>,
    m: Option<Sourced>,
    commutator: Option<CommutatorSummary>,
    mu: Option<f64>,
    validity_radius: Option<f64>,
    coverage: Option<Verdict>,
    equilibrium: Option<EquilibriumSummary>,
    warnings: Vec<String>,
}

struct SeedRun {
    stream: u64,
    report: StoppingReport,
    extras: Vec<Vec<Option<f64>>>,
    consolidations: Option<usize>,
}

struct Outcome {
    analysis: Analysis,
    runs: Vec<SeedRun>,
    extra_columns: &'static [&'static str],
}

pub fn run_experiment(loaded: &LoadedConfig) -> Result<ExperimentOutput, RunError> {
    let outcome = dispatch(loaded, true)?;
    assemble(loaded, outcome)
}

/// Analysis only: constants, commutator statistics, equilibrium, bounds.
pub fn analyze(loaded: &LoadedConfig) -> Result<AnalysisReport, RunError> {
    Ok(dispatch(loaded, false)?.analysis.report)
}

fn dispatch(loaded: &LoadedConfig, run: bool) -> Result<Outcome, RunError> {
    let cfg = &loaded.config;
    let stopping = cfg.stopping.to_config();
    let mut rng = child_rng(cfg.seed, ANALYSIS_STREAM);
    let a = &cfg.analysis;
    match cfg.domain() {
        Domain::Linear(block) => {
            let pair = block.build()?;
            let d = pair.dim();
            let reference = pair
                .consolidation_fixed_point()
                .ok_or_else(|| ConfigError::Invalid { field: "linear.q".into(), reason: "I - Q is singular".into() })?;
            let probs = block.probs();
            let events = FiniteEvents::new(pair.events(), probs.clone()).map_err(RunError::Analysis)?;
            let theta0 = StateVector::from_vec(block.theta0.clone());
            let w: Vec<f64> =
                pair.events().iter().map(|e| pair.norm().distance(&pair.expand(e, &reference), &reference)).collect();
            let w_mean: f64 = w.iter().zip(&probs).map(|(w, p)| w * p).sum();
            let w_max = w.iter().copied().fold(0.0, f64::max);
            let mut facts = DomainFacts {
                rho: Some(Sourced::analytic(pair.rho())),
                lipschitz: Some(Sourced::analytic(pair.lipschitz())),
                sigma: Some(Sourced::analytic(w_mean + block.noise_radius)),
                m: Some(Sourced::analytic(w_max + block.noise_radius)),
                ..Default::default()
            };
            if a.commutator {
                linear_commutator(&pair, &events, &reference, &probs, &mut rng, &mut facts)?;
            }
            if a.equilibrium {
                facts.equilibrium = equilibrium(&pair, &events, &theta0, &reference, &mut facts.warnings);
            }
            let analysis = finish_analysis(loaded, "linear", &reference, &theta0, pair.norm(), facts);
            let runs = if !run {
                Vec::new()
            } else {
                let extra = |v: &StepView<'_, ordergap::linear::LinearEvent>| {
                    vec![Some(v.event.payload.shift.as_ref().map_or(0.0, |s| s.norm()))]
                };
                match block.sampler {
                    LinearSampler::Fixed => run_seeds(
                        loaded,
                        &stopping,
                        &pair,
                        &theta0,
                        &reference,
                        Some(&events),
                        || NoisyLinearSampler::new(d, &probs, block.noise_radius),
                        extra,
                    )?,
                    LinearSampler::Greedy => run_seeds(
                        loaded,
                        &stopping,
                        &pair,
                        &theta0,
                        &reference,
                        Some(&events),
                        || {
                            Ok(GreedyNoiseSampler {
                                dim: d,
                                epsilon: block.greedy_epsilon,
                                noise_radius: block.noise_radius,
                            })
                        },
                        extra,
                    )?,
                }
            };
            Ok(Outcome { analysis, runs, extra_columns: &["noise_norm"] })
        }
        Domain::Bandit(block) => {
            let model = block.model();
            let pair = BanditPair::new(model.clone()).map_err(RunError::Analysis)?;
            let reference = pair.consolidation_fixed_point();
            let state0 = block.initial_state()?;
            let theta0 = state0.flatten();
            let est = estimate_constants(
                &pair,
                &mut BanditSampler::new(model.clone()).map_err(RunError::Analysis)?,
                Some(&reference),
                a.probes,
                a.probe_radius,
                &mut rng,
            )
            .map_err(RunError::Analysis)?;
            let mut facts = DomainFacts {
                rho: Some(Sourced::analytic(model.consolidation_lipschitz())),
                lipschitz: Some(Sourced::estimated(est.lipschitz)),
                sigma: Some(Sourced::estimated(est.sigma)),
                m: Some(Sourced::estimated(est.m)),
                ..Default::default()
            };
            if a.commutator {
                let g = gramian_diagnostics(&model, &reference).map_err(RunError::Analysis)?;
                facts.commutator = Some(CommutatorSummary::from(&g.report));
                facts.warnings.push(
                    "commutator statistics cover the variance subspace only; endpoint bounds not attached".into(),
                );
            }
            if a.equilibrium {
                facts.equilibrium = match bandit_equilibrium(&model, &state0, EquilibriumOptions::default()) {
                    Ok(r) => Some(summarize_equilibrium(&r, &reference, pair.norm())),
                    Err(e) => {
                        facts.warnings.push(format!("equilibrium: {e}"));
                        None
                    }
                };
            }
            let analysis = finish_analysis(loaded, "bandit", &reference, &theta0, pair.norm(), facts);
            let runs = if run {
                let best = model.best_arm_mean();
                run_seeds(
                    loaded,
                    &stopping,
                    &pair,
                    &theta0,
                    &reference,
                    None,
                    || BanditSampler::new(model.clone()),
                    |v| {
                        let e = &v.event.payload;
                        vec![Some(e.arm as f64), Some(e.reward), Some(best - model.mu_arm[e.arm])]
                    },
                )?
            } else {
                Vec::new()
            };
            Ok(Outcome { analysis, runs, extra_columns: &["arm", "reward", "regret"] })
        }
        Domain::ActorCritic(block) => {
            let model = block.build()?;
            let variant = block.variant;
            let pair = ActorCriticPair::new(model.clone(), variant);
            let reference = StateVector::zeros(pair.dim());
            let theta0 = StateVector::from_vec(block.initial_state(&model)?);
            let events = FiniteEvents::new(pair.events(), model.probs()).map_err(RunError::Analysis)?;
            let est =
                estimate_constants(&pair, &mut events.clone(), Some(&reference), a.probes, a.probe_radius, &mut rng)
                    .map_err(RunError::Analysis)?;
            let mut facts = DomainFacts {
                rho: Some(Sourced::estimated(est.rho)),
                lipschitz: Some(Sourced::estimated(est.lipschitz)),
                sigma: Some(Sourced::analytic(0.0)),
                m: Some(Sourced::analytic(0.0)),
                ..Default::default()
            };
            if a.commutator {
                let r = ac_commutator_report(&model, variant).map_err(RunError::Analysis)?;
                let summary = CommutatorSummary::from(&r.numeric);
                let full = summary.subspace_dim == pair.dim();
                if variant == AcVariant::Augmented && full && r.numeric.mu0 > 0.0 {
                    facts.mu = Some(r.numeric.mu0 / 2.0);
                } else {
                    facts.warnings.push(
                        "order-gap sensitivity does not cover the whole state space; endpoint bounds not attached"
                            .into(),
                    );
                }
                facts.commutator = Some(summary);
            }
            if a.equilibrium {
                facts.equilibrium = equilibrium(&pair, &events, &theta0, &reference, &mut facts.warnings);
            }
            let analysis = finish_analysis(loaded, "actor_critic", &reference, &theta0, pair.norm(), facts);
            let runs = if run {
                run_seeds(
                    loaded,
                    &stopping,
                    &pair,
                    &theta0,
                    &reference,
                    Some(&events),
                    || Ok(events.clone()),
                    |_| Vec::new(),
                )?
            } else {
                Vec::new()
            };
            Ok(Outcome { analysis, runs, extra_columns: &[] })
        }
        Domain::Rlm(block) => {
            let model = block.build()?;
            let pair = RlmPair::new(model.clone());
            let reference = StateVector::zeros(model.dim());
            let theta0 = StateVector::from_vec(block.s0.clone());
            let events = model.finite_events();
            let mut facts = DomainFacts {
                rho: Some(Sourced::analytic(model.joint_contraction())),
                lipschitz: Some(Sourced::analytic(1.0)),
                sigma: Some(Sourced::analytic(0.0)),
                m: Some(Sourced::analytic(0.0)),
                ..Default::default()
            };
            if a.commutator {
                let cov = rlm_coverage_report(&model).map_err(RunError::Analysis)?;
                facts.commutator = Some(CommutatorSummary::from(&cov.report));
                if cov.covered {
                    facts.coverage = Some(Verdict::Pass);
                    facts.mu = Some(cov.mu_gramian);
                } else {
                    facts.coverage = Some(Verdict::Fail);
                    facts.warnings.push("coverage: FAIL; sensitivity-dependent bounds skipped".into());
                }
            }
            if a.equilibrium {
                facts.equilibrium = equilibrium(&pair, &events, &theta0, &reference, &mut facts.warnings);
            }
            let analysis = finish_analysis(loaded, "rlm", &reference, &theta0, pair.norm(), facts);
            let runs = if !run {
                Vec::new()
            } else if stopping.rule == StopRule::Expected {
                run_seeds(
                    loaded,
                    &stopping,
                    &pair,
                    &theta0,
                    &reference,
                    Some(&events),
                    || Ok(events.clone()),
                    |_| Vec::new(),
                )?
            } else {
                let opts = RecursionOptions {
                    trigger_cost: block.trigger_cost,
                    transient: block.transient,
                    round_robin: block.round_robin,
                };
                (0..loaded.config.seed_count)
                    .into_par_iter()
                    .map(|stream| {
                        let mut rng = child_rng(loaded.config.seed, stream);
                        let r = run_recursive(&model, &theta0, &stopping, opts, &mut rng)
                            .map_err(|source| RunError::Seed { stream, source })?;
                        Ok(SeedRun {
                            stream,
                            report: r.report,
                            extras: Vec::new(),
                            consolidations: r.schedule.map(|s| s.consolidation_steps.len()),
                        })
                    })
                    .collect::<Result<Vec<_>, RunError>>()?
            };
            Ok(Outcome { analysis, runs, extra_columns: &[] })
        }
        Domain::Sgd(block) => {
            let prob = block.build()?;
            let pair = SgdPair::new(prob.clone());
            let d = prob.dim();
            let reference = StateVector::zeros(2 * d);
            let theta0 = StateVector::from_vec(block.initial_state());
            let est = estimate_constants(
                &pair,
                &mut MinibatchSampler::new(&prob),
                Some(&reference),
                a.probes,
                a.probe_radius,
                &mut rng,
            )
            .map_err(RunError::Analysis)?;
            let mut facts = DomainFacts {
                rho: Some(Sourced::estimated(est.rho)),
                lipschitz: Some(Sourced::estimated(est.lipschitz)),
                sigma: Some(Sourced::estimated(est.sigma)),
                m: Some(Sourced::estimated(est.m)),
                ..Default::default()
            };
            if a.commutator {
                let (ja, jb) = prob.jacobians();
                let jac = JacobianPair::new(ja, vec![(0, jb)], reference.clone()).map_err(RunError::Analysis)?;
                let r = commutator_stats(&jac, None, None).map_err(RunError::Analysis)?;
                if r.mu0 > 0.0 {
                    facts.mu = Some(r.mu0 / 2.0);
                }
                facts.commutator = Some(CommutatorSummary::from(&r));
            }
            if a.equilibrium {
                let mean_event = analysis::FnExpectation(|_: &StateVector| {
                    Ok(vec![(Event::new(0, Minibatch { noise: DVector::zeros(d) }), 1.0)])
                });
                facts.equilibrium = equilibrium(&pair, &mean_event, &theta0, &reference, &mut facts.warnings);
            }
            let analysis = finish_analysis(loaded, "sgd", &reference, &theta0, pair.norm(), facts);
            let runs = if run {
                run_seeds(
                    loaded,
                    &stopping,
                    &pair,
                    &theta0,
                    &reference,
                    None,
                    || Ok(MinibatchSampler::new(&prob)),
                    |v| {
                        let w = v.theta.rows(0, d);
                        let m = v.theta.rows(d, d).into_owned();
                        let g = prob.h() * w + &v.event.payload.noise;
                        let (ng, nm) = (g.norm(), m.norm());
                        vec![(ng > 0.0 && nm > 0.0).then(|| (g.dot(&m) / (ng * nm)).clamp(-1.0, 1.0).acos())]
                    },
                )?
            } else {
                Vec::new()
            };
            Ok(Outcome { analysis, runs, extra_columns: &["grad_momentum_angle"] })
        }
    }
}

fn linear_commutator(
    pair: &ordergap::LinearPair,
    events: &FiniteEvents<ordergap::linear::LinearEvent>,
    reference: &StateVector,
    probs: &[f64],
    rng: &mut SimRng,
    facts: &mut DomainFacts,
) -> Result<(), RunError> {
    let jac = JacobianPair::from_pair(pair, events.events(), reference, analysis::DEFAULT_FD_STEP)
        .map_err(RunError::Analysis)?;
    let r = commutator_stats(&jac, Some(probs), None).map_err(RunError::Analysis)?;
    if r.mu0 > 0.0 {
        let remainder = analysis::estimate_remainder(pair, &jac, events.events(), &[1e-2, 1e-1, 1.0], 8, rng)
            .map_err(RunError::Analysis)?;
        let radius = analysis::validity_radius(r.mu0, remainder);
        facts.mu = Some(r.mu0 / 2.0);
        facts.validity_radius = radius.is_finite().then_some(radius);
    }
    facts.commutator = Some(CommutatorSummary::from(&r));
    Ok(())
}

fn equilibrium<O, R>(
    pair: &O,
    rule: &R,
    theta0: &StateVector,
    reference: &StateVector,
    warnings: &mut Vec<String>,
) -> Option<EquilibriumSummary>
where
    O: OperatorPair,
    R: ExpectationRule<O::Payload>,
{
    match effective_equilibrium(pair, rule, theta0, EquilibriumOptions::default()) {
        Ok(r) => Some(summarize_equilibrium(&r, reference, pair.norm())),
        Err(e) => {
            warnings.push(format!("equilibrium: {e}"));
            None
        }
    }
}

fn summarize_equilibrium(r: &EquilibriumReport, reference: &StateVector, norm: ordergap::Norm) -> EquilibriumSummary {
    EquilibriumSummary {
        converged: r.converged,
        iterations: r.residuals.len(),
        theta_star_inf: r.theta_star_inf.to_vec(),
        distance_to_reference: norm.distance(&r.theta_star_inf, reference),
        largest_contraction_factor: r
            .residuals
            .windows(2)
            .filter(|w| w[0] > 1e-10)
            .map(|w| w[1] / w[0])
            .reduce(f64::max),
        sigma_inf: r.sigma_inf_estimate,
        m_inf: r.m_inf_estimate,
    }
}

/// Merges declared constants over domain facts and computes the bounds.
fn finish_analysis(
    loaded: &LoadedConfig,
    domain: &str,
    reference: &StateVector,
    theta0: &StateVector,
    norm: ordergap::Norm,
    mut facts: DomainFacts,
) -> Analysis {
    let declared = loaded.config.constants.unwrap_or_default();
    let pick = |d: Option<f64>, f: Option<Sourced>| match d {
        Some(value) => Some(Sourced { value, source: Source::Declared }),
        None => f,
    };
    let r0_default = Sourced::analytic(norm.distance(theta0, reference));
    let resolved = (|| {
        let rho = pick(declared.rho, facts.rho)?;
        let lipschitz = pick(declared.lipschitz, facts.lipschitz)?;
        let sigma = pick(declared.sigma, facts.sigma)?;
        let m = pick(declared.m, facts.m)?;
        let r0 = pick(declared.r0, Some(r0_default))?;
        Some(ResolvedConstants {
            rho,
            lipschitz,
            sigma,
            m,
            r0,
            gamma: rho.value * lipschitz.value,
            mu: facts.mu,
            validity_radius: facts.validity_radius,
        })
    })();
    let mut constants = None;
    let mut bounds = None;
    if let Some(rc) = &resolved {
        let built = TheoryConstants::new(rc.rho.value, rc.lipschitz.value, rc.sigma.value, rc.m.value, rc.r0.value)
            .and_then(|c| match rc.mu {
                Some(mu) if mu > 0.0 => c.with_mu(mu),
                _ => Ok(c),
            })
            .and_then(|c| match rc.mu {
                Some(_) => c.with_radius(rc.validity_radius.unwrap_or(f64::INFINITY)),
                None => Ok(c),
            });
        match built {
            Ok(c) => {
                let stopping = loaded.config.stopping.to_config();
                match stopping_bounds(&c, &stopping) {
                    Ok(b) => {
                        bounds = Some(b);
                        constants = Some(c);
                    }
                    Err(ordergap::Error::BelowNoiseFloor { .. }) => {
                        constants = Some(c);
                        bounds = stopping_bounds(&c, &StoppingConfig { delta: None, ..stopping }).ok();
                        facts.warnings.push(
                            "epsilon is at or below the bounded-noise floor; noisy guarantees do not apply".into(),
                        );
                    }
                    Err(e) => facts.warnings.push(format!("bounds not applicable: {e}")),
                }
            }
            Err(e) => facts.warnings.push(format!("bounds not applicable: {e}")),
        }
    }
    Analysis {
        report: AnalysisReport {
            domain: domain.to_string(),
            reference: reference.to_vec(),
            constants: resolved,
            commutator: facts.commutator,
            coverage: facts.coverage,
            equilibrium: facts.equilibrium,
            bounds,
            warnings: facts.warnings,
        },
        constants,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_seeds<O, S, F, X>(
    loaded: &LoadedConfig,
    stopping: &StoppingConfig,
    pair: &O,
    theta0: &StateVector,
    reference: &StateVector,
    events: Option<&FiniteEvents<O::Payload>>,
    make_sampler: F,
    extra: X,
) -> Result<Vec<SeedRun>, RunError>
where
    O: OperatorPair + Sync,
    O::Payload: Send + Sync,
    S: EventSampler<O::Payload>,
    F: Fn() -> ordergap::Result<S> + Sync,
    X: Fn(&StepView<'_, O::Payload>) -> Vec<Option<f64>> + Sync,
{
    (0..loaded.config.seed_count)
        .into_par_iter()
        .map(|stream| {
            let wrap = |source| RunError::Seed { stream, source };
            let mut rng = child_rng(loaded.config.seed, stream);
            let mut extras = Vec::new();
            let report = match (stopping.rule, events) {
                (StopRule::Expected, Some(ev)) => {
                    expected_gap_stop(pair, ev, theta0, stopping, &mut rng, Some(reference)).map_err(wrap)?
                }
                _ => {
                    let mut sampler = make_sampler().map_err(wrap)?;
                    windowed_stop_observed(pair, &mut sampler, theta0, stopping, &mut rng, Some(reference), |v| {
                        extras.push(extra(v));
                        Ok(())
                    })
                    .map_err(wrap)?
                }
            };
            Ok(SeedRun { stream, report, extras, consolidations: None })
        })
        .collect()
}

fn assemble(loaded: &LoadedConfig, outcome: Outcome) -> Result<ExperimentOutput, RunError> {
    let cfg = &loaded.config;
    let stopping = cfg.stopping.to_config();
    let Outcome { analysis, runs, extra_columns } = outcome;
    let constants = analysis.constants;
    let envelope = constants.as_ref().and_then(|c| {
        let g = c.gamma();
        let ball = c.noise_ball().ok()?;
        let (rho, l, m, r0) = (c.rho(), c.lipschitz(), c.m(), c.r0());
        (g < 1.0).then_some(move |t: usize| 2.0 * rho * l * (g.powi(t as i32) * r0 + ball) + (1.0 + rho) * m)
    });
    let mut artifacts = Artifacts::default();
    let mut seeds = Vec::with_capacity(runs.len());
    for run in runs {
        let mut report = run.report;
        let mut warnings = Vec::new();
        if let Some(c) = &constants {
            match report.clone().with_bounds(c, &stopping) {
                Ok(r) => report = r,
                Err(e) => warnings.push(format!("bounds not applicable: {e}")),
            }
        }
        warnings.extend(report.warnings.iter().cloned());
        let decay_fit = cfg.analysis.decay_fit.then(|| {
            let omegas = report.trace.omegas();
            fit_log_linear(&omegas, default_transient(omegas.len()), omegas.len()).ok()
        });
        let summary = SeedSummary {
            stream: run.stream,
            tau: report.tau,
            triggered: report.triggered,
            last_window_average: report.last_window_average(),
            checks: report.checks,
            decay_fit: decay_fit.flatten(),
            consolidations: run.consolidations,
            warnings,
        };
        let stem = format!("seed_{:04}", run.stream);
        let record = SeedRecord {
            schema_version: SCHEMA_VERSION,
            experiment_id: &cfg.experiment_id,
            config_sha256: &loaded.digest,
            seed: cfg.seed,
            summary: &summary,
        };
        artifacts
            .files
            .insert(format!("{stem}.json"), to_json(&record).map_err(|e| RunError::Serialize(e.to_string()))?);
        if cfg.output.traces {
            let header = TraceHeader {
                digest: &loaded.digest,
                experiment_id: &cfg.experiment_id,
                seed: cfg.seed,
                stream: run.stream,
            };
            let bound = envelope.as_ref().map(|f| f as &dyn Fn(usize) -> f64);
            let csv = trace::render(&header, &report, bound, extra_columns, &run.extras)
                .map_err(|e| RunError::Serialize(e.to_string()))?;
            artifacts.files.insert(format!("{stem}.csv"), csv);
        }
        seeds.push(summary);
    }
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        experiment_id: cfg.experiment_id.clone(),
        config_sha256: loaded.digest.clone(),
        seed: cfg.seed,
        stopping,
        summary: summarize(&seeds),
        analysis: analysis.report,
        seeds,
    };
    artifacts.files.insert("report.json".into(), to_json(&report).map_err(|e| RunError::Serialize(e.to_string()))?);
    Ok(ExperimentOutput { report, artifacts })
}

fn fraction(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn summarize(seeds: &[SeedSummary]) -> Summary {
    let n = seeds.len() as u64;
    let mut tau_checked = 0;
    let mut tau_violations = 0;
    let mut endpoint_checked = 0;
    let mut endpoint_violations = 0;
    for s in seeds {
        let Some(c) = &s.checks else { continue };
        if let Some(ok) = c.tau_within_bound {
            tau_checked += 1;
            if !ok {
                tau_violations += 1;
                continue;
            }
        }
        if let Some(ok) = c.endpoint_within_bound {
            endpoint_checked += 1;
            if !ok {
                endpoint_violations += 1;
            }
        }
    }
    let slopes: Vec<f64> = seeds.iter().filter_map(|s| s.decay_fit.map(|f| f.slope)).collect();
    Summary {
        seeds: n,
        triggered_fraction: fraction(seeds.iter().filter(|s| s.triggered).count() as u64, n).unwrap_or(0.0),
        mean_tau: if n == 0 { 0.0 } else { seeds.iter().map(|s| s.tau as f64).sum::<f64>() / n as f64 },
        tau_checked,
        tau_violations,
        tau_violation_fraction: fraction(tau_violations, tau_checked),
        endpoint_checked,
        endpoint_violations,
        endpoint_violation_fraction: fraction(endpoint_violations, endpoint_checked),
        mean_decay_slope: (!slopes.is_empty()).then(|| slopes.iter().sum::<f64>() / slopes.len() as f64),
    }
}

/// Theory constants and closed-form bounds for a config, without running.
pub fn stop_bounds(loaded: &LoadedConfig) -> Result<AnalysisReport, RunError> {
    let mut cfg = loaded.clone();
    cfg.config.analysis.equilibrium = false;
    analyze(&cfg)
}
