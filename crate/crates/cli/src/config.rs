//! Experiment configuration files.
//!
//! A config is a TOML document with top-level metadata, `[stopping]`,
//! optional `[analysis]`, `[output]` and `[constants]` tables, and exactly
//! one domain table: `[bandit]`, `[actor_critic]`, `[rlm]`, `[sgd]` or
//! `[linear]`. Everything is validated before any run starts.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use ordergap::actor_critic::{scalar_example, ACModel, AcVariant};
use ordergap::bandit::{BanditConfig, BanditState, Selection};
use ordergap::linear::NoisyLinearSampler;
use ordergap::rlm::RlmModel;
use ordergap::sgd::QuadraticProblem;
use ordergap::{root_rng, LinearPair, OperatorPair, StopRule, StoppingConfig, TheoryConstants};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Version of the config, trace and report formats.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

/// Prefixes a core error with the config block it came from.
fn scoped(block: &str, err: ordergap::Error) -> ConfigError {
    match err {
        ordergap::Error::InvalidParameter { name, reason } => invalid(format!("{block}.{name}"), reason),
        other => invalid(block, other.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub experiment_id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_seed_count")]
    pub seed_count: u64,
    pub stopping: StoppingBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandit: Option<BanditBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_critic: Option<ActorCriticBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rlm: Option<RlmBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd: Option<SgdBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearBlock>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_seed_count() -> u64 {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingBlock {
    pub epsilon: f64,
    pub window: usize,
    pub t_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub rule: StopRule,
}

impl StoppingBlock {
    pub fn to_config(&self) -> StoppingConfig {
        StoppingConfig {
            epsilon: self.epsilon,
            window: self.window,
            t_max: self.t_max,
            delta: self.delta,
            rule: self.rule,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    #[serde(default = "yes")]
    pub commutator: bool,
    #[serde(default = "yes")]
    pub equilibrium: bool,
    #[serde(default = "yes")]
    pub decay_fit: bool,
    /// Random probe pairs for constant estimation.
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_probe_radius")]
    pub probe_radius: f64,
}

fn default_probes() -> usize {
    200
}

fn default_probe_radius() -> f64 {
    0.5
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        AnalysisBlock {
            commutator: true,
            equilibrium: true,
            decay_fit: true,
            probes: default_probes(),
            probe_radius: default_probe_radius(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Write per-step trace files.
    #[serde(default = "yes")]
    pub traces: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: default_out_dir(), traces: true }
    }
}

/// Declared theory constants; any field left out is derived from the
/// domain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditBlock {
    pub mu_arm: Vec<f64>,
    pub sigma_r2: f64,
    pub mu_p: Vec<f64>,
    pub lambda: f64,
    pub kappa: f64,
    pub selection: Selection,
    /// Initial posterior means; defaults to `mu_p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    /// Initial posterior variances; defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2_0: Option<Vec<f64>>,
}

impl BanditBlock {
    pub fn model(&self) -> BanditConfig {
        BanditConfig {
            mu_arm: self.mu_arm.clone(),
            sigma_r2: self.sigma_r2,
            mu_p: self.mu_p.clone(),
            lambda: self.lambda,
            kappa: self.kappa,
            selection: self.selection.clone(),
        }
    }

    pub fn initial_state(&self) -> Result<BanditState, ConfigError> {
        let a = self.mu_arm.len();
        BanditState::new(
            self.mu0.clone().unwrap_or_else(|| self.mu_p.clone()),
            self.sigma2_0.clone().unwrap_or_else(|| vec![1.0; a]),
        )
        .map_err(|e| scoped("bandit", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcModelKind {
    /// Random model drawn from `model_seed`.
    #[default]
    Random,
    /// The one-dimensional worked example.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorCriticBlock {
    #[serde(default)]
    pub model: AcModelKind,
    #[serde(default = "one")]
    pub d: usize,
    #[serde(default = "one")]
    pub d_pi: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_beta_prime")]
    pub beta_prime: f64,
    pub variant: AcVariant,
    #[serde(default)]
    pub model_seed: u64,
    /// Initial critic weights; defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<f64>>,
    /// Initial policy parameters; defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi0: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.1
}

fn default_beta() -> f64 {
    0.2
}

fn default_beta_prime() -> f64 {
    0.3
}

impl ActorCriticBlock {
    pub fn build(&self) -> Result<ACModel, ConfigError> {
        match self.model {
            AcModelKind::Scalar => Ok(scalar_example()),
            AcModelKind::Random => ACModel::random(
                self.d,
                self.d_pi,
                (self.alpha, self.beta, self.beta_prime),
                &mut root_rng(self.model_seed),
            )
            .map_err(|e| scoped("actor_critic", e)),
        }
    }

    pub fn initial_state(&self, model: &ACModel) -> Result<Vec<f64>, ConfigError> {
        let w = self.w0.clone().unwrap_or_else(|| vec![1.0; model.d()]);
        let psi = self.psi0.clone().unwrap_or_else(|| vec![1.0; model.d_pi()]);
        if w.len() != model.d() {
            return Err(invalid("actor_critic.w0", format!("expected length {}", model.d())));
        }
        if psi.len() != model.d_pi() {
            return Err(invalid("actor_critic.psi0", format!("expected length {}", model.d_pi())));
        }
        Ok(w.into_iter().chain(psi).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkBlock {
    pub matrix: Vec<Vec<f64>>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlmBlock {
    /// Orthogonal projection onto the answer directions.
    pub projection: Vec<Vec<f64>>,
    pub beta: f64,
    pub chunks: Vec<ChunkBlock>,
    pub s0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient: Option<usize>,
    #[serde(default)]
    pub round_robin: bool,
}

impl RlmBlock {
    pub fn build(&self) -> Result<RlmModel, ConfigError> {
        let p = matrix("rlm.projection", &self.projection)?;
        let chunks = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, c)| Ok((matrix(&format!("rlm.chunks[{i}].matrix"), &c.matrix)?, c.prob)))
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let model = RlmModel::new(p, self.beta, chunks).map_err(|e| scoped("rlm", e))?;
        if self.s0.len() != model.dim() {
            return Err(invalid("rlm.s0", format!("expected length {}", model.dim())));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdBlock {
    pub h: Vec<Vec<f64>>,
    pub minibatch_noise: f64,
    pub eta: f64,
    pub momentum_coef: f64,
    pub w0: Vec<f64>,
    /// Initial momentum; defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<Vec<f64>>,
}

impl SgdBlock {
    pub fn build(&self) -> Result<QuadraticProblem, ConfigError> {
        let h = matrix("sgd.h", &self.h)?;
        let prob = QuadraticProblem::new(h, self.minibatch_noise, self.eta, self.momentum_coef)
            .map_err(|e| scoped("sgd", e))?;
        if self.w0.len() != prob.dim() {
            return Err(invalid("sgd.w0", format!("expected length {}", prob.dim())));
        }
        if self.m0.as_ref().is_some_and(|m| m.len() != prob.dim()) {
            return Err(invalid("sgd.m0", format!("expected length {}", prob.dim())));
        }
        Ok(prob)
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let m = self.m0.clone().unwrap_or_else(|| vec![0.0; self.w0.len()]);
        self.w0.iter().copied().chain(m).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSampler {
    /// Maps drawn by `prob`, plus uniform noise in the ball.
    #[default]
    Fixed,
    /// State-dependent epsilon-greedy choice between two bounded noise
    /// sources; requires a single map.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapBlock {
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(default = "unit_prob")]
    pub prob: f64,
}

fn unit_prob() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearBlock {
    pub q: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_offset: Option<Vec<f64>>,
    pub maps: Vec<MapBlock>,
    #[serde(default)]
    pub noise_radius: f64,
    #[serde(default)]
    pub sampler: LinearSampler,
    #[serde(default = "default_greedy_epsilon")]
    pub greedy_epsilon: f64,
    pub theta0: Vec<f64>,
}

fn default_greedy_epsilon() -> f64 {
    0.1
}

impl LinearBlock {
    pub fn build(&self) -> Result<LinearPair, ConfigError> {
        let q = matrix("linear.q", &self.q)?;
        let d = q.nrows();
        let vector = |field: &str, v: &Option<Vec<f64>>| -> Result<DVector<f64>, ConfigError> {
            match v {
                None => Ok(DVector::zeros(d)),
                Some(v) if v.len() == d => Ok(DVector::from_column_slice(v)),
                Some(_) => Err(invalid(field, format!("expected length {d}"))),
            }
        };
        let q_offset = vector("linear.q_offset", &self.q_offset)?;
        let maps = self
            .maps
            .iter()
            .enumerate()
            .map(|(i, m)| {
                Ok((
                    matrix(&format!("linear.maps[{i}].b"), &m.b)?,
                    vector(&format!("linear.maps[{i}].offset"), &m.offset)?,
                ))
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let pair = LinearPair::new(q, q_offset, maps).map_err(|e| scoped("linear", e))?;
        if self.theta0.len() != d {
            return Err(invalid("linear.theta0", format!("expected length {d}")));
        }
        if !(self.noise_radius >= 0.0 && self.noise_radius.is_finite()) {
            return Err(invalid("linear.noise_radius", "must be finite and >= 0"));
        }
        if self.sampler == LinearSampler::Greedy {
            if self.maps.len() != 1 {
                return Err(invalid("linear.sampler", "greedy sampler requires exactly one map"));
            }
            if !(0.0..=1.0).contains(&self.greedy_epsilon) {
                return Err(invalid("linear.greedy_epsilon", "must lie in [0, 1]"));
            }
        }
        Ok(pair)
    }

    pub fn probs(&self) -> Vec<f64> {
        self.maps.iter().map(|m| m.prob).collect()
    }
}

/// Row-major nested list to a matrix, rejecting ragged or empty input.
pub fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(invalid(field, "must be a nonempty matrix"));
    }
    if rows.iter().any(|r| r.len() != m) {
        return Err(invalid(field, "rows must have equal length"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid(field, "entries must be finite"));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.iter().flatten().copied()))
}

/// The one domain block of a validated config.
#[derive(Debug, Clone, Copy)]
pub enum Domain<'a> {
    Bandit(&'a BanditBlock),
    ActorCritic(&'a ActorCriticBlock),
    Rlm(&'a RlmBlock),
    Sgd(&'a SgdBlock),
    Linear(&'a LinearBlock),
}

impl Domain<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Domain::Bandit(_) => "bandit",
            Domain::ActorCritic(_) => "actor_critic",
            Domain::Rlm(_) => "rlm",
            Domain::Sgd(_) => "sgd",
            Domain::Linear(_) => "linear",
        }
    }

    /// Whether the domain exposes a finite event set with exact
    /// probabilities, as the expected-gap rule requires.
    fn has_finite_events(&self) -> bool {
        match self {
            Domain::ActorCritic(_) | Domain::Rlm(_) => true,
            Domain::Linear(l) => l.noise_radius == 0.0 && l.sampler == LinearSampler::Fixed,
            Domain::Bandit(_) | Domain::Sgd(_) => false,
        }
    }
}

impl ExperimentConfig {
    /// The domain block. Panics on an unvalidated config without exactly
    /// one block.
    pub fn domain(&self) -> Domain<'_> {
        self.domains().into_iter().next().expect("config validated")
    }

    fn domains(&self) -> Vec<Domain<'_>> {
        let mut out = Vec::new();
        if let Some(b) = &self.bandit {
            out.push(Domain::Bandit(b));
        }
        if let Some(b) = &self.actor_critic {
            out.push(Domain::ActorCritic(b));
        }
        if let Some(b) = &self.rlm {
            out.push(Domain::Rlm(b));
        }
        if let Some(b) = &self.sgd {
            out.push(Domain::Sgd(b));
        }
        if let Some(b) = &self.linear {
            out.push(Domain::Linear(b));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("unsupported version, expected {SCHEMA_VERSION}")));
        }
        if self.experiment_id.is_empty()
            || !self.experiment_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(invalid("experiment_id", "must be nonempty and use only [A-Za-z0-9-_.]"));
        }
        if self.seed_count == 0 {
            return Err(invalid("seed_count", "must be >= 1"));
        }
        self.stopping.to_config().validate().map_err(|e| scoped("stopping", e))?;
        if !(self.analysis.probe_radius > 0.0 && self.analysis.probe_radius.is_finite()) {
            return Err(invalid("analysis.probe_radius", "must be finite and > 0"));
        }
        if let Some(c) = &self.constants {
            for (name, v) in [("rho", c.rho), ("lipschitz", c.lipschitz), ("sigma", c.sigma), ("m", c.m), ("r0", c.r0)]
            {
                if v.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
                    return Err(invalid(format!("constants.{name}"), "must be finite and >= 0"));
                }
            }
            if let (Some(rho), Some(l), Some(s), Some(m)) = (c.rho, c.lipschitz, c.sigma, c.m) {
                TheoryConstants::new(rho, l, s, m, c.r0.unwrap_or(0.0)).map_err(|e| scoped("constants", e))?;
            }
        }
        let domains = self.domains();
        match domains.len() {
            0 => {
                return Err(invalid(
                    "domain",
                    "exactly one of [bandit], [actor_critic], [rlm], [sgd], [linear] is required",
                ))
            }
            1 => {}
            _ => {
                let names: Vec<_> = domains.iter().map(|d| d.name()).collect();
                return Err(invalid("domain", format!("exactly one domain block allowed, found {}", names.join(", "))));
            }
        }
        let domain = domains[0];
        if self.stopping.rule == StopRule::Expected && !domain.has_finite_events() {
            return Err(invalid(
                "stopping.rule",
                format!("expected rule needs a finite event set, which {} lacks", domain.name()),
            ));
        }
        match domain {
            Domain::Bandit(b) => {
                b.model().validate().map_err(|e| scoped("bandit", e))?;
                b.initial_state()?;
            }
            Domain::ActorCritic(b) => {
                let model = b.build()?;
                b.initial_state(&model)?;
            }
            Domain::Rlm(b) => {
                b.build()?;
                if b.trigger_cost.is_some_and(|c| !(c >= 0.0)) {
                    return Err(invalid("rlm.trigger_cost", "must be >= 0"));
                }
            }
            Domain::Sgd(b) => {
                b.build()?;
            }
            Domain::Linear(b) => {
                let pair = b.build()?;
                NoisyLinearSampler::new(pair.dim(), &b.probs(), b.noise_radius)
                    .map_err(|e| scoped("linear.maps", e))?;
            }
        }
        Ok(())
    }
}

/// A validated config together with the digest of its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Lowercase hex SHA-256 of the source bytes.
    pub digest: String,
}

impl LoadedConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(LoadedConfig { config, digest: digest(text.as_bytes()) })
    }

    /// Wraps an in-memory config; the digest covers its canonical TOML
    /// serialization.
    pub fn from_config(config: ExperimentConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let text = toml::to_string(&config).map_err(|e| invalid("config", e.to_string()))?;
        Ok(LoadedConfig { config, digest: digest(text.as_bytes()) })
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    LoadedConfig::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_BANDIT: &str = r#"
experiment_id = "bandit-min"

[stopping]
epsilon = 0.01
window = 10
t_max = 500

[bandit]
mu_arm = [0.0, 1.0]
sigma_r2 = 1.0
mu_p = [0.0, 0.0]
lambda = 0.2
kappa = 0.5
selection = { kind = "fixed", probs = [0.5, 0.5] }
"#;

    #[test]
    fn minimal_bandit_gets_defaults() {
        let loaded = LoadedConfig::parse(MINIMAL_BANDIT).unwrap();
        let c = &loaded.config;
        assert_eq!(c.schema_version, SCHEMA_VERSION);
        assert_eq!(c.seed, 0);
        assert_eq!(c.seed_count, 1);
        assert_eq!(c.analysis, AnalysisBlock::default());
        assert_eq!(c.output, OutputBlock::default());
        assert_eq!(c.stopping.rule, StopRule::Empirical);
        assert!(c.stopping.delta.is_none());
        assert_eq!(c.domain().name(), "bandit");
        assert_eq!(loaded.digest.len(), 64);
    }

    #[test]
    fn out_of_range_lambda_is_named() {
        let text = MINIMAL_BANDIT.replace("lambda = 0.2", "lambda = 1.5");
        let err = LoadedConfig::parse(&text).unwrap_err().to_string();
        assert_eq!(err, "bandit.lambda: must lie in (0, 1)");
    }

    #[test]
    fn two_domain_blocks_rejected() {
        let text = format!(
            "{MINIMAL_BANDIT}\n[sgd]\nh = [[1.0]]\nminibatch_noise = 0.1\neta = 0.1\nmomentum_coef = 0.5\nw0 = [1.0]\n"
        );
        let err = LoadedConfig::parse(&text).unwrap_err().to_string();
        assert!(err.starts_with("domain: exactly one domain block allowed"), "{err}");
    }

    #[test]
    fn missing_domain_rejected() {
        let text = "experiment_id = \"x\"\n[stopping]\nepsilon = 0.1\nwindow = 1\nt_max = 10\n";
        assert!(LoadedConfig::parse(text).unwrap_err().to_string().starts_with("domain:"));
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let text = MINIMAL_BANDIT.replace("kappa = 0.5", "kappa = 0.5\nkapa = 1.0");
        assert!(matches!(LoadedConfig::parse(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn expected_rule_needs_finite_events() {
        let text = MINIMAL_BANDIT.replace("t_max = 500", "t_max = 500\nrule = \"expected\"");
        let err = LoadedConfig::parse(&text).unwrap_err().to_string();
        assert!(err.starts_with("stopping.rule:"), "{err}");
    }

    #[test]
    fn digest_tracks_source_bytes() {
        let a = LoadedConfig::parse(MINIMAL_BANDIT).unwrap();
        let b = LoadedConfig::parse(&format!("{MINIMAL_BANDIT}\n# comment\n")).unwrap();
        assert_eq!(a.config, b.config);
        assert_ne!(a.digest, b.digest);
        assert_eq!(a.digest, digest(MINIMAL_BANDIT.as_bytes()));
    }

    #[test]
    fn serialized_config_round_trips() {
        let a = LoadedConfig::parse(MINIMAL_BANDIT).unwrap();
        let text = toml::to_string(&a.config).unwrap();
        let b = LoadedConfig::parse(&text).unwrap();
        assert_eq!(a.config, b.config);
    }

    #[test]
    fn ragged_matrix_rejected() {
        let err = matrix("linear.q", &[vec![1.0, 0.0], vec![1.0]]).unwrap_err().to_string();
        assert_eq!(err, "linear.q: rows must have equal length");
    }
}
