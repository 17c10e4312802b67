//! JSON report records.

use ordergap::rlm::DecayFit;
use ordergap::{BoundChecks, StoppingBounds, StoppingConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Given in the `[constants]` table.
    Declared,
    /// Closed form from the domain parameters.
    Analytic,
    /// Sampled probes; a lower bound on the true constant.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sourced {
    pub value: f64,
    pub source: Source,
}

impl Sourced {
    pub fn analytic(value: f64) -> Self {
        Sourced { value, source: Source::Analytic }
    }

    pub fn estimated(value: f64) -> Self {
        Sourced { value, source: Source::Estimated }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConstants {
    pub rho: Sourced,
    pub lipschitz: Sourced,
    pub sigma: Sourced,
    pub m: Sourced,
    pub r0: Sourced,
    pub gamma: f64,
    /// Order-gap sensitivity used for endpoint bounds, if one applies on the
    /// whole state space.
    pub mu: Option<f64>,
    /// Validity radius of `mu`; `None` when unbounded.
    pub validity_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorSummary {
    pub mu0: f64,
    pub mu1_sq: f64,
    pub rank_sigma_bar: usize,
    pub rank_gramian: usize,
    /// Dimension of the subspace the statistics are restricted to.
    pub subspace_dim: usize,
}

impl From<&ordergap::CommutatorReport> for CommutatorSummary {
    fn from(r: &ordergap::CommutatorReport) -> Self {
        CommutatorSummary {
            mu0: r.mu0,
            mu1_sq: r.mu1_sq,
            rank_sigma_bar: r.rank_sigma_bar,
            rank_gramian: r.rank_gramian,
            subspace_dim: r.subspace.as_ref().map_or(r.sigma_bar.ncols(), |v| v.ncols()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub converged: bool,
    pub iterations: usize,
    pub theta_star_inf: Vec<f64>,
    pub distance_to_reference: f64,
    pub largest_contraction_factor: Option<f64>,
    pub sigma_inf: f64,
    pub m_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub domain: String,
    /// Consolidation fixed point used as the reference state.
    pub reference: Vec<f64>,
    pub constants: Option<ResolvedConstants>,
    pub commutator: Option<CommutatorSummary>,
    /// Gramian coverage of the relevant subspace, when the domain has one.
    pub coverage: Option<Verdict>,
    pub equilibrium: Option<EquilibriumSummary>,
    pub bounds: Option<StoppingBounds>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub stream: u64,
    pub tau: usize,
    pub triggered: bool,
    pub last_window_average: Option<f64>,
    pub checks: Option<BoundChecks>,
    pub decay_fit: Option<DecayFit>,
    /// Consolidations run by the gap-triggered schedule.
    pub consolidations: Option<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: u64,
    pub triggered_fraction: f64,
    pub mean_tau: f64,
    /// Seeds on which a stopping-time bound was checked.
    pub tau_checked: u64,
    pub tau_violations: u64,
    pub tau_violation_fraction: Option<f64>,
    /// Seeds within the stopping-time bound whose endpoint was checked.
    pub endpoint_checked: u64,
    pub endpoint_violations: u64,
    pub endpoint_violation_fraction: Option<f64>,
    pub mean_decay_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment_id: String,
    pub config_sha256: String,
    pub seed: u64,
    pub stopping: StoppingConfig,
    pub analysis: AnalysisReport,
    pub summary: Summary,
    pub seeds: Vec<SeedSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedRecord<'a> {
    pub schema_version: u32,
    pub experiment_id: &'a str,
    pub config_sha256: &'a str,
    pub seed: u64,
    #[serde(flatten)]
    pub summary: &'a SeedSummary,
}

/// Pretty JSON with a trailing newline. Floats use the shortest
/// representation that round-trips; non-finite values become `null`.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}
