//! Closed-loop simulation of the encrypted formation.
//!
//! Each tick, every [`AgentEndpoint`] measures its incident edges, quantizes
//! and encrypts its control terms and estimator inputs, and sends them to the
//! [`EdgeEndpoint`]. The edge multiplies by encrypted gains, sums, advances the
//! encrypted estimators and returns ciphertexts, which the agent decrypts and
//! applies. The same integer arithmetic also runs in plaintext as an oracle,
//! next to an unquantized floating-point reference.

mod agent;
mod closed_loop;
mod edge;
pub mod export;
mod monte_carlo;
mod scenario;
mod timing;

use thiserror::Error;

use crate::formation::FormationError;
use crate::lwe::LweError;
use crate::quantizer::{QuantizerError, Scale};
use crate::runtime::RuntimeError;

pub use agent::{
    agent_decrypt_and_apply, agent_sense_and_encrypt, AgentCore, AgentEndpoint, AgentPayload, AgentProvision,
    EncryptedTerm, EstimatorInput, QuantizedPayload, QuantizedTerm,
};
pub use closed_loop::{run_closed_loop, run_pipeline, Pipeline, PipelineStep, StepRecord, TrajectoryLog};
pub use edge::{edge_evaluate, EdgeEndpoint, EdgeOutput, IntegerEdge, IntegerOutput};
pub use monte_carlo::{mean_ci, run_monte_carlo, MonteCarloOptions, MonteCarloSummary, NSummary, Quantiles, StepStat};
pub use scenario::{GraphSpec, JitterSpec, Mode, OpProfile, PathProfile, QuantizerSection, Scenario, ScenarioFile};
pub use timing::{timing_probe, Stopwatch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error(
        "plaintext space too small for the {path} path: p = 10^{p_exp} must exceed \
         prod_i 10^(2 sp_i) + 2 sum_j 10^(sp_j) = {bound} (mult sp = {mult:?}, add sp = {add:?})"
    )]
    PlaintextGate {
        path: &'static str,
        p_exp: u32,
        bound: String,
        mult: Vec<u32>,
        add: Vec<u32>,
    },
    #[error("error budget exhausted for the {path} path: noise bound {noise} is not below L/2 = 10^{l_exp}/2")]
    ErrorBudget {
        path: &'static str,
        noise: u128,
        l_exp: u32,
    },
    #[error("payload scales disagree for agent {agent}: {first:?} vs {second:?}")]
    ScaleMismatch { agent: usize, first: Scale, second: Scale },
    #[error("unknown agent {0}")]
    UnknownAgent(usize),
    #[error("no coefficient provisioned for agent {agent}, edge {edge}")]
    MissingCoefficient { agent: usize, edge: usize },
    #[error("step {step}: {source}")]
    AtStep { step: usize, source: Box<SimError> },
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Lwe(#[from] LweError),
}

impl SimError {
    pub(crate) fn at(step: usize) -> impl FnOnce(SimError) -> SimError {
        move |e| SimError::AtStep {
            step,
            source: Box::new(e),
        }
    }

    /// The error without step context.
    pub fn root(&self) -> &SimError {
        match self {
            SimError::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}

#[cfg(test)]
pub(crate) const TRIANGLE_TOML: &str = r#"
name = "triangle"
seed = 7
horizon = 100
initial_positions = [[0.4, 0.806225774829855], [0.0, 0.0], [0.8, 0.0]]
mismatch = [0.1, 0.0, 0.0]

[graph]
agents = 3
edges = [[1, 2], [2, 3], [3, 1]]
d_star = [0.8]

[cipher]
p_exp = 10
l_exp = 11
key_length = 10
err_bound = 100
"#;
