//! The discrete-time loop and its log.

use std::collections::VecDeque;
use std::time::Duration;

use crate::formation::{combined_control, estimator_step_plain, measure, step_agents, EdgeMeasurement, Vec2};

use super::agent::{AgentCore, AgentEndpoint};
use super::edge::{EdgeEndpoint, IntegerEdge};
use super::scenario::{Mode, Scenario};
use super::timing::{micros, timing_probe};
use super::SimError;

/// One way of computing the control inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    /// Quantize, encrypt, evaluate at the edge, decrypt.
    Encrypted,
    /// The same integers without encryption.
    Quantized,
    /// Real arithmetic, no quantization.
    Float,
}

/// State of the loop after `t` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineStep {
    pub t: usize,
    pub positions: Vec<Vec2>,
    pub dist: Vec<f64>,
    pub e_tail: Vec<f64>,
    pub e_head: Vec<f64>,
    pub mu_hat: Vec<f64>,
    /// Time spent encrypting payloads during the step that led here.
    pub enc_time_us: f64,
    /// Time spent at the edge during the step that led here.
    pub eval_time_us: f64,
}

/// One logged step. Fields of pipelines that did not run are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub positions: Vec<Vec2>,
    pub dist: Vec<f64>,
    pub e_tail: Vec<f64>,
    pub e_head: Vec<f64>,
    /// Decrypted estimates.
    pub mu_hat: Option<Vec<f64>>,
    /// Estimates of the quantized plaintext oracle.
    pub mu_hat_oracle: Option<Vec<f64>>,
    /// Estimates of the unquantized plaintext loop.
    pub mu_hat_plain: Option<Vec<f64>>,
    pub enc_time_us: Option<f64>,
    pub eval_time_us: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub agents: usize,
    pub edges: usize,
    pub ts: f64,
    pub mode: Mode,
    pub seed: u64,
    /// `horizon + 1` records, from the initial state on.
    pub records: Vec<StepRecord>,
}

impl TrajectoryLog {
    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("log holds the initial state")
    }

    /// Largest `|mu_hat - mu_hat_oracle|` over all steps and edges.
    pub fn oracle_deviation(&self) -> Option<f64> {
        self.max_deviation(|r| r.mu_hat.as_ref().zip(r.mu_hat_oracle.as_ref()))
    }

    /// Largest `|mu_hat - mu_hat_plain|` over all steps and edges.
    pub fn plain_deviation(&self) -> Option<f64> {
        self.max_deviation(|r| r.mu_hat.as_ref().zip(r.mu_hat_plain.as_ref()))
    }

    fn max_deviation<'a>(
        &'a self,
        pick: impl Fn(&'a StepRecord) -> Option<(&'a Vec<f64>, &'a Vec<f64>)>,
    ) -> Option<f64> {
        let mut best: Option<f64> = None;
        for r in &self.records {
            let (a, b) = pick(r)?;
            let d = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            best = Some(best.map_or(d, |m| m.max(d)));
        }
        best
    }
}

struct LoopState {
    positions: Vec<Vec2>,
    measurements: Vec<EdgeMeasurement>,
    pending: VecDeque<Vec<Vec2>>,
}

fn snapshot(t: usize, s: &LoopState, mu_hat: Vec<f64>, enc: Duration, eval: Duration) -> PipelineStep {
    PipelineStep {
        t,
        positions: s.positions.clone(),
        dist: s.measurements.iter().map(|m| m.dist).collect(),
        e_tail: s.measurements.iter().map(|m| m.e_tail).collect(),
        e_head: s.measurements.iter().map(|m| m.e_head).collect(),
        mu_hat,
        enc_time_us: micros(enc),
        eval_time_us: micros(eval),
    }
}

/// Per-pipeline controller state.
enum Controllers {
    Encrypted {
        agents: Vec<AgentEndpoint>,
        edge: Box<EdgeEndpoint>,
    },
    Quantized {
        agents: Vec<AgentCore>,
        edge: IntegerEdge,
    },
    Float {
        xi: Vec<f64>,
    },
}

impl Controllers {
    fn new(scenario: &Scenario, pipeline: Pipeline) -> Result<Self, SimError> {
        let graph = scenario.graph();
        let params = scenario.params();
        let est = scenario.estimator();
        let cores = (0..graph.agents())
            .map(|i| AgentCore::new(i, graph, scenario.quantizer().sp, est, scenario.mismatch_term(), params));
        Ok(match pipeline {
            Pipeline::Encrypted => {
                let mut agents: Vec<AgentEndpoint> = cores
                    .enumerate()
                    .map(|(i, c)| AgentEndpoint::new(c, params, scenario.agent_rng(i)))
                    .collect();
                let mut edge = EdgeEndpoint::new(params, *est, scenario.gain_scale())?;
                for a in &mut agents {
                    edge.install(a.provision(graph, scenario.integer_gains(), est, est.coefficients)?);
                }
                Controllers::Encrypted {
                    agents,
                    edge: Box::new(edge),
                }
            }
            Pipeline::Quantized => Controllers::Quantized {
                agents: cores.collect(),
                edge: IntegerEdge::new(graph, scenario.integer_gains(), est, scenario.gain_scale())?,
            },
            Pipeline::Float => Controllers::Float {
                xi: vec![0.0; graph.edge_count()],
            },
        })
    }

    fn mu_hat(&self, scenario: &Scenario) -> Vec<f64> {
        let graph = scenario.graph();
        let cores: Vec<&AgentCore> = match self {
            Controllers::Encrypted { agents, .. } => agents.iter().map(AgentEndpoint::core).collect(),
            Controllers::Quantized { agents, .. } => agents.iter().collect(),
            Controllers::Float { xi } => return xi.clone(),
        };
        (0..graph.edge_count())
            .map(|k| cores[graph.tail(k)].mu_hat(k).unwrap_or(0.0))
            .collect()
    }

    /// Computes every agent's control input and advances the estimators.
    fn step(
        &mut self,
        scenario: &Scenario,
        m: &[EdgeMeasurement],
    ) -> Result<(Vec<Vec2>, Duration, Duration), SimError> {
        let graph = scenario.graph();
        match self {
            Controllers::Encrypted { agents, edge } => {
                let mut enc = Duration::ZERO;
                let mut payloads = Vec::with_capacity(agents.len());
                for a in agents.iter_mut() {
                    let q = a.core_mut().sense(m, graph)?;
                    let (c, dt) = timing_probe("encrypt", || a.encrypt_payload(&q));
                    enc += dt;
                    payloads.push(c?);
                }
                let (outputs, eval) = timing_probe("evaluate", || edge.evaluate(&payloads));
                let mut u = vec![[0.0; 2]; agents.len()];
                for out in outputs? {
                    u[out.agent] = agents[out.agent].decrypt_and_apply(&out)?;
                }
                Ok((u, enc, eval))
            }
            Controllers::Quantized { agents, edge } => {
                let payloads = agents
                    .iter_mut()
                    .map(|a| a.sense(m, graph))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut u = vec![[0.0; 2]; agents.len()];
                for out in edge.evaluate(&payloads)? {
                    u[out.agent] = agents[out.agent].apply_integer(&out);
                }
                Ok((u, Duration::ZERO, Duration::ZERO))
            }
            Controllers::Float { xi } => {
                let g = scenario.gains();
                let u = combined_control(m, xi, graph, g.c1, g.c2, scenario.mismatch_term())?;
                let e_tail: Vec<f64> = m.iter().map(|x| x.e_tail).collect();
                *xi = estimator_step_plain(xi, &e_tail, g.kappa, scenario.ts());
                Ok((u, Duration::ZERO, Duration::ZERO))
            }
        }
    }
}

/// Runs one pipeline for the scenario's horizon. Returns `horizon + 1` states.
pub fn run_pipeline(scenario: &Scenario, pipeline: Pipeline) -> Result<Vec<PipelineStep>, SimError> {
    let graph = scenario.graph();
    let mu = scenario.mismatch();
    let positions = scenario.initial_positions();
    let measurements = measure(&positions, graph, mu).map_err(|e| SimError::at(0)(e.into()))?;
    let delay = scenario.delay_steps();
    let mut state = LoopState {
        positions,
        measurements,
        pending: (0..delay).map(|_| vec![[0.0; 2]; graph.agents()]).collect(),
    };
    let mut ctl = Controllers::new(scenario, pipeline)?;
    let mut out = Vec::with_capacity(scenario.horizon() + 1);
    out.push(snapshot(
        0,
        &state,
        ctl.mu_hat(scenario),
        Duration::ZERO,
        Duration::ZERO,
    ));
    for t in 0..scenario.horizon() {
        let (u, enc, eval) = ctl.step(scenario, &state.measurements).map_err(SimError::at(t))?;
        state.pending.push_back(u);
        let applied = state.pending.pop_front().expect("queue holds at least the new input");
        state.positions = step_agents(&state.positions, &applied, scenario.ts());
        state.measurements = measure(&state.positions, graph, mu).map_err(|e| SimError::at(t + 1)(e.into()))?;
        out.push(snapshot(t + 1, &state, ctl.mu_hat(scenario), enc, eval));
    }
    Ok(out)
}

/// Runs the pipelines selected by the scenario's mode and merges them into one log.
///
/// Positions and distances come from the encrypted loop when it runs, else
/// from the floating-point loop.
pub fn run_closed_loop(scenario: &Scenario) -> Result<TrajectoryLog, SimError> {
    let mode = scenario.mode();
    let encrypted = matches!(mode, Mode::Encrypted | Mode::Both);
    let plain = matches!(mode, Mode::Plaintext | Mode::Both);
    let enc = encrypted
        .then(|| run_pipeline(scenario, Pipeline::Encrypted))
        .transpose()?;
    let oracle = encrypted
        .then(|| run_pipeline(scenario, Pipeline::Quantized))
        .transpose()?;
    let float = plain.then(|| run_pipeline(scenario, Pipeline::Float)).transpose()?;
    let base = enc.as_ref().or(float.as_ref()).expect("at least one pipeline runs");
    let records = base
        .iter()
        .enumerate()
        .map(|(t, s)| StepRecord {
            t: s.t,
            positions: s.positions.clone(),
            dist: s.dist.clone(),
            e_tail: s.e_tail.clone(),
            e_head: s.e_head.clone(),
            mu_hat: enc.as_ref().map(|v| v[t].mu_hat.clone()),
            mu_hat_oracle: oracle.as_ref().map(|v| v[t].mu_hat.clone()),
            mu_hat_plain: float.as_ref().map(|v| v[t].mu_hat.clone()),
            enc_time_us: enc.as_ref().map(|v| v[t].enc_time_us),
            eval_time_us: enc.as_ref().map(|v| v[t].eval_time_us),
        })
        .collect();
    Ok(TrajectoryLog {
        agents: scenario.graph().agents(),
        edges: scenario.graph().edge_count(),
        ts: scenario.ts(),
        mode,
        seed: scenario.seed(),
        records,
    })
}
