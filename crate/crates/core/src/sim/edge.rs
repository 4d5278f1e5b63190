//! Edge/cloud side: gain multiplication, summation and the estimator bank,
//! over ciphertexts only. [`IntegerEdge`] runs the same integer arithmetic in
//! plaintext as an oracle.

use std::collections::BTreeMap;

use num_bigint::BigInt;

use crate::formation::{FormationGraph, TermKind};
use crate::lwe::{add_ct, CipherParams, Ciphertext, Plaintext};
use crate::quantizer::Scale;
use crate::runtime::{
    estimator_step_encrypted, EncryptedEstimatorBank, EstimatorConfig, IntegerController, Multiplier,
};

use super::agent::{AgentPayload, AgentProvision, QuantizedPayload};
use super::SimError;

/// Encrypted result for one agent.
#[derive(Clone, Debug)]
pub struct EdgeOutput {
    pub agent: usize,
    /// Sum of the weighted gradient terms; `None` if there were none.
    pub u: Option<Ciphertext>,
    /// Real contribution is `U / u_scale`.
    pub u_scale: Scale,
    /// Sum of the weighted estimate-carrying terms, at a fixed scale.
    pub u_fixed: Option<Ciphertext>,
    pub u_fixed_scale: Scale,
    /// Updated estimator states of the agent's edges.
    pub mu: Vec<(usize, Ciphertext)>,
}

/// Plaintext counterpart of [`EdgeOutput`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegerOutput {
    pub agent: usize,
    pub u: Option<[Plaintext; 2]>,
    pub u_scale: Scale,
    pub u_fixed: Option<[Plaintext; 2]>,
    pub u_fixed_scale: Scale,
    pub mu: Vec<(usize, Plaintext)>,
}

/// Scale of a gain-weighted sum: terms at `S` times gains at `1/10^g`.
fn output_scale(term_scale: Scale, gain_scale: Scale) -> Scale {
    Scale(term_scale.exp() - gain_scale.exp())
}

/// The computing side. Holds no keys and no plaintext signals.
#[derive(Clone, Debug)]
pub struct EdgeEndpoint {
    params: CipherParams,
    gain_scale: Scale,
    gains: BTreeMap<usize, BTreeMap<(usize, TermKind), Multiplier>>,
    owners: BTreeMap<usize, usize>,
    bank: EncryptedEstimatorBank,
}

impl EdgeEndpoint {
    pub fn new(params: &CipherParams, estimator: EstimatorConfig, gain_scale: Scale) -> Result<Self, SimError> {
        Ok(Self {
            params: params.clone(),
            gain_scale,
            gains: BTreeMap::new(),
            owners: BTreeMap::new(),
            bank: EncryptedEstimatorBank::new(estimator)?,
        })
    }

    pub fn install(&mut self, provision: AgentProvision) {
        let slot = self.gains.entry(provision.agent).or_default();
        for (edge, kind, m) in provision.gains {
            slot.insert((edge, kind), m);
        }
        for (edge, est) in provision.estimators {
            self.owners.insert(edge, provision.agent);
            self.bank.install(edge, est);
        }
    }

    pub fn bank(&self) -> &EncryptedEstimatorBank {
        &self.bank
    }

    pub fn agents(&self) -> impl Iterator<Item = usize> + '_ {
        self.gains.keys().copied()
    }

    /// Every `Z_q` matrix the edge stores: multiplier ciphertexts and estimator states.
    pub fn stored_matrices(&self) -> Vec<&[Vec<BigInt>]> {
        let mut mats: Vec<&[Vec<BigInt>]> = Vec::new();
        for slot in self.gains.values() {
            for m in slot.values() {
                if let Multiplier::Encrypted(mc) = m {
                    mats.push(mc.rows());
                }
            }
        }
        for (_, est) in self.bank.estimators() {
            for m in est.coefficients() {
                if let Multiplier::Encrypted(mc) = m {
                    mats.push(mc.rows());
                }
            }
            for ct in est.state() {
                mats.push(ct.rows());
            }
        }
        mats
    }

    /// Number of coefficients held as public integers.
    pub fn public_coefficients(&self) -> usize {
        let gains = self
            .gains
            .values()
            .flat_map(|s| s.values())
            .filter(|m| !m.is_encrypted())
            .count();
        let est = self
            .bank
            .estimators()
            .flat_map(|(_, e)| e.coefficients())
            .filter(|m| !m.is_encrypted())
            .count();
        gains + est
    }

    /// Evaluates one step for every payload, without decrypting anything.
    pub fn evaluate(&mut self, payloads: &[AgentPayload]) -> Result<Vec<EdgeOutput>, SimError> {
        payloads.iter().map(|p| self.evaluate_one(p)).collect()
    }

    fn evaluate_one(&mut self, payload: &AgentPayload) -> Result<EdgeOutput, SimError> {
        let agent = payload.agent;
        let slot = self.gains.get(&agent).ok_or(SimError::UnknownAgent(agent))?;
        let fixed = self.bank.config().measurement;
        let scale = payload
            .terms
            .iter()
            .find(|t| !t.kind.carries_estimate())
            .map_or(Scale::ONE, |t| t.scale);
        let mut u: Option<Ciphertext> = None;
        let mut u_fixed: Option<Ciphertext> = None;
        for term in &payload.terms {
            let (expected, acc) = if term.kind.carries_estimate() {
                (fixed, &mut u_fixed)
            } else {
                (scale, &mut u)
            };
            if term.scale != expected {
                return Err(SimError::ScaleMismatch {
                    agent,
                    first: expected,
                    second: term.scale,
                });
            }
            let gain = slot
                .get(&(term.edge, term.kind))
                .ok_or(SimError::MissingCoefficient { agent, edge: term.edge })?;
            let weighted = gain.apply(&self.params, &term.ct)?;
            *acc = Some(match acc.take() {
                Some(a) => add_ct(&self.params, &a, &weighted)?,
                None => weighted,
            });
        }
        let mut mu = Vec::with_capacity(payload.estimator.len());
        for input in &payload.estimator {
            if input.scale != fixed {
                return Err(SimError::ScaleMismatch {
                    agent,
                    first: fixed,
                    second: input.scale,
                });
            }
            if self.owners.get(&input.edge) != Some(&agent) {
                return Err(SimError::MissingCoefficient {
                    agent,
                    edge: input.edge,
                });
            }
            estimator_step_encrypted(&mut self.bank, input.edge, &input.ct)?;
            mu.push((input.edge, self.bank.state(input.edge)?.clone()));
        }
        Ok(EdgeOutput {
            agent,
            u,
            u_scale: output_scale(scale, self.gain_scale),
            u_fixed,
            u_fixed_scale: output_scale(fixed, self.gain_scale),
            mu,
        })
    }
}

/// Edge half of one step.
pub fn edge_evaluate(edge: &mut EdgeEndpoint, payloads: &[AgentPayload]) -> Result<Vec<EdgeOutput>, SimError> {
    edge.evaluate(payloads)
}

/// Plaintext integer replica of [`EdgeEndpoint`].
#[derive(Clone, Debug)]
pub struct IntegerEdge {
    gain_scale: Scale,
    measurement: Scale,
    gains: BTreeMap<(usize, usize, TermKind), Plaintext>,
    model: IntegerController,
    states: BTreeMap<usize, Vec<Plaintext>>,
}

impl IntegerEdge {
    pub fn new(
        graph: &FormationGraph,
        (c1, c2): (Plaintext, Plaintext),
        estimator: &EstimatorConfig,
        gain_scale: Scale,
    ) -> Result<Self, SimError> {
        let mut gains = BTreeMap::new();
        for i in 0..graph.agents() {
            for k in graph.incident(i) {
                gains.insert((i, k, TermKind::Gradient), -c1 * graph.incidence()[i][k] as Plaintext);
            }
            for k in graph.estimated_by(i) {
                gains.insert((i, k, TermKind::Mismatch), c2);
                gains.insert((i, k, TermKind::Correction), -c1);
            }
        }
        let model = estimator.integer_model()?;
        let states = (0..graph.edge_count()).map(|k| (k, model.x0.clone())).collect();
        Ok(Self {
            gain_scale,
            measurement: estimator.measurement,
            gains,
            model,
            states,
        })
    }

    pub fn evaluate(&mut self, payloads: &[QuantizedPayload]) -> Result<Vec<IntegerOutput>, SimError> {
        payloads.iter().map(|p| self.evaluate_one(p)).collect()
    }

    fn evaluate_one(&mut self, payload: &QuantizedPayload) -> Result<IntegerOutput, SimError> {
        let agent = payload.agent;
        let mut u: Option<[Plaintext; 2]> = None;
        let mut u_fixed: Option<[Plaintext; 2]> = None;
        for term in &payload.terms {
            let g = *self
                .gains
                .get(&(agent, term.edge, term.kind))
                .ok_or(SimError::MissingCoefficient { agent, edge: term.edge })?;
            let acc = if term.kind.carries_estimate() {
                &mut u_fixed
            } else {
                &mut u
            };
            let acc = acc.get_or_insert([0, 0]);
            acc[0] += g * term.values[0];
            acc[1] += g * term.values[1];
        }
        if payload.estimator_scale != self.measurement {
            return Err(SimError::ScaleMismatch {
                agent,
                first: self.measurement,
                second: payload.estimator_scale,
            });
        }
        let mut mu = Vec::with_capacity(payload.estimator.len());
        for &(k, d) in &payload.estimator {
            let x = self
                .states
                .get_mut(&k)
                .ok_or(SimError::MissingCoefficient { agent, edge: k })?;
            let (next, _) = self.model.step(x, &[d]);
            *x = next;
            mu.push((k, x[0]));
        }
        Ok(IntegerOutput {
            agent,
            u,
            u_scale: output_scale(payload.scale, self.gain_scale),
            u_fixed,
            u_fixed_scale: output_scale(self.measurement, self.gain_scale),
            mu,
        })
    }
}
