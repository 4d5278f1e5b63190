//! Agent side of the loop: sensing, quantization, encryption and decryption.

use std::collections::BTreeMap;

use crate::formation::{control_terms, EdgeMeasurement, FormationGraph, MismatchTerm, TermKind, Vec2};
use crate::lwe::{decrypt, encrypt, keygen, CipherParams, Ciphertext, Plaintext, Rng, SecretKey};
use crate::quantizer::{
    dequantize, log_scale_factor, quantize_uniform, quantize_with, QuantizerError, Scale, UniformQuantizerSpec,
};
use crate::runtime::{encrypt_controller, CoefficientMode, EncryptedController, EstimatorConfig, Multiplier};

use super::edge::{EdgeOutput, IntegerOutput};
use super::SimError;

/// One quantized control term, `values = ⌈S v⌋`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedTerm {
    pub edge: usize,
    pub kind: TermKind,
    pub values: [Plaintext; 2],
}

/// Everything an agent sends in one step, before encryption.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedPayload {
    pub agent: usize,
    /// Logarithmic scale shared by the gradient terms.
    pub scale: Scale,
    pub terms: Vec<QuantizedTerm>,
    /// `(edge, ⌈S_meas (e_tail - mu_hat)⌋)` per owned edge.
    pub estimator: Vec<(usize, Plaintext)>,
    /// Fixed scale `S_meas` of the estimator inputs and of the
    /// estimate-carrying terms.
    pub estimator_scale: Scale,
}

#[derive(Clone, Debug)]
pub struct EncryptedTerm {
    pub edge: usize,
    pub kind: TermKind,
    pub scale: Scale,
    /// Two rows: x and y.
    pub ct: Ciphertext,
}

#[derive(Clone, Debug)]
pub struct EstimatorInput {
    pub edge: usize,
    pub scale: Scale,
    pub ct: Ciphertext,
}

/// Ciphertexts plus public scale metadata, as sent to the edge.
#[derive(Clone, Debug)]
pub struct AgentPayload {
    pub agent: usize,
    pub terms: Vec<EncryptedTerm>,
    pub estimator: Vec<EstimatorInput>,
}

/// Encrypted coefficients an agent hands to the edge once, before the loop.
#[derive(Clone, Debug)]
pub struct AgentProvision {
    pub agent: usize,
    /// `Enc2(-c1 b_ik)` for gradient terms, `Enc2(c2)` for mismatch terms and
    /// `Enc2(-c1)` for correction terms.
    pub gains: Vec<(usize, TermKind, Multiplier)>,
    pub estimators: Vec<(usize, EncryptedController)>,
}

/// Key-free part of an agent: quantizers and the cached estimates.
#[derive(Clone, Debug)]
pub struct AgentCore {
    id: usize,
    sp: u32,
    estimator_scale: Scale,
    state_scale: Scale,
    term: MismatchTerm,
    half_p: Plaintext,
    mu_hat: BTreeMap<usize, f64>,
    /// Rounding remainder of each estimator input, in units of `1/S_meas`,
    /// fed into the next step.
    carry: BTreeMap<usize, f64>,
}

impl AgentCore {
    pub fn new(
        id: usize,
        graph: &FormationGraph,
        sp: u32,
        estimator: &EstimatorConfig,
        term: MismatchTerm,
        params: &CipherParams,
    ) -> Self {
        Self {
            id,
            sp,
            estimator_scale: estimator.measurement,
            state_scale: estimator.state_scale(),
            term,
            half_p: params.half_p(),
            mu_hat: graph.estimated_by(id).map(|k| (k, 0.0)).collect(),
            carry: graph.estimated_by(id).map(|k| (k, 0.0)).collect(),
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    /// Last decrypted estimate for an owned edge.
    pub fn mu_hat(&self, edge: usize) -> Option<f64> {
        self.mu_hat.get(&edge).copied()
    }

    fn check(&self, v: Plaintext) -> Result<Plaintext, QuantizerError> {
        if v.abs() >= self.half_p {
            return Err(QuantizerError::PlaintextOverflow {
                value: v as f64,
                limit: self.half_p,
            });
        }
        Ok(v)
    }

    /// Quantizes this agent's control terms and estimator inputs. Estimator
    /// inputs are rounded with error feedback, so their running sum stays
    /// within half a quantum of the exact one.
    pub fn sense(
        &mut self,
        measurements: &[EdgeMeasurement],
        graph: &FormationGraph,
    ) -> Result<QuantizedPayload, SimError> {
        let mut mu = vec![0.0; graph.edge_count()];
        for (&k, &m) in &self.mu_hat {
            mu[k] = m;
        }
        let terms = control_terms(self.id, measurements, &mu, graph, self.term);
        let peak = terms
            .iter()
            .filter(|t| !t.kind.carries_estimate())
            .flat_map(|t| t.vector)
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let scale = if peak == 0.0 {
            Scale::ONE
        } else {
            log_scale_factor(peak, self.sp)?
        };
        let spec = UniformQuantizerSpec {
            scale: self.estimator_scale,
        };
        let terms = terms
            .iter()
            .map(|t| {
                let q = |v: f64| {
                    if t.kind.carries_estimate() {
                        quantize_uniform(v, spec, self.half_p)
                    } else {
                        self.check(quantize_with(v, scale))
                    }
                };
                Ok(QuantizedTerm {
                    edge: t.edge,
                    kind: t.kind,
                    values: [q(t.vector[0])?, q(t.vector[1])?],
                })
            })
            .collect::<Result<Vec<_>, QuantizerError>>()?;
        let mut estimator = Vec::with_capacity(self.mu_hat.len());
        for (&k, &m) in &self.mu_hat {
            let carry = self.carry.entry(k).or_insert(0.0);
            let exact = self.estimator_scale.apply(measurements[k].e_tail - m) + *carry;
            let d = quantize_uniform(exact, UniformQuantizerSpec { scale: Scale::ONE }, self.half_p)?;
            *carry = exact - d as f64;
            estimator.push((k, d));
        }
        Ok(QuantizedPayload {
            agent: self.id,
            scale,
            terms,
            estimator,
            estimator_scale: self.estimator_scale,
        })
    }

    /// Caches the returned estimator states.
    pub fn store_estimates(&mut self, mu: &[(usize, Plaintext)]) {
        for &(k, xi) in mu {
            if let Some(m) = self.mu_hat.get_mut(&k) {
                *m = dequantize(xi, self.state_scale);
            }
        }
    }

    /// Rescales both channels of the returned integers, caches the estimates
    /// and returns `u`.
    pub fn apply_integer(&mut self, out: &IntegerOutput) -> Vec2 {
        self.store_estimates(&out.mu);
        let part = |u: Option<[Plaintext; 2]>, s: Scale| match u {
            Some([x, y]) => [dequantize(x, s), dequantize(y, s)],
            None => [0.0, 0.0],
        };
        let a = part(out.u, out.u_scale);
        let b = part(out.u_fixed, out.u_fixed_scale);
        [a[0] + b[0], a[1] + b[1]]
    }
}

/// An agent with its secret key. The key never leaves this type.
#[derive(Clone)]
pub struct AgentEndpoint {
    core: AgentCore,
    params: CipherParams,
    key: SecretKey,
    rng: Rng,
}

impl std::fmt::Debug for AgentEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentEndpoint")
            .field("core", &self.core)
            .finish_non_exhaustive()
    }
}

impl AgentEndpoint {
    /// Generates a fresh key from `rng`, which the agent then keeps for its noise.
    pub fn new(core: AgentCore, params: &CipherParams, mut rng: Rng) -> Self {
        let key = keygen(params, &mut rng);
        Self {
            core,
            params: params.clone(),
            key,
            rng,
        }
    }

    pub fn core(&self) -> &AgentCore {
        &self.core
    }

    pub fn core_mut(&mut self) -> &mut AgentCore {
        &mut self.core
    }

    pub fn id(&self) -> usize {
        self.core.id
    }

    /// Encrypts the gains and estimators for the edge.
    pub fn provision(
        &mut self,
        graph: &FormationGraph,
        (c1, c2): (Plaintext, Plaintext),
        estimator: &EstimatorConfig,
        mode: CoefficientMode,
    ) -> Result<AgentProvision, SimError> {
        let i = self.core.id;
        let mut gains = Vec::new();
        for k in graph.incident(i) {
            let b = graph.incidence()[i][k] as Plaintext;
            let m = Multiplier::new(&self.params, &self.key, -c1 * b, mode, &mut self.rng)?;
            gains.push((k, TermKind::Gradient, m));
        }
        let model = estimator.integer_model()?;
        let mut estimators = Vec::new();
        for k in graph.estimated_by(i) {
            let m = Multiplier::new(&self.params, &self.key, c2, mode, &mut self.rng)?;
            gains.push((k, TermKind::Mismatch, m));
            let m = Multiplier::new(&self.params, &self.key, -c1, mode, &mut self.rng)?;
            gains.push((k, TermKind::Correction, m));
            estimators.push((
                k,
                encrypt_controller(&model, &self.params, &self.key, mode, &mut self.rng)?,
            ));
        }
        Ok(AgentProvision {
            agent: i,
            gains,
            estimators,
        })
    }

    /// Encrypts a quantized payload, attaching its scales.
    pub fn encrypt_payload(&mut self, q: &QuantizedPayload) -> Result<AgentPayload, SimError> {
        let terms = q
            .terms
            .iter()
            .map(|t| {
                Ok(EncryptedTerm {
                    edge: t.edge,
                    kind: t.kind,
                    scale: if t.kind.carries_estimate() {
                        q.estimator_scale
                    } else {
                        q.scale
                    },
                    ct: encrypt(&self.params, &self.key, &t.values, &mut self.rng)?,
                })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let estimator = q
            .estimator
            .iter()
            .map(|&(edge, d)| {
                Ok(EstimatorInput {
                    edge,
                    scale: q.estimator_scale,
                    ct: encrypt(&self.params, &self.key, &[d], &mut self.rng)?,
                })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        Ok(AgentPayload {
            agent: self.core.id,
            terms,
            estimator,
        })
    }

    /// Measures, quantizes and encrypts; also returns the plaintext payload.
    pub fn sense_and_encrypt(
        &mut self,
        measurements: &[EdgeMeasurement],
        graph: &FormationGraph,
    ) -> Result<(QuantizedPayload, AgentPayload), SimError> {
        let q = self.core.sense(measurements, graph)?;
        let c = self.encrypt_payload(&q)?;
        Ok((q, c))
    }

    /// Decrypts the edge's output into the integer form the oracle produces.
    pub fn decrypt_output(&self, out: &EdgeOutput) -> IntegerOutput {
        let pair = |ct: &Ciphertext| {
            let v = decrypt(&self.params, &self.key, ct);
            [v[0], v[1]]
        };
        let mu = out
            .mu
            .iter()
            .map(|(k, ct)| (*k, decrypt(&self.params, &self.key, ct)[0]))
            .collect();
        IntegerOutput {
            agent: out.agent,
            u: out.u.as_ref().map(pair),
            u_scale: out.u_scale,
            u_fixed: out.u_fixed.as_ref().map(pair),
            u_fixed_scale: out.u_fixed_scale,
            mu,
        }
    }

    /// Decrypts, rescales, caches `mu_hat` and returns the control input.
    pub fn decrypt_and_apply(&mut self, out: &EdgeOutput) -> Result<Vec2, SimError> {
        if out.agent != self.core.id {
            return Err(SimError::UnknownAgent(out.agent));
        }
        let plain = self.decrypt_output(out);
        Ok(self.core.apply_integer(&plain))
    }

    /// Decrypts one ciphertext under this agent's key.
    pub fn decrypt(&self, ct: &Ciphertext) -> Vec<Plaintext> {
        decrypt(&self.params, &self.key, ct)
    }
}

/// Agent half of one step: measure, quantize, encrypt.
pub fn agent_sense_and_encrypt(
    endpoint: &mut AgentEndpoint,
    measurements: &[EdgeMeasurement],
    graph: &FormationGraph,
) -> Result<AgentPayload, SimError> {
    endpoint.sense_and_encrypt(measurements, graph).map(|(_, c)| c)
}

/// Agent half of the return path: decrypt, rescale, apply.
pub fn agent_decrypt_and_apply(endpoint: &mut AgentEndpoint, out: &EdgeOutput) -> Result<Vec2, SimError> {
    endpoint.decrypt_and_apply(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::measure;
    use crate::runtime::read_mu_hat;
    use crate::sim::edge::{edge_evaluate, EdgeEndpoint};
    use crate::sim::{Scenario, TRIANGLE_TOML};

    fn setup(s: &Scenario) -> (Vec<AgentEndpoint>, EdgeEndpoint) {
        let g = s.graph();
        let est = s.estimator();
        let mut agents: Vec<AgentEndpoint> = (0..g.agents())
            .map(|i| {
                let core = AgentCore::new(i, g, s.quantizer().sp, est, s.mismatch_term(), s.params());
                AgentEndpoint::new(core, s.params(), s.agent_rng(i))
            })
            .collect();
        let mut edge = EdgeEndpoint::new(s.params(), *est, s.gain_scale()).unwrap();
        for a in &mut agents {
            edge.install(a.provision(g, s.integer_gains(), est, est.coefficients).unwrap());
        }
        (agents, edge)
    }

    fn scenario() -> Scenario {
        Scenario::from_toml_str(TRIANGLE_TOML).unwrap()
    }

    /// Triangle with sides 0.8 except edge 1, whose tail sees `d* - mu`.
    fn equilateral() -> Vec<Vec2> {
        vec![[0.0, 0.0], [0.8, 0.0], [0.4, 0.4 * 3f64.sqrt()]]
    }

    #[test]
    fn payload_round_trips_and_respects_sp() {
        let s = scenario();
        let (mut agents, _) = setup(&s);
        let m = measure(&s.initial_positions(), s.graph(), s.mismatch()).unwrap();
        for a in &mut agents {
            let (q, c) = a.sense_and_encrypt(&m, s.graph()).unwrap();
            for (qt, ct) in q.terms.iter().zip(&c.terms) {
                assert_eq!(a.decrypt(&ct.ct), qt.values.to_vec());
                if qt.kind.carries_estimate() {
                    assert_eq!(ct.scale, q.estimator_scale);
                } else {
                    assert_eq!(ct.scale, q.scale);
                    assert!(qt.values.iter().all(|v| v.abs() <= 10i128.pow(s.quantizer().sp)));
                }
            }
            for (&(k, d), input) in q.estimator.iter().zip(&c.estimator) {
                assert_eq!(input.edge, k);
                assert_eq!(a.decrypt(&input.ct), vec![d]);
            }
        }
    }

    #[test]
    fn zero_payloads_give_zero_outputs() {
        let s = scenario();
        let (mut agents, mut edge) = setup(&s);
        let payloads: Vec<AgentPayload> = agents
            .iter_mut()
            .map(|a| {
                let q = QuantizedPayload {
                    agent: a.id(),
                    scale: Scale::ONE,
                    terms: control_terms(
                        a.id(),
                        &measure(&equilateral(), s.graph(), &[0.0; 3]).unwrap(),
                        &[0.0; 3],
                        s.graph(),
                        MismatchTerm::AlongEdge,
                    )
                    .iter()
                    .map(|t| QuantizedTerm {
                        edge: t.edge,
                        kind: t.kind,
                        values: [0, 0],
                    })
                    .collect(),
                    estimator: s.graph().estimated_by(a.id()).map(|k| (k, 0)).collect(),
                    estimator_scale: s.estimator().measurement,
                };
                a.encrypt_payload(&q).unwrap()
            })
            .collect();
        let outs = edge_evaluate(&mut edge, &payloads).unwrap();
        for (a, out) in agents.iter_mut().zip(&outs) {
            let plain = a.decrypt_output(out);
            assert_eq!(plain.u, Some([0, 0]));
            assert!(plain.mu.iter().all(|&(_, v)| v == 0));
            assert_eq!(agent_decrypt_and_apply(a, out).unwrap(), [0.0, 0.0]);
        }
    }

    #[test]
    fn at_biased_target_gradient_and_estimator_inputs_vanish() {
        let s = scenario();
        let (mut agents, mut edge) = setup(&s);
        // Agent 0 owns edge 0; set its estimate to the true mismatch 0.1.
        let xi = 100_000; // 0.1 at state scale 10^6
        agents[0].core.store_estimates(&[(0, xi)]);
        let p = equilateral();
        let m = measure(&p, s.graph(), s.mismatch()).unwrap();
        let mut payloads = Vec::new();
        for a in &mut agents {
            let (q, c) = a.sense_and_encrypt(&m, s.graph()).unwrap();
            for t in q.terms.iter().filter(|t| t.kind == TermKind::Gradient) {
                // e_head = 0 everywhere; the tail of edge 0 carries e_tail = mu.
                if !(a.id() == 0 && t.edge == 0) {
                    assert!(t.values.iter().all(|v| v.abs() <= 1), "{t:?}");
                }
            }
            assert!(q.estimator.iter().all(|&(_, d)| d == 0), "{q:?}");
            payloads.push(c);
        }
        let outs = edge.evaluate(&payloads).unwrap();
        for (a, out) in agents.iter_mut().zip(&outs) {
            let u = a.decrypt_and_apply(out).unwrap();
            assert!(u[0].abs() < 1e-3 && u[1].abs() < 1e-3, "agent {} u = {u:?}", a.id());
        }
    }

    #[test]
    fn single_step_matches_plaintext_control_within_quantization() {
        let s = scenario();
        let (mut agents, mut edge) = setup(&s);
        let m = measure(&s.initial_positions(), s.graph(), s.mismatch()).unwrap();
        let g = s.gains();
        let reference =
            crate::formation::combined_control(&m, &[0.0; 3], s.graph(), g.c1, g.c2, s.mismatch_term()).unwrap();
        let mut payloads = Vec::new();
        let mut bounds = Vec::new();
        for a in &mut agents {
            let (q, c) = a.sense_and_encrypt(&m, s.graph()).unwrap();
            let terms = control_terms(a.id(), &m, &[0.0; 3], s.graph(), s.mismatch_term());
            let peak = terms.iter().flat_map(|t| t.vector).fold(0.0f64, |x, v| x.max(v.abs()));
            let per_term = 0.5 * 10f64.powi(1 - s.quantizer().sp as i32) * peak;
            bounds.push(terms.iter().map(|t| t.gain(g.c1, g.c2).abs() * per_term).sum::<f64>());
            assert!(q.scale.remove(0.5) <= per_term * (1.0 + 1e-12));
            payloads.push(c);
        }
        for (out, a) in edge.evaluate(&payloads).unwrap().iter().zip(&mut agents) {
            let i = a.id();
            let u = a.decrypt_and_apply(out).unwrap();
            for c in 0..2 {
                assert!(
                    (u[c] - reference[i][c]).abs() <= bounds[i],
                    "agent {i}: {u:?} vs {:?}",
                    reference[i]
                );
            }
        }
    }

    #[test]
    fn cached_estimate_equals_bank_readout() {
        let s = scenario();
        let (mut agents, mut edge) = setup(&s);
        let m = measure(&s.initial_positions(), s.graph(), s.mismatch()).unwrap();
        for _ in 0..3 {
            let payloads: Vec<_> = agents
                .iter_mut()
                .map(|a| agent_sense_and_encrypt(a, &m, s.graph()).unwrap())
                .collect();
            for out in edge.evaluate(&payloads).unwrap() {
                agents[out.agent].decrypt_and_apply(&out).unwrap();
            }
        }
        for k in 0..3 {
            let a = &agents[s.graph().tail(k)];
            let read = read_mu_hat(edge.bank(), k, s.params(), &a.key).unwrap();
            assert_eq!(a.core().mu_hat(k), Some(read));
        }
        assert_ne!(agents[0].core().mu_hat(0), Some(0.0));
    }

    #[test]
    fn edge_rejects_bad_payloads() {
        let s = scenario();
        let (mut agents, mut edge) = setup(&s);
        let m = measure(&s.initial_positions(), s.graph(), s.mismatch()).unwrap();
        let (_, mut c) = agents[0].sense_and_encrypt(&m, s.graph()).unwrap();
        let mut unknown = c.clone();
        unknown.agent = 9;
        assert_eq!(edge.evaluate(&[unknown]).unwrap_err(), SimError::UnknownAgent(9));
        c.terms[1].scale = c.terms[0].scale.compose(Scale(1));
        assert!(matches!(
            edge.evaluate(&[c.clone()]),
            Err(SimError::ScaleMismatch { agent: 0, .. })
        ));
        c.terms[1].scale = c.terms[0].scale;
        c.estimator[0].scale = Scale(2);
        assert!(matches!(
            edge.evaluate(&[c]),
            Err(SimError::ScaleMismatch { agent: 0, .. })
        ));
    }

    #[test]
    fn edge_holds_only_reduced_ciphertexts() {
        let s = scenario();
        let (_, edge) = setup(&s);
        assert_eq!(edge.public_coefficients(), 0);
        let mats = edge.stored_matrices();
        // 3 agents x (2 gradient + mismatch + correction) gains, 3 estimators x (F, G) + states.
        assert_eq!(mats.len(), 3 * 4 + 9);
        for m in mats {
            assert!(m
                .iter()
                .flatten()
                .all(|x| x >= &-s.params().half_q().clone() && x < s.params().half_q()));
        }
    }
}
