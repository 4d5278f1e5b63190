//! Experiment description, validation, and the plaintext-space and noise gates.

use num_bigint::BigUint;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::formation::{build_graph, FormationGraph, Gains, MismatchTerm, Vec2};
use crate::lwe::{error_budget, CipherConfig, CipherParams, Rng};
use crate::quantizer::{min_plaintext_bound, Scale};
use crate::runtime::{CoefficientMode, EstimatorConfig};

use super::SimError;

/// RNG substream for initial-position jitter. Agent `i` uses stream `1 + i`.
const JITTER_STREAM: u64 = 0;

/// Which pipelines a run executes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Encrypted loop, checked against the quantized integer oracle.
    Encrypted,
    /// Unquantized floating-point loop only.
    Plaintext,
    /// Encrypted, quantized-oracle and floating-point loops side by side.
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub agents: usize,
    /// Oriented edges `[tail, head]`, agents numbered from 1.
    pub edges: Vec<[usize; 2]>,
    /// One desired distance per edge, or a single value for all.
    pub d_star: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerSection {
    /// Significant figures of the logarithmic quantizer on control terms.
    pub sp: u32,
    /// Exponent of the fixed scale applied to estimator inputs.
    pub estimator_scale_exp: i32,
    /// Exponent of the estimator state scale `s1`.
    pub s1_exp: i32,
    /// Gains are sent as the integers `c / 10^gain_scale_exp`.
    pub gain_scale_exp: i32,
    /// Assumed bound on `|e_tail - mu_hat|` when sizing the plaintext space.
    pub signal_bound: f64,
    pub coefficients: CoefficientMode,
}

impl Default for QuantizerSection {
    fn default() -> Self {
        Self {
            sp: 4,
            estimator_scale_exp: 4,
            s1_exp: -2,
            gain_scale_exp: 0,
            signal_bound: 1.0,
            coefficients: CoefficientMode::Encrypted,
        }
    }
}

/// Injected run-to-run variability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterSpec {
    /// Each initial position is moved uniformly within a disc of this radius.
    pub position_radius: f64,
    /// Control inputs take effect this many steps after they are computed...
    pub delay_steps: usize,
    /// ...plus `floor(N * delay_steps_per_key_unit)` for key length `N`.
    pub delay_steps_per_key_unit: f64,
}

fn default_ts() -> f64 {
    0.01
}

/// On-disk scenario (TOML).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    /// Required by [`Scenario::new`]; front ends may fill it in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: Mode,
    /// Number of control steps.
    pub horizon: usize,
    #[serde(default = "default_ts")]
    pub ts: f64,
    #[serde(default)]
    pub mismatch_term: MismatchTerm,
    pub initial_positions: Vec<Vec2>,
    /// True mismatch per edge; empty means none.
    #[serde(default)]
    pub mismatch: Vec<f64>,
    pub graph: GraphSpec,
    #[serde(default)]
    pub gains: Gains,
    #[serde(default)]
    pub cipher: CipherConfig,
    #[serde(default)]
    pub quantizer: QuantizerSection,
    #[serde(default)]
    pub jitter: JitterSpec,
}

/// Plaintext-space profile of one encrypted computation: the significant
/// figures of the signals multiplied together and of those summed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathProfile {
    pub path: &'static str,
    pub mult: Vec<u32>,
    pub add: Vec<u32>,
}

impl PathProfile {
    /// `prod_i 10^(2 sp_i) + 2 sum_j 10^(sp_j)`.
    pub fn bound(&self) -> BigUint {
        min_plaintext_bound(&self.mult, &self.add)
    }
}

/// Profiles of the three encrypted computations per agent and step: the
/// log-scaled gradient sum, the fixed-scale sum of estimate-carrying terms,
/// and the estimator update.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpProfile {
    pub gradient: PathProfile,
    pub estimate: PathProfile,
    pub estimator: PathProfile,
}

impl OpProfile {
    pub fn paths(&self) -> [&PathProfile; 3] {
        [&self.gradient, &self.estimate, &self.estimator]
    }
}

impl ScenarioFile {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    file: ScenarioFile,
    seed: u64,
    graph: FormationGraph,
    params: CipherParams,
    estimator: EstimatorConfig,
    mismatch: Vec<f64>,
    c1_int: i128,
    c2_int: i128,
    profile: OpProfile,
    gradient_terms: usize,
    estimate_terms: usize,
}

/// Smallest `k >= 0` with `10^k >= x`.
fn digits_for(x: f64) -> u32 {
    let mut k = 0u32;
    while Scale(k as i32).value() < x {
        k += 1;
    }
    k
}

fn integer_gain(name: &str, c: f64, scale: Scale) -> Result<i128, SimError> {
    let v = scale.remove(c);
    let r = v.round();
    if !v.is_finite() || (v - r).abs() > 1e-9 * r.abs().max(1.0) {
        return Err(SimError::Invalid(format!(
            "gain {name} = {c} is not an integer multiple of 10^{}",
            scale.exp()
        )));
    }
    Ok(r as i128)
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::Invalid(msg.into())
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        Self::new(ScenarioFile::from_toml_str(text)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.file).expect("scenario serializes")
    }

    pub fn new(file: ScenarioFile) -> Result<Self, SimError> {
        let seed = file.seed.ok_or_else(|| invalid("seed is missing"))?;
        let n = file.graph.agents;
        if n < 2 {
            return Err(invalid("at least two agents are required"));
        }
        if file.horizon == 0 {
            return Err(invalid("horizon must be at least one step"));
        }
        if !(file.ts > 0.0 && file.ts.is_finite()) {
            return Err(invalid("ts must be positive"));
        }
        let mut edges = Vec::with_capacity(file.graph.edges.len());
        for (k, &[t, h]) in file.graph.edges.iter().enumerate() {
            if t == 0 || h == 0 {
                return Err(invalid(format!(
                    "edge {} uses agent 0; agents are numbered from 1",
                    k + 1
                )));
            }
            edges.push((t - 1, h - 1));
        }
        if edges.is_empty() {
            return Err(invalid("graph has no edges"));
        }
        let d_star = match file.graph.d_star.len() {
            1 => vec![file.graph.d_star[0]; edges.len()],
            _ => file.graph.d_star.clone(),
        };
        let graph = build_graph(n, &edges, &d_star)?;
        if file.initial_positions.len() != n {
            return Err(invalid(format!(
                "{} initial positions for {n} agents",
                file.initial_positions.len()
            )));
        }
        if file.initial_positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("initial positions must be finite"));
        }
        let mismatch = if file.mismatch.is_empty() {
            vec![0.0; edges.len()]
        } else if file.mismatch.len() == edges.len() {
            file.mismatch.clone()
        } else {
            return Err(invalid(format!(
                "{} mismatch values for {} edges",
                file.mismatch.len(),
                edges.len()
            )));
        };
        if mismatch.iter().any(|x| !x.is_finite()) {
            return Err(invalid("mismatch values must be finite"));
        }
        let gains = file.gains;
        if !(gains.c1 >= 0.0 && gains.c2 >= 0.0 && gains.kappa >= 0.0) {
            return Err(invalid("gains must be non-negative"));
        }
        let jitter = file.jitter;
        if !(jitter.position_radius >= 0.0 && jitter.position_radius.is_finite()) {
            return Err(invalid("jitter.position_radius must be a non-negative number"));
        }
        if !(jitter.delay_steps_per_key_unit >= 0.0 && jitter.delay_steps_per_key_unit.is_finite()) {
            return Err(invalid("jitter.delay_steps_per_key_unit must be a non-negative number"));
        }

        let q = file.quantizer;
        if q.sp == 0 {
            return Err(invalid("quantizer.sp must be at least 1"));
        }
        if !(q.signal_bound > 0.0 && q.signal_bound.is_finite()) {
            return Err(invalid("quantizer.signal_bound must be positive"));
        }
        if q.gain_scale_exp > 0 {
            return Err(invalid("quantizer.gain_scale_exp must not be positive"));
        }
        let gain_scale = Scale(q.gain_scale_exp);
        let c1_int = integer_gain("c1", gains.c1, gain_scale)?;
        let c2_int = integer_gain("c2", gains.c2, gain_scale)?;

        let params = CipherParams::new(file.cipher.clone()).map_err(|e| invalid(e.to_string()))?;
        let estimator = EstimatorConfig {
            kappa: gains.kappa,
            ts: file.ts,
            s1: Scale(q.s1_exp),
            measurement: Scale(q.estimator_scale_exp),
            coefficients: q.coefficients,
        };
        let coef = estimator.coefficient()?;

        let gradient_terms = (0..n).map(|i| graph.incident(i).count()).max().unwrap_or(0);
        let estimate_terms = 2 * (0..n).map(|i| graph.estimated_by(i).count()).max().unwrap_or(0);
        let gain_sp = digits_for(c1_int.abs().max(c2_int.abs()) as f64);
        let sp_d = digits_for(q.signal_bound * Scale(q.estimator_scale_exp).value());
        let coef_sp = digits_for(coef.abs() as f64);
        let sp_state = digits_for(estimator.state_scale().apply(q.signal_bound));
        let profile = OpProfile {
            gradient: PathProfile {
                path: "gradient",
                mult: vec![q.sp, gain_sp],
                add: vec![q.sp + gain_sp; gradient_terms],
            },
            estimate: PathProfile {
                path: "estimate",
                mult: vec![sp_d, gain_sp],
                add: vec![sp_d + gain_sp; estimate_terms],
            },
            estimator: PathProfile {
                path: "estimator",
                mult: vec![sp_d, coef_sp],
                add: vec![sp_state, sp_d + coef_sp],
            },
        };

        let s = Self {
            file,
            seed,
            graph,
            params,
            estimator,
            mismatch,
            c1_int,
            c2_int,
            profile,
            gradient_terms,
            estimate_terms,
        };
        s.check_plaintext_space()?;
        s.check_error_budget()?;
        Ok(s)
    }

    /// Rejects the scenario when any path's worst-case plaintext can wrap.
    fn check_plaintext_space(&self) -> Result<(), SimError> {
        let p: BigUint = self.params.p().magnitude().clone();
        for path in self.profile.paths() {
            let bound = path.bound();
            if bound >= p {
                return Err(SimError::PlaintextGate {
                    path: path.path,
                    p_exp: self.params.p_exp(),
                    bound: bound.to_string(),
                    mult: path.mult.clone(),
                    add: path.add.clone(),
                });
            }
        }
        Ok(())
    }

    /// Worst-case noise of the estimator state at the horizon.
    pub fn estimator_noise_bound(&self) -> u128 {
        let mults = match self.estimator.coefficients {
            CoefficientMode::Encrypted => 2,
            CoefficientMode::Public => 0,
        };
        let coef = self.estimator.coefficient().expect("validated").unsigned_abs() as u64;
        self.params.err_bound() as u128 + error_budget(&self.params, self.file.horizon as u64, mults, coef)
    }

    /// Worst-case noise of a fresh weighted sum of `terms` ciphertexts.
    fn sum_noise_bound(&self, terms: usize) -> u128 {
        let t = terms as u64;
        let mults = match self.estimator.coefficients {
            CoefficientMode::Encrypted => t,
            CoefficientMode::Public => 0,
        };
        let gain = self.c1_int.unsigned_abs().max(self.c2_int.unsigned_abs()) as u64;
        error_budget(&self.params, 1, mults, t * gain)
    }

    /// Worst-case noise of one agent's control output channels (fresh every step).
    pub fn control_noise_bound(&self) -> u128 {
        self.sum_noise_bound(self.gradient_terms.max(self.estimate_terms))
    }

    fn check_error_budget(&self) -> Result<(), SimError> {
        for (path, noise) in [
            ("estimator", self.estimator_noise_bound()),
            ("control", self.control_noise_bound()),
        ] {
            if !self.params.within_budget(noise) {
                return Err(SimError::ErrorBudget {
                    path,
                    noise,
                    l_exp: self.params.l_exp(),
                });
            }
        }
        Ok(())
    }

    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn graph(&self) -> &FormationGraph {
        &self.graph
    }

    pub fn params(&self) -> &CipherParams {
        &self.params
    }

    pub fn estimator(&self) -> &EstimatorConfig {
        &self.estimator
    }

    pub fn mismatch(&self) -> &[f64] {
        &self.mismatch
    }

    pub fn gains(&self) -> Gains {
        self.file.gains
    }

    /// Integer gains `(c1, c2) / 10^gain_scale_exp`.
    pub fn integer_gains(&self) -> (i128, i128) {
        (self.c1_int, self.c2_int)
    }

    pub fn gain_scale(&self) -> Scale {
        Scale(self.file.quantizer.gain_scale_exp)
    }

    pub fn quantizer(&self) -> &QuantizerSection {
        &self.file.quantizer
    }

    pub fn profile(&self) -> &OpProfile {
        &self.profile
    }

    /// Largest number of log-scaled and fixed-scale control terms a single agent sends per step.
    pub fn max_terms(&self) -> (usize, usize) {
        (self.gradient_terms, self.estimate_terms)
    }

    pub fn mode(&self) -> Mode {
        self.file.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> usize {
        self.file.horizon
    }

    pub fn ts(&self) -> f64 {
        self.file.ts
    }

    pub fn mismatch_term(&self) -> MismatchTerm {
        self.file.mismatch_term
    }

    /// Control delay in steps for this scenario's key length.
    pub fn delay_steps(&self) -> usize {
        let j = self.file.jitter;
        j.delay_steps + (self.params.key_length() as f64 * j.delay_steps_per_key_unit).floor() as usize
    }

    /// Initial positions after seeded disc jitter.
    pub fn initial_positions(&self) -> Vec<Vec2> {
        let radius = self.file.jitter.position_radius;
        let mut rng = Rng::from_seed(self.seed).substream(JITTER_STREAM);
        self.file
            .initial_positions
            .iter()
            .map(|&[x, y]| {
                if radius == 0.0 {
                    return [x, y];
                }
                let r = radius * rng.gen::<f64>().sqrt();
                let th = std::f64::consts::TAU * rng.gen::<f64>();
                [x + r * th.cos(), y + r * th.sin()]
            })
            .collect()
    }

    /// Seeded RNG owned by agent `agent`.
    pub fn agent_rng(&self, agent: usize) -> Rng {
        Rng::from_seed(self.seed).substream(1 + agent as u64)
    }

    fn rebuilt(&self, f: impl FnOnce(&mut ScenarioFile)) -> Result<Self, SimError> {
        let mut file = self.file.clone();
        f(&mut file);
        Self::new(file)
    }

    pub fn with_seed(&self, seed: u64) -> Result<Self, SimError> {
        self.rebuilt(|f| f.seed = Some(seed))
    }

    pub fn with_mode(&self, mode: Mode) -> Result<Self, SimError> {
        self.rebuilt(|f| f.mode = mode)
    }

    pub fn with_key_length(&self, n: usize) -> Result<Self, SimError> {
        self.rebuilt(|f| f.cipher.key_length = n)
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self, SimError> {
        self.rebuilt(|f| f.horizon = horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::sim::TRIANGLE_TOML as TRIANGLE;

    fn with(edit: impl FnOnce(&mut ScenarioFile)) -> Result<Scenario, SimError> {
        let mut f: ScenarioFile = toml::from_str(TRIANGLE).unwrap();
        edit(&mut f);
        Scenario::new(f)
    }

    #[test]
    fn parses_defaults() {
        let s = Scenario::from_toml_str(TRIANGLE).unwrap();
        assert_eq!(s.graph().edges(), &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(s.graph().d_star(), &[0.8; 3]);
        assert_eq!(s.mode(), Mode::Both);
        assert_eq!(s.ts(), 0.01);
        assert_eq!(s.integer_gains(), (1, 1));
        assert_eq!(s.estimator().coefficient().unwrap(), 1);
        assert_eq!(s.max_terms(), (2, 2));
        assert_eq!(s.delay_steps(), 0);
    }

    #[test]
    fn toml_round_trip() {
        let s = Scenario::from_toml_str(TRIANGLE).unwrap();
        let again = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s.file(), again.file());
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = format!("bogus = 1\n{TRIANGLE}");
        assert!(matches!(Scenario::from_toml_str(&text), Err(SimError::Parse(_))));
    }

    #[test]
    fn default_profile() {
        let s = Scenario::from_toml_str(TRIANGLE).unwrap();
        let p = s.profile();
        assert_eq!(
            (p.gradient.mult.clone(), p.gradient.add.clone()),
            (vec![4, 0], vec![4, 4])
        );
        assert_eq!(
            (p.estimate.mult.clone(), p.estimate.add.clone()),
            (vec![4, 0], vec![4, 4])
        );
        assert_eq!(
            (p.estimator.mult.clone(), p.estimator.add.clone()),
            (vec![4, 0], vec![6, 4])
        );
        // 10^8 + 2 (2 * 10^4) and 10^8 + 2 (10^6 + 10^4)
        assert_eq!(p.gradient.bound(), BigUint::from(100_040_000u64));
        assert_eq!(p.estimator.bound(), BigUint::from(102_020_000u64));
    }

    #[test]
    fn small_plaintext_space_fails_gate() {
        let err = with(|f| f.cipher.p_exp = 2).unwrap_err();
        match err {
            SimError::PlaintextGate { path, p_exp, .. } => {
                assert_eq!(path, "gradient");
                assert_eq!(p_exp, 2);
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(with(|f| f.cipher.p_exp = 2)
            .unwrap_err()
            .to_string()
            .contains("prod_i 10^(2 sp_i)"));
    }

    #[test]
    fn sp_five_fails_gate_at_default_p() {
        assert!(matches!(
            with(|f| f.quantizer.sp = 5),
            Err(SimError::PlaintextGate { path: "gradient", .. })
        ));
    }

    #[test]
    fn large_estimator_scale_fails_gate() {
        assert!(matches!(
            with(|f| f.quantizer.estimator_scale_exp = 8),
            Err(SimError::PlaintextGate { path: "estimate", .. })
        ));
    }

    #[test]
    fn error_budget_gate() {
        // L = 10^6 cannot carry 10^4 steps of two multiplications.
        let err = with(|f| {
            f.cipher.l_exp = 6;
            f.horizon = 10_000;
        })
        .unwrap_err();
        assert!(matches!(err, SimError::ErrorBudget { path: "estimator", .. }));
        assert!(with(|f| f.horizon = 10_000).is_ok());
    }

    #[test]
    fn estimator_noise_matches_formula() {
        let s = with(|f| f.horizon = 10_000).unwrap();
        // eb + steps (coef eb + 2 d (N+1) 9 eb) with d = 21.
        assert_eq!(s.estimator_noise_bound(), 100 + 10_000 * (100 + 2 * 21 * 11 * 9 * 100));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(with(|f| f.graph.edges[0] = [0, 2]).is_err());
        assert!(with(|f| f.initial_positions.pop().map(|_| ()).unwrap()).is_err());
        assert!(with(|f| f.mismatch = vec![0.1]).is_err());
        assert!(with(|f| f.horizon = 0).is_err());
        assert!(with(|f| f.gains.c1 = 1.5).is_err());
        // 15 and 10 need two more digits of plaintext space per product.
        assert!(matches!(
            with(|f| {
                f.gains.c1 = 1.5;
                f.quantizer.gain_scale_exp = -1;
            }),
            Err(SimError::PlaintextGate { .. })
        ));
        let s = with(|f| {
            f.gains.c1 = 1.5;
            f.quantizer.gain_scale_exp = -1;
            f.quantizer.sp = 2;
            f.quantizer.estimator_scale_exp = 2;
        })
        .unwrap();
        assert_eq!(s.integer_gains(), (15, 10));
        assert!(with(|f| f.gains.kappa = 0.5).is_err());
        assert!(with(|f| f.cipher.key_length = 0).is_err());
    }

    #[test]
    fn jitter_is_seeded_and_bounded() {
        let s = with(|f| f.jitter.position_radius = 0.2).unwrap();
        let a = s.initial_positions();
        assert_eq!(a, s.initial_positions());
        for (p, p0) in a.iter().zip(&s.file().initial_positions) {
            let d = ((p[0] - p0[0]).powi(2) + (p[1] - p0[1]).powi(2)).sqrt();
            assert!(d <= 0.2);
        }
        let b = s.with_seed(8).unwrap().initial_positions();
        assert_ne!(a, b);
        assert_eq!(
            with(|_| {}).unwrap().initial_positions(),
            with(|_| {}).unwrap().file().initial_positions
        );
    }

    #[test]
    fn delay_scales_with_key_length() {
        let s = with(|f| {
            f.jitter.delay_steps = 1;
            f.jitter.delay_steps_per_key_unit = 0.2;
        })
        .unwrap();
        assert_eq!(s.delay_steps(), 3);
        assert_eq!(s.with_key_length(35).unwrap().delay_steps(), 8);
    }
}
