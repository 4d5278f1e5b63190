//! Distance-based formation control with per-edge mismatch estimators, in plaintext.
//!
//! Agents are planar single integrators. Edge `k = (tail, head)` has relative
//! position `z_k = p_tail - p_head`. The head sees `e_head = |z_k| - d*_k` and
//! the tail, whose constraint is off by the mismatch `mu_k`, sees
//! `e_tail = e_head + mu_k`. The tail runs the edge's estimator.
//!
//! Gradient law: `u = -c1 B̄ D_z D_z̃ e`. With estimators each tail agent
//! also applies `+c2 (z_k/|z_k|) mu_hat_k`, so at `mu_hat = mu` its term
//! reduces to `-c1 ẑ_k e_head`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = [f64; 2];

/// Edges shorter than this abort the simulation: the gradient is undefined at `z_k = 0`.
pub const COLLISION_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormationError {
    #[error("invalid edge {index} = ({tail}, {head}): {reason}")]
    InvalidEdge {
        index: usize,
        tail: usize,
        head: usize,
        reason: &'static str,
    },
    #[error("desired distance of edge {0} must be positive")]
    InvalidDistance(usize),
    #[error("agents of edge {edge} are collocated (|z| = {dist:e})")]
    CollocatedAgents { edge: usize, dist: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormationGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    incidence: Vec<Vec<i8>>,
    estimating: Vec<Vec<u8>>,
    d_star: Vec<f64>,
}

/// Builds the incidence matrix `B` (+1 at tail, -1 at head) and the
/// estimating-agent matrix `B_est` (1 at tail). Vertices are 0-based.
pub fn build_graph(n: usize, edges: &[(usize, usize)], d_star: &[f64]) -> Result<FormationGraph, FormationError> {
    if d_star.len() != edges.len() {
        return Err(FormationError::DimensionMismatch(format!(
            "{} edges but {} desired distances",
            edges.len(),
            d_star.len()
        )));
    }
    let mut incidence = vec![vec![0i8; edges.len()]; n];
    let mut estimating = vec![vec![0u8; edges.len()]; n];
    for (k, &(tail, head)) in edges.iter().enumerate() {
        let invalid = |reason| FormationError::InvalidEdge {
            index: k,
            tail,
            head,
            reason,
        };
        if tail >= n || head >= n {
            return Err(invalid("vertex out of range"));
        }
        if tail == head {
            return Err(invalid("self-loop"));
        }
        if !(d_star[k] > 0.0 && d_star[k].is_finite()) {
            return Err(FormationError::InvalidDistance(k));
        }
        incidence[tail][k] = 1;
        incidence[head][k] = -1;
        estimating[tail][k] = 1;
    }
    Ok(FormationGraph {
        n,
        edges: edges.to_vec(),
        incidence,
        estimating,
        d_star: d_star.to_vec(),
    })
}

impl FormationGraph {
    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `B`, `n × |E|`.
    pub fn incidence(&self) -> &[Vec<i8>] {
        &self.incidence
    }

    /// `B_est`, `n × |E|`.
    pub fn estimating(&self) -> &[Vec<u8>] {
        &self.estimating
    }

    pub fn d_star(&self) -> &[f64] {
        &self.d_star
    }

    pub fn tail(&self, edge: usize) -> usize {
        self.edges[edge].0
    }

    pub fn head(&self, edge: usize) -> usize {
        self.edges[edge].1
    }

    /// Edges touching `agent`, in edge order.
    pub fn incident(&self, agent: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(move |&k| self.incidence[agent][k] != 0)
    }

    /// Edges whose estimator `agent` runs.
    pub fn estimated_by(&self, agent: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(move |&k| self.estimating[agent][k] == 1)
    }
}

/// `z = B̄^T p`.
pub fn relative_positions(p: &[Vec2], graph: &FormationGraph) -> Result<Vec<Vec2>, FormationError> {
    if p.len() != graph.n {
        return Err(FormationError::DimensionMismatch(format!(
            "{} positions for {} agents",
            p.len(),
            graph.n
        )));
    }
    Ok((0..graph.edge_count())
        .map(|k| {
            let mut z = [0.0; 2];
            for (i, pi) in p.iter().enumerate() {
                let b = graph.incidence[i][k] as f64;
                z[0] += b * pi[0];
                z[1] += b * pi[1];
            }
            z
        })
        .collect())
}

fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

/// Per-edge sensing result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeMeasurement {
    pub z: Vec2,
    pub dist: f64,
    /// Error seen by the tail (estimating) agent.
    pub e_tail: f64,
    /// Error seen by the head agent.
    pub e_head: f64,
}

impl EdgeMeasurement {
    /// `z_k / |z_k|`.
    pub fn unit(&self) -> Vec2 {
        [self.z[0] / self.dist, self.z[1] / self.dist]
    }
}

/// `e_head = |z_k| - d*_k`, `e_tail = e_head + mu_k`.
pub fn distance_errors(z: &[Vec2], graph: &FormationGraph, mu: &[f64]) -> Result<Vec<EdgeMeasurement>, FormationError> {
    if z.len() != graph.edge_count() || mu.len() != graph.edge_count() {
        return Err(FormationError::DimensionMismatch(format!(
            "expected {} edges, got z: {}, mu: {}",
            graph.edge_count(),
            z.len(),
            mu.len()
        )));
    }
    z.iter()
        .zip(&graph.d_star)
        .zip(mu)
        .enumerate()
        .map(|(k, ((&zk, &d), &m))| {
            let dist = norm(zk);
            if dist < COLLISION_EPS {
                return Err(FormationError::CollocatedAgents { edge: k, dist });
            }
            let e_head = dist - d;
            Ok(EdgeMeasurement {
                z: zk,
                dist,
                e_tail: e_head + m,
                e_head,
            })
        })
        .collect()
}

/// Positions to measurements in one go.
pub fn measure(p: &[Vec2], graph: &FormationGraph, mu: &[f64]) -> Result<Vec<EdgeMeasurement>, FormationError> {
    distance_errors(&relative_positions(p, graph)?, graph, mu)
}

/// `D_z D_z̃ e`: per-edge `z_k e_k / |z_k|`.
fn weighted_directions(z: &[Vec2], e: &[f64]) -> Result<Vec<Vec2>, FormationError> {
    z.iter()
        .zip(e)
        .enumerate()
        .map(|(k, (&zk, &ek))| {
            let dist = norm(zk);
            if dist < COLLISION_EPS {
                return Err(FormationError::CollocatedAgents { edge: k, dist });
            }
            Ok([zk[0] * ek / dist, zk[1] * ek / dist])
        })
        .collect()
}

/// `M̄ v` for an `n × |E|` matrix `M` and stacked 2-vectors `v`.
fn lift<T: Copy + Into<f64>>(m: &[Vec<T>], v: &[Vec2]) -> Vec<Vec2> {
    m.iter()
        .map(|row| {
            row.iter().zip(v).fold([0.0; 2], |acc, (&b, vk)| {
                let b: f64 = b.into();
                [acc[0] + b * vk[0], acc[1] + b * vk[1]]
            })
        })
        .collect()
}

/// `u = -c1 B̄ D_z D_z̃ e`.
pub fn gradient_control(z: &[Vec2], e: &[f64], graph: &FormationGraph, c1: f64) -> Result<Vec<Vec2>, FormationError> {
    let w = weighted_directions(z, e)?;
    Ok(lift(&graph.incidence, &w)
        .into_iter()
        .map(|u| [-c1 * u[0], -c1 * u[1]])
        .collect())
}

/// How the estimate enters the control of the estimating agent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchTerm {
    /// `mu_hat_k` along the unit edge vector `z_k / |z_k|`.
    #[default]
    AlongEdge,
    /// `mu_hat_k / |z_k|` on both coordinates.
    Isotropic,
}

impl MismatchTerm {
    fn weight(self, m: &EdgeMeasurement) -> Vec2 {
        match self {
            MismatchTerm::AlongEdge => m.unit(),
            MismatchTerm::Isotropic => [1.0 / m.dist, 1.0 / m.dist],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub c1: f64,
    pub c2: f64,
    pub kappa: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            kappa: 1.0,
        }
    }
}

/// Gradient law with side-dependent errors plus the estimator compensation:
/// `u = -c1 (B̄_est D_z D_z̃ e_tail + B̄_head D_z D_z̃ e_head) + c2 B̄_est W mu_hat`,
/// where `B_head = B - B_est` and `W` is set by `term`.
pub fn combined_control(
    measurements: &[EdgeMeasurement],
    mu_hat: &[f64],
    graph: &FormationGraph,
    c1: f64,
    c2: f64,
    term: MismatchTerm,
) -> Result<Vec<Vec2>, FormationError> {
    if measurements.len() != graph.edge_count() || mu_hat.len() != graph.edge_count() {
        return Err(FormationError::DimensionMismatch(
            "one measurement and estimate per edge".into(),
        ));
    }
    let z: Vec<Vec2> = measurements.iter().map(|m| m.z).collect();
    let e_tail: Vec<f64> = measurements.iter().map(|m| m.e_tail).collect();
    let e_head: Vec<f64> = measurements.iter().map(|m| m.e_head).collect();
    let head_rows: Vec<Vec<i8>> = graph
        .incidence
        .iter()
        .zip(&graph.estimating)
        .map(|(b, est)| b.iter().zip(est).map(|(&x, &y)| x - y as i8).collect())
        .collect();
    let tail_part = lift(&graph.estimating, &weighted_directions(&z, &e_tail)?);
    let head_part = lift(&head_rows, &weighted_directions(&z, &e_head)?);
    let comp: Vec<Vec2> = measurements
        .iter()
        .zip(mu_hat)
        .map(|(m, &mh)| {
            let w = term.weight(m);
            [w[0] * mh, w[1] * mh]
        })
        .collect();
    let comp_part = lift(&graph.estimating, &comp);
    Ok((0..graph.n)
        .map(|i| {
            [
                -c1 * (tail_part[i][0] + head_part[i][0]) + c2 * comp_part[i][0],
                -c1 * (tail_part[i][1] + head_part[i][1]) + c2 * comp_part[i][1],
            ]
        })
        .collect())
}

/// Which gain multiplies a [`ControlTerm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TermKind {
    /// `ẑ_k e_head` at the head, `ẑ_k (e_tail - mu_hat_k)` at the tail; weighted by `-c1 b_ik`.
    Gradient,
    /// `W_k mu_hat_k`, weighted by `+c2`.
    Mismatch,
    /// `ẑ_k mu_hat_k`, weighted by `-c1`. Restores `-c1 ẑ_k e_tail` at the tail.
    Correction,
}

impl TermKind {
    /// True for terms that carry the estimate rather than a measured error.
    pub fn carries_estimate(self) -> bool {
        !matches!(self, TermKind::Gradient)
    }
}

/// One summand of an agent's control input, before its gain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlTerm {
    pub edge: usize,
    pub kind: TermKind,
    /// Incidence sign `b_ik` for gradient terms, `+1` otherwise.
    pub sign: i8,
    pub vector: Vec2,
}

impl ControlTerm {
    /// Gain applied to this term.
    pub fn gain(&self, c1: f64, c2: f64) -> f64 {
        match self.kind {
            TermKind::Gradient => -c1 * self.sign as f64,
            TermKind::Mismatch => c2,
            TermKind::Correction => -c1,
        }
    }
}

/// Splits agent `agent`'s control into per-edge vectors computable from its
/// own measurements. Summing `gain * vector` reproduces [`combined_control`].
///
/// At an owned edge the error term is taken relative to the estimate,
/// `-c1 ẑ (e_tail - mu_hat) - c1 ẑ mu_hat + c2 W mu_hat`, so that it vanishes
/// at the compensated equilibrium instead of cancelling against the
/// mismatch term after quantization.
pub fn control_terms(
    agent: usize,
    measurements: &[EdgeMeasurement],
    mu_hat: &[f64],
    graph: &FormationGraph,
    term: MismatchTerm,
) -> Vec<ControlTerm> {
    let mut out = Vec::new();
    for k in graph.incident(agent) {
        let m = &measurements[k];
        let sign = graph.incidence[agent][k];
        let e = if graph.estimating[agent][k] == 1 {
            m.e_tail - mu_hat[k]
        } else {
            m.e_head
        };
        let u = m.unit();
        out.push(ControlTerm {
            edge: k,
            kind: TermKind::Gradient,
            sign,
            vector: [u[0] * e, u[1] * e],
        });
    }
    for k in graph.estimated_by(agent) {
        let m = &measurements[k];
        let w = term.weight(m);
        let u = m.unit();
        out.push(ControlTerm {
            edge: k,
            kind: TermKind::Mismatch,
            sign: 1,
            vector: [w[0] * mu_hat[k], w[1] * mu_hat[k]],
        });
        out.push(ControlTerm {
            edge: k,
            kind: TermKind::Correction,
            sign: 1,
            vector: [u[0] * mu_hat[k], u[1] * mu_hat[k]],
        });
    }
    out
}

/// `xi'_k = xi_k + Ts kappa (e_tail_k - xi_k)`.
pub fn estimator_step_plain(xi: &[f64], e_tail: &[f64], kappa: f64, ts: f64) -> Vec<f64> {
    xi.iter().zip(e_tail).map(|(&x, &e)| x + ts * kappa * (e - x)).collect()
}

/// Forward Euler: `p' = p + Ts u`.
pub fn step_agents(p: &[Vec2], u: &[Vec2], ts: f64) -> Vec<Vec2> {
    p.iter()
        .zip(u)
        .map(|(pi, ui)| [pi[0] + ts * ui[0], pi[1] + ts * ui[1]])
        .collect()
}

pub fn centroid(p: &[Vec2]) -> Vec2 {
    let n = p.len() as f64;
    let s = p.iter().fold([0.0; 2], |a, x| [a[0] + x[0], a[1] + x[1]]);
    [s[0] / n, s[1] / n]
}
