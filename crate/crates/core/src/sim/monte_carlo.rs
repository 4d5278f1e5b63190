//! Seeded replicates over key lengths.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, OrderStatistics};

use super::closed_loop::{run_pipeline, Pipeline};
use super::scenario::Scenario;
use super::SimError;

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloOptions {
    pub runs: usize,
    pub key_lengths: Vec<usize>,
    /// Edge whose distance trace is summarized.
    pub trace_edge: usize,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            runs: 50,
            key_lengths: vec![10, 20, 30, 35],
            trace_edge: 0,
            threads: None,
        }
    }
}

/// Mean and 95% confidence interval of the traced distance at step `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStat {
    pub t: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantiles {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Quantiles {
    /// Quantiles of `samples`; all `NaN` when empty.
    pub fn of(samples: &[f64]) -> Self {
        let mut d = Data::new(samples.to_vec());
        let mut q = |tau| if samples.is_empty() { f64::NAN } else { d.quantile(tau) };
        Self {
            p5: q(0.05),
            p25: q(0.25),
            p50: q(0.5),
            p75: q(0.75),
            p95: q(0.95),
        }
    }
}

/// Results for one key length.
#[derive(Clone, Debug, PartialEq)]
pub struct NSummary {
    pub key_length: usize,
    pub runs: usize,
    pub delay_steps: usize,
    pub steps: Vec<StepStat>,
    /// Per-step encryption times of every replicate, in microseconds.
    pub enc_times_us: Vec<f64>,
    pub timing: Quantiles,
    /// Final distance of every edge, per replicate.
    pub final_distances: Vec<Vec<f64>>,
    /// Final decrypted estimates, per replicate.
    pub final_mu_hat: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloSummary {
    pub trace_edge: usize,
    pub per_n: Vec<NSummary>,
}

/// Seed of replicate `r`.
fn replicate_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

struct Replicate {
    trace: Vec<f64>,
    enc_us: Vec<f64>,
    final_dist: Vec<f64>,
    final_mu: Vec<f64>,
}

fn replicate(scenario: &Scenario, r: usize, edge: usize) -> Result<Replicate, SimError> {
    let s = scenario.with_seed(replicate_seed(scenario.seed(), r))?;
    let steps = run_pipeline(&s, Pipeline::Encrypted)?;
    let last = steps.last().expect("initial state");
    Ok(Replicate {
        trace: steps.iter().map(|x| x.dist[edge]).collect(),
        enc_us: steps[1..].iter().map(|x| x.enc_time_us).collect(),
        final_dist: last.dist.clone(),
        final_mu: last.mu_hat.clone(),
    })
}

/// Mean and two-sided 95% Student-t interval; zero width for one sample.
pub fn mean_ci(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, mean, mean);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("dof >= 1").inverse_cdf(0.975);
    let half = t * (var / n).sqrt();
    (mean, mean - half, mean + half)
}

/// Runs `runs` encrypted replicates per key length. Replicate `r` uses seed
/// `seed + r`; results are ordered by replicate and independent of threading.
pub fn run_monte_carlo(scenario: &Scenario, opts: &MonteCarloOptions) -> Result<MonteCarloSummary, SimError> {
    if opts.runs == 0 {
        return Err(SimError::Invalid("runs must be at least 1".into()));
    }
    if opts.trace_edge >= scenario.graph().edge_count() {
        return Err(SimError::Invalid(format!(
            "trace edge {} does not exist",
            opts.trace_edge + 1
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| SimError::Invalid(e.to_string()))?;
    let mut per_n = Vec::with_capacity(opts.key_lengths.len());
    for &n in &opts.key_lengths {
        let s = scenario.with_key_length(n)?;
        let reps: Vec<Replicate> = pool.install(|| {
            (0..opts.runs)
                .into_par_iter()
                .map(|r| replicate(&s, r, opts.trace_edge))
                .collect::<Result<_, _>>()
        })?;
        let steps = (0..=s.horizon())
            .map(|t| {
                let col: Vec<f64> = reps.iter().map(|r| r.trace[t]).collect();
                let (mean, ci_low, ci_high) = mean_ci(&col);
                StepStat {
                    t,
                    mean,
                    ci_low,
                    ci_high,
                }
            })
            .collect();
        let enc_times_us: Vec<f64> = reps.iter().flat_map(|r| r.enc_us.iter().copied()).collect();
        per_n.push(NSummary {
            key_length: n,
            runs: opts.runs,
            delay_steps: s.delay_steps(),
            steps,
            timing: Quantiles::of(&enc_times_us),
            enc_times_us,
            final_distances: reps.iter().map(|r| r.final_dist.clone()).collect(),
            final_mu_hat: reps.iter().map(|r| r.final_mu.clone()).collect(),
        });
    }
    Ok(MonteCarloSummary {
        trace_edge: opts.trace_edge,
        per_n,
    })
}
