//! Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use cipherfleet::lwe::{
    add_ct, decrypt, encrypt, encrypt_multiplier, error_budget, keygen, mult_ct, CipherConfig, CipherParams, Rng,
};
use cipherfleet::quantizer::{dequantize, quantize_log};
use cipherfleet::runtime::{estimator_step_encrypted, EncryptedEstimatorBank, EstimatorConfig};
use cipherfleet::sim::{run_closed_loop, run_monte_carlo, MonteCarloOptions, Scenario, ScenarioFile, SimError};
use rand::rngs::StdRng;
use rand::{Rng as _, SeedableRng};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn load(name: &str) -> ScenarioFile {
    let text = std::fs::read_to_string(scenario_path(name)).expect("bundled scenario");
    ScenarioFile::from_toml_str(&text).expect("bundled scenario parses")
}

fn params(p_exp: u32, l_exp: u32) -> CipherParams {
    CipherParams::new(CipherConfig {
        p_exp,
        l_exp,
        key_length: 10,
        err_bound: 100,
        sigma: None,
    })
    .expect("valid params")
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed >= limit {
        return Err(format!("took {elapsed:.2?}, limit {limit:?}"));
    }
    Ok(())
}

fn addition() -> Outcome {
    let params = params(10, 6);
    let mut rng = Rng::from_seed(1);
    let key = keygen(&params, &mut rng);
    let mut draw = StdRng::seed_from_u64(101);
    let quarter = params.half_p() / 2;
    let start = Instant::now();
    let mut failures = 0;
    for _ in 0..1000 {
        let (m1, m2) = (draw.gen_range(-quarter..quarter), draw.gen_range(-quarter..quarter));
        let c = add_ct(
            &params,
            &encrypt(&params, &key, &[m1], &mut rng).unwrap(),
            &encrypt(&params, &key, &[m2], &mut rng).unwrap(),
        )
        .unwrap();
        if decrypt(&params, &key, &c) != vec![m1 + m2] {
            failures += 1;
        }
    }
    let t = start.elapsed();
    if failures > 0 {
        return Err(format!("{failures} of 1000 sums decrypted wrongly"));
    }
    within(t, Duration::from_secs(10))?;
    Ok(format!("1000 sums exact in {t:.2?}"))
}

fn multiplication() -> Outcome {
    let params = params(10, 6);
    let mut rng = Rng::from_seed(2);
    let key = keygen(&params, &mut rng);
    let mut draw = StdRng::seed_from_u64(202);
    let half_p = params.half_p();
    let start = Instant::now();
    let mut failures = 0;
    for _ in 0..1000 {
        let m1: i128 = draw.gen_range(-1000..=1000);
        let lim = half_p / m1.abs().max(1);
        let m2 = draw.gen_range(-lim + 1..lim);
        let mc = encrypt_multiplier(&params, &key, m1, &mut rng).unwrap();
        let c = mult_ct(&params, &mc, &encrypt(&params, &key, &[m2], &mut rng).unwrap()).unwrap();
        if decrypt(&params, &key, &c) != vec![m1 * m2] {
            failures += 1;
        }
    }
    let t = start.elapsed();
    if failures > 0 {
        return Err(format!("{failures} of 1000 products decrypted wrongly"));
    }
    within(t, Duration::from_secs(60))?;
    Ok(format!("1000 products exact in {t:.2?}"))
}

fn infinite_horizon() -> Outcome {
    const STEPS: u64 = 5000;
    let params = params(10, 10);
    let config = EstimatorConfig::default();
    let mut bank = EncryptedEstimatorBank::new(config).unwrap();
    let coef = bank.coefficient();
    // Enc(0) state plus two multiplications per step.
    let bound = params.err_bound() as u128 + error_budget(&params, STEPS, 2, coef.unsigned_abs() as u64);
    if !params.within_budget(bound) {
        return Err(format!("a-priori noise bound {bound} is not below L/2"));
    }
    let mut rng = Rng::from_seed(3);
    let key = keygen(&params, &mut rng);
    bank.install(0, bank.provision(&params, &key, &mut rng).unwrap());
    let model = config.integer_model().unwrap();
    let mut x = model.x0.clone();
    let mut draw = StdRng::seed_from_u64(303);
    for k in 1..=STEPS {
        let d: i128 = draw.gen_range(-10_000..=10_000);
        estimator_step_encrypted(&mut bank, 0, &encrypt(&params, &key, &[d], &mut rng).unwrap()).unwrap();
        x = model.step(&x, &[d]).0;
        let got = decrypt(&params, &key, bank.state(0).unwrap());
        if got != x {
            return Err(format!("step {k}: decrypted {got:?}, oracle {x:?}"));
        }
    }
    Ok(format!("{STEPS} steps exact, noise bound {bound} < L/2"))
}

fn settling() -> Outcome {
    let s = Scenario::new(load("triangle.scenario")).map_err(|e| e.to_string())?;
    if s.horizon() != 10_000 {
        return Err(format!("bundled horizon is {}, expected 10^4", s.horizon()));
    }
    let start = Instant::now();
    let log = run_closed_loop(&s).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    let mu = s.mismatch();
    let tail = &log.records[log.records.len() * 9 / 10..];
    let settled = |pick: fn(&cipherfleet::sim::StepRecord) -> &Option<Vec<f64>>| {
        tail.iter()
            .flat_map(|r| pick(r).as_ref().expect("mode both logs every pipeline").iter().zip(mu))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    let enc = settled(|r| &r.mu_hat);
    let plain = settled(|r| &r.mu_hat_plain);
    let oracle = log.oracle_deviation().expect("oracle ran");
    let dev = log.plain_deviation().expect("plain ran");
    let scale = log
        .records
        .iter()
        .flat_map(|r| r.mu_hat_plain.as_ref().unwrap())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 0.5 * 10f64.powi(1 - s.quantizer().sp as i32) * scale;
    let detail = format!(
        "settled |mu_hat_enc - mu| {enc:.2e}, |mu_hat_plain - mu| {plain:.2e}, oracle deviation {oracle}, \
         plain deviation {dev:.2e} (tol {tol:.2e}), {t:.1?}"
    );
    if enc > 0.005 || plain > 0.005 || oracle != 0.0 || dev > tol {
        return Err(detail);
    }
    within(t, Duration::from_secs(300))?;
    Ok(detail)
}

fn convergence() -> Outcome {
    let s = Scenario::new(load("sweep.scenario")).map_err(|e| e.to_string())?;
    let radius = s.file().jitter.position_radius;
    if radius != 0.2 {
        return Err(format!("sweep jitter radius is {radius}, expected 0.2"));
    }
    let opts = MonteCarloOptions {
        runs: 50,
        key_lengths: vec![10],
        ..MonteCarloOptions::default()
    };
    let summary = run_monte_carlo(&s, &opts).map_err(|e| e.to_string())?;
    let n = &summary.per_n[0];
    let d_star = s.graph().d_star();
    let worst = n
        .final_distances
        .iter()
        .flat_map(|run| run.iter().zip(d_star))
        .fold(0.0f64, |m, (d, s)| m.max((d - s).abs()));
    let detail = format!(
        "{} replicates, worst final |d - d*| = {worst:.2e}",
        n.final_distances.len()
    );
    if n.final_distances.len() != 50 || worst > 0.02 {
        return Err(detail);
    }
    Ok(detail)
}

fn key_length_trend() -> Outcome {
    let s = Scenario::new(load("sweep.scenario"))
        .and_then(|s| s.with_horizon(200))
        .map_err(|e| e.to_string())?;
    let opts = MonteCarloOptions {
        runs: 1,
        threads: Some(1),
        ..MonteCarloOptions::default()
    };
    let summary = run_monte_carlo(&s, &opts).map_err(|e| e.to_string())?;
    let medians: Vec<(usize, usize, f64)> = summary
        .per_n
        .iter()
        .map(|n| (n.key_length, n.enc_times_us.len(), n.timing.p50))
        .collect();
    let detail = medians
        .iter()
        .map(|(n, k, m)| format!("N={n}: {m:.1} us over {k} steps"))
        .collect::<Vec<_>>()
        .join(", ");
    let increasing = medians.windows(2).all(|w| w[1].2 > w[0].2);
    if !increasing || medians.iter().any(|&(_, k, _)| k < 100) {
        return Err(detail);
    }
    Ok(detail)
}

fn quantizer_bound() -> Outcome {
    let mut draw = StdRng::seed_from_u64(707);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let sp: u32 = draw.gen_range(1..=6);
        let mag = 10f64.powf(draw.gen_range(-6.0..=6.0));
        let v = if draw.gen() { mag } else { -mag };
        let (m, scale) = quantize_log(v, sp);
        let rel = (dequantize(m, scale) - v).abs() / v.abs();
        let bound = 0.5 * 10f64.powi(1 - sp as i32);
        worst = worst.max(rel / bound);
        if rel > bound {
            violations += 1;
        }
    }
    let detail = format!("{violations} violations in 10^5 samples, worst error / bound = {worst:.6}");
    if violations > 0 {
        return Err(detail);
    }
    Ok(detail)
}

/// Independent evaluation of `prod 10^(2 sp_i) + 2 sum 10^(sp_j) < 10^p_exp` in `u128`.
fn fits(p_exp: u32, mult: &[u32], add: &[u32]) -> bool {
    let pow = |e: u32| 10u128.checked_pow(e);
    let Some(prod) = mult
        .iter()
        .try_fold(1u128, |a, &s| pow(2 * s).and_then(|x| a.checked_mul(x)))
    else {
        return false;
    };
    let Some(sum) = add
        .iter()
        .try_fold(0u128, |a, &s| pow(s).and_then(|x| a.checked_add(x)))
    else {
        return false;
    };
    matches!(prod.checked_add(2 * sum).zip(pow(p_exp)), Some((b, p)) if b < p)
}

/// Whether the gradient, estimate and estimator paths of a triangle with unit
/// gains and unit signal bound fit under `p`.
fn expected_gate(f: &ScenarioFile) -> bool {
    let q = &f.quantizer;
    let sp_d = q.estimator_scale_exp.max(0) as u32;
    let sp_state = (q.estimator_scale_exp - q.s1_exp).max(0) as u32;
    // Gains of 1 and a unit estimator coefficient need zero digits.
    fits(f.cipher.p_exp, &[q.sp, 0], &[q.sp; 2])
        && fits(f.cipher.p_exp, &[sp_d, 0], &[sp_d; 2])
        && fits(f.cipher.p_exp, &[sp_d, 0], &[sp_state, sp_d])
}

fn plaintext_gate() -> Outcome {
    for name in ["triangle.scenario", "sweep.scenario"] {
        let f = load(name);
        if f.cipher.p_exp != 10 {
            return Err(format!("{name} uses p = 10^{}", f.cipher.p_exp));
        }
        Scenario::new(f).map_err(|e| format!("{name} rejected: {e}"))?;
    }
    let gate = |edit: &dyn Fn(&mut ScenarioFile)| {
        let mut f = load("triangle.scenario");
        f.horizon = 10;
        edit(&mut f);
        Scenario::new(f)
    };
    match gate(&|f| f.cipher.p_exp = 2) {
        Err(SimError::PlaintextGate { .. }) => {}
        other => return Err(format!("p = 10^2 gave {other:?}")),
    }
    match gate(&|f| f.quantizer.sp = 5) {
        Err(SimError::PlaintextGate { .. }) => {}
        other => return Err(format!("sp = 5 gave {other:?}")),
    }
    let mut draw = StdRng::seed_from_u64(808);
    let (mut accepted, mut rejected) = (0, 0);
    for _ in 0..300 {
        let p_exp = draw.gen_range(3..=16);
        let sp = draw.gen_range(1..=8);
        let sd = draw.gen_range(2..=8);
        let r = gate(&|f| {
            f.cipher.p_exp = p_exp;
            f.cipher.l_exp = 11;
            f.quantizer.sp = sp;
            f.quantizer.estimator_scale_exp = sd;
            f.quantizer.s1_exp = -2;
        });
        let mut f = load("triangle.scenario");
        f.cipher.p_exp = p_exp;
        f.quantizer.sp = sp;
        f.quantizer.estimator_scale_exp = sd;
        f.quantizer.s1_exp = -2;
        let want = expected_gate(&f);
        match (&r, want) {
            (Ok(_), true) => accepted += 1,
            (Err(SimError::PlaintextGate { .. }), false) => rejected += 1,
            _ => {
                return Err(format!(
                    "p_exp {p_exp}, sp {sp}, S_meas 10^{sd}: oracle says {want}, got {r:?}"
                ))
            }
        }
    }
    Ok(format!(
        "bundled scenarios pass, p = 10^2 and sp = 5 rejected, {accepted} accepted / {rejected} rejected as predicted"
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = scenario_path("sweep.scenario");
    let run = |out: &str| -> Result<Vec<u8>, String> {
        let path = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_cipherfleet"))
            .args(["run", "--seed", "42", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(&path)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        std::fs::read(&path).map_err(|e| e.to_string())
    };
    let (a, b) = (run("a.csv")?, run("b.csv")?);
    if a != b {
        return Err("CSV outputs differ".into());
    }
    Ok(format!("two runs wrote identical {} byte CSVs", a.len()))
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("homomorphic addition", addition),
        ("homomorphic multiplication", multiplication),
        ("infinite-horizon oracle equivalence", infinite_horizon),
        ("mismatch estimate settling", settling),
        ("formation convergence", convergence),
        ("key-length timing trend", key_length_trend),
        ("quantizer bound", quantizer_bound),
        ("plaintext-space gate", plaintext_gate),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("acceptance {} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
