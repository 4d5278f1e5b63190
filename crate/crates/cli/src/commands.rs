use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use cipherfleet::lwe::serial::key_to_string;
use cipherfleet::lwe::{keygen, CipherConfig, CipherParams, Rng};
use cipherfleet::sim::export::{fmt_real, write_final_csv, write_stats_csv, write_timing_csv, write_trajectory_csv};
use cipherfleet::sim::{
    run_closed_loop, run_monte_carlo, Mode, MonteCarloOptions, Scenario, ScenarioFile, TrajectoryLog,
};

use crate::error::CliError;
use crate::plots;

pub const THREADS_ENV: &str = "CIPHERFLEET_THREADS";

/// Uses `flag`, else `from_file`, else a fresh random seed that is printed.
fn resolve_seed(flag: Option<u64>, from_file: Option<u64>) -> u64 {
    flag.or(from_file).unwrap_or_else(|| {
        let seed = rand::random();
        println!("seed: {seed} (generated)");
        seed
    })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn load_scenario(path: &Path, seed: Option<u64>, mode: Option<Mode>) -> Result<Scenario, CliError> {
    let mut file = ScenarioFile::from_toml_str(&read_text(path)?)?;
    file.seed = Some(resolve_seed(seed, file.seed));
    if let Some(m) = mode {
        file.mode = m;
    }
    Ok(Scenario::new(file)?)
}

pub fn keygen_cmd(params: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let config: CipherConfig =
        toml::from_str(&read_text(params)?).map_err(|e| CliError::Usage(format!("{}: {e}", params.display())))?;
    let params = CipherParams::new(config)?;
    let seed = resolve_seed(seed, None);
    let key = keygen(&params, &mut Rng::from_seed(seed));
    let mut w = create(out)?;
    w.write_all(key_to_string(&params, &key).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(out, e))?;
    println!("q = {}", params.q());
    println!("d = {}", params.digits());
    println!("N = {}", params.key_length());
    Ok(())
}

fn summarize(log: &TrajectoryLog) {
    let last = log.last();
    let list = |v: &[f64]| v.iter().map(|&x| fmt_real(x)).collect::<Vec<_>>().join(", ");
    println!("seed: {}", log.seed);
    println!("steps: {}", log.records.len() - 1);
    println!("final distances: [{}]", list(&last.dist));
    if let Some(m) = &last.mu_hat {
        println!("final mu_hat (encrypted): [{}]", list(m));
    }
    if let Some(m) = &last.mu_hat_plain {
        println!("final mu_hat (plaintext): [{}]", list(m));
    }
}

fn write_log(log: &TrajectoryLog, out: &Path, timings: bool) -> Result<(), CliError> {
    let w = create(out)?;
    write_trajectory_csv(log, w, timings).map_err(|e| CliError::io(out, e))
}

pub fn run_cmd(scenario: &Scenario, out: &Path, timings: bool) -> Result<TrajectoryLog, CliError> {
    let log = run_closed_loop(scenario)?;
    write_log(&log, out, timings)?;
    summarize(&log);
    Ok(log)
}

pub fn compare_cmd(scenario: &Scenario, out: &Path, timings: bool) -> Result<(), CliError> {
    let log = run_cmd(scenario, out, timings)?;
    if let Some(d) = log.oracle_deviation() {
        println!("max |mu_hat_enc - mu_hat_oracle|: {}", fmt_real(d));
    }
    if let Some(d) = log.plain_deviation() {
        println!("max |mu_hat_enc - mu_hat_plain|: {}", fmt_real(d));
    }
    Ok(())
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

pub fn sweep_cmd(
    scenario: &Scenario,
    key_lengths: Vec<usize>,
    runs: usize,
    trace_edge: usize,
    out: &Path,
) -> Result<(), CliError> {
    if trace_edge == 0 {
        return Err(CliError::Usage("--trace-edge is 1-based".into()));
    }
    let opts = MonteCarloOptions {
        runs,
        key_lengths,
        trace_edge: trace_edge - 1,
        threads: threads_from_env()?,
    };
    let summary = run_monte_carlo(scenario, &opts)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for n in &summary.per_n {
        let path = out.join(format!("stats_N{}.csv", n.key_length));
        write_stats_csv(n, scenario.ts(), create(&path)?).map_err(|e| CliError::io(&path, e))?;
        let path = out.join(format!("final_N{}.csv", n.key_length));
        write_final_csv(n, create(&path)?).map_err(|e| CliError::io(&path, e))?;
        let worst = n
            .final_distances
            .iter()
            .flat_map(|run| run.iter().zip(scenario.graph().d_star()))
            .fold(0.0f64, |m, (d, s)| m.max((d - s).abs()));
        println!(
            "N = {}: {} runs, delay {} steps, median encryption {} us, worst final |d - d*| {}",
            n.key_length,
            n.runs,
            n.delay_steps,
            fmt_real(n.timing.p50),
            fmt_real(worst)
        );
    }
    let path = out.join("timing.csv");
    write_timing_csv(&summary, create(&path)?).map_err(|e| CliError::io(&path, e))?;
    println!("seed: {}", scenario.seed());
    Ok(())
}

pub fn export_plots_cmd(input: &Path, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let written = if input.is_dir() {
        plots::sweep_plots(input, out)?
    } else {
        plots::trajectory_plots(input, out)?
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
