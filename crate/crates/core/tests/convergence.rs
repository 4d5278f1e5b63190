use cipherfleet::sim::{run_pipeline, Pipeline, Scenario, ScenarioFile, SimError};

fn triangle(mismatch: &str, horizon: usize) -> Scenario {
    Scenario::from_toml_str(&format!(
        r#"
seed = 11
horizon = {horizon}
initial_positions = [[0.1, 0.05], [0.9, -0.1], [0.35, 0.75]]
mismatch = {mismatch}

[graph]
agents = 3
edges = [[1, 2], [2, 3], [3, 1]]
d_star = [0.8]
"#
    ))
    .unwrap()
}

#[test]
fn unmismatched_triangle_converges() {
    let steps = run_pipeline(&triangle("[]", 10_000), Pipeline::Float).unwrap();
    let last = steps.last().unwrap();
    assert!(last.dist.iter().all(|d| (d - 0.8).abs() < 1e-3), "{:?}", last.dist);
}

#[test]
fn estimator_recovers_mismatch() {
    let steps = run_pipeline(&triangle("[0.1, -0.05, 0.0]", 10_000), Pipeline::Float).unwrap();
    let last = steps.last().unwrap();
    for (m, want) in last.mu_hat.iter().zip([0.1, -0.05, 0.0]) {
        assert!((m - want).abs() < 5e-3, "{:?}", last.mu_hat);
    }
    assert!(last.e_head.iter().all(|e| e.abs() < 5e-3), "{:?}", last.e_head);
}

#[test]
fn encrypted_loop_matches_oracle_and_approaches_float() {
    let s = triangle("[0.1, 0.0, 0.0]", 300);
    let enc = run_pipeline(&s, Pipeline::Encrypted).unwrap();
    let oracle = run_pipeline(&s, Pipeline::Quantized).unwrap();
    let float = run_pipeline(&s, Pipeline::Float).unwrap();
    for ((a, b), c) in enc.iter().zip(&oracle).zip(&float) {
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.mu_hat, b.mu_hat);
        for (x, y) in a.mu_hat.iter().zip(&c.mu_hat) {
            assert!((x - y).abs() < 1e-4, "t = {}: {x} vs {y}", a.t);
        }
    }
}

#[test]
fn missing_seed_is_rejected() {
    let mut f = ScenarioFile::from_toml_str(&triangle("[]", 1).to_toml_string()).unwrap();
    f.seed = None;
    assert!(matches!(Scenario::new(f), Err(SimError::Invalid(_))));
}
