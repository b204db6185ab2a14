use neuroevo_demo::{edge_metrics, episode, mutation_walk};
use serde_json::Value;

#[test]
fn episode_has_every_step() {
    let v: Value = serde_json::from_str(&episode(3, 2, true).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 101);
    assert_eq!(v[100]["t"], 100);
}

#[test]
fn walk_starts_at_initial_size() {
    let v: Value = serde_json::from_str(&mutation_walk(1, 5).unwrap()).unwrap();
    assert_eq!(v[0]["n_s"], 254);
    assert_eq!(v.as_array().unwrap().len(), 6);
}

#[test]
fn two_triangles() {
    let v: Value = serde_json::from_str(&edge_metrics("0 1\n1 2\n0 2\n3 4\n4 5\n3 5\n2 3\n", 0).unwrap()).unwrap();
    assert!((v["modularity"].as_f64().unwrap() - 5.0 / 14.0).abs() < 1e-12);
    assert_eq!(v["nodes"], 6);
}
