use std::time::Instant;

use ergm_core::formula::parse_constraint_formula;
use ergm_core::propose::Constraints;
use ergm_core::san::{energy, reciprocal_target_weights, san, weight_from_cov, weight_update, SanConfig};
use ergm_core::{BoundModel, ConstraintSpec, Method, Network};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sexed(n: usize) -> Network {
    let mut net = Network::new(n, false, 0).unwrap();
    let sex: Vec<&str> = (0..n).map(|v| if v % 2 == 0 { "F" } else { "M" }).collect();
    net.attributes_mut().insert_categorical("sex", &sex).unwrap();
    net
}

fn matching_model(net: &Network) -> BoundModel {
    let mut m = BoundModel::from_formula("edges + offset(nodematch(\"sex\")) + offset(concurrent)", net).unwrap();
    m.set_offset_coefs(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap();
    m
}

#[test]
fn matching_example_hits_targets_exactly() {
    let net = sexed(100);
    let model = matching_model(&net);
    let mut hits = 0;
    for seed in 0..100 {
        let t = Instant::now();
        let cfg = SanConfig { seed, ..SanConfig::new(vec![30.0]) };
        let out = san(&net, &model, &ConstraintSpec::default(), &cfg).unwrap();
        assert!(t.elapsed().as_secs_f64() < 5.0);
        if out.stats == vec![30.0, 0.0, 0.0] {
            hits += 1;
        }
        assert_eq!(model.summary_stats(&out.network), out.stats);
    }
    assert!(hits >= 99, "{hits}");
}

#[test]
fn already_on_target_consumes_nothing() {
    let mut net = sexed(10);
    net.add_edge(0, 1).unwrap();
    net.add_edge(2, 3).unwrap();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let out = san(&net, &model, &ConstraintSpec::default(), &SanConfig::new(vec![2.0, 0.0])).unwrap();
    assert_eq!(out.proposals, 0);
    assert!(out.reached);
    assert_eq!(out.network.sorted_edges(), net.sorted_edges());
}

#[test]
fn edges_target_reliability() {
    let net = Network::new(50, false, 0).unwrap();
    let model = BoundModel::from_formula("edges", &net).unwrap();
    let mut hits = 0;
    for seed in 0..100 {
        let cfg = SanConfig { seed, runs: 4, steps_per_run: 250_000, ..SanConfig::new(vec![40.0]) };
        let out = san(&net, &model, &ConstraintSpec::default(), &cfg).unwrap();
        if out.reached && out.proposals <= 1_000_000 {
            hits += 1;
        }
    }
    assert!(hits >= 99, "{hits}");
}

#[test]
fn weight_examples() {
    let w = weight_from_cov(&DMatrix::identity(3, 3)).unwrap();
    assert!((w - DMatrix::identity(3, 3) / 3.0).norm() < 1e-14);
    let w = weight_from_cov(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
    assert!((w[(0, 0)] - 0.2).abs() < 1e-14 && (w[(1, 1)] - 0.8).abs() < 1e-14 && w[(0, 1)].abs() < 1e-14);
    // Rank one: S = v v⊤.
    let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
    let s = &v * v.transpose();
    let w = weight_from_cov(&s).unwrap();
    assert!((w.trace() - 1.0).abs() < 1e-12);
    let vn = &v / v.norm();
    let proj = &vn * vn.transpose();
    assert!((&w - &proj * &w * &proj).norm() < 1e-12);
}

#[test]
fn weight_update_from_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let diffs: Vec<Vec<f64>> = (0..20_000).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)]).collect();
    let w = weight_update(&diffs, 2).unwrap();
    // Variances 4/3 and 1/3.
    assert!((w[(0, 0)] - 0.2).abs() < 0.01 && (w[(1, 1)] - 0.8).abs() < 0.01, "{w}");
    assert!(weight_update(&diffs[..1], 2).is_none());
}

#[test]
fn energy_examples() {
    let w = DMatrix::identity(2, 2) / 2.0;
    assert_eq!(energy(&[3.0, 4.0], &[3.0, 4.0], &w), 0.0);
    assert!((energy(&[4.0, 5.0], &[3.0, 4.0], &w) - 1.0).abs() < 1e-15);
    let w3 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5, 0.7]));
    assert_eq!(energy(&[4.0, 5.0, 9.0], &[3.0, 4.0, 9.0], &w3), energy(&[4.0, 5.0], &[3.0, 4.0], &w));
}

#[test]
fn zero_temperature_energy_never_increases() {
    let mut net = sexed(30);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..60 {
        let (i, j) = (rng.random_range(0..30), rng.random_range(0..30));
        if i != j && !net.has_edge(i, j) {
            net.add_edge(i, j).unwrap();
        }
    }
    let model = BoundModel::from_formula("edges + triangle + nodematch(\"sex\")", &net).unwrap();
    let targets = vec![40.0, 3.0, 20.0];
    let cfg = SanConfig {
        runs: 1,
        steps_per_run: 50_000,
        tau0: Some(0.0),
        trace_interval: 1,
        invcov_override: Some(DMatrix::identity(3, 3)),
        ..SanConfig::new(targets.clone())
    };
    let out = san(&net, &model, &ConstraintSpec::default(), &cfg).unwrap();
    let w = DMatrix::identity(3, 3);
    let mut prev = f64::INFINITY;
    for r in &out.trace {
        let e = energy(&r.stats, &targets, &w);
        assert!(e <= prev);
        assert_eq!(e, r.energy);
        prev = e;
    }
    assert!(out.trace.len() > 100);
}

#[test]
fn infinite_offsets_are_monotone() {
    // Start with same-sex ties present: they may only disappear.
    let mut net = sexed(20);
    for (i, j) in [(0, 2), (4, 6), (1, 3), (0, 1), (2, 5)] {
        net.add_edge(i, j).unwrap();
    }
    let mut model = BoundModel::from_formula("edges + offset(nodematch(\"sex\")) + offset(triangle)", &net).unwrap();
    model.set_offset_coefs(&[f64::NEG_INFINITY, f64::INFINITY]).unwrap();
    let cfg = SanConfig { trace_interval: 1, steps_per_run: 20_000, ..SanConfig::new(vec![12.0]) };
    let out = san(&net, &model, &ConstraintSpec::default(), &cfg).unwrap();
    let mut prev = out.trace[0].stats.clone();
    for r in out.trace.iter().skip(1).chain(std::iter::once(&ergm_core::san::TraceRow {
        proposals: 0,
        stats: out.stats.clone(),
        energy: 0.0,
    })) {
        assert!(r.stats[1] <= prev[1]);
        assert!(r.stats[2] >= prev[2]);
        prev = r.stats.clone();
    }
}

#[test]
fn hard_constraints_hold_on_output() {
    let net = sexed(40);
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let cons = parse_constraint_formula("bd(maxout=2) + blocks(attr=\"sex\", levels2=diag)").unwrap();
    for seed in 0..5 {
        let cfg = SanConfig { seed, method: Method::BdStrat, ..SanConfig::new(vec![35.0, 0.0]) };
        let out = san(&net, &model, &cons, &cfg).unwrap();
        Constraints::from_spec(&cons, &out.network).unwrap().check(&out.network).unwrap();
        assert!(out.reached, "{:?}", out.stats);
    }
}

#[test]
fn temperature_schedule() {
    let cfg = SanConfig::new(vec![1.0]);
    let t: Vec<f64> = (0..4).map(|r| cfg.temperature(r, 3.0)).collect();
    assert_eq!(t, vec![3.0, 2.0, 1.0, 0.0]);
    let one = SanConfig { runs: 1, ..cfg };
    assert_eq!(one.temperature(0, 0.0), 0.0);
}

#[test]
fn reciprocal_weights_normalize() {
    let w = reciprocal_target_weights(&[1.0, 2.0]).unwrap();
    assert!((w[(0, 0)] - 0.8).abs() < 1e-15 && (w[(1, 1)] - 0.2).abs() < 1e-15);
    assert!(reciprocal_target_weights(&[0.0]).is_err());
}

#[test]
fn deterministic_given_seed() {
    let net = sexed(40);
    let model = matching_model(&net);
    let cfg = SanConfig { seed: 9, ..SanConfig::new(vec![12.0]) };
    let a = san(&net, &model, &ConstraintSpec::default(), &cfg).unwrap();
    let b = san(&net, &model, &ConstraintSpec::default(), &cfg).unwrap();
    assert_eq!(a.network.sorted_edges(), b.network.sorted_edges());
    assert_eq!(a.proposals, b.proposals);
}
