use ergm_core::formula::parse_constraint_formula;
use ergm_core::loglik::{
    bridge, dyad_independent_loglik, free_dyad_count, loglik, null_deviance, pass_points, voronoi_weights, BridgeControl,
};
use ergm_core::{BoundModel, ConstraintSpec, Method, Network};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn null_deviance_values() {
    assert_eq!(null_deviance(0), 0.0);
    assert!((null_deviance(45) - 62.383_246_250_395_08).abs() < 1e-12);
    assert!((null_deviance(12) - 16.635_532_333_438_69).abs() < 1e-12);
    for n in [0u64, 12, 45] {
        assert_eq!(null_deviance(n), 2.0 * n as f64 * 2f64.ln());
    }
}

fn sexed(n: usize) -> Network {
    let mut net = Network::new(n, false, 0).unwrap();
    let sex: Vec<&str> = (0..n).map(|v| if v % 2 == 0 { "F" } else { "M" }).collect();
    net.attributes_mut().insert_categorical("sex", &sex).unwrap();
    net
}

#[test]
fn free_dyads_exclude_blocked_and_forbidden() {
    let net = sexed(10);
    let model = BoundModel::from_formula("edges", &net).unwrap();
    assert_eq!(free_dyad_count(&net, &model, &ConstraintSpec::default()).unwrap(), 45);
    let cons = parse_constraint_formula("blocks(attr=\"sex\", levels2=diag)").unwrap();
    assert_eq!(free_dyad_count(&net, &model, &cons).unwrap(), 25);
    let mut m2 = BoundModel::from_formula("edges + offset(nodematch(\"sex\"))", &net).unwrap();
    m2.set_offset_coefs(&[f64::NEG_INFINITY]).unwrap();
    assert_eq!(free_dyad_count(&net, &m2, &ConstraintSpec::default()).unwrap(), 25);
}

fn net_with_edges(n: usize, e: usize, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = sexed(n);
    while net.edge_count() < e {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j && !net.has_edge(i, j) {
            net.add_edge(i, j).unwrap();
        }
    }
    net
}

#[test]
fn edges_only_reference_is_bernoulli() {
    let net = net_with_edges(10, 30, 1);
    let model = BoundModel::from_formula("edges", &net).unwrap();
    let r = dyad_independent_loglik(&net, &model, &ConstraintSpec::default()).unwrap();
    let exact = 30.0 * (2.0f64 / 3.0).ln() + 15.0 * (1.0f64 / 3.0).ln();
    assert!((r.loglik - exact).abs() < 1e-10);
    assert!((r.coefs[0] - 2f64.ln()).abs() < 1e-10);
    assert!(!r.boundary);
}

#[test]
fn empty_network_reference_is_boundary() {
    let net = sexed(6);
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let r = dyad_independent_loglik(&net, &model, &ConstraintSpec::default()).unwrap();
    assert!(r.boundary);
    assert_eq!(r.loglik, 0.0);
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-10 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn reference_matches_grid_oracle() {
    let net = net_with_edges(14, 30, 5);
    let model = BoundModel::from_formula("edges + nodematch(\"sex\") + triangle", &net).unwrap();
    let r = dyad_independent_loglik(&net, &model, &ConstraintSpec::default()).unwrap();
    assert_eq!(r.coefs[2], 0.0);
    let ll = |a: f64, b: f64| {
        let mut s = 0.0;
        for i in 0..14 {
            for j in i + 1..14 {
                let eta = a + if i % 2 == j % 2 { b } else { 0.0 };
                let y = net.has_edge(i, j) as u8 as f64;
                s += y * eta - (1.0 + eta.exp()).ln();
            }
        }
        s
    };
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for a in -30..=30 {
        for b in -30..=30 {
            let v = ll(a as f64 * 0.1, b as f64 * 0.1);
            if v > best.0 {
                best = (v, a as f64 * 0.1, b as f64 * 0.1);
            }
        }
    }
    let prof = |a: f64| {
        let b = golden_max(&|b| ll(a, b), best.2 - 0.2, best.2 + 0.2);
        ll(a, b)
    };
    let a = golden_max(&prof, best.1 - 0.2, best.1 + 0.2);
    let b = golden_max(&|b| ll(a, b), best.2 - 0.2, best.2 + 0.2);
    assert!((r.coefs[0] - a).abs() < 1e-6 && (r.coefs[1] - b).abs() < 1e-6, "{:?} vs {a} {b}", r.coefs);
    assert!((r.loglik - ll(a, b)).abs() < 1e-9);
}

/// log κ(θ) for n=5 edges+triangle by enumerating all 1024 graphs.
fn log_kappa(theta: [f64; 2]) -> f64 {
    let n = 5;
    let mut dyads = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            dyads.push((i, j));
        }
    }
    let mut z = 0.0;
    for mask in 0u32..1024 {
        let adj = |a: usize, b: usize| {
            let k = dyads.iter().position(|&d| d == (a.min(b), a.max(b))).unwrap();
            mask >> k & 1 == 1
        };
        let e = mask.count_ones() as f64;
        let mut t = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    if adj(a, b) && adj(b, c) && adj(a, c) {
                        t += 1.0;
                    }
                }
            }
        }
        z += (theta[0] * e + theta[1] * t).exp();
    }
    z.ln()
}

fn oracle_net() -> Network {
    let mut net = Network::new(5, false, 0).unwrap();
    for (i, j) in [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)] {
        net.add_edge(i, j).unwrap();
    }
    net
}

fn exact_loglik(theta: [f64; 2], g: &[f64]) -> f64 {
    theta[0] * g[0] + theta[1] * g[1] - log_kappa(theta)
}

fn oracle_control(seed: u64) -> BridgeControl {
    BridgeControl { j: 16, k: 10_000, interval: 4, seed, ..Default::default() }
}

#[test]
fn bridge_matches_enumeration() {
    let net = oracle_net();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let g = model.summary_stats(&net);
    let theta = [-0.5, 0.3];
    let r = loglik(&net, &model, &ConstraintSpec::default(), Method::Tnt, &theta, None, &oracle_control(3)).unwrap();
    let exact = exact_loglik(theta, &g);
    assert!((r.loglik - exact).abs() < 0.05, "{} vs {exact} (se {})", r.loglik, r.mc_se);
    assert!(r.mc_se > 0.0 && r.mc_se < 0.05);
    assert_eq!(r.null_deviance, null_deviance(10));
    assert!((r.aic - (-2.0 * r.loglik + 4.0)).abs() < 1e-12);
    assert!((r.bic - (-2.0 * r.loglik + 2.0 * 10f64.ln())).abs() < 1e-12);
    // Delta against the exact reference difference.
    let tilde = dyad_independent_loglik(&net, &model, &ConstraintSpec::default()).unwrap();
    let exact_delta = exact - exact_loglik([tilde.coefs[0], 0.0], &g);
    assert!((r.delta_loglik - exact_delta).abs() < 0.05);
    assert!((tilde.loglik - exact_loglik([tilde.coefs[0], 0.0], &g)).abs() < 1e-9);
}

#[test]
fn equal_endpoints_give_zero() {
    let net = oracle_net();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let g = model.summary_stats(&net);
    let t = [0.2, -0.1];
    let b = bridge(&net, &model, &ConstraintSpec::default(), Method::Tnt, &t, &t, &g, &oracle_control(1)).unwrap();
    assert_eq!(b.delta, 0.0);
    assert_eq!(b.se, 0.0);
}

#[test]
fn antisymmetry_and_path_additivity() {
    let net = oracle_net();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let g = model.summary_stats(&net);
    let cons = ConstraintSpec::default();
    let a = [-0.5, 0.3];
    let b = [0.1, -0.4];
    let mid = [-0.2, -0.05];
    let ab = bridge(&net, &model, &cons, Method::Tnt, &b, &a, &g, &oracle_control(10)).unwrap();
    let ba = bridge(&net, &model, &cons, Method::Tnt, &a, &b, &g, &oracle_control(11)).unwrap();
    let s = (ab.se * ab.se + ba.se * ba.se).sqrt();
    assert!((ab.delta + ba.delta).abs() < 3.0 * s, "{} {} se {s}", ab.delta, ba.delta);

    let am = bridge(&net, &model, &cons, Method::Tnt, &mid, &a, &g, &oracle_control(12)).unwrap();
    let mb = bridge(&net, &model, &cons, Method::Tnt, &b, &mid, &g, &oracle_control(13)).unwrap();
    let s = (ab.se.powi(2) + am.se.powi(2) + mb.se.powi(2)).sqrt();
    assert!((am.delta + mb.delta - ab.delta).abs() < 3.0 * s);
    let exact = exact_loglik(b, &g) - exact_loglik(a, &g);
    assert!((ab.delta - exact).abs() < 0.05, "{} vs {exact}", ab.delta);
}

#[test]
fn adaptive_bridge_reaches_target_se() {
    let net = oracle_net();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let g = model.summary_stats(&net);
    let a = [-0.5, 0.3];
    let b = [0.4, -0.6];
    let exact = exact_loglik(b, &g) - exact_loglik(a, &g);
    for target in [0.01, 0.005] {
        let ctrl = BridgeControl { j: 8, k: 2000, interval: 4, target_se: Some(target), seed: 5, ..Default::default() };
        let r = bridge(&net, &model, &ConstraintSpec::default(), Method::Tnt, &b, &a, &g, &ctrl).unwrap();
        assert!(r.converged && r.se <= target, "{r:?}");
        assert!(r.passes > 1);
        let w: f64 = r.points.iter().map(|p| p.weight).sum();
        assert!((w - 1.0).abs() < 1e-12);
        assert!((r.delta - exact).abs() < 4.0 * target + 0.01, "{} vs {exact}", r.delta);
    }
}

#[test]
fn edges_only_bridge_matches_closed_form() {
    let net = Network::new(10, false, 0).unwrap();
    let model = BoundModel::from_formula("edges", &net).unwrap();
    let g = [30.0];
    let (t0, t1) = (0.0, 2f64.ln());
    let exact = (t1 - t0) * 30.0 - 45.0 * ((1.0 + t1.exp()).ln() - (1.0 + t0.exp()).ln());
    let ctrl = BridgeControl { j: 16, k: 5000, interval: 8, seed: 2, ..Default::default() };
    let r = bridge(&net, &model, &ConstraintSpec::default(), Method::Tnt, &[t1], &[t0], &g, &ctrl).unwrap();
    assert!((r.delta - exact).abs() < 0.02, "{} vs {exact}", r.delta);
}

#[test]
fn dyad_independent_models_are_exact() {
    let net = net_with_edges(10, 30, 2);
    let model = BoundModel::from_formula("edges", &net).unwrap();
    let r = loglik(&net, &model, &ConstraintSpec::default(), Method::Tnt, &[2f64.ln()], None, &BridgeControl::default()).unwrap();
    let exact = 30.0 * (2.0f64 / 3.0).ln() + 15.0 * (1.0f64 / 3.0).ln();
    assert!((r.loglik - exact).abs() < 1e-10);
    assert_eq!(r.mc_se, 0.0);
    assert!(r.bridge.is_none());
    assert!(r.to_tsv().starts_with("field\tvalue\nloglik\t"));
}

#[test]
fn degree_bounds_are_rejected() {
    let net = net_with_edges(6, 2, 1);
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let cons = parse_constraint_formula("bd(maxout=3)").unwrap();
    assert!(loglik(&net, &model, &cons, Method::Auto, &[0.0, 0.0], None, &BridgeControl::default()).is_err());
}

proptest! {
    #[test]
    fn voronoi_weights_positive_and_normalized(us in proptest::collection::vec(0.001f64..0.999, 1..40)) {
        let mut us = us;
        us.sort_by(f64::total_cmp);
        us.dedup();
        let w = voronoi_weights(&us);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn passes_never_repeat_points(j in 1usize..20, l in 2usize..60) {
        let first = pass_points(j, 1);
        let later = pass_points(j, l);
        for (a, b) in first.iter().zip(&later) {
            prop_assert!((a - b).abs() > 1e-9);
        }
    }
}
