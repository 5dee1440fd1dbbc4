use ergm_core::diag::batch_means_cov;
use ergm_core::formula::parse_constraint_formula;
use ergm_core::sample::{adaptive_run, mh_step, run_chain, Chain, ChainSpec, SamplerConfig};
use ergm_core::{BoundModel, ConstraintSpec, Method, Network, ProposalState, SampleMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn all_dyads(n: usize) -> Vec<(usize, usize)> {
    let mut d = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            d.push((i, j));
        }
    }
    d
}

/// Exact E[edges], E[triangles] on n=5 by enumeration of all 1024 graphs.
fn exact_edges_triangle(theta: [f64; 2]) -> [f64; 2] {
    let n = 5;
    let dyads = all_dyads(n);
    let (mut z, mut m) = (0.0, [0.0; 2]);
    for mask in 0u32..(1 << dyads.len()) {
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
        let w = (theta[0] * e + theta[1] * t).exp();
        z += w;
        m[0] += w * e;
        m[1] += w * t;
    }
    [m[0] / z, m[1] / z]
}

fn check_means(sample: &SampleMatrix, exact: &[f64], label: &str) {
    let mean = sample.mean();
    let sigma = batch_means_cov(sample).unwrap();
    let s = sample.nrows() as f64;
    for j in 0..exact.len() {
        let se = (sigma[(j, j)] / s).sqrt();
        let z = (mean[j] - exact[j]) / se;
        assert!(z.abs() < 3.0, "{label} stat {j}: mean {} exact {} z {z}", mean[j], exact[j]);
    }
}

#[test]
fn exact_stationarity_edges_triangle() {
    let net = Network::new(5, false, 0).unwrap();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let theta = [-0.5, 0.3];
    let exact = exact_edges_triangle(theta);
    let cons = ConstraintSpec::default();
    for (method, c) in [(Method::Uniform, &cons), (Method::Tnt, &cons), (Method::BdStrat, &cons)] {
        let spec = ChainSpec { model: &model, coefs: &theta, method, constraints: c };
        let cfg = SamplerConfig { burnin: 1000, interval: 1, samplesize: 200_000, seed: 17, ..Default::default() };
        let out = run_chain(&net, &spec, &cfg).unwrap();
        check_means(&out.sample, &exact, &format!("{method:?}"));
    }
}

fn sexed(n: usize) -> Network {
    let mut net = Network::new(n, false, 0).unwrap();
    let sex: Vec<&str> = (0..n).map(|v| if v % 2 == 0 { "F" } else { "M" }).collect();
    let race: Vec<&str> = (0..n).map(|v| ["A", "B", "C"][(v / 2) % 3]).collect();
    net.attributes_mut().insert_categorical("sex", &sex).unwrap();
    net.attributes_mut().insert_categorical("race", &race).unwrap();
    net
}

#[test]
fn constrained_stationarity_matches_enumeration() {
    let n = 6;
    let net = sexed(n);
    let model = BoundModel::from_formula("edges + nodematch(\"race\")", &net).unwrap();
    let theta = [0.4, -0.7];
    let race = |v: usize| (v / 2) % 3;
    // Independent enumeration of the constrained space.
    let dyads = all_dyads(n);
    let (mut z, mut m, mut states) = (0.0, [0.0; 2], 0);
    for mask in 0u32..(1 << dyads.len()) {
        let mut deg = [0; 6];
        let mut ok = true;
        let (mut e, mut nm) = (0.0, 0.0);
        for (k, &(i, j)) in dyads.iter().enumerate() {
            if mask >> k & 1 == 1 {
                deg[i] += 1;
                deg[j] += 1;
                ok &= i % 2 != j % 2;
                e += 1.0;
                nm += (race(i) == race(j)) as u8 as f64;
            }
        }
        if !ok || deg.iter().any(|&d| d > 1) {
            continue;
        }
        states += 1;
        let w = (theta[0] * e + theta[1] * nm).exp();
        z += w;
        m[0] += w * e;
        m[1] += w * nm;
    }
    assert_eq!(states, 34);
    let exact = [m[0] / z, m[1] / z];

    let cons = parse_constraint_formula("bd(maxout=1) + blocks(attr=\"sex\", levels2=diag)").unwrap();
    for method in [Method::BdStrat, Method::Tnt] {
        let spec = ChainSpec { model: &model, coefs: &theta, method, constraints: &cons };
        let cfg = SamplerConfig { burnin: 100, interval: 2, samplesize: 200_000, seed: 5, ..Default::default() };
        let out = run_chain(&net, &spec, &cfg).unwrap();
        check_means(&out.sample, &exact, &format!("{method:?}"));
    }
}

#[test]
fn never_leaves_constrained_space() {
    let net = sexed(6);
    let model = BoundModel::from_formula("edges", &net).unwrap();
    let cons = parse_constraint_formula("bd(maxout=1) + blocks(attr=\"sex\", levels2=diag)").unwrap();
    let coefs = [1.0];
    let mut work = net.clone();
    let mut prop = ProposalState::new(Method::BdStrat, &work, &cons).unwrap();
    let checker = ergm_core::propose::Constraints::from_spec(&cons, &net).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut stats = vec![0.0];
    let mut delta = vec![0.0];
    for _ in 0..1_000_000 {
        if mh_step(&mut work, &model, &coefs, &mut prop, &mut stats, &mut delta, &mut rng).unwrap() {
            assert!(checker.check(&work).is_ok());
        }
    }
    assert_eq!(stats[0], work.edge_count() as f64);
}

#[test]
fn zero_coefs_always_accept() {
    let net = Network::new(8, false, 0).unwrap();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let cons = ConstraintSpec::default();
    let spec = ChainSpec { model: &model, coefs: &[0.0, 0.0], method: Method::Uniform, constraints: &cons };
    let mut chain = Chain::new(net, &spec, 1).unwrap();
    chain.advance(1000).unwrap();
    assert_eq!(chain.accepted, 1000);
}

#[test]
fn infinite_offset_blocks_same_sex_edges() {
    let net = sexed(10);
    let mut model = BoundModel::from_formula("edges + offset(nodematch(\"sex\"))", &net).unwrap();
    model.set_offset_coefs(&[f64::NEG_INFINITY]).unwrap();
    let coefs = model.full_coefs(&[0.0]);
    let cons = ConstraintSpec::default();
    let spec = ChainSpec { model: &model, coefs: &coefs, method: Method::Tnt, constraints: &cons };
    let cfg = SamplerConfig { burnin: 0, interval: 10, samplesize: 1000, seed: 2, ..Default::default() };
    let out = run_chain(&net, &spec, &cfg).unwrap();
    assert!(out.sample.column(1).iter().all(|&x| x == 0.0));
    assert!(out.sample.column(0).iter().any(|&x| x > 0.0));
}

#[test]
fn erdos_renyi_moments() {
    let net = Network::new(10, false, 0).unwrap();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let cons = ConstraintSpec::default();
    let coefs = [2f64.ln(), 0.0];
    let spec = ChainSpec { model: &model, coefs: &coefs, method: Method::Tnt, constraints: &cons };
    let exact = [30.0, 120.0 * 8.0 / 27.0];
    for interval in [1, 10] {
        let cfg = SamplerConfig { burnin: 2000, interval, samplesize: 20_000, seed: 9, ..Default::default() };
        let out = run_chain(&net, &spec, &cfg).unwrap();
        check_means(&out.sample, &exact, &format!("interval {interval}"));
    }
}

#[test]
fn deterministic_per_seed_and_chain() {
    let net = Network::new(12, false, 0).unwrap();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let cons = ConstraintSpec::default();
    let spec = ChainSpec { model: &model, coefs: &[-1.0, 0.1], method: Method::Tnt, constraints: &cons };
    let cfg = SamplerConfig { burnin: 100, interval: 7, samplesize: 50, chains: 3, seed: 11, ..Default::default() };
    let a = run_chain(&net, &spec, &cfg).unwrap();
    let b = run_chain(&net, &spec, &SamplerConfig { workers: Some(1), ..cfg.clone() }).unwrap();
    assert_eq!(a.sample, b.sample);
    assert_eq!(a.sample.n_chains(), 3);
    assert!(a.sample.to_tsv().starts_with("chain\tedges\ttriangle\n"));
    // Chain k of a multi-chain run is the single chain with seed + k.
    let single = run_chain(&net, &spec, &SamplerConfig { chains: 1, seed: 12, ..cfg.clone() }).unwrap();
    assert_eq!(a.sample.slice(50..100).column(0), single.sample.column(0));
}

#[test]
fn adaptive_fast_mixing_terminates() {
    let net = Network::new(10, false, 0).unwrap();
    let model = BoundModel::from_formula("edges", &net).unwrap();
    let cons = ConstraintSpec::default();
    let coefs = [2f64.ln()];
    let spec = ChainSpec { model: &model, coefs: &coefs, method: Method::Tnt, constraints: &cons };
    let cfg = SamplerConfig {
        burnin: 1000,
        interval: 50,
        samplesize: 256,
        target_ess: Some(64.0),
        seed: 4,
        ..Default::default()
    };
    let out = adaptive_run(&net, &spec, &cfg).unwrap();
    assert!(out.report.converged, "{:?}", out.report);
    assert!(out.report.ess >= 64.0);
    assert!(out.report.rounds <= 5, "{:?}", out.report);
}

#[test]
fn adaptive_sticky_chain_thins() {
    let net = Network::new(12, false, 0).unwrap();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let cons = ConstraintSpec::default();
    let coefs = [-1.5, 0.4];
    let spec = ChainSpec { model: &model, coefs: &coefs, method: Method::Tnt, constraints: &cons };
    let cfg = SamplerConfig {
        burnin: 0,
        interval: 1,
        samplesize: 200,
        target_ess: Some(300.0),
        chains: 2,
        seed: 8,
        ..Default::default()
    };
    let out = adaptive_run(&net, &spec, &cfg).unwrap();
    let r = &out.report;
    assert!(r.thinnings > 0 && r.interval > 1, "{r:?}");
    for ch in out.output.sample.chains() {
        assert!(ch.len() <= 400);
    }
    assert!(r.converged, "{r:?}");
    assert!(r.ess >= 300.0);
    assert_eq!(out.output.sample.interval as u64, r.interval);
}

#[test]
fn adaptive_round_cap_flags_nonconvergence() {
    let net = Network::new(10, false, 0).unwrap();
    let model = BoundModel::from_formula("edges", &net).unwrap();
    let cons = ConstraintSpec::default();
    let spec = ChainSpec { model: &model, coefs: &[0.0], method: Method::Tnt, constraints: &cons };
    let cfg = SamplerConfig {
        burnin: 0,
        interval: 1,
        samplesize: 100,
        target_ess: Some(1e9),
        max_rounds: 3,
        seed: 1,
        ..Default::default()
    };
    let out = adaptive_run(&net, &spec, &cfg).unwrap();
    assert!(!out.report.converged);
    assert_eq!(out.report.rounds, 3);
}

#[test]
fn wrong_coefficient_length_is_rejected() {
    let net = Network::new(5, false, 0).unwrap();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let cons = ConstraintSpec::default();
    let spec = ChainSpec { model: &model, coefs: &[0.0], method: Method::Tnt, constraints: &cons };
    assert!(run_chain(&net, &spec, &SamplerConfig::default()).is_err());
}
