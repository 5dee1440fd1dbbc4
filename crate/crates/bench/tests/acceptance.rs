//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::io::Write;
use std::time::Instant;

use ergm_bench::{
    equilibrate, ess_benchmark, generate_population, mixing_fractions, standard_variants, upweight_pmat, EssConfig,
    PopulationSpec, COHAB_COEFS, COHAB_CONSTRAINTS, COHAB_FORMULA,
};
use ergm_core::diag::{batch_means_cov, burnin_series, geweke_test, multivariate_ess};
use ergm_core::formula::{parse_constraint_formula, StratWeights};
use ergm_core::hull::{boundary_multiplier, in_hull, scale_into_hull, simplex_solve, LinearProgram, LpStatus, Sense};
use ergm_core::infer::{
    logistic_fit, mcmle_fit, mple, mple_rows, Init, McmleControl, MpleMode, SeKind, TerminationControl, TerminationKind,
};
use ergm_core::loglik::{bridge, loglik, null_deviance, BridgeControl};
use ergm_core::propose::Constraints;
use ergm_core::sample::{mh_step, run_chain};
use ergm_core::san::{san, SanConfig};
use ergm_core::{BoundModel, ChainSpec, ConstraintSpec, Method, Network, ProposalState, SampleMatrix, SamplerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Mean z-scores of `sample` against `exact`, from batch-means standard errors.
fn z_scores(sample: &SampleMatrix, exact: &[f64]) -> Vec<f64> {
    let mean = sample.mean();
    let sigma = batch_means_cov(sample).unwrap();
    let s = sample.nrows() as f64;
    (0..exact.len()).map(|j| (mean[j] - exact[j]) / (sigma[(j, j)] / s).sqrt()).collect()
}

fn max_abs(z: &[f64]) -> f64 {
    z.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn all_dyads(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn triangles(n: usize, adj: &dyn Fn(usize, usize) -> bool) -> f64 {
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
    t
}

/// (log κ, E[edges], E[triangles]) on n=5 by enumerating all 1024 graphs.
fn enumerate_n5(theta: [f64; 2]) -> (f64, [f64; 2]) {
    let dyads = all_dyads(5);
    let (mut z, mut m) = (0.0, [0.0; 2]);
    for mask in 0u32..1024 {
        let adj = |a: usize, b: usize| {
            let k = dyads.iter().position(|&d| d == (a.min(b), a.max(b))).unwrap();
            mask >> k & 1 == 1
        };
        let e = mask.count_ones() as f64;
        let t = triangles(5, &adj);
        let w = (theta[0] * e + theta[1] * t).exp();
        z += w;
        m[0] += w * e;
        m[1] += w * t;
    }
    (z.ln(), [m[0] / z, m[1] / z])
}

fn sexed(n: usize) -> Network {
    let mut net = Network::new(n, false, 0).unwrap();
    let sex: Vec<&str> = (0..n).map(|v| if v % 2 == 0 { "F" } else { "M" }).collect();
    net.attributes_mut().insert_categorical("sex", &sex).unwrap();
    net
}

fn bernoulli_net(n: usize, p: f64, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = sexed(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                net.add_edge(i, j).unwrap();
            }
        }
    }
    net
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn c1_exact_stationarity() -> Outcome {
    let t = Instant::now();
    let net = Network::new(5, false, 0).unwrap();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let theta = [-0.5, 0.3];
    let (_, exact) = enumerate_n5(theta);
    let cons = ConstraintSpec::default();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for method in [Method::Uniform, Method::Tnt, Method::BdStrat] {
        let spec = ChainSpec { model: &model, coefs: &theta, method, constraints: &cons };
        let cfg = SamplerConfig { burnin: 1000, interval: 1, samplesize: 1_000_000, seed: 101, ..Default::default() };
        let out = run_chain(&net, &spec, &cfg).unwrap();
        let z = max_abs(&z_scores(&out.sample, &exact));
        worst = worst.max(z);
        parts.push(format!("{method:?} max|z|={z:.2}"));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst < 3.0 && secs < 120.0, format!("{} in {secs:.1}s", parts.join(", ")))
}

fn c2_constrained_stationarity() -> Outcome {
    let n = 6;
    let mut net = sexed(n);
    let race: Vec<&str> = (0..n).map(|v| ["A", "B", "C"][(v / 2) % 3]).collect();
    net.attributes_mut().insert_categorical("race", &race).unwrap();
    let model = BoundModel::from_formula("edges + nodematch(\"race\")", &net).unwrap();
    let theta = [0.4, -0.7];
    let race_of = |v: usize| (v / 2) % 3;
    let (mut z, mut m, mut states) = (0.0, [0.0; 2], 0);
    let dyads = all_dyads(n);
    for mask in 0u32..(1 << dyads.len()) {
        let mut deg = [0; 6];
        let (mut ok, mut e, mut nm) = (true, 0.0, 0.0);
        for (k, &(i, j)) in dyads.iter().enumerate() {
            if mask >> k & 1 == 1 {
                deg[i] += 1;
                deg[j] += 1;
                ok &= i % 2 != j % 2;
                e += 1.0;
                nm += (race_of(i) == race_of(j)) as u8 as f64;
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
    let exact = [m[0] / z, m[1] / z];

    let cons = parse_constraint_formula(COHAB_CONSTRAINTS).unwrap();
    let checker = Constraints::from_spec(&cons, &net).unwrap();
    let mut work = net.clone();
    let mut prop = ProposalState::new(Method::BdStrat, &work, &cons).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut stats, mut delta) = (vec![0.0; 2], vec![0.0; 2]);
    let mut sample = SampleMatrix::new(model.names().to_vec());
    let mut violations = 0u64;
    for step in 0..10_000_000u64 {
        if mh_step(&mut work, &model, &theta, &mut prop, &mut stats, &mut delta, &mut rng).unwrap()
            && checker.check(&work).is_err()
        {
            violations += 1;
        }
        if step % 10 == 9 {
            sample.push_row(&stats);
        }
    }
    let zs = z_scores(&sample, &exact);
    outcome(
        max_abs(&zs) < 3.0 && violations == 0,
        format!("{states} constrained states, z=({:.2}, {:.2}), {violations} violating states in 1e7 steps", zs[0], zs[1]),
    )
}

fn c3_mple_identities() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let directed = Network::new(4, true, 0).unwrap();
    let m = BoundModel::from_formula("edges", &directed).unwrap();
    let rows = mple_rows(&directed, &m, &ConstraintSpec::default(), MpleMode::Compressed).unwrap();
    pass &= rows.total_weight() == 12.0;
    notes.push(format!("weights {}", rows.total_weight()));

    let net = bernoulli_net(25, 0.15, 11);
    let model = BoundModel::from_formula("edges", &net).unwrap();
    let fit = mple(&net, &model, &ConstraintSpec::default(), Method::Tnt, SeKind::Naive, &SamplerConfig::default()).unwrap();
    let err = (fit.coefs[0] - logit(net.edge_count() as f64 / 300.0)).abs();
    pass &= err < 1e-10;
    notes.push(format!("logit err {err:.1e}"));

    let net = bernoulli_net(14, 0.3, 5);
    let model = BoundModel::from_formula("edges + triangle + nodematch(\"sex\")", &net).unwrap();
    let rows = mple_rows(&net, &model, &ConstraintSpec::default(), MpleMode::Compressed).unwrap();
    let mut rep = rows.clone();
    rep.response.clear();
    rep.predictor.clear();
    rep.offset.clear();
    rep.weights.clear();
    for k in 0..rows.len() {
        for _ in 0..rows.weights[k] as usize {
            rep.response.push(rows.response[k]);
            rep.predictor.push(rows.predictor[k].clone());
            rep.offset.push(rows.offset[k]);
            rep.weights.push(1.0);
        }
    }
    let (a, b) = (logistic_fit(&rows).unwrap(), logistic_fit(&rep).unwrap());
    let d = a.coefs.iter().zip(&b.coefs).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    pass &= d < 1e-12;
    notes.push(format!("weighted vs replicated {d:.1e}"));

    // Grid plus coordinate refinement on the pseudo-likelihood.
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let mut net = Network::new(n, false, 0).unwrap();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(sigmoid(-1.5 + 0.8 * (x[i] + x[j]))) {
                net.add_edge(i, j).unwrap();
            }
        }
    }
    net.attributes_mut().insert_numeric("x", x.clone()).unwrap();
    let model = BoundModel::from_formula("edges + nodecov(\"x\")", &net).unwrap();
    let fit = mple(&net, &model, &ConstraintSpec::default(), Method::Tnt, SeKind::Naive, &SamplerConfig::default()).unwrap();
    let pl = |t0: f64, t1: f64| {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let eta = t0 + t1 * (x[i] + x[j]);
                s += net.has_edge(i, j) as u8 as f64 * eta - (1.0 + eta.exp()).ln();
            }
        }
        s
    };
    let (mut t0, mut t1, mut best) = (0.0, 0.0, f64::NEG_INFINITY);
    for a in -40..=40 {
        for b in -40..=40 {
            let v = pl(a as f64 * 0.1, b as f64 * 0.1);
            if v > best {
                (best, t0, t1) = (v, a as f64 * 0.1, b as f64 * 0.1);
            }
        }
    }
    let golden = |f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64| {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        while hi - lo > 1e-11 {
            let (a, b) = (hi - r * (hi - lo), lo + r * (hi - lo));
            if f(a) < f(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        t0 = golden(&|a| pl(a, t1), t0 - 0.2, t0 + 0.2);
        t1 = golden(&|b| pl(t0, b), t1 - 0.2, t1 + 0.2);
    }
    let d = (fit.coefs[0] - t0).abs().max((fit.coefs[1] - t1).abs());
    pass &= d < 1e-6;
    notes.push(format!("grid oracle {d:.1e}"));
    outcome(pass, notes.join(", "))
}

fn c4_sandwich() -> Outcome {
    let net = bernoulli_net(20, 0.2, 31);
    let model = BoundModel::from_formula("edges + nodematch(\"sex\")", &net).unwrap();
    let cons = ConstraintSpec::default();
    let naive = mple(&net, &model, &cons, Method::Tnt, SeKind::Naive, &SamplerConfig::default()).unwrap();
    let cfg = SamplerConfig { burnin: 5000, interval: 200, samplesize: 10_000, seed: 4, ..Default::default() };
    let sw = mple(&net, &model, &cons, Method::Tnt, SeKind::Sandwich, &cfg).unwrap();
    let rel = (&sw.vcov - &naive.vcov).norm() / naive.vcov.norm();
    outcome(rel < 0.10, format!("relative Frobenius difference {rel:.4}"))
}

fn c5_simulation_moments() -> Outcome {
    let net = Network::new(10, false, 0).unwrap();
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let cons = ConstraintSpec::default();
    let coefs = [2f64.ln(), 0.0];
    let spec = ChainSpec { model: &model, coefs: &coefs, method: Method::Tnt, constraints: &cons };
    let cfg = SamplerConfig { burnin: 2000, interval: 10, samplesize: 10_000, seed: 505, ..Default::default() };
    let out = run_chain(&net, &spec, &cfg).unwrap();
    let exact = [30.0, 120.0 * 8.0 / 27.0];
    let z = z_scores(&out.sample, &exact);
    let m = out.sample.mean();
    outcome(max_abs(&z) < 3.0, format!("edges {:.2} (z {:.2}), triangles {:.2} (z {:.2})", m[0], z[0], m[1], z[1]))
}

fn c6_san_example() -> Outcome {
    let net = sexed(100);
    let mut model = BoundModel::from_formula("edges + offset(nodematch(\"sex\")) + offset(concurrent)", &net).unwrap();
    model.set_offset_coefs(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap();
    let (mut hits, mut slowest) = (0, 0.0f64);
    for seed in 0..100 {
        let t = Instant::now();
        let cfg = SanConfig { seed, ..SanConfig::new(vec![30.0]) };
        let out = san(&net, &model, &ConstraintSpec::default(), &cfg).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        hits += (model.summary_stats(&out.network) == [30.0, 0.0, 0.0]) as usize;
    }
    outcome(hits >= 99 && slowest < 5.0, format!("(30, 0, 0) in {hits}/100 seeds, slowest {slowest:.3}s"))
}

fn c7_null_deviance() -> Outcome {
    let ok = [0u64, 12, 45].iter().all(|&n| null_deviance(n) == 2.0 * n as f64 * 2f64.ln());
    outcome(ok, format!("N=45 gives {}", null_deviance(45)))
}

fn c8_bridge() -> Outcome {
    let mut net = Network::new(5, false, 0).unwrap();
    for (i, j) in [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)] {
        net.add_edge(i, j).unwrap();
    }
    let model = BoundModel::from_formula("edges + triangle", &net).unwrap();
    let g = model.summary_stats(&net);
    let cons = ConstraintSpec::default();
    let exact_ll = |t: [f64; 2]| t[0] * g[0] + t[1] * g[1] - enumerate_n5(t).0;
    let ctrl = |seed| BridgeControl { j: 16, k: 10_000, interval: 4, seed, ..Default::default() };

    let theta = [-0.5, 0.3];
    let r = loglik(&net, &model, &cons, Method::Tnt, &theta, None, &ctrl(3)).unwrap();
    let err = (r.loglik - exact_ll(theta)).abs();

    let (a, b, mid) = ([-0.5, 0.3], [0.1, -0.4], [-0.2, -0.05]);
    let ab = bridge(&net, &model, &cons, Method::Tnt, &b, &a, &g, &ctrl(10)).unwrap();
    let ba = bridge(&net, &model, &cons, Method::Tnt, &a, &b, &g, &ctrl(11)).unwrap();
    let anti = (ab.delta + ba.delta).abs() / (ab.se.powi(2) + ba.se.powi(2)).sqrt();
    let am = bridge(&net, &model, &cons, Method::Tnt, &mid, &a, &g, &ctrl(12)).unwrap();
    let mb = bridge(&net, &model, &cons, Method::Tnt, &b, &mid, &g, &ctrl(13)).unwrap();
    let add = (am.delta + mb.delta - ab.delta).abs() / (ab.se.powi(2) + am.se.powi(2) + mb.se.powi(2)).sqrt();

    let adaptive = BridgeControl { j: 16, k: 2000, interval: 4, target_se: Some(0.01), seed: 5, ..Default::default() };
    let ad = bridge(&net, &model, &cons, Method::Tnt, &b, &a, &g, &adaptive).unwrap();
    outcome(
        err < 0.05 && anti < 3.0 && add < 3.0 && ad.converged && ad.se <= 0.01,
        format!(
            "|error| {err:.4}, antisymmetry {anti:.2} s.e., additivity {add:.2} s.e., adaptive s.e. {:.4} after {} passes",
            ad.se, ad.passes
        ),
    )
}

fn c9_hull() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let (mut agree, mut tested, mut homog_fail, mut idem_fail) = (0, 0, 0, 0);
    while tested < 1000 {
        let p = rng.random_range(1..=4);
        let s = rng.random_range(1..=50);
        let names = (0..p).map(|j| format!("s{j}")).collect();
        let rows: Vec<Vec<f64>> = (0..s).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let pts = SampleMatrix::from_rows(names, &rows);
        let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.2..1.2)).collect();
        let g = boundary_multiplier(&pts, &x, None).unwrap();
        if (g - 1.0).abs() < 1e-6 {
            continue;
        }
        tested += 1;
        // Feasibility oracle: x = Σ λ_k y_k with λ in the simplex.
        let mut lp = LinearProgram::new(vec![0.0; s], true);
        for j in 0..p {
            lp = lp.constraint(pts.column(j), Sense::Eq, x[j]);
        }
        lp = lp.constraint(vec![1.0; s], Sense::Eq, 1.0);
        let feasible = matches!(simplex_solve(&lp).unwrap(), LpStatus::Optimal { .. });
        agree += (in_hull(&pts, &x).unwrap() == feasible) as usize;

        if s > p {
            let c = pts.mean();
            let g1 = boundary_multiplier(&pts, &x, Some(&c)).unwrap();
            let x2: Vec<f64> = x.iter().zip(&c).map(|(a, b)| b + 2.0 * (a - b)).collect();
            let g2 = boundary_multiplier(&pts, &x2, Some(&c)).unwrap();
            if (g1 - 2.0 * g2).abs() > 1e-9 * (1.0 + g1) {
                homog_fail += 1;
            }
            let once = scale_into_hull(&pts, &x, Some(&c), 0.95).unwrap();
            if scale_into_hull(&pts, &once, Some(&c), 0.95).unwrap() != once {
                idem_fail += 1;
            }
        }
    }
    outcome(
        agree == tested && homog_fail == 0 && idem_fail == 0,
        format!("{agree}/{tested} agree with feasibility LP, {homog_fail} homogeneity and {idem_fail} idempotence failures"),
    )
}

fn c10_mcmle() -> Outcome {
    let net = Network::new(10, false, 0).unwrap();
    let model = BoundModel::from_formula("edges", &net).unwrap();
    let cons = ConstraintSpec::default();
    let control = McmleControl {
        sampler: SamplerConfig { burnin: 4000, interval: 40, samplesize: 1 << 13, seed: 12, ..Default::default() },
        init: Some(Init::Given(vec![0.0])),
        ..Default::default()
    };
    let fit = mcmle_fit(&net, &model, &cons, Method::Tnt, Some(&[30.0]), &control).unwrap();
    let err = (fit.coefs[0] - 2f64.ln()).abs();
    let mut pass = fit.converged && err < 0.02;

    let mut iters = Vec::new();
    for kind in [TerminationKind::Hotelling, TerminationKind::Hummel, TerminationKind::Confidence] {
        let control = McmleControl {
            sampler: SamplerConfig { burnin: 2000, interval: 40, samplesize: 1 << 9, seed: 2, ..Default::default() },
            termination: TerminationControl { kind, ..Default::default() },
            init: Some(Init::Given(vec![0.0])),
            max_iter: 10,
            ..Default::default()
        };
        let f = mcmle_fit(&net, &model, &cons, Method::Tnt, Some(&[30.0]), &control).unwrap();
        pass &= f.converged && f.iterations <= 10;
        iters.push(format!("{}={}", kind.name(), f.iterations));
    }

    let n = 16;
    let theta = [-1.0, 1.0];
    let group: Vec<&str> = (0..n).map(|v| if v % 2 == 0 { "a" } else { "b" }).collect();
    let reps = 200;
    let mut covered = [0usize; 2];
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + rep);
        let mut net = Network::new(n, false, 0).unwrap();
        net.attributes_mut().insert_categorical("g", &group).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                let eta = theta[0] + if (i + j) % 2 == 0 { theta[1] } else { 0.0 };
                if rng.random_bool(sigmoid(eta)) {
                    net.add_edge(i, j).unwrap();
                }
            }
        }
        let model = BoundModel::from_formula("edges + nodematch(\"g\")", &net).unwrap();
        let control = McmleControl {
            sampler: SamplerConfig { burnin: 1000, interval: 20, samplesize: 1024, seed: rep, ..Default::default() },
            max_iter: 20,
            ..Default::default()
        };
        let f = mcmle_fit(&net, &model, &cons, Method::Tnt, None, &control).unwrap();
        let se = f.se();
        for k in 0..2 {
            covered[k] += ((f.coefs[k] - theta[k]).abs() <= 1.959964 * se[k]) as usize;
        }
    }
    let sd = (0.95 * 0.05 / reps as f64).sqrt();
    let rates: Vec<f64> = covered.iter().map(|&c| c as f64 / reps as f64).collect();
    pass &= rates.iter().all(|r| (r - 0.95).abs() <= 4.0 * sd);
    outcome(
        pass,
        format!(
            "edges-only error {err:.4}, iterations {}, coverage ({:.3}, {:.3})",
            iters.join(" "),
            rates[0],
            rates[1]
        ),
    )
}

fn ar1(rho: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sd = (1.0 - rho * rho).sqrt();
    let mut x: f64 = StandardNormal.sample(rng);
    (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            x = rho * x + sd * e;
            x
        })
        .collect()
}

fn c11_diagnostics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let n = 100_000;
    let iid = multivariate_ess(&SampleMatrix::from_series("x", &ar1(0.0, n, &mut rng))).unwrap().ess;
    let ar = multivariate_ess(&SampleMatrix::from_series("x", &ar1(0.5, n, &mut rng))).unwrap().ess;
    let e_iid = (iid / n as f64 - 1.0).abs();
    let e_ar = (ar / (n as f64 / 3.0) - 1.0).abs();

    let reps = 1000;
    let alpha = 0.05;
    let mut rejections = 0;
    for _ in 0..reps {
        let a = ar1(0.5, 5000, &mut rng);
        let b = ar1(0.2, 5000, &mut rng);
        let rows: Vec<Vec<f64>> = a.iter().zip(&b).map(|(&x, &y)| vec![x, y]).collect();
        let g = geweke_test(&SampleMatrix::from_rows(vec!["a".into(), "b".into()], &rows), 0.1, 0.5).unwrap();
        rejections += (g.p_value < alpha) as usize;
    }
    let rate = rejections as f64 / reps as f64;
    let sd = (alpha * (1.0 - alpha) / reps as f64).sqrt();

    let x: Vec<f64> = (1..=2000)
        .map(|s| 5.0 + 3.0 * 2f64.powf(-(s as f64) / 100.0) + 0.01 * { let e: f64 = StandardNormal.sample(&mut rng); e })
        .collect();
    let s0 = burnin_series(&x).s0;
    let e_b = (s0 / 100.0 - 1.0).abs();
    outcome(
        e_iid < 0.15 && e_ar < 0.15 && (rate - alpha).abs() <= 4.0 * sd && e_b < 0.10,
        format!(
            "ESS iid {iid:.0} ({:.1}%), AR(0.5) {ar:.0} ({:.1}%), Geweke rate {rate:.3}, burn-in {s0:.1} vs 100",
            100.0 * e_iid,
            100.0 * e_ar
        ),
    )
}

fn c12_proposal_efficiency() -> Outcome {
    let pop = generate_population(&PopulationSpec::cohab_like(2000), 1).unwrap();
    let model = BoundModel::from_formula(COHAB_FORMULA, &pop).unwrap();
    let cons = parse_constraint_formula(COHAB_CONSTRAINTS).unwrap();
    let start = equilibrate(&pop, &model, &COHAB_COEFS, &cons, 5_000_000, 3).unwrap();
    let mmr = mixing_fractions(&start, "race").unwrap();
    let all = standard_variants(Some(mmr.clone())).unwrap();
    let mut upweighted = all[2].clone();
    upweighted.label = "bdstrat+strat(race.mod)".into();
    let factors = [6f64.sqrt(), 6f64.sqrt(), 12f64.sqrt(), 1.5, 1.0];
    upweighted.constraints.strat.as_mut().unwrap().weights = StratWeights::Pmat(upweight_pmat(&mmr, &factors));
    let variants = vec![all[0].clone(), all[2].clone(), upweighted];
    let cfg = EssConfig { samplesize: 100_000, interval: 100, burnin: 100, warmup_draws: 1000, seed: 1 };
    let tab = ess_benchmark(&start, &model, &COHAB_COEFS, &variants, &cfg).unwrap();
    let tnt = tab.rows[0].min_ess();
    let plain = tab.rows[1].min_ess() / tnt;
    let ratio = tab.rows[2].min_ess() / tnt;
    outcome(
        ratio >= 5.0,
        format!("min ESS ratio {ratio:.2} with upweighted race pmat (edge-fraction pmat {plain:.2}), TNT min ESS {tnt:.0}"),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(usize, &str, fn() -> Outcome)> = vec![
        (1, "exact stationarity", c1_exact_stationarity),
        (2, "constrained stationarity", c2_constrained_stationarity),
        (3, "MPLE identities", c3_mple_identities),
        (4, "sandwich simplification", c4_sandwich),
        (5, "simulation moments", c5_simulation_moments),
        (6, "SAN example", c6_san_example),
        (7, "null deviance", c7_null_deviance),
        (8, "bridge sampling", c8_bridge),
        (9, "hull LP", c9_hull),
        (10, "MCMLE end-to-end", c10_mcmle),
        (11, "diagnostics calibration", c11_diagnostics),
        (12, "proposal efficiency", c12_proposal_efficiency),
    ];
    let results: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, _, f)| s.spawn(*f)).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| outcome(false, "panicked".into())))
            .collect()
    });
    // Written past the test harness capture so the report shows in every run.
    let mut report = String::new();
    let mut failed = Vec::new();
    for ((k, name, _), r) in criteria.iter().zip(&results) {
        report += &format!("criterion {k:>2} {}: {name}: {}\n", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        if !r.pass {
            failed.push(*k);
        }
    }
    report += "criterion 13 DECLARED: not reproducible at desk scale: the million-node version-comparison fit-time table \
               and the 1e9-proposal non-convergence claim (covered by criteria 1, 2 and 12)\n";
    let mut out = std::io::stdout().lock();
    out.write_all(report.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
