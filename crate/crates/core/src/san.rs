//! Simulated annealing toward target statistics.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ErgmError, Result};
use crate::formula::ConstraintSpec;
use crate::linalg::pinv;
use crate::model::{apply_toggle_stats, BoundModel};
use crate::network::Network;
use crate::propose::{Method, ProposalState};
use crate::sample_matrix::fmt_cell;

/// Step-3 differences stored per run for the weight update.
pub const MAX_STORED: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SanConfig {
    /// Targets for the free statistics.
    pub targets: Vec<f64>,
    pub runs: usize,
    pub steps_per_run: u64,
    /// Initial temperature; `None` means the number of free statistics.
    pub tau0: Option<f64>,
    /// Also apply finite offset coefficients as bias terms.
    pub finite_offsets: bool,
    /// Fixed weight matrix used instead of the adaptive update.
    pub invcov_override: Option<DMatrix<f64>>,
    /// Record a trace row every this many proposals (0 = none).
    pub trace_interval: u64,
    pub method: Method,
    pub seed: u64,
}

impl SanConfig {
    pub fn new(targets: Vec<f64>) -> Self {
        SanConfig {
            targets,
            runs: 4,
            steps_per_run: 1 << 16,
            tau0: None,
            finite_offsets: false,
            invcov_override: None,
            trace_interval: 0,
            method: Method::Auto,
            seed: 1,
        }
    }

    /// Temperature of run `r` (0-based).
    pub fn temperature(&self, r: usize, tau0: f64) -> f64 {
        if self.runs <= 1 {
            tau0
        } else {
            tau0 * (1.0 - r as f64 / (self.runs - 1) as f64)
        }
    }
}

/// E_W = (g − t)⊤ W (g − t).
pub fn energy(g: &[f64], targets: &[f64], w: &DMatrix<f64>) -> f64 {
    let d = DVector::from_iterator(g.len(), g.iter().zip(targets).map(|(a, b)| a - b));
    (d.transpose() * w * &d)[(0, 0)]
}

/// W = S⁺ / tr(S⁺) for the mean-centred covariance S of `diffs`, or
/// `None` when fewer than p differences are available or S vanishes.
pub fn weight_update(diffs: &[Vec<f64>], p: usize) -> Option<DMatrix<f64>> {
    if diffs.len() < p.max(2) {
        return None;
    }
    weight_from_cov(&centred_cov(diffs, p))
}

/// W = S⁺ / tr(S⁺).
pub fn weight_from_cov(s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sp = pinv(s);
    let tr = sp.trace();
    if tr > 0.0 && tr.is_finite() {
        Some(sp / tr)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub proposals: u64,
    /// Full statistic vector before the proposal.
    pub stats: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct SanOutput {
    pub network: Network,
    /// Full statistic vector of `network`.
    pub stats: Vec<f64>,
    pub energy: f64,
    /// Every free statistic equals its target.
    pub reached: bool,
    pub proposals: u64,
    pub accepted: u64,
    pub runs_done: usize,
    pub weights: DMatrix<f64>,
    /// Covariance of the stored differences of the last completed run.
    pub diff_cov: Option<DMatrix<f64>>,
    pub trace: Vec<TraceRow>,
    pub names: Vec<String>,
}

impl SanOutput {
    pub fn trace_tsv(&self) -> String {
        let mut out = String::from("proposals");
        for n in &self.names {
            write!(out, "\t{n}").unwrap();
        }
        out.push_str("\tenergy\n");
        for r in &self.trace {
            write!(out, "{}", r.proposals).unwrap();
            for v in &r.stats {
                write!(out, "\t{}", fmt_cell(*v)).unwrap();
            }
            writeln!(out, "\t{}", fmt_cell(r.energy)).unwrap();
        }
        out
    }
}

/// Bias term ⟨η, Δg⟩ over offset statistics, signed for the toggle
/// direction, with ∞·0 = 0 and −∞ dominating.
fn offset_bias(eta: &[Option<f64>], delta: &[f64], adding: bool) -> f64 {
    let sign = if adding { 1.0 } else { -1.0 };
    let mut s = 0.0;
    let mut pos_inf = false;
    for (e, &d) in eta.iter().zip(delta) {
        let Some(e) = e else { continue };
        if d == 0.0 {
            continue;
        }
        let t = sign * e * d;
        if t == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        if t == f64::INFINITY {
            pos_inf = true;
        } else {
            s += t;
        }
    }
    if pos_inf {
        f64::INFINITY
    } else {
        s
    }
}

/// Anneals `net` toward `config.targets` under the hard constraints.
pub fn san(net: &Network, model: &BoundModel, constraints: &ConstraintSpec, config: &SanConfig) -> Result<SanOutput> {
    let free = model.free_indices();
    let p = free.len();
    if config.targets.len() != p {
        return Err(ErgmError::InvalidArgument(format!("expected {p} targets, got {}", config.targets.len())));
    }
    if config.targets.iter().any(|t| !t.is_finite()) {
        return Err(ErgmError::InvalidArgument("targets must be finite".into()));
    }
    if config.runs == 0 {
        return Err(ErgmError::InvalidArgument("SAN needs at least one run".into()));
    }
    let tau0 = config.tau0.unwrap_or(p as f64);
    if !(tau0 >= 0.0) {
        return Err(ErgmError::InvalidArgument("initial temperature must be non-negative".into()));
    }
    let mut w = match &config.invcov_override {
        Some(m) if m.nrows() == p && m.ncols() == p => m.clone(),
        Some(_) => return Err(ErgmError::InvalidArgument(format!("weight matrix must be {p}×{p}"))),
        None => DMatrix::identity(p, p) / p.max(1) as f64,
    };
    let eta: Vec<Option<f64>> = model
        .offset_mask()
        .iter()
        .zip(model.full_coefs(&vec![0.0; p]))
        .map(|(&m, c)| if m && (config.finite_offsets || c.is_infinite()) { Some(c) } else { None })
        .collect();

    let mut work = net.clone();
    let mut prop = ProposalState::new(config.method, &work, constraints)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stats = model.summary_stats(&work);
    let mut delta = vec![0.0; model.p()];
    let mut cand = vec![0.0; p];
    let free_of = |s: &[f64]| -> Vec<f64> { free.iter().map(|&k| s[k]).collect() };
    let reached_of = |g: &[f64]| g.iter().zip(&config.targets).all(|(a, b)| a == b);

    let mut g = free_of(&stats);
    let mut e = energy(&g, &config.targets, &w);
    let mut trace = Vec::new();
    let (mut proposals, mut accepted) = (0u64, 0u64);
    let mut runs_done = 0;
    let mut diff_cov = None;
    let stride = config.steps_per_run.div_ceil(MAX_STORED as u64).max(1);
    'runs: for r in 0..config.runs {
        let temp = config.temperature(r, tau0);
        let mut diffs: Vec<Vec<f64>> = Vec::new();
        for step in 0..config.steps_per_run {
            if reached_of(&g) {
                break 'runs;
            }
            proposals += 1;
            if config.trace_interval > 0 && proposals % config.trace_interval == 0 {
                trace.push(TraceRow { proposals, stats: stats.clone(), energy: e });
            }
            let Some(pr) = prop.propose(&work, &mut rng)? else { continue };
            let adding = !work.has_edge(pr.i, pr.j);
            model.change_stats_into(&work, pr.i, pr.j, &mut delta);
            let sign = if adding { 1.0 } else { -1.0 };
            for (c, (&k, gk)) in cand.iter_mut().zip(free.iter().zip(&g)) {
                *c = gk + sign * delta[k];
            }
            if step % stride == 0 {
                diffs.push(cand.iter().zip(&g).map(|(a, b)| a - b).collect());
            }
            let e_new = energy(&cand, &config.targets, &w);
            let bias = offset_bias(&eta, &delta, adding);
            let de = e_new - e;
            let energy_term = if temp > 0.0 {
                -de / temp
            } else if de > 0.0 {
                f64::NEG_INFINITY
            } else if de < 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            let lar = if bias == f64::NEG_INFINITY || energy_term == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                energy_term + bias + pr.log_q_ratio
            };
            if lar >= 0.0 || (lar > f64::NEG_INFINITY && rng.random::<f64>() < lar.exp()) {
                work.toggle_unchecked(pr.i, pr.j);
                prop.commit(&work, pr.i, pr.j);
                apply_toggle_stats(&mut stats, &delta, adding);
                g.copy_from_slice(&cand);
                e = e_new;
                accepted += 1;
            }
        }
        runs_done = r + 1;
        if config.invcov_override.is_none() {
            if let Some(nw) = weight_update(&diffs, p) {
                w = nw;
                e = energy(&g, &config.targets, &w);
            }
        }
        if diffs.len() >= 2 {
            diff_cov = Some(centred_cov(&diffs, p));
        }
        log::debug!("SAN run {}: temperature {temp}, energy {e}", r + 1);
    }
    let reached = reached_of(&g);
    Ok(SanOutput {
        network: work,
        stats,
        energy: if reached { 0.0 } else { e },
        reached,
        proposals,
        accepted,
        runs_done,
        weights: w,
        diff_cov,
        trace,
        names: model.names().to_vec(),
    })
}

/// Mean-centred covariance (divisor n − 1) of the rows.
fn centred_cov(rows: &[Vec<f64>], p: usize) -> DMatrix<f64> {
    let n = rows.len() as f64;
    let mut mean = DVector::<f64>::zeros(p);
    for d in rows {
        mean += DVector::from_column_slice(d);
    }
    mean /= n;
    let mut s = DMatrix::<f64>::zeros(p, p);
    for d in rows {
        let v = DVector::from_column_slice(d) - &mean;
        s.ger(1.0 / (n - 1.0), &v, &v, 1.0);
    }
    s
}

/// Fixed weight: diagonal of reciprocal squared targets, normalized to
/// unit sum.
pub fn reciprocal_target_weights(targets: &[f64]) -> Result<DMatrix<f64>> {
    if targets.iter().any(|&t| t == 0.0 || !t.is_finite()) {
        return Err(ErgmError::InvalidArgument("reciprocal target weights need finite nonzero targets".into()));
    }
    let d: Vec<f64> = targets.iter().map(|t| 1.0 / (t * t)).collect();
    let s: f64 = d.iter().sum();
    Ok(DMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|x| x / s))))
}
