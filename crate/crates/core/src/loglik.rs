//! Log-likelihood evaluation: null deviance, the dyad-independent
//! reference fit, and bridge sampling along a linear path of natural
//! parameters.

use std::fmt::Write as _;

use crate::diag;
use crate::error::{ErgmError, Result};
use crate::formula::ConstraintSpec;
use crate::infer::{logistic_fit, mple_rows, MpleMode, MpleRows};
use crate::model::BoundModel;
use crate::network::Network;
use crate::propose::Method;
use crate::sample::{Chain, ChainSpec};
use crate::sample_matrix::{fmt_cell, SampleMatrix};

/// Inverse of the golden ratio.
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// −2ℓ(0) for a binary network with `n_free` free dyads.
pub fn null_deviance(n_free: u64) -> f64 {
    2.0 * n_free as f64 * std::f64::consts::LN_2
}

/// Dyads that are neither blocked nor fixed by an infinite offset.
pub fn free_dyad_count(net: &Network, model: &BoundModel, constraints: &ConstraintSpec) -> Result<u64> {
    let rows = mple_rows(net, model, constraints, MpleMode::Compressed)?;
    Ok(rows.offset.iter().zip(&rows.weights).filter(|(o, _)| o.is_finite()).map(|(_, w)| *w as u64).sum())
}

fn independent_columns(model: &BoundModel) -> Vec<bool> {
    let mut out = vec![false; model.p()];
    for (r, ind) in model.term_ranges().into_iter().zip(model.term_dyad_independent()) {
        out[r].iter_mut().for_each(|b| *b = ind);
    }
    out
}

fn check_offsets(model: &BoundModel) -> Result<()> {
    let ind = independent_columns(model);
    if model.offset_mask().iter().zip(&ind).any(|(&o, &i)| o && !i) {
        return Err(ErgmError::InvalidArgument(
            "log-likelihood evaluation needs every offset term to be dyad-independent".into(),
        ));
    }
    Ok(())
}

/// MLE of the dyad-independent submodel, with the dyad-dependent free
/// coefficients held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFit {
    /// Full-length coefficients; offsets at their fixed values.
    pub coefs: Vec<f64>,
    pub loglik: f64,
    /// The observed ties are all absent or all present, so the MLE lies at
    /// infinity and the likelihood attains 1.
    pub boundary: bool,
}

pub fn dyad_independent_loglik(net: &Network, model: &BoundModel, constraints: &ConstraintSpec) -> Result<ReferenceFit> {
    check_offsets(model)?;
    let rows = mple_rows(net, model, constraints, MpleMode::Compressed)?;
    let ind = independent_columns(model);
    let free = model.free_indices();
    let keep: Vec<usize> = (0..free.len()).filter(|&k| ind[free[k]]).collect();
    let sub = MpleRows {
        names: keep.iter().map(|&k| rows.names[k].clone()).collect(),
        predictor: rows.predictor.iter().map(|x| keep.iter().map(|&k| x[k]).collect()).collect(),
        ..rows.clone()
    };
    let determined: Vec<bool> = sub.offset.iter().map(|o| o.is_infinite()).collect();
    let ys: Vec<f64> =
        sub.response.iter().zip(&determined).filter(|(_, &d)| !d).map(|(y, _)| *y).collect();
    let constant = !ys.is_empty() && ys.iter().all(|&y| y == ys[0]);
    if constant && keep.iter().any(|&k| model.names()[free[k]] == "edges") {
        // Respect any infinite offset conflicting with the data.
        for k in 0..sub.len() {
            let o = sub.offset[k];
            if o.is_infinite() && (o > 0.0) != (sub.response[k] == 1.0) {
                return Err(ErgmError::InvalidArgument(
                    "the observed network has probability zero under the offset terms".into(),
                ));
            }
        }
        let mut free_coefs = vec![0.0; free.len()];
        for &k in &keep {
            free_coefs[k] = f64::NAN;
        }
        return Ok(ReferenceFit { coefs: model.full_coefs(&free_coefs), loglik: 0.0, boundary: true });
    }
    let fit = logistic_fit(&sub)?;
    let mut free_coefs = vec![0.0; free.len()];
    for (c, &k) in fit.coefs.iter().zip(&keep) {
        free_coefs[k] = *c;
    }
    Ok(ReferenceFit { coefs: model.full_coefs(&free_coefs), loglik: fit.loglik, boundary: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeControl {
    /// Path points per pass.
    pub j: usize,
    /// Draws per point.
    pub k: usize,
    /// MH steps between draws.
    pub interval: u64,
    /// Steps before the first point; `None` means 16·K.
    pub burnin: Option<u64>,
    /// Steps after moving a chain to a new point; `None` means `interval`.
    pub warmup: Option<u64>,
    /// Adaptive mode: keep adding shifted passes until the MC s.e. is at
    /// most this.
    pub target_se: Option<f64>,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for BridgeControl {
    fn default() -> Self {
        BridgeControl { j: 16, k: 1024, interval: 16, burnin: None, warmup: None, target_se: None, max_passes: 64, seed: 1 }
    }
}

impl BridgeControl {
    fn validate(&self) -> Result<()> {
        if self.j == 0 || self.k < 2 || self.interval == 0 || self.max_passes == 0 {
            return Err(ErgmError::InvalidArgument("bridge sampling needs J ≥ 1, K ≥ 2, interval ≥ 1 and passes ≥ 1".into()));
        }
        if let Some(t) = self.target_se {
            if !(t > 0.0) {
                return Err(ErgmError::InvalidArgument("target s.e. must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Simulated path point.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgePoint {
    pub u: f64,
    pub pass: usize,
    pub weight: f64,
    /// Mean of (θ̂ − θ̃)⊤(g(Y) − g_obs) over the K draws.
    pub mean: f64,
    /// Batch-means variance of that mean.
    pub var_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeResult {
    /// ℓ(θ̂) − ℓ(θ̃).
    pub delta: f64,
    pub se: f64,
    pub points: Vec<BridgePoint>,
    pub passes: usize,
    /// False when adaptive mode hit the pass cap first.
    pub converged: bool,
}

/// Shift of pass `l` (1-based).
pub fn kronecker_shift(l: usize) -> f64 {
    let x = (l - 1) as f64 * INV_PHI + 0.5;
    (x - x.floor()) - 0.5
}

/// Path points of pass `l`.
pub fn pass_points(j: usize, l: usize) -> Vec<f64> {
    let v = kronecker_shift(l);
    (1..=j).map(|k| (k as f64 - 0.5 + v) / j as f64).collect()
}

/// Voronoi cell lengths on (0, 1) of the points `u`, in input order.
pub fn voronoi_weights(u: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    let mut w = vec![0.0; u.len()];
    for (r, &k) in order.iter().enumerate() {
        let lo = if r == 0 { 0.0 } else { 0.5 * (u[order[r - 1]] + u[k]) };
        let hi = if r + 1 == order.len() { 1.0 } else { 0.5 * (u[k] + u[order[r + 1]]) };
        w[k] = hi - lo;
    }
    w
}

fn point_summary(h: &[f64]) -> Result<(f64, f64)> {
    let n = h.len() as f64;
    let mean = h.iter().sum::<f64>() / n;
    let m = SampleMatrix::from_rows(vec!["h".into()], &h.iter().map(|&x| vec![x]).collect::<Vec<_>>());
    let var = if h.len() >= diag::MIN_ROWS { diag::batch_means_cov(&m)?[(0, 0)] } else { m.covariance()[(0, 0)] };
    Ok((mean, var.max(0.0) / n))
}

fn combine(points: &mut [BridgePoint], voronoi: bool) -> (f64, f64) {
    if voronoi {
        let u: Vec<f64> = points.iter().map(|p| p.u).collect();
        for (p, w) in points.iter_mut().zip(voronoi_weights(&u)) {
            p.weight = w;
        }
    }
    let delta = -points.iter().map(|p| p.weight * p.mean).sum::<f64>();
    let var: f64 = points.iter().map(|p| p.weight * p.weight * p.var_mean).sum();
    (delta, var.sqrt())
}

/// Bridge-sampling estimate of ℓ(θ̂) − ℓ(θ̃) on the path
/// m(u) = θ̃ + u(θ̂ − θ̃). `theta_hat` and `theta_tilde` are full-length and
/// must agree on offset coordinates. `g_obs` is the full observed
/// statistic vector; `start` seeds the chain.
pub fn bridge(
    start: &Network,
    model: &BoundModel,
    constraints: &ConstraintSpec,
    method: Method,
    theta_hat: &[f64],
    theta_tilde: &[f64],
    g_obs: &[f64],
    control: &BridgeControl,
) -> Result<BridgeResult> {
    control.validate()?;
    let p = model.p();
    if theta_hat.len() != p || theta_tilde.len() != p || g_obs.len() != p {
        return Err(ErgmError::InvalidArgument(format!("bridge endpoints and statistics must have length {p}")));
    }
    let mask = model.offset_mask();
    for k in 0..p {
        if mask[k] {
            if theta_hat[k] != theta_tilde[k] && !(theta_hat[k].is_nan() && theta_tilde[k].is_nan()) {
                return Err(ErgmError::InvalidArgument("bridge endpoints differ on an offset coefficient".into()));
            }
        } else if !theta_hat[k].is_finite() || !theta_tilde[k].is_finite() {
            return Err(ErgmError::InvalidArgument("bridge endpoints must be finite on free coefficients".into()));
        }
    }
    let diff: Vec<f64> = (0..p).map(|k| if mask[k] { 0.0 } else { theta_hat[k] - theta_tilde[k] }).collect();
    if diff.iter().all(|&d| d == 0.0) {
        return Ok(BridgeResult { delta: 0.0, se: 0.0, points: Vec::new(), passes: 0, converged: true });
    }
    let at = |u: f64| -> Vec<f64> { (0..p).map(|k| if mask[k] { theta_hat[k] } else { theta_tilde[k] + u * diff[k] }).collect() };
    let burnin = control.burnin.unwrap_or(16 * control.k as u64);
    let warmup = control.warmup.unwrap_or(control.interval);

    // Finished points with their final networks, for warm starts.
    let mut done: Vec<(BridgePoint, Network)> = Vec::new();
    let mut passes = 0;
    let mut converged = control.target_se.is_none();
    let max_passes = if control.target_se.is_some() { control.max_passes } else { 1 };
    for l in 1..=max_passes {
        passes = l;
        let us = if control.target_se.is_some() { pass_points(control.j, l) } else { pass_points(control.j, 1) };
        for (idx, &u) in us.iter().enumerate() {
            let (net, steps) = match done.iter().min_by(|a, b| (a.0.u - u).abs().total_cmp(&(b.0.u - u).abs())) {
                Some((_, n)) => (n.clone(), warmup),
                None => (start.clone(), burnin),
            };
            let coefs = at(u);
            let spec = ChainSpec { model, coefs: &coefs, method, constraints };
            let seed = control.seed.wrapping_add(((l as u64) << 32) + idx as u64);
            let mut chain = Chain::new(net, &spec, seed)?;
            chain.advance(steps)?;
            let mut h = Vec::with_capacity(control.k);
            for _ in 0..control.k {
                chain.advance(control.interval)?;
                let g = chain.stats();
                h.push((0..p).filter(|&k| diff[k] != 0.0).map(|k| diff[k] * (g[k] - g_obs[k])).sum());
            }
            let (mean, var_mean) = point_summary(&h)?;
            let point = BridgePoint { u, pass: l, weight: 1.0 / control.j as f64, mean, var_mean };
            done.push((point, chain.into_network()));
        }
        if let Some(t) = control.target_se {
            let mut pts: Vec<BridgePoint> = done.iter().map(|(p, _)| p.clone()).collect();
            let (_, se) = combine(&mut pts, true);
            log::info!("bridge pass {l}: s.e. {se:.4}");
            if se <= t {
                converged = true;
                break;
            }
        }
    }
    let mut points: Vec<BridgePoint> = done.into_iter().map(|(p, _)| p).collect();
    let (delta, se) = combine(&mut points, control.target_se.is_some());
    if !converged {
        log::warn!("bridge sampling stopped at the pass cap with s.e. {se:.4}");
    }
    Ok(BridgeResult { delta, se, points, passes, converged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoglikResult {
    /// ℓ(θ̂).
    pub loglik: f64,
    /// ℓ(θ̂) − ℓ(θ̃).
    pub delta_loglik: f64,
    pub mc_se: f64,
    pub reference_loglik: f64,
    pub null_deviance: f64,
    pub aic: f64,
    pub bic: f64,
    /// Free coefficients.
    pub p: usize,
    /// Free dyads.
    pub d: u64,
    pub bridge: Option<BridgeResult>,
}

impl LoglikResult {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("field\tvalue\n");
        for (k, v) in [
            ("loglik", self.loglik),
            ("delta_loglik", self.delta_loglik),
            ("mc_se", self.mc_se),
            ("reference_loglik", self.reference_loglik),
            ("null_deviance", self.null_deviance),
            ("aic", self.aic),
            ("bic", self.bic),
        ] {
            writeln!(out, "{k}\t{}", fmt_cell(v)).unwrap();
        }
        writeln!(out, "p\t{}", self.p).unwrap();
        writeln!(out, "d\t{}", self.d).unwrap();
        if let Some(b) = &self.bridge {
            writeln!(out, "bridge_passes\t{}", b.passes).unwrap();
            writeln!(out, "bridge_converged\t{}", if b.converged { "TRUE" } else { "FALSE" }).unwrap();
        }
        out
    }
}

/// ℓ(θ̂) for free coefficients `theta_hat`: exact for dyad-independent
/// models, otherwise the reference fit plus a bridge estimate. `g_obs`
/// overrides the statistics of `net` (full length).
pub fn loglik(
    net: &Network,
    model: &BoundModel,
    constraints: &ConstraintSpec,
    method: Method,
    theta_hat: &[f64],
    g_obs: Option<&[f64]>,
    control: &BridgeControl,
) -> Result<LoglikResult> {
    if constraints.bd.is_some() {
        return Err(ErgmError::InvalidArgument(
            "degree bounds make the reference normalizer intractable; log-likelihood is unavailable".into(),
        ));
    }
    if theta_hat.len() != model.n_free() {
        return Err(ErgmError::InvalidArgument(format!("expected {} free coefficients", model.n_free())));
    }
    check_offsets(model)?;
    let d = free_dyad_count(net, model, constraints)?;
    let pf = model.n_free();
    let full_hat = model.full_coefs(theta_hat);
    let g = match g_obs {
        Some(g) if g.len() == model.p() => g.to_vec(),
        Some(_) => return Err(ErgmError::InvalidArgument(format!("expected {} statistics", model.p()))),
        None => model.summary_stats(net),
    };
    let (reference_loglik, delta, se, bridge_res) = if model.is_dyad_independent() {
        // Exact Bernoulli likelihood at θ̂, offset rows as structural.
        let rows = mple_rows(net, model, constraints, MpleMode::Compressed)?;
        let mut ll = 0.0;
        for k in 0..rows.len() {
            let o = rows.offset[k];
            if o.is_infinite() {
                if (o > 0.0) != (rows.response[k] == 1.0) {
                    ll = f64::NEG_INFINITY;
                }
                continue;
            }
            let eta = o + rows.predictor[k].iter().zip(theta_hat).map(|(a, b)| a * b).sum::<f64>();
            let y = rows.response[k];
            ll += rows.weights[k] * (y * eta - crate::linalg::softplus(eta));
        }
        (ll, 0.0, 0.0, None)
    } else {
        let reference = dyad_independent_loglik(net, model, constraints)?;
        if reference.boundary {
            return Err(ErgmError::Separation("the dyad-independent reference fit lies on the boundary".into()));
        }
        let b = bridge(net, model, constraints, method, &full_hat, &reference.coefs, &g, control)?;
        (reference.loglik, b.delta, b.se, Some(b))
    };
    let ll = reference_loglik + delta;
    Ok(LoglikResult {
        loglik: ll,
        delta_loglik: delta,
        mc_se: se,
        reference_loglik,
        null_deviance: null_deviance(d),
        aic: -2.0 * ll + 2.0 * pf as f64,
        bic: -2.0 * ll + pf as f64 * (d as f64).ln(),
        p: pf,
        d,
        bridge: bridge_res,
    })
}
