//! Estimation: maximum pseudo-likelihood with naive or sandwich variance,
//! Monte Carlo MLE with hull-limited steps, and contrastive divergence.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::diag;
use crate::error::{ErgmError, Result};
use crate::formula::ConstraintSpec;
use crate::hull;
use crate::linalg::{pinv, pinv_sqrt, sigmoid, softplus, support};
use crate::model::BoundModel;
use crate::network::{Dyad, Network};
use crate::propose::{Constraints, Method, ProposalState};
use crate::sample::{self, mh_step_toggle, Chain, ChainSpec, SamplerConfig};
use crate::sample_matrix::{fmt_cell, SampleMatrix};

/// Coefficients beyond this magnitude signal separation.
pub const SEPARATION_BOUND: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpleMode {
    Compressed,
    Array,
    Dyadlist,
}

impl FromStr for MpleMode {
    type Err = ErgmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compressed" => Ok(MpleMode::Compressed),
            "array" => Ok(MpleMode::Array),
            "dyadlist" => Ok(MpleMode::Dyadlist),
            _ => Err(ErgmError::InvalidArgument(format!("unknown MPLE output mode '{s}'"))),
        }
    }
}

/// Logistic-regression data for the pseudo-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct MpleRows {
    /// Free statistic names (the predictor columns).
    pub names: Vec<String>,
    pub response: Vec<f64>,
    pub predictor: Vec<Vec<f64>>,
    /// Fixed offset contribution θ_offset⊤Δ per row (±∞ allowed).
    pub offset: Vec<f64>,
    pub weights: Vec<f64>,
    /// Dyad of each row (empty in compressed mode).
    pub dyads: Vec<Dyad>,
    pub mode: MpleMode,
    pub(crate) n: usize,
    pub(crate) directed: bool,
}

impl MpleRows {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Tail × head response matrix and tail × head × statistic cube,
    /// row-major, NaN where a dyad is undefined (diagonal, blocked or
    /// same-mode). Undirected dyads fill both orientations.
    pub fn to_array(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.mode == MpleMode::Compressed {
            return Err(ErgmError::InvalidArgument("compressed rows carry no dyad identities".into()));
        }
        let (n, p) = (self.n, self.names.len());
        let mut resp = vec![f64::NAN; n * n];
        let mut cube = vec![f64::NAN; n * n * p];
        for (k, &(i, j)) in self.dyads.iter().enumerate() {
            let mut put = |a: usize, b: usize| {
                resp[a * n + b] = self.response[k];
                cube[(a * n + b) * p..(a * n + b + 1) * p].copy_from_slice(&self.predictor[k]);
            };
            put(i, j);
            if !self.directed {
                put(j, i);
            }
        }
        Ok((resp, cube))
    }
}

/// θ_offset⊤Δ with ∞·0 = 0 and −∞ dominating.
fn offset_shift(full_coefs: &[f64], mask: &[bool], delta: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut pos_inf = false;
    for k in 0..delta.len() {
        if !mask[k] || delta[k] == 0.0 {
            continue;
        }
        let t = full_coefs[k] * delta[k];
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

/// One row per free dyad: response y_ij, predictor Δ_ij g(y) on free
/// statistics, offset contribution. Dyads excluded by `blocks` are not
/// free; degree bounds are not imposed here.
pub fn mple_rows(net: &Network, model: &BoundModel, constraints: &ConstraintSpec, mode: MpleMode) -> Result<MpleRows> {
    let cons = Constraints::from_spec(constraints, net)?;
    let free = model.free_indices();
    let mask = model.offset_mask().to_vec();
    let full = model.full_coefs(&vec![0.0; free.len()]);
    let mut rows = MpleRows {
        names: free.iter().map(|&k| model.names()[k].clone()).collect(),
        response: Vec::new(),
        predictor: Vec::new(),
        offset: Vec::new(),
        weights: Vec::new(),
        dyads: Vec::new(),
        mode,
        n: net.n(),
        directed: net.is_directed(),
    };
    let mut delta = vec![0.0; model.p()];
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for (i, j) in net.dyads() {
        if cons.blocked(i, j) {
            continue;
        }
        model.change_stats_into(net, i, j, &mut delta);
        let y = net.has_edge(i, j) as u8 as f64;
        let x: Vec<f64> = free.iter().map(|&k| delta[k]).collect();
        let o = offset_shift(&full, &mask, &delta);
        if mode == MpleMode::Compressed {
            let mut key: Vec<u64> = Vec::with_capacity(x.len() + 2);
            key.push(y.to_bits());
            key.push(o.to_bits());
            key.extend(x.iter().map(|v| v.to_bits()));
            if let Some(&r) = seen.get(&key) {
                rows.weights[r] += 1.0;
                continue;
            }
            seen.insert(key, rows.len());
        } else {
            rows.dyads.push((i, j));
        }
        rows.response.push(y);
        rows.predictor.push(x);
        rows.offset.push(o);
        rows.weights.push(1.0);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefs: Vec<f64>,
    /// Negative Hessian of the log pseudo-likelihood at the estimate.
    pub information: DMatrix<f64>,
    pub loglik: f64,
    pub iterations: usize,
}

/// Weighted logistic regression by Newton–Raphson with step halving.
/// Rows whose offset is infinite and agrees with the response are
/// structurally determined and dropped.
pub fn logistic_fit(rows: &MpleRows) -> Result<LogisticFit> {
    let p = rows.names.len();
    let mut idx = Vec::with_capacity(rows.len());
    for k in 0..rows.len() {
        let (o, y) = (rows.offset[k], rows.response[k]);
        if rows.weights[k] == 0.0 {
            continue;
        }
        if o.is_infinite() {
            if (o > 0.0) != (y == 1.0) {
                return Err(ErgmError::InvalidArgument(
                    "the observed network has probability zero under the offset terms".into(),
                ));
            }
            continue;
        }
        idx.push(k);
    }
    let eval = |theta: &[f64], want_info: bool| {
        let mut ll = 0.0;
        let mut grad = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for &k in &idx {
            let x = &rows.predictor[k];
            let w = rows.weights[k];
            let eta: f64 = rows.offset[k] + x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
            let y = rows.response[k];
            ll += w * (y * eta - softplus(eta));
            let pr = sigmoid(eta);
            let xv = DVector::from_column_slice(x);
            grad.axpy(w * (y - pr), &xv, 1.0);
            if want_info {
                info.ger(w * pr * (1.0 - pr), &xv, &xv, 1.0);
            }
        }
        (ll, grad, info)
    };
    let mut theta = vec![0.0; p];
    if p == 0 {
        let (ll, _, info) = eval(&theta, true);
        return Ok(LogisticFit { coefs: theta, information: info, loglik: ll, iterations: 0 });
    }
    // Full column rank on the retained rows.
    let (_, _, info0) = eval(&theta, true);
    let (_, l) = support(&info0, 1e-12);
    if l.len() < p {
        let eig = nalgebra::SymmetricEigen::new(info0.clone());
        let k = (0..p).min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).unwrap();
        let dir: Vec<String> = eig.eigenvectors.column(k).iter().map(|v| format!("{v:.3}")).collect();
        return Err(ErgmError::Singular(format!(
            "pseudo-likelihood design is rank-deficient along ({}) for ({})",
            dir.join(", "),
            rows.names.join(", ")
        )));
    }
    let total_w: f64 = idx.iter().map(|&k| rows.weights[k]).sum();
    let (mut ll, mut grad, mut info) = eval(&theta, true);
    let mut iterations = 0;
    for it in 0..200 {
        iterations = it;
        if grad.norm() < 1e-10 {
            break;
        }
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => pinv(&info) * &grad,
        };
        if step.dot(&grad) < 1e-24 * (1.0 + total_w) {
            break;
        }
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, d)| t + s * d).collect();
            let (ll2, g2, i2) = eval(&cand, true);
            if ll2 >= ll - 1e-12 * ll.abs().max(1.0) {
                theta = cand;
                ll = ll2;
                grad = g2;
                info = i2;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if let Some(k) = theta.iter().position(|t| t.abs() > SEPARATION_BOUND) {
            return Err(ErgmError::Separation(format!(
                "coefficient for '{}' diverges; the observed ties are perfectly predicted",
                rows.names[k]
            )));
        }
        if !accepted {
            break;
        }
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(ErgmError::Separation("non-finite pseudo-likelihood estimate".into()));
    }
    // Saturated fits stop on the gradient tolerance before reaching the bound.
    if let Some(k) = (0..p).find(|&k| theta[k].abs() > 15.0) {
        let min_eig = nalgebra::SymmetricEigen::new(info.clone()).eigenvalues.min();
        if min_eig < 1e-8 * total_w {
            return Err(ErgmError::Separation(format!(
                "coefficient for '{}' diverges; the observed ties are perfectly predicted",
                rows.names[k]
            )));
        }
    }
    Ok(LogisticFit { coefs: theta, information: info, loglik: ll, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeKind {
    Naive,
    Sandwich,
    /// Inverse of the tilted sample covariance (MCMLE).
    Mcmc,
}

impl FromStr for SeKind {
    type Err = ErgmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(SeKind::Naive),
            "sandwich" => Ok(SeKind::Sandwich),
            _ => Err(ErgmError::InvalidArgument(format!("unknown standard-error kind '{s}'"))),
        }
    }
}

impl SeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SeKind::Naive => "naive",
            SeKind::Sandwich => "sandwich",
            SeKind::Mcmc => "mcmc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationKind {
    Hotelling,
    Hummel,
    Confidence,
}

impl FromStr for TerminationKind {
    type Err = ErgmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hotelling" => Ok(TerminationKind::Hotelling),
            "hummel" => Ok(TerminationKind::Hummel),
            "confidence" => Ok(TerminationKind::Confidence),
            _ => Err(ErgmError::InvalidArgument(format!("unknown termination criterion '{s}'"))),
        }
    }
}

impl TerminationKind {
    pub fn name(&self) -> &'static str {
        match self {
            TerminationKind::Hotelling => "hotelling",
            TerminationKind::Hummel => "hummel",
            TerminationKind::Confidence => "confidence",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminationControl {
    pub kind: TerminationKind,
    /// Stop when the Hotelling p-value exceeds this.
    pub hotelling_alpha: f64,
    pub confidence_alpha: f64,
    /// Mahalanobis threshold for the confidence criterion.
    pub confidence_delta: f64,
    /// Hull depth for step scaling and the Hummel criterion.
    pub depth: f64,
}

impl Default for TerminationControl {
    fn default() -> Self {
        TerminationControl {
            kind: TerminationKind::Confidence,
            hotelling_alpha: 0.5,
            confidence_alpha: 0.05,
            confidence_delta: 0.25,
            depth: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminationCheck {
    pub kind: TerminationKind,
    /// T² (hotelling), γ (hummel) or the upper confidence bound (confidence).
    pub statistic: f64,
    pub p_value: f64,
    pub stop: bool,
}

/// Decides whether the sample drawn at the current coefficients is
/// consistent with `g_obs`. `gamma_history` holds the boundary multiplier
/// of every completed iteration, newest last.
pub fn check_termination(
    ctrl: &TerminationControl,
    sample: &SampleMatrix,
    g_obs: &[f64],
    gamma_history: &[f64],
) -> Result<TerminationCheck> {
    let s = sample.nrows();
    let mean = sample.mean();
    let u = DVector::from_iterator(g_obs.len(), g_obs.iter().zip(&mean).map(|(a, b)| a - b));
    match ctrl.kind {
        TerminationKind::Hummel => {
            let k = gamma_history.len();
            let thr = (1.0 - hull::BOUNDARY_TOL) / ctrl.depth;
            let stop = k >= 2 && gamma_history[k - 1] >= thr && gamma_history[k - 2] >= thr;
            Ok(TerminationCheck {
                kind: ctrl.kind,
                statistic: gamma_history.last().copied().unwrap_or(f64::NAN),
                p_value: f64::NAN,
                stop,
            })
        }
        TerminationKind::Hotelling => {
            let sigma = diag::batch_means_cov(sample)?;
            let (basis, l) = support(&sigma, 1e-10);
            let r = l.len();
            let proj = basis.transpose() * &u;
            let off = (&u - &basis * &proj).norm();
            if r == 0 || off > 1e-9 * (1.0 + u.norm()) {
                let zero = u.norm() == 0.0;
                return Ok(TerminationCheck {
                    kind: ctrl.kind,
                    statistic: if zero { 0.0 } else { f64::INFINITY },
                    p_value: if zero { 1.0 } else { 0.0 },
                    stop: zero,
                });
            }
            let t2: f64 = s as f64 * proj.iter().zip(l.iter()).map(|(v, lam)| v * v / lam).sum::<f64>();
            let b = (s as f64).sqrt().floor();
            let a = (s as f64 / b).floor();
            let rf = r as f64;
            let p_value = if a > rf + 1.0 {
                let f = t2 * (a - rf) / (rf * (a - 1.0));
                1.0 - FisherSnedecor::new(rf, a - rf).map_err(|e| ErgmError::Singular(e.to_string()))?.cdf(f)
            } else {
                1.0 - ChiSquared::new(rf).map_err(|e| ErgmError::Singular(e.to_string()))?.cdf(t2)
            };
            Ok(TerminationCheck { kind: ctrl.kind, statistic: t2, p_value, stop: p_value > ctrl.hotelling_alpha })
        }
        TerminationKind::Confidence => {
            let lambda = sample.covariance();
            let (basis, _) = support(&lambda, 1e-10);
            let off = (&u - &basis * (basis.transpose() * &u)).norm();
            if basis.ncols() == 0 || off > 1e-9 * (1.0 + u.norm()) {
                let zero = u.norm() == 0.0;
                return Ok(TerminationCheck {
                    kind: ctrl.kind,
                    statistic: if zero { 0.0 } else { f64::INFINITY },
                    p_value: f64::NAN,
                    stop: zero,
                });
            }
            let a = pinv_sqrt(&lambda);
            let d = (&a * &u).norm();
            let sigma = diag::batch_means_cov(sample)? / s as f64;
            let m = &a * sigma * &a;
            let lmax = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            let chi = ChiSquared::new(basis.ncols() as f64)
                .map_err(|e| ErgmError::Singular(e.to_string()))?
                .inverse_cdf(1.0 - ctrl.confidence_alpha);
            let ub = d + (lmax * chi).sqrt();
            Ok(TerminationCheck { kind: ctrl.kind, statistic: ub, p_value: f64::NAN, stop: ub <= ctrl.confidence_delta })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub theta_next: Vec<f64>,
    /// Boundary multiplier of g_obs relative to the sample centroid.
    pub gamma: f64,
    /// g_obs after hull scaling.
    pub g_target: Vec<f64>,
    /// Surrogate log-likelihood gain at theta_next (≥ 0).
    pub objective_gain: f64,
    /// Covariance of the statistics under the tilted weights at theta_next.
    pub tilted_cov: DMatrix<f64>,
    /// Relative norm of g_obs − centroid outside the sample's support.
    pub residual: f64,
}

/// One MCMLE update from a sample drawn at `theta` (free statistics only).
pub fn mcmle_step(theta: &[f64], sample: &SampleMatrix, g_obs: &[f64], depth: f64) -> Result<StepInfo> {
    let p = theta.len();
    if sample.p() != p || g_obs.len() != p {
        return Err(ErgmError::InvalidArgument("sample, coefficients and g_obs differ in dimension".into()));
    }
    if sample.nrows() < 2 {
        return Err(ErgmError::TooFewSamples { need: 2, got: sample.nrows() });
    }
    let c = sample.mean();
    let lambda = sample.covariance();
    let (basis, _) = support(&lambda, 1e-10);
    let r = basis.ncols();
    let dobs = DVector::from_iterator(p, g_obs.iter().zip(&c).map(|(a, b)| a - b));
    let residual = (&dobs - &basis * (basis.transpose() * &dobs)).norm() / (1.0 + dobs.norm());

    let gamma = hull::boundary_multiplier(sample, g_obs, Some(&c))?;
    let g_target: Vec<f64> = if gamma >= (1.0 - hull::BOUNDARY_TOL) / depth {
        g_obs.to_vec()
    } else {
        g_obs.iter().zip(&c).map(|(x, ci)| ci + depth * gamma * (x - ci)).collect()
    };
    if r == 0 {
        return Ok(StepInfo {
            theta_next: theta.to_vec(),
            gamma,
            g_target,
            objective_gain: 0.0,
            tilted_cov: DMatrix::zeros(p, p),
            residual,
        });
    }
    let bt = basis.transpose();
    let z: Vec<DVector<f64>> = sample
        .rows()
        .map(|row| &bt * DVector::from_iterator(p, row.iter().zip(&c).map(|(a, b)| a - b)))
        .collect();
    let zt = &bt * DVector::from_iterator(p, g_target.iter().zip(&c).map(|(a, b)| a - b));
    let n = z.len() as f64;

    // f(δ) = δ⊤z* − log mean exp(δ⊤z_s); returns f, tilted mean and covariance.
    let eval = |delta: &DVector<f64>| {
        let e: Vec<f64> = z.iter().map(|zs| zs.dot(delta)).collect();
        let mx = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|v| (v - mx).exp()).collect();
        let sw: f64 = w.iter().sum();
        let f = delta.dot(&zt) - (mx + (sw / n).ln());
        let mut m = DVector::<f64>::zeros(r);
        for (zs, &wi) in z.iter().zip(&w) {
            m.axpy(wi / sw, zs, 1.0);
        }
        let mut cov = DMatrix::<f64>::zeros(r, r);
        for (zs, &wi) in z.iter().zip(&w) {
            let d = zs - &m;
            cov.ger(wi / sw, &d, &d, 1.0);
        }
        (f, m, cov)
    };
    let mut delta = DVector::<f64>::zeros(r);
    let (mut f, mut m, mut cov) = eval(&delta);
    let f0 = f;
    let scale = 1.0 + zt.norm();
    for _ in 0..200 {
        let grad = &zt - &m;
        if grad.norm() < 1e-10 * scale {
            break;
        }
        let step = match cov.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let mut s = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let cand = &delta + s * &step;
            let (f2, m2, c2) = eval(&cand);
            if f2.is_finite() && f2 >= f {
                let gain = f2 - f;
                delta = cand;
                f = f2;
                m = m2;
                cov = c2;
                improved = gain > 0.0 || s == 1.0;
                break;
            }
            s *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let dtheta = &basis * &delta;
    let theta_next: Vec<f64> = theta.iter().zip(dtheta.iter()).map(|(a, b)| a + b).collect();
    let tilted_cov = &basis * cov * &bt;
    Ok(StepInfo { theta_next, gamma, g_target, objective_gain: f - f0, tilted_cov, residual })
}

/// Result of any estimator.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub names: Vec<String>,
    /// Full coefficient vector; offsets at their fixed values.
    pub coefs: Vec<f64>,
    pub offset: Vec<bool>,
    /// Covariance of the free coefficients.
    pub vcov: DMatrix<f64>,
    pub se_kind: SeKind,
    pub method: &'static str,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Option<TerminationCheck>,
    pub sample: Option<SampleMatrix>,
    /// Log pseudo-likelihood at the estimate (MPLE).
    pub pseudo_loglik: Option<f64>,
}

impl FitResult {
    pub fn free_coefs(&self) -> Vec<f64> {
        self.coefs.iter().zip(&self.offset).filter(|(_, &o)| !o).map(|(c, _)| *c).collect()
    }

    /// Standard errors aligned with `coefs`; NaN for offsets.
    pub fn se(&self) -> Vec<f64> {
        let mut k = 0;
        self.offset
            .iter()
            .map(|&o| {
                if o {
                    f64::NAN
                } else {
                    let v = self.vcov[(k, k)];
                    k += 1;
                    if v >= 0.0 {
                        v.sqrt()
                    } else {
                        f64::NAN
                    }
                }
            })
            .collect()
    }

    /// Coefficient, covariance and termination blocks separated by blank lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("term\testimate\tse\toffset\n");
        for (k, se) in self.se().iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                self.names[k],
                fmt_cell(self.coefs[k]),
                fmt_cell(*se),
                if self.offset[k] { "TRUE" } else { "FALSE" }
            )
            .unwrap();
        }
        let free: Vec<&String> = self.names.iter().zip(&self.offset).filter(|(_, &o)| !o).map(|(n, _)| n).collect();
        out.push_str("\nvcov");
        for n in &free {
            write!(out, "\t{n}").unwrap();
        }
        out.push('\n');
        for (r, n) in free.iter().enumerate() {
            out.push_str(n);
            for c in 0..free.len() {
                write!(out, "\t{}", fmt_cell(self.vcov[(r, c)])).unwrap();
            }
            out.push('\n');
        }
        out.push_str("\nfield\tvalue\n");
        writeln!(out, "method\t{}", self.method).unwrap();
        writeln!(out, "se\t{}", self.se_kind.name()).unwrap();
        writeln!(out, "iterations\t{}", self.iterations).unwrap();
        writeln!(out, "converged\t{}", if self.converged { "TRUE" } else { "FALSE" }).unwrap();
        match &self.termination {
            Some(t) => {
                writeln!(out, "termination\t{}", t.kind.name()).unwrap();
                writeln!(out, "statistic\t{}", fmt_cell(t.statistic)).unwrap();
                writeln!(out, "p_value\t{}", fmt_cell(t.p_value)).unwrap();
            }
            None => out.push_str("termination\tNA\nstatistic\tNA\np_value\tNA\n"),
        }
        writeln!(out, "pseudo_loglik\t{}", fmt_cell(self.pseudo_loglik.unwrap_or(f64::NAN))).unwrap();
        out
    }
}

/// Pseudo-likelihood score Σ (y_ij − p_ij) Δ_ij over free dyads.
fn pseudo_score(net: &Network, model: &BoundModel, cons: &Constraints, full: &[f64], free: &[usize]) -> Vec<f64> {
    let mask = model.offset_mask();
    let mut delta = vec![0.0; model.p()];
    let mut u = vec![0.0; free.len()];
    for (i, j) in net.dyads() {
        if cons.blocked(i, j) {
            continue;
        }
        model.change_stats_into(net, i, j, &mut delta);
        let o = offset_shift(full, mask, &delta);
        if o.is_infinite() {
            continue;
        }
        let eta = o + free.iter().map(|&k| full[k] * delta[k]).sum::<f64>();
        let y = net.has_edge(i, j) as u8 as f64;
        let r = y - sigmoid(eta);
        for (uk, &k) in u.iter_mut().zip(free) {
            *uk += r * delta[k];
        }
    }
    u
}

/// Maximum pseudo-likelihood estimate. The sandwich variance estimates
/// V(U) from networks simulated at the estimate with `sampler`.
pub fn mple(
    net: &Network,
    model: &BoundModel,
    constraints: &ConstraintSpec,
    method: Method,
    se: SeKind,
    sampler: &SamplerConfig,
) -> Result<FitResult> {
    if model.n_free() == 0 {
        return Err(ErgmError::InvalidArgument("the model has no free coefficients".into()));
    }
    let rows = mple_rows(net, model, constraints, MpleMode::Compressed)?;
    let fit = logistic_fit(&rows)?;
    let jinv = pinv(&fit.information);
    let full = model.full_coefs(&fit.coefs);
    let vcov = match se {
        SeKind::Naive | SeKind::Mcmc => jinv,
        SeKind::Sandwich => {
            sampler.validate()?;
            let cons = Constraints::from_spec(constraints, net)?;
            let free = model.free_indices();
            let spec = ChainSpec { model, coefs: &full, method, constraints };
            let mut chain = Chain::new(net.clone(), &spec, sampler.seed)?;
            chain.advance(sampler.burnin)?;
            let names: Vec<String> = free.iter().map(|&k| model.names()[k].clone()).collect();
            let mut scores = SampleMatrix::new(names);
            for _ in 0..sampler.samplesize {
                chain.advance(sampler.interval)?;
                scores.push_row(&pseudo_score(chain.network(), model, &cons, &full, &free));
            }
            if scores.nrows() < 2 {
                return Err(ErgmError::TooFewSamples { need: 2, got: scores.nrows() });
            }
            let v = scores.covariance();
            &jinv * v * &jinv
        }
    };
    Ok(FitResult {
        names: model.names().to_vec(),
        coefs: full,
        offset: model.offset_mask().to_vec(),
        vcov,
        se_kind: se,
        method: "mple",
        iterations: fit.iterations,
        converged: true,
        termination: None,
        sample: None,
        pseudo_loglik: Some(fit.loglik),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdControl {
    /// MH steps per restarted chain.
    pub steps: u64,
    /// Restarted chains per update.
    pub samplesize: usize,
    pub iterations: usize,
    pub depth: f64,
    pub seed: u64,
}

impl Default for CdControl {
    fn default() -> Self {
        CdControl { steps: 8, samplesize: 1024, iterations: 60, depth: 0.95, seed: 1 }
    }
}

/// Contrastive divergence: MCMLE-type updates from samples of short
/// chains restarted at the observed network; returns the mean of the last
/// quarter of the iterates (free coefficients).
pub fn cd_fit(
    net: &Network,
    model: &BoundModel,
    constraints: &ConstraintSpec,
    method: Method,
    control: &CdControl,
    init: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if control.steps == 0 || control.samplesize < 2 || control.iterations == 0 {
        return Err(ErgmError::InvalidArgument("contrastive divergence needs k ≥ 1, samplesize ≥ 2 and iterations ≥ 1".into()));
    }
    let free = model.free_indices();
    let g_full = model.summary_stats(net);
    let g_obs: Vec<f64> = free.iter().map(|&k| g_full[k]).collect();
    let mut theta = match init {
        Some(t) if t.len() == free.len() => t.to_vec(),
        Some(_) => return Err(ErgmError::InvalidArgument("initial coefficients have the wrong length".into())),
        None => vec![0.0; free.len()],
    };
    let mut work = net.clone();
    let mut prop = ProposalState::new(method, &work, constraints)?;
    let mut rng = ChaCha8Rng::seed_from_u64(control.seed);
    let names: Vec<String> = free.iter().map(|&k| model.names()[k].clone()).collect();
    let mut delta = vec![0.0; model.p()];
    let mut history = Vec::with_capacity(control.iterations);
    for _ in 0..control.iterations {
        let full = model.full_coefs(&theta);
        let mut sample = SampleMatrix::new(names.clone());
        for _ in 0..control.samplesize {
            let mut rel = vec![0.0; model.p()];
            let mut toggles = Vec::new();
            for _ in 0..control.steps {
                if let Some(d) = mh_step_toggle(&mut work, model, &full, &mut prop, &mut rel, &mut delta, &mut rng)? {
                    toggles.push(d);
                }
            }
            let row: Vec<f64> = free.iter().map(|&k| g_full[k] + rel[k]).collect();
            sample.push_row(&row);
            for &(i, j) in toggles.iter().rev() {
                work.toggle_unchecked(i, j);
                prop.commit(&work, i, j);
            }
        }
        let step = mcmle_step(&theta, &sample, &g_obs, control.depth)?;
        theta = step.theta_next;
        if theta.iter().any(|t| !t.is_finite() || t.abs() > 1e3) {
            return Err(ErgmError::Separation("contrastive divergence estimate diverges".into()));
        }
        history.push(theta.clone());
    }
    let keep = history.len().div_ceil(4);
    let tail = &history[history.len() - keep..];
    Ok((0..theta.len()).map(|k| tail.iter().map(|t| t[k]).sum::<f64>() / keep as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Mple,
    Cd,
    /// Free coefficients.
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmleControl {
    pub sampler: SamplerConfig,
    pub termination: TerminationControl,
    pub max_iter: usize,
    /// `None`: MPLE unless degree bounds are present, else CD.
    pub init: Option<Init>,
    pub cd: CdControl,
}

impl Default for McmleControl {
    fn default() -> Self {
        McmleControl {
            sampler: SamplerConfig::default(),
            termination: TerminationControl::default(),
            max_iter: 60,
            init: None,
            cd: CdControl::default(),
        }
    }
}

/// Initial free coefficients per `control.init`.
pub fn initial_coefs(
    net: &Network,
    model: &BoundModel,
    constraints: &ConstraintSpec,
    method: Method,
    control: &McmleControl,
) -> Result<Vec<f64>> {
    let init = control.init.clone().unwrap_or(if constraints.bd.is_some() { Init::Cd } else { Init::Mple });
    match init {
        Init::Given(v) => {
            if v.len() != model.n_free() || v.iter().any(|x| !x.is_finite()) {
                return Err(ErgmError::InvalidArgument(format!(
                    "initial coefficients must be {} finite values",
                    model.n_free()
                )));
            }
            Ok(v)
        }
        Init::Mple => Ok(mple(net, model, constraints, method, SeKind::Naive, &control.sampler)?.free_coefs()),
        Init::Cd => cd_fit(net, model, constraints, method, &control.cd, None),
    }
}

/// Monte Carlo MLE. `g_obs` (full length p) overrides the statistics of
/// `net`, which then only serves as the starting network.
pub fn mcmle_fit(
    net: &Network,
    model: &BoundModel,
    constraints: &ConstraintSpec,
    method: Method,
    g_obs: Option<&[f64]>,
    control: &McmleControl,
) -> Result<FitResult> {
    control.sampler.validate()?;
    if model.n_free() == 0 {
        return Err(ErgmError::InvalidArgument("the model has no free coefficients".into()));
    }
    let g_full = match g_obs {
        Some(g) if g.len() == model.p() => g.to_vec(),
        Some(g) => {
            return Err(ErgmError::InvalidArgument(format!("expected {} target statistics, got {}", model.p(), g.len())))
        }
        None => model.summary_stats(net),
    };
    let free = model.free_indices();
    let g_free: Vec<f64> = free.iter().map(|&k| g_full[k]).collect();
    let mut theta = initial_coefs(net, model, constraints, method, control)?;
    let depth = control.termination.depth;

    let mut starts = vec![net.clone(); control.sampler.chains];
    let mut gammas = Vec::new();
    let mut last: Option<(StepInfo, TerminationCheck, SampleMatrix)> = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..control.max_iter {
        iterations = it + 1;
        let full = model.full_coefs(&theta);
        let spec = ChainSpec { model, coefs: &full, method, constraints };
        let cfg = SamplerConfig { seed: control.sampler.seed.wrapping_add((it as u64) << 20), ..control.sampler.clone() };
        let out = sample::sample_from(starts, &spec, &cfg)?;
        starts = out.output.networks.clone();
        let sample_free = out.output.sample.select_columns(&free);
        let step = mcmle_step(&theta, &sample_free, &g_free, depth)?;
        if step.residual > 1e-6 {
            return Err(ErgmError::NotSpanned(format!(
                "observed statistics leave the span of the simulated ones at iteration {iterations}"
            )));
        }
        gammas.push(step.gamma);
        let check = check_termination(&control.termination, &sample_free, &g_free, &gammas)?;
        log::info!(
            "mcmle iteration {iterations}: gamma {:.3}, {} statistic {:.4}",
            step.gamma,
            check.kind.name(),
            check.statistic
        );
        theta = step.theta_next.clone();
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(ErgmError::NonConvergence("MCMLE produced non-finite coefficients".into()));
        }
        let stop = check.stop;
        last = Some((step, check, out.output.sample));
        if stop {
            converged = true;
            break;
        }
    }
    let (step, check, sample) = last.expect("at least one iteration");
    if !converged {
        log::warn!("MCMLE did not meet the {} criterion in {iterations} iterations", check.kind.name());
    }
    Ok(FitResult {
        names: model.names().to_vec(),
        coefs: model.full_coefs(&theta),
        offset: model.offset_mask().to_vec(),
        vcov: pinv(&step.tilted_cov),
        se_kind: SeKind::Mcmc,
        method: "mcmle",
        iterations,
        converged,
        termination: Some(check),
        sample: Some(sample),
        pseudo_loglik: None,
    })
}
