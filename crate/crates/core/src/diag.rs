//! MCMC output analysis: batch-means covariance, multivariate effective
//! sample size, a two-window multivariate Geweke test, and the
//! geometric-decay burn-in fit.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{ErgmError, Result};
use crate::sample_matrix::SampleMatrix;

/// Smallest sample that batch-means estimation accepts.
pub const MIN_ROWS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct EssReport {
    pub ess: f64,
    pub s: usize,
    /// Log determinants on the non-degenerate subspace.
    pub log_det_sigma: f64,
    pub log_det_lambda: f64,
    pub batch_size: usize,
    pub batches: usize,
    /// Columns used after dropping constant ones.
    pub p_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeResult {
    pub t2: f64,
    pub p_value: f64,
    pub df1: f64,
    pub df2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurninFit {
    pub s0: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub sse: f64,
}

/// Batch-means estimate of the asymptotic covariance Σ of the sample mean
/// (scaled so that Var(mean) ≈ Σ / S), with batch size ⌊√S⌋.
pub fn batch_means_cov(x: &SampleMatrix) -> Result<DMatrix<f64>> {
    Ok(batch_means(x)?.0)
}

fn batch_means(x: &SampleMatrix) -> Result<(DMatrix<f64>, usize, usize)> {
    let s = x.nrows();
    if s < MIN_ROWS {
        return Err(ErgmError::TooFewSamples { need: MIN_ROWS, got: s });
    }
    let p = x.p();
    let b = (s as f64).sqrt().floor() as usize;
    let a = s / b;
    let used = a * b;
    let mut total = DVector::<f64>::zeros(p);
    let mut means = Vec::with_capacity(a);
    for k in 0..a {
        let mut m = DVector::<f64>::zeros(p);
        for r in k * b..(k + 1) * b {
            for (j, v) in x.row(r).iter().enumerate() {
                m[j] += v;
            }
        }
        total += &m;
        means.push(m / b as f64);
    }
    let overall = total / used as f64;
    let mut sigma = DMatrix::<f64>::zeros(p, p);
    for m in &means {
        let d = m - &overall;
        sigma.ger(1.0, &d, &d, 1.0);
    }
    sigma *= b as f64 / (a - 1) as f64;
    Ok((sigma, b, a))
}

/// Log-determinant of a symmetric PSD matrix restricted to eigenvalues above
/// a relative tolerance. Returns the log-determinant and the rank.
fn log_pdet(m: &DMatrix<f64>) -> (f64, usize) {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = max * 1e-12;
    let mut ld = 0.0;
    let mut rank = 0;
    for &l in eig.eigenvalues.iter() {
        if l > tol {
            ld += l.ln();
            rank += 1;
        }
    }
    (ld, rank)
}

/// Multivariate ESS S·(det Λ / det Σ)^{1/p}, with Λ the sample covariance
/// and Σ the batch-means covariance, on the non-constant columns.
pub fn multivariate_ess(x: &SampleMatrix) -> Result<EssReport> {
    let s = x.nrows();
    if s < MIN_ROWS {
        return Err(ErgmError::TooFewSamples { need: MIN_ROWS, got: s });
    }
    let cols = x.varying_columns();
    if cols.is_empty() {
        return Err(ErgmError::Singular("every statistic is constant in the sample".into()));
    }
    let y = x.select_columns(&cols);
    let p = cols.len();
    let lambda = y.covariance();
    let (sigma, b, a) = batch_means(&y)?;
    let (ld_l, rank_l) = log_pdet(&lambda);
    let (ld_s, rank_s) = log_pdet(&sigma);
    if rank_s < rank_l {
        // Too few batches to see every direction: fall back to the
        // per-direction diagonal, which stays finite.
        let ld_ls: f64 = (0..p).map(|k| lambda[(k, k)].ln()).sum();
        let ld_ss: f64 = (0..p).map(|k| sigma[(k, k)].max(lambda[(k, k)] * 1e-12).ln()).sum();
        let ess = s as f64 * ((ld_ls - ld_ss) / p as f64).exp();
        return Ok(EssReport { ess, s, log_det_sigma: ld_ss, log_det_lambda: ld_ls, batch_size: b, batches: a, p_used: p });
    }
    let ess = s as f64 * ((ld_l - ld_s) / rank_l as f64).exp();
    Ok(EssReport { ess, s, log_det_sigma: ld_s, log_det_lambda: ld_l, batch_size: b, batches: a, p_used: rank_l })
}

/// Per-column ESS (the one-dimensional case of [`multivariate_ess`]).
/// Constant columns report NaN.
pub fn univariate_ess(x: &SampleMatrix) -> Result<Vec<f64>> {
    let s = x.nrows();
    if s < MIN_ROWS {
        return Err(ErgmError::TooFewSamples { need: MIN_ROWS, got: s });
    }
    let lambda = x.covariance();
    let sigma = batch_means_cov(x)?;
    Ok((0..x.p())
        .map(|j| {
            let l = lambda[(j, j)];
            if l <= 0.0 {
                f64::NAN
            } else {
                s as f64 * l / sigma[(j, j)].max(l * 1e-12)
            }
        })
        .collect())
}

/// Multivariate ESS summed over chains.
pub fn pooled_ess(x: &SampleMatrix) -> Result<f64> {
    let mut total = 0.0;
    for ch in x.chains() {
        total += multivariate_ess(&x.slice(ch))?.ess;
    }
    Ok(total)
}

/// Two-window Hotelling T² test of equal means between the first
/// `frac_first` and the last `frac_last` of the sample. Each window's
/// mean covariance is its batch-means estimate divided by its length; the
/// reference distribution is F(p, ν − p + 1) with ν the effective degrees
/// of freedom of the summed covariance (Welch's when p = 1).
pub fn geweke_test(x: &SampleMatrix, frac_first: f64, frac_last: f64) -> Result<GewekeResult> {
    if !(frac_first > 0.0 && frac_last > 0.0 && frac_first + frac_last <= 1.0) {
        return Err(ErgmError::InvalidArgument("Geweke windows must be positive and non-overlapping".into()));
    }
    let s = x.nrows();
    let n1 = (frac_first * s as f64).floor() as usize;
    let n2 = (frac_last * s as f64).floor() as usize;
    if n1 < MIN_ROWS || n2 < MIN_ROWS {
        return Err(ErgmError::TooFewSamples { need: MIN_ROWS * 2, got: s });
    }
    let cols = x.varying_columns();
    if cols.is_empty() {
        return Ok(GewekeResult { t2: 0.0, p_value: 1.0, df1: 0.0, df2: f64::INFINITY });
    }
    let y = x.select_columns(&cols);
    let w1 = y.slice(0..n1);
    let w2 = y.slice(s - n2..s);
    let p = cols.len();
    let (s1, _, a1) = batch_means(&w1)?;
    let (s2, _, a2) = batch_means(&w2)?;
    let v1 = s1 / n1 as f64;
    let v2 = s2 / n2 as f64;
    let v = &v1 + &v2;
    let d = DVector::from_vec(w1.mean()) - DVector::from_vec(w2.mean());
    // Pseudo-inverse restricted to the support of V.
    let eig = SymmetricEigen::new(v.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let mut t2 = 0.0;
    let mut rank = 0usize;
    for k in 0..p {
        let l = eig.eigenvalues[k];
        let proj = eig.eigenvectors.column(k).dot(&d);
        if l > max * 1e-12 {
            t2 += proj * proj / l;
            rank += 1;
        } else if proj.abs() > 1e-12 * (1.0 + d.norm()) {
            // Mean shift in a direction with no sampling variability.
            return Ok(GewekeResult { t2: f64::INFINITY, p_value: 0.0, df1: p as f64, df2: f64::NAN });
        }
    }
    if rank == 0 {
        return Ok(GewekeResult { t2: 0.0, p_value: 1.0, df1: 0.0, df2: f64::INFINITY });
    }
    let tr = |m: &DMatrix<f64>| m.trace();
    let num = tr(&(&v * &v)) + tr(&v).powi(2);
    let den = (tr(&(&v1 * &v1)) + tr(&v1).powi(2)) / (a1 as f64 - 1.0)
        + (tr(&(&v2 * &v2)) + tr(&v2).powi(2)) / (a2 as f64 - 1.0);
    let nu = (num / den).max(rank as f64);
    let pf = rank as f64;
    let df2 = (nu - pf + 1.0).max(1.0);
    let f = t2 * df2 / (pf * nu);
    let dist = FisherSnedecor::new(pf, df2).map_err(|e| ErgmError::Singular(e.to_string()))?;
    let p_value = 1.0 - dist.cdf(f);
    Ok(GewekeResult { t2, p_value, df1: pf, df2 })
}

/// Least-squares fit of x_s = β₀ + β₁·2^{−s/s₀} at a fixed s₀ (s = 1..S).
pub fn burnin_sse(x: &[f64], s0: f64) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mut sz, mut szz, mut sx, mut szx) = (0.0, 0.0, 0.0, 0.0);
    for (k, &xs) in x.iter().enumerate() {
        let z = (-((k + 1) as f64) / s0 * std::f64::consts::LN_2).exp();
        sz += z;
        szz += z * z;
        sx += xs;
        szx += z * xs;
    }
    let var_z = szz - sz * sz / n;
    let x0 = x.first().copied().unwrap_or(0.0);
    let (b0, b1) = if x.iter().all(|&v| v == x0) {
        (x0, 0.0)
    } else if var_z > 1e-300 * n {
        let b1 = (szx - sz * sx / n) / var_z;
        ((sx - b1 * sz) / n, b1)
    } else {
        (sx / n, 0.0)
    };
    let sse = x
        .iter()
        .enumerate()
        .map(|(k, &xs)| {
            let z = (-((k + 1) as f64) / s0 * std::f64::consts::LN_2).exp();
            (xs - b0 - b1 * z).powi(2)
        })
        .sum();
    (b0, b1, sse)
}

/// Burn-in estimate for the series `direction⊤ g(Y^(s))`: golden-section
/// search on log s₀ over [1, S] minimizing the SSE, with both endpoints
/// evaluated.
pub fn estimate_burnin(x: &SampleMatrix, direction: &[f64]) -> Result<BurninFit> {
    let s = x.nrows();
    if s < 16 {
        return Err(ErgmError::TooFewSamples { need: 16, got: s });
    }
    let series: Vec<f64> = x.rows().map(|r| r.iter().zip(direction).map(|(a, b)| a * b).sum()).collect();
    Ok(burnin_series(&series))
}

/// Burn-in fit for a scalar series.
pub fn burnin_series(series: &[f64]) -> BurninFit {
    let s = series.len();
    let eval = |ls0: f64| {
        let s0 = ls0.exp();
        let (b0, b1, sse) = burnin_sse(series, s0);
        BurninFit { s0, beta0: b0, beta1: b1, sse }
    };
    let (mut lo, mut hi) = (0.0f64, (s as f64).ln());
    // Ties go to the smaller s0.
    let better = |a: &BurninFit, b: &BurninFit| a.sse < b.sse - 1e-12 * (1.0 + b.sse);
    let mut best = eval(lo);
    let top = eval(hi);
    if better(&top, &best) {
        best = top;
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..80 {
        if hi - lo < 1e-6 {
            break;
        }
        if fc.sse <= fd.sse {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = eval(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = eval(d);
        }
        for f in [&fc, &fd] {
            if better(f, &best) {
                best = f.clone();
            }
        }
    }
    best
}
