//! Metropolis–Hastings chains: single steps, fixed schedules and the
//! adaptive effective-sample-size loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diag;
use crate::error::{ErgmError, Result};
use crate::formula::ConstraintSpec;
use crate::model::BoundModel;
use crate::network::{Dyad, Network};
use crate::propose::{Method, ProposalState};
use crate::sample_matrix::SampleMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub burnin: u64,
    pub interval: u64,
    pub samplesize: usize,
    /// Enables the adaptive loop.
    pub target_ess: Option<f64>,
    pub chains: usize,
    pub seed: u64,
    /// Worker threads for parallel chains (`None`: rayon default).
    pub workers: Option<usize>,
    /// Adaptive round cap.
    pub max_rounds: usize,
    /// Geweke p-value below which a sample is considered unconverged.
    pub geweke_alpha: f64,
    /// Store the edge list of every retained draw.
    pub keep_edgelists: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            burnin: 16384,
            interval: 1024,
            samplesize: 1024,
            target_ess: None,
            chains: 1,
            seed: 1,
            workers: None,
            max_rounds: 100,
            geweke_alpha: 0.05,
            keep_edgelists: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 || self.samplesize == 0 || self.chains == 0 || self.max_rounds == 0 {
            return Err(ErgmError::InvalidArgument(
                "interval, samplesize, chains and max_rounds must be positive".into(),
            ));
        }
        if let Some(t) = self.target_ess {
            if !(t > 0.0) {
                return Err(ErgmError::InvalidArgument("target ESS must be positive".into()));
            }
        }
        Ok(())
    }
}

/// What the chains sample from.
#[derive(Debug, Clone, Copy)]
pub struct ChainSpec<'a> {
    pub model: &'a BoundModel,
    /// Full coefficient vector; offset entries may be ±∞.
    pub coefs: &'a [f64],
    pub method: Method,
    pub constraints: &'a ConstraintSpec,
}

/// Log acceptance ratio for a toggle with change statistics `delta`.
/// An infinite coefficient against a zero change contributes nothing;
/// any −∞ contribution wins over +∞ ones.
pub fn log_accept(coefs: &[f64], delta: &[f64], adding: bool, log_q_ratio: f64) -> f64 {
    let sign = if adding { 1.0 } else { -1.0 };
    let mut sum = log_q_ratio;
    let mut pos_inf = false;
    for (&c, &d) in coefs.iter().zip(delta) {
        if d == 0.0 {
            continue;
        }
        let t = sign * c * d;
        if t == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        if t == f64::INFINITY {
            pos_inf = true;
        } else {
            sum += t;
        }
    }
    if pos_inf {
        f64::INFINITY
    } else {
        sum
    }
}

/// One MH step. `stats` and `delta` have length p; `stats` is updated
/// in place on acceptance.
pub fn mh_step<R: Rng + ?Sized>(
    net: &mut Network,
    model: &BoundModel,
    coefs: &[f64],
    proposal: &mut ProposalState,
    stats: &mut [f64],
    delta: &mut [f64],
    rng: &mut R,
) -> Result<bool> {
    Ok(mh_step_toggle(net, model, coefs, proposal, stats, delta, rng)?.is_some())
}

/// As [`mh_step`], returning the accepted toggle.
pub fn mh_step_toggle<R: Rng + ?Sized>(
    net: &mut Network,
    model: &BoundModel,
    coefs: &[f64],
    proposal: &mut ProposalState,
    stats: &mut [f64],
    delta: &mut [f64],
    rng: &mut R,
) -> Result<Option<Dyad>> {
    let Some(p) = proposal.propose(net, rng)? else {
        return Ok(None);
    };
    let adding = !net.has_edge(p.i, p.j);
    model.change_stats_into(net, p.i, p.j, delta);
    let lar = log_accept(coefs, delta, adding, p.log_q_ratio);
    let accept = lar >= 0.0 || (lar > f64::NEG_INFINITY && rng.random::<f64>() < lar.exp());
    if accept {
        net.toggle_unchecked(p.i, p.j);
        proposal.commit(net, p.i, p.j);
        crate::model::apply_toggle_stats(stats, delta, adding);
        return Ok(Some((p.i, p.j)));
    }
    Ok(None)
}

/// A single chain with its own network, proposal state and RNG.
/// Statistics are tracked relative to the starting network.
#[derive(Debug, Clone)]
pub struct Chain<'a> {
    net: Network,
    model: &'a BoundModel,
    coefs: Vec<f64>,
    proposal: ProposalState,
    base: Vec<f64>,
    rel: Vec<f64>,
    delta: Vec<f64>,
    rng: ChaCha8Rng,
    pub proposed: u64,
    pub accepted: u64,
}

impl<'a> Chain<'a> {
    pub fn new(net: Network, spec: &ChainSpec<'a>, seed: u64) -> Result<Self> {
        if spec.coefs.len() != spec.model.p() {
            return Err(ErgmError::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                spec.model.p(),
                spec.coefs.len()
            )));
        }
        if spec.coefs.iter().any(|c| c.is_nan()) {
            return Err(ErgmError::InvalidArgument("coefficient is NaN".into()));
        }
        let proposal = ProposalState::new(spec.method, &net, spec.constraints)?;
        let base = spec.model.summary_stats(&net);
        let p = base.len();
        Ok(Chain {
            net,
            model: spec.model,
            coefs: spec.coefs.to_vec(),
            proposal,
            base,
            rel: vec![0.0; p],
            delta: vec![0.0; p],
            rng: ChaCha8Rng::seed_from_u64(seed),
            proposed: 0,
            accepted: 0,
        })
    }

    pub fn step(&mut self) -> Result<bool> {
        self.proposed += 1;
        let a = mh_step(
            &mut self.net,
            self.model,
            &self.coefs,
            &mut self.proposal,
            &mut self.rel,
            &mut self.delta,
            &mut self.rng,
        )?;
        self.accepted += a as u64;
        Ok(a)
    }

    pub fn advance(&mut self, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    pub fn stats(&self) -> Vec<f64> {
        self.base.iter().zip(&self.rel).map(|(b, r)| b + r).collect()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn proposal_name(&self) -> &'static str {
        self.proposal.name()
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub sample: SampleMatrix,
    /// Final network of each chain.
    pub networks: Vec<Network>,
    /// Per chain, the sorted edge list of each retained draw (when requested).
    pub edgelists: Vec<Vec<Vec<Dyad>>>,
    pub proposed: u64,
    pub accepted: u64,
}

impl ChainOutput {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

fn par_map<T, U, F>(items: Vec<T>, workers: Option<usize>, f: F) -> Result<Vec<U>>
where
    T: Send,
    U: Send,
    F: Fn(usize, T) -> Result<U> + Send + Sync,
{
    if items.len() == 1 {
        return items.into_iter().enumerate().map(|(k, t)| f(k, t)).collect();
    }
    let run = || items.into_par_iter().enumerate().map(|(k, t)| f(k, t)).collect::<Result<Vec<U>>>();
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| ErgmError::InvalidArgument(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Fixed schedule: `burnin` steps, then `samplesize` draws every
/// `interval` steps, on `config.chains` chains started from `net`.
pub fn run_chain(net: &Network, spec: &ChainSpec, config: &SamplerConfig) -> Result<ChainOutput> {
    run_from(vec![net.clone(); config.chains], spec, config)
}

/// As [`run_chain`], with one chain per starting network. Chain k uses
/// seed `config.seed + k`.
pub fn run_from(starts: Vec<Network>, spec: &ChainSpec, config: &SamplerConfig) -> Result<ChainOutput> {
    config.validate()?;
    let names = spec.model.names().to_vec();
    let results = par_map(starts, config.workers, |k, net| {
        let mut chain = Chain::new(net, spec, config.seed.wrapping_add(k as u64))?;
        chain.advance(config.burnin)?;
        let mut m = SampleMatrix::new(names.clone());
        m.interval = config.interval as usize;
        let mut els = Vec::new();
        for _ in 0..config.samplesize {
            chain.advance(config.interval)?;
            m.push_row(&chain.stats());
            if config.keep_edgelists {
                els.push(chain.network().sorted_edges());
            }
        }
        Ok((m, els, chain.proposed, chain.accepted, chain.into_network()))
    })?;
    assemble(names, results)
}

type ChainResult = (SampleMatrix, Vec<Vec<Dyad>>, u64, u64, Network);

fn assemble(names: Vec<String>, results: Vec<ChainResult>) -> Result<ChainOutput> {
    let mut sample = SampleMatrix::new(names);
    let mut out = ChainOutput { sample: sample.clone(), networks: Vec::new(), edgelists: Vec::new(), proposed: 0, accepted: 0 };
    for (m, els, p, a, net) in results {
        sample.interval = m.interval;
        sample.append_chain(&m);
        out.edgelists.push(els);
        out.proposed += p;
        out.accepted += a;
        out.networks.push(net);
    }
    out.sample = sample;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveReport {
    pub rounds: usize,
    pub converged: bool,
    /// Pooled multivariate ESS of the returned sample.
    pub ess: f64,
    /// Smallest per-chain Geweke p-value of the last round (NaN if skipped).
    pub geweke_p: f64,
    /// Retained draws discarded as burn-in, per chain.
    pub burnin_rows: usize,
    /// Final thinning interval.
    pub interval: u64,
    /// MH steps per chain, including the initial burn-in.
    pub steps_per_chain: u64,
    /// Number of times the sample was halved.
    pub thinnings: u32,
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutput {
    pub output: ChainOutput,
    pub report: AdaptiveReport,
}

/// Burn-in scalarization direction: the free coefficients, normalized;
/// falls back to inverse standard deviations when they are all zero.
fn burnin_direction(spec: &ChainSpec, sample: &SampleMatrix) -> Vec<f64> {
    let mask = spec.model.offset_mask();
    let mut d: Vec<f64> = spec
        .coefs
        .iter()
        .zip(mask)
        .map(|(&c, &off)| if off || !c.is_finite() { 0.0 } else { c })
        .collect();
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        d.iter_mut().for_each(|x| *x /= norm);
        return d;
    }
    let cov = sample.covariance();
    (0..d.len())
        .map(|j| if mask[j] || cov[(j, j)] <= 0.0 { 0.0 } else { 1.0 / cov[(j, j)].sqrt() })
        .collect()
}

/// Adaptive loop: extend, thin past 2×samplesize, fit burn-in, check
/// Geweke, compute ESS, and extrapolate until the target ESS is reached.
pub fn adaptive_run(net: &Network, spec: &ChainSpec, config: &SamplerConfig) -> Result<AdaptiveOutput> {
    adaptive_from(vec![net.clone(); config.chains], spec, config)
}

pub fn adaptive_from(starts: Vec<Network>, spec: &ChainSpec, config: &SamplerConfig) -> Result<AdaptiveOutput> {
    config.validate()?;
    let target = config
        .target_ess
        .ok_or_else(|| ErgmError::InvalidArgument("adaptive sampling needs a target ESS".into()))?;
    let names = spec.model.names().to_vec();
    let s0 = config.samplesize;
    let cap = 2 * s0;

    struct Worker<'a> {
        chain: Chain<'a>,
        sample: SampleMatrix,
        els: Vec<Vec<Dyad>>,
        interval: u64,
        since_last: u64,
        thinnings: u32,
    }

    let mut workers: Vec<Worker> = par_map(starts, config.workers, |k, net| {
        let mut chain = Chain::new(net, spec, config.seed.wrapping_add(k as u64))?;
        chain.advance(config.burnin)?;
        let mut sample = SampleMatrix::new(names.clone());
        sample.interval = config.interval as usize;
        Ok(Worker { chain, sample, els: Vec::new(), interval: config.interval, since_last: 0, thinnings: 0 })
    })?;

    let mut budget = config.interval * s0 as u64;
    let mut report = AdaptiveReport {
        rounds: 0,
        converged: false,
        ess: 0.0,
        geweke_p: f64::NAN,
        burnin_rows: 0,
        interval: config.interval,
        steps_per_chain: config.burnin,
        thinnings: 0,
    };

    let extend = |w: &mut Worker, budget: u64| -> Result<()> {
        let mut spent = 0u64;
        while spent < budget {
            let need = w.interval - w.since_last;
            w.chain.advance(need)?;
            spent += need;
            w.since_last = 0;
            w.sample.push_row(&w.chain.stats());
            if config.keep_edgelists {
                w.els.push(w.chain.network().sorted_edges());
            }
            if w.sample.nrows() > cap {
                let n = w.sample.nrows();
                w.sample.thin_half();
                if config.keep_edgelists {
                    w.els = std::mem::take(&mut w.els).into_iter().step_by(2).collect();
                }
                if n % 2 == 0 {
                    // The newest draw was dropped.
                    w.since_last = w.interval;
                }
                w.interval *= 2;
                w.thinnings += 1;
            }
        }
        Ok(())
    };

    let mut last_burn;
    loop {
        report.rounds += 1;
        let b = budget;
        let ws = std::mem::take(&mut workers);
        workers = par_map(ws, config.workers, |_, mut w| {
            extend(&mut w, b)?;
            Ok(w)
        })?;
        report.steps_per_chain += b;
        let interval = workers[0].interval;
        report.interval = interval;
        report.thinnings = workers[0].thinnings;

        // Burn-in: the most conservative fit across chains.
        let rows = workers[0].sample.nrows();
        let mut burn = 0usize;
        for w in &workers {
            let dir = burnin_direction(spec, &w.sample);
            if let Ok(fit) = diag::estimate_burnin(&w.sample, &dir) {
                burn = burn.max(fit.s0.ceil() as usize);
            }
        }
        last_burn = burn;
        let unconverged_burn = burn > rows / 2;

        let post: Vec<SampleMatrix> = workers.iter().map(|w| w.sample.slice(burn.min(rows)..rows)).collect();
        let mut gp = f64::NAN;
        let mut geweke_fail = unconverged_burn;
        if !unconverged_burn {
            for m in &post {
                match diag::geweke_test(m, 0.1, 0.5) {
                    Ok(g) => {
                        gp = if gp.is_nan() { g.p_value } else { gp.min(g.p_value) };
                    }
                    Err(ErgmError::TooFewSamples { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            geweke_fail = gp < config.geweke_alpha;
        }
        report.geweke_p = gp;
        report.burnin_rows = burn;

        let ess: f64 = if geweke_fail {
            0.0
        } else {
            let mut total = 0.0;
            for m in &post {
                total += match diag::multivariate_ess(m) {
                    Ok(r) => r.ess,
                    Err(ErgmError::Singular(_)) => m.nrows() as f64,
                    Err(ErgmError::TooFewSamples { .. }) => 0.0,
                    Err(e) => return Err(e),
                };
            }
            total
        };
        report.ess = ess;

        if !geweke_fail && ess >= target {
            report.converged = true;
            break;
        }
        if report.rounds >= config.max_rounds {
            log::warn!("adaptive sampling stopped after {} rounds (ESS {ess:.1} < {target})", report.rounds);
            break;
        }
        let base = interval * s0 as u64;
        budget = if geweke_fail {
            base
        } else {
            let extra = if ess > 0.0 { base as f64 * (target / ess - 1.0) } else { f64::INFINITY };
            extra.clamp(base as f64 / 4.0, 16.0 * base as f64).ceil() as u64
        };
    }

    let mut results = Vec::with_capacity(workers.len());
    for w in workers {
        let rows = w.sample.nrows();
        let from = last_burn.min(rows);
        let mut m = w.sample.slice(from..rows);
        m.interval = w.interval as usize;
        let els = if config.keep_edgelists { w.els[from..].to_vec() } else { Vec::new() };
        results.push((m, els, w.chain.proposed, w.chain.accepted, w.chain.into_network()));
    }
    let output = assemble(names, results)?;
    Ok(AdaptiveOutput { output, report })
}

/// Dispatches on `config.target_ess`.
pub fn sample(net: &Network, spec: &ChainSpec, config: &SamplerConfig) -> Result<AdaptiveOutput> {
    sample_from(vec![net.clone(); config.chains], spec, config)
}

pub fn sample_from(starts: Vec<Network>, spec: &ChainSpec, config: &SamplerConfig) -> Result<AdaptiveOutput> {
    if config.target_ess.is_some() {
        return adaptive_from(starts, spec, config);
    }
    let output = run_from(starts, spec, config)?;
    let report = AdaptiveReport {
        rounds: 1,
        converged: true,
        ess: f64::NAN,
        geweke_p: f64::NAN,
        burnin_rows: 0,
        interval: config.interval,
        steps_per_chain: config.burnin + config.interval * config.samplesize as u64,
        thinnings: 0,
    };
    Ok(AdaptiveOutput { output, report })
}
