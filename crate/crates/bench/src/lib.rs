//! Desk-scale benchmark harness: synthetic heterosexual populations,
//! approach-to-equilibrium traces, ESS tables and SAN approach curves.

use std::fmt::Write as _;
use std::time::Instant;

use ergm_core::diag::univariate_ess;
use ergm_core::formula::{parse_constraint_formula, StratSpec, StratWeights};
use ergm_core::sample::Chain;
use ergm_core::san::{san, SanConfig};
use ergm_core::{BoundModel, ChainSpec, ConstraintSpec, ErgmError, Method, Network, Result, SampleMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, Uniform};

/// How sexes are assigned.
#[derive(Debug, Clone, PartialEq)]
pub enum SexAssignment {
    /// F, M, F, M, ...
    Alternating,
    /// Independent draws with this probability of F.
    Weighted(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgeDist {
    Uniform { lo: f64, hi: f64 },
    /// Normal, truncated to `[lo, hi]` by rejection.
    Normal { mean: f64, sd: f64, lo: f64, hi: f64 },
}

/// A categorical attribute drawn independently per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    pub name: String,
    pub levels: Vec<String>,
    pub freqs: Vec<f64>,
}

impl Categorical {
    pub fn new(name: &str, levels: &[&str], freqs: &[f64]) -> Self {
        Categorical {
            name: name.to_string(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
            freqs: freqs.to_vec(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.len() != self.freqs.len() {
            return Err(ErgmError::InvalidArgument(format!("{}: need one frequency per level", self.name)));
        }
        if self.freqs.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
            return Err(ErgmError::InvalidArgument(format!("{}: frequencies must be non-negative", self.name)));
        }
        let s: f64 = self.freqs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(ErgmError::InvalidArgument(format!("{}: frequencies sum to {s}, not 1", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub n: usize,
    pub sex: SexAssignment,
    pub race: Categorical,
    pub age: AgeDist,
    /// Further categorical columns.
    pub extra: Vec<Categorical>,
}

impl PopulationSpec {
    /// Attribute layout resembling a cohabitation survey: a large majority
    /// race and four small groups, ages 15 to 44, a rare sexual-identity
    /// level and an indicator of other partnerships.
    pub fn cohab_like(n: usize) -> Self {
        PopulationSpec {
            n,
            sex: SexAssignment::Alternating,
            race: Categorical::new("race", &["B", "BI", "H", "HI", "W"], &[0.08, 0.03, 0.07, 0.07, 0.75]),
            age: AgeDist::Uniform { lo: 15.0, hi: 45.0 },
            extra: vec![
                Categorical::new("sex_ident", &["bi", "het", "homo"], &[0.04, 0.93, 0.03]),
                Categorical::new("othr_net_deg", &["0", "1+"], &[0.85, 0.15]),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(ErgmError::InvalidArgument("population needs at least one node".into()));
        }
        if let SexAssignment::Weighted(p) = self.sex {
            if !(0.0..=1.0).contains(&p) {
                return Err(ErgmError::InvalidArgument("sex weight must be in [0, 1]".into()));
            }
        }
        match self.age {
            AgeDist::Uniform { lo, hi } if !(lo < hi && lo >= 0.0) => {
                return Err(ErgmError::InvalidArgument("age range must satisfy 0 <= lo < hi".into()))
            }
            AgeDist::Normal { sd, lo, hi, .. } if !(sd > 0.0 && lo < hi && lo >= 0.0) => {
                return Err(ErgmError::InvalidArgument("age needs sd > 0 and 0 <= lo < hi".into()))
            }
            _ => {}
        }
        self.race.validate()?;
        for c in &self.extra {
            c.validate()?;
        }
        Ok(())
    }
}

fn draw_categorical(c: &Categorical, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<String>> {
    let dist = WeightedIndex::new(&c.freqs).map_err(|e| ErgmError::InvalidArgument(format!("{}: {e}", c.name)))?;
    Ok((0..n).map(|_| c.levels[dist.sample(rng)].clone()).collect())
}

/// Edgeless undirected network carrying `sex`, `race`, `age`, `agesq`,
/// `sqrt_age` and the extra columns. Deterministic given `seed`.
pub fn generate_population(spec: &PopulationSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sex: Vec<&str> = match spec.sex {
        SexAssignment::Alternating => (0..n).map(|v| if v % 2 == 0 { "F" } else { "M" }).collect(),
        SexAssignment::Weighted(p) => {
            let u = Uniform::new(0.0, 1.0).unwrap();
            (0..n).map(|_| if u.sample(&mut rng) < p { "F" } else { "M" }).collect()
        }
    };
    let race = draw_categorical(&spec.race, n, &mut rng)?;
    let age: Vec<f64> = match spec.age {
        AgeDist::Uniform { lo, hi } => {
            let u = Uniform::new(lo, hi).unwrap();
            (0..n).map(|_| u.sample(&mut rng).floor()).collect()
        }
        AgeDist::Normal { mean, sd, lo, hi } => {
            let d = Normal::new(mean, sd).map_err(|e| ErgmError::InvalidArgument(e.to_string()))?;
            (0..n)
                .map(|_| loop {
                    let a = d.sample(&mut rng);
                    if (lo..hi).contains(&a) {
                        break a.floor();
                    }
                })
                .collect()
        }
    };
    let mut net = Network::new(n, false, 0)?;
    let attrs = net.attributes_mut();
    attrs.insert_categorical("sex", &sex)?;
    attrs.insert_categorical(&spec.race.name, &race)?;
    attrs.insert_numeric("agesq", age.iter().map(|a| a * a).collect())?;
    attrs.insert_numeric("sqrt_age", age.iter().map(|a| a.sqrt()).collect())?;
    attrs.insert_numeric("age", age)?;
    for c in &spec.extra {
        let col = draw_categorical(c, n, &mut rng)?;
        net.attributes_mut().insert_categorical(&c.name, &col)?;
    }
    Ok(net)
}

/// The cohabitation-style formula over a [`PopulationSpec::cohab_like`] population.
pub const COHAB_FORMULA: &str = "edges + nodefactor(\"sex_ident\", levels=3) + nodecov(\"age\") + nodecov(\"agesq\") \
     + nodefactor(\"race\", levels=-5) + nodefactor(\"othr_net_deg\", levels=-1) \
     + nodematch(\"race\", diff=TRUE) + absdiff(\"sqrt_age\")";

/// Coefficients for [`COHAB_FORMULA`], in its statistic order. Roughly two
/// in five nodes are partnered at equilibrium, with strong same-race
/// preference in the small groups.
pub const COHAB_COEFS: [f64; 15] = [
    -12.0, // edges
    -2.0,  // nodefactor.sex_ident.homo
    0.2,   // nodecov.age
    -0.003, // nodecov.agesq
    -0.5, -0.8, -0.3, -0.6, // nodefactor.race.{B,BI,H,HI}
    -0.7, // nodefactor.othr_net_deg.1+
    3.0, 3.5, 2.5, 3.0, 1.0, // nodematch.race.{B,BI,H,HI,W}
    -1.5, // absdiff.sqrt_age
];

/// Hard constraints of the heterosexual cohabitation setting.
pub const COHAB_CONSTRAINTS: &str = "bd(maxout=1) + blocks(attr=\"sex\", levels2=diag)";

/// A labelled proposal configuration.
#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    pub method: Method,
    pub constraints: ConstraintSpec,
}

impl Variant {
    pub fn new(label: &str, method: Method, constraints: &str) -> Result<Self> {
        Ok(Variant { label: label.to_string(), method, constraints: parse_constraint_formula(constraints)? })
    }
}

/// Plain TNT (constraint violations rejected) and BDStratTNT with and
/// without race stratification, all under [`COHAB_CONSTRAINTS`].
pub fn standard_variants(race_pmat: Option<Vec<Vec<f64>>>) -> Result<Vec<Variant>> {
    let mut strat = Variant::new("bdstrat+strat(race)", Method::BdStrat, COHAB_CONSTRAINTS)?;
    strat.constraints.strat = Some(StratSpec {
        attrs: vec!["race".into()],
        weights: race_pmat.map(StratWeights::Pmat).unwrap_or(StratWeights::Uniform),
    });
    Ok(vec![
        Variant::new("tnt", Method::Tnt, COHAB_CONSTRAINTS)?,
        Variant::new("bdstrat", Method::BdStrat, COHAB_CONSTRAINTS)?,
        strat,
    ])
}

/// Fraction of edges between each pair of levels of `attr` (symmetric,
/// summing to one over the upper triangle), in sorted level order.
pub fn mixing_fractions(net: &Network, attr: &str) -> Result<Vec<Vec<f64>>> {
    let (levels, codes) = net.attributes().categorical(attr)?;
    let k = levels.len();
    let mut m = vec![vec![0.0; k]; k];
    let e = net.edge_count();
    if e == 0 {
        return Err(ErgmError::InvalidArgument("mixing fractions need at least one edge".into()));
    }
    for d in net.sorted_edges() {
        let (a, b) = (codes[d.0], codes[d.1]);
        m[a][b] += 1.0 / e as f64;
        if a != b {
            m[b][a] += 1.0 / e as f64;
        }
    }
    Ok(m)
}

/// Scales entry (a, b) by `factors[a]·factors[b]`: the generic form of
/// upweighting small groups in the stratification matrix.
pub fn upweight_pmat(pmat: &[Vec<f64>], factors: &[f64]) -> Vec<Vec<f64>> {
    pmat.iter()
        .enumerate()
        .map(|(a, row)| row.iter().enumerate().map(|(b, x)| x * factors[a] * factors[b]).collect())
        .collect()
}

/// Statistic traces from one starting network, one block of rows per variant.
#[derive(Debug, Clone)]
pub struct MixingTrace {
    pub names: Vec<String>,
    /// (label, rows of (proposals, statistics)).
    pub runs: Vec<(String, Vec<(u64, Vec<f64>)>)>,
}

impl MixingTrace {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("proposal\tproposals");
        for n in &self.names {
            write!(out, "\t{n}").unwrap();
        }
        out.push('\n');
        for (label, rows) in &self.runs {
            for (k, s) in rows {
                write!(out, "{label}\t{k}").unwrap();
                for v in s {
                    write!(out, "\t{v}").unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    /// First proposal count at which statistic `stat` of run `run` lies
    /// within `rel_tol` of `target` (relative).
    pub fn proposals_to_reach(&self, run: usize, stat: usize, target: f64, rel_tol: f64) -> Option<u64> {
        self.runs[run].1.iter().find(|(_, s)| (s[stat] - target).abs() <= rel_tol * target.abs()).map(|(k, _)| *k)
    }
}

/// Runs each variant from `start` for `total_proposals`, recording the
/// statistics before every `trace_interval`-th proposal (the first row is
/// the starting network).
pub fn mixing_benchmark(
    start: &Network,
    model: &BoundModel,
    coefs: &[f64],
    variants: &[Variant],
    total_proposals: u64,
    trace_interval: u64,
    seed: u64,
) -> Result<MixingTrace> {
    if trace_interval == 0 {
        return Err(ErgmError::InvalidArgument("trace interval must be positive".into()));
    }
    let mut runs = Vec::new();
    for (k, v) in variants.iter().enumerate() {
        let spec = ChainSpec { model, coefs, method: v.method, constraints: &v.constraints };
        let mut chain = Chain::new(start.clone(), &spec, seed.wrapping_add(k as u64))?;
        let mut rows = Vec::with_capacity((total_proposals / trace_interval) as usize);
        for r in 0..total_proposals / trace_interval {
            rows.push((r * trace_interval, chain.stats()));
            chain.advance(trace_interval)?;
        }
        runs.push((v.label.clone(), rows));
    }
    Ok(MixingTrace { names: model.names().to_vec(), runs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssConfig {
    pub samplesize: usize,
    pub interval: u64,
    /// Steps before the first draw of the timed run.
    pub burnin: u64,
    /// Draws of the discarded warm-up run.
    pub warmup_draws: usize,
    pub seed: u64,
}

impl Default for EssConfig {
    fn default() -> Self {
        EssConfig { samplesize: 100_000, interval: 100, burnin: 100, warmup_draws: 1000, seed: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct EssRow {
    pub label: String,
    pub ess: Vec<f64>,
    pub seconds: f64,
    pub means: Vec<f64>,
    /// Batch-means standard errors of `means`.
    pub mean_se: Vec<f64>,
    pub acceptance: f64,
}

impl EssRow {
    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().filter(|x| !x.is_nan()).fold(f64::INFINITY, f64::min)
    }

    pub fn ess_per_second(&self) -> Vec<f64> {
        self.ess.iter().map(|e| e / self.seconds).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EssTable {
    pub names: Vec<String>,
    pub rows: Vec<EssRow>,
}

impl EssTable {
    fn block(&self, out: &mut String, f: impl Fn(&EssRow) -> Vec<f64>) {
        out.push_str("proposal");
        for n in &self.names {
            write!(out, "\t{n}").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.label);
            for v in f(r) {
                if v.is_nan() {
                    out.push_str("\tNA");
                } else {
                    write!(out, "\t{v:.1}").unwrap();
                }
            }
            out.push('\n');
        }
    }

    /// ESS block, a blank line, then the ESS-per-second block.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        self.block(&mut out, |r| r.ess.clone());
        out.push('\n');
        self.block(&mut out, EssRow::ess_per_second);
        out
    }

    pub fn row(&self, label: &str) -> Option<&EssRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

fn draw(chain: &mut Chain, names: &[String], n: usize, interval: u64) -> Result<SampleMatrix> {
    let mut m = SampleMatrix::new(names.to_vec());
    m.interval = interval as usize;
    for _ in 0..n {
        chain.advance(interval)?;
        m.push_row(&chain.stats());
    }
    Ok(m)
}

/// Per-variant, per-statistic ESS from a single-threaded chain started at
/// `start`, with wall-clock time of the sampling run. A short warm-up run
/// precedes each timed run and is discarded.
pub fn ess_benchmark(
    start: &Network,
    model: &BoundModel,
    coefs: &[f64],
    variants: &[Variant],
    config: &EssConfig,
) -> Result<EssTable> {
    if config.samplesize < ergm_core::diag::MIN_ROWS || config.interval == 0 {
        return Err(ErgmError::InvalidArgument("ESS benchmark needs samplesize >= 8 and a positive interval".into()));
    }
    let names = model.names().to_vec();
    let mut rows = Vec::new();
    for (k, v) in variants.iter().enumerate() {
        let spec = ChainSpec { model, coefs, method: v.method, constraints: &v.constraints };
        let seed = config.seed.wrapping_add(k as u64);
        let mut warm = Chain::new(start.clone(), &spec, seed ^ 0x5eed)?;
        draw(&mut warm, &names, config.warmup_draws, config.interval)?;
        drop(warm);

        let t = Instant::now();
        let mut chain = Chain::new(start.clone(), &spec, seed)?;
        chain.advance(config.burnin)?;
        let m = draw(&mut chain, &names, config.samplesize, config.interval)?;
        let seconds = t.elapsed().as_secs_f64();

        let ess = univariate_ess(&m)?;
        let means = m.mean();
        let cov = ergm_core::diag::batch_means_cov(&m)?;
        let s = m.nrows() as f64;
        let mean_se = (0..names.len()).map(|j| (cov[(j, j)] / s).max(0.0).sqrt()).collect();
        rows.push(EssRow {
            label: v.label.clone(),
            ess,
            seconds,
            means,
            mean_se,
            acceptance: chain.accepted as f64 / chain.proposed.max(1) as f64,
        });
    }
    Ok(EssTable { names, rows })
}

/// Brings an edgeless population to (approximate) equilibrium with a
/// BDStratTNT chain of `steps` proposals.
pub fn equilibrate(
    start: &Network,
    model: &BoundModel,
    coefs: &[f64],
    constraints: &ConstraintSpec,
    steps: u64,
    seed: u64,
) -> Result<Network> {
    let spec = ChainSpec { model, coefs, method: Method::BdStrat, constraints };
    let mut chain = Chain::new(start.clone(), &spec, seed)?;
    chain.advance(steps)?;
    Ok(chain.into_network())
}

/// SAN approach curves per variant.
#[derive(Debug, Clone)]
pub struct SanBench {
    pub names: Vec<String>,
    /// (label, reached, proposals used, trace rows of (proposals, energy, statistics)).
    pub runs: Vec<(String, bool, u64, Vec<(u64, f64, Vec<f64>)>)>,
}

impl SanBench {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("proposal\tproposals\tenergy");
        for n in &self.names {
            write!(out, "\t{n}").unwrap();
        }
        out.push('\n');
        for (label, _, _, rows) in &self.runs {
            for (k, e, s) in rows {
                write!(out, "{label}\t{k}\t{e}").unwrap();
                for v in s {
                    write!(out, "\t{v}").unwrap();
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Anneals `start` toward `targets` with each variant.
pub fn san_benchmark(
    start: &Network,
    model: &BoundModel,
    targets: &[f64],
    variants: &[Variant],
    base: &SanConfig,
) -> Result<SanBench> {
    let mut runs = Vec::new();
    for v in variants {
        let cfg = SanConfig { targets: targets.to_vec(), method: v.method, ..base.clone() };
        let out = san(start, model, &v.constraints, &cfg)?;
        let rows = out.trace.iter().map(|r| (r.proposals, r.energy, r.stats.clone())).collect();
        runs.push((v.label.clone(), out.reached, out.proposals, rows));
    }
    Ok(SanBench { names: model.names().to_vec(), runs })
}
