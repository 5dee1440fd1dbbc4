//! `ergm`: batch front end. Every command writes TSV to stdout or `--out`.
//! Failures print `error\t<tag>\t<message>` on stderr and exit with
//! 2 (usage), 3 (data), 4 (numerical) or 5 (nonconvergence).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ergm_bench::{
    equilibrate, ess_benchmark, generate_population, mixing_benchmark, mixing_fractions, san_benchmark, standard_variants,
    upweight_pmat, EssConfig, PopulationSpec, Variant, COHAB_COEFS, COHAB_CONSTRAINTS, COHAB_FORMULA,
};
use ergm_core::diag::{geweke_test, multivariate_ess, univariate_ess};
use ergm_core::formula::StratWeights;
use ergm_core::infer::{mcmle_fit, mple, CdControl, Init, McmleControl, SeKind, TerminationControl, TerminationKind};
use ergm_core::loglik::{loglik, BridgeControl};
use ergm_core::san::{reciprocal_target_weights, san, SanConfig};
use ergm_core::sample::sample;
use ergm_core::{
    parse_constraint_formula, BoundModel, ChainSpec, ConstraintSpec, ErgmError, ErrorKind, Method, Network, SampleMatrix,
    SamplerConfig,
};

enum Failure {
    Usage(String),
    Engine(ErgmError),
}

impl From<ErgmError> for Failure {
    fn from(e: ErgmError) -> Self {
        Failure::Engine(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

#[derive(Parser)]
#[command(name = "ergm", version, about = "Exponential-family random graph models: simulation, annealing and estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw networks or statistics from a model.
    Simulate(SimulateArgs),
    /// Anneal a network toward target statistics.
    San(SanArgs),
    /// Maximum pseudo-likelihood estimate.
    Mple(MpleArgs),
    /// Monte Carlo maximum likelihood estimate.
    Fit(FitArgs),
    /// Log-likelihood, deviances and information criteria at given coefficients.
    Loglik(LoglikArgs),
    /// Effective sample size and Geweke diagnostic of a statistics TSV.
    Ess(EssArgs),
    /// Benchmarks on a synthetic population.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct ModelArgs {
    /// Network file (edge list with `%n`, `%directed`, `%bipartite` headers).
    #[arg(long)]
    network: PathBuf,
    /// Vertex attribute CSV.
    #[arg(long)]
    attrs: Option<PathBuf>,
    /// Model formula, e.g. "edges + triangle" (or @file).
    #[arg(long)]
    formula: String,
    /// Constraints and hints, e.g. "bd(maxout=1) + sparse" (or @file).
    #[arg(long, default_value = "")]
    constraints: String,
    /// Coefficients of the offset terms, in order (or @file); accepts -Inf and Inf.
    #[arg(long, allow_hyphen_values = true)]
    offset_coef: Option<String>,
    /// Proposal family.
    #[arg(long, default_value = "auto")]
    proposal: String,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SamplerArgs {
    /// MH steps discarded before the first draw.
    #[arg(long, default_value_t = 16384)]
    burnin: u64,
    /// MH steps between draws.
    #[arg(long, default_value_t = 1024)]
    interval: u64,
    /// Parallel chains.
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl SamplerArgs {
    fn config(&self, samplesize: usize, seed: u64, target_ess: Option<f64>) -> SamplerConfig {
        SamplerConfig {
            burnin: self.burnin,
            interval: self.interval,
            samplesize,
            target_ess,
            chains: self.chains,
            seed,
            workers: Some(self.workers),
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputKind {
    Stats,
    Network,
    Edgelist,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Coefficients of the non-offset terms (or @file).
    #[arg(long, allow_hyphen_values = true)]
    coef: String,
    /// Draws per chain.
    #[arg(long, default_value_t = 1)]
    nsim: usize,
    /// Keep sampling until the multivariate ESS reaches this value.
    #[arg(long)]
    target_ess: Option<f64>,
    #[arg(long, value_enum, default_value = "stats")]
    output: OutputKind,
}

#[derive(Clone, Copy, ValueEnum)]
enum InvCov {
    Adaptive,
    Reciprocal,
}

#[derive(Args)]
struct SanArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Targets for the non-offset statistics (or @file).
    #[arg(long, allow_hyphen_values = true)]
    targets: String,
    #[arg(long, default_value_t = 4)]
    runs: usize,
    #[arg(long, default_value_t = 65536)]
    steps_per_run: u64,
    /// Initial temperature [default: number of non-offset statistics].
    #[arg(long)]
    tau0: Option<f64>,
    /// Apply finite offset coefficients as bias terms too.
    #[arg(long)]
    finite_offsets: bool,
    /// Weight matrix: adaptive updates or fixed reciprocal squared targets.
    #[arg(long, value_enum, default_value = "adaptive")]
    invcov: InvCov,
    /// Trace every this many proposals (0 = no trace).
    #[arg(long, default_value_t = 0)]
    trace_interval: u64,
    /// Trace TSV path.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Exit 0 even when the targets are not hit exactly.
    #[arg(long)]
    allow_inexact_targets: bool,
}

#[derive(Args)]
struct MpleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long, default_value = "naive")]
    se: String,
    /// Draws for the sandwich variance.
    #[arg(long, default_value_t = 1024)]
    samplesize: usize,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Starting values: mple, cd [default: mple, or cd under degree bounds].
    #[arg(long)]
    init: Option<String>,
    #[arg(long, default_value = "confidence")]
    termination: String,
    #[arg(long, default_value_t = 1024)]
    samplesize: usize,
    /// Adaptive sampling to this ESS per iteration.
    #[arg(long)]
    target_ess: Option<f64>,
    #[arg(long, default_value_t = 60)]
    max_iter: usize,
    /// Observed statistics for the non-offset terms (or @file); a network
    /// matching them is built by annealing first.
    #[arg(long, allow_hyphen_values = true)]
    target_stats: Option<String>,
    #[arg(long)]
    allow_inexact_targets: bool,
}

#[derive(Args)]
struct LoglikArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Coefficients of the non-offset terms (or @file).
    #[arg(long, allow_hyphen_values = true)]
    coef: String,
    #[arg(long = "bridge-J", default_value_t = 16)]
    bridge_j: usize,
    #[arg(long = "bridge-K", default_value_t = 1024)]
    bridge_k: usize,
    #[arg(long, default_value_t = 16)]
    bridge_interval: u64,
    /// Refine the bridge until its standard error is at most this.
    #[arg(long)]
    target_se: Option<f64>,
}

#[derive(Args)]
struct EssArgs {
    /// Statistics TSV (header row; optional leading `chain` column).
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PopArgs {
    /// Population size.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Seed of the population generator.
    #[arg(long, default_value_t = 1)]
    pop_seed: u64,
    /// Chain seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Approach to equilibrium from the empty network.
    Mixing {
        #[command(flatten)]
        pop: PopArgs,
        #[arg(long, default_value_t = 4_000_000)]
        total: u64,
        #[arg(long, default_value_t = 10_000)]
        trace_interval: u64,
    },
    /// Per-statistic ESS at equal proposal counts.
    Ess {
        #[command(flatten)]
        pop: PopArgs,
        #[arg(long, default_value_t = 100_000)]
        samplesize: usize,
        #[arg(long, default_value_t = 100)]
        interval: u64,
        #[arg(long, default_value_t = 100)]
        burnin: u64,
        /// BDStratTNT proposals used to reach equilibrium first.
        #[arg(long, default_value_t = 5_000_000)]
        equilibrate: u64,
        /// Per-race-level multipliers for an extra upweighted stratified variant (or @file).
        #[arg(long)]
        upweight: Option<String>,
        /// Also print ESS per second (wall-clock, so not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Annealing from the empty network toward equilibrium statistics.
    San {
        #[command(flatten)]
        pop: PopArgs,
        #[arg(long, default_value_t = 4)]
        runs: usize,
        #[arg(long, default_value_t = 1 << 20)]
        steps_per_run: u64,
        #[arg(long, default_value_t = 10_000)]
        trace_interval: u64,
        #[arg(long, default_value_t = 5_000_000)]
        equilibrate: u64,
    },
}

/// Inline text, or the contents of a file when prefixed with `@`.
fn indirect(s: &str) -> CliResult<String> {
    match s.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path)
            .map(|t| t.trim().to_string())
            .map_err(|e| Failure::Engine(ErgmError::Format { path: path.to_string(), line: 0, msg: e.to_string() })),
        None => Ok(s.to_string()),
    }
}

fn parse_vec(flag: &str, s: &str) -> CliResult<Vec<f64>> {
    let text = indirect(s)?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Failure::Usage(format!("--{flag}: '{t}' is not a number"))))
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Engine(e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

struct Loaded {
    net: Network,
    model: BoundModel,
    constraints: ConstraintSpec,
    method: Method,
}

fn load(a: &ModelArgs) -> CliResult<Loaded> {
    let net = Network::read(&a.network, a.attrs.as_deref())?;
    let mut model = BoundModel::from_formula(&indirect(&a.formula)?, &net)?;
    let cons_text = indirect(&a.constraints)?;
    let constraints =
        if cons_text.trim().is_empty() { ConstraintSpec::default() } else { parse_constraint_formula(&cons_text)? };
    let n_off = model.p() - model.n_free();
    match &a.offset_coef {
        Some(s) => model.set_offset_coefs(&parse_vec("offset-coef", s)?)?,
        None if n_off > 0 => return usage(format!("the formula has {n_off} offset statistics: give --offset-coef")),
        None => {}
    }
    let method = a.proposal.parse::<Method>().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(Loaded { net, model, constraints, method })
}

fn free_coefs(model: &BoundModel, flag: &str, s: &str) -> CliResult<Vec<f64>> {
    let v = parse_vec(flag, s)?;
    if v.len() != model.n_free() {
        return usage(format!("--{flag}: expected {} values, got {}", model.n_free(), v.len()));
    }
    Ok(v)
}

fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let l = load(&a.model)?;
    let coefs = l.model.full_coefs(&free_coefs(&l.model, "coef", &a.coef)?);
    let spec = ChainSpec { model: &l.model, coefs: &coefs, method: l.method, constraints: &l.constraints };
    let mut cfg = a.sampler.config(a.nsim, a.model.seed, a.target_ess);
    cfg.keep_edgelists = matches!(a.output, OutputKind::Edgelist);
    let out = sample(&l.net, &spec, &cfg)?;
    let text = match a.output {
        OutputKind::Stats => out.output.sample.to_tsv(),
        OutputKind::Network => out.output.networks[0].to_text(),
        OutputKind::Edgelist => {
            let mut s = String::from("chain\tdraw\ttail\thead\n");
            for (c, draws) in out.output.edgelists.iter().enumerate() {
                for (d, edges) in draws.iter().enumerate() {
                    for (i, j) in edges {
                        writeln!(s, "{}\t{}\t{}\t{}", c + 1, d + 1, i + 1, j + 1).unwrap();
                    }
                }
            }
            s
        }
    };
    emit(a.model.out.as_deref(), &text)
}

fn run_san(a: &SanArgs) -> CliResult<()> {
    let l = load(&a.model)?;
    let targets = free_coefs(&l.model, "targets", &a.targets)?;
    let invcov_override = match a.invcov {
        InvCov::Adaptive => None,
        InvCov::Reciprocal => Some(reciprocal_target_weights(&targets)?),
    };
    let cfg = SanConfig {
        runs: a.runs,
        steps_per_run: a.steps_per_run,
        tau0: a.tau0,
        finite_offsets: a.finite_offsets,
        invcov_override,
        trace_interval: a.trace_interval,
        method: l.method,
        seed: a.model.seed,
        ..SanConfig::new(targets)
    };
    let out = san(&l.net, &l.model, &l.constraints, &cfg)?;
    if let Some(p) = &a.trace {
        emit(Some(p), &out.trace_tsv())?;
    }
    emit(a.model.out.as_deref(), &out.network.to_text())?;
    if !out.reached && !a.allow_inexact_targets {
        return Err(Failure::Engine(ErgmError::NonConvergence(format!(
            "targets not reached: statistics {:?}, energy {}",
            out.stats, out.energy
        ))));
    }
    Ok(())
}

fn run_mple(a: &MpleArgs) -> CliResult<()> {
    let l = load(&a.model)?;
    let se = match a.se.as_str() {
        "naive" => SeKind::Naive,
        "sandwich" => SeKind::Sandwich,
        other => return usage(format!("--se: expected naive or sandwich, got '{other}'")),
    };
    let cfg = a.sampler.config(a.samplesize, a.model.seed, None);
    let fit = mple(&l.net, &l.model, &l.constraints, l.method, se, &cfg)?;
    emit(a.model.out.as_deref(), &fit.to_tsv())
}

fn run_fit(a: &FitArgs) -> CliResult<()> {
    let l = load(&a.model)?;
    let kind = a.termination.parse::<TerminationKind>().map_err(|e| Failure::Usage(e.to_string()))?;
    let init = match a.init.as_deref() {
        None => None,
        Some("mple") => Some(Init::Mple),
        Some("cd") => Some(Init::Cd),
        Some(other) => return usage(format!("--init: expected mple or cd, got '{other}'")),
    };
    let control = McmleControl {
        sampler: a.sampler.config(a.samplesize, a.model.seed, a.target_ess),
        termination: TerminationControl { kind, ..Default::default() },
        max_iter: a.max_iter,
        init,
        cd: CdControl { seed: a.model.seed, ..Default::default() },
    };
    let (net, g_obs) = match &a.target_stats {
        None => (l.net.clone(), None),
        Some(s) => {
            let targets = free_coefs(&l.model, "target-stats", s)?;
            let cfg = SanConfig { method: l.method, seed: a.model.seed, ..SanConfig::new(targets.clone()) };
            let out = san(&l.net, &l.model, &l.constraints, &cfg)?;
            if !out.reached && !a.allow_inexact_targets {
                return Err(Failure::Engine(ErgmError::NonConvergence(format!(
                    "annealing did not reach the target statistics (energy {})",
                    out.energy
                ))));
            }
            let mut g = out.stats.clone();
            for (k, t) in l.model.free_indices().into_iter().zip(targets) {
                g[k] = t;
            }
            (out.network, Some(g))
        }
    };
    let fit = mcmle_fit(&net, &l.model, &l.constraints, l.method, g_obs.as_deref(), &control)?;
    emit(a.model.out.as_deref(), &fit.to_tsv())?;
    if !fit.converged {
        return Err(Failure::Engine(ErgmError::NonConvergence(format!("stopped after {} iterations", fit.iterations))));
    }
    Ok(())
}

fn run_loglik(a: &LoglikArgs) -> CliResult<()> {
    let l = load(&a.model)?;
    let theta = free_coefs(&l.model, "coef", &a.coef)?;
    let ctrl = BridgeControl {
        j: a.bridge_j,
        k: a.bridge_k,
        interval: a.bridge_interval,
        target_se: a.target_se,
        seed: a.model.seed,
        ..Default::default()
    };
    let r = loglik(&l.net, &l.model, &l.constraints, l.method, &theta, None, &ctrl)?;
    emit(a.model.out.as_deref(), &r.to_tsv())
}

fn run_ess(a: &EssArgs) -> CliResult<()> {
    let path = a.stats.display().to_string();
    let text = std::fs::read_to_string(&a.stats).map_err(|e| Failure::Engine(e.into()))?;
    let m = SampleMatrix::from_tsv(&text, &path)?;
    let uni = univariate_ess(&m)?;
    let multi = multivariate_ess(&m)?;
    let gw = geweke_test(&m, 0.1, 0.5)?;
    let mut s = String::from("statistic\tess\n");
    for (n, e) in m.names().iter().zip(&uni) {
        writeln!(s, "{n}\t{}", ergm_core::sample_matrix::fmt_cell(*e)).unwrap();
    }
    writeln!(s, "\nfield\tvalue\nrows\t{}\nmultivariate_ess\t{}\ngeweke_t2\t{}\ngeweke_p\t{}", m.nrows(), multi.ess, gw.t2, gw.p_value)
        .unwrap();
    emit(a.out.as_deref(), &s)
}

fn cohab(p: &PopArgs) -> CliResult<(Network, BoundModel, ConstraintSpec)> {
    let pop = generate_population(&PopulationSpec::cohab_like(p.n), p.pop_seed)?;
    let model = BoundModel::from_formula(COHAB_FORMULA, &pop)?;
    Ok((pop, model, parse_constraint_formula(COHAB_CONSTRAINTS)?))
}

fn run_bench(cmd: &BenchCommand) -> CliResult<()> {
    match cmd {
        BenchCommand::Mixing { pop, total, trace_interval } => {
            let (net, model, _) = cohab(pop)?;
            let variants = standard_variants(None)?;
            let tr = mixing_benchmark(&net, &model, &COHAB_COEFS, &variants, *total, *trace_interval, pop.seed)?;
            emit(pop.out.as_deref(), &tr.to_tsv())
        }
        BenchCommand::Ess { pop, samplesize, interval, burnin, equilibrate: steps, upweight, timing } => {
            let (net, model, cons) = cohab(pop)?;
            let eq = equilibrate(&net, &model, &COHAB_COEFS, &cons, *steps, pop.seed)?;
            let mmr = mixing_fractions(&eq, "race")?;
            let mut variants = standard_variants(Some(mmr.clone()))?;
            if let Some(u) = upweight {
                let f = parse_vec("upweight", u)?;
                if f.len() != mmr.len() {
                    return usage(format!("--upweight: expected {} factors, got {}", mmr.len(), f.len()));
                }
                let mut v: Variant = variants[2].clone();
                v.label = "bdstrat+strat(race.mod)".into();
                if let Some(s) = v.constraints.strat.as_mut() {
                    s.weights = StratWeights::Pmat(upweight_pmat(&mmr, &f));
                }
                variants.push(v);
            }
            let cfg = EssConfig { samplesize: *samplesize, interval: *interval, burnin: *burnin, seed: pop.seed, ..Default::default() };
            let tab = ess_benchmark(&eq, &model, &COHAB_COEFS, &variants, &cfg)?;
            let text = if *timing {
                tab.to_tsv()
            } else {
                tab.to_tsv().split("\n\n").next().unwrap_or_default().to_string() + "\n"
            };
            emit(pop.out.as_deref(), &text)
        }
        BenchCommand::San { pop, runs, steps_per_run, trace_interval, equilibrate: steps } => {
            let (net, model, cons) = cohab(pop)?;
            let eq = equilibrate(&net, &model, &COHAB_COEFS, &cons, *steps, pop.seed)?;
            let targets = model.summary_stats(&eq);
            let variants = standard_variants(Some(mixing_fractions(&eq, "race")?))?;
            let base = SanConfig {
                runs: *runs,
                steps_per_run: *steps_per_run,
                trace_interval: *trace_interval,
                seed: pop.seed,
                ..SanConfig::new(Vec::new())
            };
            let out = san_benchmark(&net, &model, &targets, &variants, &base)?;
            emit(pop.out.as_deref(), &out.to_tsv())
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::San(a) => run_san(a),
        Command::Mple(a) => run_mple(a),
        Command::Fit(a) => run_fit(a),
        Command::Loglik(a) => run_loglik(a),
        Command::Ess(a) => run_ess(a),
        Command::Bench(b) => run_bench(b),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::from(if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 });
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error\tusage\t{}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error\tusage\t{}", one_line(&m));
            ExitCode::from(2)
        }
        Err(Failure::Engine(e)) => {
            eprintln!("error\t{}\t{}", e.tag(), one_line(&e.to_string()));
            ExitCode::from(match e.kind() {
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
                ErrorKind::NonConvergence => 5,
            })
        }
    }
}
