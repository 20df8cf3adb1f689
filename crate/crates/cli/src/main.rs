//! `klctl`: command-line driver for the kl-control library.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kl_control::config::{load_config, ExperimentSection, LoadedConfig, Model};
use kl_control::envs::{CartPoleLqg, GridWorld};
use kl_control::harness::{
    config_hash, run_cartpole_experiment, run_gridworld_experiment, run_verification_suite, CartpoleOptions,
    ExperimentConfig, GridworldOptions, MetricRow, MetricTable, VerifyOptions, BUILD_ID,
};
use kl_control::lqr::{closed_loop_spectral_radius, linear_policy_cost, lqr_solve, LqgProblem};
use kl_control::mdp::{Horizon, Start, TabularPolicy};
use kl_control::psi::{iterate_policies, UpdateSchedule};
use kl_control::solvers::{finite_horizon_dp, value_iteration, DEFAULT_TOL};
use kl_control::tabular::LearningRate;
use kl_control::{expected_cost, Error, FiniteMdp};
use rand::SeedableRng;

#[derive(Parser)]
#[command(name = "klctl", version, about = "Exact KL-control solvers, Psi-learning and LSPsi experiments")]
struct Cli {
    /// TOML model or environment description.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; trials use seed, seed + 1, ...
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of seeded trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Schedule {
    Full,
    Async,
    Stationary,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal values and controls of an MDP, or Riccati gains of an LQG problem.
    Solve,
    /// Psi-recursion policy iteration with a per-iteration trace.
    Iterate {
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, value_enum, default_value = "full")]
        schedule: Schedule,
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
    /// Tabular Psi-learning against Q-learning on a grid world.
    TrainTabular {
        /// One of psi_uninformed, psi_greedy, q_uninformed, or `all`.
        #[arg(long, default_value = "all")]
        algorithm: String,
        /// Samples per trial.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        eval_every: Option<u64>,
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        /// Learning-rate constants to sweep; 0 stands for alpha = 1.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
    },
    /// LSPsi on the cart-pole.
    TrainLspsi {
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        update_period: Option<usize>,
        #[arg(long)]
        sigma2_base: Option<f64>,
        #[arg(long)]
        ridge: Option<f64>,
        #[arg(long)]
        eval_every: Option<u64>,
    },
    /// Expected cost of a policy: uniform and optimal for MDPs, a linear gain for LQG.
    Eval {
        /// Comma-separated gain `K` for `u = -K x`; Riccati gain by default.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        gain: Option<Vec<f64>>,
        #[arg(long, default_value_t = 100)]
        trajectories: usize,
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
    /// Runs every cross-module oracle check.
    Verify {
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Io(io::Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Lib(Error::Config(_) | Error::InvalidModel(_) | Error::Shape(_) | Error::IndexOutOfRange { .. }) => 2,
        Failure::Io(_) => 2,
        Failure::Lib(_) | Failure::Checks => 1,
    }
}

fn output(cli: &Cli) -> Result<Box<dyn Write>, Failure> {
    Ok(match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn loaded(cli: &Cli) -> Result<Option<LoadedConfig>, Failure> {
    Ok(cli.config.as_ref().map(load_config).transpose()?)
}

fn header(out: &mut dyn Write, source: &str) -> io::Result<()> {
    writeln!(out, "# config_hash: {}", config_hash(&source))?;
    writeln!(out, "# build: {BUILD_ID}")
}

fn need_mdp(cfg: Option<LoadedConfig>) -> Result<(FiniteMdp, String), Failure> {
    match cfg {
        Some(LoadedConfig { model: Model::Mdp(m), source, .. }) => Ok((m, source)),
        Some(LoadedConfig { model: Model::GridWorld(w), source, .. }) => Ok((w.to_mdp()?.mdp, source)),
        Some(_) => Err(Error::Config("this subcommand needs an `mdp` or `gridworld` config".into()).into()),
        None => Err(Error::Config("--config is required".into()).into()),
    }
}

fn experiment(
    cli: &Cli,
    section: Option<&ExperimentSection>,
    id: &str,
    env: &str,
    algo: &str,
    budget: u64,
    every: u64,
) -> ExperimentConfig {
    let seeds = match (cli.seed, cli.trials, section.and_then(|s| s.seeds.clone())) {
        (None, None, Some(s)) => s,
        (seed, trials, _) => ExperimentConfig::consecutive_seeds(seed.unwrap_or(0), trials.unwrap_or(10)),
    };
    ExperimentConfig {
        id: section.and_then(|s| s.id.clone()).unwrap_or_else(|| id.into()),
        environment: env.into(),
        algorithm: algo.into(),
        seeds,
        budget,
        eval_every: every,
        output: cli.out.clone(),
    }
}

fn solve(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = loaded(cli)?;
    let lqg = match &cfg {
        Some(LoadedConfig { model: Model::Lqg(p), .. }) => Some(p.clone()),
        Some(LoadedConfig { model: Model::CartPole(c), .. }) => Some(c.lqg_problem()?),
        _ => None,
    };
    if let Some(prob) = lqg {
        let sol = lqr_solve(&prob)?;
        header(out, &cfg.as_ref().map_or(String::new(), |c| c.source.clone()))?;
        writeln!(out, "# riccati_iterations: {}", sol.iterations)?;
        writeln!(out, "# riccati_residual: {:e}", sol.residual)?;
        writeln!(out, "# closed_loop_spectral_radius: {}", closed_loop_spectral_radius(&prob, &sol.gain))?;
        writeln!(out, "control,state,gain")?;
        for i in 0..sol.gain.nrows() {
            for j in 0..sol.gain.ncols() {
                writeln!(out, "{i},{j},{}", sol.gain[(i, j)])?;
            }
        }
        return Ok(());
    }
    let (mdp, source) = need_mdp(cfg)?;
    let (values, policy) = match mdp.horizon() {
        Horizon::Finite(_) => finite_horizon_dp(&mdp)?,
        Horizon::Infinite => value_iteration(&mdp, DEFAULT_TOL)?,
    };
    header(out, &source)?;
    writeln!(out, "stage,state,value,control")?;
    for t in 0..values.num_stages() {
        for x in 0..mdp.num_states() {
            let u = (0..mdp.num_controls())
                .find(|&u| policy.prob(t.min(policy.num_stages() - 1), x, u) == 1.0)
                .unwrap_or(0);
            writeln!(out, "{t},{x},{},{u}", values.at(t, x))?;
        }
    }
    Ok(())
}

fn iterate(cli: &Cli, iters: usize, schedule: Schedule, start: usize, out: &mut dyn Write) -> Result<(), Failure> {
    let (mdp, source) = need_mdp(loaded(cli)?)?;
    let horizon = mdp.finite_horizon()?;
    let schedule = match schedule {
        Schedule::Full => UpdateSchedule::FullBackwardSweep,
        Schedule::Async => UpdateSchedule::Asynchronous((0..=horizon).rev().collect()),
        Schedule::Stationary => UpdateSchedule::StationaryValueStyle,
    };
    let prior = TabularPolicy::uniform_stages(&mdp, horizon + 1);
    let trace = iterate_policies(&mdp, &prior, &schedule, iters, &Start::State(start))?;
    header(out, &source)?;
    writeln!(out, "iteration,expected_cost,kl,max_policy_change")?;
    for r in trace {
        writeln!(out, "{},{},{},{}", r.iteration, r.expected_cost, r.kl, r.max_policy_change)?;
    }
    Ok(())
}

fn write_table(table: &MetricTable, out: &mut dyn Write) -> io::Result<()> {
    table.write_to(out)
}

#[allow(clippy::too_many_arguments)]
fn train_tabular(
    cli: &Cli,
    algorithm: &str,
    budget: Option<u64>,
    eval_every: Option<u64>,
    threshold: f64,
    rates: Option<Vec<f64>>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let cfg = loaded(cli)?;
    let (world, section) = match cfg {
        None => (GridWorld::default(), None),
        Some(LoadedConfig { model: Model::GridWorld(w), experiment, .. }) => (w, experiment),
        Some(_) => return Err(Error::Config("train-tabular needs a `gridworld` config".into()).into()),
    };
    let s = section.as_ref();
    let budget = budget.or(s.and_then(|s| s.budget)).unwrap_or(200_000);
    let every = eval_every.or(s.and_then(|s| s.eval_every)).unwrap_or(1000);
    let config = experiment(cli, s, "gridworld", "gridworld", algorithm, budget, every);
    let mut opts = GridworldOptions { threshold, ..Default::default() };
    if algorithm != "all" {
        opts.variants = algorithm.split(',').map(str::to_owned).collect();
    }
    if let Some(r) = rates.or(s.and_then(|s| s.learning_rates.clone())) {
        let lr = |c: f64| if c == 0.0 { LearningRate::constant() } else { LearningRate::decayed(c) };
        opts.psi_rates = r.iter().map(|&c| lr(c)).collect();
        opts.q_rates = r.into_iter().filter(|&c| c > 0.0).collect();
    }
    let result = run_gridworld_experiment(&config, &world, &opts)?;
    write_table(&result.table, out)?;
    for v in &result.variants {
        let b = v.best();
        eprintln!("{}: best {:?}, samples to e_J <= {threshold}: {:?}", v.name, b.rate, b.samples_to_threshold);
    }
    Ok(())
}

fn train_lspsi(
    cli: &Cli,
    episodes: Option<u64>,
    update_period: Option<usize>,
    sigma2_base: Option<f64>,
    ridge: Option<f64>,
    eval_every: Option<u64>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let cfg = loaded(cli)?;
    let (env, section) = match cfg {
        None => (CartPoleLqg::default(), None),
        Some(LoadedConfig { model: Model::CartPole(c), experiment, .. }) => (c, experiment),
        Some(_) => return Err(Error::Config("train-lspsi needs a `cartpole` config".into()).into()),
    };
    let s = section.as_ref();
    let budget = episodes.or(s.and_then(|s| s.budget)).unwrap_or(2500);
    let every = eval_every.or(s.and_then(|s| s.eval_every)).unwrap_or(100);
    let config = experiment(cli, s, "cartpole", "cartpole", "lspsi", budget, every);
    let mut opts = CartpoleOptions::default();
    if let Some(p) = update_period.or(s.and_then(|s| s.update_period)) {
        opts.update_period = p;
    }
    if let Some(v) = sigma2_base.or(s.and_then(|s| s.sigma2_base)) {
        opts.sigma2_base = v;
    }
    if let Some(v) = ridge.or(s.and_then(|s| s.ridge)) {
        opts.ridge = v;
    }
    let result = run_cartpole_experiment(&config, &env, &opts)?;
    write_table(&result.table, out)?;
    eprintln!("riccati gain {:?}, reference cost {:.3}", result.riccati_gain, result.reference_cost);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval_lqg(
    cli: &Cli,
    prob: &LqgProblem,
    env: Option<&CartPoleLqg>,
    gain: Option<Vec<f64>>,
    trajectories: usize,
    steps: usize,
    source: &str,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let (n, m) = (prob.state_dim(), prob.control_dim());
    let k = match gain {
        Some(g) if g.len() == n * m => nalgebra::DMatrix::from_row_slice(m, n, &g),
        Some(g) => return Err(Error::Shape(format!("gain has {} entries, expected {}", g.len(), n * m)).into()),
        None => lqr_solve(prob)?.gain,
    };
    let mut table =
        MetricTable::new(&config_hash(&(source, &k, trajectories, steps)), [format!("gain: {:?}", k.as_slice())]);
    table.push(MetricRow::new(0, steps as u64, "spectral_radius", closed_loop_spectral_radius(prob, &k)));
    // Generic problems start from x0 ~ N(0, I).
    let start = match env {
        Some(env) => nalgebra::DMatrix::from_iterator(4, 4, env.start_cov.iter().copied()),
        None => nalgebra::DMatrix::identity(n, n),
    };
    let exact = linear_policy_cost(prob, &k, &nalgebra::DMatrix::zeros(m, m), &start, steps);
    table.push(MetricRow::new(0, steps as u64, "exact_expected_cost", exact));
    if let Some(env) = env {
        let g = nalgebra::Vector4::from_fn(|i, _| k[(0, i)]);
        for (trial, seed) in
            ExperimentConfig::consecutive_seeds(cli.seed.unwrap_or(0), cli.trials.unwrap_or(1)).into_iter().enumerate()
        {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mc = env.monte_carlo_cost(|x, _| -g.dot(x), &mut rng, trajectories, steps);
            table.push(MetricRow::new(trial, steps as u64, "mc_expected_cost", mc));
        }
    }
    write_table(&table, out)?;
    Ok(())
}

fn eval(
    cli: &Cli,
    gain: Option<Vec<f64>>,
    trajectories: usize,
    steps: usize,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let cfg = loaded(cli)?;
    let cfg = match cfg {
        Some(c) => c,
        None => {
            LoadedConfig { model: Model::CartPole(CartPoleLqg::default()), experiment: None, source: String::new() }
        }
    };
    match &cfg.model {
        Model::CartPole(env) => {
            return eval_lqg(cli, &env.lqg_problem()?, Some(env), gain, trajectories, steps, &cfg.source, out)
        }
        Model::Lqg(p) => return eval_lqg(cli, p, None, gain, trajectories, steps, &cfg.source, out),
        _ => {}
    }
    let (mdp, source) = need_mdp(Some(cfg))?;
    let uniform = TabularPolicy::uniform(&mdp);
    let optimal = match mdp.horizon() {
        Horizon::Finite(_) => finite_horizon_dp(&mdp)?.1,
        Horizon::Infinite => value_iteration(&mdp, DEFAULT_TOL)?.1,
    };
    let mut table = MetricTable::new(&config_hash(&source), []);
    for x in 0..mdp.num_states() {
        let start = Start::State(x);
        table.push(MetricRow::new(0, x as u64, "uniform_expected_cost", expected_cost(&mdp, &uniform, &start)?));
        table.push(MetricRow::new(0, x as u64, "optimal_expected_cost", expected_cost(&mdp, &optimal, &start)?));
    }
    write_table(&table, out)?;
    Ok(())
}

fn verify(cli: &Cli, quick: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let mut opts = if quick { VerifyOptions::quick() } else { VerifyOptions::default() };
    opts.seed = cli.seed.unwrap_or(0);
    let report = run_verification_suite(&opts)?;
    for line in report.lines() {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut out = output(cli)?;
    let out = out.as_mut();
    match &cli.command {
        Command::Solve => solve(cli, out)?,
        Command::Iterate { iters, schedule, start } => iterate(cli, *iters, *schedule, *start, out)?,
        Command::TrainTabular { algorithm, budget, eval_every, threshold, rates } => {
            train_tabular(cli, algorithm, *budget, *eval_every, *threshold, rates.clone(), out)?
        }
        Command::TrainLspsi { episodes, update_period, sigma2_base, ridge, eval_every } => {
            train_lspsi(cli, *episodes, *update_period, *sigma2_base, *ridge, *eval_every, out)?
        }
        Command::Eval { gain, trajectories, steps } => eval(cli, gain.clone(), *trajectories, *steps, out)?,
        Command::Verify { quick } => verify(cli, *quick, out)?,
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Lib(e) => eprintln!("error: {e}"),
                Failure::Io(e) => eprintln!("error: {e}"),
                Failure::Checks => eprintln!("error: verification failed"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}
