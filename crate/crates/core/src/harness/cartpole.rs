use nalgebra::Vector4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{append_summaries, config_hash, ExperimentConfig, MetricRow, MetricTable};
use crate::envs::{CartPoleLqg, Termination};
use crate::error::{Error, Result};
use crate::lqr::lqr_solve;
use crate::lspsi::{CartPoleBasis, EpisodeBatch, LinearBasisModel, DEFAULT_RIDGE, DEFAULT_SIGMA2_BASE};

#[derive(Debug, Clone, PartialEq)]
pub struct CartpoleOptions {
    pub update_period: usize,
    pub sigma2_base: f64,
    pub ridge: f64,
    pub mc_trajectories: usize,
    pub mc_steps: usize,
}

impl Default for CartpoleOptions {
    fn default() -> Self {
        Self {
            update_period: 10,
            sigma2_base: DEFAULT_SIGMA2_BASE,
            ridge: DEFAULT_RIDGE,
            mc_trajectories: 100,
            mc_steps: 200,
        }
    }
}

/// Metrics after `episode` training episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub episode: u64,
    pub gain_error: f64,
    pub mc_cost: f64,
    /// Mean length of the training episodes in the block just finished.
    pub mean_length: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartpoleTrial {
    pub seed: u64,
    pub evals: Vec<EvalPoint>,
    pub final_weights: Vec<f64>,
    pub guard_trips: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartpoleResult {
    pub table: MetricTable,
    pub trials: Vec<CartpoleTrial>,
    pub riccati_gain: [f64; 4],
    /// Monte-Carlo cost of the Riccati policy under the evaluation protocol.
    pub reference_cost: f64,
}

fn gain_policy(gain: [f64; 4]) -> impl Fn(&Vector4<f64>) -> f64 {
    let g = Vector4::from(gain);
    move |x| -g.dot(x)
}

fn eval_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn run_trial(
    env: &CartPoleLqg,
    riccati: [f64; 4],
    seed: u64,
    config: &ExperimentConfig,
    opts: &CartpoleOptions,
) -> Result<CartpoleTrial> {
    let basis = CartPoleBasis;
    let mut model = LinearBasisModel::new(basis, basis.initial_weights())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut erng = eval_rng(seed);
    let mut batch = EpisodeBatch::default();
    let mut evals = Vec::new();
    let (mut block_len, mut block_violations, mut guard_trips) = (0usize, 0usize, 0usize);
    let mut sample_error = None;
    for episode in 1..=config.budget {
        let w = model.weights.clone();
        let ep = env.rollout(
            |x, r| match basis.sample_control(&w, x.as_slice(), opts.sigma2_base, r) {
                Ok(u) => u,
                Err(e) => {
                    sample_error.get_or_insert(e);
                    0.0
                }
            },
            &mut rng,
        );
        if let Some(e) = sample_error.take() {
            return Err(e);
        }
        block_len += ep.len();
        block_violations += usize::from(ep.termination == Termination::Violation);
        if !ep.is_empty() {
            batch.push_episode(ep.samples, env.cap)?;
        }
        if episode % opts.update_period as u64 == 0 && !batch.is_empty() {
            let report = model.lspsi_update(&batch.samples, env.discount, opts.ridge)?;
            guard_trips += usize::from(report.guard_tripped);
            batch.clear();
        }
        if episode % config.eval_every == 0 {
            let gain = basis.gain(&model.weights);
            let gain_error = gain.iter().zip(&riccati).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let policy = gain_policy(gain);
            let mc_cost = env.monte_carlo_cost(|x, _| policy(x), &mut erng, opts.mc_trajectories, opts.mc_steps);
            evals.push(EvalPoint {
                episode,
                gain_error,
                mc_cost,
                mean_length: block_len as f64 / config.eval_every as f64,
                violations: block_violations,
            });
            block_len = 0;
            block_violations = 0;
        }
    }
    Ok(CartpoleTrial { seed, evals, final_weights: model.weights, guard_trips })
}

/// LSPsi on the cart-pole, one independent learner per seed.
pub fn run_cartpole_experiment(
    config: &ExperimentConfig,
    env: &CartPoleLqg,
    opts: &CartpoleOptions,
) -> Result<CartpoleResult> {
    config.validate()?;
    if opts.update_period == 0 {
        return Err(Error::Config("update period must be positive".into()));
    }
    if !(opts.sigma2_base >= 0.0 && opts.ridge >= 0.0) {
        return Err(Error::Config("sigma2_base and ridge must be nonnegative".into()));
    }
    let sol = lqr_solve(&env.lqg_problem()?)?;
    let riccati = [0, 1, 2, 3].map(|i| sol.gain[(0, i)]);
    let reference_cost = {
        let p = gain_policy(riccati);
        env.monte_carlo_cost(|x, _| p(x), &mut eval_rng(u64::MAX), opts.mc_trajectories, opts.mc_steps)
    };
    let trials =
        config.seeds.par_iter().map(|&seed| run_trial(env, riccati, seed, config, opts)).collect::<Result<Vec<_>>>()?;

    let hash = config_hash(&(config.without_output(), env, opts));
    let notes = vec![
        format!("experiment: {} ({} seeds, {} episodes)", config.id, config.seeds.len(), config.budget),
        format!("riccati_gain: {riccati:?}"),
        format!("reference_cost: {reference_cost}"),
    ];
    let mut table = MetricTable::new(&hash, notes);
    for (i, t) in trials.iter().enumerate() {
        for e in &t.evals {
            table.push(MetricRow::new(i, e.episode, "gain_error_L2", e.gain_error));
            table.push(MetricRow::new(i, e.episode, "mc_expected_cost", e.mc_cost));
            table.push(MetricRow::new(i, e.episode, "mean_episode_length", e.mean_length));
        }
        table.push(MetricRow::new(i, config.budget, "pd_guard_trips", t.guard_trips as f64));
    }
    let metrics = ["gain_error_L2", "mc_expected_cost", "mean_episode_length"].map(String::from);
    append_summaries(&mut table, &metrics);
    Ok(CartpoleResult { table, trials, riccati_gain: riccati, reference_cost })
}
