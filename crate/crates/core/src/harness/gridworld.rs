use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{append_summaries, config_hash, median_option, ExperimentConfig, MetricRow, MetricTable};
use crate::envs::{GridMdp, GridWorld};
use crate::error::{Error, Result};
use crate::mdp::TransitionSample;
use crate::solvers::{value_iteration, ValueTable, DEFAULT_TOL};
use crate::tabular::{value_error, Algorithm, LearnerState, LearningRate, SamplingMode};

pub const VARIANTS: [&str; 3] = ["psi_uninformed", "psi_greedy", "q_uninformed"];

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldOptions {
    /// Subset of [`VARIANTS`].
    pub variants: Vec<String>,
    pub psi_rates: Vec<LearningRate>,
    pub q_rates: Vec<f64>,
    pub threshold: f64,
    pub episode_cap: usize,
}

impl Default for GridworldOptions {
    fn default() -> Self {
        Self {
            variants: VARIANTS.iter().map(|s| s.to_string()).collect(),
            psi_rates: std::iter::once(LearningRate::constant())
                .chain([1e1, 1e2, 1e3, 1e4, 1e5].map(LearningRate::decayed))
                .collect(),
            q_rates: vec![1e1, 1e2, 1e3, 1e4],
            threshold: 0.1,
            episode_cap: 100,
        }
    }
}

/// Outcome of one learning-rate setting across all seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct RateChoice {
    pub rate: LearningRate,
    /// Per seed: first evaluation point with `e_J <= threshold`.
    pub samples_to_threshold: Vec<Option<u64>>,
    pub final_error: Vec<f64>,
    /// Per seed `(samples, e_J)`.
    pub curves: Vec<Vec<(u64, f64)>>,
}

impl RateChoice {
    pub fn median_samples(&self) -> Option<f64> {
        median_option(&self.samples_to_threshold)
    }

    fn mean_final(&self) -> f64 {
        self.final_error.iter().sum::<f64>() / self.final_error.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub name: String,
    pub choices: Vec<RateChoice>,
    pub best: usize,
}

impl VariantResult {
    pub fn best(&self) -> &RateChoice {
        &self.choices[self.best]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldResult {
    pub table: MetricTable,
    pub variants: Vec<VariantResult>,
    pub optimal: ValueTable,
}

impl GridworldResult {
    pub fn variant(&self, name: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.name == name)
    }
}

pub fn rate_label(lr: &LearningRate) -> String {
    if lr.enabled {
        format!("c={}", lr.c)
    } else {
        "alpha=1".into()
    }
}

fn variant_spec(name: &str) -> Result<(Algorithm, SamplingMode)> {
    match name {
        "psi_uninformed" => Ok((Algorithm::PsiLearning, SamplingMode::Uninformed)),
        "psi_greedy" => Ok((Algorithm::PsiLearning, SamplingMode::Greedy)),
        "q_uninformed" => Ok((Algorithm::QLearning, SamplingMode::Uninformed)),
        other => Err(Error::Config(format!("unknown grid-world variant {other:?}; expected one of {VARIANTS:?}"))),
    }
}

struct Job {
    seed: u64,
    algo: Algorithm,
    mode: SamplingMode,
    rate: LearningRate,
}

fn sample_successor<R: Rng + ?Sized>(succ: &[(usize, f64)], rng: &mut R) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for &(y, p) in succ {
        acc += p;
        if r < acc {
            return y;
        }
    }
    succ.last().expect("rows have at least one successor").0
}

/// One seeded learning run; returns the error curve.
fn run_trial(
    g: &GridMdp,
    oracle: &ValueTable,
    job: &Job,
    config: &ExperimentConfig,
    cap: usize,
) -> Result<Vec<(u64, f64)>> {
    let mdp = &g.mdp;
    let starts = g.start_states();
    if starts.is_empty() {
        return Err(Error::Config("grid world has no non-target start cell".into()));
    }
    let anchor = (job.algo == Algorithm::PsiLearning).then(|| g.targets[0]);
    let mut learner = LearnerState::new(mdp, job.algo, job.rate);
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let mut curve = Vec::with_capacity((config.budget / config.eval_every) as usize);
    let mut samples = 0u64;
    while samples < config.budget {
        let mut x = starts[rng.random_range(0..starts.len())];
        for _ in 0..cap {
            let u = learner.sample_control(x, job.mode, &mut rng)?;
            let y = sample_successor(mdp.successors(x, u), &mut rng);
            learner.step(&TransitionSample::new(x, u, mdp.cost(0, x, u), y)?, mdp.discount())?;
            samples += 1;
            if samples.is_multiple_of(config.eval_every) {
                curve.push((samples, value_error(&learner.value_estimate(anchor)?, oracle)?));
            }
            if samples >= config.budget || mdp.is_absorbing(y) {
                break;
            }
            x = y;
        }
    }
    Ok(curve)
}

/// Psi-learning (uninformed and greedy sampling) against Q-learning on a grid
/// world, sweeping learning rates and keeping the best per variant by median
/// samples-to-threshold.
pub fn run_gridworld_experiment(
    config: &ExperimentConfig,
    world: &GridWorld,
    opts: &GridworldOptions,
) -> Result<GridworldResult> {
    config.validate()?;
    if opts.variants.is_empty() {
        return Err(Error::Config("no grid-world variants selected".into()));
    }
    let g = world.to_mdp()?;
    if !g.unreachable.is_empty() {
        return Err(Error::Config(format!(
            "states {:?} cannot reach a target; the undiscounted oracle is infinite",
            g.unreachable
        )));
    }
    let (optimal, _) = value_iteration(&g.mdp, DEFAULT_TOL)?;

    let mut plan = Vec::new();
    for name in &opts.variants {
        let (algo, mode) = variant_spec(name)?;
        let rates: Vec<LearningRate> = match algo {
            Algorithm::QLearning => opts.q_rates.iter().map(|&c| LearningRate::decayed(c)).collect(),
            _ => opts.psi_rates.clone(),
        };
        if rates.is_empty() {
            return Err(Error::Config(format!("variant {name} has no learning rates to sweep")));
        }
        plan.push((name.clone(), algo, mode, rates));
    }
    let jobs: Vec<(usize, usize, usize, Job)> = plan
        .iter()
        .enumerate()
        .flat_map(|(v, (_, algo, mode, rates))| {
            rates.iter().enumerate().flat_map(move |(r, rate)| {
                config
                    .seeds
                    .iter()
                    .enumerate()
                    .map(move |(s, &seed)| (v, r, s, Job { seed, algo: *algo, mode: *mode, rate: *rate }))
            })
        })
        .collect();
    let curves: Vec<Result<Vec<(u64, f64)>>> =
        jobs.par_iter().map(|(_, _, _, job)| run_trial(&g, &optimal, job, config, opts.episode_cap)).collect();

    let mut variants: Vec<VariantResult> = plan
        .iter()
        .map(|(name, _, _, rates)| VariantResult {
            name: name.clone(),
            choices: rates
                .iter()
                .map(|&rate| RateChoice {
                    rate,
                    samples_to_threshold: Vec::new(),
                    final_error: Vec::new(),
                    curves: Vec::new(),
                })
                .collect(),
            best: 0,
        })
        .collect();
    for ((v, r, _, _), curve) in jobs.iter().zip(curves) {
        let curve = curve?;
        let choice = &mut variants[*v].choices[*r];
        choice.samples_to_threshold.push(curve.iter().find(|(_, e)| *e <= opts.threshold).map(|(s, _)| *s));
        choice.final_error.push(curve.last().map_or(f64::INFINITY, |(_, e)| *e));
        choice.curves.push(curve);
    }
    for v in &mut variants {
        let key = |c: &RateChoice| (c.median_samples().unwrap_or(f64::INFINITY), c.mean_final());
        v.best = (0..v.choices.len())
            .min_by(|&a, &b| key(&v.choices[a]).partial_cmp(&key(&v.choices[b])).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
    }

    let hash = config_hash(&(config.without_output(), world, opts));
    let mut notes = vec![
        format!("experiment: {} ({} seeds, {} samples)", config.id, config.seeds.len(), config.budget),
        format!("threshold: e_J <= {}", opts.threshold),
    ];
    notes.extend(variants.iter().map(|v| format!("{} best: {}", v.name, rate_label(&v.best().rate))));
    let mut table = MetricTable::new(&hash, notes);
    let mut summarised = Vec::new();
    for v in &variants {
        for (ci, c) in v.choices.iter().enumerate() {
            let label = rate_label(&c.rate);
            for (trial, curve) in c.curves.iter().enumerate() {
                for &(s, e) in curve {
                    table.push(MetricRow::new(trial, s, format!("{}[{label}].e_J", v.name), e));
                    if ci == v.best {
                        table.push(MetricRow::new(trial, s, format!("{}.e_J", v.name), e));
                    }
                }
            }
        }
        for (trial, s) in v.best().samples_to_threshold.iter().enumerate() {
            let value = s.map_or(f64::INFINITY, |s| s as f64);
            table.push(MetricRow::new(trial, config.budget, format!("{}.samples_to_threshold", v.name), value));
        }
        summarised.push(format!("{}.e_J", v.name));
    }
    append_summaries(&mut table, &summarised);
    Ok(GridworldResult { table, variants, optimal })
}
