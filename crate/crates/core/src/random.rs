//! Random problem instances for property checks and the verification suite.

use rand::Rng;

use crate::mdp::{CostTable, FiniteMdp, Horizon, TabularPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomMdp {
    pub states: usize,
    pub controls: usize,
    pub horizon: Horizon,
    pub discount: f64,
    pub max_cost: f64,
    /// Probability that a transition entry is zeroed before normalization.
    pub sparsity: f64,
    /// Draw a separate cost table per stage (finite horizons only).
    pub per_stage_cost: bool,
}

impl Default for RandomMdp {
    fn default() -> Self {
        Self {
            states: 3,
            controls: 2,
            horizon: Horizon::Finite(3),
            discount: 1.0,
            max_cost: 1.0,
            sparsity: 0.3,
            per_stage_cost: false,
        }
    }
}

fn random_row<R: Rng + ?Sized>(rng: &mut R, n: usize, sparsity: f64) -> Vec<f64> {
    loop {
        let mut row: Vec<f64> =
            (0..n).map(|_| if rng.random::<f64>() < sparsity { 0.0 } else { rng.random::<f64>() }).collect();
        let sum: f64 = row.iter().sum();
        if sum > 1e-3 {
            row.iter_mut().for_each(|p| *p /= sum);
            return row;
        }
    }
}

/// Dense random MDP without absorbing states.
pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, spec: &RandomMdp) -> FiniteMdp {
    let (nx, nu) = (spec.states, spec.controls);
    let mut transition = Vec::with_capacity(nx * nu * nx);
    for _ in 0..nx * nu {
        transition.extend(random_row(rng, nx, spec.sparsity));
    }
    let mut table = || (0..nx * nu).map(|_| spec.max_cost * rng.random::<f64>()).collect::<Vec<_>>();
    let cost = match spec.horizon {
        Horizon::Finite(t) if spec.per_stage_cost => CostTable::PerStage((0..=t).map(|_| table()).collect()),
        _ => CostTable::Stationary(table()),
    };
    FiniteMdp::new(nx, nu, transition, cost, spec.discount, spec.horizon, vec![])
        .expect("random instance satisfies the model invariants")
}

/// Random stochastic policy whose entries are at least `floor` before
/// normalization, so `floor > 0` gives a strictly positive policy.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, mdp: &FiniteMdp, stages: usize, floor: f64) -> TabularPolicy {
    let (nx, nu) = (mdp.num_states(), mdp.num_controls());
    let tables = (0..stages.max(1))
        .map(|_| {
            let mut table = vec![0.0; nx * nu];
            for x in 0..nx {
                let allowed: Vec<usize> = mdp.allowed_controls(x).collect();
                let w: Vec<f64> = allowed.iter().map(|_| floor + rng.random::<f64>()).collect();
                let s: f64 = w.iter().sum();
                for (&u, wu) in allowed.iter().zip(w) {
                    table[x * nu + u] = wu / s;
                }
            }
            table
        })
        .collect();
    TabularPolicy::stochastic(nx, nu, tables).expect("normalized by construction")
}

/// Every deterministic policy with `stages` stages, in lexicographic order of
/// the flattened action table.
pub fn deterministic_policies(mdp: &FiniteMdp, stages: usize) -> impl Iterator<Item = TabularPolicy> + '_ {
    let (nx, nu) = (mdp.num_states(), mdp.num_controls());
    let choices: Vec<Vec<usize>> = (0..nx).map(|x| mdp.allowed_controls(x).collect()).collect();
    let slots = nx * stages;
    let total: usize = (0..slots).map(|i| choices[i % nx].len()).product();
    (0..total).map(move |mut code| {
        let mut actions = vec![vec![0; nx]; stages];
        for i in 0..slots {
            let c = &choices[i % nx];
            actions[i / nx][i % nx] = c[code % c.len()];
            code /= c.len();
        }
        TabularPolicy::deterministic(nx, nu, &actions).expect("actions are in range")
    })
}
