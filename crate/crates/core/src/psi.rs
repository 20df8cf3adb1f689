//! Ψ tables, the finite-horizon backward recursion, policy iteration
//! schedules and stationary Ψ-value iteration.

use crate::error::{Error, Result};
use crate::eval::expected_cost;
use crate::kl::{kl_controlled_vs_posterior, log_sum_exp};
use crate::mdp::{FiniteMdp, Horizon, Start, TabularPolicy};
use crate::solvers::{policy_evaluation, DEFAULT_TOL};

/// Entries further than this below the state's log-partition are clamped.
pub const PSI_FLOOR: f64 = 700.0;
/// Allowed expected-cost increase between iterations before a run is
/// declared broken.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// `Psi_t(x, u)` per stage (or one stationary stage). Disallowed pairs and
/// pairs excluded by a zero prior hold `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiTable {
    num_states: usize,
    num_controls: usize,
    stages: Vec<Vec<f64>>,
}

impl PsiTable {
    /// Zero on allowed pairs: the uniform policy over allowed controls.
    pub fn zeros(mdp: &FiniteMdp, stages: usize) -> Self {
        let table: Vec<f64> = mdp.allowed_mask().iter().map(|&a| if a { 0.0 } else { f64::NEG_INFINITY }).collect();
        Self { num_states: mdp.num_states(), num_controls: mdp.num_controls(), stages: vec![table; stages.max(1)] }
    }

    pub fn from_stages(num_states: usize, num_controls: usize, stages: Vec<Vec<f64>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Shape("Psi table needs at least one stage".into()));
        }
        for (t, s) in stages.iter().enumerate() {
            if s.len() != num_states * num_controls {
                return Err(Error::Shape(format!("Psi stage {t} has {} entries", s.len())));
            }
            if s.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::InvalidModel(format!("Psi stage {t} has NaN or +inf entries")));
            }
            for x in 0..num_states {
                if s[x * num_controls..][..num_controls].iter().all(|v| *v == f64::NEG_INFINITY) {
                    return Err(Error::InvalidModel(format!("Psi row (t={t}, x={x}) has no finite entry")));
                }
            }
        }
        Ok(Self { num_states, num_controls, stages })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_controls(&self) -> usize {
        self.num_controls
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, t: usize) -> &[f64] {
        &self.stages[t.min(self.stages.len() - 1)]
    }

    pub fn row(&self, t: usize, x: usize) -> &[f64] {
        &self.stage(t)[x * self.num_controls..][..self.num_controls]
    }

    pub fn value(&self, t: usize, x: usize, u: usize) -> f64 {
        self.row(t, x)[u]
    }

    /// `Psi_bar_t(x) = log sum_u exp Psi_t(x, u)`.
    pub fn log_partition(&self, t: usize, x: usize) -> f64 {
        log_sum_exp(self.row(t, x).iter().copied())
    }

    pub fn log_partitions(&self, t: usize) -> Vec<f64> {
        (0..self.num_states).map(|x| self.log_partition(t, x)).collect()
    }

    /// `exp(Psi_t(x, .) - Psi_bar_t(x))`, renormalized.
    pub fn policy_row(&self, t: usize, x: usize) -> Vec<f64> {
        boltzmann(self.row(t, x))
    }

    /// The Boltzmann policy of every stage.
    pub fn policy(&self) -> TabularPolicy {
        let stages = (0..self.stages.len())
            .map(|t| (0..self.num_states).flat_map(|x| self.policy_row(t, x)).collect())
            .collect();
        TabularPolicy::stochastic(self.num_states, self.num_controls, stages).expect("Boltzmann rows are normalized")
    }

    /// Controls attaining `max_u Psi_t(x, u)` within `tol`.
    pub fn argmax_controls(&self, t: usize, x: usize, tol: f64) -> Vec<usize> {
        let row = self.row(t, x);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..self.num_controls).filter(|&u| row[u] >= m - tol).collect()
    }

    /// Adds `shift[x]` to every entry of state `x` at every stage.
    pub fn shifted(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for s in &mut out.stages {
            for (i, v) in s.iter_mut().enumerate() {
                *v += shift[i / self.num_controls];
            }
        }
        out
    }
}

/// Normalized Boltzmann distribution of a row of energies.
pub fn boltzmann(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = row.iter().map(|&v| if v == f64::NEG_INFINITY { 0.0 } else { (v - m).exp() }).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// `Psi_t(x,u) = log pi_prev(u|x) - gamma^t C_t(x,u) + E[Psi_bar_{t+1}(y)]`
/// for `t = T..0`, with `Psi_bar_{T+1} = 0`. Its Boltzmann policy is the next
/// element of the KL policy iteration.
pub fn psi_backward_sweep(mdp: &FiniteMdp, prev: &TabularPolicy) -> Result<PsiTable> {
    let horizon = mdp.finite_horizon()?;
    prev.check_against(mdp)?;
    let (nx, nu) = (mdp.num_states(), mdp.num_controls());
    let mut stages = vec![vec![f64::NEG_INFINITY; nx * nu]; horizon + 1];
    let mut next_bar = vec![0.0; nx];
    for t in (0..=horizon).rev() {
        for x in 0..nx {
            for u in mdp.allowed_controls(x) {
                let p = prev.prob(t, x, u);
                if p > 0.0 {
                    stages[t][x * nu + u] = p.ln() - mdp.stage_cost(t, x, u) + mdp.expect(x, u, &next_bar);
                }
            }
        }
        for (x, bar) in next_bar.iter_mut().enumerate() {
            *bar = log_sum_exp(stages[t][x * nu..][..nu].iter().copied());
        }
    }
    PsiTable::from_stages(nx, nu, stages)
}

/// Which time steps each iteration updates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpdateSchedule {
    /// Every stage per iteration via [`psi_backward_sweep`].
    FullBackwardSweep,
    /// One stage per iteration, cycling through the list.
    Asynchronous(Vec<usize>),
    /// Rounds `j = 1, 2, ...`, each updating the last `j` stages backward
    /// (`T, T-1, ..., T-j+1`, clipped at 0).
    StationaryValueStyle,
}

impl UpdateSchedule {
    /// Stage updated by iteration `i` (0-based); `None` for full sweeps.
    pub fn stage_at(&self, i: usize, horizon: usize) -> Option<usize> {
        match self {
            UpdateSchedule::FullBackwardSweep => None,
            UpdateSchedule::Asynchronous(list) => Some(list[i % list.len()]),
            UpdateSchedule::StationaryValueStyle => {
                let span = horizon + 1;
                let mut j = 1;
                let mut i = i;
                loop {
                    let len = j.min(span);
                    if i < len {
                        return Some(horizon - i);
                    }
                    i -= len;
                    j += 1;
                }
            }
        }
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        if let UpdateSchedule::Asynchronous(list) = self {
            if list.is_empty() {
                return Err(Error::InvalidModel("asynchronous schedule is empty".into()));
            }
            if let Some(&t) = list.iter().find(|&&t| t > horizon) {
                return Err(Error::IndexOutOfRange { what: "scheduled time", index: t, limit: horizon + 1 });
            }
        }
        Ok(())
    }
}

/// Exact single-stage update: with every other stage held at `policy`,
/// `pi_t(u|x) ∝ policy_t(u|x) exp(-gamma^t C_t(x,u) - E[J^policy_{t+1}(y)])`.
pub fn psi_single_step(mdp: &FiniteMdp, policy: &TabularPolicy, t: usize) -> Result<TabularPolicy> {
    let horizon = mdp.finite_horizon()?;
    if t > horizon {
        return Err(Error::IndexOutOfRange { what: "time", index: t, limit: horizon + 1 });
    }
    let (nx, nu) = (mdp.num_states(), mdp.num_controls());
    let full = policy.expanded(horizon + 1);
    let future =
        if t < horizon { policy_evaluation(mdp, &full, DEFAULT_TOL)?.values(t + 1).to_vec() } else { vec![0.0; nx] };
    let mut stages = full.stages().to_vec();
    for x in 0..nx {
        let mut row = vec![f64::NEG_INFINITY; nu];
        for u in mdp.allowed_controls(x) {
            let p = full.prob(t, x, u);
            if p > 0.0 {
                row[u] = p.ln() - mdp.stage_cost(t, x, u) - mdp.expect(x, u, &future);
            }
        }
        stages[t][x * nu..][..nu].copy_from_slice(&boltzmann(&row));
    }
    TabularPolicy::stochastic(nx, nu, stages)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub policy: TabularPolicy,
    pub expected_cost: f64,
    /// `KL(q_pi || p_pi0)` against the posterior of the initial prior.
    pub kl: f64,
    /// Largest entry change from the previous policy.
    pub max_policy_change: f64,
}

/// Runs `iters` iterations of `schedule` from the strictly positive `prior`,
/// recording the exact expected cost of every policy. An expected-cost
/// increase above [`MONOTONE_SLACK`] is an invariant violation.
pub fn iterate_policies(
    mdp: &FiniteMdp,
    prior: &TabularPolicy,
    schedule: &UpdateSchedule,
    iters: usize,
    start: &Start,
) -> Result<Vec<IterationRecord>> {
    let horizon = mdp.finite_horizon()?;
    schedule.validate(horizon)?;
    prior.check_against(mdp)?;
    let prior = prior.expanded(horizon + 1);
    for t in 0..=horizon {
        for x in 0..mdp.num_states() {
            if let Some(u) = mdp.allowed_controls(x).find(|&u| prior.prob(t, x, u) <= 0.0) {
                return Err(Error::Support { t, x, u });
            }
        }
    }
    let record = |i: usize, pi: TabularPolicy, change: f64| -> Result<IterationRecord> {
        Ok(IterationRecord {
            iteration: i,
            expected_cost: expected_cost(mdp, &pi, start)?,
            kl: kl_controlled_vs_posterior(mdp, &pi, &prior, start)?.kl,
            policy: pi,
            max_policy_change: change,
        })
    };
    let mut out = vec![record(0, prior.clone(), 0.0)?];
    for i in 0..iters {
        let current = &out[i].policy;
        let next = match schedule.stage_at(i, horizon) {
            None => psi_backward_sweep(mdp, current)?.policy(),
            Some(t) => psi_single_step(mdp, current, t)?,
        };
        let change = next.max_abs_diff(current);
        let rec = record(i + 1, next, change)?;
        let increase = rec.expected_cost - out[i].expected_cost;
        if increase > MONOTONE_SLACK {
            return Err(Error::Invariant(format!(
                "expected cost rose by {increase:e} at iteration {} ({} -> {})",
                i + 1,
                out[i].expected_cost,
                rec.expected_cost
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Uniform distribution over the optimal control set of each `(t, x)`,
/// computed from a dynamic-programming value table.
pub fn restricted_optimum(mdp: &FiniteMdp, values: &crate::solvers::ValueTable, tol: f64) -> Result<TabularPolicy> {
    let horizon = mdp.finite_horizon()?;
    let (nx, nu) = (mdp.num_states(), mdp.num_controls());
    let zeros = vec![0.0; nx];
    let mut stages = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let next = if t < horizon { values.values(t + 1) } else { &zeros };
        let mut table = vec![0.0; nx * nu];
        for x in 0..nx {
            let q: Vec<(usize, f64)> =
                mdp.allowed_controls(x).map(|u| (u, mdp.stage_cost(t, x, u) + mdp.expect(x, u, next))).collect();
            let best = q.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
            let set: Vec<usize> = q.iter().filter(|e| e.1 <= best + tol).map(|e| e.0).collect();
            for &u in &set {
                table[x * nu + u] = 1.0 / set.len() as f64;
            }
        }
        stages.push(table);
    }
    TabularPolicy::stochastic(nx, nu, stages)
}

fn value_sweep(mdp: &FiniteMdp, psi: &PsiTable) -> PsiTable {
    let (nx, nu) = (mdp.num_states(), mdp.num_controls());
    let gamma = mdp.discount();
    let bar = psi.log_partitions(0);
    let mut next = vec![f64::NEG_INFINITY; nx * nu];
    for x in 0..nx {
        let row = psi.row(0, x);
        for u in mdp.allowed_controls(x) {
            if row[u] > f64::NEG_INFINITY {
                next[x * nu + u] = row[u] - bar[x] - mdp.cost(0, x, u) + gamma * mdp.expect(x, u, &bar);
            }
        }
        let new_row = &mut next[x * nu..][..nu];
        let floor = log_sum_exp(new_row.iter().copied()) - PSI_FLOOR;
        for v in new_row.iter_mut() {
            if *v > f64::NEG_INFINITY && *v < floor {
                *v = floor;
            }
        }
    }
    PsiTable { num_states: nx, num_controls: nu, stages: vec![next] }
}

fn check_stationary(mdp: &FiniteMdp, init: &PsiTable) -> Result<()> {
    if mdp.horizon() != Horizon::Infinite {
        return Err(Error::InvalidModel("Psi-value iteration needs an infinite horizon".into()));
    }
    if init.num_stages() != 1 || init.num_states != mdp.num_states() || init.num_controls != mdp.num_controls() {
        return Err(Error::Shape("initial Psi table must be stationary and match the MDP".into()));
    }
    Ok(())
}

/// Synchronous `Psi <- Psi - Psi_bar(x) - C(x,u) + gamma E[Psi_bar(y)]`.
///
/// Rows are not renormalized between sweeps: the lookahead term reads
/// `Psi_bar` of the successors, and shifting each row to `Psi_bar = 0` would
/// erase it. Entries more than [`PSI_FLOOR`] below their row's log-partition
/// are clamped, which changes no probability above `exp(-700)`.
pub fn psi_value_iteration(mdp: &FiniteMdp, init: &PsiTable, sweeps: usize) -> Result<PsiTable> {
    check_stationary(mdp, init)?;
    let mut psi = init.clone();
    for _ in 0..sweeps {
        psi = value_sweep(mdp, &psi);
    }
    Ok(psi)
}

/// `max_x (Psi_bar(x) + J(x)) - min_x (Psi_bar(x) + J(x))`.
pub fn offset_range(psi_bar: &[f64], values: &[f64]) -> f64 {
    let d = psi_bar.iter().zip(values).map(|(a, b)| a + b);
    d.clone().fold(f64::NEG_INFINITY, f64::max) - d.fold(f64::INFINITY, f64::min)
}

/// [`psi_value_iteration`] that also records `offset_range` against an
/// oracle value row after every sweep, failing once it has grown for 100
/// consecutive sweeps.
pub fn psi_value_iteration_monitored(
    mdp: &FiniteMdp,
    init: &PsiTable,
    sweeps: usize,
    oracle: &[f64],
) -> Result<(PsiTable, Vec<f64>)> {
    check_stationary(mdp, init)?;
    let mut psi = init.clone();
    let mut trace = Vec::with_capacity(sweeps);
    let mut growing = 0;
    for s in 0..sweeps {
        psi = value_sweep(mdp, &psi);
        let r = offset_range(&psi.log_partitions(0), oracle);
        growing = match trace.last() {
            Some(&prev) if r > prev => growing + 1,
            _ => 0,
        };
        trace.push(r);
        if growing >= 100 {
            return Err(Error::NonConvergent {
                iterations: s + 1,
                detail: format!("offset range grew for 100 consecutive sweeps (now {r:e})"),
            });
        }
    }
    Ok((psi, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kl::kl_minimizer_closed_form;
    use crate::mdp::CostTable;
    use crate::random::{random_mdp, random_policy, RandomMdp};
    use crate::solvers::{finite_horizon_dp, value_iteration};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_step(costs: [f64; 2]) -> FiniteMdp {
        FiniteMdp::new(1, 2, vec![1.0, 1.0], CostTable::Stationary(costs.to_vec()), 1.0, Horizon::Finite(0), vec![])
            .unwrap()
    }

    #[test]
    fn last_stage_with_uniform_prior() {
        let mdp = one_step([0.0, 1.0]);
        let psi = psi_backward_sweep(&mdp, &TabularPolicy::uniform(&mdp)).unwrap();
        let row = psi.policy_row(0, 0);
        assert!((row[0] - 0.7310585786300049).abs() < 1e-15);
        assert!((row[1] - 0.2689414213699951).abs() < 1e-15);
        // one-step minimizer instance in (a = u, b = u) form
        let one_step = kl_minimizer_closed_form(&[0.5, 0.5], &[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, -1.0]).unwrap();
        for (a, b) in row.iter().zip(&one_step.q) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((psi.log_partition(0, 0) + one_step.min_kl).abs() < 1e-15);
    }

    #[test]
    fn equal_costs_keep_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = RandomMdp { states: 3, controls: 3, horizon: Horizon::Finite(3), ..RandomMdp::default() };
        let base = random_mdp(&mut rng, &spec);
        let flat: Vec<f64> = (0..3).flat_map(|x| [x as f64 * 0.3; 3]).collect();
        let t = base.transition_table().to_vec();
        // same dynamics for every control so lookahead is control-independent too
        let t: Vec<f64> = (0..3).flat_map(|x| t[x * 9..x * 9 + 3].repeat(3)).collect();
        let mdp = FiniteMdp::new(3, 3, t, CostTable::Stationary(flat), 1.0, Horizon::Finite(3), vec![]).unwrap();
        let prior = random_policy(&mut rng, &mdp, 4, 0.1);
        let next = psi_backward_sweep(&mdp, &prior).unwrap().policy();
        assert!(next.max_abs_diff(&prior) < 1e-15);
    }

    #[test]
    fn per_state_shift_leaves_policy_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (nx, nu) = (4, 3);
        // dyadic entries and integer shifts keep every subtraction exact
        let stage: Vec<f64> = (0..nx * nu).map(|_| (rng.random_range(-4096..4096) as f64) / 1024.0).collect();
        let psi = PsiTable::from_stages(nx, nu, vec![stage]).unwrap();
        let shift: Vec<f64> = (0..nx).map(|_| rng.random_range(-50..50) as f64).collect();
        assert_eq!(psi.policy(), psi.shifted(&shift).policy());
        let arbitrary: Vec<f64> = (0..nx).map(|_| rng.random::<f64>() * 100.0).collect();
        assert!(psi.policy().max_abs_diff(&psi.shifted(&arbitrary).policy()) < 1e-14);
    }

    #[test]
    fn shifted_tables_drive_identical_sweeps() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = RandomMdp { states: 3, controls: 2, horizon: Horizon::Finite(3), ..RandomMdp::default() };
        let mdp = random_mdp(&mut rng, &spec);
        let a = psi_backward_sweep(&mdp, &TabularPolicy::uniform_stages(&mdp, 4)).unwrap();
        let b = a.shifted(&[3.0, -7.0, 11.0]);
        let na = psi_backward_sweep(&mdp, &a.policy()).unwrap().policy();
        let nb = psi_backward_sweep(&mdp, &b.policy()).unwrap().policy();
        assert!(na.max_abs_diff(&nb) < 1e-14);
    }

    #[test]
    fn zero_iterations_return_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mdp = random_mdp(&mut rng, &RandomMdp::default());
        let prior = random_policy(&mut rng, &mdp, 4, 0.1);
        let trace = iterate_policies(&mdp, &prior, &UpdateSchedule::FullBackwardSweep, 0, &Start::State(0)).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].policy, prior);
        assert_eq!(trace[0].expected_cost, expected_cost(&mdp, &prior, &Start::State(0)).unwrap());
    }

    #[test]
    fn full_sweeps_converge_to_dp_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec =
            RandomMdp { states: 4, controls: 3, horizon: Horizon::Finite(5), max_cost: 3.0, ..RandomMdp::default() };
        let mdp = loop {
            // a clear gap between best and second-best control keeps 50 sweeps enough
            let m = random_mdp(&mut rng, &spec);
            let (j, _) = finite_horizon_dp(&m).unwrap();
            let gap_ok = (0..=5).all(|t| {
                let zeros = vec![0.0; 4];
                let next = if t < 5 { j.values(t + 1) } else { &zeros };
                (0..4).all(|x| {
                    let mut q: Vec<f64> = (0..3).map(|u| m.stage_cost(t, x, u) + m.expect(x, u, next)).collect();
                    q.sort_by(f64::total_cmp);
                    q[1] - q[0] > 0.5
                })
            });
            if gap_ok {
                break m;
            }
        };
        let (j, _) = finite_horizon_dp(&mdp).unwrap();
        let prior = TabularPolicy::uniform_stages(&mdp, 6);
        let trace = iterate_policies(&mdp, &prior, &UpdateSchedule::FullBackwardSweep, 50, &Start::State(0)).unwrap();
        for w in trace.windows(2) {
            assert!(w[1].expected_cost <= w[0].expected_cost + 1e-12);
        }
        assert!((trace[50].expected_cost - j.at(0, 0)).abs() < 1e-8, "{} vs {}", trace[50].expected_cost, j.at(0, 0));
    }

    #[test]
    fn asynchronous_update_at_last_stage_matches_sweep_stage() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = RandomMdp { states: 3, controls: 3, horizon: Horizon::Finite(4), ..RandomMdp::default() };
        let mdp = random_mdp(&mut rng, &spec);
        let prior = random_policy(&mut rng, &mdp, 5, 0.1);
        let sweep = psi_backward_sweep(&mdp, &prior).unwrap().policy();
        let single = psi_single_step(&mdp, &prior, 4).unwrap();
        for x in 0..3 {
            for u in 0..3 {
                assert!((sweep.prob(4, x, u) - single.prob(4, x, u)).abs() < 1e-15);
                assert_eq!(single.prob(2, x, u), prior.prob(2, x, u));
            }
        }
        // with a single stage the two schedules coincide
        let one = random_mdp(&mut rng, &RandomMdp { horizon: Horizon::Finite(0), ..RandomMdp::default() });
        let p0 = TabularPolicy::uniform(&one);
        let a = psi_backward_sweep(&one, &p0).unwrap().policy();
        let b = psi_single_step(&one, &p0, 0).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn stationary_value_style_schedule() {
        let s = UpdateSchedule::StationaryValueStyle;
        let seq: Vec<usize> = (0..9).map(|i| s.stage_at(i, 2).unwrap()).collect();
        assert_eq!(seq, vec![2, 2, 1, 2, 1, 0, 2, 1, 0]);
        assert!(UpdateSchedule::Asynchronous(vec![5]).validate(4).is_err());
    }

    #[test]
    fn all_schedules_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for case in 0..10 {
            let spec = RandomMdp {
                states: 4,
                controls: 3,
                horizon: Horizon::Finite(4),
                per_stage_cost: true,
                ..RandomMdp::default()
            };
            let mdp = random_mdp(&mut rng, &spec);
            let prior = random_policy(&mut rng, &mdp, 5, 0.05);
            let order: Vec<usize> = (0..20).map(|_| rng.random_range(0..5)).collect();
            for sched in [
                UpdateSchedule::FullBackwardSweep,
                UpdateSchedule::Asynchronous(order),
                UpdateSchedule::StationaryValueStyle,
            ] {
                let trace = iterate_policies(&mdp, &prior, &sched, 15, &Start::State(case % 4)).unwrap();
                for w in trace.windows(2) {
                    assert!(w[1].expected_cost <= w[0].expected_cost + 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_prior_mass_is_a_support_error() {
        let mdp = one_step([0.0, 1.0]);
        let prior = TabularPolicy::deterministic(1, 2, &[vec![0]]).unwrap();
        let err = iterate_policies(&mdp, &prior, &UpdateSchedule::FullBackwardSweep, 1, &Start::State(0)).unwrap_err();
        assert_eq!(err, Error::Support { t: 0, x: 0, u: 1 });
    }

    #[test]
    fn single_absorbing_state_is_a_fixed_point() {
        let mdp =
            FiniteMdp::new(1, 1, vec![1.0], CostTable::Stationary(vec![0.0]), 1.0, Horizon::Infinite, vec![0]).unwrap();
        let init = PsiTable::zeros(&mdp, 1);
        let out = psi_value_iteration(&mdp, &init, 10).unwrap();
        assert_eq!(out.log_partition(0, 0), 0.0);
        assert_eq!(out.policy_row(0, 0), vec![1.0]);
    }

    #[test]
    fn undiscounted_sweep_is_myopic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let spec =
            RandomMdp { states: 3, controls: 3, horizon: Horizon::Infinite, discount: 0.0, ..RandomMdp::default() };
        let mdp = random_mdp(&mut rng, &spec);
        let mut init = PsiTable::zeros(&mdp, 1);
        init.stages[0].iter_mut().for_each(|v| *v = rng.random::<f64>());
        let bar = init.log_partitions(0);
        let out = psi_value_iteration(&mdp, &init, 1).unwrap();
        for x in 0..3 {
            for u in 0..3 {
                let expect = init.value(0, x, u) - bar[x] - mdp.cost(0, x, u);
                assert!((out.value(0, x, u) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn value_iteration_offsets_vanish_on_random_discounted_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let spec =
            RandomMdp { states: 5, controls: 3, horizon: Horizon::Infinite, discount: 0.9, ..RandomMdp::default() };
        let mdp = random_mdp(&mut rng, &spec);
        let (j, pi) = value_iteration(&mdp, 1e-12).unwrap();
        let (psi, trace) = psi_value_iteration_monitored(&mdp, &PsiTable::zeros(&mdp, 1), 800, j.values(0)).unwrap();
        assert!(*trace.last().unwrap() < 1e-6, "{}", trace.last().unwrap());
        for x in 0..5 {
            let best = (0..3).find(|&u| pi.prob(0, x, u) == 1.0).unwrap();
            assert_eq!(psi.argmax_controls(0, x, 0.0), vec![best]);
        }
    }

    #[test]
    fn restricted_optimum_is_uniform_on_ties() {
        let mdp = one_step([1.0, 1.0]);
        let (j, _) = finite_horizon_dp(&mdp).unwrap();
        let r = restricted_optimum(&mdp, &j, 1e-12).unwrap();
        assert_eq!(r.row(0, 0), &[0.5, 0.5]);
    }
}
