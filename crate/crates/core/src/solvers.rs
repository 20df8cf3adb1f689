//! Dynamic programming oracles for tabular problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, Horizon, TabularPolicy};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 1_000_000;

/// Relative slack under which two Q values count as a tie.
const TIE_EPS: f64 = 1e-12;

/// `J_t(x)` per stage, or a single stationary row.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    stages: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn stationary(values: Vec<f64>) -> Self {
        Self { stages: vec![values] }
    }

    pub fn per_stage(stages: Vec<Vec<f64>>) -> Self {
        Self { stages }
    }

    pub fn values(&self, t: usize) -> &[f64] {
        &self.stages[t.min(self.stages.len() - 1)]
    }

    pub fn at(&self, t: usize, x: usize) -> f64 {
        self.values(t)[x]
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn max(&self, t: usize) -> f64 {
        self.values(t).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn argmin_allowed(mdp: &FiniteMdp, x: usize, q: impl Fn(usize) -> f64) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for u in mdp.allowed_controls(x) {
        let v = q(u);
        if best.0 == usize::MAX || v < best.1 - TIE_EPS * (1.0 + best.1.abs()) {
            best = (u, v);
        }
    }
    best
}

/// Backward recursion `J_t(x) = min_u gamma^t C_t(x,u) + E[J_{t+1}]` with
/// `J_{T+1} = 0`. Greedy ties go to the lowest control index.
pub fn finite_horizon_dp(mdp: &FiniteMdp) -> Result<(ValueTable, TabularPolicy)> {
    let horizon = mdp.finite_horizon()?;
    let nx = mdp.num_states();
    let mut values = vec![vec![0.0; nx]; horizon + 1];
    let mut actions = vec![vec![0; nx]; horizon + 1];
    let mut next = vec![0.0; nx];
    for t in (0..=horizon).rev() {
        for x in 0..nx {
            let (u, v) = argmin_allowed(mdp, x, |u| mdp.stage_cost(t, x, u) + mdp.expect(x, u, &next));
            values[t][x] = v;
            actions[t][x] = u;
        }
        next.clone_from(&values[t]);
    }
    let policy = TabularPolicy::deterministic(nx, mdp.num_controls(), &actions)?;
    Ok((ValueTable::per_stage(values), policy))
}

/// `C(x,u) + gamma * E[J(y)]` for a stationary value row.
pub fn q_from_values(mdp: &FiniteMdp, values: &[f64]) -> Vec<f64> {
    let (nx, nu) = (mdp.num_states(), mdp.num_controls());
    let mut q = vec![f64::INFINITY; nx * nu];
    for x in 0..nx {
        for u in mdp.allowed_controls(x) {
            q[x * nu + u] = mdp.cost(0, x, u) + mdp.discount() * mdp.expect(x, u, values);
        }
    }
    q
}

/// Greedy deterministic policy for a stationary value row.
pub fn greedy_policy(mdp: &FiniteMdp, values: &[f64]) -> Result<TabularPolicy> {
    let q = q_from_values(mdp, values);
    let nu = mdp.num_controls();
    let actions: Vec<usize> = (0..mdp.num_states()).map(|x| argmin_allowed(mdp, x, |u| q[x * nu + u]).0).collect();
    TabularPolicy::deterministic(mdp.num_states(), nu, &[actions])
}

/// Controls whose Q value is within `tol` of the minimum at `x`.
pub fn optimal_controls(mdp: &FiniteMdp, values: &[f64], x: usize, tol: f64) -> Vec<usize> {
    let nu = mdp.num_controls();
    let q = q_from_values(mdp, values);
    let row = &q[x * nu..][..nu];
    let best = row.iter().copied().fold(f64::INFINITY, f64::min);
    mdp.allowed_controls(x).filter(|&u| row[u] <= best + tol).collect()
}

/// Bellman optimality iteration from `J = 0` until the sup-norm residual is
/// below `tol`.
pub fn value_iteration(mdp: &FiniteMdp, tol: f64) -> Result<(ValueTable, TabularPolicy)> {
    if mdp.horizon() != Horizon::Infinite {
        return Err(Error::InvalidModel("value iteration needs an infinite horizon".into()));
    }
    let nx = mdp.num_states();
    let gamma = mdp.discount();
    let mut j = vec![0.0; nx];
    let mut next = vec![0.0; nx];
    for _ in 0..MAX_ITERATIONS {
        let mut residual: f64 = 0.0;
        for x in 0..nx {
            let (_, v) = argmin_allowed(mdp, x, |u| mdp.cost(0, x, u) + gamma * mdp.expect(x, u, &j));
            residual = residual.max((v - j[x]).abs());
            next[x] = v;
        }
        std::mem::swap(&mut j, &mut next);
        if residual < tol {
            let policy = greedy_policy(mdp, &j)?;
            return Ok((ValueTable::stationary(j), policy));
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(Error::NonConvergent { iterations: MAX_ITERATIONS, detail: "Bellman residual stayed above tolerance".into() })
}

/// States that reach an absorbing state with positive probability under `policy`.
fn reaches_absorbing(mdp: &FiniteMdp, policy: &TabularPolicy) -> Vec<bool> {
    let nx = mdp.num_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); nx];
    for x in 0..nx {
        for (u, &p) in policy.row(0, x).iter().enumerate() {
            if p > 0.0 {
                for &(y, _) in mdp.successors(x, u) {
                    preds[y].push(x);
                }
            }
        }
    }
    let mut seen = vec![false; nx];
    let mut stack: Vec<usize> = mdp.absorbing().to_vec();
    for &a in &stack {
        seen[a] = true;
    }
    while let Some(y) = stack.pop() {
        for &x in &preds[y] {
            if !seen[x] {
                seen[x] = true;
                stack.push(x);
            }
        }
    }
    seen
}

/// `J^pi` and the matching `Q^pi`. Finite horizons recurse backward; infinite
/// horizons solve `(I - gamma P_pi) J = c_pi` directly and check the residual.
pub fn policy_evaluation(mdp: &FiniteMdp, policy: &TabularPolicy, tol: f64) -> Result<ValueTable> {
    policy.check_against(mdp)?;
    let nx = mdp.num_states();
    if let Horizon::Finite(horizon) = mdp.horizon() {
        let mut values = vec![vec![0.0; nx]; horizon + 1];
        let mut next = vec![0.0; nx];
        for t in (0..=horizon).rev() {
            for x in 0..nx {
                values[t][x] = policy
                    .row(t, x)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(u, &p)| p * (mdp.stage_cost(t, x, u) + mdp.expect(x, u, &next)))
                    .sum();
            }
            next.clone_from(&values[t]);
        }
        return Ok(ValueTable::per_stage(values));
    }

    let gamma = mdp.discount();
    let proper = reaches_absorbing(mdp, policy);
    let mut a = DMatrix::<f64>::identity(nx, nx);
    let mut c = DVector::<f64>::zeros(nx);
    for x in 0..nx {
        for (u, &p) in policy.row(0, x).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            c[x] += p * mdp.cost(0, x, u);
            for &(y, py) in mdp.successors(x, u) {
                a[(x, y)] -= gamma * p * py;
            }
        }
    }
    if gamma == 1.0 {
        if let Some(x) = (0..nx).find(|&x| !proper[x]) {
            return Err(Error::NonConvergent {
                iterations: 0,
                detail: format!("policy never reaches an absorbing state from state {x}"),
            });
        }
        for &s in mdp.absorbing() {
            if c[s] > 0.0 {
                return Err(Error::Undefined(format!("absorbing state {s} has positive cost at discount 1")));
            }
            // J = 0 on zero-cost absorbing states pins the otherwise singular system
            a.row_mut(s).fill(0.0);
            a[(s, s)] = 1.0;
        }
    }
    let j = a.clone().lu().solve(&c).ok_or_else(|| Error::Singular("policy evaluation system is singular".into()))?;
    let residual = (&a * &j - &c).amax();
    if !residual.is_finite() || residual > tol.max(1e-9 * (1.0 + j.amax())) {
        return Err(Error::NonConvergent { iterations: 1, detail: format!("evaluation residual {residual}") });
    }
    Ok(ValueTable::stationary(j.iter().copied().collect()))
}

/// `Q^pi(x,u) = C(x,u) + gamma * E[J^pi(y)]`, laid out `x * num_controls + u`;
/// disallowed pairs are `+inf`.
pub fn q_function(mdp: &FiniteMdp, policy: &TabularPolicy, tol: f64) -> Result<Vec<f64>> {
    if mdp.horizon() != Horizon::Infinite {
        return Err(Error::InvalidModel("q_function needs an infinite horizon".into()));
    }
    let j = policy_evaluation(mdp, policy, tol)?;
    Ok(q_from_values(mdp, j.values(0)))
}
