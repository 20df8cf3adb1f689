//! Exact expectations by forward propagation of state marginals.

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, Horizon, Start, TabularPolicy};

/// Tail bound for truncated discounted sums.
pub const TAIL_EPS: f64 = 1e-10;
/// Non-absorbing mass below which an undiscounted rollout is considered done.
pub const MASS_EPS: f64 = 1e-12;
/// Step cap for undiscounted propagation.
pub const MAX_STEPS: usize = 1_000_000;

/// Truncation length `ceil(log(eps (1 - gamma) / C_max) / log gamma)`.
pub fn truncation_horizon(discount: f64, max_cost: f64, eps: f64) -> usize {
    if max_cost <= 0.0 || discount <= 0.0 {
        return 1;
    }
    let n = ((eps * (1.0 - discount) / max_cost).ln() / discount.ln()).ceil();
    n.max(1.0) as usize
}

fn step_marginal(mdp: &FiniteMdp, policy: &TabularPolicy, t: usize, d: &[f64], next: &mut [f64]) -> f64 {
    next.iter_mut().for_each(|v| *v = 0.0);
    let mut cost = 0.0;
    for (x, &mass) in d.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for (u, &pu) in policy.row(t, x).iter().enumerate() {
            if pu == 0.0 {
                continue;
            }
            let w = mass * pu;
            cost += w * mdp.cost(t, x, u);
            for &(y, p) in mdp.successors(x, u) {
                next[y] += w * p;
            }
        }
    }
    cost
}

/// State marginals `d_t(x)` for `t = 0..=T` of a finite-horizon problem.
pub fn state_marginals(mdp: &FiniteMdp, policy: &TabularPolicy, start: &Start) -> Result<Vec<Vec<f64>>> {
    let horizon = mdp.finite_horizon()?;
    policy.check_against(mdp)?;
    let mut out = vec![start.to_vec(mdp)?];
    let mut next = vec![0.0; mdp.num_states()];
    for t in 0..horizon {
        step_marginal(mdp, policy, t, &out[t], &mut next);
        out.push(next.clone());
    }
    Ok(out)
}

/// Exact expected total cost `E[sum_t gamma^t C_t]` under `policy`.
///
/// Finite horizons are summed exactly. Discounted infinite horizons are
/// truncated with tail bound [`TAIL_EPS`]. Undiscounted infinite horizons run
/// until the mass outside absorbing states drops below [`MASS_EPS`]; an
/// improper policy either hits [`MAX_STEPS`] or reaches a costly absorbing
/// state, and both are reported as errors.
pub fn expected_cost(mdp: &FiniteMdp, policy: &TabularPolicy, start: &Start) -> Result<f64> {
    policy.check_against(mdp)?;
    let mut d = start.to_vec(mdp)?;
    let mut next = vec![0.0; mdp.num_states()];
    let gamma = mdp.discount();
    match mdp.horizon() {
        Horizon::Finite(horizon) => {
            let mut total = 0.0;
            let mut g = 1.0;
            for t in 0..=horizon {
                total += g * step_marginal(mdp, policy, t, &d, &mut next);
                std::mem::swap(&mut d, &mut next);
                g *= gamma;
            }
            Ok(total)
        }
        Horizon::Infinite if gamma < 1.0 => {
            let steps = truncation_horizon(gamma, mdp.max_cost(), TAIL_EPS);
            let mut total = 0.0;
            let mut g = 1.0;
            for _ in 0..steps {
                total += g * step_marginal(mdp, policy, 0, &d, &mut next);
                std::mem::swap(&mut d, &mut next);
                g *= gamma;
                if g == 0.0 {
                    break;
                }
            }
            Ok(total)
        }
        Horizon::Infinite => {
            for &a in mdp.absorbing() {
                let c: f64 = policy.row(0, a).iter().enumerate().map(|(u, &p)| p * mdp.cost(0, a, u)).sum();
                if c > 0.0 && d[a] > 0.0 {
                    return Err(Error::Undefined(format!("start mass on absorbing state {a} with cost {c}")));
                }
            }
            let mut total = 0.0;
            for step in 0..MAX_STEPS {
                total += step_marginal(mdp, policy, 0, &d, &mut next);
                std::mem::swap(&mut d, &mut next);
                let mut live = 0.0;
                for (x, &m) in d.iter().enumerate() {
                    if mdp.is_absorbing(x) {
                        if m > 0.0 {
                            let c: f64 = policy.row(0, x).iter().enumerate().map(|(u, &p)| p * mdp.cost(0, x, u)).sum();
                            if c > 0.0 {
                                return Err(Error::Undefined(format!(
                                    "absorbing state {x} with cost {c} is reached after {step} steps; undiscounted cost is infinite"
                                )));
                            }
                        }
                    } else {
                        live += m;
                    }
                }
                if live < MASS_EPS {
                    return Ok(total);
                }
            }
            Err(Error::NonConvergent {
                iterations: MAX_STEPS,
                detail: "mass outside absorbing states did not vanish; policy looks improper".into(),
            })
        }
    }
}
