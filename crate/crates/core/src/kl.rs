//! Exact KL evaluation between the controlled process and the posterior
//! process, and the closed-form minimizer for a two-stage chain `a -> b -> c`.

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, Start, TabularPolicy, ROW_TOL};

/// Max-subtracted `log sum exp`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.into_iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlReport {
    /// `KL(q_pi || p_pi0)`.
    pub kl: f64,
    /// `E_q[sum_t C_t]`.
    pub expected_cost: f64,
    /// `E_q[sum_t (C_t - log pi0(u_t|x_t))]`.
    pub relaxed_cost: f64,
    /// `E_q[sum_t log pi(u_t|x_t)]`; zero for deterministic policies.
    pub expected_log_policy: f64,
    /// `log P(r_0..r_T = 1 | x_0; pi0)`.
    pub log_evidence: f64,
}

/// Backward sum-product `log beta_t(x) = log sum_u pi0(u|x) exp(-C_t) E[beta_{t+1}]`.
pub fn log_evidence_table(mdp: &FiniteMdp, prior: &TabularPolicy) -> Result<Vec<Vec<f64>>> {
    let horizon = mdp.finite_horizon()?;
    prior.check_against(mdp)?;
    let nx = mdp.num_states();
    let mut beta = vec![vec![0.0; nx]; horizon + 2];
    for t in (0..=horizon).rev() {
        for x in 0..nx {
            let terms: Vec<f64> = prior
                .row(t, x)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(u, &p)| {
                    let next = log_sum_exp(mdp.successors(x, u).iter().map(|&(y, py)| py.ln() + beta[t + 1][y]));
                    p.ln() - mdp.stage_cost(t, x, u) + next
                })
                .collect();
            beta[t][x] = log_sum_exp(terms);
        }
    }
    beta.truncate(horizon + 1);
    Ok(beta)
}

/// Exact `KL(q_pi || p_pi0)` by forward marginal propagation, with the
/// decomposition `kl = log_evidence + relaxed_cost + expected_log_policy`.
pub fn kl_controlled_vs_posterior(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    prior: &TabularPolicy,
    start: &Start,
) -> Result<KlReport> {
    let horizon = mdp.finite_horizon()?;
    policy.check_against(mdp)?;
    prior.check_against(mdp)?;
    let nx = mdp.num_states();
    let d0 = start.to_vec(mdp)?;
    let mut d = d0.clone();
    let mut next = vec![0.0; nx];
    let (mut cost, mut log_prior, mut log_pi) = (0.0, 0.0, 0.0);
    for t in 0..=horizon {
        next.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..nx {
            if d[x] == 0.0 {
                continue;
            }
            for (u, &pu) in policy.row(t, x).iter().enumerate() {
                if pu == 0.0 {
                    continue;
                }
                let p0 = prior.prob(t, x, u);
                if p0 == 0.0 {
                    return Err(Error::Support { t, x, u });
                }
                let w = d[x] * pu;
                cost += w * mdp.stage_cost(t, x, u);
                log_prior += w * p0.ln();
                log_pi += w * pu.ln();
                for &(y, py) in mdp.successors(x, u) {
                    next[y] += w * py;
                }
            }
        }
        std::mem::swap(&mut d, &mut next);
    }
    let beta = log_evidence_table(mdp, prior)?;
    let log_evidence = log_sum_exp(d0.iter().enumerate().filter(|(_, &m)| m > 0.0).map(|(x, &m)| m.ln() + beta[0][x]));
    let relaxed_cost = cost - log_prior;
    Ok(KlReport {
        kl: log_evidence + relaxed_cost + log_pi,
        expected_cost: cost,
        relaxed_cost,
        expected_log_policy: log_pi,
        log_evidence,
    })
}

/// Closed-form minimizer of `F(q) = E_q[log q(a) - log P(a) - E_{b|a} log P(c|b)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KlMinimizer {
    pub q: Vec<f64>,
    /// `F(q*) = -log sum_a P(a) exp(E_{b|a} log P(c|b))`.
    pub min_kl: f64,
    /// `log P(c) = log sum_a P(a) sum_b P(b|a) P(c|b)`. The divergence from
    /// the normalized posterior at `q*` is `min_kl + log_evidence`.
    pub log_evidence: f64,
}

fn check_one_step_inputs(prior: &[f64], channel: &[Vec<f64>], obs_loglik: &[f64]) -> Result<()> {
    if prior.is_empty() || channel.len() != prior.len() {
        return Err(Error::Shape(format!("prior has {} entries, channel {} rows", prior.len(), channel.len())));
    }
    let s: f64 = prior.iter().sum();
    if (s - 1.0).abs() > ROW_TOL || prior.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidModel(format!("prior sums to {s}")));
    }
    for (a, row) in channel.iter().enumerate() {
        if row.len() != obs_loglik.len() {
            return Err(Error::Shape(format!("channel row {a} has {} entries", row.len())));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_TOL || row.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidModel(format!("channel row {a} sums to {s}")));
        }
    }
    if obs_loglik.iter().any(|&l| l > 0.0 || l.is_nan()) {
        return Err(Error::InvalidModel("observation log-likelihoods must be <= 0".into()));
    }
    Ok(())
}

fn expected_loglik(row: &[f64], obs_loglik: &[f64]) -> f64 {
    row.iter().zip(obs_loglik).filter(|(&p, _)| p > 0.0).map(|(&p, &l)| p * l).sum()
}

/// `q*(a) ∝ P(a) exp(sum_b P(b|a) log P(c|b))`.
pub fn kl_minimizer_closed_form(prior: &[f64], channel: &[Vec<f64>], obs_loglik: &[f64]) -> Result<KlMinimizer> {
    check_one_step_inputs(prior, channel, obs_loglik)?;
    let log_mass: Vec<f64> = prior
        .iter()
        .zip(channel)
        .map(|(&p, row)| if p > 0.0 { p.ln() + expected_loglik(row, obs_loglik) } else { f64::NEG_INFINITY })
        .collect();
    let log_norm = log_sum_exp(log_mass.iter().copied());
    if log_norm == f64::NEG_INFINITY {
        return Err(Error::Undefined("closed-form minimizer has zero total mass".into()));
    }
    let q = log_mass.iter().map(|&m| (m - log_norm).exp()).collect();
    let log_evidence = log_sum_exp(prior.iter().zip(channel).filter(|(&p, _)| p > 0.0).map(|(&p, row)| {
        p.ln() + log_sum_exp(row.iter().zip(obs_loglik).filter(|(&pb, _)| pb > 0.0).map(|(&pb, &l)| pb.ln() + l))
    }));
    Ok(KlMinimizer { q, min_kl: -log_norm, log_evidence })
}

/// The objective `F(q)` minimized by [`kl_minimizer_closed_form`].
pub fn one_step_kl_objective(q: &[f64], prior: &[f64], channel: &[Vec<f64>], obs_loglik: &[f64]) -> Result<f64> {
    check_one_step_inputs(prior, channel, obs_loglik)?;
    if q.len() != prior.len() {
        return Err(Error::Shape("q and prior differ in length".into()));
    }
    let mut f = 0.0;
    for ((&qa, &pa), row) in q.iter().zip(prior).zip(channel) {
        if qa == 0.0 {
            continue;
        }
        if pa == 0.0 {
            return Ok(f64::INFINITY);
        }
        f += qa * (qa.ln() - pa.ln() - expected_loglik(row, obs_loglik));
    }
    Ok(f)
}
