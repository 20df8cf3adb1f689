use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kl::{kl_controlled_vs_posterior, kl_minimizer_closed_form, log_sum_exp, one_step_kl_objective};
use crate::lspsi::{ContinuousSample, GaussianForm, LinearBasisModel, OneHotBasis};
use crate::mdp::{posterior_log_weight, trajectory_log_density, Horizon, Start, TabularPolicy, Trajectory};
use crate::psi::{iterate_policies, offset_range, psi_value_iteration, PsiTable, UpdateSchedule};
use crate::quadrature::{integrate, integrate_2d};
use crate::random::{deterministic_policies, random_mdp, random_policy, RandomMdp};
use crate::solvers::{optimal_controls, value_iteration};
use crate::tabular::{Algorithm, LearnerState, LearningRate};
use crate::{expected_cost, FiniteMdp};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub monotone_mdps: usize,
    pub duality_mdps: usize,
    pub minimizer_instances: usize,
    pub minimizer_grid_step: f64,
    pub psi_limit_mdps: usize,
    pub psi_limit_sweeps: usize,
    pub gaussian_instances: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            monotone_mdps: 100,
            duality_mdps: 20,
            minimizer_instances: 50,
            minimizer_grid_step: 1e-3,
            psi_limit_mdps: 20,
            psi_limit_sweeps: 500,
            gaussian_instances: 100,
        }
    }
}

impl VerifyOptions {
    /// Reduced sizes for smoke runs.
    pub fn quick() -> Self {
        Self {
            monotone_mdps: 10,
            duality_mdps: 3,
            minimizer_instances: 5,
            minimizer_grid_step: 5e-3,
            psi_limit_mdps: 3,
            gaussian_instances: 10,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub max_deviation: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                format!("{tag} {:<28} max_dev={:.3e}  {}", c.name, c.max_deviation, c.detail)
            })
            .collect()
    }
}

fn check(name: &'static str, passed: bool, max_deviation: f64, detail: String) -> CheckResult {
    CheckResult { name, passed, max_deviation, detail }
}

fn monotonicity(rng: &mut ChaCha8Rng, n: usize) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut sequences = 0;
    for case in 0..n {
        let horizon = rng.random_range(0..=8);
        let spec = RandomMdp {
            states: rng.random_range(1..=6),
            controls: rng.random_range(1..=4),
            horizon: Horizon::Finite(horizon),
            max_cost: 2.0,
            per_stage_cost: true,
            ..RandomMdp::default()
        };
        let mdp = random_mdp(rng, &spec);
        let prior = random_policy(rng, &mdp, horizon + 1, 0.05);
        let order: Vec<usize> = (0..3 * (horizon + 1)).map(|_| rng.random_range(0..=horizon)).collect();
        let start = Start::State(case % spec.states);
        for sched in [
            UpdateSchedule::FullBackwardSweep,
            UpdateSchedule::Asynchronous(order),
            UpdateSchedule::StationaryValueStyle,
        ] {
            let trace = iterate_policies(&mdp, &prior, &sched, 12, &start)?;
            for w in trace.windows(2) {
                worst = worst.max(w[1].expected_cost - w[0].expected_cost);
            }
            sequences += 1;
        }
    }
    Ok(check("monotone_expected_cost", worst <= 1e-10, worst.max(0.0), format!("{sequences} sequences over {n} MDPs")))
}

/// Every `(states, controls)` path of length `horizon + 1` from `x0`.
fn all_trajectories(mdp: &FiniteMdp, horizon: usize, x0: usize) -> Vec<Trajectory> {
    let (nx, nu) = (mdp.num_states(), mdp.num_controls());
    let n = horizon + 1;
    let total = nx.pow(horizon as u32) * nu.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let mut states = vec![x0];
            let mut controls = Vec::with_capacity(n);
            for t in 0..n {
                controls.push(code % nu);
                code /= nu;
                if t + 1 < n {
                    states.push(code % nx);
                    code /= nx;
                }
            }
            Trajectory::new(states, controls).expect("lengths match")
        })
        .collect()
}

/// `KL(q_pi || p_pi0)` minus the relaxed cost, with both terms computed by
/// enumerating trajectories, plus the evaluator's own KL for comparison.
fn enumerated_duality_gap(
    mdp: &FiniteMdp,
    paths: &[Trajectory],
    pi: &TabularPolicy,
    prior: &TabularPolicy,
) -> Result<(f64, f64)> {
    let mut joint = Vec::with_capacity(paths.len());
    for tr in paths {
        joint.push(trajectory_log_density(mdp, prior, tr)? + posterior_log_weight(mdp, tr)?);
    }
    let log_z = log_sum_exp(joint.iter().copied());
    let (mut kl, mut relaxed) = (0.0, 0.0);
    for (tr, lp) in paths.iter().zip(&joint) {
        let lq = trajectory_log_density(mdp, pi, tr)?;
        if lq == f64::NEG_INFINITY {
            continue;
        }
        let q = lq.exp();
        kl += q * (lq - (lp - log_z));
        let log_prior: f64 = (0..tr.len()).map(|t| prior.prob(t, tr.states[t], tr.controls[t]).ln()).sum();
        relaxed += q * (-posterior_log_weight(mdp, tr)? - log_prior);
    }
    Ok((kl - relaxed, kl))
}

fn duality(rng: &mut ChaCha8Rng, n: usize) -> Result<CheckResult> {
    let mut spread = 0.0f64;
    let mut evaluator = 0.0f64;
    let mut argmin_ok = true;
    for _ in 0..n {
        let spec = RandomMdp {
            states: 3,
            controls: 2,
            horizon: Horizon::Finite(3),
            per_stage_cost: true,
            ..RandomMdp::default()
        };
        let mdp = random_mdp(rng, &spec);
        let prior = TabularPolicy::uniform_stages(&mdp, 4);
        let start = Start::State(0);
        let paths = all_trajectories(&mdp, 3, 0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut best_kl = (f64::INFINITY, 0);
        let mut costs = Vec::new();
        for (i, pi) in deterministic_policies(&mdp, 4).enumerate() {
            let (gap, kl) = enumerated_duality_gap(&mdp, &paths, &pi, &prior)?;
            lo = lo.min(gap);
            hi = hi.max(gap);
            evaluator = evaluator.max((kl_controlled_vs_posterior(&mdp, &pi, &prior, &start)?.kl - kl).abs());
            if kl < best_kl.0 {
                best_kl = (kl, i);
            }
            costs.push(expected_cost(&mdp, &pi, &start)?);
        }
        // the KL minimiser must be one of the (possibly tied) cost minimisers
        let min_cost = costs.iter().copied().fold(f64::INFINITY, f64::min);
        argmin_ok &= costs[best_kl.1] <= min_cost + 1e-10;
        spread = spread.max(hi - lo);
    }
    let worst = spread.max(evaluator);
    let detail = format!("{n} MDPs, evaluator vs enumeration {evaluator:.1e}, argmin agreement {argmin_ok}");
    Ok(check("kl_duality", worst < 1e-10 && argmin_ok, worst, detail))
}

fn closed_form_minimizer(rng: &mut ChaCha8Rng, n: usize, step: f64) -> Result<CheckResult> {
    let mut worst_q = 0.0f64;
    let mut worst_value = 0.0f64;
    let ticks = (1.0 / step).round() as usize;
    for _ in 0..n {
        let raw: Vec<f64> = (0..3).map(|_| 0.1 + rng.random::<f64>()).collect();
        let prior: Vec<f64> = raw.iter().map(|v| v / raw.iter().sum::<f64>()).collect();
        let channel: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let p = rng.random::<f64>();
                vec![p, 1.0 - p]
            })
            .collect();
        let obs: Vec<f64> = (0..2).map(|_| -3.0 * rng.random::<f64>()).collect();
        let sol = kl_minimizer_closed_form(&prior, &channel, &obs)?;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..=ticks {
            for j in 0..=ticks - i {
                let q = [i as f64 * step, j as f64 * step, (ticks - i - j) as f64 * step];
                let f = one_step_kl_objective(&q, &prior, &channel, &obs)?;
                if f < best.0 {
                    best = (f, q);
                }
            }
        }
        worst_q = worst_q.max(sol.q.iter().zip(&best.1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        worst_value = worst_value.max((one_step_kl_objective(&sol.q, &prior, &channel, &obs)? - sol.min_kl).abs());
    }
    let passed = worst_q <= (2.0 * step).max(2e-3) && worst_value <= 1e-10;
    Ok(check(
        "closed_form_minimizer",
        passed,
        worst_q,
        format!("min-value deviation {worst_value:.1e} over {n} instances"),
    ))
}

/// A random infinite-horizon problem whose optimal control is unique at
/// every state, with Q-value gap at least `gap`.
pub(crate) fn unique_optimum_mdp<R: Rng + ?Sized>(rng: &mut R, gap: f64) -> Result<FiniteMdp> {
    loop {
        let spec = RandomMdp {
            states: 5,
            controls: 3,
            horizon: Horizon::Infinite,
            discount: 0.9,
            max_cost: 2.0,
            ..RandomMdp::default()
        };
        let mdp = random_mdp(rng, &spec);
        let (j, _) = value_iteration(&mdp, 1e-12)?;
        let ok = (0..5).all(|x| {
            let mut q: Vec<f64> = (0..3).map(|u| mdp.cost(0, x, u) + 0.9 * mdp.expect(x, u, j.values(0))).collect();
            q.sort_by(f64::total_cmp);
            q[1] - q[0] >= gap
        });
        if ok {
            return Ok(mdp);
        }
    }
}

fn psi_limit(rng: &mut ChaCha8Rng, n: usize, sweeps: usize) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut argmax_ok = true;
    for _ in 0..n {
        let mdp = unique_optimum_mdp(rng, 0.05)?;
        let (j, _) = value_iteration(&mdp, 1e-12)?;
        let psi = psi_value_iteration(&mdp, &PsiTable::zeros(&mdp, 1), sweeps)?;
        worst = worst.max(offset_range(&psi.log_partitions(0), j.values(0)));
        for x in 0..mdp.num_states() {
            argmax_ok &= psi.argmax_controls(0, x, 0.0) == optimal_controls(&mdp, j.values(0), x, 1e-9);
        }
    }
    Ok(check(
        "psi_value_iteration_limit",
        worst < 1e-6 && argmax_ok,
        worst,
        format!("{n} MDPs, {sweeps} sweeps, argmax agreement {argmax_ok}"),
    ))
}

fn random_form<R: Rng + ?Sized>(rng: &mut R, d: usize) -> GaussianForm {
    let l = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    GaussianForm {
        k_mat: &l * l.transpose() + DMatrix::identity(d, d) * 0.2,
        k_vec: DVector::from_fn(d, |_, _| rng.random::<f64>() * 6.0 - 3.0),
        k0: rng.random::<f64>() * 4.0 - 2.0,
    }
}

/// `log int exp Psi(u) du` by quadrature on a box of 12 standard deviations
/// around the mode.
pub(crate) fn quadrature_log_partition(form: &GaussianForm) -> Result<f64> {
    let (mean, cov) = form.policy()?;
    let peak = form.eval(&mean);
    let f = |u: DVector<f64>| (form.eval(&u) - peak).exp();
    let w = |i: usize| 12.0 * cov[(i, i)].sqrt();
    let mass = match mean.len() {
        1 => integrate(|a| f(DVector::from_element(1, a)), mean[0] - w(0), mean[0] + w(0), 1e-12),
        _ => integrate_2d(
            |a, b| f(DVector::from_vec(vec![a, b])),
            (mean[0] - w(0), mean[0] + w(0)),
            (mean[1] - w(1), mean[1] + w(1)),
            1e-9,
        ),
    };
    Ok(peak + mass.ln())
}

/// The log-partition with the quadratic term's sign flipped and a full
/// `log det` coefficient; fault injection for the quadrature check.
pub fn sign_flipped_log_partition(form: &GaussianForm) -> Result<f64> {
    let correct = form.log_partition()?;
    let (mean, _) = form.policy()?;
    let kk = form.k_vec.dot(&mean);
    let log_det = form.k_mat.determinant().ln();
    Ok(correct - kk - 0.5 * log_det)
}

fn gaussian_check(
    name: &'static str,
    rng: &mut ChaCha8Rng,
    n: usize,
    candidate: impl Fn(&GaussianForm) -> Result<f64>,
    expect_failure: bool,
) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for i in 0..n {
        let form = random_form(rng, 1 + i % 2);
        worst = worst.max((candidate(&form)? - quadrature_log_partition(&form)?).abs());
    }
    let passed = if expect_failure { worst > 1.0 } else { worst < 1e-6 };
    let detail = if expect_failure { "injected fault must deviate by > 1" } else { "d in {1, 2}" };
    Ok(check(name, passed, worst, format!("{n} instances, {detail}")))
}

fn equivalence(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let spec = RandomMdp { states: 4, controls: 3, horizon: Horizon::Infinite, discount: 0.9, ..RandomMdp::default() };
    let mdp = random_mdp(rng, &spec);
    let (nx, nu) = (mdp.num_states(), mdp.num_controls());
    let init: Vec<f64> = (0..nx * nu).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let mut psi = PsiTable::from_stages(nx, nu, vec![init.clone()])?;
    let mut model = LinearBasisModel::new(OneHotBasis::new(nx, nu, mdp.allowed_mask().to_vec())?, init.clone())?;
    let mut learner = LearnerState::with_table(&mdp, Algorithm::PsiLearning, LearningRate::constant(), init)?;
    let mut samples = Vec::new();
    let mut weights = Vec::new();
    for x in 0..nx {
        for u in 0..nu {
            for &(y, p) in mdp.successors(x, u) {
                samples.push(ContinuousSample {
                    x: vec![x as f64],
                    u: vec![u as f64],
                    cost: mdp.cost(0, x, u),
                    y: vec![y as f64],
                });
                weights.push(p);
            }
        }
    }
    let (mut lspsi_dev, mut replay_dev) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        psi = psi_value_iteration(&mdp, &psi, 1)?;
        model.lspsi_update_weighted(&samples, Some(&weights), mdp.discount(), 1e-12)?;
        learner.expected_psi_replay(&mdp)?;
        for (i, &v) in psi.stage(0).iter().enumerate() {
            lspsi_dev = lspsi_dev.max((model.weights[i] - v).abs());
            replay_dev = replay_dev.max((learner.table()[i] - v).abs());
        }
    }
    let worst = lspsi_dev.max(replay_dev);
    Ok(check(
        "cross_representation",
        lspsi_dev <= 1e-9 && replay_dev <= 1e-12,
        worst,
        format!("one-hot LSPsi {lspsi_dev:.1e}, replay {replay_dev:.1e}"),
    ))
}

/// Runs every cross-module oracle check.
pub fn run_verification_suite(opts: &VerifyOptions) -> Result<VerificationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let checks = vec![
        monotonicity(&mut rng, opts.monotone_mdps)?,
        duality(&mut rng, opts.duality_mdps)?,
        closed_form_minimizer(&mut rng, opts.minimizer_instances, opts.minimizer_grid_step)?,
        psi_limit(&mut rng, opts.psi_limit_mdps, opts.psi_limit_sweeps)?,
        gaussian_check(
            "gaussian_log_partition",
            &mut rng,
            opts.gaussian_instances,
            GaussianForm::log_partition,
            false,
        )?,
        gaussian_check(
            "fault_injection_detected",
            &mut rng,
            opts.gaussian_instances,
            sign_flipped_log_partition,
            true,
        )?,
        equivalence(&mut rng)?,
    ];
    Ok(VerificationReport { checks })
}
