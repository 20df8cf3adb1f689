//! Finite Markov decision processes, tabular policies and the task-likelihood
//! view of stage costs.
//!
//! Time indexing follows the trajectory convention `x_0, u_0, ..., x_T, u_T`:
//! a finite horizon `T` has `T + 1` decision stages and the stage cost at `t`
//! is `gamma^t * C_t(x, u)`. Infinite horizons use a stationary cost table and
//! the discounted recursion `C(x, u) + gamma * E[J(y)]`.

use crate::error::{Error, Result};

/// Row normalization tolerance shared by transition kernels and policies.
pub const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Stages `0..=T`.
    Finite(usize),
    Infinite,
}

impl Horizon {
    pub fn stages(&self) -> Option<usize> {
        match self {
            Horizon::Finite(t) => Some(t + 1),
            Horizon::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostTable {
    /// One `(x, u)` table used at every stage.
    Stationary(Vec<f64>),
    /// One `(x, u)` table per stage.
    PerStage(Vec<Vec<f64>>),
}

/// Tabular MDP with dense integer states and controls.
///
/// Controls may be disallowed per state (e.g. grid moves into a wall). A
/// disallowed pair has no transition row and never receives policy mass.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    num_states: usize,
    num_controls: usize,
    transition: Vec<f64>,
    successors: Vec<Vec<(usize, f64)>>,
    cost: CostTable,
    discount: f64,
    absorbing: Vec<usize>,
    is_absorbing: Vec<bool>,
    allowed: Vec<bool>,
    horizon: Horizon,
}

impl FiniteMdp {
    /// Builds and validates an MDP where every control is allowed everywhere.
    ///
    /// `transition` is laid out `(x * num_controls + u) * num_states + y`.
    pub fn new(
        num_states: usize,
        num_controls: usize,
        transition: Vec<f64>,
        cost: CostTable,
        discount: f64,
        horizon: Horizon,
        absorbing: Vec<usize>,
    ) -> Result<Self> {
        let allowed = vec![true; num_states * num_controls];
        Self::with_allowed(num_states, num_controls, transition, cost, discount, horizon, absorbing, allowed)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_allowed(
        num_states: usize,
        num_controls: usize,
        transition: Vec<f64>,
        cost: CostTable,
        discount: f64,
        horizon: Horizon,
        mut absorbing: Vec<usize>,
        allowed: Vec<bool>,
    ) -> Result<Self> {
        if num_states == 0 || num_controls == 0 {
            return Err(Error::InvalidModel("need at least one state and one control".into()));
        }
        let nxu = num_states * num_controls;
        if transition.len() != nxu * num_states {
            return Err(Error::Shape(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                nxu * num_states
            )));
        }
        if allowed.len() != nxu {
            return Err(Error::Shape(format!("allowed mask has {} entries, expected {nxu}", allowed.len())));
        }
        if !(0.0..=1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!("discount {discount} outside [0, 1]")));
        }
        match (&cost, horizon) {
            (CostTable::Stationary(c), _) if c.len() != nxu => {
                return Err(Error::Shape(format!("cost table has {} entries, expected {nxu}", c.len())))
            }
            (CostTable::PerStage(_), Horizon::Infinite) => {
                return Err(Error::InvalidModel("infinite horizon requires a stationary cost table".into()))
            }
            (CostTable::PerStage(stages), Horizon::Finite(t)) => {
                if stages.len() != t + 1 {
                    return Err(Error::Shape(format!(
                        "per-stage cost has {} stages, horizon needs {}",
                        stages.len(),
                        t + 1
                    )));
                }
                if let Some(bad) = stages.iter().position(|s| s.len() != nxu) {
                    return Err(Error::Shape(format!("cost stage {bad} has wrong size")));
                }
            }
            _ => {}
        }
        let tables: Vec<&Vec<f64>> = match &cost {
            CostTable::Stationary(c) => vec![c],
            CostTable::PerStage(s) => s.iter().collect(),
        };
        for (t, table) in tables.iter().enumerate() {
            for (i, &c) in table.iter().enumerate() {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "cost at stage {t}, x={}, u={} is {c}; costs must be finite and nonnegative",
                        i / num_controls,
                        i % num_controls
                    )));
                }
            }
        }

        let mut successors = Vec::with_capacity(nxu);
        for x in 0..num_states {
            if !(0..num_controls).any(|u| allowed[x * num_controls + u]) {
                return Err(Error::InvalidModel(format!("state {x} has no allowed control")));
            }
            for u in 0..num_controls {
                let row = &transition[(x * num_controls + u) * num_states..][..num_states];
                let mut succ = Vec::new();
                if allowed[x * num_controls + u] {
                    let mut sum = 0.0;
                    for (y, &p) in row.iter().enumerate() {
                        if !(p.is_finite() && p >= 0.0) {
                            return Err(Error::InvalidModel(format!(
                                "transition (x={x}, u={u}, y={y}) has probability {p}"
                            )));
                        }
                        sum += p;
                        if p > 0.0 {
                            succ.push((y, p));
                        }
                    }
                    if (sum - 1.0).abs() > ROW_TOL {
                        return Err(Error::InvalidModel(format!("transition row (x={x}, u={u}) sums to {sum}")));
                    }
                }
                successors.push(succ);
            }
        }

        absorbing.sort_unstable();
        absorbing.dedup();
        let mut is_absorbing = vec![false; num_states];
        for &a in &absorbing {
            if a >= num_states {
                return Err(Error::IndexOutOfRange { what: "absorbing state", index: a, limit: num_states });
            }
            is_absorbing[a] = true;
            for u in 0..num_controls {
                if allowed[a * num_controls + u] {
                    let p = transition[(a * num_controls + u) * num_states + a];
                    if (p - 1.0).abs() > ROW_TOL {
                        return Err(Error::InvalidModel(format!(
                            "absorbing state {a} leaves itself under u={u} (self-transition {p})"
                        )));
                    }
                }
            }
        }
        if horizon == Horizon::Infinite && discount == 1.0 && absorbing.is_empty() {
            return Err(Error::InvalidModel("undiscounted infinite horizon needs a non-empty absorbing set".into()));
        }

        Ok(Self {
            num_states,
            num_controls,
            transition,
            successors,
            cost,
            discount,
            absorbing,
            is_absorbing,
            allowed,
            horizon,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_controls(&self) -> usize {
        self.num_controls
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn absorbing(&self) -> &[usize] {
        &self.absorbing
    }

    pub fn is_absorbing(&self, x: usize) -> bool {
        self.is_absorbing[x]
    }

    pub fn cost_table(&self) -> &CostTable {
        &self.cost
    }

    pub fn is_allowed(&self, x: usize, u: usize) -> bool {
        self.allowed[x * self.num_controls + u]
    }

    pub fn allowed_mask(&self) -> &[bool] {
        &self.allowed
    }

    pub fn allowed_controls(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_controls).filter(move |&u| self.is_allowed(x, u))
    }

    pub fn num_allowed(&self, x: usize) -> usize {
        self.allowed_controls(x).count()
    }

    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    pub fn p(&self, x: usize, u: usize, y: usize) -> f64 {
        self.transition[(x * self.num_controls + u) * self.num_states + y]
    }

    /// Nonzero successors `(y, P(y|x,u))`; empty for disallowed pairs.
    pub fn successors(&self, x: usize, u: usize) -> &[(usize, f64)] {
        &self.successors[x * self.num_controls + u]
    }

    /// `sum_y P(y|x,u) v(y)`.
    pub fn expect(&self, x: usize, u: usize, v: &[f64]) -> f64 {
        self.successors(x, u).iter().map(|&(y, p)| p * v[y]).sum()
    }

    /// Raw cost table entry `C_t(x, u)` (stationary tables ignore `t`).
    pub fn cost(&self, t: usize, x: usize, u: usize) -> f64 {
        let i = x * self.num_controls + u;
        match &self.cost {
            CostTable::Stationary(c) => c[i],
            CostTable::PerStage(s) => s[t.min(s.len() - 1)][i],
        }
    }

    /// Cost charged at stage `t` of a finite-horizon trajectory, `gamma^t C_t(x,u)`.
    pub fn stage_cost(&self, t: usize, x: usize, u: usize) -> f64 {
        let c = self.cost(t, x, u);
        if self.discount == 1.0 || c == 0.0 {
            c
        } else {
            self.discount.powi(t as i32) * c
        }
    }

    pub fn max_cost(&self) -> f64 {
        let tables: Vec<&Vec<f64>> = match &self.cost {
            CostTable::Stationary(c) => vec![c],
            CostTable::PerStage(s) => s.iter().collect(),
        };
        tables
            .iter()
            .flat_map(|t| t.iter().enumerate())
            .filter(|(i, _)| self.allowed[*i])
            .map(|(_, &c)| c)
            .fold(0.0, f64::max)
    }

    pub fn finite_horizon(&self) -> Result<usize> {
        match self.horizon {
            Horizon::Finite(t) => Ok(t),
            Horizon::Infinite => Err(Error::InvalidModel("operation requires a finite horizon".into())),
        }
    }

    /// Same dynamics and costs with a different horizon. Per-stage costs are
    /// only kept when the stage count still matches.
    pub fn with_horizon(&self, horizon: Horizon) -> Result<Self> {
        let cost = match (&self.cost, horizon) {
            (CostTable::PerStage(s), Horizon::Infinite) => CostTable::Stationary(s[0].clone()),
            (c, _) => c.clone(),
        };
        Self::with_allowed(
            self.num_states,
            self.num_controls,
            self.transition.clone(),
            cost,
            self.discount,
            horizon,
            self.absorbing.clone(),
            self.allowed.clone(),
        )
    }

    pub(crate) fn check_state(&self, x: usize) -> Result<()> {
        if x >= self.num_states {
            return Err(Error::IndexOutOfRange { what: "state", index: x, limit: self.num_states });
        }
        Ok(())
    }

    pub(crate) fn check_control(&self, u: usize) -> Result<()> {
        if u >= self.num_controls {
            return Err(Error::IndexOutOfRange { what: "control", index: u, limit: self.num_controls });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Deterministic,
    Stochastic,
}

/// Per-stage (or stationary) conditional distribution over controls.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    kind: PolicyKind,
    num_states: usize,
    num_controls: usize,
    stages: Vec<Vec<f64>>,
}

impl TabularPolicy {
    /// Validates every row; stochastic rows must sum to one within [`ROW_TOL`].
    pub fn stochastic(num_states: usize, num_controls: usize, stages: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self { kind: PolicyKind::Stochastic, num_states, num_controls, stages };
        p.validate()?;
        Ok(p)
    }

    /// One control per state and stage.
    pub fn deterministic(num_states: usize, num_controls: usize, actions: &[Vec<usize>]) -> Result<Self> {
        let mut stages = Vec::with_capacity(actions.len());
        for stage in actions {
            if stage.len() != num_states {
                return Err(Error::Shape(format!(
                    "deterministic stage has {} actions for {num_states} states",
                    stage.len()
                )));
            }
            let mut table = vec![0.0; num_states * num_controls];
            for (x, &u) in stage.iter().enumerate() {
                if u >= num_controls {
                    return Err(Error::IndexOutOfRange { what: "control", index: u, limit: num_controls });
                }
                table[x * num_controls + u] = 1.0;
            }
            stages.push(table);
        }
        let p = Self { kind: PolicyKind::Deterministic, num_states, num_controls, stages };
        p.validate()?;
        Ok(p)
    }

    /// Stationary uniform distribution over each state's allowed controls.
    pub fn uniform(mdp: &FiniteMdp) -> Self {
        Self::uniform_stages(mdp, 1)
    }

    /// Uniform over allowed controls, repeated for `stages` stages.
    pub fn uniform_stages(mdp: &FiniteMdp, stages: usize) -> Self {
        let (nx, nu) = (mdp.num_states(), mdp.num_controls());
        let mut table = vec![0.0; nx * nu];
        for x in 0..nx {
            let n = mdp.num_allowed(x) as f64;
            for u in mdp.allowed_controls(x) {
                table[x * nu + u] = 1.0 / n;
            }
        }
        Self { kind: PolicyKind::Stochastic, num_states: nx, num_controls: nu, stages: vec![table; stages.max(1)] }
    }

    fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidPolicy("policy has no stages".into()));
        }
        let n = self.num_states * self.num_controls;
        for (t, table) in self.stages.iter().enumerate() {
            if table.len() != n {
                return Err(Error::Shape(format!("policy stage {t} has {} entries, expected {n}", table.len())));
            }
            for x in 0..self.num_states {
                let row = &table[x * self.num_controls..][..self.num_controls];
                if row.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
                    return Err(Error::InvalidPolicy(format!("row (t={t}, x={x}) has invalid entries")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_TOL {
                    return Err(Error::InvalidPolicy(format!("row (t={t}, x={x}) sums to {sum}")));
                }
                if self.kind == PolicyKind::Deterministic && row.iter().filter(|&&p| p != 0.0).count() != 1 {
                    return Err(Error::InvalidPolicy(format!("deterministic row (t={t}, x={x}) is not one-hot")));
                }
            }
        }
        Ok(())
    }

    /// Checks dimensions against `mdp`, stage count against its horizon, and
    /// that no mass sits on disallowed controls.
    pub fn check_against(&self, mdp: &FiniteMdp) -> Result<()> {
        if self.num_states != mdp.num_states() || self.num_controls != mdp.num_controls() {
            return Err(Error::Shape(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.num_states,
                self.num_controls,
                mdp.num_states(),
                mdp.num_controls()
            )));
        }
        match mdp.horizon() {
            Horizon::Finite(t) if self.stages.len() != 1 && self.stages.len() != t + 1 => {
                return Err(Error::Shape(format!(
                    "policy has {} stages, horizon needs 1 or {}",
                    self.stages.len(),
                    t + 1
                )))
            }
            Horizon::Infinite if self.stages.len() != 1 => {
                return Err(Error::Shape("infinite horizon needs a stationary policy".into()))
            }
            _ => {}
        }
        for (t, table) in self.stages.iter().enumerate() {
            for (i, &p) in table.iter().enumerate() {
                if p > 0.0 && !mdp.allowed_mask()[i] {
                    return Err(Error::InvalidPolicy(format!(
                        "mass {p} on disallowed control (t={t}, x={}, u={})",
                        i / self.num_controls,
                        i % self.num_controls
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
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

    pub fn is_stationary(&self) -> bool {
        self.stages.len() == 1
    }

    pub fn stage(&self, t: usize) -> &[f64] {
        &self.stages[t.min(self.stages.len() - 1)]
    }

    pub fn row(&self, t: usize, x: usize) -> &[f64] {
        &self.stage(t)[x * self.num_controls..][..self.num_controls]
    }

    pub fn prob(&self, t: usize, x: usize, u: usize) -> f64 {
        self.stage(t)[x * self.num_controls + u]
    }

    pub fn stages(&self) -> &[Vec<f64>] {
        &self.stages
    }

    /// Expands a stationary policy to `n` identical stages.
    pub fn expanded(&self, n: usize) -> Self {
        if self.stages.len() == n {
            return self.clone();
        }
        Self { stages: (0..n).map(|t| self.stage(t).to_vec()).collect(), ..self.clone() }
    }

    /// Largest absolute difference between matching entries.
    pub fn max_abs_diff(&self, other: &TabularPolicy) -> f64 {
        let n = self.stages.len().max(other.stages.len());
        (0..n).flat_map(|t| self.stage(t).iter().zip(other.stage(t))).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Initial condition for expectations: a fixed state or a distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    State(usize),
    Distribution(Vec<f64>),
}

impl From<usize> for Start {
    fn from(x: usize) -> Self {
        Start::State(x)
    }
}

impl Start {
    pub(crate) fn to_vec(&self, mdp: &FiniteMdp) -> Result<Vec<f64>> {
        match self {
            Start::State(x) => {
                mdp.check_state(*x)?;
                let mut d = vec![0.0; mdp.num_states()];
                d[*x] = 1.0;
                Ok(d)
            }
            Start::Distribution(d) => {
                if d.len() != mdp.num_states() {
                    return Err(Error::Shape("start distribution has wrong length".into()));
                }
                let s: f64 = d.iter().sum();
                if (s - 1.0).abs() > ROW_TOL || d.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidModel(format!("start distribution sums to {s}")));
                }
                Ok(d.clone())
            }
        }
    }
}

/// One observed transition `(x, u, l, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSample {
    pub x: usize,
    pub u: usize,
    pub cost: f64,
    pub y: usize,
}

impl TransitionSample {
    pub fn new(x: usize, u: usize, cost: f64, y: usize) -> Result<Self> {
        if !(cost.is_finite() && cost >= 0.0) {
            return Err(Error::InvalidModel(format!("observed cost {cost} must be finite and nonnegative")));
        }
        Ok(Self { x, u, cost, y })
    }
}

/// State and control sequences `x_0..x_T`, `u_0..u_T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub controls: Vec<usize>,
}

impl Trajectory {
    pub fn new(states: Vec<usize>, controls: Vec<usize>) -> Result<Self> {
        if states.len() != controls.len() || states.is_empty() {
            return Err(Error::Shape(format!(
                "trajectory has {} states and {} controls",
                states.len(),
                controls.len()
            )));
        }
        Ok(Self { states, controls })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn check(&self, mdp: &FiniteMdp) -> Result<()> {
        if let Horizon::Finite(t) = mdp.horizon() {
            if self.len() != t + 1 {
                return Err(Error::Shape(format!("trajectory has {} stages, horizon has {}", self.len(), t + 1)));
            }
        }
        for (&x, &u) in self.states.iter().zip(&self.controls) {
            mdp.check_state(x)?;
            mdp.check_control(u)?;
        }
        Ok(())
    }
}

/// `log P(r_t = 1 | x, u) = -C_t(x, u)`; always `<= 0`.
pub fn task_log_likelihood(mdp: &FiniteMdp, t: usize, x: usize, u: usize) -> Result<f64> {
    mdp.check_state(x)?;
    mdp.check_control(u)?;
    if let Horizon::Finite(h) = mdp.horizon() {
        if t > h {
            return Err(Error::IndexOutOfRange { what: "time", index: t, limit: h + 1 });
        }
    }
    Ok(-mdp.stage_cost(t, x, u))
}

/// Log density of a trajectory under the controlled process started at `x_0`.
/// Returns `-inf` when any factor vanishes.
pub fn trajectory_log_density(mdp: &FiniteMdp, policy: &TabularPolicy, traj: &Trajectory) -> Result<f64> {
    traj.check(mdp)?;
    policy.check_against(mdp)?;
    let mut log_q = 0.0;
    for t in 0..traj.len() {
        let (x, u) = (traj.states[t], traj.controls[t]);
        log_q += policy.prob(t, x, u).ln();
        if t + 1 < traj.len() {
            log_q += mdp.p(x, u, traj.states[t + 1]).ln();
        }
        if log_q == f64::NEG_INFINITY {
            break;
        }
    }
    Ok(log_q)
}

/// Unnormalized posterior log weight relative to the controlled process:
/// `sum_t log P(r_t = 1 | x_t, u_t) = -sum_t C_t`.
pub fn posterior_log_weight(mdp: &FiniteMdp, traj: &Trajectory) -> Result<f64> {
    traj.check(mdp)?;
    Ok(-(0..traj.len()).map(|t| mdp.stage_cost(t, traj.states[t], traj.controls[t])).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(horizon: Horizon) -> FiniteMdp {
        // state 1 is the absorbing goal; control 0 moves there, control 1 stays
        let transition = vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let cost = CostTable::Stationary(vec![1.0, 1.0, 0.0, 0.0]);
        FiniteMdp::new(2, 2, transition, cost, 1.0, horizon, vec![1]).unwrap()
    }

    #[test]
    fn likelihood_of_unit_and_zero_cost() {
        let mdp = two_state(Horizon::Finite(3));
        assert_eq!(task_log_likelihood(&mdp, 0, 1, 0).unwrap(), 0.0);
        let l = task_log_likelihood(&mdp, 0, 0, 0).unwrap();
        assert_eq!(l, -1.0);
        assert!((l.exp() - 0.36788).abs() < 1e-5);
        assert!(task_log_likelihood(&mdp, 0, 2, 0).is_err());
        assert!(task_log_likelihood(&mdp, 4, 0, 0).is_err());
    }

    #[test]
    fn rejects_bad_rows_with_location() {
        let transition = vec![0.5, 0.4, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let err =
            FiniteMdp::new(2, 2, transition, CostTable::Stationary(vec![0.0; 4]), 1.0, Horizon::Finite(1), vec![])
                .unwrap_err();
        assert!(err.to_string().contains("x=0, u=0"), "{err}");
    }

    #[test]
    fn rejects_negative_cost_and_leaky_absorbing_state() {
        let t = vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        assert!(FiniteMdp::new(
            2,
            2,
            t.clone(),
            CostTable::Stationary(vec![-1.0, 0.0, 0.0, 0.0]),
            1.0,
            Horizon::Finite(1),
            vec![]
        )
        .is_err());
        assert!(FiniteMdp::new(2, 2, t.clone(), CostTable::Stationary(vec![0.0; 4]), 1.0, Horizon::Finite(1), vec![0])
            .is_err());
        assert!(FiniteMdp::new(2, 2, t, CostTable::Stationary(vec![0.0; 4]), 1.0, Horizon::Infinite, vec![]).is_err());
    }

    #[test]
    fn trajectory_density_cases() {
        let mdp = two_state(Horizon::Finite(2));
        let go = TabularPolicy::deterministic(2, 2, &[vec![0, 0]]).unwrap();
        let traj = Trajectory::new(vec![0, 1, 1], vec![0, 0, 0]).unwrap();
        assert_eq!(trajectory_log_density(&mdp, &go, &traj).unwrap(), 0.0);
        let stay = Trajectory::new(vec![0, 0, 1], vec![1, 0, 0]).unwrap();
        assert_eq!(trajectory_log_density(&mdp, &go, &stay).unwrap(), f64::NEG_INFINITY);

        // one stochastic step succeeding with probability 0.8
        let t = vec![0.2, 0.8, 0.0, 1.0];
        let m =
            FiniteMdp::new(2, 1, t, CostTable::Stationary(vec![1.0, 0.0]), 1.0, Horizon::Finite(1), vec![1]).unwrap();
        let p = TabularPolicy::deterministic(2, 1, &[vec![0, 0]]).unwrap();
        let tr = Trajectory::new(vec![0, 1], vec![0, 0]).unwrap();
        assert!((trajectory_log_density(&m, &p, &tr).unwrap() - 0.8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn posterior_weight_is_negative_total_cost() {
        let mdp = two_state(Horizon::Finite(2));
        let traj = Trajectory::new(vec![1, 1, 1], vec![0, 1, 0]).unwrap();
        assert_eq!(posterior_log_weight(&mdp, &traj).unwrap(), 0.0);
        let traj = Trajectory::new(vec![0, 0, 0], vec![1, 1, 0]).unwrap();
        assert_eq!(posterior_log_weight(&mdp, &traj).unwrap(), -3.0);
    }

    #[test]
    fn policy_validation() {
        assert!(TabularPolicy::stochastic(1, 2, vec![vec![0.5, 0.4]]).is_err());
        assert!(TabularPolicy::stochastic(1, 2, vec![vec![0.5, 0.5]]).is_ok());
        assert!(TabularPolicy::deterministic(1, 2, &[vec![2]]).is_err());
    }
}
