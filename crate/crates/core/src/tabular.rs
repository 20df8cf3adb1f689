//! Model-free tabular learners: Ψ-learning, Q-learning and TD(0).

use rand::Rng;

use crate::error::{Error, Result};
use crate::kl::log_sum_exp;
use crate::mdp::{FiniteMdp, TransitionSample};
use crate::solvers::ValueTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    PsiLearning,
    QLearning,
    Td0,
}

/// `alpha = c / (c + t)` when enabled, otherwise 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRate {
    pub c: f64,
    pub enabled: bool,
}

impl LearningRate {
    pub fn constant() -> Self {
        Self { c: 1.0, enabled: false }
    }

    pub fn decayed(c: f64) -> Self {
        Self { c, enabled: true }
    }

    pub fn alpha(&self, t: u64) -> f64 {
        if self.enabled {
            self.c / (self.c + t as f64)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Uninformed,
    Greedy,
}

/// Table and step counter of one learner. Ψ and Q tables are laid out
/// `x * num_controls + u`; disallowed Ψ entries are `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    algo: Algorithm,
    num_states: usize,
    num_controls: usize,
    allowed: Vec<bool>,
    table: Vec<f64>,
    step_count: u64,
    lr: LearningRate,
}

impl LearnerState {
    pub fn new(mdp: &FiniteMdp, algo: Algorithm, lr: LearningRate) -> Self {
        let (nx, nu) = (mdp.num_states(), mdp.num_controls());
        let table = match algo {
            Algorithm::PsiLearning => {
                mdp.allowed_mask().iter().map(|&a| if a { 0.0 } else { f64::NEG_INFINITY }).collect()
            }
            Algorithm::QLearning => vec![0.0; nx * nu],
            Algorithm::Td0 => vec![0.0; nx],
        };
        Self { algo, num_states: nx, num_controls: nu, allowed: mdp.allowed_mask().to_vec(), table, step_count: 0, lr }
    }

    /// Starts from a given table instead of the zero initialisation.
    pub fn with_table(mdp: &FiniteMdp, algo: Algorithm, lr: LearningRate, table: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(mdp, algo, lr);
        if table.len() != s.table.len() {
            return Err(Error::Shape(format!("table has {} entries, expected {}", table.len(), s.table.len())));
        }
        s.table = table;
        Ok(s)
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algo
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn learning_rate(&self) -> LearningRate {
        self.lr
    }

    fn check(&self, s: &TransitionSample) -> Result<()> {
        if s.x >= self.num_states || s.y >= self.num_states {
            return Err(Error::IndexOutOfRange { what: "state", index: s.x.max(s.y), limit: self.num_states });
        }
        if s.u >= self.num_controls {
            return Err(Error::IndexOutOfRange { what: "control", index: s.u, limit: self.num_controls });
        }
        if !(s.cost.is_finite() && s.cost >= 0.0) {
            return Err(Error::InvalidModel(format!("sample cost {} must be finite and nonnegative", s.cost)));
        }
        Ok(())
    }

    fn row(&self, x: usize) -> &[f64] {
        &self.table[x * self.num_controls..][..self.num_controls]
    }

    /// `Psi_bar(x)`, recomputed from the current row.
    pub fn log_partition(&self, x: usize) -> f64 {
        log_sum_exp(self.row(x).iter().copied())
    }

    fn min_q(&self, x: usize) -> f64 {
        self.row(x)
            .iter()
            .zip(&self.allowed[x * self.num_controls..])
            .filter(|(_, &a)| a)
            .map(|(&q, _)| q)
            .fold(f64::INFINITY, f64::min)
    }

    fn advance(&mut self) -> f64 {
        let a = self.lr.alpha(self.step_count);
        self.step_count += 1;
        a
    }

    /// Dispatches to the update rule of this learner's algorithm.
    pub fn step(&mut self, sample: &TransitionSample, gamma: f64) -> Result<()> {
        match self.algo {
            Algorithm::PsiLearning => self.psi_learning_step(sample, gamma),
            Algorithm::QLearning => self.q_learning_step(sample, gamma),
            Algorithm::Td0 => self.td0_step(sample, gamma),
        }
    }

    /// `Psi(x,u) += alpha [gamma Psi_bar(y) - Psi_bar(x) - l]`.
    pub fn psi_learning_step(&mut self, s: &TransitionSample, gamma: f64) -> Result<()> {
        self.expect_algo(Algorithm::PsiLearning)?;
        self.check(s)?;
        let delta = self.psi_difference(s, gamma);
        let a = self.advance();
        self.table[s.x * self.num_controls + s.u] += a * delta;
        Ok(())
    }

    /// `gamma Psi_bar(y) - Psi_bar(x) - l` at the current table.
    pub fn psi_difference(&self, s: &TransitionSample, gamma: f64) -> f64 {
        gamma * self.log_partition(s.y) - self.log_partition(s.x) - s.cost
    }

    /// Every allowed `(x, u, y)` applied once with weight `P(y|x,u)`, all
    /// differences taken against the table as it was before the replay.
    pub fn expected_psi_replay(&mut self, mdp: &FiniteMdp) -> Result<()> {
        self.expect_algo(Algorithm::PsiLearning)?;
        if mdp.num_states() != self.num_states || mdp.num_controls() != self.num_controls {
            return Err(Error::Shape("MDP does not match the learner".into()));
        }
        let mut next = self.table.clone();
        for x in 0..self.num_states {
            for u in mdp.allowed_controls(x) {
                for &(y, p) in mdp.successors(x, u) {
                    let s = TransitionSample::new(x, u, mdp.cost(0, x, u), y)?;
                    next[x * self.num_controls + u] += p * self.psi_difference(&s, mdp.discount());
                }
            }
        }
        self.table = next;
        Ok(())
    }

    /// `Q(x,u) += alpha [l + gamma min_u' Q(y,u') - Q(x,u)]`.
    pub fn q_learning_step(&mut self, s: &TransitionSample, gamma: f64) -> Result<()> {
        self.expect_algo(Algorithm::QLearning)?;
        self.check(s)?;
        let i = s.x * self.num_controls + s.u;
        let target = s.cost + gamma * self.min_q(s.y);
        let a = self.advance();
        self.table[i] += a * (target - self.table[i]);
        Ok(())
    }

    /// `J(x) += alpha [l + gamma J(y) - J(x)]`.
    pub fn td0_step(&mut self, s: &TransitionSample, gamma: f64) -> Result<()> {
        self.expect_algo(Algorithm::Td0)?;
        self.check(s)?;
        let target = s.cost + gamma * self.table[s.y];
        let a = self.advance();
        self.table[s.x] += a * (target - self.table[s.x]);
        Ok(())
    }

    fn expect_algo(&self, algo: Algorithm) -> Result<()> {
        if self.algo != algo {
            return Err(Error::InvalidModel(format!("{:?} update applied to a {:?} learner", algo, self.algo)));
        }
        Ok(())
    }

    /// Uniform over allowed controls, or an inverse-CDF draw from the
    /// Boltzmann row `exp(Psi(x,.) - Psi_bar(x))`.
    pub fn sample_control<R: Rng + ?Sized>(&self, x: usize, mode: SamplingMode, rng: &mut R) -> Result<usize> {
        if x >= self.num_states {
            return Err(Error::IndexOutOfRange { what: "state", index: x, limit: self.num_states });
        }
        let allowed = &self.allowed[x * self.num_controls..][..self.num_controls];
        match mode {
            SamplingMode::Uninformed => {
                let n = allowed.iter().filter(|&&a| a).count();
                let k = rng.random_range(0..n);
                Ok(allowed.iter().enumerate().filter(|(_, &a)| a).nth(k).map(|(u, _)| u).expect("k < n"))
            }
            SamplingMode::Greedy => {
                if self.algo != Algorithm::PsiLearning {
                    return Err(Error::InvalidModel("greedy sampling needs a Psi table".into()));
                }
                let row = crate::psi::boltzmann(self.row(x));
                let r: f64 = rng.random();
                let mut acc = 0.0;
                let mut last = 0;
                for (u, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        acc += p;
                        last = u;
                        if r < acc {
                            return Ok(u);
                        }
                    }
                }
                Ok(last)
            }
        }
    }

    /// Value estimate per state. Q-learning: `min_u Q`. TD(0): `J`.
    /// Ψ-learning: `-(Psi_bar(x) - Psi_bar(anchor))`.
    pub fn value_estimate(&self, anchor: Option<usize>) -> Result<Vec<f64>> {
        Ok(match self.algo {
            Algorithm::QLearning => (0..self.num_states).map(|x| self.min_q(x)).collect(),
            Algorithm::Td0 => self.table.clone(),
            Algorithm::PsiLearning => {
                let a = anchor.ok_or_else(|| Error::InvalidModel("Psi value estimate needs an anchor state".into()))?;
                if a >= self.num_states {
                    return Err(Error::IndexOutOfRange { what: "anchor", index: a, limit: self.num_states });
                }
                let base = self.log_partition(a);
                (0..self.num_states).map(|x| base - self.log_partition(x)).collect()
            }
        })
    }
}

/// `max_x |J(x) - J_hat(x)| / max_x J(x)`.
pub fn value_error(estimate: &[f64], oracle: &ValueTable) -> Result<f64> {
    let j = oracle.values(0);
    if j.len() != estimate.len() {
        return Err(Error::Shape(format!("estimate has {} states, oracle {}", estimate.len(), j.len())));
    }
    let scale = j.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if scale <= 0.0 {
        return Err(Error::Undefined("value error needs max_x J(x) > 0".into()));
    }
    Ok(j.iter().zip(estimate).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale)
}
