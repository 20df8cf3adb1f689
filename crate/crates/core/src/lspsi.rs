//! Least-squares Ψ-learning with linear basis models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kl::log_sum_exp;

pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const DEFAULT_SIGMA2_BASE: f64 = 0.1;
/// Upper bound kept on the `u^2` weight so the control curvature stays PD.
pub const PD_GUARD: f64 = -1e-4;

/// One observed transition with real-vector state and control.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSample {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub cost: f64,
    pub y: Vec<f64>,
}

/// Samples with episode boundaries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeBatch {
    pub samples: Vec<ContinuousSample>,
    /// Start index of each episode in `samples`.
    pub starts: Vec<usize>,
}

impl EpisodeBatch {
    pub fn push_episode(&mut self, samples: Vec<ContinuousSample>, cap: usize) -> Result<()> {
        if samples.len() > cap {
            return Err(Error::Invariant(format!("episode of {} steps exceeds cap {cap}", samples.len())));
        }
        if let Some(s) = samples.iter().find(|s| !(s.cost.is_finite() && s.cost >= 0.0)) {
            return Err(Error::InvalidModel(format!("sample cost {} must be finite and nonnegative", s.cost)));
        }
        self.starts.push(self.samples.len());
        self.samples.extend(samples);
        Ok(())
    }

    pub fn num_episodes(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
        self.starts.clear();
    }
}

/// Features `phi_i(x, u)` with a known log-partition over controls.
pub trait Basis {
    fn num_features(&self) -> usize;
    fn features(&self, x: &[f64], u: &[f64], out: &mut [f64]);
    /// `log integral (or sum) over u of exp(w' phi(x, u))`.
    fn log_partition(&self, w: &[f64], x: &[f64]) -> Result<f64>;
    /// Projects `w` back onto the admissible set; returns whether it moved.
    fn project(&self, _w: &mut [f64]) -> bool {
        false
    }
}

/// `Psi(u) = -1/2 u'Ku + u'k + k0` with `K` symmetric PD.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianForm {
    pub k_mat: DMatrix<f64>,
    pub k_vec: DVector<f64>,
    pub k0: f64,
}

impl GaussianForm {
    pub fn eval(&self, u: &DVector<f64>) -> f64 {
        -0.5 * (u.transpose() * &self.k_mat * u)[0] + self.k_vec.dot(u) + self.k0
    }

    fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let sym = (&self.k_mat + self.k_mat.transpose()) * 0.5;
        sym.cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite { context: format!("control curvature K = {}", self.k_mat) })
    }

    /// `k0 + 1/2 k'K^-1 k + d/2 log 2pi - 1/2 log det K`.
    pub fn log_partition(&self) -> Result<f64> {
        let chol = self.cholesky()?;
        let d = self.k_vec.len() as f64;
        let kk = self.k_vec.dot(&chol.solve(&self.k_vec));
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(self.k0 + 0.5 * kk + 0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det)
    }

    /// Mean `K^-1 k` and covariance `K^-1` of `exp(Psi - Psi_bar)`.
    pub fn policy(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let chol = self.cholesky()?;
        Ok((chol.solve(&self.k_vec), chol.inverse()))
    }
}

/// Quadratic-in-control basis for the 4-state, 1-control cart-pole:
/// `u^2`, `u s_i` for each state component, then `s_i s_j` for `i <= j`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CartPoleBasis;

pub const CARTPOLE_FEATURES: usize = 15;

impl CartPoleBasis {
    /// Reads off `K`, `k` and `k0` at state `s`.
    pub fn decompose(&self, w: &[f64], s: &[f64]) -> GaussianForm {
        let k = w[1] * s[0] + w[2] * s[1] + w[3] * s[2] + w[4] * s[3];
        let mut k0 = 0.0;
        let mut i = 5;
        for a in 0..4 {
            for b in a..4 {
                k0 += w[i] * s[a] * s[b];
                i += 1;
            }
        }
        GaussianForm { k_mat: DMatrix::from_element(1, 1, -2.0 * w[0]), k_vec: DVector::from_element(1, k), k0 }
    }

    /// Feedback gain `G` with policy mean `-G s`.
    pub fn gain(&self, w: &[f64]) -> [f64; 4] {
        let curvature = -2.0 * w[0];
        [0, 1, 2, 3].map(|i| -w[1 + i] / curvature)
    }

    /// Draws `u ~ N(k/K, 1/K + sigma2_base)`.
    pub fn sample_control<R: Rng + ?Sized>(&self, w: &[f64], s: &[f64], sigma2_base: f64, rng: &mut R) -> Result<f64> {
        let (mean, cov) = self.decompose(w, s).policy()?;
        let z: f64 = rng.sample(StandardNormal);
        Ok(mean[0] + (cov[(0, 0)] + sigma2_base).sqrt() * z)
    }

    /// `(-0.1, 0, ..., 0)`: zero-mean control with variance 5.
    pub fn initial_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; CARTPOLE_FEATURES];
        w[0] = -0.1;
        w
    }
}

impl Basis for CartPoleBasis {
    fn num_features(&self) -> usize {
        CARTPOLE_FEATURES
    }

    fn features(&self, s: &[f64], u: &[f64], out: &mut [f64]) {
        let u = u[0];
        out[0] = u * u;
        for i in 0..4 {
            out[1 + i] = u * s[i];
        }
        let mut i = 5;
        for a in 0..4 {
            for b in a..4 {
                out[i] = s[a] * s[b];
                i += 1;
            }
        }
    }

    fn log_partition(&self, w: &[f64], s: &[f64]) -> Result<f64> {
        self.decompose(w, s)
            .log_partition()
            .map_err(|_| Error::NotPositiveDefinite { context: format!("state {:?} (u^2 weight {})", s, w[0]) })
    }

    fn project(&self, w: &mut [f64]) -> bool {
        if w[0] > PD_GUARD {
            w[0] = PD_GUARD;
            true
        } else {
            false
        }
    }
}

/// Indicator features over a finite state-control space; states and controls
/// are passed as one-element slices holding the index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotBasis {
    pub num_states: usize,
    pub num_controls: usize,
    pub allowed: Vec<bool>,
}

impl OneHotBasis {
    pub fn new(num_states: usize, num_controls: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != num_states * num_controls {
            return Err(Error::Shape("allowed mask does not match the state-control space".into()));
        }
        Ok(Self { num_states, num_controls, allowed })
    }
}

impl Basis for OneHotBasis {
    fn num_features(&self) -> usize {
        self.num_states * self.num_controls
    }

    fn features(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[x[0] as usize * self.num_controls + u[0] as usize] = 1.0;
    }

    fn log_partition(&self, w: &[f64], x: &[f64]) -> Result<f64> {
        let x = x[0] as usize;
        let base = x * self.num_controls;
        Ok(log_sum_exp((0..self.num_controls).filter(|&u| self.allowed[base + u]).map(|u| w[base + u])))
    }
}

/// `Psi~(x, u, w) = sum_i w_i phi_i(x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBasisModel<B> {
    pub basis: B,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    pub samples: usize,
    pub guard_tripped: bool,
    pub step_norm: f64,
}

impl<B: Basis> LinearBasisModel<B> {
    pub fn new(basis: B, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != basis.num_features() {
            return Err(Error::Shape(format!("{} weights for {} features", weights.len(), basis.num_features())));
        }
        Ok(Self { basis, weights })
    }

    pub fn psi(&self, x: &[f64], u: &[f64]) -> f64 {
        let mut phi = vec![0.0; self.weights.len()];
        self.basis.features(x, u, &mut phi);
        phi.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }

    pub fn log_partition(&self, x: &[f64]) -> Result<f64> {
        self.basis.log_partition(&self.weights, x)
    }

    /// Least-squares step `w += (Phi'Phi + lambda I)^-1 Phi' z` with
    /// `z_k = gamma Psi_bar(y_k) - l_k - Psi_bar(x_k)` at the current weights,
    /// followed by the basis projection.
    pub fn lspsi_update(&mut self, samples: &[ContinuousSample], gamma: f64, ridge: f64) -> Result<UpdateReport> {
        self.lspsi_update_weighted(samples, None, gamma, ridge)
    }

    /// As [`Self::lspsi_update`] with per-sample weights in the normal equations.
    pub fn lspsi_update_weighted(
        &mut self,
        samples: &[ContinuousSample],
        weights: Option<&[f64]>,
        gamma: f64,
        ridge: f64,
    ) -> Result<UpdateReport> {
        if samples.is_empty() {
            return Err(Error::InvalidModel("LSPsi update needs a non-empty batch".into()));
        }
        if let Some(w) = weights {
            if w.len() != samples.len() {
                return Err(Error::Shape("sample weights do not match the batch".into()));
            }
        }
        let (delta, _) = self.solve_step(samples, weights, gamma, ridge)?;
        for (w, d) in self.weights.iter_mut().zip(delta.iter()) {
            *w += d;
        }
        let guard_tripped = self.basis.project(&mut self.weights);
        Ok(UpdateReport { samples: samples.len(), guard_tripped, step_norm: delta.norm() })
    }

    /// The unprojected step and the target vector `z`.
    pub fn solve_step(
        &self,
        samples: &[ContinuousSample],
        weights: Option<&[f64]>,
        gamma: f64,
        ridge: f64,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let m = self.weights.len();
        let mut gram = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        let mut z = DVector::<f64>::zeros(samples.len());
        let mut phi = vec![0.0; m];
        for (k, s) in samples.iter().enumerate() {
            self.basis.features(&s.x, &s.u, &mut phi);
            let zk = gamma * self.log_partition(&s.y)? - s.cost - self.log_partition(&s.x)?;
            z[k] = zk;
            let wk = weights.map_or(1.0, |w| w[k]);
            for i in 0..m {
                if phi[i] == 0.0 {
                    continue;
                }
                rhs[i] += wk * phi[i] * zk;
                for j in 0..m {
                    gram[(i, j)] += wk * phi[i] * phi[j];
                }
            }
        }
        for i in 0..m {
            gram[(i, i)] += ridge;
        }
        let delta = match gram.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => gram.clone().lu().solve(&rhs).ok_or_else(|| {
                let eig = gram.symmetric_eigenvalues();
                let (lo, hi) =
                    eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
                Error::Singular(format!("normal equations are singular (condition estimate {:e})", hi / lo))
            })?,
        };
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("normal-equation solution is not finite".into()));
        }
        Ok((delta, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn form(k: f64, kv: f64, k0: f64) -> GaussianForm {
        GaussianForm { k_mat: DMatrix::from_element(1, 1, k), k_vec: DVector::from_element(1, kv), k0 }
    }

    #[test]
    fn standard_gaussian_integral() {
        assert!((form(1.0, 0.0, 0.0).log_partition().unwrap() - 0.9189385332046727).abs() < 1e-15);
        let v = form(2.0, 1.0, 0.0).log_partition().unwrap();
        assert!((v - (0.25 + 0.5 * std::f64::consts::PI.ln())).abs() < 1e-15);
        assert!((v - 0.82236).abs() < 1e-5);
        assert!(form(-1.0, 0.0, 0.0).log_partition().is_err());
    }

    #[test]
    fn policy_moments() {
        let g = GaussianForm { k_mat: DMatrix::identity(2, 2), k_vec: DVector::zeros(2), k0: 0.0 };
        let (m, c) = g.policy().unwrap();
        assert_eq!(m, DVector::zeros(2));
        assert!((c - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn cartpole_decomposition_reproduces_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let basis = CartPoleBasis;
        for _ in 0..100 {
            let w: Vec<f64> = (0..15).map(|_| rng.random::<f64>() - 0.5).collect();
            let s: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let u: f64 = rng.random::<f64>() * 4.0 - 2.0;
            let model = LinearBasisModel::new(basis, w.clone()).unwrap();
            let g = basis.decompose(&w, &s);
            assert!((model.psi(&s, &[u]) - g.eval(&DVector::from_element(1, u))).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_policy_is_broad_and_centred() {
        let basis = CartPoleBasis;
        let w = basis.initial_weights();
        let (m, c) = basis.decompose(&w, &[0.3, -0.2, 0.1, 0.05]).policy().unwrap();
        assert_eq!(m[0], 0.0);
        assert!((c[(0, 0)] - 5.0).abs() < 1e-12);
        assert_eq!(basis.gain(&w), [0.0; 4]);
    }

    #[test]
    fn gain_is_linear_read_off_of_mean() {
        let basis = CartPoleBasis;
        let mut w = basis.initial_weights();
        w[1] = 0.4;
        w[3] = -1.0;
        let s = [0.5, 0.0, 0.2, 0.0];
        let (m, _) = basis.decompose(&w, &s).policy().unwrap();
        let g = basis.gain(&w);
        let lin: f64 = -(0..4).map(|i| g[i] * s[i]).sum::<f64>();
        assert!((m[0] - lin).abs() < 1e-15);
    }

    #[test]
    fn self_consistent_model_does_not_move() {
        // single state, single control, zero cost, gamma = 1: z = 0 always
        let basis = OneHotBasis::new(1, 1, vec![true]).unwrap();
        let mut model = LinearBasisModel::new(basis, vec![0.7]).unwrap();
        let s = ContinuousSample { x: vec![0.0], u: vec![0.0], cost: 0.0, y: vec![0.0] };
        model.lspsi_update(&[s.clone(), s], 1.0, 0.0).unwrap();
        assert_eq!(model.weights, vec![0.7]);
    }

    #[test]
    fn residual_is_orthogonal_to_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let basis = CartPoleBasis;
        let mut w = basis.initial_weights();
        w[5] = -0.3;
        w[3] = 0.2;
        let model = LinearBasisModel::new(basis, w).unwrap();
        let samples: Vec<ContinuousSample> = (0..200)
            .map(|_| {
                let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
                let y: Vec<f64> = x.iter().map(|v| v * 0.9 + 0.01 * (rng.random::<f64>() - 0.5)).collect();
                ContinuousSample { x, u: vec![rng.random::<f64>() - 0.5], cost: rng.random(), y }
            })
            .collect();
        let (delta, z) = model.solve_step(&samples, None, 1.0, 0.0).unwrap();
        let mut phi = vec![0.0; 15];
        let mut res = DVector::<f64>::zeros(15);
        for (k, s) in samples.iter().enumerate() {
            basis.features(&s.x, &s.u, &mut phi);
            let fitted: f64 = phi.iter().zip(delta.iter()).map(|(a, b)| a * b).sum();
            for i in 0..15 {
                res[i] += phi[i] * (fitted - z[k]);
            }
        }
        assert!(res.amax() < 1e-8 * z.norm(), "{}", res.amax());
    }

    #[test]
    fn guard_keeps_curvature_positive() {
        let basis = CartPoleBasis;
        let mut w = basis.initial_weights();
        w[0] = 0.3;
        assert!(basis.project(&mut w));
        assert_eq!(w[0], PD_GUARD);
        assert!(!basis.project(&mut w));
    }

    #[test]
    fn batch_rejects_long_episode() {
        let mut b = EpisodeBatch::default();
        let s = ContinuousSample { x: vec![], u: vec![], cost: 0.0, y: vec![] };
        assert!(b.push_episode(vec![s.clone(); 3], 2).is_err());
        b.push_episode(vec![s; 2], 2).unwrap();
        assert_eq!(b.num_episodes(), 1);
    }
}
