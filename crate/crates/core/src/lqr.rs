//! Discrete-time linear-quadratic-Gaussian problems and the Riccati oracle.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PSD_TOL: f64 = 1e-12;

/// `x' ~ N(A x + B u, Sigma)` with stage cost `x'Qx + u'Ru`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqgProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub discount: f64,
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

impl LqgProblem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        sigma: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        discount: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if a.ncols() != n || b.nrows() != n || sigma.shape() != (n, n) || q.shape() != (n, n) || r.shape() != (m, m) {
            return Err(Error::Shape(format!(
                "A {:?}, B {:?}, Sigma {:?}, Q {:?}, R {:?}",
                a.shape(),
                b.shape(),
                sigma.shape(),
                q.shape(),
                r.shape()
            )));
        }
        if min_eigenvalue(&sigma) < -PSD_TOL {
            return Err(Error::InvalidModel("noise covariance is not PSD".into()));
        }
        if min_eigenvalue(&q) < -PSD_TOL {
            return Err(Error::InvalidModel("state cost Q is not PSD".into()));
        }
        if min_eigenvalue(&r) <= 0.0 {
            return Err(Error::NotPositiveDefinite { context: "control cost R".into() });
        }
        if !(0.0..=1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!("discount {discount} outside [0, 1]")));
        }
        Ok(Self { a, b, sigma, q, r, discount })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    fn riccati_map(&self, p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let g = self.discount;
        let btp = self.b.transpose() * p;
        let s = &self.r + &btp * &self.b * g;
        let gain = s
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite { context: "R + gamma B'PB".into() })?
            .solve(&(&btp * &self.a * g));
        let next = &self.q + self.a.transpose() * p * &self.a * g - (self.a.transpose() * p * &self.b * g) * &gain;
        Ok(((&next + next.transpose()) * 0.5, gain))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    /// Optimal feedback `u = -K x`, shape `(m, n)`.
    pub gain: DMatrix<f64>,
    /// Cost-to-go matrix `P`.
    pub cost_to_go: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub const RICCATI_TOL: f64 = 1e-10;
const RICCATI_CAP: usize = 1_000_000;

/// Riccati fixed point by iteration from `P = Q`.
pub fn lqr_solve(prob: &LqgProblem) -> Result<LqrSolution> {
    let mut p = prob.q.clone();
    for it in 1..=RICCATI_CAP {
        let (next, _) = prob.riccati_map(&p)?;
        let residual = (&next - &p).amax();
        if !residual.is_finite() || next.amax() > 1e300 {
            return Err(Error::NonConvergent { iterations: it, detail: "Riccati iteration diverged".into() });
        }
        p = next;
        if residual < RICCATI_TOL {
            let (check, gain_check) = prob.riccati_map(&p)?;
            return Ok(LqrSolution { gain: gain_check, residual: (&check - &p).amax(), cost_to_go: p, iterations: it });
        }
    }
    Err(Error::NonConvergent { iterations: RICCATI_CAP, detail: "Riccati residual stayed above tolerance".into() })
}

/// Largest eigenvalue modulus of `A - B K`.
pub fn closed_loop_spectral_radius(prob: &LqgProblem, gain: &DMatrix<f64>) -> f64 {
    let cl = &prob.a - &prob.b * gain;
    cl.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Exact expected cost of `u = -K x + e`, `e ~ N(0, control_noise)`, over
/// `steps` stages from `x_0 ~ N(0, start_cov)`, by covariance propagation.
pub fn linear_policy_cost(
    prob: &LqgProblem,
    gain: &DMatrix<f64>,
    control_noise: &DMatrix<f64>,
    start_cov: &DMatrix<f64>,
    steps: usize,
) -> f64 {
    let cl = &prob.a - &prob.b * gain;
    let state_cost = &prob.q + gain.transpose() * &prob.r * gain;
    let input_cost = (&prob.r * control_noise).trace();
    let drive = &prob.sigma + &prob.b * control_noise * prob.b.transpose();
    let mut s = start_cov.clone();
    let mut total = 0.0;
    let mut g = 1.0;
    for _ in 0..steps {
        total += g * ((&state_cost * &s).trace() + input_cost);
        s = &cl * &s * cl.transpose() + &drive;
        g *= prob.discount;
    }
    total
}

/// `x' Q x + u' R u`.
pub fn quadratic_cost(prob: &LqgProblem, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    (x.transpose() * &prob.q * x)[0] + (u.transpose() * &prob.r * u)[0]
}
