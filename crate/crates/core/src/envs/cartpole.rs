//! Cart-pole linearised around the upright equilibrium.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::lqr::LqgProblem;
use crate::lspsi::ContinuousSample;

pub const TAU: f64 = 1.0 / 60.0;
pub const NU: f64 = 13.2;
pub const GRAVITY: f64 = 9.8;
pub const EPISODE_CAP: usize = 100;

/// How the published noise matrices are read. Both list
/// `diag(0.001, 0.001, 0.001, 0.001)` for the process noise and
/// `diag(0.5, 0, 0.1, 0)` for the start distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseReading {
    /// Entries are standard deviations; covariances are their squares.
    #[default]
    StdDev,
    /// Entries are covariances as printed.
    Variance,
}

/// State `(x, x_dot, theta, theta_dot)`, scalar force `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleLqg {
    pub a: Matrix4<f64>,
    pub b: Vector4<f64>,
    pub sigma: Matrix4<f64>,
    pub start_cov: Matrix4<f64>,
    pub q: Matrix4<f64>,
    pub r: f64,
    pub discount: f64,
    pub theta_limit: f64,
    pub x_limit: f64,
    pub cap: usize,
    noise_factor: Matrix4<f64>,
    start_factor: Matrix4<f64>,
}

impl Default for CartPoleLqg {
    fn default() -> Self {
        Self::new(NoiseReading::default())
    }
}

/// `L` with `L L' = S` for a symmetric PSD `S`, tolerating singular `S`.
fn psd_factor(s: &Matrix4<f64>) -> Matrix4<f64> {
    let eig = s.symmetric_eigen();
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * Matrix4::from_diagonal(&root)
}

impl CartPoleLqg {
    pub fn new(reading: NoiseReading) -> Self {
        let noise = Vector4::repeat(0.001);
        let start = Vector4::new(0.5, 0.0, 0.1, 0.0);
        let (noise, start) = match reading {
            NoiseReading::StdDev => (noise.component_mul(&noise), start.component_mul(&start)),
            NoiseReading::Variance => (noise, start),
        };
        Self::with_noise(Matrix4::from_diagonal(&noise), Matrix4::from_diagonal(&start))
    }

    pub fn with_noise(sigma: Matrix4<f64>, start_cov: Matrix4<f64>) -> Self {
        #[rustfmt::skip]
        let a = Matrix4::new(
            1.0, TAU, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, TAU,
            0.0, 0.0, NU * TAU, 1.0,
        );
        let b = Vector4::new(0.0, TAU, 0.0, NU * TAU / GRAVITY);
        Self {
            a,
            b,
            q: Matrix4::from_diagonal(&Vector4::new(1.25, 1.0, 12.0, 0.25)),
            r: 0.01,
            discount: 1.0,
            theta_limit: PI / 6.0,
            x_limit: 1.5,
            cap: EPISODE_CAP,
            noise_factor: psd_factor(&sigma),
            start_factor: psd_factor(&start_cov),
            sigma,
            start_cov,
        }
    }

    /// The same system as a general LQG problem.
    pub fn lqg_problem(&self) -> Result<LqgProblem> {
        let m = |s: &Matrix4<f64>| DMatrix::from_iterator(4, 4, s.iter().copied());
        LqgProblem::new(
            m(&self.a),
            DMatrix::from_column_slice(4, 1, self.b.as_slice()),
            m(&self.sigma),
            m(&self.q),
            DMatrix::from_element(1, 1, self.r),
            self.discount,
        )
    }

    pub fn mean_step(&self, x: &Vector4<f64>, u: f64) -> Vector4<f64> {
        self.a * x + self.b * u
    }

    /// `x'Qx + R u^2`, charged for the pair before the transition.
    pub fn cost(&self, x: &Vector4<f64>, u: f64) -> f64 {
        (x.transpose() * self.q * x)[0] + self.r * u * u
    }

    fn gaussian<R: Rng + ?Sized>(factor: &Matrix4<f64>, rng: &mut R) -> Vector4<f64> {
        let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        factor * z
    }

    /// `y ~ N(A x + b u, Sigma)` and the stage cost of `(x, u)`.
    pub fn step<R: Rng + ?Sized>(&self, x: &Vector4<f64>, u: f64, rng: &mut R) -> (Vector4<f64>, f64) {
        let y = self.mean_step(x, u) + Self::gaussian(&self.noise_factor, rng);
        (y, self.cost(x, u))
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector4<f64> {
        Self::gaussian(&self.start_factor, rng)
    }

    /// `|theta| <= pi/6` and `|x| <= 1.5`.
    pub fn admissible(&self, x: &Vector4<f64>) -> bool {
        x[2].abs() <= self.theta_limit && x[0].abs() <= self.x_limit
    }

    /// Runs from a fresh start until the state leaves the admissible region
    /// or `cap` steps have been taken.
    pub fn rollout<R, P>(&self, mut policy: P, rng: &mut R) -> Episode
    where
        R: Rng + ?Sized,
        P: FnMut(&Vector4<f64>, &mut R) -> f64,
    {
        let mut x = self.sample_start(rng);
        let mut samples = Vec::with_capacity(self.cap);
        if !self.admissible(&x) {
            return Episode { samples, termination: Termination::Violation };
        }
        for _ in 0..self.cap {
            let u = policy(&x, rng);
            let (y, cost) = self.step(&x, u, rng);
            samples.push(ContinuousSample { x: x.as_slice().to_vec(), u: vec![u], cost, y: y.as_slice().to_vec() });
            if !self.admissible(&y) {
                return Episode { samples, termination: Termination::Violation };
            }
            x = y;
        }
        Episode { samples, termination: Termination::Cap }
    }

    /// Mean total cost over `trajectories` unconstrained runs of `steps` steps.
    pub fn monte_carlo_cost<R, P>(&self, mut policy: P, rng: &mut R, trajectories: usize, steps: usize) -> f64
    where
        R: Rng + ?Sized,
        P: FnMut(&Vector4<f64>, &mut R) -> f64,
    {
        let mut total = 0.0;
        for _ in 0..trajectories {
            let mut x = self.sample_start(rng);
            let mut g = 1.0;
            for _ in 0..steps {
                let u = policy(&x, rng);
                let (y, c) = self.step(&x, u, rng);
                total += g * c;
                g *= self.discount;
                x = y;
            }
        }
        total / trajectories as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Cap,
    Violation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub samples: Vec<ContinuousSample>,
    pub termination: Termination,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
