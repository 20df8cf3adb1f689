//! TOML loaders for MDP, LQG and environment descriptions.
//!
//! ```toml
//! kind = "mdp"
//! states = 2
//! controls = 1
//! discount = 1.0
//! horizon = 3            # or "infinite"
//! absorbing = [1]
//! disallowed = [[0, 1]]
//!
//! [[transition]]
//! x = 0
//! u = 0
//! y = 1
//! p = 1.0
//!
//! [[cost]]
//! x = 0
//! u = 0
//! c = 1.0                # optional `t` makes the table per-stage
//! ```

use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::envs::{CartPoleLqg, GridWorld, NoiseReading};
use crate::error::{Error, Result};
use crate::lqr::LqgProblem;
use crate::mdp::{CostTable, FiniteMdp, Horizon};

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mdp(FiniteMdp),
    Lqg(LqgProblem),
    GridWorld(GridWorld),
    CartPole(CartPoleLqg),
}

/// A parsed config: the model plus the raw text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub model: Model,
    pub experiment: Option<ExperimentSection>,
    pub source: String,
}

/// Optional `[experiment]` table shared by the training subcommands.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub id: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub budget: Option<u64>,
    pub eval_every: Option<u64>,
    pub update_period: Option<usize>,
    pub sigma2_base: Option<f64>,
    pub ridge: Option<f64>,
    pub learning_rates: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HorizonSpec {
    Steps(usize),
    Word(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionRow {
    x: usize,
    u: usize,
    y: usize,
    p: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CostRow {
    x: usize,
    u: usize,
    c: f64,
    t: Option<usize>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Raw {
    Mdp {
        states: usize,
        controls: usize,
        discount: f64,
        horizon: HorizonSpec,
        #[serde(default)]
        absorbing: Vec<usize>,
        #[serde(default)]
        disallowed: Vec<[usize; 2]>,
        #[serde(default)]
        transition: Vec<TransitionRow>,
        #[serde(default)]
        cost: Vec<CostRow>,
        experiment: Option<ExperimentSection>,
    },
    Lqg {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        sigma: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        discount: f64,
        experiment: Option<ExperimentSection>,
    },
    Gridworld {
        map: Option<String>,
        success_prob: Option<f64>,
        experiment: Option<ExperimentSection>,
    },
    Cartpole {
        noise: Option<String>,
        experiment: Option<ExperimentSection>,
    },
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(Error::Config(format!("matrix {name} is empty")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != m) {
        return Err(Error::Config(format!("matrix {name} row {i} has {} entries, expected {m}", rows[i].len())));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn build_mdp(
    states: usize,
    controls: usize,
    discount: f64,
    horizon: HorizonSpec,
    absorbing: Vec<usize>,
    disallowed: &[[usize; 2]],
    transition: &[TransitionRow],
    cost: &[CostRow],
) -> Result<FiniteMdp> {
    let horizon = match horizon {
        HorizonSpec::Steps(t) => Horizon::Finite(t),
        HorizonSpec::Word(w) if w == "infinite" => Horizon::Infinite,
        HorizonSpec::Word(w) => {
            return Err(Error::Config(format!("horizon {w:?} is neither a step count nor \"infinite\"")))
        }
    };
    let nxu = states * controls;
    let in_range = |what: &str, i: usize, x: usize, u: usize| -> Result<()> {
        if x >= states || u >= controls {
            return Err(Error::Config(format!(
                "{what} row {i}: (x={x}, u={u}) outside {states} states x {controls} controls"
            )));
        }
        Ok(())
    };
    let mut allowed = vec![true; nxu];
    for (i, &[x, u]) in disallowed.iter().enumerate() {
        in_range("disallowed", i, x, u)?;
        allowed[x * controls + u] = false;
    }
    let mut p = vec![0.0; nxu * states];
    for (i, row) in transition.iter().enumerate() {
        in_range("transition", i, row.x, row.u)?;
        if row.y >= states {
            return Err(Error::Config(format!("transition row {i}: successor {} outside {states} states", row.y)));
        }
        if !(row.p.is_finite() && (0.0..=1.0).contains(&row.p)) {
            return Err(Error::Config(format!("transition row {i}: probability {} outside [0, 1]", row.p)));
        }
        p[(row.x * controls + row.u) * states + row.y] += row.p;
    }
    let staged = cost.iter().any(|c| c.t.is_some());
    if staged && cost.iter().any(|c| c.t.is_none()) {
        return Err(Error::Config("cost rows must either all carry `t` or none".into()));
    }
    let stages = match horizon {
        Horizon::Finite(t) if staged => t + 1,
        _ if staged => return Err(Error::Config("per-stage costs need a finite horizon".into())),
        _ => 1,
    };
    let mut c = vec![vec![0.0; nxu]; stages];
    for (i, row) in cost.iter().enumerate() {
        in_range("cost", i, row.x, row.u)?;
        let t = row.t.unwrap_or(0);
        if t >= stages {
            return Err(Error::Config(format!("cost row {i}: stage {t} beyond horizon")));
        }
        if !(row.c.is_finite() && row.c >= 0.0) {
            return Err(Error::Config(format!("cost row {i}: cost {} must be finite and nonnegative", row.c)));
        }
        c[t][row.x * controls + row.u] = row.c;
    }
    let cost = if staged { CostTable::PerStage(c) } else { CostTable::Stationary(c.swap_remove(0)) };
    FiniteMdp::with_allowed(states, controls, p, cost, discount, horizon, absorbing, allowed)
}

/// Parses a config from TOML text.
pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let raw: Raw = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let (model, experiment) = match raw {
        Raw::Mdp { states, controls, discount, horizon, absorbing, disallowed, transition, cost, experiment } => {
            let mdp = build_mdp(states, controls, discount, horizon, absorbing, &disallowed, &transition, &cost)?;
            (Model::Mdp(mdp), experiment)
        }
        Raw::Lqg { a, b, sigma, q, r, discount, experiment } => {
            let prob = LqgProblem::new(
                matrix("a", &a)?,
                matrix("b", &b)?,
                matrix("sigma", &sigma)?,
                matrix("q", &q)?,
                matrix("r", &r)?,
                discount,
            )?;
            (Model::Lqg(prob), experiment)
        }
        Raw::Gridworld { map, success_prob, experiment } => {
            let mut world = match map {
                Some(m) => GridWorld::from_ascii(&m)?,
                None => GridWorld::default(),
            };
            if let Some(p) = success_prob {
                world = world.with_success_prob(p)?;
            }
            (Model::GridWorld(world), experiment)
        }
        Raw::Cartpole { noise, experiment } => {
            let reading = match noise.as_deref() {
                None | Some("stddev") => NoiseReading::StdDev,
                Some("variance") => NoiseReading::Variance,
                Some(other) => {
                    return Err(Error::Config(format!(
                        "noise reading {other:?} is neither \"stddev\" nor \"variance\""
                    )))
                }
            };
            (Model::CartPole(CartPoleLqg::new(reading)), experiment)
        }
    };
    Ok(LoadedConfig { model, experiment, source: text.to_owned() })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<LoadedConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}
