//! Exact value oracle and the policies built on it.
//!
//! The oracle scores `(observation, action)` by the best discounted number of
//! cells the agent could newly cover within its observation window over a
//! fixed horizon, starting with that action. Moves that would leave the grid
//! or the window leave the agent in place.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, CellView, Observation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("invalid value oracle config: {0}")]
    InvalidConfig(String),
    #[error("temperature must be finite and > 0, got {0}")]
    InvalidTemperature(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueOracleConfig {
    pub gamma: f64,
    pub horizon: usize,
    pub radius: usize,
}

impl Default for ValueOracleConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            horizon: 3,
            radius: 2,
        }
    }
}

impl ValueOracleConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(PolicyError::InvalidConfig(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.horizon == 0 {
            return Err(PolicyError::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.radius > crate::env::MAX_RADIUS {
            return Err(PolicyError::InvalidConfig(format!(
                "radius must be <= {}, got {}",
                crate::env::MAX_RADIUS,
                self.radius
            )));
        }
        Ok(())
    }

    /// Upper bound on any value: `sum_{k < horizon} gamma^k`.
    pub fn value_bound(&self) -> f64 {
        (0..self.horizon).map(|k| self.gamma.powi(k as i32)).sum()
    }
}

/// How an adversary picks its actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryStrategy {
    /// Greedy on its own truthful observation.
    Naive,
    /// Greedy on the (possibly falsified) observation it transmitted.
    ConsistentLiar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    GreedyCooperative,
    SoftmaxCooperative { temperature: f64 },
    SelfInterested(AdversaryStrategy),
}

impl PolicyKind {
    pub fn validate(&self) -> Result<(), PolicyError> {
        match *self {
            PolicyKind::SoftmaxCooperative { temperature } => check_temperature(temperature),
            _ => Ok(()),
        }
    }

    pub fn is_cooperative(&self) -> bool {
        !matches!(self, PolicyKind::SelfInterested(_))
    }
}

fn check_temperature(temperature: f64) -> Result<(), PolicyError> {
    if temperature.is_finite() && temperature > 0.0 {
        Ok(())
    } else {
        Err(PolicyError::InvalidTemperature(temperature))
    }
}

/// Probability per action, indexed in [`Action::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDistribution {
    probs: [f64; 5],
}

impl ActionDistribution {
    pub fn prob(&self, a: Action) -> f64 {
        self.probs[a.index()]
    }

    pub fn probs(&self) -> &[f64; 5] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for a in Action::ALL {
            acc += self.probs[a.index()];
            if u < acc {
                return a;
            }
        }
        // rounding left a sliver of mass past the last bucket
        *Action::ALL
            .iter()
            .rev()
            .find(|a| self.probs[a.index()] > 0.0)
            .unwrap_or(&Action::Stay)
    }
}

/// Observation window compiled to bitmasks for the dynamic program.
struct Window {
    center: u8,
    next: Vec<[u8; 5]>,
}

impl Window {
    fn compile(obs: &Observation) -> (Self, u128) {
        let side = obs.side() as i64;
        let cells = obs.local_map();
        let mut uncovered = 0u128;
        for (k, c) in cells.iter().enumerate() {
            if *c == CellView::Uncovered {
                uncovered |= 1u128 << k;
            }
        }
        let next = (0..cells.len())
            .map(|k| {
                let (wx, wy) = ((k as i64) % side, (k as i64) / side);
                Action::ALL.map(|a| {
                    let (dx, dy) = a.delta();
                    let (nx, ny) = (wx + dx, wy + dy);
                    if nx < 0 || ny < 0 || nx >= side || ny >= side {
                        return k as u8;
                    }
                    let nk = (ny * side + nx) as usize;
                    if cells[nk] == CellView::OutOfBounds {
                        k as u8
                    } else {
                        nk as u8
                    }
                })
            })
            .collect();
        let center = (cells.len() / 2) as u8;
        (Self { center, next }, uncovered)
    }
}

struct Solver<'a> {
    window: &'a Window,
    gamma: f64,
    // memo[d] maps (cell, uncovered mask) to the optimal value with d moves left
    memo: Vec<HashMap<(u8, u128), f64>>,
}

impl Solver<'_> {
    fn q(&mut self, cell: u8, a: Action, uncovered: u128, depth: usize) -> f64 {
        let dest = self.window.next[cell as usize][a.index()];
        let bit = 1u128 << dest;
        let gain = if uncovered & bit != 0 { 1.0 } else { 0.0 };
        gain + self.gamma * self.best(dest, uncovered & !bit, depth - 1)
    }

    fn best(&mut self, cell: u8, uncovered: u128, depth: usize) -> f64 {
        if depth == 0 || uncovered == 0 {
            return 0.0;
        }
        if let Some(&v) = self.memo[depth].get(&(cell, uncovered)) {
            return v;
        }
        let mut v = f64::NEG_INFINITY;
        for a in Action::ALL {
            v = v.max(self.q(cell, a, uncovered, depth));
        }
        self.memo[depth].insert((cell, uncovered), v);
        v
    }
}

/// Values of every action, indexed in [`Action::ALL`] order.
pub fn action_values(obs: &Observation, cfg: &ValueOracleConfig) -> [f64; 5] {
    let (window, uncovered) = Window::compile(obs);
    let mut solver = Solver {
        window: &window,
        gamma: cfg.gamma,
        memo: vec![HashMap::new(); cfg.horizon + 1],
    };
    Action::ALL.map(|a| solver.q(window.center, a, uncovered, cfg.horizon))
}

pub fn value(obs: &Observation, a: Action, cfg: &ValueOracleConfig) -> f64 {
    action_values(obs, cfg)[a.index()]
}

/// First action (in tie-break order) with maximal value.
pub fn argmax(values: &[f64; 5]) -> Action {
    let mut best = Action::Up;
    for a in Action::ALL {
        if values[a.index()] > values[best.index()] {
            best = a;
        }
    }
    best
}

pub fn greedy_action(obs: &Observation, cfg: &ValueOracleConfig) -> Action {
    argmax(&action_values(obs, cfg))
}

/// Log-softmax of `values / temperature`.
pub(crate) fn log_softmax(values: &[f64; 5], temperature: f64) -> [f64; 5] {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let logits = values.map(|v| (v - max) / temperature);
    let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
    logits.map(|l| l - lse)
}

pub fn distribution_from_values(
    values: &[f64; 5],
    temperature: f64,
) -> Result<ActionDistribution, PolicyError> {
    check_temperature(temperature)?;
    let mut probs = log_softmax(values, temperature).map(f64::exp);
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(ActionDistribution { probs })
}

/// Softmax over action values at `temperature`.
pub fn action_distribution(
    obs: &Observation,
    temperature: f64,
    cfg: &ValueOracleConfig,
) -> Result<ActionDistribution, PolicyError> {
    distribution_from_values(&action_values(obs, cfg), temperature)
}

/// Action of a self-interested agent. `own` is its truthful view, `transmitted`
/// what it told its peers this step.
pub fn adversary_act(
    own: &Observation,
    transmitted: &Observation,
    strategy: AdversaryStrategy,
    cfg: &ValueOracleConfig,
) -> Action {
    match strategy {
        AdversaryStrategy::Naive => greedy_action(own, cfg),
        AdversaryStrategy::ConsistentLiar => greedy_action(transmitted, cfg),
    }
}
