//! Trust-decision classification and episode summaries.
//!
//! "Positive" means "adversary flagged": a peer counts as flagged when the
//! observer's belief in it is below the trust threshold.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::AgentId;
use crate::trust::{TrustState, VerdictKind};

/// Ground-truth role of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Cooperative,
    SelfInterested,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    /// distrusted adversaries
    pub tp: u64,
    /// trusted cooperative agents
    pub tn: u64,
    /// distrusted cooperative agents
    pub fp: u64,
    /// trusted adversaries
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn scaled(&self, k: u64) -> Self {
        Self {
            tp: self.tp * k,
            tn: self.tn * k,
            fp: self.fp * k,
            fn_: self.fn_ * k,
        }
    }
}

impl Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// `2tp / (2tp + fp + fn)`, or 1.0 when there is nothing to find and nothing
/// was flagged.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

/// Confusion counts of one observer over the peers it heard from.
pub fn classify_observer(
    ts: &TrustState,
    received_from: &[AgentId],
    roles: &[Role],
    tau: f64,
) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for &peer in received_from {
        let flagged = !ts.is_trusted(peer, tau);
        match (roles[peer.0], flagged) {
            (Role::SelfInterested, true) => c.tp += 1,
            (Role::SelfInterested, false) => c.fn_ += 1,
            (Role::Cooperative, true) => c.fp += 1,
            (Role::Cooperative, false) => c.tn += 1,
        }
    }
    c
}

/// Per-observer confusion counts. `received[k]` lists the peers that sent a
/// message to `states[k]` this step.
pub fn classify_step(
    states: &[TrustState],
    received: &[Vec<AgentId>],
    roles: &[Role],
    tau: f64,
) -> Vec<ConfusionCounts> {
    states
        .iter()
        .zip(received)
        .map(|(ts, r)| classify_observer(ts, r, roles, tau))
        .collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("episode log has {got} steps, expected {expected}")]
    TruncatedLog { expected: usize, got: usize },
    #[error("episode log step {index} is numbered {step}")]
    MisnumberedStep { index: usize, step: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerLog {
    pub peer: AgentId,
    pub belief: f64,
    pub verdict: Option<VerdictKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverLog {
    pub observer: AgentId,
    pub confusion: ConfusionCounts,
    pub peers: Vec<PeerLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    /// 1-based.
    pub step: u64,
    pub covered_cells: usize,
    pub rewards: Vec<u32>,
    pub observers: Vec<ObserverLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub seed: u64,
    pub expected_steps: usize,
    pub cell_count: usize,
    pub roles: Vec<Role>,
    /// Cells covered at reset, credited to the agent starting on them.
    pub initial_credit: Vec<u32>,
    pub steps: Vec<StepLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub coverage_timeline: Vec<f64>,
    pub f1_timeline: Vec<f64>,
    pub final_coverage: f64,
    pub final_cooperative_coverage: f64,
    pub final_adversary_coverage: f64,
    pub mean_f1: f64,
    /// Cells credited to each agent, start cell included.
    pub cell_totals: Vec<u64>,
}

/// Mean over observers of the per-observer F1.
pub fn team_f1(observers: &[ObserverLog]) -> f64 {
    if observers.is_empty() {
        return 1.0;
    }
    observers.iter().map(|o| f1(&o.confusion)).sum::<f64>() / observers.len() as f64
}

pub fn summarize(log: &EpisodeLog) -> Result<EpisodeSummary, MetricsError> {
    if log.steps.len() != log.expected_steps {
        return Err(MetricsError::TruncatedLog {
            expected: log.expected_steps,
            got: log.steps.len(),
        });
    }
    for (index, s) in log.steps.iter().enumerate() {
        if s.step != index as u64 + 1 {
            return Err(MetricsError::MisnumberedStep {
                index,
                step: s.step,
            });
        }
    }
    let cells = log.cell_count as f64;
    let coverage_timeline: Vec<f64> = log
        .steps
        .iter()
        .map(|s| s.covered_cells as f64 / cells)
        .collect();
    let f1_timeline: Vec<f64> = log.steps.iter().map(|s| team_f1(&s.observers)).collect();

    let mut cell_totals: Vec<u64> = log.initial_credit.iter().map(|&c| u64::from(c)).collect();
    for s in &log.steps {
        for (total, &r) in cell_totals.iter_mut().zip(&s.rewards) {
            *total += u64::from(r);
        }
    }
    let credited = |role: Role| -> f64 {
        cell_totals
            .iter()
            .zip(&log.roles)
            .filter(|(_, &r)| r == role)
            .map(|(&c, _)| c)
            .sum::<u64>() as f64
            / cells
    };
    let initial: u64 = log.initial_credit.iter().map(|&c| u64::from(c)).sum();
    let final_coverage = coverage_timeline
        .last()
        .copied()
        .unwrap_or(initial as f64 / cells);
    let mean_f1 = if f1_timeline.is_empty() {
        1.0
    } else {
        f1_timeline.iter().sum::<f64>() / f1_timeline.len() as f64
    };
    Ok(EpisodeSummary {
        final_coverage,
        final_cooperative_coverage: credited(Role::Cooperative),
        final_adversary_coverage: credited(Role::SelfInterested),
        mean_f1,
        coverage_timeline,
        f1_timeline,
        cell_totals,
    })
}
