//! First-order theory-of-mind trust.
//!
//! Each cooperative agent keeps a belief in every other agent. After a step it
//! asks, for each peer that messaged it: "given the observation this peer
//! sent me, would I have taken the action it actually took?" The answer is a
//! [`Verdict`]. Verdicts are tallied per peer, and the belief moves up or down
//! by the learning rate times the matching tally divided by the current
//! timestep. Messages from peers whose belief falls below a threshold are
//! dropped before the owner acts.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::Message;
use crate::env::{Action, AgentId, Observation};
use crate::policy::{action_values, argmax, log_softmax, PolicyError, ValueOracleConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustError {
    #[error("learning rate must be finite and > 0, got {0}")]
    InvalidLearningRate(f64),
    #[error("invalid consistency config: {0}")]
    InvalidConfig(String),
    #[error("malformed payload from {sender}: {reason}")]
    MalformedPayload { sender: AgentId, reason: String },
    #[error("agent {peer} is unknown to the trust state of {owner}")]
    UnknownPeer { owner: AgentId, peer: AgentId },
    #[error("belief updates start at t = 2, trust state is at t = {0}")]
    TooEarly(u64),
    #[error("no observed action for sender {0}")]
    MissingAction(AgentId),
    #[error("calibration needs at least one sample")]
    EmptySamples,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// How a peer's observed action is compared with the observer's expectation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyMode {
    /// Consistent iff the observed action equals the observer's greedy action
    /// on the transmitted observation.
    #[default]
    ExactMatch,
    /// Consistent iff the value gap to the greedy action is at most `rho`.
    ValueThreshold { rho: f64 },
    /// Consistent iff the KL score at `temperature` is at most `threshold`.
    Kl { threshold: f64, temperature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub mode: ConsistencyMode,
}

impl ConsistencyConfig {
    pub fn validate(&self) -> Result<(), TrustError> {
        match self.mode {
            ConsistencyMode::ExactMatch => Ok(()),
            ConsistencyMode::ValueThreshold { rho } if rho.is_finite() && rho >= 0.0 => Ok(()),
            ConsistencyMode::ValueThreshold { rho } => Err(TrustError::InvalidConfig(format!(
                "rho must be >= 0, got {rho}"
            ))),
            ConsistencyMode::Kl {
                threshold,
                temperature,
            } => {
                if !(threshold.is_finite() && threshold >= 0.0) {
                    return Err(TrustError::InvalidConfig(format!(
                        "KL threshold must be >= 0, got {threshold}"
                    )));
                }
                if !(temperature.is_finite() && temperature > 0.0) {
                    return Err(PolicyError::InvalidTemperature(temperature).into());
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Consistent,
    Inconsistent,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Consistent => "consistent",
            VerdictKind::Inconsistent => "inconsistent",
        }
    }
}

/// Outcome of one consistency check. `score` is the value gap (exact-match and
/// value-threshold modes) or the KL score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub score: f64,
}

impl Verdict {
    pub fn consistent(score: f64) -> Self {
        Self {
            kind: VerdictKind::Consistent,
            score,
        }
    }

    pub fn inconsistent(score: f64) -> Self {
        Self {
            kind: VerdictKind::Inconsistent,
            score,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.kind == VerdictKind::Consistent
    }
}

/// Running tallies for one peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConsistencyCounts {
    pub inconsistent: u64,
    pub consistent: u64,
}

impl ConsistencyCounts {
    /// `(inconsistent, consistent)`, i.e. slots 0 and 1.
    pub fn as_pair(&self) -> (u64, u64) {
        (self.inconsistent, self.consistent)
    }
}

/// Belief state held by one agent about all agents (itself included).
#[derive(Debug, Clone, PartialEq)]
pub struct TrustState {
    owner: AgentId,
    belief: Vec<f64>,
    counts: Vec<ConsistencyCounts>,
    learning_rate: f64,
    t: u64,
}

impl TrustState {
    /// Every belief starts at 1.0 and every tally at zero, at `t = 1`.
    pub fn new(owner: AgentId, agent_count: usize, learning_rate: f64) -> Result<Self, TrustError> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(TrustError::InvalidLearningRate(learning_rate));
        }
        if owner.0 >= agent_count {
            return Err(TrustError::UnknownPeer { owner, peer: owner });
        }
        Ok(Self {
            owner,
            belief: vec![1.0; agent_count],
            counts: vec![ConsistencyCounts::default(); agent_count],
            learning_rate,
            t: 1,
        })
    }

    pub fn owner(&self) -> AgentId {
        self.owner
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn beliefs(&self) -> &[f64] {
        &self.belief
    }

    pub fn belief(&self, peer: AgentId) -> Result<f64, TrustError> {
        self.check_peer(peer)?;
        Ok(self.belief[peer.0])
    }

    pub fn counts(&self, peer: AgentId) -> Result<ConsistencyCounts, TrustError> {
        self.check_peer(peer)?;
        Ok(self.counts[peer.0])
    }

    /// Moves to the next timestep.
    pub fn advance(&mut self) {
        self.t += 1;
    }

    fn check_peer(&self, peer: AgentId) -> Result<(), TrustError> {
        if peer.0 < self.belief.len() {
            Ok(())
        } else {
            Err(TrustError::UnknownPeer {
                owner: self.owner,
                peer,
            })
        }
    }

    pub fn update_consistency_count(
        &mut self,
        peer: AgentId,
        verdict: &Verdict,
    ) -> Result<(), TrustError> {
        self.check_peer(peer)?;
        let c = &mut self.counts[peer.0];
        match verdict.kind {
            VerdictKind::Consistent => c.consistent += 1,
            VerdictKind::Inconsistent => c.inconsistent += 1,
        }
        Ok(())
    }

    /// Expects the tally for this verdict to be already counted.
    pub fn update_belief(&mut self, peer: AgentId, verdict: &Verdict) -> Result<(), TrustError> {
        self.check_peer(peer)?;
        if self.t < 2 {
            return Err(TrustError::TooEarly(self.t));
        }
        let t = self.t as f64;
        let c = self.counts[peer.0];
        let b = &mut self.belief[peer.0];
        let next = match verdict.kind {
            VerdictKind::Consistent => *b + self.learning_rate * (c.consistent as f64 / t),
            VerdictKind::Inconsistent => *b - self.learning_rate * (c.inconsistent as f64 / t),
        };
        *b = next.clamp(0.0, 1.0);
        Ok(())
    }

    /// Count then belief, for one verdict.
    pub fn record(&mut self, peer: AgentId, verdict: &Verdict) -> Result<(), TrustError> {
        self.update_consistency_count(peer, verdict)?;
        self.update_belief(peer, verdict)
    }

    pub fn is_trusted(&self, peer: AgentId, tau: f64) -> bool {
        self.belief.get(peer.0).is_some_and(|&b| b >= tau)
    }
}

pub fn init_trust(
    owner: AgentId,
    agent_count: usize,
    learning_rate: f64,
) -> Result<TrustState, TrustError> {
    TrustState::new(owner, agent_count, learning_rate)
}

/// KL divergence between the observer's softmax over actions and the same
/// distribution with the probabilities of the greedy and the observed action
/// exchanged. Zero when the observed action is (tied for) greedy.
pub fn kl_score(values: &[f64; 5], observed: Action, temperature: f64) -> f64 {
    let greedy = argmax(values);
    let logp = log_softmax(values, temperature);
    let mut logq = logp;
    logq.swap(greedy.index(), observed.index());
    logp.iter()
        .zip(&logq)
        .map(|(lp, lq)| if lp == lq { 0.0 } else { lp.exp() * (lp - lq) })
        .sum()
}

fn check_message(msg: &Message) -> Result<(), TrustError> {
    let malformed = |reason: String| TrustError::MalformedPayload {
        sender: msg.sender,
        reason,
    };
    if msg.payload.agent_id() != msg.sender {
        return Err(malformed(format!(
            "payload claims agent {}",
            msg.payload.agent_id()
        )));
    }
    if msg.payload.t() != msg.t {
        return Err(malformed(format!(
            "payload is from step {}, message from step {}",
            msg.payload.t(),
            msg.t
        )));
    }
    Ok(())
}

/// Judges `observed_action` against what the observer would have done given
/// the sender's payload.
pub fn consistency_check(
    oracle: &ValueOracleConfig,
    msg_prev: &Message,
    observed_action: Action,
    cfg: &ConsistencyConfig,
) -> Result<Verdict, TrustError> {
    check_message(msg_prev)?;
    Ok(judge(oracle, &msg_prev.payload, observed_action, cfg))
}

pub(crate) fn judge(
    oracle: &ValueOracleConfig,
    payload: &Observation,
    observed: Action,
    cfg: &ConsistencyConfig,
) -> Verdict {
    let values = action_values(payload, oracle);
    let greedy = argmax(&values);
    let gap = values[greedy.index()] - values[observed.index()];
    match cfg.mode {
        ConsistencyMode::ExactMatch => {
            if greedy == observed {
                Verdict::consistent(gap)
            } else {
                Verdict::inconsistent(gap)
            }
        }
        ConsistencyMode::ValueThreshold { rho } => {
            if gap <= rho {
                Verdict::consistent(gap)
            } else {
                Verdict::inconsistent(gap)
            }
        }
        ConsistencyMode::Kl {
            threshold,
            temperature,
        } => {
            let score = kl_score(&values, observed, temperature);
            if score <= threshold {
                Verdict::consistent(score)
            } else {
                Verdict::inconsistent(score)
            }
        }
    }
}

/// Mean KL score over `(observation, observed action)` samples.
pub fn calibrate_kl_threshold(
    samples: &[(Observation, Action)],
    temperature: f64,
    oracle: &ValueOracleConfig,
) -> Result<f64, TrustError> {
    if samples.is_empty() {
        return Err(TrustError::EmptySamples);
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(PolicyError::InvalidTemperature(temperature).into());
    }
    let score =
        |(obs, a): &(Observation, Action)| kl_score(&action_values(obs, oracle), *a, temperature);
    let scores: Vec<f64> = crate::exec::map_slice(samples, score);
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Messages whose sender belief is at least `tau`.
pub fn gate_messages(ts: &TrustState, msgs: &[Message], tau: f64) -> Vec<Message> {
    msgs.iter()
        .filter(|m| ts.is_trusted(m.sender, tau))
        .cloned()
        .collect()
}

/// Keeps each message with probability equal to the sender's belief.
pub fn gate_messages_sampled<R: Rng + ?Sized>(
    ts: &TrustState,
    msgs: &[Message],
    rng: &mut R,
) -> Vec<Message> {
    msgs.iter()
        .filter(|m| {
            let b = ts.belief.get(m.sender.0).copied().unwrap_or(0.0);
            rng.random::<f64>() < b
        })
        .cloned()
        .collect()
}

/// Verdict recorded by `observer` about `peer` during one trust round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictRecord {
    pub observer: AgentId,
    pub peer: AgentId,
    pub verdict: Verdict,
}

/// One trust round. Every state advances one timestep; then each observer
/// checks every message addressed to it from the previous step against the
/// sender's observed action, and updates count then belief.
pub fn step_trust_all(
    states: &mut [TrustState],
    prev_msgs: &[Message],
    observed_actions: &[Action],
    oracle: &ValueOracleConfig,
    cfg: &ConsistencyConfig,
) -> Result<Vec<VerdictRecord>, TrustError> {
    for m in prev_msgs {
        if observed_actions.get(m.sender.0).is_none() {
            return Err(TrustError::MissingAction(m.sender));
        }
        check_message(m)?;
    }
    let mut records = Vec::new();
    for ts in states.iter_mut() {
        ts.advance();
        let owner = ts.owner;
        for m in prev_msgs
            .iter()
            .filter(|m| m.receiver == owner && m.sender != owner)
        {
            let verdict = judge(oracle, &m.payload, observed_actions[m.sender.0], cfg);
            ts.record(m.sender, &verdict)?;
            records.push(VerdictRecord {
                observer: owner,
                peer: m.sender,
                verdict,
            });
        }
    }
    Ok(records)
}
