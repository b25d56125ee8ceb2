//! Scenario configuration files.
//!
//! Files are TOML. Every key is optional; an empty file describes the default
//! experiment (10x10 grid, one naive self-interested agent that lures plus
//! three greedy cooperative agents, 200 steps, 100 seeds, theory-of-mind
//! defense). Shared sections apply to every `[[scenario]]`; a scenario may
//! override the roster and the defense settings. Unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::comms::{CommGraph, FalsificationStrategy, GraphSchedule};
use crate::env::{AgentId, EnvConfig, Pos};
use crate::metrics::Role;
use crate::policy::{AdversaryStrategy, PolicyKind, ValueOracleConfig};
use crate::trust::{ConsistencyConfig, ConsistencyMode};

pub const DEFAULT_WIDTH: usize = 10;
pub const DEFAULT_HEIGHT: usize = 10;
pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_EPISODES: u64 = 100;
pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_LEARNING_RATE: f64 = 3.7;
pub const DEFAULT_KL_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatingMode {
    /// Drop messages whose sender belief is below `tau`.
    #[default]
    Threshold,
    /// Keep each message with probability equal to the sender belief.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomParams {
    pub consistency: ConsistencyConfig,
    pub learning_rate: f64,
    pub tau: f64,
    pub gating: GatingMode,
}

impl Default for TomParams {
    fn default() -> Self {
        Self {
            consistency: ConsistencyConfig::default(),
            learning_rate: DEFAULT_LEARNING_RATE,
            tau: DEFAULT_TAU,
            gating: GatingMode::Threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DefenseMode {
    /// Adversaries communicate, nobody filters.
    NoDef,
    /// Same dynamics as `NoDef`; reported from the adversary's side.
    AdvNoDef,
    /// No adversaries at all.
    IdealCoop,
    Tom(TomParams),
}

impl DefenseMode {
    pub fn name(&self) -> &'static str {
        match self {
            DefenseMode::NoDef => "no_def",
            DefenseMode::AdvNoDef => "adv_no_def",
            DefenseMode::IdealCoop => "ideal_coop",
            DefenseMode::Tom(_) => "tom",
        }
    }

    pub fn tom(&self) -> Option<&TomParams> {
        match self {
            DefenseMode::Tom(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub role: Role,
    pub policy: PolicyKind,
    pub falsification: FalsificationStrategy,
    pub start: Option<Pos>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySpec {
    Complete,
    /// Undirected edges.
    Edges(Vec<(usize, usize)>),
    /// Undirected edge lists cycled step by step.
    Schedule(Vec<Vec<(usize, usize)>>),
}

impl TopologySpec {
    pub fn build(&self, n: usize) -> Result<GraphSchedule, ScenarioError> {
        let graph = |edges: &[(usize, usize)]| {
            CommGraph::from_undirected_edges(
                n,
                edges.iter().map(|&(i, j)| (AgentId(i), AgentId(j))),
            )
            .map_err(|e| ScenarioError::invalid("topology", e.to_string()))
        };
        match self {
            TopologySpec::Complete => Ok(GraphSchedule::fixed(CommGraph::complete(n))),
            TopologySpec::Edges(e) => Ok(GraphSchedule::fixed(graph(e)?)),
            TopologySpec::Schedule(s) => {
                let graphs = s.iter().map(|e| graph(e)).collect::<Result<Vec<_>, _>>()?;
                GraphSchedule::cycle(graphs)
                    .map_err(|e| ScenarioError::invalid("topology.schedule", e.to_string()))
            }
        }
    }
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: DefenseMode,
    pub width: usize,
    pub height: usize,
    pub agents: Vec<AgentSpec>,
    pub oracle: ValueOracleConfig,
    pub topology: TopologySpec,
    pub steps: usize,
    pub seeds: Vec<u64>,
}

/// The experiment layout used when a file has no `[[agent]]` table.
pub fn default_roster() -> Vec<AgentSpec> {
    let mut agents = vec![AgentSpec {
        id: AgentId(0),
        role: Role::SelfInterested,
        policy: PolicyKind::SelfInterested(AdversaryStrategy::Naive),
        falsification: FalsificationStrategy::Lure,
        start: None,
    }];
    agents.extend((1..4).map(|i| AgentSpec {
        id: AgentId(i),
        role: Role::Cooperative,
        policy: PolicyKind::GreedyCooperative,
        falsification: FalsificationStrategy::Truthful,
        start: None,
    }));
    agents
}

impl ScenarioConfig {
    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn roles(&self) -> Vec<Role> {
        self.agents.iter().map(|a| a.role).collect()
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            width: self.width,
            height: self.height,
            starts: self.agents.iter().map(|a| a.start).collect(),
        }
    }

    pub fn adversary_count(&self) -> usize {
        self.agents
            .iter()
            .filter(|a| a.role == Role::SelfInterested)
            .count()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(ScenarioError::invalid(
                "scenario.name",
                format!(
                    "{:?} must be non-empty and use only [A-Za-z0-9_-]",
                    self.name
                ),
            ));
        }
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            if !ids.insert(a.id) {
                return Err(ScenarioError::invalid(
                    "agent.id",
                    format!("duplicate agent id {}", a.id),
                ));
            }
        }
        if let Some((k, a)) = self.agents.iter().enumerate().find(|(k, a)| a.id.0 != *k) {
            return Err(ScenarioError::invalid(
                "agent.id",
                format!(
                    "agent ids must be 0..{} in order, found {} at position {k}",
                    self.agents.len(),
                    a.id
                ),
            ));
        }
        self.env_config()
            .validate()
            .map_err(|e| ScenarioError::invalid("grid", e.to_string()))?;
        for a in &self.agents {
            a.policy
                .validate()
                .map_err(|e| ScenarioError::invalid("agent.temperature", e.to_string()))?;
            match a.role {
                Role::Cooperative => {
                    if !a.policy.is_cooperative() {
                        return Err(ScenarioError::invalid(
                            "agent.strategy",
                            format!(
                                "cooperative agent {} cannot use an adversary strategy",
                                a.id
                            ),
                        ));
                    }
                    if a.falsification != FalsificationStrategy::Truthful {
                        return Err(ScenarioError::invalid(
                            "agent.falsification",
                            format!("cooperative agent {} must be truthful", a.id),
                        ));
                    }
                }
                Role::SelfInterested => {
                    if a.policy.is_cooperative() {
                        return Err(ScenarioError::invalid(
                            "agent.policy",
                            format!("self-interested agent {} needs an adversary strategy", a.id),
                        ));
                    }
                }
            }
        }
        if self.agents.len() == self.adversary_count() {
            return Err(ScenarioError::invalid(
                "agent.role",
                "at least one cooperative agent required",
            ));
        }
        if self.steps < 2 {
            return Err(ScenarioError::invalid(
                "steps",
                format!("must be >= 2, got {}", self.steps),
            ));
        }
        if self.seeds.is_empty() {
            return Err(ScenarioError::invalid("seeds", "no seeds to run"));
        }
        self.oracle
            .validate()
            .map_err(|e| ScenarioError::invalid("oracle", e.to_string()))?;
        self.topology.build(self.agents.len())?;
        match &self.mode {
            DefenseMode::IdealCoop if self.adversary_count() > 0 => Err(ScenarioError::invalid(
                "mode",
                "ideal_coop scenarios must not contain self-interested agents",
            )),
            DefenseMode::AdvNoDef if self.adversary_count() == 0 => Err(ScenarioError::invalid(
                "mode",
                "adv_no_def scenarios need at least one self-interested agent",
            )),
            DefenseMode::Tom(p) => {
                if !(p.learning_rate.is_finite() && p.learning_rate > 0.0) {
                    return Err(ScenarioError::invalid(
                        "defense.learning_rate",
                        format!("must be > 0, got {}", p.learning_rate),
                    ));
                }
                if !(0.0..=1.0).contains(&p.tau) {
                    return Err(ScenarioError::invalid(
                        "defense.tau",
                        format!("must be in [0, 1], got {}", p.tau),
                    ));
                }
                p.consistency
                    .validate()
                    .map_err(|e| ScenarioError::invalid("defense.consistency", e.to_string()))
            }
            _ => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// file format

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    steps: Option<usize>,
    episodes: Option<u64>,
    seed_start: Option<u64>,
    seeds: Option<Vec<u64>>,
    grid: Option<GridSection>,
    oracle: Option<OracleSection>,
    topology: Option<TopologySection>,
    defense: Option<DefenseSection>,
    agent: Option<Vec<AgentSection>>,
    scenario: Option<Vec<ScenarioSection>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    width: Option<usize>,
    height: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleSection {
    gamma: Option<f64>,
    horizon: Option<usize>,
    radius: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TopologyKind {
    Complete,
    Edges,
    Schedule,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologySection {
    kind: TopologyKind,
    edges: Option<Vec<(usize, usize)>>,
    schedule: Option<Vec<Vec<(usize, usize)>>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ConsistencyName {
    ExactMatch,
    ValueThreshold,
    Kl,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefenseSection {
    consistency: Option<ConsistencyName>,
    rho: Option<f64>,
    kl_threshold: Option<f64>,
    kl_temperature: Option<f64>,
    learning_rate: Option<f64>,
    tau: Option<f64>,
    gating: Option<GatingMode>,
}

impl DefenseSection {
    fn overlay(&self, over: &DefenseSection) -> DefenseSection {
        DefenseSection {
            consistency: over.consistency.or(self.consistency),
            rho: over.rho.or(self.rho),
            kl_threshold: over.kl_threshold.or(self.kl_threshold),
            kl_temperature: over.kl_temperature.or(self.kl_temperature),
            learning_rate: over.learning_rate.or(self.learning_rate),
            tau: over.tau.or(self.tau),
            gating: over.gating.or(self.gating),
        }
    }

    fn resolve(&self) -> Result<TomParams, ScenarioError> {
        let mode = match self.consistency.unwrap_or(ConsistencyName::ExactMatch) {
            ConsistencyName::ExactMatch => ConsistencyMode::ExactMatch,
            ConsistencyName::ValueThreshold => ConsistencyMode::ValueThreshold {
                rho: self.rho.unwrap_or(0.0),
            },
            ConsistencyName::Kl => ConsistencyMode::Kl {
                threshold: self.kl_threshold.ok_or_else(|| {
                    ScenarioError::invalid(
                        "defense.kl_threshold",
                        "required when consistency = \"kl\"",
                    )
                })?,
                temperature: self.kl_temperature.unwrap_or(DEFAULT_KL_TEMPERATURE),
            },
        };
        Ok(TomParams {
            consistency: ConsistencyConfig { mode },
            learning_rate: self.learning_rate.unwrap_or(DEFAULT_LEARNING_RATE),
            tau: self.tau.unwrap_or(DEFAULT_TAU),
            gating: self.gating.unwrap_or_default(),
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CoopPolicyName {
    Greedy,
    Softmax,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentSection {
    id: usize,
    role: Role,
    policy: Option<CoopPolicyName>,
    temperature: Option<f64>,
    strategy: Option<AdversaryStrategy>,
    falsification: Option<FalsificationStrategy>,
    start: Option<(usize, usize)>,
}

impl AgentSection {
    fn resolve(&self) -> Result<AgentSpec, ScenarioError> {
        let policy = match self.role {
            Role::Cooperative => {
                if self.strategy.is_some() {
                    return Err(ScenarioError::invalid(
                        "agent.strategy",
                        format!(
                            "agent {} is cooperative; strategy applies to self_interested agents",
                            self.id
                        ),
                    ));
                }
                match (
                    self.policy.unwrap_or(CoopPolicyName::Greedy),
                    self.temperature,
                ) {
                    (CoopPolicyName::Greedy, None) => PolicyKind::GreedyCooperative,
                    (CoopPolicyName::Greedy, Some(_)) => {
                        return Err(ScenarioError::invalid(
                            "agent.temperature",
                            format!("agent {}: temperature needs policy = \"softmax\"", self.id),
                        ))
                    }
                    (CoopPolicyName::Softmax, t) => PolicyKind::SoftmaxCooperative {
                        temperature: t.unwrap_or(1.0),
                    },
                }
            }
            Role::SelfInterested => {
                if self.policy.is_some() || self.temperature.is_some() {
                    return Err(ScenarioError::invalid(
                        "agent.policy",
                        format!(
                            "agent {} is self_interested; use strategy instead of policy",
                            self.id
                        ),
                    ));
                }
                PolicyKind::SelfInterested(self.strategy.unwrap_or(AdversaryStrategy::Naive))
            }
        };
        let falsification = self.falsification.unwrap_or(match self.role {
            Role::Cooperative => FalsificationStrategy::Truthful,
            Role::SelfInterested => FalsificationStrategy::Lure,
        });
        Ok(AgentSpec {
            id: AgentId(self.id),
            role: self.role,
            policy,
            falsification,
            start: self.start.map(|(x, y)| Pos::new(x, y)),
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModeName {
    NoDef,
    AdvNoDef,
    IdealCoop,
    Tom,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    name: String,
    mode: ModeName,
    defense: Option<DefenseSection>,
    agent: Option<Vec<AgentSection>>,
}

/// All scenarios of one configuration file, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenarios: Vec<ScenarioConfig>,
}

impl ExperimentConfig {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioConfig> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config_str(&text).map_err(|e| match e {
        ScenarioError::Parse { path: _, message } => ScenarioError::Parse {
            path: Some(path.to_path_buf()),
            message,
        },
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ScenarioError> {
    let file: FileConfig = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        path: None,
        message: e.to_string(),
    })?;

    let grid = file.grid.unwrap_or_default();
    let oracle_s = file.oracle.unwrap_or_default();
    let defaults = ValueOracleConfig::default();
    let oracle = ValueOracleConfig {
        gamma: oracle_s.gamma.unwrap_or(defaults.gamma),
        horizon: oracle_s.horizon.unwrap_or(defaults.horizon),
        radius: oracle_s.radius.unwrap_or(defaults.radius),
    };
    let topology = match file.topology {
        None => TopologySpec::Complete,
        Some(t) => match t.kind {
            TopologyKind::Complete => {
                if t.edges.is_some() || t.schedule.is_some() {
                    return Err(ScenarioError::invalid(
                        "topology",
                        "kind = \"complete\" takes no edges",
                    ));
                }
                TopologySpec::Complete
            }
            TopologyKind::Edges => TopologySpec::Edges(t.edges.ok_or_else(|| {
                ScenarioError::invalid("topology.edges", "required for kind = \"edges\"")
            })?),
            TopologyKind::Schedule => TopologySpec::Schedule(t.schedule.ok_or_else(|| {
                ScenarioError::invalid("topology.schedule", "required for kind = \"schedule\"")
            })?),
        },
    };
    let seeds = match (file.seeds, file.episodes, file.seed_start) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(ScenarioError::invalid(
                "seeds",
                "give either seeds or episodes/seed_start, not both",
            ))
        }
        (Some(s), None, None) => s,
        (None, n, start) => {
            let start = start.unwrap_or(0);
            (start..start + n.unwrap_or(DEFAULT_EPISODES)).collect()
        }
    };
    let shared_agents = match &file.agent {
        Some(a) => a
            .iter()
            .map(AgentSection::resolve)
            .collect::<Result<Vec<_>, _>>()?,
        None => default_roster(),
    };
    let shared_defense = file.defense.unwrap_or_default();

    let sections = file.scenario.unwrap_or_else(|| {
        vec![ScenarioSection {
            name: "tom".into(),
            mode: ModeName::Tom,
            defense: None,
            agent: None,
        }]
    });
    if sections.is_empty() {
        return Err(ScenarioError::invalid(
            "scenario",
            "at least one scenario required",
        ));
    }
    let mut names = BTreeSet::new();
    let mut scenarios = Vec::with_capacity(sections.len());
    for s in sections {
        if !names.insert(s.name.clone()) {
            return Err(ScenarioError::invalid(
                "scenario.name",
                format!("duplicate scenario {:?}", s.name),
            ));
        }
        let defense = shared_defense.overlay(&s.defense.clone().unwrap_or_default());
        if s.defense.is_some() && !matches!(s.mode, ModeName::Tom) {
            return Err(ScenarioError::invalid(
                "scenario.defense",
                format!(
                    "scenario {:?} sets defense options but is not a tom scenario",
                    s.name
                ),
            ));
        }
        let mode = match s.mode {
            ModeName::NoDef => DefenseMode::NoDef,
            ModeName::AdvNoDef => DefenseMode::AdvNoDef,
            ModeName::IdealCoop => DefenseMode::IdealCoop,
            ModeName::Tom => DefenseMode::Tom(defense.resolve()?),
        };
        let agents = match &s.agent {
            Some(a) => a
                .iter()
                .map(AgentSection::resolve)
                .collect::<Result<Vec<_>, _>>()?,
            None => shared_agents.clone(),
        };
        let cfg = ScenarioConfig {
            name: s.name,
            mode,
            width: grid.width.unwrap_or(DEFAULT_WIDTH),
            height: grid.height.unwrap_or(DEFAULT_HEIGHT),
            agents,
            oracle,
            topology: topology.clone(),
            steps: file.steps.unwrap_or(DEFAULT_STEPS),
            seeds: seeds.clone(),
        };
        cfg.validate()?;
        scenarios.push(cfg);
    }
    Ok(ExperimentConfig { scenarios })
}
