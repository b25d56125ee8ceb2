use crate::comms::{route, transmit, FalsificationStrategy, Message};
use crate::env::{reset, Action, AgentId, GridState, Observation};
use crate::exec::Execution;
use crate::metrics::{
    classify_observer, summarize, EpisodeLog, EpisodeSummary, ObserverLog, PeerLog, Role, StepLog,
};
use crate::policy::{action_distribution, adversary_act, greedy_action, PolicyKind};
use crate::rng::{episode_rng, Stream};
use crate::trust::{
    gate_messages, gate_messages_sampled, init_trust, step_trust_all, TrustState, VerdictRecord,
};

use super::artifact::RunSummary;
use super::config::{GatingMode, ScenarioConfig};
use super::ScenarioError;

/// Everything produced by one seeded episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRun {
    pub log: EpisodeLog,
    pub initial_state: GridState,
    pub final_state: GridState,
    pub joint_actions: Vec<Vec<Action>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub log: EpisodeLog,
    pub summary: EpisodeSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub config: ScenarioConfig,
    /// In seed order.
    pub episodes: Vec<EpisodeRecord>,
    pub summary: RunSummary,
}

/// Runs one episode. Per step:
///
/// 1. from step 2 on, every observer judges the previous step's messages
///    against the actions their senders took (theory-of-mind mode only);
/// 2. every agent transmits its observation along the current topology;
/// 3. cooperative agents drop messages from distrusted senders, overlay the
///    rest onto their own window and act; adversaries act on their own;
/// 4. the environment steps and the step is logged.
pub fn run_episode(cfg: &ScenarioConfig, seed: u64) -> Result<EpisodeRun, ScenarioError> {
    cfg.validate()?;
    let n = cfg.agent_count();
    let radius = cfg.oracle.radius;
    let roles = cfg.roles();
    let strategies: Vec<FalsificationStrategy> =
        cfg.agents.iter().map(|a| a.falsification).collect();
    let schedule = cfg.topology.build(n)?;
    let tom = cfg.mode.tom().copied();

    let initial_state = reset(&cfg.env_config(), seed)?;
    let mut state = initial_state.clone();
    let mut comms_rng = episode_rng(seed, Stream::Comms);
    let mut policy_rng = episode_rng(seed, Stream::Policy);
    let mut gating_rng = episode_rng(seed, Stream::Gating);

    let observers: Vec<AgentId> = cfg
        .agents
        .iter()
        .filter(|a| a.role == Role::Cooperative)
        .map(|a| a.id)
        .collect();
    // outside theory-of-mind mode these stay at their initial all-trusting value
    let mut trust: Vec<TrustState> = observers
        .iter()
        .map(|&o| init_trust(o, n, tom.map_or(1.0, |p| p.learning_rate)))
        .collect::<Result<_, _>>()?;
    let slot_of = |agent: AgentId| observers.iter().position(|&o| o == agent);
    let tau = tom.map_or(0.0, |p| p.tau);

    let mut log = EpisodeLog {
        seed,
        expected_steps: cfg.steps,
        cell_count: state.cell_count(),
        roles: roles.clone(),
        initial_credit: vec![1; n],
        steps: Vec::with_capacity(cfg.steps),
    };
    let mut joint_actions = Vec::with_capacity(cfg.steps);
    let mut previous: Option<(Vec<Message>, Vec<Action>)> = None;

    for step in 1..=cfg.steps as u64 {
        let mut verdicts: Vec<VerdictRecord> = Vec::new();
        if let (Some(p), Some((msgs, actions))) = (&tom, &previous) {
            verdicts = step_trust_all(&mut trust, msgs, actions, &cfg.oracle, &p.consistency)?;
        }

        let graph = schedule.at(step);
        let payloads = transmit(&state, &strategies, radius, &mut comms_rng)?;
        let msgs = route(graph, &payloads, state.t())?;

        let mut joint = Vec::with_capacity(n);
        for spec in &cfg.agents {
            let own = state.observe(spec.id, radius)?;
            let action = match spec.policy {
                PolicyKind::SelfInterested(strategy) => {
                    adversary_act(&own, &payloads[spec.id.0], strategy, &cfg.oracle)
                }
                PolicyKind::GreedyCooperative | PolicyKind::SoftmaxCooperative { .. } => {
                    let inbox: Vec<Message> = msgs
                        .iter()
                        .filter(|m| m.receiver == spec.id)
                        .cloned()
                        .collect();
                    let retained = match (&tom, slot_of(spec.id)) {
                        (Some(p), Some(k)) => match p.gating {
                            GatingMode::Threshold => gate_messages(&trust[k], &inbox, p.tau),
                            GatingMode::Sampled => {
                                gate_messages_sampled(&trust[k], &inbox, &mut gating_rng)
                            }
                        },
                        _ => inbox,
                    };
                    let view: Observation = own.merged_with(retained.iter().map(|m| &m.payload));
                    match spec.policy {
                        PolicyKind::SoftmaxCooperative { temperature } => {
                            action_distribution(&view, temperature, &cfg.oracle)?
                                .sample(&mut policy_rng)
                        }
                        _ => greedy_action(&view, &cfg.oracle),
                    }
                }
            };
            joint.push(action);
        }

        let (next, rewards) = state.step(&joint)?;

        let observer_logs = observers
            .iter()
            .zip(&trust)
            .map(|(&o, ts)| {
                let received = graph.neighbors(o);
                let peers = received
                    .iter()
                    .map(|&peer| PeerLog {
                        peer,
                        belief: ts.beliefs()[peer.0],
                        verdict: verdicts
                            .iter()
                            .find(|v| v.observer == o && v.peer == peer)
                            .map(|v| v.verdict.kind),
                    })
                    .collect();
                ObserverLog {
                    observer: o,
                    confusion: classify_observer(ts, received, &roles, tau),
                    peers,
                }
            })
            .collect();
        log.steps.push(StepLog {
            step,
            covered_cells: next.covered_count(),
            rewards: rewards.rewards,
            observers: observer_logs,
        });

        previous = Some((msgs, joint.clone()));
        joint_actions.push(joint);
        state = next;
    }

    Ok(EpisodeRun {
        log,
        initial_state,
        final_state: state,
        joint_actions,
    })
}

/// Runs every seed of a scenario. Episodes are independent and may run in
/// parallel; results are kept in seed order.
pub fn run_scenario(cfg: &ScenarioConfig, exec: Execution) -> Result<RunArtifact, ScenarioError> {
    cfg.validate()?;
    let results = exec.map(
        &cfg.seeds,
        |&seed| -> Result<EpisodeRecord, ScenarioError> {
            let run = run_episode(cfg, seed)?;
            let summary = summarize(&run.log)?;
            Ok(EpisodeRecord {
                seed,
                log: run.log,
                summary,
            })
        },
    );
    let episodes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = RunSummary::from_episodes(cfg, &episodes);
    Ok(RunArtifact {
        config: cfg.clone(),
        episodes,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_config_str;

    fn small(mode: &str) -> ScenarioConfig {
        parse_config_str(&format!(
            "steps = 12\nepisodes = 3\n[grid]\nwidth = 6\nheight = 5\n[[scenario]]\nname = \"x\"\nmode = \"{mode}\"\n"
        ))
        .unwrap()
        .scenarios
        .remove(0)
    }

    #[test]
    fn episode_log_shape() {
        let cfg = small("tom");
        let run = run_episode(&cfg, 4).unwrap();
        assert_eq!(run.log.steps.len(), 12);
        assert_eq!(run.joint_actions.len(), 12);
        for s in &run.log.steps {
            assert_eq!(s.observers.len(), 3);
            for o in &s.observers {
                assert_eq!(o.peers.len(), 3);
                assert_eq!(o.confusion.total(), 3);
            }
        }
        // verdicts start with the second step
        assert!(run.log.steps[0]
            .observers
            .iter()
            .all(|o| o.peers.iter().all(|p| p.verdict.is_none())));
        assert!(run.log.steps[1]
            .observers
            .iter()
            .all(|o| o.peers.iter().all(|p| p.verdict.is_some())));
    }

    #[test]
    fn replaying_actions_reproduces_final_state() {
        let cfg = small("no_def");
        let run = run_episode(&cfg, 9).unwrap();
        let mut s = run.initial_state.clone();
        let mut gained = 0u64;
        for joint in &run.joint_actions {
            let (n, r) = s.step(joint).unwrap();
            assert!(n.covered_count() >= s.covered_count());
            gained += r.total();
            s = n;
        }
        assert_eq!(s, run.final_state);
        assert_eq!(
            gained as usize,
            s.covered_count() - run.initial_state.covered_count()
        );
    }

    #[test]
    fn scenario_is_deterministic_across_execution_modes() {
        let cfg = small("tom");
        let a = run_scenario(&cfg, Execution::Sequential).unwrap();
        let b = run_scenario(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.episodes.iter().map(|e| e.seed).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }
}
