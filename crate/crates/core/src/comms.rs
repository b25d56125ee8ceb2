//! Communication channel: topology, per-step observation broadcast and the
//! scripted falsification strategies used by self-interested agents.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{AgentId, CellView, EnvError, GridState, Observation, Pos};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommsError {
    #[error("edge ({0}, {1}) has no reverse edge")]
    Asymmetric(AgentId, AgentId),
    #[error("self edge on agent {0}")]
    SelfEdge(AgentId),
    #[error("edge references agent {0} but only {1} agents exist")]
    UnknownAgent(AgentId, usize),
    #[error("graph covers {graph} agents but the state has {state}")]
    SizeMismatch { graph: usize, state: usize },
    #[error("{0} strategies given for {1} agents")]
    StrategyCountMismatch(usize, usize),
    #[error("graph schedule is empty")]
    EmptySchedule,
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Undirected communication graph without self loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n: usize,
    neighbors: Vec<Vec<AgentId>>,
}

impl CommGraph {
    pub fn complete(n: usize) -> Self {
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(AgentId).collect())
            .collect();
        Self { n, neighbors }
    }

    /// Builds a graph from directed edges, which must come in reverse pairs.
    pub fn from_directed_edges(
        n: usize,
        edges: impl IntoIterator<Item = (AgentId, AgentId)>,
    ) -> Result<Self, CommsError> {
        let set: BTreeSet<(AgentId, AgentId)> = edges.into_iter().collect();
        for &(i, j) in &set {
            for a in [i, j] {
                if a.0 >= n {
                    return Err(CommsError::UnknownAgent(a, n));
                }
            }
            if i == j {
                return Err(CommsError::SelfEdge(i));
            }
            if !set.contains(&(j, i)) {
                return Err(CommsError::Asymmetric(i, j));
            }
        }
        Ok(Self::from_set(n, &set))
    }

    /// Builds a graph from undirected edges, adding both directions.
    pub fn from_undirected_edges(
        n: usize,
        edges: impl IntoIterator<Item = (AgentId, AgentId)>,
    ) -> Result<Self, CommsError> {
        Self::from_directed_edges(n, edges.into_iter().flat_map(|(i, j)| [(i, j), (j, i)]))
    }

    fn from_set(n: usize, set: &BTreeSet<(AgentId, AgentId)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in set {
            neighbors[i.0].push(j);
        }
        Self { n, neighbors }
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, agent: AgentId) -> &[AgentId] {
        &self.neighbors[agent.0]
    }

    pub fn has_edge(&self, i: AgentId, j: AgentId) -> bool {
        self.neighbors[i.0].contains(&j)
    }

    pub fn directed_edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Directed edges in `(sender, receiver)` order.
    pub fn directed_edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().map(move |&j| (AgentId(i), j)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.directed_edges().all(|(i, j)| self.has_edge(j, i))
    }
}

/// Topology per step. Step `t` (1-based) uses `graphs[(t - 1) % len]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSchedule {
    graphs: Vec<CommGraph>,
}

impl GraphSchedule {
    pub fn fixed(graph: CommGraph) -> Self {
        Self {
            graphs: vec![graph],
        }
    }

    pub fn cycle(graphs: Vec<CommGraph>) -> Result<Self, CommsError> {
        if graphs.is_empty() {
            return Err(CommsError::EmptySchedule);
        }
        Ok(Self { graphs })
    }

    pub fn at(&self, step: u64) -> &CommGraph {
        let k = (step.max(1) - 1) as usize % self.graphs.len();
        &self.graphs[k]
    }

    pub fn graphs(&self) -> &[CommGraph] {
        &self.graphs
    }
}

/// One observation sent over a directed edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub payload: Observation,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FalsificationStrategy {
    #[default]
    Truthful,
    /// Report every uncovered cell as covered.
    Lure,
    /// Claim a far-away position.
    PositionSpoof,
    /// Fair-coin coverage flags.
    Babble,
}

/// Number of candidate cells a spoofer samples before picking the farthest.
pub const SPOOF_CANDIDATES: usize = 8;

pub fn falsify<R: Rng + ?Sized>(
    obs: &Observation,
    strategy: FalsificationStrategy,
    rng: &mut R,
) -> Observation {
    match strategy {
        FalsificationStrategy::Truthful => obs.clone(),
        FalsificationStrategy::Lure => {
            let map = obs
                .local_map()
                .iter()
                .map(|&c| match c {
                    CellView::Uncovered => CellView::Covered,
                    other => other,
                })
                .collect();
            obs.with_local_map(map).expect("same layout")
        }
        FalsificationStrategy::Babble => {
            let map = obs
                .local_map()
                .iter()
                .map(|&c| match c {
                    CellView::OutOfBounds => CellView::OutOfBounds,
                    _ if rng.random::<bool>() => CellView::Covered,
                    _ => CellView::Uncovered,
                })
                .collect();
            obs.with_local_map(map).expect("same layout")
        }
        FalsificationStrategy::PositionSpoof => spoof_position(obs, rng),
    }
}

fn spoof_position<R: Rng + ?Sized>(obs: &Observation, rng: &mut R) -> Observation {
    let (w, h) = obs.grid_size();
    let truth = obs.position();
    let mut fake = truth;
    let mut best = None;
    for _ in 0..SPOOF_CANDIDATES {
        let c = Pos::new(rng.random_range(0..w), rng.random_range(0..h));
        let d = c.manhattan(truth);
        if best.is_none_or(|b| d > b) {
            best = Some(d);
            fake = c;
        }
    }
    let r = obs.radius() as i64;
    let mut map = Vec::with_capacity(obs.local_map().len());
    for dy in -r..=r {
        for dx in -r..=r {
            let x = fake.x as i64 + dx;
            let y = fake.y as i64 + dy;
            if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
                map.push(CellView::OutOfBounds);
                continue;
            }
            let known = obs.claim_about(Pos::new(x as usize, y as usize));
            map.push(known.unwrap_or(CellView::Covered));
        }
    }
    Observation::new(obs.agent_id(), fake, obs.radius(), w, h, map, obs.t()).expect("valid spoof")
}

/// Each agent's transmitted observation this step, indexed by agent id.
pub fn transmit<R: Rng + ?Sized>(
    state: &GridState,
    strategies: &[FalsificationStrategy],
    radius: usize,
    rng: &mut R,
) -> Result<Vec<Observation>, CommsError> {
    if strategies.len() != state.agent_count() {
        return Err(CommsError::StrategyCountMismatch(
            strategies.len(),
            state.agent_count(),
        ));
    }
    strategies
        .iter()
        .enumerate()
        .map(|(i, &s)| Ok(falsify(&state.observe(AgentId(i), radius)?, s, rng)))
        .collect()
}

/// Routes transmitted payloads along every directed edge.
pub fn route(
    graph: &CommGraph,
    payloads: &[Observation],
    t: u64,
) -> Result<Vec<Message>, CommsError> {
    if graph.agent_count() != payloads.len() {
        return Err(CommsError::SizeMismatch {
            graph: graph.agent_count(),
            state: payloads.len(),
        });
    }
    if let Some((i, j)) = graph.directed_edges().find(|&(i, j)| !graph.has_edge(j, i)) {
        return Err(CommsError::Asymmetric(i, j));
    }
    Ok(graph
        .directed_edges()
        .map(|(sender, receiver)| Message {
            sender,
            receiver,
            payload: payloads[sender.0].clone(),
            t,
        })
        .collect())
}

/// One message per directed edge; each sender falsifies once per step and
/// sends the same payload to all its neighbors.
pub fn broadcast<R: Rng + ?Sized>(
    state: &GridState,
    graph: &CommGraph,
    strategies: &[FalsificationStrategy],
    radius: usize,
    rng: &mut R,
) -> Result<Vec<Message>, CommsError> {
    let payloads = transmit(state, strategies, radius, rng)?;
    route(graph, &payloads, state.t())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{reset, EnvConfig};
    use crate::rng::{episode_rng, Stream};

    fn state() -> GridState {
        reset(
            &EnvConfig {
                width: 6,
                height: 6,
                starts: vec![
                    Some(Pos::new(0, 0)),
                    Some(Pos::new(2, 2)),
                    Some(Pos::new(5, 5)),
                    Some(Pos::new(3, 2)),
                ],
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn complete_graph_message_count() {
        let s = state();
        let g = CommGraph::complete(4);
        let mut rng = episode_rng(0, Stream::Comms);
        let msgs = broadcast(&s, &g, &[FalsificationStrategy::Truthful; 4], 2, &mut rng).unwrap();
        assert_eq!(msgs.len(), 12);
        for m in &msgs {
            assert_eq!(m.payload, s.observe(m.sender, 2).unwrap());
            assert_eq!(m.payload.agent_id(), m.sender);
            assert_eq!(m.payload.t(), m.t);
        }
    }

    #[test]
    fn asymmetric_edges_rejected() {
        let err = CommGraph::from_directed_edges(3, [(AgentId(0), AgentId(1))]).unwrap_err();
        assert_eq!(err, CommsError::Asymmetric(AgentId(0), AgentId(1)));
        assert!(CommGraph::from_undirected_edges(3, [(AgentId(1), AgentId(1))]).is_err());
        assert!(CommGraph::from_undirected_edges(3, [(AgentId(1), AgentId(3))]).is_err());
        let g = CommGraph::from_undirected_edges(3, [(AgentId(0), AgentId(2))]).unwrap();
        assert_eq!(g.directed_edge_count(), 2);
        assert!(g.neighbors(AgentId(1)).is_empty());
    }

    #[test]
    fn lure_reports_uncovered_as_covered() {
        let s = state();
        let truth = s.observe(AgentId(1), 1).unwrap();
        // (2,2) window: (3,2) covered by agent 3, center covered, 7 uncovered
        assert_eq!(truth.uncovered_count(), 7);
        let mut rng = episode_rng(0, Stream::Comms);
        let lie = falsify(&truth, FalsificationStrategy::Lure, &mut rng);
        assert_eq!(lie.uncovered_count(), 0);
        assert_eq!(lie.position(), truth.position());
        for (a, b) in truth.local_map().iter().zip(lie.local_map()) {
            match a {
                CellView::Uncovered => assert_eq!(*b, CellView::Covered),
                other => assert_eq!(b, other),
            }
        }
    }

    #[test]
    fn lure_on_three_uncovered_cells() {
        let mut covered = vec![true; 9];
        covered[0] = false;
        covered[2] = false;
        covered[7] = false;
        let s =
            GridState::from_parts(3, 3, covered, vec![Pos::new(1, 1), Pos::new(0, 1)], 0).unwrap();
        let truth = s.observe(AgentId(0), 1).unwrap();
        assert_eq!(truth.uncovered_count(), 3);
        let lie = falsify(
            &truth,
            FalsificationStrategy::Lure,
            &mut episode_rng(0, Stream::Comms),
        );
        assert!(lie.local_map().iter().all(|&c| c == CellView::Covered));
    }

    #[test]
    fn truthful_is_identity() {
        let s = state();
        let o = s.observe(AgentId(2), 2).unwrap();
        let mut rng = episode_rng(9, Stream::Comms);
        assert_eq!(falsify(&o, FalsificationStrategy::Truthful, &mut rng), o);
    }

    #[test]
    fn babble_is_seed_reproducible_and_keeps_geometry() {
        let s = state();
        let o = s.observe(AgentId(0), 2).unwrap();
        let a = falsify(
            &o,
            FalsificationStrategy::Babble,
            &mut episode_rng(5, Stream::Comms),
        );
        let b = falsify(
            &o,
            FalsificationStrategy::Babble,
            &mut episode_rng(5, Stream::Comms),
        );
        assert_eq!(a, b);
        assert_eq!(a.position(), o.position());
        for (x, y) in o.local_map().iter().zip(a.local_map()) {
            assert_eq!(*x == CellView::OutOfBounds, *y == CellView::OutOfBounds);
        }
    }

    #[test]
    fn position_spoof_moves_away_and_hides_unknown_cells() {
        let s = state();
        let truth = s.observe(AgentId(0), 1).unwrap();
        let mut rng = episode_rng(11, Stream::Comms);
        let spoof = falsify(&truth, FalsificationStrategy::PositionSpoof, &mut rng);
        assert!(spoof.position().manhattan(truth.position()) > 0);
        for k in 0..spoof.local_map().len() {
            let (dx, dy) = spoof.offset_of(k);
            let Some(p) = spoof.absolute(dx, dy) else {
                continue;
            };
            let expected = truth.claim_about(p).unwrap_or(CellView::Covered);
            assert_eq!(spoof.local_map()[k], expected);
        }
    }

    #[test]
    fn schedule_cycles_by_step() {
        let a = CommGraph::complete(3);
        let b = CommGraph::from_undirected_edges(3, [(AgentId(0), AgentId(1))]).unwrap();
        let s = GraphSchedule::cycle(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(s.at(1), &a);
        assert_eq!(s.at(2), &b);
        assert_eq!(s.at(3), &a);
        assert!(GraphSchedule::cycle(vec![]).is_err());
    }
}
