//! Grid-world coverage environment.
//!
//! Agents move on a `width x height` grid. A cell becomes covered as soon as
//! an agent occupies it, and each agent is rewarded with the number of cells
//! it newly covered during the step. Transitions are deterministic; the only
//! randomness is the seeded initial placement done by [`reset`].

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{episode_rng, Stream};

/// Largest supported observation radius (the window must fit in 128 cells).
pub const MAX_RADIUS: usize = 5;

/// Index of an agent in the roster. Ids are dense: `0..agent_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Cell coordinate. `x` grows to the right, `y` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Pos) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Movement action. The derived order `Up < Down < Left < Right < Stay` is the
/// tie-break order used by every policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    /// All actions in tie-break order.
    pub const ALL: [Action; 5] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Stay => "stay",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} actions, got {got}")]
    ActionCountMismatch { expected: usize, got: usize },
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
}

/// Grid geometry plus one optional fixed start cell per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvConfig {
    pub width: usize,
    pub height: usize,
    pub starts: Vec<Option<Pos>>,
}

impl EnvConfig {
    pub fn agent_count(&self) -> usize {
        self.starts.len()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.width < 2 || self.height < 2 {
            return Err(EnvError::InvalidConfig(format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if self.starts.len() < 2 {
            return Err(EnvError::InvalidConfig(format!(
                "at least 2 agents required, got {}",
                self.starts.len()
            )));
        }
        if self.starts.len() > self.width * self.height {
            return Err(EnvError::InvalidConfig(format!(
                "{} agents do not fit on {} cells",
                self.starts.len(),
                self.width * self.height
            )));
        }
        let mut taken = vec![false; self.width * self.height];
        for (i, start) in self.starts.iter().enumerate() {
            let Some(p) = start else { continue };
            if p.x >= self.width || p.y >= self.height {
                return Err(EnvError::InvalidConfig(format!(
                    "agent {i} start {p} is outside the grid"
                )));
            }
            let idx = p.y * self.width + p.x;
            if taken[idx] {
                return Err(EnvError::InvalidConfig(format!(
                    "agent {i} start {p} overlaps another fixed start"
                )));
            }
            taken[idx] = true;
        }
        Ok(())
    }
}

/// Full environment state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridState {
    width: usize,
    height: usize,
    covered: Vec<bool>,
    positions: Vec<Pos>,
    t: u64,
}

/// Cells newly covered by each agent during one step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RewardRecord {
    pub rewards: Vec<u32>,
}

impl RewardRecord {
    pub fn total(&self) -> u64 {
        self.rewards.iter().map(|&r| u64::from(r)).sum()
    }
}

/// Places agents and covers their start cells. Fixed starts are honored; the
/// remaining agents are placed uniformly at random (seeded) on free cells.
pub fn reset(config: &EnvConfig, seed: u64) -> Result<GridState, EnvError> {
    config.validate()?;
    let cells = config.width * config.height;
    let mut free: Vec<usize> = (0..cells).collect();
    for p in config.starts.iter().flatten() {
        let idx = p.y * config.width + p.x;
        free.retain(|&c| c != idx);
    }

    let mut rng = episode_rng(seed, Stream::Placement);
    let mut positions = Vec::with_capacity(config.starts.len());
    for start in &config.starts {
        let pos = match start {
            Some(p) => *p,
            None => {
                let k = rng.random_range(0..free.len());
                let idx = free.swap_remove(k);
                Pos::new(idx % config.width, idx / config.width)
            }
        };
        positions.push(pos);
    }

    let mut covered = vec![false; cells];
    for p in &positions {
        covered[p.y * config.width + p.x] = true;
    }
    Ok(GridState {
        width: config.width,
        height: config.height,
        covered,
        positions,
        t: 0,
    })
}

impl GridState {
    /// Builds a state directly. Used by tests and replay tooling.
    pub fn from_parts(
        width: usize,
        height: usize,
        covered: Vec<bool>,
        positions: Vec<Pos>,
        t: u64,
    ) -> Result<Self, EnvError> {
        if covered.len() != width * height {
            return Err(EnvError::InvalidConfig(format!(
                "coverage map has {} cells, expected {}",
                covered.len(),
                width * height
            )));
        }
        if let Some(p) = positions.iter().find(|p| p.x >= width || p.y >= height) {
            return Err(EnvError::InvalidConfig(format!(
                "position {p} is outside the grid"
            )));
        }
        Ok(Self {
            width,
            height,
            covered,
            positions,
            t,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn agent_count(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Pos] {
        &self.positions
    }

    pub fn position(&self, agent: AgentId) -> Result<Pos, EnvError> {
        self.positions
            .get(agent.0)
            .copied()
            .ok_or(EnvError::UnknownAgent(agent))
    }

    pub fn covered_map(&self) -> &[bool] {
        &self.covered
    }

    pub fn is_covered(&self, p: Pos) -> bool {
        self.covered[p.y * self.width + p.x]
    }

    pub fn covered_count(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    /// Cell reached from `from` by `dx, dy`, or `None` when it leaves the grid.
    pub fn offset(&self, from: Pos, dx: i64, dy: i64) -> Option<Pos> {
        let x = from.x as i64 + dx;
        let y = from.y as i64 + dy;
        (x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height)
            .then(|| Pos::new(x as usize, y as usize))
    }

    /// Applies one joint action. Off-grid moves resolve to `Stay`; agents may
    /// share cells. When several agents enter the same uncovered cell the
    /// lowest id gets the reward.
    pub fn step(&self, joint_action: &[Action]) -> Result<(GridState, RewardRecord), EnvError> {
        if joint_action.len() != self.positions.len() {
            return Err(EnvError::ActionCountMismatch {
                expected: self.positions.len(),
                got: joint_action.len(),
            });
        }
        let mut next = self.clone();
        let mut rewards = vec![0u32; self.positions.len()];
        for (i, &a) in joint_action.iter().enumerate() {
            let (dx, dy) = a.delta();
            let dest = self
                .offset(self.positions[i], dx, dy)
                .unwrap_or(self.positions[i]);
            next.positions[i] = dest;
            let idx = dest.y * self.width + dest.x;
            if !next.covered[idx] {
                next.covered[idx] = true;
                rewards[i] = 1;
            }
        }
        next.t += 1;
        Ok((next, RewardRecord { rewards }))
    }

    /// Truthful local view of `agent` with window radius `radius`.
    pub fn observe(&self, agent: AgentId, radius: usize) -> Result<Observation, EnvError> {
        let center = self.position(agent)?;
        if radius > MAX_RADIUS {
            return Err(EnvError::InvalidConfig(format!(
                "observation radius {radius} exceeds {MAX_RADIUS}"
            )));
        }
        let side = 2 * radius + 1;
        let r = radius as i64;
        let mut local_map = Vec::with_capacity(side * side);
        for dy in -r..=r {
            for dx in -r..=r {
                local_map.push(match self.offset(center, dx, dy) {
                    None => CellView::OutOfBounds,
                    Some(p) if self.is_covered(p) => CellView::Covered,
                    Some(_) => CellView::Uncovered,
                });
            }
        }
        Ok(Observation {
            agent_id: agent,
            position: center,
            radius,
            grid_width: self.width,
            grid_height: self.height,
            local_map,
            t: self.t,
        })
    }
}

/// Fraction of covered cells.
pub fn coverage_fraction(state: &GridState) -> f64 {
    state.covered_count() as f64 / state.cell_count() as f64
}

/// One cell of an observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellView {
    Covered,
    Uncovered,
    OutOfBounds,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed observation: {0}")]
pub struct ObservationError(pub String);

/// A square `(2r+1) x (2r+1)` window of coverage flags centered on the
/// agent's (claimed) position, row-major from the top-left corner.
///
/// Observations may be falsified before transmission, so the only invariants
/// enforced here are structural: the window has the right size, the position
/// lies on the grid and cells are marked out-of-bounds exactly where the
/// window leaves the grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    agent_id: AgentId,
    position: Pos,
    radius: usize,
    grid_width: usize,
    grid_height: usize,
    local_map: Vec<CellView>,
    t: u64,
}

impl Observation {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        agent_id: AgentId,
        position: Pos,
        radius: usize,
        grid_width: usize,
        grid_height: usize,
        local_map: Vec<CellView>,
        t: u64,
    ) -> Result<Self, ObservationError> {
        if radius > MAX_RADIUS {
            return Err(ObservationError(format!(
                "radius {radius} exceeds {MAX_RADIUS}"
            )));
        }
        let side = 2 * radius + 1;
        if local_map.len() != side * side {
            return Err(ObservationError(format!(
                "window has {} cells, radius {radius} needs {}",
                local_map.len(),
                side * side
            )));
        }
        if position.x >= grid_width || position.y >= grid_height {
            return Err(ObservationError(format!(
                "position {position} is outside a {grid_width}x{grid_height} grid"
            )));
        }
        let obs = Self {
            agent_id,
            position,
            radius,
            grid_width,
            grid_height,
            local_map,
            t,
        };
        for (k, cell) in obs.local_map.iter().enumerate() {
            let (dx, dy) = obs.offset_of(k);
            let on_grid = obs.absolute(dx, dy).is_some();
            if on_grid == (*cell == CellView::OutOfBounds) {
                return Err(ObservationError(format!(
                    "cell ({dx}, {dy}) has wrong out-of-bounds marking"
                )));
            }
        }
        Ok(obs)
    }

    pub fn agent_id(&self) -> AgentId {
        self.agent_id
    }

    pub fn position(&self) -> Pos {
        self.position
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn grid_size(&self) -> (usize, usize) {
        (self.grid_width, self.grid_height)
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn local_map(&self) -> &[CellView] {
        &self.local_map
    }

    /// Window cell at offset `(dx, dy)` from the center, `None` outside the window.
    pub fn cell(&self, dx: i64, dy: i64) -> Option<CellView> {
        let r = self.radius as i64;
        if dx.abs() > r || dy.abs() > r {
            return None;
        }
        let side = self.side() as i64;
        Some(self.local_map[((dy + r) * side + dx + r) as usize])
    }

    /// Offset from the center of the `k`-th window cell.
    pub fn offset_of(&self, k: usize) -> (i64, i64) {
        let side = self.side();
        let r = self.radius as i64;
        ((k % side) as i64 - r, (k / side) as i64 - r)
    }

    /// Grid cell at offset `(dx, dy)` from the claimed position, if on the grid.
    pub fn absolute(&self, dx: i64, dy: i64) -> Option<Pos> {
        let x = self.position.x as i64 + dx;
        let y = self.position.y as i64 + dy;
        (x >= 0 && y >= 0 && (x as usize) < self.grid_width && (y as usize) < self.grid_height)
            .then(|| Pos::new(x as usize, y as usize))
    }

    /// What this window claims about grid cell `p`, if `p` lies inside it.
    pub fn claim_about(&self, p: Pos) -> Option<CellView> {
        let dx = p.x as i64 - self.position.x as i64;
        let dy = p.y as i64 - self.position.y as i64;
        self.cell(dx, dy)
    }

    pub fn uncovered_count(&self) -> usize {
        self.local_map
            .iter()
            .filter(|&&c| c == CellView::Uncovered)
            .count()
    }

    /// Same observation with a replaced window. The new window must keep the
    /// out-of-bounds layout.
    pub fn with_local_map(&self, local_map: Vec<CellView>) -> Result<Self, ObservationError> {
        Self::new(
            self.agent_id,
            self.position,
            self.radius,
            self.grid_width,
            self.grid_height,
            local_map,
            self.t,
        )
    }

    /// Overlays the claims of other observations onto this window: a cell is
    /// reported covered if this window or any of `others` says it is covered.
    pub fn merged_with<'a>(
        &self,
        others: impl IntoIterator<Item = &'a Observation>,
    ) -> Observation {
        let others: Vec<&Observation> = others.into_iter().collect();
        let mut merged = self.clone();
        if others.is_empty() {
            return merged;
        }
        for k in 0..merged.local_map.len() {
            if merged.local_map[k] != CellView::Uncovered {
                continue;
            }
            let (dx, dy) = merged.offset_of(k);
            let Some(p) = merged.absolute(dx, dy) else {
                continue;
            };
            if others
                .iter()
                .any(|o| o.claim_about(p) == Some(CellView::Covered))
            {
                merged.local_map[k] = CellView::Covered;
            }
        }
        merged
    }
}
