//! Attacker behavior models.
//!
//! The adaptive training opponent picks a high-level target each episode and
//! then walks a sampled path to it. Target choice mixes a windowed bandit
//! (argmax of recent attacker reward per target, with unvisited targets tried
//! first) and an averager that replays the bandit's historical choices.

use std::collections::VecDeque;

use rand::seq::IndexedRandom;
use rand::Rng;
use thiserror::Error;

use crate::game::GlobalState;
use crate::graph::{bfs_distances, GameConfig, Graph, NodeId};
use crate::mcts::argmax_uniform_ties;
use crate::SimRng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttackerError {
    #[error("target {target} is unreachable from {start} within {budget} steps")]
    Unreachable {
        start: NodeId,
        target: NodeId,
        budget: usize,
    },
    #[error("scripted path exhausted")]
    PathExhausted,
    #[error("no target is reachable from start {0}")]
    NoReachableTarget(NodeId),
    #[error("attacker is at {actual} but its plan expected {expected}")]
    OffPlan { expected: NodeId, actual: NodeId },
    #[error("attacker has no active plan")]
    NoPlan,
}

/// Sliding window of the latest `(target, attacker reward)` plays.
#[derive(Debug, Clone, PartialEq)]
pub struct MabState {
    window: VecDeque<(NodeId, f64)>,
    capacity: usize,
}

impl MabState {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window size must be positive");
        MabState {
            window: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &(NodeId, f64)> {
        self.window.iter()
    }

    pub fn record(&mut self, target: NodeId, attacker_reward: f64) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back((target, attacker_reward));
    }

    /// Mean attacker reward of the window entries for `target`.
    pub fn value(&self, target: NodeId) -> Option<f64> {
        let (sum, n) = self
            .window
            .iter()
            .filter(|(z, _)| *z == target)
            .fold((0.0, 0usize), |(s, n), (_, r)| (s + r, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Best target by window value; unvisited targets come first.
    pub fn select<R: Rng + ?Sized>(&self, targets: &[NodeId], rng: &mut R) -> NodeId {
        assert!(!targets.is_empty(), "bandit needs at least one target");
        let scores: Vec<f64> = targets
            .iter()
            .map(|&z| self.value(z).unwrap_or(f64::INFINITY))
            .collect();
        targets[argmax_uniform_ties(&scores, rng)]
    }
}

/// Counts of the bandit's historical target choices.
#[derive(Debug, Clone, PartialEq)]
pub struct AvgerState {
    targets: Vec<NodeId>,
    counts: Vec<u64>,
}

impl AvgerState {
    pub fn new(targets: &[NodeId]) -> Self {
        AvgerState {
            targets: targets.to_vec(),
            counts: vec![0; targets.len()],
        }
    }

    pub fn targets(&self) -> &[NodeId] {
        &self.targets
    }

    pub fn count(&self, target: NodeId) -> u64 {
        self.targets
            .iter()
            .position(|&z| z == target)
            .map_or(0, |k| self.counts[k])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn record(&mut self, target: NodeId) {
        match self.targets.iter().position(|&z| z == target) {
            Some(k) => self.counts[k] += 1,
            None => {
                self.targets.push(target);
                self.counts.push(1);
            }
        }
    }

    /// Samples a target with probability `count / total`; uniform when empty.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeId {
        self.select_among(&self.targets, rng)
    }

    /// Like [`AvgerState::select`] restricted to `allowed`.
    pub fn select_among<R: Rng + ?Sized>(&self, allowed: &[NodeId], rng: &mut R) -> NodeId {
        assert!(!allowed.is_empty(), "averager needs at least one target");
        let weights: Vec<f64> = allowed.iter().map(|&z| self.count(z) as f64).collect();
        if weights.iter().all(|&w| w == 0.0) {
            return *allowed.choose(rng).expect("nonempty");
        }
        allowed[crate::mcts::sample_index(&weights, rng)]
    }
}

/// With probability `eta` asks the bandit (recording its pick into the
/// averager), otherwise samples the averager. Returns the target and whether
/// the bandit branch fired.
pub fn mixture_select<R: Rng + ?Sized>(
    mab: &MabState,
    avger: &mut AvgerState,
    eta: f64,
    targets: &[NodeId],
    rng: &mut R,
) -> (NodeId, bool) {
    if rng.random::<f64>() < eta {
        let z = mab.select(targets, rng);
        avger.record(z);
        (z, true)
    } else {
        (avger.select_among(targets, rng), false)
    }
}

/// Random walk from `start` to `target` that only steps to neighbors from
/// which the target stays reachable within the remaining budget.
pub fn sample_path<R: Rng + ?Sized>(
    graph: &Graph,
    start: NodeId,
    target: NodeId,
    budget: usize,
    rng: &mut R,
) -> Result<Vec<NodeId>, AttackerError> {
    let dist = bfs_distances(graph, &[target]);
    let unreachable = AttackerError::Unreachable { start, target, budget };
    match dist[start] {
        Some(d) if d <= budget => {}
        _ => return Err(unreachable),
    }
    let mut path = vec![start];
    let mut here = start;
    let mut remaining = budget;
    while here != target {
        let feasible: Vec<NodeId> = graph
            .neighbors(here)
            .iter()
            .copied()
            .filter(|&n| dist[n].is_some_and(|d| d < remaining))
            .collect();
        here = *feasible.choose(rng).expect("a feasible neighbor exists while dist <= remaining");
        path.push(here);
        remaining -= 1;
    }
    Ok(path)
}

/// A fixed route the attacker follows one node per step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackerPlan {
    pub target: NodeId,
    pub path: Vec<NodeId>,
    pub cursor: usize,
}

impl AttackerPlan {
    pub fn new(path: Vec<NodeId>) -> Self {
        AttackerPlan {
            target: *path.last().expect("path is nonempty"),
            path,
            cursor: 0,
        }
    }

    pub fn current(&self) -> NodeId {
        self.path[self.cursor]
    }

    pub fn scripted_step(&mut self) -> Result<NodeId, AttackerError> {
        if self.cursor + 1 >= self.path.len() {
            return Err(AttackerError::PathExhausted);
        }
        self.cursor += 1;
        Ok(self.path[self.cursor])
    }
}

/// An attacker that plays whole episodes.
pub trait AttackerPolicy {
    /// Chooses the start node for a new episode.
    fn begin_episode(&mut self, config: &GameConfig, rng: &mut SimRng) -> Result<NodeId, AttackerError>;

    /// Next node given the current state.
    fn next_move(&mut self, config: &GameConfig, state: &GlobalState, rng: &mut SimRng) -> Result<NodeId, AttackerError>;

    /// Feedback with the defender's terminal reward.
    fn end_episode(&mut self, _defender_reward: f64) {}

    /// Target of the current episode, if the policy plans one.
    fn current_target(&self) -> Option<NodeId> {
        None
    }
}

fn follow_plan(plan: &mut Option<AttackerPlan>, state: &GlobalState) -> Result<NodeId, AttackerError> {
    let plan = plan.as_mut().ok_or(AttackerError::NoPlan)?;
    let actual = state.attacker_node();
    if plan.current() != actual {
        return Err(AttackerError::OffPlan {
            expected: plan.current(),
            actual,
        });
    }
    plan.scripted_step()
}

/// Follows one fixed path every episode.
#[derive(Debug, Clone)]
pub struct PathAttacker {
    path: Vec<NodeId>,
    plan: Option<AttackerPlan>,
}

impl PathAttacker {
    pub fn new(path: Vec<NodeId>) -> Self {
        assert!(path.len() >= 2, "a scripted path needs at least one move");
        PathAttacker { path, plan: None }
    }
}

impl AttackerPolicy for PathAttacker {
    fn begin_episode(&mut self, _config: &GameConfig, _rng: &mut SimRng) -> Result<NodeId, AttackerError> {
        self.plan = Some(AttackerPlan::new(self.path.clone()));
        Ok(self.path[0])
    }

    fn next_move(&mut self, _config: &GameConfig, state: &GlobalState, _rng: &mut SimRng) -> Result<NodeId, AttackerError> {
        follow_plan(&mut self.plan, state)
    }

    fn current_target(&self) -> Option<NodeId> {
        self.plan.as_ref().map(|p| p.target)
    }
}

fn random_start(config: &GameConfig, rng: &mut SimRng) -> (NodeId, Vec<NodeId>) {
    let start = *config.attacker_starts().choose(rng).expect("config has starts");
    (start, config.reachable_targets(start))
}

/// Uniformly random reachable target, then a sampled path to it.
#[derive(Debug, Clone, Default)]
pub struct UniformAttacker {
    plan: Option<AttackerPlan>,
}

impl UniformAttacker {
    pub fn new() -> Self {
        UniformAttacker::default()
    }
}

impl AttackerPolicy for UniformAttacker {
    fn begin_episode(&mut self, config: &GameConfig, rng: &mut SimRng) -> Result<NodeId, AttackerError> {
        let (start, targets) = random_start(config, rng);
        let target = *targets.choose(rng).ok_or(AttackerError::NoReachableTarget(start))?;
        let path = sample_path(config.graph(), start, target, config.horizon(), rng)?;
        self.plan = Some(AttackerPlan::new(path));
        Ok(start)
    }

    fn next_move(&mut self, _config: &GameConfig, state: &GlobalState, _rng: &mut SimRng) -> Result<NodeId, AttackerError> {
        follow_plan(&mut self.plan, state)
    }

    fn current_target(&self) -> Option<NodeId> {
        self.plan.as_ref().map(|p| p.target)
    }
}

/// Bandit/averager mixture over targets; the training opponent.
#[derive(Debug, Clone)]
pub struct AdaptiveAttacker {
    pub mab: MabState,
    pub avger: AvgerState,
    pub eta: f64,
    plan: Option<AttackerPlan>,
    last_used_mab: bool,
}

impl AdaptiveAttacker {
    pub fn new(config: &GameConfig, window: usize, eta: f64) -> Self {
        AdaptiveAttacker {
            mab: MabState::new(window),
            avger: AvgerState::new(config.targets()),
            eta,
            plan: None,
            last_used_mab: false,
        }
    }

    pub fn last_used_mab(&self) -> bool {
        self.last_used_mab
    }
}

impl AttackerPolicy for AdaptiveAttacker {
    fn begin_episode(&mut self, config: &GameConfig, rng: &mut SimRng) -> Result<NodeId, AttackerError> {
        let (start, targets) = random_start(config, rng);
        if targets.is_empty() {
            return Err(AttackerError::NoReachableTarget(start));
        }
        let (target, used_mab) = mixture_select(&self.mab, &mut self.avger, self.eta, &targets, rng);
        self.last_used_mab = used_mab;
        let path = sample_path(config.graph(), start, target, config.horizon(), rng)?;
        self.plan = Some(AttackerPlan::new(path));
        Ok(start)
    }

    fn next_move(&mut self, _config: &GameConfig, state: &GlobalState, _rng: &mut SimRng) -> Result<NodeId, AttackerError> {
        follow_plan(&mut self.plan, state)
    }

    fn end_episode(&mut self, defender_reward: f64) {
        if let Some(plan) = &self.plan {
            self.mab.record(plan.target, -defender_reward);
        }
    }

    fn current_target(&self) -> Option<NodeId> {
        self.plan.as_ref().map(|p| p.target)
    }
}
