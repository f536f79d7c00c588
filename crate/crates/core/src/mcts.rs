//! Decentralized neural MCTS.
//!
//! One tree per real decision point, keyed by the full hypothetical state.
//! Every expanded state stores, for each resource `i` separately, the prior
//! `P(i,s,·)`, value estimates `Q(i,s,·)` and visit counts `O(i,s,·)` over
//! that resource's own legal moves, so selection never touches the joint
//! action space. The attacker's move inside the tree is sampled from the
//! dynamics network.
//!
//! The first simulation of a decision expands the root and selects nothing,
//! so after `N` simulations each resource's root counts sum to `N - 1`.
//! Moves without visits score with the expanded state's value estimate
//! unless [`UnvisitedQ::Zero`] is chosen.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{self, GameError, GlobalState};
use crate::graph::{GameConfig, NodeId};
use crate::nets::{NetError, NetParams};

#[derive(Debug, Error, PartialEq)]
pub enum MctsError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("state has not been expanded")]
    Unexpanded,
    #[error("cannot search from a terminal state")]
    TerminalRoot,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Value assumed for a move before its first backup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnvisitedQ {
    /// Zero, the most pessimistic defender value.
    Zero,
    /// The value-network estimate of the state being expanded.
    #[default]
    Parent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_simulations: usize,
    pub c_puct: f64,
    /// Visit-count temperature; `0` selects the most visited move.
    pub temperature: f64,
    pub gamma: f64,
    #[serde(default)]
    pub unvisited_q: UnvisitedQ,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_simulations: 15,
            c_puct: 0.3,
            temperature: 1.0,
            gamma: 1.0,
            unvisited_q: UnvisitedQ::Parent,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), MctsError> {
        if self.n_simulations < 2 {
            return Err(MctsError::InvalidConfig(
                "n_simulations must be at least 2 (the first one only expands the root)".into(),
            ));
        }
        if !(self.c_puct.is_finite() && self.c_puct >= 0.0) {
            return Err(MctsError::InvalidConfig("c_puct must be finite and >= 0".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(MctsError::InvalidConfig("temperature must be finite and >= 0".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(MctsError::InvalidConfig("gamma must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Same search with greedy move selection.
    pub fn greedy(self) -> Self {
        SearchConfig {
            temperature: 0.0,
            ..self
        }
    }
}

/// Statistics of one expanded state.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    pub legal: Vec<Vec<NodeId>>,
    pub prior: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub visits: Vec<Vec<u32>>,
    pub attacker_legal: Vec<NodeId>,
    dynamics: Option<Vec<f64>>,
}

impl NodeStats {
    /// Builds fresh statistics from per-resource legal sets and priors.
    pub fn new(legal: Vec<Vec<NodeId>>, prior: Vec<Vec<f64>>, attacker_legal: Vec<NodeId>) -> Self {
        NodeStats::with_initial_q(legal, prior, attacker_legal, 0.0)
    }

    /// Fresh statistics whose unvisited moves carry value `q0`.
    pub fn with_initial_q(
        legal: Vec<Vec<NodeId>>,
        prior: Vec<Vec<f64>>,
        attacker_legal: Vec<NodeId>,
        q0: f64,
    ) -> Self {
        let q = legal.iter().map(|l| vec![q0; l.len()]).collect();
        let visits = legal.iter().map(|l| vec![0; l.len()]).collect();
        NodeStats {
            legal,
            prior,
            q,
            visits,
            attacker_legal,
            dynamics: None,
        }
    }

    pub fn total_visits(&self, resource: usize) -> u32 {
        self.visits[resource].iter().sum()
    }

    /// Running-average backup of return `ret` into `(resource, action index)`.
    pub fn backup(&mut self, resource: usize, action: usize, ret: f64) {
        let o = self.visits[resource][action] as f64;
        let q = &mut self.q[resource][action];
        *q = (o * *q + ret) / (o + 1.0);
        self.visits[resource][action] += 1;
    }
}

/// PUCT scores `Q + c * sqrt(Σ_b O_b) / (1 + O_a) * P_a` for one resource.
pub fn puct_scores(stats: &NodeStats, resource: usize, c_puct: f64) -> Vec<f64> {
    let total = stats.total_visits(resource) as f64;
    let sqrt_total = total.sqrt();
    stats.q[resource]
        .iter()
        .zip(&stats.visits[resource])
        .zip(&stats.prior[resource])
        .map(|((&q, &o), &p)| q + c_puct * sqrt_total / (1.0 + o as f64) * p)
        .collect()
}

/// Index of the highest-scoring move, ties broken uniformly.
pub fn puct_select_index<R: Rng + ?Sized>(stats: &NodeStats, resource: usize, c_puct: f64, rng: &mut R) -> usize {
    argmax_uniform_ties(&puct_scores(stats, resource, c_puct), rng)
}

pub(crate) fn argmax_uniform_ties<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> usize {
    let mut best = 0;
    let mut ties = 0u32;
    for (k, &s) in scores.iter().enumerate() {
        if k == 0 || s > scores[best] {
            best = k;
            ties = 1;
        } else if s == scores[best] {
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                best = k;
            }
        }
    }
    best
}

/// Draws an index with probability proportional to `weights`.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Transient search tree for one decision point.
#[derive(Debug, Default, Clone)]
pub struct SearchTree {
    index: HashMap<GlobalState, usize>,
    nodes: Vec<NodeStats>,
}

impl SearchTree {
    pub fn new() -> Self {
        SearchTree::default()
    }

    pub fn clear(&mut self) {
        self.index.clear();
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, state: &GlobalState) -> Option<&NodeStats> {
        self.index.get(state).map(|&i| &self.nodes[i])
    }

    pub fn states(&self) -> impl Iterator<Item = &GlobalState> {
        self.index.keys()
    }

    pub fn puct_select<R: Rng + ?Sized>(
        &self,
        state: &GlobalState,
        resource: usize,
        c_puct: f64,
        rng: &mut R,
    ) -> Result<NodeId, MctsError> {
        let stats = self.get(state).ok_or(MctsError::Unexpanded)?;
        Ok(stats.legal[resource][puct_select_index(stats, resource, c_puct, rng)])
    }

    /// Inserts an expanded state directly; used to stage trees in tests.
    pub fn insert(&mut self, state: GlobalState, stats: NodeStats) {
        let at = self.nodes.len();
        self.nodes.push(stats);
        self.index.insert(state, at);
    }

    fn expand(
        &mut self,
        config: &GameConfig,
        state: &GlobalState,
        nets: &NetParams,
        unvisited: UnvisitedQ,
    ) -> Result<f64, MctsError> {
        let legal = game::legal_defender_actions(config, state);
        let prior = legal
            .iter()
            .enumerate()
            .map(|(i, l)| nets.prior_forward(state, i, l))
            .collect::<Result<Vec<_>, _>>()?;
        let attacker_legal = game::legal_attacker_actions(config, state);
        let value = nets.value_forward(state)?;
        let q0 = match unvisited {
            UnvisitedQ::Zero => 0.0,
            UnvisitedQ::Parent => value,
        };
        self.insert(state.clone(), NodeStats::with_initial_q(legal, prior, attacker_legal, q0));
        Ok(value)
    }
}

/// One simulation from `state`; returns the searched defender return.
pub fn search<R: Rng + ?Sized>(
    tree: &mut SearchTree,
    config: &GameConfig,
    state: &GlobalState,
    nets: &NetParams,
    search_config: &SearchConfig,
    rng: &mut R,
) -> Result<f64, MctsError> {
    let outcome = game::evaluate(config, state);
    if outcome.terminal {
        return Ok(outcome.defender_reward);
    }
    let Some(&at) = tree.index.get(state) else {
        return tree.expand(config, state, nets, search_config.unvisited_q);
    };

    let node = &tree.nodes[at];
    let picks: Vec<usize> = (0..node.legal.len())
        .map(|i| puct_select_index(node, i, search_config.c_puct, rng))
        .collect();
    let joint: Vec<NodeId> = picks.iter().enumerate().map(|(i, &k)| node.legal[i][k]).collect();
    if node.dynamics.is_none() {
        let probs = nets.dynamics_forward(state, &node.attacker_legal)?;
        tree.nodes[at].dynamics = Some(probs);
    }
    let node = &tree.nodes[at];
    let probs = node.dynamics.as_ref().expect("dynamics cached");
    let opponent = node.attacker_legal[sample_index(probs, rng)];

    let (next, step_outcome) = game::step(config, state, &joint, opponent)?;
    let ret = if step_outcome.terminal {
        step_outcome.defender_reward
    } else {
        search_config.gamma * search(tree, config, &next, nets, search_config, rng)?
    };
    let node = &mut tree.nodes[at];
    for (i, &k) in picks.iter().enumerate() {
        node.backup(i, k, ret);
    }
    Ok(ret)
}

/// Policy `∝ O^(1/temperature)` over one resource's root counts; zero
/// temperature spreads mass evenly over the most visited moves.
pub fn visit_policy(visits: &[u32], temperature: f64) -> Vec<f64> {
    let max = visits.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return vec![1.0 / visits.len() as f64; visits.len()];
    }
    if temperature == 0.0 {
        let winners = visits.iter().filter(|&&o| o == max).count() as f64;
        return visits
            .iter()
            .map(|&o| if o == max { 1.0 / winners } else { 0.0 })
            .collect();
    }
    // scale by the max first so large counts and small temperatures stay finite
    let weights: Vec<f64> = visits
        .iter()
        .map(|&o| (o as f64 / max as f64).powf(1.0 / temperature))
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Outcome of one real decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub actions: Vec<NodeId>,
    pub legal: Vec<Vec<NodeId>>,
    pub policies: Vec<Vec<f64>>,
    pub visits: Vec<Vec<u32>>,
}

/// Clears the tree, runs `N` simulations from `state` and samples each
/// resource's move from its visit policy.
pub fn execute<R: Rng + ?Sized>(
    tree: &mut SearchTree,
    config: &GameConfig,
    state: &GlobalState,
    nets: &NetParams,
    search_config: &SearchConfig,
    rng: &mut R,
) -> Result<Decision, MctsError> {
    if game::evaluate(config, state).terminal {
        return Err(MctsError::TerminalRoot);
    }
    tree.clear();
    for _ in 0..search_config.n_simulations {
        search(tree, config, state, nets, search_config, rng)?;
    }
    let root = tree.get(state).ok_or(MctsError::Unexpanded)?;
    let policies: Vec<Vec<f64>> = root
        .visits
        .iter()
        .map(|v| visit_policy(v, search_config.temperature))
        .collect();
    let actions = policies
        .iter()
        .zip(&root.legal)
        .map(|(pi, legal)| legal[sample_index(pi, rng)])
        .collect();
    Ok(Decision {
        actions,
        legal: root.legal.clone(),
        policies,
        visits: root.visits.clone(),
    })
}
