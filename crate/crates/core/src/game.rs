//! Game dynamics: joint state, legal moves, the simultaneous-move
//! transition and end-game reward.
//!
//! Terminal checks run in a fixed order on the state after a move: capture
//! (the attacker shares a node with any resource), then target arrival, then
//! the horizon. Reaching the horizon counts as a capture.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GameConfig, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agent {
    Attacker,
    Resource(usize),
}

impl std::fmt::Display for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Agent::Attacker => write!(f, "attacker"),
            Agent::Resource(i) => write!(f, "resource {i}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error("node {0} is not an attacker start")]
    InvalidStart(NodeId),
    #[error("illegal move by {agent}: {from} -> {to}")]
    IllegalMove { agent: Agent, from: NodeId, to: NodeId },
    #[error("expected {expected} resource actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("state is already terminal")]
    Terminal,
}

/// Attacker's visited-node sequence, resource locations and timestep.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlobalState {
    pub attacker_seq: Vec<NodeId>,
    pub resource_locs: Vec<NodeId>,
    pub t: usize,
}

impl GlobalState {
    pub fn attacker_node(&self) -> NodeId {
        *self.attacker_seq.last().expect("attacker sequence is nonempty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub terminal: bool,
    /// 1 for capture or timeout, 0 for a reached target or a running game.
    pub defender_reward: f64,
}

impl Outcome {
    pub const RUNNING: Outcome = Outcome {
        terminal: false,
        defender_reward: 0.0,
    };

    pub fn attacker_reward(&self) -> f64 {
        -self.defender_reward
    }
}

pub fn initial_state(config: &GameConfig, attacker_start: NodeId) -> Result<GlobalState, GameError> {
    if !config.attacker_starts().contains(&attacker_start) {
        return Err(GameError::InvalidStart(attacker_start));
    }
    Ok(GlobalState {
        attacker_seq: vec![attacker_start],
        resource_locs: config.defender_starts().to_vec(),
        t: 0,
    })
}

/// Moves available to resource `i`: its neighbors plus staying put, sorted.
pub fn resource_actions(config: &GameConfig, location: NodeId) -> Vec<NodeId> {
    let ns = config.graph().neighbors(location);
    let mut out = Vec::with_capacity(ns.len() + 1);
    let split = ns.partition_point(|&v| v < location);
    out.extend_from_slice(&ns[..split]);
    out.push(location);
    out.extend_from_slice(&ns[split..]);
    out
}

pub fn legal_defender_actions(config: &GameConfig, state: &GlobalState) -> Vec<Vec<NodeId>> {
    state
        .resource_locs
        .iter()
        .map(|&loc| resource_actions(config, loc))
        .collect()
}

/// Neighbors of the attacker's node; a stuck attacker can only stay.
pub fn legal_attacker_actions(config: &GameConfig, state: &GlobalState) -> Vec<NodeId> {
    let here = state.attacker_node();
    let ns = config.graph().neighbors(here);
    if ns.is_empty() {
        vec![here]
    } else {
        ns.to_vec()
    }
}

/// Terminal status of a state reached by a transition.
pub fn evaluate(config: &GameConfig, state: &GlobalState) -> Outcome {
    let here = state.attacker_node();
    if state.resource_locs.contains(&here) {
        Outcome {
            terminal: true,
            defender_reward: 1.0,
        }
    } else if config.is_target(here) {
        Outcome {
            terminal: true,
            defender_reward: 0.0,
        }
    } else if state.t >= config.horizon() {
        Outcome {
            terminal: true,
            defender_reward: 1.0,
        }
    } else {
        Outcome::RUNNING
    }
}

pub fn step(
    config: &GameConfig,
    state: &GlobalState,
    defender_action: &[NodeId],
    attacker_action: NodeId,
) -> Result<(GlobalState, Outcome), GameError> {
    if evaluate(config, state).terminal {
        return Err(GameError::Terminal);
    }
    if defender_action.len() != state.resource_locs.len() {
        return Err(GameError::ActionCount {
            expected: state.resource_locs.len(),
            got: defender_action.len(),
        });
    }
    let graph = config.graph();
    for (i, (&from, &to)) in state.resource_locs.iter().zip(defender_action).enumerate() {
        if from != to && !graph.has_edge(from, to) {
            return Err(GameError::IllegalMove {
                agent: Agent::Resource(i),
                from,
                to,
            });
        }
    }
    let from = state.attacker_node();
    let attacker_ok = if graph.neighbors(from).is_empty() {
        attacker_action == from
    } else {
        graph.has_edge(from, attacker_action)
    };
    if !attacker_ok {
        return Err(GameError::IllegalMove {
            agent: Agent::Attacker,
            from,
            to: attacker_action,
        });
    }
    let mut attacker_seq = Vec::with_capacity(state.attacker_seq.len() + 1);
    attacker_seq.extend_from_slice(&state.attacker_seq);
    attacker_seq.push(attacker_action);
    let next = GlobalState {
        attacker_seq,
        resource_locs: defender_action.to_vec(),
        t: state.t + 1,
    };
    let outcome = evaluate(config, &next);
    Ok((next, outcome))
}
