//! Graph topology, seeded grid generation, game configuration files and
//! the path/reachability queries shared by the game, attackers and evaluator.
//!
//! Grids are generated with `ChaCha8Rng::seed_from_u64(seed)`. Candidate
//! edges are visited row-major; for every cell `(r, c)` the candidates are
//! drawn in the order right, down, down-right diagonal, down-left diagonal,
//! and every existing candidate consumes exactly one `f64` draw whatever its
//! probability. Node ids are `r * width + c`. Any implementation following
//! this order reproduces grid fixtures bit-exactly.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type NodeId = usize;

/// Default cap on the number of enumerated attack paths.
pub const DEFAULT_PATH_CAP: usize = 200_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("edge endpoint {node} out of range for {node_count} nodes")]
    NodeOutOfRange { node: NodeId, node_count: usize },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read game config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse game config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("node {0} is not an attacker start")]
    InvalidStart(NodeId),
    #[error("path budget {max_len} exceeds the horizon {horizon}")]
    BudgetExceedsHorizon { max_len: usize, horizon: usize },
    #[error("more than {cap} attack paths; use the shortest-path panel on instances this large")]
    CapExceeded { cap: usize },
}

/// Undirected simple graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    adjacency: Vec<Vec<NodeId>>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate edges are merged.
    pub fn from_edges(node_count: usize, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let mut sets = vec![BTreeSet::new(); node_count];
        for &(u, v) in edges {
            for node in [u, v] {
                if node >= node_count {
                    return Err(GraphError::NodeOutOfRange { node, node_count });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            sets[u].insert(v);
            sets[v].insert(u);
        }
        Ok(Graph {
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency
            .get(u)
            .is_some_and(|n| n.binary_search(&v).is_ok())
    }

    /// Edges as `(u, v)` pairs with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (u, ns) in self.adjacency.iter().enumerate() {
            out.extend(ns.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Lattice shape of a generated grid; ids are row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
}

impl GridShape {
    pub fn node(&self, row: usize, col: usize) -> NodeId {
        row * self.width + col
    }

    pub fn coords(&self, node: NodeId) -> (usize, usize) {
        (node / self.width, node % self.width)
    }

    pub fn center(&self) -> NodeId {
        self.node(self.height / 2, self.width / 2)
    }

    pub fn is_boundary(&self, node: NodeId) -> bool {
        let (r, c) = self.coords(node);
        r == 0 || c == 0 || r + 1 == self.height || c + 1 == self.width
    }
}

/// Random grid: lattice edges kept with probability `p_edge`, diagonals
/// with `p_diag`.
pub fn generate_grid(width: usize, height: usize, p_edge: f64, p_diag: f64, seed: u64) -> Graph {
    let shape = GridShape { width, height };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut draw = |keep: f64, a: NodeId, b: NodeId, edges: &mut Vec<(NodeId, NodeId)>| {
        if rng.random::<f64>() < keep {
            edges.push((a, b));
        }
    };
    for r in 0..height {
        for c in 0..width {
            let here = shape.node(r, c);
            if c + 1 < width {
                draw(p_edge, here, shape.node(r, c + 1), &mut edges);
            }
            if r + 1 < height {
                draw(p_edge, here, shape.node(r + 1, c), &mut edges);
                if c + 1 < width {
                    draw(p_diag, here, shape.node(r + 1, c + 1), &mut edges);
                }
                if c > 0 {
                    draw(p_diag, here, shape.node(r + 1, c - 1), &mut edges);
                }
            }
        }
    }
    Graph::from_edges(width * height, &edges).expect("lattice edges are valid")
}

/// Multi-source BFS hop distances; `None` marks unreachable nodes.
pub fn bfs_distances(graph: &Graph, sources: &[NodeId]) -> Vec<Option<usize>> {
    let mut dist = vec![None; graph.node_count()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s].is_none() {
            dist[s] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes have distances");
        for &v in graph.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Validated game instance: graph plus attacker starts, targets,
/// defender starts and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    graph: Graph,
    attacker_starts: Vec<NodeId>,
    targets: Vec<NodeId>,
    is_target: Vec<bool>,
    defender_starts: Vec<NodeId>,
    horizon: usize,
    grid: Option<GridShape>,
}

/// On-disk JSON form of a [`GameConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfigFile {
    pub node_count: usize,
    pub edges: Vec<[NodeId; 2]>,
    pub attacker_starts: Vec<NodeId>,
    pub targets: Vec<NodeId>,
    pub defender_starts: Vec<NodeId>,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridShape>,
}

impl GameConfig {
    pub fn new(
        graph: Graph,
        attacker_starts: Vec<NodeId>,
        targets: Vec<NodeId>,
        defender_starts: Vec<NodeId>,
        horizon: usize,
        grid: Option<GridShape>,
    ) -> Result<Self, ConfigError> {
        let n = graph.node_count();
        let check_range = |field: &'static str, ids: &[NodeId]| {
            match ids.iter().find(|&&v| v >= n) {
                Some(v) => Err(ConfigError::invalid(
                    field,
                    format!("node id {v} out of range for {n} nodes"),
                )),
                None => Ok(()),
            }
        };
        check_range("attacker_starts", &attacker_starts)?;
        check_range("targets", &targets)?;
        check_range("defender_starts", &defender_starts)?;
        if attacker_starts.is_empty() {
            return Err(ConfigError::invalid("attacker_starts", "must be nonempty"));
        }
        if targets.is_empty() {
            return Err(ConfigError::invalid("targets", "must be nonempty"));
        }
        if defender_starts.is_empty() {
            return Err(ConfigError::invalid("defender_starts", "need at least one resource"));
        }
        if horizon == 0 {
            return Err(ConfigError::invalid("horizon", "must be at least 1"));
        }
        let targets: Vec<NodeId> = targets.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut is_target = vec![false; n];
        for &t in &targets {
            is_target[t] = true;
        }
        if let Some(&s) = attacker_starts.iter().find(|&&s| is_target[s]) {
            return Err(ConfigError::invalid(
                "attacker_starts",
                format!("start {s} is also a target"),
            ));
        }
        if let Some(&d) = defender_starts.iter().find(|d| attacker_starts.contains(d)) {
            return Err(ConfigError::invalid(
                "defender_starts",
                format!("resource start {d} coincides with an attacker start"),
            ));
        }
        if let Some(g) = grid {
            if g.width * g.height != n {
                return Err(ConfigError::invalid(
                    "grid",
                    format!("{}x{} does not match {n} nodes", g.width, g.height),
                ));
            }
        }
        Ok(GameConfig {
            graph,
            attacker_starts,
            targets,
            is_target,
            defender_starts,
            horizon,
            grid,
        })
    }

    pub fn from_file_form(file: GameConfigFile) -> Result<Self, ConfigError> {
        let edges: Vec<(NodeId, NodeId)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        let graph = Graph::from_edges(file.node_count, &edges)
            .map_err(|e| ConfigError::invalid("edges", e.to_string()))?;
        GameConfig::new(
            graph,
            file.attacker_starts,
            file.targets,
            file.defender_starts,
            file.horizon,
            file.grid,
        )
    }

    pub fn to_file_form(&self) -> GameConfigFile {
        GameConfigFile {
            node_count: self.graph.node_count(),
            edges: self.graph.edges().into_iter().map(|(u, v)| [u, v]).collect(),
            attacker_starts: self.attacker_starts.clone(),
            targets: self.targets.clone(),
            defender_starts: self.defender_starts.clone(),
            horizon: self.horizon,
            grid: self.grid,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        GameConfig::from_file_form(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_form()).expect("config serializes")
    }

    /// Hex SHA-256 of the compact canonical JSON form; ties checkpoints to a game.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(&self.to_file_form()).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn attacker_starts(&self) -> &[NodeId] {
        &self.attacker_starts
    }

    /// Targets, sorted ascending.
    pub fn targets(&self) -> &[NodeId] {
        &self.targets
    }

    pub fn is_target(&self, node: NodeId) -> bool {
        self.is_target[node]
    }

    pub fn defender_starts(&self) -> &[NodeId] {
        &self.defender_starts
    }

    /// Number of defender resources.
    pub fn resources(&self) -> usize {
        self.defender_starts.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn grid(&self) -> Option<GridShape> {
        self.grid
    }

    /// Targets whose hop distance from `start` is within the horizon.
    pub fn reachable_targets(&self, start: NodeId) -> Vec<NodeId> {
        let dist = bfs_distances(&self.graph, &[start]);
        self.targets
            .iter()
            .copied()
            .filter(|&t| dist[t].is_some_and(|d| d <= self.horizon))
            .collect()
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<GameConfig, ConfigError> {
    let text = fs::read_to_string(path)?;
    GameConfig::from_json(&text)
}

pub fn save_config(config: &GameConfig, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut text = config.to_json();
    text.push('\n');
    fs::write(path, text)
}

/// All walks from `start` of at most `max_len` moves that end at their first
/// target visit, in lexicographic order of node sequence.
pub fn enumerate_attack_paths(
    config: &GameConfig,
    start: NodeId,
    max_len: usize,
    cap: usize,
) -> Result<Vec<Vec<NodeId>>, PathError> {
    if !config.attacker_starts().contains(&start) {
        return Err(PathError::InvalidStart(start));
    }
    if max_len > config.horizon() {
        return Err(PathError::BudgetExceedsHorizon {
            max_len,
            horizon: config.horizon(),
        });
    }
    // Prune walks that can no longer reach any target in the remaining budget.
    let to_target = bfs_distances(config.graph(), config.targets());
    let mut out = Vec::new();
    let mut walk = vec![start];
    extend_walks(config, &to_target, max_len, cap, &mut walk, &mut out)?;
    Ok(out)
}

fn extend_walks(
    config: &GameConfig,
    to_target: &[Option<usize>],
    max_len: usize,
    cap: usize,
    walk: &mut Vec<NodeId>,
    out: &mut Vec<Vec<NodeId>>,
) -> Result<(), PathError> {
    let here = *walk.last().expect("walks are nonempty");
    let remaining = max_len + 1 - walk.len();
    for &next in config.graph().neighbors(here) {
        if !to_target[next].is_some_and(|d| d < remaining) {
            continue;
        }
        walk.push(next);
        if config.is_target(next) {
            if out.len() == cap {
                return Err(PathError::CapExceeded { cap });
            }
            out.push(walk.clone());
        } else {
            extend_walks(config, to_target, max_len, cap, walk, out)?;
        }
        walk.pop();
    }
    Ok(())
}

/// Every shortest path from `start` to each target reachable within the
/// horizon, truncated at the first target visited, deduplicated and sorted.
pub fn shortest_attack_paths(
    config: &GameConfig,
    start: NodeId,
    cap: usize,
) -> Result<Vec<Vec<NodeId>>, PathError> {
    if !config.attacker_starts().contains(&start) {
        return Err(PathError::InvalidStart(start));
    }
    let graph = config.graph();
    let from_start = bfs_distances(graph, &[start]);
    let mut paths = BTreeSet::new();
    for &target in config.targets() {
        let Some(len) = from_start[target] else { continue };
        if len > config.horizon() {
            continue;
        }
        let to_here = bfs_distances(graph, &[target]);
        let mut stack = vec![vec![start]];
        while let Some(path) = stack.pop() {
            let last = *path.last().expect("nonempty");
            if last == target || (path.len() > 1 && config.is_target(last)) {
                paths.insert(path);
                if paths.len() > cap {
                    return Err(PathError::CapExceeded { cap });
                }
                continue;
            }
            let d = to_here[last].expect("on a shortest path");
            for &next in graph.neighbors(last) {
                if to_here[next] == Some(d - 1) {
                    let mut p = path.clone();
                    p.push(next);
                    stack.push(p);
                }
            }
        }
    }
    Ok(paths.into_iter().collect())
}

/// Parameters of a generated square-grid game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridScenario {
    pub size: usize,
    pub p_edge: f64,
    pub p_diag: f64,
    pub targets: usize,
    pub resources: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl GridScenario {
    /// The 7x7 setting: sparse lattice, 10 boundary targets, 4 resources.
    pub fn seven_by_seven(seed: u64) -> Self {
        GridScenario {
            size: 7,
            p_edge: 0.5,
            p_diag: 0.1,
            targets: 10,
            resources: 4,
            horizon: 7,
            seed,
        }
    }
}

/// Builds a grid game: the attacker starts at the center, targets are
/// random boundary nodes and resources take the nearest free nodes ring by
/// ring around the attacker, spread by angle within a ring.
///
/// The grid uses `seed` directly; target draws use `derive_seed(seed, 1)`.
pub fn grid_scenario(s: &GridScenario) -> Result<GameConfig, ConfigError> {
    if s.size == 0 {
        return Err(ConfigError::invalid("size", "must be at least 1"));
    }
    let shape = GridShape {
        width: s.size,
        height: s.size,
    };
    let graph = generate_grid(s.size, s.size, s.p_edge, s.p_diag, s.seed);
    let center = shape.center();
    let boundary: Vec<NodeId> = (0..s.size * s.size)
        .filter(|&v| shape.is_boundary(v) && v != center)
        .collect();
    if s.targets > boundary.len() {
        return Err(ConfigError::invalid(
            "targets",
            format!("{} requested but the grid has only {} boundary nodes", s.targets, boundary.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(s.seed, 1));
    let targets: Vec<NodeId> = rand::seq::index::sample(&mut rng, boundary.len(), s.targets)
        .iter()
        .map(|k| boundary[k])
        .collect();

    // rings by graph distance, then lattice distance for disconnected nodes
    let dist = bfs_distances(&graph, &[center]);
    let (cr, cc) = shape.coords(center);
    let lattice = |v: NodeId| {
        let (r, c) = shape.coords(v);
        r.abs_diff(cr).max(c.abs_diff(cc))
    };
    let angle = |v: NodeId| {
        let (r, c) = shape.coords(v);
        (r as f64 - cr as f64).atan2(c as f64 - cc as f64)
    };
    let ring_key = |v: NodeId| match dist[v] {
        Some(d) => (0, d),
        None => (1, lattice(v)),
    };
    let mut free: Vec<NodeId> = (0..s.size * s.size)
        .filter(|&v| v != center && !targets.contains(&v))
        .collect();
    if s.resources > free.len() {
        return Err(ConfigError::invalid(
            "resources",
            format!("{} requested but only {} free nodes", s.resources, free.len()),
        ));
    }
    free.sort_by(|&a, &b| ring_key(a).cmp(&ring_key(b)).then(angle(a).total_cmp(&angle(b))).then(a.cmp(&b)));
    let mut defenders = Vec::with_capacity(s.resources);
    let mut at = 0;
    while defenders.len() < s.resources {
        let key = ring_key(free[at]);
        let end = at + free[at..].iter().take_while(|&&v| ring_key(v) == key).count();
        let ring = &free[at..end];
        let need = s.resources - defenders.len();
        if ring.len() <= need {
            defenders.extend_from_slice(ring);
        } else {
            defenders.extend((0..need).map(|j| ring[j * ring.len() / need]));
        }
        at = end;
    }
    defenders.sort_unstable();
    GameConfig::new(graph, vec![center], targets, defenders, s.horizon, Some(shape))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, &edges).unwrap()
    }

    fn config_on(graph: Graph, starts: Vec<NodeId>, targets: Vec<NodeId>, defenders: Vec<NodeId>, horizon: usize) -> GameConfig {
        GameConfig::new(graph, starts, targets, defenders, horizon, None).unwrap()
    }

    #[test]
    fn scenario_placement() {
        let cfg = grid_scenario(&GridScenario {
            size: 7,
            p_edge: 0.5,
            p_diag: 0.1,
            targets: 10,
            resources: 4,
            horizon: 7,
            seed: 1,
        })
        .unwrap();
        assert_eq!(cfg.attacker_starts(), &[24]);
        assert_eq!(cfg.targets().len(), 10);
        let shape = cfg.grid().unwrap();
        assert!(cfg.targets().iter().all(|&t| shape.is_boundary(t)));
        assert_eq!(cfg.defender_starts().len(), 4);
        let again = grid_scenario(&GridScenario::seven_by_seven(1)).unwrap();
        assert_eq!(cfg.to_json(), again.to_json());
        let tiny = GridScenario {
            size: 2,
            targets: 5,
            ..GridScenario::seven_by_seven(0)
        };
        let err = grid_scenario(&tiny).unwrap_err();
        assert!(err.to_string().contains("targets"), "{err}");
    }

    #[test]
    fn full_two_by_two_grid() {
        let g = generate_grid(2, 2, 1.0, 0.0, 7);
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edges(), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn empty_grid_and_single_node() {
        let g = generate_grid(3, 3, 0.0, 0.0, 3);
        assert_eq!(g.node_count(), 9);
        assert_eq!(g.edge_count(), 0);
        let one = generate_grid(1, 1, 1.0, 1.0, 0);
        assert_eq!(one.node_count(), 1);
        assert_eq!(one.edge_count(), 0);
    }

    #[test]
    fn seeded_seven_by_seven_regression() {
        let g = generate_grid(7, 7, 0.5, 0.1, 42);
        let count = g.edge_count();
        assert!((20..=115).contains(&count), "{count}");
        // frozen from the first run of the seeded generator
        assert_eq!(count, SEED42_EDGE_COUNT);
        assert_eq!(g, generate_grid(7, 7, 0.5, 0.1, 42));
    }

    const SEED42_EDGE_COUNT: usize = 48;

    #[test]
    fn graph_rejects_bad_edges() {
        assert_eq!(Graph::from_edges(2, &[(1, 1)]), Err(GraphError::SelfLoop(1)));
        assert_eq!(
            Graph::from_edges(2, &[(0, 2)]),
            Err(GraphError::NodeOutOfRange { node: 2, node_count: 2 })
        );
    }

    #[test]
    fn bfs_examples() {
        let g = path_graph(3);
        assert_eq!(bfs_distances(&g, &[0]), vec![Some(0), Some(1), Some(2)]);
        assert_eq!(bfs_distances(&g, &[0, 2]), vec![Some(0), Some(1), Some(0)]);
        let with_isolated = Graph::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(bfs_distances(&with_isolated, &[0])[3], None);
    }

    #[test]
    fn path_graph_attack_paths() {
        let cfg = config_on(path_graph(3), vec![0], vec![2], vec![1], 2);
        assert_eq!(enumerate_attack_paths(&cfg, 0, 2, 100).unwrap(), vec![vec![0, 1, 2]]);
        assert!(enumerate_attack_paths(&cfg, 0, 1, 100).unwrap().is_empty());
        assert_eq!(enumerate_attack_paths(&cfg, 1, 2, 100), Err(PathError::InvalidStart(1)));
        assert!(matches!(
            enumerate_attack_paths(&cfg, 0, 3, 100),
            Err(PathError::BudgetExceedsHorizon { .. })
        ));
    }

    #[test]
    fn path_cap_is_enforced() {
        let g = generate_grid(3, 3, 1.0, 0.0, 0);
        let cfg = config_on(g, vec![4], vec![0], vec![8], 6);
        let all = enumerate_attack_paths(&cfg, 4, 6, DEFAULT_PATH_CAP).unwrap();
        assert!(all.len() > 3);
        assert_eq!(
            enumerate_attack_paths(&cfg, 4, 6, 3),
            Err(PathError::CapExceeded { cap: 3 })
        );
        assert_eq!(enumerate_attack_paths(&cfg, 4, 6, all.len()).unwrap(), all);
    }

    #[test]
    fn shortest_paths_on_full_grid() {
        let g = generate_grid(3, 3, 1.0, 0.0, 0);
        let cfg = config_on(g, vec![0], vec![8], vec![4], 4);
        let paths = shortest_attack_paths(&cfg, 0, 100).unwrap();
        assert_eq!(paths.len(), 6);
        assert!(paths.iter().all(|p| p.len() == 5 && p[4] == 8));
    }

    #[test]
    fn shortest_paths_truncate_at_intermediate_target() {
        let cfg = config_on(path_graph(4), vec![0], vec![2, 3], vec![1], 3);
        assert_eq!(shortest_attack_paths(&cfg, 0, 100).unwrap(), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn config_json_round_trip() {
        let text = r#"{"node_count": 4, "edges": [[0,1],[2,3]], "attacker_starts": [0],
            "targets": [3], "defender_starts": [2], "horizon": 3}"#;
        let cfg = GameConfig::from_json(text).unwrap();
        assert_eq!(cfg.graph().edges(), vec![(0, 1), (2, 3)]);
        assert_eq!(cfg.attacker_starts(), &[0]);
        assert_eq!(cfg.targets(), &[3]);
        assert_eq!(cfg.defender_starts(), &[2]);
        assert_eq!(cfg.horizon(), 3);
        assert_eq!(GameConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn config_errors_name_the_field() {
        let bad_target = r#"{"node_count": 4, "edges": [[0,1]], "attacker_starts": [0],
            "targets": [4], "defender_starts": [2], "horizon": 3}"#;
        let err = GameConfig::from_json(bad_target).unwrap_err().to_string();
        assert!(err.contains("targets"), "{err}");

        let no_horizon = r#"{"node_count": 4, "edges": [[0,1]], "attacker_starts": [0],
            "targets": [3], "defender_starts": [2]}"#;
        let err = GameConfig::from_json(no_horizon).unwrap_err().to_string();
        assert!(err.contains("horizon"), "{err}");

        let self_loop = r#"{"node_count": 4, "edges": [[1,1]], "attacker_starts": [0],
            "targets": [3], "defender_starts": [2], "horizon": 3}"#;
        let err = GameConfig::from_json(self_loop).unwrap_err().to_string();
        assert!(err.contains("edges"), "{err}");
    }

    #[test]
    fn digest_tracks_content() {
        let a = config_on(path_graph(3), vec![0], vec![2], vec![1], 2);
        let b = config_on(path_graph(3), vec![0], vec![2], vec![1], 3);
        assert_eq!(a.digest(), a.clone().digest());
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
