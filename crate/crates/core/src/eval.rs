//! Match play and worst-case evaluation of defender policies.
//!
//! The best-response attacker is found by brute force: every walk from every
//! start that ends at its first target within the horizon is played as a
//! scripted attacker, and the lowest mean defender reward wins. On maps where
//! that set is too large, the shortest-path panel restricts the attacker to
//! shortest routes, which gives an optimistic (upper) estimate.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::attacker::{AttackerError, AttackerPolicy, PathAttacker};
use crate::game::{self, GameError, GlobalState};
use crate::graph::{bfs_distances, enumerate_attack_paths, shortest_attack_paths, GameConfig, NodeId, PathError};
use crate::mcts::{self, MctsError, SearchConfig, SearchTree};
use crate::nets::NetParams;
use crate::{derive_seed, seeded_rng, SimRng};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Search(#[from] MctsError),
    #[error(transparent)]
    Attacker(#[from] AttackerError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Paths(#[from] PathError),
    #[error("at least one episode is required")]
    NoEpisodes,
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("report: {0}")]
    Report(#[from] csv::Error),
    #[error("report: {0}")]
    Io(#[from] std::io::Error),
}

/// A defender that picks one joint move per step.
pub trait DefenderPolicy {
    fn begin_episode(&mut self) {}

    fn act(&mut self, config: &GameConfig, state: &GlobalState, rng: &mut SimRng) -> Result<Vec<NodeId>, EvalError>;
}

/// Neural MCTS defender; evaluation plays it greedily.
#[derive(Debug, Clone)]
pub struct MctsDefender<'a> {
    nets: &'a NetParams,
    search: SearchConfig,
    tree: SearchTree,
}

impl<'a> MctsDefender<'a> {
    pub fn new(nets: &'a NetParams, search: SearchConfig) -> Self {
        MctsDefender {
            nets,
            search,
            tree: SearchTree::new(),
        }
    }

    /// Zero-temperature variant used for evaluation.
    pub fn greedy(nets: &'a NetParams, search: SearchConfig) -> Self {
        MctsDefender::new(nets, search.greedy())
    }
}

impl DefenderPolicy for MctsDefender<'_> {
    fn act(&mut self, config: &GameConfig, state: &GlobalState, rng: &mut SimRng) -> Result<Vec<NodeId>, EvalError> {
        let decision = mcts::execute(&mut self.tree, config, state, self.nets, &self.search, rng)?;
        Ok(decision.actions)
    }
}

/// Resources never move.
#[derive(Debug, Clone, Copy, Default)]
pub struct StationaryDefender;

impl DefenderPolicy for StationaryDefender {
    fn act(&mut self, _config: &GameConfig, state: &GlobalState, _rng: &mut SimRng) -> Result<Vec<NodeId>, EvalError> {
        Ok(state.resource_locs.clone())
    }
}

/// Every resource takes one shortest-path step toward the attacker's
/// current node, preferring the smallest node id.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChaseDefender;

impl DefenderPolicy for ChaseDefender {
    fn act(&mut self, config: &GameConfig, state: &GlobalState, _rng: &mut SimRng) -> Result<Vec<NodeId>, EvalError> {
        let dist = bfs_distances(config.graph(), &[state.attacker_node()]);
        Ok(state
            .resource_locs
            .iter()
            .map(|&loc| {
                game::resource_actions(config, loc)
                    .into_iter()
                    .min_by_key(|&n| (dist[n].unwrap_or(usize::MAX), n))
                    .unwrap_or(loc)
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub defender_reward: f64,
    pub length: usize,
    pub attacker_path: Vec<NodeId>,
}

/// Plays one full episode; the defender draws from `rng` before the attacker
/// at every step.
pub fn play_episode<D: DefenderPolicy + ?Sized, A: AttackerPolicy + ?Sized>(
    config: &GameConfig,
    defender: &mut D,
    attacker: &mut A,
    rng: &mut SimRng,
) -> Result<EpisodeResult, EvalError> {
    let start = attacker.begin_episode(config, rng)?;
    defender.begin_episode();
    let mut state = game::initial_state(config, start)?;
    loop {
        let joint = defender.act(config, &state, rng)?;
        let opponent = attacker.next_move(config, &state, rng)?;
        let (next, outcome) = game::step(config, &state, &joint, opponent)?;
        state = next;
        if outcome.terminal {
            attacker.end_episode(outcome.defender_reward);
            return Ok(EpisodeResult {
                defender_reward: outcome.defender_reward,
                length: state.t,
                attacker_path: state.attacker_seq,
            });
        }
    }
}

/// Sample mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchStats {
    pub mean: f64,
    pub half_width: f64,
    pub episodes: usize,
}

impl MatchStats {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

pub const Z_95: f64 = 1.96;

pub fn mean_ci(values: &[f64]) -> Result<MatchStats, EvalError> {
    if values.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(MatchStats {
        mean,
        half_width: Z_95 * (var / n).sqrt(),
        episodes: values.len(),
    })
}

pub fn play_matches<D: DefenderPolicy + ?Sized, A: AttackerPolicy + ?Sized>(
    config: &GameConfig,
    defender: &mut D,
    attacker: &mut A,
    episodes: usize,
    rng: &mut SimRng,
) -> Result<MatchStats, EvalError> {
    if episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let rewards = (0..episodes)
        .map(|_| play_episode(config, defender, attacker, rng).map(|r| r.defender_reward))
        .collect::<Result<Vec<_>, _>>()?;
    mean_ci(&rewards)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub episodes_per_path: usize,
    pub path_cap: usize,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            episodes_per_path: 20,
            path_cap: crate::graph::DEFAULT_PATH_CAP,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathValue {
    pub path: Vec<NodeId>,
    pub stats: MatchStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    /// Lowest mean defender reward; 1 when no target can be reached at all.
    pub value: f64,
    pub argmin: Option<usize>,
    pub paths: Vec<PathValue>,
}

impl WorstCase {
    pub fn argmin_path(&self) -> Option<&[NodeId]> {
        self.argmin.map(|k| self.paths[k].path.as_slice())
    }

    pub fn total_episodes(&self) -> usize {
        self.paths.iter().map(|p| p.stats.episodes).sum()
    }
}

/// Scores each path against a fresh clone of `defender`. Path `k` always
/// uses the stream `derive_seed(seed, k)`, so results do not depend on the
/// thread count.
pub fn evaluate_paths<D: DefenderPolicy + Clone + Send + Sync>(
    config: &GameConfig,
    defender: &D,
    paths: Vec<Vec<NodeId>>,
    seed: u64,
    options: &EvalOptions,
) -> Result<WorstCase, EvalError> {
    if options.episodes_per_path == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let score = |(k, path): (usize, Vec<NodeId>)| -> Result<PathValue, EvalError> {
        let mut rng = seeded_rng(derive_seed(seed, k as u64));
        let mut d = defender.clone();
        let mut a = PathAttacker::new(path.clone());
        let stats = play_matches(config, &mut d, &mut a, options.episodes_per_path, &mut rng)?;
        Ok(PathValue { path, stats })
    };
    let indexed: Vec<(usize, Vec<NodeId>)> = paths.into_iter().enumerate().collect();
    let scored: Vec<PathValue> = if options.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| EvalError::ThreadPool(e.to_string()))?;
        pool.install(|| indexed.into_par_iter().map(score).collect::<Result<_, _>>())?
    } else {
        indexed.into_iter().map(score).collect::<Result<_, _>>()?
    };
    let argmin = scored
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.stats.mean.total_cmp(&b.1.stats.mean))
        .map(|(k, _)| k);
    Ok(WorstCase {
        value: argmin.map_or(1.0, |k| scored[k].stats.mean),
        argmin,
        paths: scored,
    })
}

/// All target-terminated walks from every start, in start then
/// lexicographic order.
pub fn all_attack_paths(config: &GameConfig, cap: usize) -> Result<Vec<Vec<NodeId>>, PathError> {
    let mut out = Vec::new();
    for &start in config.attacker_starts() {
        let remaining = cap.saturating_sub(out.len());
        let paths = enumerate_attack_paths(config, start, config.horizon(), remaining)
            .map_err(|_| PathError::CapExceeded { cap })?;
        out.extend(paths);
    }
    Ok(out)
}

pub fn all_shortest_paths(config: &GameConfig, cap: usize) -> Result<Vec<Vec<NodeId>>, PathError> {
    let mut out = Vec::new();
    for &start in config.attacker_starts() {
        let remaining = cap.saturating_sub(out.len());
        let paths = shortest_attack_paths(config, start, remaining).map_err(|_| PathError::CapExceeded { cap })?;
        out.extend(paths);
    }
    Ok(out)
}

/// Worst case over every enumerated attack walk.
pub fn best_response_value<D: DefenderPolicy + Clone + Send + Sync>(
    config: &GameConfig,
    defender: &D,
    seed: u64,
    options: &EvalOptions,
) -> Result<WorstCase, EvalError> {
    let paths = all_attack_paths(config, options.path_cap)?;
    evaluate_paths(config, defender, paths, seed, options)
}

/// Worst case over the shortest routes to each target.
pub fn shortest_path_panel<D: DefenderPolicy + Clone + Send + Sync>(
    config: &GameConfig,
    defender: &D,
    seed: u64,
    options: &EvalOptions,
) -> Result<WorstCase, EvalError> {
    let paths = all_shortest_paths(config, options.path_cap)?;
    evaluate_paths(config, defender, paths, seed, options)
}

/// One line of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub path_id: String,
    pub path_nodes: String,
    pub mean_reward: f64,
    pub n_episodes: usize,
}

pub fn format_path(path: &[NodeId]) -> String {
    path.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ")
}

/// Per-path rows followed by a summary row holding the minimum.
pub fn worst_case_rows(result: &WorstCase) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = result
        .paths
        .iter()
        .enumerate()
        .map(|(k, p)| ReportRow {
            path_id: k.to_string(),
            path_nodes: format_path(&p.path),
            mean_reward: p.stats.mean,
            n_episodes: p.stats.episodes,
        })
        .collect();
    rows.push(ReportRow {
        path_id: "summary".into(),
        path_nodes: result.argmin_path().map(format_path).unwrap_or_default(),
        mean_reward: result.value,
        n_episodes: result.total_episodes(),
    });
    rows
}

pub fn write_report(path: impl AsRef<Path>, rows: &[ReportRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacker::UniformAttacker;
    use crate::graph::{generate_grid, Graph};

    #[test]
    fn bernoulli_interval() {
        let values: Vec<f64> = (0..1000).map(|k| (k % 2) as f64).collect();
        let s = mean_ci(&values).unwrap();
        assert_eq!(s.mean, 0.5);
        assert!((s.half_width - 1.96 * 0.5 / 1000f64.sqrt()).abs() < 1e-12);
        assert!((s.half_width - 0.031).abs() < 5e-4);
        let ones = mean_ci(&[1.0; 40]).unwrap();
        assert_eq!((ones.mean, ones.half_width), (1.0, 0.0));
        assert!(mean_ci(&[]).is_err());
    }

    fn corridor() -> GameConfig {
        // 0 - 1 - 2 - 3 with the target at 3; a resource parked on 2
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        GameConfig::new(g, vec![0], vec![3], vec![2], 3, None).unwrap()
    }

    #[test]
    fn walking_into_a_resource_always_loses() {
        let cfg = corridor();
        let mut rng = seeded_rng(0);
        let mut attacker = PathAttacker::new(vec![0, 1, 2, 3]);
        let s = play_matches(&cfg, &mut StationaryDefender, &mut attacker, 25, &mut rng).unwrap();
        assert_eq!((s.mean, s.half_width), (1.0, 0.0));
    }

    #[test]
    fn idle_defender_loses_to_a_clear_path() {
        let g = generate_grid(3, 3, 1.0, 0.0, 0);
        let cfg = GameConfig::new(g, vec![4], vec![0, 8], vec![2], 4, None).unwrap();
        let mut rng = seeded_rng(1);
        let mut attacker = PathAttacker::new(vec![4, 7, 8]);
        let s = play_matches(&cfg, &mut StationaryDefender, &mut attacker, 10, &mut rng).unwrap();
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn single_path_equals_match_play() {
        let cfg = corridor();
        let opts = EvalOptions {
            episodes_per_path: 7,
            ..Default::default()
        };
        let wc = best_response_value(&cfg, &ChaseDefender, 3, &opts).unwrap();
        assert_eq!(wc.paths.len(), 1);
        let mut rng = seeded_rng(derive_seed(3, 0));
        let mut attacker = PathAttacker::new(vec![0, 1, 2, 3]);
        let direct = play_matches(&cfg, &mut ChaseDefender, &mut attacker, 7, &mut rng).unwrap();
        assert_eq!(wc.value, direct.mean);
        assert_eq!(wc.value, 1.0);
    }

    #[test]
    fn panel_sizes_and_ordering() {
        let g = generate_grid(3, 3, 1.0, 0.0, 0);
        let cfg = GameConfig::new(g, vec![0], vec![4], vec![8], 4, None).unwrap();
        let opts = EvalOptions {
            episodes_per_path: 2,
            ..Default::default()
        };
        let panel = shortest_path_panel(&cfg, &StationaryDefender, 0, &opts).unwrap();
        assert_eq!(panel.paths.len(), 2);
        let full = best_response_value(&cfg, &StationaryDefender, 0, &opts).unwrap();
        assert!(panel.value >= full.value);
        assert!(panel.paths.iter().all(|p| full.paths.iter().any(|q| q.path == p.path)));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let g = generate_grid(4, 4, 1.0, 0.3, 7);
        let cfg = GameConfig::new(g, vec![5], vec![0, 15], vec![10], 4, None).unwrap();
        let one = EvalOptions {
            episodes_per_path: 3,
            ..Default::default()
        };
        let many = EvalOptions { threads: 3, ..one };
        let nets = NetParams::new(crate::nets::NetDims::for_game(&cfg), 2);
        let d = MctsDefender::greedy(&nets, SearchConfig::default());
        let a = best_response_value(&cfg, &d, 11, &one).unwrap();
        let b = best_response_value(&cfg, &d, 11, &many).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unreachable_targets_are_a_defender_win() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let cfg = GameConfig::new(g, vec![0], vec![3], vec![1], 3, None).unwrap();
        let wc = best_response_value(&cfg, &StationaryDefender, 0, &EvalOptions::default()).unwrap();
        assert_eq!(wc.value, 1.0);
        assert!(wc.argmin.is_none());
    }

    #[test]
    fn cap_error_points_to_the_panel() {
        let g = generate_grid(5, 5, 1.0, 1.0, 0);
        let cfg = GameConfig::new(g, vec![12], vec![0, 4, 20, 24], vec![6], 5, None).unwrap();
        let opts = EvalOptions {
            path_cap: 10,
            ..Default::default()
        };
        let err = best_response_value(&cfg, &StationaryDefender, 0, &opts).unwrap_err();
        assert!(err.to_string().contains("shortest-path panel"), "{err}");
    }

    #[test]
    fn report_has_summary_row() {
        let cfg = corridor();
        let wc = best_response_value(&cfg, &StationaryDefender, 0, &EvalOptions::default()).unwrap();
        let rows = worst_case_rows(&wc);
        assert_eq!(rows.last().unwrap().path_id, "summary");
        assert_eq!(rows[0].path_nodes, "0 1 2 3");
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("r.csv");
        write_report(&file, &rows).unwrap();
        let text = std::fs::read_to_string(file).unwrap();
        assert!(text.starts_with("path_id,path_nodes,mean_reward,n_episodes\n"));
    }

    #[test]
    fn uniform_attacker_against_mcts_runs() {
        let g = generate_grid(4, 4, 1.0, 0.0, 1);
        let cfg = GameConfig::new(g, vec![5], vec![0, 15], vec![10], 5, None).unwrap();
        let nets = NetParams::new(crate::nets::NetDims::for_game(&cfg), 0);
        let mut d = MctsDefender::greedy(&nets, SearchConfig::default());
        let mut rng = seeded_rng(5);
        let s = play_matches(&cfg, &mut d, &mut UniformAttacker::new(), 20, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&s.mean));
    }
}
