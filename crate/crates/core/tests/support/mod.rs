//! Checks shared by the property, gradient and acceptance test targets.

#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestError, TestRng, TestRunner};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsg_core::attacker::{sample_path, AdaptiveAttacker, AttackerPolicy, AvgerState, MabState, UniformAttacker};
use nsg_core::eval::{self, best_response_value, ChaseDefender, EvalOptions, StationaryDefender};
use nsg_core::game::{self, GlobalState};
use nsg_core::graph::{bfs_distances, enumerate_attack_paths, generate_grid, GameConfig, Graph, GridShape, NodeId};
use nsg_core::mcts::{self, SearchConfig, SearchTree, UnvisitedQ};
use nsg_core::nets::{backward, loss, LossInputs, LossSample, NetDims, NetParams, PolicyTarget};
use nsg_core::seeded_rng;
use nsg_core::train::{collect_episode, episode_loss, pad_and_mask, compute_loss, Episode, LossOptions, PriorTarget};

/// Small random game: node 0 is the attacker start, targets and resource
/// starts are drawn from the remaining nodes.
pub fn small_game(seed: u64, nodes: usize, resources: usize, horizon: usize) -> GameConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    // a random tree-like backbone keeps most targets reachable
    for v in 1..nodes {
        if rng.random::<f64>() < 0.8 {
            edges.push((rng.random_range(0..v), v));
        }
    }
    for u in 0..nodes {
        for v in u + 1..nodes {
            if rng.random::<f64>() < 0.2 {
                edges.push((u, v));
            }
        }
    }
    let graph = Graph::from_edges(nodes, &edges).unwrap();
    let mut others: Vec<NodeId> = (1..nodes).collect();
    let k = rng.random_range(1..=(nodes - 1).min(3));
    let mut targets = Vec::new();
    for _ in 0..k {
        targets.push(others.swap_remove(rng.random_range(0..others.len())));
    }
    let defenders: Vec<NodeId> = (0..resources).map(|_| rng.random_range(1..nodes)).collect();
    GameConfig::new(graph, vec![0], targets, defenders, horizon, None).unwrap()
}

pub fn game_strategy() -> impl Strategy<Value = GameConfig> {
    (any::<u64>(), 3usize..=8, 1usize..=2, 1usize..=4).prop_map(|(s, n, m, h)| small_game(s, n, m, h))
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
    let mut runner = TestRunner::new_with_rng(Config { cases, failure_persistence: None, ..Config::default() }, rng);
    runner.run(&strategy, test).map_err(|e| match e {
        TestError::Abort(why) => format!("aborted: {why}"),
        TestError::Fail(why, value) => format!("{why}; minimal input {value:?}"),
    })
}

pub type Property = fn(u32) -> Result<(), String>;

/// Every invariant property, by name.
pub const PROPERTIES: &[(&str, Property)] = &[
    ("grid edges follow the lattice", grid_edges_follow_the_lattice),
    ("bfs distances are consistent", bfs_distances_are_consistent),
    ("enumerated walks end at their first target", enumerated_walks_end_at_their_first_target),
    ("sampled paths are feasible", sampled_paths_are_feasible),
    ("bandit window is fifo", bandit_window_is_fifo),
    ("averager counts only bandit picks", averager_counts_only_bandit_picks),
    ("averager samples only allowed targets", averager_samples_only_allowed_targets),
    ("best response never exceeds a fixed attacker", best_response_never_exceeds_a_fixed_attacker),
    ("search statistics stay in bounds", search_statistics_stay_in_bounds),
    ("episodes replay and losses are nonnegative", episodes_replay_and_losses_are_nonnegative),
];

pub fn grid_edges_follow_the_lattice(cases: u32) -> Result<(), String> {
    let strategy = (1usize..7, 1usize..7, 0.0f64..=1.0, 0.0f64..=1.0, any::<u64>());
    run(cases, strategy, |(w, h, pe, pd, seed)| {
        let g = generate_grid(w, h, pe, pd, seed);
        let shape = GridShape { width: w, height: h };
        prop_assert_eq!(g.node_count(), w * h);
        for (u, v) in g.edges() {
            let (ru, cu) = shape.coords(u);
            let (rv, cv) = shape.coords(v);
            prop_assert!(ru.abs_diff(rv) <= 1 && cu.abs_diff(cv) <= 1);
        }
        prop_assert_eq!(&g, &generate_grid(w, h, pe, pd, seed));
        Ok(())
    })
}

pub fn bfs_distances_are_consistent(cases: u32) -> Result<(), String> {
    run(cases, game_strategy(), |cfg| {
        let g = cfg.graph();
        let d = bfs_distances(g, &[0]);
        prop_assert_eq!(d[0], Some(0));
        for (u, v) in g.edges() {
            match (d[u], d[v]) {
                (Some(a), Some(b)) => prop_assert!(a.abs_diff(b) <= 1),
                (None, None) => {}
                _ => prop_assert!(false, "edge {}-{} crosses components", u, v),
            }
        }
        for v in 1..g.node_count() {
            if let Some(dv) = d[v] {
                prop_assert!(g.neighbors(v).iter().any(|&n| d[n] == Some(dv - 1)));
            }
        }
        Ok(())
    })
}

pub fn enumerated_walks_end_at_their_first_target(cases: u32) -> Result<(), String> {
    run(cases, game_strategy(), |cfg| {
        let paths = enumerate_attack_paths(&cfg, 0, cfg.horizon(), 100_000).unwrap();
        let unique: BTreeSet<_> = paths.iter().cloned().collect();
        prop_assert_eq!(unique.len(), paths.len());
        for p in &paths {
            prop_assert_eq!(p[0], 0);
            prop_assert!(p.len() >= 2 && p.len() <= cfg.horizon() + 1);
            prop_assert!(cfg.is_target(*p.last().unwrap()));
            prop_assert!(p[..p.len() - 1].iter().all(|&v| !cfg.is_target(v)));
            prop_assert!(p.windows(2).all(|e| cfg.graph().has_edge(e[0], e[1])));
        }
        Ok(())
    })
}

pub fn sampled_paths_are_feasible(cases: u32) -> Result<(), String> {
    run(cases, (game_strategy(), any::<u64>()), |(cfg, seed)| {
        let mut rng = seeded_rng(seed);
        let dist = bfs_distances(cfg.graph(), &[0]);
        for &t in cfg.targets() {
            let result = sample_path(cfg.graph(), 0, t, cfg.horizon(), &mut rng);
            if dist[t].is_some_and(|d| d <= cfg.horizon()) {
                let p = result.unwrap();
                prop_assert_eq!(p[0], 0);
                prop_assert_eq!(*p.last().unwrap(), t);
                prop_assert!(p.len() <= cfg.horizon() + 1);
                prop_assert!(p.windows(2).all(|e| cfg.graph().has_edge(e[0], e[1])));
            } else {
                prop_assert!(result.is_err());
            }
        }
        Ok(())
    })
}

pub fn bandit_window_is_fifo(cases: u32) -> Result<(), String> {
    let strategy = (1usize..10, prop::collection::vec((0usize..4, -1.0f64..=0.0), 0..40));
    run(cases, strategy, |(window, plays)| {
        let mut mab = MabState::new(window);
        for &(z, r) in &plays {
            mab.record(z, r);
        }
        let keep = plays.len().saturating_sub(window);
        let expected: Vec<(NodeId, f64)> = plays[keep..].to_vec();
        let got: Vec<(NodeId, f64)> = mab.entries().copied().collect();
        prop_assert_eq!(&got, &expected);
        for z in 0..4 {
            let hits: Vec<f64> = expected.iter().filter(|e| e.0 == z).map(|e| e.1).collect();
            let mean = (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64);
            prop_assert_eq!(mab.value(z), mean);
        }
        Ok(())
    })
}

pub fn averager_counts_only_bandit_picks(cases: u32) -> Result<(), String> {
    run(cases, (game_strategy(), 0.0f64..=1.0, any::<u64>()), |(cfg, eta, seed)| {
        if cfg.reachable_targets(0).is_empty() {
            return Ok(());
        }
        let mut attacker = AdaptiveAttacker::new(&cfg, 5, eta);
        let mut rng = seeded_rng(seed);
        let mut bandit_picks = 0u64;
        for k in 0..30 {
            attacker.begin_episode(&cfg, &mut rng).unwrap();
            bandit_picks += u64::from(attacker.last_used_mab());
            attacker.end_episode(f64::from(k % 2));
        }
        prop_assert_eq!(attacker.avger.total(), bandit_picks);
        prop_assert!(attacker.mab.len() <= 5);
        Ok(())
    })
}

pub fn averager_samples_only_allowed_targets(cases: u32) -> Result<(), String> {
    let strategy = (prop::collection::vec(0u64..5, 4), prop::sample::subsequence(vec![0usize, 1, 2, 3], 1..=4), any::<u64>());
    run(cases, strategy, |(counts, allowed, seed)| {
        let mut avger = AvgerState::new(&[0, 1, 2, 3]);
        for (z, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                avger.record(z);
            }
        }
        let mut rng = seeded_rng(seed);
        for _ in 0..20 {
            let z = avger.select_among(&allowed, &mut rng);
            prop_assert!(allowed.contains(&z));
            let any_count = allowed.iter().any(|&a| avger.count(a) > 0);
            prop_assert!(!any_count || avger.count(z) > 0, "picked a zero-count target {}", z);
        }
        Ok(())
    })
}

pub fn best_response_never_exceeds_a_fixed_attacker(cases: u32) -> Result<(), String> {
    run(cases, (game_strategy(), any::<u64>()), |(cfg, seed)| {
        if cfg.reachable_targets(0).is_empty() {
            return Ok(());
        }
        let options = EvalOptions { episodes_per_path: 1, ..EvalOptions::default() };
        let worst = best_response_value(&cfg, &ChaseDefender, seed, &options).unwrap();
        let mut rng = seeded_rng(seed);
        let vs_uniform =
            eval::play_matches(&cfg, &mut ChaseDefender, &mut UniformAttacker::new(), 20, &mut rng).unwrap();
        prop_assert!(worst.value <= vs_uniform.mean + 1e-12);
        let still = best_response_value(&cfg, &StationaryDefender, seed, &options).unwrap();
        prop_assert!(still.paths.iter().all(|p| p.stats.mean >= still.value));
        Ok(())
    })
}

pub fn search_statistics_stay_in_bounds(cases: u32) -> Result<(), String> {
    let strategy = (game_strategy(), any::<u64>(), 2usize..20, 0.5f64..=1.0, any::<bool>());
    run(cases, strategy, |(cfg, seed, n, gamma, zero_q)| {
        let root = game::initial_state(&cfg, 0).unwrap();
        if game::evaluate(&cfg, &root).terminal {
            return Ok(());
        }
        let nets = NetParams::new(NetDims::for_game(&cfg), seed);
        let search = SearchConfig {
            n_simulations: n,
            gamma,
            unvisited_q: if zero_q { UnvisitedQ::Zero } else { UnvisitedQ::Parent },
            ..SearchConfig::default()
        };
        let mut tree = SearchTree::new();
        let mut rng = seeded_rng(seed);
        let decision = mcts::execute(&mut tree, &cfg, &root, &nets, &search, &mut rng).unwrap();
        for i in 0..cfg.resources() {
            prop_assert_eq!(decision.visits[i].iter().sum::<u32>() as usize, n - 1);
            prop_assert!((decision.policies[i].iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(decision.legal[i].contains(&decision.actions[i]));
        }
        for state in tree.states() {
            prop_assert!(state.t <= cfg.horizon());
            let stats = tree.get(state).unwrap();
            for i in 0..cfg.resources() {
                prop_assert!((stats.prior[i].iter().sum::<f64>() - 1.0).abs() < 1e-6);
                prop_assert_eq!(stats.q[i].len(), game::legal_defender_actions(&cfg, state)[i].len());
                prop_assert!(stats.q[i].iter().all(|&q| (0.0..=1.0).contains(&q)));
            }
        }
        Ok(())
    })
}

pub fn episodes_replay_and_losses_are_nonnegative(cases: u32) -> Result<(), String> {
    run(cases, (game_strategy(), any::<u64>()), |(cfg, seed)| {
        if cfg.reachable_targets(0).is_empty() {
            return Ok(());
        }
        let nets = NetParams::new(NetDims::for_game(&cfg), seed);
        let search = SearchConfig { n_simulations: 4, ..SearchConfig::default() };
        let mut rng = seeded_rng(seed);
        let ep = collect_episode(&cfg, &nets, &search, &mut UniformAttacker::new(), &mut SearchTree::new(), &mut rng)
            .unwrap();
        prop_assert!(ep.replay(&cfg).unwrap());
        prop_assert!(ep.h >= 1 && ep.h <= cfg.horizon());
        let l = episode_loss(&nets, &ep, &LossOptions::default()).unwrap();
        prop_assert!(l.prior >= 0.0 && l.value >= 0.0 && l.dynamics >= 0.0);
        Ok(())
    })
}

/// Random training episodes from small games, collected with random nets.
pub fn random_episodes(seed: u64, count: usize) -> (GameConfig, NetParams, Vec<Episode>) {
    let mut rng = seeded_rng(seed);
    let mut game_seed = seed;
    let cfg = loop {
        let cfg = small_game(game_seed, 8, 2, 4);
        if cfg.reachable_targets(0).len() >= 1 {
            break cfg;
        }
        game_seed = game_seed.wrapping_add(1000);
    };
    let nets = NetParams::new(NetDims::for_game(&cfg), seed);
    let search = SearchConfig { n_simulations: 5, ..SearchConfig::default() };
    let mut tree = SearchTree::new();
    let episodes = (0..count)
        .map(|_| collect_episode(&cfg, &nets, &search, &mut UniformAttacker::new(), &mut tree, &mut rng).unwrap())
        .collect();
    (cfg, nets, episodes)
}

/// Largest absolute gap between the padded batch loss and the mean of
/// unpadded per-episode losses, over the three terms.
pub fn masking_gap(nets: &NetParams, horizon: usize, episodes: &[Episode], options: &LossOptions) -> f64 {
    let refs: Vec<&Episode> = episodes.iter().collect();
    let padded = pad_and_mask(&refs, horizon).unwrap();
    let (batch, _) = compute_loss(nets, &padded, options).unwrap();
    let n = episodes.len() as f64;
    let mut mean = [0.0; 3];
    for ep in episodes {
        let l = episode_loss(nets, ep, options).unwrap();
        mean[0] += l.prior / n;
        mean[1] += l.value / n;
        mean[2] += l.dynamics / n;
    }
    [batch.prior - mean[0], batch.value - mean[1], batch.dynamics - mean[2]]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
}

/// Loss options covering each value loss and prior target kind.
pub fn loss_option_grid() -> Vec<LossOptions> {
    let mut out = Vec::new();
    for value_loss in [nsg_core::nets::ValueLoss::Ce, nsg_core::nets::ValueLoss::Mse] {
        for prior_target in [PriorTarget::Sampled, PriorTarget::Visits] {
            for gamma in [1.0, 0.9] {
                out.push(LossOptions { gamma, value_loss, prior_target });
            }
        }
    }
    out
}

pub const GRAD_STEP: f64 = 1e-6;
pub const KINK_GAP: f64 = 1e-4;

pub fn random_loss_sample(rng: &mut ChaCha8Rng, n: usize, horizon: usize) -> LossSample {
    let m = rng.random_range(1..=3);
    let len = rng.random_range(1..=horizon);
    let nodes: Vec<usize> = (0..n).collect();
    let attacker_seq: Vec<usize> = (0..len).map(|_| *nodes.choose(rng).unwrap()).collect();
    let resource_locs: Vec<usize> = (0..m).map(|_| *nodes.choose(rng).unwrap()).collect();
    let pick_set = |rng: &mut ChaCha8Rng| {
        let k = rng.random_range(1..=4.min(n));
        let mut set: Vec<usize> = nodes.choose_multiple(rng, k).copied().collect();
        set.sort();
        set
    };
    let resource_legal: Vec<Vec<usize>> = (0..m).map(|_| pick_set(rng)).collect();
    let resource_targets = resource_legal
        .iter()
        .map(|s| {
            if rng.random::<bool>() {
                PolicyTarget::Action(rng.random_range(0..s.len()))
            } else {
                let raw: Vec<f64> = s.iter().map(|_| rng.random::<f64>()).collect();
                let total: f64 = raw.iter().sum();
                PolicyTarget::Distribution(raw.iter().map(|v| v / total).collect())
            }
        })
        .collect();
    let attacker_legal = pick_set(rng);
    let attacker_target = rng.random_range(0..attacker_legal.len());
    LossSample {
        state: GlobalState {
            attacker_seq,
            resource_locs,
            t: len - 1,
        },
        resource_legal,
        resource_targets,
        attacker_legal,
        attacker_target,
        value_target: rng.random::<f64>(),
        weight: rng.random_range(0.2..1.5),
    }
}

/// Relative error between analytic and central-difference gradients.
pub fn gradient_error(params: &NetParams, inputs: &LossInputs) -> f64 {
    let analytic = backward(params, inputs).unwrap();
    let mut probe = params.clone();
    let mut diff2 = 0.0;
    let mut norm_a = 0.0;
    let mut norm_n = 0.0;
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.data.to_vec()).collect();
    for (ti, g) in grads.iter().enumerate() {
        for (k, &a) in g.iter().enumerate() {
            let orig = probe.tensors_mut()[ti].1[k];
            probe.tensors_mut()[ti].1[k] = orig + GRAD_STEP;
            let up = loss(&probe, inputs).unwrap().total();
            probe.tensors_mut()[ti].1[k] = orig - GRAD_STEP;
            let down = loss(&probe, inputs).unwrap().total();
            probe.tensors_mut()[ti].1[k] = orig;
            let mut numeric = (up - down) / (2.0 * GRAD_STEP);
            // a ReLU corner inside the stencil: the one-sided slopes disagree
            // and the analytic gradient must equal one of them
            let mid = loss(&probe, inputs).unwrap().total();
            let (right, left) = ((up - mid) / GRAD_STEP, (mid - down) / GRAD_STEP);
            if (right - left).abs() > KINK_GAP {
                numeric = if (a - right).abs() < (a - left).abs() { right } else { left };
            }
            diff2 += (a - numeric) * (a - numeric);
            norm_a += a * a;
            norm_n += numeric * numeric;
        }
    }
    let scale = norm_a.sqrt().max(norm_n.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff2.sqrt() / scale
    }
}
