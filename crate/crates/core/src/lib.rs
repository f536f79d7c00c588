//! Network security games with a decentralized neural MCTS defender.
//!
//! Modules, bottom-up: [`graph`] (topology, configs, path queries), [`game`]
//! (transition and reward), [`nets`] (prior/value/dynamics networks),
//! [`mcts`] (per-resource search), [`attacker`] (bandit-driven and scripted
//! attackers), [`train`] (episodes, loss, training driver) and [`eval`]
//! (match play and best-response evaluation).

pub mod attacker;
pub mod eval;
pub mod game;
pub mod graph;
pub mod mcts;
pub mod nets;
pub mod train;

use rand::SeedableRng;

/// The one PRNG used everywhere so seeded runs reproduce exactly.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
