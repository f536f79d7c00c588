//! Property tests for the simulator, search, attacker and evaluation.

mod support;

const CASES: u32 = 64;

fn check(name: &str) {
    let (_, property) = support::PROPERTIES.iter().find(|(n, _)| *n == name).expect("known property");
    if let Err(why) = property(CASES) {
        panic!("{name}: {why}");
    }
}

#[test]
fn grid_edges_follow_the_lattice() {
    check("grid edges follow the lattice");
}

#[test]
fn bfs_distances_are_consistent() {
    check("bfs distances are consistent");
}

#[test]
fn enumerated_walks_end_at_their_first_target() {
    check("enumerated walks end at their first target");
}

#[test]
fn sampled_paths_are_feasible() {
    check("sampled paths are feasible");
}

#[test]
fn bandit_window_is_fifo() {
    check("bandit window is fifo");
}

#[test]
fn averager_counts_only_bandit_picks() {
    check("averager counts only bandit picks");
}

#[test]
fn averager_samples_only_allowed_targets() {
    check("averager samples only allowed targets");
}

#[test]
fn best_response_never_exceeds_a_fixed_attacker() {
    check("best response never exceeds a fixed attacker");
}

#[test]
fn search_statistics_stay_in_bounds() {
    check("search statistics stay in bounds");
}

#[test]
fn episodes_replay_and_losses_are_nonnegative() {
    check("episodes replay and losses are nonnegative");
}

