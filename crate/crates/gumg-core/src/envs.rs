//! Game builders: the shared-token grid world and seeded random games.

use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{stream_rng, GameSpec, JointPolicy, SaTable};

/// Moves available in the grid world, in action-index order.
pub const GRID_ACTIONS: usize = 5; // up, down, left, right, stay

/// Where the grid world starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridInitial {
    Uniform,
    Corner,
}

/// Square grid with one shared token moved by majority vote.
///
/// All agents observe the token cell (so `|S| = side^2`) and propose one of
/// five moves. The applied move is the proposal with the highest count,
/// ties broken in favor of the earliest agent holding a maximal proposal.
/// With probability `slip` the token instead moves in a uniformly random
/// direction. Moves that would leave the grid keep the token in place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub side: usize,
    pub n_agents: usize,
    pub slip: f64,
    pub initial: GridInitial,
    pub discount: f64,
}

impl GridSpec {
    pub fn n_states(&self) -> usize {
        self.side * self.side
    }
}

fn apply_move(side: usize, cell: usize, mv: usize) -> usize {
    let (r, c) = (cell / side, cell % side);
    let (r2, c2) = match mv {
        0 => (r.wrapping_sub(1), c), // up
        1 => (r + 1, c),             // down
        2 => (r, c.wrapping_sub(1)), // left
        3 => (r, c + 1),             // right
        _ => (r, c),                 // stay
    };
    if r2 >= side || c2 >= side {
        cell
    } else {
        r2 * side + c2
    }
}

fn majority_move(proposals: &[usize]) -> usize {
    let mut counts = [0usize; GRID_ACTIONS];
    for &m in proposals {
        counts[m] += 1;
    }
    let max = *counts.iter().max().unwrap();
    // First agent whose proposal attains the maximal count wins; when all
    // proposals differ this is agent 0's move.
    for &m in proposals {
        if counts[m] == max {
            return m;
        }
    }
    unreachable!()
}

/// Builds the grid game. Every transition row is stochastic by construction
/// and the result passes full validation.
pub fn build_grid(spec: &GridSpec) -> Result<GameSpec> {
    if spec.side < 2 {
        return Err(Error::InvalidConfig("grid side must be >= 2".into()));
    }
    if spec.n_agents == 0 {
        return Err(Error::InvalidConfig("grid needs >= 1 agent".into()));
    }
    if !(0.0..=1.0).contains(&spec.slip) {
        return Err(Error::InvalidConfig(format!(
            "slip must lie in [0, 1], got {}",
            spec.slip
        )));
    }
    let n_states = spec.n_states();
    let n_agents = spec.n_agents;
    let action_counts = vec![GRID_ACTIONS; n_agents];
    let n_joint: usize = action_counts.iter().product();

    let mut transition = vec![0.0; n_states * n_joint * n_states];
    let mut proposals = vec![0usize; n_agents];
    // Mixed-radix decode without a GameSpec yet.
    let decode = |mut idx: usize, out: &mut [usize]| {
        for i in (0..n_agents).rev() {
            out[i] = idx % GRID_ACTIONS;
            idx /= GRID_ACTIONS;
        }
    };
    for s in 0..n_states {
        for a in 0..n_joint {
            decode(a, &mut proposals);
            let winner = majority_move(&proposals);
            let row = &mut transition[(s * n_joint + a) * n_states..(s * n_joint + a + 1) * n_states];
            row[apply_move(spec.side, s, winner)] += 1.0 - spec.slip;
            for dir in 0..4 {
                row[apply_move(spec.side, s, dir)] += spec.slip / 4.0;
            }
        }
    }

    let initial_dist = match spec.initial {
        GridInitial::Uniform => vec![1.0 / n_states as f64; n_states],
        GridInitial::Corner => {
            let mut mu = vec![0.0; n_states];
            mu[0] = 1.0;
            mu
        }
    };
    GameSpec::new(
        n_agents,
        n_states,
        action_counts,
        transition,
        initial_dist,
        spec.discount,
    )
}

/// Random tabular game: transition rows drawn from a symmetric Dirichlet,
/// uniform initial distribution. Deterministic per seed.
pub fn random_game(
    seed: u64,
    n_states: usize,
    action_counts: &[usize],
    gamma: f64,
    concentration: f64,
) -> Result<GameSpec> {
    let n_agents = action_counts.len();
    let n_joint: usize = action_counts.iter().product();
    let mut rng = stream_rng(seed, 0);
    let mut transition = Vec::with_capacity(n_states * n_joint * n_states);
    if n_states == 1 {
        transition.resize(n_joint, 1.0);
    } else {
        let dir = Dirichlet::new(&vec![concentration; n_states])
            .map_err(|e| Error::InvalidConfig(format!("dirichlet: {e}")))?;
        for _ in 0..n_states * n_joint {
            transition.extend(dir.sample(&mut rng));
        }
    }
    // Renormalize against sampling round-off so rows pass the 1e-12 check.
    for row in transition.chunks_mut(n_states) {
        let sum: f64 = row.iter().sum();
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    let mu = vec![1.0 / n_states as f64; n_states];
    GameSpec::new(n_agents, n_states, action_counts.to_vec(), transition, mu, gamma)
}

/// Random interior joint policy, mixed with uniform so every action keeps
/// probability at least `0.1 / |A_i|`. Deterministic per seed.
pub fn random_policy(game: &GameSpec, seed: u64) -> JointPolicy {
    let mut rng = stream_rng(seed, 1);
    let mut tables = Vec::with_capacity(game.n_agents());
    for i in 0..game.n_agents() {
        let n_a = game.n_actions(i);
        let mut t = SaTable::zeros(game.n_states(), n_a);
        for s in 0..game.n_states() {
            let raw: Vec<f64> = (0..n_a).map(|_| -rng.gen::<f64>().ln()).collect();
            let sum: f64 = raw.iter().sum();
            for a in 0..n_a {
                t.set(s, a, 0.9 * raw[a] / sum + 0.1 / n_a as f64);
            }
        }
        tables.push(t);
    }
    JointPolicy::new(tables, game).expect("random policy rows are stochastic")
}

/// Seeds of the fixed random-game corpus the property and acceptance suites
/// run against.
pub const CORPUS_SEEDS: [u64; 20] = [
    1001, 1002, 1003, 1004, 1005, 1006, 1007, 1008, 1009, 1010, 1011, 1012, 1013, 1014, 1015,
    1016, 1017, 1018, 1019, 1020,
];

const CORPUS_GAMMA: f64 = 0.9;

/// Dimensions used for corpus game `k`: states in {2, 3, 4}, 1 to 3 agents,
/// 2 or 3 actions shared by every agent (so that all utility kinds apply).
pub fn corpus_dims(k: usize) -> (usize, usize, usize) {
    let n_states = 2 + (k % 3);
    let n_agents = 1 + ((k / 3) % 3);
    let n_actions = 2 + (k % 2);
    (n_states, n_agents, n_actions)
}

/// The fixed 20-game corpus: small Dirichlet games with uniform initial
/// distributions and `gamma = 0.9`.
pub fn corpus() -> Vec<GameSpec> {
    CORPUS_SEEDS
        .iter()
        .enumerate()
        .map(|(k, &seed)| {
            let (n_states, n_agents, n_actions) = corpus_dims(k);
            random_game(seed, n_states, &vec![n_actions; n_agents], CORPUS_GAMMA, 1.0)
                .expect("corpus game dimensions are valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupancy::exact_state_occupancy;

    #[test]
    fn tiny_grid_is_deterministic_without_slip() {
        let g = build_grid(&GridSpec {
            side: 2,
            n_agents: 1,
            slip: 0.0,
            initial: GridInitial::Uniform,
            discount: 0.9,
        })
        .unwrap();
        assert_eq!(g.n_states(), 4);
        for s in 0..4 {
            for a in 0..5 {
                let row = g.transition_row(s, a);
                assert_eq!(row.iter().filter(|&&p| p > 0.0).count(), 1);
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
            }
        }
        // From cell 0 (top-left), moving right lands in cell 1.
        assert_eq!(g.prob(0, 3, 1), 1.0);
        // Moving up from the top row stays put.
        assert_eq!(g.prob(0, 0, 0), 1.0);
    }

    #[test]
    fn paper_scale_grid_validates() {
        let g = build_grid(&GridSpec {
            side: 5,
            n_agents: 3,
            slip: 0.05,
            initial: GridInitial::Uniform,
            discount: 0.95,
        })
        .unwrap();
        assert_eq!(g.n_states(), 25);
        assert_eq!(g.n_joint_actions(), 125);
    }

    #[test]
    fn grid_rows_stochastic_under_slip() {
        let g = build_grid(&GridSpec {
            side: 3,
            n_agents: 2,
            slip: 0.1,
            initial: GridInitial::Corner,
            discount: 0.9,
        })
        .unwrap();
        for s in 0..g.n_states() {
            for a in 0..g.n_joint_actions() {
                let sum: f64 = g.transition_row(s, a).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn majority_vote_tie_goes_to_agent_zero() {
        assert_eq!(majority_move(&[0, 1, 2]), 0);
        assert_eq!(majority_move(&[3, 1, 1]), 1);
        assert_eq!(majority_move(&[2, 2, 4]), 2);
        assert_eq!(majority_move(&[4]), 4);
    }

    #[test]
    fn random_game_deterministic_per_seed() {
        let a = random_game(5, 3, &[2, 2], 0.9, 1.0).unwrap();
        let b = random_game(5, 3, &[2, 2], 0.9, 1.0).unwrap();
        for s in 0..3 {
            for ja in 0..4 {
                assert_eq!(a.transition_row(s, ja), b.transition_row(s, ja));
            }
        }
        let c = random_game(6, 3, &[2, 2], 0.9, 1.0).unwrap();
        assert_ne!(a.transition_row(0, 0), c.transition_row(0, 0));
    }

    #[test]
    fn high_concentration_rows_near_uniform() {
        let g = random_game(9, 4, &[2], 0.9, 1e6).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                for &p in g.transition_row(s, a) {
                    assert!((p - 0.25).abs() <= 1e-2);
                }
            }
        }
    }

    #[test]
    fn corpus_games_validate_and_explore() {
        let games = corpus();
        assert_eq!(games.len(), 20);
        for g in &games {
            // Uniform mu keeps every state visited: d >= (1-gamma)/|S| > 0.
            let d = exact_state_occupancy(&g, &JointPolicy::uniform(g)).unwrap();
            let floor = (1.0 - g.discount()) / g.n_states() as f64;
            for &x in &d {
                assert!(x >= floor - 1e-12);
            }
        }
    }

    #[test]
    fn grid_assumption_two_holds_with_uniform_mu() {
        let g = build_grid(&GridSpec {
            side: 3,
            n_agents: 2,
            slip: 0.05,
            initial: GridInitial::Uniform,
            discount: 0.9,
        })
        .unwrap();
        for seed in 0..5 {
            let policy = random_policy(&g, seed);
            let d = exact_state_occupancy(&g, &policy).unwrap();
            let floor = (1.0 - g.discount()) / g.n_states() as f64;
            for &x in &d {
                assert!(x >= floor - 1e-12);
            }
        }
    }

    #[test]
    fn grid_corner_start() {
        let g = build_grid(&GridSpec {
            side: 2,
            n_agents: 1,
            slip: 0.0,
            initial: GridInitial::Corner,
            discount: 0.9,
        })
        .unwrap();
        assert_eq!(g.initial_dist(), &[1.0, 0.0, 0.0, 0.0]);
    }
}
