//! Preset grid-world experiments: imitation, team coverage and collective
//! exploration on the 5x5 shared-token grid, with the settings
//! `gamma = 0.95, eta = 0.01, H = 20, M = 512` used by the trace tables.
//!
//! Targets are occupancies of concrete goal-seeking policies on the same
//! grid, so they are exactly achievable by a joint policy. The bias levels
//! below were chosen so the uniform-policy starting values land near the
//! reference table entries.

use crate::diagnostics::InnerSolve;
use crate::envs::{build_grid, GridInitial, GridSpec, GRID_ACTIONS};
use crate::error::Result;
use crate::game::{GameSpec, JointPolicy, SaTable};
use crate::learner::{EvalOptions, LearnerConfig, Mode, PotentialMode};
use crate::occupancy::exact_marginals;
use crate::utilities::{UtilityKind, UtilitySpec};

/// A ready-to-run experiment: game, per-agent utilities, learner settings.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub game: GameSpec,
    pub utilities: Vec<UtilitySpec>,
    pub config: LearnerConfig,
}

pub const GRID_SIDE: usize = 5;
pub const GRID_AGENTS: usize = 3;
pub const GRID_SLIP: f64 = 0.05;
pub const GRID_DISCOUNT: f64 = 0.95;

fn paper_grid(initial: GridInitial) -> Result<GameSpec> {
    build_grid(&GridSpec {
        side: GRID_SIDE,
        n_agents: GRID_AGENTS,
        slip: GRID_SLIP,
        initial,
        discount: GRID_DISCOUNT,
    })
}

fn paper_config(mode: Mode, seed: u64, potential: PotentialMode) -> LearnerConfig {
    LearnerConfig {
        mode,
        eta: 0.01,
        iterations: 200,
        batch: 512,
        horizon: 20,
        alpha: if mode == Mode::OnPolicy { 0.01 } else { 0.0 },
        seed,
        eval_every: 20,
        potential,
        eval: EvalOptions {
            ne_gap: true,
            inner: InnerSolve {
                stepsize: 0.05,
                max_iter: 2000,
                tol: 1e-6,
            },
        },
    }
}

/// Goal-seeking policy on the grid: at every cell, moves that shrink the
/// Manhattan distance to `goal` share `bias` probability mass on top of a
/// uniform base.
pub fn goal_policy(game: &GameSpec, goal: usize, bias: f64) -> JointPolicy {
    let side = GRID_SIDE;
    let (gr, gc) = (goal / side, goal % side);
    let mut tables = Vec::with_capacity(game.n_agents());
    for _ in 0..game.n_agents() {
        let mut t = SaTable::zeros(game.n_states(), GRID_ACTIONS);
        for s in 0..game.n_states() {
            let (r, c) = (s / side, s % side);
            let mut preferred = Vec::new();
            if gr < r {
                preferred.push(0); // up
            }
            if gr > r {
                preferred.push(1); // down
            }
            if gc < c {
                preferred.push(2); // left
            }
            if gc > c {
                preferred.push(3); // right
            }
            if preferred.is_empty() {
                preferred.push(4); // stay at the goal
            }
            let base = (1.0 - bias) / GRID_ACTIONS as f64;
            let bonus = bias / preferred.len() as f64;
            for a in 0..GRID_ACTIONS {
                let extra = if preferred.contains(&a) { bonus } else { 0.0 };
                t.set(s, a, base + extra);
            }
        }
        tables.push(t);
    }
    JointPolicy::new(tables, game).expect("goal policy rows are stochastic")
}

/// Center cell of the grid.
pub fn center_cell() -> usize {
    (GRID_SIDE / 2) * GRID_SIDE + GRID_SIDE / 2
}

/// Far corner (opposite the start corner 0).
pub fn far_corner() -> usize {
    GRID_SIDE * GRID_SIDE - 1
}

/// Multi-agent imitation on the grid: every agent matches the marginal
/// occupancy of a shared goal-seeking demonstration policy. Decoupled
/// across agents, so the algorithm runs without communication.
pub fn imitation_grid(seed: u64) -> Result<Experiment> {
    let game = paper_grid(GridInitial::Corner)?;
    let expert = goal_policy(&game, center_cell(), IMITATION_BIAS);
    let occ = exact_marginals(&game, &expert)?;
    let utilities = (0..game.n_agents())
        .map(|i| {
            UtilitySpec::new(i, UtilityKind::Imitation {
                alpha: 1.0,
                target: occ.marginals[i].as_slice().to_vec(),
            })
        })
        .collect();
    Ok(Experiment {
        game,
        utilities,
        config: paper_config(Mode::OnPolicy, seed, PotentialMode::AverageUtility),
    })
}

/// Team coverage: one shared KL objective pushing the equal-weight mixture
/// of marginals onto the occupancy of a goal-seeking target policy.
pub fn coverage_grid(seed: u64) -> Result<Experiment> {
    let game = paper_grid(GridInitial::Corner)?;
    let target_policy = goal_policy(&game, far_corner(), COVERAGE_BIAS);
    let occ = exact_marginals(&game, &target_policy)?;
    let weights = vec![1.0 / GRID_AGENTS as f64; GRID_AGENTS];
    let mut target = vec![0.0; game.n_states() * GRID_ACTIONS];
    for m in &occ.marginals {
        for (t, &x) in target.iter_mut().zip(m.as_slice()) {
            *t += x / GRID_AGENTS as f64;
        }
    }
    let utilities = (0..game.n_agents())
        .map(|i| {
            UtilitySpec::new(i, UtilityKind::TeamCoverage {
                weights: weights.clone(),
                target: target.clone(),
            })
        })
        .collect();
    Ok(Experiment {
        game,
        utilities,
        config: paper_config(Mode::OnPolicy, seed, PotentialMode::CommonInterest),
    })
}

/// Collective exploration: one shared entropy objective on the mixture of
/// marginals.
pub fn exploration_grid(seed: u64) -> Result<Experiment> {
    let game = paper_grid(GridInitial::Corner)?;
    let weights = vec![1.0 / GRID_AGENTS as f64; GRID_AGENTS];
    let utilities = (0..game.n_agents())
        .map(|i| {
            UtilitySpec::new(i, UtilityKind::CollectiveExploration {
                coef: 1.0,
                mix_row: weights.clone(),
            })
        })
        .collect();
    let mut config = paper_config(Mode::OnPolicy, seed, PotentialMode::CommonInterest);
    config.iterations = 210;
    Ok(Experiment {
        game,
        utilities,
        config,
    })
}

/// Demonstration-policy sharpness for the imitation preset.
pub const IMITATION_BIAS: f64 = 0.65;
/// Target-policy sharpness for the coverage preset.
pub const COVERAGE_BIAS: f64 = 0.55;
