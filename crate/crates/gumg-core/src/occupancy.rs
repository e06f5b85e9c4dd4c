//! Exact and Monte-Carlo occupancy measures and Q-values.
//!
//! The state occupancy solves the flow equation
//! `d = (1 - gamma) mu + gamma P_pi^T d`; marginals follow as
//! `lambda_i(s, a_i) = d(s) pi_i(a_i | s)`. Linear systems use dense LU,
//! which is plenty at desk scale.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{GameSpec, JointPolicy, SaTable, Trajectory};

/// Whether an occupancy set came from a linear solve or from sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OccupancyKind {
    Exact,
    Estimated { batch: usize, horizon: usize },
}

/// State occupancy plus per-agent `(state, own action)` marginals.
#[derive(Debug, Clone)]
pub struct OccupancySet {
    pub state_occ: Vec<f64>,
    pub marginals: Vec<SaTable>,
    pub kind: OccupancyKind,
}

impl OccupancySet {
    pub fn n_agents(&self) -> usize {
        self.marginals.len()
    }
}

/// Dense state-to-state transition matrix under a joint policy, indexed
/// `[s, s']`. Accepts raw (not necessarily stochastic) tables so that
/// finite-difference probes can evaluate the same map off the simplex.
pub(crate) fn policy_transition(game: &GameSpec, tables: &[SaTable]) -> DMatrix<f64> {
    let n = game.n_states();
    let mut p = DMatrix::zeros(n, n);
    let n_joint = game.n_joint_actions();
    let mut actions = vec![0usize; game.n_agents()];
    for s in 0..n {
        for a in 0..n_joint {
            game.decode_joint(a, &mut actions);
            let mut w = 1.0;
            for (i, &ai) in actions.iter().enumerate() {
                w *= tables[i].get(s, ai);
            }
            if w == 0.0 {
                continue;
            }
            let row = game.transition_row(s, a);
            for (s2, &pr) in row.iter().enumerate() {
                if pr > 0.0 {
                    p[(s, s2)] += w * pr;
                }
            }
        }
    }
    p
}

fn solve_flow(game: &GameSpec, p_pi: &DMatrix<f64>, context: &str) -> Result<Vec<f64>> {
    let n = game.n_states();
    let gamma = game.discount();
    // (I - gamma P_pi^T) d = (1 - gamma) mu
    let mut m = DMatrix::identity(n, n);
    for s in 0..n {
        for s2 in 0..n {
            m[(s, s2)] -= gamma * p_pi[(s2, s)];
        }
    }
    let rhs = DVector::from_iterator(n, game.initial_dist().iter().map(|&x| (1.0 - gamma) * x));
    let lu = m.lu();
    match lu.solve(&rhs) {
        Some(d) => Ok(d.iter().copied().collect()),
        None => Err(Error::SingularSystem {
            context: context.into(),
        }),
    }
}

/// Exact discounted state occupancy `d_mu^pi`. Entrywise nonnegative and
/// sums to 1 (the system is nonsingular for any `gamma < 1`; the singular
/// branch is reported defensively).
pub fn exact_state_occupancy(game: &GameSpec, policy: &JointPolicy) -> Result<Vec<f64>> {
    let p_pi = policy_transition(game, policy.tables());
    solve_flow(game, &p_pi, "exact_state_occupancy")
}

/// Flow solve on raw tables, used by the finite-difference oracle. No
/// stochasticity requirements on `tables`.
pub(crate) fn state_occupancy_raw(game: &GameSpec, tables: &[SaTable]) -> Result<Vec<f64>> {
    let p_pi = policy_transition(game, tables);
    solve_flow(game, &p_pi, "state_occupancy_raw")
}

/// Truncated occupancy `(1 - gamma) sum_{t < horizon} gamma^t P(s_t = .)`,
/// the exact expectation of the Monte-Carlo estimator at this horizon.
pub fn truncated_state_occupancy(
    game: &GameSpec,
    policy: &JointPolicy,
    horizon: usize,
) -> Vec<f64> {
    let p_pi = policy_transition(game, policy.tables());
    let n = game.n_states();
    let gamma = game.discount();
    let mut marginal = DVector::from_column_slice(game.initial_dist());
    let mut d = vec![0.0; n];
    let mut scale = 1.0 - gamma;
    for t in 0..horizon {
        for s in 0..n {
            d[s] += scale * marginal[s];
        }
        if t + 1 < horizon {
            marginal = p_pi.transpose() * marginal;
            scale *= gamma;
        }
    }
    d
}

pub(crate) fn marginals_from_state_occ(
    state_occ: &[f64],
    tables: &[SaTable],
) -> Vec<SaTable> {
    tables
        .iter()
        .map(|t| {
            let mut m = SaTable::zeros(t.n_states, t.n_actions);
            for s in 0..t.n_states {
                for a in 0..t.n_actions {
                    m.set(s, a, state_occ[s] * t.get(s, a));
                }
            }
            m
        })
        .collect()
}

/// Exact occupancy set: `d_mu^pi` plus all per-agent marginals.
pub fn exact_marginals(game: &GameSpec, policy: &JointPolicy) -> Result<OccupancySet> {
    let d = exact_state_occupancy(game, policy)?;
    let marginals = marginals_from_state_occ(&d, policy.tables());
    Ok(OccupancySet {
        state_occ: d,
        marginals,
        kind: OccupancyKind::Exact,
    })
}

/// Monte-Carlo occupancy from a batch of equal-horizon trajectories:
/// `d_hat(s) = (1 - gamma) / M * sum_k sum_{t < H} gamma^t 1{s_t = s}`.
///
/// The `(1 - gamma)` normalizer makes `d_hat` estimate the exact `d_mu^pi`
/// directly; truncation loses mass `gamma^H`, so the estimate sums to <= 1.
pub fn estimate_occupancy(
    trajectories: &[Trajectory],
    game: &GameSpec,
    policy: &JointPolicy,
) -> Result<OccupancySet> {
    if trajectories.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let horizon = trajectories[0].len();
    if trajectories.iter().any(|t| t.len() != horizon) {
        return Err(Error::InvalidConfig(
            "all trajectories in a batch must share the horizon".into(),
        ));
    }
    let gamma = game.discount();
    let mut d = vec![0.0; game.n_states()];
    for traj in trajectories {
        let mut w = 1.0 - gamma;
        for &(s, _) in &traj.steps {
            d[s] += w;
            w *= gamma;
        }
    }
    let m = trajectories.len() as f64;
    for x in d.iter_mut() {
        *x /= m;
    }
    let marginals = marginals_from_state_occ(&d, policy.tables());
    Ok(OccupancySet {
        state_occ: d,
        marginals,
        kind: OccupancyKind::Estimated {
            batch: trajectories.len(),
            horizon,
        },
    })
}

/// Q-values for a pseudo-reward defined on one agent's `(state, action)`
/// pairs, extended to joint actions by `r~(s, a) = r(s, a_j)`.
#[derive(Debug, Clone)]
pub struct QTable {
    /// `Q(s, a)` over joint actions, row-major `(s, a)`.
    pub q: Vec<f64>,
    /// `V(s) = sum_a pi(a|s) Q(s, a)`.
    pub value: Vec<f64>,
    n_joint: usize,
}

impl QTable {
    #[inline]
    pub fn get(&self, s: usize, joint_action: usize) -> f64 {
        self.q[s * self.n_joint + joint_action]
    }

    /// Averaged table `Qbar(s, a_i) = sum_{a_-i} pi_-i(a_-i | s) Q(s, a)`
    /// for a requested agent, iterating the mixed-radix joint-action space.
    pub fn averaged(&self, game: &GameSpec, policy: &JointPolicy, agent: usize) -> SaTable {
        average_over_others(game, policy, agent, |s, a| self.get(s, a))
    }
}

/// Averages an arbitrary joint-action table over the other agents' policies.
pub(crate) fn average_over_others<F: Fn(usize, usize) -> f64>(
    game: &GameSpec,
    policy: &JointPolicy,
    agent: usize,
    f: F,
) -> SaTable {
    let n_states = game.n_states();
    let n_own = game.n_actions(agent);
    let mut out = SaTable::zeros(n_states, n_own);
    let mut actions = vec![0usize; game.n_agents()];
    for s in 0..n_states {
        for a in 0..game.n_joint_actions() {
            game.decode_joint(a, &mut actions);
            let mut w = 1.0;
            for (j, &aj) in actions.iter().enumerate() {
                if j != agent {
                    w *= policy.prob(j, s, aj);
                }
            }
            if w == 0.0 {
                continue;
            }
            let own = actions[agent];
            let v = out.get(s, own) + w * f(s, a);
            out.set(s, own, v);
        }
    }
    out
}

/// Solves `Q = r~ + gamma P V` with `V(s) = sum_a pi(a|s) Q(s, a)` by a
/// linear solve in `V`. The reward lives on agent `agent_j`'s own actions.
pub fn exact_q_values(
    game: &GameSpec,
    policy: &JointPolicy,
    reward: &SaTable,
    agent_j: usize,
) -> Result<QTable> {
    if reward.n_states != game.n_states() || reward.n_actions != game.n_actions(agent_j) {
        return Err(Error::DimensionMismatch {
            context: format!("exact_q_values reward for agent {agent_j}"),
            expected: game.n_states() * game.n_actions(agent_j),
            got: reward.n_states * reward.n_actions,
        });
    }
    let n = game.n_states();
    let gamma = game.discount();
    let p_pi = policy_transition(game, policy.tables());

    // rho(s) = sum_a pi(a|s) r~(s, a) = E_{a_j ~ pi_j}[r(s, a_j)]
    let mut rho = DVector::zeros(n);
    for s in 0..n {
        let mut acc = 0.0;
        for a in 0..game.n_actions(agent_j) {
            acc += policy.prob(agent_j, s, a) * reward.get(s, a);
        }
        rho[s] = acc;
    }

    // (I - gamma P_pi) V = rho
    let mut m = DMatrix::identity(n, n);
    for s in 0..n {
        for s2 in 0..n {
            m[(s, s2)] -= gamma * p_pi[(s, s2)];
        }
    }
    let v = m.lu().solve(&rho).ok_or(Error::SingularSystem {
        context: "exact_q_values".into(),
    })?;

    let n_joint = game.n_joint_actions();
    let mut q = vec![0.0; n * n_joint];
    for s in 0..n {
        for a in 0..n_joint {
            let own = game.agent_action(a, agent_j);
            let mut exp_next = 0.0;
            for (s2, &pr) in game.transition_row(s, a).iter().enumerate() {
                if pr > 0.0 {
                    exp_next += pr * v[s2];
                }
            }
            q[s * n_joint + a] = reward.get(s, own) + gamma * exp_next;
        }
    }
    Ok(QTable {
        q,
        value: v.iter().copied().collect(),
        n_joint,
    })
}
