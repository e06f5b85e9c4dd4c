//! Exact and stochastic policy gradients, plus truncation and
//! finite-difference oracles.
//!
//! Conventions. Utilities are functions of the `(1 - gamma)`-normalized
//! occupancy measures, and `exact_gradient` is the true gradient of the
//! composite map `pi_i -> F_i(lambda(pi))` extended off the simplex through
//! the occupancy flow equation. In closed form this is
//!
//! `g_i(s, a_i) = d(s) * [ rbar_ii(s, a_i) + gamma * sum_{s'} Pbar_-i(s'|s, a_i) V(s') ]`
//!
//! where `V` is the value of the expected one-step pseudo-reward and
//! `Pbar_-i` averages the kernel over the other agents' policies. Averaging
//! the per-(i,j) Q-values instead (the score-function route taken by the
//! stochastic estimators) adds a per-state constant `d(s) * sum_{j != i}
//! <rbar_ij(s, .), pi_j(. | s)>`; row constants are invisible both to the
//! simplex projection and to every stationarity metric, so the two routes
//! drive identical dynamics. The stochastic estimators carry an overall
//! `(1 - gamma)` so their expectations match this normalization.

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{sample_trajectory, GameSpec, JointPolicy, SaTable, StartMode, Trajectory};
use crate::learner::Mailbox;
use crate::occupancy::{
    estimate_occupancy, exact_marginals, policy_transition, truncated_state_occupancy,
    OccupancySet,
};
use crate::utilities::{grad_utility, eval_utility, UtilitySpec};

/// How a policy gradient was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientProvenance {
    Exact,
    OnPolicy { batch: usize, horizon: usize },
    Generative { batch: usize, horizon: usize },
    FiniteDifference { step: f64 },
}

/// Per-agent gradient table over `(state, own action)`.
#[derive(Debug, Clone)]
pub struct PolicyGradient {
    pub agent: usize,
    pub table: SaTable,
    pub provenance: GradientProvenance,
}

fn check_inputs(game: &GameSpec, utilities: &[UtilitySpec], agent: usize) -> Result<()> {
    if utilities.len() != game.n_agents() {
        return Err(Error::DimensionMismatch {
            context: "utilities list".into(),
            expected: game.n_agents(),
            got: utilities.len(),
        });
    }
    if agent >= game.n_agents() {
        return Err(Error::DimensionMismatch {
            context: "gradient agent index".into(),
            expected: game.n_agents(),
            got: agent,
        });
    }
    Ok(())
}

/// Pseudo-rewards `rbar_ij = grad_{lambda_j} F_i` for all `j`, evaluated at
/// the given occupancies. Agents the utility does not depend on get zeros.
pub fn pseudo_rewards(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    agent: usize,
    occ: &OccupancySet,
) -> Result<Vec<SaTable>> {
    let spec = &utilities[agent];
    let mut out = Vec::with_capacity(game.n_agents());
    for j in 0..game.n_agents() {
        if spec.depends_on(j) {
            out.push(grad_utility(spec, j, occ)?.values);
        } else {
            out.push(SaTable::zeros(game.n_states(), game.n_actions(j)));
        }
    }
    Ok(out)
}

/// Expected one-step pseudo-reward `rho(s) = sum_j <rbar_ij(s,.), pi_j(.|s)>`.
fn expected_pseudo_reward(policy: &JointPolicy, rbars: &[SaTable]) -> Vec<f64> {
    let n_states = rbars[0].n_states;
    let mut rho = vec![0.0; n_states];
    for (j, r) in rbars.iter().enumerate() {
        let t = policy.table(j);
        for s in 0..n_states {
            let mut acc = 0.0;
            for a in 0..r.n_actions {
                acc += r.get(s, a) * t.get(s, a);
            }
            rho[s] += acc;
        }
    }
    rho
}

/// Kernel averaged over the other agents: `Pbar_-i(s' | s, a_i)`, laid out
/// `[s][a_i][s']`.
fn averaged_kernel(game: &GameSpec, policy: &JointPolicy, agent: usize) -> Vec<f64> {
    let n_states = game.n_states();
    let n_own = game.n_actions(agent);
    let mut kernel = vec![0.0; n_states * n_own * n_states];
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
            let base = (s * n_own + own) * n_states;
            for (s2, &pr) in game.transition_row(s, a).iter().enumerate() {
                if pr > 0.0 {
                    kernel[base + s2] += w * pr;
                }
            }
        }
    }
    kernel
}

/// Exact policy gradient for one agent: exact marginals, pseudo-rewards for
/// every `j`, one value solve, then the closed form above.
pub fn exact_gradient(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    agent: usize,
) -> Result<PolicyGradient> {
    let occ = exact_marginals(game, policy)?;
    exact_gradient_at(game, utilities, policy, agent, &occ)
}

/// Exact gradient with the occupancy set supplied by the caller, so that a
/// shared solve can serve several agents.
pub fn exact_gradient_at(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    agent: usize,
    occ: &OccupancySet,
) -> Result<PolicyGradient> {
    check_inputs(game, utilities, agent)?;
    let rbars = pseudo_rewards(game, utilities, agent, occ)?;
    let rho = expected_pseudo_reward(policy, &rbars);

    // V = (I - gamma P_pi)^{-1} rho
    let n = game.n_states();
    let gamma = game.discount();
    let p_pi = policy_transition(game, policy.tables());
    let mut m = nalgebra::DMatrix::identity(n, n);
    for s in 0..n {
        for s2 in 0..n {
            m[(s, s2)] -= gamma * p_pi[(s, s2)];
        }
    }
    let rho_v = nalgebra::DVector::from_column_slice(&rho);
    let v = m.lu().solve(&rho_v).ok_or(Error::SingularSystem {
        context: "exact_gradient".into(),
    })?;

    let kernel = averaged_kernel(game, policy, agent);
    let n_own = game.n_actions(agent);
    let mut table = SaTable::zeros(n, n_own);
    for s in 0..n {
        let d = occ.state_occ[s];
        for a in 0..n_own {
            let base = (s * n_own + a) * n;
            let mut next = 0.0;
            for s2 in 0..n {
                next += kernel[base + s2] * v[s2];
            }
            table.set(s, a, d * (rbars[agent].get(s, a) + gamma * next));
        }
    }
    Ok(PolicyGradient {
        agent,
        table,
        provenance: GradientProvenance::Exact,
    })
}

/// Central finite differences of the composite map `pi_i -> F_i(lambda(pi))`
/// with unconstrained perturbations; the map is defined in an open
/// neighborhood of the simplex through the occupancy flow. Truncation error
/// is `O(step^2)`.
pub fn finite_difference_gradient(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    agent: usize,
    step: f64,
) -> Result<PolicyGradient> {
    check_inputs(game, utilities, agent)?;
    if !(1e-8..=1e-3).contains(&step) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must lie in [1e-8, 1e-3], got {step}"
        )));
    }
    let spec = &utilities[agent];
    let eval_at = |tables: &[SaTable]| -> Result<f64> {
        let d = crate::occupancy::state_occupancy_raw(game, tables)?;
        let marginals = crate::occupancy::marginals_from_state_occ(&d, tables);
        let occ = OccupancySet {
            state_occ: d,
            marginals,
            kind: crate::occupancy::OccupancyKind::Exact,
        };
        eval_utility(spec, &occ, policy)
    };
    let mut tables: Vec<SaTable> = policy.tables().to_vec();
    let n_own = game.n_actions(agent);
    let mut out = SaTable::zeros(game.n_states(), n_own);
    for s in 0..game.n_states() {
        for a in 0..n_own {
            let orig = tables[agent].get(s, a);
            tables[agent].set(s, a, orig + step);
            let up = eval_at(&tables)?;
            tables[agent].set(s, a, orig - step);
            let down = eval_at(&tables)?;
            tables[agent].set(s, a, orig);
            out.set(s, a, (up - down) / (2.0 * step));
        }
    }
    Ok(PolicyGradient {
        agent,
        table: out,
        provenance: GradientProvenance::FiniteDifference { step },
    })
}

/// Truncated averaged Q-table
/// `Qbar^(h)(s, a_i) = E[ sum_{t<h} gamma^t R(s_t, a_t) | s_0 = s, a_{i,0} = a_i ]`
/// for the summed pseudo-reward `R = sum_j rbar_ij(s, a_j)`, with the other
/// agents' first actions drawn from their policies. Returned for
/// `h = 1, ..., horizon` (index `h - 1`).
fn truncated_q_bars(
    game: &GameSpec,
    policy: &JointPolicy,
    rbars: &[SaTable],
    agent: usize,
    horizon: usize,
) -> Vec<SaTable> {
    let n = game.n_states();
    let n_own = game.n_actions(agent);
    let gamma = game.discount();
    let rho = expected_pseudo_reward(policy, rbars);
    let p_pi = policy_transition(game, policy.tables());
    let kernel = averaged_kernel(game, policy, agent);

    // rbar_i(s, a_i) + sum_{j != i} <rbar_j(s,.), pi_j(.|s)>
    let mut first = SaTable::zeros(n, n_own);
    for s in 0..n {
        let mut others = 0.0;
        for (j, r) in rbars.iter().enumerate() {
            if j == agent {
                continue;
            }
            for a in 0..r.n_actions {
                others += r.get(s, a) * policy.prob(j, s, a);
            }
        }
        for a in 0..n_own {
            first.set(s, a, rbars[agent].get(s, a) + others);
        }
    }

    let mut out = Vec::with_capacity(horizon);
    out.push(first.clone());
    // u_tau = P_pi^{tau-1} rho, accumulated into the suffix of the Q-table.
    let mut u = rho;
    let mut acc = first;
    let mut scale = gamma;
    for _tau in 1..horizon {
        for s in 0..n {
            for a in 0..n_own {
                let base = (s * n_own + a) * n;
                let mut w = 0.0;
                for s2 in 0..n {
                    w += kernel[base + s2] * u[s2];
                }
                acc.set(s, a, acc.get(s, a) + scale * w);
            }
        }
        out.push(acc.clone());
        // u <- P_pi u
        let mut u_next = vec![0.0; n];
        for s in 0..n {
            let mut x = 0.0;
            for s2 in 0..n {
                x += p_pi[(s, s2)] * u[s2];
            }
            u_next[s] = x;
        }
        u = u_next;
        scale *= gamma;
    }
    out
}

/// Analytic expectation of the truncated on-policy estimator: states visited
/// at time `t` contribute the `(horizon - t)`-step Q-table, weighted by the
/// truncated occupancy. Pseudo-rewards are evaluated at exact occupancies.
pub fn truncated_gradient(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    agent: usize,
    horizon: usize,
) -> Result<SaTable> {
    check_inputs(game, utilities, agent)?;
    let occ = exact_marginals(game, policy)?;
    let rbars = pseudo_rewards(game, utilities, agent, &occ)?;
    let q_bars = truncated_q_bars(game, policy, &rbars, agent, horizon);

    let n = game.n_states();
    let n_own = game.n_actions(agent);
    let gamma = game.discount();
    let p_pi = policy_transition(game, policy.tables());
    let mut marginal: Vec<f64> = game.initial_dist().to_vec();
    let mut out = SaTable::zeros(n, n_own);
    let mut scale = 1.0 - gamma;
    for t in 0..horizon {
        let q = &q_bars[horizon - t - 1];
        for s in 0..n {
            let w = scale * marginal[s];
            if w == 0.0 {
                continue;
            }
            for a in 0..n_own {
                out.set(s, a, out.get(s, a) + w * q.get(s, a));
            }
        }
        if t + 1 < horizon {
            let mut next = vec![0.0; n];
            for s in 0..n {
                let m = marginal[s];
                if m == 0.0 {
                    continue;
                }
                for s2 in 0..n {
                    next[s2] += m * p_pi[(s, s2)];
                }
            }
            marginal = next;
            scale *= gamma;
        }
    }
    Ok(out)
}

/// Expectation of the generative estimator at truncation `horizon`:
/// `d_H(s) * Qbar^(H)(s, a_i)` with exact pseudo-rewards.
pub fn truncated_generative_expectation(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    agent: usize,
    horizon: usize,
) -> Result<SaTable> {
    check_inputs(game, utilities, agent)?;
    let occ = exact_marginals(game, policy)?;
    let rbars = pseudo_rewards(game, utilities, agent, &occ)?;
    let q_bars = truncated_q_bars(game, policy, &rbars, agent, horizon);
    let d_h = truncated_state_occupancy(game, policy, horizon);
    let n_own = game.n_actions(agent);
    let mut out = SaTable::zeros(game.n_states(), n_own);
    for s in 0..game.n_states() {
        for a in 0..n_own {
            out.set(s, a, d_h[s] * q_bars[horizon - 1].get(s, a));
        }
    }
    Ok(out)
}

/// Applies the score-function estimator to one trajectory, accumulating
/// `sum_t gamma^t R(s_t, a_t) psi_t` into `acc` via suffix sums. The score of
/// the direct parameterization is `1{(s,a)} / pi_i(a | s)`.
fn accumulate_score_estimate(
    game: &GameSpec,
    policy: &JointPolicy,
    rbars: &[SaTable],
    agent: usize,
    traj: &Trajectory,
    acc: &mut SaTable,
) -> Result<()> {
    let gamma = game.discount();
    let h = traj.len();
    // Discounted rewards per step, then suffix sums G_t = sum_{u >= t} gamma^u R_u.
    let mut suffix = vec![0.0; h + 1];
    let mut disc = 1.0;
    let mut discounted = Vec::with_capacity(h);
    for &(s, a) in &traj.steps {
        let mut r = 0.0;
        for (j, rb) in rbars.iter().enumerate() {
            r += rb.get(s, game.agent_action(a, j));
        }
        discounted.push(disc * r);
        disc *= gamma;
    }
    for t in (0..h).rev() {
        suffix[t] = suffix[t + 1] + discounted[t];
    }
    for (t, &(s, a)) in traj.steps.iter().enumerate() {
        let own = game.agent_action(a, agent);
        let p = policy.prob(agent, s, own);
        if p <= 0.0 {
            return Err(Error::ZeroProbabilityAction {
                agent,
                state: s,
                action: own,
            });
        }
        acc.set(s, own, acc.get(s, own) + suffix[t] / p);
    }
    Ok(())
}

/// On-policy stochastic policy gradient. Samples `batch` trajectories of
/// length `horizon` from the initial distribution, estimates the agent's own
/// occupancy from that same batch, reads the other agents' broadcast
/// estimates from the mailbox, and runs the score-function estimator with an
/// overall `(1 - gamma)` normalizer.
pub fn onpolicy_gradient<R: Rng + ?Sized>(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    agent: usize,
    batch: usize,
    horizon: usize,
    rng: &mut R,
    mailbox: &Mailbox,
) -> Result<PolicyGradient> {
    check_inputs(game, utilities, agent)?;
    if batch == 0 || horizon == 0 {
        return Err(Error::InvalidConfig("batch and horizon must be >= 1".into()));
    }
    let trajectories: Vec<Trajectory> = (0..batch)
        .map(|_| sample_trajectory(game, policy, horizon, StartMode::InitialDist, rng))
        .collect::<Result<_>>()?;
    let own = estimate_occupancy(&trajectories, game, policy)?;

    // Assemble the occupancy view: own estimate for this agent, broadcast
    // estimates for the agents this utility actually depends on.
    let mut marginals = own.marginals.clone();
    for j in 0..game.n_agents() {
        if j != agent && utilities[agent].depends_on(j) {
            marginals[j] = mailbox.lambda_of(agent, j)?.clone();
        }
    }
    let occ = OccupancySet {
        state_occ: own.state_occ.clone(),
        marginals,
        kind: own.kind,
    };
    let rbars = pseudo_rewards(game, utilities, agent, &occ)?;

    let mut acc = SaTable::zeros(game.n_states(), game.n_actions(agent));
    for traj in &trajectories {
        accumulate_score_estimate(game, policy, &rbars, agent, traj, &mut acc)?;
    }
    let scale = (1.0 - game.discount()) / batch as f64;
    for x in acc.as_mut_slice() {
        *x *= scale;
    }
    Ok(PolicyGradient {
        agent,
        table: acc,
        provenance: GradientProvenance::OnPolicy { batch, horizon },
    })
}

/// Generative-model gradient with a caller-supplied occupancy estimate
/// (shared across agents by the learner). For every `(s, a_i)` it spawns
/// `batch` trajectories pinned to that cell and averages the discounted
/// pseudo-reward sums; the cell estimate is scaled by `d_hat(s)`.
pub fn generative_gradient_at<R: Rng + ?Sized>(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    agent: usize,
    batch: usize,
    horizon: usize,
    occ: &OccupancySet,
    rng: &mut R,
) -> Result<PolicyGradient> {
    check_inputs(game, utilities, agent)?;
    if batch == 0 || horizon == 0 {
        return Err(Error::InvalidConfig("batch and horizon must be >= 1".into()));
    }
    let rbars = pseudo_rewards(game, utilities, agent, occ)?;
    let gamma = game.discount();
    let n_own = game.n_actions(agent);
    let mut table = SaTable::zeros(game.n_states(), n_own);
    // Cells are visited in fixed index order so results are deterministic
    // for a fixed generator regardless of any outer scheduling.
    for s in 0..game.n_states() {
        for a_own in 0..n_own {
            let mut q_hat = 0.0;
            for _ in 0..batch {
                let traj = sample_trajectory(
                    game,
                    policy,
                    horizon,
                    StartMode::FixedStateAgentAction {
                        state: s,
                        agent,
                        action: a_own,
                    },
                    rng,
                )?;
                let mut disc = 1.0;
                for &(st, at) in &traj.steps {
                    for (j, rb) in rbars.iter().enumerate() {
                        q_hat += disc * rb.get(st, game.agent_action(at, j));
                    }
                    disc *= gamma;
                }
            }
            table.set(s, a_own, occ.state_occ[s] * q_hat / batch as f64);
        }
    }
    Ok(PolicyGradient {
        agent,
        table,
        provenance: GradientProvenance::Generative { batch, horizon },
    })
}

/// Self-contained generative-model gradient: samples its own batch of
/// initial-distribution trajectories for the occupancy estimate, then
/// delegates to [`generative_gradient_at`].
pub fn generative_gradient<R: Rng + ?Sized>(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    agent: usize,
    batch: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<PolicyGradient> {
    if batch == 0 || horizon == 0 {
        return Err(Error::InvalidConfig("batch and horizon must be >= 1".into()));
    }
    let trajectories: Vec<Trajectory> = (0..batch)
        .map(|_| sample_trajectory(game, policy, horizon, StartMode::InitialDist, rng))
        .collect::<Result<_>>()?;
    let occ = estimate_occupancy(&trajectories, game, policy)?;
    generative_gradient_at(game, utilities, policy, agent, batch, horizon, &occ, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{random_game, random_policy};
    use crate::game::stream_rng;
    use crate::learner::Mailbox;
    use crate::occupancy::exact_state_occupancy;
    use crate::utilities::{InnerConcave, UtilityKind};

    fn linear_utilities(game: &GameSpec, seed: u64) -> Vec<UtilitySpec> {
        let mut rng = stream_rng(seed, 2);
        (0..game.n_agents())
            .map(|i| {
                let dim = game.n_states() * game.n_actions(i);
                let reward: Vec<f64> =
                    (0..dim).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
                UtilitySpec::new(i, UtilityKind::LinearReward { reward })
            })
            .collect()
    }

    fn kind_suite(game: &GameSpec, seed: u64) -> Vec<Vec<UtilitySpec>> {
        let n = game.n_agents();
        let dim = game.n_states() * game.n_actions(0);
        let mut rng = stream_rng(seed, 3);
        let mut target: Vec<f64> = (0..dim).map(|_| rand::Rng::gen::<f64>(&mut rng) + 0.3).collect();
        let tsum: f64 = target.iter().sum();
        target.iter_mut().for_each(|x| *x /= tsum);
        let w = vec![1.0 / n as f64; n];
        let mk = |kind_fn: &dyn Fn(usize) -> UtilityKind| -> Vec<UtilitySpec> {
            (0..n).map(|i| UtilitySpec::new(i, kind_fn(i))).collect()
        };
        vec![
            mk(&|_| UtilityKind::Imitation { alpha: 1.0, target: target.clone() }),
            mk(&|_| UtilityKind::ConsensusDiversity { beta: 0.7, weights: w.clone() }),
            mk(&|_| UtilityKind::TeamAggregate {
                coef: 0.8,
                mix_row: w.clone(),
                inner: InnerConcave::NegSqDist(target.clone()),
            }),
            mk(&|_| UtilityKind::TeamCoverage { weights: w.clone(), target: target.clone() }),
            mk(&|_| UtilityKind::CollectiveExploration { coef: 0.9, mix_row: w.clone() }),
        ]
    }

    #[test]
    fn single_agent_linear_reduces_to_classical_pg() {
        // For u = <reward, lambda>, the gradient is d(s) Q(s, a): the
        // classical direct-parameterization theorem for V = u / (1 - gamma),
        // rescaled by (1 - gamma). Verified against a hand-rolled
        // single-agent computation.
        let g = random_game(51, 3, &[3], 0.9, 1.0).unwrap();
        let policy = random_policy(&g, 51);
        let utils = linear_utilities(&g, 51);
        let grad = exact_gradient(&g, &utils, &policy, 0).unwrap();

        let reward = match &utils[0].kind {
            UtilityKind::LinearReward { reward } => reward.clone(),
            _ => unreachable!(),
        };
        let r = SaTable::from_data(3, 3, reward).unwrap();
        let q = crate::occupancy::exact_q_values(&g, &policy, &r, 0).unwrap();
        let d = exact_state_occupancy(&g, &policy).unwrap();
        for s in 0..3 {
            for a in 0..3 {
                let classical = d[s] * q.get(s, a); // (1-gamma) * d Q / (1-gamma)
                assert!(
                    (grad.table.get(s, a) - classical).abs() <= 1e-10,
                    "({s},{a}): {} vs {}",
                    grad.table.get(s, a),
                    classical
                );
            }
        }
    }

    #[test]
    fn exact_matches_finite_differences_all_kinds() {
        let g = random_game(52, 3, &[2, 2], 0.85, 1.0).unwrap();
        let policy = random_policy(&g, 52);
        for utils in kind_suite(&g, 52) {
            for i in 0..g.n_agents() {
                let exact = exact_gradient(&g, &utils, &policy, i).unwrap();
                let fd = finite_difference_gradient(&g, &utils, &policy, i, 1e-5).unwrap();
                let denom = 1.0 + exact.table.sup_norm();
                let mut worst: f64 = 0.0;
                for (x, y) in exact.table.as_slice().iter().zip(fd.table.as_slice()) {
                    worst = worst.max((x - y).abs() / denom);
                }
                assert!(worst <= 1e-5, "agent {i}: rel sup err {worst}");
            }
        }
    }

    #[test]
    fn symmetric_common_interest_gradients_agree() {
        // Two agents, identical roles and policy, common-interest utility:
        // the exact gradients coincide entrywise.
        let g = random_game(53, 3, &[2, 2], 0.9, 1.0).unwrap();
        let policy = JointPolicy::uniform(&g);
        let w = vec![0.5, 0.5];
        let utils: Vec<UtilitySpec> = (0..2)
            .map(|i| {
                UtilitySpec::new(i, UtilityKind::CollectiveExploration {
                    coef: 1.0,
                    mix_row: w.clone(),
                })
            })
            .collect();
        // The game from random_game is not agent-symmetric in general; build
        // a symmetric one by averaging the kernel over the action swap.
        let mut p = vec![0.0; 3 * 4 * 3];
        for s in 0..3 {
            for a in 0..4 {
                let swapped = (a % 2) * 2 + a / 2;
                for s2 in 0..3 {
                    p[(s * 4 + a) * 3 + s2] =
                        0.5 * (g.prob(s, a, s2) + g.prob(s, swapped, s2));
                }
            }
        }
        let sym = GameSpec::new(2, 3, vec![2, 2], p, g.initial_dist().to_vec(), 0.9).unwrap();
        let g1 = exact_gradient(&sym, &utils, &policy, 0).unwrap();
        let g2 = exact_gradient(&sym, &utils, &policy, 1).unwrap();
        for (x, y) in g1.table.as_slice().iter().zip(g2.table.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn fd_error_shrinks_quadratically() {
        let g = random_game(54, 2, &[2], 0.9, 1.0).unwrap();
        let policy = random_policy(&g, 54);
        let utils = kind_suite(&g, 54).remove(4); // entropy: smooth, nonlinear
        let exact = exact_gradient(&g, &utils, &policy, 0).unwrap();
        let err = |step: f64| {
            let fd = finite_difference_gradient(&g, &utils, &policy, 0, step).unwrap();
            fd.table
                .as_slice()
                .iter()
                .zip(exact.table.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
        };
        let e1 = err(1e-3);
        let e2 = err(5e-4);
        let ratio = e1 / e2;
        assert!(
            (2.5..6.0).contains(&ratio),
            "halving the step should shrink error ~4x, got {ratio} ({e1} -> {e2})"
        );
    }

    #[test]
    fn zero_utility_zero_onpolicy_gradient() {
        let g = random_game(55, 2, &[2, 2], 0.9, 1.0).unwrap();
        let policy = random_policy(&g, 55);
        let utils: Vec<UtilitySpec> = (0..2)
            .map(|i| {
                UtilitySpec::new(i, UtilityKind::LinearReward { reward: vec![0.0; 4] })
            })
            .collect();
        let mut mailbox = Mailbox::new(2);
        for j in 0..2 {
            mailbox.post_lambda(j, SaTable::uniform(2, 2));
        }
        let mut rng = stream_rng(55, 4);
        let grad =
            onpolicy_gradient(&g, &utils, &policy, 0, 8, 5, &mut rng, &mailbox).unwrap();
        assert!(grad.table.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn onpolicy_expectation_single_state_linear() {
        // Single state, N=1, H=1, linear reward: the estimator average over
        // many samples lands within 3 standard errors of the exact truncated
        // gradient.
        let g = GameSpec::new(1, 1, vec![3], vec![1.0, 1.0, 1.0], vec![1.0], 0.5).unwrap();
        let policy = random_policy(&g, 56);
        let utils = vec![UtilitySpec::new(0, UtilityKind::LinearReward {
            reward: vec![0.3, -0.6, 0.9],
        })];
        let oracle = truncated_gradient(&g, &utils, &policy, 0, 1).unwrap();
        let mailbox = Mailbox::new(1);
        let mut rng = stream_rng(56, 5);
        let n = 20_000;
        let mut mean = SaTable::zeros(1, 3);
        let mut sq = SaTable::zeros(1, 3);
        for _ in 0..n {
            let g1 = onpolicy_gradient(&g, &utils, &policy, 0, 1, 1, &mut rng, &mailbox).unwrap();
            for a in 0..3 {
                let x = g1.table.get(0, a);
                mean.set(0, a, mean.get(0, a) + x);
                sq.set(0, a, sq.get(0, a) + x * x);
            }
        }
        for a in 0..3 {
            let m = mean.get(0, a) / n as f64;
            let var = (sq.get(0, a) / n as f64 - m * m).max(0.0);
            let se = (var / n as f64).sqrt();
            let exact = oracle.get(0, a);
            assert!(
                (m - exact).abs() <= 3.0 * se + 1e-12,
                "action {a}: mean {m} vs {exact} (se {se})"
            );
        }
    }

    #[test]
    fn onpolicy_expectation_matches_enumeration_exactly() {
        // Exhaustive enumeration of every length-2 trajectory of a 2-state
        // game: the enumerated expectation of the estimator (with exact
        // occupancies in the mailbox) equals the analytic truncated gradient
        // to 1e-10. Pseudo-rewards are fixed inputs in both routes.
        let g = random_game(57, 2, &[2, 2], 0.95, 1.0).unwrap();
        let policy = random_policy(&g, 57);
        for utils in kind_suite(&g, 57) {
            let h = 2;
            let agent = 0;
            let exact_occ = exact_marginals(&g, &policy).unwrap();
            let rbars = pseudo_rewards(&g, &utils, agent, &exact_occ).unwrap();

            // Enumerate (s0, a0, s1, a1) with product probabilities.
            let mut expectation = SaTable::zeros(2, 2);
            for s0 in 0..2 {
                let p_s0 = g.initial_dist()[s0];
                for a0 in 0..g.n_joint_actions() {
                    let p_a0 = policy.joint_prob(&g, s0, a0);
                    for s1 in 0..2 {
                        let p_s1 = g.prob(s0, a0, s1);
                        for a1 in 0..g.n_joint_actions() {
                            let p_a1 = policy.joint_prob(&g, s1, a1);
                            let p = p_s0 * p_a0 * p_s1 * p_a1;
                            if p == 0.0 {
                                continue;
                            }
                            let traj = Trajectory {
                                steps: vec![(s0, a0), (s1, a1)],
                                start: StartMode::InitialDist,
                            };
                            let mut acc = SaTable::zeros(2, 2);
                            accumulate_score_estimate(&g, &policy, &rbars, agent, &traj, &mut acc)
                                .unwrap();
                            let scale = (1.0 - 0.95) * p;
                            for k in 0..4 {
                                expectation.as_mut_slice()[k] += scale * acc.as_slice()[k];
                            }
                        }
                    }
                }
            }
            let oracle = truncated_gradient(&g, &utils, &policy, agent, h).unwrap();
            for (x, y) in expectation.as_slice().iter().zip(oracle.as_slice()) {
                assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn truncated_gradient_approaches_exact() {
        // As H grows, the truncated expectation converges to the exact
        // gradient for a decoupled (imitation) utility.
        let g = random_game(58, 3, &[2, 2], 0.8, 1.0).unwrap();
        let policy = random_policy(&g, 58);
        let utils = kind_suite(&g, 58).remove(0);
        let exact = exact_gradient(&g, &utils, &policy, 1).unwrap();
        let g40 = truncated_gradient(&g, &utils, &policy, 1, 40).unwrap();
        let err = exact
            .table
            .as_slice()
            .iter()
            .zip(g40.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        // Occupancy and Q tails each contribute O(gamma^H) times the
        // pseudo-reward scale.
        assert!(err <= 2e-2, "H=40 truncation error {err}");
        let g80 = truncated_gradient(&g, &utils, &policy, 1, 80).unwrap();
        let err80 = exact
            .table
            .as_slice()
            .iter()
            .zip(g80.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err80 < err && err80 <= 1e-6, "H=80 error {err80}");
    }

    #[test]
    fn generative_zero_rewards_zero_gradient() {
        let g = random_game(59, 2, &[2], 0.9, 1.0).unwrap();
        let policy = random_policy(&g, 59);
        let utils = vec![UtilitySpec::new(0, UtilityKind::LinearReward {
            reward: vec![0.0; 4],
        })];
        let mut rng = stream_rng(59, 6);
        let grad = generative_gradient(&g, &utils, &policy, 0, 4, 3, &mut rng).unwrap();
        assert!(grad.table.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn generative_deterministic_single_state_geometric() {
        // One state: q_hat equals the geometric sum exactly; no randomness in
        // states, only in sampled actions, and the linear pseudo-reward is
        // constant across actions.
        let g = GameSpec::new(1, 1, vec![2], vec![1.0, 1.0], vec![1.0], 0.5).unwrap();
        let policy = JointPolicy::uniform(&g);
        let utils = vec![UtilitySpec::new(0, UtilityKind::LinearReward {
            reward: vec![0.4, 0.4],
        })];
        let mut rng = stream_rng(60, 7);
        let h = 6;
        let grad = generative_gradient(&g, &utils, &policy, 0, 3, h, &mut rng).unwrap();
        let geo: f64 = (0..h).map(|t| 0.5f64.powi(t as i32) * 0.4).sum();
        let d_h = 1.0 - 0.5f64.powi(h as i32);
        for a in 0..2 {
            assert!((grad.table.get(0, a) - d_h * geo).abs() <= 1e-12);
        }
    }

    #[test]
    fn generative_expectation_check_two_state() {
        // Mean over seeded estimates lands within 3 standard errors of the
        // truncated generative expectation (and of the exact gradient
        // truncated at H for this decoupled utility).
        let g = random_game(61, 2, &[2], 0.9, 1.0).unwrap();
        let policy = random_policy(&g, 61);
        let mut rng = stream_rng(61, 8);
        let dim = 4;
        let mut target: Vec<f64> = (0..dim).map(|_| rand::Rng::gen::<f64>(&mut rng) + 0.3).collect();
        let tsum: f64 = target.iter().sum();
        target.iter_mut().for_each(|x| *x /= tsum);
        let utils = vec![UtilitySpec::new(0, UtilityKind::Imitation { alpha: 1.0, target })];
        let h = 8;
        let oracle = truncated_generative_expectation(&g, &utils, &policy, 0, h).unwrap();

        let runs = 200;
        let mut mean = SaTable::zeros(2, 2);
        let mut sq = SaTable::zeros(2, 2);
        // Exact marginals feed the pseudo-rewards; the d_hat multiplier is
        // replaced by its expectation, the truncated occupancy, so the only
        // randomness left is the per-cell trajectory sampling.
        let mut occ = exact_marginals(&g, &policy).unwrap();
        occ.state_occ = crate::occupancy::truncated_state_occupancy(&g, &policy, h);
        for k in 0..runs {
            let mut rng_k = stream_rng(62, k as u64);
            let grad =
                generative_gradient_at(&g, &utils, &policy, 0, 16, h, &occ, &mut rng_k).unwrap();
            for i in 0..4 {
                let x = grad.table.as_slice()[i];
                mean.as_mut_slice()[i] += x;
                sq.as_mut_slice()[i] += x * x;
            }
        }
        for i in 0..4 {
            let m = mean.as_slice()[i] / runs as f64;
            let var = (sq.as_slice()[i] / runs as f64 - m * m).max(0.0);
            let se = (var / runs as f64).sqrt();
            let e = oracle.as_slice()[i];
            assert!(
                (m - e).abs() <= 3.0 * se + 1e-12,
                "cell {i}: {m} vs {e} (se {se})"
            );
        }
    }

    #[test]
    fn generative_expectation_uses_truncated_occupancy() {
        // E[g_hat] = d_H (x) Qbar_H, and for a decoupled utility it matches
        // the closed-form exact gradient assembled from truncated pieces.
        let g = random_game(63, 3, &[2], 0.9, 1.0).unwrap();
        let policy = random_policy(&g, 63);
        let utils = linear_utilities(&g, 63);
        let h = 30;
        let gen = truncated_generative_expectation(&g, &utils, &policy, 0, h).unwrap();
        let exact = exact_gradient(&g, &utils, &policy, 0).unwrap();
        // Both truncations vanish as H grows; at H=30 and gamma=0.9 the gap
        // should be on the order of gamma^H.
        let err = gen
            .as_slice()
            .iter()
            .zip(exact.table.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err <= 0.9f64.powi(28), "error {err}");
    }

    #[test]
    fn smoothness_upper_bound_holds() {
        // || grad u(pi) - grad u(pi') ||_2 <= beta || pi - pi' ||_2 with the
        // loose closed-form beta; an empirical local estimate is computed
        // alongside and must sit below the bound.
        let g = random_game(64, 2, &[2, 2], 0.8, 1.0).unwrap();
        let utils = kind_suite(&g, 64).remove(2); // NegSqDist aggregate: modest constants
        let bounds = crate::utilities::smoothness_constants(&utils[0], utils[0].eps_kl);
        let beta = crate::diagnostics::beta_bound(&g, bounds.l_inf, bounds.lipschitz);
        let mut worst_ratio: f64 = 0.0;
        for seed in 0..30u64 {
            let p1 = random_policy(&g, 300 + seed);
            let p2 = random_policy(&g, 400 + seed);
            let mut num = 0.0;
            for i in 0..2 {
                let g1 = exact_gradient(&g, &utils, &p1, i).unwrap();
                let g2 = exact_gradient(&g, &utils, &p2, i).unwrap();
                num += g1.table.l2_distance_sq(&g2.table);
            }
            let num = num.sqrt();
            let den = p1.l2_distance(&p2);
            if den > 1e-9 {
                worst_ratio = worst_ratio.max(num / den);
            }
        }
        assert!(
            worst_ratio <= beta,
            "observed local Lipschitz {worst_ratio} exceeds beta bound {beta}"
        );
    }
}
