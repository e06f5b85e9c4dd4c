//! Equilibrium and stationarity metrics: NE gaps via best-response solves,
//! gradient-mapping norms, fixed-point residuals, per-state MPE checks,
//! occupancy gaps and closed-form constant bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{project_policy, GameSpec, GreedyFloor, JointPolicy, SaTable};
use crate::gradients::exact_gradient_at;
use crate::occupancy::{exact_marginals, OccupancySet};
use crate::utilities::{eval_occupancy_part, eval_utility, smoothness_constants, UtilityKind, UtilitySpec};

/// Inner best-response solver settings: plain projected gradient ascent
/// with a warm start. The gap is reported from the best iterate, so it is
/// a lower bound whenever the solver stops on `max_iter`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerSolve {
    pub stepsize: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for InnerSolve {
    fn default() -> Self {
        InnerSolve {
            stepsize: 0.05,
            max_iter: 5000,
            tol: 1e-6,
        }
    }
}

/// Best-response result for one agent.
#[derive(Debug, Clone)]
pub struct AgentGap {
    pub agent: usize,
    /// `u_i(BR_i, pi_-i) - u_i(pi)`, never below zero thanks to the warm start.
    pub gap: f64,
    pub best_response: SaTable,
    pub iterations: usize,
    /// First-order surplus at the last iterate.
    pub achieved_surplus: f64,
    /// False when the solver stopped on `max_iter`; the gap is then a
    /// flagged lower bound.
    pub converged: bool,
}

/// Per-agent NE gaps plus their maximum.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub per_agent: Vec<AgentGap>,
}

impl GapReport {
    pub fn max_gap(&self) -> f64 {
        self.per_agent.iter().fold(0.0f64, |m, g| m.max(g.gap))
    }

    pub fn all_converged(&self) -> bool {
        self.per_agent.iter().all(|g| g.converged)
    }
}

/// First-order surplus of one agent:
/// `max_{pi_i'} <v_i, pi_i' - pi_i> = sum_s [max_a v_i(s,a) - <v_i(s,.), pi_i(s,.)>]`.
///
/// The inner maximum over the simplex is attained at a vertex per
/// `(state)` row, which gives the closed form.
pub fn fos_surplus_agent(v: &SaTable, policy_table: &SaTable) -> f64 {
    let mut total = 0.0;
    for s in 0..v.n_states {
        let row = v.row(s);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cur: f64 = row
            .iter()
            .zip(policy_table.row(s))
            .map(|(g, p)| g * p)
            .sum();
        total += best - cur;
    }
    total
}

fn best_response(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    agent: usize,
    inner: &InnerSolve,
) -> Result<AgentGap> {
    let occ0 = exact_marginals(game, policy)?;
    let base_value = eval_utility(&utilities[agent], &occ0, policy)?;

    let mut current = policy.clone();
    let mut best_value = base_value;
    let mut best_table = policy.table(agent).clone();
    let mut achieved_surplus = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let floor = GreedyFloor::new(0.0)?;

    for it in 0..inner.max_iter {
        iterations = it + 1;
        let occ = exact_marginals(game, &current)?;
        let value = eval_utility(&utilities[agent], &occ, &current)?;
        if value > best_value {
            best_value = value;
            best_table = current.table(agent).clone();
        }
        let grad = exact_gradient_at(game, utilities, &current, agent, &occ)?;
        achieved_surplus = fos_surplus_agent(&grad.table, current.table(agent));
        if achieved_surplus <= inner.tol {
            converged = true;
            break;
        }
        let moved = current.table(agent).axpy(inner.stepsize, &grad.table);
        let mut tables = current.tables().to_vec();
        tables[agent] = moved;
        let projected = project_policy(&tables, floor, game)?;
        current = policy.with_table(agent, projected.table(agent).clone());
    }
    Ok(AgentGap {
        agent,
        gap: best_value - base_value,
        best_response: best_table,
        iterations,
        achieved_surplus,
        converged,
    })
}

/// NE gap `max_i max_{pi_i'} { u_i(pi_i', pi_-i) - u_i(pi) }`, one inner
/// projected-gradient-ascent solve per agent with the others frozen. A
/// first-order stationary inner point is also a best response here, which
/// justifies solving the inner problem by gradient ascent.
pub fn ne_gap(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    inner: &InnerSolve,
) -> Result<GapReport> {
    if !inner.converged_config_ok() {
        return Err(Error::InvalidConfig(
            "inner solver needs positive stepsize, tol and max_iter".into(),
        ));
    }
    let per_agent = (0..game.n_agents())
        .map(|i| {
            let gap = best_response(game, utilities, policy, i, inner)?;
            if !gap.converged {
                log::info!(
                    "best response for agent {i} hit max_iter with surplus {:.3e}; gap is a lower bound",
                    gap.achieved_surplus
                );
            }
            Ok(gap)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapReport { per_agent })
}

impl InnerSolve {
    fn converged_config_ok(&self) -> bool {
        self.stepsize > 0.0 && self.tol > 0.0 && self.max_iter > 0
    }
}

/// Stationarity metrics at one joint policy.
#[derive(Debug, Clone, Copy)]
pub struct StationarityReport {
    /// `|| G^{eta, alpha}(pi) ||_2` for the run's exploration floor.
    pub grad_mapping_norm: f64,
    /// `|| pi - Proj_Pi(pi + eta v(pi)) ||_2` onto the unfloored policy set;
    /// equals `eta * || G^{eta, 0}(pi) ||` exactly.
    pub fixed_point_residual: f64,
    /// `max_{pi'} <v(pi), pi' - pi>`, summed over agents.
    pub fos_surplus: f64,
}

/// Stationarity with the floor taken as zero.
pub fn stationarity(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    eta: f64,
) -> Result<StationarityReport> {
    stationarity_with_floor(game, utilities, policy, eta, 0.0)
}

/// Stationarity metrics; the gradient mapping uses the given floor, while
/// the fixed-point residual always projects onto the unfloored set.
pub fn stationarity_with_floor(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    eta: f64,
    alpha: f64,
) -> Result<StationarityReport> {
    if eta <= 0.0 {
        return Err(Error::InvalidConfig("stationarity needs eta > 0".into()));
    }
    let occ = exact_marginals(game, policy)?;
    let grads: Vec<SaTable> = (0..game.n_agents())
        .map(|i| Ok(exact_gradient_at(game, utilities, policy, i, &occ)?.table))
        .collect::<Result<_>>()?;

    let moved: Vec<SaTable> = policy
        .tables()
        .iter()
        .zip(&grads)
        .map(|(t, g)| t.axpy(eta, g))
        .collect();
    let proj_floor = project_policy(&moved, GreedyFloor::new(alpha)?, game)?;
    let proj_zero = if alpha == 0.0 {
        proj_floor.clone()
    } else {
        project_policy(&moved, GreedyFloor::new(0.0)?, game)?
    };

    let grad_mapping_norm = policy.l2_distance(&proj_floor) / eta;
    let fixed_point_residual = policy.l2_distance(&proj_zero);
    let fos_surplus = grads
        .iter()
        .zip(policy.tables())
        .map(|(g, t)| fos_surplus_agent(g, t))
        .sum();
    Ok(StationarityReport {
        grad_mapping_norm,
        fixed_point_residual,
        fos_surplus,
    })
}

/// NE gaps re-evaluated under the Dirac initial distribution of every
/// state. Unreachable states zero out occupancies; the KL clamp keeps the
/// utilities finite, so the check is heuristic wherever the exploration
/// assumption fails.
pub fn mpe_check(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    inner: &InnerSolve,
) -> Result<Vec<GapReport>> {
    (0..game.n_states())
        .map(|s| {
            let mut mu = vec![0.0; game.n_states()];
            mu[s] = 1.0;
            let dirac = game.with_initial_dist(mu)?;
            ne_gap(&dirac, utilities, policy, inner)
        })
        .collect()
}

/// Occupancy-distance diagnostics for the table-style runs.
#[derive(Debug, Clone, Copy)]
pub struct OccGaps {
    pub occ_gap: f64,
    /// `-potential` for KL-type potentials; absent for entropy objectives.
    pub kl_occ_gap: Option<f64>,
}

fn l1_to(values: &[f64], target: &[f64]) -> f64 {
    values
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// Occupancy gaps for imitation, coverage and exploration configurations:
/// the L1 distance of the relevant occupancy aggregate to its target, plus
/// the KL gap defined as minus the potential where the potential is a KL.
pub fn occupancy_gaps(utilities: &[UtilitySpec], occ: &OccupancySet) -> Result<OccGaps> {
    let unsupported = |what: &str| Error::UnsupportedKind {
        context: format!("occupancy_gaps over {what}"),
    };
    match &utilities[0].kind {
        UtilityKind::Imitation { .. } => {
            let mut l1 = 0.0;
            let mut kl = 0.0;
            for (i, u) in utilities.iter().enumerate() {
                match &u.kind {
                    UtilityKind::Imitation { target, .. } => {
                        l1 += l1_to(occ.marginals[i].as_slice(), target);
                        kl -= eval_occupancy_part(u, occ)?;
                    }
                    _ => return Err(unsupported("mixed utility kinds")),
                }
            }
            let n = utilities.len() as f64;
            Ok(OccGaps {
                occ_gap: l1 / n,
                kl_occ_gap: Some(kl / n),
            })
        }
        UtilityKind::TeamCoverage { weights, target } => {
            let bar = weighted_marginals(occ, weights);
            Ok(OccGaps {
                occ_gap: l1_to(&bar, target),
                kl_occ_gap: Some(-eval_occupancy_part(&utilities[0], occ)?),
            })
        }
        UtilityKind::CollectiveExploration { mix_row, .. } => {
            let bar = weighted_marginals(occ, mix_row);
            let uniform = vec![1.0 / bar.len() as f64; bar.len()];
            Ok(OccGaps {
                occ_gap: l1_to(&bar, &uniform),
                kl_occ_gap: None,
            })
        }
        _ => Err(unsupported("this utility kind")),
    }
}

fn weighted_marginals(occ: &OccupancySet, weights: &[f64]) -> Vec<f64> {
    let dim = occ.marginals[0].as_slice().len();
    let mut out = vec![0.0; dim];
    for (m, &w) in occ.marginals.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (o, &x) in out.iter_mut().zip(m.as_slice()) {
            *o += w * x;
        }
    }
    out
}

/// Closed-form smoothness constant
/// `beta = N^{3/2} (sum_k |A_k|) / (1-gamma)^2
///         * (3 l_inf + L [(1 + N gamma / (1-gamma)) sqrt(|S|) + |S|])`.
pub fn beta_bound(game: &GameSpec, l_inf: f64, lipschitz: f64) -> f64 {
    let n = game.n_agents() as f64;
    let s = game.n_states() as f64;
    let sum_a: usize = game.action_counts().iter().sum();
    let gamma = game.discount();
    let one_minus = 1.0 - gamma;
    n.powf(1.5) * sum_a as f64 / (one_minus * one_minus)
        * (3.0 * l_inf + lipschitz * ((1.0 + n * gamma / one_minus) * s.sqrt() + s))
}

/// Constant bounds for a configured game: the smoothness constant above
/// (from each utility's analytic bounds) and the loose distribution
/// mismatch coefficient `1 / ((1-gamma) min_s mu(s))`, infinite when the
/// initial distribution lacks full support.
#[derive(Debug, Clone, Copy)]
pub struct ConstantBounds {
    pub beta: f64,
    pub c_loose: f64,
}

pub fn constant_bounds(game: &GameSpec, utilities: &[UtilitySpec]) -> ConstantBounds {
    let (mut l_inf, mut lip) = (0.0f64, 0.0f64);
    for u in utilities {
        let b = smoothness_constants(u, u.eps_kl);
        l_inf = l_inf.max(b.l_inf);
        lip = lip.max(b.lipschitz);
    }
    let beta = beta_bound(game, l_inf, lip);
    let mu_min = game
        .initial_dist()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let c_loose = if mu_min > 0.0 {
        1.0 / ((1.0 - game.discount()) * mu_min)
    } else {
        f64::INFINITY
    };
    ConstantBounds { beta, c_loose }
}

/// Convenience wrapper: the maximum NE gap of `mpe_check`.
pub fn mpe_max_gap(reports: &[GapReport]) -> f64 {
    reports.iter().fold(0.0f64, |m, r| m.max(r.max_gap()))
}
