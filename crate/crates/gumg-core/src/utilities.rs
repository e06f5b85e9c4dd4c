//! The concave utility family: value and gradient oracles for each agent.
//!
//! Every kind is a specialization of the composite
//! `F_i = -alpha_i KL(lambda_i || q_i) - beta_i KL(lambda_i || lambda_bar)
//!        + gamma_i h_i(sum_j W_ij lambda_j) + g_i(pi_-i)`
//! with `lambda_bar = sum_j w_j lambda_j`. KL terms are undefined at zero
//! occupancy, so entries are clamped to `max(lambda, eps_kl)` before logs
//! and divisions; the clamp keeps gradients bounded on the whole simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameSpec, JointPolicy, SaTable};
use crate::occupancy::OccupancySet;

/// Default clamp floor for KL-type utilities.
pub const DEFAULT_EPS_KL: f64 = 1e-6;

/// Concave inner function for team-aggregate utilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InnerConcave {
    /// `h(z) = -sum_x z(x) ln z(x)`.
    Entropy,
    /// `h(z) = <c, z>`.
    Linear(Vec<f64>),
    /// `h(z) = -||z - target||_2^2`.
    NegSqDist(Vec<f64>),
}

impl InnerConcave {
    fn value(&self, z: &[f64], eps: f64) -> f64 {
        match self {
            InnerConcave::Entropy => -z.iter().map(|&x| x.max(eps) * x.max(eps).ln()).sum::<f64>(),
            InnerConcave::Linear(c) => z.iter().zip(c).map(|(x, c)| x * c).sum(),
            InnerConcave::NegSqDist(t) => -z.iter().zip(t).map(|(x, t)| (x - t) * (x - t)).sum::<f64>(),
        }
    }

    fn grad(&self, z: &[f64], eps: f64) -> Vec<f64> {
        match self {
            InnerConcave::Entropy => z.iter().map(|&x| -(x.max(eps).ln() + 1.0)).collect(),
            InnerConcave::Linear(c) => c.clone(),
            InnerConcave::NegSqDist(t) => z.iter().zip(t).map(|(x, t)| -2.0 * (x - t)).collect(),
        }
    }

    fn dim_check(&self, expected: usize) -> Result<()> {
        let got = match self {
            InnerConcave::Entropy => return Ok(()),
            InnerConcave::Linear(c) => c.len(),
            InnerConcave::NegSqDist(t) => t.len(),
        };
        if got != expected {
            return Err(Error::DimensionMismatch {
                context: "inner concave function".into(),
                expected,
                got,
            });
        }
        Ok(())
    }
}

/// Policy penalty `g_i(pi_-i)`. Enters utility values only; it never
/// contributes to pseudo-rewards, which differentiate through occupancies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyPenalty {
    None,
    /// `-coeff * sum_{j != i} ||pi_j - uniform||_2^2`.
    UniformSqDist { coeff: f64 },
}

impl Default for PolicyPenalty {
    fn default() -> Self {
        PolicyPenalty::None
    }
}

/// One agent's utility specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub agent: usize,
    pub kind: UtilityKind,
    #[serde(default)]
    pub penalty: PolicyPenalty,
    pub eps_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UtilityKind {
    /// `<reward, lambda_i>`; the classical Markov-game objective.
    LinearReward { reward: Vec<f64> },
    /// `-alpha KL(lambda_i || target)`.
    Imitation { alpha: f64, target: Vec<f64> },
    /// `-beta KL(lambda_i || lambda_bar)` with `lambda_bar = sum_j w_j lambda_j`.
    ConsensusDiversity { beta: f64, weights: Vec<f64> },
    /// `coef * h(sum_j mix_row[j] lambda_j)`, row `i` of the stochastic matrix W.
    TeamAggregate {
        coef: f64,
        mix_row: Vec<f64>,
        inner: InnerConcave,
    },
    /// `-KL(lambda_bar || target)`.
    TeamCoverage { weights: Vec<f64>, target: Vec<f64> },
    /// `coef * entropy(sum_j mix_row[j] lambda_j)`.
    CollectiveExploration { coef: f64, mix_row: Vec<f64> },
    /// Full composite with all three occupancy terms.
    Composite {
        alpha: f64,
        imit_target: Vec<f64>,
        beta: f64,
        weights: Vec<f64>,
        coef: f64,
        mix_row: Vec<f64>,
        inner: InnerConcave,
    },
}

impl UtilitySpec {
    pub fn new(agent: usize, kind: UtilityKind) -> Self {
        UtilitySpec {
            agent,
            kind,
            penalty: PolicyPenalty::None,
            eps_kl: DEFAULT_EPS_KL,
        }
    }

    /// Whether `F_i` depends on agent `j`'s occupancy measure (equivalently,
    /// whether `grad_utility(.., j, ..)` can be nonzero).
    pub fn depends_on(&self, j: usize) -> bool {
        match &self.kind {
            UtilityKind::LinearReward { .. } | UtilityKind::Imitation { .. } => j == self.agent,
            UtilityKind::ConsensusDiversity { weights, .. } => j == self.agent || weights[j] > 0.0,
            UtilityKind::TeamAggregate { mix_row, .. }
            | UtilityKind::CollectiveExploration { mix_row, .. } => mix_row[j] > 0.0,
            UtilityKind::TeamCoverage { weights, .. } => weights[j] > 0.0,
            UtilityKind::Composite { weights, mix_row, .. } => {
                j == self.agent || weights[j] > 0.0 || mix_row[j] > 0.0
            }
        }
    }

    /// Validates coefficients, weight vectors and target dimensions against
    /// a game. Kinds that mix different agents' occupancies require every
    /// agent to share one action count.
    pub fn validate(&self, game: &GameSpec) -> Result<()> {
        if self.agent >= game.n_agents() {
            return Err(Error::DimensionMismatch {
                context: "utility agent index".into(),
                expected: game.n_agents(),
                got: self.agent,
            });
        }
        if self.eps_kl <= 0.0 {
            return Err(Error::InvalidConfig("eps_kl must be positive".into()));
        }
        let own_dim = game.n_states() * game.n_actions(self.agent);
        let check_weights = |w: &[f64], name: &str| -> Result<()> {
            if w.len() != game.n_agents() {
                return Err(Error::DimensionMismatch {
                    context: name.into(),
                    expected: game.n_agents(),
                    got: w.len(),
                });
            }
            if let Some(&bad) = w.iter().find(|x| **x < 0.0) {
                return Err(Error::NegativeEntry {
                    context: name.into(),
                    value: bad,
                });
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!("{name} must sum to 1, got {sum}")));
            }
            Ok(())
        };
        let check_shared_actions = || -> Result<()> {
            let a0 = game.n_actions(0);
            if game.action_counts().iter().any(|&a| a != a0) {
                return Err(Error::DimensionMismatch {
                    context: "occupancy-coupled utility needs equal action counts".into(),
                    expected: a0,
                    got: *game.action_counts().iter().max().unwrap(),
                });
            }
            Ok(())
        };
        let check_target = |t: &[f64], dim: usize, name: &str| -> Result<()> {
            if t.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: name.into(),
                    expected: dim,
                    got: t.len(),
                });
            }
            if let Some(&bad) = t.iter().find(|x| **x < 0.0) {
                return Err(Error::NegativeEntry {
                    context: name.into(),
                    value: bad,
                });
            }
            let sum: f64 = t.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!("{name} must sum to 1, got {sum}")));
            }
            Ok(())
        };
        match &self.kind {
            UtilityKind::LinearReward { reward } => {
                if reward.len() != own_dim {
                    return Err(Error::DimensionMismatch {
                        context: "linear reward".into(),
                        expected: own_dim,
                        got: reward.len(),
                    });
                }
            }
            UtilityKind::Imitation { alpha, target } => {
                if *alpha < 0.0 {
                    return Err(Error::NegativeEntry {
                        context: "imitation alpha".into(),
                        value: *alpha,
                    });
                }
                check_target(target, own_dim, "imitation target")?;
            }
            UtilityKind::ConsensusDiversity { beta, weights } => {
                if *beta < 0.0 {
                    return Err(Error::NegativeEntry {
                        context: "consensus beta".into(),
                        value: *beta,
                    });
                }
                check_shared_actions()?;
                check_weights(weights, "consensus weights")?;
            }
            UtilityKind::TeamAggregate { coef, mix_row, inner } => {
                if *coef < 0.0 {
                    return Err(Error::NegativeEntry {
                        context: "aggregate coefficient".into(),
                        value: *coef,
                    });
                }
                check_shared_actions()?;
                check_weights(mix_row, "aggregate mix row")?;
                inner.dim_check(game.n_states() * game.n_actions(0))?;
            }
            UtilityKind::TeamCoverage { weights, target } => {
                check_shared_actions()?;
                check_weights(weights, "coverage weights")?;
                check_target(target, game.n_states() * game.n_actions(0), "coverage target")?;
            }
            UtilityKind::CollectiveExploration { coef, mix_row } => {
                if *coef < 0.0 {
                    return Err(Error::NegativeEntry {
                        context: "exploration coefficient".into(),
                        value: *coef,
                    });
                }
                check_shared_actions()?;
                check_weights(mix_row, "exploration mix row")?;
            }
            UtilityKind::Composite {
                alpha,
                imit_target,
                beta,
                weights,
                coef,
                mix_row,
                inner,
            } => {
                for (c, name) in [(alpha, "alpha"), (beta, "beta"), (coef, "coef")] {
                    if *c < 0.0 {
                        return Err(Error::NegativeEntry {
                            context: format!("composite {name}"),
                            value: *c,
                        });
                    }
                }
                check_target(imit_target, own_dim, "composite imitation target")?;
                check_shared_actions()?;
                check_weights(weights, "composite weights")?;
                check_weights(mix_row, "composite mix row")?;
                inner.dim_check(game.n_states() * game.n_actions(0))?;
            }
        }
        Ok(())
    }
}

/// Gradient of one agent's utility w.r.t. another agent's occupancy measure:
/// the implicit, policy-dependent reward driving the policy gradient theorem.
#[derive(Debug, Clone)]
pub struct PseudoReward {
    /// Agent whose utility is differentiated.
    pub owner: usize,
    /// Agent whose occupancy the derivative is taken with respect to.
    pub wrt: usize,
    pub values: SaTable,
}

#[inline]
fn clamped(x: f64, eps: f64) -> f64 {
    x.max(eps)
}

fn kl_clamped(p: &[f64], q: &[f64], eps: f64) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&p, &q)| {
            let pc = clamped(p, eps);
            pc * (pc.ln() - clamped(q, eps).ln())
        })
        .sum()
}

fn weighted_sum(marginals: &[SaTable], weights: &[f64]) -> Vec<f64> {
    let dim = marginals[0].as_slice().len();
    let mut out = vec![0.0; dim];
    for (m, &w) in marginals.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (o, &x) in out.iter_mut().zip(m.as_slice()) {
            *o += w * x;
        }
    }
    out
}

fn check_occ_dims(spec: &UtilitySpec, occ: &OccupancySet) -> Result<()> {
    if spec.agent >= occ.n_agents() {
        return Err(Error::DimensionMismatch {
            context: "utility agent index vs occupancy set".into(),
            expected: occ.n_agents(),
            got: spec.agent,
        });
    }
    Ok(())
}

fn penalty_value(spec: &UtilitySpec, policies: &JointPolicy) -> f64 {
    match spec.penalty {
        PolicyPenalty::None => 0.0,
        PolicyPenalty::UniformSqDist { coeff } => {
            let mut acc = 0.0;
            for (j, t) in policies.tables().iter().enumerate() {
                if j == spec.agent {
                    continue;
                }
                let u = 1.0 / t.n_actions as f64;
                acc += t.as_slice().iter().map(|&p| (p - u) * (p - u)).sum::<f64>();
            }
            -coeff * acc
        }
    }
}

/// Value of `F_i` at the given occupancies. KL entries below the clamp
/// floor are lifted to it first.
pub fn eval_utility(
    spec: &UtilitySpec,
    occupancies: &OccupancySet,
    other_policies: &JointPolicy,
) -> Result<f64> {
    Ok(eval_occupancy_part(spec, occupancies)? + penalty_value(spec, other_policies))
}

/// The occupancy-dependent part of `F_i`, without the policy penalty
/// `g_i(pi_-i)`. Potentials are functions of occupancies alone, so traces
/// and occupancy-gap diagnostics report this quantity.
pub fn eval_occupancy_part(spec: &UtilitySpec, occupancies: &OccupancySet) -> Result<f64> {
    check_occ_dims(spec, occupancies)?;
    let eps = spec.eps_kl;
    let m = &occupancies.marginals;
    let own = m[spec.agent].as_slice();
    let occ_part = match &spec.kind {
        UtilityKind::LinearReward { reward } => {
            if reward.len() != own.len() {
                return Err(Error::DimensionMismatch {
                    context: "linear reward".into(),
                    expected: own.len(),
                    got: reward.len(),
                });
            }
            own.iter().zip(reward).map(|(x, r)| x * r).sum()
        }
        UtilityKind::Imitation { alpha, target } => -alpha * kl_clamped(own, target, eps),
        UtilityKind::ConsensusDiversity { beta, weights } => {
            let bar = weighted_sum(m, weights);
            -beta * kl_clamped(own, &bar, eps)
        }
        UtilityKind::TeamAggregate { coef, mix_row, inner } => {
            let z = weighted_sum(m, mix_row);
            coef * inner.value(&z, eps)
        }
        UtilityKind::TeamCoverage { weights, target } => {
            let bar = weighted_sum(m, weights);
            -kl_clamped(&bar, target, eps)
        }
        UtilityKind::CollectiveExploration { coef, mix_row } => {
            let z = weighted_sum(m, mix_row);
            coef * InnerConcave::Entropy.value(&z, eps)
        }
        UtilityKind::Composite {
            alpha,
            imit_target,
            beta,
            weights,
            coef,
            mix_row,
            inner,
        } => {
            let bar = weighted_sum(m, weights);
            let z = weighted_sum(m, mix_row);
            -alpha * kl_clamped(own, imit_target, eps) - beta * kl_clamped(own, &bar, eps)
                + coef * inner.value(&z, eps)
        }
    };
    Ok(occ_part)
}

/// `grad_{lambda_j} F_i` at the clamped occupancies, as a pseudo-reward over
/// agent `j`'s `(state, action)` pairs.
pub fn grad_utility(spec: &UtilitySpec, j: usize, occupancies: &OccupancySet) -> Result<PseudoReward> {
    check_occ_dims(spec, occupancies)?;
    if j >= occupancies.n_agents() {
        return Err(Error::DimensionMismatch {
            context: "grad_utility target agent".into(),
            expected: occupancies.n_agents(),
            got: j,
        });
    }
    let eps = spec.eps_kl;
    let m = &occupancies.marginals;
    let shape = (m[j].n_states, m[j].n_actions);
    let own = m[spec.agent].as_slice();
    let i = spec.agent;

    let zeros = |shape: (usize, usize)| SaTable::zeros(shape.0, shape.1);
    let from_vec = |shape: (usize, usize), v: Vec<f64>| {
        SaTable::from_data(shape.0, shape.1, v).expect("gradient shape")
    };

    let values = match &spec.kind {
        UtilityKind::LinearReward { reward } => {
            if j == i {
                from_vec(shape, reward.clone())
            } else {
                zeros(shape)
            }
        }
        UtilityKind::Imitation { alpha, target } => {
            if j == i {
                let v = own
                    .iter()
                    .zip(target)
                    .map(|(&l, &q)| -alpha * ((clamped(l, eps) / clamped(q, eps)).ln() + 1.0))
                    .collect();
                from_vec(shape, v)
            } else {
                zeros(shape)
            }
        }
        UtilityKind::ConsensusDiversity { beta, weights } => {
            let bar = weighted_sum(m, weights);
            if j == i {
                let w_i = weights[i];
                let v = own
                    .iter()
                    .zip(&bar)
                    .map(|(&l, &b)| {
                        let bc = clamped(b, eps);
                        -beta * ((clamped(l, eps) / bc).ln() + (bc - w_i * l) / bc)
                    })
                    .collect();
                from_vec(shape, v)
            } else {
                let w_j = weights[j];
                let v = own
                    .iter()
                    .zip(&bar)
                    .map(|(&l, &b)| beta * w_j * l / clamped(b, eps))
                    .collect();
                from_vec(shape, v)
            }
        }
        UtilityKind::TeamAggregate { coef, mix_row, inner } => {
            let z = weighted_sum(m, mix_row);
            let g = inner.grad(&z, eps);
            from_vec(shape, g.iter().map(|&x| coef * mix_row[j] * x).collect())
        }
        UtilityKind::TeamCoverage { weights, target } => {
            let bar = weighted_sum(m, weights);
            let v = bar
                .iter()
                .zip(target)
                .map(|(&b, &t)| -weights[j] * ((clamped(b, eps) / clamped(t, eps)).ln() + 1.0))
                .collect();
            from_vec(shape, v)
        }
        UtilityKind::CollectiveExploration { coef, mix_row } => {
            let z = weighted_sum(m, mix_row);
            let g = InnerConcave::Entropy.grad(&z, eps);
            from_vec(shape, g.iter().map(|&x| coef * mix_row[j] * x).collect())
        }
        UtilityKind::Composite {
            alpha,
            imit_target,
            beta,
            weights,
            coef,
            mix_row,
            inner,
        } => {
            let bar = weighted_sum(m, weights);
            let z = weighted_sum(m, mix_row);
            let hg = inner.grad(&z, eps);
            let mut v = vec![0.0; own.len()];
            if j == i {
                for (k, x) in v.iter_mut().enumerate() {
                    let lc = clamped(own[k], eps);
                    let bc = clamped(bar[k], eps);
                    *x += -alpha * ((lc / clamped(imit_target[k], eps)).ln() + 1.0);
                    *x += -beta * ((lc / bc).ln() + (bc - weights[i] * own[k]) / bc);
                }
            } else {
                for (k, x) in v.iter_mut().enumerate() {
                    *x += beta * weights[j] * own[k] / clamped(bar[k], eps);
                }
            }
            for (k, x) in v.iter_mut().enumerate() {
                *x += coef * mix_row[j] * hg[k];
            }
            from_vec(shape, v)
        }
    };
    Ok(PseudoReward {
        owner: i,
        wrt: j,
        values,
    })
}

/// Analytic bounds on the clamped domain: `l_inf` bounds every pseudo-reward
/// entry, `lipschitz` bounds the gradient's Lipschitz constant w.r.t. the
/// L1 distance between occupancy tuples. Both are valid but loose; see
/// [`empirical_gradient_lipschitz`] for an observed local estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessBounds {
    pub l_inf: f64,
    pub lipschitz: f64,
}

/// Bounds for a utility on the `eps`-clamped domain. Closed forms exist for
/// every supported kind, so nothing here is sampled.
pub fn smoothness_constants(spec: &UtilitySpec, floor: f64) -> SmoothnessBounds {
    let eps = floor;
    let log_eps = eps.ln().abs();
    let max_abs_log = |t: &[f64]| {
        t.iter()
            .map(|&q| clamped(q, eps).ln().abs())
            .fold(0.0f64, f64::max)
    };
    let max_w = |w: &[f64]| w.iter().copied().fold(0.0f64, f64::max);
    match &spec.kind {
        UtilityKind::LinearReward { reward } => SmoothnessBounds {
            l_inf: reward.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            lipschitz: 0.0,
        },
        UtilityKind::Imitation { alpha, target } => SmoothnessBounds {
            l_inf: alpha * (log_eps + max_abs_log(target) + 1.0),
            lipschitz: alpha / eps,
        },
        UtilityKind::ConsensusDiversity { beta, weights } => {
            let w_i = weights[spec.agent];
            let cross = max_w(weights) * if w_i > 0.0 { (1.0 / w_i).min(1.0 / eps) } else { 1.0 / eps };
            SmoothnessBounds {
                l_inf: beta * (log_eps + 1.0).max(cross),
                lipschitz: beta * (3.0 / eps + 1.0 / (eps * eps)),
            }
        }
        UtilityKind::TeamAggregate { coef, mix_row, inner } => {
            let (h_inf, h_lip) = inner_bounds(inner, eps);
            SmoothnessBounds {
                l_inf: coef * max_w(mix_row) * h_inf,
                lipschitz: coef * max_w(mix_row) * h_lip,
            }
        }
        UtilityKind::TeamCoverage { weights, target } => SmoothnessBounds {
            l_inf: max_w(weights) * (log_eps + max_abs_log(target) + 1.0),
            lipschitz: max_w(weights) / eps,
        },
        UtilityKind::CollectiveExploration { coef, mix_row } => SmoothnessBounds {
            l_inf: coef * max_w(mix_row) * (log_eps + 1.0),
            lipschitz: coef * max_w(mix_row) / eps,
        },
        UtilityKind::Composite {
            alpha,
            imit_target,
            beta,
            weights,
            coef,
            mix_row,
            inner,
        } => {
            let a = smoothness_constants(
                &UtilitySpec::new(spec.agent, UtilityKind::Imitation {
                    alpha: *alpha,
                    target: imit_target.clone(),
                }),
                eps,
            );
            let b = smoothness_constants(
                &UtilitySpec::new(spec.agent, UtilityKind::ConsensusDiversity {
                    beta: *beta,
                    weights: weights.clone(),
                }),
                eps,
            );
            let c = smoothness_constants(
                &UtilitySpec::new(spec.agent, UtilityKind::TeamAggregate {
                    coef: *coef,
                    mix_row: mix_row.clone(),
                    inner: inner.clone(),
                }),
                eps,
            );
            SmoothnessBounds {
                l_inf: a.l_inf + b.l_inf + c.l_inf,
                lipschitz: a.lipschitz + b.lipschitz + c.lipschitz,
            }
        }
    }
}

fn inner_bounds(inner: &InnerConcave, eps: f64) -> (f64, f64) {
    match inner {
        InnerConcave::Entropy => (eps.ln().abs() + 1.0, 1.0 / eps),
        InnerConcave::Linear(c) => (c.iter().fold(0.0f64, |m, x| m.max(x.abs())), 0.0),
        InnerConcave::NegSqDist(t) => {
            let t_max = t.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            (2.0 * (1.0 + t_max), 2.0)
        }
    }
}

/// Observed local Lipschitz estimate of the gradient over random occupancy
/// tuples; a sanity companion to the loose analytic bound.
pub fn empirical_gradient_lipschitz<R: rand::Rng + ?Sized>(
    spec: &UtilitySpec,
    n_states: usize,
    action_counts: &[usize],
    samples: usize,
    rng: &mut R,
) -> f64 {
    let n = action_counts.len();
    let draw = |rng: &mut R| -> Vec<SaTable> {
        (0..n)
            .map(|i| {
                let dim = n_states * action_counts[i];
                let mut v: Vec<f64> = (0..dim).map(|_| -rng.gen::<f64>().ln()).collect();
                let sum: f64 = v.iter().sum();
                v.iter_mut().for_each(|x| *x /= sum);
                SaTable::from_data(n_states, action_counts[i], v).unwrap()
            })
            .collect()
    };
    let mut best = 0.0f64;
    for _ in 0..samples {
        let m1 = draw(rng);
        let m2 = draw(rng);
        let occ1 = OccupancySet {
            state_occ: vec![0.0; n_states],
            marginals: m1.clone(),
            kind: crate::occupancy::OccupancyKind::Exact,
        };
        let occ2 = OccupancySet {
            state_occ: vec![0.0; n_states],
            marginals: m2.clone(),
            kind: crate::occupancy::OccupancyKind::Exact,
        };
        let dist: f64 = m1
            .iter()
            .zip(&m2)
            .map(|(a, b)| a.l1_distance(b))
            .sum();
        if dist < 1e-12 {
            continue;
        }
        for j in 0..n {
            let g1 = grad_utility(spec, j, &occ1).unwrap();
            let g2 = grad_utility(spec, j, &occ2).unwrap();
            let diff = g1
                .values
                .as_slice()
                .iter()
                .zip(g2.values.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            best = best.max(diff / dist);
        }
    }
    best
}
