//! Game tuple, policy spaces, simplex projections and trajectory sampling.
//!
//! Joint actions are indexed by a mixed-radix encoding over `(a_1, ..., a_N)`
//! with agent 0 as the most significant digit. The transition tensor is dense
//! and stored row-major as `|S| * prod(|A_i|)` rows of length `|S|`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for stochasticity checks on user-supplied inputs.
pub const INPUT_TOL: f64 = 1e-12;
/// Tolerance for stochasticity checks after floating-point arithmetic.
pub const ARITH_TOL: f64 = 1e-10;

/// Dense `(state, action)` table for one agent. Also used for gradients and
/// pseudo-rewards, which share the same shape as policy tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaTable {
    pub n_states: usize,
    pub n_actions: usize,
    data: Vec<f64>,
}

impl SaTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        SaTable {
            n_states,
            n_actions,
            data: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_data(n_states: usize, n_actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                context: "SaTable::from_data".into(),
                expected: n_states * n_actions,
                got: data.len(),
            });
        }
        Ok(SaTable {
            n_states,
            n_actions,
            data,
        })
    }

    /// Uniform row-stochastic table.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        SaTable {
            n_states,
            n_actions,
            data: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.data[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.data[s * self.n_actions + a] = v;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.n_actions..(s + 1) * self.n_actions]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Entrywise `self + scale * other`.
    pub fn axpy(&self, scale: f64, other: &SaTable) -> SaTable {
        debug_assert_eq!(self.data.len(), other.data.len());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x + scale * y)
            .collect();
        SaTable {
            n_states: self.n_states,
            n_actions: self.n_actions,
            data,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn l1_distance(&self, other: &SaTable) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| (x - y).abs())
            .sum()
    }

    pub fn l2_distance_sq(&self, other: &SaTable) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }
}

/// Validated game tuple `(N, S, {A_i}, P, mu, gamma)`.
///
/// Utilities are attached separately; this struct carries only dynamics.
#[derive(Debug, Clone)]
pub struct GameSpec {
    n_agents: usize,
    n_states: usize,
    action_counts: Vec<usize>,
    n_joint_actions: usize,
    /// `P(s' | s, a)`, row-major over `(s, a)` pairs, each row of length `|S|`.
    transition: Vec<f64>,
    initial_dist: Vec<f64>,
    discount: f64,
}

impl GameSpec {
    /// Validates a raw game description. Fails on the first violated
    /// invariant: non-stochastic rows, negative entries, dimension errors,
    /// or a discount outside `(0, 1)`.
    pub fn new(
        n_agents: usize,
        n_states: usize,
        action_counts: Vec<usize>,
        transition: Vec<f64>,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_agents == 0 || n_states == 0 {
            return Err(Error::InvalidConfig(
                "game must have at least one agent and one state".into(),
            ));
        }
        if action_counts.len() != n_agents {
            return Err(Error::DimensionMismatch {
                context: "action_counts".into(),
                expected: n_agents,
                got: action_counts.len(),
            });
        }
        if action_counts.iter().any(|&a| a == 0) {
            return Err(Error::InvalidConfig("every agent needs >= 1 action".into()));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "discount must lie in (0, 1), got {discount}"
            )));
        }
        let n_joint_actions: usize = action_counts.iter().product();
        if transition.len() != n_states * n_joint_actions * n_states {
            return Err(Error::DimensionMismatch {
                context: "transition tensor".into(),
                expected: n_states * n_joint_actions * n_states,
                got: transition.len(),
            });
        }
        if initial_dist.len() != n_states {
            return Err(Error::DimensionMismatch {
                context: "initial_dist".into(),
                expected: n_states,
                got: initial_dist.len(),
            });
        }
        for (s, row) in transition.chunks(n_states).enumerate() {
            let (state, joint_action) = (s / n_joint_actions, s % n_joint_actions);
            if let Some(&bad) = row.iter().find(|x| **x < 0.0) {
                return Err(Error::NegativeEntry {
                    context: format!("transition row (state {state}, joint action {joint_action})"),
                    value: bad,
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > INPUT_TOL {
                return Err(Error::NonStochasticRow {
                    context: "transition".into(),
                    state,
                    action: Some(joint_action),
                    sum,
                });
            }
        }
        if let Some(&bad) = initial_dist.iter().find(|x| **x < 0.0) {
            return Err(Error::NegativeEntry {
                context: "initial_dist".into(),
                value: bad,
            });
        }
        let mu_sum: f64 = initial_dist.iter().sum();
        if (mu_sum - 1.0).abs() > INPUT_TOL {
            return Err(Error::NonStochasticRow {
                context: "initial_dist".into(),
                state: 0,
                action: None,
                sum: mu_sum,
            });
        }
        Ok(GameSpec {
            n_agents,
            n_states,
            action_counts,
            n_joint_actions,
            transition,
            initial_dist,
            discount,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn n_actions(&self, agent: usize) -> usize {
        self.action_counts[agent]
    }

    pub fn n_joint_actions(&self) -> usize {
        self.n_joint_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// `P(s' | s, a)` for a mixed-radix joint action index.
    #[inline]
    pub fn prob(&self, s: usize, joint_action: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_joint_actions + joint_action) * self.n_states + s_next]
    }

    /// Transition row `P(. | s, a)`.
    #[inline]
    pub fn transition_row(&self, s: usize, joint_action: usize) -> &[f64] {
        let base = (s * self.n_joint_actions + joint_action) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    /// Mixed-radix encoding, agent 0 most significant.
    pub fn encode_joint(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.n_agents);
        let mut idx = 0;
        for (i, &a) in actions.iter().enumerate() {
            debug_assert!(a < self.action_counts[i]);
            idx = idx * self.action_counts[i] + a;
        }
        idx
    }

    /// Decodes a joint action index into per-agent actions.
    pub fn decode_joint(&self, mut idx: usize, out: &mut [usize]) {
        for i in (0..self.n_agents).rev() {
            out[i] = idx % self.action_counts[i];
            idx /= self.action_counts[i];
        }
    }

    /// Action of a single agent inside a joint action index.
    #[inline]
    pub fn agent_action(&self, joint_action: usize, agent: usize) -> usize {
        let mut idx = joint_action;
        for i in (agent + 1..self.n_agents).rev() {
            idx /= self.action_counts[i];
        }
        idx % self.action_counts[agent]
    }

    /// Same game with a different initial distribution (used by MPE checks).
    pub fn with_initial_dist(&self, mu: Vec<f64>) -> Result<Self> {
        GameSpec::new(
            self.n_agents,
            self.n_states,
            self.action_counts.clone(),
            self.transition.clone(),
            mu,
            self.discount,
        )
    }
}

/// Per-agent stochastic policy tables `pi_i(a_i | s)`.
///
/// The joint policy is the product of the per-agent tables and is only
/// materialized on request.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    tables: Vec<SaTable>,
}

impl JointPolicy {
    pub fn new(tables: Vec<SaTable>, game: &GameSpec) -> Result<Self> {
        if tables.len() != game.n_agents() {
            return Err(Error::DimensionMismatch {
                context: "policy tables".into(),
                expected: game.n_agents(),
                got: tables.len(),
            });
        }
        for (i, t) in tables.iter().enumerate() {
            if t.n_states != game.n_states() || t.n_actions != game.n_actions(i) {
                return Err(Error::DimensionMismatch {
                    context: format!("policy table for agent {i}"),
                    expected: game.n_states() * game.n_actions(i),
                    got: t.n_states * t.n_actions,
                });
            }
            for s in 0..t.n_states {
                let row = t.row(s);
                if let Some(&bad) = row.iter().find(|x| **x < 0.0) {
                    return Err(Error::NegativeEntry {
                        context: format!("policy (agent {i}, state {s})"),
                        value: bad,
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > INPUT_TOL {
                    return Err(Error::NonStochasticRow {
                        context: format!("policy agent {i}"),
                        state: s,
                        action: None,
                        sum,
                    });
                }
            }
        }
        Ok(JointPolicy { tables })
    }

    pub fn uniform(game: &GameSpec) -> Self {
        let tables = (0..game.n_agents())
            .map(|i| SaTable::uniform(game.n_states(), game.n_actions(i)))
            .collect();
        JointPolicy { tables }
    }

    pub fn n_agents(&self) -> usize {
        self.tables.len()
    }

    pub fn table(&self, agent: usize) -> &SaTable {
        &self.tables[agent]
    }

    pub fn tables(&self) -> &[SaTable] {
        &self.tables
    }

    #[inline]
    pub fn prob(&self, agent: usize, s: usize, a: usize) -> f64 {
        self.tables[agent].get(s, a)
    }

    /// Joint probability `prod_i pi_i(a_i | s)` for an encoded joint action.
    pub fn joint_prob(&self, game: &GameSpec, s: usize, joint_action: usize) -> f64 {
        let mut p = 1.0;
        let mut idx = joint_action;
        for i in (0..self.tables.len()).rev() {
            let n = game.n_actions(i);
            p *= self.tables[i].get(s, idx % n);
            idx /= n;
        }
        p
    }

    /// Dense joint policy row over all joint actions at state `s`.
    pub fn dense_row(&self, game: &GameSpec, s: usize) -> Vec<f64> {
        (0..game.n_joint_actions())
            .map(|a| self.joint_prob(game, s, a))
            .collect()
    }

    /// Replaces one agent's table, keeping the others.
    pub fn with_table(&self, agent: usize, table: SaTable) -> JointPolicy {
        let mut tables = self.tables.clone();
        tables[agent] = table;
        JointPolicy { tables }
    }

    /// Flat Euclidean distance over all tables.
    pub fn l2_distance(&self, other: &JointPolicy) -> f64 {
        self.tables
            .iter()
            .zip(&other.tables)
            .map(|(a, b)| a.l2_distance_sq(b))
            .sum::<f64>()
            .sqrt()
    }

    /// Sum of `|pi - pi'|` over all agents, states and own actions.
    pub fn l1_table_distance(&self, other: &JointPolicy) -> f64 {
        self.tables
            .iter()
            .zip(&other.tables)
            .map(|(a, b)| a.l1_distance(b))
            .sum()
    }
}

/// Exploration floor `alpha`: a policy lies in the alpha-greedy set iff
/// `pi_i(a | s) >= alpha / |A_i|` for every `(s, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyFloor {
    alpha: f64,
}

impl GreedyFloor {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "greedy floor must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(GreedyFloor { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Per-coordinate floor for an agent with `n_actions` actions.
    pub fn floor(&self, n_actions: usize) -> f64 {
        self.alpha / n_actions as f64
    }

    pub fn contains(&self, policy: &JointPolicy) -> bool {
        policy.tables().iter().all(|t| {
            let f = self.floor(t.n_actions);
            t.as_slice().iter().all(|&p| p >= f - INPUT_TOL)
        })
    }
}

/// Euclidean projection of `v` onto `{x : x_k >= floor, sum_k x_k = 1}`.
///
/// Substitutes `y = x - floor` and projects `y` onto the simplex of mass
/// `1 - K * floor` with the sort-and-threshold algorithm. The projection is
/// unique; ties between equal thresholds are broken by the sort order and do
/// not affect the result.
pub fn project_simplex_floor(v: &[f64], floor: f64) -> Result<Vec<f64>> {
    let k = v.len();
    if k == 0 {
        return Err(Error::DimensionMismatch {
            context: "project_simplex_floor".into(),
            expected: 1,
            got: 0,
        });
    }
    let mass = 1.0 - floor * k as f64;
    if floor < 0.0 || mass < -INPUT_TOL {
        return Err(Error::InfeasibleFloor { floor, len: k });
    }
    let mass = mass.max(0.0);

    let mut shifted: Vec<f64> = v.iter().map(|x| x - floor).collect();
    let mut sorted = shifted.clone();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).expect("non-finite projection input"));

    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - mass) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    for y in shifted.iter_mut() {
        *y = (*y - theta).max(0.0) + floor;
    }
    Ok(shifted)
}

/// Projects unconstrained per-agent tables row-by-row onto the alpha-greedy
/// policy set. The product structure of the joint policy space makes the
/// joint projection decompose over `(agent, state)` rows.
pub fn project_policy(point: &[SaTable], alpha: GreedyFloor, game: &GameSpec) -> Result<JointPolicy> {
    if point.len() != game.n_agents() {
        return Err(Error::DimensionMismatch {
            context: "project_policy".into(),
            expected: game.n_agents(),
            got: point.len(),
        });
    }
    let mut tables = Vec::with_capacity(point.len());
    for (i, t) in point.iter().enumerate() {
        if t.n_states != game.n_states() || t.n_actions != game.n_actions(i) {
            return Err(Error::DimensionMismatch {
                context: format!("project_policy agent {i}"),
                expected: game.n_states() * game.n_actions(i),
                got: t.n_states * t.n_actions,
            });
        }
        let floor = alpha.floor(t.n_actions);
        let mut out = SaTable::zeros(t.n_states, t.n_actions);
        for s in 0..t.n_states {
            let projected = project_simplex_floor(t.row(s), floor)?;
            out.row_mut(s).copy_from_slice(&projected);
        }
        tables.push(out);
    }
    // Rows come out of an exact projection; skip re-validation to preserve
    // them bit-for-bit (sums are within ARITH_TOL by construction).
    Ok(JointPolicy { tables })
}

/// How a sampled trajectory starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StartMode {
    /// `s_0 ~ mu`, all actions from the joint policy.
    InitialDist,
    /// `s_0` fixed, one agent's first action pinned, the rest from the
    /// joint policy.
    FixedStateAgentAction {
        state: usize,
        agent: usize,
        action: usize,
    },
    /// `s_0` and the full first joint action fixed.
    FixedStateJointAction { state: usize, joint_action: usize },
}

/// A sampled `(state, joint action)` sequence of fixed length.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
    pub start: StartMode,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[inline]
fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (idx, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return idx;
        }
    }
    probs.len() - 1
}

fn sample_joint_action<R: Rng + ?Sized>(
    game: &GameSpec,
    policy: &JointPolicy,
    s: usize,
    rng: &mut R,
    pinned: Option<(usize, usize)>,
) -> usize {
    let mut actions = vec![0usize; game.n_agents()];
    for i in 0..game.n_agents() {
        actions[i] = match pinned {
            Some((agent, action)) if agent == i => action,
            _ => sample_categorical(policy.table(i).row(s), rng),
        };
    }
    game.encode_joint(&actions)
}

/// Samples a length-`horizon` trajectory. Deterministic given
/// `(rng state, game, policy, start)`.
pub fn sample_trajectory<R: Rng + ?Sized>(
    game: &GameSpec,
    policy: &JointPolicy,
    horizon: usize,
    start: StartMode,
    rng: &mut R,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("trajectory horizon must be >= 1".into()));
    }
    let mut steps = Vec::with_capacity(horizon);
    let (mut s, first_action) = match start {
        StartMode::InitialDist => (sample_categorical(game.initial_dist(), rng), None),
        StartMode::FixedStateAgentAction { state, agent, action } => {
            if state >= game.n_states() || agent >= game.n_agents() || action >= game.n_actions(agent)
            {
                return Err(Error::InvalidConfig("start indices out of range".into()));
            }
            (state, Some(sample_joint_action(game, policy, state, rng, Some((agent, action)))))
        }
        StartMode::FixedStateJointAction { state, joint_action } => {
            if state >= game.n_states() || joint_action >= game.n_joint_actions() {
                return Err(Error::InvalidConfig("start indices out of range".into()));
            }
            (state, Some(joint_action))
        }
    };
    for t in 0..horizon {
        let a = match (t, first_action) {
            (0, Some(a)) => a,
            _ => sample_joint_action(game, policy, s, rng, None),
        };
        steps.push((s, a));
        if t + 1 < horizon {
            s = sample_categorical(game.transition_row(s, a), rng);
        }
    }
    Ok(Trajectory { steps, start })
}

/// Independent reproducible generator for `(seed, stream)` pairs.
///
/// Parallel sampling derives one generator per logical stream index; the
/// mapping `(master seed, stream) -> generator` is fixed, so results do not
/// depend on scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
