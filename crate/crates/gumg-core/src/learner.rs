//! Simultaneous projected (pseudo-)gradient ascent for all agents, in
//! exact, on-policy and generative-model modes.
//!
//! Each iteration reads the pre-update joint policy everywhere: agents
//! sample, broadcast occupancy estimates through a simulated mailbox,
//! compute their gradient estimates and project, so processing order never
//! matters. Randomness is split per `(iteration, agent)` into independent
//! generator streams (`stream = t * (N + 1) + i`, with slot `N` reserved
//! for the generative mode's shared initial-distribution batch), which
//! keeps runs bit-reproducible for a fixed master seed.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, InnerSolve};
use crate::error::{Error, Result};
use crate::game::{
    project_policy, stream_rng, GameSpec, GreedyFloor, JointPolicy, SaTable,
};
use crate::gradients::{
    exact_gradient_at, generative_gradient, generative_gradient_at, onpolicy_gradient,
    PolicyGradient,
};
use crate::occupancy::{estimate_occupancy, exact_marginals};
use crate::utilities::{eval_occupancy_part, eval_utility, smoothness_constants, UtilitySpec};

/// Gradient regime of Algorithm 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    OnPolicy,
    Generative,
}

/// What the trace reports as the potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMode {
    /// No potential column.
    None,
    /// All utilities are one identical occupancy function; the potential is
    /// that common value. Declared, not detected.
    CommonInterest,
    /// The average of the per-agent occupancy utilities; pairs with the
    /// per-agent imitation runs, whose KL gap is minus this average.
    AverageUtility,
}

/// Per-agent broadcast slots for estimated marginal occupancies and
/// policies. Reads of another agent's slot are counted, which lets tests
/// assert that decoupled utilities never communicate.
#[derive(Debug)]
pub struct Mailbox {
    lambda: Vec<Option<SaTable>>,
    policy: Vec<Option<SaTable>>,
    foreign_reads: AtomicUsize,
}

impl Mailbox {
    pub fn new(n_agents: usize) -> Self {
        Mailbox {
            lambda: (0..n_agents).map(|_| None).collect(),
            policy: (0..n_agents).map(|_| None).collect(),
            foreign_reads: AtomicUsize::new(0),
        }
    }

    pub fn post_lambda(&mut self, agent: usize, lambda: SaTable) {
        self.lambda[agent] = Some(lambda);
    }

    pub fn post_policy(&mut self, agent: usize, policy: SaTable) {
        self.policy[agent] = Some(policy);
    }

    /// Broadcast occupancy estimate of agent `j`, read by `reader`.
    pub fn lambda_of(&self, reader: usize, j: usize) -> Result<&SaTable> {
        if j != reader {
            self.foreign_reads.fetch_add(1, Ordering::Relaxed);
        }
        self.lambda[j].as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!("mailbox has no occupancy estimate for agent {j}"))
        })
    }

    pub fn policy_of(&self, reader: usize, j: usize) -> Result<&SaTable> {
        if j != reader {
            self.foreign_reads.fetch_add(1, Ordering::Relaxed);
        }
        self.policy[j].as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!("mailbox has no policy for agent {j}"))
        })
    }

    /// Number of reads of slots other than the reader's own.
    pub fn foreign_reads(&self) -> usize {
        self.foreign_reads.load(Ordering::Relaxed)
    }
}

/// What the periodic evaluation computes. Evaluation always uses exact
/// occupancies and exact gradients: diagnostics measure the true game
/// quantities even when the learner itself is model-free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ne_gap: bool,
    pub inner: InnerSolve,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ne_gap: true,
            inner: InnerSolve::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub mode: Mode,
    pub eta: f64,
    pub iterations: usize,
    pub batch: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub potential: PotentialMode,
    #[serde(default)]
    pub eval: EvalOptions,
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta <= 0.0 {
            return Err(Error::InvalidConfig("stepsize must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "greedy floor must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        if self.mode == Mode::OnPolicy && self.alpha <= 0.0 {
            return Err(Error::InvalidConfig(
                "on-policy mode requires a positive greedy floor".into(),
            ));
        }
        if self.mode != Mode::Exact && (self.batch == 0 || self.horizon == 0) {
            return Err(Error::InvalidConfig(
                "stochastic modes need batch >= 1 and horizon >= 1".into(),
            ));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// One record of the periodic evaluation.
#[derive(Debug, Clone)]
pub struct EvalPoint {
    pub iter: usize,
    pub potential: Option<f64>,
    pub utilities: Vec<f64>,
    pub ne_gap: Option<f64>,
    pub grad_map_norm: f64,
    pub occ_gap: Option<f64>,
    pub kl_occ_gap: Option<f64>,
    pub wall_clock_s: f64,
    pub samples: u64,
}

/// Full run record: evaluation points plus the final policy.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub points: Vec<EvalPoint>,
    pub final_policy: JointPolicy,
    pub beta_bound: f64,
    pub stepsize_warning: Option<String>,
}

fn check_utilities(game: &GameSpec, utilities: &[UtilitySpec]) -> Result<()> {
    if utilities.len() != game.n_agents() {
        return Err(Error::DimensionMismatch {
            context: "utilities list".into(),
            expected: game.n_agents(),
            got: utilities.len(),
        });
    }
    for (i, u) in utilities.iter().enumerate() {
        if u.agent != i {
            return Err(Error::InvalidConfig(format!(
                "utility at position {i} is declared for agent {}",
                u.agent
            )));
        }
        u.validate(game)?;
    }
    Ok(())
}

fn stream_index(t: usize, agent: usize, n_agents: usize) -> u64 {
    (t as u64) * (n_agents as u64 + 1) + agent as u64
}

/// Potential value at exact occupancies, per the declared mode. Penalties
/// `g_i` are excluded: the potential is a function of occupancies only.
pub fn potential_value(
    utilities: &[UtilitySpec],
    occ: &crate::occupancy::OccupancySet,
    mode: PotentialMode,
) -> Result<Option<f64>> {
    match mode {
        PotentialMode::None => Ok(None),
        PotentialMode::CommonInterest => Ok(Some(eval_occupancy_part(&utilities[0], occ)?)),
        PotentialMode::AverageUtility => {
            let mut acc = 0.0;
            for u in utilities {
                acc += eval_occupancy_part(u, occ)?;
            }
            Ok(Some(acc / utilities.len() as f64))
        }
    }
}

/// One projected step for a single agent: computes this agent's gradient
/// estimate from the given joint policy and projects onto its alpha-greedy
/// set. Other agents' tables are untouched.
pub fn step_agent<R: rand::Rng + ?Sized>(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    policy: &JointPolicy,
    agent: usize,
    config: &LearnerConfig,
    mailbox: &Mailbox,
    rng: &mut R,
) -> Result<SaTable> {
    let grad = match config.mode {
        Mode::Exact => {
            let occ = exact_marginals(game, policy)?;
            exact_gradient_at(game, utilities, policy, agent, &occ)?
        }
        Mode::OnPolicy => onpolicy_gradient(
            game,
            utilities,
            policy,
            agent,
            config.batch,
            config.horizon,
            rng,
            mailbox,
        )?,
        Mode::Generative => generative_gradient(
            game,
            utilities,
            policy,
            agent,
            config.batch,
            config.horizon,
            rng,
        )?,
    };
    project_step(game, policy, agent, &grad, config)
}

fn project_step(
    _game: &GameSpec,
    policy: &JointPolicy,
    agent: usize,
    grad: &PolicyGradient,
    config: &LearnerConfig,
) -> Result<SaTable> {
    let floor = GreedyFloor::new(config.alpha)?;
    let moved = policy.table(agent).axpy(config.eta, &grad.table);
    let mut out = SaTable::zeros(moved.n_states, moved.n_actions);
    let per_coord = floor.floor(moved.n_actions);
    for s in 0..moved.n_states {
        let row = crate::game::project_simplex_floor(moved.row(s), per_coord)?;
        out.row_mut(s).copy_from_slice(&row);
    }
    Ok(out)
}

/// Runs Algorithm 1 for `config.iterations` simultaneous iterations and
/// returns the evaluation trace. Deterministic for a fixed master seed.
pub fn run(
    game: &GameSpec,
    utilities: &[UtilitySpec],
    config: &LearnerConfig,
    init: Option<JointPolicy>,
) -> Result<RunTrace> {
    config.validate()?;
    check_utilities(game, utilities)?;
    let floor = GreedyFloor::new(config.alpha)?;

    // Stepsize guard: warn (never abort) when eta exceeds 1 / beta for the
    // loose closed-form smoothness constant.
    let (mut l_inf, mut lip) = (0.0f64, 0.0f64);
    for u in utilities {
        let b = smoothness_constants(u, u.eps_kl);
        l_inf = l_inf.max(b.l_inf);
        lip = lip.max(b.lipschitz);
    }
    let beta = diagnostics::beta_bound(game, l_inf, lip);
    let stepsize_warning = if config.eta > 1.0 / beta {
        let msg = format!(
            "stepsize {} exceeds 1/beta = {:.3e}; smoothness-based descent is not guaranteed",
            config.eta,
            1.0 / beta
        );
        log::warn!("{msg}");
        Some(msg)
    } else {
        None
    };

    // Initial policy: uniform unless supplied; a supplied start is projected
    // onto the alpha-greedy set so the invariant holds from iteration 0.
    let mut policy = match init {
        Some(p) => {
            if p.n_agents() != game.n_agents() {
                return Err(Error::DimensionMismatch {
                    context: "initial policy".into(),
                    expected: game.n_agents(),
                    got: p.n_agents(),
                });
            }
            project_policy(p.tables(), floor, game)?
        }
        None => {
            if config.alpha > 0.0 {
                project_policy(JointPolicy::uniform(game).tables(), floor, game)?
            } else {
                JointPolicy::uniform(game)
            }
        }
    };

    let n = game.n_agents();
    let started = Instant::now();
    let mut samples: u64 = 0;
    let mut points = Vec::new();

    let evaluate = |policy: &JointPolicy,
                    iter: usize,
                    samples: u64,
                    started: &Instant|
     -> Result<EvalPoint> {
        let occ = exact_marginals(game, policy)?;
        let mut per_agent = Vec::with_capacity(n);
        for u in utilities {
            per_agent.push(eval_utility(u, &occ, policy)?);
        }
        let potential = potential_value(utilities, &occ, config.potential)?;
        let ne_gap = if config.eval.ne_gap {
            Some(
                diagnostics::ne_gap(game, utilities, policy, &config.eval.inner)?
                    .max_gap(),
            )
        } else {
            None
        };
        let st = diagnostics::stationarity_with_floor(
            game, utilities, policy, config.eta, config.alpha,
        )?;
        let (occ_gap, kl_occ_gap) = match diagnostics::occupancy_gaps(utilities, &occ) {
            Ok(gaps) => (Some(gaps.occ_gap), gaps.kl_occ_gap),
            Err(Error::UnsupportedKind { .. }) => (None, None),
            Err(e) => return Err(e),
        };
        Ok(EvalPoint {
            iter,
            potential,
            utilities: per_agent,
            ne_gap,
            grad_map_norm: st.grad_mapping_norm,
            occ_gap,
            kl_occ_gap,
            wall_clock_s: started.elapsed().as_secs_f64(),
            samples,
        })
    };

    points.push(evaluate(&policy, 0, samples, &started)?);

    for t in 0..config.iterations {
        let mut new_tables: Vec<SaTable> = Vec::with_capacity(n);
        match config.mode {
            Mode::Exact => {
                let occ = exact_marginals(game, &policy)?;
                for i in 0..n {
                    let grad = exact_gradient_at(game, utilities, &policy, i, &occ)?;
                    new_tables.push(project_step(game, &policy, i, &grad, config)?);
                }
            }
            Mode::OnPolicy => {
                // Broadcast phase: each agent estimates its own occupancy
                // from its (t, i) stream and posts it. The gradient phase
                // replays the identical stream, so estimator and broadcast
                // use the same trajectories.
                let mut mailbox = Mailbox::new(n);
                for i in 0..n {
                    let mut rng = stream_rng(config.seed, stream_index(t, i, n));
                    let trajs: Vec<_> = (0..config.batch)
                        .map(|_| {
                            crate::game::sample_trajectory(
                                game,
                                &policy,
                                config.horizon,
                                crate::game::StartMode::InitialDist,
                                &mut rng,
                            )
                        })
                        .collect::<Result<_>>()?;
                    let occ = estimate_occupancy(&trajs, game, &policy)?;
                    mailbox.post_lambda(i, occ.marginals[i].clone());
                    mailbox.post_policy(i, policy.table(i).clone());
                }
                for i in 0..n {
                    let mut rng = stream_rng(config.seed, stream_index(t, i, n));
                    let grad = onpolicy_gradient(
                        game,
                        utilities,
                        &policy,
                        i,
                        config.batch,
                        config.horizon,
                        &mut rng,
                        &mailbox,
                    )?;
                    new_tables.push(project_step(game, &policy, i, &grad, config)?);
                }
                samples += (n * config.batch * config.horizon) as u64;
            }
            Mode::Generative => {
                // One shared initial-distribution batch per iteration feeds
                // every agent's occupancy estimate; per-cell rollouts then
                // use per-agent streams.
                let mut rng_shared = stream_rng(config.seed, stream_index(t, n, n));
                let trajs: Vec<_> = (0..config.batch)
                    .map(|_| {
                        crate::game::sample_trajectory(
                            game,
                            &policy,
                            config.horizon,
                            crate::game::StartMode::InitialDist,
                            &mut rng_shared,
                        )
                    })
                    .collect::<Result<_>>()?;
                let occ = estimate_occupancy(&trajs, game, &policy)?;
                for i in 0..n {
                    let mut rng = stream_rng(config.seed, stream_index(t, i, n));
                    let grad = generative_gradient_at(
                        game,
                        utilities,
                        &policy,
                        i,
                        config.batch,
                        config.horizon,
                        &occ,
                        &mut rng,
                    )?;
                    new_tables.push(project_step(game, &policy, i, &grad, config)?);
                }
                let cells: usize = (0..n).map(|i| game.n_states() * game.n_actions(i)).sum();
                samples += ((cells + 1) * config.batch * config.horizon) as u64;
            }
        }
        policy = JointPolicy::new(new_tables, game).unwrap_or_else(|_| {
            unreachable!("projected rows are stochastic by construction")
        });

        let done = t + 1;
        if done % config.eval_every == 0 || done == config.iterations {
            points.push(evaluate(&policy, done, samples, &started)?);
        }
    }

    Ok(RunTrace {
        points,
        final_policy: policy,
        beta_bound: beta,
        stepsize_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{random_game, random_policy};
    use crate::utilities::{UtilityKind, UtilitySpec};

    fn imitation_utils(game: &GameSpec, seed: u64) -> Vec<UtilitySpec> {
        (0..game.n_agents())
            .map(|i| {
                let target = crate::occupancy::exact_marginals(game, &random_policy(game, seed + i as u64))
                    .unwrap()
                    .marginals[i]
                    .as_slice()
                    .to_vec();
                UtilitySpec::new(i, UtilityKind::Imitation { alpha: 1.0, target })
            })
            .collect()
    }

    fn quick_config(mode: Mode, t: usize) -> LearnerConfig {
        LearnerConfig {
            mode,
            eta: 0.05,
            iterations: t,
            batch: 8,
            horizon: 10,
            alpha: if mode == Mode::OnPolicy { 0.05 } else { 0.0 },
            seed: 11,
            eval_every: usize::MAX.min(1_000_000),
            potential: PotentialMode::AverageUtility,
            eval: EvalOptions {
                ne_gap: false,
                inner: InnerSolve::default(),
            },
        }
    }

    #[test]
    fn zero_iterations_single_eval_point() {
        let g = random_game(71, 2, &[2, 2], 0.9, 1.0).unwrap();
        let utils = imitation_utils(&g, 71);
        let trace = run(&g, &utils, &quick_config(Mode::Exact, 0), None).unwrap();
        assert_eq!(trace.points.len(), 1);
        assert_eq!(trace.points[0].iter, 0);
        assert_eq!(trace.final_policy, JointPolicy::uniform(&g));
    }

    #[test]
    fn onpolicy_requires_positive_alpha() {
        let mut cfg = quick_config(Mode::OnPolicy, 1);
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
        cfg.alpha = 0.1;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let g = random_game(72, 2, &[2], 0.9, 1.0).unwrap();
        let utils = vec![UtilitySpec::new(0, UtilityKind::LinearReward {
            reward: vec![0.0; 4],
        })];
        let policy = random_policy(&g, 72);
        let cfg = quick_config(Mode::Exact, 1);
        let mailbox = Mailbox::new(1);
        let mut rng = stream_rng(0, 0);
        let updated = step_agent(&g, &utils, &policy, 0, &cfg, &mailbox, &mut rng).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                assert!((updated.get(s, a) - policy.prob(0, s, a)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn step_agent_respects_floor() {
        let g = random_game(73, 2, &[3, 2], 0.9, 1.0).unwrap();
        let utils = imitation_utils(&g, 73);
        let policy = random_policy(&g, 73);
        let mut cfg = quick_config(Mode::OnPolicy, 1);
        cfg.alpha = 0.1;
        cfg.eta = 0.5;
        let mut mailbox = Mailbox::new(2);
        for j in 0..2 {
            let occ = crate::occupancy::exact_marginals(&g, &policy).unwrap();
            mailbox.post_lambda(j, occ.marginals[j].clone());
        }
        let mut rng = stream_rng(73, 9);
        let updated = step_agent(&g, &utils, &policy, 0, &cfg, &mailbox, &mut rng).unwrap();
        for s in 0..2 {
            for a in 0..3 {
                assert!(updated.get(s, a) >= 0.1 / 3.0 - 1e-12);
            }
        }
    }

    #[test]
    fn run_deterministic_per_seed() {
        let g = random_game(74, 2, &[2, 2], 0.9, 1.0).unwrap();
        let utils = imitation_utils(&g, 74);
        let mut cfg = quick_config(Mode::OnPolicy, 5);
        cfg.alpha = 0.1;
        let t1 = run(&g, &utils, &cfg, None).unwrap();
        let t2 = run(&g, &utils, &cfg, None).unwrap();
        assert_eq!(t1.final_policy, t2.final_policy);
        let mut cfg2 = cfg.clone();
        cfg2.seed = 12;
        let t3 = run(&g, &utils, &cfg2, None).unwrap();
        assert_ne!(t1.final_policy, t3.final_policy);
    }

    #[test]
    fn sample_count_exact_formula() {
        let g = random_game(75, 2, &[2, 2], 0.9, 1.0).unwrap();
        let utils = imitation_utils(&g, 75);
        let mut cfg = quick_config(Mode::OnPolicy, 3);
        cfg.alpha = 0.1;
        cfg.batch = 4;
        cfg.horizon = 6;
        cfg.eval_every = 1;
        let trace = run(&g, &utils, &cfg, None).unwrap();
        let last = trace.points.last().unwrap();
        assert_eq!(last.samples, (3 * 2 * 4 * 6) as u64);

        let mut cfg_gen = cfg.clone();
        cfg_gen.mode = Mode::Generative;
        cfg_gen.alpha = 0.0;
        let trace = run(&g, &utils, &cfg_gen, None).unwrap();
        let cells = 2 * 2 + 2 * 2; // sum_i |S| |A_i|
        assert_eq!(
            trace.points.last().unwrap().samples,
            (3 * (cells + 1) * 4 * 6) as u64
        );
    }

    #[test]
    fn decoupled_utilities_never_read_mailbox() {
        // Imitation depends only on the agent's own occupancy, so the
        // foreign-read counter must stay at zero through a whole run.
        let g = random_game(76, 2, &[2, 2], 0.9, 1.0).unwrap();
        let utils = imitation_utils(&g, 76);
        let policy = JointPolicy::uniform(&g);
        let mut mailbox = Mailbox::new(2);
        for j in 0..2 {
            let occ = crate::occupancy::exact_marginals(&g, &policy).unwrap();
            mailbox.post_lambda(j, occ.marginals[j].clone());
        }
        let mut rng = stream_rng(76, 0);
        for i in 0..2 {
            let _ = onpolicy_gradient(&g, &utils, &policy, i, 4, 5, &mut rng, &mailbox).unwrap();
        }
        assert_eq!(mailbox.foreign_reads(), 0);

        // A coupled utility must read the other agent's slot.
        let coupled: Vec<UtilitySpec> = (0..2)
            .map(|i| {
                UtilitySpec::new(i, UtilityKind::CollectiveExploration {
                    coef: 1.0,
                    mix_row: vec![0.5, 0.5],
                })
            })
            .collect();
        let _ = onpolicy_gradient(&g, &coupled, &policy, 0, 4, 5, &mut rng, &mailbox).unwrap();
        assert!(mailbox.foreign_reads() > 0);
    }

    #[test]
    fn simultaneity_matches_step_agent() {
        // The run loop's update for each agent equals step_agent applied to
        // the pre-update policy with the matching stream, regardless of
        // processing order.
        let g = random_game(77, 2, &[2, 2], 0.9, 1.0).unwrap();
        let utils = imitation_utils(&g, 77);
        let mut cfg = quick_config(Mode::OnPolicy, 1);
        cfg.alpha = 0.1;
        cfg.eval_every = 1;
        let trace = run(&g, &utils, &cfg, None).unwrap();

        let policy0 = crate::game::project_policy(
            JointPolicy::uniform(&g).tables(),
            GreedyFloor::new(cfg.alpha).unwrap(),
            &g,
        )
        .unwrap();
        let mut mailbox = Mailbox::new(2);
        for i in [1usize, 0] {
            let mut rng = stream_rng(cfg.seed, stream_index(0, i, 2));
            let trajs: Vec<_> = (0..cfg.batch)
                .map(|_| {
                    crate::game::sample_trajectory(
                        &g,
                        &policy0,
                        cfg.horizon,
                        crate::game::StartMode::InitialDist,
                        &mut rng,
                    )
                    .unwrap()
                })
                .collect();
            let occ = estimate_occupancy(&trajs, &g, &policy0).unwrap();
            mailbox.post_lambda(i, occ.marginals[i].clone());
        }
        // Process agents in reversed order; the result must be bit-identical.
        for i in [1usize, 0] {
            let mut rng = stream_rng(cfg.seed, stream_index(0, i, 2));
            let updated =
                step_agent(&g, &utils, &policy0, i, &cfg, &mailbox, &mut rng).unwrap();
            assert_eq!(updated, *trace.final_policy.table(i));
        }
    }

    #[test]
    fn stepsize_guard_warns_but_runs() {
        let g = random_game(78, 2, &[2], 0.9, 1.0).unwrap();
        let utils = imitation_utils(&g, 78);
        let mut cfg = quick_config(Mode::Exact, 1);
        cfg.eta = 10.0; // far beyond 1/beta for KL utilities
        let trace = run(&g, &utils, &cfg, None).unwrap();
        assert!(trace.stepsize_warning.is_some());
        assert_eq!(trace.points.last().unwrap().iter, 1);
    }
}
