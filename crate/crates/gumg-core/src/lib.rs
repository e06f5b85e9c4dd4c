//! Tabular engine for general-utility Markov games.
//!
//! A game couples standard Markov-game dynamics with per-agent utilities
//! that are concave functions of all agents' discounted occupancy measures.
//! This crate provides:
//!
//! - the validated game tuple, policy spaces with exploration floors, and
//!   seeded trajectory sampling ([`game`]);
//! - exact and Monte-Carlo occupancy measures and Q-values ([`occupancy`]);
//! - the composite utility family with value and gradient oracles
//!   ([`utilities`]);
//! - exact, on-policy and generative-model policy gradients plus a
//!   finite-difference oracle ([`gradients`]);
//! - simultaneous projected gradient ascent with a simulated broadcast
//!   mailbox ([`learner`]);
//! - equilibrium diagnostics: NE gaps via best-response solves, fixed-point
//!   residuals, MPE checks and constant bounds ([`diagnostics`]);
//! - game builders for the grid world and seeded random test games
//!   ([`envs`]), preset experiment setups ([`presets`]), and file formats
//!   for games, run configs, traces and policies ([`config`]).
//!
//! All types are immutable after construction and safe to share across
//! threads. Sampling takes caller-owned generators; parallel use derives
//! independent generators via [`game::stream_rng`].

pub mod config;
pub mod diagnostics;
pub mod envs;
pub mod error;
pub mod game;
pub mod gradients;
pub mod learner;
pub mod occupancy;
pub mod presets;
pub mod utilities;

pub use error::{Error, Result};
pub use game::{GameSpec, GreedyFloor, JointPolicy, SaTable, StartMode, Trajectory};
