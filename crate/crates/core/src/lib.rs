//! Ordinal-potential approximation of finite normal-form games.
//!
//! A game is turned into a common-interest game by building its nonnegative
//! deviation graph, condensing strongly connected components, and propagating
//! a potential along a topological order of the condensation. The
//! [`replicator`] and [`experiment`] modules simulate learning dynamics on the
//! original and potentialized games and compare their convergence.

pub mod error;
pub mod experiment;
pub mod game;
pub mod graph;
pub mod potential;
pub mod replicator;

pub use error::{Error, Result};
pub use game::{normalize_rewards, random_game, Game, Profile};
pub use graph::{Condensation, DeviationGraph, Edge, TieBreak};
pub use potential::{compute_potential, potentialized_game, PotentialFunction};
pub use replicator::{Policy, SimulationConfig, SimulationTrace};

