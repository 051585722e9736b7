//! Lighting social game: occupants vote on a shared light level, the mean
//! vote is implemented, and points for a lottery reward votes below the
//! baseline.
//!
//! The crate covers the whole loop: the game model ([`game`]), equilibrium
//! computation ([`equilibrium`]), utility learning from vote logs
//! ([`estimation`]), one-day-ahead prediction against simple baselines
//! ([`prediction`]), log ingestion and energy accounting ([`pipeline`]), and
//! the live game service ([`service`]).

pub mod equilibrium;
pub mod estimation;
pub mod game;
pub mod observation;
pub mod pipeline;
pub mod prediction;
pub mod service;
pub mod stats;
pub mod synthetic;

pub use equilibrium::{solve_nash, SolveResult, SolverParams};
pub use estimation::{ThetaEstimate, Strata};
pub use game::{GameConfig, GameError, NashCertificate, Role, ThetaVector, VoteProfile};
pub use observation::{Observation, ObservationSet, Region};
pub use prediction::{predict_day, PredictionDistribution, PresenceModel};
