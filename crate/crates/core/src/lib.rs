//! Two-player quadratic games between a human and an adapting AI.
//!
//! * [`game`]: cost model, Nash and human-led Stackelberg solvers, condition checks.
//! * [`dynamics`]: the AI adaptation rule and simulated learning dynamics.
//! * [`protocol`]: session plans, symmetries, cursor and display math.
//! * [`records`]: trial records and their CSV table.
//! * [`analysis`]: trimming, medians, histograms and plot files.
//! * [`config`]: TOML game files and the bundled games.

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod protocol;
pub mod records;

pub use error::{Error, Result};
pub use game::{EquilibriumSet, GameParams, JointAction, Matrix, PlayerCost, Vector};
pub use records::{Sample, TrialRecord};
