//! Coupled Monte Carlo laboratory for the three-state contact process on Z
//! with `mu >= lambda`: graphical construction, pathwise coupling checks,
//! break-point regeneration, and statistical estimators for the edge speed,
//! its fluctuations, the infected density, and complete convergence.

pub mod breakpoints;
pub mod cli;
pub mod config;
pub mod couplings;
pub mod error;
pub mod estimators;
pub mod events;
pub mod experiments;
pub mod parallel;
pub mod percolation;
pub mod process;

pub use config::{Configuration, SiteState};
pub use error::{Error, Result};
pub use events::{Construction, Event, EventKind, StreamKey};
