//! Risk-sensitive scenario planning for a differential-drive robot among
//! moving obstacles, with a deterministic benchmark simulator.

pub mod belief;
pub mod bench;
pub mod config;
pub mod controllers;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod navigation;
pub mod planner;
pub mod rng;
pub mod scenario;
pub mod stats;
pub mod world;

pub use config::SuiteConfig;
pub use controllers::{Controller, ControllerKind};
pub use error::{Error, Result};
