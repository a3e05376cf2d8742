//! Proximity-based asset–operator matching from BLE RSSI.
//!
//! The crate follows the data path of the system:
//!
//! - [`pathloss`]: log-distance path-loss model, its inverse and its fit.
//! - [`ekf`]: one-state extended Kalman filter estimating a distance from RSSI.
//! - [`edge`]: wearable-side session segmentation and per-session estimates.
//! - [`matcher`]: server-side assignment of operators to tool sessions, trust
//!   levels and evaluation metrics.
//! - [`simulator`]: synthetic advertisement streams with ground truth.
//! - [`cli`]: file-to-file commands wiring the stages together.

pub mod cli;
pub mod edge;
pub mod ekf;
pub mod error;
pub mod io;
pub mod matcher;
pub mod pathloss;
pub mod simulator;

pub use edge::{Activity, ActiveClasses, Advertisement, DistanceReport, EdgeConfig, Session};
pub use ekf::{DtMode, EkfParams, EkfState};
pub use error::{Error, Result};
pub use matcher::{EvalReport, MatchConfig, MatchProblem, MatchResult, Trust, TruthRecord};
pub use pathloss::{PathLossModel, RangeSample};
pub use simulator::{ScenarioConfig, Simulation};
