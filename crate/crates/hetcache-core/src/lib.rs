//! Solver for joint cache placement, user association and macro/pico time
//! partitioning in a cache-enabled heterogeneous wireless network with
//! wireless backhaul.
//!
//! A single macro cell contains pico base stations with file caches fed over
//! a wireless backhaul. Traffic is a spatial arrival density, discretized by
//! Monte Carlo sampling into a weighted point cloud. For a given pico-time
//! budget, each pico's optimal policy is to cache the most popular files and
//! serve the locations whose pico-vs-macro benefit ratio clears a threshold;
//! the budget itself is then chosen where the per-pico thresholds sum to
//! one. Everything downstream of the cloud is deterministic and exact on the
//! discrete model, and independent brute-force oracles validate the solvers
//! on small instances.

pub mod error;
pub mod master;
pub mod oracle;
pub mod popularity;
pub mod sampling;
pub mod scenario;
pub mod sensitivity;
pub mod subproblem;

pub use error::{Error, Result};
pub use master::{MasterContext, MasterSolution, Regime};
pub use popularity::Popularity;
pub use sampling::{generate_cloud, PointCloud, SamplePoint};
pub use scenario::{load_scenario, CoverageMode, PicoSite, Point, ScenarioConfig};
pub use sensitivity::{sweep, SensitivityReport, SweepTable};
pub use subproblem::{build_load_curve, solve_subproblem, LoadCurve, SubproblemSolution};
