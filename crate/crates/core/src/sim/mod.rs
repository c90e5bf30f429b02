//! Closed-loop simulation of an AV platoon followed by one human driver.

pub mod metrics;
pub mod plant;
pub mod profile;
pub mod run;
pub mod scenario;

pub use metrics::{compute_metrics, Metrics};
pub use plant::{Discrepancy, HvPlant, NoiseSettings};
pub use profile::{drive_cycle_standin, emergency_brake_profile, load_velocity_profile, realtime_brake_profile, LoadedProfile};
pub use run::{run_closed_loop, EventKind, SimEvent, SimResult};
pub use scenario::{PlantMode, ProfileSource, ScenarioSpec};
