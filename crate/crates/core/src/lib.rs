//! Mixed-platoon control: ARX human-driver model with a sparse GP
//! correction, chance-constrained MPC, and a closed-loop simulator.

pub mod dynamics;
pub mod error;
pub mod gp;
pub mod hv;
pub mod kv;
pub mod mpc;
pub mod numfmt;
pub mod sim;
pub mod train;

pub use error::{PlatoonError, Result};
