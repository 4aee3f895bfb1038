//! Joint transceiver and fluid-antenna position optimization for OFDM
//! over-the-air computation.
//!
//! K single-antenna users send symbols on N subcarriers; an access point with
//! M movable antennas combines them so that each subcarrier yields the sum of
//! the users' symbols. The crate minimizes the resulting mean square error by
//! alternating closed-form precoder and MMSE combiner updates with a
//! minorize-maximize antenna position update solved by lattice search.
//!
//! Modules, bottom up:
//! - [`model`]: configuration, layouts, channel realizations.
//! - [`channel`]: field responses and per-subcarrier channels `H_n = F G E_n`.
//! - [`transceiver`]: precoder/combiner updates and MSE.
//! - [`position_opt`]: the position surrogate and sequential placement.
//! - [`ofdm_oracle`]: a sample-level OFDM link used to check the model.
//! - [`harness`]: the AO solvers, baselines and Monte-Carlo runner.

pub mod channel;
pub mod error;
pub mod harness;
pub mod model;
pub mod ofdm_oracle;
pub mod position_opt;
pub mod transceiver;

pub use error::{Error, Result};
pub use model::{AntennaLayout, ChannelRealization, Position, Region, SystemConfig, C64};
