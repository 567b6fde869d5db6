//! Index-modulated OTFS over doubly dispersive channels: framing, bit
//! mapping, modulation, channel simulation, detection, error bounds and a
//! Monte Carlo BER harness.

pub mod bounds;
pub mod channel;
pub mod detect;
pub mod error;
pub mod frame;
pub mod harness;
pub mod immap;
pub mod modem;

pub use error::{Error, Result};
