//! Link-level simulator for downlink co-channel interference (CCI) in a
//! three-cell OFDM network.
//!
//! Two cooperating base stations repeat each pair of symbols on two
//! subcarriers with the roles swapped (coordinated symbol repetition), while a
//! third base station interferes. The mobile receiver runs a joint
//! maximum-likelihood canceler over all three base-station symbols on every
//! subcarrier and merges the two hard decisions of each symbol with
//! channel-magnitude weights.
//!
//! The processing chain is
//! [`modem`] → [`channel`] → [`estimator`] → [`canceler`], driven by the
//! Monte-Carlo engine in [`harness`]. [`analytic`] holds the closed-form BER
//! of the uncoordinated, uncancelled system, and [`cli`] is the command-line
//! front end that writes sweep results as CSV.

pub mod analytic;
pub mod canceler;
pub mod channel;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod modem;

pub use error::{Error, Result};

/// Number of base stations in the simulated network.
pub const N_BS: usize = 3;
