//! Sum-rate optimal resource allocation for restricted FDMA, TDMA and
//! multi-code CDMA, with signature sequence construction.
//!
//! Users carry powers and per-user limits (bandwidth caps, duty-cycle caps
//! or code counts). The [`fdma`] module solves the capped bandwidth problem
//! in closed form; [`cdma`] maps multi-code systems onto it and splits the
//! result over codes; [`sequences`] builds signature matrices that realize
//! the optimum; [`analysis`] drives efficiency and fading studies.

pub mod analysis;
pub mod cdma;
pub mod cli;
pub mod error;
pub mod fdma;
pub mod model;
pub mod sequences;

pub use cdma::{solve_cdma, CdmaInstance, CdmaSolution, SplitStrategy};
pub use error::{Error, Result};
pub use fdma::{allocate_closed_form, AllocationResult, Classification, UserClass};
pub use model::{CdmaConstants, FdmaConstants, Limits, UserOrder, UserProfile};
