//! Envy-free, weakly Pareto-efficient random allocations on finite allocation spaces.
//!
//! The pipeline: maximize a regularized weighted welfare over lotteries ([`qsolver`]),
//! label Pareto weights by an envy-free agent in the support, and search a barycentric
//! subdivision of the weight simplex for a completely labeled cell ([`sperner`]). The
//! [`cake`] module converts between fractional cake shares and lotteries over partitions;
//! [`oracle`] re-checks everything by brute force on small instances.

pub mod cake;
pub mod error;
pub mod instance;
pub mod io;
pub mod lp;
pub mod oracle;
pub mod preferences;
pub mod qsolver;
pub mod rational;
pub mod sperner;

pub use error::{FairDivError, Result};
