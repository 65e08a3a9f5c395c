//! Numerical laboratory for consistent price systems under proportional
//! transaction costs.
//!
//! The pipeline runs from simulated price paths ([`paths`]) through stopping
//! time ladders ([`skeleton`]) to martingale measures on random walks with
//! retirement ([`walk`]) and conditional Esscher tilts ([`esscher`]), which
//! [`cps`] assembles into shadow price processes lying inside the bid-ask band.
//! [`facelift`] turns these into matching upper and lower bounds for the
//! superreplication price of a European claim, and [`cfs_check`] collects
//! statistical evidence for conditional full support.

pub mod cfs_check;
pub mod cps;
pub mod error;
pub mod esscher;
pub mod facelift;
pub mod io;
pub mod linalg;
pub mod paths;
pub mod rng;
pub mod skeleton;
pub mod stats;
pub mod walk;

pub use error::{Error, ErrorClass, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
