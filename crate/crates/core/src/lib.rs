//! Welfare guarantees of auctions with risk-averse bidders: utility models,
//! mechanisms, welfare benchmarks, equilibrium verification and learning,
//! smoothness certificates, and the explicit lower-bound constructions.

pub mod constructions;
pub mod equilibria;
pub mod error;
pub mod mechanisms;
pub mod par;
pub mod quadrature;
pub mod smoothness;
pub mod utility;
pub mod welfare;

pub use error::{Error, Result};

/// Formats a float with 17 significant digits, the CSV convention.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}
