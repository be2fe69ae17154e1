//! Simulation of charge-parity noise in transmon qubits.
//!
//! Layers, bottom up: dense small-dimension operators ([`qcore`]), the
//! parity-dependent transmon model ([`transmon`]), a Lindblad integrator
//! ([`lindblad`]), pulse protocols ([`sequences`]), the telegraph shot engine
//! ([`montecarlo`]) and fitting/orchestration ([`analysis`]).

pub mod analysis;
pub mod error;
pub mod lindblad;
pub mod montecarlo;
pub mod qcore;
pub mod sequences;
pub mod transmon;

pub use error::{Error, Result};

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Formats a float with 9 significant digits, trailing zeros dropped.
pub fn fmt9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    let r = round_sig9(x);
    if r == 0.0 {
        return "0".into();
    }
    format!("{r}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt9(23.4), "23.4");
        assert_eq!(fmt9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt9(-2.0 / 3.0e6), "-0.000000666666667");
        assert_eq!(fmt9(123456789.6), "123456790");
        assert_eq!(fmt9(0.0), "0");
        assert_eq!(fmt9(-0.0), "0");
        assert_eq!(fmt9(f64::INFINITY), "inf");
    }
}
