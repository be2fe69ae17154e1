//! Transmon device model: parity-band dispersion, detunings and coherence
//! constants.
//!
//! Units: ordinary frequencies in MHz, times in us, angular frequencies in
//! rad/us. [`mhz_to_angular`] is the only place a factor of 2*pi enters.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MHz -> rad/us.
pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz
}

/// Island charge parity. `Plus` is the band with the higher transition
/// frequency while `cos(2 pi n_g) > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parity {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Plus => 1.0,
            Parity::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Parity {
        match self {
            Parity::Plus => Parity::Minus,
            Parity::Minus => Parity::Plus,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Parity::Plus => "+",
            Parity::Minus => "-",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Parity> {
        match s {
            "+" => Some(Parity::Plus),
            "-" => Some(Parity::Minus),
            _ => None,
        }
    }
}

/// Half the parity-band splitting, `eps cos(2 pi n_g)`. Negative past the
/// dispersion node at `n_g = 0.25`.
pub fn dispersion(eps_mhz: f64, ng: f64) -> f64 {
    eps_mhz * (2.0 * PI * ng).cos()
}

/// Parity-dependent transition frequency `fbar +/- eps cos(2 pi n_g)`.
pub fn transition_freq(fbar_mhz: f64, eps_mhz: f64, ng: f64, parity: Parity) -> f64 {
    fbar_mhz + parity.sign() * dispersion(eps_mhz, ng)
}

/// Rotating-frame detuning `delta_omega +/- 2 pi Delta01` in rad/us.
pub fn parity_detuning(delta_omega: f64, delta01_mhz: f64, parity: Parity) -> f64 {
    delta_omega + parity.sign() * mhz_to_angular(delta01_mhz)
}

/// Relative charge-dispersion suppression `exp(-sqrt(8 E_J/E_C))`.
pub fn asymptotic_suppression(ej_over_ec: f64) -> Result<f64> {
    if !(ej_over_ec > 0.0) || !ej_over_ec.is_finite() {
        return Err(Error::Domain(format!(
            "E_J/E_C must be positive, got {ej_over_ec}"
        )));
    }
    Ok((-(8.0 * ej_over_ec).sqrt()).exp())
}

/// Device and timing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub eps01_mhz: f64,
    pub eps12_mhz: f64,
    /// Gate charge in units of 2e, within `[0, 0.5)`.
    pub ng: f64,
    pub fbar01_mhz: f64,
    pub fbar12_mhz: f64,
    pub alpha_mhz: f64,
    pub t1_us: f64,
    pub tphi_us: f64,
    pub parity_rate_per_us: f64,
    pub ej_over_ec: f64,
    pub t_readout_us: f64,
    pub t_reset_us: f64,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: impl Into<String>) -> Error {
            Error::InvalidParameter {
                field,
                reason: reason.into(),
            }
        }
        let finite = [
            ("eps01_mhz", self.eps01_mhz),
            ("eps12_mhz", self.eps12_mhz),
            ("ng", self.ng),
            ("fbar01_mhz", self.fbar01_mhz),
            ("fbar12_mhz", self.fbar12_mhz),
            ("alpha_mhz", self.alpha_mhz),
            ("t1_us", self.t1_us),
            ("tphi_us", self.tphi_us),
            ("parity_rate_per_us", self.parity_rate_per_us),
            ("ej_over_ec", self.ej_over_ec),
            ("t_readout_us", self.t_readout_us),
            ("t_reset_us", self.t_reset_us),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(bad(name, "must be finite"));
            }
        }
        if self.eps01_mhz < 0.0 {
            return Err(bad("eps01_mhz", "must be >= 0"));
        }
        if self.eps12_mhz < 0.0 {
            return Err(bad("eps12_mhz", "must be >= 0"));
        }
        if self.t1_us <= 0.0 {
            return Err(bad("t1_us", "must be > 0"));
        }
        if self.tphi_us <= 0.0 {
            return Err(bad("tphi_us", "must be > 0"));
        }
        if self.parity_rate_per_us < 0.0 {
            return Err(bad("parity_rate_per_us", "must be >= 0"));
        }
        if !(0.0..0.5).contains(&self.ng) {
            return Err(bad("ng", "must lie in [0, 0.5)"));
        }
        if self.ej_over_ec <= 0.0 {
            return Err(bad("ej_over_ec", "must be > 0"));
        }
        if self.t_readout_us < 0.0 {
            return Err(bad("t_readout_us", "must be >= 0"));
        }
        if self.t_reset_us < 0.0 {
            return Err(bad("t_reset_us", "must be >= 0"));
        }
        Ok(())
    }

    /// `Delta01(n_g)` in MHz.
    pub fn delta01(&self) -> f64 {
        dispersion(self.eps01_mhz, self.ng)
    }

    /// `Delta12(n_g)` in MHz.
    pub fn delta12(&self) -> f64 {
        dispersion(self.eps12_mhz, self.ng)
    }

    /// `1/T1`.
    pub fn gamma1(&self) -> f64 {
        1.0 / self.t1_us
    }

    /// `2/T_phi`, the rate multiplying the `a^dagger a` collapse operator.
    pub fn gamma_phi(&self) -> f64 {
        2.0 / self.tphi_us
    }

    /// Markovian transverse time `1/(1/(2 T1) + 1/T_phi)`.
    pub fn t2_markov(&self) -> f64 {
        1.0 / (1.0 / (2.0 * self.t1_us) + 1.0 / self.tphi_us)
    }

    /// Returns a copy whose 0-1 parity splitting equals `delta01_mhz` at `n_g = 0`.
    pub fn with_delta01(&self, delta01_mhz: f64) -> DeviceParams {
        DeviceParams {
            eps01_mhz: delta01_mhz,
            ng: 0.0,
            ..*self
        }
    }

    /// Returns a copy with `T_phi` chosen so that the Markovian `T2*` equals
    /// `t2_us` at fixed `T1`.
    pub fn with_t2_markov(&self, t2_us: f64) -> Result<DeviceParams> {
        let inv_phi = 1.0 / t2_us - 1.0 / (2.0 * self.t1_us);
        if !(inv_phi > 0.0) {
            return Err(Error::Domain(format!(
                "T2* = {t2_us} us unreachable with T1 = {} us",
                self.t1_us
            )));
        }
        Ok(DeviceParams {
            tphi_us: 1.0 / inv_phi,
            ..*self
        })
    }
}

impl Default for DeviceParams {
    /// Dispersion amplitudes of 6 kHz (0-1) and 150 kHz (1-2), a 1 kHz parity
    /// rate and 10 us readout/reset. The nominal frequencies and anharmonicity
    /// are placeholders that the rotating-frame dynamics do not depend on.
    fn default() -> Self {
        DeviceParams {
            eps01_mhz: 0.006,
            eps12_mhz: 0.150,
            ng: 0.0,
            fbar01_mhz: 5000.0,
            fbar12_mhz: 4800.0,
            alpha_mhz: 200.0,
            t1_us: 60.0,
            tphi_us: 67.0,
            parity_rate_per_us: 0.001,
            ej_over_ec: 50.0,
            t_readout_us: 10.0,
            t_reset_us: 10.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn dispersion_examples() {
        assert_abs_diff_eq!(dispersion(0.15, 0.0), 0.15);
        assert_abs_diff_eq!(dispersion(0.15, 0.25), 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(2.0 * dispersion(0.150, 0.0), 0.300, epsilon = 1e-15);
    }

    #[test]
    fn transition_freq_examples() {
        let fbar = 4800.0;
        for p in [Parity::Plus, Parity::Minus] {
            assert_abs_diff_eq!(transition_freq(fbar, 0.15, 0.25, p), fbar, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(transition_freq(fbar, 0.006, 0.0, Parity::Plus), fbar + 0.006);
        let split = transition_freq(fbar, 0.15, 0.0, Parity::Plus)
            - transition_freq(fbar, 0.15, 0.0, Parity::Minus);
        assert_abs_diff_eq!(split, 0.3, epsilon = 1e-9);
    }

    #[test]
    fn parity_detuning_examples() {
        assert_eq!(parity_detuning(0.0, 0.0, Parity::Plus), 0.0);
        assert_eq!(parity_detuning(0.0, 0.0, Parity::Minus), 0.0);
        assert_abs_diff_eq!(parity_detuning(0.0, 0.006, Parity::Plus), 0.0377, epsilon = 1e-4);
        let d = parity_detuning(0.3, 0.006, Parity::Plus) - parity_detuning(0.3, 0.006, Parity::Minus);
        assert_abs_diff_eq!(d, 4.0 * PI * 0.006, epsilon = 1e-15);
    }

    #[test]
    fn suppression_examples() {
        assert_abs_diff_eq!(asymptotic_suppression(50.0).unwrap(), 2.061e-9, epsilon = 1e-12);
        assert_abs_diff_eq!(asymptotic_suppression(0.125).unwrap(), 0.3679, epsilon = 1e-4);
        assert!(asymptotic_suppression(0.0).is_err());
        assert!(asymptotic_suppression(-1.0).is_err());
        let mut prev = f64::INFINITY;
        for r in [0.1, 1.0, 10.0, 50.0, 100.0] {
            let s = asymptotic_suppression(r).unwrap();
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn default_device_is_valid() {
        let dev = DeviceParams::default();
        dev.validate().unwrap();
        assert_abs_diff_eq!(dev.t2_markov(), 1.0 / (1.0 / 120.0 + 1.0 / 67.0), epsilon = 1e-12);
    }

    #[test]
    fn invariant_violations_are_named() {
        let dev = DeviceParams { ng: 0.5, ..Default::default() };
        assert!(matches!(dev.validate(), Err(Error::InvalidParameter { field: "ng", .. })));
        let dev = DeviceParams { t1_us: 0.0, ..Default::default() };
        assert!(matches!(dev.validate(), Err(Error::InvalidParameter { field: "t1_us", .. })));
        let dev = DeviceParams { eps12_mhz: -0.1, ..Default::default() };
        assert!(matches!(dev.validate(), Err(Error::InvalidParameter { field: "eps12_mhz", .. })));
    }

    #[test]
    fn t2_markov_inversion() {
        let dev = DeviceParams::default().with_t2_markov(43.0).unwrap();
        assert_abs_diff_eq!(dev.t2_markov(), 43.0, epsilon = 1e-12);
        assert!(DeviceParams::default().with_t2_markov(130.0).is_err());
    }

    proptest! {
        #[test]
        fn dispersion_even_periodic_bounded(eps in 0.0f64..1.0, ng in -3.0f64..3.0) {
            let d = dispersion(eps, ng);
            prop_assert!((d - dispersion(eps, -ng)).abs() < 1e-12);
            prop_assert!((d - dispersion(eps, ng + 1.0)).abs() < 1e-12);
            prop_assert!(d.abs() <= eps + 1e-15);
        }

        #[test]
        fn plus_band_higher_iff_cos_nonnegative(eps in 0.001f64..1.0, ng in 0.0f64..0.5) {
            let up = transition_freq(100.0, eps, ng, Parity::Plus);
            let down = transition_freq(100.0, eps, ng, Parity::Minus);
            let c = (2.0 * PI * ng).cos();
            // Skip the numerically ambiguous neighbourhood of the node.
            prop_assume!(c.abs() > 1e-9);
            prop_assert_eq!(up >= down, c >= 0.0);
        }

        #[test]
        fn detunings_average_to_control(dw in -10.0f64..10.0, delta in 0.0f64..1.0) {
            let sum = parity_detuning(dw, delta, Parity::Plus) + parity_detuning(dw, delta, Parity::Minus);
            prop_assert!((sum - 2.0 * dw).abs() <= 4.0 * f64::EPSILON * (dw.abs() + 1.0));
        }
    }
}
