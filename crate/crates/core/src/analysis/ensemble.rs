//! Deterministic ensemble average over single-flip parity histories.
//!
//! Each realization starts in one parity and flips once at `t_f`, with `t_f`
//! on a uniform grid over the observation window. Averaging the Ramsey
//! signal over the grid and both starting parities gives the decay a
//! flip-blind measurement would see.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_decay_envelope, fit_decaying_sinusoid, FitResult};
use crate::error::{Error, Result};
use crate::lindblad::{integrate_with_flip, CollapseSet, Trajectory, DEFAULT_DT_MAX};
use crate::montecarlo::ParityTrajectory;
use crate::qcore::{subspace_rotation, Axis, DensityMatrix, Subspace};
use crate::sequences::{build_echo, compile, execute, idle_generator, run_static};
use crate::transmon::{DeviceParams, Parity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AveragingScheme {
    /// Every realization carries one flip, `t_f` uniform over the window.
    Uniform,
    /// Flip-free realizations weighted `exp(-rate t_max)`, single-flip ones
    /// `1 - exp(-rate t_max)`.
    Mixture { rate: f64 },
}

impl AveragingScheme {
    fn flipped_weight(self, t_max: f64) -> f64 {
        match self {
            AveragingScheme::Uniform => 1.0,
            AveragingScheme::Mixture { rate } => 1.0 - (-rate * t_max).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// MHz.
    pub f_virt: f64,
    pub t_max: f64,
    pub n_flip_grid: usize,
    /// Ramsey delays sampled uniformly over `[0, t_max]`.
    pub n_samples: usize,
    pub scheme: AveragingScheme,
    pub dt_max: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            f_virt: 0.1,
            t_max: 100.0,
            n_flip_grid: 64,
            n_samples: 201,
            scheme: AveragingScheme::Uniform,
            dt_max: DEFAULT_DT_MAX,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::InvalidParameter {
                field,
                reason: reason.to_string(),
            })
        };
        if self.n_flip_grid < 8 {
            return bad("n_flip_grid", "must be >= 8");
        }
        if self.n_samples < 8 {
            return bad("n_samples", "must be >= 8");
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max", "must be > 0");
        }
        if !self.f_virt.is_finite() {
            return bad("f_virt", "must be finite");
        }
        if !(self.dt_max > 0.0) {
            return bad("dt_max", "must be > 0");
        }
        if let AveragingScheme::Mixture { rate } = self.scheme {
            if !(rate >= 0.0 && rate.is_finite()) {
                return bad("scheme.rate", "must be >= 0");
            }
        }
        Ok(())
    }

    pub fn sample_times(&self) -> Vec<f64> {
        linspace(self.t_max, self.n_samples)
    }

    pub fn flip_times(&self) -> Vec<f64> {
        linspace(self.t_max, self.n_flip_grid)
    }
}

fn linspace(end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub t2_star: f64,
    pub t2_ideal: f64,
    pub fit_star: FitResult,
    pub fit_ideal: FitResult,
    pub times: Vec<f64>,
    /// Ensemble-averaged excited population.
    pub averaged: Vec<f64>,
    /// Flip-free, parity `+` excited population.
    pub ideal: Vec<f64>,
}

/// Excited population of a phase-method Ramsey read out at every sample of
/// a free-evolution trajectory started from `X(pi/2)|0>`.
fn ramsey_readout(traj: &Trajectory, times: &[f64], f_virt: f64) -> Result<Vec<f64>> {
    let half = subspace_rotation(Axis::X, FRAC_PI_2, Subspace::Q01, 2)?;
    times
        .iter()
        .map(|&t| {
            let rho = traj
                .state_at(t)
                .ok_or_else(|| Error::Domain(format!("no sample at t = {t}")))?;
            let z = subspace_rotation(Axis::Z, 2.0 * PI * f_virt * t, Subspace::Q01, 2)?;
            Ok(rho.evolve_unitary(&half.matmul(&z))?.population(1))
        })
        .collect()
}

fn device(delta01: f64, t1: f64, tphi: f64) -> Result<DeviceParams> {
    let dev = DeviceParams {
        t1_us: t1,
        tphi_us: tphi,
        ..DeviceParams::default()
    }
    .with_delta01(delta01);
    dev.validate()?;
    Ok(dev)
}

/// Ramsey signal for start parity `p` and a flip at `t_flip` (none if
/// `t_flip >= t_max`).
fn realization(dev: &DeviceParams, cfg: &EnsembleConfig, p: Parity, t_flip: f64) -> Result<Vec<f64>> {
    let c = CollapseSet::from_device(dev, 2)?;
    let half = subspace_rotation(Axis::X, FRAC_PI_2, Subspace::Q01, 2)?;
    let rho0 = DensityMatrix::basis(2, 0)?.evolve_unitary(&half)?;
    let pre = idle_generator(dev, p, 2)?;
    let post = idle_generator(dev, p.flipped(), 2)?;
    let times = cfg.sample_times();
    let traj = integrate_with_flip(&rho0, &pre, &post, t_flip.min(cfg.t_max), cfg.t_max, &c, cfg.dt_max, &times)?;
    ramsey_readout(&traj, &times, cfg.f_virt)
}

/// Ensemble-averaged and flip-free Ramsey decay times at charge dispersion
/// `delta01` (MHz).
pub fn ensemble_average_t2(delta01: f64, t1: f64, tphi: f64, cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    cfg.validate()?;
    let dev = device(delta01, t1, tphi)?;
    let flips = cfg.flip_times();
    let jobs: Vec<(Parity, f64)> = [Parity::Plus, Parity::Minus]
        .into_iter()
        .flat_map(|p| flips.iter().map(move |&t| (p, t)))
        .chain([(Parity::Plus, f64::INFINITY), (Parity::Minus, f64::INFINITY)])
        .collect();
    let signals = jobs
        .par_iter()
        .map(|&(p, tf)| realization(&dev, cfg, p, tf))
        .collect::<Result<Vec<_>>>()?;
    let (flipped, unflipped) = signals.split_at(2 * flips.len());
    let times = cfg.sample_times();
    let w = cfg.scheme.flipped_weight(cfg.t_max);
    let averaged: Vec<f64> = (0..times.len())
        .map(|k| {
            let f = flipped.iter().map(|s| s[k]).sum::<f64>() / flipped.len() as f64;
            let u = unflipped.iter().map(|s| s[k]).sum::<f64>() / unflipped.len() as f64;
            w * f + (1.0 - w) * u
        })
        .collect();
    let ideal = unflipped[0].clone();
    let fit_star = fit_decaying_sinusoid(&times, &averaged, &[])?;
    let fit_ideal = fit_decaying_sinusoid(&times, &ideal, &[])?;
    Ok(EnsembleResult {
        t2_star: fit_star.t2,
        t2_ideal: fit_ideal.t2,
        fit_star,
        fit_ideal,
        times,
        averaged,
        ideal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EchoEnsembleResult {
    pub t2_echo: f64,
    pub fit: FitResult,
    pub delays: Vec<f64>,
    pub averaged: Vec<f64>,
}

/// Echo counterpart of [`ensemble_average_t2`], fitted with the frequency
/// held at `f_virt`. Each delay is a separate sequence, so `cfg.n_samples`
/// delays are simulated per realization.
pub fn ensemble_echo_t2(dev: &DeviceParams, cfg: &EnsembleConfig) -> Result<EchoEnsembleResult> {
    cfg.validate()?;
    dev.validate()?;
    let c = CollapseSet::from_device(dev, 2)?;
    let delays = cfg.sample_times();
    let flips = cfg.flip_times();
    let w = cfg.scheme.flipped_weight(cfg.t_max);
    let averaged = delays
        .par_iter()
        .map(|&d| {
            let seq = build_echo(d, cfg.f_virt)?;
            let mut flipped = 0.0;
            let mut unflipped = 0.0;
            for p in [Parity::Plus, Parity::Minus] {
                let stat = run_static(&seq, dev, p, 2, &c, cfg.dt_max)?.last_measurement().unwrap_or(0.0);
                unflipped += stat / 2.0;
                for &tf in &flips {
                    flipped += if tf > 0.0 && tf < d {
                        let traj = ParityTrajectory::new(p, vec![tf], d)?;
                        let compiled = compile(&seq, dev, &traj, 0.0, 2)?;
                        execute(&compiled, &DensityMatrix::basis(2, 0)?, &c, cfg.dt_max)?
                            .last_measurement()
                            .unwrap_or(0.0)
                    } else if tf == 0.0 {
                        run_static(&seq, dev, p.flipped(), 2, &c, cfg.dt_max)?.last_measurement().unwrap_or(0.0)
                    } else {
                        stat
                    };
                }
            }
            Ok(w * flipped / (2 * flips.len()) as f64 + (1.0 - w) * unflipped)
        })
        .collect::<Result<Vec<f64>>>()?;
    let fit = fit_decay_envelope(&delays, &averaged, &[], cfg.f_virt)?;
    Ok(EchoEnsembleResult {
        t2_echo: fit.t2,
        fit,
        delays,
        averaged,
    })
}

/// One `(t2_ideal, t2_star)` point of the appendix family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct A1Point {
    pub delta01: f64,
    /// Requested flip-free coherence time.
    pub t2_target: f64,
    pub t2_ideal: f64,
    pub t2_ideal_err: f64,
    pub t2_star: f64,
    pub t2_star_err: f64,
}

/// Curves of ensemble `t2_star` against flip-free `t2_ideal`, one per
/// dispersion. Each target coherence time is realized by adjusting `Tphi`
/// at fixed `T1`.
pub fn appendix_a1_curves(delta_list: &[f64], t2_ideal_grid: &[f64], t1: f64, cfg: &EnsembleConfig) -> Result<Vec<A1Point>> {
    let jobs: Vec<(f64, f64)> = delta_list
        .iter()
        .flat_map(|&d| t2_ideal_grid.iter().map(move |&t2| (d, t2)))
        .collect();
    jobs.par_iter()
        .map(|&(d, t2)| {
            let tphi = DeviceParams {
                t1_us: t1,
                ..DeviceParams::default()
            }
            .with_t2_markov(t2)?
            .tphi_us;
            let r = ensemble_average_t2(d, t1, tphi, cfg)?;
            Ok(A1Point {
                delta01: d,
                t2_target: t2,
                t2_ideal: r.t2_ideal,
                t2_ideal_err: r.fit_ideal.stderr.t2,
                t2_star: r.t2_star,
                t2_star_err: r.fit_star.stderr.t2,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> EnsembleConfig {
        EnsembleConfig {
            n_flip_grid: 16,
            n_samples: 101,
            dt_max: 0.01,
            ..Default::default()
        }
    }

    #[test]
    fn no_dispersion_no_effect() {
        let r = ensemble_average_t2(0.0, 60.0, 67.0, &quick()).unwrap();
        assert!((r.t2_star - r.t2_ideal).abs() <= 3.0 * r.fit_ideal.stderr.t2.max(1e-6) + 1e-6 * r.t2_ideal);
        for (a, b) in r.averaged.iter().zip(&r.ideal) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_matches_markovian_composition() {
        let r = ensemble_average_t2(0.0, 50.0, 60.0, &quick()).unwrap();
        assert!((r.t2_ideal - 37.5).abs() < 0.375 * 0.1, "{}", r.t2_ideal);
    }

    #[test]
    fn dispersion_shortens_decay() {
        let r = ensemble_average_t2(0.006, 60.0, 67.0, &quick()).unwrap();
        assert!(r.t2_star < r.t2_ideal);
    }

    #[test]
    fn mixture_at_zero_rate_is_flip_free() {
        let cfg = EnsembleConfig {
            scheme: AveragingScheme::Mixture { rate: 0.0 },
            ..quick()
        };
        let r = ensemble_average_t2(0.006, 60.0, 67.0, &cfg).unwrap();
        let dev = device(0.006, 60.0, 67.0).unwrap();
        let plus = realization(&dev, &cfg, Parity::Plus, f64::INFINITY).unwrap();
        let minus = realization(&dev, &cfg, Parity::Minus, f64::INFINITY).unwrap();
        for k in 0..r.times.len() {
            assert!((r.averaged[k] - 0.5 * (plus[k] + minus[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_coarse_flip_grid() {
        let cfg = EnsembleConfig {
            n_flip_grid: 4,
            ..quick()
        };
        assert!(ensemble_average_t2(0.0, 60.0, 67.0, &cfg).is_err());
    }
}
