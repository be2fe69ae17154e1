//! Coherence times as a function of charge dispersion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::ensemble::{ensemble_average_t2, ensemble_echo_t2, EnsembleConfig};
use super::fit::{fit_decay_envelope, fit_decaying_sinusoid, FitResult};
use crate::error::{Error, Result};
use crate::montecarlo::{run_protocol, DelayAverage, Experiment, ParityClass, ProtocolConfig, Selection};
use crate::transmon::DeviceParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    MonteCarlo,
    Ensemble,
}

/// A fitted value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl From<&FitResult> for Estimate {
    fn from(f: &FitResult) -> Self {
        Estimate {
            value: f.t2,
            stderr: f.stderr.t2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub device: DeviceParams,
    /// Monte-Carlo settings; the experiment field is overridden per sweep.
    pub protocol: ProtocolConfig,
    pub ensemble: EnsembleConfig,
}

/// Per-dispersion coherence times. Columns a sweep does not produce hold
/// `None`: Ramsey sweeps fill `t2_pooled` and `t2_sorted`, echo sweeps
/// `t2_echo`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub delta01_values: Vec<f64>,
    pub t2_pooled: Vec<Option<Estimate>>,
    pub t2_sorted: Vec<Option<Estimate>>,
    pub t2_echo: Vec<Option<Estimate>>,
}

/// Unweighted decaying-sinusoid fit of per-delay averages.
pub fn fit_averages(avgs: &[DelayAverage]) -> Result<FitResult> {
    let t: Vec<f64> = avgs.iter().map(|a| a.delay).collect();
    let y: Vec<f64> = avgs.iter().map(|a| a.mean).collect();
    fit_decaying_sinusoid(&t, &y, &[])
}

/// Unweighted envelope-only fit of per-delay averages at fixed `frequency`.
pub fn fit_envelope_averages(avgs: &[DelayAverage], frequency: f64) -> Result<FitResult> {
    let t: Vec<f64> = avgs.iter().map(|a| a.delay).collect();
    let y: Vec<f64> = avgs.iter().map(|a| a.mean).collect();
    fit_decay_envelope(&t, &y, &[], frequency)
}

struct Point {
    pooled: Option<Estimate>,
    sorted: Option<Estimate>,
    echo: Option<Estimate>,
}

fn sweep_point(delta: f64, mode: SweepMode, experiment: Experiment, cfg: &SweepConfig) -> Result<Point> {
    let dev = cfg.device.with_delta01(delta);
    match (mode, experiment) {
        (SweepMode::MonteCarlo, Experiment::Ramsey) => {
            let pc = ProtocolConfig {
                experiment,
                ..cfg.protocol.clone()
            };
            let ds = run_protocol(&pc, &dev)?;
            let pooled = fit_averages(&ds.averages(Selection::Pooled))?;
            let sorted = fit_averages(&ds.averages(Selection::Class(ParityClass::UnflippedPlus)))?;
            Ok(Point {
                pooled: Some((&pooled).into()),
                sorted: Some((&sorted).into()),
                echo: None,
            })
        }
        (SweepMode::MonteCarlo, Experiment::Echo) => {
            let pc = ProtocolConfig {
                experiment,
                ..cfg.protocol.clone()
            };
            let ds = run_protocol(&pc, &dev)?;
            let fit = fit_envelope_averages(&ds.averages(Selection::Pooled), pc.f_virt)?;
            Ok(Point {
                pooled: None,
                sorted: None,
                echo: Some((&fit).into()),
            })
        }
        (SweepMode::Ensemble, Experiment::Ramsey) => {
            let r = ensemble_average_t2(delta, dev.t1_us, dev.tphi_us, &cfg.ensemble)?;
            Ok(Point {
                pooled: Some((&r.fit_star).into()),
                sorted: Some((&r.fit_ideal).into()),
                echo: None,
            })
        }
        (SweepMode::Ensemble, Experiment::Echo) => {
            let r = ensemble_echo_t2(&dev, &cfg.ensemble)?;
            Ok(Point {
                pooled: None,
                sorted: None,
                echo: Some((&r.fit).into()),
            })
        }
    }
}

pub fn sweep_dispersion(deltas: &[f64], mode: SweepMode, experiment: Experiment, cfg: &SweepConfig) -> Result<SweepResult> {
    if deltas.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Domain("dispersion values must be sorted ascending".into()));
    }
    let points = deltas
        .par_iter()
        .map(|&d| sweep_point(d, mode, experiment, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        delta01_values: deltas.to_vec(),
        t2_pooled: points.iter().map(|p| p.pooled).collect(),
        t2_sorted: points.iter().map(|p| p.sorted).collect(),
        t2_echo: points.iter().map(|p| p.echo).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeInterval {
    pub slope: f64,
    pub stderr: f64,
    pub lo: f64,
    pub hi: f64,
}

impl SlopeInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Weighted straight-line fit of `y` against `x` with the slope's 95%
/// Student-t interval. The covariance is scaled by the reduced chi-square
/// when that exceeds one, so scatter beyond the error bars widens the
/// interval.
pub fn slope_ci95(x: &[f64], y: &[Estimate]) -> Result<SlopeInterval> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::FitInput("need at least 3 paired points".into()));
    }
    let w: Vec<f64> = y
        .iter()
        .map(|e| if e.stderr > 0.0 && e.stderr.is_finite() { 1.0 / (e.stderr * e.stderr) } else { 0.0 })
        .collect();
    let w = if w.iter().all(|&v| v > 0.0) { w } else { vec![1.0; n] };
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, b)| a.value * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::FitInput("x values are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).zip(&w).map(|((a, e), b)| b * (a - mx) * (e.value - my)).sum();
    let slope = sxy / sxx;
    let chi2: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((a, e), b)| b * (e.value - my - slope * (a - mx)).powi(2))
        .sum();
    let dof = (n - 2) as f64;
    let stderr = (chi2 / dof).max(1.0).sqrt() / sxx.sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Domain(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(SlopeInterval {
        slope,
        stderr,
        lo: slope - t * stderr,
        hi: slope + t * stderr,
    })
}
