//! Selective 1-2 spectroscopy maps and the choice of detection pulse length.

use rayon::prelude::*;
use serde::Serialize;

use super::peaks::{find_peaks, Peak};
use crate::error::{Error, Result};
use crate::lindblad::CollapseSet;
use crate::sequences::{build_spectroscopy, run_static};
use crate::transmon::{DeviceParams, Parity};

/// Minimum fractional dip between the two parity peaks for them to count as
/// resolved: the population between them must fall to half the smaller
/// peak or below.
pub const DEFAULT_MIN_VISIBILITY: f64 = 0.5;

/// Parity-averaged `P(|2>)` over a `(tau_p, delta_f)` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectroscopyMap {
    pub tau_p: Vec<f64>,
    pub delta_f: Vec<f64>,
    /// `p2[i][j]` at `tau_p[i]`, `delta_f[j]`.
    pub p2: Vec<Vec<f64>>,
}

impl SpectroscopyMap {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.p2[i]
    }

    pub fn peaks(&self, i: usize) -> Vec<Peak> {
        find_peaks(&self.delta_f, &self.p2[i])
    }
}

/// Symmetric detuning grid `[-half_width, half_width]` with the given step.
pub fn detuning_grid(half_width: f64, step: f64) -> Result<Vec<f64>> {
    if !(half_width > 0.0 && step > 0.0) {
        return Err(Error::Domain("grid half-width and step must be > 0".into()));
    }
    let n = (half_width / step).round() as i64;
    Ok((-n..=n).map(|k| k as f64 * step).collect())
}

/// Default detuning grid: 5 kHz steps over at least +-0.5 MHz and three band
/// splittings.
pub fn default_detuning_grid(dev: &DeviceParams) -> Vec<f64> {
    let half = (3.0 * dev.delta12().abs()).max(0.5);
    detuning_grid(half, 0.005).expect("positive grid")
}

/// Both parities equally likely; decoherence from the device.
pub fn spectroscopy_map(dev: &DeviceParams, tau_p: &[f64], delta_f: &[f64], dt_max: f64) -> Result<SpectroscopyMap> {
    dev.validate()?;
    let c = CollapseSet::from_device(dev, 3)?;
    let jobs: Vec<(usize, usize)> = (0..tau_p.len())
        .flat_map(|i| (0..delta_f.len()).map(move |j| (i, j)))
        .collect();
    let values = jobs
        .par_iter()
        .map(|&(i, j)| {
            let seq = build_spectroscopy(tau_p[i], delta_f[j])?;
            let mut acc = 0.0;
            for p in [Parity::Plus, Parity::Minus] {
                acc += run_static(&seq, dev, p, 3, &c, dt_max)?.last_measurement().unwrap_or(0.0);
            }
            Ok(acc / 2.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    let p2 = values.chunks(delta_f.len().max(1)).map(<[f64]>::to_vec).collect();
    Ok(SpectroscopyMap {
        tau_p: tau_p.to_vec(),
        delta_f: delta_f.to_vec(),
        p2: if delta_f.is_empty() { vec![Vec::new(); tau_p.len()] } else { p2 },
    })
}

/// Two tallest peaks of one lineshape, if they sit on opposite sides of the
/// grid center and the dip between them meets the visibility requirement.
pub fn resolved_pair(delta_f: &[f64], pop: &[f64], min_visibility: f64) -> Option<(Peak, Peak)> {
    let peaks = find_peaks(delta_f, pop);
    if peaks.len() < 2 {
        return None;
    }
    let (mut a, mut b) = (peaks[0], peaks[1]);
    if a.index > b.index {
        std::mem::swap(&mut a, &mut b);
    }
    if !(a.frequency < 0.0 && b.frequency > 0.0) {
        return None;
    }
    let dip = pop[a.index..=b.index].iter().copied().fold(f64::INFINITY, f64::min);
    let visibility = 1.0 - dip / a.height.min(b.height);
    (visibility >= min_visibility).then_some((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauChoice {
    pub tau_p: f64,
    /// Mean height of the two parity peaks at the chosen duration.
    pub height: f64,
    /// Half the distance between the two peaks, MHz.
    pub half_separation: f64,
}

/// Among durations whose map row resolves the two parity peaks, picks the
/// one with mean peak height closest to 1/2; ties go to the shorter pulse.
pub fn choose_tau_p(map: &SpectroscopyMap, min_visibility: f64) -> Result<TauChoice> {
    let mut best: Option<(f64, TauChoice)> = None;
    for (i, &tau) in map.tau_p.iter().enumerate() {
        let Some((a, b)) = resolved_pair(&map.delta_f, map.row(i), min_visibility) else {
            continue;
        };
        let height = 0.5 * (a.height + b.height);
        let score = (height - 0.5).abs();
        let better = match &best {
            None => true,
            Some((s, c)) => score < *s - 1e-12 || ((score - *s).abs() <= 1e-12 && tau < c.tau_p),
        };
        if better {
            best = Some((
                score,
                TauChoice {
                    tau_p: tau,
                    height,
                    half_separation: 0.5 * (b.frequency - a.frequency),
                },
            ));
        }
    }
    best.map(|(_, c)| c).ok_or(Error::NotResolvable)
}

/// Simulates the spectroscopy map over `grid` on the default detuning grid
/// and returns the preferred detection pulse length.
pub fn optimize_tau_p(dev: &DeviceParams, grid: &[f64], dt_max: f64) -> Result<TauChoice> {
    if grid.is_empty() {
        return Err(Error::Domain("tau_p grid is empty".into()));
    }
    let map = spectroscopy_map(dev, grid, &default_detuning_grid(dev), dt_max)?;
    choose_tau_p(&map, DEFAULT_MIN_VISIBILITY)
}
