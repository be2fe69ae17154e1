//! Local-maximum detection on spectroscopy lineshapes.

use serde::Serialize;

/// Sidelobes of the parity-split lineshape stay below this population.
pub const DEFAULT_HEIGHT_FLOOR: f64 = 0.1;
/// A full-contrast square-pulse line has sidelobes of 1/9 of its peak.
pub const DEFAULT_RELATIVE_FLOOR: f64 = 0.2;
/// Minimum index distance between reported peaks.
pub const DEFAULT_MIN_SEPARATION: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    /// MHz.
    pub frequency: f64,
    pub height: f64,
    pub index: usize,
}

/// A peak must exceed both `floor` and `relative_floor` times the largest
/// sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOptions {
    pub floor: f64,
    pub relative_floor: f64,
    pub min_separation: usize,
}

impl Default for PeakOptions {
    fn default() -> Self {
        PeakOptions {
            floor: DEFAULT_HEIGHT_FLOOR,
            relative_floor: DEFAULT_RELATIVE_FLOOR,
            min_separation: DEFAULT_MIN_SEPARATION,
        }
    }
}

/// Peaks above the default floor, tallest first.
pub fn find_peaks(freq: &[f64], pop: &[f64]) -> Vec<Peak> {
    find_peaks_with(freq, pop, PeakOptions::default())
}

/// Interior local maxima (strictly above the right neighbour, at least the
/// left one, so a flat top counts once) above both floors. Peaks closer than
/// `min_separation` grid points to a taller one are dropped.
pub fn find_peaks_with(freq: &[f64], pop: &[f64], opts: PeakOptions) -> Vec<Peak> {
    let n = freq.len().min(pop.len());
    if n < 3 {
        return Vec::new();
    }
    let top = pop[..n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = opts.floor.max(opts.relative_floor * top);
    let mut candidates: Vec<Peak> = (1..n - 1)
        .filter(|&i| pop[i] >= pop[i - 1] && pop[i] > pop[i + 1] && pop[i] > floor)
        .map(|i| Peak {
            frequency: freq[i],
            height: pop[i],
            index: i,
        })
        .collect();
    candidates.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.index.cmp(&b.index)));
    let mut kept: Vec<Peak> = Vec::new();
    for c in candidates {
        if kept.iter().all(|k| k.index.abs_diff(c.index) >= opts.min_separation) {
            kept.push(c);
        }
    }
    kept
}
