//! Telegraph parity process and the single-shot experiment with embedded
//! parity detection.
//!
//! Shot timeline: detection pulse and readout (`p_i`), the Ramsey or echo
//! sequence, its readout, a second detection block (`p_f`), then reset. The
//! parity clock runs across the whole timeline; each detection reports the
//! parity holding at the midpoint of its pulse.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt9;
use crate::lindblad::{CollapseSet, DEFAULT_DT_MAX};
use crate::qcore::DensityMatrix;
use crate::sequences::{build_echo, build_parity_detection, build_ramsey, compile, execute, run_static, PulseSequence};
use crate::transmon::{DeviceParams, Parity};

/// Parity history over one shot: an initial value and the flip instants.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityTrajectory {
    initial: Parity,
    flip_times: Vec<f64>,
    t_shot: f64,
}

impl ParityTrajectory {
    pub fn new(initial: Parity, flip_times: Vec<f64>, t_shot: f64) -> Result<Self> {
        if !(t_shot >= 0.0 && t_shot.is_finite()) {
            return Err(Error::Domain(format!("shot length must be >= 0, got {t_shot}")));
        }
        if flip_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("flip times must be strictly increasing".into()));
        }
        if flip_times.iter().any(|&t| !(0.0..=t_shot).contains(&t)) {
            return Err(Error::Domain(format!("flip time outside [0, {t_shot}]")));
        }
        Ok(ParityTrajectory {
            initial,
            flip_times,
            t_shot,
        })
    }

    pub fn constant(parity: Parity, t_shot: f64) -> Self {
        ParityTrajectory {
            initial: parity,
            flip_times: Vec::new(),
            t_shot: t_shot.max(0.0),
        }
    }

    pub fn initial(&self) -> Parity {
        self.initial
    }

    pub fn flip_times(&self) -> &[f64] {
        &self.flip_times
    }

    pub fn t_shot(&self) -> f64 {
        self.t_shot
    }

    /// Parity at `t`; a flip at exactly `t` has already happened.
    pub fn parity_at(&self, t: f64) -> Parity {
        let n = self.flip_times.partition_point(|&f| f <= t);
        if n % 2 == 0 {
            self.initial
        } else {
            self.initial.flipped()
        }
    }

    /// Number of flips in the half-open window `(a, b]`.
    pub fn flips_between(&self, a: f64, b: f64) -> usize {
        let lo = self.flip_times.partition_point(|&f| f <= a);
        let hi = self.flip_times.partition_point(|&f| f <= b);
        hi.saturating_sub(lo)
    }

    /// Splits `[start, start + duration]` into constant-parity pieces
    /// `(piece_start, length, parity)`. Zero-length pieces are dropped.
    pub fn pieces(&self, start: f64, duration: f64) -> Vec<(f64, f64, Parity)> {
        let end = start + duration;
        let mut out = Vec::new();
        let mut t = start;
        let mut p = self.parity_at(start);
        for &f in self.flip_times.iter().filter(|&&f| f > start && f < end) {
            if f > t {
                out.push((t, f - t, p));
            }
            t = f;
            p = p.flipped();
        }
        if end > t || out.is_empty() {
            out.push((t, end - t, p));
        }
        out
    }
}

/// Per-shot random stream: ChaCha8 keyed by the master seed, with the shot
/// index selecting the stream.
pub fn shot_stream(master_seed: u64, seed_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(seed_index);
    rng
}

/// Fair-coin initial parity followed by Poisson flips of intensity `rate`.
pub fn sample_parity_trajectory<R: Rng + ?Sized>(rate: f64, t_shot: f64, rng: &mut R) -> Result<ParityTrajectory> {
    let initial = if rng.random_bool(0.5) { Parity::Plus } else { Parity::Minus };
    sample_flips(initial, rate, t_shot, rng)
}

fn sample_flips<R: Rng + ?Sized>(initial: Parity, rate: f64, t_shot: f64, rng: &mut R) -> Result<ParityTrajectory> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!("flip rate must be >= 0, got {rate}")));
    }
    if !(t_shot > 0.0 && t_shot.is_finite()) {
        return Err(Error::Domain(format!("shot length must be > 0, got {t_shot}")));
    }
    let mut flips = Vec::new();
    if rate > 0.0 {
        let wait = Exp::new(rate).map_err(|e| Error::Domain(e.to_string()))?;
        let mut t = wait.sample(rng);
        while t <= t_shot {
            flips.push(t);
            t += wait.sample(rng);
        }
    }
    Ok(ParityTrajectory {
        initial,
        flip_times: flips,
        t_shot,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParityClass {
    UnflippedPlus,
    UnflippedMinus,
    Flipped,
}

impl ParityClass {
    pub const ALL: [ParityClass; 3] = [ParityClass::UnflippedPlus, ParityClass::UnflippedMinus, ParityClass::Flipped];

    pub fn name(self) -> &'static str {
        match self {
            ParityClass::UnflippedPlus => "unflipped_plus",
            ParityClass::UnflippedMinus => "unflipped_minus",
            ParityClass::Flipped => "flipped",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        ParityClass::ALL.into_iter().find(|c| c.name() == s)
    }
}

pub fn classify(p_i: Parity, p_f: Parity) -> ParityClass {
    match (p_i, p_f) {
        (Parity::Plus, Parity::Plus) => ParityClass::UnflippedPlus,
        (Parity::Minus, Parity::Minus) => ParityClass::UnflippedMinus,
        _ => ParityClass::Flipped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionModel {
    /// Detections report the true parity.
    Ideal,
    /// Detections err with the simulated residual of the selective pulse.
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Ramsey,
    Echo,
}

impl Experiment {
    pub fn build(self, delay: f64, f_virt: f64) -> Result<PulseSequence> {
        match self {
            Experiment::Ramsey => build_ramsey(delay, f_virt),
            Experiment::Echo => build_echo(delay, f_virt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub delay: f64,
    pub p_i: Parity,
    pub p_f: Parity,
    pub outcome: bool,
    /// Flips between the two detection instants.
    pub true_flips: u32,
    pub seed_index: u64,
}

impl ShotRecord {
    pub fn class(&self) -> ParityClass {
        classify(self.p_i, self.p_f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub delays: Vec<f64>,
    pub shots_per_delay: usize,
    /// MHz.
    pub f_virt: f64,
    pub tau_p: f64,
    pub master_seed: u64,
    pub detection_model: DetectionModel,
    pub experiment: Experiment,
    /// Symmetric assignment error of the final readout.
    pub readout_error: f64,
    /// Forces the initial parity instead of a fair coin.
    pub initial_parity: Option<Parity>,
    pub dt_max: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            delays: (0..=100).map(f64::from).collect(),
            shots_per_delay: 1000,
            f_virt: 0.1,
            tau_p: 4.7,
            master_seed: 0,
            detection_model: DetectionModel::Ideal,
            experiment: Experiment::Ramsey,
            readout_error: 0.0,
            initial_parity: None,
            dt_max: DEFAULT_DT_MAX,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: impl Into<String>) -> Error {
            Error::InvalidParameter {
                field,
                reason: reason.into(),
            }
        }
        if self.shots_per_delay == 0 {
            return Err(bad("shots_per_delay", "must be >= 1"));
        }
        if let Some(d) = self.delays.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(bad("delays", format!("must be non-negative, got {d}")));
        }
        if !(self.tau_p > 0.0 && self.tau_p.is_finite()) {
            return Err(bad("tau_p", "must be > 0"));
        }
        if !self.f_virt.is_finite() {
            return Err(bad("f_virt", "must be finite"));
        }
        if !(0.0..=0.5).contains(&self.readout_error) {
            return Err(bad("readout_error", "must lie in [0, 0.5]"));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(bad("dt_max", "must be > 0"));
        }
        Ok(())
    }
}

/// Instants of one shot, us from the start of the first detection pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotTimeline {
    pub tau_p: f64,
    pub t_readout: f64,
    pub t_reset: f64,
    pub delay: f64,
}

impl ShotTimeline {
    pub fn new(delay: f64, tau_p: f64, dev: &DeviceParams) -> Self {
        ShotTimeline {
            tau_p,
            t_readout: dev.t_readout_us,
            t_reset: dev.t_reset_us,
            delay,
        }
    }

    pub fn detect_i(&self) -> f64 {
        self.tau_p / 2.0
    }

    pub fn sequence_start(&self) -> f64 {
        self.tau_p + self.t_readout
    }

    pub fn sequence_end(&self) -> f64 {
        self.sequence_start() + self.delay
    }

    pub fn detect_f(&self) -> f64 {
        self.sequence_end() + self.t_readout + self.tau_p / 2.0
    }

    pub fn total(&self) -> f64 {
        self.sequence_end() + self.t_readout + self.tau_p + self.t_readout + self.t_reset
    }

    /// Separation of the two detection instants.
    pub fn detection_span(&self) -> f64 {
        self.detect_f() - self.detect_i()
    }
}

/// Prepared engine: configuration, device, collapse channels, detection
/// error model and the excited-state probabilities of flip-free sequences.
#[derive(Debug, Clone)]
pub struct Protocol {
    cfg: ProtocolConfig,
    dev: DeviceParams,
    collapse: CollapseSet,
    /// `P(report +)` given true parity `+` and `-`.
    report_plus: [f64; 2],
    static_cache: HashMap<(u64, Parity), f64>,
}

fn parity_slot(p: Parity) -> usize {
    match p {
        Parity::Plus => 0,
        Parity::Minus => 1,
    }
}

impl Protocol {
    pub fn new(cfg: ProtocolConfig, dev: DeviceParams) -> Result<Self> {
        cfg.validate()?;
        dev.validate()?;
        let collapse = CollapseSet::from_device(&dev, 2)?;
        let report_plus = match cfg.detection_model {
            DetectionModel::Ideal => [1.0, 0.0],
            DetectionModel::Physical => {
                let seq = build_parity_detection(cfg.tau_p)?;
                let c3 = CollapseSet::from_device(&dev, 3)?;
                let mut out = [0.0; 2];
                for p in [Parity::Plus, Parity::Minus] {
                    let ex = run_static(&seq, &dev, p, 3, &c3, cfg.dt_max)?;
                    out[parity_slot(p)] = ex.last_measurement().unwrap_or(0.0).clamp(0.0, 1.0);
                }
                out
            }
        };
        let mut keys: Vec<(u64, Parity)> = Vec::new();
        for &d in &cfg.delays {
            for p in [Parity::Plus, Parity::Minus] {
                if !keys.contains(&(d.to_bits(), p)) {
                    keys.push((d.to_bits(), p));
                }
            }
        }
        let values: Vec<Result<f64>> = keys
            .par_iter()
            .map(|&(bits, p)| {
                let seq = cfg.experiment.build(f64::from_bits(bits), cfg.f_virt)?;
                let ex = run_static(&seq, &dev, p, 2, &collapse, cfg.dt_max)?;
                Ok(ex.last_measurement().unwrap_or(0.0))
            })
            .collect();
        let mut static_cache = HashMap::with_capacity(keys.len());
        for (k, v) in keys.into_iter().zip(values) {
            static_cache.insert(k, v?);
        }
        Ok(Protocol {
            cfg,
            dev,
            collapse,
            report_plus,
            static_cache,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    /// `P(detector reports +)` for a given true parity.
    pub fn report_plus_probability(&self, truth: Parity) -> f64 {
        self.report_plus[parity_slot(truth)]
    }

    fn excited_probability(&self, traj: &ParityTrajectory, tl: &ShotTimeline) -> Result<f64> {
        let start = tl.sequence_start();
        if traj.flips_between(start, tl.sequence_end()) == 0 {
            let key = (tl.delay.to_bits(), traj.parity_at(start));
            if let Some(&p) = self.static_cache.get(&key) {
                return Ok(p);
            }
        }
        let seq = self.cfg.experiment.build(tl.delay, self.cfg.f_virt)?;
        let compiled = compile(&seq, &self.dev, traj, start, 2)?;
        let ex = execute(&compiled, &DensityMatrix::basis(2, 0)?, &self.collapse, self.cfg.dt_max)?;
        Ok(ex.last_measurement().unwrap_or(0.0))
    }

    fn detect<R: Rng>(&self, truth: Parity, rng: &mut R) -> Parity {
        let u: f64 = rng.random();
        if u < self.report_plus_probability(truth) {
            Parity::Plus
        } else {
            Parity::Minus
        }
    }

    /// Runs shot `seed_index` at `delay` on its own random stream.
    pub fn run_shot(&self, delay: f64, seed_index: u64) -> Result<ShotRecord> {
        let mut rng = shot_stream(self.cfg.master_seed, seed_index);
        let tl = ShotTimeline::new(delay, self.cfg.tau_p, &self.dev);
        let rate = self.dev.parity_rate_per_us;
        let traj = match self.cfg.initial_parity {
            Some(p) => sample_flips(p, rate, tl.total(), &mut rng)?,
            None => sample_parity_trajectory(rate, tl.total(), &mut rng)?,
        };
        let (ti, tf) = (tl.detect_i(), tl.detect_f());
        let p_i = self.detect(traj.parity_at(ti), &mut rng);
        let p_f = self.detect(traj.parity_at(tf), &mut rng);
        let p_exc = self.excited_probability(&traj, &tl)?.clamp(0.0, 1.0);
        let mut outcome = rng.random::<f64>() < p_exc;
        if rng.random::<f64>() < self.cfg.readout_error {
            outcome = !outcome;
        }
        Ok(ShotRecord {
            delay,
            p_i,
            p_f,
            outcome,
            true_flips: traj.flips_between(ti, tf) as u32,
            seed_index,
        })
    }

    /// Runs every shot. Shot `k` at delay index `j` uses stream
    /// `j * shots_per_delay + k`, so the result does not depend on scheduling.
    pub fn run(&self) -> Result<Dataset> {
        let n = self.cfg.shots_per_delay as u64;
        let jobs: Vec<(f64, u64)> = self
            .cfg
            .delays
            .iter()
            .enumerate()
            .flat_map(|(j, &d)| (0..n).map(move |k| (d, j as u64 * n + k)))
            .collect();
        let records = jobs
            .par_iter()
            .map(|&(d, idx)| self.run_shot(d, idx))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new(records))
    }
}

/// Runs a single shot outside a prepared [`Protocol`].
pub fn run_shot(delay: f64, seed_index: u64, cfg: &ProtocolConfig, dev: &DeviceParams) -> Result<ShotRecord> {
    let cfg = ProtocolConfig {
        delays: vec![delay],
        ..cfg.clone()
    };
    Protocol::new(cfg, *dev)?.run_shot(delay, seed_index)
}

pub fn run_protocol(cfg: &ProtocolConfig, dev: &DeviceParams) -> Result<Dataset> {
    if cfg.delays.is_empty() {
        cfg.validate()?;
        return Ok(Dataset::default());
    }
    Protocol::new(cfg.clone(), *dev)?.run()
}

/// Which shots enter an average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selection {
    Pooled,
    Class(ParityClass),
}

impl Selection {
    pub fn admits(self, r: &ShotRecord) -> bool {
        match self {
            Selection::Pooled => true,
            Selection::Class(c) => r.class() == c,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Selection::Pooled => "pooled",
            Selection::Class(c) => c.name(),
        }
    }
}

/// Excited-state fraction at one delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayAverage {
    pub delay: f64,
    pub shots: usize,
    pub excited: usize,
    pub mean: f64,
    /// Binomial standard error `sqrt(p (1 - p) / n)`.
    pub stderr: f64,
}

impl DelayAverage {
    fn from_counts(delay: f64, shots: usize, excited: usize) -> Self {
        let n = shots as f64;
        let mean = excited as f64 / n;
        DelayAverage {
            delay,
            shots,
            excited,
            mean,
            stderr: (mean * (1.0 - mean) / n).sqrt(),
        }
    }
}

/// Shot records in seed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    records: Vec<ShotRecord>,
}

pub const CSV_HEADER: [&str; 7] = ["delay_us", "p_i", "p_f", "class", "outcome", "true_flips", "seed_index"];

impl Dataset {
    pub fn new(mut records: Vec<ShotRecord>) -> Self {
        records.sort_by_key(|r| r.seed_index);
        Dataset { records }
    }

    pub fn records(&self) -> &[ShotRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct delays, ascending.
    pub fn delays(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self.records.iter().map(|r| r.delay).collect();
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    }

    pub fn class_count(&self, c: ParityClass) -> usize {
        self.records.iter().filter(|r| r.class() == c).count()
    }

    /// Per-delay averages over the selected shots; delays with no selected
    /// shot are omitted.
    pub fn averages(&self, sel: Selection) -> Vec<DelayAverage> {
        let delays = self.delays();
        let mut counts = vec![(0usize, 0usize); delays.len()];
        for r in self.records.iter().filter(|r| sel.admits(r)) {
            let j = delays.partition_point(|&d| d.total_cmp(&r.delay).is_lt());
            counts[j].0 += 1;
            counts[j].1 += r.outcome as usize;
        }
        delays
            .into_iter()
            .zip(counts)
            .filter(|(_, (n, _))| *n > 0)
            .map(|(d, (n, k))| DelayAverage::from_counts(d, n, k))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        out.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.records {
            out.write_record([
                fmt9(r.delay),
                r.p_i.symbol().to_string(),
                r.p_f.symbol().to_string(),
                r.class().name().to_string(),
                (r.outcome as u8).to_string(),
                r.true_flips.to_string(),
                r.seed_index.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}
