//! Pulse protocols and their compilation into Lindblad segments.
//!
//! Control pulses on 0-1 are instantaneous ideal rotations; only the long
//! selective 1-2 pulse is simulated as a driven segment. Ramsey and echo use
//! the phase method: no physical control detuning, with the oscillation
//! imposed by a virtual z rotation before the final pi/2 pulse.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{integrate, CollapseSet, HamiltonianSegment};
use crate::montecarlo::ParityTrajectory;
use crate::qcore::{number_op, subspace_pauli, subspace_rotation, Axis, DensityMatrix, Operator, Subspace};
use crate::transmon::{mhz_to_angular, parity_detuning, DeviceParams, Parity};

/// Level measured by Ramsey and echo sequences.
pub const EXCITED: usize = 1;
/// Level measured by spectroscopy and parity detection.
pub const SECOND_EXCITED: usize = 2;

/// Where a drive sits in frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DriveTarget {
    /// Offset from the nominal transition frequency, MHz.
    Offset(f64),
    /// Centered on one parity band of the addressed transition.
    Band(Parity),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PulseSegment {
    IdealRotation {
        axis: Axis,
        angle: f64,
        subspace: Subspace,
    },
    Drive {
        /// Rabi rate, rad/us.
        omega: f64,
        target: DriveTarget,
        duration: f64,
        subspace: Subspace,
    },
    Delay {
        duration: f64,
    },
    /// Records the population of `level`. The state is frozen for
    /// `duration`; only the parity clock advances.
    Measure {
        label: String,
        level: usize,
        duration: f64,
    },
}

impl PulseSegment {
    pub fn duration(&self) -> f64 {
        match self {
            PulseSegment::IdealRotation { .. } => 0.0,
            PulseSegment::Drive { duration, .. }
            | PulseSegment::Delay { duration }
            | PulseSegment::Measure { duration, .. } => *duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub name: String,
    pub nominal_delay: f64,
    /// Virtual detuning of the phase method, MHz.
    pub f_virt: f64,
    pub segments: Vec<PulseSegment>,
}

impl PulseSequence {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(PulseSegment::duration).sum()
    }

    /// Highest level touched, i.e. the minimum Hilbert dimension minus one.
    pub fn max_level(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                PulseSegment::IdealRotation { subspace, .. } | PulseSegment::Drive { subspace, .. } => {
                    subspace.upper()
                }
                PulseSegment::Delay { .. } => 1,
                PulseSegment::Measure { level, .. } => *level,
            })
            .max()
            .unwrap_or(1)
    }
}

fn check_nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be >= 0, got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be > 0, got {v}")))
    }
}

fn rot(axis: Axis, angle: f64, subspace: Subspace) -> PulseSegment {
    PulseSegment::IdealRotation { axis, angle, subspace }
}

fn measure(label: &str, level: usize) -> PulseSegment {
    PulseSegment::Measure {
        label: label.to_string(),
        level,
        duration: 0.0,
    }
}

/// `X(pi/2) - delay - Z(2 pi f_virt delay) - X(pi/2) - measure`.
pub fn build_ramsey(delay: f64, f_virt: f64) -> Result<PulseSequence> {
    check_nonnegative("delay", delay)?;
    Ok(PulseSequence {
        name: "ramsey".into(),
        nominal_delay: delay,
        f_virt,
        segments: vec![
            rot(Axis::X, FRAC_PI_2, Subspace::Q01),
            PulseSegment::Delay { duration: delay },
            rot(Axis::Z, 2.0 * PI * f_virt * delay, Subspace::Q01),
            rot(Axis::X, FRAC_PI_2, Subspace::Q01),
            measure("excited", EXCITED),
        ],
    })
}

/// `X(pi/2) - delay/2 - X(pi) - delay/2 - Z(2 pi f_virt delay) - X(pi/2) - measure`.
pub fn build_echo(delay: f64, f_virt: f64) -> Result<PulseSequence> {
    check_nonnegative("delay", delay)?;
    Ok(PulseSequence {
        name: "echo".into(),
        nominal_delay: delay,
        f_virt,
        segments: vec![
            rot(Axis::X, FRAC_PI_2, Subspace::Q01),
            PulseSegment::Delay { duration: delay / 2.0 },
            rot(Axis::X, PI, Subspace::Q01),
            PulseSegment::Delay { duration: delay / 2.0 },
            rot(Axis::Z, 2.0 * PI * f_virt * delay, Subspace::Q01),
            rot(Axis::X, FRAC_PI_2, Subspace::Q01),
            measure("excited", EXCITED),
        ],
    })
}

/// Square pi pulse on 1-2 of duration `tau_p` (Rabi rate `pi/tau_p`).
fn selective_pi12(tau_p: f64, target: DriveTarget) -> PulseSegment {
    PulseSegment::Drive {
        omega: PI / tau_p,
        target,
        duration: tau_p,
        subspace: Subspace::Q12,
    }
}

/// Prepare `|1>`, apply a pi_12 pulse at `fbar12 + delta_f`, measure `P(|2>)`.
pub fn build_spectroscopy(tau_p: f64, delta_f: f64) -> Result<PulseSequence> {
    check_positive("tau_p", tau_p)?;
    Ok(PulseSequence {
        name: "spectroscopy".into(),
        nominal_delay: 0.0,
        f_virt: 0.0,
        segments: vec![
            rot(Axis::X, PI, Subspace::Q01),
            selective_pi12(tau_p, DriveTarget::Offset(delta_f)),
            measure("second_excited", SECOND_EXCITED),
        ],
    })
}

/// Prepare `|1>`, apply the selective pi_12 pulse at `f12+`, measure.
/// Finding `|2>` reports parity `+`.
pub fn build_parity_detection(tau_p: f64) -> Result<PulseSequence> {
    check_positive("tau_p", tau_p)?;
    Ok(PulseSequence {
        name: "parity_detection".into(),
        nominal_delay: 0.0,
        f_virt: 0.0,
        segments: vec![
            rot(Axis::X, PI, Subspace::Q01),
            selective_pi12(tau_p, DriveTarget::Band(Parity::Plus)),
            measure("second_excited", SECOND_EXCITED),
        ],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompiledStep {
    Evolve(HamiltonianSegment),
    Rotate { unitary: Operator, label: String },
    Measure { label: String, level: usize, duration: f64 },
}

impl CompiledStep {
    pub fn duration(&self) -> f64 {
        match self {
            CompiledStep::Evolve(s) => s.duration,
            CompiledStep::Rotate { .. } => 0.0,
            CompiledStep::Measure { duration, .. } => *duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSequence {
    pub dim: usize,
    pub steps: Vec<CompiledStep>,
}

impl CompiledSequence {
    pub fn duration(&self) -> f64 {
        self.steps.iter().map(CompiledStep::duration).sum()
    }

    pub fn evolve_segments(&self) -> impl Iterator<Item = &HamiltonianSegment> {
        self.steps.iter().filter_map(|s| match s {
            CompiledStep::Evolve(seg) => Some(seg),
            _ => None,
        })
    }
}

/// Free-evolution generator `-(alpha/2) a^dag a^dag a a + delta_omega_p a^dag a`
/// with zero control detuning.
pub fn idle_generator(dev: &DeviceParams, parity: Parity, dim: usize) -> Result<Operator> {
    let n = number_op(dim)?;
    let kerr = n.matmul(&(n - Operator::identity(dim)?));
    let alpha = mhz_to_angular(dev.alpha_mhz);
    Ok(kerr.scale_re(-0.5 * alpha) + n.scale_re(parity_detuning(0.0, dev.delta01(), parity)))
}

/// Drive detuning `omega_drive - omega_transition`, rad/us, for a drive at
/// `target` on `subspace` when the island has parity `parity`.
pub fn drive_detuning(dev: &DeviceParams, target: DriveTarget, subspace: Subspace, parity: Parity) -> f64 {
    let band = match subspace {
        Subspace::Q01 => dev.delta01(),
        Subspace::Q12 => dev.delta12(),
    };
    let drive_offset = match target {
        DriveTarget::Offset(df) => df,
        DriveTarget::Band(p) => p.sign() * band,
    };
    mhz_to_angular(drive_offset - parity.sign() * band)
}

/// Drive-frame generator `(omega/2) sigma_x - detuning |upper><upper|`.
pub fn drive_generator(omega: f64, detuning: f64, subspace: Subspace, dim: usize) -> Result<Operator> {
    let sx = subspace_pauli(Axis::X, subspace, dim)?;
    let proj = Operator::projector(dim, subspace.upper())?;
    Ok(sx.scale_re(omega / 2.0) - proj.scale_re(detuning))
}

/// Binds a sequence to a device and a parity history.
///
/// The sequence starts at `t_start` on the trajectory clock. Time-extended
/// segments are split at every parity flip they contain.
pub fn compile(
    seq: &PulseSequence,
    dev: &DeviceParams,
    parity: &ParityTrajectory,
    t_start: f64,
    dim: usize,
) -> Result<CompiledSequence> {
    if seq.max_level() >= dim {
        return Err(Error::Domain(format!(
            "sequence `{}` needs dimension >= {}, got {dim}",
            seq.name,
            seq.max_level() + 1
        )));
    }
    let needed = t_start + seq.duration();
    if parity.t_shot() < needed - 1e-9 {
        return Err(Error::Coverage {
            covered: parity.t_shot(),
            needed,
        });
    }
    let idle = [
        idle_generator(dev, Parity::Plus, dim)?,
        idle_generator(dev, Parity::Minus, dim)?,
    ];
    let idle_for = |p: Parity| idle[(p == Parity::Minus) as usize];

    let mut steps = Vec::new();
    let mut t = t_start;
    for seg in &seq.segments {
        match seg {
            PulseSegment::IdealRotation { axis, angle, subspace } => {
                steps.push(CompiledStep::Rotate {
                    unitary: subspace_rotation(*axis, *angle, *subspace, dim)?,
                    label: format!("{axis:?}({angle:.6})"),
                });
            }
            PulseSegment::Delay { duration } => {
                check_nonnegative("delay", *duration)?;
                for (start, len, p) in parity.pieces(t, *duration) {
                    steps.push(CompiledStep::Evolve(HamiltonianSegment::new(
                        len,
                        idle_for(p),
                        format!("delay@{start:.6}{}", p.symbol()),
                    )?));
                }
                t += duration;
            }
            PulseSegment::Drive {
                omega,
                target,
                duration,
                subspace,
            } => {
                check_nonnegative("drive duration", *duration)?;
                for (start, len, p) in parity.pieces(t, *duration) {
                    let det = drive_detuning(dev, *target, *subspace, p);
                    steps.push(CompiledStep::Evolve(HamiltonianSegment::new(
                        len,
                        drive_generator(*omega, det, *subspace, dim)?,
                        format!("drive@{start:.6}{}", p.symbol()),
                    )?));
                }
                t += duration;
            }
            PulseSegment::Measure { label, level, duration } => {
                steps.push(CompiledStep::Measure {
                    label: label.clone(),
                    level: *level,
                    duration: *duration,
                });
                t += duration;
            }
        }
    }
    Ok(CompiledSequence { dim, steps })
}

/// Outcome of running a compiled sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub final_state: DensityMatrix,
    /// `(label, population)` for every measure step, in order.
    pub measurements: Vec<(String, f64)>,
}

impl Execution {
    pub fn last_measurement(&self) -> Option<f64> {
        self.measurements.last().map(|(_, p)| *p)
    }
}

/// Runs `compiled` from `rho0`, batching consecutive evolution steps into one
/// integration.
pub fn execute(compiled: &CompiledSequence, rho0: &DensityMatrix, c: &CollapseSet, dt_max: f64) -> Result<Execution> {
    let mut rho = *rho0;
    let mut measurements = Vec::new();
    let mut batch: Vec<HamiltonianSegment> = Vec::new();
    let flush = |rho: &mut DensityMatrix, batch: &mut Vec<HamiltonianSegment>| -> Result<()> {
        if !batch.is_empty() {
            *rho = *integrate(rho, batch, c, dt_max, &[])?.final_state();
            batch.clear();
        }
        Ok(())
    };
    for step in &compiled.steps {
        match step {
            CompiledStep::Evolve(seg) => batch.push(seg.clone()),
            CompiledStep::Rotate { unitary, .. } => {
                flush(&mut rho, &mut batch)?;
                rho = rho.evolve_unitary(unitary)?;
            }
            CompiledStep::Measure { label, level, .. } => {
                flush(&mut rho, &mut batch)?;
                measurements.push((label.clone(), rho.population(*level)));
            }
        }
    }
    flush(&mut rho, &mut batch)?;
    Ok(Execution {
        final_state: rho,
        measurements,
    })
}

/// Runs `seq` from the ground state with the island parity frozen at `parity`.
pub fn run_static(
    seq: &PulseSequence,
    dev: &DeviceParams,
    parity: Parity,
    dim: usize,
    c: &CollapseSet,
    dt_max: f64,
) -> Result<Execution> {
    let traj = ParityTrajectory::constant(parity, seq.duration());
    let compiled = compile(seq, dev, &traj, 0.0, dim)?;
    execute(&compiled, &DensityMatrix::basis(dim, 0)?, c, dt_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quiet(delta01: f64) -> DeviceParams {
        DeviceParams {
            eps01_mhz: delta01,
            ng: 0.0,
            ..Default::default()
        }
    }

    fn p_exc(seq: &PulseSequence, dev: &DeviceParams, p: Parity) -> f64 {
        let c = CollapseSet::none(2).unwrap();
        run_static(seq, dev, p, 2, &c, 0.005).unwrap().last_measurement().unwrap()
    }

    /// Two-level Rabi formula.
    fn rabi(omega: f64, det: f64, t: f64) -> f64 {
        let w2 = omega * omega + det * det;
        omega * omega / w2 * (w2.sqrt() * t / 2.0).sin().powi(2)
    }

    #[test]
    fn ramsey_zero_delay_is_pi_pulse() {
        let seq = build_ramsey(0.0, 0.1).unwrap();
        assert_abs_diff_eq!(p_exc(&seq, &quiet(0.006), Parity::Plus), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn ramsey_virtual_fringe() {
        let f = 0.1;
        for &t in &[0.7, 3.0, 12.25, 40.0] {
            let seq = build_ramsey(t, f).unwrap();
            let want = 0.5 * (1.0 + (2.0 * PI * f * t).cos());
            assert_abs_diff_eq!(p_exc(&seq, &quiet(0.0), Parity::Plus), want, epsilon = 1e-10);
        }
    }

    #[test]
    fn ramsey_parity_shifts_fringe_frequency() {
        let (f, d) = (0.1, 0.006);
        for &t in &[5.0, 21.0, 63.0] {
            let seq = build_ramsey(t, f).unwrap();
            let plus = 0.5 * (1.0 + (2.0 * PI * (f + d) * t).cos());
            let minus = 0.5 * (1.0 + (2.0 * PI * (f - d) * t).cos());
            assert_abs_diff_eq!(p_exc(&seq, &quiet(d), Parity::Plus), plus, epsilon = 1e-9);
            assert_abs_diff_eq!(p_exc(&seq, &quiet(d), Parity::Minus), minus, epsilon = 1e-9);
        }
    }

    #[test]
    fn echo_static_cancellation() {
        let seq = build_echo(30.0, 0.0).unwrap();
        let base = p_exc(&build_echo(0.0, 0.0).unwrap(), &quiet(0.0), Parity::Plus);
        for d in [0.0, 0.003, 0.006, 0.05] {
            for p in [Parity::Plus, Parity::Minus] {
                assert_abs_diff_eq!(p_exc(&seq, &quiet(d), p), base, epsilon = 1e-10);
            }
        }
    }

    fn echo_with_flip(delay: f64, t_flip: f64, d: f64) -> f64 {
        let seq = build_echo(delay, 0.0).unwrap();
        let traj = ParityTrajectory::new(Parity::Plus, vec![t_flip], delay).unwrap();
        let compiled = compile(&seq, &quiet(d), &traj, 0.0, 2).unwrap();
        execute(&compiled, &DensityMatrix::basis(2, 0).unwrap(), &CollapseSet::none(2).unwrap(), 0.005)
            .unwrap()
            .last_measurement()
            .unwrap()
    }

    #[test]
    fn echo_flip_at_start_is_static() {
        assert_abs_diff_eq!(echo_with_flip(40.0, 0.0, 0.006), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn echo_flip_at_midpoint_is_fully_exposed() {
        // The pi pulse reverses the first-half phase w T/2, the second half
        // then adds -w T/2: the refocusing doubles instead of cancelling.
        let (delay, d) = (40.0, 0.006);
        let phi = 2.0 * PI * d * delay;
        assert_abs_diff_eq!(echo_with_flip(delay, delay / 2.0, d), 0.5 * (1.0 - phi.cos()), epsilon = 1e-9);
    }

    #[test]
    fn echo_flip_at_quarter_leaves_residual_phase() {
        // Phase bookkeeping: first half accrues w(2 t_f - T/2), second half
        // -w T/2; the pi pulse subtracts them, leaving |residual| = 2 w t_f.
        let (delay, d) = (40.0, 0.006);
        let tf = delay / 4.0;
        let w = 2.0 * PI * d;
        let residual = 2.0 * w * tf;
        let want = 0.5 * (1.0 - residual.cos());
        assert_abs_diff_eq!(echo_with_flip(delay, tf, d), want, epsilon = 1e-9);
    }

    #[test]
    fn spectroscopy_on_resonance_is_full_transfer() {
        let dev = DeviceParams::default();
        let seq = build_spectroscopy(2.0, dev.delta12()).unwrap();
        let c = CollapseSet::none(3).unwrap();
        let p2 = run_static(&seq, &dev, Parity::Plus, 3, &c, 0.005).unwrap().last_measurement().unwrap();
        assert_abs_diff_eq!(p2, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn spectroscopy_matches_rabi_formula_off_resonance() {
        let dev = DeviceParams::default();
        let c = CollapseSet::none(3).unwrap();
        for &(tau, df) in &[(0.072, 1.3), (1.0, 0.4), (4.7, -0.2), (12.6, 0.05)] {
            let seq = build_spectroscopy(tau, df).unwrap();
            for p in [Parity::Plus, Parity::Minus] {
                let det = 2.0 * PI * (df - p.sign() * dev.delta12());
                let got = run_static(&seq, &dev, p, 3, &c, 0.005).unwrap().last_measurement().unwrap();
                assert_abs_diff_eq!(got, rabi(PI / tau, det, tau), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn spectroscopy_requires_qutrit() {
        let seq = build_spectroscopy(1.0, 0.0).unwrap();
        let traj = ParityTrajectory::constant(Parity::Plus, 2.0);
        assert!(compile(&seq, &DeviceParams::default(), &traj, 0.0, 2).is_err());
        assert!(build_spectroscopy(0.0, 0.0).is_err());
        assert!(build_parity_detection(-1.0).is_err());
    }

    #[test]
    fn parity_detection_residual_is_rabi_at_band_separation() {
        let dev = DeviceParams::default();
        let tau = 4.7;
        let seq = build_parity_detection(tau).unwrap();
        let c = CollapseSet::none(3).unwrap();
        let hit = run_static(&seq, &dev, Parity::Plus, 3, &c, 0.005).unwrap().last_measurement().unwrap();
        let miss = run_static(&seq, &dev, Parity::Minus, 3, &c, 0.005).unwrap().last_measurement().unwrap();
        assert_abs_diff_eq!(hit, 1.0, epsilon = 1e-10);
        let want = rabi(PI / tau, 2.0 * PI * 2.0 * dev.delta12(), tau);
        assert_abs_diff_eq!(miss, want, epsilon = 1e-9);
    }

    #[test]
    fn compile_splits_delay_at_flips() {
        let dev = quiet(0.006);
        let seq = build_ramsey(10.0, 0.1).unwrap();
        let w = 2.0 * PI * 0.006;
        let n = number_op(2).unwrap();

        let traj = ParityTrajectory::constant(Parity::Plus, 10.0);
        let c = compile(&seq, &dev, &traj, 0.0, 2).unwrap();
        let segs: Vec<_> = c.evolve_segments().collect();
        assert_eq!(segs.len(), 1);
        assert!(segs[0].generator.max_abs_diff(&n.scale_re(w)) < 1e-15);

        let traj = ParityTrajectory::new(Parity::Plus, vec![4.0], 10.0).unwrap();
        let c = compile(&seq, &dev, &traj, 0.0, 2).unwrap();
        let segs: Vec<_> = c.evolve_segments().collect();
        assert_eq!(segs.len(), 2);
        assert_abs_diff_eq!(segs[0].duration, 4.0);
        assert_abs_diff_eq!(segs[1].duration, 6.0);
        assert!(segs[1].generator.max_abs_diff(&n.scale_re(-w)) < 1e-15);
        assert_abs_diff_eq!(c.duration(), seq.duration(), epsilon = 1e-12);
    }

    #[test]
    fn compiled_drive_detuning_for_wrong_parity() {
        let dev = DeviceParams::default();
        let d = drive_detuning(&dev, DriveTarget::Band(Parity::Plus), Subspace::Q12, Parity::Minus);
        assert_abs_diff_eq!(d, 2.0 * PI * 2.0 * dev.delta12(), epsilon = 1e-12);
        let d = drive_detuning(&dev, DriveTarget::Band(Parity::Plus), Subspace::Q12, Parity::Plus);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn parities_differ_only_in_dispersive_term() {
        let dev = quiet(0.006);
        let seq = build_ramsey(10.0, 0.1).unwrap();
        let gen = |p| {
            let traj = ParityTrajectory::constant(p, 10.0);
            compile(&seq, &dev, &traj, 0.0, 3).unwrap().evolve_segments().next().unwrap().generator
        };
        let diff = gen(Parity::Plus) - gen(Parity::Minus);
        let want = number_op(3).unwrap().scale_re(2.0 * mhz_to_angular(dev.delta01()));
        assert!(diff.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn coverage_error() {
        let seq = build_ramsey(10.0, 0.1).unwrap();
        let traj = ParityTrajectory::constant(Parity::Plus, 5.0);
        let err = compile(&seq, &DeviceParams::default(), &traj, 0.0, 2).unwrap_err();
        assert!(matches!(err, Error::Coverage { .. }));
    }
}
