//! Lindblad master-equation integration for piecewise-constant generators.
//!
//! Each segment carries a time-independent rotating-frame generator; the
//! dissipator is built from `L1 = sqrt(Gamma1) a` and
//! `L2 = sqrt(Gamma_phi) a^dagger a`. Integration is fixed-step RK4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{annihilation_op, number_op, DensityMatrix, Operator, C64};
use crate::transmon::DeviceParams;

/// Default RK4 step bound, us.
pub const DEFAULT_DT_MAX: f64 = 0.005;

/// Per-step bound on `|tr rho - 1|` before the integrator gives up.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-7;

/// Upper bound on `dt * ||generator||`. Keeps fast drives accurate and stiff
/// segments inside the RK4 stability region when `dt_max` alone would not.
const STEP_NORM_LIMIT: f64 = 0.01;

/// Relaxation and pure-dephasing channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseSet {
    /// `Gamma1 = 1/T1`, 1/us.
    pub gamma1: f64,
    /// `Gamma_phi = 2/T_phi`, 1/us.
    pub gammaphi: f64,
    pub dim: usize,
}

impl CollapseSet {
    pub fn new(gamma1: f64, gammaphi: f64, dim: usize) -> Result<Self> {
        if !(gamma1 >= 0.0 && gammaphi >= 0.0) {
            return Err(Error::Domain(format!(
                "collapse rates must be >= 0 (got {gamma1}, {gammaphi})"
            )));
        }
        Operator::zeros(dim)?;
        Ok(CollapseSet { gamma1, gammaphi, dim })
    }

    pub fn none(dim: usize) -> Result<Self> {
        Self::new(0.0, 0.0, dim)
    }

    pub fn from_device(dev: &DeviceParams, dim: usize) -> Result<Self> {
        Self::new(dev.gamma1(), dev.gamma_phi(), dim)
    }

    /// Nonzero collapse operators.
    pub fn operators(&self) -> Vec<Operator> {
        let mut out = Vec::with_capacity(2);
        if self.gamma1 > 0.0 {
            out.push(annihilation_op(self.dim).expect("validated dim").scale_re(self.gamma1.sqrt()));
        }
        if self.gammaphi > 0.0 {
            out.push(number_op(self.dim).expect("validated dim").scale_re(self.gammaphi.sqrt()));
        }
        out
    }
}

/// A time-independent generator applied for `duration` us.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSegment {
    pub duration: f64,
    /// Rotating-frame Hamiltonian in rad/us.
    pub generator: Operator,
    pub label: String,
}

impl HamiltonianSegment {
    pub fn new(duration: f64, generator: Operator, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if !(duration >= 0.0) || !duration.is_finite() {
            return Err(Error::Domain(format!(
                "segment `{label}` has invalid duration {duration}"
            )));
        }
        let herm = generator.hermiticity_error();
        if herm > 1e-12 {
            return Err(Error::Domain(format!(
                "segment `{label}` generator is not Hermitian (error {herm:.3e})"
            )));
        }
        Ok(HamiltonianSegment {
            duration,
            generator,
            label,
        })
    }
}

/// The Lindbladian of one segment, folded into an effective non-Hermitian
/// Hamiltonian `H - (i/2) sum L^dagger L` plus the jump terms.
struct Liouvillian {
    heff: Operator,
    jumps: Vec<(Operator, Operator)>,
    norm_bound: f64,
}

impl Liouvillian {
    fn new(h: &Operator, c: &CollapseSet) -> Result<Self> {
        if h.dim() != c.dim {
            return Err(Error::Shape {
                expected: h.dim(),
                found: c.dim,
            });
        }
        let ops = c.operators();
        let mut k = Operator::zeros(h.dim())?;
        for l in &ops {
            k += l.adjoint().matmul(l);
        }
        let heff = *h - k.scale(C64::new(0.0, 0.5));
        let jumps: Vec<(Operator, Operator)> = ops.iter().map(|l| (*l, l.adjoint())).collect();
        let norm_bound = 2.0 * heff.inf_norm()
            + jumps
                .iter()
                .map(|(l, ld)| l.inf_norm() * ld.inf_norm())
                .sum::<f64>();
        Ok(Liouvillian {
            heff,
            jumps,
            norm_bound,
        })
    }

    fn apply(&self, rho: &Operator) -> Operator {
        let minus_i = C64::new(0.0, -1.0);
        let hr = self.heff.matmul(rho);
        let rh = rho.matmul(&self.heff.adjoint());
        let mut out = (hr - rh).scale(minus_i);
        for (l, ld) in &self.jumps {
            out += l.matmul(rho).matmul(ld);
        }
        out
    }

    fn rk4_step(&self, rho: &Operator, dt: f64) -> Operator {
        let k1 = self.apply(rho);
        let k2 = self.apply(&(*rho + k1.scale_re(dt / 2.0)));
        let k3 = self.apply(&(*rho + k2.scale_re(dt / 2.0)));
        let k4 = self.apply(&(*rho + k3.scale_re(dt)));
        *rho + (k1 + k2.scale_re(2.0) + k3.scale_re(2.0) + k4).scale_re(dt / 6.0)
    }
}

/// `d rho/dt = -i[H, rho] + sum_k (L_k rho L_k^dagger - {L_k^dagger L_k, rho}/2)`.
pub fn lindblad_rhs(rho: &DensityMatrix, h: &Operator, c: &CollapseSet) -> Result<Operator> {
    rho.op().same_shape(h)?;
    Ok(Liouvillian::new(h, c)?.apply(rho.op()))
}

/// One sampled point of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub state: DensityMatrix,
}

/// Time-ordered samples, always including `t = 0` and every segment boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DensityMatrix {
        &self.samples.last().expect("trajectory is never empty").state
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.time)
    }

    /// The sample at `t`, matched to within 1e-9 us.
    pub fn state_at(&self, t: f64) -> Option<&DensityMatrix> {
        self.samples
            .iter()
            .find(|s| (s.time - t).abs() <= 1e-9)
            .map(|s| &s.state)
    }
}

const TIME_EPS: f64 = 1e-12;

/// Integrates `rho0` through `segments` back to back.
///
/// Steps never exceed `dt_max` (nor the stability bound of a stiff segment);
/// the last step of every interval is shortened to land exactly on the next
/// segment boundary or requested sample time. `sample_times` outside the
/// total duration are ignored.
pub fn integrate(
    rho0: &DensityMatrix,
    segments: &[HamiltonianSegment],
    c: &CollapseSet,
    dt_max: f64,
    sample_times: &[f64],
) -> Result<Trajectory> {
    if !(dt_max > 0.0) || !dt_max.is_finite() {
        return Err(Error::Domain(format!("dt_max must be > 0, got {dt_max}")));
    }
    if rho0.dim() != c.dim {
        return Err(Error::Shape {
            expected: rho0.dim(),
            found: c.dim,
        });
    }
    let mut grid: Vec<f64> = sample_times.iter().copied().filter(|t| t.is_finite()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);

    let mut samples = vec![Sample {
        time: 0.0,
        state: *rho0,
    }];
    let mut rho = *rho0.op();
    let mut t = 0.0;
    let mut next_grid = grid.iter().position(|&g| g > TIME_EPS).unwrap_or(grid.len());

    for seg in segments {
        if seg.generator.dim() != rho0.dim() {
            return Err(Error::Shape {
                expected: rho0.dim(),
                found: seg.generator.dim(),
            });
        }
        if seg.duration <= 0.0 {
            continue;
        }
        let liou = Liouvillian::new(&seg.generator, c)?;
        let h = if liou.norm_bound > 0.0 {
            dt_max.min(STEP_NORM_LIMIT / liou.norm_bound)
        } else {
            dt_max
        };
        let mut map = StepMap::new(&liou, rho0.dim(), h);
        let t_end = t + seg.duration;
        loop {
            let stop = match grid.get(next_grid) {
                Some(&g) if g < t_end - TIME_EPS => g,
                _ => t_end,
            };
            rho = advance(&liou, &mut map, rho, stop - t, h, &seg.label)?;
            t = stop;
            let state = validated(rho, &seg.label, t)?;
            samples.push(Sample { time: t, state });
            while next_grid < grid.len() && grid[next_grid] <= t + TIME_EPS {
                next_grid += 1;
            }
            if stop >= t_end {
                break;
            }
        }
        t = t_end;
    }
    Ok(Trajectory { samples })
}

/// The RK4 update `1 + hL + (hL)^2/2 + (hL)^3/6 + (hL)^4/24` for a fixed
/// step `h`, as a matrix on row-major vectorized density matrices. Long runs
/// of steps are applied as one matrix power, the last of which is cached.
struct StepMap {
    dim: usize,
    m: Vec<C64>,
    power: Option<(usize, Vec<C64>)>,
}

/// Step counts from which `StepMap::power` replaces stepping one at a time.
const POWER_MIN_STEPS: usize = 64;

fn square_matmul(a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for r in 0..n {
        for q in 0..n {
            let x = a[r * n + q];
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, y) in out[r * n..(r + 1) * n].iter_mut().zip(&b[q * n..(q + 1) * n]) {
                *o += x * y;
            }
        }
    }
    out
}

impl StepMap {
    fn new(liou: &Liouvillian, dim: usize, h: f64) -> Self {
        let n = dim * dim;
        // Columns of the superoperator are the images of the basis |k><l|.
        let mut s = vec![C64::new(0.0, 0.0); n * n];
        for k in 0..dim {
            for l in 0..dim {
                let basis = Operator::from_fn(dim, |i, j| if (i, j) == (k, l) { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
                    .expect("validated dim");
                let img = liou.apply(&basis);
                for i in 0..dim {
                    for j in 0..dim {
                        s[(i * dim + j) * n + k * dim + l] = img.get(i, j) * h;
                    }
                }
            }
        }
        // Horner: 1 + hS (1 + hS/2 (1 + hS/3 (1 + hS/4))).
        let identity = |a: &mut Vec<C64>| {
            for d in 0..n {
                a[d * n + d] += 1.0;
            }
        };
        let mut acc = vec![C64::new(0.0, 0.0); n * n];
        identity(&mut acc);
        for order in [4.0, 3.0, 2.0, 1.0] {
            let mut next = vec![C64::new(0.0, 0.0); n * n];
            for r in 0..n {
                for q in 0..n {
                    let a = s[r * n + q];
                    if a == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for c in 0..n {
                        next[r * n + c] += a * acc[q * n + c];
                    }
                }
            }
            for v in next.iter_mut() {
                *v /= order;
            }
            identity(&mut next);
            acc = next;
        }
        StepMap {
            dim,
            m: acc,
            power: None,
        }
    }

    /// `m^k` by repeated squaring.
    fn power(&mut self, k: usize) -> &[C64] {
        if self.power.as_ref().is_none_or(|(cached, _)| *cached != k) {
            let n = self.dim * self.dim;
            let mut result: Option<Vec<C64>> = None;
            let mut base = self.m.clone();
            let mut e = k;
            while e > 0 {
                if e & 1 == 1 {
                    result = Some(match result {
                        None => base.clone(),
                        Some(r) => square_matmul(&r, &base, n),
                    });
                }
                e >>= 1;
                if e > 0 {
                    base = square_matmul(&base, &base, n);
                }
            }
            self.power = Some((k, result.unwrap_or_else(|| identity_vec(n))));
        }
        &self.power.as_ref().expect("just filled").1
    }

    fn apply(&self, v: &[C64], out: &mut [C64]) {
        apply_matrix(&self.m, v, out);
    }

}

fn map_trace(dim: usize, v: &[C64]) -> C64 {
    (0..dim).map(|i| v[i * dim + i]).sum()
}

fn identity_vec(n: usize) -> Vec<C64> {
    let mut m = vec![C64::new(0.0, 0.0); n * n];
    for d in 0..n {
        m[d * n + d] = C64::new(1.0, 0.0);
    }
    m
}

fn apply_matrix(m: &[C64], v: &[C64], out: &mut [C64]) {
    let n = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * n..(r + 1) * n];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn trace_failure(label: &str, drift: f64) -> Error {
    Error::IntegratorFailure {
        segment: label.to_string(),
        detail: format!("trace drift {drift:.3e} exceeds {TRACE_DRIFT_LIMIT:.0e}"),
    }
}

fn advance(liou: &Liouvillian, map: &mut StepMap, rho: Operator, span: f64, h: f64, label: &str) -> Result<Operator> {
    let dim = rho.dim();
    let full = ((span - TIME_EPS) / h).floor().max(0.0) as usize;
    let mut v: Vec<C64> = (0..dim * dim).map(|k| rho.get(k / dim, k % dim)).collect();
    let mut w = v.clone();
    let check = |v: &[C64]| {
        let tr = map_trace(dim, v);
        let drift = (tr.re - 1.0).abs().max(tr.im.abs());
        if drift <= TRACE_DRIFT_LIMIT {
            Ok(())
        } else {
            Err(trace_failure(label, drift))
        }
    };
    if full >= POWER_MIN_STEPS {
        apply_matrix(map.power(full), &v, &mut w);
        std::mem::swap(&mut v, &mut w);
        check(&v)?;
    } else {
        for _ in 0..full {
            map.apply(&v, &mut w);
            std::mem::swap(&mut v, &mut w);
            check(&v)?;
        }
    }
    let mut rho = Operator::from_fn(dim, |i, j| v[i * dim + j])?;
    let rest = span - full as f64 * h;
    if rest > TIME_EPS {
        rho = liou.rk4_step(&rho, rest);
        let tr = rho.trace();
        let drift = (tr.re - 1.0).abs().max(tr.im.abs());
        if !(drift <= TRACE_DRIFT_LIMIT) {
            return Err(trace_failure(label, drift));
        }
    }
    if !rho.is_finite() {
        return Err(Error::IntegratorFailure {
            segment: label.to_string(),
            detail: "non-finite state".into(),
        });
    }
    Ok(rho)
}

fn validated(rho: Operator, label: &str, t: f64) -> Result<DensityMatrix> {
    DensityMatrix::new(rho).map_err(|e| Error::IntegratorFailure {
        segment: label.to_string(),
        detail: format!("at t = {t} us: {e}"),
    })
}

/// Evolves under `pre_h` until `t_flip`, then under `post_h` until `t_total`.
pub fn integrate_with_flip(
    rho0: &DensityMatrix,
    pre_h: &Operator,
    post_h: &Operator,
    t_flip: f64,
    t_total: f64,
    c: &CollapseSet,
    dt_max: f64,
    sample_times: &[f64],
) -> Result<Trajectory> {
    if !(0.0..=t_total).contains(&t_flip) {
        return Err(Error::Domain(format!(
            "flip time {t_flip} outside [0, {t_total}]"
        )));
    }
    let segments = [
        HamiltonianSegment::new(t_flip, *pre_h, "pre-flip")?,
        HamiltonianSegment::new(t_total - t_flip, *post_h, "post-flip")?,
    ];
    integrate(rho0, &segments, c, dt_max, sample_times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::dm_pure;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn plus() -> DensityMatrix {
        let s = C64::new(FRAC_1_SQRT_2, 0.0);
        dm_pure(&[s, s]).unwrap()
    }

    #[test]
    fn rhs_vanishes_without_dynamics() {
        let rho = plus();
        let d = lindblad_rhs(&rho, &Operator::zeros(2).unwrap(), &CollapseSet::none(2).unwrap()).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn rhs_amplitude_damping() {
        let rho = DensityMatrix::basis(2, 1).unwrap();
        let c = CollapseSet::new(0.3, 0.0, 2).unwrap();
        let d = lindblad_rhs(&rho, &Operator::zeros(2).unwrap(), &c).unwrap();
        assert_abs_diff_eq!(d[(1, 1)].re, -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(0, 0)].re, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn rhs_pure_dephasing_offdiagonal() {
        // Hand evaluation: L2 rho L2 = Gphi |1><1|rho|1><1|, K = Gphi |1><1|,
        // so (d rho/dt)_01 = -(Gphi/2) rho_01.
        let g = 0.4;
        let rho = plus();
        let c = CollapseSet::new(0.0, g, 2).unwrap();
        let d = lindblad_rhs(&rho, &Operator::zeros(2).unwrap(), &c).unwrap();
        assert_abs_diff_eq!(d[(0, 1)].re, -(g / 2.0) * 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(0, 0)].re, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rhs_is_traceless() {
        let rho = plus();
        let h = number_op(2).unwrap().scale_re(1.3);
        let c = CollapseSet::new(0.2, 0.1, 2).unwrap();
        assert!(lindblad_rhs(&rho, &h, &c).unwrap().trace().norm() <= 1e-12);
    }

    #[test]
    fn rhs_shape_mismatch() {
        let rho = plus();
        let err = lindblad_rhs(&rho, &Operator::zeros(3).unwrap(), &CollapseSet::none(2).unwrap());
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn free_state_is_stationary() {
        let rho0 = plus();
        let seg = HamiltonianSegment::new(5.0, Operator::zeros(2).unwrap(), "idle").unwrap();
        let traj = integrate(&rho0, &[seg], &CollapseSet::none(2).unwrap(), 0.01, &[1.0, 2.5]).unwrap();
        assert_eq!(traj.samples.len(), 4);
        for s in &traj.samples {
            assert!(s.state.op().max_abs_diff(rho0.op()) < 1e-15);
        }
    }

    #[test]
    fn phase_accrues_at_detuning() {
        let dw = 2.0 * PI * 0.1;
        let h = number_op(2).unwrap().scale_re(dw);
        let seg = HamiltonianSegment::new(7.3, h, "free").unwrap();
        let grid: Vec<f64> = (0..=14).map(|k| k as f64 * 0.5).collect();
        let traj = integrate(&plus(), &[seg], &CollapseSet::none(2).unwrap(), 0.005, &grid).unwrap();
        for s in &traj.samples {
            let want = C64::from_polar(0.5, dw * s.time);
            assert!((s.state.op()[(0, 1)] - want).norm() < 1e-10, "t = {}", s.time);
        }
    }

    #[test]
    fn amplitude_decay_law() {
        let c = CollapseSet::new(1.0 / 50.0, 0.0, 2).unwrap();
        let seg = HamiltonianSegment::new(10.0, Operator::zeros(2).unwrap(), "decay").unwrap();
        let traj = integrate(&DensityMatrix::basis(2, 1).unwrap(), &[seg], &c, 0.005, &[]).unwrap();
        assert_abs_diff_eq!(traj.final_state().population(1), (-0.2f64).exp(), epsilon = 1e-10);
        assert_abs_diff_eq!(traj.final_state().population(1), 0.8187, epsilon = 1e-4);
    }

    #[test]
    fn flip_endpoints_match_single_generator() {
        let c = CollapseSet::new(0.02, 0.03, 2).unwrap();
        let hp = number_op(2).unwrap().scale_re(0.05);
        let hm = number_op(2).unwrap().scale_re(-0.05);
        let single = |h: &Operator| {
            let seg = HamiltonianSegment::new(20.0, *h, "s").unwrap();
            *integrate(&plus(), &[seg], &c, 0.01, &[]).unwrap().final_state()
        };
        let at_zero = integrate_with_flip(&plus(), &hp, &hm, 0.0, 20.0, &c, 0.01, &[]).unwrap();
        assert!(at_zero.final_state().op().max_abs_diff(single(&hm).op()) < 1e-14);
        let at_end = integrate_with_flip(&plus(), &hp, &hm, 20.0, 20.0, &c, 0.01, &[]).unwrap();
        assert!(at_end.final_state().op().max_abs_diff(single(&hp).op()) < 1e-14);
    }

    #[test]
    fn telegraph_flip_phase() {
        // Piecewise phase: +w for t_f, -w for T - t_f => arg rho01 = w (2 t_f - T).
        let delta01 = 0.006;
        let w = 2.0 * PI * delta01;
        let hp = number_op(2).unwrap().scale_re(w);
        let hm = number_op(2).unwrap().scale_re(-w);
        let (tf, total) = (13.0, 40.0);
        let traj = integrate_with_flip(&plus(), &hp, &hm, tf, total, &CollapseSet::none(2).unwrap(), 0.005, &[])
            .unwrap();
        let r01 = traj.final_state().op()[(0, 1)];
        assert_abs_diff_eq!(r01.arg(), w * (2.0 * tf - total), epsilon = 1e-9);
        assert_abs_diff_eq!(r01.norm(), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn flip_time_out_of_range() {
        let h = Operator::zeros(2).unwrap();
        let c = CollapseSet::none(2).unwrap();
        assert!(integrate_with_flip(&plus(), &h, &h, 5.0, 4.0, &c, 0.01, &[]).is_err());
    }

    #[test]
    fn zero_duration_segments_skipped() {
        let h = number_op(2).unwrap();
        let segs = [
            HamiltonianSegment::new(0.0, h, "empty").unwrap(),
            HamiltonianSegment::new(1.0, h, "one").unwrap(),
        ];
        let traj = integrate(&plus(), &segs, &CollapseSet::none(2).unwrap(), 0.01, &[]).unwrap();
        assert_eq!(traj.samples.len(), 2);
    }

    #[test]
    fn non_hermitian_generator_rejected() {
        let h = crate::qcore::annihilation_op(2).unwrap();
        assert!(HamiltonianSegment::new(1.0, h, "bad").is_err());
        assert!(HamiltonianSegment::new(-1.0, Operator::zeros(2).unwrap(), "neg").is_err());
    }

    #[test]
    fn step_map_matches_rk4_step() {
        let h = Operator::from_fn(3, |i, j| C64::new((i + 2 * j) as f64 * 0.3, 0.0) + C64::new((j + 2 * i) as f64 * 0.3, 0.0))
            .unwrap();
        let c = CollapseSet::new(0.1, 0.05, 3).unwrap();
        let liou = Liouvillian::new(&h, &c).unwrap();
        let rho = Operator::from_fn(3, |i, j| C64::new(0.1 * (i + j) as f64, 0.07 * (i as f64 - j as f64)) + if i == j { C64::new(0.2, 0.0) } else { C64::new(0.0, 0.0) })
            .unwrap();
        let dt = 0.003;
        let map = StepMap::new(&liou, 3, dt);
        let v: Vec<C64> = (0..9).map(|k| rho.get(k / 3, k % 3)).collect();
        let mut w = vec![C64::new(0.0, 0.0); 9];
        map.apply(&v, &mut w);
        let want = liou.rk4_step(&rho, dt);
        for k in 0..9 {
            assert!((w[k] - want.get(k / 3, k % 3)).norm() < 1e-15);
        }
    }

    #[test]
    fn step_power_matches_repeated_steps() {
        let h = Operator::from_fn(3, |i, j| C64::new(((i + 1) * (j + 1)) as f64 * 0.4, 0.0)).unwrap();
        let c = CollapseSet::new(0.1, 0.05, 3).unwrap();
        let liou = Liouvillian::new(&h, &c).unwrap();
        let mut map = StepMap::new(&liou, 3, 0.01);
        let mut v: Vec<C64> = (0..9).map(|k| if k == 4 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).collect();
        let start = v.clone();
        let mut w = v.clone();
        for _ in 0..1000 {
            map.apply(&v, &mut w);
            std::mem::swap(&mut v, &mut w);
        }
        apply_matrix(map.power(1000), &start, &mut w);
        for k in 0..9 {
            assert!((w[k] - v[k]).norm() < 1e-12);
        }
        apply_matrix(map.power(0), &start, &mut w);
        assert_eq!(w, start);
    }

    #[test]
    fn stiff_generator_stays_stable() {
        // dt_max alone would put dt * ||H|| far outside the RK4 stability region.
        let h = number_op(3).unwrap().scale_re(2000.0);
        let seg = HamiltonianSegment::new(0.2, h, "stiff").unwrap();
        let rho0 = dm_pure(&[C64::new(0.6, 0.0), C64::new(0.0, 0.0), C64::new(0.8, 0.0)]).unwrap();
        let traj = integrate(&rho0, &[seg], &CollapseSet::none(3).unwrap(), 0.05, &[]).unwrap();
        assert_abs_diff_eq!(traj.final_state().population(2), 0.64, epsilon = 1e-9);
    }

    #[test]
    fn markov_dephasing_rate_in_dim3() {
        // Level-1/level-2 coherence decays at 3 Gamma1/2 + Gamma_phi/2.
        let (g1, gp) = (0.02, 0.03);
        let s = C64::new(FRAC_1_SQRT_2, 0.0);
        let rho0 = dm_pure(&[C64::new(0.0, 0.0), s, s]).unwrap();
        let seg = HamiltonianSegment::new(10.0, Operator::zeros(3).unwrap(), "idle").unwrap();
        let c = CollapseSet::new(g1, gp, 3).unwrap();
        let traj = integrate(&rho0, &[seg], &c, 0.005, &[]).unwrap();
        let want = 0.5 * (-(1.5 * g1 + 0.5 * gp) * 10.0).exp();
        assert_abs_diff_eq!(traj.final_state().op()[(1, 2)].re, want, epsilon = 1e-10);
    }
}
