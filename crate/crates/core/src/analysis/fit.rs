//! Least-squares fits of decaying sinusoids.
//!
//! Model: `y = A exp(-t/T2) cos(2 pi f t + phi) + C`. The decay is fitted as
//! the rate `1/T2`, which stays well conditioned for very long decays.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};

const MIN_POINTS: usize = 8;
const MAX_ITERATIONS: usize = 500;
const LAMBDA_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ParamErrors {
    pub amplitude: f64,
    pub t2: f64,
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub amplitude: f64,
    /// us.
    pub t2: f64,
    /// MHz.
    pub frequency: f64,
    /// rad, in `(-pi, pi]`.
    pub phase: f64,
    pub offset: f64,
    pub stderr: ParamErrors,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn model(&self, t: f64) -> f64 {
        self.amplitude * (-t / self.t2).exp() * (2.0 * PI * self.frequency * t + self.phase).cos() + self.offset
    }

    pub fn residuals(&self, t: &[f64], y: &[f64]) -> Vec<f64> {
        t.iter().zip(y).map(|(&ti, &yi)| yi - self.model(ti)).collect()
    }
}

fn check_input(t: &[f64], y: &[f64], y_err: &[f64]) -> Result<()> {
    if t.len() != y.len() {
        return Err(Error::FitInput(format!("{} times but {} values", t.len(), y.len())));
    }
    if !y_err.is_empty() && y_err.len() != y.len() {
        return Err(Error::FitInput(format!("{} errors for {} values", y_err.len(), y.len())));
    }
    if t.len() < MIN_POINTS {
        return Err(Error::FitInput(format!("need at least {MIN_POINTS} points, got {}", t.len())));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::FitInput("non-finite sample".into()));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::FitInput("times must be strictly increasing".into()));
    }
    if y_err.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::FitInput("error bars must be positive".into()));
    }
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-12 * (1.0 + hi.abs().max(lo.abs())) {
        return Err(Error::NoOscillation);
    }
    Ok(())
}

fn weights(y_err: &[f64], n: usize) -> Vec<f64> {
    if y_err.is_empty() {
        vec![1.0; n]
    } else {
        y_err.iter().map(|e| 1.0 / e).collect()
    }
}

struct LmOutcome {
    params: Vec<f64>,
    covariance: Option<DMatrix<f64>>,
    chi2: f64,
    converged: bool,
    iterations: usize,
}

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt scaling).
/// `eval` fills the weighted residual vector and Jacobian for a parameter
/// vector.
fn levenberg_marquardt(
    mut params: Vec<f64>,
    n: usize,
    eval: impl Fn(&[f64], &mut DVector<f64>, &mut DMatrix<f64>),
) -> LmOutcome {
    let p = params.len();
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, p);
    eval(&params, &mut r, &mut j);
    let mut chi2 = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut r_try = DVector::zeros(n);
    let mut j_try = DMatrix::zeros(n, p);

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let grad = j.transpose() * &r;
        let mut improved = false;
        while lambda <= LAMBDA_MAX {
            let mut a = jtj.clone();
            for k in 0..p {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            eval(&trial, &mut r_try, &mut j_try);
            let chi2_try = r_try.norm_squared();
            if chi2_try.is_finite() && chi2_try <= chi2 {
                let small_step = step
                    .iter()
                    .zip(&params)
                    .all(|(d, x)| d.abs() <= 1e-10 * (x.abs() + 1e-10));
                let small_gain = chi2 - chi2_try <= 1e-14 * chi2.max(1e-300);
                params = trial;
                std::mem::swap(&mut r, &mut r_try);
                std::mem::swap(&mut j, &mut j_try);
                chi2 = chi2_try;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                converged = small_step || small_gain;
                break;
            }
            lambda *= 10.0;
        }
        // No step reduces chi^2 any further: a stationary point.
        if !improved {
            converged = chi2.is_finite();
            break;
        }
        if converged {
            break;
        }
    }
    let jtj = j.transpose() * &j;
    LmOutcome {
        params,
        covariance: jtj.try_inverse(),
        chi2,
        converged,
        iterations,
    }
}

fn fft(data: &mut [Complex<f64>], inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    plan.process(data);
}

/// Frequency of the strongest non-DC component of `z` on a zero-padded FFT,
/// refined by parabolic interpolation. Assumes near-uniform sampling.
fn dft_peak_frequency(t: &[f64], z: &[f64]) -> f64 {
    let n = z.len();
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    let m = (16 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = z.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    fft(&mut buf, false);
    let mag: Vec<f64> = buf[..=m / 2].iter().map(|c| c.norm()).collect();
    // Skip the DC lobe: start after the first local minimum.
    let mut start = 1;
    while start + 1 < mag.len() && mag[start + 1] < mag[start] {
        start += 1;
    }
    let k = (start..mag.len())
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
        .unwrap_or(1);
    let shift = if k > 0 && k + 1 < mag.len() {
        let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
        let den = a - 2.0 * b + c;
        if den.abs() > 0.0 {
            0.5 * (a - c) / den
        } else {
            0.0
        }
    } else {
        0.0
    };
    (k as f64 + shift) / (m as f64 * dt)
}

/// Magnitude of the analytic signal of `z`.
fn hilbert_envelope(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut buf: Vec<Complex<f64>> = z.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft(&mut buf, false);
    for (k, c) in buf.iter_mut().enumerate() {
        let factor = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *c *= factor;
    }
    fft(&mut buf, true);
    buf.iter().map(|c| c.norm() / n as f64).collect()
}

/// Decay rate from a straight-line fit of the log envelope, ignoring the
/// outer tenth at each end where the transform rings.
fn envelope_rate(t: &[f64], env: &[f64]) -> f64 {
    let n = t.len();
    let cut = n / 10;
    let pts: Vec<(f64, f64)> = (cut..n - cut)
        .filter(|&i| env[i] > 0.0)
        .map(|i| (t[i], env[i].ln()))
        .collect();
    let span = t[n - 1] - t[0];
    let floor = 0.01 / span;
    if pts.len() < 2 {
        return 1.0 / span;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    if sxx <= 0.0 {
        return 1.0 / span;
    }
    (-sxy / sxx).max(floor)
}

/// Linear least squares for `(a, b, C)` in
/// `y = exp(-gamma t) (a cos(w t) + b sin(w t)) + C`.
fn linear_quadratures(t: &[f64], y: &[f64], w: &[f64], gamma: f64, freq: f64, with_sine: bool) -> Option<(f64, f64, f64)> {
    let cols = if with_sine { 3 } else { 2 };
    let n = t.len();
    let mut a = DMatrix::zeros(n, cols);
    let mut b = DVector::zeros(n);
    for i in 0..n {
        let e = (-gamma * t[i]).exp();
        let th = 2.0 * PI * freq * t[i];
        a[(i, 0)] = w[i] * e * th.cos();
        if with_sine {
            a[(i, 1)] = w[i] * e * th.sin();
        }
        a[(i, cols - 1)] = w[i];
        b[i] = w[i] * y[i];
    }
    let sol = (a.transpose() * &a).lu().solve(&(a.transpose() * b))?;
    if with_sine {
        Some((sol[0], sol[1], sol[2]))
    } else {
        Some((sol[0], 0.0, sol[1]))
    }
}

fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

fn finish(
    t: &[f64],
    y: &[f64],
    (mut amp, gamma, freq, mut phase, offset): (f64, f64, f64, f64, f64),
    mut err: ParamErrors,
    converged: bool,
    iterations: usize,
) -> FitResult {
    if amp < 0.0 {
        amp = -amp;
        phase += PI;
    }
    err.t2 = if gamma > 0.0 { err.t2 / (gamma * gamma) } else { f64::INFINITY };
    let mut out = FitResult {
        amplitude: amp,
        t2: if gamma > 0.0 { 1.0 / gamma } else { f64::INFINITY },
        frequency: freq,
        phase: wrap_phase(phase),
        offset,
        stderr: err,
        residual_rms: 0.0,
        converged: converged && gamma > 0.0,
        iterations,
    };
    let r = out.residuals(t, y);
    out.residual_rms = (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
    out
}

fn scaled_stderr(out: &LmOutcome, n: usize) -> Vec<f64> {
    let p = out.params.len();
    let dof = n.saturating_sub(p).max(1) as f64;
    let s2 = out.chi2 / dof;
    match &out.covariance {
        Some(c) => (0..p).map(|k| (c[(k, k)].max(0.0) * s2).sqrt()).collect(),
        None => vec![f64::INFINITY; p],
    }
}

/// Fits all five parameters. `y_err` may be empty for an unweighted fit.
///
/// The frequency starts at the Fourier peak of `y - mean(y)`, the decay rate
/// at the slope of the log analytic-signal envelope; amplitude, phase and
/// offset then follow from a linear solve.
pub fn fit_decaying_sinusoid(t: &[f64], y: &[f64], y_err: &[f64]) -> Result<FitResult> {
    check_input(t, y, y_err)?;
    let n = t.len();
    let w = weights(y_err, n);
    let mean = y.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let f0 = dft_peak_frequency(t, &z);
    let g0 = envelope_rate(t, &hilbert_envelope(&z));
    let (a, b, c0) = linear_quadratures(t, y, &w, g0, f0, true).ok_or(Error::NoOscillation)?;
    let amp0 = a.hypot(b);
    if amp0 <= 1e-12 {
        return Err(Error::NoOscillation);
    }
    let phi0 = (-b).atan2(a);

    let eval = |p: &[f64], r: &mut DVector<f64>, jac: &mut DMatrix<f64>| {
        let (amp, gamma, freq, phi, off) = (p[0], p[1], p[2], p[3], p[4]);
        for i in 0..n {
            let e = (-gamma * t[i]).exp();
            let th = 2.0 * PI * freq * t[i] + phi;
            let (s, c) = th.sin_cos();
            r[i] = w[i] * (amp * e * c + off - y[i]);
            jac[(i, 0)] = w[i] * e * c;
            jac[(i, 1)] = -w[i] * t[i] * amp * e * c;
            jac[(i, 2)] = -w[i] * amp * e * s * 2.0 * PI * t[i];
            jac[(i, 3)] = -w[i] * amp * e * s;
            jac[(i, 4)] = w[i];
        }
    };
    let out = levenberg_marquardt(vec![amp0, g0, f0, phi0, c0], n, eval);
    let se = scaled_stderr(&out, n);
    let p = &out.params;
    let err = ParamErrors {
        amplitude: se[0],
        t2: se[1],
        frequency: se[2],
        phase: se[3],
        offset: se[4],
    };
    Ok(finish(t, y, (p[0], p[1], p[2], p[3], p[4]), err, out.converged, out.iterations))
}

/// Fits the envelope with the oscillation frequency held at `frequency`
/// (MHz). At zero frequency the phase is fixed to zero and the amplitude
/// carries the sign.
pub fn fit_decay_envelope(t: &[f64], y: &[f64], y_err: &[f64], frequency: f64) -> Result<FitResult> {
    check_input(t, y, y_err)?;
    if !frequency.is_finite() {
        return Err(Error::FitInput("frequency must be finite".into()));
    }
    let n = t.len();
    let w = weights(y_err, n);
    let with_sine = frequency != 0.0;
    let mean = y.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let g0 = if with_sine {
        envelope_rate(t, &hilbert_envelope(&z))
    } else {
        1.0 / (t[n - 1] - t[0])
    };
    let (a0, b0, c0) = linear_quadratures(t, y, &w, g0, frequency, with_sine).ok_or(Error::NoOscillation)?;
    if a0.hypot(b0) <= 1e-12 {
        return Err(Error::NoOscillation);
    }

    // Parameters: [a, gamma, C] or [a, b, gamma, C].
    let eval = |p: &[f64], r: &mut DVector<f64>, jac: &mut DMatrix<f64>| {
        let (a, b, gamma, off) = if with_sine { (p[0], p[1], p[2], p[3]) } else { (p[0], 0.0, p[1], p[2]) };
        let gi = if with_sine { 2 } else { 1 };
        for i in 0..n {
            let e = (-gamma * t[i]).exp();
            let (s, c) = (2.0 * PI * frequency * t[i]).sin_cos();
            let osc = a * c + b * s;
            r[i] = w[i] * (e * osc + off - y[i]);
            jac[(i, 0)] = w[i] * e * c;
            if with_sine {
                jac[(i, 1)] = w[i] * e * s;
            }
            jac[(i, gi)] = -w[i] * t[i] * e * osc;
            jac[(i, gi + 1)] = w[i];
        }
    };
    let start = if with_sine { vec![a0, b0, g0, c0] } else { vec![a0, g0, c0] };
    let out = levenberg_marquardt(start, n, eval);
    let se = scaled_stderr(&out, n);
    let p = &out.params;
    let (a, b, gamma, off, sa, sb, sg, so) = if with_sine {
        (p[0], p[1], p[2], p[3], se[0], se[1], se[2], se[3])
    } else {
        (p[0], 0.0, p[1], p[2], se[0], 0.0, se[1], se[2])
    };
    let amp = a.hypot(b);
    let (amp_err, phase_err) = if with_sine && amp > 0.0 {
        // First-order propagation, ignoring the a-b covariance.
        let da = ((a * sa).powi(2) + (b * sb).powi(2)).sqrt() / amp;
        let dp = ((b * sa).powi(2) + (a * sb).powi(2)).sqrt() / (amp * amp);
        (da, dp)
    } else {
        (sa, 0.0)
    };
    let err = ParamErrors {
        amplitude: amp_err,
        t2: sg,
        frequency: 0.0,
        phase: phase_err,
        offset: so,
    };
    let (amp, phase) = if with_sine { (amp, (-b).atan2(a)) } else { (a, 0.0) };
    let mut res = finish(t, y, (amp, gamma, frequency, phase, off), err, out.converged, out.iterations);
    if !with_sine && a < 0.0 {
        // cos(pi) at zero frequency is a sign flip; keep the sign on A.
        res.amplitude = a;
        res.phase = 0.0;
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid(n: usize, span: f64) -> Vec<f64> {
        (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect()
    }

    fn model(a: f64, t2: f64, f: f64, phi: f64, c: f64, t: f64) -> f64 {
        a * (-t / t2).exp() * (2.0 * PI * f * t + phi).cos() + c
    }

    #[test]
    fn recovers_noise_free_parameters() {
        let t = grid(101, 100.0);
        let y: Vec<f64> = t.iter().map(|&x| model(0.5, 30.0, 0.05, 0.0, 0.5, x)).collect();
        let fit = fit_decaying_sinusoid(&t, &y, &[]).unwrap();
        assert!(fit.converged);
        assert!((fit.amplitude - 0.5).abs() < 5e-4);
        assert!((fit.t2 - 30.0).abs() < 0.03);
        assert!((fit.frequency - 0.05).abs() < 5e-5);
        assert!(fit.phase.abs() < 1e-3);
        assert!((fit.offset - 0.5).abs() < 5e-4);
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn recovers_phase_and_fast_oscillation() {
        let t = grid(201, 100.0);
        let y: Vec<f64> = t.iter().map(|&x| model(0.45, 43.0, 0.106, 1.1, 0.52, x)).collect();
        let fit = fit_decaying_sinusoid(&t, &y, &[]).unwrap();
        assert!((fit.t2 - 43.0).abs() < 0.043, "{}", fit.t2);
        assert!((fit.phase - 1.1).abs() < 1e-3);
    }

    #[test]
    fn constant_signal_has_no_oscillation() {
        let t = grid(20, 10.0);
        assert_eq!(fit_decaying_sinusoid(&t, &[0.5; 20], &[]), Err(Error::NoOscillation));
    }

    #[test]
    fn rejects_bad_input() {
        let t = grid(5, 10.0);
        assert!(matches!(fit_decaying_sinusoid(&t, &[0.0, 1.0, 0.0, 1.0, 0.0], &[]), Err(Error::FitInput(_))));
        let t = grid(10, 10.0);
        let y: Vec<f64> = t.iter().map(|x| x.sin()).collect();
        assert!(fit_decaying_sinusoid(&t, &y, &[0.0; 10]).is_err());
        assert!(fit_decaying_sinusoid(&t, &y[..9], &[]).is_err());
    }

    #[test]
    fn beating_shortens_apparent_decay() {
        let (t2, f, d) = (43.0, 0.1, 0.006);
        let t = grid(101, 100.0);
        let y: Vec<f64> = t
            .iter()
            .map(|&x| {
                let beat = (2.0 * PI * (f + d) * x).cos() + (2.0 * PI * (f - d) * x).cos();
                0.5 * (-x / t2).exp() * beat / 2.0 + 0.5
            })
            .collect();
        let fit = fit_decaying_sinusoid(&t, &y, &[]).unwrap();
        assert!(fit.t2 < 0.8 * t2, "{}", fit.t2);
    }

    #[test]
    fn noisy_fits_cover_truth() {
        let t = grid(101, 100.0);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut hits = 0;
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = t
                .iter()
                .map(|&x| model(0.5, 30.0, 0.05, 0.0, 0.5, x) + noise.sample(&mut rng))
                .collect();
            let fit = fit_decaying_sinusoid(&t, &y, &[0.01; 101]).unwrap();
            if (fit.t2 - 30.0).abs() <= 3.0 * fit.stderr.t2 {
                hits += 1;
            }
        }
        assert!(hits >= 190, "{hits}/200");
    }

    #[test]
    fn envelope_fit_with_fixed_frequency() {
        let t = grid(51, 100.0);
        let y: Vec<f64> = t.iter().map(|&x| model(0.5, 40.0, 0.05, 0.3, 0.5, x)).collect();
        let fit = fit_decay_envelope(&t, &y, &[], 0.05).unwrap();
        assert!(fit.converged);
        assert!((fit.t2 - 40.0).abs() < 1e-6);
        assert!((fit.phase - 0.3).abs() < 1e-8);
        assert_eq!(fit.stderr.frequency, 0.0);

        let y: Vec<f64> = t.iter().map(|&x| 0.5 + 0.5 * (-x / 40.0).exp()).collect();
        let fit = fit_decay_envelope(&t, &y, &[], 0.0).unwrap();
        assert!((fit.t2 - 40.0).abs() < 1e-6);
        assert!((fit.amplitude - 0.5).abs() < 1e-8);

        let y: Vec<f64> = t.iter().map(|&x| 0.5 - 0.5 * (-x / 40.0).exp()).collect();
        let fit = fit_decay_envelope(&t, &y, &[], 0.0).unwrap();
        assert!((fit.t2 - 40.0).abs() < 1e-6);
        assert!((fit.amplitude + 0.5).abs() < 1e-8);
    }

    #[test]
    fn hilbert_envelope_of_damped_cosine() {
        let t = grid(400, 200.0);
        let z: Vec<f64> = t.iter().map(|&x| (-x / 50.0).exp() * (2.0 * PI * 0.2 * x).cos()).collect();
        let g = envelope_rate(&t, &hilbert_envelope(&z));
        assert!((g - 0.02).abs() < 0.002, "{g}");
    }
}
