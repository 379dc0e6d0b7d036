//! Seeded synthetic data for round-trip tests and demonstrations.
//!
//! All generators use ChaCha8 seeded from a `u64`, so a fixed seed gives
//! bit-identical output on every platform.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::estimators::{BackgroundModel, ComplexSpectrum, DecaySeries, SpinSpectrumMap};
use crate::hybrid::{CovarianceState, HybridParams};
use crate::tomography::PlanckCalibration;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn complex_noise(rng: &mut ChaCha8Rng, sigma: f64) -> Complex64 {
    // `sigma` is the rms of the complex deviation.
    let s = sigma / std::f64::consts::SQRT_2;
    Complex64::new(s * normal(rng), s * normal(rng))
}

/// Noise rms for a given SNR in dB relative to amplitude `a`.
pub fn noise_for_snr(amplitude: f64, snr_db: f64) -> f64 {
    amplitude * 10f64.powf(-snr_db / 20.0)
}

/// Full background model plus resonator, with complex Gaussian noise of rms
/// `noise_rms`.
pub fn resonator_spectrum(bg: &BackgroundModel, freqs: Vec<f64>, noise_rms: f64, seed: u64) -> Result<ComplexSpectrum> {
    let mut r = rng(seed);
    let values = freqs
        .iter()
        .map(|&f| bg.eval(f) + complex_noise(&mut r, noise_rms))
        .collect();
    ComplexSpectrum::new(freqs, values)
}

/// Coupled reflection map with independent Gaussian noise of standard
/// deviation `noise` on each real and imaginary part.
pub fn spin_map(
    params: &HybridParams,
    probe_freqs: Vec<f64>,
    detunings: Vec<f64>,
    noise: f64,
    seed: u64,
) -> Result<SpinSpectrumMap> {
    let clean = SpinSpectrumMap::synthesize(params, probe_freqs, detunings)?;
    if noise == 0.0 {
        return Ok(clean);
    }
    let mut r = rng(seed);
    let values = clean
        .values
        .iter()
        .map(|v| v + Complex64::new(noise * normal(&mut r), noise * normal(&mut r)))
        .collect();
    SpinSpectrumMap::new(clean.probe_freqs, clean.detunings, values)
}

/// Series `model(t) + N(0, noise²)`; errors set to `noise` when positive.
pub fn decay_series(delays: Vec<f64>, model: impl Fn(f64) -> f64, noise: f64, seed: u64) -> Result<DecaySeries> {
    let mut r = rng(seed);
    let areas = delays.iter().map(|&t| model(t) + noise * normal(&mut r)).collect();
    let errors = (noise > 0.0).then(|| vec![noise; delays.len()]);
    DecaySeries::new(delays, areas, errors)
}

/// Gaussian echo `A exp(-(t-t0)²/2s²) + offset` plus white noise.
pub fn echo_trace(
    times: &[f64],
    amplitude: f64,
    center: f64,
    sigma: f64,
    offset: f64,
    noise: f64,
    seed: u64,
) -> Vec<f64> {
    let mut r = rng(seed);
    times
        .iter()
        .map(|&t| amplitude * (-(t - center).powi(2) / (2.0 * sigma * sigma)).exp() + offset + noise * normal(&mut r))
        .collect()
}

/// Voltage-level I/Q samples of `state` (HEMT-referred) through the
/// detection chain described by `calib`.
pub fn iq_samples(state: &CovarianceState, calib: &PlanckCalibration, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    calib.validate()?;
    let g = calib.hemt_conversion();
    let noise = calib.hemt_noise();
    let a = g * (2.0 * state.var_q + noise);
    let d = g * (2.0 * state.var_p + noise);
    let b = g * 2.0 * state.cov_qp;
    // Cholesky of [[a, b], [b, d]].
    if !(a > 0.0) || !(a * d - b * b > 0.0) {
        return Err(invalid("state", "detected covariance is not positive definite"));
    }
    let l11 = a.sqrt();
    let l21 = b / l11;
    let l22 = (d - l21 * l21).sqrt();
    let (mi, mq) = (state.mean_q * g.sqrt(), state.mean_p * g.sqrt());
    let mut r = rng(seed);
    Ok((0..n)
        .map(|_| {
            let (z1, z2) = (normal(&mut r), normal(&mut r));
            (mi + l11 * z1, mq + l21 * z1 + l22 * z2)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_output_is_reproducible() {
        let p = PlanckCalibration::new(1.0, 0.0, 5.645e9)
            .unwrap()
            .with_path_loss_db(0.0);
        let s = CovarianceState::squeezed(0.074, 1.0, 0.3);
        assert_eq!(iq_samples(&s, &p, 100, 7).unwrap(), iq_samples(&s, &p, 100, 7).unwrap());
        assert_ne!(iq_samples(&s, &p, 100, 7).unwrap(), iq_samples(&s, &p, 100, 8).unwrap());
    }

    #[test]
    fn iq_covariance_converges() {
        let p = PlanckCalibration::new(1.0, 0.0, 5.645e9)
            .unwrap()
            .with_path_loss_db(0.0);
        let s = CovarianceState::squeezed(0.074, 1.0, 0.5);
        let x = iq_samples(&s, &p, 200_000, 3).unwrap();
        let m = crate::tomography::moments(&x).unwrap();
        assert!((m.var_i() / (2.0 * s.var_q) - 1.0).abs() < 0.02);
        assert!((m.cov_iq() / (2.0 * s.cov_qp) - 1.0).abs() < 0.02);
    }
}
