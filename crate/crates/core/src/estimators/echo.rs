//! Spin-echo area from a Gaussian fit to the echo trace.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use super::FitResult;
use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};

/// Integration window half-width in units of the fitted standard deviation.
pub const WINDOW_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoFit {
    pub area: f64,
    pub amplitude: f64,
    pub center: f64,
    pub sigma: f64,
    pub offset: f64,
    pub fit: FitResult,
}

/// Integral of `A exp(-(t-t0)²/2s²)` over `t0 ± 3s`.
pub fn gaussian_window_area(amplitude: f64, sigma: f64) -> f64 {
    amplitude * sigma.abs() * (2.0 * PI).sqrt() * libm::erf(WINDOW_SIGMAS / SQRT_2)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Fits `A exp(-(t-t0)²/(2s²)) + offset` and integrates the Gaussian part
/// over the ±3s window; the offset is excluded.
pub fn echo_area(times: &[f64], trace: &[f64]) -> Result<EchoFit> {
    if times.len() != trace.len() || times.len() < 5 {
        return Err(Error::InsufficientData("echo trace needs >= 5 (t, A) pairs".into()));
    }
    if times.iter().chain(trace).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite entries in echo trace".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("times must be strictly ascending".into()));
    }

    let base = median(trace);
    let (i_peak, peak) =
        trace.iter().map(|v| v - base).enumerate().fold(
            (0, 0.0f64),
            |acc, (i, v)| if v.abs() > acc.1.abs() { (i, v) } else { acc },
        );
    let scale = trace.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE)) || scale == 0.0 {
        return Err(Error::NoPeak);
    }

    // Width from the half-maximum crossings around the peak.
    let half = 0.5 * peak.abs();
    let above = |i: usize| (trace[i] - base) * peak.signum() >= half;
    let mut lo = i_peak;
    while lo > 0 && above(lo - 1) {
        lo -= 1;
    }
    let mut hi = i_peak;
    while hi + 1 < trace.len() && above(hi + 1) {
        hi += 1;
    }
    let dt_min = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let fwhm = (times[hi] - times[lo]).max(dt_min);
    let s0 = fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt());

    let sol = levenberg_marquardt(
        |p| {
            times
                .iter()
                .zip(trace)
                .map(|(&t, &y)| p[0] * (-(t - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp() + p[3] - y)
                .collect()
        },
        &[peak, times[i_peak], s0, base],
        &LmOptions {
            scale: Some(vec![peak.abs(), s0, s0, scale]),
            ..LmOptions::default()
        },
    )?;
    let p = &sol.params;
    let mut fit = FitResult::from_solution(&["amplitude", "center", "sigma", "offset"], &sol);
    fit.parameters[2].value = p[2].abs();
    fit.notes
        .push(format!("area integrated over center ± {WINDOW_SIGMAS} sigma"));
    if p[0] == 0.0 || !p[2].is_finite() || p[2] == 0.0 {
        return Err(Error::NoPeak);
    }
    Ok(EchoFit {
        area: gaussian_window_area(p[0], p[2]),
        amplitude: p[0],
        center: p[1],
        sigma: p[2].abs(),
        offset: p[3],
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(amp: f64, t0: f64, s: f64, offset: f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..201).map(|k| k as f64 * 0.1e-6).collect();
        let y = t
            .iter()
            .map(|&x| amp * (-(x - t0).powi(2) / (2.0 * s * s)).exp() + offset)
            .collect();
        (t, y)
    }

    /// Composite Simpson over ±3s as an independent check of the closed form.
    fn simpson_area(amp: f64, s: f64) -> f64 {
        let n = 20_000;
        let (a, b) = (-3.0 * s, 3.0 * s);
        let h = (b - a) / n as f64;
        let g = |x: f64| amp * (-x * x / (2.0 * s * s)).exp();
        let mut sum = g(a) + g(b);
        for k in 1..n {
            sum += g(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        sum * h / 3.0
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let q = simpson_area(1.0, 1e-6);
        assert!((gaussian_window_area(1.0, 1e-6) - q).abs() / q < 1e-10);
        assert!((q / 1e-6 - 2.499_860_889).abs() < 1e-8);
    }

    #[test]
    fn pure_gaussian() {
        let (t, y) = trace(1.0, 10e-6, 1e-6, 0.0);
        let fit = echo_area(&t, &y).unwrap();
        assert!((fit.area / 1e-6 - 2.499_860_889).abs() < 1e-6);
    }

    #[test]
    fn offset_does_not_change_area() {
        let (t, y) = trace(1.0, 10e-6, 1e-6, 0.0);
        let (_, y_off) = trace(1.0, 10e-6, 1e-6, 0.3);
        let a = echo_area(&t, &y).unwrap().area;
        let b = echo_area(&t, &y_off).unwrap().area;
        assert!((a - b).abs() / a < 1e-6);
    }

    #[test]
    fn zero_trace_has_no_peak() {
        let t: Vec<f64> = (0..50).map(f64::from).collect();
        assert!(matches!(echo_area(&t, &vec![0.0; 50]), Err(Error::NoPeak)));
        assert!(matches!(echo_area(&t, &vec![0.7; 50]), Err(Error::NoPeak)));
    }
}
