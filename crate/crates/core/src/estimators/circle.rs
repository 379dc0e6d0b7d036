//! Reflection-resonator circle fit with environmental background.
//!
//! Measured trace model:
//!
//! ```text
//! S(f) = a e^{i(α - 2π f τ)} · (1 - (2 Q_l / Q_ext) / (1 + 2i Q_l (f/f_r - 1)))
//! Q_ext = |Q_ext| e^{-iφ}
//! ```
//!
//! The fit is staged: cable delay from the wings, delay refinement by circle
//! residual, algebraic (Taubin) circle, phase-vs-frequency fit for `f_r` and
//! `Q_l`, off-resonant point for `a`, `α`, `|Q_ext|`, `φ`, then a joint
//! Levenberg-Marquardt refinement of all seven parameters on the complex data.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ComplexSpectrum, FitResult};
use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundModel {
    pub a_mw: f64,
    pub alpha: f64,
    /// Electrical delay, s.
    pub tau: f64,
    /// Impedance-mismatch phase, rad.
    pub phi: f64,
    pub q_ext_mag: f64,
    pub q_loaded: f64,
    pub f_r: f64,
}

impl BackgroundModel {
    /// Environmental factor `a e^{i(α - 2π f τ)}`.
    pub fn environment(&self, f: f64) -> Complex64 {
        Complex64::from_polar(self.a_mw, self.alpha - TAU * f * self.tau)
    }

    /// Bare resonator response with unit off-resonant reflection.
    pub fn resonator(&self, f: f64) -> Complex64 {
        let coupling = Complex64::from_polar(2.0 * self.q_loaded / self.q_ext_mag, self.phi);
        1.0 - coupling / Complex64::new(1.0, 2.0 * self.q_loaded * (f / self.f_r - 1.0))
    }

    pub fn eval(&self, f: f64) -> Complex64 {
        self.environment(f) * self.resonator(f)
    }

    /// `1/Q_int = 1/Q_l - Re(1/Q_ext)`.
    pub fn q_internal(&self) -> f64 {
        1.0 / (1.0 / self.q_loaded - self.phi.cos() / self.q_ext_mag)
    }
}

/// Resonator linewidths (HWHM, Hz) derived from quality factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorRates {
    pub f_r: f64,
    pub kappa: f64,
    pub kappa_ext: f64,
}

impl ResonatorRates {
    pub fn kappa_int(&self) -> f64 {
        self.kappa - self.kappa_ext
    }
}

/// `κ = f_r / (2 Q_l)`, `κ_ext = f_r Re(1/Q_ext) / 2`.
pub fn resonator_rates(bg: &BackgroundModel) -> Result<ResonatorRates> {
    if !(bg.q_loaded > 0.0 && bg.q_ext_mag > 0.0) {
        return Err(Error::Domain("quality factors must be positive".into()));
    }
    Ok(ResonatorRates {
        f_r: bg.f_r,
        kappa: bg.f_r / (2.0 * bg.q_loaded),
        kappa_ext: bg.f_r * bg.phi.cos() / (2.0 * bg.q_ext_mag),
    })
}

/// Removes the environmental factor and normalizes the magnitude to a
/// maximum of one.
pub fn correct_background(spec: &ComplexSpectrum, bg: &BackgroundModel) -> Result<ComplexSpectrum> {
    if !(bg.a_mw > 0.0) {
        return Err(Error::Domain("background amplitude must be positive".into()));
    }
    let corrected: Vec<Complex64> = spec
        .freqs()
        .iter()
        .zip(spec.values())
        .map(|(&f, &v)| v / bg.environment(f))
        .collect();
    let max = corrected.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let values = if max > 0.0 {
        corrected.into_iter().map(|v| v / max).collect()
    } else {
        corrected
    };
    ComplexSpectrum::new(spec.freqs().to_vec(), values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
}

/// Algebraic circle fit (Taubin), Newton iteration on the characteristic
/// polynomial.
pub fn taubin_circle(points: &[Complex64]) -> Result<Circle> {
    if points.len() < 3 {
        return Err(Error::IllConditioned("need at least three points".into()));
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Complex64>() / n;
    let spread = points.iter().map(|p| (p - mean).norm()).fold(0.0, f64::max);
    if !(spread > 0.0) {
        return Err(Error::IllConditioned("all points coincide".into()));
    }

    let (mut mxx, mut myy, mut mxy, mut mxz, mut myz, mut mzz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let d = (p - mean) / spread;
        let (x, y) = (d.re, d.im);
        let z = x * x + y * y;
        mxx += x * x;
        myy += y * y;
        mxy += x * y;
        mxz += x * z;
        myz += y * z;
        mzz += z * z;
    }
    mxx /= n;
    myy /= n;
    mxy /= n;
    mxz /= n;
    myz /= n;
    mzz /= n;

    let mz = mxx + myy;
    let cov_xy = mxx * myy - mxy * mxy;
    let var_z = mzz - mz * mz;
    let a3 = 4.0 * mz;
    let a2 = -3.0 * mz * mz - mzz;
    let a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
    let a0 = mxz * (mxz * myy - myz * mxy) + myz * (myz * mxx - mxz * mxy) - var_z * cov_xy;

    let (mut x, mut y) = (0.0f64, a0);
    for _ in 0..100 {
        let dy = a1 + x * (2.0 * a2 + 3.0 * a3 * x);
        let x_new = x - y / dy;
        if x_new == x || !x_new.is_finite() {
            break;
        }
        let y_new = a0 + x_new * (a1 + x_new * (a2 + x_new * a3));
        if y_new.abs() >= y.abs() {
            break;
        }
        x = x_new;
        y = y_new;
    }

    let det = x * x - x * mz + cov_xy;
    let cx = (mxz * (myy - x) - myz * mxy) / det / 2.0;
    let cy = (myz * (mxx - x) - mxz * mxy) / det / 2.0;
    let radius = (cx * cx + cy * cy + mz).sqrt();
    if !(det.abs() > 1e-14) || !radius.is_finite() || radius > 1e6 {
        return Err(Error::IllConditioned("points are (nearly) collinear".into()));
    }
    Ok(Circle {
        center: mean + Complex64::new(cx, cy) * spread,
        radius: radius * spread,
    })
}

fn unwrap(phases: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut offset = 0.0;
    for p in phases {
        if let Some(&last) = out.last() {
            let mut d = p + offset - last;
            while d > PI {
                offset -= TAU;
                d -= TAU;
            }
            while d < -PI {
                offset += TAU;
                d += TAU;
            }
        }
        out.push(p + offset);
    }
    out
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
    sxy / sxx
}

fn remove_delay(freqs: &[f64], values: &[Complex64], tau: f64, f_ref: f64) -> Vec<Complex64> {
    freqs
        .iter()
        .zip(values)
        .map(|(&f, &v)| v * Complex64::from_polar(1.0, TAU * (f - f_ref) * tau))
        .collect()
}

/// Normalized algebraic misfit of the delay-corrected locus to a circle.
fn circle_misfit(points: &[Complex64]) -> f64 {
    match taubin_circle(points) {
        Ok(c) => {
            points
                .iter()
                .map(|p| ((p - c.center).norm() - c.radius).powi(2))
                .sum::<f64>()
                / (c.radius * c.radius)
        }
        Err(_) => f64::INFINITY,
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Staged circle fit. Returns the background model and the joint-refinement
/// fit result with parameters `a_mw, alpha, tau, f_r, q_loaded, q_ext_mag, phi`.
pub fn circle_fit(spec: &ComplexSpectrum) -> Result<(BackgroundModel, FitResult)> {
    spec.require_fit_length()?;
    let freqs = spec.freqs();
    let values = spec.values();
    let n = freqs.len();
    let span = freqs[n - 1] - freqs[0];
    let f_ref = 0.5 * (freqs[0] + freqs[n - 1]);

    // A pure delay line has constant magnitude and would fit any circle
    // through the origin.
    let mags = spec.magnitudes();
    let (m_lo, m_hi) = mags
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
    if !(m_hi - m_lo > 1e-6 * m_hi) {
        return Err(Error::NoResonance);
    }

    // (1) delay from the phase slope in the wings.
    let phase = unwrap(values.iter().map(|v| v.arg()));
    let wing = (n / 10).max(3);
    let slope_lo = linear_slope(&freqs[..wing], &phase[..wing]);
    let slope_hi = linear_slope(&freqs[n - wing..], &phase[n - wing..]);
    let tau0 = -0.5 * (slope_lo + slope_hi) / TAU;

    // (2) refine delay by circle residual.
    // The misfit is multimodal in τ: scan the bracket, then polish the best cell.
    let half_width = 0.25 * tau0.abs() + 0.5 / (TAU * span);
    let misfit = |t: f64| circle_misfit(&remove_delay(freqs, values, t, f_ref));
    let n_scan = 96;
    let step = 2.0 * half_width / n_scan as f64;
    let best = (0..=n_scan)
        .map(|k| tau0 - half_width + step * k as f64)
        .map(|t| (t, misfit(t)))
        .fold((tau0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let tau = golden_min(misfit, best.0 - step, best.0 + step, 80);
    let z = remove_delay(freqs, values, tau, f_ref);

    let mean = z.iter().sum::<Complex64>() / n as f64;
    let scale = z.iter().map(|p| p.norm()).sum::<f64>() / n as f64;
    let spread = z.iter().map(|p| (p - mean).norm()).fold(0.0, f64::max);
    if !(spread > 1e-6 * scale) {
        return Err(Error::NoResonance);
    }

    // (3) algebraic circle.
    let circle = taubin_circle(&z)?;

    // (4) phase around the center: θ(f) = θ0 + 2 atan(2 Q_l (1 - f/f_r)).
    let theta = unwrap(z.iter().map(|p| (p - circle.center).arg()));
    let speed: Vec<f64> = (1..n - 1)
        .map(|i| (theta[i + 1] - theta[i - 1]).abs() / (freqs[i + 1] - freqs[i - 1]))
        .collect();
    let (peak, max_speed) = speed
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let i_res = peak + 1;
    let f_r0 = freqs[i_res];
    let q_l0 = (f_r0 * max_speed / 4.0).max(1.0);
    if i_res <= 1 || i_res >= n - 2 {
        return Err(Error::NoResonance);
    }
    let width = f_r0 / q_l0;
    let phase_fit = levenberg_marquardt(
        |p| {
            let f_r = f_r0 + p[2];
            freqs
                .iter()
                .zip(&theta)
                .map(|(&f, &th)| p[0] + 2.0 * (2.0 * p[1] * (1.0 - f / f_r)).atan() - th)
                .collect()
        },
        &[theta[i_res], q_l0, 0.0],
        &LmOptions {
            scale: Some(vec![1.0, q_l0, width]),
            ..LmOptions::default()
        },
    )?;
    let theta0 = phase_fit.params[0];
    let q_l1 = phase_fit.params[1].abs();
    let f_r1 = f_r0 + phase_fit.params[2];

    // (5) off-resonant point fixes the environment; circle geometry gives Q_ext.
    let off = circle.center + Complex64::from_polar(circle.radius, theta0 + PI);
    if !(off.norm() > 0.0) {
        return Err(Error::IllConditioned("off-resonant point at origin".into()));
    }
    let a1 = off.norm();
    let alpha_ref1 = off.arg();
    let c_n = circle.center / off;
    let r_n = circle.radius / a1;
    let q_ext1 = q_l1 / r_n;
    let phi1 = (1.0 - c_n).arg();

    // (6) joint refinement on the complex trace.
    let residual = |p: &[f64]| -> Vec<f64> {
        let bg = BackgroundModel {
            a_mw: p[0],
            alpha: p[1],
            tau: p[2],
            f_r: f_r1 + p[3],
            q_loaded: p[4],
            q_ext_mag: p[5],
            phi: p[6],
        };
        let mut out = Vec::with_capacity(2 * n);
        for (&f, &v) in freqs.iter().zip(values) {
            // Delay referenced to the band center keeps α and τ decorrelated.
            let env = Complex64::from_polar(bg.a_mw, bg.alpha - TAU * (f - f_ref) * bg.tau);
            let d = env * bg.resonator(f) - v;
            out.push(d.re);
            out.push(d.im);
        }
        out
    };
    let x0 = [a1, alpha_ref1, tau, 0.0, q_l1, q_ext1, phi1];
    let sol = levenberg_marquardt(
        residual,
        &x0,
        &LmOptions {
            scale: Some(vec![a1, 1.0, 1.0 / (TAU * span), f_r1 / q_l1, q_l1, q_ext1, 1.0]),
            ..LmOptions::default()
        },
    )?;
    let p = &sol.params;

    // α at f = 0: α_ref + 2π f_ref τ, with the covariance carried over.
    let k = TAU * f_ref;
    let cov = &sol.covariance;
    let var_alpha = cov[(1, 1)] + k * k * cov[(2, 2)] + 2.0 * k * cov[(1, 2)];

    let bg = BackgroundModel {
        a_mw: p[0],
        alpha: wrap_angle(p[1] + k * p[2]),
        tau: p[2],
        f_r: f_r1 + p[3],
        q_loaded: p[4],
        q_ext_mag: p[5],
        phi: wrap_angle(p[6]),
    };

    let mut fit = FitResult::from_solution(&["a_mw", "alpha", "tau", "f_r", "q_loaded", "q_ext_mag", "phi"], &sol);
    fit.parameters[1].value = bg.alpha;
    fit.parameters[1].uncertainty = var_alpha.is_finite().then(|| var_alpha.max(0.0).sqrt());
    fit.parameters[3].value = bg.f_r;
    fit.parameters[6].value = bg.phi;
    fit.notes.push(format!(
        "staged circle fit: tau0 = {tau0:.6e} s, circle radius = {:.6e}, reference frequency = {f_ref} Hz",
        circle.radius
    ));
    if !(bg.a_mw > 0.0 && bg.q_loaded > 0.0 && bg.q_ext_mag > 0.0) {
        fit.fail("non-positive amplitude or quality factor");
    }
    if bg.q_loaded > bg.q_ext_mag / bg.phi.cos().max(1e-12) * (1.0 + 1e-3) {
        fit.notes
            .push("Q_l exceeds Q_ext: implies negative internal loss".into());
    }
    Ok((bg, fit))
}
