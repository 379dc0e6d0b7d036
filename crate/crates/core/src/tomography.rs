//! Gaussian-state reconstruction from I/Q sample streams and Planck
//! spectroscopy calibration of the detection chain.
//!
//! Detection model: each recorded quadrature has variance
//! `V² = G (2σ + n_sys)`, where `σ` is the quadrature variance (vacuum 1/4)
//! at the calibration point and `n_sys` the added noise in photon units.

use std::io::{BufRead, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, PLANCK, VACUUM_VARIANCE};
use crate::error::{invalid, Error, Result};
use crate::estimators::{FitParameter, FitResult};
use crate::hybrid::{anti_squeezing_db, squeezing_db, CovarianceState};
use crate::lsq::{levenberg_marquardt, LmOptions};

/// Highest total order `n + m` of the tabulated moments.
pub const MAX_ORDER: usize = 4;
/// Minimum sample count accepted by [`reconstruct_gaussian`].
pub const MIN_RECONSTRUCTION_SAMPLES: u64 = 10_000;
pub const DEFAULT_PATH_LOSS_DB: f64 = 2.8;

const CHUNK: usize = 1 << 16;

fn binomial(n: usize, k: usize) -> f64 {
    const ROWS: [[f64; 5]; 5] = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0, 0.0],
        [1.0, 3.0, 3.0, 1.0, 0.0],
        [1.0, 4.0, 6.0, 4.0, 1.0],
    ];
    ROWS[n][k]
}

/// Streaming accumulator of shifted power sums `Σ (I-a)ⁿ (Q-b)ᵐ`.
/// The shift should be a representative sample (the first one, say);
/// raw sums around a distant shift lose precision at fourth order.
///
/// Accumulators with different shifts combine exactly through the binomial
/// re-expansion in [`MomentAccumulator::merge`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    shift: (f64, f64),
    sums: [[f64; 5]; 5],
}

impl MomentAccumulator {
    pub fn new(shift: (f64, f64)) -> Self {
        Self {
            count: 0,
            shift,
            sums: [[0.0; 5]; 5],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, i: f64, q: f64) {
        let x = i - self.shift.0;
        let y = q - self.shift.1;
        let xp = [1.0, x, x * x, x * x * x, x * x * x * x];
        let yp = [1.0, y, y * y, y * y * y, y * y * y * y];
        for n in 0..=MAX_ORDER {
            for m in 0..=MAX_ORDER - n {
                self.sums[n][m] += xp[n] * yp[m];
            }
        }
        self.count += 1;
    }

    fn reshifted(&self, shift: (f64, f64)) -> [[f64; 5]; 5] {
        if shift == self.shift {
            return self.sums;
        }
        let dx = self.shift.0 - shift.0;
        let dy = self.shift.1 - shift.1;
        let mut out = [[0.0; 5]; 5];
        for n in 0..=MAX_ORDER {
            for m in 0..=MAX_ORDER - n {
                let mut acc = 0.0;
                for i in 0..=n {
                    for j in 0..=m {
                        acc += binomial(n, i)
                            * binomial(m, j)
                            * dx.powi((n - i) as i32)
                            * dy.powi((m - j) as i32)
                            * self.sums[i][j];
                    }
                }
                out[n][m] = acc;
            }
        }
        out
    }

    pub fn merge(&mut self, other: &Self) {
        let s = other.reshifted(self.shift);
        for n in 0..=MAX_ORDER {
            for m in 0..=MAX_ORDER - n {
                self.sums[n][m] += s[n][m];
            }
        }
        self.count += other.count;
    }

    pub fn finish(&self) -> Result<MomentTable> {
        if self.count < 2 {
            return Err(Error::InsufficientData(format!(
                "moments need at least 2 samples, got {}",
                self.count
            )));
        }
        let n_inv = 1.0 / self.count as f64;
        let u = self.sums[1][0] * n_inv;
        let v = self.sums[0][1] * n_inv;
        let mut central = [[0.0; 5]; 5];
        for n in 0..=MAX_ORDER {
            for m in 0..=MAX_ORDER - n {
                let mut acc = 0.0;
                for i in 0..=n {
                    for j in 0..=m {
                        acc += binomial(n, i)
                            * binomial(m, j)
                            * (-u).powi((n - i) as i32)
                            * (-v).powi((m - j) as i32)
                            * self.sums[i][j];
                    }
                }
                central[n][m] = acc * n_inv;
            }
        }
        central[0][0] = 1.0;
        central[1][0] = 0.0;
        central[0][1] = 0.0;
        Ok(MomentTable {
            count: self.count,
            mean_i: self.shift.0 + u,
            mean_q: self.shift.1 + v,
            central,
        })
    }
}

/// Sample central moments `⟨(I-Ī)ⁿ (Q-Q̄)ᵐ⟩`, `n + m ≤ 4`, normalized by
/// the sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub count: u64,
    pub mean_i: f64,
    pub mean_q: f64,
    /// `central[n][m]`; entries with `n + m > 4` are zero.
    pub central: [[f64; 5]; 5],
}

impl MomentTable {
    pub fn central(&self, n: usize, m: usize) -> Option<f64> {
        (n + m <= MAX_ORDER).then(|| self.central[n][m])
    }

    pub fn var_i(&self) -> f64 {
        self.central[2][0]
    }

    pub fn var_q(&self) -> f64 {
        self.central[0][2]
    }

    pub fn cov_iq(&self) -> f64 {
        self.central[1][1]
    }

    pub fn is_psd(&self) -> bool {
        self.var_i() >= 0.0 && self.var_q() >= 0.0 && self.var_i() * self.var_q() >= self.cov_iq().powi(2)
    }

    /// `μ₄/μ₂² - 3` for I and Q; NaN for a zero-variance quadrature.
    pub fn excess_kurtosis(&self) -> (f64, f64) {
        let k = |m4: f64, m2: f64| if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { f64::NAN };
        (k(self.central[4][0], self.var_i()), k(self.central[0][4], self.var_q()))
    }

    /// Joint fourth cumulants `κ₄₀, κ₃₁, κ₂₂, κ₁₃, κ₀₄`; all vanish for a
    /// Gaussian.
    pub fn fourth_cumulants(&self) -> [f64; 5] {
        let c = &self.central;
        let (a, b, s) = (c[2][0], c[0][2], c[1][1]);
        [
            c[4][0] - 3.0 * a * a,
            c[3][1] - 3.0 * a * s,
            c[2][2] - a * b - 2.0 * s * s,
            c[1][3] - 3.0 * b * s,
            c[0][4] - 3.0 * b * b,
        ]
    }
}

/// Central moments of the sample stream. Large inputs are aggregated in
/// fixed-size chunks in parallel and combined in input order, so the result
/// does not depend on the thread count.
pub fn moments(samples: &[(f64, f64)]) -> Result<MomentTable> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    if samples.iter().any(|(i, q)| !i.is_finite() || !q.is_finite()) {
        return Err(Error::Domain("non-finite sample".into()));
    }
    let shift = samples[0];
    let partials: Vec<MomentAccumulator> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = MomentAccumulator::new(shift);
            for &(i, q) in chunk {
                acc.push(i, q);
            }
            acc
        })
        .collect();
    let mut total = MomentAccumulator::new(shift);
    for p in &partials {
        total.merge(p);
    }
    total.finish()
}

fn default_path_loss() -> f64 {
    DEFAULT_PATH_LOSS_DB
}

/// Photon-number calibration of the detection chain.
///
/// `conversion_factor` and `system_noise` refer to the heatable attenuator;
/// the reconstruction point is the HEMT input, reached through
/// `path_loss_db` of cold loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanckCalibration {
    /// Volts² per photon unit.
    pub conversion_factor: f64,
    /// Added noise, photons.
    pub system_noise: f64,
    pub reference_freq: f64,
    #[serde(default = "default_path_loss")]
    pub path_loss_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<FitResult>,
}

impl PlanckCalibration {
    pub fn new(conversion_factor: f64, system_noise: f64, reference_freq: f64) -> Result<Self> {
        let c = Self {
            conversion_factor,
            system_noise,
            reference_freq,
            path_loss_db: DEFAULT_PATH_LOSS_DB,
            diagnostics: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_path_loss_db(mut self, db: f64) -> Self {
        self.path_loss_db = db;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.conversion_factor > 0.0 && self.conversion_factor.is_finite()) {
            return Err(invalid("conversion_factor", "must be finite and > 0"));
        }
        if !(self.system_noise >= 0.0 && self.system_noise.is_finite()) {
            return Err(invalid("system_noise", "must be finite and >= 0"));
        }
        if !(self.reference_freq > 0.0 && self.reference_freq.is_finite()) {
            return Err(invalid("reference_freq", "must be finite and > 0"));
        }
        if !(self.path_loss_db >= 0.0 && self.path_loss_db.is_finite()) {
            return Err(invalid("path_loss_db", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Power transmission of the attenuator-to-HEMT path.
    pub fn path_transmission(&self) -> f64 {
        10f64.powf(-self.path_loss_db / 10.0)
    }

    pub fn hemt_conversion(&self) -> f64 {
        self.conversion_factor / self.path_transmission()
    }

    /// Added noise referred to the HEMT input. The cold path loss admits
    /// vacuum, so this can be negative for small `system_noise`.
    pub fn hemt_noise(&self) -> f64 {
        let eta = self.path_transmission();
        eta * self.system_noise - (1.0 - eta) * 2.0 * VACUUM_VARIANCE
    }

    /// Model variance at attenuator temperature `temp`.
    pub fn measured_variance(&self, temp: f64) -> f64 {
        self.conversion_factor * (half_coth(self.reference_freq, temp) + self.system_noise)
    }
}

/// `½ coth(h f / 2 k_B T)`, the symmetrized photon number `n̄ + ½`.
pub fn half_coth(freq: f64, temp: f64) -> f64 {
    if temp <= 0.0 {
        return 0.5;
    }
    0.5 / (PLANCK * freq / (2.0 * BOLTZMANN * temp)).tanh()
}

fn failed_calibration(g: f64, n: f64, freq: f64, note: &str) -> PlanckCalibration {
    PlanckCalibration {
        conversion_factor: g,
        system_noise: n,
        reference_freq: freq,
        path_loss_db: DEFAULT_PATH_LOSS_DB,
        diagnostics: Some(FitResult {
            parameters: vec![
                FitParameter {
                    name: "conversion_factor".into(),
                    value: g,
                    uncertainty: None,
                },
                FitParameter {
                    name: "system_noise".into(),
                    value: n,
                    uncertainty: None,
                },
            ],
            residual_norm: f64::NAN,
            converged: false,
            iterations: 0,
            at_bounds: Vec::new(),
            notes: vec![note.to_string()],
        }),
    }
}

/// Fits `V²(T) = G (½ coth(hf/2k_BT) + n_sys)` to attenuator-temperature
/// sweeps. Non-convergence or negative estimates are reported through
/// `diagnostics.converged = false`.
pub fn planck_fit(temps: &[f64], measured_vars: &[f64], freq: f64) -> Result<PlanckCalibration> {
    if temps.len() != measured_vars.len() {
        return Err(Error::InsufficientData(
            "temperature and variance columns differ in length".into(),
        ));
    }
    if temps.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "need at least 5 temperatures, got {}",
            temps.len()
        )));
    }
    if !(freq > 0.0 && freq.is_finite()) {
        return Err(invalid("freq", "must be finite and > 0"));
    }
    if temps.iter().any(|t| !(*t > 0.0 && t.is_finite())) || measured_vars.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("temperatures must be > 0 and variances finite".into()));
    }

    let x: Vec<f64> = temps.iter().map(|&t| half_coth(freq, t)).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = measured_vars.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(measured_vars).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Ok(failed_calibration(
            f64::NAN,
            f64::NAN,
            freq,
            "temperatures do not span the crossover",
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let y_scale = measured_vars.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(slope > 1e-12 * y_scale / mx.max(f64::MIN_POSITIVE)) {
        return Ok(failed_calibration(
            slope,
            f64::NAN,
            freq,
            "variance does not rise with temperature: conversion factor unconstrained",
        ));
    }
    let n0 = intercept / slope;

    let sol = levenberg_marquardt(
        |p| {
            x.iter()
                .zip(measured_vars)
                .map(|(&xi, &y)| (p[0] * (xi + p[1]) - y) / y_scale)
                .collect()
        },
        &[slope, n0],
        &LmOptions {
            scale: Some(vec![slope, n0.abs().max(1.0)]),
            ..LmOptions::default()
        },
    )?;
    let mut fit = FitResult::from_solution(&["conversion_factor", "system_noise"], &sol);
    // Residuals were normalized; report them in volts².
    fit.residual_norm *= y_scale;
    fit.notes.push("V^2(T) = G (coth(hf/2kT)/2 + n_sys)".into());
    let (g, n_sys) = (sol.params[0], sol.params[1]);
    if g <= 0.0 {
        fit.fail("negative conversion factor");
    }
    if n_sys < 0.0 {
        fit.fail("negative system noise");
    }
    Ok(PlanckCalibration {
        conversion_factor: g,
        system_noise: n_sys,
        reference_freq: freq,
        path_loss_db: DEFAULT_PATH_LOSS_DB,
        diagnostics: Some(fit),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    /// Covariance at the HEMT input, vacuum = 1/4 per quadrature.
    pub state: CovarianceState,
    pub sigma_sq: f64,
    pub sigma_as: f64,
    /// Squeezed-axis angle from I, radians in `(-π/2, π/2]`.
    pub angle: f64,
    /// `None` when the squeezed variance is not positive.
    pub squeezing_db: Option<f64>,
    pub anti_squeezing_db: Option<f64>,
    pub purity: Option<f64>,
    pub excess_kurtosis: (f64, f64),
    pub count: u64,
    pub degenerate: bool,
    pub notes: Vec<String>,
}

/// Converts a voltage covariance into a quadrature state at the HEMT input
/// and extracts the squeezing figures.
pub fn reconstruct_covariance(
    var_i: f64,
    var_q: f64,
    cov_iq: f64,
    means: (f64, f64),
    calib: &PlanckCalibration,
) -> Result<TomographyReport> {
    calib.validate()?;
    let g = calib.hemt_conversion();
    let n = calib.hemt_noise();
    let state = CovarianceState {
        mean_q: means.0 / g.sqrt(),
        mean_p: means.1 / g.sqrt(),
        var_q: 0.5 * (var_i / g - n),
        var_p: 0.5 * (var_q / g - n),
        cov_qp: 0.5 * cov_iq / g,
    };
    let (sigma_sq, sigma_as) = state.principal_variances();
    let mut notes = Vec::new();
    let mut degenerate = false;
    let mut angle = state.squeezing_angle();
    if (sigma_as - sigma_sq) <= 1e-12 * sigma_as.abs().max(VACUUM_VARIANCE) {
        degenerate = true;
        angle = 0.0;
        notes.push("isotropic covariance: squeezing angle undefined".into());
    }
    if sigma_sq <= 0.0 {
        degenerate = true;
        notes.push("covariance not positive definite after noise subtraction".into());
    }
    let purity = match purity(&state) {
        Ok(p) => Some(p),
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    };
    Ok(TomographyReport {
        state,
        sigma_sq,
        sigma_as,
        angle,
        squeezing_db: squeezing_db(sigma_sq).ok(),
        anti_squeezing_db: anti_squeezing_db(sigma_as).ok(),
        purity,
        excess_kurtosis: (f64::NAN, f64::NAN),
        count: 0,
        degenerate,
        notes,
    })
}

/// Gaussian reconstruction from measured moments. Only second-order moments
/// enter; fourth-order ones are reported as a Gaussianity diagnostic.
pub fn reconstruct_gaussian(m: &MomentTable, calib: &PlanckCalibration) -> Result<TomographyReport> {
    if m.count < MIN_RECONSTRUCTION_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "reconstruction needs at least {MIN_RECONSTRUCTION_SAMPLES} samples, got {}",
            m.count
        )));
    }
    let mut report = reconstruct_covariance(m.var_i(), m.var_q(), m.cov_iq(), (m.mean_i, m.mean_q), calib)?;
    report.count = m.count;
    report.excess_kurtosis = m.excess_kurtosis();
    Ok(report)
}

/// `μ = 1/(4 sqrt(det Σ))`, equal to one for minimum-uncertainty states.
pub fn purity(state: &CovarianceState) -> Result<f64> {
    let det = state.determinant();
    let bound = VACUUM_VARIANCE * VACUUM_VARIANCE;
    let (lo, _) = state.principal_variances();
    if !(lo > 0.0) {
        return Err(Error::Unphysical("covariance not positive definite".into()));
    }
    if det < bound * (1.0 - 1e-12) {
        return Err(Error::Unphysical(format!(
            "det Σ = {det:.6e} below the Heisenberg bound 1/16"
        )));
    }
    Ok((0.25 / det.sqrt()).min(1.0))
}

/// Magic header of the raw I/Q format.
pub const IQ_MAGIC: &[u8; 8] = b"IQSAMP01";

/// Raw I/Q stream: 8-byte magic, `u64` LE sample count, then `(I, Q)` as
/// `f64` LE pairs.
pub fn write_iq_binary<W: Write>(mut w: W, samples: &[(f64, f64)]) -> Result<()> {
    w.write_all(IQ_MAGIC)?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(samples.len() * 16);
    for &(i, q) in samples {
        buf.extend_from_slice(&i.to_le_bytes());
        buf.extend_from_slice(&q.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_iq_binary<R: Read>(mut r: R) -> Result<Vec<(f64, f64)>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|_| Error::Parse {
        line: 0,
        message: "truncated I/Q header".into(),
    })?;
    if &header[..8] != IQ_MAGIC {
        return Err(Error::Parse {
            line: 0,
            message: "bad magic, expected IQSAMP01".into(),
        });
    }
    let count = u64::from_le_bytes(header[8..].try_into().expect("8 bytes"));
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if (body.len() as u64) != count.saturating_mul(16) {
        return Err(Error::Parse {
            line: 0,
            message: format!("header declares {count} samples but payload has {} bytes", body.len()),
        });
    }
    Ok(body
        .chunks_exact(16)
        .map(|c| {
            (
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect())
}

/// CSV with header `I,Q`; line numbers in errors are 1-based.
pub fn read_iq_csv<R: BufRead>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let header = header?;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_uppercase()).collect();
    let idx = |name: &str| {
        cols.iter().position(|c| c == name).ok_or(Error::Parse {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (ii, iq) = (idx("I")?, idx("Q")?);
    let mut out = Vec::new();
    for (k, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |c: usize| -> Result<f64> {
            let s = fields.get(c).ok_or(Error::Parse {
                line: k + 1,
                message: format!("expected {} fields, got {}", cols.len(), fields.len()),
            })?;
            s.trim().parse().map_err(|_| Error::Parse {
                line: k + 1,
                message: format!("not a number: `{}`", s.trim()),
            })
        };
        out.push((parse(ii)?, parse(iq)?));
    }
    Ok(out)
}

pub fn write_iq_csv<W: Write>(mut w: W, samples: &[(f64, f64)]) -> Result<()> {
    let mut s = String::with_capacity(samples.len() * 48 + 4);
    s.push_str("I,Q\n");
    for (i, q) in samples {
        s.push_str(&format!("{i:e},{q:e}\n"));
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::thermal_occupation;

    fn identity() -> PlanckCalibration {
        // V² = 2σ at the HEMT input.
        PlanckCalibration::new(1.0, 0.0, 5.645e9)
            .unwrap()
            .with_path_loss_db(0.0)
    }

    #[test]
    fn constant_samples() {
        let m = moments(&vec![(0.3, -1.2); 100]).unwrap();
        assert_eq!((m.mean_i, m.mean_q), (0.3, -1.2));
        for n in 0..=4 {
            for k in 0..=4 - n {
                if n + k >= 2 {
                    assert_eq!(m.central(n, k).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn two_points_by_hand() {
        let m = moments(&[(0.0, 0.0), (2.0, 0.0)]).unwrap();
        assert_eq!((m.mean_i, m.mean_q), (1.0, 0.0));
        assert_eq!(m.var_i(), 1.0);
        assert_eq!(m.var_q(), 0.0);
        assert_eq!(m.central(4, 0), Some(1.0));
        assert_eq!(m.central(3, 0), Some(0.0));
        assert_eq!(m.central(5, 0), None);
    }

    #[test]
    fn empty_and_single_rejected() {
        assert!(moments(&[]).is_err());
        assert!(moments(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn merge_with_different_shifts_matches_direct() {
        let pts: Vec<(f64, f64)> = (0..500)
            .map(|k| {
                let t = k as f64;
                ((0.37 * t).sin() * 3.0 + 10.0, (0.11 * t).cos() * t / 100.0 - 4.0)
            })
            .collect();
        let direct = moments(&pts).unwrap();
        // Each partial is shifted by its own first sample.
        let mut a = MomentAccumulator::new(pts[0]);
        let mut b = MomentAccumulator::new(pts[200]);
        for &(i, q) in &pts[..200] {
            a.push(i, q);
        }
        for &(i, q) in &pts[200..] {
            b.push(i, q);
        }
        a.merge(&b);
        let merged = a.finish().unwrap();
        for n in 0..=4 {
            for k in 0..=4 - n {
                let (x, y) = (direct.central[n][k], merged.central[n][k]);
                assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "({n},{k}): {x} vs {y}");
            }
        }
    }

    #[test]
    fn diag_covariance_reconstruction() {
        for k in [1.0, 2.0, 10.0] {
            let r = reconstruct_covariance(2.0 * 0.0740, 2.0 * 0.25 * k, 0.0, (0.0, 0.0), &identity()).unwrap();
            assert!((r.squeezing_db.unwrap() - 5.2871).abs() < 1e-3);
            assert_eq!(r.angle, 0.0);
            assert!(!r.degenerate);
        }
    }

    #[test]
    fn vacuum_is_degenerate_with_zero_angle() {
        let r = reconstruct_covariance(0.5, 0.5, 0.0, (0.0, 0.0), &identity()).unwrap();
        assert!(r.squeezing_db.unwrap().abs() < 1e-12);
        assert_eq!(r.angle, 0.0);
        assert!(r.degenerate);
        assert!((r.purity.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_covariance() {
        let s = CovarianceState::squeezed(0.074, 0.6, 30f64.to_radians());
        let r = reconstruct_covariance(2.0 * s.var_q, 2.0 * s.var_p, 2.0 * s.cov_qp, (0.0, 0.0), &identity()).unwrap();
        assert!((r.angle.to_degrees() - 30.0).abs() < 1e-9);
        assert!((r.sigma_sq - 0.074).abs() < 1e-12);
        assert!((r.sigma_as - 0.6).abs() < 1e-12);
    }

    #[test]
    fn negative_after_subtraction_flagged() {
        let calib = PlanckCalibration::new(1.0, 5.0, 5.645e9)
            .unwrap()
            .with_path_loss_db(0.0);
        let r = reconstruct_covariance(1.0, 20.0, 0.0, (0.0, 0.0), &calib).unwrap();
        assert!(r.degenerate);
        assert!(r.squeezing_db.is_none());
        assert!(r.purity.is_none());
    }

    #[test]
    fn hemt_referred_chain() {
        // Forward model through the lossy path, inverted by the HEMT-referred values.
        let calib = PlanckCalibration::new(2e-12, 10.0, 5.645e9).unwrap();
        let eta = 10f64.powf(-0.28);
        let sigma_h = 0.11;
        let sigma_att = (sigma_h - (1.0 - eta) * 0.25) / eta;
        let v2 = calib.conversion_factor * (2.0 * sigma_att + calib.system_noise);
        let back = 0.5 * (v2 / calib.hemt_conversion() - calib.hemt_noise());
        assert!((back - sigma_h).abs() < 1e-12);
    }

    #[test]
    fn purity_cases() {
        assert!((purity(&CovarianceState::vacuum()).unwrap() - 1.0).abs() < 1e-15);
        for s in [0.01, 0.074, 0.2, 0.25] {
            let st = CovarianceState::squeezed(s, 1.0 / (16.0 * s), 0.0);
            assert!((purity(&st).unwrap() - 1.0).abs() < 1e-12);
        }
        let n = thermal_occupation(5.645e9, 0.070);
        let mu = purity(&CovarianceState::thermal(n)).unwrap();
        assert!((mu - 0.959146).abs() < 1e-5);
        assert!(purity(&CovarianceState::squeezed(0.05, 0.25, 0.0)).is_err());
    }

    fn planck_data(g: f64, n_sys: f64, f: f64) -> (Vec<f64>, Vec<f64>) {
        let temps: Vec<f64> = (0..12).map(|k| 0.03 * 1.4f64.powi(k)).collect();
        let vars = temps.iter().map(|&t| g * (half_coth(f, t) + n_sys)).collect();
        (temps, vars)
    }

    #[test]
    fn planck_round_trip() {
        let (t, v) = planck_data(1e-12, 10.0, 5.645e9);
        let c = planck_fit(&t, &v, 5.645e9).unwrap();
        assert!(c.diagnostics.as_ref().unwrap().converged);
        assert!((c.conversion_factor / 1e-12 - 1.0).abs() < 1e-3);
        assert!((c.system_noise / 10.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rayleigh_jeans_asymptote() {
        let c = PlanckCalibration::new(1e-12, 10.0, 5.645e9).unwrap();
        let (t1, t2) = (200.0, 400.0);
        let slope = (c.measured_variance(t2) - c.measured_variance(t1)) / (t2 - t1);
        let rj = 1e-12 * BOLTZMANN / (PLANCK * 5.645e9);
        assert!((slope / rj - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_variances_flagged() {
        let t: Vec<f64> = (1..=8).map(|k| 0.05 * k as f64).collect();
        let c = planck_fit(&t, &[3e-12; 8], 5.645e9).unwrap();
        assert!(!c.diagnostics.unwrap().converged);
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let pts = vec![(1.5, -2.0), (f64::MIN_POSITIVE, 1e300)];
        let mut buf = Vec::new();
        write_iq_binary(&mut buf, &pts).unwrap();
        assert_eq!(&buf[..8], b"IQSAMP01");
        assert_eq!(buf.len(), 16 + 32);
        assert_eq!(read_iq_binary(&buf[..]).unwrap(), pts);
        assert!(read_iq_binary(&buf[..40]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_iq_binary(&bad[..]).is_err());
    }

    #[test]
    fn csv_round_trip_and_line_numbers() {
        let pts = vec![(0.25, -0.5), (1e-3, 3.0)];
        let mut buf = Vec::new();
        write_iq_csv(&mut buf, &pts).unwrap();
        assert_eq!(read_iq_csv(&buf[..]).unwrap(), pts);
        let err = read_iq_csv("I,Q\n1,2\n3,x\n".as_bytes()).unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 3,
                message: "not a number: `x`".into()
            }
        );
        assert!(matches!(
            read_iq_csv("I,P\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
