//! Extraction of `γ_s` and `g_eff` from a two-dimensional reflection map over
//! probe frequency and spin-resonator detuning, with resonator rates fixed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{FitResult, ResonatorRates, MIN_SPECTRUM_POINTS};
use crate::error::{Error, Result};
use crate::hybrid::{s11, HybridParams};
use crate::lsq::{levenberg_marquardt, LmOptions};

/// Reflection samples on a (detuning × probe frequency) grid, row-major by
/// detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSpectrumMap {
    pub probe_freqs: Vec<f64>,
    pub detunings: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl SpinSpectrumMap {
    pub fn new(probe_freqs: Vec<f64>, detunings: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if probe_freqs.len() * detunings.len() != values.len() {
            return Err(Error::InsufficientData(format!(
                "{} x {} grid but {} values",
                detunings.len(),
                probe_freqs.len(),
                values.len()
            )));
        }
        if probe_freqs.len() < MIN_SPECTRUM_POINTS || detunings.is_empty() {
            return Err(Error::InsufficientData(format!(
                "need at least {MIN_SPECTRUM_POINTS} probe points and one detuning row"
            )));
        }
        if probe_freqs.iter().chain(&detunings).any(|v| !v.is_finite())
            || values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::Domain("map contains non-finite entries".into()));
        }
        if probe_freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("probe frequencies must be strictly ascending".into()));
        }
        if probe_freqs[0] <= 0.0 {
            return Err(Error::Domain("probe frequencies must be positive".into()));
        }
        Ok(Self {
            probe_freqs,
            detunings,
            values,
        })
    }

    /// Evaluates the coupled-resonator reflection on the grid.
    pub fn synthesize(params: &HybridParams, probe_freqs: Vec<f64>, detunings: Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(probe_freqs.len() * detunings.len());
        for &d in &detunings {
            let p = params.with_delta_sr(d);
            for &f in &probe_freqs {
                values.push(s11(&p, f)?);
            }
        }
        Self::new(probe_freqs, detunings, values)
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        let n = self.probe_freqs.len();
        &self.values[i * n..(i + 1) * n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// Real and imaginary parts of `S_model - S_data`.
    #[default]
    Complex,
    /// `|S_model| - |S_data|`, for background-corrected magnitude data.
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinFit {
    pub gamma_s: f64,
    pub g_eff: f64,
    pub fit: FitResult,
}

fn model_params(rates: &ResonatorRates, gamma_s: f64, g_eff: f64) -> HybridParams {
    HybridParams {
        f_r: rates.f_r,
        kappa_ext: rates.kappa_ext,
        kappa_int: rates.kappa_int(),
        g_eff,
        gamma_s,
        delta_sr: 0.0,
        bath_temp: 0.0,
    }
}

fn residuals(map: &SpinSpectrumMap, rates: &ResonatorRates, gamma_s: f64, g2: f64, kind: ResidualKind) -> Vec<f64> {
    let base = model_params(rates, gamma_s, g2.max(0.0).sqrt());
    let mut out = Vec::with_capacity(2 * map.values.len());
    for (i, &d) in map.detunings.iter().enumerate() {
        let p = base.with_delta_sr(d);
        for (&f, &v) in map.probe_freqs.iter().zip(map.row(i)) {
            let m = s11(&p, f).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
            match kind {
                ResidualKind::Complex => {
                    out.push(m.re - v.re);
                    out.push(m.im - v.im);
                }
                ResidualKind::Magnitude => out.push(m.norm() - v.norm()),
            }
        }
    }
    out
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Least-squares fit of `(γ_s, g_eff)`. Internally `g_eff²` is the fitted
/// coordinate (bounded below by zero) so that an uncoupled map is a regular
/// boundary point rather than a stationary one.
pub fn fit_spin_spectrum(map: &SpinSpectrumMap, rates: &ResonatorRates, kind: ResidualKind) -> Result<SpinFit> {
    if !(rates.kappa > 0.0 && rates.kappa_ext > 0.0 && rates.kappa_int() >= 0.0 && rates.f_r > 0.0) {
        return Err(Error::Domain("resonator rates must satisfy 0 < κ_ext ≤ κ".into()));
    }
    let kappa = rates.kappa;

    // Coarse log grid for the starting point.
    let mut best = (f64::INFINITY, kappa, 0.0);
    let n_grid = 16;
    for i in 0..n_grid {
        let gamma = kappa * 10f64.powf(-3.0 + 4.0 * i as f64 / (n_grid - 1) as f64);
        for j in 0..=n_grid {
            let g = if j == 0 {
                0.0
            } else {
                kappa * 10f64.powf(-3.0 + 3.5 * (j - 1) as f64 / (n_grid - 1) as f64)
            };
            let c = cost(&residuals(map, rates, gamma, g * g, kind));
            if c < best.0 {
                best = (c, gamma, g);
            }
        }
    }
    let (_, gamma0, g0) = best;
    let g2_scale = (g0 * g0).max(1e-4 * kappa * kappa);

    let sol = levenberg_marquardt(
        |p| residuals(map, rates, p[0], p[1], kind),
        &[gamma0, g0 * g0],
        &LmOptions {
            scale: Some(vec![gamma0, g2_scale]),
            lower: Some(vec![1e-9 * kappa, 0.0]),
            upper: Some(vec![1e6 * kappa, 1e12 * kappa * kappa]),
            ..LmOptions::default()
        },
    )?;

    let gamma_s = sol.params[0];
    let g2 = sol.params[1].max(0.0);
    let g_eff = g2.sqrt();
    let sigma_g2 = sol.uncertainties[1];
    // δg = δ(g²)/(2g) away from zero; sqrt(δ(g²)) where g² is within noise.
    let sigma_g = if g2 > sigma_g2 {
        sigma_g2 / (2.0 * g_eff)
    } else {
        sigma_g2.sqrt()
    };

    let mut fit = FitResult::from_solution(&["gamma_s", "g_eff_sq"], &sol);
    fit.parameters.push(super::FitParameter {
        name: "g_eff".into(),
        value: g_eff,
        uncertainty: sigma_g.is_finite().then_some(sigma_g),
    });
    fit.notes
        .push(format!("residual kind: {kind:?}; resonator rates held fixed"));
    if !fit.at_bounds.is_empty() {
        fit.notes
            .push(format!("parameters at bounds: {}", fit.at_bounds.join(", ")));
    }
    Ok(SpinFit { gamma_s, g_eff, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates() -> ResonatorRates {
        ResonatorRates {
            f_r: 5.645e9,
            kappa: 1.78e6,
            kappa_ext: 1.49e6,
        }
    }

    fn axes(np: usize, nd: usize) -> (Vec<f64>, Vec<f64>) {
        let probe = (0..np)
            .map(|k| 5.645e9 - 5e6 + 10e6 * k as f64 / (np - 1) as f64)
            .collect();
        let det = (0..nd).map(|k| -10e6 + 20e6 * k as f64 / (nd - 1) as f64).collect();
        (probe, det)
    }

    #[test]
    fn noiseless_recovery() {
        let (probe, det) = axes(41, 21);
        let map = SpinSpectrumMap::synthesize(&HybridParams::default(), probe, det).unwrap();
        let fit = fit_spin_spectrum(&map, &rates(), ResidualKind::Complex).unwrap();
        assert!(fit.fit.converged);
        assert!((fit.gamma_s / 382e3 - 1.0).abs() < 5e-3);
        assert!((fit.g_eff / 460e3 - 1.0).abs() < 5e-3);
    }

    #[test]
    fn magnitude_mode_recovers_too() {
        let (probe, det) = axes(41, 21);
        let map = SpinSpectrumMap::synthesize(&HybridParams::default(), probe, det).unwrap();
        let fit = fit_spin_spectrum(&map, &rates(), ResidualKind::Magnitude).unwrap();
        assert!((fit.gamma_s / 382e3 - 1.0).abs() < 5e-3);
        assert!((fit.g_eff / 460e3 - 1.0).abs() < 5e-3);
    }

    #[test]
    fn uncoupled_map_gives_zero_coupling() {
        let (probe, det) = axes(41, 11);
        let map = SpinSpectrumMap::synthesize(&HybridParams::default().with_g_eff(0.0), probe, det).unwrap();
        let fit = fit_spin_spectrum(&map, &rates(), ResidualKind::Complex).unwrap();
        let sigma = fit.fit.uncertainty("g_eff").unwrap_or(f64::INFINITY);
        assert!(fit.g_eff <= sigma.max(1e-6 * 1.78e6), "g = {} ± {}", fit.g_eff, sigma);
    }

    #[test]
    fn rejects_inconsistent_grid() {
        assert!(SpinSpectrumMap::new(vec![1.0; 3], vec![0.0], vec![Complex64::new(0.0, 0.0); 3]).is_err());
        let probe: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!(SpinSpectrumMap::new(probe, vec![0.0, 1.0], vec![Complex64::new(0.0, 0.0); 10]).is_err());
    }
}
