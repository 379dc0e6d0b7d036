//! Parameter extraction from measured or synthetic traces.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::LmSolution;

mod circle;
mod decay;
mod echo;
mod spectrum;

pub use circle::{
    circle_fit, correct_background, resonator_rates, taubin_circle, BackgroundModel, Circle, ResonatorRates,
};
pub use decay::{fit_t1, fit_t2, DecaySeries, T1_MODEL, T2_MODEL};
pub use echo::{echo_area, gaussian_window_area, EchoFit};
pub use spectrum::{fit_spin_spectrum, ResidualKind, SpinFit, SpinSpectrumMap};

/// Minimum number of samples accepted by any spectral fit.
pub const MIN_SPECTRUM_POINTS: usize = 8;

/// Ordered frequency grid with complex reflection samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSpectrum {
    freqs: Vec<f64>,
    values: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(freqs: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if freqs.len() != values.len() {
            return Err(Error::InsufficientData(format!(
                "{} frequencies but {} values",
                freqs.len(),
                values.len()
            )));
        }
        if freqs.iter().any(|f| !f.is_finite()) || values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("spectrum contains non-finite entries".into()));
        }
        if freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("frequencies must be strictly ascending".into()));
        }
        Ok(Self { freqs, values })
    }

    pub fn from_fn(freqs: Vec<f64>, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = freqs.iter().map(|&x| f(x)).collect();
        Self::new(freqs, values)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub(crate) fn require_fit_length(&self) -> Result<()> {
        if self.len() < MIN_SPECTRUM_POINTS {
            return Err(Error::InsufficientData(format!(
                "need at least {MIN_SPECTRUM_POINTS} points, got {}",
                self.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    /// 1σ; `None` when the data does not constrain the parameter.
    pub uncertainty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Names of parameters that ended on a bound.
    pub at_bounds: Vec<String>,
    /// Model conventions and diagnostics.
    pub notes: Vec<String>,
}

impl FitResult {
    pub(crate) fn from_solution(names: &[&str], sol: &LmSolution) -> Self {
        let parameters = names
            .iter()
            .zip(sol.params.iter().zip(&sol.uncertainties))
            .map(|(n, (&v, &u))| FitParameter {
                name: (*n).to_string(),
                value: v,
                uncertainty: u.is_finite().then_some(u),
            })
            .collect();
        let at_bounds = names
            .iter()
            .zip(&sol.at_bound)
            .filter(|(_, &b)| b)
            .map(|(n, _)| (*n).to_string())
            .collect();
        Self {
            parameters,
            residual_norm: sol.residual_norm(),
            converged: sol.converged(),
            iterations: sol.iterations,
            at_bounds,
            notes: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).map(|p| p.value)
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(|p| p.uncertainty)
    }

    pub(crate) fn fail(&mut self, note: impl Into<String>) {
        self.converged = false;
        self.notes.push(note.into());
    }
}
