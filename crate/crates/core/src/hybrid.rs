//! Steady-state input-output model of a resonator coupled to a spin ensemble.
//!
//! All rates are half-width-at-half-maximum values in cyclic units (Hz). Every
//! expression here is homogeneous in the rate unit, so no factor of 2π ever
//! appears. The probe detuning `ω` is measured from the resonator frequency.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, PLANCK, VACUUM_VARIANCE};
use crate::error::{invalid, Error, Result};

/// Relative magnitude below which a denominator is treated as singular.
const SINGULAR_REL: f64 = 1e-18;

/// Rates and frequencies of the spin-resonator hybrid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridParams {
    /// Resonator frequency, Hz.
    pub f_r: f64,
    /// External (feedline) coupling rate, Hz.
    pub kappa_ext: f64,
    /// Internal loss rate, Hz.
    pub kappa_int: f64,
    /// Collective spin-resonator coupling, Hz.
    pub g_eff: f64,
    /// Spin dephasing rate, Hz.
    pub gamma_s: f64,
    /// Spin-resonator detuning `f_s - f_r`, Hz.
    pub delta_sr: f64,
    /// Temperature of the loss and spin baths, K.
    pub bath_temp: f64,
}

impl Default for HybridParams {
    /// Values extracted from cwESR spectroscopy of the Si:P sample at
    /// `Δ_sr = 0` and a 70 mK bath.
    fn default() -> Self {
        Self {
            f_r: 5.645e9,
            kappa_ext: 1.49e6,
            kappa_int: 0.29e6,
            g_eff: 0.46e6,
            gamma_s: 0.382e6,
            delta_sr: 0.0,
            bath_temp: 0.070,
        }
    }
}

impl HybridParams {
    /// Total resonator linewidth `κ_ext + κ_int`.
    pub fn kappa(&self) -> f64 {
        self.kappa_ext + self.kappa_int
    }

    /// Spin frequency `f_r + Δ_sr`.
    pub fn f_s(&self) -> f64 {
        self.f_r + self.delta_sr
    }

    pub fn with_delta_sr(mut self, delta_sr: f64) -> Self {
        self.delta_sr = delta_sr;
        self
    }

    pub fn with_g_eff(mut self, g_eff: f64) -> Self {
        self.g_eff = g_eff;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("f_r", self.f_r),
            ("kappa_ext", self.kappa_ext),
            ("kappa_int", self.kappa_int),
            ("g_eff", self.g_eff),
            ("gamma_s", self.gamma_s),
            ("delta_sr", self.delta_sr),
            ("bath_temp", self.bath_temp),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.f_r <= 0.0 {
            return Err(invalid("f_r", "must be > 0"));
        }
        if self.kappa_ext <= 0.0 {
            return Err(invalid("kappa_ext", "must be > 0"));
        }
        if self.kappa_int < 0.0 {
            return Err(invalid("kappa_int", "must be >= 0"));
        }
        if self.gamma_s <= 0.0 {
            return Err(invalid("gamma_s", "must be > 0"));
        }
        if self.g_eff < 0.0 {
            return Err(invalid("g_eff", "must be >= 0"));
        }
        if self.bath_temp < 0.0 {
            return Err(invalid("bath_temp", "must be >= 0"));
        }
        Ok(())
    }
}

/// Real reflection, internal-loss and spin-transfer coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterCoefficients {
    pub r: f64,
    pub l: f64,
    pub t: f64,
    pub probe_detuning: f64,
}

impl ScatterCoefficients {
    /// `r² + l² + t²`; equals one where the variance relation is exact.
    pub fn sum_rule(&self) -> f64 {
        self.r * self.r + self.l * self.l + self.t * self.t
    }
}

fn check_denominator(z: Complex64, scale: f64, context: &'static str) -> Result<()> {
    if !(z.norm() >= SINGULAR_REL * scale) || z.norm() == 0.0 {
        return Err(Error::Singular { context });
    }
    Ok(())
}

/// Susceptibilities `X(ω)` and `Y(ω)` at probe detuning `ω` from `f_r`.
pub fn susceptibility(params: &HybridParams, probe_detuning: f64) -> Result<(Complex64, Complex64)> {
    let w = probe_detuning;
    let spin_den = Complex64::new(params.gamma_s, params.delta_sr - w);
    let scale = params.gamma_s.abs() + params.delta_sr.abs() + w.abs() + params.kappa();
    check_denominator(spin_den, scale, "spin susceptibility")?;

    let g2 = params.g_eff * params.g_eff;
    let x = Complex64::new(params.kappa(), -w) + g2 / spin_den;
    let y = (4.0 * params.gamma_s * params.kappa_ext).sqrt() * params.g_eff / spin_den;
    Ok((x, y))
}

pub fn scatter_coefficients(params: &HybridParams, probe_detuning: f64) -> Result<ScatterCoefficients> {
    let (x, y) = susceptibility(params, probe_detuning)?;
    let scale = params.kappa() + probe_detuning.abs() + params.g_eff;
    check_denominator(x, scale, "resonator susceptibility")?;

    let r = (1.0 - 2.0 * params.kappa_ext / x).re;
    let l = ((4.0 * params.kappa_ext * params.kappa_int).sqrt() / x).re;
    let t = (y / x).re;
    Ok(ScatterCoefficients {
        r,
        l,
        t,
        probe_detuning,
    })
}

/// Fraction `t²` of the output variance budget carried by the spin channel.
pub fn transfer_efficiency(params: &HybridParams, probe_detuning: f64) -> Result<f64> {
    let c = scatter_coefficients(params, probe_detuning)?;
    Ok(c.t * c.t)
}

/// Complex reflection `S11` at absolute probe frequency `probe_freq`.
pub fn s11(params: &HybridParams, probe_freq: f64) -> Result<Complex64> {
    if !(probe_freq > 0.0) {
        return Err(invalid("probe_freq", "must be > 0"));
    }
    let g2 = params.g_eff * params.g_eff;
    let spin_den = Complex64::new(-params.gamma_s, params.f_s() - probe_freq);
    let scale = params.gamma_s.abs() + (params.f_s() - probe_freq).abs() + params.kappa();
    check_denominator(spin_den, scale, "S11 spin term")?;

    let den = Complex64::new(-params.kappa(), params.f_r - probe_freq) + g2 / spin_den;
    let scale = params.kappa() + (params.f_r - probe_freq).abs() + params.g_eff;
    check_denominator(den, scale, "S11 resonator term")?;
    Ok(1.0 + 2.0 * params.kappa_ext / den)
}

/// Bose-Einstein occupation of a mode at `freq` in equilibrium at `temp`.
pub fn thermal_occupation(freq: f64, temp: f64) -> f64 {
    if temp <= 0.0 {
        return 0.0;
    }
    let x = PLANCK * freq / (BOLTZMANN * temp);
    1.0 / x.exp_m1()
}

/// Quadrature variance of a thermal state, `(2n̄ + 1)/4`.
pub fn thermal_variance(freq: f64, temp: f64) -> f64 {
    (2.0 * thermal_occupation(freq, temp) + 1.0) * VACUUM_VARIANCE
}

/// Quadrature variances of the two noise baths feeding the output mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathVariances {
    /// Resonator internal-loss bath.
    pub loss: f64,
    /// Spin dephasing bath.
    pub spin: f64,
}

impl BathVariances {
    /// Both baths thermal at the shared temperature `params.bath_temp`.
    pub fn shared(params: &HybridParams) -> Self {
        let v = thermal_variance(params.f_r, params.bath_temp);
        Self { loss: v, spin: v }
    }

    pub fn at_temperatures(freq: f64, loss_temp: f64, spin_temp: f64) -> Self {
        Self {
            loss: thermal_variance(freq, loss_temp),
            spin: thermal_variance(freq, spin_temp),
        }
    }
}

/// Output variance of one quadrature, `r²σ_in + l²σ_loss + t²σ_spin`, with
/// both baths thermal at `params.bath_temp`.
pub fn propagate_variance(params: &HybridParams, probe_detuning: f64, sigma_in: f64) -> Result<f64> {
    propagate_variance_with_baths(params, probe_detuning, sigma_in, BathVariances::shared(params))
}

pub fn propagate_variance_with_baths(
    params: &HybridParams,
    probe_detuning: f64,
    sigma_in: f64,
    baths: BathVariances,
) -> Result<f64> {
    if !(sigma_in > 0.0) {
        return Err(Error::Domain(format!("input variance must be > 0, got {sigma_in}")));
    }
    let c = scatter_coefficients(params, probe_detuning)?;
    Ok(c.r * c.r * sigma_in + c.l * c.l * baths.loss + c.t * c.t * baths.spin)
}

/// Squeezing level in dB; positive below the vacuum variance.
pub fn squeezing_db(sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(Error::Domain(format!("variance must be > 0, got {sigma_sq}")));
    }
    Ok(-10.0 * (4.0 * sigma_sq).log10())
}

/// Anti-squeezing level in dB; positive above the vacuum variance.
pub fn anti_squeezing_db(sigma_as: f64) -> Result<f64> {
    squeezing_db(sigma_as).map(|s| -s)
}

pub fn variance_from_db(level_db: f64) -> f64 {
    10f64.powf(-level_db / 10.0) * VACUUM_VARIANCE
}

/// `C = g_eff² / (γ_s κ)`.
pub fn cooperativity(params: &HybridParams) -> f64 {
    params.g_eff * params.g_eff / (params.gamma_s * params.kappa())
}

/// Gaussian quadrature state: means and symmetric 2×2 covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceState {
    pub mean_q: f64,
    pub mean_p: f64,
    pub var_q: f64,
    pub var_p: f64,
    pub cov_qp: f64,
}

impl CovarianceState {
    pub fn vacuum() -> Self {
        Self::thermal(0.0)
    }

    pub fn thermal(n_mean: f64) -> Self {
        let v = (2.0 * n_mean + 1.0) * VACUUM_VARIANCE;
        Self {
            mean_q: 0.0,
            mean_p: 0.0,
            var_q: v,
            var_p: v,
            cov_qp: 0.0,
        }
    }

    /// Zero-mean state with squeezed variance `sigma_sq` along the quadrature
    /// at `angle` (radians from `q`) and `sigma_as` along the orthogonal one.
    pub fn squeezed(sigma_sq: f64, sigma_as: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            mean_q: 0.0,
            mean_p: 0.0,
            var_q: sigma_sq * c * c + sigma_as * s * s,
            var_p: sigma_sq * s * s + sigma_as * c * c,
            cov_qp: (sigma_sq - sigma_as) * s * c,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.var_q * self.var_p - self.cov_qp * self.cov_qp
    }

    /// Eigenvalues of the covariance, `(smaller, larger)`.
    pub fn principal_variances(&self) -> (f64, f64) {
        let mean = 0.5 * (self.var_q + self.var_p);
        let half_diff = 0.5 * (self.var_q - self.var_p);
        let radius = half_diff.hypot(self.cov_qp);
        (mean - radius, mean + radius)
    }

    /// Angle of the squeezed (minor) axis from `q`, in `(-π/2, π/2]`.
    pub fn squeezing_angle(&self) -> f64 {
        let major = 0.5 * (2.0 * self.cov_qp).atan2(self.var_q - self.var_p);
        let mut minor = major + std::f64::consts::FRAC_PI_2;
        if minor > std::f64::consts::FRAC_PI_2 {
            minor -= std::f64::consts::PI;
        }
        minor
    }

    /// Positive definite and above the Heisenberg bound `det Σ ≥ 1/16`, up to
    /// a relative tolerance `tol` on the determinant.
    pub fn is_physical(&self, tol: f64) -> bool {
        let (lo, _) = self.principal_variances();
        lo > 0.0 && self.determinant() >= VACUUM_VARIANCE * VACUUM_VARIANCE * (1.0 - tol)
    }
}

/// Propagates a Gaussian state quadrature by quadrature. Means scale with `r`;
/// the baths add variance but no cross-covariance.
pub fn propagate_state(
    params: &HybridParams,
    probe_detuning: f64,
    state: &CovarianceState,
    baths: BathVariances,
) -> Result<CovarianceState> {
    if !(state.var_q > 0.0 && state.var_p > 0.0) {
        return Err(Error::Domain("state variances must be > 0".into()));
    }
    let c = scatter_coefficients(params, probe_detuning)?;
    let r2 = c.r * c.r;
    let bath = c.l * c.l * baths.loss + c.t * c.t * baths.spin;
    Ok(CovarianceState {
        mean_q: c.r * state.mean_q,
        mean_p: c.r * state.mean_p,
        var_q: r2 * state.var_q + bath,
        var_p: r2 * state.var_p + bath,
        cov_qp: r2 * state.cov_qp,
    })
}
