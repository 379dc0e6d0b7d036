//! Python module `spinsqz`. Structured results come back as plain dicts and
//! lists; errors raise `ValueError` (bad input), `RuntimeError` (a fit or
//! search that found nothing) or `OSError`.

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use spinsqz_core::estimators::{self, DecaySeries, ResidualKind, ResonatorRates, SpinSpectrumMap};
use spinsqz_core::experiments::{
    self, AxisScale, AxisSpec, LinearRange, ReferenceRow, Scenario, SqueezingReferenceTable,
};
use spinsqz_core::hybrid::{self, CovarianceState};
use spinsqz_core::spin::{self, Transition};
use spinsqz_core::tomography::{self, PlanckCalibration};
use spinsqz_core::{synth, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::NoResonance
        | Error::NoPeak
        | Error::IllConditioned(_)
        | Error::Singular { .. }
        | Error::NoBracket { .. } => PyRuntimeError::new_err(e.to_string()),
        Error::Io(m) => PyOSError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Serializes through JSON so nested results arrive as dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (s,))
}

#[pyclass(name = "HybridParams", module = "spinsqz", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyHybridParams {
    f_r: f64,
    kappa_ext: f64,
    kappa_int: f64,
    g_eff: f64,
    gamma_s: f64,
    delta_sr: f64,
    bath_temp: f64,
}

impl From<hybrid::HybridParams> for PyHybridParams {
    fn from(p: hybrid::HybridParams) -> Self {
        Self {
            f_r: p.f_r,
            kappa_ext: p.kappa_ext,
            kappa_int: p.kappa_int,
            g_eff: p.g_eff,
            gamma_s: p.gamma_s,
            delta_sr: p.delta_sr,
            bath_temp: p.bath_temp,
        }
    }
}

impl PyHybridParams {
    fn core(&self) -> PyResult<hybrid::HybridParams> {
        let p = hybrid::HybridParams {
            f_r: self.f_r,
            kappa_ext: self.kappa_ext,
            kappa_int: self.kappa_int,
            g_eff: self.g_eff,
            gamma_s: self.gamma_s,
            delta_sr: self.delta_sr,
            bath_temp: self.bath_temp,
        };
        p.validate().map_err(err)?;
        Ok(p)
    }
}

#[pymethods]
impl PyHybridParams {
    /// Rates in Hz (HWHM), temperature in K. Omitted values take the
    /// characterized sample defaults.
    #[new]
    #[pyo3(signature = (*, f_r=None, kappa_ext=None, kappa_int=None, g_eff=None, gamma_s=None, delta_sr=None, bath_temp=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        f_r: Option<f64>,
        kappa_ext: Option<f64>,
        kappa_int: Option<f64>,
        g_eff: Option<f64>,
        gamma_s: Option<f64>,
        delta_sr: Option<f64>,
        bath_temp: Option<f64>,
    ) -> PyResult<Self> {
        let d = hybrid::HybridParams::default();
        let p = Self {
            f_r: f_r.unwrap_or(d.f_r),
            kappa_ext: kappa_ext.unwrap_or(d.kappa_ext),
            kappa_int: kappa_int.unwrap_or(d.kappa_int),
            g_eff: g_eff.unwrap_or(d.g_eff),
            gamma_s: gamma_s.unwrap_or(d.gamma_s),
            delta_sr: delta_sr.unwrap_or(d.delta_sr),
            bath_temp: bath_temp.unwrap_or(d.bath_temp),
        };
        p.core()?;
        Ok(p)
    }

    fn kappa(&self) -> f64 {
        self.kappa_ext + self.kappa_int
    }

    fn cooperativity(&self) -> PyResult<f64> {
        Ok(hybrid::cooperativity(&self.core()?))
    }

    /// Reflection coefficient at absolute probe frequency `freq`.
    fn s11(&self, freq: f64) -> PyResult<Complex64> {
        hybrid::s11(&self.core()?, freq).map_err(err)
    }

    /// Real coefficients `(r, l, t)` at probe detuning `omega` from f_r.
    #[pyo3(signature = (omega=0.0))]
    fn scatter(&self, omega: f64) -> PyResult<(f64, f64, f64)> {
        let c = hybrid::scatter_coefficients(&self.core()?, omega).map_err(err)?;
        Ok((c.r, c.l, c.t))
    }

    #[pyo3(signature = (omega=0.0))]
    fn transfer_efficiency(&self, omega: f64) -> PyResult<f64> {
        hybrid::transfer_efficiency(&self.core()?, omega).map_err(err)
    }

    /// Output quadrature variance for input variance `sigma_in`.
    #[pyo3(signature = (sigma_in, omega=0.0))]
    fn propagate_variance(&self, sigma_in: f64, omega: f64) -> PyResult<f64> {
        hybrid::propagate_variance(&self.core()?, omega, sigma_in).map_err(err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.core()?)
    }

    fn __repr__(&self) -> String {
        format!(
            "HybridParams(f_r={}, kappa_ext={}, kappa_int={}, g_eff={}, gamma_s={}, delta_sr={}, bath_temp={})",
            self.f_r, self.kappa_ext, self.kappa_int, self.g_eff, self.gamma_s, self.delta_sr, self.bath_temp
        )
    }
}

#[pyclass(name = "SpinSystem", module = "spinsqz", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PySpinSystem {
    g_e: f64,
    g_n: f64,
    hyperfine_a: f64,
    nuclear_sign: i8,
}

impl PySpinSystem {
    fn core(&self) -> PyResult<spin::SpinSystem> {
        let s = spin::SpinSystem {
            g_e: self.g_e,
            g_n: self.g_n,
            hyperfine_a: self.hyperfine_a,
            nuclear_sign: self.nuclear_sign,
        };
        s.validate().map_err(err)?;
        Ok(s)
    }
}

fn transition(s: &str) -> PyResult<Transition> {
    s.parse().map_err(err)
}

#[pymethods]
impl PySpinSystem {
    #[new]
    #[pyo3(signature = (*, g_e=None, g_n=None, hyperfine_a=None, nuclear_sign=None))]
    fn new(g_e: Option<f64>, g_n: Option<f64>, hyperfine_a: Option<f64>, nuclear_sign: Option<i8>) -> PyResult<Self> {
        let d = spin::SpinSystem::default();
        let s = Self {
            g_e: g_e.unwrap_or(d.g_e),
            g_n: g_n.unwrap_or(d.g_n),
            hyperfine_a: hyperfine_a.unwrap_or(d.hyperfine_a),
            nuclear_sign: nuclear_sign.unwrap_or(d.nuclear_sign),
        };
        s.core()?;
        Ok(s)
    }

    /// Ascending `(label, frequency_hz)` pairs at `field` tesla.
    fn levels(&self, field: f64) -> PyResult<Vec<(String, f64)>> {
        let d = spin::spin_levels(&self.core()?, field).map_err(err)?;
        Ok(d.labels
            .iter()
            .zip(d.energies)
            .map(|(l, e)| (l.short().to_string(), e))
            .collect())
    }

    #[pyo3(signature = (field, transition="dd->ud"))]
    fn transition_frequency(&self, field: f64, transition: &str) -> PyResult<f64> {
        spin::transition_frequency(&self.core()?, field, self::transition(transition)?).map_err(err)
    }

    #[pyo3(signature = (freq, transition="dd->ud"))]
    fn resonance_field(&self, freq: f64, transition: &str) -> PyResult<f64> {
        spin::resonance_field(&self.core()?, freq, self::transition(transition)?).map_err(err)
    }
}

#[pyfunction]
fn squeezing_db(sigma_sq: f64) -> PyResult<f64> {
    hybrid::squeezing_db(sigma_sq).map_err(err)
}

#[pyfunction]
fn variance_from_db(level_db: f64) -> f64 {
    hybrid::variance_from_db(level_db)
}

/// Rows are `(pump_power, sigma_sq, sigma_as)`.
#[pyfunction]
fn predict_squeezing<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyHybridParams>,
    rows: Vec<(f64, f64, f64)>,
    scenario: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let table = SqueezingReferenceTable::new(
        rows.into_iter()
            .map(|(pump_power, sigma_sq, sigma_as)| ReferenceRow {
                pump_power,
                sigma_sq,
                sigma_as,
            })
            .collect(),
    )
    .map_err(err)?;
    let scenario = Scenario::new(scenario.parse().map_err(err)?);
    let out = experiments::predict_squeezing(&table, &params.core()?, &scenario).map_err(err)?;
    to_py(py, &out)
}

fn axis(spec: (String, f64, f64, usize), log: bool) -> PyResult<AxisSpec> {
    let (name, min, max, points) = spec;
    let a = AxisSpec {
        name: name.parse().map_err(err)?,
        min,
        max,
        points,
        scale: if log { AxisScale::Log } else { AxisScale::Linear },
    };
    a.validate().map_err(err)?;
    Ok(a)
}

/// Axes are `(name, min, max, points)`.
#[pyfunction]
#[pyo3(signature = (params, x, y, x_log=false, y_log=false, threads=None))]
fn efficiency_map<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyHybridParams>,
    x: (String, f64, f64, usize),
    y: (String, f64, f64, usize),
    x_log: bool,
    y_log: bool,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let m = experiments::efficiency_map(&params.core()?, &axis(x, x_log)?, &axis(y, y_log)?, threads).map_err(err)?;
    to_py(py, &m)
}

fn range((min, max, points): (f64, f64, usize)) -> PyResult<LinearRange> {
    LinearRange::new(min, max, points).map_err(err)
}

/// `|S11|` over `(min, max, points)` probe and spin detuning ranges.
#[pyfunction]
fn spectrum_map<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyHybridParams>,
    probe: (f64, f64, usize),
    detuning: (f64, f64, usize),
) -> PyResult<Bound<'py, PyAny>> {
    let m = experiments::spectrum_map(&params.core()?, &range(probe)?, &range(detuning)?).map_err(err)?;
    to_py(py, &m)
}

#[pyfunction]
fn circle_fit<'py>(py: Python<'py>, freqs: Vec<f64>, values: Vec<Complex64>) -> PyResult<Bound<'py, PyAny>> {
    let spec = estimators::ComplexSpectrum::new(freqs, values).map_err(err)?;
    let (bg, fit) = estimators::circle_fit(&spec).map_err(err)?;
    let rates = estimators::resonator_rates(&bg).map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("background", to_py(py, &bg)?)?;
    d.set_item("rates", to_py(py, &rates)?)?;
    d.set_item("kappa_int", rates.kappa_int())?;
    d.set_item("fit", to_py(py, &fit)?)?;
    Ok(d.into_any())
}

/// `values` is row-major by detuning; `rates` is `(f_r, kappa, kappa_ext)`.
#[pyfunction]
#[pyo3(signature = (probe_freqs, detunings, values, rates, magnitude=false))]
fn fit_spin_spectrum<'py>(
    py: Python<'py>,
    probe_freqs: Vec<f64>,
    detunings: Vec<f64>,
    values: Vec<Complex64>,
    rates: (f64, f64, f64),
    magnitude: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let map = SpinSpectrumMap::new(probe_freqs, detunings, values).map_err(err)?;
    let rates = ResonatorRates {
        f_r: rates.0,
        kappa: rates.1,
        kappa_ext: rates.2,
    };
    let kind = if magnitude {
        ResidualKind::Magnitude
    } else {
        ResidualKind::Complex
    };
    to_py(py, &estimators::fit_spin_spectrum(&map, &rates, kind).map_err(err)?)
}

fn decay(delays: Vec<f64>, areas: Vec<f64>, errors: Option<Vec<f64>>) -> PyResult<DecaySeries> {
    DecaySeries::new(delays, areas, errors).map_err(err)
}

/// Returns `(T1, fit)`.
#[pyfunction]
#[pyo3(signature = (delays, areas, errors=None))]
fn fit_t1<'py>(
    py: Python<'py>,
    delays: Vec<f64>,
    areas: Vec<f64>,
    errors: Option<Vec<f64>>,
) -> PyResult<(f64, Bound<'py, PyAny>)> {
    let (t, fit) = estimators::fit_t1(&decay(delays, areas, errors)?).map_err(err)?;
    Ok((t, to_py(py, &fit)?))
}

/// Returns `(T2, fit)`.
#[pyfunction]
#[pyo3(signature = (delays, areas, errors=None))]
fn fit_t2<'py>(
    py: Python<'py>,
    delays: Vec<f64>,
    areas: Vec<f64>,
    errors: Option<Vec<f64>>,
) -> PyResult<(f64, Bound<'py, PyAny>)> {
    let (t, fit) = estimators::fit_t2(&decay(delays, areas, errors)?).map_err(err)?;
    Ok((t, to_py(py, &fit)?))
}

#[pyfunction]
fn echo_area<'py>(py: Python<'py>, times: Vec<f64>, trace: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &estimators::echo_area(&times, &trace).map_err(err)?)
}

#[pyfunction]
fn planck_fit<'py>(py: Python<'py>, temps: Vec<f64>, variances: Vec<f64>, freq: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &tomography::planck_fit(&temps, &variances, freq).map_err(err)?)
}

fn calibration(conversion_factor: f64, system_noise: f64, freq: f64, path_loss_db: f64) -> PyResult<PlanckCalibration> {
    let c = PlanckCalibration::new(conversion_factor, system_noise, freq)
        .map_err(err)?
        .with_path_loss_db(path_loss_db);
    c.validate().map_err(err)?;
    Ok(c)
}

/// Gaussian reconstruction from voltage samples `i`, `q`.
#[pyfunction]
#[pyo3(signature = (i, q, conversion_factor, system_noise, freq, path_loss_db=tomography::DEFAULT_PATH_LOSS_DB))]
fn reconstruct<'py>(
    py: Python<'py>,
    i: Vec<f64>,
    q: Vec<f64>,
    conversion_factor: f64,
    system_noise: f64,
    freq: f64,
    path_loss_db: f64,
) -> PyResult<Bound<'py, PyAny>> {
    if i.len() != q.len() {
        return Err(PyValueError::new_err("i and q differ in length"));
    }
    let calib = calibration(conversion_factor, system_noise, freq, path_loss_db)?;
    let samples: Vec<(f64, f64)> = i.into_iter().zip(q).collect();
    let m = py.detach(|| tomography::moments(&samples)).map_err(err)?;
    to_py(py, &tomography::reconstruct_gaussian(&m, &calib).map_err(err)?)
}

/// Seeded samples of a squeezed state through the detection chain; returns
/// `(i, q)` lists.
#[pyfunction]
#[pyo3(signature = (sigma_sq, sigma_as, angle, n, seed, conversion_factor=1.0, system_noise=0.0, freq=5.645e9, path_loss_db=0.0))]
#[allow(clippy::too_many_arguments)]
fn synth_iq(
    py: Python<'_>,
    sigma_sq: f64,
    sigma_as: f64,
    angle: f64,
    n: usize,
    seed: u64,
    conversion_factor: f64,
    system_noise: f64,
    freq: f64,
    path_loss_db: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let calib = calibration(conversion_factor, system_noise, freq, path_loss_db)?;
    let state = CovarianceState::squeezed(sigma_sq, sigma_as, angle);
    let s = py.detach(|| synth::iq_samples(&state, &calib, n, seed)).map_err(err)?;
    Ok(s.into_iter().unzip())
}

#[pymodule]
fn spinsqz(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyHybridParams>()?;
    m.add_class::<PySpinSystem>()?;
    m.add_function(wrap_pyfunction!(squeezing_db, m)?)?;
    m.add_function(wrap_pyfunction!(variance_from_db, m)?)?;
    m.add_function(wrap_pyfunction!(predict_squeezing, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency_map, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum_map, m)?)?;
    m.add_function(wrap_pyfunction!(circle_fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_spin_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(fit_t1, m)?)?;
    m.add_function(wrap_pyfunction!(fit_t2, m)?)?;
    m.add_function(wrap_pyfunction!(echo_area, m)?)?;
    m.add_function(wrap_pyfunction!(planck_fit, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(synth_iq, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_convert_to_core_unchanged() {
        let d = hybrid::HybridParams::default();
        assert_eq!(PyHybridParams::from(d).core().unwrap(), d);
    }

    #[test]
    fn axis_tuple_validation() {
        assert!(axis(("g_eff".into(), 0.0, 1e6, 11), false).is_ok());
        assert!(axis(("g_eff".into(), 0.0, 1e6, 11), true).is_err());
        assert!(axis(("kappa".into(), 0.0, 1e6, 11), false).is_err());
    }
}
