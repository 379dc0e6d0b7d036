//! Echo-area decay fits for the coherence times.

use serde::{Deserialize, Serialize};

use super::FitResult;
use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};

pub const T2_MODEL: &str = "A(tau) = A0 * exp(-2 tau / T2) + c, tau = inter-pulse delay (total evolution 2 tau)";
pub const T1_MODEL: &str = "A(T) = A0 * (1 - 2 k exp(-T / T1)), inversion efficiency k in [0, 1]";

const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySeries {
    pub delays: Vec<f64>,
    pub areas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<f64>>,
}

impl DecaySeries {
    pub fn new(delays: Vec<f64>, areas: Vec<f64>, errors: Option<Vec<f64>>) -> Result<Self> {
        if delays.len() != areas.len() || errors.as_ref().is_some_and(|e| e.len() != delays.len()) {
            return Err(Error::InsufficientData("column lengths differ".into()));
        }
        if delays.len() < MIN_POINTS {
            return Err(Error::InsufficientData(format!(
                "need at least {MIN_POINTS} points, got {}",
                delays.len()
            )));
        }
        if delays.iter().chain(&areas).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite entries".into()));
        }
        if delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("delays must be strictly ascending".into()));
        }
        if let Some(e) = &errors {
            if e.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Domain("point errors must be positive".into()));
            }
        }
        Ok(Self { delays, areas, errors })
    }

    fn weight(&self, i: usize) -> f64 {
        self.errors.as_ref().map_or(1.0, |e| 1.0 / e[i])
    }

    fn span(&self) -> f64 {
        self.delays[self.delays.len() - 1] - self.delays[0]
    }

    fn amplitude_scale(&self) -> f64 {
        self.areas
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE)
    }

    /// Candidate time constants, log-spaced around the sampled span.
    fn time_grid(&self) -> Vec<f64> {
        let min_step = self
            .delays
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let lo = (min_step / 4.0).ln();
        let hi = (10.0 * self.span()).ln();
        (0..200).map(|k| (lo + (hi - lo) * k as f64 / 199.0).exp()).collect()
    }
}

/// Weighted linear least squares on two basis columns.
fn linear_two(series: &DecaySeries, b0: impl Fn(f64) -> f64, b1: impl Fn(f64) -> f64) -> Option<([f64; 2], f64)> {
    let (mut s00, mut s01, mut s11, mut y0, mut y1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&t, &y)) in series.delays.iter().zip(&series.areas).enumerate() {
        let w = series.weight(i).powi(2);
        let (u, v) = (b0(t), b1(t));
        s00 += w * u * u;
        s01 += w * u * v;
        s11 += w * v * v;
        y0 += w * u * y;
        y1 += w * v * y;
    }
    let det = s00 * s11 - s01 * s01;
    if !(det.abs() > 1e-300) {
        return None;
    }
    let c = [(s11 * y0 - s01 * y1) / det, (s00 * y1 - s01 * y0) / det];
    let cost = series
        .delays
        .iter()
        .zip(&series.areas)
        .enumerate()
        .map(|(i, (&t, &y))| (series.weight(i) * (c[0] * b0(t) + c[1] * b1(t) - y)).powi(2))
        .sum();
    Some((c, cost))
}

fn degenerate(amp: f64, time: f64, series: &DecaySeries) -> Option<String> {
    let rel = amp.abs() / series.amplitude_scale();
    if !time.is_finite() || time <= 0.0 {
        Some("non-positive decay time".into())
    } else if rel < 1e-6 {
        Some("decay amplitude vanishes: time constant unconstrained".into())
    } else if time > 1e3 * series.span() {
        Some("decay time far exceeds the sampled span".into())
    } else {
        None
    }
}

/// Hahn-echo decay: `A0 exp(-2τ/T2) + c`.
pub fn fit_t2(series: &DecaySeries) -> Result<(f64, FitResult)> {
    let mut best: Option<(f64, [f64; 2], f64)> = None;
    for t2 in series.time_grid() {
        if let Some((c, cost)) = linear_two(series, |t| (-2.0 * t / t2).exp(), |_| 1.0) {
            if best.is_none_or(|b| cost < b.2) {
                best = Some((t2, c, cost));
            }
        }
    }
    let (t2_0, [a0, c0], _) = best.ok_or_else(|| Error::InsufficientData("singular design".into()))?;
    let amp_scale = series.amplitude_scale();

    let sol = levenberg_marquardt(
        |p| {
            series
                .delays
                .iter()
                .zip(&series.areas)
                .enumerate()
                .map(|(i, (&t, &y))| series.weight(i) * (p[0] * (-2.0 * t / p[1]).exp() + p[2] - y))
                .collect()
        },
        &[a0, t2_0, c0],
        &LmOptions {
            scale: Some(vec![amp_scale, t2_0, amp_scale]),
            ..LmOptions::default()
        },
    )?;
    let mut fit = FitResult::from_solution(&["A0", "T2", "c"], &sol);
    fit.notes.push(T2_MODEL.into());
    let t2 = sol.params[1];
    if let Some(reason) = degenerate(sol.params[0], t2, series) {
        fit.fail(reason);
    } else if sol.params[0] <= 0.0 {
        fit.fail("non-positive decay amplitude");
    }
    Ok((t2, fit))
}

/// Inversion recovery: `A0 (1 - 2k exp(-T/T1))`.
///
/// A free offset would be exactly degenerate with `A0` and `k` (only
/// `A0 + c` and `A0 k` are identifiable), so the baseline is taken as zero.
pub fn fit_t1(series: &DecaySeries) -> Result<(f64, FitResult)> {
    let mut best: Option<(f64, [f64; 2], f64)> = None;
    for t1 in series.time_grid() {
        if let Some((c, cost)) = linear_two(series, |_| 1.0, |t| -2.0 * (-t / t1).exp()) {
            if best.is_none_or(|b| cost < b.2) {
                best = Some((t1, c, cost));
            }
        }
    }
    let (t1_0, [a0, a0k], _) = best.ok_or_else(|| Error::InsufficientData("singular design".into()))?;
    let k0 = if a0 != 0.0 { (a0k / a0).clamp(0.0, 1.0) } else { 0.5 };
    let amp_scale = series.amplitude_scale();

    let sol = levenberg_marquardt(
        |p| {
            series
                .delays
                .iter()
                .zip(&series.areas)
                .enumerate()
                .map(|(i, (&t, &y))| series.weight(i) * (p[0] * (1.0 - 2.0 * p[1] * (-t / p[2]).exp()) - y))
                .collect()
        },
        &[a0, k0, t1_0],
        &LmOptions {
            scale: Some(vec![amp_scale, 1.0, t1_0]),
            lower: Some(vec![f64::NEG_INFINITY, 0.0, f64::MIN_POSITIVE]),
            upper: Some(vec![f64::INFINITY, 1.0, f64::INFINITY]),
            ..LmOptions::default()
        },
    )?;
    let mut fit = FitResult::from_solution(&["A0", "k", "T1"], &sol);
    fit.notes.push(T1_MODEL.into());
    let t1 = sol.params[2];
    let recovery = sol.params[0] * sol.params[1];
    if let Some(reason) = degenerate(recovery, t1, series) {
        fit.fail(reason);
    }
    Ok((t1, fit))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2_series(t2: f64, a0: f64, c: f64) -> DecaySeries {
        let delays: Vec<f64> = (0..30).map(|k| 20e-6 + k as f64 * 0.1e-3).collect();
        let areas = delays.iter().map(|t| a0 * (-2.0 * t / t2).exp() + c).collect();
        DecaySeries::new(delays, areas, None).unwrap()
    }

    fn t1_series(t1: f64, a0: f64, k: f64) -> DecaySeries {
        let delays: Vec<f64> = (0..25).map(|i| 0.5 * 1.25f64.powi(i)).collect();
        let areas = delays.iter().map(|t| a0 * (1.0 - 2.0 * k * (-t / t1).exp())).collect();
        DecaySeries::new(delays, areas, None).unwrap()
    }

    #[test]
    fn t2_noiseless_exact() {
        let (t2, fit) = fit_t2(&t2_series(2.16e-3, 1.0, 0.05)).unwrap();
        assert!(fit.converged);
        assert!((t2 / 2.16e-3 - 1.0).abs() < 1e-9);
        assert!((fit.value("c").unwrap() - 0.05).abs() < 1e-9);
    }

    #[test]
    fn t2_constant_series_flagged() {
        let (_, fit) = fit_t2(&t2_series(2.16e-3, 0.0, 0.4)).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn t2_rising_series_flagged() {
        let (_, fit) = fit_t2(&t2_series(2.16e-3, -1.0, 1.2)).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn t1_noiseless_exact() {
        let (t1, fit) = fit_t1(&t1_series(85.49, 2.0, 1.0)).unwrap();
        assert!(fit.converged);
        assert!((t1 / 85.49 - 1.0).abs() < 1e-9);
        let (t1, fit) = fit_t1(&t1_series(85.49, 2.0, 0.8)).unwrap();
        assert!((t1 / 85.49 - 1.0).abs() < 1e-9);
        assert!((fit.value("k").unwrap() - 0.8).abs() < 1e-9);
    }

    #[test]
    fn t1_without_inversion_flagged() {
        let (_, fit) = fit_t1(&t1_series(85.49, 2.0, 0.0)).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn series_validation() {
        assert!(DecaySeries::new(vec![0.0, 1.0], vec![1.0, 0.5], None).is_err());
        assert!(DecaySeries::new(vec![0.0, 1.0, 0.5, 2.0, 3.0], vec![1.0; 5], None).is_err());
        assert!(DecaySeries::new((0..5).map(f64::from).collect(), vec![1.0; 5], Some(vec![0.0; 5])).is_err());
    }
}
