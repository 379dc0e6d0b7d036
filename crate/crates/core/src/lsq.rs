//! Damped least-squares (Levenberg-Marquardt) engine.
//!
//! Minimizes `Σ rᵢ(x)²` for a residual closure `r`. Parameters are rescaled
//! by their initial magnitudes so that every scaled coordinate starts near
//! one; the Jacobian is taken by central differences in scaled space.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative step tolerance.
    pub xtol: f64,
    /// Relative cost-change tolerance.
    pub ftol: f64,
    pub initial_lambda: f64,
    /// Central-difference step in scaled coordinates.
    pub diff_step: f64,
    /// Per-parameter scale; defaults to `|x0|` (or 1 where `x0` is zero).
    pub scale: Option<Vec<f64>>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            xtol: 1e-10,
            ftol: 1e-12,
            initial_lambda: 1e-3,
            diff_step: 1e-6,
            scale: None,
            lower: None,
            upper: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    StepTolerance,
    CostTolerance,
    ZeroResidual,
    /// No downhill step exists at any damping.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmSolution {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// 1σ uncertainties from `s² (JᵀJ)⁻¹` with `s² = cost / (m - n)`.
    /// Infinite for parameters the data does not constrain.
    pub uncertainties: Vec<f64>,
    /// Full covariance; rows/columns of unconstrained parameters are
    /// infinite on the diagonal and NaN elsewhere.
    pub covariance: DMatrix<f64>,
    pub at_bound: Vec<bool>,
}

impl LmSolution {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }

    pub fn residual_norm(&self) -> f64 {
        self.cost.sqrt()
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

struct Scaled<'a, F> {
    f: &'a F,
    scale: Vec<f64>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
}

impl<F: Fn(&[f64]) -> Vec<f64>> Scaled<'_, F> {
    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.scale).map(|(u, s)| u * s).collect()
    }

    fn project(&self, u: &mut [f64]) {
        for (i, ui) in u.iter_mut().enumerate() {
            if let Some(lo) = &self.lower {
                *ui = ui.max(lo[i] / self.scale[i]);
            }
            if let Some(hi) = &self.upper {
                *ui = ui.min(hi[i] / self.scale[i]);
            }
        }
    }

    fn eval(&self, u: &[f64]) -> Vec<f64> {
        (self.f)(&self.to_x(u))
    }

    fn jacobian(&self, u: &[f64], m: usize, step: f64) -> DMatrix<f64> {
        let n = u.len();
        let mut jac = DMatrix::zeros(m, n);
        let mut probe = u.to_vec();
        for j in 0..n {
            let h = step * u[j].abs().max(1.0);
            probe[j] = u[j] + h;
            let fp = self.eval(&probe);
            probe[j] = u[j] - h;
            let fm = self.eval(&probe);
            probe[j] = u[j];
            for i in 0..m {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }
}

/// Runs Levenberg-Marquardt from `x0`.
pub fn levenberg_marquardt<F>(f: F, x0: &[f64], opts: &LmOptions) -> Result<LmSolution>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    if n == 0 {
        return Err(invalid("x0", "empty parameter vector"));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("x0", "non-finite initial guess"));
    }
    let scale: Vec<f64> = match &opts.scale {
        Some(s) if s.len() == n => s.iter().map(|v| v.abs()).collect(),
        Some(_) => return Err(invalid("scale", "length must match x0")),
        None => x0.iter().map(|v| if *v != 0.0 { v.abs() } else { 1.0 }).collect(),
    };
    if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(invalid("scale", "entries must be positive and finite"));
    }
    for (name, b) in [("lower", &opts.lower), ("upper", &opts.upper)] {
        if let Some(b) = b {
            if b.len() != n {
                return Err(invalid(name, "length must match x0"));
            }
        }
    }
    let problem = Scaled {
        f: &f,
        scale,
        lower: opts.lower.clone(),
        upper: opts.upper.clone(),
    };

    let mut u: Vec<f64> = x0.iter().zip(&problem.scale).map(|(x, s)| x / s).collect();
    problem.project(&mut u);
    let mut r = problem.eval(&u);
    let m = r.len();
    if m == 0 {
        return Err(invalid("residuals", "residual vector is empty"));
    }
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(invalid("x0", "residuals are not finite at the initial guess"));
    }
    let mut lambda = opts.initial_lambda;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iter {
        iterations += 1;
        if cost == 0.0 {
            termination = Termination::ZeroResidual;
            break;
        }
        let jac = problem.jacobian(&u, m, opts.diff_step);
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);
        let diag_floor = jtj.diagonal().max() * 1e-15 + f64::MIN_POSITIVE;

        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let step = match a.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        termination = Termination::Stalled;
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut u_new: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            problem.project(&mut u_new);
            let r_new = problem.eval(&u_new);
            let cost_new = sum_sq(&r_new);

            if cost_new.is_finite() && cost_new < cost {
                let du: f64 = u_new.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let un: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rel_cost = (cost - cost_new) / cost;
                u = u_new;
                r = r_new;
                cost = cost_new;
                lambda = (lambda * 0.1).max(1e-15);
                if du <= opts.xtol * (un + opts.xtol) {
                    termination = Termination::StepTolerance;
                    break 'outer;
                }
                if rel_cost <= opts.ftol {
                    termination = Termination::CostTolerance;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                termination = Termination::Stalled;
                break 'outer;
            }
        }
    }

    let jac = problem.jacobian(&u, m, opts.diff_step);
    let covariance = covariance(&jac, cost, &problem.scale);
    let uncertainties = covariance.diagonal().iter().map(|v| v.sqrt()).collect();
    let params = problem.to_x(&u);
    let at_bound = params
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let tol = 1e-9 * problem.scale[i];
            let lo = opts.lower.as_ref().is_some_and(|b| (x - b[i]).abs() <= tol);
            let hi = opts.upper.as_ref().is_some_and(|b| (x - b[i]).abs() <= tol);
            lo || hi
        })
        .collect();

    Ok(LmSolution {
        params,
        residuals: r,
        cost,
        iterations,
        termination,
        uncertainties,
        covariance,
        at_bound,
    })
}

/// Parameter covariance `s² (JᵀJ)⁻¹` in unscaled units, via SVD so that
/// unconstrained directions come out infinite instead of garbage.
fn covariance(jac: &DMatrix<f64>, cost: f64, scale: &[f64]) -> DMatrix<f64> {
    let (m, n) = jac.shape();
    let dof = m.saturating_sub(n).max(1) as f64;
    let s2 = cost / dof;
    let svd = jac.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    let cutoff = smax * 1e-12;

    let mut free = vec![true; n];
    let mut cov = DMatrix::zeros(n, n);
    for (k, &sv) in svd.singular_values.iter().enumerate() {
        if sv <= cutoff {
            for (i, f) in free.iter_mut().enumerate() {
                if v_t[(k, i)].abs() > 1e-6 {
                    *f = false;
                }
            }
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] += v_t[(k, i)] * v_t[(k, j)] / (sv * sv);
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] *= s2 * scale[i] * scale[j];
            if !free[i] || !free[j] {
                cov[(i, j)] = if i == j { f64::INFINITY } else { f64::NAN };
            }
        }
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_exactly() {
        let t: Vec<f64> = (0..30).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-t / 0.7).exp() + 0.5).collect();
        let sol = levenberg_marquardt(
            |p| {
                t.iter()
                    .zip(&y)
                    .map(|(t, y)| p[0] * (-t / p[1]).exp() + p[2] - y)
                    .collect()
            },
            &[1.0, 1.5, 0.0],
            &LmOptions::default(),
        )
        .unwrap();
        assert!(sol.converged());
        assert!((sol.params[0] - 3.0).abs() < 1e-9);
        assert!((sol.params[1] - 0.7).abs() < 1e-9);
        assert!((sol.params[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rosenbrock() {
        let sol = levenberg_marquardt(
            |p| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]],
            &[-1.2, 1.0],
            &LmOptions::default(),
        )
        .unwrap();
        assert!(sol.converged());
        assert!((sol.params[0] - 1.0).abs() < 1e-8);
        assert!((sol.params[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn linear_uncertainty_matches_textbook() {
        // y = a + b x with unit-variance residual pattern; compare with the
        // closed-form OLS covariance.
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let noise = [0.3, -0.2, 0.1, 0.4, -0.5, 0.2, -0.1, 0.0, 0.3, -0.4];
        let y: Vec<f64> = x.iter().zip(noise).map(|(x, e)| 1.0 + 2.0 * x + e).collect();
        let sol = levenberg_marquardt(
            |p| x.iter().zip(&y).map(|(x, y)| p[0] + p[1] * x - y).collect(),
            &[0.5, 1.0],
            &LmOptions::default(),
        )
        .unwrap();
        let n = x.len() as f64;
        let xm = x.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
        let s2 = sol.cost / (n - 2.0);
        let sb = (s2 / sxx).sqrt();
        let sa = (s2 * (1.0 / n + xm * xm / sxx)).sqrt();
        assert!((sol.uncertainties[1] - sb).abs() / sb < 1e-6);
        assert!((sol.uncertainties[0] - sa).abs() / sa < 1e-6);
    }

    #[test]
    fn unconstrained_parameter_has_infinite_uncertainty() {
        let sol = levenberg_marquardt(
            |p| vec![p[0] - 1.0, p[0] - 1.2, 0.0 * p[1]],
            &[0.0, 1.0],
            &LmOptions::default(),
        )
        .unwrap();
        assert!(sol.uncertainties[1].is_infinite());
        assert!(sol.uncertainties[0].is_finite());
    }

    #[test]
    fn bounds_are_respected_and_flagged() {
        let opts = LmOptions {
            lower: Some(vec![0.0]),
            ..LmOptions::default()
        };
        let sol = levenberg_marquardt(|p| vec![p[0] + 1.0], &[2.0], &opts).unwrap();
        assert!(sol.params[0] >= 0.0);
        assert!(sol.at_bound[0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(levenberg_marquardt(|_| vec![1.0], &[], &LmOptions::default()).is_err());
        assert!(levenberg_marquardt(|_| vec![], &[1.0], &LmOptions::default()).is_err());
        assert!(levenberg_marquardt(|p| vec![p[0]], &[f64::NAN], &LmOptions::default()).is_err());
    }
}
