use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative step size below which the iteration stops.
    pub xtol: f64,
    /// Max-norm of Jᵀr below which the iteration stops.
    pub gtol: f64,
    /// Scale the covariance by the reduced χ² (unknown noise level).
    pub scale_covariance: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            xtol: 1e-8,
            gtol: 1e-10,
            scale_covariance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// ‖r‖₂ at the optimum.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub condition_number: f64,
    pub n_residuals: usize,
}

impl FitResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.params[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.std_errors[i])
    }

    pub fn with_names<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        assert_eq!(names.len(), self.params.len());
        self.names = names.iter().map(|s| s.as_ref().to_owned()).collect();
        self
    }

    /// Maps parameters through an elementwise transform with derivative
    /// `deriv`, propagating the covariance to first order.
    pub(crate) fn transformed<F, D>(mut self, value: F, deriv: D) -> Self
    where
        F: Fn(usize, f64) -> f64,
        D: Fn(usize, f64) -> f64,
    {
        let d: Vec<f64> = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| deriv(i, *p))
            .collect();
        for (i, row) in self.covariance.iter_mut().enumerate() {
            for (j, c) in row.iter_mut().enumerate() {
                *c *= d[i] * d[j];
            }
        }
        self.params = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| value(i, *p))
            .collect();
        self.std_errors = (0..self.params.len())
            .map(|i| self.covariance[i][i].max(0.0).sqrt())
            .collect();
        self
    }
}

fn eval(residuals: &dyn Fn(&[f64]) -> Vec<f64>, p: &DVector<f64>) -> Option<DVector<f64>> {
    let r = residuals(p.as_slice());
    r.iter()
        .all(|v| v.is_finite())
        .then(|| DVector::from_vec(r))
}

fn jacobian(
    residuals: &dyn Fn(&[f64]) -> Vec<f64>,
    p: &DVector<f64>,
    m: usize,
) -> Result<DMatrix<f64>> {
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let h = 1e-6 * p[j].abs().max(1.0);
        let mut hi = p.clone();
        let mut lo = p.clone();
        hi[j] += h;
        lo[j] -= h;
        let col = match (eval(residuals, &hi), eval(residuals, &lo)) {
            (Some(a), Some(b)) => (a - b) / (2.0 * h),
            (Some(a), None) => (a - eval(residuals, p).ok_or(Error::SingularJacobian)?) / h,
            (None, Some(b)) => (eval(residuals, p).ok_or(Error::SingularJacobian)? - b) / h,
            (None, None) => return Err(Error::SingularJacobian),
        };
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Damped Gauss-Newton (Levenberg-Marquardt) minimisation of ½‖r(p)‖².
///
/// Each iteration first tries the undamped Gauss-Newton step and only adds
/// Marquardt damping λ·diag(JᵀJ) when that fails to lower the cost, so
/// problems that are linear in the parameters finish in one step.
pub fn nls_minimize<F>(residuals: F, init: &[f64], options: &LmOptions) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let residuals: &dyn Fn(&[f64]) -> Vec<f64> = &residuals;
    let mut p = DVector::from_column_slice(init);
    let mut r = eval(residuals, &p).ok_or_else(|| {
        Error::invalid("init", "residuals are not finite at the initial parameters")
    })?;
    let m = r.len();
    let n = p.len();
    if m < n {
        return Err(Error::Degenerate(format!(
            "{m} residuals for {n} parameters"
        )));
    }
    let mut cost = r.norm_squared();
    let mut lambda = 0.0_f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = jacobian(residuals, &p, m)?;
    let mut grad = jac.transpose() * &r;

    while iterations < options.max_iterations {
        iterations += 1;
        if grad.amax() < options.gtol {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let diag: DVector<f64> = jtj.diagonal().map(|d| if d > 0.0 { d } else { 1.0 });
        let mut accepted = false;
        let mut step_norm = f64::INFINITY;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * diag[i];
            }
            let step = a
                .clone()
                .cholesky()
                .map(|c| c.solve(&(-&grad)))
                .or_else(|| a.lu().solve(&(-&grad)));
            let Some(step) = step else {
                lambda = (lambda * 10.0).max(1e-3);
                continue;
            };
            step_norm = step.norm();
            let trial = &p + &step;
            match eval(residuals, &trial) {
                Some(rt) if rt.norm_squared() <= cost => {
                    p = trial;
                    cost = rt.norm_squared();
                    r = rt;
                    accepted = true;
                    lambda = if lambda < 1e-6 { 0.0 } else { lambda / 10.0 };
                    break;
                }
                _ => {
                    lambda = (lambda * 10.0).max(1e-3);
                    if step_norm <= options.xtol * (p.norm() + options.xtol) {
                        break;
                    }
                }
            }
        }
        if step_norm <= options.xtol * (p.norm() + options.xtol) {
            converged = true;
            if accepted {
                jac = jacobian(residuals, &p, m)?;
                grad = jac.transpose() * &r;
            }
            break;
        }
        if !accepted {
            break;
        }
        jac = jacobian(residuals, &p, m)?;
        grad = jac.transpose() * &r;
    }
    if !converged && grad.amax() < options.gtol {
        converged = true;
    }
    if !converged {
        return Err(Error::NotConverged { iterations });
    }

    let jtj = jac.transpose() * &jac;
    let inv = jtj.clone().try_inverse().ok_or(Error::SingularJacobian)?;
    let dof = m.saturating_sub(n).max(1) as f64;
    let s2 = if options.scale_covariance {
        cost / dof
    } else {
        1.0
    };
    let cov = inv * s2;
    let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), e| {
        (lo.min(e.abs()), hi.max(e.abs()))
    });
    let condition_number = if lo > 0.0 { hi / lo } else { f64::INFINITY };

    Ok(FitResult {
        names: (0..n).map(|i| format!("p{i}")).collect(),
        params: p.iter().copied().collect(),
        std_errors: (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
        covariance: (0..n)
            .map(|i| (0..n).map(|j| cov[(i, j)]).collect())
            .collect(),
        residual_norm: cost.sqrt(),
        converged,
        iterations,
        gradient_norm: grad.amax(),
        condition_number,
        n_residuals: m,
    })
}
