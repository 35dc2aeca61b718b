//! Damped Gauss-Newton (Levenberg-Marquardt) least squares with a
//! central-difference Jacobian and box constraints by projection.

use serde::Serialize;

use super::models::FitModel;
use super::AnalysisError;
use crate::measurement::Trace;

pub const MAX_ITERATIONS: usize = 500;
pub const SSE_REL_TOL: f64 = 1e-10;
pub const STEP_TOL: f64 = 1e-10;

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;
/// Relative size below which a normal-matrix diagonal counts as zero.
const DIAG_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Linearized standard errors scaled by the reduced chi-square; zero
    /// for fixed parameters.
    pub stderr: Vec<f64>,
    /// (Weighted) residual sum of squares at `params`.
    pub sse: f64,
    pub converged: bool,
    pub iterations: usize,
    pub weighted: bool,
    /// Free parameters whose Jacobian column vanishes at `params`; their
    /// stderr is infinite.
    pub unconstrained: Vec<&'static str>,
    /// SSE after every accepted step, starting with the initial value.
    pub sse_history: Vec<f64>,
}

impl FitResult {
    pub fn reduced_chi_square(&self, n_points: usize, n_free: usize) -> f64 {
        self.sse / (n_points.saturating_sub(n_free).max(1)) as f64
    }
}

struct Problem<'a> {
    model: &'a FitModel,
    x: &'a [f64],
    y: &'a [f64],
    inv_sigma: Option<Vec<f64>>,
    free: Vec<usize>,
}

impl Problem<'_> {
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for i in 0..self.x.len() {
            let r = self.y[i] - self.model.eval(self.x[i], p);
            out[i] = match &self.inv_sigma {
                Some(w) => r * w[i],
                None => r,
            };
        }
    }

    fn sse(&self, p: &[f64], work: &mut [f64]) -> f64 {
        self.residuals(p, work);
        work.iter().map(|r| r * r).sum()
    }

    /// Jacobian of the model (not the residual) over free parameters,
    /// row-major `n_points x n_free`, with weights applied.
    fn jacobian(&self, p: &[f64]) -> Vec<f64> {
        let nf = self.free.len();
        let mut jac = vec![0.0; self.x.len() * nf];
        let mut grad = vec![0.0; p.len()];
        for i in 0..self.x.len() {
            self.model.gradient(self.x[i], p, 1.0, &mut grad);
            let w = self.inv_sigma.as_ref().map_or(1.0, |w| w[i]);
            for (k, &j) in self.free.iter().enumerate() {
                jac[i * nf + k] = grad[j] * w;
            }
        }
        jac
    }
}

/// Cholesky solve of a small symmetric positive definite system in place.
/// Returns `None` when the matrix is not positive definite.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s.is_nan() || s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub(crate) fn spd_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, n)?;
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = cholesky_solve(&l, n, &e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Some(inv)
}

fn normal_equations(jac: &[f64], r: &[f64], nf: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jtj = vec![0.0; nf * nf];
    let mut jtr = vec![0.0; nf];
    for (i, ri) in r.iter().enumerate() {
        let row = &jac[i * nf..(i + 1) * nf];
        for a in 0..nf {
            jtr[a] += row[a] * ri;
            for b in 0..=a {
                jtj[a * nf + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..nf {
        for b in 0..a {
            jtj[b * nf + a] = jtj[a * nf + b];
        }
    }
    (jtj, jtr)
}

/// Fits `model` to `trace` starting at `init`. Uses `1/sigma` weights when
/// every sigma is positive, unweighted residuals when all are zero.
pub fn fit(model: &FitModel, trace: &Trace, init: &[f64]) -> Result<FitResult, AnalysisError> {
    model.validate()?;
    let n_params = model.kind.n_params();
    if init.len() != n_params {
        return Err(AnalysisError::ParameterCount {
            expected: n_params,
            got: init.len(),
        });
    }
    for (i, &v) in init.iter().enumerate() {
        if !v.is_finite() || v < model.lower[i] || v > model.upper[i] {
            return Err(AnalysisError::InitOutOfBounds {
                name: model.kind.param_names()[i],
                value: v,
            });
        }
    }
    let inv_sigma = if trace.has_sigma() {
        Some(trace.sigma.iter().map(|s| 1.0 / s).collect())
    } else if trace.sigma.iter().all(|&s| s == 0.0) {
        None
    } else {
        return Err(AnalysisError::MixedSigma);
    };
    let free: Vec<usize> = (0..n_params).filter(|&i| model.free[i]).collect();
    let nf = free.len();
    let n = trace.len();
    if n < nf {
        return Err(AnalysisError::TooFewPoints { needed: nf, got: n });
    }
    let weighted = inv_sigma.is_some();
    let problem = Problem {
        model,
        x: &trace.abscissa,
        y: &trace.signal,
        inv_sigma,
        free,
    };

    let mut p = init.to_vec();
    let mut r = vec![0.0; n];
    let mut work = vec![0.0; n];
    problem.residuals(&p, &mut r);
    let mut sse: f64 = r.iter().map(|v| v * v).sum();
    let mut history = vec![sse];
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        if sse == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let jac = problem.jacobian(&p);
        let (jtj, jtr) = normal_equations(&jac, &r, nf);
        let max_diag = (0..nf).map(|k| jtj[k * nf + k]).fold(0.0, f64::max);
        if max_diag == 0.0 {
            converged = true;
            break;
        }
        let floor = DIAG_FLOOR * max_diag;

        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = jtj.clone();
            for k in 0..nf {
                damped[k * nf + k] += lambda * jtj[k * nf + k].max(floor);
            }
            let Some(l) = cholesky(&damped, nf) else {
                lambda *= 10.0;
                continue;
            };
            let step = cholesky_solve(&l, nf, &jtr);
            let mut candidate = p.clone();
            for (k, &j) in problem.free.iter().enumerate() {
                candidate[j] += step[k];
            }
            model.project(&mut candidate);
            let new_sse = problem.sse(&candidate, &mut work);
            if new_sse.is_finite() && new_sse < sse {
                let step_norm = problem
                    .free
                    .iter()
                    .map(|&j| ((candidate[j] - p[j]) / p[j].abs().max(1.0)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let rel_decrease = (sse - new_sse) / sse;
                p = candidate;
                sse = new_sse;
                std::mem::swap(&mut r, &mut work);
                history.push(sse);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_decrease < SSE_REL_TOL || step_norm < STEP_TOL {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // No descent direction left at any damping: a stationary point
            // to within rounding.
            converged = true;
            break;
        }
    }

    let (stderr, unconstrained) = standard_errors(&problem, &p, sse, n)?;
    Ok(FitResult {
        params: p,
        stderr,
        sse,
        converged,
        iterations,
        weighted,
        unconstrained,
        sse_history: history,
    })
}

fn standard_errors(
    problem: &Problem<'_>,
    p: &[f64],
    sse: f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<&'static str>), AnalysisError> {
    let names = problem.model.kind.param_names();
    let nf = problem.free.len();
    let jac = problem.jacobian(p);
    let (jtj, _) = normal_equations(&jac, &vec![0.0; n], nf);
    let max_diag = (0..nf).map(|k| jtj[k * nf + k]).fold(0.0, f64::max);
    let (live, dead): (Vec<usize>, Vec<usize>) =
        (0..nf).partition(|&k| jtj[k * nf + k] > DIAG_FLOOR * max_diag);
    if live.is_empty() {
        return Err(AnalysisError::SingularNormalMatrix {
            name: names[problem.free[0]],
        });
    }
    let m = live.len();
    let mut reduced = vec![0.0; m * m];
    for (a, &ka) in live.iter().enumerate() {
        for (b, &kb) in live.iter().enumerate() {
            reduced[a * m + b] = jtj[ka * nf + kb];
        }
    }
    let cov = spd_inverse(&reduced, m).ok_or_else(|| {
        // Report the parameter with the smallest pivot-free diagonal share.
        let worst = live
            .iter()
            .min_by(|&&a, &&b| jtj[a * nf + a].total_cmp(&jtj[b * nf + b]))
            .copied()
            .unwrap_or(0);
        AnalysisError::SingularNormalMatrix {
            name: names[problem.free[worst]],
        }
    })?;
    let dof = n.saturating_sub(nf).max(1) as f64;
    let s2 = sse / dof;
    let mut stderr = vec![0.0; p.len()];
    for (a, &k) in live.iter().enumerate() {
        stderr[problem.free[k]] = (cov[a * m + a] * s2).max(0.0).sqrt();
    }
    let mut unconstrained = Vec::new();
    for &k in &dead {
        stderr[problem.free[k]] = f64::INFINITY;
        unconstrained.push(names[problem.free[k]]);
    }
    Ok((stderr, unconstrained))
}
