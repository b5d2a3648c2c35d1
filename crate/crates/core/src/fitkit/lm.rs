use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::models::ModelSpec;
use super::{FitError, FitResult};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Parameters held at their initial value.
    pub fixed: Vec<bool>,
    pub max_iterations: usize,
    pub lambda0: f64,
    /// Multiply the covariance by the reduced χ².
    pub scale_covariance: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fixed: Vec::new(),
            max_iterations: 500,
            lambda0: 1e-3,
            scale_covariance: false,
        }
    }
}

impl FitOptions {
    pub fn with_fixed(mut self, fixed: Vec<bool>) -> Self {
        self.fixed = fixed;
        self
    }
}

/// Poisson weights `1/max(y, 1)`.
pub fn poisson_weights(y: &[f64]) -> Vec<f64> {
    y.iter().map(|&v| 1.0 / v.max(1.0)).collect()
}

const REL_CHI2_TOL: f64 = 1e-9;
const REL_STEP_TOL: f64 = 1e-10;
const CONSECUTIVE: usize = 3;
const LAMBDA_MAX: f64 = 1e20;
/// Smallest eigenvalue of the correlation-scaled normal matrix, relative to
/// the largest, below which the problem is called rank deficient.
const RANK_TOL: f64 = 1e-12;

fn chi2_of(y: &[f64], w: &[f64], f: &[f64]) -> f64 {
    y.iter()
        .zip(f)
        .zip(w)
        .map(|((yi, fi), wi)| wi * (yi - fi) * (yi - fi))
        .sum()
}

/// Normal matrix `JᵀWJ` and gradient `JᵀW(y − f)` over the free columns.
fn normal_equations(
    jac: &DMatrix<f64>,
    free: &[usize],
    y: &[f64],
    w: &[f64],
    f: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let k = free.len();
    let mut a = DMatrix::zeros(k, k);
    let mut g = DVector::zeros(k);
    for i in 0..y.len() {
        let r = y[i] - f[i];
        for (u, &pu) in free.iter().enumerate() {
            let ju = w[i] * jac[(i, pu)];
            if ju == 0.0 {
                continue;
            }
            g[u] += ju * r;
            for (v, &pv) in free.iter().enumerate().skip(u) {
                a[(u, v)] += ju * jac[(i, pv)];
            }
        }
    }
    for u in 0..k {
        for v in 0..u {
            a[(u, v)] = a[(v, u)];
        }
    }
    (a, g)
}

/// Names of the parameters that take part in a (near) null direction of
/// the normal matrix, or `None` if it is well conditioned.
fn rank_deficiency(a: &DMatrix<f64>, free: &[usize], names: &[String]) -> Option<Vec<String>> {
    let k = free.len();
    let dead: Vec<String> = (0..k)
        .filter(|&u| !(a[(u, u)] > 0.0))
        .map(|u| names[free[u]].clone())
        .collect();
    if !dead.is_empty() {
        return Some(dead);
    }
    let d: Vec<f64> = (0..k).map(|u| a[(u, u)].sqrt()).collect();
    let scaled = DMatrix::from_fn(k, k, |u, v| a[(u, v)] / (d[u] * d[v]));
    let eig = SymmetricEigen::new(scaled);
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))?;
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    if lmin > RANK_TOL * lmax {
        return None;
    }
    let v = eig.eigenvectors.column(imin);
    let vmax = v.iter().map(|c| c.abs()).fold(0.0, f64::max);
    Some(
        (0..k)
            .filter(|&u| v[u].abs() >= 0.3 * vmax)
            .map(|u| names[free[u]].clone())
            .collect(),
    )
}

/// Damped least squares (Levenberg–Marquardt with Marquardt's diagonal
/// scaling) minimizing `Σ w·(y − f(x; p))²`.
///
/// λ starts at `lambda0`, is divided by 10 after an accepted step and
/// multiplied by 10 after a rejected one. Steps that leave the model domain
/// are rejected. The fit has converged once three consecutive iterations
/// show a relative χ² decrease below 1e-9 or a relative step below 1e-10.
pub fn lm_fit(
    model: &ModelSpec,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    initial: &[f64],
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    let m = model.n_params();
    let names = model.param_names();
    if initial.len() != m {
        return Err(FitError::Input(format!(
            "model takes {m} parameters, {} given",
            initial.len()
        )));
    }
    if x.len() != y.len() || x.len() != w.len() {
        return Err(FitError::Input("x, y and weights differ in length".into()));
    }
    if y.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(FitError::Input("data contain non-finite values".into()));
    }
    if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(FitError::Input("weights must be positive and finite".into()));
    }
    let fixed = if options.fixed.is_empty() {
        vec![false; m]
    } else if options.fixed.len() == m {
        options.fixed.clone()
    } else {
        return Err(FitError::Input("fixed-parameter mask has the wrong length".into()));
    };
    let free: Vec<usize> = (0..m).filter(|&j| !fixed[j]).collect();
    if free.is_empty() {
        return Err(FitError::Input("no free parameters".into()));
    }
    if x.len() < free.len() {
        return Err(FitError::Input(format!(
            "{} data points for {} free parameters",
            x.len(),
            free.len()
        )));
    }
    model.check_grid(x)?;
    if !model.in_domain(initial) {
        return Err(FitError::Input("initial parameters lie outside the model domain".into()));
    }

    let mut p = initial.to_vec();
    let mut f = model.eval(x, &p);
    let mut chi2 = chi2_of(y, w, &f);
    let mut jac = model.jacobian(x, &p);
    let (mut a, mut g) = normal_equations(&jac, &free, y, w, &f);
    if let Some(params) = rank_deficiency(&a, &free, &names) {
        return Err(FitError::RankDeficient { params });
    }

    let mut lambda = options.lambda0;
    let mut quiet = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        if chi2 == 0.0 {
            converged = true;
            break;
        }
        let mut damped = a.clone();
        for u in 0..free.len() {
            damped[(u, u)] += lambda * a[(u, u)];
        }
        let step = damped.cholesky().map(|c| c.solve(&g));
        let Some(step) = step else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                break;
            }
            continue;
        };
        let p_norm: f64 = free.iter().map(|&j| p[j] * p[j]).sum::<f64>().sqrt();
        let small_step = step.norm() <= REL_STEP_TOL * (p_norm + REL_STEP_TOL);
        let mut trial = p.clone();
        for (u, &j) in free.iter().enumerate() {
            trial[j] += step[u];
        }
        let accepted = if model.in_domain(&trial) {
            let f_trial = model.eval(x, &trial);
            let chi2_trial = chi2_of(y, w, &f_trial);
            if chi2_trial.is_finite() && chi2_trial <= chi2 {
                let rel_decrease = (chi2 - chi2_trial) / chi2;
                if rel_decrease < REL_CHI2_TOL || small_step {
                    quiet += 1;
                } else {
                    quiet = 0;
                }
                p = trial;
                f = f_trial;
                chi2 = chi2_trial;
                true
            } else {
                false
            }
        } else {
            false
        };
        if accepted {
            lambda = (lambda / 10.0).max(1e-15);
            if quiet >= CONSECUTIVE {
                converged = true;
                break;
            }
            jac = model.jacobian(x, &p);
            (a, g) = normal_equations(&jac, &free, y, w, &f);
        } else {
            if small_step {
                quiet += 1;
                if quiet >= CONSECUTIVE {
                    converged = true;
                    break;
                }
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                // No descent direction left at machine precision.
                converged = true;
                break;
            }
        }
    }

    jac = model.jacobian(x, &p);
    let (a, _) = normal_equations(&jac, &free, y, w, &f);
    if let Some(params) = rank_deficiency(&a, &free, &names) {
        return Err(FitError::RankDeficient { params });
    }
    let inv = a
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| a.clone().try_inverse())
        .ok_or_else(|| FitError::RankDeficient {
            params: free.iter().map(|&j| names[j].clone()).collect(),
        })?;
    let dof = x.len() - free.len();
    let reduced_chi2 = chi2 / dof.max(1) as f64;
    let scale = if options.scale_covariance {
        reduced_chi2
    } else {
        1.0
    };
    let mut covariance = vec![vec![0.0; m]; m];
    for (u, &ju) in free.iter().enumerate() {
        for (v, &jv) in free.iter().enumerate() {
            // Symmetrize against round-off in the inverse.
            covariance[ju][jv] = 0.5 * (inv[(u, v)] + inv[(v, u)]) * scale;
        }
    }
    let std_errors = (0..m).map(|j| covariance[j][j].max(0.0).sqrt()).collect();
    Ok(FitResult {
        names,
        params: p,
        std_errors,
        covariance,
        chi2,
        reduced_chi2,
        dof,
        n_iterations: iterations,
        converged,
        fixed,
    })
}

/// Linear least squares for a model that is linear in the free parameters,
/// solved directly from the normal equations. Used to cross-check `lm_fit`.
pub fn linear_solve(
    model: &ModelSpec,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    params: &[f64],
    free_mask: &[bool],
) -> Result<Vec<f64>, FitError> {
    let free: Vec<usize> = (0..params.len()).filter(|&j| free_mask[j]).collect();
    let mut base = params.to_vec();
    for &j in &free {
        base[j] = 0.0;
    }
    let f0 = model.eval(x, &base);
    let jac = model.jacobian(x, &base);
    let (a, g) = normal_equations(&jac, &free, y, w, &f0);
    let sol = a
        .cholesky()
        .ok_or_else(|| FitError::RankDeficient {
            params: free.iter().map(|&j| model.param_names()[j].clone()).collect(),
        })?
        .solve(&g);
    let mut out = base;
    for (u, &j) in free.iter().enumerate() {
        out[j] = sol[u];
    }
    Ok(out)
}
