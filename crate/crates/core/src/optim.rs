//! Unconstrained local minimisers used by the likelihood fit.
//!
//! BFGS with an Armijo backtracking line search is the workhorse; a
//! Nelder–Mead simplex takes over when the line search cannot make progress
//! (typically when the objective is flat or non-finite along the search
//! direction). Objectives signal infeasible points by returning a
//! non-finite value.

/// Stopping rules shared by both methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iterations: usize,
    /// Relative change in the objective between iterations.
    pub f_tolerance: f64,
    /// Euclidean norm of the gradient.
    pub g_tolerance: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            f_tolerance: 1e-8,
            g_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    FunctionTolerance,
    GradientTolerance,
    SimplexTolerance,
    MaxIterations,
    LineSearchFailed,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::FunctionTolerance
                | Termination::GradientTolerance
                | Termination::SimplexTolerance
        )
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// BFGS on the inverse Hessian.
///
/// `objective` returns `(f, ∇f)`. Steps are capped at `max_step` in the
/// infinity norm, which keeps log-scale parameters from jumping by many
/// orders of magnitude in one iteration.
pub fn bfgs<F>(objective: F, x0: &[f64], rule: StopRule, max_step: f64) -> Minimum
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x);
    if !f.is_finite() {
        return Minimum {
            x,
            f,
            iterations: 0,
            termination: Termination::LineSearchFailed,
        };
    }
    let mut h = identity(n);
    let mut fresh_hessian = true;
    let mut iterations = 0;
    while iterations < rule.max_iterations {
        if norm(&g) < rule.g_tolerance {
            return Minimum {
                x,
                f,
                iterations,
                termination: Termination::GradientTolerance,
            };
        }
        iterations += 1;
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&h[i], &g)).collect();
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            h = identity(n);
            fresh_hessian = true;
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        let largest = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut step = if largest > max_step { max_step / largest } else { 1.0 };

        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = objective(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope && gt.iter().all(|v| v.is_finite()) {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if fresh_hessian {
                return Minimum {
                    x,
                    f,
                    iterations,
                    termination: Termination::LineSearchFailed,
                };
            }
            h = identity(n);
            fresh_hessian = true;
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let f_old = f;
        x = x_new;
        f = f_new;
        g = g_new;
        if (f_old - f).abs() <= rule.f_tolerance * (f.abs() + rule.f_tolerance) {
            return Minimum {
                x,
                f,
                iterations,
                termination: Termination::FunctionTolerance,
            };
        }

        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if fresh_hessian {
                // scale the initial guess to the observed curvature
                let scale = sy / dot(&y, &y);
                for (i, row) in h.iter_mut().enumerate() {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[i] = scale;
                }
                fresh_hessian = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
    }
    Minimum {
        x,
        f,
        iterations,
        termination: Termination::MaxIterations,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row
        })
        .collect()
}

// H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Nelder–Mead simplex with the standard coefficients (1, 2, 0.5, 0.5).
///
/// Stops when the spread of objective values across the simplex falls below
/// `f_tolerance` relative to the best value.
pub fn nelder_mead<F>(objective: F, x0: &[f64], initial_step: f64, rule: StopRule) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = objective(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += initial_step;
        let fv = eval(&v);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    while iterations < rule.max_iterations * (n + 1) {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best.is_finite() && (worst - best).abs() <= rule.f_tolerance * (best.abs() + rule.f_tolerance) {
            termination = Termination::SimplexTolerance;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let reflected = along(-1.0);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = if fr < worst { along(-0.5) } else { along(0.5) };
            let fc = eval(&contracted);
            if fc < worst.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                let anchor = simplex[0].0.clone();
                for (v, fv) in simplex.iter_mut().skip(1) {
                    for (vi, ai) in v.iter_mut().zip(&anchor) {
                        *vi = ai + 0.5 * (*vi - ai);
                    }
                    *fv = eval(v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum {
        x,
        f,
        iterations,
        termination,
    }
}
