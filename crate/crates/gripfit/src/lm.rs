//! Box-constrained damped least squares (projected Levenberg–Marquardt).
//!
//! Minimizes `½ ‖r(x)‖²` subject to `lo <= x <= hi`. Steps solve
//! `(JᵀJ + λI) Δ = −Jᵀr` and are clamped onto the box; acceptance is by
//! strict cost decrease. Convergence uses the projected gradient, which is
//! zero at a bound-constrained stationary point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the projected gradient norm.
    pub gradient_tolerance: f64,
    pub damping_init: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            gradient_tolerance: 1e-9,
            damping_init: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: DVector<f64>,
    /// Accepted-step energy (`‖r‖²`) sequence, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

fn project(x: &mut DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn projected_gradient(
    g: &DVector<f64>,
    x: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> f64 {
    let eps = 1e-12;
    let mut sum = 0.0;
    for i in 0..x.len() {
        if hi[i] - lo[i] < eps {
            continue; // pinned variable
        }
        let gi = if x[i] <= lo[i] + eps {
            g[i].min(0.0)
        } else if x[i] >= hi[i] - eps {
            g[i].max(0.0)
        } else {
            g[i]
        };
        sum += gi * gi;
    }
    sum.sqrt()
}

/// Run the projected LM loop. `residual` and `jacobian` are evaluated at
/// feasible points only. Non-convergence within the iteration budget is not
/// an error; the best iterate is returned with `converged = false`.
pub fn minimize(
    residual: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    jacobian: &dyn Fn(&DVector<f64>) -> DMatrix<f64>,
    x0: DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    opts: &LmOptions,
) -> Result<LmOutcome> {
    let n = x0.len();
    let mut x = x0;
    project(&mut x, lo, hi);

    let mut r = residual(&x);
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::NonFiniteEnergy);
    }

    let mut damping = opts.damping_init;
    let mut history = vec![cost];
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let j = jacobian(&x);
        let g = j.transpose() * &r;
        grad_norm = projected_gradient(&g, &x, lo, hi);
        if grad_norm < opts.gradient_tolerance {
            converged = true;
            break;
        }

        // Freeze variables pinned at a bound with the gradient pushing
        // outward; stepping only in the free subspace keeps the Newton
        // contraction near constrained optima.
        let eps = 1e-12;
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                if hi[i] - lo[i] < eps {
                    return false;
                }
                if x[i] <= lo[i] + eps && g[i] > 0.0 {
                    return false;
                }
                if x[i] >= hi[i] - eps && g[i] < 0.0 {
                    return false;
                }
                true
            })
            .collect();
        if free.is_empty() {
            break;
        }
        let j_free = j.select_columns(free.iter());
        let g_free = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
        let jtj = j_free.transpose() * &j_free;

        let mut accepted = false;
        // Retry with stronger damping until a step is accepted or the budget runs out.
        while iterations <= opts.max_iterations {
            let mut system = jtj.clone();
            for i in 0..free.len() {
                system[(i, i)] += damping;
            }
            let step_free = match system.cholesky() {
                Some(chol) => chol.solve(&(-&g_free)),
                None => {
                    damping *= opts.damping_increase;
                    iterations += 1;
                    continue;
                }
            };
            let mut candidate = x.clone();
            for (slot, &i) in free.iter().enumerate() {
                candidate[i] += step_free[slot];
            }
            project(&mut candidate, lo, hi);
            let r_new = residual(&candidate);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new < cost {
                x = candidate;
                r = r_new;
                cost = cost_new;
                history.push(cost);
                damping = (damping * opts.damping_decrease).max(1e-12);
                accepted = true;
                break;
            }
            damping *= opts.damping_increase;
            iterations += 1;
            if damping > 1e14 {
                break;
            }
        }
        if !accepted {
            // No acceptable step at any damping: we are at a (projected)
            // stationary point up to numerical resolution.
            break;
        }
    }

    if !converged {
        // One more gradient check at the final iterate.
        let j = jacobian(&x);
        let g = j.transpose() * &r;
        grad_norm = projected_gradient(&g, &x, lo, hi);
        converged = grad_norm < opts.gradient_tolerance;
    }

    Ok(LmOutcome {
        x,
        cost_history: history,
        iterations,
        converged,
        gradient_norm: grad_norm,
    })
}
