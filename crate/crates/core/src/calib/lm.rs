//! Levenberg–Marquardt for small dense least-squares problems in three
//! parameters, with a numeric Jacobian by central differences.
//!
//! This is deliberately minimal: the only client is the per-quadruplet light
//! position fit, which has three unknowns and six residuals, so the normal
//! equations are a 3×3 solve. Damping follows the classic schedule: multiply
//! by 10 on a rejected step, divide by 10 on an accepted one.

use nalgebra::{Matrix3, Vector3};

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the infinity norm of the gradient Jᵀr falls below this.
    pub gradient_tol: f64,
    pub initial_lambda: f64,
    /// Relative step for the central-difference Jacobian.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tol: 1e-10,
            initial_lambda: 1e-3,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub position: Vector3<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out or damping saturated before
    /// the gradient tolerance was met.
    pub converged: bool,
}

fn cost<const R: usize>(r: &[f64; R]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimize `||residuals(x)||²` over `x` starting from `init`.
///
/// Non-finite residuals at the starting point yield an unconverged outcome
/// with infinite objective; non-finite trial steps are rejected like any
/// uphill step.
pub fn minimize<const R: usize>(
    residuals: impl Fn(&Vector3<f64>) -> [f64; R],
    init: Vector3<f64>,
    opts: &LmOptions,
) -> LmOutcome {
    let mut x = init;
    let mut r = residuals(&x);
    let mut c = cost(&r);
    if !c.is_finite() {
        return LmOutcome {
            position: x,
            objective: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }

    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iterations {
        iterations = iter + 1;

        // Central-difference Jacobian, columns = parameters.
        let mut jac = [[0.0f64; 3]; R];
        for k in 0..3 {
            let h = opts.fd_step * x[k].abs().max(1.0);
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let rp = residuals(&xp);
            let rm = residuals(&xm);
            for (row, jrow) in jac.iter_mut().enumerate() {
                jrow[k] = (rp[row] - rm[row]) / (2.0 * h);
            }
        }

        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (row, jrow) in jac.iter().enumerate() {
            for a in 0..3 {
                jtr[a] += jrow[a] * r[row];
                for b in 0..3 {
                    jtj[(a, b)] += jrow[a] * jrow[b];
                }
            }
        }

        if jtr.amax() < opts.gradient_tol || c == 0.0 {
            converged = true;
            break;
        }

        // Damped step; escalate damping until a step is accepted or damping
        // saturates.
        let mut stepped = false;
        while lambda < 1e12 {
            let damped = jtj + Matrix3::identity() * lambda;
            let Some(delta) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = x + delta;
            let tr = residuals(&trial);
            let tc = cost(&tr);
            if tc.is_finite() && tc < c {
                x = trial;
                r = tr;
                c = tc;
                lambda = (lambda / 10.0).max(1e-12);
                stepped = true;
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            break;
        }
    }

    LmOutcome {
        position: x,
        objective: c,
        iterations,
        converged,
    }
}
