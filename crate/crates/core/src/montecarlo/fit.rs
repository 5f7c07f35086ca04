use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use ndarray_linalg::Solve;

use crate::error::{param, Error, Result};
use crate::linalg::{gram, gram_t, shift_diagonal, spd_solve};
use crate::replica::Loss;

const NEWTON_MAX_ITER: usize = 500;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerReport {
    pub iterations: usize,
    /// `‖∇objective‖_∞` at the returned weights.
    pub gradient_norm: f64,
    /// Steps that fell back to gradient descent.
    pub fallback_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedStudent {
    pub weights: Array1<f64>,
    pub lambda: f64,
    pub loss: Loss,
    pub report: OptimizerReport,
}

fn check_shapes(z: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<()> {
    if z.nrows() != y.len() {
        return Err(param(format!("{} feature rows but {} labels", z.nrows(), y.len())));
    }
    if z.nrows() == 0 || z.ncols() == 0 {
        return Err(param("empty design matrix"));
    }
    Ok(())
}

/// Minimizer of `½Σ(y − w·z)² + (λ/2)‖w‖²`, solved in whichever of the
/// primal (`P × P`) or dual (`N × N`) forms is smaller.
pub fn ridge_fit(z: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, lambda: f64) -> Result<TrainedStudent> {
    check_shapes(z, y)?;
    let (n, p) = z.dim();
    let singular = |_| Error::Singular(format!("ridge system not positive definite at λ = {lambda}"));
    let weights = if p > n {
        let mut k = gram(z, 1.0);
        shift_diagonal(&mut k, lambda);
        let a = spd_solve(&k, &y.to_owned()).map_err(singular)?;
        z.t().dot(&a)
    } else {
        let mut g = gram_t(z, 1.0);
        shift_diagonal(&mut g, lambda);
        spd_solve(&g, &z.t().dot(&y)).map_err(singular)?
    };
    let residual = z.dot(&weights) - y;
    let grad = z.t().dot(&residual) + lambda * &weights;
    let report = OptimizerReport { iterations: 1, gradient_norm: inf_norm(&grad), fallback_steps: 0 };
    Ok(TrainedStudent { weights, lambda, loss: Loss::Square, report })
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn logistic_terms(y: ArrayView1<'_, f64>, u: &Array1<f64>) -> (f64, Array1<f64>, Array1<f64>) {
    let mut value = 0.0;
    let mut d1 = Array1::zeros(u.len());
    let mut d2 = Array1::zeros(u.len());
    Zip::from(&mut d1).and(&mut d2).and(y).and(u).for_each(|g, h, &yi, &ui| {
        value += Loss::Logistic.value(yi, ui);
        *g = Loss::Logistic.derivative(yi, ui);
        *h = Loss::Logistic.curvature(yi, ui);
    });
    (value, d1, d2)
}

/// Minimizer of `Σ log(1 + e^{−y w·z}) + (λ/2)‖w‖²` by damped Newton with
/// Armijo backtracking, stopping at `‖∇‖_∞ ≤ tol`.
///
/// When `P > N` the minimizer lies in the row space of `Z`, so the iteration
/// runs on `w = Zᵀa` with the `N × N` kernel `K = ZZᵀ`; the Newton system is
/// then `(diag(ℓ'') K + λI) Δa = −(ℓ' + λa)`.
pub fn logistic_fit(z: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, lambda: f64, tol: f64) -> Result<TrainedStudent> {
    check_shapes(z, y)?;
    if !(lambda > 0.0) {
        return Err(param("logistic fit needs λ > 0"));
    }
    if !(tol > 0.0) {
        return Err(param("tolerance must be positive"));
    }
    let (n, p) = z.dim();
    let (weights, report) = if p > n { newton_kernel(z, y, lambda, tol)? } else { newton_primal(z, y, lambda, tol)? };
    Ok(TrainedStudent { weights, lambda, loss: Loss::Logistic, report })
}

/// Backtracking along `x + t·dx` where the scores move as `u + t·du`.
/// `objective(t)` returns the objective at step `t`. Returns the accepted
/// step, or `None` if no decrease was found.
fn backtrack(objective: impl Fn(f64) -> f64, current: f64, slope: f64) -> Option<f64> {
    let mut t = 1.0;
    for _ in 0..60 {
        let trial = objective(t);
        if trial.is_finite() && trial <= current + ARMIJO * t * slope {
            return Some(t);
        }
        // Near the optimum the decrease drops below rounding; accept a full
        // step whose change is invisible at working precision.
        if t == 1.0 && trial.is_finite() && (trial - current).abs() <= 1e-13 * (1.0 + current.abs()) {
            return Some(t);
        }
        t *= 0.5;
    }
    None
}

fn newton_kernel(
    z: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
    tol: f64,
) -> Result<(Array1<f64>, OptimizerReport)> {
    let n = z.nrows();
    let k = gram(z, 1.0);
    let mut a = Array1::<f64>::zeros(n);
    let mut u = Array1::<f64>::zeros(n);
    let mut fallback_steps = 0;
    for it in 0..NEWTON_MAX_ITER {
        let (loss, d1, d2) = logistic_terms(y, &u);
        let r = &d1 + &(lambda * &a);
        let gnorm = inf_norm(&z.t().dot(&r));
        if gnorm <= tol {
            let report = OptimizerReport { iterations: it, gradient_norm: gnorm, fallback_steps };
            return Ok((z.t().dot(&a), report));
        }
        let objective = loss + 0.5 * lambda * a.dot(&u);
        let mut system: Array2<f64> = &k * &d2.view().insert_axis(ndarray::Axis(1));
        shift_diagonal(&mut system, lambda);
        let newton = system.solve(&r.mapv(|x| -x)).ok().filter(|d| d.iter().all(|x| x.is_finite()));
        let step = |da: Array1<f64>| -> Option<(Array1<f64>, Array1<f64>)> {
            let du = k.dot(&da);
            let slope = r.dot(&du);
            if !(slope < 0.0) {
                return None;
            }
            let eval = |t: f64| {
                let ut = &u + &(t * &du);
                let at = &a + &(t * &da);
                y.iter().zip(&ut).map(|(&yi, &ui)| Loss::Logistic.value(yi, ui)).sum::<f64>() + 0.5 * lambda * at.dot(&ut)
            };
            let t = backtrack(eval, objective, slope)?;
            Some((&a + &(t * &da), &u + &(t * &du)))
        };
        let accepted = match newton.and_then(&step) {
            Some(x) => Some(x),
            None => {
                fallback_steps += 1;
                step(r.mapv(|x| -x))
            }
        };
        match accepted {
            Some((na, nu)) => {
                a = na;
                u = nu;
            }
            None => return Err(Error::Convergence { iterations: it, residual: gnorm }),
        }
    }
    let (_, d1, _) = logistic_terms(y, &u);
    let gnorm = inf_norm(&z.t().dot(&(&d1 + &(lambda * &a))));
    Err(Error::Convergence { iterations: NEWTON_MAX_ITER, residual: gnorm })
}

fn newton_primal(
    z: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
    tol: f64,
) -> Result<(Array1<f64>, OptimizerReport)> {
    let p = z.ncols();
    let mut w = Array1::<f64>::zeros(p);
    let mut u = Array1::<f64>::zeros(z.nrows());
    let mut fallback_steps = 0;
    for it in 0..NEWTON_MAX_ITER {
        let (loss, d1, d2) = logistic_terms(y, &u);
        let grad = z.t().dot(&d1) + lambda * &w;
        let gnorm = inf_norm(&grad);
        if gnorm <= tol {
            return Ok((w, OptimizerReport { iterations: it, gradient_norm: gnorm, fallback_steps }));
        }
        let objective = loss + 0.5 * lambda * w.dot(&w);
        let scaled = &z * &d2.mapv(f64::sqrt).insert_axis(ndarray::Axis(1));
        let mut hess = gram_t(scaled.view(), 1.0);
        shift_diagonal(&mut hess, lambda);
        let newton = spd_solve(&hess, &grad.mapv(|x| -x)).ok().filter(|d| d.iter().all(|x| x.is_finite()));
        let step = |dw: Array1<f64>| -> Option<(Array1<f64>, Array1<f64>)> {
            let slope = grad.dot(&dw);
            if !(slope < 0.0) {
                return None;
            }
            let du = z.dot(&dw);
            let eval = |t: f64| {
                let wt = &w + &(t * &dw);
                y.iter().zip(&u + &(t * &du)).map(|(&yi, ui)| Loss::Logistic.value(yi, ui)).sum::<f64>()
                    + 0.5 * lambda * wt.dot(&wt)
            };
            let t = backtrack(eval, objective, slope)?;
            Some((&w + &(t * &dw), &u + &(t * &du)))
        };
        let accepted = match newton.and_then(&step) {
            Some(x) => Some(x),
            None => {
                fallback_steps += 1;
                step(grad.mapv(|x| -x))
            }
        };
        match accepted {
            Some((nw, nu)) => {
                w = nw;
                u = nu;
            }
            None => return Err(Error::Convergence { iterations: it, residual: gnorm }),
        }
    }
    let (_, d1, _) = logistic_terms(y, &u);
    let gnorm = inf_norm(&(z.t().dot(&d1) + lambda * &w));
    Err(Error::Convergence { iterations: NEWTON_MAX_ITER, residual: gnorm })
}
