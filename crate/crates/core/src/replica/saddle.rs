use serde::{Deserialize, Serialize};

use crate::blockspectra::ResolventVariant;
use crate::error::{param, Result};
use crate::gaussmoments::{kappa_constants, Activation, KappaSet};

use super::{
    energetic_update, entropic_update_with, scalar_stats, test_error, train_error, BlockModel, Channel, HatParams,
    OrderParams, ScalarStats,
};

/// A point of the learning problem in the proportional limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleProblem {
    pub model: BlockModel,
    pub channel: Channel,
    pub activation: Activation,
    /// `N/P`.
    pub alpha: f64,
    /// `D/P`.
    pub gamma: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub variant: ResolventVariant,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-9, max_iter: 10_000, variant: ResolventVariant::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub order: OrderParams,
    pub hats: HatParams,
    pub stats: ScalarStats,
    pub kappas: KappaSet,
    pub eps_g: f64,
    pub eps_t: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Damping in force when the iteration stopped.
    pub damping: f64,
}

const MIN_DAMPING: f64 = 0.05;
/// Consecutive sign changes of the residual increments that count as an
/// oscillation.
const OSCILLATION_RUN: usize = 6;

pub fn solve_saddle_point(problem: &SaddleProblem, options: &SolverOptions) -> Result<SaddleSolution> {
    solve_saddle_point_from(problem, options, None)
}

/// Damped iteration of `entropic ∘ energetic`, optionally warm-started.
/// Non-convergence is reported through `converged = false`; errors are
/// reserved for genuinely ill-posed points (for instance `λ + V̂_w ≤ 0`).
pub fn solve_saddle_point_from(
    problem: &SaddleProblem,
    options: &SolverOptions,
    init: Option<&OrderParams>,
) -> Result<SaddleSolution> {
    let SaddleProblem { model, channel, activation, alpha, gamma, lambda } = problem;
    if !(*alpha > 0.0) || !(*gamma > 0.0) {
        return Err(param("alpha = N/P and gamma = D/P must be positive"));
    }
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(param("damping must lie in (0, 1]"));
    }
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(param("tolerance and iteration cap must be positive"));
    }
    let kappas = kappa_constants(*activation, model.r())?;
    let blocks = model.len();
    let mut order = match init {
        Some(o) if o.blocks() == blocks => o.clone(),
        Some(_) => return Err(param("warm start has the wrong number of blocks")),
        None => OrderParams::initial(model),
    };

    let mut damping = options.damping;
    let mut residual = f64::INFINITY;
    let mut last_increment = 0.0;
    let mut alternations = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut hats;
    loop {
        iterations += 1;
        let stats = scalar_stats(&order, model, &kappas);
        hats = energetic_update(&stats, channel, *alpha, *gamma, model, &kappas)?;
        let next = entropic_update_with(&hats, model, *lambda, *gamma, options.variant)?;
        let old = order.flatten();
        let new = next.flatten();
        let change = old.iter().zip(&new).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change <= options.tol {
            order = next;
            residual = change;
            converged = true;
            break;
        }
        if residual.is_finite() {
            let increment = change - residual;
            if increment * last_increment < 0.0 {
                alternations += 1;
            } else {
                alternations = 0;
            }
            last_increment = increment;
            if alternations >= OSCILLATION_RUN && damping > MIN_DAMPING {
                damping = (0.5 * damping).max(MIN_DAMPING);
                alternations = 0;
            }
        }
        residual = change;
        let mixed: Vec<f64> = old.iter().zip(&new).map(|(a, b)| (1.0 - damping) * a + damping * b).collect();
        order = OrderParams::unflatten(&mixed, blocks);
        if iterations >= options.max_iter {
            break;
        }
    }

    let stats = scalar_stats(&order, model, &kappas);
    let (eps_g, eps_t) = if converged {
        (test_error(&stats, channel)?, train_error(&stats, channel)?)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(SaddleSolution { order, hats, stats, kappas, eps_g, eps_t, iterations, residual, converged, damping })
}
