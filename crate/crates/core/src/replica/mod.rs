//! Asymptotic theory: the data model, the zero-temperature saddle-point
//! equations and the train/test error formulas.
//!
//! The student is `ŷ(x) = ŵ·σ(Fx/√D)/√P` trained by ℓ2-regularized ERM. In
//! the proportional limit all errors depend on four scalars
//!
//! ```text
//! ρ = Σ φᵢ σ_x,i σ_β,i
//! M = κ₁ Σ σ_x,i m_s,i
//! Q = κ₁² Σ σ_x,i q_s,i + κ★² q_w
//! V = κ₁² Σ σ_x,i V_s,i + κ★² V_w
//! ```
//!
//! which are fixed by iterating an energetic (loss-dependent) and an entropic
//! (spectral) update to a common fixed point; see [`solve_saddle_point`].

mod channel;
mod energetic;
mod entropic;
mod model;
mod saddle;

pub use channel::{
    normal_cdf, normal_pdf, proximal, proximal_residual, sigmoid, softplus, teacher_partition, Channel,
    ChannelKind, Loss,
};
pub use energetic::{channel_integrals, energetic_update, ChannelIntegrals};
pub use entropic::{entropic_update, entropic_update_with};
pub use model::{Block, BlockModel, Scenario};
pub use saddle::{solve_saddle_point, solve_saddle_point_from, SaddleProblem, SaddleSolution, SolverOptions};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussmoments::{default_quadrature, KappaSet};

/// Overlaps of the student with the teacher, per block, and the self-overlaps
/// of the readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderParams {
    pub m_s: Vec<f64>,
    pub q_s: Vec<f64>,
    pub v_s: Vec<f64>,
    pub q_w: f64,
    pub v_w: f64,
}

impl OrderParams {
    pub fn zeros(blocks: usize) -> Self {
        Self { m_s: vec![0.0; blocks], q_s: vec![0.0; blocks], v_s: vec![0.0; blocks], q_w: 0.0, v_w: 0.0 }
    }

    /// Starting point away from the trivial fixed point.
    pub fn initial(model: &BlockModel) -> Self {
        let b = model.blocks();
        Self {
            m_s: b.iter().map(|b| 0.1 * (b.phi * b.sigma_beta).sqrt()).collect(),
            q_s: b.iter().map(|b| b.phi).collect(),
            v_s: vec![1.0; b.len()],
            q_w: 1.0,
            v_w: 1.0,
        }
    }

    pub fn blocks(&self) -> usize {
        self.m_s.len()
    }

    pub(crate) fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.blocks() + 2);
        v.extend_from_slice(&self.m_s);
        v.extend_from_slice(&self.q_s);
        v.extend_from_slice(&self.v_s);
        v.push(self.q_w);
        v.push(self.v_w);
        v
    }

    pub(crate) fn unflatten(v: &[f64], blocks: usize) -> Self {
        Self {
            m_s: v[..blocks].to_vec(),
            q_s: v[blocks..2 * blocks].to_vec(),
            v_s: v[2 * blocks..3 * blocks].to_vec(),
            q_w: v[3 * blocks],
            v_w: v[3 * blocks + 1],
        }
    }

    /// Largest violation of `m_s,i² ≤ q_s,i φᵢ σ_β,i` in relative terms.
    pub fn cauchy_schwarz_excess(&self, model: &BlockModel) -> f64 {
        self.m_s
            .iter()
            .zip(&self.q_s)
            .zip(model.blocks())
            .map(|((m, q), b)| {
                let bound = q * b.phi * b.sigma_beta;
                (m * m - bound) / bound.max(f64::MIN_POSITIVE)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Conjugate variables at zero temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HatParams {
    pub m_hat: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub q_hat_w: f64,
    pub v_hat_w: f64,
}

/// The covariance summary feeding every error formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarStats {
    pub rho: f64,
    pub m: f64,
    pub q: f64,
    pub v: f64,
}

pub fn scalar_stats(order: &OrderParams, model: &BlockModel, kappas: &KappaSet) -> ScalarStats {
    let sx = model.sigma_x();
    let dot = |a: &[f64]| sx.iter().zip(a).map(|(s, x)| s * x).sum::<f64>();
    let k1 = kappas.kappa1;
    let ks2 = kappas.kappa_star * kappas.kappa_star;
    ScalarStats {
        rho: model.rho(),
        m: k1 * dot(&order.m_s),
        q: k1 * k1 * dot(&order.q_s) + ks2 * order.q_w,
        v: k1 * k1 * dot(&order.v_s) + ks2 * order.v_w,
    }
}

/// `c = (1 − 2Δ)√(2/(πρ))`, the correlation `E[y ν]/ρ` between a flipped sign
/// label and the teacher score ν.
pub(crate) fn flip_coefficient(rho: f64, delta: f64) -> f64 {
    (1.0 - 2.0 * delta) * (2.0 / (std::f64::consts::PI * rho)).sqrt()
}

/// Generalization error: half mean-square error for regression, probability
/// of disagreeing with the clean teacher sign for classification.
pub fn test_error(stats: &ScalarStats, channel: &Channel) -> Result<f64> {
    let ScalarStats { rho, m, q, .. } = *stats;
    if !channel.is_classification() {
        return Ok(0.5 * (rho + q - 2.0 * m));
    }
    if !(q > 0.0) {
        return Err(Error::Domain("classification error undefined for a zero student (Q = 0)".into()));
    }
    let cos = m / (rho * q).sqrt();
    if cos.abs() > 1.0 + 1e-8 {
        warn!("overlap ratio {cos} outside [-1, 1]; clamping");
    }
    Ok(cos.clamp(-1.0, 1.0).acos() / std::f64::consts::PI)
}

/// Training loss per sample, without the regularizer.
pub fn train_error(stats: &ScalarStats, channel: &Channel) -> Result<f64> {
    let ScalarStats { rho, m, q, v } = *stats;
    if !(v > -1.0) {
        return Err(Error::Domain(format!("V = {v} must exceed -1")));
    }
    let delta = channel.delta();
    let den = (1.0 + v).powi(2);
    match channel.kind() {
        ChannelKind::RegressionGaussian => Ok((0.5 * (rho + q - 2.0 * m) + 0.5 * delta) / den),
        ChannelKind::ClassificationSquare => {
            Ok((1.0 + q - 2.0 * flip_coefficient(rho, delta) * m) / (2.0 * den))
        }
        ChannelKind::ClassificationLogistic => energetic::logistic_train_loss(stats, channel, default_quadrature()),
    }
}
