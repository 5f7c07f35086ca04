use crate::blockspectra::{solve_block_resolvent_with, BlockSpectrumSpec, ResolventVariant};
use crate::error::{param, Error, Result};

use super::{BlockModel, HatParams, OrderParams};

const RESOLVENT_TOL: f64 = 1e-13;
const RESOLVENT_MAX_ITER: usize = 100_000;

/// Task-independent half of the saddle point, with the default resolvent
/// variant.
pub fn entropic_update(hats: &HatParams, model: &BlockModel, lambda: f64, gamma: f64) -> Result<OrderParams> {
    entropic_update_with(hats, model, lambda, gamma, ResolventVariant::default())
}

/// Maps the conjugates to new order parameters through the resolvent
/// `g(z) = (1/D) tr (z − M)⁻¹` of `M = V̂^{1/2} FᵀF V̂^{1/2}/P` evaluated at the
/// single argument `z = −L`, `L = λ + V̂_w`. With `Ω` the resolvent's auxiliary
/// scalar,
///
/// ```text
/// V_s,i = −φᵢ qᵢ/Ω                    m_s,i = m̂_s,i σ_β,i V_s,i
/// V_w   = (1 − γ)/L − γ g(−L)
/// q_s,i = −Σⱼ cⱼ ∂V_s,i/∂V̂ⱼ − q̂_w ∂V_s,i/∂L
/// q_w   = −γ Σⱼ cⱼ ∂V_s,j/∂L − q̂_w ∂V_w/∂L,     cⱼ = m̂_s,j² σ_β,j + q̂_s,j
/// ```
///
/// The `q` equations are the second-order terms of the log-determinant in
/// the entropic potential, so all derivatives come from the resolvent's
/// linearization.
pub fn entropic_update_with(
    hats: &HatParams,
    model: &BlockModel,
    lambda: f64,
    gamma: f64,
    variant: ResolventVariant,
) -> Result<OrderParams> {
    let k = model.len();
    if hats.v_hat.len() != k || hats.m_hat.len() != k || hats.q_hat.len() != k {
        return Err(param("hat parameters do not match the number of blocks"));
    }
    if hats.v_hat.iter().any(|&v| !(v >= 0.0)) {
        return Err(param("V̂_s entries must be non-negative"));
    }
    let l = lambda + hats.v_hat_w;
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::Singular(format!("λ + V̂_w = {l} is not positive")));
    }
    let phis = model.phis();
    let sb = model.sigma_beta();
    let spec = BlockSpectrumSpec::new(phis.clone(), hats.v_hat.clone(), gamma)?;
    let pt = solve_block_resolvent_with(&spec, -l, variant, RESOLVENT_TOL, RESOLVENT_MAX_ITER)?;
    let sens = pt.vhat_sensitivity(&spec);
    let (q, om) = (&pt.q_blocks, pt.omega);

    let v_s: Vec<f64> = (0..k).map(|i| -phis[i] * q[i] / om).collect();
    let v_w = (1.0 - gamma) / l - gamma * pt.g;
    // dL = −dz.
    let dvs_dl: Vec<f64> =
        (0..k).map(|i| phis[i] * (pt.dq_dz[i] / om - q[i] * pt.domega_dz / (om * om))).collect();
    let dvw_dl = -(1.0 - gamma) / (l * l) + gamma * pt.g_prime;
    let dvs_da = |i: usize, j: usize| -phis[i] * (sens.dq[i][j] / om - q[i] * sens.domega[j] / (om * om));

    let c: Vec<f64> = (0..k).map(|j| hats.m_hat[j].powi(2) * sb[j] + hats.q_hat[j]).collect();
    let m_s = (0..k).map(|i| hats.m_hat[i] * sb[i] * v_s[i]).collect();
    let q_s = (0..k)
        .map(|i| -(0..k).map(|j| c[j] * dvs_da(i, j)).sum::<f64>() - hats.q_hat_w * dvs_dl[i])
        .collect();
    let q_w = -gamma * (0..k).map(|j| c[j] * dvs_dl[j]).sum::<f64>() - hats.q_hat_w * dvw_dl;
    Ok(OrderParams { m_s, q_s, v_s, q_w, v_w })
}
