use crate::error::{param, Error, Result};
use crate::gaussmoments::{default_quadrature, KappaSet, Quadrature};

use super::channel::{flip_partition_derivative, proximal, teacher_partition, Channel, ChannelKind, Loss};
use super::{flip_coefficient, BlockModel, HatParams, ScalarStats};

/// Per-sample channel averages from which all hat variables follow:
///
/// ```text
/// v̂ = E Σ_y Z⁰ ℓ''(η)/(1 + Vℓ''(η))
/// m̂ = E Σ_y ∂_ω Z⁰ f
/// q̂ = E Σ_y Z⁰ f²,          f = (η − ω)/V = −ℓ'(η)
/// ```
///
/// with `ω = √Q ξ` for the student, `ω₀ = (M/√Q) ξ`, `V₀ = ρ − M²/Q` for the
/// teacher, and `ξ` standard normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelIntegrals {
    pub v_hat: f64,
    pub m_hat: f64,
    pub q_hat: f64,
}

pub fn channel_integrals(stats: &ScalarStats, channel: &Channel, quad: &Quadrature) -> Result<ChannelIntegrals> {
    let ScalarStats { rho, m, q, v } = *stats;
    if !(v > -1.0) {
        return Err(Error::Domain(format!("V = {v} must exceed -1")));
    }
    let delta = channel.delta();
    let den = 1.0 + v;
    Ok(match channel.kind() {
        ChannelKind::RegressionGaussian => ChannelIntegrals {
            v_hat: 1.0 / den,
            m_hat: 1.0 / den,
            q_hat: (rho + delta + q - 2.0 * m) / (den * den),
        },
        ChannelKind::ClassificationSquare => {
            let c = flip_coefficient(rho, delta);
            ChannelIntegrals { v_hat: 1.0 / den, m_hat: c / den, q_hat: (1.0 + q - 2.0 * c * m) / (den * den) }
        }
        ChannelKind::ClassificationLogistic => flip_channel_integrals(stats, delta, Loss::Logistic, quad)?,
    })
}

/// Teacher-side Gaussian split of the flip channel.
struct FlipGeometry {
    sqrt_q: f64,
    m_over_sqrt_q: f64,
    v0: f64,
}

fn flip_geometry(stats: &ScalarStats) -> Result<FlipGeometry> {
    let ScalarStats { rho, m, q, .. } = *stats;
    if !(q > 0.0) {
        return Err(Error::Domain("flip-channel integrals need Q > 0".into()));
    }
    // V₀ vanishes only for a student perfectly aligned with the teacher.
    let v0 = (rho - m * m / q).max(1e-14 * rho);
    Ok(FlipGeometry { sqrt_q: q.sqrt(), m_over_sqrt_q: m / q.sqrt(), v0 })
}

/// Generic quadrature for the label-flip channels under any loss.
pub(crate) fn flip_channel_integrals(
    stats: &ScalarStats,
    delta: f64,
    loss: Loss,
    quad: &Quadrature,
) -> Result<ChannelIntegrals> {
    let g = flip_geometry(stats)?;
    let channel = Channel::new(ChannelKind::ClassificationSquare, delta)?;
    let v = stats.v;
    let (mut v_hat, mut m_hat, mut q_hat) = (0.0, 0.0, 0.0);
    for (xi, w) in quad.standard_normal() {
        let omega = g.sqrt_q * xi;
        let omega0 = g.m_over_sqrt_q * xi;
        for y in [1.0, -1.0] {
            let z0 = teacher_partition(y, omega0, g.v0, &channel)?;
            let dz0 = flip_partition_derivative(y, omega0, g.v0, delta);
            let eta = proximal(y, omega, v, loss);
            let f = -loss.derivative(y, eta);
            let curv = loss.curvature(y, eta);
            v_hat += w * z0 * curv / (1.0 + v * curv);
            m_hat += w * dz0 * f;
            q_hat += w * z0 * f * f;
        }
    }
    if ![v_hat, m_hat, q_hat].iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical("non-finite channel integral".into()));
    }
    Ok(ChannelIntegrals { v_hat, m_hat, q_hat })
}

/// `E Σ_y Z⁰ ℓ(y, η)` for the logistic channel.
pub(crate) fn logistic_train_loss(stats: &ScalarStats, channel: &Channel, quad: &Quadrature) -> Result<f64> {
    let g = flip_geometry(stats)?;
    let mut total = 0.0;
    for (xi, w) in quad.standard_normal() {
        let omega = g.sqrt_q * xi;
        let omega0 = g.m_over_sqrt_q * xi;
        for y in [1.0, -1.0] {
            let z0 = teacher_partition(y, omega0, g.v0, channel)?;
            let eta = proximal(y, omega, stats.v, Loss::Logistic);
            total += w * z0 * Loss::Logistic.value(y, eta);
        }
    }
    if !total.is_finite() {
        return Err(Error::Numerical("non-finite logistic training loss".into()));
    }
    Ok(total)
}

/// Loss-dependent half of the saddle point: maps `(ρ, M, Q, V)` to the
/// conjugate variables. With `a = α/γ = N/D`,
///
/// ```text
/// V̂_s,i = a κ₁² σ_x,i v̂     m̂_s,i = a κ₁ σ_x,i m̂     q̂_s,i = a κ₁² σ_x,i q̂
/// V̂_w   = α κ★² v̂           q̂_w   = α κ★² q̂
/// ```
pub fn energetic_update(
    stats: &ScalarStats,
    channel: &Channel,
    alpha: f64,
    gamma: f64,
    model: &BlockModel,
    kappas: &KappaSet,
) -> Result<HatParams> {
    if !(alpha > 0.0) || !(gamma > 0.0) {
        return Err(param("alpha and gamma must be positive"));
    }
    let ci = channel_integrals(stats, channel, default_quadrature())?;
    let k1 = kappas.kappa1;
    let ks2 = kappas.kappa_star * kappas.kappa_star;
    let a = alpha / gamma;
    let sx = model.sigma_x();
    Ok(HatParams {
        m_hat: sx.iter().map(|s| a * k1 * s * ci.m_hat).collect(),
        q_hat: sx.iter().map(|s| a * k1 * k1 * s * ci.q_hat).collect(),
        v_hat: sx.iter().map(|s| a * k1 * k1 * s * ci.v_hat).collect(),
        q_hat_w: alpha * ks2 * ci.q_hat,
        v_hat_w: alpha * ks2 * ci.v_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussmoments::{kappa_constants, Activation};
    use crate::replica::channel::sigmoid;
    use crate::testutil::adaptive_simpson;
    use approx::assert_relative_eq;

    fn stats(rho: f64, m: f64, q: f64, v: f64) -> ScalarStats {
        ScalarStats { rho, m, q, v }
    }

    #[test]
    fn regression_substitution() {
        let k = kappa_constants(Activation::Relu, 1.0).unwrap();
        let ks2 = k.kappa_star.powi(2);
        let alpha = 0.7;
        let h = energetic_update(
            &stats(1.0, 0.0, 1.0, 0.0),
            &Channel::regression(0.0).unwrap(),
            alpha,
            0.5,
            &BlockModel::isotropic(),
            &k,
        )
        .unwrap();
        assert_relative_eq!(h.q_hat_w, 2.0 * alpha * ks2, max_relative = 1e-15);
        assert_relative_eq!(h.v_hat[0], alpha / 0.5 * k.kappa1.powi(2), max_relative = 1e-15);
    }

    #[test]
    fn pure_noise_labels_decouple_from_the_teacher() {
        let k = kappa_constants(Activation::Tanh, 1.0).unwrap();
        let model = BlockModel::scenario(crate::replica::Scenario::Aligned);
        for ch in [Channel::square_classification(0.5).unwrap(), Channel::logistic(0.5).unwrap()] {
            let h1 = energetic_update(&stats(1.0, 0.3, 0.8, 0.4), &ch, 1.0, 1.0, &model, &k).unwrap();
            let h2 = energetic_update(&stats(1.0, -0.5, 0.8, 0.4), &ch, 1.0, 1.0, &model, &k).unwrap();
            assert!(h1.m_hat.iter().all(|m| m.abs() < 1e-15));
            assert_relative_eq!(h1.q_hat_w, h2.q_hat_w, max_relative = 1e-12);
        }
    }

    #[test]
    fn generic_flip_quadrature_reproduces_square_closed_forms() {
        let q = default_quadrature();
        for (s, d) in [(stats(1.0, 0.5, 1.0, 1.0), 0.0), (stats(1.3, 0.2, 0.6, 3.0), 0.2), (stats(0.8, -0.3, 2.0, 0.1), 0.7)] {
            let generic = flip_channel_integrals(&s, d, Loss::Square, q).unwrap();
            let closed = channel_integrals(&s, &Channel::square_classification(d).unwrap(), q).unwrap();
            assert_relative_eq!(generic.v_hat, closed.v_hat, max_relative = 1e-12);
            assert_relative_eq!(generic.m_hat, closed.m_hat, epsilon = 1e-12);
            assert_relative_eq!(generic.q_hat, closed.q_hat, max_relative = 1e-10);
        }
    }

    /// Two-dimensional oracle: integrate over the student field ξ and the
    /// teacher's residual u explicitly, with the label indicator resolved by
    /// splitting the u-line at the sign change. The teacher derivative enters
    /// through Stein's identity instead of ∂Z⁰.
    fn logistic_oracle(s: &ScalarStats, delta: f64) -> (f64, f64, f64, f64) {
        let (sq, mq) = (s.q.sqrt(), s.m / s.q.sqrt());
        let v0 = s.rho - s.m * s.m / s.q;
        let gauss = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let inner = |xi: f64, weight: &dyn Fn(f64) -> f64, y: f64| {
            let cut = -mq * xi / v0.sqrt();
            let below = adaptive_simpson(&|u| weight(u) * gauss(u), -12.0, cut.max(-12.0), 1e-12);
            let above = adaptive_simpson(&|u| weight(u) * gauss(u), cut.min(12.0), 12.0, 1e-12);
            let (p_above, p_below) = if y > 0.0 { (1.0 - delta, delta) } else { (delta, 1.0 - delta) };
            p_above * above + p_below * below
        };
        let integrand = |which: usize| {
            move |xi: f64| {
                let omega = sq * xi;
                let mut total = 0.0;
                for y in [1.0f64, -1.0] {
                    let eta = proximal(y, omega, s.v, Loss::Logistic);
                    let f = y * sigmoid(-y * eta);
                    let l2 = sigmoid(y * eta) * sigmoid(-y * eta);
                    total += match which {
                        0 => inner(xi, &|_| 1.0, y) * l2 / (1.0 + s.v * l2),
                        1 => inner(xi, &|u| u / v0.sqrt(), y) * f,
                        2 => inner(xi, &|_| 1.0, y) * f * f,
                        _ => inner(xi, &|_| 1.0, y) * Loss::Logistic.value(y, eta),
                    };
                }
                total * gauss(xi)
            }
        };
        let int = |k| adaptive_simpson(&integrand(k), -12.0, 12.0, 1e-10);
        (int(0), int(1), int(2), int(3))
    }

    #[test]
    fn logistic_hats_match_two_dimensional_oracle() {
        for (s, d) in [(stats(1.0, 0.5, 1.0, 1.0), 0.0), (stats(1.0, 0.3, 2.0, 0.4), 0.2)] {
            let ch = Channel::logistic(d).unwrap();
            let got = channel_integrals(&s, &ch, default_quadrature()).unwrap();
            let (v, m, q, t) = logistic_oracle(&s, d);
            assert!((got.v_hat - v).abs() < 1e-6, "v̂ {} vs {}", got.v_hat, v);
            assert!((got.m_hat - m).abs() < 1e-6, "m̂ {} vs {}", got.m_hat, m);
            assert!((got.q_hat - q).abs() < 1e-6, "q̂ {} vs {}", got.q_hat, q);
            let et = logistic_train_loss(&s, &ch, default_quadrature()).unwrap();
            assert!((et - t).abs() < 1e-6, "ε_t {et} vs {t}");
        }
    }

    #[test]
    fn logistic_train_loss_vanishes_for_large_aligned_students() {
        let ch = Channel::logistic(0.0).unwrap();
        let mut prev = f64::INFINITY;
        for q in [1.0, 10.0, 100.0, 1000.0, 10000.0] {
            // M → √(ρQ) with a small residual misalignment.
            let m = (q * (1.0 - 1e-6f64)).sqrt();
            let et = logistic_train_loss(&stats(1.0, m, q, 0.01), &ch, default_quadrature()).unwrap();
            assert!(et < prev);
            prev = et;
        }
        assert!(prev < 1e-2);
    }
}
