//! One-dimensional Gaussian expectations and Gaussian-equivalence constants.
//!
//! For a pre-activation `z ~ N(0, r)` the nonlinear feature `σ(z)` is, at the
//! level of second moments, equivalent to `κ₀ + κ₁ z + κ★ ξ` with `ξ`
//! independent standard noise:
//!
//! * `κ₀ = E σ(z)`
//! * `κ₁ = E[z σ(z)] / r`
//! * `κ★² = E σ(z)² − κ₀² − r κ₁²`

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Quadrature order used when none is given.
pub const DEFAULT_ORDER: usize = 128;

/// Pointwise activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sign,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Identity,
        Activation::Relu,
        Activation::Tanh,
        Activation::Sign,
    ];

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Activation::Identity => u,
            Activation::Relu => u.max(0.0),
            Activation::Tanh => u.tanh(),
            // sign(0) = 0 keeps the function odd
            Activation::Sign => {
                if u > 0.0 {
                    1.0
                } else if u < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_odd(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sign => "sign",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sign" => Ok(Activation::Sign),
            other => Err(param(format!("unknown activation `{other}`"))),
        }
    }
}

/// Gauss–Hermite rule for the weight `exp(−u²)` (physicists' convention).
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `(node, weight)` pairs rescaled to integrate against the standard
    /// normal density: `E f(ξ) ≈ Σ wⱼ f(xⱼ)`.
    pub fn standard_normal(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let s = std::f64::consts::SQRT_2;
        let norm = PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&u, &w)| (s * u, w / norm))
    }
}

/// Nodes and weights of the `order`-point Gauss–Hermite rule, nodes ascending.
///
/// Starting points are the eigenvalues of the Jacobi matrix; each node is then
/// polished by Newton steps on the orthonormal Hermite recurrence, whose
/// derivative also gives the weight.
pub fn gauss_hermite(order: usize) -> Result<Quadrature> {
    if !(2..=512).contains(&order) {
        return Err(param(format!("quadrature order {order} outside [2, 512]")));
    }
    let n = order;
    let mut jacobi = Array2::<f64>::zeros((n, n));
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[[k, k - 1]] = b;
        jacobi[[k - 1, k]] = b;
    }
    let (eig, vecs) = jacobi.eigh(UPLO::Lower)?;
    let scale = (2.0 * n as f64).sqrt();
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (k, &start) in eig.iter().enumerate() {
        let mut z = start;
        for _ in 0..8 {
            let (p1, p2) = hermite_orthonormal(n, z);
            let step = p1 / (scale * p2);
            if !step.is_finite() {
                break;
            }
            z -= step;
            if step.abs() <= 1e-16 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, p2) = hermite_orthonormal(n, z);
        let w = 2.0 / (scale * p2).powi(2);
        // Far-tail weights overflow the recurrence; the eigenvector gives them.
        let w = if w.is_finite() && w > 0.0 { w } else { PI.sqrt() * vecs[[0, k]].powi(2) };
        nodes.push(z);
        weights.push(w);
    }
    // Exact symmetry about the origin.
    for k in 0..n / 2 {
        let (a, b) = (nodes[k], nodes[n - 1 - k]);
        let x = 0.5 * (b - a);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        let w = 0.5 * (weights[k] + weights[n - 1 - k]);
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    if nodes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Numerical(format!("Gauss-Hermite nodes of order {n} are not distinct")));
    }
    Ok(Quadrature { nodes, weights })
}

/// Orthonormal Hermite values `(h_n(z), h_{n-1}(z))`.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut p1 = PIM4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, p2)
}

/// Gauss–Legendre rule on `[−1, 1]`, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl LegendreRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Golub–Welsch construction of the `order`-point Gauss–Legendre rule.
pub fn gauss_legendre(order: usize) -> Result<LegendreRule> {
    if !(2..=512).contains(&order) {
        return Err(param(format!("quadrature order {order} outside [2, 512]")));
    }
    let n = order;
    let mut jacobi = Array2::<f64>::zeros((n, n));
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[[k, k - 1]] = b;
        jacobi[[k - 1, k]] = b;
    }
    let (nodes, vecs) = jacobi.eigh(UPLO::Lower)?;
    let weights = (0..n).map(|k| 2.0 * vecs[[0, k]].powi(2)).collect();
    Ok(LegendreRule { nodes: nodes.to_vec(), weights })
}

/// Half-width of the truncated line in standard deviations; the Gaussian
/// tail beyond it is below `1e−31`.
const SPLIT_CUTOFF: f64 = 12.0;

/// `E f(z)` for `z ~ N(0, variance)` by Gauss–Legendre on `[−12σ, 0]` and
/// `[0, 12σ]`. Converges spectrally when `f` is smooth on each half-line, so
/// a kink or jump at the origin costs nothing.
pub fn expect_gaussian_split(f: impl Fn(f64) -> f64, variance: f64, rule: &LegendreRule) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(param(format!("variance must be positive, got {variance}")));
    }
    let half = 0.5 * SPLIT_CUTOFF;
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let mut acc = 0.0;
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        // Standardized abscissae on each half.
        for x in [half * (t + 1.0), -half * (t + 1.0)] {
            let v = f(variance.sqrt() * x);
            if !v.is_finite() {
                return Err(Error::Numerical(format!("integrand not finite at z = {}", variance.sqrt() * x)));
            }
            acc += half * w * density(x) * v;
        }
    }
    Ok(acc)
}

/// Order of the shared Gauss–Legendre rule.
pub const DEFAULT_LEGENDRE_ORDER: usize = 256;

/// Shared rule of [`DEFAULT_LEGENDRE_ORDER`].
pub fn default_legendre() -> &'static LegendreRule {
    static RULE: OnceLock<LegendreRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(DEFAULT_LEGENDRE_ORDER).expect("default order is in range"))
}

/// Shared rule of [`DEFAULT_ORDER`].
pub fn default_quadrature() -> &'static Quadrature {
    static QUAD: OnceLock<Quadrature> = OnceLock::new();
    QUAD.get_or_init(|| gauss_hermite(DEFAULT_ORDER).expect("default order is in range"))
}

/// Gauss–Hermite estimate of `E f(z)` for `z ~ N(0, variance)`.
pub fn expect_gaussian(f: impl Fn(f64) -> f64, variance: f64, quad: &Quadrature) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(param(format!("variance must be positive, got {variance}")));
    }
    let scale = (2.0 * variance).sqrt();
    let mut acc = 0.0;
    for (&u, &w) in quad.nodes.iter().zip(&quad.weights) {
        let v = f(scale * u);
        if !v.is_finite() {
            return Err(Error::Numerical(format!("integrand not finite at z = {}", scale * u)));
        }
        acc += w * v;
    }
    Ok(acc / PI.sqrt())
}

/// Gaussian-equivalence constants at effective input variance `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaSet {
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa_star: f64,
    pub r: f64,
}

impl KappaSet {
    /// `E σ(z)²` implied by the constants.
    pub fn second_moment(&self) -> f64 {
        self.kappa0.powi(2) + self.r * self.kappa1.powi(2) + self.kappa_star.powi(2)
    }
}

/// `κ` constants using closed forms where they exist and the default rule
/// otherwise.
pub fn kappa_constants(activation: Activation, r: f64) -> Result<KappaSet> {
    if !(r > 0.0) {
        return Err(param(format!("effective variance must be positive, got {r}")));
    }
    let set = match activation {
        Activation::Identity => KappaSet { kappa0: 0.0, kappa1: 1.0, kappa_star: 0.0, r },
        Activation::Relu => KappaSet {
            kappa0: (r / (2.0 * PI)).sqrt(),
            kappa1: 0.5,
            kappa_star: (r * (0.25 - 1.0 / (2.0 * PI))).sqrt(),
            r,
        },
        Activation::Sign => KappaSet {
            kappa0: 0.0,
            kappa1: (2.0 / (PI * r)).sqrt(),
            kappa_star: (1.0 - 2.0 / PI).sqrt(),
            r,
        },
        Activation::Tanh => kappa_by_split_quadrature(activation, r, default_legendre())?,
    };
    Ok(set)
}

/// `κ` constants from Gauss–Hermite quadrature alone. Accurate for smooth
/// activations; kinks and jumps need [`kappa_by_split_quadrature`].
pub fn kappa_by_quadrature(activation: Activation, r: f64, quad: &Quadrature) -> Result<KappaSet> {
    let k0 = expect_gaussian(|z| activation.eval(z), r, quad)?;
    let k1 = expect_gaussian(|z| z * activation.eval(z), r, quad)? / r;
    let m2 = expect_gaussian(|z| activation.eval(z).powi(2), r, quad)?;
    kappa_from_moments(activation, r, k0, k1, m2)
}

/// `κ` constants from Gauss–Legendre quadrature on each half-line.
pub fn kappa_by_split_quadrature(activation: Activation, r: f64, rule: &LegendreRule) -> Result<KappaSet> {
    let k0 = expect_gaussian_split(|z| activation.eval(z), r, rule)?;
    let k1 = expect_gaussian_split(|z| z * activation.eval(z), r, rule)? / r;
    let m2 = expect_gaussian_split(|z| activation.eval(z).powi(2), r, rule)?;
    kappa_from_moments(activation, r, k0, k1, m2)
}

fn kappa_from_moments(activation: Activation, r: f64, k0: f64, k1: f64, m2: f64) -> Result<KappaSet> {
    let k0 = if activation.is_odd() { 0.0 } else { k0 };
    let ks2 = m2 - k0 * k0 - r * k1 * k1;
    let ks2 = if ks2 < 0.0 && ks2 >= -1e-12 { 0.0 } else { ks2 };
    if ks2 < 0.0 {
        return Err(Error::Numerical(format!(
            "κ★² = {ks2:e} < 0 for {activation} at r = {r}"
        )));
    }
    Ok(KappaSet { kappa0: k0, kappa1: k1, kappa_star: ks2.sqrt(), r })
}

/// `E σ(z)²` for `z ~ N(0, r)`, evaluated by quadrature.
pub fn second_moment(activation: Activation, r: f64, quad: &Quadrature) -> Result<f64> {
    expect_gaussian(|z| activation.eval(z).powi(2), r, quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::adaptive_simpson;
    use approx::assert_relative_eq;

    #[test]
    fn two_point_rule() {
        let q = gauss_hermite(2).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert_relative_eq!(q.nodes()[0], -h, epsilon = 1e-15);
        assert_relative_eq!(q.nodes()[1], h, epsilon = 1e-15);
        for &w in q.weights() {
            assert_relative_eq!(w, PI.sqrt() / 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for order in [2, 3, 17, 64, 128, 255, 512] {
            let q = gauss_hermite(order).unwrap();
            let s: f64 = q.weights().iter().sum();
            assert_relative_eq!(s, PI.sqrt(), max_relative = 1e-12);
            assert!(q.nodes().windows(2).all(|w| w[0] < w[1]), "nodes not ascending");
        }
    }

    #[test]
    fn rejects_bad_order() {
        assert!(gauss_hermite(1).is_err());
        assert!(gauss_hermite(513).is_err());
    }

    #[test]
    fn polynomial_exactness() {
        // ∫ u^{2k} e^{-u²} du = Γ(k + 1/2)
        let q = gauss_hermite(20).unwrap();
        let mut gamma = PI.sqrt(); // Γ(1/2)
        for k in 0..20 {
            let approx: f64 = q
                .nodes()
                .iter()
                .zip(q.weights())
                .map(|(&u, &w)| w * u.powi(2 * k as i32))
                .sum();
            assert_relative_eq!(approx, gamma, max_relative = 1e-10);
            let odd: f64 = q
                .nodes()
                .iter()
                .zip(q.weights())
                .map(|(&u, &w)| w * u.powi(2 * k as i32 + 1))
                .sum();
            assert!(odd.abs() <= 1e-10 * gamma);
            gamma *= k as f64 + 0.5;
        }
    }

    #[test]
    fn gaussian_moments() {
        let q = gauss_hermite(64).unwrap();
        assert_relative_eq!(expect_gaussian(|_| 1.0, 1.0, &q).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(expect_gaussian(|z| z * z, 4.0, &q).unwrap(), 4.0, epsilon = 1e-12);
        assert_relative_eq!(expect_gaussian(|z| z.powi(4), 1.0, &q).unwrap(), 3.0, epsilon = 1e-10);
        assert!(expect_gaussian(|z| z, 0.0, &q).is_err());
        assert!(expect_gaussian(|z| 1.0 / (z - z), 1.0, &q).is_err());
    }

    /// Adaptive Simpson on a truncated line, independent of the Hermite rule.
    fn simpson_gauss(f: &dyn Fn(f64) -> f64, var: f64) -> f64 {
        let s = var.sqrt();
        let g = |x: f64| f(x) * (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        adaptive_simpson(&g, -12.0 * s, 12.0 * s, 1e-13)
    }

    #[test]
    fn tanh_square_moment_matches_adaptive_oracle() {
        let oracle = simpson_gauss(&|z: f64| z.tanh().powi(2), 1.0);
        let q = gauss_hermite(128).unwrap();
        let est = expect_gaussian(|z| z.tanh().powi(2), 1.0, &q).unwrap();
        assert_relative_eq!(est, oracle, epsilon = 1e-10);
    }

    #[test]
    fn closed_forms() {
        let k = kappa_constants(Activation::Identity, 1.0).unwrap();
        assert_eq!((k.kappa0, k.kappa1, k.kappa_star), (0.0, 1.0, 0.0));
        let k = kappa_constants(Activation::Relu, 1.0).unwrap();
        assert_relative_eq!(k.kappa0, 0.398_942_280_401_432_7, epsilon = 1e-15);
        assert_relative_eq!(k.kappa1, 0.5);
        assert_relative_eq!(k.kappa_star, 0.301_405_137_494_543_45, epsilon = 1e-12);
    }

    #[test]
    fn closed_forms_match_order_200_quadrature() {
        let rule = gauss_legendre(200).unwrap();
        for act in [Activation::Identity, Activation::Relu, Activation::Sign] {
            for r in [0.25, 1.0, 4.0] {
                let exact = kappa_constants(act, r).unwrap();
                let num = kappa_by_split_quadrature(act, r, &rule).unwrap();
                assert_relative_eq!(exact.kappa0, num.kappa0, epsilon = 1e-10);
                assert_relative_eq!(exact.kappa1, num.kappa1, epsilon = 1e-10);
                assert_relative_eq!(exact.kappa_star, num.kappa_star, epsilon = 1e-10);
            }
        }
        // Independent of both rules: adaptive Simpson on the positive half.
        for r in [0.25, 1.0, 4.0] {
            let exact = kappa_constants(Activation::Sign, r).unwrap();
            let e_abs = 2.0 * simpson_gauss(&|z: f64| if z > 0.0 { z } else { 0.0 }, r);
            assert_relative_eq!(exact.kappa1, e_abs / r, epsilon = 1e-9);
        }
    }

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let rule = gauss_legendre(7).unwrap();
        let w: f64 = rule.weights().iter().sum();
        assert_relative_eq!(w, 2.0, epsilon = 1e-14);
        let x12: f64 = rule.nodes().iter().zip(rule.weights()).map(|(x, w)| w * x.powi(12)).sum();
        assert_relative_eq!(x12, 2.0 / 13.0, epsilon = 1e-14);
    }

    #[test]
    fn hermite_rule_is_exact_to_degree_2n_minus_1() {
        let q = gauss_hermite(12).unwrap();
        // E ξ²² = 21!! for a standard normal.
        let m22: f64 = q.standard_normal().map(|(x, w)| w * x.powi(22)).sum();
        let double_fact: f64 = (1..=21).step_by(2).map(f64::from).product();
        assert_relative_eq!(m22, double_fact, max_relative = 1e-12);
    }

    #[test]
    fn tanh_converged_in_order() {
        for r in [0.25, 1.0] {
            let a = kappa_by_quadrature(Activation::Tanh, r, &gauss_hermite(128).unwrap()).unwrap();
            let b = kappa_by_quadrature(Activation::Tanh, r, &gauss_hermite(256).unwrap()).unwrap();
            assert_eq!(a.kappa0, 0.0);
            assert!((a.kappa1 - b.kappa1).abs() < 1e-9);
            assert!((a.kappa_star - b.kappa_star).abs() < 1e-9);
        }
    }

    #[test]
    fn tanh_production_rule_is_converged() {
        // Hermite rules lose accuracy as r grows (the poles of tanh approach
        // the scaled real line); the split Legendre rule does not.
        let fine = gauss_legendre(512).unwrap();
        let gh = gauss_hermite(256).unwrap();
        for r in [0.25, 1.0, 4.0, 16.0] {
            let k = kappa_constants(Activation::Tanh, r).unwrap();
            let f = kappa_by_split_quadrature(Activation::Tanh, r, &fine).unwrap();
            assert!((k.kappa1 - f.kappa1).abs() < 1e-13 && (k.kappa_star - f.kappa_star).abs() < 1e-13);
            if r <= 1.0 {
                let h = kappa_by_quadrature(Activation::Tanh, r, &gh).unwrap();
                assert!((k.kappa1 - h.kappa1).abs() < 1e-12 && (k.kappa_star - h.kappa_star).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kappa_identity_all_activations() {
        let q = gauss_hermite(256).unwrap();
        for act in Activation::ALL {
            for r in [0.25, 1.0, 4.0] {
                let k = kappa_constants(act, r).unwrap();
                let m2 = match act {
                    Activation::Sign => 1.0,
                    _ => second_moment(act, r, &q).unwrap(),
                };
                assert!((k.second_moment() - m2).abs() < 1e-8, "{act} r={r}");
                if act.is_odd() {
                    assert!(k.kappa0.abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("TANH".parse::<Activation>().unwrap(), Activation::Tanh);
        assert!("softplus".parse::<Activation>().is_err());
    }
}
