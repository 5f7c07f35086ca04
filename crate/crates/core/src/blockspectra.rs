//! Resolvents of block-scaled Wishart matrices.
//!
//! With `F` a `P × D` matrix of i.i.d. standard Gaussians and `A` the diagonal
//! matrix holding `V̂ᵢ` on the `φᵢD` coordinates of block `i`, the object of
//! interest is
//!
//! ```text
//! M = A^{1/2} FᵀF A^{1/2} / P          (D × D, γ = D/P)
//! g(z) = (1/D) tr (z − M)⁻¹ = Σᵢ φᵢ qᵢ(z)
//! ```
//!
//! where `qᵢ` is the average diagonal resolvent entry on block `i`. In the
//! large-size limit the `qᵢ` solve
//!
//! ```text
//! qᵢ = Ω / (z Ω − cᵢ V̂ᵢ),     Ω = 1 − κ Σⱼ φⱼ V̂ⱼ qⱼ
//! ```
//!
//! with `(cᵢ, κ)` set by [`ResolventVariant`]. Only
//! [`ResolventVariant::SampleCovariance`] reproduces the empirical spectrum
//! for every `γ`; the other two coincide with it at `γ = 1` and are kept for
//! comparison.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg;
use crate::montecarlo::rng::{stream, Stream};
use crate::montecarlo::block_sizes;

/// Coefficients of the coupled block equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolventVariant {
    /// `cᵢ = 1`, `κ = 1`.
    Printed,
    /// `cᵢ = 1/γ`, `κ = 1`: stationarity of an action whose log-det term
    /// carries a `1/(2γ)` prefactor.
    ActionDerived,
    /// `cᵢ = 1`, `κ = γ`: the sample-covariance (Silverstein) equation.
    #[default]
    SampleCovariance,
}

impl ResolventVariant {
    pub const ALL: [ResolventVariant; 3] = [
        ResolventVariant::Printed,
        ResolventVariant::ActionDerived,
        ResolventVariant::SampleCovariance,
    ];

    /// `(c, κ)` at aspect ratio `gamma`.
    pub fn coefficients(self, gamma: f64) -> (f64, f64) {
        match self {
            ResolventVariant::Printed => (1.0, 1.0),
            ResolventVariant::ActionDerived => (1.0 / gamma, 1.0),
            ResolventVariant::SampleCovariance => (1.0, gamma),
        }
    }
}

/// Block fractions, per-block scalings and aspect ratio `γ = D/P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpectrumSpec {
    phis: Vec<f64>,
    vhats: Vec<f64>,
    gamma: f64,
}

impl BlockSpectrumSpec {
    pub fn new(phis: Vec<f64>, vhats: Vec<f64>, gamma: f64) -> Result<Self> {
        if phis.is_empty() || phis.len() != vhats.len() {
            return Err(param("phis and vhats must be non-empty and of equal length"));
        }
        if phis.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(param("every block fraction must lie in (0, 1]"));
        }
        let total: f64 = phis.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(param(format!("block fractions sum to {total}, not 1")));
        }
        if vhats.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(param("block scalings must be finite and non-negative"));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(param(format!("aspect ratio must be positive, got {gamma}")));
        }
        Ok(Self { phis, vhats, gamma })
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn vhats(&self) -> &[f64] {
        &self.vhats
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn blocks(&self) -> usize {
        self.phis.len()
    }
}

/// Converged solution of the block equations at one spectral argument.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventPoint {
    pub z: f64,
    pub g: f64,
    pub g_prime: f64,
    pub q_blocks: Vec<f64>,
    pub omega: f64,
    /// Relative change of the weights under one more update.
    pub residual: f64,
    pub iterations: usize,
    pub variant: ResolventVariant,
    /// `∂qᵢ/∂z` from the linearized system.
    pub dq_dz: Vec<f64>,
    /// `∂Ω/∂z` from the linearized system.
    pub domega_dz: f64,
}

/// Derivatives of a [`ResolventPoint`] with respect to the block scalings.
#[derive(Debug, Clone, PartialEq)]
pub struct VhatSensitivity {
    /// `dq[i][j] = ∂qᵢ/∂V̂ⱼ` at fixed `z`.
    pub dq: Vec<Vec<f64>>,
    /// `∂Ω/∂V̂ⱼ` at fixed `z`.
    pub domega: Vec<f64>,
}

/// Solves the block equations with the default variant.
pub fn solve_block_resolvent(
    spec: &BlockSpectrumSpec,
    z: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ResolventPoint> {
    solve_block_resolvent_with(spec, z, ResolventVariant::default(), tol, max_iter)
}

/// Damped fixed-point iteration from `qᵢ = 1/z`, falling back to a bracketing
/// solve on the scalar `Ω` when the iteration stalls.
pub fn solve_block_resolvent_with(
    spec: &BlockSpectrumSpec,
    z: f64,
    variant: ResolventVariant,
    tol: f64,
    max_iter: usize,
) -> Result<ResolventPoint> {
    if !(tol > 0.0) {
        return Err(param("tolerance must be positive"));
    }
    if z == 0.0 || !z.is_finite() {
        return Err(param(format!("spectral argument must be finite and non-zero, got {z}")));
    }
    let (c, kappa) = variant.coefficients(spec.gamma);
    let system = System { spec, z, c, kappa };

    let mut q = vec![1.0 / z; spec.blocks()];
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut iterations = 0usize;
    let damping = 0.5;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let next = system.update(&q)?;
        let res = relative_change(&next, &q);
        for (qi, ni) in q.iter_mut().zip(&next) {
            *qi = (1.0 - damping) * *qi + damping * ni;
        }
        if res <= tol {
            converged = true;
            break;
        }
        if res < 0.999 * best {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 50 {
                break;
            }
        }
    }
    if !converged {
        q = system.bracket_omega(tol)?;
    }
    let residual = relative_change(&system.update(&q)?, &q);
    if residual > tol {
        return Err(Error::Convergence { iterations, residual });
    }
    system.finish(q, residual, iterations, variant)
}

struct System<'a> {
    spec: &'a BlockSpectrumSpec,
    z: f64,
    c: f64,
    kappa: f64,
}

impl System<'_> {
    fn omega(&self, q: &[f64]) -> f64 {
        let s: f64 = self
            .spec
            .phis
            .iter()
            .zip(&self.spec.vhats)
            .zip(q)
            .map(|((p, v), qi)| p * v * qi)
            .sum();
        1.0 - self.kappa * s
    }

    fn q_given_omega(&self, omega: f64) -> Result<Vec<f64>> {
        if omega == 0.0 {
            return Err(Error::Singular("Ω vanished in the block update".into()));
        }
        self.spec
            .vhats
            .iter()
            .map(|&v| {
                let den = self.z - self.c * v / omega;
                if den == 0.0 || !den.is_finite() {
                    Err(Error::Singular(format!("zero denominator at z = {}", self.z)))
                } else {
                    Ok(1.0 / den)
                }
            })
            .collect()
    }

    fn update(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.q_given_omega(self.omega(q))
    }

    /// Root of `h(Ω) = Ω − Ω(q(Ω))` by bisection; on `z < 0` the root lies in
    /// `[1, 1 + κ Σ φⱼ V̂ⱼ / |z|]`.
    fn bracket_omega(&self, tol: f64) -> Result<Vec<f64>> {
        if self.z > 0.0 {
            return Err(Error::Convergence { iterations: 0, residual: f64::NAN });
        }
        let h = |omega: f64| -> Result<f64> { Ok(omega - self.omega(&self.q_given_omega(omega)?)) };
        let mass: f64 = self.spec.phis.iter().zip(&self.spec.vhats).map(|(p, v)| p * v).sum();
        let (mut lo, mut hi) = (1.0, 1.0 + self.kappa * mass / self.z.abs());
        if h(lo)? > 0.0 || h(hi)? < 0.0 {
            return Err(Error::Numerical("Ω root not bracketed".into()));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-3 * tol * hi {
                break;
            }
        }
        self.q_given_omega(0.5 * (lo + hi))
    }

    fn finish(&self, q: Vec<f64>, residual: f64, iterations: usize, variant: ResolventVariant) -> Result<ResolventPoint> {
        let omega = self.omega(&q);
        let phis = &self.spec.phis;
        let vh = &self.spec.vhats;
        // dqᵢ = −qᵢ² (dz + cᵢ V̂ᵢ dΩ / Ω²),  dΩ = −κ Σ φⱼ V̂ⱼ dqⱼ
        let den = 1.0
            - self.kappa
                * phis
                    .iter()
                    .zip(vh)
                    .zip(&q)
                    .map(|((p, v), qi)| p * self.c * v * v * qi * qi)
                    .sum::<f64>()
                / (omega * omega);
        if den.abs() < 1e-300 {
            return Err(Error::Singular("linearized block system is singular".into()));
        }
        let domega_dz = self.kappa
            * phis.iter().zip(vh).zip(&q).map(|((p, v), qi)| p * v * qi * qi).sum::<f64>()
            / den;
        let dq_dz: Vec<f64> = vh
            .iter()
            .zip(&q)
            .map(|(v, qi)| -qi * qi * (1.0 + self.c * v * domega_dz / (omega * omega)))
            .collect();
        let g = phis.iter().zip(&q).map(|(p, qi)| p * qi).sum();
        let g_prime = phis.iter().zip(&dq_dz).map(|(p, d)| p * d).sum();
        Ok(ResolventPoint {
            z: self.z,
            g,
            g_prime,
            q_blocks: q,
            omega,
            residual,
            iterations,
            variant,
            dq_dz,
            domega_dz,
        })
    }
}

impl ResolventPoint {
    /// Sensitivities to the block scalings, from the same linearization as
    /// `g_prime`.
    pub fn vhat_sensitivity(&self, spec: &BlockSpectrumSpec) -> VhatSensitivity {
        let (c, kappa) = self.variant.coefficients(spec.gamma);
        let q = &self.q_blocks;
        let om = self.omega;
        let k = q.len();
        let den = 1.0
            - kappa
                * spec
                    .phis
                    .iter()
                    .zip(&spec.vhats)
                    .zip(q)
                    .map(|((p, v), qi)| p * c * v * v * qi * qi)
                    .sum::<f64>()
                / (om * om);
        let domega: Vec<f64> = (0..k)
            .map(|j| -kappa * spec.phis[j] * (q[j] + c * spec.vhats[j] * q[j] * q[j] / om) / den)
            .collect();
        let dq = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        let direct = if i == j { q[i] * q[i] * c / om } else { 0.0 };
                        direct - q[i] * q[i] * c * spec.vhats[i] / (om * om) * domega[j]
                    })
                    .collect()
            })
            .collect();
        VhatSensitivity { dq, domega }
    }
}

/// `max|a − b| / max|b|`: the resolvent weights scale like `1/|z|`, so an
/// absolute tolerance would be unattainable near the origin.
fn relative_change(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale > 0.0 { diff / scale } else { diff }
}

/// Mean and standard error of `(1/D) tr (z − M)⁻¹` over independent draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalResolvent {
    pub mean: f64,
    pub stderr: f64,
}

/// Finite-size oracle: samples `F` at `D = dim`, `P = round(dim/γ)` and
/// evaluates the normalized trace by dense Cholesky inversion.
pub fn empirical_resolvent(
    spec: &BlockSpectrumSpec,
    z: f64,
    dim: usize,
    draws: usize,
    seed: u64,
) -> Result<EmpiricalResolvent> {
    if dim < 100 {
        return Err(param("empirical resolvent needs dim >= 100"));
    }
    if draws == 0 {
        return Err(param("need at least one draw"));
    }
    let p = (dim as f64 / spec.gamma).round() as usize;
    if p < 1 {
        return Err(param(format!("γ = {} gives P < 1 at D = {dim}", spec.gamma)));
    }
    if z == 0.0 {
        return Err(param("z must be non-zero"));
    }
    if spec.vhats.iter().all(|&v| v == 0.0) {
        return Ok(EmpiricalResolvent { mean: 1.0 / z, stderr: 0.0 });
    }
    let sizes = block_sizes(&spec.phis, dim)?;
    let scale: Vec<f64> = sizes
        .iter()
        .zip(&spec.vhats)
        .flat_map(|(&n, &v)| std::iter::repeat(v.sqrt()).take(n))
        .collect();
    let values: Vec<f64> = (0..draws)
        .map(|draw| {
            let mut rng = stream(seed, Stream::Spectrum, draw as u64);
            let b = Array2::from_shape_fn((p, dim), |(_, j)| {
                scale[j] * rng.sample::<f64, _>(StandardNormal)
            });
            // Nonzero spectra of BᵀB/P and BBᵀ/P agree; use the smaller Gram.
            let (mut gram, extra) = if p < dim {
                (linalg::gram(b.view(), 1.0 / p as f64), (dim - p) as f64 / z)
            } else {
                (linalg::gram_t(b.view(), 1.0 / p as f64), 0.0)
            };
            let trace = if z < 0.0 {
                linalg::shift_diagonal(&mut gram, -z);
                -linalg::spd_inverse_trace(&gram)?
            } else {
                gram.mapv_inplace(|x| -x);
                linalg::shift_diagonal(&mut gram, z);
                linalg::spd_inverse_trace(&gram)
                    .map_err(|_| Error::Domain(format!("z = {z} lies inside the spectrum")))?
            };
            Ok((trace + extra) / dim as f64)
        })
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(EmpiricalResolvent { mean, stderr })
}
