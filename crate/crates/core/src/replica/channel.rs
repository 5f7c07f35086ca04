use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Teacher output channel paired with the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Linear teacher with additive Gaussian noise of variance Δ, square loss.
    RegressionGaussian,
    /// Sign teacher with label flips of probability Δ, square loss.
    ClassificationSquare,
    /// Sign teacher with label flips of probability Δ, logistic loss.
    ClassificationLogistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannel", into = "RawChannel")]
pub struct Channel {
    kind: ChannelKind,
    delta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawChannel {
    kind: ChannelKind,
    delta: f64,
}

impl TryFrom<RawChannel> for Channel {
    type Error = Error;
    fn try_from(r: RawChannel) -> Result<Self> {
        Channel::new(r.kind, r.delta)
    }
}

impl From<Channel> for RawChannel {
    fn from(c: Channel) -> Self {
        RawChannel { kind: c.kind, delta: c.delta }
    }
}

/// Training loss `ℓ(y, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// `½(x − y)²`.
    Square,
    /// `log(1 + e^{−yx})`.
    Logistic,
}

impl Channel {
    pub fn new(kind: ChannelKind, delta: f64) -> Result<Self> {
        let ok = match kind {
            ChannelKind::RegressionGaussian => delta >= 0.0 && delta.is_finite(),
            _ => (0.0..=1.0).contains(&delta),
        };
        if !ok {
            return Err(param(format!("noise level {delta} invalid for {kind:?}")));
        }
        Ok(Self { kind, delta })
    }

    pub fn regression(delta: f64) -> Result<Self> {
        Self::new(ChannelKind::RegressionGaussian, delta)
    }

    pub fn square_classification(delta: f64) -> Result<Self> {
        Self::new(ChannelKind::ClassificationSquare, delta)
    }

    pub fn logistic(delta: f64) -> Result<Self> {
        Self::new(ChannelKind::ClassificationLogistic, delta)
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn loss(&self) -> Loss {
        match self.kind {
            ChannelKind::ClassificationLogistic => Loss::Logistic,
            _ => Loss::Square,
        }
    }

    pub fn is_classification(&self) -> bool {
        self.kind != ChannelKind::RegressionGaussian
    }
}

impl Loss {
    pub fn value(self, y: f64, x: f64) -> f64 {
        match self {
            Loss::Square => 0.5 * (x - y).powi(2),
            Loss::Logistic => softplus(-y * x),
        }
    }

    /// `∂ℓ/∂x`.
    pub fn derivative(self, y: f64, x: f64) -> f64 {
        match self {
            Loss::Square => x - y,
            Loss::Logistic => -y * sigmoid(-y * x),
        }
    }

    /// `∂²ℓ/∂x²`.
    pub fn curvature(self, y: f64, x: f64) -> f64 {
        match self {
            Loss::Square => 1.0,
            Loss::Logistic => {
                let s = sigmoid(y * x);
                y * y * s * (1.0 - s)
            }
        }
    }
}

/// `log(1 + eᵗ)` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `1/(1 + e^{−t})`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Proximal operator `η = argminₓ (x − ω)²/(2v) + ℓ(y, x)`.
pub fn proximal(y: f64, omega: f64, v: f64, loss: Loss) -> f64 {
    if v == 0.0 {
        return omega;
    }
    match loss {
        Loss::Square => (omega + v * y) / (1.0 + v),
        Loss::Logistic => logistic_proximal(y, omega, v),
    }
}

/// Newton on the strictly increasing optimality condition
/// `h(x) = (x − ω)/v + ℓ'(x)`, safeguarded by the bracket
/// `[ω − v|y|, ω + v|y|]` (since `|ℓ'| ≤ |y|`). Plain Newton overshoots badly
/// once `v` is large, which is why every step is kept inside the bracket.
fn logistic_proximal(y: f64, omega: f64, v: f64) -> f64 {
    let h = |x: f64| (x - omega) / v + Loss::Logistic.derivative(y, x);
    let (mut lo, mut hi) = (omega - v * y.abs(), omega + v * y.abs());
    let mut x = omega;
    for _ in 0..200 {
        if proximal_residual(y, omega, v, Loss::Logistic, x).abs() <= 1e-15 {
            return x;
        }
        let hx = h(x);
        if hx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = x - hx / (1.0 / v + Loss::Logistic.curvature(y, x));
        x = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Optimality residual `η − ω + vℓ'(η)` of a proximal value, relative to the
/// scale `1 + |ω| + v` of the terms so that it is attainable in floating point.
pub fn proximal_residual(y: f64, omega: f64, v: f64, loss: Loss, eta: f64) -> f64 {
    (eta - omega + v * loss.derivative(y, eta)) / (1.0 + omega.abs() + v)
}

/// Partition function `Z⁰(y, ω, V₀)` of the teacher channel: the likelihood
/// of `y` given a Gaussian teacher score of mean `ω` and variance `V₀`.
pub fn teacher_partition(y: f64, omega: f64, v0: f64, channel: &Channel) -> Result<f64> {
    if !(v0 > 0.0) {
        return Err(Error::Domain(format!("teacher variance V₀ = {v0} must be positive")));
    }
    let d = channel.delta;
    Ok(match channel.kind {
        ChannelKind::RegressionGaussian => {
            let var = v0 + d;
            (-(y - omega).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
        }
        _ => d + (1.0 - 2.0 * d) * normal_cdf(y * omega / v0.sqrt()),
    })
}

/// `∂Z⁰/∂ω` for the flip channels.
pub(crate) fn flip_partition_derivative(y: f64, omega: f64, v0: f64, delta: f64) -> f64 {
    let s = v0.sqrt();
    (1.0 - 2.0 * delta) * y * normal_pdf(y * omega / s) / s
}
