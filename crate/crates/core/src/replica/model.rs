use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// One diagonal block of the input and teacher covariances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub phi: f64,
    pub sigma_x: f64,
    pub sigma_beta: f64,
}

/// Block-diagonal data model: `x ~ N(0, diag(σ_x,i I_{φᵢD}))` and teacher
/// `β ~ N(0, diag(σ_β,i I_{φᵢD}))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Block>", into = "Vec<Block>")]
pub struct BlockModel {
    blocks: Vec<Block>,
}

impl BlockModel {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(param("a block model needs at least one block"));
        }
        let total: f64 = blocks.iter().map(|b| b.phi).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(param(format!("block fractions sum to {total}, not 1")));
        }
        for b in &blocks {
            if !(b.phi > 0.0 && b.phi <= 1.0) {
                return Err(param(format!("block fraction {} outside (0, 1]", b.phi)));
            }
            if !(b.sigma_x > 0.0) || !b.sigma_x.is_finite() {
                return Err(param(format!("input variance {} must be positive", b.sigma_x)));
            }
            if !(b.sigma_beta >= 0.0) || !b.sigma_beta.is_finite() {
                return Err(param(format!("teacher variance {} must be non-negative", b.sigma_beta)));
            }
        }
        let model = Self { blocks };
        if !(model.rho() > 0.0) {
            return Err(param("the teacher must be non-zero in at least one block"));
        }
        Ok(model)
    }

    /// One block with unit input and teacher variance.
    pub fn isotropic() -> Self {
        Self { blocks: vec![Block { phi: 1.0, sigma_x: 1.0, sigma_beta: 1.0 }] }
    }

    /// Two blocks of fractions `(φ₁, 1 − φ₁)` with variance ratios
    /// `σ_x,1/σ_x,2 = r_x` and `σ_β,1/σ_β,2 = r_β`, normalized so that
    /// `r = Σφσ_x = 1` and `ρ = Σφσ_xσ_β = 1`.
    pub fn strong_weak(phi1: f64, r_x: f64, r_beta: f64) -> Result<Self> {
        if !(phi1 > 0.0 && phi1 < 1.0) {
            return Err(param("φ₁ must lie in (0, 1)"));
        }
        if !(r_x > 0.0) || !(r_beta > 0.0) {
            return Err(param("variance ratios must be positive"));
        }
        let phi2 = 1.0 - phi1;
        let sx2 = 1.0 / (phi1 * r_x + phi2);
        let sx1 = r_x * sx2;
        let sb2 = 1.0 / (phi1 * sx1 * r_beta + phi2 * sx2);
        let sb1 = r_beta * sb2;
        Self::new(vec![
            Block { phi: phi1, sigma_x: sx1, sigma_beta: sb1 },
            Block { phi: phi2, sigma_x: sx2, sigma_beta: sb2 },
        ])
    }

    pub fn scenario(s: Scenario) -> Self {
        let (rx, rb) = s.ratios();
        Self::strong_weak(Scenario::PHI1, rx, rb).expect("scenario constants are valid")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn phis(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.phi).collect()
    }

    pub fn sigma_x(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.sigma_x).collect()
    }

    pub fn sigma_beta(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.sigma_beta).collect()
    }

    /// Effective input variance `Σφᵢσ_x,i`.
    pub fn r(&self) -> f64 {
        self.blocks.iter().map(|b| b.phi * b.sigma_x).sum()
    }

    /// Teacher-score variance `Σφᵢσ_β,iσ_x,i`.
    pub fn rho(&self) -> f64 {
        self.blocks.iter().map(|b| b.phi * b.sigma_x * b.sigma_beta).sum()
    }
}

impl TryFrom<Vec<Block>> for BlockModel {
    type Error = Error;
    fn try_from(blocks: Vec<Block>) -> Result<Self> {
        Self::new(blocks)
    }
}

impl From<BlockModel> for Vec<Block> {
    fn from(m: BlockModel) -> Self {
        m.blocks
    }
}

/// The three strong/weak data scenarios with `φ₁ = 0.1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    #[serde(alias = "iso")]
    Isotropic,
    #[serde(alias = "mis")]
    Misaligned,
    #[serde(alias = "ali")]
    Aligned,
}

impl Scenario {
    pub const PHI1: f64 = 0.1;
    pub const ALL: [Scenario; 3] = [Scenario::Isotropic, Scenario::Misaligned, Scenario::Aligned];

    /// `(r_x, r_β)`.
    pub fn ratios(self) -> (f64, f64) {
        match self {
            Scenario::Isotropic => (1.0, 1.0),
            Scenario::Misaligned => (10.0, 0.01),
            Scenario::Aligned => (10.0, 100.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Isotropic => "isotropic",
            Scenario::Misaligned => "misaligned",
            Scenario::Aligned => "aligned",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "isotropic" | "iso" => Ok(Scenario::Isotropic),
            "misaligned" | "mis" => Ok(Scenario::Misaligned),
            "aligned" | "ali" => Ok(Scenario::Aligned),
            other => Err(param(format!("unknown scenario '{other}'"))),
        }
    }
}
