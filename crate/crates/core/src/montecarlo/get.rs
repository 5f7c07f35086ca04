//! Empirical check of the Gaussian-equivalence covariance of random features.

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{param, Result};
use crate::gaussmoments::{kappa_constants, Activation};
use crate::replica::BlockModel;

use super::data::{block_sizes, expand};
use super::rng::{stream, Stream};

const CHUNK: usize = 5_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GetReport {
    pub max_abs_z: f64,
    /// `(μ, ν, empirical mean, standard error, prediction)` per pair.
    pub pairs: Vec<(usize, usize, f64, f64, f64)>,
}

impl GetReport {
    pub fn z_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|&(_, _, mean, se, pred)| (mean - pred) / se)
    }
}

/// Pairs tested: every feature's variance plus the leading off-diagonal
/// pairs in lexicographic order, about one diagonal entry per five pairs.
fn pair_list(pairs: usize) -> (usize, Vec<(usize, usize)>) {
    let mut nf = pairs.div_ceil(5).max(1);
    while nf + nf * (nf - 1) / 2 < pairs {
        nf += 1;
    }
    let mut list: Vec<(usize, usize)> = (0..nf.min(pairs)).map(|i| (i, i)).collect();
    'outer: for i in 0..nf {
        for j in (i + 1)..nf {
            if list.len() == pairs {
                break 'outer;
            }
            list.push((i, j));
        }
    }
    (nf, list)
}

/// Samples `E_x[σ(x·F_μ/√D) σ(x·F_ν/√D)]` over `samples` inputs and returns
/// the largest |z|-score against
/// `κ₀² + κ₁² Σᵢ σ_x,i F^i_μ·F^i_ν/D + κ★² δ_μν`.
///
/// Rows are normalized block by block to `‖F^i_μ‖² = φᵢD`, so each
/// pre-activation has variance exactly `r = Σφᵢσ_x,i` and the κ's are
/// evaluated where the expansion is made.
pub fn get_covariance_check(
    model: &BlockModel,
    activation: Activation,
    d: usize,
    pairs: usize,
    samples: usize,
    seed: u64,
) -> Result<GetReport> {
    if d < 500 {
        return Err(param("the covariance check needs d >= 500"));
    }
    if pairs == 0 || samples < 2 {
        return Err(param("need at least one pair and two samples"));
    }
    let sizes = block_sizes(&model.phis(), d)?;
    let (nf, list) = pair_list(pairs);
    let mut rng = stream(seed, Stream::GetFeatures, 0);
    let mut f = Array2::from_shape_simple_fn((nf, d), || rng.sample::<f64, _>(StandardNormal));
    for mut row in f.rows_mut() {
        let mut start = 0;
        for (&n, phi) in sizes.iter().zip(model.phis()) {
            let mut blk = row.slice_mut(s![start..start + n]);
            let norm = blk.dot(&blk).sqrt();
            blk *= (phi * d as f64).sqrt() / norm;
            start += n;
        }
    }
    let k = kappa_constants(activation, model.r())?;
    let sx = expand(&model.sigma_x(), &sizes);
    let predictions: Vec<f64> = list
        .iter()
        .map(|&(a, b)| {
            let overlap: f64 = (0..d).map(|j| sx[j] * f[[a, j]] * f[[b, j]]).sum::<f64>() / d as f64;
            let diag = if a == b { k.kappa_star * k.kappa_star } else { 0.0 };
            k.kappa0 * k.kappa0 + k.kappa1 * k.kappa1 * overlap + diag
        })
        .collect();

    let sd: Vec<f64> = sx.iter().map(|v| v.sqrt()).collect();
    let ft = f.t().to_owned();
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let chunks = samples.div_ceil(CHUNK);
    // Per chunk: sums and sums of squares of every pair product.
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let rows = CHUNK.min(samples - c * CHUNK);
            let mut rng = stream(seed, Stream::GetInputs, c as u64);
            let x = Array2::from_shape_fn((rows, d), |(_, j)| sd[j] * rng.sample::<f64, _>(StandardNormal));
            let act = x.dot(&ft).mapv(|u| activation.eval(u * inv_sqrt_d));
            let mut sum = vec![0.0; list.len()];
            let mut sq = vec![0.0; list.len()];
            for row in act.axis_iter(Axis(0)) {
                for (p, &(a, b)) in list.iter().enumerate() {
                    let v = row[a] * row[b];
                    sum[p] += v;
                    sq[p] += v * v;
                }
            }
            (sum, sq)
        })
        .collect();
    let n = samples as f64;
    let mut out = Vec::with_capacity(list.len());
    let mut max_abs_z: f64 = 0.0;
    for (p, &(a, b)) in list.iter().enumerate() {
        let sum: f64 = partial.iter().map(|(s, _)| s[p]).sum();
        let sq: f64 = partial.iter().map(|(_, q)| q[p]).sum();
        let mean = sum / n;
        let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
        let se = (var / n).sqrt();
        let z = (mean - predictions[p]) / se;
        max_abs_z = max_abs_z.max(z.abs());
        out.push((a, b, mean, se, predictions[p]));
    }
    Ok(GetReport { max_abs_z, pairs: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replica::Scenario;

    #[test]
    fn pair_layout() {
        let (nf, list) = pair_list(100);
        assert_eq!(nf, 20);
        assert_eq!(list.len(), 100);
        assert_eq!(list.iter().filter(|(a, b)| a == b).count(), 20);
        let (nf, list) = pair_list(3);
        assert_eq!((nf, list), (2, vec![(0, 0), (1, 1), (0, 1)]));
    }

    #[test]
    fn identity_activation_is_exactly_gaussian() {
        let r = get_covariance_check(&BlockModel::scenario(Scenario::Aligned), Activation::Identity, 500, 30, 20_000, 1).unwrap();
        assert!(r.max_abs_z <= 5.0, "{}", r.max_abs_z);
    }

    #[test]
    fn detects_a_wrong_prediction() {
        let r = get_covariance_check(&BlockModel::isotropic(), Activation::Relu, 500, 10, 20_000, 2).unwrap();
        // Dropping κ₀² must be visible on the diagonal.
        let k = kappa_constants(Activation::Relu, 1.0).unwrap();
        let worst = r
            .pairs
            .iter()
            .map(|&(_, _, m, se, p)| ((m - (p - k.kappa0.powi(2))) / se).abs())
            .fold(0.0, f64::max);
        assert!(worst > 20.0);
    }
}
