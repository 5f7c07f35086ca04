use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{param, Result};
use crate::replica::{BlockModel, Channel, ChannelKind};

use super::rng::{stream, Stream};

/// Finite-size block widths: `round(φᵢD)`, the last block absorbing the
/// rounding so that the widths sum to `D`.
pub fn block_sizes(phis: &[f64], d: usize) -> Result<Vec<usize>> {
    let mut sizes: Vec<usize> = phis.iter().map(|p| (p * d as f64).round() as usize).collect();
    let head: usize = sizes[..sizes.len() - 1].iter().sum();
    if head >= d {
        return Err(param(format!("D = {d} too small for {} blocks", phis.len())));
    }
    *sizes.last_mut().expect("at least one block") = d - head;
    if sizes.contains(&0) {
        return Err(param(format!("D = {d} leaves an empty block")));
    }
    Ok(sizes)
}

/// Per-coordinate values expanded from per-block values.
pub(crate) fn expand(values: &[f64], sizes: &[usize]) -> Vec<f64> {
    values.iter().zip(sizes).flat_map(|(&v, &n)| std::iter::repeat(v).take(n)).collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    /// `N × D`.
    pub inputs: Array2<f64>,
    /// Teacher `β`, length `D`.
    pub teacher: Array1<f64>,
    /// Observed labels.
    pub labels: Array1<f64>,
    /// Noise-free teacher scores `β·x/√D`.
    pub scores: Array1<f64>,
    pub model: BlockModel,
    pub channel: Channel,
    pub seed: u64,
}

impl SyntheticDataset {
    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn d(&self) -> usize {
        self.inputs.ncols()
    }

    /// Targets against which the generalization error is measured: the clean
    /// score for regression, its sign for classification.
    pub fn clean_targets(&self) -> Array1<f64> {
        if self.channel.is_classification() {
            self.scores.mapv(sign)
        } else {
            self.scores.clone()
        }
    }
}

pub(crate) fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Draws a teacher `β ~ N(0, diag σ_β)`.
pub fn sample_teacher(model: &BlockModel, d: usize, seed: u64) -> Result<Array1<f64>> {
    let sizes = block_sizes(&model.phis(), d)?;
    let sd = expand(&model.sigma_beta().iter().map(|s| s.sqrt()).collect::<Vec<_>>(), &sizes);
    let mut rng = stream(seed, Stream::Teacher, 0);
    Ok(Array1::from_iter(sd.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal))))
}

/// Training set with a freshly drawn teacher.
pub fn sample_dataset(model: &BlockModel, channel: &Channel, n: usize, d: usize, seed: u64) -> Result<SyntheticDataset> {
    if n == 0 {
        return Err(param("need at least one sample"));
    }
    let teacher = sample_teacher(model, d, seed)?;
    draw(model, channel, teacher, n, seed, Stream::TrainInputs, Stream::TrainNoise)
}

/// Fresh samples labelled by the same teacher as `train`.
pub fn sample_test_set(train: &SyntheticDataset, n: usize) -> Result<SyntheticDataset> {
    if n == 0 {
        return Err(param("need at least one test sample"));
    }
    draw(&train.model, &train.channel, train.teacher.clone(), n, train.seed, Stream::TestInputs, Stream::TestNoise)
}

fn draw(
    model: &BlockModel,
    channel: &Channel,
    teacher: Array1<f64>,
    n: usize,
    seed: u64,
    inputs_tag: Stream,
    noise_tag: Stream,
) -> Result<SyntheticDataset> {
    let d = teacher.len();
    let sizes = block_sizes(&model.phis(), d)?;
    let sd = expand(&model.sigma_x().iter().map(|s| s.sqrt()).collect::<Vec<_>>(), &sizes);
    let mut rng = stream(seed, inputs_tag, 0);
    let inputs = Array2::from_shape_fn((n, d), |(_, j)| sd[j] * rng.sample::<f64, _>(StandardNormal));
    let scores = inputs.dot(&teacher) / (d as f64).sqrt();
    let mut noise = stream(seed, noise_tag, 0);
    let delta = channel.delta();
    let labels = match channel.kind() {
        ChannelKind::RegressionGaussian => {
            scores.mapv(|s| s + delta.sqrt() * noise.sample::<f64, _>(StandardNormal))
        }
        _ => scores.mapv(|s| {
            let flip = noise.random::<f64>() < delta;
            if flip {
                -sign(s)
            } else {
                sign(s)
            }
        }),
    };
    Ok(SyntheticDataset { inputs, teacher, labels, scores, model: model.clone(), channel: *channel, seed })
}

/// Column-block sample variances, for diagnostics.
pub fn block_variances(data: &SyntheticDataset) -> Result<Vec<f64>> {
    let sizes = block_sizes(&data.model.phis(), data.d())?;
    let var = data.inputs.var_axis(Axis(0), 1.0);
    let mut start = 0;
    Ok(sizes
        .iter()
        .map(|&n| {
            let v = var.slice(ndarray::s![start..start + n]).mean().unwrap_or(0.0);
            start += n;
            v
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replica::Scenario;

    #[test]
    fn block_sizes_absorb_rounding() {
        assert_eq!(block_sizes(&[0.1, 0.9], 100).unwrap(), vec![10, 90]);
        assert_eq!(block_sizes(&[1.0 / 3.0; 3], 10).unwrap(), vec![3, 3, 4]);
        assert!(block_sizes(&[0.15, 0.85], 3).is_err());
        assert!(block_sizes(&[0.1, 0.9], 4).is_err());
    }

    #[test]
    fn isotropic_coordinates_have_unit_variance() {
        let data = sample_dataset(&BlockModel::isotropic(), &Channel::regression(0.0).unwrap(), 10_000, 20, 5).unwrap();
        let var = data.inputs.var_axis(Axis(0), 1.0);
        // SE of a sample variance of N(0,1) is √(2/(N−1)).
        let se = (2.0 / 9_999.0f64).sqrt();
        assert!(var.iter().all(|v| (v - 1.0).abs() < 5.0 * se));
    }

    #[test]
    fn two_block_variances() {
        let model = BlockModel::scenario(Scenario::Aligned);
        let data = sample_dataset(&model, &Channel::regression(0.0).unwrap(), 10_000, 100, 9).unwrap();
        let got = block_variances(&data).unwrap();
        for ((g, s), n) in got.iter().zip(model.sigma_x()).zip([10.0, 90.0]) {
            let se = s * (2.0 / (9_999.0 * n as f64)).sqrt();
            assert!((g - s).abs() < 5.0 * se, "{g} vs {s}");
        }
    }

    #[test]
    fn noiseless_classification_labels_are_teacher_signs() {
        let data = sample_dataset(&BlockModel::isotropic(), &Channel::logistic(0.0).unwrap(), 500, 30, 1).unwrap();
        assert_eq!(data.labels, data.scores.mapv(sign));
        let test = sample_test_set(&data, 50).unwrap();
        assert_eq!(test.teacher, data.teacher);
        assert_ne!(test.inputs.row(0), data.inputs.row(0));
    }

    #[test]
    fn deterministic_in_seed() {
        let ch = Channel::square_classification(0.3).unwrap();
        let a = sample_dataset(&BlockModel::isotropic(), &ch, 40, 25, 3).unwrap();
        let b = sample_dataset(&BlockModel::isotropic(), &ch, 40, 25, 3).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.labels, b.labels);
    }
}
