use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::gaussmoments::Activation;
use crate::montecarlo::rng::{stream, Stream};
use crate::montecarlo::{generalization, logistic_fit, mean_se, ridge_fit, train_loss, FeatureMap};
use crate::replica::Loss;

use super::parse::{parse_cifar10_bin, parse_idx_images, parse_idx_labels, ImageTensor};
use super::tasks::{binary_task, corrupt_labels, BinaryTask, LabelledImages};
use super::transform::{downscale, flatten, pca_apply, pca_fit, saliency_rescale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Mnist,
    Cifar10,
}

impl Dataset {
    pub fn task(self) -> BinaryTask {
        match self {
            Self::Mnist => BinaryTask::MnistParity,
            Self::Cifar10 => BinaryTask::CifarPlanesVsCars,
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mnist => "mnist",
            Self::Cifar10 => "cifar10",
        })
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(Self::Mnist),
            "cifar10" | "cifar-10" | "cifar" => Ok(Self::Cifar10),
            other => Err(Error::Config(format!("unknown dataset `{other}` (expected mnist or cifar10)"))),
        }
    }
}

/// Train and test splits of a binary task.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: LabelledImages,
    pub test: LabelledImages,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// First existing candidate, or the first one so that the error names it.
fn locate(dir: &Path, names: &[&str]) -> PathBuf {
    names.iter().map(|n| dir.join(n)).find(|p| p.exists()).unwrap_or_else(|| dir.join(names[0]))
}

fn load_mnist(dir: &Path) -> Result<(ImageTensor, ImageTensor)> {
    let split = |images: &[&str], labels: &[&str]| -> Result<ImageTensor> {
        let mut t = parse_idx_images(&read(&locate(dir, images))?)?;
        t.labels = parse_idx_labels(&read(&locate(dir, labels))?)?;
        if t.labels.len() != t.count() {
            return Err(Error::Data(format!("{} images but {} labels in {}", t.count(), t.labels.len(), dir.display())));
        }
        Ok(t)
    };
    Ok((
        split(&["train-images-idx3-ubyte", "train-images.idx3-ubyte"], &["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"])?,
        split(&["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"], &["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"])?,
    ))
}

fn load_cifar(dir: &Path) -> Result<(ImageTensor, ImageTensor)> {
    let dir = if dir.join("cifar-10-batches-bin").is_dir() { dir.join("cifar-10-batches-bin") } else { dir.to_path_buf() };
    let batches = (1..=5)
        .map(|k| Ok(parse_cifar10_bin(&read(&dir.join(format!("data_batch_{k}.bin")))?)?))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = batches.iter().map(|b| b.data.view()).collect();
    let train = ImageTensor {
        data: concatenate(Axis(0), &views).map_err(|e| Error::Data(e.to_string()))?,
        labels: batches.iter().flat_map(|b| b.labels.iter().copied()).collect(),
    };
    let test = parse_cifar10_bin(&read(&dir.join("test_batch.bin"))?)?;
    Ok((train, test))
}

/// Reads the standard distribution files from `dir` and builds the binary task.
pub fn load_dataset(dataset: Dataset, dir: &Path) -> Result<DatasetSplits> {
    let (train, test) = match dataset {
        Dataset::Mnist => load_mnist(dir)?,
        Dataset::Cifar10 => load_cifar(dir)?,
    };
    Ok(DatasetSplits { train: binary_task(&train, dataset.task()), test: binary_task(&test, dataset.task()) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    /// Optional pooling to `(height, width)` before the PCA.
    pub downscale: Option<(usize, usize)>,
    /// Principal components retained; this is the input dimension `D`.
    pub keep: usize,
    /// Saliency exponent: component `i` is divided by `stdᵢ^alpha`.
    pub alpha: f64,
}

/// Preprocessed design matrices, rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train_x: Array2<f64>,
    pub train_y: Array1<f64>,
    pub test_x: Array2<f64>,
    pub test_y: Array1<f64>,
    /// Training standard deviations of the retained components before
    /// rescaling.
    pub component_stds: Array1<f64>,
}

impl PreparedData {
    pub fn d(&self) -> usize {
        self.train_x.ncols()
    }
}

/// Pooling, PCA fitted on the training split, saliency rescaling, then one
/// global factor making the mean training variance per coordinate equal to
/// one. The test split reuses every training statistic.
pub fn preprocess(splits: &DatasetSplits, pre: &Preprocessing) -> Result<PreparedData> {
    let pooled = |t: &ImageTensor| match pre.downscale {
        Some((h, w)) => downscale(t, h, w),
        None => Ok(t.clone()),
    };
    let train_raw = flatten(&pooled(&splits.train.images)?);
    let test_raw = flatten(&pooled(&splits.test.images)?);
    let basis = pca_fit(train_raw.view())?;
    let train = pca_apply(&basis, train_raw.view(), pre.keep)?;
    let test = pca_apply(&basis, test_raw.view(), pre.keep)?;
    let stds = basis.stds.slice(ndarray::s![..pre.keep]).to_owned();
    let std_slice = stds.as_slice().expect("contiguous");
    let mut train_x = saliency_rescale(train.view(), std_slice, pre.alpha)?;
    let mut test_x = saliency_rescale(test.view(), std_slice, pre.alpha)?;
    let mean_var = std_slice.iter().map(|s| s.powf(2.0 - 2.0 * pre.alpha)).sum::<f64>() / pre.keep as f64;
    let scale = mean_var.sqrt().recip();
    train_x *= scale;
    test_x *= scale;
    if train_x.iter().chain(test_x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("preprocessing produced non-finite values".into()));
    }
    Ok(PreparedData {
        train_x,
        train_y: splits.train.targets.clone(),
        test_x,
        test_y: splits.test.targets.clone(),
        component_stds: stds,
    })
}

/// Random-feature experiment on prepared data, sizes relative to `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealDataSpec {
    pub activation: Activation,
    pub loss: Loss,
    pub lambda: f64,
    pub n_over_d: f64,
    pub p_over_d: f64,
    /// Fraction of training labels replaced by fair coins.
    pub corruption: f64,
    /// Test points used, all when `None`.
    pub n_test: Option<usize>,
    pub fit_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealSeedOutcome {
    pub seed: u64,
    /// Training loss on the (possibly corrupted) labels.
    pub eps_t: f64,
    /// Sign-disagreement rate on the clean test labels.
    pub eps_g: f64,
}

pub fn run_realdata_seed(data: &PreparedData, spec: &RealDataSpec, seed: u64) -> Result<RealSeedOutcome> {
    let d = data.d();
    let n = (spec.n_over_d * d as f64).round() as usize;
    let p = (spec.p_over_d * d as f64).round() as usize;
    if n == 0 || p == 0 {
        return Err(param(format!("N = {n}, P = {p} at D = {d}")));
    }
    if n > data.train_x.nrows() {
        return Err(Error::Data(format!("N = {n} exceeds the {} training samples", data.train_x.nrows())));
    }
    let mut rng = stream(seed, Stream::Subsample, 0);
    let rows = sample(&mut rng, data.train_x.nrows(), n).into_vec();
    let x = data.train_x.select(Axis(0), &rows);
    let y = corrupt_labels(&data.train_y.select(Axis(0), &rows), spec.corruption, seed)?;
    let map = FeatureMap::sample(p, d, spec.activation, seed)?;
    let z = map.transform(x.view())?;
    let student = match spec.loss {
        Loss::Square => ridge_fit(z.view(), y.view(), spec.lambda)?,
        Loss::Logistic => logistic_fit(z.view(), y.view(), spec.lambda, spec.fit_tol)?,
    };
    let train_out = z.dot(&student.weights);
    let m = spec.n_test.unwrap_or(data.test_x.nrows()).min(data.test_x.nrows());
    let test_x = data.test_x.slice(ndarray::s![..m, ..]);
    let test_out = map.predict(test_x, student.weights.view())?;
    Ok(RealSeedOutcome {
        seed,
        eps_t: train_loss(spec.loss, y.view(), train_out.view()),
        eps_g: generalization(true, data.test_y.slice(ndarray::s![..m]), test_out.view()),
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealDataSummary {
    pub eps_g_median: f64,
    pub eps_g_mean: f64,
    pub eps_g_se: f64,
    pub eps_t_median: f64,
    pub eps_t_mean: f64,
    pub eps_t_se: f64,
    pub outcomes: Vec<RealSeedOutcome>,
}

/// Runs `seeds` in parallel; outcomes keep the order of `seeds`.
pub fn run_realdata(data: &PreparedData, spec: &RealDataSpec, seeds: &[u64]) -> Result<RealDataSummary> {
    if seeds.is_empty() {
        return Err(param("need at least one seed"));
    }
    let outcomes: Vec<RealSeedOutcome> =
        seeds.par_iter().map(|&s| run_realdata_seed(data, spec, s)).collect::<Result<_>>()?;
    let eg: Vec<f64> = outcomes.iter().map(|o| o.eps_g).collect();
    let et: Vec<f64> = outcomes.iter().map(|o| o.eps_t).collect();
    let (eps_g_mean, eps_g_se) = mean_se(&eg);
    let (eps_t_mean, eps_t_se) = mean_se(&et);
    Ok(RealDataSummary {
        eps_g_median: median(&eg),
        eps_g_mean,
        eps_g_se,
        eps_t_median: median(&et),
        eps_t_mean,
        eps_t_se,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::realdata::{encode_idx, IdxContent};
    use ndarray::Array4;
    use rand::Rng;

    /// Synthetic ten-class "digits": class `c` lights pixel row `c`.
    fn fake_split(count: usize, seed: u64) -> ImageTensor {
        let mut rng = stream(seed, Stream::TrainInputs, 0);
        let labels: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
        let data = Array4::from_shape_fn((count, 12, 12, 1), |(i, r, _, _)| {
            let base = if r == labels[i] as usize { 0.8 } else { 0.1 };
            (base + 0.1 * rng.random::<f64>()).min(1.0)
        });
        ImageTensor { data, labels }
    }

    fn write_mnist(dir: &Path) {
        for (stem, t) in [("train", fake_split(300, 1)), ("t10k", fake_split(100, 2))] {
            let images = IdxContent::Images(ImageTensor { data: t.data, labels: vec![] });
            std::fs::write(dir.join(format!("{stem}-images-idx3-ubyte")), encode_idx(&images)).unwrap();
            std::fs::write(dir.join(format!("{stem}-labels-idx1-ubyte")), encode_idx(&IdxContent::Labels(t.labels))).unwrap();
        }
    }

    fn spec(loss: Loss) -> RealDataSpec {
        RealDataSpec {
            activation: Activation::Tanh,
            loss,
            lambda: 1e-3,
            n_over_d: 2.0,
            p_over_d: 3.0,
            corruption: 0.0,
            n_test: None,
            fit_tol: 1e-8,
        }
    }

    #[test]
    fn end_to_end_on_synthetic_idx_files() {
        let dir = tempfile::tempdir().unwrap();
        write_mnist(dir.path());
        let splits = load_dataset(Dataset::Mnist, dir.path()).unwrap();
        assert_eq!((splits.train.images.count(), splits.test.images.count()), (300, 100));
        // Pooling columns only keeps the lit row visible.
        let pre = Preprocessing { downscale: Some((12, 6)), keep: 20, alpha: 1.0 };
        let data = preprocess(&splits, &pre).unwrap();
        assert_eq!((data.train_x.dim(), data.test_x.nrows()), ((300, 20), 100));
        let var = data.train_x.var_axis(Axis(0), 1.0);
        assert!(var.iter().all(|v| (v - 1.0).abs() < 1e-8));
        for loss in [Loss::Square, Loss::Logistic] {
            let sp = RealDataSpec { n_over_d: 10.0, ..spec(loss) };
            let s = run_realdata(&data, &sp, &[1, 2, 3]).unwrap();
            assert_eq!(s.outcomes.len(), 3);
            // The classes are linearly separable from the row intensities.
            assert!(s.eps_g_median < 0.2, "{loss:?}: {}", s.eps_g_median);
            assert_eq!(s, run_realdata(&data, &sp, &[1, 2, 3]).unwrap());
        }
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(Dataset::Mnist, dir.path()), Err(Error::Io { .. })));
        assert!(matches!(load_dataset(Dataset::Cifar10, dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn unit_mean_variance_for_any_alpha() {
        let splits = DatasetSplits {
            train: binary_task(&fake_split(200, 3), BinaryTask::MnistParity),
            test: binary_task(&fake_split(50, 4), BinaryTask::MnistParity),
        };
        for alpha in [0.0, 0.5, 1.5] {
            let data = preprocess(&splits, &Preprocessing { downscale: None, keep: 30, alpha }).unwrap();
            let mean_var = data.train_x.var_axis(Axis(0), 1.0).mean().unwrap();
            assert!((mean_var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn oversized_n_is_rejected() {
        let splits = DatasetSplits {
            train: binary_task(&fake_split(40, 5), BinaryTask::MnistParity),
            test: binary_task(&fake_split(20, 6), BinaryTask::MnistParity),
        };
        let data = preprocess(&splits, &Preprocessing { downscale: None, keep: 10, alpha: 0.0 }).unwrap();
        let big = RealDataSpec { n_over_d: 5.0, ..spec(Loss::Square) };
        assert!(matches!(run_realdata_seed(&data, &big, 0), Err(Error::Data(_))));
    }

    #[test]
    fn median_of_even_and_odd_lengths() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
