use ndarray::{Array1, Axis};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::montecarlo::rng::{stream, Stream};

use super::parse::ImageTensor;

/// Binary classification tasks built from the ten-class datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryTask {
    /// Even digits `+1`, odd digits `−1`.
    MnistParity,
    /// Airplanes (class 0) `+1`, automobiles (class 1) `−1`; other classes
    /// are dropped.
    CifarPlanesVsCars,
}

/// Images of a binary task with their `±1` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledImages {
    pub images: ImageTensor,
    pub targets: Array1<f64>,
}

pub fn binary_task(tensor: &ImageTensor, task: BinaryTask) -> LabelledImages {
    match task {
        BinaryTask::MnistParity => {
            let targets = tensor.labels.iter().map(|&l| if l % 2 == 0 { 1.0 } else { -1.0 }).collect();
            LabelledImages { images: tensor.clone(), targets }
        }
        BinaryTask::CifarPlanesVsCars => {
            let keep: Vec<usize> = (0..tensor.count()).filter(|&i| tensor.labels[i] <= 1).collect();
            let images = ImageTensor {
                data: tensor.data.select(Axis(0), &keep),
                labels: keep.iter().map(|&i| tensor.labels[i]).collect(),
            };
            let targets = images.labels.iter().map(|&l| if l == 0 { 1.0 } else { -1.0 }).collect();
            LabelledImages { images, targets }
        }
    }
}

/// Replaces `round(fraction·N)` labels, chosen without replacement, by
/// independent fair `±1` coins.
pub fn corrupt_labels(labels: &Array1<f64>, fraction: f64, seed: u64) -> Result<Array1<f64>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(param(format!("corruption fraction {fraction} outside [0, 1]")));
    }
    let n = labels.len();
    let k = (fraction * n as f64).round() as usize;
    let mut out = labels.clone();
    let mut rng = stream(seed, Stream::Corruption, 0);
    for i in sample(&mut rng, n, k).into_vec() {
        out[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    Ok(out)
}
