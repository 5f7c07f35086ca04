use log::warn;
use ndarray::{Array1, Array2, Array4, ArrayView2, Axis};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{param, Error, Result};
use crate::linalg::gram_t;

use super::parse::ImageTensor;

/// Row `i` holds the fraction of output cell `i` covered by each input cell
/// when `n_in` cells are pooled into `n_out`.
fn pooling_weights(n_in: usize, n_out: usize) -> Array2<f64> {
    let scale = n_in as f64 / n_out as f64;
    Array2::from_shape_fn((n_out, n_in), |(i, k)| {
        let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
        let overlap = (hi.min(k as f64 + 1.0) - lo.max(k as f64)).max(0.0);
        overlap / scale
    })
}

/// Area-average pooling to `out_h × out_w`; colour channels are averaged to
/// grayscale first.
pub fn downscale(tensor: &ImageTensor, out_h: usize, out_w: usize) -> Result<ImageTensor> {
    let (h, w) = (tensor.height(), tensor.width());
    if out_h == 0 || out_w == 0 || out_h > h || out_w > w {
        return Err(param(format!("cannot pool {h}×{w} to {out_h}×{out_w}")));
    }
    let wy = pooling_weights(h, out_h);
    let wx = pooling_weights(w, out_w);
    let gray = tensor.data.mean_axis(Axis(3)).expect("at least one channel");
    let mut out = Array4::<f64>::zeros((tensor.count(), out_h, out_w, 1));
    for (img, mut dst) in gray.outer_iter().zip(out.outer_iter_mut()) {
        let pooled = wy.dot(&img).dot(&wx.t());
        dst.index_axis_mut(Axis(2), 0).assign(&pooled);
    }
    Ok(ImageTensor { data: out, labels: tensor.labels.clone() })
}

/// Flattens images to rows of a `count × (h·w·c)` matrix.
pub fn flatten(tensor: &ImageTensor) -> Array2<f64> {
    let n = tensor.count();
    let dim = tensor.data.len() / n.max(1);
    tensor
        .data
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, dim))
        .expect("contiguous tensor")
}

/// Principal directions of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Array1<f64>,
    /// Orthonormal rows, sorted by decreasing variance.
    pub components: Array2<f64>,
    /// Training standard deviation along each component.
    pub stds: Array1<f64>,
    /// Number of components with non-negligible variance.
    pub rank: usize,
}

pub fn pca_fit(train: ArrayView2<'_, f64>) -> Result<PcaBasis> {
    let (n, dim) = train.dim();
    if n < 2 || dim == 0 {
        return Err(param("PCA needs at least two samples and one feature"));
    }
    let mean = train.mean_axis(Axis(0)).expect("non-empty");
    let centered = &train - &mean;
    let cov = gram_t(centered.view(), 1.0 / (n as f64 - 1.0));
    let (vals, vecs) = cov.eigh(UPLO::Lower)?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut components = Array2::<f64>::zeros((dim, dim));
    for (row, &k) in order.iter().enumerate() {
        let mut v = vecs.column(k).to_owned();
        // Fix the sign so that the largest entry is positive.
        let pivot = v.iter().fold(0.0f64, |m, &x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.mapv_inplace(|x| -x);
        }
        components.row_mut(row).assign(&v);
    }
    let stds = Array1::from_iter(order.iter().map(|&k| vals[k].max(0.0).sqrt()));
    // Eigenvalues below 100·dim·ε·λ_max are rounding noise of the covariance.
    let tol = (100.0 * dim as f64 * f64::EPSILON).sqrt() * stds[0].max(f64::MIN_POSITIVE);
    let rank = stds.iter().filter(|&&s| s > tol).count();
    Ok(PcaBasis { mean, components, stds, rank })
}

/// Centres with the training mean and projects on the leading `keep`
/// components.
pub fn pca_apply(basis: &PcaBasis, inputs: ArrayView2<'_, f64>, keep: usize) -> Result<Array2<f64>> {
    let dim = basis.mean.len();
    if keep == 0 || keep > dim {
        return Err(param(format!("keep = {keep} outside 1..={dim}")));
    }
    if inputs.ncols() != dim {
        return Err(param("input width differs from the PCA basis"));
    }
    if keep > basis.rank {
        warn!("keeping {keep} components but only {} have non-zero variance", basis.rank);
    }
    let centered = &inputs - &basis.mean;
    Ok(centered.dot(&basis.components.slice(ndarray::s![..keep, ..]).t()))
}

/// Divides column `i` by `stds[i]^alpha`.
pub fn saliency_rescale(features: ArrayView2<'_, f64>, stds: &[f64], alpha: f64) -> Result<Array2<f64>> {
    if stds.len() != features.ncols() {
        return Err(param("one standard deviation per column is required"));
    }
    if let Some(i) = stds.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Data(format!("feature {i} is degenerate (std = {})", stds[i])));
    }
    let factors = Array1::from_iter(stds.iter().map(|s| s.powf(-alpha)));
    Ok(&features * &factors)
}
