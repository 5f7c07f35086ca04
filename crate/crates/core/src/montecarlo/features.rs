use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{param, Result};
use crate::gaussmoments::Activation;

use super::rng::{stream, Stream};

/// Rows processed at once when only predictions are needed.
const CHUNK_ROWS: usize = 2048;

/// Random-feature map `z(x) = σ(Fx/√D)/√P`. The `1/√P` belongs to the map so
/// that `‖ŵ‖²/P` stays of order one.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    /// `P × D`, i.i.d. standard Gaussian.
    pub f_matrix: Array2<f64>,
    pub activation: Activation,
    pub seed: u64,
}

impl FeatureMap {
    pub fn sample(p: usize, d: usize, activation: Activation, seed: u64) -> Result<Self> {
        if p == 0 || d == 0 {
            return Err(param("feature map needs P ≥ 1 and D ≥ 1"));
        }
        let mut rng = stream(seed, Stream::Features, 0);
        let f_matrix = Array2::from_shape_simple_fn((p, d), || rng.sample::<f64, _>(StandardNormal));
        Ok(Self { f_matrix, activation, seed })
    }

    pub fn p(&self) -> usize {
        self.f_matrix.nrows()
    }

    pub fn d(&self) -> usize {
        self.f_matrix.ncols()
    }

    /// Feature matrix `Z`, `N × P`.
    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.d() {
            return Err(param(format!("inputs have {} columns, map expects {}", x.ncols(), self.d())));
        }
        let inv_sqrt_d = 1.0 / (self.d() as f64).sqrt();
        let inv_sqrt_p = 1.0 / (self.p() as f64).sqrt();
        let act = self.activation;
        let mut z = x.dot(&self.f_matrix.t());
        z.mapv_inplace(|u| act.eval(u * inv_sqrt_d) * inv_sqrt_p);
        Ok(z)
    }

    /// Student outputs `Z w` without materializing all of `Z`.
    pub fn predict(&self, x: ArrayView2<'_, f64>, w: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if w.len() != self.p() {
            return Err(param("weight length differs from P"));
        }
        let mut out = Array1::zeros(x.nrows());
        let mut start = 0;
        while start < x.nrows() {
            let end = (start + CHUNK_ROWS).min(x.nrows());
            let z = self.transform(x.slice(s![start..end, ..]))?;
            out.slice_mut(s![start..end]).assign(&z.dot(&w));
            start = end;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_and_predict_agree() {
        let map = FeatureMap::sample(7, 5, Activation::Tanh, 2).unwrap();
        let x = Array2::from_shape_fn((3000, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let w = Array1::from_iter((0..7).map(|k| k as f64 - 3.0));
        let z = map.transform(x.view()).unwrap();
        let direct = z.dot(&w);
        let chunked = map.predict(x.view(), w.view()).unwrap();
        assert!(direct.iter().zip(&chunked).all(|(a, b)| (a - b).abs() < 1e-13));
        // Spot-check one entry against the definition.
        let u = x.row(4).dot(&map.f_matrix.row(2)) / 5f64.sqrt();
        assert!((z[[4, 2]] - u.tanh() / 7f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_in_seed() {
        let a = FeatureMap::sample(4, 3, Activation::Relu, 9).unwrap();
        let b = FeatureMap::sample(4, 3, Activation::Relu, 9).unwrap();
        assert_eq!(a.f_matrix, b.f_matrix);
        assert!(FeatureMap::sample(0, 3, Activation::Relu, 9).is_err());
    }
}
