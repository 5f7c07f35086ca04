use ndarray::{s, Array1, ArrayView1};

use crate::error::{param, Result};
use crate::replica::{BlockModel, Loss, OrderParams};

use super::data::{block_sizes, sign, SyntheticDataset};
use super::features::FeatureMap;
use super::fit::TrainedStudent;

/// Which test labels the generalization error is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TestTarget {
    /// Noise-free teacher output; what the theory predicts.
    #[default]
    CleanTeacher,
    /// The noisy labels themselves, for diagnostics.
    NoisyLabels,
}

/// Training loss without the regularizer and generalization error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalErrors {
    pub eps_t: f64,
    pub eps_g: f64,
}

pub fn empirical_errors(
    student: &TrainedStudent,
    map: &FeatureMap,
    train: &SyntheticDataset,
    test: &SyntheticDataset,
) -> Result<EmpiricalErrors> {
    empirical_errors_with(student, map, train, test, TestTarget::CleanTeacher)
}

pub fn empirical_errors_with(
    student: &TrainedStudent,
    map: &FeatureMap,
    train: &SyntheticDataset,
    test: &SyntheticDataset,
    target: TestTarget,
) -> Result<EmpiricalErrors> {
    let w = student.weights.view();
    let train_out = map.predict(train.inputs.view(), w)?;
    let test_out = map.predict(test.inputs.view(), w)?;
    let truth = match target {
        TestTarget::CleanTeacher => test.clean_targets(),
        TestTarget::NoisyLabels => test.labels.clone(),
    };
    Ok(EmpiricalErrors {
        eps_t: train_loss(student.loss, train.labels.view(), train_out.view()),
        eps_g: generalization(train.channel.is_classification(), truth.view(), test_out.view()),
    })
}

pub(crate) fn train_loss(loss: Loss, labels: ArrayView1<'_, f64>, outputs: ArrayView1<'_, f64>) -> f64 {
    labels.iter().zip(outputs).map(|(&y, &x)| loss.value(y, x)).sum::<f64>() / labels.len() as f64
}

/// Half mean-square error, or the sign-disagreement rate for classification.
pub(crate) fn generalization(classification: bool, truth: ArrayView1<'_, f64>, outputs: ArrayView1<'_, f64>) -> f64 {
    let n = truth.len() as f64;
    if classification {
        truth.iter().zip(outputs).filter(|(&t, &x)| sign(t) != sign(x)).count() as f64 / n
    } else {
        0.5 * truth.iter().zip(outputs).map(|(t, x)| (t - x).powi(2)).sum::<f64>() / n
    }
}

/// Single-sample overlaps with `s = Fᵀŵ/√P`: per block
/// `m_s,i = sᵢ·βᵢ/D`, `q_s,i = ‖sᵢ‖²/D`, and `q_w = ‖ŵ‖²/P`. Response terms
/// are not observable from one fit and are returned as zero.
pub fn empirical_order_params(
    student: &TrainedStudent,
    map: &FeatureMap,
    teacher: ArrayView1<'_, f64>,
    model: &BlockModel,
) -> Result<OrderParams> {
    let d = map.d();
    if teacher.len() != d {
        return Err(param("teacher length differs from D"));
    }
    let p = map.p() as f64;
    let s_vec: Array1<f64> = map.f_matrix.t().dot(&student.weights) / p.sqrt();
    let sizes = block_sizes(&model.phis(), d)?;
    let mut start = 0;
    let mut order = OrderParams::zeros(model.len());
    for (i, &n) in sizes.iter().enumerate() {
        let si = s_vec.slice(s![start..start + n]);
        let bi = teacher.slice(s![start..start + n]);
        order.m_s[i] = si.dot(&bi) / d as f64;
        order.q_s[i] = si.dot(&si) / d as f64;
        start += n;
    }
    order.q_w = student.weights.dot(&student.weights) / p;
    Ok(order)
}

/// Empirical covariance summary `(M, Q)` of student and teacher scores on a
/// sample, for comparison with the order-parameter route.
pub fn score_moments(student_out: ArrayView1<'_, f64>, teacher_scores: ArrayView1<'_, f64>) -> (f64, f64) {
    let n = student_out.len() as f64;
    let m = student_out.dot(&teacher_scores) / n;
    let q = student_out.dot(&student_out) / n;
    (m, q)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussmoments::Activation;
    use crate::montecarlo::data::{sample_dataset, sample_test_set};
    use crate::montecarlo::fit::{ridge_fit, OptimizerReport};
    use crate::replica::{Channel, Scenario};

    fn zero_student(p: usize, loss: Loss) -> TrainedStudent {
        TrainedStudent {
            weights: Array1::zeros(p),
            lambda: 1.0,
            loss,
            report: OptimizerReport { iterations: 0, gradient_norm: 0.0, fallback_steps: 0 },
        }
    }

    #[test]
    fn zero_student_predicts_nothing() {
        let model = BlockModel::scenario(Scenario::Aligned);
        let ch = Channel::square_classification(0.0).unwrap();
        let train = sample_dataset(&model, &ch, 50, 40, 1).unwrap();
        let test = sample_test_set(&train, 4000).unwrap();
        let map = FeatureMap::sample(30, 40, Activation::Tanh, 1).unwrap();
        let st = zero_student(30, Loss::Square);
        let o = empirical_order_params(&st, &map, train.teacher.view(), &model).unwrap();
        assert_eq!(o, OrderParams::zeros(2));
        // sign(0) counts as +1: the error is the fraction of negative teachers.
        let e = empirical_errors(&st, &map, &train, &test).unwrap();
        let se = (0.25f64 / 4000.0).sqrt();
        assert!((e.eps_g - 0.5).abs() < 5.0 * se);
        assert_eq!(e.eps_t, 0.5);
    }

    #[test]
    fn linear_noiseless_student_recovers_teacher() {
        let model = BlockModel::isotropic();
        let ch = Channel::regression(0.0).unwrap();
        let (n, d, p) = (800, 50, 200);
        let train = sample_dataset(&model, &ch, n, d, 2).unwrap();
        let test = sample_test_set(&train, 2000).unwrap();
        let map = FeatureMap::sample(p, d, Activation::Identity, 2).unwrap();
        let z = map.transform(train.inputs.view()).unwrap();
        let st = ridge_fit(z.view(), train.labels.view(), 1e-10).unwrap();
        let e = empirical_errors(&st, &map, &train, &test).unwrap();
        assert!(e.eps_g < 1e-8 && e.eps_t < 1e-8);
    }

    #[test]
    fn cauchy_schwarz_per_block() {
        let model = BlockModel::scenario(Scenario::Misaligned);
        let ch = Channel::regression(0.2).unwrap();
        let train = sample_dataset(&model, &ch, 60, 50, 3).unwrap();
        let map = FeatureMap::sample(70, 50, Activation::Relu, 3).unwrap();
        let z = map.transform(train.inputs.view()).unwrap();
        let st = ridge_fit(z.view(), train.labels.view(), 1e-2).unwrap();
        let o = empirical_order_params(&st, &map, train.teacher.view(), &model).unwrap();
        let sizes = block_sizes(&model.phis(), 50).unwrap();
        let mut start = 0;
        for (i, n) in sizes.into_iter().enumerate() {
            let b = train.teacher.slice(s![start..start + n]);
            assert!(o.m_s[i].powi(2) <= o.q_s[i] * b.dot(&b) / 50.0 * (1.0 + 1e-12));
            start += n;
        }
    }

    #[test]
    fn noisy_target_flag() {
        let model = BlockModel::isotropic();
        let ch = Channel::square_classification(0.5).unwrap();
        let train = sample_dataset(&model, &ch, 20, 20, 4).unwrap();
        let test = sample_test_set(&train, 100).unwrap();
        let map = FeatureMap::sample(10, 20, Activation::Tanh, 4).unwrap();
        let st = zero_student(10, Loss::Square);
        let clean = empirical_errors_with(&st, &map, &train, &test, TestTarget::CleanTeacher).unwrap();
        let noisy = empirical_errors_with(&st, &map, &train, &test, TestTarget::NoisyLabels).unwrap();
        assert_ne!(clean.eps_g, noisy.eps_g);
    }
}
