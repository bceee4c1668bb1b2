use super::mlp::{Gradients, MlpModel};
use super::tensor::{Real, Tensor2};
use crate::error::{ensure, Result};

/// Loss value split into its two terms, with parameter gradients.
#[derive(Debug, Clone)]
pub struct LossOutput<T = f32> {
    /// `classification + distillation`
    pub loss: T,
    pub classification: T,
    pub distillation: T,
    pub grads: Gradients<T>,
}

#[inline]
fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Batch-mean loss and its gradient with respect to the logits.
///
/// The classification term is softmax cross-entropy against `labels` over
/// every output. When `old_logits` is given (n × k, k ≤ outputs), each of the
/// first k outputs also pays a sigmoid binary cross-entropy against
/// `sigmoid(old_logits)`, i.e. `softplus(z) - sigmoid(o)·z`. Both terms carry
/// unit weight and no temperature.
///
/// Returns `(classification, distillation, d_logits)`.
pub fn loss_and_logit_grads<T: Real>(
    logits: &Tensor2<T>,
    labels: &[usize],
    old_logits: Option<&Tensor2<T>>,
) -> Result<(T, T, Tensor2<T>)> {
    let (n, classes) = logits.shape();
    ensure!(n > 0, "empty batch");
    ensure!(labels.len() == n, "{} labels for {n} rows", labels.len());
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(crate::Error::contract(format!(
            "label {bad} out of range for {classes} outputs"
        )));
    }
    if let Some(old) = old_logits {
        ensure!(old.rows() == n, "old_logits has {} rows, batch has {n}", old.rows());
        ensure!(
            old.cols() <= classes,
            "old_logits has {} columns but the model has {classes} outputs",
            old.cols()
        );
    }

    let inv_n = T::one() / T::from_usize(n).expect("batch size fits");
    let mut d = Tensor2::zeros(n, classes);
    let mut ce = T::zero();
    let mut kd = T::zero();
    for i in 0..n {
        let z = logits.row(i);
        let dz = d.row_mut(i);
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for (g, &v) in dz.iter_mut().zip(z) {
            *g = (v - max).exp();
            sum += *g;
        }
        ce += max + sum.ln() - z[labels[i]];
        for g in dz.iter_mut() {
            *g = *g / sum * inv_n;
        }
        dz[labels[i]] -= inv_n;

        if let Some(old) = old_logits {
            for (j, &o) in old.row(i).iter().enumerate() {
                let target = sigmoid(o);
                kd += softplus(z[j]) - target * z[j];
                dz[j] += (sigmoid(z[j]) - target) * inv_n;
            }
        }
    }
    Ok((ce * inv_n, kd * inv_n, d))
}

/// Forward + backward pass of the combined classification and distillation
/// loss; see [`loss_and_logit_grads`] for the loss definition.
pub fn loss_and_grads<T: Real>(
    model: &MlpModel<T>,
    batch: &Tensor2<T>,
    labels: &[usize],
    old_logits: Option<&Tensor2<T>>,
) -> Result<LossOutput<T>> {
    let cache = model.forward_cached(batch)?;
    let logits = cache.acts.last().expect("cache holds logits");
    let (classification, distillation, d_logits) =
        loss_and_logit_grads(logits, labels, old_logits)?;
    let grads = model.backward(&cache, d_logits);
    Ok(LossOutput {
        loss: classification + distillation,
        classification,
        distillation,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_nn::Dense;

    #[test]
    fn saturated_cross_entropy_is_near_zero() {
        let logits = Tensor2::<f32>::from_rows(&[[30.0, -30.0], [-30.0, 30.0]]).unwrap();
        let (ce, kd, _) = loss_and_logit_grads(&logits, &[0, 1], None).unwrap();
        assert!(ce < 1e-3, "ce = {ce}");
        assert_eq!(kd, 0.0);
    }

    #[test]
    fn distillation_fixed_point_has_zero_gradient() {
        let logits = Tensor2::<f32>::from_rows(&[[0.3, -1.7, 2.0], [1.1, 0.4, -0.2]]).unwrap();
        let old = Tensor2::from_rows(&[[0.3, -1.7], [1.1, 0.4]]).unwrap();
        let (_, kd, with) = loss_and_logit_grads(&logits, &[2, 0], Some(&old)).unwrap();
        let (_, _, without) = loss_and_logit_grads(&logits, &[2, 0], None).unwrap();
        for (a, b) in with.data().iter().zip(without.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
        // binary-entropy floor: mean over rows of Σ_j H(σ(o_j))
        let h = |z: f64| {
            let p = 1.0 / (1.0 + (-z).exp());
            -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
        };
        let floor = (h(0.3) + h(-1.7) + h(1.1) + h(0.4)) / 2.0;
        assert!((kd as f64 - floor).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        let logits = Tensor2::<f32>::zeros(2, 3);
        assert!(loss_and_logit_grads(&logits, &[0, 3], None).is_err());
        assert!(loss_and_logit_grads(&logits, &[0], None).is_err());
        let wide = Tensor2::zeros(2, 4);
        assert!(loss_and_logit_grads(&logits, &[0, 1], Some(&wide)).is_err());
        assert!(loss_and_logit_grads(&Tensor2::<f32>::zeros(0, 3), &[], None).is_err());
    }

    #[test]
    fn expansion_leaves_distillation_term_unchanged() {
        let mut m = MlpModel::<f32>::new(&[3, 5, 4, 2], 3).unwrap();
        let x = Tensor2::from_rows(&[[0.2, -0.4, 1.0], [1.5, 0.3, -0.7], [0.0, 0.9, 0.1]]).unwrap();
        let old = m.forward_logits(&x).unwrap();
        let target = Tensor2::from_rows(&[[0.5, -0.5], [1.0, 0.0], [-2.0, 0.3]]).unwrap();
        let labels = [0, 1, 1];
        let before = loss_and_grads(&m, &x, &labels, Some(&target)).unwrap();
        m.expand_outputs(1).unwrap();
        let after = loss_and_grads(&m, &x, &labels, Some(&target)).unwrap();
        assert_eq!(before.distillation, after.distillation);
        // old logits survive expansion untouched
        let new = m.forward_logits(&x).unwrap();
        for i in 0..3 {
            assert_eq!(&new.row(i)[..2], old.row(i));
        }
    }

    #[test]
    fn gradient_shapes_match_parameters() {
        let m = MlpModel::<f32>::from_layers(vec![Dense::zeros(2, 3), Dense::zeros(3, 3), Dense::zeros(3, 2)]).unwrap();
        let out = loss_and_grads(&m, &Tensor2::zeros(4, 2), &[0, 1, 0, 1], None).unwrap();
        assert!(out.grads.matches(&m));
        assert!((out.loss - 2f32.ln()).abs() < 1e-6);
    }
}
