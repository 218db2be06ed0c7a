use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Row-wise softmax of `[N, K]` logits.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    logits.expect_rank(2, "softmax")?;
    let k = logits.shape()[1];
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(k.max(1)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Mean cross-entropy of softmax(logits) against class indices, and its
/// gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let p = softmax(logits)?;
    let (n, k) = (p.shape()[0], p.shape()[1]);
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} rows", labels.len())));
    }
    let mut grad = p.data().to_vec();
    let mut loss = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::LabelOutOfRange { label: l, classes: k });
        }
        loss -= p.data()[i * k + l].max(1e-300).ln();
        grad[i * k + l] -= 1.0;
    }
    grad.iter_mut().for_each(|g| *g /= n as f64);
    Ok((loss / n as f64, Tensor::new(p.shape().to_vec(), grad)?))
}

/// Mean squared error and its gradient.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!("mse: {} predictions vs {} targets", pred.len(), target.len())));
    }
    let n = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            loss += (p - t) * (p - t);
            2.0 * (p - t) / n
        })
        .collect();
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let p = softmax(&Tensor::new(vec![1, 3], vec![2.0; 3]).unwrap()).unwrap();
        for v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_gradient_is_p_minus_onehot() {
        let logits = Tensor::new(vec![2, 3], vec![0.1, 0.5, -0.3, 1.0, 0.0, 0.0]).unwrap();
        let (loss, g) = softmax_cross_entropy(&logits, &[1, 0]).unwrap();
        let p = softmax(&logits).unwrap();
        assert!((loss - -(p.data()[1].ln() + p.data()[3].ln()) / 2.0).abs() < 1e-14);
        assert!((g.data()[1] - (p.data()[1] - 1.0) / 2.0).abs() < 1e-15);
        assert!(softmax_cross_entropy(&logits, &[3, 0]).is_err());
    }

    #[test]
    fn mse_zero_at_target() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let (l, g) = mse(&t, &t).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
}
