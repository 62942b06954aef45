//! Two-class cross-entropy over logits in the log-sum-exp stable form.

use crate::error::{Error, Result};
use crate::gradcore::Tensor;

/// Row-wise stable softmax probabilities.
pub fn softmax_probs(logits: &Tensor) -> Tensor {
    let d = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(d) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean cross-entropy of (n, 2) logits against 0/1 labels, plus the gradient
/// with respect to the logits.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[u8]) -> Result<(f64, Tensor)> {
    let s = logits.shape();
    if s.len() != 2 || s[1] != 2 {
        return Err(Error::Argument(format!(
            "expected (n, 2) logits, got {:?}",
            s
        )));
    }
    if s[0] == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    if s[0] != labels.len() {
        return Err(Error::Argument(format!(
            "{} logit rows vs {} labels",
            s[0],
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Argument(format!("label must be 0 or 1, got {bad}")));
    }
    let n = s[0];
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(s);
    {
        let g = grad.data_mut();
        for i in 0..n {
            let row = &logits.data()[i * 2..(i + 1) * 2];
            let y = labels[i] as usize;
            let m = row[0].max(row[1]);
            let lse = m + ((row[0] - m).exp() + (row[1] - m).exp()).ln();
            loss += inv_n * (lse - row[y]);
            for c in 0..2 {
                let p = (row[c] - lse).exp();
                g[i * 2 + c] = inv_n * (p - if c == y { 1.0 } else { 0.0 });
            }
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::check_loss_gradient;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_cost_ln_two() {
        let logits = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        for label in [0u8, 1u8] {
            let (loss, _) = cross_entropy_loss(&logits, &[label]).unwrap();
            assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_prediction_limit_vanishes() {
        let logits = Tensor::from_vec(&[1, 2], vec![-30.0, 30.0]).unwrap();
        let (loss, _) = cross_entropy_loss(&logits, &[1]).unwrap();
        assert!(loss < 1e-12, "loss {loss}");
    }

    #[test]
    fn random_batch_matches_direct_softmax_log_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let labels: Vec<u8> = (0..5).map(|_| rng.gen_range(0..2) as u8).collect();
        let logits = Tensor::from_vec(&[5, 2], data.clone()).unwrap();
        let (loss, _) = cross_entropy_loss(&logits, &labels).unwrap();
        // oracle: plain softmax then log, no log-sum-exp rearrangement
        let mut oracle = 0.0;
        for i in 0..5 {
            let (a, b) = (data[i * 2].exp(), data[i * 2 + 1].exp());
            let p = [a / (a + b), b / (a + b)];
            oracle -= p[labels[i] as usize].ln();
        }
        oracle /= 5.0;
        assert!((loss - oracle).abs() < 1e-12, "{loss} vs {oracle}");
    }

    #[test]
    fn softmax_sums_to_one_for_extreme_logits() {
        let logits = Tensor::from_vec(&[3, 2], vec![1e4, -1e4, -1e4, 1e4, 42.0, 41.0]).unwrap();
        let p = softmax_probs(&logits);
        for row in p.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-9);
        }
        let (loss, grad) = cross_entropy_loss(&logits, &[0, 1, 0]).unwrap();
        assert!(loss.is_finite());
        assert!(grad.all_finite());
    }

    #[test]
    fn gradient_passes_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for seed in 0..3 {
            let data: Vec<f64> = (0..12)
                .map(|_| rng.gen_range(-2.0..2.0) + seed as f64 * 0.1)
                .collect();
            let labels: Vec<u8> = (0..6).map(|i| (i % 2) as u8).collect();
            let x = Tensor::from_vec(&[6, 2], data).unwrap();
            let f = |t: &Tensor| cross_entropy_loss(t, &labels);
            let max_rel = check_loss_gradient(f, &x, 1e-6).unwrap();
            assert!(max_rel < 1e-5, "seed {seed}: {max_rel}");
        }
    }

    #[test]
    fn empty_batch_is_an_argument_error() {
        let logits = Tensor::zeros(&[0, 2]);
        assert!(matches!(
            cross_entropy_loss(&logits, &[]),
            Err(Error::Argument(_))
        ));
    }
}
