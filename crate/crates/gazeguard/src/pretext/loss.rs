//! Normalized temperature-scaled cross-entropy over positive pairs, with the
//! analytic gradient with respect to the (unnormalized) embeddings.
//! Similarity is cosine; the denominator sums over every k != i, positive
//! included.

use super::super::gradcore::Tensor;
use crate::error::{Error, Result};

/// u . v / (|u| |v|). Zero vectors are rejected.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Argument(format!(
            "vectors must have equal length: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Argument("cosine similarity of zero vector".into()));
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// 2N embedded views with their positive-pairing map and temperature.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    /// (2N, D)
    pub embeddings: Tensor,
    /// pairing[i] = index of i's positive; fixed-point-free involution.
    pub pairing: Vec<usize>,
    pub temperature: f64,
}

impl ContrastiveBatch {
    pub fn new(embeddings: Tensor, pairing: Vec<usize>, temperature: f64) -> Result<Self> {
        let batch = ContrastiveBatch {
            embeddings,
            pairing,
            temperature,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(Error::Argument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        let shape = self.embeddings.shape();
        if shape.len() != 2 {
            return Err(Error::Argument("embeddings must be (2N, D)".into()));
        }
        let m = shape[0];
        if m < 2 || !m.is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "need an even number of views >= 2, got {m}"
            )));
        }
        if self.pairing.len() != m {
            return Err(Error::Argument("pairing length mismatch".into()));
        }
        for (i, &j) in self.pairing.iter().enumerate() {
            if j >= m || j == i || self.pairing[j] != i {
                return Err(Error::Argument(
                    "pairing must be a fixed-point-free involution".into(),
                ));
            }
        }
        if !self.embeddings.all_finite() {
            return Err(Error::Argument("embeddings must be finite".into()));
        }
        Ok(())
    }
}

/// Loss (mean over all 2N anchors) and gradient w.r.t. the embeddings.
pub fn nt_xent_loss(batch: &ContrastiveBatch) -> Result<(f64, Tensor)> {
    batch.validate()?;
    let m = batch.embeddings.shape()[0];
    let d = batch.embeddings.shape()[1];
    let tau = batch.temperature;
    let z = batch.embeddings.data();

    let mut norms = vec![0.0f64; m];
    for i in 0..m {
        let row = &z[i * d..(i + 1) * d];
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::Argument(format!("embedding {i} is the zero vector")));
        }
        norms[i] = n;
    }
    let unit: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(idx, v)| v / norms[idx / d])
        .collect();

    // cosine similarity matrix
    let mut sim = vec![0.0f64; m * m];
    for i in 0..m {
        for k in (i + 1)..m {
            let s = unit[i * d..(i + 1) * d]
                .iter()
                .zip(&unit[k * d..(k + 1) * d])
                .map(|(a, b)| a * b)
                .sum::<f64>();
            sim[i * m + k] = s;
            sim[k * m + i] = s;
        }
    }

    // per-anchor cross entropy; accumulate dL/dsim
    let mut loss = 0.0;
    let mut g_sim = vec![0.0f64; m * m];
    let inv_m = 1.0 / m as f64;
    for i in 0..m {
        let j = batch.pairing[i];
        let mut row_max = f64::NEG_INFINITY;
        for k in 0..m {
            if k != i {
                row_max = row_max.max(sim[i * m + k] / tau);
            }
        }
        let mut denom = 0.0;
        for k in 0..m {
            if k != i {
                denom += (sim[i * m + k] / tau - row_max).exp();
            }
        }
        let log_denom = row_max + denom.ln();
        loss += inv_m * (log_denom - sim[i * m + j] / tau);
        for k in 0..m {
            if k == i {
                continue;
            }
            let p = (sim[i * m + k] / tau - row_max).exp() / denom;
            let indicator = if k == j { 1.0 } else { 0.0 };
            g_sim[i * m + k] += inv_m * (p - indicator) / tau;
        }
    }

    // chain through cosine: ds_ik/dz_i = (u_k - s_ik u_i) / |z_i|
    let mut grad = Tensor::zeros(&[m, d]);
    {
        let g = grad.data_mut();
        for a in 0..m {
            for b in 0..m {
                if a == b {
                    continue;
                }
                let w = g_sim[a * m + b] + g_sim[b * m + a];
                if w == 0.0 {
                    continue;
                }
                let s_ab = sim[a * m + b];
                for t in 0..d {
                    g[a * d + t] += w * (unit[b * d + t] - s_ab * unit[a * d + t]) / norms[a];
                }
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
    fn cosine_trivial_and_oracle_cases() {
        assert_eq!(cosine_sim(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // (1,2,3).(-4,5,-6) = -12; |a| = sqrt(14), |b| = sqrt(77)
        let got = cosine_sim(&[1.0, 2.0, 3.0], &[-4.0, 5.0, -6.0]).unwrap();
        let want = -12.0 / (14.0f64.sqrt() * 77.0f64.sqrt());
        assert!((got - want).abs() < 1e-12);
        assert!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    fn batch_from(rows: &[&[f64]], tau: f64) -> ContrastiveBatch {
        let m = rows.len();
        let d = rows[0].len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let pairing: Vec<usize> = (0..m).map(|i| i ^ 1).collect();
        ContrastiveBatch::new(Tensor::from_vec(&[m, d], data).unwrap(), pairing, tau).unwrap()
    }

    /// Direct double-loop evaluation with its own dot/norm code; no shared
    /// similarity matrix, no log-sum-exp trick.
    fn brute_force_oracle(batch: &ContrastiveBatch) -> f64 {
        let m = batch.embeddings.shape()[0];
        let d = batch.embeddings.shape()[1];
        let z = batch.embeddings.data();
        let cos = |a: usize, b: usize| -> f64 {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for t in 0..d {
                dot += z[a * d + t] * z[b * d + t];
                na += z[a * d + t] * z[a * d + t];
                nb += z[b * d + t] * z[b * d + t];
            }
            dot / (na.sqrt() * nb.sqrt())
        };
        let mut total = 0.0;
        for i in 0..m {
            let j = batch.pairing[i];
            let num = (cos(i, j) / batch.temperature).exp();
            let mut den = 0.0;
            for k in 0..m {
                if k != i {
                    den += (cos(i, k) / batch.temperature).exp();
                }
            }
            total += -(num / den).ln();
        }
        total / m as f64
    }

    #[test]
    fn n_equals_one_gives_exactly_zero() {
        let batch = batch_from(&[&[0.3, 0.4], &[-0.1, 0.9]], 0.5);
        let (loss, grad) = nt_xent_loss(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g.abs() < 1e-15));
    }

    #[test]
    fn n_equals_two_matches_direct_summation_oracle() {
        let batch = batch_from(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]], 0.5);
        let (loss, _) = nt_xent_loss(&batch).unwrap();
        let oracle = brute_force_oracle(&batch);
        assert!((loss - oracle).abs() < 1e-9, "{loss} vs {oracle}");
        // the closed form for this symmetric case: ln(1 + 2 e^{-2})
        let closed = (1.0 + 2.0 * (-2.0f64).exp()).ln();
        assert!((loss - closed).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_for_all_small_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in 1..=8usize {
            for _ in 0..20 {
                let m = 2 * n;
                let d = 5;
                let data: Vec<f64> = (0..m * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let pairing: Vec<usize> = (0..m).map(|i| i ^ 1).collect();
                let batch =
                    ContrastiveBatch::new(Tensor::from_vec(&[m, d], data).unwrap(), pairing, 0.5)
                        .unwrap();
                let (loss, _) = nt_xent_loss(&batch).unwrap();
                let oracle = brute_force_oracle(&batch);
                assert!((loss - oracle).abs() < 1e-9, "N = {n}: {loss} vs {oracle}");
            }
        }
    }

    #[test]
    fn loss_is_invariant_under_positive_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..6 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pairing: Vec<usize> = (0..6).map(|i| i ^ 1).collect();
        let batch = ContrastiveBatch::new(
            Tensor::from_vec(&[6, 4], data.clone()).unwrap(),
            pairing.clone(),
            0.5,
        )
        .unwrap();
        let (base, _) = nt_xent_loss(&batch).unwrap();

        let mut scaled = data;
        for v in &mut scaled[8..12] {
            *v *= 37.5; // rescale view 2
        }
        let batch2 =
            ContrastiveBatch::new(Tensor::from_vec(&[6, 4], scaled).unwrap(), pairing, 0.5)
                .unwrap();
        let (rescaled, _) = nt_xent_loss(&batch2).unwrap();
        assert!((base - rescaled).abs() < 1e-9);
    }

    #[test]
    fn gradient_passes_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..3 {
            let m = 6;
            let d = 4;
            let data: Vec<f64> = (0..m * d)
                .map(|_| rng.gen_range(-1.0..1.0) + seed as f64 * 0.01)
                .collect();
            let pairing: Vec<usize> = (0..m).map(|i| i ^ 1).collect();
            let x = Tensor::from_vec(&[m, d], data).unwrap();
            let f = |t: &Tensor| {
                let batch = ContrastiveBatch::new(t.clone(), pairing.clone(), 0.5)?;
                nt_xent_loss(&batch)
            };
            let max_rel = check_loss_gradient(f, &x, 1e-6).unwrap();
            assert!(max_rel < 1e-5, "seed {seed}: max rel err {max_rel}");
        }
    }

    #[test]
    fn aligned_positive_with_orthogonal_negatives_vanishes_at_small_tau() {
        let batch = batch_from(
            &[
                &[1.0, 0.0, 0.0],
                &[1.0, 0.0, 0.0],
                &[0.0, 1.0, 0.0],
                &[0.0, 1.0, 0.0],
                &[0.0, 0.0, 1.0],
                &[0.0, 0.0, 1.0],
            ],
            0.05,
        );
        let (loss, _) = nt_xent_loss(&batch).unwrap();
        assert!(loss >= 0.0);
        assert!(loss < 1e-6, "loss {loss}");
    }

    #[test]
    fn bad_batches_are_rejected() {
        let t = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(ContrastiveBatch::new(t.clone(), vec![1, 0], 0.0).is_err());
        assert!(ContrastiveBatch::new(t.clone(), vec![0, 1], 0.5).is_err());
        assert!(ContrastiveBatch::new(t, vec![1], 0.5).is_err());
    }
}
