//! Central finite-difference verification of analytic gradients, in 64-bit.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::LayerGraph;
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub layer: usize,
    pub slot: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub const DEFAULT_STEP: f64 = 1e-5;

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / f64::max(1e-6, a.abs().max(n.abs()))
}

/// Checks every trainable parameter of `graph` (or a deterministic subsample
/// of `max_per_slot` per parameter tensor when given) against central finite
/// differences of the scalar probe loss `sum(coef_i * output_i)`, with random
/// coefficients drawn from `seed`.
pub fn grad_check(
    graph: &mut LayerGraph,
    input: &Tensor,
    aux: Option<&Tensor>,
    step: f64,
    max_per_slot: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport> {
    let out = graph.forward(input, aux)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coefs = Tensor::zeros(out.shape());
    for v in coefs.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }

    graph.zero_grads();
    graph.forward(input, aux)?;
    graph.backward(&coefs)?;
    let analytic: Vec<Vec<Vec<f64>>> = graph
        .layers()
        .iter()
        .map(|l| l.grads().iter().map(|g| g.data().to_vec()).collect())
        .collect();

    let loss = |graph: &mut LayerGraph| -> Result<f64> {
        let out = graph.forward(input, aux)?;
        Ok(out
            .data()
            .iter()
            .zip(coefs.data())
            .map(|(o, c)| o * c)
            .sum())
    };

    // Which indices of each slot to probe.
    let plan: Vec<(usize, usize, Vec<usize>)> = {
        let trainable = graph.trainable_mask().to_vec();
        graph
            .layers()
            .iter()
            .enumerate()
            .filter(|(i, _)| trainable[*i])
            .flat_map(|(li, layer)| {
                layer
                    .params()
                    .iter()
                    .enumerate()
                    .map(|(si, p)| {
                        let n = p.len();
                        let indices: Vec<usize> = match max_per_slot {
                            Some(k) if n > k => {
                                let mut pick_rng = ChaCha8Rng::seed_from_u64(
                                    seed ^ ((li as u64) << 32 | si as u64),
                                );
                                let mut set: Vec<usize> =
                                    (0..k).map(|_| pick_rng.gen_range(0..n)).collect();
                                set.sort_unstable();
                                set.dedup();
                                set
                            }
                            _ => (0..n).collect(),
                        };
                        (li, si, indices)
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    };

    let mut entries = Vec::new();
    let mut max_rel = 0.0f64;
    let mut checked = 0;
    for (li, si, indices) in plan {
        for idx in indices {
            // perturb +step
            let orig = {
                let mut views = graph.param_views();
                let (_, _, view) = views
                    .iter_mut()
                    .filter(|(l, _, _)| *l == li)
                    .nth(si)
                    .expect("slot exists");
                let orig = view.values.data()[idx];
                view.values.data_mut()[idx] = orig + step;
                orig
            };
            let up = loss(graph)?;
            {
                let mut views = graph.param_views();
                let (_, _, view) = views
                    .iter_mut()
                    .filter(|(l, _, _)| *l == li)
                    .nth(si)
                    .expect("slot exists");
                view.values.data_mut()[idx] = orig - step;
            }
            let down = loss(graph)?;
            {
                let mut views = graph.param_views();
                let (_, _, view) = views
                    .iter_mut()
                    .filter(|(l, _, _)| *l == li)
                    .nth(si)
                    .expect("slot exists");
                view.values.data_mut()[idx] = orig;
            }
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[li][si][idx];
            let err = rel_error(a, numeric);
            if err > max_rel {
                max_rel = err;
            }
            checked += 1;
            entries.push(GradCheckEntry {
                layer: li,
                slot: si,
                index: idx,
                analytic: a,
                numeric,
                rel_error: err,
            });
        }
    }
    Ok(GradCheckReport {
        entries,
        max_rel_error: max_rel,
        checked,
    })
}

/// Finite-difference check of a standalone loss function `f(x) -> (loss,
/// grad)`. Used by the loss modules; independent of LayerGraph.
pub fn check_loss_gradient<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let (_, grad) = f(x)?;
    let mut max_rel = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let (up, _) = f(&probe)?;
        probe.data_mut()[i] = orig - step;
        let (down, _) = f(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = rel_error(grad.data()[i], numeric);
        if err > max_rel {
            max_rel = err;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::layers::{
        ConcatAux, Conv2d, Dense, Flatten, Layer, MaxPool2d, Relu, Softmax,
    };

    fn random_input(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            // keep away from relu/maxpool nondifferentiable points
            let mag = rng.gen_range(0.1..1.0);
            *v = if rng.gen_bool(0.5) { mag } else { -mag };
        }
        t
    }

    #[test]
    fn dense_relu_stack_passes_5_seeds() {
        for seed in 0..5u64 {
            let mut g = LayerGraph::new(vec![
                Layer::Dense(Dense::new(6, 8, seed * 3 + 1)),
                Layer::Relu(Relu::new()),
                Layer::Dense(Dense::new(8, 4, seed * 3 + 2)),
            ])
            .unwrap();
            let x = random_input(&[2, 6], seed + 100);
            let report = grad_check(&mut g, &x, None, DEFAULT_STEP, None, seed).unwrap();
            assert!(
                report.passes(1e-4),
                "seed {seed}: max rel err {}",
                report.max_rel_error
            );
        }
    }

    #[test]
    fn conv_on_eye_sized_input_passes() {
        // conv2d 1->4 5x5 on a 60x36 input
        for seed in 0..2u64 {
            let mut g =
                LayerGraph::new(vec![Layer::Conv2d(Conv2d::new(1, 4, 5, 5, seed + 9))]).unwrap();
            let x = random_input(&[1, 1, 36, 60], seed + 50);
            let report = grad_check(&mut g, &x, None, DEFAULT_STEP, None, seed).unwrap();
            assert!(
                report.passes(1e-4),
                "seed {seed}: max rel err {}",
                report.max_rel_error
            );
        }
    }

    #[test]
    fn full_vocabulary_graph_passes() {
        let mut g = LayerGraph::new(vec![
            Layer::Conv2d(Conv2d::new(1, 2, 3, 3, 21)),
            Layer::Relu(Relu::new()),
            Layer::MaxPool2d(MaxPool2d::new()),
            Layer::Flatten(Flatten::new()),
            Layer::Dense(Dense::new(2 * 3 * 4, 6, 22)),
            Layer::ConcatAux(ConcatAux::new(2)),
            Layer::Dense(Dense::new(8, 4, 23)),
            Layer::Softmax(Softmax::new()),
        ])
        .unwrap();
        let x = random_input(&[2, 1, 8, 10], 77);
        let aux = random_input(&[2, 2], 78);
        let report = grad_check(&mut g, &x, Some(&aux), DEFAULT_STEP, None, 5).unwrap();
        assert!(report.passes(1e-4), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn subsampling_limits_probe_count() {
        let mut g = LayerGraph::new(vec![Layer::Dense(Dense::new(20, 20, 31))]).unwrap();
        let x = random_input(&[1, 20], 5);
        let report = grad_check(&mut g, &x, None, DEFAULT_STEP, Some(10), 6).unwrap();
        assert!(report.checked <= 20 + 10);
        assert!(report.passes(1e-4));
    }
}
