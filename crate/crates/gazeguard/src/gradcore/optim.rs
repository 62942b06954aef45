//! SGD and Adam with weight decay and a step-decay learning-rate schedule.
//!
//! The schedule counts epochs (full passes), advanced explicitly through
//! `end_epoch`. Updated parameters are snapped to the f32 grid so the 32-bit
//! checkpoint format stays lossless.

use serde::{Deserialize, Serialize};

use super::graph::LayerGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptKind {
    Sgd,
    Adam,
}

/// Multiply the learning rate by `factor` every `period_epochs` epochs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub factor: f64,
    pub period_epochs: u32,
}

#[derive(Debug, Clone)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptKind,
    lr0: f64,
    lr: f64,
    weight_decay: f64,
    momentum: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    schedule: Option<Schedule>,
    step_count: u64,
    epoch_count: u32,
    slots: Vec<Slot>,
}

impl Optimizer {
    pub fn sgd(lr: f64, weight_decay: f64, momentum: f64, schedule: Option<Schedule>) -> Self {
        Optimizer {
            kind: OptKind::Sgd,
            lr0: lr,
            lr,
            weight_decay,
            momentum,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule,
            step_count: 0,
            epoch_count: 0,
            slots: Vec::new(),
        }
    }

    pub fn adam(lr: f64, weight_decay: f64, schedule: Option<Schedule>) -> Self {
        Optimizer {
            kind: OptKind::Adam,
            lr0: lr,
            lr,
            weight_decay,
            momentum: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule,
            step_count: 0,
            epoch_count: 0,
            slots: Vec::new(),
        }
    }

    pub fn new(kind: OptKind, lr: f64, weight_decay: f64, schedule: Option<Schedule>) -> Self {
        match kind {
            OptKind::Sgd => Self::sgd(lr, weight_decay, 0.0, schedule),
            OptKind::Adam => Self::adam(lr, weight_decay, schedule),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update over every trainable parameter of `graph`.
    /// Non-finite gradients abort with diagnostics.
    pub fn step(&mut self, graph: &mut LayerGraph) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count;
        let views = graph.param_views();
        if self.slots.len() != views.len() {
            self.slots = views
                .iter()
                .map(|(_, _, v)| Slot {
                    m: vec![0.0; v.values.len()],
                    v: vec![0.0; v.values.len()],
                })
                .collect();
        }
        for (slot_idx, (layer_idx, trainable, view)) in views.into_iter().enumerate() {
            if !trainable {
                continue;
            }
            let slot = &mut self.slots[slot_idx];
            let params = view.values.data_mut();
            let grads = view.grads.data();
            for (i, (&g, p)) in grads.iter().zip(params.iter_mut()).enumerate() {
                if !g.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient {} at layer {}, param element {} (step {})",
                        g, layer_idx, i, t
                    )));
                }
                let g = g + self.weight_decay * *p;
                match self.kind {
                    OptKind::Sgd => {
                        if self.momentum != 0.0 {
                            slot.m[i] = self.momentum * slot.m[i] + g;
                            *p -= self.lr * slot.m[i];
                        } else {
                            *p -= self.lr * g;
                        }
                    }
                    OptKind::Adam => {
                        slot.m[i] = self.beta1 * slot.m[i] + (1.0 - self.beta1) * g;
                        slot.v[i] = self.beta2 * slot.v[i] + (1.0 - self.beta2) * g * g;
                        let m_hat = slot.m[i] / (1.0 - self.beta1.powi(t as i32));
                        let v_hat = slot.v[i] / (1.0 - self.beta2.powi(t as i32));
                        *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
                *p = *p as f32 as f64;
            }
        }
        Ok(())
    }

    /// Marks the end of a full pass; advances the step-decay schedule.
    pub fn end_epoch(&mut self) {
        self.epoch_count += 1;
        if let Some(s) = self.schedule {
            if let Some(decays) = self.epoch_count.checked_div(s.period_epochs) {
                self.lr = self.lr0 * s.factor.powi(decays as i32);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::layers::{Dense, Layer};
    use crate::gradcore::tensor::Tensor;

    /// One-parameter graph: dense 1->1 with bias frozen out of the picture
    /// (we just inspect the weight).
    fn scalar_graph(theta: f64) -> LayerGraph {
        let w = Tensor::from_vec(&[1, 1], vec![theta]).unwrap();
        let b = Tensor::zeros(&[1]);
        LayerGraph::new(vec![Layer::Dense(Dense::from_params(w, b).unwrap())]).unwrap()
    }

    fn run_step(graph: &mut LayerGraph, opt: &mut Optimizer, grad: f64) {
        let x = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        graph.zero_grads();
        graph.forward(&x, None).unwrap();
        graph
            .backward(&Tensor::from_vec(&[1, 1], vec![grad]).unwrap())
            .unwrap();
        opt.step(graph).unwrap();
    }

    fn weight(graph: &LayerGraph) -> f64 {
        graph.layers()[0].params()[0].data()[0]
    }

    // Updated parameters land on the f32 grid, so definitional checks hold
    // at f32 resolution.

    #[test]
    fn sgd_definition_case() {
        // theta=1, g=0.5, lr=0.1, wd=0 -> 0.95
        let mut g = scalar_graph(1.0);
        let mut opt = Optimizer::sgd(0.1, 0.0, 0.0, None);
        run_step(&mut g, &mut opt, 0.5);
        assert!((weight(&g) - 0.95).abs() < 1e-7);
    }

    #[test]
    fn sgd_pure_decay_case() {
        // theta=1, g=0, lr=0.1, wd=0.1 -> 0.99
        let mut g = scalar_graph(1.0);
        let mut opt = Optimizer::sgd(0.1, 0.1, 0.0, None);
        run_step(&mut g, &mut opt, 0.0);
        assert!((weight(&g) - 0.99).abs() < 1e-7);
    }

    #[test]
    fn schedule_decays_after_period_epochs() {
        let mut opt = Optimizer::sgd(
            0.1,
            0.0,
            0.0,
            Some(Schedule {
                factor: 0.1,
                period_epochs: 200,
            }),
        );
        for _ in 0..199 {
            opt.end_epoch();
        }
        assert!((opt.learning_rate() - 0.1).abs() < 1e-15);
        opt.end_epoch(); // epoch 200
        assert!((opt.learning_rate() - 0.01).abs() < 1e-15);
        for _ in 0..200 {
            opt.end_epoch();
        }
        assert!((opt.learning_rate() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_about_lr() {
        let mut g = scalar_graph(0.5);
        let mut opt = Optimizer::adam(0.01, 0.0, None);
        run_step(&mut g, &mut opt, 0.3);
        let delta = (weight(&g) - 0.5).abs();
        assert!((delta - 0.01).abs() < 1e-6, "delta = {delta}");
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut g = scalar_graph(0.75);
        let mut opt = Optimizer::adam(0.01, 0.0, None);
        for _ in 0..5 {
            run_step(&mut g, &mut opt, 0.0);
        }
        assert_eq!(weight(&g), 0.75);
    }

    #[test]
    fn adam_two_steps_match_scalar_oracle() {
        // Hand-rolled scalar Adam, computed independently here.
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let g_const = 0.4;
        let mut theta = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g_const;
            v = b2 * v + (1.0 - b2) * g_const * g_const;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            theta -= lr * m_hat / (v_hat.sqrt() + eps);
            theta = theta as f32 as f64; // same f32 snap as the implementation
        }

        let mut graph = scalar_graph(1.0);
        let mut opt = Optimizer::adam(lr, 0.0, None);
        run_step(&mut graph, &mut opt, g_const);
        run_step(&mut graph, &mut opt, g_const);
        assert!(
            (weight(&graph) - theta).abs() < 1e-12,
            "{} vs {}",
            weight(&graph),
            theta
        );
    }

    #[test]
    fn non_finite_gradient_aborts_with_diagnostics() {
        let mut g = scalar_graph(1.0);
        let mut opt = Optimizer::sgd(0.1, 0.0, 0.0, None);
        let x = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        g.forward(&x, None).unwrap();
        g.backward(&Tensor::from_vec(&[1, 1], vec![f64::NAN]).unwrap())
            .unwrap();
        let err = opt.step(&mut g).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains("layer 0"));
    }

    #[test]
    fn frozen_params_are_bitwise_unchanged_after_steps() {
        let mut g = scalar_graph(0.62);
        g.set_trainable(0, false);
        let before = g.flat_params();
        let mut opt = Optimizer::adam(0.1, 0.01, None);
        for _ in 0..10 {
            run_step(&mut g, &mut opt, 1.0);
        }
        assert_eq!(g.flat_params(), before);
    }
}
