//! Sequential layer graph with an optional auxiliary-input junction and a
//! per-layer trainable mask for freezing.

use super::layers::{Layer, ParamView};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LayerGraph {
    layers: Vec<Layer>,
    trainable: Vec<bool>,
    aux_index: Option<usize>,
    forward_ran: bool,
}

impl LayerGraph {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let junctions: Vec<usize> = layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_aux_junction())
            .map(|(i, _)| i)
            .collect();
        if junctions.len() > 1 {
            return Err(Error::Structure(format!(
                "at most one aux junction allowed, found {}",
                junctions.len()
            )));
        }
        let trainable = vec![true; layers.len()];
        Ok(LayerGraph {
            aux_index: junctions.first().copied(),
            trainable,
            layers,
            forward_ran: false,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn has_aux_junction(&self) -> bool {
        self.aux_index.is_some()
    }

    pub fn trainable_mask(&self) -> &[bool] {
        &self.trainable
    }

    pub fn set_trainable(&mut self, layer: usize, trainable: bool) {
        self.trainable[layer] = trainable;
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        self.trainable.iter_mut().for_each(|t| *t = trainable);
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Runs the graph, caching every intermediate activation for backward.
    /// `aux` must be present iff the graph has a junction.
    pub fn forward(&mut self, input: &Tensor, aux: Option<&Tensor>) -> Result<Tensor> {
        match (self.aux_index, aux) {
            (Some(_), None) => {
                return Err(Error::Structure(
                    "graph has an aux junction but no aux input was provided".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::Structure(
                    "aux input provided but graph has no junction".into(),
                ))
            }
            _ => {}
        }
        let mut current = input.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            current = layer.forward(&current, aux).map_err(|e| match e {
                Error::Structure(msg) => {
                    Error::Structure(format!("layer {} ({}): {}", i, layer.kind_name(), msg))
                }
                other => other,
            })?;
        }
        self.forward_ran = true;
        Ok(current)
    }

    /// Propagates `output_grad` back through the graph, accumulating parameter
    /// gradients for trainable layers. Frozen layers keep zero parameter
    /// gradients but still pass the input gradient through. Returns the
    /// gradient with respect to the graph input.
    pub fn backward(&mut self, output_grad: &Tensor) -> Result<Tensor> {
        if !self.forward_ran {
            return Err(Error::State("backward called before forward".into()));
        }
        let mut grad = output_grad.clone();
        for i in (0..self.layers.len()).rev() {
            let want = self.trainable[i];
            let layer = &mut self.layers[i];
            grad = layer.backward(&grad, want).map_err(|e| match e {
                Error::Structure(msg) => {
                    Error::Structure(format!("layer {} ({}): {}", i, layer.kind_name(), msg))
                }
                other => other,
            })?;
        }
        Ok(grad)
    }

    pub fn zero_grads(&mut self) {
        self.layers.iter_mut().for_each(|l| l.zero_grads());
    }

    pub fn clear_caches(&mut self) {
        self.layers.iter_mut().for_each(|l| l.clear_cache());
        self.forward_ran = false;
    }

    /// Parameter views in fixed (layer, slot) order, with trainable flags.
    pub fn param_views(&mut self) -> Vec<(usize, bool, ParamView<'_>)> {
        let trainable = self.trainable.clone();
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, layer)| {
                let t = trainable[i];
                layer.params_mut().into_iter().map(move |view| (i, t, view))
            })
            .collect()
    }

    /// Flat copy of all parameter values, in (layer, slot) order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| {
                l.params()
                    .into_iter()
                    .flat_map(|p| p.data().iter().copied())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::layers::{Dense, Relu};

    fn two_dense() -> LayerGraph {
        LayerGraph::new(vec![
            Layer::Dense(Dense::new(3, 4, 1)),
            Layer::Relu(Relu::new()),
            Layer::Dense(Dense::new(4, 2, 2)),
        ])
        .unwrap()
    }

    #[test]
    fn forward_matches_hand_matrix_oracle() {
        // Fixed tiny weights, computed by explicit loops in the test.
        let w1 = Tensor::from_vec(&[2, 2], vec![0.5, -0.25, 1.0, 0.75]).unwrap();
        let b1 = Tensor::from_vec(&[2], vec![0.1, -0.1]).unwrap();
        let w2 = Tensor::from_vec(&[2, 1], vec![2.0, -1.0]).unwrap();
        let b2 = Tensor::from_vec(&[1], vec![0.05]).unwrap();
        let mut g = LayerGraph::new(vec![
            Layer::Dense(Dense::from_params(w1.clone(), b1.clone()).unwrap()),
            Layer::Dense(Dense::from_params(w2.clone(), b2.clone()).unwrap()),
        ])
        .unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![0.3, -0.7]).unwrap();
        let y = g.forward(&x, None).unwrap();

        let mut h = [0.0f64; 2];
        for j in 0..2 {
            h[j] = b1.data()[j];
            for k in 0..2 {
                h[j] += x.data()[k] * w1.data()[k * 2 + j];
            }
        }
        let mut expect = b2.data()[0];
        for k in 0..2 {
            expect += h[k] * w2.data()[k];
        }
        assert!((y.data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut g = two_dense();
        let x = Tensor::from_vec(&[2, 3], vec![0.1, 0.2, 0.3, -0.1, -0.2, -0.3]).unwrap();
        let y1 = g.forward(&x, None).unwrap();
        let y2 = g.forward(&x, None).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn shape_mismatch_names_the_layer() {
        let mut g = two_dense();
        let x = Tensor::zeros(&[1, 5]);
        let err = g.forward(&x, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 0 (dense)"), "got: {msg}");
    }

    #[test]
    fn frozen_layer_keeps_zero_param_grads_but_propagates() {
        let mut g = two_dense();
        g.set_trainable(0, false);
        let x = Tensor::from_vec(&[1, 3], vec![0.4, -0.2, 0.9]).unwrap();
        let y = g.forward(&x, None).unwrap();
        let dx = g.backward(&Tensor::scalar_fill(y.shape(), 1.0)).unwrap();
        assert_eq!(dx.shape(), x.shape());
        // layer 0 grads all zero, layer 2 grads not all zero
        let l0_grads: Vec<f64> = g.layers()[0]
            .grads()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect();
        assert!(l0_grads.iter().all(|&v| v == 0.0));
        let l2_grads: Vec<f64> = g.layers()[2]
            .grads()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect();
        assert!(l2_grads.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut g = two_dense();
        let err = g.backward(&Tensor::zeros(&[1, 2])).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn aux_contract_is_enforced_both_ways() {
        let mut g = two_dense();
        let x = Tensor::zeros(&[1, 3]);
        assert!(g.forward(&x, Some(&Tensor::zeros(&[1, 2]))).is_err());

        let mut with_aux = LayerGraph::new(vec![
            Layer::ConcatAux(crate::gradcore::layers::ConcatAux::new(2)),
            Layer::Dense(Dense::new(5, 2, 3)),
        ])
        .unwrap();
        assert!(with_aux.forward(&Tensor::zeros(&[1, 3]), None).is_err());
        assert!(with_aux
            .forward(&Tensor::zeros(&[1, 3]), Some(&Tensor::zeros(&[1, 2])))
            .is_ok());
    }
}
