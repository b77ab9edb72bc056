//! Global-average-pooled MLP over the attended feature.

use crate::nn::layers::{global_avg_pool, global_avg_pool_backward, softmax, Linear};
use crate::nn::params::{ParamGroup, ParamLayout};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Classifier {
    hidden: Linear,
    output: Linear,
}

#[derive(Debug, Clone)]
pub struct ClassifierTrace<T> {
    pooled: Vec<T>,
    hidden: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl Classifier {
    pub fn new(layout: &mut ParamLayout, in_channels: usize, hidden: usize, classes: usize) -> Self {
        Classifier {
            hidden: Linear::new(layout, "classifier.hidden", ParamGroup::Classifier, in_channels, hidden),
            output: Linear::new(layout, "classifier.output", ParamGroup::Classifier, hidden, classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.output.outputs
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> ClassifierTrace<T> {
        let pooled = global_avg_pool(x);
        let mut hidden = self.hidden.forward(params, &pooled);
        hidden.iter_mut().for_each(|v| *v = v.max(T::zero()));
        let logits = self.output.forward(params, &hidden);
        let probs = softmax(&logits);
        ClassifierTrace {
            pooled,
            hidden,
            logits,
            probs,
        }
    }

    /// Output-layer response to an all-zero feature map.
    pub fn bias_response<T: Scalar>(&self, params: &[T]) -> Vec<T> {
        let hidden: Vec<T> = params[self.hidden.bias_range()].iter().map(|v| v.max(T::zero())).collect();
        self.output.forward(params, &hidden)
    }

    pub fn backward<T: Scalar>(&self, params: &[T], x: &Tensor<T>, trace: &ClassifierTrace<T>, d_logits: &[T], grads: &mut [T]) -> Tensor<T> {
        let mut dh = self.output.backward(params, &trace.hidden, d_logits, grads);
        for (g, &h) in dh.iter_mut().zip(&trace.hidden) {
            if h <= T::zero() {
                *g = T::zero();
            }
        }
        let dp = self.hidden.backward(params, &trace.pooled, &dh, grads);
        global_avg_pool_backward(&dp, x.channels(), x.height(), x.width())
    }
}
