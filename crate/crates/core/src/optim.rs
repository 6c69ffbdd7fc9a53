//! Adam with bias correction.

use crate::encoder::EncoderParams;
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates, one buffer per trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &EncoderParams<T>) -> Self {
        let first: Vec<Vec<T>> = params.trainable().iter().map(|t| vec![T::zero(); t.len()]).collect();
        AdamState {
            second: first.clone(),
            first,
            step: 0,
        }
    }
}

/// One update of every trainable tensor in place.
pub fn adam_step<T: Scalar>(
    params: &mut EncoderParams<T>,
    grads: &EncoderParams<T>,
    state: &mut AdamState<T>,
    lr: f64,
) {
    let grads = grads.trainable();
    let mut tensors = params.trainable_mut();
    assert_eq!(tensors.len(), grads.len(), "gradient layout differs from parameters");
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::lit(ADAM_BETA1);
    let b2 = T::lit(ADAM_BETA2);
    let one = T::one();
    let correction1 = one - b1.powi(t);
    let correction2 = one - b2.powi(t);
    let lr = T::lit(lr);
    let eps = T::lit(ADAM_EPSILON);
    for (k, (p, g)) in tensors.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[k];
        let v = &mut state.second[k];
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
