//! Context losses over chart vectors.
//!
//! For a window of consecutive charts `prev, mid, next` and a chart `neg`
//! from another visualization:
//!
//! * interpolation: `d(mid, (prev + next) / 2) + α · [d(prev, mid) + d(mid, next) + d(prev, next)]`
//! * triplet: `max(0, d(prev, next) − d(prev, neg) + m)` with `prev` as anchor
//! * total: `l1 + β · l2`, each summed over the batch
//!
//! `d` is the Euclidean distance. Its gradient at coincident points is taken
//! to be zero.

use crate::scalar::{euclidean, Scalar};
use serde::{Deserialize, Serialize};

/// Which terms contribute to the optimized total.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objectives {
    pub interpolation: bool,
    pub triplet: bool,
}

impl Default for Objectives {
    fn default() -> Self {
        Objectives {
            interpolation: true,
            triplet: true,
        }
    }
}

/// Loss weights shared by every function in this module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub margin: f64,
    pub objectives: Objectives,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.5,
            beta: 1.0,
            margin: 1.0,
            objectives: Objectives::default(),
        }
    }
}

/// Summed loss terms. `l1 = interp_term + α · pair_term`; `total` honours
/// the objective masks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub interp_term: f64,
    pub pair_term: f64,
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, other: &LossBreakdown) {
        self.interp_term += other.interp_term;
        self.pair_term += other.pair_term;
        self.l1 += other.l1;
        self.l2 += other.l2;
        self.total += other.total;
    }

    pub fn is_finite(&self) -> bool {
        [self.interp_term, self.pair_term, self.l1, self.l2, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Interpolation loss of one window. Returns `(value, interp_term, pair_term)`.
pub fn interpolation_loss<T: Scalar>(prev: &[T], mid: &[T], next: &[T], alpha: T) -> (T, T, T) {
    let half = T::lit(0.5);
    let centre: Vec<T> = prev.iter().zip(next).map(|(p, n)| (*p + *n) * half).collect();
    let interp = euclidean(mid, &centre);
    let pair = euclidean(prev, mid) + euclidean(mid, next) + euclidean(prev, next);
    (interp + alpha * pair, interp, pair)
}

pub fn triplet_loss<T: Scalar>(anchor: &[T], positive: &[T], negative: &[T], margin: T) -> T {
    (euclidean(anchor, positive) - euclidean(anchor, negative) + margin).max(T::zero())
}

/// Gradient of `d(x, y)` with respect to `x`: `(x − y) / d`, zero when `x == y`.
pub fn distance_grad<T: Scalar>(x: &[T], y: &[T]) -> Vec<T> {
    let d = euclidean(x, y);
    if d == T::zero() {
        return vec![T::zero(); x.len()];
    }
    x.iter().zip(y).map(|(a, b)| (*a - *b) / d).collect()
}

fn add_scaled<T: Scalar>(acc: &mut [T], g: &[T], s: T) {
    for (a, v) in acc.iter_mut().zip(g) {
        *a += s * *v;
    }
}

/// Loss and gradients of one `[prev, mid, next, neg]` quadruple.
pub fn quadruple_loss<T: Scalar>(x: [&[T]; 4], w: &LossWeights) -> (LossBreakdown, [Vec<T>; 4]) {
    let [prev, mid, next, neg] = x;
    let dim = prev.len();
    let alpha = T::lit(w.alpha);
    let beta = T::lit(w.beta);
    let (l1, interp, pair) = interpolation_loss(prev, mid, next, alpha);
    let l2 = triplet_loss(prev, next, neg, T::lit(w.margin));

    let mut grads: [Vec<T>; 4] = std::array::from_fn(|_| vec![T::zero(); dim]);
    let mut total = T::zero();
    if w.objectives.interpolation {
        total += l1;
        let half = T::lit(0.5);
        let centre: Vec<T> = prev.iter().zip(next).map(|(p, n)| (*p + *n) * half).collect();
        let u = distance_grad(mid, &centre);
        add_scaled(&mut grads[1], &u, T::one());
        add_scaled(&mut grads[0], &u, -half);
        add_scaled(&mut grads[2], &u, -half);
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            let g = distance_grad(x[a], x[b]);
            add_scaled(&mut grads[a], &g, alpha);
            add_scaled(&mut grads[b], &g, -alpha);
        }
    }
    if w.objectives.triplet {
        total += beta * l2;
        if l2 > T::zero() {
            let gp = distance_grad(prev, next);
            let gn = distance_grad(prev, neg);
            add_scaled(&mut grads[0], &gp, beta);
            add_scaled(&mut grads[2], &gp, -beta);
            add_scaled(&mut grads[0], &gn, -beta);
            add_scaled(&mut grads[3], &gn, beta);
        }
    }
    let breakdown = LossBreakdown {
        interp_term: interp.as_f64(),
        pair_term: pair.as_f64(),
        l1: l1.as_f64(),
        l2: l2.as_f64(),
        total: total.as_f64(),
    };
    (breakdown, grads)
}

/// Loss of a batch of fixed embeddings, summed in batch order.
pub fn embedding_loss<T: Scalar>(quads: &[[&[T]; 4]], w: &LossWeights) -> (LossBreakdown, Vec<[Vec<T>; 4]>) {
    let mut sum = LossBreakdown::default();
    let mut grads = Vec::with_capacity(quads.len());
    for q in quads {
        let (b, g) = quadruple_loss(*q, w);
        sum.add(&b);
        grads.push(g);
    }
    (sum, grads)
}
