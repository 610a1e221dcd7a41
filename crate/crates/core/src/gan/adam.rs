use super::layers::Tensor;
use super::nets::Grads;
use crate::scalar::Scalar;

/// Adaptive-moment optimizer state for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub steps: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(tensors: &[&Tensor<T>]) -> Self {
        let zeros: Vec<Vec<T>> = tensors.iter().map(|t| vec![T::zero(); t.len()]).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            steps: 0,
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &Grads<T>, h: AdamParams) {
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2) = (T::lit(h.beta1), T::lit(h.beta2));
        let (c1, c2) = (1.0 - h.beta1.powi(t), 1.0 - h.beta2.powi(t));
        let lr = T::lit(h.lr / c1);
        let c2 = T::lit(c2);
        let eps = T::lit(h.eps);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), m), v) in p.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                *w -= lr * *m / ((*v / c2).sqrt() + eps);
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> Adam<U> {
        let conv = |x: &Vec<Vec<T>>| -> Vec<Vec<U>> {
            x.iter().map(|r| r.iter().map(|&v| U::lit(v.as_f64())).collect()).collect()
        };
        Adam {
            m: conv(&self.m),
            v: conv(&self.v),
            steps: self.steps,
        }
    }
}
