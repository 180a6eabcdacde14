use super::params::ParamStore;
use crate::scalar::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    m: ParamStore<T>,
    v: ParamStore<T>,
    steps: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>, lr: f64) {
        self.steps += 1;
        let c1 = 1.0 - BETA1.powi(self.steps);
        let c2 = 1.0 - BETA2.powi(self.steps);
        let tensors = params.tensors_mut().iter_mut().zip(grads.tensors());
        for ((p, g), (m, v)) in tensors.zip(self.m.tensors_mut().iter_mut().zip(self.v.tensors_mut())) {
            for i in 0..p.data.len() {
                let gi = g.data[i].as_f64();
                let mi = BETA1 * m.data[i].as_f64() + (1.0 - BETA1) * gi;
                let vi = BETA2 * v.data[i].as_f64() + (1.0 - BETA2) * gi * gi;
                m.data[i] = T::of(mi);
                v.data[i] = T::of(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + EPSILON);
                p.data[i] = T::of(p.data[i].as_f64() - update);
            }
        }
    }
}
