use crate::scalar::Scalar;

/// Adaptive moment estimation with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<S>,
    v: Vec<S>,
    t: u32,
}

impl<S: Scalar> Adam<S> {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![S::zero(); len],
            v: vec![S::zero(); len],
            t: 0,
        }
    }

    /// Updates taken so far.
    pub fn steps(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [S], grads: &[S]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let b1 = S::of(self.beta1);
        let b2 = S::of(self.beta2);
        let c1 = S::of(1.0 - self.beta1.powi(self.t as i32));
        let c2 = S::of(1.0 - self.beta2.powi(self.t as i32));
        let lr = S::of(self.lr);
        let eps = S::of(self.eps);
        let one = S::one();
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Rescales `grads` so its L2 norm is at most `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm<S: Scalar>(grads: &mut [S], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|&g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = S::of(max_norm / norm);
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
