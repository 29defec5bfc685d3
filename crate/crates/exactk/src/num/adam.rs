use super::params::ParamStore;
use super::scalar::Scalar;
use super::tensor::TensorData;

/// Adam optimizer state over all parameters of a store.
pub struct AdamState<T> {
    m: Vec<TensorData<T>>,
    v: Vec<TensorData<T>>,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>, learning_rate: f64) -> Self {
        AdamState {
            m: store.ids().map(|id| TensorData::zeros(store.value(id).shape())).collect(),
            v: store.ids().map(|id| TensorData::zeros(store.value(id).shape())).collect(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over every parameter; gradients are
    /// consumed (zeroed) afterwards.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        assert_eq!(self.m.len(), store.len(), "adam state does not match store");
        self.step += 1;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let lr = T::of(self.learning_rate);
        let eps = T::of(self.epsilon);
        let one = T::one();
        let bc1 = one - T::of(self.beta1.powi(self.step as i32));
        let bc2 = one - T::of(self.beta2.powi(self.step as i32));
        for id in store.ids().collect::<Vec<_>>() {
            let grad = store.grad(id).clone();
            let m = &mut self.m[idx(id)];
            let v = &mut self.v[idx(id)];
            let value = store.value_mut(id);
            for i in 0..grad.numel() {
                let g = grad.data()[i];
                let mi = b1 * m.data()[i] + (one - b1) * g;
                let vi = b2 * v.data()[i] + (one - b2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                value.data_mut()[i] = value.data()[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        store.zero_grads();
    }
}

fn idx(id: super::params::ParamId) -> usize {
    id.0
}
