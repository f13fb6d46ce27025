//! Adam optimizer over the network's named parameter tensors.

use crate::viscosity::NetParams;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, params: &NetParams) -> Adam {
        let m = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let v = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Adam { lr, beta1, beta2, eps: 1e-8, step: 0, m, v }
    }

    /// One update with the summed batch gradient, tensor-by-tensor in the
    /// parameter order.
    pub fn step(&mut self, params: &mut NetParams, grads: &[Vec<f64>]) {
        assert_eq!(grads.len(), params.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, g) in grads.iter().enumerate() {
            let mut data = params.tensors()[idx].1.data().to_vec();
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            params.set_data(idx, data);
        }
    }
}
