use super::{Parameters, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments; one moment buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<P: Parameters>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Descend along `grads`.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        self.update(params, grads, 1.0);
    }

    /// Ascend along `grads`.
    pub fn step_ascent<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        self.update(params, grads, -1.0);
    }

    fn update<P: Parameters>(&mut self, params: &mut P, grads: &P, sign: f64) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let gs = grads.tensors();
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(gs.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                let gi = sign * g.data[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    pub fn export(&self, prefix: &str) -> Vec<Tensor> {
        let mut out = vec![Tensor {
            name: format!("{prefix}.step"),
            dims: vec![1],
            data: vec![self.step as f64],
        }];
        for (i, (m, v)) in self.m.iter().zip(&self.v).enumerate() {
            out.push(Tensor {
                name: format!("{prefix}.m{i}"),
                dims: vec![m.len()],
                data: m.clone(),
            });
            out.push(Tensor {
                name: format!("{prefix}.v{i}"),
                dims: vec![v.len()],
                data: v.clone(),
            });
        }
        out
    }

    pub fn import(&mut self, prefix: &str, ckpt: &super::Checkpoint) -> Result<(), super::NnError> {
        let get = |name: String, len: usize| -> Result<Vec<f64>, super::NnError> {
            let t = ckpt
                .get(&name)
                .ok_or_else(|| super::NnError::Checkpoint(format!("missing tensor {name}")))?;
            if t.data.len() != len {
                return Err(super::NnError::Checkpoint(format!("tensor {name} has wrong size")));
            }
            Ok(t.data.clone())
        };
        self.step = get(format!("{prefix}.step"), 1)?[0] as u64;
        for i in 0..self.m.len() {
            self.m[i] = get(format!("{prefix}.m{i}"), self.m[i].len())?;
            self.v[i] = get(format!("{prefix}.v{i}"), self.v[i].len())?;
        }
        Ok(())
    }
}
