use rand::Rng;

use super::{NnError, Parameters, Tape, TapeEntry, TensorView};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(k: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += k * xi;
    }
}

/// Fully connected layer `y = W x + b`, `W` stored row-major `d_out × d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            d_in,
            d_out,
            weight: vec![0.0; d_in * d_out],
            bias: vec![0.0; d_out],
        }
    }

    pub fn from_parts(
        d_in: usize,
        d_out: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, NnError> {
        if weight.len() != d_in * d_out {
            return Err(NnError::Shape {
                op: "dense weight",
                expected: d_in * d_out,
                got: weight.len(),
            });
        }
        if bias.len() != d_out {
            return Err(NnError::Shape {
                op: "dense bias",
                expected: d_out,
                got: bias.len(),
            });
        }
        Ok(Self {
            d_in,
            d_out,
            weight,
            bias,
        })
    }

    /// Pure evaluation, no recording.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.d_in {
            return Err(NnError::Shape {
                op: "dense input",
                expected: self.d_in,
                got: x.len(),
            });
        }
        Ok(self
            .weight
            .chunks_exact(self.d_in)
            .zip(&self.bias)
            .map(|(row, b)| b + dot(row, x))
            .collect())
    }

    pub fn forward(&self, x: &[f64], tape: &mut Tape) -> Result<Vec<f64>, NnError> {
        let y = self.apply(x)?;
        tape.push(TapeEntry::Dense { input: x.to_vec() });
        Ok(y)
    }

    /// Accumulates `dW`, `db` into `grad` and returns `dx`.
    pub fn backward(&self, input: &[f64], dy: &[f64], grad: &mut DenseLayer) -> Vec<f64> {
        let mut dx = vec![0.0; self.d_in];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = o * self.d_in..(o + 1) * self.d_in;
            axpy(g, input, &mut grad.weight[row.clone()]);
            axpy(g, &self.weight[row], &mut dx);
        }
        dx
    }

    /// Input gradient only; parameter gradients are discarded.
    pub fn backward_input(&self, dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.d_in];
        for (o, &g) in dy.iter().enumerate() {
            if g != 0.0 {
                axpy(g, &self.weight[o * self.d_in..(o + 1) * self.d_in], &mut dx);
            }
        }
        dx
    }
}

/// `W x + b`, recorded on `tape`.
pub fn dense_forward(layer: &DenseLayer, x: &[f64], tape: &mut Tape) -> Result<Vec<f64>, NnError> {
    layer.forward(x, tape)
}

/// Glorot/Xavier uniform weights `U(-g, g)`, `g = sqrt(6 / (d_in + d_out))`, zero bias.
pub fn init_glorot<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> DenseLayer {
    let g = (6.0 / (d_in + d_out) as f64).sqrt();
    let weight = (0..d_in * d_out).map(|_| rng.random_range(-g..=g)).collect();
    DenseLayer {
        d_in,
        d_out,
        weight,
        bias: vec![0.0; d_out],
    }
}

/// Uniform weights in `[-bound, bound]`, zero bias.
pub fn init_small_uniform<R: Rng + ?Sized>(
    d_in: usize,
    d_out: usize,
    bound: f64,
    rng: &mut R,
) -> Result<DenseLayer, NnError> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(NnError::BadBound(bound));
    }
    let weight = (0..d_in * d_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Ok(DenseLayer {
        d_in,
        d_out,
        weight,
        bias: vec![0.0; d_out],
    })
}

/// Per-sample layer normalization with learned gain and offset.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gain: Vec<f64>,
    pub offset: Vec<f64>,
    pub eps: f64,
}

impl LayerNormParams {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: vec![1.0; dim],
            offset: vec![0.0; dim],
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    fn normalize(&self, x: &[f64]) -> Result<(Vec<f64>, f64), NnError> {
        if x.len() != self.dim() {
            return Err(NnError::Shape {
                op: "layer_norm input",
                expected: self.dim(),
                got: x.len(),
            });
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + self.eps).sqrt();
        Ok((x.iter().map(|v| (v - mean) * inv_std).collect(), inv_std))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let (xhat, _) = self.normalize(x)?;
        Ok(self.affine(&xhat))
    }

    fn affine(&self, xhat: &[f64]) -> Vec<f64> {
        xhat.iter()
            .zip(self.gain.iter().zip(&self.offset))
            .map(|(h, (g, b))| g * h + b)
            .collect()
    }

    pub fn forward(&self, x: &[f64], tape: &mut Tape) -> Result<Vec<f64>, NnError> {
        let (xhat, inv_std) = self.normalize(x)?;
        let y = self.affine(&xhat);
        tape.push(TapeEntry::LayerNorm { xhat, inv_std });
        Ok(y)
    }

    /// Full Jacobian through the mean and variance.
    pub fn backward(
        &self,
        xhat: &[f64],
        inv_std: f64,
        dy: &[f64],
        grad: Option<&mut LayerNormParams>,
    ) -> Vec<f64> {
        let n = xhat.len() as f64;
        if let Some(grad) = grad {
            for i in 0..xhat.len() {
                grad.gain[i] += dy[i] * xhat[i];
                grad.offset[i] += dy[i];
            }
        }
        let dxhat: Vec<f64> = dy.iter().zip(&self.gain).map(|(d, g)| d * g).collect();
        let sum_d: f64 = dxhat.iter().sum();
        let sum_dx: f64 = dxhat.iter().zip(xhat).map(|(d, h)| d * h).sum();
        dxhat
            .iter()
            .zip(xhat)
            .map(|(d, h)| inv_std / n * (n * d - sum_d - h * sum_dx))
            .collect()
    }
}

/// `(x − mean) / sqrt(var + eps) · gain + offset`, recorded on `tape`.
pub fn layer_norm(
    params: &LayerNormParams,
    x: &[f64],
    tape: &mut Tape,
) -> Result<Vec<f64>, NnError> {
    params.forward(x, tape)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Softmax,
}

impl Activation {
    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Tanh => x.iter().map(|v| v.tanh()).collect(),
            Activation::Softmax => {
                let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|v| v / s).collect()
            }
        }
    }

    pub fn forward(self, x: &[f64], tape: &mut Tape) -> Vec<f64> {
        let y = self.apply(x);
        let output = y.clone();
        tape.push(match self {
            Activation::Relu => TapeEntry::Relu { output },
            Activation::Tanh => TapeEntry::Tanh { output },
            Activation::Softmax => TapeEntry::Softmax { output },
        });
        y
    }

    pub fn backward(self, output: &[f64], dy: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => output
                .iter()
                .zip(dy)
                .map(|(&y, &d)| if y > 0.0 { d } else { 0.0 })
                .collect(),
            Activation::Tanh => output.iter().zip(dy).map(|(y, d)| d * (1.0 - y * y)).collect(),
            Activation::Softmax => {
                let s: f64 = output.iter().zip(dy).map(|(y, d)| y * d).sum();
                output.iter().zip(dy).map(|(y, d)| y * (d - s)).collect()
            }
        }
    }
}

/// Element-wise ReLU/tanh or a softmax over the whole vector, recorded on `tape`.
pub fn activation(kind: Activation, x: &[f64], tape: &mut Tape) -> Vec<f64> {
    kind.forward(x, tape)
}

/// `Σ (y − t)²` and its gradient with respect to `y`.
pub fn squared_error(y: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let loss = y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    let grad = y.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    LayerNorm(LayerNormParams),
    Act(Activation),
}

/// Feed-forward stack of layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Dense(d) => Some(d.d_in),
            Layer::LayerNorm(n) => Some(n.dim()),
            Layer::Act(_) => None,
        })
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Dense(d) => Some(d.d_out),
            Layer::LayerNorm(n) => Some(n.dim()),
            Layer::Act(_) => None,
        })
    }

    pub fn last_dense_mut(&mut self) -> Option<&mut DenseLayer> {
        self.layers.iter_mut().rev().find_map(|l| match l {
            Layer::Dense(d) => Some(d),
            _ => None,
        })
    }

    /// Evaluation without recording.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => d.apply(&h)?,
                Layer::LayerNorm(n) => n.apply(&h)?,
                Layer::Act(a) => a.apply(&h),
            };
        }
        Ok(h)
    }

    /// Forward pass that appends one entry per layer to `tape`.
    pub fn forward(&self, x: &[f64], tape: &mut Tape) -> Result<Vec<f64>, NnError> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => d.forward(&h, tape)?,
                Layer::LayerNorm(n) => n.forward(&h, tape)?,
                Layer::Act(a) => a.forward(&h, tape),
            };
        }
        Ok(h)
    }

    /// Reverse pass over a tape produced by [`forward`](Self::forward) on this
    /// network. Parameter gradients accumulate into `grads` when given; the
    /// input gradient is returned.
    pub fn backward(
        &self,
        tape: &Tape,
        dy: &[f64],
        mut grads: Option<&mut Sequential>,
    ) -> Result<Vec<f64>, NnError> {
        if tape.len() != self.layers.len() {
            return Err(NnError::IncompleteTape {
                layers: self.layers.len(),
                entries: tape.len(),
            });
        }
        let mut g = dy.to_vec();
        for (i, (layer, entry)) in self
            .layers
            .iter()
            .zip(tape.entries())
            .enumerate()
            .rev()
        {
            let grad_layer = grads.as_deref_mut().map(|s| &mut s.layers[i]);
            g = match (layer, entry) {
                (Layer::Dense(d), TapeEntry::Dense { input }) => match grad_layer {
                    Some(Layer::Dense(gd)) => d.backward(input, &g, gd),
                    _ => d.backward_input(&g),
                },
                (Layer::LayerNorm(n), TapeEntry::LayerNorm { xhat, inv_std }) => {
                    let gn = match grad_layer {
                        Some(Layer::LayerNorm(gn)) => Some(gn),
                        _ => None,
                    };
                    n.backward(xhat, *inv_std, &g, gn)
                }
                (Layer::Act(a @ Activation::Relu), TapeEntry::Relu { output })
                | (Layer::Act(a @ Activation::Tanh), TapeEntry::Tanh { output })
                | (Layer::Act(a @ Activation::Softmax), TapeEntry::Softmax { output }) => {
                    a.backward(output, &g)
                }
                _ => return Err(NnError::TapeMismatch { index: i }),
            };
        }
        Ok(g)
    }
}

impl Parameters for Sequential {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    out.push(TensorView {
                        name: format!("{i}.weight"),
                        dims: vec![d.d_out, d.d_in],
                        data: &d.weight,
                    });
                    out.push(TensorView {
                        name: format!("{i}.bias"),
                        dims: vec![d.d_out],
                        data: &d.bias,
                    });
                }
                Layer::LayerNorm(n) => {
                    out.push(TensorView {
                        name: format!("{i}.gain"),
                        dims: vec![n.dim()],
                        data: &n.gain,
                    });
                    out.push(TensorView {
                        name: format!("{i}.offset"),
                        dims: vec![n.dim()],
                        data: &n.offset,
                    });
                }
                Layer::Act(_) => {}
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in self.layers.iter_mut() {
            match layer {
                Layer::Dense(d) => {
                    out.push(&mut d.weight);
                    out.push(&mut d.bias);
                }
                Layer::LayerNorm(n) => {
                    out.push(&mut n.gain);
                    out.push(&mut n.offset);
                }
                Layer::Act(_) => {}
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn dense_identity_and_constant() {
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let layer = DenseLayer::from_parts(3, 3, w, vec![0.0; 3]).unwrap();
        let x = vec![0.5, -2.0, 3.25];
        let mut tape = Tape::new();
        assert_eq!(dense_forward(&layer, &x, &mut tape).unwrap(), x);

        let c = vec![1.5, -0.5];
        let layer = DenseLayer::from_parts(4, 2, vec![0.0; 8], c.clone()).unwrap();
        assert_eq!(layer.apply(&[9.0, 8.0, 7.0, 6.0]).unwrap(), c);
    }

    #[test]
    fn dense_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let layer = init_glorot(7, 5, &mut rng);
        let mut layer = layer;
        layer.bias = random_vec(5, &mut rng);
        let x = random_vec(7, &mut rng);
        let y = layer.apply(&x).unwrap();
        for o in 0..5 {
            let mut acc = layer.bias[o];
            for i in 0..7 {
                acc += layer.weight[o * 7 + i] * x[i];
            }
            assert!((acc - y[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_rejects_wrong_input() {
        let layer = DenseLayer::zeros(3, 2);
        assert!(matches!(
            layer.apply(&[1.0, 2.0]),
            Err(NnError::Shape { .. })
        ));
    }

    #[test]
    fn activations() {
        let mut tape = Tape::new();
        assert_eq!(activation(Activation::Relu, &[-1.0, 2.0], &mut tape), vec![0.0, 2.0]);
        assert_eq!(activation(Activation::Tanh, &[0.0], &mut tape), vec![0.0]);
        assert_eq!(
            activation(Activation::Softmax, &[0.0, 0.0], &mut tape),
            vec![0.5, 0.5]
        );
        assert_eq!(tape.len(), 3);
    }

    #[test]
    fn softmax_is_probability_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-30.0..30.0)).collect();
            let p = Activation::Softmax.apply(&x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn layer_norm_cases() {
        let ln = LayerNormParams::new(4);
        let mut tape = Tape::new();
        let y = layer_norm(&ln, &[2.5; 4], &mut tape).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));

        let ln = LayerNormParams::new(2);
        let y = ln.apply(&[-1.0, 1.0]).unwrap();
        let k = 1.0 / (1.0 + LAYER_NORM_EPS).sqrt();
        assert!((y[0] + k).abs() < 1e-15 && (y[1] - k).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut ln = LayerNormParams::new(9);
        ln.gain = random_vec(9, &mut rng);
        ln.offset = random_vec(9, &mut rng);
        let x = random_vec(9, &mut rng);
        let y = ln.apply(&x).unwrap();
        let mean = x.iter().sum::<f64>() / 9.0;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
        for i in 0..9 {
            let direct = (x[i] - mean) / (var + LAYER_NORM_EPS).sqrt() * ln.gain[i] + ln.offset[i];
            assert!((direct - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for dim in 2..20 {
            let ln = LayerNormParams::new(dim);
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-50.0..50.0)).collect();
            let y = ln.apply(&x).unwrap();
            let m = y.iter().sum::<f64>() / dim as f64;
            let v = y.iter().map(|a| (a - m).powi(2)).sum::<f64>() / dim as f64;
            assert!(m.abs() < 1e-10);
            assert!((v - 1.0).abs() < 1e-6, "dim {dim}: var {v}");
        }
    }

    #[test]
    fn square_gradient() {
        // f(x) = (1·x)², x = 3
        let net = Sequential::new(vec![Layer::Dense(
            DenseLayer::from_parts(1, 1, vec![1.0], vec![0.0]).unwrap(),
        )]);
        let mut tape = Tape::new();
        let y = net.forward(&[3.0], &mut tape).unwrap();
        let (loss, dy) = squared_error(&y, &[0.0]);
        assert_eq!(loss, 9.0);
        let dx = net.backward(&tape, &dy, None).unwrap();
        assert_eq!(dx, vec![6.0]);
    }

    #[test]
    fn sum_of_dense_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let layer = init_glorot(4, 3, &mut rng);
        let net = Sequential::new(vec![Layer::Dense(layer)]);
        let x = random_vec(4, &mut rng);
        let mut tape = Tape::new();
        net.forward(&x, &mut tape).unwrap();
        let mut grads = net.zeros_like();
        net.backward(&tape, &[1.0; 3], Some(&mut grads)).unwrap();
        let Layer::Dense(g) = &grads.layers[0] else {
            unreachable!()
        };
        for o in 0..3 {
            for i in 0..4 {
                assert_eq!(g.weight[o * 4 + i], x[i]);
            }
            assert_eq!(g.bias[o], 1.0);
        }
    }

    #[test]
    fn incomplete_tape_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let net = Sequential::new(vec![
            Layer::Dense(init_glorot(3, 3, &mut rng)),
            Layer::Act(Activation::Relu),
        ]);
        let mut tape = Tape::new();
        if let Layer::Dense(d) = &net.layers[0] {
            d.forward(&[1.0, 2.0, 3.0], &mut tape).unwrap();
        }
        assert!(matches!(
            net.backward(&tape, &[1.0; 3], None),
            Err(NnError::IncompleteTape { .. })
        ));
    }

    #[test]
    fn init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let l = init_small_uniform(100, 50, 3e-3, &mut rng).unwrap();
        assert!(l.weight.iter().all(|w| w.abs() <= 3e-3));
        assert!(l.bias.iter().all(|&b| b == 0.0));
        assert!(init_small_uniform(2, 2, 0.0, &mut rng).is_err());

        for _ in 0..1000 {
            let g = init_glorot(1, 1, &mut rng);
            assert!(g.weight[0].abs() <= 3f64.sqrt());
        }
    }

    #[test]
    fn glorot_mean_within_monte_carlo_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // 100 000 draws from U(-g, g) with g = sqrt(6 / 634)
        let l = init_glorot(317, 317, &mut rng);
        let n = 100_000;
        let w = &l.weight[..n];
        let g = (6.0f64 / 634.0).sqrt();
        let sigma = g / 3f64.sqrt();
        let mean = w.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn forward_is_deterministic() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(18);
            Sequential::new(vec![
                Layer::Dense(init_glorot(5, 8, &mut rng)),
                Layer::LayerNorm(LayerNormParams::new(8)),
                Layer::Act(Activation::Relu),
                Layer::Dense(init_small_uniform(8, 3, 3e-3, &mut rng).unwrap()),
                Layer::Act(Activation::Tanh),
            ])
        };
        let (a, b) = (build(), build());
        assert_eq!(a, b);
        let x = [0.1, -0.2, 0.3, 0.7, -1.1];
        let (mut ta, mut tb) = (Tape::new(), Tape::new());
        let ya = a.forward(&x, &mut ta).unwrap();
        let yb = b.forward(&x, &mut tb).unwrap();
        assert_eq!(ya, yb);
        assert_eq!(ta, tb);
        assert_eq!(a.apply(&x).unwrap(), ya);
    }
}
