//! Small dense networks with hand-written reverse-mode gradients.
//!
//! A [`Sequential`] is a stack of [`Layer`]s. Its forward pass appends one
//! [`TapeEntry`] per layer to a [`Tape`]; the backward pass walks that tape in
//! reverse, accumulating parameter gradients into a second network of the same
//! shape (a "gradient twin", see [`Parameters::zeros_like`]) and returning the
//! gradient with respect to the input. Branching architectures keep one tape
//! per branch and sum input gradients themselves.

mod checkpoint;
mod layers;
mod optim;

pub use checkpoint::{Checkpoint, Tensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{
    activation, dense_forward, init_glorot, init_small_uniform, layer_norm, squared_error,
    Activation, DenseLayer, Layer, LayerNormParams, Sequential, LAYER_NORM_EPS,
};
pub use optim::{Adam, AdamConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("tape incomplete: network has {layers} layers but tape holds {entries} entries")]
    IncompleteTape { layers: usize, entries: usize },
    #[error("tape entry {index} does not match layer kind")]
    TapeMismatch { index: usize },
    #[error("invalid initializer bound {0}")]
    BadBound(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Forward intermediates for one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum TapeEntry {
    Dense { input: Vec<f64> },
    LayerNorm { xhat: Vec<f64>, inv_std: f64 },
    Relu { output: Vec<f64> },
    Tanh { output: Vec<f64> },
    Softmax { output: Vec<f64> },
}

/// Recorded forward pass of one [`Sequential`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tape {
    entries: Vec<TapeEntry>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: TapeEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[TapeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Named view of one trainable tensor.
#[derive(Debug, Clone)]
pub struct TensorView<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [f64],
}

/// Anything that owns trainable `f64` tensors in a fixed order.
///
/// The order of [`tensors`](Parameters::tensors) and
/// [`tensors_mut`](Parameters::tensors_mut) must agree; optimizers, soft
/// updates and checkpoints pair tensors by position.
pub trait Parameters {
    fn tensors(&self) -> Vec<TensorView<'_>>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        z.zero();
        z
    }

    fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Flattened copy of every tensor, in order.
    fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }
}

/// `self += k * other`, tensor by tensor.
pub fn add_scaled<P: Parameters>(dst: &mut P, src: &P, k: f64) {
    let src: Vec<Vec<f64>> = src.tensors().iter().map(|t| t.data.to_vec()).collect();
    for (d, s) in dst.tensors_mut().into_iter().zip(src.iter()) {
        for (a, b) in d.iter_mut().zip(s) {
            *a += k * b;
        }
    }
}

/// Exponentially weighted target tracking: `target ← λ·active + (1−λ)·target`.
pub fn soft_update<P: Parameters>(target: &mut P, active: &P, lambda: f64) {
    let src: Vec<Vec<f64>> = active.tensors().iter().map(|t| t.data.to_vec()).collect();
    for (t, a) in target.tensors_mut().into_iter().zip(src.iter()) {
        for (tv, av) in t.iter_mut().zip(a) {
            *tv = lambda * av + (1.0 - lambda) * *tv;
        }
    }
}

/// Serialize every tensor of `p` under `prefix`.
pub fn export_tensors<P: Parameters>(p: &P, prefix: &str) -> Vec<Tensor> {
    p.tensors()
        .into_iter()
        .map(|t| Tensor {
            name: format!("{prefix}.{}", t.name),
            dims: t.dims,
            data: t.data.to_vec(),
        })
        .collect()
}

/// Overwrite `p` from tensors previously produced by [`export_tensors`].
pub fn import_tensors<P: Parameters>(
    p: &mut P,
    prefix: &str,
    ckpt: &Checkpoint,
) -> Result<(), NnError> {
    let names: Vec<(String, usize)> = p
        .tensors()
        .iter()
        .map(|t| (format!("{prefix}.{}", t.name), t.data.len()))
        .collect();
    for ((name, len), dst) in names.into_iter().zip(p.tensors_mut()) {
        let t = ckpt
            .get(&name)
            .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {name}")))?;
        if t.data.len() != len {
            return Err(NnError::Checkpoint(format!(
                "tensor {name}: expected {len} values, found {}",
                t.data.len()
            )));
        }
        dst.copy_from_slice(&t.data);
    }
    Ok(())
}
