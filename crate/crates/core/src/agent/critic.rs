use rand::Rng;

use super::{HIDDEN_WIDTH, SMALL_INIT};
use crate::nnet::{
    init_glorot, init_small_uniform, Activation, Layer, NnError, Parameters, Sequential, Tape,
    TensorView,
};

/// Q-network over the concatenated state and flattened action.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub state_dim: usize,
    pub action_dim: usize,
    pub net: Sequential,
}

#[derive(Debug, Clone, Default)]
pub struct CriticTape(Tape);

impl Critic {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, rng: &mut R) -> Self {
        Self::with_width(state_dim, action_dim, HIDDEN_WIDTH, rng)
    }

    pub fn with_width<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, width: usize, rng: &mut R) -> Self {
        let net = Sequential::new(vec![
            Layer::Dense(init_glorot(state_dim + action_dim, width, rng)),
            Layer::Act(Activation::Relu),
            Layer::Dense(init_glorot(width, width, rng)),
            Layer::Act(Activation::Relu),
            Layer::Dense(init_small_uniform(width, 1, SMALL_INIT, rng).expect("positive bound")),
        ]);
        Self {
            state_dim,
            action_dim,
            net,
        }
    }

    fn input(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>, NnError> {
        if state.len() != self.state_dim {
            return Err(NnError::Shape {
                op: "critic state",
                expected: self.state_dim,
                got: state.len(),
            });
        }
        if action.len() != self.action_dim {
            return Err(NnError::Shape {
                op: "critic action",
                expected: self.action_dim,
                got: action.len(),
            });
        }
        Ok([state, action].concat())
    }

    pub fn q(&self, state: &[f64], action: &[f64]) -> Result<f64, NnError> {
        Ok(self.net.apply(&self.input(state, action)?)?[0])
    }

    pub fn forward(&self, state: &[f64], action: &[f64]) -> Result<(f64, CriticTape), NnError> {
        let mut t = Tape::new();
        let q = self.net.forward(&self.input(state, action)?, &mut t)?[0];
        Ok((q, CriticTape(t)))
    }

    /// Returns `(∂/∂state, ∂/∂action)` scaled by `dq`; parameter gradients go to `grads` when given.
    pub fn backward(
        &self,
        tape: &CriticTape,
        dq: f64,
        grads: Option<&mut Critic>,
    ) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let mut dx = self.net.backward(&tape.0, &[dq], grads.map(|g| &mut g.net))?;
        let da = dx.split_off(self.state_dim);
        Ok((dx, da))
    }
}

impl Parameters for Critic {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        self.net.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.tensors_mut()
    }
}
