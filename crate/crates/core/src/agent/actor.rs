use rand::Rng;

use super::{AgentError, HIDDEN_WIDTH, SMALL_INIT};
use crate::channel::Geometry;
use crate::nnet::{
    init_glorot, init_small_uniform, Activation, Layer, LayerNormParams, NnError, Parameters,
    Sequential, Tape, TensorView,
};

/// How the actor emits RIS phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    /// One tanh output per element.
    Continuous,
    /// One softmax head over `2^bits` levels per element.
    Quantized { bits: u32 },
    /// One softmax head per element group, `groups` groups per panel.
    Grouped { bits: u32, groups: usize },
}

impl PhaseMode {
    pub fn bits(self) -> Option<u32> {
        match self {
            Self::Continuous => None,
            Self::Quantized { bits } | Self::Grouped { bits, .. } => Some(bits),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorSpec {
    pub state_dim: usize,
    /// RIS1 panel as (rows, columns).
    pub panel1: (usize, usize),
    pub panel2: (usize, usize),
    pub m_t: usize,
    pub m_r: usize,
    pub width: usize,
    pub depth: usize,
    pub phase: PhaseMode,
    pub beam_heads: bool,
}

impl ActorSpec {
    pub fn for_geometry(geom: &Geometry, state_dim: usize, phase: PhaseMode, beam_heads: bool) -> Self {
        Self {
            state_dim,
            panel1: (geom.n1v, geom.n1h),
            panel2: (geom.n2v, geom.n2h),
            m_t: geom.m_t,
            m_r: geom.m_r,
            width: HIDDEN_WIDTH,
            depth: 2,
            phase,
            beam_heads,
        }
    }

    pub fn n1(&self) -> usize {
        self.panel1.0 * self.panel1.1
    }

    pub fn n2(&self) -> usize {
        self.panel2.0 * self.panel2.1
    }

    /// Number of softmax heads for discrete phase modes.
    pub fn phase_slots(&self) -> usize {
        match self.phase {
            PhaseMode::Continuous | PhaseMode::Quantized { .. } => self.n1() + self.n2(),
            PhaseMode::Grouped { groups, .. } => 2 * groups,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.state_dim == 0 || self.width == 0 || self.depth == 0 {
            return Err(AgentError::Layout("actor dimensions must be positive".into()));
        }
        if self.m_t == 0 || self.m_r == 0 || self.n1() == 0 || self.n2() == 0 {
            return Err(AgentError::Layout("array sizes must be positive".into()));
        }
        match self.phase {
            PhaseMode::Continuous => {}
            PhaseMode::Quantized { bits } | PhaseMode::Grouped { bits, .. } => {
                if !(1..=8).contains(&bits) {
                    return Err(AgentError::Layout(format!("phase resolution {bits} bits")));
                }
            }
        }
        if let PhaseMode::Grouped { groups, .. } = self.phase {
            super::GroupLayout::new(self.panel1.0, self.panel1.1, groups)?;
            super::GroupLayout::new(self.panel2.0, self.panel2.1, groups)?;
        }
        Ok(())
    }
}

/// Unscaled actor outputs. Also used for gradients with respect to them.
#[derive(Debug, Clone, PartialEq)]
pub struct RawOutput {
    /// Continuous phase outputs in `[-1, 1]`, RIS1 then RIS2.
    pub phase: Vec<f64>,
    /// Probability vectors for discrete phase modes.
    pub probs: Vec<Vec<f64>>,
    /// `[Re w_T, Im w_T, Re w_R, Im w_R]`, empty without beamformer heads.
    pub beam: Vec<f64>,
    /// `[p_A, p_U]` in `[-1, 1]`.
    pub power: [f64; 2],
}

/// Shared trunk feeding independent output heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub spec: ActorSpec,
    pub trunk: Sequential,
    /// Continuous mode: two heads (RIS1, RIS2). Discrete modes: one softmax head per slot.
    pub phase_heads: Vec<Sequential>,
    /// Re w_T, Im w_T, Re w_R, Im w_R.
    pub beam_heads: Vec<Sequential>,
    /// p_A then p_U.
    pub power_heads: Vec<Sequential>,
}

#[derive(Debug, Clone, Default)]
pub struct ActorTape {
    trunk: Tape,
    phase: Vec<Tape>,
    beam: Vec<Tape>,
    power: Vec<Tape>,
}

fn small(d_in: usize, d_out: usize, rng: &mut (impl Rng + ?Sized)) -> Layer {
    Layer::Dense(init_small_uniform(d_in, d_out, SMALL_INIT, rng).expect("positive bound"))
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(spec: ActorSpec, rng: &mut R) -> Result<Self, AgentError> {
        spec.validate()?;
        let w = spec.width;
        let mut trunk = Vec::new();
        for l in 0..spec.depth {
            let d_in = if l == 0 { spec.state_dim } else { w };
            trunk.push(Layer::Dense(init_glorot(d_in, w, rng)));
            trunk.push(Layer::LayerNorm(LayerNormParams::new(w)));
            trunk.push(Layer::Act(Activation::Relu));
        }
        let phase_heads = match spec.phase {
            PhaseMode::Continuous => [spec.n1(), spec.n2()]
                .iter()
                .map(|&n| Sequential::new(vec![small(w, n, rng), Layer::Act(Activation::Tanh)]))
                .collect(),
            PhaseMode::Quantized { bits } | PhaseMode::Grouped { bits, .. } => (0..spec
                .phase_slots())
                .map(|_| {
                    Sequential::new(vec![small(w, 1 << bits, rng), Layer::Act(Activation::Softmax)])
                })
                .collect(),
        };
        let beam_heads = if spec.beam_heads {
            [spec.m_t, spec.m_t, spec.m_r, spec.m_r]
                .iter()
                .map(|&m| {
                    Sequential::new(vec![
                        Layer::Dense(init_glorot(w, m, rng)),
                        Layer::Act(Activation::Relu),
                        small(m, m, rng),
                        Layer::Act(Activation::Tanh),
                    ])
                })
                .collect()
        } else {
            Vec::new()
        };
        let power_heads = (0..2)
            .map(|_| Sequential::new(vec![small(w, 1, rng), Layer::Act(Activation::Tanh)]))
            .collect();
        Ok(Self {
            spec,
            trunk: Sequential::new(trunk),
            phase_heads,
            beam_heads,
            power_heads,
        })
    }

    fn check_state(&self, state: &[f64]) -> Result<(), NnError> {
        if state.len() != self.spec.state_dim {
            return Err(NnError::Shape {
                op: "actor",
                expected: self.spec.state_dim,
                got: state.len(),
            });
        }
        Ok(())
    }

    fn assemble(&self, heads: (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)) -> RawOutput {
        let (phase_out, beam_out, power_out) = heads;
        let (phase, probs) = match self.spec.phase {
            PhaseMode::Continuous => (phase_out.concat(), Vec::new()),
            _ => (Vec::new(), phase_out),
        };
        RawOutput {
            phase,
            probs,
            beam: beam_out.concat(),
            power: [power_out[0][0], power_out[1][0]],
        }
    }

    /// Evaluation without recording.
    pub fn apply(&self, state: &[f64]) -> Result<RawOutput, NnError> {
        self.check_state(state)?;
        let h = self.trunk.apply(state)?;
        let run = |heads: &[Sequential]| heads.iter().map(|s| s.apply(&h)).collect::<Result<Vec<_>, _>>();
        Ok(self.assemble((run(&self.phase_heads)?, run(&self.beam_heads)?, run(&self.power_heads)?)))
    }

    pub fn forward(&self, state: &[f64]) -> Result<(RawOutput, ActorTape), NnError> {
        self.check_state(state)?;
        let mut tape = ActorTape::default();
        let h = self.trunk.forward(state, &mut tape.trunk)?;
        let run = |heads: &[Sequential], tapes: &mut Vec<Tape>| {
            heads
                .iter()
                .map(|s| {
                    let mut t = Tape::new();
                    let y = s.forward(&h, &mut t)?;
                    tapes.push(t);
                    Ok(y)
                })
                .collect::<Result<Vec<_>, NnError>>()
        };
        let p = run(&self.phase_heads, &mut tape.phase)?;
        let b = run(&self.beam_heads, &mut tape.beam)?;
        let w = run(&self.power_heads, &mut tape.power)?;
        Ok((self.assemble((p, b, w)), tape))
    }

    /// Accumulate parameter gradients for `d_raw` into `grads`; returns the state gradient.
    pub fn backward(
        &self,
        tape: &ActorTape,
        d_raw: &RawOutput,
        grads: &mut Actor,
    ) -> Result<Vec<f64>, NnError> {
        let mut dh = vec![0.0; self.spec.width];
        let mut acc = |d: Vec<f64>| dh.iter_mut().zip(d).for_each(|(a, b)| *a += b);

        let phase_grads: Vec<&[f64]> = match self.spec.phase {
            PhaseMode::Continuous => {
                let n1 = self.spec.n1();
                vec![&d_raw.phase[..n1], &d_raw.phase[n1..]]
            }
            _ => d_raw.probs.iter().map(Vec::as_slice).collect(),
        };
        for (i, dy) in phase_grads.into_iter().enumerate() {
            acc(self.phase_heads[i].backward(&tape.phase[i], dy, Some(&mut grads.phase_heads[i]))?);
        }
        if !self.beam_heads.is_empty() && !d_raw.beam.is_empty() {
            let mut off = 0;
            for (i, head) in self.beam_heads.iter().enumerate() {
                let m = head.output_dim().unwrap_or(0);
                let dy = &d_raw.beam[off..off + m];
                off += m;
                acc(head.backward(&tape.beam[i], dy, Some(&mut grads.beam_heads[i]))?);
            }
        }
        for i in 0..2 {
            acc(self.power_heads[i].backward(&tape.power[i], &[d_raw.power[i]], Some(&mut grads.power_heads[i]))?);
        }
        self.trunk.backward(&tape.trunk, &dh, Some(&mut grads.trunk))
    }
}

impl Parameters for Actor {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        fn add<'a>(out: &mut Vec<TensorView<'a>>, prefix: String, s: &'a Sequential) {
            out.extend(s.tensors().into_iter().map(|t| TensorView {
                name: format!("{prefix}.{}", t.name),
                dims: t.dims,
                data: t.data,
            }));
        }
        let mut out = Vec::new();
        add(&mut out, "trunk".into(), &self.trunk);
        for (i, s) in self.phase_heads.iter().enumerate() {
            add(&mut out, format!("phase{i}"), s);
        }
        for (i, s) in self.beam_heads.iter().enumerate() {
            add(&mut out, format!("beam{i}"), s);
        }
        for (i, s) in self.power_heads.iter().enumerate() {
            add(&mut out, format!("power{i}"), s);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.trunk.tensors_mut();
        for s in self
            .phase_heads
            .iter_mut()
            .chain(self.beam_heads.iter_mut())
            .chain(self.power_heads.iter_mut())
        {
            out.extend(s.tensors_mut());
        }
        out
    }
}
