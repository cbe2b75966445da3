use std::f64::consts::PI;

use rand::Rng;

use super::{ChannelParams, Geometry};
use crate::cnum::{ComplexMatrix, C64};

pub const DEFAULT_OSCILLATORS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkId {
    FIu,
    FAi,
    HAu,
    GIa,
    GIu,
    GDi,
    HDa,
    FDi,
    G,
    HAa,
}

impl LinkId {
    pub const ALL: [LinkId; 10] = [
        LinkId::FIu,
        LinkId::FAi,
        LinkId::HAu,
        LinkId::GIa,
        LinkId::GIu,
        LinkId::GDi,
        LinkId::HDa,
        LinkId::FDi,
        LinkId::G,
        LinkId::HAa,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn shape(self, geom: &Geometry) -> (usize, usize) {
        let (mt, mr, n1, n2) = (geom.m_t, geom.m_r, geom.n1(), geom.n2());
        match self {
            LinkId::FIu => (n1, 1),
            LinkId::FAi => (mr, n1),
            LinkId::HAu => (mr, 1),
            LinkId::GIa => (n2, mt),
            LinkId::GIu => (n2, 1),
            LinkId::GDi => (1, n2),
            LinkId::HDa => (1, mt),
            LinkId::FDi => (1, n1),
            LinkId::G => (1, 1),
            LinkId::HAa => (mr, mt),
        }
    }
}

/// Sum-of-sinusoids generator for one matrix of independent unit-power entries.
///
/// Entry value at step `t` is `K^{-1/2} Σ_k exp(j(ω_k t + φ_k))` where
/// `ω_k = 2π f_D Δt cos α_k`, `α_k = (2πk + ϑ)/K` with a per-entry random
/// offset `ϑ`, and i.i.d. uniform phases `φ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct JakesMatrix {
    rows: usize,
    cols: usize,
    oscillators: usize,
    /// Per entry, `oscillators` pairs of (ω_k, φ_k).
    terms: Vec<(f64, f64)>,
    current: ComplexMatrix,
}

impl JakesMatrix {
    pub fn new<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        oscillators: usize,
        doppler_per_step: f64,
        rng: &mut R,
    ) -> Self {
        let k = oscillators.max(1);
        let mut terms = Vec::with_capacity(rows * cols * k);
        for _ in 0..rows * cols {
            let offset = rng.random_range(-PI..PI);
            for i in 0..k {
                let alpha = (2.0 * PI * i as f64 + offset) / k as f64;
                let w = 2.0 * PI * doppler_per_step * alpha.cos();
                terms.push((w, rng.random_range(-PI..PI)));
            }
        }
        let mut m = Self {
            rows,
            cols,
            oscillators: k,
            terms,
            current: ComplexMatrix::zeros(rows, cols),
        };
        m.evaluate(0);
        m
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn current(&self) -> &ComplexMatrix {
        &self.current
    }

    fn evaluate(&mut self, t: u64) {
        let t = t as f64;
        let norm = 1.0 / (self.oscillators as f64).sqrt();
        for (z, chunk) in self
            .current
            .as_mut_slice()
            .iter_mut()
            .zip(self.terms.chunks_exact(self.oscillators))
        {
            let mut acc = C64::new(0.0, 0.0);
            for &(w, phase) in chunk {
                let (s, c) = (w * t + phase).sin_cos();
                acc.re += c;
                acc.im += s;
            }
            *z = acc * norm;
        }
    }
}

/// Time-correlated small-scale fading for every link.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingState {
    links: Vec<JakesMatrix>,
    step: u64,
}

impl FadingState {
    pub fn new<R: Rng + ?Sized>(
        geom: &Geometry,
        params: &ChannelParams,
        oscillators: usize,
        rng: &mut R,
    ) -> Self {
        let nu = params.doppler_hz * params.step_interval_s;
        let links = LinkId::ALL
            .iter()
            .map(|id| {
                let (r, c) = id.shape(geom);
                JakesMatrix::new(r, c, oscillators, nu, rng)
            })
            .collect();
        Self { links, step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn nlos(&self, id: LinkId) -> &ComplexMatrix {
        self.links[id.index()].current()
    }

    pub fn matches(&self, geom: &Geometry) -> bool {
        LinkId::ALL
            .iter()
            .all(|&id| self.links[id.index()].shape() == id.shape(geom))
    }

    /// Move the generator `steps` sampling intervals forward.
    pub fn advance(&mut self, steps: u64) {
        if steps == 0 {
            return;
        }
        self.step += steps;
        for l in &mut self.links {
            l.evaluate(self.step);
        }
    }
}

/// Free-standing form of [`FadingState::advance`].
pub fn jakes_advance(state: &mut FadingState, steps: u64) {
    state.advance(steps);
}
