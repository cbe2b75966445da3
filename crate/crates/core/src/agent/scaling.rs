use std::f64::consts::{PI, TAU};

use super::{ActorSpec, AgentError, PhaseMode, RawOutput};
use crate::channel::PowerLimits;
use crate::cnum::C64;
use crate::env::{normalize_or_e1, wrap_phase, Action};

/// Partition of an `nv × nh` panel into `gr × gc` equal rectangular blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupLayout {
    pub nv: usize,
    pub nh: usize,
    pub gr: usize,
    pub gc: usize,
}

impl GroupLayout {
    /// Most square block grid with `groups` blocks that tiles the panel exactly.
    pub fn new(nv: usize, nh: usize, groups: usize) -> Result<Self, AgentError> {
        let mut best: Option<Self> = None;
        for gr in 1..=groups {
            if groups % gr != 0 {
                continue;
            }
            let gc = groups / gr;
            if gr > nv || gc > nh || nv % gr != 0 || nh % gc != 0 {
                continue;
            }
            let cand = Self { nv, nh, gr, gc };
            let skew = |l: &Self| l.gr.abs_diff(l.gc);
            if best.is_none_or(|b| skew(&cand) < skew(&b)) {
                best = Some(cand);
            }
        }
        best.ok_or_else(|| {
            AgentError::Layout(format!(
                "{groups} groups cannot tile a {nv}×{nh} panel with equal rectangular blocks"
            ))
        })
    }

    pub fn groups(&self) -> usize {
        self.gr * self.gc
    }

    pub fn elements(&self) -> usize {
        self.nv * self.nh
    }

    /// Group of element `iz·nh + ix`.
    pub fn group_of(&self, element: usize) -> usize {
        let (iz, ix) = (element / self.nh, element % self.nh);
        let (bh, bw) = (self.nv / self.gr, self.nh / self.gc);
        (iz / bh) * self.gc + ix / bw
    }
}

/// Give every element its group's phase.
pub fn group_expand(group_phases: &[f64], layout: &GroupLayout) -> Result<Vec<f64>, AgentError> {
    if group_phases.len() != layout.groups() {
        return Err(AgentError::Layout(format!(
            "{} group phases for {} groups",
            group_phases.len(),
            layout.groups()
        )));
    }
    Ok((0..layout.elements())
        .map(|e| group_phases[layout.group_of(e)])
        .collect())
}

fn argmax_lowest(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Grid phase `(2π/2ⁿ)·argmax` per probability vector, ties to the lowest index.
pub fn quantized_phase_select(probs: &[Vec<f64>], bits: u32) -> Vec<f64> {
    let step = TAU / (1u64 << bits) as f64;
    probs.iter().map(|p| step * argmax_lowest(p) as f64).collect()
}

fn wrap_pm_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y <= -PI {
        y + TAU
    } else {
        y
    }
}

/// Straight-through gradient of a quantized phase with respect to its probability vector.
///
/// The selection is treated as the first-order expansion
/// `θ ≈ θ* + Σ_k p_k·wrap(grid_k − θ*)`, so `∂θ/∂p_k = wrap(grid_k − θ*)`.
pub fn straight_through_phase_grad(probs: &[f64], bits: u32, d_theta: f64) -> Vec<f64> {
    let step = TAU / (1u64 << bits) as f64;
    let chosen = step * argmax_lowest(probs) as f64;
    (0..probs.len())
        .map(|k| d_theta * wrap_pm_pi(step * k as f64 - chosen))
        .collect()
}

/// Maps raw head outputs in `[-1, 1]` to a valid [`Action`] and back-propagates through that map.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionScaler {
    pub n1: usize,
    pub n2: usize,
    pub m_t: usize,
    pub m_r: usize,
    pub phase: PhaseMode,
    pub layouts: Option<(GroupLayout, GroupLayout)>,
    pub limits: PowerLimits,
}

impl ActionScaler {
    pub fn new(spec: &ActorSpec, limits: PowerLimits) -> Result<Self, AgentError> {
        let layouts = match spec.phase {
            PhaseMode::Grouped { groups, .. } => Some((
                GroupLayout::new(spec.panel1.0, spec.panel1.1, groups)?,
                GroupLayout::new(spec.panel2.0, spec.panel2.1, groups)?,
            )),
            _ => None,
        };
        Ok(Self {
            n1: spec.n1(),
            n2: spec.n2(),
            m_t: spec.m_t,
            m_r: spec.m_r,
            phase: spec.phase,
            layouts,
            limits,
        })
    }

    fn phases(&self, raw: &RawOutput) -> (Vec<f64>, Vec<f64>) {
        match self.phase {
            PhaseMode::Continuous => {
                let th: Vec<f64> = raw.phase.iter().map(|a| wrap_phase(PI * (a + 1.0))).collect();
                (th[..self.n1].to_vec(), th[self.n1..].to_vec())
            }
            PhaseMode::Quantized { bits } => {
                let th = quantized_phase_select(&raw.probs, bits);
                (th[..self.n1].to_vec(), th[self.n1..].to_vec())
            }
            PhaseMode::Grouped { bits, groups } => {
                let th = quantized_phase_select(&raw.probs, bits);
                let (l1, l2) = self.layouts.expect("grouped scaler has layouts");
                (
                    group_expand(&th[..groups], &l1).expect("layout checked"),
                    group_expand(&th[groups..], &l2).expect("layout checked"),
                )
            }
        }
    }

    fn beams(&self, beam: &[f64]) -> (Vec<C64>, Vec<C64>) {
        let (mt, mr) = (self.m_t, self.m_r);
        let w_t: Vec<C64> = (0..mt).map(|i| C64::new(beam[i], beam[mt + i])).collect();
        let off = 2 * mt;
        let w_r: Vec<C64> = (0..mr)
            .map(|i| C64::new(beam[off + i], beam[off + mr + i]))
            .collect();
        (normalize_or_e1(&w_t), normalize_or_e1(&w_r))
    }

    /// Scale raw outputs. Without beamformer heads, `beams` must supply `(w_T, w_R)`.
    pub fn to_action(&self, raw: &RawOutput, beams: Option<(Vec<C64>, Vec<C64>)>) -> Action {
        let (theta_u, theta_d) = self.phases(raw);
        let (w_t, w_r) = match beams {
            Some(b) => b,
            None if !raw.beam.is_empty() => self.beams(&raw.beam),
            None => (
                normalize_or_e1(&vec![C64::new(0.0, 0.0); self.m_t]),
                normalize_or_e1(&vec![C64::new(0.0, 0.0); self.m_r]),
            ),
        };
        let p = |a: f64, max: f64| ((a.clamp(-1.0, 1.0) + 1.0) / 2.0 * max).clamp(0.0, max);
        Action {
            theta_u,
            theta_d,
            w_t,
            w_r,
            p_a: p(raw.power[0], self.limits.p_a_max),
            p_u: p(raw.power[1], self.limits.p_u_max),
        }
    }

    /// Gradient with respect to the raw outputs, given the gradient with
    /// respect to the flattened action `[θ_U, θ_D, Re w_T, Im w_T, Re w_R, Im w_R, p_A, p_U]`.
    /// Beamformer gradients are dropped when the raw output has no beamformer heads.
    pub fn backward(&self, raw: &RawOutput, d_action: &[f64]) -> RawOutput {
        let (n1, n2, mt, mr) = (self.n1, self.n2, self.m_t, self.m_r);
        let d_theta = &d_action[..n1 + n2];
        let mut grad = RawOutput {
            phase: Vec::new(),
            probs: Vec::new(),
            beam: Vec::new(),
            power: [0.0; 2],
        };
        match self.phase {
            PhaseMode::Continuous => {
                grad.phase = d_theta.iter().map(|g| PI * g).collect();
            }
            PhaseMode::Quantized { bits } => {
                grad.probs = raw
                    .probs
                    .iter()
                    .zip(d_theta)
                    .map(|(p, &g)| straight_through_phase_grad(p, bits, g))
                    .collect();
            }
            PhaseMode::Grouped { bits, groups } => {
                let (l1, l2) = self.layouts.expect("grouped scaler has layouts");
                let mut dg = vec![0.0; 2 * groups];
                for e in 0..n1 {
                    dg[l1.group_of(e)] += d_theta[e];
                }
                for e in 0..n2 {
                    dg[groups + l2.group_of(e)] += d_theta[n1 + e];
                }
                grad.probs = raw
                    .probs
                    .iter()
                    .zip(&dg)
                    .map(|(p, &g)| straight_through_phase_grad(p, bits, g))
                    .collect();
            }
        }
        if !raw.beam.is_empty() {
            let off = n1 + n2;
            let mut beam_grad = vec![0.0; raw.beam.len()];
            // w_T block then w_R block; each is x/‖x‖ over its I and Q entries
            for (start, m) in [(0usize, mt), (2 * mt, mr)] {
                let idx: Vec<usize> = (0..m).map(|i| start + i).chain((0..m).map(|i| start + m + i)).collect();
                let x: Vec<f64> = idx.iter().map(|&i| raw.beam[i]).collect();
                let g: Vec<f64> = idx.iter().map(|&i| d_action[off + i]).collect();
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 && norm.is_finite() {
                    let proj: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / (norm * norm);
                    for (k, &i) in idx.iter().enumerate() {
                        beam_grad[i] = (g[k] - x[k] * proj) / norm;
                    }
                }
            }
            grad.beam = beam_grad;
        }
        let p_off = n1 + n2 + 2 * mt + 2 * mr;
        grad.power = [
            d_action[p_off] * self.limits.p_a_max / 2.0,
            d_action[p_off + 1] * self.limits.p_u_max / 2.0,
        ];
        grad
    }
}
