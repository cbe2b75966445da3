//! Full-duplex link environment.
//!
//! The environment holds the channel realization for the *current* time step.
//! [`Environment::step`] applies an action to it, scores the outcome and then
//! moves time forward (mobility, fading) so the next realization is ready.
//! Keeping the current channels observable lets CSI-based baselines compute
//! beamformers for exactly the channels their action will meet.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{
    realize_channels, sample_rayleigh, ChannelError, ChannelParams, ChannelSet, FadingState,
    Geometry, MobilityState, Point, PowerLimits, Scenario, DEFAULT_OSCILLATORS,
};
use crate::cnum::{solve_1x1_or_pinv_scalar, ComplexMatrix, LinalgError, C64};

/// Upper clip applied to the SINR entries of the state vector.
pub const STATE_SINR_CLIP: f64 = 1e6;

/// Tolerance on the unit-norm beamformer invariant.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("pilot power must be positive, got {0}")]
    Power(f64),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Everything the BS controls in one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    /// RIS1 phases, radians in `[0, 2π)`.
    pub theta_u: Vec<f64>,
    /// RIS2 phases.
    pub theta_d: Vec<f64>,
    /// Transmit beamformer, `M_t` entries, unit norm.
    pub w_t: Vec<C64>,
    /// Receive combiner, `M_r` entries (applied as a row), unit norm.
    pub w_r: Vec<C64>,
    pub p_a: f64,
    pub p_u: f64,
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Unit-normalize; a zero (or non-finite) vector becomes the first basis vector.
pub fn normalize_or_e1(v: &[C64]) -> Vec<C64> {
    let n = vec_norm(v);
    if n > 0.0 && n.is_finite() {
        v.iter().map(|z| z / n).collect()
    } else {
        let mut e = vec![C64::new(0.0, 0.0); v.len()];
        if let Some(first) = e.first_mut() {
            *first = C64::new(1.0, 0.0);
        }
        e
    }
}

pub fn wrap_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

impl Action {
    /// Number of real entries in [`flatten`](Self::flatten).
    pub fn flat_dim(geom: &Geometry) -> usize {
        geom.n1() + geom.n2() + 2 * geom.m_t + 2 * geom.m_r + 2
    }

    /// Random valid action: uniform phases, uniform I/Q normalized, powers in the middle third.
    pub fn random_valid<R: Rng + ?Sized>(geom: &Geometry, limits: PowerLimits, rng: &mut R) -> Self {
        let mut a = Self::random_phases_and_beams(geom, rng);
        a.p_a = rng.random_range(limits.p_a_max / 3.0..=2.0 * limits.p_a_max / 3.0);
        a.p_u = rng.random_range(limits.p_u_max / 3.0..=2.0 * limits.p_u_max / 3.0);
        a
    }

    /// Uniform phases and normalized uniform I/Q beamformers; powers left at zero.
    pub fn random_phases_and_beams<R: Rng + ?Sized>(geom: &Geometry, rng: &mut R) -> Self {
        let mut phases = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0.0..TAU)).collect() };
        let theta_u = phases(geom.n1());
        let theta_d = phases(geom.n2());
        let mut beam = |m: usize| {
            let v: Vec<C64> = (0..m)
                .map(|_| C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)))
                .collect();
            normalize_or_e1(&v)
        };
        let w_t = beam(geom.m_t);
        let w_r = beam(geom.m_r);
        Self {
            theta_u,
            theta_d,
            w_t,
            w_r,
            p_a: 0.0,
            p_u: 0.0,
        }
    }

    /// `[θ_U, θ_D, Re w_T, Im w_T, Re w_R, Im w_R, p_A, p_U]`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(
            self.theta_u.len() + self.theta_d.len() + 2 * self.w_t.len() + 2 * self.w_r.len() + 2,
        );
        v.extend_from_slice(&self.theta_u);
        v.extend_from_slice(&self.theta_d);
        v.extend(self.w_t.iter().map(|z| z.re));
        v.extend(self.w_t.iter().map(|z| z.im));
        v.extend(self.w_r.iter().map(|z| z.re));
        v.extend(self.w_r.iter().map(|z| z.im));
        v.push(self.p_a);
        v.push(self.p_u);
        v
    }

    pub fn validate(&self, geom: &Geometry, limits: PowerLimits) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidAction(m));
        if self.theta_u.len() != geom.n1() || self.theta_d.len() != geom.n2() {
            return bad(format!(
                "phase counts {}/{} do not match panels {}/{}",
                self.theta_u.len(),
                self.theta_d.len(),
                geom.n1(),
                geom.n2()
            ));
        }
        if self.w_t.len() != geom.m_t || self.w_r.len() != geom.m_r {
            return bad("beamformer length does not match array size".into());
        }
        if let Some(t) = self
            .theta_u
            .iter()
            .chain(&self.theta_d)
            .find(|t| !(t.is_finite() && (0.0..TAU).contains(*t)))
        {
            return bad(format!("phase {t} outside [0, 2π)"));
        }
        for (name, w) in [("w_T", &self.w_t), ("w_R", &self.w_r)] {
            let n = vec_norm(w);
            if !((n - 1.0).abs() <= NORM_TOL) {
                return bad(format!("{name} has norm {n}"));
            }
        }
        if !(self.p_a >= 0.0 && self.p_a <= limits.p_a_max) {
            return bad(format!("p_A = {} outside [0, {}]", self.p_a, limits.p_a_max));
        }
        if !(self.p_u >= 0.0 && self.p_u <= limits.p_u_max) {
            return bad(format!("p_U = {} outside [0, {}]", self.p_u, limits.p_u_max));
        }
        Ok(())
    }
}

/// Observation fed to the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub gamma_bs_prev: f64,
    pub gamma_dl_prev: f64,
    /// Clipped SINRs, flattened previous action, optional positions.
    pub features: Vec<f64>,
}

impl State {
    pub fn dim(geom: &Geometry, with_positions: bool) -> usize {
        2 + Action::flat_dim(geom) + if with_positions { 4 } else { 0 }
    }

    pub fn assemble(gamma_bs: f64, gamma_dl: f64, action: &Action, positions: Option<[Point; 2]>) -> Self {
        let clip = |g: f64| if g.is_nan() { 0.0 } else { g.clamp(0.0, STATE_SINR_CLIP) };
        let mut features = vec![clip(gamma_bs), clip(gamma_dl)];
        features.extend(action.flatten());
        if let Some([ul, dl]) = positions {
            features.extend([ul.x, ul.y, dl.x, dl.y]);
        }
        Self {
            gamma_bs_prev: gamma_bs,
            gamma_dl_prev: gamma_dl,
            features,
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiMethod {
    Lssic,
    Hsic,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiEstimate {
    pub h_hat: C64,
    pub method: SiMethod,
}

impl SiEstimate {
    pub fn none() -> Self {
        Self {
            h_hat: C64::new(0.0, 0.0),
            method: SiMethod::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: State,
    pub reward: f64,
    pub gamma_bs: f64,
    pub gamma_dl: f64,
    pub r_bs: f64,
    pub r_dl: f64,
}

/// `w_R · H · w_T` for a row combiner and column precoder.
pub fn bilinear(w_r: &[C64], h: &ComplexMatrix, w_t: &[C64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (r, wr) in w_r.iter().enumerate() {
        let mut row = C64::new(0.0, 0.0);
        for (c, wt) in w_t.iter().enumerate() {
            row += h[(r, c)] * wt;
        }
        acc += wr * row;
    }
    acc
}

fn phasors(theta: &[f64]) -> Vec<C64> {
    theta.iter().map(|&t| C64::from_polar(1.0, t)).collect()
}

/// Effective uplink channel at the BS receive array:
/// `h_AU + F_AI Θ_U f_IU + G_IAᵀ Θ_D g_IU` (`M_r` entries).
pub fn uplink_channel(ch: &ChannelSet, theta_u: &[f64], theta_d: &[f64]) -> Vec<C64> {
    let (pu, pd) = (phasors(theta_u), phasors(theta_d));
    let mr = ch.h_au.rows();
    let n1 = ch.f_iu.rows();
    let n2 = ch.g_iu.rows();
    let ru: Vec<C64> = (0..n1).map(|n| pu[n] * ch.f_iu[(n, 0)]).collect();
    let rd: Vec<C64> = (0..n2).map(|n| pd[n] * ch.g_iu[(n, 0)]).collect();
    (0..mr)
        .map(|m| {
            let mut acc = ch.h_au[(m, 0)];
            for n in 0..n1 {
                acc += ch.f_ai[(m, n)] * ru[n];
            }
            for n in 0..n2 {
                acc += ch.g_ia[(n, m)] * rd[n];
            }
            acc
        })
        .collect()
}

/// Effective downlink channel from the BS transmit array:
/// `h_DA + g_DI Θ_D G_IA + f_DI Θ_U F_AIᵀ` (`M_t` entries).
pub fn downlink_channel(ch: &ChannelSet, theta_u: &[f64], theta_d: &[f64]) -> Vec<C64> {
    let (pu, pd) = (phasors(theta_u), phasors(theta_d));
    let mt = ch.h_da.cols();
    let n1 = ch.f_di.cols();
    let n2 = ch.g_di.cols();
    let ld: Vec<C64> = (0..n2).map(|n| ch.g_di[(0, n)] * pd[n]).collect();
    let lu: Vec<C64> = (0..n1).map(|n| ch.f_di[(0, n)] * pu[n]).collect();
    (0..mt)
        .map(|m| {
            let mut acc = ch.h_da[(0, m)];
            for n in 0..n2 {
                acc += ld[n] * ch.g_ia[(n, m)];
            }
            for n in 0..n1 {
                acc += lu[n] * ch.f_ai[(m, n)];
            }
            acc
        })
        .collect()
}

/// Scalar ULue → DLue interference channel `g + g_DI Θ_D g_IU + f_DI Θ_U f_IU`.
pub fn interuser_channel(ch: &ChannelSet, theta_u: &[f64], theta_d: &[f64]) -> C64 {
    let mut acc = ch.g[(0, 0)];
    for (n, t) in theta_d.iter().enumerate() {
        acc += ch.g_di[(0, n)] * C64::from_polar(1.0, *t) * ch.g_iu[(n, 0)];
    }
    for (n, t) in theta_u.iter().enumerate() {
        acc += ch.f_di[(0, n)] * C64::from_polar(1.0, *t) * ch.f_iu[(n, 0)];
    }
    acc
}

/// Least-squares loop-channel estimate from one unit pilot.
pub fn lssic_estimate<R: Rng + ?Sized>(
    ch: &ChannelSet,
    action: &Action,
    sigma_a2: f64,
    rng: &mut R,
) -> Result<SiEstimate, EnvError> {
    if !(action.p_a > 0.0) {
        return Err(EnvError::Power(action.p_a));
    }
    let s = C64::new(1.0, 0.0);
    let h = bilinear(&action.w_r, &ch.h_aa, &action.w_t);
    let noise_var = sigma_a2 * vec_norm(&action.w_r).powi(2);
    let v = sample_rayleigh(1, 1, noise_var, rng).as_slice()[0];
    let y = h * action.p_a.sqrt() * s + v;
    let inv = solve_1x1_or_pinv_scalar(s.conj() * s)?;
    Ok(SiEstimate {
        h_hat: inv * s.conj() * y / action.p_a.sqrt(),
        method: SiMethod::Lssic,
    })
}

/// Cancellation from a full-matrix estimate `H̃` of the loop channel.
pub fn hsic_estimate(h_tilde: &ComplexMatrix, action: &Action) -> Result<SiEstimate, EnvError> {
    if h_tilde.shape() != (action.w_r.len(), action.w_t.len()) {
        return Err(LinalgError::DimensionMismatch {
            op: "hsic_estimate",
            lhs: h_tilde.shape(),
            rhs: (action.w_r.len(), action.w_t.len()),
        }
        .into());
    }
    Ok(SiEstimate {
        h_hat: bilinear(&action.w_r, h_tilde, &action.w_t),
        method: SiMethod::Hsic,
    })
}

/// Linear SINRs at the BS and at the DLue.
pub fn compute_sinrs(
    ch: &ChannelSet,
    action: &Action,
    si: &SiEstimate,
    sigma_a2: f64,
    sigma_d2: f64,
) -> (f64, f64) {
    let u = uplink_channel(ch, &action.theta_u, &action.theta_d);
    let signal_bs: C64 = action.w_r.iter().zip(&u).map(|(w, h)| w * h).sum();
    let residual = bilinear(&action.w_r, &ch.h_aa, &action.w_t) - si.h_hat;
    let wr2 = vec_norm(&action.w_r).powi(2);
    let gamma_bs =
        action.p_u * signal_bs.norm_sqr() / (action.p_a * residual.norm_sqr() + wr2 * sigma_a2);

    let d = downlink_channel(ch, &action.theta_u, &action.theta_d);
    let signal_dl: C64 = d.iter().zip(&action.w_t).map(|(h, w)| h * w).sum();
    let interf = interuser_channel(ch, &action.theta_u, &action.theta_d);
    let gamma_dl = action.p_a * signal_dl.norm_sqr() / (action.p_u * interf.norm_sqr() + sigma_d2);
    (gamma_bs, gamma_dl)
}

pub fn rate(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

/// Static environment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub geometry: Geometry,
    pub params: ChannelParams,
    pub scenario: Scenario,
    pub si_method: SiMethod,
    /// Weight of the uplink rate in the reward.
    pub delta: f64,
    pub sigma_a2: f64,
    pub sigma_d2: f64,
    /// Entry variance of the error on the loop-channel matrix used by HSIC.
    pub hsic_error_var: f64,
    pub mobile: bool,
    /// Side of each user's roaming square, metres.
    pub roam_side: f64,
    /// Metres per step.
    pub speed: f64,
    /// Half-width of the uniform start-position jitter when mobile.
    pub start_jitter: f64,
    pub include_positions: bool,
    pub oscillators: usize,
}

impl EnvConfig {
    pub fn new(geometry: Geometry, scenario: Scenario) -> Self {
        let mut params = ChannelParams::default();
        scenario.apply(&mut params);
        let noise = params.noise_power_w();
        Self {
            geometry,
            params,
            scenario,
            si_method: SiMethod::Lssic,
            delta: 0.5,
            sigma_a2: noise,
            sigma_d2: noise,
            hsic_error_var: 1e-12,
            mobile: false,
            roam_side: 10.0,
            speed: 1.0,
            start_jitter: 5.0,
            include_positions: false,
            oscillators: DEFAULT_OSCILLATORS,
        }
    }

    pub fn limits(&self) -> PowerLimits {
        self.scenario.power_limits()
    }

    pub fn state_dim(&self) -> usize {
        State::dim(&self.geometry, self.include_positions)
    }
}

pub struct Environment {
    cfg: EnvConfig,
    rng: ChaCha8Rng,
    geom: Geometry,
    fading: Option<FadingState>,
    mobility: Option<MobilityState>,
    channels: Option<ChannelSet>,
    frozen: bool,
    steps: u64,
}

impl Environment {
    pub fn new(cfg: EnvConfig, rng: ChaCha8Rng) -> Result<Self, EnvError> {
        cfg.geometry.validate()?;
        cfg.params.validate()?;
        let geom = cfg.geometry.clone();
        Ok(Self {
            cfg,
            rng,
            geom,
            fading: None,
            mobility: None,
            channels: None,
            frozen: false,
            steps: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn limits(&self) -> PowerLimits {
        self.cfg.limits()
    }

    /// Geometry in effect for the current step (user positions move when mobile).
    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    /// Channels the next action will be applied to.
    pub fn channels(&self) -> Option<&ChannelSet> {
        self.channels.as_ref()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Pin the channels: later steps reuse `ch` and time no longer advances.
    pub fn freeze_channels(&mut self, ch: ChannelSet) -> Result<(), EnvError> {
        if !ch.shapes_match(&self.geom) {
            return Err(ChannelError::Geometry("channel shapes do not match geometry".into()).into());
        }
        self.channels = Some(ch);
        self.frozen = true;
        Ok(())
    }

    /// Start an episode: fresh positions and fading, then one step with a random valid action.
    pub fn reset(&mut self) -> Result<State, EnvError> {
        let action = Action::random_valid(&self.geom, self.limits(), &mut self.rng);
        self.reset_with(&action)
    }

    /// As [`reset`](Self::reset) but with a caller-chosen first action.
    pub fn reset_with(&mut self, action: &Action) -> Result<State, EnvError> {
        if !self.frozen {
            self.geom = self.cfg.geometry.clone();
            if self.cfg.mobile {
                let j = self.cfg.start_jitter;
                let mut jitter = |p: Point| {
                    Point::new(
                        p.x + self.rng.random_range(-j..=j),
                        p.y + self.rng.random_range(-j..=j),
                    )
                };
                self.geom.ulue_pos = jitter(self.geom.ulue_pos);
                self.geom.dlue_pos = jitter(self.geom.dlue_pos);
                self.mobility = Some(MobilityState::new(
                    &[self.geom.ulue_pos, self.geom.dlue_pos],
                    self.cfg.roam_side,
                    self.cfg.speed,
                    &mut self.rng,
                ));
            }
            let fading = FadingState::new(&self.geom, &self.cfg.params, self.cfg.oscillators, &mut self.rng);
            self.channels = Some(realize_channels(&self.geom, &self.cfg.params, &fading)?);
            self.fading = Some(fading);
        }
        Ok(self.step(action)?.next_state)
    }

    /// SI estimate for `action` on the current channels, per the configured method.
    fn estimate_si(&mut self, ch: &ChannelSet, action: &Action) -> Result<SiEstimate, EnvError> {
        match self.cfg.si_method {
            SiMethod::Lssic => lssic_estimate(ch, action, self.cfg.sigma_a2, &mut self.rng),
            SiMethod::Hsic => {
                let (r, c) = ch.h_aa.shape();
                let err = sample_rayleigh(r, c, self.cfg.hsic_error_var, &mut self.rng);
                hsic_estimate(&ch.h_aa.add(&err)?, action)
            }
            SiMethod::None => Ok(SiEstimate::none()),
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        let ch = self.channels.take().ok_or(EnvError::NotReset)?;
        let result = self.score(&ch, action);
        self.channels = Some(ch);
        let (gamma_bs, gamma_dl) = result?;
        self.advance()?;

        let (r_bs, r_dl) = (rate(gamma_bs), rate(gamma_dl));
        let delta = self.cfg.delta;
        let positions = self
            .cfg
            .include_positions
            .then(|| [self.geom.ulue_pos, self.geom.dlue_pos]);
        Ok(StepOutcome {
            next_state: State::assemble(gamma_bs, gamma_dl, action, positions),
            reward: delta * r_bs + (1.0 - delta) * r_dl,
            gamma_bs,
            gamma_dl,
            r_bs,
            r_dl,
        })
    }

    fn score(&mut self, ch: &ChannelSet, action: &Action) -> Result<(f64, f64), EnvError> {
        action.validate(&self.geom, self.limits())?;
        let si = if action.p_a > 0.0 || self.cfg.si_method != SiMethod::Lssic {
            self.estimate_si(ch, action)?
        } else {
            // nothing transmitted, nothing to cancel
            SiEstimate::none()
        };
        Ok(compute_sinrs(ch, action, &si, self.cfg.sigma_a2, self.cfg.sigma_d2))
    }

    fn advance(&mut self) -> Result<(), EnvError> {
        self.steps += 1;
        if self.frozen {
            return Ok(());
        }
        if let Some(m) = self.mobility.as_mut() {
            m.step(&mut self.rng);
            self.geom.ulue_pos = m.users[0].pos;
            self.geom.dlue_pos = m.users[1].pos;
        }
        let fading = self.fading.as_mut().ok_or(EnvError::NotReset)?;
        fading.advance(1);
        self.channels = Some(realize_channels(&self.geom, &self.cfg.params, fading)?);
        Ok(())
    }
}
