//! Reference policies: random phases and beams, and closed-form MRC/ZF beamformers from CSI.

use rand::Rng;
use thiserror::Error;

use crate::channel::{db_to_linear, sample_rayleigh, ChannelSet, Geometry, PowerLimits};
use crate::cnum::{solve_1x1_or_pinv_scalar, ComplexMatrix, LinalgError, C64};
use crate::env::{downlink_channel, uplink_channel, vec_norm, Action};

/// Below this norm a channel or SI direction counts as zero.
pub const DEGENERATE_NORM: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("degenerate channel: {0}")]
    DegenerateChannel(&'static str),
    #[error("zero forcing needs more than one transmit antenna (M_t = {0})")]
    SingleTransmitAntenna(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Random phases and beamformers at full power.
pub fn randpsbf_action<R: Rng + ?Sized>(geom: &Geometry, limits: PowerLimits, rng: &mut R) -> Action {
    let mut a = Action::random_phases_and_beams(geom, rng);
    a.p_a = limits.p_a_max;
    a.p_u = limits.p_u_max;
    a
}

/// How channel-state information is degraded before beamformer design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiNoise {
    /// Per-link NMSE in dB; `None` means perfect CSI.
    pub nmse_db: Option<f64>,
    /// Entry variance of the error added to `H_AA` (ignored when `nmse_db` is `None`).
    pub h_aa_var: f64,
    /// Zero the cross links `g_IU` and `f_DI` in the view.
    pub drop_cross_links: bool,
}

impl CsiNoise {
    pub fn perfect() -> Self {
        Self {
            nmse_db: None,
            h_aa_var: 0.0,
            drop_cross_links: false,
        }
    }
}

/// Channel estimate available to the beamformer designer.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiView {
    pub channels: ChannelSet,
}

fn mean_entry_power(m: &ComplexMatrix) -> f64 {
    if m.len() == 0 {
        return 0.0;
    }
    m.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>() / m.len() as f64
}

fn add_error<R: Rng + ?Sized>(m: &mut ComplexMatrix, var: f64, rng: &mut R) {
    if var > 0.0 {
        let e = sample_rayleigh(m.rows(), m.cols(), var, rng);
        for (x, d) in m.as_mut_slice().iter_mut().zip(e.as_slice()) {
            *x += d;
        }
    }
}

/// Add zero-mean circular Gaussian estimation error to every link.
///
/// Each link's error variance is the linear NMSE times that link's mean entry
/// power; `H_AA` uses its own configured variance.
pub fn corrupt_csi<R: Rng + ?Sized>(channels: &ChannelSet, noise: CsiNoise, rng: &mut R) -> CsiView {
    let mut est = channels.clone();
    if let Some(db) = noise.nmse_db {
        let nu = db_to_linear(db);
        let ChannelSet {
            f_iu,
            f_ai,
            h_au,
            g_ia,
            g_iu,
            g_di,
            h_da,
            f_di,
            g,
            h_aa,
        } = &mut est;
        for link in [f_iu, f_ai, h_au, g_ia, g_iu, g_di, h_da, f_di, g] {
            let var = nu * mean_entry_power(link);
            add_error(link, var, rng);
        }
        add_error(h_aa, noise.h_aa_var, rng);
    }
    if noise.drop_cross_links {
        est.g_iu.as_mut_slice().fill(C64::new(0.0, 0.0));
        est.f_di.as_mut_slice().fill(C64::new(0.0, 0.0));
    }
    CsiView { channels: est }
}

/// Maximum-ratio combiner: the conjugate of the effective uplink channel, unit norm.
pub fn mrc_receive(csi: &CsiView, theta_u: &[f64], theta_d: &[f64]) -> Result<Vec<C64>, BaselineError> {
    let u = uplink_channel(&csi.channels, theta_u, theta_d);
    let n = vec_norm(&u);
    if !(n > DEGENERATE_NORM) || !n.is_finite() {
        return Err(BaselineError::DegenerateChannel("effective uplink channel is zero"));
    }
    Ok(u.iter().map(|z| z.conj() / n).collect())
}

/// `I − vᴴ(v vᴴ)⁻¹ v` with `v = w_R H_AA`; identity when `v` vanishes.
pub fn ortho_complement_projector(h_aa: &ComplexMatrix, w_r: &[C64]) -> Result<ComplexMatrix, BaselineError> {
    let mt = h_aa.cols();
    let v = ComplexMatrix::row(w_r.to_vec()).matmul(h_aa)?;
    let vv: f64 = v.as_slice().iter().map(|z| z.norm_sqr()).sum();
    if !(vv.sqrt() > DEGENERATE_NORM) {
        return Ok(ComplexMatrix::identity(mt));
    }
    let inv = solve_1x1_or_pinv_scalar(C64::new(vv, 0.0))?;
    let vs = v.as_slice();
    Ok(ComplexMatrix::from_fn(mt, mt, |i, j| {
        let delta = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        delta - vs[i].conj() * inv * vs[j]
    }))
}

/// Zero-forcing precoder: the downlink matched direction projected off the SI direction.
pub fn zf_transmit(
    csi: &CsiView,
    theta_u: &[f64],
    theta_d: &[f64],
    w_r: &[C64],
) -> Result<Vec<C64>, BaselineError> {
    let mt = csi.channels.h_aa.cols();
    if mt <= 1 {
        return Err(BaselineError::SingleTransmitAntenna(mt));
    }
    let p = ortho_complement_projector(&csi.channels.h_aa, w_r)?;
    let d = downlink_channel(&csi.channels, theta_u, theta_d);
    let dh = ComplexMatrix::column(d.iter().map(|z| z.conj()).collect());
    let x = p.matmul(&dh)?;
    let n = x.frob_norm();
    let dn = vec_norm(&d);
    if !(n > 1e-12 * dn) || !(n > DEGENERATE_NORM) || !n.is_finite() {
        return Err(BaselineError::DegenerateChannel(
            "downlink channel lies in the self-interference direction",
        ));
    }
    Ok(x.as_slice().iter().map(|z| z / n).collect())
}

/// Replace the beamformers of `partial` with MRC receive and ZF transmit designed from `csi`.
pub fn perfcsi_agent_action(partial: &Action, csi: &CsiView) -> Result<Action, BaselineError> {
    let w_r = mrc_receive(csi, &partial.theta_u, &partial.theta_d)?;
    let w_t = zf_transmit(csi, &partial.theta_u, &partial.theta_d, &w_r)?;
    Ok(Action {
        w_t,
        w_r,
        ..partial.clone()
    })
}
