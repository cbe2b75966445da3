//! Link-level channel model for the two-RIS full-duplex layout.
//!
//! Every node sits in the horizontal plane. The BS carries two uniform linear
//! arrays along the y-axis (transmit and receive, same size); both RIS panels
//! are uniform planar arrays parallel to the xz plane. LOS parts come from
//! steering vectors at the geometric angles, NLOS parts from a Jakes
//! sum-of-sinusoids generator, and every link is scaled by its path loss.

mod fading;
mod mobility;
mod steering;

pub use fading::{jakes_advance, FadingState, JakesMatrix, LinkId, DEFAULT_OSCILLATORS};
pub use mobility::{mobility_step, MobilityState, UserMotion, HEADING_JITTER};
pub use steering::{steering_ula, steering_upa};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::cnum::{ComplexMatrix, LinalgError, C64};

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Reference distance of the path-loss model, metres.
pub const D0: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("invalid parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Azimuth of `other` seen from `self`, measured from +x.
    pub fn azimuth_to(self, other: Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Node layout and array sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bs_pos: Point,
    pub ris1_pos: Point,
    pub ris2_pos: Point,
    pub ulue_pos: Point,
    pub dlue_pos: Point,
    pub m_t: usize,
    pub m_r: usize,
    /// RIS1 columns along x.
    pub n1h: usize,
    /// RIS1 rows along z.
    pub n1v: usize,
    pub n2h: usize,
    pub n2v: usize,
    /// Element spacing in carrier wavelengths, shared by the BS arrays and both panels.
    pub d_over_lambda: f64,
}

impl Geometry {
    /// Reference layout with `m` antennas per BS array and square `side × side` panels.
    pub fn reference(m: usize, side: usize) -> Self {
        Self {
            bs_pos: Point::new(0.0, 0.0),
            ris1_pos: Point::new(50.0, 22.0),
            ris2_pos: Point::new(50.0, -22.0),
            ulue_pos: Point::new(50.0, 20.0),
            dlue_pos: Point::new(50.0, -20.0),
            m_t: m,
            m_r: m,
            n1h: side,
            n1v: side,
            n2h: side,
            n2v: side,
            d_over_lambda: 0.5,
        }
    }

    pub fn n1(&self) -> usize {
        self.n1h * self.n1v
    }

    pub fn n2(&self) -> usize {
        self.n2h * self.n2v
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let counts = [
            ("m_t", self.m_t),
            ("m_r", self.m_r),
            ("n1h", self.n1h),
            ("n1v", self.n1v),
            ("n2h", self.n2h),
            ("n2v", self.n2v),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(ChannelError::Geometry(format!("{name} must be at least 1")));
            }
        }
        // The SINR expressions reuse the BS→RIS2 and RIS1→BS links transposed,
        // which only conforms when both arrays have the same size.
        if self.m_t != self.m_r {
            return Err(ChannelError::Geometry(format!(
                "transmit and receive arrays must match (m_t = {}, m_r = {})",
                self.m_t, self.m_r
            )));
        }
        let pts = [
            self.bs_pos,
            self.ris1_pos,
            self.ris2_pos,
            self.ulue_pos,
            self.dlue_pos,
        ];
        if !pts.iter().all(|p| p.is_finite()) {
            return Err(ChannelError::Geometry("non-finite position".into()));
        }
        if !(self.d_over_lambda > 0.0 && self.d_over_lambda.is_finite()) {
            return Err(ChannelError::InvalidParam {
                name: "d_over_lambda",
                value: self.d_over_lambda,
            });
        }
        Ok(())
    }
}

/// Radio and propagation constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm_per_hz: f64,
    pub beta_ia_db: f64,
    pub beta_ui_db: f64,
    pub alpha_ai: f64,
    pub alpha_iu: f64,
    pub alpha_au: f64,
    pub alpha_r: f64,
    pub alpha_u: f64,
    /// Variance of the residual loop channel entries.
    pub sigma_aa2: f64,
    pub doppler_hz: f64,
    pub step_interval_s: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        let mut p = Self {
            carrier_hz: 3.5e9,
            bandwidth_hz: 100e6,
            noise_dbm_per_hz: -174.0,
            beta_ia_db: 9.0,
            beta_ui_db: 6.0,
            alpha_ai: 2.2,
            alpha_iu: 2.2,
            alpha_au: 0.0,
            alpha_r: 0.0,
            alpha_u: 0.0,
            sigma_aa2: 0.1,
            doppler_hz: 100.0,
            step_interval_s: 1e-3,
        };
        Scenario::Urban.apply(&mut p);
        p
    }
}

impl ChannelParams {
    /// Thermal noise power over the bandwidth, in watts.
    pub fn noise_power_w(&self) -> f64 {
        let dbm = self.noise_dbm_per_hz + 10.0 * self.bandwidth_hz.log10();
        10f64.powf(dbm / 10.0) * 1e-3
    }

    pub fn beta_ia(&self) -> f64 {
        db_to_linear(self.beta_ia_db)
    }

    pub fn beta_ui(&self) -> f64 {
        db_to_linear(self.beta_ui_db)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("alpha_ai", self.alpha_ai),
            ("alpha_iu", self.alpha_iu),
            ("alpha_au", self.alpha_au),
            ("alpha_r", self.alpha_r),
            ("alpha_u", self.alpha_u),
            ("step_interval_s", self.step_interval_s),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ChannelError::InvalidParam { name, value });
            }
        }
        let nonneg = [
            ("sigma_aa2", self.sigma_aa2),
            ("doppler_hz", self.doppler_hz),
        ];
        for (name, value) in nonneg {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ChannelError::InvalidParam { name, value });
            }
        }
        for (name, value) in [
            ("beta_ia_db", self.beta_ia_db),
            ("beta_ui_db", self.beta_ui_db),
            ("noise_dbm_per_hz", self.noise_dbm_per_hz),
        ] {
            if value.is_nan() || value == f64::INFINITY {
                return Err(ChannelError::InvalidParam { name, value });
            }
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Maximum transmit powers in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLimits {
    pub p_a_max: f64,
    pub p_u_max: f64,
}

/// Propagation presets for the direct, inter-RIS and inter-user links.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Urban,
    ShadowedUrban,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Urban => "urban",
            Scenario::ShadowedUrban => "shadowed-urban",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "urban" => Some(Scenario::Urban),
            "shadowed-urban" => Some(Scenario::ShadowedUrban),
            _ => None,
        }
    }

    pub fn apply(self, p: &mut ChannelParams) {
        match self {
            Scenario::Urban => {
                p.alpha_au = 3.35;
                p.alpha_r = 3.35;
                p.alpha_u = 4.5;
            }
            Scenario::ShadowedUrban => {
                p.alpha_au = 4.5;
                p.alpha_r = 4.5;
                p.alpha_u = 4.5;
            }
        }
    }

    pub fn power_limits(self) -> PowerLimits {
        match self {
            Scenario::Urban => PowerLimits {
                p_a_max: 1.0,
                p_u_max: 0.05,
            },
            Scenario::ShadowedUrban => PowerLimits {
                p_a_max: 3.16,
                p_u_max: 0.2,
            },
        }
    }
}

/// All links of one time step, amplitude-scaled by path loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// ULue → RIS1, `N1×1`.
    pub f_iu: ComplexMatrix,
    /// RIS1 → BS, `M_r×N1`.
    pub f_ai: ComplexMatrix,
    /// ULue → BS, `M_r×1`.
    pub h_au: ComplexMatrix,
    /// BS → RIS2, `N2×M_t`.
    pub g_ia: ComplexMatrix,
    /// ULue → RIS2, `N2×1`.
    pub g_iu: ComplexMatrix,
    /// RIS2 → DLue, `1×N2`.
    pub g_di: ComplexMatrix,
    /// BS → DLue, `1×M_t`.
    pub h_da: ComplexMatrix,
    /// RIS1 → DLue, `1×N1`.
    pub f_di: ComplexMatrix,
    /// ULue → DLue, `1×1`.
    pub g: ComplexMatrix,
    /// BS transmit → BS receive, `M_r×M_t`.
    pub h_aa: ComplexMatrix,
}

impl ChannelSet {
    /// Shapes in field order.
    pub fn expected_shapes(geom: &Geometry) -> [(usize, usize); 10] {
        let (mt, mr, n1, n2) = (geom.m_t, geom.m_r, geom.n1(), geom.n2());
        [
            (n1, 1),
            (mr, n1),
            (mr, 1),
            (n2, mt),
            (n2, 1),
            (1, n2),
            (1, mt),
            (1, n1),
            (1, 1),
            (mr, mt),
        ]
    }

    pub fn links(&self) -> [&ComplexMatrix; 10] {
        [
            &self.f_iu, &self.f_ai, &self.h_au, &self.g_ia, &self.g_iu, &self.g_di, &self.h_da,
            &self.f_di, &self.g, &self.h_aa,
        ]
    }

    pub fn links_mut(&mut self) -> [&mut ComplexMatrix; 10] {
        [
            &mut self.f_iu,
            &mut self.f_ai,
            &mut self.h_au,
            &mut self.g_ia,
            &mut self.g_iu,
            &mut self.g_di,
            &mut self.h_da,
            &mut self.f_di,
            &mut self.g,
            &mut self.h_aa,
        ]
    }

    pub fn shapes_match(&self, geom: &Geometry) -> bool {
        self.links()
            .iter()
            .zip(Self::expected_shapes(geom))
            .all(|(m, s)| m.shape() == s)
    }

    pub fn is_finite(&self) -> bool {
        self.links().iter().all(|m| m.is_finite())
    }
}

/// Large-scale attenuation in dB (non-positive beyond a few metres).
pub fn path_loss_db(carrier_hz: f64, d: f64, alpha: f64) -> Result<f64, ChannelError> {
    if !(d >= D0) {
        return Err(ChannelError::Geometry(format!(
            "link distance {d} m is below the {D0} m reference"
        )));
    }
    Ok(-20.0 * (4.0 * std::f64::consts::PI * carrier_hz / SPEED_OF_LIGHT).log10()
        - 10.0 * alpha * (d / D0).log10())
}

/// Distance between two nodes, clamped up to [`D0`]. Coincident nodes are an error.
pub fn link_distance(a: Point, b: Point) -> Result<f64, ChannelError> {
    let d = a.distance(b);
    if !(d > 0.0) {
        return Err(ChannelError::Geometry(format!(
            "coincident endpoints at ({}, {})",
            a.x, a.y
        )));
    }
    Ok(d.max(D0))
}

fn amplitude(carrier_hz: f64, a: Point, b: Point, alpha: f64) -> Result<f64, ChannelError> {
    let pl = path_loss_db(carrier_hz, link_distance(a, b)?, alpha)?;
    Ok(10f64.powf(pl / 20.0))
}

/// `sqrt(β/(1+β))·los + sqrt(1/(1+β))·nlos`.
pub fn rician_mix(
    los: &ComplexMatrix,
    nlos: &ComplexMatrix,
    beta_linear: f64,
) -> Result<ComplexMatrix, ChannelError> {
    if !(beta_linear >= 0.0) {
        return Err(ChannelError::InvalidParam {
            name: "beta",
            value: beta_linear,
        });
    }
    let (a, b) = if beta_linear.is_infinite() {
        (1.0, 0.0)
    } else {
        (
            (beta_linear / (1.0 + beta_linear)).sqrt(),
            (1.0 / (1.0 + beta_linear)).sqrt(),
        )
    };
    Ok(los.scale_real(a).add(&nlos.scale_real(b))?)
}

/// i.i.d. circularly-symmetric complex Gaussian entries with the given variance.
pub fn sample_rayleigh<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> ComplexMatrix {
    let s = (variance / 2.0).sqrt();
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    })
}

const ELEVATION: f64 = std::f64::consts::FRAC_PI_2;

fn bs_array(m: usize, from: Point, to: Point, dl: f64) -> ComplexMatrix {
    steering_ula(m, ELEVATION, from.azimuth_to(to), dl)
}

fn panel(nz: usize, nx: usize, from: Point, to: Point, dl: f64) -> ComplexMatrix {
    steering_upa(nz, nx, ELEVATION, from.azimuth_to(to), dl)
}

fn outer(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    // a·bᴴ for column vectors a, b
    let (ra, rb) = (a.as_slice(), b.as_slice());
    ComplexMatrix::from_fn(ra.len(), rb.len(), |i, j| ra[i] * rb[j].conj())
}

/// LOS components of the four Rician links at the current geometry
/// (`F_AI`, `f_IU`, `G_IA`, `g_DI`), unit amplitude.
pub fn los_components(geom: &Geometry) -> [ComplexMatrix; 4] {
    let dl = geom.d_over_lambda;
    let one = ComplexMatrix::scalar(C64::new(1.0, 0.0));
    let f_ai = outer(
        &bs_array(geom.m_r, geom.bs_pos, geom.ris1_pos, dl),
        &panel(geom.n1v, geom.n1h, geom.ris1_pos, geom.bs_pos, dl),
    );
    let f_iu = outer(
        &panel(geom.n1v, geom.n1h, geom.ris1_pos, geom.ulue_pos, dl),
        &one,
    );
    let g_ia = outer(
        &panel(geom.n2v, geom.n2h, geom.ris2_pos, geom.bs_pos, dl),
        &bs_array(geom.m_t, geom.bs_pos, geom.ris2_pos, dl),
    );
    let g_di = outer(
        &one,
        &panel(geom.n2v, geom.n2h, geom.ris2_pos, geom.dlue_pos, dl),
    );
    [f_ai, f_iu, g_ia, g_di]
}

/// Assemble the channel set for the current geometry and fading snapshot.
pub fn realize_channels(
    geom: &Geometry,
    params: &ChannelParams,
    fading: &FadingState,
) -> Result<ChannelSet, ChannelError> {
    geom.validate()?;
    if !fading.matches(geom) {
        return Err(ChannelError::Geometry(
            "fading state was built for a different geometry".into(),
        ));
    }
    let fc = params.carrier_hz;
    let [f_ai_los, f_iu_los, g_ia_los, g_di_los] = los_components(geom);
    let (b_ia, b_ui) = (params.beta_ia(), params.beta_ui());
    let nl = |id: LinkId| fading.nlos(id);

    let rician = |los: &ComplexMatrix, id: LinkId, beta: f64, a: Point, b: Point, alpha: f64| {
        let amp = amplitude(fc, a, b, alpha)?;
        Ok::<_, ChannelError>(rician_mix(los, nl(id), beta)?.scale_real(amp))
    };
    let rayleigh = |id: LinkId, a: Point, b: Point, alpha: f64| {
        Ok::<_, ChannelError>(nl(id).scale_real(amplitude(fc, a, b, alpha)?))
    };

    let g = geom;
    Ok(ChannelSet {
        f_iu: rician(&f_iu_los, LinkId::FIu, b_ui, g.ulue_pos, g.ris1_pos, params.alpha_iu)?,
        f_ai: rician(&f_ai_los, LinkId::FAi, b_ia, g.ris1_pos, g.bs_pos, params.alpha_ai)?,
        h_au: rayleigh(LinkId::HAu, g.ulue_pos, g.bs_pos, params.alpha_au)?,
        g_ia: rician(&g_ia_los, LinkId::GIa, b_ia, g.bs_pos, g.ris2_pos, params.alpha_ai)?,
        g_iu: rayleigh(LinkId::GIu, g.ulue_pos, g.ris2_pos, params.alpha_r)?,
        g_di: rician(&g_di_los, LinkId::GDi, b_ui, g.ris2_pos, g.dlue_pos, params.alpha_iu)?,
        h_da: rayleigh(LinkId::HDa, g.bs_pos, g.dlue_pos, params.alpha_au)?,
        f_di: rayleigh(LinkId::FDi, g.ris1_pos, g.dlue_pos, params.alpha_r)?,
        g: rayleigh(LinkId::G, g.ulue_pos, g.dlue_pos, params.alpha_u)?,
        h_aa: nl(LinkId::HAa).scale_real(params.sigma_aa2.sqrt()),
    })
}
