use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::agent::{ActorSpec, GroupLayout, NoiseKind, PhaseMode, TrainConfig, HIDDEN_WIDTH};
use crate::baselines::CsiNoise;
use crate::channel::{Geometry, Scenario, DEFAULT_OSCILLATORS};
use crate::env::{EnvConfig, SiMethod};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("{field}: {msg}")]
    Range { field: &'static str, msg: String },
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn range(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        field,
        msg: msg.into(),
    }
}

/// Preset sizes: the desk-scale `small` profile and the full `paper` settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Small,
    Paper,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Paper => "paper",
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "small" => Ok(Self::Small),
            "paper" => Ok(Self::Paper),
            _ => Err(format!("unknown profile `{s}` (expected small or paper)")),
        }
    }
}

/// Which policy is trained or evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    MsfDrlLssic,
    MsfDrlHsic,
    /// LSSIC with user positions appended to the state.
    MsfDrlPos,
    MsfQDrl { bits: u32 },
    GpMsfQDrl { bits: u32, groups: usize },
    PerfCsi,
    NoisCsi { nmse_db: f64 },
    OuPsbf,
    RandPsbf,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MsfDrlLssic => "msf-drl-lssic",
            Self::MsfDrlHsic => "msf-drl-hsic",
            Self::MsfDrlPos => "msf-drl-pos",
            Self::MsfQDrl { .. } => "msf-q-drl",
            Self::GpMsfQDrl { .. } => "gp-msf-q-drl",
            Self::PerfCsi => "perfcsi",
            Self::NoisCsi { .. } => "noiscsi",
            Self::OuPsbf => "oupsbf",
            Self::RandPsbf => "randpsbf",
        }
    }

    pub const NAMES: [&'static str; 9] = [
        "msf-drl-lssic",
        "msf-drl-hsic",
        "msf-drl-pos",
        "msf-q-drl",
        "gp-msf-q-drl",
        "perfcsi",
        "noiscsi",
        "oupsbf",
        "randpsbf",
    ];

    /// Build from a name plus the shared `bits`, `groups` and `nmse_db` settings.
    pub fn from_parts(name: &str, bits: u32, groups: usize, nmse_db: f64) -> Option<Self> {
        Some(match name {
            "msf-drl-lssic" | "msf-drl" => Self::MsfDrlLssic,
            "msf-drl-hsic" => Self::MsfDrlHsic,
            "msf-drl-pos" => Self::MsfDrlPos,
            "msf-q-drl" => Self::MsfQDrl { bits },
            "gp-msf-q-drl" => Self::GpMsfQDrl { bits, groups },
            "perfcsi" => Self::PerfCsi,
            "noiscsi" => Self::NoisCsi { nmse_db },
            "oupsbf" => Self::OuPsbf,
            "randpsbf" => Self::RandPsbf,
            _ => return None,
        })
    }

    pub fn learns(&self) -> bool {
        !matches!(self, Self::RandPsbf)
    }

    pub fn phase_mode(&self) -> PhaseMode {
        match *self {
            Self::MsfQDrl { bits } => PhaseMode::Quantized { bits },
            Self::GpMsfQDrl { bits, groups } => PhaseMode::Grouped { bits, groups },
            _ => PhaseMode::Continuous,
        }
    }

    /// Beamformers come from CSI rather than from actor heads.
    pub fn uses_csi(&self) -> bool {
        matches!(self, Self::PerfCsi | Self::NoisCsi { .. })
    }

    pub fn si_method(&self) -> SiMethod {
        match self {
            Self::MsfDrlHsic => SiMethod::Hsic,
            // zero forcing already removes the loop channel
            Self::PerfCsi | Self::NoisCsi { .. } => SiMethod::None,
            _ => SiMethod::Lssic,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MsfQDrl { bits } => write!(f, "msf-q-drl(n={bits})"),
            Self::GpMsfQDrl { bits, groups } => write!(f, "gp-msf-q-drl(n={bits}, M={groups})"),
            Self::NoisCsi { nmse_db } => write!(f, "noiscsi({nmse_db} dB)"),
            v => f.write_str(v.name()),
        }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub scenario: Scenario,
    /// BS antennas per array (`M_t = M_r`).
    pub antennas: usize,
    /// RIS panel side; each panel is `side × side`.
    pub ris_side: usize,
    pub variant: Variant,
    pub train: TrainConfig,
    pub hidden_width: usize,
    pub sigma0: f64,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub ou_dt: f64,
    pub csi_h_aa_var: f64,
    pub drop_cross_links: bool,
    pub delta: f64,
    pub mobile: bool,
    pub roam_side: f64,
    pub speed: f64,
    pub hsic_error_var: f64,
    pub oscillators: usize,
    pub episodes: usize,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub eval_episodes: usize,
    pub eval_steps: usize,
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        let (antennas, ris_side, episodes, steps, runs) = match profile {
            Profile::Paper => (10, 6, 100, 1000, 8),
            Profile::Small => (4, 4, 30, 300, 4),
        };
        Self {
            profile,
            scenario: Scenario::Urban,
            antennas,
            ris_side,
            variant: Variant::MsfDrlLssic,
            train: TrainConfig::default(),
            hidden_width: HIDDEN_WIDTH,
            sigma0: 0.3,
            ou_theta: 0.15,
            ou_sigma: 0.3,
            ou_dt: 1.0,
            csi_h_aa_var: 1e-12,
            drop_cross_links: false,
            delta: 0.5,
            mobile: false,
            roam_side: 10.0,
            speed: 1.0,
            hsic_error_var: 1e-12,
            oscillators: DEFAULT_OSCILLATORS,
            episodes,
            steps,
            runs,
            seed: 0,
            workers: 1,
            out: PathBuf::from("out"),
            eval_episodes: 10,
            eval_steps: 1000,
        }
    }

    /// Default group count for the profile's panel.
    pub fn default_groups(profile: Profile) -> usize {
        match profile {
            Profile::Paper => 9,
            Profile::Small => 4,
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::reference(self.antennas, self.ris_side)
    }

    pub fn env_config(&self) -> EnvConfig {
        let mut c = EnvConfig::new(self.geometry(), self.scenario);
        c.si_method = self.variant.si_method();
        c.delta = self.delta;
        c.mobile = self.mobile;
        c.roam_side = self.roam_side;
        c.speed = self.speed;
        c.hsic_error_var = self.hsic_error_var;
        c.include_positions = matches!(self.variant, Variant::MsfDrlPos);
        c.oscillators = self.oscillators;
        c
    }

    pub fn actor_spec(&self) -> ActorSpec {
        let env = self.env_config();
        let mut s = ActorSpec::for_geometry(
            &env.geometry,
            env.state_dim(),
            self.variant.phase_mode(),
            !self.variant.uses_csi(),
        );
        s.width = self.hidden_width;
        s
    }

    pub fn noise(&self) -> NoiseKind {
        match self.variant {
            Variant::OuPsbf => NoiseKind::OrnsteinUhlenbeck {
                theta: self.ou_theta,
                sigma: self.ou_sigma,
                dt: self.ou_dt,
            },
            _ => NoiseKind::Gaussian {
                sigma0: self.sigma0,
                episodes: self.episodes,
            },
        }
    }

    pub fn csi_noise(&self) -> Option<CsiNoise> {
        match self.variant {
            Variant::PerfCsi => Some(CsiNoise {
                drop_cross_links: self.drop_cross_links,
                ..CsiNoise::perfect()
            }),
            Variant::NoisCsi { nmse_db } => Some(CsiNoise {
                nmse_db: Some(nmse_db),
                h_aa_var: self.csi_h_aa_var,
                drop_cross_links: self.drop_cross_links,
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |field, v: usize| if v == 0 { Err(range(field, "must be at least 1")) } else { Ok(()) };
        pos("experiment.episodes", self.episodes)?;
        pos("experiment.steps", self.steps)?;
        pos("experiment.runs", self.runs)?;
        pos("experiment.workers", self.workers)?;
        pos("geometry.antennas", self.antennas)?;
        pos("geometry.ris_side", self.ris_side)?;
        pos("agent.width", self.hidden_width)?;
        pos("env.oscillators", self.oscillators)?;
        pos("eval.episodes", self.eval_episodes)?;
        pos("eval.steps", self.eval_steps)?;
        let t = &self.train;
        if !(0.0..1.0).contains(&t.gamma) {
            return Err(range("train.gamma", format!("{} outside [0, 1)", t.gamma)));
        }
        if !(t.lambda > 0.0 && t.lambda <= 1.0) {
            return Err(range("train.lambda", format!("{} outside (0, 1]", t.lambda)));
        }
        pos("train.batch_size", t.batch_size)?;
        pos("train.target_interval", t.target_interval)?;
        if t.buffer_capacity < t.batch_size {
            return Err(range("train.buffer", "must hold at least one batch"));
        }
        if !(t.lr_actor > 0.0 && t.lr_actor.is_finite()) {
            return Err(range("train.lr_actor", "must be positive"));
        }
        if !(t.lr_critic > 0.0 && t.lr_critic.is_finite()) {
            return Err(range("train.lr_critic", "must be positive"));
        }
        if !(self.sigma0 >= 0.0 && self.sigma0.is_finite()) {
            return Err(range("explore.sigma0", "must be non-negative"));
        }
        if !(self.ou_theta >= 0.0 && self.ou_sigma >= 0.0 && self.ou_dt > 0.0) {
            return Err(range("explore.ou_theta", "OU parameters must be non-negative with dt > 0"));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(range("env.delta", format!("{} outside [0, 1]", self.delta)));
        }
        if !(self.csi_h_aa_var >= 0.0) || !(self.hsic_error_var >= 0.0) {
            return Err(range("csi.h_aa_var", "variances must be non-negative"));
        }
        if !(self.roam_side > 0.0) || !(self.speed >= 0.0) {
            return Err(range("env.roam_side", "roaming square and speed must be positive"));
        }
        match self.variant {
            Variant::MsfQDrl { bits } | Variant::GpMsfQDrl { bits, .. } if !(1..=8).contains(&bits) => {
                return Err(range("agent.bits", format!("{bits} outside 1..=8")));
            }
            Variant::GpMsfQDrl { groups, .. } => {
                GroupLayout::new(self.ris_side, self.ris_side, groups)
                    .map_err(|e| range("agent.groups", e.to_string()))?;
            }
            Variant::PerfCsi | Variant::NoisCsi { .. } if self.antennas < 2 => {
                return Err(range("geometry.antennas", "zero forcing needs at least 2 antennas"));
            }
            Variant::NoisCsi { nmse_db } if !nmse_db.is_finite() => {
                return Err(range("agent.nmse_db", "must be finite"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Every accepted key, for error messages and documentation.
pub const KEYS: &[&str] = &[
    "experiment.profile",
    "experiment.episodes",
    "experiment.steps",
    "experiment.runs",
    "experiment.seed",
    "experiment.workers",
    "experiment.out",
    "geometry.antennas",
    "geometry.ris_side",
    "env.scenario",
    "env.delta",
    "env.mobile",
    "env.roam_side",
    "env.speed",
    "env.hsic_error_var",
    "env.oscillators",
    "agent.variant",
    "agent.bits",
    "agent.groups",
    "agent.nmse_db",
    "agent.width",
    "csi.h_aa_var",
    "csi.drop_cross_links",
    "train.gamma",
    "train.batch_size",
    "train.buffer",
    "train.lambda",
    "train.target_interval",
    "train.lr_actor",
    "train.lr_critic",
    "explore.sigma0",
    "explore.ou_theta",
    "explore.ou_sigma",
    "explore.ou_dt",
    "eval.episodes",
    "eval.steps",
];

/// One `section.key = value` line.
#[derive(Debug, Clone, PartialEq)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn tokenize(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            msg: format!("expected `section.key = value`, got `{body}`"),
        })?;
        let (key, value) = (k.trim().to_string(), v.trim().to_string());
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { line, key });
        }
        if value.is_empty() {
            return Err(ConfigError::Parse {
                line,
                msg: format!("missing value for `{key}`"),
            });
        }
        if out.iter().any(|e: &Entry| e.key == key) {
            return Err(ConfigError::Parse {
                line,
                msg: format!("duplicate key `{key}`"),
            });
        }
        out.push(Entry { line, key, value });
    }
    Ok(out)
}

fn parse_value<T: FromStr>(e: &Entry) -> Result<T, ConfigError> {
    e.value.parse().map_err(|_| ConfigError::Parse {
        line: e.line,
        msg: format!("invalid value `{}` for `{}`", e.value, e.key),
    })
}

fn parse_bool(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Parse {
            line: e.line,
            msg: format!("invalid boolean `{}` for `{}`", e.value, e.key),
        }),
    }
}

/// Parse config text. `profile_override` (from the command line) wins over `experiment.profile`;
/// keys in the text override the chosen profile's values.
pub fn parse_config(text: &str, profile_override: Option<Profile>) -> Result<ExperimentConfig, ConfigError> {
    let entries = tokenize(text)?;
    let file_profile = entries
        .iter()
        .find(|e| e.key == "experiment.profile")
        .map(|e| {
            e.value.parse::<Profile>().map_err(|msg| ConfigError::Parse { line: e.line, msg })
        })
        .transpose()?;
    let profile = profile_override.or(file_profile).unwrap_or(Profile::Paper);
    let mut c = ExperimentConfig::profile(profile);
    let mut variant_name = "msf-drl-lssic".to_string();
    let mut variant_line = 0;
    let mut bits = 2u32;
    let mut groups = ExperimentConfig::default_groups(profile);
    let mut nmse_db = 0.0;

    for e in &entries {
        match e.key.as_str() {
            "experiment.profile" => {}
            "experiment.episodes" => c.episodes = parse_value(e)?,
            "experiment.steps" => c.steps = parse_value(e)?,
            "experiment.runs" => c.runs = parse_value(e)?,
            "experiment.seed" => c.seed = parse_value(e)?,
            "experiment.workers" => c.workers = parse_value(e)?,
            "experiment.out" => c.out = PathBuf::from(&e.value),
            "geometry.antennas" => c.antennas = parse_value(e)?,
            "geometry.ris_side" => c.ris_side = parse_value(e)?,
            "env.scenario" => {
                c.scenario = Scenario::parse(&e.value).ok_or_else(|| ConfigError::Parse {
                    line: e.line,
                    msg: format!("unknown scenario `{}` (expected urban or shadowed-urban)", e.value),
                })?
            }
            "env.delta" => c.delta = parse_value(e)?,
            "env.mobile" => c.mobile = parse_bool(e)?,
            "env.roam_side" => c.roam_side = parse_value(e)?,
            "env.speed" => c.speed = parse_value(e)?,
            "env.hsic_error_var" => c.hsic_error_var = parse_value(e)?,
            "env.oscillators" => c.oscillators = parse_value(e)?,
            "agent.variant" => {
                variant_name = e.value.clone();
                variant_line = e.line;
            }
            "agent.bits" => bits = parse_value(e)?,
            "agent.groups" => groups = parse_value(e)?,
            "agent.nmse_db" => nmse_db = parse_value(e)?,
            "agent.width" => c.hidden_width = parse_value(e)?,
            "csi.h_aa_var" => c.csi_h_aa_var = parse_value(e)?,
            "csi.drop_cross_links" => c.drop_cross_links = parse_bool(e)?,
            "train.gamma" => c.train.gamma = parse_value(e)?,
            "train.batch_size" => c.train.batch_size = parse_value(e)?,
            "train.buffer" => c.train.buffer_capacity = parse_value(e)?,
            "train.lambda" => c.train.lambda = parse_value(e)?,
            "train.target_interval" => c.train.target_interval = parse_value(e)?,
            "train.lr_actor" => c.train.lr_actor = parse_value(e)?,
            "train.lr_critic" => c.train.lr_critic = parse_value(e)?,
            "explore.sigma0" => c.sigma0 = parse_value(e)?,
            "explore.ou_theta" => c.ou_theta = parse_value(e)?,
            "explore.ou_sigma" => c.ou_sigma = parse_value(e)?,
            "explore.ou_dt" => c.ou_dt = parse_value(e)?,
            "eval.episodes" => c.eval_episodes = parse_value(e)?,
            "eval.steps" => c.eval_steps = parse_value(e)?,
            other => unreachable!("key {other} listed in KEYS but not handled"),
        }
    }
    c.variant = Variant::from_parts(&variant_name, bits, groups, nmse_db).ok_or_else(|| ConfigError::Parse {
        line: variant_line,
        msg: format!("unknown variant `{variant_name}` (expected one of {})", Variant::NAMES.join(", ")),
    })?;
    c.validate()?;
    Ok(c)
}

pub fn load_config(path: impl AsRef<Path>, profile_override: Option<Profile>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, profile_override)
}
