use std::str::FromStr;

/// How RIS phases are conveyed from the BS to the panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalingScheme {
    /// One 64-bit float per element.
    Continuous,
    Quantized { bits: u32 },
    /// `groups` phases per panel.
    Grouped { bits: u32, groups: usize },
}

/// Bits sent from the BS to both panels per time step.
pub fn signaling_bits(scheme: SignalingScheme, n1: usize, n2: usize) -> u64 {
    match scheme {
        SignalingScheme::Continuous => 64 * (n1 + n2) as u64,
        SignalingScheme::Quantized { bits } => bits as u64 * (n1 + n2) as u64,
        SignalingScheme::Grouped { bits, groups } => bits as u64 * 2 * groups as u64,
    }
}

/// Scheme family named on the command line; bits and groups are filled in separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Continuous,
    Quantized,
    Grouped,
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "continuous" | "msf-drl" | "msf-drl-lssic" | "msf-drl-hsic" | "msf-drl-pos" | "perfcsi"
            | "noiscsi" | "oupsbf" | "randpsbf" => Ok(Self::Continuous),
            "quantized" | "msf-q-drl" => Ok(Self::Quantized),
            "grouped" | "gp-msf-q-drl" => Ok(Self::Grouped),
            _ => Err(format!("unknown signaling variant `{s}`")),
        }
    }
}

impl SchemeKind {
    pub fn with(self, bits: Option<u32>, groups: Option<usize>) -> Result<SignalingScheme, String> {
        let need_bits = || match bits {
            Some(b) if b >= 1 => Ok(b),
            Some(b) => Err(format!("bits must be at least 1, got {b}")),
            None => Err("this variant needs --bits".to_string()),
        };
        Ok(match self {
            Self::Continuous => SignalingScheme::Continuous,
            Self::Quantized => SignalingScheme::Quantized { bits: need_bits()? },
            Self::Grouped => {
                let groups = match groups {
                    Some(g) if g >= 1 => g,
                    _ => return Err("grouped signaling needs --groups of at least 1".into()),
                };
                SignalingScheme::Grouped {
                    bits: need_bits()?,
                    groups,
                }
            }
        })
    }
}
