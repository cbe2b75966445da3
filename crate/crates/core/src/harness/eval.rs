use std::fmt::Write as _;
use std::path::Path;

use super::train::{config_tensors, stream_rng, Policy, Stream};
use super::{ExperimentConfig, HarnessError};
use crate::env::Environment;
use crate::nnet::Checkpoint;

/// Per-step rates of a greedy rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSamples {
    pub r_bs: Vec<f64>,
    pub r_dl: Vec<f64>,
}

/// Reject checkpoints whose stored layout or hyperparameters differ from `cfg`.
pub fn check_compatible(cfg: &ExperimentConfig, ckpt: &Checkpoint) -> Result<(), HarnessError> {
    for t in config_tensors(cfg) {
        match ckpt.get(&t.name) {
            Some(stored) if stored.data == t.data => {}
            Some(_) => {
                return Err(HarnessError::CheckpointMismatch(format!(
                    "{} differs from the configuration",
                    t.name
                )))
            }
            None => return Err(HarnessError::CheckpointMismatch(format!("missing {}", t.name))),
        }
    }
    Ok(())
}

/// Roll out the checkpointed policy without exploration noise.
pub fn run_cdf_eval(
    cfg: &ExperimentConfig,
    ckpt: &Checkpoint,
    episodes: usize,
    steps: usize,
) -> Result<RateSamples, HarnessError> {
    cfg.validate()?;
    check_compatible(cfg, ckpt)?;
    let mut policy = Policy::new(cfg, &mut stream_rng(cfg.seed, 0, Stream::Init))?;
    if let Some(agent) = policy.agent.as_mut() {
        agent.import(ckpt)?;
    }
    let mut env = Environment::new(cfg.env_config(), stream_rng(cfg.seed, 0, Stream::EvalEnv))?;
    let mut policy_rng = stream_rng(cfg.seed, 0, Stream::EvalPolicy);
    let mut unused = stream_rng(cfg.seed, 0, Stream::Explore);
    let mut csi_rng = stream_rng(cfg.seed, 0, Stream::Csi);
    let mut out = RateSamples {
        r_bs: Vec::with_capacity(episodes * steps),
        r_dl: Vec::with_capacity(episodes * steps),
    };
    for _ in 0..episodes {
        let mut state = env.reset()?;
        for _ in 0..steps {
            let action = policy.act(&env, &state, None, &mut policy_rng, &mut unused, &mut csi_rng)?;
            let o = env.step(&action)?;
            out.r_bs.push(o.r_bs);
            out.r_dl.push(o.r_dl);
            state = o.next_state;
        }
    }
    Ok(out)
}

/// Empirical CDF table: `cdf,r_bs,r_dl` with each rate column sorted ascending.
pub fn cdf_csv(samples: &RateSamples) -> String {
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (bs, dl) = (sorted(&samples.r_bs), sorted(&samples.r_dl));
    let n = bs.len();
    let mut s = String::from("cdf,r_bs,r_dl\n");
    for i in 0..n {
        let _ = writeln!(s, "{},{},{}", (i + 1) as f64 / n as f64, bs[i], dl[i]);
    }
    s
}

pub fn write_cdf(samples: &RateSamples, path: &Path) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, cdf_csv(samples)).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}
