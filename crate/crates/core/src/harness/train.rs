use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ExperimentConfig, HarnessError};
use crate::agent::{Ddpg, Experience, Exploration, ReplayBuffer};
use crate::baselines::{corrupt_csi, perfcsi_agent_action, randpsbf_action};
use crate::cnum::C64;
use crate::env::{Action, Environment, State};
use crate::nnet::{Checkpoint, Tensor};

/// Independent random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Env = 0,
    Init = 1,
    Explore = 2,
    Replay = 3,
    Csi = 4,
    Policy = 5,
    EvalEnv = 6,
    EvalPolicy = 7,
}

/// Generator for `(master seed, run, purpose)`; streams never overlap.
pub fn stream_rng(seed: u64, run: usize, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64 * 16 + purpose as u64);
    rng
}

pub const METRICS_HEADER: &str =
    "run,episode,window_steps,mean_r_bs,mean_r_dl,mean_reward,sigma_expl,wall_ms";

/// Per-episode averages.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// `None` for run-averaged rows.
    pub run: Option<usize>,
    pub episode: usize,
    pub window_steps: usize,
    pub mean_r_bs: f64,
    pub mean_r_dl: f64,
    pub mean_reward: f64,
    pub sigma_expl: f64,
    pub wall_ms: f64,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let run = self.run.map_or_else(|| "mean".to_string(), |r| r.to_string());
        format!(
            "{run},{},{},{},{},{},{},{}",
            self.episode,
            self.window_steps,
            self.mean_r_bs,
            self.mean_r_dl,
            self.mean_reward,
            self.sigma_expl,
            self.wall_ms
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

/// Episode-wise arithmetic mean over runs.
pub fn average_rows(runs: &[Vec<MetricsRow>]) -> Vec<MetricsRow> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let n = runs.len() as f64;
    (0..first.len())
        .map(|i| {
            let mean = |f: fn(&MetricsRow) -> f64| runs.iter().map(|r| f(&r[i])).sum::<f64>() / n;
            MetricsRow {
                run: None,
                episode: first[i].episode,
                window_steps: first[i].window_steps,
                mean_r_bs: mean(|r| r.mean_r_bs),
                mean_r_dl: mean(|r| r.mean_r_dl),
                mean_reward: mean(|r| r.mean_reward),
                sigma_expl: mean(|r| r.sigma_expl),
                wall_ms: mean(|r| r.wall_ms),
            }
        })
        .collect()
}

/// Outcome of one seeded run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    pub rows: Vec<MetricsRow>,
    pub checkpoint: Checkpoint,
    /// Learning steps taken (zero for non-learning variants).
    pub learn_steps: u64,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub runs: Vec<RunResult>,
    pub mean: Vec<MetricsRow>,
}

/// The acting side of an experiment: a learner or the random baseline.
pub(crate) struct Policy {
    pub agent: Option<Ddpg>,
    pub csi: Option<crate::baselines::CsiNoise>,
}

impl Policy {
    pub fn new(cfg: &ExperimentConfig, init_rng: &mut ChaCha8Rng) -> Result<Self, HarnessError> {
        let agent = if cfg.variant.learns() {
            Some(Ddpg::new(cfg.actor_spec(), cfg.scenario.power_limits(), cfg.train, init_rng)?)
        } else {
            None
        };
        Ok(Self {
            agent,
            csi: cfg.csi_noise(),
        })
    }

    /// Next action for `state` on `env`'s current channels.
    pub fn act(
        &self,
        env: &Environment,
        state: &State,
        explore: Option<&mut Exploration>,
        policy_rng: &mut ChaCha8Rng,
        explore_rng: &mut ChaCha8Rng,
        csi_rng: &mut ChaCha8Rng,
    ) -> Result<Action, HarnessError> {
        let Some(agent) = &self.agent else {
            return Ok(randpsbf_action(env.geometry(), env.limits(), policy_rng));
        };
        let placeholder = self.csi.map(|_| {
            let g = env.geometry();
            let e1 = |m: usize| {
                let mut v = vec![C64::new(0.0, 0.0); m];
                v[0] = C64::new(1.0, 0.0);
                v
            };
            (e1(g.m_t), e1(g.m_r))
        });
        let action = agent.act(&state.features, explore.map(|x| (x, explore_rng)), placeholder)?;
        match self.csi {
            Some(noise) => {
                let ch = env.channels().ok_or(crate::env::EnvError::NotReset)?;
                let view = corrupt_csi(ch, noise, csi_rng);
                Ok(perfcsi_agent_action(&action, &view)?)
            }
            None => Ok(action),
        }
    }
}

/// Layout and hyperparameters stored next to the weights so a checkpoint can be checked against a config.
pub fn config_tensors(cfg: &ExperimentConfig) -> Vec<Tensor> {
    let spec = cfg.actor_spec();
    let (kind, bits, groups) = match spec.phase {
        crate::agent::PhaseMode::Continuous => (0.0, 0.0, 0.0),
        crate::agent::PhaseMode::Quantized { bits } => (1.0, bits as f64, 0.0),
        crate::agent::PhaseMode::Grouped { bits, groups } => (2.0, bits as f64, groups as f64),
    };
    let layout = vec![
        spec.state_dim as f64,
        spec.panel1.0 as f64,
        spec.panel1.1 as f64,
        spec.panel2.0 as f64,
        spec.panel2.1 as f64,
        spec.m_t as f64,
        spec.m_r as f64,
        spec.width as f64,
        spec.depth as f64,
        kind,
        bits,
        groups,
        f64::from(u8::from(spec.beam_heads)),
        f64::from(u8::from(cfg.variant.learns())),
    ];
    let t = cfg.train;
    let train = vec![
        t.gamma,
        t.batch_size as f64,
        t.buffer_capacity as f64,
        t.lambda,
        t.target_interval as f64,
        t.lr_actor,
        t.lr_critic,
    ];
    vec![
        Tensor {
            name: "config.layout".into(),
            dims: vec![layout.len()],
            data: layout,
        },
        Tensor {
            name: "config.train".into(),
            dims: vec![train.len()],
            data: train,
        },
    ]
}

/// Algorithm 1 for one run.
pub fn train_run(cfg: &ExperimentConfig, run: usize) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let seed = cfg.seed;
    let mut env = Environment::new(cfg.env_config(), stream_rng(seed, run, Stream::Env))?;
    let mut policy = Policy::new(cfg, &mut stream_rng(seed, run, Stream::Init))?;
    let mut explore_rng = stream_rng(seed, run, Stream::Explore);
    let mut replay_rng = stream_rng(seed, run, Stream::Replay);
    let mut csi_rng = stream_rng(seed, run, Stream::Csi);
    let mut policy_rng = stream_rng(seed, run, Stream::Policy);
    let mut buffer = ReplayBuffer::new(cfg.train.buffer_capacity)?;
    let mut explore = Exploration::new(cfg.noise());
    let mut rows = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let started = Instant::now();
        explore.start_episode(episode);
        let mut state = env.reset()?;
        let (mut sum_bs, mut sum_dl, mut sum_r) = (0.0, 0.0, 0.0);
        for _ in 0..cfg.steps {
            let action = policy.act(
                &env,
                &state,
                Some(&mut explore),
                &mut policy_rng,
                &mut explore_rng,
                &mut csi_rng,
            )?;
            let out = env.step(&action)?;
            sum_bs += out.r_bs;
            sum_dl += out.r_dl;
            sum_r += out.reward;
            if let Some(agent) = policy.agent.as_mut() {
                buffer.push(Experience {
                    state: std::mem::take(&mut state.features),
                    action: action.flatten(),
                    reward: out.reward,
                    next_state: out.next_state.features.clone(),
                });
                agent.learn(&buffer, &mut replay_rng)?;
            }
            state = out.next_state;
        }
        if let Some(agent) = &policy.agent {
            if !agent.is_finite() {
                return Err(HarnessError::NonFinite(format!("run {run}, episode {episode}: network weights")));
            }
        }
        let t = cfg.steps as f64;
        rows.push(MetricsRow {
            run: Some(run),
            episode,
            window_steps: cfg.steps,
            mean_r_bs: sum_bs / t,
            mean_r_dl: sum_dl / t,
            mean_reward: sum_r / t,
            sigma_expl: if policy.agent.is_some() { explore.sigma() } else { 0.0 },
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    let mut checkpoint = Checkpoint::new();
    checkpoint.extend(config_tensors(cfg));
    let learn_steps = policy.agent.as_ref().map_or(0, |a| a.learn_steps());
    if let Some(agent) = &policy.agent {
        checkpoint.extend(agent.export());
    }
    Ok(RunResult {
        run,
        rows,
        checkpoint,
        learn_steps,
    })
}

/// All runs, in run-index order. Runs are spread over `cfg.workers` threads.
pub fn train_runs(cfg: &ExperimentConfig) -> Result<TrainingReport, HarnessError> {
    cfg.validate()?;
    let workers = cfg.workers.min(cfg.runs).max(1);
    let mut results: Vec<Option<Result<RunResult, HarnessError>>> = (0..cfg.runs).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..cfg.runs)
                        .step_by(workers)
                        .map(|run| (run, train_run(cfg, run)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (run, r) in h.join().expect("training worker panicked") {
                results[run] = Some(r);
            }
        }
    });
    let runs = results
        .into_iter()
        .map(|r| r.expect("every run index assigned"))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = average_rows(&runs.iter().map(|r| r.rows.clone()).collect::<Vec<_>>());
    Ok(TrainingReport { runs, mean })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write `run_<r>.csv`, `run_<r>.ckpt` and `mean.csv` under `dir`.
pub fn write_report(report: &TrainingReport, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for r in &report.runs {
        write_file(&dir.join(format!("run_{}.csv", r.run)), metrics_csv(&r.rows).as_bytes())?;
        write_file(&dir.join(format!("run_{}.ckpt", r.run)), &r.checkpoint.to_bytes())?;
    }
    write_file(&dir.join("mean.csv"), metrics_csv(&report.mean).as_bytes())
}

/// Train every run and write the results to `cfg.out`.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainingReport, HarnessError> {
    let report = train_runs(cfg)?;
    write_report(&report, &cfg.out)?;
    Ok(report)
}
