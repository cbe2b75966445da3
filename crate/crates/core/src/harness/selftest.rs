use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::signaling::{signaling_bits, SignalingScheme};
use crate::agent::{ActorSpec, Ddpg, Experience, PhaseMode, TrainConfig};
use crate::baselines::{mrc_receive, zf_transmit, CsiView};
use crate::channel::{realize_channels, ChannelParams, FadingState, Geometry, PowerLimits, Scenario};
use crate::env::{
    bilinear, compute_sinrs, lssic_estimate, rate, Action, EnvConfig, Environment, SiEstimate, SiMethod,
};
use crate::nnet::{
    init_glorot, Activation, Layer, LayerNormParams, Parameters, Sequential, Tape,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    match f() {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

fn random_channels(m: usize, side: usize, seed: u64) -> (Geometry, crate::channel::ChannelSet) {
    let g = Geometry::reference(m, side);
    let p = ChannelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = FadingState::new(&g, &p, 8, &mut rng);
    let ch = realize_channels(&g, &p, &f).expect("reference geometry is valid");
    (g, ch)
}

fn ls_recovery() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lim = Scenario::Urban.power_limits();
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let (g, ch) = random_channels(4, 2, i);
        let a = Action::random_valid(&g, lim, &mut rng);
        let est = lssic_estimate(&ch, &a, 0.0, &mut rng).map_err(|e| e.to_string())?;
        worst = worst.max((est.h_hat - bilinear(&a.w_r, &ch.h_aa, &a.w_t)).norm());
    }
    if worst < 1e-12 {
        Ok(format!("max error {worst:.2e}"))
    } else {
        Err(format!("max error {worst:.2e} exceeds 1e-12"))
    }
}

fn zf_null_space() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let m = 2 + (i as usize % 9);
        let (g, ch) = random_channels(m, 2, 100 + i);
        let tu: Vec<f64> = (0..g.n1()).map(|_| rng.random_range(0.0..TAU)).collect();
        let td: Vec<f64> = (0..g.n2()).map(|_| rng.random_range(0.0..TAU)).collect();
        let csi = CsiView { channels: ch.clone() };
        let w_r = mrc_receive(&csi, &tu, &td).map_err(|e| e.to_string())?;
        let w_t = zf_transmit(&csi, &tu, &td, &w_r).map_err(|e| e.to_string())?;
        let norm = w_t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(format!("‖w_T‖ = {norm}"));
        }
        worst = worst.max(bilinear(&w_r, &ch.h_aa, &w_t).norm_sqr() / ch.h_aa.frob_norm_sqr());
    }
    if worst < 1e-18 {
        Ok(format!("max relative residual {worst:.2e}"))
    } else {
        Err(format!("relative residual {worst:.2e}"))
    }
}

fn close(a: f64, n: f64) -> bool {
    (a - n).abs() <= 1e-6 + 1e-4 * a.abs().max(n.abs())
}

fn layer_gradients() -> Result<String, String> {
    let h = 1e-5;
    let mut checked = 0;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Sequential::new(vec![
            Layer::Dense(init_glorot(4, 6, &mut rng)),
            Layer::LayerNorm(LayerNormParams::new(6)),
            Layer::Act(Activation::Relu),
            Layer::Dense(init_glorot(6, 5, &mut rng)),
            Layer::Act(Activation::Tanh),
            Layer::Dense(init_glorot(5, 3, &mut rng)),
            Layer::Act(Activation::Softmax),
            Layer::Dense(init_glorot(3, 1, &mut rng)),
        ]);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        net.forward(&x, &mut tape).map_err(|e| e.to_string())?;
        let mut grads = net.zeros_like();
        let dx = net.backward(&tape, &[1.0], Some(&mut grads)).map_err(|e| e.to_string())?;
        for i in 0..x.len() {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[i] += h;
            down[i] -= h;
            let f = |v: &[f64]| net.apply(v).map(|y| y[0]).unwrap_or(f64::NAN);
            let num = (f(&up) - f(&down)) / (2.0 * h);
            if !close(dx[i], num) {
                return Err(format!("seed {seed}: input {i} analytic {} numeric {num}", dx[i]));
            }
            checked += 1;
        }
        let analytic = grads.flatten();
        let mut probe = net.clone();
        let mut idx = 0;
        for ti in 0..probe.tensors_mut().len() {
            for k in 0..probe.tensors_mut()[ti].len() {
                let orig = probe.tensors_mut()[ti][k];
                probe.tensors_mut()[ti][k] = orig + h;
                let up = probe.apply(&x).map_err(|e| e.to_string())?[0];
                probe.tensors_mut()[ti][k] = orig - h;
                let down = probe.apply(&x).map_err(|e| e.to_string())?[0];
                probe.tensors_mut()[ti][k] = orig;
                let num = (up - down) / (2.0 * h);
                if !close(analytic[idx], num) {
                    return Err(format!("seed {seed}: parameter {idx} analytic {} numeric {num}", analytic[idx]));
                }
                idx += 1;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} partial derivatives"))
}

fn mini_agent(seed: u64) -> (Ddpg, Vec<Experience>) {
    let mut g = Geometry::reference(2, 2);
    (g.n1v, g.n1h, g.n2v, g.n2h) = (1, 2, 1, 2);
    let lim = PowerLimits {
        p_a_max: 2.0,
        p_u_max: 0.5,
    };
    let state_dim = 2 + Action::flat_dim(&g);
    let mut spec = ActorSpec::for_geometry(&g, state_dim, PhaseMode::Continuous, true);
    spec.width = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = Ddpg::new(spec, lim, TrainConfig::default(), &mut rng).expect("valid miniature agent");
    for t in agent.actor.tensors_mut().into_iter().chain(agent.critic.tensors_mut()) {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let batch = (0..3)
        .map(|_| {
            let mut s = || {
                let mut f = vec![rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)];
                f.extend(Action::random_valid(&g, lim, &mut rng).flatten());
                f
            };
            let (state, next_state) = (s(), s());
            Experience {
                state,
                action: Action::random_valid(&g, lim, &mut rng).flatten(),
                reward: rng.random_range(0.0..5.0),
                next_state,
            }
        })
        .collect();
    (agent, batch)
}

fn agent_gradients() -> Result<String, String> {
    let h = 1e-5;
    let mut checked = 0;
    for seed in 0..3 {
        let (mut agent, batch) = mini_agent(seed);
        let refs: Vec<&Experience> = batch.iter().collect();
        let y = agent.compute_targets(&refs).map_err(|e| e.to_string())?;
        let ga = agent.actor_gradient(&refs).map_err(|e| e.to_string())?.1.flatten();
        let gc = agent.critic_gradient(&refs, &y).map_err(|e| e.to_string())?.1.flatten();
        let mut idx = 0;
        for ti in 0..agent.actor.tensors_mut().len() {
            for k in 0..agent.actor.tensors_mut()[ti].len() {
                let orig = agent.actor.tensors_mut()[ti][k];
                agent.actor.tensors_mut()[ti][k] = orig + h;
                let up = agent.actor_gradient(&refs).map_err(|e| e.to_string())?.0;
                agent.actor.tensors_mut()[ti][k] = orig - h;
                let down = agent.actor_gradient(&refs).map_err(|e| e.to_string())?.0;
                agent.actor.tensors_mut()[ti][k] = orig;
                let num = (up - down) / (2.0 * h);
                if !close(ga[idx], num) {
                    return Err(format!("seed {seed}: actor parameter {idx}"));
                }
                idx += 1;
                checked += 1;
            }
        }
        idx = 0;
        for ti in 0..agent.critic.tensors_mut().len() {
            for k in 0..agent.critic.tensors_mut()[ti].len() {
                let orig = agent.critic.tensors_mut()[ti][k];
                agent.critic.tensors_mut()[ti][k] = orig + h;
                let up = agent.critic_gradient(&refs, &y).map_err(|e| e.to_string())?.0;
                agent.critic.tensors_mut()[ti][k] = orig - h;
                let down = agent.critic_gradient(&refs, &y).map_err(|e| e.to_string())?.0;
                agent.critic.tensors_mut()[ti][k] = orig;
                let num = (up - down) / (2.0 * h);
                if !close(gc[idx], num) {
                    return Err(format!("seed {seed}: critic parameter {idx}"));
                }
                idx += 1;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} partial derivatives"))
}

fn env_consistency() -> Result<String, String> {
    let (g, ch) = random_channels(2, 2, 7);
    let mut cfg = EnvConfig::new(g.clone(), Scenario::Urban);
    cfg.si_method = SiMethod::None;
    let (sa, sd, delta) = (cfg.sigma_a2, cfg.sigma_d2, cfg.delta);
    let mut env = Environment::new(cfg, ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
    env.freeze_channels(ch.clone()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let a = Action::random_valid(&g, env.limits(), &mut rng);
        let o = env.step(&a).map_err(|e| e.to_string())?;
        let (gb, gd) = compute_sinrs(&ch, &a, &SiEstimate::none(), sa, sd);
        let want = delta * rate(gb) + (1.0 - delta) * rate(gd);
        if (o.reward - want).abs() > 1e-10 {
            return Err(format!("reward {} vs {want}", o.reward));
        }
    }
    Ok("50 steps".into())
}

fn signaling() -> Result<String, String> {
    let got = [
        signaling_bits(SignalingScheme::Continuous, 36, 36),
        signaling_bits(SignalingScheme::Quantized { bits: 2 }, 36, 36),
        signaling_bits(SignalingScheme::Grouped { bits: 2, groups: 9 }, 36, 36),
    ];
    if got == [4608, 144, 36] {
        Ok("4608 / 144 / 36".into())
    } else {
        Err(format!("{got:?}"))
    }
}

fn action_fuzz() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = Geometry::reference(2, 2);
    let lim = Scenario::ShadowedUrban.power_limits();
    let modes = [
        PhaseMode::Continuous,
        PhaseMode::Quantized { bits: 2 },
        PhaseMode::Grouped { bits: 1, groups: 2 },
    ];
    for i in 0..300u64 {
        let mut spec = ActorSpec::for_geometry(&g, 2 + Action::flat_dim(&g), modes[i as usize % 3], true);
        spec.width = 8;
        let mut agent = Ddpg::new(spec, lim, TrainConfig::default(), &mut rng).map_err(|e| e.to_string())?;
        agent.actor.scale(rng.random_range(0.0..100.0));
        let scale = rng.random_range(0.0..1e6);
        let s: Vec<f64> = (0..2 + Action::flat_dim(&g)).map(|_| rng.random_range(-scale..=scale)).collect();
        let a = agent.act::<ChaCha8Rng>(&s, None, None).map_err(|e| e.to_string())?;
        a.validate(&g, lim).map_err(|e| format!("case {i}: {e}"))?;
    }
    Ok("300 random networks".into())
}

/// Quick numerical checks of the core invariants.
pub fn selftest() -> Vec<CheckResult> {
    vec![
        check("ls-recovery", ls_recovery),
        check("zf-null-space", zf_null_space),
        check("layer-gradients", layer_gradients),
        check("agent-gradients", agent_gradients),
        check("env-consistency", env_consistency),
        check("signaling", signaling),
        check("action-fuzz", action_fuzz),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        for r in super::selftest() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
