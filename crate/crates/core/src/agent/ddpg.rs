use rand::Rng;

use super::{
    Actor, ActorSpec, ActionScaler, AgentError, Critic, Experience, Exploration, ReplayBuffer,
};
use crate::channel::PowerLimits;
use crate::cnum::C64;
use crate::env::Action;
use crate::nnet::{
    export_tensors, import_tensors, soft_update, Adam, AdamConfig, Checkpoint, NnError, Parameters,
    Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Discount factor.
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Soft-update rate of the target networks.
    pub lambda: f64,
    /// Soft-update every this many learning steps.
    pub target_interval: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.6,
            batch_size: 64,
            buffer_capacity: 10_000,
            lambda: 0.005,
            target_interval: 1,
            lr_actor: 1e-4,
            lr_critic: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |name, value: f64| Err(AgentError::Config { name, value });
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", self.gamma);
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda", self.lambda);
        }
        if self.batch_size == 0 {
            return bad("batch_size", 0.0);
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity", self.buffer_capacity as f64);
        }
        if self.target_interval == 0 {
            return bad("target_interval", 0.0);
        }
        if !(self.lr_actor > 0.0) || !(self.lr_critic > 0.0) {
            return bad("learning rate", self.lr_actor.min(self.lr_critic));
        }
        Ok(())
    }
}

/// Actor-critic pair with target copies and optimizers.
#[derive(Debug, Clone)]
pub struct Ddpg {
    pub actor: Actor,
    pub actor_target: Actor,
    pub critic: Critic,
    pub critic_target: Critic,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub scaler: ActionScaler,
    pub cfg: TrainConfig,
    learn_steps: u64,
}

/// Statistics of one learning step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

impl Ddpg {
    pub fn new<R: Rng + ?Sized>(
        spec: ActorSpec,
        limits: PowerLimits,
        cfg: TrainConfig,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        cfg.validate()?;
        let scaler = ActionScaler::new(&spec, limits)?;
        let action_dim = spec.n1() + spec.n2() + 2 * spec.m_t + 2 * spec.m_r + 2;
        let critic_width = spec.width;
        let state_dim = spec.state_dim;
        let actor = Actor::new(spec, rng)?;
        let critic = Critic::with_width(state_dim, action_dim, critic_width, rng);
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor_opt: Adam::new(AdamConfig::with_lr(cfg.lr_actor), &actor),
            critic_opt: Adam::new(AdamConfig::with_lr(cfg.lr_critic), &critic),
            actor,
            critic,
            scaler,
            cfg,
            learn_steps: 0,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.critic.action_dim
    }

    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    fn beam_range(&self) -> std::ops::Range<usize> {
        let s = &self.scaler;
        let off = s.n1 + s.n2;
        off..off + 2 * s.m_t + 2 * s.m_r
    }

    /// Beamformers `(w_T, w_R)` stored in a flattened action.
    pub fn beams_from_flat(&self, flat: &[f64]) -> (Vec<C64>, Vec<C64>) {
        let r = self.beam_range();
        let b = &flat[r];
        let (mt, mr) = (self.scaler.m_t, self.scaler.m_r);
        let w_t = (0..mt).map(|i| C64::new(b[i], b[mt + i])).collect();
        let w_r = (0..mr)
            .map(|i| C64::new(b[2 * mt + i], b[2 * mt + mr + i]))
            .collect();
        (w_t, w_r)
    }

    /// Action chosen by the active actor. `beams` is required when the actor has no beamformer heads.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        explore: Option<(&mut Exploration, &mut R)>,
        beams: Option<(Vec<C64>, Vec<C64>)>,
    ) -> Result<Action, AgentError> {
        let mut raw = self.actor.apply(state)?;
        if let Some((x, rng)) = explore {
            x.perturb(&mut raw, rng);
        }
        Ok(self.scaler.to_action(&raw, beams))
    }

    /// Flattened policy action; without beamformer heads the beams come from `stored`.
    fn policy_flat(&self, raw: &super::RawOutput, stored: &[f64]) -> Vec<f64> {
        let beams = if raw.beam.is_empty() {
            Some(self.beams_from_flat(stored))
        } else {
            None
        };
        self.scaler.to_action(raw, beams).flatten()
    }

    /// `y_i = r_i + γ·Q'(s'_i, μ'(s'_i))`.
    pub fn compute_targets(&self, batch: &[&Experience]) -> Result<Vec<f64>, NnError> {
        batch
            .iter()
            .map(|e| {
                let raw = self.actor_target.apply(&e.next_state)?;
                let a = self.policy_flat(&raw, &e.action);
                Ok(e.reward + self.cfg.gamma * self.critic_target.q(&e.next_state, &a)?)
            })
            .collect()
    }

    /// Mean squared TD error and its parameter gradient.
    pub fn critic_gradient(&self, batch: &[&Experience], targets: &[f64]) -> Result<(f64, Critic), NnError> {
        let mut grads = self.critic.zeros_like();
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for (e, &y) in batch.iter().zip(targets) {
            let (q, tape) = self.critic.forward(&e.state, &e.action)?;
            loss += (y - q) * (y - q) / n;
            self.critic.backward(&tape, -2.0 * (y - q) / n, Some(&mut grads))?;
        }
        Ok((loss, grads))
    }

    /// Mean `Q(s, μ(s))` over the batch and its gradient with respect to the actor parameters.
    pub fn actor_gradient(&self, batch: &[&Experience]) -> Result<(f64, Actor), NnError> {
        let mut grads = self.actor.zeros_like();
        let n = batch.len() as f64;
        let mut objective = 0.0;
        for e in batch {
            let (raw, atape) = self.actor.forward(&e.state)?;
            let a = self.policy_flat(&raw, &e.action);
            let (q, ctape) = self.critic.forward(&e.state, &a)?;
            objective += q / n;
            let (_, da) = self.critic.backward(&ctape, 1.0 / n, None)?;
            let d_raw = self.scaler.backward(&raw, &da);
            self.actor.backward(&atape, &d_raw, &mut grads)?;
        }
        Ok((objective, grads))
    }

    pub fn update_critic(&mut self, batch: &[&Experience], targets: &[f64]) -> Result<f64, NnError> {
        let (loss, g) = self.critic_gradient(batch, targets)?;
        self.critic_opt.step(&mut self.critic, &g);
        Ok(loss)
    }

    pub fn update_actor(&mut self, batch: &[&Experience]) -> Result<f64, NnError> {
        let (obj, g) = self.actor_gradient(batch)?;
        self.actor_opt.step_ascent(&mut self.actor, &g);
        Ok(obj)
    }

    pub fn soft_update_targets(&mut self) {
        soft_update(&mut self.actor_target, &self.actor, self.cfg.lambda);
        soft_update(&mut self.critic_target, &self.critic, self.cfg.lambda);
    }

    /// One learning step from replay: critic, then actor, then (every `target_interval`) targets.
    /// Returns `None` until the buffer holds a full batch.
    pub fn learn<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<Option<LearnStats>, AgentError> {
        if buffer.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let batch = buffer.sample(self.cfg.batch_size, rng)?;
        let y = self.compute_targets(&batch)?;
        let critic_loss = self.update_critic(&batch, &y)?;
        let actor_objective = self.update_actor(&batch)?;
        self.learn_steps += 1;
        if self.learn_steps % self.cfg.target_interval as u64 == 0 {
            self.soft_update_targets();
        }
        Ok(Some(LearnStats {
            critic_loss,
            actor_objective,
        }))
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }

    /// All networks and optimizer moments.
    pub fn export(&self) -> Vec<Tensor> {
        let mut v = export_tensors(&self.actor, "actor");
        v.extend(export_tensors(&self.actor_target, "actor_target"));
        v.extend(export_tensors(&self.critic, "critic"));
        v.extend(export_tensors(&self.critic_target, "critic_target"));
        v.extend(self.actor_opt.export("actor_opt"));
        v.extend(self.critic_opt.export("critic_opt"));
        v
    }

    pub fn import(&mut self, ckpt: &Checkpoint) -> Result<(), NnError> {
        import_tensors(&mut self.actor, "actor", ckpt)?;
        import_tensors(&mut self.actor_target, "actor_target", ckpt)?;
        import_tensors(&mut self.critic, "critic", ckpt)?;
        import_tensors(&mut self.critic_target, "critic_target", ckpt)?;
        self.actor_opt.import("actor_opt", ckpt)?;
        self.critic_opt.import("critic_opt", ckpt)?;
        Ok(())
    }
}
