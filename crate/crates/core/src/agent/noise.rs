use rand::Rng;
use rand_distr::StandardNormal;

use super::RawOutput;

/// Gaussian standard deviation decaying linearly from `sigma0` at episode 0 to 0 at the last episode.
pub fn gaussian_sigma(sigma0: f64, episode: usize, episodes: usize) -> f64 {
    if episodes <= 1 {
        return if episode == 0 { sigma0 } else { 0.0 };
    }
    sigma0 * (1.0 - episode as f64 / (episodes - 1) as f64).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Gaussian { sigma0: f64, episodes: usize },
    OrnsteinUhlenbeck { theta: f64, sigma: f64, dt: f64 },
}

/// Perturbs the phase and beamformer outputs before scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Exploration {
    pub kind: NoiseKind,
    episode: usize,
    ou: Vec<f64>,
}

impl Exploration {
    pub fn new(kind: NoiseKind) -> Self {
        Self {
            kind,
            episode: 0,
            ou: Vec::new(),
        }
    }

    /// Set the current episode; the OU process restarts from zero.
    pub fn start_episode(&mut self, episode: usize) {
        self.episode = episode;
        self.ou.clear();
    }

    /// Standard deviation used for logging: the Gaussian schedule or the OU diffusion.
    pub fn sigma(&self) -> f64 {
        match self.kind {
            NoiseKind::Gaussian { sigma0, episodes } => gaussian_sigma(sigma0, self.episode, episodes),
            NoiseKind::OrnsteinUhlenbeck { sigma, .. } => sigma,
        }
    }

    fn draws<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> Vec<f64> {
        match self.kind {
            NoiseKind::Gaussian { .. } => {
                let s = self.sigma();
                (0..n)
                    .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            NoiseKind::OrnsteinUhlenbeck { theta, sigma, dt } => {
                if self.ou.len() != n {
                    self.ou = vec![0.0; n];
                }
                for x in &mut self.ou {
                    let z: f64 = rng.sample(StandardNormal);
                    *x += -theta * *x * dt + sigma * dt.sqrt() * z;
                }
                self.ou.clone()
            }
        }
    }

    /// Add noise to phase outputs (or probability vectors) and beamformer outputs, clipped to `[-1, 1]`.
    pub fn perturb<R: Rng + ?Sized>(&mut self, raw: &mut RawOutput, rng: &mut R) {
        let n = raw.phase.len() + raw.probs.iter().map(Vec::len).sum::<usize>() + raw.beam.len();
        let z = self.draws(n, rng);
        let targets = raw
            .phase
            .iter_mut()
            .chain(raw.probs.iter_mut().flatten())
            .chain(raw.beam.iter_mut());
        for (v, dz) in targets.zip(z) {
            *v = (*v + dz).clamp(-1.0, 1.0);
        }
    }
}
