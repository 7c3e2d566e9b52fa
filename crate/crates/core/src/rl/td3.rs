//! Twin-delayed deterministic policy gradient learner.

use std::fmt::Write as _;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::nn::{ball_squash, ball_squash_backward, Adam, Mlp, MlpGrads};
use super::obs::{ObsConfig, ObsMode};
use super::replay::Batch;
use crate::geom::Vec3;
use crate::policy::{Controller, Sensors};

#[derive(Debug, thiserror::Error)]
pub enum Td3Error {
    #[error("non-finite {what} at update {update}: critic loss {critic_loss}, actor loss {actor_loss:?}")]
    NonFinite {
        what: &'static str,
        update: u64,
        critic_loss: f64,
        actor_loss: Option<f64>,
    },
    #[error("invalid learner config: {0}")]
    Config(String),
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error("checkpoint config hash {found} does not match expected {expected}")]
    HashMismatch { expected: String, found: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Td3Config {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Target smoothing noise std, as a fraction of the action bound.
    pub policy_noise: f64,
    /// Target smoothing clip, as a fraction of the action bound.
    pub noise_clip: f64,
    pub policy_delay: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Exploration noise std, as a fraction of the action bound.
    pub expl_noise: f64,
    /// Environment steps driven by the warmup behaviour policy.
    pub warmup_steps: usize,
    /// Environment steps before the first gradient update.
    pub learning_starts: usize,
    /// Multiplies rewards before they are stored.
    pub reward_scale: f64,
    pub seed: u64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            actor_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            batch_size: 256,
            buffer_capacity: 200_000,
            expl_noise: 0.1,
            warmup_steps: 5_000,
            learning_starts: 5_000,
            reward_scale: 0.01,
            seed: 0,
        }
    }
}

impl Td3Config {
    /// Small networks and short warmup for desk-scale runs.
    pub fn smoke() -> Self {
        Self {
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            batch_size: 64,
            buffer_capacity: 100_000,
            warmup_steps: 1_000,
            learning_starts: 1_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), Td3Error> {
        let bad = |m: &str| Err(Td3Error::Config(m.to_string()));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be at least 1");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch_size and buffer_capacity must be positive");
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("reward_scale", self.reward_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Td3Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("policy_noise", self.policy_noise),
            ("noise_clip", self.noise_clip),
            ("expl_noise", self.expl_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Td3Error::Config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
}

/// Deterministic actor: `a = max_action · squash(net(obs))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    pub net: Mlp,
    pub max_action: f64,
}

impl Actor {
    pub fn act_batch(&self, obs: &Array2<f64>) -> Array2<f64> {
        let z = self.net.forward(obs.view());
        self.squash_rows(&z)
    }

    fn squash_rows(&self, z: &Array2<f64>) -> Array2<f64> {
        let mut a = Array2::zeros(z.raw_dim());
        for (zr, mut ar) in z.outer_iter().zip(a.outer_iter_mut()) {
            let q = ball_squash([zr[0], zr[1], zr[2]]);
            for k in 0..3 {
                ar[k] = self.max_action * q[k];
            }
        }
        a
    }

    pub fn act(&self, obs: &[f64]) -> Vec3 {
        let x = ArrayView1::from(obs).insert_axis(Axis(0));
        let z = self.net.forward(x);
        let q = ball_squash([z[[0, 0]], z[[0, 1]], z[[0, 2]]]);
        Vec3::new(q[0], q[1], q[2]) * self.max_action
    }
}

#[derive(Clone)]
pub struct Td3 {
    pub cfg: Td3Config,
    pub obs_mode: ObsMode,
    pub obs_cfg: ObsConfig,
    pub actor: Actor,
    pub actor_target: Actor,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    actor_opt: Adam,
    critic_opt: [Adam; 2],
    rng: ChaCha8Rng,
    updates: u64,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

fn hash_hex(h: Sha256) -> String {
    hex::encode(h.finalize())
}

impl Td3 {
    pub fn new(cfg: Td3Config, obs_mode: ObsMode, obs_cfg: ObsConfig, max_action: f64) -> Result<Self, Td3Error> {
        cfg.validate()?;
        if !(max_action.is_finite() && max_action > 0.0) {
            return Err(Td3Error::Config("max_action must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dim = obs_cfg.dim(obs_mode);
        let actor = Actor {
            net: Mlp::new(&sizes(dim, &cfg.actor_hidden, 3), 3e-3, &mut rng),
            max_action,
        };
        let c_sizes = sizes(dim + 3, &cfg.critic_hidden, 1);
        let critics = [Mlp::new(&c_sizes, 3e-3, &mut rng), Mlp::new(&c_sizes, 3e-3, &mut rng)];
        let actor_opt = Adam::new(&actor.net, cfg.actor_lr);
        let critic_opt = [Adam::new(&critics[0], cfg.critic_lr), Adam::new(&critics[1], cfg.critic_lr)];
        Ok(Self {
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor,
            critics,
            actor_opt,
            critic_opt,
            cfg,
            obs_mode,
            obs_cfg,
            rng,
            updates: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.net.input_dim()
    }

    pub fn max_action(&self) -> f64 {
        self.actor.max_action
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Identifies everything a checkpoint must agree on to be loadable.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.obs_cfg.layout_tag(self.obs_mode).as_bytes());
        h.update(format!("actor={:?} critic={:?}", self.actor.net.sizes(), self.critics[0].sizes()).as_bytes());
        h.update(format!("max_action={}", self.actor.max_action).as_bytes());
        hash_hex(h)
    }

    /// Hash over every parameter tensor, online and target.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        self.actor.net.hash_into(&mut h);
        self.actor_target.net.hash_into(&mut h);
        for c in self.critics.iter().chain(&self.critic_targets) {
            c.hash_into(&mut h);
        }
        hash_hex(h)
    }

    /// Greedy action.
    pub fn act(&self, obs: &[f64]) -> Vec3 {
        self.actor.act(obs)
    }

    /// Greedy action plus Gaussian exploration noise, projected back onto the
    /// action ball.
    pub fn explore<R: Rng>(&self, obs: &[f64], rng: &mut R) -> Vec3 {
        self.perturb(self.act(obs), rng)
    }

    /// Adds exploration noise to `a` and projects onto the action ball.
    pub fn perturb<R: Rng>(&self, a: Vec3, rng: &mut R) -> Vec3 {
        let a = a.clamp_norm(self.max_action());
        let sigma = self.cfg.expl_noise * self.max_action();
        if sigma == 0.0 {
            return a;
        }
        let n = Normal::new(0.0, sigma).expect("finite sigma");
        let noisy = a + Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
        noisy.clamp_norm(self.max_action())
    }

    /// Uniform draw from the action ball.
    pub fn random_action<R: Rng>(&self, rng: &mut R) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            );
            if v.norm_squared() <= 1.0 {
                return v * self.max_action();
            }
        }
    }

    fn critic_input(&self, obs: &Array2<f64>, action: &Array2<f64>) -> Array2<f64> {
        let scaled = action / self.actor.max_action;
        concatenate(Axis(1), &[obs.view(), scaled.view()]).expect("row counts agree")
    }

    /// Clipped double-Q targets with target policy smoothing.
    pub fn td_targets<R: Rng>(&self, batch: &Batch, rng: &mut R) -> Array1<f64> {
        let m = self.actor.max_action;
        let mut a_next = self.actor_target.act_batch(&batch.next_obs);
        let sigma = self.cfg.policy_noise * m;
        if sigma > 0.0 {
            let clip = self.cfg.noise_clip * m;
            let n = Normal::new(0.0, sigma).expect("finite sigma");
            for mut row in a_next.outer_iter_mut() {
                let mut eps = || n.sample(rng).clamp(-clip, clip);
                let v = Vec3::new(row[0] + eps(), row[1] + eps(), row[2] + eps()).clamp_norm(m);
                row.assign(&ndarray::arr1(&v.to_array()));
            }
        }
        let x = self.critic_input(&batch.next_obs, &a_next);
        let q1 = self.critic_targets[0].forward(x.view());
        let q2 = self.critic_targets[1].forward(x.view());
        let mut y = batch.reward.clone();
        for i in 0..y.len() {
            let q = q1[[i, 0]].min(q2[[i, 0]]);
            y[i] += self.cfg.gamma * (1.0 - batch.done[i]) * q;
        }
        y
    }

    /// Twin critic values on `(obs, action)`.
    pub fn q_values(&self, obs: &Array2<f64>, action: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
        let x = self.critic_input(obs, action);
        (
            self.critics[0].forward(x.view()).column(0).to_owned(),
            self.critics[1].forward(x.view()).column(0).to_owned(),
        )
    }

    /// `Σ_k mean((Q_k − y)²)` and its gradients for both critics.
    pub fn critic_loss_grads(&self, batch: &Batch, y: &Array1<f64>) -> (f64, [MlpGrads; 2]) {
        let x = self.critic_input(&batch.obs, &batch.action);
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let grads = [0, 1].map(|k| {
            let (q, cache) = self.critics[k].forward_cached(x.view());
            let mut g = Array2::zeros((batch.len(), 1));
            for i in 0..batch.len() {
                let diff = q[[i, 0]] - y[i];
                loss += diff * diff / n;
                g[[i, 0]] = 2.0 * diff / n;
            }
            self.critics[k].backward(&cache, g).0
        });
        (loss, grads)
    }

    pub fn critic_loss(&self, batch: &Batch, y: &Array1<f64>) -> f64 {
        let (q1, q2) = self.q_values(&batch.obs, &batch.action);
        let n = batch.len() as f64;
        (0..batch.len())
            .map(|i| ((q1[i] - y[i]).powi(2) + (q2[i] - y[i]).powi(2)) / n)
            .sum()
    }

    /// `−mean Q₁(s, π(s))` and its gradient for the actor.
    pub fn actor_loss_grads(&self, batch: &Batch) -> (f64, MlpGrads) {
        let n = batch.len();
        let (z, a_cache) = self.actor.net.forward_cached(batch.obs.view());
        let a = self.actor.squash_rows(&z);
        let x = self.critic_input(&batch.obs, &a);
        let (q, c_cache) = self.critics[0].forward_cached(x.view());
        let loss = -q.sum() / n as f64;
        let g_q = Array2::from_elem((n, 1), -1.0 / n as f64);
        let (_, g_x) = self.critics[0].backward(&c_cache, g_q);
        let obs_dim = batch.obs.ncols();
        // the critic sees a/m and the actor emits m·squash(z), so m cancels
        let g_a = g_x.slice(s![.., obs_dim..]).to_owned();
        let mut g_z = Array2::zeros((n, 3));
        for i in 0..n {
            let zi = [z[[i, 0]], z[[i, 1]], z[[i, 2]]];
            let up = [g_a[[i, 0]], g_a[[i, 1]], g_a[[i, 2]]];
            let gz = ball_squash_backward(zi, up);
            for k in 0..3 {
                g_z[[i, k]] = gz[k];
            }
        }
        let (grads, _) = self.actor.net.backward(&a_cache, g_z);
        (loss, grads)
    }

    pub fn actor_loss(&self, batch: &Batch) -> f64 {
        let a = self.actor.act_batch(&batch.obs);
        let (q1, _) = self.q_values(&batch.obs, &a);
        -q1.sum() / batch.len() as f64
    }

    /// One TD3 step on `batch`.
    pub fn update(&mut self, batch: &Batch) -> Result<UpdateStats, Td3Error> {
        self.updates += 1;
        let mut rng = self.rng.clone();
        let y = self.td_targets(batch, &mut rng);
        self.rng = rng;
        let (critic_loss, grads) = self.critic_loss_grads(batch, &y);
        if !critic_loss.is_finite() {
            return Err(Td3Error::NonFinite {
                what: "critic loss",
                update: self.updates,
                critic_loss,
                actor_loss: None,
            });
        }
        for k in 0..2 {
            self.critic_opt[k].step(&mut self.critics[k], &grads[k]);
        }
        let mut actor_loss = None;
        if self.updates.is_multiple_of(self.cfg.policy_delay as u64) {
            let (loss, g) = self.actor_loss_grads(batch);
            if !loss.is_finite() {
                return Err(Td3Error::NonFinite {
                    what: "actor loss",
                    update: self.updates,
                    critic_loss,
                    actor_loss: Some(loss),
                });
            }
            self.actor_opt.step(&mut self.actor.net, &g);
            actor_loss = Some(loss);
            let tau = self.cfg.tau;
            self.actor_target.net.soft_update(&self.actor.net, tau);
            for k in 0..2 {
                self.critic_targets[k].soft_update(&self.critics[k], tau);
            }
        }
        if !(self.actor.net.is_finite() && self.critics.iter().all(Mlp::is_finite)) {
            return Err(Td3Error::NonFinite {
                what: "parameters",
                update: self.updates,
                critic_loss,
                actor_loss,
            });
        }
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
        })
    }

    /// Greedy controller over the current actor.
    pub fn policy(&self) -> ActorPolicy {
        ActorPolicy {
            actor: self.actor.clone(),
            mode: self.obs_mode,
            obs: self.obs_cfg.clone(),
        }
    }

    /// Text checkpoint of all tensors. `episode` is stored for resumption.
    pub fn save_checkpoint(&self, episode: u64) -> String {
        let mut out = String::new();
        writeln!(out, "dualtrack-checkpoint v1").unwrap();
        writeln!(out, "config_hash {}", self.config_hash()).unwrap();
        writeln!(out, "obs_mode {}", self.obs_mode).unwrap();
        writeln!(out, "max_action {}", self.actor.max_action).unwrap();
        writeln!(out, "episode {episode}").unwrap();
        writeln!(out, "updates {}", self.updates).unwrap();
        let nets: [(&str, &Mlp); 6] = [
            ("actor", &self.actor.net),
            ("actor_target", &self.actor_target.net),
            ("critic1", &self.critics[0]),
            ("critic2", &self.critics[1]),
            ("critic1_target", &self.critic_targets[0]),
            ("critic2_target", &self.critic_targets[1]),
        ];
        for (name, net) in nets {
            writeln!(out, "net {name} {}", net.layers.len()).unwrap();
            for l in &net.layers {
                writeln!(out, "w {} {}", l.w.nrows(), l.w.ncols()).unwrap();
                write_row(&mut out, l.w.iter());
                writeln!(out, "b {}", l.b.len()).unwrap();
                write_row(&mut out, l.b.iter());
            }
        }
        out
    }

    /// Restores tensors into a learner built with the same configuration.
    /// Returns the stored episode counter.
    pub fn load_checkpoint(&mut self, text: &str) -> Result<u64, Td3Error> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, Vec<&str>), Td3Error> {
            let (n, l) = lines.next().ok_or_else(|| Td3Error::Checkpoint {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            })?;
            Ok((n, l.split_whitespace().collect()))
        };
        let err = |line: usize, message: String| Td3Error::Checkpoint { line, message };

        let (n, head) = next("header")?;
        if head != ["dualtrack-checkpoint", "v1"] {
            return Err(err(n, "not a v1 checkpoint".into()));
        }
        let (n, h) = next("config_hash")?;
        if h.len() != 2 || h[0] != "config_hash" {
            return Err(err(n, "expected `config_hash <hex>`".into()));
        }
        let expected = self.config_hash();
        if h[1] != expected {
            return Err(Td3Error::HashMismatch {
                expected,
                found: h[1].to_string(),
            });
        }
        let mut scalar = |key: &str| -> Result<String, Td3Error> {
            let (n, f) = next(key)?;
            if f.len() != 2 || f[0] != key {
                return Err(err(n, format!("expected `{key} <value>`")));
            }
            Ok(f[1].to_string())
        };
        scalar("obs_mode")?;
        scalar("max_action")?;
        let episode: u64 = scalar("episode")?
            .parse()
            .map_err(|_| err(0, "episode is not an integer".into()))?;
        let updates: u64 = scalar("updates")?
            .parse()
            .map_err(|_| err(0, "updates is not an integer".into()))?;

        let mut nets: Vec<Mlp> = Vec::with_capacity(6);
        let templates = [
            ("actor", &self.actor.net),
            ("actor_target", &self.actor_target.net),
            ("critic1", &self.critics[0]),
            ("critic2", &self.critics[1]),
            ("critic1_target", &self.critic_targets[0]),
            ("critic2_target", &self.critic_targets[1]),
        ];
        for (name, template) in templates {
            let (n, f) = next("net")?;
            if f.len() != 3 || f[0] != "net" || f[1] != name || f[2].parse::<usize>().ok() != Some(template.layers.len()) {
                return Err(err(n, format!("expected `net {name} {}`", template.layers.len())));
            }
            let mut net = template.clone();
            for layer in &mut net.layers {
                let (n, f) = next("w header")?;
                let shape = format!("w {} {}", layer.w.nrows(), layer.w.ncols());
                if f.join(" ") != shape {
                    return Err(err(n, format!("shape mismatch, expected `{shape}`")));
                }
                let (n, vals) = next("weights")?;
                read_row(n, &vals, layer.w.iter_mut())?;
                let (n, f) = next("b header")?;
                let shape = format!("b {}", layer.b.len());
                if f.join(" ") != shape {
                    return Err(err(n, format!("shape mismatch, expected `{shape}`")));
                }
                let (n, vals) = next("biases")?;
                read_row(n, &vals, layer.b.iter_mut())?;
            }
            nets.push(net);
        }
        let mut it = nets.into_iter();
        self.actor.net = it.next().unwrap();
        self.actor_target.net = it.next().unwrap();
        self.critics = [it.next().unwrap(), it.next().unwrap()];
        self.critic_targets = [it.next().unwrap(), it.next().unwrap()];
        self.actor_opt = Adam::new(&self.actor.net, self.cfg.actor_lr);
        self.critic_opt = [
            Adam::new(&self.critics[0], self.cfg.critic_lr),
            Adam::new(&self.critics[1], self.cfg.critic_lr),
        ];
        self.updates = updates;
        Ok(episode)
    }
}

fn write_row<'a>(out: &mut String, vals: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in vals {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v:?}").unwrap();
    }
    out.push('\n');
}

fn read_row<'a>(line: usize, vals: &[&str], dst: impl ExactSizeIterator<Item = &'a mut f64>) -> Result<(), Td3Error> {
    if vals.len() != dst.len() {
        return Err(Td3Error::Checkpoint {
            line,
            message: format!("expected {} values, found {}", dst.len(), vals.len()),
        });
    }
    for (d, s) in dst.zip(vals) {
        *d = s.parse().map_err(|_| Td3Error::Checkpoint {
            line,
            message: format!("`{s}` is not a number"),
        })?;
    }
    Ok(())
}

/// Greedy policy wrapper usable wherever a [`Controller`] is expected.
#[derive(Clone, Debug)]
pub struct ActorPolicy {
    pub actor: Actor,
    pub mode: ObsMode,
    pub obs: ObsConfig,
}

impl Controller for ActorPolicy {
    fn act(&self, sensors: &Sensors) -> Vec3 {
        let o = self.obs.encode(self.mode, sensors);
        self.obs.to_world(self.mode, sensors, self.actor.act(&o))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::replay::Transition;

    fn tiny(hidden: usize) -> Td3 {
        let cfg = Td3Config {
            actor_hidden: vec![hidden],
            critic_hidden: vec![hidden],
            seed: 5,
            ..Td3Config::smoke()
        };
        let obs = ObsConfig {
            lookahead_m: 0,
            trt_velocity: false,
            ..ObsConfig::default()
        };
        Td3::new(cfg, ObsMode::Tracking, obs, 0.08).unwrap()
    }

    fn batch(n: usize, done: bool, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts: Vec<Transition> = (0..n)
            .map(|_| Transition {
                obs: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: Vec3::new(0.03, -0.02, 0.01),
                reward: rng.random_range(-1.0..1.0),
                next_obs: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done,
            })
            .collect();
        Batch::from_transitions(&ts)
    }

    #[test]
    fn targets_equal_online_at_init() {
        let l = tiny(8);
        assert_eq!(l.actor, l.actor_target);
        assert_eq!(l.critics, l.critic_targets);
    }

    #[test]
    fn terminal_target_is_reward() {
        let l = tiny(8);
        let b = batch(16, true, 1);
        let y = l.td_targets(&b, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(y, b.reward);
    }

    #[test]
    fn zero_discount_target_is_reward() {
        let mut l = tiny(8);
        l.cfg.gamma = 0.0;
        let b = batch(16, false, 2);
        let y = l.td_targets(&b, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(y, b.reward);
    }

    #[test]
    fn zero_weights_give_zero_action() {
        let mut l = tiny(8);
        for layer in &mut l.actor.net.layers {
            layer.w.fill(0.0);
            layer.b.fill(0.0);
        }
        assert_eq!(l.act(&[1.0, 2.0, 3.0]), Vec3::ZERO);
    }

    #[test]
    fn action_never_exceeds_bound() {
        let mut l = tiny(8);
        for layer in &mut l.actor.net.layers {
            layer.w.fill(50.0);
        }
        let a = l.act(&[1.0, 2.0, 3.0]);
        assert!(a.norm() <= 0.08 + 1e-15);
    }

    #[test]
    fn duplicated_twins_agree() {
        let mut l = tiny(8);
        l.critics[1] = l.critics[0].clone();
        let b = batch(4, false, 3);
        let (q1, q2) = l.q_values(&b.obs, &b.action);
        assert_eq!(q1, q2);
    }

    #[test]
    fn single_transition_overfits() {
        let mut l = tiny(16);
        l.cfg.gamma = 0.0;
        let b = batch(1, false, 4);
        let y = l.td_targets(&b, &mut ChaCha8Rng::seed_from_u64(0));
        let first = l.critic_loss(&b, &y);
        for _ in 0..2000 {
            l.update(&b).unwrap();
        }
        let last = l.critic_loss(&b, &y);
        assert!(last < 1e-6 && last < first, "{first} -> {last}");
    }

    #[test]
    fn soft_update_is_exact_blend() {
        let mut l = tiny(8);
        l.cfg.policy_delay = 1;
        let before = l.critic_targets[0].params_flat();
        let b = batch(8, false, 6);
        l.update(&b).unwrap();
        let online = l.critics[0].params_flat();
        let after = l.critic_targets[0].params_flat();
        let tau = l.cfg.tau;
        let err: f64 = before
            .iter()
            .zip(&online)
            .zip(&after)
            .map(|((t0, o), t1)| ((1.0 - tau) * t0 + tau * o - t1).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut a = tiny(8);
        a.update(&batch(8, false, 7)).unwrap();
        a.update(&batch(8, false, 8)).unwrap();
        let text = a.save_checkpoint(42);
        let mut b = tiny(8);
        assert_eq!(b.load_checkpoint(&text).unwrap(), 42);
        assert_eq!(a.param_hash(), b.param_hash());

        let mut wrong = tiny(4);
        assert!(matches!(wrong.load_checkpoint(&text), Err(Td3Error::HashMismatch { .. })));
        let broken = text.replacen("w 8 3", "w 8 4", 1);
        assert!(matches!(b.load_checkpoint(&broken), Err(Td3Error::Checkpoint { .. })));
    }

    #[test]
    fn invalid_configs_rejected() {
        let obs = ObsConfig::default();
        for cfg in [
            Td3Config {
                gamma: 1.0,
                ..Td3Config::smoke()
            },
            Td3Config {
                policy_delay: 0,
                ..Td3Config::smoke()
            },
            Td3Config {
                critic_lr: -1.0,
                ..Td3Config::smoke()
            },
        ] {
            assert!(Td3::new(cfg, ObsMode::Tracking, obs.clone(), 0.08).is_err());
        }
    }
}
