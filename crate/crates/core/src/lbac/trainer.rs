//! Outer training loop: collect one episode, then a fixed number of gradient
//! steps on critic, actor, multipliers and target critic.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clbf_validate::{check_decrease, LearnedArtifacts, Lemma1Report, TheoremReport};
use crate::env2d::{Action, NavEnv, State};
use crate::error::{Error, Result};
use crate::lbac::losses::{actor_update, critic_loss, BatchNoise, LossSettings, LossWorkspace};
use crate::lbac::multipliers::{MultiplierStats, Multipliers};
use crate::lbac::optim::{polyak_in_place, Adam};
use crate::lbac::transition::{rewrite_tuple, Batch, ReplayBuffer};
use crate::lbac::{ActorQState, TrainConfig};
use crate::net::{policy_sample, Gradients, NetParams};

pub const METRICS_CSV_HEADER: &str =
    "episode,steps,total_cost,violated,lambda,beta,critic_loss,actor_loss,entropy_estimate";

const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub steps: usize,
    /// Sum of step costs, plus the terminal cost on a violation.
    pub total_cost: f64,
    pub violated: bool,
    pub lambda: f64,
    pub beta: f64,
    /// Mean over the episode's gradient steps; NaN when none ran.
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// Mean of `-log pi(a|s)` over the actions taken in the episode.
    pub entropy_estimate: f64,
}

impl EpisodeMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.steps,
            self.total_cost,
            u8::from(self.violated),
            self.lambda,
            self.beta,
            self.critic_loss,
            self.actor_loss,
            self.entropy_estimate
        )
    }
}

pub fn metrics_csv(metrics: &[EpisodeMetrics]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for m in metrics {
        let _ = writeln!(out, "{}", m.csv_row());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Decrease term off, actor evaluates `Q` at the current state.
    Warm,
    Lbac,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub critic_loss: f64,
    pub actor_objective: f64,
    pub stats: MultiplierStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRollout {
    pub steps: usize,
    pub total_cost: f64,
    pub violated: bool,
    pub reached: bool,
    pub entropy_estimate: f64,
}

/// Observer of the training loop, called after every episode.
pub trait TrainCallbacks {
    fn on_episode(&mut self, _metrics: &EpisodeMetrics, _learner: &Learner) -> Result<()> {
        Ok(())
    }
}

pub struct NoCallbacks;

impl TrainCallbacks for NoCallbacks {}

/// All mutable training state. Each random stream is a separate ChaCha
/// stream of the master seed so that the streams do not interact.
#[derive(Debug, Clone)]
pub struct Learner {
    theta: NetParams,
    phi: NetParams,
    phi_target: NetParams,
    multipliers: Multipliers,
    opt_actor: Adam,
    opt_critic: Adam,
    cfg: TrainConfig,
    settings: LossSettings,
    buffer: ReplayBuffer,
    ws: LossWorkspace,
    batch: Batch,
    noise: BatchNoise,
    actor_grads: Gradients,
    critic_grads: Gradients,
    rng_env: ChaCha8Rng,
    rng_act: ChaCha8Rng,
    rng_sample: ChaCha8Rng,
    rng_eval: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

impl Learner {
    pub fn new(env: &NavEnv, cfg: &TrainConfig, seed: u64) -> Result<Self> {
        let theta = NetParams::init(&cfg.policy_dims(), &mut stream(seed, 0))?;
        let phi = NetParams::init(&cfg.critic_dims(), &mut stream(seed, 1))?;
        Ok(Self {
            opt_actor: Adam::new(&theta, cfg.lr_actor),
            opt_critic: Adam::new(&phi, cfg.lr_critic),
            actor_grads: Gradients::zeros_like(&theta),
            critic_grads: Gradients::zeros_like(&phi),
            phi_target: phi.clone(),
            theta,
            phi,
            multipliers: Multipliers::new(cfg.initial_lambda, cfg.initial_beta),
            settings: LossSettings::new(cfg, env.config()),
            cfg: cfg.clone(),
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            ws: LossWorkspace::default(),
            batch: Batch::default(),
            noise: BatchNoise::default(),
            rng_env: stream(seed, 2),
            rng_act: stream(seed, 3),
            rng_sample: stream(seed, 4),
            rng_eval: stream(seed, 5),
        })
    }

    pub fn theta(&self) -> &NetParams {
        &self.theta
    }

    pub fn phi(&self) -> &NetParams {
        &self.phi
    }

    pub fn phi_target(&self) -> &NetParams {
        &self.phi_target
    }

    pub fn multipliers(&self) -> Multipliers {
        self.multipliers
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn artifacts(&self) -> LearnedArtifacts<'_> {
        LearnedArtifacts {
            theta: &self.theta,
            phi: &self.phi,
            action_bound: self.settings.action_bound,
        }
    }

    /// Rolls one episode with sampled actions and stores the rewritten tuples.
    /// A terminal next state is followed by its absorbing self-loop tuple.
    pub fn collect_episode(&mut self, env: &NavEnv) -> Result<EpisodeRollout> {
        let mut s = env.reset(&mut self.rng_env)?;
        let mut out = EpisodeRollout {
            steps: 0,
            total_cost: 0.0,
            violated: false,
            reached: false,
            entropy_estimate: 0.0,
        };
        let mut neg_lp = 0.0;
        let absorb = |buf: &mut ReplayBuffer, s: State| buf.push(rewrite_tuple(env, s, Action::default(), 0.0, s));
        if env.in_goal(&s) || env.in_unsafe(&s) {
            out.reached = env.in_goal(&s);
            out.violated = env.in_unsafe(&s);
            absorb(&mut self.buffer, s);
            return Ok(out);
        }
        for t in 0..env.config().max_steps {
            let eps = [StandardNormal.sample(&mut self.rng_act), StandardNormal.sample(&mut self.rng_act)];
            let smp = policy_sample(&self.theta, &s, eps, self.settings.action_bound)?;
            if !smp.log_prob.is_finite() {
                return Err(Error::NonFinite {
                    what: "policy log-probability".into(),
                });
            }
            neg_lp -= smp.log_prob;
            let r = env.step_at(&s, &smp.action, t);
            self.buffer.push(rewrite_tuple(env, s, smp.action, r.cost, r.next_state));
            out.steps += 1;
            out.total_cost += r.cost;
            s = r.next_state;
            if r.in_unsafe || r.in_goal {
                out.violated = r.in_unsafe;
                out.reached = r.in_goal;
                if r.in_unsafe {
                    out.total_cost += env.config().terminal_cost;
                }
                absorb(&mut self.buffer, s);
                break;
            }
        }
        out.entropy_estimate = neg_lp / out.steps as f64;
        Ok(out)
    }

    /// One update of critic, actor, multipliers and target critic on a fresh
    /// minibatch. Multiplier statistics are those of the pre-update networks.
    pub fn gradient_step(&mut self, phase: Phase) -> Result<StepReport> {
        let n = self.cfg.batch;
        self.buffer.sample_into(&mut self.rng_sample, n, &mut self.batch);
        if self.batch.is_empty() {
            return Err(Error::Shape("gradient step on an empty replay buffer".into()));
        }
        self.noise.resample(&mut self.rng_sample, n);
        let mut settings = self.settings;
        let lambda = match phase {
            Phase::Warm => {
                settings.actor_q_state = ActorQState::Current;
                0.0
            }
            Phase::Lbac => self.multipliers.lambda,
        };

        let c = critic_loss(
            &mut self.ws,
            &self.batch,
            &self.noise,
            &self.phi,
            &self.phi_target,
            &self.theta,
            lambda,
            &settings,
            &mut self.critic_grads,
        )?;
        self.opt_critic.step(&mut self.phi, &self.critic_grads)?;

        let a = actor_update(
            &mut self.ws,
            &self.batch,
            &self.noise,
            &self.theta,
            &self.phi,
            self.multipliers.beta,
            &settings,
            &mut self.actor_grads,
        )?;
        self.opt_actor.step(&mut self.theta, &self.actor_grads)?;

        let stats = MultiplierStats {
            lambda_stat: c.lambda_stat,
            beta_stat: a.mean_log_prob + settings.entropy_target,
        };
        let before = self.multipliers;
        self.multipliers.ascend(&stats, self.cfg.lr_multiplier);
        if phase == Phase::Warm {
            self.multipliers.lambda = before.lambda;
        }
        polyak_in_place(&mut self.phi_target, &self.phi, self.cfg.tau)?;
        Ok(StepReport {
            critic_loss: c.loss,
            actor_objective: a.objective,
            stats,
        })
    }

    pub fn phase_for(&self, episode: usize) -> Phase {
        if episode < self.cfg.warm_start_episodes {
            Phase::Warm
        } else {
            Phase::Lbac
        }
    }

    /// Collects episode `episode` (0-based) and runs its gradient steps.
    pub fn run_episode(&mut self, env: &NavEnv, episode: usize) -> Result<EpisodeMetrics> {
        let roll = self.collect_episode(env)?;
        let phase = self.phase_for(episode);
        let (mut cl, mut al, mut k) = (0.0, 0.0, 0usize);
        if self.buffer.len() >= self.cfg.learning_starts.max(1) {
            for _ in 0..self.cfg.grad_steps_per_episode {
                let r = self.gradient_step(phase)?;
                cl += r.critic_loss;
                al += r.actor_objective;
                k += 1;
            }
        }
        let avg = |x: f64| if k == 0 { f64::NAN } else { x / k as f64 };
        Ok(EpisodeMetrics {
            episode,
            steps: roll.steps,
            total_cost: roll.total_cost,
            violated: roll.violated,
            lambda: self.multipliers.lambda,
            beta: self.multipliers.beta,
            critic_loss: avg(cl),
            actor_loss: avg(al),
            entropy_estimate: roll.entropy_estimate,
        })
    }

    /// Decrease-condition check on fresh rollouts of the current artifacts;
    /// a degenerate pool counts as not satisfied.
    pub fn stopping_check(&mut self, env: &NavEnv) -> Result<Option<TheoremReport>> {
        let art = LearnedArtifacts {
            theta: &self.theta,
            phi: &self.phi,
            action_bound: self.settings.action_bound,
        };
        match check_decrease(
            env,
            &art,
            self.cfg.stop_check_rollouts,
            self.cfg.alpha4,
            BOOTSTRAP_RESAMPLES,
            true,
            &mut self.rng_eval,
        ) {
            Ok(r) => Ok(Some(r)),
            Err(Error::DegeneratePool(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub learner: Learner,
    pub metrics: Vec<EpisodeMetrics>,
    pub lemma1: Lemma1Report,
    /// Report of the stopping check that ended training early, if any.
    pub stopped_by: Option<TheoremReport>,
}

pub fn train<C: TrainCallbacks + ?Sized>(
    env: &NavEnv,
    cfg: &TrainConfig,
    seed: u64,
    callbacks: &mut C,
) -> Result<TrainOutcome> {
    let lemma1 = cfg.validate(env)?;
    let mut learner = Learner::new(env, cfg, seed)?;
    let mut metrics = Vec::with_capacity(cfg.episodes_total);
    let mut stopped_by = None;
    for ep in 0..cfg.episodes_total {
        let abort = |e: Error| Error::TrainingAborted {
            episode: ep,
            source: Box::new(e),
        };
        let m = learner.run_episode(env, ep).map_err(abort)?;
        metrics.push(m);
        callbacks.on_episode(&m, &learner)?;
        let done = ep + 1;
        let check_due = cfg.stop_check_every > 0
            && done > cfg.warm_start_episodes
            && (done - cfg.warm_start_episodes).is_multiple_of(cfg.stop_check_every);
        if check_due {
            if let Some(r) = learner.stopping_check(env).map_err(abort)? {
                if r.satisfied {
                    stopped_by = Some(r);
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome {
        learner,
        metrics,
        lemma1,
        stopped_by,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env2d::EnvConfig;
    use crate::lbac::multiplier_statistics;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden: vec![16, 16],
            batch: 32,
            grad_steps_per_episode: 5,
            learning_starts: 1,
            episodes_total: 3,
            warm_start_episodes: 1,
            stop_check_every: 0,
            c_max_resolution: 50,
            ..TrainConfig::default()
        }
    }

    fn env() -> NavEnv {
        NavEnv::new(EnvConfig::default()).unwrap()
    }

    #[test]
    fn one_episode_fills_buffer_once() {
        let e = env();
        let cfg = TrainConfig {
            episodes_total: 1,
            ..small_cfg()
        };
        let out = train(&e, &cfg, 7, &mut NoCallbacks).unwrap();
        assert_eq!(out.metrics.len(), 1);
        let m = out.metrics[0];
        let terminal = usize::from(m.violated || m.steps < e.config().max_steps);
        assert_eq!(out.learner.buffer().len(), m.steps + terminal);
        assert!(out.learner.buffer().iter().all(|t| t.is_consistent(&e)));
    }

    #[test]
    fn identical_seeds_give_identical_metrics() {
        let e = env();
        let a = train(&e, &small_cfg(), 11, &mut NoCallbacks).unwrap();
        let b = train(&e, &small_cfg(), 11, &mut NoCallbacks).unwrap();
        assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
        assert_eq!(a.learner.theta(), b.learner.theta());
        let c = train(&e, &small_cfg(), 12, &mut NoCallbacks).unwrap();
        assert_ne!(metrics_csv(&a.metrics), metrics_csv(&c.metrics));
    }

    #[test]
    fn warm_phase_keeps_lambda_and_adapts_beta() {
        let e = env();
        let cfg = TrainConfig {
            episodes_total: 1,
            warm_start_episodes: 5,
            lr_multiplier: 0.1,
            ..small_cfg()
        };
        let out = train(&e, &cfg, 3, &mut NoCallbacks).unwrap();
        assert_eq!(out.metrics[0].lambda, cfg.initial_lambda);
        assert_ne!(out.metrics[0].beta, cfg.initial_beta);
    }

    #[test]
    fn step_statistics_match_multiplier_statistics() {
        let e = env();
        let cfg = small_cfg();
        let mut l = Learner::new(&e, &cfg, 5).unwrap();
        l.collect_episode(&e).unwrap();
        let (theta, phi) = (l.theta.clone(), l.phi.clone());
        let mut probe = l.clone();
        let r = l.gradient_step(Phase::Lbac).unwrap();
        probe.buffer.sample_into(&mut probe.rng_sample, cfg.batch, &mut probe.batch);
        probe.noise.resample(&mut probe.rng_sample, cfg.batch);
        let s = multiplier_statistics(&mut probe.ws, &probe.batch, &probe.noise, &theta, &phi, &probe.settings).unwrap();
        assert_eq!(s, r.stats);
    }

    #[test]
    fn multipliers_nonnegative_throughout() {
        let e = env();
        let cfg = TrainConfig {
            lr_multiplier: 0.5,
            ..small_cfg()
        };
        let mut l = Learner::new(&e, &cfg, 1).unwrap();
        l.collect_episode(&e).unwrap();
        for _ in 0..50 {
            l.gradient_step(Phase::Lbac).unwrap();
            let m = l.multipliers();
            assert!(m.lambda >= 0.0 && m.beta >= 0.0);
        }
    }

    #[test]
    fn callbacks_see_every_episode() {
        struct Count(usize);
        impl TrainCallbacks for Count {
            fn on_episode(&mut self, m: &EpisodeMetrics, _: &Learner) -> Result<()> {
                assert_eq!(m.episode, self.0);
                self.0 += 1;
                Ok(())
            }
        }
        let mut c = Count(0);
        train(&env(), &small_cfg(), 2, &mut c).unwrap();
        assert_eq!(c.0, 3);
    }

    #[test]
    fn invalid_terminal_cost_is_rejected() {
        let e = NavEnv::new(EnvConfig {
            terminal_cost: 0.5,
            ..EnvConfig::default()
        })
        .unwrap();
        assert!(matches!(train(&e, &small_cfg(), 0, &mut NoCallbacks), Err(Error::Config(_))));
    }

    #[test]
    fn metrics_csv_layout() {
        let e = env();
        let out = train(&e, &small_cfg(), 4, &mut NoCallbacks).unwrap();
        let csv = metrics_csv(&out.metrics);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(METRICS_CSV_HEADER));
        for l in lines {
            assert_eq!(l.split(',').count(), 9);
        }
    }
}
