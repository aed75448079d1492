use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clbf_validate::rollout::{rollout, Trajectory};
use crate::clbf_validate::Certified;
use crate::env2d::{Action, NavEnv, State};
use crate::error::{Error, Result};

/// One visited transition of the empirical visit distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolSample {
    pub v: f64,
    pub v_next: f64,
    pub ind: f64,
    pub ind_next: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    /// Mean of `V(s') 1(s') - V(s) 1(s)`.
    pub lhs_estimate: f64,
    /// `-alpha4` times the mean of `c 1(s)`.
    pub rhs: f64,
    /// `rhs - lhs_estimate`; positive when the mean decrease holds.
    pub margin: f64,
    pub ci_halfwidth: f64,
    pub n_samples: usize,
    pub satisfied: bool,
    /// Smallest and largest `V(s) / c(s)` over interior samples with `c > 0`.
    pub alpha_ratios: Option<[f64; 2]>,
    /// Mean `V` over the first, middle and last third of each trajectory.
    pub value_thirds: Option<[f64; 3]>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Decrease statistics of a pool with a percentile bootstrap (95%) on the
/// per-sample margin `lhs_i - rhs_i`.
pub fn evaluate_decrease<R: Rng + ?Sized>(
    pool: &[PoolSample],
    alpha4: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<TheoremReport> {
    if !pool.iter().any(|p| p.ind > 0.0) {
        return Err(Error::DegeneratePool(format!(
            "none of {} pooled transitions start in the interior set",
            pool.len()
        )));
    }
    let d: Vec<f64> = pool.iter().map(|p| p.v_next * p.ind_next - p.v * p.ind).collect();
    let r: Vec<f64> = pool.iter().map(|p| -alpha4 * p.cost * p.ind).collect();
    let lhs = mean(&d);
    let rhs = mean(&r);
    if !(lhs.is_finite() && rhs.is_finite()) {
        return Err(Error::NonFinite {
            what: "decrease statistics".into(),
        });
    }
    let m: Vec<f64> = d.iter().zip(&r).map(|(d, r)| d - r).collect();
    let mut boot = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let s: f64 = (0..m.len()).map(|_| m[rng.random_range(0..m.len())]).sum();
        boot.push(s / m.len() as f64);
    }
    boot.sort_by(f64::total_cmp);
    let ci_halfwidth = if boot.is_empty() {
        0.0
    } else {
        0.5 * (quantile(&boot, 0.975) - quantile(&boot, 0.025))
    };

    let ratios = pool
        .iter()
        .filter(|p| p.ind > 0.0 && p.cost > 0.0)
        .map(|p| p.v / p.cost);
    let alpha_ratios = ratios.fold(None, |acc: Option<[f64; 2]>, x| {
        Some(acc.map_or([x, x], |[lo, hi]| [lo.min(x), hi.max(x)]))
    });

    Ok(TheoremReport {
        lhs_estimate: lhs,
        rhs,
        margin: rhs - lhs,
        ci_halfwidth,
        n_samples: pool.len(),
        satisfied: lhs + ci_halfwidth < rhs,
        alpha_ratios,
        value_thirds: None,
    })
}

pub fn pool_from_trajectories(env: &NavEnv, trajs: &[Trajectory]) -> Vec<PoolSample> {
    let ind = |s: &State| f64::from(env.indicator_delta(s));
    trajs
        .iter()
        .flat_map(|t| t.rows.windows(2))
        .map(|w| PoolSample {
            v: w[0].value,
            v_next: w[1].value,
            ind: ind(&w[0].state),
            ind_next: ind(&w[1].state),
            cost: w[0].cost,
        })
        .collect()
}

/// Mean `V` over the first, middle and last third of each trajectory with
/// at least three rows, averaged across trajectories.
pub fn value_thirds(trajs: &[Trajectory]) -> Option<[f64; 3]> {
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for t in trajs.iter().filter(|t| t.rows.len() >= 3) {
        let len = t.rows.len();
        let mut sums = [0.0; 3];
        let mut counts = [0usize; 3];
        for (i, r) in t.rows.iter().enumerate() {
            let k = i * 3 / len;
            sums[k] += r.value;
            counts[k] += 1;
        }
        for k in 0..3 {
            acc[k] += sums[k] / counts[k] as f64;
        }
        n += 1;
    }
    (n > 0).then(|| acc.map(|a| a / n as f64))
}

/// Rolls `n_rollouts` episodes from the initial distribution and evaluates
/// the decrease condition on the pooled transitions.
#[allow(clippy::too_many_arguments)]
pub fn check_decrease<C: Certified + ?Sized, R: Rng + ?Sized>(
    env: &NavEnv,
    ctrl: &C,
    n_rollouts: usize,
    alpha4: f64,
    resamples: usize,
    deterministic: bool,
    rng: &mut R,
) -> Result<TheoremReport> {
    if n_rollouts < 30 {
        return Err(Error::Config(format!(
            "decrease check needs at least 30 rollouts, got {n_rollouts}"
        )));
    }
    let mut trajs = Vec::with_capacity(n_rollouts);
    for _ in 0..n_rollouts {
        let s0 = env.reset(rng)?;
        trajs.push(rollout(env, ctrl, s0, deterministic, rng)?);
    }
    let pool = pool_from_trajectories(env, &trajs);
    let mut report = evaluate_decrease(&pool, alpha4, resamples, rng)?;
    report.value_thirds = value_thirds(&trajs);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSeparationReport {
    pub n_safe: usize,
    pub n_unsafe: usize,
    pub safe_below_chat_rate: f64,
    pub unsafe_at_or_above_chat_rate: f64,
}

/// Rollout starts for level separation: policy rollouts from safe starts and
/// fixed-action probes aimed into the obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub safe_starts: Vec<State>,
    pub unsafe_probes: Vec<(State, Action)>,
}

impl SamplePlan {
    /// `n_safe` starts from the initial region plus `probes_per_obstacle`
    /// starts on a ring around each obstacle, driven at full authority
    /// toward its center.
    pub fn standard<R: Rng + ?Sized>(
        env: &NavEnv,
        n_safe: usize,
        probes_per_obstacle: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let safe_starts = (0..n_safe).map(|_| env.reset(rng)).collect::<Result<Vec<_>>>()?;
        let b = env.config().action_bound;
        let mut unsafe_probes = Vec::new();
        for o in &env.config().obstacles {
            let (cx, cy) = (0.5 * (o.x_min + o.x_max), 0.5 * (o.y_min + o.y_max));
            let (rx, ry) = (0.5 * (o.x_max - o.x_min) + 0.15, 0.5 * (o.y_max - o.y_min) + 0.15);
            for k in 0..probes_per_obstacle {
                let ang = std::f64::consts::TAU * k as f64 / probes_per_obstacle as f64;
                let s = env.clamp_state(State::at(cx + rx * ang.cos(), cy + ry * ang.sin()));
                let (dx, dy) = (cx - s.px, cy - s.py);
                let k = 1.0 / (dx.abs() / b[0]).max(dy.abs() / b[1]).max(1e-12);
                unsafe_probes.push((s, Action::new(dx * k, dy * k)));
            }
        }
        Ok(Self {
            safe_starts,
            unsafe_probes,
        })
    }
}

/// Rates from `(V, in_unsafe)` pairs; an empty class has rate 0.
pub fn level_separation_from(samples: &[(f64, bool)], c_hat: f64) -> LevelSeparationReport {
    let n_unsafe = samples.iter().filter(|(_, u)| *u).count();
    let n_safe = samples.len() - n_unsafe;
    let safe_below = samples.iter().filter(|(v, u)| !u && *v < c_hat).count();
    let unsafe_above = samples.iter().filter(|(v, u)| *u && *v >= c_hat).count();
    let rate = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    LevelSeparationReport {
        n_safe,
        n_unsafe,
        safe_below_chat_rate: rate(safe_below, n_safe),
        unsafe_at_or_above_chat_rate: rate(unsafe_above, n_unsafe),
    }
}

/// Classifies `V` at every visited state of the plan's rollouts against `c_hat`.
pub fn check_level_separation<C: Certified + ?Sized, R: Rng + ?Sized>(
    env: &NavEnv,
    ctrl: &C,
    plan: &SamplePlan,
    c_hat: f64,
    rng: &mut R,
) -> Result<LevelSeparationReport> {
    let mut samples = Vec::new();
    for &s0 in &plan.safe_starts {
        let t = rollout(env, ctrl, s0, true, rng)?;
        samples.extend(t.rows.iter().map(|r| (r.value, r.in_unsafe)));
    }
    for &(s0, a) in &plan.unsafe_probes {
        let mut s = s0;
        for _ in 0..=env.config().max_steps {
            let u = env.in_unsafe(&s);
            samples.push((ctrl.value(&s)?, u));
            if u || env.in_goal(&s) {
                break;
            }
            s = env.step(&s, &a).next_state;
        }
    }
    Ok(level_separation_from(&samples, c_hat))
}
