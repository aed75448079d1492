use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clbf_validate::Certified;
use crate::env2d::{Action, NavEnv, State};
use crate::error::Result;

pub const TRAJECTORY_CSV_HEADER: &str = "t,px,py,vx,vy,ax,ay,cost,V,in_goal,in_unsafe";

/// One row of a trajectory: the state at time `t`, the action applied there
/// and the cost it incurred. The terminal row carries a zero action and cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub t: usize,
    pub state: State,
    pub action: Action,
    pub cost: f64,
    pub value: f64,
    pub in_goal: bool,
    pub in_unsafe: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<StepLog>,
    pub reached: bool,
    pub violated: bool,
}

impl Trajectory {
    /// Environment steps taken.
    pub fn steps(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn total_cost(&self) -> f64 {
        self.rows.iter().map(|r| r.cost).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let s = r.state;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                s.px,
                s.py,
                s.vx,
                s.vy,
                r.action.vx_des,
                r.action.vy_des,
                r.cost,
                r.value,
                u8::from(r.in_goal),
                u8::from(r.in_unsafe)
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub n: usize,
    pub reach_rate: f64,
    pub violation_rate: f64,
    /// Mean steps over trajectories that reached the goal.
    pub mean_steps_to_goal: Option<f64>,
}

impl RolloutSummary {
    pub fn from_trajectories(trajs: &[Trajectory]) -> Self {
        let n = trajs.len();
        let reached: Vec<usize> = trajs.iter().filter(|t| t.reached).map(Trajectory::steps).collect();
        let violated = trajs.iter().filter(|t| t.violated).count();
        let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        Self {
            n,
            reach_rate: rate(reached.len()),
            violation_rate: rate(violated),
            mean_steps_to_goal: (!reached.is_empty())
                .then(|| reached.iter().sum::<usize>() as f64 / reached.len() as f64),
        }
    }
}

/// Rolls `ctrl` from `start` until goal, unsafe set or the horizon.
/// With `deterministic` false actions are sampled with noise from `rng`.
pub fn rollout<C: Certified + ?Sized, R: Rng + ?Sized>(
    env: &NavEnv,
    ctrl: &C,
    start: State,
    deterministic: bool,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut rows = Vec::new();
    let mut s = start;
    let mut reached = env.in_goal(&s);
    let mut violated = env.in_unsafe(&s);
    let mut t = 0;
    while !reached && !violated && t < env.config().max_steps {
        let a = if deterministic {
            ctrl.action(&s)?
        } else {
            let eps = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
            ctrl.sample_action(&s, eps)?
        };
        let a = env.clamp_action(a);
        let r = env.step(&s, &a);
        rows.push(StepLog {
            t,
            state: s,
            action: a,
            cost: r.cost,
            value: ctrl.value(&s)?,
            in_goal: env.in_goal(&s),
            in_unsafe: env.in_unsafe(&s),
        });
        reached = r.in_goal;
        violated = r.in_unsafe;
        s = r.next_state;
        t += 1;
    }
    rows.push(StepLog {
        t,
        state: s,
        action: Action::default(),
        cost: 0.0,
        value: ctrl.value(&s)?,
        in_goal: env.in_goal(&s),
        in_unsafe: env.in_unsafe(&s),
    });
    Ok(Trajectory {
        rows,
        reached,
        violated,
    })
}

pub fn rollout_eval<C: Certified + ?Sized, R: Rng + ?Sized>(
    env: &NavEnv,
    ctrl: &C,
    starts: &[State],
    deterministic: bool,
    rng: &mut R,
) -> Result<(Vec<Trajectory>, RolloutSummary)> {
    let trajs = starts
        .iter()
        .map(|&s| rollout(env, ctrl, s, deterministic, rng))
        .collect::<Result<Vec<_>>>()?;
    let summary = RolloutSummary::from_trajectories(&trajs);
    Ok((trajs, summary))
}
