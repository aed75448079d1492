//! Model-based CLF-CBF quadratic-program controller used as a baseline.
//!
//! The CLF is the squared weighted goal distance; each obstacle contributes a
//! hard CBF row built from the distance to its rectangle. Both conditions are
//! discrete-time and linearized over one step of a single integrator.

pub mod solver;

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::clbf_validate::{rollout, Certified, Trajectory};
use crate::env2d::{Action, NavEnv, Rect, State};
use crate::error::{Error, Result};

pub use solver::{solve_qp, QpProblem, QpSolution, MAX_ROWS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QpConfig {
    /// Required fractional CLF decrease per step.
    pub clf_rate: f64,
    /// Allowed fractional CBF decay per step.
    pub cbf_eta: f64,
    pub slack_weight: f64,
    pub margin: f64,
    /// Proportional gain of the goal-directed nominal velocity.
    pub nominal_gain: f64,
    /// Start positions of the baseline sweep: `grid_n x grid_n` points
    /// spanning this rectangle.
    pub start_region: Rect,
    pub grid_n: usize,
    /// Final goal distance above which a violation-free run counts as stalled.
    pub stall_distance: f64,
}

impl Default for QpConfig {
    fn default() -> Self {
        Self {
            clf_rate: 0.05,
            cbf_eta: 0.2,
            slack_weight: 1e3,
            margin: 0.05,
            nominal_gain: 1.0,
            start_region: Rect::new(-0.9, 1.9, 0.05, 1.75),
            grid_n: 5,
            stall_distance: 0.5,
        }
    }
}

impl QpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("qp.{m}")));
        if !(self.clf_rate >= 0.0 && self.clf_rate <= 1.0) {
            return bad("clf_rate must lie in [0, 1]");
        }
        if !(self.cbf_eta > 0.0 && self.cbf_eta <= 1.0) {
            return bad("cbf_eta must lie in (0, 1]");
        }
        if !(self.slack_weight > 0.0) {
            return bad("slack_weight must be positive");
        }
        if !(self.margin >= 0.0) {
            return bad("margin must be nonnegative");
        }
        if !(self.nominal_gain > 0.0) {
            return bad("nominal_gain must be positive");
        }
        if self.grid_n == 0 {
            return bad("grid_n must be positive");
        }
        if !(self.start_region.x_min <= self.start_region.x_max && self.start_region.y_min <= self.start_region.y_max) {
            return bad("start_region is empty");
        }
        Ok(())
    }
}

/// `4 (px - gx)^2 + (py - gy)^2`.
pub fn clf_value(s: &State, goal: [f64; 2]) -> f64 {
    let (dx, dy) = (s.px - goal[0], s.py - goal[1]);
    4.0 * dx * dx + dy * dy
}

pub fn clf_gradient(s: &State, goal: [f64; 2]) -> [f64; 2] {
    [8.0 * (s.px - goal[0]), 2.0 * (s.py - goal[1])]
}

/// Distance from `p` to the closed rectangle minus `margin`.
pub fn cbf_value(p: [f64; 2], rect: &Rect, margin: f64) -> f64 {
    let (cx, cy) = rect.closest_point(p[0], p[1]);
    (p[0] - cx).hypot(p[1] - cy) - margin
}

/// Unit direction away from the rectangle; zero inside it.
pub fn cbf_gradient(p: [f64; 2], rect: &Rect) -> [f64; 2] {
    let (cx, cy) = rect.closest_point(p[0], p[1]);
    let d = (p[0] - cx).hypot(p[1] - cy);
    if d > 0.0 {
        [(p[0] - cx) / d, (p[1] - cy) / d]
    } else {
        [0.0, 0.0]
    }
}

/// Goal-directed velocity clipped to the action box.
pub fn nominal_action(env: &NavEnv, s: &State, cfg: &QpConfig) -> Action {
    let g = env.config().goal_center;
    env.clamp_action(Action::new(
        cfg.nominal_gain * (g[0] - s.px),
        cfg.nominal_gain * (g[1] - s.py),
    ))
}

/// QP over `(ax, ay, slack)` at state `s`.
pub fn build_problem(env: &NavEnv, s: &State, cfg: &QpConfig) -> QpProblem {
    let ec = env.config();
    let dt = ec.dt;
    let a_nom = nominal_action(env, s, cfg);
    let mut rows = Vec::with_capacity(1 + ec.obstacles.len());
    let v = clf_value(s, ec.goal_center);
    let gv = clf_gradient(s, ec.goal_center);
    rows.push(([gv[0] * dt, gv[1] * dt, -1.0], -cfg.clf_rate * v));
    let p = s.position();
    for o in &ec.obstacles {
        let h = cbf_value(p, o, cfg.margin);
        let gh = cbf_gradient(p, o);
        rows.push(([-gh[0] * dt, -gh[1] * dt, 0.0], cfg.cbf_eta * h));
    }
    let b = ec.action_bound;
    QpProblem {
        h: [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0 * cfg.slack_weight]],
        f: [-2.0 * a_nom.vx_des, -2.0 * a_nom.vy_des, 0.0],
        rows,
        action_lb: [-b[0], -b[1]],
        action_ub: b,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerStep {
    pub action: Action,
    pub solution: QpSolution,
}

/// Solves the step QP; an infeasible QP yields the zero action.
pub fn qp_controller_step(env: &NavEnv, s: &State, cfg: &QpConfig) -> Result<ControllerStep> {
    let p = build_problem(env, s, cfg);
    let solution = solve_qp(&p)?;
    let action = if solution.feasible {
        env.clamp_action(Action::new(solution.x[0], solution.x[1]))
    } else {
        Action::default()
    };
    Ok(ControllerStep { action, solution })
}

/// The QP controller with `V` reported as the CLF; counts infeasible steps.
pub struct QpController<'a> {
    pub env: &'a NavEnv,
    pub cfg: &'a QpConfig,
    infeasible: Cell<usize>,
}

impl<'a> QpController<'a> {
    pub fn new(env: &'a NavEnv, cfg: &'a QpConfig) -> Self {
        Self {
            env,
            cfg,
            infeasible: Cell::new(0),
        }
    }

    pub fn infeasible_steps(&self) -> usize {
        self.infeasible.get()
    }
}

impl Certified for QpController<'_> {
    fn action(&self, s: &State) -> Result<Action> {
        let step = qp_controller_step(self.env, s, self.cfg)?;
        if !step.solution.feasible {
            self.infeasible.set(self.infeasible.get() + 1);
        }
        Ok(step.action)
    }

    fn value(&self, s: &State) -> Result<f64> {
        Ok(clf_value(s, self.env.config().goal_center))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartOutcome {
    Reached,
    /// No violation and still farther than the stall distance from the goal.
    Stalled,
    Violated,
    /// Horizon exhausted within the stall distance.
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub start: [f64; 2],
    pub outcome: StartOutcome,
    pub steps: usize,
    pub final_goal_distance: f64,
    pub infeasible_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub n: usize,
    pub reached: usize,
    pub stalled: usize,
    pub violated: usize,
    pub timeout: usize,
    pub starts: Vec<StartRecord>,
}

pub fn start_grid(cfg: &QpConfig) -> Vec<State> {
    let r = cfg.start_region;
    let n = cfg.grid_n;
    let at = |lo: f64, hi: f64, k: usize| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(State::at(at(r.x_min, r.x_max, i), at(r.y_min, r.y_max, j)));
        }
    }
    out
}

/// Closed-loop rollouts of the QP controller from every start of the grid.
pub fn run_baseline(env: &NavEnv, cfg: &QpConfig) -> Result<(Vec<Trajectory>, BaselineSummary)> {
    cfg.validate()?;
    let mut trajs = Vec::new();
    let mut starts = Vec::new();
    // The controller is deterministic; the generator is never drawn from.
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    for s0 in start_grid(cfg) {
        let ctrl = QpController::new(env, cfg);
        let t = rollout(env, &ctrl, s0, true, &mut rng)?;
        let last = t.rows.last().map_or(s0, |r| r.state);
        let g = env.config().goal_center;
        let dist = (last.px - g[0]).hypot(last.py - g[1]);
        let outcome = if t.violated {
            StartOutcome::Violated
        } else if t.reached {
            StartOutcome::Reached
        } else if dist > cfg.stall_distance {
            StartOutcome::Stalled
        } else {
            StartOutcome::Timeout
        };
        starts.push(StartRecord {
            start: s0.position(),
            outcome,
            steps: t.steps(),
            final_goal_distance: dist,
            infeasible_steps: ctrl.infeasible_steps(),
        });
        trajs.push(t);
    }
    let count = |o: StartOutcome| starts.iter().filter(|r| r.outcome == o).count();
    let summary = BaselineSummary {
        n: starts.len(),
        reached: count(StartOutcome::Reached),
        stalled: count(StartOutcome::Stalled),
        violated: count(StartOutcome::Violated),
        timeout: count(StartOutcome::Timeout),
        starts,
    };
    Ok((trajs, summary))
}
