//! Planar quadrotor navigation task.
//!
//! The vehicle is modelled as a point mass whose velocity tracks the commanded
//! velocity with a first-order lag (`tau_v`) and whose position is integrated
//! with forward Euler. All states are clamped to the state box after each step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kinematic state `[px, py, vx, vy]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
}

impl State {
    pub const DIM: usize = 4;

    pub fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        Self { px, py, vx, vy }
    }

    /// A resting state at `(px, py)`.
    pub fn at(px: f64, py: f64) -> Self {
        Self::new(px, py, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.px, self.py, self.vx, self.vy]
    }

    pub fn position(self) -> [f64; 2] {
        [self.px, self.py]
    }
}

/// Commanded velocity `[vx_des, vy_des]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub vx_des: f64,
    pub vy_des: f64,
}

impl Action {
    pub const DIM: usize = 2;

    pub fn new(vx_des: f64, vy_des: f64) -> Self {
        Self { vx_des, vy_des }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.vx_des, self.vy_des]
    }
}

/// Closed axis-aligned rectangle, serialized as `[x_min, x_max, y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for Rect {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x_min, r.x_max, r.y_min, r.y_max]
    }
}

impl Rect {
    pub const fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    /// Closest point of the rectangle to `(x, y)`.
    pub fn closest_point(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.x_min, self.x_max), y.clamp(self.y_min, self.y_max))
    }

    fn is_valid(&self) -> bool {
        [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }

    /// True when the closed rectangle and the closed disk share a point.
    fn touches_disk(&self, center: [f64; 2], radius: f64) -> bool {
        let (cx, cy) = self.closest_point(center[0], center[1]);
        (cx - center[0]).hypot(cy - center[1]) <= radius
    }
}

/// Where episodes start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitRegion {
    /// Uniform over a position box, rejecting obstacle and goal positions.
    Box { bounds: Rect },
    /// Uniform choice among a finite list of `(px, py)` start points.
    Points { points: Vec<[f64; 2]> },
}

impl Default for InitRegion {
    fn default() -> Self {
        InitRegion::Box {
            bounds: Rect::new(-0.9, 1.9, 0.05, 1.75),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub tau_v: f64,
    pub obstacles: Vec<Rect>,
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
    pub terminal_cost: f64,
    /// Lower corner of the state box `[px, py, vx, vy]`.
    pub state_lb: [f64; 4],
    pub state_ub: [f64; 4],
    /// Symmetric bound on each action component.
    pub action_bound: [f64; 2],
    pub init_region: InitRegion,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            max_steps: 200,
            tau_v: 0.3,
            obstacles: vec![Rect::new(0.5, 1.0, 0.2, 1.0), Rect::new(-1.0, 0.0, 1.3, 1.8)],
            goal_center: [0.0, 0.5],
            goal_radius: 0.3,
            terminal_cost: 2000.0,
            state_lb: [-1.0, 0.0, -0.25, -0.25],
            state_ub: [2.0, 1.8, 0.25, 0.25],
            action_bound: [0.25, 0.25],
            init_region: InitRegion::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("env.dt must be positive, got {}", self.dt));
        }
        if self.max_steps == 0 {
            return bad("env.max_steps must be at least 1".into());
        }
        if !(self.tau_v >= 0.0 && self.tau_v.is_finite()) {
            return bad(format!("env.tau_v must be nonnegative, got {}", self.tau_v));
        }
        if !(self.goal_radius > 0.0) {
            return bad(format!("env.goal_radius must be positive, got {}", self.goal_radius));
        }
        if !(self.terminal_cost > 0.0 && self.terminal_cost.is_finite()) {
            return bad(format!("env.terminal_cost must be positive, got {}", self.terminal_cost));
        }
        for i in 0..4 {
            if !(self.state_lb[i] < self.state_ub[i]) {
                return bad(format!("env state bound {i} is empty"));
            }
        }
        if self.action_bound.iter().any(|b| !(*b > 0.0)) {
            return bad("env.action_bound components must be positive".into());
        }
        for (i, r) in self.obstacles.iter().enumerate() {
            if !r.is_valid() {
                return bad(format!("obstacle {i} is not a valid rectangle"));
            }
            if r.touches_disk(self.goal_center, self.goal_radius) {
                return bad(format!("obstacle {i} intersects the goal disk"));
            }
        }
        match &self.init_region {
            InitRegion::Box { bounds } if !bounds.is_valid() => {
                bad("init_region box is not a valid rectangle".into())
            }
            InitRegion::Points { points } if points.is_empty() => {
                bad("init_region point list is empty".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next_state: State,
    pub cost: f64,
    pub in_goal: bool,
    pub in_unsafe: bool,
    pub truncated: bool,
}

/// The navigation task. Holds only configuration; episodes are driven by the
/// caller through [`NavEnv::reset`] and [`NavEnv::step`].
#[derive(Debug, Clone)]
pub struct NavEnv {
    cfg: EnvConfig,
}

impl NavEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// `sqrt(4 px^2 + (py - gy)^2)`; the x-axis carries weight 4.
    pub fn cost(&self, s: &State) -> f64 {
        let dx = s.px - self.cfg.goal_center[0];
        let dy = s.py - self.cfg.goal_center[1];
        (4.0 * dx * dx + dy * dy).sqrt()
    }

    pub fn in_goal(&self, s: &State) -> bool {
        let dx = s.px - self.cfg.goal_center[0];
        let dy = s.py - self.cfg.goal_center[1];
        dx.hypot(dy) <= self.cfg.goal_radius
    }

    pub fn in_unsafe(&self, s: &State) -> bool {
        self.cfg.obstacles.iter().any(|r| r.contains(s.px, s.py))
    }

    /// 1 on the interior set (neither goal nor unsafe), else 0.
    pub fn indicator_delta(&self, s: &State) -> u8 {
        u8::from(!(self.in_goal(s) || self.in_unsafe(s)))
    }

    pub fn clamp_action(&self, a: Action) -> Action {
        let b = self.cfg.action_bound;
        Action::new(a.vx_des.clamp(-b[0], b[0]), a.vy_des.clamp(-b[1], b[1]))
    }

    pub fn clamp_state(&self, s: State) -> State {
        let (lb, ub) = (self.cfg.state_lb, self.cfg.state_ub);
        State::new(
            s.px.clamp(lb[0], ub[0]),
            s.py.clamp(lb[1], ub[1]),
            s.vx.clamp(lb[2], ub[2]),
            s.vy.clamp(lb[3], ub[3]),
        )
    }

    /// One control period. `truncated` is never set here; horizon accounting
    /// belongs to the episode driver, see [`NavEnv::step_at`].
    pub fn step(&self, s: &State, a: &Action) -> StepResult {
        let a = self.clamp_action(*a);
        let dt = self.cfg.dt;
        // tau_v = 0 means perfect tracking.
        let gain = if self.cfg.tau_v > 0.0 {
            (dt / self.cfg.tau_v).min(1.0)
        } else {
            1.0
        };
        let lb = self.cfg.state_lb;
        let ub = self.cfg.state_ub;
        let vx = (s.vx + gain * (a.vx_des - s.vx)).clamp(lb[2], ub[2]);
        let vy = (s.vy + gain * (a.vy_des - s.vy)).clamp(lb[3], ub[3]);
        let next = self.clamp_state(State::new(s.px + vx * dt, s.py + vy * dt, vx, vy));
        StepResult {
            next_state: next,
            cost: self.cost(&next),
            in_goal: self.in_goal(&next),
            in_unsafe: self.in_unsafe(&next),
            truncated: false,
        }
    }

    /// [`NavEnv::step`] taken as step number `t` (0-based) of an episode;
    /// sets `truncated` when the horizon is exhausted without termination.
    pub fn step_at(&self, s: &State, a: &Action, t: usize) -> StepResult {
        let mut r = self.step(s, a);
        r.truncated = t + 1 >= self.cfg.max_steps && !r.in_goal && !r.in_unsafe;
        r
    }

    /// Samples a resting start state from the configured initial region.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<State> {
        self.reset_from(rng, &self.cfg.init_region)
    }

    pub fn reset_from<R: Rng + ?Sized>(&self, rng: &mut R, region: &InitRegion) -> Result<State> {
        const MAX_ATTEMPTS: usize = 10_000;
        match region {
            InitRegion::Points { points } => {
                if points.is_empty() {
                    return Err(Error::InitRegion("empty start point list".into()));
                }
                let p = points[rng.random_range(0..points.len())];
                Ok(self.clamp_state(State::at(p[0], p[1])))
            }
            InitRegion::Box { bounds } => {
                for _ in 0..MAX_ATTEMPTS {
                    let x = sample_interval(rng, bounds.x_min, bounds.x_max);
                    let y = sample_interval(rng, bounds.y_min, bounds.y_max);
                    let s = self.clamp_state(State::at(x, y));
                    if !self.in_unsafe(&s) && !self.in_goal(&s) {
                        return Ok(s);
                    }
                }
                Err(Error::InitRegion(format!(
                    "no admissible start found in {bounds:?} after {MAX_ATTEMPTS} draws"
                )))
            }
        }
    }
}

fn sample_interval<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> NavEnv {
        NavEnv::new(EnvConfig::default()).unwrap()
    }

    fn perfect_tracking() -> NavEnv {
        NavEnv::new(EnvConfig {
            tau_v: 0.0,
            ..EnvConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn cost_examples() {
        let e = env();
        assert_eq!(e.cost(&State::new(0.0, 0.5, 0.3, -0.1)), 0.0);
        assert_eq!(e.cost(&State::new(1.0, 0.5, 0.0, 0.0)), 2.0);
        let corner = e.cost(&State::new(-1.0, 1.8, 0.0, 0.0));
        assert!((corner - 5.69f64.sqrt()).abs() < 1e-12);
        assert!((corner - 2.3854).abs() < 1e-4);
    }

    #[test]
    fn goal_membership() {
        let e = env();
        assert!(e.in_goal(&State::at(0.0, 0.5)));
        assert!(e.in_goal(&State::at(0.1, 0.6)));
        assert!(!e.in_goal(&State::at(0.5, 0.5)));
    }

    #[test]
    fn obstacle_membership_is_closed() {
        let e = env();
        assert!(e.in_unsafe(&State::at(0.75, 0.5)));
        assert!(e.in_unsafe(&State::at(0.5, 0.2)));
        assert!(e.in_unsafe(&State::at(-1.0, 1.8)));
        assert!(!e.in_unsafe(&State::at(0.25, 0.5)));
        assert!(!e.in_unsafe(&State::at(0.5, 0.1999)));
    }

    #[test]
    fn indicator_examples() {
        let e = env();
        assert_eq!(e.indicator_delta(&State::at(0.0, 0.5)), 0);
        assert_eq!(e.indicator_delta(&State::at(0.75, 0.5)), 0);
        assert_eq!(e.indicator_delta(&State::at(-0.5, 0.5)), 1);
    }

    #[test]
    fn goal_is_a_fixed_point() {
        let r = env().step(&State::at(0.0, 0.5), &Action::new(0.0, 0.0));
        assert_eq!(r.next_state, State::at(0.0, 0.5));
        assert_eq!(r.cost, 0.0);
        assert!(r.in_goal && !r.in_unsafe);
    }

    #[test]
    fn perfect_tracking_single_step() {
        let r = perfect_tracking().step(&State::at(0.0, 0.5), &Action::new(0.25, 0.0));
        let n = r.next_state;
        assert!((n.px - 0.025).abs() < 1e-15);
        assert_eq!(n.py, 0.5);
        assert_eq!(n.vx, 0.25);
        assert_eq!(n.vy, 0.0);
    }

    #[test]
    fn approaching_wall_enters_obstacle_within_two_steps() {
        let e = perfect_tracking();
        let a = Action::new(0.25, 0.0);
        let r1 = e.step(&State::new(0.45, 0.5, 0.25, 0.0), &a);
        assert!((r1.next_state.px - 0.475).abs() < 1e-12);
        assert!(!r1.in_unsafe);
        let r2 = e.step(&r1.next_state, &a);
        assert!(r2.next_state.px >= 0.5);
        assert!(r2.in_unsafe);
        assert_eq!(r2.cost, e.cost(&r2.next_state));
    }

    #[test]
    fn horizon_sets_truncated() {
        let e = env();
        let s = State::at(1.5, 1.5);
        let a = Action::default();
        assert!(!e.step_at(&s, &a, 198).truncated);
        assert!(e.step_at(&s, &a, 199).truncated);
    }

    #[test]
    fn reset_singleton_and_determinism() {
        let e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = InitRegion::Points {
            points: vec![[1.5, 0.5]],
        };
        assert_eq!(e.reset_from(&mut rng, &pts).unwrap(), State::at(1.5, 0.5));

        let a = e.reset(&mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = e.reset(&mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reset_samples_avoid_obstacles_and_goal() {
        let e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let whole = InitRegion::Box {
            bounds: Rect::new(-1.0, 2.0, 0.0, 1.8),
        };
        for _ in 0..1000 {
            let s = e.reset_from(&mut rng, &whole).unwrap();
            assert!(!e.in_unsafe(&s));
            assert!(!e.in_goal(&s));
            assert_eq!((s.vx, s.vy), (0.0, 0.0));
        }
    }

    #[test]
    fn reset_rejects_region_inside_obstacle() {
        let e = env();
        let inside = InitRegion::Box {
            bounds: Rect::new(0.6, 0.9, 0.3, 0.9),
        };
        let err = e.reset_from(&mut ChaCha8Rng::seed_from_u64(1), &inside);
        assert!(matches!(err, Err(Error::InitRegion(_))));
    }

    #[test]
    fn config_rejects_obstacle_over_goal() {
        let mut cfg = EnvConfig::default();
        cfg.obstacles.push(Rect::new(0.2, 0.4, 0.4, 0.6));
        assert!(NavEnv::new(cfg).is_err());
        let cfg = EnvConfig {
            dt: 0.0,
            ..EnvConfig::default()
        };
        assert!(NavEnv::new(cfg).is_err());
    }

    #[test]
    fn rect_serializes_as_four_scalars() {
        let r = Rect::new(0.5, 1.0, 0.2, 1.0);
        assert_eq!(serde_json::to_string(&r).unwrap(), "[0.5,1.0,0.2,1.0]");
    }

    proptest! {
        #[test]
        fn step_output_stays_in_box(
            px in -5.0f64..5.0, py in -5.0f64..5.0,
            vx in -3.0f64..3.0, vy in -3.0f64..3.0,
            ax in -3.0f64..3.0, ay in -3.0f64..3.0,
        ) {
            let e = env();
            let n = e.step(&State::new(px, py, vx, vy), &Action::new(ax, ay)).next_state;
            prop_assert!((-1.0..=2.0).contains(&n.px));
            prop_assert!((0.0..=1.8).contains(&n.py));
            prop_assert!(n.vx.abs() <= 0.25 && n.vy.abs() <= 0.25);
        }

        #[test]
        fn indicator_matches_membership(px in -1.0f64..2.0, py in 0.0f64..1.8) {
            let e = env();
            let s = State::at(px, py);
            let expected = 1 - u8::from(e.in_goal(&s)).max(u8::from(e.in_unsafe(&s)));
            prop_assert_eq!(e.indicator_delta(&s), expected);
            prop_assert!(!(e.in_goal(&s) && e.in_unsafe(&s)));
        }

        #[test]
        fn cost_is_nonnegative_and_zero_only_at_goal(px in -1.0f64..2.0, py in 0.0f64..1.8) {
            let c = env().cost(&State::at(px, py));
            prop_assert!(c >= 0.0);
            if c == 0.0 {
                prop_assert!(px == 0.0 && py == 0.5);
            }
        }

        #[test]
        fn trajectories_are_reproducible(seed in 0u64..1000, ax in -0.25f64..0.25, ay in -0.25f64..0.25) {
            let e = env();
            let run = || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = e.reset(&mut rng).unwrap();
                let mut out = Vec::new();
                for _ in 0..20 {
                    s = e.step(&s, &Action::new(ax, ay)).next_state;
                    out.push(s);
                }
                out
            };
            prop_assert_eq!(run(), run());
        }
    }
}
