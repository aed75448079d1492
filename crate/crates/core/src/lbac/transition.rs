use rand::Rng;

use crate::env2d::{Action, NavEnv, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Goal,
    Unsafe,
    Interior,
}

/// A stored tuple after the goal/unsafe rewrite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: State,
    pub a: Action,
    pub c: f64,
    pub s_next: State,
    pub kind: TransitionKind,
    pub ind_s: u8,
    pub ind_s_next: u8,
}

impl Transition {
    /// Checks the rewrite invariants against the environment geometry.
    pub fn is_consistent(&self, env: &NavEnv) -> bool {
        let indicators =
            self.ind_s == env.indicator_delta(&self.s) && self.ind_s_next == env.indicator_delta(&self.s_next);
        let branch = match self.kind {
            TransitionKind::Goal => self.c == 0.0 && self.s_next == self.s && env.in_goal(&self.s),
            TransitionKind::Unsafe => {
                self.c == env.config().terminal_cost && self.s_next == self.s && env.in_unsafe(&self.s)
            }
            TransitionKind::Interior => !env.in_goal(&self.s) && !env.in_unsafe(&self.s),
        };
        indicators && branch
    }
}

/// Rewrites a raw environment tuple by the membership of `s`: goal states
/// become zero-cost self loops, unsafe states become self loops with the
/// terminal cost, and interior tuples pass through.
pub fn rewrite_tuple(env: &NavEnv, s: State, a: Action, c_raw: f64, s_next: State) -> Transition {
    let (kind, c, s_next) = if env.in_goal(&s) {
        (TransitionKind::Goal, 0.0, s)
    } else if env.in_unsafe(&s) {
        (TransitionKind::Unsafe, env.config().terminal_cost, s)
    } else {
        (TransitionKind::Interior, c_raw, s_next)
    };
    Transition {
        s,
        a,
        c,
        s_next,
        kind,
        ind_s: env.indicator_delta(&s),
        ind_s_next: env.indicator_delta(&s_next),
    }
}

/// Fixed-capacity ring store with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample with replacement into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, out: &mut Batch) {
        out.clear();
        if self.items.is_empty() {
            return;
        }
        for _ in 0..n {
            out.push(&self.items[rng.random_range(0..self.items.len())]);
        }
    }
}

/// Structure-of-arrays minibatch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub s: Vec<State>,
    pub a: Vec<Action>,
    pub c: Vec<f64>,
    pub s_next: Vec<State>,
    pub ind_s: Vec<f64>,
    pub ind_next: Vec<f64>,
}

impl Batch {
    pub fn from_transitions<'a>(ts: impl IntoIterator<Item = &'a Transition>) -> Self {
        let mut b = Batch::default();
        for t in ts {
            b.push(t);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn clear(&mut self) {
        self.s.clear();
        self.a.clear();
        self.c.clear();
        self.s_next.clear();
        self.ind_s.clear();
        self.ind_next.clear();
    }

    pub fn push(&mut self, t: &Transition) {
        self.s.push(t.s);
        self.a.push(t.a);
        self.c.push(t.c);
        self.s_next.push(t.s_next);
        self.ind_s.push(f64::from(t.ind_s));
        self.ind_next.push(f64::from(t.ind_s_next));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env2d::EnvConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> NavEnv {
        NavEnv::new(EnvConfig::default()).unwrap()
    }

    #[test]
    fn goal_branch_is_zero_cost_self_loop() {
        let e = env();
        let s = State::new(0.05, 0.55, 0.1, 0.0);
        let t = rewrite_tuple(&e, s, Action::new(0.2, 0.0), 0.7, State::at(0.07, 0.55));
        assert_eq!(t.kind, TransitionKind::Goal);
        assert_eq!(t.c, 0.0);
        assert_eq!(t.s_next, s);
        assert_eq!((t.ind_s, t.ind_s_next), (0, 0));
        assert!(t.is_consistent(&e));
    }

    #[test]
    fn unsafe_branch_uses_terminal_cost() {
        let e = env();
        let s = State::at(0.75, 0.5);
        let t = rewrite_tuple(&e, s, Action::default(), 1.5, State::at(0.8, 0.5));
        assert_eq!(t.kind, TransitionKind::Unsafe);
        assert_eq!(t.c, 2000.0);
        assert_eq!(t.s_next, s);
        assert!(t.is_consistent(&e));
    }

    #[test]
    fn interior_branch_passes_through() {
        let e = env();
        let s = State::at(-0.5, 0.5);
        let n = State::at(-0.48, 0.5);
        let t = rewrite_tuple(&e, s, Action::new(0.2, 0.0), 1.7, n);
        assert_eq!(t.kind, TransitionKind::Interior);
        assert_eq!((t.c, t.s_next), (1.7, n));
        assert_eq!(t.ind_s, 1);
        assert!(t.is_consistent(&e));
    }

    #[test]
    fn ring_buffer_overwrites_oldest() {
        let e = env();
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(rewrite_tuple(&e, State::at(-0.5, 0.1 * i as f64 + 0.5), Action::default(), i as f64, State::at(-0.5, 1.0)));
        }
        assert_eq!(buf.len(), 3);
        let costs: Vec<f64> = buf.iter().map(|t| t.c).collect();
        assert_eq!(costs, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn sampling_is_seeded_and_covers_contents() {
        let e = env();
        let mut buf = ReplayBuffer::new(10);
        for i in 0..4 {
            buf.push(rewrite_tuple(&e, State::at(-0.5, 0.9), Action::default(), i as f64, State::at(-0.5, 1.0)));
        }
        let mut a = Batch::default();
        let mut b = Batch::default();
        buf.sample_into(&mut ChaCha8Rng::seed_from_u64(1), 4000, &mut a);
        buf.sample_into(&mut ChaCha8Rng::seed_from_u64(1), 4000, &mut b);
        assert_eq!(a, b);
        for k in 0..4 {
            let n = a.c.iter().filter(|&&c| c == k as f64).count();
            assert!((800..1200).contains(&n), "value {k} drawn {n} times");
        }
    }
}
