//! Independent QP oracle: dense search over the action box with the slack
//! minimized exactly for each action, refined by repeated zooming around the
//! incumbent.

use lbac_core::clf_cbf_qp::QpProblem;
use rand::Rng;

/// Best slack and objective for fixed action `(a0, a1)`, or `None` when no
/// slack satisfies the rows.
pub fn best_slack(p: &QpProblem, a0: f64, a1: f64) -> Option<(f64, [f64; 3])> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (r, b) in &p.rows {
        let rest = b - r[0] * a0 - r[1] * a1;
        if r[2] > 0.0 {
            hi = hi.min(rest / r[2]);
        } else if r[2] < 0.0 {
            lo = lo.max(rest / r[2]);
        } else if rest < -1e-12 {
            return None;
        }
    }
    if lo > hi {
        return None;
    }
    let lin = p.f[2] + p.h[0][2] * a0 + p.h[1][2] * a1;
    let e = (-lin / p.h[2][2]).clamp(lo, hi);
    let x = [a0, a1, e];
    Some((p.objective(&x), x))
}

fn scan(p: &QpProblem, x0: f64, x1: f64, y0: f64, y1: f64, n: usize) -> Option<(f64, [f64; 3])> {
    let mut best: Option<(f64, [f64; 3])> = None;
    for i in 0..n {
        let a0 = x0 + (x1 - x0) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let a1 = y0 + (y1 - y0) * j as f64 / (n - 1) as f64;
            if let Some(c) = best_slack(p, a0, a1) {
                if best.is_none_or(|b| c.0 < b.0) {
                    best = Some(c);
                }
            }
        }
    }
    best
}

/// 201 x 201 scan of the action box, then zoom rounds of 41 x 41 on a
/// window centred on the incumbent. The window starts four cells wide and
/// halves only after a round that fails to improve.
pub fn grid_oracle(p: &QpProblem) -> Option<(f64, [f64; 3])> {
    let n = 201;
    let (lb, ub) = (p.action_lb, p.action_ub);
    let mut best = scan(p, lb[0], ub[0], lb[1], ub[1], n)?;
    let mut hx = 2.0 * (ub[0] - lb[0]) / (n - 1) as f64;
    let mut hy = 2.0 * (ub[1] - lb[1]) / (n - 1) as f64;
    for _ in 0..400 {
        if hx < 1e-12 && hy < 1e-12 {
            break;
        }
        let c = best.1;
        let w = scan(
            p,
            (c[0] - hx).max(lb[0]),
            (c[0] + hx).min(ub[0]),
            (c[1] - hy).max(lb[1]),
            (c[1] + hy).min(ub[1]),
            41,
        );
        match w {
            Some(w) if w.0 < best.0 => best = w,
            _ => {
                hx /= 2.0;
                hy /= 2.0;
            }
        }
    }
    Some(best)
}

/// Random strictly convex problem with up to six rows, feasible by
/// construction around a random interior point.
pub fn random_problem<R: Rng>(rng: &mut R) -> QpProblem {
    let mut l = [[0.0; 3]; 3];
    for row in l.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    // L L^T + 0.2 I; products are formed in the same order for (i, j) and
    // (j, i), so the result is exactly symmetric.
    let mut h = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            h[i][j] = (0..3).map(|k| l[i][k] * l[j][k]).sum::<f64>() + if i == j { 0.2 } else { 0.0 };
        }
    }
    let f = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
    let half = [rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)];
    let xf = [
        rng.random_range(-0.8 * half[0]..0.8 * half[0]),
        rng.random_range(-0.8 * half[1]..0.8 * half[1]),
        rng.random_range(-1.0..1.0),
    ];
    let n_rows = rng.random_range(0..=6);
    let rows = (0..n_rows)
        .map(|_| {
            let slack = if rng.random_bool(0.5) { rng.random_range(-1.0..1.0) } else { 0.0 };
            let r = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), slack];
            let b = r[0] * xf[0] + r[1] * xf[1] + r[2] * xf[2] + rng.random_range(0.0..0.3);
            (r, b)
        })
        .collect();
    QpProblem {
        h,
        f,
        rows,
        action_lb: [-half[0], -half[1]],
        action_ub: half,
    }
}
