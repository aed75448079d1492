//! Exact solver for strictly convex QPs in three variables.
//!
//! minimize `0.5 x'Hx + f'x` subject to `row_i . x <= b_i` and box bounds on
//! `x[0]`, `x[1]`. Every subset of at most three constraints is taken as an
//! equality set and its KKT system solved; the best primal-feasible candidate
//! is the optimum because the optimum minimizes the objective over the affine
//! hull of some linearly independent subset of its active constraints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ROWS: usize = 6;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    pub h: [[f64; 3]; 3],
    pub f: [f64; 3],
    pub rows: Vec<([f64; 3], f64)>,
    pub action_lb: [f64; 2],
    pub action_ub: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: [f64; 3],
    /// Indices into the constraint list: the problem rows first, then the box
    /// faces `x0 <= ub0, -x0 <= -lb0, x1 <= ub1, -x1 <= -lb1`.
    pub active_set: Vec<usize>,
    /// Multipliers of the active constraints, same order as `active_set`.
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub feasible: bool,
    /// Largest constraint violation, 0 when feasible.
    pub max_violation: f64,
    /// Infinity norm of `Hx + f + A_active' mu`.
    pub kkt_residual: f64,
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl QpProblem {
    pub fn validate(&self) -> Result<()> {
        if self.rows.len() > MAX_ROWS {
            return Err(Error::Config(format!("QP has {} rows, at most {MAX_ROWS} allowed", self.rows.len())));
        }
        for i in 0..3 {
            for j in 0..3 {
                if self.h[i][j] != self.h[j][i] {
                    return Err(Error::Config("QP quadratic term must be symmetric".into()));
                }
            }
        }
        // Cholesky of the 3x3 matrix.
        let h = &self.h;
        let l00 = h[0][0];
        let ok = l00 > 0.0 && {
            let l10 = h[1][0] / l00.sqrt();
            let d1 = h[1][1] - l10 * l10;
            d1 > 0.0 && {
                let l20 = h[2][0] / l00.sqrt();
                let l21 = (h[2][1] - l20 * l10) / d1.sqrt();
                h[2][2] - l20 * l20 - l21 * l21 > 0.0
            }
        };
        if !ok {
            return Err(Error::Config("QP quadratic term must be positive definite".into()));
        }
        if (0..2).any(|i| !(self.action_lb[i] <= self.action_ub[i])) {
            return Err(Error::Config("QP box lower bound exceeds upper bound".into()));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64; 3]) -> f64 {
        let mut q = 0.0;
        for i in 0..3 {
            q += x[i] * dot(&self.h[i], x);
        }
        0.5 * q + dot(&self.f, x)
    }

    /// Problem rows followed by the four box faces.
    pub fn constraints(&self) -> Vec<([f64; 3], f64)> {
        let mut c = self.rows.clone();
        c.push(([1.0, 0.0, 0.0], self.action_ub[0]));
        c.push(([-1.0, 0.0, 0.0], -self.action_lb[0]));
        c.push(([0.0, 1.0, 0.0], self.action_ub[1]));
        c.push(([0.0, -1.0, 0.0], -self.action_lb[1]));
        c
    }

    pub fn max_violation(&self, x: &[f64; 3]) -> f64 {
        self.constraints()
            .iter()
            .map(|(r, b)| dot(r, x) - b)
            .fold(0.0, f64::max)
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let k = a[r][col] / a[col][col];
            if k != 0.0 {
                for c in col..n {
                    a[r][c] -= k * a[col][c];
                }
                b[r] -= k * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Minimizer of the objective with the constraints in `set` held at equality,
/// with their multipliers.
fn equality_candidate(p: &QpProblem, cons: &[([f64; 3], f64)], set: &[usize]) -> Option<([f64; 3], Vec<f64>)> {
    let k = set.len();
    let n = 3 + k;
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for i in 0..3 {
        a[i][..3].copy_from_slice(&p.h[i]);
        b[i] = -p.f[i];
    }
    for (j, &ci) in set.iter().enumerate() {
        let (row, bound) = cons[ci];
        for i in 0..3 {
            a[i][3 + j] = row[i];
            a[3 + j][i] = row[i];
        }
        b[3 + j] = bound;
    }
    let sol = solve_dense(a, b)?;
    Some(([sol[0], sol[1], sol[2]], sol[3..].to_vec()))
}

fn subsets(m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for i in 0..m {
        out.push(vec![i]);
        for j in i + 1..m {
            out.push(vec![i, j]);
            for k in j + 1..m {
                out.push(vec![i, j, k]);
            }
        }
    }
    out
}

/// (score, x, active set, multipliers).
type Candidate = (f64, [f64; 3], Vec<usize>, Vec<f64>);

pub fn solve_qp(p: &QpProblem) -> Result<QpSolution> {
    p.validate()?;
    let cons = p.constraints();
    let mut best: Option<Candidate> = None;
    let dual_ok = |mu: &[f64]| mu.iter().all(|&m| m >= -FEAS_TOL);
    let mut least_bad: Option<Candidate> = None;
    for set in subsets(cons.len()) {
        let Some((x, mu)) = equality_candidate(p, &cons, &set) else {
            continue;
        };
        let viol = p.max_violation(&x);
        if viol <= FEAS_TOL {
            let obj = p.objective(&x);
            // Degenerate vertices are reached by several sets; prefer one
            // with valid multipliers.
            let better = best.as_ref().is_none_or(|b| {
                let tie = (obj - b.0).abs() <= 1e-12 * (1.0 + b.0.abs());
                if tie {
                    dual_ok(&mu) && !dual_ok(&b.3)
                } else {
                    obj < b.0
                }
            });
            if better {
                best = Some((obj, x, set, mu));
            }
        } else if least_bad.as_ref().is_none_or(|b| viol < b.0) {
            least_bad = Some((viol, x, set, mu));
        }
    }
    let (feasible, x, active_set, multipliers) = match (best, least_bad) {
        (Some((_, x, s, mu)), _) => (true, x, s, mu),
        (None, Some((_, x, s, mu))) => (false, x, s, mu),
        (None, None) => return Err(Error::Shape("QP has no solvable candidate".into())),
    };
    let mut grad = [0.0; 3];
    for i in 0..3 {
        grad[i] = dot(&p.h[i], &x) + p.f[i];
    }
    for (&ci, &m) in active_set.iter().zip(&multipliers) {
        for i in 0..3 {
            grad[i] += m * cons[ci].0[i];
        }
    }
    Ok(QpSolution {
        x,
        objective: p.objective(&x),
        feasible,
        max_violation: p.max_violation(&x),
        kkt_residual: grad.iter().fold(0.0, |m, g| m.max(g.abs())),
        active_set,
        multipliers,
    })
}
