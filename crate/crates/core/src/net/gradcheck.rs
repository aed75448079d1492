//! Central finite-difference check of analytic gradients.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::net::mlp::FlatParams;

/// Denominator floor for the relative error; below it the comparison is
/// effectively absolute.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub probed: usize,
}

/// Compares `analytic` (flat, in [`FlatParams`] order) against central
/// differences of `f` at `probe_count` random coordinates (all coordinates if
/// there are fewer).
pub fn grad_check<P, F, R>(
    mut f: F,
    params: &P,
    analytic: &[f64],
    probe_count: usize,
    fd_step: f64,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    P: FlatParams + Clone,
    F: FnMut(&P) -> Result<f64>,
    R: Rng + ?Sized,
{
    let n = params.num_params();
    if analytic.len() != n {
        return Err(Error::Shape(format!(
            "analytic gradient has {} entries, parameters have {n}",
            analytic.len()
        )));
    }
    let indices: Vec<usize> = if probe_count >= n {
        (0..n).collect()
    } else {
        let mut v = sample(rng, n, probe_count).into_vec();
        v.sort_unstable();
        v
    };
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: indices.first().copied().unwrap_or(0),
        probed: indices.len(),
    };
    for &i in &indices {
        let x0 = params.param(i);
        work.set_param(i, x0 + fd_step);
        let up = f(&work)?;
        work.set_param(i, x0 - fd_step);
        let down = f(&work)?;
        work.set_param(i, x0);
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite {
                what: format!("objective while probing parameter {i}"),
            });
        }
        let numeric = (up - down) / (2.0 * fd_step);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}
