use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clbf_validate::Certified;
use crate::env2d::{EnvConfig, Rect, State};
use crate::error::{Error, Result};

/// Regular position grid; velocities are fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
}

impl GridSpec {
    /// Spans the position box of `cfg`.
    pub fn covering(cfg: &EnvConfig, nx: usize, ny: usize) -> Self {
        Self {
            x_min: cfg.state_lb[0],
            x_max: cfg.state_ub[0],
            nx,
            y_min: cfg.state_lb[1],
            y_max: cfg.state_ub[1],
            ny,
        }
    }

    pub fn validate(&self, cfg: &EnvConfig) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Config("contour grid needs at least 2 points per axis".into()));
        }
        let inside = cfg.state_lb[0] <= self.x_min
            && self.x_min < self.x_max
            && self.x_max <= cfg.state_ub[0]
            && cfg.state_lb[1] <= self.y_min
            && self.y_min < self.y_max
            && self.y_max <= cfg.state_ub[1];
        if !inside {
            return Err(Error::Config("contour grid must lie within the state bounds".into()));
        }
        Ok(())
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (self.x_max - self.x_min) * i as f64 / (self.nx - 1) as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + (self.y_max - self.y_min) * j as f64 / (self.ny - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

/// `V` on a grid, row-major by `y` then `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourTable {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

pub fn export_contour<C: Certified + ?Sized>(ctrl: &C, grid: GridSpec) -> Result<ContourTable> {
    if grid.nx < 2 || grid.ny < 2 {
        return Err(Error::Config("contour grid needs at least 2 points per axis".into()));
    }
    let mut values = Vec::with_capacity(grid.nx * grid.ny);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            values.push(ctrl.value(&State::at(grid.x(i), grid.y(j)))?);
        }
    }
    Ok(ContourTable { grid, values })
}

impl ContourTable {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nx + i]
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.grid.ny)
            .flat_map(move |j| (0..self.grid.nx).map(move |i| (self.grid.x(i), self.grid.y(j), self.value(i, j))))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,V\n");
        for (x, y, v) in self.rows() {
            let _ = writeln!(out, "{x},{y},{v}");
        }
        out
    }

    /// Marching-squares segments of the level set `V = level`; saddle cells
    /// are resolved by the cell-center average.
    pub fn level_segments(&self, level: f64) -> Vec<Segment> {
        let g = &self.grid;
        let mut segs = Vec::new();
        let lerp = |p: [f64; 2], q: [f64; 2], vp: f64, vq: f64| {
            let t = (level - vp) / (vq - vp);
            [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
        };
        for j in 0..g.ny - 1 {
            for i in 0..g.nx - 1 {
                let p00 = [g.x(i), g.y(j)];
                let p10 = [g.x(i + 1), g.y(j)];
                let p11 = [g.x(i + 1), g.y(j + 1)];
                let p01 = [g.x(i), g.y(j + 1)];
                let (v00, v10, v11, v01) =
                    (self.value(i, j), self.value(i + 1, j), self.value(i + 1, j + 1), self.value(i, j + 1));
                let hi = |v: f64| v >= level;
                let cross = |vp: f64, vq: f64| hi(vp) != hi(vq);
                // Edges in order bottom, right, top, left.
                let edges = [
                    cross(v00, v10).then(|| lerp(p00, p10, v00, v10)),
                    cross(v10, v11).then(|| lerp(p10, p11, v10, v11)),
                    cross(v01, v11).then(|| lerp(p01, p11, v01, v11)),
                    cross(v00, v01).then(|| lerp(p00, p01, v00, v01)),
                ];
                let pts: Vec<[f64; 2]> = edges.iter().flatten().copied().collect();
                match pts.len() {
                    2 => segs.push(Segment { a: pts[0], b: pts[1] }),
                    4 => {
                        let [b, r, t, l] = edges.map(Option::unwrap);
                        let center_hi = hi(0.25 * (v00 + v10 + v11 + v01));
                        if hi(v00) == center_hi {
                            segs.push(Segment { a: b, b: r });
                            segs.push(Segment { a: t, b: l });
                        } else {
                            segs.push(Segment { a: b, b: l });
                            segs.push(Segment { a: r, b: t });
                        }
                    }
                    _ => {}
                }
            }
        }
        segs
    }

    pub fn segments_csv(segs: &[Segment]) -> String {
        let mut out = String::from("x0,y0,x1,y1\n");
        for s in segs {
            let _ = writeln!(out, "{},{},{},{}", s.a[0], s.a[1], s.b[0], s.b[1]);
        }
        out
    }

    /// True when `rect` contains at least one grid point and every grid point
    /// in it has `V >= level`.
    pub fn encloses(&self, rect: &Rect, level: f64) -> bool {
        let mut any = false;
        for (x, y, v) in self.rows() {
            if rect.contains(x, y) {
                any = true;
                if v < level {
                    return false;
                }
            }
        }
        any
    }

    /// Area of the grid box weighted by the fraction of points with `V >= level`.
    pub fn superlevel_area(&self, level: f64) -> f64 {
        let g = &self.grid;
        let frac = self.values.iter().filter(|&&v| v >= level).count() as f64 / self.values.len() as f64;
        frac * (g.x_max - g.x_min) * (g.y_max - g.y_min)
    }
}
