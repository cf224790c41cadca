use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular grid of cell centres over a rectangle, with an in-region mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricGrid {
    pub x0: f64,
    pub y0: f64,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    pub inside: Vec<bool>,
}

impl MetricGrid {
    /// `size × size` grid over the square hull of the finite points; a cell is
    /// inside when its centre lies within `radius` of some point.
    pub fn disk_union(points: &[[f64; 2]], size: usize, radius: f64) -> Result<Self> {
        let pts: Vec<[f64; 2]> = points.iter().filter(|p| p[0].is_finite() && p[1].is_finite()).cloned().collect();
        if pts.is_empty() || size == 0 || !(radius > 0.0) {
            return Err(Error::DegenerateGrid);
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &pts {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(radius);
        let cell = extent / size as f64;
        let x0 = 0.5 * (lo[0] + hi[0]) - 0.5 * extent;
        let y0 = 0.5 * (lo[1] + hi[1]) - 0.5 * extent;
        let mut inside = vec![false; size * size];
        let r2 = radius * radius;
        let reach = (radius / cell).ceil() as i64;
        for p in &pts {
            let ci = ((p[0] - x0) / cell).floor() as i64;
            let cj = ((p[1] - y0) / cell).floor() as i64;
            for j in (cj - reach).max(0)..=(cj + reach).min(size as i64 - 1) {
                for i in (ci - reach).max(0)..=(ci + reach).min(size as i64 - 1) {
                    let c = [x0 + (i as f64 + 0.5) * cell, y0 + (j as f64 + 0.5) * cell];
                    if (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2) <= r2 {
                        inside[j as usize * size + i as usize] = true;
                    }
                }
            }
        }
        if !inside.iter().any(|&b| b) {
            return Err(Error::DegenerateGrid);
        }
        Ok(MetricGrid { x0, y0, cell, nx: size, ny: size, inside })
    }

    /// Non-convex hull of the points: the disk union of `radius`, closed by
    /// eroding it with the same radius, which fills gaps narrower than `2·radius`.
    pub fn nonconvex_hull(points: &[[f64; 2]], size: usize, radius: f64) -> Result<Self> {
        let mut grid = Self::disk_union(points, size, radius)?;
        let (nx, ny) = (grid.nx, grid.ny);
        // squared distance (in cells) to the nearest cell outside the union;
        // beyond the grid edge counts as inside
        let mut d: Vec<f64> = grid.inside.iter().map(|&b| if b { f64::INFINITY } else { 0.0 }).collect();
        let mut buf = vec![0.0; nx.max(ny)];
        for j in 0..ny {
            buf[..nx].copy_from_slice(&d[j * nx..(j + 1) * nx]);
            let row = edt_1d(&buf[..nx]);
            d[j * nx..(j + 1) * nx].copy_from_slice(&row);
        }
        for i in 0..nx {
            for j in 0..ny {
                buf[j] = d[j * nx + i];
            }
            let col = edt_1d(&buf[..ny]);
            for j in 0..ny {
                d[j * nx + i] = col[j];
            }
        }
        let r = radius / grid.cell;
        for (c, dist) in grid.inside.iter_mut().zip(&d) {
            *c = *dist >= r * r;
        }
        if !grid.inside.iter().any(|&b| b) {
            return Err(Error::DegenerateGrid);
        }
        Ok(grid)
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push([self.x0 + (i as f64 + 0.5) * self.cell, self.y0 + (j as f64 + 0.5) * self.cell]);
            }
        }
        out
    }

    pub fn n_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }
}

/// Exact squared Euclidean distance transform of a sampled function along a
/// line (lower envelope of parabolas).
fn edt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![f64::INFINITY; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let sites: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if sites.is_empty() {
        return out;
    }
    let mut k = 0;
    v[0] = sites[0];
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for &q in &sites[1..] {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
    out
}

/// Transition surfaces of one fitted or true model. Track values are the
/// predictors along the observed path; grid values are probabilities per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct A3Surface {
    pub eta12_track: Vec<f64>,
    pub eta21_track: Vec<f64>,
    pub gamma12_grid: Vec<f64>,
    pub gamma21_grid: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct A3Metrics {
    pub mean_eta12_diff: f64,
    pub mean_eta21_diff: f64,
    pub correlation21: f64,
    pub rmse12: f64,
    pub rmse21: f64,
    pub cells: usize,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Pearson correlation; NaN when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a.iter().cloned());
    let mb = mean(b.iter().cloned());
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

pub fn a3_metrics(est: &A3Surface, truth: &A3Surface, grid: &MetricGrid) -> Result<A3Metrics> {
    let cells = grid.n_inside();
    if cells == 0 {
        return Err(Error::DegenerateGrid);
    }
    let pick = |v: &[f64]| -> Vec<f64> { v.iter().zip(&grid.inside).filter(|(_, &i)| i).map(|(&x, _)| x).collect() };
    let (e12, t12, e21, t21) =
        (pick(&est.gamma12_grid), pick(&truth.gamma12_grid), pick(&est.gamma21_grid), pick(&truth.gamma21_grid));
    let rmse = |a: &[f64], b: &[f64]| mean(a.iter().zip(b).map(|(x, y)| (x - y).powi(2))).sqrt();
    Ok(A3Metrics {
        mean_eta12_diff: mean(est.eta12_track.iter().zip(&truth.eta12_track).map(|(a, b)| a - b)),
        mean_eta21_diff: mean(est.eta21_track.iter().zip(&truth.eta21_track).map(|(a, b)| a - b)),
        correlation21: pearson(&e21, &t21),
        rmse12: rmse(&e12, &t12),
        rmse21: rmse(&e21, &t21),
        cells,
    })
}
