use crate::scalar::Real;

use super::mesh::{signed_area, Mesh, Mesh1D, TriMesh};

/// Sparse basis-evaluation matrix mapping mesh weights to locations.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    n_nodes: usize,
    rows: Vec<Vec<(usize, f64)>>,
    outside: Vec<bool>,
}

const BARY_TOL: f64 = 1e-12;

impl Projection {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, t: usize) -> &[(usize, f64)] {
        &self.rows[t]
    }

    pub fn is_outside(&self, t: usize) -> bool {
        self.outside[t]
    }

    pub fn n_outside(&self) -> usize {
        self.outside.iter().filter(|&&o| o).count()
    }

    /// Field value at location `t`; zero outside the mesh.
    pub fn eval<T: Real>(&self, t: usize, x: &[T]) -> T {
        let mut s = T::zero();
        for &(k, w) in &self.rows[t] {
            s += T::from_f64(w) * x[k];
        }
        s
    }

    pub fn apply<T: Real>(&self, x: &[T]) -> Vec<T> {
        (0..self.rows.len()).map(|t| self.eval(t, x)).collect()
    }
}

pub fn project_1d(mesh: &Mesh1D, points: &[f64]) -> Projection {
    let k = mesh.knots();
    let mut rows = Vec::with_capacity(points.len());
    let mut outside = Vec::with_capacity(points.len());
    for &p in points {
        if !(p >= k[0] && p <= k[k.len() - 1]) {
            rows.push(Vec::new());
            outside.push(true);
            continue;
        }
        let i = match k.binary_search_by(|v| v.partial_cmp(&p).unwrap()) {
            Ok(i) => {
                rows.push(vec![(i, 1.0)]);
                outside.push(false);
                continue;
            }
            Err(i) => i - 1,
        };
        let w = (p - k[i]) / (k[i + 1] - k[i]);
        rows.push(vec![(i, 1.0 - w), (i + 1, w)]);
        outside.push(false);
    }
    Projection { n_nodes: k.len(), rows, outside }
}

pub fn project_2d(mesh: &TriMesh, points: &[[f64; 2]]) -> Projection {
    let nodes = mesh.nodes();
    let boxes: Vec<[f64; 4]> = mesh
        .triangles()
        .iter()
        .map(|t| {
            let xs = t.map(|i| nodes[i][0]);
            let ys = t.map(|i| nodes[i][1]);
            [
                xs.iter().cloned().fold(f64::INFINITY, f64::min),
                xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                ys.iter().cloned().fold(f64::INFINITY, f64::min),
                ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ]
        })
        .collect();
    let mut rows = Vec::with_capacity(points.len());
    let mut outside = Vec::with_capacity(points.len());
    for &p in points {
        let mut found = None;
        if p[0].is_finite() && p[1].is_finite() {
            for (e, t) in mesh.triangles().iter().enumerate() {
                let b = boxes[e];
                if p[0] < b[0] - BARY_TOL || p[0] > b[1] + BARY_TOL || p[1] < b[2] - BARY_TOL || p[1] > b[3] + BARY_TOL
                {
                    continue;
                }
                let (a, bb, c) = (nodes[t[0]], nodes[t[1]], nodes[t[2]]);
                let area = signed_area(a, bb, c);
                let w0 = signed_area(p, bb, c) / area;
                let w1 = signed_area(a, p, c) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 >= -BARY_TOL && w1 >= -BARY_TOL && w2 >= -BARY_TOL {
                    let w = [w0.max(0.0), w1.max(0.0), w2.max(0.0)];
                    let s = w[0] + w[1] + w[2];
                    let row: Vec<(usize, f64)> = (0..3).filter(|&i| w[i] > 0.0).map(|i| (t[i], w[i] / s)).collect();
                    found = Some(row);
                    break;
                }
            }
        }
        outside.push(found.is_none());
        rows.push(found.unwrap_or_default());
    }
    Projection { n_nodes: mesh.len(), rows, outside }
}

/// Projects points onto either mesh kind; 1D meshes use the first coordinate.
pub fn project(mesh: &Mesh, points: &[[f64; 2]]) -> Projection {
    match mesh {
        Mesh::OneD(m) => project_1d(m, &points.iter().map(|p| p[0]).collect::<Vec<_>>()),
        Mesh::TwoD(m) => project_2d(m, points),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_d_weights() {
        let m = Mesh1D::new(vec![0.0, 1.0, 3.0]).unwrap();
        let p = project_1d(&m, &[0.5, 1.0, 2.5, 3.5]);
        assert_eq!(p.row(0), &[(0, 0.5), (1, 0.5)]);
        assert_eq!(p.row(1), &[(1, 1.0)]);
        assert_eq!(p.row(2), &[(1, 0.25), (2, 0.75)]);
        assert!(p.is_outside(3) && p.row(3).is_empty());
    }

    #[test]
    fn centroid_and_nodes() {
        let m = TriMesh::new(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]], vec![[0, 1, 2]]).unwrap();
        let p = project_2d(&m, &[[2.0 / 3.0, 2.0 / 3.0], [2.0, 0.0], [5.0, 5.0]]);
        for &(_, w) in p.row(0) {
            assert!((w - 1.0 / 3.0).abs() < 1e-14);
        }
        assert_eq!(p.row(1), &[(1, 1.0)]);
        assert!(p.is_outside(2));
        assert_eq!(p.eval(2, &[1.0, 2.0, 3.0]), 0.0);
    }
}
