use crate::error::Result;
use crate::sparse::SparseSymmetric;

use super::mesh::{signed_area, Mesh, Mesh1D, TriMesh};

/// Mass, lumped mass and stiffness matrices of a piecewise-linear basis.
#[derive(Clone, Debug)]
pub struct FemMatrices {
    pub c: SparseSymmetric<f64>,
    pub c_lumped: Vec<f64>,
    pub g: SparseSymmetric<f64>,
}

impl FemMatrices {
    pub fn dim(&self) -> usize {
        self.c_lumped.len()
    }
}

pub fn assemble_1d(mesh: &Mesh1D) -> Result<FemMatrices> {
    let k = mesh.knots();
    let l = k.len();
    let mut c = Vec::with_capacity(3 * l);
    let mut g = Vec::with_capacity(3 * l);
    for e in 0..l - 1 {
        let h = k[e + 1] - k[e];
        let (a, b) = (e, e + 1);
        c.extend([(a, a, h / 3.0), (b, b, h / 3.0), (b, a, h / 6.0)]);
        g.extend([(a, a, 1.0 / h), (b, b, 1.0 / h), (b, a, -1.0 / h)]);
    }
    let c = SparseSymmetric::from_triplets(l, &c)?;
    let g = SparseSymmetric::from_triplets(l, &g)?;
    let mut c_lumped = vec![0.0; l];
    for e in 0..l - 1 {
        let h = k[e + 1] - k[e];
        c_lumped[e] += h / 2.0;
        c_lumped[e + 1] += h / 2.0;
    }
    Ok(FemMatrices { c, c_lumped, g })
}

pub fn assemble_2d(mesh: &TriMesh) -> Result<FemMatrices> {
    let nodes = mesh.nodes();
    let l = nodes.len();
    let mut c = Vec::with_capacity(6 * mesh.triangles().len());
    let mut g = Vec::with_capacity(6 * mesh.triangles().len());
    for t in mesh.triangles() {
        let p = [nodes[t[0]], nodes[t[1]], nodes[t[2]]];
        let area = signed_area(p[0], p[1], p[2]);
        // edge opposite vertex i
        let e: Vec<[f64; 2]> = (0..3)
            .map(|i| {
                let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                [b[0] - a[0], b[1] - a[1]]
            })
            .collect();
        for i in 0..3 {
            for j in 0..=i {
                let (r, s) = (t[i], t[j]);
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                let k = (e[i][0] * e[j][0] + e[i][1] * e[j][1]) / (4.0 * area);
                c.push((r, s, m));
                g.push((r, s, k));
            }
        }
    }
    let c = SparseSymmetric::from_triplets(l, &c)?;
    let g = SparseSymmetric::from_triplets(l, &g)?;
    let c_lumped = c.row_sums();
    Ok(FemMatrices { c, c_lumped, g })
}

pub fn assemble(mesh: &Mesh) -> Result<FemMatrices> {
    match mesh {
        Mesh::OneD(m) => assemble_1d(m),
        Mesh::TwoD(m) => assemble_2d(m),
    }
}
