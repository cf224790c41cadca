use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Strictly increasing knots of a piecewise-linear basis on an interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1D {
    knots: Vec<f64>,
}

impl Mesh1D {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::DegenerateMesh("a 1D mesh needs at least two knots".into()));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::DegenerateMesh("knots must be finite".into()));
        }
        if let Some(w) = knots.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::DegenerateMesh(format!("knots must be strictly increasing ({} then {})", w[0], w[1])));
        }
        Ok(Mesh1D { knots })
    }

    pub fn uniform(start: f64, end: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !(end > start) {
            return Err(Error::DegenerateMesh("invalid uniform mesh".into()));
        }
        let m = ((end - start) / spacing).round() as usize;
        Self::new((0..=m).map(|i| start + i as f64 * spacing).collect())
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }
}

/// Triangulation in the plane, stored counter-clockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
}

pub(crate) fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl TriMesh {
    pub fn new(nodes: Vec<[f64; 2]>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        if nodes.len() < 3 || triangles.is_empty() {
            return Err(Error::DegenerateMesh("a 2D mesh needs nodes and at least one triangle".into()));
        }
        let scale = nodes.iter().flat_map(|p| p.iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for (e, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::DegenerateMesh(format!("triangle {e} references a missing node")));
            }
            let a = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if a.abs() <= 1e-14 * scale * scale {
                return Err(Error::DegenerateMesh(format!("triangle {e} has zero area")));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }
        Ok(TriMesh { nodes, triangles })
    }

    /// Regular grid of `nx × ny` nodes over a rectangle, two triangles per cell.
    pub fn regular_grid(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 || !(x1 > x0) || !(y1 > y0) {
            return Err(Error::DegenerateMesh("grid needs at least 2×2 nodes over a proper rectangle".into()));
        }
        let mut nodes = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x = x0 + (x1 - x0) * i as f64 / (nx - 1) as f64;
                let y = y0 + (y1 - y0) * j as f64 / (ny - 1) as f64;
                nodes.push([x, y]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let a = j * nx + i;
                let b = a + 1;
                let c = a + nx;
                let d = c + 1;
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            }
        }
        Self::new(nodes, triangles)
    }

    /// Square-celled grid over the bounding box of the finite `points`, padded
    /// on every side by `margin` times the larger extent; the larger side gets
    /// `nodes_per_side` nodes.
    pub fn covering(points: &[[f64; 2]], nodes_per_side: usize, margin: f64) -> Result<Self> {
        let finite = points.iter().filter(|p| p[0].is_finite() && p[1].is_finite());
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in finite {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        if !(hi[0] >= lo[0]) || nodes_per_side < 2 || !(margin >= 0.0) {
            return Err(Error::DegenerateMesh("no finite points to cover".into()));
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let pad = margin * extent;
        let h = (extent + 2.0 * pad) / (nodes_per_side - 1) as f64;
        let mut n = [0usize; 2];
        let mut start = [0.0; 2];
        for d in 0..2 {
            let span = hi[d] - lo[d] + 2.0 * pad;
            n[d] = ((span / h).ceil() as usize).max(1) + 1;
            let mid = 0.5 * (lo[d] + hi[d]);
            start[d] = mid - 0.5 * h * (n[d] - 1) as f64;
        }
        Self::regular_grid(
            start[0],
            start[0] + h * (n[0] - 1) as f64,
            start[1],
            start[1] + h * (n[1] - 1) as f64,
            n[0],
            n[1],
        )
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| signed_area(self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]])).sum()
    }
}

/// Either kind of mesh, as read from a mesh file.
#[derive(Clone, Debug, PartialEq)]
pub enum Mesh {
    OneD(Mesh1D),
    TwoD(TriMesh),
}

impl Mesh {
    pub fn len(&self) -> usize {
        match self {
            Mesh::OneD(m) => m.len(),
            Mesh::TwoD(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        match self {
            Mesh::OneD(m) => {
                writeln!(w, "nodes {} dim 1", m.len())?;
                for k in m.knots() {
                    writeln!(w, "{k:?}")?;
                }
            }
            Mesh::TwoD(m) => {
                writeln!(w, "nodes {} dim 2", m.len())?;
                for p in m.nodes() {
                    writeln!(w, "{:?} {:?}", p[0], p[1])?;
                }
                writeln!(w, "triangles {}", m.triangles().len())?;
                for t in m.triangles() {
                    writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
                }
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines =
            r.lines().map(|l| l.map_err(Error::from)).filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let mut next = |what: &str| -> Result<String> {
            lines.next().ok_or_else(|| Error::Parse(format!("unexpected end of mesh file, expected {what}")))?
        };
        let head = next("header")?;
        let f: Vec<&str> = head.split_whitespace().collect();
        if f.len() != 4 || f[0] != "nodes" || f[2] != "dim" {
            return Err(Error::Parse(format!("bad mesh header: {head}")));
        }
        let l: usize = f[1].parse().map_err(|_| Error::Parse(head.clone()))?;
        let d: usize = f[3].parse().map_err(|_| Error::Parse(head.clone()))?;
        let parse_f = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad coordinate: {s}")));
        let mut coords = Vec::with_capacity(l);
        for _ in 0..l {
            let line = next("coordinates")?;
            let v: Vec<f64> = line.split_whitespace().map(parse_f).collect::<Result<_>>()?;
            if v.len() != d {
                return Err(Error::Parse(format!("expected {d} coordinates, got: {line}")));
            }
            coords.push(v);
        }
        match d {
            1 => Ok(Mesh::OneD(Mesh1D::new(coords.into_iter().map(|v| v[0]).collect())?)),
            2 => {
                let head = next("triangles header")?;
                let f: Vec<&str> = head.split_whitespace().collect();
                if f.len() != 2 || f[0] != "triangles" {
                    return Err(Error::Parse(format!("bad triangles header: {head}")));
                }
                let m: usize = f[1].parse().map_err(|_| Error::Parse(head.clone()))?;
                let mut tris = Vec::with_capacity(m);
                for _ in 0..m {
                    let line = next("triangle")?;
                    let v: Vec<usize> = line
                        .split_whitespace()
                        .map(|s| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad index: {s}"))))
                        .collect::<Result<_>>()?;
                    if v.len() != 3 {
                        return Err(Error::Parse(format!("expected 3 indices, got: {line}")));
                    }
                    tris.push([v[0], v[1], v[2]]);
                }
                let nodes = coords.into_iter().map(|v| [v[0], v[1]]).collect();
                Ok(Mesh::TwoD(TriMesh::new(nodes, tris)?))
            }
            _ => Err(Error::Parse(format!("unsupported mesh dimension {d}"))),
        }
    }

    pub fn read_path(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read(std::io::BufReader::new(f))
    }
}
