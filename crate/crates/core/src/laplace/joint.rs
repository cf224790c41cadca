use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sparse::{Ordering, SparsePattern, SparseSymmetric};

use super::transform::Transform;

const FD_GRAD_STEP: f64 = 1e-6;
const FD_HESS_STEP: f64 = 1e-5;

/// Joint negative log-likelihood `g(x, θ)` of latent variables and
/// parameters; `θ` is on the unconstrained working scale.
pub trait JointNll: Sync {
    fn latent_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn value(&self, x: &[f64], theta: &[f64]) -> Result<f64>;

    /// Declared sparsity of `∂²g/∂x²`; must include the diagonal.
    fn hessian_pattern(&self) -> Arc<SparsePattern>;

    fn ordering(&self) -> Ordering {
        Ordering::MinimumDegree
    }

    fn transforms(&self) -> Vec<Transform> {
        vec![Transform::Identity; self.param_dim()]
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.param_dim()).map(|i| format!("theta{i}")).collect()
    }

    /// `∂g/∂x`; central differences unless overridden.
    fn gradient(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        fd_gradient(self, x, theta)
    }

    /// `∂²g/∂x²` on the declared pattern; grouped central differences of the
    /// gradient unless overridden.
    fn hessian(&self, x: &[f64], theta: &[f64]) -> Result<SparseSymmetric<f64>> {
        fd_hessian(self, x, theta)
    }

    fn value_grad_hess(
        &self,
        x: &[f64],
        theta: &[f64],
        want_hessian: bool,
    ) -> Result<(f64, Vec<f64>, Option<SparseSymmetric<f64>>)> {
        let v = self.value(x, theta)?;
        let g = self.gradient(x, theta)?;
        let h = if want_hessian { Some(self.hessian(x, theta)?) } else { None };
        Ok((v, g, h))
    }
}

pub fn fd_gradient<G: JointNll + ?Sized>(g: &G, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    let mut xp = x.to_vec();
    let mut out = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = FD_GRAD_STEP * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = g.value(&xp, theta)?;
        xp[i] = x[i] - h;
        let fm = g.value(&xp, theta)?;
        xp[i] = x[i];
        out[i] = (fp - fm) / (2.0 * h);
        if !out[i].is_finite() {
            return Err(Error::NonFiniteDerivative);
        }
    }
    Ok(out)
}

/// Greedy distance-2 coloring: columns of one color share no row of the pattern.
pub fn column_groups(pattern: &SparsePattern) -> Vec<Vec<usize>> {
    let n = pattern.dim();
    let adj = pattern.adjacency();
    let mut color = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut forbidden: Vec<usize> = vec![usize::MAX; n + 1];
    for v in 0..n {
        let mut mark = |c: usize| {
            if c != usize::MAX {
                forbidden[c] = v;
            }
        };
        for &u in &adj[v] {
            mark(color[u]);
            for &w in &adj[u] {
                mark(color[w]);
            }
        }
        let c = (0..).find(|&c| c >= groups.len() || forbidden[c] != v).unwrap();
        if c == groups.len() {
            groups.push(Vec::new());
        }
        color[v] = c;
        groups[c].push(v);
    }
    groups
}

pub fn fd_hessian<G: JointNll + ?Sized>(g: &G, x: &[f64], theta: &[f64]) -> Result<SparseSymmetric<f64>> {
    let pattern = g.hessian_pattern();
    let adj = pattern.adjacency();
    let mut h = SparseSymmetric::zeros(pattern.clone());
    let mut xp = x.to_vec();
    for group in column_groups(&pattern) {
        let steps: Vec<f64> = group.iter().map(|&j| FD_HESS_STEP * x[j].abs().max(1.0)).collect();
        for (&j, &s) in group.iter().zip(&steps) {
            xp[j] = x[j] + s;
        }
        let gp = g.gradient(&xp, theta)?;
        for (&j, &s) in group.iter().zip(&steps) {
            xp[j] = x[j] - s;
        }
        let gm = g.gradient(&xp, theta)?;
        for &j in &group {
            xp[j] = x[j];
        }
        for (&j, &s) in group.iter().zip(&steps) {
            for &i in adj[j].iter().chain(std::iter::once(&j)) {
                if i >= j {
                    let v = (gp[i] - gm[i]) / (2.0 * s);
                    if !v.is_finite() {
                        return Err(Error::NonFiniteDerivative);
                    }
                    h.add(i, j, v)?;
                }
            }
        }
    }
    Ok(h)
}

/// Dense central-difference Hessian of `g(·, θ)`; an oracle for small problems.
pub fn dense_fd_hessian<G: JointNll + ?Sized>(g: &G, x: &[f64], theta: &[f64], step: f64) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    let mut out = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    let f0 = g.value(x, theta)?;
    for i in 0..n {
        for j in 0..=i {
            let v = if i == j {
                xp[i] = x[i] + step;
                let fp = g.value(&xp, theta)?;
                xp[i] = x[i] - step;
                let fm = g.value(&xp, theta)?;
                xp[i] = x[i];
                (fp - 2.0 * f0 + fm) / (step * step)
            } else {
                let mut eval = |a: f64, b: f64| -> Result<f64> {
                    xp[i] = x[i] + a;
                    xp[j] = x[j] + b;
                    let f = g.value(&xp, theta);
                    xp[i] = x[i];
                    xp[j] = x[j];
                    f
                };
                (eval(step, step)? - eval(step, -step)? - eval(-step, step)? + eval(-step, -step)?)
                    / (4.0 * step * step)
            };
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_are_distance_two_independent() {
        let p = SparsePattern::banded(12, 2);
        let groups = column_groups(&p);
        assert_eq!(groups.len(), 5);
        let adj = p.adjacency();
        for g in &groups {
            for (a, &u) in g.iter().enumerate() {
                for &v in &g[a + 1..] {
                    assert!(!adj[u].contains(&v));
                    assert!(!adj[u].iter().any(|w| adj[v].contains(w)));
                }
            }
        }
    }
}
