use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{
    banded_derivatives, banded_forward_segments, chain_to_latent, softmax_rows_into, windows, ActiveDrivers,
    BandedLikelihoodConfig, Driver, DriverInputs, DriverSensitivity, LogEmissions, StructuralZeros, TransitionSeq,
};
use crate::laplace::{JointNll, Transform};
use crate::sparse::{Ordering, SparseCholesky, SparsePattern, SparseSymmetric, SymbolicCholesky};
use crate::spde::{assemble_2d, project_2d, Projection, SpdeOperator, TriMesh};

use super::densities::{gamma_logdensity, periodic_predictor, wrapped_cauchy_logdensity};
use super::{HmmInputs, HmmModel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Linear predictor of one off-diagonal transition entry (0-based states):
/// intercept, a trigonometric daily term of order `trig_order`, and optionally
/// a spatial field of its own.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predictor {
    pub from: usize,
    pub to: usize,
    #[serde(default)]
    pub trig_order: usize,
    #[serde(default)]
    pub field: bool,
}

struct Params {
    means: Vec<f64>,
    sds: Vec<f64>,
    locations: Vec<f64>,
    concentrations: Vec<f64>,
    /// `(τ, κ)` per field.
    fields: Vec<(f64, f64)>,
}

/// Gamma step lengths and optional wrapped-Cauchy turning angles, with
/// transition predictors that may include Matérn fields on a triangle mesh.
/// The latent vector stacks the mesh weights of every field.
pub struct SpatialSwitchingModel {
    n: usize,
    steps: Vec<f64>,
    angles: Option<Vec<f64>>,
    hours: Vec<f64>,
    proj: Projection,
    op: SpdeOperator,
    q_symbolic: Arc<SymbolicCholesky>,
    predictors: Vec<Predictor>,
    field_of: Vec<Option<usize>>,
    slot_field: Vec<Option<usize>>,
    n_fields: usize,
    cfg: BandedLikelihoodConfig,
    segments: Vec<Range<usize>>,
    zeros: StructuralZeros,
    pattern: Arc<SparsePattern>,
    theta0: Vec<f64>,
}

impl SpatialSwitchingModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        steps: Vec<f64>,
        angles: Option<Vec<f64>>,
        hours: Vec<f64>,
        locations: &[[f64; 2]],
        mesh: &TriMesh,
        predictors: Vec<Predictor>,
        segments: Vec<Range<usize>>,
        cfg: BandedLikelihoodConfig,
    ) -> Result<Self> {
        let n = n_states;
        let len = steps.len();
        if n < 2 {
            return Err(Error::InvalidArgument("need at least two states".into()));
        }
        for (name, l) in [("hours", hours.len()), ("locations", locations.len())] {
            if l != len {
                return Err(Error::InvalidArgument(format!("{name} has {l} rows, expected {len}")));
            }
        }
        if let Some(a) = &angles {
            if a.len() != len {
                return Err(Error::DimensionMismatch { expected: len, got: a.len() });
            }
        }
        cfg.validate(n)?;
        let mut prev = 0;
        for s in &segments {
            if s.start != prev || s.end <= s.start {
                return Err(Error::InvalidArgument("segments must tile the series in order".into()));
            }
            prev = s.end;
        }
        if prev != len {
            return Err(Error::InvalidArgument("segments must cover the whole series".into()));
        }

        let mut all: Vec<Predictor> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let given: Vec<&Predictor> = predictors.iter().filter(|p| p.from == i && p.to == j).collect();
                match given.len() {
                    0 => all.push(Predictor { from: i, to: j, trig_order: 0, field: false }),
                    1 => all.push(given[0].clone()),
                    _ => return Err(Error::Config(format!("predictor {}->{} given twice", i + 1, j + 1))),
                }
            }
        }
        if predictors.iter().any(|p| p.from >= n || p.to >= n || p.from == p.to) {
            return Err(Error::Config("predictor refers to an invalid transition".into()));
        }
        let mut n_fields = 0;
        let mut field_of = Vec::new();
        let mut slot_field = vec![None; n * n];
        for p in &all {
            if p.field {
                field_of.push(Some(n_fields));
                slot_field[p.from * n + p.to] = Some(n_fields);
                n_fields += 1;
            } else {
                field_of.push(None);
            }
        }

        let op = SpdeOperator::new(&assemble_2d(mesh)?)?;
        let q_symbolic = Arc::new(SymbolicCholesky::analyze(op.pattern().clone(), Ordering::MinimumDegree)?);
        let proj = project_2d(mesh, locations);
        let m = mesh.len();

        let mut entries: Vec<(usize, usize)> = Vec::new();
        for f in 0..n_fields {
            entries.extend(op.pattern().positions().map(|(i, j)| (i + f * m, j + f * m)));
        }
        if n_fields > 0 {
            let mut nodes: Vec<usize> = Vec::new();
            for seg in &segments {
                for w in windows(seg.clone(), cfg.bandwidth) {
                    nodes.clear();
                    for t in w.start..w.end {
                        for &(k, _) in proj.row(t) {
                            nodes.extend((0..n_fields).map(|f| k + f * m));
                        }
                    }
                    nodes.sort_unstable();
                    nodes.dedup();
                    for (a, &i) in nodes.iter().enumerate() {
                        entries.extend(nodes[..=a].iter().map(|&j| (i, j)));
                    }
                }
            }
        }
        let pattern = Arc::new(SparsePattern::from_entries_with_diagonal(n_fields * m, entries)?);

        let mut model = SpatialSwitchingModel {
            n,
            steps,
            angles,
            hours,
            proj,
            op,
            q_symbolic,
            predictors: all,
            field_of,
            slot_field,
            n_fields,
            cfg,
            segments,
            zeros: StructuralZeros::none(n),
            pattern,
            theta0: Vec::new(),
        };
        model.theta0 = vec![0.0; model.param_dim()];
        Ok(model)
    }

    pub fn with_initial(mut self, theta0: Vec<f64>) -> Result<Self> {
        if theta0.len() != self.param_dim() {
            return Err(Error::DimensionMismatch { expected: self.param_dim(), got: theta0.len() });
        }
        self.theta0 = theta0;
        Ok(self)
    }

    /// All off-diagonal predictors in parameter order.
    pub fn predictors(&self) -> &[Predictor] {
        &self.predictors
    }

    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    pub fn n_nodes(&self) -> usize {
        self.op.dim()
    }

    pub fn projection(&self) -> &Projection {
        &self.proj
    }

    pub fn config(&self) -> &BandedLikelihoodConfig {
        &self.cfg
    }

    fn emission_dim(&self) -> usize {
        if self.angles.is_some() {
            4 * self.n
        } else {
            2 * self.n
        }
    }

    /// Offset of predictor `p`'s coefficients in `θ`.
    fn predictor_offset(&self, p: usize) -> usize {
        self.emission_dim() + self.predictors[..p].iter().map(|q| 1 + 2 * q.trig_order).sum::<usize>()
    }

    fn fields_offset(&self) -> usize {
        self.predictor_offset(self.predictors.len())
    }

    /// Index of the predictor for `from → to`.
    pub fn predictor_index(&self, from: usize, to: usize) -> Option<usize> {
        self.predictors.iter().position(|p| p.from == from && p.to == to)
    }

    /// `(intercept, trig coefficients)` of predictor `p`.
    pub fn coefficients<'a>(&self, theta: &'a [f64], p: usize) -> (f64, &'a [f64]) {
        let o = self.predictor_offset(p);
        (theta[o], &theta[o + 1..o + 1 + 2 * self.predictors[p].trig_order])
    }

    /// Mesh weights of predictor `p`'s field.
    pub fn field_weights<'a>(&self, x: &'a [f64], p: usize) -> Option<&'a [f64]> {
        let m = self.n_nodes();
        self.field_of[p].map(|f| &x[f * m..(f + 1) * m])
    }

    fn unpack(&self, theta: &[f64]) -> Result<Params> {
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch { expected: self.param_dim(), got: theta.len() });
        }
        let n = self.n;
        let exp = |v: &f64| v.exp();
        let mut p = Params {
            means: theta[..n].iter().map(exp).collect(),
            sds: theta[n..2 * n].iter().map(exp).collect(),
            locations: Vec::new(),
            concentrations: Vec::new(),
            fields: Vec::new(),
        };
        if self.angles.is_some() {
            p.locations = theta[2 * n..3 * n].to_vec();
            p.concentrations = theta[3 * n..4 * n].iter().map(|&v| Transform::Logit.to_natural(v)).collect();
        }
        let o = self.fields_offset();
        p.fields = (0..self.n_fields).map(|f| (theta[o + 2 * f].exp(), theta[o + 2 * f + 1].exp())).collect();
        let bad = |v: f64| !(v > 0.0) || !v.is_finite();
        if p.means.iter().chain(&p.sds).any(|&v| bad(v)) || p.fields.iter().any(|&(a, b)| bad(a) || bad(b)) {
            return Err(Error::NonFiniteObjective);
        }
        if p.concentrations.iter().any(|&r| !(r < 1.0)) {
            return Err(Error::NonFiniteObjective);
        }
        Ok(p)
    }

    fn log_emissions(&self, p: &Params) -> Vec<f64> {
        let n = self.n;
        let mut le = vec![0.0; self.steps.len() * n];
        for (t, &s) in self.steps.iter().enumerate() {
            for j in 0..n {
                let mut v = 0.0;
                if !s.is_nan() {
                    v += gamma_logdensity(s, p.means[j], p.sds[j]);
                }
                if let Some(a) = self.angles.as_ref().map(|a| a[t]).filter(|a| !a.is_nan()) {
                    v += wrapped_cauchy_logdensity(a, p.locations[j], p.concentrations[j]);
                }
                le[t * n + j] = v;
            }
        }
        le
    }

    /// Predictors `η_t(i, j)` for every step, row-major `len × N × N`.
    pub fn eta(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let n = self.n;
        let nn = n * n;
        let len = self.steps.len();
        let mut eta = vec![0.0; len * nn];
        for (q, pred) in self.predictors.iter().enumerate() {
            let (b0, coeffs) = self.coefficients(theta, q);
            let field = self.field_weights(x, q);
            for t in 0..len {
                let mut v = b0;
                if !coeffs.is_empty() {
                    v += periodic_predictor(self.hours[t], coeffs);
                }
                if let Some(w) = field {
                    v += self.proj.eval(t, w);
                }
                eta[t * nn + pred.from * n + pred.to] = v;
            }
        }
        Ok(eta)
    }

    fn transitions(&self, eta: &[f64]) -> Result<TransitionSeq<f64>> {
        let nn = self.n * self.n;
        let mut mats = vec![0.0; eta.len()];
        for (e, g) in eta.chunks(nn).zip(mats.chunks_mut(nn)) {
            softmax_rows_into(e, &self.zeros, g)?;
        }
        TransitionSeq::varying(self.n, mats)
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch { expected: self.latent_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Sum over fields of the negative GMRF log-density, with `Q_f x_f` and each `Q_f`.
    fn field_terms(&self, p: &Params, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<SparseSymmetric<f64>>)> {
        let m = self.n_nodes();
        let mut v = 0.0;
        let mut qx = vec![0.0; x.len()];
        let mut qs = Vec::with_capacity(self.n_fields);
        for (f, &(tau, kappa)) in p.fields.iter().enumerate() {
            let q = self.op.precision_with(tau, kappa, 1.0);
            let factor = SparseCholesky::factor(self.q_symbolic.clone(), &q)?;
            let xf = &x[f * m..(f + 1) * m];
            let qxf = q.matvec(xf)?;
            let quad: f64 = xf.iter().zip(&qxf).map(|(a, b)| a * b).sum();
            v += 0.5 * quad - 0.5 * factor.log_determinant() + 0.5 * m as f64 * LN_2PI;
            qx[f * m..(f + 1) * m].copy_from_slice(&qxf);
            qs.push(q);
        }
        Ok((v, qx, qs))
    }
}

impl JointNll for SpatialSwitchingModel {
    fn latent_dim(&self) -> usize {
        self.n_fields * self.n_nodes()
    }

    fn param_dim(&self) -> usize {
        self.fields_offset() + 2 * self.n_fields
    }

    fn value(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        let p = self.unpack(theta)?;
        let eta = self.eta(x, theta)?;
        let emit = LogEmissions::new(self.n, self.log_emissions(&p))?;
        let ll = banded_forward_segments(&emit, &self.transitions(&eta)?, &self.cfg, &self.segments)?;
        let (field, _, _) = self.field_terms(&p, x)?;
        let v = field - ll;
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        Ok(v)
    }

    fn hessian_pattern(&self) -> Arc<SparsePattern> {
        self.pattern.clone()
    }

    fn transforms(&self) -> Vec<Transform> {
        let n = self.n;
        let mut t = vec![Transform::Log; 2 * n];
        if self.angles.is_some() {
            t.extend(std::iter::repeat(Transform::Identity).take(n));
            t.extend(std::iter::repeat(Transform::Logit).take(n));
        }
        t.extend(std::iter::repeat(Transform::Identity).take(self.fields_offset() - t.len()));
        t.extend(std::iter::repeat(Transform::Log).take(2 * self.n_fields));
        t
    }

    fn param_names(&self) -> Vec<String> {
        let n = self.n;
        let mut names: Vec<String> = (1..=n).map(|j| format!("mean{j}")).collect();
        names.extend((1..=n).map(|j| format!("sd{j}")));
        if self.angles.is_some() {
            names.extend((1..=n).map(|j| format!("angle_location{j}")));
            names.extend((1..=n).map(|j| format!("angle_concentration{j}")));
        }
        for p in &self.predictors {
            let tag = format!("{}{}", p.from + 1, p.to + 1);
            names.push(format!("beta0_{tag}"));
            names.extend((1..=p.trig_order).map(|k| format!("beta_sin{k}_{tag}")));
            names.extend((1..=p.trig_order).map(|k| format!("beta_cos{k}_{tag}")));
        }
        for p in self.predictors.iter().filter(|p| p.field) {
            let tag = format!("{}{}", p.from + 1, p.to + 1);
            names.push(format!("tau_{tag}"));
            names.push(format!("kappa_{tag}"));
        }
        names
    }

    fn gradient(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_grad_hess(x, theta, false)?.1)
    }

    fn hessian(&self, x: &[f64], theta: &[f64]) -> Result<SparseSymmetric<f64>> {
        Ok(self.value_grad_hess(x, theta, true)?.2.expect("hessian requested"))
    }

    fn value_grad_hess(
        &self,
        x: &[f64],
        theta: &[f64],
        want_hessian: bool,
    ) -> Result<(f64, Vec<f64>, Option<SparseSymmetric<f64>>)> {
        let p = self.unpack(theta)?;
        let n = self.n;
        let eta = self.eta(x, theta)?;
        let le = self.log_emissions(&p);
        let inp = DriverInputs { n, le: &le, eta: &eta, zeros: &self.zeros };
        let active = ActiveDrivers {
            le: false,
            eta: self.predictors.iter().filter(|q| q.field).map(|q| (q.from, q.to)).collect(),
        };
        let derivs = banded_derivatives(&inp, &self.cfg, &self.segments, &active, want_hessian)?;
        let (field, qx, qs) = self.field_terms(&p, x)?;
        let value = field - derivs.loglik;
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        let m = self.n_nodes();
        let sensitivity = |d: Driver| {
            let f = if d.slot >= n { self.slot_field[d.slot - n] } else { None };
            match f {
                Some(f) => DriverSensitivity {
                    grad: self.proj.row(d.step).iter().map(|&(k, w)| (f * m + k, w)).collect(),
                    hess: Vec::new(),
                },
                None => DriverSensitivity::default(),
            }
        };
        let mut grad = qx;
        let mut hess = want_hessian.then(|| SparseSymmetric::zeros(self.pattern.clone()));
        chain_to_latent(&derivs, sensitivity, -1.0, &mut grad, hess.as_mut())?;
        if let Some(h) = hess.as_mut() {
            for (f, q) in qs.iter().enumerate() {
                for (i, j, v) in q.iter() {
                    h.add(i + f * m, j + f * m, v)?;
                }
            }
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDerivative);
        }
        Ok((value, grad, hess))
    }
}

impl HmmModel for SpatialSwitchingModel {
    fn n_states(&self) -> usize {
        self.n
    }

    fn initial_theta(&self) -> Vec<f64> {
        self.theta0.clone()
    }

    fn hmm_inputs(&self, x: &[f64], theta: &[f64]) -> Result<HmmInputs> {
        let p = self.unpack(theta)?;
        let eta = self.eta(x, theta)?;
        Ok(HmmInputs {
            emissions: LogEmissions::new(self.n, self.log_emissions(&p))?,
            transitions: self.transitions(&eta)?,
            delta: self.cfg.delta.clone(),
            segments: self.segments.clone(),
        })
    }
}
