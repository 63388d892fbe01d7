//! Potentials `G: ℝ^N → ℝ` with analytic gradient and (optional) Hessian,
//! derivative consistency checks, and ball-sampled bounds.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::desingularize::Desingularizer;
use crate::error::{check_dim, invalid, Error, Result};
use crate::sampling::{BallSampler, GradedBallSampler};

pub mod catalog;

pub use catalog::{build_catalog, CatalogEntry};

/// `‖∇G(ū)‖` at or below this counts as a critical point.
pub const CRITICAL_TOL: f64 = 1e-10;

/// Threshold on `c_best` for the value-gradient comparison to pass.
pub const VALUE_GRADIENT_THRESHOLD: f64 = 1e-6;

pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, u: &DVector<f64>) -> f64;
    fn gradient(&self, u: &DVector<f64>) -> DVector<f64>;
    /// `None` when the potential is not twice differentiable.
    fn hessian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>>;
}

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type HessFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A potential assembled from closures.
pub struct FnPotential {
    dim: usize,
    value: Box<ValueFn>,
    gradient: Box<GradFn>,
    hessian: Option<Box<HessFn>>,
}

impl Potential for FnPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, u: &DVector<f64>) -> f64 {
        (self.value)(u)
    }
    fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(u)
    }
    fn hessian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| h(u))
    }
}

/// Immutable, cheaply clonable handle on a potential plus metadata.
#[derive(Clone)]
pub struct PotentialSpec {
    pub name: String,
    inner: Arc<dyn Potential>,
    pub known_critical_point: Option<DVector<f64>>,
    pub known_desingularizer: Option<Desingularizer>,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("known_critical_point", &self.known_critical_point)
            .finish_non_exhaustive()
    }
}

impl PotentialSpec {
    pub fn new(name: impl Into<String>, potential: impl Potential + 'static) -> Self {
        PotentialSpec {
            name: name.into(),
            inner: Arc::new(potential),
            known_critical_point: None,
            known_desingularizer: None,
        }
    }

    pub fn from_fns(
        name: impl Into<String>,
        dim: usize,
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        hessian: Option<Box<HessFn>>,
    ) -> Self {
        Self::new(
            name,
            FnPotential {
                dim,
                value: Box::new(value),
                gradient: Box::new(gradient),
                hessian,
            },
        )
    }

    pub fn with_critical_point(mut self, u: DVector<f64>) -> Self {
        self.known_critical_point = Some(u);
        self
    }

    pub fn with_desingularizer(mut self, d: Desingularizer) -> Self {
        self.known_desingularizer = Some(d);
        self
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn value(&self, u: &DVector<f64>) -> f64 {
        self.inner.value(u)
    }

    pub fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        self.inner.gradient(u)
    }

    pub fn hessian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.inner.hessian(u)
    }

    pub fn has_hessian(&self) -> bool {
        self.inner.hessian(&DVector::zeros(self.dim())).is_some()
    }

    pub fn require_hessian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.hessian(u).ok_or_else(|| {
            Error::Capability(format!("potential `{}` has no Hessian", self.name))
        })
    }

    /// `∇²G(u)·w`, from the Hessian when available, otherwise by a central
    /// difference of the gradient along `w`.
    pub fn hessian_times(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        if let Some(h) = self.hessian(u) {
            return h * w;
        }
        let wn = w.norm();
        if wn == 0.0 {
            return DVector::zeros(w.len());
        }
        let step = 1e-6 * (1.0 + u.norm());
        let dir = w / wn;
        (self.gradient(&(u + &dir * step)) - self.gradient(&(u - &dir * step))) * (wn / (2.0 * step))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

pub fn evaluate(spec: &PotentialSpec, u: &DVector<f64>) -> Result<Evaluation> {
    check_dim(spec.dim(), u.len())?;
    Ok(Evaluation {
        value: spec.value(u),
        gradient: spec.gradient(u),
        hessian: spec.hessian(u),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleCheck {
    pub point: Vec<f64>,
    pub gradient_error: f64,
    /// `None` when the potential has no Hessian.
    pub hessian_error: Option<f64>,
    pub hessian_symmetric: bool,
    pub finite: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport {
    pub samples: Vec<SampleCheck>,
    pub max_relative_error: f64,
    pub pass: bool,
}

fn relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = reference.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

/// Compares the analytic gradient and Hessian against central differences
/// with step `1e-5·(1 + ‖u‖)`.
pub fn check_derivatives(spec: &PotentialSpec, samples: &[DVector<f64>], tol: f64) -> Result<DerivativeReport> {
    if samples.is_empty() {
        return Err(invalid("derivative check needs at least one sample"));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let n = spec.dim();
    let mut out = Vec::with_capacity(samples.len());
    let mut max_err: f64 = 0.0;
    for u in samples {
        check_dim(n, u.len())?;
        let h = 1e-5 * (1.0 + u.norm());
        let g = spec.gradient(u);
        let mut fd_g = DVector::zeros(n);
        let mut fd_h = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += h;
            dn[j] -= h;
            fd_g[j] = (spec.value(&up) - spec.value(&dn)) / (2.0 * h);
            let col = (spec.gradient(&up) - spec.gradient(&dn)) / (2.0 * h);
            fd_h.set_column(j, &col);
        }
        let hess = spec.hessian(u);
        let finite = spec.value(u).is_finite()
            && g.iter().all(|x| x.is_finite())
            && fd_g.iter().all(|x| x.is_finite())
            && hess.as_ref().is_none_or(|m| m.iter().all(|x| x.is_finite()));
        let gradient_error = relative_error(g.as_slice(), fd_g.as_slice());
        let hessian_error = hess
            .as_ref()
            .map(|m| relative_error(m.as_slice(), fd_h.as_slice()));
        let hessian_symmetric = hess
            .as_ref()
            .is_none_or(|m| (m - m.transpose()).amax() <= 1e-12);
        let worst = gradient_error.max(hessian_error.unwrap_or(0.0));
        let pass = finite && hessian_symmetric && worst <= tol;
        if finite {
            max_err = max_err.max(worst);
        }
        out.push(SampleCheck {
            point: u.iter().copied().collect(),
            gradient_error,
            hessian_error,
            hessian_symmetric,
            finite,
            pass,
        });
    }
    let pass = out.iter().all(|s| s.pass);
    Ok(DerivativeReport {
        samples: out,
        max_relative_error: max_err,
        pass,
    })
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0, |acc, e| acc.max(e.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HessianBound {
    /// Sampled lower estimate of `max ‖∇²G‖` over `B̄(0, R)`.
    pub m: f64,
    pub sample_count: usize,
}

/// Estimates `max{‖∇²G(u)‖ : u ∈ B̄(0, R)}` from `budget` low-discrepancy
/// points, the center and the `2N` axis extremes.
pub fn hessian_bound(spec: &PotentialSpec, radius: f64, budget: usize, seed: u64) -> Result<HessianBound> {
    if budget == 0 {
        return Err(invalid("hessian_bound budget must be positive"));
    }
    if !(radius > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let n = spec.dim();
    let center = DVector::zeros(n);
    let mut m = spectral_norm(&spec.require_hessian(&center)?);
    let mut count = 1;
    for i in 0..n {
        for s in [radius, -radius] {
            let mut e = DVector::zeros(n);
            e[i] = s;
            m = m.max(spectral_norm(&spec.require_hessian(&e)?));
            count += 1;
        }
    }
    let mut sampler = BallSampler::new(center, radius, seed);
    for _ in 0..budget {
        let u = sampler.next_point();
        m = m.max(spectral_norm(&spec.require_hessian(&u)?));
        count += 1;
    }
    Ok(HessianBound {
        m,
        sample_count: count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueGradientBound {
    pub c_best: f64,
    pub pass: bool,
    pub samples_used: usize,
}

/// Samples `min |G(u) - G(ū)| / ‖∇G(u)‖²` over `B(ū, ε)` with radii graded
/// over fourteen decades.
pub fn check_value_gradient_bound(
    spec: &PotentialSpec,
    critical: &DVector<f64>,
    eps: f64,
    budget: usize,
    seed: u64,
) -> Result<ValueGradientBound> {
    check_dim(spec.dim(), critical.len())?;
    if !(eps > 0.0) || budget == 0 {
        return Err(invalid("value-gradient check needs eps > 0 and a positive budget"));
    }
    if spec.gradient(critical).norm() > CRITICAL_TOL {
        return Err(invalid("base point is not a critical point"));
    }
    let g0 = spec.value(critical);
    let mut sampler = GradedBallSampler::new(critical.clone(), eps, 14.0, seed);
    let mut c_best = f64::INFINITY;
    let mut used = 0;
    for _ in 0..budget {
        let u = sampler.next_point();
        let gn = spec.gradient(&u).norm();
        if gn > 0.0 {
            c_best = c_best.min((spec.value(&u) - g0).abs() / (gn * gn));
            used += 1;
        }
    }
    Ok(ValueGradientBound {
        c_best,
        pass: c_best.is_finite() && c_best >= VALUE_GRADIENT_THRESHOLD,
        samples_used: used,
    })
}
