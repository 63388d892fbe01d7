//! Total and deformed energies `ℰ_λ = G + ½‖v‖² + λ⟨∇G, v⟩`, the explicit
//! admissibility constants, and sampled angle certificates for the field
//! `F(u, v) = (−v, γv + ∇G(u))`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::PhaseState;
use crate::error::{check_dim, invalid, Error, Result};
use crate::potential::{hessian_bound, PotentialSpec};
use crate::sampling::{unit_ball_point, BallSampler, Halton, MAX_HALTON_DIM};

/// Added to the denominator of `λ₀` so the defining inequality is strict.
pub const LAMBDA_ZERO_EPS: f64 = 1e-12;

/// Both `‖∇ℰ_λ‖` and `‖F‖` at or below this count as a rest point.
pub const REST_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DeformedEnergy {
    pub spec: PotentialSpec,
    pub gamma: f64,
    pub lambda: f64,
}

impl DeformedEnergy {
    pub fn new(spec: PotentialSpec, gamma: f64, lambda: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma must be positive, got {gamma}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be non-negative, got {lambda}")));
        }
        if lambda > 0.0 && !spec.has_hessian() {
            return Err(Error::Capability(format!(
                "lambda > 0 needs the Hessian of `{}`",
                spec.name
            )));
        }
        Ok(DeformedEnergy { spec, gamma, lambda })
    }

    /// The total energy `E_T`.
    pub fn total(spec: PotentialSpec, gamma: f64) -> Result<Self> {
        Self::new(spec, gamma, 0.0)
    }

    pub fn value(&self, state: &PhaseState) -> f64 {
        let g = self.spec.gradient(&state.u);
        self.spec.value(&state.u) + 0.5 * state.v.norm_squared() + self.lambda * g.dot(&state.v)
    }
}

/// `ℰ_λ(u, v)` and `∇ℰ_λ = (∇G + λ∇²G·v, v + λ∇G)`.
pub fn energy_value_and_gradient(de: &DeformedEnergy, state: &PhaseState) -> Result<(f64, DVector<f64>)> {
    let n = de.spec.dim();
    check_dim(n, state.u.len())?;
    check_dim(n, state.v.len())?;
    let g = de.spec.gradient(&state.u);
    let value = de.spec.value(&state.u) + 0.5 * state.v.norm_squared() + de.lambda * g.dot(&state.v);
    let mut grad = DVector::zeros(2 * n);
    let top = if de.lambda > 0.0 {
        &g + de.spec.require_hessian(&state.u)? * &state.v * de.lambda
    } else {
        g.clone()
    };
    grad.rows_mut(0, n).copy_from(&top);
    grad.rows_mut(n, n).copy_from(&(&state.v + &g * de.lambda));
    Ok((value, grad))
}

/// `F(u, v) = (−v, γv + ∇G(u))` stacked into a `2N` vector.
pub fn field(spec: &PotentialSpec, gamma: f64, state: &PhaseState) -> DVector<f64> {
    let n = state.u.len();
    let g = spec.gradient(&state.u);
    let mut f = DVector::zeros(2 * n);
    f.rows_mut(0, n).copy_from(&(-&state.v));
    f.rows_mut(n, n).copy_from(&(&state.v * gamma + g));
    f
}

/// `λ₀ = γ / (2(M + γ²/2 + ε₀))`.
pub fn lambda_zero(gamma: f64, m: f64) -> f64 {
    gamma / (2.0 * (m + 0.5 * gamma * gamma + LAMBDA_ZERO_EPS))
}

/// `λ₁ = min{¼, 1/(2(M² + 1))}`.
pub fn lambda_one(m: f64) -> f64 {
    0.25_f64.min(1.0 / (2.0 * (m * m + 1.0)))
}

/// `λ⋆ = ½·min{λ₀, λ₁}`.
pub fn lambda_star(gamma: f64, m: f64) -> f64 {
    0.5 * lambda_zero(gamma, m).min(lambda_one(m))
}

/// `α₀ = min{γ − (M + γ²/2)λ, λ/2}` for `0 < λ < λ₀`.
pub fn alpha_quadratic_bound(gamma: f64, m: f64, lambda: f64) -> Result<f64> {
    let l0 = lambda_zero(gamma, m);
    if !(lambda > 0.0 && lambda < l0) {
        return Err(invalid(format!("lambda = {lambda} outside (0, {l0})")));
    }
    Ok((gamma - (m + 0.5 * gamma * gamma) * lambda).min(0.5 * lambda))
}

/// `C = max{(3 + 2λ²M² + 2γ²)/2, 2 + λ²}`, so that
/// `‖∇ℰ_λ‖‖F‖ ≤ C(‖v‖² + ‖∇G‖²)` on the ball.
pub fn norm_product_constant(gamma: f64, m: f64, lambda: f64) -> f64 {
    let l2 = lambda * lambda;
    (0.5 * (3.0 + 2.0 * l2 * m * m + 2.0 * gamma * gamma)).max(2.0 + l2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngleSample {
    /// Minimum of `cos∠(∇ℰ_λ, F)` over non-rest samples.
    pub min_cosine: f64,
    /// Maximum of `‖∇ℰ_λ‖ / ‖F‖` over samples with `‖F‖ > 1e−12`.
    pub max_ratio: f64,
    pub sample_count: usize,
    pub rest_point_equivalence_checked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngleCertificate {
    #[serde(rename = "R")]
    pub radius: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub alpha0: f64,
    pub alpha_certified: f64,
    pub alpha_sampled: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub sample_count: usize,
    pub rest_point_equivalence_checked: bool,
}

impl AngleCertificate {
    pub fn valid(&self) -> bool {
        self.alpha_sampled > 0.0 && self.rest_point_equivalence_checked
    }
}

/// Deterministic phase-space sample set for the ball `‖u‖ ≤ R`, `‖v‖ ≤ R`:
/// the center, about an eighth of the budget on the slice `v = 0` (where the
/// undeformed energy degenerates), and the rest from the product of balls.
pub fn phase_samples(dim: usize, radius: f64, budget: usize, seed: u64) -> Result<Vec<PhaseState>> {
    if 2 * dim + 2 > MAX_HALTON_DIM {
        return Err(Error::Capability(format!("phase sampling supports N <= {}", MAX_HALTON_DIM / 2 - 1)));
    }
    let mut out = Vec::with_capacity(budget);
    if budget == 0 {
        return Ok(out);
    }
    out.push(PhaseState::at_rest(DVector::zeros(dim)));
    let slice = (budget / 8).min(budget - 1);
    let mut ball = BallSampler::new(DVector::zeros(dim), radius, seed ^ 0x5a5a);
    for _ in 0..slice {
        out.push(PhaseState::at_rest(ball.next_point()));
    }
    let mut h = Halton::new(2 * dim + 2, seed);
    while out.len() < budget {
        let x = h.next_point();
        let u = unit_ball_point(&x[..dim], x[dim]) * radius;
        let v = unit_ball_point(&x[dim + 1..2 * dim + 1], x[2 * dim + 1]) * radius;
        out.push(PhaseState { u, v });
    }
    Ok(out)
}

/// Samples the angle and norm ratio between `∇ℰ_λ` and `F` for any `λ ≥ 0`.
pub fn sample_angle(de: &DeformedEnergy, radius: f64, budget: usize, seed: u64) -> Result<AngleSample> {
    if budget == 0 {
        return Err(invalid("sample budget must be positive"));
    }
    if !(radius > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let samples = phase_samples(de.spec.dim(), radius, budget, seed)?;
    let per: Vec<(f64, f64, bool)> = samples
        .par_iter()
        .map(|s| {
            let (_, ge) = energy_value_and_gradient(de, s)?;
            let f = field(&de.spec, de.gamma, s);
            let (gn, fn_) = (ge.norm(), f.norm());
            let rest_ok = (gn <= REST_TOL) == (fn_ <= REST_TOL);
            let cos = if gn > REST_TOL && fn_ > REST_TOL {
                ge.dot(&f) / (gn * fn_)
            } else {
                f64::INFINITY
            };
            let ratio = if fn_ > 1e-12 { gn / fn_ } else { 0.0 };
            Ok((cos, ratio, rest_ok))
        })
        .collect::<Result<_>>()?;
    let min_cosine = per.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_ratio = per.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(AngleSample {
        min_cosine,
        max_ratio,
        sample_count: samples.len(),
        rest_point_equivalence_checked: per.iter().all(|p| p.2),
    })
}

/// Certifies the angle condition for `ℰ_λ` on `‖u‖, ‖v‖ ≤ R`.
pub fn certify_quasigradient(de: &DeformedEnergy, radius: f64, budget: usize, seed: u64) -> Result<AngleCertificate> {
    if budget == 0 {
        return Err(invalid("certificate budget must be positive"));
    }
    let m = hessian_bound(&de.spec, radius, budget, seed)?.m;
    let alpha0 = alpha_quadratic_bound(de.gamma, m, de.lambda)?;
    let c = norm_product_constant(de.gamma, m, de.lambda);
    let s = sample_angle(de, radius, budget, seed)?;
    Ok(AngleCertificate {
        radius,
        gamma: de.gamma,
        lambda: de.lambda,
        alpha0,
        alpha_certified: alpha0 / c,
        alpha_sampled: s.min_cosine,
        m,
        c,
        sample_count: s.sample_count,
        rest_point_equivalence_checked: s.rest_point_equivalence_checked,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsfastBound {
    pub b_sampled: f64,
    pub b_algebraic: f64,
    /// `max{b_sampled, b_algebraic}`.
    pub b: f64,
    pub k1: f64,
    pub k2: f64,
}

/// Bound `b` in `‖∇ℰ_λ‖ ≤ b‖F‖` on the ball. The algebraic value is
/// `√(k₁/k₂)` with `k₁ = 2 + 2λ²max{1, M²}` and `k₂ = min{½, 1/(1 + 2γ²)}`.
pub fn asfast_bound(de: &DeformedEnergy, radius: f64, budget: usize, seed: u64) -> Result<AsfastBound> {
    let m = if de.lambda > 0.0 {
        hessian_bound(&de.spec, radius, budget.max(1), seed)?.m
    } else {
        0.0
    };
    let s = sample_angle(de, radius, budget, seed)?;
    let k1 = 2.0 + 2.0 * de.lambda * de.lambda * (m * m).max(1.0);
    let k2 = 0.5_f64.min(1.0 / (1.0 + 2.0 * de.gamma * de.gamma));
    let b_algebraic = (k1 / k2).sqrt();
    Ok(AsfastBound {
        b_sampled: s.max_ratio,
        b_algebraic,
        b: s.max_ratio.max(b_algebraic),
        k1,
        k2,
    })
}
