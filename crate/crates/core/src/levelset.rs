//! Minimal gradient norm on level sets: `ψ(r) = min{½‖∇G(u)‖² : G(u) = r}`
//! near a critical point, with the Lagrange multiplier of the minimiser.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, invalid, Error, Result};
use crate::potential::{PotentialSpec, CRITICAL_TOL};
use crate::sampling::sphere_directions;

/// Largest dimension the multi-start search accepts.
pub const MAX_LEVELSET_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelOptions {
    pub starts: usize,
    /// Start points are searched along rays of this length from `ū`.
    pub start_radius: f64,
    /// Estimate the multiplier by finite differences when there is no Hessian.
    pub fd_multiplier: bool,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for LevelOptions {
    fn default() -> Self {
        LevelOptions {
            starts: 16,
            start_radius: 1.0,
            fd_multiplier: false,
            seed: 0,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelPoint {
    pub r: f64,
    pub u: Vec<f64>,
    pub psi: f64,
    /// `NaN` when the Hessian is unavailable and no estimate was requested.
    pub multiplier: f64,
    pub multiplier_available: bool,
    pub converged: bool,
    pub iterations: usize,
}

struct Shifted<'a> {
    spec: &'a PotentialSpec,
    g0: f64,
}

impl Shifted<'_> {
    fn value(&self, u: &DVector<f64>) -> f64 {
        self.spec.value(u) - self.g0
    }

    /// Residual accepted on `G = r`: relative to `r`, floored by the rounding
    /// of `G(u) − G(ū)`.
    fn level_tol(&self, r: f64, rel: f64) -> f64 {
        rel * r + 8.0 * f64::EPSILON * (self.g0.abs() + r)
    }
}

/// Scalar Newton along `∇G` back onto `G = r`.
fn restore(f: &Shifted<'_>, u: &mut DVector<f64>, r: f64) {
    for _ in 0..3 {
        let res = r - f.value(u);
        if res.abs() <= f.level_tol(r, 1e-12) {
            return;
        }
        let g = f.spec.gradient(u);
        let gg = g.norm_squared();
        if gg == 0.0 {
            return;
        }
        *u += g * (res / gg);
    }
}

/// First crossing of `G = r` along `ū + τd`, `τ ∈ (0, τ_max]`.
fn ray_root(f: &Shifted<'_>, bar: &DVector<f64>, d: &DVector<f64>, r: f64, tau_max: f64) -> Option<DVector<f64>> {
    const POINTS: usize = 241;
    let mut lo = 0.0;
    let mut hi = None;
    for j in 0..POINTS {
        let tau = tau_max * 10f64.powf(-16.0 * (1.0 - j as f64 / (POINTS - 1) as f64));
        if f.value(&(bar + d * tau)) >= r {
            hi = Some(tau);
            break;
        }
        lo = tau;
    }
    let mut hi = hi?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f.value(&(bar + d * mid)) >= r {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut u = bar + d * hi;
    restore(f, &mut u, r);
    Some(u)
}

fn half_grad_sq(spec: &PotentialSpec, u: &DVector<f64>) -> f64 {
    0.5 * spec.gradient(u).norm_squared()
}

/// Projected gradient descent of `½‖∇G‖²` on `G = r` from a level point.
fn descend(f: &Shifted<'_>, bar: &DVector<f64>, mut u: DVector<f64>, r: f64, max_iter: usize) -> (DVector<f64>, bool, usize) {
    let spec = f.spec;
    let mut obj = half_grad_sq(spec, &u);
    let mut alpha = f64::NAN;
    for it in 0..max_iter {
        let g = spec.gradient(&u);
        let gg = g.norm_squared();
        if gg == 0.0 {
            return (u, true, it);
        }
        let hg = spec.hessian_times(&u, &g);
        let p = &hg - &g * (hg.dot(&g) / gg);
        let pn = p.norm();
        if pn <= 1e-14 * hg.norm() || pn == 0.0 {
            return (u, true, it);
        }
        if !alpha.is_finite() {
            alpha = gg / hg.norm_squared().max(f64::MIN_POSITIVE);
        }
        let scale = (&u - bar).norm();
        let mut accepted = None;
        for _ in 0..80 {
            let mut cand = &u - &p * alpha;
            restore(f, &mut cand, r);
            let c_obj = half_grad_sq(spec, &cand);
            if c_obj <= obj - 1e-4 * alpha * pn * pn && (f.value(&cand) - r).abs() <= f.level_tol(r, 1e-9) {
                accepted = Some((cand, c_obj));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, c_obj)) = accepted else {
            return (u, true, it);
        };
        let step = (&cand - &u).norm();
        u = cand;
        obj = c_obj;
        alpha *= 2.0;
        if step <= 1e-10 * scale {
            return (u, true, it + 1);
        }
    }
    (u, false, max_iter)
}

fn check_level_inputs(spec: &PotentialSpec, bar: &DVector<f64>, opts: &LevelOptions) -> Result<()> {
    check_dim(spec.dim(), bar.len())?;
    if spec.dim() > MAX_LEVELSET_DIM {
        return Err(Error::Capability(format!(
            "level-set search supports N <= {MAX_LEVELSET_DIM}, got {}",
            spec.dim()
        )));
    }
    if spec.gradient(bar).norm() > CRITICAL_TOL {
        return Err(invalid("base point is not a critical point"));
    }
    if opts.starts == 0 || !(opts.start_radius > 0.0) {
        return Err(invalid("level-set search needs starts >= 1 and start_radius > 0"));
    }
    Ok(())
}

/// Multi-start local solve of `min ½‖∇G‖²` subject to `G(u) − G(ū) = r`.
pub fn minimize_on_level(spec: &PotentialSpec, bar: &DVector<f64>, r: f64, opts: &LevelOptions) -> Result<LevelPoint> {
    check_level_inputs(spec, bar, opts)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("level r must be positive, got {r}")));
    }
    let f = Shifted {
        spec,
        g0: spec.value(bar),
    };
    let mut best: Option<(DVector<f64>, f64, bool, usize)> = None;
    for d in sphere_directions(spec.dim(), opts.starts, opts.seed) {
        let Some(u0) = ray_root(&f, bar, &d, r, opts.start_radius) else {
            continue;
        };
        let (u, conv, iters) = descend(&f, bar, u0, r, opts.max_iter);
        let psi = half_grad_sq(spec, &u);
        if best.as_ref().is_none_or(|b| psi < b.1) {
            best = Some((u, psi, conv, iters));
        }
    }
    let (u, psi, converged, iterations) = best.ok_or(Error::LevelNotReached { r })?;
    let g = spec.gradient(&u);
    let gg = g.norm_squared();
    let (multiplier, available) = if spec.has_hessian() || opts.fd_multiplier {
        (spec.hessian_times(&u, &g).dot(&g) / gg, true)
    } else {
        (f64::NAN, false)
    };
    Ok(LevelPoint {
        r,
        u: u.iter().copied().collect(),
        psi,
        multiplier,
        multiplier_available: available,
        converged,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSetProfile {
    /// Decreasing.
    pub r_grid: Vec<f64>,
    pub psi_values: Vec<f64>,
    pub minimizers: Vec<Vec<f64>>,
    pub multipliers: Vec<f64>,
    pub converged: Vec<bool>,
    /// Error message for points where the solve failed.
    pub failures: Vec<Option<String>>,
    pub lambda_bar: f64,
    pub ratio_max: f64,
    /// `ψ(r)/r` at the smallest valid `r` is at most twice its value at the
    /// largest valid `r`.
    pub bounded: bool,
    /// Starts were restricted to this ball around `ū`.
    pub start_radius: f64,
}

impl LevelSetProfile {
    pub fn ratios(&self) -> Vec<f64> {
        self.r_grid
            .iter()
            .zip(&self.psi_values)
            .map(|(r, p)| p / r)
            .collect()
    }

    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.r_grid.len())
            .filter(|&i| self.failures[i].is_none() && self.psi_values[i].is_finite())
            .collect()
    }

    pub fn verdict(&self) -> &'static str {
        if self.bounded {
            "bounded"
        } else {
            "unbounded"
        }
    }
}

/// Geometric grid from `r_hi` down to `r_lo` with the given density.
pub fn level_grid(r_hi: f64, r_lo: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    if !(r_hi > r_lo && r_lo > 0.0 && r_hi.is_finite()) {
        return Err(invalid("need r_hi > r_lo > 0"));
    }
    if points_per_decade == 0 {
        return Err(invalid("points_per_decade must be positive"));
    }
    let decades = (r_hi / r_lo).log10();
    let steps = ((decades * points_per_decade as f64).round() as usize).max(1);
    Ok((0..=steps)
        .map(|i| {
            if i == steps {
                r_lo
            } else {
                r_hi * 10f64.powf(-decades * i as f64 / steps as f64)
            }
        })
        .collect())
}

pub fn psi_profile(
    spec: &PotentialSpec,
    bar: &DVector<f64>,
    r_hi: f64,
    r_lo: f64,
    points_per_decade: usize,
    opts: &LevelOptions,
) -> Result<LevelSetProfile> {
    check_level_inputs(spec, bar, opts)?;
    let grid = level_grid(r_hi, r_lo, points_per_decade)?;
    let points: Vec<Result<LevelPoint>> = grid
        .par_iter()
        .map(|&r| minimize_on_level(spec, bar, r, opts))
        .collect();
    let n = grid.len();
    let mut prof = LevelSetProfile {
        r_grid: grid,
        psi_values: Vec::with_capacity(n),
        minimizers: Vec::with_capacity(n),
        multipliers: Vec::with_capacity(n),
        converged: Vec::with_capacity(n),
        failures: Vec::with_capacity(n),
        lambda_bar: f64::NAN,
        ratio_max: f64::NAN,
        bounded: false,
        start_radius: opts.start_radius,
    };
    for p in points {
        match p {
            Ok(p) => {
                prof.psi_values.push(p.psi);
                prof.minimizers.push(p.u);
                prof.multipliers.push(p.multiplier);
                prof.converged.push(p.converged);
                prof.failures.push(None);
            }
            Err(e) => {
                prof.psi_values.push(f64::NAN);
                prof.minimizers.push(Vec::new());
                prof.multipliers.push(f64::NAN);
                prof.converged.push(false);
                prof.failures.push(Some(e.to_string()));
            }
        }
    }
    let valid = prof.valid_indices();
    let ratios = prof.ratios();
    if let (Some(&first), Some(&last)) = (valid.first(), valid.last()) {
        prof.ratio_max = valid.iter().map(|&i| ratios[i]).fold(f64::NEG_INFINITY, f64::max);
        prof.bounded = ratios[last] <= 2.0 * ratios[first];
        let mults: Vec<f64> = valid
            .iter()
            .map(|&i| prof.multipliers[i])
            .filter(|m| m.is_finite())
            .collect();
        if !mults.is_empty() {
            prof.lambda_bar = mults.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(prof)
}

/// Pointwise lower bound `r ↦ 1/√(2ψ(r))` on `φ'` implied by the profile.
pub fn implied_desingularizer_bound(profile: &LevelSetProfile) -> Result<Vec<(f64, f64)>> {
    let valid = profile.valid_indices();
    if valid.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} valid profile points, need 2",
            valid.len()
        )));
    }
    Ok(valid
        .iter()
        .map(|&i| (profile.r_grid[i], 1.0 / (2.0 * profile.psi_values[i]).sqrt()))
        .collect())
}
