//! Desingularizing functions and the one-dimensional worst-case gradient
//! dynamics `γ' + ψ'(γ) = 0`, where `ψ = φ⁻¹`.
//!
//! Two representations are supported: power type `φ(s) = c·s^θ`, and a table
//! of `(s, φ(s))` samples interpolated by a monotone cubic in log-log
//! coordinates. The log-log form keeps `φ' > 0` between nodes and reproduces
//! pure power laws exactly.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ode::{self, Control, OdeOptions};
use crate::potential::{PotentialSpec, CRITICAL_TOL};
use crate::sampling::GradedBallSampler;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesingKind {
    Power { c: f64, theta: f64 },
    Tabulated(Table),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Desingularizer {
    pub kind: DesingKind,
    /// `r₀`: φ is defined on `(0, r₀)`. May be infinite for power type.
    pub domain_radius: f64,
}

/// Monotone cubic (Fritsch-Carlson) through `(ln s, ln φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    log_s: Vec<f64>,
    log_phi: Vec<f64>,
    slopes: Vec<f64>,
}

impl Table {
    fn new(s: &[f64], phi: &[f64]) -> Result<Self> {
        if s.len() != phi.len() {
            return Err(invalid("table columns differ in length"));
        }
        if s.len() < 2 {
            return Err(invalid("table needs at least two rows"));
        }
        if s.iter().chain(phi).any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(invalid("table entries must be finite and positive"));
        }
        if s.windows(2).any(|w| w[1] <= w[0]) || phi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("table must be strictly increasing in both columns"));
        }
        let log_s: Vec<f64> = s.iter().map(|x| x.ln()).collect();
        let log_phi: Vec<f64> = phi.iter().map(|x| x.ln()).collect();
        let slopes = pchip_slopes(&log_s, &log_phi);
        Ok(Table {
            log_s,
            log_phi,
            slopes,
        })
    }

    fn s_min(&self) -> f64 {
        self.log_s[0].exp()
    }

    fn s_max(&self) -> f64 {
        self.log_s[self.log_s.len() - 1].exp()
    }

    /// Interval index `k` with `log_s[k] <= x <= log_s[k+1]`.
    fn locate(&self, x: f64) -> usize {
        let n = self.log_s.len();
        match self.log_s.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    /// Returns `(L(x), L'(x))` with `L = ln φ ∘ exp`. Below the first node the
    /// end slope is continued linearly (a power-law tail).
    fn eval(&self, x: f64) -> (f64, f64) {
        if x <= self.log_s[0] {
            let d = self.slopes[0];
            return (self.log_phi[0] + d * (x - self.log_s[0]), d);
        }
        let k = self.locate(x);
        let (x0, x1) = (self.log_s[k], self.log_s[k + 1]);
        let (y0, y1) = (self.log_phi[k], self.log_phi[k + 1]);
        let (d0, d1) = (self.slopes[k], self.slopes[k + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let val = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dh00 = (6.0 * t2 - 6.0 * t) / h;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = (-6.0 * t2 + 6.0 * t) / h;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let der = dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1;
        (val, der)
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn pchip_end(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

// 8-point Gauss-Legendre on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Antiderivative of `(φ')²` for `φ = c·s^θ`.
fn power_mu(c: f64, theta: f64, s: f64) -> f64 {
    if (theta - 0.5).abs() < 1e-15 {
        0.25 * c * c * s.ln()
    } else {
        c * c * theta * theta * s.powf(2.0 * theta - 1.0) / (2.0 * theta - 1.0)
    }
}

impl Desingularizer {
    pub fn power(c: f64, theta: f64) -> Result<Self> {
        Self::power_on(c, theta, f64::INFINITY)
    }

    pub fn power_on(c: f64, theta: f64, domain_radius: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid(format!("power desingularizer needs c > 0, got {c}")));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(invalid(format!(
                "power desingularizer needs theta in (0, 1], got {theta}"
            )));
        }
        if !(domain_radius > 0.0) {
            return Err(invalid("domain radius must be positive"));
        }
        Ok(Desingularizer {
            kind: DesingKind::Power { c, theta },
            domain_radius,
        })
    }

    /// Tabulated φ; the domain is `(0, s_max]` of the table, with a power-law
    /// continuation below the first node.
    pub fn tabulated(s: &[f64], phi: &[f64]) -> Result<Self> {
        let table = Table::new(s, phi)?;
        let r0 = table.s_max();
        Ok(Desingularizer {
            kind: DesingKind::Tabulated(table),
            domain_radius: r0,
        })
    }

    /// Tabulates `f` on `count` log-spaced points of `[s_lo, s_hi]`.
    pub fn tabulate(f: impl Fn(f64) -> f64, s_lo: f64, s_hi: f64, count: usize) -> Result<Self> {
        if !(s_lo > 0.0 && s_hi > s_lo && count >= 2) {
            return Err(invalid("tabulate needs 0 < s_lo < s_hi and count >= 2"));
        }
        let (a, b) = (s_lo.ln(), s_hi.ln());
        let s: Vec<f64> = (0..count)
            .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
            .collect();
        let phi: Vec<f64> = s.iter().map(|&x| f(x)).collect();
        Self::tabulated(&s, &phi)
    }

    pub fn theta(&self) -> Option<f64> {
        match self.kind {
            DesingKind::Power { theta, .. } => Some(theta),
            DesingKind::Tabulated(_) => None,
        }
    }

    /// Same function multiplied by `k > 0`.
    pub fn scaled(&self, k: f64) -> Self {
        let kind = match &self.kind {
            DesingKind::Power { c, theta } => DesingKind::Power {
                c: c * k,
                theta: *theta,
            },
            DesingKind::Tabulated(t) => DesingKind::Tabulated(Table {
                log_s: t.log_s.clone(),
                log_phi: t.log_phi.iter().map(|y| y + k.ln()).collect(),
                slopes: t.slopes.clone(),
            }),
        };
        Desingularizer {
            kind,
            domain_radius: self.domain_radius,
        }
    }

    fn check_s(&self, s: f64) -> Result<()> {
        if s > 0.0 && s < self.domain_radius || (s == self.domain_radius && self.is_tabulated()) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "s = {s} outside (0, {})",
                self.domain_radius
            )))
        }
    }

    fn is_tabulated(&self) -> bool {
        matches!(self.kind, DesingKind::Tabulated(_))
    }

    /// Upper end of the domain of ψ.
    pub fn value_radius(&self) -> f64 {
        match &self.kind {
            DesingKind::Power { c, theta } => c * self.domain_radius.powf(*theta),
            DesingKind::Tabulated(t) => t.log_phi[t.log_phi.len() - 1].exp(),
        }
    }

    fn check_y(&self, y: f64) -> Result<()> {
        let top = self.value_radius();
        if y > 0.0 && (y < top || (y == top && self.is_tabulated())) {
            Ok(())
        } else {
            Err(Error::Domain(format!("value {y} outside (0, {top})")))
        }
    }

    pub fn phi(&self, s: f64) -> Result<f64> {
        self.check_s(s)?;
        Ok(match &self.kind {
            DesingKind::Power { c, theta } => c * s.powf(*theta),
            DesingKind::Tabulated(t) => t.eval(s.ln()).0.exp(),
        })
    }

    pub fn phi_prime(&self, s: f64) -> Result<f64> {
        self.check_s(s)?;
        Ok(match &self.kind {
            DesingKind::Power { c, theta } => c * theta * s.powf(theta - 1.0),
            DesingKind::Tabulated(t) => {
                let (l, dl) = t.eval(s.ln());
                l.exp() / s * dl
            }
        })
    }

    /// `ψ = φ⁻¹`.
    pub fn psi(&self, y: f64) -> Result<f64> {
        self.check_y(y)?;
        Ok(match &self.kind {
            DesingKind::Power { c, theta } => (y / c).powf(1.0 / theta),
            DesingKind::Tabulated(t) => self.invert_table(t, y.ln()).exp(),
        })
    }

    pub fn psi_prime(&self, y: f64) -> Result<f64> {
        self.check_y(y)?;
        match &self.kind {
            DesingKind::Power { c, theta } => {
                Ok((y / c).powf((1.0 - theta) / theta) / (c * theta))
            }
            DesingKind::Tabulated(t) => {
                let x = self.invert_table(t, y.ln());
                let (l, dl) = t.eval(x);
                // φ'(s) = φ/s · L'
                Ok(1.0 / (l.exp() / x.exp() * dl))
            }
        }
    }

    /// Solves `L(x) = target` for `x = ln s`.
    fn invert_table(&self, t: &Table, target: f64) -> f64 {
        if target <= t.log_phi[0] {
            return t.log_s[0] + (target - t.log_phi[0]) / t.slopes[0];
        }
        let k = t.log_phi.partition_point(|&v| v <= target).clamp(1, t.log_phi.len() - 1);
        let (mut lo, mut hi) = (t.log_s[k - 1], t.log_s[k]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if t.eval(mid).0 < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// An antiderivative of `(φ')²`. Power type uses the closed form; the
    /// tabulated kind is normalised so that `μ(s_max) = 0`.
    pub fn mu(&self, s: f64) -> Result<f64> {
        self.check_s(s)?;
        Ok(match &self.kind {
            DesingKind::Power { c, theta } => power_mu(*c, *theta, s),
            DesingKind::Tabulated(t) => table_mu(t, s),
        })
    }

    /// Inverse of [`Self::mu`].
    pub fn mu_inverse(&self, m: f64) -> Result<f64> {
        match &self.kind {
            DesingKind::Power { c, theta } => {
                let s = if (theta - 0.5).abs() < 1e-15 {
                    (4.0 * m / (c * c)).exp()
                } else {
                    let e = 2.0 * theta - 1.0;
                    (m * e / (c * c * theta * theta)).powf(1.0 / e)
                };
                if s > 0.0 && s < self.domain_radius {
                    Ok(s)
                } else {
                    Err(Error::Domain(format!("mu value {m} has no preimage")))
                }
            }
            DesingKind::Tabulated(t) => {
                let top = table_mu(t, t.s_max());
                if !(m <= top) {
                    return Err(Error::Domain(format!("mu value {m} above table")));
                }
                // μ is increasing; bracket in ln s
                let mut lo = t.log_s[0];
                let mut step = 1.0;
                while table_mu(t, lo.exp()) > m {
                    lo -= step;
                    step *= 2.0;
                    if lo < -700.0 {
                        return Err(Error::Domain(format!("mu value {m} has no preimage")));
                    }
                }
                let mut hi = t.log_s[t.log_s.len() - 1];
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if table_mu(t, mid.exp()) < m {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok((0.5 * (lo + hi)).exp())
            }
        }
    }

    /// Value of the worst-case curve through `gamma0` at time `s` (any sign).
    pub fn worst_case_at(&self, gamma0: f64, s: f64) -> Result<f64> {
        match &self.kind {
            DesingKind::Power { c, theta } if *theta < 0.5 => {
                let q = (2.0 * theta - 1.0) / theta;
                let k = (1.0 - 2.0 * theta) / (theta * theta * c.powf(1.0 / theta));
                let base = gamma0.powf(q) + k * s;
                Ok(if base <= 0.0 {
                    f64::INFINITY
                } else {
                    base.powf(1.0 / q)
                })
            }
            DesingKind::Power { c, theta } if *theta == 0.5 => {
                Ok(gamma0 * (-2.0 * s / (c * c)).exp())
            }
            DesingKind::Power { theta, .. } => Err(Error::Capability(format!(
                "theta = {theta} > 1/2 gives finite-time extinction"
            ))),
            DesingKind::Tabulated(_) => {
                let m0 = self.mu(self.psi(gamma0)?)?;
                self.phi(self.mu_inverse(m0 - s)?)
            }
        }
    }

    /// Time the worst-case curve takes to go from `gamma0` to `target`
    /// (negative when `target > gamma0`).
    pub fn worst_case_time_to(&self, gamma0: f64, target: f64) -> Result<f64> {
        Ok(self.mu(self.psi(gamma0)?)? - self.mu(self.psi(target)?)?)
    }
}

fn table_mu(t: &Table, s: f64) -> f64 {
    // ∫_s^{s_max} φ'(x)² dx in y = ln x, integrand φ'(e^y)² e^y
    let integrand = |y: f64| {
        let (l, dl) = t.eval(y);
        let phi = l.exp();
        let x = y.exp();
        let dphi = phi / x * dl;
        dphi * dphi * x
    };
    let y = s.ln();
    let n = t.log_s.len();
    let mut total = 0.0;
    if y < t.log_s[0] {
        // power tail: φ = A x^θ below the first node
        let theta = t.slopes[0];
        let a = (t.log_phi[0] - theta * t.log_s[0]).exp();
        total += power_mu(a, theta, t.s_min()) - power_mu(a, theta, s);
        for k in 0..n - 1 {
            total += gauss_legendre(t.log_s[k], t.log_s[k + 1], integrand);
        }
    } else {
        let k0 = t.locate(y);
        total += gauss_legendre(y, t.log_s[k0 + 1], integrand);
        for k in k0 + 1..n - 1 {
            total += gauss_legendre(t.log_s[k], t.log_s[k + 1], integrand);
        }
    }
    -total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosedForm {
    PowerSubHalf,
    PowerHalf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorstCaseCurve {
    pub desingularizer: Desingularizer,
    pub gamma0: f64,
    pub closed_form: Option<ClosedForm>,
    pub samples: Vec<(f64, f64)>,
}

/// Solves `γ' + ψ'(γ) = 0`, `γ(0) = gamma0` on the given time grid.
pub fn worst_case_curve(desing: &Desingularizer, gamma0: f64, t_grid: &[f64]) -> Result<WorstCaseCurve> {
    if !(gamma0 > 0.0 && gamma0 < desing.value_radius()) {
        return Err(invalid(format!(
            "gamma0 = {gamma0} outside (0, {})",
            desing.value_radius()
        )));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.iter().any(|&t| t < 0.0) {
        return Err(invalid("time grid must be non-negative and sorted"));
    }
    match &desing.kind {
        DesingKind::Power { theta, .. } => {
            let closed_form = if *theta < 0.5 {
                ClosedForm::PowerSubHalf
            } else if *theta == 0.5 {
                ClosedForm::PowerHalf
            } else {
                return Err(Error::Capability(format!(
                    "theta = {theta} > 1/2 gives finite-time extinction"
                )));
            };
            let samples = t_grid
                .iter()
                .map(|&t| Ok((t, desing.worst_case_at(gamma0, t)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(WorstCaseCurve {
                desingularizer: desing.clone(),
                gamma0,
                closed_form: Some(closed_form),
                samples,
            })
        }
        DesingKind::Tabulated(t) => {
            let grid: Vec<f64> = t.log_s.iter().map(|x| x.exp()).collect();
            if !check_sqrt_lower_bound(desing, &grid).pass {
                return Err(Error::Capability(
                    "tabulated desingularizer fails the sqrt lower bound".into(),
                ));
            }
            let samples = integrate_worst_case(desing, gamma0, t_grid)?;
            Ok(WorstCaseCurve {
                desingularizer: desing.clone(),
                gamma0,
                closed_form: None,
                samples,
            })
        }
    }
}

fn integrate_worst_case(desing: &Desingularizer, gamma0: f64, t_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let t_end = t_grid.last().copied().unwrap_or(0.0);
    let mut out = Vec::with_capacity(t_grid.len());
    let mut next = 0;
    while next < t_grid.len() && t_grid[next] == 0.0 {
        out.push((0.0, gamma0));
        next += 1;
    }
    if next == t_grid.len() {
        return Ok(out);
    }
    // integrate in log γ: (ln γ)' = -ψ'(γ)/γ keeps relative accuracy as γ decays
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let g = y[0].exp();
        dy[0] = -desing.psi_prime(g).unwrap_or(f64::NAN) / g;
    };
    let opts = OdeOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        ..OdeOptions::default()
    };
    let mut failure = None;
    ode::solve(rhs, 0.0, &[gamma0.ln()], t_end, &opts, |step| {
        while next < t_grid.len() && t_grid[next] <= step.t1 {
            let y = step.interpolate(t_grid[next]);
            out.push((t_grid[next], y[0].exp()));
            next += 1;
        }
        if !step.y1[0].is_finite() {
            failure = Some(step.t1);
            return Control::Stop;
        }
        Control::Continue
    })
    .map_err(|e| Error::Domain(format!("worst-case integration failed: {e}")))?;
    if let Some(t) = failure {
        return Err(Error::Domain(format!("worst-case curve left the domain at t = {t}")));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqrtBound {
    pub beta_best: f64,
    pub pass: bool,
}

/// Checks `φ'(s) ≥ β/√s`. Power type is decided analytically (`θ ≤ ½`);
/// `beta_best` is still the grid minimum of `φ'(s)·√s`.
pub fn check_sqrt_lower_bound(desing: &Desingularizer, s_grid: &[f64]) -> SqrtBound {
    let beta_best = s_grid
        .iter()
        .filter_map(|&s| desing.phi_prime(s).ok().map(|d| d * s.sqrt()))
        .fold(f64::INFINITY, f64::min);
    let pass = match desing.kind {
        DesingKind::Power { theta, .. } => theta <= 0.5,
        DesingKind::Tabulated(_) => beta_best.is_finite() && beta_best >= 1e-9,
    };
    SqrtBound { beta_best, pass }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LojasiewiczFit {
    pub theta_hat: f64,
    pub c_hat: f64,
    pub residual: f64,
    pub pairs_used: usize,
}

pub const DEFAULT_EXPONENT_WINDOW: (f64, f64) = (1e-8, 1e-2);

/// Fits `ln n = (1-θ)·ln g + b` over pairs `(g, n) = (|G(u)-G(u∞)|, ‖∇G(u)‖)`
/// whose `g` lies in the window.
pub fn estimate_lojasiewicz(pairs: &[(f64, f64)], window: (f64, f64)) -> Result<LojasiewiczFit> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(g, n)| *g >= window.0 && *g <= window.1 && *g > 0.0 && *n > 0.0)
        .map(|(g, n)| (g.ln(), n.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} pairs in window [{:e}, {:e}], need 10",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let (slope, intercept, residual) = least_squares(&pts);
    let theta_hat = 1.0 - slope;
    Ok(LojasiewiczFit {
        theta_hat,
        c_hat: 1.0 / (theta_hat * intercept.exp()),
        residual,
        pairs_used: pts.len(),
    })
}

/// Ordinary least squares `y = slope·x + intercept`; returns RMS residual too.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (slope * p.0 + intercept);
            r * r
        })
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlCheck {
    pub margin: f64,
    pub pass: bool,
    pub samples_used: usize,
}

/// Samples `min φ'(|G(u)-G(ū)|)·‖∇G(u)‖` over `B(ū, η)`. Radii are graded
/// log-uniformly over twelve decades so the neighbourhood of `ū` is probed.
pub fn check_kl_inequality(
    spec: &PotentialSpec,
    critical: &DVector<f64>,
    desing: &Desingularizer,
    eta: f64,
    budget: usize,
    seed: u64,
) -> Result<KlCheck> {
    crate::error::check_dim(spec.dim(), critical.len())?;
    if !(eta > 0.0) || budget == 0 {
        return Err(invalid("KL check needs eta > 0 and a positive budget"));
    }
    let g0 = spec.value(critical);
    if spec.gradient(critical).norm() > CRITICAL_TOL {
        return Err(invalid("base point is not a critical point"));
    }
    let mut sampler = GradedBallSampler::new(critical.clone(), eta, 12.0, seed);
    let mut margin = f64::INFINITY;
    let mut used = 0;
    for _ in 0..budget {
        let u = sampler.next_point();
        let g = (spec.value(&u) - g0).abs();
        if g == 0.0 || g >= desing.domain_radius {
            continue;
        }
        let Ok(dphi) = desing.phi_prime(g) else { continue };
        margin = margin.min(dphi * spec.gradient(&u).norm());
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateSamples(
            "every sample has G(u) = G(ū); the critical point is trivial".into(),
        ));
    }
    Ok(KlCheck {
        margin,
        pass: margin >= 1.0 - 1e-6,
        samples_used: used,
    })
}

/// Parses `power(c=1.0, theta=0.5)` or `table(file=path.csv)`.
pub fn parse_desingularizer(text: &str, base_dir: Option<&std::path::Path>) -> Result<Desingularizer> {
    let text = text.trim();
    let (head, rest) = text
        .split_once('(')
        .ok_or_else(|| Error::Config(format!("malformed desingularizer `{text}`")))?;
    let body = rest
        .strip_suffix(')')
        .ok_or_else(|| Error::Config(format!("missing `)` in `{text}`")))?;
    let mut args = std::collections::BTreeMap::new();
    for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{part}`")))?;
        args.insert(k.trim().to_string(), v.trim().to_string());
    }
    let num = |key: &str| -> Result<f64> {
        args.get(key)
            .ok_or_else(|| Error::Config(format!("`{head}` needs `{key}`")))?
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("`{key}` is not a number")))
    };
    match head.trim() {
        "power" => {
            let r0 = if args.contains_key("r0") { num("r0")? } else { f64::INFINITY };
            Desingularizer::power_on(num("c")?, num("theta")?, r0)
                .map_err(|e| Error::Config(e.to_string()))
        }
        "table" => {
            let file = args
                .get("file")
                .ok_or_else(|| Error::Config("`table` needs `file`".into()))?;
            let path = match base_dir {
                Some(d) => d.join(file),
                None => std::path::PathBuf::from(file),
            };
            let (s, phi) = crate::io::read_phi_table(&path)?;
            Desingularizer::tabulated(&s, &phi).map_err(|e| Error::Config(e.to_string()))
        }
        other => Err(Error::Config(format!("unknown desingularizer `{other}`"))),
    }
}
