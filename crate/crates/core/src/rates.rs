//! Convergence-rate checks on integrated trajectories: the distance envelope
//! `‖U − U∞‖ ≤ φ(ℰ − ℰ∞)/α`, the worst-case curve envelope
//! `‖u − u∞‖ ≤ d·γ(ct + t₀)`, the matching energy envelope, and empirical
//! power versus exponential decay fits.

use nalgebra::DVector;
use serde::Serialize;

use crate::deformation::{
    certify_quasigradient, energy_value_and_gradient, lambda_star, AngleCertificate, DeformedEnergy,
};
use crate::desingularize::{
    check_sqrt_lower_bound, estimate_lojasiewicz, least_squares, DesingKind, Desingularizer, LojasiewiczFit,
    SqrtBound, DEFAULT_EXPONENT_WINDOW,
};
use crate::dynamics::{integrate, velocity_l1, velocity_l1_between, Classification, DynamicsConfig, PhaseState, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::potential::{hessian_bound, PotentialSpec, CRITICAL_TOL};

/// Checks start once the trajectory is within this fraction of its initial
/// distance to the limit.
pub const T_START_FRACTION: f64 = 1e-2;

const ENVELOPE_SLACK: f64 = 1e-9;
const ALIGNMENT_FRACTION: f64 = 0.1;
const C_TIME_EXPONENTS: std::ops::RangeInclusive<i32> = -12..=6;
const AMBIGUITY_RATIO: f64 = 1.1;
const FIT_BINS: usize = 256;

fn require_converged(traj: &Trajectory, what: &str) -> Result<()> {
    if matches!(traj.classification, Classification::Converged { .. }) {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "{what} needs a converged trajectory, got {}",
            traj.classification.label()
        )))
    }
}

/// First output time with `‖u(t) − u∞‖ ≤ 10⁻²·‖u(0) − u∞‖`.
pub fn default_t_start(traj: &Trajectory, limit: &DVector<f64>) -> f64 {
    let d = traj.distances_to(limit);
    let thr = T_START_FRACTION * d[0];
    d.iter()
        .position(|&x| x <= thr)
        .map_or(traj.final_time(), |i| traj.times[i])
}

/// Polishes the final position of a converged run to a critical point.
///
/// Newton steps with a pseudo-inverse Hessian are taken while they reduce
/// `‖∇G‖`. A known critical point is preferred when the polished point lands
/// on it.
pub fn refine_limit(spec: &PotentialSpec, traj: &Trajectory) -> Result<DVector<f64>> {
    require_converged(traj, "refine_limit")?;
    let mut u = traj.final_state().u.clone();
    let known = spec.known_critical_point.clone();
    if !spec.has_hessian() {
        return Ok(match known {
            Some(k) if (&u - &k).norm() <= 1e-3 => k,
            _ => u,
        });
    }
    let mut gn = spec.gradient(&u).norm();
    for _ in 0..400 {
        if gn == 0.0 {
            break;
        }
        let h = spec.require_hessian(&u)?;
        let tol = 1e-14 * h.amax().max(f64::MIN_POSITIVE);
        let Ok(pinv) = h.pseudo_inverse(tol) else { break };
        let cand = &u - pinv * spec.gradient(&u);
        let cn = spec.gradient(&cand).norm();
        if !(cn < gn) {
            break;
        }
        u = cand;
        gn = cn;
    }
    if let Some(k) = known {
        if (&u - &k).norm() <= 1e-6 {
            return Ok(k);
        }
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeVerdict {
    pub pass: bool,
    /// Largest `lhs − rhs` over checked times (negative when dominated).
    pub max_violation: f64,
    pub checked: usize,
    /// Times skipped because the energy gap was not positive.
    pub degenerate: usize,
    pub t_start: f64,
}

/// `‖U(t) − U∞‖ ≤ φ(ℰ_λ(U(t)) − ℰ_λ(U∞))/α + 10⁻⁹` for output times
/// `t ≥ t_start`, in the phase-space norm.
pub fn check_distance_envelope(
    traj: &Trajectory,
    limit: &DVector<f64>,
    desing: &Desingularizer,
    alpha: f64,
    energy: &DeformedEnergy,
    t_start: Option<f64>,
) -> Result<EnvelopeVerdict> {
    require_converged(traj, "check_distance_envelope")?;
    if !(alpha > 0.0) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    let t_s = t_start.unwrap_or_else(|| default_t_start(traj, limit));
    let rest = PhaseState::at_rest(limit.clone());
    let (e_inf, _) = energy_value_and_gradient(energy, &rest)?;
    let mut verdict = EnvelopeVerdict {
        pass: true,
        max_violation: f64::NEG_INFINITY,
        checked: 0,
        degenerate: 0,
        t_start: t_s,
    };
    for (t, s) in traj.times.iter().zip(&traj.states) {
        if *t < t_s {
            continue;
        }
        let lhs = (&s.u - limit).norm().hypot(s.v.norm());
        let (e, _) = energy_value_and_gradient(energy, s)?;
        let gap = e - e_inf;
        let rhs = if gap > 0.0 {
            match desing.phi(gap) {
                Ok(p) => p / alpha,
                Err(_) => {
                    verdict.degenerate += 1;
                    continue;
                }
            }
        } else if lhs == 0.0 {
            0.0
        } else {
            verdict.degenerate += 1;
            continue;
        };
        let viol = lhs - rhs - ENVELOPE_SLACK;
        verdict.max_violation = verdict.max_violation.max(lhs - rhs);
        verdict.checked += 1;
        if viol > 0.0 {
            verdict.pass = false;
        }
    }
    Ok(verdict)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCaseFit {
    pub c_time: f64,
    pub d: f64,
    pub t0: f64,
    /// Initial condition of the worst-case curve the constants refer to.
    pub gamma0: f64,
    pub pass: bool,
    /// Largest `dist/(d·γ) − 1` after alignment.
    pub max_violation: f64,
    pub t_start: f64,
}

impl WorstCaseFit {
    /// `d·γ(c·t + t₀)`.
    pub fn envelope(&self, desing: &Desingularizer, t: f64) -> Result<f64> {
        Ok(self.d * desing.worst_case_at(self.gamma0, self.c_time * t + self.t0)?)
    }
}

fn try_c_time(
    times: &[f64],
    dist: &[f64],
    desing: &Desingularizer,
    gamma0: f64,
    c_time: f64,
    t_s: f64,
    align_end: f64,
) -> Result<WorstCaseFit> {
    let t0 = desing.worst_case_time_to(gamma0, dist[0])? - c_time * t_s;
    let env: Vec<f64> = times
        .iter()
        .map(|&t| desing.worst_case_at(gamma0, c_time * t + t0))
        .collect::<Result<_>>()?;
    let ratio = |i: usize| {
        if dist[i] == 0.0 {
            0.0
        } else if env[i] > 0.0 {
            dist[i] / env[i]
        } else {
            f64::INFINITY
        }
    };
    let d = (0..times.len())
        .filter(|&i| times[i] <= align_end)
        .map(ratio)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let max_violation = (0..times.len())
        .map(|i| ratio(i) / d - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(WorstCaseFit {
        c_time,
        d,
        t0,
        gamma0,
        pass: max_violation <= ENVELOPE_SLACK,
        max_violation,
        t_start: t_s,
    })
}

/// Fits `‖u(t) − u∞‖ ≤ d·γ(c·t + t₀)` over `c ∈ {2^k}`: `t₀` aligns the curve
/// with the distance at `t_start`, `d` is the largest ratio over the first
/// tenth of the checked window, and the largest `c` whose envelope then
/// dominates every later output is kept.
pub fn check_worstcase_envelope(
    traj: &Trajectory,
    limit: &DVector<f64>,
    desing: &Desingularizer,
    t_start: Option<f64>,
) -> Result<WorstCaseFit> {
    require_converged(traj, "check_worstcase_envelope")?;
    let probe: Vec<f64> = (0..=60).map(|k| 10f64.powf(-15.0 + 0.25 * k as f64)).collect();
    if !check_sqrt_lower_bound(desing, &probe).pass {
        return Err(Error::Capability(
            "desingularizer fails the sqrt lower bound; the worst-case curve may stop in finite time".into(),
        ));
    }
    let t_s = t_start.unwrap_or_else(|| default_t_start(traj, limit));
    let all = traj.distances_to(limit);
    let idx: Vec<usize> = (0..traj.len()).filter(|&i| traj.times[i] >= t_s).collect();
    let trivial = WorstCaseFit {
        c_time: 1.0,
        d: 1.0,
        t0: 0.0,
        gamma0: all[0].max(f64::MIN_POSITIVE),
        pass: true,
        max_violation: f64::NEG_INFINITY,
        t_start: t_s,
    };
    if idx.is_empty() || all[idx[0]] == 0.0 {
        let pass = idx.iter().all(|&i| all[i] == 0.0);
        return Ok(WorstCaseFit { pass, ..trivial });
    }
    let times: Vec<f64> = idx.iter().map(|&i| traj.times[i]).collect();
    let dist: Vec<f64> = idx.iter().map(|&i| all[i]).collect();
    let gamma0 = if all[0] > 0.0 && all[0] < desing.value_radius() {
        all[0]
    } else {
        dist[0]
    };
    if !(gamma0 < desing.value_radius()) {
        return Err(Error::Domain(format!(
            "distance {gamma0} outside the range of the desingularizer"
        )));
    }
    let t_end = *times.last().expect("non-empty");
    let align_end = t_s + ALIGNMENT_FRACTION * (t_end - t_s);
    let mut best: Option<WorstCaseFit> = None;
    for k in C_TIME_EXPONENTS.rev() {
        let fit = try_c_time(&times, &dist, desing, gamma0, 2f64.powi(k), t_s, align_end)?;
        if fit.pass {
            return Ok(fit);
        }
        if best.is_none_or(|b| fit.max_violation < b.max_violation) {
            best = Some(fit);
        }
    }
    Ok(best.expect("grid is non-empty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueEnvelope {
    pub c: f64,
    pub pass: bool,
    pub max_violation: f64,
    pub checked: usize,
}

/// `ℰ(U(t)) − ℰ(U∞) ≤ c·ψ(γ(c_time·t + t₀))` with the time constants of a
/// worst-case fit and `c` fitted over the same alignment window.
pub fn check_value_envelope(
    traj: &Trajectory,
    limit: &DVector<f64>,
    desing: &Desingularizer,
    energy: &DeformedEnergy,
    fit: &WorstCaseFit,
) -> Result<ValueEnvelope> {
    require_converged(traj, "check_value_envelope")?;
    let (e_inf, _) = energy_value_and_gradient(energy, &PhaseState::at_rest(limit.clone()))?;
    let mut rows = Vec::new();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        if *t < fit.t_start {
            continue;
        }
        let gap = energy_value_and_gradient(energy, s)?.0 - e_inf;
        if gap <= 0.0 {
            continue;
        }
        let g = desing.worst_case_at(fit.gamma0, fit.c_time * t + fit.t0)?;
        let Ok(bound) = desing.psi(g) else { continue };
        rows.push((*t, gap, bound));
    }
    if rows.is_empty() {
        return Ok(ValueEnvelope {
            c: 0.0,
            pass: true,
            max_violation: f64::NEG_INFINITY,
            checked: 0,
        });
    }
    let t_end = rows.last().expect("non-empty").0;
    let align_end = fit.t_start + ALIGNMENT_FRACTION * (t_end - fit.t_start);
    let ratio = |r: &(f64, f64, f64)| if r.2 > 0.0 { r.1 / r.2 } else { f64::INFINITY };
    let c = rows
        .iter()
        .filter(|r| r.0 <= align_end)
        .map(ratio)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let max_violation = rows.iter().map(|r| ratio(r) / c - 1.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ValueEnvelope {
        c,
        pass: max_violation <= ENVELOPE_SLACK,
        max_violation,
        checked: rows.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "law")]
pub enum DecayLaw {
    Power { exponent: f64 },
    Exponential { rate: f64 },
    Ambiguous,
}

impl DecayLaw {
    pub fn label(&self) -> &'static str {
        match self {
            DecayLaw::Power { .. } => "Power",
            DecayLaw::Exponential { .. } => "Exponential",
            DecayLaw::Ambiguous => "Ambiguous",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match self {
            DecayLaw::Power { exponent } => Some(*exponent),
            DecayLaw::Exponential { rate } => Some(*rate),
            DecayLaw::Ambiguous => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub law: DecayLaw,
    pub power_exponent: f64,
    pub power_residual: f64,
    pub exp_rate: f64,
    pub exp_residual: f64,
    pub samples_used: usize,
}

/// Fits `ln D ~ a − p·ln t` and `ln D ~ a − ρt` to samples of a decaying
/// positive quantity. Points are thinned to at most one per logarithmic time
/// bin so dense stretches of the grid do not dominate.
pub fn fit_decay_samples(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(invalid("decay window needs 0 < t_lo < t_hi"));
    }
    let floor = 1e2 * f64::EPSILON;
    let in_win: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(t, v)| (*t, *v))
        .collect();
    if let Some((t, v)) = in_win.iter().find(|(_, v)| *v < floor) {
        return Err(Error::RoundingFloor(format!(
            "value {v:e} at t = {t} is below {floor:e}; narrow the window"
        )));
    }
    let width = (hi / lo).ln() / FIT_BINS as f64;
    let mut last_bin = None;
    let mut pts = Vec::new();
    for (t, v) in in_win {
        let bin = ((t / lo).ln() / width).floor() as i64;
        if last_bin != Some(bin) {
            last_bin = Some(bin);
            pts.push((t, v));
        }
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} samples in window [{lo}, {hi}], need 3",
            pts.len()
        )));
    }
    let pw: Vec<(f64, f64)> = pts.iter().map(|(t, v)| (t.ln(), v.ln())).collect();
    let ex: Vec<(f64, f64)> = pts.iter().map(|(t, v)| (*t, v.ln())).collect();
    let (ps, _, pr) = least_squares(&pw);
    let (es, _, er) = least_squares(&ex);
    let (small, large) = if pr <= er { (pr, er) } else { (er, pr) };
    let law = if large <= AMBIGUITY_RATIO * small {
        DecayLaw::Ambiguous
    } else if pr < er {
        DecayLaw::Power { exponent: -ps }
    } else {
        DecayLaw::Exponential { rate: -es }
    };
    Ok(DecayFit {
        law,
        power_exponent: -ps,
        power_residual: pr,
        exp_rate: -es,
        exp_residual: er,
        samples_used: pts.len(),
    })
}

/// Decay law of `‖u(t) − u∞‖` over the window. The fit uses the tail
/// supremum `sup_{s ≥ t} ‖u(s) − u∞‖`, which removes the zeros of damped
/// oscillations without changing the decay rate.
pub fn fit_decay(traj: &Trajectory, limit: &DVector<f64>, window: (f64, f64)) -> Result<DecayFit> {
    let end = traj.final_time();
    if window.1 > end * (1.0 + 1e-12) {
        return Err(invalid(format!(
            "window end {} beyond the trajectory horizon {end}",
            window.1
        )));
    }
    let dist = traj.distances_to(limit);
    let mut sup = vec![0.0; dist.len()];
    let mut run = 0.0_f64;
    for i in (0..dist.len()).rev() {
        run = run.max(dist[i]);
        sup[i] = run;
    }
    fit_decay_samples(&traj.times, &sup, window)
}

/// `(|G(u) − G(u∞)|, ‖∇G(u)‖)` at every output point.
pub fn lojasiewicz_pairs(spec: &PotentialSpec, traj: &Trajectory, limit: &DVector<f64>) -> Vec<(f64, f64)> {
    let g0 = spec.value(limit);
    traj.states
        .iter()
        .zip(&traj.grad_norms)
        .map(|(s, gn)| ((spec.value(&s.u) - g0).abs(), *gn))
        .collect()
}

/// Power desingularizer from data: `θ̂` from the log-log fit (set to ½ when
/// within 0.02 of it, capped at ½), and `c` the smallest value with
/// `φ'(g)·n ≥ 1` at every in-window pair.
pub fn desingularizer_from_pairs(pairs: &[(f64, f64)], window: (f64, f64)) -> Result<(Desingularizer, LojasiewiczFit)> {
    let fit = estimate_lojasiewicz(pairs, window)?;
    let theta = if fit.theta_hat >= 0.48 { 0.5 } else { fit.theta_hat };
    if !(theta > 0.0) {
        return Err(Error::InsufficientData(format!("fitted exponent {} is not positive", fit.theta_hat)));
    }
    let c = pairs
        .iter()
        .filter(|(g, n)| *g >= window.0 && *g <= window.1 && *g > 0.0 && *n > 0.0)
        .map(|(g, n)| 1.0 / (theta * g.powf(theta - 1.0) * n))
        .fold(0.0, f64::max);
    Ok((Desingularizer::power(c, theta)?, fit))
}

/// `φ_G` rescaled so that `φ'(ℰ − ℰ∞)·‖∇ℰ‖ ≥ 1` at the checked outputs.
pub fn energy_desingularizer(
    traj: &Trajectory,
    limit: &DVector<f64>,
    desing: &Desingularizer,
    energy: &DeformedEnergy,
    t_start: f64,
) -> Result<Desingularizer> {
    let (e_inf, _) = energy_value_and_gradient(energy, &PhaseState::at_rest(limit.clone()))?;
    let mut k: f64 = 0.0;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        if *t < t_start {
            continue;
        }
        let (e, grad) = energy_value_and_gradient(energy, s)?;
        let gap = e - e_inf;
        if gap <= 0.0 {
            continue;
        }
        let Ok(dphi) = desing.phi_prime(gap) else { continue };
        let prod = dphi * grad.norm();
        if prod > 0.0 {
            k = k.max(1.0 / prod);
        }
    }
    Ok(desing.scaled(if k > 0.0 { k } else { 1.0 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L1Summary {
    pub total: f64,
    pub half_horizon_total: f64,
    /// Relative change of the total between horizons `T/2` and `T`.
    pub relative_change: f64,
    pub cauchy: bool,
    pub tail_monotone: bool,
}

pub fn l1_summary(traj: &Trajectory) -> Result<L1Summary> {
    let end = traj.final_time();
    let (total, _) = velocity_l1(traj, end)?;
    let half = velocity_l1_between(traj, traj.times[0], 0.5 * end)?;
    let rel = if total > 0.0 { (total - half) / total } else { 0.0 };
    let tails: Vec<f64> = (0..=16)
        .map(|k| velocity_l1(traj, end * k as f64 / 16.0).map(|p| p.1))
        .collect::<Result<_>>()?;
    Ok(L1Summary {
        total,
        half_horizon_total: half,
        relative_change: rel,
        cauchy: rel < 0.01,
        tail_monotone: tails.windows(2).all(|w| w[1] <= w[0] + 1e-15),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatesOptions {
    pub certify_budget: usize,
    pub seed: u64,
    pub exponent_window: (f64, f64),
    /// Decay-fit window; defaults to `[t_start, T]`.
    pub fit_window: Option<(f64, f64)>,
    pub t_start: Option<f64>,
}

impl Default for RatesOptions {
    fn default() -> Self {
        RatesOptions {
            certify_budget: 4000,
            seed: 0,
            exponent_window: DEFAULT_EXPONENT_WINDOW,
            fit_window: None,
            t_start: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub potential: String,
    pub gamma: f64,
    pub classification: Classification,
    pub final_time: f64,
    pub limit_point: Option<Vec<f64>>,
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub lambda_star: Option<f64>,
    pub certificate: Option<AngleCertificate>,
    pub alpha_used: Option<f64>,
    pub desingularizer: Option<Desingularizer>,
    pub desingularizer_source: Option<String>,
    pub theta_hat: Option<f64>,
    pub exponent_fit: Option<LojasiewiczFit>,
    pub sqrt_bound: Option<SqrtBound>,
    pub energy_desingularizer: Option<Desingularizer>,
    pub t_start: Option<f64>,
    pub t_start_rule: String,
    pub envelope_automaj: Option<EnvelopeVerdict>,
    pub envelope_majval: Option<ValueEnvelope>,
    pub envelope_majgrad1: Option<WorstCaseFit>,
    pub empirical_law: Option<DecayFit>,
    pub decay_error: Option<String>,
    pub velocity_l1: Option<L1Summary>,
}

impl RateReport {
    fn classification_only(spec: &PotentialSpec, gamma: f64, traj: &Trajectory) -> Self {
        RateReport {
            potential: spec.name.clone(),
            gamma,
            classification: traj.classification.clone(),
            final_time: traj.final_time(),
            limit_point: None,
            radius: None,
            m: None,
            lambda_star: None,
            certificate: None,
            alpha_used: None,
            desingularizer: None,
            desingularizer_source: None,
            theta_hat: None,
            exponent_fit: None,
            sqrt_bound: None,
            energy_desingularizer: None,
            t_start: None,
            t_start_rule: format!("first entry into B(u_inf, {T_START_FRACTION:e} * |u(0) - u_inf|)"),
            envelope_automaj: None,
            envelope_majval: None,
            envelope_majgrad1: None,
            empirical_law: None,
            decay_error: None,
            velocity_l1: None,
        }
    }

    /// One row of the batch summary table.
    pub fn summary_row(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:.6}"));
        let verdict = |p: Option<bool>| p.map_or_else(String::new, |b| if b { "pass".into() } else { "fail".into() });
        vec![
            self.potential.clone(),
            format!("{}", self.gamma),
            self.classification.label().to_string(),
            opt(self.theta_hat.or_else(|| self.desingularizer.as_ref().and_then(|d| d.theta()))),
            self.empirical_law.map_or_else(String::new, |f| f.law.label().to_string()),
            opt(self.empirical_law.and_then(|f| f.law.param())),
            verdict(self.envelope_automaj.map(|v| v.pass)),
            verdict(self.envelope_majgrad1.map(|v| v.pass)),
        ]
    }
}

pub const SUMMARY_HEADER: &str =
    "potential,gamma,classification,theta_hat,law,param,envelope_automaj,envelope_majgrad1";

/// Integrates, classifies, certifies and runs every envelope and fit check.
pub fn end_to_end(
    spec: &PotentialSpec,
    cfg: &DynamicsConfig,
    initial: &PhaseState,
    desing: Option<Desingularizer>,
    opts: &RatesOptions,
) -> Result<RateReport> {
    let traj = integrate(spec, cfg, initial)?;
    analyze(spec, cfg.gamma, &traj, desing, opts)
}

/// The analysis half of [`end_to_end`] for an existing trajectory.
pub fn analyze(
    spec: &PotentialSpec,
    gamma: f64,
    traj: &Trajectory,
    desing: Option<Desingularizer>,
    opts: &RatesOptions,
) -> Result<RateReport> {
    let mut rep = RateReport::classification_only(spec, gamma, traj);
    if !matches!(traj.classification, Classification::Converged { .. }) {
        return Ok(rep);
    }
    let limit = refine_limit(spec, traj)?;
    if spec.gradient(&limit).norm() > CRITICAL_TOL.max(1e-8) {
        rep.decay_error = Some("limit point could not be polished to a critical point".into());
    }
    rep.limit_point = Some(limit.iter().copied().collect());

    let radius = traj
        .states
        .iter()
        .map(|s| s.u.norm().max(s.v.norm()))
        .fold(0.0, f64::max)
        .max(1e-6);
    rep.radius = Some(radius);
    let m = hessian_bound(spec, radius, opts.certify_budget.max(1), opts.seed)?.m;
    rep.m = Some(m);
    let lam = lambda_star(gamma, m);
    rep.lambda_star = Some(lam);
    let energy = DeformedEnergy::new(spec.clone(), gamma, lam)?;
    let cert = certify_quasigradient(&energy, radius, opts.certify_budget.max(1), opts.seed)?;
    rep.certificate = Some(cert);
    rep.alpha_used = Some(cert.alpha_sampled);

    let t_s = opts.t_start.unwrap_or_else(|| default_t_start(traj, &limit));
    rep.t_start = Some(t_s);

    let (desing, source) = match desing {
        Some(d) => (d, "given"),
        None => {
            let pairs = lojasiewicz_pairs(spec, traj, &limit);
            let (d, fit) = desingularizer_from_pairs(&pairs, opts.exponent_window)?;
            rep.theta_hat = Some(fit.theta_hat);
            rep.exponent_fit = Some(fit);
            (d, "estimated")
        }
    };
    rep.desingularizer_source = Some(source.into());
    let s_top = match &desing.kind {
        DesingKind::Power { .. } => 1.0,
        DesingKind::Tabulated(_) => 0.5 * desing.domain_radius,
    };
    let grid: Vec<f64> = (0..=48).map(|k| s_top * 10f64.powf(-12.0 * (1.0 - k as f64 / 48.0))).collect();
    rep.sqrt_bound = Some(check_sqrt_lower_bound(&desing, &grid));

    let phi_e = energy_desingularizer(traj, &limit, &desing, &energy, t_s)?;
    if cert.alpha_sampled > 0.0 {
        rep.envelope_automaj = Some(check_distance_envelope(
            traj,
            &limit,
            &phi_e,
            cert.alpha_sampled,
            &energy,
            Some(t_s),
        )?);
    }
    rep.energy_desingularizer = Some(phi_e);
    if rep.sqrt_bound.is_some_and(|b| b.pass) {
        let wc = check_worstcase_envelope(traj, &limit, &desing, Some(t_s))?;
        rep.envelope_majval = Some(check_value_envelope(traj, &limit, &desing, &energy, &wc)?);
        rep.envelope_majgrad1 = Some(wc);
    }
    rep.desingularizer = Some(desing);

    let window = opts.fit_window.unwrap_or((t_s.max(traj.times[1.min(traj.len() - 1)]), traj.final_time()));
    match fit_decay(traj, &limit, window) {
        Ok(f) => rep.empirical_law = Some(f),
        Err(e) => rep.decay_error = Some(e.to_string()),
    }
    rep.velocity_l1 = Some(l1_summary(traj)?);
    Ok(rep)
}
