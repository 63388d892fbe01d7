//! The damped system `u'' + γu' + ∇G(u) = 0` in phase form `U' = −F(U)`,
//! the first order gradient flow `u' = −∇G(u)`, and trajectory
//! classification (converged, escaped, or undetermined at the horizon).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::ode::{self, hermite, Control, OdeError, OdeOptions, Step};
use crate::potential::PotentialSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl PhaseState {
    pub fn new(u: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        check_dim(u.len(), v.len())?;
        Ok(PhaseState { u, v })
    }

    pub fn at_rest(u: DVector<f64>) -> Self {
        let n = u.len();
        PhaseState {
            u,
            v: DVector::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// `(u, v)` stacked into one vector of length `2N`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.u.iter().chain(self.v.iter()).copied().collect()
    }

    pub fn from_slice(y: &[f64]) -> Self {
        let n = y.len() / 2;
        PhaseState {
            u: DVector::from_column_slice(&y[..n]),
            v: DVector::from_column_slice(&y[n..]),
        }
    }

    /// Euclidean norm of the stacked phase vector.
    pub fn norm(&self) -> f64 {
        (self.u.norm_squared() + self.v.norm_squared()).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub gamma: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub t_max: f64,
    pub conv_tol_v: f64,
    pub conv_tol_g: f64,
    pub conv_window: f64,
    pub r_escape: f64,
    /// End the run as soon as the convergence window is satisfied. When false
    /// the run continues to `t_max` and the window is judged at the end.
    pub stop_at_convergence: bool,
    /// Extra output times filled in by dense interpolation.
    pub sample_times: Vec<f64>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            gamma: 1.0,
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            t_max: 1e4,
            conv_tol_v: 1e-8,
            conv_tol_g: 1e-8,
            conv_window: 1.0,
            r_escape: 1e6,
            stop_at_convergence: true,
            sample_times: Vec::new(),
        }
    }
}

impl DynamicsConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        DynamicsConfig {
            gamma,
            ..Self::default()
        }
    }

    /// Checks ranges; the message starts with the offending field name.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("abs_tol", self.abs_tol),
            ("rel_tol", self.rel_tol),
            ("t_max", self.t_max),
            ("conv_tol_v", self.conv_tol_v),
            ("conv_tol_g", self.conv_tol_g),
            ("conv_window", self.conv_window),
        ];
        for (name, x) in positive {
            if !(x.is_finite() && x > 0.0) {
                return Err(invalid(format!("{name} must be positive and finite, got {x}")));
            }
        }
        if !(self.r_escape > 1.0) {
            return Err(invalid(format!("r_escape must exceed 1, got {}", self.r_escape)));
        }
        if self.sample_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(invalid("sample_times must be finite and non-negative"));
        }
        Ok(())
    }

    fn ode_options(&self) -> OdeOptions {
        OdeOptions {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            ..OdeOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum Classification {
    Converged { limit: Vec<f64> },
    Escaped { time: f64 },
    Undetermined,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Converged { .. } => "Converged",
            Classification::Escaped { .. } => "Escaped",
            Classification::Undetermined => "Undetermined",
        }
    }

    pub fn limit(&self) -> Option<DVector<f64>> {
        match self {
            Classification::Converged { limit } => Some(DVector::from_column_slice(limit)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Flow {
    SecondOrder { gamma: f64 },
    /// `u' = −∇G(u)`; the stored velocity is `u'`.
    GradientFlow,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub flow: Flow,
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    /// Time derivative of the integrated vector at each output time, used
    /// for Hermite interpolation between outputs.
    pub derivs: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub classification: Classification,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn final_state(&self) -> &PhaseState {
        self.states.last().expect("trajectory has at least one point")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one point")
    }

    fn packed(&self, i: usize) -> Vec<f64> {
        match self.flow {
            Flow::SecondOrder { .. } => self.states[i].to_vec(),
            Flow::GradientFlow => self.states[i].u.iter().copied().collect(),
        }
    }

    /// State at time `t` within the horizon, by Hermite interpolation between
    /// stored outputs.
    pub fn state_at(&self, t: f64) -> Result<PhaseState> {
        let (t0, t1) = (self.times[0], self.final_time());
        if !(t >= t0 && t <= t1) {
            return Err(Error::Domain(format!("t = {t} outside [{t0}, {t1}]")));
        }
        let k = self.times.partition_point(|&x| x <= t).clamp(1, self.len().max(2) - 1);
        if self.len() == 1 {
            return Ok(self.states[0].clone());
        }
        let i = k - 1;
        let y = hermite(
            self.times[i],
            self.times[i + 1],
            &self.packed(i),
            &self.packed(i + 1),
            &self.derivs[i],
            &self.derivs[i + 1],
            t,
        );
        Ok(match self.flow {
            Flow::SecondOrder { .. } => PhaseState::from_slice(&y),
            Flow::GradientFlow => {
                let s = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
                let v = &self.states[i].v * (1.0 - s) + &self.states[i + 1].v * s;
                PhaseState {
                    u: DVector::from_vec(y),
                    v,
                }
            }
        })
    }

    /// States at the given times (each within the horizon).
    pub fn resample(&self, times: &[f64]) -> Result<Vec<PhaseState>> {
        times.iter().map(|&t| self.state_at(t)).collect()
    }

    /// `‖u(tᵢ) − target‖` at every output time.
    pub fn distances_to(&self, target: &DVector<f64>) -> Vec<f64> {
        self.states.iter().map(|s| (&s.u - target).norm()).collect()
    }
}

/// `−F(U) = (v, −γv − ∇G(u))`, the right-hand side of `U' = −F(U)`.
pub fn second_order_field(spec: &PotentialSpec, gamma: f64, state: &PhaseState) -> Result<PhaseState> {
    check_dim(spec.dim(), state.u.len())?;
    check_dim(spec.dim(), state.v.len())?;
    let g = spec.gradient(&state.u);
    Ok(PhaseState {
        u: state.v.clone(),
        v: -&state.v * gamma - g,
    })
}

fn rhs(spec: &PotentialSpec, flow: Flow, y: &[f64], dy: &mut [f64]) {
    match flow {
        Flow::SecondOrder { gamma } => {
            let n = y.len() / 2;
            let g = spec.gradient(&DVector::from_column_slice(&y[..n]));
            for i in 0..n {
                dy[i] = y[n + i];
                dy[n + i] = -gamma * y[n + i] - g[i];
            }
        }
        Flow::GradientFlow => {
            let g = spec.gradient(&DVector::from_column_slice(y));
            for i in 0..y.len() {
                dy[i] = -g[i];
            }
        }
    }
}

struct Recorder<'a> {
    spec: &'a PotentialSpec,
    flow: Flow,
    traj: Trajectory,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, y: &[f64], dy: &[f64]) {
        let (state, energy) = match self.flow {
            Flow::SecondOrder { .. } => {
                let s = PhaseState::from_slice(y);
                let e = self.spec.value(&s.u) + 0.5 * s.v.norm_squared();
                (s, e)
            }
            Flow::GradientFlow => {
                let u = DVector::from_column_slice(y);
                let e = self.spec.value(&u);
                (
                    PhaseState {
                        u,
                        v: DVector::from_column_slice(dy),
                    },
                    e,
                )
            }
        };
        let gn = self.spec.gradient(&state.u).norm();
        self.traj.times.push(t);
        self.traj.states.push(state);
        self.traj.derivs.push(dy.to_vec());
        self.traj.energies.push(energy);
        self.traj.grad_norms.push(gn);
    }

    fn push_interpolated(&mut self, t: f64, step: &Step<'_>) {
        let y = step.interpolate(t);
        let mut dy = vec![0.0; y.len()];
        rhs(self.spec, self.flow, &y, &mut dy);
        self.push(t, &y, &dy);
    }
}

fn u_norm(flow: Flow, y: &[f64]) -> f64 {
    let n = match flow {
        Flow::SecondOrder { .. } => y.len() / 2,
        Flow::GradientFlow => y.len(),
    };
    y[..n].iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn converged_at(spec: &PotentialSpec, flow: Flow, cfg: &DynamicsConfig, y: &[f64]) -> bool {
    match flow {
        Flow::SecondOrder { .. } => {
            let s = PhaseState::from_slice(y);
            s.v.norm() <= cfg.conv_tol_v && spec.gradient(&s.u).norm() <= cfg.conv_tol_g
        }
        Flow::GradientFlow => {
            let g = spec.gradient(&DVector::from_column_slice(y)).norm();
            g <= cfg.conv_tol_g && g <= cfg.conv_tol_v
        }
    }
}

fn run(spec: &PotentialSpec, cfg: &DynamicsConfig, y0: Vec<f64>, flow: Flow) -> Result<Trajectory> {
    cfg.validate()?;
    if y0.iter().any(|x| !x.is_finite()) {
        return Err(invalid("initial state must be finite"));
    }
    let mut samples: Vec<f64> = cfg
        .sample_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t < cfg.t_max)
        .collect();
    samples.sort_by(f64::total_cmp);
    samples.dedup();
    let mut next_sample = 0;

    let mut rec = Recorder {
        spec,
        flow,
        traj: Trajectory {
            flow,
            times: Vec::new(),
            states: Vec::new(),
            derivs: Vec::new(),
            energies: Vec::new(),
            grad_norms: Vec::new(),
            classification: Classification::Undetermined,
            accepted_steps: 0,
            rejected_steps: 0,
        },
    };
    let mut dy0 = vec![0.0; y0.len()];
    rhs(spec, flow, &y0, &mut dy0);
    rec.push(0.0, &y0, &dy0);

    let mut hold_since = converged_at(spec, flow, cfg, &y0).then_some(0.0);
    let mut escaped: Option<f64> = None;
    let mut converged = false;
    if u_norm(flow, &y0) >= cfg.r_escape {
        escaped = Some(0.0);
    }

    let result = if escaped.is_some() {
        Ok(None)
    } else {
        ode::solve(
            |_t, y, dy| rhs(spec, flow, y, dy),
            0.0,
            &y0,
            cfg.t_max,
            &cfg.ode_options(),
            |step| {
                let esc = if u_norm(flow, step.y1) >= cfg.r_escape {
                    let (mut lo, mut hi) = (step.t0, step.t1);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if u_norm(flow, &step.interpolate(mid)) >= cfg.r_escape {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    Some(hi)
                } else {
                    None
                };
                let t_end = esc.unwrap_or(step.t1);
                while next_sample < samples.len() && samples[next_sample] < t_end {
                    if samples[next_sample] > step.t0 {
                        rec.push_interpolated(samples[next_sample], step);
                    }
                    next_sample += 1;
                }
                if let Some(te) = esc {
                    if te < step.t1 {
                        rec.push_interpolated(te, step);
                    } else {
                        rec.push(step.t1, step.y1, step.f1);
                    }
                    escaped = Some(te);
                    return Control::Stop;
                }
                rec.push(step.t1, step.y1, step.f1);
                if converged_at(spec, flow, cfg, step.y1) {
                    let since = *hold_since.get_or_insert(step.t1);
                    if step.t1 - since >= cfg.conv_window {
                        converged = true;
                        if cfg.stop_at_convergence {
                            return Control::Stop;
                        }
                    }
                } else {
                    hold_since = None;
                    converged = false;
                }
                Control::Continue
            },
        )
        .map(Some)
    };

    let mut traj = rec.traj;
    match result {
        Err(e) => {
            let t = match e {
                OdeError::StepUnderflow { t, .. } | OdeError::TooManySteps { t } | OdeError::NonFinite { t } => t,
            };
            traj.classification = Classification::Undetermined;
            Err(Error::IntegrationFailure {
                t,
                partial: Box::new(traj),
            })
        }
        Ok(outcome) => {
            if let Some(o) = outcome {
                traj.accepted_steps = o.accepted;
                traj.rejected_steps = o.rejected;
            }
            traj.classification = if let Some(time) = escaped {
                Classification::Escaped { time }
            } else if converged {
                Classification::Converged {
                    limit: traj.final_state().u.iter().copied().collect(),
                }
            } else {
                Classification::Undetermined
            };
            Ok(traj)
        }
    }
}

/// Integrates the damped second order system from `initial`.
pub fn integrate(spec: &PotentialSpec, cfg: &DynamicsConfig, initial: &PhaseState) -> Result<Trajectory> {
    check_dim(spec.dim(), initial.u.len())?;
    check_dim(spec.dim(), initial.v.len())?;
    run(spec, cfg, initial.to_vec(), Flow::SecondOrder { gamma: cfg.gamma })
}

/// Integrates `u' = −∇G(u)` from `u0`. `cfg.gamma` is ignored.
pub fn integrate_gradient_flow(spec: &PotentialSpec, cfg: &DynamicsConfig, u0: &DVector<f64>) -> Result<Trajectory> {
    check_dim(spec.dim(), u0.len())?;
    run(spec, cfg, u0.iter().copied().collect(), Flow::GradientFlow)
}

/// Classification of a trajectory prefix against `cfg`: escape if any stored
/// point leaves `B(0, R_escape)`, convergence if the trailing window holds at
/// every stored point, otherwise undetermined.
pub fn classify_asymptotics(spec: &PotentialSpec, traj: &Trajectory, cfg: &DynamicsConfig) -> Classification {
    if let Some(i) = traj.states.iter().position(|s| s.u.norm() >= cfg.r_escape) {
        return Classification::Escaped { time: traj.times[i] };
    }
    let t_end = traj.final_time();
    let mut since = None;
    for (i, s) in traj.states.iter().enumerate() {
        let ok = match traj.flow {
            Flow::SecondOrder { .. } => s.v.norm() <= cfg.conv_tol_v && spec.gradient(&s.u).norm() <= cfg.conv_tol_g,
            Flow::GradientFlow => traj.grad_norms[i] <= cfg.conv_tol_g.min(cfg.conv_tol_v),
        };
        if ok {
            since.get_or_insert(traj.times[i]);
        } else {
            since = None;
        }
    }
    match since {
        Some(t0) if t_end - t0 >= cfg.conv_window => Classification::Converged {
            limit: traj.final_state().u.iter().copied().collect(),
        },
        _ => Classification::Undetermined,
    }
}

const L1_SUBDIVISIONS: usize = 16;

/// Trapezoid estimate of `∫_a^b ‖v(t)‖ dt` on the stored grid refined by
/// Hermite interpolation.
pub fn velocity_l1_between(traj: &Trajectory, a: f64, b: f64) -> Result<f64> {
    if traj.len() < 2 || b <= a {
        return Ok(0.0);
    }
    let a = a.max(traj.times[0]);
    let b = b.min(traj.final_time());
    if b <= a {
        return Ok(0.0);
    }
    let mut knots = vec![a];
    for w in traj.times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 <= a || t0 >= b {
            continue;
        }
        let (lo, hi) = (t0.max(a), t1.min(b));
        for k in 1..=L1_SUBDIVISIONS {
            knots.push(lo + (hi - lo) * k as f64 / L1_SUBDIVISIONS as f64);
        }
    }
    let speeds: Vec<f64> = knots
        .iter()
        .map(|&t| traj.state_at(t).map(|s| s.v.norm()))
        .collect::<Result<_>>()?;
    Ok(knots
        .windows(2)
        .zip(speeds.windows(2))
        .map(|(t, s)| 0.5 * (t[1] - t[0]) * (s[0] + s[1]))
        .sum())
}

/// `(∫₀^∞‖v‖, ∫_{T_tail}^∞‖v‖)` truncated at the computed horizon.
pub fn velocity_l1(traj: &Trajectory, t_tail: f64) -> Result<(f64, f64)> {
    if !matches!(traj.classification, Classification::Converged { .. }) {
        return Err(Error::Contract(format!(
            "velocity_l1 needs a converged trajectory, got {}",
            traj.classification.label()
        )));
    }
    let end = traj.final_time();
    let total = velocity_l1_between(traj, traj.times[0], end)?;
    let tail = velocity_l1_between(traj, t_tail, end)?;
    Ok((total, tail))
}
