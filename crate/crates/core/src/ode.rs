//! Dormand-Prince 5(4) with PI step-size control and the pair's fourth
//! order continuous extension for dense output.
//!
//! The solver is callback driven: after every accepted step the observer sees
//! the step endpoints (with derivatives) and may stop the integration.

use std::fmt;

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    /// Steps shorter than `min_step_factor · |t_end - t0|` are an error.
    pub min_step_factor: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            h_init: None,
            h_max: f64::INFINITY,
            min_step_factor: 1e-14,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeError {
    StepUnderflow { t: f64, h: f64 },
    TooManySteps { t: f64 },
    NonFinite { t: f64 },
}

impl fmt::Display for OdeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OdeError::StepUnderflow { t, h } => write!(f, "step size {h:e} underflow at t = {t}"),
            OdeError::TooManySteps { t } => write!(f, "step budget exhausted at t = {t}"),
            OdeError::NonFinite { t } => write!(f, "non-finite state at t = {t}"),
        }
    }
}

impl std::error::Error for OdeError {}

/// One accepted step `[t0, t1]` with states and derivatives at both ends.
pub struct Step<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    pub f0: &'a [f64],
    pub f1: &'a [f64],
    dense: &'a [f64],
}

impl Step<'_> {
    /// Fourth order interpolant on `[t0, t1]`.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let h = self.t1 - self.t0;
        if h == 0.0 {
            return self.y1.to_vec();
        }
        let th = (t - self.t0) / h;
        let th1 = 1.0 - th;
        (0..self.y0.len())
            .map(|i| {
                let ydiff = self.y1[i] - self.y0[i];
                let bspl = h * self.f0[i] - ydiff;
                let r4 = ydiff - h * self.f1[i] - bspl;
                self.y0[i] + th * (ydiff + th1 * (bspl + th * (r4 + th1 * self.dense[i])))
            })
            .collect()
    }
}

/// Cubic Hermite interpolation on `[t0, t1]`.
pub fn hermite(t0: f64, t1: f64, y0: &[f64], y1: &[f64], f0: &[f64], f1: &[f64], t: f64) -> Vec<f64> {
    let h = t1 - t0;
    if h == 0.0 {
        return y1.to_vec();
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
        .collect()
}

pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct OdeOutcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub stopped: bool,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &OdeOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<F>(rhs: &mut F, t0: f64, y0: &[f64], f0: &[f64], dir: f64, opts: &OdeOptions) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|y| opts.abs_tol + opts.rel_tol * y.abs()).collect();
    let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(x, s)| (x / s) * (x / s)).sum::<f64>() / n as f64).sqrt();
    let d0 = rms(y0);
    let d1 = rms(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(opts.h_max);
    let y1: Vec<f64> = (0..n).map(|i| y0[i] + dir * h0 * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    rhs(t0 + dir * h0, &y1, &mut f1);
    let diff: Vec<f64> = (0..n).map(|i| f1[i] - f0[i]).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(opts.h_max)
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t_end`.
pub fn solve<F, O>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    mut observer: O,
) -> Result<OdeOutcome, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(&Step<'_>) -> Control,
{
    let n = y0.len();
    let span = t_end - t0;
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut outcome = OdeOutcome {
        t,
        y: y.clone(),
        accepted: 0,
        rejected: 0,
        stopped: false,
    };
    if span == 0.0 {
        return Ok(outcome);
    }
    let dir = span.signum();
    let h_min = opts.min_step_factor * span.abs();

    let mut k1 = vec![0.0; n];
    rhs(t, &y, &mut k1);
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(&mut rhs, t, &y, &k1, dir, opts))
        .min(span.abs());

    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut ys = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut dense = vec![0.0; n];
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        if outcome.accepted + outcome.rejected >= opts.max_steps {
            return Err(OdeError::TooManySteps { t });
        }
        let remaining = (t_end - t) * dir;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = dir * h;

        for i in 0..n {
            ys[i] = y[i] + hs * A21 * k1[i];
        }
        rhs(t + C2 * hs, &ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * hs, &ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * hs, &ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * hs, &ys, &mut k5);
        for i in 0..n {
            ys[i] = y[i]
                + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t_end } else { t + hs };
        rhs(t_new, &ys, &mut k6);
        for i in 0..n {
            y_new[i] = y[i]
                + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t_new, &y_new, &mut k7);
        for i in 0..n {
            err[i] = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&err, &y, &y_new, opts);
        if !en.is_finite() {
            if h <= h_min {
                return Err(OdeError::NonFinite { t });
            }
            h *= FAC_MIN;
            outcome.rejected += 1;
            last_rejected = true;
            continue;
        }

        let fac11 = en.powf(0.2 - BETA * 0.75);
        if en <= 1.0 {
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = en.max(1e-4);
            outcome.accepted += 1;
            last_rejected = false;
            for i in 0..n {
                dense[i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }

            let control = observer(&Step {
                t0: t,
                t1: t_new,
                y0: &y,
                y1: &y_new,
                f0: &k1,
                f1: &k7,
                dense: &dense,
            });
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite { t });
            }
            if let Control::Stop = control {
                outcome.stopped = true;
                break;
            }
            if last {
                break;
            }
            h = h_new.min(opts.h_max);
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            outcome.rejected += 1;
            last_rejected = true;
        }
        if h < h_min {
            return Err(OdeError::StepUnderflow { t, h });
        }
    }
    outcome.t = t;
    outcome.y = y;
    Ok(outcome)
}
