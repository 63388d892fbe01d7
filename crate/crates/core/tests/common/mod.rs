//! Independent closed forms and brute-force grids used as test oracles. Only
//! `f64` arithmetic here; nothing from the library under test.

#![allow(dead_code)]

/// `u'' + γu' + a·u = 0` in one dimension from `(u0, v0)`; returns `(u, v)`.
pub fn linear_1d(gamma: f64, a: f64, u0: f64, v0: f64, t: f64) -> (f64, f64) {
    let disc = gamma * gamma - 4.0 * a;
    if disc > 1e-14 {
        let s = disc.sqrt();
        let (r1, r2) = ((-gamma + s) / 2.0, (-gamma - s) / 2.0);
        let c2 = (v0 - r1 * u0) / (r2 - r1);
        let c1 = u0 - c2;
        let (e1, e2) = ((r1 * t).exp(), (r2 * t).exp());
        (c1 * e1 + c2 * e2, c1 * r1 * e1 + c2 * r2 * e2)
    } else if disc < -1e-14 {
        let (re, w) = (-gamma / 2.0, (-disc).sqrt() / 2.0);
        let (a1, b1) = (u0, (v0 - re * u0) / w);
        let e = (re * t).exp();
        let (c, s) = ((w * t).cos(), (w * t).sin());
        let u = e * (a1 * c + b1 * s);
        let v = re * u + e * w * (-a1 * s + b1 * c);
        (u, v)
    } else {
        let r = -gamma / 2.0;
        let b1 = v0 - r * u0;
        let e = (r * t).exp();
        (e * (u0 + b1 * t), e * (r * (u0 + b1 * t) + b1))
    }
}

/// `2e^{−t} − e^{−2t}`, the solution of `u'' + 3u' + 2u = 0`, `u(0) = 1`, `u'(0) = 0`.
pub fn overdamped(t: f64) -> f64 {
    2.0 * (-t).exp() - (-2.0 * t).exp()
}

/// Worst-case curve for `φ(s) = c·s^θ`: `γ' = −ψ'(γ)` with `ψ(y) = (y/c)^{1/θ}`.
pub fn worst_case_power(c: f64, theta: f64, gamma0: f64, t: f64) -> f64 {
    let k = 1.0 / (theta * c.powf(1.0 / theta));
    let q = 1.0 / theta - 1.0;
    if (q - 1.0).abs() < 1e-15 {
        gamma0 * (-k * t).exp()
    } else {
        (gamma0.powf(1.0 - q) + (q - 1.0) * k * t).powf(1.0 / (1.0 - q))
    }
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Minimum of `cos∠(∇ℰ_λ, F)` for `G = ½‖u‖²` in two dimensions over a
/// tensor grid of the product of discs `‖u‖, ‖v‖ ≤ R`, in polar coordinates.
pub fn identity_quadratic_min_cosine(gamma: f64, lambda: f64, radius: f64, per_axis: usize) -> f64 {
    let mut best = f64::INFINITY;
    let radii: Vec<f64> = (1..=per_axis).map(|i| radius * i as f64 / per_axis as f64).collect();
    let angles: Vec<f64> = (0..per_axis)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / per_axis as f64)
        .collect();
    let mut eval = |u: [f64; 2], v: [f64; 2]| {
        let ge = [u[0] + lambda * v[0], u[1] + lambda * v[1], v[0] + lambda * u[0], v[1] + lambda * u[1]];
        let f = [-v[0], -v[1], gamma * v[0] + u[0], gamma * v[1] + u[1]];
        let dot: f64 = ge.iter().zip(&f).map(|(a, b)| a * b).sum();
        let n1 = ge.iter().map(|x| x * x).sum::<f64>().sqrt();
        let n2 = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n1 > 1e-12 && n2 > 1e-12 {
            best = best.min(dot / (n1 * n2));
        }
    };
    // Rotating u and v together leaves the cosine unchanged, so u is kept on
    // the first axis.
    for &ru in std::iter::once(&0.0).chain(&radii) {
        for &rv in std::iter::once(&0.0).chain(&radii) {
            for &a in &angles {
                eval([ru, 0.0], [rv * a.cos(), rv * a.sin()]);
            }
        }
    }
    best
}

/// `min ½‖∇G‖²` on `{G = r}` for `G = u₁² − u₂²` by a dense hyperbola scan.
pub fn saddle_psi_grid(r: f64, n: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..=n {
        // u₁ = √r·cosh s, u₂ = √r·sinh s
        let s = -4.0 + 8.0 * i as f64 / n as f64;
        let (u1, u2) = (r.sqrt() * s.cosh(), r.sqrt() * s.sinh());
        best = best.min(0.5 * (4.0 * u1 * u1 + 4.0 * u2 * u2));
    }
    best
}

/// `min ½‖Au‖²` on `½⟨Au,u⟩ = r` for diagonal `A` in two dimensions by an
/// angular scan of the level ellipse.
pub fn diag_quadratic_psi_grid(a: [f64; 2], r: f64, n: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..n {
        let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        let (c, s) = (th.cos(), th.sin());
        let q = 0.5 * (a[0] * c * c + a[1] * s * s);
        let rho = (r / q).sqrt();
        let (u1, u2) = (rho * c, rho * s);
        best = best.min(0.5 * ((a[0] * u1).powi(2) + (a[1] * u2).powi(2)));
    }
    best
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
