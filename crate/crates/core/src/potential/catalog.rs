//! Named test potentials, addressable from config files.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::PotentialSpec;
use crate::config::{parse_list, parse_matrix};
use crate::desingularize::{parse_desingularizer, DesingKind, Desingularizer};
use crate::error::{invalid, Error, Result};

pub const NAMES: [&str; 7] = [
    "quadratic",
    "saddle",
    "power",
    "radial",
    "convex_growth",
    "nonsmooth_32",
    "neg_quadratic",
];

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub spec: PotentialSpec,
    /// Normalised family parameters, including defaults that were filled in.
    pub family_params: BTreeMap<String, String>,
}

/// `G(u) = ½⟨Au, u⟩`. The desingularizer `√(2s/|λ|)` uses the smallest
/// nonzero `|λ|` among the eigenvalues of `A`.
pub fn quadratic(a: DMatrix<f64>) -> Result<PotentialSpec> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(invalid("quadratic needs a non-empty square matrix"));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(invalid("quadratic matrix has non-finite entries"));
    }
    if (&a - a.transpose()).amax() > 1e-12 * (1.0 + a.amax()) {
        return Err(invalid("quadratic matrix must be symmetric"));
    }
    let lam_min = a
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|e| e.abs())
        .filter(|e| *e > 1e-12 * (1.0 + a.amax()))
        .fold(f64::INFINITY, f64::min);
    let (av, ag, ah) = (a.clone(), a.clone(), a);
    let mut spec = PotentialSpec::from_fns(
        "quadratic",
        n,
        move |u| 0.5 * u.dot(&(&av * u)),
        move |u| &ag * u,
        Some(Box::new(move |_| ah.clone())),
    )
    .with_critical_point(DVector::zeros(n));
    if lam_min.is_finite() {
        spec = spec.with_desingularizer(Desingularizer::power((2.0 / lam_min).sqrt(), 0.5)?);
    }
    Ok(spec)
}

pub fn quadratic_diag(diag: &[f64]) -> Result<PotentialSpec> {
    quadratic(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
}

/// `G(u₁, u₂) = u₁² − u₂²`.
pub fn saddle() -> PotentialSpec {
    let mut spec = quadratic_diag(&[2.0, -2.0]).expect("valid matrix");
    spec.name = "saddle".into();
    spec
}

/// `G(u) = −½‖u‖²`.
pub fn neg_quadratic(dim: usize) -> Result<PotentialSpec> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let mut spec = quadratic(-DMatrix::identity(dim, dim))?;
    spec.name = "neg_quadratic".into();
    Ok(spec)
}

/// `G(u) = k‖u‖^{2p}` with `p ≥ 1`, `k > 0`.
pub fn power(dim: usize, p: f64, k: f64) -> Result<PotentialSpec> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("power exponent p must be >= 1, got {p}")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(invalid(format!("power coefficient k must be positive, got {k}")));
    }
    let e = 2.0 * p;
    let spec = PotentialSpec::from_fns(
        "power",
        dim,
        move |u| k * u.norm().powf(e),
        move |u| {
            let r = u.norm();
            if r == 0.0 {
                DVector::zeros(u.len())
            } else {
                u * (e * k * r.powf(e - 2.0))
            }
        },
        Some(Box::new(move |u| {
            let n = u.len();
            let r = u.norm();
            if r == 0.0 {
                let diag = if p == 1.0 { 2.0 * k } else { 0.0 };
                return DMatrix::identity(n, n) * diag;
            }
            let d = u / r;
            let rr = r.powf(e - 2.0);
            DMatrix::identity(n, n) * (e * k * rr) + (&d * d.transpose()) * (e * k * (e - 2.0) * rr)
        })),
    )
    .with_critical_point(DVector::zeros(dim))
    .with_desingularizer(Desingularizer::power(k.powf(-1.0 / e), 1.0 / e)?);
    Ok(spec)
}

/// `E(u) = ψ(‖u − center‖)` with `ψ = φ⁻¹` for a power-type `φ` with `θ ≤ ½`.
/// The radial field `−∇E` reproduces the worst-case curve in norm.
pub fn radial(center: DVector<f64>, desing: Desingularizer) -> Result<PotentialSpec> {
    let dim = center.len();
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let DesingKind::Power { c, theta } = desing.kind else {
        return Err(Error::Capability("radial potentials need a power-type desingularizer".into()));
    };
    if theta > 0.5 {
        return Err(Error::Capability(format!(
            "radial potentials need theta <= 1/2, got {theta}"
        )));
    }
    let q = 1.0 / theta;
    let a = c.powf(-q);
    let (cv, cg, ch) = (center.clone(), center.clone(), center.clone());
    let spec = PotentialSpec::from_fns(
        "radial",
        dim,
        move |u| a * (u - &cv).norm().powf(q),
        move |u| {
            let w = u - &cg;
            let r = w.norm();
            if r == 0.0 {
                DVector::zeros(w.len())
            } else {
                w * (q * a * r.powf(q - 2.0))
            }
        },
        Some(Box::new(move |u| {
            let n = u.len();
            let w = u - &ch;
            let r = w.norm();
            if r == 0.0 {
                let diag = if q == 2.0 { 2.0 * a } else { 0.0 };
                return DMatrix::identity(n, n) * diag;
            }
            let d = &w / r;
            let rr = r.powf(q - 2.0);
            DMatrix::identity(n, n) * (q * a * rr) + (&d * d.transpose()) * (q * a * (q - 2.0) * rr)
        })),
    )
    .with_critical_point(center)
    .with_desingularizer(desing);
    Ok(spec)
}

/// `G(u) = C·((‖u‖ − ρ)₊)^r`, convex with growth exponent `r ≥ 2`. Its
/// critical set is the closed ball of radius `ρ`; the recorded critical point
/// is the boundary point `ρ·e₁`, which is non-trivial.
pub fn convex_growth(dim: usize, coeff: f64, r: f64, rho: f64) -> Result<PotentialSpec> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if !(r >= 2.0 && r.is_finite()) {
        return Err(invalid(format!("growth exponent r must be >= 2, got {r}")));
    }
    if !(coeff > 0.0 && coeff.is_finite()) || !(rho >= 0.0 && rho.is_finite()) {
        return Err(invalid("convex_growth needs C > 0 and rho >= 0"));
    }
    let mut bar = DVector::zeros(dim);
    bar[0] = rho;
    let spec = PotentialSpec::from_fns(
        "convex_growth",
        dim,
        move |u| coeff * (u.norm() - rho).max(0.0).powf(r),
        move |u| {
            let n = u.norm();
            let s = n - rho;
            if s <= 0.0 {
                DVector::zeros(u.len())
            } else {
                u * (r * coeff * s.powf(r - 1.0) / n)
            }
        },
        Some(Box::new(move |u| {
            let dim = u.len();
            let n = u.norm();
            let s = n - rho;
            if s <= 0.0 {
                return DMatrix::zeros(dim, dim);
            }
            let d = u / n;
            let ddt = &d * d.transpose();
            let radial = r * (r - 1.0) * coeff * s.powf(r - 2.0);
            let tangential = r * coeff * s.powf(r - 1.0) / n;
            &ddt * radial + (DMatrix::identity(dim, dim) - &ddt) * tangential
        })),
    )
    .with_critical_point(bar)
    .with_desingularizer(Desingularizer::power(coeff.powf(-1.0 / r), 1.0 / r)?);
    Ok(spec)
}

/// `G(u) = |u|^{3/2}` in one dimension: C¹ but not C², so no Hessian.
pub fn nonsmooth_32() -> PotentialSpec {
    PotentialSpec::from_fns(
        "nonsmooth_32",
        1,
        |u| u[0].abs().powf(1.5),
        |u| DVector::from_element(1, 1.5 * u[0].signum() * u[0].abs().sqrt()),
        None,
    )
    .with_critical_point(DVector::zeros(1))
    .with_desingularizer(Desingularizer::power(1.0, 2.0 / 3.0).expect("valid parameters"))
}

fn get_num(params: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("potential.{key}: `{v}` is not a number"))),
    }
}

fn get_dim(params: &BTreeMap<String, String>, default: usize) -> Result<usize> {
    match params.get("dim") {
        None => Ok(default),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("potential.dim: `{v}` is not a positive integer"))),
        },
    }
}

fn check_keys(name: &str, params: &BTreeMap<String, String>, allowed: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::Config(format!("potential.{k}: unknown parameter for `{name}`")));
        }
    }
    Ok(())
}

fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

/// Builds a catalog entry from its name and string-valued family parameters
/// (the `[potential]` section of a config, minus `name`).
pub fn build_catalog(name: &str, params: &BTreeMap<String, String>) -> Result<CatalogEntry> {
    let cfg = |e: Error| match e {
        Error::Config(_) => e,
        other => Error::Config(format!("potential `{name}`: {other}")),
    };
    let mut fp = BTreeMap::new();
    let spec = match name {
        "quadratic" => {
            check_keys(name, params, &["matrix", "diag"])?;
            let a = match (params.get("matrix"), params.get("diag")) {
                (Some(m), None) => {
                    let rows = parse_matrix(m).map_err(|e| Error::Config(format!("potential.matrix: {e}")))?;
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(Error::Config("potential.matrix: matrix must be square".into()));
                    }
                    DMatrix::from_fn(n, n, |i, j| rows[i][j])
                }
                (None, Some(d)) => {
                    let d = parse_list(d).map_err(|e| Error::Config(format!("potential.diag: {e}")))?;
                    DMatrix::from_diagonal(&DVector::from_vec(d))
                }
                (None, None) => DMatrix::identity(2, 2),
                (Some(_), Some(_)) => {
                    return Err(Error::Config("potential: give either `matrix` or `diag`, not both".into()))
                }
            };
            let rows: Vec<String> = a
                .row_iter()
                .map(|r| r.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(", "))
                .collect();
            fp.insert("matrix".into(), rows.join("; "));
            quadratic(a).map_err(cfg)?
        }
        "saddle" => {
            check_keys(name, params, &[])?;
            saddle()
        }
        "neg_quadratic" => {
            check_keys(name, params, &["dim"])?;
            let dim = get_dim(params, 1)?;
            fp.insert("dim".into(), dim.to_string());
            neg_quadratic(dim).map_err(cfg)?
        }
        "power" => {
            check_keys(name, params, &["dim", "p", "k"])?;
            let dim = get_dim(params, 1)?;
            let p = get_num(params, "p", 2.0)?;
            let k = get_num(params, "k", 1.0)?;
            fp.insert("dim".into(), dim.to_string());
            fp.insert("p".into(), fmt_num(p));
            fp.insert("k".into(), fmt_num(k));
            power(dim, p, k).map_err(cfg)?
        }
        "radial" => {
            check_keys(name, params, &["dim", "phi", "center"])?;
            let phi_text = params
                .get("phi")
                .map(String::as_str)
                .unwrap_or("power(c=1.0, theta=0.3333333333333333)");
            let desing = parse_desingularizer(phi_text, None)?;
            let center = match params.get("center") {
                Some(c) => DVector::from_vec(
                    parse_list(c).map_err(|e| Error::Config(format!("potential.center: {e}")))?,
                ),
                None => DVector::zeros(get_dim(params, 1)?),
            };
            if params.contains_key("dim") && get_dim(params, 1)? != center.len() {
                return Err(Error::Config("potential.center: length differs from dim".into()));
            }
            fp.insert("phi".into(), phi_text.to_string());
            fp.insert("dim".into(), center.len().to_string());
            radial(center, desing).map_err(cfg)?
        }
        "convex_growth" => {
            check_keys(name, params, &["dim", "C", "r", "rho"])?;
            let dim = get_dim(params, 1)?;
            let c = get_num(params, "C", 1.0)?;
            let r = get_num(params, "r", 3.0)?;
            let rho = get_num(params, "rho", 0.5)?;
            fp.insert("dim".into(), dim.to_string());
            fp.insert("C".into(), fmt_num(c));
            fp.insert("r".into(), fmt_num(r));
            fp.insert("rho".into(), fmt_num(rho));
            convex_growth(dim, c, r, rho).map_err(cfg)?
        }
        "nonsmooth_32" => {
            check_keys(name, params, &[])?;
            nonsmooth_32()
        }
        other => {
            return Err(Error::Config(format!(
                "potential.name: unknown potential `{other}` (expected one of {})",
                NAMES.join(", ")
            )))
        }
    };
    Ok(CatalogEntry {
        name: name.to_string(),
        spec,
        family_params: fp,
    })
}

/// One default-parameter instance of every catalog family.
pub fn default_entries() -> Vec<CatalogEntry> {
    NAMES
        .iter()
        .map(|n| build_catalog(n, &BTreeMap::new()).expect("defaults are valid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desingularize::check_kl_inequality;
    use crate::potential::check_derivatives;
    use crate::sampling::BallSampler;

    #[test]
    fn every_default_entry_builds() {
        let names: Vec<_> = default_entries().into_iter().map(|e| e.name).collect();
        assert_eq!(names, NAMES);
    }

    #[test]
    fn unknown_name_is_config_error() {
        assert!(matches!(build_catalog("banana", &BTreeMap::new()), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_param_is_rejected() {
        let mut p = BTreeMap::new();
        p.insert("q".to_string(), "1".to_string());
        assert!(build_catalog("power", &p).is_err());
    }

    #[test]
    fn quadratic_hessian_is_matrix() {
        let mut p = BTreeMap::new();
        p.insert("matrix".to_string(), "2, 1; 1, 3".to_string());
        let e = build_catalog("quadratic", &p).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let mut s = BallSampler::new(DVector::zeros(2), 3.0, 1);
        for _ in 0..20 {
            assert_eq!(e.spec.hessian(&s.next_point()).unwrap(), a);
        }
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        assert!(quadratic(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn derivatives_consistent_across_catalog() {
        for e in default_entries() {
            let n = e.spec.dim();
            let mut s = BallSampler::new(DVector::from_element(n, 0.3), 1.5, 2);
            let pts: Vec<_> = (0..25).map(|_| s.next_point()).collect();
            let r = check_derivatives(&e.spec, &pts, 1e-4).unwrap();
            assert!(r.pass, "{}: {}", e.name, r.max_relative_error);
        }
    }

    #[test]
    fn known_desingularizers_satisfy_kl() {
        for e in default_entries() {
            let (Some(bar), Some(d)) = (&e.spec.known_critical_point, &e.spec.known_desingularizer) else {
                continue;
            };
            let r = check_kl_inequality(&e.spec, bar, d, 0.5, 3000, 4).unwrap();
            assert!(r.pass, "{}: margin {}", e.name, r.margin);
        }
    }

    #[test]
    fn radial_matches_closed_form_psi() {
        let d = Desingularizer::power(1.0, 1.0 / 3.0).unwrap();
        let center = DVector::from_vec(vec![0.5, -1.0]);
        let spec = radial(center.clone(), d.clone()).unwrap();
        let mut s = BallSampler::new(center.clone(), 2.0, 3);
        for _ in 0..50 {
            let u = s.next_point();
            let rho = (&u - &center).norm();
            let want = d.psi(rho).unwrap();
            assert!((spec.value(&u) - want).abs() <= 1e-12 * (1.0 + want));
        }
    }

    #[test]
    fn radial_rejects_theta_above_half() {
        let d = Desingularizer::power(1.0, 0.75).unwrap();
        assert!(matches!(radial(DVector::zeros(1), d), Err(Error::Capability(_))));
    }

    #[test]
    fn unscaled_root_desingularizer_is_short_by_root_two() {
        // φ(s) = √(s/|λ|) only reaches margin 1/√2 for ½⟨Au,u⟩
        let spec = quadratic_diag(&[1.0, 3.0]).unwrap();
        let d = Desingularizer::power(1.0, 0.5).unwrap();
        let r = check_kl_inequality(&spec, &DVector::zeros(2), &d, 1.0, 4000, 0).unwrap();
        assert!((r.margin - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3, "{}", r.margin);
        assert!(!r.pass);
    }
}
