//! CSV and JSON artifacts.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::levelset::LevelSetProfile;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trajectory_header(dim: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=dim).map(|i| format!("u_{i}")));
    cols.extend((1..=dim).map(|i| format!("v_{i}")));
    cols.push("E_total".into());
    cols.push("grad_norm".into());
    cols.join(",")
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = trajectory_header(traj.dim());
    out.push('\n');
    for i in 0..traj.len() {
        let s = &traj.states[i];
        let row: Vec<String> = std::iter::once(traj.times[i])
            .chain(s.u.iter().copied())
            .chain(s.v.iter().copied())
            .chain([traj.energies[i], traj.grad_norms[i]])
            .map(fmt_f64)
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn profile_csv(profile: &LevelSetProfile) -> String {
    let mut out = String::from("r,psi,ratio,multiplier,converged\n");
    for (i, r) in profile.r_grid.iter().enumerate() {
        let psi = profile.psi_values[i];
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(*r),
            fmt_f64(psi),
            fmt_f64(psi / r),
            fmt_f64(profile.multipliers[i]),
            profile.converged[i]
        );
    }
    let _ = writeln!(out, "# verdict: {}", profile.verdict());
    let _ = writeln!(out, "# ratio_max: {}", fmt_f64(profile.ratio_max));
    let _ = writeln!(out, "# lambda_bar: {}", fmt_f64(profile.lambda_bar));
    let _ = writeln!(out, "# start_radius: {}", fmt_f64(profile.start_radius));
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

/// Reads a two-column `s,phi` table. A header row and `#` comments are
/// allowed.
pub fn read_phi_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read table {}: {e}", path.display())))?;
    parse_phi_table(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_phi_table(text: &str) -> std::result::Result<(Vec<f64>, Vec<f64>), String> {
    let mut s = Vec::new();
    let mut phi = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 2 {
            return Err(format!("line {}: expected two columns", i + 1));
        }
        match (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => {
                s.push(a);
                phi.push(b);
            }
            _ if s.is_empty() => continue, // header
            _ => return Err(format!("line {}: not numeric", i + 1)),
        }
    }
    if s.len() < 2 {
        return Err("table needs at least two rows".into());
    }
    Ok((s, phi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(trajectory_header(2), "t,u_1,u_2,v_1,v_2,E_total,grad_norm");
    }

    #[test]
    fn float_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn table_with_header_and_comments() {
        let (s, p) = parse_phi_table("s,phi\n# note\n0.01, 0.1\n1, 1\n").unwrap();
        assert_eq!(s, vec![0.01, 1.0]);
        assert_eq!(p, vec![0.1, 1.0]);
        assert!(parse_phi_table("s,phi\n1,2\nx,3\n").is_err());
    }
}
