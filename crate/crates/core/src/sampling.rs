//! Deterministic low-discrepancy sampling over balls.
//!
//! Every sampler is a Halton sequence with a Cranley-Patterson rotation whose
//! shift vector is drawn from a ChaCha stream keyed by the run seed, so a given
//! `(seed, dimension, index)` triple always produces the same point.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const PRIMES: [u64; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

/// Largest number of Halton coordinates a single point can carry.
pub const MAX_HALTON_DIM: usize = PRIMES.len();

pub fn radical_inverse(base: u64, mut index: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

/// Rotated Halton sequence in `[0, 1)^dim`.
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(
            dim <= MAX_HALTON_DIM,
            "Halton dimension {dim} exceeds {MAX_HALTON_DIM}"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        // index 0 is the origin of every base; skip it
        Halton { shift, index: 1 }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        self.shift
            .iter()
            .zip(PRIMES.iter())
            .map(|(s, &p)| (radical_inverse(p, i) + s).fract())
            .collect()
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Maps `dim` direction coordinates plus one radial coordinate in `[0, 1)` to
/// a point of the unit ball, uniformly in volume.
pub fn unit_ball_point(dir_coords: &[f64], radial: f64) -> DVector<f64> {
    let dir = unit_sphere_point(dir_coords);
    let n = dir_coords.len() as f64;
    dir * radial.max(0.0).powf(1.0 / n)
}

/// Maps `dim` coordinates in `[0, 1)` to a point of the unit sphere.
pub fn unit_sphere_point(coords: &[f64]) -> DVector<f64> {
    let n = coords.len();
    if n == 1 {
        return DVector::from_element(1, if coords[0] < 0.5 { -1.0 } else { 1.0 });
    }
    let normal = std_normal();
    let mut g = DVector::from_iterator(
        n,
        coords
            .iter()
            .map(|&c| normal.inverse_cdf(c.clamp(1e-12, 1.0 - 1e-12))),
    );
    let norm = g.norm();
    if norm < 1e-300 {
        g.fill(0.0);
        g[0] = 1.0;
        g
    } else {
        g / norm
    }
}

/// Uniform low-discrepancy samples in the closed ball `B(center, radius)`.
#[derive(Debug, Clone)]
pub struct BallSampler {
    center: DVector<f64>,
    radius: f64,
    halton: Halton,
}

impl BallSampler {
    pub fn new(center: DVector<f64>, radius: f64, seed: u64) -> Self {
        let dim = center.len();
        BallSampler {
            halton: Halton::new(dim + 1, seed),
            center,
            radius,
        }
    }

    pub fn next_point(&mut self) -> DVector<f64> {
        let x = self.halton.next_point();
        let n = self.center.len();
        &self.center + unit_ball_point(&x[..n], x[n]) * self.radius
    }
}

/// Samples of `B(center, radius)` whose distance to the center is log-uniform
/// over `[radius·10^-decades, radius]`. Used by local checks that need to probe
/// behaviour arbitrarily close to a critical point.
#[derive(Debug, Clone)]
pub struct GradedBallSampler {
    center: DVector<f64>,
    radius: f64,
    decades: f64,
    halton: Halton,
}

impl GradedBallSampler {
    pub fn new(center: DVector<f64>, radius: f64, decades: f64, seed: u64) -> Self {
        let dim = center.len();
        GradedBallSampler {
            halton: Halton::new(dim + 1, seed),
            center,
            radius,
            decades,
        }
    }

    pub fn next_point(&mut self) -> DVector<f64> {
        let x = self.halton.next_point();
        let n = self.center.len();
        let dir = unit_sphere_point(&x[..n]);
        let rho = self.radius * 10f64.powf(-self.decades * x[n]);
        &self.center + dir * rho
    }
}

/// Deterministic covering of the unit sphere with `count` directions.
///
/// One dimension gives `±1`; two dimensions give equally spaced angles; higher
/// dimensions give the signed coordinate axes followed by Halton points.
pub fn sphere_directions(dim: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count.max(1))
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / count.max(1) as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(count);
            'axes: for i in 0..dim {
                for s in [1.0, -1.0] {
                    if out.len() == count {
                        break 'axes;
                    }
                    let mut e = DVector::zeros(dim);
                    e[i] = s;
                    out.push(e);
                }
            }
            let mut h = Halton::new(dim, seed);
            while out.len() < count {
                out.push(unit_sphere_point(&h.next_point()));
            }
            out
        }
    }
}
