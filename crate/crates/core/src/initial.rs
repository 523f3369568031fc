//! Initial conditions.
//!
//! Smooth profiles are L²-projected onto the spline space; every result is
//! then shifted by a constant so that its mean equals the requested density.
//! Splines form a partition of unity, so a constant shift of the
//! coefficients shifts the field by exactly that constant.

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{basis_integrals, project, FieldState};
use crate::error::{Error, Result};
use crate::model::mass;
use crate::space::TensorSpace;
use crate::sparse::SparseMatrix;

/// Wavenumber of the one-mode hexagonal pattern (lattice spacing 4π/√3).
pub const HEX_WAVENUMBER: f64 = 0.866_025_403_784_438_6;

#[derive(Clone, Debug, PartialEq)]
pub struct HexSeed {
    pub center: Vec<f64>,
    /// Lattice rotation in the x–y plane, radians.
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// `φ̄` plus uniform noise in `[−amplitude, amplitude]` on every coefficient.
    ConstantNoise { mean: f64, amplitude: f64, seed: u64 },
    /// `φ̄ + A cos(Σ_d 2π n_d x_d / L_d)`.
    SingleMode {
        mean: f64,
        k_index: Vec<i64>,
        amplitude: f64,
    },
    /// Hexagonal crystallites of radius `radius` in a liquid of density `φ̄`.
    HexSeeds {
        mean: f64,
        seeds: Vec<HexSeed>,
        radius: f64,
        amplitude: f64,
    },
}

impl InitialCondition {
    pub fn mean(&self) -> f64 {
        match self {
            InitialCondition::ConstantNoise { mean, .. }
            | InitialCondition::SingleMode { mean, .. }
            | InitialCondition::HexSeeds { mean, .. } => *mean,
        }
    }
}

/// One-mode hexagonal profile around the origin of the local frame.
pub fn hex_pattern(x: f64, y: f64, amplitude: f64) -> f64 {
    let q = HEX_WAVENUMBER;
    let s3 = 3f64.sqrt();
    amplitude * ((q * x).cos() * (q * y / s3).cos() - 0.5 * (2.0 * q * y / s3).cos())
}

/// Minimum-image displacement from `c` to `x` in a periodic box.
fn periodic_delta(x: &[f64], c: &[f64], lengths: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(c)
        .zip(lengths)
        .map(|((xi, ci), l)| {
            let d = (xi - ci).rem_euclid(*l);
            if d > 0.5 * l {
                d - l
            } else {
                d
            }
        })
        .collect()
}

fn check_seeds(seeds: &[HexSeed], radius: f64, lengths: &[f64]) -> Result<()> {
    let dim = lengths.len();
    if seeds.is_empty() {
        return Err(Error::InitialCondition(
            "hex_seeds needs at least one seed".into(),
        ));
    }
    if lengths.iter().any(|l| 2.0 * radius > *l) {
        return Err(Error::InitialCondition(format!(
            "seed radius {radius} does not fit in the domain"
        )));
    }
    for (i, s) in seeds.iter().enumerate() {
        if s.center.len() != dim {
            return Err(Error::InitialCondition(format!(
                "seed {i} has {} coordinates, domain has {dim}",
                s.center.len()
            )));
        }
        for (j, t) in seeds.iter().enumerate().take(i) {
            let d = periodic_delta(&s.center, &t.center, lengths);
            let dist = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dist < 2.0 * radius {
                return Err(Error::InitialCondition(format!(
                    "seeds {j} and {i} overlap (distance {dist:.4} < {})",
                    2.0 * radius
                )));
            }
        }
    }
    Ok(())
}

/// Pointwise profile of a non-random initial condition.
pub fn profile(ic: &InitialCondition, lengths: &[f64], x: &[f64]) -> f64 {
    match ic {
        InitialCondition::ConstantNoise { mean, .. } => *mean,
        InitialCondition::SingleMode {
            mean,
            k_index,
            amplitude,
        } => {
            let arg: f64 = k_index
                .iter()
                .zip(lengths)
                .zip(x)
                .map(|((n, l), xi)| 2.0 * PI * *n as f64 * xi / l)
                .sum();
            mean + amplitude * arg.cos()
        }
        InitialCondition::HexSeeds {
            mean,
            seeds,
            radius,
            amplitude,
        } => {
            for s in seeds {
                let d = periodic_delta(x, &s.center, lengths);
                if d.iter().map(|v| v * v).sum::<f64>() < radius * radius {
                    let dy = if d.len() > 1 { d[1] } else { 0.0 };
                    let (sin, cos) = s.angle.sin_cos();
                    let xr = cos * d[0] + sin * dy;
                    let yr = -sin * d[0] + cos * dy;
                    return mean + hex_pattern(xr, yr, *amplitude);
                }
            }
            *mean
        }
    }
}

/// Builds the initial coefficient vector; its mean equals `ic.mean()` to
/// round-off.
pub fn initial_state(
    space: &TensorSpace,
    mass_matrix: &SparseMatrix,
    ic: &InitialCondition,
) -> Result<FieldState> {
    let lengths = space.lengths();
    let mut coeffs = match ic {
        InitialCondition::ConstantNoise {
            mean,
            amplitude,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..space.n_dof())
                .map(|_| mean + amplitude * (2.0 * rng.random::<f64>() - 1.0))
                .collect()
        }
        InitialCondition::SingleMode { k_index, .. } => {
            if k_index.len() != space.dim() {
                return Err(Error::InitialCondition(format!(
                    "wave index has {} entries, domain has {}",
                    k_index.len(),
                    space.dim()
                )));
            }
            project(space, mass_matrix, |x| profile(ic, &lengths, x))?.coefficients
        }
        InitialCondition::HexSeeds { seeds, radius, .. } => {
            check_seeds(seeds, *radius, &lengths)?;
            project(space, mass_matrix, |x| profile(ic, &lengths, x))?.coefficients
        }
    };
    let integrals = basis_integrals(space);
    let shift = ic.mean() - mass(&integrals, &coeffs) / space.volume();
    for c in &mut coeffs {
        *c += shift;
    }
    Ok(FieldState::new(coeffs))
}
