//! Fourier pseudo-spectral PFC solver, used only as an independent check.
//!
//! It shares nothing with the spline machinery: exact Fourier symbols for the
//! linear operators, the cubic evaluated pointwise on the grid, and a
//! first-order semi-implicit step (linear part implicit, cubic explicit).
//! The step is stable only for small `Δt`; callers pin it.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{signed_frequency, FftNd};

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid {
    shape: Vec<usize>,
    lengths: Vec<f64>,
    /// `|k|²` per mode.
    k2: Vec<f64>,
}

impl SpectralGrid {
    /// Grid with `shape[d]` points (a power of two) over `[0, lengths[d])`.
    pub fn new(shape: &[usize], lengths: &[f64]) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 || shape.len() != lengths.len() {
            return Err(Error::InvalidParams("grid dimension must be 1, 2 or 3".into()));
        }
        if shape.iter().any(|n| !n.is_power_of_two() || *n < 2) {
            return Err(Error::InvalidParams(format!(
                "grid sizes must be powers of two, got {shape:?}"
            )));
        }
        if lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidParams("grid lengths must be positive".into()));
        }
        let total: usize = shape.iter().product();
        let k2 = (0..total)
            .map(|mut i| {
                let mut s = 0.0;
                for (&n, &l) in shape.iter().zip(lengths) {
                    let k = 2.0 * std::f64::consts::PI * signed_frequency(i % n, n) as f64 / l;
                    s += k * k;
                    i /= n;
                }
                s
            })
            .collect();
        Ok(Self {
            shape: shape.to_vec(),
            lengths: lengths.to_vec(),
            k2,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn len(&self) -> usize {
        self.k2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k2.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn wavenumber_squared(&self) -> &[f64] {
        &self.k2
    }

    /// Coordinates of grid point `i` (first axis fastest).
    pub fn point(&self, mut i: usize) -> Vec<f64> {
        self.shape
            .iter()
            .zip(&self.lengths)
            .map(|(&n, &l)| {
                let j = i % n;
                i /= n;
                j as f64 * l / n as f64
            })
            .collect()
    }

    pub fn sample<G: Fn(&[f64]) -> f64>(&self, g: G) -> Vec<f64> {
        (0..self.len()).map(|i| g(&self.point(i))).collect()
    }

    pub fn mean(&self, phi: &[f64]) -> f64 {
        phi.iter().sum::<f64>() / phi.len() as f64
    }

    fn transform(&self, phi: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = phi.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftNd::new(&self.shape).forward(&mut buf);
        buf
    }

    fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        FftNd::new(&self.shape).inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

/// `φ_t = Δ[φ³ + (1−ε)φ + 2Δφ + Δ²φ]` evaluated on the grid.
pub fn spectral_rhs(grid: &SpectralGrid, epsilon: f64, phi: &[f64]) -> Vec<f64> {
    let cubic: Vec<f64> = phi.iter().map(|v| v * v * v).collect();
    let c_hat = grid.transform(&cubic);
    let p_hat = grid.transform(phi);
    let out = c_hat
        .iter()
        .zip(&p_hat)
        .zip(grid.wavenumber_squared())
        .map(|((c, p), &k2)| {
            let lin = 1.0 - epsilon - 2.0 * k2 + k2 * k2;
            -(c + p * lin) * k2
        })
        .collect();
    grid.inverse_real(out)
}

/// One semi-implicit step:
/// `φ̂⁺ = (φ̂ − Δt k² ĉ) / (1 + Δt k² (k⁴ − 2k² + 1 − ε))`, `c = φ³`.
pub fn spectral_step(grid: &SpectralGrid, epsilon: f64, phi: &[f64], dt: f64) -> Vec<f64> {
    let cubic: Vec<f64> = phi.iter().map(|v| v * v * v).collect();
    let c_hat = grid.transform(&cubic);
    let p_hat = grid.transform(phi);
    let out = c_hat
        .iter()
        .zip(&p_hat)
        .zip(grid.wavenumber_squared())
        .map(|((c, p), &k2)| {
            let denom = 1.0 + dt * k2 * (k2 * k2 - 2.0 * k2 + 1.0 - epsilon);
            (p - c * (dt * k2)) / denom
        })
        .collect();
    grid.inverse_real(out)
}

/// Integrates to `final_time` with steps of at most `dt`.
pub fn spectral_solve(grid: &SpectralGrid, epsilon: f64, phi: &[f64], final_time: f64, dt: f64) -> Vec<f64> {
    let steps = (final_time / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 {
        0.0
    } else {
        final_time / steps as f64
    };
    let mut state = phi.to_vec();
    for _ in 0..steps {
        state = spectral_step(grid, epsilon, &state, h);
    }
    state
}

/// The PFC free energy by grid quadrature, with derivatives taken
/// spectrally (exact for band-limited fields).
pub fn energy(grid: &SpectralGrid, epsilon: f64, phi: &[f64]) -> f64 {
    let n = grid.len() as f64;
    let cell = grid.volume() / n;
    let local: f64 = phi
        .iter()
        .map(|v| {
            let v2 = v * v;
            0.25 * v2 * v2 + 0.5 * (1.0 - epsilon) * v2
        })
        .sum::<f64>()
        * cell;
    // Parseval: Σ_x |f|² = Σ_k |f̂|² / N
    let p_hat = grid.transform(phi);
    let quad: f64 = p_hat
        .iter()
        .zip(grid.wavenumber_squared())
        .map(|(p, &k2)| p.norm_sqr() * (-k2 + 0.5 * k2 * k2))
        .sum::<f64>()
        * cell
        / n;
    local + quad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dispersion_rate;
    use std::f64::consts::PI;

    #[test]
    fn rejects_non_power_of_two() {
        assert!(SpectralGrid::new(&[12], &[1.0]).is_err());
        assert!(SpectralGrid::new(&[16, 8], &[1.0]).is_err());
    }

    #[test]
    fn constants_are_steady() {
        let g = SpectralGrid::new(&[16, 8], &[10.0, 5.0]).unwrap();
        let phi = vec![0.3; g.len()];
        assert!(spectral_rhs(&g, 0.25, &phi).iter().all(|v| v.abs() < 1e-14));
        let next = spectral_step(&g, 0.25, &phi, 0.1);
        assert!(next.iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn linearization_matches_dispersion() {
        let g = SpectralGrid::new(&[32], &[2.0 * PI]).unwrap();
        let delta = 1e-4;
        let phi = g.sample(|x| delta * x[0].cos());
        let rhs = spectral_rhs(&g, 0.25, &phi);
        let omega = dispersion_rate(1.0, 0.25, 0.0);
        for (r, p) in rhs.iter().zip(&phi) {
            assert!((r - omega * p).abs() < 10.0 * delta.powi(3));
        }
    }

    #[test]
    fn rhs_and_step_conserve_mean() {
        let g = SpectralGrid::new(&[16, 16], &[12.0, 12.0]).unwrap();
        let phi: Vec<f64> = (0..g.len())
            .map(|i| 0.1 + 0.4 * ((i * 7919) % 97) as f64 / 97.0)
            .collect();
        let rhs = spectral_rhs(&g, 0.25, &phi);
        assert!(g.mean(&rhs).abs() < 1e-13);
        let next = spectral_step(&g, 0.25, &phi, 0.05);
        let m0: f64 = phi.iter().sum();
        let m1: f64 = next.iter().sum();
        assert!((m0 - m1).abs() <= 1e-13 * m0.abs());
    }

    #[test]
    fn energy_of_constants() {
        let g = SpectralGrid::new(&[8, 8], &[3.0, 4.0]).unwrap();
        assert_eq!(energy(&g, 0.25, &vec![0.0; 64]), 0.0);
        let c = 0.4;
        let e = energy(&g, 0.25, &vec![c; 64]);
        assert!((e - 12.0 * (0.25 * c.powi(4) + 0.5 * 0.75 * c * c)).abs() < 1e-13);
    }

    #[test]
    fn single_mode_amplification_tends_to_exponential() {
        // per-step ratio r(Δt) → e^{εΔt}; Richardson over Δt removes the O(Δt) bias
        let g = SpectralGrid::new(&[16], &[2.0 * PI]).unwrap();
        let eps = 0.25;
        let rate = |dt: f64| {
            let phi = g.sample(|x| 1e-8 * x[0].cos());
            let next = spectral_step(&g, eps, &phi, dt);
            (next[0] / phi[0]).ln() / dt
        };
        let (r1, r2, r3) = (rate(1e-2), rate(1e-3), rate(1e-4));
        let rich = 2.0 * rate(5e-5) - r3;
        assert!((r1 - eps).abs() > (r2 - eps).abs());
        assert!((r2 - eps).abs() > (r3 - eps).abs());
        assert!((rich - eps).abs() < 1e-6, "{rich}");
    }
}
