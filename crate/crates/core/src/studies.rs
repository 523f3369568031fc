//! Numerical studies built on the integrator: temporal convergence,
//! stability sweeps, growth-rate measurement and structure factors.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::assembly::FieldState;
use crate::error::{Error, Result};
use crate::fft::{signed_frequency, FftNd};
use crate::integrator::{Integrator, RunOutput, Schedule, ViolationPolicy};
use crate::model::{dispersion_rate, ModelParams, SchemeOrder};
use crate::space::TensorSpace;
use crate::sparse::SparseMatrix;
use crate::spectral_oracle::SpectralGrid;

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `‖a − b‖_{L²}` for two coefficient vectors, via the mass matrix.
pub fn l2_norm_of_difference(mass: &SparseMatrix, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mut md = vec![0.0; d.len()];
    mass.mul_vec(&d, &mut md);
    d.iter().zip(&md).map(|(x, y)| x * y).sum::<f64>().max(0.0).sqrt()
}

fn run_to_end(params: &ModelParams, initial: &FieldState) -> Result<RunOutput> {
    let mut integ = Integrator::new(params.clone(), ViolationPolicy::Warn)?;
    integ
        .run(initial.clone(), Schedule { snapshot_stride: 0 })
        .map_err(|f| f.error)
}

fn final_coefficients(out: RunOutput) -> Vec<f64> {
    out.final_state
        .expect("successful run has a final state")
        .coefficients
}

#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub order: SchemeOrder,
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    pub reference_dt: f64,
    pub slope: f64,
}

/// Runs to `params.final_time` at each `dt` and at `min(dts)/16`, and fits
/// the L² error at the final time against `dt`.
pub fn temporal_convergence(
    params: &ModelParams,
    initial: &FieldState,
    dts: &[f64],
    order: SchemeOrder,
) -> Result<ConvergenceStudy> {
    if dts.len() < 2 || dts.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidParams(
            "need at least two positive time steps".into(),
        ));
    }
    let mut p = params.clone();
    p.scheme = order;
    let reference_dt = dts.iter().cloned().fold(f64::INFINITY, f64::min) / 16.0;
    p.dt = reference_dt;
    let reference = final_coefficients(run_to_end(&p, initial)?);
    let mass = crate::assembly::assemble_mass(&p.space()?);
    let mut errors = Vec::with_capacity(dts.len());
    for &dt in dts {
        p.dt = dt;
        let phi = final_coefficients(run_to_end(&p, initial)?);
        errors.push(l2_norm_of_difference(&mass, &phi, &reference));
    }
    Ok(ConvergenceStudy {
        order,
        dts: dts.to_vec(),
        slope: loglog_slope(dts, &errors),
        errors,
        reference_dt,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRow {
    pub dt: f64,
    pub order: SchemeOrder,
    pub steps: usize,
    /// Largest single-step `E⁺ − Eⁿ`.
    pub max_energy_increase: f64,
    /// Steps whose increase exceeded the slack.
    pub violations: usize,
    /// Largest relative per-step mass change.
    pub max_mass_drift: f64,
}

/// Takes `steps` steps at each `dt` and records energy and mass behaviour.
/// Violations are counted, not fatal.
pub fn stability_sweep(
    params: &ModelParams,
    initial: &FieldState,
    dts: &[f64],
    order: SchemeOrder,
    steps: usize,
) -> Result<Vec<StabilityRow>> {
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        let mut p = params.clone();
        p.scheme = order;
        p.dt = dt;
        p.final_time = initial.time + dt * steps as f64;
        let out = run_to_end(&p, initial)?;
        let max_mass_drift = out
            .diagnostics
            .windows(2)
            .map(|w| (w[1].mass - w[0].mass).abs() / (1.0 + w[0].mass.abs()))
            .fold(0.0, f64::max);
        rows.push(StabilityRow {
            dt,
            order,
            steps: out.diagnostics.len() - 1,
            max_energy_increase: out.max_energy_increase,
            violations: out.energy_violations,
            max_mass_drift,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthMeasurement {
    /// Wavenumber actually representable on the box.
    pub k: f64,
    pub measured: f64,
    pub analytic: f64,
    /// Mode amplitude at each accepted step.
    pub times: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl GrowthMeasurement {
    pub fn ratio(&self) -> f64 {
        self.measured / self.analytic
    }
}

/// Amplitude of `cos(2π n·x/L)` in a field: `∫(φ − φ̄) cos / ∫ cos²`.
fn mode_amplitude(load: &[f64], coeffs: &[f64], mean: f64, norm: f64) -> f64 {
    load.iter().zip(coeffs).map(|(b, c)| b * (c - mean)).sum::<f64>() / norm
}

/// Seeds `φ̄ + δ cos(k x₀)` with the box wavenumber closest to `k`, runs to
/// `params.final_time` and fits `ln a(t)` by least squares.
pub fn measure_growth_rate(params: &ModelParams, k: f64, amplitude: f64) -> Result<GrowthMeasurement> {
    let space = params.space()?;
    let l0 = params.lengths[0];
    let n = (k * l0 / (2.0 * PI)).round();
    if n < 1.0 {
        return Err(Error::InvalidParams(format!(
            "wavenumber {k} is not resolved by a box of length {l0}"
        )));
    }
    let k_actual = 2.0 * PI * n / l0;
    let mut k_index = vec![0i64; space.dim()];
    k_index[0] = n as i64;
    let ic = crate::initial::InitialCondition::SingleMode {
        mean: params.mean_density,
        k_index,
        amplitude,
    };
    let mut integ = Integrator::new(params.clone(), ViolationPolicy::Warn)?;
    let initial = crate::initial::initial_state(&space, &integ.operators().mass, &ic)?;
    let load = mode_load(&space, k_actual);
    let norm = 0.5 * space.volume();
    let mean = params.mean_density;
    let mut times = vec![0.0];
    let mut amplitudes = vec![mode_amplitude(&load, &initial.coefficients, mean, norm)];
    integ
        .run_with(initial, Schedule { snapshot_stride: 0 }, |s, _| {
            times.push(s.time);
            amplitudes.push(mode_amplitude(&load, &s.coefficients, mean, norm));
        })
        .map_err(|f| f.error)?;
    if amplitudes.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidParams(
            "mode amplitude changed sign; use a smaller time step".into(),
        ));
    }
    let logs: Vec<f64> = amplitudes.iter().map(|a| a.ln()).collect();
    let nt = times.len() as f64;
    let mt = times.iter().sum::<f64>() / nt;
    let ml = logs.iter().sum::<f64>() / nt;
    let num: f64 = times.iter().zip(&logs).map(|(t, l)| (t - mt) * (l - ml)).sum();
    let den: f64 = times.iter().map(|t| (t - mt) * (t - mt)).sum();
    if den == 0.0 {
        return Err(Error::InvalidParams(
            "growth fit needs a positive final time".into(),
        ));
    }
    Ok(GrowthMeasurement {
        k: k_actual,
        measured: num / den,
        analytic: dispersion_rate(k_actual, params.epsilon, params.mean_density),
        times,
        amplitudes,
    })
}

/// `(N_i, cos(k x₀))`.
fn mode_load(space: &TensorSpace, k: f64) -> Vec<f64> {
    let r = space.reference();
    let n = r.n_local;
    let mut out = vec![0.0; space.n_dof()];
    let mut dofs = vec![0; n];
    for e in 0..space.n_elements() {
        space.element_dofs(e, &mut dofs);
        for q in 0..r.n_qp {
            let x = space.qp_position(e, q);
            let w = r.weight[q] * (k * x[0]).cos();
            for (d, v) in dofs.iter().zip(&r.value[q * n..(q + 1) * n]) {
                out[*d] += w * v;
            }
        }
    }
    out
}

/// Radially binned power spectrum of a gridded field (mean removed).
#[derive(Clone, Debug, PartialEq)]
pub struct RadialSpectrum {
    /// Power-weighted mean `|k|` per bin.
    pub k: Vec<f64>,
    pub power: Vec<f64>,
}

impl RadialSpectrum {
    /// `|k|` of the bin with the largest power.
    pub fn peak(&self) -> f64 {
        let (i, _) = self
            .power
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        self.k[i]
    }
}

/// Structure factor `|φ̂(k)|²` of samples on a uniform grid with `shape`
/// points over `lengths`, summed in shells of width `min_d 2π/L_d`.
pub fn structure_factor(values: &[f64], shape: &[usize], lengths: &[f64]) -> RadialSpectrum {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
    FftNd::new(shape).forward(&mut buf);
    let width = lengths.iter().map(|l| 2.0 * PI / l).fold(f64::INFINITY, f64::min);
    let mut power = Vec::new();
    let mut kw = Vec::new();
    for (i, c) in buf.iter().enumerate() {
        let mut j = i;
        let mut k2 = 0.0;
        for (&m, &l) in shape.iter().zip(lengths) {
            let kd = 2.0 * PI * signed_frequency(j % m, m) as f64 / l;
            k2 += kd * kd;
            j /= m;
        }
        if k2 == 0.0 {
            continue;
        }
        let kmag = k2.sqrt();
        let bin = (kmag / width).round() as usize;
        if bin >= power.len() {
            power.resize(bin + 1, 0.0);
            kw.resize(bin + 1, 0.0);
        }
        let p = c.norm_sqr();
        power[bin] += p;
        kw[bin] += p * kmag;
    }
    let k = kw
        .iter()
        .zip(&power)
        .enumerate()
        .map(|(b, (w, p))| if *p > 0.0 { w / p } else { b as f64 * width })
        .collect();
    RadialSpectrum { k, power }
}

/// Structure factor of a spline field sampled at element vertices.
pub fn field_structure_factor(space: &TensorSpace, coeffs: &[f64]) -> RadialSpectrum {
    structure_factor(&space.sample_vertices(coeffs), &space.shape(), &space.lengths())
}

/// Discrete L² distance between a spline field and grid samples:
/// `(|Ω|/N Σ (φ_h(x_i) − g_i)²)^{1/2}` over the grid points.
pub fn l2_difference_on_grid(
    space: &TensorSpace,
    coeffs: &[f64],
    grid: &SpectralGrid,
    values: &[f64],
) -> f64 {
    let cell = grid.volume() / grid.len() as f64;
    let sum: f64 = (0..grid.len())
        .map(|i| {
            let d = space.eval_field(coeffs, &grid.point(i)) - values[i];
            d * d
        })
        .sum();
    (sum * cell).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn structure_factor_of_plane_wave() {
        let shape = [64, 32];
        let lengths = [40.0, 20.0];
        let k = 2.0 * PI * 6.0 / 40.0;
        let values: Vec<f64> = (0..64 * 32)
            .map(|i| 0.3 + (k * (i % 64) as f64 * 40.0 / 64.0).cos())
            .collect();
        let s = structure_factor(&values, &shape, &lengths);
        assert!((s.peak() - k).abs() < 1e-12);
        let total: f64 = s.power.iter().sum();
        // two modes of amplitude N/2
        assert!((total - 2.0 * (64.0 * 32.0 / 2.0f64).powi(2)).abs() < 1e-6);
    }

    #[test]
    fn mode_amplitude_of_projected_cosine() {
        let space = TensorSpace::new(2, &[32], &[4.0 * PI], None).unwrap();
        let mass = crate::assembly::assemble_mass(&space);
        let s = crate::assembly::project(&space, &mass, |x| 0.2 + 0.01 * (x[0]).cos()).unwrap();
        let load = mode_load(&space, 1.0);
        let a = mode_amplitude(&load, &s.coefficients, 0.2, 0.5 * space.volume());
        assert!((a - 0.01).abs() < 1e-9, "{a}");
    }
}
