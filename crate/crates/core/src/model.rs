//! Phase-field crystal physics: parameters, the discrete free energy and its
//! convex/concave split, the secant nonlinearity and the linear dispersion
//! relation.
//!
//! The free energy is
//!
//! ```text
//! E[φ] = ∫ ¼φ⁴ + ½(1−ε)φ² − |∇φ|² + ½(Δφ)² dΩ
//!      = E_c − E_e,   E_c = ∫ ¼φ⁴ + ½(1−ε)φ² + ½(Δφ)²,   E_e = ∫ |∇φ|²
//! ```
//!
//! and the dynamics are the conserved gradient flow `φ_t = Δ δE/δφ`.
//! Both parts are convex for `0 < ε ≤ 1`.

use crate::assembly::{assemble_nonlinear_load, check_len, FieldState, Operators};
use crate::error::{Error, Result};
use crate::linsolve::LinearSolverKind;
use crate::space::TensorSpace;

/// Time-discretization order of the convex-splitting scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeOrder {
    FirstOrder,
    SecondOrder,
}

impl SchemeOrder {
    pub fn name(self) -> &'static str {
        match self {
            SchemeOrder::FirstOrder => "first_order",
            SchemeOrder::SecondOrder => "second_order",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "first_order" => Some(SchemeOrder::FirstOrder),
            "second_order" => Some(SchemeOrder::SecondOrder),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Undercooling, `0 < ε ≤ 1`.
    pub epsilon: f64,
    /// Mean density `φ̄`.
    pub mean_density: f64,
    pub lengths: Vec<f64>,
    pub elements: Vec<usize>,
    pub degree: usize,
    /// Gauss points per direction.
    pub quad_points: usize,
    pub dt: f64,
    pub final_time: f64,
    pub scheme: SchemeOrder,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub linear_tol: f64,
    pub linear_solver: LinearSolverKind,
}

impl ModelParams {
    /// Defaults for everything but the physics and the box.
    pub fn new(epsilon: f64, mean_density: f64, lengths: Vec<f64>, elements: Vec<usize>) -> Self {
        Self {
            epsilon,
            mean_density,
            lengths,
            elements,
            degree: 2,
            quad_points: 3,
            dt: 0.1,
            final_time: 1.0,
            scheme: SchemeOrder::SecondOrder,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            linear_tol: 1e-12,
            linear_solver: LinearSolverKind::Krylov,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad("ε must lie in (0, 1]".into());
        }
        if !self.mean_density.is_finite() {
            return bad("mean density must be finite".into());
        }
        if self.lengths.is_empty() || self.lengths.len() > 3 {
            return bad(format!(
                "dimension must be 1, 2 or 3 (got {})",
                self.lengths.len()
            ));
        }
        if self.lengths.len() != self.elements.len() {
            return bad("lengths and elements must have the same dimension".into());
        }
        if self.lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return bad("lengths must be positive".into());
        }
        if self.degree < 2 {
            return bad("degree must be at least 2 (the bilaplacian needs C¹ splines)".into());
        }
        if self.elements.iter().any(|&m| m <= self.degree) {
            return bad("every direction needs more elements than the degree".into());
        }
        if !(1..=10).contains(&self.quad_points) {
            return bad("quadrature points must be between 1 and 10".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive".into());
        }
        if !(self.final_time.is_finite() && self.final_time >= 0.0) {
            return bad("final time must be non-negative".into());
        }
        if !(self.newton_tol > 0.0 && self.linear_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.newton_max_iter == 0 {
            return bad("Newton needs at least one iteration".into());
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn space(&self) -> Result<TensorSpace> {
        self.validate()?;
        TensorSpace::new(self.degree, &self.elements, &self.lengths, Some(self.quad_points))
    }
}

/// Free energy and its split, `total = convex − concave`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyReport {
    pub total: f64,
    pub convex: f64,
    pub concave: f64,
}

/// Discrete free energy, evaluated with the same element and quadrature
/// loop as residual assembly.
pub fn free_energy(space: &TensorSpace, epsilon: f64, phi: &FieldState) -> Result<EnergyReport> {
    free_energy_of(space, epsilon, &phi.coefficients)
}

pub fn free_energy_of(space: &TensorSpace, epsilon: f64, coeffs: &[f64]) -> Result<EnergyReport> {
    check_len(space, coeffs)?;
    let r = space.reference();
    let n = r.n_local;
    let dim = r.dim;
    let mut dofs = vec![0; n];
    let mut local = vec![0.0; n];
    let (mut convex, mut concave) = (0.0, 0.0);
    for e in 0..space.n_elements() {
        space.element_dofs(e, &mut dofs);
        for (l, d) in local.iter_mut().zip(&dofs) {
            *l = coeffs[*d];
        }
        for q in 0..r.n_qp {
            let mut v = 0.0;
            let mut lap = 0.0;
            let mut g = [0.0; 3];
            for a in 0..n {
                let c = local[a];
                let i = q * n + a;
                v += r.value[i] * c;
                lap += r.lap[i] * c;
                for k in 0..dim {
                    g[k] += r.grad[i * dim + k] * c;
                }
            }
            let v2 = v * v;
            let w = r.weight[q];
            convex += w * (0.25 * v2 * v2 + 0.5 * (1.0 - epsilon) * v2 + 0.5 * lap * lap);
            concave += w * g.iter().map(|x| x * x).sum::<f64>();
        }
    }
    Ok(EnergyReport {
        total: convex - concave,
        convex,
        concave,
    })
}

/// `∫ φ dΩ = 𝟙ᵀ M φ`, with compensated summation.
pub fn mass(integrals: &[f64], coeffs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (w, c) in integrals.iter().zip(coeffs) {
        let x = w * c;
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Secant form of the quartic's derivative,
/// `χ(a, b) = (a³ + a²b + ab² + b³)/4`, so that `χ(a,b)(a−b) = ¼(a⁴−b⁴)`.
pub fn chi_secant(a: f64, b: f64) -> f64 {
    0.25 * (a * a * a + a * a * b + a * b * b + b * b * b)
}

/// `∂χ/∂a = ¼(3a² + 2ab + b²)`; non-negative.
pub fn chi_secant_da(a: f64, b: f64) -> f64 {
    0.25 * (3.0 * a * a + 2.0 * a * b + b * b)
}

/// Linear growth rate of a Fourier mode of wavenumber `k` about the
/// constant state `φ̄`: `ω(k) = −k²[(1−k²)² − ε + 3φ̄²]`.
pub fn dispersion_rate(k: f64, epsilon: f64, mean_density: f64) -> f64 {
    let k2 = k * k;
    -k2 * ((1.0 - k2).powi(2) - epsilon + 3.0 * mean_density * mean_density)
}

/// Coefficient gradient of the discrete energy:
/// `b(φ³) + (1−ε)Mφ − 2Kφ + Aφ`.
pub fn energy_gradient(
    space: &TensorSpace,
    ops: &Operators,
    epsilon: f64,
    coeffs: &[f64],
) -> Result<Vec<f64>> {
    let mut g = assemble_nonlinear_load(space, &[coeffs], |v| v[0] * v[0] * v[0])?;
    ops.mass.mul_vec_scaled(1.0 - epsilon, coeffs, 1.0, &mut g);
    ops.stiffness.mul_vec_scaled(-2.0, coeffs, 1.0, &mut g);
    ops.bilaplacian.mul_vec_scaled(1.0, coeffs, 1.0, &mut g);
    Ok(g)
}
