//! Galerkin assembly on periodic tensor spaces: mass, stiffness and
//! bilaplacian operators, nonlinear load vectors and L² projection.
//!
//! The linear operators have the same element matrix on every element, so it
//! is computed once and scattered. Nonlinear terms are evaluated at the
//! quadrature points of the space's own rule; energies and residuals use the
//! same rule, which is what makes the discrete energy identities exact.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linsolve::conjugate_gradient;
use crate::space::TensorSpace;
use crate::sparse::{SparseMatrix, SparsityPattern};

/// Spline coefficients of the order parameter at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub coefficients: Vec<f64>,
    pub time: f64,
    pub step: usize,
}

impl FieldState {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self {
            coefficients,
            time: 0.0,
            step: 0,
        }
    }

    pub fn constant(space: &TensorSpace, value: f64) -> Self {
        Self::new(vec![value; space.n_dof()])
    }

    pub fn check(&self, space: &TensorSpace) -> Result<()> {
        check_len(space, &self.coefficients)?;
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("field has non-finite coefficients".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_len(space: &TensorSpace, v: &[f64]) -> Result<()> {
    if v.len() != space.n_dof() {
        return Err(Error::LengthMismatch {
            expected: space.n_dof(),
            got: v.len(),
        });
    }
    Ok(())
}

/// The three linear operators of the model on one space, sharing a pattern.
#[derive(Clone, Debug)]
pub struct Operators {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub bilaplacian: SparseMatrix,
    /// `∫ N_i dΩ`, i.e. `M 𝟙`.
    pub integrals: Vec<f64>,
}

impl Operators {
    pub fn assemble(space: &TensorSpace) -> Result<Self> {
        let pattern = Arc::new(SparsityPattern::for_space(space));
        let mass = assemble_with(space, pattern.clone(), Form::Mass);
        let stiffness = assemble_with(space, pattern.clone(), Form::Stiffness);
        let bilaplacian = assemble_bilaplacian_on(space, pattern)?;
        let integrals = basis_integrals(space);
        Ok(Self {
            mass,
            stiffness,
            bilaplacian,
            integrals,
        })
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        self.mass.pattern()
    }
}

#[derive(Clone, Copy)]
enum Form {
    Mass,
    Stiffness,
    Bilaplacian,
}

/// `M_ij = (N_i, N_j)`
pub fn assemble_mass(space: &TensorSpace) -> SparseMatrix {
    assemble_with(space, Arc::new(SparsityPattern::for_space(space)), Form::Mass)
}

/// `K_ij = (∇N_i, ∇N_j)`
pub fn assemble_stiffness(space: &TensorSpace) -> SparseMatrix {
    assemble_with(
        space,
        Arc::new(SparsityPattern::for_space(space)),
        Form::Stiffness,
    )
}

/// `A_ij = (ΔN_i, ΔN_j)`; needs `C¹` splines, i.e. degree at least 2.
pub fn assemble_bilaplacian(space: &TensorSpace) -> Result<SparseMatrix> {
    assemble_bilaplacian_on(space, Arc::new(SparsityPattern::for_space(space)))
}

fn assemble_bilaplacian_on(space: &TensorSpace, pattern: Arc<SparsityPattern>) -> Result<SparseMatrix> {
    if space.degree() < 2 {
        return Err(Error::InsufficientContinuity(space.degree()));
    }
    Ok(assemble_with(space, pattern, Form::Bilaplacian))
}

fn assemble_with(space: &TensorSpace, pattern: Arc<SparsityPattern>, form: Form) -> SparseMatrix {
    let r = space.reference();
    let n = r.n_local;
    let dim = r.dim;
    let mut local = vec![0.0; n * n];
    for q in 0..r.n_qp {
        let w = r.weight[q];
        for a in 0..n {
            for b in 0..n {
                let ia = q * n + a;
                let ib = q * n + b;
                let v = match form {
                    Form::Mass => r.value[ia] * r.value[ib],
                    Form::Stiffness => (0..dim)
                        .map(|k| r.grad[ia * dim + k] * r.grad[ib * dim + k])
                        .sum(),
                    Form::Bilaplacian => r.lap[ia] * r.lap[ib],
                };
                local[a * n + b] += w * v;
            }
        }
    }
    let mut out = SparseMatrix::zeros(pattern);
    let mut dofs = vec![0; n];
    for e in 0..space.n_elements() {
        space.element_dofs(e, &mut dofs);
        scatter(&mut out, space, &dofs, &local);
    }
    out
}

fn scatter(out: &mut SparseMatrix, space: &TensorSpace, dofs: &[usize], local: &[f64]) {
    let r = space.reference();
    let n = r.n_local;
    let row_len = r.row_len();
    let values = out.values_mut();
    for a in 0..n {
        let base = dofs[a] * row_len;
        let slots = &r.slot[a * n..(a + 1) * n];
        for (s, v) in slots.iter().zip(&local[a * n..(a + 1) * n]) {
            values[base + s] += v;
        }
    }
}

/// `∫ N_i dΩ` by quadrature.
pub fn basis_integrals(space: &TensorSpace) -> Vec<f64> {
    let r = space.reference();
    let n = r.n_local;
    let mut local = vec![0.0; n];
    for q in 0..r.n_qp {
        for a in 0..n {
            local[a] += r.weight[q] * r.value[q * n + a];
        }
    }
    let mut out = vec![0.0; space.n_dof()];
    let mut dofs = vec![0; n];
    for e in 0..space.n_elements() {
        space.element_dofs(e, &mut dofs);
        for (d, v) in dofs.iter().zip(&local) {
            out[*d] += v;
        }
    }
    out
}

/// Values of several fields at the quadrature points of one element:
/// `out[q * fields.len() + f]`.
pub(crate) fn gather_qp_values(
    space: &TensorSpace,
    dofs: &[usize],
    fields: &[&[f64]],
    local: &mut [f64],
    out: &mut [f64],
) {
    let r = space.reference();
    let n = r.n_local;
    let nf = fields.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (f, field) in fields.iter().enumerate() {
        for (l, d) in local.iter_mut().zip(dofs) {
            *l = field[*d];
        }
        for q in 0..r.n_qp {
            let row = &r.value[q * n..(q + 1) * n];
            out[q * nf + f] = row.iter().zip(local.iter()).map(|(a, b)| a * b).sum();
        }
    }
}

/// `b_i = ∫ N_i f(φ¹_h(x), …) dΩ` with the space's quadrature rule. `f`
/// receives the values of `fields` at each quadrature point.
pub fn assemble_nonlinear_load<F>(space: &TensorSpace, fields: &[&[f64]], f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    for field in fields {
        check_len(space, field)?;
    }
    let r = space.reference();
    let n = r.n_local;
    let nf = fields.len();
    let mut out = vec![0.0; space.n_dof()];
    let mut dofs = vec![0; n];
    let mut local = vec![0.0; n];
    let mut qv = vec![0.0; r.n_qp * nf];
    for e in 0..space.n_elements() {
        space.element_dofs(e, &mut dofs);
        gather_qp_values(space, &dofs, fields, &mut local, &mut qv);
        for q in 0..r.n_qp {
            let fq = r.weight[q] * f(&qv[q * nf..(q + 1) * nf]);
            let row = &r.value[q * n..(q + 1) * n];
            for (d, v) in dofs.iter().zip(row) {
                out[*d] += fq * v;
            }
        }
    }
    Ok(out)
}

/// Galerkin matrix of a pointwise coefficient, `∫ c(φ(x)) N_i N_j dΩ`,
/// written into `out` (which must live on the space's pattern).
pub fn assemble_weighted_mass_into<F>(
    space: &TensorSpace,
    fields: &[&[f64]],
    coeff: F,
    out: &mut SparseMatrix,
) -> Result<()>
where
    F: Fn(&[f64]) -> f64,
{
    for field in fields {
        check_len(space, field)?;
    }
    let r = space.reference();
    let n = r.n_local;
    let nf = fields.len();
    out.values_mut().iter_mut().for_each(|v| *v = 0.0);
    // upper-triangle pairs and the table N_a N_b at every quadrature point,
    // so the element matrix is one dense product with the weights
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
    let np = pairs.len();
    let mut table = vec![0.0; r.n_qp * np];
    for q in 0..r.n_qp {
        let row = &r.value[q * n..(q + 1) * n];
        for (t, &(a, b)) in table[q * np..(q + 1) * np].iter_mut().zip(&pairs) {
            *t = row[a] * row[b];
        }
    }
    let row_len = r.row_len();
    let mut dofs = vec![0; n];
    let mut local_coeffs = vec![0.0; n];
    let mut qv = vec![0.0; r.n_qp * nf];
    let mut local = vec![0.0; np];
    for e in 0..space.n_elements() {
        space.element_dofs(e, &mut dofs);
        gather_qp_values(space, &dofs, fields, &mut local_coeffs, &mut qv);
        local.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..r.n_qp {
            let cw = r.weight[q] * coeff(&qv[q * nf..(q + 1) * nf]);
            for (l, t) in local.iter_mut().zip(&table[q * np..(q + 1) * np]) {
                *l += cw * t;
            }
        }
        let values = out.values_mut();
        for (&(a, b), v) in pairs.iter().zip(&local) {
            values[dofs[a] * row_len + r.slot[a * n + b]] += v;
            if a != b {
                values[dofs[b] * row_len + r.slot[b * n + a]] += v;
            }
        }
    }
    Ok(())
}

/// L² projection of `g` onto the space: solves `M φ = (N_i, g)`.
pub fn project<G>(space: &TensorSpace, mass: &SparseMatrix, g: G) -> Result<FieldState>
where
    G: Fn(&[f64]) -> f64,
{
    let r = space.reference();
    let n = r.n_local;
    let dim = space.dim();
    let mut rhs = vec![0.0; space.n_dof()];
    let mut dofs = vec![0; n];
    for e in 0..space.n_elements() {
        space.element_dofs(e, &mut dofs);
        for q in 0..r.n_qp {
            let x = space.qp_position(e, q);
            let gw = r.weight[q] * g(&x[..dim]);
            for (d, v) in dofs.iter().zip(&r.value[q * n..(q + 1) * n]) {
                rhs[*d] += gw * v;
            }
        }
    }
    // initial guess: values of g are already close to the coefficients
    let mut x = rhs.clone();
    let integrals = basis_integrals(space);
    for (xi, w) in x.iter_mut().zip(&integrals) {
        *xi /= w;
    }
    conjugate_gradient(|v, out| mass.mul_vec(v, out), &rhs, &mut x, 1e-15, 500)?;
    Ok(FieldState::new(x))
}

/// `‖φ_h − g‖_{L²}` evaluated with an `nq`-point rule per direction.
pub fn l2_distance<G>(space: &TensorSpace, coeffs: &[f64], g: G, nq: usize) -> Result<f64>
where
    G: Fn(&[f64]) -> f64,
{
    let fine = TensorSpace::from_directions(space.directions().to_vec(), Some(nq))?;
    let r = fine.reference();
    let n = r.n_local;
    let dim = space.dim();
    let mut dofs = vec![0; n];
    let mut sum = 0.0;
    for e in 0..fine.n_elements() {
        fine.element_dofs(e, &mut dofs);
        for q in 0..r.n_qp {
            let v: f64 = dofs
                .iter()
                .zip(&r.value[q * n..(q + 1) * n])
                .map(|(d, b)| coeffs[*d] * b)
                .sum();
            let x = fine.qp_position(e, q);
            let diff = v - g(&x[..dim]);
            sum += r.weight[q] * diff * diff;
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn spaces() -> Vec<TensorSpace> {
        vec![
            TensorSpace::new(2, &[8], &[8.0], None).unwrap(),
            TensorSpace::new(2, &[4], &[1.5], None).unwrap(),
            TensorSpace::new(2, &[8, 6], &[5.0, 3.0], None).unwrap(),
            TensorSpace::new(3, &[7, 9], &[2.0, 4.0], None).unwrap(),
            TensorSpace::new(2, &[5, 4, 6], &[1.0, 2.0, 3.0], None).unwrap(),
        ]
    }

    #[test]
    fn linear_element_entries() {
        let s = TensorSpace::new(1, &[4], &[4.0], None).unwrap();
        let m = assemble_mass(&s);
        let k = assemble_stiffness(&s);
        assert_abs_diff_eq!(m.get(1, 1), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(1, 2), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(0, 3), 1.0 / 6.0, epsilon = 1e-15);
        assert_eq!(m.get(0, 2), 0.0);
        assert_abs_diff_eq!(k.get(2, 2), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.get(2, 1), -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.get(3, 0), -1.0, epsilon = 1e-14);
    }

    #[test]
    fn mass_sums_to_volume_and_is_symmetric() {
        for s in spaces() {
            let m = assemble_mass(&s);
            let total: f64 = m.values().iter().sum();
            assert!((total - s.volume()).abs() <= 1e-12 * s.volume());
            assert!(m.asymmetry() <= 1e-13);
        }
    }

    #[test]
    fn constants_in_kernels() {
        for s in spaces() {
            let ops = Operators::assemble(&s).unwrap();
            assert!(max_abs(&ops.stiffness.row_sums()) <= 1e-12);
            assert!(max_abs(&ops.bilaplacian.row_sums()) <= 1e-10);
            assert!(ops.stiffness.asymmetry() <= 1e-13);
            assert!(ops.bilaplacian.asymmetry() <= 1e-13);
        }
    }

    #[test]
    fn bilaplacian_needs_c1() {
        let s = TensorSpace::new(1, &[8], &[1.0], None).unwrap();
        assert!(matches!(
            assemble_bilaplacian(&s),
            Err(Error::InsufficientContinuity(1))
        ));
    }

    #[test]
    fn operators_share_one_pattern() {
        let s = TensorSpace::new(2, &[6, 6], &[1.0, 1.0], None).unwrap();
        let ops = Operators::assemble(&s).unwrap();
        assert!(Arc::ptr_eq(ops.mass.pattern(), ops.stiffness.pattern()));
        assert!(Arc::ptr_eq(ops.mass.pattern(), ops.bilaplacian.pattern()));
    }

    #[test]
    fn self_similar_under_uniform_refinement_of_length() {
        let a = Operators::assemble(&TensorSpace::new(2, &[8, 8], &[4.0, 4.0], None).unwrap()).unwrap();
        let b = Operators::assemble(&TensorSpace::new(2, &[16, 8], &[8.0, 4.0], None).unwrap()).unwrap();
        // same h, so entry (0, j) depends only on the offset
        for (ma, mb) in [
            (&a.mass, &b.mass),
            (&a.stiffness, &b.stiffness),
            (&a.bilaplacian, &b.bilaplacian),
        ] {
            for dy in [0usize, 1, 2, 7, 6] {
                for dx in [0usize, 1, 2] {
                    let ja = dx + 8 * dy;
                    let jb = dx + 16 * dy;
                    assert_eq!(ma.get(0, ja), mb.get(0, jb));
                }
            }
        }
    }

    #[test]
    fn nonlinear_load_examples() {
        let s = TensorSpace::new(2, &[6, 5], &[3.0, 2.0], None).unwrap();
        let ops = Operators::assemble(&s).unwrap();
        let ones = assemble_nonlinear_load(&s, &[], |_| 1.0).unwrap();
        for v in &ones {
            assert_abs_diff_eq!(*v, s.volume() / s.n_dof() as f64, epsilon = 1e-14);
        }
        let phi: Vec<f64> = (0..s.n_dof()).map(|i| (0.3 * i as f64).cos()).collect();
        let lin = assemble_nonlinear_load(&s, &[&phi], |v| v[0]).unwrap();
        let mphi = ops.mass.apply(&phi);
        for (a, b) in lin.iter().zip(&mphi) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        let c = vec![0.7; s.n_dof()];
        let cubic = assemble_nonlinear_load(&s, &[&c], |v| v[0].powi(3)).unwrap();
        for (a, w) in cubic.iter().zip(&ops.integrals) {
            assert_abs_diff_eq!(*a, 0.343 * w, epsilon = 1e-14);
        }
        assert!(matches!(
            assemble_nonlinear_load(&s, &[&phi[..3]], |v| v[0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn weighted_mass_with_unit_coefficient_is_mass() {
        let s = TensorSpace::new(2, &[6, 5], &[3.0, 2.0], None).unwrap();
        let ops = Operators::assemble(&s).unwrap();
        let mut w = SparseMatrix::zeros(ops.pattern().clone());
        let phi = vec![0.0; s.n_dof()];
        assemble_weighted_mass_into(&s, &[&phi], |_| 1.0, &mut w).unwrap();
        for (a, b) in w.values().iter().zip(ops.mass.values()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn projection_of_constants_and_zero_mean_mode() {
        let s = TensorSpace::new(2, &[10, 8], &[5.0, 4.0], None).unwrap();
        let ops = Operators::assemble(&s).unwrap();
        let c = project(&s, &ops.mass, |_| 0.37).unwrap();
        for v in &c.coefficients {
            assert_abs_diff_eq!(*v, 0.37, epsilon = 1e-14);
        }
        let g = project(&s, &ops.mass, |x| (2.0 * PI * x[0] / 5.0).cos()).unwrap();
        let mean: f64 = g
            .coefficients
            .iter()
            .zip(&ops.integrals)
            .map(|(a, b)| a * b)
            .sum();
        assert!(mean.abs() <= 1e-12);
    }

    #[test]
    fn projection_error_rate() {
        // ‖φ_h − g‖ ~ h^{p+1}
        for p in [2usize, 3] {
            let mut errors = Vec::new();
            for m in [16usize, 32, 64] {
                let s = TensorSpace::new(p, &[m], &[1.0], None).unwrap();
                let mass = assemble_mass(&s);
                let g = |x: &[f64]| (2.0 * PI * x[0]).cos();
                let phi = project(&s, &mass, g).unwrap();
                errors.push(l2_distance(&s, &phi.coefficients, g, 10).unwrap());
            }
            for w in errors.windows(2) {
                let rate = (w[0] / w[1]).log2();
                assert!(
                    (rate - (p as f64 + 1.0)).abs() < 0.15,
                    "p={p}: rate {rate}, errors {errors:?}"
                );
            }
        }
    }
}
