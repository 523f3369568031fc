//! Linear solvers for the Newton systems of the two-field scheme.
//!
//! The Newton matrix has the block form
//!
//! ```text
//! [ M/Δt   K ] [δφ]   [r_φ]
//! [ -B     M ] [δμ] = [r_μ]
//! ```
//!
//! with `B = J + αM + βA`, where `J` is the Galerkin matrix of the pointwise
//! derivative of the nonlinearity. On a periodic uniform space `M`, `K` and
//! `A` are block-circulant, so the matrix with `J` replaced by its mean
//! coefficient times `M` is diagonalized by the FFT into independent 2×2
//! blocks. That inverse preconditions GMRES. A sparse LU is available as
//! the direct alternative.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use rustfft::num_complex::Complex64;

use crate::assembly::Operators;
use crate::error::{Error, Result};
use crate::fft::{mirror_index, FftNd};
use crate::space::TensorSpace;
use crate::sparse::SparseMatrix;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Plain conjugate gradients for SPD systems. Returns the iteration count.
pub fn conjugate_gradient<A>(
    apply: A,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<usize>
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        if rr.sqrt() <= rel_tol * bnorm {
            return Ok(it);
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
    }
    // a few ulps above the target is as good as it gets
    if rr.sqrt() <= 1e3 * rel_tol * bnorm {
        return Ok(max_iter);
    }
    Err(Error::LinearSolve(format!(
        "CG stalled at relative residual {:.3e}",
        rr.sqrt() / bnorm
    )))
}

/// Convergence record of one GMRES solve.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Right-preconditioned restarted GMRES with modified Gram–Schmidt.
pub fn gmres<A, P>(
    mut apply: A,
    mut precond: P,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<KrylovStats>
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats::default());
    }
    let target = rel_tol * bnorm;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
    let mut h = vec![vec![0.0; restart]; restart + 1];
    let mut cs = vec![0.0; restart];
    let mut sn = vec![0.0; restart];
    let mut g = vec![0.0; restart + 1];
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut total = 0;
    loop {
        apply(x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm(&r);
        if beta <= target {
            return Ok(KrylovStats {
                iterations: total,
                relative_residual: beta / bnorm,
            });
        }
        if total >= max_iter {
            return Err(Error::LinearSolve(format!(
                "GMRES reached {max_iter} iterations at relative residual {:.3e}",
                beta / bnorm
            )));
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k = 0;
        while k < restart && total < max_iter {
            precond(&basis[k], &mut z);
            apply(&z, &mut w);
            for i in 0..=k {
                let hik = dot(&w, &basis[i]);
                h[i][k] = hik;
                w.iter_mut().zip(&basis[i]).for_each(|(wj, vj)| *wj -= hik * vj);
            }
            let hk1 = norm(&w);
            h[k + 1][k] = hk1;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                return Err(Error::LinearSolve("GMRES breakdown".into()));
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k += 1;
            if g[k].abs() <= target || hk1 == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hk1).collect());
        }
        // y = H⁻¹ g, then x += P⁻¹ V y
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        w.iter_mut().for_each(|v| *v = 0.0);
        for (yi, vi) in y.iter().zip(&basis) {
            w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj += yi * vj);
        }
        precond(&w, &mut z);
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
    }
}

/// Constant-coefficient part of the lower-left block, `B̄ = (c̄ + α)M + βA`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBlockModel {
    pub mean_coupling: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// The assembled Newton matrix `[[M/Δt, K], [lower, M]]` with
/// `lower = -(J + αM + βA)`.
pub struct BlockJacobian<'a> {
    pub ops: &'a Operators,
    pub inv_dt: f64,
    pub lower: SparseMatrix,
    pub model: LowerBlockModel,
}

impl BlockJacobian<'_> {
    pub fn n(&self) -> usize {
        self.ops.mass.n_rows()
    }

    /// `y = J x` on stacked `(φ, μ)` vectors.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n();
        let (xp, xm) = x.split_at(n);
        let (yp, ym) = y.split_at_mut(n);
        self.ops.mass.mul_vec_scaled(self.inv_dt, xp, 0.0, yp);
        self.ops.stiffness.mul_vec_scaled(1.0, xm, 1.0, yp);
        self.lower.mul_vec(xp, ym);
        self.ops.mass.mul_vec_scaled(1.0, xm, 1.0, ym);
    }

    fn triplets(&self) -> Vec<Triplet<usize, usize, f64>> {
        let n = self.n();
        let mut t = Vec::with_capacity(4 * self.ops.mass.values().len());
        for (i, j, v) in self.ops.mass.triplets() {
            t.push(Triplet::new(i, j, self.inv_dt * v));
            t.push(Triplet::new(n + i, n + j, v));
        }
        for (i, j, v) in self.ops.stiffness.triplets() {
            t.push(Triplet::new(i, n + j, v));
        }
        for (i, j, v) in self.lower.triplets() {
            t.push(Triplet::new(n + i, j, v));
        }
        t
    }
}

/// Exact inverse of the constant-coefficient Newton matrix, mode by mode.
pub struct FourierPreconditioner {
    fft: FftNd,
    mass: Vec<f64>,
    stiffness: Vec<f64>,
    bilaplacian: Vec<f64>,
    mirror: Vec<usize>,
    buf: Vec<Complex64>,
    out: Vec<Complex64>,
}

impl FourierPreconditioner {
    pub fn new(space: &TensorSpace, ops: &Operators) -> Self {
        let shape = space.shape();
        let mut fft = FftNd::new(&shape);
        let n = space.n_dof();
        let mut symbol = |m: &SparseMatrix, zero_mode_null: bool| {
            // the operators are circulant; their eigenvalues are the DFT of one row
            let mut row = vec![Complex64::default(); n];
            for (i, j, v) in m.triplets().take_while(|t| t.0 == 0) {
                debug_assert_eq!(i, 0);
                row[j].re += v;
            }
            fft.forward(&mut row);
            let mut s: Vec<f64> = row.iter().map(|c| c.re).collect();
            if zero_mode_null {
                s[0] = 0.0;
            }
            s
        };
        let mass = symbol(&ops.mass, false);
        let stiffness = symbol(&ops.stiffness, true);
        let bilaplacian = symbol(&ops.bilaplacian, true);
        let mirror = (0..n).map(|i| mirror_index(&shape, i)).collect();
        Self {
            fft,
            mass,
            stiffness,
            bilaplacian,
            mirror,
            buf: vec![Complex64::default(); n],
            out: vec![Complex64::default(); n],
        }
    }

    pub fn mass_symbol(&self) -> &[f64] {
        &self.mass
    }

    pub fn stiffness_symbol(&self) -> &[f64] {
        &self.stiffness
    }

    pub fn bilaplacian_symbol(&self) -> &[f64] {
        &self.bilaplacian
    }

    /// `z = P⁻¹ r` for stacked `(φ, μ)` vectors.
    pub fn apply(&mut self, inv_dt: f64, model: &LowerBlockModel, r: &[f64], z: &mut [f64]) {
        let n = self.mass.len();
        // pack the two real fields into one complex transform
        for i in 0..n {
            self.buf[i] = Complex64::new(r[i], r[n + i]);
        }
        self.fft.forward(&mut self.buf);
        let half_i = Complex64::new(0.0, -0.5);
        for i in 0..n {
            let zk = self.buf[i];
            let zm = self.buf[self.mirror[i]].conj();
            let rp = (zk + zm) * 0.5;
            let rm = (zk - zm) * half_i;
            let m = self.mass[i];
            let k = self.stiffness[i];
            let b = (model.mean_coupling + model.alpha) * m + model.beta * self.bilaplacian[i];
            let det = m * m * inv_dt + k * b;
            let up = (rp * m - rm * k) / det;
            let um = (rp * b + rm * (m * inv_dt)) / det;
            self.out[i] = up + Complex64::new(0.0, 1.0) * um;
        }
        self.fft.inverse(&mut self.out);
        for i in 0..n {
            z[i] = self.out[i].re;
            z[n + i] = self.out[i].im;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinearSolverKind {
    /// FFT-preconditioned GMRES.
    Krylov,
    /// Sparse LU of the assembled block matrix.
    Direct,
}

impl LinearSolverKind {
    pub fn name(self) -> &'static str {
        match self {
            LinearSolverKind::Krylov => "krylov",
            LinearSolverKind::Direct => "direct",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "krylov" => Some(LinearSolverKind::Krylov),
            "direct" => Some(LinearSolverKind::Direct),
            _ => None,
        }
    }
}

/// Solver for the Newton block systems on one space.
pub struct BlockSolver {
    kind: LinearSolverKind,
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
    fourier: Option<FourierPreconditioner>,
    symbolic: Option<SymbolicLu<usize>>,
    pub last: KrylovStats,
}

impl BlockSolver {
    pub fn new(space: &TensorSpace, ops: &Operators, kind: LinearSolverKind, rel_tol: f64) -> Self {
        let fourier = match kind {
            LinearSolverKind::Krylov => Some(FourierPreconditioner::new(space, ops)),
            LinearSolverKind::Direct => None,
        };
        Self {
            kind,
            rel_tol,
            restart: 60,
            max_iter: 1200,
            fourier,
            symbolic: None,
            last: KrylovStats::default(),
        }
    }

    pub fn kind(&self) -> LinearSolverKind {
        self.kind
    }

    /// Solves `J x = rhs`; `x` holds the initial guess on entry.
    pub fn solve(&mut self, jac: &BlockJacobian, rhs: &[f64], x: &mut [f64]) -> Result<()> {
        match self.kind {
            LinearSolverKind::Krylov => {
                let pre = self.fourier.as_mut().expect("krylov solver has a preconditioner");
                let model = jac.model;
                let inv_dt = jac.inv_dt;
                self.last = gmres(
                    |v, out| jac.apply(v, out),
                    |v, out| pre.apply(inv_dt, &model, v, out),
                    rhs,
                    x,
                    self.rel_tol,
                    self.restart,
                    self.max_iter,
                )?;
                Ok(())
            }
            LinearSolverKind::Direct => {
                let n2 = 2 * jac.n();
                let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n2, n2, &jac.triplets())
                    .map_err(|e| Error::LinearSolve(format!("building sparse matrix: {e:?}")))?;
                if self.symbolic.is_none() {
                    let sym = SymbolicLu::try_new(mat.symbolic())
                        .map_err(|e| Error::LinearSolve(format!("symbolic LU: {e:?}")))?;
                    self.symbolic = Some(sym);
                }
                let symbolic = self.symbolic.clone().expect("set above");
                let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
                    .map_err(|e| Error::LinearSolve(format!("numeric LU: {e:?}")))?;
                let b = faer::Col::<f64>::from_fn(n2, |i| rhs[i]);
                let sol = lu.solve(&b);
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = sol[i];
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::LinearSolve("singular Newton matrix".into()));
                }
                self.last = KrylovStats::default();
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_weighted_mass_into;

    #[test]
    fn cg_solves_mass_system() {
        let s = TensorSpace::new(2, &[12, 10], &[3.0, 2.0], None).unwrap();
        let ops = Operators::assemble(&s).unwrap();
        let xs: Vec<f64> = (0..s.n_dof()).map(|i| (i as f64).sin()).collect();
        let b = ops.mass.apply(&xs);
        let mut x = vec![0.0; s.n_dof()];
        conjugate_gradient(|v, o| ops.mass.mul_vec(v, o), &b, &mut x, 1e-14, 200).unwrap();
        for (a, e) in x.iter().zip(&xs) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn symbols_match_operator_action_on_plane_waves() {
        let s = TensorSpace::new(2, &[8, 6], &[4.0, 3.0], None).unwrap();
        let ops = Operators::assemble(&s).unwrap();
        let pre = FourierPreconditioner::new(&s, &ops);
        // a cosine mode is an eigenvector of each circulant operator
        let (kx, ky) = (3usize, 1usize);
        let idx = kx + 8 * ky;
        let v: Vec<f64> = (0..s.n_dof())
            .map(|i| {
                let m = s.unflatten(i);
                (2.0 * std::f64::consts::PI * (kx as f64 * m[0] as f64 / 8.0 + ky as f64 * m[1] as f64 / 6.0))
                    .cos()
            })
            .collect();
        for (mat, sym) in [
            (&ops.mass, pre.mass_symbol()),
            (&ops.stiffness, pre.stiffness_symbol()),
            (&ops.bilaplacian, pre.bilaplacian_symbol()),
        ] {
            let av = mat.apply(&v);
            for (a, b) in av.iter().zip(&v) {
                assert!((a - sym[idx] * b).abs() < 1e-11);
            }
        }
    }

    fn jacobian_fixture(s: &TensorSpace, ops: &Operators, phi: &[f64]) -> (SparseMatrix, LowerBlockModel) {
        let mut j = SparseMatrix::zeros(ops.pattern().clone());
        assemble_weighted_mass_into(s, &[phi], |v| 3.0 * v[0] * v[0], &mut j).unwrap();
        let lower = SparseMatrix::combination(&[(-1.0, &j), (-0.375, &ops.mass), (-0.5, &ops.bilaplacian)]);
        (
            lower,
            LowerBlockModel {
                mean_coupling: 0.1,
                alpha: 0.375,
                beta: 0.5,
            },
        )
    }

    #[test]
    fn krylov_and_direct_agree() {
        let s = TensorSpace::new(2, &[10, 10], &[8.0, 8.0], None).unwrap();
        let ops = Operators::assemble(&s).unwrap();
        let phi: Vec<f64> = (0..s.n_dof()).map(|i| 0.3 * (0.37 * i as f64).sin()).collect();
        let (lower, model) = jacobian_fixture(&s, &ops, &phi);
        for dt in [0.01, 1.0, 100.0] {
            let jac = BlockJacobian {
                ops: &ops,
                inv_dt: 1.0 / dt,
                lower: lower.clone(),
                model,
            };
            let rhs: Vec<f64> = (0..2 * s.n_dof()).map(|i| (0.11 * i as f64).cos()).collect();
            let mut xk = vec![0.0; rhs.len()];
            let mut xd = vec![0.0; rhs.len()];
            BlockSolver::new(&s, &ops, LinearSolverKind::Krylov, 1e-13)
                .solve(&jac, &rhs, &mut xk)
                .unwrap();
            BlockSolver::new(&s, &ops, LinearSolverKind::Direct, 1e-13)
                .solve(&jac, &rhs, &mut xd)
                .unwrap();
            let mut check = vec![0.0; rhs.len()];
            jac.apply(&xd, &mut check);
            let res: f64 = check
                .iter()
                .zip(&rhs)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-10, "direct residual {res}");
            let scale = xd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in xk.iter().zip(&xd) {
                assert!((a - b).abs() <= 1e-9 * scale, "dt={dt}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn preconditioner_is_exact_for_constant_coefficients() {
        let s = TensorSpace::new(2, &[8, 8], &[6.0, 6.0], None).unwrap();
        let ops = Operators::assemble(&s).unwrap();
        let model = LowerBlockModel {
            mean_coupling: 0.2,
            alpha: 0.375,
            beta: 0.5,
        };
        let lower = SparseMatrix::combination(&[(-(0.2 + 0.375), &ops.mass), (-0.5, &ops.bilaplacian)]);
        let jac = BlockJacobian {
            ops: &ops,
            inv_dt: 2.0,
            lower,
            model,
        };
        let mut solver = BlockSolver::new(&s, &ops, LinearSolverKind::Krylov, 1e-13);
        let rhs: Vec<f64> = (0..2 * s.n_dof()).map(|i| (0.7 * i as f64).sin()).collect();
        let mut x = vec![0.0; rhs.len()];
        solver.solve(&jac, &rhs, &mut x).unwrap();
        assert!(solver.last.iterations <= 2, "{:?}", solver.last);
    }
}
