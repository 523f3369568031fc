//! Tensor-product periodic spline spaces on boxes.
//!
//! Global indices use a mixed-radix encoding with the first direction
//! fastest: `i = i_0 + m_0 (i_1 + m_1 i_2)`. Element indices follow the
//! same layout. Because knots are uniform, every element is a translate of
//! one reference element, so basis values at quadrature points are computed
//! once and reused everywhere.

use crate::bspline::{gauss_rule, reference_basis, SplineSpace};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct TensorSpace {
    dirs: Vec<SplineSpace>,
    quad_points: usize,
    reference: ReferenceElement,
}

/// Basis data on the reference element, in physical units.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub dim: usize,
    pub n_local: usize,
    pub n_qp: usize,
    /// Per-direction local basis index of each local function.
    pub local_index: Vec<[usize; 3]>,
    /// Per-direction local coordinate in `[0, 1]` of each quadrature point.
    pub qp_local: Vec<[f64; 3]>,
    /// Quadrature weight including the element Jacobian.
    pub weight: Vec<f64>,
    /// `value[q * n_local + a]`
    pub value: Vec<f64>,
    /// `grad[(q * n_local + a) * dim + k]`
    pub grad: Vec<f64>,
    /// `lap[q * n_local + a]`; zero for degree 1.
    pub lap: Vec<f64>,
    /// `slot[a * n_local + b]`: position of the coupling `(a, b)` within a
    /// row of the shared sparsity pattern.
    pub slot: Vec<usize>,
    /// Per direction: wrapped column offsets in slot order.
    pub slot_offsets: Vec<Vec<usize>>,
}

impl TensorSpace {
    /// Periodic space with the same degree in every direction and
    /// `quad_points` Gauss points per direction (`None` = degree + 1).
    pub fn new(
        degree: usize,
        elements: &[usize],
        lengths: &[f64],
        quad_points: Option<usize>,
    ) -> Result<Self> {
        if elements.len() != lengths.len() {
            return Err(Error::InvalidSpace(format!(
                "{} element counts for {} lengths",
                elements.len(),
                lengths.len()
            )));
        }
        let dirs = elements
            .iter()
            .zip(lengths)
            .map(|(&m, &l)| SplineSpace::periodic(degree, m, l))
            .collect::<Result<Vec<_>>>()?;
        Self::from_directions(dirs, quad_points)
    }

    pub fn from_directions(dirs: Vec<SplineSpace>, quad_points: Option<usize>) -> Result<Self> {
        if !(1..=3).contains(&dirs.len()) {
            return Err(Error::InvalidSpace(format!(
                "dimension must be 1, 2 or 3 (got {})",
                dirs.len()
            )));
        }
        let p = dirs[0].degree();
        if dirs.iter().any(|d| d.degree() != p) {
            return Err(Error::InvalidSpace("mixed degrees are not supported".into()));
        }
        let quad_points = quad_points.unwrap_or(p + 1);
        let reference = ReferenceElement::build(&dirs, quad_points)?;
        Ok(Self {
            dirs,
            quad_points,
            reference,
        })
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    pub fn degree(&self) -> usize {
        self.dirs[0].degree()
    }

    pub fn quad_points(&self) -> usize {
        self.quad_points
    }

    pub fn directions(&self) -> &[SplineSpace] {
        &self.dirs
    }

    pub fn reference(&self) -> &ReferenceElement {
        &self.reference
    }

    /// Elements (= basis functions) per direction.
    pub fn shape(&self) -> Vec<usize> {
        self.dirs.iter().map(|d| d.elements()).collect()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.dirs.iter().map(|d| d.length()).collect()
    }

    pub fn n_dof(&self) -> usize {
        self.dirs.iter().map(|d| d.n_dof()).product()
    }

    pub fn n_elements(&self) -> usize {
        self.dirs.iter().map(|d| d.elements()).product()
    }

    pub fn volume(&self) -> f64 {
        self.dirs.iter().map(|d| d.length()).product()
    }

    /// Per-direction multi-index of a linear element or dof index.
    pub fn unflatten(&self, mut i: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for (k, d) in self.dirs.iter().enumerate() {
            out[k] = i % d.elements();
            i /= d.elements();
        }
        out
    }

    pub fn flatten(&self, multi: [usize; 3]) -> usize {
        let mut idx = 0;
        for k in (0..self.dim()).rev() {
            idx = idx * self.dirs[k].elements() + multi[k];
        }
        idx
    }

    /// Global dof indices of the `(p+1)^d` functions active on element `e`.
    pub fn element_dofs(&self, e: usize, out: &mut [usize]) {
        let em = self.unflatten(e);
        for (a, li) in self.reference.local_index.iter().enumerate() {
            let mut g = [0; 3];
            for (k, d) in self.dirs.iter().enumerate() {
                g[k] = d.global_index(em[k], li[k]);
            }
            out[a] = self.flatten(g);
        }
    }

    /// Physical coordinates of quadrature point `q` in element `e`.
    pub fn qp_position(&self, e: usize, q: usize) -> [f64; 3] {
        let em = self.unflatten(e);
        let t = self.reference.qp_local[q];
        let mut x = [0.0; 3];
        for (k, d) in self.dirs.iter().enumerate() {
            x[k] = (em[k] as f64 + t[k]) * d.h();
        }
        x
    }

    /// Point evaluation of the spline with coefficients `coeffs` at `x`.
    pub fn eval_field(&self, coeffs: &[f64], x: &[f64]) -> f64 {
        let evals: Vec<_> = self
            .dirs
            .iter()
            .zip(x)
            .map(|(d, &xk)| d.eval(xk, 0).expect("order 0 always valid"))
            .collect();
        let pp = self.degree() + 1;
        let mut sum = 0.0;
        for li in &self.reference.local_index {
            let mut g = [0; 3];
            let mut w = 1.0;
            for (k, ev) in evals.iter().enumerate() {
                g[k] = ev.indices[li[k]];
                w *= ev.values[0][li[k]];
            }
            debug_assert!(li.iter().take(self.dim()).all(|&a| a < pp));
            sum += w * coeffs[self.flatten(g)];
        }
        sum
    }

    /// Samples a field at the element vertices, `m_k` points per direction
    /// (no duplicated periodic endpoint), first direction fastest.
    pub fn sample_vertices(&self, coeffs: &[f64]) -> Vec<f64> {
        // Vertex values only involve p of the p+1 active functions, and are
        // identical for every vertex; use the 1D weights at t = 0.
        let p = self.degree();
        let w1 = reference_basis(p, 0.0, 0).swap_remove(0);
        let n = self.n_dof();
        let mut out = vec![0.0; n];
        for (v, slot) in out.iter_mut().enumerate() {
            // vertex v is the left end of element v
            let em = self.unflatten(v);
            let mut sum = 0.0;
            for li in &self.reference.local_index {
                let mut g = [0; 3];
                let mut w = 1.0;
                for (k, d) in self.dirs.iter().enumerate() {
                    g[k] = d.global_index(em[k], li[k]);
                    w *= w1[li[k]];
                }
                if w != 0.0 {
                    sum += w * coeffs[self.flatten(g)];
                }
            }
            *slot = sum;
        }
        out
    }
}

impl ReferenceElement {
    fn build(dirs: &[SplineSpace], nq: usize) -> Result<Self> {
        let rule = gauss_rule(nq)?;
        let dim = dirs.len();
        let p = dirs[0].degree();
        let pp = p + 1;
        let max_deriv = p.min(2);

        // per direction: [q][order][a] in physical units
        let tables: Vec<Vec<Vec<Vec<f64>>>> = dirs
            .iter()
            .map(|d| {
                let inv_h = 1.0 / d.h();
                rule.points
                    .iter()
                    .map(|&xi| {
                        let mut v = reference_basis(p, 0.5 * (xi + 1.0), max_deriv);
                        let mut scale = 1.0;
                        for row in v.iter_mut().skip(1) {
                            scale *= inv_h;
                            row.iter_mut().for_each(|x| *x *= scale);
                        }
                        v.resize(3, vec![0.0; pp]);
                        v
                    })
                    .collect()
            })
            .collect();

        let n_local = pp.pow(dim as u32);
        let n_qp = nq.pow(dim as u32);
        let multi = |mut i: usize, base: usize| {
            let mut out = [0; 3];
            for o in out.iter_mut().take(dim) {
                *o = i % base;
                i /= base;
            }
            out
        };
        let local_index: Vec<[usize; 3]> = (0..n_local).map(|a| multi(a, pp)).collect();
        let qp_index: Vec<[usize; 3]> = (0..n_qp).map(|q| multi(q, nq)).collect();

        let qp_local = qp_index
            .iter()
            .map(|qi| {
                let mut t = [0.0; 3];
                for k in 0..dim {
                    t[k] = 0.5 * (rule.points[qi[k]] + 1.0);
                }
                t
            })
            .collect();
        let weight = qp_index
            .iter()
            .map(|qi| {
                (0..dim)
                    .map(|k| 0.5 * dirs[k].h() * rule.weights[qi[k]])
                    .product()
            })
            .collect();

        let mut value = vec![0.0; n_qp * n_local];
        let mut grad = vec![0.0; n_qp * n_local * dim];
        let mut lap = vec![0.0; n_qp * n_local];
        for (q, qi) in qp_index.iter().enumerate() {
            for (a, ai) in local_index.iter().enumerate() {
                let f = |k: usize, order: usize| tables[k][qi[k]][order][ai[k]];
                let mut v = 1.0;
                for k in 0..dim {
                    v *= f(k, 0);
                }
                value[q * n_local + a] = v;
                let mut l = 0.0;
                for k in 0..dim {
                    let mut g = 1.0;
                    let mut s = 1.0;
                    for j in 0..dim {
                        g *= if j == k { f(j, 1) } else { f(j, 0) };
                        s *= if j == k { f(j, 2) } else { f(j, 0) };
                    }
                    grad[(q * n_local + a) * dim + k] = g;
                    l += s;
                }
                lap[q * n_local + a] = l;
            }
        }

        // Wrapped offsets: for small m distinct offsets can alias to the same column.
        let mut slot_offsets = Vec::with_capacity(dim);
        let mut slot_of_offset = Vec::with_capacity(dim);
        for d in dirs {
            let m = d.elements() as isize;
            let mut uniq: Vec<usize> = Vec::new();
            let mut map = Vec::with_capacity(2 * p + 1);
            for o in -(p as isize)..=(p as isize) {
                let w = o.rem_euclid(m) as usize;
                let pos = match uniq.iter().position(|&u| u == w) {
                    Some(pos) => pos,
                    None => {
                        uniq.push(w);
                        uniq.len() - 1
                    }
                };
                map.push(pos);
            }
            slot_offsets.push(uniq);
            slot_of_offset.push(map);
        }
        let mut slot = vec![0; n_local * n_local];
        for (a, ai) in local_index.iter().enumerate() {
            for (b, bi) in local_index.iter().enumerate() {
                let mut s = 0;
                for k in (0..dim).rev() {
                    let o = bi[k] as isize - ai[k] as isize + p as isize;
                    s = s * slot_offsets[k].len() + slot_of_offset[k][o as usize];
                }
                slot[a * n_local + b] = s;
            }
        }

        Ok(Self {
            dim,
            n_local,
            n_qp,
            local_index,
            qp_local,
            weight,
            value,
            grad,
            lap,
            slot,
            slot_offsets,
        })
    }

    /// Row length of the shared sparsity pattern.
    pub fn row_len(&self) -> usize {
        self.slot_offsets.iter().map(Vec::len).product()
    }
}
