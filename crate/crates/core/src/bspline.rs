//! Periodic uniform B-spline spaces in one dimension and Gauss–Legendre rules.
//!
//! A periodic space of degree `p` over `m` uniform elements of `[0, L)` has
//! exactly `m` basis functions. Basis function `N_i` is the uniform B-spline
//! supported on `[i h, (i + p + 1) h)` (indices taken modulo `m`), so element
//! `e` sees the `p + 1` functions `N_{e-p}, …, N_e`.

use crate::error::{Error, Result};

/// One-dimensional periodic spline space on uniform knots.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineSpace {
    degree: usize,
    elements: usize,
    length: f64,
}

/// Basis functions with support at a point, and their derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisEval {
    /// Global indices of the `p + 1` active functions (wrapped modulo `m`).
    pub indices: Vec<usize>,
    /// `values[k][a]` is the `k`-th derivative of active function `a`.
    pub values: Vec<Vec<f64>>,
}

impl SplineSpace {
    /// Builds the periodic space of degree `degree` over `elements` uniform
    /// elements of `[0, length)`.
    pub fn periodic(degree: usize, elements: usize, length: f64) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidSpace("degree must be at least 1".into()));
        }
        if elements <= degree {
            return Err(Error::InvalidSpace(format!(
                "need more elements than the degree (m = {elements}, p = {degree})"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidSpace(format!(
                "length must be positive, got {length}"
            )));
        }
        Ok(Self {
            degree,
            elements,
            length,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Knot spacing.
    pub fn h(&self) -> f64 {
        self.length / self.elements as f64
    }

    /// Number of basis functions; equals the element count.
    pub fn n_dof(&self) -> usize {
        self.elements
    }

    /// Element containing `x` (after periodic wrap) and the local
    /// coordinate `t ∈ [0, 1)` inside it.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = (x / self.length).rem_euclid(1.0) * self.elements as f64;
        let mut e = s.floor() as usize;
        let mut t = s - e as f64;
        if e >= self.elements {
            // x just below a multiple of L can round up to m
            e = 0;
            t = 0.0;
        }
        (e, t)
    }

    /// Index of the `a`-th active basis function on element `e`.
    pub fn global_index(&self, e: usize, a: usize) -> usize {
        (e + self.elements + a - self.degree) % self.elements
    }

    /// Evaluates the `p + 1` basis functions active at `x` and their
    /// derivatives up to `max_deriv`. Points outside `[0, L)` are wrapped.
    pub fn eval(&self, x: f64, max_deriv: usize) -> Result<BasisEval> {
        if max_deriv > self.degree {
            return Err(Error::DerivativeOrder {
                requested: max_deriv,
                degree: self.degree,
            });
        }
        let (e, t) = self.locate(x);
        let mut values = reference_basis(self.degree, t, max_deriv);
        let inv_h = 1.0 / self.h();
        let mut scale = 1.0;
        for row in values.iter_mut().skip(1) {
            scale *= inv_h;
            row.iter_mut().for_each(|v| *v *= scale);
        }
        let indices = (0..=self.degree).map(|a| self.global_index(e, a)).collect();
        Ok(BasisEval { indices, values })
    }
}

/// Cox–de Boor evaluation of the `p + 1` uniform B-splines active on the
/// reference element `[0, 1)` at local coordinate `t`, with derivatives with
/// respect to `t` up to `n`. Returns `ders[k][a]`.
pub(crate) fn reference_basis(p: usize, t: f64, n: usize) -> Vec<Vec<f64>> {
    // local knots u_k = k - p, k = 0..=2p+1; the active span is [u_p, u_{p+1}) = [0, 1)
    let knot = |k: isize| (k - p as isize) as f64;
    let span = p as isize;

    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = t - knot(span + 1 - j as isize);
        right[j] = knot(span + j as isize) - t;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    let mut ders = vec![vec![0.0; p + 1]; n + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }

    let mut a = vec![vec![0.0; p + 1]; 2];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize {
                k - 1
            } else {
                p - r
            };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }

    let mut factor = p as f64;
    for k in 1..=n {
        for v in ders[k].iter_mut() {
            *v *= factor;
        }
        factor *= (p - k) as f64;
    }
    ders
}

/// Gauss–Legendre points and weights on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The `n`-point Gauss–Legendre rule, `1 <= n <= 10`, with points ascending.
pub fn gauss_rule(n: usize) -> Result<QuadratureRule> {
    if !(1..=10).contains(&n) {
        return Err(Error::QuadratureSize(n));
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (pn, d) = legendre(n, x);
            dp = d;
            let dx = pn / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = -x;
        points[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    Ok(QuadratureRule { points, weights })
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let pn = if n == 0 { p0 } else { p1 };
    let pm1 = if n == 0 { 0.0 } else { p0 };
    let d = n as f64 * (x * pn - pm1) / (x * x - 1.0);
    (pn, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn space_dimension_and_spacing() {
        let s = SplineSpace::periodic(1, 4, 4.0).unwrap();
        assert_eq!(s.n_dof(), 4);
        assert_eq!(s.h(), 1.0);
        let s = SplineSpace::periodic(2, 8, 8.0).unwrap();
        assert_eq!(s.n_dof(), 8);
        assert_eq!(s.h(), 1.0);
    }

    #[test]
    fn degenerate_spaces_rejected() {
        assert!(SplineSpace::periodic(2, 2, 1.0).is_err());
        assert!(SplineSpace::periodic(2, 8, 0.0).is_err());
        assert!(SplineSpace::periodic(2, 8, -1.0).is_err());
        assert!(SplineSpace::periodic(0, 8, 1.0).is_err());
    }

    #[test]
    fn quadratic_midpoint_values() {
        let s = SplineSpace::periodic(2, 8, 8.0).unwrap();
        let ev = s.eval(3.5, 2).unwrap();
        assert_eq!(ev.indices, vec![1, 2, 3]);
        for (v, e) in ev.values[0].iter().zip([0.125, 0.75, 0.125]) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-15);
        }
        for x in [0.1, 2.7, 7.99] {
            let ev = s.eval(x, 2).unwrap();
            for (v, e) in ev.values[2].iter().zip([1.0, -2.0, 1.0]) {
                assert_abs_diff_eq!(*v, e, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn second_derivative_scales_with_spacing() {
        let s = SplineSpace::periodic(2, 8, 4.0).unwrap();
        let ev = s.eval(1.3, 2).unwrap();
        for (v, e) in ev.values[2].iter().zip([4.0, -8.0, 4.0]) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn indices_wrap() {
        let s = SplineSpace::periodic(2, 5, 5.0).unwrap();
        assert_eq!(s.eval(0.5, 0).unwrap().indices, vec![3, 4, 0]);
        assert_eq!(s.eval(-0.5, 0).unwrap().indices, vec![2, 3, 4]);
        assert_eq!(s.eval(5.5, 0).unwrap().indices, vec![3, 4, 0]);
    }

    #[test]
    fn derivative_order_above_degree_rejected() {
        let s = SplineSpace::periodic(2, 8, 1.0).unwrap();
        assert!(matches!(
            s.eval(0.1, 3),
            Err(Error::DerivativeOrder {
                requested: 3,
                degree: 2
            })
        ));
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in 1..=3 {
            for m in (p + 1).max(4)..=64 {
                let s = SplineSpace::periodic(p, m, 1.0 + m as f64 / 7.0).unwrap();
                for _ in 0..1000 {
                    let x = rng.random::<f64>() * s.length();
                    let ev = s.eval(x, 1).unwrap();
                    let sum0: f64 = ev.values[0].iter().sum();
                    let sum1: f64 = ev.values[1].iter().sum();
                    assert!((sum0 - 1.0).abs() <= 1e-14, "p={p} m={m} x={x} sum={sum0}");
                    assert!(sum1.abs() <= 1e-12 * m as f64, "p={p} m={m} x={x}");
                }
            }
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in 1..=3 {
            let s = SplineSpace::periodic(p, 12, 3.0).unwrap();
            let delta = 1e-5 * s.h();
            for _ in 0..200 {
                // keep x away from knots, where derivatives of order p jump
                let e = rng.random_range(0..12) as f64;
                let t = 0.1 + 0.8 * rng.random::<f64>();
                let x = (e + t) * s.h();
                let ev = s.eval(x, p).unwrap();
                let lo = s.eval(x - delta, p).unwrap();
                let hi = s.eval(x + delta, p).unwrap();
                for k in 0..p {
                    for a in 0..=p {
                        let fd = (hi.values[k][a] - lo.values[k][a]) / (2.0 * delta);
                        let exact = ev.values[k + 1][a];
                        let scale = exact.abs().max(1.0 / s.h().powi(k as i32 + 1));
                        assert!(
                            (fd - exact).abs() <= 1e-6 * scale,
                            "p={p} k={k} a={a}: fd {fd} vs {exact}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn basis_integrals_are_uniform() {
        for p in 1..=3 {
            for m in [4, 7, 16] {
                let s = SplineSpace::periodic(p, m, 2.5).unwrap();
                let rule = gauss_rule(p + 1).unwrap();
                let mut integrals = vec![0.0; m];
                for e in 0..m {
                    for (xi, w) in rule.points.iter().zip(&rule.weights) {
                        let x = (e as f64 + 0.5 * (xi + 1.0)) * s.h();
                        let ev = s.eval(x, 0).unwrap();
                        for (i, v) in ev.indices.iter().zip(&ev.values[0]) {
                            integrals[*i] += v * w * 0.5 * s.h();
                        }
                    }
                }
                for v in integrals {
                    assert_abs_diff_eq!(v, 2.5 / m as f64, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn gauss_small_rules() {
        let r = gauss_rule(1).unwrap();
        assert_eq!(r.points, vec![0.0]);
        assert_eq!(r.weights, vec![2.0]);
        let r = gauss_rule(2).unwrap();
        assert_abs_diff_eq!(r.points[0], -1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.points[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[0], 1.0, epsilon = 1e-15);
        let r = gauss_rule(3).unwrap();
        assert_abs_diff_eq!(r.points[0], -(0.6f64).sqrt(), epsilon = 1e-15);
        assert_eq!(r.points[1], 0.0);
        assert_abs_diff_eq!(r.weights[0], 5.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[1], 8.0 / 9.0, epsilon = 1e-15);
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(11).is_err());
    }

    #[test]
    fn gauss_exactness() {
        for n in 1..=10 {
            let r = gauss_rule(n).unwrap();
            assert_abs_diff_eq!(r.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
            for deg in 0..=(2 * n - 1) {
                let q: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(x, w)| w * x.powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 0 {
                    2.0 / (deg as f64 + 1.0)
                } else {
                    0.0
                };
                assert_abs_diff_eq!(q, exact, epsilon = 1e-14);
            }
        }
    }
}
