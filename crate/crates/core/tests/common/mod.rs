//! Independent reference computations for the test suites. Nothing here
//! calls into the crate's basis, quadrature or assembly code.

#![allow(dead_code)]

/// Tabulated 3-point Gauss–Legendre rule on [0, 1].
pub fn gauss3() -> (Vec<f64>, Vec<f64>) {
    let a = (0.6f64).sqrt() / 2.0;
    (
        vec![0.5 - a, 0.5, 0.5 + a],
        vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
    )
}

/// Tabulated 10-point Gauss–Legendre rule on [0, 1] (exact to degree 19).
pub fn gauss10() -> (Vec<f64>, Vec<f64>) {
    let half = [
        (0.148_874_338_981_631_2, 0.295_524_224_714_752_9),
        (0.433_395_394_129_247_2, 0.269_266_719_309_996_4),
        (0.679_409_568_299_024_4, 0.219_086_362_515_982_0),
        (0.865_063_366_688_984_5, 0.149_451_349_150_580_6),
        (0.973_906_528_517_171_7, 0.066_671_344_308_688_1),
    ];
    let mut x = Vec::new();
    let mut w = Vec::new();
    for &(xi, wi) in half.iter().rev() {
        x.push(0.5 * (1.0 - xi));
        w.push(0.5 * wi);
    }
    for &(xi, wi) in &half {
        x.push(0.5 * (1.0 + xi));
        w.push(0.5 * wi);
    }
    (x, w)
}

/// Cardinal B-spline of degree `p` on [0, p+1] and its derivatives, by the
/// degree recursion `B_p(t) = (t B_{p−1}(t) + (p+1−t) B_{p−1}(t−1)) / p`.
pub fn cardinal(p: usize, t: f64, deriv: usize) -> f64 {
    if deriv > 0 {
        if p == 0 {
            return 0.0;
        }
        return cardinal(p - 1, t, deriv - 1) - cardinal(p - 1, t - 1.0, deriv - 1);
    }
    if p == 0 {
        return if (0.0..1.0).contains(&t) { 1.0 } else { 0.0 };
    }
    let pf = p as f64;
    (t * cardinal(p - 1, t, 0) + (pf + 1.0 - t) * cardinal(p - 1, t - 1.0, 0)) / pf
}

/// Periodic basis function `i` of a uniform space (support starts at `x_i`),
/// derivative `deriv` with respect to `x`.
pub fn periodic_basis(p: usize, m: usize, l: f64, i: usize, x: f64, deriv: usize) -> f64 {
    let h = l / m as f64;
    let t = (x / h - i as f64).rem_euclid(m as f64);
    cardinal(p, t, deriv) / h.powi(deriv as i32)
}

/// Dense `(M, K, A)` for a 1D or 2D periodic space by brute-force 10-point
/// quadrature over every element and every basis pair.
pub struct DenseOps {
    pub n: usize,
    pub mass: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub bilaplacian: Vec<f64>,
}

pub fn dense_operators(p: usize, m: &[usize], l: &[f64]) -> DenseOps {
    let (gx, gw) = gauss10();
    let dim = m.len();
    let n: usize = m.iter().product();
    let mut mass = vec![0.0; n * n];
    let mut stiffness = vec![0.0; n * n];
    let mut bilaplacian = vec![0.0; n * n];
    // per direction: values[d][elem][q][i][k] for derivative k ≤ 2
    let tables: Vec<Vec<Vec<Vec<[f64; 3]>>>> = (0..dim)
        .map(|d| {
            let h = l[d] / m[d] as f64;
            (0..m[d])
                .map(|e| {
                    gx.iter()
                        .map(|t| {
                            let x = (e as f64 + t) * h;
                            (0..m[d])
                                .map(|i| {
                                    [
                                        periodic_basis(p, m[d], l[d], i, x, 0),
                                        periodic_basis(p, m[d], l[d], i, x, 1),
                                        periodic_basis(p, m[d], l[d], i, x, 2),
                                    ]
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let elems: usize = m.iter().product();
    let nq = gx.len();
    let qcount = nq.pow(dim as u32);
    let mut val = vec![0.0; n];
    let mut grad = vec![[0.0; 2]; n];
    let mut lap = vec![0.0; n];
    for e in 0..elems {
        let ex = [e % m[0], if dim > 1 { e / m[0] } else { 0 }];
        for q in 0..qcount {
            let qx = [q % nq, if dim > 1 { q / nq } else { 0 }];
            let mut w = 1.0;
            for d in 0..dim {
                w *= gw[qx[d]] * l[d] / m[d] as f64;
            }
            for i in 0..n {
                let ix = [i % m[0], if dim > 1 { i / m[0] } else { 0 }];
                let b0 = tables[0][ex[0]][qx[0]][ix[0]];
                if dim == 1 {
                    val[i] = b0[0];
                    grad[i] = [b0[1], 0.0];
                    lap[i] = b0[2];
                } else {
                    let b1 = tables[1][ex[1]][qx[1]][ix[1]];
                    val[i] = b0[0] * b1[0];
                    grad[i] = [b0[1] * b1[0], b0[0] * b1[1]];
                    lap[i] = b0[2] * b1[0] + b0[0] * b1[2];
                }
            }
            for i in 0..n {
                if val[i] == 0.0 && lap[i] == 0.0 && grad[i] == [0.0; 2] {
                    continue;
                }
                for j in 0..n {
                    mass[i * n + j] += w * val[i] * val[j];
                    stiffness[i * n + j] += w * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                    bilaplacian[i * n + j] += w * lap[i] * lap[j];
                }
            }
        }
    }
    DenseOps {
        n,
        mass,
        stiffness,
        bilaplacian,
    }
}

/// 1D load `b_i = Σ_e Σ_q w_q N_i(x_q) f(φ_a(x_q), φ_b(x_q))` with the
/// tabulated 3-point rule.
pub fn dense_load_1d(p: usize, m: usize, l: f64, fields: &[&[f64]], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let (gx, gw) = gauss3();
    let h = l / m as f64;
    let mut out = vec![0.0; m];
    for e in 0..m {
        for (t, w) in gx.iter().zip(&gw) {
            let x = (e as f64 + t) * h;
            let basis: Vec<f64> = (0..m).map(|i| periodic_basis(p, m, l, i, x, 0)).collect();
            let vals: Vec<f64> = fields
                .iter()
                .map(|c| c.iter().zip(&basis).map(|(a, b)| a * b).sum())
                .collect();
            let fq = f(&vals) * w * h;
            for (o, b) in out.iter_mut().zip(&basis) {
                *o += fq * b;
            }
        }
    }
    out
}

pub fn dense_mul(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
        .collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest entry-wise difference between a dense reference and a sparse
/// matrix, relative to the largest reference entry.
pub fn relative_matrix_error(dense: &[f64], sparse: &pfc::sparse::SparseMatrix) -> f64 {
    let other: Vec<f64> = sparse.to_dense().concat();
    let diff: Vec<f64> = dense.iter().zip(&other).map(|(a, b)| a - b).collect();
    max_abs(&diff) / max_abs(dense)
}

/// Deterministic pseudo-random vector in `[lo, hi)`.
pub fn random_vec(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    use rand::{RngExt, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
}
