//! Multi-dimensional complex FFT on row layouts with the first axis fastest.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct FftNd {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl FftNd {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward: Vec<_> = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse: Vec<_> = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let scratch_len = forward
            .iter()
            .chain(&inverse)
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let max_len = shape.iter().copied().max().unwrap_or(1);
        Self {
            shape: shape.to_vec(),
            forward,
            inverse,
            line: vec![Complex64::default(); max_len],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform, `X_k = Σ x_j e^{-2πi jk/n}`.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Inverse transform including the `1/n` normalization.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        assert_eq!(data.len(), self.len());
        let mut stride = 1;
        for axis in 0..self.shape.len() {
            let n = self.shape[axis];
            let plan = if forward {
                self.forward[axis].clone()
            } else {
                self.inverse[axis].clone()
            };
            if axis == 0 {
                plan.process_with_scratch(data, &mut self.scratch);
            } else {
                let block = stride * n;
                let line = &mut self.line[..n];
                for outer in (0..data.len()).step_by(block) {
                    for inner in 0..stride {
                        let base = outer + inner;
                        for (j, l) in line.iter_mut().enumerate() {
                            *l = data[base + j * stride];
                        }
                        plan.process_with_scratch(line, &mut self.scratch);
                        for (j, l) in line.iter().enumerate() {
                            data[base + j * stride] = *l;
                        }
                    }
                }
            }
            stride *= n;
        }
    }
}

/// Index of the mode `-k` for the flattened mode index `i`.
pub fn mirror_index(shape: &[usize], mut i: usize) -> usize {
    let mut out = 0;
    let mut stride = 1;
    for &n in shape {
        let k = i % n;
        i /= n;
        out += ((n - k) % n) * stride;
        stride *= n;
    }
    out
}

/// Signed integer frequency of index `k` on an axis of length `n`.
pub fn signed_frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}
