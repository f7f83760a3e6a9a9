//! Separable n-dimensional FFT over row-major buffers.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub(crate) struct Transform {
    counts: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transform")
            .field("counts", &self.counts)
            .finish()
    }
}

impl Transform {
    pub(crate) fn new(counts: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = counts
            .iter()
            .map(|&n| planner.plan_fft_forward(n))
            .collect();
        let inverse = counts
            .iter()
            .map(|&n| planner.plan_fft_inverse(n))
            .collect();
        Transform {
            counts: counts.to_vec(),
            forward,
            inverse,
        }
    }

    fn total(&self) -> usize {
        self.counts.iter().product()
    }

    /// Unnormalized forward transform, exponent sign −1.
    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform including the 1/N normalization.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / self.total() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Inverse transform without the 1/N factor.
    pub(crate) fn inverse_unnormalized(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        debug_assert_eq!(data.len(), self.total());
        let dims = self.counts.len();
        let scratch_len = plans
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
        let mut lines: Vec<Complex64> = Vec::new();

        for axis in 0..dims {
            let n = self.counts[axis];
            let stride: usize = self.counts[axis + 1..].iter().product();
            let plan = &plans[axis];
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            // transpose each (n x stride) block so the axis becomes contiguous
            let block = n * stride;
            lines.resize(block, Complex64::new(0.0, 0.0));
            for chunk in data.chunks_exact_mut(block) {
                for i in 0..n {
                    let row = &chunk[i * stride..(i + 1) * stride];
                    for (j, &z) in row.iter().enumerate() {
                        lines[j * n + i] = z;
                    }
                }
                plan.process_with_scratch(&mut lines, &mut scratch);
                for i in 0..n {
                    let row = &mut chunk[i * stride..(i + 1) * stride];
                    for (j, z) in row.iter_mut().enumerate() {
                        *z = lines[j * n + i];
                    }
                }
            }
        }
    }
}
