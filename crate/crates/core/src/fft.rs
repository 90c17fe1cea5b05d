//! 2D DFT on square grids, wrapping rustfft.
//!
//! Conventions used throughout the crate:
//! * forward: unnormalized kernel `e^{-2pi i (ur+vc)/m}`,
//! * adjoint: unnormalized kernel `e^{+2pi i (ur+vc)/m}` (this equals
//!   `m^2` times the normalized inverse),
//! * inverse: adjoint divided by `m^2`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

#[derive(Clone)]
pub struct Fft2d {
    side: usize,
    forward: Arc<dyn Fft<f64>>,
    backward: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(side: usize) -> Self {
        assert!(side > 0, "FFT side must be positive");
        let mut planner = FftPlanner::new();
        Self {
            side,
            forward: planner.plan_fft_forward(side),
            backward: planner.plan_fft_inverse(side),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// In-place forward 2D DFT (unnormalized).
    pub fn forward2d(&self, data: &mut [Complex64]) {
        self.process_2d(data, true, cfg!(feature = "parallel"));
    }

    /// In-place adjoint 2D DFT (unnormalized, `e^{+2pi i .}` kernel).
    pub fn adjoint2d(&self, data: &mut [Complex64]) {
        self.process_2d(data, false, cfg!(feature = "parallel"));
    }

    /// In-place inverse 2D DFT (adjoint scaled by `1/m^2`).
    pub fn inverse2d(&self, data: &mut [Complex64]) {
        self.adjoint2d(data);
        let scale = 1.0 / (self.side * self.side) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Sequential forward transform, kept public for the benchmark suite.
    pub fn forward2d_sequential(&self, data: &mut [Complex64]) {
        self.process_2d(data, true, false);
    }

    fn process_2d(&self, data: &mut [Complex64], forward: bool, parallel: bool) {
        let m = self.side;
        assert_eq!(data.len(), m * m, "buffer does not match planned side");
        let fft = if forward { &self.forward } else { &self.backward };
        // rows, transpose, rows again, transpose back
        run_rows(fft, data, m, parallel);
        let mut tmp = transpose(data, m);
        run_rows(fft, &mut tmp, m, parallel);
        let back = transpose(&tmp, m);
        data.copy_from_slice(&back);
    }
}

fn run_rows(fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], m: usize, parallel: bool) {
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        data.par_chunks_mut(m).for_each_init(
            || vec![Complex64::default(); fft.get_inplace_scratch_len()],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
        return;
    }
    let _ = parallel;
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for row in data.chunks_mut(m) {
        fft.process_with_scratch(row, &mut scratch);
    }
}

fn transpose(data: &[Complex64], m: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); m * m];
    for r in 0..m {
        for c in 0..m {
            out[c * m + r] = data[r * m + c];
        }
    }
    out
}
