//! Periodic-grid FFT helpers shared by noise synthesis and the solver.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse complex FFT on an `n^d` periodic grid (`d` = 1 or 2),
/// row-major layout. Owns its scratch buffers, so keep one per worker.
#[derive(Clone)]
pub struct Spectral {
    d: usize,
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transpose: Vec<Complex64>,
}

impl Spectral {
    pub fn new(d: usize, n: usize) -> Self {
        assert!(d == 1 || d == 2, "spectral grids are 1-D or 2-D");
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            d,
            n,
            fwd,
            inv,
            scratch: vec![Complex64::default(); scratch_len],
            transpose: if d == 2 { vec![Complex64::default(); n * n] } else { Vec::new() },
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn apply(&mut self, data: &mut [Complex64], forward: bool) {
        debug_assert_eq!(data.len(), self.len());
        let plan = if forward { &self.fwd } else { &self.inv };
        plan.process_with_scratch(data, &mut self.scratch);
        if self.d == 2 {
            let n = self.n;
            transpose_into(data, &mut self.transpose, n);
            plan.process_with_scratch(&mut self.transpose, &mut self.scratch);
            transpose_into(&self.transpose, data, n);
        }
    }

    /// Unnormalized forward transform `Σ_j f_j e^{−i k·j 2π/n}`.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.apply(data, true);
    }

    /// Inverse transform including the `1/n^d` normalization.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.apply(data, false);
        let norm = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= norm);
    }
}

fn transpose_into(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

/// Angular wavenumbers `2πk/L` in FFT order (`k = 0, 1, …, n/2, −n/2+1, …, −1`;
/// the Nyquist index is reported as `+n/2`).
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * PI * k / length
        })
        .collect()
}

/// `|ξ|²` for every mode of an `n^d` grid, row-major.
pub fn squared_wavenumbers(d: usize, n: usize, length: f64) -> Vec<f64> {
    let k = wavenumbers(n, length);
    match d {
        1 => k.iter().map(|v| v * v).collect(),
        _ => {
            let mut out = Vec::with_capacity(n * n);
            for a in &k {
                for b in &k {
                    out.push(a * a + b * b);
                }
            }
            out
        }
    }
}
