//! Multi-dimensional FFT on the torus grid, one axis at a time.
//!
//! Full complex transforms use the grid's own layout. Real data also has a half-spectrum
//! layout: the fastest axis keeps indices `0..=N/2` only, the other axes are complete.

use super::{TorusGrid, MAX_AXES};
use num_complex::Complex64;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft as FftPlan, FftPlanner};
use std::sync::Arc;

#[derive(Clone)]
pub struct Fft {
    grid: TorusGrid,
    forward: Arc<dyn FftPlan<f64>>,
    inverse: Arc<dyn FftPlan<f64>>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for Fft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft").field("grid", &self.grid).finish()
    }
}

const ROWS_PER_TASK: usize = 64;

impl Fft {
    pub fn new(grid: TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        let mut real = RealFftPlanner::new();
        let n = grid.resolution();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            r2c: real.plan_fft_forward(n),
            c2r: real.plan_fft_inverse(n),
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Signed integer wavenumber of FFT index `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.grid.resolution();
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.grid.resolution() / 2
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, data: &mut Vec<Complex64>) {
        self.transform(data, true);
        let scale = 1.0 / self.grid.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut data);
        data.into_iter().map(|v| v.re).collect()
    }

    /// Length of the fastest axis in the half-spectrum layout.
    pub fn half_width(&self) -> usize {
        self.grid.resolution() / 2 + 1
    }

    pub fn half_len(&self) -> usize {
        self.grid.len() / self.grid.resolution() * self.half_width()
    }

    /// Per-axis FFT indices of half-spectrum entry `i`.
    pub fn half_multi_index(&self, i: usize) -> [usize; MAX_AXES] {
        let n = self.grid.resolution();
        let dims = self.grid.real_dim();
        let mut m = [0; MAX_AXES];
        let mut rest = i;
        m[dims - 1] = rest % self.half_width();
        rest /= self.half_width();
        for a in (0..dims - 1).rev() {
            m[a] = rest % n;
            rest /= n;
        }
        m
    }

    /// Half spectrum of real grid values.
    pub fn forward_half(&self, values: &[f64]) -> Vec<Complex64> {
        let n = self.grid.resolution();
        let w = self.half_width();
        let mut out = vec![Complex64::new(0.0, 0.0); self.half_len()];
        out.par_chunks_mut(w * ROWS_PER_TASK)
            .zip(values.par_chunks(n * ROWS_PER_TASK))
            .for_each(|(dst, src)| {
                let mut input = self.r2c.make_input_vec();
                let mut scratch = self.r2c.make_scratch_vec();
                for (d, s) in dst.chunks_mut(w).zip(src.chunks(n)) {
                    input.copy_from_slice(s);
                    self.r2c
                        .process_with_scratch(&mut input, d, &mut scratch)
                        .expect("row lengths match the plan");
                }
            });
        self.slow_axes(&mut out, w, false);
        out
    }

    /// Normalized inverse of [`Fft::forward_half`]; the spectrum is taken to be Hermitian.
    pub fn inverse_half(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        let n = self.grid.resolution();
        let w = self.half_width();
        self.slow_axes(&mut spec, w, true);
        let scale = 1.0 / self.grid.len() as f64;
        let mut out = vec![0.0; self.grid.len()];
        out.par_chunks_mut(n * ROWS_PER_TASK)
            .zip(spec.par_chunks_mut(w * ROWS_PER_TASK))
            .for_each(|(dst, src)| {
                let mut output = self.c2r.make_output_vec();
                let mut scratch = self.c2r.make_scratch_vec();
                for (d, s) in dst.chunks_mut(n).zip(src.chunks_mut(w)) {
                    // rounding leaves tiny imaginary parts on the self-conjugate bins
                    s[0].im = 0.0;
                    s[w - 1].im = 0.0;
                    self.c2r
                        .process_with_scratch(s, &mut output, &mut scratch)
                        .expect("row lengths match the plan");
                    for (x, y) in d.iter_mut().zip(&output) {
                        *x = y * scale;
                    }
                }
            });
        out
    }

    /// `F⁻¹(σ · F(values))` for a symbol with `σ(−k) = conj(σ(k))`, so the result is real.
    pub fn apply_symbol(
        &self,
        values: &[f64],
        symbol: impl Fn(usize, &[usize; MAX_AXES]) -> Complex64 + Sync,
    ) -> Vec<f64> {
        let mut spec = self.forward_half(values);
        spec.par_iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v *= symbol(i, &self.half_multi_index(i)));
        self.inverse_half(spec)
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        let n = self.grid.resolution();
        let total = data.len();
        data.par_chunks_mut(n * ROWS_PER_TASK.min(total / n).max(1))
            .for_each(|chunk| plan.process(chunk));
        self.slow_axes(data, n, inverse);
    }

    /// Transforms every axis except the fastest, whose length in `data` is `width`.
    fn slow_axes(&self, data: &mut [Complex64], width: usize, inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        let n = self.grid.resolution();
        let total = data.len();
        let dims = self.grid.real_dim();
        let mut gathered = vec![Complex64::new(0.0, 0.0); total];
        for axis in 0..dims - 1 {
            let stride = width * n.pow((dims - 2 - axis) as u32);
            // Transpose each (n × stride) block so lines become contiguous, transform, and
            // transpose back.
            let block = n * stride;
            gathered
                .par_chunks_mut(block)
                .zip(data.par_chunks(block))
                .for_each(|(dst, src)| transpose(src, dst, n, stride));
            gathered
                .par_chunks_mut(n * ROWS_PER_TASK.min(total / n).max(1))
                .for_each(|chunk| plan.process(chunk));
            data.par_chunks_mut(block)
                .zip(gathered.par_chunks(block))
                .for_each(|(dst, src)| transpose(src, dst, stride, n));
        }
    }
}

const TILE: usize = 32;

/// Writes the transpose of the row-major `rows × cols` matrix `src` into `dst`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn round_trip_n2() {
        let g = TorusGrid::new(2, 8).unwrap();
        let fft = Fft::new(g);
        let vals: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
        let back = fft.inverse_real(fft.forward_real(&vals));
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn half_spectrum_matches_full_transform() {
        for g in [TorusGrid::new(1, 16).unwrap(), TorusGrid::new(2, 8).unwrap()] {
            let fft = Fft::new(g);
            let vals: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
            let full = fft.forward_real(&vals);
            let half = fft.forward_half(&vals);
            for (i, h) in half.iter().enumerate() {
                let m = fft.half_multi_index(i);
                let j = g.flat_index(&m[..g.real_dim()]);
                assert!((full[j] - h).norm() < 1e-10, "{i}");
            }
            let back = fft.inverse_half(half);
            for (a, b) in vals.iter().zip(&back) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn single_mode_lands_on_its_wavenumber() {
        let g = TorusGrid::new(1, 16).unwrap();
        let fft = Fft::new(g);
        let vals: Vec<f64> = (0..g.len())
            .map(|i| (2.0 * PI * 3.0 * g.point(i)[1]).cos())
            .collect();
        let spec = fft.forward_real(&vals);
        let total = g.len() as f64;
        // cos splits evenly between +3 and -3 along the fast axis.
        assert!((spec[g.flat_index(&[0, 3])].re - total / 2.0).abs() < 1e-9);
        assert!((spec[g.flat_index(&[0, 13])].re - total / 2.0).abs() < 1e-9);
        assert_eq!(fft.wavenumber(13), -3);
    }
}
