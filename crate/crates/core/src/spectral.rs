//! Uniform frequency grids and FFT plumbing shared by the spectral computations.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::kernel::CausalFunction;

/// The DFT grid `ω_j = 2πj/(n·dt)`, stored in FFT order (negative frequencies in the upper half).
#[derive(Clone)]
pub struct FrequencyGrid {
    grid_step: f64,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FrequencyGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrequencyGrid").field("grid_step", &self.grid_step).field("len", &self.len).finish()
    }
}

impl FrequencyGrid {
    pub fn new(grid_step: f64, len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid_step,
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    /// Default grid for functions supported on `cells` grid cells: next power of two ≥ 4·cells.
    pub fn for_cells(grid_step: f64, cells: usize) -> Self {
        Self::new(grid_step, (4 * cells.max(4)).next_power_of_two())
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Time period `n·dt` of the circular representation.
    pub fn period(&self) -> f64 {
        self.len as f64 * self.grid_step
    }

    pub fn frequency(&self, j: usize) -> f64 {
        let n = self.len as i64;
        let j = j as i64;
        let signed = if j < (n + 1) / 2 { j } else { j - n };
        2.0 * PI * signed as f64 / self.period()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.frequency(j)).collect()
    }

    /// Plain forward DFT of a (zero-padded) real sequence.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert!(values.len() <= self.len, "sequence longer than the frequency grid");
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(self.len, Complex64::new(0.0, 0.0));
        self.forward.process(&mut buf);
        buf
    }

    /// Real part of the normalized inverse DFT.
    pub fn inverse(&self, values: &[Complex64]) -> Vec<f64> {
        assert_eq!(values.len(), self.len, "spectrum length differs from the frequency grid");
        let mut buf = values.to_vec();
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Transform of `f` at every grid frequency (same quadrature as [`CausalFunction::transform`]).
    pub fn transform(&self, f: &CausalFunction) -> Result<Vec<Complex64>> {
        let rel = (f.grid_step() - self.grid_step).abs() / self.grid_step;
        if rel > 1e-9 {
            return Err(Error::GridMismatch(format!(
                "function step {} vs frequency-grid step {}",
                f.grid_step(),
                self.grid_step
            )));
        }
        if f.len() > self.len / 2 {
            return Err(Error::Aliasing(format!(
                "support of {} cells needs a frequency grid of at least {} points",
                f.len(),
                2 * f.len()
            )));
        }
        let mut values = self.forward(f.samples());
        for v in values.iter_mut() {
            *v = *v * self.grid_step + f.atom_mass();
        }
        Ok(values)
    }

    /// Circular density samples whose transform is `values` (negative times in the upper half).
    pub fn inverse_transform_values(&self, values: &[Complex64]) -> Vec<f64> {
        let scale = 1.0 / self.grid_step;
        self.inverse(values).into_iter().map(|v| v * scale).collect()
    }
}
