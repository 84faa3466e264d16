//! Causal functions on a uniform grid, with an optional Dirac atom at the origin.
//!
//! Every kernel, conditional-expectation density and impact kernel in the crate
//! is a [`CausalFunction`]. Samples are densities on the cells
//! `[k·dt, (k+1)·dt)`, so integrals and convolutions are left-endpoint Riemann
//! sums. Parametric shapes are sampled as exact cell averages, so the sampled mass
//! equals the continuous mass over the support. Atoms are kept exact: `δ ⋆ δ = δ` and `δ ⋆ f = f`.

use std::f64::consts::PI;
use std::ops::Deref;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::FrequencyGrid;

/// Default grid step in seconds.
pub const DEFAULT_GRID_STEP: f64 = 0.01;
/// Default truncation point for power-law kernels, in seconds.
pub const DEFAULT_SUPPORT_END: f64 = 500.0;

const GRID_TOL: f64 = 1e-9;

/// A causal signed function: `atom_mass·δ_t + Σ_k samples[k]·1{k·dt ≤ t < (k+1)·dt}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalFunction {
    atom_mass: f64,
    grid_step: f64,
    samples: Vec<f64>,
}

impl CausalFunction {
    pub fn new(atom_mass: f64, grid_step: f64, samples: Vec<f64>) -> Result<Self> {
        if !(grid_step > 0.0 && grid_step.is_finite()) {
            return Err(invalid(format!("grid_step must be positive, got {grid_step}")));
        }
        if !atom_mass.is_finite() || samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite value in causal function"));
        }
        Ok(Self { atom_mass, grid_step, samples })
    }

    pub fn zero(grid_step: f64, len: usize) -> Self {
        Self { atom_mass: 0.0, grid_step, samples: vec![0.0; len] }
    }

    pub fn dirac(mass: f64, grid_step: f64, len: usize) -> Self {
        Self { atom_mass: mass, grid_step, samples: vec![0.0; len] }
    }

    pub fn atom_mass(&self) -> f64 {
        self.atom_mass
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn support_end(&self) -> f64 {
        self.samples.len() as f64 * self.grid_step
    }

    /// Grid abscissae `t_k = k·dt`.
    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|k| k as f64 * self.grid_step).collect()
    }

    /// `|atom| + Σ |samples|·dt`.
    pub fn l1_norm(&self) -> f64 {
        self.atom_mass.abs() + self.samples.iter().map(|v| v.abs()).sum::<f64>() * self.grid_step
    }

    /// Signed total mass, i.e. the transform at zero frequency.
    pub fn integral(&self) -> f64 {
        self.atom_mass + self.samples.iter().sum::<f64>() * self.grid_step
    }

    /// Value of the sampled (non-atomic) part at time `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let k = (t / self.grid_step + 1e-9).floor() as usize;
        self.samples.get(k).copied().unwrap_or(0.0)
    }

    /// `∫_0^t f` including the atom, for `t ≥ 0`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = self.atom_mass;
        self.samples
            .iter()
            .map(|v| {
                acc += v * self.grid_step;
                acc
            })
            .collect()
    }

    pub fn same_grid(&self, other: &CausalFunction) -> bool {
        (self.grid_step - other.grid_step).abs() <= GRID_TOL * self.grid_step.max(other.grid_step)
    }

    fn check_grid(&self, other: &CausalFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("grid steps {} and {}", self.grid_step, other.grid_step)))
        }
    }

    /// Zero-pads or truncates to `len` samples.
    pub fn resized(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self { atom_mass: self.atom_mass, grid_step: self.grid_step, samples }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            atom_mass: self.atom_mass * factor,
            grid_step: self.grid_step,
            samples: self.samples.iter().map(|v| v * factor).collect(),
        }
    }

    fn combine(&self, other: &CausalFunction, sign: f64) -> Result<Self> {
        self.check_grid(other)?;
        let len = self.len().max(other.len());
        let samples = (0..len)
            .map(|k| {
                self.samples.get(k).copied().unwrap_or(0.0)
                    + sign * other.samples.get(k).copied().unwrap_or(0.0)
            })
            .collect();
        Ok(Self { atom_mass: self.atom_mass + sign * other.atom_mass, grid_step: self.grid_step, samples })
    }

    pub fn add(&self, other: &CausalFunction) -> Result<Self> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &CausalFunction) -> Result<Self> {
        self.combine(other, -1.0)
    }

    /// `f̂(ω) = atom + Σ_k samples[k]·e^{−iω·k·dt}·dt` at each requested frequency.
    pub fn transform(&self, frequencies: &[f64]) -> TransferFunction {
        let values = frequencies
            .iter()
            .map(|&w| {
                let step = Complex64::from_polar(1.0, -w * self.grid_step);
                let mut phase = Complex64::new(1.0, 0.0);
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, &v) in self.samples.iter().enumerate() {
                    acc += phase * v;
                    phase *= step;
                    // renormalize periodically against drift of |phase|
                    if k % 1024 == 1023 {
                        phase = Complex64::from_polar(1.0, -w * self.grid_step * (k + 1) as f64);
                    }
                }
                acc * self.grid_step + self.atom_mass
            })
            .collect();
        TransferFunction { frequencies: frequencies.to_vec(), values, zero_value: self.integral() }
    }

    /// Convolution with support `len(f) + len(g) − 1` cells.
    pub fn convolve(&self, other: &CausalFunction) -> Result<Self> {
        let len = (self.len() + other.len()).saturating_sub(1).max(self.len().max(other.len()));
        self.convolve_truncated(other, len)
    }

    /// Convolution keeping only the first `max_len` cells.
    pub fn convolve_truncated(&self, other: &CausalFunction, max_len: usize) -> Result<Self> {
        self.check_grid(other)?;
        let dt = self.grid_step;
        let full = (self.len() + other.len()).saturating_sub(1);
        let len = max_len.min(full.max(self.len().max(other.len())));
        let mut samples = vec![0.0; len];
        if !self.is_empty() && !other.is_empty() {
            let cross = discrete_convolution(&self.samples, &other.samples, len);
            for (s, c) in samples.iter_mut().zip(cross) {
                *s = c * dt;
            }
        }
        for (k, s) in samples.iter_mut().enumerate() {
            *s += self.atom_mass * other.samples.get(k).copied().unwrap_or(0.0)
                + other.atom_mass * self.samples.get(k).copied().unwrap_or(0.0);
        }
        Ok(Self { atom_mass: self.atom_mass * other.atom_mass, grid_step: dt, samples })
    }
}

/// Linear convolution of two sequences truncated to `len` terms.
pub(crate) fn discrete_convolution(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    if a.is_empty() || b.is_empty() || len == 0 {
        return vec![0.0; len];
    }
    let work = a.len().min(len) as f64 * b.len().min(len) as f64;
    if work < 2.0e5 {
        let mut out = vec![0.0; len];
        for (i, &x) in a.iter().enumerate().take(len) {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate().take(len - i) {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = (a.len().min(len) + b.len().min(len)).next_power_of_two();
    let grid = FrequencyGrid::new(1.0, n);
    let fa = grid.forward(&a[..a.len().min(len)]);
    let fb = grid.forward(&b[..b.len().min(len)]);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = grid.inverse(&prod);
    out.truncate(len);
    out.resize(len, 0.0);
    out
}

/// Parametric families accepted by [`Kernel::parametric`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelShape {
    Zero,
    Dirac { mass: f64 },
    /// `alpha·e^{−rate·t}`
    Exponential { alpha: f64, rate: f64 },
    /// `alpha·(cutoff + t)^{−exponent}`, truncated at the support end.
    PowerLaw { alpha: f64, cutoff: f64, exponent: f64 },
    /// Arbitrary sampled values.
    Table { samples: Vec<f64>, #[serde(default)] atom_mass: f64 },
}

impl KernelShape {
    pub fn exponential(alpha: f64, rate: f64) -> Self {
        KernelShape::Exponential { alpha, rate }
    }

    /// Power law whose mass up to `support_end` equals `norm`.
    pub fn powerlaw_with_norm(norm: f64, cutoff: f64, exponent: f64, grid_step: f64, support_end: f64) -> Result<Self> {
        if !(cutoff > 0.0) || !(exponent > 0.0) || norm < 0.0 {
            return Err(invalid("power law needs cutoff > 0, exponent > 0, norm >= 0"));
        }
        let unit = Kernel::parametric(KernelShape::PowerLaw { alpha: 1.0, cutoff, exponent }, grid_step, support_end)?;
        Ok(KernelShape::PowerLaw { alpha: norm / unit.l1_norm(), cutoff, exponent })
    }

    /// Exact value of the absolutely continuous part at `t`.
    fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self {
            KernelShape::Exponential { alpha, rate } => alpha * (-rate * t).exp(),
            KernelShape::PowerLaw { alpha, cutoff, exponent } => alpha * (cutoff + t).powf(-exponent),
            _ => 0.0,
        }
    }
}

fn powerlaw_mass(alpha: f64, cutoff: f64, exponent: f64, from: f64, to: f64) -> f64 {
    if (exponent - 1.0).abs() < 1e-12 {
        alpha * ((cutoff + to).ln() - (cutoff + from).ln())
    } else {
        alpha * ((cutoff + from).powf(1.0 - exponent) - (cutoff + to).powf(1.0 - exponent)) / (exponent - 1.0)
    }
}

/// A nonnegative causal kernel, remembering the analytic form it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    shape: KernelShape,
    function: CausalFunction,
    /// suffix maxima of the samples, for dominating bounds of tabulated kernels
    suffix_max: Vec<f64>,
}

impl Kernel {
    pub fn parametric(shape: KernelShape, grid_step: f64, support_end: f64) -> Result<Self> {
        if !(grid_step > 0.0 && grid_step.is_finite()) {
            return Err(invalid(format!("grid_step must be positive, got {grid_step}")));
        }
        if !(support_end > 0.0 && support_end.is_finite()) {
            return Err(invalid(format!("support_end must be positive and finite, got {support_end}")));
        }
        let cells = support_end / grid_step;
        let len = cells.round() as usize;
        if (cells - len as f64).abs() > 1e-6 {
            return Err(invalid(format!("support_end {support_end} is not a multiple of grid_step {grid_step}")));
        }
        let function = match &shape {
            KernelShape::Zero => CausalFunction::zero(grid_step, len),
            KernelShape::Dirac { mass } => {
                if *mass < 0.0 {
                    return Err(invalid("dirac mass must be >= 0"));
                }
                CausalFunction::dirac(*mass, grid_step, len)
            }
            KernelShape::Exponential { alpha, rate } => {
                if *alpha < 0.0 || *rate <= 0.0 {
                    return Err(invalid("exponential kernel needs alpha >= 0 and rate > 0"));
                }
                let cell = alpha * (-(-rate * grid_step).exp_m1()) / (rate * grid_step);
                let samples = (0..len).map(|k| cell * (-rate * k as f64 * grid_step).exp()).collect();
                CausalFunction::new(0.0, grid_step, samples)?
            }
            KernelShape::PowerLaw { alpha, cutoff, exponent } => {
                if *alpha < 0.0 || *cutoff <= 0.0 || *exponent <= 0.0 {
                    return Err(invalid("power-law kernel needs alpha >= 0, cutoff > 0, exponent > 0"));
                }
                let samples = (0..len)
                    .map(|k| {
                        let from = k as f64 * grid_step;
                        powerlaw_mass(*alpha, *cutoff, *exponent, from, from + grid_step) / grid_step
                    })
                    .collect();
                CausalFunction::new(0.0, grid_step, samples)?
            }
            KernelShape::Table { samples, atom_mass } => {
                let mut samples = samples.clone();
                samples.resize(len, 0.0);
                CausalFunction::new(*atom_mass, grid_step, samples)?
            }
        };
        Self::from_function_with_shape(shape, function)
    }

    /// Wraps an arbitrary nonnegative causal function as a tabulated kernel.
    pub fn from_function(function: CausalFunction) -> Result<Self> {
        let shape = KernelShape::Table { samples: function.samples().to_vec(), atom_mass: function.atom_mass() };
        Self::from_function_with_shape(shape, function)
    }

    fn from_function_with_shape(shape: KernelShape, function: CausalFunction) -> Result<Self> {
        if function.atom_mass < 0.0 || function.samples.iter().any(|&v| v < 0.0) {
            return Err(invalid("kernels must be nonnegative"));
        }
        let mut suffix_max = function.samples.clone();
        for k in (0..suffix_max.len().saturating_sub(1)).rev() {
            suffix_max[k] = suffix_max[k].max(suffix_max[k + 1]);
        }
        Ok(Self { shape, function, suffix_max })
    }

    pub fn zero(grid_step: f64, support_end: f64) -> Result<Self> {
        Self::parametric(KernelShape::Zero, grid_step, support_end)
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    pub fn function(&self) -> &CausalFunction {
        &self.function
    }

    pub fn is_zero(&self) -> bool {
        self.function.atom_mass == 0.0 && self.function.samples.iter().all(|&v| v == 0.0)
    }

    /// Exact density at `t` (analytic when the shape is known, cell lookup otherwise).
    /// The Dirac atom is not included.
    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 || t >= self.function.support_end() {
            return 0.0;
        }
        match self.shape {
            KernelShape::Exponential { .. } | KernelShape::PowerLaw { .. } => self.shape.density(t),
            _ => self.function.value_at(t),
        }
    }

    /// An upper bound of `density(s)` over `s ≥ t`.
    pub fn density_bound(&self, t: f64) -> f64 {
        if t >= self.function.support_end() {
            return 0.0;
        }
        match self.shape {
            // nonincreasing shapes
            KernelShape::Exponential { .. } | KernelShape::PowerLaw { .. } => self.shape.density(t.max(0.0)),
            _ => {
                let k = (t.max(0.0) / self.function.grid_step + 1e-9).floor() as usize;
                self.suffix_max.get(k).copied().unwrap_or(0.0)
            }
        }
    }

    /// Analytic mass of the untruncated shape beyond `support_end`
    /// (infinite for power laws with exponent ≤ 1, zero for tabulated kernels).
    pub fn tail_mass(&self) -> f64 {
        let end = self.function.support_end();
        match self.shape {
            KernelShape::Exponential { alpha, rate } => alpha / rate * (-rate * end).exp(),
            KernelShape::PowerLaw { alpha, cutoff, exponent } => {
                if exponent <= 1.0 {
                    f64::INFINITY
                } else {
                    alpha * (cutoff + end).powf(1.0 - exponent) / (exponent - 1.0)
                }
            }
            _ => 0.0,
        }
    }

    /// Exact mass of the truncated analytic shape on `[0, support_end)`.
    pub fn analytic_norm(&self) -> f64 {
        let end = self.function.support_end();
        match self.shape {
            KernelShape::Exponential { alpha, rate } => alpha / rate * (1.0 - (-rate * end).exp()),
            KernelShape::PowerLaw { alpha, cutoff, exponent } => powerlaw_mass(alpha, cutoff, exponent, 0.0, end),
            _ => self.function.l1_norm(),
        }
    }

    /// Cell averages of the analytic shape (`∫` over each cell divided by `dt`),
    /// falling back to the samples for tabulated kernels.
    pub fn cell_averages(&self, grid_step: f64, len: usize) -> Vec<f64> {
        (0..len)
            .map(|k| {
                let (a, b) = (k as f64 * grid_step, (k + 1) as f64 * grid_step);
                let end = self.function.support_end();
                let b = b.min(end);
                if a >= end {
                    return 0.0;
                }
                let mass = match self.shape {
                    KernelShape::Exponential { alpha, rate } => alpha / rate * ((-rate * a).exp() - (-rate * b).exp()),
                    KernelShape::PowerLaw { alpha, cutoff, exponent } => powerlaw_mass(alpha, cutoff, exponent, a, b),
                    _ => {
                        // exact integral of the piecewise-constant samples over [a, b)
                        let dt = self.function.grid_step;
                        let (mut t, mut m) = (a, 0.0);
                        while t < b - 1e-12 {
                            let cell = (t / dt + 1e-9).floor();
                            let next = ((cell + 1.0) * dt).min(b);
                            m += self.function.value_at(t) * (next - t);
                            t = next;
                        }
                        m
                    }
                };
                let atom = if k == 0 { self.function.atom_mass } else { 0.0 };
                (mass + atom) / grid_step
            })
            .collect()
    }
}

impl Deref for Kernel {
    type Target = CausalFunction;

    fn deref(&self) -> &CausalFunction {
        &self.function
    }
}

/// Sampled transform `f̂(ω)` together with the exact zero-frequency value.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub frequencies: Vec<f64>,
    pub values: Vec<Complex64>,
    pub zero_value: f64,
}

impl TransferFunction {
    /// Transform of `f` on the full DFT grid of `grid` (FFT order).
    pub fn on_grid(f: &CausalFunction, grid: &FrequencyGrid) -> Result<Self> {
        let values = grid.transform(f)?;
        Ok(Self { frequencies: grid.frequencies(), values, zero_value: f.integral() })
    }
}

/// Result of [`inverse_transform`].
#[derive(Debug, Clone)]
pub struct InverseTransform {
    /// Reconstructed function with `atom_mass = 0`; a detected atom is removed from cell 0.
    pub function: CausalFunction,
    /// Mass of a Dirac-like spike detected at the origin (0 when none).
    pub atom_estimate: f64,
    /// Fraction of the reconstructed `L¹` mass found at negative times (wrap-around).
    pub noncausal_fraction: f64,
    /// Fraction of the causal `L¹` mass found beyond `support_end`.
    pub truncated_fraction: f64,
}

/// Wrap-around mass above which [`inverse_transform`] reports aliasing.
pub const ALIASING_THRESHOLD: f64 = 1e-2;

/// Inverts a transform sampled on a full DFT grid (`ω_j = 2πj/(n·dt)` in FFT order).
///
/// Atoms cannot be represented on the grid: a spike in cell 0 that dominates the
/// local linear trend is reported as `atom_estimate` and removed from the samples.
pub fn inverse_transform(f: &TransferFunction, grid_step: f64, support_end: f64) -> Result<InverseTransform> {
    let n = f.values.len();
    if n < 4 || f.frequencies.len() != n {
        return Err(invalid("transfer function needs at least 4 frequencies on a DFT grid"));
    }
    let expected = 2.0 * PI / (n as f64 * grid_step);
    if (f.frequencies[1] - expected).abs() > 1e-9 * expected || f.frequencies[0] != 0.0 {
        return Err(invalid(format!(
            "frequencies are not the DFT grid of step {grid_step} (expected spacing {expected})"
        )));
    }
    let len = (support_end / grid_step).round() as usize;
    if len > n / 2 {
        return Err(Error::Aliasing(format!(
            "support {support_end} s exceeds half the frequency-grid period {} s",
            n as f64 * grid_step
        )));
    }
    let grid = FrequencyGrid::new(grid_step, n);
    let raw = grid.inverse_transform_values(&f.values);
    let total: f64 = raw.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let noncausal: f64 = raw[n / 2..].iter().map(|v| v.abs()).sum();
    let causal: f64 = raw[..n / 2].iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let beyond: f64 = raw[len..n / 2].iter().map(|v| v.abs()).sum();
    let noncausal_fraction = noncausal / total;
    if noncausal_fraction > ALIASING_THRESHOLD {
        return Err(Error::Aliasing(format!(
            "{:.2e} of the mass wraps to negative times; widen the frequency grid",
            noncausal_fraction
        )));
    }
    let mut samples = raw[..len].to_vec();
    let mut atom_estimate = 0.0;
    if samples.len() >= 3 {
        let spike = grid_step * (samples[0] - (2.0 * samples[1] - samples[2]));
        if spike * samples[0] > 0.0 && spike.abs() > 0.5 * grid_step * samples[0].abs() {
            atom_estimate = spike;
            samples[0] -= spike / grid_step;
        }
    }
    Ok(InverseTransform {
        function: CausalFunction::new(0.0, grid_step, samples)?,
        atom_estimate,
        noncausal_fraction,
        truncated_fraction: beyond / causal,
    })
}

/// The two diagonal channels of a bisymmetric block.
#[derive(Debug, Clone, PartialEq)]
pub struct Channels {
    /// `self + cross`
    pub sum: CausalFunction,
    /// `self − cross`
    pub delta: CausalFunction,
}

/// A bisymmetric 2×2 kernel block `[[self, cross], [cross, self]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBlock {
    pub self_k: Kernel,
    pub cross_k: Kernel,
}

impl KernelBlock {
    pub fn new(self_k: Kernel, cross_k: Kernel) -> Result<Self> {
        if !self_k.same_grid(&cross_k) || self_k.len() != cross_k.len() {
            return Err(Error::GridMismatch("self and cross kernels must share grid and support".into()));
        }
        Ok(Self { self_k, cross_k })
    }

    pub fn zero(grid_step: f64, support_end: f64) -> Result<Self> {
        Self::new(Kernel::zero(grid_step, support_end)?, Kernel::zero(grid_step, support_end)?)
    }

    pub fn from_shapes(self_shape: KernelShape, cross_shape: KernelShape, grid_step: f64, support_end: f64) -> Result<Self> {
        Self::new(
            Kernel::parametric(self_shape, grid_step, support_end)?,
            Kernel::parametric(cross_shape, grid_step, support_end)?,
        )
    }

    pub fn grid_step(&self) -> f64 {
        self.self_k.grid_step()
    }

    pub fn support_end(&self) -> f64 {
        self.self_k.support_end()
    }

    pub fn channels(&self) -> Channels {
        // same grid by construction
        Channels {
            sum: self.self_k.add(&self.cross_k).expect("block kernels share a grid"),
            delta: self.self_k.sub(&self.cross_k).expect("block kernels share a grid"),
        }
    }

    /// `(‖self‖ + ‖cross‖, ‖self‖ − ‖cross‖)`.
    pub fn channel_norms(&self) -> (f64, f64) {
        let (s, c) = (self.self_k.l1_norm(), self.cross_k.l1_norm());
        (s + c, s - c)
    }

    /// Entry `(row, col)` of the 2×2 block, indices in `{0: minus, 1: plus}`.
    pub fn entry(&self, row: usize, col: usize) -> &Kernel {
        if row == col {
            &self.self_k
        } else {
            &self.cross_k
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exp_kernel(alpha: f64, rate: f64, dt: f64, end: f64) -> Kernel {
        Kernel::parametric(KernelShape::exponential(alpha, rate), dt, end).unwrap()
    }

    #[test]
    fn exponential_norm_is_alpha_over_rate() {
        // cell averages carry the exact truncated mass
        let k = exp_kernel(0.03, 0.05, 0.01, 500.0);
        assert_relative_eq!(k.l1_norm(), 0.6 * (1.0 - (-25.0f64).exp()), max_relative = 1e-12);
        let k = exp_kernel(0.04, 0.2, 0.01, 500.0);
        assert_relative_eq!(k.l1_norm(), k.analytic_norm(), max_relative = 1e-12);
        assert_relative_eq!(k.l1_norm(), 0.2, max_relative = 1e-12);
    }

    #[test]
    fn dirac_and_zero() {
        let d = Kernel::parametric(KernelShape::Dirac { mass: 0.25 }, 0.01, 1.0).unwrap();
        assert_eq!(d.atom_mass(), 0.25);
        assert!(d.samples().iter().all(|&v| v == 0.0));
        assert_eq!(d.l1_norm(), 0.25);
        let z = Kernel::zero(0.01, 1.0).unwrap();
        assert_eq!(z.l1_norm(), 0.0);
    }

    #[test]
    fn rejects_bad_grids_and_parameters() {
        assert!(Kernel::parametric(KernelShape::Zero, 0.0, 1.0).is_err());
        assert!(Kernel::parametric(KernelShape::Zero, -0.1, 1.0).is_err());
        assert!(Kernel::parametric(KernelShape::Zero, 0.3, 1.0).is_err());
        assert!(Kernel::parametric(KernelShape::exponential(-1.0, 1.0), 0.1, 1.0).is_err());
        assert!(Kernel::parametric(KernelShape::PowerLaw { alpha: 1.0, cutoff: 0.0, exponent: 1.5 }, 0.1, 1.0).is_err());
        assert!(CausalFunction::new(0.0, 0.1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn powerlaw_norm_matches_analytic_integral() {
        let (alpha, c, beta, end) = (0.1, 0.5, 1.5, 200.0);
        let k = Kernel::parametric(KernelShape::PowerLaw { alpha, cutoff: c, exponent: beta }, 0.001, end).unwrap();
        let untruncated = alpha * c.powf(1.0 - beta) / (beta - 1.0);
        assert_relative_eq!(k.analytic_norm() + k.tail_mass(), untruncated, max_relative = 1e-12);
        // cell averages carry the exact mass
        assert_relative_eq!(k.l1_norm(), k.analytic_norm(), max_relative = 1e-12);
        let heavy = Kernel::parametric(KernelShape::PowerLaw { alpha, cutoff: c, exponent: 0.8 }, 0.1, 10.0).unwrap();
        assert!(heavy.tail_mass().is_infinite());
    }

    #[test]
    fn powerlaw_with_norm_hits_requested_mass() {
        let shape = KernelShape::powerlaw_with_norm(0.9, 0.01, 1.2, 0.01, 500.0).unwrap();
        let k = Kernel::parametric(shape, 0.01, 500.0).unwrap();
        assert_relative_eq!(k.l1_norm(), 0.9, max_relative = 1e-12);
        assert_relative_eq!(k.analytic_norm(), 0.9, max_relative = 1e-12);
    }

    #[test]
    fn transform_of_atom_is_flat() {
        let d = CausalFunction::dirac(0.7, 0.01, 10);
        let tf = d.transform(&[0.0, 1.0, 50.0]);
        for v in tf.values {
            assert_relative_eq!(v.re, 0.7);
            assert_relative_eq!(v.im, 0.0);
        }
        let z = CausalFunction::zero(0.01, 10).transform(&[0.0, 3.0]);
        assert!(z.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn transform_of_exponential_is_lorentzian() {
        let (alpha, b) = (0.5, 0.3);
        let k = exp_kernel(alpha, b, 0.001, 100.0);
        let tf = k.transform(&[0.0, 0.1, 1.0, 5.0]);
        for (w, v) in tf.frequencies.iter().zip(&tf.values) {
            let exact = Complex64::new(alpha, 0.0) / Complex64::new(b, *w);
            // left-endpoint rule: error ≈ α·dt/2 from the jump at the origin
            assert!((v - exact).norm() < alpha * 0.001, "w={w} got {v} want {exact}");
        }
        assert_relative_eq!(tf.zero_value, k.l1_norm(), max_relative = 1e-12);
    }

    #[test]
    fn convolution_of_two_exponentials() {
        let (a, b, dt) = (1.0, 0.4, 0.001);
        let f = exp_kernel(1.0, a, dt, 30.0);
        let g = exp_kernel(1.0, b, dt, 30.0);
        let h = f.convolve(&g).unwrap();
        for &t in &[0.5, 1.0, 3.0, 10.0] {
            let exact = ((-b * t).exp() - (-a * t).exp()) / (a - b);
            assert_relative_eq!(h.value_at(t), exact, max_relative = 5e-3);
        }
    }

    #[test]
    fn dirac_is_identity_and_zero_annihilates() {
        let f = exp_kernel(0.3, 0.7, 0.01, 5.0);
        let id = CausalFunction::dirac(1.0, 0.01, 0);
        let c = id.convolve(&f).unwrap();
        assert_eq!(c.samples(), f.samples());
        assert_eq!(c.atom_mass(), 0.0);
        let c = f.convolve(&id).unwrap();
        assert_eq!(c.samples(), f.samples());
        let dd = id.convolve(&id).unwrap();
        assert_eq!(dd.atom_mass(), 1.0);
        let z = CausalFunction::zero(0.01, 500).convolve(&f).unwrap();
        assert!(z.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn convolution_grid_mismatch() {
        let f = CausalFunction::zero(0.01, 5);
        let g = CausalFunction::zero(0.02, 5);
        assert!(matches!(f.convolve(&g), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        let a: Vec<f64> = (0..900).map(|k| ((k as f64) * 0.37).sin()).collect();
        let b: Vec<f64> = (0..700).map(|k| ((k as f64) * 0.11).cos()).collect();
        let fast = discrete_convolution(&a, &b, 1599);
        let mut slow = vec![0.0; 1599];
        for i in 0..a.len() {
            for j in 0..b.len() {
                slow[i + j] += a[i] * b[j];
            }
        }
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn channels_of_blocks() {
        let e = exp_kernel(0.04, 0.2, 0.01, 100.0);
        let z = Kernel::zero(0.01, 100.0).unwrap();
        let block = KernelBlock::new(e.clone(), e.clone()).unwrap();
        let ch = block.channels();
        assert!(ch.delta.samples().iter().all(|&v| v == 0.0));
        let block = KernelBlock::new(e.clone(), z.clone()).unwrap();
        let ch = block.channels();
        assert_eq!(ch.sum.samples(), e.samples());
        assert_eq!(ch.delta.samples(), e.samples());
        let cross = exp_kernel(0.05, 0.1, 0.01, 100.0);
        let block = KernelBlock::new(z, cross).unwrap();
        assert_relative_eq!(block.channels().delta.integral(), -0.5, max_relative = 1e-3);
    }

    #[test]
    fn inverse_of_constant_is_atom() {
        let grid = FrequencyGrid::new(0.01, 256);
        let tf = TransferFunction {
            frequencies: grid.frequencies(),
            values: vec![Complex64::new(0.3, 0.0); 256],
            zero_value: 0.3,
        };
        let inv = inverse_transform(&tf, 0.01, 1.0).unwrap();
        assert_relative_eq!(inv.atom_estimate, 0.3, max_relative = 1e-12);
        assert!(inv.function.samples().iter().all(|v| v.abs() < 1e-9));
        let zero = TransferFunction { values: vec![Complex64::new(0.0, 0.0); 256], ..tf };
        let inv = inverse_transform(&zero, 0.01, 1.0).unwrap();
        assert_eq!(inv.atom_estimate, 0.0);
        assert!(inv.function.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inverse_of_lorentzian_is_exponential() {
        let (alpha, b, dt) = (0.5, 0.5, 0.01);
        let grid = FrequencyGrid::new(dt, 1 << 14);
        let values: Vec<Complex64> = grid
            .frequencies()
            .iter()
            .map(|&w| Complex64::new(alpha, 0.0) / Complex64::new(b, w))
            .collect();
        let tf = TransferFunction { frequencies: grid.frequencies(), values, zero_value: alpha / b };
        let inv = inverse_transform(&tf, dt, 20.0).unwrap();
        assert_eq!(inv.atom_estimate, 0.0);
        for &t in &[0.5, 1.0, 5.0, 10.0] {
            // band-limiting the 1/ω tail costs O(α·dt) in absolute terms
            assert!((inv.function.value_at(t) - alpha * (-b * t).exp()).abs() < alpha * dt);
        }
    }

    #[test]
    fn inverse_detects_wraparound() {
        // anticausal exponential α/(b − iω) lives at negative times
        let grid = FrequencyGrid::new(0.01, 1 << 12);
        let values: Vec<Complex64> = grid
            .frequencies()
            .iter()
            .map(|&w| Complex64::new(1.0, 0.0) / Complex64::new(1.0, -w))
            .collect();
        let tf = TransferFunction { frequencies: grid.frequencies(), values, zero_value: 1.0 };
        assert!(matches!(inverse_transform(&tf, 0.01, 5.0), Err(Error::Aliasing(_))));
    }

    #[test]
    fn cell_averages_integrate_exactly() {
        let k = exp_kernel(1.0, 2.0, 0.01, 10.0);
        let avg = k.cell_averages(0.5, 4);
        assert_relative_eq!(avg[0], (1.0 - (-1.0f64).exp()) / 2.0 / 0.5, max_relative = 1e-12);
        let d = Kernel::parametric(KernelShape::Dirac { mass: 0.2 }, 0.01, 1.0).unwrap();
        assert_relative_eq!(d.cell_averages(0.1, 3)[0], 2.0);
    }
}
