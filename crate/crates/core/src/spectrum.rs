//! Transforms of a model's kernel channels on a frequency grid, and the closed-form
//! spectral quantities built from them.

use nalgebra::{Complex, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernel::{CausalFunction, KernelBlock};
use crate::model::{mean_intensity_unchecked, ModelSpec};
use crate::spectral::FrequencyGrid;

type C = Complex64;
const ONE: C = C::new(1.0, 0.0);
const ZERO: C = C::new(0.0, 0.0);

/// Sum and delta channel transforms of one block.
#[derive(Debug, Clone)]
pub struct ChannelSpectrum {
    pub sum: Vec<C>,
    pub delta: Vec<C>,
    /// atom masses of the sum and delta channels (the high-frequency limits)
    pub sum_atom: f64,
    pub delta_atom: f64,
}

impl ChannelSpectrum {
    fn new(block: &KernelBlock, grid: &FrequencyGrid) -> Result<Self> {
        let ch = block.channels();
        Ok(Self {
            sum: grid.transform(&ch.sum)?,
            delta: grid.transform(&ch.delta)?,
            sum_atom: ch.sum.atom_mass(),
            delta_atom: ch.delta.atom_mass(),
        })
    }
}

/// Values of the channel transforms at one frequency (or their atom limits).
#[derive(Debug, Clone, Copy)]
pub struct ChannelPoint {
    pub trade: C,
    pub impact: C,
    pub feedback: C,
    pub price: C,
    pub theta_trade: C,
    pub theta_impact: C,
}

impl ChannelPoint {
    /// `(1−φ̂^T)(1−φ̂^N) − φ̂^I φ̂^F`
    pub fn determinant(&self) -> C {
        (ONE - self.trade) * (ONE - self.price) - self.impact * self.feedback
    }

    /// `(I − Φ̂)^{−1}` of the 2×2 channel matrix `[[trade, feedback], [impact, price]]`.
    pub fn resolvent(&self) -> [[C; 2]; 2] {
        let d = self.determinant();
        [[(ONE - self.price) / d, self.feedback / d], [self.impact / d, (ONE - self.trade) / d]]
    }

    /// `Δξ̂ = 1 − (1 − φ̂^T + θ̂^T)/det`
    pub fn xi(&self) -> C {
        ONE - (ONE - self.trade + self.theta_trade) / self.determinant()
    }

    /// Spectral density of the trade-imbalance increments per unit rate pair.
    pub fn trade_density(&self, rate_t: f64, rate_n: f64) -> f64 {
        let d = self.determinant().norm_sqr();
        (rate_t * (ONE - self.price).norm_sqr() + rate_n * self.feedback.norm_sqr()) / d
    }

    /// Spectral density of the price increments.
    pub fn price_density(&self, rate_t: f64, rate_n: f64) -> f64 {
        let d = self.determinant().norm_sqr();
        (rate_t * self.impact.norm_sqr() + rate_n * (ONE - self.trade).norm_sqr()) / d
    }
}

/// Channel transforms of a stable model on a DFT grid.
#[derive(Debug, Clone)]
pub struct ModelSpectrum {
    pub grid: FrequencyGrid,
    /// per-side mean intensities `(Λ^T, Λ^N)`
    pub rates: (f64, f64),
    pub trade: ChannelSpectrum,
    pub impact: ChannelSpectrum,
    pub feedback: ChannelSpectrum,
    pub price: ChannelSpectrum,
    pub theta_trade: ChannelSpectrum,
    pub theta_impact: ChannelSpectrum,
}

impl ModelSpectrum {
    pub fn new(spec: &ModelSpec, grid: FrequencyGrid) -> Result<Self> {
        spec.require_stable()?;
        let dt = spec.grid_step();
        if (grid.grid_step() - dt).abs() > 1e-9 * dt {
            return Err(Error::GridMismatch(format!("frequency grid step {} vs model step {dt}", grid.grid_step())));
        }
        let rates = mean_intensity_unchecked(&spec.channel_norms(), spec.baseline.mean(), spec.price_baseline);
        Ok(Self {
            rates,
            trade: ChannelSpectrum::new(&spec.phi.trade, &grid)?,
            impact: ChannelSpectrum::new(&spec.phi.impact, &grid)?,
            feedback: ChannelSpectrum::new(&spec.phi.feedback, &grid)?,
            price: ChannelSpectrum::new(&spec.phi.price, &grid)?,
            theta_trade: ChannelSpectrum::new(&spec.theta_trade, &grid)?,
            theta_impact: ChannelSpectrum::new(spec.theta_impact(), &grid)?,
            grid,
        })
    }

    /// Grid on the model step with period at least `min_period` and at least
    /// four times the longest kernel support.
    pub fn for_period(spec: &ModelSpec, min_period: f64) -> Result<Self> {
        let dt = spec.grid_step();
        let mut support = spec.phi.support_end().max(spec.theta_trade.support_end());
        if let Some(t) = &spec.theta_impact {
            support = support.max(t.support_end());
        }
        let cells = ((support / dt).round() as usize).max((min_period / dt).ceil() as usize);
        Self::new(spec, FrequencyGrid::for_cells(dt, cells))
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn delta(&self, j: usize) -> ChannelPoint {
        ChannelPoint {
            trade: self.trade.delta[j],
            impact: self.impact.delta[j],
            feedback: self.feedback.delta[j],
            price: self.price.delta[j],
            theta_trade: self.theta_trade.delta[j],
            theta_impact: self.theta_impact.delta[j],
        }
    }

    pub fn sum(&self, j: usize) -> ChannelPoint {
        ChannelPoint {
            trade: self.trade.sum[j],
            impact: self.impact.sum[j],
            feedback: self.feedback.sum[j],
            price: self.price.sum[j],
            theta_trade: self.theta_trade.sum[j],
            theta_impact: self.theta_impact.sum[j],
        }
    }

    /// Delta channel restricted to atoms: the limit at infinite frequency.
    pub fn delta_atoms(&self) -> ChannelPoint {
        let r = |c: &ChannelSpectrum| C::new(c.delta_atom, 0.0);
        ChannelPoint {
            trade: r(&self.trade),
            impact: r(&self.impact),
            feedback: r(&self.feedback),
            price: r(&self.price),
            theta_trade: r(&self.theta_trade),
            theta_impact: r(&self.theta_impact),
        }
    }

    /// Sum channel restricted to atoms.
    pub fn sum_atoms(&self) -> ChannelPoint {
        let r = |c: &ChannelSpectrum| C::new(c.sum_atom, 0.0);
        ChannelPoint {
            trade: r(&self.trade),
            impact: r(&self.impact),
            feedback: r(&self.feedback),
            price: r(&self.price),
            theta_trade: r(&self.theta_trade),
            theta_impact: r(&self.theta_impact),
        }
    }

    /// Covariance spectrum `(I−Φ̂)^{−1} Σ (I−Φ̂)^{−†}` of the four increments, from the channel resolvents.
    pub fn covariance(&self, j: usize) -> [[C; 4]; 4] {
        self.covariance_of(self.sum(j), self.delta(j))
    }

    /// Atom of the covariance at lag 0 (the infinite-frequency limit).
    pub fn covariance_atoms(&self) -> [[C; 4]; 4] {
        self.covariance_of(self.sum_atoms(), self.delta_atoms())
    }

    fn covariance_of(&self, sum: ChannelPoint, delta: ChannelPoint) -> [[C; 4]; 4] {
        let (lt, ln) = self.rates;
        let weighted = |r: [[C; 2]; 2]| -> [[C; 2]; 2] {
            let mut m = [[ZERO; 2]; 2];
            for (a, row) in m.iter_mut().enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    *v = r[a][0] * r[b][0].conj() * lt + r[a][1] * r[b][1].conj() * ln;
                }
            }
            m
        };
        let plus = weighted(sum.resolvent());
        let minus = weighted(delta.resolvent());
        let mut out = [[ZERO; 4]; 4];
        for (p, row) in out.iter_mut().enumerate() {
            for (q, v) in row.iter_mut().enumerate() {
                let (a, b) = (p / 2, q / 2);
                let sign = if p % 2 == q % 2 { 1.0 } else { -1.0 };
                *v = (plus[a][b] + minus[a][b] * sign) * 0.5;
            }
        }
        out
    }

    /// Same as [`Self::covariance`] by direct inversion of the assembled 4×4 matrix.
    pub fn covariance_direct(&self, j: usize) -> Result<[[C; 4]; 4]> {
        let s = self.sum(j);
        let d = self.delta(j);
        let entry = |sum: C, delta: C, p: usize, q: usize| {
            if p % 2 == q % 2 {
                (sum + delta) * 0.5
            } else {
                (sum - delta) * 0.5
            }
        };
        let phi = Matrix4::<Complex<f64>>::from_fn(|p, q| {
            let v = match (p < 2, q < 2) {
                (true, true) => entry(s.trade, d.trade, p, q),
                (true, false) => entry(s.feedback, d.feedback, p, q),
                (false, true) => entry(s.impact, d.impact, p, q),
                (false, false) => entry(s.price, d.price, p, q),
            };
            let id = if p == q { ONE } else { ZERO };
            id - v
        });
        let r = phi
            .try_inverse()
            .ok_or_else(|| Error::IllConditioned("I − Φ̂ is singular on the grid".into()))?;
        let (lt, ln) = self.rates;
        let sigma = Matrix4::<Complex<f64>>::from_diagonal(&nalgebra::Vector4::new(
            C::new(lt, 0.0),
            C::new(lt, 0.0),
            C::new(ln, 0.0),
            C::new(ln, 0.0),
        ));
        let cov = r * sigma * r.adjoint();
        let mut out = [[ZERO; 4]; 4];
        for (p, row) in out.iter_mut().enumerate() {
            for (q, v) in row.iter_mut().enumerate() {
                *v = cov[(p, q)];
            }
        }
        Ok(out)
    }

    /// Transform of the conditional-expectation matrix `ĝ = cov·Σ^{−1} − I`.
    /// Columns of components with zero rate are set to 0.
    pub fn g_hat(&self, cov: &[[C; 4]; 4]) -> [[C; 4]; 4] {
        let rate = [self.rates.0, self.rates.0, self.rates.1, self.rates.1];
        let mut g = [[ZERO; 4]; 4];
        for (i, row) in g.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if rate[j] > 0.0 {
                    *v = cov[i][j] / rate[j] - if i == j { ONE } else { ZERO };
                }
            }
        }
        g
    }

    /// Rebuilds the lag-0 sample of a two-sided density as `atom/dt` plus the linear
    /// extrapolation of the smooth part from positive lags. On the grid that cell also
    /// holds same-cell interactions counted in both time orders, a spurious mass of
    /// order `dt·φ(0)` that has no continuous-time counterpart.
    pub fn regularize_origin(&self, circ: &mut [f64], atom: f64) {
        if circ.len() > 2 {
            circ[0] = atom / self.grid.grid_step() + 2.0 * circ[1] - circ[2];
        }
    }

    /// Circular time samples (densities, negative lags in the upper half) of a spectrum.
    pub fn to_time(&self, values: &[C]) -> Vec<f64> {
        self.grid.inverse_transform_values(values)
    }

    /// Inverse transform of `values` whose atom at the origin is `atom`, as a causal function
    /// with support `len` cells. Fails when the wrap-around mass is significant.
    pub fn causal_part(&self, values: &[C], atom: f64, len: usize) -> Result<CausalFunction> {
        let n = self.len();
        if len > n / 2 {
            return Err(Error::Aliasing(format!("{len} cells requested from a grid of {n} frequencies")));
        }
        let smooth: Vec<C> = values.iter().map(|v| v - atom).collect();
        let raw = self.to_time(&smooth);
        let total: f64 = raw.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        let wrapped: f64 = raw[n / 2..].iter().map(|v| v.abs()).sum();
        if wrapped / total > crate::kernel::ALIASING_THRESHOLD {
            return Err(Error::Aliasing(format!(
                "{:.2e} of the mass wraps to negative times; increase the grid period",
                wrapped / total
            )));
        }
        CausalFunction::new(atom, self.grid.grid_step(), raw[..len].to_vec())
    }
}
