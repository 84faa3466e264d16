//! Model specification, stability analysis and mean intensities.
//!
//! Components are indexed `0 = T⁻, 1 = T⁺, 2 = N⁻, 3 = N⁺` (trades at the bid and
//! ask, downward and upward mid-price moves). The kernel matrix has block layout
//! `[[trade, feedback], [impact, price]]`: row = excited component, column = source.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{CausalFunction, Kernel, KernelBlock};

/// Seconds in one day, the period of seasonal baselines.
pub const DAY: f64 = 86_400.0;
/// Stability requires `(1−a⁺)(1−b⁺) − c⁺` above this.
pub const STABILITY_MARGIN: f64 = 1e-9;
const EIGEN_TOL: f64 = 1e-12;

/// The four bisymmetric blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    /// trades → trades
    pub trade: KernelBlock,
    /// trades → price moves
    pub impact: KernelBlock,
    /// price moves → trades
    pub feedback: KernelBlock,
    /// price moves → price moves
    pub price: KernelBlock,
}

impl KernelMatrix {
    pub fn new(trade: KernelBlock, impact: KernelBlock, feedback: KernelBlock, price: KernelBlock) -> Result<Self> {
        let dt = trade.grid_step();
        for b in [&impact, &feedback, &price] {
            if (b.grid_step() - dt).abs() > 1e-9 * dt {
                return Err(Error::GridMismatch(format!("blocks use grid steps {dt} and {}", b.grid_step())));
            }
        }
        Ok(Self { trade, impact, feedback, price })
    }

    pub fn zero(grid_step: f64, support_end: f64) -> Result<Self> {
        let z = KernelBlock::zero(grid_step, support_end)?;
        Ok(Self { trade: z.clone(), impact: z.clone(), feedback: z.clone(), price: z })
    }

    pub fn grid_step(&self) -> f64 {
        self.trade.grid_step()
    }

    /// Longest support among the blocks.
    pub fn support_end(&self) -> f64 {
        self.blocks().iter().map(|b| b.support_end()).fold(0.0, f64::max)
    }

    pub fn blocks(&self) -> [&KernelBlock; 4] {
        [&self.trade, &self.impact, &self.feedback, &self.price]
    }

    /// Kernel exciting component `target` from events of component `source`.
    pub fn kernel(&self, target: usize, source: usize) -> &Kernel {
        let block = match (target < 2, source < 2) {
            (true, true) => &self.trade,
            (true, false) => &self.feedback,
            (false, true) => &self.impact,
            (false, false) => &self.price,
        };
        block.entry(target % 2, source % 2)
    }

    /// `‖φ^{ij}‖` arranged as the 4×4 kernel matrix.
    pub fn norm_matrix(&self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.kernel(i, j).l1_norm();
            }
        }
        m
    }

    pub fn channel_norms(&self) -> ChannelNorms {
        let (a_plus, a_minus) = self.trade.channel_norms();
        let (b_plus, b_minus) = self.price.channel_norms();
        let (i_plus, i_minus) = self.impact.channel_norms();
        let (f_plus, f_minus) = self.feedback.channel_norms();
        ChannelNorms { a_plus, b_plus, i_plus, f_plus, a_minus, b_minus, i_minus, f_minus }
    }
}

/// Zero-frequency values of the sum (`plus`) and delta (`minus`) channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorms {
    pub a_plus: f64,
    pub b_plus: f64,
    pub i_plus: f64,
    pub f_plus: f64,
    pub a_minus: f64,
    pub b_minus: f64,
    pub i_minus: f64,
    pub f_minus: f64,
}

impl ChannelNorms {
    pub fn c_plus(&self) -> f64 {
        self.f_plus * self.i_plus
    }

    pub fn c_minus(&self) -> f64 {
        self.f_minus * self.i_minus
    }

    pub fn margin(&self) -> f64 {
        (1.0 - self.a_plus) * (1.0 - self.b_plus) - self.c_plus()
    }

    /// Sum-channel determinant `(1−a⁺)(1−b⁺) − f⁺i⁺`.
    pub fn sum_determinant(&self) -> f64 {
        self.margin()
    }

    /// Delta-channel determinant `(1−a⁻)(1−b⁻) − f⁻i⁻`.
    pub fn delta_determinant(&self) -> f64 {
        (1.0 - self.a_minus) * (1.0 - self.b_minus) - self.c_minus()
    }

    pub fn closed_form_stable(&self) -> bool {
        self.a_plus < 1.0 && self.b_plus < 1.0 && self.margin() > STABILITY_MARGIN
    }

    /// `a⁻b⁻ − 1 < c⁻ < (1−a⁻)(1−b⁻)`
    pub fn h1_holds(&self) -> bool {
        let c = self.c_minus();
        self.a_minus * self.b_minus - 1.0 < c && c < (1.0 - self.a_minus) * (1.0 - self.b_minus)
    }

    /// Roots of `x² − (a+b)x + ab − c` for the sum channel then the delta channel.
    pub fn eigenvalues(&self) -> [Complex64; 4] {
        let (p1, p2) = quadratic_roots(self.a_plus, self.b_plus, self.c_plus());
        let (m1, m2) = quadratic_roots(self.a_minus, self.b_minus, self.c_minus());
        [p1, p2, m1, m2]
    }

    pub fn report(&self) -> StabilityReport {
        let eigenvalues = self.eigenvalues().to_vec();
        let spectral_radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        StabilityReport {
            a_plus: self.a_plus,
            b_plus: self.b_plus,
            c_plus: self.c_plus(),
            a_minus: self.a_minus,
            b_minus: self.b_minus,
            c_minus: self.c_minus(),
            eigenvalues,
            spectral_radius,
            stable: self.closed_form_stable(),
            margin: self.margin(),
            h1_holds: self.h1_holds(),
        }
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> (Complex64, Complex64) {
    // x² − (a+b)x + ab − c; discriminant (a−b)² + 4c
    let half = 0.5 * (a + b);
    let disc = 0.25 * (a - b) * (a - b) + c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        (Complex64::new(half + r, 0.0), Complex64::new(half - r, 0.0))
    } else {
        let r = (-disc).sqrt();
        (Complex64::new(half, r), Complex64::new(half, -r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub a_plus: f64,
    pub b_plus: f64,
    pub c_plus: f64,
    pub a_minus: f64,
    pub b_minus: f64,
    pub c_minus: f64,
    pub eigenvalues: Vec<Complex64>,
    pub spectral_radius: f64,
    pub stable: bool,
    /// `(1−a⁺)(1−b⁺) − c⁺`
    pub margin: f64,
    pub h1_holds: bool,
}

/// Exogenous trade intensity, per side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Baseline {
    Constant(f64),
    /// `(slot start in seconds of day, μ)` pairs; the first slot starts at 0.
    Periodic(Vec<(f64, f64)>),
}

impl Baseline {
    pub fn validate(&self) -> Result<()> {
        match self {
            Baseline::Constant(mu) => {
                if !(mu.is_finite() && *mu >= 0.0) {
                    return Err(invalid(format!("baseline must be finite and >= 0, got {mu}")));
                }
            }
            Baseline::Periodic(slots) => {
                if slots.is_empty() || slots[0].0 != 0.0 {
                    return Err(invalid("periodic baseline must start with a slot at 0 s"));
                }
                for w in slots.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(invalid("periodic baseline slots must be strictly increasing"));
                    }
                }
                if slots.last().map(|s| s.0 >= DAY).unwrap_or(false) {
                    return Err(invalid("periodic baseline slots must start within the day"));
                }
                if slots.iter().any(|s| !(s.1.is_finite() && s.1 >= 0.0)) {
                    return Err(invalid("periodic baseline values must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    /// `μ_t`
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Baseline::Constant(mu) => *mu,
            Baseline::Periodic(slots) => slots[self.slot_index(t)].1,
        }
    }

    fn slot_index(&self, t: f64) -> usize {
        match self {
            Baseline::Constant(_) => 0,
            Baseline::Periodic(slots) => {
                let s = t.rem_euclid(DAY);
                slots.partition_point(|slot| slot.0 <= s).saturating_sub(1)
            }
        }
    }

    /// Next time after `t` where the baseline may change (infinite for constants).
    pub fn next_change(&self, t: f64) -> f64 {
        match self {
            Baseline::Constant(_) => f64::INFINITY,
            Baseline::Periodic(slots) => {
                let day_start = (t / DAY).floor() * DAY;
                let k = self.slot_index(t);
                match slots.get(k + 1) {
                    Some(next) => day_start + next.0,
                    None => day_start + DAY,
                }
            }
        }
    }

    /// Time average over one period.
    pub fn mean(&self) -> f64 {
        match self {
            Baseline::Constant(mu) => *mu,
            Baseline::Periodic(slots) => {
                let mut total = 0.0;
                for (k, slot) in slots.iter().enumerate() {
                    let end = slots.get(k + 1).map(|s| s.0).unwrap_or(DAY);
                    total += slot.1 * (end - slot.0);
                }
                total / DAY
            }
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Baseline::Constant(mu) => *mu,
            Baseline::Periodic(slots) => slots.iter().map(|s| s.1).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Buy => 1.0,
            Side::Sell => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentOrder {
    pub time: f64,
    pub side: Side,
    pub mass: f64,
}

/// Deterministic order flow of a labeled agent: discrete orders and/or a rate density per side.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentFlow {
    pub orders: Vec<AgentOrder>,
    pub buy_density: Option<CausalFunction>,
    pub sell_density: Option<CausalFunction>,
}

impl AgentFlow {
    pub fn validate(&self) -> Result<()> {
        for o in &self.orders {
            if !(o.time.is_finite() && o.time >= 0.0) {
                return Err(invalid(format!("agent order time must be finite and >= 0, got {}", o.time)));
            }
            if !(o.mass.is_finite() && o.mass > 0.0) {
                return Err(invalid(format!("agent order mass must be > 0, got {}", o.mass)));
            }
        }
        for d in [&self.buy_density, &self.sell_density].into_iter().flatten() {
            if d.atom_mass() < 0.0 || d.samples().iter().any(|&v| v < 0.0) {
                return Err(invalid("agent flow densities must be nonnegative"));
            }
        }
        Ok(())
    }

    /// End of the flow's support.
    pub fn support_end(&self) -> f64 {
        let orders = self.orders.iter().map(|o| o.time).fold(0.0, f64::max);
        let dens = [&self.buy_density, &self.sell_density]
            .into_iter()
            .flatten()
            .map(|d| d.support_end())
            .fold(0.0, f64::max);
        orders.max(dens)
    }

    /// Total mass bought minus sold.
    pub fn net_mass(&self) -> f64 {
        let orders: f64 = self.orders.iter().map(|o| o.side.sign() * o.mass).sum();
        orders
            + self.buy_density.as_ref().map(|d| d.integral()).unwrap_or(0.0)
            - self.sell_density.as_ref().map(|d| d.integral()).unwrap_or(0.0)
    }

    /// `dA⁺ − dA⁻` on a grid of `len` cells: orders at 0 become atoms, later orders
    /// a spike of height `mass/dt` in their cell.
    pub fn net_flow(&self, grid_step: f64, len: usize) -> Result<CausalFunction> {
        let mut atom = 0.0;
        let mut samples = vec![0.0; len];
        for o in &self.orders {
            let k = (o.time / grid_step + 1e-9).floor() as usize;
            if o.time == 0.0 {
                atom += o.side.sign() * o.mass;
            } else if k < len {
                samples[k] += o.side.sign() * o.mass / grid_step;
            }
        }
        let mut net = CausalFunction::new(atom, grid_step, samples)?;
        for (d, sign) in [(&self.buy_density, 1.0), (&self.sell_density, -1.0)] {
            if let Some(d) = d {
                if !d.same_grid(&net) {
                    return Err(Error::GridMismatch(format!(
                        "flow density step {} vs grid step {grid_step}",
                        d.grid_step()
                    )));
                }
                net = net.add(&d.resized(len).scaled(sign))?;
            }
        }
        Ok(net.resized(len))
    }

    /// Mirror image: buys become sells.
    pub fn flipped(&self) -> Self {
        Self {
            orders: self
                .orders
                .iter()
                .map(|o| AgentOrder {
                    side: match o.side {
                        Side::Buy => Side::Sell,
                        Side::Sell => Side::Buy,
                    },
                    ..*o
                })
                .collect(),
            buy_density: self.sell_density.clone(),
            sell_density: self.buy_density.clone(),
        }
    }
}

/// Full model: `λ = M + Φ ⋆ dP + Θ ⋆ dA`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// per-side trade baseline μ
    pub baseline: Baseline,
    /// Exogenous per-side rate of price moves. Zero in the reference model; a
    /// positive value is a diagnostic extension giving price events without trades.
    pub price_baseline: f64,
    pub phi: KernelMatrix,
    /// agent orders → trades
    pub theta_trade: KernelBlock,
    /// agent orders → price moves; `None` means the same kernels as `phi.impact`
    pub theta_impact: Option<KernelBlock>,
    pub agent: Option<AgentFlow>,
}

impl ModelSpec {
    pub fn new(mu: f64, phi: KernelMatrix) -> Result<Self> {
        let theta_trade = KernelBlock::zero(phi.grid_step(), phi.trade.support_end())?;
        let spec = Self {
            baseline: Baseline::Constant(mu),
            price_baseline: 0.0,
            phi,
            theta_trade,
            theta_impact: None,
            agent: None,
        };
        spec.validate_fields()?;
        Ok(spec)
    }

    pub fn validate_fields(&self) -> Result<()> {
        self.baseline.validate()?;
        if !(self.price_baseline.is_finite() && self.price_baseline >= 0.0) {
            return Err(invalid("price_baseline must be finite and >= 0"));
        }
        let dt = self.phi.grid_step();
        for b in [Some(&self.theta_trade), self.theta_impact.as_ref()].into_iter().flatten() {
            if (b.grid_step() - dt).abs() > 1e-9 * dt {
                return Err(Error::GridMismatch("agent kernels must share the model grid step".into()));
            }
        }
        if let Some(a) = &self.agent {
            a.validate()?;
        }
        Ok(())
    }

    pub fn theta_impact(&self) -> &KernelBlock {
        self.theta_impact.as_ref().unwrap_or(&self.phi.impact)
    }

    /// True when the agent impact kernels differ from the anonymous impact kernels.
    pub fn theta_impact_overridden(&self) -> bool {
        self.theta_impact.as_ref().map(|t| t != &self.phi.impact).unwrap_or(false)
    }

    pub fn grid_step(&self) -> f64 {
        self.phi.grid_step()
    }

    pub fn channel_norms(&self) -> ChannelNorms {
        self.phi.channel_norms()
    }

    pub fn norm_matrix(&self) -> [[f64; 4]; 4] {
        self.phi.norm_matrix()
    }

    pub fn stability(&self) -> StabilityReport {
        stability_closed_form(self)
    }

    /// Error unless the closed-form condition holds.
    pub fn require_stable(&self) -> Result<StabilityReport> {
        let report = self.stability();
        if report.stable {
            Ok(report)
        } else {
            Err(Error::Unstable(Box::new(report)))
        }
    }

    /// Per-side baseline vector `(μ̄, μ̄, ν, ν)` with μ̄ the time-averaged trade baseline.
    pub fn baseline_vector(&self) -> [f64; 4] {
        let mu = self.baseline.mean();
        [mu, mu, self.price_baseline, self.price_baseline]
    }
}

pub fn norm_matrix(spec: &ModelSpec) -> [[f64; 4]; 4] {
    spec.norm_matrix()
}

pub fn stability_closed_form(spec: &ModelSpec) -> StabilityReport {
    spec.channel_norms().report()
}

/// Stability from the moduli of the kernel-norm matrix eigenvalues.
pub fn stability_eigen(spec: &ModelSpec) -> (bool, Vec<Complex64>) {
    stability_eigen_norms(&spec.channel_norms())
}

pub fn stability_eigen_norms(norms: &ChannelNorms) -> (bool, Vec<Complex64>) {
    let eig = norms.eigenvalues();
    let stable = eig.iter().all(|z| z.norm() < 1.0 - EIGEN_TOL);
    (stable, eig.to_vec())
}

/// `(Λ^T, Λ^N)` per side, from the sum-channel 2×2 solve.
pub fn mean_intensity(spec: &ModelSpec) -> Result<(f64, f64)> {
    spec.require_stable()?;
    Ok(mean_intensity_unchecked(&spec.channel_norms(), spec.baseline.mean(), spec.price_baseline))
}

pub(crate) fn mean_intensity_unchecked(n: &ChannelNorms, mu: f64, nu: f64) -> (f64, f64) {
    let den = n.sum_determinant();
    let lt = (mu * (1.0 - n.b_plus) + n.f_plus * nu) / den;
    let ln = (n.i_plus * mu + (1.0 - n.a_plus) * nu) / den;
    (lt, ln)
}

/// `Λ = (I − Φ̂_0)^{−1} M` by a direct 4×4 solve.
pub fn mean_intensity_direct(spec: &ModelSpec) -> Result<[f64; 4]> {
    spec.require_stable()?;
    let m = spec.norm_matrix();
    let a = Matrix4::from_fn(|i, j| if i == j { 1.0 } else { 0.0 } - m[i][j]);
    let rhs = Vector4::from(spec.baseline_vector());
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::IllConditioned("I − Φ̂_0 is singular".into()))?;
    Ok([sol[0], sol[1], sol[2], sol[3]])
}

/// Baseline μ reproducing a measured per-side trade rate, for the given kernels.
pub fn estimate_baseline(trade_rate: f64, kernels: &KernelMatrix) -> Result<f64> {
    let n = kernels.channel_norms();
    let den = n.sum_determinant();
    if !(den > 0.0) || n.b_plus >= 1.0 {
        return Err(Error::Unstable(Box::new(n.report())));
    }
    if !(trade_rate.is_finite() && trade_rate >= 0.0) {
        return Err(invalid(format!("trade rate must be finite and >= 0, got {trade_rate}")));
    }
    Ok(trade_rate * den / (1.0 - n.b_plus))
}

/// Convenience constructor for blocks used throughout tests and presets.
pub fn block(self_k: Kernel, cross_k: Kernel) -> Result<KernelBlock> {
    KernelBlock::new(self_k, cross_k)
}
