//! Market impact of a labeled order flow and the response function of anonymous trades.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytics::{Curve, CurveMeta};
use crate::error::{invalid, Error, Result};
use crate::kernel::CausalFunction;
use crate::model::{AgentFlow, ModelSpec, Side};
use crate::simulator::{price_path, EventStream};
use crate::spectrum::{ChannelPoint, ModelSpectrum};

/// Expected price displacement `MI_t = E(X_t)` caused by a labeled flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactProfile {
    /// `t_k = (k+1)·dt`
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `t → ∞` limit from the closed form
    pub permanent_level: f64,
}

fn cells(spec: &ModelSpec, horizon: f64) -> Result<usize> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    Ok(((horizon / spec.grid_step()).round() as usize).max(1))
}

/// The kernel `Δξ` with `Δξ̂ = 1 − (1 − Δφ̂^T + Δθ̂^T)/((1−Δφ̂^T)(1−Δφ̂^N) − Δφ̂^IΔφ̂^F)`,
/// truncated at `support_end`.
pub fn xi_kernel(spec: &ModelSpec, support_end: f64) -> Result<CausalFunction> {
    let len = cells(spec, support_end)?;
    let ms = ModelSpectrum::for_period(spec, 4.0 * support_end)?;
    xi_from_spectrum(&ms, len)
}

fn xi_from_spectrum(ms: &ModelSpectrum, len: usize) -> Result<CausalFunction> {
    let values: Vec<Complex64> = (0..ms.len()).map(|j| ms.delta(j).xi()).collect();
    let atom = ms.delta_atoms().xi().re;
    ms.causal_part(&values, atom, len)
}

/// `Δξ̂_0` from the kernel norms.
pub fn xi_at_zero(spec: &ModelSpec) -> Result<f64> {
    spec.require_stable()?;
    let n = spec.channel_norms();
    let theta = spec.theta_trade.channel_norms().1;
    Ok(1.0 - (1.0 - n.a_minus + theta) / n.delta_determinant())
}

/// `MI = (δ − Δξ) ⋆ Δθ^I ⋆ (A⁺ − A⁻)` integrated over `[0, t]`, for `t` up to `horizon`.
pub fn market_impact_profile(spec: &ModelSpec, flow: &AgentFlow, horizon: f64) -> Result<ImpactProfile> {
    flow.validate()?;
    let len = cells(spec, horizon)?;
    let dt = spec.grid_step();
    let xi = xi_kernel(spec, horizon)?;
    let propagator = CausalFunction::dirac(1.0, dt, 0).sub(&xi)?;
    let impact = spec.theta_impact().channels().delta;
    let net = flow.net_flow(dt, len)?;
    let density = propagator.convolve_truncated(&impact, len)?.convolve_truncated(&net, len)?;
    let values = density.resized(len).cumulative();
    let times = (1..=len).map(|k| k as f64 * dt).collect();
    let permanent_level = permanent_impact(spec)? * flow.net_mass();
    Ok(ImpactProfile { times, values, permanent_level })
}

/// Long-run impact of a unit buy order: `(1 − Δξ̂_0)·Δθ̂^I_0`.
pub fn permanent_impact(spec: &ModelSpec) -> Result<f64> {
    let xi0 = xi_at_zero(spec)?;
    let impact = spec.theta_impact().channel_norms().1;
    Ok((1.0 - xi0) * impact)
}

fn response_hat(ms: &ModelSpectrum, j: usize) -> Complex64 {
    response_at(ms, ms.delta(j))
}

fn response_atom(ms: &ModelSpectrum) -> Complex64 {
    response_at(ms, ms.delta_atoms())
}

fn response_at(ms: &ModelSpectrum, p: ChannelPoint) -> Complex64 {
    let (lt, ln) = ms.rates;
    let one = Complex64::new(1.0, 0.0);
    let num = p.impact * (one - p.price).conj() + (one - p.trade) * p.feedback.conj() * (ln / lt);
    num / p.determinant().norm_sqr()
}

/// `R_t = E(N⁺_t − N⁻_t | dT⁺_0 = 1)` centered, at `t_k = (k+1)·dt` up to `horizon`.
pub fn response_function(spec: &ModelSpec, horizon: f64) -> Result<Curve> {
    let len = cells(spec, horizon)?;
    let ms = ModelSpectrum::for_period(spec, 4.0 * horizon)?;
    if ms.rates.0 <= 0.0 {
        return Err(Error::InsufficientData("zero trade rate: response undefined".into()));
    }
    let values: Vec<Complex64> = (0..ms.len()).map(|j| response_hat(&ms, j)).collect();
    let mut density = ms.to_time(&values);
    ms.regularize_origin(&mut density, response_atom(&ms).re);
    let dt = ms.grid.grid_step();
    let mut acc = 0.0;
    let cumulative = density[..len]
        .iter()
        .map(|v| {
            acc += v * dt;
            acc
        })
        .collect();
    Curve::new(
        (1..=len).map(|k| k as f64 * dt).collect(),
        cumulative,
        CurveMeta { kind: "response_analytic".into(), scale_h: None, tau0_mass: None, sample_size: None },
    )
}

/// Average of `X_{s+t} − X_s` over buy trades `s`, minus the mean price drift.
/// Returns the curve and the standard error of each value.
pub fn empirical_response(events: &EventStream, times: &[f64]) -> Result<(Curve, Vec<f64>)> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return Err(invalid("response times must be nonnegative and increasing"));
    }
    let tmax = *times.last().unwrap();
    let buys: Vec<f64> = events.t_plus.iter().copied().filter(|&s| s + tmax < events.horizon).collect();
    if buys.len() < 2 {
        return Err(Error::InsufficientData("fewer than two buy trades to condition on".into()));
    }
    let path = price_path(events);
    let drift = (events.n_plus.len() as f64 - events.n_minus.len() as f64) / events.horizon;
    let n = buys.len() as f64;
    let mut values = Vec::with_capacity(times.len());
    let mut errors = Vec::with_capacity(times.len());
    for &t in times {
        let (mut s1, mut s2) = (0.0, 0.0);
        for &s in &buys {
            let d = path.value_at(s + t) - path.value_at(s) - drift * t;
            s1 += d;
            s2 += d * d;
        }
        let mean = s1 / n;
        values.push(mean);
        errors.push(((s2 / n - mean * mean).max(0.0) / (n - 1.0)).sqrt());
    }
    let curve = Curve::new(
        times.to_vec(),
        values,
        CurveMeta { kind: "response_empirical".into(), scale_h: None, tau0_mass: None, sample_size: Some(buys.len()) },
    )?;
    Ok((curve, errors))
}

/// Uniform meta-order: `rate` orders per second on `[0, duration)` on one side.
pub fn meta_order_flow(duration: f64, side: Side, rate: f64, grid_step: f64) -> Result<AgentFlow> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(invalid(format!("meta-order duration must be positive, got {duration}")));
    }
    if !(rate > 0.0 && rate.is_finite()) || !(grid_step > 0.0) {
        return Err(invalid("meta-order rate and grid step must be positive"));
    }
    let full = (duration / grid_step + 1e-9).floor() as usize;
    let rest = duration - full as f64 * grid_step;
    let mut samples = vec![rate; full];
    if rest > 1e-9 * grid_step {
        samples.push(rate * rest / grid_step);
    }
    let density = CausalFunction::new(0.0, grid_step, samples)?;
    Ok(match side {
        Side::Buy => AgentFlow { buy_density: Some(density), ..Default::default() },
        Side::Sell => AgentFlow { sell_density: Some(density), ..Default::default() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelBlock, KernelShape};
    use crate::model::{AgentOrder, KernelMatrix};
    use approx::assert_relative_eq;

    fn spec_with(trade: KernelBlock, price: KernelBlock, feedback: KernelBlock, mass: f64) -> ModelSpec {
        let imp = KernelBlock::from_shapes(KernelShape::Dirac { mass }, KernelShape::Zero, 0.01, 20.0).unwrap();
        ModelSpec::new(0.2, KernelMatrix::new(trade, imp, feedback, price).unwrap()).unwrap()
    }

    fn exp_block(a: f64, r: f64, cross: bool) -> KernelBlock {
        let (s, c) = if cross {
            (KernelShape::Zero, KernelShape::exponential(a, r))
        } else {
            (KernelShape::exponential(a, r), KernelShape::Zero)
        };
        KernelBlock::from_shapes(s, c, 0.01, 20.0).unwrap()
    }

    fn unit_buy() -> AgentFlow {
        AgentFlow { orders: vec![AgentOrder { time: 0.0, side: Side::Buy, mass: 1.0 }], ..Default::default() }
    }

    #[test]
    fn impact_is_flat_without_price_dynamics() {
        let z = KernelBlock::zero(0.01, 20.0).unwrap();
        let spec = spec_with(exp_block(0.05, 0.5, false), z.clone(), z, 0.3);
        let xi = xi_kernel(&spec, 10.0).unwrap();
        assert!(xi.l1_norm() < 1e-12);
        let mi = market_impact_profile(&spec, &unit_buy(), 10.0).unwrap();
        for v in &mi.values {
            assert!((v - 0.3).abs() < 1e-9);
        }
        assert_relative_eq!(mi.permanent_level, 0.3);
    }

    #[test]
    fn permanent_impact_closed_form() {
        let spec = spec_with(exp_block(0.03, 0.05, false), exp_block(0.05, 0.1, true), exp_block(0.1, 0.5, true), 0.25);
        let n = spec.channel_norms();
        let expected = 0.25 * (1.0 - n.a_minus) / n.delta_determinant();
        assert_relative_eq!(permanent_impact(&spec).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn impact_is_odd_and_linear() {
        let spec = spec_with(exp_block(0.2, 1.0, false), exp_block(0.2, 1.0, true), exp_block(0.1, 1.0, true), 0.3);
        let flow = meta_order_flow(2.0, Side::Buy, 1.0, 0.01).unwrap();
        let a = market_impact_profile(&spec, &flow, 15.0).unwrap();
        let b = market_impact_profile(&spec, &flow.flipped(), 15.0).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x + y).abs() < 1e-14);
        }
        let tail = *a.values.last().unwrap();
        assert_relative_eq!(tail, a.permanent_level, max_relative = 1e-3);
    }

    #[test]
    fn response_with_only_impulsive_impact() {
        let z = KernelBlock::zero(0.01, 20.0).unwrap();
        let spec = spec_with(z.clone(), z.clone(), z, 0.4);
        let r = response_function(&spec, 5.0).unwrap();
        for v in &r.values {
            assert!((v - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn meta_order_has_requested_mass() {
        let f = meta_order_flow(1.0, Side::Buy, 1.0, 0.01).unwrap();
        assert_relative_eq!(f.net_mass(), 1.0, max_relative = 1e-12);
        let f = meta_order_flow(0.015, Side::Sell, 2.0, 0.01).unwrap();
        assert_relative_eq!(f.net_mass(), -0.03, max_relative = 1e-9);
    }
}
