//! Second-order statistics: increment autocovariances (closed form and empirical),
//! the full covariance matrix, signature plots, diffusive variance and power-law fits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ModelSpec;
use crate::simulator::{cum_trade_path, price_path, EventStream, PathCurve};
use crate::spectrum::ModelSpectrum;

/// Which increments a curve describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// `X = N⁺ − N⁻`
    Price,
    /// `U = T⁺ − T⁻`
    Trade,
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "price" => Ok(Channel::Price),
            "trade" => Ok(Channel::Trade),
            other => Err(format!("unknown channel {other:?} (expected price or trade)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveMeta {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_h: Option<f64>,
    /// weight of the Dirac at lag 0 in the unwindowed covariance density
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau0_mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
}

/// A sampled function of lag, scale or time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub abscissa: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: CurveMeta,
}

impl Curve {
    pub fn new(abscissa: Vec<f64>, values: Vec<f64>, meta: CurveMeta) -> Result<Self> {
        if abscissa.len() != values.len() {
            return Err(invalid("abscissa and values differ in length"));
        }
        if abscissa.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("curve abscissa must be strictly increasing"));
        }
        Ok(Self { abscissa, values, meta })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Values divided by `norm` (e.g. the lag-0 variance).
    pub fn normalized(&self, norm: f64) -> Self {
        Self { values: self.values.iter().map(|v| v / norm).collect(), ..self.clone() }
    }

    /// Root-mean-square difference with another curve on the same abscissa.
    pub fn rms_difference(&self, other: &Curve) -> Result<f64> {
        if self.abscissa.len() != other.abscissa.len() {
            return Err(Error::GridMismatch("curves have different lengths".into()));
        }
        let n = self.values.len().max(1) as f64;
        let ss: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok((ss / n).sqrt())
    }
}

fn check_lags(h: f64, lags: &[f64]) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("scale h must be positive, got {h}")));
    }
    if lags.is_empty() || lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("lag grid must be nonempty and strictly increasing"));
    }
    Ok(())
}

fn spectrum_for(spec: &ModelSpec, h: f64, lags: &[f64]) -> Result<ModelSpectrum> {
    let reach = lags.iter().fold(0.0f64, |m, l| m.max(l.abs())) + h;
    ModelSpectrum::for_period(spec, 4.0 * reach)
}

/// DFT (times dt) of the triangle `(1 − |t|/h)⁺` sampled on the circular grid.
fn triangle_transform(ms: &ModelSpectrum, h: f64) -> Vec<Complex64> {
    let n = ms.len();
    let dt = ms.grid.grid_step();
    let mut tri = vec![0.0; n];
    for (k, v) in tri.iter_mut().enumerate() {
        let lag = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 } * dt;
        *v = (1.0 - lag.abs() / h).max(0.0);
    }
    ms.grid.forward(&tri).into_iter().map(|v| v * dt).collect()
}

/// Linear interpolation of circular samples at arbitrary lags.
fn sample_circular(values: &[f64], dt: f64, lags: &[f64]) -> Vec<f64> {
    let n = values.len() as i64;
    let at = |k: i64| values[k.rem_euclid(n) as usize];
    lags.iter()
        .map(|&tau| {
            let x = tau / dt;
            let k = x.floor();
            let frac = x - k;
            if frac < 1e-9 {
                at(k as i64)
            } else {
                at(k as i64) * (1.0 - frac) + at(k as i64 + 1) * frac
            }
        })
        .collect()
}

fn channel_density(ms: &ModelSpectrum, j: usize, channel: Channel) -> f64 {
    let (lt, ln) = ms.rates;
    let p = ms.delta(j);
    match channel {
        Channel::Price => p.price_density(lt, ln),
        Channel::Trade => p.trade_density(lt, ln),
    }
}

/// `C^{(h)}_τ = (1/h) Cov(Y_{t+h} − Y_t, Y_{t+τ+h} − Y_{t+τ})` from the closed-form spectrum
/// `2·ĝ^{(h)}·S`, with `Y` the price or the cumulative trade imbalance.
pub fn theoretical_autocov(spec: &ModelSpec, h: f64, lags: &[f64], channel: Channel) -> Result<Curve> {
    check_lags(h, lags)?;
    let ms = spectrum_for(spec, h, lags)?;
    let tri = triangle_transform(&ms, h);
    let values: Vec<Complex64> = (0..ms.len()).map(|j| tri[j] * (2.0 * channel_density(&ms, j, channel))).collect();
    let circ = ms.to_time(&values);
    let atoms = ms.delta_atoms();
    let (lt, ln) = ms.rates;
    let tau0 = 2.0
        * match channel {
            Channel::Price => atoms.price_density(lt, ln),
            Channel::Trade => atoms.trade_density(lt, ln),
        };
    Curve::new(
        lags.to_vec(),
        sample_circular(&circ, ms.grid.grid_step(), lags),
        CurveMeta {
            kind: format!("{}_autocov_theoretical", channel_name(channel)),
            scale_h: Some(h),
            tau0_mass: Some(tau0),
            sample_size: None,
        },
    )
}

fn channel_name(c: Channel) -> &'static str {
    match c {
        Channel::Price => "price",
        Channel::Trade => "trade",
    }
}

/// Step path values at increasing times, by a forward sweep.
fn sweep(path: &PathCurve, times: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut k = 0;
    times
        .map(|t| {
            while k + 1 < path.times.len() && path.times[k + 1] <= t {
                k += 1;
            }
            if path.times[k] <= t {
                path.values[k]
            } else {
                0.0
            }
        })
        .collect()
}

/// Sample autocovariance of `h`-increments over windows starting at `k·h`, divided by `h`.
pub fn empirical_autocov(events: &EventStream, h: f64, lags: &[f64], channel: Channel) -> Result<Curve> {
    check_lags(h, lags)?;
    if lags[0] < 0.0 {
        return Err(invalid("empirical autocovariance lags must be >= 0"));
    }
    let path = match channel {
        Channel::Price => price_path(events),
        Channel::Trade => cum_trade_path(events),
    };
    let max_lag = *lags.last().unwrap();
    let windows = ((events.horizon - max_lag - h) / h).floor();
    if !(windows >= 10.0) {
        return Err(Error::InsufficientData(format!(
            "horizon {} too short for scale {h} and lag {max_lag}",
            events.horizon
        )));
    }
    let w = windows as usize;
    let inc = |shift: f64| -> Vec<f64> {
        let x = sweep(&path, (0..=w).map(|k| k as f64 * h + shift));
        let y = sweep(&path, (0..=w).map(|k| k as f64 * h + shift + h));
        x.iter().zip(&y).take(w).map(|(a, b)| b - a).collect()
    };
    let base = inc(0.0);
    let mean0 = base.iter().sum::<f64>() / w as f64;
    let values = lags
        .iter()
        .map(|&tau| {
            let shifted = inc(tau);
            let mean1 = shifted.iter().sum::<f64>() / w as f64;
            let cross: f64 = base.iter().zip(&shifted).map(|(a, b)| (a - mean0) * (b - mean1)).sum();
            cross / (w as f64 - 1.0) / h
        })
        .collect();
    Curve::new(
        lags.to_vec(),
        values,
        CurveMeta {
            kind: format!("{}_autocov_empirical", channel_name(channel)),
            scale_h: Some(h),
            tau0_mass: None,
            sample_size: Some(w),
        },
    )
}

/// `C^{(h),ij}_τ = (1/h) Cov(P^i_{t+τ+h} − P^i_{t+τ}, P^j_{t+h} − P^j_t)` for all 16 pairs.
pub fn full_cov_matrix(spec: &ModelSpec, h: f64, lags: &[f64]) -> Result<Vec<Vec<Curve>>> {
    check_lags(h, lags)?;
    let ms = spectrum_for(spec, h, lags)?;
    let tri = triangle_transform(&ms, h);
    let n = ms.len();
    let covs: Vec<[[Complex64; 4]; 4]> = (0..n).map(|j| ms.covariance(j)).collect();
    let mut out = Vec::with_capacity(4);
    for p in 0..4 {
        let mut row = Vec::with_capacity(4);
        for q in 0..4 {
            let values: Vec<Complex64> = (0..n).map(|j| tri[j] * covs[j][p][q]).collect();
            let circ = ms.to_time(&values);
            row.push(Curve::new(
                lags.to_vec(),
                sample_circular(&circ, ms.grid.grid_step(), lags),
                CurveMeta { kind: format!("cov_{p}{q}"), scale_h: Some(h), tau0_mass: None, sample_size: None },
            )?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Large-scale volatility `σ_X` of the price.
pub fn diffusive_variance(spec: &ModelSpec) -> Result<f64> {
    spec.require_stable()?;
    let n = spec.channel_norms();
    let (lt, ln) = crate::model::mean_intensity(spec)?;
    let den = n.delta_determinant();
    Ok((2.0 * (lt * n.i_minus * n.i_minus + ln * (1.0 - n.a_minus).powi(2))).sqrt() / den)
}

/// `E((X_h − X_0)²)/h` against `h` from the closed-form covariance density.
pub fn signature_plot_analytic(spec: &ModelSpec, scales: &[f64]) -> Result<Curve> {
    check_lags(1.0, scales)?;
    if scales[0] <= 0.0 {
        return Err(invalid("scales must be positive"));
    }
    let hmax = *scales.last().unwrap();
    let ms = ModelSpectrum::for_period(spec, 4.0 * hmax)?;
    let values: Vec<Complex64> = (0..ms.len()).map(|j| Complex64::new(2.0 * channel_density(&ms, j, Channel::Price), 0.0)).collect();
    let density = ms.to_time(&values);
    let dt = ms.grid.grid_step();
    let n = density.len();
    let out = scales
        .iter()
        .map(|&h| {
            let mut acc = density[0];
            let mut k = 1;
            while (k as f64) * dt < h && k < n / 2 {
                let w = 1.0 - k as f64 * dt / h;
                acc += w * (density[k] + density[n - k]);
                k += 1;
            }
            acc * dt
        })
        .collect();
    Curve::new(
        scales.to_vec(),
        out,
        CurveMeta { kind: "signature_analytic".into(), scale_h: None, tau0_mass: None, sample_size: None },
    )
}

/// Mean of `(X_{(k+1)h} − X_{kh})²/h` over non-overlapping windows.
pub fn signature_plot_empirical(events: &EventStream, scales: &[f64]) -> Result<Curve> {
    check_lags(1.0, scales)?;
    let path = price_path(events);
    let mut values = Vec::with_capacity(scales.len());
    for &h in scales {
        let w = (events.horizon / h).floor() as usize;
        if w < 2 {
            return Err(Error::InsufficientData(format!("scale {h} exceeds half the horizon")));
        }
        let x = sweep(&path, (0..=w).map(|k| k as f64 * h));
        let ss: f64 = x.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum();
        values.push(ss / w as f64 / h);
    }
    Curve::new(
        scales.to_vec(),
        values,
        CurveMeta { kind: "signature_empirical".into(), scale_h: None, tau0_mass: None, sample_size: None },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    /// false when `r² < 0.9`
    pub reliable: bool,
}

/// Least-squares fit of `log y = log A + β log x` over abscissae in `[lo, hi]`.
pub fn powerlaw_fit(curve: &Curve, range: (f64, f64)) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = curve
        .abscissa
        .iter()
        .zip(&curve.values)
        .filter(|(x, _)| **x >= range.0 && **x <= range.1)
        .map(|(&x, &y)| (x, y))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points in the fit range", pts.len())));
    }
    if pts.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(invalid("power-law fit needs positive abscissae and values"));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(PowerLawFit { exponent: slope, amplitude: intercept.exp(), r_squared: r2, reliable: r2 >= 0.9 })
}

pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Relabels trade-count lags `n` as times `n/Λ^T`.
pub fn trading_time_to_seconds(lags: &[f64], trade_rate: f64) -> Vec<f64> {
    lags.iter().map(|n| n / trade_rate).collect()
}

/// Autocorrelation of trade signs (`+1` at the ask) in trade time, at the given lags.
pub fn trade_sign_correlation(events: &EventStream, lags: &[usize]) -> Result<Curve> {
    let signs: Vec<f64> = events
        .merged()
        .into_iter()
        .filter_map(|(_, ty)| match ty.index() {
            0 => Some(-1.0),
            1 => Some(1.0),
            _ => None,
        })
        .collect();
    autocorrelation(&signs, lags, "trade_sign_correlation")
}

/// Autocorrelation of the price change between consecutive blocks of `block` trades.
pub fn price_correlation_trade_time(events: &EventStream, block: usize, lags: &[usize]) -> Result<Curve> {
    if block == 0 {
        return Err(invalid("block size must be positive"));
    }
    let mut trade_times: Vec<f64> = events.t_minus.iter().chain(&events.t_plus).copied().collect();
    trade_times.sort_by(|a, b| a.total_cmp(b));
    let path = price_path(events);
    let marks: Vec<f64> = trade_times.iter().step_by(block).copied().collect();
    let x = sweep(&path, marks.iter().copied());
    let inc: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
    autocorrelation(&inc, lags, "price_correlation_trade_time")
}

fn autocorrelation(series: &[f64], lags: &[usize], kind: &str) -> Result<Curve> {
    let max = lags.iter().copied().max().unwrap_or(0);
    if series.len() < max + 10 {
        return Err(Error::InsufficientData(format!("{} samples for lag {max}", series.len())));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::InsufficientData("constant series".into()));
    }
    let values = lags
        .iter()
        .map(|&l| {
            let m = series.len() - l;
            series[..m].iter().zip(&series[l..]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / m as f64 / var
        })
        .collect();
    Curve::new(
        lags.iter().map(|&l| l as f64).collect(),
        values,
        CurveMeta { kind: kind.into(), scale_h: None, tau0_mass: None, sample_size: Some(series.len()) },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelBlock, KernelShape};
    use crate::model::KernelMatrix;
    use approx::assert_relative_eq;

    fn impulsive_only(mu: f64, mass: f64) -> ModelSpec {
        let dt = 0.01;
        let z = KernelBlock::zero(dt, 5.0).unwrap();
        let imp = KernelBlock::from_shapes(KernelShape::Dirac { mass }, KernelShape::Zero, dt, 5.0).unwrap();
        ModelSpec::new(mu, KernelMatrix::new(z.clone(), imp, z.clone(), z).unwrap()).unwrap()
    }

    #[test]
    fn flat_trade_spectrum_has_no_correlation_beyond_h() {
        let spec = impulsive_only(0.5, 0.3);
        let lags = [0.0, 0.5, 1.0, 2.0, 5.0];
        let c = theoretical_autocov(&spec, 1.0, &lags, Channel::Trade).unwrap();
        // C(τ) = 2Λ^T (1 − |τ|/h)⁺
        assert_relative_eq!(c.values[0], 1.0, max_relative = 1e-10);
        assert_relative_eq!(c.values[1], 0.5, max_relative = 1e-10);
        for v in &c.values[2..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn diffusive_variance_impulsive() {
        let (mu, i) = (0.5, 0.3);
        let s = diffusive_variance(&impulsive_only(mu, i)).unwrap();
        assert_relative_eq!(s, (2.0 * mu * i * (i + 1.0)).sqrt(), max_relative = 1e-12);
        let zero = ModelSpec::new(1.0, KernelMatrix::zero(0.01, 1.0).unwrap()).unwrap();
        assert_eq!(diffusive_variance(&zero).unwrap(), 0.0);
    }

    #[test]
    fn powerlaw_fit_exact() {
        let xs: Vec<f64> = (1..50).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-0.6)).collect();
        let c = Curve::new(xs, ys, CurveMeta::default()).unwrap();
        let fit = powerlaw_fit(&c, (1.0, 100.0)).unwrap();
        assert!((fit.exponent + 0.6).abs() < 1e-9);
        assert_relative_eq!(fit.amplitude, 3.0, max_relative = 1e-9);
        assert!(fit.reliable);
    }

    #[test]
    fn alternating_price_has_negative_lag_one_covariance() {
        let up: Vec<f64> = (0..200).map(|k| 2.0 * k as f64 + 0.5).collect();
        let down: Vec<f64> = (0..200).map(|k| 2.0 * k as f64 + 1.5).collect();
        let ev = EventStream::new([vec![], vec![], down, up], 400.0).unwrap();
        let c = empirical_autocov(&ev, 1.0, &[0.0, 1.0], Channel::Price).unwrap();
        assert!(c.values[0] > 0.9);
        assert!(c.values[1] < -0.9);
    }

    #[test]
    fn curve_requires_increasing_abscissa() {
        assert!(Curve::new(vec![1.0, 1.0], vec![0.0, 0.0], CurveMeta::default()).is_err());
    }
}
