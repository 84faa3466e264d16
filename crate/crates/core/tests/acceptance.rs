//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line with the
//! measured quantities, then asserts.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use hawkes4d::analytics::{
    empirical_autocov, full_cov_matrix, powerlaw_fit, price_correlation_trade_time, theoretical_autocov,
    trade_sign_correlation, Channel, Curve, CurveMeta,
};
use hawkes4d::estimator::{
    analytic_g, analytic_g_direct, binned_kernels, estimate_g, estimation_error, solve_fredholm, FredholmOptions,
};
use hawkes4d::impact::{market_impact_profile, meta_order_flow, permanent_impact, response_function};
use hawkes4d::io::load_spec;
use hawkes4d::model::{mean_intensity, stability_eigen_norms, AgentFlow, AgentOrder, ChannelNorms, Side};
use hawkes4d::simulator::{simulate, EventStream, SimulationConfig};
use hawkes4d::{KernelBlock, KernelMatrix, KernelShape, ModelSpec};
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)
}

fn load(name: &str) -> ModelSpec {
    load_spec(&spec_path(name), None).expect("spec loads")
}

fn report(n: u32, pass: bool, detail: String) {
    // written to the raw handle so the line shows even when the harness captures output
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn run(spec: &ModelSpec, horizon: f64, seed: u64) -> EventStream {
    simulate(spec, &SimulationConfig::new(horizon, seed)).expect("simulation runs")
}

// ---------------------------------------------------------------- 1

fn norms_from_blocks(t: (f64, f64), n: (f64, f64), i: (f64, f64), f: (f64, f64)) -> ChannelNorms {
    ChannelNorms {
        a_plus: t.0 + t.1,
        b_plus: n.0 + n.1,
        i_plus: i.0 + i.1,
        f_plus: f.0 + f.1,
        a_minus: t.0 - t.1,
        b_minus: n.0 - n.1,
        i_minus: i.0 - i.1,
        f_minus: f.0 - f.1,
    }
}

/// Spectral radius of the full 4×4 norm matrix, independent of the channel reduction.
fn full_spectral_radius(t: (f64, f64), n: (f64, f64), i: (f64, f64), f: (f64, f64)) -> f64 {
    let m = Matrix4::new(
        t.0, t.1, f.0, f.1, //
        t.1, t.0, f.1, f.0, //
        i.0, i.1, n.0, n.1, //
        i.1, i.0, n.1, n.0,
    );
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn criterion_1_stability_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut agree, mut h1_ok, mut stable_count, mut boundary) = (0, 0, 0, 0);
    let total = 1000;
    for case in 0..total {
        let mut pair = |hi: f64| (rng.gen_range(0.0..hi), rng.gen_range(0.0..hi));
        let t = pair(0.7);
        let n = pair(0.7);
        let mut i = pair(1.0);
        let mut f = pair(1.0);
        // every third case is pushed to within ±1e-6 of the sum-channel boundary
        if case % 3 == 0 {
            let (a, b) = (t.0 + t.1, n.0 + n.1);
            let target = (1.0 - a) * (1.0 - b) + if case % 2 == 0 { 1e-6 } else { -1e-6 };
            let c = (i.0 + i.1) * (f.0 + f.1);
            if c > 0.0 && target > 0.0 {
                let s = (target / c).sqrt();
                i = (i.0 * s, i.1 * s);
                f = (f.0 * s, f.1 * s);
                boundary += 1;
            }
        }
        let norms = norms_from_blocks(t, n, i, f);
        let closed = norms.report();
        let (eigen_stable, _) = stability_eigen_norms(&norms);
        let oracle = full_spectral_radius(t, n, i, f) < 1.0;
        if closed.stable == eigen_stable && closed.stable == oracle {
            agree += 1;
        }
        if closed.stable {
            stable_count += 1;
            if closed.h1_holds {
                h1_ok += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        agree == total && h1_ok == stable_count && secs < 10.0,
        format!("agreement {agree}/{total}, (H1) {h1_ok}/{stable_count} stable, {boundary} near-boundary, {secs:.2}s"),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_mean_intensity() {
    let start = Instant::now();
    let spec = load("mean_reverting.json");
    let (lt, ln) = mean_intensity(&spec).unwrap();
    let ev = run(&spec, 1e6, 2);
    let r = ev.rates();
    let rel = |x: f64, y: f64| (x - y).abs() / y;
    let errs = [rel(r[0], 1.0 / 3.0), rel(r[1], 1.0 / 3.0), rel(r[2], 1.0 / 6.0), rel(r[3], 1.0 / 6.0)];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        worst < 0.02 && secs < 120.0,
        format!("rates {r:.5?} vs (1/3, 1/6), worst relative error {worst:.4}, closed form ({lt:.6}, {ln:.6}), {secs:.1}s"),
    );
}

// ---------------------------------------------------------------- 3

fn without_lag_zero(c: &Curve) -> Curve {
    let mut out = c.clone();
    out.abscissa.remove(0);
    out.values.remove(0);
    out
}

#[test]
fn criterion_3_autocorrelation_curves() {
    let start = Instant::now();
    let spec = load("mean_reverting.json");
    let (lt, _) = mean_intensity(&spec).unwrap();
    let ev = run(&spec, 3e5 / (2.0 * lt), 3);
    let h = 10.0;
    let lags: Vec<f64> = (0..=20).map(|k| k as f64 * h).collect();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut amp = [0.0; 2];
    for (slot, channel) in [Channel::Trade, Channel::Price].into_iter().enumerate() {
        let theory = without_lag_zero(&theoretical_autocov(&spec, h, &lags, channel).unwrap());
        let emp = without_lag_zero(&empirical_autocov(&ev, h, &lags, channel).unwrap());
        let rms = emp.rms_difference(&theory).unwrap();
        let max = theory.max_abs();
        amp[slot] = max;
        pass &= rms < 0.05 * max;
        lines.push(format!("{channel:?} rms {rms:.2e} vs 5% of max {:.2e}", 0.05 * max));
    }
    // "an order of magnitude": within half a decade of 10
    let ratio = amp[0] / amp[1];
    pass &= (ratio.log10() - 1.0).abs() <= 0.5;
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        pass,
        format!("{} trades, h {h}s; {}; trade/price amplitude {ratio:.1}, {secs:.1}s", ev.trade_count(), lines.join("; ")),
    );
}

// ---------------------------------------------------------------- 4

/// Largest pointwise error of each estimated kernel, relative to its own peak
/// (to the smallest nonzero peak for kernels that are identically zero).
fn worst_relative_error(truth: &KernelMatrix, est: &KernelMatrix) -> f64 {
    let peaks: Vec<f64> = (0..16)
        .map(|e| truth.kernel(e / 4, e % 4).samples().iter().cloned().fold(0.0, f64::max))
        .collect();
    let smallest = peaks.iter().cloned().filter(|&p| p > 0.0).fold(f64::INFINITY, f64::min);
    (0..16)
        .map(|e| {
            let (x, y) = (truth.kernel(e / 4, e % 4), est.kernel(e / 4, e % 4));
            let err = x.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            err / if peaks[e] > 0.0 { peaks[e] } else { smallest }
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_4_fredholm_round_trip() {
    let start = Instant::now();
    let spec = load("exponential_four_kernel.json");
    let (width, t_max) = (0.1, 100.0);
    let g = analytic_g(&spec, width, t_max).unwrap();
    let sol = solve_fredholm(&g, FredholmOptions::default()).unwrap();
    let truth = binned_kernels(&spec.phi, width, g.bin_count()).unwrap();
    let worst = worst_relative_error(&truth, &sol.kernels);
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        worst < 0.01 && secs < 30.0,
        format!("max error {:.3}% of peak, pivot ratio {:.1e}, {secs:.1}s", 100.0 * worst, sol.pivot_ratio),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_error_scaling() {
    let start = Instant::now();
    let spec = load("exponential_four_kernel.json");
    let (lt, ln) = mean_intensity(&spec).unwrap();
    let total_rate = 2.0 * (lt + ln);
    let (width, t_max) = (0.5, 60.0);
    let count = (t_max / width) as usize;
    let truth = binned_kernels(&spec.phi, width, count).unwrap();
    let sizes = [1e3, 3e3, 1e4, 3e4, 1e5];
    let seeds = 50;
    let mut mean_err = Vec::new();
    for (s, &ne) in sizes.iter().enumerate() {
        let mut acc = 0.0;
        for seed in 0..seeds {
            let ev = run(&spec, ne / total_rate, 1000 * s as u64 + seed);
            let g = estimate_g(&ev, width, t_max).unwrap();
            let sol = solve_fredholm(&g, FredholmOptions::default()).unwrap();
            acc += estimation_error(&truth, &sol.kernels).unwrap();
        }
        mean_err.push(acc / seeds as f64);
    }
    let xs: Vec<f64> = sizes.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = mean_err.iter().map(|y| y.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let bias = estimation_error(&truth, &solve_fredholm(&analytic_g(&spec, width, t_max).unwrap(), FredholmOptions::default()).unwrap().kernels).unwrap();
    let secs = start.elapsed().as_secs_f64();
    report(
        5,
        (slope + 1.0).abs() <= 0.15,
        format!("slope {slope:.3}, errors {mean_err:?}, noise-free error {bias:.2e}, {seeds} seeds, {secs:.0}s"),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_impact_shape() {
    let spec = load("power_law_meta_order.json");
    let duration = 10.0;
    let flow = meta_order_flow(duration, Side::Buy, 1.0 / duration, spec.grid_step()).unwrap();
    let profile = market_impact_profile(&spec, &flow, 100.0 * duration).unwrap();
    let curve = Curve::new(profile.times.clone(), profile.values.clone(), CurveMeta::default()).unwrap();
    let short = powerlaw_fit(&curve, (duration / 100.0, duration / 3.0)).unwrap();
    let long = powerlaw_fit(&curve, (3.0 * duration, 100.0 * duration)).unwrap();
    let nu = 0.2;
    let closed = permanent_impact(&spec).unwrap() * flow.net_mass();
    let tail = *profile.values.last().unwrap();
    let tail_err = (tail - closed).abs() / closed.abs();
    let pass = (short.exponent - (1.0 - nu)).abs() <= 0.1 && (long.exponent + nu).abs() <= 0.1 && tail_err < 0.01;
    report(
        6,
        pass,
        format!(
            "short slope {:.3} (target {:.1}±0.1), long slope {:.3} (target {:.1}±0.1), MI at 100T {tail:.5} vs closed form {closed:.5} ({:.2}%)",
            short.exponent,
            1.0 - nu,
            long.exponent,
            -nu,
            100.0 * tail_err
        ),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_7_trade_sign_memory() {
    let start = Instant::now();
    let spec = load("power_law_empirical.json");
    let (lt, _) = mean_intensity(&spec).unwrap();
    let trade_rate = 2.0 * lt;
    // Fit window: the two-decade span where the model's own trade autocovariance
    // is closest to the target exponent, chosen from theory before simulating.
    let phys: Vec<f64> = (0..=27).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
    let theory = theoretical_autocov(&spec, 0.1, &phys, Channel::Trade).unwrap();
    let (lo, theory_exp) = [1.0, 1.5, 2.0, 3.0, 5.0]
        .iter()
        .map(|&a| (a, powerlaw_fit(&theory, (a, 100.0 * a)).unwrap().exponent))
        .min_by(|x, y| (x.1 + 0.6).abs().total_cmp(&(y.1 + 0.6).abs()))
        .unwrap();
    // trading-time lag n corresponds to physical lag n / trade_rate
    let window = (lo * trade_rate, 100.0 * lo * trade_rate);
    let ev = run(&spec, 5e5 / trade_rate, 7);
    let lags: Vec<usize> = (0..=60)
        .map(|k| (10f64.powf(k as f64 / 20.0)).round() as usize)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let signs = trade_sign_correlation(&ev, &lags).unwrap();
    let fit = powerlaw_fit(&signs, window).unwrap();
    let price_lags: Vec<usize> = (0..=30).collect();
    let price = price_correlation_trade_time(&ev, 1, &price_lags).unwrap();
    let beyond = price.values[6..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    report(
        7,
        (fit.exponent + 0.6).abs() <= 0.1 && beyond < 0.05,
        format!(
            "{} trades, sign exponent {:.3} over trade lags [{:.1}, {:.0}] (r² {:.3}; model exponent {theory_exp:.3} in physical time), \
             max |price corr| beyond lag 5 {beyond:.4}, {secs:.0}s",
            ev.trade_count(),
            fit.exponent,
            window.0,
            window.1,
            fit.r_squared
        ),
    );
}

// ---------------------------------------------------------------- 8

fn trivial_impact_spec(trade: KernelShape) -> ModelSpec {
    let dt = 0.01;
    let end = 50.0;
    let phi = KernelMatrix::new(
        KernelBlock::from_shapes(trade, KernelShape::exponential(0.02, 0.5), dt, end).unwrap(),
        KernelBlock::from_shapes(KernelShape::Dirac { mass: 0.3 }, KernelShape::Zero, dt, end).unwrap(),
        KernelBlock::zero(dt, end).unwrap(),
        KernelBlock::zero(dt, end).unwrap(),
    )
    .unwrap();
    ModelSpec::new(0.1, phi).unwrap()
}

#[test]
fn criterion_8_trivial_impact() {
    let spec = trivial_impact_spec(KernelShape::exponential(0.1, 0.2));
    let unit = AgentFlow { orders: vec![AgentOrder { time: 0.0, side: Side::Buy, mass: 1.0 }], ..Default::default() };
    let mi = market_impact_profile(&spec, &unit, 20.0).unwrap();
    let mi_dev = mi.values.iter().map(|v| (v - 0.3).abs()).fold(0.0, f64::max);
    // the response identity needs the trade kernels switched off too
    let quiet = trivial_impact_spec(KernelShape::Zero);
    let quiet = ModelSpec { phi: KernelMatrix { trade: KernelBlock::zero(0.01, 50.0).unwrap(), ..quiet.phi }, ..quiet };
    let r = response_function(&quiet, 20.0).unwrap();
    let r_dev = r.values.iter().map(|v| (v - 0.3).abs()).fold(0.0, f64::max);
    let r_exciting = response_function(&spec, 20.0).unwrap();
    let r_exciting_dev = r_exciting.values.iter().map(|v| (v - 0.3).abs()).fold(0.0, f64::max);
    report(
        8,
        mi_dev < 1e-9 && r_dev < 1e-9,
        format!(
            "max |MI − I| {mi_dev:.1e} (self-exciting trades), max |R − I| {r_dev:.1e} (no trade kernels); with self-exciting trades R deviates by {r_exciting_dev:.2e}"
        ),
    );
}

// ---------------------------------------------------------------- 9

fn oracle_specs() -> Vec<(&'static str, ModelSpec)> {
    let dt = 0.01;
    let end = 60.0;
    let block = |s: KernelShape, c: KernelShape| KernelBlock::from_shapes(s, c, dt, end).unwrap();
    let e = KernelShape::exponential;
    let mixed = KernelMatrix::new(
        block(e(0.2, 1.0), e(0.05, 0.5)),
        block(KernelShape::Dirac { mass: 0.2 }, e(0.02, 1.0)),
        block(e(0.05, 2.0), e(0.2, 1.0)),
        block(e(0.1, 1.0), e(0.3, 0.8)),
    )
    .unwrap();
    let power = KernelMatrix::new(
        block(KernelShape::powerlaw_with_norm(0.6, 0.05, 1.5, dt, end).unwrap(), KernelShape::Zero),
        block(e(0.5, 5.0), KernelShape::Zero),
        block(KernelShape::Zero, e(0.1, 1.0)),
        block(KernelShape::Zero, KernelShape::powerlaw_with_norm(0.3, 0.05, 1.3, dt, end).unwrap()),
    )
    .unwrap();
    let mut fig2 = load("mean_reverting.json");
    fig2.phi = KernelMatrix::new(
        block(e(0.03, 0.05), KernelShape::Zero),
        block(KernelShape::Dirac { mass: 0.25 }, KernelShape::Zero),
        block(KernelShape::Zero, e(0.1, 0.5)),
        block(KernelShape::Zero, e(0.05, 0.1)),
    )
    .unwrap();
    vec![
        ("mixed", ModelSpec::new(0.2, mixed).unwrap()),
        ("power_law", ModelSpec::new(0.1, power).unwrap()),
        ("mean_reverting", fig2),
    ]
}

#[test]
fn criterion_9_cross_module_oracle() {
    let mut worst_g: f64 = 0.0;
    let mut worst_r: f64 = 0.0;
    let mut lines = Vec::new();
    for (name, spec) in oracle_specs() {
        spec.require_stable().unwrap();
        let dt = spec.grid_step();
        let t_max = 10.0;
        let g = analytic_g(&spec, dt, t_max).unwrap();
        let k = g.bin_count();
        // one-step windows make the windowed covariance a point sample of Λ_j·g^{ij}
        let lags: Vec<f64> = (1..k).map(|m| m as f64 * dt).collect();
        let cov = full_cov_matrix(&spec, dt, &lags).unwrap();
        let mut dev_g: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                for (m, c) in cov[i][j].values.iter().enumerate() {
                    let from_cov = c / (dt * g.rates[j]);
                    dev_g = dev_g.max((from_cov - g.positive[i][j][m + 1]).abs());
                }
            }
        }
        // response against the integrated g combination from the direct 4×4 route
        let direct = analytic_g_direct(&spec, dt, t_max).unwrap();
        let r = response_function(&spec, t_max).unwrap();
        let mut acc = 0.0;
        let mut dev_r: f64 = 0.0;
        for (m, rv) in r.values.iter().enumerate().take(k) {
            acc += dt * (direct.positive[3][1][m] - direct.positive[2][1][m]);
            dev_r = dev_r.max((acc - rv).abs());
        }
        worst_g = worst_g.max(dev_g);
        worst_r = worst_r.max(dev_r);
        lines.push(format!("{name}: g {dev_g:.1e}, R {dev_r:.1e}"));
    }
    report(9, worst_g < 1e-8 && worst_r < 1e-8, lines.join("; "));
}

// ---------------------------------------------------------------- 10

/// Kolmogorov-Smirnov distance of unit-rate-normalized gaps from Exp(1).
fn ks_exponential(times: &[f64], rate: f64) -> f64 {
    let mut gaps: Vec<f64> = times.windows(2).map(|w| (w[1] - w[0]) * rate).collect();
    gaps.sort_by(|a, b| a.total_cmp(b));
    let n = gaps.len() as f64;
    gaps.iter()
        .enumerate()
        .map(|(k, &x)| {
            let cdf = 1.0 - (-x).exp();
            (cdf - k as f64 / n).abs().max(((k + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_10_poisson_degeneration() {
    let (mu, nu, horizon) = (0.5, 0.25, 2e5);
    let mut spec = ModelSpec::new(mu, KernelMatrix::zero(0.01, 10.0).unwrap()).unwrap();
    spec.price_baseline = nu;
    let ev = run(&spec, horizon, 10);
    let rates = [mu, mu, nu, nu];
    // 1% critical value of the KS statistic is 1.63/√n
    let ks_ok = ev
        .components()
        .iter()
        .zip(rates)
        .all(|(c, r)| ks_exponential(c, r) * (c.len() as f64).sqrt() < 1.63);

    let h = 1.0;
    let lags: Vec<f64> = (1..=20).map(|k| k as f64).collect();
    let mut autocov_ok = true;
    for (channel, rate) in [(Channel::Trade, mu), (Channel::Price, nu)] {
        let c = empirical_autocov(&ev, h, &lags, channel).unwrap();
        // each lag averages independent products with sd 2·rate·h/√windows, divided by h
        let sd = 2.0 * rate * (h / horizon).sqrt();
        autocov_ok &= c.max_abs() < 5.0 * sd;
    }

    let (width, t_max) = (1.0, 20.0);
    let g = estimate_g(&ev, width, t_max).unwrap();
    let counts = ev.counts();
    let mut g_ok = true;
    let mut worst_sd: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let sd = (rates[i] / (counts[j] as f64 * width)).sqrt();
            worst_sd = worst_sd.max(sd);
            g_ok &= g.positive[i][j].iter().all(|v| v.abs() < 5.0 * sd);
        }
    }
    let sol = solve_fredholm(&g, FredholmOptions::default()).unwrap();
    let peak = (0..16)
        .map(|e| sol.kernels.kernel(e / 4, e % 4).samples().iter().cloned().fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let kernels_ok = peak < 5.0 * worst_sd;
    report(
        10,
        ks_ok && autocov_ok && g_ok && kernels_ok,
        format!(
            "KS {ks_ok}, autocov {autocov_ok}, g {g_ok} (max |g| {:.2e}), kernels {kernels_ok} (peak {peak:.2e} vs bound {:.2e})",
            g.max_abs(),
            5.0 * worst_sd
        ),
    );
}
