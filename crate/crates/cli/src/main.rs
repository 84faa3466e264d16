use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use hawkes4d::analytics::{
    diffusive_variance, empirical_autocov, signature_plot_analytic, signature_plot_empirical, theoretical_autocov,
    Channel, Curve,
};
use hawkes4d::estimator::{estimate_g, solve_fredholm, FredholmOptions};
use hawkes4d::impact::{empirical_response, market_impact_profile, meta_order_flow, permanent_impact, response_function};
use hawkes4d::io::{
    ingest_events, load_spec, read_events, write_curve, write_events, write_gmatrix, write_impact, write_json,
    write_kernel_matrix, IngestOptions, SpecDocument,
};
use hawkes4d::model::{estimate_baseline, mean_intensity, Side};
use hawkes4d::simulator::{simulate, EventStream, SimulationConfig};
use hawkes4d::{Baseline, Error, ModelSpec};

#[derive(Parser, Debug)]
#[command(name = "hawkes4d", version, about = "Hawkes model of trades and mid-price moves")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// RNG seed
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// time horizon in seconds (meaning depends on the command)
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// kernel grid step in seconds, overriding the spec
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    /// largest lag in seconds
    #[arg(long, global = true)]
    t_max: Option<f64>,
    /// output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
enum Command {
    /// Simulate an event stream from a spec
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// width of the pulse that spreads Dirac kernels
        #[arg(long)]
        pulse_width: Option<f64>,
        /// simulate even when the spec is unstable
        #[arg(long)]
        allow_unstable: bool,
    },
    /// Report the stability conditions of a spec
    Stability {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Autocovariance and signature plot, analytic and/or empirical
    Analyze {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ChannelArg::Price)]
        channel: ChannelArg,
        /// increment scale in seconds
        #[arg(long, default_value_t = 1.0)]
        h: f64,
    },
    /// Nonparametric kernel estimation from events
    Estimate {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        bin_width: f64,
        /// skip averaging of the bisymmetric kernel pairs
        #[arg(long)]
        no_bisymmetry: bool,
    },
    /// Market impact profile of a meta-order
    Impact {
        #[arg(long)]
        spec: PathBuf,
        /// meta-order duration in seconds; the spec's agent flow is used when absent
        #[arg(long)]
        duration: Option<f64>,
        /// orders per second during the meta-order
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, value_enum, default_value_t = SideArg::Buy)]
        side: SideArg,
    },
    /// Price response to a buy trade, analytic and/or empirical
    Respond {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        /// number of empirical response times
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
    /// Convert trades and mid-prices into an event stream
    Ingest {
        #[arg(long)]
        trades: PathBuf,
        #[arg(long)]
        midprice: PathBuf,
        #[arg(long)]
        tick: Option<f64>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum ChannelArg {
    Price,
    Trade,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum SideArg {
    Buy,
    Sell,
}

impl From<ChannelArg> for Channel {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Price => Channel::Price,
            ChannelArg::Trade => Channel::Trade,
        }
    }
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Buy => Side::Buy,
            SideArg::Sell => Side::Sell,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    argv: Vec<String>,
    common: &'a Common,
    #[serde(flatten)]
    command: &'a Command,
    outputs: Vec<String>,
    summary: Value,
}

/// Files written by a command, relative to the output directory, plus a summary.
struct Outcome {
    outputs: Vec<String>,
    summary: Value,
}

type Result<T> = std::result::Result<T, Error>;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("--{name} must be positive and finite, got {v}")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            eprintln!("{}", json!({ "error": { "kind": "usage", "message": message.trim() } }));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}

fn error_json(e: &Error) -> Value {
    let mut body = json!({ "kind": e.kind(), "message": e.to_string() });
    match e {
        Error::Parse { line, .. } => body["line"] = json!(line),
        Error::Unstable(report) => body["report"] = serde_json::to_value(report).unwrap_or(Value::Null),
        _ => {}
    }
    json!({ "error": body })
}

fn run(cli: &Cli) -> Result<Value> {
    let c = &cli.common;
    fs::create_dir_all(&c.out)?;
    let outcome = match &cli.command {
        Command::Simulate { spec, pulse_width, allow_unstable } => cmd_simulate(c, spec, *pulse_width, *allow_unstable)?,
        Command::Stability { spec } => cmd_stability(c, spec)?,
        Command::Analyze { spec, events, channel, h } => {
            cmd_analyze(c, spec.as_deref(), events.as_deref(), (*channel).into(), *h)?
        }
        Command::Estimate { events, bin_width, no_bisymmetry } => cmd_estimate(c, events, *bin_width, !no_bisymmetry)?,
        Command::Impact { spec, duration, rate, side } => cmd_impact(c, spec, *duration, *rate, (*side).into())?,
        Command::Respond { spec, events, points } => cmd_respond(c, spec.as_deref(), events.as_deref(), *points)?,
        Command::Ingest { trades, midprice, tick } => cmd_ingest(c, trades, midprice, *tick)?,
    };
    let manifest = Manifest {
        tool: "hawkes4d",
        version: env!("CARGO_PKG_VERSION"),
        argv: std::env::args().collect(),
        common: c,
        command: &cli.command,
        outputs: outcome.outputs,
        summary: outcome.summary.clone(),
    };
    write_json(&c.out.join("manifest.json"), &manifest)?;
    Ok(outcome.summary)
}

fn spec_at(c: &Common, path: &Path) -> Result<ModelSpec> {
    load_spec(path, c.grid_step)
}

fn events_at(c: &Common, path: &Path) -> Result<EventStream> {
    read_events(path, c.horizon)
}

fn cmd_simulate(c: &Common, spec: &Path, pulse_width: Option<f64>, allow_unstable: bool) -> Result<Outcome> {
    let model = spec_at(c, spec)?;
    let horizon = positive("horizon", c.horizon.unwrap_or(3600.0))?;
    let mut config = SimulationConfig::new(horizon, c.seed);
    if let Some(w) = pulse_width {
        config.pulse_width = positive("pulse-width", w)?;
    }
    config.allow_unstable = allow_unstable;
    let events = simulate(&model, &config)?;
    write_events(&c.out.join("events.csv"), &events)?;
    let counts = events.counts();
    Ok(Outcome {
        outputs: vec!["events.csv".into()],
        summary: json!({
            "horizon": horizon,
            "counts": { "Tm": counts[0], "Tp": counts[1], "Nm": counts[2], "Np": counts[3] },
            "rates": events.rates(),
        }),
    })
}

fn cmd_stability(c: &Common, spec: &Path) -> Result<Outcome> {
    let model = spec_at(c, spec)?;
    let report = model.stability();
    write_json(&c.out.join("stability.json"), &report)?;
    let mut summary = serde_json::to_value(&report)?;
    if report.stable {
        let (trade, price) = mean_intensity(&model)?;
        summary["mean_intensity"] = json!({ "trade": trade, "price": price });
    }
    Ok(Outcome { outputs: vec!["stability.json".into()], summary })
}

/// Lags `0, h, 2h, …` up to `t_max`.
fn lag_grid(h: f64, t_max: f64) -> Vec<f64> {
    let n = (t_max / h).floor() as usize;
    (0..=n).map(|k| k as f64 * h).collect()
}

/// Log-spaced scales from `lo` to `hi`, ten per decade.
fn log_scales(lo: f64, hi: f64) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * 10.0).ceil().max(1.0) as usize;
    (0..=n).map(|k| lo * 10f64.powf(decades * k as f64 / n as f64)).collect()
}

/// Writes a curve and its metadata sidecar, recording both.
fn put_curve(c: &Common, outcome: &mut Outcome, name: &str, curve: &Curve) -> Result<()> {
    write_curve(&c.out.join(format!("{name}.csv")), curve)?;
    outcome.outputs.extend([format!("{name}.csv"), format!("{name}.json")]);
    Ok(())
}

fn cmd_analyze(c: &Common, spec: Option<&Path>, events: Option<&Path>, channel: Channel, h: f64) -> Result<Outcome> {
    if spec.is_none() && events.is_none() {
        return Err(invalid("analyze needs --spec and/or --events"));
    }
    let h = positive("h", h)?;
    let t_max = positive("t-max", c.t_max.unwrap_or(100.0))?;
    let lags = lag_grid(h, t_max);
    let scales = log_scales(h, t_max.max(h));
    let mut outcome = Outcome { outputs: Vec::new(), summary: json!({}) };
    if let Some(path) = spec {
        let model = spec_at(c, path)?;
        put_curve(c, &mut outcome, "autocov_theoretical", &theoretical_autocov(&model, h, &lags, channel)?)?;
        put_curve(c, &mut outcome, "signature_theoretical", &signature_plot_analytic(&model, &scales)?)?;
        outcome.summary["diffusive_variance"] = json!(diffusive_variance(&model)?);
    }
    if let Some(path) = events {
        let ev = events_at(c, path)?;
        put_curve(c, &mut outcome, "autocov_empirical", &empirical_autocov(&ev, h, &lags, channel)?)?;
        put_curve(c, &mut outcome, "signature_empirical", &signature_plot_empirical(&ev, &scales)?)?;
        outcome.summary["event_rates"] = json!(ev.rates());
    }
    Ok(outcome)
}

fn cmd_estimate(c: &Common, events: &Path, bin_width: f64, bisymmetry: bool) -> Result<Outcome> {
    let ev = events_at(c, events)?;
    let bin_width = positive("bin-width", bin_width)?;
    let t_max = positive("t-max", c.t_max.unwrap_or(100.0))?;
    let g = estimate_g(&ev, bin_width, t_max)?;
    write_gmatrix(&c.out.join("g"), &g)?;
    let sol = solve_fredholm(&g, FredholmOptions { enforce_bisymmetry: bisymmetry })?;
    let kernel_dir = c.out.join("kernels");
    write_kernel_matrix(&kernel_dir, &sol.kernels)?;
    let rates = ev.rates();
    let trade_rate = 0.5 * (rates[0] + rates[1]);
    let baseline = estimate_baseline(trade_rate, &sol.kernels)?;
    let support_end = g.bin_count() as f64 * bin_width;
    let doc = SpecDocument::with_tables(Baseline::Constant(baseline), bin_width, support_end);
    write_json(&kernel_dir.join("spec.json"), &doc)?;
    let report = json!({
        "baseline": baseline,
        "clipped_mass": sol.clipped_mass,
        "pivot_ratio": sol.pivot_ratio,
        "atom_candidates": sol.atom_candidates,
        "stability": sol.kernels.channel_norms().report(),
    });
    write_json(&c.out.join("fredholm.json"), &report)?;
    Ok(Outcome { outputs: vec!["g/".into(), "kernels/".into(), "fredholm.json".into()], summary: report })
}

fn cmd_impact(c: &Common, spec: &Path, duration: Option<f64>, rate: f64, side: Side) -> Result<Outcome> {
    let model = spec_at(c, spec)?;
    let (flow, flow_spec) = match duration {
        Some(d) => (
            meta_order_flow(positive("duration", d)?, side, positive("rate", rate)?, model.grid_step())?,
            json!({ "duration": d, "rate": rate, "side": side }),
        ),
        None => match &model.agent {
            Some(flow) => (flow.clone(), json!({ "source": "spec" })),
            None => return Err(invalid("impact needs --duration or an agent flow in the spec")),
        },
    };
    let horizon = match c.horizon {
        Some(h) => positive("horizon", h)?,
        None => 10.0 * flow.support_end().max(model.grid_step()),
    };
    let profile = market_impact_profile(&model, &flow, horizon)?;
    write_impact(&c.out.join("impact.csv"), &profile, flow_spec)?;
    Ok(Outcome {
        outputs: vec!["impact.csv".into(), "impact.json".into()],
        summary: json!({
            "horizon": horizon,
            "final_value": profile.values.last(),
            "permanent_level": profile.permanent_level,
            "permanent_impact_per_unit": permanent_impact(&model)?,
        }),
    })
}

fn cmd_respond(c: &Common, spec: Option<&Path>, events: Option<&Path>, points: usize) -> Result<Outcome> {
    if spec.is_none() && events.is_none() {
        return Err(invalid("respond needs --spec and/or --events"));
    }
    let t_max = positive("t-max", c.t_max.unwrap_or(10.0))?;
    let mut outcome = Outcome { outputs: Vec::new(), summary: json!({}) };
    if let Some(path) = spec {
        let model = spec_at(c, path)?;
        let curve = response_function(&model, t_max)?;
        put_curve(c, &mut outcome, "response_analytic", &curve)?;
        outcome.summary["analytic_final"] = json!(curve.values.last());
    }
    if let Some(path) = events {
        if points == 0 {
            return Err(invalid("--points must be positive"));
        }
        let ev = events_at(c, path)?;
        let times: Vec<f64> = (1..=points).map(|k| t_max * k as f64 / points as f64).collect();
        let (curve, errors) = empirical_response(&ev, &times)?;
        put_curve(c, &mut outcome, "response_empirical", &curve)?;
        write_json(&c.out.join("response_empirical_stderr.json"), &errors)?;
        outcome.outputs.push("response_empirical_stderr.json".into());
        outcome.summary["empirical_final"] = json!(curve.values.last());
    }
    Ok(outcome)
}

fn cmd_ingest(c: &Common, trades: &Path, midprice: &Path, tick: Option<f64>) -> Result<Outcome> {
    let options = IngestOptions { tick, horizon: c.horizon, seed: c.seed };
    let events = ingest_events(trades, midprice, options)?;
    write_events(&c.out.join("events.csv"), &events)?;
    let counts = events.counts();
    Ok(Outcome {
        outputs: vec!["events.csv".into()],
        summary: json!({
            "horizon": events.horizon,
            "counts": { "Tm": counts[0], "Tp": counts[1], "Nm": counts[2], "Np": counts[3] },
        }),
    })
}
