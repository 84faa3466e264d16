//! File formats: event streams, kernels, model specs, curves, impact profiles and
//! `g` matrices, plus ingestion of trade and mid-price records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analytics::{Curve, CurveMeta};
use crate::error::{invalid, Error, Result};
use crate::estimator::GMatrix;
use crate::impact::{meta_order_flow, ImpactProfile};
use crate::kernel::{CausalFunction, Kernel, KernelBlock, KernelShape, DEFAULT_GRID_STEP, DEFAULT_SUPPORT_END};
use crate::model::{AgentFlow, AgentOrder, Baseline, KernelMatrix, ModelSpec, Side, DAY};
use crate::simulator::{EventStream, EventType};

/// Names of the eight kernels, row-major by block then self/cross.
pub const KERNEL_NAMES: [&str; 8] = ["T.self", "T.cross", "I.self", "I.cross", "F.self", "F.cross", "N.self", "N.cross"];

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?)
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, message: message.into() }
}

/// Iterates data records after checking the header, yielding `(line, record)`.
fn records(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    let mut seen_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if !seen_header {
            let got: Vec<&str> = rec.iter().collect();
            if got != header {
                return Err(parse_error(line, format!("expected header {}, got {}", header.join(","), got.join(","))));
            }
            seen_header = true;
            continue;
        }
        if rec.len() != header.len() {
            return Err(parse_error(line, format!("expected {} fields, got {}", header.len(), rec.len())));
        }
        out.push((line, rec));
    }
    if !seen_header {
        return Err(parse_error(1, format!("missing header {}", header.join(","))));
    }
    Ok(out)
}

fn float(line: u64, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| parse_error(line, format!("invalid {what} {field:?}")))?;
    if !v.is_finite() {
        return Err(parse_error(line, format!("non-finite {what} {field:?}")));
    }
    Ok(v)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_pairs(path: &Path, header: [&str; 2], rows: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (a, b) in rows {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- events

/// Writes `time_s,type` rows in time order.
pub fn write_events(path: &Path, events: &EventStream) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_s", "type"])?;
    for (t, ty) in events.merged() {
        w.write_record([t.to_string(), ty.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an event CSV. Without a horizon, the stream ends just after the last event.
pub fn read_events(path: &Path, horizon: Option<f64>) -> Result<EventStream> {
    let mut comps: [Vec<f64>; 4] = Default::default();
    for (line, rec) in records(path, &["time_s", "type"])? {
        let t = float(line, &rec[0], "time")?;
        let ty: EventType = rec[1].parse().map_err(|_| parse_error(line, format!("unknown event type {:?}", &rec[1])))?;
        let c = &mut comps[ty.index()];
        if c.last().map(|&p| t <= p).unwrap_or(false) {
            return Err(parse_error(line, format!("{ty} time {t} not after the previous {ty} event")));
        }
        c.push(t);
    }
    let last = comps.iter().filter_map(|c| c.last()).fold(0.0f64, |m, &t| m.max(t));
    let horizon = horizon.unwrap_or_else(|| last.next_up().max(f64::MIN_POSITIVE));
    EventStream::new(comps, horizon)
}

// ---------------------------------------------------------------- kernels

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSidecar {
    pub atom_mass: f64,
    pub grid_step: f64,
    pub support_end: f64,
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `t,value` samples and a JSON sidecar next to it.
pub fn write_function(path: &Path, f: &CausalFunction) -> Result<()> {
    write_pairs(path, ["t", "value"], f.times().into_iter().zip(f.samples().iter().copied()))?;
    let meta = KernelSidecar { atom_mass: f.atom_mass(), grid_step: f.grid_step(), support_end: f.support_end() };
    write_json(&sidecar_path(path), &meta)
}

/// Reads a `t,value` table. The grid step comes from the sidecar when present,
/// otherwise from the first two abscissae.
pub fn read_function(path: &Path) -> Result<CausalFunction> {
    let rows = records(path, &["t", "value"])?;
    let mut ts = Vec::with_capacity(rows.len());
    let mut vs = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        ts.push(float(*line, &rec[0], "t")?);
        vs.push(float(*line, &rec[1], "value")?);
    }
    let side = sidecar_path(path);
    let meta: Option<KernelSidecar> = if side.exists() { Some(read_json(&side)?) } else { None };
    let step = match (meta, ts.len()) {
        (Some(m), _) => m.grid_step,
        (None, n) if n >= 2 => ts[1] - ts[0],
        _ => return Err(invalid(format!("{}: cannot infer grid step without a sidecar", path.display()))),
    };
    for (k, (&t, (line, _))) in ts.iter().zip(&rows).enumerate() {
        if (t - k as f64 * step).abs() > 1e-6 * step.max(1.0) {
            return Err(parse_error(*line, format!("t = {t} is off the grid of step {step}")));
        }
    }
    let mut f = CausalFunction::new(meta.map(|m| m.atom_mass).unwrap_or(0.0), step, vs)?;
    if let Some(m) = meta {
        f = f.resized((m.support_end / step).round() as usize);
    }
    Ok(f)
}

pub fn read_kernel(path: &Path) -> Result<Kernel> {
    Kernel::from_function(read_function(path)?)
}

/// Writes `<name>.csv` and `<name>.json` for the eight kernels into `dir`.
pub fn write_kernel_matrix(dir: &Path, kernels: &KernelMatrix) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, k) in KERNEL_NAMES.iter().zip(kernel_list(kernels)) {
        write_function(&dir.join(format!("{name}.csv")), k)?;
    }
    Ok(())
}

fn kernel_list(m: &KernelMatrix) -> [&Kernel; 8] {
    [
        &m.trade.self_k,
        &m.trade.cross_k,
        &m.impact.self_k,
        &m.impact.cross_k,
        &m.feedback.self_k,
        &m.feedback.cross_k,
        &m.price.self_k,
        &m.price.cross_k,
    ]
}

// ---------------------------------------------------------------- model specs

/// One kernel in a spec document: a path to a `t,value` table, or a parametric form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelEntry {
    Path(String),
    Table { csv: String },
    Parametric { kind: String, #[serde(default)] params: Value },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockEntry {
    #[serde(rename = "self", default, skip_serializing_if = "Option::is_none")]
    pub self_k: Option<KernelEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross: Option<KernelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaOrderEntry {
    pub duration: f64,
    pub side: Side,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentEntry {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orders: Vec<AgentOrder>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_order: Option<MetaOrderEntry>,
}

/// JSON form of a [`ModelSpec`]. Missing kernels are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecDocument {
    pub baseline: Baseline,
    #[serde(default)]
    pub price_baseline: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_end: Option<f64>,
    #[serde(default)]
    pub kernels: BTreeMap<String, KernelEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_trade: Option<BlockEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_impact: Option<BlockEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentEntry>,
}

impl KernelEntry {
    pub fn parametric(shape: &KernelShape) -> Self {
        let mut v = serde_json::to_value(shape).expect("shapes serialize");
        let obj = v.as_object_mut().expect("tagged shape");
        let kind = obj.remove("kind").and_then(|k| k.as_str().map(String::from)).unwrap_or_default();
        KernelEntry::Parametric { kind, params: Value::Object(obj.clone()) }
    }

    fn build(&self, base: &Path, dt: f64, support_end: f64) -> Result<Kernel> {
        match self {
            KernelEntry::Path(p) | KernelEntry::Table { csv: p } => {
                let f = read_function(&base.join(p))?;
                if (f.grid_step() - dt).abs() > 1e-9 * dt {
                    return Err(Error::GridMismatch(format!("{p}: grid step {} vs model {dt}", f.grid_step())));
                }
                let shape = KernelShape::Table { samples: f.samples().to_vec(), atom_mass: f.atom_mass() };
                Kernel::parametric(shape, dt, support_end)
            }
            KernelEntry::Parametric { kind, params } => {
                let mut obj = match params {
                    Value::Object(m) => m.clone(),
                    Value::Null => Default::default(),
                    _ => return Err(invalid(format!("params of {kind} kernel must be an object"))),
                };
                let shape = if kind == "power_law_norm" {
                    let get = |k: &str| {
                        obj.get(k).and_then(Value::as_f64).ok_or_else(|| invalid(format!("power_law_norm needs {k}")))
                    };
                    KernelShape::powerlaw_with_norm(get("norm")?, get("cutoff")?, get("exponent")?, dt, support_end)?
                } else {
                    obj.insert("kind".into(), Value::String(kind.clone()));
                    serde_json::from_value(Value::Object(obj))
                        .map_err(|e| invalid(format!("bad {kind} kernel: {e}")))?
                };
                Kernel::parametric(shape, dt, support_end)
            }
        }
    }
}

impl BlockEntry {
    fn build(&self, base: &Path, dt: f64, support_end: f64) -> Result<KernelBlock> {
        let one = |e: &Option<KernelEntry>| match e {
            Some(e) => e.build(base, dt, support_end),
            None => Kernel::zero(dt, support_end),
        };
        KernelBlock::new(one(&self.self_k)?, one(&self.cross)?)
    }
}

impl SpecDocument {
    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Builds the model; relative table paths resolve against `base`.
    /// `grid_step` overrides the document's value.
    pub fn build(&self, base: &Path, grid_step: Option<f64>) -> Result<ModelSpec> {
        let dt = grid_step.or(self.grid_step).unwrap_or(DEFAULT_GRID_STEP);
        let support_end = self.support_end.unwrap_or(DEFAULT_SUPPORT_END);
        if let Some(bad) = self.kernels.keys().find(|k| !KERNEL_NAMES.contains(&k.as_str())) {
            return Err(invalid(format!("unknown kernel name {bad:?}; expected one of {}", KERNEL_NAMES.join(", "))));
        }
        let mut ks = Vec::with_capacity(8);
        for name in KERNEL_NAMES {
            ks.push(match self.kernels.get(name) {
                Some(e) => e.build(base, dt, support_end)?,
                None => Kernel::zero(dt, support_end)?,
            });
        }
        let mut it = ks.into_iter();
        let mut next_block = || KernelBlock::new(it.next().unwrap(), it.next().unwrap());
        let phi = KernelMatrix::new(next_block()?, next_block()?, next_block()?, next_block()?)?;
        let theta_trade = match &self.theta_trade {
            Some(b) => b.build(base, dt, support_end)?,
            None => KernelBlock::zero(dt, support_end)?,
        };
        let theta_impact = self.theta_impact.as_ref().map(|b| b.build(base, dt, support_end)).transpose()?;
        let agent = match &self.agent {
            Some(a) => {
                let mut flow = match &a.meta_order {
                    Some(m) => meta_order_flow(m.duration, m.side, m.rate, dt)?,
                    None => AgentFlow::default(),
                };
                flow.orders = a.orders.clone();
                Some(flow)
            }
            None => None,
        };
        let spec = ModelSpec {
            baseline: self.baseline.clone(),
            price_baseline: self.price_baseline,
            phi,
            theta_trade,
            theta_impact,
            agent,
        };
        spec.validate_fields()?;
        Ok(spec)
    }

    /// Document whose kernels point at tables `<name>.csv` in the same directory.
    pub fn with_tables(baseline: Baseline, grid_step: f64, support_end: f64) -> Self {
        let kernels = KERNEL_NAMES.iter().map(|n| (n.to_string(), KernelEntry::Path(format!("{n}.csv")))).collect();
        Self {
            baseline,
            price_baseline: 0.0,
            grid_step: Some(grid_step),
            support_end: Some(support_end),
            kernels,
            theta_trade: None,
            theta_impact: None,
            agent: None,
        }
    }
}

/// Reads a spec document and builds the model.
pub fn load_spec(path: &Path, grid_step: Option<f64>) -> Result<ModelSpec> {
    let doc = SpecDocument::read(path)?;
    doc.build(path.parent().unwrap_or(Path::new(".")), grid_step)
}

// ---------------------------------------------------------------- curves and impact

/// Writes `abscissa,value` rows and the metadata as `<stem>.json`.
pub fn write_curve(path: &Path, curve: &Curve) -> Result<()> {
    write_pairs(path, ["abscissa", "value"], curve.abscissa.iter().copied().zip(curve.values.iter().copied()))?;
    write_json(&sidecar_path(path), &curve.meta)
}

pub fn read_curve(path: &Path) -> Result<Curve> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, rec) in records(path, &["abscissa", "value"])? {
        xs.push(float(line, &rec[0], "abscissa")?);
        ys.push(float(line, &rec[1], "value")?);
    }
    let side = sidecar_path(path);
    let meta: CurveMeta = if side.exists() { read_json(&side)? } else { CurveMeta::default() };
    Curve::new(xs, ys, meta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactSidecar {
    pub permanent_level: f64,
    pub flow_spec: Value,
}

/// Writes `t,MI` rows and `{permanent_level, flow_spec}` as `<stem>.json`.
pub fn write_impact(path: &Path, profile: &ImpactProfile, flow_spec: Value) -> Result<()> {
    write_pairs(path, ["t", "MI"], profile.times.iter().copied().zip(profile.values.iter().copied()))?;
    write_json(&sidecar_path(path), &ImpactSidecar { permanent_level: profile.permanent_level, flow_spec })
}

// ---------------------------------------------------------------- g matrix

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GManifest {
    pub rates: [f64; 4],
    pub bins: crate::estimator::BinScheme,
    pub two_sided: bool,
    pub files: Vec<String>,
}

/// Writes one `t,value` file per entry, `g_<target>_<source>.csv`, with `t` the left
/// bin edge (right edge negated on the negative side), and `g_manifest.json`.
pub fn write_gmatrix(dir: &Path, g: &GMatrix) -> Result<()> {
    fs::create_dir_all(dir)?;
    let edges = g.bins.edges();
    let mut files = Vec::with_capacity(16);
    for i in 0..4 {
        for j in 0..4 {
            let name = format!("g_{}_{}.csv", EventType::from_index(i), EventType::from_index(j));
            let mut rows: Vec<(f64, f64)> = Vec::new();
            if let Some(neg) = &g.negative {
                rows.extend((0..g.bin_count()).rev().map(|q| (-edges[q + 1], neg[i][j][q])));
            }
            rows.extend((0..g.bin_count()).map(|q| (edges[q], g.positive[i][j][q])));
            write_pairs(&dir.join(&name), ["t", "value"], rows.into_iter())?;
            files.push(name);
        }
    }
    let manifest = GManifest { rates: g.rates, bins: g.bins.clone(), two_sided: g.negative.is_some(), files };
    write_json(&dir.join("g_manifest.json"), &manifest)
}

// ---------------------------------------------------------------- ingestion

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestOptions {
    /// price tick; inferred from the smallest positive move when absent
    pub tick: Option<f64>,
    /// end of the observation window; just after the last record when absent
    pub horizon: Option<f64>,
    /// seed of the tie-separating jitter
    pub seed: u64,
}

/// Builds a stream from trades `time_s,side` and mid-prices `time_s,price`.
/// A move of `k` ticks yields `k` price events at (jitter-separated) copies of its time.
pub fn ingest_events(trades: &Path, midprice: &Path, options: IngestOptions) -> Result<EventStream> {
    let mut events: Vec<(f64, EventType)> = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (line, rec) in records(trades, &["time_s", "side"])? {
        let t = float(line, &rec[0], "time")?;
        if t < last_t {
            return Err(parse_error(line, format!("trades not sorted: {t} after {last_t}")));
        }
        last_t = t;
        let ty = match rec[1].to_ascii_lowercase().as_str() {
            "buy" => EventType::Tp,
            "sell" => EventType::Tm,
            other => return Err(parse_error(line, format!("side must be buy or sell, got {other:?}"))),
        };
        events.push((t, ty));
    }
    let mut prices: Vec<(u64, f64, f64)> = Vec::new();
    for (line, rec) in records(midprice, &["time_s", "price"])? {
        let t = float(line, &rec[0], "time")?;
        if prices.last().map(|p| t < p.1).unwrap_or(false) {
            return Err(parse_error(line, format!("mid-prices not sorted at time {t}")));
        }
        prices.push((line, t, float(line, &rec[1], "price")?));
    }
    let moves: Vec<(u64, f64, f64)> =
        prices.windows(2).map(|w| (w[1].0, w[1].1, w[1].2 - w[0].2)).filter(|m| m.2 != 0.0).collect();
    let tick = match options.tick {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(invalid(format!("tick size must be positive, got {t}"))),
        None => {
            let t = moves.iter().map(|m| m.2.abs()).fold(f64::INFINITY, f64::min);
            if moves.is_empty() {
                1.0
            } else if !(t > 0.0) {
                return Err(invalid("inferred tick size is zero"));
            } else {
                t
            }
        }
    };
    for (line, t, dp) in moves {
        let k = (dp / tick).round();
        if k == 0.0 || ((dp / tick) - k).abs() > 1e-6 * k.abs().max(1.0) {
            return Err(parse_error(line, format!("price move {dp} is not a whole number of ticks of {tick}")));
        }
        let ty = if k > 0.0 { EventType::Np } else { EventType::Nm };
        events.extend(std::iter::repeat_n((t, ty), k.abs() as usize));
    }
    let last = events.iter().map(|e| e.0).fold(0.0f64, f64::max);
    let horizon = options.horizon.unwrap_or(last + 1e-3);
    if events.iter().any(|e| e.0 < 0.0) {
        return Err(invalid("times must be nonnegative"));
    }
    EventStream::from_events(&events, horizon, options.seed)
}

/// Day index of an epoch timestamp.
pub fn day_of(t: f64) -> i64 {
    (t / DAY).floor() as i64
}

/// Distinct days carrying at least one event.
pub fn event_days(events: &EventStream) -> Vec<i64> {
    let mut d: Vec<i64> = events.components().iter().flat_map(|c| c.iter().map(|&t| day_of(t))).collect();
    d.sort_unstable();
    d.dedup();
    d
}

/// Per-day windows `[day·86400 + slot_start, day·86400 + slot_end)` re-based to start at 0.
pub fn seasonal_slice(events: &EventStream, slot_start: f64, slot_end: f64, days: &[i64]) -> Result<Vec<EventStream>> {
    if !(0.0 <= slot_start && slot_start < slot_end && slot_end <= DAY) {
        return Err(invalid(format!("slot [{slot_start}, {slot_end}) must lie within one day")));
    }
    let mut out = Vec::with_capacity(days.len());
    for &d in days {
        let origin = d as f64 * DAY;
        out.push(events.window(origin + slot_start, origin + slot_end)?);
    }
    if out.iter().all(|w| w.counts().iter().sum::<usize>() == 0) {
        return Err(Error::InsufficientData(format!("no events in slot [{slot_start}, {slot_end})")));
    }
    Ok(out)
}
