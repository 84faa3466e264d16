//! Thinning simulation of the four-dimensional process and derived paths.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{CausalFunction, Kernel, KernelShape};
use crate::model::{ModelSpec, Side};

/// Default width of the pulse replacing a Dirac impact kernel, in seconds.
pub const DEFAULT_PULSE_WIDTH: f64 = 1e-3;
const MAX_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    /// trade at the bid
    Tm,
    /// trade at the ask
    Tp,
    /// downward mid-price move
    Nm,
    /// upward mid-price move
    Np,
}

impl EventType {
    pub const ALL: [EventType; 4] = [EventType::Tm, EventType::Tp, EventType::Nm, EventType::Np];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Tm => "Tm",
            EventType::Tp => "Tp",
            EventType::Nm => "Nm",
            EventType::Np => "Np",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "Tm" => Ok(EventType::Tm),
            "Tp" => Ok(EventType::Tp),
            "Nm" => Ok(EventType::Nm),
            "Np" => Ok(EventType::Np),
            other => Err(format!("unknown event type {other:?} (expected Tm, Tp, Nm or Np)")),
        }
    }
}

/// Event times of the four components, each sorted and strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventStream {
    pub t_minus: Vec<f64>,
    pub t_plus: Vec<f64>,
    pub n_minus: Vec<f64>,
    pub n_plus: Vec<f64>,
    pub horizon: f64,
}

impl EventStream {
    pub fn new(components: [Vec<f64>; 4], horizon: f64) -> Result<Self> {
        let [t_minus, t_plus, n_minus, n_plus] = components;
        let s = Self { t_minus, t_plus, n_minus, n_plus, horizon };
        s.validate()?;
        Ok(s)
    }

    /// Builds a stream from unsorted `(time, type)` pairs. Equal times within a
    /// component are separated by sub-microsecond jitter drawn from `seed`.
    pub fn from_events(events: &[(f64, EventType)], horizon: f64, seed: u64) -> Result<Self> {
        let mut comps: [Vec<f64>; 4] = Default::default();
        for &(t, ty) in events {
            comps[ty.index()].push(t);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in comps.iter_mut() {
            c.sort_by(|a, b| a.total_cmp(b));
            separate_ties(c, &mut rng);
        }
        Self::new(comps, horizon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive and finite, got {}", self.horizon)));
        }
        for (ty, c) in EventType::ALL.iter().zip(self.components()) {
            if let Some(w) = c.windows(2).find(|w| w[1] <= w[0]) {
                return Err(invalid(format!("{ty} times not strictly increasing at {}", w[1])));
            }
            if c.first().map(|&t| t < 0.0).unwrap_or(false) || c.last().map(|&t| t >= self.horizon).unwrap_or(false) {
                return Err(invalid(format!("{ty} times outside [0, {})", self.horizon)));
            }
        }
        Ok(())
    }

    pub fn components(&self) -> [&Vec<f64>; 4] {
        [&self.t_minus, &self.t_plus, &self.n_minus, &self.n_plus]
    }

    pub fn component(&self, ty: EventType) -> &[f64] {
        self.components()[ty.index()]
    }

    fn component_mut(&mut self, i: usize) -> &mut Vec<f64> {
        match i {
            0 => &mut self.t_minus,
            1 => &mut self.t_plus,
            2 => &mut self.n_minus,
            _ => &mut self.n_plus,
        }
    }

    pub fn counts(&self) -> [usize; 4] {
        [self.t_minus.len(), self.t_plus.len(), self.n_minus.len(), self.n_plus.len()]
    }

    pub fn trade_count(&self) -> usize {
        self.t_minus.len() + self.t_plus.len()
    }

    /// Empirical rates per component.
    pub fn rates(&self) -> [f64; 4] {
        self.counts().map(|c| c as f64 / self.horizon)
    }

    /// All events merged in time order (ties ordered by type).
    pub fn merged(&self) -> Vec<(f64, EventType)> {
        let mut all: Vec<(f64, EventType)> = EventType::ALL
            .iter()
            .flat_map(|&ty| self.component(ty).iter().map(move |&t| (t, ty)))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all
    }

    /// Events in `[start, end)` shifted to start at 0.
    pub fn window(&self, start: f64, end: f64) -> Result<Self> {
        let cut = |c: &Vec<f64>| -> Vec<f64> {
            let a = c.partition_point(|&t| t < start);
            let b = c.partition_point(|&t| t < end);
            c[a..b].iter().map(|t| t - start).collect()
        };
        Self::new(
            [cut(&self.t_minus), cut(&self.t_plus), cut(&self.n_minus), cut(&self.n_plus)],
            end - start,
        )
    }
}

fn separate_ties(c: &mut [f64], rng: &mut ChaCha8Rng) {
    for k in 1..c.len() {
        if c[k] <= c[k - 1] {
            c[k] = c[k - 1] + rng.gen_range(0.01..1.0) * MAX_JITTER;
        }
    }
}

/// Right-continuous step function.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCurve {
    /// jump times, starting with 0
    pub times: Vec<f64>,
    /// value from `times[k]` until `times[k+1]`
    pub values: Vec<f64>,
}

impl PathCurve {
    fn from_jumps(up: &[f64], down: &[f64]) -> Self {
        let mut jumps: Vec<(f64, f64)> = up.iter().map(|&t| (t, 1.0)).chain(down.iter().map(|&t| (t, -1.0))).collect();
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times = vec![0.0];
        let mut values = vec![0.0];
        let mut level = 0.0;
        for (t, d) in jumps {
            level += d;
            if t == *times.last().unwrap() {
                *values.last_mut().unwrap() = level;
            } else {
                times.push(t);
                values.push(level);
            }
        }
        Self { times, values }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }
}

/// Mid-price path `X_t = N⁺_t − N⁻_t` in ticks.
pub fn price_path(events: &EventStream) -> PathCurve {
    PathCurve::from_jumps(&events.n_plus, &events.n_minus)
}

/// Cumulative trade imbalance `U_t = T⁺_t − T⁻_t`.
pub fn cum_trade_path(events: &EventStream) -> PathCurve {
    PathCurve::from_jumps(&events.t_plus, &events.t_minus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub horizon: f64,
    pub seed: u64,
    /// width of the uniform pulse that replaces a Dirac kernel
    pub pulse_width: f64,
    /// simulate even when the stability condition fails
    pub allow_unstable: bool,
    pub max_events: usize,
    /// dominating rate above which the run is aborted as exploding
    pub max_rate: f64,
}

impl SimulationConfig {
    pub fn new(horizon: f64, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            pulse_width: DEFAULT_PULSE_WIDTH,
            allow_unstable: false,
            max_events: 200_000_000,
            max_rate: 1e9,
        }
    }
}

/// Excitation from one source onto one target, split by evaluation strategy.
#[derive(Debug, Clone)]
enum Term {
    /// `alpha·e^{−rate·t}` tracked by a decaying accumulator
    Exp { alpha: f64, rate: f64, acc: f64, at: f64 },
    /// summed over the source history (power laws, tables)
    History { kernel: Kernel, monotone: bool },
    /// Dirac atom spread uniformly over the pulse width
    Pulse { height: f64 },
}

#[derive(Debug, Clone)]
struct SourceTerms {
    source: usize,
    terms: Vec<Term>,
}

fn split_kernel(kernel: &Kernel, pulse_width: f64) -> Vec<Term> {
    let mut out = Vec::new();
    if kernel.atom_mass() > 0.0 {
        out.push(Term::Pulse { height: kernel.atom_mass() / pulse_width });
    }
    match *kernel.shape() {
        KernelShape::Zero | KernelShape::Dirac { .. } => {}
        // the exponential tail beyond support_end is kept (relative mass e^{−rate·end})
        KernelShape::Exponential { alpha, rate } => {
            if alpha > 0.0 {
                out.push(Term::Exp { alpha, rate, acc: 0.0, at: 0.0 });
            }
        }
        KernelShape::PowerLaw { alpha, .. } => {
            if alpha > 0.0 {
                out.push(Term::History { kernel: kernel.clone(), monotone: true });
            }
        }
        KernelShape::Table { .. } => {
            if kernel.samples().iter().any(|&v| v > 0.0) {
                out.push(Term::History { kernel: kernel.clone(), monotone: false });
            }
        }
    }
    out
}

/// Deterministic excitation of each component by the agent's flow.
struct AgentDrive {
    /// `(time, source index 4 = sell / 5 = buy, mass)` in time order
    orders: Vec<(f64, usize, f64)>,
    next: usize,
    /// `Σ_side θ ⋆ density` per target, with suffix maxima
    curves: [Option<(CausalFunction, Vec<f64>)>; 4],
}

impl AgentDrive {
    fn new(spec: &ModelSpec) -> Result<Self> {
        let mut orders = Vec::new();
        let mut curves: [Option<(CausalFunction, Vec<f64>)>; 4] = Default::default();
        if let Some(flow) = &spec.agent {
            flow.validate()?;
            for o in &flow.orders {
                let src = if o.side == Side::Buy { 5 } else { 4 };
                orders.push((o.time, src, o.mass));
            }
            orders.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (target, curve) in curves.iter_mut().enumerate() {
                let mut total: Option<CausalFunction> = None;
                for (side, density) in [(0, &flow.sell_density), (1, &flow.buy_density)] {
                    if let Some(d) = density {
                        let k = agent_kernel(spec, target, side);
                        if k.is_zero() {
                            continue;
                        }
                        let c = d.convolve(k)?;
                        total = Some(match total {
                            Some(t) => t.add(&c)?,
                            None => c,
                        });
                    }
                }
                if let Some(c) = total {
                    let mut suffix: Vec<f64> = c.samples().iter().map(|v| v.max(0.0)).collect();
                    for k in (0..suffix.len().saturating_sub(1)).rev() {
                        suffix[k] = suffix[k].max(suffix[k + 1]);
                    }
                    *curve = Some((c, suffix));
                }
            }
        }
        Ok(Self { orders, next: 0, curves })
    }

    fn next_order_time(&self) -> f64 {
        self.orders.get(self.next).map(|o| o.0).unwrap_or(f64::INFINITY)
    }

    /// (exact, bound over `[t, ∞)`) of the density-driven term for `target`.
    fn density_term(&self, target: usize, t: f64) -> (f64, f64) {
        match &self.curves[target] {
            None => (0.0, 0.0),
            Some((c, suffix)) => {
                let k = (t / c.grid_step() + 1e-9).floor() as usize;
                (c.value_at(t).max(0.0), suffix.get(k).copied().unwrap_or(0.0))
            }
        }
    }
}

fn agent_kernel(spec: &ModelSpec, target: usize, side: usize) -> &Kernel {
    if target < 2 {
        spec.theta_trade.entry(target, side)
    } else {
        spec.theta_impact().entry(target - 2, side)
    }
}

/// Ogata thinning with a piecewise dominating rate.
///
/// Every kernel term except tabulated ones is nonincreasing in the lag, so the
/// total intensity evaluated at the current time bounds it until the next event,
/// baseline slot change or agent order. Tabulated kernels and agent densities
/// contribute their suffix maxima to the bound.
pub fn simulate(spec: &ModelSpec, config: &SimulationConfig) -> Result<EventStream> {
    let horizon = config.horizon;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive and finite, got {horizon}")));
    }
    if !(config.pulse_width > 0.0) {
        return Err(invalid("pulse_width must be positive"));
    }
    spec.validate_fields()?;
    if !config.allow_unstable {
        spec.require_stable()?;
    }

    // terms[target] = per-source excitation terms; sources 4/5 are agent sell/buy orders
    let mut terms: Vec<Vec<SourceTerms>> = vec![Vec::new(); 4];
    for (target, row) in terms.iter_mut().enumerate() {
        for source in 0..6 {
            let kernel = if source < 4 {
                spec.phi.kernel(target, source)
            } else {
                agent_kernel(spec, target, source - 4)
            };
            let t = split_kernel(kernel, config.pulse_width);
            if !t.is_empty() {
                row.push(SourceTerms { source, terms: t });
            }
        }
    }
    // how far back each source's history must reach
    let mut memory = [0.0f64; 6];
    for row in &terms {
        for st in row {
            for term in &st.terms {
                let reach = match term {
                    Term::History { kernel, .. } => kernel.support_end(),
                    Term::Pulse { .. } => config.pulse_width,
                    Term::Exp { .. } => 0.0,
                };
                memory[st.source] = memory[st.source].max(reach);
            }
        }
    }
    let mut history: Vec<VecDeque<(f64, f64)>> = vec![VecDeque::new(); 6];
    let mut agent = AgentDrive::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = EventStream { horizon, ..Default::default() };
    let mut total_events = 0usize;
    let mut t = 0.0f64;
    let mu_price = spec.price_baseline;

    // intensity per target at time `s`, with its dominating bound
    let evaluate = |s: f64,
                    terms: &Vec<Vec<SourceTerms>>,
                    history: &Vec<VecDeque<(f64, f64)>>,
                    agent: &AgentDrive|
     -> ([f64; 4], f64) {
        let mut exact = [0.0; 4];
        let mut bound = 0.0;
        let mu = spec.baseline.value_at(s);
        for (target, row) in terms.iter().enumerate() {
            let base = if target < 2 { mu } else { mu_price };
            let (mut lam, mut dom) = (base, base);
            for st in row {
                for term in &st.terms {
                    match term {
                        Term::Exp { rate, acc, at, .. } => {
                            let v = acc * (-rate * (s - at)).exp();
                            lam += v;
                            dom += v;
                        }
                        Term::Pulse { height } => {
                            let w = config.pulse_width;
                            let active: f64 = history[st.source]
                                .iter()
                                .rev()
                                .take_while(|e| s - e.0 < w)
                                .map(|e| e.1)
                                .sum();
                            lam += height * active;
                            dom += height * active;
                        }
                        Term::History { kernel, monotone } => {
                            let end = kernel.support_end();
                            for &(time, weight) in history[st.source].iter().rev() {
                                let lag = s - time;
                                if lag >= end {
                                    break;
                                }
                                let v = kernel.density(lag) * weight;
                                lam += v;
                                dom += if *monotone { v } else { kernel.density_bound(lag) * weight };
                            }
                        }
                    }
                }
            }
            let (a_exact, a_bound) = agent.density_term(target, s);
            exact[target] = lam + a_exact;
            bound += dom + a_bound;
        }
        (exact, bound)
    };

    // registers an event of `source` with weight `w` at time `s`
    let register = |s: f64,
                    source: usize,
                    weight: f64,
                    terms: &mut Vec<Vec<SourceTerms>>,
                    history: &mut Vec<VecDeque<(f64, f64)>>| {
        for row in terms.iter_mut() {
            for st in row.iter_mut().filter(|st| st.source == source) {
                for term in st.terms.iter_mut() {
                    if let Term::Exp { alpha, rate, acc, at } = term {
                        *acc = *acc * (-*rate * (s - *at)).exp() + *alpha * weight;
                        *at = s;
                    }
                }
            }
        }
        if memory[source] > 0.0 {
            let h = &mut history[source];
            h.push_back((s, weight));
            while let Some(&(front, _)) = h.front() {
                if s - front > memory[source] {
                    h.pop_front();
                } else {
                    break;
                }
            }
        }
    };

    let mut bound = evaluate(t, &terms, &history, &agent).1;
    loop {
        let cap = spec.baseline.next_change(t).min(agent.next_order_time()).min(horizon);
        if agent.next_order_time() <= t {
            let (time, src, mass) = agent.orders[agent.next];
            agent.next += 1;
            register(time, src, mass, &mut terms, &mut history);
            bound = evaluate(t, &terms, &history, &agent).1;
            continue;
        }
        if bound > config.max_rate || !bound.is_finite() {
            return Err(Error::Explosion(format!("dominating rate {bound:.3e} at t = {t:.3}")));
        }
        let candidate = if bound > 0.0 {
            let u: f64 = rng.gen();
            t - (1.0 - u).ln() / bound
        } else {
            f64::INFINITY
        };
        if candidate >= cap {
            if cap >= horizon {
                break;
            }
            t = cap;
            bound = evaluate(t, &terms, &history, &agent).1;
            continue;
        }
        t = candidate;
        let dom = bound;
        let (exact, at_candidate) = evaluate(t, &terms, &history, &agent);
        bound = at_candidate;
        let total: f64 = exact.iter().sum();
        let u: f64 = rng.gen::<f64>() * dom;
        if u >= total {
            continue;
        }
        // pick the component
        let mut acc = 0.0;
        let mut target = 3;
        for (i, &l) in exact.iter().enumerate() {
            acc += l;
            if u < acc {
                target = i;
                break;
            }
        }
        let mut s = t;
        let comp = out.component_mut(target);
        if let Some(&last) = comp.last() {
            if s <= last {
                s = last + rng.gen_range(0.01..1.0) * MAX_JITTER;
            }
        }
        if s >= horizon {
            break;
        }
        comp.push(s);
        total_events += 1;
        if total_events > config.max_events {
            return Err(Error::Explosion(format!("more than {} events by t = {s:.3}", config.max_events)));
        }
        register(s, target, 1.0, &mut terms, &mut history);
        t = s;
        bound = evaluate(t, &terms, &history, &agent).1;
    }
    Ok(out)
}

/// `λ^i` at each grid time from `M + Φ ⋆ dP`, Dirac atoms spread over `pulse_width`.
pub fn intensity_path(spec: &ModelSpec, events: &EventStream, grid: &[f64], pulse_width: f64) -> [Vec<f64>; 4] {
    let comps = events.components();
    let mut out: [Vec<f64>; 4] = Default::default();
    for (target, path) in out.iter_mut().enumerate() {
        *path = grid
            .iter()
            .map(|&t| {
                let mut lam = if target < 2 { spec.baseline.value_at(t) } else { spec.price_baseline };
                for (source, times) in comps.iter().enumerate() {
                    let k = spec.phi.kernel(target, source);
                    if k.is_zero() {
                        continue;
                    }
                    let reach = k.support_end().max(pulse_width);
                    let hi = times.partition_point(|&s| s < t);
                    let lo = times.partition_point(|&s| s <= t - reach);
                    for &s in &times[lo..hi] {
                        let lag = t - s;
                        lam += k.density(lag);
                        if lag < pulse_width {
                            lam += k.atom_mass() / pulse_width;
                        }
                    }
                }
                lam
            })
            .collect();
    }
    out
}
