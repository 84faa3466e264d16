//! Nonparametric kernel estimation: the conditional-expectation matrix `g`,
//! its closed form, and the second-kind integral equation `g = φ ⋆ (δI + g)`
//! solved by a Nyström discretization.

use faer::prelude::*;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{CausalFunction, Kernel, KernelBlock};
use crate::model::{KernelMatrix, ModelSpec};
use crate::simulator::EventStream;
use crate::spectrum::ModelSpectrum;

/// Pivot ratio of the Nyström LU above which the system is declared ill-conditioned.
pub const MAX_PIVOT_RATIO: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinScheme {
    Uniform { width: f64, count: usize },
    /// arbitrary increasing edges starting at 0
    Edges { edges: Vec<f64> },
}

impl BinScheme {
    pub fn edges(&self) -> Vec<f64> {
        match self {
            BinScheme::Uniform { width, count } => (0..=*count).map(|k| k as f64 * width).collect(),
            BinScheme::Edges { edges } => edges.clone(),
        }
    }

    pub fn count(&self) -> usize {
        match self {
            BinScheme::Uniform { count, .. } => *count,
            BinScheme::Edges { edges } => edges.len() - 1,
        }
    }

    pub fn uniform_width(&self) -> Option<f64> {
        match self {
            BinScheme::Uniform { width, .. } => Some(*width),
            BinScheme::Edges { .. } => None,
        }
    }

    /// `count` edges spaced logarithmically between `first` and `t_max`, preceded by 0.
    pub fn log_spaced(first: f64, t_max: f64, count: usize) -> Result<Self> {
        if !(first > 0.0 && t_max > first && count >= 2) {
            return Err(invalid("log bins need 0 < first < t_max and at least two bins"));
        }
        let ratio = (t_max / first).powf(1.0 / (count - 1) as f64);
        let mut edges = vec![0.0];
        edges.extend((0..count).map(|k| first * ratio.powi(k as i32)));
        Ok(BinScheme::Edges { edges })
    }
}

/// Bin averages of `g^{ij}`: `positive[i][j][q]` on `[e_q, e_{q+1})`, and when
/// available `negative[i][j][q]` on `(−e_{q+1}, −e_q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GMatrix {
    pub bins: BinScheme,
    pub positive: Vec<Vec<Vec<f64>>>,
    pub negative: Option<Vec<Vec<Vec<f64>>>>,
    /// per-component rates used for centering
    pub rates: [f64; 4],
}

impl GMatrix {
    pub fn zeros(bins: BinScheme, rates: [f64; 4]) -> Self {
        let n = bins.count();
        Self { positive: vec![vec![vec![0.0; n]; 4]; 4], negative: None, bins, rates }
    }

    pub fn bin_count(&self) -> usize {
        self.bins.count()
    }

    /// Entry `(i, j)` on the positive side as a causal function (uniform bins only).
    pub fn entry(&self, i: usize, j: usize) -> Result<CausalFunction> {
        let w = self.bins.uniform_width().ok_or_else(|| invalid("entry needs uniform bins"))?;
        CausalFunction::new(0.0, w, self.positive[i][j].clone())
    }

    /// Largest absolute bin value over all entries and both sides.
    pub fn max_abs(&self) -> f64 {
        let side = |s: &Vec<Vec<Vec<f64>>>| s.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        side(&self.positive).max(self.negative.as_ref().map(side).unwrap_or(0.0))
    }
}

/// Histogram estimate of `g` with uniform bins of `bin_width` up to `t_max`.
pub fn estimate_g(events: &EventStream, bin_width: f64, t_max: f64) -> Result<GMatrix> {
    if !(bin_width > 0.0 && t_max > bin_width) {
        return Err(invalid("need 0 < bin_width < t_max"));
    }
    let count = (t_max / bin_width).round() as usize;
    estimate_g_binned(events, BinScheme::Uniform { width: bin_width, count })
}

/// Histogram estimate of `g` on arbitrary bins.
///
/// For each conditioning event `s` of type `j` with `s + t_max ≤ horizon`, events of
/// type `i` at lags in `[0, t_max)` are counted (the conditioning event itself excluded);
/// counts are normalized by the number of conditioning events and the bin width, then
/// the rate `Λ̂^i` is subtracted.
pub fn estimate_g_binned(events: &EventStream, bins: BinScheme) -> Result<GMatrix> {
    events.validate()?;
    let edges = bins.edges();
    if edges.len() < 2 || edges[0] != 0.0 || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("bin edges must start at 0 and increase"));
    }
    let t_max = *edges.last().unwrap();
    let comps = events.components();
    if let Some(k) = comps.iter().position(|c| c.is_empty()) {
        return Err(Error::InsufficientData(format!("component {k} has no events")));
    }
    if events.horizon <= t_max {
        return Err(Error::InsufficientData(format!("horizon {} shorter than t_max {t_max}", events.horizon)));
    }
    let rates = events.rates();
    let nb = edges.len() - 1;
    let uniform = bins.uniform_width();
    let mut positive = vec![vec![vec![0.0; nb]; 4]; 4];
    for (j, cond) in comps.iter().enumerate() {
        let usable = cond.partition_point(|&s| s + t_max <= events.horizon);
        if usable == 0 {
            return Err(Error::InsufficientData(format!("no usable conditioning events of component {j}")));
        }
        for (i, resp) in comps.iter().enumerate() {
            let hist = &mut positive[i][j];
            let mut start = 0;
            for &s in &cond[..usable] {
                while start < resp.len() && resp[start] < s {
                    start += 1;
                }
                let mut k = start;
                while k < resp.len() {
                    let lag = resp[k] - s;
                    if lag >= t_max {
                        break;
                    }
                    if !(i == j && lag == 0.0) {
                        let b = match uniform {
                            Some(w) => ((lag / w) as usize).min(nb - 1),
                            None => edges.partition_point(|&e| e <= lag) - 1,
                        };
                        hist[b] += 1.0;
                    }
                    k += 1;
                }
            }
            for (b, h) in hist.iter_mut().enumerate() {
                *h = *h / (usable as f64 * (edges[b + 1] - edges[b])) - rates[i];
            }
        }
    }
    Ok(GMatrix { bins, positive, negative: None, rates })
}

/// Closed-form `g` (both sides) averaged over uniform bins of `bin_width`, a multiple
/// of the model grid step.
pub fn analytic_g(spec: &ModelSpec, bin_width: f64, t_max: f64) -> Result<GMatrix> {
    analytic_g_with(spec, bin_width, t_max, false)
}

/// As [`analytic_g`], with the covariance spectrum from direct 4×4 inversion.
pub fn analytic_g_direct(spec: &ModelSpec, bin_width: f64, t_max: f64) -> Result<GMatrix> {
    analytic_g_with(spec, bin_width, t_max, true)
}

fn analytic_g_with(spec: &ModelSpec, bin_width: f64, t_max: f64, direct: bool) -> Result<GMatrix> {
    let dt = spec.grid_step();
    let ratio = bin_width / dt;
    let m = ratio.round() as usize;
    if m == 0 || (ratio - m as f64).abs() > 1e-6 {
        return Err(invalid(format!("bin width {bin_width} is not a multiple of the grid step {dt}")));
    }
    let count = (t_max / bin_width).round() as usize;
    if count == 0 {
        return Err(invalid("t_max shorter than one bin"));
    }
    let ms = ModelSpectrum::for_period(spec, 4.0 * t_max)?;
    let n = ms.len();
    let mut ghat: Vec<[[Complex64; 4]; 4]> = Vec::with_capacity(n);
    for j in 0..n {
        let cov = if direct { ms.covariance_direct(j)? } else { ms.covariance(j) };
        ghat.push(ms.g_hat(&cov));
    }
    let atoms = ms.g_hat(&ms.covariance_atoms());
    let mut positive = vec![vec![vec![0.0; count]; 4]; 4];
    let mut negative = vec![vec![vec![0.0; count]; 4]; 4];
    for p in 0..4 {
        for q in 0..4 {
            let values: Vec<Complex64> = ghat.iter().map(|g| g[p][q]).collect();
            let mut circ = ms.to_time(&values);
            ms.regularize_origin(&mut circ, atoms[p][q].re);
            for b in 0..count {
                let pos: f64 = (b * m..(b + 1) * m).map(|k| circ[k]).sum();
                let neg: f64 = (b * m + 1..=(b + 1) * m).map(|k| circ[n - k]).sum();
                positive[p][q][b] = pos / m as f64;
                negative[p][q][b] = neg / m as f64;
            }
        }
    }
    let (lt, ln) = ms.rates;
    Ok(GMatrix {
        bins: BinScheme::Uniform { width: bin_width, count },
        positive,
        negative: Some(negative),
        rates: [lt, lt, ln, ln],
    })
}

/// Fills the negative side from `g^{kj}(−u) = (Λ^k/Λ^j)·g^{jk}(u)`.
pub fn symmetrize(g: &GMatrix) -> Result<GMatrix> {
    if g.rates.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InsufficientData("symmetrization needs positive rates".into()));
    }
    let nb = g.bin_count();
    let mut negative = vec![vec![vec![0.0; nb]; 4]; 4];
    for k in 0..4 {
        for j in 0..4 {
            let scale = g.rates[k] / g.rates[j];
            for b in 0..nb {
                negative[k][j][b] = scale * g.positive[j][k][b];
            }
        }
    }
    Ok(GMatrix { negative: Some(negative), ..g.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FredholmOptions {
    /// average the two symmetric positions of each block entry
    pub enforce_bisymmetry: bool,
}

impl Default for FredholmOptions {
    fn default() -> Self {
        Self { enforce_bisymmetry: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomCandidate {
    pub target: usize,
    pub source: usize,
    /// mass in the first bin
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct FredholmSolution {
    /// clipped, bisymmetric kernels on the bin grid
    pub kernels: KernelMatrix,
    /// unclipped bin values `raw[i][j][n]`
    pub raw: Vec<Vec<Vec<f64>>>,
    /// `Σ |negative values|·Δ` removed by clipping
    pub clipped_mass: f64,
    /// ratio of largest to smallest LU pivot
    pub pivot_ratio: f64,
    pub atom_candidates: Vec<AtomCandidate>,
}

/// Solves `g^{ij}(t) = φ^{ij}(t) + Σ_k ∫ φ^{ik}(s) g^{kj}(t−s) ds` for `t ∈ (0, t_max)`.
///
/// Unknowns are bin values of φ; the integral over each pair of bins uses the mean
/// of the two `g` bins the lag straddles. Lags beyond the estimated range count as 0.
/// All four rows share one `4K × 4K` matrix, factored once.
pub fn solve_fredholm(g: &GMatrix, options: FredholmOptions) -> Result<FredholmSolution> {
    let w = g
        .bins
        .uniform_width()
        .ok_or_else(|| invalid("the integral-equation solve needs uniform bins"))?;
    let g = if g.negative.is_some() { g.clone() } else { symmetrize(g)? };
    let neg = g.negative.as_ref().expect("symmetrized");
    let kk = g.bin_count();
    // G^{kj} at signed bin offset ℓ (negative bins map to −ℓ−1)
    let lagged = |k: usize, j: usize, l: i64| -> f64 {
        if l >= 0 {
            g.positive[k][j].get(l as usize).copied().unwrap_or(0.0)
        } else {
            neg[k][j].get((-l - 1) as usize).copied().unwrap_or(0.0)
        }
    };
    let dim = 4 * kk;
    // rows (k, n), columns (j, m):  δδ + Δ·(G_{m−n−1} + G_{m−n})/2
    let mut mat = Mat::<f64>::zeros(dim, dim);
    for k in 0..4 {
        for j in 0..4 {
            for n in 0..kk {
                for m in 0..kk {
                    let l = m as i64 - n as i64;
                    let v = 0.5 * w * (lagged(k, j, l - 1) + lagged(k, j, l));
                    mat[(k * kk + n, j * kk + m)] = v + if k == j && n == m { 1.0 } else { 0.0 };
                }
            }
        }
    }
    // x_i^T · mat = b_i^T  ⇔  mat^T · x_i = b_i
    let mt = mat.transpose().to_owned();
    let rhs = Mat::<f64>::from_fn(dim, 4, |r, i| g.positive[i][r / kk][r % kk]);
    let lu = mt.partial_piv_lu();
    let u = lu.U();
    let (mut pmax, mut pmin) = (0.0f64, f64::INFINITY);
    for d in 0..dim {
        let p = u[(d, d)].abs();
        pmax = pmax.max(p);
        pmin = pmin.min(p);
    }
    let pivot_ratio = pmax / pmin;
    if !(pivot_ratio < MAX_PIVOT_RATIO) {
        return Err(Error::IllConditioned(format!(
            "pivot ratio {pivot_ratio:.3e}; try wider bins, a shorter t_max or Tikhonov regularization"
        )));
    }
    let x = lu.solve(&rhs);
    let mut raw = vec![vec![vec![0.0; kk]; 4]; 4];
    for (i, row) in raw.iter_mut().enumerate() {
        for (k, entry) in row.iter_mut().enumerate() {
            for (n, v) in entry.iter_mut().enumerate() {
                *v = x[(k * kk + n, i)];
            }
        }
    }
    let mut clipped_mass = 0.0;
    let mut atom_candidates = Vec::new();
    let mut clipped = raw.clone();
    for (i, row) in clipped.iter_mut().enumerate() {
        for (k, entry) in row.iter_mut().enumerate() {
            for v in entry.iter_mut() {
                if *v < 0.0 {
                    clipped_mass += -*v * w;
                    *v = 0.0;
                }
            }
            let total: f64 = entry.iter().sum::<f64>() * w;
            let first = entry.first().copied().unwrap_or(0.0) * w;
            let second = entry.get(1).copied().unwrap_or(0.0) * w;
            if total > 0.0 && first > 0.5 * total && first > 3.0 * second {
                atom_candidates.push(AtomCandidate { target: i, source: k, mass: first });
            }
        }
    }
    let kernels = assemble(&clipped, w, options)?;
    Ok(FredholmSolution { kernels, raw, clipped_mass, pivot_ratio, atom_candidates })
}

fn assemble(entries: &[Vec<Vec<f64>>], w: f64, options: FredholmOptions) -> Result<KernelMatrix> {
    let table = |v: Vec<f64>| Kernel::from_function(CausalFunction::new(0.0, w, v)?);
    let mean = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<_>>();
    let block = |r: usize, c: usize| -> Result<KernelBlock> {
        let (s, x) = if options.enforce_bisymmetry {
            (
                mean(&entries[r][c], &entries[r + 1][c + 1]),
                mean(&entries[r][c + 1], &entries[r + 1][c]),
            )
        } else {
            (entries[r + 1][c + 1].clone(), entries[r + 1][c].clone())
        };
        KernelBlock::new(table(s)?, table(x)?)
    };
    KernelMatrix::new(block(0, 0)?, block(2, 0)?, block(0, 2)?, block(2, 2)?)
}

/// Bin averages of every kernel on `count` uniform bins of `width`, as a kernel matrix.
pub fn binned_kernels(kernels: &KernelMatrix, width: f64, count: usize) -> Result<KernelMatrix> {
    let rebin = |b: &KernelBlock| -> Result<KernelBlock> {
        let t = |k: &Kernel| Kernel::from_function(CausalFunction::new(0.0, width, k.cell_averages(width, count))?);
        KernelBlock::new(t(&b.self_k)?, t(&b.cross_k)?)
    };
    KernelMatrix::new(
        rebin(&kernels.trade)?,
        rebin(&kernels.impact)?,
        rebin(&kernels.feedback)?,
        rebin(&kernels.price)?,
    )
}

/// `sup_{i,j} Σ_n (φ^{ij}_n − φ̃^{ij}_n)²·Δ`, shorter supports padded with zeros.
pub fn estimation_error(truth: &KernelMatrix, est: &KernelMatrix) -> Result<f64> {
    let (a, b) = (truth.grid_step(), est.grid_step());
    if (a - b).abs() > 1e-9 * a {
        return Err(Error::GridMismatch(format!("grid steps {a} and {b}")));
    }
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let (x, y) = (truth.kernel(i, j), est.kernel(i, j));
            let len = x.len().max(y.len());
            let mut ss = (x.atom_mass() - y.atom_mass()).powi(2);
            for n in 0..len {
                let d = x.samples().get(n).copied().unwrap_or(0.0) - y.samples().get(n).copied().unwrap_or(0.0);
                ss += d * d * a;
            }
            worst = worst.max(ss);
        }
    }
    Ok(worst)
}
