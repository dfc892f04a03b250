//! Gaussian-sum (sinc quadrature) CP representation of the Newton kernel
//! `1/‖x‖` on uniform grids, and its range separation.
//!
//! Grid conventions: on an `n`-point grid over `[-1, 1]` with `h = 2/(n−1)`,
//! kernel entry `i` is the average of the kernel over the cell
//! `[(d−½)h, (d+½)h]` per mode, `d = i − center − ½`, so the singularity is
//! the vertex between cells `center` and `center + 1`. The `n`-grid kernel
//! has `center = n/2 − 1`; the `2n` reference kernel `center = n − 1`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{CpTensor, Matrix};

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Samples in the quadrature validation sweep.
pub const VALIDATION_SAMPLES: usize = 1000;

/// Gaussian-sum surrogate `1/ρ ≈ Σ_k w_k exp(−t_k² ρ²)` on `[ρ_min, ρ_max]`.
///
/// Nodes `t_k = exp(u₀ + k h)` and weights `w_k = (2h/√π) t_k`, `k = −M..M`:
/// the trapezoidal rule for `1/ρ = (2/√π) ∫ exp(−ρ² e^{2u}) e^u du`. The step
/// `h` and shift `u₀` are chosen by a deterministic search minimizing the
/// maximal relative error over a log-spaced validation sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SincQuadrature {
    half_count: usize,
    step: f64,
    shift: f64,
    rho_min: f64,
    rho_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    max_rel_error: f64,
}

fn log_sweep(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(move |q| (a + (b - a) * q as f64 / (count - 1) as f64).exp())
}

fn rule(half_count: usize, step: f64, shift: f64) -> (Vec<f64>, Vec<f64>) {
    let m = half_count as i64;
    let nodes: Vec<f64> = (-m..=m).map(|k| (shift + (k + m) as f64 * step).exp()).collect();
    let weights = nodes.iter().map(|t| FRAC_2_SQRT_PI * step * t).collect();
    (nodes, weights)
}

/// Maximal relative error over the sweep; gives up early once it exceeds `cap`.
fn sweep_error(nodes: &[f64], weights: &[f64], rho_min: f64, rho_max: f64, cap: f64) -> f64 {
    let mut worst = 0.0f64;
    for rho in log_sweep(rho_min, rho_max, VALIDATION_SAMPLES) {
        let s: f64 = nodes
            .iter()
            .zip(weights)
            .map(|(t, w)| w * (-(t * rho).powi(2)).exp())
            .sum();
        worst = worst.max((s * rho - 1.0).abs());
        if worst > cap {
            break;
        }
    }
    worst
}

impl SincQuadrature {
    /// Builds the rule for `2M+1` terms on `[ρ_min, ρ_max]`.
    pub fn new(half_count: usize, rho_min: f64, rho_max: f64) -> Result<Self> {
        if half_count < 4 {
            return Err(Error::InvalidArgument(format!(
                "quadrature half-count must be at least 4, got {half_count}"
            )));
        }
        if !(rho_min > 0.0 && rho_max > rho_min && rho_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid quadrature range [{rho_min}, {rho_max}]"
            )));
        }
        // the largest node places the narrowest Gaussian at exp(-x_hi²) of its
        // peak at ρ_min; the step balances discretization against truncation
        let mut best: Option<(f64, f64, f64)> = None;
        for x_hi in [3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 6.5] {
            for q in 0..200 {
                let step = 0.05 * (40.0f64).powf(q as f64 / 199.0);
                let shift = (x_hi / rho_min).ln() - 2.0 * half_count as f64 * step;
                let (nodes, weights) = rule(half_count, step, shift);
                let cap = best.map_or(f64::INFINITY, |b| b.0);
                let err = sweep_error(&nodes, &weights, rho_min, rho_max, cap);
                if best.is_none_or(|b| err < b.0) {
                    best = Some((err, step, shift));
                }
            }
        }
        let (max_rel_error, step, shift) = best.expect("non-empty search");
        let (nodes, weights) = rule(half_count, step, shift);
        let max_rel_error = max_rel_error.max(sweep_error(&nodes, &weights, rho_min, rho_max, f64::INFINITY));
        Ok(Self {
            half_count,
            step,
            shift,
            rho_min,
            rho_max,
            nodes,
            weights,
            max_rel_error,
        })
    }

    /// As [`SincQuadrature::new`], failing when the validated error exceeds `tol`.
    pub fn with_tolerance(half_count: usize, rho_min: f64, rho_max: f64, tol: f64) -> Result<Self> {
        let q = Self::new(half_count, rho_min, rho_max)?;
        if q.max_rel_error > tol {
            return Err(Error::QuadratureTolerance {
                m: half_count,
                target: tol,
                achieved: q.max_rel_error,
            });
        }
        Ok(q)
    }

    /// The rule used for kernels on an `n`-point grid: it covers every cell
    /// outside the origin cell of the `2n` reference box.
    pub fn for_grid(half_count: usize, n: usize) -> Result<Self> {
        check_grid(n)?;
        let h = 2.0 / (n - 1) as f64;
        Self::new(half_count, 0.5 * h, 2.0 * 3f64.sqrt() * (1.0 + h))
    }

    pub fn half_count(&self) -> usize {
        self.half_count
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn range(&self) -> (f64, f64) {
        (self.rho_min, self.rho_max)
    }

    /// Ascending Gaussian exponents `t_k`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error
    }

    pub fn eval(&self, rho: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * (-(t * rho).powi(2)).exp())
            .sum()
    }
}

/// How a Gaussian factor is turned into a grid vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Integration {
    /// Point values at the cell centers.
    Midpoint,
    /// Exact cell averages via `erf`.
    #[default]
    ExactErf,
}

impl Integration {
    pub fn name(self) -> &'static str {
        match self {
            Integration::Midpoint => "midpoint",
            Integration::ExactErf => "erf",
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            Integration::Midpoint => 0,
            Integration::ExactErf => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Integration::Midpoint),
            1 => Ok(Integration::ExactErf),
            _ => Err(Error::Format(format!("unknown integration tag {tag}"))),
        }
    }
}

impl std::str::FromStr for Integration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midpoint" => Ok(Integration::Midpoint),
            "erf" | "exact_erf" | "exact-erf" => Ok(Integration::ExactErf),
            other => Err(Error::InvalidArgument(format!("unknown integration '{other}'"))),
        }
    }
}

/// `∫_a^b exp(−t²x²) dx · t·2/√π = erf(tb) − erf(ta)` without cancellation.
fn erf_diff(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        libm::erfc(a) - libm::erfc(b)
    } else if b <= 0.0 {
        libm::erfc(-b) - libm::erfc(-a)
    } else {
        libm::erf(b) - libm::erf(a)
    }
}

/// Average of `exp(−t²x²)` over the cell `[(d−½)h, (d+½)h]`; `d` is the cell
/// midpoint in units of `h` (half-integers for kernel cells).
pub fn gaussian_cell_average(t: f64, d: f64, h: f64) -> f64 {
    let a = t * (d - 0.5) * h;
    let b = t * (d + 0.5) * h;
    PI.sqrt() / (2.0 * t * h) * erf_diff(a, b)
}

fn gaussian_vector(t: f64, len: usize, center: usize, h: f64, integration: Integration) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let d = i as f64 - center as f64 - 0.5;
            match integration {
                Integration::Midpoint => (-(t * d * h).powi(2)).exp(),
                Integration::ExactErf => gaussian_cell_average(t, d, h),
            }
        })
        .collect()
}

/// Antiderivative of `1/‖x‖` for a nonnegative corner.
fn coulomb_antiderivative(x: f64, y: f64, z: f64) -> f64 {
    let r = (x * x + y * y + z * z).sqrt();
    if r == 0.0 {
        return 0.0;
    }
    let log_term = |p: f64, q: f64, s: f64| if p * q == 0.0 { 0.0 } else { p * q * (s + r).ln() };
    let atan_term = |s: f64, p: f64, q: f64| if s == 0.0 { 0.0 } else { 0.5 * s * s * (p * q / (s * r)).atan() };
    log_term(y, z, x) + log_term(x, z, y) + log_term(x, y, z) - atan_term(x, y, z) - atan_term(y, x, z) - atan_term(z, x, y)
}

/// Splits `[lo, hi]` at zero and reflects negative parts.
fn nonnegative_pieces(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    if lo >= 0.0 {
        vec![(lo, hi)]
    } else if hi <= 0.0 {
        vec![(-hi, -lo)]
    } else {
        vec![(0.0, -lo), (0.0, hi)]
    }
}

const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Mean of `1/‖x‖` over the box `lo..hi`: closed form near the origin, a 5³
/// Gauss rule far away (where the closed form cancels badly).
pub fn inverse_distance_average(lo: [f64; 3], hi: [f64; 3]) -> f64 {
    let diag = (0..3).map(|l| (hi[l] - lo[l]).powi(2)).sum::<f64>().sqrt();
    let dist = (0..3).map(|l| (lo[l].max(0.0) + (-hi[l]).max(0.0)).powi(2)).sum::<f64>().sqrt();
    let volume: f64 = (0..3).map(|l| hi[l] - lo[l]).product();
    if dist > 8.0 * diag {
        let mid = |l: usize, s: f64| 0.5 * (lo[l] + hi[l]) + 0.5 * (hi[l] - lo[l]) * s;
        let mut sum = 0.0;
        for (a, wa) in GAUSS5 {
            for (b, wb) in GAUSS5 {
                for (c, wc) in GAUSS5 {
                    let r = (mid(0, a).powi(2) + mid(1, b).powi(2) + mid(2, c).powi(2)).sqrt();
                    sum += wa * wb * wc / r;
                }
            }
        }
        return sum / 8.0;
    }
    let mut total = 0.0;
    for (x0, x1) in nonnegative_pieces(lo[0], hi[0]) {
        for (y0, y1) in nonnegative_pieces(lo[1], hi[1]) {
            for (z0, z1) in nonnegative_pieces(lo[2], hi[2]) {
                let f = coulomb_antiderivative;
                total += f(x1, y1, z1) - f(x0, y1, z1) - f(x1, y0, z1) - f(x1, y1, z0) + f(x0, y0, z1) + f(x0, y1, z0)
                    + f(x1, y0, z0)
                    - f(x0, y0, z0);
            }
        }
    }
    total / volume
}

fn check_grid(n: usize) -> Result<()> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "grid size must be even and at least 4, got {n}"
        )));
    }
    Ok(())
}

/// Relative threshold below which a term's largest entry is pruned.
pub const PRUNE_THRESHOLD: f64 = 1e-16;

/// CP form of the Newton-kernel collocation tensor. All three side matrices
/// are identical. The singularity sits on the vertex between cells `center`
/// and `center + 1`, so every column satisfies `p(center − k) = p(center + 1 + k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonCp {
    n: usize,
    center: usize,
    h: f64,
    exponents: Vec<f64>,
    integration: Integration,
    cp: CpTensor,
}

impl NewtonCp {
    fn build(
        len: usize,
        center: usize,
        h: f64,
        quad: &SincQuadrature,
        integration: Integration,
        prune: bool,
    ) -> Result<Self> {
        let cols: Vec<Vec<f64>> = quad
            .nodes()
            .par_iter()
            .map(|&t| gaussian_vector(t, len, center, h, integration))
            .collect();
        // a term's peak contribution: w_k · (max entry)³
        let peaks: Vec<f64> = cols
            .iter()
            .zip(quad.weights())
            .map(|(c, w)| w * c.iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(3))
            .collect();
        let lead = peaks.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..cols.len())
            .filter(|&k| !prune || peaks[k] >= PRUNE_THRESHOLD * lead)
            .collect();
        let side = Matrix::from_fn(len, keep.len(), |i, j| cols[keep[j]][i]);
        let weights: Vec<f64> = keep.iter().map(|&k| quad.weights()[k]).collect();
        let exponents: Vec<f64> = keep.iter().map(|&k| quad.nodes()[k]).collect();
        let cp = CpTensor::new(weights, [side.clone(), side.clone(), side])?;
        if cp.rank() != exponents.len() {
            return Err(Error::InvalidArgument("vanishing kernel column".into()));
        }
        Ok(Self {
            n: len,
            center,
            h,
            exponents,
            integration,
            cp,
        })
    }

    /// Kernel on the `n`-point grid, singular at the midpoint of `[-1, 1]`
    /// (center cell `n/2 − 1`).
    pub fn new(n: usize, quad: &SincQuadrature, integration: Integration) -> Result<Self> {
        check_grid(n)?;
        Self::build(n, n / 2 - 1, 2.0 / (n - 1) as f64, quad, integration, true)
    }

    /// Unpruned variant (every quadrature term kept).
    pub fn new_unpruned(n: usize, quad: &SincQuadrature, integration: Integration) -> Result<Self> {
        check_grid(n)?;
        Self::build(n, n / 2 - 1, 2.0 / (n - 1) as f64, quad, integration, false)
    }

    /// Reference kernel of length `2n` (same spacing as the `n` grid), centered
    /// at index `n−1`, for shift-and-window assembly.
    pub fn reference(n: usize, quad: &SincQuadrature, integration: Integration) -> Result<Self> {
        check_grid(n)?;
        Self::build(2 * n, n - 1, 2.0 / (n - 1) as f64, quad, integration, true)
    }

    pub(crate) fn from_parts(
        n: usize,
        center: usize,
        h: f64,
        exponents: Vec<f64>,
        integration: Integration,
        cp: CpTensor,
    ) -> Result<Self> {
        if exponents.len() != cp.rank() || cp.dims() != [n, n, n] || center >= n {
            return Err(Error::Format("inconsistent Newton kernel record".into()));
        }
        Ok(Self {
            n,
            center,
            h,
            exponents,
            integration,
            cp,
        })
    }

    /// Vector length.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn integration(&self) -> Integration {
        self.integration
    }

    pub fn cp(&self) -> &CpTensor {
        &self.cp
    }

    pub fn rank(&self) -> usize {
        self.cp.rank()
    }

    /// Unit-norm canonical vector `k` (shared by all modes).
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.cp.factor(1).column(k).iter().copied().collect()
    }

    /// Box of cell `idx` in physical coordinates.
    pub fn cell_box(&self, idx: [usize; 3]) -> ([f64; 3], [f64; 3]) {
        let lo = idx.map(|i| (i as f64 - self.center as f64 - 1.0) * self.h);
        (lo, lo.map(|a| a + self.h))
    }

    /// `cp` entry `idx`.
    pub fn entry(&self, idx: [usize; 3]) -> f64 {
        let f = self.cp.factor(1);
        (0..self.rank())
            .map(|k| self.cp.weights()[k] * f[(idx[0], k)] * f[(idx[1], k)] * f[(idx[2], k)])
            .sum()
    }

    /// Relative ℓ∞ deviation of the kernel from exact cell averages of
    /// `1/‖x‖`. Cells within `exclude` cells of the singular vertex in every
    /// mode are skipped (`exclude = 1` skips the 2³ cells touching it).
    /// With `full == false` only the middle slice `center` is checked.
    pub fn oracle_error(&self, exclude: usize, full: bool) -> f64 {
        let n = self.n;
        let c = self.center;
        let slices: Vec<usize> = if full { (0..n).collect() } else { vec![c] };
        let (num, den) = slices
            .par_iter()
            .flat_map_iter(|&k| (0..n).flat_map(move |j| (0..n).map(move |i| [i, j, k])))
            .filter(|idx| idx.iter().any(|&i| cell_distance(i, c) >= exclude))
            .map(|idx| {
                let (lo, hi) = self.cell_box(idx);
                let exact = inverse_distance_average(lo, hi);
                ((self.entry(idx) - exact).abs(), exact.abs())
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        num / den
    }

    /// Separates terms at support radius `sigma` (index units) with relative
    /// cut `tau_cut`.
    pub fn range_separate(&self, sigma: usize, tau_cut: f64) -> Result<RsSplit> {
        range_separate(self, sigma, tau_cut)
    }
}

/// A term partition of a Newton kernel into short- and long-range parts.
#[derive(Clone, Debug, PartialEq)]
pub struct RsSplit {
    pub sigma: usize,
    pub tau_cut: f64,
    /// Indices into the parent CP, ascending.
    pub short_terms: Vec<usize>,
    pub long_terms: Vec<usize>,
    pub short: CpTensor,
    pub long: CpTensor,
    /// Half-width (index units) outside which every short vector is below
    /// `tau_cut` of its maximum.
    pub gamma: usize,
    pub center: usize,
}

impl RsSplit {
    pub fn short_rank(&self) -> usize {
        self.short_terms.len()
    }

    pub fn long_rank(&self) -> usize {
        self.long_terms.len()
    }
}

/// Whole cells between cell `i` and the singular vertex above `center`.
pub fn cell_distance(i: usize, center: usize) -> usize {
    if i > center {
        i - center - 1
    } else {
        center - i
    }
}

fn tail_max(col: &[f64], center: usize, radius: usize) -> f64 {
    col.iter()
        .enumerate()
        .filter(|(i, _)| cell_distance(*i, center) >= radius)
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()))
}

/// Term `k` is short-range iff `|p_k(i)| < τ_cut · max |p_k|` for every cell at
/// least `σ` cells away from the singularity.
pub fn range_separate(kernel: &NewtonCp, sigma: usize, tau_cut: f64) -> Result<RsSplit> {
    let c = kernel.center();
    if sigma == 0 || sigma >= kernel.len() / 2 {
        return Err(Error::InvalidArgument(format!(
            "separation radius {sigma} must lie in 1..{}",
            kernel.len() / 2
        )));
    }
    if !(tau_cut >= 0.0 && tau_cut.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid cut {tau_cut}")));
    }
    let f = kernel.cp().factor(1);
    let mut short_terms = Vec::new();
    let mut long_terms = Vec::new();
    let mut gamma = 0;
    for k in 0..kernel.rank() {
        let col: Vec<f64> = f.column(k).iter().copied().collect();
        let peak = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if tail_max(&col, c, sigma) < tau_cut * peak {
            // smallest radius beyond which this vector is below the cut
            let g = (1..=sigma)
                .find(|&r| tail_max(&col, c, r) < tau_cut * peak)
                .unwrap_or(sigma);
            gamma = gamma.max(g);
            short_terms.push(k);
        } else {
            long_terms.push(k);
        }
    }
    let short = if short_terms.is_empty() {
        CpTensor::zero(kernel.cp().dims())
    } else {
        kernel.cp().select_terms(&short_terms)
    };
    let long = if long_terms.is_empty() {
        CpTensor::zero(kernel.cp().dims())
    } else {
        kernel.cp().select_terms(&long_terms)
    };
    Ok(RsSplit {
        sigma,
        tau_cut,
        short_terms,
        long_terms,
        short,
        long,
        gamma,
        center: c,
    })
}

/// Separation radius (index units) used when none is given: a fixed physical
/// radius of `0.35`, i.e. `⌈0.175 (n−1)⌉` cells, at least 8.
pub fn default_sigma(n: usize) -> usize {
    ((0.175 * (n.saturating_sub(1)) as f64).ceil() as usize).max(8)
}

pub const DEFAULT_TAU_CUT: f64 = 1e-4;

/// Default quadrature half-count.
pub const DEFAULT_QUAD_M: usize = 40;
