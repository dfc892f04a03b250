//! N-particle electrostatic potentials in range-separated form: particle
//! systems, shift-and-window assembly of the long-range CP part, the
//! cumulated short-range part and middle-slice error metrics.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chebtuck::ChebTuckFunction;
use crate::decomp::{rhosvd, RhosvdCriterion, TruncationReport};
use crate::error::{Error, Result};
use crate::newton::{cell_distance, RsSplit};
use crate::spline::uniform_grid;
use crate::tensor::{CpTensor, DenseTensor3, Matrix, TuckerTensor};

/// Point charges strictly inside `(-1, 1)³`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    centers: Vec<[f64; 3]>,
    charges: Vec<f64>,
}

impl ParticleSystem {
    pub fn new(centers: Vec<[f64; 3]>, charges: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidArgument("particle system is empty".into()));
        }
        if centers.len() != charges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} centers but {} charges",
                centers.len(),
                charges.len()
            )));
        }
        for (i, (x, z)) in centers.iter().zip(&charges).enumerate() {
            if !z.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("particle {i}")));
            }
            if x.iter().any(|v| v.abs() >= 1.0) {
                return Err(Error::InvalidArgument(format!("particle {i} at {x:?} lies outside the box")));
            }
        }
        Ok(Self { centers, charges })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[[f64; 3]] {
        &self.centers
    }

    pub fn charges(&self) -> &[f64] {
        &self.charges
    }

    /// First `count` particles.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        let k = count.min(self.len());
        Self::new(self.centers[..k].to_vec(), self.charges[..k].to_vec())
    }

    /// Union of two systems (`self` first).
    pub fn merged(&self, other: &Self) -> Self {
        let mut centers = self.centers.clone();
        centers.extend_from_slice(&other.centers);
        let mut charges = self.charges.clone();
        charges.extend_from_slice(&other.charges);
        Self { centers, charges }
    }

    /// Affinely maps raw coordinates (any units) into the box, keeping the
    /// aspect ratio and leaving `margin` on every side.
    pub fn fit_to_box(centers: &[[f64; 3]], charges: Vec<f64>, margin: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&margin) {
            return Err(Error::InvalidArgument(format!("margin {margin} outside [0, 1)")));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for x in centers {
            for l in 0..3 {
                lo[l] = lo[l].min(x[l]);
                hi[l] = hi[l].max(x[l]);
            }
        }
        let half = (0..3).map(|l| 0.5 * (hi[l] - lo[l])).fold(0.0f64, f64::max);
        let scale = if half > 0.0 { (1.0 - margin) / half } else { 0.0 };
        let mapped = centers
            .iter()
            .map(|x| std::array::from_fn(|l| (x[l] - 0.5 * (lo[l] + hi[l])) * scale))
            .collect();
        Self::new(mapped, charges)
    }

    /// Writes the `x y z charge` text format read by [`load_particles`].
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = String::with_capacity(64 * self.len());
        for (x, z) in self.centers.iter().zip(&self.charges) {
            s.push_str(&format!("{:?} {:?} {:?} {:?}\n", x[0], x[1], x[2], z));
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    /// Nearest grid vertex per particle: index `j` of the cell whose upper
    /// vertex `−1 + (j+½)h` is closest to the center.
    pub fn snap(&self, n: usize) -> Vec<[usize; 3]> {
        self.centers.iter().map(|x| std::array::from_fn(|l| snap_index(x[l], n))).collect()
    }

    /// Centers moved onto their snapped vertices.
    pub fn snapped_centers(&self, n: usize) -> Vec<[f64; 3]> {
        let h = 2.0 / (n - 1) as f64;
        self.snap(n)
            .iter()
            .map(|j| std::array::from_fn(|l| -1.0 + (j[l] as f64 + 0.5) * h))
            .collect()
    }
}

fn snap_index(x: f64, n: usize) -> usize {
    let u = (x + 1.0) * (n - 1) as f64 / 2.0 - 0.5;
    (u.round().max(0.0) as usize).min(n - 2)
}

/// Parses `x y z charge` lines; `#` starts a comment, blank lines are skipped.
pub fn load_particles(path: &Path) -> Result<ParticleSystem> {
    let text = std::fs::read_to_string(path)?;
    parse_particles(&text, &path.display().to_string())
}

pub fn parse_particles(text: &str, origin: &str) -> Result<ParticleSystem> {
    let mut centers = Vec::new();
    let mut charges = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.into(),
            line: no + 1,
            msg,
        };
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| err(format!("'{t}': {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        if vals[..3].iter().any(|v| v.abs() >= 1.0) {
            return Err(err(format!("center ({}, {}, {}) outside the box", vals[0], vals[1], vals[2])));
        }
        centers.push([vals[0], vals[1], vals[2]]);
        charges.push(vals[3]);
    }
    if centers.is_empty() {
        return Err(Error::Parse {
            path: origin.into(),
            line: 0,
            msg: "no particles".into(),
        });
    }
    ParticleSystem::new(centers, charges)
}

/// Lattice sites removed from a full lattice.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Vacancies {
    #[default]
    None,
    /// Linear site indices (first mode fastest).
    Indices(Vec<usize>),
    Random { count: usize, seed: u64 },
}

/// Spacing that leaves a margin of exactly one spacing for the longest side.
pub fn default_lattice_spacing(dims: [usize; 3]) -> f64 {
    2.0 / (dims.iter().copied().max().unwrap_or(1) + 1) as f64
}

/// Unit charges on a centered `L1×L2×L3` lattice minus vacancies.
pub fn generate_lattice(dims: [usize; 3], spacing: f64, vacancies: &Vacancies) -> Result<ParticleSystem> {
    if dims.iter().any(|&d| d == 0) || !(spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid lattice {dims:?} spacing {spacing}")));
    }
    for &d in &dims {
        let extent = 0.5 * (d - 1) as f64 * spacing;
        if extent + spacing > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "lattice {dims:?} with spacing {spacing} does not fit the box with margin"
            )));
        }
    }
    let total = dims[0] * dims[1] * dims[2];
    let removed: Vec<usize> = match vacancies {
        Vacancies::None => vec![],
        Vacancies::Indices(v) => {
            if let Some(bad) = v.iter().find(|&&i| i >= total) {
                return Err(Error::InvalidArgument(format!("vacancy index {bad} beyond {total} sites")));
            }
            v.clone()
        }
        Vacancies::Random { count, seed } => {
            if *count >= total {
                return Err(Error::InvalidArgument(format!("{count} vacancies leave no particles")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            sample(&mut rng, total, *count).into_vec()
        }
    };
    let mut keep = vec![true; total];
    for i in removed {
        keep[i] = false;
    }
    let coord = |i: usize, d: usize| (i as f64 - 0.5 * (d - 1) as f64) * spacing;
    let mut centers = Vec::new();
    for c in 0..dims[2] {
        for b in 0..dims[1] {
            for a in 0..dims[0] {
                if keep[a + dims[0] * (b + dims[1] * c)] {
                    centers.push([coord(a, dims[0]), coord(b, dims[1]), coord(c, dims[2])]);
                }
            }
        }
    }
    let charges = vec![1.0; centers.len()];
    ParticleSystem::new(centers, charges)
}

/// Radius of the ball the synthetic cluster is drawn from.
pub const CLUSTER_RADIUS: f64 = 0.6;
/// Default minimum pairwise distance inside a synthetic cluster.
pub const DEFAULT_MIN_SEPARATION: f64 = 0.04;
const CLUSTER_ATTEMPTS_PER_PARTICLE: usize = 2000;

/// Globular synthetic molecule: uniform rejection sampling in a ball with a
/// minimum pairwise distance, charges alternating `+1, −1, …`. Particles are
/// accepted sequentially, so a smaller `count` with the same seed yields a
/// prefix of a larger one.
pub fn generate_cluster(count: usize, seed: u64, min_separation: f64) -> Result<ParticleSystem> {
    if count == 0 || !(min_separation >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid cluster request N={count}, separation {min_separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<[f64; 3]> = Vec::with_capacity(count);
    let budget = CLUSTER_ATTEMPTS_PER_PARTICLE * count;
    let mut attempts = 0;
    let sep2 = min_separation * min_separation;
    while centers.len() < count {
        if attempts == budget {
            return Err(Error::PackingFailed {
                requested: count,
                placed: centers.len(),
                attempts,
            });
        }
        attempts += 1;
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-CLUSTER_RADIUS..CLUSTER_RADIUS));
        if x.iter().map(|v| v * v).sum::<f64>() > CLUSTER_RADIUS * CLUSTER_RADIUS {
            continue;
        }
        if centers
            .iter()
            .all(|y| (0..3).map(|l| (x[l] - y[l]).powi(2)).sum::<f64>() >= sep2)
        {
            centers.push(x);
        }
    }
    let charges = (0..count).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    ParticleSystem::new(centers, charges)
}

fn check_reference(split: &RsSplit, n: usize) -> Result<()> {
    let len = split.long.dims()[0].max(split.short.dims()[0]);
    if len != 2 * n || split.center != n - 1 {
        return Err(Error::DimensionMismatch(format!(
            "reference kernel of length {len} (center {}) does not match grid size {n}",
            split.center
        )));
    }
    Ok(())
}

/// Window of a reference vector for a particle snapped to cell `j`.
fn window(col: &[f64], j: usize, n: usize) -> impl Iterator<Item = f64> + '_ {
    col[n - 1 - j..2 * n - 1 - j].iter().copied()
}

/// Long-range part of the total potential as a CP tensor of rank `N·R_l`,
/// columns ordered particle-major. `split` must come from the reference
/// kernel of length `2n`.
pub fn assemble_long_range(sys: &ParticleSystem, split: &RsSplit, n: usize) -> Result<CpTensor> {
    check_reference(split, n)?;
    let long = &split.long;
    let rl = long.rank();
    if rl == 0 {
        return Ok(CpTensor::zero([n; 3]));
    }
    let cols: Vec<Vec<f64>> = (0..rl).map(|k| long.factor(1).column(k).iter().copied().collect()).collect();
    let snapped = sys.snap(n);
    let total = sys.len() * rl;
    let mut weights = Vec::with_capacity(total);
    for z in sys.charges() {
        weights.extend(long.weights().iter().map(|w| z * w));
    }
    let side = |l: usize| {
        let mut m = Matrix::zeros(n, total);
        m.as_mut_slice()
            .par_chunks_mut(n * rl)
            .zip(snapped.par_iter())
            .for_each(|(block, j)| {
                for (k, dst) in block.chunks_mut(n).enumerate() {
                    for (d, v) in dst.iter_mut().zip(window(&cols[k], j[l], n)) {
                        *d = v;
                    }
                }
            });
        m
    };
    CpTensor::new(weights, [side(0), side(1), side(2)])
}

/// RHOSVD of the assembled long-range CP.
pub fn compress_long_range(a: &CpTensor, eps: f64) -> Result<(TuckerTensor, TruncationReport)> {
    rhosvd(a, RhosvdCriterion::Tail(eps))
}

/// Short-range part of the total potential stored as one reference window
/// plus `(cell, charge)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ShortRangeCumulated {
    n: usize,
    gamma: usize,
    /// `R_s` columns of length `2γ+2`; row `γ` is the cell just below the
    /// singular vertex.
    window: Matrix,
    weights: Vec<f64>,
    particles: Vec<([usize; 3], f64)>,
    overlapping: bool,
}

impl ShortRangeCumulated {
    pub fn new(sys: &ParticleSystem, split: &RsSplit, n: usize) -> Result<Self> {
        check_reference(split, n)?;
        let g = split.gamma;
        let c = split.center;
        let rs = split.short.rank();
        let len = 2 * g + 2;
        let window = Matrix::from_fn(len, rs, |r, k| {
            let i = (c + r).checked_sub(g);
            match i {
                Some(i) if i < 2 * n => split.short.factor(1)[(i, k)],
                _ => 0.0,
            }
        });
        let particles: Vec<([usize; 3], f64)> = sys.snap(n).into_iter().zip(sys.charges().iter().copied()).collect();
        let reach = 2 * g + 1;
        let overlapping = particles.iter().enumerate().any(|(a, (ja, _))| {
            particles[a + 1..]
                .iter()
                .any(|(jb, _)| (0..3).all(|l| ja[l].abs_diff(jb[l]) <= reach))
        });
        Ok(Self {
            n,
            gamma: g,
            window,
            weights: split.short.weights().to_vec(),
            particles,
            overlapping,
        })
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn short_rank(&self) -> usize {
        self.weights.len()
    }

    pub fn particles(&self) -> &[([usize; 3], f64)] {
        &self.particles
    }

    /// Whether two particles' windows intersect (their values are summed).
    pub fn overlapping(&self) -> bool {
        self.overlapping
    }

    /// Stored numbers: window entries, weights and particle records.
    pub fn storage(&self) -> usize {
        self.window.len() + self.weights.len() + 4 * self.particles.len()
    }

    /// Row of the window for grid index `i` relative to a particle in cell `j`.
    fn row(&self, i: usize, j: usize) -> Option<usize> {
        let r = (i + self.gamma).checked_sub(j)?;
        (r < self.window.nrows()).then_some(r)
    }

    /// Value at one grid index.
    pub fn value(&self, idx: [usize; 3]) -> f64 {
        let mut s = 0.0;
        for (j, z) in &self.particles {
            let rows: Option<Vec<usize>> = (0..3).map(|l| self.row(idx[l], j[l])).collect();
            if let Some(r) = rows {
                let t: f64 = (0..self.weights.len())
                    .map(|k| self.weights[k] * self.window[(r[0], k)] * self.window[(r[1], k)] * self.window[(r[2], k)])
                    .sum();
                s += z * t;
            }
        }
        s
    }

    /// Adds every particle's window to `t` (clipped at the grid boundary).
    pub fn add_to(&self, t: &mut DenseTensor3) -> Result<()> {
        if t.dims() != [self.n; 3] {
            return Err(Error::DimensionMismatch(format!("expected {}³ tensor", self.n)));
        }
        let w = self.window.nrows();
        for (j, z) in &self.particles {
            let lo: [usize; 3] = std::array::from_fn(|l| j[l].saturating_sub(self.gamma));
            let hi: [usize; 3] = std::array::from_fn(|l| (j[l] + w - self.gamma).min(self.n));
            for k in 0..self.weights.len() {
                let s = z * self.weights[k];
                for c in lo[2]..hi[2] {
                    let v3 = s * self.window[(c + self.gamma - j[2], k)];
                    for b in lo[1]..hi[1] {
                        let v23 = v3 * self.window[(b + self.gamma - j[1], k)];
                        for a in lo[0]..hi[0] {
                            let v = t.get(a, b, c) + v23 * self.window[(a + self.gamma - j[0], k)];
                            t.set(a, b, c, v);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Frontal slice `k` of the short part.
    pub fn slice(&self, k: usize) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n, n);
        for (j, z) in &self.particles {
            let Some(r3) = self.row(k, j[2]) else { continue };
            let lo = [j[0].saturating_sub(self.gamma), j[1].saturating_sub(self.gamma)];
            let hi = [
                (j[0] + self.window.nrows() - self.gamma).min(n),
                (j[1] + self.window.nrows() - self.gamma).min(n),
            ];
            for q in 0..self.weights.len() {
                let s = z * self.weights[q] * self.window[(r3, q)];
                for b in lo[1]..hi[1] {
                    let v = s * self.window[(b + self.gamma - j[1], q)];
                    for a in lo[0]..hi[0] {
                        out[(a, b)] += v * self.window[(a + self.gamma - j[0], q)];
                    }
                }
            }
        }
        out
    }
}

/// Cell `j` of the reference window, distance-checked: true when grid index
/// `i` lies within `gamma` whole cells of a particle in cell `j`.
pub fn within_window(i: usize, j: usize, gamma: usize, n: usize) -> bool {
    cell_distance(i + n - 1 - j, n - 1) <= gamma
}

/// Range-separated total potential.
#[derive(Clone, Debug)]
pub struct RsPotential {
    pub n: usize,
    pub long: CpTensor,
    pub compressed: Option<(TuckerTensor, TruncationReport)>,
    pub short: ShortRangeCumulated,
}

impl RsPotential {
    pub fn assemble(sys: &ParticleSystem, split: &RsSplit, n: usize) -> Result<Self> {
        Ok(Self {
            n,
            long: assemble_long_range(sys, split, n)?,
            compressed: None,
            short: ShortRangeCumulated::new(sys, split, n)?,
        })
    }

    pub fn gamma(&self) -> usize {
        self.short.gamma()
    }

    pub fn compress(&mut self, eps: f64) -> Result<&TruncationReport> {
        let c = compress_long_range(&self.long, eps)?;
        Ok(&self.compressed.insert(c).1)
    }

    /// Slice of long + short parts.
    pub fn slice(&self, k: usize) -> Matrix {
        self.long.frontal_slice(k) + self.short.slice(k)
    }
}

/// Anything that can produce frontal slices of an `n×n×n` grid tensor.
pub trait GridSlice {
    /// Slice `k` (0-based third index) on the grid of size `n`.
    fn grid_slice(&self, n: usize, k: usize) -> Result<Matrix>;
}

fn check_cube(dims: [usize; 3], n: usize, k: usize) -> Result<()> {
    if dims != [n; 3] || k >= n {
        return Err(Error::DimensionMismatch(format!("slice {k} of a {dims:?} tensor on grid {n}")));
    }
    Ok(())
}

impl GridSlice for DenseTensor3 {
    fn grid_slice(&self, n: usize, k: usize) -> Result<Matrix> {
        check_cube(self.dims(), n, k)?;
        Ok(self.frontal_slice(k))
    }
}

impl GridSlice for CpTensor {
    fn grid_slice(&self, n: usize, k: usize) -> Result<Matrix> {
        check_cube(self.dims(), n, k)?;
        Ok(self.frontal_slice(k))
    }
}

impl GridSlice for TuckerTensor {
    fn grid_slice(&self, n: usize, k: usize) -> Result<Matrix> {
        check_cube(self.dims(), n, k)?;
        Ok(self.frontal_slice(k))
    }
}

impl GridSlice for ChebTuckFunction {
    fn grid_slice(&self, n: usize, k: usize) -> Result<Matrix> {
        if k >= n || n < 2 {
            return Err(Error::DimensionMismatch(format!("slice {k} on grid {n}")));
        }
        let t = uniform_grid(n);
        let sub = self.evaluate_points([&t, &t, &t[k..k + 1]])?;
        Ok(sub.frontal_slice(0))
    }
}

impl GridSlice for RsPotential {
    fn grid_slice(&self, n: usize, k: usize) -> Result<Matrix> {
        check_cube([self.n; 3], n, k)?;
        Ok(self.slice(k))
    }
}

/// Third index of the middle slice.
pub fn middle_index(n: usize) -> usize {
    n / 2 - 1
}

/// `max |a − r| / max |r|` over two equally sized slices.
pub fn relative_max_error(approx: &Matrix, reference: &Matrix) -> Result<f64> {
    if approx.shape() != reference.shape() {
        return Err(Error::DimensionMismatch("slice shapes differ".into()));
    }
    let den = reference.amax();
    if den == 0.0 {
        return Err(Error::InvalidArgument("reference slice is zero".into()));
    }
    Ok((approx - reference).amax() / den)
}

/// Relative ℓ∞ error on the middle slice `i₃ = n/2` (0-based `n/2 − 1`).
pub fn middle_slice_error(approx: &impl GridSlice, reference: &impl GridSlice, n: usize) -> Result<f64> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!("grid size {n} must be even and at least 4")));
    }
    let k = middle_index(n);
    relative_max_error(&approx.grid_slice(n, k)?, &reference.grid_slice(n, k)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton::{Integration, NewtonCp, SincQuadrature};

    fn kernels(n: usize, sigma: usize) -> (NewtonCp, RsSplit, RsSplit) {
        let q = SincQuadrature::for_grid(24, n).unwrap();
        let k = NewtonCp::new(n, &q, Integration::ExactErf).unwrap();
        let r = NewtonCp::reference(n, &q, Integration::ExactErf).unwrap();
        let ks = k.range_separate(sigma, 1e-4).unwrap();
        let rs = r.range_separate(sigma, 1e-4).unwrap();
        (k, ks, rs)
    }

    #[test]
    fn parsing() {
        let s = parse_particles("# header\n0 0 0 1.0\n\n 0.5 -0.25 0.1 -2 # tail\n", "mem").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.centers()[1], [0.5, -0.25, 0.1]);
        assert_eq!(s.charges(), &[1.0, -2.0]);
        assert!(matches!(parse_particles("", "mem"), Err(Error::Parse { .. })));
        match parse_particles("0 0 0 1\n0 0 x 1\n", "mem") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_particles("0 0 1.5 1\n", "mem").is_err());
        assert!(parse_particles("0 0 0\n", "mem").is_err());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.txt");
        let c = generate_cluster(20, 3, 0.05).unwrap();
        c.save(&p).unwrap();
        assert_eq!(load_particles(&p).unwrap(), c);
    }

    #[test]
    fn lattice_generation() {
        let sp = default_lattice_spacing([2, 2, 1]);
        assert_eq!(generate_lattice([2, 2, 1], sp, &Vacancies::None).unwrap().len(), 4);
        let big = [24, 24, 4];
        assert_eq!(generate_lattice(big, default_lattice_spacing(big), &Vacancies::None).unwrap().len(), 2304);
        let v = generate_lattice([3, 3, 3], 0.4, &Vacancies::Random { count: 2, seed: 7 }).unwrap();
        assert_eq!(v.len(), 25);
        assert_eq!(v, generate_lattice([3, 3, 3], 0.4, &Vacancies::Random { count: 2, seed: 7 }).unwrap());
        assert_eq!(generate_lattice([3, 3, 3], 0.4, &Vacancies::Indices(vec![13])).unwrap().len(), 26);
        assert!(generate_lattice([3, 3, 3], 0.6, &Vacancies::None).is_err());
        let c = generate_lattice([3, 1, 1], 0.5, &Vacancies::None).unwrap();
        assert_eq!(c.centers()[1], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn cluster_generation() {
        let a = generate_cluster(200, 42, DEFAULT_MIN_SEPARATION).unwrap();
        let b = generate_cluster(200, 42, DEFAULT_MIN_SEPARATION).unwrap();
        assert_eq!(a, b);
        assert_eq!(generate_cluster(1, 42, 0.1).unwrap().len(), 1);
        assert_eq!(a.truncated(50).unwrap(), generate_cluster(50, 42, DEFAULT_MIN_SEPARATION).unwrap());
        for i in 0..a.len() {
            for j in 0..i {
                let d: f64 = (0..3).map(|l| (a.centers()[i][l] - a.centers()[j][l]).powi(2)).sum::<f64>().sqrt();
                assert!(d >= DEFAULT_MIN_SEPARATION);
            }
        }
        assert_eq!(a.charges()[0], 1.0);
        assert_eq!(a.charges()[1], -1.0);
        assert!(matches!(generate_cluster(10, 1, 1.5), Err(Error::PackingFailed { .. })));
    }

    #[test]
    fn snapping() {
        let n = 16;
        let h = 2.0 / 15.0;
        let s = ParticleSystem::new(vec![[0.0, -1.0 + 3.5 * h, 0.999]], vec![1.0]).unwrap();
        assert_eq!(s.snap(n)[0], [7, 3, 14]);
        let on = s.snapped_centers(n)[0];
        assert!(on[0].abs() < 1e-15 && (on[1] - s.centers()[0][1]).abs() < 1e-15);
        let again = ParticleSystem::new(vec![on], vec![1.0]).unwrap();
        assert_eq!(again.snap(n), s.snap(n));
    }

    #[test]
    fn single_center_particle_reproduces_kernel() {
        let n = 32;
        let (_, ks, rs) = kernels(n, 4);
        let sys = ParticleSystem::new(vec![[0.0; 3]], vec![1.0]).unwrap();
        let a = assemble_long_range(&sys, &rs, n).unwrap();
        assert_eq!(a.rank(), rs.long_rank());
        assert_eq!(ks.long_rank(), rs.long_rank());
        let d = a.to_dense().max_abs_diff(&ks.long.to_dense()).unwrap();
        assert!(d <= 1e-12 * ks.long.to_dense().max_abs(), "{d}");
    }

    #[test]
    fn mirror_antisymmetry_and_linearity() {
        let n = 32;
        let (_, _, rs) = kernels(n, 4);
        let h = 2.0 / (n - 1) as f64;
        let x = [-1.0 + 10.5 * h, -1.0 + 12.5 * h, -1.0 + 15.5 * h];
        let mirror = |x: [f64; 3]| x.map(|v: f64| -v);
        let sys = ParticleSystem::new(vec![x, mirror(x)], vec![1.0, -1.0]).unwrap();
        let t = assemble_long_range(&sys, &rs, n).unwrap().to_dense();
        let mut worst = 0.0f64;
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    worst = worst.max((t.get(i, j, k) + t.get(n - 1 - i, n - 1 - j, n - 1 - k)).abs());
                }
            }
        }
        assert!(worst <= 1e-12, "{worst}");

        let s1 = generate_cluster(5, 1, 0.05).unwrap();
        let s2 = generate_cluster(4, 2, 0.05).unwrap();
        let both = assemble_long_range(&s1.merged(&s2), &rs, n).unwrap().to_dense();
        let sum = assemble_long_range(&s1, &rs, n)
            .unwrap()
            .to_dense()
            .add(&assemble_long_range(&s2, &rs, n).unwrap().to_dense())
            .unwrap();
        assert!(both.max_abs_diff(&sum).unwrap() <= 1e-12 * sum.max_abs());
    }

    #[test]
    fn assembly_matches_dense_shift_window() {
        let n = 32;
        let (_, _, rs) = kernels(n, 4);
        let sys = generate_cluster(20, 9, 0.05).unwrap();
        let a = assemble_long_range(&sys, &rs, n).unwrap().to_dense();
        let long: Vec<Vec<f64>> = (0..rs.long_rank()).map(|k| rs.long.factor(1).column(k).iter().copied().collect()).collect();
        let w = rs.long.weights();
        let snapped = sys.snap(n);
        let brute = DenseTensor3::from_fn([n; 3], |i, j, k| {
            let mut s = 0.0;
            for (p, z) in snapped.iter().zip(sys.charges()) {
                for q in 0..long.len() {
                    s += z * w[q] * long[q][i + n - 1 - p[0]] * long[q][j + n - 1 - p[1]] * long[q][k + n - 1 - p[2]];
                }
            }
            s
        });
        assert!(a.max_abs_diff(&brute).unwrap() <= 1e-12 * brute.max_abs());
        assert!(matches!(assemble_long_range(&sys, &rs, 16), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn short_range_cumulated() {
        let n = 32;
        let (_, _, rs) = kernels(n, 4);
        let sys = generate_cluster(6, 5, 0.3).unwrap();
        let s = ShortRangeCumulated::new(&sys, &rs, n).unwrap();
        let g = s.gamma();
        // brute force: every particle's full shifted short part
        let short: Vec<Vec<f64>> = (0..rs.short_rank()).map(|k| rs.short.factor(1).column(k).iter().copied().collect()).collect();
        let w = rs.short.weights();
        let snapped = sys.snap(n);
        let brute = DenseTensor3::from_fn([n; 3], |i, j, k| {
            let mut v = 0.0;
            for (p, z) in snapped.iter().zip(sys.charges()) {
                let idx = [i, j, k];
                if (0..3).all(|l| within_window(idx[l], p[l], g, n)) {
                    for q in 0..short.len() {
                        v += z * w[q] * (0..3).map(|l| short[q][idx[l] + n - 1 - p[l]]).product::<f64>();
                    }
                }
            }
            v
        });
        let mut dense = DenseTensor3::zeros([n; 3]);
        s.add_to(&mut dense).unwrap();
        assert!(dense.max_abs_diff(&brute).unwrap() <= 1e-12 * brute.max_abs());
        for (i, j, k) in [(0, 0, 0), (5, 9, 13), (16, 15, 15), (31, 2, 20)] {
            assert!((s.value([i, j, k]) - dense.get(i, j, k)).abs() <= 1e-12 * brute.max_abs());
        }
        let slice = s.slice(11);
        assert!((slice - dense.frontal_slice(11)).amax() <= 1e-12 * brute.max_abs());

        let one = ParticleSystem::new(vec![[0.0; 3]], vec![-2.0]).unwrap();
        let s1 = ShortRangeCumulated::new(&one, &rs, n).unwrap();
        let c = n / 2 - 1;
        let center: f64 = (0..rs.short_rank()).map(|q| w[q] * short[q][n - 1].powi(3)).sum();
        assert!((s1.value([c, c, c]) + 2.0 * center).abs() <= 1e-12 * center.abs());
        assert_eq!(s1.value([0, 0, 0]), 0.0);
        assert!(!s1.overlapping());
        assert!(s1.storage() < 4 * (g + 1) * rs.short_rank() + 8);
    }

    #[test]
    fn slice_error_metric() {
        let n = 8;
        let t = DenseTensor3::from_fn([n; 3], |i, j, k| 1.0 + (i + j + k) as f64 / 20.0);
        assert_eq!(middle_slice_error(&t, &t, n).unwrap(), 0.0);
        let mut r = DenseTensor3::zeros([n; 3]);
        r.set(2, 5, middle_index(n), 2.0);
        let mut a = r.clone();
        a.set(1, 1, middle_index(n), 1e-3);
        assert!((middle_slice_error(&a, &r, n).unwrap() - 5e-4).abs() < 1e-15);
        assert!(middle_slice_error(&a, &DenseTensor3::zeros([n; 3]), n).is_err());
        let cp = CpTensor::new(vec![1.0], [Matrix::from_element(n, 1, 1.0), Matrix::from_element(n, 1, 1.0), Matrix::from_element(n, 1, 1.0)]).unwrap();
        assert!(middle_slice_error(&cp, &cp.to_dense(), n).unwrap() < 1e-15);
    }

    #[test]
    fn long_range_compression_and_chebtuck() {
        let n = 32;
        let (_, _, rs) = kernels(n, 8);
        let one = ParticleSystem::new(vec![[0.3, -0.2, 0.1]], vec![1.0]).unwrap();
        let mut pot = RsPotential::assemble(&one, &rs, n).unwrap();
        let rep = pot.compress(1e-8).unwrap().clone();
        assert!(rep.ranks.iter().all(|&r| r <= rs.long_rank()));
        let (tk, _) = pot.compressed.as_ref().unwrap();
        assert!(middle_slice_error(tk, &pot.long, n).unwrap() <= 1e-6);
        let g = ChebTuckFunction::build_from_cp(&pot.long, [33; 3], 1e-8).unwrap();
        let e = middle_slice_error(&g, &pot.long, n).unwrap();
        assert!(e <= 1e-3, "{e}");
        let total = pot.grid_slice(n, 3).unwrap();
        assert_eq!(total.shape(), (n, n));
        let rank1 = CpTensor::new(vec![1.0], [Matrix::from_element(5, 1, 1.0), Matrix::from_element(6, 1, 1.0), Matrix::from_element(7, 1, 1.0)]).unwrap();
        assert_eq!(compress_long_range(&rank1, 1e-6).unwrap().1.ranks, [1, 1, 1]);
    }
}
