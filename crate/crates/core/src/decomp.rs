//! Truncated SVD, HOSVD, Tucker-ALS and the reduced HOSVD of CP tensors.

use nalgebra::linalg::SVD;

use crate::error::{Error, Result};
use crate::tensor::{unique_columns, CpTensor, DenseTensor3, Matrix, TuckerTensor};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// How many singular triplets to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    /// Smallest rank whose discarded energy is at most `tol² ‖M‖_F²`.
    RelTol(f64),
    /// Smallest rank whose discarded energy is at most `tol²`.
    AbsTol(f64),
    Rank(usize),
}

/// Result of [`truncated_svd`]. `sigma` holds *all* singular values, `u`/`v`
/// only the retained `rank` columns.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
    pub rank: usize,
    pub tail_energy: f64,
}

/// `tails[r] = Σ_{k ≥ r} σ_k²` (zero-based), length `σ.len() + 1`.
pub fn tail_energies(sigma: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; sigma.len() + 1];
    for k in (0..sigma.len()).rev() {
        t[k] = t[k + 1] + sigma[k] * sigma[k];
    }
    t
}

/// Smallest `r ≥ min_rank` with `tails[r] ≤ budget`.
fn rank_for_budget(tails: &[f64], budget: f64, min_rank: usize) -> usize {
    let full = tails.len() - 1;
    (min_rank.min(full)..=full)
        .find(|&r| tails[r] <= budget)
        .unwrap_or(full)
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    Ok(())
}

fn sorted_svd(m: Matrix, want_v: bool) -> (Matrix, Vec<f64>, Option<Matrix>) {
    let svd = SVD::new(m, true, want_v);
    let u = svd.u.expect("requested U");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    let u_sorted = Matrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let sigma = order.iter().map(|&k| s[k]).collect();
    let v = svd.v_t.map(|vt| Matrix::from_fn(vt.ncols(), order.len(), |i, j| vt[(order[j], i)]));
    (u_sorted, sigma, v)
}

/// Thin SVD with descending singular values. Wide matrices go through a QR
/// factorization of the transpose first.
fn thin_svd(m: &Matrix, want_v: bool) -> (Matrix, Vec<f64>, Option<Matrix>) {
    if m.ncols() > m.nrows() {
        // Mᵀ = Q R  ⇒  M = Rᵀ Qᵀ; the SVD of the small square Rᵀ gives U and σ
        let qr = m.transpose().qr();
        let r = qr.r();
        let (u, s, w) = sorted_svd(r.transpose(), want_v);
        let v = w.map(|w| qr.q() * w);
        (u, s, v)
    } else {
        sorted_svd(m.clone(), want_v)
    }
}

/// Left singular vectors and all singular values (descending).
pub fn left_singular(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    weighted_left_singular(m, &vec![1.0; m.ncols()])
}

/// Left singular pairs of `M diag(√energy)`. Bitwise-repeated columns are
/// merged first (`Σ e_k u uᵀ` over the repeats).
pub fn weighted_left_singular(m: &Matrix, energy: &[f64]) -> Result<(Matrix, Vec<f64>)> {
    check_finite(m)?;
    if energy.len() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("{} column energies for {} columns", energy.len(), m.ncols())));
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok((Matrix::zeros(m.nrows(), 0), Vec::new()));
    }
    let (reps, map) = unique_columns(m);
    let mut merged = vec![0.0; reps.len()];
    for (k, &g) in map.iter().enumerate() {
        merged[g] += energy[k];
    }
    let reduced = Matrix::from_fn(m.nrows(), reps.len(), |i, g| m[(i, reps[g])] * merged[g].sqrt());
    let (u, s, _) = thin_svd(&reduced, false);
    Ok((u, s))
}

/// Per-mode singular pairs of the balanced side matrices `U_ℓ diag(|ξ|^{1/3})`.
pub fn rhosvd_side_svds(c: &CpTensor) -> Result<[(Matrix, Vec<f64>); 3]> {
    let energy: Vec<f64> = c.weights().iter().map(|w| w.abs().powf(2.0 / 3.0)).collect();
    let [a, b, d] = c.factors();
    Ok([
        weighted_left_singular(a, &energy)?,
        weighted_left_singular(b, &energy)?,
        weighted_left_singular(d, &energy)?,
    ])
}

pub fn truncated_svd(m: &Matrix, trunc: Truncation) -> Result<SvdResult> {
    check_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(SvdResult {
            u: Matrix::zeros(m.nrows(), 0),
            sigma: Vec::new(),
            v: Matrix::zeros(m.ncols(), 0),
            rank: 0,
            tail_energy: 0.0,
        });
    }
    let (u, sigma, v) = thin_svd(m, true);
    let v = v.expect("requested V");
    let tails = tail_energies(&sigma);
    let rank = match trunc {
        Truncation::RelTol(tol) => rank_for_budget(&tails, tol * tol * tails[0], 0),
        Truncation::AbsTol(tol) => rank_for_budget(&tails, tol * tol, 0),
        Truncation::Rank(r) => r.min(sigma.len()),
    };
    Ok(SvdResult {
        u: u.columns(0, rank).into_owned(),
        v: v.columns(0, rank).into_owned(),
        tail_energy: tails[rank],
        sigma,
        rank,
    })
}

/// Diagnostics of a Tucker truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationReport {
    pub ranks: [usize; 3],
    /// Discarded energy per mode, `Σ_{k > r_ℓ} σ_k²`.
    pub tails: [f64; 3],
    /// All singular values per mode (of the unfolding or side matrix).
    pub singular_values: [Vec<f64>; 3],
    /// Relative Frobenius error: measured for dense input, an a-priori bound
    /// relative to `‖β‖_F` for CP input.
    pub rel_error: f64,
    pub iterations: usize,
}

impl TruncationReport {
    pub fn max_rank(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(0)
    }
}

fn unit_factor(n: usize) -> Matrix {
    let mut e = Matrix::zeros(n, 1);
    if n > 0 {
        e[(0, 0)] = 1.0;
    }
    e
}

fn zero_tucker(dims: [usize; 3]) -> Result<(TuckerTensor, TruncationReport)> {
    let t = TuckerTensor::new(
        DenseTensor3::zeros([1, 1, 1]),
        [unit_factor(dims[0]), unit_factor(dims[1]), unit_factor(dims[2])],
    )?;
    Ok((
        t,
        TruncationReport {
            ranks: [1, 1, 1],
            tails: [0.0; 3],
            singular_values: [vec![], vec![], vec![]],
            rel_error: 0.0,
            iterations: 0,
        },
    ))
}

fn project(t: &DenseTensor3, factors: &[Matrix; 3]) -> Result<DenseTensor3> {
    let vt = [factors[0].transpose(), factors[1].transpose(), factors[2].transpose()];
    t.multiply_all([&vt[0], &vt[1], &vt[2]])
}

fn check_tensor(t: &DenseTensor3) -> Result<()> {
    if t.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tensor entry".into()));
    }
    Ok(())
}

/// Mode unfoldings' left singular vectors and values.
fn mode_svds(t: &DenseTensor3) -> Result<[(Matrix, Vec<f64>); 3]> {
    Ok([
        left_singular(&t.unfold(1)?)?,
        left_singular(&t.unfold(2)?)?,
        left_singular(&t.unfold(3)?)?,
    ])
}

fn hosvd_from_svds(
    t: &DenseTensor3,
    svds: [(Matrix, Vec<f64>); 3],
    ranks: [usize; 3],
) -> Result<(TuckerTensor, TruncationReport)> {
    let mut factors: [Matrix; 3] = Default::default();
    let mut tails = [0.0; 3];
    let mut sv: [Vec<f64>; 3] = Default::default();
    for (l, (u, s)) in svds.into_iter().enumerate() {
        let r = ranks[l].min(u.ncols()).max(1);
        factors[l] = u.columns(0, r).into_owned();
        tails[l] = tail_energies(&s)[r];
        sv[l] = s;
    }
    let core = project(t, &factors)?;
    let tucker = TuckerTensor::new(core, factors)?;
    let rel_error = dense_rel_error(t, &tucker)?;
    let ranks = tucker.ranks();
    Ok((
        tucker,
        TruncationReport {
            ranks,
            tails,
            singular_values: sv,
            rel_error,
            iterations: 0,
        },
    ))
}

fn dense_rel_error(t: &DenseTensor3, approx: &TuckerTensor) -> Result<f64> {
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(t.sub(&approx.to_dense())?.frobenius_norm() / norm)
}

fn hosvd_ranks_for(svds: &[(Matrix, Vec<f64>); 3], eps: f64) -> [usize; 3] {
    let mut ranks = [0; 3];
    for l in 0..3 {
        let tails = tail_energies(&svds[l].1);
        let budget = (eps / SQRT3).powi(2) * tails[0];
        ranks[l] = rank_for_budget(&tails, budget, 1);
    }
    ranks
}

/// Truncated HOSVD with per-mode relative budget `ε/√3`.
pub fn hosvd(t: &DenseTensor3, eps: f64) -> Result<(TuckerTensor, TruncationReport)> {
    check_tensor(t)?;
    if t.frobenius_norm() == 0.0 {
        return zero_tucker(t.dims());
    }
    let svds = mode_svds(t)?;
    let ranks = hosvd_ranks_for(&svds, eps);
    hosvd_from_svds(t, svds, ranks)
}

/// HOSVD truncated at prescribed ranks.
pub fn hosvd_fixed(t: &DenseTensor3, ranks: [usize; 3]) -> Result<(TuckerTensor, TruncationReport)> {
    check_tensor(t)?;
    if t.frobenius_norm() == 0.0 {
        return zero_tucker(t.dims());
    }
    hosvd_from_svds(t, mode_svds(t)?, ranks)
}

pub const ALS_MAX_SWEEPS: usize = 50;

/// ALS sweeps at fixed ranks starting from `factors`. Returns the refined
/// factors and the number of sweeps. Stops once the relative fit gain drops
/// below `stop`.
fn als_sweeps(
    t: &DenseTensor3,
    mut factors: [Matrix; 3],
    stop: f64,
    max_sweeps: usize,
) -> Result<([Matrix; 3], usize)> {
    let norm = t.frobenius_norm();
    let mut fit = project(t, &factors)?.frobenius_norm() / norm;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        for l in 0..3 {
            let (a, b) = match l {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let y = t
                .mode_multiply(&factors[a].transpose(), a + 1)?
                .mode_multiply(&factors[b].transpose(), b + 1)?;
            let r = factors[l].ncols();
            let (u, _) = left_singular(&y.unfold(l + 1)?)?;
            factors[l] = u.columns(0, r.min(u.ncols())).into_owned();
        }
        let new_fit = project(t, &factors)?.frobenius_norm() / norm;
        let gain = new_fit - fit;
        fit = new_fit;
        if gain < stop {
            break;
        }
    }
    Ok((factors, sweeps))
}

/// Tucker-ALS at prescribed ranks from an HOSVD start.
pub fn tucker_als_fixed(
    t: &DenseTensor3,
    ranks: [usize; 3],
    stop: f64,
) -> Result<(TuckerTensor, TruncationReport)> {
    check_tensor(t)?;
    if t.frobenius_norm() == 0.0 {
        return zero_tucker(t.dims());
    }
    let (init, mut report) = hosvd_fixed(t, ranks)?;
    let (factors, sweeps) = als_sweeps(t, init.factors().clone(), stop, ALS_MAX_SWEEPS)?;
    let core = project(t, &factors)?;
    let tucker = TuckerTensor::new(core, factors)?;
    report.rel_error = dense_rel_error(t, &tucker)?;
    report.iterations = sweeps;
    Ok((tucker, report))
}

/// Tucker-ALS with relative accuracy `ε`: HOSVD ranks, ALS refinement until the
/// fit gain drops below `0.01 ε` (at most 50 sweeps), and rank escalation if the
/// densely measured error still exceeds `ε`.
pub fn tucker_als(t: &DenseTensor3, eps: f64) -> Result<(TuckerTensor, TruncationReport)> {
    check_tensor(t)?;
    if t.frobenius_norm() == 0.0 {
        return zero_tucker(t.dims());
    }
    let dims = t.dims();
    let svds = mode_svds(t)?;
    let mut ranks = hosvd_ranks_for(&svds, eps);
    let mut total_sweeps = 0;
    loop {
        let (init, mut report) = hosvd_from_svds(t, svds.clone(), ranks)?;
        let (factors, sweeps) =
            als_sweeps(t, init.factors().clone(), 0.01 * eps, ALS_MAX_SWEEPS)?;
        total_sweeps += sweeps;
        let core = project(t, &factors)?;
        let tucker = TuckerTensor::new(core, factors)?;
        let err = dense_rel_error(t, &tucker)?;
        let full = (0..3).all(|l| ranks[l] >= dims[l].min(svds[l].1.len()));
        if err <= eps || full {
            report.rel_error = err;
            report.iterations = total_sweeps;
            report.ranks = tucker.ranks();
            return Ok((tucker, report));
        }
        // escalate every mode that still discards energy
        let mut grown = false;
        for l in 0..3 {
            let limit = svds[l].1.len();
            if ranks[l] < limit && tail_energies(&svds[l].1)[ranks[l]] > 0.0 {
                ranks[l] += 1;
                grown = true;
            }
        }
        if !grown {
            for l in 0..3 {
                ranks[l] = (ranks[l] + 1).min(svds[l].1.len());
            }
        }
    }
}

/// Rank rule for [`rhosvd`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RhosvdCriterion {
    /// Per mode: `√tail_ℓ ≤ (ε/√3)·‖U_ℓ‖_F`.
    Tail(f64),
    /// Minimal ranks with `m^{3/2} ‖ξ‖ Σ_ℓ √tail_ℓ ≤ budget`, `m` the largest mode size.
    Bound(f64),
    Ranks([usize; 3]),
}

/// Largest-first greedy rank growth followed by a decrement pass, so that
/// no single mode can be lowered without violating `accept`.
///
/// `tails[ℓ][r]` is the discarded energy at rank `r`. Returns `None` when even
/// full ranks are rejected.
pub fn select_ranks(tails: &[Vec<f64>; 3], accept: impl Fn([f64; 3]) -> bool) -> Option<[usize; 3]> {
    let full: [usize; 3] = [tails[0].len() - 1, tails[1].len() - 1, tails[2].len() - 1];
    let at = |r: [usize; 3]| [tails[0][r[0]], tails[1][r[1]], tails[2][r[2]]];
    let mut r = [1usize.min(full[0]), 1usize.min(full[1]), 1usize.min(full[2])];
    while !accept(at(r)) {
        // grow the mode that currently discards the most
        let pick = (0..3)
            .filter(|&l| r[l] < full[l])
            .max_by(|&a, &b| {
                let ta = tails[a][r[a]];
                let tb = tails[b][r[b]];
                ta.partial_cmp(&tb).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
            })?;
        r[pick] += 1;
    }
    loop {
        let mut changed = false;
        for l in 0..3 {
            while r[l] > 1 {
                let mut trial = r;
                trial[l] -= 1;
                if accept(at(trial)) {
                    r = trial;
                    changed = true;
                } else {
                    break;
                }
            }
        }
        if !changed {
            return Some(r);
        }
    }
}

/// A-priori bound `m^{d/2} ‖ξ‖ Σ_ℓ √tail_ℓ` of the RHOSVD truncation. With
/// the balanced side matrices of [`rhosvd`], pass
/// [`CpTensor::balanced_weight_norm`] as `xi_norm`; with `m = 1` this bounds
/// the tensor error itself.
pub fn rhosvd_error_bound(report: &TruncationReport, xi_norm: f64, m: usize, d: usize) -> f64 {
    (m as f64).powf(d as f64 / 2.0) * xi_norm * report.tails.iter().map(|t| t.max(0.0).sqrt()).sum::<f64>()
}

/// Reduced HOSVD of a CP tensor: per-mode SVDs of the side matrices with
/// column `k` scaled by `|ξ_k|^{1/3}`, then the core is assembled from the
/// projected side matrices without forming the full tensor.
pub fn rhosvd(c: &CpTensor, criterion: RhosvdCriterion) -> Result<(TuckerTensor, TruncationReport)> {
    if c.rank() == 0 {
        return Err(Error::EmptyCp);
    }
    let svds: Vec<(Matrix, Vec<f64>)> = rhosvd_side_svds(c)?.into_iter().collect();
    let tails: [Vec<f64>; 3] = [
        tail_energies(&svds[0].1),
        tail_energies(&svds[1].1),
        tail_energies(&svds[2].1),
    ];
    let xi_norm = c.balanced_weight_norm();
    let ranks = match criterion {
        RhosvdCriterion::Tail(eps) => {
            let mut r = [0; 3];
            for l in 0..3 {
                let budget = (eps / SQRT3).powi(2) * tails[l][0];
                r[l] = rank_for_budget(&tails[l], budget, 1);
            }
            r
        }
        RhosvdCriterion::Bound(budget) => {
            let m = c.dims().iter().copied().max().unwrap_or(1) as f64;
            let scale = m.powf(1.5) * xi_norm;
            let full = [tails[0].len() - 1, tails[1].len() - 1, tails[2].len() - 1];
            select_ranks(&tails, |t| scale * t.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>() <= budget)
                .unwrap_or(full)
        }
        RhosvdCriterion::Ranks(r) => [
            r[0].clamp(1, tails[0].len() - 1),
            r[1].clamp(1, tails[1].len() - 1),
            r[2].clamp(1, tails[2].len() - 1),
        ],
    };
    let factors: [Matrix; 3] = [
        svds[0].0.columns(0, ranks[0]).into_owned(),
        svds[1].0.columns(0, ranks[1]).into_owned(),
        svds[2].0.columns(0, ranks[2]).into_owned(),
    ];
    let core = cp_core(c, &factors)?;
    let tucker = TuckerTensor::new(core, factors)?;
    let report_tails = [tails[0][ranks[0]], tails[1][ranks[1]], tails[2][ranks[2]]];
    let core_norm = tucker.core().frobenius_norm();
    let bound = xi_norm * report_tails.iter().map(|t| t.max(0.0).sqrt()).sum::<f64>();
    let [s0, s1, s2]: [Vec<f64>; 3] = svds
        .into_iter()
        .map(|(_, s)| s)
        .collect::<Vec<_>>()
        .try_into()
        .expect("three modes");
    Ok((
        tucker,
        TruncationReport {
            ranks,
            tails: report_tails,
            singular_values: [s0, s1, s2],
            rel_error: if core_norm > 0.0 { bound / core_norm } else { 0.0 },
            iterations: 0,
        },
    ))
}

/// Core `Σ_k ξ_k (V¹ᵀu_k¹)⊗(V²ᵀu_k²)⊗(V³ᵀu_k³)`. Terms sharing a mode-3
/// column are summed into one `r₁×r₂` matrix first, then a single GEMM with
/// the distinct projected mode-3 columns finishes the contraction.
pub fn cp_core(c: &CpTensor, factors: &[Matrix; 3]) -> Result<DenseTensor3> {
    for l in 0..3 {
        if factors[l].nrows() != c.dims()[l] {
            return Err(Error::DimensionMismatch(format!(
                "factor {} has {} rows, CP mode size is {}",
                l + 1,
                factors[l].nrows(),
                c.dims()[l]
            )));
        }
    }
    let (reps, map) = unique_columns(c.factor(3));
    let u3 = Matrix::from_fn(c.dims()[2], reps.len(), |i, g| c.factor(3)[(i, reps[g])]);
    let x1 = factors[0].transpose() * c.factor(1);
    let x2 = factors[1].transpose() * c.factor(2);
    let x3 = factors[2].transpose() * u3;
    let (r1, r2, r3) = (x1.nrows(), x2.nrows(), x3.nrows());
    // column g holds vec(Σ_{k: map[k]=g} ξ_k x¹_k x²_kᵀ), first index fastest
    let mut grouped = Matrix::zeros(r1 * r2, reps.len());
    for (k, w) in c.weights().iter().enumerate() {
        let mut col = grouped.column_mut(map[k]);
        for j in 0..r2 {
            let s = w * x2[(j, k)];
            for i in 0..r1 {
                col[i + r1 * j] += s * x1[(i, k)];
            }
        }
    }
    let beta = grouped * x3.transpose();
    DenseTensor3::from_vec([r1, r2, r3], beta.as_slice().to_vec())
}
