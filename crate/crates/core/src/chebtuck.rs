//! The ChebTuck format: a trivariate Chebyshev expansion whose coefficient
//! tensor is held in Tucker form, with constructors from functions, grid
//! tensors and CP tensors, plus the computable error bounds.

use rayon::prelude::*;

use crate::chebyshev::{cct_from_values, cheb_basis_into, cheb_basis_matrix, cheb_nodes, ChebTransform, DOMAIN_SLACK};
use crate::decomp::{rhosvd, rhosvd_side_svds, select_ranks, tail_energies, tucker_als, RhosvdCriterion, TruncationReport};
use crate::error::{Error, Result};
use crate::spline::{trivariate_eval_grid, uniform_grid, GridSampler, InterpKind, Interpolant1D};
use crate::tensor::{unique_columns, CpTensor, DenseTensor3, Matrix, TuckerTensor};

/// Axis-aligned box `[lo, hi]` mapped affinely onto `[-1, 1]³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Domain {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        if (0..3).any(|l| !(hi[l] > lo[l]) || !lo[l].is_finite() || !hi[l].is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid domain {lo:?}..{hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn to_reference(&self, x: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|l| (2.0 * x[l] - self.lo[l] - self.hi[l]) / (self.hi[l] - self.lo[l]))
    }

    pub fn from_reference(&self, s: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|l| 0.5 * (self.lo[l] + self.hi[l]) + 0.5 * (self.hi[l] - self.lo[l]) * s[l])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    Function,
    Grid,
    Cp,
}

/// How a ChebTuck function was built. Never used by the numerics.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub source: SourceKind,
    pub eps: f64,
    pub report: TruncationReport,
    /// Largest measured lifting-vs-Chebyshev deviation (CP input only).
    pub delta: Option<f64>,
    /// `‖ξ‖₁` of the input CP (unit columns).
    pub input_xi_l1: Option<f64>,
    /// Balanced weight norm of the Chebyshev coefficient CP (see
    /// [`CpTensor::balanced_weight_norm`]).
    pub cct_xi_norm: Option<f64>,
    pub interp: InterpKind,
}

/// `f(x) ≈ β ×₁ v¹(x₁) ×₂ v²(x₂) ×₃ v³(x₃)` with `vˡ(x) = T_{0:mₗ−1}(x) Vˡ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebTuckFunction {
    degrees: [usize; 3],
    coeffs: TuckerTensor,
    domain: Option<Domain>,
    provenance: Option<Provenance>,
}

/// Value plus a flag set when the point lies outside the approximation box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointValue {
    pub value: f64,
    pub extrapolated: bool,
}

fn identity_tucker(c: DenseTensor3) -> Result<TuckerTensor> {
    let m = c.dims();
    TuckerTensor::new(c, [Matrix::identity(m[0], m[0]), Matrix::identity(m[1], m[1]), Matrix::identity(m[2], m[2])])
}

fn compress_cct(c: DenseTensor3, eps: f64) -> Result<(TuckerTensor, TruncationReport)> {
    if eps <= 0.0 {
        let m = c.dims();
        let rel = 0.0;
        return Ok((
            identity_tucker(c)?,
            TruncationReport {
                ranks: m,
                tails: [0.0; 3],
                singular_values: Default::default(),
                rel_error: rel,
                iterations: 0,
            },
        ));
    }
    tucker_als(&c, eps)
}

fn check_degrees(m: [usize; 3]) -> Result<()> {
    if m.iter().any(|&k| k < 2) {
        return Err(Error::InvalidArgument(format!("degrees must be at least 2, got {m:?}")));
    }
    Ok(())
}

impl ChebTuckFunction {
    /// Wraps an existing coefficient Tucker tensor (factor rows = degrees).
    pub fn from_parts(coeffs: TuckerTensor, domain: Option<Domain>) -> Result<Self> {
        let degrees = coeffs.dims();
        check_degrees(degrees)?;
        Ok(Self {
            degrees,
            coeffs,
            domain,
            provenance: None,
        })
    }

    /// Samples `f` once per node triple, transforms to coefficients and
    /// compresses with Tucker-ALS at relative accuracy `eps` (`eps = 0` keeps
    /// the full coefficient tensor).
    pub fn build_from_function(f: impl Fn(f64, f64, f64) -> f64, m: [usize; 3], eps: f64) -> Result<Self> {
        Self::build_from_function_on(f, m, eps, None)
    }

    /// As [`Self::build_from_function`] for a function on `domain`.
    pub fn build_from_function_on(
        f: impl Fn(f64, f64, f64) -> f64,
        m: [usize; 3],
        eps: f64,
        domain: Option<Domain>,
    ) -> Result<Self> {
        check_degrees(m)?;
        let nodes: Vec<Vec<f64>> = m.iter().map(|&k| cheb_nodes(k)).collect::<Result<_>>()?;
        let mut bad = None;
        let samples = DenseTensor3::from_fn(m, |i, j, k| {
            let s = [nodes[0][i], nodes[1][j], nodes[2][k]];
            let x = domain.map_or(s, |d| d.from_reference(s));
            let v = f(x[0], x[1], x[2]);
            if !v.is_finite() && bad.is_none() {
                bad = Some(x);
            }
            v
        });
        if let Some(x) = bad {
            return Err(Error::NonFinite(format!("function value at {x:?}")));
        }
        Self::from_samples(samples, eps, SourceKind::Function, domain)
    }

    fn from_samples(samples: DenseTensor3, eps: f64, source: SourceKind, domain: Option<Domain>) -> Result<Self> {
        let m = samples.dims();
        let c = cct_from_values(&samples, m)?;
        let (coeffs, report) = compress_cct(c, eps)?;
        Ok(Self {
            degrees: m,
            coeffs,
            domain,
            provenance: Some(Provenance {
                source,
                eps,
                report,
                delta: None,
                input_xi_l1: None,
                cct_xi_norm: None,
                interp: InterpKind::Spline,
            }),
        })
    }

    /// Tensor-product cubic spline of the grid tensor `f` (uniform grids over
    /// `[-1, 1]` per mode), sampled at the Chebyshev nodes, then as
    /// [`Self::build_from_function`].
    pub fn build_from_grid(f: &DenseTensor3, m: [usize; 3], eps: f64) -> Result<Self> {
        Self::build_from_grid_with(f, m, eps, InterpKind::Spline)
    }

    pub fn build_from_grid_with(f: &DenseTensor3, m: [usize; 3], eps: f64, interp: InterpKind) -> Result<Self> {
        check_degrees(m)?;
        if f.dims().iter().any(|&d| d < 4) {
            return Err(Error::InvalidArgument(format!("grid tensor needs at least 4 points per mode, got {:?}", f.dims())));
        }
        let nodes: Vec<Vec<f64>> = m.iter().map(|&k| cheb_nodes(k)).collect::<Result<_>>()?;
        let samples = trivariate_eval_grid(f, [&nodes[0], &nodes[1], &nodes[2]], interp)?;
        let mut g = Self::from_samples(samples, eps, SourceKind::Grid, None)?;
        if let Some(p) = g.provenance.as_mut() {
            p.interp = interp;
        }
        Ok(g)
    }

    /// CP input with tail-driven RHOSVD at `eps` and spline lifting.
    pub fn build_from_cp(f: &CpTensor, m: [usize; 3], eps: f64) -> Result<Self> {
        Self::build_from_cp_with(f, m, &CpBuildOptions::tail(eps))
    }

    /// Lifts every canonical vector to a univariate interpolant, samples it at
    /// the Chebyshev nodes and transforms, giving the coefficient tensor in CP
    /// form; then compresses with RHOSVD. Nothing of size `n³` or `m³` beyond
    /// the core is formed.
    pub fn build_from_cp_with(f: &CpTensor, m: [usize; 3], opts: &CpBuildOptions) -> Result<Self> {
        let lifted = lift_cp(f, m, opts.interp, opts.measure_delta)?;
        let criterion = match opts.compression {
            CpCompression::Rhosvd(c) => c,
            CpCompression::Adaptive(target) => {
                let delta = lifted.delta.ok_or_else(|| {
                    Error::InvalidArgument("adaptive rank selection needs the measured deviation".into())
                })?;
                RhosvdCriterion::Ranks(adaptive_rank_select(&lifted.cct, target, delta, f.weight_l1())?)
            }
        };
        let (coeffs, report) = rhosvd(&lifted.cct, criterion)?;
        let eps = match criterion {
            RhosvdCriterion::Tail(e) | RhosvdCriterion::Bound(e) => e,
            RhosvdCriterion::Ranks(_) => 0.0,
        };
        Ok(Self {
            degrees: m,
            coeffs,
            domain: None,
            provenance: Some(Provenance {
                source: SourceKind::Cp,
                eps,
                report,
                delta: lifted.delta,
                input_xi_l1: Some(f.weight_l1()),
                cct_xi_norm: Some(lifted.cct.balanced_weight_norm()),
                interp: opts.interp,
            }),
        })
    }

    pub fn degrees(&self) -> [usize; 3] {
        self.degrees
    }

    pub fn ranks(&self) -> [usize; 3] {
        self.coeffs.ranks()
    }

    pub fn coefficients(&self) -> &TuckerTensor {
        &self.coeffs
    }

    pub fn domain(&self) -> Option<Domain> {
        self.domain
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// `f̂(x)`; points outside the box are evaluated by extrapolation and flagged.
    pub fn evaluate(&self, x: [f64; 3]) -> PointValue {
        let s = self.domain.map_or(x, |d| d.to_reference(x));
        let extrapolated = s.iter().any(|v| v.abs() > 1.0 + DOMAIN_SLACK);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|l| {
                let mut t = vec![0.0; self.degrees[l]];
                cheb_basis_into(s[l], &mut t);
                let v = self.coeffs.factor(l + 1);
                (0..v.ncols())
                    .map(|j| v.column(j).iter().zip(&t).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect();
        PointValue {
            value: self.coeffs.core().contract_vectors(&rows[0], &rows[1], &rows[2]),
            extrapolated,
        }
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        self.evaluate(x).value
    }

    /// Values on the product grid `points[0] × points[1] × points[2]` (reference
    /// coordinates) as a Tucker tensor with merged factors `B V`.
    pub fn evaluate_points(&self, points: [&[f64]; 3]) -> Result<TuckerTensor> {
        let factors: [Matrix; 3] = std::array::from_fn(|l| cheb_basis_matrix(self.degrees[l], points[l]) * self.coeffs.factor(l + 1));
        TuckerTensor::new_general(self.coeffs.core().clone(), factors)
    }

    /// Values on the uniform `n₁×n₂×n₃` grid over `[-1, 1]³`. Factors are not
    /// orthonormal; pass `reorthogonalize` to get an orthonormal Tucker tensor.
    pub fn evaluate_grid(&self, n: [usize; 3], reorthogonalize: bool) -> Result<TuckerTensor> {
        let g: Vec<Vec<f64>> = n.iter().map(|&k| uniform_grid(k)).collect();
        let t = self.evaluate_points([&g[0], &g[1], &g[2]])?;
        if reorthogonalize {
            orthonormalize(&t)
        } else {
            Ok(t)
        }
    }

    /// Thm-style bound of the grid deviation from the CP input, using the
    /// recorded deviation and truncation data (CP input only).
    pub fn error_bound(&self) -> Option<f64> {
        let p = self.provenance.as_ref()?;
        let m = self.degrees.iter().copied().max()?;
        Some(chebtuck_error_bound(p.delta?, p.input_xi_l1?, p.cct_xi_norm?, &p.report, m, 3))
    }
}

/// QR of every factor, pushing the triangular parts into the core. A factor
/// wider than tall comes back square.
pub fn orthonormalize(t: &TuckerTensor) -> Result<TuckerTensor> {
    let mut core = t.core().clone();
    let mut qs: Vec<Matrix> = Vec::with_capacity(3);
    for l in 0..3 {
        let qr = t.factor(l + 1).clone().qr();
        core = core.mode_multiply(&qr.r(), l + 1)?;
        qs.push(qr.q());
    }
    let [a, b, c]: [Matrix; 3] = qs.try_into().expect("three factors");
    TuckerTensor::new(core, [a, b, c])
}

/// What RHOSVD is asked to do in [`ChebTuckFunction::build_from_cp_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CpCompression {
    Rhosvd(RhosvdCriterion),
    /// Smallest ranks whose total bound stays below the target.
    Adaptive(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CpBuildOptions {
    pub compression: CpCompression,
    pub interp: InterpKind,
    /// Measure the lifting-vs-Chebyshev deviation on a 10× oversampled grid.
    pub measure_delta: bool,
}

impl CpBuildOptions {
    pub fn tail(eps: f64) -> Self {
        Self {
            compression: CpCompression::Rhosvd(RhosvdCriterion::Tail(eps)),
            interp: InterpKind::Spline,
            measure_delta: true,
        }
    }
}

/// Coefficient CP of a lifted CP tensor.
#[derive(Clone, Debug)]
pub struct LiftedCp {
    /// Unit-column Chebyshev coefficient CP with weights `ξ'`.
    pub cct: CpTensor,
    pub delta: Option<f64>,
}

/// Oversampling factor of the deviation probe grid.
pub const DELTA_OVERSAMPLING: usize = 10;

/// Per canonical vector: fit the lifting interpolant, sample at the Chebyshev
/// nodes and transform. Optionally measures `δ = max_k,ℓ sup |q − g|` over a
/// uniform probe grid containing the knots.
pub fn lift_cp(f: &CpTensor, m: [usize; 3], interp: InterpKind, measure_delta: bool) -> Result<LiftedCp> {
    check_degrees(m)?;
    if f.rank() == 0 {
        return Err(Error::EmptyCp);
    }
    let min_knots = if interp == InterpKind::Spline { 4 } else { 2 };
    if f.dims().iter().any(|&d| d < min_knots) {
        return Err(Error::InvalidArgument(format!("CP mode sizes {:?} too small for lifting", f.dims())));
    }
    let mut sides: Vec<Matrix> = Vec::with_capacity(3);
    let mut delta = 0.0f64;
    for l in 0..3 {
        let ml = m[l];
        let nodes = cheb_nodes(ml)?;
        let transform = ChebTransform::new(ml)?;
        let u = f.factor(l + 1);
        let n = u.nrows();
        let sampler = GridSampler::new(interp, n, &nodes)?;
        let probes = measure_delta.then(|| uniform_grid(DELTA_OVERSAMPLING * (n - 1) + 1));
        let probe_basis = probes.as_ref().map(|p| cheb_basis_matrix(ml, p));
        // windows of shifted kernels repeat exactly; lift each distinct column once
        let (reps, map) = unique_columns(u);
        let cols: Vec<(Vec<f64>, f64)> = reps
            .par_iter()
            .map_init(
                || (vec![0.0; ml], Vec::with_capacity(n)),
                |(vals, scratch), &k| -> Result<(Vec<f64>, f64)> {
                    let col = u.column(k);
                    let col = col.as_slice();
                    sampler.sample(col, vals, scratch);
                    let mut c = vec![0.0; ml];
                    transform.forward(vals, &mut c);
                    let dev = match (&probes, &probe_basis) {
                        (Some(p), Some(b)) => {
                            let q = Interpolant1D::fit(interp, col)?;
                            let g = b * nalgebra::DVector::from_column_slice(&c);
                            p.iter().zip(g.iter()).map(|(x, gv)| (q.value(*x) - gv).abs()).fold(0.0, f64::max)
                        }
                        _ => 0.0,
                    };
                    Ok((c, dev))
                },
            )
            .collect::<Result<_>>()?;
        let mut side = Matrix::zeros(ml, f.rank());
        for (k, &g) in map.iter().enumerate() {
            side.column_mut(k).copy_from_slice(&cols[g].0);
        }
        delta = cols.iter().fold(delta, |d, c| d.max(c.1));
        sides.push(side);
    }
    let [a, b, c]: [Matrix; 3] = sides.try_into().expect("three modes");
    Ok(LiftedCp {
        cct: CpTensor::new(f.weights().to_vec(), [a, b, c])?,
        delta: measure_delta.then_some(delta),
    })
}

/// `‖ξ‖₁ e δ d + m^{d/2} ‖ξ'‖ Σ_ℓ √tail_ℓ`; when `δ d ≥ 1` the first term is
/// replaced by `‖ξ‖₁ ((1+δ)^d − 1)`.
pub fn chebtuck_error_bound(delta: f64, input_xi_l1: f64, cct_xi_norm: f64, report: &TruncationReport, m: usize, d: usize) -> f64 {
    interpolation_term(delta, input_xi_l1, d) + truncation_term(cct_xi_norm, &report.tails, m, d)
}

fn interpolation_term(delta: f64, xi_l1: f64, d: usize) -> f64 {
    let df = d as f64;
    if delta * df < 1.0 {
        xi_l1 * std::f64::consts::E * delta * df
    } else {
        xi_l1 * ((1.0 + delta).powi(d as i32) - 1.0)
    }
}

fn truncation_term(xi_l2: f64, tails: &[f64; 3], m: usize, d: usize) -> f64 {
    (m as f64).powf(d as f64 / 2.0) * xi_l2 * tails.iter().map(|t| t.max(0.0).sqrt()).sum::<f64>()
}

/// Smallest per-mode ranks (no mode can be lowered) for which the total bound
/// stays within `target`.
pub fn adaptive_rank_select(cct: &CpTensor, target: f64, delta: f64, input_xi_l1: f64) -> Result<[usize; 3]> {
    if cct.rank() == 0 {
        return Err(Error::EmptyCp);
    }
    let floor = interpolation_term(delta, input_xi_l1, 3);
    if floor >= target {
        return Err(Error::InfeasibleTarget { target, floor });
    }
    let svds = rhosvd_side_svds(cct)?;
    let tails: [Vec<f64>; 3] = std::array::from_fn(|l| tail_energies(&svds[l].1));
    if tails.iter().any(|t| t.len() < 2) {
        return Err(Error::NonFinite("coefficient side matrix".into()));
    }
    let m = cct.dims().iter().copied().max().unwrap_or(1);
    let xi = cct.balanced_weight_norm();
    select_ranks(&tails, |t| floor + truncation_term(xi, &t, m, 3) <= target).ok_or(Error::InfeasibleTarget { target, floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chebyshev::cct_evaluate;
    use crate::testutil::{random_matrix, rng};
    use rand::Rng;

    fn probe(k: usize) -> Vec<f64> {
        (0..k).map(|i| -1.0 + 2.0 * i as f64 / (k - 1) as f64).collect()
    }

    #[test]
    fn product_xyz_is_rank_one_and_exact() {
        let calls = std::cell::Cell::new(0usize);
        let g = ChebTuckFunction::build_from_function(
            |x, y, z| {
                calls.set(calls.get() + 1);
                x * y * z
            },
            [5, 5, 5],
            1e-12,
        )
        .unwrap();
        assert_eq!(calls.get(), 125);
        assert_eq!(g.ranks(), [1, 1, 1]);
        let mut r = rng(51);
        for _ in 0..50 {
            let x = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            assert!((g.value(x) - x[0] * x[1] * x[2]).abs() <= 1e-13);
        }
        assert!(!g.evaluate([1.0, -1.0, 0.0]).extrapolated);
        assert!(g.evaluate([1.2, 0.0, 0.0]).extrapolated);
    }

    #[test]
    fn separable_exponential() {
        let g = ChebTuckFunction::build_from_function(|x, y, z| (x + y + z).exp(), [17, 17, 17], 1e-10).unwrap();
        assert_eq!(g.ranks(), [1, 1, 1]);
        let p = probe(10);
        let mut worst = 0.0f64;
        for &x in &p {
            for &y in &p {
                for &z in &p {
                    worst = worst.max((g.value([x, y, z]) - (x + y + z).exp()).abs());
                }
            }
        }
        assert!(worst <= 1e-9, "{worst}");
    }

    #[test]
    fn runge_type_function() {
        let f = |x: f64, y: f64, z: f64| 1.0 / (1.0 + x * x + y * y + z * z);
        let g = ChebTuckFunction::build_from_function(f, [33, 33, 33], 1e-8).unwrap();
        assert!(g.ranks().iter().all(|&r| r < 33));
        let p = probe(10);
        let mut worst = 0.0f64;
        for &x in &p {
            for &y in &p {
                for &z in &p {
                    worst = worst.max((g.value([x, y, z]) - f(x, y, z)).abs());
                }
            }
        }
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn evaluation_matches_dense_sum() {
        let mut r = rng(52);
        let m = [4, 5, 6];
        let g = ChebTuckFunction::build_from_function(|x, y, z| (x - 2.0 * y).sin() * (1.0 + z * z), m, 1e-3).unwrap();
        let dense = g.coefficients().to_dense();
        let corner: f64 = dense.as_slice().iter().sum();
        assert!((g.value([1.0, 1.0, 1.0]) - corner).abs() <= 1e-12);
        for _ in 0..20 {
            let x = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            assert!((g.value(x) - cct_evaluate(&dense, x)).abs() <= 1e-12);
        }
    }

    #[test]
    fn uncompressed_is_interpolatory() {
        let f = |x: f64, y: f64, z: f64| (x * y).exp() + z.cos();
        let m = [6, 7, 5];
        let g = ChebTuckFunction::build_from_function(f, m, 0.0).unwrap();
        let nodes: Vec<Vec<f64>> = m.iter().map(|&k| cheb_nodes(k).unwrap()).collect();
        for &x in &nodes[0] {
            for &y in &nodes[1] {
                for &z in &nodes[2] {
                    assert!((g.value([x, y, z]) - f(x, y, z)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn grid_evaluation_matches_pointwise() {
        let g = ChebTuckFunction::build_from_function(|x, y, z| (x + 0.5 * y * z).cos(), [9, 9, 9], 1e-10).unwrap();
        let t = g.evaluate_grid([5, 5, 5], false).unwrap();
        assert_eq!(t.ranks(), g.ranks());
        let p = probe(5);
        for (i, &x) in p.iter().enumerate() {
            for (j, &y) in p.iter().enumerate() {
                for (k, &z) in p.iter().enumerate() {
                    assert!((t.get(i, j, k) - g.value([x, y, z])).abs() <= 1e-12);
                }
            }
        }
        let o = g.evaluate_grid([5, 5, 5], true).unwrap();
        assert!(o.is_orthonormal());
        assert!(o.to_dense().max_abs_diff(&t.to_dense()).unwrap() <= 1e-12);
        // at Chebyshev nodes the merged factors reproduce node samples
        let nodes = cheb_nodes(9).unwrap();
        let at_nodes = g.evaluate_points([&nodes, &nodes, &nodes]).unwrap();
        assert!((at_nodes.get(2, 3, 4) - g.value([nodes[2], nodes[3], nodes[4]])).abs() <= 1e-12);
    }

    #[test]
    fn affine_domain() {
        let d = Domain::new([0.0, 1.0, -3.0], [2.0, 4.0, 3.0]).unwrap();
        let f = |x: f64, y: f64, z: f64| x * y + z;
        let g = ChebTuckFunction::build_from_function_on(f, [3, 3, 3], 1e-12, Some(d)).unwrap();
        assert!((g.value([1.5, 2.0, 0.5]) - f(1.5, 2.0, 0.5)).abs() <= 1e-12);
        assert!(g.evaluate([2.5, 2.0, 0.0]).extrapolated);
        assert!(Domain::new([0.0; 3], [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn grid_input_of_cubic_product() {
        let n = 16;
        let t = uniform_grid(n);
        let f = DenseTensor3::from_fn([n; 3], |i, j, k| t[i] * t[j] * t[k]);
        let g = ChebTuckFunction::build_from_grid(&f, [9, 9, 9], 1e-12).unwrap();
        for (i, j, k) in [(0, 0, 0), (3, 7, 15), (8, 8, 8), (15, 1, 4)] {
            assert!((g.value([t[i], t[j], t[k]]) - f.get(i, j, k)).abs() <= 1e-12);
        }
    }

    #[test]
    fn cp_input_of_cubic_vectors() {
        let n = 12;
        let t = uniform_grid(n);
        let col = |p: fn(f64) -> f64| Matrix::from_fn(n, 1, |i, _| p(t[i]));
        let cp = CpTensor::new(vec![1.5], [col(|x| x * x * x - x + 0.3), col(|x| 1.0 + x * x), col(|x| 2.0 * x - 0.5)]).unwrap();
        let g = ChebTuckFunction::build_from_cp(&cp, [9, 9, 9], 1e-12).unwrap();
        let dense = cp.to_dense();
        let grid = g.evaluate_grid([n; 3], false).unwrap().to_dense();
        assert!(grid.max_abs_diff(&dense).unwrap() <= 1e-12);
        assert!(g.provenance().unwrap().delta.unwrap() <= 1e-12);
    }

    #[test]
    fn cp_and_grid_paths_agree() {
        let mut r = rng(53);
        let n = 10;
        let t = uniform_grid(n);
        let smooth = |c: f64| Matrix::from_fn(n, 1, |i, _| (c * t[i]).cos());
        let mut factors: [Matrix; 3] = Default::default();
        for f in factors.iter_mut() {
            let a = smooth(r.random_range(0.5..2.0));
            let b = smooth(r.random_range(0.5..2.0));
            *f = Matrix::from_fn(n, 2, |i, j| if j == 0 { a[(i, 0)] } else { b[(i, 0)] });
        }
        let cp = CpTensor::new(vec![1.0, -0.7], factors).unwrap();
        let opts = CpBuildOptions {
            compression: CpCompression::Rhosvd(RhosvdCriterion::Tail(1e-14)),
            interp: InterpKind::Spline,
            measure_delta: false,
        };
        let a = ChebTuckFunction::build_from_cp_with(&cp, [9, 9, 9], &opts).unwrap();
        let b = ChebTuckFunction::build_from_grid(&cp.to_dense(), [9, 9, 9], 1e-14).unwrap();
        let p = probe(7);
        for &x in &p {
            for &y in &p {
                for &z in &p {
                    assert!((a.value([x, y, z]) - b.value([x, y, z])).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn bound_arithmetic() {
        let rep = TruncationReport {
            ranks: [1, 1, 1],
            tails: [0.0; 3],
            singular_values: Default::default(),
            rel_error: 0.0,
            iterations: 0,
        };
        assert_eq!(chebtuck_error_bound(0.0, 5.0, 5.0, &rep, 9, 3), 0.0);
        let b = chebtuck_error_bound(1e-4, 10.0, 1.0, &rep, 9, 3);
        assert!((b - 10.0 * std::f64::consts::E * 3e-4).abs() < 1e-15);
        assert!((b - 8.15e-3).abs() < 1e-5);
        let big = chebtuck_error_bound(0.5, 1.0, 1.0, &rep, 9, 3);
        assert!((big - (1.5f64.powi(3) - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn random_cp_bound_holds() {
        let mut r = rng(54);
        let n = 24;
        let cp = CpTensor::new(vec![1.0, 0.5, -0.25, 2.0], [random_matrix(&mut r, n, 4), random_matrix(&mut r, n, 4), random_matrix(&mut r, n, 4)]).unwrap();
        let g = ChebTuckFunction::build_from_cp(&cp, [33, 33, 33], 1e-3).unwrap();
        let err = g.evaluate_grid([n; 3], false).unwrap().to_dense().max_abs_diff(&cp.to_dense()).unwrap();
        let bound = g.error_bound().unwrap();
        assert!(err <= bound, "{err} {bound}");
    }

    #[test]
    fn adaptive_selection() {
        let mut r = rng(55);
        let n = 20;
        let cp = CpTensor::new(vec![1.0, 0.3, 0.2], [random_matrix(&mut r, n, 3), random_matrix(&mut r, n, 3), random_matrix(&mut r, n, 3)]).unwrap();
        let lifted = lift_cp(&cp, [17, 17, 17], InterpKind::Spline, true).unwrap();
        let delta = lifted.delta.unwrap();
        assert_eq!(adaptive_rank_select(&lifted.cct, 1e12, delta, cp.weight_l1()).unwrap(), [1, 1, 1]);
        let floor = interpolation_term(delta, cp.weight_l1(), 3);
        assert!(matches!(
            adaptive_rank_select(&lifted.cct, 0.5 * floor, delta, cp.weight_l1()),
            Err(Error::InfeasibleTarget { .. })
        ));
        let target = floor * 1.5 + 1e-3;
        let ranks = adaptive_rank_select(&lifted.cct, target, delta, cp.weight_l1()).unwrap();
        let svds = rhosvd_side_svds(&lifted.cct).unwrap();
        let tails: [Vec<f64>; 3] = std::array::from_fn(|l| tail_energies(&svds[l].1));
        let total = |r: [usize; 3]| floor + truncation_term(lifted.cct.balanced_weight_norm(), &[tails[0][r[0]], tails[1][r[1]], tails[2][r[2]]], 17, 3);
        assert!(total(ranks) <= target);
        for l in 0..3 {
            if ranks[l] > 1 {
                let mut s = ranks;
                s[l] -= 1;
                assert!(total(s) > target);
            }
        }
    }
}
