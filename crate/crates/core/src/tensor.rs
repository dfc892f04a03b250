//! Dense, canonical (CP) and Tucker third-order tensors.
//!
//! Storage convention for [`DenseTensor3`]: the first index varies fastest,
//! i.e. entry `(i, j, k)` lives at `i + n1 * (j + n2 * k)`. All indices in the
//! API are zero-based. Mode numbers are one-based (1, 2, 3) to match the usual
//! `×ℓ` notation.

use std::collections::HashMap;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Tolerance used when validating orthonormal factor matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

fn check_mode(mode: usize) -> Result<usize> {
    match mode {
        1..=3 => Ok(mode - 1),
        _ => Err(Error::InvalidMode(mode)),
    }
}

/// Largest entry of `|MᵀM − I|`.
pub fn orthonormality_defect(m: &Matrix) -> f64 {
    let g = m.transpose() * m;
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Full third-order array.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl DenseTensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Wraps `data` (first index fastest). Fails on a length mismatch or a
    /// non-finite entry.
    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} values for dims {:?} (expected {expected})",
                data.len(),
                dims
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor entry at linear index {pos}")));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Entrywise `self − other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    /// `max |self − other|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    /// The `k`-th frontal slice `T(:, :, k)` as an `n1 × n2` matrix.
    pub fn frontal_slice(&self, k: usize) -> Matrix {
        let [n1, n2, _] = self.dims;
        let start = k * n1 * n2;
        Matrix::from_column_slice(n1, n2, &self.data[start..start + n1 * n2])
    }

    /// Mode-`ℓ` unfolding, shape `n_ℓ × (product of the other two dims)`.
    ///
    /// Columns enumerate the remaining indices in ascending lexicographic
    /// order with the lower-numbered mode varying fastest.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        let m = check_mode(mode)?;
        let [n1, n2, n3] = self.dims;
        Ok(match m {
            0 => Matrix::from_column_slice(n1, n2 * n3, &self.data),
            1 => Matrix::from_fn(n2, n1 * n3, |j, c| {
                let (i, k) = (c % n1, c / n1);
                self.get(i, j, k)
            }),
            _ => Matrix::from_column_slice(n1 * n2, n3, &self.data).transpose(),
        })
    }

    /// Inverse of [`DenseTensor3::unfold`].
    pub fn fold(mat: &Matrix, mode: usize, dims: [usize; 3]) -> Result<Self> {
        let m = check_mode(mode)?;
        let [n1, n2, n3] = dims;
        let rows = dims[m];
        let cols = n1 * n2 * n3 / rows.max(1);
        if mat.nrows() != rows || mat.ncols() != cols {
            return Err(Error::DimensionMismatch(format!(
                "mode-{mode} unfolding of {:?} must be {rows}×{cols}, got {}×{}",
                dims,
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(match m {
            0 => Self {
                dims,
                data: mat.as_slice().to_vec(),
            },
            1 => Self::from_fn(dims, |i, j, k| mat[(j, i + n1 * k)]),
            _ => Self {
                dims,
                data: mat.transpose().as_slice().to_vec(),
            },
        })
    }

    /// Mode-`ℓ` product `T ×ℓ M` with `M` of shape `p × n_ℓ`.
    pub fn mode_multiply(&self, mat: &Matrix, mode: usize) -> Result<Self> {
        let m = check_mode(mode)?;
        let [n1, n2, n3] = self.dims;
        if mat.ncols() != self.dims[m] {
            return Err(Error::DimensionMismatch(format!(
                "mode-{mode} multiply: matrix has {} columns, tensor dim is {}",
                mat.ncols(),
                self.dims[m]
            )));
        }
        let p = mat.nrows();
        let mut dims = self.dims;
        dims[m] = p;
        let mut out = vec![0.0; dims[0] * dims[1] * dims[2]];
        match m {
            0 => {
                let src = DMatrixView::from_slice(&self.data, n1, n2 * n3);
                let mut dst = DMatrixViewMut::from_slice(&mut out, p, n2 * n3);
                dst.gemm(1.0, mat, &src, 0.0);
            }
            1 => {
                let mt = mat.transpose();
                for k in 0..n3 {
                    let src = DMatrixView::from_slice(&self.data[k * n1 * n2..(k + 1) * n1 * n2], n1, n2);
                    let mut dst =
                        DMatrixViewMut::from_slice(&mut out[k * n1 * p..(k + 1) * n1 * p], n1, p);
                    dst.gemm(1.0, &src, &mt, 0.0);
                }
            }
            _ => {
                let src = DMatrixView::from_slice(&self.data, n1 * n2, n3);
                let mut dst = DMatrixViewMut::from_slice(&mut out, n1 * n2, p);
                dst.gemm(1.0, &src, &mat.transpose(), 0.0);
            }
        }
        Ok(Self { dims, data: out })
    }

    /// `T ×1 M1 ×2 M2 ×3 M3`.
    pub fn multiply_all(&self, mats: [&Matrix; 3]) -> Result<Self> {
        // contract the mode that shrinks the tensor the most first
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let ra = mats[a].nrows() as f64 / self.dims[a].max(1) as f64;
            let rb = mats[b].nrows() as f64 / self.dims[b].max(1) as f64;
            ra.partial_cmp(&rb).unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut t = self.mode_multiply(mats[order[0]], order[0] + 1)?;
        t = t.mode_multiply(mats[order[1]], order[1] + 1)?;
        t.mode_multiply(mats[order[2]], order[2] + 1)
    }

    /// Contracts every mode with a vector: `Σ T(i,j,k) a(i) b(j) c(k)`.
    pub fn contract_vectors(&self, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        let [n1, n2, n3] = self.dims;
        debug_assert!(a.len() == n1 && b.len() == n2 && c.len() == n3);
        let mut total = 0.0;
        for k in 0..n3 {
            let mut sk = 0.0;
            for j in 0..n2 {
                let col = &self.data[n1 * (j + n2 * k)..n1 * (j + n2 * k) + n1];
                let sj: f64 = col.iter().zip(a).map(|(x, y)| x * y).sum();
                sk += sj * b[j];
            }
            total += sk * c[k];
        }
        total
    }
}

/// Rank-`R` canonical tensor `Σ_k ξ_k u_k¹ ⊗ u_k² ⊗ u_k³` with unit-norm columns.
#[derive(Clone, Debug, PartialEq)]
pub struct CpTensor {
    dims: [usize; 3],
    weights: Vec<f64>,
    factors: [Matrix; 3],
}

impl CpTensor {
    /// The zero tensor (rank 0, empty factors).
    pub fn zero(dims: [usize; 3]) -> Self {
        Self {
            dims,
            weights: Vec::new(),
            factors: [
                Matrix::zeros(dims[0], 0),
                Matrix::zeros(dims[1], 0),
                Matrix::zeros(dims[2], 0),
            ],
        }
    }

    /// Builds a CP tensor from arbitrary (not necessarily normalized) side
    /// matrices. Columns are normalized and their norms folded into the
    /// weights; terms with a zero column or zero weight are dropped.
    pub fn new(weights: Vec<f64>, factors: [Matrix; 3]) -> Result<Self> {
        let r = weights.len();
        if factors.iter().any(|f| f.ncols() != r) {
            return Err(Error::DimensionMismatch(format!(
                "{r} weights but side matrices have {}/{}/{} columns",
                factors[0].ncols(),
                factors[1].ncols(),
                factors[2].ncols()
            )));
        }
        if weights.iter().any(|w| !w.is_finite())
            || factors.iter().any(|f| f.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("CP weights or side matrices".into()));
        }
        let dims = [factors[0].nrows(), factors[1].nrows(), factors[2].nrows()];
        let mut keep = Vec::with_capacity(r);
        let mut new_weights = Vec::with_capacity(r);
        for k in 0..r {
            let norms = [
                factors[0].column(k).norm(),
                factors[1].column(k).norm(),
                factors[2].column(k).norm(),
            ];
            let w = weights[k] * norms[0] * norms[1] * norms[2];
            if w != 0.0 {
                keep.push((k, norms));
                new_weights.push(w);
            }
        }
        if keep.is_empty() {
            return Ok(Self::zero(dims));
        }
        let build = |l: usize| {
            Matrix::from_fn(dims[l], keep.len(), |i, c| {
                let (k, norms) = keep[c];
                factors[l][(i, k)] / norms[l]
            })
        };
        Ok(Self {
            dims,
            weights: new_weights,
            factors: [build(0), build(1), build(2)],
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Side matrix of mode `ℓ ∈ {1,2,3}`.
    pub fn factor(&self, mode: usize) -> &Matrix {
        &self.factors[mode - 1]
    }

    pub fn factors(&self) -> &[Matrix; 3] {
        &self.factors
    }

    pub fn weight_l1(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn weight_l2(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// `‖ |ξ|^{2/3} ‖₂`: the weight factor of the RHOSVD error bound when every
    /// side matrix carries `|ξ_k|^{1/3}` on column `k`.
    pub fn balanced_weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs().powf(4.0 / 3.0)).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DenseTensor3 {
        let [n1, n2, n3] = self.dims;
        let r = self.rank();
        if r == 0 {
            return DenseTensor3::zeros(self.dims);
        }
        // Khatri-Rao of modes 1,2 times (mode-3 side · diag ξ)ᵀ, one slice at a time.
        let mut data = vec![0.0; n1 * n2 * n3];
        let mut scaled = self.factors[0].clone();
        for k in 0..n3 {
            for (c, w) in self.weights.iter().enumerate() {
                let s = w * self.factors[2][(k, c)];
                scaled.column_mut(c).copy_from(&(self.factors[0].column(c) * s));
            }
            let mut dst = DMatrixViewMut::from_slice(&mut data[k * n1 * n2..(k + 1) * n1 * n2], n1, n2);
            dst.gemm(1.0, &scaled, &self.factors[1].transpose(), 0.0);
        }
        DenseTensor3 { dims: self.dims, data }
    }

    /// Frontal slice `T(:, :, k)` without materializing the tensor.
    pub fn frontal_slice(&self, k: usize) -> Matrix {
        let mut scaled = self.factors[0].clone();
        for (c, w) in self.weights.iter().enumerate() {
            let s = w * self.factors[2][(k, c)];
            scaled.column_mut(c).scale_mut(s);
        }
        scaled * self.factors[1].transpose()
    }

    /// Frobenius norm via the Gram identity
    /// `‖C‖² = Σ_{k,l} ξ_k ξ_l Π_ℓ ⟨u_k, u_l⟩`.
    pub fn frobenius_norm(&self) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        let g: Vec<Matrix> = self.factors.iter().map(|f| f.transpose() * f).collect();
        let r = self.rank();
        let mut s = 0.0;
        for l in 0..r {
            for k in 0..r {
                s += self.weights[k] * self.weights[l] * g[0][(k, l)] * g[1][(k, l)] * g[2][(k, l)];
            }
        }
        s.max(0.0).sqrt()
    }

    /// Keeps the terms whose indices are listed, in that order.
    pub fn select_terms(&self, idx: &[usize]) -> Self {
        if idx.is_empty() {
            return Self::zero(self.dims);
        }
        let pick = |l: usize| {
            Matrix::from_fn(self.dims[l], idx.len(), |i, c| self.factors[l][(i, idx[c])])
        };
        Self {
            dims: self.dims,
            weights: idx.iter().map(|&k| self.weights[k]).collect(),
            factors: [pick(0), pick(1), pick(2)],
        }
    }

    /// Term-wise concatenation (the tensor sum).
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let r1 = self.rank();
        let r = r1 + other.rank();
        let join = |l: usize| {
            Matrix::from_fn(self.dims[l], r, |i, c| {
                if c < r1 {
                    self.factors[l][(i, c)]
                } else {
                    other.factors[l][(i, c - r1)]
                }
            })
        };
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Ok(Self {
            dims: self.dims,
            weights,
            factors: [join(0), join(1), join(2)],
        })
    }

    /// Multiplies every weight by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= s);
        out
    }

    /// Assembles from already-normalized parts. Used by code that produces
    /// unit columns by construction (e.g. deserialization).
    pub(crate) fn from_parts(weights: Vec<f64>, factors: [Matrix; 3]) -> Result<Self> {
        let dims = [factors[0].nrows(), factors[1].nrows(), factors[2].nrows()];
        if factors.iter().any(|f| f.ncols() != weights.len()) {
            return Err(Error::DimensionMismatch("CP parts disagree on rank".into()));
        }
        Ok(Self {
            dims,
            weights,
            factors,
        })
    }
}

/// Tucker tensor `β ×1 V¹ ×2 V² ×3 V³`.
///
/// Tensors returned by the decompositions have orthonormal factors; tensors
/// with merged (non-orthonormal) factors can be built with
/// [`TuckerTensor::new_general`].
#[derive(Clone, Debug, PartialEq)]
pub struct TuckerTensor {
    core: DenseTensor3,
    factors: [Matrix; 3],
    orthonormal: bool,
}

impl TuckerTensor {
    /// Validates shapes, `r_ℓ ≤ n_ℓ` and orthonormality of the factors.
    pub fn new(core: DenseTensor3, factors: [Matrix; 3]) -> Result<Self> {
        Self::check_shapes(&core, &factors)?;
        for (l, f) in factors.iter().enumerate() {
            if f.ncols() > f.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "mode-{} rank {} exceeds size {}",
                    l + 1,
                    f.ncols(),
                    f.nrows()
                )));
            }
            let defect = orthonormality_defect(f);
            if defect > ORTHONORMAL_TOL {
                return Err(Error::InvalidArgument(format!(
                    "mode-{} factor not orthonormal (defect {defect:e})",
                    l + 1
                )));
            }
        }
        Ok(Self {
            core,
            factors,
            orthonormal: true,
        })
    }

    /// Shape checks only; factors may be arbitrary.
    pub fn new_general(core: DenseTensor3, factors: [Matrix; 3]) -> Result<Self> {
        Self::check_shapes(&core, &factors)?;
        let orthonormal = factors
            .iter()
            .all(|f| f.ncols() <= f.nrows() && orthonormality_defect(f) <= ORTHONORMAL_TOL);
        Ok(Self {
            core,
            factors,
            orthonormal,
        })
    }

    fn check_shapes(core: &DenseTensor3, factors: &[Matrix; 3]) -> Result<()> {
        let r = core.dims();
        for l in 0..3 {
            if factors[l].ncols() != r[l] {
                return Err(Error::DimensionMismatch(format!(
                    "core dim {} is {} but factor {} has {} columns",
                    l + 1,
                    r[l],
                    l + 1,
                    factors[l].ncols()
                )));
            }
        }
        Ok(())
    }

    pub fn core(&self) -> &DenseTensor3 {
        &self.core
    }

    pub fn factor(&self, mode: usize) -> &Matrix {
        &self.factors[mode - 1]
    }

    pub fn factors(&self) -> &[Matrix; 3] {
        &self.factors
    }

    pub fn ranks(&self) -> [usize; 3] {
        self.core.dims()
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            self.factors[0].nrows(),
            self.factors[1].nrows(),
            self.factors[2].nrows(),
        ]
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn to_dense(&self) -> DenseTensor3 {
        self.core
            .multiply_all([&self.factors[0], &self.factors[1], &self.factors[2]])
            .expect("shapes validated at construction")
    }

    /// `‖β‖_F` for orthonormal factors, otherwise `⟨β ×ℓ VℓᵀVℓ, β⟩^{1/2}`.
    pub fn frobenius_norm(&self) -> f64 {
        if self.orthonormal {
            return self.core.frobenius_norm();
        }
        let g: Vec<Matrix> = self.factors.iter().map(|f| f.transpose() * f).collect();
        let gb = self
            .core
            .multiply_all([&g[0], &g[1], &g[2]])
            .expect("square Gram matrices");
        gb.as_slice()
            .iter()
            .zip(self.core.as_slice())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    /// Frontal slice `T(:, :, k)` as an `n1 × n2` matrix.
    pub fn frontal_slice(&self, k: usize) -> Matrix {
        let row = self.factors[2].row(k).transpose();
        let r = self.core.dims();
        // core ×3 row → r1 × r2 matrix
        let mut m = Matrix::zeros(r[0], r[1]);
        for c in 0..r[2] {
            m += self.core.frontal_slice(c) * row[c];
        }
        &self.factors[0] * m * self.factors[1].transpose()
    }

    /// Value at a single index triple.
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let a: Vec<f64> = self.factors[0].row(i).iter().copied().collect();
        let b: Vec<f64> = self.factors[1].row(j).iter().copied().collect();
        let c: Vec<f64> = self.factors[2].row(k).iter().copied().collect();
        self.core.contract_vectors(&a, &b, &c)
    }
}

/// Two-level Tucker-Tucker tensor: an outer Tucker tensor whose core is in
/// turn an orthogonal Tucker tensor, `(η ×ℓ G^ℓ) ×ℓ A^ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridTucker {
    outer: [Matrix; 3],
    inner: TuckerTensor,
}

impl HybridTucker {
    pub fn new(outer: [Matrix; 3], inner: TuckerTensor) -> Result<Self> {
        let r = inner.dims();
        for l in 0..3 {
            if outer[l].ncols() != r[l] {
                return Err(Error::DimensionMismatch(format!(
                    "outer factor {} has {} columns but inner tensor dim is {}",
                    l + 1,
                    outer[l].ncols(),
                    r[l]
                )));
            }
            let defect = orthonormality_defect(&outer[l]);
            if defect > ORTHONORMAL_TOL {
                return Err(Error::InvalidArgument(format!(
                    "outer factor {} not orthonormal (defect {defect:e})",
                    l + 1
                )));
            }
        }
        if !inner.is_orthonormal() {
            return Err(Error::InvalidArgument("inner Tucker factors not orthonormal".into()));
        }
        Ok(Self { outer, inner })
    }

    pub fn outer_factor(&self, mode: usize) -> &Matrix {
        &self.outer[mode - 1]
    }

    pub fn inner(&self) -> &TuckerTensor {
        &self.inner
    }

    /// Two-level reconstruction: densify the inner core, then apply the outer factors.
    pub fn to_dense(&self) -> DenseTensor3 {
        self.inner
            .to_dense()
            .multiply_all([&self.outer[0], &self.outer[1], &self.outer[2]])
            .expect("shapes validated at construction")
    }

    /// Collapses to a single orthogonal Tucker tensor with core `η` and
    /// factors `A^ℓ G^ℓ`.
    pub fn to_tucker(&self) -> Result<TuckerTensor> {
        let merged = [
            &self.outer[0] * self.inner.factor(1),
            &self.outer[1] * self.inner.factor(2),
            &self.outer[2] * self.inner.factor(3),
        ];
        TuckerTensor::new(self.inner.core().clone(), merged)
    }
}

/// Bitwise-distinct columns: `(representatives, map)` with column `k` equal to
/// column `representatives[map[k]]`. Representatives keep first-seen order.
pub fn unique_columns(m: &Matrix) -> (Vec<usize>, Vec<usize>) {
    let col = |k: usize| &m.as_slice()[k * m.nrows()..(k + 1) * m.nrows()];
    let fingerprint = |k: usize| {
        col(k).iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3).rotate_left(29)
        })
    };
    let mut seen: HashMap<u64, Vec<usize>> = HashMap::with_capacity(m.ncols());
    let mut reps = Vec::new();
    let map = (0..m.ncols())
        .map(|k| {
            let bucket = seen.entry(fingerprint(k)).or_default();
            let bits_eq = |g: usize| col(reps[g]).iter().zip(col(k)).all(|(a, b)| a.to_bits() == b.to_bits());
            match bucket.iter().copied().find(|&g| bits_eq(g)) {
                Some(g) => g,
                None => {
                    reps.push(k);
                    bucket.push(reps.len() - 1);
                    reps.len() - 1
                }
            }
        })
        .collect();
    (reps, map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_matrix, random_orthonormal, random_tensor, rng};

    fn t222() -> DenseTensor3 {
        DenseTensor3::from_fn([2, 2, 2], |i, j, k| {
            (100 * (i + 1) + 10 * (j + 1) + (k + 1)) as f64
        })
    }

    #[test]
    fn unfold_mode1_enumeration() {
        let m = t222().unfold(1).unwrap();
        let rows: Vec<Vec<f64>> = (0..2).map(|i| m.row(i).iter().copied().collect()).collect();
        assert_eq!(rows[0], vec![111.0, 121.0, 112.0, 122.0]);
        assert_eq!(rows[1], vec![211.0, 221.0, 212.0, 222.0]);
    }

    #[test]
    fn unfold_other_modes_enumeration() {
        let m2 = t222().unfold(2).unwrap();
        assert_eq!(m2.row(0).iter().copied().collect::<Vec<_>>(), vec![111.0, 211.0, 112.0, 212.0]);
        let m3 = t222().unfold(3).unwrap();
        assert_eq!(m3.row(1).iter().copied().collect::<Vec<_>>(), vec![112.0, 212.0, 122.0, 222.0]);
    }

    #[test]
    fn invalid_mode_is_rejected() {
        assert!(matches!(t222().unfold(0), Err(Error::InvalidMode(0))));
        assert!(matches!(t222().unfold(4), Err(Error::InvalidMode(4))));
        let m = Matrix::identity(2, 2);
        assert!(t222().mode_multiply(&m, 7).is_err());
    }

    #[test]
    fn fold_unfold_round_trip() {
        let mut r = rng(1);
        let t = random_tensor(&mut r, [3, 4, 5]);
        for mode in 1..=3 {
            let back = DenseTensor3::fold(&t.unfold(mode).unwrap(), mode, t.dims()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn rank_one_unfolding_is_rank_one() {
        let a = [1.0, -2.0, 0.5];
        let b = [3.0, 1.0];
        let c = [2.0, 0.0, 1.0, -1.0];
        let t = DenseTensor3::from_fn([3, 2, 4], |i, j, k| a[i] * b[j] * c[k]);
        let u = t.unfold(1).unwrap();
        // dense outer-product oracle: a · vec(b ⊗ c)ᵀ with b fastest
        for i in 0..3 {
            for (col, (j, k)) in (0..4).flat_map(|k| (0..2).map(move |j| (j, k))).enumerate() {
                assert_eq!(u[(i, col)], a[i] * b[j] * c[k]);
            }
        }
        let sv = u.singular_values();
        assert!(sv[1] < 1e-12 * sv[0]);
    }

    #[test]
    fn mode_multiply_identity_and_hand_sum() {
        let mut r = rng(2);
        let t = random_tensor(&mut r, [3, 4, 5]);
        for mode in 1..=3 {
            let id = Matrix::identity(t.dims()[mode - 1], t.dims()[mode - 1]);
            assert_eq!(t.mode_multiply(&id, mode).unwrap(), t);
        }
        let ones = DenseTensor3::from_fn([2, 2, 2], |_, _, _| 1.0);
        let row = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let out = ones.mode_multiply(&row, 1).unwrap();
        assert_eq!(out.dims(), [1, 2, 2]);
        assert!(out.as_slice().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn mode_multiply_matches_unfolding_definition() {
        let mut r = rng(3);
        let t = random_tensor(&mut r, [4, 5, 6]);
        for mode in 1..=3 {
            let m = random_matrix(&mut r, 3, t.dims()[mode - 1]);
            let direct = t.mode_multiply(&m, mode).unwrap();
            let mut dims = t.dims();
            dims[mode - 1] = 3;
            let via = DenseTensor3::fold(&(&m * t.unfold(mode).unwrap()), mode, dims).unwrap();
            assert!(direct.max_abs_diff(&via).unwrap() < 1e-13);
        }
    }

    #[test]
    fn mode_multiply_dimension_mismatch() {
        let t = DenseTensor3::zeros([2, 3, 4]);
        let m = Matrix::zeros(2, 5);
        assert!(matches!(t.mode_multiply(&m, 2), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn cp_zero_and_elementary() {
        let z = CpTensor::zero([3, 3, 3]);
        assert_eq!(z.rank(), 0);
        assert_eq!(z.to_dense().max_abs(), 0.0);
        assert_eq!(z.frobenius_norm(), 0.0);

        let e1 = Matrix::from_fn(3, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let c = CpTensor::new(vec![2.0], [e1.clone(), e1.clone(), e1]).unwrap();
        let d = c.to_dense();
        assert_eq!(d.get(0, 0, 0), 2.0);
        assert_eq!(d.as_slice().iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn cp_normalizes_columns_into_weights() {
        let a = Matrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let b = Matrix::from_column_slice(2, 1, &[0.0, 2.0]);
        let c = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let cp = CpTensor::new(vec![1.5], [a, b, c]).unwrap();
        assert!((cp.weights()[0] - 1.5 * 5.0 * 2.0).abs() < 1e-14);
        for l in 1..=3 {
            assert!((cp.factor(l).column(0).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cp_gram_norm_matches_dense() {
        let mut r = rng(4);
        for _ in 0..5 {
            let f = [random_matrix(&mut r, 4, 3), random_matrix(&mut r, 4, 3), random_matrix(&mut r, 4, 3)];
            let cp = CpTensor::new(vec![1.0, -0.5, 2.0], f).unwrap();
            let dense = cp.to_dense();
            let rel = (cp.frobenius_norm() - dense.frobenius_norm()).abs() / dense.frobenius_norm();
            assert!(rel < 1e-12, "{rel}");
        }
    }

    #[test]
    fn cp_frontal_slice_matches_dense() {
        let mut r = rng(5);
        let f = [random_matrix(&mut r, 5, 4), random_matrix(&mut r, 6, 4), random_matrix(&mut r, 3, 4)];
        let cp = CpTensor::new(vec![1.0, 2.0, 3.0, -1.0], f).unwrap();
        let d = cp.to_dense();
        for k in 0..3 {
            assert!((cp.frontal_slice(k) - d.frontal_slice(k)).amax() < 1e-13);
        }
    }

    #[test]
    fn tucker_elementary_and_norm() {
        let core = DenseTensor3::from_fn([1, 1, 1], |_, _, _| 1.0);
        let e = Matrix::from_fn(4, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let t = TuckerTensor::new(core, [e.clone(), e.clone(), e]).unwrap();
        let d = t.to_dense();
        assert_eq!(d.get(0, 0, 0), 1.0);
        assert_eq!(d.frobenius_norm(), 1.0);

        let mut r = rng(6);
        let core = random_tensor(&mut r, [3, 2, 4]);
        let f = [random_orthonormal(&mut r, 6, 3), random_orthonormal(&mut r, 5, 2), random_orthonormal(&mut r, 7, 4)];
        let t = TuckerTensor::new(core.clone(), f).unwrap();
        assert!((t.to_dense().frobenius_norm() - core.frobenius_norm()).abs() < 1e-12 * core.frobenius_norm());
        assert!((t.frontal_slice(2) - t.to_dense().frontal_slice(2)).amax() < 1e-13);
        assert!((t.get(1, 2, 3) - t.to_dense().get(1, 2, 3)).abs() < 1e-13);
    }

    #[test]
    fn tucker_rejects_non_orthonormal() {
        let core = DenseTensor3::zeros([1, 1, 1]);
        let f = Matrix::from_element(3, 1, 1.0);
        assert!(TuckerTensor::new(core.clone(), [f.clone(), f.clone(), f.clone()]).is_err());
        let g = TuckerTensor::new_general(core, [f.clone(), f.clone(), f]).unwrap();
        assert!(!g.is_orthonormal());
    }

    #[test]
    fn general_tucker_norm_uses_gram() {
        let mut r = rng(7);
        let core = random_tensor(&mut r, [2, 3, 2]);
        let f = [random_matrix(&mut r, 4, 2), random_matrix(&mut r, 5, 3), random_matrix(&mut r, 3, 2)];
        let t = TuckerTensor::new_general(core, f).unwrap();
        let dense = t.to_dense().frobenius_norm();
        assert!((t.frobenius_norm() - dense).abs() < 1e-12 * dense);
    }

    #[test]
    fn hybrid_identity_inner_is_outer() {
        let mut r = rng(8);
        let core = random_tensor(&mut r, [3, 3, 3]);
        let outer = [random_orthonormal(&mut r, 6, 3), random_orthonormal(&mut r, 6, 3), random_orthonormal(&mut r, 6, 3)];
        let id = Matrix::identity(3, 3);
        let inner = TuckerTensor::new(core.clone(), [id.clone(), id.clone(), id]).unwrap();
        let h = HybridTucker::new(outer.clone(), inner).unwrap();
        let t = h.to_tucker().unwrap();
        assert_eq!(t.core(), &core);
        for l in 1..=3 {
            assert!((t.factor(l) - &outer[l - 1]).amax() < 1e-15);
        }
    }

    #[test]
    fn hybrid_to_tucker_preserves_reconstruction() {
        let mut r = rng(9);
        let eta = random_tensor(&mut r, [2, 2, 2]);
        let g = [random_orthonormal(&mut r, 4, 2), random_orthonormal(&mut r, 4, 2), random_orthonormal(&mut r, 4, 2)];
        let inner = TuckerTensor::new(eta, g).unwrap();
        let outer = [random_orthonormal(&mut r, 8, 4), random_orthonormal(&mut r, 8, 4), random_orthonormal(&mut r, 8, 4)];
        let h = HybridTucker::new(outer, inner).unwrap();
        let t = h.to_tucker().unwrap();
        let a = h.to_dense();
        let b = t.to_dense();
        assert!(a.max_abs_diff(&b).unwrap() <= 1e-12 * a.max_abs());
        for l in 1..=3 {
            assert!(orthonormality_defect(t.factor(l)) < 1e-10);
        }
    }
}
