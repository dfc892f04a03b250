//! Chebyshev interpolation on second-kind nodes.
//!
//! Coefficient index `k` (zero-based) multiplies `T_k(x) = cos(k·arccos x)`.
//! Nodes are ordered descending, `s_0 = 1`, `s_{m−1} = −1`, and every array of
//! node samples in this crate uses that order.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor3, Matrix};

/// Below this size the dense transform matrix is used instead of the FFT.
pub const FAST_TRANSFORM_MIN: usize = 8;

fn check_degree(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "Chebyshev degree count must be at least 2, got {m}"
        )));
    }
    Ok(())
}

/// Chebyshev points of the second kind, `cos(iπ/(m−1))`, descending.
pub fn cheb_nodes(m: usize) -> Result<Vec<f64>> {
    check_degree(m)?;
    let n = (m - 1) as f64;
    // sine form keeps the set exactly symmetric and hits 0 exactly
    Ok((0..m)
        .map(|i| (PI * (n - 2.0 * i as f64) / (2.0 * n)).sin())
        .collect())
}

/// `[T_0(x), …, T_{m−1}(x)]` by the three-term recurrence.
pub fn cheb_basis(m: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; m];
    cheb_basis_into(x, &mut out);
    out
}

pub fn cheb_basis_into(x: f64, out: &mut [f64]) {
    let m = out.len();
    if m == 0 {
        return;
    }
    out[0] = 1.0;
    if m > 1 {
        out[1] = x;
    }
    for k in 2..m {
        out[k] = 2.0 * x * out[k - 1] - out[k - 2];
    }
}

/// Matrix `B(i, k) = T_k(x_i)`, shape `points × m`.
pub fn cheb_basis_matrix(m: usize, points: &[f64]) -> Matrix {
    let mut b = Matrix::zeros(points.len(), m);
    let mut row = vec![0.0; m];
    for (i, &x) in points.iter().enumerate() {
        cheb_basis_into(x, &mut row);
        for (k, v) in row.iter().enumerate() {
            b[(i, k)] = *v;
        }
    }
    b
}

/// The inverse DCT matrix mapping node values to Chebyshev coefficients.
///
/// `W(k, j) = 2/(m−1) · γ_k γ_j T_k(s_j)` with `γ = 1/2` on the first and
/// last index and 1 elsewhere.
pub fn dct_matrix(m: usize) -> Result<Matrix> {
    check_degree(m)?;
    let n = (m - 1) as f64;
    let gamma = |i: usize| if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
    Ok(Matrix::from_fn(m, m, |k, j| {
        // T_k(s_j) = cos(k j π / (m−1)); reduce k·j mod 2(m−1) for accuracy
        let phase = ((k * j) % (2 * (m - 1))) as f64;
        2.0 / n * gamma(k) * gamma(j) * (PI * phase / n).cos()
    }))
}

/// Reusable node-values ↔ coefficients transform for a fixed `m`.
///
/// Uses a DCT-I realized through a length-`2(m−1)` real-symmetric FFT; for
/// `m < FAST_TRANSFORM_MIN` the dense matrix is applied instead.
#[derive(Clone)]
pub struct ChebTransform {
    m: usize,
    fft: Option<Arc<dyn Fft<f64>>>,
    dense: Option<Matrix>,
}

impl std::fmt::Debug for ChebTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChebTransform")
            .field("m", &self.m)
            .field("fast", &self.fft.is_some())
            .finish()
    }
}

impl ChebTransform {
    pub fn new(m: usize) -> Result<Self> {
        check_degree(m)?;
        if m < FAST_TRANSFORM_MIN {
            return Ok(Self {
                m,
                fft: None,
                dense: Some(dct_matrix(m)?),
            });
        }
        Ok(Self::new_fast(m))
    }

    /// Always uses the FFT path (exposed for cross-validation against the matrix).
    pub fn new_fast(m: usize) -> Self {
        assert!(m >= 2);
        let fft = FftPlanner::new().plan_fft_forward(2 * (m - 1));
        Self {
            m,
            fft: Some(fft),
            dense: None,
        }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `y_k = Σ_j γ_j x_j cos(π k j/(m−1))`, `γ` halving the end points.
    fn dct1(&self, fft: &Arc<dyn Fft<f64>>, x: &[f64], out: &mut [f64], buf: &mut Vec<Complex<f64>>) {
        let n = self.m - 1;
        buf.clear();
        buf.extend(x.iter().map(|&v| Complex::new(v, 0.0)));
        buf.extend(x[1..n].iter().rev().map(|&v| Complex::new(v, 0.0)));
        fft.process(buf);
        for k in 0..self.m {
            out[k] = 0.5 * buf[k].re;
        }
    }

    /// Node values (descending node order) → coefficients.
    pub fn forward(&self, values: &[f64], coeffs: &mut [f64]) {
        assert_eq!(values.len(), self.m);
        assert_eq!(coeffs.len(), self.m);
        if let Some(w) = &self.dense {
            for k in 0..self.m {
                coeffs[k] = (0..self.m).map(|j| w[(k, j)] * values[j]).sum();
            }
            return;
        }
        let fft = self.fft.as_ref().expect("fast path");
        let mut buf = Vec::with_capacity(2 * (self.m - 1));
        self.dct1(fft, values, coeffs, &mut buf);
        let n = (self.m - 1) as f64;
        for (k, c) in coeffs.iter_mut().enumerate() {
            let g = if k == 0 || k == self.m - 1 { 0.5 } else { 1.0 };
            *c *= 2.0 / n * g;
        }
    }

    /// Coefficients → node values, `v_j = Σ_k c_k T_k(s_j)`.
    pub fn inverse(&self, coeffs: &[f64], values: &mut [f64]) {
        assert_eq!(values.len(), self.m);
        assert_eq!(coeffs.len(), self.m);
        if self.fft.is_none() || self.m < 3 {
            let nodes = cheb_nodes(self.m).expect("m >= 2");
            for (j, &s) in nodes.iter().enumerate() {
                values[j] = ChebSeries1D::clenshaw(coeffs, s);
            }
            return;
        }
        let fft = self.fft.as_ref().expect("fast path");
        let mut scaled = coeffs.to_vec();
        scaled[0] *= 2.0;
        scaled[self.m - 1] *= 2.0;
        let mut buf = Vec::with_capacity(2 * (self.m - 1));
        self.dct1(fft, &scaled, values, &mut buf);
    }

    /// Applies the forward transform to every mode-`ℓ` fiber of `t`.
    pub fn forward_mode(&self, t: &DenseTensor3, mode: usize) -> Result<DenseTensor3> {
        self.apply_mode(t, mode, true)
    }

    pub fn inverse_mode(&self, t: &DenseTensor3, mode: usize) -> Result<DenseTensor3> {
        self.apply_mode(t, mode, false)
    }

    fn apply_mode(&self, t: &DenseTensor3, mode: usize, forward: bool) -> Result<DenseTensor3> {
        if !(1..=3).contains(&mode) {
            return Err(Error::InvalidMode(mode));
        }
        let dims = t.dims();
        if dims[mode - 1] != self.m {
            return Err(Error::DimensionMismatch(format!(
                "mode-{mode} size {} does not match transform length {}",
                dims[mode - 1],
                self.m
            )));
        }
        let mut data = t.as_slice().to_vec();
        let [n1, n2, n3] = dims;
        let stride = match mode {
            1 => 1,
            2 => n1,
            _ => n1 * n2,
        };
        let fibers: Vec<usize> = match mode {
            1 => (0..n2 * n3).map(|c| c * n1).collect(),
            2 => (0..n3).flat_map(|k| (0..n1).map(move |i| i + n1 * n2 * k)).collect(),
            _ => (0..n1 * n2).collect(),
        };
        let mut fiber = vec![0.0; self.m];
        let mut out = vec![0.0; self.m];
        for start in fibers {
            for (q, f) in fiber.iter_mut().enumerate() {
                *f = data[start + q * stride];
            }
            if forward {
                self.forward(&fiber, &mut out);
            } else {
                self.inverse(&fiber, &mut out);
            }
            for (q, o) in out.iter().enumerate() {
                data[start + q * stride] = *o;
            }
        }
        DenseTensor3::from_vec(dims, data)
    }
}

/// Result of a point evaluation that may lie outside `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub extrapolated: bool,
}

/// Slack allowed before a point counts as outside the reference interval.
pub const DOMAIN_SLACK: f64 = 1e-12;

/// Univariate Chebyshev series `Σ_k c_k T_k(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebSeries1D {
    coeffs: Vec<f64>,
}

impl ChebSeries1D {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        check_degree(coeffs.len())?;
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("Chebyshev coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub(crate) fn clenshaw(c: &[f64], x: f64) -> f64 {
        let (mut b1, mut b2) = (0.0, 0.0);
        for &ck in c.iter().skip(1).rev() {
            let b0 = ck + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        c[0] + x * b1 - b2
    }

    /// Clenshaw evaluation; points outside `[-1, 1]` are flagged.
    pub fn evaluate(&self, x: f64) -> Evaluation {
        Evaluation {
            value: Self::clenshaw(&self.coeffs, x),
            extrapolated: x.abs() > 1.0 + DOMAIN_SLACK,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        Self::clenshaw(&self.coeffs, x)
    }
}

/// Chebyshev coefficients of the interpolant through `values` sampled at
/// `cheb_nodes(values.len())`.
pub fn coeffs_from_values(values: &[f64]) -> Result<ChebSeries1D> {
    check_degree(values.len())?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("node sample".into()));
    }
    let tr = ChebTransform::new(values.len())?;
    let mut c = vec![0.0; values.len()];
    tr.forward(values, &mut c);
    ChebSeries1D::new(c)
}

/// Chebyshev coefficient tensor `C = T ×1 W¹ ×2 W² ×3 W³` from node samples.
pub fn cct_from_values(samples: &DenseTensor3, m: [usize; 3]) -> Result<DenseTensor3> {
    if samples.dims() != m {
        return Err(Error::DimensionMismatch(format!(
            "samples have dims {:?}, degrees are {:?}",
            samples.dims(),
            m
        )));
    }
    let mut t = samples.clone();
    for (l, &ml) in m.iter().enumerate() {
        t = ChebTransform::new(ml)?.forward_mode(&t, l + 1)?;
    }
    Ok(t)
}

/// Inverse of [`cct_from_values`]: values of the expansion at the node grid.
pub fn values_from_cct(cct: &DenseTensor3) -> Result<DenseTensor3> {
    let m = cct.dims();
    let mut t = cct.clone();
    for (l, &ml) in m.iter().enumerate() {
        t = ChebTransform::new(ml)?.inverse_mode(&t, l + 1)?;
    }
    Ok(t)
}

/// Direct evaluation `Σ C_{ijk} T_i(x) T_j(y) T_k(z)` of a dense coefficient tensor.
pub fn cct_evaluate(cct: &DenseTensor3, x: [f64; 3]) -> f64 {
    let m = cct.dims();
    let a = cheb_basis(m[0], x[0]);
    let b = cheb_basis(m[1], x[1]);
    let c = cheb_basis(m[2], x[2]);
    cct.contract_vectors(&a, &b, &c)
}
