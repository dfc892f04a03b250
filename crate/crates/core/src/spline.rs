//! Univariate interpolants on uniform grids over `[-1, 1]` and their separable
//! trivariate extension.
//!
//! Knots are `t_i = −1 + i·h`, `h = 2/(n−1)`, zero-based.

use crate::chebyshev::{Evaluation, DOMAIN_SLACK};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor3;

/// Minimum number of knots for the not-a-knot cubic.
pub const MIN_KNOTS: usize = 4;

fn knot_spacing(n: usize) -> f64 {
    2.0 / (n - 1) as f64
}

/// Interval index and local offset for `x` on an `n`-knot uniform grid.
#[inline]
fn locate(n: usize, h: f64, x: f64) -> (usize, f64) {
    let t = (x + 1.0) / h;
    let i = if t.is_nan() || t <= 0.0 {
        0
    } else {
        (t.floor() as usize).min(n - 2)
    };
    (i, x - (-1.0 + i as f64 * h))
}

#[inline]
fn outside(x: f64) -> bool {
    x.abs() > 1.0 + DOMAIN_SLACK
}

/// Piecewise cubic on a uniform partition of `[-1, 1]`.
///
/// Piece `i` is `a + b s + c s² + d s³` with `s = x − t_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicSpline1D {
    h: f64,
    pieces: Vec<[f64; 4]>,
}

impl CubicSpline1D {
    /// Not-a-knot interpolating cubic spline through `values` at the uniform knots.
    pub fn fit(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < MIN_KNOTS {
            return Err(Error::InvalidArgument(format!(
                "cubic spline needs at least {MIN_KNOTS} knots, got {n}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spline data".into()));
        }
        let h = knot_spacing(n);
        let moments = not_a_knot_moments(values, h);
        let pieces = (0..n - 1)
            .map(|i| {
                let (m0, m1) = (moments[i], moments[i + 1]);
                [
                    values[i],
                    (values[i + 1] - values[i]) / h - h * (2.0 * m0 + m1) / 6.0,
                    0.5 * m0,
                    (m1 - m0) / (6.0 * h),
                ]
            })
            .collect();
        Ok(Self { h, pieces })
    }

    /// A piecewise cubic from explicit `[a, b, c, d]` pieces on a uniform partition.
    pub fn from_pieces(pieces: Vec<[f64; 4]>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidArgument("no pieces".into()));
        }
        let h = 2.0 / pieces.len() as f64;
        Ok(Self { h, pieces })
    }

    pub fn knots(&self) -> usize {
        self.pieces.len() + 1
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn pieces(&self) -> &[[f64; 4]] {
        &self.pieces
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let (i, s) = locate(self.knots(), self.h, x);
        let [a, b, c, d] = self.pieces[i];
        a + s * (b + s * (c + s * d))
    }

    /// Evaluation with an extrapolation flag; outside the box the end cubics are extended.
    pub fn evaluate(&self, x: f64) -> Evaluation {
        Evaluation {
            value: self.value(x),
            extrapolated: outside(x),
        }
    }

    pub fn values_at(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.value(x)).collect()
    }

    pub fn derivative(&self, x: f64, order: usize) -> f64 {
        let (i, s) = locate(self.knots(), self.h, x);
        let [a, b, c, d] = self.pieces[i];
        match order {
            0 => a + s * (b + s * (c + s * d)),
            1 => b + s * (2.0 * c + 3.0 * s * d),
            2 => 2.0 * c + 6.0 * s * d,
            3 => 6.0 * d,
            _ => 0.0,
        }
    }

    /// Total variation of the (piecewise constant) third derivative: `Σ |jump of q'''|`
    /// over interior knots.
    pub fn third_derivative_variation(&self) -> f64 {
        self.pieces
            .windows(2)
            .map(|w| (6.0 * w[1][3] - 6.0 * w[0][3]).abs())
            .sum()
    }
}

/// Second-derivative values at the knots under not-a-knot end conditions.
fn not_a_knot_moments(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let rhs = |i: usize| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h);
    let mut m = vec![0.0; n];
    // with a uniform grid the end conditions collapse the first and last
    // interior equations to 6 M_1 = rhs_1 and 6 M_{n-2} = rhs_{n-2}
    m[1] = rhs(1) / 6.0;
    m[n - 2] = rhs(n - 2) / 6.0;
    if n > 5 {
        // Thomas algorithm on M_{i-1} + 4 M_i + M_{i+1} = rhs_i, i = 2..=n-3
        let lo = 2;
        let hi = n - 3;
        let len = hi - lo + 1;
        let mut cp = vec![0.0; len];
        let mut dp = vec![0.0; len];
        for q in 0..len {
            let i = lo + q;
            let mut d = rhs(i);
            if i == lo {
                d -= m[1];
            }
            if i == hi {
                d -= m[n - 2];
            }
            let (prev_c, prev_d) = if q == 0 { (0.0, 0.0) } else { (cp[q - 1], dp[q - 1]) };
            let denom = 4.0 - prev_c;
            cp[q] = 1.0 / denom;
            dp[q] = (d - prev_d) / denom;
        }
        m[hi] = dp[len - 1];
        for q in (0..len - 1).rev() {
            m[lo + q] = dp[q] - cp[q] * m[lo + q + 1];
        }
    } else if n == 5 {
        m[2] = (rhs(2) - m[1] - m[3]) / 4.0;
    }
    m[0] = 2.0 * m[1] - m[2];
    m[n - 1] = 2.0 * m[n - 2] - m[n - 3];
    m
}

/// Which univariate interpolant lifts grid vectors to functions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum InterpKind {
    #[default]
    Spline,
    Linear,
    Nearest,
}

impl InterpKind {
    pub fn name(self) -> &'static str {
        match self {
            InterpKind::Spline => "spline",
            InterpKind::Linear => "linear",
            InterpKind::Nearest => "nearest",
        }
    }
}

impl std::str::FromStr for InterpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spline" => Ok(InterpKind::Spline),
            "linear" => Ok(InterpKind::Linear),
            "nearest" => Ok(InterpKind::Nearest),
            other => Err(Error::InvalidArgument(format!("unknown interpolant '{other}'"))),
        }
    }
}

impl std::fmt::Display for InterpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A fitted univariate interpolant of any supported kind.
#[derive(Clone, Debug, PartialEq)]
pub enum Interpolant1D {
    Spline(CubicSpline1D),
    Linear { h: f64, values: Vec<f64> },
    Nearest { h: f64, values: Vec<f64> },
}

impl Interpolant1D {
    pub fn fit(kind: InterpKind, values: &[f64]) -> Result<Self> {
        match kind {
            InterpKind::Spline => Ok(Interpolant1D::Spline(CubicSpline1D::fit(values)?)),
            InterpKind::Linear | InterpKind::Nearest => {
                if values.len() < 2 {
                    return Err(Error::InvalidArgument("need at least 2 knots".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("interpolation data".into()));
                }
                let h = knot_spacing(values.len());
                let values = values.to_vec();
                Ok(if kind == InterpKind::Linear {
                    Interpolant1D::Linear { h, values }
                } else {
                    Interpolant1D::Nearest { h, values }
                })
            }
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Interpolant1D::Spline(s) => s.value(x),
            Interpolant1D::Linear { h, values } => {
                let (i, s) = locate(values.len(), *h, x);
                let w = s / h;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
            Interpolant1D::Nearest { h, values } => {
                let t = ((x + 1.0) / h).round();
                let i = if t.is_nan() || t <= 0.0 {
                    0
                } else {
                    (t as usize).min(values.len() - 1)
                };
                values[i]
            }
        }
    }

    pub fn evaluate(&self, x: f64) -> Evaluation {
        Evaluation {
            value: self.value(x),
            extrapolated: outside(x),
        }
    }

    pub fn values_at(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.value(x)).collect()
    }
}

/// Evaluates the interpolant of many data vectors of one length at a fixed
/// point set. Point locations and the spline's tridiagonal factorization are
/// computed once.
#[derive(Clone, Debug)]
pub struct GridSampler {
    kind: InterpKind,
    n: usize,
    h: f64,
    located: Vec<(usize, f64)>,
    nearest: Vec<usize>,
    /// `1 / (4 − c'_{q−1})` of the forward sweep.
    inv_denom: Vec<f64>,
}

impl GridSampler {
    pub fn new(kind: InterpKind, n: usize, points: &[f64]) -> Result<Self> {
        let min = if kind == InterpKind::Spline { MIN_KNOTS } else { 2 };
        if n < min {
            return Err(Error::InvalidArgument(format!("{} interpolation needs at least {min} knots, got {n}", kind.name())));
        }
        let h = knot_spacing(n);
        let located = points.iter().map(|&x| locate(n, h, x)).collect();
        let nearest = points
            .iter()
            .map(|&x| {
                let t = ((x + 1.0) / h).round();
                if t.is_nan() || t <= 0.0 {
                    0
                } else {
                    (t as usize).min(n - 1)
                }
            })
            .collect();
        let len = n.saturating_sub(4);
        let mut inv_denom = Vec::with_capacity(len);
        let mut c = 0.0;
        for _ in 0..len {
            let r = 1.0 / (4.0 - c);
            inv_denom.push(r);
            c = r;
        }
        Ok(Self {
            kind,
            n,
            h,
            located,
            nearest,
            inv_denom,
        })
    }

    pub fn knots(&self) -> usize {
        self.n
    }

    /// Writes the interpolant of `y` at the points into `out`; `scratch` is
    /// reused between calls.
    pub fn sample(&self, y: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        debug_assert_eq!(y.len(), self.n);
        match self.kind {
            InterpKind::Nearest => {
                for (o, &i) in out.iter_mut().zip(&self.nearest) {
                    *o = y[i];
                }
            }
            InterpKind::Linear => {
                for (o, &(i, s)) in out.iter_mut().zip(&self.located) {
                    let w = s / self.h;
                    *o = y[i] * (1.0 - w) + y[i + 1] * w;
                }
            }
            InterpKind::Spline => {
                self.moments(y, scratch);
                let m = &scratch[..];
                let h = self.h;
                for (o, &(i, s)) in out.iter_mut().zip(&self.located) {
                    let (m0, m1) = (m[i], m[i + 1]);
                    let b = (y[i + 1] - y[i]) / h - h * (2.0 * m0 + m1) / 6.0;
                    let d = (m1 - m0) / (6.0 * h);
                    *o = y[i] + s * (b + s * (0.5 * m0 + s * d));
                }
            }
        }
    }

    /// Same moments as the not-a-knot fit, with the precomputed sweep.
    fn moments(&self, y: &[f64], m: &mut Vec<f64>) {
        let n = self.n;
        let h2 = 6.0 / (self.h * self.h);
        let rhs = |i: usize| h2 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
        m.clear();
        m.resize(n, 0.0);
        m[1] = rhs(1) / 6.0;
        m[n - 2] = rhs(n - 2) / 6.0;
        if n > 5 {
            let (lo, hi) = (2, n - 3);
            // forward sweep stores d' in place
            let mut prev = 0.0;
            for q in 0..=hi - lo {
                let i = lo + q;
                let mut d = rhs(i);
                if i == lo {
                    d -= m[1];
                }
                if i == hi {
                    d -= m[n - 2];
                }
                prev = (d - prev) * self.inv_denom[q];
                m[i] = prev;
            }
            for i in (lo..hi).rev() {
                m[i] -= self.inv_denom[i - lo] * m[i + 1];
            }
        } else if n == 5 {
            m[2] = (rhs(2) - m[1] - m[3]) / 4.0;
        }
        m[0] = 2.0 * m[1] - m[2];
        m[n - 1] = 2.0 * m[n - 2] - m[n - 3];
    }
}

/// Fits along every mode-`mode` fiber of `t` and evaluates at `points`.
pub fn interpolate_mode(
    t: &DenseTensor3,
    mode: usize,
    points: &[f64],
    kind: InterpKind,
) -> Result<DenseTensor3> {
    if !(1..=3).contains(&mode) {
        return Err(Error::InvalidMode(mode));
    }
    let dims = t.dims();
    let n = dims[mode - 1];
    let [n1, n2, n3] = dims;
    let stride = match mode {
        1 => 1,
        2 => n1,
        _ => n1 * n2,
    };
    let mut out_dims = dims;
    out_dims[mode - 1] = points.len();
    let out_stride = match mode {
        1 => 1,
        2 => out_dims[0],
        _ => out_dims[0] * out_dims[1],
    };
    if t.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("interpolation data".into()));
    }
    let sampler = GridSampler::new(kind, n, points)?;
    let mut out = vec![0.0; out_dims.iter().product()];
    let data = t.as_slice();
    let mut fiber = vec![0.0; n];
    let mut vals = vec![0.0; points.len()];
    let mut scratch = Vec::with_capacity(n);
    // (input start, output start) for every fiber
    let starts: Vec<(usize, usize)> = match mode {
        1 => (0..n2 * n3).map(|c| (c * n1, c * points.len())).collect(),
        2 => (0..n3)
            .flat_map(|k| {
                (0..n1).map(move |i| (i + n1 * n2 * k, i + n1 * points.len() * k))
            })
            .collect(),
        _ => (0..n1 * n2).map(|c| (c, c)).collect(),
    };
    for (src, dst) in starts {
        for (q, f) in fiber.iter_mut().enumerate() {
            *f = data[src + q * stride];
        }
        sampler.sample(&fiber, &mut vals, &mut scratch);
        for (q, v) in vals.iter().enumerate() {
            out[dst + q * out_stride] = *v;
        }
    }
    DenseTensor3::from_vec(out_dims, out)
}

fn check_trivariate(f: &DenseTensor3) -> Result<()> {
    if f.dims().iter().any(|&d| d < MIN_KNOTS) {
        return Err(Error::InvalidArgument(format!(
            "trivariate spline needs at least {MIN_KNOTS} points per mode, got {:?}",
            f.dims()
        )));
    }
    Ok(())
}

/// Tensor-product interpolant of `f` evaluated on the product grid
/// `points[0] × points[1] × points[2]`, reducing mode 3, then 2, then 1.
pub fn trivariate_eval_grid(
    f: &DenseTensor3,
    points: [&[f64]; 3],
    kind: InterpKind,
) -> Result<DenseTensor3> {
    if kind == InterpKind::Spline {
        check_trivariate(f)?;
    }
    let t = interpolate_mode(f, 3, points[2], kind)?;
    let t = interpolate_mode(&t, 2, points[1], kind)?;
    interpolate_mode(&t, 1, points[0], kind)
}

/// Tricubic tensor-product spline of `f` evaluated at a single point.
pub fn trivariate_spline_eval(f: &DenseTensor3, x: [f64; 3]) -> Result<f64> {
    let g = trivariate_eval_grid(f, [&[x[0]], &[x[1]], &[x[2]]], InterpKind::Spline)?;
    Ok(g.get(0, 0, 0))
}

/// Uniform knots `−1 + i·2/(n−1)`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    let h = knot_spacing(n);
    (0..n).map(|i| -1.0 + i as f64 * h).collect()
}
