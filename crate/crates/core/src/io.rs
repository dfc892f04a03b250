//! The `CTK1` binary container: magic bytes, a `u32` kind tag, `u64` shape
//! fields and little-endian `f64` payloads (matrices column-major, dense
//! tensors first index fastest).

use std::fs;
use std::path::{Path, PathBuf};

use crate::chebtuck::{ChebTuckFunction, Domain};
use crate::error::{Error, Result};
use crate::newton::{Integration, NewtonCp, SincQuadrature};
use crate::tensor::{CpTensor, DenseTensor3, Matrix, TuckerTensor};

pub const MAGIC: &[u8; 4] = b"CTK1";

const KIND_DENSE: u32 = 1;
const KIND_CP: u32 = 2;
const KIND_TUCKER: u32 = 3;
const KIND_CHEBTUCK: u32 = 4;
const KIND_NEWTON: u32 = 5;

/// Any object the container can hold.
#[derive(Clone, Debug, PartialEq)]
pub enum Stored {
    Dense(DenseTensor3),
    Cp(CpTensor),
    Tucker(TuckerTensor),
    ChebTuck(ChebTuckFunction),
    Newton(NewtonCp),
}

impl Stored {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Stored::Dense(_) => "dense",
            Stored::Cp(_) => "cp",
            Stored::Tucker(_) => "tucker",
            Stored::ChebTuck(_) => "chebtuck",
            Stored::Newton(_) => "newton",
        }
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.0.reserve(8 * v.len());
        for x in v {
            self.f64(*x);
        }
    }
    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.nrows());
        self.u64(m.ncols());
        self.f64s(m.as_slice());
    }
    fn dense(&mut self, t: &DenseTensor3) {
        for d in t.dims() {
            self.u64(d);
        }
        self.f64s(t.as_slice());
    }
    fn cp(&mut self, c: &CpTensor) {
        for d in c.dims() {
            self.u64(d);
        }
        self.u64(c.rank());
        self.f64s(c.weights());
        for f in c.factors() {
            self.matrix(f);
        }
    }
    fn tucker(&mut self, t: &TuckerTensor) {
        self.dense(t.core());
        for l in 1..=3 {
            self.matrix(t.factor(l));
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated container at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Format(format!("size field {v} too large")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        let bytes = k.checked_mul(8).ok_or_else(|| Error::Format("payload size overflow".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn count(&mut self, dims: &[usize]) -> Result<usize> {
        dims.iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format("shape overflow".into()))
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let (r, c) = (self.u64()?, self.u64()?);
        let k = self.count(&[r, c])?;
        Ok(Matrix::from_vec(r, c, self.f64s(k)?))
    }
    fn dense(&mut self) -> Result<DenseTensor3> {
        let dims = [self.u64()?, self.u64()?, self.u64()?];
        let k = self.count(&dims)?;
        DenseTensor3::from_vec(dims, self.f64s(k)?)
    }
    fn cp(&mut self) -> Result<CpTensor> {
        let dims = [self.u64()?, self.u64()?, self.u64()?];
        let rank = self.u64()?;
        let weights = self.f64s(rank)?;
        let factors = [self.matrix()?, self.matrix()?, self.matrix()?];
        for l in 0..3 {
            if factors[l].shape() != (dims[l], rank) {
                return Err(Error::Format(format!("CP factor {} has shape {:?}", l + 1, factors[l].shape())));
            }
        }
        if rank == 0 {
            return Ok(CpTensor::zero(dims));
        }
        CpTensor::from_parts(weights, factors)
    }
    fn tucker(&mut self) -> Result<TuckerTensor> {
        let core = self.dense()?;
        let factors = [self.matrix()?, self.matrix()?, self.matrix()?];
        TuckerTensor::new_general(core, factors).map_err(|e| Error::Format(format!("Tucker payload: {e}")))
    }
}

/// Serializes to bytes.
pub fn to_bytes(obj: &Stored) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    match obj {
        Stored::Dense(t) => {
            w.u32(KIND_DENSE);
            w.dense(t);
        }
        Stored::Cp(c) => {
            w.u32(KIND_CP);
            w.cp(c);
        }
        Stored::Tucker(t) => {
            w.u32(KIND_TUCKER);
            w.tucker(t);
        }
        Stored::ChebTuck(g) => {
            w.u32(KIND_CHEBTUCK);
            for d in g.degrees() {
                w.u64(d);
            }
            match g.domain() {
                Some(d) => {
                    w.u32(1);
                    w.f64s(&d.lo);
                    w.f64s(&d.hi);
                }
                None => w.u32(0),
            }
            w.tucker(g.coefficients());
        }
        Stored::Newton(k) => {
            w.u32(KIND_NEWTON);
            w.u64(k.len());
            w.u64(k.center());
            w.f64(k.spacing());
            w.u32(k.integration().tag());
            w.u64(k.exponents().len());
            w.f64s(k.exponents());
            w.cp(k.cp());
        }
    }
    w.0
}

/// Parses bytes written by [`to_bytes`].
pub fn from_bytes(buf: &[u8]) -> Result<Stored> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("missing CTK1 magic".into()));
    }
    let obj = match r.u32()? {
        KIND_DENSE => Stored::Dense(r.dense()?),
        KIND_CP => Stored::Cp(r.cp()?),
        KIND_TUCKER => Stored::Tucker(r.tucker()?),
        KIND_CHEBTUCK => {
            let degrees = [r.u64()?, r.u64()?, r.u64()?];
            let domain = match r.u32()? {
                0 => None,
                1 => {
                    let lo = r.f64s(3)?;
                    let hi = r.f64s(3)?;
                    Some(Domain::new([lo[0], lo[1], lo[2]], [hi[0], hi[1], hi[2]])?)
                }
                f => return Err(Error::Format(format!("bad domain flag {f}"))),
            };
            let coeffs = r.tucker()?;
            if coeffs.dims() != degrees {
                return Err(Error::Format(format!("degrees {degrees:?} disagree with payload {:?}", coeffs.dims())));
            }
            Stored::ChebTuck(ChebTuckFunction::from_parts(coeffs, domain)?)
        }
        KIND_NEWTON => {
            let n = r.u64()?;
            let center = r.u64()?;
            let h = r.f64()?;
            let integration = Integration::from_tag(r.u32()?)?;
            let count = r.u64()?;
            let exponents = r.f64s(count)?;
            let cp = r.cp()?;
            Stored::Newton(NewtonCp::from_parts(n, center, h, exponents, integration, cp)?)
        }
        k => return Err(Error::Format(format!("unknown container kind {k}"))),
    };
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(obj)
}

pub fn save(path: &Path, obj: &Stored) -> Result<()> {
    fs::write(path, to_bytes(obj))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Stored> {
    from_bytes(&fs::read(path)?)
}

/// File name of a cached kernel.
pub fn kernel_cache_name(n: usize, quad_m: usize, integration: Integration, reference: bool) -> String {
    let kind = if reference { "ref_" } else { "" };
    format!("newton_{kind}n{n}_M{quad_m}_{}.ctk", integration.name())
}

/// Whether a kernel came from the cache or was built.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Built,
    Uncached,
}

/// Loads a kernel from `dir` (if given and present) or builds and stores it.
/// `reference` selects the `2n` shift-and-window kernel.
pub fn cached_kernel(
    dir: Option<&Path>,
    n: usize,
    quad_m: usize,
    integration: Integration,
    reference: bool,
) -> Result<(NewtonCp, CacheStatus, Option<PathBuf>)> {
    let path = dir.map(|d| d.join(kernel_cache_name(n, quad_m, integration, reference)));
    if let Some(p) = &path {
        if p.is_file() {
            if let Stored::Newton(k) = load(p)? {
                return Ok((k, CacheStatus::Hit, path));
            }
            return Err(Error::Format(format!("{} does not hold a kernel", p.display())));
        }
    }
    let quad = SincQuadrature::for_grid(quad_m, n)?;
    let k = if reference {
        NewtonCp::reference(n, &quad, integration)?
    } else {
        NewtonCp::new(n, &quad, integration)?
    };
    match &path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
            save(p, &Stored::Newton(k.clone()))?;
            Ok((k, CacheStatus::Built, path))
        }
        None => Ok((k, CacheStatus::Uncached, None)),
    }
}
