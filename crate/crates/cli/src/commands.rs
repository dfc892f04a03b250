use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use chebtuck::chebtuck::{lift_cp, CpBuildOptions, CpCompression};
use chebtuck::chebyshev::{cheb_basis, cheb_basis_matrix};
use chebtuck::decomp::RhosvdCriterion;
use chebtuck::io::{self, CacheStatus, Stored};
use chebtuck::multiparticle::{
    assemble_long_range, compress_long_range, default_lattice_spacing, generate_cluster, generate_lattice,
    load_particles, middle_index, middle_slice_error, relative_max_error, GridSlice, ShortRangeCumulated, Vacancies,
    DEFAULT_MIN_SEPARATION,
};
use chebtuck::newton::{default_sigma, NewtonCp, RsSplit, SincQuadrature};
use chebtuck::spline::{uniform_grid, InterpKind};
use chebtuck::{ChebTuckFunction, CpTensor, Matrix, ParticleSystem};

use crate::table::{sci, secs, Table};
use crate::{
    Algorithm, BuildArgs, EvalArgs, KernelArgs, KernelOpts, PotentialArgs, RsOpts, ScalingArgs, SourceOpts,
    TableNewtonArgs, TestFunction,
};

fn load_kernel(opts: &KernelOpts, n: usize, reference: bool) -> Result<NewtonCp> {
    let (k, status, path) = io::cached_kernel(opts.kernel_cache.as_deref(), n, opts.quad_m, opts.integration, reference)
        .with_context(|| format!("Newton kernel n={n} M={}", opts.quad_m))?;
    if let Some(p) = path {
        let what = if status == CacheStatus::Hit { "loaded" } else { "cached" };
        eprintln!("{what} kernel {}", p.display());
    }
    Ok(k)
}

fn separate(k: &NewtonCp, n: usize, rs: &RsOpts) -> Result<RsSplit> {
    let sigma = rs.sigma.unwrap_or_else(|| default_sigma(n));
    Ok(k.range_separate(sigma, rs.tau_cut)?)
}

fn cp_options(eps: f64, interp: InterpKind) -> CpBuildOptions {
    CpBuildOptions {
        compression: CpCompression::Rhosvd(RhosvdCriterion::Tail(eps)),
        interp,
        measure_delta: false,
    }
}

fn rank_cells(r: [usize; 3]) -> [String; 4] {
    [r.iter().max().unwrap_or(&0).to_string(), r[0].to_string(), r[1].to_string(), r[2].to_string()]
}

pub fn kernel(a: &KernelArgs) -> Result<()> {
    let k = load_kernel(&a.kernel, a.n, a.reference)?;
    let quad = SincQuadrature::for_grid(a.kernel.quad_m, a.n)?;
    let full = k.len() <= 128;
    let err = k.oracle_error(1, full);
    let mut t = Table::new(&["n", "len", "quad_m", "integration", "rank", "quad_err", "oracle_err", "checked"]);
    t.push(vec![
        a.n.to_string(),
        k.len().to_string(),
        a.kernel.quad_m.to_string(),
        a.kernel.integration.name().to_string(),
        k.rank().to_string(),
        sci(quad.max_rel_error()),
        sci(err),
        if full { "grid" } else { "middle_slice" }.to_string(),
    ]);
    t.emit(a.output.out.as_deref(), !a.output.no_timing)?;
    if err > a.tol {
        if let Some(dir) = &a.kernel.kernel_cache {
            let name = io::kernel_cache_name(a.n, a.kernel.quad_m, a.kernel.integration, a.reference);
            let _ = std::fs::remove_file(dir.join(name));
        }
        bail!("kernel oracle error {err:.3e} exceeds tolerance {:.1e}", a.tol);
    }
    Ok(())
}

pub fn table_newton(a: &TableNewtonArgs) -> Result<()> {
    let mut t = Table::new(&[
        "n", "m", "err", "rank", "r1", "r2", "r3", "kernel_rank", "long_rank", "sigma", "build_s",
    ]);
    for &n in &a.n {
        let k = load_kernel(&a.kernel, n, false)?;
        let (part, sigma) = if a.no_rs {
            (k.cp().clone(), String::new())
        } else {
            let s = separate(&k, n, &a.rs)?;
            ensure!(s.long_rank() > 0, "no long-range terms at n={n}");
            (s.long, s.sigma.to_string())
        };
        for &m in &a.m {
            let start = Instant::now();
            let g = ChebTuckFunction::build_from_cp_with(&part, [m; 3], &cp_options(a.eps, a.interp))?;
            let elapsed = start.elapsed().as_secs_f64();
            let err = middle_slice_error(&g, &part, n)?;
            let [r, r1, r2, r3] = rank_cells(g.ranks());
            t.push(vec![
                n.to_string(),
                m.to_string(),
                sci(err),
                r,
                r1,
                r2,
                r3,
                k.rank().to_string(),
                part.rank().to_string(),
                sigma.clone(),
                secs(elapsed),
            ]);
        }
    }
    t.emit(a.output.out.as_deref(), !a.output.no_timing)
}

fn particle_source(src: &SourceOpts, a: &PotentialArgs) -> Result<(String, ParticleSystem)> {
    if let Some(p) = &src.particles {
        return Ok(("file".into(), load_particles(p)?));
    }
    if let Some(dims) = src.lattice {
        let spacing = a.spacing.unwrap_or_else(|| default_lattice_spacing(dims));
        let vac = if a.vacancies > 0 {
            Vacancies::Random { count: a.vacancies, seed: a.seed }
        } else {
            Vacancies::None
        };
        return Ok(("lattice".into(), generate_lattice(dims, spacing, &vac)?));
    }
    let size = src.cluster.unwrap_or(500).max(a.count.iter().copied().max().unwrap_or(0));
    Ok(("cluster".into(), generate_cluster(size, a.seed, DEFAULT_MIN_SEPARATION)?))
}

/// Middle slice of the uncompressed Chebyshev interpolant of `a`.
fn uncompressed_slice(a: &CpTensor, m: usize, interp: InterpKind, n: usize, k: usize) -> Result<Matrix> {
    let cct = lift_cp(a, [m; 3], interp, false)?.cct;
    let t = uniform_grid(n);
    let b = cheb_basis_matrix(m, &t);
    let row = Matrix::from_row_slice(1, m, &cheb_basis(m, t[k]));
    let scale = row * cct.factor(3);
    let mut p1 = &b * cct.factor(1);
    for (j, mut col) in p1.column_iter_mut().enumerate() {
        col *= cct.weights()[j] * scale[(0, j)];
    }
    Ok(p1 * (&b * cct.factor(2)).transpose())
}

fn dump_slice(path: &Path, n: usize, fields: [&Matrix; 4]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "i,j,x,y,approx,reference,rhosvd_err,total_err")?;
    let t = uniform_grid(n);
    let [approx, reference, uncompressed, _] = fields;
    for i in 0..n {
        for j in 0..n {
            let (a, r, u) = (approx[(i, j)], reference[(i, j)], uncompressed[(i, j)]);
            writeln!(w, "{i},{j},{:.6},{:.6},{},{},{},{}", t[i], t[j], sci(a), sci(r), sci(a - u), sci(a - r))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn potential(a: &PotentialArgs) -> Result<()> {
    let (label, sys) = particle_source(&a.source, a)?;
    let counts = if a.count.is_empty() { vec![sys.len()] } else { a.count.clone() };
    if let Some(&too_many) = counts.iter().find(|&&c| c > sys.len()) {
        bail!("requested {too_many} particles but the source has {}", sys.len());
    }
    let n = a.n;
    let mid = middle_index(n);
    let reference = load_kernel(&a.kernel, n, true)?;
    let split = separate(&reference, n, &a.rs)?;
    ensure!(split.long_rank() > 0, "no long-range terms at n={n}");
    if let Some(dir) = &a.slices {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let mut cols = vec![
        "source", "N", "n", "m", "eps", "interp", "err", "rank", "r1", "r2", "r3", "long_rank", "cp_rank", "gamma",
        "short_storage", "overlap",
    ];
    if a.c2t {
        cols.extend(["c2t_rank", "c2t_err"]);
    }
    cols.push("build_s");
    if a.c2t {
        cols.push("c2t_s");
    }
    let mut t = Table::new(&cols);

    for &count in &counts {
        let sub = sys.truncated(count)?;
        let long = assemble_long_range(&sub, &split, n)?;
        let short = ShortRangeCumulated::new(&sub, &split, n)?;
        let ref_slice = long.frontal_slice(mid);
        let c2t = if a.c2t {
            let start = Instant::now();
            let (tk, rep) = compress_long_range(&long, a.eps)?;
            let elapsed = start.elapsed().as_secs_f64();
            Some((rep.ranks, relative_max_error(&tk.frontal_slice(mid), &ref_slice)?, elapsed))
        } else {
            None
        };
        for &m in &a.m {
            for &interp in &a.interp {
                let start = Instant::now();
                let g = ChebTuckFunction::build_from_cp_with(&long, [m; 3], &cp_options(a.eps, interp))?;
                let elapsed = start.elapsed().as_secs_f64();
                let approx = g.grid_slice(n, mid)?;
                let err = relative_max_error(&approx, &ref_slice)?;
                let [r, r1, r2, r3] = rank_cells(g.ranks());
                let mut row = vec![
                    label.clone(),
                    count.to_string(),
                    n.to_string(),
                    m.to_string(),
                    sci(a.eps),
                    interp.name().to_string(),
                    sci(err),
                    r,
                    r1,
                    r2,
                    r3,
                    split.long_rank().to_string(),
                    long.rank().to_string(),
                    short.gamma().to_string(),
                    short.storage().to_string(),
                    short.overlapping().to_string(),
                ];
                if let Some((ranks, e, _)) = &c2t {
                    row.push(ranks.iter().max().unwrap_or(&0).to_string());
                    row.push(sci(*e));
                }
                row.push(secs(elapsed));
                if let Some((_, _, s)) = &c2t {
                    row.push(secs(*s));
                }
                t.push(row);
                if let Some(dir) = &a.slices {
                    let unc = uncompressed_slice(&long, m, interp, n, mid)?;
                    let path = dir.join(format!("slice_{label}_N{count}_n{n}_m{m}_{interp}.csv"));
                    dump_slice(&path, n, [&approx, &ref_slice, &unc, &ref_slice])?;
                }
            }
        }
    }
    t.emit(a.output.out.as_deref(), !a.output.no_timing)
}

/// Least-squares slope of `log y` against `log x`; `None` without two distinct sizes.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if logs.len() < 2 || sxx == 0.0 {
        return None;
    }
    Some(logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

fn min_time<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..repeats {
        let start = Instant::now();
        let v = f()?;
        best = best.min(start.elapsed().as_secs_f64());
        out = Some(v);
    }
    Ok((out.expect("at least one repeat"), best))
}

pub fn scaling(a: &ScalingArgs) -> Result<()> {
    let sys = generate_cluster(a.count, a.seed, DEFAULT_MIN_SEPARATION)?;
    let mut t = Table::new(&["alg", "n", "m", "N", "rank", "r1", "r2", "r3", "time_s"]);
    let mut cp_times = Vec::new();
    let mut grid_times = Vec::new();
    for &n in &a.n {
        let reference = load_kernel(&a.kernel, n, true)?;
        let split = separate(&reference, n, &a.rs)?;
        let long = assemble_long_range(&sys, &split, n)?;
        let mut row = |alg: &str, g: &ChebTuckFunction, secs_taken: f64| {
            let [r, r1, r2, r3] = rank_cells(g.ranks());
            t.push(vec![
                alg.into(),
                n.to_string(),
                a.m.to_string(),
                a.count.to_string(),
                r,
                r1,
                r2,
                r3,
                secs(secs_taken),
            ]);
        };
        if matches!(a.alg, Algorithm::Cp | Algorithm::Both) {
            let (g, s) = min_time(a.repeats, || {
                Ok(ChebTuckFunction::build_from_cp_with(&long, [a.m; 3], &cp_options(a.eps, InterpKind::Spline))?)
            })?;
            row("cp", &g, s);
            cp_times.push((n as f64, s));
        }
        if matches!(a.alg, Algorithm::Grid | Algorithm::Both) {
            let dense = compress_long_range(&long, 1e-10)?.0.to_dense();
            let (g, s) = min_time(a.repeats, || Ok(ChebTuckFunction::build_from_grid(&dense, [a.m; 3], a.eps)?))?;
            row("grid", &g, s);
            grid_times.push((n as f64, s));
        }
    }
    t.emit(a.output.out.as_deref(), !a.output.no_timing)?;
    for (name, times) in [("cp", &cp_times), ("grid", &grid_times)] {
        if times.is_empty() {
            continue;
        }
        match loglog_slope(times) {
            Some(s) => eprintln!("{name}: log-log slope {s:.3} over {} sizes", times.len()),
            None => eprintln!("{name}: single size, no fit"),
        }
    }
    for (c, g) in cp_times.iter().zip(&grid_times) {
        eprintln!("n={}: grid/cp time ratio {:.2}", c.0, g.1 / c.1);
    }
    Ok(())
}

fn test_function(f: TestFunction) -> fn(f64, f64, f64) -> f64 {
    match f {
        TestFunction::Xyz => |x, y, z| x * y * z,
        TestFunction::Exp => |x, y, z| (x + y + z).exp(),
        TestFunction::Runge => |x, y, z| 1.0 / (1.0 + x * x + y * y + z * z),
        TestFunction::Coulomb => |x, y, z| 1.0 / ((x - 1.5).powi(2) + y * y + z * z).sqrt(),
    }
}

pub fn build(a: &BuildArgs) -> Result<()> {
    let f = test_function(a.function);
    let start = Instant::now();
    let g = ChebTuckFunction::build_from_function(f, [a.m; 3], a.eps)?;
    let elapsed = start.elapsed().as_secs_f64();
    io::save(&a.save, &Stored::ChebTuck(g.clone())).with_context(|| format!("writing {}", a.save.display()))?;
    let probe = uniform_grid(21);
    let mut err = 0.0f64;
    for &x in &probe {
        for &y in &probe {
            for &z in &probe {
                err = err.max((g.value([x, y, z]) - f(x, y, z)).abs());
            }
        }
    }
    let name = format!("{:?}", a.function).to_lowercase();
    let [r, r1, r2, r3] = rank_cells(g.ranks());
    let mut t = Table::new(&["function", "m", "eps", "rank", "r1", "r2", "r3", "probe_err", "build_s"]);
    t.push(vec![name, a.m.to_string(), sci(a.eps), r, r1, r2, r3, sci(err), secs(elapsed)]);
    t.emit(a.output.out.as_deref(), !a.output.no_timing)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let g = match io::load(&a.input).with_context(|| format!("reading {}", a.input.display()))? {
        Stored::ChebTuck(g) => g,
        other => bail!("{} holds a {} object, not a ChebTuck function", a.input.display(), other.kind_name()),
    };
    let mut t = Table::new(&["x", "y", "z", "value", "extrapolated"]);
    for p in &a.points {
        let v = g.evaluate(*p);
        t.push(vec![p[0].to_string(), p[1].to_string(), p[2].to_string(), format!("{:.15e}", v.value), v.extrapolated.to_string()]);
    }
    t.emit(a.output.out.as_deref(), !a.output.no_timing)
}
