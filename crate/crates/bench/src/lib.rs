//! Shared fixtures for the benchmarks.

use chebtuck::multiparticle::{assemble_long_range, generate_cluster, DEFAULT_MIN_SEPARATION};
use chebtuck::newton::{default_sigma, Integration, NewtonCp, SincQuadrature, DEFAULT_QUAD_M, DEFAULT_TAU_CUT};
use chebtuck::CpTensor;

/// Long-range part of a synthetic `count`-particle cluster on the `n` grid.
pub fn cluster_long_range(n: usize, count: usize) -> CpTensor {
    let quad = SincQuadrature::for_grid(DEFAULT_QUAD_M, n).expect("quadrature");
    let kernel = NewtonCp::reference(n, &quad, Integration::ExactErf).expect("kernel");
    let split = kernel.range_separate(default_sigma(n), DEFAULT_TAU_CUT).expect("split");
    let sys = generate_cluster(count, 7, DEFAULT_MIN_SEPARATION).expect("cluster");
    assemble_long_range(&sys, &split, n).expect("assembly")
}
