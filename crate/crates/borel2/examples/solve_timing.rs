//! Quick timing probe for the acceptance-scale fixed-point solve.

use borel2::borel_plane::{select_directions, BorelGrid, NormParams};
use borel2::config::reference_config;
use borel2::fixed_point::{build_tables, solve_fixed_point};
use borel2::Complex64;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let cfg = reference_config(0.01);
    let eps = Complex64::new(0.05, 0.0);
    let t0 = Instant::now();
    let m_grid = cfg.grid.frequency_grid().unwrap();
    let choice = select_directions(&cfg, &m_grid, 0.5).unwrap();
    println!(
        "directions: d1={:.4} d2={:.4} rho1={:.4} C={:.3e} ({:?})",
        choice.d1,
        choice.d2,
        choice.rho1,
        choice.c_emp,
        t0.elapsed()
    );
    let t1 = Instant::now();
    let grid =
        Arc::new(BorelGrid::for_config(&cfg, choice.d1, choice.d2, choice.rho1, eps.norm()).unwrap());
    let tables = build_tables(&cfg, grid.clone()).unwrap();
    println!(
        "grid: rays={} n1={} n2={} nm={} nodes={} tables in {:?}",
        grid.n_rays1(),
        grid.radii1.len(),
        grid.n2(),
        grid.nm(),
        grid.total_nodes(),
        t1.elapsed()
    );
    let p = NormParams::new(1.0, 1.0, cfg.beta, cfg.mu, cfg.k1, cfg.k2, eps).unwrap();
    let t2 = Instant::now();
    let rep = solve_fixed_point(&cfg, eps, &p, 1e-8, 30, &tables).unwrap();
    println!(
        "solve: iters={} residual={:.3e} contraction={:.3} varpi={:.3e} bound={} in {:?}",
        rep.iterations,
        rep.residual,
        rep.contraction_estimate,
        rep.varpi_emp,
        rep.bound_e807_pass,
        t2.elapsed()
    );
    for (it, inc) in &rep.trace {
        println!("  it {it}: increment {inc:.3e}");
    }
}
