//! The Borel domain `(D(0,rho1) u S_{d1}) x S_{d2} x R`: ray/disc grids,
//! the weighted sup norm, the divisor polynomial `P_m`, and the root locus /
//! direction analysis that keeps the integration rays away from its zeros.

use crate::config::ProblemConfig;
use crate::error::EngineError;
use crate::fourier::FrequencyGrid;
use crate::util::{ray_point, wrap_angle, zpowi};
use crate::Result;
use num_complex::Complex64;
use serde::Serialize;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Sectors
// ---------------------------------------------------------------------------

/// An open sector with vertex at the origin, possibly bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectorGeometry {
    pub bisecting_direction: f64,
    pub half_opening: f64,
    pub inner_radius: f64,
    /// `None` marks an unbounded sector.
    pub outer_radius: Option<f64>,
}

impl SectorGeometry {
    pub fn new(
        bisecting_direction: f64,
        half_opening: f64,
        inner_radius: f64,
        outer_radius: Option<f64>,
    ) -> Result<Self> {
        if !(half_opening > 0.0 && half_opening < std::f64::consts::PI) {
            return Err(EngineError::Geometry(format!(
                "half opening must lie in (0, pi), got {half_opening}"
            )));
        }
        if let Some(r) = outer_radius {
            if inner_radius >= r {
                return Err(EngineError::Geometry(format!(
                    "inner radius {inner_radius} must be below outer radius {r}"
                )));
            }
        }
        Ok(Self {
            bisecting_direction,
            half_opening,
            inner_radius,
            outer_radius,
        })
    }

    pub fn opening(&self) -> f64 {
        2.0 * self.half_opening
    }

    pub fn contains_angle(&self, angle: f64) -> bool {
        wrap_angle(angle - self.bisecting_direction).abs() < self.half_opening
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let r = z.norm();
        r > self.inner_radius
            && self.outer_radius.map_or(true, |outer| r < outer)
            && self.contains_angle(z.arg())
    }
}

// ---------------------------------------------------------------------------
// Grids and gridded functions
// ---------------------------------------------------------------------------

/// Discretization of the Borel domain.
///
/// Every ray carries a uniform radial ladder (`radius_i = (i+1) h`); the
/// origin is excluded, and gridded functions carry an implicit zero there.
/// Ray 0 in the first variable is the unbounded ray in direction `d1`; the
/// remaining rays sample the disc `D(0, rho1)` at equally spaced angles with
/// the shared ladder truncated to the disc. The second variable lives on the
/// single unbounded ray in direction `d2`.
#[derive(Debug, Clone)]
pub struct BorelGrid {
    pub ray1_angles: Vec<f64>,
    pub ray1_len: Vec<usize>,
    pub radii1: Vec<f64>,
    pub h1: f64,
    pub d2: f64,
    pub radii2: Vec<f64>,
    pub h2: f64,
    pub rho1: f64,
    pub m: Arc<FrequencyGrid>,
    offsets: Vec<usize>,
    total: usize,
}

impl BorelGrid {
    /// Build the grid for directions `(d1, d2)` with radial extents
    /// `r1_max`, `r2_max` and `n_radial` nodes per ray; `n_disc_rays` disc
    /// rays are truncated to the disc radius `rho1`.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        d1: f64,
        d2: f64,
        rho1: f64,
        r1_max: f64,
        r2_max: f64,
        n_radial: usize,
        n_disc_rays: usize,
        m: Arc<FrequencyGrid>,
    ) -> Result<Self> {
        if n_radial < 4 {
            return Err(EngineError::Input("need at least 4 radial nodes".into()));
        }
        if !(r1_max > 0.0 && r2_max > 0.0 && rho1 > 0.0) {
            return Err(EngineError::Input("radial extents must be positive".into()));
        }
        let h1 = r1_max / n_radial as f64;
        let h2 = r2_max / n_radial as f64;
        let radii1: Vec<f64> = (0..n_radial).map(|i| (i + 1) as f64 * h1).collect();
        let radii2: Vec<f64> = (0..n_radial).map(|i| (i + 1) as f64 * h2).collect();
        let mut ray1_angles = vec![d1];
        let mut ray1_len = vec![n_radial];
        let disc_len = ((rho1 / h1).floor() as usize).clamp(4, n_radial);
        for a in 0..n_disc_rays {
            let ang = 2.0 * std::f64::consts::PI * a as f64 / n_disc_rays as f64;
            ray1_angles.push(ang);
            ray1_len.push(disc_len);
        }
        let n2 = radii2.len();
        let nm = m.len();
        let mut offsets = Vec::with_capacity(ray1_len.len());
        let mut total = 0;
        for &len in &ray1_len {
            offsets.push(total);
            total += len * n2 * nm;
        }
        Ok(Self {
            ray1_angles,
            ray1_len,
            radii1,
            h1,
            d2,
            radii2,
            h2,
            rho1,
            m,
            offsets,
            total,
        })
    }

    /// Grid for a problem instance at perturbation modulus `|eps|`, with
    /// radial extents `x1_max |eps|`, `x2_max |eps|` from the config.
    pub fn for_config(cfg: &ProblemConfig, d1: f64, d2: f64, rho1: f64, eps_abs: f64) -> Result<Self> {
        let g = &cfg.grid;
        Self::build(
            d1,
            d2,
            rho1,
            g.x1_max * eps_abs,
            g.x2_max * eps_abs,
            g.n_radial,
            g.n_angles,
            Arc::new(g.frequency_grid()?),
        )
    }

    pub fn n_rays1(&self) -> usize {
        self.ray1_angles.len()
    }

    pub fn n2(&self) -> usize {
        self.radii2.len()
    }

    pub fn nm(&self) -> usize {
        self.m.len()
    }

    pub fn total_nodes(&self) -> usize {
        self.total
    }

    #[inline]
    pub fn index(&self, ray: usize, i1: usize, i2: usize, im: usize) -> usize {
        debug_assert!(i1 < self.ray1_len[ray]);
        self.offsets[ray] + (i1 * self.n2() + i2) * self.nm() + im
    }

    #[inline]
    pub fn tau1(&self, ray: usize, i1: usize) -> Complex64 {
        ray_point(self.radii1[i1], self.ray1_angles[ray])
    }

    #[inline]
    pub fn tau2(&self, i2: usize) -> Complex64 {
        ray_point(self.radii2[i2], self.d2)
    }

    /// Geometric identity check used when two functions must share a grid.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.ray1_len == other.ray1_len
            && self.radii1.len() == other.radii1.len()
            && self.n2() == other.n2()
            && self.nm() == other.nm()
            && (self.h1 - other.h1).abs() < 1e-14 * self.h1
            && (self.h2 - other.h2).abs() < 1e-14 * self.h2
    }
}

/// Complex values on a [`BorelGrid`], layout `[ray][i1][i2][m]`.
#[derive(Debug, Clone)]
pub struct BorelFunction {
    pub grid: Arc<BorelGrid>,
    pub values: Vec<Complex64>,
}

impl BorelFunction {
    pub fn zeros(grid: Arc<BorelGrid>) -> Self {
        let n = grid.total_nodes();
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_fn(
        grid: Arc<BorelGrid>,
        mut f: impl FnMut(Complex64, Complex64, f64) -> Complex64,
    ) -> Self {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.total_nodes()];
        for ray in 0..grid.n_rays1() {
            for i1 in 0..grid.ray1_len[ray] {
                let t1 = grid.tau1(ray, i1);
                for i2 in 0..grid.n2() {
                    let t2 = grid.tau2(i2);
                    for (im, &m) in grid.m.nodes.iter().enumerate() {
                        values[grid.index(ray, i1, i2, im)] = f(t1, t2, m);
                    }
                }
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn value(&self, ray: usize, i1: usize, i2: usize, im: usize) -> Complex64 {
        self.values[self.grid.index(ray, i1, i2, im)]
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.grid.same_shape(&other.grid));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert!(self.grid.same_shape(&other.grid));
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Weighted norm
// ---------------------------------------------------------------------------

/// Parameters of the weighted sup norm on the Borel domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    pub nu1: f64,
    pub nu2: f64,
    pub beta: f64,
    pub mu: f64,
    pub k1: u32,
    pub k2: u32,
    pub eps: Complex64,
}

impl NormParams {
    pub fn new(nu1: f64, nu2: f64, beta: f64, mu: f64, k1: u32, k2: u32, eps: Complex64) -> Result<Self> {
        if !(nu1 > 0.0 && nu2 > 0.0 && beta > 0.0 && mu > 1.0) || eps.norm() == 0.0 {
            return Err(EngineError::Input(
                "norm parameters must be positive (mu > 1) with eps != 0".into(),
            ));
        }
        Ok(Self {
            nu1,
            nu2,
            beta,
            mu,
            k1,
            k2,
            eps,
        })
    }

    /// The weight at `(|tau1|, |tau2|, m)`; the norm is the grid sup of
    /// `weight * |h|`.
    #[inline]
    pub fn weight(&self, r1: f64, r2: f64, m: f64) -> f64 {
        let ea = self.eps.norm();
        let x1 = r1 / ea;
        let x2 = r2 / ea;
        let x1k = x1.powi(self.k1 as i32);
        let x2k = x2.powi(self.k2 as i32);
        (1.0 + m.abs()).powf(self.mu)
            * ((1.0 + x1k * x1k) / x1)
            * ((1.0 + x2k * x2k) / x2)
            * (self.beta * m.abs() - self.nu1 * x1k - self.nu2 * x2k).exp()
    }

    /// Reciprocal of the weight: the envelope shape every bounded-norm
    /// function obeys, `|h| <= norm * inverse_weight`.
    #[inline]
    pub fn inverse_weight(&self, r1: f64, r2: f64, m: f64) -> f64 {
        1.0 / self.weight(r1, r2, m)
    }
}

/// Weighted sup norm of a gridded function.
pub fn weighted_norm(omega: &BorelFunction, p: &NormParams) -> f64 {
    let g = &omega.grid;
    let mut best: f64 = 0.0;
    for ray in 0..g.n_rays1() {
        for i1 in 0..g.ray1_len[ray] {
            let r1 = g.radii1[i1];
            for i2 in 0..g.n2() {
                let r2 = g.radii2[i2];
                for (im, &m) in g.m.nodes.iter().enumerate() {
                    let v = omega.value(ray, i1, i2, im).norm();
                    if v > 0.0 {
                        best = best.max(v * p.weight(r1, r2, m));
                    }
                }
            }
        }
    }
    best
}

/// Weighted sup norm of the difference of two functions on the same grid.
pub fn weighted_norm_diff(a: &BorelFunction, b: &BorelFunction, p: &NormParams) -> f64 {
    debug_assert!(a.grid.same_shape(&b.grid));
    let g = &a.grid;
    let mut best: f64 = 0.0;
    for ray in 0..g.n_rays1() {
        for i1 in 0..g.ray1_len[ray] {
            let r1 = g.radii1[i1];
            for i2 in 0..g.n2() {
                let r2 = g.radii2[i2];
                for (im, &m) in g.m.nodes.iter().enumerate() {
                    let idx = g.index(ray, i1, i2, im);
                    let v = (a.values[idx] - b.values[idx]).norm();
                    if v > 0.0 {
                        best = best.max(v * p.weight(r1, r2, m));
                    }
                }
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// psi_k and P_m
// ---------------------------------------------------------------------------

/// The double Borel transform of the forcing:
/// `psi_k(tau, m, eps) = sum F_{n1,n2}(m,eps) tau1^{n1} tau2^{n2} / (Gamma(n1/k1) Gamma(n2/k2))`.
pub fn psi_k(
    cfg: &ProblemConfig,
    tau1: Complex64,
    tau2: Complex64,
    m: f64,
    eps: Complex64,
    n_max: u32,
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for term in &cfg.forcing.terms {
        if term.n1 > n_max || term.n2 > n_max {
            continue;
        }
        let f = cfg.forcing.eval(term.n1, term.n2, m, eps);
        if f.norm() == 0.0 {
            continue;
        }
        let g1 = crate::util::gamma(term.n1 as f64 / cfg.k1 as f64);
        let g2 = crate::util::gamma(term.n2 as f64 / cfg.k2 as f64);
        acc += f * zpowi(tau1, term.n1) * zpowi(tau2, term.n2) / (g1 * g2);
    }
    acc
}

/// Geometric/Stirling tail bound for truncating `psi_k` at `n_max`:
/// `K0 sum_{n1 or n2 > n_max} (|tau1|/T0)^{n1} (|tau2|/T0)^{n2} / (Gamma(n1/k1) Gamma(n2/k2))`.
pub fn psi_k_tail_bound(cfg: &ProblemConfig, r1: f64, r2: f64, n_max: u32) -> f64 {
    let t0 = cfg.forcing.t0;
    let k0 = cfg.forcing.k0;
    let horizon = (4 * (n_max + 1)).max(64);
    let mut tail = 0.0;
    for n1 in 1..=horizon {
        for n2 in 1..=horizon {
            if n1 <= n_max && n2 <= n_max {
                continue;
            }
            let g1 = crate::util::ln_gamma(n1 as f64 / cfg.k1 as f64);
            let g2 = crate::util::ln_gamma(n2 as f64 / cfg.k2 as f64);
            let ln_term = (n1 as f64) * (r1 / t0).ln() + (n2 as f64) * (r2 / t0).ln() - g1 - g2;
            tail += ln_term.exp();
        }
    }
    k0 * tail
}

/// The divisor polynomial
/// `P_m(tau) = Q(im) + R_top12(im) (k1 tau1^{k1})^{delta_top1} (k2 tau2^{k2})^{tdelta_top2-1}
///            + R_top3(im) (k2 tau2^{k2})^{tdelta_top3-1}`.
pub fn p_m(cfg: &ProblemConfig, tau1: Complex64, tau2: Complex64, m: f64) -> Complex64 {
    let a1 = zpowi(cfg.k1 as f64 * zpowi(tau1, cfg.k1), cfg.delta_top1);
    let b = cfg.k2 as f64 * zpowi(tau2, cfg.k2);
    let b2 = zpowi(b, cfg.tilde_delta_top2 - 1);
    let b3 = zpowi(b, cfg.tilde_delta_top3 - 1);
    cfg.q.eval_im(m) + cfg.r_top12.eval_im(m) * a1 * b2 + cfg.r_top3.eval_im(m) * b3
}

// ---------------------------------------------------------------------------
// Root locus of P_m (shrinking-map analysis)
// ---------------------------------------------------------------------------

/// Output of the fixed-point root solve for `P_m = 0` in the variable
/// `T = tau2^{k2 (tdelta_top2 - 1)}`.
#[derive(Debug, Clone)]
pub struct PsiRootResult {
    pub t0: Complex64,
    pub iterations: usize,
    pub residual: f64,
}

fn psi_map(cfg: &ProblemConfig, tau1: Complex64, m: f64, ratio: u32, t: Complex64) -> Complex64 {
    let q = cfg.q.eval_im(m);
    let r12 = cfg.r_top12.eval_im(m);
    let r3 = cfg.r_top3.eval_im(m);
    let k1 = cfg.k1 as f64;
    let k2 = cfg.k2 as f64;
    let c12 = r12
        * k1.powi(cfg.delta_top1 as i32)
        * k2.powi(cfg.tilde_delta_top2 as i32 - 1)
        * zpowi(tau1, cfg.k1 * cfg.delta_top1);
    let c3 = r3 * k2.powi(cfg.tilde_delta_top3 as i32 - 1) * zpowi(t, ratio);
    -q / (c12 + c3)
}

/// Solve `Psi(T) = T` for the root cluster of `P_m` by fixed-point iteration.
///
/// Requires `(tdelta_top3 - tdelta_top2) / (tdelta_top2 - 1)` to be a
/// nonnegative integer; the equal-orders case gives a constant map solved in
/// one step. `|tau1|` must be large enough that the map shrinks the closed
/// disc of radius `(rho2/2)^{k2 (tdelta_top2 - 1)}`, otherwise an error names
/// the failing margin.
pub fn psi_root_iterate(
    cfg: &ProblemConfig,
    tau1: Complex64,
    m: f64,
    rho2: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PsiRootResult> {
    let dd2 = cfg.tilde_delta_top2;
    let dd3 = cfg.tilde_delta_top3;
    if dd2 < 2 {
        return Err(EngineError::Unsupported(
            "root analysis needs tdelta_top2 >= 2".into(),
        ));
    }
    let num = dd3 - dd2;
    let den = dd2 - 1;
    if num % den != 0 {
        return Err(EngineError::Unsupported(format!(
            "(tdelta_top3 - tdelta_top2)/(tdelta_top2 - 1) = {num}/{den} is not an integer; root analysis unsupported"
        )));
    }
    let ratio = num / den;
    let e_radius = (rho2 / 2.0).powi((cfg.k2 * den) as i32);

    if cfg.q.eval_im(m).norm() == 0.0 {
        return Ok(PsiRootResult {
            t0: Complex64::new(0.0, 0.0),
            iterations: 1,
            residual: 0.0,
        });
    }

    // shrinking-map precondition: on the boundary of E the denominator keeps
    // at least |R_top3(im)| of margin
    let r3n = cfg.r_top3.eval_im(m).norm();
    let k1f = cfg.k1 as f64;
    let k2f = cfg.k2 as f64;
    let c12 = cfg.r_top12.eval_im(m)
        * k1f.powi(cfg.delta_top1 as i32)
        * k2f.powi(dd2 as i32 - 1)
        * zpowi(tau1, cfg.k1 * cfg.delta_top1);
    for s in 0..16 {
        let ang = 2.0 * std::f64::consts::PI * s as f64 / 16.0;
        let t = ray_point(e_radius, ang);
        let c3 = cfg.r_top3.eval_im(m) * k2f.powi(dd3 as i32 - 1) * zpowi(t, ratio);
        if (c12 + c3).norm() < r3n {
            return Err(EngineError::Tau1TooSmall(format!(
                "denominator margin {:.3e} below |R_top3(im)| = {:.3e} on |T| = {e_radius:.3e}",
                (c12 + c3).norm(),
                r3n
            )));
        }
    }

    let mut t = Complex64::new(0.0, 0.0);
    let mut prev_step = f64::INFINITY;
    for it in 1..=max_iter {
        let next = psi_map(cfg, tau1, m, ratio, t);
        if next.norm() > e_radius + tol {
            return Err(EngineError::Tau1TooSmall(format!(
                "iterate left the disc: |T| = {:.3e} > (rho2/2)^(k2(tdelta2-1)) = {e_radius:.3e}",
                next.norm()
            )));
        }
        let step = (next - t).norm();
        t = next;
        if step < tol || (ratio == 0 && it >= 1) {
            let residual = (psi_map(cfg, tau1, m, ratio, t) - t).norm();
            return Ok(PsiRootResult {
                t0: t,
                iterations: it,
                residual,
            });
        }
        if it > 2 && step > 0.5 * prev_step {
            return Err(EngineError::Tau1TooSmall(format!(
                "contraction factor {:.3} above 1/2 at iteration {it}",
                step / prev_step
            )));
        }
        prev_step = step;
    }
    Err(EngineError::NonConvergence {
        max_iter,
        last: prev_step,
    })
}

/// The `k2 (tdelta_top2 - 1)` values of `tau2` with `tau2^{k2(tdelta2-1)} = t0`.
pub fn tau2_roots(cfg: &ProblemConfig, t0: Complex64) -> Vec<Complex64> {
    let n = (cfg.k2 * (cfg.tilde_delta_top2 - 1)) as i32;
    if t0.norm() == 0.0 {
        return vec![Complex64::new(0.0, 0.0); n as usize];
    }
    let r = t0.norm().powf(1.0 / n as f64);
    let base_arg = t0.arg() / n as f64;
    (0..n)
        .map(|j| ray_point(r, base_arg + 2.0 * std::f64::consts::PI * j as f64 / n as f64))
        .collect()
}

// ---------------------------------------------------------------------------
// Empirical lower bound for |P_m / Q| and direction selection
// ---------------------------------------------------------------------------

/// Empirical constant of the divisor lower bound
/// `|P_m/Q| >= C (1+|tau1|^{k1})^{delta_top1} f(tau)` over a set of sample
/// points, together with the worst node.
#[derive(Debug, Clone, Serialize)]
pub struct PmLowerBound {
    pub c_emp: f64,
    pub worst_tau1: (f64, f64),
    pub worst_tau2: (f64, f64),
    pub worst_m: f64,
}

fn pm_bound_over(
    cfg: &ProblemConfig,
    tau1_samples: &[Complex64],
    tau2_samples: &[Complex64],
    m_nodes: &[f64],
    rho1: f64,
) -> PmLowerBound {
    let k1 = cfg.k1 as i32;
    let k2 = cfg.k2 as i32;
    let mut best = PmLowerBound {
        c_emp: f64::INFINITY,
        worst_tau1: (0.0, 0.0),
        worst_tau2: (0.0, 0.0),
        worst_m: 0.0,
    };
    for &t1 in tau1_samples {
        let r1 = t1.norm();
        let denom1 = (1.0 + r1.powi(k1)).powi(cfg.delta_top1 as i32);
        let exp2 = if r1 <= rho1 {
            cfg.tilde_delta_top3 as i32 - 1
        } else {
            cfg.tilde_delta_top2 as i32 - 1
        };
        for &t2 in tau2_samples {
            let denom2 = (1.0 + t2.norm().powi(k2)).powi(exp2);
            for &m in m_nodes {
                let q = cfg.q.eval_im(m);
                if q.norm() == 0.0 {
                    continue;
                }
                let ratio = (p_m(cfg, t1, t2, m) / q).norm() / (denom1 * denom2);
                if ratio < best.c_emp {
                    best = PmLowerBound {
                        c_emp: ratio,
                        worst_tau1: (t1.re, t1.im),
                        worst_tau2: (t2.re, t2.im),
                        worst_m: m,
                    };
                }
            }
        }
    }
    best
}

/// Evaluate the empirical divisor lower bound on every node of a [`BorelGrid`].
pub fn verify_pm_lower_bound(cfg: &ProblemConfig, grid: &BorelGrid, rho1: f64) -> PmLowerBound {
    let mut tau1_samples = Vec::new();
    for ray in 0..grid.n_rays1() {
        for i1 in 0..grid.ray1_len[ray] {
            tau1_samples.push(grid.tau1(ray, i1));
        }
    }
    let tau2_samples: Vec<Complex64> = (0..grid.n2()).map(|i| grid.tau2(i)).collect();
    pm_bound_over(cfg, &tau1_samples, &tau2_samples, &grid.m.nodes, rho1)
}

/// Outcome of the direction search.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionChoice {
    pub d1: f64,
    pub d2: f64,
    pub rho1: f64,
    pub c_emp: f64,
    /// arguments of tau2 root rays sampled during the analysis
    pub root_arguments: Vec<f64>,
    pub scanned_pairs: usize,
}

fn probe_radii(max: f64, n: usize) -> Vec<f64> {
    // log-spaced probes spanning three decades below the extent
    (0..n)
        .map(|i| max * 10f64.powf(-3.0 * (1.0 - (i as f64 + 1.0) / n as f64)))
        .collect()
}

fn c_emp_for(
    cfg: &ProblemConfig,
    d1: f64,
    d2: f64,
    r1: &[f64],
    r2: &[f64],
    m_nodes: &[f64],
    rho1: f64,
) -> f64 {
    let tau1: Vec<Complex64> = r1.iter().map(|&r| ray_point(r, d1)).collect();
    let tau2: Vec<Complex64> = r2.iter().map(|&r| ray_point(r, d2)).collect();
    pm_bound_over(cfg, &tau1, &tau2, m_nodes, rho1).c_emp
}

/// Choose Laplace directions `(d1, d2)` and the disc radius `rho1` so the
/// divisor lower bound holds with a positive margin: a coarse 5-degree scan
/// over direction pairs refined by golden-section sweeps of each axis.
pub fn select_directions(
    cfg: &ProblemConfig,
    m_grid: &FrequencyGrid,
    rho1_hint: f64,
) -> Result<DirectionChoice> {
    use rayon::prelude::*;
    let k1 = cfg.k1 as f64;
    let k2 = cfg.k2 as f64;

    // sample the root arguments over m and a spread of |tau1| on a trial ray
    let mut root_arguments = Vec::new();
    let m_samples: Vec<f64> = m_grid
        .nodes
        .iter()
        .copied()
        .step_by((m_grid.len() / 8).max(1))
        .collect();
    for &m in &m_samples {
        for &r in &[2.0, 10.0, 50.0] {
            let tau1 = ray_point(r, 0.0);
            if let Ok(root) = psi_root_iterate(cfg, tau1, m, 1.0, 1e-12, 64) {
                for z in tau2_roots(cfg, root.t0) {
                    if z.norm() > 0.0 {
                        root_arguments.push(z.arg());
                    }
                }
            }
        }
    }

    // coarse scan
    let coarse_m: Vec<f64> = m_grid
        .nodes
        .iter()
        .copied()
        .step_by((m_grid.len() / 10).max(1))
        .collect();
    let extent1 = (4.0 * rho1_hint).max(2.0);
    let extent2 = 2.0;
    let coarse_r1 = probe_radii(extent1, 10);
    let coarse_r2 = probe_radii(extent2, 10);
    let steps = 72usize;
    let candidates: Vec<(f64, f64, f64)> = (0..steps * steps)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / steps, idx % steps);
            let d1c = 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
            let d2c = 2.0 * std::f64::consts::PI * j as f64 / steps as f64;
            let c = c_emp_for(cfg, d1c, d2c, &coarse_r1, &coarse_r2, &coarse_m, rho1_hint);
            (d1c, d2c, c)
        })
        .collect();
    let scanned = candidates.len();
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for (d1c, d2c, c) in candidates {
        if c > best.0 {
            best = (c, d1c, d2c);
        }
    }
    if !best.0.is_finite() || best.0 <= 0.0 {
        return Err(EngineError::Infeasible(format!(
            "coarse direction scan found no positive divisor margin (best {:.3e}); \
             grid or annulus inputs may be too coarse",
            best.0
        )));
    }

    // golden-section refinement, alternating the two axes
    let fine_r1 = probe_radii(extent1, 20);
    let fine_r2 = probe_radii(extent2, 20);
    let fine_m: Vec<f64> = m_grid
        .nodes
        .iter()
        .copied()
        .step_by((m_grid.len() / 21).max(1))
        .collect();
    let (mut d1, mut d2) = (best.1, best.2);
    let width = 2.0 * std::f64::consts::PI / steps as f64;
    let golden = 0.5 * (3.0 - 5f64.sqrt());
    for axis in 0..4 {
        let (mut lo, mut hi) = if axis % 2 == 0 {
            (d2 - width, d2 + width)
        } else {
            (d1 - width, d1 + width)
        };
        let eval = |x: f64| {
            if axis % 2 == 0 {
                c_emp_for(cfg, d1, x, &fine_r1, &fine_r2, &fine_m, rho1_hint)
            } else {
                c_emp_for(cfg, x, d2, &fine_r1, &fine_r2, &fine_m, rho1_hint)
            }
        };
        let mut x1 = lo + golden * (hi - lo);
        let mut x2 = hi - golden * (hi - lo);
        let mut f1 = eval(x1);
        let mut f2 = eval(x2);
        for _ in 0..24 {
            if f1 > f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = lo + golden * (hi - lo);
                f1 = eval(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = hi - golden * (hi - lo);
                f2 = eval(x2);
            }
        }
        let x = if f1 > f2 { x1 } else { x2 };
        if axis % 2 == 0 {
            d2 = wrap_angle(x);
        } else {
            d1 = wrap_angle(x);
        }
    }

    // rho1 from the case-1.2 smallness requirement |A| <= 1/2
    let mut sup_ratio: f64 = 0.0;
    for &m in &m_grid.nodes {
        let r3 = cfg.r_top3.eval_im(m);
        if r3.norm() > 0.0 {
            sup_ratio = sup_ratio.max((cfg.r_top12.eval_im(m) / r3).norm());
        }
    }
    let gap = cfg.tilde_delta_top3 - cfg.tilde_delta_top2;
    let tau2_floor = 1e-2f64;
    let scale = sup_ratio * k1.powi(cfg.delta_top1 as i32) * k2.powi(cfg.tilde_delta_top2 as i32 - 1)
        / (k2.powi(cfg.tilde_delta_top3 as i32 - 1) * tau2_floor.powi((cfg.k2 * gap) as i32));
    let rho1_from_a = if scale > 0.0 {
        (0.5 / scale).powf(1.0 / (k1 * cfg.delta_top1 as f64))
    } else {
        cfg.rho
    };
    let rho1 = cfg.rho.min(rho1_from_a).min(rho1_hint.max(1e-3));

    let c_emp = c_emp_for(cfg, d1, d2, &fine_r1, &fine_r2, &fine_m, rho1);
    if c_emp <= 0.0 {
        return Err(EngineError::Infeasible(format!(
            "refined directions lost the divisor margin (C = {c_emp:.3e})"
        )));
    }
    Ok(DirectionChoice {
        d1,
        d2,
        rho1,
        c_emp,
        root_arguments,
        scanned_pairs: scanned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::reference_config;
    use approx::assert_relative_eq;

    fn test_grid(d1: f64, d2: f64) -> Arc<BorelGrid> {
        let m = Arc::new(FrequencyGrid::new(5.0, 21).unwrap());
        Arc::new(BorelGrid::build(d1, d2, 0.3, 0.4, 0.2, 8, 4, m).unwrap())
    }

    fn norm_params() -> NormParams {
        NormParams::new(1.0, 1.0, 1.0, 2.5, 1, 2, Complex64::new(0.05, 0.0)).unwrap()
    }

    #[test]
    fn weighted_norm_inverse_weight_is_one() {
        let grid = test_grid(std::f64::consts::PI, std::f64::consts::PI);
        let p = norm_params();
        let omega = BorelFunction::from_fn(grid.clone(), |t1, t2, m| {
            Complex64::new(p.inverse_weight(t1.norm(), t2.norm(), m), 0.0)
        });
        assert_relative_eq!(weighted_norm(&omega, &p), 1.0, max_relative = 1e-12);
        let twice = omega.scaled(Complex64::new(2.0, 0.0));
        assert_relative_eq!(weighted_norm(&twice, &p), 2.0, max_relative = 1e-12);
        let zero = BorelFunction::zeros(grid);
        assert_eq!(weighted_norm(&zero, &p), 0.0);
    }

    #[test]
    fn weighted_norm_is_a_norm() {
        let grid = test_grid(0.3, -0.4);
        let p = norm_params();
        let a = BorelFunction::from_fn(grid.clone(), |t1, t2, m| {
            t1 * t2 * Complex64::new((-(m * m)).exp(), 0.2)
        });
        let b = BorelFunction::from_fn(grid, |t1, t2, m| {
            t1 * t1 * t2 * Complex64::new(0.1, (-(m.abs())).exp())
        });
        let na = weighted_norm(&a, &p);
        let nb = weighted_norm(&b, &p);
        let mut sum = a.clone();
        sum.add_assign(&b);
        assert!(weighted_norm(&sum, &p) <= na + nb + 1e-12);
        let sa = a.scaled(Complex64::new(-2.5, 0.0));
        assert_relative_eq!(weighted_norm(&sa, &p), 2.5 * na, max_relative = 1e-12);
    }

    #[test]
    fn psi_k_examples() {
        let cfg = reference_config(1.0);
        let tau1 = Complex64::new(0.2, 0.1);
        let tau2 = Complex64::new(-0.1, 0.3);
        // single F_{1,1} = profile: psi = profile(m) tau1 tau2 / (Gamma(1) Gamma(1/2))
        let m = 0.7;
        let got = psi_k(&cfg, tau1, tau2, m, Complex64::new(0.05, 0.0), 4);
        let profile = (1.0 + m.abs()).powf(-cfg.mu) * (-cfg.beta * m.abs()).exp();
        let expect = profile * tau1 * tau2 / std::f64::consts::PI.sqrt();
        assert!((got - expect).norm() < 1e-14);
        // tau1 = 0 kills every term
        let z = psi_k(&cfg, Complex64::new(0.0, 0.0), tau2, m, Complex64::new(0.05, 0.0), 4);
        assert_eq!(z.norm(), 0.0);
        // zero forcing
        let cfg0 = reference_config(0.0);
        let z0 = psi_k(&cfg0, tau1, tau2, m, Complex64::new(0.05, 0.0), 4);
        assert_eq!(z0.norm(), 0.0);
    }

    #[test]
    fn p_m_closed_values() {
        let cfg = reference_config(0.0);
        // tau = 0 leaves only Q
        let v0 = p_m(&cfg, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), 0.0);
        assert!((v0 - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        // direct substitution at tau1 = tau2 = 1: 1 + 1*2 + 2 = 5
        let v1 = p_m(&cfg, Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), 0.0);
        assert!((v1 - Complex64::new(5.0, 0.0)).norm() < 1e-12);
        // tau1 = i: i^2 = -1 gives 1 - 2 + 2 = 1
        let v2 = p_m(&cfg, Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0), 0.0);
        assert!((v2 - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn p_m_horner_matches_powers() {
        let cfg = reference_config(0.0);
        let m = 1.3;
        let tau1 = Complex64::new(0.7, 0.4);
        let tau2 = Complex64::new(-0.2, 0.6);
        let a = cfg.k1 as f64 * zpowi(tau1, cfg.k1);
        let b = cfg.k2 as f64 * zpowi(tau2, cfg.k2);
        let q = cfg.q.eval_im(m);
        let r12 = cfg.r_top12.eval_im(m);
        let r3 = cfg.r_top3.eval_im(m);
        let horner = q + b * (r12 * a * a + r3);
        let direct = p_m(&cfg, tau1, tau2, m);
        assert!((horner - direct).norm() <= 1e-12 * direct.norm());
    }

    #[test]
    fn root_iterate_closed_form_case() {
        let cfg = reference_config(0.0);
        // tdelta2 = tdelta3: constant map, T0 = -1/(2 tau1^2 + 2)
        let res = psi_root_iterate(&cfg, Complex64::new(10.0, 0.0), 0.0, 1.0, 1e-14, 50).unwrap();
        assert!((res.t0 - Complex64::new(-1.0 / 202.0, 0.0)).norm() < 1e-15);
        assert_eq!(res.iterations, 1);
        assert!(res.residual < 1e-15);
        let res2 = psi_root_iterate(&cfg, Complex64::new(100.0, 0.0), 0.0, 1.0, 1e-14, 50).unwrap();
        assert!((res2.t0 - Complex64::new(-1.0 / 20002.0, 0.0)).norm() < 1e-18);
        // roots of tau2^2 = T0 kill P_m
        for root in tau2_roots(&cfg, res.t0) {
            let v = p_m(&cfg, Complex64::new(10.0, 0.0), root, 0.0);
            assert!(v.norm() < 1e-12, "|P_m| = {}", v.norm());
        }
    }

    #[test]
    fn root_iterate_zero_q() {
        let mut cfg = reference_config(0.0);
        cfg.q = crate::config::ComplexPolynomial::constant(Complex64::new(0.0, 0.0));
        let res = psi_root_iterate(&cfg, Complex64::new(10.0, 0.0), 0.0, 1.0, 1e-14, 50).unwrap();
        assert_eq!(res.t0.norm(), 0.0);
    }

    #[test]
    fn lower_bound_positive_for_opposite_rays() {
        let cfg = reference_config(0.0);
        let grid = test_grid(std::f64::consts::PI, std::f64::consts::PI);
        let bound = verify_pm_lower_bound(&cfg, &grid, 0.3);
        assert!(bound.c_emp > 0.0);
    }

    #[test]
    fn direction_search_reference() {
        let cfg = reference_config(0.0);
        let m_grid = FrequencyGrid::new(5.0, 21).unwrap();
        let choice = select_directions(&cfg, &m_grid, 0.5).unwrap();
        assert!(choice.c_emp >= 0.1, "C_emp = {}", choice.c_emp);
        assert!(choice.rho1 > 0.0 && choice.rho1 <= cfg.rho);
        // chosen d2 stays away from every sampled root argument
        for &arg in &choice.root_arguments {
            assert!(crate::util::angle_dist(choice.d2, arg) > 1e-2);
        }
    }
}
