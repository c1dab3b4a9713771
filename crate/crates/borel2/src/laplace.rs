//! Good coverings, associated time sectors, and evaluation of the analytic
//! solutions by truncated double Laplace + inverse Fourier quadrature.
//!
//! A gridded Borel function is integrated along its own rays: the radial
//! Laplace kernels are integrated panel by panel against the ladder stencil,
//! which turns each evaluation into a small bilinear contraction of the
//! stored values. Every evaluation reports the analytic truncation bound
//! assembled from the envelope constant of the fixed point.

use crate::borel_plane::{BorelFunction, NormParams, SectorGeometry};
use crate::config::ProblemConfig;
use crate::error::EngineError;
use crate::fourier::{fourier_convolution, FrequencyFunction};
use crate::util::{adaptive_simpson, gauss_legendre_01, ladder_stencil, wrap_angle, zpowi, STENCIL};
use crate::Result;
use num_complex::Complex64;
use serde::Serialize;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

// ---------------------------------------------------------------------------
// Good coverings
// ---------------------------------------------------------------------------

/// A family of `s1 x s2` open sectors of radius `eps0` covering a punctured
/// neighborhood of the origin with no triple overlaps.
///
/// Cell `(p1, p2)` sits at linear position `n = p1 + s1 p2`; consecutive
/// positions within a block share `p2`, so intersecting pairs either share
/// the second index (block-internal) or differ in both (block edges).
#[derive(Debug, Clone, Serialize)]
pub struct GoodCovering {
    pub sectors: Vec<SectorGeometry>,
    pub s1: usize,
    pub s2: usize,
    pub eps0: f64,
    pub opening: f64,
}

impl GoodCovering {
    pub fn n_cells(&self) -> usize {
        self.s1 * self.s2
    }

    pub fn cell_index(&self, p1: usize, p2: usize) -> usize {
        p1 + self.s1 * p2
    }

    pub fn cell(&self, p1: usize, p2: usize) -> &SectorGeometry {
        &self.sectors[self.cell_index(p1, p2)]
    }

    pub fn pair_indices(&self, n: usize) -> (usize, usize) {
        (n % self.s1, n / self.s1)
    }

    /// Nonempty intersection test for two cells (angular, same radius).
    pub fn intersects(&self, a: usize, b: usize) -> bool {
        let sa = &self.sectors[a];
        let sb = &self.sectors[b];
        crate::util::angle_dist(sa.bisecting_direction, sb.bisecting_direction)
            < sa.half_opening + sb.half_opening
    }

    /// Bisector of the intersection arc of two intersecting cells.
    pub fn intersection_bisector(&self, a: usize, b: usize) -> f64 {
        let sa = &self.sectors[a];
        let sb = &self.sectors[b];
        let d = wrap_angle(sb.bisecting_direction - sa.bisecting_direction);
        wrap_angle(sa.bisecting_direction + 0.5 * d)
    }
}

/// Build a good covering: `s1 s2` sectors with equal openings slightly above
/// `pi / max(k1, k2)`, bisectors equally spaced over the circle.
///
/// Coverage and the no-triple-overlap condition are verified on a 3600-point
/// angular grid; failure of either is a construction error.
pub fn build_good_covering(
    s1: usize,
    s2: usize,
    eps0: f64,
    k1: u32,
    k2: u32,
    overlap_frac: f64,
) -> Result<GoodCovering> {
    if s1 < 2 || s2 < 2 {
        return Err(EngineError::Covering("need s1, s2 >= 2".into()));
    }
    if !(overlap_frac > 0.0 && overlap_frac < 0.5) {
        return Err(EngineError::Covering(
            "overlap fraction must lie in (0, 1/2)".into(),
        ));
    }
    let kmax = k1.max(k2) as f64;
    let opening = std::f64::consts::PI / kmax * (1.0 + overlap_frac);
    let n = s1 * s2;
    let spacing = 2.0 * std::f64::consts::PI / n as f64;
    if opening <= spacing {
        return Err(EngineError::Covering(format!(
            "{n} sectors of opening {opening:.4} cannot cover the circle (spacing {spacing:.4})"
        )));
    }
    let sectors: Vec<SectorGeometry> = (0..n)
        .map(|i| {
            SectorGeometry::new(
                wrap_angle(spacing * i as f64),
                0.5 * opening,
                0.0,
                Some(eps0),
            )
        })
        .collect::<Result<_>>()?;
    // angular verification: every direction in >= 1 and <= 2 sectors
    for probe in 0..3600 {
        let ang = 2.0 * std::f64::consts::PI * probe as f64 / 3600.0;
        let count = sectors.iter().filter(|s| s.contains_angle(ang)).count();
        if count == 0 {
            return Err(EngineError::Covering(format!(
                "coverage gap at angle {ang:.4}"
            )));
        }
        if count > 2 {
            return Err(EngineError::Covering(format!(
                "triple overlap at angle {ang:.4} ({count} sectors)"
            )));
        }
    }
    Ok(GoodCovering {
        sectors,
        s1,
        s2,
        eps0,
        opening,
    })
}

// ---------------------------------------------------------------------------
// Associated sectors
// ---------------------------------------------------------------------------

/// Time sectors and per-cell Borel directions compatible with a covering.
#[derive(Debug, Clone, Serialize)]
pub struct AssociatedFamily {
    pub t1_sector: SectorGeometry,
    pub t2_sector: SectorGeometry,
    pub theta1: f64,
    pub theta2: f64,
    /// per-cell Laplace directions, indexed like the covering cells
    pub dirs: Vec<(f64, f64)>,
    pub rho1: f64,
}

/// Verify the membership `eps t_j` in `S_{dir_j, theta_j}` on a sampled
/// `(t, eps)` product grid and package the family.
///
/// The direction table comes from the divisor admissibility analysis around
/// each cell; `theta_j` is set minimally above `pi / k_j`. Sampling is the
/// acceptance check: arguments of `eps` are drawn from a band around each
/// cell bisector (where that cell's evaluations take place), `t_j` from the
/// whole time sectors.
pub fn associate_sectors(
    cov: &GoodCovering,
    cfg: &ProblemConfig,
    dirs: Vec<(f64, f64)>,
    rho1: f64,
    r_t1: f64,
    r_t2: f64,
) -> Result<AssociatedFamily> {
    if dirs.len() != cov.n_cells() {
        return Err(EngineError::Association(format!(
            "direction table has {} entries for {} cells",
            dirs.len(),
            cov.n_cells()
        )));
    }
    let theta1 = std::f64::consts::PI / cfg.k1 as f64 * 1.1;
    let theta2 = std::f64::consts::PI / cfg.k2 as f64 * 1.1;
    let t_opening = 0.1;
    let t1_sector = SectorGeometry::new(0.0, 0.5 * t_opening, 0.0, Some(r_t1))?;
    let t2_sector = SectorGeometry::new(0.0, 0.5 * t_opening, 0.0, Some(r_t2))?;
    // sampled membership check: 10 eps args x 10 t1 args x 10 t2 args
    let band = 0.25 * cov.opening;
    for (cell, &(d1, d2)) in dirs.iter().enumerate() {
        let bis = cov.sectors[cell].bisecting_direction;
        for ie in 0..10 {
            let arg_e = bis - band + 2.0 * band * ie as f64 / 9.0;
            for it in 0..10 {
                let arg_t = -0.5 * t_opening + t_opening * it as f64 / 9.0;
                if wrap_angle(arg_e + arg_t - d1).abs() >= 0.5 * theta1 {
                    return Err(EngineError::Association(format!(
                        "cell {cell}: arg(eps t1) = {:.3} leaves the theta1 sector at {d1:.3}",
                        arg_e + arg_t
                    )));
                }
                if wrap_angle(arg_e + arg_t - d2).abs() >= 0.5 * theta2 {
                    return Err(EngineError::Association(format!(
                        "cell {cell}: arg(eps t2) = {:.3} leaves the theta2 sector at {d2:.3}",
                        arg_e + arg_t
                    )));
                }
            }
        }
    }
    Ok(AssociatedFamily {
        t1_sector,
        t2_sector,
        theta1,
        theta2,
        dirs,
        rho1,
    })
}

// ---------------------------------------------------------------------------
// Laplace evaluation of gridded Borel functions
// ---------------------------------------------------------------------------

/// Envelope data for truncation bounds: the fixed point obeys
/// `|omega| <= varpi * inverse weight` nodewise.
#[derive(Debug, Clone, Copy)]
pub struct Envelope {
    pub varpi: f64,
    pub norm: NormParams,
}

/// Weights turning a radial ladder of values into the Laplace integral
/// `int_0^{r_max} phi(r e^{i gamma}) e^{-(r e^{i gamma}/(eps t))^k} dr / r`.
fn ray_weights(
    h: f64,
    n: usize,
    k: u32,
    eps_t: Complex64,
    gamma_dir: f64,
    delta_min: f64,
    variable: &'static str,
) -> Result<Vec<Complex64>> {
    let phi = wrap_angle(k as f64 * (gamma_dir - eps_t.arg()));
    let cosphi = phi.cos();
    if cosphi < delta_min {
        return Err(EngineError::LaplaceDecay {
            variable,
            gamma: gamma_dir,
            cosine: cosphi,
            margin: delta_min,
        });
    }
    let s = eps_t.norm();
    let rot = Complex64::from_polar(1.0, phi);
    let gl = gauss_legendre_01(8);
    let mut w = vec![ZERO; n];
    for panel in 0..n {
        let lo = panel as f64 * h;
        let hi = (panel + 1) as f64 * h;
        // beyond the kernel cutoff nothing contributes
        if (lo / s).powi(k as i32) * cosphi > 46.0 {
            break;
        }
        // subdivide panels that are wide relative to the kernel scale
        let sub = ((h / s).ceil() as usize).clamp(1, 32);
        for piece in 0..sub {
            let plo = lo + (hi - lo) * piece as f64 / sub as f64;
            let phi_hi = lo + (hi - lo) * (piece + 1) as f64 / sub as f64;
            for (&x, &wq) in gl.nodes.iter().zip(&gl.weights) {
                let r = plo + (phi_hi - plo) * x;
                if r <= 0.0 {
                    continue;
                }
                let kernel = (-(r / s).powi(k as i32) * rot).exp() / r;
                let (idx, ws) = ladder_stencil(r / h, n);
                for a in 0..STENCIL {
                    if idx[a] == 0 {
                        continue;
                    }
                    w[idx[a] - 1] += wq * (phi_hi - plo) * kernel * ws[a];
                }
            }
        }
    }
    Ok(w)
}

/// Per-axis envelope integral `int (1/(1+x^{2k})) e^{-(damp - nu) x^k} dx`
/// from `x_lo` (tail) or 0 (full), in the scaled radial variable.
fn envelope_axis_integral(nu: f64, k: u32, damp: f64, x_lo: f64) -> f64 {
    let rate = damp - nu;
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let x_hi = x_lo.max(1.0) + (46.0_f64 / rate).powf(1.0 / k as f64) + 2.0;
    adaptive_simpson(
        |x| {
            if x <= 0.0 {
                return ZERO;
            }
            let xk = x.powi(k as i32);
            Complex64::new(1.0 / (1.0 + xk * xk) * (-rate * xk).exp(), 0.0)
        },
        x_lo,
        x_hi,
        1e-14,
    )
    .re
}

/// Evaluate `u(t1, t2, z, eps)` from a gridded Borel function along the grid
/// rays, together with the truncation bound assembled from the envelope.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_solution(
    omega: &BorelFunction,
    cfg: &ProblemConfig,
    t1: Complex64,
    t2: Complex64,
    z: Complex64,
    eps: Complex64,
    envelope: &Envelope,
    delta_min: f64,
) -> Result<(Complex64, f64)> {
    let sampler = SolutionSampler {
        omega,
        cfg,
        eps,
        envelope: *envelope,
        delta_min,
    };
    sampler.u(t1, t2, z)
}

/// Cached evaluator for one solved cell: the Fourier symbol `U(eps t, m)` is a
/// bilinear contraction of the stored Borel values, and `u` follows by the
/// frequency synthesis.
pub struct SolutionSampler<'a> {
    pub omega: &'a BorelFunction,
    pub cfg: &'a ProblemConfig,
    pub eps: Complex64,
    pub envelope: Envelope,
    pub delta_min: f64,
}

impl<'a> SolutionSampler<'a> {
    /// The symbol `k1 k2 int int omega e^{...} du2/u2 du1/u1` per frequency
    /// node, at time point `(t1, t2)`.
    pub fn u_hat(&self, t1: Complex64, t2: Complex64) -> Result<Vec<Complex64>> {
        let g = &self.omega.grid;
        let n1 = g.ray1_len[0];
        let n2 = g.n2();
        let nm = g.nm();
        let w1 = ray_weights(
            g.h1,
            n1,
            self.cfg.k1,
            self.eps * t1,
            g.ray1_angles[0],
            self.delta_min,
            "t1",
        )?;
        let w2 = ray_weights(
            g.h2,
            n2,
            self.cfg.k2,
            self.eps * t2,
            g.d2,
            self.delta_min,
            "t2",
        )?;
        let kk = self.cfg.k1 as f64 * self.cfg.k2 as f64;
        let base = g.index(0, 0, 0, 0);
        let vals = &self.omega.values[base..base + n1 * n2 * nm];
        let mut out = vec![ZERO; nm];
        for (i1, &a) in w1.iter().enumerate() {
            if a == ZERO {
                continue;
            }
            for (i2, &b) in w2.iter().enumerate() {
                let ab = a * b * kk;
                if ab == ZERO {
                    continue;
                }
                let row = &vals[(i1 * n2 + i2) * nm..(i1 * n2 + i2 + 1) * nm];
                for (o, v) in out.iter_mut().zip(row) {
                    *o += ab * v;
                }
            }
        }
        Ok(out)
    }

    /// Frequency synthesis `(2 pi)^{-1/2} sum w_m e^{izm} u_hat(m)` plus the
    /// truncation bound.
    pub fn synthesize(
        &self,
        u_hat: &[Complex64],
        t1: Complex64,
        t2: Complex64,
        z: Complex64,
    ) -> Result<(Complex64, f64)> {
        let g = &self.omega.grid;
        if z.im.abs() >= self.cfg.beta_prime {
            return Err(EngineError::Domain(format!(
                "|Im z| = {} must stay below beta' = {}",
                z.im.abs(),
                self.cfg.beta_prime
            )));
        }
        let mut acc = ZERO;
        for ((&m, &w), &v) in g.m.nodes.iter().zip(&g.m.weights).zip(u_hat) {
            acc += w * v * (Complex64::i() * z * m).exp();
        }
        let value = acc / (2.0 * std::f64::consts::PI).sqrt();
        Ok((value, self.truncation_bound(t1, t2, z)?))
    }

    pub fn u(&self, t1: Complex64, t2: Complex64, z: Complex64) -> Result<(Complex64, f64)> {
        let u_hat = self.u_hat(t1, t2)?;
        self.synthesize(&u_hat, t1, t2, z)
    }

    /// Truncation bound from the nodewise envelope: radial tails beyond the
    /// grid extents plus the frequency tail.
    fn truncation_bound(&self, t1: Complex64, t2: Complex64, z: Complex64) -> Result<f64> {
        let g = &self.omega.grid;
        let env = &self.envelope;
        let p = &env.norm;
        let ea = self.eps.norm();
        let phi1 = wrap_angle(self.cfg.k1 as f64 * (g.ray1_angles[0] - (self.eps * t1).arg()));
        let phi2 = wrap_angle(self.cfg.k2 as f64 * (g.d2 - (self.eps * t2).arg()));
        let damp1 = phi1.cos() / (t1.norm()).powi(self.cfg.k1 as i32);
        let damp2 = phi2.cos() / (t2.norm()).powi(self.cfg.k2 as i32);
        if damp1 <= p.nu1 || damp2 <= p.nu2 {
            return Err(EngineError::Domain(format!(
                "growth margin violated: damping ({damp1:.3}, {damp2:.3}) must exceed nu = ({}, {})",
                p.nu1, p.nu2
            )));
        }
        let x1_max = g.radii1[g.ray1_len[0] - 1] / ea;
        let x2_max = g.radii2[g.n2() - 1] / ea;
        let full1 = envelope_axis_integral(p.nu1, self.cfg.k1, damp1, 0.0);
        let full2 = envelope_axis_integral(p.nu2, self.cfg.k2, damp2, 0.0);
        let tail1 = envelope_axis_integral(p.nu1, self.cfg.k1, damp1, x1_max);
        let tail2 = envelope_axis_integral(p.nu2, self.cfg.k2, damp2, x2_max);
        // frequency factor: full integral and truncation tail
        let c = self.cfg.beta - z.im.abs();
        let m_max = g.m.m_max;
        let reach = m_max + (46.0_f64 / c).max(1.0);
        let m_full = 2.0
            * adaptive_simpson(
                |m| Complex64::new((1.0 + m).powf(-p.mu) * (-c * m).exp(), 0.0),
                0.0,
                reach,
                1e-14,
            )
            .re;
        let m_tail = 2.0
            * adaptive_simpson(
                |m| Complex64::new((1.0 + m).powf(-p.mu) * (-c * m).exp(), 0.0),
                m_max,
                reach,
                1e-14,
            )
            .re;
        let kk = self.cfg.k1 as f64 * self.cfg.k2 as f64 / (2.0 * std::f64::consts::PI).sqrt();
        let bound = env.varpi
            * kk
            * ((tail1 * full2 + full1 * tail2 + tail1 * tail2) * m_full + full1 * full2 * m_tail);
        Ok(bound)
    }
}

// ---------------------------------------------------------------------------
// Laplace algebra identities on closed-form test functions
// ---------------------------------------------------------------------------

/// Outcome of the Laplace algebra checks (max relative mismatch each).
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub euler_operator: f64,
    pub monomial_kernel: f64,
    pub convolution: f64,
}

/// Separable test function `omega = u1^{k1} e^{-u1^2} u2^{k2} e^{-u2^2} h(m)`;
/// every transform side is computable by independent 1-D quadratures.
///
/// The `u^k` profile factor cancels the `du/u` measure and the convolution
/// denominators exactly, so every integrand below is smooth down to the
/// origin.
struct SeparableTest {
    k1: u32,
}

impl SeparableTest {
    fn g(&self, k: u32, r: f64) -> f64 {
        r.powi(k as i32) * (-r * r).exp()
    }

    /// `int_0^inf g(r) r^extra e^{-(r/T)^k} dr/r` on the positive real ray;
    /// the integrand reduces to `r^{k+extra-1} e^{-r^2} e^{-(r/T)^k}`.
    fn laplace_factor(&self, k: u32, t: f64, extra_power: i32) -> f64 {
        let power = k as i32 + extra_power - 1;
        adaptive_simpson(
            |r| {
                Complex64::new(
                    r.powi(power) * (-r * r).exp() * (-(r / t).powi(k as i32)).exp(),
                    0.0,
                )
            },
            0.0,
            8.0,
            1e-12,
        )
        .re
    }
}

/// Check the three transform identities at a set of positive `T`-points by
/// independent quadratures: the Euler-operator identity, the monomial kernel
/// identity at exponent `m1 = k1` (order-zero kernel), and the convolution
/// identity.
pub fn laplace_identity_suite(k1: u32, k2: u32, t_points: &[(f64, f64)]) -> Result<IdentityReport> {
    let test = SeparableTest { k1 };
    let mut worst_euler: f64 = 0.0;
    let mut worst_monomial: f64 = 0.0;
    let mut worst_conv: f64 = 0.0;

    for &(t1, t2) in t_points {
        // (i) T^{k+1} d_T I = transform of k u^k g(u), first variable
        let h_fd = 1e-4 * t1;
        let d_i = (test.laplace_factor(k1, t1 + h_fd, 0) - test.laplace_factor(k1, t1 - h_fd, 0))
            / (2.0 * h_fd);
        let lhs = t1.powi(k1 as i32 + 1) * d_i;
        let rhs = k1 as f64 * test.laplace_factor(k1, t1, k1 as i32);
        worst_euler = worst_euler.max((lhs - rhs).abs() / rhs.abs().max(1e-300));

        // (ii) m1 = k1: T^{k1} I = transform of
        //      u^{k1}/Gamma(1) int_0^{u^{k1}} g(s^{1/k1}) ds/s
        let lhs2 = t1.powi(k1 as i32) * test.laplace_factor(k1, t1, 0);
        let inner = |u: f64| -> f64 {
            // int_0^{u^k} g(s^{1/k}) ds/s = k int_0^u sig^{k-1} e^{-sig^2} dsig
            adaptive_simpson(
                |sig| {
                    Complex64::new(k1 as f64 * sig.powi(k1 as i32 - 1) * (-sig * sig).exp(), 0.0)
                },
                0.0,
                u,
                1e-12,
            )
            .re
        };
        let rhs2 = adaptive_simpson(
            |r| {
                Complex64::new(
                    r.powi(k1 as i32 - 1) * inner(r) * (-(r / t1).powi(k1 as i32)).exp(),
                    0.0,
                )
            },
            0.0,
            8.0,
            1e-10,
        )
        .re;
        worst_monomial = worst_monomial.max((lhs2 - rhs2).abs() / rhs2.abs().max(1e-300));

        // (iii) convolution: with separable data the frequency factor drops
        // out; per variable, I_j(T_j)^2 = transform of u^{k_j} B_j(u) with
        // B_j the Borel product of g_j with itself
        // g(k, (p-s)^{1/k}) g(k, s^{1/k}) / ((p-s) s) = e^{-(p-s)^{2/k}} e^{-s^{2/k}}
        let borel_product = |k: u32, u: f64| -> f64 {
            let p = u.powi(k as i32);
            adaptive_simpson(
                |s| {
                    let s = s.clamp(0.0, p);
                    let e = 2.0 / k as f64;
                    Complex64::new((-(p - s).powf(e) - s.powf(e)).exp(), 0.0)
                },
                0.0,
                p,
                1e-12,
            )
            .re
        };
        for (k, t) in [(k1, t1), (k2, t2)] {
            let lhs3 = test.laplace_factor(k, t, 0).powi(2);
            let rhs3 = adaptive_simpson(
                |r| {
                    Complex64::new(
                        r.powi(k as i32 - 1)
                            * borel_product(k, r)
                            * (-(r / t).powi(k as i32)).exp(),
                        0.0,
                    )
                },
                0.0,
                6.0,
                1e-10,
            )
            .re;
            worst_conv = worst_conv.max((lhs3 - rhs3).abs() / rhs3.abs().max(1e-300));
        }
    }
    Ok(IdentityReport {
        euler_operator: worst_euler,
        monomial_kernel: worst_monomial,
        convolution: worst_conv,
    })
}

// ---------------------------------------------------------------------------
// End-to-end PDE residual
// ---------------------------------------------------------------------------

/// Residual of the full equation on a `(t1, t2, z)` grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PdeResidual {
    /// max over the grid of |LHS - RHS|
    pub max_abs: f64,
    /// magnitude of the largest participating side
    pub scale: f64,
    /// max_abs / scale
    pub relative: f64,
}

/// 4th-order central stencils along the radial direction of `t` for orders 1
/// and 2; higher orders compose.
fn fd_stencil(q: u32) -> (&'static [f64], &'static [i32]) {
    match q {
        1 => (
            &[1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0],
            &[-2, -1, 1, 2],
        ),
        2 => (
            &[
                -1.0 / 12.0,
                16.0 / 12.0,
                -30.0 / 12.0,
                16.0 / 12.0,
                -1.0 / 12.0,
            ],
            &[-2, -1, 0, 1, 2],
        ),
        _ => unreachable!("orders above 2 are composed"),
    }
}

fn order_chain(q: u32) -> Vec<u32> {
    let mut chain = Vec::new();
    let mut left = q;
    while left >= 2 {
        chain.push(2);
        left -= 2;
    }
    if left == 1 {
        chain.push(1);
    }
    chain
}

/// Offsets and weights of the composed stencil for derivative order `q`.
fn composed_stencil(q: u32) -> Vec<(i32, f64)> {
    let mut acc: Vec<(i32, f64)> = vec![(0, 1.0)];
    for piece in order_chain(q) {
        let (w, off) = fd_stencil(piece);
        let mut next: std::collections::BTreeMap<i32, f64> = std::collections::BTreeMap::new();
        for &(o0, w0) in &acc {
            for (wi, oi) in w.iter().zip(off) {
                *next.entry(o0 + oi).or_insert(0.0) += w0 * wi;
            }
        }
        acc = next.into_iter().collect();
    }
    acc
}

/// Evaluate the residual of the main equation on the converged solution.
///
/// All z-structure is exact (frequency multipliers and the grid convolution);
/// time derivatives are 4th-order radial finite differences of the symbol.
/// The residual is reported absolutely and relative to the largest term.
pub fn pde_residual(
    cfg: &ProblemConfig,
    sampler: &SolutionSampler,
    t1s: &[Complex64],
    t2s: &[Complex64],
    zs: &[Complex64],
    fd_frac: f64,
) -> Result<PdeResidual> {
    let eps = sampler.eps;
    let g = &sampler.omega.grid;
    let nm = g.nm();
    let grid_arc = std::sync::Arc::new((*g.m).clone());
    let mut max_abs: f64 = 0.0;
    let mut scale: f64 = 0.0;

    let q_im: Vec<Complex64> = g.m.nodes.iter().map(|&m| cfg.q.eval_im(m)).collect();
    let r12_im: Vec<Complex64> = g.m.nodes.iter().map(|&m| cfg.r_top12.eval_im(m)).collect();
    let r3_im: Vec<Complex64> = g.m.nodes.iter().map(|&m| cfg.r_top3.eval_im(m)).collect();
    let p1_at = cfg.p1.at_eps(eps);
    let p2_at = cfg.p2.at_eps(eps);

    let max_order = cfg
        .delta_top1
        .max(cfg.tilde_delta_top2)
        .max(cfg.tilde_delta_top3)
        .max(cfg.delta_lower1.iter().copied().max().unwrap_or(0))
        .max(cfg.tilde_delta_lower2.iter().copied().max().unwrap_or(0));
    if max_order > 4 {
        return Err(EngineError::Unsupported(
            "residual stencils support derivative orders up to 4".into(),
        ));
    }

    for &t1 in t1s {
        for &t2 in t2s {
            let h1 = fd_frac * t1.norm();
            let h2 = fd_frac * t2.norm();
            let e1 = Complex64::from_polar(1.0, t1.arg());
            let e2 = Complex64::from_polar(1.0, t2.arg());
            let max_off = 2 * ((max_order as i32 + 1) / 2).max(1);
            let span = (2 * max_off + 1) as usize;
            let mut table: Vec<Option<Vec<Complex64>>> = vec![None; span * span];
            let mut get = |o1: i32, o2: i32| -> Result<Vec<Complex64>> {
                let idx = ((o1 + max_off) as usize) * span + (o2 + max_off) as usize;
                if table[idx].is_none() {
                    let p1 = t1 + h1 * o1 as f64 * e1;
                    let p2 = t2 + h2 * o2 as f64 * e2;
                    if p1.norm() <= 0.0 || p2.norm() <= 0.0 {
                        return Err(EngineError::Geometry(
                            "finite-difference stencil left the sector".into(),
                        ));
                    }
                    table[idx] = Some(sampler.u_hat(p1, p2)?);
                }
                Ok(table[idx].clone().expect("just filled"))
            };

            let mut deriv = |q1: u32, q2: u32| -> Result<Vec<Complex64>> {
                let s1 = composed_stencil(q1);
                let s2 = composed_stencil(q2);
                let mut acc = vec![ZERO; nm];
                for &(o1, w1) in &s1 {
                    for &(o2, w2) in &s2 {
                        let vals = get(o1, o2)?;
                        let w = w1 * w2;
                        for (a, v) in acc.iter_mut().zip(&vals) {
                            *a += w * v;
                        }
                    }
                }
                let ph = zpowi(e1, q1).conj() * zpowi(e2, q2).conj();
                let hh = h1.powi(q1 as i32) * h2.powi(q2 as i32);
                for a in acc.iter_mut() {
                    *a *= ph / hh;
                }
                Ok(acc)
            };

            let u0 = deriv(0, 0)?;
            let du_t2 = deriv(0, 1)?;
            let du_top12 = deriv(cfg.delta_top1, cfg.tilde_delta_top2)?;
            let du_top3 = deriv(0, cfg.tilde_delta_top3)?;

            let e_d1 = zpowi(eps, cfg.big_delta1 + cfg.tilde_big_delta2);
            let e_d3 = zpowi(eps, cfg.tilde_big_delta3);
            let t1_d1 = zpowi(t1, cfg.d_top1);
            let t2_d2 = zpowi(t2, cfg.tilde_d_top2);
            let t2_d3 = zpowi(t2, cfg.tilde_d_top3);
            let mut lhs = vec![ZERO; nm];
            for i in 0..nm {
                lhs[i] = q_im[i] * du_t2[i]
                    + e_d1 * t1_d1 * t2_d2 * r12_im[i] * du_top12[i]
                    + e_d3 * t2_d3 * r3_im[i] * du_top3[i];
            }

            // nonlinear part: frequency convolution of the multiplied symbols
            let f1 = FrequencyFunction {
                grid: grid_arc.clone(),
                values: (0..nm)
                    .map(|i| p1_at.eval_im(g.m.nodes[i]) * u0[i])
                    .collect(),
                beta: cfg.beta,
                mu: cfg.mu,
            };
            let f2 = FrequencyFunction {
                grid: grid_arc.clone(),
                values: (0..nm)
                    .map(|i| p2_at.eval_im(g.m.nodes[i]) * u0[i])
                    .collect(),
                beta: cfg.beta,
                mu: cfg.mu,
            };
            let nl = fourier_convolution(&f1, &f2)?;

            let mut rhs = nl.values.clone();
            for (l1, l2) in cfg.lower_pairs() {
                let dq = deriv(cfg.delta_lower1[l1], cfg.tilde_delta_lower2[l2])?;
                let factor = zpowi(eps, cfg.big_delta_lower[l1][l2])
                    * zpowi(t1, cfg.d_lower1[l1])
                    * zpowi(t2, cfg.tilde_d_lower2[l2]);
                for i in 0..nm {
                    rhs[i] += factor * cfg.r_lower[l1][l2].eval_im(g.m.nodes[i]) * dq[i];
                }
            }
            // forcing symbol: F(eps t1, eps t2, m, eps)
            for (i, &m) in g.m.nodes.iter().enumerate() {
                let mut f_hat = ZERO;
                for term in &cfg.forcing.terms {
                    let f = cfg.forcing.eval(term.n1, term.n2, m, eps);
                    f_hat += f * zpowi(eps * t1, term.n1) * zpowi(eps * t2, term.n2);
                }
                rhs[i] += f_hat;
            }

            for &z in zs {
                if z.im.abs() >= cfg.beta_prime {
                    return Err(EngineError::Domain("|Im z| must stay below beta'".into()));
                }
                let synth = |vals: &[Complex64]| -> Complex64 {
                    let mut acc = ZERO;
                    for ((&m, &w), &v) in g.m.nodes.iter().zip(&g.m.weights).zip(vals) {
                        acc += w * v * (Complex64::i() * z * m).exp();
                    }
                    acc / (2.0 * std::f64::consts::PI).sqrt()
                };
                let l = synth(&lhs);
                let r = synth(&rhs);
                scale = scale.max(l.norm()).max(r.norm());
                max_abs = max_abs.max((l - r).norm());
            }
        }
    }
    Ok(PdeResidual {
        max_abs,
        scale,
        relative: max_abs / scale.max(1e-300),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn covering_four_cells() {
        let cov = build_good_covering(2, 2, 0.2, 1, 2, 0.1).unwrap();
        assert_eq!(cov.n_cells(), 4);
        assert_relative_eq!(cov.opening, std::f64::consts::PI / 2.0 * 1.1);
        // adjacency: consecutive cells intersect, opposite do not
        assert!(cov.intersects(0, 1));
        assert!(cov.intersects(1, 2));
        assert!(!cov.intersects(0, 2));
    }

    #[test]
    fn covering_failure_cases() {
        // sectors too narrow to cover the circle
        assert!(build_good_covering(2, 2, 0.2, 1, 12, 0.1).is_err());
        assert!(build_good_covering(1, 2, 0.2, 1, 2, 0.1).is_err());
    }

    #[test]
    fn association_by_argument_arithmetic() {
        let cov = build_good_covering(2, 3, 0.2, 1, 2, 0.1).unwrap();
        let cfg = crate::config::reference_config(0.0);
        // directions matching each cell bisector are admissible
        let dirs: Vec<(f64, f64)> = cov
            .sectors
            .iter()
            .map(|s| (s.bisecting_direction, s.bisecting_direction))
            .collect();
        let fam = associate_sectors(&cov, &cfg, dirs, 0.5, 0.4, 0.4).unwrap();
        assert!(fam.theta1 > std::f64::consts::PI / cfg.k1 as f64);
        assert!(fam.theta2 > std::f64::consts::PI / cfg.k2 as f64);
        // a direction table pointing away from its cell fails
        let bad: Vec<(f64, f64)> = cov
            .sectors
            .iter()
            .map(|s| (s.bisecting_direction, s.bisecting_direction + 3.0))
            .collect();
        assert!(associate_sectors(&cov, &cfg, bad, 0.5, 0.4, 0.4).is_err());
    }

    #[test]
    fn identity_suite_reference_orders() {
        let t_points: Vec<(f64, f64)> = (0..5).map(|i| (0.4 + 0.1 * i as f64, 0.5)).collect();
        let rep = laplace_identity_suite(1, 2, &t_points).unwrap();
        assert!(rep.euler_operator < 1e-5, "{}", rep.euler_operator);
        assert!(rep.monomial_kernel < 1e-5, "{}", rep.monomial_kernel);
        assert!(rep.convolution < 1e-5, "{}", rep.convolution);
    }
}
