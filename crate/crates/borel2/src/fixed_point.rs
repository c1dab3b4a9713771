//! The convolution operator on the Borel domain and its Picard fixed point.
//!
//! Every term of the operator is one of three shapes: a single-variable
//! Beta-type radial integral (the order-lowering blocks and the forcing), a
//! tensor product of two such integrals (the lower-order family), or the
//! bilinear double convolution tensored with the frequency convolution (the
//! nonlinearity). The radial engine in [`radial`] reduces all of them to real
//! lower-triangular matrices and rank-3 tensors on the ladder; phases from the
//! ray parameterizations are reattached per block here.

pub mod lemmas;
mod nonlinear;
pub mod radial;

use crate::borel_plane::{
    p_m, psi_k, weighted_norm, weighted_norm_diff, BorelFunction, BorelGrid, NormParams,
};
use crate::config::{derive_exponents, DerivedExponents, ProblemConfig};
use crate::error::EngineError;
use crate::util::{gamma, zpowi, STENCIL};
use crate::Result;
use nonlinear::ConvPlan;
use num_complex::Complex64;
use radial::{pair_tensor_inner, pair_tensor_outer, radial_op, PairTensor, RadialOp};
use rayon::prelude::*;
use std::sync::Arc;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn zpow_signed(z: Complex64, e: i64) -> Complex64 {
    if e >= 0 {
        zpowi(z, e as u32)
    } else {
        Complex64::new(1.0, 0.0) / zpowi(z, (-e) as u32)
    }
}

// ---------------------------------------------------------------------------
// Operator-expansion coefficients
// ---------------------------------------------------------------------------

/// Coefficients `A_{delta,p}`, `p = 1..delta-1`, of the expansion of
/// `T^{delta(k+1)} d_T^delta` over powers of the Euler-type operator
/// `T^{k+1} d_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCoefficients {
    pub delta: u32,
    pub k: u32,
    pub values: Vec<f64>,
}

/// Falling factorial `n (n-1) ... (n-delta+1)`.
fn falling(n: f64, delta: u32) -> f64 {
    (0..delta).map(|j| n - j as f64).product()
}

/// `prod_{j=0}^{p-1} (n + j k)`: the action of `(T^{k+1} d_T)^p` on `T^n`.
fn euler_product(n: f64, p: u32, k: u32) -> f64 {
    (0..p).map(|j| n + (j * k) as f64).product()
}

/// Solve for the expansion coefficients by matching the action of both
/// operator sides on monomials `T^n`.
pub fn compute_shift_coefficients(delta: u32, k: u32) -> OperatorCoefficients {
    assert!(delta >= 1 && k >= 1);
    let m = (delta - 1) as usize;
    if m == 0 {
        return OperatorCoefficients {
            delta,
            k,
            values: Vec::new(),
        };
    }
    // rows: evaluation points n = 1..=delta-1; unknowns A_p, p = 1..=delta-1
    let mut a = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for (row, n) in (1..=m).enumerate() {
        let nf = n as f64;
        for (col, p) in (1..=m).enumerate() {
            a[row * m + col] = euler_product(nf, p as u32, k);
        }
        rhs[row] = falling(nf, delta) - euler_product(nf, delta, k);
    }
    // Gaussian elimination with partial pivoting
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if a[r * m + col].abs() > a[piv * m + col].abs() {
                piv = r;
            }
        }
        if piv != col {
            for c in 0..m {
                a.swap(col * m + c, piv * m + c);
            }
            rhs.swap(col, piv);
        }
        let d = a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] / d;
            if f != 0.0 {
                for c in col..m {
                    a[r * m + c] -= f * a[col * m + c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut values = vec![0.0; m];
    for row in (0..m).rev() {
        let mut acc = rhs[row];
        for c in row + 1..m {
            acc -= a[row * m + c] * values[c];
        }
        values[row] = acc / a[row * m + row];
    }
    OperatorCoefficients { delta, k, values }
}

/// Largest relative mismatch of the two operator sides on `T^n`,
/// `n = 1..=n_max` (the defining identity, used as the oracle).
pub fn shift_identity_residual(coeffs: &OperatorCoefficients, n_max: u32) -> f64 {
    let (delta, k) = (coeffs.delta, coeffs.k);
    let mut worst: f64 = 0.0;
    for n in 1..=n_max {
        let nf = n as f64;
        let lhs = falling(nf, delta);
        let mut rhs = euler_product(nf, delta, k);
        for (i, &a) in coeffs.values.iter().enumerate() {
            rhs += a * euler_product(nf, i as u32 + 1, k);
        }
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}

// ---------------------------------------------------------------------------
// Operator tables
// ---------------------------------------------------------------------------

/// Everything the operator application needs that depends only on the config
/// and the grid: expansion coefficients, radial matrices, convolution tensors,
/// frequency multipliers and the reciprocal divisor.
pub struct OperatorTables {
    pub grid: Arc<BorelGrid>,
    pub de: DerivedExponents,
    pub a_top1: OperatorCoefficients,
    pub a_top2: OperatorCoefficients,
    pub a_top3: OperatorCoefficients,
    ops_s1: Vec<RadialOp>,
    ops_s2_d2: Vec<RadialOp>,
    ops_s2_d3: Vec<RadialOp>,
    ops_l1: Vec<RadialOp>,
    ops_l2: Vec<RadialOp>,
    op_forcing: RadialOp,
    nl_m1: PairTensor,
    nl_w2: PairTensor,
    conv: ConvPlan,
    inv_pm: Vec<Complex64>,
    q_im: Vec<Complex64>,
    r12_im: Vec<Complex64>,
    r3_im: Vec<Complex64>,
    r_low_im: Vec<Vec<Complex64>>,
}

impl OperatorTables {
    fn col_max(op: &RadialOp, j: usize) -> usize {
        (j.max(STENCIL - 2)).min(op.n - 1)
    }

    pub fn inv_pm(&self) -> &[Complex64] {
        &self.inv_pm
    }

    pub fn q_im(&self) -> &[Complex64] {
        &self.q_im
    }
}

/// Precompute every grid-dependent table of the operator.
///
/// Fails with a singular-divisor error if `|P_m|` drops below
/// `1e-12 |Q(im)|` at any node of the grid.
pub fn build_tables(cfg: &ProblemConfig, grid: Arc<BorelGrid>) -> Result<OperatorTables> {
    let de = derive_exponents(cfg)?;
    let n1 = grid.radii1.len();
    let n2 = grid.n2();
    let k1 = cfg.k1;
    let k2 = cfg.k2;

    let a_top1 = compute_shift_coefficients(cfg.delta_top1, k1);
    let a_top2 = compute_shift_coefficients(cfg.tilde_delta_top2, k2);
    let a_top3 = compute_shift_coefficients(cfg.tilde_delta_top3, k2);

    let family = |delta: u32, k: u32, n: usize, h: f64| -> Vec<RadialOp> {
        (1..delta)
            .map(|p| radial_op(n, h, k, (delta - p - 1) as f64, (k * p) as i32 - 1))
            .collect()
    };
    let ops_s1 = family(cfg.delta_top1, k1, n1, grid.h1);
    let ops_s2_d2 = family(cfg.tilde_delta_top2, k2, n2, grid.h2);
    let ops_s2_d3 = family(cfg.tilde_delta_top3, k2, n2, grid.h2);

    let ops_l1 = (0..cfg.cap_d1)
        .map(|l1| {
            let alpha = de.d_l1_k1[l1] as f64 / k1 as f64 - 1.0;
            let gamma_exp = (k1 as i32) * (cfg.delta_lower1[l1] as i32 - 1) + k1 as i32 - 1;
            radial_op(n1, grid.h1, k1, alpha, gamma_exp)
        })
        .collect();
    let ops_l2 = (0..cfg.cap_d2)
        .map(|l2| {
            let alpha = de.d_l2_k2[l2] as f64 / k2 as f64 - 1.0;
            let gamma_exp = (k2 as i32) * (cfg.tilde_delta_lower2[l2] as i32 - 1) + k2 as i32 - 1;
            radial_op(n2, grid.h2, k2, alpha, gamma_exp)
        })
        .collect();

    let op_forcing = radial_op(n2, grid.h2, k2, 1.0 / k2 as f64, -1);

    let nl_m1 = pair_tensor_inner(n1, grid.h1, k1);
    let nl_w2 = pair_tensor_outer(n2, grid.h2, k2);
    let conv = ConvPlan::new(grid.nm());

    let q_im: Vec<Complex64> = grid.m.nodes.iter().map(|&m| cfg.q.eval_im(m)).collect();
    let r12_im: Vec<Complex64> = grid.m.nodes.iter().map(|&m| cfg.r_top12.eval_im(m)).collect();
    let r3_im: Vec<Complex64> = grid.m.nodes.iter().map(|&m| cfg.r_top3.eval_im(m)).collect();
    let mut r_low_im = Vec::with_capacity(cfg.cap_d1 * cfg.cap_d2);
    for l1 in 0..cfg.cap_d1 {
        for l2 in 0..cfg.cap_d2 {
            r_low_im.push(
                grid.m
                    .nodes
                    .iter()
                    .map(|&m| cfg.r_lower[l1][l2].eval_im(m))
                    .collect(),
            );
        }
    }

    let mut inv_pm = vec![ZERO; grid.total_nodes()];
    for ray in 0..grid.n_rays1() {
        for i1 in 0..grid.ray1_len[ray] {
            let t1 = grid.tau1(ray, i1);
            for i2 in 0..n2 {
                let t2 = grid.tau2(i2);
                for (im, &m) in grid.m.nodes.iter().enumerate() {
                    let v = p_m(cfg, t1, t2, m);
                    let floor = 1e-12 * q_im[im].norm();
                    if v.norm() < floor {
                        return Err(EngineError::SingularDivisor {
                            pm_abs: v.norm(),
                            floor,
                            r1: t1.norm(),
                            r2: t2.norm(),
                            m,
                        });
                    }
                    inv_pm[grid.index(ray, i1, i2, im)] = Complex64::new(1.0, 0.0) / v;
                }
            }
        }
    }

    Ok(OperatorTables {
        grid,
        de,
        a_top1,
        a_top2,
        a_top3,
        ops_s1,
        ops_s2_d2,
        ops_s2_d3,
        ops_l1,
        ops_l2,
        op_forcing,
        nl_m1,
        nl_w2,
        conv,
        inv_pm,
        q_im,
        r12_im,
        r3_im,
        r_low_im,
    })
}

// ---------------------------------------------------------------------------
// Axis application of radial matrices on one ray slice [len1, n2, nm]
// ---------------------------------------------------------------------------

fn apply_axis2(
    op: &RadialOp,
    coeff: f64,
    src: &[Complex64],
    out: &mut [Complex64],
    len1: usize,
    n2: usize,
    nm: usize,
) {
    for i1 in 0..len1 {
        let base = i1 * n2 * nm;
        for j2 in 0..n2 {
            let cmax = OperatorTables::col_max(op, j2);
            for i in 0..=cmax {
                let w = op.entry(j2, i) * coeff;
                if w == 0.0 {
                    continue;
                }
                let (lo, hi) = (base + j2 * nm, base + (j2 + 1) * nm);
                let (slo, shi) = (base + i * nm, base + (i + 1) * nm);
                for (oidx, sidx) in (lo..hi).zip(slo..shi) {
                    out[oidx] += w * src[sidx];
                }
            }
        }
    }
}

fn apply_axis1(
    op: &RadialOp,
    coeff: f64,
    src: &[Complex64],
    out: &mut [Complex64],
    len1: usize,
    n2: usize,
    nm: usize,
) {
    let block = n2 * nm;
    for j1 in 0..len1 {
        let cmax = OperatorTables::col_max(op, j1).min(len1 - 1);
        for i1 in 0..=cmax {
            let w = op.entry(j1, i1) * coeff;
            if w == 0.0 {
                continue;
            }
            let (lo, slo) = (j1 * block, i1 * block);
            for x in 0..block {
                out[lo + x] += w * src[slo + x];
            }
        }
    }
}

/// Sum of a coefficient family applied on the second axis (the raw measure
/// form, no phase): `sum_p (A_p / Gamma(delta - p)) I^{(delta-p-1, p-1)}`.
fn family_axis2(
    ops: &[RadialOp],
    coeffs: &OperatorCoefficients,
    src: &[Complex64],
    len1: usize,
    n2: usize,
    nm: usize,
) -> Vec<Complex64> {
    let mut out = vec![ZERO; src.len()];
    for (i, op) in ops.iter().enumerate() {
        let p = i as u32 + 1;
        let c = coeffs.values[i] / gamma((coeffs.delta - p) as f64);
        apply_axis2(op, c, src, &mut out, len1, n2, nm);
    }
    out
}

fn family_axis1(
    ops: &[RadialOp],
    coeffs: &OperatorCoefficients,
    src: &[Complex64],
    len1: usize,
    n2: usize,
    nm: usize,
) -> Vec<Complex64> {
    let mut out = vec![ZERO; src.len()];
    for (i, op) in ops.iter().enumerate() {
        let p = i as u32 + 1;
        let c = coeffs.values[i] / gamma((coeffs.delta - p) as f64);
        apply_axis1(op, c, src, &mut out, len1, n2, nm);
    }
    out
}

// ---------------------------------------------------------------------------
// Individual operator blocks
// ---------------------------------------------------------------------------

/// Which principal operator family to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrincipalOp {
    D1,
    D2,
    D3,
}

/// The order-lowering operators: the full `A`-operator in the first variable
/// or an `A~`-operator in the second, including their `tau^k` prefactors.
#[allow(non_snake_case)]
pub fn apply_A_op(
    omega: &BorelFunction,
    which: PrincipalOp,
    cfg: &ProblemConfig,
    tables: &OperatorTables,
) -> BorelFunction {
    let g = &tables.grid;
    let n2 = g.n2();
    let nm = g.nm();
    let mut out = BorelFunction::zeros(g.clone());
    for ray in 0..g.n_rays1() {
        let len1 = g.ray1_len[ray];
        let theta1 = g.ray1_angles[ray];
        let lo = g.index(ray, 0, 0, 0);
        let hi = lo + len1 * n2 * nm;
        let src = &omega.values[lo..hi];
        let slice = match which {
            PrincipalOp::D1 => {
                let mut v = family_axis1(&tables.ops_s1, &tables.a_top1, src, len1, n2, nm);
                // A = k1 T1 e^{i k1 th1 (delta - 1)} * raw
                let ph = cfg.k1 as f64 * cfg.delta_top1 as f64 * theta1;
                for j1 in 0..len1 {
                    let amp = cfg.k1 as f64 * g.radii1[j1].powi(cfg.k1 as i32);
                    let factor = Complex64::from_polar(amp, ph);
                    for x in &mut v[j1 * n2 * nm..(j1 + 1) * n2 * nm] {
                        *x *= factor;
                    }
                }
                v
            }
            PrincipalOp::D2 | PrincipalOp::D3 => {
                let (ops, coeffs) = if which == PrincipalOp::D2 {
                    (&tables.ops_s2_d2, &tables.a_top2)
                } else {
                    (&tables.ops_s2_d3, &tables.a_top3)
                };
                let mut v = family_axis2(ops, coeffs, src, len1, n2, nm);
                // A~ = k2 T2 e^{i k2 d2 (tdelta - 1)} * raw
                let ph = cfg.k2 as f64 * coeffs.delta as f64 * g.d2;
                for i1 in 0..len1 {
                    for j2 in 0..n2 {
                        let amp = cfg.k2 as f64 * g.radii2[j2].powi(cfg.k2 as i32);
                        let factor = Complex64::from_polar(amp, ph);
                        for x in &mut v[(i1 * n2 + j2) * nm..(i1 * n2 + j2 + 1) * nm] {
                            *x *= factor;
                        }
                    }
                }
                v
            }
        };
        out.values[lo..hi].copy_from_slice(&slice);
    }
    out
}

/// One lower-order term: the tensored Beta kernels with the written
/// prefactors and the explicit eps power, without the `R_{l1,l2}(im)/P_m`
/// frequency factor (that part is applied during assembly).
pub fn linear_l1l2_term(
    omega: &BorelFunction,
    cfg: &ProblemConfig,
    eps: Complex64,
    l1: usize,
    l2: usize,
    tables: &OperatorTables,
) -> BorelFunction {
    let g = &tables.grid;
    let n2 = g.n2();
    let nm = g.nm();
    let de = &tables.de;
    let k1 = cfg.k1 as f64;
    let k2 = cfg.k2 as f64;
    let eps_pow = cfg.big_delta_lower[l1][l2] as i64 - cfg.d_lower1[l1] as i64
        - cfg.tilde_d_lower2[l2] as i64
        + cfg.delta_lower1[l1] as i64
        + cfg.tilde_delta_lower2[l2] as i64
        - 1;
    let scalar = zpow_signed(eps, eps_pow)
        * k1.powi(cfg.delta_lower1[l1] as i32)
        * k2.powi(cfg.tilde_delta_lower2[l2] as i32)
        / (k2 * gamma(de.d_l1_k1[l1] as f64 / k1) * gamma(de.d_l2_k2[l2] as f64 / k2));
    // ray phases: e^{i k th (alpha + beta + 1)} per axis, plus the T1 factor
    let exp1 = de.d_l1_k1[l1] as f64 / k1 + cfg.delta_lower1[l1] as f64 - 1.0;
    let exp2 = de.d_l2_k2[l2] as f64 / k2 + cfg.tilde_delta_lower2[l2] as f64 - 1.0;
    let phase2 = k2 * g.d2 * exp2;

    let mut out = BorelFunction::zeros(g.clone());
    for ray in 0..g.n_rays1() {
        let len1 = g.ray1_len[ray];
        let theta1 = g.ray1_angles[ray];
        let lo = g.index(ray, 0, 0, 0);
        let hi = lo + len1 * n2 * nm;
        let src = &omega.values[lo..hi];
        let mut tmp = vec![ZERO; src.len()];
        apply_axis1(&tables.ops_l1[l1], 1.0, src, &mut tmp, len1, n2, nm);
        let mut res = vec![ZERO; src.len()];
        apply_axis2(&tables.ops_l2[l2], 1.0, &tmp, &mut res, len1, n2, nm);
        let ph1 = k1 * theta1 * exp1 + cfg.k1 as f64 * theta1 + phase2;
        for j1 in 0..len1 {
            let t1_amp = g.radii1[j1].powi(cfg.k1 as i32);
            let factor = scalar * Complex64::from_polar(t1_amp, ph1);
            for x in &mut res[j1 * n2 * nm..(j1 + 1) * n2 * nm] {
                *x *= factor;
            }
        }
        out.values[lo..hi].copy_from_slice(&res);
    }
    out
}

/// The forcing block: the double Borel transform of the forcing pushed
/// through the outer kernel, divided by `P_m`, with the written eps and Gamma
/// prefactors.
pub fn forcing_term(
    cfg: &ProblemConfig,
    eps: Complex64,
    n_max: u32,
    tables: &OperatorTables,
) -> BorelFunction {
    let g = &tables.grid;
    let n2 = g.n2();
    let nm = g.nm();
    let k2 = cfg.k2 as f64;
    let psi = BorelFunction::from_fn(g.clone(), |t1, t2, m| psi_k(cfg, t1, t2, m, eps, n_max));
    let mut out = BorelFunction::zeros(g.clone());
    let pref = (Complex64::new(1.0, 0.0) / eps) / (k2 * gamma(1.0 + 1.0 / k2));
    // op (alpha = 1/k2, beta = -1): phase e^{i k2 d2 (alpha + beta + 1)} = e^{i d2}
    let phase = Complex64::from_polar(1.0, g.d2);
    for ray in 0..g.n_rays1() {
        let len1 = g.ray1_len[ray];
        let lo = g.index(ray, 0, 0, 0);
        let hi = lo + len1 * n2 * nm;
        let mut res = vec![ZERO; hi - lo];
        apply_axis2(&tables.op_forcing, 1.0, &psi.values[lo..hi], &mut res, len1, n2, nm);
        for (x, inv) in res.iter_mut().zip(&tables.inv_pm[lo..hi]) {
            *x *= pref * phase * inv;
        }
        out.values[lo..hi].copy_from_slice(&res);
    }
    out
}

/// The bilinear convolution block on a pair of inputs, with the written
/// prefactor `(eps^{-1}/sqrt(2 pi)) tau1^{k1} / (k2 Gamma(1 + 1/k2))` and no
/// `1/P_m`.
pub fn nonlinear_convolution(
    omega_a: &BorelFunction,
    omega_b: &BorelFunction,
    cfg: &ProblemConfig,
    eps: Complex64,
    tables: &OperatorTables,
) -> Result<BorelFunction> {
    if !omega_a.grid.same_shape(&omega_b.grid) {
        return Err(EngineError::Interface(
            "nonlinear convolution requires both inputs on the same grid".into(),
        ));
    }
    let g = &tables.grid;
    let n2 = g.n2();
    let nm = g.nm();
    let p1_at = cfg.p1.at_eps(eps);
    let p2_at = cfg.p2.at_eps(eps);
    let mult1: Vec<Complex64> = g.m.nodes.iter().map(|&m| p1_at.eval_im(m)).collect();
    let mult2: Vec<Complex64> = g
        .m
        .nodes
        .iter()
        .zip(&g.m.weights)
        .map(|(&m, &w)| w * p2_at.eval_im(m))
        .collect();
    let k2 = cfg.k2 as f64;
    let pref0 = (Complex64::new(1.0, 0.0) / eps)
        / ((2.0 * std::f64::consts::PI).sqrt() * k2 * gamma(1.0 + 1.0 / k2));
    let phase2 = Complex64::from_polar(1.0, g.d2);

    let mut out = BorelFunction::zeros(g.clone());
    let slices: Vec<(usize, usize)> = (0..g.n_rays1())
        .map(|ray| (g.index(ray, 0, 0, 0), g.ray1_len[ray]))
        .collect();
    let results: Vec<(usize, Vec<Complex64>)> = slices
        .par_iter()
        .map(|&(lo, len1)| {
            let hi = lo + len1 * n2 * nm;
            let mut f = omega_a.values[lo..hi].to_vec();
            let mut gg = omega_b.values[lo..hi].to_vec();
            for s in 0..len1 * n2 {
                for mm in 0..nm {
                    f[s * nm + mm] *= mult1[mm];
                    gg[s * nm + mm] *= mult2[mm];
                }
            }
            let mut res = nonlinear::contract_ray(
                &tables.conv,
                &tables.nl_m1,
                &tables.nl_w2,
                &f,
                &gg,
                len1,
                n2,
                nm,
            );
            for j1 in 0..len1 {
                let factor = pref0 * phase2 * g.radii1[j1].powi(cfg.k1 as i32);
                for x in &mut res[j1 * n2 * nm..(j1 + 1) * n2 * nm] {
                    *x *= factor;
                }
            }
            (lo, res)
        })
        .collect();
    for (lo, res) in results {
        out.values[lo..lo + res.len()].copy_from_slice(&res);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Full operator application
// ---------------------------------------------------------------------------

/// Apply the full convolution operator to `omega`.
///
/// `forcing_cache` may carry a precomputed [`forcing_term`] (it does not
/// depend on `omega`); pass `None` to have it computed here.
#[allow(non_snake_case)]
pub fn apply_H(
    omega: &BorelFunction,
    cfg: &ProblemConfig,
    eps: Complex64,
    tables: &OperatorTables,
    forcing_cache: Option<&BorelFunction>,
) -> Result<BorelFunction> {
    let g = &tables.grid;
    if !omega.grid.same_shape(g) {
        return Err(EngineError::Interface(
            "operator input lives on a different grid".into(),
        ));
    }
    let n2 = g.n2();
    let nm = g.nm();
    let k1 = cfg.k1 as f64;
    let k2 = cfg.k2 as f64;
    let n_max = cfg.forcing.n_max();

    let forcing_local;
    let forcing_ref = match forcing_cache {
        Some(f) => f,
        None => {
            forcing_local = forcing_term(cfg, eps, n_max, tables);
            &forcing_local
        }
    };
    let nl = nonlinear_convolution(omega, omega, cfg, eps, tables)?;

    // lower-order tensor blocks (without their frequency multipliers)
    let lblocks: Vec<BorelFunction> = cfg
        .lower_pairs()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(l1, l2)| linear_l1l2_term(omega, cfg, eps, l1, l2, tables))
        .collect();

    let mut out = BorelFunction::zeros(g.clone());
    let dd2 = cfg.tilde_delta_top2;
    let dd3 = cfg.tilde_delta_top3;
    // second-variable powers (k2 T2)^{tdelta2 - 1} with their ray phase
    let b2pow: Vec<Complex64> = (0..n2)
        .map(|j2| {
            let amp = (k2 * g.radii2[j2].powi(cfg.k2 as i32)).powi(dd2 as i32 - 1);
            Complex64::from_polar(amp, k2 * g.d2 * (dd2 as f64 - 1.0))
        })
        .collect();
    let ph2 = Complex64::from_polar(1.0, k2 * g.d2 * (dd2 as f64 - 1.0));
    let ph3 = Complex64::from_polar(1.0, k2 * g.d2 * (dd3 as f64 - 1.0));

    let slices: Vec<(usize, usize, usize)> = (0..g.n_rays1())
        .map(|ray| (ray, g.index(ray, 0, 0, 0), g.ray1_len[ray]))
        .collect();
    let assembled: Vec<(usize, Vec<Complex64>)> = slices
        .par_iter()
        .map(|&(ray, lo, len1)| {
            let hi = lo + len1 * n2 * nm;
            let src = &omega.values[lo..hi];
            let theta1 = g.ray1_angles[ray];

            let s2d2 = family_axis2(&tables.ops_s2_d2, &tables.a_top2, src, len1, n2, nm);
            let s2d3 = family_axis2(&tables.ops_s2_d3, &tables.a_top3, src, len1, n2, nm);
            let s1 = family_axis1(&tables.ops_s1, &tables.a_top1, src, len1, n2, nm);
            let s13 = family_axis1(&tables.ops_s1, &tables.a_top1, &s2d2, len1, n2, nm);

            // first-variable factors per output radius
            let a1pow: Vec<Complex64> = (0..len1)
                .map(|j1| {
                    let amp = (k1 * g.radii1[j1].powi(cfg.k1 as i32)).powi(cfg.delta_top1 as i32);
                    Complex64::from_polar(amp, k1 * theta1 * cfg.delta_top1 as f64)
                })
                .collect();
            let k1t1ph: Vec<Complex64> = (0..len1)
                .map(|j1| {
                    let amp = k1 * g.radii1[j1].powi(cfg.k1 as i32);
                    Complex64::from_polar(amp, k1 * theta1 * cfg.delta_top1 as f64)
                })
                .collect();

            let mut res = vec![ZERO; hi - lo];
            for j1 in 0..len1 {
                for j2 in 0..n2 {
                    let s = (j1 * n2 + j2) * nm;
                    for mm in 0..nm {
                        let idx = s + mm;
                        let r12 = tables.r12_im[mm];
                        let r3 = tables.r3_im[mm];
                        let mut acc = -r12
                            * (a1pow[j1] * ph2 * s2d2[idx]
                                + b2pow[j2] * k1t1ph[j1] * s1[idx]
                                + k1t1ph[j1] * ph2 * s13[idx])
                            - r3 * ph3 * s2d3[idx];
                        acc += nl.values[lo + idx];
                        for (pair_idx, lb) in lblocks.iter().enumerate() {
                            acc += tables.r_low_im[pair_idx][mm] * lb.values[lo + idx];
                        }
                        res[idx] = acc * tables.inv_pm[lo + idx] + forcing_ref.values[lo + idx];
                    }
                }
            }
            (lo, res)
        })
        .collect();
    for (lo, res) in assembled {
        out.values[lo..lo + res.len()].copy_from_slice(&res);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Picard iteration
// ---------------------------------------------------------------------------

/// Outcome of the fixed-point solve.
#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub omega: BorelFunction,
    /// weighted norm of `H(omega) - omega` at the returned iterate
    pub residual: f64,
    /// largest ratio of successive increment norms
    pub contraction_estimate: f64,
    pub iterations: usize,
    /// final weighted norm of the iterate
    pub varpi_emp: f64,
    /// nodewise envelope check `|omega| <= varpi * inverse_weight`
    pub bound_e807_pass: bool,
    /// per-iteration increment norms
    pub trace: Vec<(usize, f64)>,
}

/// Picard iteration `omega_{n+1} = H(omega_n)` from `omega_0 = 0` until the
/// weighted increment norm drops below `tol`.
///
/// Divergence (three consecutive non-contracting increments) aborts with an
/// error suggesting smaller forcing or `eps0`; exceeding `max_iter` reports
/// non-convergence.
pub fn solve_fixed_point(
    cfg: &ProblemConfig,
    eps: Complex64,
    p: &NormParams,
    tol: f64,
    max_iter: usize,
    tables: &OperatorTables,
) -> Result<FixedPointReport> {
    let grid = tables.grid.clone();
    let forcing = forcing_term(cfg, eps, cfg.forcing.n_max(), tables);
    let mut omega = BorelFunction::zeros(grid.clone());
    let mut prev_inc = f64::INFINITY;
    let mut contraction: f64 = 0.0;
    let mut bad_streak = 0usize;
    let mut recent_ratios = Vec::new();
    let mut trace = Vec::new();

    for it in 1..=max_iter {
        let next = apply_H(&omega, cfg, eps, tables, Some(&forcing))?;
        let inc = weighted_norm_diff(&next, &omega, p);
        trace.push((it, inc));
        omega = next;
        if inc < tol {
            let reapplied = apply_H(&omega, cfg, eps, tables, Some(&forcing))?;
            let residual = weighted_norm_diff(&reapplied, &omega, p);
            let varpi_emp = weighted_norm(&omega, p);
            let bound_e807_pass = check_envelope(&omega, p, varpi_emp);
            return Ok(FixedPointReport {
                omega,
                residual,
                contraction_estimate: contraction,
                iterations: it,
                varpi_emp,
                bound_e807_pass,
                trace,
            });
        }
        if prev_inc.is_finite() && prev_inc > 0.0 {
            let ratio = inc / prev_inc;
            contraction = contraction.max(ratio);
            recent_ratios.push(ratio);
            if ratio >= 1.0 {
                bad_streak += 1;
                if bad_streak >= 3 {
                    let n = recent_ratios.len();
                    return Err(EngineError::Divergence {
                        ratios: recent_ratios[n.saturating_sub(3)..].to_vec(),
                    });
                }
            } else {
                bad_streak = 0;
            }
        }
        prev_inc = inc;
    }
    Err(EngineError::NonConvergence {
        max_iter,
        last: prev_inc,
    })
}

/// Nodewise envelope check: `|omega| <= varpi * inverse_weight` everywhere.
fn check_envelope(omega: &BorelFunction, p: &NormParams, varpi: f64) -> bool {
    let g = &omega.grid;
    for ray in 0..g.n_rays1() {
        for i1 in 0..g.ray1_len[ray] {
            for i2 in 0..g.n2() {
                for (im, &m) in g.m.nodes.iter().enumerate() {
                    let v = omega.value(ray, i1, i2, im).norm();
                    let cap = varpi * p.inverse_weight(g.radii1[i1], g.radii2[i2], m);
                    if v > cap * (1.0 + 1e-9) + 1e-300 {
                        return false;
                    }
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::borel_plane::select_directions;
    use crate::config::reference_config;
    use crate::util::beta;
    use approx::assert_relative_eq;

    fn reference_setup(
        forcing: f64,
        eps: Complex64,
        n_radial: usize,
        n_angles: usize,
    ) -> (ProblemConfig, Arc<BorelGrid>, OperatorTables) {
        let mut cfg = reference_config(forcing);
        cfg.grid.n_radial = n_radial;
        cfg.grid.n_angles = n_angles;
        cfg.grid.m_max = 5.0;
        cfg.grid.n_m = 21;
        let d1 = std::f64::consts::PI;
        let d2 = 0.5 * std::f64::consts::PI;
        let grid = Arc::new(BorelGrid::for_config(&cfg, d1, d2, 0.5, eps.norm()).unwrap());
        let tables = build_tables(&cfg, grid.clone()).unwrap();
        (cfg, grid, tables)
    }

    #[test]
    fn shift_coefficients_small_cases() {
        // delta = 1: empty
        assert!(compute_shift_coefficients(1, 1).values.is_empty());
        // delta = 2, k = 1: n(n-1) = n(n+1) + A n  =>  A = -2
        let c = compute_shift_coefficients(2, 1);
        assert_relative_eq!(c.values[0], -2.0, max_relative = 1e-13);
        // delta = 2, k = 2: n(n-1) = n(n+2) + A n  =>  A = -3
        let c = compute_shift_coefficients(2, 2);
        assert_relative_eq!(c.values[0], -3.0, max_relative = 1e-13);
        // delta = 3, k = 2: two coefficients, identity holds on monomials
        let c = compute_shift_coefficients(3, 2);
        assert_eq!(c.values.len(), 2);
        assert!(shift_identity_residual(&c, 8) < 1e-12);
    }

    #[test]
    fn shift_identity_grid() {
        for delta in 1..=4 {
            for k in 1..=3 {
                let c = compute_shift_coefficients(delta, k);
                let r = shift_identity_residual(&c, 2 * delta + 2);
                assert!(r < 1e-12, "delta={delta} k={k} residual={r:.3e}");
            }
        }
    }

    #[test]
    fn a_op_beta_closed_form() {
        let eps = Complex64::new(0.05, 0.0);
        let (cfg, grid, tables) = reference_setup(0.0, eps, 16, 4);
        // omega = tau1^a tau2^b
        let (a, b) = (2u32, 1u32);
        let omega =
            BorelFunction::from_fn(grid.clone(), |t1, t2, _| zpowi(t1, a) * zpowi(t2, b));
        let out = apply_A_op(&omega, PrincipalOp::D1, &cfg, &tables);
        // closed form: k1 tau2^b T1^{delta + a/k1}
        //              sum_p A_p / Gamma(delta - p) B(delta - p, p + a/k1)
        let delta = cfg.delta_top1;
        let coeffs = compute_shift_coefficients(delta, cfg.k1);
        for ray in [0usize, 2] {
            let len1 = grid.ray1_len[ray];
            for j1 in [len1 / 2, len1 - 1] {
                let t2 = grid.tau2(grid.n2() / 2);
                let theta1 = grid.ray1_angles[ray];
                let t1k_amp = grid.radii1[j1].powi(cfg.k1 as i32);
                let power = delta as f64 + a as f64 / cfg.k1 as f64;
                let t1_pow =
                    Complex64::from_polar(t1k_amp.powf(power), cfg.k1 as f64 * theta1 * power);
                let mut sum = ZERO;
                for (i, &ap) in coeffs.values.iter().enumerate() {
                    let p = i as f64 + 1.0;
                    sum += ap / gamma(delta as f64 - p)
                        * beta(delta as f64 - p, p + a as f64 / cfg.k1 as f64);
                }
                let exact = cfg.k1 as f64 * zpowi(t2, b) * t1_pow * sum;
                let got = out.value(ray, j1, grid.n2() / 2, grid.nm() / 2);
                assert!(
                    (got - exact).norm() <= 1e-8 * exact.norm().max(1e-300),
                    "ray={ray} j1={j1}: got {got}, exact {exact}"
                );
            }
        }
    }

    #[test]
    fn forcing_term_beta_closed_form() {
        let eps = Complex64::new(0.05, 0.0);
        let (cfg, grid, tables) = reference_setup(0.01, eps, 16, 4);
        let out = forcing_term(&cfg, eps, 4, &tables);
        // psi = F11(m) tau1 tau2 / (Gamma(1) Gamma(1/2));
        // int_0^{T2}(T2 - s2)^{1/2} psi(tau1, s2^{1/2}) ds2/s2
        //   = F11 tau1 / sqrt(pi) * T2 * B(3/2, 1/2)
        let k2 = cfg.k2 as f64;
        for ray in [0usize, 1] {
            for j1 in [3usize, 12] {
                for j2 in [4usize, 15] {
                    let im = grid.nm() / 3;
                    let m = grid.m.nodes[im];
                    let t1 = grid.tau1(ray, j1);
                    let t2 = grid.tau2(j2);
                    let f11 = cfg.forcing.eval(1, 1, m, eps);
                    let t2k = zpowi(t2, cfg.k2);
                    let exact = (Complex64::new(1.0, 0.0) / eps) / (k2 * gamma(1.0 + 1.0 / k2))
                        / p_m(&cfg, t1, t2, m)
                        * f11
                        * t1
                        / std::f64::consts::PI.sqrt()
                        * t2k
                        * beta(1.5, 0.5);
                    let got = out.value(ray, j1, j2, im);
                    assert!(
                        (got - exact).norm() <= 1e-8 * exact.norm(),
                        "got {got} exact {exact}"
                    );
                }
            }
        }
        // linearity in the forcing: doubling all F doubles the output
        let mut cfg2 = cfg.clone();
        for t in &mut cfg2.forcing.terms {
            t.amplitude *= 2.0;
        }
        let out2 = forcing_term(&cfg2, eps, 4, &tables);
        for (x, y) in out2.values.iter().zip(&out.values) {
            assert!((x - 2.0 * y).norm() <= 1e-13 * y.norm().max(1e-300));
        }
    }

    #[test]
    fn l1l2_term_beta_closed_form_and_eps_scaling() {
        let eps = Complex64::new(0.05, 0.0);
        let (cfg, grid, tables) = reference_setup(0.0, eps, 16, 4);
        let (a, b) = (1u32, 2u32);
        let omega =
            BorelFunction::from_fn(grid.clone(), |t1, t2, _| zpowi(t1, a) * zpowi(t2, b));
        let de = derive_exponents(&cfg).unwrap();
        let (l1, l2) = (1usize, 1usize);
        let out = linear_l1l2_term(&omega, &cfg, eps, l1, l2, &tables);
        let k1 = cfg.k1 as f64;
        let k2 = cfg.k2 as f64;
        let a1 = de.d_l1_k1[l1] as f64 / k1 - 1.0;
        let b1 = cfg.delta_lower1[l1] as f64 - 1.0 + a as f64 / k1;
        let a2 = de.d_l2_k2[l2] as f64 / k2 - 1.0;
        let b2 = cfg.tilde_delta_lower2[l2] as f64 - 1.0 + b as f64 / k2;
        for ray in [0usize, 3] {
            let j1 = grid.ray1_len[ray] - 1;
            let j2 = grid.n2() - 2;
            let theta1 = grid.ray1_angles[ray];
            let p1 = grid.radii1[j1].powi(cfg.k1 as i32);
            let p2v = grid.radii2[j2].powi(cfg.k2 as i32);
            let i1 = Complex64::from_polar(p1.powf(a1 + b1 + 1.0), k1 * theta1 * (a1 + b1 + 1.0))
                * beta(a1 + 1.0, b1 + 1.0);
            let i2v =
                Complex64::from_polar(p2v.powf(a2 + b2 + 1.0), k2 * grid.d2 * (a2 + b2 + 1.0))
                    * beta(a2 + 1.0, b2 + 1.0);
            let eps_pow = cfg.big_delta_lower[l1][l2] as i64 - cfg.d_lower1[l1] as i64
                - cfg.tilde_d_lower2[l2] as i64
                + cfg.delta_lower1[l1] as i64
                + cfg.tilde_delta_lower2[l2] as i64
                - 1;
            let t1_factor = Complex64::from_polar(p1, k1 * theta1);
            let exact = zpow_signed(eps, eps_pow)
                * k1.powi(cfg.delta_lower1[l1] as i32)
                * k2.powi(cfg.tilde_delta_lower2[l2] as i32)
                / (k2 * gamma(de.d_l1_k1[l1] as f64 / k1) * gamma(de.d_l2_k2[l2] as f64 / k2))
                * t1_factor
                * i1
                * i2v;
            let got = out.value(ray, j1, j2, 0);
            assert!(
                (got - exact).norm() <= 1e-7 * exact.norm(),
                "ray {ray}: got {got} exact {exact}"
            );
        }
        // doubling |eps| scales by 2^{eps_pow} = 4 exactly here
        let out2 = linear_l1l2_term(&omega, &cfg, 2.0 * eps, l1, l2, &tables);
        let ratio = out2.value(0, 10, 10, 0) / out.value(0, 10, 10, 0);
        assert!((ratio - Complex64::new(4.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn nonlinear_block_closed_form_and_bilinearity() {
        let eps = Complex64::new(0.05, 0.0);
        let (cfg, grid, tables) = reference_setup(0.0, eps, 16, 4);
        let profile = |m: f64| (1.0 + m.abs()).powf(-cfg.mu) * (-cfg.beta * m.abs()).exp();
        let omega = BorelFunction::from_fn(grid.clone(), |t1, t2, m| t1 * t2 * profile(m));
        let out = nonlinear_convolution(&omega, &omega, &cfg, eps, &tables).unwrap();
        // m-part oracle: grid convolution of the profile with itself
        let conv_m = |m_idx: usize| -> f64 {
            let mi = grid.m.nodes[m_idx];
            let mut acc = 0.0;
            for (&mq, &wq) in grid.m.nodes.iter().zip(&grid.m.weights) {
                let shift = mi - mq;
                if shift.abs() <= grid.m.m_max + 1e-12 {
                    acc += wq * profile(shift) * profile(mq);
                }
            }
            acc
        };
        // radial closed form (k1 = 1, k2 = 2, inputs tau1 tau2):
        // s1 integral = T1; x2 integral = B(1/2, 1/2) = pi;
        // outer = (2/3) T2^{3/2}
        for ray in [0usize, 2] {
            let j1 = grid.ray1_len[ray] - 1;
            let j2 = grid.n2() - 1;
            let im = grid.nm() / 2;
            let t1 = grid.tau1(ray, j1);
            let t2 = grid.tau2(j2);
            let t1k = zpowi(t1, cfg.k1);
            let p2 = t2.norm().powi(cfg.k2 as i32);
            let t2_32 = Complex64::from_polar(p2.powf(1.5), cfg.k2 as f64 * grid.d2 * 1.5);
            let exact = (Complex64::new(1.0, 0.0) / eps)
                / ((2.0 * std::f64::consts::PI).sqrt() * 2.0 * gamma(1.5))
                * t1k
                * t1k
                * std::f64::consts::PI
                * (2.0 / 3.0)
                * t2_32
                * conv_m(im);
            let got = out.value(ray, j1, j2, im);
            assert!(
                (got - exact).norm() <= 1e-5 * exact.norm(),
                "got {got} exact {exact} rel {}",
                (got - exact).norm() / exact.norm()
            );
        }
        // bilinearity: scaling one input scales the output
        let scaled = omega.scaled(Complex64::new(2.0, 0.0));
        let out2 = nonlinear_convolution(&scaled, &omega, &cfg, eps, &tables).unwrap();
        for (x, y) in out2.values.iter().zip(&out.values) {
            assert!((x - 2.0 * y).norm() <= 1e-12 * y.norm().max(1e-300));
        }
        // zero input: zero output
        let zero = BorelFunction::zeros(grid.clone());
        let out0 = nonlinear_convolution(&zero, &omega, &cfg, eps, &tables).unwrap();
        assert_eq!(out0.max_abs(), 0.0);
    }

    #[test]
    fn apply_h_zero_is_forcing() {
        let eps = Complex64::new(0.05, 0.0);
        let (cfg, grid, tables) = reference_setup(0.01, eps, 12, 4);
        let zero = BorelFunction::zeros(grid.clone());
        let h0 = apply_H(&zero, &cfg, eps, &tables, None).unwrap();
        let f = forcing_term(&cfg, eps, cfg.forcing.n_max(), &tables);
        for (a, b) in h0.values.iter().zip(&f.values) {
            assert!((a - b).norm() <= 1e-14 * b.norm().max(1e-300));
        }
        // zero forcing: zero is the fixed point
        let (cfg0, grid0, tables0) = reference_setup(0.0, eps, 12, 4);
        let h00 =
            apply_H(&BorelFunction::zeros(grid0.clone()), &cfg0, eps, &tables0, None).unwrap();
        assert_eq!(h00.max_abs(), 0.0);
    }

    #[test]
    fn apply_h_homogeneity_split() {
        // H(c w) - F = c * linear + c^2 * nonlinear for c in {2, -1}
        let eps = Complex64::new(0.05, 0.0);
        let (cfg, grid, tables) = reference_setup(0.01, eps, 12, 4);
        let p = NormParams::new(1.0, 1.0, cfg.beta, cfg.mu, cfg.k1, cfg.k2, eps).unwrap();
        let omega = BorelFunction::from_fn(grid.clone(), |t1, t2, m| {
            Complex64::new(
                1e-2 * p.inverse_weight(t1.norm(), t2.norm(), m),
                0.5e-2 * p.inverse_weight(t1.norm(), t2.norm(), m),
            )
        });
        let f = forcing_term(&cfg, eps, cfg.forcing.n_max(), &tables);
        let h1 = apply_H(&omega, &cfg, eps, &tables, Some(&f)).unwrap();
        let lin_plus_nl = h1.sub(&f);
        let nl = nonlinear_convolution(&omega, &omega, &cfg, eps, &tables).unwrap();
        // the nonlinear block inside apply_H carries 1/P_m
        let mut nl_over_pm = nl.clone();
        for (v, inv) in nl_over_pm.values.iter_mut().zip(tables.inv_pm()) {
            *v *= inv;
        }
        let linear = lin_plus_nl.sub(&nl_over_pm);
        for &lambda in &[2.0, -1.0] {
            let lw = omega.scaled(Complex64::new(lambda, 0.0));
            let h = apply_H(&lw, &cfg, eps, &tables, Some(&f)).unwrap();
            let lhs = h.sub(&f);
            let mut rhs = linear.scaled(Complex64::new(lambda, 0.0));
            rhs.add_assign(&nl_over_pm.scaled(Complex64::new(lambda * lambda, 0.0)));
            let scale = lhs.max_abs().max(1e-300);
            let diff = lhs.sub(&rhs).max_abs();
            assert!(diff <= 1e-10 * scale, "lambda={lambda}: rel={}", diff / scale);
        }
    }

    #[test]
    fn fixed_point_zero_forcing() {
        let eps = Complex64::new(0.05, 0.0);
        let (cfg, _grid, tables) = reference_setup(0.0, eps, 12, 4);
        let p = NormParams::new(1.0, 1.0, cfg.beta, cfg.mu, cfg.k1, cfg.k2, eps).unwrap();
        let rep = solve_fixed_point(&cfg, eps, &p, 1e-10, 10, &tables).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.residual, 0.0);
        assert_eq!(rep.omega.max_abs(), 0.0);
    }

    #[test]
    fn fixed_point_small_forcing_converges() {
        let eps = Complex64::new(0.05, 0.0);
        let (cfg, _grid, tables) = reference_setup(0.01, eps, 12, 6);
        let p = NormParams::new(1.0, 1.0, cfg.beta, cfg.mu, cfg.k1, cfg.k2, eps).unwrap();
        let rep = solve_fixed_point(&cfg, eps, &p, 1e-9, 40, &tables).unwrap();
        assert!(rep.contraction_estimate < 1.0, "contraction {}", rep.contraction_estimate);
        assert!(rep.residual < 1e-9);
        assert!(rep.bound_e807_pass);
        assert!(rep.varpi_emp.is_finite());
        // the fixed point satisfies the equation: the rearranged-divisor
        // residual stays within an order of the iteration tolerance
        let h = apply_H(&rep.omega, &cfg, eps, &tables, None).unwrap();
        let r = weighted_norm_diff(&h, &rep.omega, &p);
        assert!(r <= 1e-8, "equation residual {r}");
    }

    #[test]
    fn fixed_point_huge_forcing_diverges() {
        let eps = Complex64::new(0.05, 0.0);
        let (cfg, _grid, tables) = reference_setup(1.0e4, eps, 12, 4);
        let p = NormParams::new(1.0, 1.0, cfg.beta, cfg.mu, cfg.k1, cfg.k2, eps).unwrap();
        match solve_fixed_point(&cfg, eps, &p, 1e-9, 40, &tables) {
            Err(EngineError::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn direction_choice_keeps_divisor_invertible() {
        // end-to-end: directions from the scan give a grid where P_m stays
        // away from zero
        let cfg = reference_config(0.01);
        let m_grid = cfg.grid.frequency_grid().unwrap();
        let choice = select_directions(&cfg, &m_grid, 0.5).unwrap();
        let grid =
            Arc::new(BorelGrid::for_config(&cfg, choice.d1, choice.d2, choice.rho1, 0.05).unwrap());
        assert!(build_tables(&cfg, grid).is_ok());
    }
}
