//! Product quadrature for the Beta-type radial kernels.
//!
//! Every single-variable integral block of the convolution operator has the
//! s-plane form `int_0^{tau^k} (tau^k - s)^alpha s^beta phi(s^{1/k}) ds` along
//! the ray through `tau`. Factoring the ray phase and substituting `s = r^k
//! e^{ik theta}` reduces it to a real-kernel radial integral
//!
//! `J_j = k int_0^{R_j} (R_j^k - r^k)^alpha r^{k beta + k - 1} phi(r e^{i theta}) dr`,
//!
//! which is discretized as a lower-triangular matrix acting on the ladder
//! values of `phi` (with the implicit zero at the origin). The kernel is
//! integrated panel by panel with Gauss rules — Jacobi on the last panel when
//! `alpha` is not an integer — so the only error source is the local
//! polynomial representation of `phi`.

use crate::util::{gauss_jacobi_01, gauss_legendre_01, QuadRule};

/// Stencil over extended ladder nodes bounded by `max_ext`, so operator
/// rows never reference values beyond the output radius (extended node 0 is
/// the implicit origin and is dropped by callers).
pub(crate) use crate::util::ladder_stencil as bounded_stencil;
use crate::util::STENCIL;

/// Dense lower-triangular matrix for one radial kernel on a uniform ladder.
///
/// `mat[j * n + i]` multiplies the ladder value at radius `(i+1) h` and
/// contributes to the output at radius `R_j = (j+1) h`.
#[derive(Debug, Clone)]
pub struct RadialOp {
    pub n: usize,
    pub mat: Vec<f64>,
}

impl RadialOp {
    #[inline]
    pub fn entry(&self, j: usize, i: usize) -> f64 {
        self.mat[j * self.n + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.mat[j * self.n..(j + 1) * self.n]
    }
}

fn is_integerish(x: f64) -> bool {
    (x - x.round()).abs() < 1e-12 && x.round() >= 0.0
}

/// Build the matrix for `J_j` with exponents `alpha` (outer kernel) and
/// `gamma = k beta + k - 1 >= -1` (power of `r`), including the leading
/// factor `k`.
pub fn radial_op(n: usize, h: f64, k: u32, alpha: f64, gamma: i32) -> RadialOp {
    assert!(alpha > -1.0 && gamma >= -1);
    let gl = gauss_legendre_01(8);
    let gj = if is_integerish(alpha) {
        None
    } else {
        Some(gauss_jacobi_01(8, 0.0, alpha))
    };
    let kf = k as f64;
    let mut mat = vec![0.0; n * n];
    for j in 0..n {
        let r_out = (j + 1) as f64 * h;
        let pk = r_out.powi(k as i32);
        let max_ext = (j + 1).max(STENCIL - 1);
        let row = &mut mat[j * n..(j + 1) * n];
        // (node radius, quadrature weight including the kernel value)
        let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(8 * (j + 1));
        for panel in 0..=j {
            let lo = panel as f64 * h;
            let hi = (panel + 1) as f64 * h;
            match (&gj, panel == j) {
                (Some(rule), true) => {
                    // fold (R - r)^alpha into the Jacobi weight; the smooth
                    // residue [(R^k - r^k)/(R - r)]^alpha stays in the node
                    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                        let r = r_out - (r_out - lo) * t;
                        let width = r_out - lo;
                        let residue = if k == 1 {
                            1.0
                        } else {
                            ((pk - r.powi(k as i32)) / (r_out - r)).powf(alpha)
                        };
                        nodes.push((r, w * width.powf(alpha + 1.0) * residue));
                    }
                }
                _ => {
                    for (&t, &w) in gl.nodes.iter().zip(&gl.weights) {
                        let r = lo + (hi - lo) * t;
                        let kernel = (pk - r.powi(k as i32)).max(0.0).powf(alpha);
                        nodes.push((r, w * (hi - lo) * kernel));
                    }
                }
            }
        }
        for (r, w) in nodes {
            let power = if gamma == -1 { 1.0 / r } else { r.powi(gamma) };
            let (idx, ws) = bounded_stencil(r / h, max_ext);
            for a in 0..STENCIL {
                if idx[a] == 0 {
                    continue; // implicit origin value
                }
                row[idx[a] - 1] += kf * w * power * ws[a];
            }
        }
    }
    RadialOp { n, mat }
}

/// The pair of rank-3 tensors behind the bilinear convolution block.
///
/// `inner[j][a][b]` integrates
/// `int_0^{P_j} phi_a((P_j - s)^{1/k}) phi_b(s^{1/k}) ds / ((P_j - s) s)`
/// over the real radius plane (`P_j = R_j^k`); no outer kernel.
///
/// `outer[j][c][d]` composes the same bilinear form in the second variable
/// with the outer kernel `(P_j - s)^{1/k} ds` of the Borel convolution.
#[derive(Debug, Clone)]
pub struct PairTensor {
    pub n: usize,
    pub t: Vec<f64>,
}

impl PairTensor {
    #[inline]
    pub fn entry(&self, j: usize, a: usize, b: usize) -> f64 {
        self.t[(j * self.n + a) * self.n + b]
    }

    pub fn slab(&self, j: usize) -> &[f64] {
        &self.t[j * self.n * self.n..(j + 1) * self.n * self.n]
    }
}

/// Accumulate the inner bilinear form
/// `int_0^{P} phi_a((P - s)^{1/k}) phi_b(s^{1/k}) ds / ((P - s) s)`
/// into `acc[a * n + b] += scale * ...` using the symmetric two-half split;
/// each half is polynomial in the integration radius, so ladder-aligned
/// Gauss-Legendre panels are exact for the stencil representation.
fn accumulate_pair_form(
    acc: &mut [f64],
    n: usize,
    h: f64,
    k: u32,
    p_cap: f64,
    max_ext: usize,
    scale: f64,
    gl: &QuadRule,
) {
    let kf = k as f64;
    let sigma_mid = (0.5 * p_cap).powf(1.0 / kf);
    // left half: s in (0, P/2], sigma = s^{1/k};
    // integrand k phi_a((P - sigma^k)^{1/k}) phi_b(sigma) / ((P - sigma^k) sigma)
    // right half mirrors it with the roles of a and b exchanged
    for half in 0..2 {
        let mut panel_lo = 0.0;
        let mut panel = 0;
        while panel_lo < sigma_mid - 1e-300 {
            let panel_hi = ((panel + 1) as f64 * h).min(sigma_mid);
            for (&t, &w) in gl.nodes.iter().zip(&gl.weights) {
                let sigma = panel_lo + (panel_hi - panel_lo) * t;
                if sigma <= 0.0 {
                    continue;
                }
                let s = sigma.powi(k as i32);
                let other = (p_cap - s).powf(1.0 / kf);
                let weight =
                    scale * kf * w * (panel_hi - panel_lo) / ((p_cap - s) * sigma);
                let (ia, wa) = bounded_stencil(other / h, max_ext);
                let (ib, wb) = bounded_stencil(sigma / h, max_ext);
                for x in 0..STENCIL {
                    if ia[x] == 0 {
                        continue;
                    }
                    for y in 0..STENCIL {
                        if ib[y] == 0 {
                            continue;
                        }
                        let (a_idx, b_idx) = if half == 0 {
                            (ia[x] - 1, ib[y] - 1)
                        } else {
                            (ib[y] - 1, ia[x] - 1)
                        };
                        acc[a_idx * n + b_idx] += weight * wa[x] * wb[y];
                    }
                }
            }
            panel_lo = panel_hi;
            panel += 1;
        }
    }
}

/// Tensor of the inner bilinear form at every output radius.
pub fn pair_tensor_inner(n: usize, h: f64, k: u32) -> PairTensor {
    let gl = gauss_legendre_01(8);
    let mut t = vec![0.0; n * n * n];
    for j in 0..n {
        let r_out = (j + 1) as f64 * h;
        let p_cap = r_out.powi(k as i32);
        accumulate_pair_form(
            &mut t[j * n * n..(j + 1) * n * n],
            n,
            h,
            k,
            p_cap,
            (j + 1).max(STENCIL - 1),
            1.0,
            &gl,
        );
    }
    PairTensor { n, t }
}

/// Tensor composing the inner bilinear form with the outer kernel
/// `(P_j - s)^{1/k} ds` (the second-variable structure of the convolution
/// block). The outer integral runs in the radius variable with a Jacobi rule
/// on the panel touching `R_j`.
pub fn pair_tensor_outer(n: usize, h: f64, k: u32) -> PairTensor {
    let gl = gauss_legendre_01(8);
    let gj = gauss_jacobi_01(8, 0.0, 1.0 / k as f64);
    let kf = k as f64;
    let mut t = vec![0.0; n * n * n];
    for j in 0..n {
        let r_out = (j + 1) as f64 * h;
        let p_out = r_out.powi(k as i32);
        let max_ext = (j + 1).max(STENCIL - 1);
        let slab = &mut t[j * n * n..(j + 1) * n * n];
        // outer nodes r_s with ds = k r_s^{k-1} dr_s
        let mut handle_node = |rs: f64, w_outer: f64, kernel_outer: f64| {
            let ps = rs.powi(k as i32);
            if ps <= 0.0 {
                return;
            }
            let scale = w_outer * kernel_outer * kf * rs.powi(k as i32 - 1);
            accumulate_pair_form(slab, n, h, k, ps, max_ext, scale, &gl);
        };
        for panel in 0..=j {
            let lo = panel as f64 * h;
            let hi = (panel + 1) as f64 * h;
            if panel == j {
                // (P - rs^k)^{1/k} = (R - rs)^{1/k} * residue
                for (&tq, &w) in gj.nodes.iter().zip(&gj.weights) {
                    let rs = r_out - (r_out - lo) * tq;
                    let width = r_out - lo;
                    let residue = if k == 1 {
                        1.0
                    } else {
                        ((p_out - rs.powi(k as i32)) / (r_out - rs)).powf(1.0 / kf)
                    };
                    handle_node(rs, w * width.powf(1.0 / kf + 1.0), residue);
                }
            } else {
                for (&tq, &w) in gl.nodes.iter().zip(&gl.weights) {
                    let rs = lo + (hi - lo) * tq;
                    let kernel = (p_out - rs.powi(k as i32)).powf(1.0 / kf);
                    handle_node(rs, w * (hi - lo), kernel);
                }
            }
        }
    }
    PairTensor { n, t }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::beta;
    use approx::assert_relative_eq;

    /// Apply a radial op to ladder samples of a monomial `r^a` and compare
    /// with the Euler Beta closed form.
    fn check_monomial(k: u32, alpha: f64, beta_exp: i32, a_pow: i32, n: usize, tol: f64) -> f64 {
        let h = 0.4 / n as f64;
        let gamma = k as i32 * beta_exp + k as i32 - 1;
        let op = radial_op(n, h, k, alpha, gamma);
        let vals: Vec<f64> = (0..n).map(|i| ((i + 1) as f64 * h).powi(a_pow)).collect();
        let mut worst: f64 = 0.0;
        // near the origin the one-sided stencils dominate and the integral is
        // negligible; measure where the operator carries weight
        for j in n / 2..n {
            let r_out = (j + 1) as f64 * h;
            let p = r_out.powi(k as i32);
            let got: f64 = op.row(j).iter().zip(&vals).map(|(m, v)| m * v).sum();
            // int_0^P (P-s)^alpha s^{beta + a/k} ds = P^{alpha+beta+a/k+1} B(alpha+1, beta+a/k+1)
            let b2 = beta_exp as f64 + a_pow as f64 / k as f64;
            let exact = p.powf(alpha + b2 + 1.0) * beta(alpha + 1.0, b2 + 1.0);
            let rel = ((got - exact) / exact).abs();
            worst = worst.max(rel);
            assert!(rel < tol, "j={j} rel={rel:.3e} (k={k} alpha={alpha} beta={beta_exp} a={a_pow})");
        }
        worst
    }

    #[test]
    fn beta_kernels_low_degree_near_exact() {
        // cubic ladder representation is exact for monomials of degree <= 3
        check_monomial(1, 0.0, 0, 1, 24, 1e-12);
        check_monomial(1, 1.0, 1, 2, 24, 1e-12);
        check_monomial(2, 0.5, 0, 3, 24, 1e-11);
        check_monomial(2, -0.5, 1, 2, 24, 1e-11);
        check_monomial(2, 0.5, -1, 3, 24, 1e-11);
    }

    #[test]
    fn beta_kernels_fourth_order_convergence() {
        // degree-6 input: error comes from the cubic stencil and drops ~16x
        // per ladder doubling
        let e24 = check_monomial(2, 0.5, 0, 6, 24, 1e-5);
        let e48 = check_monomial(2, 0.5, 0, 6, 48, 1e-5);
        assert!(e24 > 1e-12, "error unexpectedly at machine level: {e24:.3e}");
        assert!(e48 < e24 / 4.0, "e24={e24:.3e} e48={e48:.3e}");
    }

    #[test]
    fn inner_pair_tensor_matches_beta_form() {
        // phi_a = r^2, phi_b = r^3, k = 1:
        // int_0^P (P-s)^2 s^3 ds/((P-s)s) = int (P-s)^1 s^2 ds = P^4 B(2,3)
        let n = 24;
        let h = 0.4 / n as f64;
        let tensor = pair_tensor_inner(n, h, 1);
        let va: Vec<f64> = (0..n).map(|i| ((i + 1) as f64 * h).powi(2)).collect();
        let vb: Vec<f64> = (0..n).map(|i| ((i + 1) as f64 * h).powi(3)).collect();
        for j in [7, 15, 23] {
            let p = (j + 1) as f64 * h;
            let mut got = 0.0;
            for a in 0..n {
                for b in 0..n {
                    got += tensor.entry(j, a, b) * va[a] * vb[b];
                }
            }
            let exact = p.powi(4) * beta(2.0, 3.0);
            assert_relative_eq!(got, exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn inner_pair_tensor_k2_fractional_powers() {
        // k = 2, phi_a = phi_b = r: arguments (P-s)^{1/2}, s^{1/2} give
        // int_0^P (P-s)^{1/2} s^{1/2} ds/((P-s)s) = B(1/2, 1/2) = pi
        let n = 24;
        let h = 0.2 / n as f64;
        let tensor = pair_tensor_inner(n, h, 2);
        let v: Vec<f64> = (0..n).map(|i| (i + 1) as f64 * h).collect();
        for j in [7, 15, 23] {
            let mut got = 0.0;
            for a in 0..n {
                for b in 0..n {
                    got += tensor.entry(j, a, b) * v[a] * v[b];
                }
            }
            assert_relative_eq!(got, std::f64::consts::PI, max_relative = 1e-9);
        }
    }

    #[test]
    fn outer_pair_tensor_matches_nested_beta_form() {
        // k = 2, phi_c = phi_d = r: inner gives pi (constant in s), so
        // outer = pi int_0^P (P-s)^{1/2} ds = pi P^{3/2} B(3/2, 1)
        let n = 24;
        let h = 0.2 / n as f64;
        let tensor = pair_tensor_outer(n, h, 2);
        let v: Vec<f64> = (0..n).map(|i| (i + 1) as f64 * h).collect();
        for j in [7, 15, 23] {
            let r_out = (j + 1) as f64 * h;
            let p = r_out.powi(2);
            let mut got = 0.0;
            for c in 0..n {
                for d in 0..n {
                    got += tensor.entry(j, c, d) * v[c] * v[d];
                }
            }
            let exact = std::f64::consts::PI * p.powf(1.5) * beta(1.5, 1.0);
            assert_relative_eq!(got, exact, max_relative = 1e-8);
        }
    }
}
