//! Shared numerics: gamma/beta functions, Gauss rules, adaptive quadrature,
//! and the uniform-ladder cubic interpolation used by every radial operator.

use num_complex::Complex64;

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires a positive argument, got {x}");
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let z = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Gamma function for `x > 0`.
pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// Euler beta function `B(a, b)` for positive arguments.
pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// Integer power of a complex number by exponentiation by squaring.
pub fn zpowi(z: Complex64, n: u32) -> Complex64 {
    let mut base = z;
    let mut exp = n;
    let mut acc = Complex64::new(1.0, 0.0);
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        base *= base;
        exp >>= 1;
    }
    acc
}

/// `(r e^{i theta})` as a complex number.
#[inline]
pub fn ray_point(radius: f64, angle: f64) -> Complex64 {
    Complex64::from_polar(radius, angle)
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut x = a % tau;
    if x <= -std::f64::consts::PI {
        x += tau;
    } else if x > std::f64::consts::PI {
        x -= tau;
    }
    x
}

/// Smallest absolute angular distance between two directions.
pub fn angle_dist(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

// ---------------------------------------------------------------------------
// Gauss quadrature on [0, 1] with Jacobi weight (1-t)^alpha t^beta
// ---------------------------------------------------------------------------

/// A quadrature rule on `[0, 1]`: `int f(t) w(t) dt ~= sum_i weights[i] f(nodes[i])`
/// where the weight function `w` is implied by the constructor.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Jacobi rule on `[0, 1]` for the weight `(1-t)^alpha * t^beta`,
/// `alpha, beta > -1`. Exact for polynomials of degree `2n - 1`.
///
/// Built from the monic three-term recurrence via root interlacing (bisection
/// plus Newton polish) and Christoffel numbers; no eigen decomposition needed
/// at these sizes.
pub fn gauss_jacobi_01(n: usize, alpha: f64, beta_exp: f64) -> QuadRule {
    assert!(n >= 1 && alpha > -1.0 && beta_exp > -1.0);
    let (a, b) = (alpha, beta_exp);
    // Monic recurrence p_{k+1} = (x - ak) p_k - bk p_{k-1} on [-1, 1] with
    // weight (1-x)^a (1+x)^b; mu0 = 2^{a+b+1} B(a+1, b+1).
    let mu0 = 2f64.powf(a + b + 1.0) * beta(a + 1.0, b + 1.0);
    let ak = |k: usize| -> f64 {
        if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            let s = 2.0 * k as f64 + a + b;
            (b * b - a * a) / (s * (s + 2.0))
        }
    };
    let bk = |k: usize| -> f64 {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        4.0 * kf * (kf + a) * (kf + b) * (kf + a + b) / (s * s * (s * s - 1.0))
    };
    // Evaluate monic p_m at x.
    let eval = |m: usize, x: f64| -> f64 {
        let mut pm1 = 0.0;
        let mut p = 1.0;
        for k in 0..m {
            let next = (x - ak(k)) * p - if k == 0 { 0.0 } else { bk(k) } * pm1;
            pm1 = p;
            p = next;
        }
        p
    };
    // Roots of p_m interlace those of p_{m-1}; march up the degrees.
    let mut roots: Vec<f64> = Vec::new();
    for m in 1..=n {
        let mut brackets = Vec::with_capacity(m + 1);
        brackets.push(-1.0);
        brackets.extend_from_slice(&roots);
        brackets.push(1.0);
        let mut new_roots = Vec::with_capacity(m);
        for w in brackets.windows(2) {
            let (mut lo, mut hi) = (w[0], w[1]);
            let (mut flo, fhi) = (eval(m, lo), eval(m, hi));
            debug_assert!(flo * fhi <= 0.0);
            if flo == 0.0 {
                lo += 1e-14;
                flo = eval(m, lo);
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = eval(m, mid);
                if fm == 0.0 || hi - lo < 1e-16 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm > 0.0) == (flo > 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            new_roots.push(0.5 * (lo + hi));
        }
        roots = new_roots;
    }
    // Christoffel numbers: w_i = 1 / sum_k p~_k(x_i)^2 over the orthonormal
    // family; evaluate monic values and divide by the accumulated norms.
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &x in &roots {
        let mut sum = 0.0;
        let mut pprev = 0.0f64;
        let mut pcur = 1.0f64;
        let mut acc_norm = mu0;
        sum += pcur * pcur / acc_norm;
        for k in 0..n - 1 {
            let next = (x - ak(k)) * pcur - if k == 0 { 0.0 } else { bk(k) } * pprev;
            pprev = pcur;
            pcur = next;
            acc_norm *= bk(k + 1);
            sum += pcur * pcur / acc_norm;
        }
        // map [-1, 1] -> [0, 1] with t = (1+x)/2; weight picks up 2^{-(a+b+1)}
        nodes.push(0.5 * (1.0 + x));
        weights.push(1.0 / sum / 2f64.powf(a + b + 1.0));
    }
    QuadRule { nodes, weights }
}

/// Gauss-Legendre rule on `[0, 1]` (unit weight).
pub fn gauss_legendre_01(n: usize) -> QuadRule {
    gauss_jacobi_01(n, 0.0, 0.0)
}

// ---------------------------------------------------------------------------
// Adaptive Simpson (oracle-grade reference quadrature)
// ---------------------------------------------------------------------------

fn simpson_step(
    f: &mut dyn FnMut(f64) -> Complex64,
    a: f64,
    fa: Complex64,
    b: f64,
    fb: Complex64,
    fm: Complex64,
    whole: Complex64,
    tol: f64,
    depth: usize,
) -> Complex64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson quadrature of a complex-valued integrand on `[a, b]`.
pub fn adaptive_simpson(mut f: impl FnMut(f64) -> Complex64, a: f64, b: f64, tol: f64) -> Complex64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&mut f, a, fa, b, fb, fm, whole, tol, 48)
}

/// Adaptive Simpson quadrature of a real integrand on `[a, b]`.
pub fn adaptive_simpson_real(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_simpson(|x| Complex64::new(f(x), 0.0), a, b, tol).re
}

// ---------------------------------------------------------------------------
// Uniform-ladder cubic interpolation
// ---------------------------------------------------------------------------

/// Number of points in the radial interpolation stencils: 6-point local
/// Lagrange (exact through degree 5, order-6 error), the accuracy the
/// Beta-kernel oracles require on 24-node ladders.
pub const STENCIL: usize = 6;

/// Lagrange stencil of [`STENCIL`] extended ladder nodes for the coordinate
/// `x = r / h`, where extended node `e` sits at radius `e * h`, `e = 0..=n`.
/// Extended node 0 is the origin and carries an implicit zero value.
///
/// `max_ext` bounds the largest extended node the stencil may reference (the
/// output-radius node for the triangular operator matrices).
pub fn ladder_stencil(x: f64, max_ext: usize) -> ([usize; STENCIL], [f64; STENCIL]) {
    debug_assert!(max_ext >= STENCIL - 1, "ladder too short for the stencil");
    let x = x.clamp(0.0, max_ext as f64);
    let j = (x.floor() as usize).min(max_ext - 1);
    // center the stencil on the containing interval, clamped to [0, max_ext]
    let s = j.saturating_sub(STENCIL / 2 - 1).min(max_ext - (STENCIL - 1));
    let mut idx = [0usize; STENCIL];
    let mut w = [0.0; STENCIL];
    for a in 0..STENCIL {
        let node_a = (s + a) as f64;
        let mut num = 1.0;
        let mut den = 1.0;
        for b in 0..STENCIL {
            if b != a {
                let node_b = (s + b) as f64;
                num *= x - node_b;
                den *= node_a - node_b;
            }
        }
        idx[a] = s + a;
        w[a] = num / den;
    }
    (idx, w)
}

/// Interpolate ladder values (implicit 0 at the origin, node `i` at radius
/// `(i+1) h`) at radius `r`.
pub fn ladder_interp(values: &[Complex64], r: f64, h: f64) -> Complex64 {
    let (idx, w) = ladder_stencil(r / h, values.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..STENCIL {
        if idx[a] == 0 {
            continue;
        }
        acc += w[a] * values[idx[a] - 1];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_matches_known_values() {
        assert_relative_eq!(gamma(1.0), 1.0, max_relative = 1e-13);
        assert_relative_eq!(gamma(0.5), std::f64::consts::PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(gamma(5.0), 24.0, max_relative = 1e-13);
        assert_relative_eq!(gamma(1.5), 0.5 * std::f64::consts::PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(beta(2.5, 3.5), gamma(2.5) * gamma(3.5) / gamma(6.0), max_relative = 1e-12);
    }

    #[test]
    fn jacobi_rule_integrates_monomials_exactly() {
        // weight (1-t)^0.5 t^{-0.5}: int t^q w dt = B(q + 0.5, 1.5)
        let rule = gauss_jacobi_01(12, 0.5, -0.5);
        for q in 0..20 {
            let exact = beta(q as f64 + 0.5, 1.5);
            let got: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&t, &w)| w * t.powi(q))
                .sum();
            assert_relative_eq!(got, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn legendre_rule_is_exact_on_polynomials() {
        let rule = gauss_legendre_01(8);
        for q in 0..16 {
            let exact = 1.0 / (q as f64 + 1.0);
            let got: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&t, &w)| w * t.powi(q))
                .sum();
            assert_relative_eq!(got, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn adaptive_simpson_gaussian() {
        let v = adaptive_simpson_real(|x| (-x * x).exp(), -8.0, 8.0, 1e-12);
        assert_relative_eq!(v, std::f64::consts::PI.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn ladder_interp_reproduces_quintics() {
        let h = 0.1;
        let n = 24;
        let f = |r: f64| 2.0 * r + 0.3 * r * r - 0.7 * r * r * r + 0.11 * r.powi(5);
        let vals: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(f((i + 1) as f64 * h), 0.0))
            .collect();
        for &r in &[0.03, 0.1, 0.15, 0.77, 1.2, 2.39, 2.4] {
            let got = ladder_interp(&vals, r, h);
            assert_relative_eq!(got.re, f(r), max_relative = 1e-11, epsilon = 1e-13);
        }
    }
}
