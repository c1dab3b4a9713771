//! The bilinear convolution block: a double Borel convolution in the two
//! radial variables tensored with the frequency convolution.
//!
//! Per tau1-ray the term is assembled as
//! `N(j1, j2, m) = sum_{a,b,c,d} M1[j1;a,b] W[j2;c,d] V_{a,c,b,d}(m)` where
//! `V` is the frequency convolution of the multiplier-scaled slices of the two
//! inputs. On the uniform frequency grid every shift lands on a node, so `V`
//! is evaluated for all spatial pairs at once through zero-padded FFTs, and
//! the radial contractions become small per-frequency matrix products.

use super::radial::PairTensor;
use num_complex::Complex64;
use rustfft::Fft;
use std::sync::Arc;

pub(crate) struct ConvPlan {
    pub len: usize,
    pub fwd: Arc<dyn Fft<f64>>,
    pub inv: Arc<dyn Fft<f64>>,
}

impl ConvPlan {
    pub fn new(nm: usize) -> Self {
        let len = (2 * nm - 1).next_power_of_two();
        let mut planner = rustfft::FftPlanner::new();
        Self {
            len,
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
        }
    }
}

/// Contract one tau1-ray.
///
/// `f_slice`, `g_slice`: `[len1 x n2 x nm]` complex values (already multiplier
/// scaled: `f = P1(im) omega_a`, `g = w_m P2(im) omega_b`).
/// Output: `[len1 x n2 x nm]`, the raw tensor contraction (no prefactors).
#[allow(clippy::too_many_arguments)]
pub(crate) fn contract_ray(
    plan: &ConvPlan,
    m1: &PairTensor,
    w2: &PairTensor,
    f_slice: &[Complex64],
    g_slice: &[Complex64],
    len1: usize,
    n2: usize,
    nm: usize,
) -> Vec<Complex64> {
    let lf = plan.len;
    let zero = Complex64::new(0.0, 0.0);
    let offset = (nm - 1) / 2;

    // forward transforms of every spatial fiber
    let mut fhat = vec![zero; len1 * n2 * lf];
    let mut ghat = vec![zero; len1 * n2 * lf];
    for (src, dst) in [(f_slice, &mut fhat), (g_slice, &mut ghat)] {
        for s in 0..len1 * n2 {
            let fiber = &mut dst[s * lf..(s + 1) * lf];
            fiber[..nm].copy_from_slice(&src[s * nm..(s + 1) * nm]);
            plan.fwd.process(fiber);
        }
    }

    // per-frequency contraction: nhat(j1, j2, xi)
    let mut nhat = vec![zero; len1 * n2 * lf];
    let mut fxi = vec![zero; len1 * n2];
    let mut gxi = vec![zero; len1 * n2];
    let mut pad = vec![zero; len1 * n2];
    let mut zab = vec![zero; len1 * len1];
    for xi in 0..lf {
        for s in 0..len1 * n2 {
            fxi[s] = fhat[s * lf + xi];
            gxi[s] = ghat[s * lf + xi];
        }
        for j2 in 0..n2 {
            let w = w2.slab(j2);
            // pad(a, d) = sum_c fxi(a, c) w[c, d]
            for p in pad.iter_mut() {
                *p = zero;
            }
            for a in 0..len1 {
                let frow = &fxi[a * n2..(a + 1) * n2];
                let prow = &mut pad[a * n2..(a + 1) * n2];
                for (c, &fv) in frow.iter().enumerate() {
                    if fv == zero {
                        continue;
                    }
                    let wrow = &w[c * w2.n..c * w2.n + n2];
                    for (d, &wv) in wrow.iter().enumerate() {
                        if wv != 0.0 {
                            prow[d] += fv * wv;
                        }
                    }
                }
            }
            // zab(a, b) = sum_d pad(a, d) conj-free gxi(b, d)
            for z in zab.iter_mut() {
                *z = zero;
            }
            for a in 0..len1 {
                let prow = &pad[a * n2..(a + 1) * n2];
                let zrow = &mut zab[a * len1..(a + 1) * len1];
                for b in 0..len1 {
                    let grow = &gxi[b * n2..(b + 1) * n2];
                    let mut acc = zero;
                    for d in 0..n2 {
                        acc += prow[d] * grow[d];
                    }
                    zrow[b] = acc;
                }
            }
            // nhat(j1, j2, xi) = sum_{a,b} m1[j1;a,b] zab(a,b)
            for j1 in 0..len1 {
                let slab = m1.slab(j1);
                let mut acc = zero;
                for a in 0..len1 {
                    let mrow = &slab[a * m1.n..a * m1.n + len1];
                    let zrow = &zab[a * len1..(a + 1) * len1];
                    for b in 0..len1 {
                        let mv = mrow[b];
                        if mv != 0.0 {
                            acc += mv * zrow[b];
                        }
                    }
                }
                nhat[(j1 * n2 + j2) * lf + xi] = acc;
            }
        }
    }

    // inverse transforms and extraction of the frequency window
    let mut out = vec![zero; len1 * n2 * nm];
    let scale = 1.0 / lf as f64;
    let mut fiber = vec![zero; lf];
    for s in 0..len1 * n2 {
        fiber.copy_from_slice(&nhat[s * lf..(s + 1) * lf]);
        plan.inv.process(&mut fiber);
        for i in 0..nm {
            out[s * nm + i] = fiber[i + offset] * scale;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let nm = 11;
        let plan = ConvPlan::new(nm);
        let lf = plan.len;
        let f: Vec<Complex64> = (0..nm)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let g: Vec<Complex64> = (0..nm)
            .map(|i| Complex64::new(0.3 - 0.01 * i as f64, (i as f64 * 0.7).sin() * 0.2))
            .collect();
        // direct: V_i = sum_q f[i - q + offset] g[q]
        let offset = (nm - 1) / 2;
        let mut direct = vec![Complex64::new(0.0, 0.0); nm];
        for i in 0..nm {
            for q in 0..nm {
                let sh = i as i64 - q as i64 + offset as i64;
                if (0..nm as i64).contains(&sh) {
                    direct[i] += f[sh as usize] * g[q];
                }
            }
        }
        // via fft
        let zero = Complex64::new(0.0, 0.0);
        let mut fh = vec![zero; lf];
        fh[..nm].copy_from_slice(&f);
        let mut gh = vec![zero; lf];
        gh[..nm].copy_from_slice(&g);
        plan.fwd.process(&mut fh);
        plan.fwd.process(&mut gh);
        let mut prod: Vec<Complex64> = fh.iter().zip(&gh).map(|(a, b)| a * b).collect();
        plan.inv.process(&mut prod);
        for i in 0..nm {
            let got = prod[i + offset] / lf as f64;
            assert!((got - direct[i]).norm() < 1e-12);
        }
    }
}
