//! Problem instances: every exponent, polynomial and forcing datum defining
//! one initial value problem of the family, plus structural validation.
//!
//! Validation is data, not exception flow: [`validate_config`] returns a
//! [`ValidationReport`] with one entry per constraint family so a front end
//! can print all violations at once.

use crate::error::EngineError;
use crate::fourier::{e_norm, FrequencyFunction, FrequencyGrid};
use crate::util::wrap_angle;
use crate::Result;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Polynomials
// ---------------------------------------------------------------------------

/// Polynomial with complex coefficients, `coeffs[j]` multiplying `X^j`.
/// Trailing zero coefficients are trimmed on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPolynomial {
    coeffs: Vec<Complex64>,
}

impl ComplexPolynomial {
    pub fn new(mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(EngineError::Config(
                "polynomial needs at least one coefficient".into(),
            ));
        }
        while coeffs.len() > 1 && coeffs.last().map_or(false, |c| c.norm() == 0.0) {
            coeffs.pop();
        }
        Ok(Self { coeffs })
    }

    pub fn constant(c: Complex64) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn one() -> Self {
        Self::constant(Complex64::new(1.0, 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    /// Degree; 0 for the zero polynomial (its leading coefficient is 0).
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> Complex64 {
        *self.coeffs.last().expect("coeffs nonempty")
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Horner evaluation at a complex point.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    /// Evaluation at `i m`, the form every divisor and multiplier uses.
    #[inline]
    pub fn eval_im(&self, m: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, m))
    }
}

/// Polynomial in `\partial_z` whose coefficients are truncated power series in
/// the perturbation parameter: `P(X, eps) = sum_j (sum_s c_{j,s} eps^s) X^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsPolynomial {
    /// `coeffs[j]` is the eps-series of the coefficient of `X^j`.
    pub coeffs: Vec<Vec<Complex64>>,
}

impl EpsPolynomial {
    pub fn constant_one() -> Self {
        Self {
            coeffs: vec![vec![Complex64::new(1.0, 0.0)]],
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Coefficient polynomial at a fixed `eps`.
    pub fn at_eps(&self, eps: Complex64) -> ComplexPolynomial {
        let coeffs = self
            .coeffs
            .iter()
            .map(|series| {
                let mut acc = Complex64::new(0.0, 0.0);
                for &c in series.iter().rev() {
                    acc = acc * eps + c;
                }
                acc
            })
            .collect();
        ComplexPolynomial { coeffs }
    }

    /// `d^r/d eps^r` of the coefficient polynomial at `eps = 0`, as a plain
    /// polynomial in `X` (used by the formal recursion).
    pub fn eps_derivative_at_zero(&self, r: usize) -> ComplexPolynomial {
        let fact: f64 = (1..=r).map(|j| j as f64).product();
        let coeffs = self
            .coeffs
            .iter()
            .map(|series| series.get(r).copied().unwrap_or_default() * fact)
            .collect();
        ComplexPolynomial { coeffs }
    }
}

// ---------------------------------------------------------------------------
// Forcing
// ---------------------------------------------------------------------------

/// Named closed-form frequency profiles available to forcing terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ForcingProfile {
    Zero,
    /// `(1+|m|)^{-mu} e^{-beta |m|}`, the unit-norm profile of `E_{(beta,mu)}`.
    InverseWeight { beta: f64, mu: f64 },
    /// `e^{-width m^2}`.
    Gaussian { width: f64 },
}

impl ForcingProfile {
    pub fn eval(&self, m: f64) -> f64 {
        match self {
            ForcingProfile::Zero => 0.0,
            ForcingProfile::InverseWeight { beta, mu } => {
                (1.0 + m.abs()).powf(-mu) * (-beta * m.abs()).exp()
            }
            ForcingProfile::Gaussian { width } => (-width * m * m).exp(),
        }
    }
}

/// One forcing monomial `F_{n1,n2}(m, eps) T1^{n1} T2^{n2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingTerm {
    pub n1: u32,
    pub n2: u32,
    pub amplitude: Complex64,
    pub profile: ForcingProfile,
    /// eps-series multiplier, `[1]` when the term does not depend on eps.
    pub eps_series: Vec<Complex64>,
}

/// The forcing data: finitely many `F_{n1,n2}` together with the geometric
/// envelope constants `K0`, `T0` they must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    pub terms: Vec<ForcingTerm>,
    pub k0: f64,
    pub t0: f64,
}

impl ForcingSpec {
    pub fn zero() -> Self {
        Self {
            terms: Vec::new(),
            k0: 1.0,
            t0: 1.0,
        }
    }

    pub fn n_max(&self) -> u32 {
        self.terms.iter().map(|t| t.n1.max(t.n2)).max().unwrap_or(0)
    }

    /// `F_{n1,n2}(m, eps)`; zero when no term carries the index pair.
    pub fn eval(&self, n1: u32, n2: u32, m: f64, eps: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            if t.n1 == n1 && t.n2 == n2 {
                let mut s = Complex64::new(0.0, 0.0);
                for &c in t.eps_series.iter().rev() {
                    s = s * eps + c;
                }
                acc += t.amplitude * t.profile.eval(m) * s;
            }
        }
        acc
    }

    /// Coefficient of `eps^r` in `F_{n1,n2}(m, eps)`.
    pub fn eval_eps_coeff(&self, n1: u32, n2: u32, m: f64, r: usize) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            if t.n1 == n1 && t.n2 == n2 {
                acc += t.amplitude * t.profile.eval(m) * t.eps_series.get(r).copied().unwrap_or_default();
            }
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Sectorial annuli and resolution parameters
// ---------------------------------------------------------------------------

/// Sectorial annulus `{ z : r_min < |z| < r_max, arg z in (arg_min, arg_max) }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub r_min: f64,
    pub r_max: f64,
    pub arg_min: f64,
    pub arg_max: f64,
}

impl Annulus {
    pub fn contains(&self, z: Complex64) -> bool {
        let r = z.norm();
        if !(self.r_min < r && r < self.r_max) {
            return false;
        }
        let center = 0.5 * (self.arg_min + self.arg_max);
        let half = 0.5 * (self.arg_max - self.arg_min);
        wrap_angle(z.arg() - center).abs() < half
    }
}

/// Resolution parameters for grids derived from a config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// radial nodes per ray
    pub n_radial: usize,
    /// angular rays covering the tau1 disc
    pub n_angles: usize,
    /// frequency truncation and node count (odd)
    pub m_max: f64,
    pub n_m: usize,
    /// radial extents in units of |eps|: r_j_max = x_j_max * |eps|
    pub x1_max: f64,
    pub x2_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_radial: 24,
            n_angles: 16,
            m_max: 10.0,
            n_m: 41,
            x1_max: 8.0,
            x2_max: 4.0,
        }
    }
}

impl GridSpec {
    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.m_max, self.n_m)
    }
}

// ---------------------------------------------------------------------------
// Problem configuration
// ---------------------------------------------------------------------------

/// A complete instance of the initial value problem.
///
/// Index conventions: the `*_top*` fields are the data of the three principal
/// operators (orders `delta_top1`, `tilde_delta_top2`, `tilde_delta_top3`);
/// the `*_lower*` arrays are indexed by `l1 = 0..cap_d1-1`, `l2 = 0..cap_d2-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub k1: u32,
    pub k2: u32,
    pub cap_d1: usize,
    pub cap_d2: usize,

    pub delta_top1: u32,
    pub tilde_delta_top2: u32,
    pub tilde_delta_top3: u32,
    pub d_top1: u32,
    pub tilde_d_top2: u32,
    pub tilde_d_top3: u32,
    pub big_delta1: u32,
    pub tilde_big_delta2: u32,
    pub tilde_big_delta3: u32,

    pub d_lower1: Vec<u32>,
    pub delta_lower1: Vec<u32>,
    pub tilde_d_lower2: Vec<u32>,
    pub tilde_delta_lower2: Vec<u32>,
    pub big_delta_lower: Vec<Vec<u32>>,

    pub q: ComplexPolynomial,
    pub r_top12: ComplexPolynomial,
    pub r_top3: ComplexPolynomial,
    pub r_lower: Vec<Vec<ComplexPolynomial>>,
    pub p1: EpsPolynomial,
    pub p2: EpsPolynomial,

    pub forcing: ForcingSpec,

    pub eps0: f64,
    pub rho: f64,
    pub beta: f64,
    pub mu: f64,
    pub beta_prime: f64,
    pub annulus_r3q: Annulus,
    pub annulus_r12q: Annulus,

    pub grid: GridSpec,
}

/// Exponents defined by the lower-order splitting identities
/// `d_{l1} = delta_{l1}(k1+1) + d_{l1,k1}` and
/// `td_{l2} = (tdelta_{l2}-1)(k2+1) + d_{l2,k2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedExponents {
    pub d_l1_k1: Vec<u32>,
    pub d_l2_k2: Vec<u32>,
}

/// One named constraint outcome with a human-readable witness on failure.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintCheck {
    pub name: &'static str,
    pub passed: bool,
    pub witness: String,
}

/// Outcome of [`validate_config`]: one entry per constraint family.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_names(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Plain-text table, one row per constraint.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{status:4}  {:24}  {}\n", c.name, c.witness));
        }
        out
    }
}

impl ProblemConfig {
    /// All lower-order `(l1, l2, Delta_{l1,l2}, R_{l1,l2})` quadruples.
    pub fn lower_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.cap_d1).flat_map(move |l1| (0..self.cap_d2).map(move |l2| (l1, l2)))
    }
}

fn check(name: &'static str, passed: bool, witness: String) -> ConstraintCheck {
    ConstraintCheck {
        name,
        passed,
        witness,
    }
}

/// Run every structural constraint of the problem family on `cfg`.
///
/// The m-dependent checks (divisor nonvanishing, annulus membership) are
/// sampled on the frequency grid derived from `cfg.grid`; since the ratio of
/// two equal-degree polynomials converges as `|m| -> inf`, the grid truncation
/// is covered by the explicit leading-coefficient limit check.
pub fn validate_config(cfg: &ProblemConfig) -> Result<ValidationReport> {
    let mut checks = Vec::new();

    if cfg.d_lower1.len() != cfg.cap_d1
        || cfg.delta_lower1.len() != cfg.cap_d1
        || cfg.tilde_d_lower2.len() != cfg.cap_d2
        || cfg.tilde_delta_lower2.len() != cfg.cap_d2
        || cfg.big_delta_lower.len() != cfg.cap_d1
        || cfg.big_delta_lower.iter().any(|row| row.len() != cfg.cap_d2)
        || cfg.r_lower.len() != cfg.cap_d1
        || cfg.r_lower.iter().any(|row| row.len() != cfg.cap_d2)
    {
        return Err(EngineError::Config(
            "lower-order arrays must have lengths cap_d1 / cap_d2".into(),
        ));
    }
    if cfg.k1 == 0 || cfg.k2 == 0 || cfg.cap_d1 < 2 || cfg.cap_d2 < 2 {
        return Err(EngineError::Config(
            "need k1, k2 >= 1 and cap_d1, cap_d2 >= 2".into(),
        ));
    }

    let m_grid = cfg.grid.frequency_grid()?;

    // 1. 2/k2 < tilde_delta_top2 <= tilde_delta_top3
    {
        let lhs = 2.0 / cfg.k2 as f64;
        let ok = lhs < cfg.tilde_delta_top2 as f64 && cfg.tilde_delta_top2 <= cfg.tilde_delta_top3;
        checks.push(check(
            "delta_chain",
            ok,
            format!(
                "2/k2 = {lhs} < tdelta_top2 = {} <= tdelta_top3 = {}",
                cfg.tilde_delta_top2, cfg.tilde_delta_top3
            ),
        ));
    }

    // 2. strictly increasing delta sequences, capped by the top orders
    {
        let mut ok = true;
        let mut wit = String::from("delta_lower1 and tilde_delta_lower2 strictly increasing");
        let chain1: Vec<u32> = cfg
            .delta_lower1
            .iter()
            .copied()
            .chain(std::iter::once(cfg.delta_top1))
            .collect();
        let chain2: Vec<u32> = cfg
            .tilde_delta_lower2
            .iter()
            .copied()
            .chain(std::iter::once(cfg.tilde_delta_top2))
            .collect();
        for w in chain1.windows(2) {
            if w[0] >= w[1] {
                ok = false;
                wit = format!("delta sequence not increasing at {} >= {}", w[0], w[1]);
            }
        }
        for w in chain2.windows(2) {
            if w[0] >= w[1] {
                ok = false;
                wit = format!("tilde delta sequence not increasing at {} >= {}", w[0], w[1]);
            }
        }
        checks.push(check("delta_monotone", ok, wit));
    }

    // 3. the two sum identities
    {
        let s1 = cfg.big_delta1 as i64 + cfg.tilde_big_delta2 as i64
            - cfg.d_top1 as i64
            - cfg.tilde_d_top2 as i64
            - 1
            + cfg.delta_top1 as i64
            + cfg.tilde_delta_top2 as i64;
        let s2 = cfg.tilde_big_delta3 as i64 - cfg.tilde_d_top3 as i64 + cfg.tilde_delta_top3 as i64 - 1;
        checks.push(check(
            "sum_identities",
            s1 == 0 && s2 == 0,
            format!("bigDelta1+tbigDelta2-d1-td2-1+delta1+tdelta2 = {s1}; tbigDelta3-td3+tdelta3-1 = {s2}"),
        ));
    }

    // 4. d_top1 = delta_top1 (k1 + 1)
    {
        let rhs = cfg.delta_top1 * (cfg.k1 + 1);
        checks.push(check(
            "d1_identity",
            cfg.d_top1 == rhs,
            format!("d_top1 = {} vs delta_top1(k1+1) = {rhs}", cfg.d_top1),
        ));
    }

    // 5. k2 + 1 + tilde_d_j = tilde_delta_j (k2 + 1) for j = 2, 3
    {
        let l2 = cfg.k2 + 1 + cfg.tilde_d_top2;
        let r2 = cfg.tilde_delta_top2 * (cfg.k2 + 1);
        let l3 = cfg.k2 + 1 + cfg.tilde_d_top3;
        let r3 = cfg.tilde_delta_top3 * (cfg.k2 + 1);
        checks.push(check(
            "dtilde_identity",
            l2 == r2 && l3 == r3,
            format!("j=2: {l2} vs {r2}; j=3: {l3} vs {r3}"),
        ));
    }

    // 6. strict lower bounds on the lower-order exponents
    {
        let mut ok = true;
        let mut wit = String::from("all strict inequalities hold");
        for l1 in 0..cfg.cap_d1 {
            let lhs = cfg.d_lower1[l1] as i64;
            let rhs = cfg.delta_lower1[l1] as i64 * (cfg.k1 as i64 + 1);
            if lhs <= rhs {
                ok = false;
                wit = format!("d_lower1[{l1}] = {lhs} <= delta_lower1[{l1}](k1+1) = {rhs}");
            }
        }
        for l2 in 0..cfg.cap_d2 {
            let lhs = cfg.tilde_d_lower2[l2] as i64;
            let rhs = (cfg.tilde_delta_lower2[l2] as i64 - 1) * (cfg.k2 as i64 + 1);
            if lhs <= rhs {
                ok = false;
                wit = format!("tilde_d_lower2[{l2}] = {lhs} <= (tdelta-1)(k2+1) = {rhs}");
            }
        }
        let bound = cfg.delta_top1 as i64 * cfg.k1 as i64
            + (cfg.tilde_delta_top2 as i64 - 1) * cfg.k2 as i64;
        for (l1, l2) in cfg.lower_pairs() {
            let v = cfg.big_delta_lower[l1][l2] as i64;
            if v <= bound {
                ok = false;
                wit = format!("big_delta_lower[{l1}][{l2}] = {v} <= delta_top1*k1+(tdelta_top2-1)*k2 = {bound}");
            }
        }
        checks.push(check("strict_lower_bounds", ok, wit));
    }

    // 7. degree conditions
    {
        let dq = cfg.q.degree();
        let mut ok = dq == cfg.r_top3.degree() && dq == cfg.r_top12.degree();
        let mut wit = format!(
            "deg Q = {dq}, deg R_top3 = {}, deg R_top12 = {}",
            cfg.r_top3.degree(),
            cfg.r_top12.degree()
        );
        for (l1, l2) in cfg.lower_pairs() {
            if cfg.r_lower[l1][l2].degree() > dq && !cfg.r_lower[l1][l2].is_zero() {
                ok = false;
                wit = format!("deg R_lower[{l1}][{l2}] = {} > deg Q = {dq}", cfg.r_lower[l1][l2].degree());
            }
        }
        for (name, p) in [("P1", &cfg.p1), ("P2", &cfg.p2)] {
            if p.degree() > dq {
                ok = false;
                wit = format!("deg {name} = {} > deg Q = {dq}", p.degree());
            }
        }
        checks.push(check("degree_conditions", ok, wit));
    }

    // 8. Q(im) != 0 on the frequency grid
    {
        let mut min_abs = f64::INFINITY;
        let mut at = 0.0;
        for &m in &m_grid.nodes {
            let v = cfg.q.eval_im(m).norm();
            if v < min_abs {
                min_abs = v;
                at = m;
            }
        }
        checks.push(check(
            "q_nonvanishing",
            min_abs > 1e-12,
            format!("min |Q(im)| = {min_abs:.3e} at m = {at}"),
        ));
    }

    // 9. mu > max(deg P1, deg P2) + 1
    {
        let need = cfg.p1.degree().max(cfg.p2.degree()) as f64 + 1.0;
        checks.push(check(
            "mu_bound",
            cfg.mu > need,
            format!("mu = {} vs max(deg P1, deg P2) + 1 = {need}", cfg.mu),
        ));
    }

    // 10. annulus membership of the two ratios on the grid
    {
        let mut ok = true;
        let mut wit = String::from("ratios inside their annuli at every grid node");
        for &m in &m_grid.nodes {
            let q = cfg.q.eval_im(m);
            if q.norm() <= 1e-12 {
                continue; // reported by q_nonvanishing
            }
            let ratio3 = cfg.r_top3.eval_im(m) / q;
            let ratio12 = cfg.r_top12.eval_im(m) / q;
            if !cfg.annulus_r3q.contains(ratio3) {
                ok = false;
                wit = format!("R_top3(im)/Q(im) = {ratio3} outside annulus at m = {m}");
                break;
            }
            if !cfg.annulus_r12q.contains(ratio12) {
                ok = false;
                wit = format!("R_top12(im)/Q(im) = {ratio12} outside annulus at m = {m}");
                break;
            }
        }
        checks.push(check("annulus_membership", ok, wit));
    }

    // 11. the |m| -> inf limit of both ratios (leading coefficients) is inside
    {
        let ql = cfg.q.leading();
        let lim3 = cfg.r_top3.leading() / ql;
        let lim12 = cfg.r_top12.leading() / ql;
        let ok = cfg.annulus_r3q.contains(lim3) && cfg.annulus_r12q.contains(lim12);
        checks.push(check(
            "annulus_limit",
            ok,
            format!("leading-coefficient limits {lim3} and {lim12}"),
        ));
    }

    Ok(ValidationReport { checks })
}

/// Derive the splitting exponents `d_{l1,k1}`, `d_{l2,k2}`.
pub fn derive_exponents(cfg: &ProblemConfig) -> Result<DerivedExponents> {
    let mut d_l1_k1 = Vec::with_capacity(cfg.cap_d1);
    for l1 in 0..cfg.cap_d1 {
        let v = cfg.d_lower1[l1] as i64 - cfg.delta_lower1[l1] as i64 * (cfg.k1 as i64 + 1);
        if v <= 0 {
            return Err(EngineError::Config(format!(
                "derived exponent d_l1_k1[{l1}] = {v} not positive; strict_lower_bounds violated upstream"
            )));
        }
        d_l1_k1.push(v as u32);
    }
    let mut d_l2_k2 = Vec::with_capacity(cfg.cap_d2);
    for l2 in 0..cfg.cap_d2 {
        let v = cfg.tilde_d_lower2[l2] as i64
            - (cfg.tilde_delta_lower2[l2] as i64 - 1) * (cfg.k2 as i64 + 1);
        if v <= 0 {
            return Err(EngineError::Config(format!(
                "derived exponent d_l2_k2[{l2}] = {v} not positive; strict_lower_bounds violated upstream"
            )));
        }
        d_l2_k2.push(v as u32);
    }
    Ok(DerivedExponents { d_l1_k1, d_l2_k2 })
}

/// Verify the forcing envelope `||F_{n1,n2}|| <= K0 (1/T0)^{n1+n2}` for all
/// `1 <= n1, n2 <= n_max` on the grid; returns the pass flag and the tightest
/// ratio `max ||F|| T0^{n1+n2} / K0` (0 for empty forcing).
pub fn check_forcing_bound(
    spec: &ForcingSpec,
    beta: f64,
    mu: f64,
    n_max: u32,
    grid: &FrequencyGrid,
    eps0: f64,
) -> (bool, f64) {
    let grid = Arc::new(grid.clone());
    let mut worst: f64 = 0.0;
    let eps_samples = [
        Complex64::new(0.0, 0.0),
        Complex64::new(eps0, 0.0),
        Complex64::new(-eps0, 0.0),
        Complex64::new(0.0, eps0),
        Complex64::new(0.0, -eps0),
    ];
    for n1 in 1..=n_max {
        for n2 in 1..=n_max {
            for &eps in &eps_samples {
                let h = FrequencyFunction::from_fn(grid.clone(), beta, mu, |m| {
                    spec.eval(n1, n2, m, eps)
                });
                let norm = e_norm(&h);
                let ratio = norm * spec.t0.powi((n1 + n2) as i32) / spec.k0;
                worst = worst.max(ratio);
            }
        }
    }
    (worst <= 1.0 + 1e-9, worst)
}

// ---------------------------------------------------------------------------
// JSON ingestion
// ---------------------------------------------------------------------------

fn c(pair: [f64; 2]) -> Complex64 {
    Complex64::new(pair[0], pair[1])
}

fn poly(pairs: &[[f64; 2]]) -> Result<ComplexPolynomial> {
    ComplexPolynomial::new(pairs.iter().map(|&p| c(p)).collect())
}

#[derive(Debug, Deserialize)]
struct RawForcingTerm {
    n1: u32,
    n2: u32,
    #[serde(default = "default_amplitude")]
    amplitude: [f64; 2],
    #[serde(flatten)]
    profile: ForcingProfile,
    #[serde(default)]
    eps_series: Option<Vec<[f64; 2]>>,
}

fn default_amplitude() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Deserialize)]
struct RawForcing {
    k0: f64,
    t0: f64,
    #[serde(default)]
    terms: Vec<RawForcingTerm>,
}

#[derive(Debug, Deserialize)]
struct RawConfig {
    k1: u32,
    k2: u32,
    cap_d1: usize,
    cap_d2: usize,
    delta_top1: u32,
    tilde_delta_top2: u32,
    tilde_delta_top3: u32,
    d_top1: u32,
    tilde_d_top2: u32,
    tilde_d_top3: u32,
    big_delta1: u32,
    tilde_big_delta2: u32,
    tilde_big_delta3: u32,
    d_lower1: Vec<u32>,
    delta_lower1: Vec<u32>,
    tilde_d_lower2: Vec<u32>,
    tilde_delta_lower2: Vec<u32>,
    big_delta_lower: Vec<Vec<u32>>,
    q: Vec<[f64; 2]>,
    r_top12: Vec<[f64; 2]>,
    r_top3: Vec<[f64; 2]>,
    r_lower: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(default)]
    p1: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default)]
    p2: Option<Vec<Vec<[f64; 2]>>>,
    forcing: RawForcing,
    eps0: f64,
    rho: f64,
    beta: f64,
    mu: f64,
    beta_prime: f64,
    annulus_r3q: Annulus,
    annulus_r12q: Annulus,
    #[serde(default)]
    grid: Option<GridSpec>,
}

fn eps_poly(raw: Option<Vec<Vec<[f64; 2]>>>) -> EpsPolynomial {
    match raw {
        None => EpsPolynomial::constant_one(),
        Some(rows) => EpsPolynomial {
            coeffs: rows
                .into_iter()
                .map(|series| series.into_iter().map(c).collect())
                .collect(),
        },
    }
}

impl ProblemConfig {
    /// Parse a configuration from its JSON text form.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text)
            .map_err(|e| EngineError::Input(format!("config parse failure: {e}")))?;
        let mut r_lower = Vec::with_capacity(raw.r_lower.len());
        for row in &raw.r_lower {
            let mut out = Vec::with_capacity(row.len());
            for p in row {
                out.push(poly(p)?);
            }
            r_lower.push(out);
        }
        let forcing = ForcingSpec {
            terms: raw
                .forcing
                .terms
                .into_iter()
                .map(|t| ForcingTerm {
                    n1: t.n1,
                    n2: t.n2,
                    amplitude: c(t.amplitude),
                    profile: t.profile,
                    eps_series: t
                        .eps_series
                        .map(|s| s.into_iter().map(c).collect())
                        .unwrap_or_else(|| vec![Complex64::new(1.0, 0.0)]),
                })
                .collect(),
            k0: raw.forcing.k0,
            t0: raw.forcing.t0,
        };
        Ok(ProblemConfig {
            k1: raw.k1,
            k2: raw.k2,
            cap_d1: raw.cap_d1,
            cap_d2: raw.cap_d2,
            delta_top1: raw.delta_top1,
            tilde_delta_top2: raw.tilde_delta_top2,
            tilde_delta_top3: raw.tilde_delta_top3,
            d_top1: raw.d_top1,
            tilde_d_top2: raw.tilde_d_top2,
            tilde_d_top3: raw.tilde_d_top3,
            big_delta1: raw.big_delta1,
            tilde_big_delta2: raw.tilde_big_delta2,
            tilde_big_delta3: raw.tilde_big_delta3,
            d_lower1: raw.d_lower1,
            delta_lower1: raw.delta_lower1,
            tilde_d_lower2: raw.tilde_d_lower2,
            tilde_delta_lower2: raw.tilde_delta_lower2,
            big_delta_lower: raw.big_delta_lower,
            q: poly(&raw.q)?,
            r_top12: poly(&raw.r_top12)?,
            r_top3: poly(&raw.r_top3)?,
            r_lower,
            p1: eps_poly(raw.p1),
            p2: eps_poly(raw.p2),
            forcing,
            eps0: raw.eps0,
            rho: raw.rho,
            beta: raw.beta,
            mu: raw.mu,
            beta_prime: raw.beta_prime,
            annulus_r3q: raw.annulus_r3q,
            annulus_r12q: raw.annulus_r12q,
            grid: raw.grid.unwrap_or_default(),
        })
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

// ---------------------------------------------------------------------------
// Reference instance used across the test suites
// ---------------------------------------------------------------------------

/// The admissible reference tuple: `k = (1, 2)`, both principal orders 2 and
/// unit polynomials. Forcing defaults to a single `F_{1,1}` inverse-weight
/// term of the given amplitude.
pub fn reference_config(forcing_amplitude: f64) -> ProblemConfig {
    let one = ComplexPolynomial::one();
    let annulus = Annulus {
        r_min: 0.5,
        r_max: 2.0,
        arg_min: -0.5,
        arg_max: 0.5,
    };
    let beta = 1.0;
    let mu = 2.5;
    let terms = if forcing_amplitude == 0.0 {
        Vec::new()
    } else {
        vec![ForcingTerm {
            n1: 1,
            n2: 1,
            amplitude: Complex64::new(forcing_amplitude, 0.0),
            profile: ForcingProfile::InverseWeight { beta, mu },
            eps_series: vec![Complex64::new(1.0, 0.0)],
        }]
    };
    ProblemConfig {
        k1: 1,
        k2: 2,
        cap_d1: 2,
        cap_d2: 2,
        delta_top1: 2,
        tilde_delta_top2: 2,
        tilde_delta_top3: 2,
        d_top1: 4,
        tilde_d_top2: 3,
        tilde_d_top3: 3,
        big_delta1: 2,
        tilde_big_delta2: 2,
        tilde_big_delta3: 2,
        d_lower1: vec![1, 3],
        delta_lower1: vec![0, 1],
        tilde_d_lower2: vec![0, 1],
        tilde_delta_lower2: vec![0, 1],
        big_delta_lower: vec![vec![5, 5], vec![5, 5]],
        q: one.clone(),
        r_top12: one.clone(),
        r_top3: one.clone(),
        r_lower: vec![vec![one.clone(), one.clone()], vec![one.clone(), one]],
        p1: EpsPolynomial::constant_one(),
        p2: EpsPolynomial::constant_one(),
        forcing: ForcingSpec {
            terms,
            k0: forcing_amplitude.max(1e-12),
            t0: 1.0,
        },
        eps0: 0.2,
        rho: 1.0,
        beta,
        mu,
        beta_prime: 0.5,
        annulus_r3q: annulus,
        annulus_r12q: annulus,
        grid: GridSpec::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_tuple_passes_all_checks() {
        let cfg = reference_config(0.01);
        let report = validate_config(&cfg).unwrap();
        assert!(report.passed(), "failures: {:?}", report.failed_names());
        assert_eq!(report.checks.len(), 11);
    }

    #[test]
    fn tilde_delta_top2_violation_is_named() {
        // tdelta_top2 = 1 breaks 2/k2 < tdelta_top2 (tightest at k2 = 2)
        let mut cfg = reference_config(0.0);
        cfg.tilde_delta_top2 = 1;
        let report = validate_config(&cfg).unwrap();
        assert!(!report.get("delta_chain").unwrap().passed);
    }

    #[test]
    fn derive_exponents_reference() {
        let cfg = reference_config(0.0);
        let de = derive_exponents(&cfg).unwrap();
        // d_lower1 = (1, 3), delta_lower1 = (0, 1), k1 = 1: d - 2 delta = (1, 1)
        assert_eq!(de.d_l1_k1, vec![1, 1]);
        // tilde_d_lower2 = (0, 1), tilde_delta_lower2 = (0, 1), k2 = 2:
        // d + (1 - tdelta) * 3 = (3, 1)
        assert_eq!(de.d_l2_k2, vec![3, 1]);
        // reconstruction is the identity
        for l1 in 0..cfg.cap_d1 {
            assert_eq!(
                cfg.d_lower1[l1],
                cfg.delta_lower1[l1] * (cfg.k1 + 1) + de.d_l1_k1[l1]
            );
        }
        for l2 in 0..cfg.cap_d2 {
            let lhs = cfg.tilde_d_lower2[l2] as i64;
            let rhs = (cfg.tilde_delta_lower2[l2] as i64 - 1) * (cfg.k2 as i64 + 1)
                + de.d_l2_k2[l2] as i64;
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn derive_exponents_rejects_equality_case() {
        let mut cfg = reference_config(0.0);
        cfg.d_lower1[1] = 2; // equals delta * (k1+1) exactly
        assert!(derive_exponents(&cfg).is_err());
    }

    #[test]
    fn forcing_bound_examples() {
        let grid = FrequencyGrid::new(10.0, 201).unwrap();
        let (beta, mu) = (1.0, 2.5);
        // zero forcing
        let (ok, ratio) = check_forcing_bound(&ForcingSpec::zero(), beta, mu, 3, &grid, 0.1);
        assert!(ok);
        assert_eq!(ratio, 0.0);
        // unit inverse-weight term: norm exactly 1
        let spec = ForcingSpec {
            terms: vec![ForcingTerm {
                n1: 1,
                n2: 1,
                amplitude: Complex64::new(1.0, 0.0),
                profile: ForcingProfile::InverseWeight { beta, mu },
                eps_series: vec![Complex64::new(1.0, 0.0)],
            }],
            k0: 1.0,
            t0: 1.0,
        };
        let (ok, ratio) = check_forcing_bound(&spec, beta, mu, 1, &grid, 0.1);
        assert!(ok);
        assert!((ratio - 1.0).abs() < 1e-12);
        // halving K0 doubles the ratio and fails
        let mut spec2 = spec;
        spec2.k0 = 0.5;
        let (ok, ratio) = check_forcing_bound(&spec2, beta, mu, 1, &grid, 0.1);
        assert!(!ok);
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn annulus_refinement_never_flips_fail_to_pass() {
        // refined uniform grids contain the coarse nodes, so a coarse failure
        // persists under refinement
        let mut cfg = reference_config(0.0);
        cfg.r_top3 = ComplexPolynomial::new(vec![Complex64::new(2.1, 0.0)]).unwrap();
        cfg.grid.n_m = 41;
        let coarse = validate_config(&cfg).unwrap();
        assert!(!coarse.get("annulus_membership").unwrap().passed);
        cfg.grid.n_m = 81;
        let fine = validate_config(&cfg).unwrap();
        assert!(!fine.get("annulus_membership").unwrap().passed);
    }

    #[test]
    fn json_round_trip_reference() {
        let text = r#"{
            "k1": 1, "k2": 2, "cap_d1": 2, "cap_d2": 2,
            "delta_top1": 2, "tilde_delta_top2": 2, "tilde_delta_top3": 2,
            "d_top1": 4, "tilde_d_top2": 3, "tilde_d_top3": 3,
            "big_delta1": 2, "tilde_big_delta2": 2, "tilde_big_delta3": 2,
            "d_lower1": [1, 3], "delta_lower1": [0, 1],
            "tilde_d_lower2": [0, 1], "tilde_delta_lower2": [0, 1],
            "big_delta_lower": [[5, 5], [5, 5]],
            "q": [[1, 0]], "r_top12": [[1, 0]], "r_top3": [[1, 0]],
            "r_lower": [[[[1,0]], [[1,0]]], [[[1,0]], [[1,0]]]],
            "forcing": {
                "k0": 0.01, "t0": 1.0,
                "terms": [
                    {"n1": 1, "n2": 1, "amplitude": [0.01, 0],
                     "form": "inverse_weight", "beta": 1.0, "mu": 2.5}
                ]
            },
            "eps0": 0.2, "rho": 1.0, "beta": 1.0, "mu": 2.5, "beta_prime": 0.5,
            "annulus_r3q": {"r_min": 0.5, "r_max": 2.0, "arg_min": -0.5, "arg_max": 0.5},
            "annulus_r12q": {"r_min": 0.5, "r_max": 2.0, "arg_min": -0.5, "arg_max": 0.5}
        }"#;
        let cfg = ProblemConfig::from_json_str(text).unwrap();
        assert_eq!(cfg, reference_config(0.01));
    }

    #[test]
    fn malformed_polynomial_is_a_config_error() {
        assert!(ComplexPolynomial::new(vec![]).is_err());
    }
}
