//! Regular potentials `ψ` and the proliferation interpolant `h`.
//!
//! A potential is registered through the [`Potential`] trait together with
//! its convex/concave splitting `ψ = ψ1 + ψ2`; the numeric growth constants
//! live in [`PotentialSpec`] and are checked by [`validate_assumptions`]
//! before any simulation is allowed to start.

use std::fmt::Debug;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{PotentialError, Violation};

/// A `C⁴` potential with an explicit splitting.
pub trait Potential: Send + Sync + Debug {
    /// `ψ^{(order)}(s)` for `order ≤ 4`.
    fn derivative(&self, order: usize, s: f64) -> f64;
    /// `ψ1^{(order)}(s)`.
    fn psi1_derivative(&self, order: usize, s: f64) -> f64;
    /// `ψ2^{(order)}(s)`.
    fn psi2_derivative(&self, order: usize, s: f64) -> f64;
    /// Polynomial degree of `ψ`, if it is a polynomial. Used to pick an
    /// alias-free grid for `ψ'(φ)`.
    fn degree(&self) -> Option<usize> {
        None
    }

    fn value(&self, s: f64) -> f64 {
        self.derivative(0, s)
    }
}

/// Potential given by the coefficient lists (ascending powers) of `ψ1` and
/// `ψ2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialPotential {
    psi1: Vec<f64>,
    psi2: Vec<f64>,
}

impl PolynomialPotential {
    pub fn new(psi1: Vec<f64>, psi2: Vec<f64>) -> Self {
        Self { psi1, psi2 }
    }
}

fn poly_derivative(coeffs: &[f64], order: usize, s: f64) -> f64 {
    // Horner on the differentiated coefficients
    let mut acc = 0.0;
    for p in (order..coeffs.len()).rev() {
        let falling: f64 = (0..order).map(|j| (p - j) as f64).product();
        acc = acc * s + coeffs[p] * falling;
    }
    acc
}

impl Potential for PolynomialPotential {
    fn derivative(&self, order: usize, s: f64) -> f64 {
        self.psi1_derivative(order, s) + self.psi2_derivative(order, s)
    }

    fn psi1_derivative(&self, order: usize, s: f64) -> f64 {
        poly_derivative(&self.psi1, order, s)
    }

    fn psi2_derivative(&self, order: usize, s: f64) -> f64 {
        poly_derivative(&self.psi2, order, s)
    }

    fn degree(&self) -> Option<usize> {
        let deg = |c: &[f64]| c.iter().rposition(|&x| x != 0.0).unwrap_or(0);
        Some(deg(&self.psi1).max(deg(&self.psi2)))
    }
}

/// A potential together with the constants of its growth assumptions.
///
/// Lower growth is checked in the form `ψ(s) ≥ c_low |s|^ρ - c_offset`.
/// Upper bounds on `ψ` and its derivatives all share `c_psi`.
#[derive(Clone, Debug)]
pub struct PotentialSpec {
    pub potential: Arc<dyn Potential>,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub rho: f64,
    pub c_psi: f64,
    pub c_low: f64,
    pub c_offset: f64,
}

impl PotentialSpec {
    pub fn psi(&self, s: f64) -> f64 {
        self.potential.derivative(0, s)
    }

    pub fn dpsi(&self, s: f64) -> f64 {
        self.potential.derivative(1, s)
    }
}

/// `ψ(s) = ¼(s² - 1)²` split as `ψ1 = ¼s⁴ + ½s²`, `ψ2 = -s² + ¼`.
///
/// `ψ1'' = 3s² + 1` lies in `[1, 3)·(1 + s²)` and `|ψ2''| = 2`. The
/// constants follow: `R1 = 1`, `R2 = 3`, `R3 = 2`, `ρ = 4`; `|ψ''''| = 6`
/// forces `C_ψ ≥ 6`; `ψ - s⁴/8` has minimum `-1/4` at `s² = 2`.
pub fn double_well() -> PotentialSpec {
    PotentialSpec {
        potential: Arc::new(PolynomialPotential::new(
            vec![0.0, 0.0, 0.5, 0.0, 0.25],
            vec![0.25, 0.0, -1.0],
        )),
        r1: 1.0,
        r2: 3.0,
        r3: 2.0,
        rho: 4.0,
        c_psi: 6.0,
        c_low: 0.125,
        c_offset: 0.25,
    }
}

/// The same double well with the splitting `ψ1 = ¼s⁴`, `ψ2 = -½s² + ¼`.
/// `ψ1''(0) = 0`, so no positive `R1` exists; kept to document why
/// [`double_well`] uses a different splitting.
pub fn double_well_pure_quartic_split() -> PotentialSpec {
    PotentialSpec {
        potential: Arc::new(PolynomialPotential::new(
            vec![0.0, 0.0, 0.0, 0.0, 0.25],
            vec![0.25, 0.0, -0.5],
        )),
        r3: 1.0,
        ..double_well()
    }
}

/// Outcome of one sampled inequality.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Sample (or first sample of the pair) with the smallest margin.
    pub worst_s: f64,
    /// `rhs - lhs` at the worst sample; negative means violated.
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn into_result(self) -> Result<Self, PotentialError> {
        if self.passed() {
            return Ok(self);
        }
        Err(PotentialError::Violated(
            self.checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| Violation {
                    check: c.name.clone(),
                    at: c.worst_s,
                    margin: c.margin,
                })
                .collect(),
        ))
    }
}

struct Tracker {
    name: &'static str,
    worst_s: f64,
    margin: f64,
    passed: bool,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            worst_s: f64::NAN,
            margin: f64::INFINITY,
            passed: true,
        }
    }

    /// Record `lhs ≤ rhs` at `s`, allowing rounding relative to the sizes
    /// involved.
    fn le(&mut self, s: f64, lhs: f64, rhs: f64) {
        let margin = rhs - lhs;
        let slack = 1e-12 * (1.0 + lhs.abs() + rhs.abs());
        if margin < self.margin || self.worst_s.is_nan() {
            self.margin = margin;
            self.worst_s = s;
        }
        if margin < -slack || margin.is_nan() {
            self.passed = false;
        }
    }

    fn flag(&mut self, ok: bool) {
        self.passed &= ok;
        if self.worst_s.is_nan() {
            self.worst_s = 0.0;
            self.margin = if ok { 0.0 } else { -1.0 };
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.to_string(),
            passed: self.passed,
            worst_s: self.worst_s,
            margin: self.margin,
        }
    }
}

/// Uniform samples `n` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Default validation samples: `[-100, 100]`, `10⁵` points.
pub fn default_samples() -> Vec<f64> {
    linspace(-100.0, 100.0, 100_000)
}

/// Pairs used for the two-point Lipschitz checks: neighbours, mirror images
/// and a fixed long stride.
fn sample_pairs(samples: &[f64]) -> impl Iterator<Item = (f64, f64)> + '_ {
    let n = samples.len();
    let stride = (n / 7).max(1);
    (0..n).flat_map(move |i| {
        [
            (samples[i], samples[(i + 1) % n]),
            (samples[i], samples[n - 1 - i]),
            (samples[i], samples[(i + stride) % n]),
            (samples[i], 0.0),
        ]
    })
}

/// Sampled check of every growth and Lipschitz inequality on `ψ`.
///
/// Returns the full report whether or not it passes; use
/// [`ValidationReport::into_result`] to turn failures into an error.
pub fn validate_assumptions(
    spec: &PotentialSpec,
    samples: &[f64],
) -> Result<ValidationReport, PotentialError> {
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if samples.is_empty() || lo > -10.0 || hi < 10.0 {
        return Err(PotentialError::Samples);
    }
    let p = spec.potential.as_ref();
    let rho = spec.rho;
    let c = spec.c_psi;

    let mut constants = Tracker::new("constants");
    constants.flag(
        spec.r1 > 0.0
            && spec.r2 > 0.0
            && spec.r3 > 0.0
            && spec.r1 < spec.r2
            && (2.0..=6.0).contains(&rho)
            && c > 0.0
            && spec.c_low > 0.0
            && spec.c_offset >= 0.0,
    );

    let mut split = Tracker::new("splitting");
    let mut nonneg = Tracker::new("nonnegative");
    let mut psi1_lower = Tracker::new("psi1_lower");
    let mut psi1_upper = Tracker::new("psi1_upper");
    let mut psi2 = Tracker::new("psi2_bound");
    let mut growth = Tracker::new("lower_growth");
    let mut dpsi = Tracker::new("dpsi_growth");
    let mut higher = Tracker::new("higher_derivative_growth");
    for &s in samples {
        let a = s.abs();
        let psi = p.derivative(0, s);
        let parts = p.psi1_derivative(0, s) + p.psi2_derivative(0, s);
        split.le(s, (psi - parts).abs(), 1e-12 * (1.0 + psi.abs()));
        nonneg.le(s, 0.0, psi);
        let w = 1.0 + a.powf(rho - 2.0);
        let d2 = p.psi1_derivative(2, s);
        psi1_lower.le(s, spec.r1 * w, d2);
        psi1_upper.le(s, d2, spec.r2 * w);
        psi2.le(s, p.psi2_derivative(2, s).abs(), spec.r3);
        growth.le(s, spec.c_low * a.powf(rho) - spec.c_offset, psi);
        dpsi.le(s, p.derivative(1, s).abs(), c * (1.0 + a.powf(rho - 1.0)));
        for k in 2..=4 {
            higher.le(
                s,
                p.derivative(k, s).abs(),
                c * (1.0 + a.powi(6 - k as i32)),
            );
        }
    }

    let mut lip_psi = Tracker::new("psi_lipschitz");
    let mut lip_k = Tracker::new("derivative_lipschitz");
    for (s1, s2) in sample_pairs(samples) {
        let d = (s1 - s2).abs();
        let (a1, a2) = (s1.abs(), s2.abs());
        lip_psi.le(
            s1,
            (p.derivative(0, s1) - p.derivative(0, s2)).abs(),
            c * (1.0 + a1.powf(rho - 1.0) + a2.powf(rho - 1.0)) * d,
        );
        for k in 1..=3 {
            let e = 5 - k as i32;
            lip_k.le(
                s1,
                (p.derivative(k, s1) - p.derivative(k, s2)).abs(),
                c * (1.0 + a1.powi(e) + a2.powi(e)) * d,
            );
        }
    }

    Ok(ValidationReport {
        checks: [
            constants, split, nonneg, psi1_lower, psi1_upper, psi2, growth, dpsi, higher, lip_psi,
            lip_k,
        ]
        .into_iter()
        .map(Tracker::finish)
        .collect(),
    })
}

/// Proliferation interpolant `h: ℝ → [0, 1]`.
pub trait Proliferation: Send + Sync + Debug {
    fn h(&self, s: f64) -> f64;
    fn h_prime(&self, s: f64) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smoothstep;

impl Proliferation for Smoothstep {
    fn h(&self, s: f64) -> f64 {
        if s <= -1.0 {
            0.0
        } else if s >= 1.0 {
            1.0
        } else {
            let t = 0.5 * (s + 1.0);
            t * t * (3.0 - 2.0 * t)
        }
    }

    fn h_prime(&self, s: f64) -> f64 {
        if s.abs() >= 1.0 {
            0.0
        } else {
            let t = 0.5 * (s + 1.0);
            // d/ds (3t² - 2t³) with dt/ds = 1/2
            3.0 * t * (1.0 - t)
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProliferationSpec {
    pub h: Arc<dyn Proliferation>,
    /// Lipschitz constant of `h`.
    pub l_h: f64,
}

impl ProliferationSpec {
    pub fn h(&self, s: f64) -> f64 {
        self.h.h(s)
    }
}

/// Clamped smoothstep: `0` below `-1`, `1` above `1`, `3t² - 2t³` with
/// `t = (s + 1)/2` between. `max h' = 3/4` at `s = 0`.
pub fn smoothstep_h() -> ProliferationSpec {
    ProliferationSpec {
        h: Arc::new(Smoothstep),
        l_h: 0.75,
    }
}

/// Sampled check of the interpolant: range, endpoints, monotonicity and
/// `|h'| ≤ L_h`.
pub fn validate_proliferation(spec: &ProliferationSpec, samples: &[f64]) -> ValidationReport {
    let mut range = Tracker::new("h_range");
    let mut ends = Tracker::new("h_endpoints");
    let mut slope = Tracker::new("h_lipschitz");
    let mut mono = Tracker::new("h_monotone");
    ends.flag(spec.h(-1.0) == 0.0 && spec.h(1.0) == 1.0 && spec.l_h > 0.0);
    let mut prev: Option<(f64, f64)> = None;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    for &s in &sorted {
        let h = spec.h(s);
        range.le(s, 0.0, h);
        range.le(s, h, 1.0);
        slope.le(s, spec.h.h_prime(s).abs(), spec.l_h);
        if let Some((_, hp)) = prev {
            mono.le(s, hp, h);
        }
        prev = Some((s, h));
    }
    ValidationReport {
        checks: [range, ends, slope, mono]
            .into_iter()
            .map(Tracker::finish)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_well_values() {
        let p = double_well();
        assert_eq!(p.psi(1.0), 0.0);
        assert_eq!(p.psi(-1.0), 0.0);
        assert_eq!(p.psi(0.0), 0.25);
        assert_eq!(p.dpsi(0.0), 0.0);
        let s = 0.7;
        let q = p.potential.as_ref();
        assert!((q.derivative(1, s) - (s * s * s - s)).abs() < 1e-15);
        assert!((q.derivative(2, s) - (3.0 * s * s - 1.0)).abs() < 1e-15);
        assert!((q.derivative(3, s) - 6.0 * s).abs() < 1e-15);
        assert_eq!(q.derivative(4, s), 6.0);
        assert_eq!(q.derivative(5, s), 0.0);
        assert_eq!(q.degree(), Some(4));
    }

    #[test]
    fn default_constants_validate() {
        let r = validate_assumptions(&double_well(), &default_samples()).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn small_r3_fails_psi2_bound() {
        let spec = PotentialSpec {
            r3: 0.5,
            ..double_well()
        };
        let r = validate_assumptions(&spec, &default_samples()).unwrap();
        let c = r.check("psi2_bound").unwrap();
        assert!(!c.passed);
        assert!(r.into_result().is_err());
    }

    #[test]
    fn pure_quartic_split_has_no_r1() {
        let r =
            validate_assumptions(&double_well_pure_quartic_split(), &default_samples()).unwrap();
        let c = r.check("psi1_lower").unwrap();
        assert!(!c.passed);
        assert!(c.worst_s.abs() < 1e-2);
    }

    #[test]
    fn samples_must_cover_range() {
        assert!(validate_assumptions(&double_well(), &[0.0, 1.0]).is_err());
        assert!(validate_assumptions(&double_well(), &[]).is_err());
    }

    #[test]
    fn smoothstep_basics() {
        let h = smoothstep_h();
        assert_eq!(h.h(-1.0), 0.0);
        assert_eq!(h.h(1.0), 1.0);
        assert_eq!(h.h(0.0), 0.5);
        assert_eq!(h.h(-3.0), 0.0);
        assert_eq!(h.h(7.0), 1.0);
        assert_eq!(h.h.h_prime(0.0), 0.75);
        assert!(validate_proliferation(&h, &default_samples()).passed());
    }
}
