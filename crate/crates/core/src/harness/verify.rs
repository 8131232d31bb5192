//! Property suite behind `verify-operators`: operator identities, Forchheimer
//! monotonicity, projection inequalities, eigenvalue asymptotics and the
//! Jacobian formula.

use std::f64::consts::PI;

use crate::basis::{DomainSpec, ModeOrdering, ScalarField, VectorField};
use crate::operators::{
    b0_form, b1_form, coupling_form, forchheimer, forchheimer_energy, forchheimer_gradient_check,
    forchheimer_grid, vector_to_physical,
};
use crate::parallel::Execution;
use crate::transforms::TransformSet;

use super::initial::{keyed_rng, random_scalar, random_velocity};
use super::report::Verdict;

/// Band for `λ_n / n` of the 2D velocity ladder with `L = 2π`, `n ≤ 1000`,
/// found by enumerating `|k|² ≤ 1600`. The minimum sits at `n = 4`.
pub const EIGEN_BAND_2D: (f64, f64) = (0.25, 1.0);

/// Band for `λ_n · n^{-2/3}` of the 3D ladder, one rank per wavevector,
/// `n ≤ 1000`. The minimum is 0.291193 at `n = 18`.
pub const EIGEN_BAND_3D: (f64, f64) = (0.2911, 1.0);

#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    /// Random fields per domain for the identity checks.
    pub fields_per_domain: usize,
    /// Random pairs per exponent for the monotonicity check.
    pub pairs: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            fields_per_domain: 167,
            pairs: 1000,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

fn identity_domains() -> Vec<DomainSpec> {
    vec![
        DomainSpec::new(2, 2.0 * PI, 16).expect("valid"),
        DomainSpec::new(2, 2.0 * PI, 32).expect("valid"),
        DomainSpec::new(3, 2.0 * PI, 16).expect("valid"),
    ]
}

fn h1(f: &ScalarField) -> f64 {
    f.hs_norm_sq(1.0).sqrt()
}

fn h1v(v: &VectorField) -> f64 {
    v.hs_norm_sq(1.0).sqrt()
}

/// Worst relative errors of one random sample, in the order of
/// [`IDENTITY_NAMES`].
fn identity_errors(domain: DomainSpec, seed: u64, sample: usize) -> [f64; 9] {
    let ts = TransformSet::new(domain);
    let mut rng = keyed_rng(
        "chcbf-verify-identities",
        &[
            seed as i64,
            domain.dim() as i64,
            domain.modes() as i64,
            sample as i64,
        ],
    );
    let y = random_velocity(domain, &mut rng, 2.0);
    let v = random_velocity(domain, &mut rng, 2.0);
    let w = random_velocity(domain, &mut rng, 2.0);
    let phi = random_scalar(domain, &mut rng, 2.0);
    let theta = random_scalar(domain, &mut rng, 2.0);
    let f = random_scalar(domain, &mut rng, 2.0);

    let s_vv = h1v(&y) * h1v(&v) * h1v(&v);
    let s_vw = h1v(&y) * h1v(&v) * h1v(&w);
    let s_pp = h1v(&v) * h1(&phi) * h1(&phi);
    let s_pt = h1v(&v) * h1(&phi) * h1(&theta);
    let s_rb = h1v(&v) * h1(&phi) * h1(&f);

    let b0_vv = b0_form(&ts, &y, &v, &v).abs() / s_vv;
    let b0_anti = (b0_form(&ts, &y, &v, &w) + b0_form(&ts, &y, &w, &v)).abs() / s_vw;
    let b1_pp = b1_form(&ts, &v, &phi, &phi).abs() / s_pp;
    let b1_anti = (b1_form(&ts, &v, &phi, &theta) + b1_form(&ts, &v, &theta, &phi)).abs() / s_pt;
    let duality =
        (coupling_form(&ts, &f, &phi).inner(&v) - b1_form(&ts, &v, &phi, &f)).abs() / s_rb;
    let mut out = [b0_vv, b0_anti, b1_pp, b1_anti, duality, 0.0, 0.0, 0.0, 0.0];
    for (slot, r) in [1.0, 2.0, 3.0, 3.5].into_iter().enumerate() {
        let pairing = forchheimer(&ts, &v, r).inner(&v);
        let energy = forchheimer_energy(&ts, &v, r);
        out[5 + slot] = (pairing - energy).abs() / energy;
    }
    out
}

pub const IDENTITY_NAMES: [&str; 9] = [
    "b0(y,v,v) = 0",
    "b0 antisymmetry",
    "b1(v,phi,phi) = 0",
    "b1 antisymmetry",
    "R0/B1 duality",
    "<A_r(v),v> = |v|^(r+1), r = 1",
    "<A_r(v),v> = |v|^(r+1), r = 2",
    "<A_r(v),v> = |v|^(r+1), r = 3",
    "<A_r(v),v> = |v|^(r+1), r = 3.5",
];

/// Trilinear identities and the Forchheimer pairing over random fields on
/// 2D `N ∈ {16, 32}` and 3D `N = 16`, each within `1e-8` relative.
pub fn operator_identities(opts: &SuiteOptions) -> Vec<Verdict> {
    let mut worst = [0.0f64; 9];
    let mut count = 0;
    for d in identity_domains() {
        let rows = opts
            .execution
            .map(opts.fields_per_domain, |i| identity_errors(d, opts.seed, i));
        count += rows.len();
        for row in rows {
            for (w, e) in worst.iter_mut().zip(row) {
                *w = w.max(if e.is_nan() { f64::INFINITY } else { e });
            }
        }
    }
    IDENTITY_NAMES
        .iter()
        .zip(worst)
        .map(|(name, w)| {
            Verdict::new(
                *name,
                w <= 1e-8,
                format!("max relative error {w:.3e} over {count} fields (tol 1e-8)"),
            )
        })
        .collect()
}

/// `min (lhs - rhs)` of the monotonicity bound over random pairs,
/// where `lhs = ⟨𝒜_r(v1) - 𝒜_r(v2), v1 - v2⟩` and
/// `rhs = ½‖|v1|^{(r-1)/2}(v1 - v2)‖² + ½‖|v2|^{(r-1)/2}(v1 - v2)‖²`.
pub fn monotonicity_margin(
    domain: DomainSpec,
    r: f64,
    pairs: usize,
    seed: u64,
    exec: Execution,
) -> f64 {
    let ts = TransformSet::new(domain);
    let margins = exec.map(pairs, |i| {
        let mut rng = keyed_rng(
            "chcbf-verify-monotone",
            &[seed as i64, r.to_bits() as i64, i as i64],
        );
        let amp1 = rng_scale(&mut rng);
        let amp2 = rng_scale(&mut rng);
        let v1 = random_velocity(domain, &mut rng, 2.0).scale(amp1);
        let v2 = random_velocity(domain, &mut rng, 2.0).scale(amp2);
        pair_margin(&ts, &v1, &v2, r)
    });
    margins.into_iter().fold(f64::INFINITY, f64::min)
}

/// Monotonicity margin `lhs - rhs` for one pair, quadrature on the
/// Forchheimer grid.
pub fn pair_margin(ts: &TransformSet, v1: &VectorField, v2: &VectorField, r: f64) -> f64 {
    let domain = *v1.domain();
    let diff = v1 - v2;
    let lhs = (&forchheimer(ts, v1, r) - &forchheimer(ts, v2, r)).inner(&diff);
    let tr = forchheimer_grid(ts, r);
    let g1 = vector_to_physical(tr, v1);
    let g2 = vector_to_physical(tr, v2);
    let gd = vector_to_physical(tr, &diff);
    let npts = g1[0].values().len();
    let mut rhs = 0.0;
    for q in 0..npts {
        let m1: f64 = g1.iter().map(|g| g.values()[q].powi(2)).sum::<f64>().sqrt();
        let m2: f64 = g2.iter().map(|g| g.values()[q].powi(2)).sum::<f64>().sqrt();
        let dd: f64 = gd.iter().map(|g| g.values()[q].powi(2)).sum();
        rhs += 0.5 * (m1.powf(r - 1.0) + m2.powf(r - 1.0)) * dd;
    }
    rhs *= domain.volume() / npts as f64;
    lhs - rhs
}

fn rng_scale(rng: &mut impl rand::Rng) -> f64 {
    // spread amplitudes over two decades
    10f64.powf(rng.random_range(-1.0..1.0))
}

pub fn forchheimer_monotonicity(opts: &SuiteOptions) -> Vec<Verdict> {
    let d = DomainSpec::new(2, 2.0 * PI, 16).expect("valid");
    [1.0, 2.0, 3.0, 4.0]
        .into_iter()
        .map(|r| {
            let m = monotonicity_margin(d, r, opts.pairs, opts.seed, opts.execution);
            Verdict::new(
                format!("monotonicity r = {r}"),
                m >= -1e-10,
                format!("min margin {m:.3e} over {} pairs (tol -1e-10)", opts.pairs),
            )
        })
        .collect()
}

/// Outcome of the projection-inequality sweep.
#[derive(Clone, Debug, Default)]
pub struct ProjectionSweep {
    pub checked: usize,
    /// Largest `lhs / rhs - 1` among inequality checks (≤ 0 when they hold).
    pub worst_excess: f64,
    /// Largest `|lhs / rhs - 1|` among equality cases.
    pub worst_equality: f64,
    pub equality_cases: usize,
}

/// Inverse and direct Poincaré inequalities for `P_n`, `Q_n` on the velocity
/// ladder, for all `α1 < α2` in `{0, ½, 1, 3/2, 2}`:
///
/// * `‖A^{α2} P_n f‖ ≤ λ_n^{α2-α1} ‖A^{α1} P_n f‖`
/// * `‖A^{α1} Q_n f‖ ≤ λ_{n+1}^{α1-α2} ‖A^{α2} Q_n f‖`
/// * `‖A^{α1} Q_n f‖ ≤ λ_n^{α1-α2} ‖A^{α2} Q_n f‖` (weaker)
///
/// Equality is checked on the single modes of rank `n` (first line) and
/// `n + 1` (second line, and third line when `λ_n = λ_{n+1}`).
pub fn projection_sweep(domain: DomainSpec, fields: usize, seed: u64) -> ProjectionSweep {
    let ord = ModeOrdering::velocity(domain);
    let alphas = [0.0, 0.5, 1.0, 1.5, 2.0];
    let cutoffs: Vec<usize> = [1usize, 2, 4, 5, 7, 12, 20, 33, 50]
        .into_iter()
        .filter(|&n| n < ord.len())
        .collect();
    let mut out = ProjectionSweep::default();
    let ineq = |lhs: f64, rhs: f64, out: &mut ProjectionSweep| {
        out.checked += 1;
        if rhs > 0.0 {
            out.worst_excess = out.worst_excess.max(lhs / rhs - 1.0);
        } else if lhs > 0.0 {
            out.worst_excess = f64::INFINITY;
        }
    };
    let eq = |lhs: f64, rhs: f64, out: &mut ProjectionSweep| {
        out.equality_cases += 1;
        out.worst_equality = out.worst_equality.max((lhs / rhs - 1.0).abs());
    };
    let norm = |f: &VectorField, a: f64| f.fractional_norm_sq(a).sqrt();
    let mut rng = keyed_rng(
        "chcbf-verify-projection",
        &[seed as i64, domain.dim() as i64],
    );
    let mut samples: Vec<VectorField> = (0..fields)
        .map(|_| random_velocity(domain, &mut rng, 1.0))
        .collect();
    for &n in &cutoffs {
        let ln = ord.eigenvalue_at_rank(n).expect("rank in range");
        let ln1 = ord.eigenvalue_at_rank(n + 1).expect("rank in range");
        // single modes at the cutoff ranks, appended per cutoff
        let at_n = unit_mode(domain, &ord, n);
        let at_n1 = unit_mode(domain, &ord, n + 1);
        samples.push(at_n.clone());
        samples.push(at_n1.clone());
        for f in &samples {
            let p = ord.project_low_vector(f, n).expect("n in range");
            let q = ord.project_high_vector(f, n).expect("n in range");
            for (i, &a1) in alphas.iter().enumerate() {
                for &a2 in &alphas[i + 1..] {
                    ineq(norm(&p, a2), ln.powf(a2 - a1) * norm(&p, a1), &mut out);
                    ineq(norm(&q, a1), ln1.powf(a1 - a2) * norm(&q, a2), &mut out);
                    ineq(norm(&q, a1), ln.powf(a1 - a2) * norm(&q, a2), &mut out);
                }
            }
        }
        samples.truncate(fields);
        for (i, &a1) in alphas.iter().enumerate() {
            for &a2 in &alphas[i + 1..] {
                eq(
                    norm(&at_n, a2),
                    ln.powf(a2 - a1) * norm(&at_n, a1),
                    &mut out,
                );
                eq(
                    norm(&at_n1, a1),
                    ln1.powf(a1 - a2) * norm(&at_n1, a2),
                    &mut out,
                );
                if ln == ln1 {
                    eq(
                        norm(&at_n1, a1),
                        ln.powf(a1 - a2) * norm(&at_n1, a2),
                        &mut out,
                    );
                }
            }
        }
    }
    out
}

/// Divergence-free unit-amplitude mode at velocity rank `n`.
pub fn unit_mode(domain: DomainSpec, ord: &ModeOrdering, n: usize) -> VectorField {
    let k = domain.wavevector(ord.index_at_rank(n).expect("rank in range"));
    VectorField::single_mode(domain, k, 0, crate::Complex64::new(1.0, 0.0))
        .expect("non-Nyquist mode")
}

pub fn projection_lemmas(opts: &SuiteOptions) -> Vec<Verdict> {
    let mut out = Vec::new();
    for d in [
        DomainSpec::new(2, 2.0 * PI, 16).expect("valid"),
        DomainSpec::new(3, 2.0 * PI, 8).expect("valid"),
    ] {
        let s = projection_sweep(d, 20, opts.seed);
        out.push(Verdict::new(
            format!("projection inequalities {}D", d.dim()),
            s.worst_excess <= 1e-12,
            format!("{} checks, worst excess {:.3e}", s.checked, s.worst_excess),
        ));
        out.push(Verdict::new(
            format!("projection equality cases {}D", d.dim()),
            s.worst_equality <= 1e-12,
            format!(
                "{} cases, worst deviation {:.3e}",
                s.equality_cases, s.worst_equality
            ),
        ));
    }
    out
}

/// `λ_n · n^{-2/d}` for the first `count` velocity eigenvalues.
pub fn eigenvalue_ratios(domain: DomainSpec, count: usize) -> Vec<f64> {
    let ord = ModeOrdering::velocity(domain);
    let d = domain.dim() as f64;
    (1..=count.min(ord.len()))
        .map(|n| ord.eigenvalue_at_rank(n).expect("rank in range") * (n as f64).powf(-2.0 / d))
        .collect()
}

pub fn eigenvalue_asymptotics() -> Verdict {
    let d = DomainSpec::new(2, 2.0 * PI, 64).expect("valid");
    let ratios = eigenvalue_ratios(d, 1000);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (c1, c2) = EIGEN_BAND_2D;
    Verdict::new(
        "eigenvalue asymptotics",
        ratios.len() == 1000 && lo >= c1 && hi <= c2,
        format!(
            "lambda_n / n in [{lo}, {hi}] for n <= {}, band [{c1}, {c2}]",
            ratios.len()
        ),
    )
}

pub fn gradient_formula(opts: &SuiteOptions) -> Vec<Verdict> {
    let d = DomainSpec::new(2, 2.0 * PI, 16).expect("valid");
    let mut rng = keyed_rng("chcbf-verify-gradient", &[opts.seed as i64]);
    let v = random_velocity(d, &mut rng, 2.0);
    let points: Vec<[f64; 3]> = (0..20)
        .map(|_| {
            [
                rand::Rng::random_range(&mut rng, 0.0..2.0 * PI),
                rand::Rng::random_range(&mut rng, 0.0..2.0 * PI),
                0.0,
            ]
        })
        .collect();
    [1.0, 2.0, 3.0, 4.0]
        .into_iter()
        .map(|r| {
            let c = forchheimer_gradient_check(&v, r, &points);
            Verdict::new(
                format!("Jacobian formula r = {r}"),
                c.residual <= 1e-5,
                format!(
                    "relative residual {:.3e} at {} points ({} skipped)",
                    c.residual, c.checked, c.skipped
                ),
            )
        })
        .collect()
}

/// Every check of the suite.
pub fn full_suite(opts: &SuiteOptions) -> Vec<Verdict> {
    let mut out = operator_identities(opts);
    out.extend(forchheimer_monotonicity(opts));
    out.extend(projection_lemmas(opts));
    out.push(eigenvalue_asymptotics());
    out.extend(gradient_formula(opts));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let opts = SuiteOptions {
            fields_per_domain: 3,
            pairs: 10,
            seed: 7,
            execution: Execution::Sequential,
        };
        for v in full_suite(&opts) {
            assert!(v.passed, "{}: {}", v.name, v.detail);
        }
    }
}
