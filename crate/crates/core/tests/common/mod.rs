//! Reference implementations shared by the integration tests and the
//! acceptance runner. Nothing here calls the crate's transforms or products:
//! polynomial terms are direct convolutions of coefficient arrays and
//! non-polynomial terms are evaluated pointwise on a fine grid by explicit
//! trigonometric sums.

#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use chcbf::{Complex64, DomainSpec, ScalarField, VectorField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn domain(dim: usize, modes: usize) -> DomainSpec {
    DomainSpec::new(dim, 2.0 * PI, modes).unwrap()
}

fn wavenumber(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Wavevector of a flat FFT-order index, recomputed without the crate.
pub fn wave(d: &DomainSpec, index: usize) -> [i64; 3] {
    let n = d.modes();
    let mut k = [0i64; 3];
    let mut rest = index;
    for axis in (0..d.dim()).rev() {
        k[axis] = wavenumber(rest % n, n);
        rest /= n;
    }
    k
}

fn retained(d: &DomainSpec, k: &[i64; 3]) -> Option<usize> {
    let n = d.modes() as i64;
    let mut index = 0usize;
    for (axis, &ka) in k.iter().enumerate().take(d.dim()) {
        // the Nyquist plane is never populated
        if ka <= -n / 2 || ka >= n / 2 {
            return None;
        }
        let _ = axis;
        index = index * d.modes() + ka.rem_euclid(n) as usize;
    }
    Some(index)
}

/// Coefficients keyed by wavevector, with unbounded support so that
/// intermediate products are never truncated.
pub type Sparse = HashMap<[i64; 3], Complex64>;

pub fn sparse(f: &ScalarField) -> Sparse {
    let d = f.domain();
    f.coeffs()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm_sqr() > 0.0)
        .map(|(i, c)| (wave(d, i), *c))
        .collect()
}

pub fn sparse_mul(a: &Sparse, b: &Sparse) -> Sparse {
    let mut acc = Sparse::new();
    for (ka, ca) in a {
        for (kb, cb) in b {
            let k = [ka[0] + kb[0], ka[1] + kb[1], ka[2] + kb[2]];
            *acc.entry(k).or_insert(Complex64::new(0.0, 0.0)) += ca * cb;
        }
    }
    acc
}

pub fn sparse_add(a: &Sparse, b: &Sparse, fb: f64) -> Sparse {
    let mut out = a.clone();
    for (k, c) in b {
        *out.entry(*k).or_insert(Complex64::new(0.0, 0.0)) += c * fb;
    }
    out
}

/// Keep the retained, non-Nyquist modes of `d`.
pub fn truncate(d: DomainSpec, s: &Sparse) -> ScalarField {
    let mut out = vec![Complex64::new(0.0, 0.0); d.len()];
    for (k, c) in s {
        if let Some(j) = retained(&d, k) {
            out[j] = *c;
        }
    }
    ScalarField::from_coeffs(d, out).unwrap()
}

/// Truncated product by direct convolution, `O(N^{2d})`.
pub fn convolve(a: &ScalarField, b: &ScalarField) -> ScalarField {
    truncate(*a.domain(), &sparse_mul(&sparse(a), &sparse(b)))
}

pub fn derivative(f: &ScalarField, axis: usize) -> ScalarField {
    let d = *f.domain();
    let unit = 2.0 * PI / d.side_length();
    let out = f
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| c * Complex64::new(0.0, unit * wave(&d, i)[axis] as f64))
        .collect();
    ScalarField::from_coeffs(d, out).unwrap()
}

pub fn add(a: &ScalarField, b: &ScalarField, fb: f64) -> ScalarField {
    let out = a
        .coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| x + y * fb)
        .collect();
    ScalarField::from_coeffs(*a.domain(), out).unwrap()
}

pub fn leray(v: &VectorField) -> VectorField {
    let d = *v.domain();
    let dim = d.dim();
    let mut comps: Vec<Vec<Complex64>> =
        v.components().iter().map(|c| c.coeffs().to_vec()).collect();
    for i in 0..d.len() {
        let k = wave(&d, i);
        let kk: i64 = k.iter().map(|x| x * x).sum();
        if kk == 0 {
            for c in comps.iter_mut() {
                c[i] = Complex64::new(0.0, 0.0);
            }
            continue;
        }
        let dot: Complex64 = (0..dim).map(|a| comps[a][i] * k[a] as f64).sum();
        for a in 0..dim {
            comps[a][i] -= dot * (k[a] as f64 / kk as f64);
        }
    }
    VectorField::from_components(
        comps
            .into_iter()
            .map(|c| ScalarField::from_coeffs(d, c).unwrap())
            .collect(),
    )
    .unwrap()
}

/// `(y·∇)v` component-wise, unprojected.
pub fn convection(y: &VectorField, v: &VectorField) -> VectorField {
    let dim = y.domain().dim();
    let comps = v
        .components()
        .iter()
        .map(|vj| {
            let mut acc = ScalarField::zeros(*y.domain());
            for i in 0..dim {
                acc = add(&acc, &convolve(y.component(i), &derivative(vj, i)), 1.0);
            }
            acc
        })
        .collect();
    VectorField::from_components(comps).unwrap()
}

/// `v·∇φ`.
pub fn advection(v: &VectorField, phi: &ScalarField) -> ScalarField {
    let mut acc = ScalarField::zeros(*phi.domain());
    for i in 0..phi.domain().dim() {
        acc = add(&acc, &convolve(v.component(i), &derivative(phi, i)), 1.0);
    }
    acc
}

/// `f ∇φ`, unprojected.
pub fn f_grad(f: &ScalarField, phi: &ScalarField) -> VectorField {
    let comps = (0..phi.domain().dim())
        .map(|i| convolve(f, &derivative(phi, i)))
        .collect();
    VectorField::from_components(comps).unwrap()
}

/// `Σ_p a_p φ^p` truncated, by repeated convolution.
pub fn polynomial(phi: &ScalarField, coeffs: &[f64]) -> ScalarField {
    let d = *phi.domain();
    let base = sparse(phi);
    let mut out = Sparse::new();
    let mut power: Sparse = [([0i64; 3], Complex64::new(1.0, 0.0))]
        .into_iter()
        .collect();
    for (p, &a) in coeffs.iter().enumerate() {
        if p > 0 {
            power = sparse_mul(&power, &base);
        }
        out = sparse_add(&out, &power, a);
    }
    truncate(d, &out)
}

/// `|v|² v`, the cubic Forchheimer term.
pub fn cubic_forchheimer(v: &VectorField) -> VectorField {
    let d = *v.domain();
    let comps: Vec<Sparse> = v.components().iter().map(sparse).collect();
    let mut m2 = Sparse::new();
    for c in &comps {
        m2 = sparse_add(&m2, &sparse_mul(c, c), 1.0);
    }
    let out = comps
        .iter()
        .map(|c| truncate(d, &sparse_mul(&m2, c)))
        .collect();
    VectorField::from_components(out).unwrap()
}

/// Dense samples on an `m^d` grid in row-major order.
pub struct Samples {
    pub m: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

// Apply a dense matrix (rows × cols, complex) along one axis of a
// row-major array with the given shape.
fn apply_axis(
    data: &[Complex64],
    shape: &[usize],
    axis: usize,
    mat: &[Vec<Complex64>],
) -> (Vec<Complex64>, Vec<usize>) {
    let rows = mat.len();
    let mut out_shape = shape.to_vec();
    out_shape[axis] = rows;
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let cols = shape[axis];
    let mut out = vec![Complex64::new(0.0, 0.0); outer * rows * inner];
    for o in 0..outer {
        for r in 0..rows {
            for i in 0..inner {
                let mut s = Complex64::new(0.0, 0.0);
                for c in 0..cols {
                    s += mat[r][c] * data[(o * cols + c) * inner + i];
                }
                out[(o * rows + r) * inner + i] = s;
            }
        }
    }
    (out, out_shape)
}

/// Point values of `f` on an `m^d` grid by explicit trigonometric sums.
pub fn sample(f: &ScalarField, m: usize) -> Samples {
    let d = *f.domain();
    let n = d.modes();
    let unit = 2.0 * PI / d.side_length();
    let h = d.side_length() / m as f64;
    let mat: Vec<Vec<Complex64>> = (0..m)
        .map(|x| {
            (0..n)
                .map(|i| Complex64::from_polar(1.0, unit * wavenumber(i, n) as f64 * x as f64 * h))
                .collect()
        })
        .collect();
    let mut data = f.coeffs().to_vec();
    let mut shape = vec![n; d.dim()];
    for axis in 0..d.dim() {
        let (o, s) = apply_axis(&data, &shape, axis, &mat);
        data = o;
        shape = s;
    }
    Samples {
        m,
        dim: d.dim(),
        values: data.into_iter().map(|c| c.re).collect(),
    }
}

/// `P_N g` from samples of `g`, by explicit sums; Nyquist planes zeroed.
pub fn project(d: DomainSpec, s: &Samples) -> ScalarField {
    let n = d.modes();
    let m = s.m;
    let unit = 2.0 * PI / d.side_length();
    let h = d.side_length() / m as f64;
    let mat: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|x| {
                    Complex64::from_polar(
                        1.0 / m as f64,
                        -unit * wavenumber(i, n) as f64 * x as f64 * h,
                    )
                })
                .collect()
        })
        .collect();
    let mut data: Vec<Complex64> = s.values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut shape = vec![m; d.dim()];
    for axis in 0..d.dim() {
        let (o, sh) = apply_axis(&data, &shape, axis, &mat);
        data = o;
        shape = sh;
    }
    for (i, c) in data.iter_mut().enumerate() {
        if retained(&d, &wave(&d, i)).is_none() {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    ScalarField::from_coeffs(d, data).unwrap()
}

/// `P_N F(a_1, …, a_j)` for a pointwise map of several scalar fields.
pub fn pointwise(fields: &[&ScalarField], m: usize, f: impl Fn(&[f64]) -> f64) -> ScalarField {
    let d = *fields[0].domain();
    let samples: Vec<Samples> = fields.iter().map(|x| sample(x, m)).collect();
    let len = samples[0].values.len();
    let mut buf = vec![0.0; fields.len()];
    let values = (0..len)
        .map(|p| {
            for (b, s) in buf.iter_mut().zip(&samples) {
                *b = s.values[p];
            }
            f(&buf)
        })
        .collect();
    project(
        d,
        &Samples {
            m,
            dim: d.dim(),
            values,
        },
    )
}

/// `P_N(|v|^{r-1} v)` on a fine grid, unprojected.
pub fn forchheimer(v: &VectorField, r: f64, m: usize) -> VectorField {
    let comps: Vec<&ScalarField> = v.components().iter().collect();
    let dim = comps.len();
    let out = (0..dim)
        .map(|j| {
            pointwise(&comps, m, |x| {
                let m2: f64 = x.iter().map(|a| a * a).sum();
                m2.powf(0.5 * (r - 1.0)) * x[j]
            })
        })
        .collect();
    VectorField::from_components(out).unwrap()
}

pub fn l2_sq(coeffs: &[Complex64]) -> f64 {
    coeffs.iter().map(|c| c.norm_sqr()).sum()
}

/// `‖a - b‖ / ‖b‖` on coefficients, or the absolute difference when `b = 0`.
pub fn rel_err(a: &ScalarField, b: &ScalarField) -> f64 {
    let diff: Vec<Complex64> = a
        .coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| x - y)
        .collect();
    let nb = l2_sq(b.coeffs()).sqrt();
    let nd = l2_sq(&diff).sqrt();
    if nb > 0.0 {
        nd / nb
    } else {
        nd
    }
}

pub fn rel_err_vec(a: &VectorField, b: &VectorField) -> f64 {
    let mut nd = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.components().iter().zip(b.components()) {
        nb += l2_sq(y.coeffs());
        nd += x
            .coeffs()
            .iter()
            .zip(y.coeffs())
            .map(|(p, q)| (p - q).norm_sqr())
            .sum::<f64>();
    }
    if nb > 0.0 {
        (nd / nb).sqrt()
    } else {
        nd.sqrt()
    }
}

/// One operator compared against its oracle.
pub struct OracleCheck {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

pub const POLY_TOL: f64 = 1e-12;
pub const NONPOLY_TOL: f64 = 1e-6;

fn neg_laplacian(f: &ScalarField) -> ScalarField {
    let dim = f.domain().dim();
    let mut out = ScalarField::zeros(*f.domain());
    for a in 0..dim {
        out = add(&out, &derivative(&derivative(f, a), a), -1.0);
    }
    out
}

/// Every polynomial nonlinearity at `N = 8` against direct convolution.
pub fn polynomial_checks(dim: usize, seed: u64) -> Vec<OracleCheck> {
    use chcbf::harness::initial::{random_scalar, random_velocity};
    use chcbf::operators as op;
    use chcbf::potentials::double_well;
    use chcbf::transforms::TransformSet;

    let d = domain(dim, 8);
    let ts = TransformSet::new(d);
    let mut g = rng(seed);
    let y = random_velocity(d, &mut g, 1.0);
    let v = random_velocity(d, &mut g, 1.0);
    let phi = random_scalar(d, &mut g, 1.0);
    let f = random_scalar(d, &mut g, 1.0);
    let eps = 0.5;
    let pot = double_well();
    // ψ' = s³ - s for the double well
    let dpsi = polynomial(&phi, &[0.0, -1.0, 0.0, 1.0]);
    let a1phi = neg_laplacian(&phi).scale(eps);
    let mu = add(&neg_laplacian(&phi).scale(eps), &dpsi, 1.0 / eps);
    let tag = |s: &str| format!("{s} (d={dim})");
    let check = |name: &str, error: f64| OracleCheck {
        name: tag(name),
        error,
        tolerance: POLY_TOL,
    };
    vec![
        check(
            "product",
            rel_err(&ts.dealiased_product(&phi, &f, 2).0, &convolve(&phi, &f)),
        ),
        check(
            "convection (y·∇)v",
            rel_err_vec(&op::convection_raw(&ts, &y, &v), &convection(&y, &v)),
        ),
        check(
            "B0",
            rel_err_vec(&op::convection_b0(&ts, &y, &v), &leray(&convection(&y, &v))),
        ),
        check(
            "B1",
            rel_err(&op::advection_b1(&ts, &v, &phi), &advection(&v, &phi)),
        ),
        check(
            "R0(f, φ)",
            rel_err_vec(&op::coupling_form(&ts, &f, &phi), &leray(&f_grad(&f, &phi))),
        ),
        check(
            "R0(εA₁φ, φ)",
            rel_err_vec(
                &op::coupling_r0(&ts, &phi, eps),
                &leray(&f_grad(&a1phi, &phi)),
            ),
        ),
        check("ψ'(φ)", rel_err(&op::dpsi_field(&ts, &phi, &pot), &dpsi)),
        check(
            "μ",
            rel_err(&op::chemical_potential(&ts, &phi, &pot, eps), &mu),
        ),
        check(
            "|v|²v",
            rel_err_vec(&op::forchheimer_raw(&ts, &v, 3.0), &cubic_forchheimer(&v)),
        ),
        check(
            "A_3",
            rel_err_vec(
                &op::forchheimer(&ts, &v, 3.0),
                &leray(&cubic_forchheimer(&v)),
            ),
        ),
        check("A_3 pairing", {
            let exact = cubic_forchheimer(&v).inner(&v);
            (op::forchheimer_energy(&ts, &v, 3.0) - exact).abs() / exact.abs()
        }),
        check(
            "A_1",
            rel_err_vec(&op::forchheimer(&ts, &v, 1.0), &leray(&v)),
        ),
    ]
}

/// Non-polynomial nonlinearities at `N = 8`, `d = 2`, with the crate's
/// quadrature grid at `factor·N` and the oracle on `m_ref` points.
pub fn nonpolynomial_checks(factor: usize, m_ref: usize, seed: u64) -> Vec<OracleCheck> {
    use chcbf::harness::initial::{random_scalar, random_velocity};
    use chcbf::operators::{self as op, ModelParams};
    use chcbf::potentials::smoothstep_h;
    use chcbf::transforms::TransformSet;

    let d = domain(2, 8);
    let ts = TransformSet::with_nonpolynomial_factor(d, factor);
    let mut g = rng(seed);
    let v = random_velocity(d, &mut g, 1.0);
    let phi = random_scalar(d, &mut g, 1.0);
    let sigma = random_scalar(d, &mut g, 1.0);
    let w = random_scalar(d, &mut g, 1.0);
    let p = ModelParams::default();
    let h = smoothstep_h();
    let u = 0.5;
    let check = |name: String, error: f64| OracleCheck {
        name,
        error,
        tolerance: NONPOLY_TOL,
    };
    let mut out = Vec::new();
    for r in [2.0, 3.5] {
        let oracle = forchheimer(&v, r, m_ref);
        out.push(check(
            format!("|v|^{{r-1}}v, r={r}"),
            rel_err_vec(&op::forchheimer_raw(&ts, &v, r), &oracle),
        ));
        out.push(check(
            format!("A_r, r={r}"),
            rel_err_vec(&op::forchheimer(&ts, &v, r), &leray(&oracle)),
        ));
        let comps: Vec<&ScalarField> = v.components().iter().collect();
        let exact = pointwise(&comps, m_ref, |x| {
            x.iter().map(|a| a * a).sum::<f64>().powf(0.5 * (r + 1.0))
        });
        let exact = exact.mean() * d.volume();
        out.push(check(
            format!("∫|v|^{{r+1}}, r={r}"),
            (op::forchheimer_energy(&ts, &v, r) - exact).abs() / exact,
        ));
    }
    let shift = p.apoptosis + p.drug_efficacy * u;
    let src = pointwise(&[&phi, &sigma], m_ref, |x| {
        (p.proliferation * x[1] - shift) * h.h(x[0])
    });
    out.push(check(
        "(Pσ - A - αu)h(φ)".into(),
        rel_err(&op::phi_source(&ts, &phi, &sigma, u, &p, &h), &src),
    ));
    let cons = pointwise(&[&phi, &sigma], m_ref, |x| p.consumption * x[1] * h.h(x[0]));
    let react = add(&add(&cons, &sigma, p.supply), &w, -p.supply);
    out.push(check(
        "cσh(φ) + b(σ - w)".into(),
        rel_err(&op::sigma_reaction(&ts, &sigma, &phi, &w, &p, &h), &react),
    ));
    let pair = pointwise(&[&phi, &sigma], m_ref, |x| {
        p.consumption * x[1] * x[1] * h.h(x[0])
    });
    let pair = pair.mean() * d.volume();
    out.push(check(
        "c∫σ²h(φ)".into(),
        (op::consumption_pairing(&ts, &sigma, &phi, &p, &h) - pair).abs() / pair.abs(),
    ));
    out
}

/// Grid multiple at which the non-polynomial checks are run.
pub const ORACLE_FACTOR: usize = 64;
/// Oracle grid for the non-polynomial checks.
pub const ORACLE_POINTS: usize = 1024;
