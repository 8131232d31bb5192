//! Nonlinear and coupling terms of the model, evaluated pseudo-spectrally.
//!
//! Grid choices are fixed per term so that every pairing that enters the
//! energy balance is an exact discrete quadrature:
//!
//! | term | grid |
//! |------|------|
//! | `(y·∇)v`, `(v·∇)φ`, `εA₁φ ∇φ` | 3/2 |
//! | `ψ'(φ)`, `|v|^{r-1}v`, `h(φ)` products | 2× |
//!
//! Vector results that live in the velocity space are Leray-projected.

use serde::{Deserialize, Serialize};

use crate::basis::{DomainSpec, ScalarField, VectorField};
use crate::error::ParamError;
use crate::potentials::{PotentialSpec, ProliferationSpec};
use crate::transforms::{
    alias_free, AliasingWarning, Padding, PhysicalGrid, TransformSet, Transformer,
};

/// Physical constants of the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Viscosity `ν`.
    pub nu: f64,
    /// Forchheimer coefficient `η`.
    pub eta: f64,
    /// Interface width `ε`.
    pub epsilon: f64,
    /// Proliferation rate `P`.
    pub proliferation: f64,
    /// Apoptosis rate `A`.
    pub apoptosis: f64,
    /// Drug efficacy `α`.
    pub drug_efficacy: f64,
    /// Nutrient consumption `c`.
    pub consumption: f64,
    /// Nutrient supply rate `b`.
    pub supply: f64,
    /// Forchheimer exponent `r`.
    pub r: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            nu: 1.0,
            eta: 1.0,
            epsilon: 0.5,
            proliferation: 0.5,
            apoptosis: 0.5,
            drug_efficacy: 0.5,
            consumption: 1.0,
            supply: 1.0,
            r: 2.0,
        }
    }
}

impl ModelParams {
    /// Checks positivity and `r ≥ 1`. Returns a warning for `d = 3, r > 3`,
    /// which lies outside the strong-solution theory.
    pub fn validate(&self, dim: usize) -> Result<Option<String>, ParamError> {
        let positive = [
            ("nu", self.nu),
            ("eta", self.eta),
            ("epsilon", self.epsilon),
            ("proliferation", self.proliferation),
            ("apoptosis", self.apoptosis),
            ("drug_efficacy", self.drug_efficacy),
            ("consumption", self.consumption),
            ("supply", self.supply),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamError::Invalid {
                    name,
                    rule: "positive and finite",
                    value,
                });
            }
        }
        if !(self.r.is_finite() && self.r >= 1.0) {
            return Err(ParamError::Invalid {
                name: "r",
                rule: "at least 1",
                value: self.r,
            });
        }
        if dim == 3 && self.r > 3.0 {
            return Ok(Some(format!(
                "r = {} exceeds 3 in three dimensions; strong-solution results do not cover this run",
                self.r
            )));
        }
        Ok(None)
    }
}

/// `(v, φ, σ)` at one instant, with `μ` cached when already computed.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub v: VectorField,
    pub phi: ScalarField,
    pub sigma: ScalarField,
    pub mu: Option<ScalarField>,
}

impl SystemState {
    pub fn zeros(domain: DomainSpec) -> Self {
        Self {
            v: VectorField::zeros(domain),
            phi: ScalarField::zeros(domain),
            sigma: ScalarField::zeros(domain),
            mu: None,
        }
    }

    pub fn new(v: VectorField, phi: ScalarField, sigma: ScalarField) -> Self {
        Self {
            v,
            phi,
            sigma,
            mu: None,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        self.phi.domain()
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.phi.is_finite() && self.sigma.is_finite()
    }

    /// `‖(v, φ, σ)‖²_𝒱 = ‖A₀^{1/2}v‖² + ‖φ‖²_{H²} + ‖σ‖²_{H¹}`.
    pub fn v_norm_sq(&self) -> f64 {
        self.v.fractional_norm_sq(0.5) + self.phi.hs_norm_sq(2.0) + self.sigma.hs_norm_sq(1.0)
    }

    /// `‖(v, φ, σ)‖²_𝒵 = ‖A₀v‖² + ‖φ‖²_{H⁴} + ‖σ‖²_{H²}`.
    pub fn z_norm_sq(&self) -> f64 {
        self.v.fractional_norm_sq(1.0) + self.phi.hs_norm_sq(4.0) + self.sigma.hs_norm_sq(2.0)
    }

    /// `‖(v, φ, σ)‖²_𝓗 = ‖v‖² + ‖φ‖²_{H¹} + ‖σ‖²`.
    pub fn h_norm_sq(&self) -> f64 {
        self.v.l2_norm_sq() + self.phi.hs_norm_sq(1.0) + self.sigma.l2_norm_sq()
    }

    /// Componentwise difference (the cached `μ` is dropped).
    pub fn difference(&self, other: &Self) -> Self {
        Self::new(
            &self.v - &other.v,
            &self.phi - &other.phi,
            &self.sigma - &other.sigma,
        )
    }

    pub fn resample(&self, target: DomainSpec) -> Self {
        Self::new(
            self.v.resample(target),
            self.phi.resample(target),
            self.sigma.resample(target),
        )
    }
}

/// External inputs: body force `z`, drug dosage `u ∈ [0, 1]` (spatially
/// constant) and vasculature nutrient `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceFields {
    pub z: VectorField,
    pub u: f64,
    pub w: ScalarField,
}

impl SourceFields {
    pub fn zeros(domain: DomainSpec) -> Self {
        Self {
            z: VectorField::zeros(domain),
            u: 0.0,
            w: ScalarField::zeros(domain),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(0.0..=1.0).contains(&self.u) {
            return Err(ParamError::Invalid {
                name: "u",
                rule: "in [0, 1]",
                value: self.u,
            });
        }
        Ok(())
    }
}

pub(crate) fn vector_to_physical(t: &Transformer, v: &VectorField) -> Vec<PhysicalGrid> {
    v.components().iter().map(|c| t.to_physical(c)).collect()
}

fn vector_to_spectral(t: &Transformer, g: &[PhysicalGrid]) -> VectorField {
    VectorField::from_components(g.iter().map(|c| t.to_spectral(c)).collect())
        .expect("component count preserved")
}

/// `|v|^{r-1}` on a grid, with the `r = 1` case exact.
fn magnitude_power(g: &[PhysicalGrid], r: f64) -> Vec<f64> {
    let len = g[0].values().len();
    (0..len)
        .map(|p| {
            let m2: f64 = g.iter().map(|c| c.values()[p] * c.values()[p]).sum();
            if r == 1.0 {
                1.0
            } else if r == 3.0 {
                m2
            } else {
                m2.powf(0.5 * (r - 1.0))
            }
        })
        .collect()
}

/// Whether `|v|^{r-1}v` is a polynomial in the components of `v`.
pub fn forchheimer_is_polynomial(r: f64) -> bool {
    r.fract() == 0.0 && (r as i64) % 2 == 1
}

/// Grid used for the Forchheimer term and its energy: the doubled grid for
/// odd integer `r`, the non-polynomial grid otherwise.
pub fn forchheimer_grid(ts: &TransformSet, r: f64) -> &Transformer {
    if forchheimer_is_polynomial(r) {
        ts.get(Padding::Double)
    } else {
        ts.nonpolynomial()
    }
}

/// Unprojected truncation `P_N(|v|^{r-1} v)`.
pub fn forchheimer_raw(ts: &TransformSet, v: &VectorField, r: f64) -> VectorField {
    if r == 1.0 {
        return v.clone();
    }
    let t = forchheimer_grid(ts, r);
    let g = vector_to_physical(t, v);
    let w = magnitude_power(&g, r);
    let prod: Vec<PhysicalGrid> = g
        .iter()
        .map(|c| {
            let mut c = c.clone();
            for (x, f) in c.values_mut().iter_mut().zip(&w) {
                *x *= f;
            }
            c
        })
        .collect();
    vector_to_spectral(t, &prod)
}

/// `𝒜_r(v) = 𝒫(|v|^{r-1} v)`.
pub fn forchheimer(ts: &TransformSet, v: &VectorField, r: f64) -> VectorField {
    if r == 1.0 {
        return v.clone();
    }
    forchheimer_raw(ts, v, r).leray_project()
}

/// `∫ |v|^{r+1} dx` on the Forchheimer grid. Equals `⟨𝒜_r(v), v⟩` to
/// rounding for divergence-free `v`.
pub fn forchheimer_energy(ts: &TransformSet, v: &VectorField, r: f64) -> f64 {
    let t = forchheimer_grid(ts, r);
    let g = vector_to_physical(t, v);
    let len = g[0].values().len();
    let s: f64 = (0..len)
        .map(|p| {
            let m2: f64 = g.iter().map(|c| c.values()[p] * c.values()[p]).sum();
            m2.powf(0.5 * (r + 1.0))
        })
        .sum();
    s / len as f64 * v.domain().volume()
}

/// `|v|^{r-1} v` for one vector.
pub fn forchheimer_pointwise(v: &[f64], r: f64) -> Vec<f64> {
    let m: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let f = if r == 1.0 { 1.0 } else { m.powf(r - 1.0) };
    v.iter().map(|x| x * f).collect()
}

/// Jacobian of `x ↦ |v(x)|^{r-1} v(x)` given `v` and `grad[i][j] = ∂_j v_i`:
/// `J_ij = |v|^{r-1} ∂_j v_i + (r - 1)|v|^{r-3} v_i Σ_l v_l ∂_j v_l`.
///
/// The factor `|v|^{r-3}` is floored at `|v| ≥ 1e-12`; callers skip points
/// where `|v|` is that small.
pub fn forchheimer_jacobian(v: &[f64], grad: &[Vec<f64>], r: f64) -> Vec<Vec<f64>> {
    let d = v.len();
    let m = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r == 1.0 {
        return grad.to_vec();
    }
    let mf = m.max(1e-12);
    let a = mf.powf(r - 1.0);
    let b = (r - 1.0) * mf.powf(r - 3.0);
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let vg: f64 = (0..d).map(|l| v[l] * grad[l][j]).sum();
                    a * grad[i][j] + b * v[i] * vg
                })
                .collect()
        })
        .collect()
}

/// Result of comparing [`forchheimer_jacobian`] with central differences.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    /// `max |J - J_fd| / max(1, max |J|)` over accepted points.
    pub residual: f64,
    pub checked: usize,
    /// Points skipped because `|v(x)| ≤ 1e-6` with `r < 3`.
    pub skipped: usize,
}

/// Check the analytic Jacobian of `|v|^{r-1}v` against central differences
/// with step `1e-6`, evaluating `v` and `∇v` exactly by trigonometric sums.
pub fn forchheimer_gradient_check(v: &VectorField, r: f64, points: &[[f64; 3]]) -> GradientCheck {
    let dim = v.domain().dim();
    let grads: Vec<Vec<ScalarField>> = v
        .components()
        .iter()
        .map(|c| (0..dim).map(|a| c.derivative(a)).collect())
        .collect();
    let h = 1e-6;
    let mut residual = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for x in points {
        let val = v.evaluate(x);
        let m = val.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r < 3.0 && r != 1.0 && m <= 1e-6 {
            skipped += 1;
            continue;
        }
        let grad: Vec<Vec<f64>> = grads
            .iter()
            .map(|row| row.iter().map(|g| g.evaluate(x)).collect())
            .collect();
        let jac = forchheimer_jacobian(&val, &grad, r);
        let mut scale = 1.0f64;
        let mut worst = 0.0f64;
        for j in 0..dim {
            let mut xp = *x;
            let mut xm = *x;
            xp[j] += h;
            xm[j] -= h;
            let fp = forchheimer_pointwise(&v.evaluate(&xp), r);
            let fm = forchheimer_pointwise(&v.evaluate(&xm), r);
            for i in 0..dim {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                scale = scale.max(jac[i][j].abs());
                worst = worst.max((jac[i][j] - fd).abs());
            }
        }
        residual = residual.max(worst / scale);
        checked += 1;
    }
    GradientCheck {
        residual,
        checked,
        skipped,
    }
}

/// Unprojected truncation `P_N((y·∇)v)`.
pub fn convection_raw(ts: &TransformSet, y: &VectorField, v: &VectorField) -> VectorField {
    let t = ts.get(Padding::ThreeHalves);
    let dim = y.domain().dim();
    let yg = vector_to_physical(t, y);
    let out: Vec<PhysicalGrid> = v
        .components()
        .iter()
        .map(|vj| {
            let mut acc: Option<PhysicalGrid> = None;
            for (i, yi) in yg.iter().enumerate().take(dim) {
                let dv = t.to_physical(&vj.derivative(i));
                let term = yi.zip_map(&dv, |a, b| a * b);
                acc = Some(match acc {
                    None => term,
                    Some(a) => a.zip_map(&term, |p, q| p + q),
                });
            }
            acc.expect("dim ≥ 2")
        })
        .collect();
    vector_to_spectral(t, &out)
}

/// `B₀(y, v) = 𝒫((y·∇)v)`.
pub fn convection_b0(ts: &TransformSet, y: &VectorField, v: &VectorField) -> VectorField {
    convection_raw(ts, y, v).leray_project()
}

/// `b₀(y, v, ξ) = ∫ ((y·∇)v)·ξ`.
pub fn b0_form(ts: &TransformSet, y: &VectorField, v: &VectorField, xi: &VectorField) -> f64 {
    convection_raw(ts, y, v).inner(xi)
}

/// `B₁(v, φ) = P_N((v·∇)φ)`.
pub fn advection_b1(ts: &TransformSet, v: &VectorField, phi: &ScalarField) -> ScalarField {
    let t = ts.get(Padding::ThreeHalves);
    let vg = vector_to_physical(t, v);
    let mut acc: Option<PhysicalGrid> = None;
    for (i, vi) in vg.iter().enumerate() {
        let d = t.to_physical(&phi.derivative(i));
        let term = vi.zip_map(&d, |a, b| a * b);
        acc = Some(match acc {
            None => term,
            Some(a) => a.zip_map(&term, |p, q| p + q),
        });
    }
    t.to_spectral(&acc.expect("dim ≥ 2"))
}

/// `b₁(v, φ, θ) = ∫ (v·∇φ) θ`.
pub fn b1_form(ts: &TransformSet, v: &VectorField, phi: &ScalarField, theta: &ScalarField) -> f64 {
    advection_b1(ts, v, phi).inner(theta)
}

/// Grid for `ψ'(φ)` and `∫ψ(φ)`.
pub fn potential_padding() -> Padding {
    Padding::Double
}

/// `P_N ψ'(φ)`.
pub fn dpsi_field(ts: &TransformSet, phi: &ScalarField, potential: &PotentialSpec) -> ScalarField {
    let t = ts.get(potential_padding());
    let g = t.to_physical(phi).map(|s| potential.dpsi(s));
    t.to_spectral(&g)
}

/// `∫ ψ(φ) dx` on the same grid as `ψ'(φ)`, so that
/// `d/dt ∫ψ(φ) = (P_N ψ'(φ), ∂_t φ)` holds exactly.
pub fn potential_integral(ts: &TransformSet, phi: &ScalarField, potential: &PotentialSpec) -> f64 {
    ts.get(potential_padding())
        .integrate(phi, |s| potential.psi(s))
}

/// `μ = εA₁φ + ε⁻¹ P_N ψ'(φ)`.
pub fn chemical_potential(
    ts: &TransformSet,
    phi: &ScalarField,
    potential: &PotentialSpec,
    epsilon: f64,
) -> ScalarField {
    let mut mu = phi.neg_laplacian().scale(epsilon);
    mu.axpy(1.0 / epsilon, &dpsi_field(ts, phi, potential));
    mu
}

fn product_with_gradient(ts: &TransformSet, f: &ScalarField, phi: &ScalarField) -> VectorField {
    let t = ts.get(Padding::ThreeHalves);
    let fg = t.to_physical(f);
    let comps: Vec<PhysicalGrid> = (0..phi.domain().dim())
        .map(|a| fg.zip_map(&t.to_physical(&phi.derivative(a)), |x, y| x * y))
        .collect();
    vector_to_spectral(t, &comps)
}

/// `R₀(εA₁φ, φ) = 𝒫(εA₁φ ∇φ)`.
pub fn coupling_r0(ts: &TransformSet, phi: &ScalarField, epsilon: f64) -> VectorField {
    let a1phi = phi.neg_laplacian().scale(epsilon);
    product_with_gradient(ts, &a1phi, phi).leray_project()
}

/// `R₀(f, φ) = 𝒫(f ∇φ)` for an arbitrary scalar `f` (e.g. `μ`).
pub fn coupling_form(ts: &TransformSet, f: &ScalarField, phi: &ScalarField) -> VectorField {
    product_with_gradient(ts, f, phi).leray_project()
}

/// `P_N((Pσ - A - αu) h(φ))`.
pub fn phi_source(
    ts: &TransformSet,
    phi: &ScalarField,
    sigma: &ScalarField,
    u: f64,
    params: &ModelParams,
    h: &ProliferationSpec,
) -> ScalarField {
    let t = ts.nonpolynomial();
    let pg = t.to_physical(phi);
    let sg = t.to_physical(sigma);
    let shift = params.apoptosis + params.drug_efficacy * u;
    let g = sg.zip_map(&pg, |s, p| (params.proliferation * s - shift) * h.h(p));
    t.to_spectral(&g)
}

/// `P_N(cσh(φ)) + b(σ - w)`.
pub fn sigma_reaction(
    ts: &TransformSet,
    sigma: &ScalarField,
    phi: &ScalarField,
    w: &ScalarField,
    params: &ModelParams,
    h: &ProliferationSpec,
) -> ScalarField {
    let t = ts.nonpolynomial();
    let pg = t.to_physical(phi);
    let sg = t.to_physical(sigma);
    let g = sg.zip_map(&pg, |s, p| params.consumption * s * h.h(p));
    let mut out = t.to_spectral(&g);
    out.axpy(params.supply, sigma);
    out.axpy(-params.supply, w);
    out
}

/// `c ∫ σ² h(φ) dx` on the reaction grid; equals `(P_N(cσh(φ)), σ)`.
pub fn consumption_pairing(
    ts: &TransformSet,
    sigma: &ScalarField,
    phi: &ScalarField,
    params: &ModelParams,
    h: &ProliferationSpec,
) -> f64 {
    let t = ts.nonpolynomial();
    let pg = t.to_physical(phi);
    let sg = t.to_physical(sigma);
    params.consumption * sg.zip_map(&pg, |s, p| s * s * h.h(p)).integral()
}

/// Static aliasing audit of every nonlinear term for this resolution.
pub fn aliasing_report(
    ts: &TransformSet,
    params: &ModelParams,
    potential: &PotentialSpec,
) -> Vec<AliasingWarning> {
    let n = ts.domain().modes();
    let mut out = Vec::new();
    let double = Padding::Double.grid_points(n);
    let refined = ts.nonpolynomial().points();
    let r = params.r;
    if r != 1.0 {
        if !forchheimer_is_polynomial(r) {
            out.push(AliasingWarning {
                term: "forchheimer".into(),
                degree: None,
                grid_points: refined,
            });
        } else if !alias_free(double, n, r as usize) {
            out.push(AliasingWarning {
                term: "forchheimer".into(),
                degree: Some(r as usize),
                grid_points: double,
            });
        }
    }
    match potential.potential.degree() {
        Some(deg) if alias_free(double, n, deg.saturating_sub(1)) => {}
        degree => out.push(AliasingWarning {
            term: "psi'".into(),
            degree: degree.map(|d| d.saturating_sub(1)),
            grid_points: double,
        }),
    }
    for term in ["phi_source", "sigma_reaction"] {
        out.push(AliasingWarning {
            term: term.into(),
            degree: None,
            grid_points: refined,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::WaveVector;
    use crate::potentials::{double_well, smoothstep_h};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn dom() -> DomainSpec {
        DomainSpec::new(2, 2.0 * PI, 8).unwrap()
    }

    #[test]
    fn forchheimer_r1_is_identity() {
        let d = dom();
        let ts = TransformSet::new(d);
        let v = VectorField::single_mode(d, WaveVector::new2(1, 2), 0, Complex64::new(0.3, 0.1))
            .unwrap();
        assert_eq!(forchheimer(&ts, &v, 1.0), v);
    }

    #[test]
    fn chemical_potential_constants() {
        let d = dom();
        let ts = TransformSet::new(d);
        let p = double_well();
        for c in [0.0, 1.0, -1.0] {
            let mu = chemical_potential(&ts, &ScalarField::constant(d, c), &p, 0.5);
            assert!(mu.max_abs_coeff() < 1e-15);
        }
        let c = 0.3;
        let mu = chemical_potential(&ts, &ScalarField::constant(d, c), &p, 0.5);
        assert!((mu.mean() - 2.0 * (c * c * c - c)).abs() < 1e-15);
    }

    #[test]
    fn phi_source_vanishes_in_healthy_tissue_and_at_balance() {
        let d = dom();
        let ts = TransformSet::new(d);
        let params = ModelParams::default();
        let h = smoothstep_h();
        let s =
            ScalarField::single_mode(d, WaveVector::new2(1, 1), Complex64::new(0.2, 0.0)).unwrap();
        let out = phi_source(&ts, &ScalarField::constant(d, -1.0), &s, 0.5, &params, &h);
        assert_eq!(out.max_abs_coeff(), 0.0);
        let balanced = ScalarField::constant(d, params.apoptosis / params.proliferation);
        let out = phi_source(
            &ts,
            &ScalarField::constant(d, 1.0),
            &balanced,
            0.0,
            &params,
            &h,
        );
        assert!(out.max_abs_coeff() < 1e-15);
    }

    #[test]
    fn sigma_reaction_cases() {
        let d = dom();
        let ts = TransformSet::new(d);
        let params = ModelParams::default();
        let h = smoothstep_h();
        let s =
            ScalarField::single_mode(d, WaveVector::new2(2, 1), Complex64::new(0.2, 0.1)).unwrap();
        let out = sigma_reaction(&ts, &s, &ScalarField::constant(d, -1.0), &s, &params, &h);
        assert!(out.max_abs_coeff() < 1e-16);
        let out = sigma_reaction(
            &ts,
            &s,
            &ScalarField::constant(d, 1.0),
            &ScalarField::zeros(d),
            &params,
            &h,
        );
        let expect = s.scale(params.consumption + params.supply);
        assert!((&out - &expect).max_abs_coeff() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::default().validate(2).unwrap().is_none());
        let bad = ModelParams {
            nu: 0.0,
            ..Default::default()
        };
        assert!(bad.validate(2).is_err());
        let r = ModelParams {
            r: 3.5,
            ..Default::default()
        };
        assert!(r.validate(3).unwrap().is_some());
        assert!(r.validate(2).unwrap().is_none());
    }

    #[test]
    fn jacobian_of_constant_field() {
        let v = [0.3, -0.4];
        let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = 2.5;
        let j = forchheimer_jacobian(&v, &identity, r);
        let m: f64 = 0.5;
        for a in 0..2 {
            for b in 0..2 {
                let expect =
                    m.powf(r - 1.0) * identity[a][b] + (r - 1.0) * m.powf(r - 3.0) * v[a] * v[b];
                assert!((j[a][b] - expect).abs() < 1e-15);
            }
        }
    }
}
