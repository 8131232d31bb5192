//! Fourier eigenbasis of the periodic box `[0, L)^d`.
//!
//! Coefficients are stored as full complex arrays of length `N^d` in FFT
//! order: axis index `i` holds wavenumber `i` for `i < N/2` and `i - N` above.
//! The normalization is `f(x) = Σ_k c_k exp(i 2π k·x / L)`, so `c_0` is the
//! spatial mean and `‖f‖²_{L²} = L^d Σ |c_k|²`. Every norm in the crate is
//! computed from these two facts.
//!
//! Real-valued fields are Hermitian-symmetric. The Nyquist planes
//! (`k_i = -N/2`) have no conjugate partner inside the truncation, so every
//! constructor and projection in the crate keeps them at zero.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::BasisError;

/// Geometry and resolution of the periodic box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    dim: usize,
    side_length: f64,
    modes: usize,
}

impl DomainSpec {
    pub fn new(dim: usize, side_length: f64, modes: usize) -> Result<Self, BasisError> {
        if dim != 2 && dim != 3 {
            return Err(BasisError::Dimension(dim));
        }
        if !(side_length.is_finite() && side_length > 0.0) {
            return Err(BasisError::SideLength(side_length));
        }
        if modes < 4 || !modes.is_multiple_of(2) {
            return Err(BasisError::Modes(modes));
        }
        Ok(Self {
            dim,
            side_length,
            modes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    /// Modes per axis, `N`.
    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Total number of stored wavevectors, `N^d`.
    pub fn len(&self) -> usize {
        self.modes.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Domain volume `L^d`.
    pub fn volume(&self) -> f64 {
        self.side_length.powi(self.dim as i32)
    }

    /// `2π / L`.
    pub fn wavenumber_unit(&self) -> f64 {
        2.0 * PI / self.side_length
    }

    /// Same box at a different resolution.
    pub fn with_modes(&self, modes: usize) -> Result<Self, BasisError> {
        Self::new(self.dim, self.side_length, modes)
    }

    #[inline]
    fn axis_wavenumber(&self, i: usize) -> i64 {
        let n = self.modes as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Wavevector stored at flat index `index`.
    pub fn wavevector(&self, index: usize) -> WaveVector {
        let n = self.modes;
        let mut k = [0i64; 3];
        let mut rest = index;
        for axis in (0..self.dim).rev() {
            k[axis] = self.axis_wavenumber(rest % n);
            rest /= n;
        }
        WaveVector { k }
    }

    /// Flat index of `k`, or a range error when `k` lies outside `[-N/2, N/2)^d`.
    pub fn index_of(&self, k: &WaveVector) -> Result<usize, BasisError> {
        let half = (self.modes / 2) as i64;
        let n = self.modes as i64;
        let mut index = 0usize;
        for axis in 0..3 {
            let ka = k.k[axis];
            if axis >= self.dim {
                if ka != 0 {
                    return Err(BasisError::OutOfRange(*k));
                }
                continue;
            }
            if ka < -half || ka >= half {
                return Err(BasisError::OutOfRange(*k));
            }
            index = index * self.modes + ka.rem_euclid(n) as usize;
        }
        Ok(index)
    }

    /// `|k|²` as an exact integer.
    #[inline]
    pub fn norm_sq_of_index(&self, index: usize) -> i64 {
        self.wavevector(index).norm_sq()
    }

    /// Laplacian / Stokes eigenvalue `(2π/L)² |k|²` at `index`.
    #[inline]
    pub fn eigenvalue_of_index(&self, index: usize) -> f64 {
        let unit = self.wavenumber_unit();
        unit * unit * self.norm_sq_of_index(index) as f64
    }

    /// True when some component of the wavevector sits on `-N/2`.
    pub fn is_nyquist(&self, index: usize) -> bool {
        let half = -((self.modes / 2) as i64);
        let k = self.wavevector(index);
        k.k[..self.dim].contains(&half)
    }

    /// Index of `-k`; only meaningful off the Nyquist planes.
    pub fn negated_index(&self, index: usize) -> usize {
        let n = self.modes;
        let mut out = 0usize;
        let mut stride = 1usize;
        let mut rest = index;
        for _ in 0..self.dim {
            let i = rest % n;
            rest /= n;
            out += ((n - i) % n) * stride;
            stride *= n;
        }
        out
    }

    /// Stokes / Laplacian eigenvalue of a wavevector.
    pub fn stokes_eigenvalue(&self, k: &WaveVector) -> Result<f64, BasisError> {
        self.index_of(k)?;
        let unit = self.wavenumber_unit();
        Ok(unit * unit * k.norm_sq() as f64)
    }

    /// Sorted nonzero eigenvalues over all stored wavevectors, one entry per
    /// wavevector.
    pub fn eigenvalue_ladder(&self) -> Vec<f64> {
        ModeOrdering::velocity(*self)
            .ranked_indices()
            .iter()
            .map(|&i| self.eigenvalue_of_index(i))
            .collect()
    }
}

/// Integer wavevector; components past the domain dimension are zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveVector {
    pub k: [i64; 3],
}

impl WaveVector {
    pub fn new2(k0: i64, k1: i64) -> Self {
        Self { k: [k0, k1, 0] }
    }

    pub fn new3(k0: i64, k1: i64, k2: i64) -> Self {
        Self { k: [k0, k1, k2] }
    }

    pub fn norm_sq(&self) -> i64 {
        self.k.iter().map(|c| c * c).sum()
    }

    pub fn neg(&self) -> Self {
        Self {
            k: [-self.k[0], -self.k[1], -self.k[2]],
        }
    }

    /// Representative of the pair `{k, -k}`: first nonzero component positive.
    pub fn is_positive_half(&self) -> bool {
        for c in self.k {
            match c.cmp(&0) {
                Ordering::Greater => return true,
                Ordering::Less => return false,
                Ordering::Equal => {}
            }
        }
        false
    }
}

impl std::fmt::Display for WaveVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.k[0], self.k[1], self.k[2])
    }
}

/// Real scalar field in spectral form (φ, σ, μ, w, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    domain: DomainSpec,
    coeffs: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(domain: DomainSpec) -> Self {
        Self {
            domain,
            coeffs: vec![Complex64::new(0.0, 0.0); domain.len()],
        }
    }

    pub fn from_coeffs(domain: DomainSpec, coeffs: Vec<Complex64>) -> Result<Self, BasisError> {
        if coeffs.len() != domain.len() {
            return Err(BasisError::Length {
                expected: domain.len(),
                found: coeffs.len(),
            });
        }
        Ok(Self { domain, coeffs })
    }

    /// Spatially constant field.
    pub fn constant(domain: DomainSpec, value: f64) -> Self {
        let mut f = Self::zeros(domain);
        f.coeffs[0] = Complex64::new(value, 0.0);
        f
    }

    /// Real field `amplitude·exp(ik·x) + conj`, i.e. `2|a| cos(k·x + arg a)`
    /// for `k ≠ 0`, or the constant `Re a` for `k = 0`.
    pub fn single_mode(
        domain: DomainSpec,
        k: WaveVector,
        amplitude: Complex64,
    ) -> Result<Self, BasisError> {
        let index = domain.index_of(&k)?;
        if domain.is_nyquist(index) {
            return Err(BasisError::Nyquist(k));
        }
        let mut f = Self::zeros(domain);
        if index == 0 {
            f.coeffs[0] = Complex64::new(amplitude.re, 0.0);
        } else {
            f.coeffs[index] = amplitude;
            f.coeffs[domain.negated_index(index)] = amplitude.conj();
        }
        Ok(f)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Spatial average.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Largest `|c(-k) - conj c(k)|` plus any Nyquist content.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.coeffs.len() {
            if self.domain.is_nyquist(i) {
                worst = worst.max(self.coeffs[i].norm());
                continue;
            }
            let j = self.domain.negated_index(i);
            worst = worst.max((self.coeffs[j] - self.coeffs[i].conj()).norm());
        }
        worst
    }

    /// Enforce Hermitian symmetry (average with the conjugate partner) and
    /// clear the Nyquist planes.
    pub fn symmetrize(&mut self) {
        let d = self.domain;
        for i in 0..self.coeffs.len() {
            if d.is_nyquist(i) {
                self.coeffs[i] = Complex64::new(0.0, 0.0);
                continue;
            }
            let j = d.negated_index(i);
            if j < i {
                continue;
            }
            if j == i {
                self.coeffs[i].im = 0.0;
                continue;
            }
            let avg = (self.coeffs[i] + self.coeffs[j].conj()) * 0.5;
            self.coeffs[i] = avg;
            self.coeffs[j] = avg.conj();
        }
    }

    fn check_same(&self, other: &Self) {
        assert_eq!(
            self.domain, other.domain,
            "fields live on different domains"
        );
    }

    /// `(f, g)_{L²}`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.check_same(other);
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        s * self.domain.volume()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.domain.volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `Σ (1 + β^s) |c|² L^d` for `s > 0`; the plain L² norm for `s = 0`.
    pub fn hs_norm_sq(&self, s: f64) -> f64 {
        if s == 0.0 {
            return self.l2_norm_sq();
        }
        self.weighted_sum(|beta| 1.0 + beta.powf(s))
    }

    /// `‖A^α f‖²_{L²}` with the convention `0^0 = 1`.
    pub fn fractional_norm_sq(&self, alpha: f64) -> f64 {
        self.weighted_sum(|beta| eigen_power(beta, 2.0 * alpha))
    }

    /// `(A^{1/2} f, A^{1/2} g) = (∇f, ∇g)`.
    pub fn gradient_inner(&self, other: &Self) -> f64 {
        self.check_same(other);
        let d = self.domain;
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (a, b))| d.eigenvalue_of_index(i) * (a * b.conj()).re)
            .sum();
        s * d.volume()
    }

    fn weighted_sum(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let d = self.domain;
        let s: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| weight(d.eigenvalue_of_index(i)) * c.norm_sqr())
            .sum();
        s * d.volume()
    }

    /// `A^α f`: each coefficient scaled by `eigenvalue^α`.
    pub fn fractional_apply(&self, alpha: f64) -> Result<Self, BasisError> {
        if alpha < 0.0 && self.coeffs[0].norm() != 0.0 {
            return Err(BasisError::Singular(alpha));
        }
        Ok(self.map_eigen(|beta| eigen_power(beta, alpha)))
    }

    /// `A f = -Δf`.
    pub fn neg_laplacian(&self) -> Self {
        self.map_eigen(|beta| beta)
    }

    /// Multiply every coefficient by a function of its eigenvalue.
    pub fn map_eigen(&self, weight: impl Fn(f64) -> f64) -> Self {
        let d = self.domain;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * weight(d.eigenvalue_of_index(i)))
            .collect();
        Self { domain: d, coeffs }
    }

    /// Partial derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        let d = self.domain;
        let unit = d.wavenumber_unit();
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = d.wavevector(i).k[axis] as f64 * unit;
                c * Complex64::new(0.0, k)
            })
            .collect();
        Self { domain: d, coeffs }
    }

    pub fn gradient(&self) -> VectorField {
        VectorField {
            components: (0..self.domain.dim).map(|a| self.derivative(a)).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            domain: self.domain,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// `self += factor * other`.
    pub fn axpy(&mut self, factor: f64, other: &Self) {
        self.check_same(other);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * factor;
        }
    }

    /// Largest coefficient magnitude.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Re-express on another resolution of the same box: zero-padding upward,
    /// truncation downward.
    pub fn resample(&self, target: DomainSpec) -> Self {
        assert_eq!(self.domain.dim, target.dim);
        assert_eq!(self.domain.side_length, target.side_length);
        let mut out = Self::zeros(target);
        for (i, c) in self.coeffs.iter().enumerate() {
            if self.domain.is_nyquist(i) {
                continue;
            }
            let k = self.domain.wavevector(i);
            if let Ok(j) = target.index_of(&k) {
                if !target.is_nyquist(j) {
                    out.coeffs[j] = *c;
                }
            }
        }
        out
    }

    /// Point evaluation by direct summation.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let d = self.domain;
        let unit = d.wavenumber_unit();
        let mut s = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let k = d.wavevector(i);
            let phase: f64 = (0..d.dim).map(|a| k.k[a] as f64 * x[a]).sum::<f64>() * unit;
            s += (c * Complex64::from_polar(1.0, phase)).re;
        }
        s
    }
}

#[inline]
fn eigen_power(beta: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if beta == 0.0 {
        if p > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        beta.powf(p)
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: Self) -> ScalarField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: Self) -> ScalarField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.scale(rhs)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scale(-1.0)
    }
}

/// Vector field, one [`ScalarField`] per axis. Velocities are kept
/// divergence-free and mean-free; raw (unprojected) vector fields such as
/// gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(domain: DomainSpec) -> Self {
        Self {
            components: (0..domain.dim)
                .map(|_| ScalarField::zeros(domain))
                .collect(),
        }
    }

    pub fn from_components(components: Vec<ScalarField>) -> Result<Self, BasisError> {
        let Some(first) = components.first() else {
            return Err(BasisError::Components {
                expected: 2,
                found: 0,
            });
        };
        let d = first.domain;
        if components.len() != d.dim {
            return Err(BasisError::Components {
                expected: d.dim,
                found: components.len(),
            });
        }
        if components.iter().any(|c| c.domain != d) {
            return Err(BasisError::DomainMismatch);
        }
        Ok(Self { components })
    }

    /// Divergence-free plane wave `amplitude·p·exp(ik·x) + conj` with unit
    /// polarization `p ⟂ k` chosen by [`polarizations`].
    pub fn single_mode(
        domain: DomainSpec,
        k: WaveVector,
        polarization: usize,
        amplitude: Complex64,
    ) -> Result<Self, BasisError> {
        let index = domain.index_of(&k)?;
        if index == 0 {
            return Err(BasisError::MeanVelocity);
        }
        let pols = polarizations(&k, domain.dim);
        let p = pols
            .get(polarization)
            .ok_or(BasisError::Polarization(polarization))?;
        let mut components = Vec::with_capacity(domain.dim);
        for &pa in &p[..domain.dim] {
            components.push(ScalarField::single_mode(domain, k, amplitude * pa)?);
        }
        Ok(Self { components })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.components[0].domain
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [ScalarField] {
        &mut self.components
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.inner(b))
            .sum()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.components.iter().map(|c| c.l2_norm_sq()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `‖A^α v‖²`, componentwise (the Stokes operator is the vector Laplacian
    /// on the torus).
    pub fn fractional_norm_sq(&self, alpha: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.fractional_norm_sq(alpha))
            .sum()
    }

    pub fn hs_norm_sq(&self, s: f64) -> f64 {
        self.components.iter().map(|c| c.hs_norm_sq(s)).sum()
    }

    /// `‖∇v‖² = ‖A^{1/2} v‖²`.
    pub fn gradient_norm_sq(&self) -> f64 {
        self.fractional_norm_sq(0.5)
    }

    pub fn fractional_apply(&self, alpha: f64) -> Result<Self, BasisError> {
        let components = self
            .components
            .iter()
            .map(|c| c.fractional_apply(alpha))
            .collect::<Result<_, _>>()?;
        Ok(Self { components })
    }

    pub fn map_eigen(&self, weight: impl Fn(f64) -> f64 + Copy) -> Self {
        Self {
            components: self
                .components
                .iter()
                .map(|c| c.map_eigen(weight))
                .collect(),
        }
    }

    pub fn divergence(&self) -> ScalarField {
        let mut out = self.components[0].derivative(0);
        for (axis, c) in self.components.iter().enumerate().skip(1) {
            out.axpy(1.0, &c.derivative(axis));
        }
        out
    }

    /// Largest `|k·c(k)| / (|k| |c(k)|)` over nonzero coefficients.
    pub fn divergence_residual(&self) -> f64 {
        let d = *self.domain();
        let mut worst = 0.0f64;
        for i in 1..d.len() {
            let k = d.wavevector(i);
            let mut dot = Complex64::new(0.0, 0.0);
            let mut mag = 0.0;
            for axis in 0..d.dim {
                let c = self.components[axis].coeffs[i];
                dot += c * k.k[axis] as f64;
                mag += c.norm_sqr();
            }
            if mag > 0.0 {
                worst = worst.max(dot.norm() / ((k.norm_sq() as f64).sqrt() * mag.sqrt()));
            }
        }
        worst
    }

    /// Leray–Helmholtz projection: `(I - k kᵀ/|k|²) c(k)`, mean removed.
    pub fn leray_project(&self) -> Self {
        let d = *self.domain();
        let dim = d.dim;
        let mut out = self.clone();
        for axis in 0..dim {
            out.components[axis].coeffs[0] = Complex64::new(0.0, 0.0);
        }
        for i in 1..d.len() {
            let k = d.wavevector(i);
            let kk = k.norm_sq() as f64;
            let mut dot = Complex64::new(0.0, 0.0);
            for axis in 0..dim {
                dot += self.components[axis].coeffs[i] * k.k[axis] as f64;
            }
            let factor = dot / kk;
            for axis in 0..dim {
                out.components[axis].coeffs[i] -= factor * k.k[axis] as f64;
            }
        }
        out
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c.scale(factor)).collect(),
        }
    }

    pub fn axpy(&mut self, factor: f64, other: &Self) {
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.axpy(factor, b);
        }
    }

    pub fn symmetrize(&mut self) {
        for c in &mut self.components {
            c.symmetrize();
        }
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.hermitian_defect())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.max_abs_coeff())
            .fold(0.0, f64::max)
    }

    pub fn resample(&self, target: DomainSpec) -> Self {
        Self {
            components: self.components.iter().map(|c| c.resample(target)).collect(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.evaluate(x)).collect()
    }
}

impl Add for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: Self) -> VectorField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: Self) -> VectorField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

/// Orthonormal polarization vectors spanning the plane `⟂ k` (one in 2D,
/// two in 3D). The same vectors are used for `k` and `-k`.
pub fn polarizations(k: &WaveVector, dim: usize) -> Vec<[f64; 3]> {
    let kf = [k.k[0] as f64, k.k[1] as f64, k.k[2] as f64];
    let norm = (k.norm_sq() as f64).sqrt();
    if dim == 2 {
        return vec![[-kf[1] / norm, kf[0] / norm, 0.0]];
    }
    // axis least aligned with k
    let mut axis = 0;
    for a in 1..3 {
        if kf[a].abs() < kf[axis].abs() {
            axis = a;
        }
    }
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let p1 = normalize(cross(&kf, &e));
    let khat = [kf[0] / norm, kf[1] / norm, kf[2] / norm];
    let p2 = normalize(cross(&khat, &p1));
    vec![p1, p2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Which eigenbasis a [`ModeOrdering`] ranks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    /// Laplacian basis for φ, σ, μ; rank 1 is the mean mode (eigenvalue 0).
    Scalar,
    /// Stokes basis for v; the mean mode is excluded so rank 1 has a
    /// strictly positive eigenvalue.
    Velocity,
}

/// Wavevectors ranked by ascending eigenvalue, ties broken by lexicographic
/// order of `k`. Ranks are 1-based to match `λ_1 ≤ λ_2 ≤ …`.
#[derive(Clone, Debug)]
pub struct ModeOrdering {
    domain: DomainSpec,
    kind: BasisKind,
    ranked: Vec<usize>,
    rank_of: Vec<usize>,
}

impl ModeOrdering {
    pub fn new(domain: DomainSpec, kind: BasisKind) -> Self {
        let start = match kind {
            BasisKind::Scalar => 0,
            BasisKind::Velocity => 1,
        };
        let mut keyed: Vec<(i64, WaveVector, usize)> = (start..domain.len())
            .map(|i| (domain.norm_sq_of_index(i), domain.wavevector(i), i))
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.k.cmp(&b.1.k)));
        let ranked: Vec<usize> = keyed.into_iter().map(|(_, _, i)| i).collect();
        let mut rank_of = vec![0usize; domain.len()];
        for (r, &i) in ranked.iter().enumerate() {
            rank_of[i] = r + 1;
        }
        Self {
            domain,
            kind,
            ranked,
            rank_of,
        }
    }

    pub fn scalar(domain: DomainSpec) -> Self {
        Self::new(domain, BasisKind::Scalar)
    }

    pub fn velocity(domain: DomainSpec) -> Self {
        Self::new(domain, BasisKind::Velocity)
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Number of ranked wavevectors.
    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn ranked_indices(&self) -> &[usize] {
        &self.ranked
    }

    /// 1-based rank of a flat index; 0 for the excluded mean mode of the
    /// velocity basis.
    pub fn rank_of(&self, index: usize) -> usize {
        self.rank_of[index]
    }

    /// Flat index at 1-based rank `n`.
    pub fn index_at_rank(&self, n: usize) -> Result<usize, BasisError> {
        if n == 0 || n > self.ranked.len() {
            return Err(BasisError::Rank {
                rank: n,
                size: self.ranked.len(),
            });
        }
        Ok(self.ranked[n - 1])
    }

    /// `λ_n` (or `β_n`), 1-based.
    pub fn eigenvalue_at_rank(&self, n: usize) -> Result<f64, BasisError> {
        Ok(self.domain.eigenvalue_of_index(self.index_at_rank(n)?))
    }

    fn check_cutoff(&self, n: usize) -> Result<(), BasisError> {
        if n > self.ranked.len() {
            return Err(BasisError::Rank {
                rank: n,
                size: self.ranked.len(),
            });
        }
        Ok(())
    }

    /// Whether the `n` lowest modes are closed under `k ↦ -k` (ignoring the
    /// Nyquist planes), i.e. whether `P_n` maps real fields to real fields.
    pub fn is_pair_closed(&self, n: usize) -> bool {
        let d = self.domain;
        self.ranked[..n.min(self.ranked.len())]
            .iter()
            .filter(|&&i| !d.is_nyquist(i))
            .all(|&i| {
                let r = self.rank_of[d.negated_index(i)];
                r >= 1 && r <= n
            })
    }

    /// Keep modes of rank `≤ n` (`P_n`), or with `keep_low = false` the
    /// complement `Q_n = I - P_n`.
    fn split(&self, field: &ScalarField, n: usize, keep_low: bool) -> ScalarField {
        let mut out = field.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let r = self.rank_of[i];
            // velocity basis: the excluded mean belongs to neither part
            let low = r >= 1 && r <= n;
            let high = r > n || (r == 0 && self.kind == BasisKind::Scalar);
            let keep = if keep_low { low } else { high };
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    pub fn project_low(&self, field: &ScalarField, n: usize) -> Result<ScalarField, BasisError> {
        self.check_cutoff(n)?;
        Ok(self.split(field, n, true))
    }

    pub fn project_high(&self, field: &ScalarField, n: usize) -> Result<ScalarField, BasisError> {
        self.check_cutoff(n)?;
        Ok(self.split(field, n, false))
    }

    pub fn project_low_vector(
        &self,
        field: &VectorField,
        n: usize,
    ) -> Result<VectorField, BasisError> {
        self.check_cutoff(n)?;
        Ok(VectorField {
            components: field
                .components
                .iter()
                .map(|c| self.split(c, n, true))
                .collect(),
        })
    }

    pub fn project_high_vector(
        &self,
        field: &VectorField,
        n: usize,
    ) -> Result<VectorField, BasisError> {
        self.check_cutoff(n)?;
        Ok(VectorField {
            components: field
                .components
                .iter()
                .map(|c| self.split(c, n, false))
                .collect(),
        })
    }
}
