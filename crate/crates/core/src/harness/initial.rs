//! Keyed random fields and smooth initial data.
//!
//! Initial data draws one generator per `(seed, field, wavevector)`, so the
//! same configuration produces the same low-mode content at every grid size
//! that resolves it. That is what makes cross-resolution comparisons fair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{DomainSpec, ScalarField, VectorField, WaveVector};
use crate::error::HarnessError;
use crate::operators::SystemState;
use crate::Complex64;

/// Deterministic generator for a label and a list of integer keys.
pub fn keyed_rng(label: &str, keys: &[i64]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    for k in keys {
        h.update(k.to_le_bytes());
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub seed: u64,
    /// Largest `|k|` carrying energy.
    pub kmax: i64,
    /// RMS of the velocity.
    pub velocity: f64,
    /// RMS of `φ - mean φ`.
    pub phi_amplitude: f64,
    pub phi_mean: f64,
    /// RMS of `σ - mean σ`.
    pub sigma_amplitude: f64,
    pub sigma_mean: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            kmax: 3,
            velocity: 0.3,
            phi_amplitude: 0.3,
            phi_mean: 0.0,
            sigma_amplitude: 0.1,
            sigma_mean: 0.8,
        }
    }
}

/// Smooth field with energy on `0 < |k| ≤ kmax`, mean `mean` and RMS
/// fluctuation `rms`.
fn keyed_scalar(
    domain: DomainSpec,
    seed: u64,
    tag: i64,
    kmax: i64,
    mean: f64,
    rms: f64,
) -> ScalarField {
    let mut f = ScalarField::zeros(domain);
    let dim = domain.dim();
    let range = -kmax..=kmax;
    let mut ks = Vec::new();
    for a in range.clone() {
        for b in range.clone() {
            for c in if dim == 3 { range.clone() } else { 0..=0 } {
                let k = if dim == 3 {
                    WaveVector::new3(a, b, c)
                } else {
                    WaveVector::new2(a, b)
                };
                if k.is_positive_half() && k.norm_sq() <= kmax * kmax {
                    ks.push(k);
                }
            }
        }
    }
    for k in ks {
        let mut rng = keyed_rng("chcbf-initial", &[seed as i64, tag, k.k[0], k.k[1], k.k[2]]);
        let w = 1.0 / (1.0 + k.norm_sq() as f64);
        let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
        let i = domain.index_of(&k).expect("kmax checked against the grid");
        let j = domain.negated_index(i);
        f.coeffs_mut()[i] = z;
        f.coeffs_mut()[j] = z.conj();
    }
    let norm = (f.l2_norm_sq() / domain.volume()).sqrt();
    let mut f = if norm > 0.0 { f.scale(rms / norm) } else { f };
    f.coeffs_mut()[0] = Complex64::new(mean, 0.0);
    f
}

/// Initial state from `spec`; fails if the grid cannot hold `kmax`.
pub fn initial_state(spec: &InitialSpec, domain: DomainSpec) -> Result<SystemState, HarnessError> {
    if spec.kmax < 1 || 2 * spec.kmax >= domain.modes() as i64 {
        return Err(HarnessError::Config(format!(
            "initial.kmax = {} needs modes > {}",
            spec.kmax,
            2 * spec.kmax
        )));
    }
    let dim = domain.dim();
    let comps = (0..dim)
        .map(|a| keyed_scalar(domain, spec.seed, 10 + a as i64, spec.kmax, 0.0, 1.0))
        .collect();
    let v = VectorField::from_components(comps)
        .expect("dim components")
        .leray_project();
    let vn = (v.l2_norm_sq() / domain.volume()).sqrt();
    let v = if vn > 0.0 {
        v.scale(spec.velocity / vn)
    } else {
        v
    };
    let phi = keyed_scalar(
        domain,
        spec.seed,
        1,
        spec.kmax,
        spec.phi_mean,
        spec.phi_amplitude,
    );
    let sigma = keyed_scalar(
        domain,
        spec.seed,
        2,
        spec.kmax,
        spec.sigma_mean,
        spec.sigma_amplitude,
    );
    Ok(SystemState::new(v, phi, sigma))
}

/// Random real field over every resolved mode with coefficient envelope
/// `(1 + |k|²)^{-decay/2}`.
pub fn random_scalar(domain: DomainSpec, rng: &mut impl Rng, decay: f64) -> ScalarField {
    let mut f = ScalarField::zeros(domain);
    for i in 0..domain.len() {
        let k = domain.wavevector(i);
        if domain.is_nyquist(i) || !(k.is_positive_half() || k.norm_sq() == 0) {
            continue;
        }
        let w = (1.0 + k.norm_sq() as f64).powf(-decay / 2.0);
        if k.norm_sq() == 0 {
            f.coeffs_mut()[i] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
            continue;
        }
        let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
        let j = domain.negated_index(i);
        f.coeffs_mut()[i] = z;
        f.coeffs_mut()[j] = z.conj();
    }
    f
}

/// Random divergence-free, mean-free velocity.
pub fn random_velocity(domain: DomainSpec, rng: &mut impl Rng, decay: f64) -> VectorField {
    let comps = (0..domain.dim())
        .map(|_| random_scalar(domain, rng, decay))
        .collect();
    VectorField::from_components(comps)
        .expect("dim components")
        .leray_project()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn initial_data_is_resolution_independent() {
        let spec = InitialSpec::default();
        let a = initial_state(&spec, DomainSpec::new(2, 2.0 * PI, 16).unwrap()).unwrap();
        let b = initial_state(&spec, DomainSpec::new(2, 2.0 * PI, 64).unwrap()).unwrap();
        let diff = a.resample(*b.domain()).difference(&b);
        assert!(diff.v_norm_sq() < 1e-26);
        assert!((a.phi.mean() - spec.phi_mean).abs() < 1e-15);
        assert!(a.v.divergence_residual() < 1e-12);
        let rms = (a.v.l2_norm_sq() / (4.0 * PI * PI)).sqrt();
        assert!((rms - spec.velocity).abs() < 1e-12);
    }

    #[test]
    fn grid_must_hold_kmax() {
        let spec = InitialSpec::default();
        assert!(initial_state(&spec, DomainSpec::new(2, 1.0, 6).unwrap()).is_err());
    }

    #[test]
    fn random_fields_are_real() {
        let d = DomainSpec::new(3, 1.0, 8).unwrap();
        let mut rng = keyed_rng("t", &[1]);
        let f = random_scalar(d, &mut rng, 1.0);
        assert_eq!(f.hermitian_defect(), 0.0);
        let v = random_velocity(d, &mut rng, 1.0);
        assert!(v.divergence_residual() < 1e-12);
    }
}
