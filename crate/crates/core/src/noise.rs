//! Truncated cylindrical Wiener noise with diagonal coefficient operators.
//!
//! Each channel expands in a real orthonormal basis of `L²` built from the
//! Fourier modes: the mean mode `L^{-d/2}` (nutrient channel only) and, for
//! every wavevector `k` in the positive half-space, `√2 L^{-d/2} cos(k·x) p`
//! and `√2 L^{-d/2} sin(k·x) p`, with `p` running over the polarizations
//! (`p = 1` for scalars, unit vectors `⟂ k` for velocities).
//!
//! The coefficient operator is diagonal in that basis,
//! `G(x) e_j = (a_j + m_j x_j) e_j`, with `x_j = (x, e_j)`,
//! `a_j = a₀(1 + λ_j)^{-s_a}` and `m_j = m₀(1 + λ_j)^{-s_m}`. Because the
//! Sobolev norms are diagonal in the same basis, Lipschitz and growth bounds
//! hold at every regularity level with constant `max_j m_j`.
//!
//! Random numbers are keyed, not sequential: the Gaussian driving direction
//! `e_j` at step `n` depends only on `(seed, trajectory, channel, n, k, p,
//! cos/sin)`. Two runs at different resolutions therefore see identical
//! increments on the modes they share.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{polarizations, DomainSpec, ModeOrdering, ScalarField, VectorField, WaveVector};
use crate::error::NoiseError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Velocity,
    Nutrient,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Velocity => "velocity",
            Channel::Nutrient => "nutrient",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Channel::Velocity => 1,
            Channel::Nutrient => 2,
        }
    }
}

/// Amplitude profile of one noise channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub channel: Channel,
    /// Additive amplitude `a₀`.
    pub additive: f64,
    /// Additive decay exponent `s_a`.
    pub additive_decay: f64,
    /// Multiplicative amplitude `m₀`.
    pub multiplicative: f64,
    /// Multiplicative decay exponent `s_m`.
    pub multiplicative_decay: f64,
    /// Number of retained Wiener directions; `None` keeps every direction of
    /// the Galerkin space.
    pub truncation: Option<usize>,
}

impl NoiseSpec {
    pub fn zero(channel: Channel) -> Self {
        Self {
            channel,
            additive: 0.0,
            additive_decay: 2.0,
            multiplicative: 0.0,
            multiplicative_decay: 0.0,
            truncation: None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.additive == 0.0 && self.multiplicative == 0.0
    }

    pub fn additive_amplitude(&self, eigenvalue: f64) -> f64 {
        self.additive * (1.0 + eigenvalue).powf(-self.additive_decay)
    }

    pub fn multiplicative_amplitude(&self, eigenvalue: f64) -> f64 {
        self.multiplicative * (1.0 + eigenvalue).powf(-self.multiplicative_decay)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Mean,
    Cos,
    Sin,
}

/// One retained real basis direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    pub k: WaveVector,
    /// Flat spectral index of `k` and of `-k`.
    pub index: usize,
    pub neg_index: usize,
    pub polarization: usize,
    pub phase: Phase,
    pub eigenvalue: f64,
    /// Resolution-independent random-stream key.
    pub key: u64,
}

fn zigzag(x: i64) -> u64 {
    ((x << 1) ^ (x >> 63)) as u64
}

fn direction_key(k: &WaveVector, polarization: usize, phase: Phase) -> u64 {
    let z = zigzag(k.k[0]) | (zigzag(k.k[1]) << 16) | (zigzag(k.k[2]) << 32);
    let p = match phase {
        Phase::Mean | Phase::Cos => 0,
        Phase::Sin => 1,
    };
    z * 4 + polarization as u64 * 2 + p
}

/// The ordered list of Wiener directions for one channel and cutoff.
#[derive(Clone, Debug)]
pub struct NoiseBasis {
    domain: DomainSpec,
    channel: Channel,
    components: usize,
    directions: Vec<Direction>,
    pols: Vec<Vec<[f64; 3]>>,
}

impl NoiseBasis {
    /// Directions of the Galerkin space of the `galerkin_n` lowest modes
    /// (all modes when `None`), ordered by eigenvalue rank, polarization and
    /// phase, and truncated to the first `truncation` entries.
    pub fn new(
        domain: DomainSpec,
        channel: Channel,
        galerkin_n: Option<usize>,
        truncation: Option<usize>,
    ) -> Self {
        let ordering = match channel {
            Channel::Velocity => ModeOrdering::velocity(domain),
            Channel::Nutrient => ModeOrdering::scalar(domain),
        };
        let n = galerkin_n.unwrap_or(ordering.len()).min(ordering.len());
        let components = match channel {
            Channel::Velocity => domain.dim(),
            Channel::Nutrient => 1,
        };
        let mut directions = Vec::new();
        let mut pols = vec![Vec::new(); domain.len()];
        for &i in &ordering.ranked_indices()[..n] {
            if domain.is_nyquist(i) {
                continue;
            }
            let k = domain.wavevector(i);
            let eigenvalue = domain.eigenvalue_of_index(i);
            if i == 0 {
                if channel == Channel::Nutrient {
                    directions.push(Direction {
                        k,
                        index: 0,
                        neg_index: 0,
                        polarization: 0,
                        phase: Phase::Mean,
                        eigenvalue,
                        key: direction_key(&k, 0, Phase::Mean),
                    });
                    pols[0] = vec![[1.0, 0.0, 0.0]];
                }
                continue;
            }
            if !k.is_positive_half() {
                continue;
            }
            let neg = domain.negated_index(i);
            // the partner must be inside the cutoff for a real direction
            let rank_neg = ordering.rank_of(neg);
            if rank_neg == 0 || rank_neg > n {
                continue;
            }
            let p = match channel {
                Channel::Velocity => polarizations(&k, domain.dim()),
                Channel::Nutrient => vec![[1.0, 0.0, 0.0]],
            };
            for pol in 0..p.len() {
                for phase in [Phase::Cos, Phase::Sin] {
                    directions.push(Direction {
                        k,
                        index: i,
                        neg_index: neg,
                        polarization: pol,
                        phase,
                        eigenvalue,
                        key: direction_key(&k, pol, phase),
                    });
                }
            }
            pols[i] = p;
        }
        if let Some(kmax) = truncation {
            directions.truncate(kmax);
        }
        Self {
            domain,
            channel,
            components,
            directions,
            pols,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    fn polarization(&self, d: &Direction) -> &[f64; 3] {
        &self.pols[d.index][d.polarization]
    }

    /// `x_j = (f, e_j)` for every direction; `comps` are the field's
    /// component coefficient arrays.
    fn coordinates(&self, comps: &[&[Complex64]]) -> Vec<f64> {
        let half_vol = self.domain.volume().sqrt();
        self.directions
            .iter()
            .map(|d| {
                if d.phase == Phase::Mean {
                    return half_vol * comps[0][0].re;
                }
                let p = self.polarization(d);
                let dot: Complex64 = comps
                    .iter()
                    .enumerate()
                    .map(|(a, c)| c[d.index] * p[a])
                    .sum();
                match d.phase {
                    Phase::Cos => SQRT_2 * half_vol * dot.re,
                    Phase::Sin => -SQRT_2 * half_vol * dot.im,
                    Phase::Mean => unreachable!(),
                }
            })
            .collect()
    }

    /// Add `Σ_j y_j e_j` to the component arrays.
    fn synthesize(&self, weights: &[f64], comps: &mut [Vec<Complex64>]) {
        let inv_half_vol = 1.0 / self.domain.volume().sqrt();
        for (d, &y) in self.directions.iter().zip(weights) {
            if y == 0.0 {
                continue;
            }
            if d.phase == Phase::Mean {
                comps[0][0] += Complex64::new(inv_half_vol * y, 0.0);
                continue;
            }
            let scale = inv_half_vol / SQRT_2 * y;
            let c = match d.phase {
                Phase::Cos => Complex64::new(scale, 0.0),
                Phase::Sin => Complex64::new(0.0, -scale),
                Phase::Mean => unreachable!(),
            };
            let p = *self.polarization(d);
            for (a, comp) in comps.iter_mut().enumerate() {
                comp[d.index] += c * p[a];
                comp[d.neg_index] += c.conj() * p[a];
            }
        }
    }

    /// Real field `Σ_j y_j e_j` (nutrient channel).
    pub fn scalar_from_coordinates(&self, y: &[f64]) -> ScalarField {
        let mut comps = vec![vec![Complex64::new(0.0, 0.0); self.domain.len()]];
        self.synthesize(y, &mut comps);
        ScalarField::from_coeffs(self.domain, comps.pop().expect("one component"))
            .expect("length matches")
    }

    /// Divergence-free field `Σ_j y_j e_j` (velocity channel).
    pub fn vector_from_coordinates(&self, y: &[f64]) -> VectorField {
        let mut comps = vec![vec![Complex64::new(0.0, 0.0); self.domain.len()]; self.components];
        self.synthesize(y, &mut comps);
        VectorField::from_components(
            comps
                .into_iter()
                .map(|c| ScalarField::from_coeffs(self.domain, c).expect("length matches"))
                .collect(),
        )
        .expect("component count matches")
    }

    pub fn scalar_coordinates(&self, f: &ScalarField) -> Vec<f64> {
        self.coordinates(&[f.coeffs()])
    }

    pub fn vector_coordinates(&self, v: &VectorField) -> Vec<f64> {
        let comps: Vec<&[Complex64]> = v.components().iter().map(|c| c.coeffs()).collect();
        self.coordinates(&comps)
    }
}

/// Independent Gaussian increments, one per retained direction.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerIncrement {
    pub channel: Channel,
    pub dt: f64,
    pub dw: Vec<f64>,
}

/// Counter-based Gaussian source for one `(seed, trajectory, channel)`.
///
/// Draw `(step, key)` always yields the same standard normal, regardless of
/// which other draws were made. Internally the ChaCha8 stream number is the
/// step and the word position is derived from the key; each sample consumes
/// exactly two `u64` words (Box–Muller, cosine branch).
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    channel: Channel,
}

impl NoiseStream {
    pub fn new(seed: u64, trajectory: u64, channel: Channel) -> Self {
        let mut h = Sha256::new();
        h.update(b"chcbf-noise");
        h.update(seed.to_le_bytes());
        h.update(trajectory.to_le_bytes());
        h.update([channel.tag()]);
        let digest: [u8; 32] = h.finalize().into();
        Self {
            rng: ChaCha8Rng::from_seed(digest),
            channel,
        }
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    /// Standard normal for draw `(step, key)`.
    pub fn standard_normal(&mut self, step: u64, key: u64) -> f64 {
        self.rng.set_stream(step);
        self.rng.set_word_pos(key as u128 * 4);
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        // u1 ∈ (0, 1], u2 ∈ [0, 1)
        let u1 = ((a >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// Increment over `[t_step, t_step + dt]` for every direction of `basis`.
    pub fn sample_increment(
        &mut self,
        step: u64,
        dt: f64,
        basis: &NoiseBasis,
    ) -> Result<WienerIncrement, NoiseError> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(NoiseError::TimeStep(dt));
        }
        if basis.channel != self.channel {
            return Err(NoiseError::ChannelMismatch {
                expected: basis.channel.name(),
                found: self.channel.name(),
            });
        }
        let sd = dt.sqrt();
        let dw = if dt == 0.0 {
            vec![0.0; basis.len()]
        } else {
            basis
                .directions
                .iter()
                .map(|d| sd * self.standard_normal(step, d.key))
                .collect()
        };
        Ok(WienerIncrement {
            channel: self.channel,
            dt,
            dw,
        })
    }
}

/// Regularity levels at which the coefficient operator is checked: `L²`,
/// `H¹` (or `V`) and `H²` (or `D(A₀)`).
pub const LEVELS: [f64; 3] = [0.0, 1.0, 2.0];

/// Squared `H^s` norm of a unit basis direction with eigenvalue `λ`.
pub fn level_weight(eigenvalue: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        1.0 + eigenvalue.powf(s)
    }
}

/// Diagonal coefficient operator `G` for one channel.
#[derive(Clone, Debug)]
pub struct NoiseOperator {
    spec: NoiseSpec,
    basis: NoiseBasis,
    additive: Vec<f64>,
    multiplicative: Vec<f64>,
}

impl NoiseOperator {
    pub fn new(spec: NoiseSpec, domain: DomainSpec, galerkin_n: Option<usize>) -> Self {
        let basis = NoiseBasis::new(domain, spec.channel, galerkin_n, spec.truncation);
        let additive = basis
            .directions
            .iter()
            .map(|d| spec.additive_amplitude(d.eigenvalue))
            .collect();
        let multiplicative = basis
            .directions
            .iter()
            .map(|d| spec.multiplicative_amplitude(d.eigenvalue))
            .collect();
        Self {
            spec,
            basis,
            additive,
            multiplicative,
        }
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn basis(&self) -> &NoiseBasis {
        &self.basis
    }

    /// `max_j |m_j|`, the uniform Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        self.multiplicative.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check(&self, channel: Channel, inc: Option<&WienerIncrement>) -> Result<(), NoiseError> {
        let found = inc.map(|i| i.channel).unwrap_or(channel);
        if self.spec.channel != channel || found != channel {
            return Err(NoiseError::ChannelMismatch {
                expected: self.spec.channel.name(),
                found: if found != channel {
                    found.name()
                } else {
                    channel.name()
                },
            });
        }
        Ok(())
    }

    fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        self.additive
            .iter()
            .zip(&self.multiplicative)
            .zip(x)
            .map(|((a, m), x)| a + m * x)
            .collect()
    }

    fn weighted_hs(&self, g: &[f64], s: f64) -> f64 {
        g.iter()
            .zip(&self.basis.directions)
            .map(|(g, d)| g * g * level_weight(d.eigenvalue, s))
            .sum()
    }

    /// `G(σ) dW` for the nutrient channel.
    pub fn apply_scalar(
        &self,
        sigma: &ScalarField,
        inc: &WienerIncrement,
    ) -> Result<ScalarField, NoiseError> {
        self.check(Channel::Nutrient, Some(inc))?;
        if sigma.domain() != self.basis.domain() {
            return Err(NoiseError::DomainMismatch);
        }
        let g = self.coefficients(&self.basis.scalar_coordinates(sigma));
        let y: Vec<f64> = g.iter().zip(&inc.dw).map(|(g, w)| g * w).collect();
        Ok(self.basis.scalar_from_coordinates(&y))
    }

    /// `G(v) dW` for the velocity channel; divergence-free by construction.
    pub fn apply_vector(
        &self,
        v: &VectorField,
        inc: &WienerIncrement,
    ) -> Result<VectorField, NoiseError> {
        self.check(Channel::Velocity, Some(inc))?;
        if v.domain() != self.basis.domain() {
            return Err(NoiseError::DomainMismatch);
        }
        let g = self.coefficients(&self.basis.vector_coordinates(v));
        let y: Vec<f64> = g.iter().zip(&inc.dw).map(|(g, w)| g * w).collect();
        Ok(self.basis.vector_from_coordinates(&y))
    }

    /// `G(x) dW` as a scalar field, from precomputed basis coordinates.
    pub fn scalar_update(
        &self,
        x: &[f64],
        inc: &WienerIncrement,
    ) -> Result<ScalarField, NoiseError> {
        self.check(Channel::Nutrient, Some(inc))?;
        let y: Vec<f64> = self
            .coefficients(x)
            .iter()
            .zip(&inc.dw)
            .map(|(g, w)| g * w)
            .collect();
        Ok(self.basis.scalar_from_coordinates(&y))
    }

    /// `G(x) dW` as a vector field, from precomputed basis coordinates.
    pub fn vector_update(
        &self,
        x: &[f64],
        inc: &WienerIncrement,
    ) -> Result<VectorField, NoiseError> {
        self.check(Channel::Velocity, Some(inc))?;
        let y: Vec<f64> = self
            .coefficients(x)
            .iter()
            .zip(&inc.dw)
            .map(|(g, w)| g * w)
            .collect();
        Ok(self.basis.vector_from_coordinates(&y))
    }

    /// `‖G(σ)‖²_{HS}` into `H^s`.
    pub fn hs_norm_sq_scalar(&self, sigma: &ScalarField, s: f64) -> Result<f64, NoiseError> {
        self.check(Channel::Nutrient, None)?;
        Ok(self.weighted_hs(&self.coefficients(&self.basis.scalar_coordinates(sigma)), s))
    }

    /// `‖G(v)‖²_{HS}` into `H^s`.
    pub fn hs_norm_sq_vector(&self, v: &VectorField, s: f64) -> Result<f64, NoiseError> {
        self.check(Channel::Velocity, None)?;
        Ok(self.weighted_hs(&self.coefficients(&self.basis.vector_coordinates(v)), s))
    }

    /// `‖G(x) - G(y)‖²_{HS}` into `H^s`, from basis coordinates.
    pub fn hs_distance_sq(&self, x: &[f64], y: &[f64], s: f64) -> f64 {
        let diff: Vec<f64> = self
            .multiplicative
            .iter()
            .zip(x.iter().zip(y))
            .map(|(m, (a, b))| m * (a - b))
            .collect();
        self.weighted_hs(&diff, s)
    }

    /// `‖G(x)‖²_{HS}` into `H^s` from basis coordinates.
    pub fn hs_norm_sq_coordinates(&self, x: &[f64], s: f64) -> f64 {
        self.weighted_hs(&self.coefficients(x), s)
    }

    /// `‖x‖²_{H^s}` of the field with basis coordinates `x`.
    pub fn state_norm_sq(&self, x: &[f64], s: f64) -> f64 {
        x.iter()
            .zip(&self.basis.directions)
            .map(|(x, d)| x * x * level_weight(d.eigenvalue, s))
            .sum()
    }
}

/// Per-level outcome of [`validate_a2`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: f64,
    /// `‖a‖²_{HS}` over the retained directions.
    pub additive_hs_sq: f64,
    /// Linear growth constant `B` with `‖G(x)‖_{HS} ≤ B(1 + ‖x‖)`.
    pub growth: f64,
    /// Whether the untruncated series `Σ a_k² (1 + λ_k^s)` converges.
    pub summable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseReport {
    pub channel: Channel,
    pub lipschitz: f64,
    pub levels: Vec<LevelReport>,
}

impl NoiseReport {
    pub fn passed(&self) -> bool {
        self.levels
            .iter()
            .all(|l| l.summable && l.additive_hs_sq.is_finite() && l.growth.is_finite())
            && self.lipschitz.is_finite()
    }

    /// Largest growth constant over the levels.
    pub fn growth(&self) -> f64 {
        self.levels.iter().fold(0.0, |m, l| m.max(l.growth))
    }
}

/// Check the coefficient operator at the `L²`, `H¹` and `H²` levels.
///
/// Summability refers to the untruncated operator: over `k ∈ ℤ^d`,
/// `Σ (1 + |k|²)^{-2s_a} |k|^{2s}` converges iff `s_a > (s + d/2)/2`.
/// The multiplicative part only needs `m₀ < ∞` and `s_m ≥ 0`.
pub fn validate_a2(op: &NoiseOperator) -> Result<NoiseReport, NoiseError> {
    let spec = op.spec;
    let d = op.basis.domain().dim() as f64;
    let lipschitz = op.lipschitz();
    let levels: Vec<LevelReport> = LEVELS
        .iter()
        .map(|&s| {
            let additive_hs_sq = op.weighted_hs(&op.additive, s);
            let summable = spec.additive == 0.0 || spec.additive_decay > (s + d / 2.0) / 2.0;
            LevelReport {
                level: s,
                additive_hs_sq,
                growth: additive_hs_sq.sqrt().max(lipschitz),
                summable,
            }
        })
        .collect();
    let report = NoiseReport {
        channel: spec.channel,
        lipschitz,
        levels,
    };
    let params_ok = spec.additive.is_finite()
        && spec.additive >= 0.0
        && spec.multiplicative.is_finite()
        && spec.multiplicative_decay >= 0.0;
    if !params_ok {
        return Err(NoiseError::Validation(format!(
            "{} channel: amplitudes must be finite, a0 ≥ 0, s_m ≥ 0",
            spec.channel.name()
        )));
    }
    if let Some(bad) = report.levels.iter().find(|l| !l.summable) {
        return Err(NoiseError::Validation(format!(
            "{} channel: additive amplitudes not summable at level H^{} (decay {} must exceed {})",
            spec.channel.name(),
            bad.level,
            spec.additive_decay,
            (bad.level + d / 2.0) / 2.0
        )));
    }
    Ok(report)
}
