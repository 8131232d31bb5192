//! TOML run configuration.
//!
//! Every section is optional and every field has a default, so an empty
//! file is a valid configuration. Unknown keys are rejected with the
//! offending field named.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{DomainSpec, VectorField, WaveVector};
use crate::error::HarnessError;
use crate::noise::{Channel, NoiseSpec};
use crate::operators::{ModelParams, SourceFields};
use crate::potentials::{double_well, double_well_pure_quartic_split, smoothstep_h, PotentialSpec};
use crate::stepper::{ActiveTerms, ModelSpec, Stepper, StepperConfig, Taming};
use crate::Complex64;

use super::initial::InitialSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub dim: usize,
    pub side_length: f64,
    pub modes: usize,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self {
            dim: 2,
            side_length: 2.0 * PI,
            modes: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    /// `double_well` or `double_well_quartic_split`.
    pub preset: String,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub r3: Option<f64>,
    pub rho: Option<f64>,
    pub c_psi: Option<f64>,
    pub c_low: Option<f64>,
    pub c_offset: Option<f64>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            preset: "double_well".into(),
            r1: None,
            r2: None,
            r3: None,
            rho: None,
            c_psi: None,
            c_low: None,
            c_offset: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProliferationSection {
    /// Only `smoothstep` is available.
    pub preset: String,
}

impl Default for ProliferationSection {
    fn default() -> Self {
        Self {
            preset: "smoothstep".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub additive: f64,
    pub additive_decay: f64,
    pub multiplicative: f64,
    pub multiplicative_decay: f64,
    pub truncation: Option<usize>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            additive: 0.05,
            additive_decay: 2.0,
            multiplicative: 0.05,
            multiplicative_decay: 0.5,
            truncation: None,
        }
    }
}

impl NoiseSection {
    pub fn off() -> Self {
        Self {
            additive: 0.0,
            multiplicative: 0.0,
            ..Self::default()
        }
    }

    pub fn spec(&self, channel: Channel) -> NoiseSpec {
        NoiseSpec {
            channel,
            additive: self.additive,
            additive_decay: self.additive_decay,
            multiplicative: self.multiplicative,
            multiplicative_decay: self.multiplicative_decay,
            truncation: self.truncation,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSections {
    pub velocity: NoiseSection,
    pub nutrient: NoiseSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourcesSection {
    /// Amplitude of a steady shear force on the lowest mode along the
    /// second axis.
    pub z_amplitude: f64,
    /// Constant vasculature nutrient level.
    pub w: f64,
    /// Dosage before the first schedule entry.
    pub u: f64,
    /// `none` (u = 0) or `full` (u = 1); overrides `u`.
    pub dosage_preset: Option<String>,
    /// `[start time, u]` pairs.
    pub dosage: Vec<[f64; 2]>,
}

impl Default for SourcesSection {
    fn default() -> Self {
        Self {
            z_amplitude: 0.0,
            w: 1.0,
            u: 0.0,
            dosage_preset: None,
            dosage: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperSection {
    pub dt: f64,
    pub taming: Taming,
    pub convex_splitting: bool,
    pub galerkin_n: Option<usize>,
    /// Grid multiple for non-polynomial terms (`h(φ)`, non-odd `r`).
    pub nonpolynomial_grid: usize,
}

impl Default for StepperSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            taming: Taming::Auto,
            convex_splitting: false,
            galerkin_n: None,
            nonpolynomial_grid: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub t_final: f64,
    pub seed: u64,
    /// Steps between kept states; 0 keeps none.
    pub snapshot_interval: usize,
    /// Monitor margin `M`.
    pub monitor_m: f64,
    pub paths: usize,
    /// Resolutions for the convergence study.
    pub modes: Vec<usize>,
    /// Initial perturbation for the uniqueness study.
    pub delta: f64,
    pub uniqueness_tolerance: f64,
    /// Forchheimer exponents for the soak.
    pub r_values: Vec<f64>,
    pub p_list: Vec<f64>,
    /// Allowed relative change of moment estimates under path doubling.
    pub moment_tolerance: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            t_final: 0.5,
            seed: 0,
            snapshot_interval: 0,
            monitor_m: 1e3,
            paths: 128,
            modes: vec![16, 32, 64],
            delta: 1e-6,
            uniqueness_tolerance: 1e-3,
            r_values: vec![1.0, 2.0, 3.0],
            p_list: vec![2.0, 4.0],
            moment_tolerance: 0.2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub params: ModelParams,
    pub potential: PotentialSection,
    pub proliferation: ProliferationSection,
    pub noise: NoiseSections,
    pub sources: SourcesSection,
    pub stepper: StepperSection,
    /// Drift terms to keep; all on by default.
    pub terms: ActiveTerms,
    pub initial: InitialSpec,
    pub experiment: ExperimentSection,
}

/// A parsed configuration and the hash of the bytes it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl LoadedConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(Self {
            config,
            hash: sha256_hex(text.as_bytes()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Wrap an in-memory configuration; the hash covers its TOML form.
    pub fn from_config(config: RunConfig) -> Self {
        let text = toml::to_string(&config).expect("config is serializable");
        Self {
            hash: sha256_hex(text.as_bytes()),
            config,
        }
    }
}

impl RunConfig {
    pub fn domain_spec(&self) -> Result<DomainSpec, HarnessError> {
        DomainSpec::new(self.domain.dim, self.domain.side_length, self.domain.modes)
            .map_err(|e| HarnessError::Config(format!("domain: {e}")))
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec, HarnessError> {
        let p = &self.potential;
        let mut spec = match p.preset.as_str() {
            "double_well" => double_well(),
            "double_well_quartic_split" => double_well_pure_quartic_split(),
            other => {
                return Err(HarnessError::Config(format!(
                    "potential.preset: unknown preset `{other}`"
                )))
            }
        };
        let overrides = [
            (p.r1, &mut spec.r1),
            (p.r2, &mut spec.r2),
            (p.r3, &mut spec.r3),
            (p.rho, &mut spec.rho),
            (p.c_psi, &mut spec.c_psi),
            (p.c_low, &mut spec.c_low),
            (p.c_offset, &mut spec.c_offset),
        ];
        for (value, slot) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        Ok(spec)
    }

    pub fn sources(&self, domain: DomainSpec) -> Result<SourceFields, HarnessError> {
        let s = &self.sources;
        let mut out = SourceFields::zeros(domain);
        out.w = crate::basis::ScalarField::constant(domain, s.w);
        out.u = match s.dosage_preset.as_deref() {
            None => s.u,
            Some("none") => 0.0,
            Some("full") => 1.0,
            Some(other) => {
                return Err(HarnessError::Config(format!(
                    "sources.dosage_preset: unknown preset `{other}`"
                )))
            }
        };
        if s.z_amplitude != 0.0 {
            let mut k = [0i64; 3];
            k[1] = 1;
            let k = WaveVector { k };
            out.z = VectorField::single_mode(domain, k, 0, Complex64::new(s.z_amplitude, 0.0))
                .map_err(|e| HarnessError::Config(format!("sources.z_amplitude: {e}")))?;
        }
        Ok(out)
    }

    pub fn model_spec(&self) -> Result<ModelSpec, HarnessError> {
        let domain = self.domain_spec()?;
        if self.proliferation.preset != "smoothstep" {
            return Err(HarnessError::Config(format!(
                "proliferation.preset: unknown preset `{}`",
                self.proliferation.preset
            )));
        }
        let mut spec = ModelSpec::new(domain);
        spec.params = self.params;
        spec.potential = self.potential_spec()?;
        spec.proliferation = smoothstep_h();
        spec.noise_velocity = self.noise.velocity.spec(Channel::Velocity);
        spec.noise_nutrient = self.noise.nutrient.spec(Channel::Nutrient);
        spec.sources = self.sources(domain)?;
        spec.dosage = self.sources.dosage.iter().map(|p| (p[0], p[1])).collect();
        spec.terms = self.terms;
        Ok(spec)
    }

    pub fn stepper_config(&self) -> StepperConfig {
        StepperConfig {
            dt: self.stepper.dt,
            taming: self.stepper.taming,
            convex_splitting: self.stepper.convex_splitting,
            galerkin_n: self.stepper.galerkin_n,
            nonpolynomial_grid: self.stepper.nonpolynomial_grid,
        }
    }

    /// Build and validate the stepper; every validator runs here.
    pub fn stepper(&self) -> Result<Stepper, HarnessError> {
        let spec = self.model_spec()?;
        Stepper::new(spec, self.stepper_config()).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Same configuration at another resolution.
    pub fn with_modes(&self, modes: usize) -> Self {
        let mut c = self.clone();
        c.domain.modes = modes;
        c
    }

    /// Noise switched off on both channels.
    pub fn deterministic(&self) -> Self {
        let mut c = self.clone();
        c.noise.velocity = NoiseSection::off();
        c.noise.nutrient = NoiseSection::off();
        c
    }
}

/// Defaults used when no config file is given: the horizons and sizes of
/// the acceptance runs for each experiment.
pub fn preset(experiment: &str) -> RunConfig {
    let mut c = RunConfig::default();
    match experiment {
        "uniqueness" => c.experiment.t_final = 0.1,
        "ensemble-moments" => {
            c.domain.modes = 16;
            c.experiment.t_final = 1.0;
            // start quiescent so the noise, not the initial energy, sets the
            // supremum; dissipative data would make every path peak at t = 0
            c.initial.velocity = 0.0;
            c.initial.phi_amplitude = 0.05;
            c.initial.sigma_amplitude = 0.0;
        }
        "soak-2d" => {
            c.domain.modes = 64;
            c.experiment.t_final = 10.0;
        }
        _ => {}
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let c = LoadedConfig::parse("").unwrap();
        assert_eq!(c.config, RunConfig::default());
        assert!(c.config.stepper().is_ok());
    }

    #[test]
    fn unknown_field_is_named() {
        let err = LoadedConfig::parse("[params]\nnuu = 1.0\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("nuu"), "{err}");
    }

    #[test]
    fn hash_tracks_bytes() {
        let a = LoadedConfig::parse("[domain]\nmodes = 16\n").unwrap();
        let b = LoadedConfig::parse("[domain]\nmodes = 16\n").unwrap();
        let c = LoadedConfig::parse("[domain]\nmodes = 16 \n").unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
        assert_eq!(a.config, c.config);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let c = LoadedConfig::parse("[params]\nnu = -1.0\n").unwrap();
        assert_eq!(c.config.stepper().unwrap_err().exit_code(), 2);
        let c =
            LoadedConfig::parse("[potential]\npreset = \"double_well_quartic_split\"\n").unwrap();
        assert!(c.config.stepper().is_err());
        let c = LoadedConfig::parse("[noise.velocity]\nadditive = 1.0\nadditive_decay = 1.5\n")
            .unwrap();
        assert!(c.config.stepper().is_err());
    }
}
