//! IMEX Euler–Maruyama time stepping of the Galerkin system.
//!
//! Per step, with `X = (v, φ, σ)` at time `t`:
//!
//! ```text
//! v⁺ = P_{n-1} 𝒫 [ v + dt F_v(X) + G₁(v) ΔW₁ ] / (1 + ν λ dt)
//! φ⁺ = P_n       [ φ + dt F_φ(X) ]             / (1 + ε β² dt)
//! σ⁺ = P_n       [ σ + dt F_σ(X) + G₂(σ) ΔW₂ ] / (1 + (β + b) dt)
//! ```
//!
//! with the explicit drifts
//! `F_v = -η θ 𝒜_r(v) - B₀(v, v) + 𝒫(μ∇φ) + z`,
//! `F_φ = -ε⁻¹ A₁ ψ'(φ) - B₁(v, φ) + (Pσ - A - αu) h(φ)` and
//! `F_σ = -B₁(v, σ) - cσh(φ) + b w`. `θ = 1/(1 + dt ‖𝒜_r(v)‖)` when taming
//! is on, else 1. The divisors are diagonal, so the implicit solve is a
//! per-mode division.
//!
//! The scalar cutoff `n` counts wavevectors of the scalar ordering (mean
//! included); the velocity space uses the same wavevector set without
//! `k = 0`, i.e. the `n - 1` lowest Stokes modes.

use serde::{Deserialize, Serialize};

use crate::basis::{DomainSpec, ModeOrdering, ScalarField, VectorField};
use crate::diagnostics::EnergyRecord;
use crate::error::StepError;
use crate::noise::{validate_a2, Channel, NoiseOperator, NoiseSpec, NoiseStream, WienerIncrement};
use crate::operators::{aliasing_report, forchheimer_grid, ModelParams, SourceFields, SystemState};
use crate::potentials::{
    default_samples, double_well, smoothstep_h, validate_assumptions, validate_proliferation,
    PotentialSpec, ProliferationSpec,
};
use crate::transforms::{Padding, PhysicalGrid, TransformSet};

/// Switches for individual drift terms. Everything is on by default;
/// [`ActiveTerms::linear_only`] leaves only the implicit linear backbone.
/// Coupling and advection exchange energy with each other, so the energy
/// balance needs both on or both off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveTerms {
    pub forchheimer: bool,
    pub convection: bool,
    pub coupling: bool,
    pub potential: bool,
    pub advection: bool,
    pub phi_source: bool,
    pub consumption: bool,
    pub supply: bool,
    pub forcing: bool,
    pub noise: bool,
}

impl Default for ActiveTerms {
    fn default() -> Self {
        Self {
            forchheimer: true,
            convection: true,
            coupling: true,
            potential: true,
            advection: true,
            phi_source: true,
            consumption: true,
            supply: true,
            forcing: true,
            noise: true,
        }
    }
}

impl ActiveTerms {
    pub fn linear_only() -> Self {
        Self {
            forchheimer: false,
            convection: false,
            coupling: false,
            potential: false,
            advection: false,
            phi_source: false,
            consumption: false,
            supply: false,
            forcing: false,
            noise: false,
        }
    }
}

/// Everything that defines the dynamics, before validation.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub domain: DomainSpec,
    pub params: ModelParams,
    pub potential: PotentialSpec,
    pub proliferation: ProliferationSpec,
    pub noise_velocity: NoiseSpec,
    pub noise_nutrient: NoiseSpec,
    pub sources: SourceFields,
    /// Piecewise-constant dosage: `(start time, u)` pairs in increasing
    /// time order. Before the first entry `sources.u` applies.
    pub dosage: Vec<(f64, f64)>,
    pub terms: ActiveTerms,
}

impl ModelSpec {
    /// Default model on `domain`: double well, smoothstep, no noise, no
    /// sources.
    pub fn new(domain: DomainSpec) -> Self {
        Self {
            domain,
            params: ModelParams::default(),
            potential: double_well(),
            proliferation: smoothstep_h(),
            noise_velocity: NoiseSpec::zero(Channel::Velocity),
            noise_nutrient: NoiseSpec::zero(Channel::Nutrient),
            sources: SourceFields::zeros(domain),
            dosage: Vec::new(),
            terms: ActiveTerms::default(),
        }
    }

    pub fn dosage_at(&self, t: f64) -> f64 {
        self.dosage
            .iter()
            .rev()
            .find(|(start, _)| *start <= t)
            .map(|&(_, u)| u)
            .unwrap_or(self.sources.u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Taming {
    /// On for `r ≥ 3`.
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub taming: Taming,
    /// Treat `ψ1'` implicitly by one fixed-point sweep.
    pub convex_splitting: bool,
    /// Scalar Galerkin cutoff `n`; `None` keeps every resolved mode.
    pub galerkin_n: Option<usize>,
    /// Points per axis, in multiples of `N`, for non-polynomial terms.
    pub nonpolynomial_grid: usize,
}

impl StepperConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            taming: Taming::Auto,
            convex_splitting: false,
            galerkin_n: None,
            nonpolynomial_grid: 2,
        }
    }
}

/// Validated model plus time-stepping configuration.
#[derive(Clone, Debug)]
pub struct Stepper {
    spec: ModelSpec,
    cfg: StepperConfig,
    transforms: TransformSet,
    ordering_s: ModeOrdering,
    ordering_v: ModeOrdering,
    noise_v: NoiseOperator,
    noise_s: NoiseOperator,
    tamed: bool,
    warnings: Vec<String>,
    // per-mode implicit divisors
    div_v: Vec<f64>,
    div_phi: Vec<f64>,
    div_sigma: Vec<f64>,
}

/// Explicit terms and energy bookkeeping at one state.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub drift_v: VectorField,
    pub drift_phi: ScalarField,
    pub drift_sigma: ScalarField,
    pub mu: ScalarField,
    /// `(Pσ - A - αu) h(φ)`, truncated.
    pub phi_source: ScalarField,
    /// `P_N ψ2'(φ)`, kept for the convex-splitting sweep.
    pub dpsi2: Option<ScalarField>,
    pub taming: f64,
    /// `|mean μ - ε⁻¹ mean ψ'(φ)|`, the second mean by grid quadrature.
    pub mean_mu_residual: f64,
    pub record: EnergyRecord,
}

#[derive(Clone, Debug)]
pub struct StepDiagnostics {
    /// Energy record of the state the step started from.
    pub record: EnergyRecord,
    pub taming: f64,
    /// `|mean φ⁺ - mean φ - dt · mean source|`.
    pub mass_residual: f64,
    pub mean_mu_residual: f64,
}

impl Stepper {
    pub fn new(spec: ModelSpec, cfg: StepperConfig) -> Result<Self, StepError> {
        let domain = spec.domain;
        if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
            return Err(StepError::Config(format!(
                "dt must be positive, got {}",
                cfg.dt
            )));
        }
        if cfg.nonpolynomial_grid < 2 {
            return Err(StepError::Config(format!(
                "nonpolynomial_grid must be at least 2, got {}",
                cfg.nonpolynomial_grid
            )));
        }
        let mut warnings = Vec::new();
        if let Some(w) = spec.params.validate(domain.dim())? {
            warnings.push(w);
        }
        spec.sources.validate()?;
        for &(_, u) in &spec.dosage {
            if !(0.0..=1.0).contains(&u) {
                return Err(StepError::Config(format!("dosage {u} outside [0, 1]")));
            }
        }
        if spec.sources.z.domain() != &domain || spec.sources.w.domain() != &domain {
            return Err(StepError::Config(
                "source fields on a different domain".into(),
            ));
        }
        validate_assumptions(&spec.potential, &default_samples())?.into_result()?;
        let h_report = validate_proliferation(&spec.proliferation, &default_samples());
        if !h_report.passed() {
            return Err(StepError::Config(format!(
                "proliferation function fails validation: {:?}",
                h_report
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .collect::<Vec<_>>()
            )));
        }
        let ordering_s = ModeOrdering::scalar(domain);
        let ordering_v = ModeOrdering::velocity(domain);
        if let Some(n) = cfg.galerkin_n {
            if n == 0 || n > ordering_s.len() {
                return Err(StepError::Config(format!(
                    "galerkin_n = {n} outside 1..={}",
                    ordering_s.len()
                )));
            }
            if !ordering_s.is_pair_closed(n) {
                return Err(StepError::Config(format!(
                    "galerkin_n = {n} splits a ±k pair; the projected fields would not be real"
                )));
            }
        }
        let vel_n = cfg.galerkin_n.map(|n| n - 1);
        let noise_v = NoiseOperator::new(spec.noise_velocity, domain, vel_n);
        let noise_s = NoiseOperator::new(spec.noise_nutrient, domain, cfg.galerkin_n);
        if spec.noise_velocity.channel != Channel::Velocity
            || spec.noise_nutrient.channel != Channel::Nutrient
        {
            return Err(StepError::Config("noise channels swapped".into()));
        }
        validate_a2(&noise_v)?;
        validate_a2(&noise_s)?;
        let transforms = TransformSet::with_nonpolynomial_factor(domain, cfg.nonpolynomial_grid);
        for w in aliasing_report(&transforms, &spec.params, &spec.potential) {
            warnings.push(w.to_string());
        }
        let tamed = match cfg.taming {
            Taming::Auto => spec.params.r >= 3.0,
            Taming::On => true,
            Taming::Off => false,
        };
        let p = spec.params;
        let dt = cfg.dt;
        let eig: Vec<f64> = (0..domain.len())
            .map(|i| domain.eigenvalue_of_index(i))
            .collect();
        let div_v = eig.iter().map(|l| 1.0 + p.nu * l * dt).collect();
        let div_phi = eig.iter().map(|b| 1.0 + p.epsilon * b * b * dt).collect();
        let div_sigma = eig.iter().map(|b| 1.0 + (b + p.supply) * dt).collect();
        Ok(Self {
            transforms,
            spec,
            cfg,
            ordering_s,
            ordering_v,
            noise_v,
            noise_s,
            tamed,
            warnings,
            div_v,
            div_phi,
            div_sigma,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.spec.domain
    }

    pub fn transforms(&self) -> &TransformSet {
        &self.transforms
    }

    pub fn noise_velocity(&self) -> &NoiseOperator {
        &self.noise_v
    }

    pub fn noise_nutrient(&self) -> &NoiseOperator {
        &self.noise_s
    }

    /// Validation warnings and aliasing notes gathered at construction.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_tamed(&self) -> bool {
        self.tamed
    }

    /// Project a state onto the Galerkin space: Leray for `v`, then the
    /// cutoffs.
    pub fn project(&self, state: &SystemState) -> SystemState {
        let v = state.v.leray_project();
        match self.cfg.galerkin_n {
            None => SystemState::new(v, state.phi.clone(), state.sigma.clone()),
            Some(n) => SystemState::new(
                self.ordering_v
                    .project_low_vector(&v, n - 1)
                    .expect("cutoff validated"),
                self.ordering_s
                    .project_low(&state.phi, n)
                    .expect("cutoff validated"),
                self.ordering_s
                    .project_low(&state.sigma, n)
                    .expect("cutoff validated"),
            ),
        }
    }

    /// Explicit drifts and the full energy record at `(state, t)`.
    pub fn evaluate(&self, state: &SystemState, t: f64) -> Evaluation {
        let spec = &self.spec;
        let p = spec.params;
        let terms = spec.terms;
        let eps = p.epsilon;
        let domain = spec.domain;
        let vol = domain.volume();
        let dim = domain.dim();
        let u = spec.dosage_at(t);
        let pot = &spec.potential;
        let h = &spec.proliferation;

        // doubled grid: ψ and ψ'
        let fine = self.transforms.get(Padding::Double);
        let phi_f = fine.to_physical(&state.phi);
        // with the potential switched off the free energy is quadratic
        let (psi_int, dpsi_mean) = if terms.potential {
            (
                phi_f.map(|s| pot.psi(s)).integral(),
                phi_f.map(|s| pot.dpsi(s)).integral() / vol,
            )
        } else {
            (0.0, 0.0)
        };
        let (dpsi, dpsi2) = if !terms.potential {
            (ScalarField::zeros(domain), None)
        } else if self.cfg.convex_splitting {
            let d1 = fine.to_spectral(&phi_f.map(|s| pot.potential.psi1_derivative(1, s)));
            let d2 = fine.to_spectral(&phi_f.map(|s| pot.potential.psi2_derivative(1, s)));
            (&d1 + &d2, Some(d2))
        } else {
            (fine.to_spectral(&phi_f.map(|s| pot.dpsi(s))), None)
        };
        let mut mu = state.phi.neg_laplacian().scale(eps);
        mu.axpy(1.0 / eps, &dpsi);
        if let Some(n) = self.cfg.galerkin_n {
            mu = self
                .ordering_s
                .project_low(&mu, n)
                .expect("cutoff validated");
        }

        // non-polynomial grid: h(φ) products
        let react = self.transforms.nonpolynomial();
        let (phi_r, sigma_r) = if react.points() == fine.points() {
            (phi_f, fine.to_physical(&state.sigma))
        } else {
            (
                react.to_physical(&state.phi),
                react.to_physical(&state.sigma),
            )
        };
        let h_f = phi_r.map(|s| h.h(s));
        let shift = p.apoptosis + p.drug_efficacy * u;
        let src_grid = sigma_r.zip_map(&h_f, |s, hv| (p.proliferation * s - shift) * hv);
        let phi_source = react.to_spectral(&src_grid);
        let cons_grid = sigma_r.zip_map(&h_f, |s, hv| p.consumption * s * hv);
        let consumption = react.to_spectral(&cons_grid);
        let consumption_pair = sigma_r.zip_map(&cons_grid, |s, c| s * c).integral();

        let forch_t = forchheimer_grid(&self.transforms, p.r);
        let v_f: Vec<PhysicalGrid> = state
            .v
            .components()
            .iter()
            .map(|c| forch_t.to_physical(c))
            .collect();
        let npts = v_f[0].values().len();
        let mut forch_energy = 0.0;
        let mut forch_grids: Vec<PhysicalGrid> = v_f.clone();
        for q in 0..npts {
            let m2: f64 = v_f.iter().map(|g| g.values()[q] * g.values()[q]).sum();
            let (pow_rm1, pow_rp1) = if p.r == 1.0 {
                (1.0, m2)
            } else if p.r == 3.0 {
                (m2, m2 * m2)
            } else {
                let m = m2.sqrt();
                (m.powf(p.r - 1.0), m.powf(p.r + 1.0))
            };
            forch_energy += pow_rp1;
            for g in forch_grids.iter_mut() {
                g.values_mut()[q] *= pow_rm1;
            }
        }
        forch_energy *= vol / npts as f64;
        let forch_raw = if p.r == 1.0 {
            state.v.clone()
        } else {
            VectorField::from_components(
                forch_grids.iter().map(|g| forch_t.to_spectral(g)).collect(),
            )
            .expect("dim components")
        };

        // 3/2 grid: quadratic transport and coupling terms
        let mid = self.transforms.get(Padding::ThreeHalves);
        let v_m: Vec<PhysicalGrid> = state
            .v
            .components()
            .iter()
            .map(|c| mid.to_physical(c))
            .collect();
        let dot_grad = |f: &ScalarField| -> PhysicalGrid {
            let mut acc = vec![0.0; v_m[0].values().len()];
            for (i, vi) in v_m.iter().enumerate() {
                let d = mid.to_physical(&f.derivative(i));
                for ((a, x), y) in acc.iter_mut().zip(vi.values()).zip(d.values()) {
                    *a += x * y;
                }
            }
            PhysicalGrid::from_values(domain, mid.points(), acc)
        };
        let conv_raw = if terms.convection {
            Some(
                VectorField::from_components(
                    state
                        .v
                        .components()
                        .iter()
                        .map(|vj| mid.to_spectral(&dot_grad(vj)))
                        .collect(),
                )
                .expect("dim components"),
            )
        } else {
            None
        };
        let b1_phi = if terms.advection {
            Some(mid.to_spectral(&dot_grad(&state.phi)))
        } else {
            None
        };
        let b1_sigma = if terms.advection {
            Some(mid.to_spectral(&dot_grad(&state.sigma)))
        } else {
            None
        };
        let r0_raw = if terms.coupling {
            // μ∇φ instead of εA₁φ∇φ: the two differ by ε⁻¹∇ψ(φ), which the
            // Leray projection removes, and this form pairs exactly with
            // the advection term so the discrete energy balance closes.
            let mu_m = mid.to_physical(&mu);
            let comps = (0..dim)
                .map(|a| {
                    let d = mid.to_physical(&state.phi.derivative(a));
                    mid.to_spectral(&mu_m.zip_map(&d, |x, y| x * y))
                })
                .collect();
            Some(VectorField::from_components(comps).expect("dim components"))
        } else {
            None
        };

        // velocity drift
        let forch = forch_raw.leray_project();
        let taming = if self.tamed {
            1.0 / (1.0 + self.cfg.dt * forch.l2_norm())
        } else {
            1.0
        };
        let mut fv = VectorField::zeros(domain);
        if terms.forchheimer {
            fv.axpy(-p.eta * taming, &forch_raw);
        }
        if let Some(c) = &conv_raw {
            fv.axpy(-1.0, c);
        }
        if let Some(r0) = &r0_raw {
            fv.axpy(1.0, r0);
        }
        if terms.forcing {
            fv.axpy(1.0, &spec.sources.z);
        }
        let drift_v = fv.leray_project();

        // phase-field drift
        let mut drift_phi = ScalarField::zeros(domain);
        if terms.potential {
            drift_phi.axpy(-1.0 / eps, &dpsi.neg_laplacian());
        }
        if let Some(b) = &b1_phi {
            drift_phi.axpy(-1.0, b);
        }
        if terms.phi_source {
            drift_phi.axpy(1.0, &phi_source);
        }

        // nutrient drift
        let mut drift_sigma = ScalarField::zeros(domain);
        if let Some(b) = &b1_sigma {
            drift_sigma.axpy(-1.0, b);
        }
        if terms.consumption {
            drift_sigma.axpy(-1.0, &consumption);
        }
        if terms.supply {
            drift_sigma.axpy(p.supply, &spec.sources.w);
        }

        let (noise_hs_v, noise_hs_sigma) = if terms.noise {
            (
                self.noise_v
                    .hs_norm_sq_vector(&state.v, 0.0)
                    .expect("velocity channel"),
                self.noise_s
                    .hs_norm_sq_scalar(&state.sigma, 0.0)
                    .expect("nutrient channel"),
            )
        } else {
            (0.0, 0.0)
        };

        let kinetic = 0.5 * state.v.l2_norm_sq();
        let grad_phi = 0.5 * eps * state.phi.fractional_norm_sq(0.5);
        let potential = psi_int / eps;
        let nutrient = 0.5 * state.sigma.l2_norm_sq();
        let e = kinetic + grad_phi + potential + nutrient;
        let record = EnergyRecord {
            time: t,
            e,
            e_tot: eps * state.phi.l2_norm_sq() + 2.0 * e,
            kinetic,
            grad_phi,
            potential,
            nutrient,
            diss_forchheimer: if terms.forchheimer {
                p.eta * taming * forch_energy
            } else {
                0.0
            },
            diss_viscous: p.nu * state.v.gradient_norm_sq(),
            diss_mu: mu.fractional_norm_sq(0.5),
            diss_sigma: state.sigma.fractional_norm_sq(0.5),
            cross_mu_phi: eps * mu.gradient_inner(&state.phi),
            src_phi: if terms.phi_source {
                phi_source.inner(&mu) + eps * phi_source.inner(&state.phi)
            } else {
                0.0
            },
            src_sigma: -p.supply * state.sigma.l2_norm_sq()
                - if terms.consumption {
                    consumption_pair
                } else {
                    0.0
                }
                + if terms.supply {
                    p.supply * spec.sources.w.inner(&state.sigma)
                } else {
                    0.0
                },
            noise_hs_v,
            noise_hs_sigma,
            force_work: if terms.forcing {
                spec.sources.z.inner(&state.v)
            } else {
                0.0
            },
        };

        let mean_mu_residual = (mu.mean() - dpsi_mean / eps).abs();
        Evaluation {
            drift_v,
            drift_phi,
            drift_sigma,
            mu,
            phi_source,
            dpsi2,
            taming,
            mean_mu_residual,
            record,
        }
    }

    fn divide(field: &ScalarField, divisors: &[f64]) -> ScalarField {
        let mut out = field.clone();
        for (c, d) in out.coeffs_mut().iter_mut().zip(divisors) {
            *c /= d;
        }
        out
    }

    /// One IMEX Euler–Maruyama step from `(state, t)`. Increments must be
    /// given for every channel with nonzero noise when noise is active.
    pub fn step(
        &self,
        state: &SystemState,
        t: f64,
        inc_v: Option<&WienerIncrement>,
        inc_sigma: Option<&WienerIncrement>,
    ) -> Result<(SystemState, StepDiagnostics), StepError> {
        let dt = self.cfg.dt;
        let ev = self.evaluate(state, t);
        let spec = &self.spec;
        let eps = spec.params.epsilon;

        let mut v = state.v.clone();
        v.axpy(dt, &ev.drift_v);
        let mut sigma = state.sigma.clone();
        sigma.axpy(dt, &ev.drift_sigma);
        if spec.terms.noise {
            if let Some(inc) = inc_v {
                let x = self.noise_v.basis().vector_coordinates(&state.v);
                v.axpy(1.0, &self.noise_v.vector_update(&x, inc)?);
            }
            if let Some(inc) = inc_sigma {
                let x = self.noise_s.basis().scalar_coordinates(&state.sigma);
                sigma.axpy(1.0, &self.noise_s.scalar_update(&x, inc)?);
            }
        }
        let v = VectorField::from_components(
            v.components()
                .iter()
                .map(|c| Self::divide(c, &self.div_v))
                .collect(),
        )?;
        let sigma = Self::divide(&sigma, &self.div_sigma);

        let mut phi = state.phi.clone();
        phi.axpy(dt, &ev.drift_phi);
        let mut phi = Self::divide(&phi, &self.div_phi);
        if let (true, true, Some(dpsi2)) = (
            self.cfg.convex_splitting,
            spec.terms.potential,
            ev.dpsi2.as_ref(),
        ) {
            // one sweep: ψ1' at the predictor, ψ2' at the old state
            let fine = self.transforms.get(Padding::Double);
            let pred = fine.to_physical(&phi);
            let dpsi1 =
                fine.to_spectral(&pred.map(|s| spec.potential.potential.psi1_derivative(1, s)));
            let mut drift = ev.drift_phi.clone();
            let old = &(&ev.mu - &state.phi.neg_laplacian().scale(eps)) * eps;
            // remove the explicit ψ' term and insert the split one
            drift.axpy(1.0 / eps, &old.neg_laplacian());
            drift.axpy(-1.0 / eps, &(&dpsi1 + dpsi2).neg_laplacian());
            let mut num = state.phi.clone();
            num.axpy(dt, &drift);
            phi = Self::divide(&num, &self.div_phi);
        }

        let next = self.project(&SystemState::new(v, phi, sigma));
        if !next.is_finite() {
            return Err(StepError::BlowUp { time: t + dt });
        }
        let source_mean = if spec.terms.phi_source {
            ev.phi_source.mean()
        } else {
            0.0
        };
        let mass_residual = (next.phi.mean() - state.phi.mean() - dt * source_mean).abs();
        Ok((
            next,
            StepDiagnostics {
                record: ev.record,
                taming: ev.taming,
                mass_residual,
                mean_mu_residual: ev.mean_mu_residual,
            },
        ))
    }

    /// Draw the increments for step `index` from the two channel streams.
    pub fn increments(
        &self,
        streams: &mut NoiseStreams,
        index: u64,
    ) -> Result<(Option<WienerIncrement>, Option<WienerIncrement>), StepError> {
        if !self.spec.terms.noise {
            return Ok((None, None));
        }
        let dt = self.cfg.dt;
        let iv = if self.spec.noise_velocity.is_zero() {
            None
        } else {
            Some(
                streams
                    .velocity
                    .sample_increment(index, dt, self.noise_v.basis())?,
            )
        };
        let is = if self.spec.noise_nutrient.is_zero() {
            None
        } else {
            Some(
                streams
                    .nutrient
                    .sample_increment(index, dt, self.noise_s.basis())?,
            )
        };
        Ok((iv, is))
    }
}

/// The two independent Wiener channels of one trajectory.
#[derive(Clone, Debug)]
pub struct NoiseStreams {
    pub velocity: NoiseStream,
    pub nutrient: NoiseStream,
}

impl NoiseStreams {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        Self {
            velocity: NoiseStream::new(seed, trajectory, Channel::Velocity),
            nutrient: NoiseStream::new(seed, trajectory, Channel::Nutrient),
        }
    }
}

/// Running quantity of the stopping-time criterion:
/// `sup_t ‖X‖²_𝒱 + ∫ (ν‖A₀v‖² + ε‖φ‖²_{H⁴} + ‖σ‖²_{H²}) dt`, compared
/// (after a square root, strictly) with `‖X(0)‖_𝒱 + M`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StopMonitor {
    pub threshold: f64,
    pub running_sup: f64,
    pub running_integral: f64,
    pub triggered_at: Option<f64>,
}

impl StopMonitor {
    pub fn new(initial: &SystemState, m: f64) -> Self {
        Self::with_threshold(initial.v_norm_sq().sqrt() + m)
    }

    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            running_sup: 0.0,
            running_integral: 0.0,
            triggered_at: None,
        }
    }

    pub fn quantity(&self) -> f64 {
        (self.running_sup + self.running_integral).sqrt()
    }

    /// Integrand `ν‖A₀v‖² + ε‖φ‖²_{H⁴} + ‖σ‖²_{H²}`.
    pub fn integrand(state: &SystemState, params: &ModelParams) -> f64 {
        params.nu * state.v.fractional_norm_sq(1.0)
            + params.epsilon * state.phi.hs_norm_sq(4.0)
            + state.sigma.hs_norm_sq(2.0)
    }

    /// Include the state at time `t` in the sup, test the threshold, then
    /// accumulate the integral over `[t, t + dt]` by the left endpoint.
    /// Returns true on the first crossing.
    pub fn update_with(&mut self, t: f64, v_norm_sq: f64, integrand: f64, dt: f64) -> bool {
        self.running_sup = self.running_sup.max(v_norm_sq);
        let mut fired = false;
        if self.triggered_at.is_none() && self.quantity() > self.threshold {
            self.triggered_at = Some(t);
            fired = true;
        }
        self.running_integral += dt * integrand;
        fired
    }

    pub fn update(&mut self, t: f64, state: &SystemState, params: &ModelParams, dt: f64) -> bool {
        self.update_with(t, state.v_norm_sq(), Self::integrand(state, params), dt)
    }
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    MonitorTriggered { time: f64 },
    BlowUp { time: f64 },
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub t_final: f64,
    pub seed: u64,
    pub trajectory: u64,
    /// Keep a state every this many steps (the initial and final states are
    /// always kept when set).
    pub snapshot_every: Option<usize>,
    pub monitor_m: f64,
    pub stop_on_trigger: bool,
}

impl RunOptions {
    pub fn new(t_final: f64) -> Self {
        Self {
            t_final,
            seed: 0,
            trajectory: 0,
            snapshot_every: None,
            monitor_m: f64::INFINITY,
            stop_on_trigger: false,
        }
    }
}

/// Everything recorded along one trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub times: Vec<f64>,
    pub records: Vec<EnergyRecord>,
    /// Per step: `|Δ mean φ - dt · mean source|`.
    pub mass_residuals: Vec<f64>,
    /// Per record: mean-μ identity residual.
    pub mean_mu_residuals: Vec<f64>,
    /// Per step taming factor.
    pub taming: Vec<f64>,
    pub snapshots: Vec<(f64, SystemState)>,
    pub monitor: StopMonitor,
    pub warnings: Vec<String>,
    pub final_state: SystemState,
    pub termination: Termination,
}

impl TrajectoryLog {
    pub fn sup_e_tot(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.e_tot)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A failed run together with what was logged before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: StepError,
    pub partial: TrajectoryLog,
}

/// Number of steps of size `dt` in `[0, t_final]`; `t_final` must be a
/// multiple of `dt` up to rounding.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize, StepError> {
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(StepError::Config(format!(
            "horizon must be nonnegative, got {t_final}"
        )));
    }
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(StepError::Config(format!(
            "horizon {t_final} is not a multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Integrate from `initial` (projected onto the Galerkin space first) to
/// `t_final`, or until the monitor fires with `stop_on_trigger`, or until
/// blow-up.
pub fn run(
    stepper: &Stepper,
    initial: &SystemState,
    opts: &RunOptions,
) -> Result<TrajectoryLog, Box<RunFailure>> {
    let dt = stepper.cfg.dt;
    let params = stepper.spec.params;
    let initial = stepper.project(initial);
    let mut log = TrajectoryLog {
        dt,
        times: Vec::new(),
        records: Vec::new(),
        mass_residuals: Vec::new(),
        mean_mu_residuals: Vec::new(),
        taming: Vec::new(),
        snapshots: Vec::new(),
        monitor: StopMonitor::new(&initial, opts.monitor_m),
        warnings: stepper.warnings.clone(),
        final_state: initial.clone(),
        termination: Termination::Completed,
    };
    let steps = match step_count(opts.t_final, dt) {
        Ok(n) => n,
        Err(error) => {
            return Err(Box::new(RunFailure {
                error,
                partial: log,
            }))
        }
    };
    let mut streams = NoiseStreams::new(opts.seed, opts.trajectory);
    let mut state = initial;
    if opts.snapshot_every.is_some() {
        log.snapshots.push((0.0, state.clone()));
    }
    for n in 0..steps {
        let t = n as f64 * dt;
        log.monitor.update(t, &state, &params, dt);
        if opts.stop_on_trigger {
            if let Some(time) = log.monitor.triggered_at {
                log.termination = Termination::MonitorTriggered { time };
                break;
            }
        }
        let incs = match stepper.increments(&mut streams, n as u64) {
            Ok(i) => i,
            Err(error) => {
                return Err(Box::new(RunFailure {
                    error,
                    partial: log,
                }))
            }
        };
        match stepper.step(&state, t, incs.0.as_ref(), incs.1.as_ref()) {
            Ok((next, diag)) => {
                log.times.push(t);
                log.records.push(diag.record);
                log.mass_residuals.push(diag.mass_residual);
                log.mean_mu_residuals.push(diag.mean_mu_residual);
                log.taming.push(diag.taming);
                state = next;
                if let Some(every) = opts.snapshot_every {
                    if (n + 1) % every == 0 || n + 1 == steps {
                        log.snapshots.push(((n + 1) as f64 * dt, state.clone()));
                    }
                }
            }
            Err(error) => {
                if let StepError::BlowUp { time } = error {
                    log.termination = Termination::BlowUp { time };
                }
                log.final_state = state;
                return Err(Box::new(RunFailure {
                    error,
                    partial: log,
                }));
            }
        }
    }
    if log.termination == Termination::Completed {
        let t = steps as f64 * dt;
        log.monitor.update(t, &state, &params, 0.0);
        let ev = stepper.evaluate(&state, t);
        log.times.push(t);
        log.records.push(ev.record);
        log.mean_mu_residuals.push(ev.mean_mu_residual);
        if opts.stop_on_trigger {
            if let Some(time) = log.monitor.triggered_at {
                log.termination = Termination::MonitorTriggered { time };
            }
        }
    } else {
        let t = log.times.last().map(|t| t + dt).unwrap_or(0.0);
        let ev = stepper.evaluate(&state, t);
        log.times.push(t);
        log.records.push(ev.record);
        log.mean_mu_residuals.push(ev.mean_mu_residual);
    }
    log.final_state = state;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::WaveVector;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn dom() -> DomainSpec {
        DomainSpec::new(2, 2.0 * PI, 8).unwrap()
    }

    #[test]
    fn linear_step_is_exact_decay() {
        let d = dom();
        let mut spec = ModelSpec::new(d);
        spec.terms = ActiveTerms::linear_only();
        let dt = 0.01;
        let st = Stepper::new(spec.clone(), StepperConfig::new(dt)).unwrap();
        let k = WaveVector::new2(2, 1);
        let v = VectorField::single_mode(d, k, 0, Complex64::new(0.3, -0.2)).unwrap();
        let phi = ScalarField::single_mode(d, k, Complex64::new(0.1, 0.0)).unwrap();
        let state = SystemState::new(v.clone(), phi.clone(), phi.clone());
        let (next, _) = st.step(&state, 0.0, None, None).unwrap();
        let lam = 5.0;
        let p = spec.params;
        let expect_v = v.scale(1.0 / (1.0 + p.nu * lam * dt));
        let expect_phi = phi.scale(1.0 / (1.0 + p.epsilon * lam * lam * dt));
        let expect_sigma = phi.scale(1.0 / (1.0 + (lam + p.supply) * dt));
        assert!((&next.v - &expect_v).max_abs_coeff() < 1e-14);
        assert!((&next.phi - &expect_phi).max_abs_coeff() < 1e-14);
        assert!((&next.sigma - &expect_sigma).max_abs_coeff() < 1e-14);
    }

    #[test]
    fn zero_state_stays_zero() {
        let d = dom();
        let st = Stepper::new(ModelSpec::new(d), StepperConfig::new(0.01)).unwrap();
        let z = SystemState::zeros(d);
        let mut spec = ModelSpec::new(d);
        spec.params.apoptosis = 0.5;
        let (next, _) = st.step(&z, 0.0, None, None).unwrap();
        // h(0) = 1/2, so the apoptosis source moves the mean of φ
        assert!(next.v.max_abs_coeff() == 0.0);
        assert!(next.sigma.max_abs_coeff() == 0.0);
    }

    #[test]
    fn galerkin_cutoff_must_be_pair_closed() {
        let d = dom();
        let mut cfg = StepperConfig::new(0.01);
        cfg.galerkin_n = Some(2);
        assert!(Stepper::new(ModelSpec::new(d), cfg).is_err());
        cfg.galerkin_n = Some(5);
        assert!(Stepper::new(ModelSpec::new(d), cfg).is_ok());
    }

    #[test]
    fn horizon_must_be_multiple_of_dt() {
        assert_eq!(step_count(0.5, 1e-3).unwrap(), 500);
        assert_eq!(step_count(0.0, 1e-3).unwrap(), 0);
        assert!(step_count(0.5, 0.3).is_err());
    }

    #[test]
    fn monitor_is_strict() {
        let mut m = StopMonitor::with_threshold(1.0);
        assert!(!m.update_with(0.0, 1.0, 0.0, 0.1));
        assert!(m.triggered_at.is_none());
        assert!(m.update_with(0.1, 1.0 + 1e-12, 0.0, 0.1));
        assert_eq!(m.triggered_at, Some(0.1));
        let mut inf = StopMonitor::with_threshold(f64::INFINITY);
        assert!(!inf.update_with(0.0, 1e300, 1e300, 1.0));
    }
}
