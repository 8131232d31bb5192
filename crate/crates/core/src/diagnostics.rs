//! Energies, balance residuals and inequality monitors along trajectories.

use serde::{Deserialize, Serialize};

use crate::basis::{DomainSpec, ScalarField};
use crate::error::DiagnosticsError;
use crate::operators::{chemical_potential, SystemState};
use crate::potentials::PotentialSpec;
use crate::stepper::TrajectoryLog;
use crate::transforms::{Padding, TransformSet, Transformer};

/// Energy and every pairing that enters its balance, at one time.
///
/// `e = kinetic + grad_phi + potential + nutrient` and
/// `e_tot = ε‖φ‖² + 2e`.
///
/// Terms of switched-off drifts are recorded as zero, and with the potential
/// off `ψ` drops out of both `e` and `μ`, so the balance closes for reduced
/// models too.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub time: f64,
    pub e: f64,
    pub e_tot: f64,
    pub kinetic: f64,
    pub grad_phi: f64,
    pub potential: f64,
    pub nutrient: f64,
    /// `η‖v‖^{r+1}_{L^{r+1}}`, times the taming factor when taming is on
    pub diss_forchheimer: f64,
    /// `ν‖∇v‖²`
    pub diss_viscous: f64,
    /// `‖∇μ‖²`
    pub diss_mu: f64,
    /// `‖∇σ‖²`
    pub diss_sigma: f64,
    /// `ε(∇μ, ∇φ)`
    pub cross_mu_phi: f64,
    /// `(S h, μ + εφ)` with `S = Pσ - A - αu`
    pub src_phi: f64,
    /// `-(cσh, σ) - b‖σ‖² + b(w, σ)`
    pub src_sigma: f64,
    pub noise_hs_v: f64,
    pub noise_hs_sigma: f64,
    /// `(z, v)`; part of the balance but not of the CSV.
    pub force_work: f64,
}

pub const CSV_HEADER: [&str; 16] = [
    "time",
    "E",
    "E_tot",
    "kinetic",
    "grad_phi",
    "potential",
    "nutrient",
    "diss_forchheimer",
    "diss_viscous",
    "diss_mu",
    "diss_sigma",
    "cross_mu_phi",
    "src_phi",
    "src_sigma",
    "noise_hs_v",
    "noise_hs_sigma",
];

impl EnergyRecord {
    /// Time derivative of `e_tot` predicted by the balance:
    /// `2(-diss - cross + force + sources + ½ noise)`.
    pub fn rhs(&self) -> f64 {
        2.0 * (-self.diss_forchheimer
            - self.diss_viscous
            - self.diss_mu
            - self.cross_mu_phi
            - self.diss_sigma
            + self.force_work
            + self.src_sigma
            + self.src_phi
            + 0.5 * self.noise_hs_v
            + 0.5 * self.noise_hs_sigma)
    }

    pub fn csv_values(&self) -> [f64; 16] {
        [
            self.time,
            self.e,
            self.e_tot,
            self.kinetic,
            self.grad_phi,
            self.potential,
            self.nutrient,
            self.diss_forchheimer,
            self.diss_viscous,
            self.diss_mu,
            self.diss_sigma,
            self.cross_mu_phi,
            self.src_phi,
            self.src_sigma,
            self.noise_hs_v,
            self.noise_hs_sigma,
        ]
    }

    pub fn csv_header() -> String {
        CSV_HEADER.join(",")
    }

    pub fn csv_row(&self) -> String {
        self.csv_values()
            .iter()
            .map(|x| format!("{x:.17e}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Largest violation of the internal definitions, relative to `1 + |E|`.
    pub fn consistency_defect(&self, epsilon: f64, phi_l2_sq: f64) -> f64 {
        let sum = self.kinetic + self.grad_phi + self.potential + self.nutrient;
        let a = (sum - self.e).abs() / (1.0 + self.e.abs());
        let b = (epsilon * phi_l2_sq + 2.0 * self.e - self.e_tot).abs() / (1.0 + self.e_tot.abs());
        a.max(b)
    }
}

/// Write records as CSV, header first.
pub fn write_energy_csv(
    mut w: impl std::io::Write,
    records: &[EnergyRecord],
) -> std::io::Result<()> {
    writeln!(w, "{}", EnergyRecord::csv_header())?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Conservative part of the energy only (no dissipation or source terms),
/// with `ψ` integrated on the doubled grid.
pub fn storage_energy(
    ts: &TransformSet,
    state: &SystemState,
    epsilon: f64,
    potential: &PotentialSpec,
) -> EnergyRecord {
    let psi = ts
        .get(Padding::Double)
        .integrate(&state.phi, |s| potential.psi(s));
    let kinetic = 0.5 * state.v.l2_norm_sq();
    let grad_phi = 0.5 * epsilon * state.phi.fractional_norm_sq(0.5);
    let pot = psi / epsilon;
    let nutrient = 0.5 * state.sigma.l2_norm_sq();
    let e = kinetic + grad_phi + pot + nutrient;
    EnergyRecord {
        e,
        e_tot: epsilon * state.phi.l2_norm_sq() + 2.0 * e,
        kinetic,
        grad_phi,
        potential: pot,
        nutrient,
        ..Default::default()
    }
}

/// Per-step balance defect `|ΔE_tot - dt · RHS(t_n)|`.
#[derive(Clone, Debug, Serialize)]
pub struct BalanceReport {
    pub dt: f64,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Largest per-step increase of `e_tot`, meaningful for unforced runs.
    pub max_increase: f64,
}

pub fn dissipation_balance(log: &TrajectoryLog) -> BalanceReport {
    let residuals: Vec<f64> = log
        .records
        .windows(2)
        .map(|w| (w[1].e_tot - w[0].e_tot - log.dt * w[0].rhs()).abs())
        .collect();
    let max_increase = log
        .records
        .windows(2)
        .map(|w| w[1].e_tot - w[0].e_tot)
        .fold(f64::NEG_INFINITY, f64::max);
    BalanceReport {
        dt: log.dt,
        max_residual: residuals.iter().copied().fold(0.0, f64::max),
        residuals,
        max_increase,
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn richardson_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "slope fit needs paired samples");
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `|mean μ - ε⁻¹ mean ψ'(φ)|`, the second mean taken on the doubled grid.
/// The Laplacian part of `μ` has zero mean, so this is a consistency check
/// of the spectral chemical potential against direct quadrature.
pub fn mean_mu_check(
    ts: &TransformSet,
    phi: &ScalarField,
    potential: &PotentialSpec,
    epsilon: f64,
) -> MeanMuCheck {
    let mu = chemical_potential(ts, phi, potential, epsilon);
    let vol = phi.domain().volume();
    let direct = ts
        .get(Padding::Double)
        .integrate(phi, |s| potential.dpsi(s))
        / (epsilon * vol);
    let psi_l1 = ts
        .get(Padding::Double)
        .integrate(phi, |s| potential.psi(s).abs());
    let constant = mean_mu_bound_constant(potential, epsilon, vol);
    MeanMuCheck {
        mean_mu: mu.mean(),
        residual: (mu.mean() - direct).abs(),
        bound: constant * (1.0 + psi_l1),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanMuCheck {
    pub mean_mu: f64,
    pub residual: f64,
    /// `C (1 + ‖ψ(φ)‖_{L¹})`
    pub bound: f64,
}

impl MeanMuCheck {
    pub fn identity_holds(&self) -> bool {
        self.residual <= 1e-10 * (1.0 + self.mean_mu.abs())
    }

    pub fn bound_holds(&self) -> bool {
        self.mean_mu.abs() <= self.bound
    }
}

/// Constant `C` in `|mean μ| ≤ C (1 + ‖ψ(φ)‖_{L¹})`.
///
/// From `|ψ'| ≤ C_ψ(1 + |s|^{ρ-1}) ≤ C_ψ(2 + |s|^ρ)` and
/// `|s|^ρ ≤ (ψ + c_offset) / c_low`:
/// `|mean μ| ≤ ε⁻¹C_ψ[(2 + c_offset/c_low) + ‖ψ‖_{L¹} / (c_low |𝒪|)]`.
pub fn mean_mu_bound_constant(potential: &PotentialSpec, epsilon: f64, volume: f64) -> f64 {
    let a = 2.0 + potential.c_offset / potential.c_low;
    let b = 1.0 / (potential.c_low * volume);
    potential.c_psi / epsilon * a.max(b)
}

/// Which embedding inequality a ratio refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// 2D: `‖y‖_{L⁴} ≤ C ‖y‖^{1/2} ‖y‖^{1/2}_{H¹}`;
    /// 3D: `‖y‖_{L⁴} ≤ C ‖y‖^{1/4} ‖y‖^{3/4}_{H¹}`.
    GagliardoNirenberg,
    /// 2D: `‖y‖_∞ ≤ C ‖y‖^{1/2} ‖y‖^{1/2}_{H²}`;
    /// 3D: `‖y‖_∞ ≤ C ‖y‖^{1/2}_{H¹} ‖y‖^{1/2}_{H²}`.
    Agmon,
}

/// `‖y‖_{L⁴}` over the right-hand side. `y⁴` has no aliased mean on the
/// doubled grid, so the numerator is exact. Zero fields give 0.
pub fn gn_ratio(ts: &TransformSet, y: &ScalarField) -> f64 {
    let l4 = ts
        .get(Padding::Double)
        .integrate(y, |s| s.powi(4))
        .powf(0.25);
    let l2 = y.l2_norm_sq().sqrt();
    let h1 = y.hs_norm_sq(1.0).sqrt();
    let rhs = match y.domain().dim() {
        2 => l2.sqrt() * h1.sqrt(),
        _ => l2.powf(0.25) * h1.powf(0.75),
    };
    if rhs == 0.0 {
        0.0
    } else {
        l4 / rhs
    }
}

/// `‖y‖_∞` (sampled on a 4× grid) over the right-hand side.
pub fn agmon_ratio(y: &ScalarField) -> f64 {
    let d = y.domain();
    let fine = Transformer::with_grid(*d, 4 * d.modes());
    let sup = fine.to_physical(y).max_abs();
    let h2 = y.hs_norm_sq(2.0).sqrt();
    let rhs = match d.dim() {
        2 => y.l2_norm_sq().sqrt().sqrt() * h2.sqrt(),
        _ => y.hs_norm_sq(1.0).sqrt().sqrt() * h2.sqrt(),
    };
    if rhs == 0.0 {
        0.0
    } else {
        sup / rhs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioStat {
    pub inequality: Inequality,
    pub modes: usize,
    pub samples: usize,
    pub max_ratio: f64,
}

/// Maximum observed ratio per inequality and resolution.
pub fn sobolev_ratio_monitor(corpus: &[ScalarField]) -> Vec<RatioStat> {
    let mut resolutions: Vec<DomainSpec> = Vec::new();
    for f in corpus {
        if !resolutions.contains(f.domain()) {
            resolutions.push(*f.domain());
        }
    }
    let mut out = Vec::new();
    for d in resolutions {
        let ts = TransformSet::new(d);
        let fields: Vec<&ScalarField> = corpus.iter().filter(|f| f.domain() == &d).collect();
        let gn = fields.iter().map(|f| gn_ratio(&ts, f)).fold(0.0, f64::max);
        let ag = fields.iter().map(|f| agmon_ratio(f)).fold(0.0, f64::max);
        for (inequality, max_ratio) in [
            (Inequality::GagliardoNirenberg, gn),
            (Inequality::Agmon, ag),
        ] {
            out.push(RatioStat {
                inequality,
                modes: d.modes(),
                samples: fields.len(),
                max_ratio,
            });
        }
    }
    out
}

/// `(max - min) / max` of the per-resolution maxima for one inequality.
pub fn ratio_variation(stats: &[RatioStat], inequality: Inequality) -> f64 {
    let vals: Vec<f64> = stats
        .iter()
        .filter(|s| s.inequality == inequality)
        .map(|s| s.max_ratio)
        .collect();
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if hi <= 0.0 {
        0.0
    } else {
        (hi - lo) / hi
    }
}

/// Distance between two resolutions of the same noise path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GalerkinDistance {
    /// `sup_t ‖X_m - X_n‖²_𝒱` over snapshot times.
    pub sup_v_sq: f64,
    /// `∫ ‖X_m - X_n‖²_𝒵 dt`, left-endpoint rule on snapshot times.
    pub integral_z_sq: f64,
}

impl GalerkinDistance {
    pub fn total(&self) -> f64 {
        self.sup_v_sq + self.integral_z_sq
    }
}

pub fn galerkin_distance(
    a: &TrajectoryLog,
    b: &TrajectoryLog,
) -> Result<GalerkinDistance, DiagnosticsError> {
    if a.snapshots.is_empty() || b.snapshots.is_empty() {
        return Err(DiagnosticsError::NoSnapshots);
    }
    if a.snapshots.len() != b.snapshots.len() {
        return Err(DiagnosticsError::TimeGrid(format!(
            "{} vs {} snapshots",
            a.snapshots.len(),
            b.snapshots.len()
        )));
    }
    let tol = 1e-9 * a.dt.max(b.dt);
    for ((ta, _), (tb, _)) in a.snapshots.iter().zip(&b.snapshots) {
        if (ta - tb).abs() > tol {
            return Err(DiagnosticsError::TimeGrid(format!(
                "snapshot at {ta} vs {tb}"
            )));
        }
    }
    let da = *a.snapshots[0].1.domain();
    let db = *b.snapshots[0].1.domain();
    if da.dim() != db.dim() || da.side_length() != db.side_length() {
        return Err(DiagnosticsError::TimeGrid("different domains".into()));
    }
    let fine = if da.modes() >= db.modes() { da } else { db };
    let mut sup_v_sq: f64 = 0.0;
    let mut integral_z_sq = 0.0;
    for (i, ((t, xa), (_, xb))) in a.snapshots.iter().zip(&b.snapshots).enumerate() {
        let diff = xa.resample(fine).difference(&xb.resample(fine));
        sup_v_sq = sup_v_sq.max(diff.v_norm_sq());
        if let Some((t_next, _)) = a.snapshots.get(i + 1) {
            integral_z_sq += (t_next - t) * diff.z_norm_sq();
        }
    }
    Ok(GalerkinDistance {
        sup_v_sq,
        integral_z_sq,
    })
}
