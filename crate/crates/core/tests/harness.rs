use std::f64::consts::PI;

use chcbf::harness::config::{preset, NoiseSection};
use chcbf::harness::experiments::{
    convergence_study, ensemble_study, soak_study, uniqueness_study,
};
use chcbf::harness::initial::initial_state;
use chcbf::harness::{LoadedConfig, RunConfig};
use chcbf::parallel::Execution;
use chcbf::stepper::{run, ActiveTerms, RunOptions};

fn small(modes: usize, t: f64) -> RunConfig {
    let mut c = RunConfig::default();
    c.domain.modes = modes;
    c.experiment.t_final = t;
    c
}

fn linear(modes: usize, t: f64) -> RunConfig {
    let mut c = small(modes, t).deterministic();
    c.terms = ActiveTerms::linear_only();
    c
}

#[test]
fn terms_section_parses_and_reaches_the_model() {
    let lc = LoadedConfig::parse("[terms]\nforchheimer = false\nnoise = false\n").unwrap();
    let spec = lc.config.model_spec().unwrap();
    assert!(!spec.terms.forchheimer && !spec.terms.noise);
    assert!(spec.terms.convection && spec.terms.potential);
    let err = LoadedConfig::parse("[terms]\nforchheimr = false\n").unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("forchheimr"));
}

#[test]
fn presets_set_their_horizons() {
    assert_eq!(preset("uniqueness").experiment.t_final, 0.1);
    assert_eq!(preset("soak-2d").domain.modes, 64);
    assert_eq!(preset("soak-2d").experiment.t_final, 10.0);
    assert_eq!(preset("ensemble-moments").domain.modes, 16);
    assert_eq!(preset("ensemble-moments").initial.velocity, 0.0);
    assert_eq!(preset("simulate"), RunConfig::default());
}

#[test]
fn config_round_trips_through_toml() {
    let mut c = small(16, 0.3);
    c.noise.velocity = NoiseSection::off();
    c.terms.supply = false;
    let text = toml::to_string(&c).unwrap();
    assert_eq!(LoadedConfig::parse(&text).unwrap().config, c);
}

#[test]
fn config_load_reports_missing_file() {
    let err = LoadedConfig::load(std::path::Path::new("/nonexistent/run.toml")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn linear_uniqueness_distance_decays_geometrically() {
    let cfg = linear(16, 0.1);
    let delta = 1e-6;
    let out = uniqueness_study(&cfg, delta).unwrap();
    assert!(out.bitwise_identical);
    // δcos(x₁) has 𝓗 norm δ·sqrt(2 · 2π²) on the 2π torus
    let expect0 = delta * (2.0 * 2.0 * PI * PI).sqrt();
    // the difference of O(1) states loses digits in proportion to 1/δ
    assert!(
        (out.initial_distance - expect0).abs() <= 1e-9 * expect0,
        "{} vs {expect0}",
        out.initial_distance
    );
    // the unit mode of φ is damped by 1/(1 + ε dt) per step
    let steps = (cfg.experiment.t_final / cfg.stepper.dt).round() as i32;
    let q = 1.0 / (1.0 + cfg.params.epsilon * cfg.stepper.dt);
    let g = q.powi(steps);
    assert!(
        (out.growth_factor - g).abs() <= 1e-9 * g,
        "{} vs {g}",
        out.growth_factor
    );
    assert_eq!(out.sup_distance, out.initial_distance);
}

#[test]
fn zero_perturbation_gives_zero_distance() {
    let out = uniqueness_study(&small(16, 0.02), 0.0).unwrap();
    assert!(out.bitwise_identical);
    assert_eq!(out.sup_distance, 0.0);
    assert_eq!(out.growth_factor, 0.0);
}

#[test]
fn full_model_uniqueness_stays_small() {
    let out = uniqueness_study(&small(16, 0.05), 1e-6).unwrap();
    assert!(out.bitwise_identical);
    assert!(out.final_distance <= 1e-3);
    assert!(out.min_monotonicity_margin >= -1e-12);
}

#[test]
fn deterministic_ensemble_estimates_the_initial_energy() {
    let mut cfg = linear(8, 0.05);
    cfg.experiment.p_list = vec![2.0, 4.0];
    let out = ensemble_study(&cfg, 4, Execution::Sequential).unwrap();
    assert!(out.blow_ups.is_empty());

    // dissipative linear dynamics: the supremum sits at t = 0
    let stepper = cfg.stepper().unwrap();
    let x = initial_state(&cfg.initial, *stepper.domain()).unwrap();
    let log = run(&stepper, &x, &RunOptions::new(0.05)).unwrap();
    let e0 = log.records[0].e_tot;
    for s in &out.sup_e_tot {
        assert_eq!(*s, e0);
    }
    for m in &out.moments {
        let expect = e0.powf(m.p / 2.0);
        assert!((m.full - expect).abs() <= 1e-14 * expect);
        assert_eq!(m.relative_change, 0.0);
    }
}

#[test]
fn ensemble_is_identical_across_executions() {
    let cfg = small(8, 0.02);
    let a = ensemble_study(&cfg, 4, Execution::Sequential).unwrap();
    let b = ensemble_study(&cfg, 4, Execution::Parallel).unwrap();
    assert_eq!(a.sup_e_tot, b.sup_e_tot);
    assert_eq!(a.dissipation, b.dissipation);
    // noisy paths differ from one another
    assert!(a.dissipation.windows(2).all(|w| w[0] != w[1]));
}

#[test]
fn quiescent_ensemble_preset_has_noise_driven_suprema() {
    let mut cfg = preset("ensemble-moments");
    cfg.experiment.t_final = 0.2;
    let out = ensemble_study(&cfg, 4, Execution::Sequential).unwrap();
    let lo = out.sup_e_tot.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = out.sup_e_tot.iter().copied().fold(0.0, f64::max);
    assert!(hi > lo, "every path peaks at the same value {lo}");
}

#[test]
fn ensemble_needs_two_paths() {
    assert_eq!(
        ensemble_study(&small(8, 0.01), 1, Execution::Sequential)
            .unwrap_err()
            .exit_code(),
        2
    );
}

#[test]
fn convergence_rejects_descending_modes() {
    let err = convergence_study(&small(8, 0.01), &[16, 8], Execution::Sequential).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn convergence_of_a_resolution_with_itself_is_zero() {
    let out = convergence_study(&small(16, 0.02), &[16, 16], Execution::Sequential).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].distance.total(), 0.0);
}

#[test]
fn linear_dynamics_of_resolved_data_do_not_depend_on_resolution() {
    let out = convergence_study(&linear(8, 0.05), &[8, 16, 32], Execution::Parallel).unwrap();
    assert_eq!(out.rows.len(), 3);
    for row in &out.rows {
        assert!(row.distance.total() <= 1e-28, "{:?}", row.distance);
    }
}

#[test]
fn nonlinear_convergence_decreases_with_resolution() {
    let cfg = small(8, 0.1).deterministic();
    let out = convergence_study(&cfg, &[8, 16, 32], Execution::Parallel).unwrap();
    assert!(out.consecutive_decreasing);
    assert!(out.to_finest_decreasing);
}

#[test]
fn short_soak_completes_for_covered_exponents() {
    let cfg = small(16, 0.1);
    let rows = soak_study(&cfg, &[1.0, 2.0, 3.0], Execution::Parallel, None).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert!(row.covered);
        assert!(row.passed(), "r = {}", row.r);
    }
}
