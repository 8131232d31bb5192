mod common;

use chcbf::diagnostics::storage_energy;
use chcbf::harness::initial::{random_scalar, random_velocity};
use chcbf::harness::verify::pair_margin;
use chcbf::operators::{self as op, SystemState};
use chcbf::potentials::double_well;
use chcbf::snapshot::Snapshot;
use chcbf::transforms::{Padding, TransformSet};
use chcbf::{DomainSpec, ModeOrdering, VectorField};
use common::{domain, rng};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![Just((2usize, 8usize)), Just((2, 16)), Just((3, 8))]
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leray_is_an_idempotent_divergence_free_projection((dim, n) in dims(), seed in any::<u64>()) {
        let d = domain(dim, n);
        let mut g = rng(seed);
        let comps = (0..dim).map(|_| random_scalar(d, &mut g, 1.0)).collect();
        let v = VectorField::from_components(comps).unwrap();
        let p = v.leray_project();
        prop_assert!(p.divergence_residual() < 1e-14);
        let pp = p.leray_project();
        prop_assert!(common::rel_err_vec(&pp, &p) < 1e-15);
        // orthogonal: (v - Pv) ⟂ Pv
        let rest = &v - &p;
        prop_assert!(rest.inner(&p).abs() < 1e-12 * v.l2_norm_sq().max(1.0));
    }

    #[test]
    fn low_and_high_projections_split_orthogonally(seed in any::<u64>(), cut in 1usize..120) {
        let d = domain(2, 16);
        let ord = ModeOrdering::scalar(d);
        // move the cutoff up to the end of its eigenvalue shell
        let mut n = cut;
        while !ord.is_pair_closed(n) {
            n += 1;
        }
        let f = random_scalar(d, &mut rng(seed), 1.0);
        let lo = ord.project_low(&f, n).unwrap();
        let hi = ord.project_high(&f, n).unwrap();
        prop_assert!(common::rel_err(&(&lo + &hi), &f) < 1e-15);
        prop_assert!(lo.inner(&hi).abs() < 1e-12 * f.l2_norm_sq());
        prop_assert!(lo.hermitian_defect() < 1e-15);
    }

    #[test]
    fn transport_forms_are_antisymmetric((dim, n) in dims(), seed in any::<u64>()) {
        let d = domain(dim, n);
        let ts = TransformSet::new(d);
        let mut g = rng(seed);
        let y = random_velocity(d, &mut g, 1.0);
        let v = random_velocity(d, &mut g, 1.0);
        let xi = random_velocity(d, &mut g, 1.0);
        let phi = random_scalar(d, &mut g, 1.0);
        let theta = random_scalar(d, &mut g, 1.0);
        let scale = y.l2_norm() * v.hs_norm_sq(1.0).sqrt() * xi.hs_norm_sq(1.0).sqrt();
        prop_assert!(op::b0_form(&ts, &y, &v, &v).abs() / scale < 1e-12);
        let s = op::b0_form(&ts, &y, &v, &xi) + op::b0_form(&ts, &y, &xi, &v);
        prop_assert!(s.abs() / scale < 1e-12);
        let scale = y.l2_norm() * phi.hs_norm_sq(1.0).sqrt() * theta.hs_norm_sq(1.0).sqrt();
        prop_assert!(op::b1_form(&ts, &y, &phi, &phi).abs() / scale < 1e-12);
        let s = op::b1_form(&ts, &y, &phi, &theta) + op::b1_form(&ts, &y, &theta, &phi);
        prop_assert!(s.abs() / scale < 1e-12);
    }

    #[test]
    fn coupling_is_dual_to_advection((dim, n) in dims(), seed in any::<u64>()) {
        let d = domain(dim, n);
        let ts = TransformSet::new(d);
        let mut g = rng(seed);
        let v = random_velocity(d, &mut g, 1.0);
        let f = random_scalar(d, &mut g, 1.0);
        let phi = random_scalar(d, &mut g, 1.0);
        let lhs = op::coupling_form(&ts, &f, &phi).inner(&v);
        let rhs = op::b1_form(&ts, &v, &phi, &f);
        let scale = v.l2_norm() * f.hs_norm_sq(1.0).sqrt() * phi.hs_norm_sq(1.0).sqrt();
        prop_assert!(rel(lhs, rhs, scale) < 1e-12);
    }

    #[test]
    fn forchheimer_pairs_to_the_lp_norm(
        (dim, n) in dims(),
        seed in any::<u64>(),
        r in prop_oneof![Just(1.0f64), Just(2.0), Just(3.0), Just(3.5)],
    ) {
        let d = domain(dim, n);
        let ts = TransformSet::new(d);
        let v = random_velocity(d, &mut rng(seed), 1.0);
        let lhs = op::forchheimer(&ts, &v, r).inner(&v);
        let rhs = op::forchheimer_energy(&ts, &v, r);
        prop_assert!(rel(lhs, rhs, rhs) < 1e-8);
    }

    #[test]
    fn forchheimer_is_monotone_for_pairs(
        seed in any::<u64>(),
        r in prop_oneof![Just(1.0f64), Just(2.0), Just(3.0), Just(4.0)],
        amp in 0.1f64..10.0,
    ) {
        let d = domain(2, 16);
        let ts = TransformSet::new(d);
        let mut g = rng(seed);
        let v1 = random_velocity(d, &mut g, 1.0).scale(amp);
        let v2 = random_velocity(d, &mut g, 1.0);
        prop_assert!(pair_margin(&ts, &v1, &v2, r) >= -1e-10 * (1.0 + amp.powf(r + 1.0)));
    }

    #[test]
    fn forchheimer_is_locally_lipschitz_pointwise(
        a in prop::array::uniform3(-5.0f64..5.0),
        b in prop::array::uniform3(-5.0f64..5.0),
        r in 1.0f64..4.0,
    ) {
        let fa = op::forchheimer_pointwise(&a, r);
        let fb = op::forchheimer_pointwise(&b, r);
        let norm = |x: &[f64]| x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let diff: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x - y).collect();
        let dv: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let bound = r * (norm(&a) + norm(&b)).powf(r - 1.0) * norm(&dv);
        prop_assert!(norm(&diff) <= bound * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn products_stay_real_and_parseval_holds((dim, n) in dims(), seed in any::<u64>()) {
        let d = domain(dim, n);
        let ts = TransformSet::new(d);
        let mut g = rng(seed);
        let a = random_scalar(d, &mut g, 1.0);
        let b = random_scalar(d, &mut g, 1.0);
        let (p, _) = ts.dealiased_product(&a, &b, 2);
        prop_assert!(p.hermitian_defect() < 1e-15);
        let quad = ts.get(Padding::None).integrate(&a, |x| x * x);
        prop_assert!(rel(quad, a.l2_norm_sq(), a.l2_norm_sq()) < 1e-10);
    }

    #[test]
    fn interpolation_between_fractional_norms(seed in any::<u64>()) {
        let d = domain(2, 16);
        let f = random_scalar(d, &mut rng(seed), 0.5);
        let lhs = f.fractional_norm_sq(1.0).sqrt();
        let rhs = f.fractional_norm_sq(0.5).sqrt().sqrt() * f.fractional_norm_sq(1.5).sqrt().sqrt();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn energy_record_is_self_consistent((dim, n) in dims(), seed in any::<u64>()) {
        let d = domain(dim, n);
        let ts = TransformSet::new(d);
        let mut g = rng(seed);
        let x = SystemState::new(
            random_velocity(d, &mut g, 1.0),
            random_scalar(d, &mut g, 1.0),
            random_scalar(d, &mut g, 1.0),
        );
        let eps = 0.5;
        let rec = storage_energy(&ts, &x, eps, &double_well());
        prop_assert!(rec.consistency_defect(eps, x.phi.l2_norm_sq()) < 1e-12);
        prop_assert!(rec.e >= 0.0 && rec.e_tot >= 0.0);
    }

    #[test]
    fn snapshots_round_trip_bit_exactly((dim, n) in dims(), seed in any::<u64>(), time in 0.0f64..100.0) {
        let d = domain(dim, n);
        let mut g = rng(seed);
        let x = SystemState::new(
            random_velocity(d, &mut g, 1.0),
            random_scalar(d, &mut g, 1.0),
            random_scalar(d, &mut g, 1.0),
        );
        let snap = Snapshot::from_state(&x, time);
        let bytes = snap.to_bytes();
        let back = Snapshot::read_from(&bytes[..]).unwrap();
        prop_assert_eq!(&back, &snap);
        prop_assert_eq!(back.to_state().unwrap(), x);
    }
}

#[test]
fn energy_matches_four_times_refined_quadrature() {
    // ∫ψ(φ) on a 4N grid by explicit sums; ψ is quartic so both are exact
    let d: DomainSpec = domain(2, 16);
    let ts = TransformSet::new(d);
    let mut g = rng(21);
    let x = SystemState::new(
        random_velocity(d, &mut g, 1.0),
        random_scalar(d, &mut g, 1.0),
        random_scalar(d, &mut g, 1.0),
    );
    let eps = 0.5;
    let pot = double_well();
    let rec = storage_energy(&ts, &x, eps, &pot);
    let s = common::sample(&x.phi, 64);
    let psi =
        s.values.iter().map(|&p| pot.psi(p)).sum::<f64>() / s.values.len() as f64 * d.volume();
    assert!(rel(rec.potential, psi / eps, psi / eps) < 1e-8);
    let vs: Vec<_> =
        x.v.components()
            .iter()
            .map(|c| common::sample(c, 64))
            .collect();
    let ke = 0.5
        * (0..vs[0].values.len())
            .map(|q| vs.iter().map(|s| s.values[q] * s.values[q]).sum::<f64>())
            .sum::<f64>()
        / vs[0].values.len() as f64
        * d.volume();
    assert!(rel(rec.kinetic, ke, ke) < 1e-8);
}
