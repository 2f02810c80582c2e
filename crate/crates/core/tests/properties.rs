use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rqbm::contraction::{self, BestExponent, Condition, SelfMap};
use rqbm::instances::{self, Profile, SqrtVariant};
use rqbm::solver::{self, PicardOptions, Termination};
use rqbm::space::{self, Outcome, Sampling, ScanOptions, Space};
use rqbm::thetaphi::{self, PhiSpec, PhiThresholds, ThetaSpec};

const TOL: f64 = 1e-9;

fn profile() -> impl Strategy<Value = Profile> {
    prop_oneof![Just(Profile::Metric), Just(Profile::Quasi), Just(Profile::Adversarial)]
}

fn all_witnesses() -> ScanOptions {
    ScanOptions {
        witness_cap: usize::MAX,
        ..ScanOptions::default()
    }
}

fn shuffled(space: &Space, seed: u64) -> Space {
    let mut file = space.to_file();
    file.points.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    file.build().unwrap()
}

fn violation_set(space: &Space, s: f64) -> BTreeSet<(String, String, String, String)> {
    let r = space::check_b_rectangular(space, s, &Sampling::default(), &all_witnesses()).unwrap();
    assert_eq!(r.violation_count as usize, r.violations.len());
    r.violations.into_iter().map(|v| (v.x, v.u, v.v, v.y)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn minimal_s_bounds_passing_coefficients(n in 4usize..8, seed in 0u64..10_000, p in profile(), s in 1.0f64..8.0) {
        let space = instances::random_space(n, seed, p).unwrap();
        let r = space::check_b_rectangular(&space, s, &Sampling::default(), &ScanOptions::default()).unwrap();
        let m = space::minimal_rectangular_coefficient(&space, &Sampling::default()).unwrap();
        let m = m.value().unwrap();
        if r.outcome.passed() {
            prop_assert!(m <= s + TOL);
        }
        // the minimal coefficient itself always passes
        if m.is_finite() {
            let at = space::check_b_rectangular(&space, m.max(1.0), &Sampling::default(), &ScanOptions::default()).unwrap();
            prop_assert!(at.outcome.passed());
        }
    }

    #[test]
    fn violations_do_not_depend_on_point_order(n in 4usize..7, seed in 0u64..10_000, perm in any::<u64>(), p in profile()) {
        let space = instances::random_space(n, seed, p).unwrap();
        let s = p.s() / 2.0;
        prop_assert_eq!(violation_set(&space, s), violation_set(&shuffled(&space, perm), s));
    }

    #[test]
    fn rqb_is_monotone_in_s(n in 4usize..7, seed in 0u64..10_000, p in profile(), s in 1.0f64..5.0, bump in 0.0f64..3.0) {
        let space = instances::random_space(n, seed, p).unwrap();
        let opts = ScanOptions::default();
        let lo = space::classify(&space, Some(s), &Sampling::default(), &opts).unwrap();
        let hi = space::classify(&space, Some(s + bump), &Sampling::default(), &opts).unwrap();
        prop_assert!(!lo.is_rqb || hi.is_rqb);
    }

    #[test]
    fn space_files_round_trip(n in 2usize..7, seed in 0u64..10_000, p in profile()) {
        let space = instances::random_space(n, seed, p).unwrap();
        let text = space.to_file().to_json();
        let again = Space::from_json(&text).unwrap();
        let (a, b) = (space.as_finite().unwrap(), again.as_finite().unwrap());
        prop_assert_eq!(a.points(), b.points());
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a.d(i, j).to_bits(), b.d(i, j).to_bits());
            }
        }
    }

    #[test]
    fn contraction_monotone_in_r_and_s(n in 3usize..8, seed in 0u64..10_000, r in 0.05f64..0.9, dr in 0.0f64..0.09, s in 1.0f64..3.0, ds in 0.0f64..2.0) {
        let space = instances::random_space(n, seed, Profile::Metric).unwrap();
        let map = instances::random_affine_map(n, seed, seed ^ 0x5eed);
        let theta = ThetaSpec::builtin("exp-sqrt").unwrap();
        let smp = Sampling::default();
        let base = contraction::check_theta_contraction(&space, &map, &theta, r, s, &smp).unwrap();
        let larger_r = contraction::check_theta_contraction(&space, &map, &theta, r + dr, s, &smp).unwrap();
        let larger_s = contraction::check_theta_contraction(&space, &map, &theta, r, s + ds, &smp).unwrap();
        if base.passed() {
            prop_assert!(larger_r.passed());
        }
        if !base.passed() {
            prop_assert!(!larger_s.passed());
        }
    }

    #[test]
    fn worst_pair_replays_exactly(n in 3usize..8, seed in 0u64..10_000, p in profile(), r in 0.1f64..0.9) {
        let space = instances::random_space(n, seed, p).unwrap();
        let map = instances::random_affine_map(n, seed, seed + 1);
        let theta = ThetaSpec::builtin("sqrt-plus-one").unwrap();
        let s = 1.5;
        let cert = contraction::check_theta_contraction(&space, &map, &theta, r, s, &Sampling::default()).unwrap();
        if let Some(w) = cert.worst_pair {
            let fs = space.as_finite().unwrap();
            let d = fs.resolve_distance(&w.x, &w.y).unwrap();
            let d_img = fs.resolve_distance(&w.tx, &w.ty).unwrap();
            let lhs = theta.eval(s * s * d_img).unwrap();
            let rhs = theta.eval(d).unwrap().powf(r);
            prop_assert_eq!(w.lhs.unwrap().to_bits(), lhs.to_bits());
            prop_assert_eq!(w.rhs.unwrap().to_bits(), rhs.to_bits());
        }
    }

    #[test]
    fn best_exponent_is_tight(n in 3usize..8, seed in 0u64..10_000) {
        let space = instances::random_space(n, seed, Profile::Metric).unwrap();
        let map = instances::random_affine_map(n, seed, seed + 7);
        let theta = ThetaSpec::builtin("exp-sqrt").unwrap();
        let smp = Sampling::default();
        if let BestExponent::Feasible { r, witness: Some(_) } = contraction::best_exponent(&space, &map, &theta, 1.0, &smp).unwrap() {
            if r > 1e-3 && r + 1e-9 < 1.0 {
                prop_assert!(contraction::check_theta_contraction(&space, &map, &theta, r + 1e-9, 1.0, &smp).unwrap().passed());
                prop_assert!(!contraction::check_theta_contraction(&space, &map, &theta, r - 1e-3, 1.0, &smp).unwrap().passed());
            }
        }
    }

    #[test]
    fn traces_are_deterministic_and_exact(n in 2usize..8, seed in 0u64..10_000, start in 0usize..8) {
        let space = instances::random_space(n, seed, Profile::Quasi).unwrap();
        let map = instances::random_affine_map(n, seed, seed + 3);
        let x0 = space.point(&format!("p{}", start % n)).unwrap();
        let opts = PicardOptions::default();
        let a = solver::picard_iterate(&space, &map, &x0, &opts).unwrap();
        let b = solver::picard_iterate(&space, &map, &x0, &opts).unwrap();
        prop_assert_eq!(&a, &b);
        if a.terminated_by == Termination::ExactFixedPoint {
            let last = a.iterates.last().unwrap();
            prop_assert_eq!(&map.apply(&space, last).unwrap(), last);
        }
        // finite traces never run to max_iter
        prop_assert_ne!(a.terminated_by, Termination::MaxIter);
    }

    #[test]
    fn phi_iterates_descend(t in 1.0f64..1e3, n in 0usize..60, r in 0.05f64..0.95) {
        for phi in [PhiSpec::builtin("half-plus-one").unwrap(), PhiSpec::power(r).unwrap()] {
            let a = thetaphi::iterate_phi(&phi, t, n).unwrap();
            let b = thetaphi::iterate_phi(&phi, t, n + 1).unwrap();
            prop_assert!(b <= a && b >= 1.0);
        }
    }
}

#[test]
fn metric_profile_is_metric_and_rectangular() {
    let opts = ScanOptions::default();
    for seed in 0..100 {
        let space = instances::random_space(6, seed, Profile::Metric).unwrap();
        let c = space::classify(&space, None, &Sampling::default(), &opts).unwrap();
        assert!(c.is_metric, "seed {seed}");
        let r = space::check_b_rectangular(&space, 1.0, &Sampling::default(), &opts).unwrap();
        assert_eq!(r.outcome, Outcome::Pass, "seed {seed}");
    }
}

#[test]
fn builtin_lookups_are_stable() {
    for (name, _) in thetaphi::THETA_BUILTINS {
        let (a, b) = (ThetaSpec::builtin(name).unwrap(), ThetaSpec::builtin(name).unwrap());
        assert_eq!(a.source(), b.source());
        for t in [1e-6, 0.5, 3.0] {
            assert_eq!(a.eval(t).unwrap().to_bits(), b.eval(t).unwrap().to_bits());
        }
    }
}

#[test]
fn power_family_is_valid_phi() {
    for r in [0.1, 0.5, 0.9] {
        let phi = PhiSpec::power(r).unwrap();
        let rep = thetaphi::validate_phi(&phi, &thetaphi::default_phi_grid(), 256, &PhiThresholds::default()).unwrap();
        assert!(rep.passed, "r = {r}");
    }
}

#[test]
fn reduction_identity_on_shipped_instances() {
    let smp = Sampling::default();
    for name in ["example-sqrt", "example-fourth-root", "example-final"] {
        let b = instances::by_name(name, 11).unwrap();
        let map = b.map.clone().unwrap();
        let theta = ThetaSpec::parse(b.theta.as_deref().unwrap()).unwrap();
        let s = b.s.unwrap();
        for r in [0.3, 0.5, 0.8] {
            let a = contraction::check_theta_contraction(&b.space, &map, &theta, r, s, &smp).unwrap();
            let c = contraction::check_theta_phi_contraction(&b.space, &map, &theta, &PhiSpec::power(r).unwrap(), s, &smp).unwrap();
            assert_eq!(a.verdict, c.verdict, "{name} r={r}");
            assert_eq!(a.failing, c.failing, "{name} r={r}");
            let (wa, wc) = (a.worst_pair.unwrap(), c.worst_pair.unwrap());
            assert_eq!((wa.x, wa.y, wa.lhs, wa.rhs, wa.slack), (wc.x, wc.y, wc.lhs, wc.rhs, wc.slack));
        }
    }
}

#[test]
fn certified_fourth_root_map_solves_uniquely() {
    let b = instances::build_example_sqrt(SqrtVariant::FourthRoot).unwrap();
    let map = b.map.clone().unwrap();
    let theta = ThetaSpec::parse(b.theta.as_deref().unwrap()).unwrap();
    let cert = contraction::check_theta_contraction(&b.space, &map, &theta, 0.5, 2.0, &Sampling::default()).unwrap();
    assert!(cert.passed());
    let opts = PicardOptions::default();
    let starts = b.space.carrier(9).unwrap().points;
    for x0 in &starts {
        let t = solver::picard_iterate(&b.space, &map, x0, &opts).unwrap();
        let z = t.limit.clone().expect("converges");
        assert!(solver::verify_fixed_point(&b.space, &map, &z, 10.0 * opts.tol).unwrap().verified);
        for w in t.fwd_step.windows(2) {
            if w[0] > 0.0 {
                assert!(w[1] < w[0], "{x0:?}: {w:?}");
            }
        }
    }
    let u = solver::uniqueness_scan(&b.space, &map, &starts, &opts, 100.0 * opts.tol).unwrap();
    assert!(u.passed);
    assert_eq!(u.representatives.len(), 1);
}

#[test]
fn certified_random_contractions_converge() {
    let theta = ThetaSpec::builtin("sqrt-plus-one").unwrap();
    let phi = PhiSpec::builtin("half-plus-one").unwrap();
    let opts = PicardOptions::default();
    let mut certified = 0;
    for seed in 0..200 {
        let space = instances::random_space(6, seed, Profile::Metric).unwrap();
        let map = instances::random_affine_map(6, seed, seed);
        let cert = contraction::check_theta_phi_contraction(&space, &map, &theta, &phi, 1.0, &Sampling::default()).unwrap();
        if !cert.passed() {
            continue;
        }
        certified += 1;
        let starts = space.as_finite().unwrap().points().to_vec();
        for x0 in &starts {
            let t = solver::picard_iterate(&space, &map, x0, &opts).unwrap();
            let z = t.limit.clone().expect("certified map converges");
            assert!(solver::verify_fixed_point(&space, &map, &z, 10.0 * opts.tol).unwrap().verified);
        }
        assert!(solver::uniqueness_scan(&space, &map, &starts, &opts, 100.0 * opts.tol).unwrap().passed);
    }
    assert!(certified > 0);
}

#[test]
fn linear_condition_matches_direct_check() {
    let b = instances::build_example_final(11).unwrap();
    let map = b.map.clone().unwrap();
    let records = contraction::evaluate_pairs(&b.space, &map, &Condition::Linear { k: 0.5 }, 3.0, &Sampling::default(), TOL).unwrap();
    for rec in records {
        if rec.d_img > 0.0 {
            let pass = 9.0 * rec.d_img <= 0.5 * rec.d_xy + TOL;
            assert_eq!(pass, rec.status == contraction::PairStatus::Pass, "{rec:?}");
        }
    }
    let constant = SelfMap::parse("1").unwrap();
    let cert = contraction::check_linear_contraction(&b.space, &constant, 0.5, 3.0, &Sampling::default()).unwrap();
    assert_eq!(cert.verdict, Outcome::VacuousPass);
}
