use mixdec_core::models;
use mixdec_core::periodic::*;
use mixdec_core::MapSystem;
use proptest::prelude::*;

const K: f64 = 1.2;

fn orbits(f: &MapSystem, max_period: usize, seeds: usize) -> Vec<PeriodicOrbit> {
    let params = OrbitParams { seeds_per_axis: seeds, ..OrbitParams::default() };
    find_periodic_orbits(f, max_period, None, &params, 0).unwrap().orbits
}

/// Eigenvalues of a 2x2 matrix with real spectrum and determinant one.
fn unimodular_eigenvalues(trace: f64) -> (f64, f64) {
    let root = (trace * trace - 4.0).sqrt();
    ((trace + root) / 2.0, (trace - root) / 2.0)
}

#[test]
fn standard_map_low_periods() {
    let f = models::standard_map(K);
    let found = orbits(&f, 2, 10);
    let periods: Vec<usize> = found.iter().map(|o| o.period).collect();
    assert_eq!(periods, vec![1, 1, 2, 2]);
    // saddle at the origin: trace 2 + K
    let (hi, lo) = unimodular_eigenvalues(2.0 + K);
    let origin = &found[0];
    assert!(origin.points[0].iter().all(|c| c.abs() < 1e-9));
    assert!((origin.multipliers[0].re - hi).abs() < 1e-10);
    assert!((origin.multipliers[1].re - lo).abs() < 1e-10);
    // elliptic point at (1/2, 0): trace 2 - K
    let centre = &found[1];
    assert!((centre.points[0][0] - 0.5).abs() < 1e-9);
    for z in &centre.multipliers {
        assert!((z.re - (2.0 - K) / 2.0).abs() < 1e-10);
        assert!((z.norm() - 1.0).abs() < 1e-10);
    }
    assert!(saddle_data(&f, &centre.points[0], 1).is_err());
}

#[test]
fn standard_map_cycle_verdicts() {
    let f = models::standard_map(K);
    let found = orbits(&f, 2, 10);
    let saddles: Vec<&PeriodicOrbit> =
        found.iter().filter(|o| saddle_data(&f, &o.points[0], o.period).is_ok()).collect();
    assert_eq!(saddles.iter().map(|o| o.period).collect::<Vec<_>>(), vec![1, 2]);
    let mp = ManifoldParams::default();
    let homoclinic = detect_cycle(&f, saddles[0], saddles[0], 1.0, Some(1), &mp).unwrap();
    assert_eq!(homoclinic.verdict, CycleVerdict::Cycle);
    assert_eq!(homoclinic.forward, DirectionVerdict::Found { transverse: 8 });
    // Branches of length 4 from the origin never meet the stable branches of the
    // period-2 saddle; they are incomplete, so this stays inconclusive.
    let pair = detect_cycle(&f, saddles[0], saddles[1], mp.arclength, Some(1), &mp).unwrap();
    assert_eq!(pair.verdict, CycleVerdict::Inconclusive);
    assert_eq!(pair.forward, DirectionVerdict::Inconclusive { tangencies: 0 });
    assert_eq!(pair.period_drop_candidate, Some(false));
}

#[test]
fn cat_fixed_point_and_times() {
    let f = models::cat_map();
    let found = orbits(&f, 1, 6);
    assert_eq!(found.len(), 1);
    let (hi, lo) = unimodular_eigenvalues(3.0);
    assert!((found[0].multipliers[0].re - hi).abs() < 1e-10);
    assert!((found[0].multipliers[1].re - lo).abs() < 1e-10);
    let p = &found[0];
    let times = intersection_times(&f, p, p, 2, 1.5, &ManifoldParams::default()).unwrap();
    assert_eq!(times.times, vec![-2, -1, 0, 1, 2]);
    assert_eq!(times.ell, 1);
    assert!(closure_violations(&times).is_empty());
    assert!(translation_violations(&times, 1).is_empty());
}

#[test]
fn disjoint_axes_give_no_times() {
    let f = models::linear_saddle();
    let found = orbits(&f, 1, 4);
    let origin = found.iter().find(|o| o.points[0].iter().all(|c| c.abs() < 1e-12)).unwrap();
    let times = intersection_times(&f, origin, origin, 2, 1.0, &ManifoldParams::default()).unwrap();
    assert!(times.times.is_empty());
    assert!(times.inconclusive);
    assert_eq!(times.ell, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A rotation by p/q has only period-q orbits, all with multiplier one.
    #[test]
    fn rational_rotations_are_neutral_with_unit_multiplier(q in 2usize..6, p in 1usize..6) {
        prop_assume!(p < q && mixdec_core::graph::gcd(p as u64, q as u64) == 1);
        let f = models::rotation(p as f64 / q as f64);
        let params = OrbitParams { seeds_per_axis: 3, ..OrbitParams::default() };
        let search = find_periodic_orbits(&f, q, None, &params, 0).unwrap();
        prop_assert!(search.orbits.iter().all(|o| o.period == q));
        for o in &search.orbits {
            prop_assert!((o.multipliers[0].re - 1.0).abs() < 1e-12);
            prop_assert_eq!(classify(o, &ResonanceParams::default()).verdict, Verdict::Resonant);
        }
    }

    /// Doubling orbits of period p sit on multiples of 1/(2^p - 1).
    #[test]
    fn doubling_orbits_are_dyadic_cycles(r in 1usize..5) {
        let f = models::doubling();
        let params = OrbitParams { seeds_per_axis: 64, ..OrbitParams::default() };
        let search = find_periodic_orbits(&f, r, None, &params, 0).unwrap();
        let denominator = ((1u64 << r) - 1) as f64;
        for o in &search.orbits {
            prop_assert!((o.multipliers[0].re - 2f64.powi(o.period as i32)).abs() < 1e-9);
            let scaled = o.points[0][0] * ((1u64 << o.period) - 1) as f64;
            prop_assert!((scaled - scaled.round()).abs() < 1e-8);
            prop_assert!(o.period <= r);
        }
        // points of period dividing r: 2^r - 1 of them
        let divisors: usize = search.orbits.iter().filter(|o| r % o.period == 0).map(|o| o.period).sum();
        prop_assert_eq!(divisors as f64, denominator);
    }
}
