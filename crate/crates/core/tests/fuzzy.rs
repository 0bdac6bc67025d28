mod common;

use proptest::prelude::*;
use roundabout::fuzzy::{defuzzify, Domain, MembershipSet, PiecewiseLinear, Trapezoid};
use roundabout::pso::{decode, encode, search_bounds};
use roundabout::FuzzyEngine;

use common::{brute_et, brute_ud, ql_grades};

#[test]
fn short_queue_centroid_matches_quadrature() {
    let set = MembershipSet::hand_crafted();
    let term = set.ql.term("short").unwrap();
    let n = 200_000;
    let h = 20.0 / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let x = (i as f64 + 0.5) * h;
        let g = ql_grades(x)[0];
        num += x * g * h;
        den += g * h;
    }
    assert!((term.centroid() - num / den).abs() < 1e-6);
    assert!((term.centroid() - 8.0 / 3.0).abs() < 1e-12);
}

#[test]
fn nine_rule_trace_at_medium_point() {
    // QL 9 and WT 55 sit only in the medium terms (grade 5/6 each), so
    // exactly one rule fires in each base.
    let e = FuzzyEngine::default();
    let set = MembershipSet::hand_crafted();
    let et = e.extension(9.0, 55.0);
    assert!((et.grade(&set.et, "long").unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(et.grade(&set.et, "short"), Some(0.0));
    assert!((et.crisp - 12.5).abs() < 1e-12);
    assert!((e.urgency(9.0, 55.0).crisp - 0.5).abs() < 1e-12);
    assert!((brute_et(9.0, 55.0) - et.crisp).abs() < 1e-12);
}

#[test]
fn hand_crafted_grades_match_closed_forms() {
    let set = MembershipSet::hand_crafted();
    for i in 0..=1000 {
        let x = i as f64 * 0.02;
        let g = ql_grades(x);
        for (k, t) in set.ql.terms().iter().enumerate() {
            assert!((t.grade(x) - g[k]).abs() < 1e-12, "{} at {x}", t.name());
        }
    }
}

#[test]
fn piecewise_centroid_of_trapezoid() {
    // Symmetric trapezoid on [2, 10] with core [4, 8]: centroid 6, area 6.
    let mf = PiecewiseLinear::new(
        vec![
            (0.0, 0.0),
            (2.0, 0.0),
            (4.0, 1.0),
            (8.0, 1.0),
            (10.0, 0.0),
            (12.0, 0.0),
        ],
        Domain::new(0.0, 12.0),
    )
    .unwrap();
    assert!((mf.area() - 6.0).abs() < 1e-12);
    assert!((mf.centroid().unwrap() - 6.0).abs() < 1e-12);
}

fn in_bounds_vector() -> impl Strategy<Value = Vec<f64>> {
    let parts: Vec<_> = search_bounds()
        .into_iter()
        .map(|(lo, hi)| lo..=hi)
        .collect();
    parts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trapezoid_vectors_round_trip(x in in_bounds_vector()) {
        let set = decode(&x).unwrap();
        let back = encode(&set).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let reloaded = MembershipSet::from_json(&set.to_json()).unwrap();
        prop_assert_eq!(encode(&reloaded).unwrap(), back);
    }

    #[test]
    fn decoded_sets_always_infer(x in in_bounds_vector(), ql in 0.0..20.0f64, wt in 0.0..100.0f64) {
        let e = FuzzyEngine::new(decode(&x).unwrap()).unwrap();
        let et = e.extension(ql, wt).crisp;
        let ud = e.urgency(ql, wt).crisp;
        prop_assert!((0.0..=15.0).contains(&et));
        prop_assert!((0.0..=1.0).contains(&ud));
    }

    #[test]
    fn trapezoid_grade_is_closed_form(u in 0.0..10.0f64, d in 0.0..10.0f64, c in 0.0..20.0f64, x in 0.0..20.0f64) {
        // Lower side is U + D, so each slope spans D / 2.
        let t = Trapezoid::new(u, d, c);
        let r = (x - c).abs();
        let expected = if r <= u / 2.0 {
            1.0
        } else if r >= (u + d) / 2.0 {
            0.0
        } else {
            ((u + d) / 2.0 - r) / (d / 2.0)
        };
        prop_assert!((t.grade(x) - expected).abs() < 1e-9);
    }

    #[test]
    fn clipped_trapezoid_agrees_with_closed_form(
        u in 0.0..10.0f64,
        d in 0.0..10.0f64,
        c in 0.0..20.0f64,
        xs in prop::collection::vec(0.0..=20.0f64, 1000),
    ) {
        let t = Trapezoid::new(u, d, c);
        let mf = t.to_piecewise(Domain::new(0.0, 20.0)).unwrap();
        for x in xs {
            prop_assert!((mf.grade(x) - t.grade(x)).abs() <= 1e-12, "x = {}", x);
        }
    }

    #[test]
    fn defuzzify_stays_within_centroids(
        grades in prop::collection::vec(0.0..=1.0f64, 3),
        centroids in prop::collection::vec(-5.0..5.0f64, 3),
    ) {
        let y = defuzzify(&grades, &centroids);
        let lo = centroids.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = centroids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
    }

    #[test]
    fn defuzzify_is_monotone_in_the_top_grade(
        grades in prop::collection::vec(0.0..=1.0f64, 3),
        bump in 0.0..=1.0f64,
    ) {
        let centroids = [1.0, 2.0, 3.0];
        let mut raised = grades.clone();
        raised[2] = (raised[2] + bump).min(1.0);
        prop_assert!(defuzzify(&raised, &centroids) >= defuzzify(&grades, &centroids) - 1e-12);
    }

    #[test]
    fn pipeline_matches_brute_force(ql in -2.0..22.0f64, wt in -5.0..105.0f64) {
        let e = FuzzyEngine::default();
        prop_assert!((e.extension(ql, wt).crisp - brute_et(ql, wt)).abs() < 1e-9);
        prop_assert!((e.urgency(ql, wt).crisp - brute_ud(ql, wt)).abs() < 1e-9);
    }
}
