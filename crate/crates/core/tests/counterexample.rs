mod common;

use common::*;
use num_traits::{One, Signed};
use padic_core::counterexample::{alpha, default_boxes, failure_window, k_n, right_edge, staircase_pieces};
use padic_core::{
    build_example_coeffs, build_example_hfamily, check_family, example_density, example_end_to_end, example_psi, majorant,
    verify_lambda_failure, Cell, Error, ExampleSpec, Frac, Tolerances,
};

fn term(spec: &ExampleSpec, n: u32, i: u32) -> Cell {
    spec.terms().into_iter().find(|t| t.n == n && t.i == i).unwrap().support()
}

#[test]
fn support_chain_nests() {
    let spec = ExampleSpec::new(6).unwrap();
    let g = spec.grid().unwrap();
    for n in 1..=6u32 {
        // [1 - 2^{1-n}, 1 - 2^{-n})
        let strip = Cell::uniform(&g, n, vec![(1u64 << n) - 2]).unwrap();
        let mut outer = strip;
        for l in 0..=(6 - n) {
            let inner = term(&spec, n + l, n);
            assert!(outer.contains(&g, &inner), "n={n} l={l}");
            outer = inner;
        }
    }
}

#[test]
fn density_takes_signed_powers_of_two() {
    let spec = ExampleSpec::new(4).unwrap();
    let d = example_density(&spec).unwrap();
    let terms = spec.terms();
    for (cell, v) in d.leaves() {
        if v == Frac::from_integer(0.into()) {
            continue;
        }
        assert!(v.is_integer());
        let n = v.abs().to_integer();
        // each value is a sum of distinct ±2^k with disjoint ranks
        assert!(n.bits() <= u64::from(spec.resolution_rank()), "{cell}");
    }
    assert_eq!(terms.len(), 10);
    assert_eq!(alpha(3, 2), 17);
    assert_eq!(k_n(4), 6);
    let coeffs = build_example_coeffs(&spec).unwrap();
    assert_eq!(coeffs.len(), 10);
}

#[test]
fn truncation_lowers_the_majorant() {
    let small = ExampleSpec::new(3).unwrap();
    let big = ExampleSpec::new(4).unwrap();
    let (rs, rb) = (small.resolution_rank(), big.resolution_rank());
    let s = majorant(&example_psi(&small).unwrap()).uniform_values(rs).unwrap();
    let b = majorant(&example_psi(&big).unwrap()).uniform_values(rb).unwrap();
    for (cell, v) in &b {
        let parent = (cell.index()[0] >> (rb - rs)) as usize;
        assert!(s[parent].1 <= *v, "{cell}");
    }
}

#[test]
fn staircase_has_constant_one_and_unit_infimum() {
    for nmax in [2, 5, 7] {
        let spec = ExampleSpec::new(nmax).unwrap();
        let fam = build_example_hfamily(&spec).unwrap();
        let rep = check_family(&fam).unwrap();
        assert!(rep.ok());
        assert!(rep.c_min.iter().all(|c| c.as_ref().is_some_and(|c| c.is_one())));
        assert!(rep.h3_eps0.is_one());
        assert_eq!(staircase_pieces(3).len(), 4);
    }
    // member 1: 4 on [0, 1/2), 2 on [1/2, 1]
    let first = staircase_pieces(1);
    assert_eq!(first[0].1, q(4));
    assert_eq!(first[1].1, q(2));
}

#[test]
fn windows_and_their_errors() {
    let spec = ExampleSpec::new(5).unwrap();
    let w = failure_window(&spec, 4).unwrap();
    assert!(w.iter().all(|&(m, n, i)| n == 5 && m + 2 == k_n(n) + i));
    assert_eq!(w.len(), 5);
    assert!(matches!(failure_window(&spec, 5), Err(Error::EmptyWindow { j: 5, nmax: 5 })));
    let tiny = ExampleSpec::new(2).unwrap();
    assert!(matches!(verify_lambda_failure(&tiny, 5), Err(Error::EmptyWindow { .. })));
    assert_eq!(right_edge(2).index(), &[3]);
}

#[test]
fn failure_bounds_hold_for_every_right_edge() {
    let spec = ExampleSpec::new(6).unwrap();
    for j in 1..6 {
        let f = verify_lambda_failure(&spec, j).unwrap();
        assert!(f.all_hold, "j={j}");
        for e in &f.entries {
            assert!(e.value >= Frac::one() / pow2(j + 2));
        }
    }
}

#[test]
fn end_to_end_report() {
    let spec = ExampleSpec::new(5).unwrap();
    let rep = example_end_to_end(&spec, &[1, 2, 3], &default_boxes(), &Tolerances::default()).unwrap();
    assert!(rep.pass());
    assert_eq!(rep.max_rank, 15);
    let js = rep.to_json();
    assert_eq!(js["schema_version"], 1);
    assert_eq!(js["failures"].as_array().unwrap().len(), 3);
    assert_eq!(js["recoveries"].as_array().unwrap().len(), 2);
    assert_eq!(js["pass"], true);
}

#[test]
fn end_to_end_is_thread_count_independent() {
    let spec = ExampleSpec::new(4).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let rep = example_end_to_end(&spec, &[], &default_boxes(), &Tolerances::default()).unwrap();
            serde_json::to_string(&rep.to_json()).unwrap()
        })
    };
    assert_eq!(run(1), run(4));
}
