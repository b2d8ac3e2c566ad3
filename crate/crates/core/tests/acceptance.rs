//! Acceptance suite: criteria 1 to 9, one status line each.
//!
//! Run with `cargo test -p padic-core --test acceptance`.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use num_complex::Complex64;
use num_traits::One;
use padic_core::counterexample::k_n;
use padic_core::json::{complex_value, frac_value, number};
use padic_core::{
    a_integral, additive_fn, ah_integral, build_example_hfamily, check_family, decompose_box, example_psi, gamma_matrix,
    inner_product, partial_sum, price_coeffs_from_haar, psi_eval, recover_additive, recover_haar_coeff,
    recover_price_coeff, tensor_haar_step, tensor_price_step, verify_ah_success, verify_lambda_failure, AhOptions, Cell,
    CoeffMode, Direction, ExampleSpec, Frac, GridConfig, HFamily, MultiIndex, StepFunction, Tolerances,
    TruncationPolicy,
};
use rand::Rng;
use serde_json::{json, Value};

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
    report: Value,
}

fn one_dim_grids() -> Vec<Vec<u32>> {
    vec![vec![2, 2, 2, 2], vec![3, 3, 3], vec![2, 3, 2, 3]]
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut per_grid = Vec::new();
    for seq in one_dim_grids() {
        let g = grid(vec![seq.clone()]);
        let top = g.modulus(0, 3).unwrap();
        let chi: Vec<_> = (0..top).map(|n| tensor_haar_step(&g, &MultiIndex::new(vec![n])).unwrap()).collect();
        let psi: Vec<_> = (0..top).map(|n| tensor_price_step(&g, &MultiIndex::new(vec![n])).unwrap()).collect();
        let mut dev = [0.0f64; 2];
        for (s, sys) in [&chi, &psi].into_iter().enumerate() {
            for (a, fa) in sys.iter().enumerate() {
                for (b, fb) in sys.iter().enumerate() {
                    let want = if a == b { 1.0 } else { 0.0 };
                    dev[s] = dev[s].max((inner_product(fa, fb).unwrap() - want).norm());
                }
            }
        }
        worst = worst.max(dev[0]).max(dev[1]);
        per_grid.push(json!({"seq": seq, "indices": top, "haar": number(dev[0]), "price": number(dev[1])}));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        pass: worst <= 1e-10 && secs < 5.0,
        detail: format!("max |<f,g> - delta| = {worst:.2e}, {secs:.2}s"),
        report: json!({"grids": per_grid, "max_deviation": number(worst)}),
    }
}

fn criterion_2() -> Outcome {
    let mut unitarity = 0.0f64;
    let mut residual = 0.0f64;
    for seq in one_dim_grids() {
        let g = grid(vec![seq.clone()]);
        for s in 1..=g.depth() {
            let block = gamma_matrix(g.seq(0), s).unwrap();
            unitarity = unitarity.max(block.unitarity_defect());
            for (a, row) in block.entries.iter().enumerate() {
                let k = block.offset + a as u64;
                let target = tensor_price_step(&g, &MultiIndex::new(vec![k])).unwrap();
                let mut sum = StepFunction::constant(g.clone(), c(0.0));
                for (b, gamma) in row.iter().enumerate() {
                    let chi = tensor_haar_step(&g, &MultiIndex::new(vec![block.offset + b as u64])).unwrap();
                    sum = sum.zip_with(&chi, |x, y| x + gamma * y).unwrap();
                }
                residual = residual.max(sum.sup_distance(&target).unwrap());
            }
        }
    }

    let mut sn = 0.0f64;
    let mut r = rng(2);
    let mut configs: Vec<Vec<Vec<u32>>> = one_dim_grids().into_iter().map(|s| vec![s]).collect();
    configs.push(vec![vec![2, 3, 2], vec![3, 2, 2]]);
    for seqs in configs {
        let g = grid(seqs);
        for _ in 0..10 {
            let n = g.depth();
            let haar = random_series(&g, CoeffMode::Haar, n, 6, &mut r);
            let price = price_coeffs_from_haar(&haar, Direction::HaarToPrice).unwrap();
            let d = partial_sum(&haar, n)
                .unwrap()
                .sup_distance(&partial_sum(&price, n).unwrap())
                .unwrap();
            sn = sn.max(d);
        }
    }
    Outcome {
        id: 2,
        pass: unitarity <= 1e-10 && residual <= 1e-9 && sn <= 1e-9,
        detail: format!("unitarity {unitarity:.2e}, reconstruction {residual:.2e}, S_N {sn:.2e}"),
        report: json!({
            "unitarity_defect": number(unitarity),
            "reconstruction_residual": number(residual),
            "partial_sum_distance": number(sn),
        }),
    }
}

/// `∫_box S` from the leaves of `S`, independent of the library's box integrals.
fn leaf_integral(g: &GridConfig, s: &StepFunction<Complex64>, bx: &Cell) -> Complex64 {
    s.leaves()
        .into_iter()
        .filter_map(|(leaf, v)| leaf.intersection(g, bx).map(|i| v * padic_core::frac_to_f64(&i.measure(g))))
        .sum()
}

fn criterion_3() -> Outcome {
    let grids = [
        vec![vec![2, 2, 2, 2]],
        vec![vec![3, 3, 3]],
        vec![vec![2, 3, 2, 3]],
        vec![vec![2, 2, 2], vec![3, 3, 3]],
        vec![vec![2, 3, 2, 3], vec![2, 2, 2, 2]],
    ];
    let mut r = rng(3);
    let mut additivity = 0.0f64;
    let mut boxes = 0.0f64;
    let mut cells_checked = 0u64;
    for t in 0..200 {
        let g = grid(grids[t % grids.len()].clone());
        let rank = r.random_range(1..=g.depth().min(4));
        let coeffs = random_series(&g, CoeffMode::Haar, rank, 1 + r.random_range(0..6), &mut r);
        let psi = additive_fn(&coeffs).unwrap();
        for k in 0..rank {
            for cell in uniform_cells(&g, k) {
                let kids: Complex64 = children(&g, &cell).iter().map(|ch| psi_eval(&psi, ch).unwrap()).sum();
                additivity = additivity.max((psi_eval(&psi, &cell).unwrap() - kids).norm());
                cells_checked += 1;
            }
        }
        if g.dims() == 2 {
            let s = partial_sum(&coeffs, g.depth()).unwrap();
            for _ in 0..10 {
                let bx = random_box(&g, g.depth(), &mut r);
                let parts: Complex64 = decompose_box(&g, &bx)
                    .unwrap()
                    .cells
                    .iter()
                    .map(|p| psi_eval(&psi, p).unwrap())
                    .sum();
                let whole = psi_eval(&psi, &bx).unwrap();
                boxes = boxes
                    .max((whole - parts).norm())
                    .max((whole - leaf_integral(&g, &s, &bx)).norm());
            }
        }
    }
    Outcome {
        id: 3,
        pass: additivity <= 1e-12 && boxes <= 1e-12,
        detail: format!("{cells_checked} cells, additivity {additivity:.2e}, mixed boxes {boxes:.2e}"),
        report: json!({"cells": cells_checked, "additivity": number(additivity), "mixed_boxes": number(boxes)}),
    }
}

struct Config {
    name: &'static str,
    seqs: Vec<Vec<u32>>,
}

fn recovery_configs() -> Vec<Config> {
    vec![
        Config {
            name: "d=1 p=2",
            seqs: vec![vec![2, 2, 2, 2]],
        },
        Config {
            name: "d=1 p=3",
            seqs: vec![vec![3, 3, 3]],
        },
        Config {
            name: "d=2 mixed",
            seqs: vec![vec![2, 3, 2], vec![3, 2, 2]],
        },
    ]
}

const MEMBERS: u32 = 10;

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let tol = Tolerances::default();
    let mut r = rng(4);
    let mut rows = Vec::new();
    let mut pass = true;
    let mut worst = 0.0f64;
    for cfg in recovery_configs() {
        let g = grid(cfg.seqs.clone());
        let constant = HFamily::powers_of_two(g.clone(), MEMBERS).unwrap();
        let mut checked = 0u32;
        let mut cfg_ok = true;
        for _ in 0..50 {
            let random = random_family(&g, MEMBERS, &mut r);
            let coeffs = random_series(&g, CoeffMode::Haar, g.depth(), 1 + r.random_range(0..4), &mut r);
            let f = partial_sum(&coeffs, g.depth()).unwrap();
            let mut targets: Vec<MultiIndex> = coeffs.iter().map(|(n, _)| n.clone()).collect();
            targets.push(random_index(&g, g.depth(), &mut r));
            for fam in [&constant, &random] {
                for n in &targets {
                    let rep = recover_haar_coeff(&f, n, fam, &tol).unwrap();
                    let err = (rep.estimates.last().unwrap() - coeffs.get(n)).norm();
                    worst = worst.max(err);
                    cfg_ok &= err <= 1e-8 && rep.verdict() && rep.hypotheses_ok;
                    checked += 1;
                }
            }
            if cfg.seqs.len() == 1 && cfg.seqs[0][0] == 3 {
                let planted = random_series(&g, CoeffMode::Price, g.depth(), 1 + r.random_range(0..3), &mut r);
                let f = partial_sum(&planted, g.depth()).unwrap();
                for (n, b) in planted.iter() {
                    let rep = recover_price_coeff(&f, n, &random, &tol).unwrap();
                    let err = (rep.estimates.last().unwrap() - b).norm();
                    worst = worst.max(err).max(rep.gamma_path_error.unwrap());
                    cfg_ok &= err <= 1e-8 && rep.verdict() && rep.hypotheses_ok;
                    checked += 1;
                }
            }
        }
        pass &= cfg_ok;
        rows.push(json!({"config": cfg.name, "recoveries": checked, "pass": cfg_ok}));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 4,
        pass: pass && worst <= 1e-8 && secs < 60.0,
        detail: format!("worst coefficient error {worst:.2e}, {secs:.2}s"),
        report: json!({"configs": rows, "worst_error": number(worst)}),
    }
}

fn criterion_5() -> Outcome {
    let tol = Tolerances::default();
    let mut r = rng(5);
    let mut worst = 0.0f64;
    let mut pass = true;
    let mut runs = 0u32;
    for cfg in recovery_configs() {
        let g = grid(cfg.seqs.clone());
        let fam = HFamily::powers_of_two(g.clone(), MEMBERS).unwrap();
        for _ in 0..5 {
            let coeffs = random_series(&g, CoeffMode::Haar, g.depth(), 1 + r.random_range(0..5), &mut r);
            let psi = additive_fn(&coeffs).unwrap();
            for _ in 0..20 {
                let bx = random_box(&g, g.depth(), &mut r);
                let rep = recover_additive(&psi, &fam, &bx, &tol).unwrap();
                worst = worst.max(rep.final_error);
                pass &= rep.matched && rep.window_monotone && rep.hypotheses_ok;
                runs += 1;
            }
        }
    }
    Outcome {
        id: 5,
        pass,
        detail: format!("{runs} boxes, worst final error {worst:.2e}"),
        report: json!({"boxes": runs, "worst_error": number(worst), "pass": pass}),
    }
}

fn criterion_6() -> Outcome {
    let spec = ExampleSpec::new(5).unwrap();
    let mut pass = true;
    let mut reports = Vec::new();
    let mut entries = 0;
    for j in 1..=3 {
        let f = verify_lambda_failure(&spec, j).unwrap();
        let bound = Frac::one() / pow2(j + 2);
        pass &= !f.entries.is_empty() && f.entries.iter().all(|e| e.value >= bound);
        entries += f.entries.len();
        reports.push(f.to_json());
    }
    Outcome {
        id: 6,
        pass,
        detail: format!("N_max = 5, j = 1..3, {entries} windowed levels"),
        report: json!({"failures": reports}),
    }
}

fn criterion_7() -> Outcome {
    let spec = ExampleSpec::new(5).unwrap();
    let success = verify_ah_success(&spec).unwrap();
    let mut tails_ok = success.entries.len() == 4;
    for (e, m) in success.entries.iter().zip(1u32..) {
        let bound = q(2 * i64::from(m)) / pow2(m) + pow2(m + 1) / pow2(k_n(m + 1));
        tails_ok &= e.m == m && e.bound == bound && e.tail <= bound;
    }
    let fam = build_example_hfamily(&spec).unwrap();
    let fr = check_family(&fam).unwrap();
    let c_max = fr.c_min.iter().map(|c| c.clone().expect("finite")).max().unwrap();
    let family_ok = fr.ok() && c_max.is_one() && fr.h3_eps0.is_one();

    let psi = example_psi(&spec).unwrap();
    let g = spec.grid().unwrap();
    let tol = Tolerances::default();
    let mut recoveries = Vec::new();
    let mut rec_ok = true;
    for bx in [Cell::uniform(&g, 0, vec![0]).unwrap(), Cell::uniform(&g, 1, vec![0]).unwrap()] {
        let rep = recover_additive(&psi, &fam, &bx, &tol).unwrap();
        rec_ok &= rep.matched;
        recoveries.push(json!({"box": bx.to_string(), "final_error": number(rep.final_error), "matched": rep.matched}));
    }
    Outcome {
        id: 7,
        pass: tails_ok && family_ok && rec_ok,
        detail: format!("tails {tails_ok}, C = {c_max}, eps0 = {}, recovery {rec_ok}", fr.h3_eps0),
        report: json!({
            "success": success.to_json(),
            "c": frac_value(&c_max),
            "eps0": frac_value(&fr.h3_eps0),
            "recoveries": recoveries,
        }),
    }
}

/// Twenty step functions on the dyadic grid of depth 8 and whether each is
/// integrable along `λ_m = 2^m`, `m <= 12`.
fn hand_built() -> Vec<(&'static str, StepFunction<Complex64>, bool)> {
    let g = Arc::new(GridConfig::uniform(2, 8, 1).unwrap());
    let cell = |k: u32, i: u64| Cell::uniform(&g, k, vec![i]).unwrap();
    // zero off the listed cells
    let pieces = |v: Vec<(Cell, Complex64)>| {
        StepFunction::from_uniform(g.clone(), 8, |idx| {
            let here = Cell::uniform(&g, 8, idx.to_vec()).unwrap();
            v.iter().find(|(c, _)| c.contains(&g, &here)).map_or(c(0.0), |(_, z)| *z)
        })
        .unwrap()
        .compact()
    };
    let uni = |f: &(dyn Fn(u64) -> Complex64 + Sync)| StepFunction::from_uniform(g.clone(), 8, |idx| f(idx[0])).unwrap();
    let mut out = vec![
        ("constant", StepFunction::constant(g.clone(), c(3.0)), true),
        ("complex constant", StepFunction::constant(g.clone(), Complex64::new(1.0, -2.0)), true),
        ("zero", StepFunction::constant(g.clone(), c(0.0)), true),
        ("sign", pieces(vec![(cell(1, 0), c(1.0)), (cell(1, 1), c(-1.0))]), true),
        ("ramp", uni(&|i| c(i as f64 / 256.0)), true),
        ("complex ramp", uni(&|i| Complex64::new(-(i as f64), i as f64 / 2.0)), true),
        ("dyadic blowup", uni(&|i| c(256.0 / (i + 1).next_power_of_two() as f64)), true),
        ("spike 2^40", pieces(vec![(cell(8, 0), c(2f64.powi(40))), (cell(8, 1), c(1.0))]), false),
        ("spike 2^20", pieces(vec![(cell(8, 17), Complex64::new(0.0, 2f64.powi(20)))]), false),
        ("tie at 2^5", pieces(vec![(cell(1, 1), c(32.0))]), true),
        ("wide spike", pieces(vec![(cell(3, 5), c(-5000.0))]), false),
    ];
    let mut r = rng(8);
    while out.len() < 20 {
        let cells = random_partition(&g, 0.6, &mut r);
        let v = cells
            .into_iter()
            .map(|c| (c, Complex64::new(50.0 * dyadic(&mut r), 50.0 * dyadic(&mut r))))
            .collect();
        out.push(("random", pieces(v), true));
    }
    out
}

fn criterion_8() -> Outcome {
    let lambdas: Vec<Frac> = (1..=12).map(pow2).collect();
    let opts = AhOptions::default();
    let policy = TruncationPolicy::default();
    let mut pass = true;
    let mut failing_clause = 0;
    let mut rows = Vec::new();
    for (name, f, expect) in hand_built() {
        let g = f.grid().clone();
        let unit = Cell::unit(&g);
        let fam = HFamily::constants(g, &lambdas).unwrap();
        let ah = ah_integral(&f, &fam, &unit, &opts).unwrap();
        let a = a_integral(&f, &lambdas, &unit, opts.tol, &policy).unwrap();
        let value_ok = !expect || (ah.final_value - f.integral()).norm() <= 1e-9;
        let ok = ah.values == a.values && ah.integrable == a.integrable && a.integrable == expect && value_ok;
        failing_clause += usize::from(!a.clause_ok);
        pass &= ok;
        rows.push(json!({
            "name": name,
            "ah_integrable": ah.integrable,
            "a_integrable": a.integrable,
            "clause_ok": a.clause_ok,
            "final_value": complex_value(ah.final_value),
            "ok": ok,
        }));
    }
    Outcome {
        id: 8,
        pass: pass && failing_clause >= 1,
        detail: format!("{} functions, {failing_clause} with a failing clause", rows.len()),
        report: json!({"functions": rows}),
    }
}

fn run_all() -> Vec<Outcome> {
    vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
    ]
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn main() -> ExitCode {
    let wide = pool(4).install(run_all);
    let mut all = true;
    for o in &wide {
        all &= o.pass;
        println!("criterion {}: {} ({})", o.id, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let narrow = pool(1).install(run_all);
    let differing: Vec<u32> = wide
        .iter()
        .zip(&narrow)
        .filter(|(a, b)| serde_json::to_string(&a.report).unwrap() != serde_json::to_string(&b.report).unwrap())
        .map(|(a, _)| a.id)
        .collect();
    let same = differing.is_empty();
    all &= same;
    println!(
        "criterion 9: {} (reports 1-8 byte-identical across 1 and 4 threads{})",
        if same { "PASS" } else { "FAIL" },
        if same { String::new() } else { format!(", differing: {differing:?}") }
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
