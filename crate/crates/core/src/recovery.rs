//! Recovery of additive functions and series coefficients through truncated
//! integrals, with the hypotheses they rest on reported alongside.

use std::sync::Arc;

use num_complex::Complex64;
use num_traits::Zero;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::ah::{check_family, tail_integral, truncate, truncate_scaled, FamilyReport, HFamily, TruncationPolicy};
use crate::error::{Error, Result};
use crate::grid::{Cell, GridConfig};
use crate::json::{complex_value, frac_value, number};
use crate::reduce::pairwise_sum;
use crate::series::{block_range_multi, derivative, majorant, psi_eval, AdditiveFn};
use crate::step::StepFunction;
use crate::systems::{gamma_or_identity, haar_sup_norm_sq, inner_product, tensor_haar_step, MultiIndex};
use crate::Frac;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub coefficient: f64,
    pub additive: f64,
    pub condition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            coefficient: 1e-8,
            additive: 1e-9,
            condition: 1e-9,
        }
    }
}

impl Tolerances {
    /// The same tolerance for every check.
    pub fn uniform(tol: f64) -> Self {
        Tolerances {
            coefficient: tol,
            additive: tol,
            condition: tol,
        }
    }
}

/// Number of trailing entries forming the "final window": a third of the
/// sequence, rounded up.
pub fn final_window(len: usize) -> usize {
    len.div_ceil(3)
}

fn nonincreasing_f64(xs: &[f64], slack: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + slack)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    /// `∫_{region ∩ {Ψ* > h_m}} h_m` per member.
    pub tails: Vec<Frac>,
    pub tol: f64,
    pub last_ok: bool,
    /// Heuristic: tails do not increase over the final window.
    pub window_nonincreasing: bool,
    pub pass: bool,
}

impl ConditionReport {
    pub fn to_json(&self) -> Value {
        json!({
            "tails": self.tails.iter().map(frac_value).collect::<Vec<_>>(),
            "tol": number(self.tol),
            "last_ok": self.last_ok,
            "window_nonincreasing": self.window_nonincreasing,
            "pass": self.pass,
        })
    }
}

/// Tails of the majorant above each member, over `region` (the whole cube when
/// `None`).
pub fn condition_check(psi: &AdditiveFn, fam: &HFamily, region: Option<&Cell>, tol: f64) -> Result<ConditionReport> {
    let star = majorant(psi);
    let tails: Vec<Frac> = fam
        .members()
        .par_iter()
        .map(|m| tail_integral(&star, m.step(), region))
        .collect::<Result<_>>()?;
    let last_ok = tails.last().is_some_and(|t| *t <= crate::f64_to_frac(tol));
    let w = &tails[tails.len() - final_window(tails.len())..];
    let window_nonincreasing = w.windows(2).all(|p| p[1] <= p[0]);
    Ok(ConditionReport {
        pass: last_ok && window_nonincreasing,
        tails,
        tol,
        last_ok,
        window_nonincreasing,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaReport {
    pub lambdas: Vec<Frac>,
    /// `λ · μ{x ∈ region : Ψ*(x) > λ}`.
    pub values: Vec<Frac>,
}

impl LambdaReport {
    pub fn to_json(&self) -> Value {
        json!({
            "lambdas": self.lambdas.iter().map(frac_value).collect::<Vec<_>>(),
            "values": self.values.iter().map(frac_value).collect::<Vec<_>>(),
        })
    }
}

/// `λ · μ{Ψ* > λ}` for each level, restricted to `region` when given.
pub fn lambda_condition_check(psi: &AdditiveFn, lambdas: &[Frac], region: Option<&Cell>) -> Result<LambdaReport> {
    let star = majorant(psi);
    let values = lambdas
        .par_iter()
        .map(|l| {
            let above = star.map(|v| if v > l { Frac::from_integer(1.into()) } else { Frac::zero() });
            let mu = match region {
                Some(c) => above.integral_over_exact(c)?,
                None => above.integral_exact(),
            };
            Ok(l * mu)
        })
        .collect::<Result<_>>()?;
    Ok(LambdaReport {
        lambdas: lambdas.to_vec(),
        values,
    })
}

/// Per-member estimates of one target value with the verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub kind: &'static str,
    pub target: String,
    pub estimates: Vec<Complex64>,
    /// The value recovery should reproduce, computed directly.
    pub reference: Complex64,
    pub errors: Vec<f64>,
    pub tol: f64,
    pub final_error: f64,
    pub matched: bool,
    /// Errors do not increase over the final window.
    pub window_monotone: bool,
    /// `‖χ_n̄‖²_∞` when the family was scaled by the sup-norm.
    pub scale_sq: Option<u64>,
    pub family: FamilyReport,
    pub condition: ConditionReport,
    pub hypotheses_ok: bool,
    /// Price coefficient assembled from recovered Haar coefficients.
    pub gamma_path: Option<Complex64>,
    pub gamma_path_error: Option<f64>,
}

impl RecoveryReport {
    pub fn verdict(&self) -> bool {
        let gamma_ok = self.gamma_path_error.is_none_or(|e| e <= self.tol);
        self.matched && self.window_monotone && gamma_ok
    }

    pub fn require_hypotheses(&self) -> Result<()> {
        if self.hypotheses_ok {
            return Ok(());
        }
        let mut why = Vec::new();
        if !self.family.ok() {
            why.push("family conditions (h1)-(h3)");
        }
        if !self.condition.pass {
            why.push("tail condition on the majorant");
        }
        Err(Error::Hypothesis(why.join(", ")))
    }

    pub fn to_json(&self) -> Value {
        json!({
            "kind": self.kind,
            "target": self.target,
            "estimates": self.estimates.iter().map(|z| complex_value(*z)).collect::<Vec<_>>(),
            "reference": complex_value(self.reference),
            "errors": self.errors.iter().map(|e| number(*e)).collect::<Vec<_>>(),
            "tol": number(self.tol),
            "final_error": number(self.final_error),
            "matched": self.matched,
            "window_monotone": self.window_monotone,
            "scale_sq": self.scale_sq,
            "family": self.family.to_json(),
            "condition": self.condition.to_json(),
            "hypotheses_ok": self.hypotheses_ok,
            "gamma_path": self.gamma_path.map(complex_value),
            "gamma_path_error": self.gamma_path_error.map(number),
            "verdict": self.verdict(),
        })
    }
}

struct Assembled {
    kind: &'static str,
    target: String,
    estimates: Vec<Complex64>,
    reference: Complex64,
    tol: f64,
    scale_sq: Option<u64>,
    family: FamilyReport,
    condition: ConditionReport,
}

fn assemble(a: Assembled) -> RecoveryReport {
    let errors: Vec<f64> = a.estimates.iter().map(|e| (e - a.reference).norm()).collect();
    let final_error = *errors.last().expect("nonempty family");
    let slack = 1e-12 * a.reference.norm().max(1.0);
    let window = &errors[errors.len() - final_window(errors.len())..];
    let hypotheses_ok = a.family.ok() && a.condition.pass;
    RecoveryReport {
        kind: a.kind,
        target: a.target,
        estimates: a.estimates,
        reference: a.reference,
        matched: final_error <= a.tol,
        window_monotone: nonincreasing_f64(window, slack),
        errors,
        tol: a.tol,
        final_error,
        scale_sq: a.scale_sq,
        family: a.family,
        condition: a.condition,
        hypotheses_ok,
        gamma_path: None,
        gamma_path_error: None,
    }
}

/// `e_m = ∫_box [Ψ′]_{h_m}` compared against `Ψ(box)`.
pub fn recover_additive(psi: &AdditiveFn, fam: &HFamily, bx: &Cell, tol: &Tolerances) -> Result<RecoveryReport> {
    same_grid(psi.grid(), fam)?;
    let d = derivative(psi);
    let policy = TruncationPolicy::default();
    let estimates: Vec<Complex64> = fam
        .members()
        .par_iter()
        .map(|m| truncate(&d, m.step(), &policy)?.integral_over(bx))
        .collect::<Result<_>>()?;
    Ok(assemble(Assembled {
        kind: "additive",
        target: bx.to_string(),
        estimates,
        reference: psi_eval(psi, bx)?,
        tol: tol.additive,
        scale_sq: None,
        family: check_family(fam)?,
        condition: condition_check(psi, fam, None, tol.condition)?,
    }))
}

fn same_grid(grid: &Arc<GridConfig>, fam: &HFamily) -> Result<()> {
    if **grid != **fam.grid() {
        return Err(Error::ConfigMismatch);
    }
    Ok(())
}

fn haar_estimates(
    f: &StepFunction<Complex64>,
    chi: &StepFunction<Complex64>,
    fam: &HFamily,
    scale_sq: u64,
) -> Result<Vec<Complex64>> {
    let g = f.zip_with(chi, |a, b| a * b.conj())?;
    let policy = TruncationPolicy::default();
    fam.members()
        .par_iter()
        .map(|m| Ok(truncate_scaled(&g, m.step(), scale_sq, &policy)?.integral()))
        .collect()
}

/// `a_n̄` from `∫ [f χ̄_n̄]_{‖χ_n̄‖_∞ h_m}`, compared against `⟨f, χ_n̄⟩`.
pub fn recover_haar_coeff(
    f: &StepFunction<Complex64>,
    n: &MultiIndex,
    fam: &HFamily,
    tol: &Tolerances,
) -> Result<RecoveryReport> {
    same_grid(f.grid(), fam)?;
    let grid = f.grid();
    let chi = tensor_haar_step(grid, n)?;
    let scale_sq = haar_sup_norm_sq(grid, n)?;
    let psi = AdditiveFn::from_density(f.clone());
    Ok(assemble(Assembled {
        kind: "haar",
        target: n.to_string(),
        estimates: haar_estimates(f, &chi, fam, scale_sq)?,
        reference: inner_product(f, &chi)?,
        tol: tol.coefficient,
        scale_sq: Some(scale_sq),
        family: check_family(fam)?,
        condition: condition_check(&psi, fam, None, tol.condition)?,
    }))
}

/// `b_n̄` from `∫ [f ψ̄_n̄]_{h_m}`, compared against `⟨f, ψ_n̄⟩`, plus the value
/// assembled from recovered Haar coefficients of the same block.
pub fn recover_price_coeff(
    f: &StepFunction<Complex64>,
    n: &MultiIndex,
    fam: &HFamily,
    tol: &Tolerances,
) -> Result<RecoveryReport> {
    same_grid(f.grid(), fam)?;
    let grid = f.grid().clone();
    let psi_n = crate::systems::tensor_price_step(&grid, n)?;
    let g = f.zip_with(&psi_n, |a, b| a * b.conj())?;
    let policy = TruncationPolicy::default();
    let estimates: Vec<Complex64> = fam
        .members()
        .par_iter()
        .map(|m| Ok(truncate(&g, m.step(), &policy)?.integral()))
        .collect::<Result<_>>()?;
    let psi = AdditiveFn::from_density(f.clone());
    let family = check_family(fam)?;
    let mut report = assemble(Assembled {
        kind: "price",
        target: n.to_string(),
        estimates,
        reference: inner_product(f, &psi_n)?,
        tol: tol.coefficient,
        scale_sq: None,
        family,
        condition: condition_check(&psi, fam, None, tol.condition)?,
    });

    // b_p̄ = Σ_l̄ conj(γ^{l̄}_{p̄}) a_l̄ over the tensor block of p̄
    let (blocks, haar_indices) = block_range_multi(&grid, n);
    let gammas = (0..grid.dims())
        .map(|j| gamma_or_identity(grid.seq(j), blocks[j]))
        .collect::<Result<Vec<_>>>()?;
    let terms: Vec<Complex64> = haar_indices
        .par_iter()
        .map(|l| {
            let chi = tensor_haar_step(&grid, l)?;
            let a = *haar_estimates(f, &chi, fam, haar_sup_norm_sq(&grid, l)?)?
                .last()
                .expect("nonempty family");
            let gamma = (0..grid.dims()).fold(Complex64::new(1.0, 0.0), |acc, j| {
                let off = gammas[j].offset;
                acc * gammas[j].entries[(n.0[j] - off) as usize][(l.0[j] - off) as usize].conj()
            });
            Ok(gamma * a)
        })
        .collect::<Result<_>>()?;
    let b = pairwise_sum(&terms);
    report.gamma_path_error = Some((b - report.reference).norm());
    report.gamma_path = Some(b);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{additive_fn, partial_sum, CoeffMap};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn final_window_sizes() {
        assert_eq!(final_window(1), 1);
        assert_eq!(final_window(3), 1);
        assert_eq!(final_window(4), 2);
        assert_eq!(final_window(9), 3);
    }

    #[test]
    fn zero_series_recovers_zero() {
        let g = Arc::new(GridConfig::uniform(2, 3, 1).unwrap());
        let psi = additive_fn(&CoeffMap::haar(g.clone())).unwrap();
        let fam = HFamily::powers_of_two(g.clone(), 4).unwrap();
        let r = recover_additive(&psi, &fam, &Cell::uniform(&g, 2, vec![1]).unwrap(), &Tolerances::default()).unwrap();
        assert!(r.estimates.iter().all(|e| *e == c(0.0)));
        assert!(r.verdict() && r.hypotheses_ok);
        let l = lambda_condition_check(&psi, &[Frac::from_integer(2.into())], None).unwrap();
        assert_eq!(l.values, vec![Frac::zero()]);
    }

    #[test]
    fn constant_coefficient_recovered() {
        let g = Arc::new(GridConfig::uniform(3, 2, 1).unwrap());
        let f = StepFunction::constant(g.clone(), c(2.5));
        let fam = HFamily::powers_of_two(g, 4).unwrap();
        let tol = Tolerances::default();
        let h = recover_haar_coeff(&f, &MultiIndex::zero(1), &fam, &tol).unwrap();
        assert_eq!(h.reference, c(2.5));
        assert_eq!(h.estimates[0], c(0.0));
        assert_eq!(*h.estimates.last().unwrap(), c(2.5));
        assert!(h.verdict());
        let p = recover_price_coeff(&f, &MultiIndex::zero(1), &fam, &tol).unwrap();
        assert!(p.verdict());
        assert_eq!(p.gamma_path, Some(c(2.5)));
    }

    #[test]
    fn planted_haar_coefficient_in_two_dims() {
        let g = Arc::new(GridConfig::new(vec![vec![2, 2], vec![3, 3]]).unwrap());
        let mut m = CoeffMap::haar(g.clone());
        m.insert(MultiIndex::new(vec![2, 5]), Complex64::new(0.75, -1.25)).unwrap();
        let f = partial_sum(&m, 2).unwrap();
        let fam = HFamily::powers_of_two(g, 6).unwrap();
        let r = recover_haar_coeff(&f, &MultiIndex::new(vec![2, 5]), &fam, &Tolerances::default()).unwrap();
        assert!(r.verdict(), "{:?}", r.errors);
        assert_eq!(r.scale_sq, Some(6));
        assert!((r.estimates.last().unwrap() - Complex64::new(0.75, -1.25)).norm() < 1e-8);
    }

    #[test]
    fn hypothesis_flag_without_error() {
        let g = Arc::new(GridConfig::uniform(2, 3, 1).unwrap());
        let mut m = CoeffMap::haar(g.clone());
        m.insert(MultiIndex::new(vec![7]), c(3.0)).unwrap();
        let psi = additive_fn(&m).unwrap();
        // the majorant reaches 6 but the family stops at 2
        let fam = HFamily::powers_of_two(g.clone(), 1).unwrap();
        let r = recover_additive(&psi, &fam, &Cell::unit(&g), &Tolerances::default()).unwrap();
        assert!(!r.hypotheses_ok);
        assert!(matches!(r.require_hypotheses(), Err(Error::Hypothesis(_))));
    }
}
