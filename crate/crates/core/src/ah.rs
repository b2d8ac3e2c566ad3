//! Truncation, A- and AH-integrals, majorizing families and their conditions.

use std::sync::Arc;

use num_complex::Complex64;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridConfig};
use crate::json::{complex_value, frac_value, number, CellJson, FamilyJson, MemberJson, PieceJson};
use crate::step::StepFunction;
use crate::{f64_to_frac, frac_to_f64, Frac};

/// How `|f| <= h` is decided for floating-point `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationPolicy {
    /// Values with `|f|² <= h²·(1 + rel_guard)` are kept.
    pub rel_guard: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { rel_guard: 1e-12 }
    }
}

/// `|z|²` as an exact rational.
pub(crate) fn norm_sq(z: Complex64) -> Frac {
    let re = f64_to_frac(z.re);
    let im = f64_to_frac(z.im);
    &re * &re + &im * &im
}

/// A factor `s` applied to `h²`, with its nearest float.
struct Scale {
    exact: Frac,
    approx: f64,
}

impl Scale {
    fn new(exact: Frac) -> Self {
        Scale {
            approx: frac_to_f64(&exact),
            exact,
        }
    }
}

/// Three-way comparison of `|z|²` against `s · h²`.
fn compare(z: Complex64, h: &Frac, scale: &Scale) -> std::cmp::Ordering {
    let n2 = z.re * z.re + z.im * z.im;
    let hf = frac_to_f64(h);
    let t = hf * hf * scale.approx;
    if t.is_finite() && n2.is_finite() && t > 0.0 {
        if n2 < t * (1.0 - 1e-9) {
            return std::cmp::Ordering::Less;
        }
        if n2 > t * (1.0 + 1e-9) {
            return std::cmp::Ordering::Greater;
        }
    }
    norm_sq(z).cmp(&(h * h * &scale.exact))
}

impl TruncationPolicy {
    /// `scale_sq` widened by the guard.
    fn widened(&self, scale_sq: u64) -> Scale {
        Scale::new(Frac::from_integer(scale_sq.into()) * (Frac::one() + f64_to_frac(self.rel_guard)))
    }
}

/// `[f]_h`: `f` where `|f| <= h`, zero elsewhere.
pub fn truncate(
    f: &StepFunction<Complex64>,
    h: &StepFunction<Frac>,
    policy: &TruncationPolicy,
) -> Result<StepFunction<Complex64>> {
    truncate_scaled(f, h, 1, policy)
}

/// `[f]_{√scale_sq · h}`.
pub fn truncate_scaled(
    f: &StepFunction<Complex64>,
    h: &StepFunction<Frac>,
    scale_sq: u64,
    policy: &TruncationPolicy,
) -> Result<StepFunction<Complex64>> {
    let s = policy.widened(scale_sq);
    f.zip_with(h, |z, hv| if compare(*z, hv, &s).is_gt() { Complex64::zero() } else { *z })
}

/// `∫_box f`.
pub fn integral(f: &StepFunction<Complex64>, bx: &Cell) -> Result<Complex64> {
    f.integral_over(bx)
}

fn exact_integral(f: &StepFunction<Frac>, region: Option<&Cell>) -> Result<Frac> {
    match region {
        Some(c) => f.integral_over_exact(c),
        None => Ok(f.integral_exact()),
    }
}

/// `∫_{region ∩ {g > h}} h`, exactly.
pub fn tail_integral(g: &StepFunction<Frac>, h: &StepFunction<Frac>, region: Option<&Cell>) -> Result<Frac> {
    let masked = g.zip_with(h, |gv, hv| if gv > hv { hv.clone() } else { Frac::zero() })?;
    exact_integral(&masked, region)
}

/// One member `h_m` with its partition `{I^m_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HMember {
    step: StepFunction<Frac>,
    partition: Vec<Cell>,
}

fn check_tiling(grid: &Arc<GridConfig>, cells: &[Cell]) -> Result<()> {
    StepFunction::from_pieces(grid.clone(), cells.iter().map(|c| (c.clone(), ())).collect()).map(|_| ())
}

impl HMember {
    /// From uniform-rank pieces tiling the cube. Without an explicit partition
    /// the pieces themselves are used.
    pub fn from_pieces(grid: Arc<GridConfig>, pieces: Vec<(Cell, Frac)>, partition: Option<Vec<Cell>>) -> Result<Self> {
        let cells: Vec<Cell> = pieces.iter().map(|(c, _)| c.clone()).collect();
        let step = StepFunction::from_pieces(grid, pieces)?;
        Self::from_step(step, Some(partition.unwrap_or(cells)))
    }

    pub fn from_step(step: StepFunction<Frac>, partition: Option<Vec<Cell>>) -> Result<Self> {
        if let Some(neg) = step.leaves().into_iter().find(|(_, v)| *v < Frac::zero()) {
            return Err(Error::Negative(format!("h = {} on {}", neg.1, neg.0)));
        }
        let partition = match partition {
            Some(p) => p,
            None => step.leaves().into_iter().map(|(c, _)| c).collect(),
        };
        check_tiling(step.grid(), &partition)?;
        Ok(HMember { step, partition })
    }

    pub fn constant(grid: Arc<GridConfig>, value: Frac) -> Result<Self> {
        Self::from_step(StepFunction::constant(grid, value), None)
    }

    pub fn step(&self) -> &StepFunction<Frac> {
        &self.step
    }

    pub fn partition(&self) -> &[Cell] {
        &self.partition
    }

    pub fn scaled(&self, a: &Frac) -> HMember {
        HMember {
            step: self.step.map(|v| v * a),
            partition: self.partition.clone(),
        }
    }
}

/// A nondecreasing family `h_1 <= h_2 <= ...` with declared constant `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct HFamily {
    grid: Arc<GridConfig>,
    members: Vec<HMember>,
    constant_c: Frac,
}

impl HFamily {
    pub fn new(grid: Arc<GridConfig>, members: Vec<HMember>, constant_c: Frac) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyFamily);
        }
        if constant_c < Frac::one() {
            return Err(Error::InvalidFamily(format!("C = {constant_c} is below 1")));
        }
        if members.iter().any(|m| **m.step.grid() != *grid) {
            return Err(Error::ConfigMismatch);
        }
        Ok(HFamily {
            grid,
            members,
            constant_c,
        })
    }

    /// `h_m ≡ λ_m` on the trivial partition, `C = 1`.
    pub fn constants(grid: Arc<GridConfig>, lambdas: &[Frac]) -> Result<Self> {
        let members = lambdas
            .iter()
            .map(|l| HMember::constant(grid.clone(), l.clone()))
            .collect::<Result<_>>()?;
        Self::new(grid, members, Frac::one())
    }

    /// `λ_m = 2^m` for `m = 1..=count`.
    pub fn powers_of_two(grid: Arc<GridConfig>, count: u32) -> Result<Self> {
        let lambdas: Vec<Frac> = (1..=count).map(|m| Frac::from_integer(num_bigint::BigInt::from(1) << m)).collect();
        Self::constants(grid, &lambdas)
    }

    pub fn grid(&self) -> &Arc<GridConfig> {
        &self.grid
    }

    pub fn members(&self) -> &[HMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn constant_c(&self) -> &Frac {
        &self.constant_c
    }

    pub fn to_json(&self) -> String {
        let members = self
            .members
            .iter()
            .map(|m| {
                let pieces = m
                    .step
                    .leaves()
                    .into_iter()
                    .map(|(c, v)| PieceJson {
                        rank: c.ranks()[0],
                        index: c.index().to_vec(),
                        value: v,
                    })
                    .collect();
                let leaf_cells: Vec<Cell> = m.step.leaves().into_iter().map(|(c, _)| c).collect();
                let partition = (leaf_cells != m.partition).then(|| {
                    m.partition
                        .iter()
                        .map(|c| CellJson {
                            rank: c.ranks()[0],
                            index: c.index().to_vec(),
                        })
                        .collect()
                });
                MemberJson { pieces, partition }
            })
            .collect();
        let doc = FamilyJson {
            grid: (*self.grid).clone(),
            constant_c: self.constant_c.clone(),
            members,
        };
        serde_json::to_string_pretty(&doc).expect("json")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FamilyJson = serde_json::from_str(text).map_err(|e| Error::Parse(format!("family file: {e}")))?;
        let grid = Arc::new(doc.grid);
        let mut members = Vec::with_capacity(doc.members.len());
        for (m, mj) in doc.members.into_iter().enumerate() {
            let ctx = |e: Error| Error::Parse(format!("members[{m}]: {e}"));
            let pieces = mj
                .pieces
                .into_iter()
                .map(|p| Ok((Cell::uniform(&grid, p.rank, p.index)?, p.value)))
                .collect::<Result<Vec<_>>>()
                .map_err(ctx)?;
            let partition = match mj.partition {
                Some(cells) => Some(cells.iter().map(|c| c.to_cell(&grid)).collect::<Result<Vec<_>>>().map_err(ctx)?),
                None => None,
            };
            members.push(HMember::from_pieces(grid.clone(), pieces, partition).map_err(ctx)?);
        }
        Self::new(grid, members, doc.constant_c)
    }
}

/// Inf and sup of `h` over a cell.
fn extremes(h: &StepFunction<Frac>, cell: &Cell) -> (Frac, Frac) {
    h.fold_within(
        cell,
        |v, _, _| (v.clone(), v.clone()),
        |parts| {
            parts
                .into_iter()
                .reduce(|(lo, hi), (a, b)| (if a < lo { a } else { lo }, if b > hi { b } else { hi }))
                .expect("a split meeting the cell has a child meeting it")
        },
    )
    .expect("a cell meets at least one leaf")
}

/// Verdicts on (h1), (h2), (h3) and the derived constants.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyReport {
    pub h1_ok: bool,
    /// First `m` (1-based) with `h_m > h_{m+1}` somewhere.
    pub h1_first_violation: Option<usize>,
    /// Least valid `C` per member; `None` when some cell has inf 0 and sup > 0.
    pub c_min: Vec<Option<Frac>>,
    pub declared_c: Frac,
    pub h2_ok: bool,
    /// `inf_{m,k} ∫_{I^m_k} h_m`.
    pub h3_eps0: Frac,
    pub h3_ok: bool,
    /// `λ^m_k = inf_{I^m_k} h_m`, per member and partition cell.
    pub lambdas: Vec<Vec<Frac>>,
    /// `inf_{m,k} λ^m_k μ(I^m_k)`.
    pub eps0_lambda: Frac,
}

impl FamilyReport {
    pub fn ok(&self) -> bool {
        self.h1_ok && self.h2_ok && self.h3_ok
    }

    pub fn to_json(&self) -> Value {
        json!({
            "h1_ok": self.h1_ok,
            "h1_first_violation": self.h1_first_violation,
            "c_min": self.c_min.iter().map(|c| c.as_ref().map_or(Value::Null, frac_value)).collect::<Vec<_>>(),
            "declared_c": frac_value(&self.declared_c),
            "h2_ok": self.h2_ok,
            "h3_eps0": frac_value(&self.h3_eps0),
            "h3_ok": self.h3_ok,
            "lambdas": self.lambdas.iter().map(|row| row.iter().map(frac_value).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "eps0_lambda": frac_value(&self.eps0_lambda),
        })
    }
}

pub fn check_family(fam: &HFamily) -> Result<FamilyReport> {
    if fam.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let grid = fam.grid();
    let mut h1_first_violation = None;
    for (m, pair) in fam.members.windows(2).enumerate() {
        let ok = pair[0]
            .step
            .zip_with(&pair[1].step, |a, b| a <= b)?
            .fold(|v, _, _| *v, |p| p.into_iter().all(|x| x));
        if !ok {
            h1_first_violation = Some(m + 1);
            break;
        }
    }
    struct PerMember {
        c_min: Option<Frac>,
        lambdas: Vec<Frac>,
        integrals: Vec<Frac>,
        lambda_mu: Vec<Frac>,
    }
    let per: Vec<PerMember> = fam
        .members
        .par_iter()
        .map(|member| {
            let mut c_min = Some(Frac::one());
            let mut lambdas = Vec::new();
            let mut integrals = Vec::new();
            let mut lambda_mu = Vec::new();
            for cell in &member.partition {
                let (lo, hi) = extremes(&member.step, cell);
                let ratio = if lo.is_zero() {
                    if hi.is_zero() {
                        Some(Frac::one())
                    } else {
                        None
                    }
                } else {
                    Some(&hi / &lo)
                };
                c_min = match (c_min, ratio) {
                    (Some(a), Some(b)) => Some(if b > a { b } else { a }),
                    _ => None,
                };
                integrals.push(member.step.integral_over_exact(cell).expect("cell within depth"));
                lambda_mu.push(&lo * cell.measure(grid));
                lambdas.push(lo);
            }
            PerMember {
                c_min,
                lambdas,
                integrals,
                lambda_mu,
            }
        })
        .collect();
    let min_of = |it: &mut dyn Iterator<Item = &Frac>| it.min().cloned().unwrap_or_else(Frac::zero);
    let h3_eps0 = min_of(&mut per.iter().flat_map(|p| p.integrals.iter()));
    let eps0_lambda = min_of(&mut per.iter().flat_map(|p| p.lambda_mu.iter()));
    let h2_ok = per
        .iter()
        .all(|p| p.c_min.as_ref().is_some_and(|c| c <= &fam.constant_c));
    Ok(FamilyReport {
        h1_ok: h1_first_violation.is_none(),
        h1_first_violation,
        declared_c: fam.constant_c.clone(),
        h2_ok,
        h3_ok: h3_eps0 > Frac::zero(),
        h3_eps0,
        c_min: per.iter().map(|p| p.c_min.clone()).collect(),
        lambdas: per.into_iter().map(|p| p.lambdas).collect(),
        eps0_lambda,
    })
}

/// Smallest 1-based `m₀` such that all values from `m₀` on lie within `tol` of
/// each other. Needs at least two values in the window.
pub(crate) fn settle_index(values: &[Complex64], tol: f64) -> Option<usize> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mut best = None;
    for start in (0..n - 1).rev() {
        let window = &values[start..];
        let spread = window
            .iter()
            .flat_map(|a| window.iter().map(move |b| (a - b).norm()))
            .fold(0.0, f64::max);
        if spread <= tol {
            best = Some(start + 1);
        } else {
            break;
        }
    }
    best
}

/// Settings for [`ah_integral`].
#[derive(Debug, Clone, PartialEq)]
pub struct AhOptions {
    pub tol: f64,
    /// The finite grid of `α` on which the admissibility clause is checked.
    pub alphas: Vec<Frac>,
    pub policy: TruncationPolicy,
}

impl Default for AhOptions {
    fn default() -> Self {
        AhOptions {
            tol: 1e-9,
            alphas: vec![
                Frac::new(1.into(), 2.into()),
                Frac::one(),
                Frac::from_integer(2.into()),
            ],
            policy: TruncationPolicy::default(),
        }
    }
}

/// Admissibility tails `∫_{|f| >= α h_m} h_m` for one `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTail {
    pub alpha: Frac,
    pub tails: Vec<Frac>,
    /// Leaves with `|f| = α h_m` exactly, per member.
    pub ties: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AhReport {
    /// `v_m = ∫_box [f]_{h_m}`.
    pub values: Vec<Complex64>,
    pub tol: f64,
    pub m0: Option<usize>,
    pub converged: bool,
    pub alpha_tails: Vec<AlphaTail>,
    /// Every `α` tail is within `tol` at the last member.
    pub admissible: bool,
    pub integrable: bool,
    pub final_value: Complex64,
}

impl AhReport {
    pub fn to_json(&self) -> Value {
        json!({
            "values": self.values.iter().map(|z| complex_value(*z)).collect::<Vec<_>>(),
            "tol": number(self.tol),
            "m0": self.m0,
            "converged": self.converged,
            "alpha_grid": self.alpha_tails.iter().map(|a| json!({
                "alpha": frac_value(&a.alpha),
                "tails": a.tails.iter().map(frac_value).collect::<Vec<_>>(),
                "ties": a.ties,
            })).collect::<Vec<_>>(),
            "admissible": self.admissible,
            "integrable": self.integrable,
            "final_value": complex_value(self.final_value),
        })
    }
}

fn within_tol(v: &Frac, tol: f64) -> bool {
    *v <= f64_to_frac(tol)
}

/// Truncated integrals `∫_box [f]_{h_m}` for every member, with the
/// admissibility clause checked on `opts.alphas`.
pub fn ah_integral(f: &StepFunction<Complex64>, fam: &HFamily, bx: &Cell, opts: &AhOptions) -> Result<AhReport> {
    let values: Vec<Complex64> = fam
        .members
        .par_iter()
        .map(|m| truncate(f, &m.step, &opts.policy)?.integral_over(bx))
        .collect::<Result<_>>()?;
    let alpha_tails: Vec<AlphaTail> = opts
        .alphas
        .iter()
        .map(|alpha| {
            let per: Vec<(Frac, u64)> = fam
                .members
                .par_iter()
                .map(|m| {
                    let a2 = Scale::new(alpha * alpha);
                    let cmp = f.zip_with(&m.step, |z, h| (compare(*z, h, &a2), h.clone()))?;
                    let masked = cmp.map(|(o, h)| if o.is_ge() { h.clone() } else { Frac::zero() });
                    let grid = cmp.grid().clone();
                    let ties = cmp.fold(
                        |(o, _), r, idx| {
                            let leaf = Cell::uniform_unchecked(r, idx.to_vec());
                            u64::from(o.is_eq() && leaf.overlaps(&grid, bx))
                        },
                        |p| p.into_iter().sum(),
                    );
                    Ok((masked.integral_over_exact(bx)?, ties))
                })
                .collect::<Result<_>>()?;
            let (tails, ties) = per.into_iter().unzip();
            Ok(AlphaTail {
                alpha: alpha.clone(),
                tails,
                ties,
            })
        })
        .collect::<Result<_>>()?;
    let m0 = settle_index(&values, opts.tol);
    let admissible = alpha_tails
        .iter()
        .all(|a| a.tails.last().is_some_and(|t| within_tol(t, opts.tol)));
    let converged = m0.is_some();
    Ok(AhReport {
        final_value: *values.last().expect("nonempty family"),
        values,
        tol: opts.tol,
        m0,
        converged,
        alpha_tails,
        admissible,
        integrable: admissible && converged,
    })
}

/// Truncated integrals with constant levels and the clause `λ μ{|f| > λ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AReport {
    pub lambdas: Vec<Frac>,
    pub values: Vec<Complex64>,
    /// `λ_m · μ{x ∈ box : |f(x)| > λ_m}`.
    pub clause: Vec<Frac>,
    pub clause_ok: bool,
    pub tol: f64,
    pub m0: Option<usize>,
    pub converged: bool,
    pub integrable: bool,
    pub final_value: Complex64,
}

impl AReport {
    pub fn to_json(&self) -> Value {
        json!({
            "lambdas": self.lambdas.iter().map(frac_value).collect::<Vec<_>>(),
            "values": self.values.iter().map(|z| complex_value(*z)).collect::<Vec<_>>(),
            "clause": self.clause.iter().map(frac_value).collect::<Vec<_>>(),
            "clause_ok": self.clause_ok,
            "tol": number(self.tol),
            "m0": self.m0,
            "converged": self.converged,
            "integrable": self.integrable,
            "final_value": complex_value(self.final_value),
        })
    }
}

/// The A-integral along an increasing list of levels `λ_m`.
pub fn a_integral(
    f: &StepFunction<Complex64>,
    lambdas: &[Frac],
    bx: &Cell,
    tol: f64,
    policy: &TruncationPolicy,
) -> Result<AReport> {
    if lambdas.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let grid = f.grid().clone();
    let per: Vec<(Complex64, Frac)> = lambdas
        .par_iter()
        .map(|l| {
            let h = StepFunction::constant(grid.clone(), l.clone());
            let v = truncate(f, &h, policy)?.integral_over(bx)?;
            let one = Scale::new(Frac::one());
            let above = f.map(|z| {
                if compare(*z, l, &one).is_gt() {
                    Frac::one()
                } else {
                    Frac::zero()
                }
            });
            Ok((v, l * above.integral_over_exact(bx)?))
        })
        .collect::<Result<_>>()?;
    let (values, clause): (Vec<Complex64>, Vec<Frac>) = per.into_iter().unzip();
    let m0 = settle_index(&values, tol);
    let clause_ok = within_tol(clause.last().unwrap(), tol);
    Ok(AReport {
        lambdas: lambdas.to_vec(),
        final_value: *values.last().unwrap(),
        values,
        clause_ok,
        tol,
        converged: m0.is_some(),
        integrable: clause_ok && m0.is_some(),
        m0,
        clause,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpgradeReport {
    pub family: HFamily,
    pub alphas: Vec<f64>,
    /// `α_m t_m`.
    pub products: Vec<f64>,
    /// The tails do not decay, so the scaled tails cannot be made to vanish.
    pub hypothesis_violated: bool,
}

impl UpgradeReport {
    pub fn to_json(&self) -> Value {
        json!({
            "alphas": self.alphas.iter().map(|a| number(*a)).collect::<Vec<_>>(),
            "products": self.products.iter().map(|a| number(*a)).collect::<Vec<_>>(),
            "hypothesis_violated": self.hypothesis_violated,
        })
    }
}

/// Scales `h_m` by `α_m = (sup_{k>=m} t_k + 1/m)^{-1/2}`, made nondecreasing.
pub fn upgrade_family(fam: &HFamily, tails: &[Frac]) -> Result<UpgradeReport> {
    if tails.len() != fam.len() {
        return Err(Error::InvalidFamily(format!(
            "{} tails for {} members",
            tails.len(),
            fam.len()
        )));
    }
    if let Some(t) = tails.iter().find(|t| **t < Frac::zero()) {
        return Err(Error::Negative(format!("tail {t}")));
    }
    if fam.members.iter().all(|m| m.step.leaves().iter().all(|(_, v)| v.is_zero())) {
        return Err(Error::ZeroFamily);
    }
    let t: Vec<f64> = tails.iter().map(frac_to_f64).collect();
    let mut sup_tail = vec![0.0; t.len()];
    let mut run = 0.0f64;
    for m in (0..t.len()).rev() {
        run = run.max(t[m]);
        sup_tail[m] = run;
    }
    let mut alphas = Vec::with_capacity(t.len());
    let mut prev = 0.0f64;
    for (m, s) in sup_tail.iter().enumerate() {
        let a = (s + 1.0 / (m as f64 + 1.0)).powf(-0.5).max(prev);
        alphas.push(a);
        prev = a;
    }
    let products: Vec<f64> = alphas.iter().zip(&t).map(|(a, t)| a * t).collect();
    let last = *products.last().unwrap();
    let peak = products.iter().cloned().fold(0.0, f64::max);
    let hypothesis_violated = *t.last().unwrap() > 1.0 || (last > 0.0 && last >= peak);
    let members = fam
        .members
        .iter()
        .zip(&alphas)
        .map(|(m, a)| m.scaled(&f64_to_frac(*a)))
        .collect();
    Ok(UpgradeReport {
        family: HFamily::new(fam.grid.clone(), members, fam.constant_c.clone())?,
        alphas,
        products,
        hypothesis_violated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> Frac {
        Frac::from_integer(n.into())
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn grid() -> Arc<GridConfig> {
        Arc::new(GridConfig::uniform(2, 3, 1).unwrap())
    }

    fn two_step(g: &Arc<GridConfig>, a: f64, b: f64) -> StepFunction<Complex64> {
        StepFunction::from_uniform(g.clone(), 1, |i| if i[0] == 0 { c(a) } else { c(b) }).unwrap()
    }

    #[test]
    fn truncate_examples() {
        let g = grid();
        let f = two_step(&g, 3.0, 1.0);
        let p = TruncationPolicy::default();
        let t = truncate(&f, &StepFunction::constant(g.clone(), q(2)), &p).unwrap();
        assert_eq!(t, two_step(&g, 0.0, 1.0));
        let z = truncate(&f, &StepFunction::constant(g.clone(), q(0)), &p).unwrap();
        assert_eq!(z.sup_abs(), 0.0);
        let same = truncate(&f, &StepFunction::constant(g.clone(), q(3)), &p).unwrap();
        assert_eq!(same, f);
    }

    #[test]
    fn guard_band_keeps_rounded_ties() {
        let g = grid();
        let f = StepFunction::constant(g.clone(), c(2f64.sqrt() * 2f64.sqrt()));
        let t = truncate(&f, &StepFunction::constant(g.clone(), q(2)), &TruncationPolicy::default()).unwrap();
        assert_eq!(t, f);
        let strict = TruncationPolicy { rel_guard: 0.0 };
        let t = truncate(&f, &StepFunction::constant(g, q(2)), &strict).unwrap();
        assert_eq!(t.sup_abs(), 0.0);
    }

    #[test]
    fn integral_examples() {
        let g = grid();
        let r = two_step(&g, 1.0, -1.0);
        assert_eq!(integral(&r, &Cell::unit(&g)).unwrap(), c(0.0));
        assert_eq!(integral(&r, &Cell::uniform(&g, 1, vec![0]).unwrap()).unwrap(), c(0.5));
        assert_eq!(integral(&StepFunction::constant(g.clone(), c(3.5)), &Cell::unit(&g)).unwrap(), c(3.5));
    }

    #[test]
    fn tail_examples() {
        let g = grid();
        let three = StepFunction::constant(g.clone(), q(3));
        let two = StepFunction::constant(g.clone(), q(2));
        assert_eq!(tail_integral(&three, &two, None).unwrap(), q(2));
        assert_eq!(tail_integral(&two, &three, None).unwrap(), q(0));
        assert_eq!(tail_integral(&two, &two, None).unwrap(), q(0));
    }

    #[test]
    fn constant_family_report() {
        let g = grid();
        let fam = HFamily::powers_of_two(g, 4).unwrap();
        let r = check_family(&fam).unwrap();
        assert!(r.h1_ok && r.h2_ok && r.h3_ok);
        assert_eq!(r.c_min, vec![Some(q(1)); 4]);
        assert_eq!(r.h3_eps0, q(2));
        assert_eq!(r.eps0_lambda, q(2));
    }

    #[test]
    fn decreasing_family_fails_h1() {
        let g = grid();
        let fam = HFamily::constants(g, &[q(4), q(2)]).unwrap();
        let r = check_family(&fam).unwrap();
        assert!(!r.h1_ok);
        assert_eq!(r.h1_first_violation, Some(1));
    }

    #[test]
    fn c_min_over_coarse_partition() {
        let g = grid();
        let step = StepFunction::from_uniform(g.clone(), 1, |i| if i[0] == 0 { q(1) } else { q(3) }).unwrap();
        let m = HMember::from_step(step.clone(), Some(vec![Cell::unit(&g)])).unwrap();
        let fam = HFamily::new(g.clone(), vec![m], q(2)).unwrap();
        let r = check_family(&fam).unwrap();
        assert_eq!(r.c_min, vec![Some(q(3))]);
        assert!(!r.h2_ok);
        assert_eq!(r.h3_eps0, q(2));
        let zero_in = StepFunction::from_uniform(g.clone(), 1, |i| if i[0] == 0 { q(0) } else { q(3) }).unwrap();
        let m = HMember::from_step(zero_in, Some(vec![Cell::unit(&g)])).unwrap();
        let r = check_family(&HFamily::new(g, vec![m], q(1)).unwrap()).unwrap();
        assert_eq!(r.c_min, vec![None]);
    }

    #[test]
    fn member_validation() {
        let g = grid();
        assert!(matches!(HMember::constant(g.clone(), q(-1)), Err(Error::Negative(_))));
        let half = Cell::uniform(&g, 1, vec![0]).unwrap();
        assert!(HMember::from_pieces(g.clone(), vec![(half, q(1))], None).is_err());
        assert!(matches!(HFamily::new(g, vec![], q(1)), Err(Error::EmptyFamily)));
    }

    #[test]
    fn family_json_round_trip() {
        let g = grid();
        let step = StepFunction::from_uniform(g.clone(), 1, |i| Frac::new((i[0] as i64 + 1).into(), 3.into())).unwrap();
        let m1 = HMember::from_step(step, Some(vec![Cell::unit(&g)])).unwrap();
        let m2 = HMember::constant(g.clone(), q(5)).unwrap();
        let fam = HFamily::new(g, vec![m1, m2], q(2)).unwrap();
        let text = fam.to_json();
        assert!(text.contains("\"constant_c\""));
        assert_eq!(HFamily::from_json(&text).unwrap(), fam);
    }

    #[test]
    fn bounded_function_converges_from_first_member() {
        let g = grid();
        let f = two_step(&g, 1.5, -0.5);
        let fam = HFamily::constants(g.clone(), &[q(2), q(4), q(8)]).unwrap();
        let r = ah_integral(&f, &fam, &Cell::unit(&g), &AhOptions::default()).unwrap();
        assert_eq!(r.values, vec![c(0.5); 3]);
        assert_eq!(r.m0, Some(1));
        assert!(r.integrable);
    }

    #[test]
    fn a_integral_stabilizes_by_second_level() {
        let g = grid();
        let f = StepFunction::from_uniform(g.clone(), 2, |i| c(i[0] as f64 + 1.0)).unwrap();
        let lambdas: Vec<Frac> = (1..=4).map(|m| q(1 << m)).collect();
        let r = a_integral(&f, &lambdas, &Cell::unit(&g), 1e-12, &TruncationPolicy::default()).unwrap();
        assert_eq!(r.values[0], c(0.75));
        assert_eq!(r.values[1], c(2.5));
        assert_eq!(r.m0, Some(2));
        assert_eq!(r.clause[0], q(1));
        assert!(r.integrable);
    }

    #[test]
    fn ties_are_counted() {
        let g = grid();
        let f = two_step(&g, 2.0, 1.0);
        let fam = HFamily::constants(g.clone(), &[q(2)]).unwrap();
        let opts = AhOptions {
            alphas: vec![q(1)],
            ..AhOptions::default()
        };
        let r = ah_integral(&f, &fam, &Cell::unit(&g), &opts).unwrap();
        assert_eq!(r.alpha_tails[0].ties, vec![1]);
        assert_eq!(r.alpha_tails[0].tails, vec![q(1)]);
    }

    #[test]
    fn upgrade_examples() {
        let g = grid();
        let fam = HFamily::powers_of_two(g, 5).unwrap();
        let zero = upgrade_family(&fam, &vec![q(0); 5]).unwrap();
        for (m, a) in zero.alphas.iter().enumerate() {
            assert!((a - ((m + 1) as f64).sqrt()).abs() < 1e-12);
        }
        assert!(!zero.hypothesis_violated);

        let inv_sq: Vec<Frac> = (1..=5).map(|m| Frac::new(1.into(), (m * m).into())).collect();
        let r = upgrade_family(&fam, &inv_sq).unwrap();
        assert!(r.alphas.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.products.windows(2).all(|w| w[1] < w[0]));
        assert!(!r.hypothesis_violated);

        let ones = upgrade_family(&fam, &vec![q(1); 5]).unwrap();
        assert!(ones.alphas.iter().all(|a| *a < 1.0));
        assert!(ones.hypothesis_violated);
        assert!(upgrade_family(&fam, &[q(0)]).is_err());
    }
}
