//! A dyadic Haar series whose majorant defeats every constant truncation
//! level on each right-edge interval, yet satisfies the tail condition for a
//! staircase family.
//!
//! Block `n` holds the terms `2^{(k_n+i)/2} χ_{k_n+i}^{(α(n,i))}`, `i = 1..n`,
//! with `k_n = n(n-1)/2` and `α(n,i) = (1 - 2^{1-i}) 2^{k_n+i} + 1`. Each term
//! takes the values `±2^{k_n+i}` on its support, so every quantity here is an
//! exact integer or dyadic rational.

use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, Zero};
use serde_json::{json, Value};

use crate::ah::{check_family, tail_integral, FamilyReport, HFamily, HMember};
use crate::error::{Error, Result};
use crate::grid::{Cell, GridConfig};
use crate::json::{frac_value, SCHEMA_VERSION};
use crate::recovery::{condition_check, lambda_condition_check, recover_additive, ConditionReport, RecoveryReport, Tolerances};
use crate::series::{majorant, AdditiveFn, CoeffMap};
use crate::step::{Refine, StepFunction};
use crate::systems::{classical_to_generalized, MultiIndex};
use crate::Frac;

/// Largest number of blocks; the finest support rank is then 36.
pub const MAX_NMAX: u32 = 8;

/// Truncation of the example to blocks `n = 1..=nmax`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExampleSpec {
    pub nmax: u32,
}

impl Default for ExampleSpec {
    fn default() -> Self {
        ExampleSpec { nmax: 5 }
    }
}

/// One term of the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExampleTerm {
    pub n: u32,
    pub i: u32,
    /// Rank `k_n + i` of the two-index Haar function.
    pub rank: u32,
    /// Position `α(n, i)`, 1-based.
    pub position: u64,
}

impl ExampleTerm {
    /// Support `[(α-1)/2^rank, α/2^rank)` as a dyadic cell.
    pub fn support(&self) -> Cell {
        Cell::uniform_unchecked(self.rank, vec![self.position - 1])
    }
}

pub fn k_n(n: u32) -> u32 {
    n * (n.saturating_sub(1)) / 2
}

pub fn alpha(n: u32, i: u32) -> u64 {
    let k = k_n(n) + i;
    (1u64 << k) - (1u64 << (k - i + 1)) + 1
}

fn pow2(e: u32) -> Frac {
    Frac::from_integer(BigInt::one() << e)
}

fn inv_pow2(e: u32) -> Frac {
    Frac::new(BigInt::one(), BigInt::one() << e)
}

impl ExampleSpec {
    pub fn new(nmax: u32) -> Result<Self> {
        if nmax == 0 || nmax > MAX_NMAX {
            return Err(Error::range("nmax", nmax, MAX_NMAX));
        }
        Ok(ExampleSpec { nmax })
    }

    /// Finest rank `k_N + N`.
    pub fn max_rank(&self) -> u32 {
        k_n(self.nmax) + self.nmax
    }

    pub fn terms(&self) -> Vec<ExampleTerm> {
        (1..=self.nmax)
            .flat_map(|n| {
                (1..=n).map(move |i| ExampleTerm {
                    n,
                    i,
                    rank: k_n(n) + i,
                    position: alpha(n, i),
                })
            })
            .collect()
    }

    /// Rank at which the partial sum is constant on every cell; each term
    /// changes sign inside its support.
    pub fn resolution_rank(&self) -> u32 {
        self.max_rank() + 1
    }

    /// Dyadic grid deep enough for every term.
    pub fn grid(&self) -> Result<Arc<GridConfig>> {
        Ok(Arc::new(GridConfig::uniform(2, self.resolution_rank(), 1)?))
    }

    fn check(&self) -> Result<()> {
        Self::new(self.nmax).map(|_| ())
    }
}

/// The truncated series as generalized Haar coefficients.
pub fn build_example_coeffs(spec: &ExampleSpec) -> Result<CoeffMap> {
    spec.check()?;
    let mut map = CoeffMap::haar(spec.grid()?);
    for t in spec.terms() {
        let n = classical_to_generalized(t.rank, t.position)?;
        let c = 2f64.powi((t.rank / 2) as i32) * if t.rank % 2 == 1 { 2f64.sqrt() } else { 1.0 };
        map.insert(MultiIndex::new(vec![n]), Complex64::new(c, 0.0))?;
    }
    Ok(map)
}

/// Signed value of a term on a dyadic cell, `None` if not constant there.
fn term_on(t: &ExampleTerm, rank: u32, idx: u64) -> Option<i64> {
    let q = t.position - 1;
    if rank <= t.rank {
        return if q >> (t.rank - rank) == idx { None } else { Some(0) };
    }
    if idx >> (rank - t.rank) != q {
        return Some(0);
    }
    let right = (idx >> (rank - t.rank - 1)) & 1 == 1;
    let v = 1i64 << t.rank;
    Some(if right { -v } else { v })
}

/// Exact integer-valued density of `Σ_{terms} f(term)` where `f` maps a
/// term value to the summand.
fn term_density(spec: &ExampleSpec, terms: &[ExampleTerm], abs: bool) -> Result<StepFunction<Frac>> {
    let grid = spec.grid()?;
    let live: Vec<(usize, Option<i64>)> = (0..terms.len()).map(|t| (t, None)).collect();
    StepFunction::build_scoped(grid.clone(), grid.depth(), live, |rank, idx, parent| {
        let mut next = Vec::with_capacity(parent.len());
        let mut open = false;
        for &(t, known) in parent {
            let v = match known {
                Some(v) => Some(v),
                None => term_on(&terms[t], rank, idx[0]),
            };
            match v {
                Some(0) => {}
                Some(v) => next.push((t, Some(if abs { v.abs() } else { v }))),
                None => {
                    open = true;
                    next.push((t, None));
                }
            }
        }
        if open {
            Refine::Split(next)
        } else {
            let sum: i64 = next.iter().map(|&(_, v)| v.unwrap()).sum();
            Refine::Done(Frac::from_integer(sum.into()))
        }
    })
}

/// The exact partial sum `S_R` of the truncated series.
pub fn example_density(spec: &ExampleSpec) -> Result<StepFunction<Frac>> {
    spec.check()?;
    term_density(spec, &spec.terms(), false)
}

/// The additive function of the truncated series, with exact values.
pub fn example_psi(spec: &ExampleSpec) -> Result<AdditiveFn> {
    Ok(AdditiveFn::from_exact_density(example_density(spec)?))
}

/// Staircase member `h_m` on the pieces of [`staircase_pieces`].
pub fn staircase_pieces(m: u32) -> Vec<(Cell, Frac)> {
    let mut pieces: Vec<(Cell, Frac)> = (1..=m)
        .map(|j| {
            let cell = Cell::uniform_unchecked(j, vec![(1u64 << j) - 2]);
            (cell, pow2(k_n(m) + j + 1))
        })
        .collect();
    pieces.push((Cell::uniform_unchecked(m, vec![(1u64 << m) - 1]), pow2(m)));
    pieces
}

/// The staircase family `h_1, ..., h_N` with `C = 1`.
pub fn build_example_hfamily(spec: &ExampleSpec) -> Result<HFamily> {
    spec.check()?;
    let grid = spec.grid()?;
    let members = (1..=spec.nmax)
        .map(|m| HMember::from_pieces(grid.clone(), staircase_pieces(m), None))
        .collect::<Result<_>>()?;
    HFamily::new(grid, members, Frac::one())
}

/// The right-edge interval `[1 - 2^{-j}, 1]`.
pub fn right_edge(j: u32) -> Cell {
    Cell::uniform_unchecked(j, vec![(1u64 << j) - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureEntry {
    pub m: u32,
    /// Block and term whose rank is `m + 2`.
    pub n: u32,
    pub i: u32,
    /// `2^m μ{x ∈ [1-2^{-j}, 1] : S* > 2^m}`.
    pub value: Frac,
    pub bound: Frac,
    pub holds: bool,
    pub measure: Frac,
    pub measure_bound: Frac,
    pub measure_holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaFailure {
    pub j: u32,
    pub entries: Vec<FailureEntry>,
    pub all_hold: bool,
}

impl LambdaFailure {
    pub fn to_json(&self) -> Value {
        json!({
            "j": self.j,
            "window": {
                "m_min": self.entries.first().map(|e| e.m),
                "m_max": self.entries.last().map(|e| e.m),
            },
            "entries": self.entries.iter().map(|e| json!({
                "m": e.m, "n": e.n, "i": e.i,
                "value": frac_value(&e.value),
                "bound": frac_value(&e.bound),
                "holds": e.holds,
                "measure": frac_value(&e.measure),
                "measure_bound": frac_value(&e.measure_bound),
                "measure_holds": e.measure_holds,
            })).collect::<Vec<_>>(),
            "all_hold": self.all_hold,
        })
    }
}

/// Levels `m = k_n + i - 2 >= 1` with `j+1 <= n <= N`, `1 <= i <= n`.
pub fn failure_window(spec: &ExampleSpec, j: u32) -> Result<Vec<(u32, u32, u32)>> {
    spec.check()?;
    if j == 0 || j + 1 > spec.nmax {
        return Err(Error::EmptyWindow { j, nmax: spec.nmax });
    }
    let window: Vec<(u32, u32, u32)> = (j + 1..=spec.nmax)
        .flat_map(|n| (1..=n).map(move |i| (n, i)))
        .filter_map(|(n, i)| (k_n(n) + i).checked_sub(2).filter(|m| *m >= 1).map(|m| (m, n, i)))
        .collect();
    if window.is_empty() {
        return Err(Error::EmptyWindow { j, nmax: spec.nmax });
    }
    Ok(window)
}

fn failure_with(psi: &AdditiveFn, spec: &ExampleSpec, j: u32) -> Result<LambdaFailure> {
    let window = failure_window(spec, j)?;
    let region = right_edge(j);
    let lambdas: Vec<Frac> = window.iter().map(|&(m, _, _)| pow2(m)).collect();
    let report = lambda_condition_check(psi, &lambdas, Some(&region))?;
    let bound = inv_pow2(j + 2);
    let entries: Vec<FailureEntry> = window
        .iter()
        .zip(report.values)
        .map(|(&(m, n, i), value)| {
            let measure = &value / pow2(m);
            let measure_bound = inv_pow2(m + 2 + j);
            FailureEntry {
                m,
                n,
                i,
                holds: value >= bound,
                bound: bound.clone(),
                measure_holds: measure >= measure_bound,
                value,
                measure,
                measure_bound,
            }
        })
        .collect();
    Ok(LambdaFailure {
        j,
        all_hold: entries.iter().all(|e| e.holds && e.measure_holds),
        entries,
    })
}

/// Exact values of `2^m μ{x ∈ [1-2^{-j}, 1] : S* > 2^m}` over the window of `j`.
pub fn verify_lambda_failure(spec: &ExampleSpec, j: u32) -> Result<LambdaFailure> {
    failure_with(&example_psi(spec)?, spec, j)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessEntry {
    pub m: u32,
    /// `∫_{S* > h_m} h_m`.
    pub tail: Frac,
    /// `2m/2^m + 2^{m+1}/2^{k_{m+1}}`.
    pub bound: Frac,
    pub holds: bool,
    /// `{S* > h_m}` lies inside the supports of the large terms.
    pub inclusion_ok: bool,
    /// `Σ_{n<=m} Σ_i |term| <= h_m` on every piece.
    pub piece_bound_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AhSuccess {
    pub entries: Vec<SuccessEntry>,
    /// Last tail strictly below the first. Reported, not required: short
    /// truncations need not show it.
    pub decay: bool,
    pub all_hold: bool,
}

impl AhSuccess {
    pub fn to_json(&self) -> Value {
        json!({
            "entries": self.entries.iter().map(|e| json!({
                "m": e.m,
                "tail": frac_value(&e.tail),
                "bound": frac_value(&e.bound),
                "holds": e.holds,
                "inclusion_ok": e.inclusion_ok,
                "piece_bound_ok": e.piece_bound_ok,
            })).collect::<Vec<_>>(),
            "decay": self.decay,
            "all_hold": self.all_hold,
        })
    }
}

/// Supports that may carry `S* > h_m`: `χ_{k_{m+1}+i}^{(α(m+1,i))}` for
/// `i <= m` and `χ_{k_i+i}^{(α(i,i))}` for `m < i <= N`.
fn large_supports(spec: &ExampleSpec, m: u32) -> Vec<Cell> {
    spec.terms()
        .into_iter()
        .filter(|t| (t.n == m + 1 && t.i <= m) || (t.n > m && t.i == t.n))
        .map(|t| t.support())
        .collect()
}

fn success_with(psi: &AdditiveFn, spec: &ExampleSpec, fam: &HFamily) -> Result<AhSuccess> {
    if spec.nmax < 2 {
        return Err(Error::range("nmax", spec.nmax, 2));
    }
    let grid = spec.grid()?;
    let star = majorant(psi);
    let terms = spec.terms();
    let mut entries = Vec::new();
    for m in 1..spec.nmax {
        let h = fam.members()[(m - 1) as usize].step();
        let tail = tail_integral(&star, h, None)?;
        let bound = Frac::from_integer((2 * m).into()) / pow2(m) + pow2(m + 1) / pow2(k_n(m + 1));

        let supports = large_supports(spec, m);
        let over = star.zip_with(h, |s, hv| s > hv)?;
        let inclusion_ok = over.leaves().into_iter().filter(|(_, o)| *o).all(|(leaf, _)| {
            let covered = supports
                .iter()
                .filter_map(|s| leaf.intersection(&grid, s))
                .fold(Frac::zero(), |acc, c| acc + c.measure(&grid));
            covered == leaf.measure(&grid)
        });

        let early: Vec<_> = terms.iter().copied().filter(|t| t.n <= m).collect();
        let abs_sum = term_density(spec, &early, true)?;
        let piece_bound_ok = abs_sum.zip_with(h, |a, hv| a <= hv)?.fold(|v, _, _| *v, |p| p.into_iter().all(|x| x));

        entries.push(SuccessEntry {
            m,
            holds: tail <= bound,
            tail,
            bound,
            inclusion_ok,
            piece_bound_ok,
        });
    }
    let decay = entries.last().unwrap().tail < entries[0].tail;
    Ok(AhSuccess {
        all_hold: entries.iter().all(|e| e.holds && e.inclusion_ok && e.piece_bound_ok),
        decay,
        entries,
    })
}

/// Exact tails of the majorant above the staircase for `m = 1..N-1`, with the
/// closed-form bound.
pub fn verify_ah_success(spec: &ExampleSpec) -> Result<AhSuccess> {
    success_with(&example_psi(spec)?, spec, &build_example_hfamily(spec)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleReport {
    pub nmax: u32,
    pub max_rank: u32,
    pub terms: usize,
    pub family: FamilyReport,
    pub condition: ConditionReport,
    pub success: AhSuccess,
    pub failures: Vec<LambdaFailure>,
    pub recoveries: Vec<RecoveryReport>,
}

impl ExampleReport {
    /// Staircase family conditions hold with `C = 1` and `ε₀ = 1`.
    pub fn staircase_ok(&self) -> bool {
        self.family.ok()
            && self.family.c_min.iter().all(|c| c.as_ref().is_some_and(|c| c.is_one()))
            && self.family.h3_eps0.is_one()
            && self.condition.pass
            && self.success.all_hold
    }

    pub fn pass(&self) -> bool {
        self.staircase_ok()
            && self.failures.iter().all(|f| f.all_hold)
            && self.recoveries.iter().all(|r| r.verdict())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "nmax": self.nmax,
            "max_rank": self.max_rank,
            "terms": self.terms,
            "family": self.family.to_json(),
            "condition": self.condition.to_json(),
            "success": self.success.to_json(),
            "failures": self.failures.iter().map(LambdaFailure::to_json).collect::<Vec<_>>(),
            "recoveries": self.recoveries.iter().map(RecoveryReport::to_json).collect::<Vec<_>>(),
            "staircase_ok": self.staircase_ok(),
            "pass": self.pass(),
        })
    }
}

/// `[0, 1]` and `[0, 1/2]`.
pub fn default_boxes() -> Vec<Cell> {
    vec![Cell::uniform_unchecked(0, vec![0]), Cell::uniform_unchecked(1, vec![0])]
}

/// Both verdicts and the recovery of `Ψ` on `boxes`. An empty `js` means
/// `1..N-1`.
pub fn example_end_to_end(spec: &ExampleSpec, js: &[u32], boxes: &[Cell], tol: &Tolerances) -> Result<ExampleReport> {
    spec.check()?;
    let grid = spec.grid()?;
    let psi = example_psi(spec)?;
    let fam = build_example_hfamily(spec)?;
    let js: Vec<u32> = if js.is_empty() { (1..spec.nmax).collect() } else { js.to_vec() };
    let failures = js
        .iter()
        .map(|&j| failure_with(&psi, spec, j))
        .collect::<Result<Vec<_>>>()?;
    let recoveries = boxes
        .iter()
        .map(|b| {
            Cell::new(&grid, b.ranks().to_vec(), b.index().to_vec())?;
            recover_additive(&psi, &fam, b, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExampleReport {
        nmax: spec.nmax,
        max_rank: spec.max_rank(),
        terms: spec.terms().len(),
        family: check_family(&fam)?,
        condition: condition_check(&psi, &fam, None, tol.condition)?,
        success: success_with(&psi, spec, &fam)?,
        failures,
        recoveries,
    })
}
