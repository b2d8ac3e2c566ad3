//! Generalized Haar, classical Haar and Price systems.
//!
//! Function values are first formed as [`UnitValue`]s, `√radicand · e^{2πi·phase}`
//! with an integer radicand and a rational phase, so products and conjugates are
//! exact. Conversion to `Complex64` happens once, right before summation.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Roots;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BranchSeq, GridConfig, PointCode};
use crate::reduce::pairwise_sum;
use crate::step::StepFunction;
use crate::Frac;

/// Multi-index `(n_1, ..., n_d)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u64>);

impl MultiIndex {
    pub fn new(n: Vec<u64>) -> Self {
        MultiIndex(n)
    }

    pub fn zero(dims: usize) -> Self {
        MultiIndex(vec![0; dims])
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    /// `n̄ < k̄`: `n_j < m^j_{k_j}` in every dimension.
    pub fn below(&self, grid: &GridConfig, ranks: &[u32]) -> bool {
        self.0
            .iter()
            .zip(ranks)
            .enumerate()
            .all(|(j, (&n, &k))| n < grid.seq(j).m(k))
    }

    pub(crate) fn check(&self, grid: &GridConfig) -> Result<()> {
        if self.dims() != grid.dims() {
            return Err(Error::Dimension {
                expected: grid.dims(),
                got: self.dims(),
            });
        }
        for (j, &n) in self.0.iter().enumerate() {
            let cap = grid.seq(j).m(grid.depth());
            if n >= cap {
                return Err(Error::range("function index", n, cap - 1));
            }
        }
        Ok(())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// `√radicand · e^{2πi·phase}` with `phase ∈ [0, 1)`; radicand 0 is the value 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitValue {
    radicand: u64,
    phase: Frac,
}

fn wrap_phase(p: Frac) -> Frac {
    let f = p.floor();
    p - f
}

impl UnitValue {
    pub fn new(radicand: u64, phase: Frac) -> Self {
        if radicand == 0 {
            return Self::zero();
        }
        UnitValue {
            radicand,
            phase: wrap_phase(phase),
        }
    }

    pub fn zero() -> Self {
        UnitValue {
            radicand: 0,
            phase: Frac::zero(),
        }
    }

    pub fn one() -> Self {
        UnitValue {
            radicand: 1,
            phase: Frac::zero(),
        }
    }

    pub fn radicand(&self) -> u64 {
        self.radicand
    }

    pub fn phase(&self) -> &Frac {
        &self.phase
    }

    pub fn is_zero(&self) -> bool {
        self.radicand == 0
    }

    pub fn mul(&self, other: &UnitValue) -> UnitValue {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let radicand = self
            .radicand
            .checked_mul(other.radicand)
            .expect("radicand product overflows 64 bits");
        UnitValue::new(radicand, &self.phase + &other.phase)
    }

    pub fn conj(&self) -> UnitValue {
        UnitValue::new(self.radicand, -self.phase.clone())
    }

    /// Nearest complex float; quarter-turn phases and perfect-square radicands are exact.
    pub fn to_complex(&self) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        let root = self.radicand.sqrt();
        let modulus = if root * root == self.radicand {
            root as f64
        } else {
            (self.radicand as f64).sqrt()
        };
        let four = &self.phase * BigInt::from(4);
        if four.is_integer() {
            return match four.to_integer().to_u8() {
                Some(0) => Complex64::new(modulus, 0.0),
                Some(1) => Complex64::new(0.0, modulus),
                Some(2) => Complex64::new(-modulus, 0.0),
                _ => Complex64::new(0.0, -modulus),
            };
        }
        let turns = crate::frac_to_f64(&self.phase);
        Complex64::from_polar(modulus, std::f64::consts::TAU * turns)
    }
}

/// Generalized Haar flat index with its `(k, r, s)` decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaarIndex {
    pub n: u64,
    /// `None` for the constant `χ_0`.
    pub krs: Option<(u32, u64, u32)>,
}

impl HaarIndex {
    pub fn decode(seq: &BranchSeq, n: u64) -> Result<Self> {
        if n == 0 {
            return Ok(HaarIndex { n, krs: None });
        }
        Ok(HaarIndex {
            n,
            krs: Some(haar_decode(seq, n)?),
        })
    }

    /// Rank `k` of the support cell; the constant has no support rank.
    pub fn rank(&self) -> Option<u32> {
        self.krs.map(|(k, _, _)| k)
    }
}

/// `n = m_k + r(p_{k+1} - 1) + s - 1` with `0 <= r < m_k`, `1 <= s < p_{k+1}`.
pub fn haar_decode(seq: &BranchSeq, n: u64) -> Result<(u32, u64, u32)> {
    let cap = seq.m(seq.depth());
    if n == 0 || n >= cap {
        return Err(Error::range("Haar index", n, cap - 1));
    }
    let k = (0..seq.depth())
        .find(|&k| n < seq.m(k + 1))
        .expect("n below the last modulus");
    let width = u64::from(seq.pp(k + 1) - 1);
    let off = n - seq.m(k);
    Ok((k, off / width, (off % width) as u32 + 1))
}

pub fn haar_encode(seq: &BranchSeq, k: u32, r: u64, s: u32) -> Result<u64> {
    if k >= seq.depth() {
        return Err(Error::range("rank", k, seq.depth() - 1));
    }
    if r >= seq.m(k) {
        return Err(Error::range("r", r, seq.m(k) - 1));
    }
    let p = seq.pp(k + 1);
    if s == 0 || s >= p {
        return Err(Error::range("s", s, p - 1));
    }
    Ok(seq.m(k) + r * u64::from(p - 1) + u64::from(s) - 1)
}

/// Price flat index `k = Σ α_j m_{j-1}` with its digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceIndex {
    pub k: u64,
    pub digits: Vec<u32>,
}

impl PriceIndex {
    pub fn decode(seq: &BranchSeq, k: u64) -> Result<Self> {
        let cap = seq.m(seq.depth());
        if k >= cap {
            return Err(Error::range("Price index", k, cap - 1));
        }
        let blocks = (0..=seq.depth()).find(|&b| k < seq.m(b)).unwrap();
        let digits = (1..=blocks)
            .map(|j| ((k / seq.m(j - 1)) % u64::from(seq.pp(j))) as u32)
            .collect();
        Ok(PriceIndex { k, digits })
    }

    pub fn encode(seq: &BranchSeq, digits: &[u32]) -> Result<u64> {
        let mut k = 0u64;
        for (j, &a) in digits.iter().enumerate() {
            let p = seq.p(j as u32 + 1)?;
            if a >= p {
                return Err(Error::range("Price digit", a, p - 1));
            }
            k += u64::from(a) * seq.m(j as u32);
        }
        Ok(k)
    }

    /// Number of digit blocks, the rank at which `ψ_k` becomes constant.
    pub fn blocks(&self) -> u32 {
        self.digits.len() as u32
    }
}

fn one_dim_digits(pt: &PointCode) -> Result<&[u32]> {
    if pt.dims() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: pt.dims(),
        });
    }
    Ok(pt.digits(0))
}

/// Value of the generalized Haar function `χ_n` at a point.
pub fn gen_haar_eval(seq: &BranchSeq, n: u64, pt: &PointCode) -> Result<UnitValue> {
    let digits = one_dim_digits(pt)?;
    if n == 0 {
        return Ok(UnitValue::one());
    }
    let (k, r, s) = haar_decode(seq, n)?;
    if (digits.len() as u32) < k + 1 {
        return Err(Error::range("point depth", digits.len(), k + 1));
    }
    let at_k: u64 = digits[..k as usize]
        .iter()
        .enumerate()
        .map(|(i, &x)| u64::from(x) * (seq.m(k) / seq.m(i as u32 + 1)))
        .sum();
    if at_k != r {
        return Ok(UnitValue::zero());
    }
    let x = digits[k as usize];
    Ok(UnitValue::new(
        seq.m(k),
        Frac::new(BigInt::from(x) * BigInt::from(s), BigInt::from(seq.pp(k + 1))),
    ))
}

/// Classical two-index Haar function `χ_k^{(i)}` (dyadic), `1 <= i <= 2^k`;
/// `(0, 0)` is the constant `χ_1`.
pub fn classical_haar_eval(k: u32, i: u64, pt: &PointCode) -> Result<UnitValue> {
    let digits = one_dim_digits(pt)?;
    if let Some(&bad) = digits.iter().find(|&&x| x > 1) {
        return Err(Error::range("binary digit", bad, 1));
    }
    if k == 0 && i == 0 {
        return Ok(UnitValue::one());
    }
    if k >= 63 {
        return Err(Error::range("rank", k, 62));
    }
    let width = 1u64 << k;
    if i == 0 || i > width {
        return Err(Error::range("position", i, width));
    }
    if (digits.len() as u32) < k + 1 {
        return Err(Error::range("point depth", digits.len(), k + 1));
    }
    let at_k = digits[..k as usize]
        .iter()
        .fold(0u64, |acc, &x| (acc << 1) | u64::from(x));
    if at_k != i - 1 {
        return Ok(UnitValue::zero());
    }
    let phase = if digits[k as usize] == 0 {
        Frac::zero()
    } else {
        Frac::new(1.into(), 2.into())
    };
    Ok(UnitValue::new(width, phase))
}

/// Generalized (dyadic) flat index of the classical `χ_k^{(i)}`; its classical flat
/// index is one larger.
pub fn classical_to_generalized(k: u32, i: u64) -> Result<u64> {
    if k == 0 && i == 0 {
        return Ok(0);
    }
    if k >= 63 || i == 0 || i > 1u64 << k {
        return Err(Error::range("position", i, 1u64 << k.min(62)));
    }
    Ok((1u64 << k) + i - 1)
}

/// Inverse of [`classical_to_generalized`].
pub fn generalized_to_classical(n: u64) -> (u32, u64) {
    if n == 0 {
        return (0, 0);
    }
    let k = 63 - n.leading_zeros();
    (k, n - (1u64 << k) + 1)
}

/// Value of the Price function `ψ_k` at a point.
pub fn price_eval(seq: &BranchSeq, k: u64, pt: &PointCode) -> Result<UnitValue> {
    let digits = one_dim_digits(pt)?;
    let idx = PriceIndex::decode(seq, k)?;
    if digits.len() < idx.digits.len() {
        return Err(Error::range("point depth", digits.len(), idx.digits.len()));
    }
    let phase = idx
        .digits
        .iter()
        .zip(digits)
        .enumerate()
        .fold(Frac::zero(), |acc, (j, (&a, &x))| {
            acc + Frac::new(
                BigInt::from(a) * BigInt::from(x),
                BigInt::from(seq.pp(j as u32 + 1)),
            )
        });
    Ok(UnitValue::new(1, phase))
}

/// `χ_n` on the rank-`rank` interval `q`: `Some` when constant there.
pub(crate) fn haar_on_interval(seq: &BranchSeq, idx: &HaarIndex, rank: u32, q: u64) -> Option<UnitValue> {
    let Some((k, r, s)) = idx.krs else {
        return Some(UnitValue::one());
    };
    if rank <= k {
        let ancestor_of_support = r / (seq.m(k) / seq.m(rank));
        return if ancestor_of_support == q { None } else { Some(UnitValue::zero()) };
    }
    let at_k = q / (seq.m(rank) / seq.m(k));
    if at_k != r {
        return Some(UnitValue::zero());
    }
    let x = seq.digit_of(q, rank, k + 1);
    Some(UnitValue::new(
        seq.m(k),
        Frac::new(BigInt::from(x) * BigInt::from(s), BigInt::from(seq.pp(k + 1))),
    ))
}

/// `ψ_k` on the rank-`rank` interval `q`: `Some` when constant there.
pub(crate) fn price_on_interval(seq: &BranchSeq, idx: &PriceIndex, rank: u32, q: u64) -> Option<UnitValue> {
    if rank < idx.blocks() {
        return None;
    }
    let phase = idx.digits.iter().enumerate().fold(Frac::zero(), |acc, (j, &a)| {
        let i = j as u32 + 1;
        let x = seq.digit_of(q, rank, i);
        acc + Frac::new(BigInt::from(a) * BigInt::from(x), BigInt::from(seq.pp(i)))
    });
    Some(UnitValue::new(1, phase))
}

/// Exact tensor-product value of `χ_{n̄}` on a uniform cell, when constant there.
pub(crate) fn tensor_haar_on_cell(grid: &GridConfig, idx: &[HaarIndex], rank: u32, cell: &[u64]) -> Option<UnitValue> {
    let mut acc = UnitValue::one();
    let mut resolved = true;
    for (j, hi) in idx.iter().enumerate() {
        match haar_on_interval(grid.seq(j), hi, rank, cell[j]) {
            Some(v) if v.is_zero() => return Some(UnitValue::zero()),
            Some(v) => acc = acc.mul(&v),
            None => resolved = false,
        }
    }
    resolved.then_some(acc)
}

pub(crate) fn tensor_price_on_cell(grid: &GridConfig, idx: &[PriceIndex], rank: u32, cell: &[u64]) -> Option<UnitValue> {
    let mut acc = UnitValue::one();
    for (j, pi) in idx.iter().enumerate() {
        acc = acc.mul(&price_on_interval(grid.seq(j), pi, rank, cell[j])?);
    }
    Some(acc)
}

pub(crate) fn decode_haar_multi(grid: &GridConfig, n: &MultiIndex) -> Result<Vec<HaarIndex>> {
    n.check(grid)?;
    n.0.iter()
        .enumerate()
        .map(|(j, &nj)| HaarIndex::decode(grid.seq(j), nj))
        .collect()
}

pub(crate) fn decode_price_multi(grid: &GridConfig, n: &MultiIndex) -> Result<Vec<PriceIndex>> {
    n.check(grid)?;
    n.0.iter()
        .enumerate()
        .map(|(j, &nj)| PriceIndex::decode(grid.seq(j), nj))
        .collect()
}

/// Rank at which the tensor Haar function becomes constant on every cell.
pub(crate) fn haar_resolution(idx: &[HaarIndex]) -> u32 {
    idx.iter().filter_map(|h| h.rank()).map(|k| k + 1).max().unwrap_or(0)
}

/// `‖χ_{n̄}‖_∞² = ∏_j m^j_{k_j}` (factor 1 for constant components).
pub fn haar_sup_norm_sq(grid: &GridConfig, n: &MultiIndex) -> Result<u64> {
    Ok(decode_haar_multi(grid, n)?
        .iter()
        .enumerate()
        .map(|(j, h)| h.rank().map_or(1, |k| grid.seq(j).m(k)))
        .product())
}

/// The tensor product `χ_{n_1}(x_1) ⋯ χ_{n_d}(x_d)` as a step function.
pub fn tensor_haar_step(grid: &Arc<GridConfig>, n: &MultiIndex) -> Result<StepFunction<Complex64>> {
    let idx = decode_haar_multi(grid, n)?;
    let max_rank = haar_resolution(&idx);
    StepFunction::build(grid.clone(), max_rank, |rank, cell| {
        tensor_haar_on_cell(grid, &idx, rank, cell).map(|u| u.to_complex())
    })
}

/// The tensor product `ψ_{n_1}(x_1) ⋯ ψ_{n_d}(x_d)` as a step function.
pub fn tensor_price_step(grid: &Arc<GridConfig>, n: &MultiIndex) -> Result<StepFunction<Complex64>> {
    let idx = decode_price_multi(grid, n)?;
    let max_rank = idx.iter().map(|p| p.blocks()).max().unwrap_or(0);
    StepFunction::build(grid.clone(), max_rank, |rank, cell| {
        tensor_price_on_cell(grid, &idx, rank, cell).map(|u| u.to_complex())
    })
}

/// `⟨f, g⟩ = ∫ f · conj(g)` over the unit cube.
pub fn inner_product(f: &StepFunction<Complex64>, g: &StepFunction<Complex64>) -> Result<Complex64> {
    f.inner(g)
}

/// Change of basis between the rank-`block_rank` Price and Haar blocks of one
/// dimension: `ψ_k = Σ_l γ[k][l] χ_l` with `γ[k][l] = ⟨ψ_k, χ_l⟩`, both indices
/// running over `m_{n-1} .. m_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaBlock {
    pub block_rank: u32,
    /// First flat index of the block, `m_{n-1}`.
    pub offset: u64,
    /// `entries[k - offset][l - offset]`.
    pub entries: Vec<Vec<Complex64>>,
}

impl GammaBlock {
    pub fn size(&self) -> usize {
        self.entries.len()
    }

    /// `max_{k,p} |Σ_l γ_k^l conj(γ_p^l) - δ_{kp}|`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.size();
        let mut worst = 0.0f64;
        for k in 0..n {
            for p in 0..n {
                let terms: Vec<Complex64> = (0..n)
                    .map(|l| self.entries[k][l] * self.entries[p][l].conj())
                    .collect();
                let target = if k == p { 1.0 } else { 0.0 };
                worst = worst.max((pairwise_sum(&terms) - target).norm());
            }
        }
        worst
    }
}

/// Computes the `γ` block of rank `block_rank >= 1` from exact per-cell products on
/// the rank-`block_rank` cells.
pub fn gamma_matrix(seq: &BranchSeq, block_rank: u32) -> Result<GammaBlock> {
    if block_rank == 0 || block_rank > seq.depth() {
        return Err(Error::range("block rank", block_rank, seq.depth()));
    }
    let lo = seq.m(block_rank - 1);
    let hi = seq.m(block_rank);
    let size = (hi - lo) as usize;
    let cells = seq.m(block_rank);
    let measure = 1.0 / cells as f64;
    let price: Vec<PriceIndex> = (lo..hi)
        .map(|k| PriceIndex::decode(seq, k))
        .collect::<Result<_>>()?;
    let haar: Vec<HaarIndex> = (lo..hi)
        .map(|l| HaarIndex::decode(seq, l))
        .collect::<Result<_>>()?;
    let mut entries = vec![vec![Complex64::new(0.0, 0.0); size]; size];
    for (a, pk) in price.iter().enumerate() {
        for (b, hl) in haar.iter().enumerate() {
            // χ_l lives on one rank-(block_rank - 1) cell, i.e. p consecutive rank-block_rank cells
            let support = match hl.krs {
                Some((_, r, _)) => {
                    let p = u64::from(seq.pp(block_rank));
                    r * p..(r + 1) * p
                }
                None => 0..cells,
            };
            let terms: Vec<Complex64> = support
                .map(|q| {
                    let psi = price_on_interval(seq, pk, block_rank, q).expect("constant at block rank");
                    let chi = haar_on_interval(seq, hl, block_rank, q).expect("constant at block rank");
                    psi.mul(&chi.conj()).to_complex()
                })
                .collect();
            entries[a][b] = pairwise_sum(&terms) * measure;
        }
    }
    Ok(GammaBlock {
        block_rank,
        offset: lo,
        entries,
    })
}

/// Flat index range `[m_{s-1}, m_s)` of block `s` (block 0 is `{0}`).
pub(crate) fn block_range(seq: &BranchSeq, s: u32) -> (u64, u64) {
    if s == 0 {
        (0, 1)
    } else {
        (seq.m(s - 1), seq.m(s))
    }
}

/// Block containing flat index `n` (same for Haar and Price numbering).
pub(crate) fn block_of(seq: &BranchSeq, n: u64) -> u32 {
    (0..=seq.depth()).find(|&s| n < seq.m(s)).unwrap_or(seq.depth())
}

/// `γ` block for block `s` of one dimension, with block 0 the 1×1 identity.
pub(crate) fn gamma_or_identity(seq: &BranchSeq, s: u32) -> Result<GammaBlock> {
    if s == 0 {
        Ok(GammaBlock {
            block_rank: 0,
            offset: 0,
            entries: vec![vec![Complex64::new(1.0, 0.0)]],
        })
    } else {
        gamma_matrix(seq, s)
    }
}
