//! Branching sequences, P-adic cells, partitions and point codes.
//!
//! A grid is generated by one branching sequence per dimension. Rank `k`
//! cells in dimension `j` are the intervals `[n/m_k, (n+1)/m_k)` where
//! `m_k = p_1 * ... * p_k`. Everything here is exact: indices are integers
//! and geometry is reported as rationals.
//!
//! Cells are half-open, so the cells of a partition partition the point set
//! and not only the measure.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Frac;

/// Branching sequence `p_1, ..., p_K` of one dimension with cached moduli.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchSeq {
    p: Vec<u32>,
    moduli: Vec<u64>,
}

impl BranchSeq {
    pub fn new(p: Vec<u32>) -> Result<Self> {
        let mut moduli = Vec::with_capacity(p.len() + 1);
        moduli.push(1u64);
        for (i, &pi) in p.iter().enumerate() {
            if pi < 2 {
                return Err(Error::config(
                    format!("p[{}]", i + 1),
                    format!("branching factor must be >= 2, got {pi}"),
                ));
            }
            let prev = *moduli.last().unwrap();
            let next = prev.checked_mul(u64::from(pi)).ok_or_else(|| {
                Error::config(format!("p[{}]", i + 1), "modulus overflows 64 bits")
            })?;
            moduli.push(next);
        }
        Ok(BranchSeq { p, moduli })
    }

    /// Constant sequence `(p, p, ..., p)` of length `depth`.
    pub fn constant(p: u32, depth: u32) -> Result<Self> {
        Self::new(vec![p; depth as usize])
    }

    /// Number of available subdivision steps.
    pub fn depth(&self) -> u32 {
        self.p.len() as u32
    }

    /// `p_i` for `1 <= i <= depth`.
    pub fn p(&self, i: u32) -> Result<u32> {
        if i == 0 || i > self.depth() {
            return Err(Error::range("branching position", i, self.depth()));
        }
        Ok(self.p[i as usize - 1])
    }

    pub fn factors(&self) -> &[u32] {
        &self.p
    }

    /// `m_k = p_1 * ... * p_k`, with `m_0 = 1`.
    pub fn modulus(&self, k: u32) -> Result<u64> {
        self.moduli
            .get(k as usize)
            .copied()
            .ok_or_else(|| Error::range("rank", k, self.depth()))
    }

    pub(crate) fn m(&self, k: u32) -> u64 {
        self.moduli[k as usize]
    }

    pub(crate) fn pp(&self, i: u32) -> u32 {
        self.p[i as usize - 1]
    }

    /// Digit `x_i` (1-based) of the rank-`rank` interval with index `n`, for `i <= rank`.
    pub(crate) fn digit_of(&self, n: u64, rank: u32, i: u32) -> u32 {
        ((n / (self.m(rank) / self.m(i))) % u64::from(self.pp(i))) as u32
    }
}

/// `m_k` of a branching sequence.
pub fn modulus(seq: &BranchSeq, k: u32) -> Result<u64> {
    seq.modulus(k)
}

/// The generator of a d-dimensional grid: one branching sequence per dimension,
/// all of the same finite depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridConfig {
    seqs: Vec<BranchSeq>,
    depth: u32,
    bound_m: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridConfigJson {
    dims: usize,
    seqs: Vec<Vec<u32>>,
    depth: u32,
}

impl GridConfig {
    pub fn new(seqs: Vec<Vec<u32>>) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::config("seqs", "at least one dimension is required"));
        }
        let depth = seqs[0].len() as u32;
        let mut out = Vec::with_capacity(seqs.len());
        for (j, p) in seqs.into_iter().enumerate() {
            if p.len() as u32 != depth {
                return Err(Error::config(
                    format!("seqs[{j}]"),
                    format!("length {} differs from depth {depth}", p.len()),
                ));
            }
            let seq = BranchSeq::new(p).map_err(|e| match e {
                Error::InvalidConfig { field, reason } => {
                    Error::config(format!("seqs[{j}].{field}"), reason)
                }
                other => other,
            })?;
            out.push(seq);
        }
        let bound_m = out
            .iter()
            .flat_map(|s| s.p.iter().copied())
            .max()
            .unwrap_or(2);
        let cfg = GridConfig {
            seqs: out,
            depth,
            bound_m,
        };
        // Uniform-rank cell counts must stay addressable.
        let mut total: u64 = 1;
        for s in &cfg.seqs {
            total = total.checked_mul(s.m(depth)).ok_or_else(|| {
                Error::config("depth", "number of finest cells overflows 64 bits")
            })?;
        }
        Ok(cfg)
    }

    /// `d` copies of the constant sequence `(p, ..., p)`.
    pub fn uniform(p: u32, depth: u32, dims: usize) -> Result<Self> {
        Self::new(vec![vec![p; depth as usize]; dims])
    }

    pub fn dims(&self) -> usize {
        self.seqs.len()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// `M = max p^j_i`; finite by construction.
    pub fn bound_m(&self) -> u32 {
        self.bound_m
    }

    pub fn seq(&self, j: usize) -> &BranchSeq {
        &self.seqs[j]
    }

    pub fn seqs(&self) -> &[BranchSeq] {
        &self.seqs
    }

    pub fn modulus(&self, j: usize, k: u32) -> Result<u64> {
        if j >= self.dims() {
            return Err(Error::range("dimension", j, self.dims()));
        }
        self.seqs[j].modulus(k)
    }

    pub(crate) fn check_rank(&self, k: u32) -> Result<()> {
        if k > self.depth {
            Err(Error::range("rank", k, self.depth))
        } else {
            Ok(())
        }
    }

    /// Number of rank-`k` cells of the unit cube.
    pub fn cell_count(&self, k: u32) -> Result<u64> {
        self.check_rank(k)?;
        Ok(self.seqs.iter().map(|s| s.m(k)).product())
    }

    /// Number of rank-`k+1` children of a rank-`k` cell.
    pub(crate) fn branching(&self, k: u32) -> usize {
        self.seqs.iter().map(|s| s.pp(k + 1) as usize).product()
    }

    /// Lebesgue measure of a rank-`k` cell as a float (exact for dyadic grids).
    pub(crate) fn cell_measure_f64(&self, k: u32) -> f64 {
        self.seqs.iter().map(|s| 1.0 / s.m(k) as f64).product()
    }

    pub fn cell_measure(&self, k: u32) -> Frac {
        let den: BigInt = self
            .seqs
            .iter()
            .map(|s| BigInt::from(s.m(k)))
            .product();
        Frac::new(BigInt::one(), den)
    }

    /// Index of child `ordinal` of the rank-`k` cell `parent`, written into `out`.
    /// Children are ordered with the last dimension varying fastest.
    pub(crate) fn child_index(&self, k: u32, parent: &[u64], ordinal: usize, out: &mut [u64]) {
        let mut rest = ordinal;
        for j in (0..self.dims()).rev() {
            let p = self.seqs[j].pp(k + 1) as usize;
            let t = rest % p;
            rest /= p;
            out[j] = parent[j] * p as u64 + t as u64;
        }
    }

    /// Ordinal of the rank-`k+1` ancestor of `target` (a rank-`rank` cell) inside
    /// its rank-`k` ancestor.
    pub(crate) fn child_ordinal_towards(&self, k: u32, target: &[u64], rank: u32) -> usize {
        let mut ord = 0usize;
        for (j, s) in self.seqs.iter().enumerate() {
            let p = s.pp(k + 1) as usize;
            let digit = s.digit_of(target[j], rank, k + 1) as usize;
            ord = ord * p + digit;
        }
        ord
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl Serialize for GridConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GridConfigJson {
            dims: self.dims(),
            seqs: self.seqs.iter().map(|s| s.p.clone()).collect(),
            depth: self.depth,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GridConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = GridConfigJson::deserialize(deserializer)?;
        if raw.dims != raw.seqs.len() {
            return Err(serde::de::Error::custom(format!(
                "dims: declared {} but {} sequences given",
                raw.dims,
                raw.seqs.len()
            )));
        }
        if let Some(j) = raw.seqs.iter().position(|s| s.len() as u32 != raw.depth) {
            return Err(serde::de::Error::custom(format!(
                "seqs[{j}]: length {} differs from depth {}",
                raw.seqs[j].len(),
                raw.depth
            )));
        }
        GridConfig::new(raw.seqs).map_err(serde::de::Error::custom)
    }
}

/// A P-adic parallelepiped: per dimension a rank `k_j` and an index
/// `0 <= n_j < m^j_{k_j}`. Ranks may differ between dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    ranks: Vec<u32>,
    index: Vec<u64>,
}

impl Cell {
    pub fn new(grid: &GridConfig, ranks: Vec<u32>, index: Vec<u64>) -> Result<Self> {
        if ranks.len() != grid.dims() {
            return Err(Error::Dimension {
                expected: grid.dims(),
                got: ranks.len(),
            });
        }
        if index.len() != grid.dims() {
            return Err(Error::Dimension {
                expected: grid.dims(),
                got: index.len(),
            });
        }
        for (j, (&k, &n)) in ranks.iter().zip(&index).enumerate() {
            let m = grid.modulus(j, k)?;
            if n >= m {
                return Err(Error::range("cell index", n, m - 1));
            }
        }
        Ok(Cell { ranks, index })
    }

    /// A cell of `Λ^d_k`: every dimension at rank `k`.
    pub fn uniform(grid: &GridConfig, k: u32, index: Vec<u64>) -> Result<Self> {
        Self::new(grid, vec![k; grid.dims()], index)
    }

    pub(crate) fn uniform_unchecked(k: u32, index: Vec<u64>) -> Self {
        Cell {
            ranks: vec![k; index.len()],
            index,
        }
    }

    /// The whole unit cube.
    pub fn unit(grid: &GridConfig) -> Self {
        Cell {
            ranks: vec![0; grid.dims()],
            index: vec![0; grid.dims()],
        }
    }

    pub fn ranks(&self) -> &[u32] {
        &self.ranks
    }

    pub fn index(&self) -> &[u64] {
        &self.index
    }

    pub fn dims(&self) -> usize {
        self.ranks.len()
    }

    /// `Some(k)` when every dimension has rank `k`.
    pub fn uniform_rank(&self) -> Option<u32> {
        let k = *self.ranks.first()?;
        self.ranks.iter().all(|&r| r == k).then_some(k)
    }

    pub fn max_rank(&self) -> u32 {
        self.ranks.iter().copied().max().unwrap_or(0)
    }

    pub fn measure(&self, grid: &GridConfig) -> Frac {
        let den: BigInt = self
            .ranks
            .iter()
            .enumerate()
            .map(|(j, &k)| BigInt::from(grid.seq(j).m(k)))
            .product();
        Frac::new(BigInt::one(), den)
    }

    pub(crate) fn measure_f64(&self, grid: &GridConfig) -> f64 {
        self.ranks
            .iter()
            .enumerate()
            .map(|(j, &k)| 1.0 / grid.seq(j).m(k) as f64)
            .product()
    }

    /// Per-dimension `[lo, hi)` as exact rationals.
    pub fn bounds(&self, grid: &GridConfig) -> Vec<(Frac, Frac)> {
        self.ranks
            .iter()
            .zip(&self.index)
            .enumerate()
            .map(|(j, (&k, &n))| {
                let m = BigInt::from(grid.seq(j).m(k));
                (
                    Frac::new(BigInt::from(n), m.clone()),
                    Frac::new(BigInt::from(n + 1), m),
                )
            })
            .collect()
    }

    /// Interval of dimension `j` re-expressed at a finer rank `rank`: `[lo, hi)` in
    /// rank-`rank` index units.
    fn span_at(&self, grid: &GridConfig, j: usize, rank: u32) -> (u64, u64) {
        let s = grid.seq(j);
        let scale = s.m(rank) / s.m(self.ranks[j]);
        (self.index[j] * scale, (self.index[j] + 1) * scale)
    }

    /// `true` when `other` is a subset of `self`.
    pub fn contains(&self, grid: &GridConfig, other: &Cell) -> bool {
        (0..self.dims()).all(|j| {
            if other.ranks[j] < self.ranks[j] {
                return false;
            }
            let s = grid.seq(j);
            other.index[j] / (s.m(other.ranks[j]) / s.m(self.ranks[j])) == self.index[j]
        })
    }

    /// `true` when the interiors of the two cells intersect.
    pub fn overlaps(&self, grid: &GridConfig, other: &Cell) -> bool {
        (0..self.dims()).all(|j| {
            let r = self.ranks[j].max(other.ranks[j]);
            let (a0, a1) = self.span_at(grid, j, r);
            let (b0, b1) = other.span_at(grid, j, r);
            a0 < b1 && b0 < a1
        })
    }

    /// Intersection of two cells; per dimension P-adic intervals are nested or disjoint.
    pub fn intersection(&self, grid: &GridConfig, other: &Cell) -> Option<Cell> {
        if !self.overlaps(grid, other) {
            return None;
        }
        let (ranks, index) = (0..self.dims())
            .map(|j| {
                if self.ranks[j] >= other.ranks[j] {
                    (self.ranks[j], self.index[j])
                } else {
                    (other.ranks[j], other.index[j])
                }
            })
            .unzip();
        Some(Cell { ranks, index })
    }

    /// Rank-`k-1` parent of a uniform rank-`k` cell.
    pub fn parent(&self, grid: &GridConfig) -> Option<Cell> {
        let k = self.uniform_rank()?;
        if k == 0 {
            return None;
        }
        let index = self
            .index
            .iter()
            .enumerate()
            .map(|(j, &n)| n / u64::from(grid.seq(j).pp(k)))
            .collect();
        Some(Cell::uniform_unchecked(k - 1, index))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (j, (k, n)) in self.ranks.iter().zip(&self.index).enumerate() {
            if j > 0 {
                write!(f, " x ")?;
            }
            write!(f, "r{k}:{n}")?;
        }
        write!(f, "]")
    }
}

/// A finite family of cells with pairwise disjoint interiors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub cells: Vec<Cell>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_measure(&self, grid: &GridConfig) -> Frac {
        self.cells
            .iter()
            .fold(Frac::zero(), |acc, c| acc + c.measure(grid))
    }

    /// Checks that the cells lie in `region`, are interior-disjoint and tile it
    /// (by exact measure).
    pub fn verify(&self, grid: &GridConfig, region: &Cell) -> Result<()> {
        for c in &self.cells {
            if !region.contains(grid, c) {
                return Err(Error::NotAPartition(format!("{c} lies outside {region}")));
            }
        }
        for (a, ca) in self.cells.iter().enumerate() {
            for cb in &self.cells[a + 1..] {
                if ca.overlaps(grid, cb) {
                    return Err(Error::NotAPartition(format!("{ca} overlaps {cb}")));
                }
            }
        }
        if self.total_measure(grid) != region.measure(grid) {
            return Err(Error::NotAPartition(format!(
                "cells cover measure {} of {}",
                self.total_measure(grid),
                region.measure(grid)
            )));
        }
        Ok(())
    }
}

/// One-step subdivision of `cell` along dimension `dim`.
pub fn refine_cell(grid: &GridConfig, cell: &Cell, dim: usize) -> Result<Partition> {
    if dim >= grid.dims() {
        return Err(Error::range("dimension", dim, grid.dims() - 1));
    }
    let k = cell.ranks[dim];
    if k >= grid.depth() {
        return Err(Error::range("rank", k + 1, grid.depth()));
    }
    let p = u64::from(grid.seq(dim).pp(k + 1));
    let cells = (0..p)
        .map(|t| {
            let mut c = cell.clone();
            c.ranks[dim] = k + 1;
            c.index[dim] = cell.index[dim] * p + t;
            c
        })
        .collect();
    Ok(Partition { cells })
}

/// Splits a mixed-rank box into the uniform-rank cells of rank `max_j k_j`
/// that tile it.
pub fn decompose_box(grid: &GridConfig, cell: &Cell) -> Result<Partition> {
    let r = cell.max_rank();
    grid.check_rank(r)?;
    let spans: Vec<(u64, u64)> = (0..grid.dims()).map(|j| cell.span_at(grid, j, r)).collect();
    let mut cells = Vec::new();
    let mut cur: Vec<u64> = spans.iter().map(|s| s.0).collect();
    loop {
        cells.push(Cell::uniform_unchecked(r, cur.clone()));
        // odometer, last dimension fastest
        let mut j = grid.dims();
        loop {
            if j == 0 {
                return Ok(Partition { cells });
            }
            j -= 1;
            cur[j] += 1;
            if cur[j] < spans[j].1 {
                break;
            }
            cur[j] = spans[j].0;
        }
    }
}

/// Finite P-adic expansion of a point: per dimension the digits `x_1, x_2, ...`
/// with `0 <= x_i < p_i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointCode {
    digits: Vec<Vec<u32>>,
}

impl PointCode {
    pub fn new(grid: &GridConfig, digits: Vec<Vec<u32>>) -> Result<Self> {
        if digits.len() != grid.dims() {
            return Err(Error::Dimension {
                expected: grid.dims(),
                got: digits.len(),
            });
        }
        for (j, ds) in digits.iter().enumerate() {
            if ds.len() as u32 > grid.depth() {
                return Err(Error::range("point depth", ds.len(), grid.depth()));
            }
            for (i, &x) in ds.iter().enumerate() {
                let p = grid.seq(j).pp(i as u32 + 1);
                if x >= p {
                    return Err(Error::range("digit", x, p - 1));
                }
            }
        }
        Ok(PointCode { digits })
    }

    /// One-dimensional convenience constructor.
    pub fn one_dim(seq: &BranchSeq, digits: Vec<u32>) -> Result<Self> {
        if digits.len() as u32 > seq.depth() {
            return Err(Error::range("point depth", digits.len(), seq.depth()));
        }
        for (i, &x) in digits.iter().enumerate() {
            let p = seq.pp(i as u32 + 1);
            if x >= p {
                return Err(Error::range("digit", x, p - 1));
            }
        }
        Ok(PointCode {
            digits: vec![digits],
        })
    }

    /// The digit prefix of a uniform cell, extended by `tail` digits (clamped to range).
    pub fn from_cell(grid: &GridConfig, cell: &Cell, tail: &[u32]) -> Result<Self> {
        let k = cell
            .uniform_rank()
            .ok_or_else(|| Error::config("cell", "point codes need a uniform-rank cell"))?;
        let digits = (0..grid.dims())
            .map(|j| {
                let s = grid.seq(j);
                let mut ds: Vec<u32> = (1..=k).map(|i| s.digit_of(cell.index[j], k, i)).collect();
                for (t, &x) in tail.iter().enumerate() {
                    let i = k + 1 + t as u32;
                    if i > s.depth() {
                        break;
                    }
                    ds.push(x % s.pp(i));
                }
                ds
            })
            .collect();
        Ok(PointCode { digits })
    }

    pub fn digits(&self, dim: usize) -> &[u32] {
        &self.digits[dim]
    }

    pub fn dims(&self) -> usize {
        self.digits.len()
    }

    /// Common number of digits available in every dimension.
    pub fn depth(&self) -> u32 {
        self.digits.iter().map(|d| d.len() as u32).min().unwrap_or(0)
    }

    /// Index of the rank-`rank` interval containing the point in dimension `dim`.
    pub(crate) fn index_at(&self, seq: &BranchSeq, dim: usize, rank: u32) -> u64 {
        let mr = seq.m(rank);
        self.digits[dim][..rank as usize]
            .iter()
            .enumerate()
            .map(|(i, &x)| u64::from(x) * (mr / seq.m(i as u32 + 1)))
            .sum()
    }
}

/// The unique rank-`rank` cell whose nest contains `pt`.
pub fn cell_of_point(grid: &GridConfig, pt: &PointCode, rank: u32) -> Result<Cell> {
    if pt.dims() != grid.dims() {
        return Err(Error::Dimension {
            expected: grid.dims(),
            got: pt.dims(),
        });
    }
    if rank > pt.depth() {
        return Err(Error::range("rank", rank, pt.depth()));
    }
    let index = (0..grid.dims())
        .map(|j| pt.index_at(grid.seq(j), j, rank))
        .collect();
    Ok(Cell::uniform_unchecked(rank, index))
}
