#![allow(dead_code)]

use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex64;
use padic_core::{refine_cell, Cell, CoeffMap, CoeffMode, Frac, GridConfig, HFamily, HMember, MultiIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn q(n: i64) -> Frac {
    Frac::from_integer(n.into())
}

pub fn qq(n: i64, d: i64) -> Frac {
    Frac::new(n.into(), d.into())
}

pub fn pow2(m: u32) -> Frac {
    Frac::from_integer(BigInt::from(1) << m)
}

pub fn grid(seqs: Vec<Vec<u32>>) -> Arc<GridConfig> {
    Arc::new(GridConfig::new(seqs).unwrap())
}

/// Dyadic value in [-1, 1] with denominator 8.
pub fn dyadic(r: &mut impl Rng) -> f64 {
    f64::from(r.random_range(-8i32..=8)) / 8.0
}

/// A random index strictly below `Ñ` for rank `rank`.
pub fn random_index(g: &GridConfig, rank: u32, r: &mut impl Rng) -> MultiIndex {
    MultiIndex::new(
        (0..g.dims())
            .map(|j| r.random_range(0..g.modulus(j, rank).unwrap()))
            .collect(),
    )
}

/// Up to `terms` nonzero coefficients on indices below rank `rank`.
pub fn random_series(g: &Arc<GridConfig>, mode: CoeffMode, rank: u32, terms: usize, r: &mut impl Rng) -> CoeffMap {
    let mut m = CoeffMap::new(g.clone(), mode);
    for _ in 0..terms {
        let n = random_index(g, rank, r);
        let mut z = Complex64::new(dyadic(r), dyadic(r));
        if z.norm() == 0.0 {
            z = Complex64::new(0.5, 0.0);
        }
        m.insert(n, z).unwrap();
    }
    m
}

pub fn children(g: &GridConfig, cell: &Cell) -> Vec<Cell> {
    let mut out = vec![cell.clone()];
    for j in 0..g.dims() {
        out = out
            .iter()
            .flat_map(|c| refine_cell(g, c, j).unwrap().cells)
            .collect();
    }
    out
}

pub fn uniform_cells(g: &GridConfig, rank: u32) -> Vec<Cell> {
    let mut out = vec![Cell::unit(g)];
    for _ in 0..rank {
        out = out.iter().flat_map(|c| children(g, c)).collect();
    }
    out
}

pub fn random_uniform_cell(g: &GridConfig, max_rank: u32, r: &mut impl Rng) -> Cell {
    let k = r.random_range(0..=max_rank);
    let index = (0..g.dims())
        .map(|j| r.random_range(0..g.modulus(j, k).unwrap()))
        .collect();
    Cell::uniform(g, k, index).unwrap()
}

/// A box whose rank may differ per dimension.
pub fn random_box(g: &GridConfig, max_rank: u32, r: &mut impl Rng) -> Cell {
    let ranks: Vec<u32> = (0..g.dims()).map(|_| r.random_range(0..=max_rank)).collect();
    let index = ranks
        .iter()
        .enumerate()
        .map(|(j, &k)| r.random_range(0..g.modulus(j, k).unwrap()))
        .collect();
    Cell::new(g, ranks, index).unwrap()
}

/// A random partition of the cube into uniform-rank cells.
pub fn random_partition(g: &GridConfig, split: f64, r: &mut impl Rng) -> Vec<Cell> {
    let mut out = Vec::new();
    let mut stack = vec![Cell::unit(g)];
    while let Some(c) = stack.pop() {
        let k = c.max_rank();
        if k < g.depth() && r.random_bool(split) {
            stack.extend(children(g, &c));
        } else {
            out.push(c);
        }
    }
    out
}

/// Member `m` takes values in `[2^m, 2^{m+1})` on its own random partition.
pub fn random_family(g: &Arc<GridConfig>, count: u32, r: &mut impl Rng) -> HFamily {
    let members = (1..=count)
        .map(|m| {
            let pieces = random_partition(g, 0.45, r)
                .into_iter()
                .map(|c| (c, pow2(m) * qq(8 + r.random_range(0..8), 8)))
                .collect();
            HMember::from_pieces(g.clone(), pieces, None).unwrap()
        })
        .collect();
    HFamily::new(g.clone(), members, q(2)).unwrap()
}
