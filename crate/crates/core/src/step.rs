//! Step functions on the unit cube.
//!
//! A step function is stored as a refinement tree: the root is the unit cube
//! (rank 0) and every internal node is a uniform rank-`r` cell split into all
//! of its rank-`r+1` children. Leaves carry a constant value. Any function that
//! is constant on the cells of a finite partition into `Λ^d` cells has such a
//! representation, and two trees always have a common refinement obtained by
//! merging them node by node.
//!
//! Reductions walk the tree in a fixed order. The top levels are evaluated in
//! parallel, but partial results are collected by child position and combined
//! pairwise, so results do not depend on the thread count.

use std::sync::Arc;

use num_complex::Complex64;
use num_traits::Zero;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Cell, GridConfig, PointCode};
use crate::reduce::pairwise_sum;
use crate::Frac;

/// Nodes at rank below this are processed in parallel.
const PAR_RANK: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node<T> {
    Leaf(T),
    Split(Vec<Node<T>>),
}

#[derive(Debug, Clone)]
pub struct StepFunction<T> {
    grid: Arc<GridConfig>,
    root: Node<T>,
}

impl<T: PartialEq> PartialEq for StepFunction<T> {
    fn eq(&self, other: &Self) -> bool {
        *self.grid == *other.grid && self.root == other.root
    }
}

fn child_idx(grid: &GridConfig, rank: u32, idx: &[u64], ordinal: usize) -> Vec<u64> {
    let mut out = vec![0; idx.len()];
    grid.child_index(rank, idx, ordinal, &mut out);
    out
}

fn build_node<T, F>(grid: &GridConfig, rank: u32, idx: &[u64], max_rank: u32, f: &F) -> Result<Node<T>>
where
    T: Send,
    F: Fn(u32, &[u64]) -> Option<T> + Sync,
{
    if let Some(v) = f(rank, idx) {
        return Ok(Node::Leaf(v));
    }
    if rank >= max_rank {
        return Err(Error::Unresolved(max_rank));
    }
    let n = grid.branching(rank);
    let children: Result<Vec<Node<T>>> = if rank < PAR_RANK {
        (0..n)
            .into_par_iter()
            .map(|o| build_node(grid, rank + 1, &child_idx(grid, rank, idx, o), max_rank, f))
            .collect()
    } else {
        (0..n)
            .map(|o| build_node(grid, rank + 1, &child_idx(grid, rank, idx, o), max_rank, f))
            .collect()
    };
    Ok(Node::Split(children?))
}

/// Outcome of examining one cell in [`StepFunction::build_scoped`].
pub(crate) enum Refine<T, S> {
    Done(T),
    Split(S),
}

fn build_scoped_node<T, S, F>(grid: &GridConfig, rank: u32, idx: &[u64], max_rank: u32, state: &S, f: &F) -> Result<Node<T>>
where
    T: Send,
    S: Sync,
    F: Fn(u32, &[u64], &S) -> Refine<T, S> + Sync,
{
    let next = match f(rank, idx, state) {
        Refine::Done(v) => return Ok(Node::Leaf(v)),
        Refine::Split(s) => s,
    };
    if rank >= max_rank {
        return Err(Error::Unresolved(max_rank));
    }
    let n = grid.branching(rank);
    let go = |o: usize| build_scoped_node(grid, rank + 1, &child_idx(grid, rank, idx, o), max_rank, &next, f);
    let children: Result<Vec<Node<T>>> = if rank < PAR_RANK {
        (0..n).into_par_iter().map(go).collect()
    } else {
        (0..n).map(go).collect()
    };
    Ok(Node::Split(children?))
}

fn fold_node<T, S, L, C>(grid: &GridConfig, node: &Node<T>, rank: u32, idx: &[u64], leaf: &L, combine: &C) -> S
where
    T: Sync,
    S: Send,
    L: Fn(&T, u32, &[u64]) -> S + Sync,
    C: Fn(Vec<S>) -> S + Sync,
{
    match node {
        Node::Leaf(v) => leaf(v, rank, idx),
        Node::Split(children) => {
            let parts: Vec<S> = if rank < PAR_RANK {
                children
                    .par_iter()
                    .enumerate()
                    .map(|(o, c)| fold_node(grid, c, rank + 1, &child_idx(grid, rank, idx, o), leaf, combine))
                    .collect()
            } else {
                children
                    .iter()
                    .enumerate()
                    .map(|(o, c)| fold_node(grid, c, rank + 1, &child_idx(grid, rank, idx, o), leaf, combine))
                    .collect()
            };
            combine(parts)
        }
    }
}

fn map_node<T, U, F>(node: &Node<T>, rank: u32, f: &F) -> Node<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    match node {
        Node::Leaf(v) => Node::Leaf(f(v)),
        Node::Split(ch) => Node::Split(if rank < PAR_RANK {
            ch.par_iter().map(|c| map_node(c, rank + 1, f)).collect()
        } else {
            ch.iter().map(|c| map_node(c, rank + 1, f)).collect()
        }),
    }
}

fn zip_node<A, B, V, F>(a: &Node<A>, b: &Node<B>, rank: u32, f: &F) -> Node<V>
where
    A: Sync,
    B: Sync,
    V: Send,
    F: Fn(&A, &B) -> V + Sync,
{
    match (a, b) {
        (Node::Leaf(x), Node::Leaf(y)) => Node::Leaf(f(x, y)),
        (Node::Split(xs), Node::Leaf(_)) => Node::Split(if rank < PAR_RANK {
            xs.par_iter().map(|x| zip_node(x, b, rank + 1, f)).collect()
        } else {
            xs.iter().map(|x| zip_node(x, b, rank + 1, f)).collect()
        }),
        (Node::Leaf(_), Node::Split(ys)) => Node::Split(if rank < PAR_RANK {
            ys.par_iter().map(|y| zip_node(a, y, rank + 1, f)).collect()
        } else {
            ys.iter().map(|y| zip_node(a, y, rank + 1, f)).collect()
        }),
        (Node::Split(xs), Node::Split(ys)) => Node::Split(if rank < PAR_RANK {
            xs.par_iter()
                .zip(ys.par_iter())
                .map(|(x, y)| zip_node(x, y, rank + 1, f))
                .collect()
        } else {
            xs.iter()
                .zip(ys)
                .map(|(x, y)| zip_node(x, y, rank + 1, f))
                .collect()
        }),
    }
}

fn compact_node<T: PartialEq + Clone>(node: Node<T>) -> Node<T> {
    match node {
        Node::Leaf(v) => Node::Leaf(v),
        Node::Split(ch) => {
            let ch: Vec<Node<T>> = ch.into_iter().map(compact_node).collect();
            if let Node::Leaf(first) = &ch[0] {
                if ch.iter().all(|c| matches!(c, Node::Leaf(v) if v == first)) {
                    return Node::Leaf(first.clone());
                }
            }
            Node::Split(ch)
        }
    }
}

fn depth_node<T>(node: &Node<T>) -> u32 {
    match node {
        Node::Leaf(_) => 0,
        Node::Split(ch) => 1 + ch.iter().map(depth_node).max().unwrap_or(0),
    }
}

enum Slot<T> {
    Empty,
    Leaf(T),
    Split(Vec<Slot<T>>),
}

impl<T> StepFunction<T> {
    pub fn constant(grid: Arc<GridConfig>, value: T) -> Self {
        StepFunction {
            grid,
            root: Node::Leaf(value),
        }
    }

    /// Builds a step function by top-down refinement. `f(rank, index)` returns
    /// `Some(v)` when the function is constant `v` on that uniform cell and
    /// `None` when the cell must be split further. Cells at `max_rank` must
    /// resolve.
    pub fn build<F>(grid: Arc<GridConfig>, max_rank: u32, f: F) -> Result<Self>
    where
        T: Send,
        F: Fn(u32, &[u64]) -> Option<T> + Sync,
    {
        grid.check_rank(max_rank)?;
        let root = build_node(&grid, 0, &vec![0; grid.dims()], max_rank, &f)?;
        Ok(StepFunction { grid, root })
    }

    /// Like [`build`](Self::build), but each split hands a narrowed state to its
    /// children.
    pub(crate) fn build_scoped<S, F>(grid: Arc<GridConfig>, max_rank: u32, state: S, f: F) -> Result<Self>
    where
        T: Send,
        S: Sync,
        F: Fn(u32, &[u64], &S) -> Refine<T, S> + Sync,
    {
        grid.check_rank(max_rank)?;
        let root = build_scoped_node(&grid, 0, &vec![0; grid.dims()], max_rank, &state, &f)?;
        Ok(StepFunction { grid, root })
    }

    /// Step function with value `f(index)` on every rank-`rank` cell.
    pub fn from_uniform<F>(grid: Arc<GridConfig>, rank: u32, f: F) -> Result<Self>
    where
        T: Send,
        F: Fn(&[u64]) -> T + Sync,
    {
        Self::build(grid, rank, |r, idx| (r == rank).then(|| f(idx)))
    }

    /// Step function from explicit pieces. The cells must be uniform-rank and
    /// tile the unit cube exactly.
    pub fn from_pieces(grid: Arc<GridConfig>, pieces: Vec<(Cell, T)>) -> Result<Self> {
        let mut root: Slot<T> = Slot::Empty;
        for (cell, v) in pieces {
            let k = cell
                .uniform_rank()
                .ok_or_else(|| Error::NotAPartition(format!("piece {cell} is not of uniform rank")))?;
            Cell::uniform(&grid, k, cell.index().to_vec())?;
            let mut slot = &mut root;
            for r in 0..k {
                if let Slot::Empty = slot {
                    *slot = Slot::Split((0..grid.branching(r)).map(|_| Slot::Empty).collect());
                }
                match slot {
                    Slot::Split(ch) => {
                        let o = grid.child_ordinal_towards(r, cell.index(), k);
                        slot = &mut ch[o];
                    }
                    Slot::Leaf(_) => {
                        return Err(Error::NotAPartition(format!("piece {cell} overlaps a coarser piece")))
                    }
                    Slot::Empty => unreachable!(),
                }
            }
            match slot {
                Slot::Empty => *slot = Slot::Leaf(v),
                _ => return Err(Error::NotAPartition(format!("piece {cell} overlaps another piece"))),
            }
        }
        fn finish<T>(s: Slot<T>) -> Result<Node<T>> {
            match s {
                Slot::Empty => Err(Error::NotAPartition("pieces leave a gap".into())),
                Slot::Leaf(v) => Ok(Node::Leaf(v)),
                Slot::Split(ch) => Ok(Node::Split(ch.into_iter().map(finish).collect::<Result<_>>()?)),
            }
        }
        Ok(StepFunction {
            root: finish(root)?,
            grid,
        })
    }

    pub fn grid(&self) -> &Arc<GridConfig> {
        &self.grid
    }

    /// Finest rank at which the function is split.
    pub fn depth(&self) -> u32 {
        depth_node(&self.root)
    }

    pub(crate) fn root(&self) -> &Node<T> {
        &self.root
    }

    pub(crate) fn from_root(grid: Arc<GridConfig>, root: Node<T>) -> Self {
        StepFunction { grid, root }
    }

    fn same_grid<U>(&self, other: &StepFunction<U>) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::ConfigMismatch)
        }
    }

    /// Value at a point given by its digit expansion.
    pub fn eval(&self, pt: &PointCode) -> Result<&T> {
        if pt.dims() != self.grid.dims() {
            return Err(Error::Dimension {
                expected: self.grid.dims(),
                got: pt.dims(),
            });
        }
        let mut node = &self.root;
        let mut rank = 0u32;
        loop {
            match node {
                Node::Leaf(v) => return Ok(v),
                Node::Split(ch) => {
                    if rank >= pt.depth() {
                        return Err(Error::range("point depth", pt.depth(), rank + 1));
                    }
                    let mut ord = 0usize;
                    for j in 0..self.grid.dims() {
                        let p = self.grid.seq(j).pp(rank + 1) as usize;
                        ord = ord * p + pt.digits(j)[rank as usize] as usize;
                    }
                    node = &ch[ord];
                    rank += 1;
                }
            }
        }
    }

    /// The value on a uniform cell if the function is constant there.
    pub fn value_on(&self, cell: &Cell) -> Option<&T> {
        let k = cell.uniform_rank()?;
        let mut node = &self.root;
        for r in 0..=k {
            match node {
                Node::Leaf(v) => return Some(v),
                Node::Split(ch) if r < k => node = &ch[self.grid.child_ordinal_towards(r, cell.index(), k)],
                Node::Split(_) => return None,
            }
        }
        None
    }

    /// Ordered fold over the leaves: `leaf(value, rank, index)` per leaf,
    /// `combine` over the children of each split in child order.
    pub fn fold<S, L, C>(&self, leaf: L, combine: C) -> S
    where
        T: Sync,
        S: Send,
        L: Fn(&T, u32, &[u64]) -> S + Sync,
        C: Fn(Vec<S>) -> S + Sync,
    {
        fold_node(&self.grid, &self.root, 0, &vec![0; self.grid.dims()], &leaf, &combine)
    }

    /// Like [`fold`](Self::fold) but only over leaves that meet `bx`, skipping
    /// subtrees outside it. `None` when no leaf meets `bx`.
    pub(crate) fn fold_within<S, L, C>(&self, bx: &Cell, leaf: L, combine: C) -> Option<S>
    where
        L: Fn(&T, u32, &[u64]) -> S,
        C: Fn(Vec<S>) -> S,
    {
        fold_within_node(&self.grid, &self.root, 0, &vec![0; self.grid.dims()], bx, &leaf, &combine)
    }

    /// Leaves as (cell, value) in tree order.
    pub fn leaves(&self) -> Vec<(Cell, T)>
    where
        T: Clone + Sync + Send,
    {
        self.fold(
            |v, r, idx| vec![(Cell::uniform_unchecked(r, idx.to_vec()), v.clone())],
            |parts| parts.into_iter().flatten().collect(),
        )
    }

    /// Values on every rank-`rank` cell, in tree order. `rank` must be at least
    /// the depth of the function.
    pub fn uniform_values(&self, rank: u32) -> Result<Vec<(Cell, T)>>
    where
        T: Clone + Sync + Send,
    {
        self.grid.check_rank(rank)?;
        if rank < self.depth() {
            return Err(Error::range("rank", rank, self.depth()));
        }
        let grid = &self.grid;
        Ok(self.fold(
            |v, r, idx| {
                let mut out = Vec::new();
                expand(grid, r, idx, rank, &mut |c| out.push((c, v.clone())));
                out
            },
            |parts| parts.into_iter().flatten().collect(),
        ))
    }

    pub fn map<U, F>(&self, f: F) -> StepFunction<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync,
    {
        StepFunction {
            grid: self.grid.clone(),
            root: map_node(&self.root, 0, &f),
        }
    }

    /// Pointwise combination on the common refinement.
    pub fn zip_with<U, V, F>(&self, other: &StepFunction<U>, f: F) -> Result<StepFunction<V>>
    where
        T: Sync,
        U: Sync,
        V: Send,
        F: Fn(&T, &U) -> V + Sync,
    {
        self.same_grid(other)?;
        Ok(StepFunction {
            grid: self.grid.clone(),
            root: zip_node(&self.root, &other.root, 0, &f),
        })
    }

    /// Merges splits whose children are all equal leaves.
    pub fn compact(self) -> Self
    where
        T: PartialEq + Clone,
    {
        StepFunction {
            grid: self.grid,
            root: compact_node(self.root),
        }
    }
}

fn fold_within_node<T, S, L, C>(
    grid: &GridConfig,
    node: &Node<T>,
    rank: u32,
    idx: &[u64],
    bx: &Cell,
    leaf: &L,
    combine: &C,
) -> Option<S>
where
    L: Fn(&T, u32, &[u64]) -> S,
    C: Fn(Vec<S>) -> S,
{
    if !Cell::uniform_unchecked(rank, idx.to_vec()).overlaps(grid, bx) {
        return None;
    }
    match node {
        Node::Leaf(v) => Some(leaf(v, rank, idx)),
        Node::Split(children) => {
            let parts: Vec<S> = children
                .iter()
                .enumerate()
                .filter_map(|(o, c)| fold_within_node(grid, c, rank + 1, &child_idx(grid, rank, idx, o), bx, leaf, combine))
                .collect();
            Some(combine(parts))
        }
    }
}

/// Calls `out` for every rank-`target` descendant of the rank-`rank` cell `idx`.
fn expand(grid: &GridConfig, rank: u32, idx: &[u64], target: u32, out: &mut dyn FnMut(Cell)) {
    if rank == target {
        out(Cell::uniform_unchecked(rank, idx.to_vec()));
        return;
    }
    for o in 0..grid.branching(rank) {
        expand(grid, rank + 1, &child_idx(grid, rank, idx, o), target, out);
    }
}

/// Relation of a uniform node cell to a (possibly mixed-rank) box.
enum Overlap {
    Inside,
    Outside,
    Partial,
}

fn overlap(grid: &GridConfig, rank: u32, idx: &[u64], bx: &Cell) -> Overlap {
    let node = Cell::uniform_unchecked(rank, idx.to_vec());
    if bx.contains(grid, &node) {
        Overlap::Inside
    } else if node.overlaps(grid, bx) {
        Overlap::Partial
    } else {
        Overlap::Outside
    }
}

impl StepFunction<Complex64> {
    /// `∫` over the unit cube.
    pub fn integral(&self) -> Complex64 {
        let grid = &self.grid;
        self.fold(|v, r, _| v * grid.cell_measure_f64(r), |p| pairwise_sum(&p))
    }

    /// `∫` over an arbitrary (mixed-rank) cell.
    pub fn integral_over(&self, bx: &Cell) -> Result<Complex64> {
        if bx.dims() != self.grid.dims() {
            return Err(Error::Dimension {
                expected: self.grid.dims(),
                got: bx.dims(),
            });
        }
        self.grid.check_rank(bx.max_rank())?;
        Ok(integral_over_node(&self.grid, &self.root, 0, &vec![0; self.grid.dims()], bx))
    }

    /// `⟨f, g⟩ = ∫ f · conj(g)`.
    pub fn inner(&self, other: &StepFunction<Complex64>) -> Result<Complex64> {
        Ok(self.zip_with(other, |a, b| a * b.conj())?.integral())
    }

    /// `sup |f|`.
    pub fn sup_abs(&self) -> f64 {
        self.fold(|v, _, _| v.norm(), |p| p.into_iter().fold(0.0, f64::max))
    }

    /// `sup |f - g|` on the common refinement.
    pub fn sup_distance(&self, other: &StepFunction<Complex64>) -> Result<f64> {
        Ok(self.zip_with(other, |a, b| a - b)?.sup_abs())
    }
}

fn integral_over_node(grid: &GridConfig, node: &Node<Complex64>, rank: u32, idx: &[u64], bx: &Cell) -> Complex64 {
    match overlap(grid, rank, idx, bx) {
        Overlap::Outside => Complex64::zero(),
        Overlap::Inside => fold_node(
            grid,
            node,
            rank,
            idx,
            &|v: &Complex64, r, _: &[u64]| v * grid.cell_measure_f64(r),
            &|p: Vec<Complex64>| pairwise_sum(&p),
        ),
        Overlap::Partial => match node {
            Node::Leaf(v) => {
                let cell = Cell::uniform_unchecked(rank, idx.to_vec());
                let inter = cell.intersection(grid, bx).expect("partial overlap");
                v * inter.measure_f64(grid)
            }
            Node::Split(ch) => {
                let parts: Vec<Complex64> = ch
                    .iter()
                    .enumerate()
                    .map(|(o, c)| integral_over_node(grid, c, rank + 1, &child_idx(grid, rank, idx, o), bx))
                    .collect();
                pairwise_sum(&parts)
            }
        },
    }
}

impl StepFunction<Frac> {
    /// Exact `∫` over the unit cube.
    pub fn integral_exact(&self) -> Frac {
        let grid = &self.grid;
        self.fold(
            |v, r, _| v * grid.cell_measure(r),
            |p| p.into_iter().fold(Frac::zero(), |a, b| a + b),
        )
    }

    /// Exact `∫` over a (possibly mixed-rank) cell.
    pub fn integral_over_exact(&self, bx: &Cell) -> Result<Frac> {
        self.grid.check_rank(bx.max_rank())?;
        let grid = &self.grid;
        Ok(self
            .fold_within(
                bx,
                |v, r, idx| {
                    let cell = Cell::uniform_unchecked(r, idx.to_vec());
                    v * cell.intersection(grid, bx).expect("leaf meets box").measure(grid)
                },
                |p| p.into_iter().fold(Frac::zero(), |a, b| a + b),
            )
            .unwrap_or_else(Frac::zero))
    }

    pub fn to_complex(&self) -> StepFunction<Complex64> {
        self.map(|v| Complex64::new(crate::frac_to_f64(v), 0.0))
    }
}
