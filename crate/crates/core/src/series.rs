//! Finitely supported Haar and Price series, the additive function they induce,
//! its derivative and majorant.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{decompose_box, Cell, GridConfig};
use crate::reduce::pairwise_sum;
use crate::step::{Node, Refine, StepFunction};
use crate::systems::{
    block_of, block_range, decode_haar_multi, decode_price_multi, gamma_or_identity, haar_sup_norm_sq,
    tensor_haar_on_cell, tensor_price_on_cell, GammaBlock, HaarIndex, MultiIndex, PriceIndex,
};
use crate::Frac;

/// Largest magnitude for which integer-valued sums stay exact in doubles.
pub const VALUE_GUARD: f64 = 4_503_599_627_370_496.0; // 2^52

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoeffMode {
    /// `a_n̄`, coefficients against the generalized Haar system.
    Haar,
    /// `b_n̄`, coefficients against the Price system.
    Price,
}

impl CoeffMode {
    pub fn name(self) -> &'static str {
        match self {
            CoeffMode::Haar => "haar",
            CoeffMode::Price => "price",
        }
    }
}

/// Finitely supported coefficient family.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffMap {
    grid: Arc<GridConfig>,
    mode: CoeffMode,
    entries: BTreeMap<MultiIndex, Complex64>,
}

impl CoeffMap {
    pub fn new(grid: Arc<GridConfig>, mode: CoeffMode) -> Self {
        CoeffMap {
            grid,
            mode,
            entries: BTreeMap::new(),
        }
    }

    pub fn haar(grid: Arc<GridConfig>) -> Self {
        Self::new(grid, CoeffMode::Haar)
    }

    pub fn price(grid: Arc<GridConfig>) -> Self {
        Self::new(grid, CoeffMode::Price)
    }

    /// Sets a coefficient, replacing any previous value.
    pub fn insert(&mut self, n: MultiIndex, value: Complex64) -> Result<()> {
        n.check(&self.grid)?;
        self.entries.insert(n, value);
        Ok(())
    }

    pub fn get(&self, n: &MultiIndex) -> Complex64 {
        self.entries.get(n).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mode(&self) -> CoeffMode {
        self.mode
    }

    pub fn grid(&self) -> &Arc<GridConfig> {
        &self.grid
    }

    /// Smallest `N` with `n̄ < Ñ` for every stored index.
    pub fn stabilization_rank(&self) -> u32 {
        self.entries
            .keys()
            .flat_map(|n| n.0.iter().enumerate().map(|(j, &nj)| block_of(self.grid.seq(j), nj)))
            .max()
            .unwrap_or(0)
    }

    /// `Σ |c| · ‖basis‖_∞`, a bound on `sup |S_N|`.
    pub fn value_bound(&self) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.len());
        for (n, c) in &self.entries {
            let norm = match self.mode {
                CoeffMode::Haar => (haar_sup_norm_sq(&self.grid, n)? as f64).sqrt(),
                CoeffMode::Price => 1.0,
            };
            terms.push(c.norm() * norm);
        }
        Ok(crate::reduce::pairwise_sum_f64(&terms))
    }

    fn check_guard(&self) -> Result<()> {
        let bound = self.value_bound()?;
        if bound > VALUE_GUARD {
            return Err(Error::ValueGuard { bound });
        }
        Ok(())
    }

    fn require(&self, mode: CoeffMode) -> Result<()> {
        if self.mode != mode {
            return Err(Error::ModeMismatch {
                expected: mode.name(),
                got: self.mode.name(),
            });
        }
        Ok(())
    }
}

enum Decoded {
    Haar(Vec<HaarIndex>),
    Price(Vec<PriceIndex>),
}

struct Term {
    coeff: Complex64,
    idx: Decoded,
}

/// Per-cell state while building a partial sum: the terms that do not vanish on
/// the cell, with their value once it is constant there.
type Live = Vec<(usize, Option<Complex64>)>;

/// `S_N = Σ_{n̄ < Ñ} c_n̄ · φ_n̄` as a step function, resolved at rank `N` or
/// earlier.
pub fn partial_sum(coeffs: &CoeffMap, n: u32) -> Result<StepFunction<Complex64>> {
    let grid = coeffs.grid.clone();
    grid.check_rank(n)?;
    coeffs.check_guard()?;
    let mut terms = Vec::new();
    for (idx, &c) in &coeffs.entries {
        let fits = idx
            .0
            .iter()
            .enumerate()
            .all(|(j, &nj)| block_of(grid.seq(j), nj) <= n);
        if !fits || c.is_zero() {
            continue;
        }
        let idx = match coeffs.mode {
            CoeffMode::Haar => Decoded::Haar(decode_haar_multi(&grid, idx)?),
            CoeffMode::Price => Decoded::Price(decode_price_multi(&grid, idx)?),
        };
        terms.push(Term { coeff: c, idx });
    }
    let live: Live = (0..terms.len()).map(|t| (t, None)).collect();
    let g = grid.clone();
    StepFunction::build_scoped(grid, n, live, move |rank, cell, parent: &Live| {
        let mut next: Live = Vec::with_capacity(parent.len());
        let mut open = false;
        for &(t, known) in parent {
            if known.is_some() {
                next.push((t, known));
                continue;
            }
            let term = &terms[t];
            let v = match &term.idx {
                Decoded::Haar(h) => tensor_haar_on_cell(&g, h, rank, cell),
                Decoded::Price(p) => tensor_price_on_cell(&g, p, rank, cell),
            };
            match v {
                Some(u) if u.is_zero() => {}
                Some(u) => next.push((t, Some(term.coeff * u.to_complex()))),
                None => {
                    open = true;
                    next.push((t, None));
                }
            }
        }
        if open {
            Refine::Split(next)
        } else {
            let vals: Vec<Complex64> = next.iter().map(|&(_, v)| v.unwrap()).collect();
            Refine::Done(pairwise_sum(&vals))
        }
    })
}

/// Where an additive function's values come from.
#[derive(Debug, Clone, PartialEq)]
pub enum AdditiveSource {
    Series(CoeffMap),
    Table,
}

/// An additive cell function `Ψ(I) = ∫_I density`.
#[derive(Debug, Clone)]
pub struct AdditiveFn {
    source: AdditiveSource,
    density: StepFunction<Complex64>,
    exact: Option<StepFunction<Frac>>,
    rank: u32,
}

impl AdditiveFn {
    /// From values on the rank-`rank` cells, keyed by cell index; missing cells are 0.
    pub fn from_table(grid: Arc<GridConfig>, rank: u32, values: &HashMap<Vec<u64>, Complex64>) -> Result<Self> {
        let mu = grid.cell_measure_f64(rank);
        let density = StepFunction::from_uniform(grid, rank, |idx| values.get(idx).copied().unwrap_or_default() / mu)?;
        Ok(AdditiveFn {
            source: AdditiveSource::Table,
            density,
            exact: None,
            rank,
        })
    }

    /// From a density, `Ψ(I) = ∫_I density`.
    pub fn from_density(density: StepFunction<Complex64>) -> Self {
        AdditiveFn {
            source: AdditiveSource::Table,
            rank: density.depth(),
            density,
            exact: None,
        }
    }

    /// From an exact real density, e.g. an integer-valued partial sum.
    pub fn from_exact_density(density: StepFunction<Frac>) -> Self {
        AdditiveFn {
            source: AdditiveSource::Table,
            rank: density.depth(),
            density: density.to_complex(),
            exact: Some(density),
        }
    }

    pub fn grid(&self) -> &Arc<GridConfig> {
        self.density.grid()
    }

    pub fn source(&self) -> &AdditiveSource {
        &self.source
    }

    /// Rank from which `Ψ(I)/μ(I)` no longer changes under refinement.
    pub fn stabilization_rank(&self) -> u32 {
        self.rank
    }

    pub fn exact_density(&self) -> Option<&StepFunction<Frac>> {
        self.exact.as_ref()
    }
}

pub fn additive_fn(coeffs: &CoeffMap) -> Result<AdditiveFn> {
    let rank = coeffs.stabilization_rank();
    Ok(AdditiveFn {
        density: partial_sum(coeffs, rank)?,
        source: AdditiveSource::Series(coeffs.clone()),
        exact: None,
        rank,
    })
}

/// `Ψ(box)`; mixed-rank boxes are summed over their uniform decomposition.
pub fn psi_eval(psi: &AdditiveFn, bx: &Cell) -> Result<Complex64> {
    let grid = psi.grid();
    if bx.uniform_rank().is_some() {
        return psi.density.integral_over(bx);
    }
    let parts = decompose_box(grid, bx)?;
    let vals: Vec<Complex64> = parts
        .cells
        .iter()
        .map(|c| psi.density.integral_over(c))
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&vals))
}

/// Exact `Ψ(box)` when the function carries an exact density.
pub fn psi_eval_exact(psi: &AdditiveFn, bx: &Cell) -> Result<Option<Frac>> {
    match &psi.exact {
        Some(d) => Ok(Some(d.integral_over_exact(bx)?)),
        None => Ok(None),
    }
}

/// `Ψ′`, the stabilized limit of `Ψ(I_k)/μ(I_k)`.
pub fn derivative(psi: &AdditiveFn) -> StepFunction<Complex64> {
    psi.density.clone()
}

trait Average: Clone + Send + Sync {
    fn mean(xs: Vec<Self>) -> Self;
    fn magnitude(&self) -> Frac;
}

impl Average for Complex64 {
    fn mean(xs: Vec<Self>) -> Self {
        let n = xs.len() as f64;
        pairwise_sum(&xs) / n
    }
    fn magnitude(&self) -> Frac {
        crate::f64_to_frac(self.norm())
    }
}

impl Average for Frac {
    fn mean(xs: Vec<Self>) -> Self {
        let n = xs.len();
        xs.into_iter().fold(Frac::zero(), |a, b| a + b) / Frac::from_integer(n.into())
    }
    fn magnitude(&self) -> Frac {
        self.abs()
    }
}

enum AvgTree<T> {
    Leaf(T),
    Split(T, Vec<AvgTree<T>>),
}

impl<T: Average> AvgTree<T> {
    fn build(node: &Node<T>) -> Self {
        match node {
            Node::Leaf(v) => AvgTree::Leaf(v.clone()),
            Node::Split(ch) => {
                let kids: Vec<AvgTree<T>> = ch.iter().map(AvgTree::build).collect();
                let avg = T::mean(kids.iter().map(|k| k.avg().clone()).collect());
                AvgTree::Split(avg, kids)
            }
        }
    }

    fn avg(&self) -> &T {
        match self {
            AvgTree::Leaf(v) | AvgTree::Split(v, _) => v,
        }
    }

    fn running_max(&self, above: &Frac) -> Node<Frac> {
        let here = self.avg().magnitude();
        let m = if &here > above { here } else { above.clone() };
        match self {
            AvgTree::Leaf(_) => Node::Leaf(m),
            AvgTree::Split(_, kids) => Node::Split(kids.iter().map(|k| k.running_max(&m)).collect()),
        }
    }
}

fn majorant_of<T: Average>(density: &StepFunction<T>) -> StepFunction<Frac> {
    let tree = AvgTree::build(density.root());
    StepFunction::from_root(density.grid().clone(), tree.running_max(&Frac::zero()))
}

/// `Ψ*(x) = max |Ψ(I)|/μ(I)` over the uniform-rank cells `I ∋ x`. Exact when
/// the function carries an exact density; otherwise the exact value of the
/// floating-point averages.
pub fn majorant(psi: &AdditiveFn) -> StepFunction<Frac> {
    match &psi.exact {
        Some(d) => majorant_of(d),
        None => majorant_of(&psi.density),
    }
}

/// Direction of the per-block coefficient transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `b_p̄ = Σ_l̄ conj(γ^{l̄}_{p̄}) a_l̄`.
    HaarToPrice,
    /// `a_l̄ = Σ_k̄ b_k̄ γ^{l̄}_{k̄}`.
    PriceToHaar,
}

struct GammaCache {
    blocks: Vec<HashMap<u32, GammaBlock>>,
}

impl GammaCache {
    fn new(grid: &GridConfig) -> Self {
        GammaCache {
            blocks: vec![HashMap::new(); grid.dims()],
        }
    }

    fn get(&mut self, grid: &GridConfig, j: usize, s: u32) -> Result<&GammaBlock> {
        if !self.blocks[j].contains_key(&s) {
            let g = gamma_or_identity(grid.seq(j), s)?;
            self.blocks[j].insert(s, g);
        }
        Ok(&self.blocks[j][&s])
    }
}

/// Odometer step over a box of indices, last coordinate fastest.
fn advance(target: &mut [u64], ranges: &[(u64, u64)]) -> bool {
    for j in (0..target.len()).rev() {
        target[j] += 1;
        if target[j] < ranges[j].1 {
            return true;
        }
        target[j] = ranges[j].0;
    }
    false
}

/// Blocks of `n̄` per dimension and every multi-index of that tensor block.
pub(crate) fn block_range_multi(grid: &GridConfig, n: &MultiIndex) -> (Vec<u32>, Vec<MultiIndex>) {
    let blocks: Vec<u32> = n.0.iter().enumerate().map(|(j, &nj)| block_of(grid.seq(j), nj)).collect();
    let ranges: Vec<(u64, u64)> = blocks.iter().enumerate().map(|(j, &s)| block_range(grid.seq(j), s)).collect();
    let mut cur: Vec<u64> = ranges.iter().map(|r| r.0).collect();
    let mut all = vec![MultiIndex(cur.clone())];
    while advance(&mut cur, &ranges) {
        all.push(MultiIndex(cur.clone()));
    }
    (blocks, all)
}

/// Rewrites a Haar series in the Price basis or back, block by block. Output
/// maps list every index of each touched block.
pub fn price_coeffs_from_haar(coeffs: &CoeffMap, direction: Direction) -> Result<CoeffMap> {
    let (from, to) = match direction {
        Direction::HaarToPrice => (CoeffMode::Haar, CoeffMode::Price),
        Direction::PriceToHaar => (CoeffMode::Price, CoeffMode::Haar),
    };
    coeffs.require(from)?;
    let grid = coeffs.grid.clone();
    let d = grid.dims();
    let mut by_block: BTreeMap<Vec<u32>, Vec<(&MultiIndex, Complex64)>> = BTreeMap::new();
    for (n, &c) in &coeffs.entries {
        let s: Vec<u32> = n.0.iter().enumerate().map(|(j, &nj)| block_of(grid.seq(j), nj)).collect();
        by_block.entry(s).or_default().push((n, c));
    }
    let mut cache = GammaCache::new(&grid);
    let mut out = CoeffMap::new(grid.clone(), to);
    for (s, inputs) in by_block {
        let blocks: Vec<GammaBlock> = (0..d)
            .map(|j| cache.get(&grid, j, s[j]).cloned())
            .collect::<Result<_>>()?;
        let ranges: Vec<(u64, u64)> = (0..d).map(|j| block_range(grid.seq(j), s[j])).collect();
        let mut target = ranges.iter().map(|r| r.0).collect::<Vec<u64>>();
        loop {
            let terms: Vec<Complex64> = inputs
                .iter()
                .map(|(src, c)| {
                    let g = (0..d).fold(Complex64::new(1.0, 0.0), |acc, j| {
                        let off = blocks[j].offset;
                        let (t, u) = ((target[j] - off) as usize, (src.0[j] - off) as usize);
                        acc * match direction {
                            // row = Price index, column = Haar index
                            Direction::HaarToPrice => blocks[j].entries[t][u].conj(),
                            Direction::PriceToHaar => blocks[j].entries[u][t],
                        }
                    });
                    g * c
                })
                .collect();
            out.entries.insert(MultiIndex(target.clone()), pairwise_sum(&terms));
            if !advance(&mut target, &ranges) {
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::classical_to_generalized;
    use crate::PointCode;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn grid(p: u32, depth: u32, dims: usize) -> Arc<GridConfig> {
        Arc::new(GridConfig::uniform(p, depth, dims).unwrap())
    }

    #[test]
    fn trivial_partial_sums() {
        let g = grid(2, 3, 1);
        let empty = CoeffMap::haar(g.clone());
        assert_eq!(partial_sum(&empty, 2).unwrap(), StepFunction::constant(g.clone(), c(0.0)));
        let mut m = CoeffMap::haar(g.clone());
        m.insert(MultiIndex::zero(1), c(2.5)).unwrap();
        assert_eq!(partial_sum(&m, 3).unwrap(), StepFunction::constant(g.clone(), c(2.5)));
    }

    #[test]
    fn rademacher_partial_sum() {
        let g = grid(2, 3, 1);
        let mut m = CoeffMap::haar(g.clone());
        m.insert(MultiIndex::new(vec![classical_to_generalized(0, 1).unwrap()]), c(1.0))
            .unwrap();
        let s = partial_sum(&m, 1).unwrap();
        let vals: Vec<f64> = s.uniform_values(1).unwrap().iter().map(|(_, v)| v.re).collect();
        assert_eq!(vals, vec![1.0, -1.0]);
        assert_eq!(partial_sum(&m, 0).unwrap(), StepFunction::constant(g, c(0.0)));
    }

    #[test]
    fn stabilization_and_depth() {
        let g = grid(3, 3, 2);
        let mut m = CoeffMap::haar(g.clone());
        m.insert(MultiIndex::new(vec![4, 1]), c(1.0)).unwrap();
        assert_eq!(m.stabilization_rank(), 2);
        let a = partial_sum(&m, 2).unwrap();
        assert_eq!(a, partial_sum(&m, 3).unwrap());
        assert!(m.insert(MultiIndex::new(vec![27, 0]), c(1.0)).is_err());
    }

    #[test]
    fn additive_single_haar_term() {
        let g = grid(2, 3, 1);
        let mut m = CoeffMap::haar(g.clone());
        // χ_1^{(1)}: √2 on [0,1/4), -√2 on [1/4,1/2)
        m.insert(MultiIndex::new(vec![classical_to_generalized(1, 1).unwrap()]), c(1.0))
            .unwrap();
        let psi = additive_fn(&m).unwrap();
        let q = Cell::uniform(&g, 2, vec![0]).unwrap();
        let v = psi_eval(&psi, &q).unwrap();
        assert!((v.re - 2f64.sqrt() / 4.0).abs() < 1e-15);
        assert!(psi_eval(&psi, &Cell::unit(&g)).unwrap().norm() < 1e-15);
    }

    #[test]
    fn majorant_of_rademacher_is_one() {
        let g = grid(2, 3, 1);
        let mut m = CoeffMap::haar(g.clone());
        m.insert(MultiIndex::new(vec![1]), c(1.0)).unwrap();
        let psi = additive_fn(&m).unwrap();
        let star = majorant(&psi);
        for (_, v) in star.uniform_values(1).unwrap() {
            assert_eq!(v, Frac::from_integer(1.into()));
        }
    }

    #[test]
    fn majorant_exact_sees_ancestors() {
        let g = grid(2, 2, 1);
        // density (4, 0, 0, 0): |Ψ|/μ over [0,1/2) is 2, over [0,1) is 1
        let d = StepFunction::from_uniform(g.clone(), 2, |idx| Frac::from_integer(if idx[0] == 0 { 4 } else { 0 }.into()))
            .unwrap();
        let psi = AdditiveFn::from_exact_density(d);
        let star = majorant(&psi);
        let vals: Vec<Frac> = star.uniform_values(2).unwrap().into_iter().map(|(_, v)| v).collect();
        let ints: Vec<i64> = vals.iter().map(|v| v.to_integer().try_into().unwrap()).collect();
        assert_eq!(ints, vec![4, 2, 1, 1]);
    }

    #[test]
    fn transform_round_trip_ternary() {
        let g = grid(3, 2, 1);
        let mut m = CoeffMap::haar(g.clone());
        for (n, v) in [(0u64, 0.5), (1, 1.0), (2, -0.25), (4, 2.0), (8, 0.75)] {
            m.insert(MultiIndex::new(vec![n]), Complex64::new(v, v / 3.0)).unwrap();
        }
        let b = price_coeffs_from_haar(&m, Direction::HaarToPrice).unwrap();
        assert_eq!(b.mode(), CoeffMode::Price);
        let back = price_coeffs_from_haar(&b, Direction::PriceToHaar).unwrap();
        for n in 0..9u64 {
            let idx = MultiIndex::new(vec![n]);
            assert!((back.get(&idx) - m.get(&idx)).norm() < 1e-9, "n={n}");
        }
        let sa = partial_sum(&m, 2).unwrap();
        let sb = partial_sum(&b, 2).unwrap();
        assert!(sa.sup_distance(&sb).unwrap() < 1e-9);
        assert!(price_coeffs_from_haar(&m, Direction::PriceToHaar).is_err());
    }

    #[test]
    fn constant_term_transforms_to_itself() {
        let g = grid(2, 2, 2);
        let mut m = CoeffMap::haar(g);
        m.insert(MultiIndex::zero(2), c(3.0)).unwrap();
        let b = price_coeffs_from_haar(&m, Direction::HaarToPrice).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.get(&MultiIndex::zero(2)), c(3.0));
    }

    #[test]
    fn value_guard_refuses_huge_series() {
        let g = grid(2, 3, 1);
        let mut m = CoeffMap::haar(g);
        m.insert(MultiIndex::new(vec![1]), c(1e17)).unwrap();
        assert!(matches!(partial_sum(&m, 1), Err(Error::ValueGuard { .. })));
    }

    #[test]
    fn derivative_matches_pointwise_sum() {
        let g = grid(2, 3, 1);
        let mut m = CoeffMap::haar(g.clone());
        m.insert(MultiIndex::new(vec![0]), c(1.0)).unwrap();
        m.insert(MultiIndex::new(vec![5]), c(2.0)).unwrap();
        let d = derivative(&additive_fn(&m).unwrap());
        let pt = PointCode::one_dim(g.seq(0), vec![1, 0, 1]).unwrap();
        // χ_5: k=2, r=1, support [1/4,1/2): point 5/8 is outside
        assert_eq!(*d.eval(&pt).unwrap(), c(1.0));
        let pt = PointCode::one_dim(g.seq(0), vec![0, 1, 1]).unwrap();
        assert_eq!(*d.eval(&pt).unwrap(), c(1.0 - 4.0));
    }
}
