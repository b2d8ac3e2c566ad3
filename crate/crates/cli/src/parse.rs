//! Parsers for index lists, ranges and boxes given on the command line.

use anyhow::{bail, Context, Result};
use padic_core::{Cell, GridConfig, MultiIndex};

/// `7`, `0..7` (inclusive), `0..=7`, or comma-separated mixtures such as `1,3,5..8`.
pub fn index_list(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let lo: u64 = a.trim().parse().with_context(|| format!("bad range start in {part:?}"))?;
            let hi: u64 = b.trim().parse().with_context(|| format!("bad range end in {part:?}"))?;
            if hi < lo {
                bail!("empty range {part:?}");
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().with_context(|| format!("bad index {part:?}"))?);
        }
    }
    if out.is_empty() {
        bail!("no indices given in {text:?}");
    }
    Ok(out)
}

/// A comma-separated list of small integers.
pub fn u32_list(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().with_context(|| format!("bad integer {p:?}")))
        .collect()
}

/// One multi-index, dimensions separated by commas: `3` or `3,1`.
pub fn multi_index(text: &str, dims: usize) -> Result<MultiIndex> {
    let parts: Vec<u64> = text
        .split(',')
        .map(str::trim)
        .map(|p| p.parse().with_context(|| format!("bad index component {p:?} in {text:?}")))
        .collect::<Result<_>>()?;
    if parts.len() != dims {
        bail!("index {text:?} has {} components, the grid has {dims} dimensions", parts.len());
    }
    Ok(MultiIndex::new(parts))
}

/// A box as `rank:index` per dimension, comma separated: `1:0` or `2:3,1:0`.
/// A leading `r` on the rank is accepted, matching how cells are displayed.
pub fn cell(text: &str, grid: &GridConfig) -> Result<Cell> {
    let mut ranks = Vec::new();
    let mut index = Vec::new();
    for part in text.split(',').map(str::trim) {
        let Some((k, n)) = part.split_once(':') else {
            bail!("box component {part:?} is not of the form rank:index");
        };
        let k = k.trim().trim_start_matches('r');
        ranks.push(k.parse::<u32>().with_context(|| format!("bad rank in {part:?}"))?);
        index.push(n.trim().parse::<u64>().with_context(|| format!("bad index in {part:?}"))?);
    }
    if ranks.len() != grid.dims() {
        bail!("box {text:?} has {} components, the grid has {} dimensions", ranks.len(), grid.dims());
    }
    Cell::new(grid, ranks, index).with_context(|| format!("box {text:?}"))
}
