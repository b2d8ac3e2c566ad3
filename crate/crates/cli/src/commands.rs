use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use num_complex::Complex64;
use padic_core::counterexample::default_boxes;
use padic_core::json::{coeffs_from_json, complex_value, frac_value, number, SCHEMA_VERSION};
use padic_core::{
    additive_fn, check_family, decompose_box, example_end_to_end, gamma_matrix, partial_sum, recover_additive,
    recover_haar_coeff, recover_price_coeff, tensor_haar_step, tensor_price_step, Cell, ExampleSpec, GammaBlock,
    GridConfig, HFamily, MultiIndex, RecoveryReport, StepFunction, Tolerances,
};
use serde_json::{json, Value};

use crate::output::{self, Format, Table};
use crate::{parse, Cli, Command, Global};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Hypothesis,
    Failed,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Hypothesis => 2,
            Status::Failed => 3,
        }
    }
}

pub fn run(cli: &Cli) -> Result<Status> {
    let g = &cli.global;
    match &cli.command {
        Command::Systems(a) => systems(g, a),
        Command::Recover(a) => recover(g, a),
        Command::CheckFamily(a) => check_family_cmd(g, a),
        Command::Counterexample(a) => counterexample(g, a),
        Command::Decompose(a) => decompose(g, a),
    }
}

fn read(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {what} file {}", path.display()))
}

fn load_grid(g: &Global) -> Result<Option<Arc<GridConfig>>> {
    let Some(path) = &g.grid else { return Ok(None) };
    let text = read(path, "grid")?;
    let grid = GridConfig::from_json(&text).with_context(|| format!("grid file {}", path.display()))?;
    Ok(Some(Arc::new(grid)))
}

fn require_grid(g: &Global) -> Result<Arc<GridConfig>> {
    load_grid(g)?.context("--grid is required for this command")
}

fn tolerances(g: &Global) -> Result<Tolerances> {
    match g.tolerance {
        None => Ok(Tolerances::default()),
        Some(t) if t.is_finite() && t >= 0.0 => Ok(Tolerances::uniform(t)),
        Some(t) => bail!("--tolerance must be a nonnegative number, got {t}"),
    }
}

fn write(g: &Global, doc: Value, tables: impl FnOnce() -> Vec<Table>) -> Result<()> {
    let (path, format) = g.destination();
    let text = match format {
        Format::Json => output::render_json(&doc),
        Format::Csv => output::render_tables(&tables()),
    };
    output::emit(&text, path.as_deref())
}

fn bounds_columns(dims: usize) -> Vec<String> {
    let lo = (0..dims).map(|j| format!("lo_{j}"));
    let hi = (0..dims).map(|j| format!("hi_{j}"));
    lo.chain(hi).collect()
}

fn bounds_row(cell: &Cell, grid: &GridConfig) -> Vec<String> {
    let b = cell.bounds(grid);
    let lo = b.iter().map(|(l, _)| output::frac(l));
    let hi = b.iter().map(|(_, h)| output::frac(h));
    lo.chain(hi).collect()
}

fn bounds_json(cell: &Cell, grid: &GridConfig) -> (Value, Value) {
    let b = cell.bounds(grid);
    (
        Value::Array(b.iter().map(|(l, _)| frac_value(l)).collect()),
        Value::Array(b.iter().map(|(_, h)| frac_value(h)).collect()),
    )
}

/// Row-major position of a uniform cell among the cells of its rank.
fn flat_index(cell: &Cell, grid: &GridConfig) -> u64 {
    let k = cell.max_rank();
    cell.index()
        .iter()
        .enumerate()
        .fold(0u64, |acc, (j, &n)| acc * grid.modulus(j, k).expect("rank within depth") + n)
}

// ---------------------------------------------------------------- systems

#[derive(Debug, Args)]
pub struct SystemsArgs {
    /// Generalized Haar indices, e.g. `0..7` (inclusive) or `1,4,9`.
    #[arg(long)]
    pub haar: Option<String>,

    /// Price indices, same syntax as `--haar`.
    #[arg(long)]
    pub price: Option<String>,

    /// Gamma block ranks, comma separated.
    #[arg(long = "gamma-block")]
    pub gamma_block: Option<String>,

    /// Dimension whose branching sequence is used.
    #[arg(long, default_value_t = 0)]
    pub dim: usize,
}

struct Dumped {
    system: &'static str,
    index: u64,
    f: StepFunction<Complex64>,
}

fn gamma_json(b: &GammaBlock) -> Value {
    json!({
        "block_rank": b.block_rank,
        "offset": b.offset,
        "size": b.size(),
        "unitarity_defect": number(b.unitarity_defect()),
        "entries": b.entries.iter().map(|row| row.iter().map(|z| complex_value(*z)).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

fn systems(g: &Global, a: &SystemsArgs) -> Result<Status> {
    let grid = require_grid(g)?;
    if a.dim >= grid.dims() {
        bail!("--dim {} is out of range for a {}-dimensional grid", a.dim, grid.dims());
    }
    if a.haar.is_none() && a.price.is_none() && a.gamma_block.is_none() {
        bail!("nothing to dump: give --haar, --price or --gamma-block");
    }
    let seq = grid.seq(a.dim).clone();
    let line = Arc::new(GridConfig::new(vec![seq.factors().to_vec()])?);

    let mut funcs = Vec::new();
    for (system, spec) in [("haar", &a.haar), ("price", &a.price)] {
        let Some(spec) = spec else { continue };
        for n in parse::index_list(spec).with_context(|| format!("--{system}"))? {
            let idx = MultiIndex::new(vec![n]);
            let f = match system {
                "haar" => tensor_haar_step(&line, &idx),
                _ => tensor_price_step(&line, &idx),
            }
            .with_context(|| format!("{system} index {n}"))?;
            funcs.push(Dumped { system, index: n, f });
        }
    }
    let blocks: Vec<GammaBlock> = match &a.gamma_block {
        Some(spec) => parse::u32_list(spec)?
            .into_iter()
            .map(|k| gamma_matrix(&seq, k).with_context(|| format!("gamma block {k}")))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };

    // every table is sampled on the same uniform rank
    let rank = funcs.iter().map(|d| d.f.depth()).max().unwrap_or(0);
    let samples: Vec<Vec<(Cell, Complex64)>> =
        funcs.iter().map(|d| d.f.uniform_values(rank)).collect::<padic_core::Result<_>>()?;

    let cells: Vec<Value> = samples
        .first()
        .map(|s| {
            s.iter()
                .map(|(c, _)| {
                    let (lo, hi) = bounds_json(c, &line);
                    json!({"flat_index": flat_index(c, &line), "lo": lo, "hi": hi})
                })
                .collect()
        })
        .unwrap_or_default();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "grid": grid.as_ref(),
        "dim": a.dim,
        "rank": rank,
        "cells": cells,
        "functions": funcs.iter().zip(&samples).map(|(d, s)| json!({
            "system": d.system,
            "index": d.index,
            "values": s.iter().map(|(_, z)| complex_value(*z)).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "gamma": blocks.iter().map(gamma_json).collect::<Vec<_>>(),
    });

    write(g, doc, || {
        let mut tables = Vec::new();
        for (d, s) in funcs.iter().zip(&samples) {
            let mut header = vec!["flat_index".to_string()];
            header.extend(bounds_columns(1));
            header.extend(["re".to_string(), "im".to_string()]);
            let mut t = Table::new(format!("{} {}", d.system, d.index), header);
            for (c, z) in s {
                let mut row = vec![flat_index(c, &line).to_string()];
                row.extend(bounds_row(c, &line));
                row.extend(output::complex(*z));
                t.push(row);
            }
            tables.push(t);
        }
        for b in &blocks {
            let header = ["k", "l", "re", "im"].map(String::from).to_vec();
            let mut t = Table::new(format!("gamma {}", b.block_rank), header);
            for (r, row) in b.entries.iter().enumerate() {
                for (c, z) in row.iter().enumerate() {
                    let [re, im] = output::complex(*z);
                    t.push(vec![(b.offset + r as u64).to_string(), (b.offset + c as u64).to_string(), re, im]);
                }
            }
            tables.push(t);
        }
        tables
    })?;
    Ok(Status::Ok)
}

// ---------------------------------------------------------------- recover

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Generalized Haar coefficients.
    Haar,
    /// Price coefficients, with the cross-check through Haar coefficients.
    Price,
    /// Values of the additive function on boxes.
    Additive,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Coefficient file (JSON: mode, grid, entries).
    #[arg(long, value_name = "FILE")]
    pub series: PathBuf,

    /// Family of cutoff functions (JSON: grid, constant_c, members).
    #[arg(long, value_name = "FILE")]
    pub family: PathBuf,

    #[arg(long, value_enum, default_value_t = Mode::Haar)]
    pub mode: Mode,

    /// Target multi-index, components separated by commas. Repeatable.
    #[arg(long)]
    pub index: Vec<String>,

    /// Target box for `--mode additive`, as `rank:index` per dimension. Repeatable.
    #[arg(long = "box")]
    pub boxes: Vec<String>,
}

fn recover(g: &Global, a: &RecoverArgs) -> Result<Status> {
    let coeffs = coeffs_from_json(&read(&a.series, "series")?).with_context(|| format!("{}", a.series.display()))?;
    let fam = HFamily::from_json(&read(&a.family, "family")?).with_context(|| format!("{}", a.family.display()))?;
    let grid = coeffs.grid().clone();
    if let Some(declared) = load_grid(g)? {
        if *declared != *grid {
            bail!("the series grid differs from --grid");
        }
    }
    if **fam.grid() != *grid {
        bail!("the family grid differs from the series grid");
    }
    let tol = tolerances(g)?;

    let reports: Vec<RecoveryReport> = match a.mode {
        Mode::Haar | Mode::Price => {
            if a.index.is_empty() {
                bail!("--index is required for --mode {:?}", a.mode);
            }
            let f = partial_sum(&coeffs, grid.depth())?;
            a.index
                .iter()
                .map(|s| {
                    let n = parse::multi_index(s, grid.dims())?;
                    let rep = if a.mode == Mode::Haar {
                        recover_haar_coeff(&f, &n, &fam, &tol)
                    } else {
                        recover_price_coeff(&f, &n, &fam, &tol)
                    };
                    rep.with_context(|| format!("index {s}"))
                })
                .collect::<Result<_>>()?
        }
        Mode::Additive => {
            let psi = additive_fn(&coeffs)?;
            let boxes: Vec<Cell> = if a.boxes.is_empty() {
                vec![Cell::unit(&grid)]
            } else {
                a.boxes.iter().map(|s| parse::cell(s, &grid)).collect::<Result<_>>()?
            };
            boxes
                .iter()
                .map(|b| recover_additive(&psi, &fam, b, &tol).with_context(|| format!("box {b}")))
                .collect::<Result<_>>()?
        }
    };

    let verdict = reports.iter().all(RecoveryReport::verdict);
    let hypotheses_ok = reports.iter().all(|r| r.hypotheses_ok);
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "mode": format!("{:?}", a.mode).to_lowercase(),
        "grid": grid.as_ref(),
        "family_size": fam.len(),
        "reports": reports.iter().map(RecoveryReport::to_json).collect::<Vec<_>>(),
        "hypotheses_ok": hypotheses_ok,
        "verdict": verdict,
    });
    write(g, doc, || {
        let header = ["target", "m", "re", "im", "error"].map(String::from).to_vec();
        let mut t = Table::new("estimates", header);
        for r in &reports {
            for (m, (z, e)) in r.estimates.iter().zip(&r.errors).enumerate() {
                let [re, im] = output::complex(*z);
                t.push(vec![format!("\"{}\"", r.target), (m + 1).to_string(), re, im, output::float(*e)]);
            }
        }
        vec![t]
    })?;

    Ok(if !hypotheses_ok {
        for r in &reports {
            if let Err(e) = r.require_hypotheses() {
                eprintln!("{}: {e}", r.target);
            }
        }
        Status::Hypothesis
    } else if !verdict {
        Status::Failed
    } else {
        Status::Ok
    })
}

// ---------------------------------------------------------------- check-family

#[derive(Debug, Args)]
pub struct CheckFamilyArgs {
    #[arg(long, value_name = "FILE")]
    pub family: PathBuf,
}

fn check_family_cmd(g: &Global, a: &CheckFamilyArgs) -> Result<Status> {
    let fam = HFamily::from_json(&read(&a.family, "family")?).with_context(|| format!("{}", a.family.display()))?;
    if let Some(declared) = load_grid(g)? {
        if *declared != **fam.grid() {
            bail!("the family grid differs from --grid");
        }
    }
    let rep = check_family(&fam)?;
    let mut doc = rep.to_json();
    doc["schema_version"] = json!(SCHEMA_VERSION);
    doc["ok"] = json!(rep.ok());
    write(g, doc, || {
        let header = ["m", "c_min", "lambda_min"].map(String::from).to_vec();
        let mut t = Table::new("members", header);
        for (m, (c, l)) in rep.c_min.iter().zip(&rep.lambdas).enumerate() {
            let lmin = l.iter().min().map(output::exact).unwrap_or_default();
            t.push(vec![(m + 1).to_string(), c.as_ref().map(output::exact).unwrap_or_default(), lmin]);
        }
        vec![t]
    })?;
    Ok(if rep.ok() { Status::Ok } else { Status::Hypothesis })
}

// ---------------------------------------------------------------- counterexample

#[derive(Debug, Args)]
pub struct CounterexampleArgs {
    /// Number of blocks kept.
    #[arg(long, default_value_t = 5)]
    pub nmax: u32,

    /// Right-edge widths `[1 - 2^-j, 1]` to check, comma separated. Default `1..nmax-1`.
    #[arg(long)]
    pub j: Option<String>,

    /// Boxes on which the additive function is recovered. Default `[0,1]` and `[0,1/2]`.
    #[arg(long = "box")]
    pub boxes: Vec<String>,
}

fn counterexample(g: &Global, a: &CounterexampleArgs) -> Result<Status> {
    let spec = ExampleSpec::new(a.nmax).context("--nmax")?;
    let js = match &a.j {
        Some(s) => parse::u32_list(s).context("--j")?,
        None => Vec::new(),
    };
    let boxes = if a.boxes.is_empty() {
        default_boxes()
    } else {
        let grid = spec.grid()?;
        a.boxes.iter().map(|s| parse::cell(s, &grid)).collect::<Result<_>>()?
    };
    let rep = example_end_to_end(&spec, &js, &boxes, &tolerances(g)?)?;
    write(g, rep.to_json(), || {
        let header = ["j", "m", "n", "i", "value", "bound", "holds"].map(String::from).to_vec();
        let mut fails = Table::new("failures", header);
        for f in &rep.failures {
            for e in &f.entries {
                fails.push(vec![
                    f.j.to_string(),
                    e.m.to_string(),
                    e.n.to_string(),
                    e.i.to_string(),
                    output::exact(&e.value),
                    output::exact(&e.bound),
                    e.holds.to_string(),
                ]);
            }
        }
        let header = ["m", "tail", "bound", "holds"].map(String::from).to_vec();
        let mut success = Table::new("success", header);
        for e in &rep.success.entries {
            success.push(vec![e.m.to_string(), output::exact(&e.tail), output::exact(&e.bound), e.holds.to_string()]);
        }
        vec![fails, success]
    })?;
    Ok(if rep.pass() { Status::Ok } else { Status::Failed })
}

// ---------------------------------------------------------------- decompose

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Box as `rank:index` per dimension, e.g. `1:0,2:3`.
    #[arg(long = "box")]
    pub bx: String,
}

fn decompose(g: &Global, a: &DecomposeArgs) -> Result<Status> {
    let grid = require_grid(g)?;
    let bx = parse::cell(&a.bx, &grid)?;
    let part = decompose_box(&grid, &bx)?;
    let dims = grid.dims();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "grid": grid.as_ref(),
        "box": {"ranks": bx.ranks(), "index": bx.index()},
        "rank": bx.max_rank(),
        "measure": frac_value(&bx.measure(&grid)),
        "cells": part.cells.iter().map(|c| {
            let (lo, hi) = bounds_json(c, &grid);
            json!({"flat_index": flat_index(c, &grid), "index": c.index(), "lo": lo, "hi": hi})
        }).collect::<Vec<_>>(),
    });
    write(g, doc, || {
        let mut header = vec!["flat_index".to_string()];
        header.extend((0..dims).map(|j| format!("index_{j}")));
        header.extend(bounds_columns(dims));
        let mut t = Table::new("cells", header);
        for c in &part.cells {
            let mut row = vec![flat_index(c, &grid).to_string()];
            row.extend(c.index().iter().map(u64::to_string));
            row.extend(bounds_row(c, &grid));
            t.push(row);
        }
        vec![t]
    })?;
    Ok(Status::Ok)
}
