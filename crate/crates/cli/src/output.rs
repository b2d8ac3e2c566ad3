//! Rendering of reports as JSON documents or CSV tables.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use num_complex::Complex64;
use padic_core::{frac_to_f64, Frac};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// One CSV table. Several tables in one output are separated by a blank line,
/// each opened by a `# title` line.
#[derive(Debug, Clone)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: impl Into<String>, header: Vec<String>) -> Self {
        Table {
            title: title.into(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn render_tables(tables: &[Table]) -> String {
    let mut out = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        if tables.len() > 1 {
            let _ = writeln!(out, "# {}", t.title);
        }
        let _ = writeln!(out, "{}", t.header.join(","));
        for row in &t.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
    }
    out
}

pub fn render_json(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("json values always serialize");
    s.push('\n');
    s
}

pub fn float(x: f64) -> String {
    format!("{x}")
}

pub fn frac(v: &Frac) -> String {
    float(frac_to_f64(v))
}

pub fn exact(v: &Frac) -> String {
    if v.is_integer() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

pub fn complex(z: Complex64) -> [String; 2] {
    [float(z.re), float(z.im)]
}

/// Writes to `path`, or to standard output when none is given.
pub fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_carry_titles_only_when_several() {
        let mut a = Table::new("a", vec!["x".into(), "y".into()]);
        a.push(vec!["1".into(), "2".into()]);
        assert_eq!(render_tables(std::slice::from_ref(&a)), "x,y\n1,2\n");
        let two = render_tables(&[a.clone(), a]);
        assert_eq!(two, "# a\nx,y\n1,2\n\n# a\nx,y\n1,2\n");
    }

    #[test]
    fn rationals_print_exactly() {
        assert_eq!(exact(&Frac::new(3.into(), 6.into())), "1/2");
        assert_eq!(exact(&Frac::from_integer(4.into())), "4");
        assert_eq!(frac(&Frac::new(1.into(), 4.into())), "0.25");
    }
}
