//! Serde helpers and file formats.
//!
//! Rationals are written as `[num, den]` with both parts as decimal strings and
//! read back from either strings or JSON integers. Complex numbers are `[re, im]`.
//! Integral floats are written without a fractional part.

use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::Zero;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::{Cell, GridConfig};
use crate::series::{CoeffMap, CoeffMode};
use crate::systems::MultiIndex;
use crate::Frac;

/// Version tag carried by every report.
pub const SCHEMA_VERSION: u32 = 1;

/// A float as a JSON number, integral values as integers.
pub fn number(x: f64) -> Value {
    if x.is_finite() && x.fract() == 0.0 && x.abs() < 9.007_199_254_740_992e15 {
        Value::from(x as i64)
    } else {
        serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
    }
}

pub fn frac_value(v: &Frac) -> Value {
    Value::Array(vec![Value::String(v.numer().to_string()), Value::String(v.denom().to_string())])
}

fn big_from_value(v: &Value) -> std::result::Result<BigInt, String> {
    match v {
        Value::String(s) => BigInt::from_str(s.trim()).map_err(|e| format!("bad integer {s:?}: {e}")),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(BigInt::from(i))
            } else if let Some(u) = n.as_u64() {
                Ok(BigInt::from(u))
            } else {
                Err(format!("not an integer: {n}"))
            }
        }
        other => Err(format!("expected an integer, got {other}")),
    }
}

/// Parses `[num, den]`, a bare integer, or an integer string.
pub fn frac_from_value(v: &Value) -> std::result::Result<Frac, String> {
    match v {
        Value::Array(parts) if parts.len() == 2 => {
            let num = big_from_value(&parts[0])?;
            let den = big_from_value(&parts[1])?;
            if den.is_zero() {
                return Err("zero denominator".into());
            }
            Ok(Frac::new(num, den))
        }
        Value::Array(parts) => Err(format!("rational needs 2 parts, got {}", parts.len())),
        other => big_from_value(other).map(Frac::from_integer),
    }
}

pub fn complex_value(z: Complex64) -> Value {
    Value::Array(vec![number(z.re), number(z.im)])
}

pub mod frac {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Frac, s: S) -> std::result::Result<S::Ok, S::Error> {
        frac_value(v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Frac, D::Error> {
        let v = Value::deserialize(d)?;
        frac_from_value(&v).map_err(D::Error::custom)
    }
}

pub mod frac_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Frac], s: S) -> std::result::Result<S::Ok, S::Error> {
        Value::Array(v.iter().map(frac_value).collect()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Frac>, D::Error> {
        let v = Vec::<Value>::deserialize(d)?;
        v.iter().map(|x| frac_from_value(x).map_err(D::Error::custom)).collect()
    }
}

pub mod frac_opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<Frac>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_ref().map_or(Value::Null, frac_value).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Frac>, D::Error> {
        match Value::deserialize(d)? {
            Value::Null => Ok(None),
            v => frac_from_value(&v).map(Some).map_err(D::Error::custom),
        }
    }
}

pub mod complex {
    use super::*;

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
        complex_value(*z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

pub mod complex_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
        Value::Array(v.iter().map(|z| complex_value(*z)).collect()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Complex64>, D::Error> {
        let v = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(v.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

pub mod float_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        Value::Array(v.iter().map(|x| number(*x)).collect()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        Vec::<f64>::deserialize(d)
    }
}

fn parse_err(context: &str, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{context}: {msg}"))
}

/// Serializes a coefficient map as `{"mode", "grid", "entries": [[[n..], re, im], ..]}`.
pub fn coeffs_to_json(coeffs: &CoeffMap) -> String {
    let entries: Vec<Value> = coeffs
        .iter()
        .map(|(n, z)| Value::Array(vec![serde_json::json!(n.0), number(z.re), number(z.im)]))
        .collect();
    let doc = serde_json::json!({
        "mode": coeffs.mode().name(),
        "grid": coeffs.grid().as_ref(),
        "entries": entries,
    });
    serde_json::to_string_pretty(&doc).expect("json")
}

pub fn coeffs_from_json(text: &str) -> Result<CoeffMap> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        mode: CoeffMode,
        grid: GridConfig,
        entries: Vec<(Vec<u64>, f64, f64)>,
    }
    let doc: Doc = serde_json::from_str(text).map_err(|e| parse_err("coefficient file", e))?;
    let mut map = CoeffMap::new(Arc::new(doc.grid), doc.mode);
    for (i, (n, re, im)) in doc.entries.into_iter().enumerate() {
        map.insert(MultiIndex(n), Complex64::new(re, im))
            .map_err(|e| parse_err(&format!("entries[{i}]"), e))?;
    }
    Ok(map)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct PieceJson {
    pub rank: u32,
    pub index: Vec<u64>,
    #[serde(with = "frac")]
    pub value: Frac,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CellJson {
    pub rank: u32,
    pub index: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct MemberJson {
    pub pieces: Vec<PieceJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<CellJson>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct FamilyJson {
    pub grid: GridConfig,
    #[serde(with = "frac")]
    pub constant_c: Frac,
    pub members: Vec<MemberJson>,
}

impl CellJson {
    pub(crate) fn to_cell(&self, grid: &GridConfig) -> Result<Cell> {
        Cell::uniform(grid, self.rank, self.index.clone())
    }
}
