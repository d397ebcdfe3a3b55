//! Runtime parameters: parfile parsing, validation against the composed
//! schema, and parfile generation from per-unit TOML tables.

mod pargen;
mod value;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pargen::{generate_parfile, ingest_toml};
pub use value::{parse_literal, ParamType, ParamValue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("line {line}: expected `name = value`")]
    MalformedLine { line: usize },
    #[error("line {line}: invalid parameter name `{name}`")]
    BadName { line: usize, name: String },
    #[error("unterminated string literal {0}")]
    UnterminatedString(String),
    #[error("cannot parse literal `{0}`")]
    BadLiteral(String),
    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<ParamError> },
    #[error("unknown parameter type `{0}`")]
    UnknownType(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{name}` expects {expected}, got {found}")]
    TypeMismatch { name: String, expected: ParamType, found: ParamType },
    #[error("parameter `{param}` belongs to unit `{owner}`, not `{table}`")]
    WrongUnit { param: String, table: String, owner: String },
    #[error("unknown unit table `{0}`")]
    UnknownUnit(String),
    #[error("unsupported TOML construct: {0}")]
    UnsupportedToml(String),
    #[error("TOML syntax: {0}")]
    Toml(String),
}

/// Schema entry for one runtime parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDecl {
    pub name: String,
    pub ty: ParamType,
    pub default: ParamValue,
    /// Path of the declaring unit.
    pub owner: String,
    pub comment: String,
}

/// Short unit name for a unit path: its first component that starts with an
/// uppercase letter (`physics/sourceTerms/Outlet/OutletMain` → `Outlet`).
pub fn unit_name(path: &str) -> &str {
    path.split('/')
        .find(|c| c.starts_with(|ch: char| ch.is_ascii_uppercase()))
        .unwrap_or(path)
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Strips a trailing `#` comment that is not inside a string literal.
pub(crate) fn split_comment(line: &str) -> (&str, Option<&str>) {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            '#' if !in_str => return (&line[..i], Some(line[i + 1..].trim())),
            _ => {}
        }
    }
    (line, None)
}

/// Result of [`parse_parfile`]: literals by name plus duplicate warnings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawParfile {
    pub values: BTreeMap<String, ParamValue>,
    pub warnings: Vec<String>,
}

/// Parses `name = literal` lines with `#` comments.
pub fn parse_parfile(text: &str) -> Result<RawParfile, ParamError> {
    let mut out = RawParfile::default();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let (body, _) = split_comment(raw);
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        let (name, lit) = body.split_once('=').ok_or(ParamError::MalformedLine { line })?;
        let name = name.trim();
        if !is_identifier(name) {
            return Err(ParamError::BadName { line, name: name.to_string() });
        }
        let value = parse_literal(lit)
            .map_err(|e| ParamError::AtLine { line, source: Box::new(e) })?;
        if out.values.insert(name.to_string(), value).is_some() {
            out.warnings
                .push(format!("line {line}: `{name}` set again; later value wins"));
        }
    }
    Ok(out)
}

/// Validated, fully populated parameter values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    values: BTreeMap<String, ParamValue>,
    explicit: BTreeSet<String>,
    pub source: Option<PathBuf>,
}

impl ParameterSet {
    /// Checks names and types against `schema` and fills defaults.
    pub fn validate(raw: &RawParfile, schema: &[ParameterDecl]) -> Result<Self, ParamError> {
        let by_name: BTreeMap<&str, &ParameterDecl> =
            schema.iter().map(|d| (d.name.as_str(), d)).collect();
        let mut values = BTreeMap::new();
        let mut explicit = BTreeSet::new();
        for (name, v) in &raw.values {
            let decl = by_name
                .get(name.as_str())
                .ok_or_else(|| ParamError::UnknownParameter(name.clone()))?;
            let typed = v.clone().coerce(decl.ty).ok_or_else(|| ParamError::TypeMismatch {
                name: name.clone(),
                expected: decl.ty,
                found: v.ty(),
            })?;
            values.insert(name.clone(), typed);
            explicit.insert(name.clone());
        }
        for d in schema {
            values.entry(d.name.clone()).or_insert_with(|| d.default.clone());
        }
        Ok(ParameterSet { values, explicit, source: None })
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.values.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn is_explicit(&self, name: &str) -> bool {
        self.explicit.contains(name)
    }

    pub fn explicit_count(&self) -> usize {
        self.explicit.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamValue)> {
        self.values.iter()
    }

    /// Overrides a value, keeping its declared type.
    pub fn set(&mut self, name: &str, value: ParamValue) -> Result<(), ParamError> {
        let current = self
            .values
            .get(name)
            .ok_or_else(|| ParamError::UnknownParameter(name.to_string()))?;
        let ty = current.ty();
        let typed = value.clone().coerce(ty).ok_or_else(|| ParamError::TypeMismatch {
            name: name.to_string(),
            expected: ty,
            found: value.ty(),
        })?;
        self.values.insert(name.to_string(), typed);
        self.explicit.insert(name.to_string());
        Ok(())
    }

    fn lookup(&self, name: &str, ty: ParamType) -> Result<&ParamValue, ParamError> {
        let v = self
            .values
            .get(name)
            .ok_or_else(|| ParamError::UnknownParameter(name.to_string()))?;
        if v.ty() != ty {
            return Err(ParamError::TypeMismatch { name: name.to_string(), expected: ty, found: v.ty() });
        }
        Ok(v)
    }

    pub fn real(&self, name: &str) -> Result<f64, ParamError> {
        Ok(self.lookup(name, ParamType::Real)?.as_real().unwrap_or_default())
    }

    pub fn int(&self, name: &str) -> Result<i64, ParamError> {
        Ok(self.lookup(name, ParamType::Integer)?.as_int().unwrap_or_default())
    }

    pub fn string(&self, name: &str) -> Result<&str, ParamError> {
        Ok(self.lookup(name, ParamType::String)?.as_str().unwrap_or_default())
    }

    pub fn boolean(&self, name: &str) -> Result<bool, ParamError> {
        Ok(self.lookup(name, ParamType::Boolean)?.as_bool().unwrap_or_default())
    }

    /// Optional lookups for parameters of units that may be absent.
    pub fn real_or(&self, name: &str, fallback: f64) -> f64 {
        self.real(name).unwrap_or(fallback)
    }

    pub fn int_or(&self, name: &str, fallback: i64) -> i64 {
        self.int(name).unwrap_or(fallback)
    }

    pub fn string_or<'a>(&'a self, name: &str, fallback: &'a str) -> &'a str {
        self.string(name).unwrap_or(fallback)
    }

    pub fn bool_or(&self, name: &str, fallback: bool) -> bool {
        self.boolean(name).unwrap_or(fallback)
    }
}
