use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ParamError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamType {
    Real,
    Integer,
    String,
    Boolean,
}

impl ParamType {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::Real => "REAL",
            ParamType::Integer => "INTEGER",
            ParamType::String => "STRING",
            ParamType::Boolean => "BOOLEAN",
        }
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamType {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "REAL" => Ok(ParamType::Real),
            "INTEGER" => Ok(ParamType::Integer),
            "STRING" => Ok(ParamType::String),
            "BOOLEAN" => Ok(ParamType::Boolean),
            other => Err(ParamError::UnknownType(other.to_string())),
        }
    }
}

/// A typed runtime-parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ParamValue {
    Real(f64),
    Integer(i64),
    Str(String),
    Bool(bool),
}

impl ParamValue {
    pub fn ty(&self) -> ParamType {
        match self {
            ParamValue::Real(_) => ParamType::Real,
            ParamValue::Integer(_) => ParamType::Integer,
            ParamValue::Str(_) => ParamType::String,
            ParamValue::Bool(_) => ParamType::Boolean,
        }
    }

    /// Converts to `ty`, widening INTEGER to REAL and nothing else.
    pub fn coerce(self, ty: ParamType) -> Option<ParamValue> {
        match (self, ty) {
            (ParamValue::Integer(i), ParamType::Real) => Some(ParamValue::Real(i as f64)),
            (v, t) if v.ty() == t => Some(v),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            ParamValue::Real(x) => Some(*x),
            ParamValue::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ParamValue::Integer(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ParamValue::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

/// Parfile literal syntax. Reals use the shortest decimal that round-trips.
impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Real(x) => write!(f, "{x:?}"),
            ParamValue::Integer(i) => write!(f, "{i}"),
            ParamValue::Str(s) => write!(f, "\"{s}\""),
            ParamValue::Bool(true) => f.write_str(".true."),
            ParamValue::Bool(false) => f.write_str(".false."),
        }
    }
}

fn is_integer_literal(s: &str) -> bool {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

/// Parses one literal: `"string"`, `.true.`/`true`, integer, or real.
pub fn parse_literal(text: &str) -> Result<ParamValue, ParamError> {
    let s = text.trim();
    if let Some(rest) = s.strip_prefix('"') {
        return match rest.find('"') {
            Some(end) if end + 1 == rest.len() && !rest.contains('\\') => {
                Ok(ParamValue::Str(rest[..end].to_string()))
            }
            Some(_) => Err(ParamError::BadLiteral(s.to_string())),
            None => Err(ParamError::UnterminatedString(s.to_string())),
        };
    }
    match s.to_ascii_lowercase().as_str() {
        ".true." | "true" => return Ok(ParamValue::Bool(true)),
        ".false." | "false" => return Ok(ParamValue::Bool(false)),
        _ => {}
    }
    if is_integer_literal(s) {
        return s
            .parse::<i64>()
            .map(ParamValue::Integer)
            .map_err(|_| ParamError::BadLiteral(s.to_string()));
    }
    let looks_numeric = s
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'd' | b'D' | b'+' | b'-'));
    if looks_numeric && s.bytes().any(|b| b.is_ascii_digit()) {
        let normalized = s.replace(['d', 'D'], "e");
        if let Ok(x) = normalized.parse::<f64>() {
            if x.is_finite() {
                return Ok(ParamValue::Real(x));
            }
        }
    }
    Err(ParamError::BadLiteral(s.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_literals() {
        assert_eq!(parse_literal("0.0001").unwrap(), ParamValue::Real(1.0e-4));
        assert_eq!(parse_literal("0.001").unwrap(), ParamValue::Real(1.0e-3));
        assert_eq!(parse_literal("10").unwrap(), ParamValue::Integer(10));
        assert_eq!(
            parse_literal("\"inflow_ins\"").unwrap(),
            ParamValue::Str("inflow_ins".into())
        );
        assert_eq!(parse_literal(".TRUE.").unwrap(), ParamValue::Bool(true));
        assert_eq!(parse_literal("1.5d-3").unwrap(), ParamValue::Real(1.5e-3));
    }

    #[test]
    fn bad_literals() {
        assert!(matches!(parse_literal("\"abc"), Err(ParamError::UnterminatedString(_))));
        assert!(parse_literal("ten").is_err());
        assert!(parse_literal("inf").is_err());
        assert!(parse_literal("").is_err());
    }

    #[test]
    fn reals_print_shortest_round_trip() {
        for (x, s) in [(0.0001, "0.0001"), (0.0, "0.0"), (1e-9, "1e-9"), (10.0, "10.0"), (-0.01, "-0.01")] {
            assert_eq!(ParamValue::Real(x).to_string(), s);
            assert_eq!(parse_literal(s).unwrap(), ParamValue::Real(x));
        }
    }

    #[test]
    fn only_integer_widens() {
        assert_eq!(ParamValue::Integer(3).coerce(ParamType::Real), Some(ParamValue::Real(3.0)));
        assert_eq!(ParamValue::Real(3.0).coerce(ParamType::Integer), None);
        assert_eq!(ParamValue::Str("x".into()).coerce(ParamType::Boolean), None);
    }
}
