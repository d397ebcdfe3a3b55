//! Line-oriented Config declarations.
//!
//! ```text
//! DEFAULT <child>
//! REQUIRES <abs/unit/path>
//! EXCLUSIVE <name> <name> [...]
//! PARAMETER <name> <REAL|INTEGER|STRING|BOOLEAN> <default>   # comment
//! VARIABLE <name> <CENTER|FACEX|FACEY|FACEZ>
//! ```

use serde::{Deserialize, Serialize};

use super::ComposeError;
use crate::grid::Centering;
use crate::params::{is_identifier, parse_literal, split_comment, ParamType, ParameterDecl};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableDecl {
    pub name: String,
    pub centering: Centering,
}

/// Everything declared in one Config file, in source order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigSpec {
    pub defaults: Vec<String>,
    pub requires: Vec<String>,
    pub exclusive_groups: Vec<Vec<String>>,
    /// Owner fields are left empty until the node is placed in a tree.
    pub parameters: Vec<ParameterDecl>,
    pub variables: Vec<VariableDecl>,
}

pub(crate) fn is_unit_path(s: &str) -> bool {
    !s.is_empty() && s.split('/').all(is_identifier)
}

fn syntax(line: usize, message: impl Into<String>) -> ComposeError {
    ComposeError::Syntax { line, message: message.into() }
}

/// Parses the text of one Config file.
pub fn parse_config(text: &str) -> Result<ConfigSpec, ComposeError> {
    let mut spec = ConfigSpec::default();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let (body, comment) = split_comment(raw);
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        let (keyword, rest) = match body.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (body, ""),
        };
        let words: Vec<&str> = rest.split_whitespace().collect();
        match keyword {
            "DEFAULT" => match words.as_slice() {
                [child] if is_identifier(child) => spec.defaults.push(child.to_string()),
                _ => return Err(syntax(line, "DEFAULT takes one child name")),
            },
            "REQUIRES" => match words.as_slice() {
                [path] if is_unit_path(path) => spec.requires.push(path.to_string()),
                _ => return Err(syntax(line, "REQUIRES takes one unit path")),
            },
            "EXCLUSIVE" => {
                if words.len() < 2 || !words.iter().all(|w| is_identifier(w)) {
                    return Err(syntax(line, "EXCLUSIVE takes two or more child names"));
                }
                for (i, w) in words.iter().enumerate() {
                    if words[..i].contains(w) {
                        return Err(syntax(line, format!("`{w}` repeated in EXCLUSIVE")));
                    }
                }
                spec.exclusive_groups.push(words.iter().map(|w| w.to_string()).collect());
            }
            "PARAMETER" => {
                let mut parts = rest.splitn(3, char::is_whitespace);
                let name = parts.next().unwrap_or_default();
                let ty = parts.next().unwrap_or_default();
                let lit = parts.next().unwrap_or_default().trim();
                if !is_identifier(name) || lit.is_empty() {
                    return Err(syntax(line, "PARAMETER takes a name, a type and a default"));
                }
                let ty: ParamType = ty.parse().map_err(|e| syntax(line, format!("{e}")))?;
                let default = parse_literal(lit)
                    .map_err(|e| syntax(line, format!("{e}")))?
                    .coerce(ty)
                    .ok_or_else(|| syntax(line, format!("default `{lit}` is not {ty}")))?;
                if spec.parameters.iter().any(|p| p.name == name) {
                    return Err(ComposeError::DuplicateParameterInFile { line, name: name.to_string() });
                }
                spec.parameters.push(ParameterDecl {
                    name: name.to_string(),
                    ty,
                    default,
                    owner: String::new(),
                    comment: comment.unwrap_or_default().to_string(),
                });
            }
            "VARIABLE" => match words.as_slice() {
                [name, centering] if is_identifier(name) => {
                    let centering: Centering =
                        centering.parse().map_err(|e: String| syntax(line, e))?;
                    if spec.variables.iter().any(|v| v.name == *name) {
                        return Err(syntax(line, format!("VARIABLE `{name}` declared twice")));
                    }
                    spec.variables.push(VariableDecl { name: name.to_string(), centering });
                }
                _ => return Err(syntax(line, "VARIABLE takes a name and a centering")),
            },
            other => return Err(syntax(line, format!("unknown keyword `{other}`"))),
        }
    }
    Ok(spec)
}
