//! Manifest text form: `key = value` lines in sorted key order after a short
//! comment header.
//!
//! ```text
//! binding.<key> = <unit path>
//! geometry.{dims,maxblocks,nxb,nyb,nzb} = <integer>
//! parameter.<name> = <TYPE> <literal> @<owner> "<comment>"
//! provenance.{application,auto,request,site,tree_hash} = <text>
//! unit.<NNNN> = <unit path>
//! variable.<name> = <CENTERING>
//! ```

use std::collections::BTreeMap;

use super::dsl::VariableDecl;
use super::ComposeError;
use crate::params::{parse_literal, unit_name, ParamType, ParameterDecl};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub dims: usize,
    pub nxb: usize,
    pub nyb: usize,
    pub nzb: usize,
    pub maxblocks: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub application: String,
    pub auto: bool,
    pub request: String,
    pub site: String,
    pub tree_hash: String,
}

/// The resolved composition consumed by the runtime.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationManifest {
    pub resolved_units: Vec<String>,
    pub bindings: BTreeMap<String, String>,
    /// Ordered by owning unit position, then by name.
    pub parameters: Vec<ParameterDecl>,
    /// Ordered by name.
    pub variables: Vec<VariableDecl>,
    pub geometry: Geometry,
    pub provenance: Provenance,
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Splits on whitespace outside double quotes; quoted tokens keep their
/// quotes and escapes.
fn tokens(s: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = s.chars();
    let mut in_str = false;
    while let Some(c) = chars.next() {
        match c {
            '\\' if in_str => {
                cur.push(c);
                cur.push(chars.next().ok_or("dangling escape")?);
            }
            '"' => {
                in_str = !in_str;
                cur.push(c);
            }
            c if c.is_whitespace() && !in_str => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if in_str {
        return Err("unterminated string".into());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

fn unquote(tok: &str) -> Result<String, String> {
    let inner = tok
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .ok_or("expected quoted text")?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            out.push(chars.next().ok_or("dangling escape")?);
        } else if c == '"' {
            return Err("stray quote".into());
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

impl SimulationManifest {
    /// Puts parameters and variables in canonical order.
    pub fn canonicalize(&mut self) {
        let pos: BTreeMap<&str, usize> =
            self.resolved_units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        self.parameters.sort_by(|a, b| {
            let pa = pos.get(a.owner.as_str()).copied().unwrap_or(usize::MAX);
            let pb = pos.get(b.owner.as_str()).copied().unwrap_or(usize::MAX);
            (pa, &a.name).cmp(&(pb, &b.name))
        });
        self.variables.sort_by(|a, b| a.name.cmp(&b.name));
    }

    pub fn has_unit(&self, path: &str) -> bool {
        self.resolved_units.iter().any(|u| u == path)
    }

    /// Whether `path` or any unit below it is selected.
    pub fn has_subtree(&self, path: &str) -> bool {
        let prefix = format!("{path}/");
        self.resolved_units.iter().any(|u| u == path || u.starts_with(&prefix))
    }

    pub fn binding(&self, key: &str) -> Option<&str> {
        self.bindings.get(key).map(String::as_str)
    }

    /// Short unit names owning at least one parameter, in unit order.
    pub fn parameter_units(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.parameters {
            let u = unit_name(&p.owner);
            if !out.contains(&u) {
                out.push(u);
            }
        }
        out
    }

    pub fn emit(&self) -> String {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in &self.bindings {
            kv.insert(format!("binding.{k}"), v.clone());
        }
        let g = &self.geometry;
        for (k, v) in [("dims", g.dims), ("maxblocks", g.maxblocks), ("nxb", g.nxb), ("nyb", g.nyb), ("nzb", g.nzb)] {
            kv.insert(format!("geometry.{k}"), v.to_string());
        }
        for p in &self.parameters {
            kv.insert(
                format!("parameter.{}", p.name),
                format!("{} {} @{} \"{}\"", p.ty, p.default, p.owner, escape(&p.comment)),
            );
        }
        let pv = &self.provenance;
        kv.insert("provenance.application".into(), pv.application.clone());
        kv.insert("provenance.auto".into(), pv.auto.to_string());
        kv.insert("provenance.request".into(), pv.request.clone());
        kv.insert("provenance.site".into(), pv.site.clone());
        kv.insert("provenance.tree_hash".into(), pv.tree_hash.clone());
        for (i, u) in self.resolved_units.iter().enumerate() {
            kv.insert(format!("unit.{i:04}"), u.clone());
        }
        for v in &self.variables {
            kv.insert(format!("variable.{}", v.name), v.centering.to_string());
        }
        let mut out = String::new();
        out.push_str("# simulation manifest\n");
        out.push_str(&format!("# request: {}\n", pv.request));
        out.push_str(&format!("# tree: sha256:{}\n", pv.tree_hash));
        for (k, v) in kv {
            if v.is_empty() {
                out.push_str(&format!("{k} =\n"));
            } else {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ComposeError> {
        let mut m = SimulationManifest {
            resolved_units: Vec::new(),
            bindings: BTreeMap::new(),
            parameters: Vec::new(),
            variables: Vec::new(),
            geometry: Geometry { dims: 0, nxb: 0, nyb: 0, nzb: 0, maxblocks: 0 },
            provenance: Provenance {
                application: String::new(),
                auto: false,
                request: String::new(),
                site: String::new(),
                tree_hash: String::new(),
            },
        };
        let mut units: BTreeMap<usize, String> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let err = |message: String| ComposeError::ManifestSyntax { line, message };
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let (key, value) = raw.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let (section, name) = key.split_once('.').ok_or_else(|| err(format!("bad key `{key}`")))?;
            let int = || value.parse::<usize>().map_err(|_| err(format!("`{key}` needs an integer")));
            match section {
                "binding" => {
                    m.bindings.insert(name.to_string(), value.to_string());
                }
                "geometry" => {
                    let slot = match name {
                        "dims" => &mut m.geometry.dims,
                        "nxb" => &mut m.geometry.nxb,
                        "nyb" => &mut m.geometry.nyb,
                        "nzb" => &mut m.geometry.nzb,
                        "maxblocks" => &mut m.geometry.maxblocks,
                        _ => return Err(err(format!("unknown geometry key `{name}`"))),
                    };
                    *slot = int()?;
                }
                "parameter" => {
                    let toks = tokens(value).map_err(err)?;
                    let [ty, lit, owner, comment] = toks.as_slice() else {
                        return Err(err("expected `TYPE literal @owner \"comment\"`".into()));
                    };
                    let ty: ParamType = ty.parse().map_err(|e| err(format!("{e}")))?;
                    let default = parse_literal(lit)
                        .map_err(|e| err(format!("{e}")))?
                        .coerce(ty)
                        .ok_or_else(|| err(format!("default does not match {ty}")))?;
                    let owner = owner.strip_prefix('@').ok_or_else(|| err("owner needs `@`".into()))?;
                    m.parameters.push(ParameterDecl {
                        name: name.to_string(),
                        ty,
                        default,
                        owner: owner.to_string(),
                        comment: unquote(comment).map_err(err)?,
                    });
                }
                "provenance" => match name {
                    "application" => m.provenance.application = value.to_string(),
                    "auto" => m.provenance.auto = value == "true",
                    "request" => m.provenance.request = value.to_string(),
                    "site" => m.provenance.site = value.to_string(),
                    "tree_hash" => m.provenance.tree_hash = value.to_string(),
                    _ => return Err(err(format!("unknown provenance key `{name}`"))),
                },
                "unit" => {
                    let i = name.parse::<usize>().map_err(|_| err(format!("bad unit index `{name}`")))?;
                    units.insert(i, value.to_string());
                }
                "variable" => {
                    let centering = value.parse().map_err(err)?;
                    m.variables.push(VariableDecl { name: name.to_string(), centering });
                }
                other => return Err(err(format!("unknown section `{other}`"))),
            }
        }
        for (expect, (i, u)) in units.into_iter().enumerate() {
            if i != expect {
                return Err(ComposeError::ManifestSyntax { line: 0, message: format!("unit index {expect} missing") });
            }
            m.resolved_units.push(u);
        }
        m.canonicalize();
        Ok(m)
    }
}
