use std::collections::{BTreeMap, BTreeSet};

use super::manifest::{Geometry, Provenance, SimulationManifest};
use super::tree::{UnitNode, UnitTree};
use super::ComposeError;
use crate::params::ParameterDecl;

/// Prefix under which applications live.
pub const APP_ROOT: &str = "Simulation/SimulationMain";

/// Parsed `setup` invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetupRequest {
    pub application: String,
    pub dims: usize,
    pub nxb: usize,
    pub nyb: usize,
    pub nzb: usize,
    pub maxblocks: usize,
    pub auto: bool,
    pub site: Option<String>,
    /// Shortcut names in the order given, without `+`.
    pub shortcuts: Vec<String>,
    /// Units named explicitly or through shortcuts.
    pub units: BTreeSet<String>,
    /// Units named with `-with-unit`, echoed in provenance.
    pub explicit_units: BTreeSet<String>,
}

impl SetupRequest {
    pub fn new(application: &str) -> Self {
        SetupRequest {
            application: application.to_string(),
            dims: 2,
            nxb: 8,
            nyb: 8,
            nzb: 1,
            maxblocks: 1000,
            auto: false,
            site: None,
            shortcuts: Vec::new(),
            units: BTreeSet::new(),
            explicit_units: BTreeSet::new(),
        }
    }

    /// Parses setup arguments. Shortcuts expand in place, so flags given
    /// after a shortcut override the shortcut's scalar flags.
    pub fn parse<S: AsRef<str>>(args: &[S], table: &ShortcutTable) -> Result<Self, ComposeError> {
        let mut app = None;
        let mut flags = FlagSet::default();
        let mut shortcuts = Vec::new();
        let mut explicit = BTreeSet::new();
        for a in args {
            let a = a.as_ref();
            if let Some(name) = a.strip_prefix('+') {
                shortcuts.push(name.to_string());
                let expansion = table.get(name)?;
                for t in expansion {
                    flags.apply(t)?;
                }
            } else if a.starts_with('-') {
                flags.apply(a)?;
                if let Some(u) = a.strip_prefix("-with-unit=") {
                    explicit.insert(u.to_string());
                }
            } else if app.is_none() {
                app = Some(a.to_string());
            } else {
                return Err(ComposeError::BadFlag(a.to_string()));
            }
        }
        let app = app.ok_or(ComposeError::MissingApplication)?;
        let mut req = SetupRequest::new(&app);
        req.shortcuts = shortcuts;
        req.explicit_units = explicit;
        flags.apply_to(&mut req)?;
        Ok(req)
    }

    /// Canonical text form recorded in the manifest.
    pub fn echo(&self) -> String {
        let mut s = self.application.clone();
        if self.auto {
            s.push_str(" -auto");
        }
        s.push_str(&format!(
            " -{}d -nxb={} -nyb={} -nzb={} -maxblocks={}",
            self.dims, self.nxb, self.nyb, self.nzb, self.maxblocks
        ));
        if let Some(site) = &self.site {
            s.push_str(&format!(" -site={site}"));
        }
        for u in &self.explicit_units {
            s.push_str(&format!(" -with-unit={u}"));
        }
        for sc in &self.shortcuts {
            s.push_str(&format!(" +{sc}"));
        }
        s
    }

    pub fn validate(&self) -> Result<(), ComposeError> {
        let bad = |m: &str| Err(ComposeError::BadGeometry(m.to_string()));
        if self.dims != 2 && self.dims != 3 {
            return bad("dimensionality must be 2 or 3");
        }
        if self.nxb < 4 || self.nyb < 4 {
            return bad("nxb and nyb must be at least 4");
        }
        if self.dims == 3 && self.nzb < 4 {
            return bad("nzb must be at least 4 in 3-D");
        }
        if self.dims == 2 && self.nzb != 1 {
            return bad("nzb must be 1 in 2-D");
        }
        if self.maxblocks == 0 {
            return bad("maxblocks must be positive");
        }
        Ok(())
    }
}

/// Accumulated effect of flags and shortcut expansions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlagSet {
    pub units: BTreeSet<String>,
    /// Scalar flags; a later token replaces an earlier one.
    pub scalars: BTreeMap<String, String>,
}

impl FlagSet {
    fn apply(&mut self, token: &str) -> Result<(), ComposeError> {
        let bad = || ComposeError::BadFlag(token.to_string());
        let Some(flag) = token.strip_prefix('-') else {
            if super::dsl::is_unit_path(token) {
                self.units.insert(token.to_string());
                return Ok(());
            }
            return Err(bad());
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k, v),
            None => (flag, ""),
        };
        match (key, value) {
            ("auto", "") => {
                self.scalars.insert("auto".into(), "true".into());
            }
            ("2d", "") | ("3d", "") => {
                self.scalars.insert("dims".into(), key[..1].to_string());
            }
            ("nxb" | "nyb" | "nzb" | "maxblocks", v) => {
                v.parse::<usize>().map_err(|_| bad())?;
                self.scalars.insert(key.to_string(), v.to_string());
            }
            ("site", v) if crate::params::is_identifier(v) => {
                self.scalars.insert("site".into(), v.to_string());
            }
            ("with-unit", v) if super::dsl::is_unit_path(v) => {
                self.units.insert(v.to_string());
            }
            _ => return Err(bad()),
        }
        Ok(())
    }

    fn apply_to(&self, req: &mut SetupRequest) -> Result<(), ComposeError> {
        let num = |k: &str| self.scalars.get(k).map(|v| v.parse::<usize>().unwrap_or_default());
        if let Some(d) = num("dims") {
            req.dims = d;
        }
        req.nzb = if req.dims == 3 { 8 } else { 1 };
        if let Some(v) = num("nxb") {
            req.nxb = v;
        }
        if let Some(v) = num("nyb") {
            req.nyb = v;
        }
        if let Some(v) = num("nzb") {
            req.nzb = v;
        }
        if let Some(v) = num("maxblocks") {
            req.maxblocks = v;
        }
        req.auto = self.scalars.contains_key("auto");
        req.site = self.scalars.get("site").cloned();
        req.units.extend(self.units.iter().cloned());
        req.validate()
    }
}

/// Named bundles of setup tokens, read from a checked-in text table with
/// lines `name: token token ...`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ShortcutTable {
    entries: BTreeMap<String, Vec<String>>,
}

impl ShortcutTable {
    pub fn parse(text: &str) -> Result<Self, ComposeError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or_default().trim();
            if body.is_empty() {
                continue;
            }
            let (name, tokens) = body.split_once(':').ok_or_else(|| ComposeError::Syntax {
                line,
                message: "expected `name: tokens`".into(),
            })?;
            let name = name.trim();
            if !crate::params::is_identifier(name) {
                return Err(ComposeError::Syntax { line, message: format!("bad shortcut name `{name}`") });
            }
            let tokens: Vec<String> = tokens.split_whitespace().map(str::to_string).collect();
            let mut probe = FlagSet::default();
            for t in &tokens {
                probe.apply(t).map_err(|e| ComposeError::Syntax { line, message: e.to_string() })?;
            }
            entries.insert(name.to_string(), tokens);
        }
        Ok(ShortcutTable { entries })
    }

    pub fn get(&self, name: &str) -> Result<&[String], ComposeError> {
        self.entries
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| ComposeError::UnknownShortcut(name.to_string()))
    }
}

/// Expands `+name` tokens into the units and flags they stand for.
pub fn expand_shortcuts<S: AsRef<str>>(tokens: &[S], table: &ShortcutTable) -> Result<FlagSet, ComposeError> {
    let mut flags = FlagSet::default();
    for t in tokens {
        let t = t.as_ref();
        let name = t.strip_prefix('+').ok_or_else(|| ComposeError::BadFlag(t.to_string()))?;
        for tok in table.get(name)? {
            flags.apply(tok)?;
        }
    }
    Ok(flags)
}

fn ancestors(path: &str) -> impl Iterator<Item = &str> {
    path.match_indices('/').map(move |(i, _)| &path[..i])
}

/// Selected units for an explicit set: the set, all ancestors, and DEFAULT
/// children. A DEFAULT child that shares an EXCLUSIVE group with a selected
/// sibling is not applied; any other DEFAULT is additive.
fn close_over_defaults(tree: &UnitTree, explicit: &BTreeSet<String>) -> Result<BTreeSet<String>, ComposeError> {
    let mut sel = BTreeSet::new();
    for p in explicit {
        sel.insert(p.clone());
        sel.extend(ancestors(p).map(str::to_string));
    }
    loop {
        let mut added = Vec::new();
        for p in &sel {
            let node = tree.get(p).ok_or_else(|| ComposeError::UnknownUnit(p.clone()))?;
            let Some(child) = node.config.defaults.first() else { continue };
            let c = format!("{p}/{child}");
            if sel.contains(&c) {
                continue;
            }
            let displaced = node
                .config
                .exclusive_groups
                .iter()
                .filter(|g| g.contains(child))
                .flatten()
                .any(|sib| sel.contains(&format!("{p}/{sib}")));
            if displaced {
                continue;
            }
            if !tree.contains(&c) {
                return Err(ComposeError::MissingDependency { unit: p.clone(), requires: c });
            }
            added.push(c);
        }
        if added.is_empty() {
            return Ok(sel);
        }
        sel.extend(added);
    }
}

/// Child visiting order: `*Main` nodes first, then by name.
fn child_order(a: &UnitNode, b: &UnitNode) -> std::cmp::Ordering {
    let key = |n: &UnitNode| (!n.name().ends_with("Main"), n.name().to_string());
    key(a).cmp(&key(b))
}

fn preorder(tree: &UnitTree, sel: &BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::new();
    fn visit(tree: &UnitTree, sel: &BTreeSet<String>, path: &str, out: &mut Vec<String>) {
        let mut kids: Vec<&UnitNode> =
            tree.children(path).into_iter().filter(|n| sel.contains(&n.path)).collect();
        kids.sort_by(|a, b| child_order(a, b));
        for k in kids {
            out.push(k.path.clone());
            visit(tree, sel, &k.path, out);
        }
    }
    visit(tree, sel, "", &mut out);
    out
}

/// Composes a manifest from a unit tree and a setup request.
pub fn resolve(tree: &UnitTree, req: &SetupRequest) -> Result<SimulationManifest, ComposeError> {
    req.validate()?;
    let app = format!("{APP_ROOT}/{}", req.application);
    if !tree.contains(&app) {
        return Err(ComposeError::UnknownApplication(req.application.clone()));
    }
    let mut base = BTreeSet::from([app.clone()]);
    for u in &req.units {
        if !tree.contains(u) {
            return Err(ComposeError::UnknownUnit(u.clone()));
        }
        base.insert(u.clone());
    }

    let mut explicit = base.clone();
    let mut sel = close_over_defaults(tree, &explicit)?;
    if req.auto {
        let mut rounds = 0;
        loop {
            let mut next = base.clone();
            for p in &sel {
                for r in &tree.get(p).expect("selected unit exists").config.requires {
                    if !tree.contains(r) {
                        return Err(ComposeError::MissingDependency { unit: p.clone(), requires: r.clone() });
                    }
                    next.insert(r.clone());
                }
            }
            if next == explicit {
                break;
            }
            explicit = next;
            sel = close_over_defaults(tree, &explicit)?;
            rounds += 1;
            if rounds > tree.len() + 1 {
                return Err(ComposeError::Unstable);
            }
        }
    }

    let order = preorder(tree, &sel);
    let nodes: Vec<&UnitNode> = order.iter().map(|p| tree.get(p).expect("selected")).collect();

    for n in &nodes {
        for r in &n.config.requires {
            if !sel.contains(r) {
                return Err(ComposeError::MissingDependency { unit: n.path.clone(), requires: r.clone() });
            }
        }
    }
    for n in &nodes {
        for group in &n.config.exclusive_groups {
            let chosen: Vec<&String> =
                group.iter().filter(|g| sel.contains(&format!("{}/{g}", n.path))).collect();
            if chosen.len() > 1 {
                return Err(ComposeError::ExclusivityViolation {
                    unit: n.path.clone(),
                    first: chosen[0].clone(),
                    second: chosen[1].clone(),
                });
            }
        }
    }

    let mut providers: BTreeMap<&str, Vec<&UnitNode>> = BTreeMap::new();
    for n in &nodes {
        for k in &n.implementations {
            providers.entry(k.as_str()).or_default().push(n);
        }
    }
    let mut bindings = BTreeMap::new();
    for (key, list) in providers {
        let deepest = list.iter().max_by_key(|n| n.depth()).expect("non-empty");
        for other in &list {
            let on_path = other.path == deepest.path || deepest.path.starts_with(&format!("{}/", other.path));
            if !on_path {
                let (a, b) = if other.path < deepest.path { (other, deepest) } else { (deepest, other) };
                return Err(ComposeError::AmbiguousBinding {
                    key: key.to_string(),
                    first: a.path.clone(),
                    second: b.path.clone(),
                });
            }
        }
        bindings.insert(key.to_string(), deepest.path.clone());
    }

    let mut parameters: Vec<ParameterDecl> = Vec::new();
    let mut owners: BTreeMap<&str, &str> = BTreeMap::new();
    for n in &nodes {
        for p in &n.config.parameters {
            if let Some(first) = owners.insert(&p.name, &n.path) {
                return Err(ComposeError::DuplicateParameter {
                    name: p.name.clone(),
                    first: first.to_string(),
                    second: n.path.clone(),
                });
            }
            parameters.push(p.clone());
        }
    }
    let mut variables: BTreeMap<String, super::VariableDecl> = BTreeMap::new();
    for n in &nodes {
        for v in &n.config.variables {
            match variables.get(&v.name) {
                Some(prev) if prev.centering != v.centering => {
                    return Err(ComposeError::ConflictingVariable { name: v.name.clone(), unit: n.path.clone() })
                }
                Some(_) => {}
                None => {
                    variables.insert(v.name.clone(), v.clone());
                }
            }
        }
    }

    let mut manifest = SimulationManifest {
        resolved_units: order,
        bindings,
        parameters,
        variables: variables.into_values().collect(),
        geometry: Geometry {
            dims: req.dims,
            nxb: req.nxb,
            nyb: req.nyb,
            nzb: req.nzb,
            maxblocks: req.maxblocks,
        },
        provenance: Provenance {
            application: req.application.clone(),
            auto: req.auto,
            request: req.echo(),
            site: req.site.clone().unwrap_or_default(),
            tree_hash: tree.content_hash(),
        },
    };
    manifest.canonicalize();
    Ok(manifest)
}
