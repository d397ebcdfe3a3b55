use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::dsl::{is_unit_path, parse_config, ConfigSpec};
use super::ComposeError;
use crate::params::is_identifier;

/// Name of the per-unit declaration file.
pub const CONFIG_FILE: &str = "Config";
/// Extension of implementation-key marker files inside a unit directory.
pub const IMPL_EXT: &str = "impl";

/// One unit directory.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitNode {
    pub path: String,
    pub config: ConfigSpec,
    pub implementations: BTreeSet<String>,
    source: String,
}

impl UnitNode {
    pub fn name(&self) -> &str {
        self.path.rsplit('/').next().unwrap_or(&self.path)
    }

    pub fn parent(&self) -> Option<&str> {
        self.path.rsplit_once('/').map(|(p, _)| p)
    }

    pub fn depth(&self) -> usize {
        self.path.split('/').count()
    }
}

/// The composable source tree, keyed by unit path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UnitTree {
    nodes: BTreeMap<String, UnitNode>,
}

impl UnitTree {
    /// Builds a tree from `(path, Config text, implementation keys)` triples.
    /// Missing ancestors are created with empty Config files.
    pub fn from_sources<'a>(
        units: impl IntoIterator<Item = (&'a str, &'a str, &'a [&'a str])>,
    ) -> Result<Self, ComposeError> {
        let mut tree = UnitTree::default();
        for (path, text, impls) in units {
            tree.insert(path, text, impls.iter().map(|s| s.to_string()).collect())?;
        }
        Ok(tree)
    }

    fn insert(&mut self, path: &str, text: &str, impls: BTreeSet<String>) -> Result<(), ComposeError> {
        if !is_unit_path(path) {
            return Err(ComposeError::BadUnitPath(path.to_string()));
        }
        if let Some(bad) = impls.iter().find(|k| !is_identifier(k)) {
            return Err(ComposeError::BadImplementationKey { unit: path.to_string(), key: bad.clone() });
        }
        let mut config = parse_config(text).map_err(|e| e.in_unit(path))?;
        for p in &mut config.parameters {
            p.owner = path.to_string();
        }
        let mut prefix = String::new();
        for comp in path.split('/') {
            if !prefix.is_empty() {
                prefix.push('/');
            }
            prefix.push_str(comp);
            if prefix != path && !self.nodes.contains_key(&prefix) {
                self.nodes.insert(prefix.clone(), empty_node(&prefix));
            }
        }
        self.nodes.insert(
            path.to_string(),
            UnitNode { path: path.to_string(), config, implementations: impls, source: text.to_string() },
        );
        Ok(())
    }

    /// Loads every directory below `root` as a unit. `tests` directories and
    /// plain files other than `Config` and `*.impl` are ignored.
    pub fn load(root: &Path) -> Result<Self, ComposeError> {
        let mut tree = UnitTree::default();
        let mut stack = vec![String::new()];
        while let Some(rel) = stack.pop() {
            let dir = if rel.is_empty() { root.to_path_buf() } else { root.join(&rel) };
            let mut entries: Vec<_> = fs::read_dir(&dir)
                .map_err(|e| ComposeError::Io(format!("{}: {e}", dir.display())))?
                .filter_map(Result::ok)
                .collect();
            entries.sort_by_key(|e| e.file_name());
            let mut impls = BTreeSet::new();
            let mut text = String::new();
            for e in entries {
                let name = e.file_name().to_string_lossy().into_owned();
                let ft = e.file_type().map_err(|err| ComposeError::Io(err.to_string()))?;
                if ft.is_dir() {
                    if name != "tests" && is_identifier(&name) {
                        stack.push(if rel.is_empty() { name } else { format!("{rel}/{name}") });
                    }
                } else if name == CONFIG_FILE {
                    text = fs::read_to_string(e.path())
                        .map_err(|err| ComposeError::Io(format!("{}: {err}", e.path().display())))?;
                } else if let Some(stem) = name.strip_suffix(&format!(".{IMPL_EXT}")) {
                    impls.insert(stem.to_string());
                }
            }
            if !rel.is_empty() {
                tree.insert(&rel, &text, impls)?;
            }
        }
        Ok(tree)
    }

    pub fn get(&self, path: &str) -> Option<&UnitNode> {
        self.nodes.get(path)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.nodes.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &UnitNode> {
        self.nodes.values()
    }

    /// Direct children of `path` (`""` for top-level units), by name.
    pub fn children(&self, path: &str) -> Vec<&UnitNode> {
        self.nodes
            .values()
            .filter(|n| n.parent().unwrap_or("") == path && n.path != path)
            .collect()
    }

    /// SHA-256 over every unit's path, Config text and implementation keys.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for n in self.nodes.values() {
            h.update(n.path.as_bytes());
            h.update([0]);
            h.update(n.source.as_bytes());
            h.update([0]);
            for k in &n.implementations {
                h.update(k.as_bytes());
                h.update([b',']);
            }
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

fn empty_node(path: &str) -> UnitNode {
    UnitNode {
        path: path.to_string(),
        config: ConfigSpec::default(),
        implementations: BTreeSet::new(),
        source: String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ancestors_are_created() {
        let t = UnitTree::from_sources([("Grid/GridSolvers/uniform", "", &["poisson_solve"][..])]).unwrap();
        assert!(t.contains("Grid") && t.contains("Grid/GridSolvers"));
        assert_eq!(t.children("Grid").len(), 1);
        assert_eq!(t.children("").len(), 1);
        assert_eq!(t.get("Grid/GridSolvers/uniform").unwrap().name(), "uniform");
    }

    #[test]
    fn bad_keys_and_paths_rejected() {
        assert!(UnitTree::from_sources([("Grid//x", "", &[][..])]).is_err());
        assert!(UnitTree::from_sources([("Grid", "", &["9lives"][..])]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = UnitTree::from_sources([("Grid", "DEFAULT GridMain", &[][..])]).unwrap();
        let b = UnitTree::from_sources([("Grid", "DEFAULT GridMain\n", &[][..])]).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), a.clone().content_hash());
    }
}
