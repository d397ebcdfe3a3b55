//! Unit-tree composition: Config parsing, dependency resolution and the
//! simulation manifest.

mod dsl;
mod manifest;
mod resolve;
mod tree;

use thiserror::Error;

pub use dsl::{parse_config, ConfigSpec, VariableDecl};
pub use manifest::{Geometry, Provenance, SimulationManifest};
pub use resolve::{expand_shortcuts, resolve, FlagSet, SetupRequest, ShortcutTable, APP_ROOT};
pub use tree::{UnitNode, UnitTree, CONFIG_FILE, IMPL_EXT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComposeError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: parameter `{name}` declared twice")]
    DuplicateParameterInFile { line: usize, name: String },
    #[error("{unit}: {source}")]
    InUnit {
        unit: String,
        #[source]
        source: Box<ComposeError>,
    },
    #[error("bad unit path `{0}`")]
    BadUnitPath(String),
    #[error("unit {unit}: bad implementation key `{key}`")]
    BadImplementationKey { unit: String, key: String },
    #[error("io: {0}")]
    Io(String),
    #[error("unrecognized setup flag `{0}`")]
    BadFlag(String),
    #[error("no application named")]
    MissingApplication,
    #[error("bad geometry: {0}")]
    BadGeometry(String),
    #[error("unknown shortcut `+{0}`")]
    UnknownShortcut(String),
    #[error("unknown application `{0}`")]
    UnknownApplication(String),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("{unit} requires {requires}, which is not selected (use -auto)")]
    MissingDependency { unit: String, requires: String },
    #[error("dependency closure did not settle")]
    Unstable,
    #[error("{unit}: `{first}` and `{second}` are mutually exclusive")]
    ExclusivityViolation { unit: String, first: String, second: String },
    #[error("binding `{key}` provided by both {first} and {second}")]
    AmbiguousBinding { key: String, first: String, second: String },
    #[error("parameter `{name}` declared by both {first} and {second}")]
    DuplicateParameter { name: String, first: String, second: String },
    #[error("variable `{name}` redeclared with a different centering in {unit}")]
    ConflictingVariable { name: String, unit: String },
    #[error("manifest line {line}: {message}")]
    ManifestSyntax { line: usize, message: String },
}

impl ComposeError {
    pub fn in_unit(self, unit: &str) -> ComposeError {
        ComposeError::InUnit { unit: unit.to_string(), source: Box::new(self) }
    }
}

/// Name of the shortcut table at the root of a source tree.
pub const SHORTCUT_FILE: &str = "shortcuts.txt";

/// Loads the unit tree and shortcut table under `source` and resolves a
/// setup command line.
pub fn setup<S: AsRef<str>>(source: &std::path::Path, args: &[S]) -> Result<SimulationManifest, ComposeError> {
    let tree = UnitTree::load(source)?;
    let table = match std::fs::read_to_string(source.join(SHORTCUT_FILE)) {
        Ok(text) => ShortcutTable::parse(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => ShortcutTable::default(),
        Err(e) => return Err(ComposeError::Io(e.to_string())),
    };
    let req = SetupRequest::parse(args, &table)?;
    resolve(&tree, &req)
}
