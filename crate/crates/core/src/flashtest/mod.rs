//! Regression harness: test specifications, suite files, the dated
//! benchmark store and comparison/composite test execution.

mod harness;
mod store;

use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use serde_yaml::Value;
use thiserror::Error;

use crate::composer::ComposeError;
use crate::driver::DriverError;
use crate::io::IoError;

pub use harness::{Harness, RunOutputs, OUTPUTS_FILE};
pub use store::{BenchmarkStore, HASH_FILE};

#[derive(Debug, Error)]
pub enum FlashtestError {
    #[error("tests.yaml: {0}")]
    Yaml(String),
    #[error("test node `{0}` must start with Comparison/ or Composite/")]
    BadNode(String),
    #[error("test `{0}` has no setupOptions")]
    MissingSetupOptions(String),
    #[error("test `{node}`: field `{field}` must be a string or a list of strings")]
    BadField { node: String, field: String },
    #[error("suite line {line}: {message}")]
    Suite { line: usize, message: String },
    #[error("`{0}` is not a yyyy-mm-dd date")]
    BadDate(String),
    #[error("no benchmark `{file}` for {node} dated {date}")]
    MissingBenchmark { date: String, node: String, file: String },
    #[error("benchmark for {node} dated {date} already exists")]
    BenchmarkExists { date: String, node: String },
    #[error("benchmark `{}` does not match its recorded hash", path.display())]
    CorruptBenchmark { path: PathBuf },
    #[error("no test `{node}` in {}", file.display())]
    UnknownTest { node: String, file: PathBuf },
    #[error("test `{node}` lists {got} parfiles, needs {need}")]
    Parfiles { node: String, got: usize, need: usize },
    #[error("no recorded outputs for {0}; run it first")]
    NoOutputs(String),
    #[error("`{}`: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl FlashtestError {
    pub(crate) fn file(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| FlashtestError::File { path, source }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TestKind {
    Comparison,
    Composite,
}

/// One entry of a `tests.yaml` file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestSpec {
    pub node: String,
    pub setup_options: String,
    pub parfiles: Vec<String>,
    pub transfers: Vec<String>,
}

impl TestSpec {
    pub fn kind(&self) -> TestKind {
        if self.node.starts_with("Composite/") {
            TestKind::Composite
        } else {
            TestKind::Comparison
        }
    }
}

fn node_kind(node: &str) -> Result<TestKind, FlashtestError> {
    if node.starts_with("Comparison/") && node.len() > "Comparison/".len() {
        Ok(TestKind::Comparison)
    } else if node.starts_with("Composite/") && node.len() > "Composite/".len() {
        Ok(TestKind::Composite)
    } else {
        Err(FlashtestError::BadNode(node.to_string()))
    }
}

fn string_list(node: &str, field: &str, v: Option<&Value>) -> Result<Vec<String>, FlashtestError> {
    let bad = || FlashtestError::BadField { node: node.to_string(), field: field.to_string() };
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(s.split_whitespace().map(str::to_string).collect()),
        Some(Value::Sequence(items)) => items
            .iter()
            .map(|i| i.as_str().map(str::to_string).ok_or_else(bad))
            .collect(),
        Some(_) => Err(bad()),
    }
}

/// Parses a top-level map of test node to `{setupOptions, parfiles,
/// transfers}`, keeping file order.
pub fn parse_tests_yaml(text: &str) -> Result<Vec<TestSpec>, FlashtestError> {
    let doc: Value = serde_yaml::from_str(text).map_err(|e| FlashtestError::Yaml(e.to_string()))?;
    let map = match doc {
        Value::Null => return Ok(Vec::new()),
        Value::Mapping(m) => m,
        _ => return Err(FlashtestError::Yaml("top level must be a map".into())),
    };
    let mut out = Vec::new();
    for (k, v) in map {
        let node = k.as_str().ok_or_else(|| FlashtestError::Yaml("test node must be a string".into()))?;
        node_kind(node)?;
        let fields = match &v {
            Value::Mapping(m) => m,
            _ => return Err(FlashtestError::MissingSetupOptions(node.to_string())),
        };
        for key in fields.keys() {
            match key.as_str() {
                Some("setupOptions" | "parfiles" | "transfers") => {}
                _ => return Err(FlashtestError::Yaml(format!("test `{node}`: unknown field {key:?}"))),
            }
        }
        let setup_options = match fields.get("setupOptions") {
            Some(Value::String(s)) => s.trim().to_string(),
            Some(Value::Null) | None => return Err(FlashtestError::MissingSetupOptions(node.to_string())),
            Some(_) => return Err(FlashtestError::BadField { node: node.into(), field: "setupOptions".into() }),
        };
        out.push(TestSpec {
            node: node.to_string(),
            setup_options,
            parfiles: string_list(node, "parfiles", fields.get("parfiles"))?,
            transfers: string_list(node, "transfers", fields.get("transfers"))?,
        });
    }
    Ok(out)
}

/// Checks `yyyy-mm-dd` with a plausible month and day.
pub fn check_date(s: &str) -> Result<(), FlashtestError> {
    let bad = || FlashtestError::BadDate(s.to_string());
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return Err(bad());
    }
    let digits = |r: std::ops::Range<usize>| -> Result<u32, FlashtestError> {
        if b[r.clone()].iter().all(u8::is_ascii_digit) {
            Ok(s[r].parse().expect("digits"))
        } else {
            Err(bad())
        }
    };
    let (_, m, d) = (digits(0..4)?, digits(5..7)?, digits(8..10)?);
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
        return Err(bad());
    }
    Ok(())
}

/// One line of a suite file.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteEntry {
    pub application: String,
    pub node: String,
    pub workers: usize,
    pub cbase: String,
    pub rbase: Option<String>,
    pub tolerance: f64,
}

impl SuiteEntry {
    pub fn kind(&self) -> TestKind {
        node_kind(&self.node).unwrap_or(TestKind::Comparison)
    }
}

fn split_quoted(line: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut started = false;
    for c in line.chars() {
        match c {
            '"' => {
                quoted = !quoted;
                started = true;
            }
            c if c.is_whitespace() && !quoted => {
                if started {
                    out.push(std::mem::take(&mut cur));
                    started = false;
                }
            }
            c => {
                cur.push(c);
                started = true;
            }
        }
    }
    if quoted {
        return Err("unterminated quote".into());
    }
    if started {
        out.push(cur);
    }
    Ok(out)
}

/// Parses a suite file: one `<app> -t "<node>" -np N -cbase DATE
/// [-rbase DATE] [-tol X]` entry per line, `#` comments.
pub fn parse_suite(text: &str) -> Result<Vec<SuiteEntry>, FlashtestError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let err = |message: String| FlashtestError::Suite { line, message };
        let body = raw.split('#').next().unwrap_or_default().trim();
        if body.is_empty() {
            continue;
        }
        let toks = split_quoted(body).map_err(err)?;
        let mut it = toks.into_iter();
        let application = it.next().ok_or_else(|| err("missing application".into()))?;
        if application.starts_with('-') {
            return Err(err(format!("expected an application, found `{application}`")));
        }
        let (mut node, mut workers, mut cbase, mut rbase, mut tol) = (None, 1usize, None, None, 0.0f64);
        while let Some(flag) = it.next() {
            let mut value = || it.next().ok_or_else(|| err(format!("`{flag}` needs a value")));
            match flag.as_str() {
                "-t" => node = Some(value()?),
                "-np" => {
                    let v = value()?;
                    workers = v.parse().ok().filter(|&w| w > 0).ok_or_else(|| err(format!("bad -np `{v}`")))?;
                }
                "-cbase" => cbase = Some(value()?),
                "-rbase" => rbase = Some(value()?),
                "-tol" => {
                    let v = value()?;
                    tol = v.parse().ok().filter(|t: &f64| *t >= 0.0).ok_or_else(|| err(format!("bad -tol `{v}`")))?;
                }
                other => return Err(err(format!("unknown flag `{other}`"))),
            }
        }
        let node = node.ok_or_else(|| err("missing -t".into()))?;
        let kind = node_kind(&node).map_err(|e| err(e.to_string()))?;
        let cbase = cbase.ok_or_else(|| err("missing -cbase".into()))?;
        for d in std::iter::once(&cbase).chain(rbase.as_ref()) {
            check_date(d).map_err(|e| err(e.to_string()))?;
        }
        if kind == TestKind::Composite && rbase.is_none() {
            return Err(err("composite tests need -rbase".into()));
        }
        out.push(SuiteEntry { application, node, workers, cbase, rbase, tolerance: tol });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TestVerdict {
    Pass,
    Fail,
    Error,
}

impl fmt::Display for TestVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestVerdict::Pass => "PASS",
            TestVerdict::Fail => "FAIL",
            TestVerdict::Error => "ERROR",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub test: String,
    pub verdict: TestVerdict,
    pub max_error: f64,
    pub seconds: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SuiteSummary {
    #[serde(rename = "test")]
    pub tests: Vec<TestResult>,
}

impl SuiteSummary {
    pub fn all_passed(&self) -> bool {
        self.tests.iter().all(|t| t.verdict == TestVerdict::Pass)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary serializes")
    }
}
