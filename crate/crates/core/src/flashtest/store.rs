use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{check_date, FlashtestError};

/// Per-benchmark list of `sha256  name` lines.
pub const HASH_FILE: &str = "SHA256SUMS";

/// Approved outputs under `<root>/<date>/<node>/`.
#[derive(Clone, Debug)]
pub struct BenchmarkStore {
    root: PathBuf,
}

fn digest(path: &Path) -> Result<String, FlashtestError> {
    let bytes = fs::read(path).map_err(FlashtestError::file(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl BenchmarkStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        BenchmarkStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, date: &str, node: &str) -> PathBuf {
        self.root.join(date).join(node)
    }

    pub fn exists(&self, date: &str, node: &str) -> bool {
        self.dir(date, node).join(HASH_FILE).is_file()
    }

    /// Path of an approved file after checking it against the hash list.
    pub fn file(&self, date: &str, node: &str, name: &str) -> Result<PathBuf, FlashtestError> {
        let dir = self.dir(date, node);
        let missing = || FlashtestError::MissingBenchmark {
            date: date.to_string(),
            node: node.to_string(),
            file: name.to_string(),
        };
        let sums = match fs::read_to_string(dir.join(HASH_FILE)) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(missing()),
            Err(e) => return Err(FlashtestError::file(dir.join(HASH_FILE))(e)),
        };
        let want = sums
            .lines()
            .filter_map(|l| l.split_once("  "))
            .find(|(_, n)| *n == name)
            .map(|(h, _)| h.to_string())
            .ok_or_else(missing)?;
        let path = dir.join(name);
        if !path.is_file() {
            return Err(missing());
        }
        if digest(&path)? != want {
            return Err(FlashtestError::CorruptBenchmark { path });
        }
        Ok(path)
    }

    /// Copies `files` into a new benchmark and records their hashes.
    /// Existing benchmarks are never overwritten.
    pub fn approve(&self, date: &str, node: &str, files: &[PathBuf]) -> Result<PathBuf, FlashtestError> {
        check_date(date)?;
        let dir = self.dir(date, node);
        if dir.exists() {
            return Err(FlashtestError::BenchmarkExists { date: date.to_string(), node: node.to_string() });
        }
        fs::create_dir_all(&dir).map_err(FlashtestError::file(&dir))?;
        let mut lines = Vec::new();
        for f in files {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let dst = dir.join(&name);
            fs::copy(f, &dst).map_err(FlashtestError::file(f))?;
            lines.push(format!("{}  {name}\n", digest(&dst)?));
            let mut perm = fs::metadata(&dst).map_err(FlashtestError::file(&dst))?.permissions();
            perm.set_readonly(true);
            fs::set_permissions(&dst, perm).map_err(FlashtestError::file(&dst))?;
        }
        lines.sort();
        let sums = dir.join(HASH_FILE);
        fs::write(&sums, lines.concat()).map_err(FlashtestError::file(&sums))?;
        Ok(dir)
    }
}
