use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    parse_tests_yaml, BenchmarkStore, FlashtestError, SuiteEntry, SuiteSummary, TestKind, TestResult, TestSpec,
    TestVerdict,
};
use crate::composer::{self, APP_ROOT};
use crate::driver::{load_params, Simulation};
use crate::io::{self, IoError, Verdict};

/// Written next to each test's run directories; lists the final
/// checkpoint of every leg for `approve`.
pub const OUTPUTS_FILE: &str = "outputs.toml";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutputs {
    pub node: String,
    pub legs: Vec<PathBuf>,
}

pub struct Harness {
    /// Root of the unit tree.
    pub source: PathBuf,
    pub store: BenchmarkStore,
    /// Scratch space; each test runs in `<work_dir>/<node>/`.
    pub work_dir: PathBuf,
}

enum Outcome {
    Pass(f64, String),
    Fail(f64, String),
}

impl Harness {
    pub fn new(source: impl Into<PathBuf>, benchmarks: impl Into<PathBuf>, work_dir: impl Into<PathBuf>) -> Self {
        Harness { source: source.into(), store: BenchmarkStore::new(benchmarks), work_dir: work_dir.into() }
    }

    pub fn tests_dir(&self, application: &str) -> PathBuf {
        self.source.join(APP_ROOT).join(application).join("tests")
    }

    pub fn find_spec(&self, application: &str, node: &str) -> Result<TestSpec, FlashtestError> {
        let file = self.tests_dir(application).join("tests.yaml");
        let text = fs::read_to_string(&file).map_err(FlashtestError::file(&file))?;
        parse_tests_yaml(&text)?
            .into_iter()
            .find(|s| s.node == node)
            .ok_or(FlashtestError::UnknownTest { node: node.to_string(), file })
    }

    fn node_dir(&self, node: &str) -> PathBuf {
        self.work_dir.join(node)
    }

    fn fresh_dir(path: &Path) -> Result<(), FlashtestError> {
        if path.exists() {
            fs::remove_dir_all(path).map_err(FlashtestError::file(path))?;
        }
        fs::create_dir_all(path).map_err(FlashtestError::file(path))
    }

    fn transfer(&self, application: &str, name: &str, dir: &Path) -> Result<(), FlashtestError> {
        let local = self.tests_dir(application).join(name);
        let src = if local.is_file() {
            local
        } else {
            self.source.parent().unwrap_or(Path::new(".")).join(name)
        };
        let dst = dir.join(Path::new(name).file_name().unwrap_or_default());
        fs::copy(&src, &dst).map_err(FlashtestError::file(&src))?;
        Ok(())
    }

    /// Sets up and runs one leg in `dir`; returns the final checkpoint.
    fn run_leg(
        &self,
        entry: &SuiteEntry,
        spec: &TestSpec,
        parfile: &str,
        dir: &Path,
        restart: Option<&Path>,
    ) -> Result<PathBuf, FlashtestError> {
        Self::fresh_dir(dir)?;
        for t in &spec.transfers {
            self.transfer(&entry.application, t, dir)?;
        }
        let mut args = vec![entry.application.clone()];
        args.extend(spec.setup_options.split_whitespace().map(str::to_string));
        let manifest = composer::setup(&self.source, &args)?;
        fs::write(dir.join("simulation.manifest"), manifest.emit()).map_err(FlashtestError::file(dir))?;
        let src = self.tests_dir(&entry.application).join(parfile);
        let text = fs::read_to_string(&src).map_err(FlashtestError::file(&src))?;
        let par = dir.join(Path::new(parfile).file_name().unwrap_or_default());
        fs::write(&par, &text).map_err(FlashtestError::file(&par))?;
        let params = load_params(&manifest, &text, Some(&par))?;
        let mut sim = Simulation::init(manifest, params, entry.workers)?;
        sim.set_output_dir(dir);
        match restart {
            Some(chk) => sim.restart(chk)?,
            None => sim.write_initial_output()?,
        }
        sim.evolve()?;
        let report = sim.finalize()?;
        let rpt = dir.join("run_report.toml");
        fs::write(&rpt, report.to_toml()).map_err(FlashtestError::file(&rpt))?;
        Ok(sim.last_checkpoint_path().expect("finalize writes a checkpoint"))
    }

    /// Compares a leg's output against the benchmark of the same name.
    fn check(&self, date: &str, node: &str, output: &Path, tol: f64) -> Result<Outcome, FlashtestError> {
        let name = output.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let bench = self.store.file(date, node, &name)?;
        match io::compare_files(output, &bench, tol) {
            Ok(r) => {
                let worst = r.vars.iter().map(|v| v.max_abs).fold(0.0, f64::max);
                Ok(match r.verdict {
                    Verdict::Success => Outcome::Pass(worst, r.to_string()),
                    Verdict::Failure => Outcome::Fail(worst, r.to_string()),
                })
            }
            Err(e @ (IoError::Incompatible(_) | IoError::GeometryMismatch { .. })) => {
                Ok(Outcome::Fail(f64::INFINITY, e.to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn record(&self, node: &str, legs: &[PathBuf]) -> Result<(), FlashtestError> {
        let out = RunOutputs { node: node.to_string(), legs: legs.to_vec() };
        let path = self.node_dir(node).join(super::harness::OUTPUTS_FILE);
        fs::write(&path, toml::to_string(&out).expect("outputs serialize")).map_err(FlashtestError::file(&path))
    }

    fn execute(&self, entry: &SuiteEntry) -> Result<Outcome, FlashtestError> {
        let spec = self.find_spec(&entry.application, &entry.node)?;
        let need = match spec.kind() {
            TestKind::Comparison => 1,
            TestKind::Composite => 2,
        };
        if spec.parfiles.len() < need {
            return Err(FlashtestError::Parfiles { node: spec.node.clone(), got: spec.parfiles.len(), need });
        }
        let base = self.node_dir(&entry.node);
        let first = self.run_leg(entry, &spec, &spec.parfiles[0], &base.join("run"), None)?;
        if spec.kind() == TestKind::Comparison {
            self.record(&entry.node, &[first.clone()])?;
            return self.check(&entry.cbase, &entry.node, &first, entry.tolerance);
        }
        let second = self.run_leg(entry, &spec, &spec.parfiles[1], &base.join("restart"), Some(&first));
        let legs: Vec<PathBuf> = std::iter::once(first.clone()).chain(second.as_ref().ok().cloned()).collect();
        self.record(&entry.node, &legs)?;
        let second = second?;
        let rbase = entry.rbase.as_deref().unwrap_or(&entry.cbase);
        match self.check(&entry.cbase, &entry.node, &first, entry.tolerance)? {
            fail @ Outcome::Fail(..) => Ok(fail),
            Outcome::Pass(e1, r1) => match self.check(rbase, &entry.node, &second, entry.tolerance)? {
                Outcome::Pass(e2, r2) => Ok(Outcome::Pass(e1.max(e2), format!("{r1}{r2}"))),
                Outcome::Fail(e2, r2) => Ok(Outcome::Fail(e1.max(e2), format!("{r1}{r2}"))),
            },
        }
    }

    /// Runs one suite entry. Problems that stop the test from producing a
    /// comparison are reported as ERROR, never FAIL.
    pub fn run_entry(&self, entry: &SuiteEntry) -> TestResult {
        let start = Instant::now();
        let (verdict, max_error, detail) = match self.execute(entry) {
            Ok(Outcome::Pass(e, d)) => (TestVerdict::Pass, e, d),
            Ok(Outcome::Fail(e, d)) => (TestVerdict::Fail, e, d),
            Err(e) => (TestVerdict::Error, f64::NAN, e.to_string()),
        };
        TestResult { test: entry.node.clone(), verdict, max_error, seconds: start.elapsed().as_secs_f64(), detail }
    }

    pub fn run_suite(&self, entries: &[SuiteEntry]) -> SuiteSummary {
        SuiteSummary { tests: entries.iter().map(|e| self.run_entry(e)).collect() }
    }

    /// Promotes the last recorded run of `node` to a benchmark dated `date`.
    pub fn approve(&self, node: &str, date: &str) -> Result<PathBuf, FlashtestError> {
        let path = self.node_dir(node).join(OUTPUTS_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(FlashtestError::NoOutputs(node.to_string()))
            }
            Err(e) => return Err(FlashtestError::file(&path)(e)),
        };
        let out: RunOutputs = toml::from_str(&text).map_err(|_| FlashtestError::NoOutputs(node.to_string()))?;
        self.store.approve(date, node, &out.legs)
    }
}
