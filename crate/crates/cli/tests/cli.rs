use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(bin: &str, args: &[&str]) -> std::process::Output {
    Command::new(bin).args(args).output().unwrap()
}

fn ok(out: &std::process::Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn setup_run_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let obj = tmp.path().join("object");
    let source = root().join("source");
    let (src, o) = (source.to_str().unwrap(), obj.to_str().unwrap());
    ok(&run(
        env!("CARGO_BIN_EXE_setup"),
        &["--source", src, "--object", o, "incompFlow/ChannelFlow", "-auto", "+uniform", "-2d", "-nxb=16", "-nyb=16"],
    ));
    assert!(obj.join("simulation.manifest").is_file());
    let par = obj.join("flash.par");
    let text = fs::read_to_string(&par).unwrap()
        .replace("nend = 400", "nend = 6")
        .replace("checkpointFileIntervalStep = 100", "checkpointFileIntervalStep = 3");
    fs::write(&par, text).unwrap();

    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, np) in [(&a, "1"), (&b, "4")] {
        fs::create_dir_all(dir).unwrap();
        for f in ["simulation.manifest", "flash.par"] {
            fs::copy(obj.join(f), dir.join(f)).unwrap();
        }
        let out = ok(&run(
            env!("CARGO_BIN_EXE_run"),
            &["--object", dir.to_str().unwrap(), "--par", dir.join("flash.par").to_str().unwrap(), "--np", np],
        ));
        let report: toml_lite::Table = toml_lite::parse(&out);
        assert_eq!(report.get("steps").map(String::as_str), Some("6"));
    }
    let chk = |d: &Path, n: u32| d.join(format!("INS_Simulation_chk_{n:04}"));
    let same = run(env!("CARGO_BIN_EXE_sfocu"), &[chk(&a, 2).to_str().unwrap(), chk(&b, 2).to_str().unwrap()]);
    assert!(ok(&same).contains("SUCCESS"));
    let differ = run(env!("CARGO_BIN_EXE_sfocu"), &[chk(&a, 1).to_str().unwrap(), chk(&b, 2).to_str().unwrap()]);
    assert_eq!(differ.status.code(), Some(1));
    let loose = run(
        env!("CARGO_BIN_EXE_sfocu"),
        &[chk(&a, 1).to_str().unwrap(), chk(&b, 2).to_str().unwrap(), "--tol", "100"],
    );
    assert!(loose.status.success());
    let missing = run(env!("CARGO_BIN_EXE_sfocu"), &["/nonexistent/a", "/nonexistent/b"]);
    assert_eq!(missing.status.code(), Some(2));

    // Restart from the middle checkpoint reproduces the final one.
    let c = tmp.path().join("c");
    fs::create_dir_all(&c).unwrap();
    for f in ["simulation.manifest", "flash.par"] {
        fs::copy(obj.join(f), c.join(f)).unwrap();
    }
    ok(&run(
        env!("CARGO_BIN_EXE_run"),
        &[
            "--object",
            c.to_str().unwrap(),
            "--par",
            c.join("flash.par").to_str().unwrap(),
            "--restart",
            chk(&a, 1).to_str().unwrap(),
        ],
    ));
    assert!(ok(&run(env!("CARGO_BIN_EXE_sfocu"), &[chk(&a, 2).to_str().unwrap(), chk(&c, 2).to_str().unwrap()]))
        .contains("SUCCESS"));
}

#[test]
fn pargen_writes_unit_grouped_parfile() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("flash.par");
    let fixtures = root().join("crates/core/tests/fixtures");
    let (manifest, toml) = (fixtures.join("golden/flowboiling.manifest"), fixtures.join("liquid_jet.toml"));
    let args = [
        "--manifest",
        manifest.to_str().unwrap(),
        "--toml",
        toml.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    ok(&run(env!("CARGO_BIN_EXE_pargen"), &args));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("# Multiphase\nmph_invWeber = 0.004\n"));
    let bad = run(env!("CARGO_BIN_EXE_pargen"), &["--manifest", "/nonexistent", "--toml", "x", "--out", "y"]);
    assert!(!bad.status.success());
}

#[test]
fn flashtest_runs_suites_and_approves() {
    let tmp = tempfile::tempdir().unwrap();
    let source = root().join("source");
    let common = |extra: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = vec![
            "--source".into(),
            source.to_str().unwrap().into(),
            "--work-dir".into(),
            tmp.path().join("work").to_str().unwrap().into(),
            "--benchmark-dir".into(),
            tmp.path().join("bench").to_str().unwrap().into(),
        ];
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let exe = env!("CARGO_BIN_EXE_flashtest");
    let empty = tmp.path().join("empty.suite");
    fs::write(&empty, "# nothing yet\n").unwrap();
    let out = Command::new(exe).args(common(&["run-suite", empty.to_str().unwrap()])).output().unwrap();
    assert!(out.status.success());

    let suite = tmp.path().join("site.suite");
    let node = "Comparison/incompFlow/HeatConduction/2d/uniform";
    fs::write(&suite, format!("incompFlow/HeatConduction -t \"{node}\" -np 2 -cbase 2024-08-01\n")).unwrap();
    let first = Command::new(exe).args(common(&["run-suite", suite.to_str().unwrap()])).output().unwrap();
    assert_eq!(first.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&first.stdout).contains("ERROR"));
    ok(&Command::new(exe).args(common(&["approve", node, "--date", "2024-08-01"])).output().unwrap());
    let again = Command::new(exe).args(common(&["approve", node, "--date", "2024-08-01"])).output().unwrap();
    assert_eq!(again.status.code(), Some(2));
    let summary = tmp.path().join("summary.toml");
    let second = Command::new(exe)
        .args(common(&["run-suite", suite.to_str().unwrap(), "--summary", summary.to_str().unwrap()]))
        .output()
        .unwrap();
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stdout));
    assert!(fs::read_to_string(summary).unwrap().contains("verdict = \"PASS\""));
    let bad = tmp.path().join("bad.suite");
    fs::write(&bad, "incompFlow/HeatConduction -t \"Unit/x\" -cbase 2024-08-01\n").unwrap();
    let out = Command::new(exe).args(common(&["run-suite", bad.to_str().unwrap()])).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

/// Flat `key = value` reader for the top-level keys of a run report.
mod toml_lite {
    pub type Table = std::collections::BTreeMap<String, String>;

    pub fn parse(text: &str) -> Table {
        text.lines()
            .take_while(|l| !l.starts_with('['))
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect()
    }
}
