use std::fs;
use std::path::{Path, PathBuf};

use mphflow::flashtest::{parse_suite, parse_tests_yaml, Harness, SuiteEntry, TestVerdict};

fn source() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../source")
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let dst = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_tree(&e.path(), &dst);
        } else {
            fs::copy(e.path(), dst).unwrap();
        }
    }
}

fn entry(line: &str) -> SuiteEntry {
    parse_suite(line).unwrap().remove(0)
}

#[test]
fn every_shipped_test_spec_runs_and_self_benchmarks() {
    let tmp = tempfile::tempdir().unwrap();
    let h = Harness::new(source(), tmp.path().join("bench"), tmp.path().join("work"));
    let apps = ["ChannelFlow", "FlowBoiling", "StaticBubble", "CylinderFlow", "HeatConduction"];
    for app in apps {
        let app = format!("incompFlow/{app}");
        let text = fs::read_to_string(h.tests_dir(&app).join("tests.yaml")).unwrap();
        for spec in parse_tests_yaml(&text).unwrap() {
            let rbase = if spec.node.starts_with("Composite/") { " -rbase 2024-05-02" } else { "" };
            let e = entry(&format!("{app} -t \"{}\" -np 2 -cbase 2024-05-01{rbase}", spec.node));
            let first = h.run_entry(&e);
            assert_eq!(first.verdict, TestVerdict::Error, "{}", first.detail);
            assert!(first.detail.contains("no benchmark"), "{}", first.detail);
            h.approve(&spec.node, "2024-05-01").unwrap();
            if !rbase.is_empty() {
                h.approve(&spec.node, "2024-05-02").unwrap();
            }
            let again = h.run_entry(&e);
            assert_eq!(again.verdict, TestVerdict::Pass, "{}: {}", spec.node, again.detail);
            assert_eq!(again.max_error, 0.0);
        }
    }
}

#[test]
fn perturbed_benchmark_fails_and_corrupt_restart_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let mutated = tmp.path().join("mutated");
    copy_tree(&source(), &mutated);
    let par = mutated.join("Simulation/SimulationMain/incompFlow/ChannelFlow/tests/test_2d.par");
    let text = fs::read_to_string(&par).unwrap().replace("ins_invReynolds = 0.01", "ins_invReynolds = 0.011");
    fs::write(&par, text).unwrap();

    let bench = tmp.path().join("bench");
    let node = "Comparison/incompFlow/ChannelFlow/2d/uniform";
    let e = entry(&format!("incompFlow/ChannelFlow -t \"{node}\" -np 1 -cbase 2024-06-01"));
    let gen = Harness::new(&mutated, &bench, tmp.path().join("work_gen"));
    gen.run_entry(&e);
    gen.approve(node, "2024-06-01").unwrap();

    let h = Harness::new(source(), &bench, tmp.path().join("work"));
    let r = h.run_entry(&e);
    assert_eq!(r.verdict, TestVerdict::Fail, "{}", r.detail);
    assert!(r.max_error > 0.0);
    assert!(r.detail.contains("FAILURE"));

    let tol = entry(&format!("incompFlow/ChannelFlow -t \"{node}\" -np 1 -cbase 2024-06-01 -tol 10"));
    assert_eq!(h.run_entry(&tol).verdict, TestVerdict::Pass);

    let missing = entry(&format!("incompFlow/ChannelFlow -t \"{node}\" -np 1 -cbase 1999-01-01"));
    assert_eq!(h.run_entry(&missing).verdict, TestVerdict::Error);

    // A restart leg that cannot start is an error, not a mismatch.
    let bad = tmp.path().join("badsrc");
    copy_tree(&source(), &bad);
    let p2 = bad.join("Simulation/SimulationMain/incompFlow/ChannelFlow/tests/test_2d_part2.par");
    fs::write(&p2, "nend = -1\n").unwrap();
    let node = "Composite/incompFlow/ChannelFlow/2d/uniform";
    let c = entry(&format!("incompFlow/ChannelFlow -t \"{node}\" -np 1 -cbase 2024-06-01 -rbase 2024-06-01"));
    let r = Harness::new(&bad, &bench, tmp.path().join("work_bad")).run_entry(&c);
    assert_eq!(r.verdict, TestVerdict::Error, "{}", r.detail);
}

#[test]
fn suite_rerun_is_identical_apart_from_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let h = Harness::new(source(), tmp.path().join("bench"), tmp.path().join("work"));
    let node = "Comparison/incompFlow/HeatConduction/2d/uniform";
    let e = entry(&format!("incompFlow/HeatConduction -t \"{node}\" -np 3 -cbase 2024-07-01"));
    h.run_entry(&e);
    h.approve(node, "2024-07-01").unwrap();
    let strip = |mut s: mphflow::flashtest::SuiteSummary| {
        for t in &mut s.tests {
            t.seconds = 0.0;
        }
        s.to_toml()
    };
    let a = strip(h.run_suite(std::slice::from_ref(&e)));
    let b = strip(h.run_suite(std::slice::from_ref(&e)));
    assert_eq!(a, b);
    assert!(h.run_suite(&[]).tests.is_empty());
}
