use std::fs;
use std::path::Path;

use gid_core::pipeline::schema::check_outputs;
use gid_core::pipeline::{emit_report, run_pipeline, Manifest, RunConfig, Stage, StageStatus};
use gid_core::Error;

fn small(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.gen.n_persons = 3000;
    cfg.gen.n_firms = 400;
    cfg.paths.output_dir = out.to_path_buf();
    cfg
}

fn status(m: &Manifest, s: Stage) -> StageStatus {
    m.stage(s).unwrap().status
}

#[test]
fn full_run_matches_schema_and_caches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let m = run_pipeline(&cfg, None).unwrap();
    for s in Stage::ALL {
        assert_eq!(status(&m, s), StageStatus::Ran, "{}", s.name());
    }
    let problems = check_outputs(dir.path(), &["table2.csv", "table5.csv", "table6.csv", "fig18.csv", "fig19.csv"]).unwrap();
    assert!(problems.is_empty(), "{problems:#?}");
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    for label in ["table2", "table6", "fig1 ", "fig19", "figA22"] {
        let line = report.lines().find(|l| l.starts_with(label)).unwrap();
        assert!(!line.ends_with("skipped"), "{line}");
    }

    let again = run_pipeline(&cfg, None).unwrap();
    for s in Stage::ALL.iter().filter(|s| **s != Stage::Report) {
        assert_eq!(status(&again, *s), StageStatus::Cached, "{}", s.name());
    }

    // an analysis change reruns the analysis stages only
    let mut changed = cfg.clone();
    changed.analysis.n_bins = 20;
    let m = run_pipeline(&changed, None).unwrap();
    for s in [Stage::Gen, Stage::Impute] {
        assert_eq!(status(&m, s), StageStatus::Cached, "{}", s.name());
    }
    for s in [Stage::Measures, Stage::Indicators, Stage::Decompose] {
        assert_eq!(status(&m, s), StageStatus::Ran, "{}", s.name());
    }
}

#[test]
fn disabled_stage_is_reported_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    run_pipeline(&cfg, None).unwrap();
    assert!(dir.path().join("fig8.csv").exists());
    cfg.stages.mobility = false;
    let m = run_pipeline(&cfg, None).unwrap();
    assert_eq!(status(&m, Stage::Mobility), StageStatus::Skipped);
    assert!(!dir.path().join("fig8.csv").exists());
    let report = emit_report(dir.path()).unwrap();
    for label in ["fig8 ", "fig9 ", "figA17", "slope"] {
        let line = report.lines().find(|l| l.starts_with(label)).unwrap();
        assert!(line.ends_with("skipped"), "{line}");
    }
    assert!(!report.lines().find(|l| l.starts_with("table2")).unwrap().ends_with("skipped"));
}

#[test]
fn single_stage_runs_upstream_and_reuses_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.stages.akm = false;
    let m = run_pipeline(&cfg, Some(Stage::Akm)).unwrap();
    assert_eq!(status(&m, Stage::Akm), StageStatus::Ran);
    assert!(m.stage(Stage::Indicators).is_none());
    assert!(dir.path().join("person_effects.csv").exists());
    let m = run_pipeline(&cfg, Some(Stage::Measures)).unwrap();
    assert_eq!(status(&m, Stage::Gen), StageStatus::Cached);
    assert_eq!(status(&m, Stage::Measures), StageStatus::Ran);
}

#[test]
fn runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(&small(a.path()), None).unwrap();
    run_pipeline(&small(b.path()), None).unwrap();
    let mut n = 0;
    for entry in walk(a.path()) {
        let rel = entry.strip_prefix(a.path()).unwrap();
        assert_eq!(fs::read(&entry).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{}", rel.display());
        n += 1;
    }
    assert!(n > 60);
}

fn walk(p: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(p).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

#[test]
fn failing_stage_is_named_and_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.stages.gen = false;
    cfg.paths.input_dir = Some(dir.path().join("no-such-dir"));
    match run_pipeline(&cfg, None) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "impute"),
        other => panic!("expected a stage error, got {other:?}"),
    }
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn report_needs_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let err = emit_report(dir.path()).unwrap_err().to_string();
    assert!(err.contains(&dir.path().display().to_string()), "{err}");
}

#[test]
fn external_inputs_without_generator() {
    let gen_dir = tempfile::tempdir().unwrap();
    let mut cfg = small(gen_dir.path());
    run_pipeline(&cfg, Some(Stage::Gen)).unwrap();
    let out = tempfile::tempdir().unwrap();
    cfg.stages.gen = false;
    cfg.stages.decompose = false;
    cfg.paths.input_dir = Some(gen_dir.path().join("input"));
    cfg.paths.output_dir = out.path().to_path_buf();
    let m = run_pipeline(&cfg, None).unwrap();
    assert_eq!(status(&m, Stage::Gen), StageStatus::Skipped);
    assert!(out.path().join("impute/persons.csv").exists());
    assert!(out.path().join("table2.csv").exists());
    assert!(!out.path().join("table5.csv").exists());
}
