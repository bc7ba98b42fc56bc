use rooftop_core::harness::{Tolerances, Verdict};
use rooftop_core::scenario::{corpus, emit, run_scenario, sweep_resolution, Format, Report, Scenario};

fn scenario(file: &str) -> Scenario {
    corpus().iter().find(|e| e.file == file).unwrap().scenario().unwrap()
}

#[test]
fn corpus_passes() {
    for entry in corpus() {
        let report = run_scenario(&entry.scenario().unwrap()).unwrap();
        assert!(report.passed(), "{} failed: {}", entry.file, report.to_json());
    }
}

#[test]
fn json_round_trip_keeps_digest() {
    let report = run_scenario(&scenario("e1.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e1.json");
    emit(&report, Format::Json, &path).unwrap();
    let back = Report::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back.digest, report.digest);
    assert_eq!(back.compute_digest(), report.digest);
}

#[test]
fn same_seed_same_json_apart_from_timing() {
    let s = scenario("random_phi.toml");
    let mut a = run_scenario(&s).unwrap();
    let mut b = run_scenario(&s).unwrap();
    assert_eq!(a.digest, b.digest);
    a.timing = Default::default();
    b.timing = Default::default();
    assert_eq!(a.to_json(), b.to_json());
    let c = run_scenario(&s.with_seed(s.seed + 1000)).unwrap();
    assert_ne!(c.digest, a.digest);
}

#[test]
fn toml_and_json_encodings_agree() {
    let s = scenario("rooftop_pair.toml");
    let again = Scenario::from_json(&s.canonical_json()).unwrap();
    assert_eq!(run_scenario(&s).unwrap().digest, run_scenario(&again).unwrap().digest);
}

#[test]
fn zero_tolerance_fails_with_nonzero_residuals() {
    let s = scenario("e1.toml").with_tolerances(&Tolerances::new().with("identity", 0.0));
    let report = run_scenario(&s).unwrap();
    assert!(!report.passed());
    let main = report.checks.iter().find(|c| c.name == "main").unwrap();
    assert_eq!(main.verdict, Verdict::Fail);
    assert!(main.residual("identity").unwrap().value > 0.0);
}

#[test]
fn kink_scenario_passes_through_expected_failure() {
    let report = run_scenario(&scenario("kink.toml")).unwrap();
    assert!(report.passed());
    let kink = report.checks.iter().find(|c| c.name == "kink").unwrap();
    assert_eq!(kink.verdict, Verdict::ExpectedFailure);
}

#[test]
fn csv_rows_match_residual_count() {
    let report = run_scenario(&scenario("e1.toml")).unwrap();
    let rows: usize = report.checks.iter().map(|c| c.residuals.len()).sum();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e1.csv");
    emit(&report, Format::Csv, &path).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["scenario", "check", "residual_name", "value", "threshold", "verdict"]);
    assert_eq!(reader.records().count(), rows);
}

#[test]
fn plotdata_has_envelope_and_measure_columns() {
    let report = run_scenario(&scenario("e1.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit(&report, Format::PlotData, dir.path()).unwrap();
    let main = files.iter().find(|p| p.file_name().unwrap().to_string_lossy() == "e1.corollary_i.csv").unwrap();
    let mut reader = csv::Reader::from_path(main).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["x", "f", "P", "ma_P_bin", "contact_ma_f_bin"]);
    assert_eq!(reader.records().count(), 2049);
}

#[test]
fn empty_report_emits_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    emit(&Report::empty("empty"), Format::Json, &path).unwrap();
    let back = Report::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(back.checks.is_empty());
    assert!(back.passed());
}

#[test]
fn unwritable_path_is_an_error() {
    let report = Report::empty("x");
    assert!(emit(&report, Format::Json, std::path::Path::new("/nonexistent/dir/x.json")).is_err());
}

#[test]
fn sweep_flags_exact_and_expected_failure_series() {
    let mut s = scenario("kink.toml");
    s.checks.retain(|c| c.kind == "kink");
    let sweep = sweep_resolution(&s, &[257, 513, 1025]).unwrap();
    assert_eq!(sweep.series[0].flag.as_deref(), Some("non-converging as expected"));
    assert!(!sweep.series[0].converging);

    let mut s = scenario("e1.toml");
    s.checks.retain(|c| c.kind == "mass");
    let sweep = sweep_resolution(&s, &[257, 513, 1025]).unwrap();
    assert!(sweep.series[0].order.is_none());
    assert!(sweep_resolution(&s, &[513, 257, 1025]).is_err());
}

#[test]
fn invalid_scenarios_list_every_problem() {
    let text = r#"
name = "broken"
[grid]
dim = 1
lo = -1.0
hi = 1.0
resolution = 65
[class]
interval = [-1.0, 1.0]
[[barriers]]
name = "f"
expr = "x^^2"
[[checks]]
kind = "nonsense"
"#;
    let err = Scenario::from_toml(text).and_then(|s| s.validate()).unwrap_err().to_string();
    assert!(err.contains("unknown check 'nonsense'"), "{err}");
    assert!(err.contains("barrier 'f': parse error at byte 2"), "{err}");
}
