use std::path::Path;
use std::process::{Command, Output};

fn freqboost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqboost"))
        .args(args)
        .output()
        .expect("run freqboost")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn assert_error(o: &Output, code: i32, kind: &str) {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
    let err = stderr(o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error: {kind}")), "{err}");
}

fn pi_column(text: &str) -> Vec<f64> {
    text.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn stationary_two_states() {
    let o = freqboost(&["stationary", "--M", "2", "--L", "2", "--nu", "0.7,0.3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("state,units1,units2,pi\n"));
    let pi = pi_column(&text);
    let exact = [9.0 / 79.0, 21.0 / 79.0, 49.0 / 79.0];
    for (a, b) in pi.iter().zip(exact) {
        assert!((a - b).abs() < 1e-12, "{pi:?}");
    }
    assert!(text.contains("# expected frequencies: 0.75316455696"));
}

#[test]
fn increment_and_capacity_are_interchangeable() {
    let by_l = freqboost(&["stationary", "--M", "3", "--L", "4", "--nu", "0.5,0.25,0.25"]);
    let by_s = freqboost(&["stationary", "--M", "3", "--s", "0.25", "--nu", "0.5,0.25,0.25"]);
    assert!(by_l.status.success());
    assert_eq!(stdout(&by_l), stdout(&by_s));
}

#[test]
fn usage_errors_exit_2() {
    let cases: [&[&str]; 6] = [
        &["stationary", "--M", "2", "--s", "0.3", "--nu", "0.7,0.3"],
        &["stationary", "--M", "2", "--s", "0.5", "--L", "2", "--nu", "0.7,0.3"],
        &["stationary", "--M", "2", "--L", "2", "--nu", "0.7,0.3", "--solver", "qr"],
        &["stationary", "--M", "3", "--L", "2", "--nu", "0.7,0.3"],
        &["stationary", "--M", "2", "--L", "2", "--nu", "0.7,0.4"],
        &["experiment", "--figure", "fig9"],
    ];
    for args in cases {
        let o = freqboost(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        let err = stderr(&o);
        assert!(err.starts_with("error: ") && err.trim_end().lines().count() == 1, "{args:?}: {err}");
    }
    assert_error(&freqboost(&["stationary", "--M", "2"]), 2, "usage");
}

#[test]
fn missing_data_file_exits_1() {
    let o = freqboost(&["fit", "--data", "/nonexistent/obs.csv"]);
    assert_error(&o, 1, "io");
    assert!(stderr(&o).contains("/nonexistent/obs.csv"));
}

#[test]
fn help_and_version_exit_0() {
    for args in [&["--help"][..], &["--version"], &["fit", "--help"]] {
        assert!(freqboost(args).status.success(), "{args:?}");
    }
}

fn converge_to(path: &Path) {
    let o = freqboost(&[
        "converge", "--M", "2", "--L", "20", "--nu", "0.7,0.3", "--trials", "50", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn converge_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    converge_to(&a);
    converge_to(&b);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("figure,M,L,s,nu1,nu2,"));
    assert!(text.lines().nth(1).unwrap().starts_with("converge,2,20,0.05,"));
}

#[test]
fn trajectory_rows_cover_every_step() {
    let o = freqboost(&["trajectory", "--M", "2", "--L", "10", "--nu", "0.6,0.4", "--iters", "50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,p1,p2"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() >= 50);
    assert!(rows[0].starts_with("0,0.5,0.5"));
}

#[test]
fn fit_reports_bundled_observations() {
    let o = freqboost(&["fit"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("M,L_fit,s_fit,sse\n"));
    let b_edge = text.lines().find(|l| l.starts_with("vehicle_B_edge,")).unwrap();
    let fields: Vec<&str> = b_edge.split(',').collect();
    assert_eq!(fields[2].parse::<f64>().unwrap(), 0.73);
    assert!((fields[1].parse::<f64>().unwrap() - 0.57).abs() < 1e-12);
}

#[test]
fn experiment_list_names_every_figure() {
    let o = freqboost(&["experiment", "--list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for id in ["fig1a", "fig1b", "fig2a", "fig2b", "fig3a", "fig3b", "fig4a", "fig4b"] {
        assert!(text.contains(id), "{id}");
    }
}
