use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eikon"))
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn records(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    let rows = r.records().map(Result::unwrap).collect();
    (header, rows)
}

fn field<'a>(header: &csv::StringRecord, row: &'a csv::StringRecord, name: &str) -> &'a str {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    &row[i]
}

fn num(header: &csv::StringRecord, row: &csv::StringRecord, name: &str) -> f64 {
    field(header, row, name).parse().unwrap()
}

#[test]
fn hamilton_jacobi_grid_matches_the_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("hj.csv");
    let scenario = scenarios_dir().join("hamilton_jacobi.json");
    let o = run(&["evaluate", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let (header, rows) = records(&out);
    assert_eq!(header.iter().collect::<Vec<_>>(), ["t", "x1", "x2", "root", "u", "res_closed", "res_fd", "rank", "status"]);
    assert_eq!(rows.len(), 75);
    for row in &rows {
        assert_eq!(field(&header, row, "status"), "ok");
        let t = num(&header, row, "t");
        let (x1, x2) = (num(&header, row, "x1"), num(&header, row, "x2"));
        let exact = -(x1 * x1 + x2 * x2) / (4.0 * t);
        assert!((num(&header, row, "u") - exact).abs() <= 1e-8, "{row:?}");
    }
}

#[test]
fn exp_reports_no_root_inside_the_discriminant_disc() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("exp.csv");
    let scenario = scenarios_dir().join("exponential.json");
    let o = run(&["evaluate", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));

    let (header, rows) = records(&out);
    let mut no_root = 0;
    for row in &rows {
        let t = num(&header, row, "t");
        let r2 = num(&header, row, "x1").powi(2) + num(&header, row, "x2").powi(2);
        let status = field(&header, row, "status");
        if r2 < 8.0 * t - 1e-9 {
            assert_eq!(status, "no_root", "{row:?}");
            assert_eq!(field(&header, row, "root"), "-1");
            assert_eq!(field(&header, row, "rank"), "-1");
            assert!(num(&header, row, "u").is_nan());
            no_root += 1;
        } else if r2 > 8.0 * t + 1e-9 {
            assert_eq!(status, "ok", "{row:?}");
        } else {
            assert_eq!(status, "branch_jump", "caustic point {row:?}");
        }
    }
    assert!(no_root > 0);
    // Two roots off the caustic, sorted by u.
    let ok: Vec<_> = rows.iter().filter(|r| field(&header, r, "status") == "ok").collect();
    for pair in ok.chunks(2) {
        assert_eq!(field(&header, pair[0], "root"), "0");
        assert_eq!(field(&header, pair[1], "root"), "1");
        assert!(num(&header, pair[0], "u") <= num(&header, pair[1], "u"));
    }
}

#[test]
fn all_no_root_grid_exits_two() {
    let dir = TempDir::new().unwrap();
    let s = write(
        &dir,
        "s.json",
        r#"{"n": 1, "family": {"family": "exp"}, "psi": "0.5*tau1^2",
            "grid": {"t": {"min": 1, "max": 2, "steps": 2}, "x": [{"min": -1, "max": 1, "steps": 3}]}}"#,
    );
    let o = run(&["evaluate", "--scenario", s.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 7);
    assert!(stdout.lines().skip(1).all(|l| l.ends_with(",no_root")));
}

#[test]
fn bad_scenarios_exit_one_with_a_message() {
    let dir = TempDir::new().unwrap();
    let grid = r#""grid": {"t": {"min": 1, "max": 1, "steps": 1}, "x": [{"min": 0, "max": 1, "steps": 2}, {"min": 0, "max": 1, "steps": 2}]}"#;
    let cases = [
        (format!(r#"{{"n": 2, "k": 3, "family": {{"family": "exp"}}, "psi": "0", {grid}}}"#), "k exceeds n"),
        (format!(r#"{{"n": 2, "family": {{"family": "exp"}}, "psi": "tau3", {grid}}}"#), "psi"),
        (format!(r#"{{"n": 2, "family": {{"family": "exp"}}, "psi": "0", "colour": 1, {grid}}}"#), "colour"),
        (r#"{"n": 2, "family": {"family": "exp"}, "psi": "0", "grid": {"t": {"min": 0, "max": 1, "steps": "3"}, "x": []}}"#.to_string(), "grid.t.steps"),
        (format!(r#"{{"n": 2, "family": {{"family": "quadratic", "eps1": -1, "eps2": -1}}, "psi": "0", {grid}}}"#), "family"),
    ];
    for (body, needle) in cases {
        let s = write(&dir, "bad.json", &body);
        let o = run(&["evaluate", "--scenario", s.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{body}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "expected `{needle}` in: {err}");
    }
    let o = run(&["evaluate", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_table_exit_codes() {
    let dir = TempDir::new().unwrap();
    let table = |row: usize, params: &str| {
        write(&dir, &format!("row{row}.json"), &format!(r#"{{"table": {{"row": {row}, "n": 2, "samples": 40, "params": {params}}}}}"#))
    };

    for row in [0, 2, 5, 8, 12] {
        let s = table(row, "{}");
        let o = run(&["verify-table", "--scenario", s.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "row {row}: {}", String::from_utf8_lossy(&o.stdout));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("rejected (control)"));
    }

    let s = table(6, r#"{"beta": 2}"#);
    assert_eq!(run(&["verify-table", "--scenario", s.to_str().unwrap()]).status.code(), Some(1));
    let s = table(8, r#"{"eps1": -1, "eps2": -1}"#);
    assert_eq!(run(&["verify-table", "--scenario", s.to_str().unwrap()]).status.code(), Some(1));
    let s = table(13, "{}");
    assert_eq!(run(&["verify-table", "--scenario", s.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn verify_table_csv_lists_every_field() {
    let dir = TempDir::new().unwrap();
    let s = write(&dir, "s.json", r#"{"table": {"row": 1, "n": 1, "samples": 20}}"#);
    let out = dir.path().join("t.csv");
    let o = run(&["verify-table", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = records(&out);
    assert_eq!(header.iter().collect::<Vec<_>>(), ["generator", "control", "samples", "max_defect", "passed"]);
    assert!(rows.iter().any(|r| &r[0] == "T_delta"));
    assert_eq!(rows.iter().filter(|r| &r[1] == "true").count(), 2);
}

#[test]
fn flow_exit_codes() {
    let scenario = scenarios_dir().join("quadratic_row8.json");
    let s = scenario.to_str().unwrap();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("flow.csv");

    let o = run(&["flow", "--scenario", s, "--generator", "D", "--eps", "-0.4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = records(&out);
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| num(&header, r, "res_fd") <= 1e-4));

    for bad in ["K_u", "K_1", "nope"] {
        let o = run(&["flow", "--scenario", s, "--generator", bad, "--eps", "0.1"]);
        assert_eq!(o.status.code(), Some(1), "{bad}");
    }
}

#[test]
fn csv_is_identical_across_thread_counts_and_runs() {
    let dir = TempDir::new().unwrap();
    let scenario = scenarios_dir().join("exponential.json");
    let mut outputs = Vec::new();
    for threads in ["1", "3", "0", "3"] {
        let out = dir.path().join(format!("exp{}.csv", outputs.len()));
        let o = run(&["evaluate", "--scenario", scenario.to_str().unwrap(), "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        outputs.push(fs::read(&out).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn seed_flag_overrides_the_scenario_seed() {
    let scenario = scenarios_dir().join("quadratic_row8.json");
    let s = scenario.to_str().unwrap();
    let a = run(&["evaluate", "--scenario", s, "--seed", "1"]);
    let b = run(&["evaluate", "--scenario", s, "--seed", "1", "--threads", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn rank_reports_singular_values() {
    let scenario = scenarios_dir().join("quadratic_row8.json");
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("rank.csv");
    let o = run(&["rank", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = records(&out);
    assert_eq!(header.iter().collect::<Vec<_>>(), ["t", "x1", "x2", "root", "rank", "sv1", "sv2", "status"]);
    for row in &rows {
        assert_eq!(field(&header, row, "rank"), "1");
        assert!(num(&header, row, "sv1") >= num(&header, row, "sv2"));
    }
}

#[test]
fn shipped_scenarios_exit_zero() {
    for entry in fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        let o = run(&["evaluate", "--scenario", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", path.display());
        let has_table = fs::read_to_string(&path).unwrap().contains("\"table\"");
        if has_table {
            let o = run(&["verify-table", "--scenario", path.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", path.display());
        }
    }
}

#[test]
fn flows_of_the_shipped_solutions() {
    let dir = scenarios_dir();
    for (file, generator, eps) in [("hamilton_jacobi.json", "p_t", "0.3"), ("exponential.json", "G_5", "0.5"), ("quadratic_row8.json", "J_t1", "0.3")] {
        let s = dir.join(file);
        let o = run(&["flow", "--scenario", s.to_str().unwrap(), "--generator", generator, "--eps", eps]);
        assert_eq!(o.status.code(), Some(0), "{file} {generator}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn flow_takes_row_parameters_from_the_family() {
    let dir = TempDir::new().unwrap();
    let s = write(
        &dir,
        "pow.json",
        r#"{"n": 2, "family": {"family": "power", "beta": 4}, "psi": "0.5*(tau1^2 + tau2^2)",
            "grid": {"t": {"min": 0.2, "max": 1, "steps": 3}, "x": [{"min": -2, "max": 2, "steps": 5}, {"min": -2, "max": 2, "steps": 5}]}}"#,
    );
    let out = dir.path().join("g6.csv");
    let o = run(&["flow", "--scenario", s.to_str().unwrap(), "--generator", "G_6", "--eps", "0.4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = records(&out);
    let ok: Vec<_> = rows.iter().filter(|r| field(&header, r, "status") == "ok").collect();
    assert!(!ok.is_empty());
    assert!(ok.iter().all(|r| num(&header, r, "res_fd") <= 1e-6));
}

#[test]
fn schema_covers_the_shipped_scenarios() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/scenario.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&fs::read_to_string(root).unwrap()).unwrap();
    let props = schema["properties"].as_object().unwrap();
    let mut names: Vec<&str> = props.keys().map(String::as_str).collect();
    names.sort_unstable();
    assert_eq!(names, ["branch", "family", "grid", "k", "linear", "n", "newton", "psi", "rank_tol", "rng_seed", "seeds", "table", "w"]);

    for entry in fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        for key in doc.as_object().unwrap().keys() {
            assert!(props.contains_key(key), "{}: `{key}` missing from the schema", path.display());
        }
    }
}
