use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qttosc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qttosc"))
        .current_dir(dir)
        .env_remove("QTTOSC_TABLE_DIR")
        .args(args)
        .output()
        .expect("spawn qttosc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn linear_table(dir: &Path) -> Output {
    qttosc(
        dir,
        &["precompute", "--osc", "x", "--N", "2", "--wmin", "0", "--wmax", "100", "--L", "12", "--out", "lin.qttp"],
    )
}

#[test]
fn precompute_reports_parity_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let o = linear_table(dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r[0][..3], ["index", "part", "status"]);
    let status: Vec<(&str, &str, &str)> = r[1..].iter().map(|x| (&*x[0], &*x[1], &*x[2])).collect();
    assert_eq!(
        status,
        [
            ("0", "R", "ok"),
            ("0", "I", "zero"),
            ("1", "R", "zero"),
            ("1", "I", "ok"),
            ("2", "R", "ok"),
            ("2", "I", "zero")
        ]
    );
    assert!(dir.path().join("lin.qttp").exists());
    assert!(dir.path().join("lin.qttp.manifest.json").exists());
}

#[test]
fn integrate_constant_at_zero_and_out_of_grid() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(linear_table(dir.path()).status.code(), Some(0));
    let o = qttosc(dir.path(), &["integrate", "--table", "lin.qttp", "--f", "1", "--omega", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r[0], ["omega", "omega_rounded", "re", "im", "rounding_bound", "flagged"]);
    let re: f64 = r[1][2].parse().unwrap();
    let im: f64 = r[1][3].parse().unwrap();
    assert!((re - 2.0).abs() < 1e-12 && im.abs() < 1e-12, "{re} {im}");

    let o = qttosc(dir.path(), &["integrate", "--table", "lin.qttp", "--omega", "101"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("frequency outside precomputed grid"), "{}", stderr(&o));
}

#[test]
fn integrate_frequency_list_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(linear_table(dir.path()).status.code(), Some(0));
    fs::write(dir.path().join("w.txt"), "omega\n3\n40.25\n99\n").unwrap();
    let o = qttosc(
        dir.path(),
        &["integrate", "--table", "lin.qttp", "--f", "x^2", "--omega-list", "w.txt", "--out", "o.csv"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&fs::read_to_string(dir.path().join("o.csv")).unwrap());
    assert_eq!(r.len(), 4);
    for row in &r[1..] {
        let w: f64 = row[1].parse().unwrap();
        let re: f64 = row[2].parse().unwrap();
        // Re of the integral of x^2 e^{iwx} over [-1, 1].
        let exact = 2.0 * w.sin() / w + 4.0 * w.cos() / (w * w) - 4.0 * w.sin() / (w * w * w);
        assert!((re - exact).abs() < 1e-9, "w={w}: {re} vs {exact}");
        let im: f64 = row[3].parse().unwrap();
        assert!(im.abs() < 1e-9);
    }
}

#[test]
fn kernel_and_fourier_tables() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = qttosc(
        p,
        &[
            "precompute",
            "--osc",
            "cos(w*sin(x))",
            "--kind",
            "kernel",
            "--N",
            "4",
            "--wmin",
            "0",
            "--wmax",
            "20",
            "--L",
            "10",
            "--out",
            "k.qttp",
        ],
    );
    assert!(matches!(o.status.code(), Some(0)), "{}", stderr(&o));
    let o = qttosc(p, &["integrate", "--table", "k.qttp", "--omega", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let re: f64 = rows(&stdout(&o))[1][2].parse().unwrap();
    assert!((re - 2.0).abs() < 1e-9, "{re}");

    let o = qttosc(
        p,
        &["precompute", "--osc", "-x", "--N", "6", "--wmin", "0", "--wmax", "10", "--L", "12", "--out", "f.qttp"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = qttosc(p, &["integrate", "--table", "f.qttp", "--fourier", "0", "1", "--omega", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    let (re, im): (f64, f64) = (r[1][2].parse().unwrap(), r[1][3].parse().unwrap());
    assert!((re - 1.0).abs() < 1e-10 && im.abs() < 1e-10, "{re} {im}");

    // A Fourier transform needs g(x) = -x.
    let o = linear_table(p);
    assert_eq!(o.status.code(), Some(0));
    let o = qttosc(p, &["integrate", "--table", "lin.qttp", "--fourier", "0", "1", "--omega", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(qttosc(p, &["precompute", "--osc", "x"]).status.code(), Some(2));
    assert_eq!(qttosc(p, &["frobnicate"]).status.code(), Some(2));
    let bad_expr = qttosc(
        p,
        &["precompute", "--osc", "x +* 2", "--N", "1", "--wmin", "0", "--wmax", "1", "--L", "4", "--out", "a.qttp"],
    );
    assert_eq!(bad_expr.status.code(), Some(2));
    let bad_grid = qttosc(
        p,
        &["precompute", "--osc", "x", "--N", "1", "--wmin", "5", "--wmax", "1", "--L", "4", "--out", "a.qttp"],
    );
    assert_eq!(bad_grid.status.code(), Some(2));
    let o = qttosc(
        p,
        &[
            "precompute",
            "--osc",
            "x",
            "--N",
            "1",
            "--wmin",
            "0",
            "--wmax",
            "100",
            "--L",
            "12",
            "--rounding-target",
            "1e-6",
            "--out",
            "a.qttp",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(qttosc(p, &["integrate", "--table", "missing.qttp", "--omega", "1"]).status.code(), Some(2));
    fs::write(p.join("junk.qttp"), b"not a table").unwrap();
    assert_eq!(qttosc(p, &["integrate", "--table", "junk.qttp", "--omega", "1"]).status.code(), Some(2));
}

#[test]
fn table_dir_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    fs::create_dir(&tables).unwrap();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_qttosc"))
            .current_dir(dir.path())
            .env("QTTOSC_TABLE_DIR", &tables)
            .args(args)
            .output()
            .unwrap()
    };
    let o =
        run(&["precompute", "--osc", "x", "--N", "1", "--wmin", "0", "--wmax", "10", "--L", "8", "--out", "t.qttp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tables.join("t.qttp").exists());
    assert_eq!(run(&["integrate", "--table", "t.qttp", "--omega", "2"]).status.code(), Some(0));
}

#[test]
fn convergence_of_constant_factor() {
    let dir = tempfile::tempdir().unwrap();
    let o = qttosc(
        dir.path(),
        &[
            "convergence",
            "--osc",
            "x^2",
            "--f",
            "1",
            "--omegas",
            "0,10,75",
            "--Nmax",
            "4",
            "--L",
            "14",
            "--out",
            "c.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&fs::read_to_string(dir.path().join("c.csv")).unwrap());
    assert_eq!(r[0], ["omega", "omega_rounded", "N", "error", "relative", "flagged"]);
    assert_eq!(r.len(), 1 + 3 * 5);
    for row in &r[1..] {
        let err: f64 = row[3].parse().unwrap();
        assert!(err < 1e-9, "{row:?}");
    }
}

#[test]
fn ranks_continues_past_failures() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.csv"),
        "osc,kind,k,part,wmin,wmax,L,eps_cross\nx,,0,R,0,100,10,\nx^2,phase,3,I,0,100,12,1e-9\nx +,,0,R,0,1,5,\n",
    )
    .unwrap();
    let o = qttosc(dir.path(), &["ranks", "--config", "c.csv", "--out", "r.csv"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().unwrap().clone();
    assert_eq!(header.iter().next_back(), Some("status"));
    let status = header.iter().position(|h| h == "status").unwrap();
    let rank = header.iter().position(|h| h == "effective_rank").unwrap();
    let records: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 3);
    assert_eq!(&records[0][status], "ok");
    let r: f64 = records[0][rank].parse().unwrap();
    assert!(r > 1.0 && r < 20.0);
    assert_eq!(&records[1][status], "zero");
    assert!(records[2][status].starts_with("error"));
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = qttosc(
        p,
        &[
            "precompute",
            "--osc",
            "x^2",
            "--N",
            "3",
            "--wmin",
            "0",
            "--wmax",
            "50",
            "--L",
            "10",
            "--out",
            "t.qttp",
            "--report",
            "r.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("t.qttp.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "precompute");
    assert_eq!(manifest["parameters"]["eps_cross"], 1e-11);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);

    let elsewhere = tempfile::tempdir().unwrap();
    let manifest_path = p.join("t.qttp.manifest.json");
    let o = qttosc(elsewhere.path(), &["replay", "--manifest", manifest_path.to_str().unwrap(), "--into", "again"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(elsewhere.path().join("again").join("t.qttp").exists());

    // Tampering with a recorded output is detected.
    let report = p.join("r.csv");
    let text = fs::read_to_string(&report).unwrap().replacen(",ok,", ",zero,", 1);
    fs::write(&report, text).unwrap();
    let o = qttosc(p, &["replay", "--manifest", "t.qttp.manifest.json", "--into", "third"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("differ"));
}
