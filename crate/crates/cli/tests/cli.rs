use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jsk_core::io::load_sketches;

fn jsk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jsk"))
        .args(args)
        .env_clear()
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

/// The four-relation query R1(a) - R2(b, c) - R3(d) on b, R4(e) on c.
fn branching(dir: &Path, rows: [&str; 4]) -> String {
    for ((name, header), body) in [("r1", "a"), ("r2", "b,c"), ("r3", "d"), ("r4", "e")].iter().zip(rows) {
        write(dir, &format!("{name}.csv"), &format!("{header}\n{body}"));
    }
    write(
        dir,
        "query.json",
        r#"{
        "relations": [
            {"name": "R1", "source": "r1.csv", "join_columns": ["a:int"]},
            {"name": "R2", "source": "r2.csv", "join_columns": ["b:int", "c:int"]},
            {"name": "R3", "source": "r3.csv", "join_columns": ["d:int"]},
            {"name": "R4", "source": "r4.csv", "join_columns": ["e:int"]}
        ],
        "joins": [["R1.a", "R2.b"], ["R3.d", "R2.b"], ["R4.e", "R2.c"]]
    }"#,
    )
}

fn pair(dir: &Path, left: &str, right: &str) -> String {
    write(dir, "l.csv", &format!("k\n{left}"));
    write(dir, "r.csv", &format!("k\n{right}"));
    write(
        dir,
        "pair.json",
        r#"{
        "relations": [
            {"name": "L", "source": "l.csv", "join_columns": ["k:int"]},
            {"name": "R", "source": "r.csv", "join_columns": ["k:int"]}
        ],
        "joins": [["L.k", "R.k"]]
    }"#,
    )
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(out)).unwrap()
}

#[test]
fn sketch_file_has_one_grid_per_relation_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let q = branching(dir.path(), ["1\n2\n", "1,3\n2,3\n", "2\n", "3\n4\n"]);
    let a = dir.path().join("a.jsk");
    let b = dir.path().join("b.jsk");
    for out in [&a, &b] {
        let args = [
            "sketch", "--query", &q, "--m", "8", "--reps", "5", "--seed", "7", "--out",
        ];
        stdout(&jsk(&[&args[..], &[out.to_str().unwrap()]].concat()));
    }
    let sketches = load_sketches(&a).unwrap();
    assert_eq!(sketches.len(), 4);
    for s in &sketches {
        assert_eq!((s.reps(), s.m()), (5, 8));
        assert_eq!(s.counters().len(), 40);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn estimate_of_empty_relations_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let q = pair(dir.path(), "", "");
    let s = dir.path().join("s.jsk");
    stdout(&jsk(&[
        "sketch",
        "--query",
        &q,
        "--m",
        "2^4",
        "--out",
        s.to_str().unwrap(),
    ]));
    let report = json(&jsk(&["estimate", "--sketches", s.to_str().unwrap(), "--query", &q]));
    assert_eq!(report["estimate"], 0.0);
    assert_eq!(report["per_repetition"].as_array().unwrap().len(), 5);
    assert_eq!(report["path"], "fft");
}

#[test]
fn naive_and_fft_paths_agree() {
    let dir = tempfile::tempdir().unwrap();
    let body: String = (0..40).map(|i| format!("{}\n", i % 7)).collect();
    let pairs: String = (0..40).map(|i| format!("{},{}\n", i % 5, i % 3)).collect();
    let q = branching(dir.path(), [&body, &pairs, &body, &body]);
    let s = dir.path().join("s.jsk");
    stdout(&jsk(&[
        "sketch",
        "--query",
        &q,
        "--m",
        "8",
        "--seed",
        "3",
        "--out",
        s.to_str().unwrap(),
    ]));
    let path = s.to_str().unwrap();
    let fft = json(&jsk(&["estimate", "--sketches", path, "--query", &q, "--path", "fft"]));
    let naive = json(&jsk(&[
        "estimate",
        "--sketches",
        path,
        "--query",
        &q,
        "--path",
        "naive",
        "--root",
        "R2.c",
    ]));
    let reps = |r: &serde_json::Value| -> Vec<f64> {
        r["per_repetition"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect()
    };
    for (x, y) in reps(&fft).iter().zip(reps(&naive)) {
        assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}");
    }
    let (x, y) = (fft["estimate"].as_f64().unwrap(), naive["estimate"].as_f64().unwrap());
    assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
}

#[test]
fn ams_file_defaults_to_ams_and_rejects_the_conv_path() {
    let dir = tempfile::tempdir().unwrap();
    let q = pair(dir.path(), "1\n1\n2\n", "1\n1\n3\n");
    let s = dir.path().join("s.jsk");
    let path = s.to_str().unwrap();
    stdout(&jsk(&[
        "sketch", "--query", &q, "--m", "16", "--method", "ams", "--out", path,
    ]));
    assert_eq!(
        json(&jsk(&["estimate", "--sketches", path, "--query", &q]))["method"],
        "ams"
    );
    let out = jsk(&["estimate", "--sketches", path, "--query", &q, "--path", "fft"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatch"));
}

#[test]
fn wide_ams_sketch_warns_about_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let q = pair(dir.path(), "1\n", "2\n");
    let s = dir.path().join("s.jsk");
    let out = jsk(&[
        "sketch",
        "--query",
        &q,
        "--m",
        "2^16",
        "--method",
        "ams",
        "--out",
        s.to_str().unwrap(),
    ]);
    stdout(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("WARN"));
    let narrow = jsk(&[
        "sketch",
        "--query",
        &q,
        "--m",
        "2^15",
        "--method",
        "ams",
        "--out",
        s.to_str().unwrap(),
    ]);
    assert!(narrow.stderr.is_empty());
}

#[test]
fn exact_counts() {
    let dir = tempfile::tempdir().unwrap();
    let q = pair(dir.path(), "1\n1\n2\n", "1\n1\n3\n");
    assert_eq!(stdout(&jsk(&["exact", "--query", &q])).trim(), "4");
    let q = pair(dir.path(), "1\n1\n2\n", "");
    assert_eq!(stdout(&jsk(&["exact", "--query", &q])).trim(), "0");
    let q = branching(dir.path(), ["1\n", "1,1\n", "1\n", "1\n"]);
    assert_eq!(stdout(&jsk(&["exact", "--query", &q])).trim(), "1");
}

struct Csv {
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn read(path: &Path) -> Csv {
        let text = fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# jsk bench results v1"));
        assert!(lines
            .next()
            .unwrap()
            .starts_with("kind,method,m,trial,seed,estimate,exact"));
        Csv {
            rows: lines.map(|l| l.split(',').map(str::to_owned).collect()).collect(),
        }
    }

    fn kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Vec<String>> + 'a {
        self.rows.iter().filter(move |r| r[0] == kind)
    }
}

fn sorted_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn bench_rows_are_complete_reproducible_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w");
    stdout(&jsk(&[
        "generate",
        "--out",
        w.to_str().unwrap(),
        "--tuples",
        "300",
        "--domain",
        "50",
        "--seed",
        "4",
    ]));
    let q = w.join("query.json");
    let q = q.to_str().unwrap();
    let exact: f64 = stdout(&jsk(&["exact", "--query", q])).trim().parse().unwrap();
    let run = |out: &Path| {
        let args = [
            "bench",
            "--query",
            q,
            "--m-sweep",
            "2^4..2^6",
            "--trials",
            "30",
            "--methods",
            "conv,ams",
        ];
        stdout(&jsk(&[&args[..], &["--out", out.to_str().unwrap()]].concat()));
        Csv::read(out)
    };
    let first = run(&dir.path().join("a.csv"));
    let second = run(&dir.path().join("b.csv"));

    let trials: Vec<_> = first.kind("trial").collect();
    assert_eq!(trials.len(), 2 * 3 * 30);
    for method in ["conv", "ams"] {
        for m in ["16", "32", "64"] {
            let rows: Vec<_> = trials.iter().filter(|r| r[1] == method && r[2] == m).collect();
            assert_eq!(rows.len(), 30);
            let ares: Vec<f64> = rows
                .iter()
                .map(|r| {
                    let est: f64 = r[5].parse().unwrap();
                    assert_eq!(r[6].parse::<f64>().unwrap(), exact);
                    let are: f64 = r[7].parse().unwrap();
                    assert!((are - (exact - est).abs() / exact.max(1.0)).abs() < 1e-12);
                    are
                })
                .collect();
            let summary = first.kind("summary").find(|r| r[1] == method && r[2] == m).unwrap();
            let median: f64 = summary[11].parse().unwrap();
            assert!((median - sorted_median(ares)).abs() < 1e-12);
        }
    }
    assert_eq!(first.kind("slope").count(), 2);

    // estimates and seeds do not depend on the run; timings may
    let key = |c: &Csv| -> Vec<(String, String)> { c.kind("trial").map(|r| (r[4].clone(), r[5].clone())).collect() };
    assert_eq!(key(&first), key(&second));
}

#[test]
fn throughput_on_empty_relation_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let q = pair(dir.path(), "", "");
    let table = stdout(&jsk(&[
        "throughput",
        "--query",
        &q,
        "--m-sweep",
        "2^2,2^3",
        "--methods",
        "conv,ams",
    ]));
    assert!(table.contains("(0 updates)"), "{table}");
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert_eq!(row.split_whitespace().last(), Some("0"), "{row}");
    }
}

#[test]
fn flags_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let q = pair(dir.path(), "1\n2\n", "2\n2\n");
    let s = dir.path().join("s.jsk");
    let out = Command::new(env!("CARGO_BIN_EXE_jsk"))
        .arg("sketch")
        .env_clear()
        .env("JSK_QUERY", &q)
        .env("JSK_M", "2^5")
        .env("JSK_REPS", "3")
        .env("JSK_OUT", &s)
        .output()
        .unwrap();
    stdout(&out);
    let sketches = load_sketches(&s).unwrap();
    assert_eq!((sketches[0].m(), sketches[0].reps()), (32, 3));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&jsk(&["--help"])), 0);
    assert_eq!(code(&jsk(&["--version"])), 0);
    assert_eq!(code(&jsk(&["frobnicate"])), 1);
    assert_eq!(code(&jsk(&["sketch", "--m", "8"])), 1);
    assert_eq!(code(&jsk(&["exact", "--query", "q.json", "--trials", "x"])), 1);

    // query problems
    let cyclic = write(
        dir.path(),
        "cyclic.json",
        r#"{
        "relations": [
            {"name": "A", "source": "l.csv", "join_columns": ["x:int", "y:int"]},
            {"name": "B", "source": "l.csv", "join_columns": ["x:int", "y:int"]}
        ],
        "joins": [["A.x", "B.x"], ["A.y", "B.y"]]
    }"#,
    );
    write(dir.path(), "l.csv", "x,y\n1,1\n");
    assert_eq!(code(&jsk(&["exact", "--query", &cyclic])), 2);
    let broken = write(dir.path(), "broken.json", "{ not json");
    assert_eq!(code(&jsk(&["exact", "--query", &broken])), 2);
    let q = pair(dir.path(), "1\n", "1\n");
    let s = dir.path().join("s.jsk");
    let s = s.to_str().unwrap();
    stdout(&jsk(&["sketch", "--query", &q, "--m", "4", "--out", s]));
    assert_eq!(
        code(&jsk(&["estimate", "--sketches", s, "--query", &q, "--root", "Z.z"])),
        2
    );
    assert_eq!(
        code(&jsk(&["estimate", "--sketches", s, "--query", &q, "--root", "9"])),
        2
    );

    // data problems
    let q = pair(dir.path(), "1\nseven\n", "1\n");
    let out = jsk(&["exact", "--query", &q]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("l.csv"));
    let junk = write(dir.path(), "junk.jsk", "not a sketch file");
    assert_eq!(code(&jsk(&["estimate", "--sketches", &junk, "--query", &q])), 3);
}
