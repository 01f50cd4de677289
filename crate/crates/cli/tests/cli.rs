use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const COHORTS: usize = 17;

fn header() -> String {
    let mut h = String::from("name");
    for sex in ['m', 'f'] {
        for c in 0..COHORTS {
            h.push_str(&format!(",{sex}{:02}", c * 5));
        }
    }
    h
}

fn row(name: &str, rate: f64) -> String {
    let mut r = name.to_string();
    for i in 0..2 * COHORTS {
        r.push_str(&format!(
            ",{}",
            500.0 * (1.0 - rate).powi((i % COHORTS) as i32)
        ));
    }
    r
}

fn data_dir() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("pyramids.csv");
    let rows = [("Old", 0.01), ("Mid", 0.12), ("Young", 0.3), ("Flat", 0.0)];
    let mut text = header();
    text.push('\n');
    for (n, r) in rows {
        text.push_str(&row(n, r));
        text.push('\n');
    }
    std::fs::write(&path, text).unwrap();
    (dir, path)
}

fn ego(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ego"))
        .args(args)
        .env_remove("EGO_DATA_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .trim()
        .to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn compare_with_itself() {
    let (_d, data) = data_dir();
    let o = ego(&["compare", "Mid", "Mid", "--data", p(&data)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(field(&text, "D:"), "1");
    assert_eq!(field(&text, "K:"), "0.0001");
    assert_eq!(field(&text, "K_cont:"), "0");
}

#[test]
fn unknown_name_fails() {
    let (_d, data) = data_dir();
    let o = ego(&["compare", "Mid", "Atlantis", "--data", p(&data)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("name not found"));
}

#[test]
fn increments_sum_to_k_cont() {
    let (_d, data) = data_dir();
    let o = ego(&[
        "compare",
        "Old",
        "Young",
        "--data",
        p(&data),
        "--increments",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let k_cont: f64 = field(&text, "K_cont:").parse().unwrap();
    let rows: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with('m') || l.starts_with('f'))
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(rows.len(), 34);
    assert!((rows.iter().sum::<f64>() - k_cont).abs() <= 1e-12 * k_cont);
}

#[test]
fn data_dir_env_var() {
    let (dir, _) = data_dir();
    let o = Command::new(env!("CARGO_BIN_EXE_ego"))
        .args(["compare", "Old", "Mid"])
        .env("EGO_DATA_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ego(&["compare", "Old", "Mid"]).status.code() == Some(2));
}

#[test]
fn batch_model_query_is_deterministic() {
    let (_d, data) = data_dir();
    let a = ego(&["batch", "--model", "exp:0.30", "--data", p(&data)]);
    let b = ego(&[
        "batch",
        "--model",
        "exp:0.30",
        "--data",
        p(&data),
        "--parallel",
        "1",
    ]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 1 + 4);
    assert!(text.lines().nth(1).unwrap().starts_with("E30,Old,"));
}

#[test]
fn batch_empty_table() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, format!("{}\n", header())).unwrap();
    let o = ego(&["batch", "--model", "uniform", "--data", p(&path)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "query,target,delta,d,k,k_cont\n");
}

#[test]
fn mu_poles_and_swap() {
    let (_d, data) = data_dir();
    let o = ego(&["mu", "Old", "Young", "--data", p(&data)]);
    assert!(o.status.success());
    let mu = |text: &str, name: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .unwrap()
            .split(',')
            .nth(5)
            .unwrap()
            .parse()
            .unwrap()
    };
    let text = stdout(&o);
    assert_eq!(mu(&text, "Old"), 100.0);
    assert_eq!(mu(&text, "Young"), 0.0);
    let swapped = stdout(&ego(&["mu", "Young", "Old", "--data", p(&data)]));
    let sum = mu(&text, "Mid") + mu(&swapped, "Mid");
    assert!((sum - 100.0).abs() < 1e-12);
}

#[test]
fn mu_identical_poles_flag_undefined() {
    let (_d, data) = data_dir();
    let o = ego(&["mu", "Mid", "Mid", "--data", p(&data)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o)
        .lines()
        .any(|l| l.starts_with("Mid,") && l.contains("undefined")));
    assert!(ego(&["mu", "Mid", "Mid", "--data", p(&data), "--lenient"])
        .status
        .success());
}

#[test]
fn model_prints_combined_cohorts() {
    let o = ego(&["model", "--kind", "exp", "--rate", "0.30"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let combined: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("cohort"))
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(&combined[..2], ["30.07", "21.05"]);
}

#[test]
fn punif_default_in_range() {
    let (d, data) = data_dir();
    let index = d.path().join("index.csv");
    assert!(
        ego(&["mu", "Old", "Young", "--data", p(&data), "--out", p(&index)])
            .status
            .success()
    );
    let o = ego(&["punif", p(&index)]);
    assert!(o.status.success());
    for line in stdout(&o).lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=100.0).contains(&v), "{line}");
    }
}

#[test]
fn report_mu_vs_ppb() {
    let (d, data) = data_dir();
    let index = d.path().join("index.csv");
    assert!(
        ego(&["mu", "Old", "Young", "--data", p(&data), "--out", p(&index)])
            .status
            .success()
    );
    let ind = d.path().join("ind.csv");
    std::fs::write(
        &ind,
        "name,indicator,value\nOld,birth_rate,8\nMid,birth_rate,20\nYoung,birth_rate,45\nFlat,birth_rate,12\nElsewhere,birth_rate,30\n",
    )
    .unwrap();
    let o = ego(&[
        "report",
        "--index",
        p(&index),
        "--indicators",
        p(&ind),
        "--x",
        "mu",
        "--y",
        "ppb",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("# fit: slope=")));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Elsewhere"));

    let svg = ego(&[
        "report",
        "--index",
        p(&index),
        "--indicators",
        p(&ind),
        "--x",
        "mu",
        "--y",
        "ppb",
        "--format",
        "svg",
    ]);
    assert!(stdout(&svg).starts_with("<svg"));
}

#[test]
fn store_put_and_combine() {
    let (d, data) = data_dir();
    let store = d.path().join("inc.tsv");
    assert!(ego(&[
        "store",
        "put",
        p(&store),
        "Old",
        "Young",
        "--data",
        p(&data)
    ])
    .status
    .success());
    let full: f64 = stdout(&ego(&["store", "combine", p(&store), "Old", "Young"]))
        .trim()
        .parse()
        .unwrap();
    let male: f64 = stdout(&ego(&[
        "store",
        "combine",
        p(&store),
        "Old",
        "Young",
        "--sex",
        "male",
    ]))
    .trim()
    .parse()
    .unwrap();
    let female: f64 = stdout(&ego(&[
        "store",
        "combine",
        p(&store),
        "Old",
        "Young",
        "--sex",
        "female",
    ]))
    .trim()
    .parse()
    .unwrap();
    assert!((male + female - full).abs() <= 1e-12 * full);
    let compared = stdout(&ego(&["compare", "Old", "Young", "--data", p(&data)]));
    let k_cont: f64 = field(&compared, "K_cont:").parse().unwrap();
    assert!((full - k_cont).abs() <= 1e-12 * k_cont);
    assert_eq!(
        stdout(&ego(&["store", "list", p(&store)])).lines().count(),
        1 + 34
    );
    assert!(!ego(&["store", "combine", p(&store), "Old", "Mid"])
        .status
        .success());
}

#[test]
fn ingest_reports_bad_rows() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("raw.csv");
    let bad = row("Bad", 0.1).replacen(",500", ",-3", 1);
    std::fs::write(
        &path,
        format!("{}\n{}\n{}\n", header(), row("Good", 0.1), bad),
    )
    .unwrap();
    let o = ego(&["ingest", p(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 2);
    assert!(ego(&["ingest", p(&path), "--lenient"]).status.success());
}

#[test]
fn rejects_bad_delta_and_metric() {
    for delta in ["0", "-1", "1.5", "abc"] {
        assert!(!ego(&["model", "--kind", "uniform", "--delta", delta])
            .status
            .success());
    }
    assert!(ego(&["model", "--kind", "uniform", "--delta", "1"])
        .status
        .success());
    assert!(!ego(&["model", "--kind", "uniform", "--metric", "cosine"])
        .status
        .success());
}
