use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn cdtree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdtree"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn step_csv(dir: &TempDir, n: usize, noise: usize, seed: u64) -> PathBuf {
    let out = path(dir, &format!("step_{n}_{noise}_{seed}.csv"));
    let o = cdtree(&[
        "synth",
        "step",
        "--n",
        &n.to_string(),
        "--noise",
        &noise.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn fit_model(dir: &TempDir, data: &Path, name: &str, extra: &[&str]) -> (PathBuf, Output) {
    let model = path(dir, name);
    let mut args = vec![
        "fit",
        "--train",
        s(data),
        "--target",
        "y",
        "--out",
        s(&model),
    ];
    args.extend_from_slice(extra);
    let o = cdtree(&args);
    (model, o)
}

#[test]
fn fit_step_data_finds_two_leaves() {
    let dir = TempDir::new().unwrap();
    let data = step_csv(&dir, 2000, 2, 1);
    let (model, o) = fit_model(&dir, &data, "m.json", &["--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("leaves=2"), "{out}");
    for key in [
        "total_bits=",
        "data_nll_bits=",
        "regret_bits=",
        "structure_bits=",
        "split_bits=",
        "bin_count_bits=",
    ] {
        assert!(out.contains(key), "missing {key} in {out}");
    }
    assert!(model.exists());
}

#[test]
fn zero_c_is_rejected() {
    let dir = TempDir::new().unwrap();
    let data = step_csv(&dir, 100, 0, 1);
    let (_, o) = fit_model(&dir, &data, "m.json", &["--c", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("c must be ≥ 1"), "{}", stderr(&o));
}

#[test]
fn missing_target_names_the_column() {
    let dir = TempDir::new().unwrap();
    let data = step_csv(&dir, 50, 0, 1);
    let model = path(&dir, "m.json");
    let o = cdtree(&[
        "fit",
        "--train",
        s(&data),
        "--target",
        "price",
        "--out",
        s(&model),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("price"), "{}", stderr(&o));
}

#[test]
fn input_problems_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "missing.csv");
    let model = path(&dir, "m.json");
    let o = cdtree(&[
        "fit",
        "--train",
        s(&missing),
        "--target",
        "y",
        "--out",
        s(&model),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let ragged = path(&dir, "ragged.csv");
    fs::write(&ragged, "a,y\n1,2\n3\n").unwrap();
    let o = cdtree(&[
        "fit",
        "--train",
        s(&ragged),
        "--target",
        "y",
        "--out",
        s(&model),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let blank = path(&dir, "blank.csv");
    fs::write(&blank, "a,y\n1,2\n,3\n").unwrap();
    let o = cdtree(&[
        "fit",
        "--train",
        s(&blank),
        "--target",
        "y",
        "--out",
        s(&model),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains('a'));

    let garbage = path(&dir, "garbage.json");
    fs::write(&garbage, "{ not a model").unwrap();
    let o = cdtree(&["export", "--model", s(&garbage)]);
    assert_eq!(o.status.code(), Some(1));

    assert_eq!(cdtree(&["fit", "--bogus"]).status.code(), Some(1));
    assert_eq!(cdtree(&["--help"]).status.code(), Some(0));
}

#[test]
fn fits_and_predictions_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = step_csv(&dir, 1500, 3, 2);
    let (a, _) = fit_model(&dir, &data, "a.json", &["--seed", "9"]);
    let (b, _) = fit_model(&dir, &data, "b.json", &["--seed", "9", "--sequential"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let pa = path(&dir, "pa.csv");
    let pb = path(&dir, "pb.csv");
    assert!(cdtree(&[
        "predict",
        "--model",
        s(&a),
        "--data",
        s(&data),
        "--out",
        s(&pa)
    ])
    .status
    .success());
    assert!(cdtree(&[
        "predict",
        "--model",
        s(&b),
        "--data",
        s(&data),
        "--out",
        s(&pb)
    ])
    .status
    .success());
    let pred = fs::read_to_string(&pa).unwrap();
    assert_eq!(pred, fs::read_to_string(&pb).unwrap());
    assert_eq!(pred.lines().count(), 1501);
    assert!(pred.starts_with("row,log_density\n"));
}

#[test]
fn exported_json_reimports_with_identical_predictions() {
    let dir = TempDir::new().unwrap();
    let data = step_csv(&dir, 1000, 1, 4);
    let (model, _) = fit_model(&dir, &data, "m.json", &[]);
    let copy = path(&dir, "copy.json");
    let o = cdtree(&[
        "export",
        "--model",
        s(&model),
        "--format",
        "json",
        "--out",
        s(&copy),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(&model).unwrap(), fs::read(&copy).unwrap());

    let p1 = path(&dir, "p1.csv");
    let p2 = path(&dir, "p2.csv");
    cdtree(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&p1),
    ]);
    cdtree(&[
        "predict",
        "--model",
        s(&copy),
        "--data",
        s(&data),
        "--out",
        s(&p2),
    ]);
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
}

#[test]
fn predict_resolves_columns_by_name() {
    let dir = TempDir::new().unwrap();
    let data = step_csv(&dir, 800, 1, 5);
    let (model, _) = fit_model(&dir, &data, "m.json", &[]);
    let text = fs::read_to_string(&data).unwrap();
    let mut reordered = String::new();
    for line in text.lines() {
        let f: Vec<&str> = line.split(',').collect();
        reordered.push_str(&format!("{},{},{}\n", f[2], f[1], f[0]));
    }
    let shuffled = path(&dir, "shuffled.csv");
    fs::write(&shuffled, reordered).unwrap();
    let p1 = path(&dir, "p1.csv");
    let p2 = path(&dir, "p2.csv");
    assert!(cdtree(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&p1)
    ])
    .status
    .success());
    assert!(cdtree(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&shuffled),
        "--out",
        s(&p2)
    ])
    .status
    .success());
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
}

#[test]
fn binary_split_exports_two_rules() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "smoker.csv");
    let mut text = String::from("smoker,cost\n");
    for i in 0..600 {
        let smoker = i % 2;
        let u = (i as f64 * 0.618_033_988_75).fract();
        let cost = if smoker == 1 { 5.0 + u } else { u };
        text.push_str(&format!("{smoker},{cost}\n"));
    }
    fs::write(&data, text).unwrap();
    let model = path(&dir, "m.json");
    let o = cdtree(&[
        "fit",
        "--train",
        s(&data),
        "--target",
        "cost",
        "--out",
        s(&model),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = cdtree(&["export", "--model", s(&model), "--format", "text"]);
    let rules: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(rules.len(), 2, "{rules:?}");
    assert!(
        rules[0].starts_with("smoker = 0 → leaf 0 (n=300, h="),
        "{}",
        rules[0]
    );
    assert!(
        rules[1].starts_with("smoker = 1 → leaf 1 (n=300, h="),
        "{}",
        rules[1]
    );

    let o = cdtree(&["export", "--model", s(&model), "--format", "dot"]);
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("->").count(), 2);
}

#[test]
fn density_grid_integrates_to_one() {
    let dir = TempDir::new().unwrap();
    let data = step_csv(&dir, 1000, 0, 6);
    let (model, _) = fit_model(&dir, &data, "m.json", &[]);
    for (flag, value) in [("--row", "7"), ("--x", "0.8")] {
        let out = path(&dir, "grid.csv");
        let mut args = vec![
            "density",
            "--model",
            s(&model),
            "--points",
            "10000",
            "--out",
            s(&out),
        ];
        args.extend_from_slice(&[flag, value]);
        if flag == "--row" {
            args.extend_from_slice(&["--data", s(&data)]);
        }
        let o = cdtree(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let curve: Vec<(f64, f64)> = fs::read_to_string(&out)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let (y, d) = l.split_once(',').unwrap();
                (y.parse().unwrap(), d.parse().unwrap())
            })
            .collect();
        assert_eq!(curve.len(), 10_000);
        let area: f64 = curve
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum();
        assert!((area - 1.0).abs() < 1e-3, "{area}");
    }
    let out = path(&dir, "bad.csv");
    let o = cdtree(&[
        "density",
        "--model",
        s(&model),
        "--x",
        "0.1,0.2",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = cdtree(&[
        "density",
        "--model",
        s(&model),
        "--row",
        "5000",
        "--data",
        s(&data),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluate_and_cv_report() {
    let dir = TempDir::new().unwrap();
    let data = step_csv(&dir, 1000, 1, 8);
    let (model, _) = fit_model(&dir, &data, "m.json", &[]);
    let o = cdtree(&["evaluate", "--model", s(&model), "--data", s(&data)]);
    assert!(o.status.success());
    let out = stdout(&o);
    let nll: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("mean_nll_nats="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((nll + std::f64::consts::LN_2).abs() < 0.15, "{nll}");

    let o = cdtree(&["cv", "--data", s(&data), "--target", "y", "--folds", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("fold,n_test,mean_nll_nats,zero_density_events,leaves\n"));
    assert!(out.contains("mean_nll_nats,sd_nll_nats,mean_leaves\n"));
    assert_eq!(out.lines().filter(|l| l.split(',').count() == 5).count(), 5);

    let o = cdtree(&["cv", "--data", s(&data), "--target", "y", "--folds", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn robustness_rarely_splits_on_injected_columns() {
    let dir = TempDir::new().unwrap();
    let data = step_csv(&dir, 2000, 0, 10);
    let o = cdtree(&[
        "robustness",
        "--data",
        s(&data),
        "--target",
        "y",
        "--mode",
        "independent",
        "--w",
        "20",
        "--seeds",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 3);
    let clean = rows.iter().filter(|r| r[3] == "0").count();
    assert!(clean >= 2, "{out}");
}
