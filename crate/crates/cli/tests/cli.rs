use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn stepdown(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stepdown"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let o = stepdown(args, cwd);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn outputs(manifest: &Path) -> BTreeMap<String, String> {
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
    serde_json::from_value(v["outputs"].clone()).unwrap()
}

const SIM: [&str; 8] = [
    "--set",
    "n_patients=12",
    "--set",
    "n_replicates=2",
    "--set",
    "truth_paths=100",
    "--seed",
    "11",
];

fn simulate(dir: &Path, out: &str) {
    let mut args = vec!["simulate", "--out", out];
    args.extend(SIM);
    ok(&args, dir);
}

fn fit(dir: &Path, cohort: &str, out: &str, variant: &str) {
    ok(
        &[
            "fit",
            "--cohort",
            cohort,
            "--out",
            out,
            "--variant",
            variant,
            "--set",
            "iterations=200",
            "--set",
            "chains=2",
            "--seed",
            "5",
        ],
        dir,
    );
}

fn first_patient(dir: &Path, cohort: &str) -> String {
    let text = fs::read_to_string(dir.join(cohort).join("patients.csv")).unwrap();
    text.lines()
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .to_string()
}

fn table(csv: &str) -> Vec<(u8, f64, u8)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].parse().unwrap(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn help_and_version_exit_zero() {
    let tmp = TempDir::new().unwrap();
    assert!(stepdown(&["--help"], tmp.path()).status.success());
    assert!(stepdown(&["--version"], tmp.path()).status.success());
    assert!(stepdown(&["fit", "--help"], tmp.path()).status.success());
}

#[test]
fn usage_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(stepdown(&[], d).status.code(), Some(1));
    assert_eq!(stepdown(&["simulate"], d).status.code(), Some(1));
    assert_eq!(stepdown(&["frobnicate"], d).status.code(), Some(1));
    let o = stepdown(&["simulate", "--out", "x", "--set", "no_such_key=1"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));
    let o = stepdown(&["simulate", "--out", "x", "--set", "n_patients=lots"], d);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_writes_valid_replicates() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "sim");
    for r in ["rep_000", "rep_001"] {
        let rep = d.join("sim").join(r);
        for f in [
            "patients.csv",
            "rounds.csv",
            "events.csv",
            "replicate.kv",
            "truth/z.csv",
            "truth/probabilities.csv",
        ] {
            assert!(rep.join(f).is_file(), "{r}/{f} missing");
        }
        let out = ok(&["validate", "--cohort", rep.to_str().unwrap()], d);
        assert!(out.contains("12 patients"), "{out}");
        let probs = fs::read_to_string(rep.join("truth/probabilities.csv")).unwrap();
        assert_eq!(probs.lines().count(), 1 + 12 * 6);
    }
    assert!(!d.join("sim/rep_002").exists());
    assert!(d.join("sim/manifest.json").is_file());
    assert!(d.join("sim/simulate.kv").is_file());
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "a");
    simulate(d, "b");
    let a = outputs(&d.join("a/manifest.json"));
    assert!(a.len() >= 10);
    assert_eq!(a, outputs(&d.join("b/manifest.json")));

    let mut args = vec!["simulate", "--out", "c"];
    args.extend(SIM);
    let last = args.len() - 1;
    args[last] = "12";
    ok(&args, d);
    assert_ne!(a, outputs(&d.join("c/manifest.json")));
}

#[test]
fn validate_rejects_broken_cohort() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "sim");
    let rounds = d.join("sim/rep_000/rounds.csv");
    let text = fs::read_to_string(&rounds).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut f: Vec<String> = lines[1].split(',').map(String::from).collect();
    f[4] = "9".into();
    lines[1] = f.join(",");
    fs::write(&rounds, lines.join("\n") + "\n").unwrap();
    let o = stepdown(&["validate", "--cohort", "sim/rep_000"], d);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
}

#[test]
fn missing_cohort_names_the_path() {
    let tmp = TempDir::new().unwrap();
    let o = stepdown(
        &["fit", "--cohort", "no/such/dir", "--out", "f"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such/dir"));
}

#[test]
fn fit_predict_round_trip() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "sim");
    fit(d, "sim/rep_000", "fit", "latent");
    for f in [
        "posterior.kv",
        "draws_globals.csv",
        "diagnostics.csv",
        "levels.csv",
        "manifest.json",
    ] {
        assert!(d.join("fit").join(f).is_file(), "{f} missing");
    }
    let id = first_patient(d, "sim/rep_000");
    let t = table(&ok(
        &[
            "predict",
            "--fit",
            "fit",
            "--patient",
            &id,
            "--horizon",
            "26",
        ],
        d,
    ));
    assert_eq!(t.len(), 6);
    assert_eq!(t.iter().map(|r| r.2 as u32).sum::<u32>(), 1);
    for (k, r) in t.iter().enumerate() {
        assert_eq!(r.0 as usize, k);
        assert!((0.0..=1.0).contains(&r.1));
    }
    for w in t.windows(2) {
        assert!(w[1].1 <= w[0].1 + 1e-12, "not monotone: {t:?}");
    }

    let zero = table(&ok(
        &[
            "predict",
            "--fit",
            "fit",
            "--patient",
            &id,
            "--horizon",
            "0",
        ],
        d,
    ));
    assert!(zero.iter().all(|r| r.1 == 0.0));

    ok(
        &[
            "predict",
            "--fit",
            "fit",
            "--patient",
            &id,
            "--out",
            "pred/a.csv",
        ],
        d,
    );
    assert!(d.join("pred/a.csv.manifest.json").is_file());
    let again = ok(&["predict", "--fit", "fit", "--patient", &id], d);
    assert_eq!(fs::read_to_string(d.join("pred/a.csv")).unwrap(), again);

    let o = stepdown(&["predict", "--fit", "fit", "--patient", "nobody"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn glmer_fit_has_no_latent_paths() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "sim");
    fit(d, "sim/rep_000", "fit", "glmer");
    let names: Vec<String> = fs::read_dir(d.join("fit"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(
        !names.iter().any(|n| n.contains("path") || n.contains("_z")),
        "{names:?}"
    );
    let globals = fs::read_to_string(d.join("fit/draws_globals.csv")).unwrap();
    let header = globals.lines().next().unwrap();
    assert!(
        !header.contains("ou_") && !header.contains("rho"),
        "{header}"
    );
}

#[test]
fn fit_is_deterministic_and_independent_of_jobs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "sim");
    let base = [
        "fit",
        "--cohort",
        "sim/rep_000",
        "--set",
        "iterations=150",
        "--set",
        "chains=3",
        "--seed",
        "2",
    ];
    let mut a = base.to_vec();
    a.extend(["--out", "a", "--jobs", "1"]);
    let mut b = base.to_vec();
    b.extend(["--out", "b", "--jobs", "3"]);
    ok(&a, d);
    ok(&b, d);
    assert_eq!(
        outputs(&d.join("a/manifest.json")),
        outputs(&d.join("b/manifest.json"))
    );
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "sim");
    fit(d, "sim/rep_000", "fit", "indep");
    let other = TempDir::new().unwrap();
    let o = stepdown(
        &[
            "--from-manifest",
            d.join("fit/manifest.json").to_str().unwrap(),
            "--out",
            "replayed",
        ],
        other.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        outputs(&d.join("fit/manifest.json")),
        outputs(&other.path().join("replayed/manifest.json"))
    );

    fs::write(d.join("sim/rep_000/events.csv"), "tampered\n").unwrap();
    let o = stepdown(
        &["--from-manifest", "fit/manifest.json", "--out", "again"],
        d,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("events.csv"));
}

#[test]
fn evaluate_scores_fitted_replicates() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "sim");
    for r in 0..2 {
        for v in ["latent", "indep", "glmer"] {
            fit(d, &format!("sim/rep_00{r}"), &format!("fit_{v}_{r}"), v);
        }
    }
    let mut args = vec![
        "evaluate",
        "--truth",
        "sim",
        "--out",
        "ev",
        "--set",
        "n_boot=50",
    ];
    let fits: Vec<String> = (0..2)
        .flat_map(|r| ["latent", "indep", "glmer"].map(|v| format!("fit_{v}_{r}")))
        .collect();
    for f in &fits {
        args.extend(["--fit", f.as_str()]);
    }
    ok(&args, d);
    let report = fs::read_to_string(d.join("ev/comparison_report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 3 * 4, "{report}");
    for name in ["latent", "indep", "glmer"] {
        assert!(d.join(format!("ev/roc_{name}.csv")).is_file());
        assert!(d.join(format!("ev/calibration_{name}.csv")).is_file());
    }
    let gamma = fs::read_to_string(d.join("ev/gamma_estimates.csv")).unwrap();
    assert_eq!(gamma.lines().count(), 2 + 2 * 3);
}

#[test]
fn evaluate_fits_when_no_fits_given() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "sim");
    let args = [
        "evaluate",
        "--truth",
        "sim",
        "--out",
        "ev",
        "--set",
        "iterations=150",
        "--set",
        "chains=1",
        "--set",
        "n_boot=50",
        "--set",
        "methods=latent,glmer",
    ];
    ok(&args, d);
    let mut again = args.to_vec();
    again[4] = "ev2";
    ok(&again, d);
    let report = fs::read_to_string(d.join("ev/comparison_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 2 * 4, "{report}");
    assert_eq!(
        outputs(&d.join("ev/manifest.json")),
        outputs(&d.join("ev2/manifest.json"))
    );
}
