use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use soiltag::io;

fn soiltag(args: &[&str], out: &Path, seed_env: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_soiltag"));
    c.args(args).arg("--out-dir").arg(out);
    match seed_env {
        Some(s) => c.env(soiltag::cli::SEED_ENV, s),
        None => c.env_remove(soiltag::cli::SEED_ENV),
    };
    c.output().unwrap()
}

fn write(dir: &Path, name: &str, body: serde_json::Value) -> String {
    let p = dir.join(name);
    fs::write(&p, body.to_string()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let empty = write(d, "empty.json", serde_json::json!({ "moisture_levels": [] }));
    assert_eq!(soiltag(&["design", "--config", &empty], d, None).status.code(), Some(1));
    let far = write(
        d,
        "far.json",
        serde_json::json!({
            "band_hz": [2.95e9, 3.0e9],
            "search_space": { "w_mm": { "start": 0.1, "stop": 0.3, "step": 0.1 }, "a_mm": { "start": 13.0, "stop": 14.0, "step": 0.5 } }
        }),
    );
    assert_eq!(soiltag(&["design", "--config", &far], d, None).status.code(), Some(2));
    assert_eq!(soiltag(&["no-such-command"], d, None).status.code(), Some(1));
    assert_eq!(soiltag(&["design", "--config", "/nonexistent.json"], d, None).status.code(), Some(1));
    let bad_json = d.join("bad.json");
    fs::write(&bad_json, "{ not json").unwrap();
    assert_eq!(soiltag(&["design", "--config", bad_json.to_str().unwrap()], d, None).status.code(), Some(1));
    assert_eq!(soiltag(&["design"], d, Some("not-a-number")).status.code(), Some(1));
    assert_eq!(soiltag(&["--help"], d, None).status.code(), Some(0));
}

#[test]
fn single_level_dataset_cannot_be_trained() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(
        d,
        "e2e.json",
        serde_json::json!({ "plan": { "levels_pct": [10.0], "packets_per_level": 4, "reference_packets": 4 } }),
    );
    let out = soiltag(&["e2e", "--config", &cfg], d, None);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn environment_seed_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = write(d, "sim.json", serde_json::json!({ "packets": 1, "reference_packets": 2 }));
    let run = |name: &str, flag: &str, env: Option<&str>| {
        let out = d.join(name);
        assert!(soiltag(&["--seed", flag, "simulate", "--config", &sim], &out, env).status.success());
        fs::read(out.join("live_csi.csv")).unwrap()
    };
    let env_7 = run("a", "1", Some("7"));
    let flag_7 = run("b", "7", None);
    let flag_1 = run("c", "1", None);
    assert_eq!(env_7, flag_7);
    assert_ne!(env_7, flag_1);
}

#[test]
fn csv_outputs_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(soiltag(&["design"], &d.join("design"), None).status.success());
    let curves = csv::Reader::from_path(d.join("design/gain_curves.csv")).unwrap().headers().unwrap().len();
    assert_eq!(curves, 6);
    let (f, g) = io::read_xy_csv(&d.join("design/gain_curves.csv"), "freq_hz", "gain_db_theta_0.2").unwrap();
    assert_eq!(f.len(), g.len());

    assert!(soiltag(&["align"], &d.join("align"), None).status.success());
    let (angles, power) = io::read_xy_csv(&d.join("align/spatial_profile.csv"), "angle_deg", "power_db").unwrap();
    assert_eq!(angles.len(), 181);
    assert!(power.iter().all(|p| p.is_finite()));
    let (_, music) = io::read_xy_csv(&d.join("align/music_spectrum.csv"), "angle_deg", "with_tag_db").unwrap();
    assert_eq!(music.len(), 361);

    let sim = write(d, "sim.json", serde_json::json!({ "packets": 2, "reference_packets": 4 }));
    let s = d.join("sim");
    assert!(soiltag(&["simulate", "--config", &sim], &s, None).status.success());
    let live = io::read_csi_csv(&s.join("live_csi.csv")).unwrap();
    assert_eq!(live.len(), 2);
    assert_eq!(live[0].len(), 13);
    let p = |n: &str| s.join(n).to_string_lossy().into_owned();
    let args = [
        "features",
        "--live",
        &p("live_csi.csv"),
        "--reference",
        &p("reference_csi.csv"),
        "--alignment",
        &p("alignment.json"),
        "--label",
        "10",
    ];
    assert!(soiltag(&args, &s, None).status.success());
    let fv = io::read_feature_csv(&s.join("features.csv")).unwrap();
    assert_eq!(fv.len(), 104);
    let ds = io::read_dataset_csv(&s.join("dataset.csv")).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.freqs, fv.freqs);
}

#[test]
fn train_eval_predict_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let plan = write(
        d,
        "plan.json",
        serde_json::json!({ "levels_pct": [0.0, 10.0, 20.0], "packets_per_level": 6, "reference_packets": 10 }),
    );
    assert!(soiltag(&["dataset", "--config", &plan], d, None).status.success());
    let data = io::read_dataset_csv(&d.join("dataset.csv")).unwrap();
    assert_eq!(data.len(), 18);
    let hp = write(d, "hp.json", serde_json::json!({ "n_trees": 10 }));
    let ds = d.join("dataset.csv").to_string_lossy().into_owned();
    assert!(soiltag(&["train", "--dataset", &ds, "--hyperparams", &hp], d, None).status.success());
    let model = d.join("model.json").to_string_lossy().into_owned();
    assert!(soiltag(&["--format", "csv", "eval", "--model", &model, "--dataset", &ds], d, None).status.success());
    let mut r = csv::Reader::from_path(d.join("eval.csv")).unwrap();
    let fields: Vec<String> = r.records().map(|x| x.unwrap()[0].to_string()).collect();
    assert!(fields.contains(&"p90_abs_error".to_string()));
    let (err, cdf) = io::read_xy_csv(&d.join("error_cdf.csv"), "abs_error", "cdf").unwrap();
    assert_eq!(err.len(), 18);
    assert_eq!(*cdf.last().unwrap(), 1.0);

    // One row of the dataset as a feature file.
    let fv = soiltag::features::FeatureVector { freqs: data.freqs.clone(), gain_db: data.rows[0].features.clone() };
    let feats = d.join("one.csv");
    io::write_atomic(&feats, &io::feature_csv(&fv).unwrap()).unwrap();
    let args = ["predict", "--model", &model, "--features", feats.to_str().unwrap()];
    assert!(soiltag(&args, d, None).status.success());
    let pred: serde_json::Value = io::read_json(&d.join("prediction.json")).unwrap();
    let m = pred["moisture_pct"].as_f64().unwrap();
    assert!((0.0..=20.0).contains(&m));
}
