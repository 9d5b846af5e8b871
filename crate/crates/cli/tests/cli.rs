use std::path::Path;
use std::process::{Command, Output};

fn lpx(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpx"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = lpx(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(out: &Path, args: &[&str]) -> i32 {
    lpx(out, args).status.code().unwrap()
}

const SMALL_MODEL: &[&str] = &["--depth", "3", "--width", "8", "--epochs", "2"];

/// gen-data and train into `dir`, returning the model path.
fn trained(dir: &Path, encoding: &str, seed: &str) -> String {
    ok(
        dir,
        &[
            "gen-data",
            "--encoding",
            encoding,
            "--count",
            "1000",
            "--seed",
            seed,
        ],
    );
    let data = dir.join("dataset.csv");
    let mut args = vec!["train", "--data", data.to_str().unwrap(), "--seed", seed];
    args.extend_from_slice(SMALL_MODEL);
    ok(dir, &args);
    dir.join("model.json").display().to_string()
}

fn grid(dir: &Path, model: &str, extra: &[&str]) {
    let mut args = vec!["grid", "--model", model, "--width", "12", "--height", "9"];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

#[test]
fn pipeline_writes_verifiable_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = trained(d, "boundary_distance", "3");
    assert!(d.join("dataset.meta.json").is_file());
    assert!(d.join("lp.json").is_file());

    ok(
        d,
        &[
            "attribute",
            "--model",
            &model,
            "--method",
            "saliency",
            "--point",
            "1.0,2.0",
        ],
    );
    let csv = std::fs::read_to_string(d.join("attribution.csv")).unwrap();
    assert!(csv.starts_with("method,x1,x2,a1,a2,sum\nsaliency,"));

    grid(d, &model, &["--method", "lime", "--radius", "0.5,0.1"]);
    grid(d, &model, &["--method", "ig", "--steps", "16"]);
    for sub in ["lime_p0.5", "lime_p0.1", "ig"] {
        for file in [
            "manifest.json",
            "channel_sum.csv",
            "channel_x1.ppm",
            "channel_prediction.csv",
        ] {
            assert!(d.join(sub).join(file).is_file(), "{sub}/{file}");
        }
    }
    let verified = ok(d, &["verify", d.to_str().unwrap()]);
    assert_eq!(verified.lines().filter(|l| l.starts_with("ok ")).count(), 3);

    let image = d.join("sum.ppm");
    ok(
        d,
        &[
            "render",
            "--csv",
            d.join("ig/channel_sum.csv").to_str().unwrap(),
            "--image",
            image.to_str().unwrap(),
        ],
    );
    let ppm = std::fs::read(&image).unwrap();
    assert!(ppm.starts_with(b"P6\n12 9\n255\n"));
    assert_eq!(ppm.len(), b"P6\n12 9\n255\n".len() + 12 * 9 * 3);
}

#[test]
fn identical_seeds_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let model = trained(d, "gain_penalty", "5");
        grid(d, &model, &["--method", "fp", "--seed", "5"]);
    }
    for file in [
        "dataset.csv",
        "model.json",
        "fp/channel_x1.csv",
        "fp/channel_sum.csv",
        "fp/manifest.json",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(file)).unwrap(),
            std::fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn sequential_and_parallel_grids_match() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = trained(d, "abs_boundary_distance", "0");
    let seq = d.join("seq");
    let par = d.join("par");
    for (out, flag) in [(&seq, Some("--sequential")), (&par, None)] {
        let mut args = vec![
            "grid", "--model", &model, "--method", "lime", "--width", "10", "--height", "7",
        ];
        args.extend(flag);
        ok(out, &args);
    }
    for file in [
        "channel_x1.csv",
        "channel_x2.csv",
        "channel_sum.csv",
        "manifest.json",
    ] {
        assert_eq!(
            std::fs::read(seq.join("lime").join(file)).unwrap(),
            std::fs::read(par.join("lime").join(file)).unwrap()
        );
    }
}

#[test]
fn verify_rejects_tampered_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = trained(d, "feasibility", "1");
    grid(d, &model, &["--method", "saliency"]);
    let sum = d.join("saliency/channel_sum.csv");
    let text = std::fs::read_to_string(&sum).unwrap();
    let tampered = text.replacen("\n0,0,", "\n0,0,1", 1);
    assert_ne!(text, tampered);
    std::fs::write(&sum, tampered).unwrap();
    assert_ne!(code(d, &["verify", d.to_str().unwrap()]), 0);
}

#[test]
fn invalid_input_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(d, &["gen-data", "--encoding", "nonsense", "--count", "10"]),
        2
    );
    assert_eq!(
        code(
            d,
            &[
                "gen-data",
                "--encoding",
                "F",
                "--count",
                "10",
                "--bbox",
                "0:1"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            d,
            &[
                "gen-data",
                "--encoding",
                "F",
                "--count",
                "10",
                "--bbox",
                "5:6,7:8"
            ]
        ),
        2
    );
    assert_eq!(code(d, &["train", "--data", "missing.csv"]), 2);
    assert_eq!(code(d, &["verify", d.to_str().unwrap()]), 2);
    let model = trained(d, "B", "0");
    assert_eq!(
        code(
            d,
            &[
                "attribute",
                "--model",
                &model,
                "--method",
                "saliency",
                "--point",
                "1,2,3"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            d,
            &["grid", "--model", &model, "--method", "saliency", "--dim-x", "1"]
        ),
        2
    );
    assert_eq!(
        code(
            d,
            &[
                "attribute",
                "--model",
                &model,
                "--method",
                "lime",
                "--radius",
                "0",
                "--point",
                "1,1"
            ]
        ),
        2
    );
}

#[test]
fn gain_penalty_needs_a_nonnegative_lp() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let lp = d.join("lp.json");
    std::fs::write(
        &lp,
        r#"{"n":2,"m":1,"c":[1.0,1.0],"A":[[1.0,-0.5]],"b":[2.0]}"#,
    )
    .unwrap();
    let args = [
        "gen-data",
        "--lp",
        lp.to_str().unwrap(),
        "--encoding",
        "gain_penalty",
        "--count",
        "10",
    ];
    assert_eq!(code(d, &args), 2);
}

#[test]
fn property_report_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let text = ok(d, &["props", "--encoding", "B", "--samples", "1000"]);
    assert!(text.contains("boundary_distance"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("properties.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 1);
}

#[test]
fn directed_fp_experiment_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = trained(d, "B", "2");
    ok(d, &["exp-directed-fp", "--model", &model, "--points", "20"]);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("directed_fp.json")).unwrap())
            .unwrap();
    assert!(json["max_deviation"].as_f64().unwrap() <= 1e-9);
    assert_eq!(json["rows"].as_array().unwrap().len(), 20);
}
