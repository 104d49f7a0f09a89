use kobalab::cli::{run_command, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
use serde_json::Value;

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_command(std::iter::once("kobalab").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap())
}

fn assert_valid(schema_file: &str, report: &str) -> Value {
    let path = format!("{}/schemas/{schema_file}", env!("CARGO_MANIFEST_DIR"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let instance: Value = serde_json::from_str(report).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema_file}: {errors:?}");
    instance
}

/// Runs twice, checks the reports are byte-identical and valid.
fn stable(schema_file: &str, args: &[&str], expect: i32) -> Value {
    let (c1, a) = run(args);
    let (c2, b) = run(args);
    assert_eq!((c1, c2), (expect, expect), "{args:?}: {a}");
    assert_eq!(a, b, "{args:?} is not deterministic");
    assert_valid(schema_file, &a)
}

#[test]
fn rates_report() {
    let v = stable("rates.json", &["rates", "--f", "power:0.5", "--t", "4,100"], EXIT_OK);
    assert!((v["rows"][0]["g"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["rows"][1]["g"].as_f64().unwrap() - 5.0).abs() < 1e-9);
    stable("rates.json", &["rates", "--f", "logpower:2", "--t", "10", "--gamma", "0.1"], EXIT_OK);
}

#[test]
fn metric_example() {
    let v = stable(
        "metric_estimate.json",
        &["estimate-metric", "--domain", "ball", "--point", "0.5,0,0,0", "--direction", "1,0,0,0"],
        EXIT_OK,
    );
    assert!((v["exact"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-12);
    assert!(v["upper"].as_f64().unwrap() <= 1.3467);
}

#[test]
fn verifier_reports() {
    stable("property_report.json", &["verify-bumping", "--domain", "D3", "--budget", "300"], EXIT_OK);
    let v = stable("property_report.json", &["verify-bumping", "--domain", "D2", "--epsilon", "0.5", "--budget", "300"], EXIT_FAILURE);
    let failed: Vec<&Value> = v["checks"].as_array().unwrap().iter().filter(|c| c["pass"] == false).collect();
    assert!(!failed.is_empty() && failed.iter().all(|c| c["witness"].is_array()));
    stable("property_report.json", &["verify-peak", "--domain", "D2", "--budget", "300", "--epsilon", "0.0001627604166666667"], EXIT_OK);
    stable("calibration.json", &["calibrate", "--domain", "D3", "--bumping-only", "--budget", "400"], EXIT_OK);
}

#[test]
fn sweep_report_and_csv() {
    let dir = std::env::temp_dir().join(format!("kobalab-sweep-{}", std::process::id()));
    let out = dir.to_str().unwrap();
    let v = stable("sweep.json", &["sweep", "--domain", "D2", "--deltas", "0.1,0.01", "--out", out], EXIT_OK);
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("delta,lower_peak,lower_rate,upper,exact_or_blank"));
    assert_eq!(lines.count(), 2);
    for row in v["rays"][0]["rows"].as_array().unwrap() {
        let exact = row["exact"].as_f64().unwrap();
        assert!(row["lower_peak"].as_f64().unwrap() <= exact && exact <= row["upper"].as_f64().unwrap() * (1.0 + 1e-9));
    }
    let on_disk = std::fs::read_to_string(dir.join("sweep.json")).unwrap();
    assert_eq!(serde_json::from_str::<Value>(&on_disk).unwrap(), v);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn holomap_reports() {
    stable("holder_rate.json", &["holder-rate", "--f", "power:0.5", "--eta", "0.5", "--t", "10,100,1000"], EXIT_OK);
    let v = stable("hardy_littlewood.json", &["verify-hl", "--G", "power:0.5", "--interval", "0,1", "--budget", "300"], EXIT_OK);
    assert!(v["c_fit"].as_f64().unwrap() <= 1.0 + 1e-6);
    stable("modulus.json", &["measure-modulus", "--map", "blaschke:0.5", "--budget", "200"], EXIT_OK);
}

#[test]
fn error_reports() {
    let v = stable("error.json", &["verify-hl", "--G", "invlog:1", "--interval", "0,0.5"], EXIT_FAILURE);
    assert_eq!(v["error"]["code"], "divergent_integral");
    let v = stable("error.json", &["estimate-metric", "--domain", "D7", "--point", "0,0", "--direction", "1,0"], EXIT_USAGE);
    assert_eq!(v["error"]["code"], "usage");
    assert_eq!(run(&["sweep", "--domain", "D2", "--deltas", "0.01,0.1"]).0, EXIT_USAGE);
    assert_eq!(run(&["rates", "--t"]).0, EXIT_USAGE);
}

#[test]
fn accept_single_criterion() {
    let v = stable("acceptance.json", &["accept", "--criterion", "1"], EXIT_OK);
    assert_eq!(v["criteria"][0]["id"], 1);
    assert_eq!(run(&["accept", "--criterion", "12"]).0, EXIT_USAGE);
}

#[test]
fn config_file_drives_a_sweep() {
    let dir = std::env::temp_dir().join(format!("kobalab-config-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("experiment.json");
    std::fs::write(
        &cfg,
        r#"{"domain": "D1", "seed": 3, "rays": [{"direction": "normal", "deltas": [0.25, 0.125]}]}"#,
    )
    .unwrap();
    let v = stable("sweep.json", &["sweep", "--config", cfg.to_str().unwrap()], EXIT_OK);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["domain"], "D1");
    std::fs::write(&cfg, r#"{"domain": "D1", "rays": [{"deltas": [0.1, 0.2]}]}"#).unwrap();
    assert_eq!(run(&["sweep", "--config", cfg.to_str().unwrap()]).0, EXIT_USAGE);
    std::fs::remove_dir_all(&dir).unwrap();
}
