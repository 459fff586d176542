use std::sync::Arc;
use std::time::Duration;

use excessmort::cli::{cmd_pipeline, DataSource, IndexEntry, RunConfig, RunDir, RunIndex, Status};
use excessmort::evalkit::{apply_intervals, excess};
use excessmort::ingest::series_from_csv;
use excessmort_server::{Api, ApiProjectionRequest};
use serde_json::Value;

const CONFIG: &str = r#"
families = ["sarima", "lstm"]
trials = 1
out = "runs"
[data]
kind = "synthetic"
seed = 11
level_shift = { from = "2020-01", amount = 700.0 }
[[models]]
family = "lstm"
lookback = 3
batch_size = 32
epochs = 50
hidden = 64
"#;

struct Fixture {
    _tmp: tempfile::TempDir,
    root: std::path::PathBuf,
    run: String,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml(CONFIG, tmp.path()).unwrap();
    let out = cmd_pipeline(&cfg).unwrap();
    Fixture {
        root: cfg.out.clone(),
        run: out.run_id,
        _tmp: tmp,
    }
}

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

fn request(run: &str, family: &str, horizon: usize, trials: usize) -> ApiProjectionRequest {
    serde_json::from_value(serde_json::json!({
        "run": run,
        "family": family,
        "train_start": "2015-01",
        "train_end": "2019-12",
        "horizon": horizon,
        "trials": trials,
    }))
    .unwrap()
}

#[test]
fn listings_and_series() {
    let f = fixture();
    let api = Api::new(&f.root, 1);
    assert_eq!(api.models(), r#"["sarima","lstm","seq2seq","seq2seq_attn","transformer"]"#);
    let runs = parse(&api.runs().unwrap());
    assert_eq!(runs[0]["id"], f.run.as_str());
    assert_eq!(runs[0]["status"], "complete");

    let series = parse(&api.series(&f.run).unwrap());
    let points = series["points"].as_array().unwrap();
    assert_eq!(points.len(), 108);
    assert_eq!(points[0]["month"], "2015-01");
    assert_eq!(series["end"], "2023-12");

    let missing = api.series("unknown").unwrap_err();
    assert_eq!(missing.status, 404);
    assert_eq!(parse(&missing.body())["error"], "not_found");
    // Ids outside the index never reach the filesystem.
    assert_eq!(api.series("../runs").unwrap_err().status, 404);
}

#[test]
fn excess_payload_matches_the_report_schema() {
    let f = fixture();
    let api = Api::new(&f.root, 1);
    let body = parse(&api.excess(&f.run, Some("lstm")).unwrap());
    let keys: Vec<&str> = body.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["cumulative", "monthly", "share_outside_pi"]);
    let monthly = body["monthly"].as_array().unwrap();
    assert_eq!(monthly.len(), 48);
    let month_keys: Vec<&str> = monthly[0].as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(month_keys, ["counterfactual", "delta", "month", "observed", "year"]);
    let total: f64 = monthly.iter().map(|m| m["delta"].as_f64().unwrap()).sum();
    // Each field is rounded to 6 decimals on its own.
    assert!((total - body["cumulative"].as_f64().unwrap()).abs() < 1e-4);
    assert!(body["cumulative"].as_f64().unwrap() > 0.0);

    assert!(api.excess(&f.run, None).is_ok());
    assert_eq!(api.excess(&f.run, Some("transformer")).unwrap_err().status, 404);
    assert_eq!(api.excess(&f.run, Some("arima")).unwrap_err().status, 400);
}

#[test]
fn observed_equal_to_counterfactual_has_zero_excess() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dir = RunDir::open(tmp.path(), "flat", "pipeline").unwrap();
    let obs = series_from_csv("year,month,deaths\n2020,1,10\n2020,2,20\n2020,3,30\n").unwrap();
    let report = excess(&obs, &apply_intervals(obs.start(), obs.values(), 1.0)).unwrap();
    dir.write_json("excess/sarima.json", &report).unwrap();
    dir.finish(Ok(())).unwrap();
    RunIndex::upsert(
        tmp.path(),
        IndexEntry {
            id: "flat".into(),
            data: "fixture".into(),
            families: vec!["sarima".into()],
            status: Status::Complete,
        },
    )
    .unwrap();
    let body = parse(&Api::new(tmp.path(), 1).excess("flat", None).unwrap());
    assert_eq!(body["cumulative"].as_f64(), Some(0.0));
    assert_eq!(body["share_outside_pi"].as_f64(), Some(0.0));
}

#[test]
fn projection_shape_cache_and_sarima_determinism() {
    let f = fixture();
    let api = Api::new(&f.root, 1);
    let (first, hit) = api.project(&request(&f.run, "sarima", 12, 1)).unwrap();
    assert!(!hit);
    let body = parse(&first);
    for key in ["months", "observed", "points", "lower", "upper"] {
        assert_eq!(body[key].as_array().unwrap().len(), 12, "{key}");
    }
    assert_eq!(body["months"][0], "2020-01");
    for i in 0..12 {
        let (lo, p, hi) = (
            body["lower"][i].as_f64().unwrap(),
            body["points"][i].as_f64().unwrap(),
            body["upper"][i].as_f64().unwrap(),
        );
        assert!(lo <= p && p <= hi);
    }
    let (again, hit) = api.project(&request(&f.run, "sarima", 12, 1)).unwrap();
    assert!(hit);
    assert_eq!(first.as_bytes(), again.as_bytes());

    // A fresh server computes the same bytes the cache returned.
    let (fresh, hit) = Api::new(&f.root, 1).project(&request(&f.run, "sarima", 12, 1)).unwrap();
    assert!(!hit);
    assert_eq!(fresh.as_bytes(), first.as_bytes());

    let (three, _) = api.project(&request(&f.run, "sarima", 12, 3)).unwrap();
    let three = parse(&three);
    for key in ["points", "lower", "upper", "metrics", "excess"] {
        assert_eq!(three[key], body[key], "{key}");
    }
}

#[test]
fn invalid_requests_are_rejected_with_a_message() {
    let f = fixture();
    let api = Api::new(&f.root, 1);
    let mut r = request(&f.run, "sarima", 12, 1);
    r.horizon = 0;
    assert_eq!(api.project(&r).unwrap_err().status, 400);
    let mut r = request(&f.run, "sarima", 12, 1);
    r.train_end = "2014-06".parse().unwrap();
    let e = api.project(&r).unwrap_err();
    assert_eq!(e.status, 400);
    assert!(e.message.contains("training window"), "{}", e.message);
    let r = request(&f.run, "sarima", 60, 1);
    assert!(api.project(&r).unwrap_err().message.contains("coverage"));
    let e = Api::parse_request(br#"{"run":"x","family":"arima","train_start":"2015-01","train_end":"2019-12","horizon":12}"#)
        .unwrap_err();
    assert_eq!(e.status, 400);
    assert_eq!(api.project(&request("nope", "sarima", 12, 1)).unwrap_err().status, 404);
}

#[test]
fn async_jobs_settle_to_the_synchronous_body() {
    let f = fixture();
    let api = Arc::new(Api::new(&f.root, 1));
    let req = request(&f.run, "lstm", 12, 2);
    let ticket = parse(&api.submit(req.clone()).unwrap());
    let id = ticket["id"].as_str().unwrap().to_string();
    assert_eq!(ticket["total"], 2);
    let settled = loop {
        let state = parse(&api.job(&id).unwrap());
        if state["state"] != "pending" {
            break state;
        }
        std::thread::sleep(Duration::from_millis(50));
    };
    assert_eq!(settled["state"], "done");
    assert_eq!(settled["done"], 2);
    let (sync, hit) = api.project(&req).unwrap();
    assert!(hit);
    assert_eq!(settled["result"], parse(&sync));
    assert_eq!(api.job("missing").unwrap_err().status, 404);
}

#[test]
fn provenance_reproduces_through_the_pipeline() {
    let f = fixture();
    let api = Api::new(&f.root, 1);
    for family in ["sarima", "lstm"] {
        let (body, _) = api.project(&request(&f.run, family, 24, 2)).unwrap();
        let body = parse(&body);
        let toml = body["provenance"]["cli_config"].as_str().unwrap();
        // Saved and loaded like a user would, from an unrelated directory.
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("reproduce.toml");
        std::fs::write(&file, toml).unwrap();
        let cfg = RunConfig::load(&file).unwrap();
        assert!(matches!(&cfg.data, DataSource::Csv { path } if path.is_absolute() && path.exists()));
        assert!(cfg.out.starts_with(tmp.path()));
        let out = cmd_pipeline(&cfg).unwrap();
        let csv = std::fs::read_to_string(out.run_dir.join(format!("projections/{family}.csv"))).unwrap();
        let points: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        let served: Vec<f64> = body["points"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(points.len(), served.len());
        for (a, b) in points.iter().zip(&served) {
            assert!((a - b).abs() < 2e-6, "{family}: {a} vs {b}");
        }
    }
}

#[test]
fn schema_document_matches_the_payloads() {
    let doc: Value = parse(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/openapi.json")).unwrap());
    let mut paths: Vec<&str> = doc["paths"].as_object().unwrap().keys().map(String::as_str).collect();
    paths.sort();
    assert_eq!(paths, ["/api/excess", "/api/jobs/{id}", "/api/models", "/api/project", "/api/runs", "/api/series/{id}"]);

    let f = fixture();
    let api = Api::new(&f.root, 1);
    let (body, _) = api.project(&request(&f.run, "sarima", 12, 1)).unwrap();
    let body = parse(&body);
    let keys = |v: &Value| {
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    };
    let props = |name: &str| keys(&doc["components"]["schemas"][name]["properties"]);
    for (name, value) in [
        ("ApiProjectionResponse", &body),
        ("Provenance", &body["provenance"]),
        ("MetricsReport", &body["metrics"]),
        ("ExcessReport", &body["excess"]),
        ("ExcessMonth", &body["excess"]["monthly"][0]),
        ("ApiProjectionRequest", &body["request"]),
        ("Series", &parse(&api.series(&f.run).unwrap())),
        ("RunEntry", &parse(&api.runs().unwrap())[0]),
    ] {
        assert_eq!(keys(value), props(name), "{name}");
    }
}
