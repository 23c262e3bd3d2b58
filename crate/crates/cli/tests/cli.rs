use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use tracegen::GenConfig;
use tracescope_server::{router, AppState, ServerConfig};

fn tracescope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracescope")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_trace(dir: &Path, events: usize) -> (PathBuf, Vec<tracegen::Record>) {
    let records = tracegen::generate(GenConfig { events: Some(events), ..Default::default() });
    let path = dir.join("run.tr");
    let mut f = fs::File::create(&path).unwrap();
    tracegen::write_records(&mut f, &records).unwrap();
    (path, records)
}

#[test]
fn validate_clean_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, _) = write_trace(dir.path(), 500);
    let out = tracescope(&["validate", "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("0 skipped"), "{}", stdout(&out));
}

#[test]
fn validate_reports_malformed_lines() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.tr");
    fs::write(&trace, "s -t 0.5 -Ni 1 -Nx 3 -Ny 4 -Nl AGT -Is 1.0 -Id 2.0 -It cbr -Il 512\ns 0.7 _1_ AGT --- 3 cbr 512\nr -t zz -Ni\n").unwrap();
    let out = tracescope(&["validate", "--trace", trace.to_str().unwrap(), "--format", "json"]);
    assert_eq!(out.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["events"], 1);
    assert_eq!(v["old_format"], 1);
    assert_eq!(v["errors"], 1);
}

#[test]
fn usage_and_io_exit_codes() {
    assert_eq!(tracescope(&["stats"]).status.code(), Some(1));
    assert_eq!(tracescope(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tracescope(&["--help"]).status.code(), Some(0));
    assert_eq!(tracescope(&["stats", "--trace", "/nonexistent/run.tr"]).status.code(), Some(2));
}

#[test]
fn stats_initial_state_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, _) = write_trace(dir.path(), 300);
    let out = tracescope(&["stats", "--trace", trace.to_str().unwrap(), "--at", "-1", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["raw_line"], Value::Null);
    for layer in ["routing", "agent"] {
        for f in ["sent", "received", "forwarded", "dropped"] {
            assert_eq!(v[layer][f], 0, "{layer}.{f}");
        }
    }
    for n in v["nodes"].as_array().unwrap() {
        assert_eq!(n["routing"]["sent"], 0);
        assert_eq!(n["agent"]["received"], 0);
    }

    let text = tracescope(&["stats", "--trace", trace.to_str().unwrap(), "--at", "-1"]);
    assert!(stdout(&text).contains("routing"));
    let past_end = tracescope(&["stats", "--trace", trace.to_str().unwrap(), "--at", "300"]);
    assert_eq!(past_end.status.code(), Some(3));
}

#[tokio::test]
async fn stats_json_matches_api() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, _) = write_trace(dir.path(), 800);
    let k = 517;
    let out = tracescope(&["stats", "--trace", trace.to_str().unwrap(), "--at", &k.to_string(), "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let cli: Value = serde_json::from_slice(&out.stdout).unwrap();

    let state = AppState::new(ServerConfig::new(dir.path())).unwrap();
    let id = state.open_session("run.tr").unwrap();
    let req = Request::get(format!("/sessions/{id}/stats/{k}")).body(Body::empty()).unwrap();
    let res = router(state).oneshot(req).await.unwrap();
    let api: Value = serde_json::from_slice(&res.into_body().collect().await.unwrap().to_bytes()).unwrap();

    let api = api.as_object().unwrap();
    assert!(!api.is_empty());
    for (key, value) in api {
        assert_eq!(&cli[key], value, "field {key}");
    }
}

#[test]
fn screenshot_at_first_event() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, records) = write_trace(dir.path(), 400);
    let png = dir.path().join("shots/first.png");
    let out = tracescope(&[
        "screenshot",
        "--trace",
        trace.to_str().unwrap(),
        "--event",
        "0",
        "--out",
        png.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let mut ids: Vec<_> = records.iter().map(|r| r.node).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(report["nodes"], ids.len());
    let img = image::open(&png).unwrap();
    assert_eq!((img.width(), img.height()), (800, 800));
}

#[test]
fn index_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, _) = write_trace(dir.path(), 250);
    let out = tracescope(&["index", "--trace", trace.to_str().unwrap(), "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["events"], 250);
    assert!(Path::new(v["sidecar"].as_str().unwrap()).is_file());
}
