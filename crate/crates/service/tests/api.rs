use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use http_body_util::BodyExt;
use rehab_core::dataset::Label;
use rehab_core::synthetic::{write_session, SyntheticActor};
use rehab_service::*;
use serde_json::{json, Value};
use tower::ServiceExt;

const N: Label = Label::NO_ACTION;

struct Harness {
    _dir: tempfile::TempDir,
    service: Service,
    nurse: String,
}

impl Harness {
    fn new() -> Self {
        Self::with_config(|_| {})
    }

    fn with_config(tweak: impl FnOnce(&mut ServiceConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ServiceConfig::in_dir(dir.path());
        tweak(&mut config);
        let store = config.open_store().unwrap();
        let nurse = store.issue_token(Role::Nurse, "nurse-1", Utc::now()).unwrap();
        let pipeline = Arc::new(Pipeline::stub().unwrap());
        let service = Service::new(config, store, pipeline, Arc::new(LogNotifier)).unwrap();
        Harness { _dir: dir, service, nurse }
    }

    fn router(&self) -> Router {
        self.service.router()
    }

    async fn call(&self, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        send(self.router(), req.body(body).unwrap()).await
    }

    async fn register(&self, id: &str) -> String {
        let (status, body) = self
            .call(
                "POST",
                "/patients",
                Some(&self.nurse),
                Some(json!({ "patient_id": id, "enrollment_date": "2025-08-23", "exercise_plan_id": "plan-a" })),
            )
            .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body["token"].as_str().unwrap().to_string()
    }

    async fn upload(&self, token: &str, parts: &[(&str, &[u8])], key: Option<&str>) -> (StatusCode, Value) {
        let boundary = "XBOUNDARYX";
        let mut body = Vec::new();
        for (name, data) in parts {
            body.extend(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\n\r\n").as_bytes());
            body.extend_from_slice(data);
            body.extend(b"\r\n");
        }
        body.extend(format!("--{boundary}--\r\n").as_bytes());
        let mut req = Request::builder()
            .method("POST")
            .uri("/sessions")
            .header("authorization", format!("Bearer {token}"))
            .header("content-type", format!("multipart/form-data; boundary={boundary}"));
        if let Some(k) = key {
            req = req.header("idempotency-key", k);
        }
        send(self.router(), req.body(Body::from(body)).unwrap()).await
    }
}

async fn send(router: Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| json!({ "raw_len": bytes.len() }));
    (status, value)
}

/// 30 s at 30 fps with four exercises whose boundaries sit on the window grid.
fn fixture(dir: &std::path::Path) -> (Vec<u8>, Vec<u8>, Vec<(u64, u64, u8)>) {
    let runs = [(60, N), (129, Label(3)), (60, N), (150, Label(9)), (105, Label(12)), (60, N), (234, Label(14)), (102, N)];
    let fx = write_session(dir, "fixture", &runs, &SyntheticActor::default()).unwrap();
    assert_eq!(fx.frame_count, 900);
    let spans = fx.annotation.spans.iter().map(|s| (s.start_frame, s.end_frame, s.label.0)).collect();
    (std::fs::read(&fx.video).unwrap(), std::fs::read(&fx.pose).unwrap(), spans)
}

#[tokio::test]
async fn upload_segment_report_feedback_end_to_end() {
    let started = Instant::now();
    let h = Harness::new();
    let patient = h.register("p1").await;
    let scratch = tempfile::tempdir().unwrap();
    let (video, pose, spans) = fixture(scratch.path());

    let (status, body) = h.upload(&patient, &[("video", &video), ("pose", &pose)], None).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["status"], "uploaded");
    let sid = body["session_id"].as_str().unwrap().to_string();

    assert_eq!(h.service.worker.run_until_idle().unwrap(), 1);

    let (status, session) = h.call("GET", &format!("/sessions/{sid}"), Some(&patient), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(session["status"], "reported");
    let events: Vec<&str> = session["events"].as_array().unwrap().iter().map(|e| e["status"].as_str().unwrap()).collect();
    assert_eq!(events, ["uploaded", "segmented", "reported"]);
    let seqs: Vec<u64> = session["events"].as_array().unwrap().iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, [1, 2, 3]);
    let got: Vec<(u64, u64, u8)> = session["segments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["start_frame"].as_u64().unwrap(), s["end_frame"].as_u64().unwrap(), s["label"].as_u64().unwrap() as u8))
        .collect();
    assert_eq!(got, spans);

    let clip_url = session["segments"][0]["clip_url"].as_str().unwrap().to_string();
    let req = Request::get(&clip_url).header("authorization", format!("Bearer {}", h.nurse)).body(Body::empty()).unwrap();
    let resp = h.router().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.into_body().collect().await.unwrap().to_bytes().starts_with(b"YUV4MPEG2 "));

    let rid = session["report_id"].as_str().unwrap().to_string();
    let (status, report) = h.call("GET", &format!("/reports/{rid}"), Some(&h.nurse), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["version"], 1);
    let actions = report["report"]["actions"].as_array().unwrap();
    assert_eq!(actions.len(), 4);
    assert!(actions.iter().all(|a| a["outcome"]["status"] == "completed"));
    assert!(report["report"]["summary"].as_str().unwrap().contains("# Overall Overview"));

    let (status, sessions) = h.call("GET", "/patients/p1/sessions", Some(&h.nurse), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(sessions["sessions"].as_array().unwrap().len(), 1);

    let scores = json!({ "accuracy": 8, "completeness": 8, "practicability": 8, "safety": 8, "language_quality": 8 });
    for nurse in [&h.nurse, &h.service.state.store.issue_token(Role::Nurse, "nurse-2", Utc::now()).unwrap()] {
        let (status, fb) =
            h.call("POST", &format!("/reports/{rid}/feedback"), Some(nurse), Some(json!({ "scores": scores, "comment": "ok" }))).await;
        assert_eq!(status, StatusCode::CREATED, "{fb}");
        assert_eq!(fb["report_version"], 1);
    }
    let (_, report) = h.call("GET", &format!("/reports/{rid}"), Some(&patient), None).await;
    let nurses: Vec<&str> = report["feedback"].as_array().unwrap().iter().map(|f| f["nurse_id"].as_str().unwrap()).collect();
    assert_eq!(nurses, ["nurse-1", "nurse-2"]);

    assert!(started.elapsed() < Duration::from_secs(60), "took {:?}", started.elapsed());
}

#[tokio::test]
async fn feedback_validation_names_the_dimension() {
    let h = Harness::new();
    let patient = h.register("p1").await;
    let scratch = tempfile::tempdir().unwrap();
    let fx = write_session(scratch.path(), "v", &[(129, Label(2))], &SyntheticActor::default()).unwrap();
    let (video, pose) = (std::fs::read(&fx.video).unwrap(), std::fs::read(&fx.pose).unwrap());
    let (_, body) = h.upload(&patient, &[("video", &video), ("pose", &pose)], None).await;
    h.service.worker.run_until_idle().unwrap();
    let sid = body["session_id"].as_str().unwrap();
    let (_, session) = h.call("GET", &format!("/sessions/{sid}"), Some(&h.nurse), None).await;
    let rid = session["report_id"].as_str().unwrap();

    let bad = json!({ "scores": { "accuracy": 11, "completeness": 8, "practicability": 8, "safety": 8, "language_quality": 8 } });
    let (status, err) = h.call("POST", &format!("/reports/{rid}/feedback"), Some(&h.nurse), Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"]["code"], "invalid_score");
    assert_eq!(err["error"]["detail"]["dimension"], "accuracy");

    let partial = json!({ "scores": { "accuracy": 8, "completeness": 8, "practicability": 8, "language_quality": 8 } });
    let (status, err) = h.call("POST", &format!("/reports/{rid}/feedback"), Some(&h.nurse), Some(partial)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(err["error"]["message"].as_str().unwrap().contains("safety"));

    let good = json!({ "scores": { "accuracy": 8, "completeness": 8, "practicability": 8, "safety": 8, "language_quality": 8 } });
    let (status, _) = h.call("POST", &format!("/reports/{rid}/feedback"), Some(&patient), Some(good.clone())).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, err) = h.call("POST", "/reports/nope/feedback", Some(&h.nurse), Some(good)).await;
    assert_eq!((status, err["error"]["code"].as_str().unwrap()), (StatusCode::NOT_FOUND, "report_not_found"));
}

#[tokio::test]
async fn every_endpoint_requires_a_token() {
    let h = Harness::new();
    for (method, uri) in [
        ("POST", "/patients"),
        ("GET", "/patients"),
        ("POST", "/sessions"),
        ("GET", "/sessions/x"),
        ("GET", "/patients/x/sessions"),
        ("GET", "/reports/x"),
        ("POST", "/reports/x/feedback"),
        ("POST", "/patients/x/reminder-optin"),
        ("GET", "/analytics/adherence"),
    ] {
        let (status, body) = h.call(method, uri, None, None).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED, "{method} {uri}");
        assert_eq!(body["error"]["code"], "unauthorized");
        let (status, _) = h.call(method, uri, Some("forged"), None).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED, "{method} {uri}");
    }
}

#[tokio::test]
async fn patients_only_see_their_own_records() {
    let h = Harness::new();
    let a = h.register("a").await;
    h.register("b").await;
    let (status, _) = h.call("GET", "/patients/b/sessions", Some(&a), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = h.call("GET", "/patients", Some(&a), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = h.upload(&a, &[("patient_id", b"b"), ("video", b"YUV4MPEG2 W2 H2 F30:1\n")], None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, body) = h.call("GET", "/patients", Some(&h.nurse), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["patients"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn upload_rules() {
    let h = Harness::with_config(|c| c.max_upload_bytes = 4096);
    let patient = h.register("p1").await;
    let video = b"YUV4MPEG2 W2 H2 F30:1 C444\n".to_vec();

    let (status, err) = h.upload(&h.nurse, &[("patient_id", b"ghost"), ("video", &video)], None).await;
    assert_eq!((status, err["error"]["code"].as_str().unwrap()), (StatusCode::NOT_FOUND, "patient_not_found"));
    let (status, _) = h.upload(&patient, &[("video", b"")], None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, err) = h.upload(&patient, &[("video", b"RIFF....")], None).await;
    assert_eq!((status, err["error"]["code"].as_str().unwrap()), (StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media"));
    let big = [video.clone(), vec![0u8; 5000]].concat();
    let (status, err) = h.upload(&patient, &[("video", &big)], None).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(err["error"]["detail"]["limit_bytes"], 4096);
    let (_, sessions) = h.call("GET", "/patients/p1/sessions", Some(&patient), None).await;
    assert!(sessions["sessions"].as_array().unwrap().is_empty(), "rejected uploads persist nothing");

    // Same content twice without a key: two sessions.
    let (s1, a) = h.upload(&patient, &[("video", &video)], None).await;
    let (s2, b) = h.upload(&patient, &[("video", &video)], None).await;
    assert_eq!((s1, s2), (StatusCode::CREATED, StatusCode::CREATED));
    assert_ne!(a["session_id"], b["session_id"]);
    // A retried request with the same key: the original session, no new job.
    let (s3, c) = h.upload(&patient, &[("video", &video)], Some("retry-1")).await;
    let (s4, d) = h.upload(&patient, &[("video", &video)], Some("retry-1")).await;
    assert_eq!((s3, s4), (StatusCode::CREATED, StatusCode::OK));
    assert_eq!(c["session_id"], d["session_id"]);
    assert_eq!(d["created"], false);
    assert_eq!(h.service.state.store.open_jobs().unwrap(), 3);
}

#[tokio::test]
async fn missing_pose_fails_the_session_with_a_reason() {
    let h = Harness::new();
    let patient = h.register("p1").await;
    let scratch = tempfile::tempdir().unwrap();
    let fx = write_session(scratch.path(), "v", &[(90, Label(2))], &SyntheticActor::default()).unwrap();
    let (_, body) = h.upload(&patient, &[("video", &std::fs::read(&fx.video).unwrap())], None).await;
    h.service.worker.run_until_idle().unwrap();
    let sid = body["session_id"].as_str().unwrap();
    let (_, session) = h.call("GET", &format!("/sessions/{sid}"), Some(&patient), None).await;
    assert_eq!(session["status"], "failed");
    assert!(session["failure_reason"].as_str().unwrap().contains("pose"));
    let events: Vec<&str> = session["events"].as_array().unwrap().iter().map(|e| e["status"].as_str().unwrap()).collect();
    assert_eq!(events, ["uploaded", "failed"]);
}

#[tokio::test]
async fn regenerated_reports_get_new_versions() {
    let h = Harness::new();
    let patient = h.register("p1").await;
    let scratch = tempfile::tempdir().unwrap();
    let fx = write_session(scratch.path(), "v", &[(129, Label(2))], &SyntheticActor::default()).unwrap();
    let parts: [(&str, &[u8]); 2] = [("video", &std::fs::read(&fx.video).unwrap()), ("pose", &std::fs::read(&fx.pose).unwrap())];
    let (_, body) = h.upload(&patient, &parts, None).await;
    h.service.worker.run_until_idle().unwrap();
    let sid = body["session_id"].as_str().unwrap();
    h.service.state.store.enqueue(sid, rehab_service::db::JobKind::RegenerateReport, Utc::now()).unwrap();
    h.service.worker.run_until_idle().unwrap();
    let (_, session) = h.call("GET", &format!("/sessions/{sid}"), Some(&patient), None).await;
    assert_eq!(session["events"].as_array().unwrap().len(), 3);
    let rid = session["report_id"].as_str().unwrap();
    let (_, latest) = h.call("GET", &format!("/reports/{rid}"), Some(&patient), None).await;
    assert_eq!(latest["version"], 2);
    let (_, first) = h.call("GET", &format!("/reports/{rid}?version=1"), Some(&patient), None).await;
    assert_eq!(first["version"], 1);
    for field in ["actions", "summary"] {
        assert_eq!(first["report"][field], latest["report"][field], "mock provider is deterministic");
    }
}

#[tokio::test]
async fn background_worker_picks_up_uploads() {
    let h = Harness::with_config(|c| c.worker.poll_interval = Duration::from_millis(50));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let patient = h.register("p1").await;
    let router = h.router();
    let store = h.service.state.store.clone();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let Harness { _dir, service, .. } = h;
    let server = tokio::spawn(service.run(listener, async move {
        let _ = rx.await;
    }));

    let scratch = tempfile::tempdir().unwrap();
    let fx = write_session(scratch.path(), "v", &[(129, Label(2))], &SyntheticActor::default()).unwrap();
    let boundary = "B";
    let mut body = Vec::new();
    for (name, path) in [("video", &fx.video), ("pose", &fx.pose)] {
        body.extend(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"f\"\r\n\r\n").as_bytes());
        body.extend(std::fs::read(path).unwrap());
        body.extend(b"\r\n");
    }
    body.extend(format!("--{boundary}--\r\n").as_bytes());
    let req = Request::post("/sessions")
        .header("authorization", format!("Bearer {patient}"))
        .header("content-type", format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (_, created) = send(router, req).await;
    let sid = created["session_id"].as_str().unwrap().to_string();
    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let status = store.session(&sid).unwrap().unwrap().status;
        if status == rehab_core::clinic::SessionStatus::Reported {
            break;
        }
        assert!(Instant::now() < deadline, "still {status:?}");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}

#[tokio::test]
async fn adherence_endpoint_matches_the_arithmetic() {
    let now = Utc.with_ymd_and_hms(2025, 9, 6, 12, 0, 0).unwrap();
    let mut h = Harness::new();
    h.service.state.clock = Arc::new(move || now);
    let store = h.service.state.store.clone();
    // (enrolled on, sessions): 3 sessions over 3 days and 1 over 4 days.
    for (id, day, sessions) in [("a", 3u32, 3u32), ("b", 2, 1)] {
        h.call(
            "POST",
            "/patients",
            Some(&h.nurse),
            Some(json!({ "patient_id": id, "enrollment_date": format!("2025-09-0{day}"), "exercise_plan_id": "x" })),
        )
        .await;
        for i in 0..sessions {
            let at: DateTime<Utc> = Utc.with_ymd_and_hms(2025, 9, day + i, 10, 0, 0).unwrap();
            store.create_session(id, "sha256:00", None, None, at).unwrap();
        }
    }
    let (status, body) = h.call("GET", "/analytics/adherence?start=2025-08-23&end=2025-09-06", Some(&h.nurse), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["avg_sessions"], 2.0);
    let freqs: Vec<f64> = body["per_patient"].as_array().unwrap().iter().map(|p| p["frequency"].as_f64().unwrap()).collect();
    assert_eq!(freqs, [1.0, 0.25]);
    assert_eq!(body["avg_frequency"], 0.625);

    let (status, err) = h.call("GET", "/analytics/adherence?start=2025-01-01&end=2025-01-02", Some(&h.nurse), None).await;
    assert_eq!((status, err["error"]["code"].as_str().unwrap()), (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed"));
    let (status, _) = h
        .call(
            "POST",
            "/patients",
            Some(&h.nurse),
            Some(json!({ "patient_id": "future", "enrollment_date": "2025-09-07", "exercise_plan_id": "x" })),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, err) = h
        .call("POST", "/patients", Some(&h.nurse), Some(json!({ "patient_id": "a", "enrollment_date": "2025-09-01", "exercise_plan_id": "x" })))
        .await;
    assert_eq!((status, err["error"]["code"].as_str().unwrap()), (StatusCode::CONFLICT, "patient_exists"));
}

#[derive(Default)]
struct Outbox(Mutex<Vec<(String, DateTime<Utc>)>>, Mutex<bool>);

impl Notifier for Outbox {
    fn deliver(&self, patient_id: &str, at: DateTime<Utc>) -> Result<(), String> {
        if *self.1.lock().unwrap() {
            return Err("gateway down".into());
        }
        self.0.lock().unwrap().push((patient_id.to_string(), at));
        Ok(())
    }
}

#[tokio::test]
async fn reminders_fire_once_per_local_morning() {
    let h = Harness::new();
    let opted = h.register("opted").await;
    h.register("silent").await;
    // UTC+8: 20:00 local on 2025-08-23 is 12:00 UTC.
    let (status, p) = h
        .call("POST", "/patients/opted/reminder-optin", Some(&opted), Some(json!({ "opt_in": true, "utc_offset_minutes": 480 })))
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(p["reminder_opt_in"], true);
    let store = h.service.state.store.clone();
    let outbox = Outbox::default();

    let evening = Utc.with_ymd_and_hms(2025, 8, 23, 12, 0, 0).unwrap();
    let run = run_reminders(&store, &outbox, evening).unwrap();
    let eight_local = Utc.with_ymd_and_hms(2025, 8, 24, 0, 0, 0).unwrap();
    assert_eq!(run.scheduled, [("opted".to_string(), eight_local)]);
    assert!(run.delivered.is_empty());
    assert!(run_reminders(&store, &outbox, evening).unwrap().scheduled.is_empty());

    // Delivery fails at 08:00 and is retried on the next cycle.
    *outbox.1.lock().unwrap() = true;
    let run = run_reminders(&store, &outbox, eight_local).unwrap();
    assert_eq!(run.failed.len(), 1);
    *outbox.1.lock().unwrap() = false;
    let later = eight_local + chrono::Duration::minutes(1);
    assert_eq!(run_reminders(&store, &outbox, later).unwrap().delivered, ["opted"]);
    assert!(run_reminders(&store, &outbox, later + chrono::Duration::minutes(1)).unwrap().delivered.is_empty());
    assert_eq!(outbox.0.lock().unwrap().len(), 1);
    assert_eq!(store.sent_reminders("opted").unwrap(), [NaiveDate::from_ymd_opt(2025, 8, 24).unwrap()]);
    assert!(store.sent_reminders("silent").unwrap().is_empty());
}
