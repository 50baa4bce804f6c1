//! In-process HTTP client and the scripted golden pipeline, shared by the
//! API and acceptance tests.

#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use docmine::adapters::Adapters;
use docmine::api::router;
use docmine::fixture::golden_document;
use docmine::store::{MemoryStorage, Store, StoreSettings, SystemClock};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const GOLDEN_CSV: &[u8] = include_bytes!("../golden/doc01.csv");

pub struct Client {
    pub store: Arc<Store>,
    app: Router,
    rt: tokio::runtime::Runtime,
    pub token: Option<String>,
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("not JSON ({e}): {}", String::from_utf8_lossy(&self.bytes)))
    }
}

impl Client {
    pub fn new() -> Self {
        let settings = StoreSettings { bcrypt_cost: 4, ..StoreSettings::default() };
        let store = Store::open(Box::new(MemoryStorage::default()), Box::new(SystemClock), settings, Adapters::default()).unwrap();
        Self::with_store(Arc::new(store))
    }

    pub fn with_store(store: Arc<Store>) -> Self {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        Self { app: router(store.clone()), store, rt, token: None }
    }

    pub fn send(&self, method: Method, path: &str, content_type: Option<&str>, body: Vec<u8>) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = &self.token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        if let Some(ct) = content_type {
            req = req.header(header::CONTENT_TYPE, ct);
        }
        let req = req.body(Body::from(body)).unwrap();
        self.rt.block_on(async {
            let resp = self.app.clone().oneshot(req).await.unwrap();
            let status = resp.status();
            let content_type = resp.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_string()).unwrap_or_default();
            let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
            Reply { status, content_type, bytes }
        })
    }

    pub fn call(&self, method: Method, path: &str, body: Option<Value>) -> Reply {
        match body {
            Some(v) => self.send(method, path, Some("application/json"), serde_json::to_vec(&v).unwrap()),
            None => self.send(method, path, None, Vec::new()),
        }
    }

    /// Calls and expects success, returning the JSON body.
    pub fn ok(&self, method: Method, path: &str, body: Option<Value>) -> Value {
        let r = self.call(method.clone(), path, body);
        assert!(r.status.is_success(), "{method} {path}: {} {}", r.status, String::from_utf8_lossy(&r.bytes));
        if r.bytes.is_empty() {
            Value::Null
        } else {
            r.json()
        }
    }

    pub fn login(&mut self, user: &str, password: &str) {
        let r = self.ok(Method::POST, "/api/auth/login", Some(json!({ "user_id": user, "password": password })));
        self.token = Some(r["token"].as_str().unwrap().to_string());
    }

    pub fn upload_multipart(&self, path: &str, filename: &str, bytes: &[u8]) -> Reply {
        let boundary = "docmine-test-boundary";
        let mut body = format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{filename}\"\r\nContent-Type: application/pdf\r\n\r\n"
        )
        .into_bytes();
        body.extend_from_slice(bytes);
        body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
        self.send(Method::POST, path, Some(&format!("multipart/form-data; boundary={boundary}")), body)
    }

    /// Polls until the file leaves the pending state.
    pub fn wait_parsed(&self, file_id: &str) -> Value {
        for _ in 0..600 {
            let rec = self.ok(Method::GET, &format!("/api/files/{file_id}"), None);
            if rec["status"]["state"] != "pending" {
                return rec;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        panic!("{file_id} still pending");
    }
}

pub fn golden_project_body() -> Value {
    json!({
        "name": "Veracruz beaches",
        "description": "Detrital zircon ages",
        "label_configs": [{
            "label": "locality",
            "rules": [{ "gazetteer": ["Palma Sola", "Riachuelos"] }],
            "visible": true,
            "linked_field": "locality"
        }],
        "header": { "fields": ["sample id", "age", "error", "locality", "latitude", "longitude"], "key_field": "sample id" }
    })
}

/// The scripted pipeline on fixture document #1: upload, metadata vote,
/// table confirmation, span link, map mark, integration and CSV export.
/// Returns the client, project id and exported bytes.
pub fn golden_api_run() -> (Client, String, Vec<u8>) {
    golden_api_run_with(Client::new())
}

/// [`golden_api_run`] against a caller-supplied client and store.
pub fn golden_api_run_with(mut c: Client) -> (Client, String, Vec<u8>) {
    c.store.add_user("ana", "Ana", "zircon").unwrap();
    c.login("ana", "zircon");

    let p = c.ok(Method::POST, "/api/projects", Some(golden_project_body()))["project_id"].as_str().unwrap().to_string();
    let up = c.upload_multipart(&format!("/api/projects/{p}/files"), "doc01.pdf", &golden_document().pdf);
    assert_eq!(up.status, StatusCode::ACCEPTED);
    let f = up.json()["file_id"].as_str().unwrap().to_string();
    let rec = c.wait_parsed(&f);
    assert_eq!(rec["status"]["state"], "parsed");
    c.ok(Method::POST, &format!("/api/files/{f}/lock"), None);

    let meta = c.ok(Method::GET, &format!("/api/files/{f}/meta"), None);
    c.ok(Method::PUT, &format!("/api/files/{f}/meta"), Some(meta["record"].clone()));

    let tables = c.ok(Method::POST, &format!("/api/files/{f}/tables/detect"), None);
    let t = tables[0]["table_id"].as_str().unwrap().to_string();
    let tp = format!("/api/files/{f}/tables/{t}");
    c.ok(Method::POST, &format!("{tp}/confirm-region"), Some(json!({ "region": tables[0]["region"] })));
    c.ok(Method::POST, &format!("{tp}/structure"), None);
    c.ok(Method::POST, &format!("{tp}/structure/confirm"), None);
    c.ok(Method::POST, &format!("{tp}/content"), None);
    c.ok(Method::POST, &format!("{tp}/confirm"), None);

    let spans = c.ok(Method::GET, &format!("/api/files/{f}/spans"), None);
    let spans = spans.as_array().unwrap();
    let keep = spans.iter().find(|s| s["text"] == "Palma Sola").unwrap()["span_id"].clone();
    for s in spans.iter().filter(|s| s["span_id"] != keep) {
        c.ok(Method::PUT, &format!("/api/files/{f}/spans/{}/link", s["span_id"].as_str().unwrap()), Some(json!({ "field": null })));
    }
    c.ok(Method::PUT, &format!("/api/files/{f}/spans/{}/link", keep.as_str().unwrap()), Some(json!({ "field": "locality" })));

    let maps = c.ok(Method::POST, &format!("/api/files/{f}/maps/detect"), None);
    let m = maps[0]["map_id"].as_str().unwrap().to_string();
    let mp = format!("/api/files/{f}/maps/{m}");
    c.ok(Method::POST, &format!("{mp}/confirm-region"), Some(json!({ "region": maps[0]["region"] })));
    c.ok(Method::POST, &format!("{mp}/gridlines"), None);
    c.ok(Method::POST, &format!("{mp}/fit"), None);
    c.ok(Method::POST, &format!("{mp}/confirm-calibration"), None);
    let point = c.ok(Method::POST, &format!("{mp}/points"), Some(json!({ "x": 180.0, "y": 40.0 })));
    c.ok(Method::PUT, &format!("{mp}/points/{}", point["point_id"].as_str().unwrap()), Some(json!({ "key": "PS-01" })));

    c.ok(Method::POST, &format!("/api/projects/{p}/integrate"), None);
    let export = c.call(Method::GET, &format!("/api/projects/{p}/export?format=csv"), None);
    assert_eq!(export.status, StatusCode::OK);
    assert!(export.content_type.starts_with("text/csv"));
    let bytes = export.bytes.clone();
    (c, p, bytes)
}
