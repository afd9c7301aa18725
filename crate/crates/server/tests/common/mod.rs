#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

use parley::{router, AppState};
use parley_core::gateway::{Fixtures, Gateway, MockProvider};
use parley_core::samples;
use parley_core::session::SessionStore;
use parley_core::workflow::Workflow;

pub struct TestApp {
    pub router: Router,
    pub state: AppState,
    pub mock: Arc<MockProvider>,
    pub dir: TempDir,
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub text: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.text))
    }

    pub fn code(&self) -> String {
        self.json()["code"].as_str().unwrap_or_default().to_string()
    }
}

impl TestApp {
    pub fn new(fixtures: Fixtures) -> TestApp {
        let dir = TempDir::new().unwrap();
        let mock = Arc::new(MockProvider::new(fixtures));
        let gateway = Arc::new(Gateway::new(mock.clone()));
        let store = SessionStore::open(dir.path()).unwrap();
        let state = AppState::new(Workflow::new(gateway, store));
        TestApp {
            router: router(state.clone()),
            state,
            mock,
            dir,
        }
    }

    pub fn demo() -> TestApp {
        TestApp::new(samples::demo_fixtures())
    }

    pub async fn request(&self, req: Request<Body>) -> Reply {
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let content_type = resp
            .headers()
            .get(header::CONTENT_TYPE)
            .map(|v| v.to_str().unwrap().to_string())
            .unwrap_or_default();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        Reply {
            status,
            content_type,
            text: String::from_utf8(bytes.to_vec()).unwrap(),
        }
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> Reply {
        let builder = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(v) => builder
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(v.to_string()))
                .unwrap(),
            None => builder.body(Body::empty()).unwrap(),
        };
        self.request(req).await
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.call(Method::GET, uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Option<Value>) -> Reply {
        self.call(Method::POST, uri, body).await
    }

    pub async fn put(&self, uri: &str, body: Value) -> Reply {
        self.call(Method::PUT, uri, Some(body)).await
    }

    pub async fn upload(&self, id: &str, images: &[Vec<u8>]) -> Reply {
        let boundary = "parley-test-boundary";
        let mut body = Vec::new();
        for (i, img) in images.iter().enumerate() {
            body.extend_from_slice(
                format!(
                    "--{boundary}\r\nContent-Disposition: form-data; name=\"screenshots\"; filename=\"shot{i}.png\"\r\nContent-Type: image/png\r\n\r\n"
                )
                .as_bytes(),
            );
            body.extend_from_slice(img);
            body.extend_from_slice(b"\r\n");
        }
        body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
        let req = Request::builder()
            .method(Method::POST)
            .uri(format!("/api/sessions/{id}/screenshots"))
            .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
            .body(Body::from(body))
            .unwrap();
        self.request(req).await
    }

    pub async fn create(&self) -> String {
        let r = self.post("/api/sessions", None).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
        r.json()["session_id"].as_str().unwrap().to_string()
    }
}
