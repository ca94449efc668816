#![allow(dead_code)]

use reqwest::multipart::{Form, Part};
use reqwest::{Client, StatusCode};
use serde_json::Value;
use tinyseg_server::{MaskRequest, RunningService, ServiceConfig};

pub const UUID_A: &str = "123e4567-e89b-12d3-a456-426614174000";
pub const UUID_B: &str = "9f1c2d3e-4b5a-4c6d-8e7f-0a1b2c3d4e5f";

pub async fn start(config: ServiceConfig) -> RunningService {
    RunningService::start(ServiceConfig { port: 0, ..config }).await.expect("service starts")
}

pub fn client() -> Client {
    Client::builder().pool_max_idle_per_host(4).build().unwrap()
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: reqwest::header::HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.body))
        })
    }

    pub fn error_code(&self) -> String {
        self.json()["error"].as_str().unwrap_or_default().to_string()
    }
}

async fn reply(r: reqwest::Response) -> Reply {
    Reply {
        status: r.status(),
        headers: r.headers().clone(),
        body: r.bytes().await.unwrap().to_vec(),
    }
}

pub async fn upload(
    c: &Client,
    svc: &RunningService,
    bytes: Vec<u8>,
    filename: &str,
    uuid: &str,
    detector: Option<&str>,
) -> Reply {
    let form = Form::new()
        .text("client_uuid", uuid.to_string())
        .part("file", Part::bytes(bytes).file_name(filename.to_string()));
    let mut req = c.post(svc.url("/api/v1/images")).multipart(form);
    if let Some(d) = detector {
        req = req.query(&[("detector", d)]);
    }
    reply(req.send().await.unwrap()).await
}

pub async fn get(c: &Client, svc: &RunningService, path: &str) -> Reply {
    reply(c.get(svc.url(path)).send().await.unwrap()).await
}

pub async fn post_mask(c: &Client, svc: &RunningService, key: &str, req: &MaskRequest) -> Reply {
    post_raw(c, svc, key, serde_json::to_vec(req).unwrap()).await
}

pub async fn post_raw(c: &Client, svc: &RunningService, key: &str, body: Vec<u8>) -> Reply {
    let r = c
        .post(svc.url(&format!("/api/v1/mask/{key}")))
        .header("content-type", "application/json")
        .body(body)
        .send()
        .await
        .unwrap();
    reply(r).await
}

pub fn key_of(r: &Reply) -> String {
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
    r.json()["key"].as_str().unwrap().to_string()
}
