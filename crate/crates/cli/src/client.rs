//! Transport to the gateway: over HTTP, or in-process with `--embedded`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use credledger::{Account, Clock, Engine, EngineConfig};
use credledger_gateway::{router, ErrorBody};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use crate::CliError;

/// An engine hosted in this process, persisted to `state` after each command.
pub struct Embedded {
    pub engine: Arc<Engine>,
    pub state: PathBuf,
    router: Router,
    runtime: tokio::runtime::Runtime,
}

impl Embedded {
    pub fn open(clock: Arc<dyn Clock>, state: PathBuf) -> Result<Embedded, CliError> {
        let config = EngineConfig {
            state_path: Some(state.clone()),
            ..EngineConfig::default()
        };
        let engine = Arc::new(Engine::open(clock, config)?);
        let runtime = tokio::runtime::Builder::new_current_thread()
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?;
        Ok(Embedded {
            router: router(engine.clone(), None),
            engine,
            state,
            runtime,
        })
    }

    fn call(&self, method: Method, path: &str, token: Option<&str>, body: Vec<u8>) -> Result<(u16, Vec<u8>), CliError> {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = req
            .header("content-type", "application/json")
            .body(Body::from(body))
            .map_err(|e| CliError::Transport(e.to_string()))?;
        self.runtime.block_on(async {
            let resp = self.router.clone().oneshot(req).await.expect("router is infallible");
            let status = resp.status().as_u16();
            let bytes = resp
                .into_body()
                .collect()
                .await
                .map_err(|e| CliError::Transport(e.to_string()))?
                .to_bytes();
            Ok((status, bytes.to_vec()))
        })
    }

    /// Includes pending transactions in a block and writes the state file.
    pub fn finish(&self) -> Result<(), CliError> {
        if self.engine.chain().pending() > 0 {
            self.engine.tick()?;
        }
        self.engine.save(&self.state)?;
        Ok(())
    }
}

pub enum Transport {
    Remote { base: String, http: reqwest::blocking::Client },
    Embedded(Box<Embedded>),
}

pub struct Client {
    pub transport: Transport,
    token: Option<String>,
}

impl Client {
    pub fn remote(base: &str) -> Client {
        Client {
            transport: Transport::Remote {
                base: base.trim_end_matches('/').to_string(),
                http: reqwest::blocking::Client::new(),
            },
            token: None,
        }
    }

    pub fn embedded(embedded: Embedded) -> Client {
        Client {
            transport: Transport::Embedded(Box::new(embedded)),
            token: None,
        }
    }

    pub fn raw(&self, method: Method, path: &str, body: Vec<u8>) -> Result<(u16, Vec<u8>), CliError> {
        match &self.transport {
            Transport::Embedded(e) => e.call(method, path, self.token.as_deref(), body),
            Transport::Remote { base, http } => {
                let mut req = http
                    .request(method, format!("{base}{path}"))
                    .header("content-type", "application/json")
                    .body(body);
                if let Some(t) = &self.token {
                    req = req.bearer_auth(t);
                }
                let resp = req.send().map_err(|e| CliError::Transport(e.to_string()))?;
                let status = resp.status().as_u16();
                let bytes = resp.bytes().map_err(|e| CliError::Transport(e.to_string()))?;
                Ok((status, bytes.to_vec()))
            }
        }
    }

    /// Sends a request and decodes the JSON reply, mapping error bodies to
    /// [`CliError::Api`].
    pub fn send_bytes(&self, method: Method, path: &str, body: Vec<u8>) -> Result<Value, CliError> {
        let (status, bytes) = self.raw(method, path, body)?;
        if StatusCode::from_u16(status).is_ok_and(|s| s.is_success()) {
            return serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Transport(format!("gateway sent invalid JSON: {e}")));
        }
        match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(b) => Err(CliError::Api {
                status,
                code: b.error.code,
                message: b.error.message,
            }),
            Err(_) => Err(CliError::Transport(format!(
                "gateway replied {status}: {}",
                String::from_utf8_lossy(&bytes)
            ))),
        }
    }

    pub fn send(&self, method: Method, path: &str, body: Option<Value>) -> Result<Value, CliError> {
        let body = body.map(|b| serde_json::to_vec(&b).expect("JSON value serializes"));
        self.send_bytes(method, path, body.unwrap_or_default())
    }

    pub fn get(&self, path: &str) -> Result<Value, CliError> {
        self.send(Method::GET, path, None)
    }

    pub fn post(&self, path: &str, body: Value) -> Result<Value, CliError> {
        self.send(Method::POST, path, Some(body))
    }

    /// Signs a fresh challenge with `account` and keeps the session token.
    pub fn login(&mut self, account: &Account) -> Result<(), CliError> {
        let challenge = self.post("/auth/challenge", json!({"address": account.address()}))?;
        let text = challenge["text"]
            .as_str()
            .ok_or_else(|| CliError::Transport("challenge without text".into()))?;
        let signature = account.sign(text.as_bytes());
        let session = self.post(
            "/auth/login",
            json!({
                "message": text,
                "signature": hex::encode(signature),
                "publicKey": account.public_key_hex(),
            }),
        )?;
        self.token = session["token"].as_str().map(str::to_string);
        Ok(())
    }

    pub fn finish(&self) -> Result<(), CliError> {
        match &self.transport {
            Transport::Embedded(e) => e.finish(),
            Transport::Remote { .. } => Ok(()),
        }
    }
}
