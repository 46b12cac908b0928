//! Wallet sign-in: the server issues a single-use challenge, the wallet signs
//! its text rendering, and a verified signature buys a bearer session.
//!
//! Challenge text has a fixed six-field layout:
//!
//! ```text
//! {domain} wants you to sign in with your account:
//! {address}
//!
//! {statement}
//!
//! Nonce: {nonce}
//! Issued At: {issuedAt}
//! Expiration Time: {expiresAt}
//! ```
//!
//! Timestamps are milliseconds.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::chain::verify_signature;
use crate::clock::Clock;
use crate::types::{Address, Millis};

const HEADER_SUFFIX: &str = " wants you to sign in with your account:";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("malformed challenge text: {0}")]
    Malformed(String),
    #[error("no pending challenge matches")]
    UnknownChallenge,
    #[error("challenge expired")]
    ChallengeExpired,
    #[error("signature does not verify for the challenge address")]
    BadSignature,
    #[error("nonce already used")]
    NonceReused,
    #[error("unknown session")]
    UnknownSession,
    #[error("session expired")]
    SessionExpired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    University,
    Student,
    Employer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignInChallenge {
    pub domain: String,
    pub address: Address,
    pub statement: String,
    pub nonce: String,
    pub issued_at: Millis,
    pub expires_at: Millis,
}

impl SignInChallenge {
    pub fn render(&self) -> String {
        format!(
            "{}{HEADER_SUFFIX}\n{}\n\n{}\n\nNonce: {}\nIssued At: {}\nExpiration Time: {}",
            self.domain, self.address, self.statement, self.nonce, self.issued_at, self.expires_at
        )
    }

    pub fn parse(text: &str) -> Result<SignInChallenge, AuthError> {
        let bad = |what: &str| AuthError::Malformed(what.to_string());
        let lines: Vec<&str> = text.split('\n').collect();
        let [header, address, blank1, statement, blank2, nonce, issued, expires] = lines[..] else {
            return Err(bad("expected eight lines"));
        };
        let domain = header.strip_suffix(HEADER_SUFFIX).ok_or_else(|| bad("header"))?;
        if domain.is_empty() || domain.contains(char::is_whitespace) {
            return Err(bad("domain"));
        }
        if !blank1.is_empty() || !blank2.is_empty() {
            return Err(bad("separator lines"));
        }
        let field = |line: &'_ str, name: &str| -> Result<String, AuthError> {
            line.strip_prefix(name)
                .and_then(|rest| rest.strip_prefix(": "))
                .map(str::to_string)
                .ok_or_else(|| bad(name))
        };
        let nonce = field(nonce, "Nonce")?;
        if nonce.len() != 32 || !nonce.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(bad("nonce"));
        }
        let number = |s: String, name: &str| -> Result<Millis, AuthError> {
            if s.starts_with('+') || (s.len() > 1 && s.starts_with('0')) {
                return Err(bad(name));
            }
            s.parse().map_err(|_| bad(name))
        };
        Ok(SignInChallenge {
            domain: domain.to_string(),
            address: address.parse().map_err(|_| bad("address"))?,
            statement: statement.to_string(),
            nonce,
            issued_at: number(field(issued, "Issued At")?, "Issued At")?,
            expires_at: number(field(expires, "Expiration Time")?, "Expiration Time")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    pub session_id: String,
    pub address: Address,
    pub role: Role,
    pub expires_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AuthConfig {
    pub challenge_ttl_ms: Millis,
    pub session_ttl_ms: Millis,
    pub statement: String,
}

impl Default for AuthConfig {
    fn default() -> Self {
        AuthConfig {
            challenge_ttl_ms: 300_000,
            session_ttl_ms: 3_600_000,
            statement: "Sign in to the credential ledger.".to_string(),
        }
    }
}

pub struct Authenticator {
    clock: Arc<dyn Clock>,
    config: AuthConfig,
    pending: Mutex<HashMap<String, SignInChallenge>>,
    used: Mutex<HashSet<String>>,
    sessions: RwLock<HashMap<String, Session>>,
}

impl Authenticator {
    pub fn new(clock: Arc<dyn Clock>, config: AuthConfig) -> Authenticator {
        Authenticator {
            clock,
            config,
            pending: Mutex::default(),
            used: Mutex::default(),
            sessions: RwLock::default(),
        }
    }

    pub fn config(&self) -> &AuthConfig {
        &self.config
    }

    pub fn create_challenge(&self, address: Address, domain: &str) -> SignInChallenge {
        let issued_at = self.clock.now();
        let challenge = SignInChallenge {
            domain: domain.to_string(),
            address,
            statement: self.config.statement.clone(),
            nonce: hex::encode(rand::random::<[u8; 16]>()),
            issued_at,
            expires_at: issued_at + self.config.challenge_ttl_ms.max(1),
        };
        self.pending
            .lock()
            .unwrap()
            .insert(challenge.nonce.clone(), challenge.clone());
        challenge
    }

    /// Checks a signed challenge and opens a session. `public_key` must derive
    /// the challenge address; `role_of` resolves the address in the directory.
    pub fn verify_login(
        &self,
        challenge_text: &str,
        signature: &[u8],
        public_key: &[u8],
        role_of: impl FnOnce(Address) -> Role,
    ) -> Result<Session, AuthError> {
        let parsed = SignInChallenge::parse(challenge_text)?;
        let now = self.clock.now();
        let challenge = {
            let mut pending = self.pending.lock().unwrap();
            if self.used.lock().unwrap().contains(&parsed.nonce) {
                return Err(AuthError::NonceReused);
            }
            let Some(challenge) = pending.get(&parsed.nonce) else {
                return Err(AuthError::UnknownChallenge);
            };
            if *challenge != parsed {
                return Err(AuthError::UnknownChallenge);
            }
            if now >= challenge.expires_at {
                pending.remove(&parsed.nonce);
                return Err(AuthError::ChallengeExpired);
            }
            if Address::from_public_key(public_key) != challenge.address
                || !verify_signature(public_key, challenge.render().as_bytes(), signature)
            {
                return Err(AuthError::BadSignature);
            }
            self.used.lock().unwrap().insert(parsed.nonce.clone());
            pending.remove(&parsed.nonce).expect("present")
        };
        let session = Session {
            session_id: hex::encode(rand::random::<[u8; 32]>()),
            address: challenge.address,
            role: role_of(challenge.address),
            expires_at: now + self.config.session_ttl_ms,
        };
        self.sessions
            .write()
            .unwrap()
            .insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    pub fn session(&self, session_id: &str) -> Result<Session, AuthError> {
        let session = self
            .sessions
            .read()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or(AuthError::UnknownSession)?;
        if self.clock.now() >= session.expires_at {
            self.sessions.write().unwrap().remove(session_id);
            return Err(AuthError::SessionExpired);
        }
        Ok(session)
    }
}
