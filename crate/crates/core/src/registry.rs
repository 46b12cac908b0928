//! Certificate token registry: minting, listings, time-limited view rights and
//! reclaim.
//!
//! Ownership is fixed at mint. Sharing hands out a single viewer slot with a
//! transfer-back deadline; the owner can reclaim early, and expired shares are
//! reclaimed either lazily (on access) or by the periodic
//! [`Registry::process_schedules`] sweep. Every mutation is applied under one
//! lock and recorded as a chain transaction in application order.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::chain::{Chain, ChainError};
use crate::credential::CertificateMetadata;
use crate::store::{Cid, ContentStore};
use crate::types::{Address, Millis};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("content {0} is not in the store")]
    UnknownCid(Cid),
    #[error("caller {0} is not a registered account")]
    UnknownCaller(Address),
    #[error("token {0} does not exist")]
    UnknownToken(u64),
    #[error("token id {0} already exists")]
    DuplicateTokenId(u64),
    #[error("caller is neither owner nor active viewer of token {0}")]
    AccessDenied(u64),
    #[error("view rights on token {0} have expired")]
    ViewExpired(u64),
    #[error("caller does not own token {0}")]
    NotOwner(u64),
    #[error("token {0} is already shared")]
    AlreadyShared(u64),
    #[error("transfer-back time {deadline} is not after now ({now})")]
    InvalidDeadline { deadline: Millis, now: Millis },
    #[error("token {0} is not shared")]
    NotShared(u64),
    #[error("stored metadata unreadable: {0}")]
    Metadata(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("corrupt registry: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ListedToken {
    pub token_id: u64,
    pub owner: Address,
    pub viewer: Option<Address>,
    pub transfer_back_time: Option<Millis>,
    pub currently_listed: bool,
    pub current_viewer: bool,
    #[serde(rename = "tokenURI")]
    pub token_uri: Cid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransferSchedule {
    pub token_id: u64,
    pub transfer_back_time: Millis,
    pub transfer_back_to: Address,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Mint,
    Transfer,
    Reclaim,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TokenListSuccessEvent {
    pub kind: EventKind,
    pub token_id: u64,
    pub owner: Address,
    pub viewer: Option<Address>,
    pub transfer_back_time: Option<Millis>,
    pub currently_listed: bool,
    pub current_viewer: bool,
    pub emitted_at: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Owner,
    Viewer,
}

/// Result of [`Registry::view_token`]: the record plus its metadata with the
/// token id and URI filled in.
#[derive(Debug, Clone)]
pub struct ViewedToken {
    pub token: ListedToken,
    pub document: CertificateMetadata,
    pub access: Access,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegistrySnapshot {
    pub tokens: BTreeMap<u64, ListedToken>,
    pub schedules: Vec<TransferSchedule>,
}

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "camelCase")]
enum RegistryOp<'a> {
    #[serde(rename_all = "camelCase")]
    Mint {
        seq: usize,
        token_id: u64,
        #[serde(rename = "tokenURI")]
        token_uri: &'a Cid,
        owner: Address,
    },
    #[serde(rename_all = "camelCase")]
    Transfer {
        seq: usize,
        token_id: u64,
        receiver: Address,
        transfer_back_time: Millis,
    },
    #[serde(rename_all = "camelCase")]
    Reclaim { seq: usize, token_id: u64 },
}

#[derive(Debug, Default)]
struct RegistryState {
    tokens: BTreeMap<u64, ListedToken>,
    schedules: BTreeMap<u64, TransferSchedule>,
    events: Vec<TokenListSuccessEvent>,
}

impl RegistryState {
    fn token(&self, token_id: u64) -> Result<&ListedToken, RegistryError> {
        self.tokens
            .get(&token_id)
            .ok_or(RegistryError::UnknownToken(token_id))
    }

    fn emit(&mut self, kind: EventKind, token_id: u64, now: Millis) -> TokenListSuccessEvent {
        let t = &self.tokens[&token_id];
        let event = TokenListSuccessEvent {
            kind,
            token_id,
            owner: t.owner,
            viewer: t.viewer,
            transfer_back_time: t.transfer_back_time,
            currently_listed: t.currently_listed,
            current_viewer: t.current_viewer,
            emitted_at: now,
        };
        self.events.push(event.clone());
        event
    }

    fn is_due(&self, token_id: u64, now: Millis) -> bool {
        self.schedules
            .get(&token_id)
            .is_some_and(|s| s.transfer_back_time <= now)
    }
}

pub struct Registry {
    chain: Arc<Chain>,
    store: Arc<ContentStore>,
    state: Mutex<RegistryState>,
}

impl Registry {
    pub fn new(chain: Arc<Chain>, store: Arc<ContentStore>) -> Registry {
        Registry {
            chain,
            store,
            state: Mutex::new(RegistryState::default()),
        }
    }

    fn now(&self) -> Millis {
        self.chain.clock().now()
    }

    fn record(&self, sender: Address, op: RegistryOp<'_>) -> Result<(), RegistryError> {
        let payload = serde_json::to_vec(&op).expect("op serializes");
        self.chain.submit_transaction(sender, payload)?;
        Ok(())
    }

    /// Mints a token for `student` pointing at stored metadata.
    pub fn create_token(
        &self,
        token_uri: &Cid,
        student: Address,
        caller: Address,
    ) -> Result<u64, RegistryError> {
        if !self.store.contains(token_uri) {
            return Err(RegistryError::UnknownCid(token_uri.clone()));
        }
        if !self.chain.is_known(&caller) {
            return Err(RegistryError::UnknownCaller(caller));
        }
        let mut st = self.state.lock().unwrap();
        let token_id = st.tokens.keys().next_back().map_or(1, |max| max + 1);
        self.chain.register_address(student);
        self.record(
            caller,
            RegistryOp::Mint {
                seq: st.events.len(),
                token_id,
                token_uri,
                owner: student,
            },
        )?;
        Self::create_listed_token(&mut st, token_id, student, token_uri.clone())?;
        st.emit(EventKind::Mint, token_id, self.now());
        Ok(token_id)
    }

    fn create_listed_token(
        st: &mut RegistryState,
        token_id: u64,
        owner: Address,
        token_uri: Cid,
    ) -> Result<(), RegistryError> {
        if st.tokens.contains_key(&token_id) {
            return Err(RegistryError::DuplicateTokenId(token_id));
        }
        st.tokens.insert(
            token_id,
            ListedToken {
                token_id,
                owner,
                viewer: None,
                transfer_back_time: None,
                currently_listed: true,
                current_viewer: false,
                token_uri,
            },
        );
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.state.lock().unwrap().tokens.len()
    }

    pub fn token(&self, token_id: u64) -> Option<ListedToken> {
        self.state.lock().unwrap().tokens.get(&token_id).cloned()
    }

    fn select(&self, pred: impl Fn(&ListedToken) -> bool) -> Vec<ListedToken> {
        let st = self.state.lock().unwrap();
        st.tokens.values().filter(|t| pred(t)).cloned().collect()
    }

    pub fn get_all_nfts(&self) -> Vec<ListedToken> {
        self.select(|_| true)
    }

    pub fn get_my_nfts(&self, caller: Address) -> Vec<ListedToken> {
        self.select(|t| t.owner == caller)
    }

    /// Tokens the caller has shared out and not yet reclaimed.
    pub fn get_transferred_nfts(&self, caller: Address) -> Vec<ListedToken> {
        self.select(|t| t.owner == caller && t.current_viewer)
    }

    /// Tokens currently shared with the caller as viewer.
    pub fn get_shared_with(&self, caller: Address) -> Vec<ListedToken> {
        self.select(|t| t.current_viewer && t.viewer == Some(caller))
    }

    fn reclaim(
        &self,
        st: &mut RegistryState,
        token_id: u64,
        now: Millis,
    ) -> Result<TokenListSuccessEvent, RegistryError> {
        let owner = st.tokens[&token_id].owner;
        self.record(
            owner,
            RegistryOp::Reclaim {
                seq: st.events.len(),
                token_id,
            },
        )?;
        let t = st.tokens.get_mut(&token_id).expect("token exists");
        t.viewer = None;
        t.transfer_back_time = None;
        t.current_viewer = false;
        st.schedules.remove(&token_id);
        Ok(st.emit(EventKind::Reclaim, token_id, now))
    }

    /// Returns the token's metadata if the caller is its owner or its active
    /// viewer. An expired share is reclaimed first; the expired viewer then
    /// gets `ViewExpired`.
    pub fn view_token(&self, token_id: u64, caller: Address) -> Result<ViewedToken, RegistryError> {
        let (token, access) = {
            let mut st = self.state.lock().unwrap();
            let now = self.now();
            let mut expired_viewer = None;
            if st.is_due(token_id, now) {
                expired_viewer = st.token(token_id)?.viewer;
                self.reclaim(&mut st, token_id, now)?;
            }
            let token = st.token(token_id)?.clone();
            let access = if token.owner == caller {
                Access::Owner
            } else if expired_viewer == Some(caller) {
                return Err(RegistryError::ViewExpired(token_id));
            } else if token.current_viewer && token.viewer == Some(caller) {
                Access::Viewer
            } else {
                return Err(RegistryError::AccessDenied(token_id));
            };
            (token, access)
        };
        let document = self.load_document(&token)?;
        Ok(ViewedToken {
            token,
            document,
            access,
        })
    }

    /// Fetches a token's metadata via its URI and fills in its id and URI.
    pub fn load_document(&self, token: &ListedToken) -> Result<CertificateMetadata, RegistryError> {
        let bytes = self
            .store
            .get(&token.token_uri)
            .map_err(|e| RegistryError::Metadata(e.to_string()))?;
        let mut document = CertificateMetadata::from_json(&bytes)
            .map_err(|e| RegistryError::Metadata(e.to_string()))?;
        match document.view.as_mut() {
            Some(view) => {
                view.token_id = token.token_id;
                view.token_uri = token.token_uri.to_string();
            }
            None => {
                document.description.original.token_id = token.token_id;
                document.description.original.token_uri = token.token_uri.to_string();
            }
        }
        Ok(document)
    }

    /// Grants `receiver` view rights until `transfer_back_time`. Ownership does not move.
    pub fn execute_transfer(
        &self,
        token_id: u64,
        receiver: Address,
        transfer_back_time: Millis,
        caller: Address,
    ) -> Result<TokenListSuccessEvent, RegistryError> {
        let mut st = self.state.lock().unwrap();
        let now = self.now();
        let owner = st.token(token_id)?.owner;
        if owner != caller {
            return Err(RegistryError::NotOwner(token_id));
        }
        if st.is_due(token_id, now) {
            self.reclaim(&mut st, token_id, now)?;
        }
        if st.tokens[&token_id].current_viewer {
            return Err(RegistryError::AlreadyShared(token_id));
        }
        if transfer_back_time <= now {
            return Err(RegistryError::InvalidDeadline {
                deadline: transfer_back_time,
                now,
            });
        }
        self.record(
            owner,
            RegistryOp::Transfer {
                seq: st.events.len(),
                token_id,
                receiver,
                transfer_back_time,
            },
        )?;
        let t = st.tokens.get_mut(&token_id).expect("token exists");
        t.viewer = Some(receiver);
        t.transfer_back_time = Some(transfer_back_time);
        t.current_viewer = true;
        st.schedules.insert(
            token_id,
            TransferSchedule {
                token_id,
                transfer_back_time,
                transfer_back_to: owner,
            },
        );
        Ok(st.emit(EventKind::Transfer, token_id, now))
    }

    /// Owner-initiated revocation of an active share.
    pub fn transfer_ownership(
        &self,
        token_id: u64,
        caller: Address,
    ) -> Result<TokenListSuccessEvent, RegistryError> {
        let mut st = self.state.lock().unwrap();
        let now = self.now();
        let token = st.token(token_id)?;
        if token.owner != caller {
            return Err(RegistryError::NotOwner(token_id));
        }
        if !token.current_viewer {
            return Err(RegistryError::NotShared(token_id));
        }
        self.reclaim(&mut st, token_id, now)
    }

    /// Reclaims every share whose deadline has passed, earliest deadline first.
    pub fn process_schedules(&self) -> Result<Vec<TokenListSuccessEvent>, RegistryError> {
        let mut st = self.state.lock().unwrap();
        let now = self.now();
        let mut due: Vec<(Millis, u64)> = st
            .schedules
            .values()
            .filter(|s| s.transfer_back_time <= now)
            .map(|s| (s.transfer_back_time, s.token_id))
            .collect();
        due.sort_unstable();
        due.into_iter()
            .map(|(_, token_id)| self.reclaim(&mut st, token_id, now))
            .collect()
    }

    pub fn events(&self) -> Vec<TokenListSuccessEvent> {
        self.state.lock().unwrap().events.clone()
    }

    pub fn event_count(&self) -> usize {
        self.state.lock().unwrap().events.len()
    }

    /// The event log as JSON lines.
    pub fn events_jsonl(&self) -> String {
        let st = self.state.lock().unwrap();
        let mut out = String::new();
        for e in &st.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn snapshot(&self) -> RegistrySnapshot {
        let st = self.state.lock().unwrap();
        RegistrySnapshot {
            tokens: st.tokens.clone(),
            schedules: st.schedules.values().cloned().collect(),
        }
    }

    /// Rebuilds a registry, rejecting snapshots that break the token/schedule invariants.
    pub fn restore(
        chain: Arc<Chain>,
        store: Arc<ContentStore>,
        snapshot: RegistrySnapshot,
        events: Vec<TokenListSuccessEvent>,
    ) -> Result<Registry, RegistryError> {
        let corrupt = |m: String| Err(RegistryError::Corrupt(m));
        let schedules: BTreeMap<u64, TransferSchedule> = snapshot
            .schedules
            .into_iter()
            .map(|s| (s.token_id, s))
            .collect();
        for (id, t) in &snapshot.tokens {
            if *id != t.token_id || *id == 0 {
                return corrupt(format!("token key {id} holds id {}", t.token_id));
            }
            if !store.contains(&t.token_uri) {
                return corrupt(format!("token {id} metadata {} missing", t.token_uri));
            }
            match (t.current_viewer, schedules.get(id)) {
                (true, Some(s)) => {
                    if t.viewer.is_none()
                        || t.transfer_back_time != Some(s.transfer_back_time)
                        || s.transfer_back_to != t.owner
                    {
                        return corrupt(format!("token {id} schedule disagrees with record"));
                    }
                }
                (false, None) => {
                    if t.viewer.is_some() || t.transfer_back_time.is_some() {
                        return corrupt(format!("token {id} has a viewer but is not shared"));
                    }
                }
                _ => return corrupt(format!("token {id} share flag disagrees with schedules")),
            }
        }
        if schedules.len() != snapshot.tokens.values().filter(|t| t.current_viewer).count() {
            return corrupt("schedule for unknown token".into());
        }
        let mints = events.iter().filter(|e| e.kind == EventKind::Mint).count();
        if mints != snapshot.tokens.len() {
            return corrupt(format!("{mints} mint events for {} tokens", snapshot.tokens.len()));
        }
        Ok(Registry {
            chain,
            store,
            state: Mutex::new(RegistryState {
                tokens: snapshot.tokens,
                schedules,
                events,
            }),
        })
    }
}
