//! The service layer: profile directory, role checks, and the issuance,
//! sharing and verification flows composed from the lower modules.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::auth::{AuthConfig, Authenticator, Role, Session, SignInChallenge};
use crate::chain::{Account, Block, Chain};
use crate::clock::Clock;
use crate::credential::{CertificateMetadata, CredentialDraft, SubjectEntry};
use crate::error::EngineError;
use crate::registry::{Access, ListedToken, Registry, TokenListSuccessEvent};
use crate::store::{Cid, ContentStore};
use crate::types::{Address, Millis};
use crate::view::{self, Presentation, VerificationReport, ViewDerivationRequest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UniversityProfile {
    #[serde(rename = "universityID")]
    pub university_id: String,
    pub name: String,
    pub address: Address,
    pub public_key: String,
    pub metadata: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StudentProfile {
    #[serde(rename = "studentID")]
    pub student_id: String,
    pub name: String,
    pub wallet_addr: Address,
    #[serde(rename = "universityID")]
    pub university_id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub issued_credentials: Vec<Cid>,
}

/// Registration request. The university's signing key is held by the
/// service: supply it as `secretKey` (hex), derive it from `seed`, or let the
/// service generate one.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RegisterUniversity {
    #[serde(rename = "universityID")]
    pub university_id: String,
    pub name: String,
    #[serde(default)]
    pub metadata: String,
    #[serde(default)]
    pub secret_key: Option<String>,
    #[serde(default)]
    pub seed: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CreateStudent {
    #[serde(rename = "studentID")]
    pub student_id: String,
    pub name: String,
    pub wallet_addr: Address,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IssueCredential {
    #[serde(rename = "studentID")]
    pub student_id: String,
    pub degree: String,
    pub subjects: Vec<SubjectEntry>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MintedToken {
    pub token_id: u64,
    #[serde(rename = "tokenURI")]
    pub token_uri: Cid,
    pub document: CertificateMetadata,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MyNfts {
    pub owned: Vec<ListedToken>,
    pub shared_with_me: Vec<ListedToken>,
}

/// Response for a single token. Owners get the full document; viewers only
/// the presentation, which lists the exposed subjects.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TokenResponse {
    pub token: ListedToken,
    pub access: Access,
    pub presentation: Presentation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub document: Option<CertificateMetadata>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Me {
    pub address: Address,
    pub role: Role,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub university: Option<UniversityProfile>,
    pub student_profiles: Vec<StudentProfile>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencyBucket {
    pub le_ms: Option<Millis>,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub block_count: usize,
    pub token_count: usize,
    pub event_count: usize,
    pub transaction_count: usize,
    pub pending_transactions: usize,
    pub mean_inclusion_latency_ms: f64,
    pub max_inclusion_latency_ms: Millis,
    pub latency_histogram: Vec<LatencyBucket>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TickReport {
    pub block: Block,
    pub reclaimed: Vec<TokenListSuccessEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChallengeResponse {
    pub challenge: SignInChallenge,
    pub text: String,
}

const LATENCY_BUCKETS_MS: [Millis; 10] = [10, 25, 50, 100, 250, 500, 1_000, 2_500, 5_000, 10_000];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct EngineConfig {
    /// Domain rendered into sign-in challenges.
    pub domain: String,
    pub auth: AuthConfig,
    /// When set, the full state is written here after every mutation.
    pub state_path: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            domain: "credledger.local".to_string(),
            auth: AuthConfig::default(),
            state_path: None,
        }
    }
}

#[derive(Clone)]
pub(crate) struct UniversityRecord {
    pub profile: UniversityProfile,
    pub account: Account,
}

#[derive(Clone, Default)]
pub(crate) struct Directory {
    pub universities: BTreeMap<String, UniversityRecord>,
    /// Keyed by (universityID, studentID).
    pub students: BTreeMap<(String, String), StudentProfile>,
}

impl Directory {
    fn university_by_address(&self, address: &Address) -> Option<&UniversityRecord> {
        self.universities.values().find(|u| u.profile.address == *address)
    }

    pub fn role_of(&self, address: Address) -> Role {
        if self.university_by_address(&address).is_some() {
            Role::University
        } else if self.students.values().any(|s| s.wallet_addr == address) {
            Role::Student
        } else {
            Role::Employer
        }
    }
}

pub struct Engine {
    pub(crate) clock: Arc<dyn Clock>,
    pub(crate) config: EngineConfig,
    pub(crate) chain: Arc<Chain>,
    pub(crate) store: Arc<ContentStore>,
    pub(crate) registry: Registry,
    pub(crate) directory: RwLock<Directory>,
    pub(crate) auth: Authenticator,
    /// Serializes mutations and snapshots against each other.
    pub(crate) writer: Mutex<()>,
}

fn require(session: &Session, role: Role) -> Result<(), EngineError> {
    if session.role != role {
        return Err(EngineError::Unauthorized(format!(
            "{:?} session cannot perform a {:?} action",
            session.role, role
        )));
    }
    Ok(())
}

fn non_empty(value: &str, what: &str) -> Result<(), EngineError> {
    if value.trim().is_empty() {
        return Err(EngineError::InvalidRequest(format!("{what} must not be empty")));
    }
    Ok(())
}

impl Engine {
    pub fn new(clock: Arc<dyn Clock>, config: EngineConfig) -> Engine {
        let chain = Arc::new(Chain::new(clock.clone()));
        let store = Arc::new(ContentStore::in_memory(clock.clone()));
        Self::assemble(clock, config, chain, store, None, Directory::default())
    }

    pub(crate) fn assemble(
        clock: Arc<dyn Clock>,
        config: EngineConfig,
        chain: Arc<Chain>,
        store: Arc<ContentStore>,
        registry: Option<Registry>,
        directory: Directory,
    ) -> Engine {
        let registry = registry.unwrap_or_else(|| Registry::new(chain.clone(), store.clone()));
        Engine {
            auth: Authenticator::new(clock.clone(), config.auth.clone()),
            clock,
            config,
            chain,
            store,
            registry,
            directory: RwLock::new(directory),
            writer: Mutex::new(()),
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn store(&self) -> &ContentStore {
        &self.store
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Writes the state file, if configured. Caller must hold the writer lock.
    fn persist(&self) {
        if let Some(path) = &self.config.state_path {
            if let Err(e) = self.save_locked(path) {
                log::error!("failed to persist state to {}: {e}", path.display());
            }
        }
    }

    // --- sign-in ---

    pub fn challenge(&self, address: Address) -> ChallengeResponse {
        let challenge = self.auth.create_challenge(address, &self.config.domain);
        ChallengeResponse {
            text: challenge.render(),
            challenge,
        }
    }

    pub fn login(&self, text: &str, signature_hex: &str, public_key_hex: &str) -> Result<Session, EngineError> {
        let signature = hex::decode(signature_hex)
            .map_err(|_| EngineError::InvalidRequest("signature is not hex".into()))?;
        let public_key = hex::decode(public_key_hex)
            .map_err(|_| EngineError::InvalidRequest("publicKey is not hex".into()))?;
        let dir = self.directory.read().unwrap();
        Ok(self
            .auth
            .verify_login(text, &signature, &public_key, |a| dir.role_of(a))?)
    }

    /// Signs in `account` end to end (challenge, local signature, verification).
    pub fn login_account(&self, account: &Account) -> Result<Session, EngineError> {
        let c = self.challenge(account.address());
        let sig = hex::encode(account.sign(c.text.as_bytes()));
        self.login(&c.text, &sig, &account.public_key_hex())
    }

    pub fn session(&self, bearer: &str) -> Result<Session, EngineError> {
        self.auth.session(bearer).map_err(|_| EngineError::Unauthenticated)
    }

    // --- directory ---

    pub fn register_university(&self, req: RegisterUniversity) -> Result<UniversityProfile, EngineError> {
        non_empty(&req.university_id, "universityID")?;
        non_empty(&req.name, "name")?;
        let account = match (&req.secret_key, &req.seed) {
            (Some(_), Some(_)) => {
                return Err(EngineError::InvalidRequest("give secretKey or seed, not both".into()))
            }
            (Some(key), None) => Account::from_secret_hex(key)
                .ok_or_else(|| EngineError::InvalidRequest("secretKey must be 32 hex bytes".into()))?,
            (None, Some(seed)) => Account::from_seed(seed.as_bytes()),
            (None, None) => Account::generate(),
        };
        let _w = self.writer.lock().unwrap();
        let mut dir = self.directory.write().unwrap();
        if dir.universities.contains_key(&req.university_id) {
            return Err(EngineError::DuplicateId(req.university_id));
        }
        if dir.university_by_address(&account.address()).is_some() {
            return Err(EngineError::DuplicateId(account.address().to_string()));
        }
        self.chain.register_account(&account)?;
        let profile = UniversityProfile {
            university_id: req.university_id.clone(),
            name: req.name,
            address: account.address(),
            public_key: account.public_key_hex(),
            metadata: req.metadata,
        };
        dir.universities.insert(
            req.university_id,
            UniversityRecord {
                profile: profile.clone(),
                account,
            },
        );
        drop(dir);
        self.persist();
        Ok(profile)
    }

    pub fn universities(&self) -> Vec<UniversityProfile> {
        let dir = self.directory.read().unwrap();
        dir.universities.values().map(|u| u.profile.clone()).collect()
    }

    pub fn university(&self, university_id: &str) -> Result<UniversityProfile, EngineError> {
        let dir = self.directory.read().unwrap();
        dir.universities
            .get(university_id)
            .map(|u| u.profile.clone())
            .ok_or_else(|| EngineError::UnknownUniversity(university_id.to_string()))
    }

    pub fn university_by_address(&self, address: &Address) -> Option<UniversityProfile> {
        let dir = self.directory.read().unwrap();
        dir.university_by_address(address).map(|u| u.profile.clone())
    }

    pub fn students(&self, university_id: &str) -> Vec<StudentProfile> {
        let dir = self.directory.read().unwrap();
        dir.students
            .values()
            .filter(|s| s.university_id == university_id)
            .cloned()
            .collect()
    }

    /// Creates a student profile under the university the session belongs to.
    pub fn create_student(
        &self,
        session: &Session,
        university_id: &str,
        req: CreateStudent,
    ) -> Result<StudentProfile, EngineError> {
        require(session, Role::University)?;
        non_empty(&req.student_id, "studentID")?;
        non_empty(&req.name, "name")?;
        let _w = self.writer.lock().unwrap();
        let mut dir = self.directory.write().unwrap();
        let uni = dir
            .universities
            .get(university_id)
            .ok_or_else(|| EngineError::UnknownUniversity(university_id.to_string()))?;
        if uni.profile.address != session.address {
            return Err(EngineError::Unauthorized(format!(
                "session does not belong to university {university_id}"
            )));
        }
        let key = (university_id.to_string(), req.student_id.clone());
        if dir.students.contains_key(&key) {
            return Err(EngineError::DuplicateId(req.student_id));
        }
        if dir.university_by_address(&req.wallet_addr).is_some() {
            return Err(EngineError::InvalidRequest("wallet belongs to a university".into()));
        }
        let profile = StudentProfile {
            student_id: req.student_id,
            name: req.name,
            wallet_addr: req.wallet_addr,
            university_id: university_id.to_string(),
            description: req.description,
            issued_credentials: Vec::new(),
        };
        self.chain.register_address(req.wallet_addr);
        dir.students.insert(key, profile.clone());
        drop(dir);
        self.persist();
        Ok(profile)
    }

    pub fn me(&self, session: &Session) -> Me {
        let dir = self.directory.read().unwrap();
        Me {
            address: session.address,
            role: session.role,
            university: dir.university_by_address(&session.address).map(|u| u.profile.clone()),
            student_profiles: dir
                .students
                .values()
                .filter(|s| s.wallet_addr == session.address)
                .cloned()
                .collect(),
        }
    }

    // --- credentials ---

    /// Builds, hashes, signs, stores and mints a credential to the student.
    pub fn issue_credential(&self, session: &Session, req: IssueCredential) -> Result<MintedToken, EngineError> {
        require(session, Role::University)?;
        non_empty(&req.degree, "degree")?;
        if req.subjects.is_empty() {
            return Err(EngineError::InvalidRequest("subjects must not be empty".into()));
        }
        let _w = self.writer.lock().unwrap();
        let (uni, student) = {
            let dir = self.directory.read().unwrap();
            let uni = dir
                .university_by_address(&session.address)
                .ok_or_else(|| EngineError::Unauthorized("session is not a registered university".into()))?
                .clone();
            let student = dir
                .students
                .get(&(uni.profile.university_id.clone(), req.student_id.clone()))
                .ok_or_else(|| EngineError::UnknownStudent(req.student_id.clone()))?
                .clone();
            (uni, student)
        };
        let mut doc = CertificateMetadata::from_draft(CredentialDraft {
            university_name: uni.profile.name.clone(),
            university_id: uni.profile.university_id.clone(),
            university_address: uni.profile.address,
            university_metadata: uni.profile.metadata.clone(),
            student_id: student.student_id.clone(),
            student_name: student.name.clone(),
            student_description: student.description.clone(),
            student_wallet: student.wallet_addr,
            degree: req.degree,
            subjects: req.subjects,
        })?;
        doc.seal(&uni.account)?;
        let cid = self.store.put(&view::storage_bytes(&doc)?)?;
        let token_id = self
            .registry
            .create_token(&cid, student.wallet_addr, uni.profile.address)?;
        doc.description.original.token_id = token_id;
        doc.description.original.token_uri = cid.to_string();
        {
            let mut dir = self.directory.write().unwrap();
            if let Some(s) = dir.students.get_mut(&(uni.profile.university_id, student.student_id)) {
                s.issued_credentials.push(cid.clone());
            }
        }
        self.persist();
        Ok(MintedToken {
            token_id,
            token_uri: cid,
            document: doc,
        })
    }

    pub fn all_nfts(&self) -> Vec<ListedToken> {
        self.registry.get_all_nfts()
    }

    pub fn my_nfts(&self, session: &Session) -> MyNfts {
        MyNfts {
            owned: self.registry.get_my_nfts(session.address),
            shared_with_me: self.registry.get_shared_with(session.address),
        }
    }

    pub fn transferred_nfts(&self, session: &Session) -> Vec<ListedToken> {
        self.registry.get_transferred_nfts(session.address)
    }

    pub fn view_token(&self, session: &Session, token_id: u64) -> Result<TokenResponse, EngineError> {
        let _w = self.writer.lock().unwrap();
        let before = self.registry.event_count();
        let result = self.registry.view_token(token_id, session.address);
        if self.registry.event_count() != before {
            self.persist();
        }
        let viewed = result?;
        let presentation = Presentation::of(&viewed.document);
        Ok(TokenResponse {
            token: viewed.token,
            access: viewed.access,
            presentation,
            document: (viewed.access == Access::Owner).then_some(viewed.document),
        })
    }

    /// Derives a view of an owned original with the selected subjects and mints it.
    pub fn mint_view(
        &self,
        session: &Session,
        token_id: u64,
        selected_subjects: Vec<SubjectEntry>,
    ) -> Result<MintedToken, EngineError> {
        require(session, Role::Student)?;
        let _w = self.writer.lock().unwrap();
        let token = self
            .registry
            .token(token_id)
            .ok_or(crate::registry::RegistryError::UnknownToken(token_id))?;
        if token.owner != session.address {
            return Err(crate::registry::RegistryError::NotOwner(token_id).into());
        }
        let original = self.registry.load_document(&token)?;
        let request = ViewDerivationRequest {
            original_token_id: token_id,
            selected_subjects,
            student: session.address,
        };
        let view_doc = view::derive_view(&request, &original)?;
        let minted = view::mint_view(view_doc, session.address, &self.registry, &self.store)?;
        self.persist();
        Ok(MintedToken {
            token_id: minted.token_id,
            token_uri: minted.cid,
            document: minted.document,
        })
    }

    pub fn share(
        &self,
        session: &Session,
        token_id: u64,
        receiver: Address,
        transfer_back_time: Millis,
    ) -> Result<TokenListSuccessEvent, EngineError> {
        require(session, Role::Student)?;
        let _w = self.writer.lock().unwrap();
        let event = self
            .registry
            .execute_transfer(token_id, receiver, transfer_back_time, session.address);
        self.persist();
        Ok(event?)
    }

    pub fn revoke(&self, session: &Session, token_id: u64) -> Result<TokenListSuccessEvent, EngineError> {
        require(session, Role::Student)?;
        let _w = self.writer.lock().unwrap();
        let event = self.registry.transfer_ownership(token_id, session.address)?;
        self.persist();
        Ok(event)
    }

    /// Verifies a presented view document against the issuing university's key
    /// and the current registry. Unknown issuers yield an invalid signature.
    pub fn verify(&self, document: &CertificateMetadata) -> Result<VerificationReport, EngineError> {
        let key = self
            .university_by_address(&document.creator())
            .and_then(|u| hex::decode(u.public_key).ok())
            .unwrap_or_default();
        let snapshot = self.registry.snapshot();
        Ok(view::verify_view(document, &key, &snapshot, &self.store)?)
    }

    pub fn verify_json(&self, bytes: &[u8]) -> Result<VerificationReport, EngineError> {
        let doc = CertificateMetadata::from_json(bytes)
            .map_err(|e| view::ViewError::MalformedDocument(e.to_string()))?;
        self.verify(&doc)
    }

    pub fn object(&self, cid: &Cid) -> Result<Vec<u8>, EngineError> {
        Ok(self.store.get(cid)?)
    }

    // --- chain ---

    /// One production step: sweep due schedules, then seal the pool into a block.
    pub fn tick(&self) -> Result<TickReport, EngineError> {
        let _w = self.writer.lock().unwrap();
        let reclaimed = self.registry.process_schedules()?;
        let block = self.chain.produce_block();
        if !reclaimed.is_empty() || !block.tx_hashes.is_empty() {
            self.persist();
        }
        Ok(TickReport { block, reclaimed })
    }

    pub fn blocks(&self) -> Vec<Block> {
        self.chain.blocks()
    }

    pub fn metrics(&self) -> Metrics {
        let latencies = self.chain.inclusion_latencies();
        let stats = self.chain.latency_stats();
        let mut histogram: Vec<LatencyBucket> = LATENCY_BUCKETS_MS
            .iter()
            .map(|le| LatencyBucket {
                le_ms: Some(*le),
                count: 0,
            })
            .collect();
        histogram.push(LatencyBucket { le_ms: None, count: 0 });
        for l in latencies {
            let i = LATENCY_BUCKETS_MS
                .iter()
                .position(|le| l <= *le)
                .unwrap_or(LATENCY_BUCKETS_MS.len());
            histogram[i].count += 1;
        }
        Metrics {
            block_count: self.chain.block_count(),
            token_count: self.registry.count(),
            event_count: self.registry.event_count(),
            transaction_count: self.chain.transaction_count(),
            pending_transactions: self.chain.pending(),
            mean_inclusion_latency_ms: stats.mean_ms,
            max_inclusion_latency_ms: stats.max_ms,
            latency_histogram: histogram,
        }
    }
}

/// Drives [`Engine::tick`] from a background thread at a fixed interval.
pub struct BlockProducer {
    stop: Arc<std::sync::atomic::AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl BlockProducer {
    pub fn spawn(engine: Arc<Engine>, interval: std::time::Duration) -> BlockProducer {
        use std::sync::atomic::Ordering;
        use std::time::Instant;
        let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::Builder::new()
            .name("block-producer".into())
            .spawn(move || {
                let mut next = Instant::now() + interval;
                while !flag.load(Ordering::SeqCst) {
                    let now = Instant::now();
                    if now < next {
                        std::thread::sleep((next - now).min(std::time::Duration::from_millis(20)));
                        continue;
                    }
                    if let Err(e) = engine.tick() {
                        log::error!("block production failed: {e}");
                    }
                    next += interval;
                    if next < Instant::now() {
                        next = Instant::now() + interval;
                    }
                }
            })
            .expect("spawn block producer");
        BlockProducer {
            stop,
            handle: Some(handle),
        }
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, std::sync::atomic::Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for BlockProducer {
    fn drop(&mut self) {
        self.shutdown();
    }
}
