#![allow(dead_code)]

pub mod reference;
pub mod scenarios;

use std::sync::Arc;

use credledger::auth::Session;
use credledger::engine::{CreateStudent, IssueCredential, MintedToken, RegisterUniversity};
use credledger::credential::CredentialDraft;
use credledger::{Account, CertificateMetadata, Engine, EngineConfig, ManualClock, SubjectEntry};
use serde::Deserialize;

/// Values produced by `tests/oracles/fixture_oracle.py` (hashlib + an
/// independent canonicalizer + the `cryptography` package's Ed25519).
pub mod oracle {
    pub const S1_ADDRESS: &str = "0x7d3f65ecb9a7afa27c188bc50b776827aa3e3619";
    pub const UNIVERSITY_ADDRESS: &str = "0x29ceba630fc173dc89c61c648d03c49e514442a8";
    pub const UNIVERSITY_PUBLIC_KEY: &str = "997f39d8feb5d6aab0fd9ed0ecca1d1286174fb44cf9a11a39acbb351a66f859";
    pub const STUDENT_ADDRESS: &str = "0xba740379a00d5fe05bc0fb65f0123aa87603ee71";
    pub const CERTIFICATE_HASH: &str = "4fb421c4cfa2b5edf2bc1da17db9e4631fa10bff737bffcd490965996a7f74a3";
    pub const SIGNATURE: &str = "694b1eebb3c0ecd13f51d4648801419782c6e77817089383c7fd5c7b990bea15da2b6930b9a84f545ca093d4178c3a6f0fdb77cf224d7fc6ac86797443fda005";
    pub const ORIGINAL_CID: &str = "cid:01d2ffe8fb8fc6779211eece04f77f21e1f263173351b31b30c9f996571181d2";
    pub const VIEW_CID: &str = "cid:783bea0128c258c0b38eca21eec47337a7f8c5f58c82999800ba04bc09ac15ba";
    /// sender = university, submittedAt = 1234, payload = "hello"
    pub const TX_HASH: &str = "3e368a987dac9c43b97874c2a33cb616f54799648b9d7a8c49074f289e27ac25";
    /// genesis at t = 1000
    pub const GENESIS_HASH: &str = "f5886dd7e20885d1661c8d1265b225d889a8f14d4b47af434d3166ffac57f25d";
    /// block 1 at t = 1050 holding TX_HASH
    pub const BLOCK1_HASH: &str = "3aa3c595942fb01d58907c16713ef01bac6297e5c5e8c6b44ec31ce13105e672";
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Fixture {
    pub university_seed: String,
    pub student_seed: String,
    pub university_name: String,
    #[serde(rename = "universityID")]
    pub university_id: String,
    pub university_metadata: String,
    #[serde(rename = "studentID")]
    pub student_id: String,
    pub student_name: String,
    pub student_description: String,
    pub degree: String,
    pub subjects: Vec<SubjectEntry>,
    pub view_selection: Vec<usize>,
}

impl Fixture {
    pub fn load() -> Fixture {
        serde_json::from_str(include_str!("../fixtures/credential_fixture.json")).unwrap()
    }

    pub fn university(&self) -> Account {
        Account::from_seed(self.university_seed.as_bytes())
    }

    pub fn student(&self) -> Account {
        Account::from_seed(self.student_seed.as_bytes())
    }

    pub fn selection(&self) -> Vec<SubjectEntry> {
        self.view_selection.iter().map(|i| self.subjects[*i].clone()).collect()
    }
}

/// The fixture credential with `subjects`, unsigned and not yet minted.
pub fn unsigned_original(f: &Fixture, subjects: Vec<SubjectEntry>) -> CertificateMetadata {
    CertificateMetadata::from_draft(CredentialDraft {
        university_name: f.university_name.clone(),
        university_id: f.university_id.clone(),
        university_address: f.university().address(),
        university_metadata: f.university_metadata.clone(),
        student_id: f.student_id.clone(),
        student_name: f.student_name.clone(),
        student_description: f.student_description.clone(),
        student_wallet: f.student().address(),
        degree: f.degree.clone(),
        subjects,
    })
    .unwrap()
}

pub const START_MS: u64 = 1_000_000;

/// An engine on a manual clock with the fixture university and student registered.
pub struct Harness {
    pub clock: Arc<ManualClock>,
    pub engine: Engine,
    pub fixture: Fixture,
    pub university: Account,
    pub student: Account,
    pub employer: Account,
}

impl Harness {
    pub fn new() -> Harness {
        Self::with_config(EngineConfig::default())
    }

    pub fn with_config(config: EngineConfig) -> Harness {
        let clock = Arc::new(ManualClock::new(START_MS));
        Self::with_engine(clock.clone(), Engine::new(clock, config))
    }

    pub fn with_engine(clock: Arc<ManualClock>, engine: Engine) -> Harness {
        let fixture = Fixture::load();
        let h = Harness {
            university: fixture.university(),
            student: fixture.student(),
            employer: Account::from_seed(b"fixture-employer"),
            clock,
            engine,
            fixture,
        };
        h.engine
            .register_university(RegisterUniversity {
                university_id: h.fixture.university_id.clone(),
                name: h.fixture.university_name.clone(),
                metadata: h.fixture.university_metadata.clone(),
                seed: Some(h.fixture.university_seed.clone()),
                secret_key: None,
            })
            .unwrap();
        let uni = h.login(&h.university);
        h.engine
            .create_student(
                &uni,
                &h.fixture.university_id,
                CreateStudent {
                    student_id: h.fixture.student_id.clone(),
                    name: h.fixture.student_name.clone(),
                    wallet_addr: h.student.address(),
                    description: h.fixture.student_description.clone(),
                },
            )
            .unwrap();
        h
    }

    /// Registers another student of the fixture university.
    pub fn add_student(&self, student_id: &str, wallet: &Account) {
        let uni = self.login(&self.university);
        self.engine
            .create_student(
                &uni,
                &self.fixture.university_id,
                CreateStudent {
                    student_id: student_id.to_string(),
                    name: format!("Student {student_id}"),
                    wallet_addr: wallet.address(),
                    description: String::new(),
                },
            )
            .unwrap();
    }

    pub fn login(&self, account: &Account) -> Session {
        self.engine.login_account(account).unwrap()
    }

    pub fn issue_fixture(&self) -> MintedToken {
        let uni = self.login(&self.university);
        self.engine
            .issue_credential(
                &uni,
                IssueCredential {
                    student_id: self.fixture.student_id.clone(),
                    degree: self.fixture.degree.clone(),
                    subjects: self.fixture.subjects.clone(),
                },
            )
            .unwrap()
    }

    /// Issues the fixture credential and mints the fixture view from it.
    pub fn issue_and_view(&self) -> (MintedToken, MintedToken) {
        let original = self.issue_fixture();
        let student = self.login(&self.student);
        let view = self
            .engine
            .mint_view(&student, original.token_id, self.fixture.selection())
            .unwrap();
        (original, view)
    }
}
