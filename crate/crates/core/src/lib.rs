//! Academic credential ledger.
//!
//! Universities issue signed certificate metadata that is stored by content
//! address and minted as a token owned by the student. Students derive view
//! tokens exposing a subset of their subjects, grant time-limited view rights
//! to employers, and reclaim them at will. Employers verify a presented view
//! against the issuer's key, the registry and the content store.

pub mod auth;
pub mod canonical;
pub mod chain;
pub mod clock;
pub mod credential;
pub mod engine;
pub mod error;
pub mod persist;
pub mod registry;
pub mod store;
pub mod types;
pub mod view;

pub use auth::{Role, Session, SignInChallenge};
pub use chain::{Account, Block, Chain};
pub use clock::{Clock, ManualClock, SystemClock};
pub use credential::{CertificateMetadata, SubjectEntry};
pub use engine::{BlockProducer, Engine, EngineConfig};
pub use error::EngineError;
pub use registry::{ListedToken, Registry, TokenListSuccessEvent};
pub use store::{Cid, ContentStore};
pub use types::{Address, Digest, Millis};
pub use view::VerificationReport;
