use crate::auth::AuthError;
use crate::chain::ChainError;
use crate::credential::CredentialError;
use crate::registry::RegistryError;
use crate::store::StoreError;
use crate::view::ViewError;

/// Errors surfaced by [`crate::engine::Engine`], each with a stable
/// machine-readable code and an HTTP-style status.
#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("missing or invalid session")]
    Unauthenticated,
    #[error("not permitted: {0}")]
    Unauthorized(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("unknown university {0}")]
    UnknownUniversity(String),
    #[error("unknown student {0}")]
    UnknownStudent(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("corrupt state: {0}")]
    CorruptState(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        use EngineError::*;
        match self {
            Unauthenticated => "UNAUTHENTICATED",
            Unauthorized(_) => "UNAUTHORIZED",
            DuplicateId(_) => "DUPLICATE_ID",
            UnknownUniversity(_) => "UNKNOWN_UNIVERSITY",
            UnknownStudent(_) => "UNKNOWN_STUDENT",
            InvalidRequest(_) => "INVALID_REQUEST",
            CorruptState(_) => "CORRUPT_STATE",
            Io(_) => "IO_ERROR",
            Auth(e) => match e {
                AuthError::Malformed(_) => "MALFORMED_CHALLENGE",
                AuthError::UnknownChallenge => "UNKNOWN_CHALLENGE",
                AuthError::ChallengeExpired => "CHALLENGE_EXPIRED",
                AuthError::BadSignature => "BAD_SIGNATURE",
                AuthError::NonceReused => "NONCE_REUSED",
                AuthError::UnknownSession | AuthError::SessionExpired => "UNAUTHENTICATED",
            },
            Credential(e) => match e {
                CredentialError::InvalidMetadata(_) => "INVALID_METADATA",
                CredentialError::IssuerMismatch { .. } => "ISSUER_MISMATCH",
            },
            Registry(e) => registry_code(e),
            View(e) => match e {
                ViewError::NotOwner(_) => "NOT_OWNER",
                ViewError::SubjectNotInOriginal(_) => "SUBSET_VIOLATION",
                ViewError::EmptySelection => "EMPTY_SELECTION",
                ViewError::MalformedDocument(_) => "MALFORMED_DOCUMENT",
                ViewError::Credential(_) => "INVALID_METADATA",
                ViewError::Registry(e) => registry_code(e),
                ViewError::Store(_) => "STORE_ERROR",
            },
            Store(e) => match e {
                StoreError::EmptyContent => "EMPTY_CONTENT",
                StoreError::NotFound(_) => "NOT_FOUND",
                _ => "STORE_ERROR",
            },
            Chain(ChainError::UnknownSender(_)) => "UNKNOWN_CALLER",
            Chain(_) => "CHAIN_ERROR",
        }
    }

    pub fn status(&self) -> u16 {
        match self.code() {
            "UNAUTHENTICATED" | "BAD_SIGNATURE" | "NONCE_REUSED" | "CHALLENGE_EXPIRED" => 401,
            "UNAUTHORIZED" | "NOT_OWNER" | "ACCESS_DENIED" | "VIEW_EXPIRED" | "UNKNOWN_CALLER" => 403,
            "UNKNOWN_UNIVERSITY" | "UNKNOWN_STUDENT" | "UNKNOWN_TOKEN" | "UNKNOWN_CID" | "NOT_FOUND" => 404,
            "DUPLICATE_ID" | "ALREADY_SHARED" | "NOT_SHARED" => 409,
            "CORRUPT_STATE" | "IO_ERROR" | "STORE_ERROR" | "CHAIN_ERROR" | "DUPLICATE_TOKEN_ID"
            | "METADATA_ERROR" | "CORRUPT_REGISTRY" => 500,
            _ => 400,
        }
    }
}

fn registry_code(e: &RegistryError) -> &'static str {
    match e {
        RegistryError::UnknownCid(_) => "UNKNOWN_CID",
        RegistryError::UnknownCaller(_) => "UNKNOWN_CALLER",
        RegistryError::UnknownToken(_) => "UNKNOWN_TOKEN",
        RegistryError::DuplicateTokenId(_) => "DUPLICATE_TOKEN_ID",
        RegistryError::AccessDenied(_) => "ACCESS_DENIED",
        RegistryError::ViewExpired(_) => "VIEW_EXPIRED",
        RegistryError::NotOwner(_) => "NOT_OWNER",
        RegistryError::AlreadyShared(_) => "ALREADY_SHARED",
        RegistryError::InvalidDeadline { .. } => "INVALID_DEADLINE",
        RegistryError::NotShared(_) => "NOT_SHARED",
        RegistryError::Metadata(_) => "METADATA_ERROR",
        RegistryError::Chain(_) => "CHAIN_ERROR",
        RegistryError::Corrupt(_) => "CORRUPT_REGISTRY",
    }
}
