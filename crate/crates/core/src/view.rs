//! View tokens: student-derived documents that expose a chosen subset of the
//! original's subjects while every other field stays frozen, and the
//! receiver-side verification of such documents.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::credential::{CertificateMetadata, CredentialError, SubjectEntry, ViewSection};
use crate::registry::{Registry, RegistryError, RegistrySnapshot};
use crate::store::{Cid, ContentStore};
use crate::types::Address;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ViewError {
    #[error("{0} does not own the original credential")]
    NotOwner(Address),
    #[error("subject {:?} with mark {:?} is not in the original (or selected too often)", .0.subject, .0.mark)]
    SubjectNotInOriginal(SubjectEntry),
    #[error("at least one subject must be selected")]
    EmptySelection,
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("store: {0}")]
    Store(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewDerivationRequest {
    pub original_token_id: u64,
    pub selected_subjects: Vec<SubjectEntry>,
    pub student: Address,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationReport {
    pub signature_valid: bool,
    pub subset_valid: bool,
    pub provenance_valid: bool,
    pub overall: bool,
    pub notice: String,
    pub hidden_subject_count: usize,
}

pub fn view_notice(hidden: usize) -> String {
    format!("This is a viewNFT; the student chose to hide {hidden} subject(s).")
}

/// Multiset containment: every selected pair occurs in `original` at least as
/// many times as it is selected. Returns the first offending entry.
pub fn first_non_subset<'a>(
    selected: &'a [SubjectEntry],
    original: &[SubjectEntry],
) -> Option<&'a SubjectEntry> {
    let mut available: HashMap<&SubjectEntry, usize> = HashMap::new();
    for e in original {
        *available.entry(e).or_default() += 1;
    }
    selected.iter().find(|e| match available.get_mut(e) {
        Some(n) if *n > 0 => {
            *n -= 1;
            false
        }
        _ => true,
    })
}

/// Builds the view document: a copy of `original` with a ViewNFT block
/// holding the selection. Nothing else changes.
pub fn derive_view(
    request: &ViewDerivationRequest,
    original: &CertificateMetadata,
) -> Result<CertificateMetadata, ViewError> {
    if original.is_view() {
        return Err(ViewError::MalformedDocument(
            "views can only be derived from an original credential".into(),
        ));
    }
    let tid = original.original().token_id;
    if tid != 0 && tid != request.original_token_id {
        return Err(ViewError::MalformedDocument(format!(
            "document belongs to token {tid}, not {}",
            request.original_token_id
        )));
    }
    if original.owner() != request.student {
        return Err(ViewError::NotOwner(request.student));
    }
    if request.selected_subjects.is_empty() {
        return Err(ViewError::EmptySelection);
    }
    if let Some(bad) = first_non_subset(&request.selected_subjects, &original.original().subjects) {
        return Err(ViewError::SubjectNotInOriginal(bad.clone()));
    }
    let mut view = original.clone();
    view.view = Some(ViewSection {
        token_id: 0,
        token_uri: String::new(),
        view_subjects: request.selected_subjects.clone(),
    });
    Ok(view)
}

/// The bytes stored for a document: its canonical form with the token id and
/// URI of its own token blanked (a URI cannot name the bytes that contain it).
pub fn storage_bytes(doc: &CertificateMetadata) -> Result<Vec<u8>, CredentialError> {
    let mut doc = doc.clone();
    match doc.view.as_mut() {
        Some(view) => {
            view.token_id = 0;
            view.token_uri.clear();
        }
        None => {
            doc.description.original.token_id = 0;
            doc.description.original.token_uri.clear();
        }
    }
    doc.canonicalize()
}

#[derive(Debug, Clone)]
pub struct MintedView {
    pub token_id: u64,
    pub cid: Cid,
    pub document: CertificateMetadata,
}

/// Stores the view document and mints it to `student`.
pub fn mint_view(
    mut view_doc: CertificateMetadata,
    student: Address,
    registry: &Registry,
    store: &ContentStore,
) -> Result<MintedView, ViewError> {
    if view_doc.owner() != student {
        return Err(ViewError::NotOwner(student));
    }
    if view_doc.view.is_none() {
        return Err(ViewError::MalformedDocument("missing ViewNFT block".into()));
    }
    let bytes = storage_bytes(&view_doc)?;
    let cid = store.put(&bytes).map_err(|e| ViewError::Store(e.to_string()))?;
    let token_id = registry.create_token(&cid, student, student)?;
    let view = view_doc.view.as_mut().expect("checked above");
    view.token_id = token_id;
    view.token_uri = cid.to_string();
    Ok(MintedView {
        token_id,
        cid,
        document: view_doc,
    })
}

fn stored_matches(
    registry: &RegistrySnapshot,
    store: &ContentStore,
    token_id: u64,
    token_uri: &str,
    owner: Address,
    expected: &[u8],
) -> bool {
    let Some(token) = registry.tokens.get(&token_id) else {
        return false;
    };
    if token.owner != owner || token.token_uri.to_string() != token_uri {
        return false;
    }
    store
        .get(&token.token_uri)
        .is_ok_and(|stored| stored == expected)
}

/// Receiver-side check of a view document against the issuer key and a
/// registry snapshot.
pub fn verify_view(
    view_doc: &CertificateMetadata,
    issuer_public_key: &[u8],
    registry: &RegistrySnapshot,
    store: &ContentStore,
) -> Result<VerificationReport, ViewError> {
    let Some(view) = &view_doc.view else {
        return Err(ViewError::MalformedDocument("missing ViewNFT block".into()));
    };
    if view_doc.issuer_signature.is_none() {
        return Err(ViewError::MalformedDocument("missing IssuerSignature block".into()));
    }
    let original_subjects = &view_doc.original().subjects;
    let signature_valid = view_doc.verify_credential_signature(issuer_public_key);
    let subset_valid = !view.view_subjects.is_empty()
        && view
            .view_subjects
            .iter()
            .all(|e| !e.subject.is_empty() && !e.mark.is_empty())
        && first_non_subset(&view.view_subjects, original_subjects).is_none();

    let owner = view_doc.owner();
    let view_matches = storage_bytes(view_doc).is_ok_and(|bytes| {
        stored_matches(registry, store, view.token_id, &view.token_uri, owner, &bytes)
    });
    let mut original_doc = view_doc.clone();
    original_doc.view = None;
    let original_matches = storage_bytes(&original_doc).is_ok_and(|bytes| {
        let o = view_doc.original();
        stored_matches(registry, store, o.token_id, &o.token_uri, owner, &bytes)
    });
    let provenance_valid = view_matches && original_matches;

    let hidden = original_subjects.len().saturating_sub(view.view_subjects.len());
    Ok(VerificationReport {
        signature_valid,
        subset_valid,
        provenance_valid,
        overall: signature_valid && subset_valid && provenance_valid,
        notice: view_notice(hidden),
        hidden_subject_count: hidden,
    })
}

/// What a viewer is shown: the document's identity fields and the exposed
/// subjects only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Presentation {
    pub token_id: u64,
    #[serde(rename = "tokenURI")]
    pub token_uri: String,
    pub is_view_nft: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
    pub creator: Address,
    pub owner: Address,
    #[serde(rename = "studentID")]
    pub student_id: String,
    pub student_name: String,
    pub university_name: String,
    #[serde(rename = "universityID")]
    pub university_id: String,
    pub degree: String,
    pub certificate_hash: String,
    pub subjects: Vec<SubjectEntry>,
    pub hidden_subject_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub original_token_id: Option<u64>,
}

impl Presentation {
    pub fn of(doc: &CertificateMetadata) -> Presentation {
        let o = doc.original();
        let (token_id, token_uri, subjects, notice, original_token_id) = match &doc.view {
            Some(v) => {
                let hidden = o.subjects.len().saturating_sub(v.view_subjects.len());
                (
                    v.token_id,
                    v.token_uri.clone(),
                    v.view_subjects.clone(),
                    Some(view_notice(hidden)),
                    Some(o.token_id),
                )
            }
            None => (o.token_id, o.token_uri.clone(), o.subjects.clone(), None, None),
        };
        Presentation {
            token_id,
            token_uri,
            is_view_nft: doc.is_view(),
            hidden_subject_count: o.subjects.len().saturating_sub(subjects.len()),
            notice,
            creator: doc.creator(),
            owner: doc.owner(),
            student_id: doc.description.student_id.clone(),
            student_name: doc.description.student_name.clone(),
            university_name: o.university_name.clone(),
            university_id: o.university_id.clone(),
            degree: o.degree.clone(),
            certificate_hash: o.certificate_hash.clone(),
            subjects,
            original_token_id,
        }
    }
}
