//! Certificate metadata documents: canonical form, certificate hash, issuer
//! signatures.
//!
//! The wire layout keeps the capitalised field names of the published
//! metadata schema (`Title`, `Description.OriginalNFT.Subjects`, ...) plus an
//! `IssuerSignature` block carrying the university's Ed25519 signature over
//! the certificate hash.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::to_canonical_vec;
use crate::chain::{verify_signature, Account};
use crate::types::{sha256, Address, Digest};

pub const CERTIFICATE_TITLE: &str = "Certificate Metadata";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CredentialError {
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),
    #[error("issuer {signer} does not match university address {university}")]
    IssuerMismatch { signer: Address, university: Address },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub mark: String,
    pub subject: String,
}

impl SubjectEntry {
    pub fn new(subject: impl Into<String>, mark: impl Into<String>) -> Self {
        SubjectEntry {
            subject: subject.into(),
            mark: mark.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginalCredential {
    #[serde(rename = "TokenId")]
    pub token_id: u64,
    #[serde(rename = "TokenURI")]
    pub token_uri: String,
    #[serde(rename = "Subjects")]
    pub subjects: Vec<SubjectEntry>,
    #[serde(rename = "UniversityName")]
    pub university_name: String,
    #[serde(rename = "UniversityID")]
    pub university_id: String,
    #[serde(rename = "UniversityAddress")]
    pub university_address: Address,
    #[serde(rename = "UniversityMetadata")]
    pub university_metadata: String,
    #[serde(rename = "Degree")]
    pub degree: String,
    #[serde(rename = "CertificateHash")]
    pub certificate_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Description {
    #[serde(rename = "Creator")]
    pub creator: Address,
    #[serde(rename = "Owner")]
    pub owner: Address,
    #[serde(rename = "StudentID")]
    pub student_id: String,
    #[serde(rename = "StudentWalletAddr")]
    pub student_wallet_addr: Address,
    #[serde(rename = "StudentName")]
    pub student_name: String,
    #[serde(rename = "StudentDescription")]
    pub student_description: String,
    #[serde(rename = "OriginalNFT")]
    pub original: OriginalCredential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSection {
    #[serde(rename = "TokenId")]
    pub token_id: u64,
    #[serde(rename = "TokenURI")]
    pub token_uri: String,
    #[serde(rename = "ViewSubjects")]
    pub view_subjects: Vec<SubjectEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssuerSignature {
    #[serde(rename = "SignerAddress")]
    pub signer_address: Address,
    #[serde(rename = "Signature")]
    pub signature: String,
    #[serde(rename = "SignedDigest")]
    pub signed_digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateMetadata {
    #[serde(rename = "Title")]
    pub title: String,
    #[serde(rename = "Description")]
    pub description: Description,
    #[serde(rename = "ViewNFT", default, skip_serializing_if = "Option::is_none")]
    pub view: Option<ViewSection>,
    #[serde(rename = "IssuerSignature", default, skip_serializing_if = "Option::is_none")]
    pub issuer_signature: Option<IssuerSignature>,
}

/// Inputs for a fresh, unsigned credential.
#[derive(Debug, Clone)]
pub struct CredentialDraft {
    pub university_name: String,
    pub university_id: String,
    pub university_address: Address,
    pub university_metadata: String,
    pub student_id: String,
    pub student_name: String,
    pub student_description: String,
    pub student_wallet: Address,
    pub degree: String,
    pub subjects: Vec<SubjectEntry>,
}

fn invalid(msg: impl Into<String>) -> CredentialError {
    CredentialError::InvalidMetadata(msg.into())
}

fn check_entries(entries: &[SubjectEntry], what: &str) -> Result<(), CredentialError> {
    if entries.is_empty() {
        return Err(invalid(format!("{what} must not be empty")));
    }
    for e in entries {
        if e.subject.is_empty() || e.mark.is_empty() {
            return Err(invalid(format!("{what} entry with empty subject or mark")));
        }
    }
    Ok(())
}

impl CertificateMetadata {
    pub fn from_draft(d: CredentialDraft) -> Result<Self, CredentialError> {
        let meta = CertificateMetadata {
            title: CERTIFICATE_TITLE.to_string(),
            description: Description {
                creator: d.university_address,
                owner: d.student_wallet,
                student_id: d.student_id,
                student_wallet_addr: d.student_wallet,
                student_name: d.student_name,
                student_description: d.student_description,
                original: OriginalCredential {
                    token_id: 0,
                    token_uri: String::new(),
                    subjects: d.subjects,
                    university_name: d.university_name,
                    university_id: d.university_id,
                    university_address: d.university_address,
                    university_metadata: d.university_metadata,
                    degree: d.degree,
                    certificate_hash: String::new(),
                },
            },
            view: None,
            issuer_signature: None,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, CredentialError> {
        serde_json::from_slice(bytes).map_err(|e| invalid(e.to_string()))
    }

    pub fn original(&self) -> &OriginalCredential {
        &self.description.original
    }

    pub fn owner(&self) -> Address {
        self.description.owner
    }

    pub fn creator(&self) -> Address {
        self.description.creator
    }

    pub fn is_view(&self) -> bool {
        self.view.is_some()
    }

    /// Checks the structural invariants every document must satisfy.
    pub fn validate(&self) -> Result<(), CredentialError> {
        if self.title != CERTIFICATE_TITLE {
            return Err(invalid(format!("unexpected title {:?}", self.title)));
        }
        let d = &self.description;
        if d.owner != d.student_wallet_addr {
            return Err(invalid("Owner differs from StudentWalletAddr"));
        }
        if d.creator != d.original.university_address {
            return Err(invalid("Creator differs from UniversityAddress"));
        }
        check_entries(&d.original.subjects, "Subjects")?;
        if let Some(view) = &self.view {
            check_entries(&view.view_subjects, "ViewSubjects")?;
        }
        Ok(())
    }

    fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("metadata serializes")
    }

    /// Canonical bytes of the whole document.
    pub fn canonicalize(&self) -> Result<Vec<u8>, CredentialError> {
        self.validate()?;
        Ok(to_canonical_vec(&self.to_value()))
    }

    /// Canonical bytes of the hashed region: everything except the original's
    /// TokenId, TokenURI and CertificateHash, the IssuerSignature block and the
    /// ViewNFT block.
    pub fn hashed_region(&self) -> Result<Vec<u8>, CredentialError> {
        self.validate()?;
        let mut value = self.to_value();
        let root = value.as_object_mut().expect("document is an object");
        root.remove("ViewNFT");
        root.remove("IssuerSignature");
        let original = root
            .get_mut("Description")
            .and_then(|d| d.get_mut("OriginalNFT"))
            .and_then(Value::as_object_mut)
            .expect("OriginalNFT is an object");
        for key in ["TokenId", "TokenURI", "CertificateHash"] {
            original.remove(key);
        }
        Ok(to_canonical_vec(&value))
    }

    pub fn compute_certificate_hash(&self) -> Result<Digest, CredentialError> {
        Ok(sha256(&self.hashed_region()?))
    }

    pub fn sign_credential(&self, issuer: &Account) -> Result<IssuerSignature, CredentialError> {
        let university = self.original().university_address;
        if issuer.address() != university {
            return Err(CredentialError::IssuerMismatch {
                signer: issuer.address(),
                university,
            });
        }
        let digest = self.compute_certificate_hash()?;
        Ok(IssuerSignature {
            signer_address: issuer.address(),
            signature: hex::encode(issuer.sign(digest.as_bytes())),
            signed_digest: digest,
        })
    }

    /// Fills in CertificateHash and attaches the issuer signature.
    pub fn seal(&mut self, issuer: &Account) -> Result<(), CredentialError> {
        let sig = self.sign_credential(issuer)?;
        self.description.original.certificate_hash = sig.signed_digest.to_hex();
        self.issuer_signature = Some(sig);
        Ok(())
    }

    /// True iff the signature verifies over the signed digest under
    /// `issuer_public_key`, the signed digest (and the embedded CertificateHash)
    /// equal the recomputed hash, and the key's address is the document's creator.
    pub fn verify_credential_signature(&self, issuer_public_key: &[u8]) -> bool {
        let Some(sig) = &self.issuer_signature else {
            return false;
        };
        let Ok(recomputed) = self.compute_certificate_hash() else {
            return false;
        };
        let Ok(signature) = hex::decode(&sig.signature) else {
            return false;
        };
        let key_address = Address::from_public_key(issuer_public_key);
        verify_signature(issuer_public_key, sig.signed_digest.as_bytes(), &signature)
            && sig.signed_digest == recomputed
            && self.description.original.certificate_hash == recomputed.to_hex()
            && sig.signer_address == key_address
            && key_address == self.creator()
    }
}
