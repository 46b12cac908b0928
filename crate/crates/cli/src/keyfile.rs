//! On-disk key files.

use std::fs;
use std::path::Path;

use credledger::{Account, Address};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KeyFile {
    pub address: Address,
    pub public_key: String,
    pub private_key: String,
    /// Informational only; the gateway resolves roles itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

impl KeyFile {
    pub fn from_account(account: &Account, role: Option<String>) -> KeyFile {
        KeyFile {
            address: account.address(),
            public_key: account.public_key_hex(),
            private_key: account.secret_hex(),
            role,
        }
    }

    /// Rebuilds the account and checks that the stored address and public
    /// key belong to the private key.
    pub fn account(&self) -> Result<Account, CliError> {
        let account = Account::from_secret_hex(&self.private_key)
            .ok_or_else(|| CliError::Key("privateKey is not 32 bytes of hex".into()))?;
        if account.public_key_hex() != self.public_key.to_ascii_lowercase() {
            return Err(CliError::Key("publicKey does not match privateKey".into()));
        }
        if account.address() != self.address {
            return Err(CliError::Key(format!(
                "address {} does not derive from publicKey (expected {})",
                self.address,
                account.address()
            )));
        }
        Ok(account)
    }

    pub fn load(path: &Path) -> Result<(KeyFile, Account), CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let key: KeyFile =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Key(format!("{}: {e}", path.display())))?;
        let account = key.account()?;
        Ok((key, account))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("key file serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
