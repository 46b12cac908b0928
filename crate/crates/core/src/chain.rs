//! Simulated single-node chain: accounts, a FIFO transaction pool and
//! hash-linked blocks produced on a timer.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, RwLock};

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::types::{hex_bytes, sha256, Address, Digest, Millis};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("unknown sender {0}")]
    UnknownSender(Address),
    #[error("address collision for {0}")]
    AddressCollision(Address),
    #[error("corrupt chain: {0}")]
    Corrupt(String),
}

/// A wallet: Ed25519 keypair plus the address derived from its public key.
#[derive(Clone)]
pub struct Account {
    signing: SigningKey,
    address: Address,
}

impl std::fmt::Debug for Account {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Account")
            .field("address", &self.address)
            .finish_non_exhaustive()
    }
}

impl Account {
    /// Deterministic account: the secret key is SHA-256 of the seed.
    pub fn from_seed(seed: &[u8]) -> Account {
        Self::from_secret(sha256(seed).0)
    }

    pub fn generate() -> Account {
        Self::from_secret(rand::random())
    }

    pub fn from_secret(secret: [u8; 32]) -> Account {
        let signing = SigningKey::from_bytes(&secret);
        let address = Address::from_public_key(signing.verifying_key().as_bytes());
        Account { signing, address }
    }

    pub fn from_secret_hex(secret: &str) -> Option<Account> {
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(secret, &mut bytes).ok()?;
        Some(Self::from_secret(bytes))
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn public_key(&self) -> [u8; 32] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn public_key_hex(&self) -> String {
        hex::encode(self.public_key())
    }

    pub fn secret_hex(&self) -> String {
        hex::encode(self.signing.to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> [u8; 64] {
        self.signing.sign(message).to_bytes()
    }
}

/// Ed25519 verification over raw bytes. Malformed keys or signatures verify as false.
pub fn verify_signature(public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
    let Ok(key_bytes) = <[u8; 32]>::try_from(public_key) else {
        return false;
    };
    let Ok(sig_bytes) = <[u8; 64]>::try_from(signature) else {
        return false;
    };
    let Ok(key) = VerifyingKey::from_bytes(&key_bytes) else {
        return false;
    };
    key.verify(message, &ed25519_dalek::Signature::from_bytes(&sig_bytes))
        .is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transaction {
    pub tx_hash: Digest,
    pub sender: Address,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
    pub submitted_at: Millis,
    pub included_in_block: Option<u64>,
}

impl Transaction {
    /// Digest of `sender || submittedAt (u64 BE) || payload`.
    pub fn compute_hash(sender: &Address, payload: &[u8], submitted_at: Millis) -> Digest {
        let mut buf = Vec::with_capacity(28 + payload.len());
        buf.extend_from_slice(&sender.0);
        buf.extend_from_slice(&submitted_at.to_be_bytes());
        buf.extend_from_slice(payload);
        sha256(&buf)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub index: u64,
    pub parent_hash: Digest,
    pub timestamp: Millis,
    pub tx_hashes: Vec<Digest>,
    pub block_hash: Digest,
}

impl Block {
    /// Digest of `index (u64 BE) || parentHash || timestamp (u64 BE) || count (u32 BE) || txHashes`.
    pub fn compute_hash(
        index: u64,
        parent_hash: &Digest,
        timestamp: Millis,
        tx_hashes: &[Digest],
    ) -> Digest {
        let mut buf = Vec::with_capacity(52 + 32 * tx_hashes.len());
        buf.extend_from_slice(&index.to_be_bytes());
        buf.extend_from_slice(&parent_hash.0);
        buf.extend_from_slice(&timestamp.to_be_bytes());
        buf.extend_from_slice(&(tx_hashes.len() as u32).to_be_bytes());
        for h in tx_hashes {
            buf.extend_from_slice(&h.0);
        }
        sha256(&buf)
    }

    fn build(index: u64, parent_hash: Digest, timestamp: Millis, tx_hashes: Vec<Digest>) -> Block {
        let block_hash = Self::compute_hash(index, &parent_hash, timestamp, &tx_hashes);
        Block {
            index,
            parent_hash,
            timestamp,
            tx_hashes,
            block_hash,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KnownAccount {
    pub address: Address,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub public_key: Option<String>,
}

/// Serializable image of the whole chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainSnapshot {
    pub accounts: Vec<KnownAccount>,
    pub blocks: Vec<Block>,
    /// Every transaction in submission order, included or pending.
    pub transactions: Vec<Transaction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencyStats {
    pub included: usize,
    pub mean_ms: f64,
    pub max_ms: Millis,
}

#[derive(Debug, Default)]
struct ChainState {
    accounts: BTreeMap<Address, Option<String>>,
    blocks: Vec<Block>,
    txs: HashMap<Digest, Transaction>,
    order: Vec<Digest>,
    pool: VecDeque<Digest>,
}

/// The chain. Submission and reads may come from any thread; blocks are
/// appended only through [`Chain::produce_block`].
pub struct Chain {
    clock: Arc<dyn Clock>,
    state: RwLock<ChainState>,
}

impl Chain {
    pub fn new(clock: Arc<dyn Clock>) -> Chain {
        let genesis = Block::build(0, Digest::ZERO, clock.now(), Vec::new());
        Chain {
            clock,
            state: RwLock::new(ChainState {
                blocks: vec![genesis],
                ..Default::default()
            }),
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Creates an account (seeded or random) and registers it as a known sender.
    pub fn create_account(&self, seed: Option<&[u8]>) -> Result<Account, ChainError> {
        let account = match seed {
            Some(seed) => Account::from_seed(seed),
            None => Account::generate(),
        };
        self.register_account(&account)?;
        Ok(account)
    }

    /// Registers a keypair. Re-registering the same key is a no-op; a different
    /// key mapping onto an existing address is fatal.
    pub fn register_account(&self, account: &Account) -> Result<(), ChainError> {
        let mut st = self.state.write().unwrap();
        let key = account.public_key_hex();
        match st.accounts.get_mut(&account.address()) {
            Some(Some(existing)) if *existing != key => {
                Err(ChainError::AddressCollision(account.address()))
            }
            Some(slot) => {
                *slot = Some(key);
                Ok(())
            }
            None => {
                st.accounts.insert(account.address(), Some(key));
                Ok(())
            }
        }
    }

    /// Registers an externally held wallet known only by address.
    pub fn register_address(&self, address: Address) {
        let mut st = self.state.write().unwrap();
        st.accounts.entry(address).or_insert(None);
    }

    pub fn is_known(&self, address: &Address) -> bool {
        self.state.read().unwrap().accounts.contains_key(address)
    }

    pub fn submit_transaction(&self, sender: Address, payload: Vec<u8>) -> Result<Digest, ChainError> {
        let mut st = self.state.write().unwrap();
        if !st.accounts.contains_key(&sender) {
            return Err(ChainError::UnknownSender(sender));
        }
        let submitted_at = self.clock.now();
        let tx_hash = Transaction::compute_hash(&sender, &payload, submitted_at);
        if st.txs.contains_key(&tx_hash) {
            return Ok(tx_hash);
        }
        st.txs.insert(
            tx_hash,
            Transaction {
                tx_hash,
                sender,
                payload,
                submitted_at,
                included_in_block: None,
            },
        );
        st.order.push(tx_hash);
        st.pool.push_back(tx_hash);
        Ok(tx_hash)
    }

    /// Drains the pool in submission order into a new block. Empty pools yield empty blocks.
    pub fn produce_block(&self) -> Block {
        let mut st = self.state.write().unwrap();
        let parent = st.blocks.last().expect("genesis always present");
        let index = parent.index + 1;
        let parent_hash = parent.block_hash;
        let timestamp = self.clock.now().max(parent.timestamp);
        let drained: Vec<Digest> = st.pool.drain(..).collect();
        for h in &drained {
            if let Some(tx) = st.txs.get_mut(h) {
                tx.included_in_block.get_or_insert(index);
            }
        }
        let block = Block::build(index, parent_hash, timestamp, drained);
        st.blocks.push(block.clone());
        block
    }

    pub fn blocks(&self) -> Vec<Block> {
        self.state.read().unwrap().blocks.clone()
    }

    pub fn height(&self) -> u64 {
        self.state.read().unwrap().blocks.len() as u64 - 1
    }

    pub fn block_count(&self) -> usize {
        self.state.read().unwrap().blocks.len()
    }

    pub fn transaction(&self, hash: &Digest) -> Option<Transaction> {
        self.state.read().unwrap().txs.get(hash).cloned()
    }

    pub fn pending(&self) -> usize {
        self.state.read().unwrap().pool.len()
    }

    pub fn transaction_count(&self) -> usize {
        self.state.read().unwrap().order.len()
    }

    /// Submit-to-inclusion latency of every included transaction, in submission order.
    pub fn inclusion_latencies(&self) -> Vec<Millis> {
        let st = self.state.read().unwrap();
        st.order
            .iter()
            .filter_map(|h| {
                let tx = &st.txs[h];
                let block = &st.blocks[tx.included_in_block? as usize];
                Some(block.timestamp.saturating_sub(tx.submitted_at))
            })
            .collect()
    }

    pub fn latency_stats(&self) -> LatencyStats {
        let lat = self.inclusion_latencies();
        let sum: u64 = lat.iter().sum();
        LatencyStats {
            included: lat.len(),
            mean_ms: if lat.is_empty() { 0.0 } else { sum as f64 / lat.len() as f64 },
            max_ms: lat.iter().copied().max().unwrap_or(0),
        }
    }

    pub fn snapshot(&self) -> ChainSnapshot {
        let st = self.state.read().unwrap();
        ChainSnapshot {
            accounts: st
                .accounts
                .iter()
                .map(|(address, public_key)| KnownAccount {
                    address: *address,
                    public_key: public_key.clone(),
                })
                .collect(),
            blocks: st.blocks.clone(),
            transactions: st.order.iter().map(|h| st.txs[h].clone()).collect(),
        }
    }

    /// Rebuilds a chain from a snapshot after checking linkage, hashes and inclusion records.
    pub fn restore(clock: Arc<dyn Clock>, snap: ChainSnapshot) -> Result<Chain, ChainError> {
        verify_blocks(&snap.blocks)?;
        let mut st = ChainState::default();
        for acct in snap.accounts {
            if let Some(pk) = &acct.public_key {
                let bytes = hex::decode(pk).map_err(|_| ChainError::Corrupt("bad public key".into()))?;
                if Address::from_public_key(&bytes) != acct.address {
                    return Err(ChainError::Corrupt(format!("key does not derive {}", acct.address)));
                }
            }
            st.accounts.insert(acct.address, acct.public_key);
        }
        let mut placed: HashMap<Digest, u64> = HashMap::new();
        for block in &snap.blocks {
            for h in &block.tx_hashes {
                if placed.insert(*h, block.index).is_some() {
                    return Err(ChainError::Corrupt(format!("tx {h} included twice")));
                }
            }
        }
        for tx in snap.transactions {
            if Transaction::compute_hash(&tx.sender, &tx.payload, tx.submitted_at) != tx.tx_hash {
                return Err(ChainError::Corrupt(format!("tx hash mismatch {}", tx.tx_hash)));
            }
            if placed.get(&tx.tx_hash).copied() != tx.included_in_block {
                return Err(ChainError::Corrupt(format!("inclusion mismatch {}", tx.tx_hash)));
            }
            if st.txs.contains_key(&tx.tx_hash) {
                return Err(ChainError::Corrupt(format!("duplicate tx {}", tx.tx_hash)));
            }
            if tx.included_in_block.is_none() {
                st.pool.push_back(tx.tx_hash);
            }
            st.order.push(tx.tx_hash);
            st.txs.insert(tx.tx_hash, tx);
        }
        if placed.len() != st.txs.len() - st.pool.len() {
            return Err(ChainError::Corrupt("block references unknown transaction".into()));
        }
        st.blocks = snap.blocks;
        Ok(Chain {
            clock,
            state: RwLock::new(st),
        })
    }
}

/// Checks the hash-chain invariants over a block list.
pub fn verify_blocks(blocks: &[Block]) -> Result<(), ChainError> {
    let Some(genesis) = blocks.first() else {
        return Err(ChainError::Corrupt("missing genesis".into()));
    };
    if genesis.parent_hash != Digest::ZERO {
        return Err(ChainError::Corrupt("genesis parent is not zero".into()));
    }
    for (i, block) in blocks.iter().enumerate() {
        if block.index != i as u64 {
            return Err(ChainError::Corrupt(format!("block {i} has index {}", block.index)));
        }
        if i > 0 && block.parent_hash != blocks[i - 1].block_hash {
            return Err(ChainError::Corrupt(format!("block {i} parent mismatch")));
        }
        let expect = Block::compute_hash(block.index, &block.parent_hash, block.timestamp, &block.tx_hashes);
        if expect != block.block_hash {
            return Err(ChainError::Corrupt(format!("block {i} hash mismatch")));
        }
    }
    Ok(())
}
