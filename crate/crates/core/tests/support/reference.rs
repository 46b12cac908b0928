//! A brute-force reference for the registry: a plain map plus linear scans,
//! and a rig that replays the same operations against the real registry.

use std::collections::BTreeMap;
use std::sync::Arc;

use credledger::registry::{EventKind, RegistryError};
use credledger::view::storage_bytes;
use credledger::{Account, Address, Chain, Cid, ContentStore, ManualClock, Registry};
use proptest::prelude::*;
use rand::Rng;

/// Actor 0 is the minting university, 1..=3 are students, the rest outsiders.
pub const ACTORS: usize = 6;
pub const STUDENTS: std::ops::RangeInclusive<usize> = 1..=3;
pub const MAX_TOKEN: u64 = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Mint { student: usize },
    MintUnknownCid { student: usize },
    MintUnknownCaller { student: usize },
    Share { token: u64, caller: usize, receiver: usize, ttl: i64 },
    Revoke { token: u64, caller: usize },
    View { token: u64, caller: usize },
    Advance { ms: u64 },
    Tick,
}

pub fn op_strategy() -> impl Strategy<Value = Op> {
    let actor = 0..ACTORS;
    let student = STUDENTS;
    let token = 0..=MAX_TOKEN;
    prop_oneof![
        3 => student.clone().prop_map(|student| Op::Mint { student }),
        1 => student.clone().prop_map(|student| Op::MintUnknownCid { student }),
        1 => student.prop_map(|student| Op::MintUnknownCaller { student }),
        4 => (token.clone(), actor.clone(), actor.clone(), -20i64..300)
            .prop_map(|(token, caller, receiver, ttl)| Op::Share { token, caller, receiver, ttl }),
        2 => (token.clone(), actor.clone()).prop_map(|(token, caller)| Op::Revoke { token, caller }),
        4 => (token, actor).prop_map(|(token, caller)| Op::View { token, caller }),
        3 => (0u64..150).prop_map(|ms| Op::Advance { ms }),
        2 => Just(Op::Tick),
    ]
}

pub fn random_op(rng: &mut impl Rng) -> Op {
    let token = rng.random_range(0..=MAX_TOKEN);
    let caller = rng.random_range(0..ACTORS);
    let student = rng.random_range(STUDENTS);
    match rng.random_range(0..20) {
        0..=2 => Op::Mint { student },
        3 => Op::MintUnknownCid { student },
        4 => Op::MintUnknownCaller { student },
        5..=8 => Op::Share {
            token,
            caller,
            receiver: rng.random_range(0..ACTORS),
            ttl: rng.random_range(-20..300),
        },
        9..=10 => Op::Revoke { token, caller },
        11..=14 => Op::View { token, caller },
        15..=17 => Op::Advance {
            ms: rng.random_range(0..150),
        },
        _ => Op::Tick,
    }
}

pub fn random_ops(rng: &mut impl Rng, n: usize) -> Vec<Op> {
    (0..n).map(|_| random_op(rng)).collect()
}

pub fn error_code(e: &RegistryError) -> &'static str {
    match e {
        RegistryError::UnknownCid(_) => "UNKNOWN_CID",
        RegistryError::UnknownCaller(_) => "UNKNOWN_CALLER",
        RegistryError::UnknownToken(_) => "UNKNOWN_TOKEN",
        RegistryError::DuplicateTokenId(_) => "DUPLICATE_ID",
        RegistryError::AccessDenied(_) => "ACCESS_DENIED",
        RegistryError::ViewExpired(_) => "VIEW_EXPIRED",
        RegistryError::NotOwner(_) => "NOT_OWNER",
        RegistryError::AlreadyShared(_) => "ALREADY_SHARED",
        RegistryError::InvalidDeadline { .. } => "INVALID_DEADLINE",
        RegistryError::NotShared(_) => "NOT_SHARED",
        RegistryError::Metadata(_) => "METADATA",
        RegistryError::Chain(_) => "CHAIN",
        RegistryError::Corrupt(_) => "CORRUPT",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefToken {
    pub owner: Address,
    pub viewer: Option<Address>,
    pub deadline: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct RefModel {
    pub now: u64,
    pub tokens: BTreeMap<u64, RefToken>,
    pub events: usize,
}

type Outcome = Result<String, &'static str>;

impl RefModel {
    fn due(&self, id: u64) -> bool {
        matches!(self.tokens.get(&id), Some(RefToken { deadline: Some(d), .. }) if *d <= self.now)
    }

    fn clear(&mut self, id: u64) {
        let t = self.tokens.get_mut(&id).unwrap();
        t.viewer = None;
        t.deadline = None;
        self.events += 1;
    }

    pub fn mint(&mut self, student: Address) -> Outcome {
        let id = self.tokens.keys().max().map_or(1, |m| m + 1);
        self.tokens.insert(
            id,
            RefToken {
                owner: student,
                viewer: None,
                deadline: None,
            },
        );
        self.events += 1;
        Ok(format!("minted {id}"))
    }

    pub fn share(&mut self, id: u64, caller: Address, receiver: Address, deadline: u64) -> Outcome {
        let Some(t) = self.tokens.get(&id) else {
            return Err("UNKNOWN_TOKEN");
        };
        if t.owner != caller {
            return Err("NOT_OWNER");
        }
        if self.due(id) {
            self.clear(id);
        }
        let t = self.tokens.get_mut(&id).unwrap();
        if t.viewer.is_some() {
            return Err("ALREADY_SHARED");
        }
        if deadline <= self.now {
            return Err("INVALID_DEADLINE");
        }
        t.viewer = Some(receiver);
        t.deadline = Some(deadline);
        self.events += 1;
        Ok(format!("shared {id}"))
    }

    pub fn revoke(&mut self, id: u64, caller: Address) -> Outcome {
        let Some(t) = self.tokens.get(&id) else {
            return Err("UNKNOWN_TOKEN");
        };
        if t.owner != caller {
            return Err("NOT_OWNER");
        }
        if t.viewer.is_none() {
            return Err("NOT_SHARED");
        }
        self.clear(id);
        Ok(format!("revoked {id}"))
    }

    pub fn view(&mut self, id: u64, caller: Address) -> Outcome {
        if !self.tokens.contains_key(&id) {
            return Err("UNKNOWN_TOKEN");
        }
        let mut expired = None;
        if self.due(id) {
            expired = self.tokens[&id].viewer;
            self.clear(id);
        }
        let t = &self.tokens[&id];
        if t.owner == caller {
            Ok("owner".into())
        } else if expired == Some(caller) {
            Err("VIEW_EXPIRED")
        } else if t.viewer == Some(caller) {
            Ok("viewer".into())
        } else {
            Err("ACCESS_DENIED")
        }
    }

    /// Repeatedly picks the minimum (deadline, id) among due tokens by linear scan.
    pub fn sweep(&mut self) -> Vec<u64> {
        let mut out = Vec::new();
        loop {
            let mut best: Option<(u64, u64)> = None;
            for (id, t) in &self.tokens {
                if let Some(d) = t.deadline {
                    if d <= self.now && best.is_none_or(|b| (d, *id) < b) {
                        best = Some((d, *id));
                    }
                }
            }
            let Some((_, id)) = best else { break };
            self.clear(id);
            out.push(id);
        }
        out
    }
}

pub struct RegistryRig {
    pub clock: Arc<ManualClock>,
    pub registry: Registry,
    pub actors: Vec<Address>,
    pub outsider: Address,
    pub cid: Cid,
    pub model: RefModel,
}

impl Default for RegistryRig {
    fn default() -> Self {
        Self::new()
    }
}

impl RegistryRig {
    pub fn new() -> RegistryRig {
        let start = 10_000;
        let clock = Arc::new(ManualClock::new(start));
        let chain = Arc::new(Chain::new(clock.clone()));
        let store = Arc::new(ContentStore::in_memory(clock.clone()));
        let f = super::Fixture::load();
        let doc = super::unsigned_original(&f, f.subjects.clone());
        let cid = store.put(&storage_bytes(&doc).unwrap()).unwrap();
        let actors: Vec<Address> = (0..ACTORS)
            .map(|i| Account::from_seed(format!("actor-{i}").as_bytes()).address())
            .collect();
        chain.register_address(actors[0]);
        RegistryRig {
            registry: Registry::new(chain, store),
            outsider: Account::from_seed(b"never-registered").address(),
            clock,
            actors,
            cid,
            model: RefModel {
                now: start,
                ..RefModel::default()
            },
        }
    }

    fn actual(&self, op: &Op) -> Outcome {
        let a = &self.actors;
        let reg = &self.registry;
        let r = match op {
            Op::Mint { student } => reg.create_token(&self.cid, a[*student], a[0]).map(|id| format!("minted {id}")),
            Op::MintUnknownCid { student } => reg
                .create_token(&Cid::of(b"absent"), a[*student], a[0])
                .map(|id| format!("minted {id}")),
            Op::MintUnknownCaller { student } => reg
                .create_token(&self.cid, a[*student], self.outsider)
                .map(|id| format!("minted {id}")),
            Op::Share { token, caller, receiver, ttl } => reg
                .execute_transfer(*token, a[*receiver], self.model.now.saturating_add_signed(*ttl), a[*caller])
                .map(|_| format!("shared {token}")),
            Op::Revoke { token, caller } => reg
                .transfer_ownership(*token, a[*caller])
                .map(|_| format!("revoked {token}")),
            Op::View { token, caller } => reg.view_token(*token, a[*caller]).map(|v| {
                match v.access {
                    credledger::registry::Access::Owner => "owner",
                    credledger::registry::Access::Viewer => "viewer",
                }
                .to_string()
            }),
            Op::Advance { ms } => {
                self.clock.advance(*ms);
                Ok(String::new())
            }
            Op::Tick => reg.process_schedules().map(|events| {
                assert!(events.iter().all(|e| e.kind == EventKind::Reclaim));
                format!("{:?}", events.iter().map(|e| e.token_id).collect::<Vec<_>>())
            }),
        };
        r.map_err(|e| error_code(&e))
    }

    fn expected(&mut self, op: &Op) -> Outcome {
        let a = self.actors.clone();
        let m = &mut self.model;
        match op {
            Op::Mint { student } => m.mint(a[*student]),
            Op::MintUnknownCid { .. } => Err("UNKNOWN_CID"),
            Op::MintUnknownCaller { .. } => Err("UNKNOWN_CALLER"),
            Op::Share { token, caller, receiver, ttl } => {
                let deadline = m.now.saturating_add_signed(*ttl);
                m.share(*token, a[*caller], a[*receiver], deadline)
            }
            Op::Revoke { token, caller } => m.revoke(*token, a[*caller]),
            Op::View { token, caller } => m.view(*token, a[*caller]),
            Op::Advance { ms } => {
                m.now += ms;
                Ok(String::new())
            }
            Op::Tick => Ok(format!("{:?}", m.sweep())),
        }
    }

    /// Applies `op` to both sides and compares outcomes and full state.
    pub fn apply(&mut self, op: &Op) -> Result<(), String> {
        let actual = self.actual(op);
        let expected = self.expected(op);
        if actual != expected {
            return Err(format!("{op:?}: registry {actual:?}, reference {expected:?}"));
        }
        self.compare_state().map_err(|e| format!("after {op:?}: {e}"))
    }

    pub fn compare_state(&self) -> Result<(), String> {
        let all = self.registry.get_all_nfts();
        if self.registry.count() != all.len() {
            return Err(format!("count {} but {} listed", self.registry.count(), all.len()));
        }
        if self.registry.event_count() != self.model.events {
            return Err(format!(
                "{} events, reference {}",
                self.registry.event_count(),
                self.model.events
            ));
        }
        let got: BTreeMap<u64, RefToken> = all
            .iter()
            .map(|t| {
                (
                    t.token_id,
                    RefToken {
                        owner: t.owner,
                        viewer: t.viewer,
                        deadline: t.transfer_back_time,
                    },
                )
            })
            .collect();
        if got != self.model.tokens {
            return Err(format!("tokens {got:?}, reference {:?}", self.model.tokens));
        }
        for t in &all {
            let shared = t.viewer.is_some();
            if !t.currently_listed || t.current_viewer != shared || t.transfer_back_time.is_some() != shared {
                return Err(format!("inconsistent flags on {t:?}"));
            }
        }
        let snap = self.registry.snapshot();
        if snap.schedules.len() != all.iter().filter(|t| t.current_viewer).count() {
            return Err("schedule count differs from shared tokens".into());
        }
        let mut owned = 0;
        for actor in &self.actors {
            let mine = self.registry.get_my_nfts(*actor);
            if mine.iter().any(|t| t.owner != *actor) {
                return Err(format!("getMyNFTs({actor}) returned a foreign token"));
            }
            owned += mine.len();
            let shared = self.registry.get_shared_with(*actor);
            let expect = all.iter().filter(|t| t.current_viewer && t.viewer == Some(*actor)).count();
            if shared.len() != expect {
                return Err(format!("shared-with({actor}) has {} tokens, expected {expect}", shared.len()));
            }
        }
        if owned != all.len() {
            return Err(format!("owners partition {owned} tokens of {}", all.len()));
        }
        Ok(())
    }
}

pub fn run_sequence(ops: &[Op]) -> Result<(), String> {
    let mut rig = RegistryRig::new();
    for (i, op) in ops.iter().enumerate() {
        rig.apply(op).map_err(|e| format!("step {i}: {e}"))?;
    }
    Ok(())
}
