//! Scripted and randomized end-to-end checks, shared by the integration
//! tests (small scale) and the acceptance harness (full scale). Each returns a
//! one-line summary on success and a description of the first failure otherwise.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use credledger::engine::{CreateStudent, IssueCredential, RegisterUniversity};
use credledger::registry::{Access, EventKind};
use credledger::view::{derive_view, ViewDerivationRequest};
use credledger::{
    Account, BlockProducer, Clock, Engine, EngineConfig, EngineError, ManualClock,
    SubjectEntry, SystemClock,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mutate::{self, Region};
use super::reference::{random_ops, run_sequence, RegistryRig, ACTORS, STUDENTS};
use super::{unsigned_original, Fixture, Harness};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn code(e: EngineError) -> String {
    e.code().to_string()
}

pub fn lifecycle() -> Outcome {
    let started = Instant::now();
    let h = Harness::new();
    let original = h.issue_fixture();
    ensure!(original.document.original().subjects.len() == 4, "expected 4 subjects");

    let student = h.login(&h.student);
    let view = h
        .engine
        .mint_view(&student, original.token_id, h.fixture.selection())
        .map_err(code)?;
    let view_subjects = &view.document.view.as_ref().unwrap().view_subjects;
    ensure!(view_subjects.len() == 2, "view has {} subjects", view_subjects.len());

    let deadline = h.clock.now() + 60_000;
    h.engine
        .share(&student, view.token_id, h.employer.address(), deadline)
        .map_err(code)?;

    let employer = h.login(&h.employer);
    let seen = h.engine.view_token(&employer, view.token_id).map_err(code)?;
    ensure!(seen.access == Access::Viewer, "employer access {:?}", seen.access);
    ensure!(seen.document.is_none(), "viewer received the full document");
    ensure!(seen.presentation.subjects == h.fixture.selection(), "viewer saw {:?}", seen.presentation.subjects);
    ensure!(seen.presentation.hidden_subject_count == 2, "hidden count {}", seen.presentation.hidden_subject_count);
    if let Ok(r) = h.engine.view_token(&employer, original.token_id) {
        return Err(format!("employer could open the original: {:?}", r.access));
    }

    let report = h.engine.verify(&view.document).map_err(code)?;
    ensure!(report.overall, "verifyView: {report:?}");

    h.engine.revoke(&student, view.token_id).map_err(code)?;
    match h.engine.view_token(&employer, view.token_id) {
        Err(e) if e.code() == "ACCESS_DENIED" => {}
        other => return Err(format!("after revoke employer got {:?}", other.map(|r| r.access))),
    }
    h.engine.tick().map_err(code)?;
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{} events, {} blocks, {elapsed:.2?}", h.engine.registry().event_count(), h.engine.blocks().len()))
}

#[derive(Debug, Default)]
pub struct TamperReport {
    pub total: usize,
    pub by_region: BTreeMap<Region, usize>,
    pub parse_rejections: usize,
    pub false_accepts: Vec<String>,
    pub token_ref_anomalies: Vec<String>,
    pub baseline_rejections: usize,
    pub elapsed: Duration,
}

/// Applies `n` random single-field mutations to the fixture view document and
/// verifies each one.
pub fn tamper(n: usize, seed: u64) -> TamperReport {
    let started = Instant::now();
    let h = Harness::new();
    let (_, view) = h.issue_and_view();
    let doc = serde_json::to_value(&view.document).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = TamperReport::default();

    let baseline = serde_json::to_vec(&doc).unwrap();
    for _ in 0..3 {
        if !h.engine.verify_json(&baseline).is_ok_and(|r| r.overall) {
            report.baseline_rejections += 1;
        }
    }
    for _ in 0..n {
        let m = mutate::mutate(&doc, &mut rng);
        report.total += 1;
        *report.by_region.entry(m.region).or_default() += 1;
        let label = format!("{} {}", mutate::path_string(&m.path), m.description);
        match h.engine.verify_json(&serde_json::to_vec(&m.document).unwrap()) {
            Err(_) => report.parse_rejections += 1,
            Ok(r) => {
                if r.overall {
                    report.false_accepts.push(label.clone());
                }
                if m.region == Region::TokenRef && !(r.signature_valid && r.subset_valid && !r.provenance_valid) {
                    report.token_ref_anomalies.push(format!("{label}: {r:?}"));
                }
            }
        }
    }
    report.elapsed = started.elapsed();
    report
}

impl TamperReport {
    pub fn outcome(&self, max: Duration) -> Outcome {
        ensure!(self.baseline_rejections == 0, "untouched fixture rejected {} time(s)", self.baseline_rejections);
        ensure!(self.false_accepts.is_empty(), "accepted mutations: {:?}", self.false_accepts);
        ensure!(self.token_ref_anomalies.is_empty(), "token reference mutations: {:?}", self.token_ref_anomalies);
        ensure!(self.elapsed < max, "took {:?}", self.elapsed);
        let regions: Vec<String> = self.by_region.iter().map(|(r, n)| format!("{r:?}={n}")).collect();
        Ok(format!(
            "{} mutations rejected ({}; {} unparsable), {:.2?}",
            self.total,
            regions.join(" "),
            self.parse_rejections,
            self.elapsed
        ))
    }
}

const SUBJECT_POOL: &[&str] = &["Algebra", "Biology", "Chemistry", "Drama", "Economics", "French"];
const MARK_POOL: &[&str] = &["A", "B", "C", "D"];

fn random_entry(rng: &mut impl Rng) -> SubjectEntry {
    SubjectEntry::new(*SUBJECT_POOL.choose(rng).unwrap(), *MARK_POOL.choose(rng).unwrap())
}

fn count(list: &[SubjectEntry], e: &SubjectEntry) -> usize {
    list.iter().filter(|x| *x == e).count()
}

/// Randomized selections over randomized originals of at most 10 subjects.
pub fn subset(cases: usize, seed: u64) -> Outcome {
    let f = Fixture::load();
    let student = f.student().address();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut accepted, mut rejected) = (0, 0);
    for case in 0..cases {
        let n = rng.random_range(1..=10);
        let subjects: Vec<SubjectEntry> = (0..n).map(|_| random_entry(&mut rng)).collect();
        let original = unsigned_original(&f, subjects.clone());

        let mut picks: Vec<SubjectEntry> = subjects.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
        match rng.random_range(0..10) {
            0..=4 => {}
            5..=6 => picks.push(random_entry(&mut rng)),
            7..=8 => {
                let e = subjects.choose(&mut rng).unwrap().clone();
                let extra = count(&subjects, &e) + 1 - count(&picks, &e);
                picks.extend(std::iter::repeat_n(e, extra));
            }
            _ => picks.clear(),
        }
        picks.shuffle(&mut rng);

        let expect_ok = !picks.is_empty() && picks.iter().all(|e| count(&picks, e) <= count(&subjects, e));
        let request = ViewDerivationRequest {
            original_token_id: 1,
            selected_subjects: picks.clone(),
            student,
        };
        match derive_view(&request, &original) {
            Ok(view) => {
                ensure!(expect_ok, "case {case}: accepted {picks:?} over {subjects:?}");
                ensure!(
                    view.view.as_ref().unwrap().view_subjects == picks,
                    "case {case}: view subjects differ from the selection"
                );
                let mut stripped = view.clone();
                stripped.view = None;
                ensure!(stripped == original, "case {case}: frozen fields changed");
                accepted += 1;
            }
            Err(e) => {
                ensure!(!expect_ok, "case {case}: rejected valid {picks:?} over {subjects:?}: {e}");
                rejected += 1;
            }
        }
    }
    Ok(format!("{cases} cases: {accepted} accepted, {rejected} rejected"))
}

pub fn registry_equivalence(seeds: u64, ops: usize) -> Outcome {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        run_sequence(&random_ops(&mut rng, ops)).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(format!("{seeds} seeds x {ops} ops match the reference"))
}

/// Builds identical shared-token configurations in three registries, then
/// enforces expiry lazily, eagerly, and mixed, and compares the results.
pub fn expiry_equivalence(configs: u64) -> Outcome {
    let mut reclaimed_total = 0;
    for seed in 0..configs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens = rng.random_range(1..=10);
        let plan: Vec<(usize, Option<(usize, u64)>)> = (0..tokens)
            .map(|_| {
                let owner = rng.random_range(STUDENTS);
                let share = rng
                    .random_bool(0.8)
                    .then(|| (rng.random_range(0..ACTORS), rng.random_range(1..1000)));
                (owner, share)
            })
            .collect();
        let horizon = rng.random_range(0..1200);
        let lazy_mask: Vec<bool> = (0..tokens).map(|_| rng.random_bool(0.5)).collect();
        let callers: Vec<usize> = (0..tokens).map(|_| rng.random_range(0..ACTORS)).collect();

        let rigs: Vec<RegistryRig> = (0..3).map(|_| RegistryRig::new()).collect();
        for rig in &rigs {
            let start = rig.clock.now();
            for (owner, share) in &plan {
                let id = rig.registry.create_token(&rig.cid, rig.actors[*owner], rig.actors[0]).unwrap();
                if let Some((receiver, ttl)) = share {
                    rig.registry
                        .execute_transfer(id, rig.actors[*receiver], start + ttl, rig.actors[*owner])
                        .unwrap();
                }
            }
            rig.clock.advance(horizon);
        }
        let ids = 1..=tokens as u64;
        for (i, id) in ids.clone().enumerate() {
            let _ = rigs[0].registry.view_token(id, rigs[0].actors[callers[i]]);
            if lazy_mask[i] {
                let _ = rigs[2].registry.view_token(id, rigs[2].actors[callers[i]]);
            }
        }
        rigs[1].registry.process_schedules().map_err(|e| e.to_string())?;
        rigs[2].registry.process_schedules().map_err(|e| e.to_string())?;

        let expected_open: usize = plan
            .iter()
            .filter(|(_, s)| s.is_some_and(|(_, ttl)| ttl > horizon))
            .count();
        let reference = rigs[1].registry.snapshot();
        ensure!(
            reference.schedules.len() == expected_open,
            "seed {seed}: {} shares remain, expected {expected_open}",
            reference.schedules.len()
        );
        let reclaims = |rig: &RegistryRig| {
            let mut v: Vec<u64> = rig
                .registry
                .events()
                .iter()
                .filter(|e| e.kind == EventKind::Reclaim)
                .map(|e| e.token_id)
                .collect();
            v.sort_unstable();
            v
        };
        for (name, rig) in [("lazy", &rigs[0]), ("mixed", &rigs[2])] {
            ensure!(rig.registry.snapshot() == reference, "seed {seed}: {name} state differs from eager");
            ensure!(reclaims(rig) == reclaims(&rigs[1]), "seed {seed}: {name} reclaim events differ");
        }
        reclaimed_total += reclaims(&rigs[1]).len();
    }
    Ok(format!("{configs} configurations converge ({reclaimed_total} reclaims)"))
}

/// Engine-level operations used by the persistence comparison.
#[derive(Debug, Clone)]
pub enum EngineOp {
    Issue { student: usize },
    MintView { token: u64, who: usize, mask: u8 },
    Share { token: u64, who: usize, receiver: usize, ttl: i64 },
    Revoke { token: u64, who: usize },
    Open { token: u64, who: usize },
    Advance { ms: u64 },
    Tick,
}

pub fn random_engine_op(rng: &mut impl Rng) -> EngineOp {
    let token = rng.random_range(1..=8);
    let who = rng.random_range(0..4);
    match rng.random_range(0..14) {
        0..=2 => EngineOp::Issue { student: rng.random_range(0..2) },
        3..=4 => EngineOp::MintView { token, who, mask: rng.random() },
        5..=7 => EngineOp::Share { token, who, receiver: rng.random_range(0..4), ttl: rng.random_range(-10..400) },
        8 => EngineOp::Revoke { token, who },
        9..=10 => EngineOp::Open { token, who },
        11..=12 => EngineOp::Advance { ms: rng.random_range(0..200) },
        _ => EngineOp::Tick,
    }
}

/// Parties: 0 and 1 are students, 2 is an employer, 3 is the university.
pub struct EngineRig {
    pub clock: Arc<ManualClock>,
    pub engine: Engine,
    pub fixture: Fixture,
    pub parties: Vec<Account>,
}

const SECOND_STUDENT: &str = "STU-0002";

impl EngineRig {
    pub fn new() -> EngineRig {
        let h = Harness::new();
        let second = Account::from_seed(b"second-student");
        h.add_student(SECOND_STUDENT, &second);
        EngineRig {
            parties: vec![h.student, second, h.employer, h.university],
            clock: h.clock,
            engine: h.engine,
            fixture: h.fixture,
        }
    }

    /// Replaces the engine with one rebuilt from its own serialized snapshot.
    pub fn reload(&mut self) -> Result<(), String> {
        let bytes = self.engine.snapshot_bytes();
        let clock = Arc::new(ManualClock::new(self.clock.now()));
        let engine = Engine::from_snapshot_bytes(clock.clone(), EngineConfig::default(), &bytes).map_err(code)?;
        ensure!(engine.snapshot_bytes() == bytes, "save -> load -> save is not byte-identical");
        self.clock = clock;
        self.engine = engine;
        Ok(())
    }

    pub fn apply(&self, op: &EngineOp) -> String {
        let session = |i: usize| self.engine.login_account(&self.parties[i]).unwrap();
        let r: Result<String, EngineError> = match op {
            EngineOp::Issue { student } => {
                let student_id = if *student == 0 { self.fixture.student_id.clone() } else { SECOND_STUDENT.into() };
                self.engine
                    .issue_credential(
                        &session(3),
                        IssueCredential {
                            student_id,
                            degree: self.fixture.degree.clone(),
                            subjects: self.fixture.subjects.clone(),
                        },
                    )
                    .map(|m| format!("issued {} {}", m.token_id, m.token_uri))
            }
            EngineOp::MintView { token, who, mask } => {
                let picks: Vec<SubjectEntry> = self
                    .fixture
                    .subjects
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, e)| e.clone())
                    .collect();
                self.engine
                    .mint_view(&session(*who), *token, picks)
                    .map(|m| format!("view {} {}", m.token_id, m.token_uri))
            }
            EngineOp::Share { token, who, receiver, ttl } => self
                .engine
                .share(
                    &session(*who),
                    *token,
                    self.parties[*receiver].address(),
                    self.clock.now().saturating_add_signed(*ttl),
                )
                .map(|e| format!("{:?}", e.kind)),
            EngineOp::Revoke { token, who } => self
                .engine
                .revoke(&session(*who), *token)
                .map(|e| format!("{:?}", e.kind)),
            EngineOp::Open { token, who } => self
                .engine
                .view_token(&session(*who), *token)
                .map(|r| format!("{:?}", r.access)),
            EngineOp::Advance { ms } => {
                self.clock.advance(*ms);
                Ok(String::new())
            }
            EngineOp::Tick => self
                .engine
                .tick()
                .map(|t| format!("block {} reclaimed {}", t.block.index, t.reclaimed.len())),
        };
        r.unwrap_or_else(|e| format!("error {}", e.code()))
    }
}

impl Default for EngineRig {
    fn default() -> Self {
        Self::new()
    }
}

/// Runs the same random sequence uninterrupted and with a save/load in the
/// middle, and requires identical outcomes and final snapshots.
pub fn persistence(seeds: u64, ops: usize) -> Outcome {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq: Vec<EngineOp> = (0..ops).map(|_| random_engine_op(&mut rng)).collect();
        let cut = rng.random_range(0..=ops);

        let straight = EngineRig::new();
        let mut resumed = EngineRig::new();
        for (i, op) in seq.iter().enumerate() {
            if i == cut {
                resumed.reload().map_err(|e| format!("seed {seed}: {e}"))?;
            }
            let a = straight.apply(op);
            let b = resumed.apply(op);
            ensure!(a == b, "seed {seed} step {i} {op:?}: {a:?} vs {b:?}");
        }
        ensure!(
            straight.engine.snapshot_bytes() == resumed.engine.snapshot_bytes(),
            "seed {seed}: final snapshots differ (cut at {cut})"
        );
    }
    Ok(format!("{seeds} seeds x {ops} ops, snapshots identical"))
}

#[derive(Debug)]
pub struct LatencyResult {
    pub interval_ms: u64,
    pub samples: Vec<u64>,
    pub mean_ms: f64,
    pub max_ms: u64,
}

/// Mints on a real clock with a background block producer. Consecutive
/// submissions are 0.618 intervals apart, so their phases relative to block
/// production form a low-discrepancy sequence over the interval.
pub fn latency(interval_ms: u64, mints: usize) -> Result<LatencyResult, String> {
    let f = Fixture::load();
    let engine = Arc::new(Engine::new(Arc::new(SystemClock::new()), EngineConfig::default()));
    engine
        .register_university(RegisterUniversity {
            university_id: f.university_id.clone(),
            name: f.university_name.clone(),
            metadata: f.university_metadata.clone(),
            seed: Some(f.university_seed.clone()),
            secret_key: None,
        })
        .map_err(code)?;
    let uni = engine.login_account(&f.university()).map_err(code)?;
    engine
        .create_student(
            &uni,
            &f.university_id,
            CreateStudent {
                student_id: f.student_id.clone(),
                name: f.student_name.clone(),
                wallet_addr: f.student().address(),
                description: String::new(),
            },
        )
        .map_err(code)?;
    engine.tick().map_err(code)?;
    let before = engine.chain().inclusion_latencies().len();

    let spacing = Duration::from_secs_f64(interval_ms as f64 * 0.618_034 / 1000.0);
    let producer = BlockProducer::spawn(engine.clone(), Duration::from_millis(interval_ms));
    for _ in 0..mints {
        std::thread::sleep(spacing);
        engine
            .issue_credential(
                &uni,
                IssueCredential {
                    student_id: f.student_id.clone(),
                    degree: f.degree.clone(),
                    subjects: f.subjects.clone(),
                },
            )
            .map_err(code)?;
    }
    let deadline = Instant::now() + Duration::from_millis(interval_ms * 4);
    while engine.chain().pending() > 0 && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(5));
    }
    producer.stop();
    let samples: Vec<u64> = engine.chain().inclusion_latencies()[before..].to_vec();
    ensure!(samples.len() == mints, "{} of {mints} mints included", samples.len());
    Ok(LatencyResult {
        interval_ms,
        mean_ms: samples.iter().sum::<u64>() as f64 / samples.len() as f64,
        max_ms: samples.iter().copied().max().unwrap_or(0),
        samples,
    })
}
