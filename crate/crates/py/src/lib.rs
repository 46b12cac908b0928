//! Python bindings. Structured values cross the boundary as plain
//! dicts and lists; engine failures raise `LedgerError(code, message)`.

use std::path::PathBuf;
use std::sync::Arc;

use credledger::engine::{CreateStudent, IssueCredential, RegisterUniversity};
use credledger::{Account, Address, Clock, Engine, EngineConfig, EngineError, ManualClock, SubjectEntry, SystemClock};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyString};
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(pycredledger, LedgerError, PyException, "Engine error with a stable `code`.");

fn ledger_err(e: EngineError) -> PyErr {
    LedgerError::new_err((e.code().to_string(), e.to_string()))
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Accepts a JSON string or any JSON-serializable Python value.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn address(raw: &str) -> PyResult<Address> {
    raw.parse().map_err(|_| PyValueError::new_err(format!("{raw:?} is not an address")))
}

#[pyclass(name = "Account", module = "pycredledger", frozen)]
pub struct PyAccount {
    inner: Account,
}

#[pymethods]
impl PyAccount {
    /// Deterministic from `seed`, or random when omitted.
    #[new]
    #[pyo3(signature = (seed=None))]
    fn new(seed: Option<&str>) -> Self {
        let inner = match seed {
            Some(s) => Account::from_seed(s.as_bytes()),
            None => Account::generate(),
        };
        PyAccount { inner }
    }

    #[staticmethod]
    fn from_secret_hex(secret: &str) -> PyResult<Self> {
        Account::from_secret_hex(secret)
            .map(|inner| PyAccount { inner })
            .ok_or_else(|| PyValueError::new_err("secret must be 32 bytes of hex"))
    }

    #[getter]
    fn address(&self) -> String {
        self.inner.address().to_string()
    }

    #[getter]
    fn public_key(&self) -> String {
        self.inner.public_key_hex()
    }

    fn secret_hex(&self) -> String {
        self.inner.secret_hex()
    }

    fn sign<'py>(&self, py: Python<'py>, message: &[u8]) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.sign(message))
    }

    fn __repr__(&self) -> String {
        format!("Account({})", self.inner.address())
    }
}

#[pyclass(name = "Engine", module = "pycredledger", frozen)]
pub struct PyEngine {
    engine: Arc<Engine>,
    manual: Option<Arc<ManualClock>>,
}

fn clock(clock_ms: Option<u64>) -> (Arc<dyn Clock>, Option<Arc<ManualClock>>) {
    match clock_ms {
        Some(ms) => {
            let manual = Arc::new(ManualClock::new(ms));
            (manual.clone(), Some(manual))
        }
        None => (Arc::new(SystemClock::new()), None),
    }
}

impl PyEngine {
    fn session(&self, token: &str) -> PyResult<credledger::Session> {
        self.engine.session(token).map_err(ledger_err)
    }
}

#[pymethods]
impl PyEngine {
    /// With `clock_ms` the engine runs on a manual clock starting there.
    /// With `state_path` every mutation is persisted to that file.
    #[new]
    #[pyo3(signature = (clock_ms=None, state_path=None))]
    fn new(clock_ms: Option<u64>, state_path: Option<PathBuf>) -> PyResult<Self> {
        let (clock, manual) = clock(clock_ms);
        let config = EngineConfig {
            state_path,
            ..EngineConfig::default()
        };
        let engine = Engine::open(clock, config).map_err(ledger_err)?;
        Ok(PyEngine {
            engine: Arc::new(engine),
            manual,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, clock_ms=None))]
    fn load(path: PathBuf, clock_ms: Option<u64>) -> PyResult<Self> {
        let (clock, manual) = clock(clock_ms);
        let engine = Engine::load(clock, EngineConfig::default(), path).map_err(ledger_err)?;
        Ok(PyEngine {
            engine: Arc::new(engine),
            manual,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.engine.save(path).map_err(ledger_err)
    }

    fn now(&self) -> u64 {
        self.engine.clock().now()
    }

    /// Moves a manual clock forward.
    fn advance(&self, ms: u64) -> PyResult<u64> {
        let clock = self
            .manual
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("engine runs on the system clock"))?;
        Ok(clock.advance(ms))
    }

    #[pyo3(signature = (university_id, name, metadata=String::new(), seed=None, secret_key=None))]
    fn register_university(
        &self,
        py: Python<'_>,
        university_id: String,
        name: String,
        metadata: String,
        seed: Option<String>,
        secret_key: Option<String>,
    ) -> PyResult<Py<PyAny>> {
        let profile = self
            .engine
            .register_university(RegisterUniversity {
                university_id,
                name,
                metadata,
                secret_key,
                seed,
            })
            .map_err(ledger_err)?;
        to_py(py, &profile)
    }

    /// Returns the challenge text to sign.
    fn challenge(&self, address: &str) -> PyResult<String> {
        Ok(self.engine.challenge(self::address(address)?).text)
    }

    /// Completes a signed challenge; returns the session token.
    fn login_signed(&self, message: &str, signature_hex: &str, public_key_hex: &str) -> PyResult<String> {
        self.engine
            .login(message, signature_hex, public_key_hex)
            .map(|s| s.session_id)
            .map_err(ledger_err)
    }

    /// Challenge, sign and login in one step.
    fn login(&self, account: &PyAccount) -> PyResult<String> {
        self.engine
            .login_account(&account.inner)
            .map(|s| s.session_id)
            .map_err(ledger_err)
    }

    fn me(&self, py: Python<'_>, token: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.engine.me(&self.session(token)?))
    }

    #[pyo3(signature = (token, university_id, student_id, name, wallet_addr, description=String::new()))]
    #[allow(clippy::too_many_arguments)]
    fn create_student(
        &self,
        py: Python<'_>,
        token: &str,
        university_id: &str,
        student_id: String,
        name: String,
        wallet_addr: &str,
        description: String,
    ) -> PyResult<Py<PyAny>> {
        let req = CreateStudent {
            student_id,
            name,
            wallet_addr: address(wallet_addr)?,
            description,
        };
        let profile = self
            .engine
            .create_student(&self.session(token)?, university_id, req)
            .map_err(ledger_err)?;
        to_py(py, &profile)
    }

    /// `subjects` is a list of `{"subject": ..., "mark": ...}` dicts.
    fn issue_credential(
        &self,
        py: Python<'_>,
        token: &str,
        student_id: String,
        degree: String,
        subjects: &Bound<'_, PyAny>,
    ) -> PyResult<Py<PyAny>> {
        let req = IssueCredential {
            student_id,
            degree,
            subjects: from_py::<Vec<SubjectEntry>>(subjects)?,
        };
        let minted = self
            .engine
            .issue_credential(&self.session(token)?, req)
            .map_err(ledger_err)?;
        to_py(py, &minted)
    }

    fn mint_view(&self, py: Python<'_>, token: &str, token_id: u64, subjects: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let minted = self
            .engine
            .mint_view(&self.session(token)?, token_id, from_py(subjects)?)
            .map_err(ledger_err)?;
        to_py(py, &minted)
    }

    fn share(
        &self,
        py: Python<'_>,
        token: &str,
        token_id: u64,
        receiver: &str,
        transfer_back_time: u64,
    ) -> PyResult<Py<PyAny>> {
        let event = self
            .engine
            .share(&self.session(token)?, token_id, address(receiver)?, transfer_back_time)
            .map_err(ledger_err)?;
        to_py(py, &event)
    }

    fn revoke(&self, py: Python<'_>, token: &str, token_id: u64) -> PyResult<Py<PyAny>> {
        let event = self
            .engine
            .revoke(&self.session(token)?, token_id)
            .map_err(ledger_err)?;
        to_py(py, &event)
    }

    fn view_token(&self, py: Python<'_>, token: &str, token_id: u64) -> PyResult<Py<PyAny>> {
        let shown = self
            .engine
            .view_token(&self.session(token)?, token_id)
            .map_err(ledger_err)?;
        to_py(py, &shown)
    }

    fn my_nfts(&self, py: Python<'_>, token: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.engine.my_nfts(&self.session(token)?))
    }

    fn all_nfts(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.engine.all_nfts())
    }

    /// Verifies a document given as a dict or a JSON string.
    fn verify(&self, py: Python<'_>, document: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let bytes: Vec<u8> = if document.is_instance_of::<PyString>() {
            document.extract::<String>()?.into_bytes()
        } else {
            py.import("json")?.call_method1("dumps", (document,))?.extract::<String>()?.into_bytes()
        };
        to_py(py, &self.engine.verify_json(&bytes).map_err(ledger_err)?)
    }

    /// Produces a block and runs due transfer-backs.
    fn tick(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.engine.tick().map_err(ledger_err)?)
    }

    fn blocks(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.engine.blocks())
    }

    fn metrics(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.engine.metrics())
    }

    fn events(&self) -> String {
        self.engine.registry().events_jsonl()
    }
}

#[pymodule]
pub fn pycredledger(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAccount>()?;
    m.add_class::<PyEngine>()?;
    m.add("LedgerError", m.py().get_type::<LedgerError>())?;
    Ok(())
}
