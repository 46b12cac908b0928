use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::http::Method;
use credledger::{Account, CertificateMetadata, Clock, Engine, EngineConfig, ManualClock, SubjectEntry, SystemClock};
use credledger_gateway::{ConfigOverrides, GatewayConfig};
use serde_json::{json, Value};

use crate::args::*;
use crate::client::{Client, Embedded};
use crate::keyfile::KeyFile;
use crate::CliError;

/// Runs one command. `Ok(None)` means the command already wrote its output.
pub fn run(cli: Cli) -> Result<Option<Value>, CliError> {
    match &cli.command {
        Command::Keygen { seed, out, role } => keygen(seed.as_deref(), out.as_deref(), role.clone()).map(Some),
        Command::Node(NodeCommand::Run(args)) => node_run(args).map(|_| None),
        Command::State(StateCommand::Load { file }) => state_load(&cli, file).map(Some),
        _ => {
            let mut client = connect(&cli)?;
            let value = dispatch(&cli, &mut client)?;
            client.finish()?;
            Ok(Some(value))
        }
    }
}

fn clock(cli: &Cli) -> Arc<dyn Clock> {
    match cli.clock_fixed {
        Some(ms) => Arc::new(ManualClock::new(ms)),
        None => Arc::new(SystemClock::new()),
    }
}

fn now_ms(cli: &Cli) -> u64 {
    cli.clock_fixed.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

fn connect(cli: &Cli) -> Result<Client, CliError> {
    if cli.embedded {
        Ok(Client::embedded(Embedded::open(clock(cli), cli.state.clone())?))
    } else {
        Ok(Client::remote(&cli.gateway))
    }
}

fn account(cli: &Cli) -> Result<(KeyFile, Account), CliError> {
    let path = cli
        .key
        .as_deref()
        .ok_or_else(|| CliError::Usage("this command needs --key <file>".into()))?;
    KeyFile::load(path)
}

fn login(cli: &Cli, client: &mut Client) -> Result<(), CliError> {
    let (_, account) = account(cli)?;
    client.login(&account)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn keygen(seed: Option<&str>, out: Option<&Path>, role: Option<String>) -> Result<Value, CliError> {
    let account = match seed {
        Some(s) => Account::from_seed(s.as_bytes()),
        None => Account::generate(),
    };
    let key = KeyFile::from_account(&account, role);
    if let Some(path) = out {
        key.save(path)?;
    }
    Ok(serde_json::to_value(key).expect("key file serializes"))
}

fn node_run(args: &NodeRun) -> Result<(), CliError> {
    let flags = ConfigOverrides {
        listen: args.listen.clone(),
        block_interval_ms: args.block_interval_ms,
        data_dir: args.data_dir.clone(),
        cors_origin: args.cors_origin.clone(),
        ..ConfigOverrides::default()
    };
    let config = ConfigOverrides::from_env(|k| std::env::var(k).ok())
        .and_then(|env| GatewayConfig::resolve(args.config.as_deref(), env, flags))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    let banner = json!({
        "listen": config.listen,
        "blockIntervalMs": config.block_interval_ms,
        "stateFile": config.state_path(),
    });
    println!("{banner}");
    let _ = std::io::stdout().flush();
    runtime
        .block_on(credledger_gateway::serve(config, async {
            let _ = tokio::signal::ctrl_c().await;
        }))
        .map_err(|e| CliError::Io(e.to_string()))
}

fn state_load(cli: &Cli, file: &Path) -> Result<Value, CliError> {
    if !cli.embedded {
        return Err(CliError::Unsupported("state load requires --embedded".into()));
    }
    let engine = Engine::load(clock(cli), EngineConfig::default(), file)?;
    engine.save(&cli.state)?;
    Ok(json!({
        "loaded": file,
        "state": cli.state,
        "tokens": engine.all_nfts().len(),
        "blocks": engine.chain().block_count(),
    }))
}

fn parse_entry(raw: &str) -> Result<SubjectEntry, CliError> {
    match raw.rsplit_once('=') {
        Some((subject, mark)) if !subject.is_empty() => Ok(SubjectEntry::new(subject, mark)),
        _ => Err(CliError::Usage(format!("expected SUBJECT=MARK, got {raw:?}"))),
    }
}

fn issue_subjects(subjects: &[String], file: Option<&Path>) -> Result<Vec<SubjectEntry>, CliError> {
    match file {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        }
        None if subjects.is_empty() => Err(CliError::Usage("give --subject or --subjects-file".into())),
        None => subjects.iter().map(|s| parse_entry(s)).collect(),
    }
}

/// Resolves `Subject` or `Subject=Mark` arguments, filling missing marks
/// from the caller's copy of the original document.
fn view_subjects(client: &Client, token: u64, raw: &[String]) -> Result<Vec<SubjectEntry>, CliError> {
    let mut original: Option<Vec<SubjectEntry>> = None;
    let mut out = Vec::with_capacity(raw.len());
    for arg in raw {
        if arg.contains('=') {
            out.push(parse_entry(arg)?);
            continue;
        }
        if original.is_none() {
            let shown = client.get(&format!("/nfts/{token}"))?;
            let doc: CertificateMetadata = serde_json::from_value(shown["document"].clone())
                .map_err(|_| CliError::Usage(format!("no mark given for {arg:?} and token {token} is not readable")))?;
            original = Some(doc.original().subjects.clone());
        }
        let entry = original
            .as_ref()
            .and_then(|subjects| subjects.iter().find(|s| s.subject == *arg))
            .ok_or_else(|| CliError::Usage(format!("token {token} has no subject {arg:?}")))?;
        out.push(entry.clone());
    }
    Ok(out)
}

fn parse_until(cli: &Cli, raw: &str) -> Result<u64, CliError> {
    match raw.strip_prefix('+') {
        Some(rel) => {
            let d = humantime::parse_duration(rel).map_err(|e| CliError::Usage(format!("--until {raw:?}: {e}")))?;
            Ok(now_ms(cli) + d.as_millis() as u64)
        }
        None => raw
            .parse()
            .map_err(|_| CliError::Usage(format!("--until {raw:?} is neither ms nor +duration"))),
    }
}

fn dispatch(cli: &Cli, client: &mut Client) -> Result<Value, CliError> {
    match &cli.command {
        Command::University(UniversityCommand::Register { id, name, metadata, seed }) => {
            let mut body = json!({"universityID": id, "name": name, "metadata": metadata});
            match (seed, &cli.key) {
                (Some(seed), _) => body["seed"] = json!(seed),
                (None, Some(_)) => body["secretKey"] = json!(account(cli)?.0.private_key),
                (None, None) => return Err(CliError::Usage("give --key or --seed for the university key".into())),
            }
            client.post("/universities", body)
        }
        Command::University(UniversityCommand::List) => client.get("/universities"),
        Command::University(UniversityCommand::Show { id }) => client.get(&format!("/universities/{id}")),
        Command::Student(StudentCommand::Create {
            university,
            id,
            name,
            wallet,
            description,
        }) => {
            login(cli, client)?;
            client.post(
                &format!("/universities/{university}/students"),
                json!({"studentID": id, "name": name, "walletAddr": wallet, "description": description}),
            )
        }
        Command::Student(StudentCommand::List { university }) => {
            login(cli, client)?;
            client.get(&format!("/universities/{university}/students"))
        }
        Command::Credential(CredentialCommand::Issue {
            student,
            degree,
            subjects,
            subjects_file,
        }) => {
            let subjects = issue_subjects(subjects, subjects_file.as_deref())?;
            login(cli, client)?;
            client.post(
                "/credentials",
                json!({"studentID": student, "degree": degree, "subjects": subjects}),
            )
        }
        Command::Nft(NftCommand::List) => client.get("/nfts"),
        Command::Nft(NftCommand::Mine) => {
            login(cli, client)?;
            client.get("/me/nfts")
        }
        Command::Nft(NftCommand::Transferred) => {
            login(cli, client)?;
            client.get("/me/transferred")
        }
        Command::Nft(NftCommand::Show { token }) => {
            login(cli, client)?;
            client.get(&format!("/nfts/{token}"))
        }
        Command::View(ViewCommand::Mint { token, subjects }) => {
            login(cli, client)?;
            let subjects = view_subjects(client, *token, subjects)?;
            client.post(&format!("/nfts/{token}/views"), json!({"subjects": subjects}))
        }
        Command::Share { token, to, until } => {
            let until = parse_until(cli, until)?;
            login(cli, client)?;
            client.post(
                &format!("/nfts/{token}/share"),
                json!({"receiver": to, "transferBackTime": until}),
            )
        }
        Command::Revoke { token } => {
            login(cli, client)?;
            client.post(&format!("/nfts/{token}/revoke"), json!({}))
        }
        Command::Verify { file } => {
            let bytes = fs::read(file).map_err(|e| io_err(file, e))?;
            client.send_bytes(Method::POST, "/verify", bytes)
        }
        Command::Chain(ChainCommand::Export { out }) => {
            let blocks = client.get("/chain")?;
            match out {
                None => Ok(blocks),
                Some(path) => {
                    let mut text = serde_json::to_string_pretty(&blocks).expect("JSON value serializes");
                    text.push('\n');
                    fs::write(path, text).map_err(|e| io_err(path, e))?;
                    Ok(json!({"exported": path, "blocks": blocks.as_array().map_or(0, Vec::len)}))
                }
            }
        }
        Command::State(StateCommand::Save { out }) => match &client.transport {
            crate::client::Transport::Embedded(e) => {
                e.finish()?;
                e.engine.save(out)?;
                Ok(json!({
                    "saved": out,
                    "tokens": e.engine.all_nfts().len(),
                    "blocks": e.engine.chain().block_count(),
                }))
            }
            crate::client::Transport::Remote { .. } => {
                Err(CliError::Unsupported("state save requires --embedded".into()))
            }
        },
        Command::Keygen { .. } | Command::Node(_) | Command::State(StateCommand::Load { .. }) => {
            unreachable!("handled before connecting")
        }
    }
}
