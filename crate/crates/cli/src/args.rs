use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Command-line client for the credential ledger. Output is always JSON.
#[derive(Parser, Debug)]
#[command(name = "credcli", version)]
pub struct Cli {
    /// Gateway base URL.
    #[arg(long, global = true, env = "CREDLEDGER_GATEWAY", default_value = "http://127.0.0.1:8080")]
    pub gateway: String,
    /// Run the gateway and engine in this process instead of calling a server.
    #[arg(long, global = true)]
    pub embedded: bool,
    /// State file used by `--embedded`.
    #[arg(long, global = true, default_value = "credledger-state.json")]
    pub state: PathBuf,
    /// Freeze the clock at this many ms since the epoch.
    #[arg(long, global = true, value_name = "MS")]
    pub clock_fixed: Option<u64>,
    /// Key file of the acting account.
    #[arg(long, global = true, env = "CREDLEDGER_KEY")]
    pub key: Option<PathBuf>,
    /// Accepted for scripts; JSON is the only output mode.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a gateway node.
    #[command(subcommand)]
    Node(NodeCommand),
    /// Create a key file. Deterministic when `--seed` is given.
    Keygen {
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Role hint stored in the file.
        #[arg(long)]
        role: Option<String>,
    },
    #[command(subcommand)]
    University(UniversityCommand),
    #[command(subcommand)]
    Student(StudentCommand),
    #[command(subcommand)]
    Credential(CredentialCommand),
    #[command(subcommand)]
    Nft(NftCommand),
    #[command(subcommand)]
    View(ViewCommand),
    /// Grant view rights on a token until a deadline.
    Share {
        token: u64,
        #[arg(long)]
        to: String,
        /// Absolute ms since the epoch, or `+<duration>` such as `+10m`.
        #[arg(long)]
        until: String,
    },
    /// Reclaim a shared token before its deadline.
    Revoke { token: u64 },
    /// Verify a view document. Exits 0 whenever verification ran.
    Verify {
        #[arg(long)]
        file: PathBuf,
    },
    #[command(subcommand)]
    Chain(ChainCommand),
    #[command(subcommand)]
    State(StateCommand),
}

#[derive(Subcommand, Debug)]
pub enum NodeCommand {
    Run(NodeRun),
}

#[derive(Args, Debug)]
pub struct NodeRun {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub block_interval_ms: Option<u64>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub cors_origin: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum UniversityCommand {
    /// Register a university. Its signing key comes from `--key` or `--seed`.
    Register {
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "")]
        metadata: String,
        #[arg(long, conflicts_with = "key")]
        seed: Option<String>,
    },
    List,
    Show { id: String },
}

#[derive(Subcommand, Debug)]
pub enum StudentCommand {
    Create {
        #[arg(long)]
        university: String,
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
        #[arg(long)]
        wallet: String,
        #[arg(long, default_value = "")]
        description: String,
    },
    List {
        #[arg(long)]
        university: String,
    },
}

#[derive(Subcommand, Debug)]
pub enum CredentialCommand {
    /// Issue a signed credential to a student of the acting university.
    Issue {
        #[arg(long)]
        student: String,
        #[arg(long)]
        degree: String,
        /// `Subject=Mark`, repeatable.
        #[arg(long = "subject", value_name = "SUBJECT=MARK")]
        subjects: Vec<String>,
        /// JSON array of {"subject","mark"} entries.
        #[arg(long, conflicts_with = "subjects")]
        subjects_file: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum NftCommand {
    /// Every token in the registry.
    List,
    /// Tokens owned by or shared with the acting account.
    Mine,
    /// Tokens the acting account has shared out.
    Transferred,
    Show { token: u64 },
}

#[derive(Subcommand, Debug)]
pub enum ViewCommand {
    /// Mint a view token exposing some subjects of an original.
    Mint {
        token: u64,
        /// `Subject` or `Subject=Mark`; a missing mark is taken from the original.
        #[arg(long, num_args = 1.., required = true)]
        subjects: Vec<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum ChainCommand {
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum StateCommand {
    /// Copy the embedded state to a file.
    Save {
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a state file and make it the embedded state.
    Load {
        #[arg(long)]
        file: PathBuf,
    },
}
