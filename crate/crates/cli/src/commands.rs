//! Argument definitions and dispatch for every subcommand except `serve`.
//!
//! Each command returns the text to print on standard output; errors carry
//! the exit code the binary should use.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use clap::{Parser, Subcommand};
use netting_core::opinion::LegalOpinion;
use netting_core::store::{EntityKind, Store, TriggerEvent, TriggerKind};
use netting_core::{
    compute_exposures, determine, total_cost, CostParams, DeterminationInput, HumanAssessment, InstitutionRiskPolicy, RelationshipFacts,
    Sentence, Trade, VocabularyRegistry, Workbench,
};
use rust_decimal::Decimal;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

pub const DEFAULT_VALIDITY_DAYS: u32 = 365;

#[derive(Debug, Parser)]
#[command(name = "netting", version, about = "Close-out netting workbench")]
pub struct Cli {
    /// Store directory used by stateful commands.
    #[arg(long, global = true, env = "NETTING_STORE", default_value = "netting-store")]
    pub store: PathBuf,
    /// Actor name recorded in the audit trail.
    #[arg(long, global = true, default_value = "cli")]
    pub actor: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse one conclusion sentence into its structured form.
    Parse {
        sentence: String,
        /// Vocabulary registry document; the built-in vocabulary by default.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Render a structured sentence document to canonical text.
    Render {
        file: PathBuf,
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Run a determination from documents on disk. Nothing is persisted.
    Determine {
        /// Opinion document; repeat for several opinions.
        #[arg(long = "opinion", required = true)]
        opinions: Vec<PathBuf>,
        #[arg(long)]
        facts: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        assessment: Option<PathBuf>,
        #[arg(long = "as-of")]
        as_of: NaiveDate,
        /// Replaces the policy's threshold, in basis points.
        #[arg(long = "threshold-bp")]
        threshold_bp: Option<u32>,
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Gross and net exposures for a single-counterparty portfolio.
    Exposures {
        #[arg(long)]
        portfolio: PathBuf,
    },
    /// Annual sector cost of reviewing netting opinions.
    Costmodel {
        #[arg(long)]
        params: PathBuf,
        /// Cost of one analyst day; adds a monetised total.
        #[arg(long = "day-rate")]
        day_rate: Option<Decimal>,
        /// Emit the report document instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Flip stored Yes determinations that rely on expired opinions.
    Sweep {
        #[arg(long = "as-of")]
        as_of: NaiveDate,
        /// Validity period for policies that do not set one.
        #[arg(long = "validity-days", default_value_t = DEFAULT_VALIDITY_DAYS)]
        validity_days: u32,
    },
    /// Record a trigger event and mark dependent determinations stale.
    Event {
        #[arg(long)]
        kind: String,
        /// Opinion, relationship or jurisdiction id.
        #[arg(long)]
        subject: String,
        #[arg(long, default_value = "")]
        payload: String,
        #[arg(long = "occurred-at")]
        occurred_at: Option<DateTime<Utc>>,
    },
    /// Stale determinations and expiry violations in the store.
    Report {
        #[arg(long = "as-of")]
        as_of: NaiveDate,
        #[arg(long = "validity-days", default_value_t = DEFAULT_VALIDITY_DAYS)]
        validity_days: u32,
    },
    /// Print the audit trail, optionally for one entity, after verifying the chain.
    Audit {
        #[arg(long, requires = "id")]
        kind: Option<String>,
        #[arg(long, requires = "kind")]
        id: Option<String>,
    },
    /// Serve the HTTP interface over the store.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Address to bind; loopback unless set explicitly.
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{reason}: {message}")]
    Domain { reason: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain { .. } => 1,
        }
    }

    fn domain(reason: &str, message: impl ToString) -> Self {
        CliError::Domain { reason: reason.to_string(), message: message.to_string() }
    }
}

macro_rules! domain_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::domain(e.reason_id(), &e)
            }
        }
    )*};
}

domain_from!(
    netting_core::WorkbenchError,
    netting_core::StoreError,
    netting_core::EngineError,
    netting_core::ParseError,
    netting_core::opinion::OpinionError,
    netting_core::cnl::RenderError,
    netting_core::cost::CostError,
    netting_core::exposure::ExposureError
);

/// Reads and decodes the document passed to `flag`.
fn read_doc<T: DeserializeOwned>(flag: &str, path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{flag}: cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::domain("InvalidDocument", format!("{flag} {}: {e}", path.display())))
}

fn registry(path: Option<&Path>) -> Result<VocabularyRegistry, CliError> {
    match path {
        Some(p) => read_doc("--registry", p),
        None => Ok(VocabularyRegistry::builtin()),
    }
}

fn pretty<T: Serialize>(doc: &T) -> String {
    serde_json::to_string_pretty(doc).expect("documents serialize")
}

fn workbench(store: &Path) -> Result<Workbench, CliError> {
    Ok(Workbench::new(Store::open(store)?))
}

pub fn parse_trigger_kind(kind: &str) -> Result<TriggerKind, CliError> {
    serde_json::from_value(serde_json::Value::String(kind.to_string())).map_err(|_| {
        CliError::Usage(format!(
            "--kind: unknown trigger kind {kind:?} (expected AgreementChanged, LawChanged, TradesChanged, ExtremeEvent, OpinionUpdated or TimeElapsed)"
        ))
    })
}

/// Runs one non-serving command and returns its standard output.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Parse { sentence, registry: reg } => {
            let s = registry(reg.as_deref())?.parse(sentence)?;
            Ok(pretty(&s))
        }
        Command::Render { file, registry: reg } => {
            let s: Sentence = read_doc("render", file)?;
            Ok(registry(reg.as_deref())?.render(&s)?)
        }
        Command::Determine { opinions, facts, policy, assessment, as_of, threshold_bp, registry: reg } => {
            let reg = registry(reg.as_deref())?;
            let opinions = opinions
                .iter()
                .map(|p| {
                    let o: LegalOpinion = read_doc("--opinion", p)?;
                    o.validate(&reg, *as_of)?;
                    Ok(o)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let facts: RelationshipFacts = read_doc("--facts", facts)?;
            facts.validate()?;
            let mut policy: InstitutionRiskPolicy = read_doc("--policy", policy)?;
            if let Some(t) = threshold_bp {
                policy = policy.with_threshold(*t);
            }
            let assessment: Option<HumanAssessment> = assessment.as_deref().map(|p| read_doc("--assessment", p)).transpose()?;
            let input = DeterminationInput {
                facts: &facts,
                opinions: &opinions,
                policy: &policy,
                assessment: assessment.as_ref(),
                as_of: *as_of,
                determined_at: Utc::now(),
            };
            Ok(pretty(&determine(&input, &reg)?))
        }
        Command::Exposures { portfolio } => {
            let trades: Vec<Trade> = read_doc("--portfolio", portfolio)?;
            Ok(pretty(&compute_exposures(&trades)?))
        }
        Command::Costmodel { params, day_rate, json } => {
            let params: CostParams = read_doc("--params", params)?;
            let report = total_cost(&params.levels, *day_rate)?;
            if *json {
                return Ok(pretty(&report));
            }
            let mut out = String::new();
            if let Some(c) = &params.caveat {
                out.push_str(&format!("# {c}\n"));
            }
            out.push_str(&report.render_table());
            Ok(out)
        }
        Command::Sweep { as_of, validity_days } => {
            let store = Store::open(&cli.store)?;
            let flipped = store.sweep_expiry(*as_of, *validity_days, &cli.actor)?;
            Ok(pretty(&json!({ "asOf": as_of, "flipped": flipped })))
        }
        Command::Event { kind, subject, payload, occurred_at } => {
            let kind = parse_trigger_kind(kind)?;
            let store = Store::open(&cli.store)?;
            let event = TriggerEvent {
                kind,
                subject: subject.clone(),
                occurred_at: occurred_at.unwrap_or_else(|| store.now()),
                payload: payload.clone(),
            };
            let affected = store.record_event(&event, &cli.actor)?;
            Ok(pretty(&json!({ "event": event, "affected": affected })))
        }
        Command::Report { as_of, validity_days } => {
            let store = Store::open(&cli.store)?;
            Ok(pretty(&json!({
                "stale": store.stale_report()?,
                "expiryViolations": store.expiry_violations(*as_of, *validity_days)?,
            })))
        }
        Command::Audit { kind, id } => {
            let store = workbench(&cli.store)?.store;
            let entries = store.verify_audit_chain()?;
            let trail = match (kind, id) {
                (Some(k), Some(id)) => {
                    let kind = EntityKind::from_dir(k).ok_or_else(|| CliError::Usage(format!("--kind: unknown entity kind {k:?}")))?;
                    store.audit_for(kind, id)?
                }
                _ => store.audit_trail()?,
            };
            Ok(pretty(&json!({ "chainVerified": true, "entries": entries, "trail": trail })))
        }
        Command::Serve { .. } => Err(CliError::Usage("serve must be run by the binary entry point".into())),
    }
}
