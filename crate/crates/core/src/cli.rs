//! Command-line front end: `validate`, `reason`, `query`, `simulate`,
//! `evaluate` and `sweep`.
//!
//! Exit codes: 0 success, 1 domain or parse error, 2 I/O or usage error.
//! Every command that writes files also writes a `manifest.json` next to them.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsl::{parse_facts_with, parse_query, parse_rules, serialize_facts, ParseError};
use crate::eval::{grounding_fidelity, tau_grid, MatchCriterion, Report};
use crate::fact::{Fact, FactId, FactStore, SchemaRegistry, TimeRef};
use crate::governance::{
    export_trace, load_policies, Candidate, Decision, GovernanceConfig, Outcome, Retention,
};
use crate::pipeline::reason;
use crate::query::execute_query;
use crate::reasoner::compile_rules;
use crate::simgen::{generate_episode, Label, SimConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
    #[error("{} error(s)\n{}", .0.len(), .0.join("\n"))]
    Diagnostics(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Usage(_) => 2,
            CliError::Domain(_) | CliError::Diagnostics(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "classlogic",
    version,
    about = "Governed symbolic reasoning over classroom observations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a fact file.
    Validate(ValidateArgs),
    /// Run rules and governance over a fact file.
    Reason(ReasonArgs),
    /// Run an aggregation query over a fact file.
    Query(QueryArgs),
    /// Generate a synthetic episode.
    Simulate(SimulateArgs),
    /// Score predictions against a simulated ground truth.
    Evaluate(EvalArgs),
    /// Risk-coverage sweep over a threshold grid.
    Sweep(EvalArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub facts: PathBuf,
    /// Registry JSON; the bundled classroom registry when omitted.
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReasonArgs {
    #[arg(long)]
    pub facts: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub policies: PathBuf,
    #[arg(long = "tau-s")]
    pub tau_s: f64,
    #[arg(long = "tau-delta")]
    pub tau_delta: f64,
    /// l0, l1 or l2
    #[arg(long)]
    pub retention: Retention,
    #[arg(long)]
    pub out: PathBuf,
    /// Seeds the pseudonym permutation of aggregate exports.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct QueryArgs {
    #[arg(long)]
    pub facts: PathBuf,
    /// Query text, e.g. `GROUP_COUNT actor FROM EVENT(?, speak_turn, ?)`.
    #[arg(long)]
    pub query: String,
    /// Id of the fact that `anchor` refers to.
    #[arg(long)]
    pub anchor: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Directory with decisions.jsonl (or labels.jsonl), or one subdirectory per episode.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory written by `simulate`, or one subdirectory per episode.
    #[arg(long)]
    pub gold: PathBuf,
    /// Threshold grid `start:end:step`, endpoints included.
    #[arg(long, default_value = "0:1:0.05")]
    pub grid: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Early-warning window in ticks.
    #[arg(long, default_value_t = 60)]
    pub window: u64,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Validate(a) => cmd_validate(a),
        Command::Reason(a) => cmd_reason(a),
        Command::Query(a) => cmd_query(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a, "evaluate"),
        Command::Sweep(a) => cmd_evaluate(a, "sweep"),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn located(path: &Path, errors: &[ParseError]) -> Vec<String> {
    errors
        .iter()
        .map(|e| format!("{}:{e}", path.display()))
        .collect()
}

/// Inputs read by a command, remembered for the manifest.
#[derive(Default)]
struct Inputs(BTreeMap<String, String>);

impl Inputs {
    fn read(&mut self, path: &Path) -> Result<String> {
        let text = read(path)?;
        self.0.insert(path.display().to_string(), digest(&text));
        Ok(text)
    }

    fn registry(&mut self, path: Option<&Path>) -> Result<SchemaRegistry> {
        match path {
            None => Ok(SchemaRegistry::default_classroom()),
            Some(p) => {
                let text = self.read(p)?;
                SchemaRegistry::from_json(&text)
                    .map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))
            }
        }
    }

    fn facts(&mut self, path: &Path, registry: &SchemaRegistry) -> Result<Vec<Fact>> {
        let text = self.read(path)?;
        let (facts, errors) = parse_facts_with(&text, registry);
        if !errors.is_empty() {
            return Err(CliError::Diagnostics(located(path, &errors)));
        }
        Ok(facts)
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
    inputs: &'a BTreeMap<String, String>,
    seed: Option<u64>,
    outputs: Vec<String>,
    created_at: u64,
}

fn write_manifest<C: Serialize>(
    out: &Path,
    command: &str,
    config: &C,
    inputs: &Inputs,
    seed: Option<u64>,
    outputs: &[&str],
) -> Result<()> {
    let created_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let m = Manifest {
        command,
        version: VERSION,
        config,
        inputs: &inputs.0,
        seed,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        created_at,
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    write(&out.join("manifest.json"), &(text + "\n"))
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("records serialize") + "\n")
        .collect()
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let registry = inputs.registry(a.registry.as_deref())?;
    let facts = inputs.facts(&a.facts, &registry)?;
    println!("{}: {} facts, no errors", a.facts.display(), facts.len());
    Ok(())
}

pub fn cmd_reason(a: &ReasonArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let registry = inputs.registry(a.registry.as_deref())?;
    let facts = inputs.facts(&a.facts, &registry)?;
    let rules_text = inputs.read(&a.rules)?;
    let policy_text = inputs.read(&a.policies)?;
    let (rules, errors) = parse_rules(&rules_text);
    if !errors.is_empty() {
        return Err(CliError::Diagnostics(located(&a.rules, &errors)));
    }
    let rules = compile_rules(&rules, &registry)
        .map_err(|e| CliError::Domain(format!("{}: {e}", a.rules.display())))?;
    let policies = load_policies(&policy_text, &registry)
        .map_err(|e| CliError::Domain(format!("{}: {e}", a.policies.display())))?;
    let cfg = GovernanceConfig::new(a.tau_s, a.tau_delta, policies, a.retention)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let store = FactStore::from_facts(facts.iter().cloned(), &registry)
        .map_err(|e| CliError::Domain(e.to_string()))?;
    let result = reason(&store, &rules, &cfg).map_err(|e| CliError::Domain(e.to_string()))?;

    create_dir(&a.out)?;
    let outputs: Vec<&str> = match a.retention {
        Retention::L0 | Retention::L1 => {
            let trace = export_trace(
                &facts,
                &result.hypotheses,
                &result.decisions,
                a.retention,
                a.seed,
            );
            write(&a.out.join("hypotheses.jsonl"), &jsonl(&result.hypotheses))?;
            write(&a.out.join("decisions.jsonl"), &jsonl(&result.decisions))?;
            write(
                &a.out.join("trace.json"),
                &(serde_json::to_string_pretty(&trace).expect("json") + "\n"),
            )?;
            vec!["hypotheses.jsonl", "decisions.jsonl", "trace.json"]
        }
        Retention::L2 => {
            let agg = export_trace(
                &facts,
                &result.hypotheses,
                &result.decisions,
                Retention::L2,
                a.seed,
            );
            write(
                &a.out.join("aggregate.json"),
                &(serde_json::to_string_pretty(&agg).expect("json") + "\n"),
            )?;
            vec!["aggregate.json"]
        }
    };
    write_manifest(&a.out, "reason", a, &inputs, Some(a.seed), &outputs)?;
    for d in &result.decisions {
        let subject = d
            .candidate
            .as_ref()
            .map(|c| {
                let b: Vec<String> = c.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
                format!("{}({}) {}", c.construct, b.join(", "), c.time)
            })
            .unwrap_or_else(|| "-".to_string());
        let support = d.support.map_or("-".to_string(), |s| format!("{s:.4}"));
        match d.outcome {
            Outcome::Answer => println!("ANSWER {subject} support={support}"),
            Outcome::Defer => println!(
                "DEFER  {subject} support={support} reasons={}",
                d.reasons.join(",")
            ),
        }
    }
    Ok(())
}

pub fn cmd_query(a: &QueryArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let registry = inputs.registry(a.registry.as_deref())?;
    let facts = inputs.facts(&a.facts, &registry)?;
    let q = parse_query(&a.query).map_err(|e| CliError::Diagnostics(vec![format!("query:{e}")]))?;
    let store =
        FactStore::from_facts(facts, &registry).map_err(|e| CliError::Domain(e.to_string()))?;
    let anchor = match &a.anchor {
        None => None,
        Some(id) => Some(
            store
                .by_id(&FactId(id.clone()))
                .cloned()
                .ok_or_else(|| CliError::Domain(format!("no fact with id `{id}`")))?,
        ),
    };
    let result = execute_query(&q, &store, &registry, anchor.as_ref())
        .map_err(|e| CliError::Domain(e.to_string()))?;
    print!("{}", result.to_table());
    if let Some(out) = &a.out {
        create_dir(out)?;
        write(
            &out.join("result.json"),
            &(serde_json::to_string_pretty(&result).expect("json") + "\n"),
        )?;
        write_manifest(out, "query", a, &inputs, None, &["result.json"])?;
    }
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let text = inputs.read(&a.config)?;
    let mut cfg = SimConfig::from_json(&text).map_err(|e| CliError::Domain(e.to_string()))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let registry = SchemaRegistry::default_classroom();
    let episode = generate_episode(&cfg, &registry).map_err(|e| CliError::Domain(e.to_string()))?;
    create_dir(&a.out)?;
    write(
        &a.out.join("gt.facts"),
        &serialize_facts(&episode.gt.facts, &registry),
    )?;
    write(
        &a.out.join("obs.facts"),
        &serialize_facts(&episode.observed_facts(&registry), &registry),
    )?;
    write(&a.out.join("labels.jsonl"), &jsonl(&episode.gt.labels))?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        args: &'a SimulateArgs,
        config: &'a SimConfig,
    }
    write_manifest(
        &a.out,
        "simulate",
        &Resolved {
            args: a,
            config: &cfg,
        },
        &inputs,
        Some(cfg.seed),
        &["gt.facts", "obs.facts", "labels.jsonl"],
    )?;
    log::info!(
        "{} ground-truth facts, {} observations, {} labels",
        episode.gt.facts.len(),
        episode.observations.len(),
        episode.gt.labels.len()
    );
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some([a, b, s]) => {
            tau_grid(*a, *b, *s).map_err(|e| CliError::Usage(format!("--grid {spec}: {e}")))
        }
        _ => Err(CliError::Usage(format!(
            "--grid {spec}: expected start:end:step"
        ))),
    }
}

fn is_episode(dir: &Path) -> bool {
    ["labels.jsonl", "decisions.jsonl"]
        .iter()
        .any(|f| dir.join(f).is_file())
}

/// Episode name to directory; a directory that is itself an episode maps from "".
fn episodes(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    if is_episode(dir) {
        return Ok([(String::new(), dir.to_path_buf())].into());
    }
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for e in entries.flatten() {
        let p = e.path();
        if p.is_dir() && is_episode(&p) {
            out.insert(e.file_name().to_string_lossy().into_owned(), p);
        }
    }
    Ok(out)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path, inputs: &mut Inputs) -> Result<Vec<T>> {
    let text = inputs.read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Domain(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn shift_time(t: TimeRef, by: u64) -> TimeRef {
    if t == TimeRef::ALWAYS {
        t
    } else {
        TimeRef::interval(t.start() + by, t.end() + by).expect("shift keeps order")
    }
}

/// Decisions standing in for gold labels, each answered with full support.
fn labels_as_decisions(labels: &[Label]) -> Vec<Decision> {
    labels
        .iter()
        .map(|l| Decision {
            outcome: Outcome::Answer,
            hypothesis: None,
            reasons: vec![],
            support: Some(1.0),
            margin: Some(1.0),
            candidate: Some(Candidate {
                construct: l.construct.clone(),
                bindings: l.bindings.clone(),
                time: l.time,
                evidence: vec![],
            }),
            vetoed: false,
        })
        .collect()
}

pub fn cmd_evaluate(a: &EvalArgs, command: &str) -> Result<()> {
    let grid = parse_grid(&a.grid)?;
    let pred = episodes(&a.pred)?;
    let gold = episodes(&a.gold)?;
    let names = |m: &BTreeMap<String, PathBuf>| m.keys().cloned().collect::<Vec<_>>();
    if names(&pred) != names(&gold) {
        let only_pred: Vec<_> = pred
            .keys()
            .filter(|k| !gold.contains_key(*k))
            .cloned()
            .collect();
        let only_gold: Vec<_> = gold
            .keys()
            .filter(|k| !pred.contains_key(*k))
            .cloned()
            .collect();
        return Err(CliError::Domain(format!(
            "episode sets differ: only in pred {only_pred:?}, only in gold {only_gold:?}"
        )));
    }
    let registry = SchemaRegistry::default_classroom();
    let mut inputs = Inputs::default();
    let (mut decisions, mut labels) = (Vec::new(), Vec::new());
    let (mut pred_facts, mut gold_facts) = (Vec::new(), Vec::new());
    let mut offset = 0u64;
    for (name, gdir) in &gold {
        let pdir = &pred[name];
        let ep_labels: Vec<Label> = read_jsonl(&gdir.join("labels.jsonl"), &mut inputs)?;
        let gt = inputs.facts(&gdir.join("gt.facts"), &registry)?;
        let ep_decisions: Vec<Decision> = if pdir.join("decisions.jsonl").is_file() {
            read_jsonl(&pdir.join("decisions.jsonl"), &mut inputs)?
        } else {
            labels_as_decisions(&read_jsonl(&pdir.join("labels.jsonl"), &mut inputs)?)
        };
        // a reasoner run is graded on the observation stream it consumed
        let observed = if pdir.join("decisions.jsonl").is_file() {
            inputs.facts(&gdir.join("obs.facts"), &registry)?
        } else {
            inputs.facts(&pdir.join("gt.facts"), &registry)?
        };
        let span_end = gt
            .iter()
            .filter(|f| f.time != TimeRef::ALWAYS)
            .map(|f| f.time.end())
            .max()
            .unwrap_or(0);
        for mut d in ep_decisions {
            if let Some(c) = d.candidate.as_mut() {
                c.time = shift_time(c.time, offset);
            }
            decisions.push(d);
        }
        for mut l in ep_labels {
            l.time = shift_time(l.time, offset);
            l.onset += offset;
            labels.push(l);
        }
        for (src, dst) in [(observed, &mut pred_facts), (gt, &mut gold_facts)] {
            dst.extend(src.into_iter().map(|mut f| {
                f.time = shift_time(f.time, offset);
                f
            }));
        }
        offset += span_end + 1;
    }
    let grounding = grounding_fidelity(&pred_facts, &gold_facts, &MatchCriterion::default());
    let report = Report::build(
        &decisions,
        &labels,
        Some(grounding),
        &grid,
        a.window,
        offset,
    )
    .map_err(|e| CliError::Domain(e.to_string()))?;
    create_dir(&a.out)?;
    let doc: Json = json!({ "episodes": gold.len(), "report": report });
    write(
        &a.out.join("report.json"),
        &(serde_json::to_string_pretty(&doc).expect("json") + "\n"),
    )?;
    write(&a.out.join("curve.csv"), &report.curve_csv())?;
    write_manifest(
        &a.out,
        command,
        a,
        &inputs,
        None,
        &["report.json", "curve.csv"],
    )?;
    if command == "sweep" {
        print!("{}", report.curve_csv());
    } else {
        print!("{}", report.summary());
    }
    Ok(())
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    run(std::env::args_os())
}
