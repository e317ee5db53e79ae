//! `walkeval`: validate registries, print prompts, run and resume scoring
//! campaigns, and analyse archived records offline.
//!
//! Failures print one JSON object on stderr (`{"error": kind, "message": ...}`)
//! and exit with 2 (usage), 3 (validation), 4 (backend) or 5 (I/O).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use walkeval::gateway::GatewayError;
use walkeval::manifest::BackendRef;
use walkeval::report::{export, ReportError};
use walkeval::stats::{self, LeveneCenter, SampleGroup, StatsError};
use walkeval::synth::Divergence;
use walkeval::{
    build_prompt, CampaignError, CampaignManifest, Criterion, ExpertiseLevel, Gateway, Ledger,
    LedgerStatus, ManifestError, MetricRegistry, RecordsError, RegistryError, ReportOptions,
    ResponseCache, SynthProfile,
};

#[derive(Parser)]
#[command(name = "walkeval", version, about = "Walkability scoring campaigns and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a registry document (the shipped one by default).
    Validate {
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Also check a campaign manifest and its image files.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Print the prompt for one level.
    Prompts {
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        level: u8,
        /// Comma-separated criteria; all registry criteria by default.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<String>,
    },
    /// Run a campaign from a manifest.
    Run(RunArgs),
    /// Re-run a campaign, fetching only what is not cached yet.
    Resume(RunArgs),
    /// Compute report tables and figures from archived records (offline).
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
        /// Records file; `<output_dir>/records.jsonl` by default.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Center::Mean)]
        levene_center: Center,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 3.0)]
        threshold: f64,
        #[arg(long, default_value_t = 6)]
        top_n: usize,
        /// Level used for the intervention view; highest available by default.
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4))]
        level: Option<u8>,
        /// Output directory; `<output_dir>/report` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a deterministic mock script covering every request of a manifest.
    MockScript {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 30.0)]
        level1_shift: f64,
        /// Drop all per-level noise.
        #[arg(long)]
        noiseless: bool,
        /// Push one metric apart across levels 2-4, as CRITERION/METRIC.
        #[arg(long)]
        diverge: Option<String>,
        /// Script path; the manifest's mock script path by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one statistical test on groups from a JSON file and print the
    /// result as JSON.
    Stats {
        #[arg(long, value_enum)]
        test: TestKind,
        /// JSON object mapping group label to an array of numbers.
        #[arg(long)]
        groups: PathBuf,
        #[arg(long, value_enum, default_value_t = Center::Mean)]
        levene_center: Center,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Finish each level for every image before starting the next level.
    #[arg(long)]
    strict_global: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Center {
    Mean,
    Median,
}

impl From<Center> for LeveneCenter {
    fn from(c: Center) -> Self {
        match c {
            Center::Mean => LeveneCenter::Mean,
            Center::Median => LeveneCenter::Median,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TestKind {
    Levene,
    Welch,
    GamesHowell,
    KruskalWallis,
}

struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn validation(kind: &'static str, message: impl ToString) -> Self {
        CliError {
            code: 3,
            kind,
            message: message.to_string(),
        }
    }

    fn io(message: impl ToString) -> Self {
        CliError {
            code: 5,
            kind: "IoError",
            message: message.to_string(),
        }
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::Io { .. } => CliError::io(e),
            _ => CliError::validation("RegistryError", e),
        }
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Io { .. } => CliError::io(e),
            ManifestError::OrderingViolation(_) => CliError::validation("OrderingViolation", e),
            ManifestError::EmptyCampaign => CliError::validation("EmptyCampaign", e),
            _ => CliError::validation("ManifestError", e),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Io { .. } => CliError::io(e),
            GatewayError::Config(_) => CliError::validation("BackendConfig", e),
            GatewayError::BackendUnavailable { .. } => CliError { code: 4, kind: "BackendUnavailable", message: e.to_string() },
            GatewayError::BackendRejected { .. } => CliError { code: 4, kind: "BackendRejected", message: e.to_string() },
            GatewayError::MockScriptMiss(_) => CliError { code: 4, kind: "MockScriptMiss", message: e.to_string() },
            _ => CliError::validation("GatewayError", e),
        }
    }
}

impl From<CampaignError> for CliError {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Gateway(g) => g.into(),
            CampaignError::OrderingViolation(_) => CliError::validation("OrderingViolation", e),
            CampaignError::EmptyCampaign => CliError::validation("EmptyCampaign", e),
            _ => CliError::validation("CampaignError", e),
        }
    }
}

impl From<RecordsError> for CliError {
    fn from(e: RecordsError) -> Self {
        match e {
            RecordsError::Io { .. } => CliError::io(e),
            RecordsError::Malformed { .. } => CliError::validation("MalformedRecords", e),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        let kind = match &e {
            ReportError::Io { .. } => return CliError::io(e),
            ReportError::EmptyInput => "EmptyInput",
            ReportError::UnassignedImage(_) => "UnassignedImage",
            ReportError::EmptyCell { .. } => "EmptyCell",
            ReportError::InvalidArgument(_) => "InvalidArgument",
            ReportError::Stats(_) => "StatsError",
            ReportError::Registry(_) => "RegistryError",
        };
        CliError::validation(kind, e)
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::validation("StatsError", e)
    }
}

fn load_registry(explicit: Option<&Path>, manifest: Option<&CampaignManifest>) -> Result<MetricRegistry, CliError> {
    match explicit.or_else(|| manifest.and_then(|m| m.registry.as_deref())) {
        Some(path) => Ok(MetricRegistry::load(path)?),
        None => Ok(MetricRegistry::default_registry()),
    }
}

fn cmd_validate(registry: Option<PathBuf>, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let manifest = manifest.as_deref().map(CampaignManifest::load).transpose()?;
    let reg = load_registry(registry.as_deref(), manifest.as_ref())?;
    for c in reg.criteria() {
        let metrics = reg.metrics_for(c, walkeval::Naming::Quantified)?;
        println!("{c}: {} metrics", metrics.len());
    }
    if let Some(m) = &manifest {
        m.check_files()?;
        for c in &m.criteria {
            if !reg.has_criterion(c) {
                return Err(RegistryError::UnknownCriterion(c.to_string()).into());
            }
        }
        println!("manifest: {} images, levels {:?}", m.images.len(), m.levels.iter().map(|l| l.get()).collect::<Vec<_>>());
    }
    println!("ok");
    Ok(())
}

fn cmd_prompts(registry: Option<PathBuf>, level: u8, criteria: Vec<String>) -> Result<(), CliError> {
    let reg = load_registry(registry.as_deref(), None)?;
    let criteria: Vec<Criterion> = if criteria.is_empty() {
        reg.criteria().to_vec()
    } else {
        criteria
            .iter()
            .map(|c| c.parse::<Criterion>())
            .collect::<Result<_, _>>()?
    };
    let level = ExpertiseLevel::new(level).map_err(|e| CliError::validation("InvalidLevel", e))?;
    let bundle = build_prompt(&reg, level, &criteria).map_err(|e| CliError::validation("PromptError", e))?;
    println!("{}", bundle.request_text());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let manifest = CampaignManifest::load(&args.manifest)?;
    let reg = load_registry(args.registry.as_deref(), Some(&manifest))?;
    let mut campaign = manifest.campaign();
    if let Some(w) = args.workers {
        campaign.workers = w.max(1);
    }
    if args.strict_global {
        campaign.order = walkeval::LevelOrder::Global;
    }
    let images = manifest.load_images()?;
    campaign.validate(&images)?;

    // persist the exact prompts used
    for bundles in campaign.bundles(&reg)? {
        for b in bundles {
            let suffix = if campaign.split_criteria {
                format!("_{}", b.criteria[0])
            } else {
                String::new()
            };
            let path = manifest.prompts_dir().join(format!("level{}{suffix}.txt", b.level));
            std::fs::create_dir_all(manifest.prompts_dir()).map_err(CliError::io)?;
            std::fs::write(&path, b.request_text()).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        }
    }

    let gateway = Gateway::from_config(manifest.backend_config(), ResponseCache::new(manifest.cache_dir()))?;
    let ledger = Ledger::open(manifest.ledger_path())?;
    let outcome = campaign.run(&reg, &images, &gateway, &ledger)?;
    walkeval::write_records(&manifest.records_path(), &outcome.records)?;

    let failed = outcome.count(LedgerStatus::Failed);
    println!(
        "{}",
        json!({
            "entries": outcome.entries.len(),
            "fetched": outcome.count(LedgerStatus::Fetched),
            "cached": outcome.count(LedgerStatus::Cached),
            "failed": failed,
            "records": outcome.records.len(),
            "ledger": manifest.ledger_path(),
        })
    );
    if failed > 0 {
        let first = outcome
            .entries
            .iter()
            .find_map(|e| e.error.clone())
            .unwrap_or_default();
        return Err(CliError {
            code: 4,
            kind: "CampaignIncomplete",
            message: format!("{failed} requests failed; first error: {first}"),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_analyze(
    manifest: PathBuf,
    records: Option<PathBuf>,
    registry: Option<PathBuf>,
    options: ReportOptions,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let manifest = CampaignManifest::load(&manifest)?;
    let reg = load_registry(registry.as_deref(), Some(&manifest))?;
    let records = walkeval::read_records(&records.unwrap_or_else(|| manifest.records_path()))?;
    let bundle = walkeval::build_report(&records, &manifest.assignment(), &reg, &options)?;
    for w in bundle.warnings() {
        log::warn!("{w}");
    }
    let dir = out.unwrap_or_else(|| manifest.report_dir());
    for path in export(&bundle, &dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_mock_script(
    manifest_path: PathBuf,
    registry: Option<PathBuf>,
    profile: SynthProfile,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let manifest = CampaignManifest::load(&manifest_path)?;
    let reg = load_registry(registry.as_deref(), Some(&manifest))?;
    let images = manifest.load_images()?;
    let script = walkeval::mock_script(&reg, &manifest.campaign(), &images, &profile)?;
    let target = out
        .or_else(|| match &manifest.backend {
            BackendRef::Inline(cfg) => cfg.script.clone(),
            BackendRef::Path(_) => None,
        })
        .ok_or_else(|| CliError::validation("ManifestError", "no --out given and the manifest backend has no script path"))?;
    let json = serde_json::to_string_pretty(&script).expect("script serializes") + "\n";
    if let Some(dir) = target.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io)?;
    }
    std::fs::write(&target, json).map_err(|e| CliError::io(format!("{}: {e}", target.display())))?;
    println!("{} ({} entries)", target.display(), script.len());
    Ok(())
}

fn cmd_stats(test: TestKind, groups: PathBuf, center: Center, alpha: f64) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&groups).map_err(|e| CliError::io(format!("{}: {e}", groups.display())))?;
    let parsed: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| CliError::validation("MalformedGroups", e))?;
    let groups: Vec<SampleGroup> = parsed
        .into_iter()
        .map(|(label, v)| {
            serde_json::from_value::<Vec<f64>>(v)
                .map(|values| SampleGroup::new(label.clone(), values))
                .map_err(|e| CliError::validation("MalformedGroups", format!("{label}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let out = match test {
        TestKind::Levene => serde_json::to_value(stats::levene(&groups, center.into())?),
        TestKind::Welch => serde_json::to_value(stats::welch_anova(&groups)?),
        TestKind::GamesHowell => serde_json::to_value(stats::games_howell(&groups, alpha)?),
        TestKind::KruskalWallis => serde_json::to_value(stats::kruskal_wallis(&groups)?),
    }
    .expect("results serialize");
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(())
}

fn parse_divergence(spec: &str) -> Result<Divergence, CliError> {
    let (c, m) = spec
        .split_once('/')
        .ok_or_else(|| CliError::validation("InvalidArgument", "--diverge expects CRITERION/METRIC"))?;
    Ok(Divergence {
        criterion: c.parse()?,
        metric: m.to_owned(),
        offsets: [-1.5, 0.0, 1.5],
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { registry, manifest } => cmd_validate(registry, manifest),
        Command::Prompts { registry, level, criteria } => cmd_prompts(registry, level, criteria),
        Command::Run(args) | Command::Resume(args) => cmd_run(args),
        Command::Analyze {
            manifest,
            records,
            registry,
            levene_center,
            alpha,
            threshold,
            top_n,
            level,
            out,
        } => {
            let intervention_level = level
                .map(ExpertiseLevel::new)
                .transpose()
                .map_err(|e| CliError::validation("InvalidLevel", e))?;
            let options = ReportOptions {
                levene_center: levene_center.into(),
                alpha,
                threshold,
                top_n,
                intervention_level,
            };
            cmd_analyze(manifest, records, registry, options, out)
        }
        Command::MockScript {
            manifest,
            registry,
            seed,
            level1_shift,
            noiseless,
            diverge,
            out,
        } => {
            let mut profile = SynthProfile {
                seed,
                level1_shift,
                divergence: diverge.as_deref().map(parse_divergence).transpose()?,
                ..SynthProfile::default()
            };
            if noiseless {
                profile = profile.noiseless();
            }
            cmd_mock_script(manifest, registry, profile, out)
        }
        Command::Stats { test, groups, levene_center, alpha } => cmd_stats(test, groups, levene_center, alpha),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report: BTreeMap<&str, &str> = [("error", e.kind), ("message", e.message.as_str())].into();
            eprintln!("{}", serde_json::to_string(&report).expect("json"));
            ExitCode::from(e.code)
        }
    }
}
