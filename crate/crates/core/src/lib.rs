//! Walkability evaluation harness: a metric registry, prompts at four
//! expertise levels, a cached multimodal-model gateway, a tolerant response
//! parser, and the statistics and reports used to compare the levels.

pub mod gateway;
pub mod manifest;
pub mod parser;
pub mod prompt;
pub mod records;
pub mod registry;
pub mod report;
pub mod stats;
pub mod synth;

pub use gateway::{
    BackendConfig, BackendKind, Campaign, CampaignError, CampaignImage, CampaignOutcome, Gateway,
    GatewayError, Ledger, LedgerEntry, LedgerStatus, LevelOrder, RawResponse, RequestKey,
    ResponseCache,
};
pub use manifest::{CampaignManifest, ManifestError};
pub use parser::{parse, parse_any, EvaluationRecord, ParseError, ParseOutcome, ParseWarning};
pub use prompt::{build_prompt, ExpertiseLevel, MetricRef, PromptBundle, PromptError};
pub use records::{read_records, write_records, RecordsError};
pub use registry::{Criterion, MetricRegistry, MetricSpec, Naming, RegistryError};
pub use report::{build_report, ReportBundle, ReportError, ReportOptions, StreetAssignment};
pub use stats::{SampleGroup, StatsError, TestResult};
pub use synth::{mock_script, SynthProfile};
