//! Shared fixtures: a small campaign on disk backed by a generated mock script.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use walkeval::gateway::{Backend, BackendFailure, BackendRequest, MockBackend, RetryPolicy};
use walkeval::report::export;
use walkeval::{
    build_report, mock_script, CampaignManifest, CampaignOutcome, Gateway, Ledger, MetricRegistry,
    ReportOptions, ResponseCache, SynthProfile,
};

/// Writes `n_images` fake PNGs spread over `streets` streets, a manifest and
/// a mock script into `dir`, and returns the loaded manifest.
pub fn write_fixture(
    dir: &Path,
    n_images: usize,
    streets: usize,
    levels: &[u8],
    replicates: u32,
    profile: &SynthProfile,
) -> CampaignManifest {
    std::fs::create_dir_all(dir.join("images")).unwrap();
    let mut images = Vec::new();
    for i in 0..n_images {
        let name = format!("images/svi{i:02}.png");
        let mut bytes = b"\x89PNG\r\n\x1a\n".to_vec();
        bytes.extend((0..256u32).map(|j| ((i as u32 * 131 + j * 7) % 251) as u8));
        std::fs::write(dir.join(&name), bytes).unwrap();
        images.push(serde_json::json!({
            "id": format!("svi{i:02}"),
            "path": name,
            "street": format!("Street {}", (b'A' + (i % streets) as u8) as char),
        }));
    }
    let manifest = serde_json::json!({
        "images": images,
        "levels": levels,
        "replicates": replicates,
        "backend": {"kind": "mock", "script": "script.json", "max_retries": 0, "backoff_ms": 0},
        "output_dir": "out",
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    let manifest = CampaignManifest::load(&path).unwrap();
    let reg = MetricRegistry::default_registry();
    let script = mock_script(&reg, &manifest.campaign(), &manifest.load_images().unwrap(), profile).unwrap();
    std::fs::write(dir.join("script.json"), serde_json::to_string_pretty(&script).unwrap()).unwrap();
    manifest
}

/// Mock backend that starts failing after `budget` successful calls.
pub struct Interrupting {
    pub inner: MockBackend,
    pub budget: AtomicUsize,
}

impl Backend for Interrupting {
    fn name(&self) -> String {
        "mock".into()
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendFailure> {
        let left = self.budget.load(Ordering::SeqCst);
        if left == 0 {
            return Err(BackendFailure::Transient("connection dropped".into()));
        }
        self.budget.store(left - 1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

pub fn mock_gateway(manifest: &CampaignManifest) -> Gateway {
    Gateway::from_config(manifest.backend_config(), ResponseCache::new(manifest.cache_dir())).unwrap()
}

pub fn interrupting_gateway(manifest: &CampaignManifest, budget: usize) -> Gateway {
    let inner = MockBackend::load(manifest.backend_config().script.as_ref().unwrap()).unwrap();
    Gateway::new(
        Box::new(Interrupting {
            inner,
            budget: AtomicUsize::new(budget),
        }),
        ResponseCache::new(manifest.cache_dir()),
        RetryPolicy {
            max_retries: 0,
            base_delay: std::time::Duration::ZERO,
        },
    )
}

/// What `walkeval run` followed by `walkeval analyze` does.
pub fn run_pipeline(manifest: &CampaignManifest, gateway: &Gateway, workers: usize) -> CampaignOutcome {
    let reg = MetricRegistry::default_registry();
    let mut campaign = manifest.campaign();
    campaign.workers = workers;
    let ledger = Ledger::open(manifest.ledger_path()).unwrap();
    let outcome = campaign
        .run(&reg, &manifest.load_images().unwrap(), gateway, &ledger)
        .unwrap();
    walkeval::write_records(&manifest.records_path(), &outcome.records).unwrap();
    outcome
}

pub fn analyze(manifest: &CampaignManifest) -> Vec<PathBuf> {
    let reg = MetricRegistry::default_registry();
    let records = walkeval::read_records(&manifest.records_path()).unwrap();
    let bundle = build_report(&records, &manifest.assignment(), &reg, &ReportOptions::default()).unwrap();
    export(&bundle, &manifest.report_dir()).unwrap()
}

/// Output files compared in golden checks, relative to the output dir.
pub fn artifact_bytes(manifest: &CampaignManifest, files: &[PathBuf]) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![(
        "records.jsonl".to_string(),
        std::fs::read(manifest.records_path()).unwrap(),
    )];
    for f in files {
        out.push((
            f.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(f).unwrap(),
        ));
    }
    out
}
