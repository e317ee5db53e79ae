use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{sha256_hex, Gateway, GatewayError, Ledger, LedgerEntry, LedgerStatus, Origin, RequestKey};
use crate::parser::{parse_any, EvaluationRecord};
use crate::prompt::{build_prompt, ExpertiseLevel, PromptBundle, PromptError};
use crate::registry::{Criterion, MetricRegistry};

/// Re-asks allowed after an unparseable response.
pub const DEFAULT_REASKS: u32 = 2;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("levels must be strictly ascending: {0}")]
    OrderingViolation(String),
    #[error("campaign has no images")]
    EmptyCampaign,
    #[error("campaign has no levels")]
    NoLevels,
    #[error("replicates must be >= 1")]
    InvalidReplicates,
    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),
    #[error("image {0:?} is empty")]
    EmptyImage(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone)]
pub struct CampaignImage {
    pub id: String,
    pub street: String,
    pub bytes: Vec<u8>,
}

/// How strictly the level sequence is enforced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelOrder {
    /// Each image walks the levels in order; images run independently.
    #[default]
    PerImage,
    /// Every image finishes level L before any image starts level L+1.
    Global,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub levels: Vec<ExpertiseLevel>,
    pub criteria: Vec<Criterion>,
    /// One request per criterion instead of one per level.
    pub split_criteria: bool,
    pub replicates: u32,
    pub workers: usize,
    pub order: LevelOrder,
    pub reasks: u32,
}

#[derive(Debug, Clone, Default)]
pub struct CampaignOutcome {
    /// Complete records in (image, level, replicate) order.
    pub records: Vec<EvaluationRecord>,
    /// Ledger entries written by this run, in sequence order.
    pub entries: Vec<LedgerEntry>,
}

impl CampaignOutcome {
    pub fn count(&self, status: LedgerStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }
}

impl Campaign {
    pub fn new(levels: Vec<ExpertiseLevel>, criteria: Vec<Criterion>) -> Self {
        Campaign {
            levels,
            criteria,
            split_criteria: false,
            replicates: 1,
            workers: 1,
            order: LevelOrder::PerImage,
            reasks: DEFAULT_REASKS,
        }
    }

    pub fn validate(&self, images: &[CampaignImage]) -> Result<(), CampaignError> {
        if self.levels.is_empty() {
            return Err(CampaignError::NoLevels);
        }
        if let Some(w) = self.levels.windows(2).find(|w| w[0] >= w[1]) {
            return Err(CampaignError::OrderingViolation(format!(
                "level {} is followed by level {}",
                w[0], w[1]
            )));
        }
        if self.replicates == 0 {
            return Err(CampaignError::InvalidReplicates);
        }
        if images.is_empty() {
            return Err(CampaignError::EmptyCampaign);
        }
        let mut seen = std::collections::BTreeSet::new();
        for img in images {
            if !seen.insert(img.id.as_str()) {
                return Err(CampaignError::DuplicateImage(img.id.clone()));
            }
            if img.bytes.is_empty() {
                return Err(CampaignError::EmptyImage(img.id.clone()));
            }
        }
        Ok(())
    }

    /// Prompt bundles for each configured level, in level order.
    pub fn bundles(&self, registry: &MetricRegistry) -> Result<Vec<Vec<PromptBundle>>, CampaignError> {
        self.levels
            .iter()
            .map(|&level| {
                if self.split_criteria {
                    self.criteria
                        .iter()
                        .map(|c| build_prompt(registry, level, std::slice::from_ref(c)))
                        .collect::<Result<Vec<_>, _>>()
                } else {
                    Ok(vec![build_prompt(registry, level, &self.criteria)?])
                }
            })
            .collect::<Result<_, PromptError>>()
            .map_err(CampaignError::from)
    }

    pub fn run(
        &self,
        registry: &MetricRegistry,
        images: &[CampaignImage],
        gateway: &Gateway,
        ledger: &Ledger,
    ) -> Result<CampaignOutcome, CampaignError> {
        self.validate(images)?;
        let bundles = self.bundles(registry)?;
        let blocked: Vec<AtomicBool> = images.iter().map(|_| AtomicBool::new(false)).collect();
        let records = Mutex::new(Vec::new());
        let entries = Mutex::new(Vec::new());

        let job = |image: usize, level: usize| -> Result<(), CampaignError> {
            let mut out = Vec::new();
            let mut written = Vec::new();
            let ok = self.run_cell(
                &images[image],
                &bundles[level],
                blocked[image].load(Ordering::SeqCst),
                gateway,
                ledger,
                &mut out,
                &mut written,
            )?;
            if !ok {
                blocked[image].store(true, Ordering::SeqCst);
            }
            records.lock().unwrap().extend(out.into_iter().map(|r| (image, r)));
            entries.lock().unwrap().extend(written);
            Ok(())
        };

        match self.order {
            LevelOrder::PerImage => parallel(images.len(), self.workers, |i| {
                (0..self.levels.len()).try_for_each(|l| job(i, l))
            })?,
            LevelOrder::Global => {
                for l in 0..self.levels.len() {
                    parallel(images.len(), self.workers, |i| job(i, l))?;
                }
            }
        }

        let mut records = records.into_inner().unwrap();
        records.sort_by(|(ia, a), (ib, b)| {
            (ia, a.level, a.replicate).cmp(&(ib, b.level, b.replicate))
        });
        let mut entries = entries.into_inner().unwrap();
        entries.sort_by_key(|e: &LedgerEntry| e.seq);
        Ok(CampaignOutcome {
            records: records.into_iter().map(|(_, r)| r).collect(),
            entries,
        })
    }

    /// Runs every replicate and bundle of one (image, level) cell. Returns
    /// false if any request failed.
    #[allow(clippy::too_many_arguments)]
    fn run_cell(
        &self,
        image: &CampaignImage,
        bundles: &[PromptBundle],
        blocked: bool,
        gateway: &Gateway,
        ledger: &Ledger,
        records: &mut Vec<EvaluationRecord>,
        written: &mut Vec<LedgerEntry>,
    ) -> Result<bool, CampaignError> {
        let mut all_ok = !blocked;
        for replicate in 1..=self.replicates {
            let mut merged: Option<EvaluationRecord> = None;
            let mut complete = true;
            for bundle in bundles {
                let key = RequestKey::new(&image.bytes, bundle, replicate);
                let failed = |error: String, attempt_count: u32, reasks: u32| LedgerEntry {
                    seq: 0,
                    image_id: image.id.clone(),
                    key_digest: key.digest(),
                    key: key.clone(),
                    status: LedgerStatus::Failed,
                    received_at: None,
                    attempt_count,
                    response_sha256: None,
                    reasks,
                    error: Some(error),
                };
                if blocked {
                    written.push(ledger.append(failed("blocked: an earlier level failed".into(), 0, 0))?);
                    complete = false;
                    continue;
                }
                let result = gateway.submit_checked(&image.bytes, bundle, replicate, self.reasks, |raw| {
                    parse_any(raw, bundle, &image.id).is_ok()
                });
                let (raw, origin, rejected) = match result {
                    Ok(r) => r,
                    Err(e @ GatewayError::Io { .. }) => return Err(e.into()),
                    Err(e) => {
                        log::warn!("{} level {}: {e}", image.id, bundle.level);
                        written.push(ledger.append(failed(e.to_string(), 0, 0))?);
                        complete = false;
                        continue;
                    }
                };
                let reasks = rejected.len() as u32;
                match parse_any(&raw, bundle, &image.id) {
                    Ok(outcome) => {
                        for w in &outcome.warnings {
                            log::warn!("{} level {}: {w:?}", image.id, bundle.level);
                        }
                        written.push(ledger.append(LedgerEntry {
                            seq: 0,
                            image_id: image.id.clone(),
                            key_digest: key.digest(),
                            key: key.clone(),
                            status: match origin {
                                Origin::Cached => LedgerStatus::Cached,
                                Origin::Fetched => LedgerStatus::Fetched,
                            },
                            received_at: Some(raw.received_at),
                            attempt_count: raw.attempt_count,
                            response_sha256: Some(sha256_hex(raw.text.as_bytes())),
                            reasks,
                            error: None,
                        })?);
                        merged = Some(match merged {
                            None => outcome.record,
                            Some(mut m) => {
                                merge(&mut m, outcome.record);
                                m
                            }
                        });
                    }
                    Err(e) => {
                        log::warn!("{} level {}: unparseable after {reasks} asks: {e}", image.id, bundle.level);
                        written.push(ledger.append(failed(
                            format!("unparseable: {e}"),
                            raw.attempt_count,
                            reasks,
                        ))?);
                        complete = false;
                    }
                }
            }
            if complete {
                records.extend(merged);
            } else {
                all_ok = false;
            }
        }
        Ok(all_ok)
    }
}

fn merge(into: &mut EvaluationRecord, other: EvaluationRecord) {
    into.criterion_scores.extend(other.criterion_scores);
    into.metric_scores.extend(other.metric_scores);
    into.rationales.extend(other.rationales);
}

/// Runs `job(i)` for `i in 0..n` on up to `workers` threads.
fn parallel<E: Send>(
    n: usize,
    workers: usize,
    job: impl Fn(usize) -> Result<(), E> + Sync,
) -> Result<(), E> {
    let next = AtomicUsize::new(0);
    let errors = Mutex::new(BTreeMap::new());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n || !errors.lock().unwrap().is_empty() {
                    break;
                }
                if let Err(e) = job(i) {
                    errors.lock().unwrap().insert(i, e);
                }
            });
        }
    });
    match errors.into_inner().unwrap().into_iter().next() {
        Some((_, e)) => Err(e),
        None => Ok(()),
    }
}
