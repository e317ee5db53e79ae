//! Deterministic mock scripts for offline campaigns.
//!
//! Each metric of each image gets a latent score
//! `base + street_effect + image_effect + metric_spread * z`, shared by every
//! level so that the levels agree up to per-level noise. Levels 2-4 report
//! the rounded latent clamped to 1..=5; level 1 reports the sum of the
//! criterion's latents plus `level1_shift`, clamped to 1..=105.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::gateway::{Campaign, CampaignError, CampaignImage, MockScript, RequestKey};
use crate::parser::{render_canonical, EvaluationRecord};
use crate::prompt::{ExpertiseLevel, PromptBundle, DIRECT_RANGE, METRIC_RANGE};
use crate::registry::{Criterion, MetricRegistry, Naming};

/// One metric whose scores are pushed apart across levels 2, 3 and 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub criterion: Criterion,
    /// Quantified name of the metric.
    pub metric: String,
    /// Latent offsets at levels 2, 3 and 4.
    pub offsets: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthProfile {
    pub seed: u64,
    pub base: f64,
    pub street_spread: f64,
    pub image_spread: f64,
    pub metric_spread: f64,
    /// Per-level noise SD, indexed by level - 1 (level 1 on the 1..=105
    /// scale, others on 1..=5).
    pub noise: [f64; 4],
    pub level1_shift: f64,
    pub divergence: Option<Divergence>,
}

impl Default for SynthProfile {
    fn default() -> Self {
        SynthProfile {
            seed: 7,
            base: 2.8,
            street_spread: 0.35,
            image_spread: 0.25,
            metric_spread: 0.6,
            noise: [4.0, 0.5, 0.5, 0.5],
            level1_shift: 30.0,
            divergence: None,
        }
    }
}

impl SynthProfile {
    /// Same latents, no per-level noise: levels 2-4 score identically.
    pub fn noiseless(mut self) -> Self {
        self.noise = [0.0; 4];
        self
    }
}

fn rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    let mut material = seed.to_le_bytes().to_vec();
    for p in parts {
        material.extend_from_slice(p.as_bytes());
        material.push(0);
    }
    let digest = crate::gateway::sha256_hex(&material);
    let mut bytes = [0u8; 32];
    hex::decode_to_slice(&digest, &mut bytes).expect("sha256 hex");
    ChaCha8Rng::from_seed(bytes)
}

fn normal(seed: u64, parts: &[&str]) -> f64 {
    StandardNormal.sample(&mut rng(seed, parts))
}

fn clamp_round(x: f64, (lo, hi): (u32, u32)) -> u32 {
    x.round().clamp(f64::from(lo), f64::from(hi)) as u32
}

impl SynthProfile {
    fn latent(&self, image: &CampaignImage, criterion: &Criterion, metric: &str) -> f64 {
        let s = self.seed;
        self.base
            + self.street_spread * normal(s, &["street", &image.street])
            + self.image_spread * normal(s, &["image", &image.id, criterion.as_str()])
            + self.metric_spread * normal(s, &["metric", &image.id, criterion.as_str(), metric])
    }

    fn noise(&self, image: &CampaignImage, level: ExpertiseLevel, replicate: u32, parts: &[&str]) -> f64 {
        let sd = self.noise[level.get() as usize - 1];
        if sd == 0.0 {
            return 0.0;
        }
        let lvl = level.to_string();
        let rep = replicate.to_string();
        let mut all = vec!["noise", image.id.as_str(), lvl.as_str(), rep.as_str()];
        all.extend_from_slice(parts);
        sd * normal(self.seed, &all)
    }

    fn offset(&self, level: ExpertiseLevel, criterion: &Criterion, metric: &str) -> f64 {
        match &self.divergence {
            Some(d) if &d.criterion == criterion && d.metric == metric && level.get() >= 2 => {
                d.offsets[level.get() as usize - 2]
            }
            _ => 0.0,
        }
    }

    /// The scores the mock model gives for one request.
    pub fn record(
        &self,
        registry: &MetricRegistry,
        image: &CampaignImage,
        bundle: &PromptBundle,
        replicate: u32,
    ) -> Result<EvaluationRecord, CampaignError> {
        let level = bundle.level;
        let mut record = EvaluationRecord {
            image_id: image.id.clone(),
            level,
            replicate,
            criterion_scores: BTreeMap::new(),
            metric_scores: BTreeMap::new(),
            rationales: BTreeMap::new(),
            raw_ref: RequestKey::new(&image.bytes, bundle, replicate),
        };
        for c in &bundle.criteria {
            let specs = registry
                .metrics_for(c, Naming::Quantified)
                .map_err(|e| CampaignError::Prompt(e.into()))?;
            match level.naming() {
                None => {
                    let total: f64 = specs.iter().map(|(q, _)| self.latent(image, c, q)).sum();
                    let noisy = total + self.level1_shift + self.noise(image, level, replicate, &[c.as_str()]);
                    let score = clamp_round(noisy, DIRECT_RANGE);
                    record.criterion_scores.insert(c.clone(), score);
                    record
                        .rationales
                        .entry(c.clone())
                        .or_default()
                        .insert(c.to_string(), "synthetic rating".into());
                }
                Some(naming) => {
                    let mut sum = 0;
                    for (q, spec) in &specs {
                        let x = self.latent(image, c, q)
                            + self.offset(level, c, q)
                            + self.noise(image, level, replicate, &[c.as_str(), q]);
                        let score = clamp_round(x, METRIC_RANGE);
                        let name = spec.name(naming).to_owned();
                        record
                            .rationales
                            .entry(c.clone())
                            .or_default()
                            .insert(name.clone(), "synthetic rating".into());
                        record.metric_scores.entry(c.clone()).or_default().insert(name, score);
                        sum += score;
                    }
                    record.criterion_scores.insert(c.clone(), sum);
                }
            }
        }
        Ok(record)
    }
}

/// A mock script answering every request of `campaign` in canonical format.
pub fn mock_script(
    registry: &MetricRegistry,
    campaign: &Campaign,
    images: &[CampaignImage],
    profile: &SynthProfile,
) -> Result<MockScript, CampaignError> {
    let mut script = MockScript::new();
    for level_bundles in campaign.bundles(registry)? {
        for image in images {
            for replicate in 1..=campaign.replicates {
                for bundle in &level_bundles {
                    let record = profile.record(registry, image, bundle, replicate)?;
                    script.insert(record.raw_ref.digest(), render_canonical(&record, bundle));
                }
            }
        }
    }
    Ok(script)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::RawResponse;
    use crate::parser::parse_any;
    use crate::prompt::build_prompt;
    use chrono::Utc;

    fn image(i: usize) -> CampaignImage {
        CampaignImage {
            id: format!("img{i:02}"),
            street: format!("street{}", i % 3),
            bytes: vec![i as u8 + 1; 16],
        }
    }

    fn both() -> Vec<Criterion> {
        vec![Criterion::safety(), Criterion::attractiveness()]
    }

    #[test]
    fn scripted_text_parses_back_to_the_record() {
        let reg = MetricRegistry::default_registry();
        let profile = SynthProfile::default();
        for level in ExpertiseLevel::ALL {
            let bundle = build_prompt(&reg, level, &both()).unwrap();
            let record = profile.record(&reg, &image(3), &bundle, 1).unwrap();
            let raw = RawResponse {
                key: record.raw_ref.clone(),
                text: render_canonical(&record, &bundle),
                received_at: Utc::now(),
                backend: "mock".into(),
                attempt_count: 1,
            };
            let parsed = parse_any(&raw, &bundle, "img03").unwrap();
            assert!(parsed.warnings.is_empty());
            assert_eq!(parsed.record, record);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let reg = MetricRegistry::default_registry();
        let bundle = build_prompt(&reg, ExpertiseLevel::new(3).unwrap(), &both()).unwrap();
        let a = SynthProfile::default().record(&reg, &image(1), &bundle, 1).unwrap();
        let b = SynthProfile::default().record(&reg, &image(1), &bundle, 1).unwrap();
        assert_eq!(a, b);
        let other = SynthProfile { seed: 8, ..SynthProfile::default() };
        let c = other.record(&reg, &image(1), &bundle, 1).unwrap();
        assert_ne!(a.metric_scores, c.metric_scores);
    }

    #[test]
    fn noiseless_levels_agree_and_level_one_is_shifted() {
        let reg = MetricRegistry::default_registry();
        let profile = SynthProfile::default().noiseless();
        let at = |l: u8| {
            let b = build_prompt(&reg, ExpertiseLevel::new(l).unwrap(), &both()).unwrap();
            profile.record(&reg, &image(5), &b, 1).unwrap().criterion_scores
        };
        assert_eq!(at(3), at(4));
        assert_eq!(at(2), at(3));
        let s = Criterion::safety();
        assert!(at(1)[&s] > at(3)[&s] + 20);
    }

    #[test]
    fn covers_every_request() {
        let reg = MetricRegistry::default_registry();
        let levels = ExpertiseLevel::ALL.to_vec();
        let mut campaign = Campaign::new(levels, both());
        campaign.replicates = 2;
        let images: Vec<_> = (0..3).map(image).collect();
        let script = mock_script(&reg, &campaign, &images, &SynthProfile::default()).unwrap();
        assert_eq!(script.len(), 3 * 4 * 2);
    }
}
