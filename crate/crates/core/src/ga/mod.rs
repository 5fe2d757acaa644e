//! The generation loop: pair parents, merge, gate on forgery and anonymity, cap each
//! generation at `max_i` and feed survivors back into the parent pools.

mod rng;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use rng::{choose_operation, derive_seed, draw_mutation_alpha, stream};
pub(crate) use rng::splitmix;

use crate::fusion::{face_merge, FaceAsset, FusionError, MergeOptions, MorphSpec, OpType};
use crate::geometry::validate_landmarks;
use crate::scoring::{
    build_gallery, check_anonymity, check_distance_threshold, check_unit_threshold, score_forgery,
    AnonymityReport, EmbeddingGallery, ForgeryScore, ForgeryScorer, Matcher, ScoreReport, ScoringError,
    Verdict, DEFAULT_ANONYMITY_THRESHOLD, DEFAULT_FORGERY_THRESHOLD,
};

const TAG_SHUFFLE: u64 = 1;
const TAG_ATTEMPT: u64 = 2;

#[derive(Debug, Error)]
pub enum GaError {
    #[error("empty pool: {0}")]
    EmptyPool(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scoring candidate `{id}` failed")]
    Scorer {
        id: String,
        #[source]
        source: ScoringError,
    },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("could not start worker pool: {0}")]
    Workers(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolPolicy {
    /// Every generation pairs the original drug and healthy pools.
    OriginalsOnly,
    /// Generation g pairs g-1 survivors with healthy originals and g-1 survivors.
    #[default]
    PreviousGeneration,
    /// All survivors so far join both sides.
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnonymityMode {
    /// Identified candidates are rejected before they count toward `max_i`.
    #[default]
    Gate,
    /// Only the forgery gate selects survivors; identified survivors are dropped
    /// from the published set afterwards but still breed.
    Posthoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerErrorPolicy {
    #[default]
    Abort,
    /// Count the candidate as rejected by the failing gate.
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub alpha: MorphSpec,
    pub max_g: u32,
    pub max_i: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub forgery_threshold: f64,
    pub anonymity_threshold: f64,
    pub seed: u64,
    pub pool_policy: PoolPolicy,
    pub anonymity_mode: AnonymityMode,
    pub on_scorer_error: ScorerErrorPolicy,
    /// Concurrent candidate evaluations; 0 uses every core. Never affects results.
    #[serde(skip)]
    pub jobs: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            alpha: MorphSpec::Tenths(5),
            max_g: 5,
            max_i: 300,
            p_crossover: 0.95,
            p_mutation: 0.05,
            forgery_threshold: DEFAULT_FORGERY_THRESHOLD,
            anonymity_threshold: DEFAULT_ANONYMITY_THRESHOLD,
            seed: 0,
            pool_policy: PoolPolicy::default(),
            anonymity_mode: AnonymityMode::default(),
            on_scorer_error: ScorerErrorPolicy::default(),
            jobs: 0,
        }
    }
}

impl GaConfig {
    pub fn alpha_tenths(&self) -> u8 {
        self.alpha.tenths().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), GaError> {
        let bad = |m: String| Err(GaError::InvalidConfig(m));
        match self.alpha.tenths() {
            Some(t) if t <= 10 => {}
            _ => return bad(format!("run alpha must be a tenth in 0..=10, got {:?}", self.alpha)),
        }
        if self.max_g == 0 || self.max_i == 0 {
            return bad("max_g and max_i must be at least 1".into());
        }
        let (pc, pm) = (self.p_crossover, self.p_mutation);
        if !(0.0..=1.0).contains(&pc) || !(0.0..=1.0).contains(&pm) || (pc + pm - 1.0).abs() > 1e-12 {
            return bad(format!("operation probabilities {pc} + {pm} must sum to 1"));
        }
        check_unit_threshold(self.forgery_threshold)?;
        check_distance_threshold(self.anonymity_threshold)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scorers {
    pub forgery: ForgeryScorer,
    pub matcher: Matcher,
}

impl Scorers {
    pub fn stub() -> Self {
        Self {
            forgery: ForgeryScorer::stub(Default::default()),
            matcher: Matcher::stub(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenerationState {
    pub generation_index: u32,
    pub alpha_tenths: u8,
    pub attempted: usize,
    pub accepted: usize,
    pub rejected_forgery: usize,
    pub rejected_recognized: usize,
    pub rejected_no_face: usize,
}

impl GenerationState {
    pub fn rejected(&self) -> usize {
        self.rejected_forgery + self.rejected_recognized + self.rejected_no_face
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    RejectedForgery,
    RejectedRecognized,
    RejectedNoFace,
}

/// One evaluated pair, in attempt order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub generation: u32,
    pub attempt: usize,
    pub drug_parent: String,
    pub healthy_parent: String,
    pub op: OpType,
    /// Effective alpha: the run alpha for crossover, the drawn one for mutation.
    pub alpha_tenths: u8,
    pub real_confidence: Option<f64>,
    pub min_distance: Option<f64>,
    pub is_unknown: Option<bool>,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedAsset {
    pub asset: FaceAsset,
    pub scores: ScoreReport,
    pub attempt: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutput {
    pub state: GenerationState,
    /// Candidates that passed selection, in attempt order. Under posthoc anonymity this
    /// includes identified faces; see [`GenerationOutput::published`].
    pub survivors: Vec<GeneratedAsset>,
    pub attempts: Vec<AttemptRecord>,
}

impl GenerationOutput {
    pub fn published(&self) -> impl Iterator<Item = &GeneratedAsset> {
        self.survivors.iter().filter(|a| a.scores.anonymity.is_unknown)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub generations: Vec<GenerationOutput>,
    /// First generation that could not run for lack of parents.
    pub terminated_early: Option<u32>,
    pub gallery_ids: Vec<String>,
}

impl EvolutionResult {
    pub fn published(&self) -> impl Iterator<Item = &GeneratedAsset> {
        self.generations.iter().flat_map(|g| g.published())
    }
}

enum Evaluated {
    NoFace {
        op: OpType,
        spec: MorphSpec,
    },
    Scored {
        asset: FaceAsset,
        forgery: Result<ForgeryScore, ScoringError>,
        anonymity: Result<AnonymityReport, ScoringError>,
    },
}

pub fn candidate_id(alpha_tenths: u8, g: u32, attempt: usize) -> String {
    format!("a{alpha_tenths:02}_g{g}_{attempt:05}")
}

fn evaluate(
    x: &FaceAsset,
    y: &FaceAsset,
    attempt: usize,
    cfg: &GaConfig,
    g: u32,
    scorers: &Scorers,
    gallery: &EmbeddingGallery,
) -> Result<Evaluated, GaError> {
    let mut rng = stream(cfg.seed, &[TAG_ATTEMPT, g as u64, attempt as u64]);
    let op = choose_operation(&mut rng, cfg.p_crossover);
    let spec = match op {
        OpType::Mutation => draw_mutation_alpha(&mut rng),
        _ => cfg.alpha,
    };
    if !validate_landmarks(&x.landmarks) || !validate_landmarks(&y.landmarks) {
        return Ok(Evaluated::NoFace { op, spec });
    }
    let id = candidate_id(cfg.alpha_tenths(), g, attempt);
    let mut asset = face_merge(x, y, spec, op, id, MergeOptions::default())?;
    asset.generation = g;
    let forgery = score_forgery(&asset.raster, &scorers.forgery, cfg.forgery_threshold);
    let anonymity = check_anonymity(&asset.raster, &asset.landmarks, gallery, cfg.anonymity_threshold);
    Ok(Evaluated::Scored {
        asset,
        forgery,
        anonymity,
    })
}

fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool, GaError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| GaError::Workers(e.to_string()))
}

/// One pass over every (drug, healthy) pair in a seeded shuffled order.
///
/// Pairs of an asset with itself are skipped. Candidates are evaluated concurrently in
/// batches, but acceptance is decided strictly in attempt order, so the result does not
/// depend on `cfg.jobs`.
pub fn run_generation(
    drug_pool: &[&FaceAsset],
    healthy_pool: &[&FaceAsset],
    cfg: &GaConfig,
    g: u32,
    scorers: &Scorers,
    gallery: &EmbeddingGallery,
) -> Result<GenerationOutput, GaError> {
    cfg.validate()?;
    if drug_pool.is_empty() {
        return Err(GaError::EmptyPool(format!("no drug-side parents for generation {g}")));
    }
    if healthy_pool.is_empty() {
        return Err(GaError::EmptyPool(format!("no healthy-side parents for generation {g}")));
    }

    let mut pairs: Vec<(usize, usize)> = (0..drug_pool.len())
        .flat_map(|i| (0..healthy_pool.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| drug_pool[i].id != healthy_pool[j].id)
        .collect();
    pairs.shuffle(&mut stream(cfg.seed, &[TAG_SHUFFLE, g as u64]));

    let workers = worker_pool(cfg.jobs)?;
    let batch = workers.current_num_threads().max(1) * 2;

    let mut state = GenerationState {
        generation_index: g,
        alpha_tenths: cfg.alpha_tenths(),
        ..Default::default()
    };
    let mut survivors = Vec::new();
    let mut attempts = Vec::new();
    let mut selected = 0usize;

    'outer: for (chunk_no, chunk) in pairs.chunks(batch).enumerate() {
        let base = chunk_no * batch;
        let results: Vec<Result<Evaluated, GaError>> = workers.install(|| {
            chunk
                .par_iter()
                .enumerate()
                .map(|(k, &(i, j))| evaluate(drug_pool[i], healthy_pool[j], base + k, cfg, g, scorers, gallery))
                .collect()
        });

        for (k, result) in results.into_iter().enumerate() {
            let attempt = base + k;
            let (x, y) = (drug_pool[chunk[k].0], healthy_pool[chunk[k].1]);
            let mut record = AttemptRecord {
                generation: g,
                attempt,
                drug_parent: x.id.clone(),
                healthy_parent: y.id.clone(),
                op: OpType::Crossover,
                alpha_tenths: cfg.alpha_tenths(),
                real_confidence: None,
                min_distance: None,
                is_unknown: None,
                outcome: Outcome::RejectedNoFace,
                error: None,
            };
            state.attempted += 1;

            let (asset, forgery, anonymity) = match result? {
                Evaluated::NoFace { op, spec } => {
                    record.op = op;
                    record.alpha_tenths = spec.tenths().unwrap_or(0);
                    state.rejected_no_face += 1;
                    attempts.push(record);
                    continue;
                }
                Evaluated::Scored {
                    asset,
                    forgery,
                    anonymity,
                } => (asset, forgery, anonymity),
            };
            let lineage = asset.parents.as_ref().expect("merged assets carry lineage");
            record.op = lineage.op;
            record.alpha_tenths = lineage.alpha.tenths().unwrap_or(0);
            if let Ok(f) = &forgery {
                record.real_confidence = Some(f.real_confidence);
            }
            if let Ok(a) = &anonymity {
                record.min_distance = Some(a.min_distance);
                record.is_unknown = Some(a.is_unknown);
            }

            let mut failure = None;
            for (err, gate) in [
                (forgery.as_ref().err(), Outcome::RejectedForgery),
                (anonymity.as_ref().err(), Outcome::RejectedRecognized),
            ] {
                let Some(err) = err else { continue };
                if failure.is_some() {
                    break;
                }
                if let ScoringError::NoFaceFound { .. } = err {
                    failure = Some(Outcome::RejectedNoFace);
                } else if cfg.on_scorer_error == ScorerErrorPolicy::Abort {
                    return Err(GaError::Scorer {
                        id: asset.id,
                        source: err.clone(),
                    });
                } else {
                    failure = Some(gate);
                }
                record.error = Some(err.to_string());
            }

            let outcome = match (failure, &forgery, &anonymity) {
                (Some(o), _, _) => o,
                (None, Ok(f), _) if f.verdict == Verdict::Fake => Outcome::RejectedForgery,
                (None, Ok(_), Ok(a)) if !a.is_unknown => Outcome::RejectedRecognized,
                _ => Outcome::Accepted,
            };
            record.outcome = outcome;
            attempts.push(record);

            let keep = match outcome {
                Outcome::Accepted => true,
                Outcome::RejectedRecognized => cfg.anonymity_mode == AnonymityMode::Posthoc && anonymity.is_ok(),
                _ => false,
            };
            match outcome {
                Outcome::Accepted => state.accepted += 1,
                Outcome::RejectedForgery => state.rejected_forgery += 1,
                Outcome::RejectedRecognized => state.rejected_recognized += 1,
                Outcome::RejectedNoFace => state.rejected_no_face += 1,
            }
            if keep {
                survivors.push(GeneratedAsset {
                    asset,
                    scores: ScoreReport {
                        forgery: forgery.expect("kept candidates were scored"),
                        anonymity: anonymity.expect("kept candidates were scored"),
                    },
                    attempt,
                });
                selected += 1;
                if selected == cfg.max_i {
                    break 'outer;
                }
            }
        }
    }

    Ok(GenerationOutput {
        state,
        survivors,
        attempts,
    })
}

/// Run `cfg.max_g` generations. The anonymity gallery holds the drug originals plus
/// `extra_gallery`.
pub fn run_evolution(
    cfg: &GaConfig,
    drug_originals: &[FaceAsset],
    healthy_originals: &[FaceAsset],
    extra_gallery: &[FaceAsset],
    scorers: &Scorers,
) -> Result<EvolutionResult, GaError> {
    cfg.validate()?;
    if drug_originals.is_empty() {
        return Err(GaError::EmptyPool("no drug originals".into()));
    }
    if healthy_originals.is_empty() {
        return Err(GaError::EmptyPool("no healthy originals".into()));
    }
    let members: Vec<FaceAsset> = drug_originals.iter().chain(extra_gallery).cloned().collect();
    let gallery = build_gallery(&members, &scorers.matcher)?;

    let mut generations: Vec<GenerationOutput> = Vec::new();
    let mut terminated_early = None;
    for g in 1..=cfg.max_g {
        let prev: Vec<&FaceAsset> = generations
            .last()
            .map(|o| o.survivors.iter().map(|s| &s.asset).collect())
            .unwrap_or_default();
        let all: Vec<&FaceAsset> = generations
            .iter()
            .flat_map(|o| o.survivors.iter().map(|s| &s.asset))
            .collect();
        let drug: Vec<&FaceAsset> = drug_originals.iter().collect();
        let healthy: Vec<&FaceAsset> = healthy_originals.iter().collect();

        let (x, y) = match cfg.pool_policy {
            _ if g == 1 => (drug, healthy),
            PoolPolicy::OriginalsOnly => (drug, healthy),
            PoolPolicy::PreviousGeneration => (prev.clone(), [healthy, prev].concat()),
            PoolPolicy::Cumulative => ([drug, all.clone()].concat(), [healthy, all].concat()),
        };
        if x.is_empty() {
            terminated_early = Some(g);
            break;
        }
        let out = run_generation(&x, &y, cfg, g, scorers, &gallery)?;
        generations.push(out);
    }

    Ok(EvolutionResult {
        generations,
        terminated_early,
        gallery_ids: gallery.ids().map(str::to_string).collect(),
    })
}
