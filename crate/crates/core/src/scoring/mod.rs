//! Fitness layer: forgery confidence, anonymity matching and landmark provisioning.
//!
//! Each scorer is either a deterministic built-in stub or an external command speaking
//! the adapter protocol in [`adapter`].

pub mod adapter;
mod forgery;
mod landmarks;
mod matcher;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forgery::{laplacian_variance, score_forgery, ForgeryScorer, ForgeryStub, SharpnessCalibration};
pub use landmarks::detect_landmarks;
pub use matcher::{build_gallery, check_anonymity, embed, EmbeddingGallery, Matcher, EMBEDDING_SIDE};

use crate::geometry::GeometryError;

pub const DEFAULT_FORGERY_THRESHOLD: f64 = 0.5;
pub const DEFAULT_ANONYMITY_THRESHOLD: f64 = 0.6;
pub const DEFAULT_ADAPTER_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdapterFailure {
    Spawn(String),
    Exit { code: Option<i32>, stderr: String },
    Timeout(Duration),
    Malformed(String),
}

impl std::fmt::Display for AdapterFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdapterFailure::Spawn(e) => write!(f, "could not run: {e}"),
            AdapterFailure::Exit { code: Some(c), stderr } => write!(f, "exited with status {c}: {stderr}"),
            AdapterFailure::Exit { code: None, stderr } => write!(f, "killed by signal: {stderr}"),
            AdapterFailure::Timeout(t) => write!(f, "timed out after {t:?}"),
            AdapterFailure::Malformed(m) => write!(f, "malformed output: {m}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("adapter `{command}` failed: {kind}")]
    AdapterFailure { command: String, kind: AdapterFailure },
    #[error("adapter `{command}` found no face")]
    NoFaceFound { command: String },
    #[error("threshold {0} is out of range")]
    InvalidThreshold(f64),
    #[error("invalid scorer binding: {0}")]
    InvalidBinding(String),
    #[error("gallery is empty")]
    EmptyGallery,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl ScoringError {
    pub fn is_adapter_failure(&self) -> bool {
        matches!(self, ScoringError::AdapterFailure { .. } | ScoringError::NoFaceFound { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingKind {
    BuiltinStub,
    ExternalCommand,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScorerBinding {
    pub kind: BindingKind,
    pub command: Option<String>,
    pub timeout: Duration,
}

impl ScorerBinding {
    pub fn stub() -> Self {
        Self {
            kind: BindingKind::BuiltinStub,
            command: None,
            timeout: DEFAULT_ADAPTER_TIMEOUT,
        }
    }

    pub fn external(command: impl Into<String>, timeout: Duration) -> Result<Self, ScoringError> {
        let command = command.into();
        if command.trim().is_empty() {
            return Err(ScoringError::InvalidBinding("external command is empty".into()));
        }
        Ok(Self {
            kind: BindingKind::ExternalCommand,
            command: Some(command),
            timeout,
        })
    }

    /// The command for an external binding, `None` for the stub.
    pub(crate) fn external_command(&self) -> Result<Option<&str>, ScoringError> {
        match self.kind {
            BindingKind::BuiltinStub => Ok(None),
            BindingKind::ExternalCommand => match self.command.as_deref() {
                Some(c) if !c.trim().is_empty() => Ok(Some(c)),
                _ => Err(ScoringError::InvalidBinding("external command is empty".into())),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Real,
    Fake,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgeryScore {
    pub real_confidence: f64,
    pub verdict: Verdict,
    pub threshold_used: f64,
}

impl ForgeryScore {
    pub fn new(real_confidence: f64, threshold: f64) -> Self {
        let verdict = if real_confidence >= threshold {
            Verdict::Real
        } else {
            Verdict::Fake
        };
        Self {
            real_confidence,
            verdict,
            threshold_used: threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymityReport {
    pub min_distance: f64,
    pub matched_id: Option<String>,
    pub is_unknown: bool,
    pub threshold_used: f64,
}

/// Both gate outcomes for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub forgery: ForgeryScore,
    pub anonymity: AnonymityReport,
}

impl ScoreReport {
    pub fn accepted(&self) -> bool {
        self.forgery.verdict == Verdict::Real && self.anonymity.is_unknown
    }
}

pub(crate) fn check_unit_threshold(t: f64) -> Result<(), ScoringError> {
    if t.is_finite() && (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(ScoringError::InvalidThreshold(t))
    }
}

pub(crate) fn check_distance_threshold(t: f64) -> Result<(), ScoringError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(ScoringError::InvalidThreshold(t))
    }
}
