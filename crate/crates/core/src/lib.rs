//! Two-stage semantic-bottleneck pipeline for longitudinal behavioral
//! time-series prediction.
//!
//! The pipeline turns a multi-day window of daily sensing features into a
//! natural-language summary (Stage 1), predicts an ordinal symptom score
//! from that summary alone (Stage 2), scores the prediction with a
//! verifiable Gaussian reward, and trains a policy with group-relative
//! normalized advantages under a KL penalty. Evaluation runs a
//! leave-one-subset-out protocol with paired-bootstrap significance.

pub mod eval;
pub mod grpo;
pub mod ingest;
pub mod math;
pub mod parse;
pub mod policy;
pub mod prompt;
pub mod reward;
pub mod schema;

pub use grpo::{AdvantageBatch, TrainConfig, Trajectory};
pub use ingest::{Dataset, Fold, SynthConfig};
pub use parse::{InvalidReason, ParseOutcome};
pub use policy::{Completion, Provider, SampleRequest};
pub use reward::RewardSpec;
pub use schema::{
    BehavioralWindow, DailyRecord, FeatureSchema, FeatureSpec, LabeledSample, Score, TaskKind,
};
