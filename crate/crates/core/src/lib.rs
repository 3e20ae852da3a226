//! Agent ranking for autonomous navigation.
//!
//! The pipeline: simulate scenes ([`sim`]), label agents with a planner oracle
//! ([`planner`], [`label`]), extract engineered features ([`features`]) and
//! top-down rasters ([`raster`]), train GBDT ([`gbdt`]) and CNN ([`cnn`])
//! rankers, and score them with NDCG ([`eval`]). [`experiment`] runs the whole
//! comparison; [`config`] reads its plain-text settings.

pub mod cnn;
pub mod config;
pub mod distance;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod gbdt;
pub mod geometry;
pub mod label;
pub mod planner;
pub mod raster;
pub mod scene;
pub mod sim;

pub use cnn::{CnnConfig, CnnModel};
pub use error::{Error, Result};
pub use eval::{dcg_at_k, ndcg_at_k, top1_frequency, Approach, EvalReport, RankMode, RankedList, RankingModels};
pub use experiment::{EvalScope, ExperimentConfig, ModelSet};
pub use features::{FeatureVector, FEATURE_DIM};
pub use gbdt::{GbdtConfig, GbdtModel, LossKind};
pub use label::{LabelMethod, LabeledAgent, LabelerConfig, RankingDataset, RankingRecord};
pub use planner::{Plan, PlanPoint, Planner, PlannerConfig};
pub use raster::{RasterConfig, RasterStack};
pub use scene::{AgentKind, AgentState, AgentTrack, Scene};
pub use sim::{ScenarioConfig, ScriptedName};
