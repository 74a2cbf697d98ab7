//! Multi-agent search & rescue planning with language-model controllers.
//!
//! The crate is split into the grid simulator ([`world`]), the exploration
//! heuristic, free-text action grounding, language-model backends, the
//! plan/act/correct/verify loop ([`orchestrator`]) and evaluation metrics.

pub mod action;
pub mod backend;
pub mod exploration;
pub mod grounding;
pub mod metrics;
pub mod orchestrator;
pub mod world;

pub use action::{ActionKind, Direction, HighLevelAction, Supply};
pub use world::{build_scene, ObservationBundle, SceneConfig, WorldState};
