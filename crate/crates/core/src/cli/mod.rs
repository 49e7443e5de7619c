//! Scenario files and the subcommands behind the `isac-spu` binary.

mod commands;
mod config;

pub use commands::*;
pub use config::{
    load_config, save_config, ProcessingSpec, ReflectorSpec, RunSpec, ScenarioConfig, SceneSpec, TrackerSpec,
};
