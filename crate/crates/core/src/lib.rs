//! Surrogate world model and protocol search for TACE planning.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod actions;
pub mod cohort;
pub mod dynamics;
pub mod error;
pub mod explorer;
pub mod segmenter;
pub mod survival;
pub mod voxel;

pub use actions::{ActionBase, ActionCombo, ActionKind, ActionUnit, ComboNames, Vocabulary};
pub use dynamics::{EfficacyTable, SimulatedState};
pub use error::{Error, Result};
pub use explorer::{ExplorationConfig, Plan, WorldModel};
pub use survival::{CoxModel, SurvivalRecord};
pub use voxel::{Mask3, Spacing, Volume3};
