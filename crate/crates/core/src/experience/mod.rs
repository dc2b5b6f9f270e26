//! Motion quality labels, harvesting of high-quality steps and the
//! source-tagged replay buffer.

mod buffer;
mod harvest;
mod quality;

pub use buffer::{ReplayBuffer, Schema, SourceFilter, Transition, DEFAULT_CAPACITY, SOURCE_HARVESTED, SOURCE_LIVE};
pub use harvest::{harvest_episode, HarvestStats};
pub(crate) use harvest::to_action;
pub use quality::{assess_quality, QualityParams};
