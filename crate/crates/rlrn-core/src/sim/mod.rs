//! Synthetic multi-lane traffic world with a scripted expert driver. Stands
//! in for a full driving simulator as the source of clean episodes and
//! expert control labels.

mod episode;
mod expert;
mod road;
mod world;

pub use episode::{record_episode, AbsState, EpisodeLog, VehicleMeta};
pub use expert::{expert_action, wrap_angle};
pub use road::{Pose, Projection, Road, SegmentSpec};
pub use world::{step, world_create, world_from_snapshot, Placement, Vehicle, WorldConfig, WorldState};

use serde::{Deserialize, Serialize};

/// Control triple produced by the expert and by trained policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// steering in [-1, 1]
    pub st: f32,
    /// throttle in [0, 1]
    pub ac: f32,
    /// brake in [0, 1]
    pub br: f32,
}

impl Action {
    pub fn new(st: f32, ac: f32, br: f32) -> Self {
        Self { st: st.clamp(-1.0, 1.0), ac: ac.clamp(0.0, 1.0), br: br.clamp(0.0, 1.0) }
    }

    pub fn zero() -> Self {
        Self { st: 0.0, ac: 0.0, br: 0.0 }
    }
}
