//! Turns episode logs into training and evaluation samples: ghost vehicle
//! injection, ego-relative coordinate transforms, history windowing, BEV
//! rasterization, route extraction and persistent dataset files.

mod assemble;
mod build;
mod ghost;
mod io;
mod raster;

pub use assemble::{assemble_sample, AssembleParams, SceneFrame};
pub use build::{build_dataset, dataset_path, generate_sample, BuildOutcome, CombinationSpec, GenParams};
pub use ghost::inject_ghosts;
pub use io::{manifest_path, read_all, read_dataset, write_dataset, DatasetManifest, DatasetReader};
pub use raster::{rasterize_all, rasterize_bev};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Action;

/// One vehicle's state at one timestep, relative to the ego at that step:
/// position (m), velocity (m/s) and heading (rad) in the instantaneous ego
/// frame (ego heading along +x). The ego's own state is identically zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f32,
    pub y: f32,
    pub vx: f32,
    pub vy: f32,
    pub theta: f32,
}

impl VehicleState {
    pub fn zero() -> Self {
        Self { x: 0.0, y: 0.0, vx: 0.0, vy: 0.0, theta: 0.0 }
    }

    pub fn to_array(self) -> [f32; 5] {
        [self.x, self.y, self.vx, self.vy, self.theta]
    }

    pub fn from_array(a: [f32; 5]) -> Self {
        Self { x: a[0], y: a[1], vx: a[2], vy: a[3], theta: a[4] }
    }
}

/// Exactly `h` consecutive relative states, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHistory(pub Vec<VehicleState>);

impl TrajectoryHistory {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn states(&self) -> &[VehicleState] {
        &self.0
    }
}

/// Fixed-size ego-centered raster, channel-last `H x W x 3` bytes.
/// Channel 0: drivable area. Channel 1: every vehicle's footprint over the
/// history window. Channel 2: the highlighted vehicle's trajectory footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevRaster {
    pub size: usize,
    /// metric side length covered by the raster
    pub extent: f32,
    pub data: Vec<u8>,
}

impl BevRaster {
    pub fn channel_value(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.data[(row * self.size + col) * 3 + channel]
    }

    pub fn cell_count(&self, channel: usize) -> usize {
        self.data[channel..].iter().step_by(3).filter(|&&v| v > 0).count()
    }
}

/// One training/evaluation record. Index 0 is always the ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSample {
    pub histories: Vec<TrajectoryHistory>,
    pub rasters: Vec<BevRaster>,
    /// upcoming route waypoints in the ego frame at sampling time
    pub route: Vec<[f32; 2]>,
    pub expert: Action,
    /// 0 = normal, 1 = ghost; the ego is always 0
    pub labels: Vec<u8>,
    pub n_normal: u32,
    pub n_ghost: u32,
}

impl SceneSample {
    pub fn n_vehicles(&self) -> usize {
        self.histories.len()
    }

    /// Positions of every vehicle at the sampling timestep (last history
    /// entry), in the ego frame.
    pub fn positions_at_t(&self) -> Vec<[f32; 2]> {
        self.histories
            .iter()
            .map(|h| {
                let s = h.states().last().expect("history is non-empty");
                [s.x, s.y]
            })
            .collect()
    }

    pub fn validate(&self, h: usize, route_len: usize) -> Result<()> {
        let n = self.histories.len();
        // rasters may be absent on a freshly assembled (not yet rasterized) sample
        if (!self.rasters.is_empty() && self.rasters.len() != n) || self.labels.len() != n {
            return Err(Error::CorruptDataset(format!(
                "inconsistent per-vehicle lengths: {} histories, {} rasters, {} labels",
                n,
                self.rasters.len(),
                self.labels.len()
            )));
        }
        if self.histories.iter().any(|hist| hist.len() != h) {
            return Err(Error::CorruptDataset(format!("history length != {h}")));
        }
        if self.route.len() != route_len {
            return Err(Error::CorruptDataset(format!(
                "route length {} != {route_len}",
                self.route.len()
            )));
        }
        if self.labels[0] != 0 {
            return Err(Error::CorruptDataset("ego labelled as ghost".into()));
        }
        let ego = &self.histories[0];
        if ego.states().iter().any(|s| s.to_array().iter().any(|&v| v != 0.0)) {
            return Err(Error::CorruptDataset("ego history not identically zero".into()));
        }
        Ok(())
    }
}

/// Ghost-injection parameters. Speeds and headings are drawn from Gaussians
/// centered on the fleet mean at the anchor step, with standard deviations
/// floored to avoid degenerate single-vehicle fleets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GhostSpec {
    pub count: usize,
    /// annulus around the ego, meters
    pub radius_min: f64,
    pub radius_max: f64,
    pub speed_std_floor: f64,
    pub heading_std_floor: f64,
    /// minimum center distance from the ego to count as non-overlapping
    pub ego_clearance: f64,
}

impl Default for GhostSpec {
    fn default() -> Self {
        Self {
            count: 0,
            radius_min: 2.0,
            radius_max: 10.0,
            speed_std_floor: 0.5,
            heading_std_floor: 0.05,
            ego_clearance: 2.6,
        }
    }
}

impl GhostSpec {
    pub fn with_count(mut self, count: usize) -> Self {
        self.count = count;
        self
    }
}
