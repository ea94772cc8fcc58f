use super::assemble::SceneFrame;
use super::BevRaster;
use crate::error::{Error, Result};

const CH_DRIVABLE: usize = 0;
const CH_ALL: usize = 1;
const CH_HIGHLIGHT: usize = 2;

/// Rasterize the scene from the perspective of `vehicle_index`: channel 0
/// holds the drivable area, channel 1 every vehicle's footprints over the
/// history window, channel 2 only the highlighted vehicle's trajectory.
/// Off-raster positions are clipped.
pub fn rasterize_bev(
    frame: &SceneFrame,
    vehicle_index: usize,
    size: usize,
    extent: f32,
) -> Result<BevRaster> {
    if vehicle_index >= frame.windows.len() {
        return Err(Error::Usage(format!(
            "vehicle index {vehicle_index} out of range ({} vehicles)",
            frame.windows.len()
        )));
    }
    let mut raster = base_raster(frame, size, extent);
    paint_vehicle(&mut raster, frame, vehicle_index, CH_HIGHLIGHT);
    Ok(raster)
}

/// All per-vehicle rasters of one scene. Channels 0 and 1 are identical
/// across vehicles, so they are computed once and copied.
pub fn rasterize_all(frame: &SceneFrame, size: usize, extent: f32) -> Vec<BevRaster> {
    let base = base_raster(frame, size, extent);
    (0..frame.windows.len())
        .map(|i| {
            let mut raster = base.clone();
            paint_vehicle(&mut raster, frame, i, CH_HIGHLIGHT);
            raster
        })
        .collect()
}

fn base_raster(frame: &SceneFrame, size: usize, extent: f32) -> BevRaster {
    let mut raster = BevRaster { size, extent, data: vec![0u8; size * size * 3] };
    paint_drivable(&mut raster, frame);
    for i in 0..frame.windows.len() {
        paint_vehicle(&mut raster, frame, i, CH_ALL);
    }
    raster
}

fn paint_drivable(raster: &mut BevRaster, frame: &SceneFrame) {
    let size = raster.size;
    let cell = f64::from(raster.extent) / size as f64;
    let half = f64::from(raster.extent) / 2.0;
    let (sin, cos) = frame.ego.heading.sin_cos();
    for row in 0..size {
        let y = half - (row as f64 + 0.5) * cell;
        for col in 0..size {
            let x = (col as f64 + 0.5) * cell - half;
            // ego frame -> absolute
            let ax = frame.ego.x + cos * x - sin * y;
            let ay = frame.ego.y + sin * x + cos * y;
            if frame.road.contains(ax, ay) {
                raster.data[(row * size + col) * 3 + CH_DRIVABLE] = 255;
            }
        }
    }
}

/// Paint the oriented footprint of vehicle `i` at every window step.
fn paint_vehicle(raster: &mut BevRaster, frame: &SceneFrame, i: usize, channel: usize) {
    let half_l = frame.vehicle_length / 2.0;
    let half_w = frame.vehicle_width / 2.0;
    for state in &frame.windows[i] {
        let center = frame.to_ego(state.x, state.y);
        let heading = frame.heading_to_ego(state.heading);
        paint_rect(raster, center, heading, half_l, half_w, channel);
    }
}

fn paint_rect(
    raster: &mut BevRaster,
    center: [f64; 2],
    heading: f64,
    half_l: f64,
    half_w: f64,
    channel: usize,
) {
    let size = raster.size;
    let cell = f64::from(raster.extent) / size as f64;
    let half = f64::from(raster.extent) / 2.0;
    let radius = (half_l * half_l + half_w * half_w).sqrt();
    let col_min = (((center[0] - radius + half) / cell).floor().max(0.0)) as usize;
    let col_max = (((center[0] + radius + half) / cell).ceil().min(size as f64)) as usize;
    let row_min = (((half - center[1] - radius) / cell).floor().max(0.0)) as usize;
    let row_max = (((half - center[1] + radius) / cell).ceil().min(size as f64)) as usize;
    let (sin, cos) = heading.sin_cos();
    for row in row_min..row_max {
        let y = half - (row as f64 + 0.5) * cell;
        for col in col_min..col_max {
            let x = (col as f64 + 0.5) * cell - half;
            let dx = x - center[0];
            let dy = y - center[1];
            let along = cos * dx + sin * dy;
            let across = -sin * dx + cos * dy;
            if along.abs() <= half_l && across.abs() <= half_w {
                raster.data[(row * size + col) * 3 + channel] = 255;
            }
        }
    }
}
