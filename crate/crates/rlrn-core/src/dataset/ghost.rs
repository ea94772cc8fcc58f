use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::GhostSpec;
use crate::error::{Error, Result};
use crate::sim::{AbsState, EpisodeLog, VehicleMeta};

const PLACEMENT_RETRIES: usize = 60;

/// Add `spec.count` ghost vehicles to an episode. Each ghost is anchored at
/// timestep `anchor`: position uniform in an annulus around the ego, initial
/// speed and heading Gaussian around the fleet mean at that moment. Across
/// the rest of the episode the ghost moves with constant velocity. Normal
/// vehicle states and the recorded expert actions are untouched.
pub fn inject_ghosts(
    episode: &EpisodeLog,
    spec: &GhostSpec,
    anchor: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeLog> {
    if episode.normal_count() == 0 || episode.is_empty() {
        return Err(Error::Usage("episode has no normal vehicles".into()));
    }
    if anchor >= episode.len() {
        return Err(Error::Windowing(format!(
            "anchor {anchor} outside episode of length {}",
            episode.len()
        )));
    }
    if spec.count == 0 {
        return Ok(episode.clone());
    }

    let fleet = &episode.steps[anchor];
    let (speed_mean, speed_std, heading_mean, heading_std) = fleet_stats(fleet);
    let speed_dist = Normal::new(speed_mean, speed_std.max(spec.speed_std_floor))
        .map_err(|e| Error::Usage(format!("speed distribution: {e}")))?;
    let heading_dist = Normal::new(0.0, heading_std.max(spec.heading_std_floor))
        .map_err(|e| Error::Usage(format!("heading distribution: {e}")))?;
    let ego = fleet[0];

    let mut out = episode.clone();
    for g in 0..spec.count {
        let mut placed = None;
        for _ in 0..PLACEMENT_RETRIES {
            let u: f64 = rng.random();
            let r = (u * (spec.radius_max.powi(2) - spec.radius_min.powi(2))
                + spec.radius_min.powi(2))
            .sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let x = ego.x + r * phi.cos();
            let y = ego.y + r * phi.sin();
            let d = ((x - ego.x).powi(2) + (y - ego.y).powi(2)).sqrt();
            if d >= spec.ego_clearance {
                placed = Some((x, y));
                break;
            }
        }
        let (x, y) = placed.ok_or_else(|| {
            Error::Placement(format!("ghost {g}: no non-overlapping position near the ego"))
        })?;
        let speed = speed_dist.sample(rng).max(0.0);
        let heading = heading_mean + heading_dist.sample(rng);

        let id = out.vehicles.iter().map(|v| v.id).max().unwrap_or(0) + 1;
        out.vehicles.push(VehicleMeta { id, is_ghost: true });
        let (vx, vy) = (speed * heading.cos(), speed * heading.sin());
        let dt = episode.dt;
        for (t, step) in out.steps.iter_mut().enumerate() {
            let offset = (t as f64 - anchor as f64) * dt;
            step.push(AbsState {
                x: x + vx * offset,
                y: y + vy * offset,
                heading,
                speed,
            });
        }
    }
    Ok(out)
}

/// Mean/std of speed and heading over one timestep's fleet. Headings use the
/// circular mean; the std is measured on wrapped deviations from it.
fn fleet_stats(fleet: &[AbsState]) -> (f64, f64, f64, f64) {
    let n = fleet.len() as f64;
    let speed_mean = fleet.iter().map(|s| s.speed).sum::<f64>() / n;
    let speed_var = fleet.iter().map(|s| (s.speed - speed_mean).powi(2)).sum::<f64>() / n;
    let (sin_sum, cos_sum) = fleet
        .iter()
        .fold((0.0, 0.0), |(s, c), v| (s + v.heading.sin(), c + v.heading.cos()));
    let heading_mean = sin_sum.atan2(cos_sum);
    let heading_var = fleet
        .iter()
        .map(|s| crate::sim::wrap_angle(s.heading - heading_mean).powi(2))
        .sum::<f64>()
        / n;
    (speed_mean, speed_var.sqrt(), heading_mean, heading_var.sqrt())
}
