//! Scripted expert driver: gap-keeping longitudinal control plus
//! pure-pursuit steering along the assigned route. Deterministic and
//! collision-free under the default world parameters.

use super::world::WorldState;
use super::Action;
use crate::error::{Error, Result};

// gap controller constants (classic intelligent-driver form)
const MIN_GAP: f64 = 2.5;
const TIME_HEADWAY: f64 = 1.2;
const COMFORT_BRAKE: f64 = 2.5;
const ACCEL_GAIN: f64 = 2.5;
const LOOKAHEAD: f64 = 70.0;

// pure pursuit constants
const PURSUIT_GAIN: f64 = 0.9;
const PURSUIT_MIN: f64 = 4.0;
const PURSUIT_MAX: f64 = 16.0;

/// Expert control for one vehicle given the current world snapshot.
pub fn expert_action(world: &WorldState, vehicle_id: usize) -> Result<Action> {
    let vehicle = world
        .vehicles
        .get(vehicle_id)
        .ok_or_else(|| Error::Usage(format!("no vehicle {vehicle_id}")))?;
    if vehicle.route.is_empty() {
        return Err(Error::Routing(format!("vehicle {vehicle_id} has no route")));
    }
    let cfg = &world.config;
    let me = world.road.project(vehicle.x, vehicle.y);

    // --- longitudinal: follow the nearest leader in my lane corridor
    let mut leader: Option<(f64, f64)> = None; // (center gap, leader speed)
    for (j, other) in world.vehicles.iter().enumerate() {
        if j == vehicle_id {
            continue;
        }
        let p = world.road.project(other.x, other.y);
        if (p.lateral - me.lateral).abs() > cfg.lane_width / 2.0 {
            continue;
        }
        let ahead = p.s - me.s;
        if ahead > 0.0 && ahead < LOOKAHEAD && leader.map_or(true, |(g, _)| ahead < g) {
            leader = Some((ahead, other.speed));
        }
    }
    // the road end acts as a stopped leader so traffic parks before it
    let to_end = world.road.total_length() - me.s;
    if to_end < LOOKAHEAD && leader.map_or(true, |(g, _)| to_end < g) {
        leader = Some((to_end, 0.0));
    }

    let v = vehicle.speed;
    let v0 = vehicle.target_speed.max(0.1);
    let free_term = 1.0 - (v / v0).powi(4);
    let accel = match leader {
        None => ACCEL_GAIN * free_term,
        Some((center_gap, v_lead)) => {
            let gap = (center_gap - cfg.vehicle_length).max(0.05);
            let closing = v - v_lead;
            let desired_gap =
                MIN_GAP + v * TIME_HEADWAY + v * closing / (2.0 * (ACCEL_GAIN * COMFORT_BRAKE).sqrt());
            ACCEL_GAIN * (free_term - (desired_gap.max(0.0) / gap).powi(2))
        }
    };
    let accel = accel.clamp(-cfg.max_brake, cfg.max_accel);
    let ac = (accel.max(0.0) / cfg.max_accel) as f32;
    let br = ((-accel).max(0.0) / cfg.max_brake) as f32;

    // --- lateral: pure pursuit toward a route point one lookahead ahead
    let lookahead = (PURSUIT_GAIN * v).clamp(PURSUIT_MIN, PURSUIT_MAX);
    let goal = pursuit_goal(&vehicle.route, vehicle.x, vehicle.y, lookahead);
    let dx = goal[0] - vehicle.x;
    let dy = goal[1] - vehicle.y;
    let alpha = dy.atan2(dx) - vehicle.heading;
    let alpha = wrap_angle(alpha);
    let dist = (dx * dx + dy * dy).sqrt().max(1e-6);
    let curvature = 2.0 * alpha.sin() / dist;
    let steer = (curvature * cfg.wheelbase).atan();
    let st = (steer / cfg.max_steer) as f32;

    Ok(Action::new(st, ac, br))
}

/// First route point at least `lookahead` meters from the vehicle, searching
/// forward from the nearest route point.
fn pursuit_goal(route: &[[f64; 2]], x: f64, y: f64, lookahead: f64) -> [f64; 2] {
    let nearest = route
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (a[0] - x).powi(2) + (a[1] - y).powi(2);
            let db = (b[0] - x).powi(2) + (b[1] - y).powi(2);
            da.partial_cmp(&db).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    for p in &route[nearest..] {
        let d = ((p[0] - x).powi(2) + (p[1] - y).powi(2)).sqrt();
        if d >= lookahead {
            return *p;
        }
    }
    *route.last().unwrap()
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a;
    while a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    while a <= -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}
