use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::expert::expert_action;
use super::road::{Road, SegmentSpec};
use crate::error::{Error, Result};

/// How initial vehicle positions are drawn.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Placement {
    /// Anywhere along the road.
    Spread,
    /// Vehicle 0 first, the rest within `radius` meters of it along the road.
    NearEgo { radius: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub segments: Vec<SegmentSpec>,
    pub lanes: usize,
    pub lane_width: f64,
    pub dt: f64,
    /// minimum along-lane center distance between same-lane vehicles at spawn
    pub min_spacing: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub target_speed_min: f64,
    pub target_speed_max: f64,
    pub placement: Placement,
    /// keep spawns this far from the road ends
    pub end_margin: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub wheelbase: f64,
    pub max_steer: f64,
    pub max_accel: f64,
    pub max_brake: f64,
    /// route waypoint spacing in meters
    pub waypoint_spacing: f64,
    /// start pose of the road reference line
    pub origin_x: f64,
    pub origin_y: f64,
    pub origin_heading: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            segments: vec![
                SegmentSpec::Straight { length: 500.0 },
                SegmentSpec::Arc { radius: 110.0, sweep: 0.7 },
            ],
            lanes: 4,
            lane_width: 3.5,
            dt: 0.1,
            min_spacing: 11.0,
            speed_min: 3.0,
            speed_max: 13.0,
            target_speed_min: 7.0,
            target_speed_max: 13.0,
            placement: Placement::Spread,
            end_margin: 45.0,
            vehicle_length: 4.5,
            vehicle_width: 2.0,
            wheelbase: 2.7,
            max_steer: 0.55,
            max_accel: 3.0,
            max_brake: 6.0,
            waypoint_spacing: 2.0,
            origin_x: 0.0,
            origin_y: 0.0,
            origin_heading: 0.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || self.dt > 0.5 {
            return Err(Error::Config(format!("dt must be in (0, 0.5], got {}", self.dt)));
        }
        if self.lanes == 0 || self.lane_width <= 0.0 {
            return Err(Error::Config("need at least one lane of positive width".into()));
        }
        if self.segments.is_empty() {
            return Err(Error::Config("road needs at least one segment".into()));
        }
        Ok(())
    }

    pub fn build_road(&self) -> Road {
        Road::with_start(
            &self.segments,
            self.lanes,
            self.lane_width,
            crate::sim::Pose { x: self.origin_x, y: self.origin_y, heading: self.origin_heading },
        )
    }
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub target_speed: f64,
    pub route: Arc<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub road: Arc<Road>,
    pub config: WorldConfig,
    pub vehicles: Vec<Vehicle>,
    pub time: f64,
}

/// Place `n_vehicles` collision-free in lanes with randomized speeds.
/// Vehicle 0 is the designated ego.
pub fn world_create(config: &WorldConfig, n_vehicles: usize, rng: &mut ChaCha8Rng) -> Result<WorldState> {
    config.validate()?;
    if n_vehicles == 0 {
        return Err(Error::Usage("n_vehicles must be >= 1".into()));
    }
    let road = Arc::new(config.build_road());
    let usable = road.total_length() - 2.0 * config.end_margin;
    if usable < config.min_spacing {
        return Err(Error::Placement("road shorter than spawn margins".into()));
    }
    // capacity guard: same-lane spacing bounds how many vehicles fit
    let capacity = ((usable / config.min_spacing) as usize) * config.lanes;
    if n_vehicles > capacity {
        return Err(Error::Placement(format!(
            "cannot place {n_vehicles} vehicles (capacity {capacity})"
        )));
    }

    let routes: Vec<Arc<Vec<[f64; 2]>>> = (0..config.lanes)
        .map(|lane| Arc::new(road.lane_route(lane, config.waypoint_spacing)))
        .collect();

    let mut placed: Vec<(usize, f64)> = Vec::new(); // (lane, s)
    let mut vehicles = Vec::with_capacity(n_vehicles);
    let s_range = match config.placement {
        Placement::Spread => (config.end_margin, road.total_length() - config.end_margin),
        Placement::NearEgo { radius } => {
            let lo = config.end_margin + radius;
            let hi = road.total_length() - config.end_margin - radius;
            if hi <= lo {
                return Err(Error::Placement("road too short for near-ego placement".into()));
            }
            (lo, hi)
        }
    };

    for idx in 0..n_vehicles {
        let mut attempts = 0;
        let (lane, s) = loop {
            attempts += 1;
            if attempts > 400 {
                return Err(Error::Placement(format!(
                    "no collision-free slot for vehicle {idx} after {attempts} attempts"
                )));
            }
            let lane = rng.random_range(0..config.lanes);
            let s = match (config.placement, idx) {
                (_, 0) | (Placement::Spread, _) => rng.random_range(s_range.0..s_range.1),
                (Placement::NearEgo { radius }, _) => {
                    let ego_s = placed[0].1;
                    rng.random_range((ego_s - radius).max(config.end_margin)
                        ..(ego_s + radius).min(road.total_length() - config.end_margin))
                }
            };
            let clear = placed
                .iter()
                .all(|&(l, ps)| l != lane || (ps - s).abs() >= config.min_spacing);
            if clear {
                break (lane, s);
            }
        };
        placed.push((lane, s));
        let pose = road.pose_at(s, road.lane_offset(lane));
        let target_speed = rng.random_range(config.target_speed_min..config.target_speed_max);
        let speed = rng.random_range(config.speed_min..config.speed_max);
        vehicles.push(Vehicle {
            x: pose.x,
            y: pose.y,
            heading: pose.heading,
            speed,
            target_speed,
            route: routes[lane].clone(),
        });
    }

    Ok(WorldState { road, config: config.clone(), vehicles, time: 0.0 })
}

/// Rebuild a world from recorded absolute states (used by replay checks).
/// Only the vehicle whose route is supplied can be queried for an action.
pub fn world_from_snapshot(
    config: &WorldConfig,
    states: &[(f64, f64, f64, f64)],
    ego_route: Vec<[f64; 2]>,
    ego_target_speed: f64,
) -> WorldState {
    let road = Arc::new(config.build_road());
    let empty = Arc::new(Vec::new());
    let ego_route = Arc::new(ego_route);
    let vehicles = states
        .iter()
        .enumerate()
        .map(|(i, &(x, y, heading, speed))| Vehicle {
            x,
            y,
            heading,
            speed,
            target_speed: ego_target_speed,
            route: if i == 0 { ego_route.clone() } else { empty.clone() },
        })
        .collect();
    WorldState { road, config: config.clone(), vehicles, time: 0.0 }
}

/// Advance every vehicle one step of kinematic bicycle integration under its
/// own expert action. Actions are computed from the same pre-step snapshot.
pub fn step(world: &mut WorldState, dt: f64) -> Result<()> {
    if dt <= 0.0 || dt > 0.5 {
        return Err(Error::Usage(format!("dt must be in (0, 0.5], got {dt}")));
    }
    let actions: Vec<_> = (0..world.vehicles.len())
        .map(|i| expert_action(world, i))
        .collect::<Result<_>>()?;
    let cfg = &world.config;
    for (vehicle, action) in world.vehicles.iter_mut().zip(actions) {
        let steer = f64::from(action.st) * cfg.max_steer;
        let accel = f64::from(action.ac) * cfg.max_accel - f64::from(action.br) * cfg.max_brake;
        vehicle.x += vehicle.speed * vehicle.heading.cos() * dt;
        vehicle.y += vehicle.speed * vehicle.heading.sin() * dt;
        vehicle.heading += vehicle.speed / cfg.wheelbase * steer.tan() * dt;
        vehicle.speed = (vehicle.speed + accel * dt).max(0.0);
    }
    world.time += dt;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    #[test]
    fn single_vehicle_sits_on_a_lane_center() {
        let cfg = WorldConfig::default();
        let world = world_create(&cfg, 1, &mut derive_rng(1, "world/single")).unwrap();
        let v = &world.vehicles[0];
        let proj = world.road.project(v.x, v.y);
        let centered = (0..cfg.lanes)
            .any(|l| (proj.lateral - world.road.lane_offset(l)).abs() < 1e-9);
        assert!(centered, "vehicle off lane center: lateral {}", proj.lateral);
    }

    #[test]
    fn same_seed_is_deterministic() {
        let cfg = WorldConfig::default();
        let a = world_create(&cfg, 12, &mut derive_rng(9, "world/det")).unwrap();
        let b = world_create(&cfg, 12, &mut derive_rng(9, "world/det")).unwrap();
        for (va, vb) in a.vehicles.iter().zip(&b.vehicles) {
            assert_eq!(va.x.to_bits(), vb.x.to_bits());
            assert_eq!(va.y.to_bits(), vb.y.to_bits());
            assert_eq!(va.speed.to_bits(), vb.speed.to_bits());
        }
    }

    #[test]
    fn fifty_vehicles_respect_min_spacing() {
        let cfg = WorldConfig::default();
        let world = world_create(&cfg, 50, &mut derive_rng(3, "world/fifty")).unwrap();
        let proj: Vec<_> = world
            .vehicles
            .iter()
            .map(|v| world.road.project(v.x, v.y))
            .collect();
        for i in 0..proj.len() {
            for j in (i + 1)..proj.len() {
                let same_lane = (proj[i].lateral - proj[j].lateral).abs() < cfg.lane_width / 2.0;
                if same_lane {
                    let gap = (proj[i].s - proj[j].s).abs();
                    assert!(gap >= cfg.min_spacing, "vehicles {i},{j} gap {gap}");
                }
            }
        }
    }

    #[test]
    fn impossible_placement_is_an_error() {
        let mut cfg = WorldConfig::default();
        cfg.segments = vec![SegmentSpec::Straight { length: 120.0 }];
        cfg.lanes = 1;
        let res = world_create(&cfg, 40, &mut derive_rng(4, "world/full"));
        assert!(matches!(res, Err(Error::Placement(_))));
    }

    #[test]
    fn zero_speed_zero_throttle_stays_put() {
        let cfg = WorldConfig::default();
        let mut world = world_create(&cfg, 1, &mut derive_rng(5, "world/still")).unwrap();
        world.vehicles[0].speed = 0.0;
        world.vehicles[0].target_speed = 0.0;
        let (x, y) = (world.vehicles[0].x, world.vehicles[0].y);
        step(&mut world, 0.1).unwrap();
        assert_eq!(world.vehicles[0].x, x);
        assert_eq!(world.vehicles[0].y, y);
    }

    #[test]
    fn straight_constant_speed_matches_closed_form() {
        let mut cfg = WorldConfig::default();
        cfg.segments = vec![SegmentSpec::Straight { length: 400.0 }];
        let mut world = world_create(&cfg, 1, &mut derive_rng(6, "world/cf")).unwrap();
        // on a free straight road at the target speed the expert holds speed
        let v = &mut world.vehicles[0];
        v.speed = v.target_speed;
        let (x0, v0) = (v.x, v.speed);
        step(&mut world, 0.1).unwrap();
        let moved = world.vehicles[0].x - x0;
        assert!((moved - v0 * 0.1).abs() < 1e-6, "moved {moved}, expected {}", v0 * 0.1);
    }

    #[test]
    fn invalid_dt_rejected() {
        let cfg = WorldConfig::default();
        let mut world = world_create(&cfg, 1, &mut derive_rng(7, "world/dt")).unwrap();
        assert!(step(&mut world, 0.0).is_err());
        assert!(step(&mut world, 0.6).is_err());
    }
}
