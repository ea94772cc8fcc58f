use std::sync::Arc;

use super::{SceneSample, TrajectoryHistory, VehicleState};
use crate::error::{Error, Result};
use crate::sim::{wrap_angle, AbsState, EpisodeLog, Road};

/// Frame-of-reference view of one sampled scene: the selected vehicles'
/// absolute window states plus the ego pose at the sampling time. This is
/// what the rasterizer consumes — per-step relative histories cannot be
/// painted into a single image, so the frame keeps the absolute data.
#[derive(Debug, Clone)]
pub struct SceneFrame {
    pub road: Arc<Road>,
    /// ego pose at the sampling time t
    pub ego: AbsState,
    /// selected vehicles (0 = ego), each with `h` window states
    pub windows: Vec<Vec<AbsState>>,
    pub labels: Vec<u8>,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
}

impl SceneFrame {
    /// Map an absolute position into the ego frame at time t.
    pub fn to_ego(&self, x: f64, y: f64) -> [f64; 2] {
        let dx = x - self.ego.x;
        let dy = y - self.ego.y;
        let (sin, cos) = self.ego.heading.sin_cos();
        [cos * dx + sin * dy, -sin * dx + cos * dy]
    }

    /// Heading expressed in the ego frame at time t.
    pub fn heading_to_ego(&self, heading: f64) -> f64 {
        wrap_angle(heading - self.ego.heading)
    }
}

#[derive(Debug, Clone)]
pub struct AssembleParams {
    pub history: usize,
    pub obs_range: f64,
    pub route_len: usize,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
}

/// Cut a sample at timestep `t`: the `n_normal` nearest normal vehicles plus
/// every ghost, all states transformed to the per-step ego frame, the next
/// route waypoints in the ego frame at `t`, and the expert action.
///
/// Returns the sample without rasters plus the [`SceneFrame`] needed to
/// rasterize it.
pub fn assemble_sample(
    episode: &EpisodeLog,
    road: &Arc<Road>,
    t: usize,
    n_normal: usize,
    params: &AssembleParams,
) -> Result<(SceneSample, SceneFrame)> {
    let h = params.history;
    if t + 1 < h || t >= episode.len() {
        return Err(Error::Windowing(format!(
            "need {h} steps of history before t={t} (episode length {})",
            episode.len()
        )));
    }

    let now = &episode.steps[t];
    let ego = now[0];

    // nearest normal neighbors within observation range, stable order
    let mut candidates: Vec<(usize, f64)> = episode
        .vehicles
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, m)| !m.is_ghost)
        .map(|(i, _)| {
            let s = now[i];
            (i, ((s.x - ego.x).powi(2) + (s.y - ego.y).powi(2)).sqrt())
        })
        .filter(|(_, d)| *d <= params.obs_range)
        .collect();
    candidates.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    if candidates.len() < n_normal {
        return Err(Error::Selection(format!(
            "only {} normal vehicles within {}m, need {n_normal}",
            candidates.len(),
            params.obs_range
        )));
    }

    let mut selected: Vec<usize> = vec![0];
    selected.extend(candidates.iter().take(n_normal).map(|(i, _)| *i));
    let mut ghosts: Vec<(usize, f64)> = episode
        .vehicles
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_ghost)
        .map(|(i, _)| {
            let s = now[i];
            (i, ((s.x - ego.x).powi(2) + (s.y - ego.y).powi(2)).sqrt())
        })
        .collect();
    ghosts.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    selected.extend(ghosts.iter().map(|(i, _)| *i));

    let labels: Vec<u8> = selected
        .iter()
        .map(|&i| u8::from(episode.vehicles[i].is_ghost))
        .collect();

    // per-step ego-relative histories
    let window = (t + 1 - h)..=t;
    let mut histories = Vec::with_capacity(selected.len());
    let mut windows = Vec::with_capacity(selected.len());
    for &i in &selected {
        let mut states = Vec::with_capacity(h);
        let mut abs_window = Vec::with_capacity(h);
        for step in window.clone() {
            let e = episode.steps[step][0];
            let s = episode.steps[step][i];
            abs_window.push(s);
            states.push(relative_state(&e, &s));
        }
        windows.push(abs_window);
        histories.push(TrajectoryHistory(states));
    }

    let route = route_ahead(&episode.ego_route, &ego, params.route_len)?;
    let n_ghost = ghosts.len() as u32;
    let sample = SceneSample {
        histories,
        rasters: Vec::new(),
        route,
        expert: episode.ego_actions[t],
        labels: labels.clone(),
        n_normal: n_normal as u32,
        n_ghost,
    };
    let frame = SceneFrame {
        road: road.clone(),
        ego,
        windows,
        labels,
        vehicle_length: params.vehicle_length,
        vehicle_width: params.vehicle_width,
    };
    Ok((sample, frame))
}

/// State of `other` relative to `ego`, both taken at the same timestep, in
/// the instantaneous ego frame (ego heading along +x).
fn relative_state(ego: &AbsState, other: &AbsState) -> VehicleState {
    let (sin, cos) = ego.heading.sin_cos();
    let dx = other.x - ego.x;
    let dy = other.y - ego.y;
    let (evx, evy) = ego.velocity();
    let (ovx, ovy) = other.velocity();
    let dvx = ovx - evx;
    let dvy = ovy - evy;
    VehicleState {
        x: (cos * dx + sin * dy) as f32,
        y: (-sin * dx + cos * dy) as f32,
        vx: (cos * dvx + sin * dvy) as f32,
        vy: (-sin * dvx + cos * dvy) as f32,
        theta: wrap_angle(other.heading - ego.heading) as f32,
    }
}

/// The next `route_len` waypoints strictly ahead of the ego, ego frame.
/// Near the route end the last waypoint repeats so the length is fixed.
fn route_ahead(route: &[[f64; 2]], ego: &AbsState, route_len: usize) -> Result<Vec<[f32; 2]>> {
    if route.is_empty() {
        return Err(Error::Routing("episode carries an empty ego route".into()));
    }
    let nearest = route
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (a[0] - ego.x).powi(2) + (a[1] - ego.y).powi(2);
            let db = (b[0] - ego.x).powi(2) + (b[1] - ego.y).powi(2);
            da.partial_cmp(&db).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let (sin, cos) = ego.heading.sin_cos();
    let mut out = Vec::with_capacity(route_len);
    for k in 1..=route_len {
        let idx = (nearest + k).min(route.len() - 1);
        let dx = route[idx][0] - ego.x;
        let dy = route[idx][1] - ego.y;
        out.push([(cos * dx + sin * dy) as f32, (-sin * dx + cos * dy) as f32]);
    }
    Ok(out)
}
