//! Road geometry: a reference line of straight and arc segments with
//! parallel lanes. All queries are analytic (no lookup tables) so
//! projections are exact and deterministic.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentSpec {
    Straight { length: f64 },
    /// Positive sweep turns left.
    Arc { radius: f64, sweep: f64 },
}

#[derive(Debug, Clone)]
struct Segment {
    spec: SegmentSpec,
    /// start pose of the reference line
    x0: f64,
    y0: f64,
    heading0: f64,
    /// arc-length offset of the segment start
    s0: f64,
    length: f64,
}

#[derive(Debug, Clone)]
pub struct Road {
    segments: Vec<Segment>,
    pub lanes: usize,
    pub lane_width: f64,
    total_length: f64,
}

/// Pose on (or offset from) the reference line.
#[derive(Debug, Clone, Copy)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Result of projecting a point onto the road.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    /// arc-length along the reference line
    pub s: f64,
    /// signed lateral offset, positive to the left of travel
    pub lateral: f64,
}

fn left_normal(heading: f64) -> (f64, f64) {
    (-heading.sin(), heading.cos())
}

impl Road {
    pub fn new(specs: &[SegmentSpec], lanes: usize, lane_width: f64) -> Self {
        Self::with_start(specs, lanes, lane_width, Pose { x: 0.0, y: 0.0, heading: 0.0 })
    }

    /// Build the same road starting from an arbitrary pose. Lets tests rotate
    /// or translate an entire scene, road included.
    pub fn with_start(specs: &[SegmentSpec], lanes: usize, lane_width: f64, start: Pose) -> Self {
        let mut segments = Vec::with_capacity(specs.len());
        let (mut x, mut y, mut heading, mut s) = (start.x, start.y, start.heading, 0.0);
        for &spec in specs {
            let length = match spec {
                SegmentSpec::Straight { length } => length,
                SegmentSpec::Arc { radius, sweep } => radius * sweep.abs(),
            };
            segments.push(Segment { spec, x0: x, y0: y, heading0: heading, s0: s, length });
            match spec {
                SegmentSpec::Straight { length } => {
                    x += length * heading.cos();
                    y += length * heading.sin();
                }
                SegmentSpec::Arc { radius, sweep } => {
                    let side = sweep.signum();
                    let (nx, ny) = left_normal(heading);
                    let cx = x + side * radius * nx;
                    let cy = y + side * radius * ny;
                    let phi0 = (y - cy).atan2(x - cx);
                    let phi = phi0 + sweep;
                    x = cx + radius * phi.cos();
                    y = cy + radius * phi.sin();
                    heading += sweep;
                }
            }
            s += length;
        }
        Self { segments, lanes, lane_width, total_length: s }
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn half_width(&self) -> f64 {
        self.lanes as f64 * self.lane_width / 2.0
    }

    /// Signed centerline offset of a lane (0 is the rightmost lane).
    pub fn lane_offset(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width - self.half_width()
    }

    /// Pose at arc-length `s` with lateral offset (left positive).
    pub fn pose_at(&self, s: f64, offset: f64) -> Pose {
        let s = s.clamp(0.0, self.total_length);
        let seg = self.segment_at(s);
        let ds = s - seg.s0;
        let (x, y, heading) = match seg.spec {
            SegmentSpec::Straight { .. } => (
                seg.x0 + ds * seg.heading0.cos(),
                seg.y0 + ds * seg.heading0.sin(),
                seg.heading0,
            ),
            SegmentSpec::Arc { radius, sweep } => {
                let side = sweep.signum();
                let (nx, ny) = left_normal(seg.heading0);
                let cx = seg.x0 + side * radius * nx;
                let cy = seg.y0 + side * radius * ny;
                let phi0 = (seg.y0 - cy).atan2(seg.x0 - cx);
                let t = ds / radius;
                let phi = phi0 + side * t;
                (cx + radius * phi.cos(), cy + radius * phi.sin(), seg.heading0 + side * t)
            }
        };
        let (nx, ny) = left_normal(heading);
        Pose { x: x + offset * nx, y: y + offset * ny, heading }
    }

    fn segment_at(&self, s: f64) -> &Segment {
        for seg in &self.segments {
            if s <= seg.s0 + seg.length {
                return seg;
            }
        }
        self.segments.last().expect("road has at least one segment")
    }

    /// Project a point onto the reference line.
    pub fn project(&self, x: f64, y: f64) -> Projection {
        let mut best = Projection { s: 0.0, lateral: f64::INFINITY };
        let mut best_dist = f64::INFINITY;
        for seg in &self.segments {
            let (s_local, lateral) = match seg.spec {
                SegmentSpec::Straight { .. } => {
                    let dx = x - seg.x0;
                    let dy = y - seg.y0;
                    let along = dx * seg.heading0.cos() + dy * seg.heading0.sin();
                    let (nx, ny) = left_normal(seg.heading0);
                    (along.clamp(0.0, seg.length), dx * nx + dy * ny)
                }
                SegmentSpec::Arc { radius, sweep } => {
                    let side = sweep.signum();
                    let (nx, ny) = left_normal(seg.heading0);
                    let cx = seg.x0 + side * radius * nx;
                    let cy = seg.y0 + side * radius * ny;
                    let vx = x - cx;
                    let vy = y - cy;
                    let r = (vx * vx + vy * vy).sqrt();
                    let phi0 = (seg.y0 - cy).atan2(seg.x0 - cx);
                    let mut dphi = (vy.atan2(vx) - phi0) * side;
                    while dphi < -std::f64::consts::PI {
                        dphi += 2.0 * std::f64::consts::PI;
                    }
                    while dphi > std::f64::consts::PI {
                        dphi -= 2.0 * std::f64::consts::PI;
                    }
                    let t = (dphi * radius).clamp(0.0, seg.length);
                    let lateral = side * (radius - r);
                    (t, lateral)
                }
            };
            // distance from the clamped on-segment point
            let p = {
                let seg_s = seg.s0 + s_local;
                self.pose_at(seg_s, 0.0)
            };
            let d2 = (p.x - x).powi(2) + (p.y - y).powi(2);
            if d2 < best_dist {
                best_dist = d2;
                best = Projection { s: seg.s0 + s_local, lateral };
            }
        }
        best
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let p = self.project(x, y);
        p.lateral.abs() <= self.half_width() && p.s > 0.0 && p.s < self.total_length
    }

    /// Lane centerline sampled every `spacing` meters, start to end.
    pub fn lane_route(&self, lane: usize, spacing: f64) -> Vec<[f64; 2]> {
        let offset = self.lane_offset(lane);
        let n = (self.total_length / spacing).floor() as usize;
        let mut pts = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let p = self.pose_at(i as f64 * spacing, offset);
            pts.push([p.x, p.y]);
        }
        pts
    }
}
