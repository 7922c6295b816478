//! Track geometry: closed-loop centerlines, obstacles and spawn poses.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use curio_diffcore::SplitRng;

use crate::error::SimError;
use crate::vehicle::VehicleState;

/// The two track families. `A` plays the role of the training map, `B` the held-out one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayoutId {
    A,
    B,
}

impl LayoutId {
    pub fn as_str(self) -> &'static str {
        match self {
            LayoutId::A => "a",
            LayoutId::B => "b",
        }
    }
}

impl fmt::Display for LayoutId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayoutId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(LayoutId::A),
            "b" => Ok(LayoutId::B),
            other => Err(SimError::UnknownLayout(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Projection of a point onto the centerline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathPoint {
    /// Arc length from waypoint 0 along the travel direction, in `[0, length)`.
    pub s: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub lateral: f64,
    /// Travel direction of the local segment, radians.
    pub direction: f64,
    pub segment: usize,
}

/// Closed-loop single-lane track. Travel runs in waypoint order and wraps
/// from the last waypoint back to the first.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackLayout {
    pub id: LayoutId,
    pub centerline: Vec<[f64; 2]>,
    pub lane_width: f64,
    /// Extra drivable width beyond each lane edge.
    pub margin: f64,
    pub obstacles: Vec<Obstacle>,
    pub spawns: Vec<VehicleState>,
    cumulative: Vec<f64>,
    length: f64,
    /// `[min_x, min_y, max_x, max_y]` of the mapped area.
    bounds: [f64; 4],
}

pub const DEFAULT_LANE_WIDTH: f64 = 5.0;
pub const DEFAULT_MARGIN: f64 = 1.0;
const TARGET_SPACING: f64 = 2.5;
const SPAWN_COUNT: usize = 4;
/// Mapped area beyond the outermost drivable edge.
const BOUNDS_PAD: f64 = 8.0;
/// Vehicle half-width used by the lane-width invariant.
pub const VEHICLE_HALF_WIDTH: f64 = 0.9;

struct Family {
    radius: f64,
    /// (harmonic, min amplitude, max amplitude) as fractions of `radius`.
    harmonics: &'static [(f64, f64, f64)],
    obstacles: (usize, usize),
}

fn family(id: LayoutId) -> Family {
    match id {
        LayoutId::A => Family {
            radius: 55.0,
            harmonics: &[(2.0, 0.05, 0.15), (3.0, 0.0, 0.05)],
            obstacles: (2, 4),
        },
        LayoutId::B => Family {
            radius: 45.0,
            harmonics: &[(3.0, 0.06, 0.12), (4.0, 0.02, 0.05), (5.0, 0.0, 0.025)],
            obstacles: (4, 7),
        },
    }
}

impl TrackLayout {
    /// Builds a layout from a closed centerline, deriving arc lengths, bounds and spawns.
    pub fn new(
        id: LayoutId,
        centerline: Vec<[f64; 2]>,
        lane_width: f64,
        margin: f64,
        obstacles: Vec<Obstacle>,
    ) -> Result<Self, SimError> {
        if centerline.len() < 3 {
            return Err(SimError::InvalidLayout("need at least 3 waypoints".into()));
        }
        let n = centerline.len();
        let mut cumulative = Vec::with_capacity(n + 1);
        cumulative.push(0.0);
        for i in 0..n {
            let [x0, y0] = centerline[i];
            let [x1, y1] = centerline[(i + 1) % n];
            cumulative.push(cumulative[i] + (x1 - x0).hypot(y1 - y0));
        }
        let length = cumulative[n];
        let edge = lane_width / 2.0 + margin + BOUNDS_PAD;
        let mut bounds = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for [x, y] in &centerline {
            bounds[0] = bounds[0].min(x - edge);
            bounds[1] = bounds[1].min(y - edge);
            bounds[2] = bounds[2].max(x + edge);
            bounds[3] = bounds[3].max(y + edge);
        }
        let mut layout = Self {
            id,
            centerline,
            lane_width,
            margin,
            obstacles,
            spawns: Vec::new(),
            cumulative,
            length,
            bounds,
        };
        layout.spawns = (0..SPAWN_COUNT)
            .map(|k| {
                let s = layout.length * k as f64 / SPAWN_COUNT as f64;
                let ([x, y], dir) = layout.point_at(s);
                VehicleState::new(x, y, dir, 0.0)
            })
            .collect();
        layout.validate()?;
        Ok(layout)
    }

    /// Regenerates curvature and obstacles for a family from `seed`.
    pub fn randomize(id: LayoutId, seed: u64) -> Self {
        let fam = family(id);
        let mut rng = SplitRng::seed_from(seed ^ (id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let harmonics: Vec<(f64, f64, f64)> = fam
            .harmonics
            .iter()
            .map(|&(k, lo, hi)| (k, rng.uniform(lo, hi.max(lo + 1e-9)), rng.uniform(0.0, 2.0 * PI)))
            .collect();
        let radius_at = |theta: f64| {
            fam.radius
                * (1.0
                    + harmonics
                        .iter()
                        .map(|&(k, a, phase)| a * (k * theta + phase).sin())
                        .sum::<f64>())
        };
        // dense polar trace, then resample at near-uniform arc spacing
        let dense_n = 4096;
        let dense: Vec<[f64; 2]> = (0..dense_n)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / dense_n as f64;
                let r = radius_at(th);
                [r * th.cos(), r * th.sin()]
            })
            .collect();
        let mut arc = vec![0.0; dense_n + 1];
        for i in 0..dense_n {
            let [x0, y0] = dense[i];
            let [x1, y1] = dense[(i + 1) % dense_n];
            arc[i + 1] = arc[i] + (x1 - x0).hypot(y1 - y0);
        }
        let total = arc[dense_n];
        let count = (total / TARGET_SPACING).round() as usize;
        let mut centerline = Vec::with_capacity(count);
        let mut j = 0;
        for k in 0..count {
            let s = total * k as f64 / count as f64;
            while arc[j + 1] < s {
                j += 1;
            }
            let f = (s - arc[j]) / (arc[j + 1] - arc[j]);
            let [x0, y0] = dense[j];
            let [x1, y1] = dense[(j + 1) % dense_n];
            centerline.push([x0 + f * (x1 - x0), y0 + f * (y1 - y0)]);
        }

        let mut layout = Self::new(id, centerline, DEFAULT_LANE_WIDTH, DEFAULT_MARGIN, Vec::new())
            .expect("generated layouts satisfy the invariants");
        let (lo, hi) = fam.obstacles;
        let count = lo + rng.below(hi - lo + 1);
        layout.obstacles = layout.place_obstacles(count, &mut rng);
        layout
    }

    fn place_obstacles(&self, count: usize, rng: &mut SplitRng) -> Vec<Obstacle> {
        let spawn_s: Vec<f64> = (0..SPAWN_COUNT)
            .map(|k| self.length * k as f64 / SPAWN_COUNT as f64)
            .collect();
        let mut placed: Vec<(f64, Obstacle)> = Vec::new();
        let mut attempts = 0;
        while placed.len() < count && attempts < 1000 {
            attempts += 1;
            let s = rng.uniform(0.0, self.length);
            // keep the first stretch after each spawn clear
            let near_spawn = spawn_s.iter().any(|&sp| {
                let ahead = (s - sp).rem_euclid(self.length);
                ahead < 30.0 || ahead > self.length - 12.0
            });
            let near_other = placed.iter().any(|(ps, _)| {
                let d = (s - ps).abs();
                d.min(self.length - d) < 20.0
            });
            if near_spawn || near_other {
                continue;
            }
            let side = if rng.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            let offset = side * rng.uniform(0.8, 1.8);
            let ([x, y], dir) = self.point_at(s);
            // left normal of the travel direction
            let (nx, ny) = (-dir.sin(), dir.cos());
            placed.push((
                s,
                Obstacle {
                    x: x + offset * nx,
                    y: y + offset * ny,
                    radius: 1.0,
                },
            ));
        }
        placed.sort_by(|a, b| a.0.total_cmp(&b.0));
        placed.into_iter().map(|(_, o)| o).collect()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn bounds(&self) -> [f64; 4] {
        self.bounds
    }

    pub fn in_bounds(&self, x: f64, y: f64) -> bool {
        x >= self.bounds[0] && x <= self.bounds[2] && y >= self.bounds[1] && y <= self.bounds[3]
    }

    /// Half-width of the drivable corridor.
    pub fn drivable_half_width(&self) -> f64 {
        self.lane_width / 2.0 + self.margin
    }

    fn segment(&self, i: usize) -> ([f64; 2], [f64; 2]) {
        let n = self.centerline.len();
        (self.centerline[i], self.centerline[(i + 1) % n])
    }

    /// Centerline point and travel direction at arc length `s` (wrapped).
    pub fn point_at(&self, s: f64) -> ([f64; 2], f64) {
        let s = s.rem_euclid(self.length);
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.centerline.len() - 1),
            Err(i) => i - 1,
        };
        let (a, b) = self.segment(i);
        let seg_len = self.cumulative[i + 1] - self.cumulative[i];
        let f = if seg_len > 0.0 { (s - self.cumulative[i]) / seg_len } else { 0.0 };
        let dir = (b[1] - a[1]).atan2(b[0] - a[0]);
        ([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])], dir)
    }

    /// Nearest centerline point to `(x, y)`.
    pub fn project(&self, x: f64, y: f64) -> PathPoint {
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for i in 0..self.centerline.len() {
            let (a, b) = self.segment(i);
            let (d2, t) = point_segment(x, y, a, b);
            if d2 < best.0 {
                best = (d2, i, t);
            }
        }
        let (_, i, t) = best;
        let (a, b) = self.segment(i);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let (px, py) = (a[0] + t * dx, a[1] + t * dy);
        let seg_len = dx.hypot(dy);
        // cross product sign: positive when the point lies to the left
        let cross = dx * (y - py) - dy * (x - px);
        let dist = (x - px).hypot(y - py);
        PathPoint {
            s: (self.cumulative[i] + t * seg_len).rem_euclid(self.length),
            lateral: if cross >= 0.0 { dist } else { -dist },
            direction: dy.atan2(dx),
            segment: i,
        }
    }

    /// Unsigned distance from `(x, y)` to the centerline, scanning only `segments`.
    pub fn distance_to_centerline(&self, x: f64, y: f64, segments: &[usize]) -> f64 {
        segments
            .iter()
            .map(|&i| {
                let (a, b) = self.segment(i);
                point_segment(x, y, a, b).0
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// Segments with some point within `radius` of `(x, y)`.
    pub fn segments_near(&self, x: f64, y: f64, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        (0..self.centerline.len())
            .filter(|&i| {
                let (a, b) = self.segment(i);
                point_segment(x, y, a, b).0 <= r2
            })
            .collect()
    }

    /// Signed forward progress along the loop from `from` to `to`, taking the short way round.
    pub fn progress(&self, from: f64, to: f64) -> f64 {
        let mut d = (to - from).rem_euclid(self.length);
        if d > self.length / 2.0 {
            d -= self.length;
        }
        d
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.centerline.len();
        for i in 0..n {
            let (a, b) = self.segment(i);
            let d = (b[0] - a[0]).hypot(b[1] - a[1]);
            if !(1.0..=5.0).contains(&d) {
                return Err(SimError::InvalidLayout(format!(
                    "waypoint spacing {d:.3} m at index {i} outside [1, 5]"
                )));
            }
        }
        if !(self.lane_width > 2.0 * VEHICLE_HALF_WIDTH) {
            return Err(SimError::InvalidLayout(format!(
                "lane width {} too narrow for the vehicle",
                self.lane_width
            )));
        }
        if self.margin < 0.0 {
            return Err(SimError::InvalidLayout("negative margin".into()));
        }
        let half = self.drivable_half_width();
        for o in &self.obstacles {
            if !(o.radius > 0.0) {
                return Err(SimError::InvalidLayout("obstacle radius must be positive".into()));
            }
            if self.project(o.x, o.y).lateral.abs() > half {
                return Err(SimError::InvalidLayout(format!(
                    "obstacle at ({:.2}, {:.2}) is off the drivable area",
                    o.x, o.y
                )));
            }
        }
        Ok(())
    }

    /// Parses the plain-text layout format: `WP x y`, `LANEWIDTH w`, `OBS x y r`,
    /// one directive per line; `#` starts a comment. Waypoints form a closed loop.
    pub fn parse(text: &str, id: LayoutId) -> Result<Self, SimError> {
        let mut wps = Vec::new();
        let mut obstacles = Vec::new();
        let mut lane_width = DEFAULT_LANE_WIDTH;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or("");
            let nums: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let nums = nums.map_err(|e| SimError::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            let want = |n: usize| -> Result<(), SimError> {
                if nums.len() == n && nums.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(SimError::Parse {
                        line: lineno + 1,
                        msg: format!("{key} expects {n} finite numbers"),
                    })
                }
            };
            match key {
                "WP" => {
                    want(2)?;
                    wps.push([nums[0], nums[1]]);
                }
                "LANEWIDTH" => {
                    want(1)?;
                    lane_width = nums[0];
                }
                "OBS" => {
                    want(3)?;
                    obstacles.push(Obstacle {
                        x: nums[0],
                        y: nums[1],
                        radius: nums[2],
                    });
                }
                other => {
                    return Err(SimError::Parse {
                        line: lineno + 1,
                        msg: format!("unknown directive `{other}`"),
                    })
                }
            }
        }
        Self::new(id, wps, lane_width, DEFAULT_MARGIN, obstacles)
    }

    pub fn load(path: &std::path::Path, id: LayoutId) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(e.to_string()))?;
        Self::parse(&text, id)
    }

    /// Serializes to the text format accepted by [`TrackLayout::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("LANEWIDTH {}\n", self.lane_width);
        for [x, y] in &self.centerline {
            out.push_str(&format!("WP {x} {y}\n"));
        }
        for o in &self.obstacles {
            out.push_str(&format!("OBS {} {} {}\n", o.x, o.y, o.radius));
        }
        out
    }
}

/// Squared distance from `(x, y)` to segment `ab`, and the clamped projection parameter.
fn point_segment(x: f64, y: f64, a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((x - a[0]) * dx + (y - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (px, py) = (a[0] + t * dx, a[1] + t * dy);
    ((x - px).powi(2) + (y - py).powi(2), t)
}
