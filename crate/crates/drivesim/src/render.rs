//! Egocentric top-down semantic grid.
//!
//! The window spans 24 m ahead, 8 m behind and 16 m to each side of the ego,
//! at 1 m per cell, with the ego heading pointing up (row 0 is farthest ahead).

use crate::layout::TrackLayout;
use crate::vehicle::VehicleState;

pub const GRID: usize = 32;
pub const CELLS: usize = GRID * GRID;
pub const NUM_CLASSES: usize = 6;

pub const CLASS_ROAD: u8 = 0;
pub const CLASS_MARKING: u8 = 1;
pub const CLASS_OFFROAD: u8 = 2;
pub const CLASS_OBSTACLE: u8 = 3;
pub const CLASS_EGO: u8 = 4;
pub const CLASS_OUT_OF_RANGE: u8 = 5;

const AHEAD: f64 = 24.0;
const SIDE: f64 = 16.0;
const CELL: f64 = 1.0;
/// Ego footprint half-extents (length, width).
const EGO_HALF_LENGTH: f64 = 2.0;
const EGO_HALF_WIDTH: f64 = 1.0;
/// Half-thickness of the lane-edge marking band.
const MARKING_HALF: f64 = 0.5;

/// Rows and columns whose cells always carry the ego class.
pub const EGO_ROWS: std::ops::RangeInclusive<usize> = 22..=25;
pub const EGO_COLS: std::ops::RangeInclusive<usize> = 15..=16;

/// Forward and rightward offsets (m) of a cell center from the ego.
pub fn cell_offset(row: usize, col: usize) -> (f64, f64) {
    let forward = AHEAD - (row as f64 + 0.5) * CELL;
    let right = -SIDE + (col as f64 + 0.5) * CELL;
    (forward, right)
}

/// Renders one frame as `GRID × GRID` row-major class ids.
pub fn render_semantic(s: &VehicleState, layout: &TrackLayout) -> Vec<u8> {
    let (c, sn) = (s.heading.cos(), s.heading.sin());
    let reach = (AHEAD.max(SIDE * 2.0)).hypot(SIDE) + layout.drivable_half_width() + 5.0;
    let nearby = layout.segments_near(s.x, s.y, reach);
    let half_lane = layout.lane_width / 2.0;
    let half_drivable = layout.drivable_half_width();
    let mut grid = vec![CLASS_OFFROAD; CELLS];
    for row in 0..GRID {
        for col in 0..GRID {
            let (f, r) = cell_offset(row, col);
            let idx = row * GRID + col;
            if f.abs() <= EGO_HALF_LENGTH && r.abs() <= EGO_HALF_WIDTH {
                grid[idx] = CLASS_EGO;
                continue;
            }
            // right of heading (c, sn) is (sn, -c)
            let x = s.x + f * c + r * sn;
            let y = s.y + f * sn - r * c;
            if !layout.in_bounds(x, y) {
                grid[idx] = CLASS_OUT_OF_RANGE;
                continue;
            }
            if layout
                .obstacles
                .iter()
                .any(|o| (x - o.x).hypot(y - o.y) <= o.radius)
            {
                grid[idx] = CLASS_OBSTACLE;
                continue;
            }
            let d = if nearby.is_empty() {
                f64::INFINITY
            } else {
                layout.distance_to_centerline(x, y, &nearby)
            };
            grid[idx] = if (d - half_lane).abs() <= MARKING_HALF {
                CLASS_MARKING
            } else if d <= half_drivable {
                CLASS_ROAD
            } else {
                CLASS_OFFROAD
            };
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{LayoutId, Obstacle};

    #[test]
    fn ego_cells_are_fixed() {
        let l = TrackLayout::randomize(LayoutId::A, 0);
        let g = render_semantic(&l.spawns[0], &l);
        for row in 0..GRID {
            for col in 0..GRID {
                let ego = EGO_ROWS.contains(&row) && EGO_COLS.contains(&col);
                assert_eq!(g[row * GRID + col] == CLASS_EGO, ego, "({row},{col})");
            }
        }
    }

    #[test]
    fn obstacle_ahead_lands_in_upper_half() {
        let mut l = TrackLayout::randomize(LayoutId::A, 0);
        l.obstacles.clear();
        let s = l.spawns[0];
        l.obstacles.push(Obstacle {
            x: s.x + 10.0 * s.heading.cos(),
            y: s.y + 10.0 * s.heading.sin(),
            radius: 1.0,
        });
        let g = render_semantic(&s, &l);
        let upper = &g[..CELLS / 2];
        assert!(upper.contains(&CLASS_OBSTACLE));
        assert!(!g[CELLS / 2..].contains(&CLASS_OBSTACLE));
        // 10 m ahead is row 24 - 10 - 0.5 = 13.5 → rows 12..=14 around the lane center
        assert_eq!(g[13 * GRID + 15], CLASS_OBSTACLE);
    }

    #[test]
    fn road_under_the_ego_and_render_is_pure() {
        let l = TrackLayout::randomize(LayoutId::B, 9);
        let s = l.spawns[1];
        let a = render_semantic(&s, &l);
        let b = render_semantic(&s, &l);
        assert_eq!(a, b);
        // directly ahead of the ego on the centerline
        assert_eq!(a[20 * GRID + 15], CLASS_ROAD);
        assert!(a.iter().all(|&c| (c as usize) < NUM_CLASSES));
        assert!(a.contains(&CLASS_MARKING));
        assert!(a.contains(&CLASS_OFFROAD));
    }
}
