//! The four synthetic route layouts. All roads run along +x with lane
//! centers on the y axis; layouts differ in lane plan, length, cruise
//! speed, and whether a scripted lane-changing sedan is present.

use std::fmt;
use std::str::FromStr;

/// Lane width shared by every layout, meters.
pub const LANE_WIDTH: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum LayoutId {
    Env1,
    Env2,
    Env3,
    Env4,
}

impl LayoutId {
    pub const ALL: [LayoutId; 4] = [LayoutId::Env1, LayoutId::Env2, LayoutId::Env3, LayoutId::Env4];

    pub fn as_str(&self) -> &'static str {
        match self {
            LayoutId::Env1 => "env1",
            LayoutId::Env2 => "env2",
            LayoutId::Env3 => "env3",
            LayoutId::Env4 => "env4",
        }
    }
}

impl fmt::Display for LayoutId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("unknown layout id {0:?}, expected env1..env4")]
pub struct UnknownLayout(pub String);

impl FromStr for LayoutId {
    type Err = UnknownLayout;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "env1" => Ok(LayoutId::Env1),
            "env2" => Ok(LayoutId::Env2),
            "env3" => Ok(LayoutId::Env3),
            "env4" => Ok(LayoutId::Env4),
            other => Err(UnknownLayout(other.to_string())),
        }
    }
}

/// Pre-existing traffic: a sedan cruising at constant speed that slides
/// from one lane center to another over the episode's lane-change
/// duration, starting at `change_start` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SedanScript {
    pub start_x: f64,
    pub speed: f64,
    pub change_start: f64,
    pub lane_from: f64,
    pub lane_to: f64,
}

/// A route layout: the lane set, the polyline the AVUT follows from
/// start to goal, its cruise speed, and optional scripted traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteLayout {
    pub id: LayoutId,
    pub lane_centers: Vec<f64>,
    pub lane_width: f64,
    pub route: Vec<[f64; 2]>,
    pub cruise_speed: f64,
    pub sedan: Option<SedanScript>,
}

impl RouteLayout {
    pub fn route_length(&self) -> f64 {
        self.route
            .windows(2)
            .map(|w| {
                let dx = w[1][0] - w[0][0];
                let dy = w[1][1] - w[0][1];
                dx.hypot(dy)
            })
            .sum()
    }

    /// Index of the lane center nearest to `y`.
    pub fn nearest_lane(&self, y: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &c) in self.lane_centers.iter().enumerate() {
            let d = (y - c).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Build one of the four layouts.
pub fn layout(id: LayoutId) -> RouteLayout {
    match id {
        // One-way road, three lanes; the AVUT starts in the leftmost lane
        // and works its way to the rightmost with two lane changes.
        LayoutId::Env1 => RouteLayout {
            id,
            lane_centers: vec![0.0, LANE_WIDTH, 2.0 * LANE_WIDTH],
            lane_width: LANE_WIDTH,
            route: vec![
                [0.0, 7.0],
                [30.0, 7.0],
                [45.0, 3.5],
                [60.0, 3.5],
                [75.0, 0.0],
                [140.0, 0.0],
            ],
            cruise_speed: 8.0,
            sedan: None,
        },
        // Dual-way road, one lane per direction; straight lane keeping.
        LayoutId::Env2 => RouteLayout {
            id,
            lane_centers: vec![0.0, LANE_WIDTH],
            lane_width: LANE_WIDTH,
            route: vec![[0.0, 0.0], [120.0, 0.0]],
            cruise_speed: 8.0,
            sedan: None,
        },
        // Two-lane road with a slower sedan ahead that cuts into the
        // AVUT's lane early in the episode.
        LayoutId::Env3 => RouteLayout {
            id,
            lane_centers: vec![0.0, LANE_WIDTH],
            lane_width: LANE_WIDTH,
            route: vec![[0.0, 0.0], [130.0, 0.0]],
            cruise_speed: 7.5,
            sedan: Some(SedanScript {
                start_x: 22.0,
                speed: 5.0,
                change_start: 2.0,
                lane_from: LANE_WIDTH,
                lane_to: 0.0,
            }),
        },
        // Dual-way four-lane road (two per direction) with a faster
        // cut-in sedan further ahead.
        LayoutId::Env4 => RouteLayout {
            id,
            lane_centers: vec![0.0, LANE_WIDTH, 2.0 * LANE_WIDTH, 3.0 * LANE_WIDTH],
            lane_width: LANE_WIDTH,
            route: vec![[0.0, 0.0], [150.0, 0.0]],
            cruise_speed: 8.5,
            sedan: Some(SedanScript {
                start_x: 25.0,
                speed: 5.5,
                change_start: 3.0,
                lane_from: LANE_WIDTH,
                lane_to: 0.0,
            }),
        },
    }
}

/// All four layouts in id order.
pub fn all_layouts() -> Vec<RouteLayout> {
    LayoutId::ALL.iter().map(|&id| layout(id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_roundtrip_and_parse() {
        for id in LayoutId::ALL {
            assert_eq!(id.as_str().parse::<LayoutId>().unwrap(), id);
        }
        assert!("env9".parse::<LayoutId>().is_err());
    }

    #[test]
    fn routes_are_long_enough() {
        for l in all_layouts() {
            assert!(l.route_length() > 50.0, "{} too short", l.id);
            assert!(l.route.len() >= 2);
            assert!(l.cruise_speed > 0.0);
        }
    }

    #[test]
    fn nearest_lane_snaps() {
        let l = layout(LayoutId::Env1);
        assert_eq!(l.nearest_lane(0.2), 0);
        assert_eq!(l.nearest_lane(3.4), 1);
        assert_eq!(l.nearest_lane(100.0), 2);
    }
}
