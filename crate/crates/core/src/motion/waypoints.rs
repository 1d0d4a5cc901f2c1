use crate::geometry::{polyline_length, polyline_point_at, project_onto_polyline, Pose, Vec2};
use crate::map::{LaneletMap, MapError};
use crate::route::Route;

/// Concatenated centerlines of the route, without repeated joint points.
pub fn route_centerline(route: &Route, map: &LaneletMap) -> Result<Vec<Vec2>, MapError> {
    let mut points: Vec<Vec2> = Vec::new();
    for id in &route.lanelet_ids {
        for &p in map.lanelet(*id)?.centerline() {
            if points.last().map_or(true, |q| q.distance(p) > 1e-9) {
                points.push(p);
            }
        }
    }
    Ok(points)
}

/// Poses along the route centerline at most `spacing` apart, headings
/// tangent to the centerline. With a `start` pose the sequence begins at
/// that pose and continues from its projection onto the centerline.
pub fn route_to_waypoints(
    route: &Route,
    map: &LaneletMap,
    spacing: f64,
    start: Option<Pose>,
) -> Result<Vec<Pose>, MapError> {
    assert!(spacing > 0.0, "waypoint spacing must be positive");
    let line = route_centerline(route, map)?;
    let total = polyline_length(&line);
    let s0 = start.map_or(0.0, |p| project_onto_polyline(&line, p.position()).1);
    let span = (total - s0).max(0.0);
    let n = (span / spacing).ceil().max(1.0) as usize;
    let mut poses: Vec<Pose> = (0..=n)
        .map(|i| {
            let s = s0 + span * i as f64 / n as f64;
            let (p, t) = polyline_point_at(&line, s);
            Pose::new(p.x, p.y, t.angle())
        })
        .collect();
    if let Some(start) = start {
        poses[0] = start;
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{Lanelet, LaneletId};
    use crate::odd::OddParameterKind;
    use std::collections::BTreeSet;
    use std::f64::consts::FRAC_PI_2;

    fn lane(id: u64, pts: &[(f64, f64)], succ: &[u64]) -> Lanelet {
        Lanelet::from_centerline(
            LaneletId(id),
            pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
            3.5,
            succ.iter().copied().map(LaneletId).collect(),
            BTreeSet::from([OddParameterKind::RegularRoad]),
        )
        .unwrap()
    }

    fn route(ids: &[u64]) -> Route {
        Route {
            lanelet_ids: ids.iter().copied().map(LaneletId).collect(),
            total_cost: 0.0,
            total_distance: 0.0,
        }
    }

    #[test]
    fn straight_lanelet_spacing_five() {
        let map = LaneletMap::from_lanelets([lane(1, &[(0.0, 0.0), (20.0, 0.0)], &[])]).unwrap();
        let w = route_to_waypoints(&route(&[1]), &map, 5.0, None).unwrap();
        assert_eq!(w.len(), 5);
        for (i, p) in w.iter().enumerate() {
            assert!((p.x - 5.0 * i as f64).abs() < 1e-12);
            assert_eq!(p.y, 0.0);
            assert_eq!(p.heading, 0.0);
        }
    }

    #[test]
    fn short_lanelet_gives_two_poses() {
        let map = LaneletMap::from_lanelets([lane(1, &[(0.0, 0.0), (3.0, 0.0)], &[])]).unwrap();
        let w = route_to_waypoints(&route(&[1]), &map, 5.0, None).unwrap();
        assert_eq!(w.len(), 2);
        assert!((w[1].x - 3.0).abs() < 1e-12);
    }

    #[test]
    fn l_shaped_route_turns_ninety_degrees() {
        let map = LaneletMap::from_lanelets([
            lane(1, &[(0.0, 0.0), (10.0, 0.0)], &[2]),
            lane(2, &[(10.0, 0.0), (10.0, 10.0)], &[]),
        ])
        .unwrap();
        let w = route_to_waypoints(&route(&[1, 2]), &map, 2.0, None).unwrap();
        assert_eq!(w.first().unwrap().heading, 0.0);
        assert!((w.last().unwrap().heading - FRAC_PI_2).abs() < 1e-12);
        assert!((w.last().unwrap().y - 10.0).abs() < 1e-12);
    }

    #[test]
    fn start_pose_leads_the_sequence() {
        let map = LaneletMap::from_lanelets([lane(1, &[(0.0, 0.0), (20.0, 0.0)], &[])]).unwrap();
        let start = Pose::new(4.0, 0.3, 0.1);
        let w = route_to_waypoints(&route(&[1]), &map, 4.0, Some(start)).unwrap();
        assert_eq!(w[0], start);
        assert_eq!(w.len(), 5);
        assert!((w[1].x - 8.0).abs() < 1e-12);
    }
}
