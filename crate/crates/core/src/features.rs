//! Engineered per-agent features and the hand-written heuristic scorer.
//!
//! Layout of a feature vector (stable, index = position):
//!
//! | idx | name |
//! |-----|------|
//! | 0 | `dist_to_av_front` (m, agent center to AV front-center) |
//! | 1 | `is_in_front` (agent center ahead of the AV front) |
//! | 2 | `speed` |
//! | 3 | `accel` |
//! | 4..8 | kind one-hot: car, cyclist, pedestrian, child |
//! | 8 | `dist_to_traj` (m, agent center to the AV reference polyline) |
//! | 9 | `time_of_closest_approach` (s) |
//! | 10 | `time_to_reach_traj` (s, constant acceleration) |
//! | 11 | `min_time_to_collide` (s) |
//! | 12..18 | CNN neighborhood max/mean for the 3 windows, `-1` when absent |
//!
//! Time features live in `[0, HORIZON_CAP_S]`; events that never happen are
//! encoded as the cap.

use crate::error::Result;
use crate::geometry::{point_polyline_distance, OrientedBox, Point, Pose};
use crate::scene::{AgentState, Scene};
use crate::sim::{step_agent, Motion};

pub const HORIZON_CAP_S: f64 = 10.0;
pub const STEP_S: f64 = 0.1;
const N_STEPS: usize = 100;

pub const ENGINEERED_DIM: usize = 12;
pub const CNN_DIM: usize = 6;
pub const FEATURE_DIM: usize = ENGINEERED_DIM + CNN_DIM;
/// Bumped whenever the layout above changes; stored in trained models.
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "dist_to_av_front",
    "is_in_front",
    "speed",
    "accel",
    "kind_car",
    "kind_cyclist",
    "kind_pedestrian",
    "kind_child",
    "dist_to_traj",
    "time_of_closest_approach",
    "time_to_reach_traj",
    "min_time_to_collide",
    "cnn_max_large",
    "cnn_mean_large",
    "cnn_max_medium",
    "cnn_mean_medium",
    "cnn_max_small",
    "cnn_mean_small",
];

pub mod idx {
    pub const DIST_TO_AV_FRONT: usize = 0;
    pub const IS_IN_FRONT: usize = 1;
    pub const SPEED: usize = 2;
    pub const ACCEL: usize = 3;
    pub const KIND: usize = 4;
    pub const DIST_TO_TRAJ: usize = 8;
    pub const TCA: usize = 9;
    pub const TIME_TO_REACH: usize = 10;
    pub const MIN_TTC: usize = 11;
    pub const CNN: usize = 12;
}

pub type FeatureVector = [f64; FEATURE_DIM];

/// AV reference motion for the next `HORIZON_CAP_S` seconds: the previous
/// cycle's plan (or a constant-speed straight line when there is none),
/// extended at constant velocity past its last point.
#[derive(Clone, Debug)]
pub struct ReferenceTrajectory {
    /// Pose at `k * STEP_S` for `k = 0..=N_STEPS`.
    poses: Vec<Pose>,
    footprints: Vec<OrientedBox>,
    polyline: Vec<Point>,
    /// Axis-aligned bounds of the polyline: (min, max).
    bounds: (Point, Point),
}

impl ReferenceTrajectory {
    pub fn new(scene: &Scene) -> Self {
        let now = scene.timestamp_s;
        let av = &scene.av;
        // (relative time, position, speed)
        let mut knots = vec![(0.0, av.position(), av.speed_mps)];
        if let Some(plan) = &scene.av_plan_prev {
            for p in plan.points.iter().filter(|p| p.time_s > now + 1e-9) {
                knots.push((p.time_s - now, Point::new(p.x_m, p.y_m), p.speed_mps));
            }
        }
        let (t_last, p_last, v_last) = *knots.last().unwrap();
        let dir = knots
            .windows(2)
            .rev()
            .find_map(|w| {
                let d = w[0].1.distance(w[1].1);
                (d > 1e-9).then(|| ((w[1].1.x - w[0].1.x) / d, (w[1].1.y - w[0].1.y) / d))
            })
            .unwrap_or_else(|| av.pose.direction());
        if t_last < HORIZON_CAP_S {
            knots.push((HORIZON_CAP_S, p_last.add_scaled(dir, v_last * (HORIZON_CAP_S - t_last)), v_last));
        }

        let mut poses = Vec::with_capacity(N_STEPS + 1);
        let mut seg = 0;
        let mut heading = av.pose.heading;
        for k in 0..=N_STEPS {
            let t = k as f64 * STEP_S;
            while seg + 2 < knots.len() && knots[seg + 1].0 < t {
                seg += 1;
            }
            let (a, b) = (knots[seg], knots[(seg + 1).min(knots.len() - 1)]);
            let span = b.0 - a.0;
            let u = if span > 0.0 { ((t - a.0) / span).clamp(0.0, 1.0) } else { 0.0 };
            let p = a.1.lerp(b.1, u);
            let d = a.1.distance(b.1);
            if d > 1e-9 {
                heading = (b.1.y - a.1.y).atan2(b.1.x - a.1.x);
            }
            poses.push(Pose::new(p.x, p.y, heading));
        }
        let polyline: Vec<Point> = knots.iter().map(|k| k.1).collect();
        let bounds = polyline.iter().fold(
            (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY)),
            |(lo, hi), p| (Point::new(lo.x.min(p.x), lo.y.min(p.y)), Point::new(hi.x.max(p.x), hi.y.max(p.y))),
        );
        Self {
            footprints: poses
                .iter()
                .map(|p| OrientedBox::new(p.position(), p.heading, av.bbox.length_m, av.bbox.width_m))
                .collect(),
            poses,
            polyline,
            bounds,
        }
    }

    pub fn pose_at_step(&self, k: usize) -> Pose {
        self.poses[k.min(N_STEPS)]
    }

    pub fn polyline(&self) -> &[Point] {
        &self.polyline
    }

    fn footprint_at_step(&self, k: usize) -> &OrientedBox {
        &self.footprints[k.min(N_STEPS)]
    }

    /// Whether `p` could be within `r` of the polyline (bounding-box test).
    fn may_be_within(&self, p: Point, r: f64) -> bool {
        let (lo, hi) = self.bounds;
        p.x >= lo.x - r && p.x <= hi.x + r && p.y >= lo.y - r && p.y <= hi.y + r
    }
}

/// Agent state `t` seconds ahead under constant acceleration (speed clamped at rest).
fn extrapolate(state: &AgentState, t: f64) -> AgentState {
    if t <= 0.0 {
        *state
    } else {
        step_agent(state, Motion::Straight, t)
    }
}

fn step_time(k: usize) -> f64 {
    k as f64 * STEP_S
}

/// Engineered features for one agent, CNN slots set to `-1`.
pub fn extract_engineered(scene: &Scene, agent_id: u32) -> Result<FeatureVector> {
    let track = scene.agent(agent_id)?;
    Ok(engineered_with(scene, &ReferenceTrajectory::new(scene), &track.state))
}

/// Features for every agent in scene order, sharing one reference trajectory.
pub fn extract_all(scene: &Scene) -> Vec<FeatureVector> {
    let reference = ReferenceTrajectory::new(scene);
    scene.agents.iter().map(|t| engineered_with(scene, &reference, &t.state)).collect()
}

pub fn engineered_with(scene: &Scene, reference: &ReferenceTrajectory, agent: &AgentState) -> FeatureVector {
    let mut f = [-1.0; FEATURE_DIM];
    let av = &scene.av;
    let front = Pose::new(av.front().x, av.front().y, av.pose.heading);
    let center = agent.position();

    f[idx::DIST_TO_AV_FRONT] = center.distance(front.position());
    f[idx::IS_IN_FRONT] = if front.to_local(center).0 > 0.0 { 1.0 } else { 0.0 };
    f[idx::SPEED] = agent.speed_mps;
    f[idx::ACCEL] = agent.accel_mps2;
    for i in 0..4 {
        f[idx::KIND + i] = if agent.kind.index() == i { 1.0 } else { 0.0 };
    }
    f[idx::DIST_TO_TRAJ] = point_polyline_distance(center, reference.polyline());

    let half_width = 0.5 * av.bbox.width_m;
    let reach_radius = half_width + 1e-9;
    let av_radius = 0.5 * av.bbox.length_m.hypot(av.bbox.width_m);
    let agent_radius = 0.5 * agent.bbox.length_m.hypot(agent.bbox.width_m);
    let mut best = (f64::INFINITY, 0);
    let mut reach = HORIZON_CAP_S;
    let mut collide = HORIZON_CAP_S;
    let mut reached = false;
    let mut collided = false;
    for k in 0..=N_STEPS {
        let t = step_time(k);
        let st = extrapolate(agent, t);
        let p = st.position();
        let d = p.distance(reference.pose_at_step(k).position());
        if d < best.0 {
            best = (d, k);
        }
        if !reached && reference.may_be_within(p, reach_radius) && point_polyline_distance(p, reference.polyline()) <= half_width {
            reach = t;
            reached = true;
        }
        let av_box = reference.footprint_at_step(k);
        if !collided && p.distance(av_box.center) <= av_radius + agent_radius + 1e-9 && st.footprint().overlaps(av_box) {
            collide = t;
            collided = true;
        }
    }
    f[idx::TCA] = step_time(best.1);
    f[idx::TIME_TO_REACH] = reach;
    f[idx::MIN_TTC] = collide;
    f
}

/// Hard-coded baseline: earlier closest approach first, then nearer to the
/// AV trajectory (0.1 m resolution), then nearer to the AV front.
pub fn heuristic_score(fv: &FeatureVector) -> f64 {
    let tca_steps = (fv[idx::TCA] / STEP_S).round();
    let traj = (fv[idx::DIST_TO_TRAJ].min(9_999.0) * 10.0).floor();
    let front = fv[idx::DIST_TO_AV_FRONT].min(999.0);
    -(tca_steps * 1e8 + traj * 1e3 + front)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{AgentKind, AgentTrack};

    fn scene_with(av: AgentState, agents: Vec<AgentState>) -> Scene {
        Scene {
            scenario_id: 0,
            tick: 0,
            timestamp_s: 0.0,
            av,
            av_history: vec![],
            av_plan_prev: None,
            agents: agents
                .into_iter()
                .map(|state| AgentTrack {
                    state,
                    history: vec![],
                    predictions: vec![],
                })
                .collect(),
            lanes: vec![],
            scripted: None,
        }
    }

    fn av(speed: f64) -> AgentState {
        AgentState::new(0, AgentKind::Car, Pose::new(0.0, 0.0, 0.0), speed, 0.0, 4.0, 2.0)
    }

    #[test]
    fn agent_ahead_of_front() {
        let lead = AgentState::new(1, AgentKind::Car, Pose::new(12.0, 0.0, 0.0), 5.0, 0.0, 4.0, 2.0);
        let f = extract_engineered(&scene_with(av(5.0), vec![lead]), 1).unwrap();
        assert!((f[idx::DIST_TO_AV_FRONT] - 10.0).abs() < 1e-12);
        assert_eq!(f[idx::IS_IN_FRONT], 1.0);
        assert_eq!(&f[idx::KIND..idx::KIND + 4], &[1.0, 0.0, 0.0, 0.0]);
        assert!(f[idx::CNN..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn stationary_pedestrian_beside_path() {
        let ped = AgentState::new(1, AgentKind::Pedestrian, Pose::new(20.0, 5.0, 1.0), 0.0, 0.0, 0.5, 0.5);
        let f = extract_engineered(&scene_with(av(10.0), vec![ped]), 1).unwrap();
        assert!((f[idx::DIST_TO_TRAJ] - 5.0).abs() < 1e-12);
        assert_eq!(f[idx::TIME_TO_REACH], HORIZON_CAP_S);
        assert_eq!(f[idx::MIN_TTC], HORIZON_CAP_S);
        assert!((f[idx::TCA] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn head_on_collision_time() {
        // 30 m between the two front bumpers, closing at 15 m/s
        let oncoming = AgentState::new(1, AgentKind::Car, Pose::new(2.0 + 30.0 + 2.0, 0.0, std::f64::consts::PI), 10.0, 0.0, 4.0, 2.0);
        let f = extract_engineered(&scene_with(av(5.0), vec![oncoming]), 1).unwrap();
        assert!((f[idx::MIN_TTC] - 2.0).abs() < 1e-12);
        assert_eq!(f[idx::TIME_TO_REACH], 0.0);
    }

    #[test]
    fn missing_agent_is_lookup_error() {
        assert!(matches!(extract_engineered(&scene_with(av(1.0), vec![]), 4), Err(crate::Error::Lookup(_))));
    }

    #[test]
    fn heuristic_orders_lexicographically() {
        let mut a = [0.0; FEATURE_DIM];
        a[idx::TCA] = 1.0;
        a[idx::DIST_TO_TRAJ] = 50.0;
        a[idx::DIST_TO_AV_FRONT] = 900.0;
        let mut b = a;
        b[idx::TCA] = 3.0;
        b[idx::DIST_TO_TRAJ] = 0.0;
        b[idx::DIST_TO_AV_FRONT] = 0.0;
        assert!(heuristic_score(&a) > heuristic_score(&b));
        let mut c = a;
        c[idx::DIST_TO_TRAJ] = 49.9;
        assert!(heuristic_score(&c) > heuristic_score(&a));
        let mut d = a;
        d[idx::DIST_TO_AV_FRONT] = 899.0;
        assert!(heuristic_score(&d) > heuristic_score(&a));
        assert_eq!(heuristic_score(&a), heuristic_score(&a.clone()));
        let mut capped = a;
        capped[idx::TCA] = HORIZON_CAP_S;
        assert!(heuristic_score(&a) > heuristic_score(&capped));
    }
}
