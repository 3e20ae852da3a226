//! Deterministic synthetic driving scenarios.
//!
//! Scenarios are simulated in a canonical road frame (travel along +x, AV
//! lane centered on y = 0) and then moved by a per-scenario rigid transform,
//! so downstream code never sees axis-aligned special cases.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point, Pose, RigidTransform};
use crate::planner::{Plan, PlanPoint};
use crate::scene::{AgentKind, AgentState, AgentTrack, Scene, ScriptedMeta, TimedState};

pub const AV_ID: u32 = 0;
pub const LANE_WIDTH: f64 = 3.5;
const AV_LENGTH: f64 = 4.8;
const AV_WIDTH: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapTemplate {
    Straight,
    Intersection,
    /// Picks straight or intersection per scenario.
    Mixed,
}

/// Fractions of agents assigned to each behavior policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorMix {
    pub constant_accel: f64,
    pub lane_follow: f64,
    pub cut_in: f64,
    pub crossing: f64,
    pub parked: f64,
}

impl Default for BehaviorMix {
    fn default() -> Self {
        Self {
            constant_accel: 0.2,
            lane_follow: 0.35,
            cut_in: 0.15,
            crossing: 0.15,
            parked: 0.15,
        }
    }
}

impl BehaviorMix {
    fn as_array(&self) -> [f64; 5] {
        [
            self.constant_accel,
            self.lane_follow,
            self.cut_in,
            self.crossing,
            self.parked,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub scenario_id: u64,
    pub n_agents: usize,
    pub duration_s: f64,
    pub dt_s: f64,
    pub map: MapTemplate,
    pub behavior_mix: BehaviorMix,
    pub history_horizon_s: f64,
    pub prediction_horizon_s: f64,
    /// Spacing of recorded history/prediction samples; a multiple of `dt_s`.
    pub sample_dt_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            scenario_id: 0,
            n_agents: 20,
            duration_s: 10.0,
            dt_s: 0.1,
            map: MapTemplate::Straight,
            behavior_mix: BehaviorMix::default(),
            history_horizon_s: 3.0,
            prediction_horizon_s: 3.0,
            sample_dt_s: 0.2,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.dt_s > 0.0) || !self.dt_s.is_finite() {
            return fail("dt must be positive");
        }
        if !(self.duration_s >= 0.0) {
            return fail("duration must be non-negative");
        }
        if !(self.history_horizon_s >= 0.0) || !(self.prediction_horizon_s >= 0.0) {
            return fail("horizons must be non-negative");
        }
        let fr = self.behavior_mix.as_array();
        if fr.iter().any(|f| !(*f >= 0.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return fail("behavior fractions must be non-negative and sum to 1");
        }
        let ratio = self.sample_dt_s / self.dt_s;
        if !(ratio >= 1.0 - 1e-9) || (ratio - ratio.round()).abs() > 1e-6 {
            return fail("sample_dt must be a positive multiple of dt");
        }
        Ok(())
    }

    fn stride(&self) -> i64 {
        (self.sample_dt_s / self.dt_s).round() as i64
    }

    fn steps(&self, seconds: f64) -> i64 {
        (seconds / self.dt_s).round() as i64
    }

    /// Whole steps that fit inside a horizon, so samples never pass it.
    fn horizon_steps(&self, seconds: f64) -> i64 {
        (seconds / self.dt_s + 1e-9).floor() as i64
    }
}

/// Kinematic mode for a single integration step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Motion {
    Straight,
    Turn { yaw_rate: f64 },
    Parked,
}

/// Integrates one step of constant-acceleration motion; speed never goes negative.
pub fn step_agent(state: &AgentState, motion: Motion, dt: f64) -> AgentState {
    let mut next = *state;
    let (v, a) = (state.speed_mps, state.accel_mps2);
    let heading_mid = match motion {
        Motion::Parked => {
            next.speed_mps = 0.0;
            next.accel_mps2 = 0.0;
            return next;
        }
        Motion::Straight => state.pose.heading,
        Motion::Turn { yaw_rate } => state.pose.heading + 0.5 * yaw_rate * dt,
    };
    let v_end = v + a * dt;
    let (dist, v_next) = if v_end >= 0.0 {
        (v * dt + 0.5 * a * dt * dt, v_end)
    } else {
        // comes to rest inside the step
        (v * v / (2.0 * -a), 0.0)
    };
    let heading_end = match motion {
        Motion::Turn { yaw_rate } => state.pose.heading + yaw_rate * dt,
        _ => state.pose.heading,
    };
    next.pose = Pose::new(
        state.pose.x + dist * heading_mid.cos(),
        state.pose.y + dist * heading_mid.sin(),
        heading_end,
    );
    next.speed_mps = v_next;
    next
}

#[derive(Clone, Copy, Debug)]
struct Lane {
    origin: Point,
    heading: f64,
}

impl Lane {
    fn along_x(y: f64, reverse: bool) -> Self {
        Self {
            origin: Point::new(0.0, y),
            heading: if reverse { PI } else { 0.0 },
        }
    }

    fn coords(&self, p: Point) -> (f64, f64) {
        Pose::new(self.origin.x, self.origin.y, self.heading).to_local(p)
    }

    fn point(&self, s: f64, l: f64) -> Point {
        Pose::new(self.origin.x, self.origin.y, self.heading).to_world(s, l)
    }
}

#[derive(Clone, Copy, Debug)]
struct BrakeEvent {
    at: f64,
    decel: f64,
    floor: f64,
}

#[derive(Clone, Copy, Debug)]
enum Behavior {
    ConstantAccel,
    LaneFollow {
        lane: Lane,
        desired: f64,
        brake: Option<BrakeEvent>,
    },
    CutIn {
        from: Lane,
        to: Lane,
        start: f64,
        span: f64,
        desired: f64,
    },
    Crossing {
        start: f64,
        walk_speed: f64,
    },
    Parked,
}

#[derive(Clone, Copy, Debug)]
struct SimAgent {
    state: AgentState,
    behavior: Behavior,
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

fn smoothstep_rate(u: f64) -> f64 {
    if (0.0..=1.0).contains(&u) {
        6.0 * u * (1.0 - u)
    } else {
        0.0
    }
}

/// Intelligent-driver-model acceleration toward `desired` behind `leader`.
fn idm(speed: f64, desired: f64, leader: Option<(f64, f64)>) -> f64 {
    const A_MAX: f64 = 1.5;
    const B: f64 = 2.5;
    const HEADWAY: f64 = 1.5;
    const S0: f64 = 3.0;
    let desired = desired.max(0.1);
    let mut acc = A_MAX * (1.0 - (speed / desired).powi(4));
    if let Some((gap, leader_speed)) = leader {
        if gap <= 0.1 {
            return -8.0;
        }
        let dv = speed - leader_speed;
        let s_star = S0 + speed * HEADWAY + speed * dv / (2.0 * (A_MAX * B).sqrt());
        acc -= A_MAX * (s_star.max(0.0) / gap).powi(2);
    }
    acc.clamp(-8.0, A_MAX)
}

/// Nearest body ahead in `lane` within half a lane of its centerline: (bumper gap, speed).
fn leader_in_lane(lane: &Lane, me: usize, bodies: &[AgentState]) -> Option<(f64, f64)> {
    let (s_me, _) = lane.coords(bodies[me].position());
    let half_me = 0.5 * bodies[me].bbox.length_m;
    bodies
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != me)
        .filter_map(|(_, b)| {
            let (s, l) = lane.coords(b.position());
            (s > s_me && l.abs() < 0.5 * LANE_WIDTH + 0.3 * b.bbox.width_m).then(|| {
                let along = (b.pose.heading - lane.heading).cos() * b.speed_mps;
                (s - s_me - half_me - 0.5 * b.bbox.length_m, along)
            })
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// Heading that steers back toward the lane's centerline at `lateral_target`.
fn lane_heading(lane: &Lane, l: f64, lateral_target: f64, lateral_rate: f64, speed: f64) -> f64 {
    let correction = 0.5 * (lateral_target - l);
    wrap_angle(lane.heading + (lateral_rate + correction).atan2(speed.max(1.0)))
}

fn control(agents: &[SimAgent], bodies: &[AgentState], i: usize, t: f64, dt: f64) -> (AgentState, Motion) {
    let agent = &agents[i];
    let mut st = bodies[i];
    match agent.behavior {
        Behavior::ConstantAccel => (st, Motion::Straight),
        Behavior::Parked => (st, Motion::Parked),
        Behavior::LaneFollow { lane, desired, brake } => {
            let (_, l) = lane.coords(st.position());
            st.accel_mps2 = match brake {
                Some(b) if t >= b.at => {
                    if st.speed_mps > b.floor {
                        -b.decel
                    } else {
                        0.0
                    }
                }
                _ => idm(st.speed_mps, desired, leader_in_lane(&lane, i, bodies)),
            };
            st.pose.heading = lane_heading(&lane, l, 0.0, 0.0, st.speed_mps);
            (st, Motion::Straight)
        }
        Behavior::CutIn {
            from,
            to,
            start,
            span,
            desired,
        } => {
            let (_, l_to) = to.coords(st.position());
            let (_, l0) = to.coords(from.origin);
            let u = (t - start) / span;
            let target = l0 * (1.0 - smoothstep(u));
            let rate = -l0 * smoothstep_rate(u) / span;
            let lane = if l_to.abs() < 0.5 * LANE_WIDTH { to } else { from };
            st.accel_mps2 = idm(st.speed_mps, desired, leader_in_lane(&lane, i, bodies));
            st.pose.heading = lane_heading(&to, l_to, target, rate, st.speed_mps);
            (st, Motion::Straight)
        }
        Behavior::Crossing { start, walk_speed } => {
            st.accel_mps2 = if t + 1e-9 >= start && st.speed_mps < walk_speed {
                1.5_f64.min((walk_speed - st.speed_mps) / dt)
            } else {
                0.0
            };
            (st, Motion::Straight)
        }
    }
}

/// Raw per-tick simulation output in canonical coordinates (AV at index 0).
struct Rollout {
    first_tick: i64,
    frames: Vec<Vec<AgentState>>,
}

impl Rollout {
    fn frame(&self, tick: i64) -> &[AgentState] {
        &self.frames[(tick - self.first_tick) as usize]
    }
}

fn simulate(cfg: &ScenarioConfig, mut agents: Vec<SimAgent>, n_ticks: i64) -> Rollout {
    let first_tick = -cfg.horizon_steps(cfg.history_horizon_s);
    let last_tick = n_ticks - 1 + cfg.horizon_steps(cfg.prediction_horizon_s);
    let dt = cfg.dt_s;
    let mut frames = Vec::with_capacity((last_tick - first_tick + 1).max(0) as usize);
    for tick in first_tick..=last_tick {
        let t = tick as f64 * dt;
        let bodies: Vec<AgentState> = agents.iter().map(|a| a.state).collect();
        let controls: Vec<(AgentState, Motion)> =
            (0..agents.len()).map(|i| control(&agents, &bodies, i, t, dt)).collect();
        frames.push(controls.iter().map(|(s, _)| *s).collect());
        for (agent, (st, motion)) in agents.iter_mut().zip(controls) {
            agent.state = step_agent(&st, motion, dt);
        }
    }
    Rollout { first_tick, frames }
}

fn lanes_for(map: MapTemplate, junction_x: f64) -> Vec<Vec<Point>> {
    let along = |y: f64| (0..=12).map(|k| Point::new(-150.0 + 50.0 * k as f64, y)).collect::<Vec<_>>();
    let mut lanes: Vec<Vec<Point>> = [-LANE_WIDTH, 0.0, LANE_WIDTH, 2.0 * LANE_WIDTH, 3.0 * LANE_WIDTH]
        .iter()
        .map(|y| along(*y))
        .collect();
    if map == MapTemplate::Intersection {
        for x in [junction_x - 1.75, junction_x + 1.75] {
            lanes.push((0..=4).map(|k| Point::new(x, -80.0 + 40.0 * k as f64)).collect());
        }
    }
    lanes
}

fn assemble_scenes(
    cfg: &ScenarioConfig,
    rollout: &Rollout,
    n_ticks: i64,
    lanes: &[Vec<Point>],
    tf: &RigidTransform,
    scripted: Option<ScriptedMeta>,
) -> Vec<Scene> {
    let dt = cfg.dt_s;
    let stride = cfg.stride();
    let n_hist = cfg.horizon_steps(cfg.history_horizon_s) / stride;
    let n_pred = cfg.horizon_steps(cfg.prediction_horizon_s) / stride;
    let world = |s: &AgentState| s.transformed(tf);
    let world_lanes: Vec<Vec<Point>> = lanes
        .iter()
        .map(|l| l.iter().map(|p| tf.apply_point(*p)).collect())
        .collect();
    let series = |idx: usize, ticks: &mut dyn Iterator<Item = i64>| {
        ticks
            .map(|k| TimedState {
                time_s: k as f64 * dt,
                state: world(&rollout.frame(k)[idx]),
            })
            .collect::<Vec<_>>()
    };
    (0..n_ticks)
        .map(|tick| {
            let frame = rollout.frame(tick);
            let hist_ticks = || (1..=n_hist).rev().map(move |j| tick - j * stride);
            let pred_ticks = || (1..=n_pred).map(move |j| tick + j * stride);
            let av_plan_prev = (tick > rollout.first_tick).then(|| {
                let points = (0..=n_pred)
                    .map(|j| tick - 1 + j * stride)
                    .map(|k| {
                        let s = world(&rollout.frame(k)[0]);
                        PlanPoint {
                            time_s: k as f64 * dt,
                            x_m: s.pose.x,
                            y_m: s.pose.y,
                            speed_mps: s.speed_mps,
                            accel_mps2: s.accel_mps2,
                        }
                    })
                    .collect();
                Plan::from_points(points)
            });
            Scene {
                scenario_id: cfg.scenario_id,
                tick: tick as u32,
                timestamp_s: tick as f64 * dt,
                av: world(&frame[0]),
                av_history: series(0, &mut hist_ticks()),
                av_plan_prev,
                agents: (1..frame.len())
                    .map(|i| AgentTrack {
                        state: world(&frame[i]),
                        history: series(i, &mut hist_ticks()),
                        predictions: series(i, &mut pred_ticks()),
                    })
                    .collect(),
                lanes: world_lanes.clone(),
                scripted: scripted.clone(),
            }
        })
        .collect()
}

/// Spawn description at t = 0; the simulator starts from a constant-velocity
/// back-extrapolation of it.
fn spawn(cfg: &ScenarioConfig, id: u32, kind: AgentKind, at: Point, heading: f64, speed: f64, accel: f64, size: (f64, f64), behavior: Behavior) -> SimAgent {
    let back = match behavior {
        Behavior::Parked => 0.0,
        Behavior::Crossing { start, .. } if start > -cfg.history_horizon_s => 0.0,
        _ => speed * cfg.history_horizon_s,
    };
    let pose = Pose::new(at.x - back * heading.cos(), at.y - back * heading.sin(), heading);
    let (speed, accel) = match behavior {
        Behavior::Crossing { start, walk_speed } => {
            if start <= -cfg.history_horizon_s {
                (walk_speed, 0.0)
            } else {
                (0.0, 0.0)
            }
        }
        Behavior::Parked => (0.0, 0.0),
        _ => (speed, accel),
    };
    SimAgent {
        state: AgentState::new(id, kind, pose, speed, accel, size.0, size.1),
        behavior,
    }
}

fn size_of(kind: AgentKind, rng: &mut ChaCha8Rng) -> (f64, f64) {
    match kind {
        AgentKind::Car => (rng.gen_range(4.2..5.0), rng.gen_range(1.8..2.0)),
        AgentKind::Cyclist => (1.8, 0.6),
        AgentKind::Pedestrian => (0.5, 0.5),
        AgentKind::Child => (0.4, 0.4),
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut u = rng.gen::<f64>() * total;
    for (item, w) in items {
        if u < *w {
            return *item;
        }
        u -= w;
    }
    items[items.len() - 1].0
}

struct Spawner<'a> {
    cfg: &'a ScenarioConfig,
    rng: ChaCha8Rng,
    av_speed: f64,
    junction_x: Option<f64>,
    placed: Vec<(f64, f64, f64)>,
}

impl Spawner<'_> {
    /// Rejection-samples a longitudinal slot in a lane keeping 10 m spacing.
    fn slot(&mut self, lane_y: f64, heading: f64, lo: f64, hi: f64) -> f64 {
        let mut x = self.rng.gen_range(lo..hi);
        for _ in 0..20 {
            let clear = self
                .placed
                .iter()
                .all(|(py, ph, px)| (py - lane_y).abs() > 1.0 || (ph - heading).abs() > 0.1 || (px - x).abs() > 10.0);
            if clear && !(lane_y.abs() < 1.0 && x.abs() < 10.0) {
                break;
            }
            x = self.rng.gen_range(lo..hi);
        }
        self.placed.push((lane_y, heading, x));
        x
    }

    fn agent(&mut self, id: u32) -> SimAgent {
        let cfg = self.cfg;
        let mix = cfg.behavior_mix.as_array();
        let policy = pick(&mut self.rng, &[(0, mix[0]), (1, mix[1]), (2, mix[2]), (3, mix[3]), (4, mix[4])]);
        let horizon_end = cfg.duration_s + cfg.prediction_horizon_s;
        match policy {
            0 => {
                let kind = pick(
                    &mut self.rng,
                    &[(AgentKind::Pedestrian, 0.5), (AgentKind::Child, 0.1), (AgentKind::Cyclist, 0.15), (AgentKind::Car, 0.25)],
                );
                let size = size_of(kind, &mut self.rng);
                if kind == AgentKind::Car {
                    let at = Point::new(self.rng.gen_range(-40.0..90.0), self.rng.gen_range(18.0..40.0) * if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 });
                    let heading = self.rng.gen_range(0.0..TAU);
                    let speed = self.rng.gen_range(0.0..6.0);
                    let accel = self.rng.gen_range(-0.5..0.5);
                    spawn(cfg, id, kind, at, heading, speed, accel, size, Behavior::ConstantAccel)
                } else {
                    let y = if self.rng.gen_bool(0.5) { -7.5 } else { 14.5 };
                    let heading = if self.rng.gen_bool(0.5) { 0.0 } else { PI };
                    let speed = if kind == AgentKind::Cyclist { self.rng.gen_range(2.0..6.0) } else { self.rng.gen_range(0.5..2.0) };
                    let at = Point::new(self.rng.gen_range(-40.0..90.0), y + self.rng.gen_range(-0.8..0.8));
                    let accel = self.rng.gen_range(-0.1..0.1);
                    spawn(cfg, id, kind, at, heading, speed, accel, size, Behavior::ConstantAccel)
                }
            }
            1 => {
                let kind = if self.rng.gen_bool(0.85) { AgentKind::Car } else { AgentKind::Cyclist };
                let size = size_of(kind, &mut self.rng);
                let mut lanes = vec![
                    (Lane::along_x(0.0, false), 0.3),
                    (Lane::along_x(-LANE_WIDTH, false), 0.2),
                    (Lane::along_x(LANE_WIDTH, false), 0.2),
                    (Lane::along_x(2.0 * LANE_WIDTH, true), 0.15),
                    (Lane::along_x(3.0 * LANE_WIDTH, true), 0.15),
                ];
                if let Some(jx) = self.junction_x {
                    lanes.push((Lane { origin: Point::new(jx - 1.75, 0.0), heading: FRAC_PI_2 }, 0.2));
                    lanes.push((Lane { origin: Point::new(jx + 1.75, 0.0), heading: 3.0 * FRAC_PI_2 }, 0.2));
                }
                let lane = pick(&mut self.rng, &lanes);
                let desired = match kind {
                    AgentKind::Cyclist => self.rng.gen_range(3.0..7.0),
                    _ => self.rng.gen_range(5.0..14.0),
                };
                let speed = desired * self.rng.gen_range(0.8..1.1);
                let along_x = lane.heading == 0.0 || lane.heading == PI;
                let at = if along_x {
                    let x = if lane.origin.y == 0.0 && self.rng.gen_bool(0.75) {
                        self.slot(0.0, lane.heading, 12.0, 70.0)
                    } else if lane.origin.y == 0.0 {
                        self.slot(0.0, lane.heading, -35.0, -10.0)
                    } else {
                        self.slot(lane.origin.y, lane.heading, -35.0, 80.0)
                    };
                    Point::new(x, lane.origin.y)
                } else {
                    lane.point(self.rng.gen_range(-45.0..10.0), 0.0)
                };
                let brake = self.rng.gen_bool(0.35).then(|| BrakeEvent {
                    at: self.rng.gen_range(-cfg.history_horizon_s..horizon_end.max(0.1) * 0.7),
                    decel: self.rng.gen_range(1.5..6.0),
                    floor: self.rng.gen_range(0.0..4.0),
                });
                spawn(cfg, id, kind, at, lane.heading, speed, 0.0, size, Behavior::LaneFollow { lane, desired, brake })
            }
            2 => {
                let size = size_of(AgentKind::Car, &mut self.rng);
                let side = if self.rng.gen_bool(0.5) { LANE_WIDTH } else { -LANE_WIDTH };
                let x = self.slot(side, 0.0, -5.0, 35.0);
                let desired = (self.av_speed + self.rng.gen_range(-4.0..1.0)).max(3.0);
                let behavior = Behavior::CutIn {
                    from: Lane::along_x(side, false),
                    to: Lane::along_x(0.0, false),
                    start: self.rng.gen_range(-cfg.history_horizon_s + 0.5..horizon_end.max(1.0) - 0.5),
                    span: self.rng.gen_range(2.0..3.5),
                    desired,
                };
                spawn(cfg, id, AgentKind::Car, Point::new(x, side), 0.0, desired, 0.0, size, behavior)
            }
            3 => {
                let kind = pick(&mut self.rng, &[(AgentKind::Pedestrian, 0.6), (AgentKind::Child, 0.2), (AgentKind::Cyclist, 0.2)]);
                let size = size_of(kind, &mut self.rng);
                let walk_speed = match kind {
                    AgentKind::Pedestrian => self.rng.gen_range(1.0..1.8),
                    AgentKind::Child => self.rng.gen_range(1.4..2.5),
                    _ => self.rng.gen_range(3.0..6.0),
                };
                let x = match self.junction_x {
                    Some(jx) if self.rng.gen_bool(0.5) => jx + self.rng.gen_range(-6.0..-3.0),
                    _ => self.rng.gen_range(8.0..70.0),
                };
                let (y, heading) = if self.rng.gen_bool(0.7) { (-6.0, FRAC_PI_2) } else { (5.5, 3.0 * FRAC_PI_2) };
                let start = self.rng.gen_range(-cfg.history_horizon_s..horizon_end.max(0.1));
                let behavior = Behavior::Crossing { start, walk_speed };
                spawn(cfg, id, kind, Point::new(x, y), heading, walk_speed, 0.0, size, behavior)
            }
            _ => {
                let size = size_of(AgentKind::Car, &mut self.rng);
                let y = if self.rng.gen_bool(0.5) { -5.6 } else { self.rng.gen_range(-2.9..-2.1) };
                let x = self.slot(y, 0.0, 5.0, 75.0);
                spawn(cfg, id, AgentKind::Car, Point::new(x, y), 0.0, 0.0, 0.0, size, Behavior::Parked)
            }
        }
    }
}

/// Simulates one seeded scenario and returns one scene per tick.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Vec<Scene>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let map = match config.map {
        MapTemplate::Mixed => {
            if rng.gen_bool(0.5) {
                MapTemplate::Straight
            } else {
                MapTemplate::Intersection
            }
        }
        m => m,
    };
    let junction_x = (map == MapTemplate::Intersection).then(|| rng.gen_range(25.0..70.0));
    let av_desired = rng.gen_range(8.0..14.0);
    let av_speed = av_desired * rng.gen_range(0.8..1.05);
    let tf = RigidTransform::new(rng.gen_range(0.0..TAU), rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));

    let mut spawner = Spawner {
        cfg: config,
        rng: ChaCha8Rng::seed_from_u64(rng.gen()),
        av_speed,
        junction_x,
        placed: Vec::new(),
    };
    let mut agents = vec![av_agent(config, av_speed, av_desired, true)];
    for id in 1..=config.n_agents as u32 {
        agents.push(spawner.agent(id));
    }
    let n_ticks = config.steps(config.duration_s);
    let rollout = simulate(config, agents, n_ticks);
    let lanes = lanes_for(map, junction_x.unwrap_or(0.0));
    Ok(assemble_scenes(config, &rollout, n_ticks, &lanes, &tf, None))
}

/// The AV follows its lane with IDM; scripted scenes replay it at constant speed instead.
fn av_agent(cfg: &ScenarioConfig, speed: f64, desired: f64, reactive: bool) -> SimAgent {
    let size = (AV_LENGTH, AV_WIDTH);
    let behavior = if reactive {
        Behavior::LaneFollow {
            lane: Lane::along_x(0.0, false),
            desired,
            brake: None,
        }
    } else {
        Behavior::ConstantAccel
    };
    spawn(
        cfg,
        AV_ID,
        AgentKind::Car,
        Point::new(0.0, 0.0),
        0.0,
        speed,
        0.0,
        size,
        behavior,
    )
}

/// Builds a set of scenes from many seeded scenarios, `total` scenes in all.
pub fn generate_scene_set(base: &ScenarioConfig, total: usize) -> Result<Vec<Scene>> {
    base.validate()?;
    let per = base.steps(base.duration_s).max(1) as usize;
    let mut out = Vec::with_capacity(total);
    let mut index = 0u64;
    while out.len() < total {
        let cfg = ScenarioConfig {
            seed: scenario_seed(base.seed, index),
            scenario_id: index,
            ..base.clone()
        };
        let scenes = generate_scenario(&cfg)?;
        if scenes.is_empty() {
            return Err(Error::Config("scenario duration yields no ticks".into()));
        }
        out.extend(scenes.into_iter().take((total - out.len()).min(per)));
        index += 1;
    }
    Ok(out)
}

/// splitmix64 finalizer over (seed, index).
pub fn scenario_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedName {
    LeadBrake,
    DrivewayYield,
    RightTurnMerge,
    ParallelNoninteracting,
    DoubleLaneChange,
    CrossingPedestrian,
}

impl ScriptedName {
    pub const ALL: [ScriptedName; 6] = [
        ScriptedName::LeadBrake,
        ScriptedName::DrivewayYield,
        ScriptedName::RightTurnMerge,
        ScriptedName::ParallelNoninteracting,
        ScriptedName::DoubleLaneChange,
        ScriptedName::CrossingPedestrian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScriptedName::LeadBrake => "lead_brake",
            ScriptedName::DrivewayYield => "driveway_yield",
            ScriptedName::RightTurnMerge => "right_turn_merge",
            ScriptedName::ParallelNoninteracting => "parallel_noninteracting",
            ScriptedName::DoubleLaneChange => "double_lane_change",
            ScriptedName::CrossingPedestrian => "crossing_pedestrian",
        }
    }
}

impl std::str::FromStr for ScriptedName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScriptedName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Lookup(format!("unknown scripted scenario `{s}`")))
    }
}

/// Hand-built scenes with a designated most-relevant and non-interacting agent.
pub fn scripted_scenario(name: ScriptedName) -> Vec<Scene> {
    let cfg = ScenarioConfig {
        seed: 0,
        scenario_id: 1000 + ScriptedName::ALL.iter().position(|n| *n == name).unwrap_or(0) as u64,
        n_agents: 0,
        duration_s: 0.5,
        ..ScenarioConfig::default()
    };
    let car = (4.6, 1.9);
    let ped = (0.5, 0.5);
    let follow = |y: f64, reverse: bool, desired: f64, brake: Option<BrakeEvent>| Behavior::LaneFollow {
        lane: Lane::along_x(y, reverse),
        desired,
        brake,
    };
    let mut agents = vec![av_agent(&cfg, 10.0, 10.0, false)];
    let (most, quiet) = match name {
        ScriptedName::LeadBrake => {
            let brake = Some(BrakeEvent { at: -0.3, decel: 5.0, floor: 0.0 });
            agents.push(spawn(&cfg, 1, AgentKind::Car, Point::new(18.0, 0.0), 0.0, 10.0, 0.0, car, follow(0.0, false, 10.0, brake)));
            agents.push(spawn(&cfg, 2, AgentKind::Car, Point::new(-35.0, 0.0), 0.0, 9.0, 0.0, car, follow(0.0, false, 9.0, None)));
            agents.push(spawn(&cfg, 3, AgentKind::Car, Point::new(40.0, 7.0), PI, 10.0, 0.0, car, follow(7.0, true, 10.0, None)));
            (1, 2)
        }
        ScriptedName::DrivewayYield => {
            agents.push(spawn(&cfg, 1, AgentKind::Car, Point::new(18.0, -6.5), FRAC_PI_2, 0.0, 0.0, car, Behavior::Crossing { start: -0.2, walk_speed: 5.0 }));
            agents.push(spawn(&cfg, 2, AgentKind::Pedestrian, Point::new(10.0, 14.5), 0.0, 1.3, 0.0, ped, Behavior::ConstantAccel));
            agents.push(spawn(&cfg, 3, AgentKind::Car, Point::new(45.0, -5.6), 0.0, 0.0, 0.0, car, Behavior::Parked));
            (1, 2)
        }
        ScriptedName::RightTurnMerge => {
            let merge = Behavior::CutIn {
                from: Lane::along_x(-LANE_WIDTH, false),
                to: Lane::along_x(0.0, false),
                start: -0.5,
                span: 2.5,
                desired: 7.0,
            };
            agents.push(spawn(&cfg, 1, AgentKind::Car, Point::new(16.0, -LANE_WIDTH), 0.0, 7.0, 0.0, car, merge));
            agents.push(spawn(&cfg, 2, AgentKind::Car, Point::new(40.0, 2.0 * LANE_WIDTH), PI, 10.0, 0.0, car, follow(2.0 * LANE_WIDTH, true, 10.0, None)));
            agents.push(spawn(&cfg, 3, AgentKind::Pedestrian, Point::new(-5.0, -7.5), 0.0, 1.2, 0.0, ped, Behavior::ConstantAccel));
            (1, 2)
        }
        ScriptedName::ParallelNoninteracting => {
            agents.push(spawn(&cfg, 1, AgentKind::Car, Point::new(20.0, LANE_WIDTH), 0.0, 6.0, 0.0, car, follow(LANE_WIDTH, false, 6.0, None)));
            agents.push(spawn(&cfg, 2, AgentKind::Car, Point::new(24.0, 0.0), 0.0, 0.0, 0.0, car, follow(0.0, false, 0.0, None)));
            agents.push(spawn(&cfg, 3, AgentKind::Pedestrian, Point::new(30.0, 14.5), PI, 1.0, 0.0, ped, Behavior::ConstantAccel));
            (2, 1)
        }
        ScriptedName::DoubleLaneChange => {
            let cut = Behavior::CutIn {
                from: Lane::along_x(LANE_WIDTH, false),
                to: Lane::along_x(0.0, false),
                start: 0.3,
                span: 2.5,
                desired: 7.0,
            };
            agents.push(spawn(&cfg, 1, AgentKind::Car, Point::new(14.0, LANE_WIDTH), 0.0, 7.0, 0.0, car, cut));
            agents.push(spawn(&cfg, 2, AgentKind::Car, Point::new(6.0, -LANE_WIDTH), 0.0, 10.0, 0.0, car, follow(-LANE_WIDTH, false, 10.0, None)));
            agents.push(spawn(&cfg, 3, AgentKind::Car, Point::new(60.0, 3.0 * LANE_WIDTH), PI, 11.0, 0.0, car, follow(3.0 * LANE_WIDTH, true, 11.0, None)));
            (1, 2)
        }
        ScriptedName::CrossingPedestrian => {
            agents.push(spawn(&cfg, 1, AgentKind::Pedestrian, Point::new(22.0, -4.0), FRAC_PI_2, 1.4, 0.0, ped, Behavior::Crossing { start: -10.0, walk_speed: 1.4 }));
            agents.push(spawn(&cfg, 2, AgentKind::Pedestrian, Point::new(15.0, -7.5), 0.0, 1.2, 0.0, ped, Behavior::ConstantAccel));
            agents.push(spawn(&cfg, 3, AgentKind::Cyclist, Point::new(-20.0, -LANE_WIDTH), 0.0, 5.0, 0.0, (1.8, 0.6), follow(-LANE_WIDTH, false, 5.0, None)));
            (1, 2)
        }
    };
    let n_ticks = cfg.steps(cfg.duration_s);
    let rollout = simulate(&cfg, agents, n_ticks);
    let meta = ScriptedMeta {
        name: name.as_str().to_string(),
        most_relevant: most,
        non_interacting: quiet,
    };
    let tf = RigidTransform::new(0.0, 0.0, 0.0);
    let mut scenes = assemble_scenes(&cfg, &rollout, n_ticks, &lanes_for(MapTemplate::Straight, 0.0), &tf, Some(meta));
    // scripted scenes start without a previous-cycle plan
    if let Some(first) = scenes.first_mut() {
        first.av_plan_prev = None;
    }
    scenes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(speed: f64, accel: f64) -> AgentState {
        AgentState::new(1, AgentKind::Car, Pose::new(0.0, 0.0, 0.0), speed, accel, 4.0, 2.0)
    }

    #[test]
    fn constant_velocity_step() {
        let next = step_agent(&state(10.0, 0.0), Motion::Straight, 1.0);
        assert!((next.pose.x - 10.0).abs() < 1e-12);
        assert_eq!(next.pose.y, 0.0);
        assert_eq!(next.speed_mps, 10.0);
    }

    #[test]
    fn speed_clamps_at_rest() {
        let next = step_agent(&state(1.0, -2.0), Motion::Straight, 1.0);
        assert_eq!(next.speed_mps, 0.0);
        // stops after 0.5 s having covered v^2 / 2a
        assert!((next.pose.x - 0.25).abs() < 1e-12);
    }

    #[test]
    fn closed_form_kinematics() {
        let next = step_agent(&state(10.0, 2.0), Motion::Straight, 0.5);
        assert!((next.speed_mps - 11.0).abs() < 1e-12);
        assert!((next.pose.x - 5.25).abs() < 1e-12);
    }

    #[test]
    fn parked_never_moves() {
        let next = step_agent(&state(3.0, 1.0), Motion::Parked, 1.0);
        assert_eq!(next.pose, state(3.0, 1.0).pose);
        assert_eq!(next.speed_mps, 0.0);
    }

    #[test]
    fn empty_world() {
        let cfg = ScenarioConfig {
            n_agents: 0,
            duration_s: 1.0,
            ..ScenarioConfig::default()
        };
        let scenes = generate_scenario(&cfg).unwrap();
        assert_eq!(scenes.len(), 10);
        assert!(scenes.iter().all(|s| s.agents.is_empty()));
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            ScenarioConfig { dt_s: 0.0, ..ScenarioConfig::default() },
            ScenarioConfig { dt_s: -0.1, ..ScenarioConfig::default() },
            ScenarioConfig { duration_s: -1.0, ..ScenarioConfig::default() },
            ScenarioConfig {
                behavior_mix: BehaviorMix { parked: 0.5, ..BehaviorMix::default() },
                ..ScenarioConfig::default()
            },
            ScenarioConfig { sample_dt_s: 0.15, ..ScenarioConfig::default() },
        ] {
            assert!(matches!(generate_scenario(&cfg), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn unknown_scripted_name() {
        assert!(matches!("left_turn".parse::<ScriptedName>(), Err(Error::Lookup(_))));
        assert_eq!("lead_brake".parse::<ScriptedName>().unwrap(), ScriptedName::LeadBrake);
    }

    #[test]
    fn scripted_scenes_are_valid() {
        for name in ScriptedName::ALL {
            let scenes = scripted_scenario(name);
            assert!(!scenes.is_empty());
            for s in &scenes {
                s.validate().unwrap();
                let meta = s.scripted.as_ref().unwrap();
                assert_ne!(meta.most_relevant, meta.non_interacting);
                s.agent(meta.most_relevant).unwrap();
                s.agent(meta.non_interacting).unwrap();
            }
        }
    }
}
