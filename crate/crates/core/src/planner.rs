//! Planner oracle: a speed-profile optimizer along the AV's current heading
//! with an optional discrete lateral nudge.
//!
//! Every agent whose predicted footprint enters the AV corridor ahead of the
//! AV imposes an upper bound on the AV front's progress at that time. The
//! profile is the smallest constant deceleration satisfying all bounds. The
//! planner records how much each agent's constraint changed the plan, in the
//! order the constraints become active along the horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, RigidTransform};
use crate::scene::{AgentTrack, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanPoint {
    pub time_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub speed_mps: f64,
    pub accel_mps2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub agent_id: u32,
    /// Forced deceleration (m/s²) plus the nudge weight when the agent forced a nudge.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub points: Vec<PlanPoint>,
    pub cost: f64,
    #[serde(default)]
    pub attributions: Vec<Attribution>,
    #[serde(default)]
    pub infeasible: bool,
    #[serde(default)]
    pub lateral_offset_m: f64,
}

impl Plan {
    pub fn from_points(points: Vec<PlanPoint>) -> Self {
        Self {
            points,
            cost: 0.0,
            attributions: Vec::new(),
            infeasible: false,
            lateral_offset_m: 0.0,
        }
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Plan {
        Plan {
            points: self
                .points
                .iter()
                .map(|p| {
                    let q = tf.apply_point(crate::geometry::Point::new(p.x_m, p.y_m));
                    PlanPoint { x_m: q.x, y_m: q.y, ..*p }
                })
                .collect(),
            ..self.clone()
        }
    }

    pub fn attribution(&self, agent_id: u32) -> Option<f64> {
        self.attributions.iter().find(|a| a.agent_id == agent_id).map(|a| a.delta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub horizon_s: f64,
    pub dt_s: f64,
    pub max_decel_mps2: f64,
    pub min_gap_m: f64,
    pub headway_s: f64,
    pub lateral_margin_m: f64,
    pub nudge_offset_m: f64,
    pub nudge_ramp_s: f64,
    /// Cost of a nudge in deceleration units; the planner nudges when braking costs more.
    pub nudge_cost: f64,
    /// Attribution weight added for agents that forced a nudge.
    pub nudge_weight: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon_s: 3.0,
            dt_s: 0.1,
            max_decel_mps2: 8.0,
            min_gap_m: 2.0,
            headway_s: 1.0,
            lateral_margin_m: 0.5,
            nudge_offset_m: 1.0,
            nudge_ramp_s: 0.5,
            nudge_cost: 2.0,
            nudge_weight: 3.0,
        }
    }
}

/// Minimal constant deceleration keeping the AV front at or behind `bound`
/// at time `t`, starting at speed `v0`. Infinite if no braking suffices.
pub fn required_decel(v0: f64, t: f64, bound: f64) -> f64 {
    if bound >= v0 * t {
        return 0.0;
    }
    if bound <= 0.0 {
        return f64::INFINITY;
    }
    let d = 2.0 * (v0 * t - bound) / (t * t);
    if v0 / d >= t {
        d
    } else {
        v0 * v0 / (2.0 * bound)
    }
}

/// Front progress after `t` seconds of constant deceleration `decel` (stops at rest).
pub fn progress(v0: f64, decel: f64, t: f64) -> f64 {
    if decel <= 0.0 {
        return v0 * t;
    }
    let t_stop = v0 / decel;
    if t >= t_stop {
        v0 * v0 / (2.0 * decel)
    } else {
        v0 * t - 0.5 * decel * t * t
    }
}

/// Agent footprint extent in the path frame at one horizon step.
#[derive(Clone, Copy, Debug)]
struct Block {
    step: usize,
    s_min: f64,
    s_max: f64,
    l_min: f64,
    l_max: f64,
    gap: f64,
}

struct AgentBlocks {
    id: u32,
    blocks: Vec<Block>,
}

#[derive(Clone, Copy, Debug)]
struct Requirement {
    decel: f64,
    first_step: usize,
}

pub struct Planner {
    pub config: PlannerConfig,
}

impl Default for Planner {
    fn default() -> Self {
        Self::new(PlannerConfig::default())
    }
}

impl Planner {
    pub fn new(config: PlannerConfig) -> Self {
        Self { config }
    }

    fn steps(&self) -> usize {
        (self.config.horizon_s / self.config.dt_s).round().max(1.0) as usize
    }

    fn time(&self, step: usize) -> f64 {
        step as f64 * self.config.dt_s
    }

    fn lateral(&self, offset: f64, t: f64) -> f64 {
        if self.config.nudge_ramp_s <= 0.0 {
            offset
        } else {
            offset * (t / self.config.nudge_ramp_s).min(1.0)
        }
    }

    /// Pose at the AV front, heading along the fixed reference path.
    fn path_frame(scene: &Scene) -> Pose {
        let front = scene.av.front();
        Pose::new(front.x, front.y, scene.av.pose.heading)
    }

    fn blocks_for(&self, scene: &Scene, track: &AgentTrack) -> AgentBlocks {
        let frame = Self::path_frame(scene);
        let blocks = (1..=self.steps())
            .map(|step| {
                let st = track.predicted_at(scene.timestamp_s, self.time(step));
                let (mut s_min, mut s_max) = (f64::INFINITY, f64::NEG_INFINITY);
                let (mut l_min, mut l_max) = (f64::INFINITY, f64::NEG_INFINITY);
                for c in st.footprint().corners() {
                    let (s, l) = frame.to_local(c);
                    s_min = s_min.min(s);
                    s_max = s_max.max(s);
                    l_min = l_min.min(l);
                    l_max = l_max.max(l);
                }
                let along = (st.pose.heading - frame.heading).cos() * st.speed_mps;
                Block {
                    step,
                    s_min,
                    s_max,
                    l_min,
                    l_max,
                    gap: self.config.min_gap_m + self.config.headway_s * along.max(0.0),
                }
            })
            .collect();
        AgentBlocks { id: track.id(), blocks }
    }

    fn in_corridor(&self, scene: &Scene, b: &Block, offset: f64) -> bool {
        let half = 0.5 * scene.av.bbox.width_m + self.config.lateral_margin_m;
        let center = self.lateral(offset, self.time(b.step));
        b.l_max > center - half && b.l_min < center + half
    }

    fn requirement(&self, scene: &Scene, agent: &AgentBlocks, offset: f64, profile_decel: f64) -> Requirement {
        let v0 = scene.av.speed_mps;
        let length = scene.av.bbox.length_m;
        let mut req = Requirement {
            decel: 0.0,
            first_step: usize::MAX,
        };
        for b in &agent.blocks {
            if !self.in_corridor(scene, b, offset) {
                continue;
            }
            let t = self.time(b.step);
            // fully behind the AV's rear: the AV has passed or the agent trails it
            if b.s_max <= progress(v0, profile_decel, t) - length {
                continue;
            }
            let d = required_decel(v0, t, b.s_min - b.gap);
            if d > 0.0 && req.first_step == usize::MAX {
                req.first_step = b.step;
            }
            req.decel = req.decel.max(d);
        }
        req
    }

    /// Iterates the behind/ahead classification against the braking profile
    /// until the required deceleration settles.
    fn requirements(&self, scene: &Scene, agents: &[AgentBlocks], offset: f64) -> Vec<Requirement> {
        let mut decel = 0.0_f64;
        let mut reqs = Vec::new();
        for _ in 0..=agents.len().min(8) {
            reqs = agents
                .iter()
                .map(|a| self.requirement(scene, a, offset, decel.min(self.config.max_decel_mps2)))
                .collect::<Vec<_>>();
            let next = reqs.iter().map(|r| r.decel).fold(0.0, f64::max);
            if next <= decel {
                break;
            }
            decel = next;
        }
        reqs
    }

    pub fn plan(&self, scene: &Scene, subset: &[u32]) -> Result<Plan> {
        let agents = subset
            .iter()
            .map(|id| scene.agent(*id).map(|t| self.blocks_for(scene, t)))
            .collect::<Result<Vec<_>>>()?;
        let cfg = &self.config;
        let candidates = [0.0, cfg.nudge_offset_m, -cfg.nudge_offset_m];
        let evaluated: Vec<(f64, Vec<Requirement>, f64)> = candidates
            .iter()
            .map(|&offset| {
                let reqs = self.requirements(scene, &agents, offset);
                let decel = reqs.iter().map(|r| r.decel).fold(0.0, f64::max);
                (offset, reqs, decel)
            })
            .collect();
        let cost_of = |offset: f64, decel: f64| decel + if offset != 0.0 { cfg.nudge_cost } else { 0.0 };
        let chosen = evaluated
            .iter()
            .filter(|(_, _, d)| *d <= cfg.max_decel_mps2)
            .min_by(|a, b| cost_of(a.0, a.2).total_cmp(&cost_of(b.0, b.2)));
        let (offset, reqs, decel, infeasible) = match chosen {
            Some((o, r, d)) => (*o, r.clone(), *d, false),
            None => (0.0, evaluated[0].1.clone(), cfg.max_decel_mps2, true),
        };

        let mut attributions = Vec::with_capacity(agents.len());
        if !agents.is_empty() {
            let mut order: Vec<usize> = (0..agents.len()).collect();
            order.sort_by_key(|&i| (reqs[i].first_step, agents[i].id));
            let straight = &evaluated[0].1;
            let mut running = 0.0_f64;
            let mut deltas = vec![0.0; agents.len()];
            for i in order {
                let d = reqs[i].decel.min(cfg.max_decel_mps2);
                let increment = (d - running).max(0.0);
                running = running.max(d);
                let nudged = offset != 0.0 && straight[i].decel > decel;
                deltas[i] = increment + if nudged { cfg.nudge_weight } else { 0.0 };
            }
            attributions = agents
                .iter()
                .zip(deltas)
                .map(|(a, delta)| Attribution { agent_id: a.id, delta })
                .collect();
        }

        let points = self.profile_points(scene, decel, offset);
        Ok(Plan {
            points,
            cost: cost_of(offset, decel),
            attributions,
            infeasible,
            lateral_offset_m: offset,
        })
    }

    fn profile_points(&self, scene: &Scene, decel: f64, offset: f64) -> Vec<PlanPoint> {
        let v0 = scene.av.speed_mps;
        (0..=self.steps())
            .map(|step| {
                let t = self.time(step);
                let s = progress(v0, decel, t);
                let speed = (v0 - decel * t).max(0.0);
                let p = scene.av.pose.to_world(s, self.lateral(offset, t));
                PlanPoint {
                    time_s: scene.timestamp_s + t,
                    x_m: p.x,
                    y_m: p.y,
                    speed_mps: speed,
                    accel_mps2: if speed > 0.0 { -decel } else { 0.0 },
                }
            })
            .collect()
    }

    /// Agents in `subset` whose envelope the plan enters (empty for a sound plan).
    pub fn violations(&self, scene: &Scene, plan: &Plan, subset: &[u32]) -> Result<Vec<u32>> {
        ensure_nonempty(plan)?;
        let length = scene.av.bbox.length_m;
        let progress_at = |step: usize| {
            let p = plan.points[step.min(plan.points.len() - 1)];
            scene.av.pose.to_local(crate::geometry::Point::new(p.x_m, p.y_m)).0
        };
        let mut out = Vec::new();
        for id in subset {
            let agent = self.blocks_for(scene, scene.agent(*id)?);
            let bad = agent.blocks.iter().any(|b| {
                let s = progress_at(b.step);
                self.in_corridor(scene, b, plan.lateral_offset_m) && b.s_max > s - length && s > b.s_min - b.gap + 1e-6
            });
            if bad {
                out.push(*id);
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper around a default planner.
pub fn plan(scene: &Scene, subset: &[u32]) -> Result<Plan> {
    Planner::default().plan(scene, subset)
}

pub(crate) fn ensure_nonempty(plan: &Plan) -> Result<()> {
    if plan.points.is_empty() {
        Err(Error::Argument("plan has no points".into()))
    } else {
        Ok(())
    }
}
