//! World-state snapshots consumed by every downstream stage.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lerp_angle, OrientedBox, Point, Pose, RigidTransform};
use crate::planner::Plan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Car,
    Cyclist,
    Pedestrian,
    Child,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::Car,
        AgentKind::Cyclist,
        AgentKind::Pedestrian,
        AgentKind::Child,
    ];

    pub fn index(self) -> usize {
        match self {
            AgentKind::Car => 0,
            AgentKind::Cyclist => 1,
            AgentKind::Pedestrian => 2,
            AgentKind::Child => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub length_m: f64,
    pub width_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: u32,
    pub kind: AgentKind,
    pub pose: Pose,
    pub speed_mps: f64,
    pub accel_mps2: f64,
    pub bbox: BoundingBox,
}

impl AgentState {
    pub fn new(id: u32, kind: AgentKind, pose: Pose, speed: f64, accel: f64, length: f64, width: f64) -> Self {
        Self {
            id,
            kind,
            pose,
            speed_mps: speed,
            accel_mps2: accel,
            bbox: BoundingBox {
                length_m: length,
                width_m: width,
            },
        }
    }

    pub fn position(&self) -> Point {
        self.pose.position()
    }

    pub fn footprint(&self) -> OrientedBox {
        OrientedBox::new(self.position(), self.pose.heading, self.bbox.length_m, self.bbox.width_m)
    }

    /// Center of the front bumper.
    pub fn front(&self) -> Point {
        self.pose.to_world(0.5 * self.bbox.length_m, 0.0)
    }

    pub fn velocity(&self) -> (f64, f64) {
        let (c, s) = self.pose.direction();
        (c * self.speed_mps, s * self.speed_mps)
    }

    pub fn check(&self) -> Result<()> {
        let ok = self.speed_mps >= 0.0
            && self.bbox.length_m > 0.0
            && self.bbox.width_m > 0.0
            && (0.0..TAU).contains(&self.pose.heading)
            && self.pose.x.is_finite()
            && self.pose.y.is_finite()
            && self.accel_mps2.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!("agent {} violates state invariants: {self:?}", self.id)))
        }
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Self {
        Self {
            pose: tf.apply_pose(self.pose),
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedState {
    pub time_s: f64,
    pub state: AgentState,
}

/// One agent's current state with its observed past and predicted future.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub state: AgentState,
    pub history: Vec<TimedState>,
    pub predictions: Vec<TimedState>,
}

impl AgentTrack {
    pub fn id(&self) -> u32 {
        self.state.id
    }

    /// Predicted state `dt` seconds after `now`, interpolated between
    /// prediction samples and extrapolated at constant velocity past the last.
    pub fn predicted_at(&self, now: f64, dt: f64) -> AgentState {
        let target = now + dt;
        let mut prev = TimedState {
            time_s: now,
            state: self.state,
        };
        for next in &self.predictions {
            if next.time_s >= target {
                let span = next.time_s - prev.time_s;
                let u = if span > 0.0 { (target - prev.time_s) / span } else { 1.0 };
                return interpolate(&prev.state, &next.state, u);
            }
            prev = *next;
        }
        let extra = target - prev.time_s;
        let (c, s) = prev.state.pose.direction();
        let mut out = prev.state;
        out.pose.x += c * prev.state.speed_mps * extra;
        out.pose.y += s * prev.state.speed_mps * extra;
        out.accel_mps2 = 0.0;
        out
    }
}

fn interpolate(a: &AgentState, b: &AgentState, u: f64) -> AgentState {
    let p = a.position().lerp(b.position(), u);
    AgentState {
        pose: Pose::new(p.x, p.y, lerp_angle(a.pose.heading, b.pose.heading, u)),
        speed_mps: a.speed_mps + (b.speed_mps - a.speed_mps) * u,
        accel_mps2: a.accel_mps2 + (b.accel_mps2 - a.accel_mps2) * u,
        ..*a
    }
}

/// Designations attached to hand-built scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedMeta {
    pub name: String,
    pub most_relevant: u32,
    pub non_interacting: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scenario_id: u64,
    pub tick: u32,
    pub timestamp_s: f64,
    pub av: AgentState,
    pub av_history: Vec<TimedState>,
    pub av_plan_prev: Option<Plan>,
    pub agents: Vec<AgentTrack>,
    pub lanes: Vec<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripted: Option<ScriptedMeta>,
}

impl Scene {
    pub fn agent(&self, id: u32) -> Result<&AgentTrack> {
        self.agents
            .iter()
            .find(|a| a.id() == id)
            .ok_or_else(|| Error::Lookup(format!("agent {id} not in scene {}", self.key())))
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.agents.iter().map(AgentTrack::id)
    }

    /// Human-readable iteration key, `scenario:tick`.
    pub fn key(&self) -> String {
        format!("{}:{}", self.scenario_id, self.tick)
    }

    pub fn validate(&self) -> Result<()> {
        let t1 = self.timestamp_s;
        self.av.check()?;
        check_series(&self.av_history, t1, true, "av history")?;
        let mut ids = std::collections::BTreeSet::new();
        for track in &self.agents {
            track.state.check()?;
            if !ids.insert(track.id()) {
                return Err(Error::Data(format!("duplicate agent id {}", track.id())));
            }
            check_series(&track.history, t1, true, "agent history")?;
            check_series(&track.predictions, t1, false, "agent predictions")?;
        }
        if let Some(plan) = &self.av_plan_prev {
            if plan.points.windows(2).any(|w| w[1].time_s <= w[0].time_s) {
                return Err(Error::Data("previous plan times not increasing".into()));
            }
        }
        Ok(())
    }

    /// Applies a rigid motion to every spatial quantity in the scene.
    pub fn transformed(&self, tf: &RigidTransform) -> Scene {
        let series = |v: &[TimedState]| {
            v.iter()
                .map(|ts| TimedState {
                    time_s: ts.time_s,
                    state: ts.state.transformed(tf),
                })
                .collect::<Vec<_>>()
        };
        Scene {
            av: self.av.transformed(tf),
            av_history: series(&self.av_history),
            av_plan_prev: self.av_plan_prev.as_ref().map(|p| p.transformed(tf)),
            agents: self
                .agents
                .iter()
                .map(|a| AgentTrack {
                    state: a.state.transformed(tf),
                    history: series(&a.history),
                    predictions: series(&a.predictions),
                })
                .collect(),
            lanes: self
                .lanes
                .iter()
                .map(|l| l.iter().map(|p| tf.apply_point(*p)).collect())
                .collect(),
            ..self.clone()
        }
    }
}

fn check_series(series: &[TimedState], t1: f64, past: bool, what: &str) -> Result<()> {
    if series.windows(2).any(|w| w[1].time_s <= w[0].time_s) {
        return Err(Error::Data(format!("{what} not strictly increasing in time")));
    }
    let bad = if past {
        series.iter().any(|s| s.time_s >= t1)
    } else {
        series.iter().any(|s| s.time_s <= t1)
    };
    if bad {
        return Err(Error::Data(format!("{what} on the wrong side of t1 = {t1}")));
    }
    series.iter().try_for_each(|s| s.state.check())
}

/// Writes one JSON object per line (`.scenes.jsonl`).
pub fn write_scenes<W: Write>(mut out: W, scenes: &[Scene]) -> Result<()> {
    for scene in scenes {
        serde_json::to_writer(&mut out, scene)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_scenes<R: BufRead>(input: R) -> Result<Vec<Scene>> {
    let mut scenes = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let scene: Scene = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("scene line {}: {e}", lineno + 1)))?;
        scenes.push(scene);
    }
    Ok(scenes)
}
