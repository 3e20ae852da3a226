//! Top-down rasterization of a scene into a 10-channel byte image stack
//! centered on the AV, heading up.
//!
//! Channel order: lanes, AV heading, AV velocity, AV acceleration, AV time,
//! agents heading, agents velocity, agents acceleration, agents time, agent
//! boxes. Every plotted sample writes its quantities and its time relative to
//! the scene timestamp at the same pixel. Byte 0 means "nothing plotted".

use std::f64::consts::TAU;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point, Pose};
use crate::label::LabeledAgent;
use crate::scene::{AgentState, Scene};

pub const N_CHANNELS: usize = 10;

pub mod channel {
    pub const LANES: usize = 0;
    pub const AV_HEADING: usize = 1;
    pub const AV_VELOCITY: usize = 2;
    pub const AV_ACCEL: usize = 3;
    pub const AV_TIME: usize = 4;
    pub const AGENT_HEADING: usize = 5;
    pub const AGENT_VELOCITY: usize = 6;
    pub const AGENT_ACCEL: usize = 7;
    pub const AGENT_TIME: usize = 8;
    pub const AGENT_BOXES: usize = 9;
}

pub const CHANNEL_NAMES: [&str; N_CHANNELS] = [
    "lanes",
    "av_heading",
    "av_velocity",
    "av_accel",
    "av_time",
    "agents_heading",
    "agents_velocity",
    "agents_accel",
    "agents_time",
    "agent_boxes",
];

/// Label disc intensity per grade 0, 1, 2.
pub const GRADE_INTENSITY: [u8; 3] = [80, 160, 240];

/// Affine map of `[min, max]` onto bytes `1..=255`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub min: f64,
    pub max: f64,
}

impl Encoding {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / 254.0
    }

    pub fn encode(&self, v: f64) -> u8 {
        let u = ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0);
        1 + (u * 254.0).round() as u8
    }

    pub fn decode(&self, b: u8) -> Option<f64> {
        (b > 0).then(|| self.min + f64::from(b - 1) * self.step())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    pub grid: usize,
    pub meters_per_pixel: f64,
    pub heading: Encoding,
    pub velocity: Encoding,
    pub accel: Encoding,
    pub time: Encoding,
    pub history_horizon_s: f64,
    pub prediction_horizon_s: f64,
    pub label_radius_px: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            grid: 64,
            meters_per_pixel: 1.25,
            heading: Encoding::new(0.0, TAU),
            velocity: Encoding::new(0.0, 30.0),
            accel: Encoding::new(-8.0, 8.0),
            time: Encoding::new(-3.0, 3.0),
            history_horizon_s: 3.0,
            prediction_horizon_s: 3.0,
            label_radius_px: 2,
        }
    }
}

impl RasterConfig {
    /// Same physical extent as the default at a different resolution.
    pub fn with_grid(grid: usize) -> Self {
        let base = Self::default();
        Self {
            grid,
            meters_per_pixel: base.meters_per_pixel * base.grid as f64 / grid as f64,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let encodings = [self.heading, self.velocity, self.accel, self.time];
        if self.grid == 0 || !self.grid.is_multiple_of(2) {
            return Err(Error::Config(format!("raster grid must be even and positive, got {}", self.grid)));
        }
        if !(self.meters_per_pixel > 0.0) {
            return Err(Error::Config("meters_per_pixel must be positive".into()));
        }
        if encodings.iter().any(|e| !(e.max > e.min)) {
            return Err(Error::Config("channel encoding needs max > min".into()));
        }
        Ok(())
    }

    pub fn extent_m(&self) -> f64 {
        self.grid as f64 * self.meters_per_pixel
    }
}

/// Heading relative to `reference` in `[0, TAU)`, snapped to a microradian
/// grid so rounding noise from a rigid motion of the world cannot move it
/// across an encoding bin or the wrap seam.
pub fn relative_heading(heading: f64, reference: f64) -> f64 {
    const GRID: f64 = 1e6;
    let q = (wrap_angle(heading - reference) * GRID).round();
    if q >= (TAU * GRID).round() {
        0.0
    } else {
        q / GRID
    }
}

/// Pixel `(row, col)` of a world point in the AV-centered, heading-up frame,
/// or `None` when it falls outside the grid.
pub fn world_to_pixel(p: Point, reference: &Pose, cfg: &RasterConfig) -> Option<(usize, usize)> {
    let (fwd, left) = reference.to_local(p);
    let half = (cfg.grid / 2) as f64;
    let row = (half - fwd / cfg.meters_per_pixel).round();
    let col = (half - left / cfg.meters_per_pixel).round();
    let g = cfg.grid as f64;
    (row >= 0.0 && row < g && col >= 0.0 && col < g).then_some((row as usize, col as usize))
}

/// Center of a pixel in world coordinates.
pub fn pixel_to_world(row: usize, col: usize, reference: &Pose, cfg: &RasterConfig) -> Point {
    let half = (cfg.grid / 2) as f64;
    reference.to_world((half - row as f64) * cfg.meters_per_pixel, (half - col as f64) * cfg.meters_per_pixel)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RasterStack {
    pub grid: usize,
    pub meters_per_pixel: f64,
    pub reference: Pose,
    /// Channel-major bytes, `N_CHANNELS * grid * grid`.
    pub data: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct StackHeader {
    format: String,
    version: u32,
    grid: usize,
    channels: usize,
    meters_per_pixel: f64,
    reference: Pose,
}

const STACK_FORMAT: &str = "agentrank-raster";
const STACK_VERSION: u32 = 1;

impl RasterStack {
    pub fn blank(grid: usize, meters_per_pixel: f64, reference: Pose) -> Self {
        Self {
            grid,
            meters_per_pixel,
            reference,
            data: vec![0; N_CHANNELS * grid * grid],
        }
    }

    pub fn channel(&self, c: usize) -> &[u8] {
        let n = self.grid * self.grid;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> u8 {
        self.data[(c * self.grid + row) * self.grid + col]
    }

    fn set(&mut self, c: usize, row: usize, col: usize, v: u8) {
        self.data[(c * self.grid + row) * self.grid + col] = v;
    }

    /// JSON header line followed by the raw channel bytes.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = StackHeader {
            format: STACK_FORMAT.into(),
            version: STACK_VERSION,
            grid: self.grid,
            channels: N_CHANNELS,
            meters_per_pixel: self.meters_per_pixel,
            reference: self.reference,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        out.write_all(&self.data)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("raster stack: missing header line".into()))?;
        let header: StackHeader = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| Error::Format(format!("raster stack header: {e}")))?;
        if header.format != STACK_FORMAT {
            return Err(Error::Format(format!("not a raster stack: {}", header.format)));
        }
        if header.version != STACK_VERSION {
            return Err(Error::UnsupportedVersion {
                found: header.version,
                supported: STACK_VERSION,
            });
        }
        let body = &bytes[nl + 1..];
        if header.channels != N_CHANNELS || body.len() != N_CHANNELS * header.grid * header.grid {
            return Err(Error::Format(format!(
                "raster stack body has {} bytes, expected {}",
                body.len(),
                N_CHANNELS * header.grid * header.grid
            )));
        }
        Ok(Self {
            grid: header.grid,
            meters_per_pixel: header.meters_per_pixel,
            reference: header.reference,
            data: body.to_vec(),
        })
    }
}

struct Sample {
    time: f64,
    position: Point,
    heading: f64,
    speed: f64,
    accel: f64,
}

impl Sample {
    fn of(time: f64, s: &AgentState) -> Self {
        Self {
            time,
            position: s.position(),
            heading: s.pose.heading,
            speed: s.speed_mps,
            accel: s.accel_mps2,
        }
    }
}

/// AV samples: history, current state, then the previous cycle's plan as its future.
fn av_samples(scene: &Scene, cfg: &RasterConfig) -> Vec<Sample> {
    let now = scene.timestamp_s;
    let mut out: Vec<Sample> = scene
        .av_history
        .iter()
        .filter(|h| h.time_s >= now - cfg.history_horizon_s - 1e-9)
        .map(|h| Sample::of(h.time_s - now, &h.state))
        .collect();
    out.push(Sample::of(0.0, &scene.av));
    if let Some(plan) = &scene.av_plan_prev {
        let mut prev = scene.av.position();
        let mut heading = scene.av.pose.heading;
        for p in &plan.points {
            let t = p.time_s - now;
            if t <= 1e-9 || t > cfg.prediction_horizon_s + 1e-9 {
                continue;
            }
            let pos = Point::new(p.x_m, p.y_m);
            // below a centimeter the direction is mostly rounding noise
            if pos.distance(prev) >= 0.01 {
                heading = (pos.y - prev.y).atan2(pos.x - prev.x);
                prev = pos;
            }
            out.push(Sample {
                time: t,
                position: pos,
                heading,
                speed: p.speed_mps,
                accel: p.accel_mps2,
            });
        }
    }
    out
}

fn agent_samples(scene: &Scene, cfg: &RasterConfig) -> Vec<Sample> {
    let now = scene.timestamp_s;
    let mut out = Vec::new();
    for track in &scene.agents {
        for h in &track.history {
            if h.time_s >= now - cfg.history_horizon_s - 1e-9 {
                out.push(Sample::of(h.time_s - now, &h.state));
            }
        }
        out.push(Sample::of(0.0, &track.state));
        for p in &track.predictions {
            if p.time_s - now <= cfg.prediction_horizon_s + 1e-9 {
                out.push(Sample::of(p.time_s - now, &p.state));
            }
        }
    }
    // stable: equal times keep scene order
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out
}

/// Renders the 10-channel stack for `scene`.
pub fn render_stack(scene: &Scene, cfg: &RasterConfig) -> RasterStack {
    let reference = scene.av.pose;
    let mut stack = RasterStack::blank(cfg.grid, cfg.meters_per_pixel, reference);

    let step = 0.5 * cfg.meters_per_pixel;
    for lane in &scene.lanes {
        for w in lane.windows(2) {
            let n = (w[0].distance(w[1]) / step).ceil().max(1.0) as usize;
            for i in 0..=n {
                if let Some((r, c)) = world_to_pixel(w[0].lerp(w[1], i as f64 / n as f64), &reference, cfg) {
                    stack.set(channel::LANES, r, c, 255);
                }
            }
        }
        if let [p] = lane.as_slice() {
            if let Some((r, c)) = world_to_pixel(*p, &reference, cfg) {
                stack.set(channel::LANES, r, c, 255);
            }
        }
    }

    let plot = |stack: &mut RasterStack, samples: &[Sample], base: usize| {
        for s in samples {
            if let Some((r, c)) = world_to_pixel(s.position, &reference, cfg) {
                stack.set(base, r, c, cfg.heading.encode(relative_heading(s.heading, reference.heading)));
                stack.set(base + 1, r, c, cfg.velocity.encode(s.speed));
                stack.set(base + 2, r, c, cfg.accel.encode(s.accel));
                stack.set(base + 3, r, c, cfg.time.encode(s.time));
            }
        }
    };
    plot(&mut stack, &av_samples(scene, cfg), channel::AV_HEADING);
    plot(&mut stack, &agent_samples(scene, cfg), channel::AGENT_HEADING);

    for track in &scene.agents {
        fill_box(&mut stack, &track.state, cfg);
    }
    stack
}

fn fill_box(stack: &mut RasterStack, state: &AgentState, cfg: &RasterConfig) {
    let reference = stack.reference;
    let corners = state.footprint().corners();
    let pixels: Vec<(f64, f64)> = corners
        .iter()
        .map(|&p| {
            let (fwd, left) = reference.to_local(p);
            let half = (cfg.grid / 2) as f64;
            (half - fwd / cfg.meters_per_pixel, half - left / cfg.meters_per_pixel)
        })
        .collect();
    let g = cfg.grid as f64;
    let r0 = pixels.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor().max(0.0);
    let r1 = pixels.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil().min(g - 1.0);
    let c0 = pixels.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0);
    let c1 = pixels.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().min(g - 1.0);
    if r0 <= r1 && c0 <= c1 {
        let (half_l, half_w) = (0.5 * state.bbox.length_m, 0.5 * state.bbox.width_m);
        for r in r0 as usize..=r1 as usize {
            for c in c0 as usize..=c1 as usize {
                let (fwd, left) = state.pose.to_local(pixel_to_world(r, c, &reference, cfg));
                if fwd.abs() <= half_l && left.abs() <= half_w {
                    stack.set(channel::AGENT_BOXES, r, c, 255);
                }
            }
        }
    }
    // small agents may fall between pixel centers
    if let Some((r, c)) = world_to_pixel(state.position(), &reference, cfg) {
        stack.set(channel::AGENT_BOXES, r, c, 255);
    }
}

/// Ground-truth label image: a disc per in-range agent, brighter for higher grades.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelImage {
    pub grid: usize,
    pub data: Vec<u8>,
}

impl LabelImage {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.grid + col]
    }
}

pub fn render_label_image(labels: &[LabeledAgent], scene: &Scene, cfg: &RasterConfig) -> Result<LabelImage> {
    let mut img = LabelImage {
        grid: cfg.grid,
        data: vec![0; cfg.grid * cfg.grid],
    };
    let radius = cfg.label_radius_px as i64;
    for label in labels {
        let track = scene.agent(label.agent_id)?;
        let Some((r, c)) = world_to_pixel(track.state.position(), &scene.av.pose, cfg) else {
            continue;
        };
        let value = GRADE_INTENSITY[label.grade.min(2) as usize];
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                if dr * dr + dc * dc > radius * radius {
                    continue;
                }
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr < 0 || cc < 0 || rr >= cfg.grid as i64 || cc >= cfg.grid as i64 {
                    continue;
                }
                let px = &mut img.data[rr as usize * cfg.grid + cc as usize];
                *px = (*px).max(value);
            }
        }
    }
    Ok(img)
}

/// Center pixels of in-range labeled agents, paired with their grades.
pub fn labeled_pixels(labels: &[LabeledAgent], scene: &Scene, cfg: &RasterConfig) -> Result<Vec<((usize, usize), u8)>> {
    let mut out = Vec::new();
    for label in labels {
        let track = scene.agent(label.agent_id)?;
        if let Some(px) = world_to_pixel(track.state.position(), &scene.av.pose, cfg) {
            out.push((px, label.grade));
        }
    }
    Ok(out)
}

/// Binary portable graymap (P5).
pub fn write_pgm<W: Write>(mut out: W, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Argument(format!("pgm: {} pixels for {width}x{height}", pixels.len())));
    }
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.write_all(pixels)?;
    Ok(())
}
