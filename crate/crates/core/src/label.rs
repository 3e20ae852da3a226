//! Ground-truth importance grades from the planner oracle.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::distance::{plan_distance, DistanceWeights};
use crate::error::{Error, Result};
use crate::planner::{Planner, PlannerConfig};
use crate::scene::{AgentState, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMethod {
    ActiveConstraints,
    Blackbox,
}

impl std::str::FromStr for LabelMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" | "active_constraints" => Ok(LabelMethod::ActiveConstraints),
            "blackbox" => Ok(LabelMethod::Blackbox),
            _ => Err(Error::Config(format!("unknown labeling method `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelerConfig {
    /// Change at or above this is graded "most relevant".
    pub t1_threshold: f64,
    /// Change at or above this (and below `t1`) is graded "relevant".
    pub t2_threshold: f64,
    pub weights: DistanceWeights,
    pub method: LabelMethod,
    pub planner: PlannerConfig,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self {
            t1_threshold: 2.0,
            t2_threshold: 0.5,
            weights: DistanceWeights::default(),
            method: LabelMethod::ActiveConstraints,
            planner: PlannerConfig::default(),
        }
    }
}

impl LabelerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1_threshold > self.t2_threshold && self.t2_threshold > 0.0) {
            return Err(Error::Config("thresholds must satisfy t1 > t2 > 0".into()));
        }
        if !(self.weights.geometry >= 0.0 && self.weights.speed >= 0.0) {
            return Err(Error::Config("distance weights must be non-negative".into()));
        }
        Ok(())
    }

    pub fn grade(&self, delta: f64) -> u8 {
        grade_for(delta, self.t1_threshold, self.t2_threshold)
    }
}

/// Three-way bucketing; boundaries belong to the higher grade.
pub fn grade_for(delta: f64, t1: f64, t2: f64) -> u8 {
    if delta >= t1 {
        2
    } else if delta >= t2 {
        1
    } else {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledAgent {
    pub agent_id: u32,
    pub grade: u8,
}

/// Grades every agent by its attribution in a single plan over all agents.
pub fn label_active_constraints(scene: &Scene, cfg: &LabelerConfig) -> Result<Vec<LabeledAgent>> {
    let ids: Vec<u32> = scene.agent_ids().collect();
    let plan = Planner::new(cfg.planner.clone()).plan(scene, &ids)?;
    Ok(ids
        .iter()
        .map(|&id| LabeledAgent {
            agent_id: id,
            grade: cfg.grade(plan.attribution(id).unwrap_or(0.0)),
        })
        .collect())
}

/// Grades every agent by d(f(∅), f({agent})) using only the planner's output trajectories.
pub fn label_blackbox(scene: &Scene, cfg: &LabelerConfig) -> Result<Vec<LabeledAgent>> {
    let planner = Planner::new(cfg.planner.clone());
    let nominal = planner.plan(scene, &[])?;
    scene
        .agent_ids()
        .map(|id| {
            let alone = planner.plan(scene, &[id])?;
            let d = plan_distance(&nominal, &alone, cfg.weights)?;
            Ok(LabeledAgent {
                agent_id: id,
                grade: cfg.grade(d),
            })
        })
        .collect()
}

pub fn label_scene(scene: &Scene, cfg: &LabelerConfig) -> Result<Vec<LabeledAgent>> {
    match cfg.method {
        LabelMethod::ActiveConstraints => label_active_constraints(scene, cfg),
        LabelMethod::Blackbox => label_blackbox(scene, cfg),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub scenario_id: u64,
    pub tick: u32,
    pub agent_id: u32,
    pub grade: u8,
    pub snapshot: AgentState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

impl RankingRecord {
    pub fn iteration(&self) -> (u64, u32) {
        (self.scenario_id, self.tick)
    }
}

/// Records grouped contiguously by planning iteration, in scene order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingDataset {
    pub records: Vec<RankingRecord>,
}

impl RankingDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index ranges of each planning iteration.
    pub fn groups(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.records.len() {
            if i == self.records.len() || self.records[i].iteration() != self.records[start].iteration() {
                out.push(start..i);
                start = i;
            }
        }
        out
    }

    pub fn grade_histogram(&self) -> [usize; 3] {
        let mut h = [0; 3];
        for r in &self.records {
            h[r.grade.min(2) as usize] += 1;
        }
        h
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line).map_err(|e| Error::Format(format!("record line {}: {e}", lineno + 1)))?,
            );
        }
        Ok(Self { records })
    }
}

/// Labels every agent of every scene; one record per (scene, agent).
pub fn generate_dataset(scenes: &[Scene], cfg: &LabelerConfig) -> Result<RankingDataset> {
    cfg.validate()?;
    let mut records = Vec::new();
    for scene in scenes {
        let labels = label_scene(scene, cfg)?;
        for (label, track) in labels.iter().zip(&scene.agents) {
            records.push(RankingRecord {
                scenario_id: scene.scenario_id,
                tick: scene.tick,
                agent_id: label.agent_id,
                grade: label.grade,
                snapshot: track.state,
                features: None,
            });
        }
    }
    Ok(RankingDataset { records })
}

/// Per-scene comparison of the two labeling methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub scene: String,
    pub agents: usize,
    pub agreeing: usize,
    /// Designated agent grades (active, blackbox) for scripted scenes.
    pub designated: Option<(u8, u8)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub rows: Vec<AgreementRow>,
    /// Per-method grade histograms: (active, blackbox).
    pub histograms: ([usize; 3], [usize; 3]),
}

impl AgreementReport {
    pub fn overall_agreement(&self) -> f64 {
        let total: usize = self.rows.iter().map(|r| r.agents).sum();
        if total == 0 {
            return 1.0;
        }
        self.rows.iter().map(|r| r.agreeing).sum::<usize>() as f64 / total as f64
    }

    pub fn designated_agreement(&self) -> Option<f64> {
        let d: Vec<_> = self.rows.iter().filter_map(|r| r.designated).collect();
        (!d.is_empty()).then(|| d.iter().filter(|(a, b)| a == b).count() as f64 / d.len() as f64)
    }
}

pub fn agreement_report(scenes: &[Scene], cfg: &LabelerConfig) -> Result<AgreementReport> {
    let mut report = AgreementReport::default();
    for scene in scenes {
        let active = label_active_constraints(scene, cfg)?;
        let blackbox = label_blackbox(scene, cfg)?;
        let by_id: BTreeMap<u32, (u8, u8)> = active
            .iter()
            .zip(&blackbox)
            .map(|(a, b)| (a.agent_id, (a.grade, b.grade)))
            .collect();
        for (a, b) in by_id.values() {
            report.histograms.0[*a as usize] += 1;
            report.histograms.1[*b as usize] += 1;
        }
        report.rows.push(AgreementRow {
            scene: scene.key(),
            agents: by_id.len(),
            agreeing: by_id.values().filter(|(a, b)| a == b).count(),
            designated: scene.scripted.as_ref().and_then(|m| by_id.get(&m.most_relevant).copied()),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_inclusive_at_higher_grade() {
        assert_eq!(grade_for(2.0, 2.0, 0.5), 2);
        assert_eq!(grade_for(1.999, 2.0, 0.5), 1);
        assert_eq!(grade_for(0.5, 2.0, 0.5), 1);
        assert_eq!(grade_for(0.0, 2.0, 0.5), 0);
    }

    #[test]
    fn config_validation() {
        let bad = LabelerConfig {
            t1_threshold: 0.5,
            t2_threshold: 1.0,
            ..LabelerConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(LabelerConfig::default().validate().is_ok());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("active".parse::<LabelMethod>().unwrap(), LabelMethod::ActiveConstraints);
        assert_eq!("blackbox".parse::<LabelMethod>().unwrap(), LabelMethod::Blackbox);
        assert!("oracle".parse::<LabelMethod>().is_err());
    }
}
