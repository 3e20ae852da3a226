//! Ranking metrics, the ranking pipeline used on board, and evaluation reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cnn::{extract_cnn_features, CnnModel, ScoreImage};
use crate::error::{Error, Result};
use crate::features::{self, heuristic_score, FeatureVector, ReferenceTrajectory, FEATURE_DIM, FEATURE_SCHEMA_VERSION};
use crate::gbdt::GbdtModel;
use crate::geometry::Pose;
use crate::raster::{render_stack, world_to_pixel, RasterConfig};
use crate::scene::Scene;

pub const DEFAULT_KS: [usize; 7] = [1, 3, 5, 10, 20, 30, 40];

/// `r(1) + sum_{k=2..K} r(k) / log2(k)` over the first `K` entries.
pub fn dcg_at_k(grades: &[u8], k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::Argument("K must be at least 1".into()));
    }
    Ok(grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| if i == 0 { f64::from(g) } else { f64::from(g) / ((i + 1) as f64).log2() })
        .sum())
}

/// DCG normalized by the DCG of the grade-sorted order; 1 when nothing is relevant.
pub fn ndcg_at_k(grades: &[u8], k: usize) -> Result<f64> {
    let dcg = dcg_at_k(grades, k)?;
    let mut ideal = grades.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_at_k(&ideal, k)?;
    Ok(if idcg == 0.0 { 1.0 } else { dcg / idcg })
}

/// Fraction of lists containing a grade-2 entry whose first entry has grade 2;
/// `None` when no list contains one.
pub fn top1_frequency<L: AsRef<[u8]>>(lists: &[L]) -> Option<f64> {
    let mut counted = 0usize;
    let mut hits = 0usize;
    for l in lists {
        let l = l.as_ref();
        if l.contains(&2) {
            counted += 1;
            if l[0] == 2 {
                hits += 1;
            }
        }
    }
    (counted > 0).then(|| hits as f64 / counted as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub agent_id: u32,
    pub score: f64,
    pub grade: Option<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Sorts by score, highest first, ties by ascending agent id.
    pub fn from_scores(ids: &[u32], scores: &[f64]) -> Self {
        let mut entries: Vec<RankedEntry> = ids
            .iter()
            .zip(scores)
            .map(|(&agent_id, &score)| RankedEntry {
                agent_id,
                score,
                grade: None,
            })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.agent_id.cmp(&b.agent_id)));
        Self { entries }
    }

    pub fn ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.agent_id).collect()
    }

    /// Grades in ranked order; unknown grades count as 0.
    pub fn grades(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.grade.unwrap_or(0)).collect()
    }
}

/// Ranks `ids` by `scores` and returns the grades in ranked order.
pub fn ranked_grades(ids: &[u32], scores: &[f64], grades: &[u8]) -> Vec<u8> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ids[a].cmp(&ids[b])));
    order.into_iter().map(|i| grades[i]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMode {
    GbdtOnly,
    HybridFresh,
    HybridPipelined,
}

impl RankMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::GbdtOnly => "gbdt_only",
            Self::HybridFresh => "hybrid_fresh",
            Self::HybridPipelined => "hybrid_pipelined",
        }
    }
}

impl std::str::FromStr for RankMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbdt_only" => Ok(Self::GbdtOnly),
            "hybrid_fresh" => Ok(Self::HybridFresh),
            "hybrid_pipelined" => Ok(Self::HybridPipelined),
            other => Err(Error::Config(format!("unknown ranking mode `{other}`"))),
        }
    }
}

/// A CNN score image together with the AV pose it was rendered around.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnFrame {
    pub reference: Pose,
    pub scores: ScoreImage,
}

impl CnnFrame {
    pub fn compute(cnn: &CnnModel, scene: &Scene, raster: &RasterConfig) -> Result<Self> {
        Ok(Self {
            reference: scene.av.pose,
            scores: cnn.forward(&render_stack(scene, raster))?,
        })
    }
}

pub struct RankingModels {
    pub gbdt: GbdtModel,
    pub cnn: Option<CnnModel>,
    pub raster: RasterConfig,
}

impl RankingModels {
    pub fn check(&self) -> Result<()> {
        self.gbdt.check_schema(FEATURE_SCHEMA_VERSION, FEATURE_DIM)?;
        if let Some(cnn) = &self.cnn {
            if cnn.grid != self.raster.grid {
                return Err(Error::Compatibility(format!(
                    "cnn grid {} does not match raster grid {}",
                    cnn.grid, self.raster.grid
                )));
            }
        }
        Ok(())
    }
}

/// Writes CNN neighborhood features into every feature vector; agents off the
/// frame's raster keep `-1`.
pub fn attach_cnn_features(scene: &Scene, frame: &CnnFrame, raster: &RasterConfig, fvs: &mut [FeatureVector]) {
    for (track, fv) in scene.agents.iter().zip(fvs.iter_mut()) {
        let pixel = world_to_pixel(track.state.position(), &frame.reference, raster);
        fv[features::idx::CNN..].copy_from_slice(&extract_cnn_features(&frame.scores, pixel));
    }
}

/// Ranks every agent in `scene`. `previous` is the CNN frame from the last
/// tick, used only in pipelined mode; without one the CNN slots stay `-1`.
pub fn rank_agents(scene: &Scene, mode: RankMode, models: &RankingModels, previous: Option<&CnnFrame>) -> Result<RankedList> {
    models.check()?;
    let reference = ReferenceTrajectory::new(scene);
    let mut fvs: Vec<FeatureVector> = scene
        .agents
        .iter()
        .map(|t| features::engineered_with(scene, &reference, &t.state))
        .collect();
    match mode {
        RankMode::GbdtOnly => {}
        RankMode::HybridFresh => {
            let cnn = models
                .cnn
                .as_ref()
                .ok_or_else(|| Error::Compatibility("hybrid ranking needs a cnn model".into()))?;
            attach_cnn_features(scene, &CnnFrame::compute(cnn, scene, &models.raster)?, &models.raster, &mut fvs);
        }
        RankMode::HybridPipelined => {
            if let Some(frame) = previous {
                attach_cnn_features(scene, frame, &models.raster, &mut fvs);
            }
        }
    }
    let scores: Vec<f64> = fvs.iter().map(|f| models.gbdt.predict_unchecked(f)).collect();
    let ids: Vec<u32> = scene.agent_ids().collect();
    Ok(RankedList::from_scores(&ids, &scores))
}

/// Keeps the previous tick's CNN output and ranks with it, as on board where
/// the network runs concurrently and its result is consumed one tick later.
pub struct PipelinedRanker<'a> {
    pub models: &'a RankingModels,
    previous: Option<(u64, CnnFrame)>,
}

impl<'a> PipelinedRanker<'a> {
    pub fn new(models: &'a RankingModels) -> Self {
        Self { models, previous: None }
    }

    /// Ranks with the last frame of the same scenario, then refreshes the frame.
    pub fn tick(&mut self, scene: &Scene) -> Result<RankedList> {
        let prev = self
            .previous
            .as_ref()
            .filter(|(scenario, _)| *scenario == scene.scenario_id)
            .map(|(_, f)| f);
        let ranked = rank_agents(scene, RankMode::HybridPipelined, self.models, prev)?;
        if let Some(cnn) = &self.models.cnn {
            self.previous = Some((scene.scenario_id, CnnFrame::compute(cnn, scene, &self.models.raster)?));
        }
        Ok(ranked)
    }
}

/// The nine compared approaches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    PointwiseGbdt,
    PairwiseGbdt,
    PointwiseCnn,
    PairwiseCnn,
    PointwiseCnnPointwiseGbdt,
    PairwiseCnnPointwiseGbdt,
    PointwiseCnnPairwiseGbdt,
    PairwiseCnnPairwiseGbdt,
    Heuristics,
}

impl Approach {
    pub const ALL: [Approach; 9] = [
        Approach::PointwiseGbdt,
        Approach::PairwiseGbdt,
        Approach::PointwiseCnn,
        Approach::PairwiseCnn,
        Approach::PointwiseCnnPointwiseGbdt,
        Approach::PairwiseCnnPointwiseGbdt,
        Approach::PointwiseCnnPairwiseGbdt,
        Approach::PairwiseCnnPairwiseGbdt,
        Approach::Heuristics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::PointwiseGbdt => "pointwise-gbdt",
            Approach::PairwiseGbdt => "pairwise-gbdt",
            Approach::PointwiseCnn => "pointwise-cnn",
            Approach::PairwiseCnn => "pairwise-cnn",
            Approach::PointwiseCnnPointwiseGbdt => "pointwise-cnn+pointwise-gbdt",
            Approach::PairwiseCnnPointwiseGbdt => "pairwise-cnn+pointwise-gbdt",
            Approach::PointwiseCnnPairwiseGbdt => "pointwise-cnn+pairwise-gbdt",
            Approach::PairwiseCnnPairwiseGbdt => "pairwise-cnn+pairwise-gbdt",
            Approach::Heuristics => "heuristics",
        }
    }

    pub fn is_cnn_only(self) -> bool {
        matches!(self, Approach::PointwiseCnn | Approach::PairwiseCnn)
    }
}

impl std::str::FromStr for Approach {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let alias = match s {
            "hybrid-pairwise" => "pairwise-cnn+pairwise-gbdt",
            "hybrid-pointwise" => "pointwise-cnn+pointwise-gbdt",
            other => other,
        };
        Approach::ALL
            .into_iter()
            .find(|a| a.as_str() == alias)
            .ok_or_else(|| Error::Config(format!("unknown approach `{s}`")))
    }
}

/// Scores of one approach on one planning iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationScores {
    pub key: String,
    pub agent_ids: Vec<u32>,
    pub grades: Vec<u8>,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproachRow {
    pub approach: String,
    /// Average NDCG per entry of the report's `ks`.
    pub ndcg: Vec<f64>,
    pub top1: Option<f64>,
    pub iterations: usize,
    pub agents: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mode: String,
    pub agents: usize,
    pub samples: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub worst_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(mode: &str, agents: usize, mut ms: Vec<f64>) -> Self {
        ms.sort_by(f64::total_cmp);
        let pick = |q: f64| {
            if ms.is_empty() {
                0.0
            } else {
                ms[((ms.len() - 1) as f64 * q).round() as usize]
            }
        };
        Self {
            mode: mode.into(),
            agents,
            samples: ms.len(),
            p50_ms: pick(0.5),
            p95_ms: pick(0.95),
            worst_ms: ms.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub title: String,
    pub ks: Vec<usize>,
    pub iterations: usize,
    pub rows: Vec<ApproachRow>,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub latency: Vec<LatencyStats>,
}

impl EvalReport {
    pub fn row(&self, approach: Approach) -> Option<&ApproachRow> {
        self.rows.iter().find(|r| r.approach == approach.as_str())
    }

    /// Average NDCG@k of an approach, if both are present.
    pub fn ndcg(&self, approach: Approach, k: usize) -> Option<f64> {
        let i = self.ks.iter().position(|&x| x == k)?;
        self.row(approach).map(|r| r.ndcg[i])
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.approach.len()).max().unwrap_or(8).max(8);
        let mut s = String::new();
        let _ = writeln!(s, "{} ({} iterations)", self.title, self.iterations);
        let _ = write!(s, "{:<width$}", "approach");
        for k in &self.ks {
            let _ = write!(s, " {:>8}", format!("NDCG@{k}"));
        }
        let _ = writeln!(s, " {:>8}", "top-1");
        for r in &self.rows {
            let _ = write!(s, "{:<width$}", r.approach);
            for v in &r.ndcg {
                let _ = write!(s, " {v:>8.4}");
            }
            match r.top1 {
                Some(t) => {
                    let _ = writeln!(s, " {:>7.2}%", 100.0 * t);
                }
                None => {
                    let _ = writeln!(s, " {:>8}", "n/a");
                }
            }
        }
        for l in &self.latency {
            let _ = writeln!(
                s,
                "latency {} @ {} agents: p50 {:.3} ms, p95 {:.3} ms, worst {:.3} ms ({} runs)",
                l.mode, l.agents, l.p50_ms, l.p95_ms, l.worst_ms, l.samples
            );
        }
        s
    }

    /// Long-format curve data: `approach,k,ndcg`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("approach,k,ndcg\n");
        for r in &self.rows {
            for (k, v) in self.ks.iter().zip(&r.ndcg) {
                let _ = writeln!(s, "{},{k},{v}", r.approach);
            }
        }
        s
    }
}

/// Averages per-iteration NDCG@k and top-1 frequency for each approach.
/// Rows come out sorted by NDCG at the first `k`, best first.
pub fn summarize(title: &str, ks: &[usize], per_approach: &[(String, Vec<IterationScores>)]) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(per_approach.len());
    let mut iterations = 0;
    for (name, iters) in per_approach {
        let mut sums = vec![0.0; ks.len()];
        let mut lists = Vec::with_capacity(iters.len());
        let mut agents = 0;
        for it in iters {
            if it.scores.is_empty() {
                return Err(Error::Evaluation {
                    approach: name.clone(),
                    iteration: it.key.clone(),
                    reason: "no agent scored".into(),
                });
            }
            if let Some(bad) = it.scores.iter().position(|s| !s.is_finite()) {
                return Err(Error::Evaluation {
                    approach: name.clone(),
                    iteration: it.key.clone(),
                    reason: format!("non-finite score for agent {}", it.agent_ids[bad]),
                });
            }
            let ranked = ranked_grades(&it.agent_ids, &it.scores, &it.grades);
            for (s, &k) in sums.iter_mut().zip(ks) {
                *s += ndcg_at_k(&ranked, k)?;
            }
            agents += ranked.len();
            lists.push(ranked);
        }
        let n = iters.len().max(1) as f64;
        iterations = iterations.max(iters.len());
        rows.push(ApproachRow {
            approach: name.clone(),
            ndcg: sums.iter().map(|s| s / n).collect(),
            top1: top1_frequency(&lists),
            iterations: iters.len(),
            agents,
        });
    }
    rows.sort_by(|a, b| {
        let (x, y) = (a.ndcg.first().copied().unwrap_or(0.0), b.ndcg.first().copied().unwrap_or(0.0));
        y.total_cmp(&x).then_with(|| a.approach.cmp(&b.approach))
    });
    Ok(EvalReport {
        title: title.into(),
        ks: ks.to_vec(),
        iterations,
        rows,
        config: serde_json::Value::Null,
        latency: Vec::new(),
    })
}

/// Heuristic scores for a set of feature vectors.
pub fn heuristic_scores(fvs: &[FeatureVector]) -> Vec<f64> {
    fvs.iter().map(heuristic_score).collect()
}
