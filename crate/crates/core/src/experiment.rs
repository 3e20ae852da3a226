//! End-to-end comparison protocol: generate train and test scenes, label
//! them, train every model family and score all approaches on held-out
//! planning iterations.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cnn::{extract_cnn_features, train_cnn, CnnConfig, CnnExample, CnnModel, LabeledPixel, ScoreImage};
use crate::error::{Error, Result};
use crate::eval::{
    heuristic_scores, rank_agents, summarize, Approach, CnnFrame, EvalReport, IterationScores, LatencyStats, RankMode,
    RankedList, RankingModels, DEFAULT_KS,
};
use crate::features::{self, FeatureVector};
use crate::gbdt::{train_gbdt, GbdtConfig, GbdtModel, LossKind, Samples};
use crate::label::{label_scene, LabeledAgent, LabelerConfig, RankingDataset};
use crate::raster::{render_label_image, render_stack, world_to_pixel, RasterConfig};
use crate::scene::Scene;
use crate::sim::{generate_scenario, scenario_seed, ScenarioConfig};

/// Scenario index offset separating test seeds from training seeds.
const TEST_OFFSET: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub train_scenarios: usize,
    pub test_scenarios: usize,
    /// Keep every n-th tick of each scenario as a planning iteration.
    pub tick_stride: usize,
    pub scenario: ScenarioConfig,
    pub labeler: LabelerConfig,
    pub raster: RasterConfig,
    pub gbdt: GbdtConfig,
    pub cnn: CnnConfig,
    /// Upper bound on training iterations fed to each CNN.
    pub cnn_train_iterations: usize,
    pub ks: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            train_scenarios: 300,
            test_scenarios: 100,
            tick_stride: 5,
            scenario: ScenarioConfig::default(),
            labeler: LabelerConfig::default(),
            raster: RasterConfig::default(),
            gbdt: GbdtConfig::default(),
            cnn: CnnConfig::default(),
            cnn_train_iterations: 6000,
            ks: DEFAULT_KS.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Test,
}

fn scenario_config(cfg: &ExperimentConfig, kind: SplitKind, i: u64) -> ScenarioConfig {
    let index = match kind {
        SplitKind::Train => i,
        SplitKind::Test => TEST_OFFSET + i,
    };
    ScenarioConfig {
        seed: scenario_seed(cfg.seed, index),
        scenario_id: index,
        ..cfg.scenario.clone()
    }
}

fn planning_ticks(cfg: &ExperimentConfig, kind: SplitKind, i: u64) -> Result<impl Iterator<Item = Scene>> {
    let stride = cfg.tick_stride.max(1) as u32;
    Ok(generate_scenario(&scenario_config(cfg, kind, i))?
        .into_iter()
        .filter(move |s| s.tick % stride == 0))
}

/// Scenes of one split: `n` seeded scenarios, every `tick_stride`-th tick.
pub fn generate_split(cfg: &ExperimentConfig, kind: SplitKind, n: usize) -> Result<Vec<Scene>> {
    let mut out = Vec::new();
    for i in 0..n as u64 {
        out.extend(planning_ticks(cfg, kind, i)?);
    }
    Ok(out)
}

/// The first `n_scenes` planning iterations of a split, drawing scenarios in
/// the same order as [`generate_split`].
pub fn generate_scenes(cfg: &ExperimentConfig, kind: SplitKind, n_scenes: usize) -> Result<Vec<Scene>> {
    let mut out = Vec::with_capacity(n_scenes);
    let mut i = 0;
    while out.len() < n_scenes {
        let before = out.len();
        out.extend(planning_ticks(cfg, kind, i)?);
        if out.len() == before {
            return Err(Error::Config("scenario duration yields no planning iterations".into()));
        }
        i += 1;
    }
    out.truncate(n_scenes);
    Ok(out)
}

/// Everything the rankers need about one planning iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationData {
    pub scenario_id: u64,
    pub tick: u32,
    pub agent_ids: Vec<u32>,
    pub grades: Vec<u8>,
    pub features: Vec<FeatureVector>,
    /// Raster pixel of each agent, `None` outside the CNN's extent.
    pub pixels: Vec<Option<(usize, usize)>>,
}

impl IterationData {
    pub fn key(&self) -> String {
        format!("{}:{}", self.scenario_id, self.tick)
    }

    pub fn labels(&self) -> Vec<LabeledAgent> {
        self.agent_ids
            .iter()
            .zip(&self.grades)
            .map(|(&agent_id, &grade)| LabeledAgent { agent_id, grade })
            .collect()
    }

    pub fn labeled_pixels(&self) -> Vec<LabeledPixel> {
        self.pixels
            .iter()
            .zip(&self.grades)
            .filter_map(|(p, &g)| p.map(|(r, c)| (r, c, g)))
            .collect()
    }

    pub fn in_range(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_some()).count()
    }
}

/// Scenes paired with their labeled, featurized iterations.
#[derive(Clone, Debug, Default)]
pub struct SplitData {
    pub scenes: Vec<Scene>,
    pub iterations: Vec<IterationData>,
}

fn iteration(scene: &Scene, grades: Vec<u8>, raster: &RasterConfig) -> IterationData {
    IterationData {
        scenario_id: scene.scenario_id,
        tick: scene.tick,
        agent_ids: scene.agent_ids().collect(),
        grades,
        features: features::extract_all(scene),
        pixels: scene
            .agents
            .iter()
            .map(|t| world_to_pixel(t.state.position(), &scene.av.pose, raster))
            .collect(),
    }
}

/// Labels scenes with the planner oracle and extracts features.
pub fn prepare(scenes: Vec<Scene>, labeler: &LabelerConfig, raster: &RasterConfig) -> Result<SplitData> {
    labeler.validate()?;
    let iterations = scenes
        .iter()
        .map(|s| Ok(iteration(s, label_scene(s, labeler)?.iter().map(|l| l.grade).collect(), raster)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitData { scenes, iterations })
}

/// Uses grades from an existing dataset instead of re-running the labeler.
pub fn prepare_from_dataset(scenes: Vec<Scene>, dataset: &RankingDataset, raster: &RasterConfig) -> Result<SplitData> {
    let mut by_key: BTreeMap<(u64, u32, u32), u8> = BTreeMap::new();
    for r in &dataset.records {
        by_key.insert((r.scenario_id, r.tick, r.agent_id), r.grade);
    }
    let mut iterations = Vec::with_capacity(scenes.len());
    for s in &scenes {
        let grades = s
            .agent_ids()
            .map(|id| {
                by_key
                    .get(&(s.scenario_id, s.tick, id))
                    .copied()
                    .ok_or_else(|| Error::Data(format!("no label for agent {id} in scene {}", s.key())))
            })
            .collect::<Result<Vec<_>>>()?;
        iterations.push(iteration(s, grades, raster));
    }
    Ok(SplitData { scenes, iterations })
}

/// Labeled agents with their features for every agent of every scene.
pub fn dataset_with_features(data: &SplitData) -> RankingDataset {
    let mut ds = RankingDataset::default();
    for (scene, it) in data.scenes.iter().zip(&data.iterations) {
        for (i, track) in scene.agents.iter().enumerate() {
            ds.records.push(crate::label::RankingRecord {
                scenario_id: scene.scenario_id,
                tick: scene.tick,
                agent_id: it.agent_ids[i],
                grade: it.grades[i],
                snapshot: track.state,
                features: Some(it.features[i][..features::ENGINEERED_DIM].to_vec()),
            });
        }
    }
    ds
}

/// Per-agent CNN outputs for one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnOutputs {
    pub neighborhood: Vec<[f64; 6]>,
    /// Score at the agent's pixel, `None` off the raster.
    pub center: Vec<Option<f64>>,
}

fn cnn_outputs(scores: &ScoreImage, it: &IterationData) -> CnnOutputs {
    CnnOutputs {
        neighborhood: it.pixels.iter().map(|&p| extract_cnn_features(scores, p)).collect(),
        center: it
            .pixels
            .iter()
            .map(|p| p.map(|(r, c)| f64::from(scores.get(r, c))))
            .collect(),
    }
}

/// Runs the CNN on every iteration of a split.
pub fn run_cnn(cnn: &CnnModel, data: &SplitData, raster: &RasterConfig) -> Result<Vec<CnnOutputs>> {
    data.scenes
        .iter()
        .zip(&data.iterations)
        .map(|(s, it)| Ok(cnn_outputs(&cnn.forward(&render_stack(s, raster))?, it)))
        .collect()
}

/// Training examples for the CNN; pairwise training keeps only scenes with a
/// cross-grade pair among in-range agents.
pub fn cnn_examples(data: &SplitData, raster: &RasterConfig, loss: LossKind, cap: usize) -> Result<Vec<CnnExample>> {
    let mut out = Vec::new();
    for (scene, it) in data.scenes.iter().zip(&data.iterations) {
        if out.len() >= cap {
            break;
        }
        let labels = it.labeled_pixels();
        let useful = match loss {
            LossKind::Pairwise => labels.iter().any(|a| labels.iter().any(|b| a.2 != b.2)),
            LossKind::Pointwise => !labels.is_empty(),
        };
        if !useful {
            continue;
        }
        out.push(CnnExample {
            stack: render_stack(scene, raster),
            label_image: render_label_image(&it.labels(), scene, raster)?.data,
            labels,
        });
    }
    Ok(out)
}

/// GBDT training rows, with CNN features when given.
pub fn gbdt_samples(data: &SplitData, cnn: Option<&[CnnOutputs]>) -> Samples {
    let mut s = Samples::default();
    for (i, it) in data.iterations.iter().enumerate() {
        let start = s.features.len();
        for (j, fv) in it.features.iter().enumerate() {
            let mut row = fv.to_vec();
            if let Some(outs) = cnn {
                row[features::idx::CNN..].copy_from_slice(&outs[i].neighborhood[j]);
            }
            s.features.push(row);
            s.grades.push(it.grades[j]);
        }
        if s.features.len() > start {
            s.groups.push(start..s.features.len());
        }
    }
    s
}

impl Approach {
    pub fn gbdt_loss(self) -> Option<LossKind> {
        match self {
            Approach::PointwiseGbdt | Approach::PointwiseCnnPointwiseGbdt | Approach::PairwiseCnnPointwiseGbdt => {
                Some(LossKind::Pointwise)
            }
            Approach::PairwiseGbdt | Approach::PointwiseCnnPairwiseGbdt | Approach::PairwiseCnnPairwiseGbdt => {
                Some(LossKind::Pairwise)
            }
            _ => None,
        }
    }

    pub fn cnn_loss(self) -> Option<LossKind> {
        match self {
            Approach::PointwiseCnn | Approach::PointwiseCnnPointwiseGbdt | Approach::PointwiseCnnPairwiseGbdt => {
                Some(LossKind::Pointwise)
            }
            Approach::PairwiseCnn | Approach::PairwiseCnnPointwiseGbdt | Approach::PairwiseCnnPairwiseGbdt => {
                Some(LossKind::Pairwise)
            }
            _ => None,
        }
    }
}

/// Trained models keyed by what they are.
#[derive(Clone, Debug, Default)]
pub struct ModelSet {
    pub gbdt: BTreeMap<Approach, GbdtModel>,
    pub pointwise_cnn: Option<CnnModel>,
    pub pairwise_cnn: Option<CnnModel>,
}

impl ModelSet {
    pub fn cnn(&self, loss: LossKind) -> Option<&CnnModel> {
        match loss {
            LossKind::Pointwise => self.pointwise_cnn.as_ref(),
            LossKind::Pairwise => self.pairwise_cnn.as_ref(),
        }
    }

    fn cnn_slot(&mut self, loss: LossKind) -> &mut Option<CnnModel> {
        match loss {
            LossKind::Pointwise => &mut self.pointwise_cnn,
            LossKind::Pairwise => &mut self.pairwise_cnn,
        }
    }
}

/// Trains what `approaches` need: CNNs first, then GBDTs on engineered
/// features plus, for hybrids, the CNN's neighborhood features.
pub fn train_models(approaches: &[Approach], train: &SplitData, cfg: &ExperimentConfig) -> Result<ModelSet> {
    let mut models = ModelSet::default();
    let mut outputs: BTreeMap<&'static str, Vec<CnnOutputs>> = BTreeMap::new();
    for &a in approaches {
        if let Some(loss) = a.cnn_loss() {
            if models.cnn(loss).is_none() {
                let examples = cnn_examples(train, &cfg.raster, loss, cfg.cnn_train_iterations)?;
                let cnn_cfg = CnnConfig {
                    loss,
                    seed: cfg.cnn.seed ^ cfg.seed,
                    ..cfg.cnn.clone()
                };
                let model = train_cnn(&examples, cfg.raster.grid, &cnn_cfg)?;
                *models.cnn_slot(loss) = Some(model);
            }
            if a.gbdt_loss().is_some() && !outputs.contains_key(loss.as_str()) {
                outputs.insert(loss.as_str(), run_cnn(models.cnn(loss).expect("trained above"), train, &cfg.raster)?);
            }
        }
    }
    for &a in approaches {
        let Some(loss) = a.gbdt_loss() else { continue };
        let cnn = a.cnn_loss().map(|l| outputs[l.as_str()].as_slice());
        let gcfg = GbdtConfig {
            loss,
            seed: cfg.gbdt.seed ^ cfg.seed,
            ..cfg.gbdt.clone()
        };
        models.gbdt.insert(a, train_gbdt(&gbdt_samples(train, cnn), &gcfg)?);
    }
    Ok(models)
}

/// Which agents each arm is scored on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalScope {
    /// Every agent; CNN-only arms see only agents on the raster.
    AllAgents,
    /// Every arm sees only agents on the raster.
    CnnRange,
}

/// Scores `approaches` on the test split. Iterations without any agent on
/// the raster are skipped so every arm averages over the same iterations.
pub fn evaluate(approaches: &[Approach], models: &ModelSet, test: &SplitData, cfg: &ExperimentConfig, scope: EvalScope) -> Result<EvalReport> {
    let mut outputs: BTreeMap<&'static str, Vec<CnnOutputs>> = BTreeMap::new();
    for &a in approaches {
        if let Some(loss) = a.cnn_loss() {
            if !outputs.contains_key(loss.as_str()) {
                let cnn = models.cnn(loss).ok_or_else(|| Error::Evaluation {
                    approach: a.as_str().into(),
                    iteration: "-".into(),
                    reason: format!("no {} cnn model loaded", loss.as_str()),
                })?;
                outputs.insert(loss.as_str(), run_cnn(cnn, test, &cfg.raster)?);
            }
        }
    }
    let kept: Vec<usize> = (0..test.iterations.len())
        .filter(|&i| test.iterations[i].in_range() > 0)
        .collect();

    let mut per_approach = Vec::with_capacity(approaches.len());
    for &a in approaches {
        let mut iters = Vec::with_capacity(kept.len());
        for &i in &kept {
            let it = &test.iterations[i];
            let fvs: Vec<FeatureVector> = match a.cnn_loss() {
                Some(l) if a.gbdt_loss().is_some() => it
                    .features
                    .iter()
                    .zip(&outputs[l.as_str()][i].neighborhood)
                    .map(|(f, n)| {
                        let mut f = *f;
                        f[features::idx::CNN..].copy_from_slice(n);
                        f
                    })
                    .collect(),
                _ => it.features.clone(),
            };
            let scores: Vec<f64> = if let Some(model) = models.gbdt.get(&a) {
                fvs.iter().map(|f| model.predict(f)).collect::<Result<_>>()?
            } else if a == Approach::Heuristics {
                heuristic_scores(&fvs)
            } else if let Some(l) = a.cnn_loss() {
                outputs[l.as_str()][i].center.iter().map(|c| c.unwrap_or(f64::NAN)).collect()
            } else {
                return Err(Error::Evaluation {
                    approach: a.as_str().into(),
                    iteration: it.key(),
                    reason: "no gbdt model loaded".into(),
                });
            };
            let keep: Vec<usize> = (0..it.agent_ids.len())
                .filter(|&j| (scope == EvalScope::AllAgents && !a.is_cnn_only()) || it.pixels[j].is_some())
                .collect();
            iters.push(IterationScores {
                key: it.key(),
                agent_ids: keep.iter().map(|&j| it.agent_ids[j]).collect(),
                grades: keep.iter().map(|&j| it.grades[j]).collect(),
                scores: keep.iter().map(|&j| scores[j]).collect(),
            });
        }
        per_approach.push((a.as_str().to_string(), iters));
    }
    let title = match scope {
        EvalScope::AllAgents => "Average NDCG, all agents",
        EvalScope::CnnRange => "Average NDCG, agents within CNN range",
    };
    let mut report = summarize(title, &cfg.ks, &per_approach)?;
    report.config = serde_json::to_value(cfg)?;
    Ok(report)
}

/// One point of a model-complexity sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_trees: usize,
    pub max_depth: usize,
    pub ndcg: Vec<f64>,
}

/// Trains the pairwise hybrid GBDT at each `(n_trees, max_depth)` and reports
/// average NDCG on the test split. Needs the pairwise CNN in `models`.
pub fn complexity_sweep(
    models: &ModelSet,
    train: &SplitData,
    test: &SplitData,
    cfg: &ExperimentConfig,
    points: &[(usize, usize)],
) -> Result<Vec<SweepPoint>> {
    let cnn = models
        .cnn(LossKind::Pairwise)
        .ok_or_else(|| Error::Config("complexity sweep needs the pairwise cnn".into()))?;
    let train_out = run_cnn(cnn, train, &cfg.raster)?;
    let samples = gbdt_samples(train, Some(&train_out));
    let mut sweep_models = ModelSet {
        pairwise_cnn: Some(cnn.clone()),
        ..ModelSet::default()
    };
    let mut out = Vec::with_capacity(points.len());
    for &(n_trees, max_depth) in points {
        let gcfg = GbdtConfig {
            n_trees,
            max_depth,
            loss: LossKind::Pairwise,
            seed: cfg.gbdt.seed ^ cfg.seed,
            ..cfg.gbdt.clone()
        };
        sweep_models
            .gbdt
            .insert(Approach::PairwiseCnnPairwiseGbdt, train_gbdt(&samples, &gcfg)?);
        let report = evaluate(&[Approach::PairwiseCnnPairwiseGbdt], &sweep_models, test, cfg, EvalScope::AllAgents)?;
        out.push(SweepPoint {
            n_trees,
            max_depth,
            ndcg: report.rows[0].ndcg.clone(),
        });
    }
    Ok(out)
}

/// A single busy scene with `n_agents` agents, for timing.
pub fn crowd_scene(seed: u64, n_agents: usize) -> Result<Scene> {
    let cfg = ScenarioConfig {
        seed,
        n_agents,
        duration_s: 0.5,
        ..ScenarioConfig::default()
    };
    generate_scenario(&cfg)?
        .pop()
        .ok_or_else(|| Error::Config("timing scenario produced no scenes".into()))
}

/// Per-tick ranking latency over `repeats` runs. Gbdt-only times scoring and
/// sorting of precomputed features; pipelined times feature extraction plus
/// scoring against a ready CNN frame; fresh also includes the CNN forward.
pub fn measure_latency(models: &RankingModels, scene: &Scene, mode: RankMode, repeats: usize) -> Result<LatencyStats> {
    models.check()?;
    let ids: Vec<u32> = scene.agent_ids().collect();
    let mut ms = Vec::with_capacity(repeats);
    match mode {
        RankMode::GbdtOnly => {
            let fvs = features::extract_all(scene);
            for _ in 0..repeats {
                let t = Instant::now();
                let scores: Vec<f64> = fvs.iter().map(|f| models.gbdt.predict_unchecked(f)).collect();
                std::hint::black_box(RankedList::from_scores(&ids, &scores));
                ms.push(t.elapsed().as_secs_f64() * 1e3);
            }
        }
        RankMode::HybridPipelined => {
            let frame = match &models.cnn {
                Some(cnn) => Some(CnnFrame::compute(cnn, scene, &models.raster)?),
                None => None,
            };
            for _ in 0..repeats {
                let t = Instant::now();
                std::hint::black_box(rank_agents(scene, mode, models, frame.as_ref())?);
                ms.push(t.elapsed().as_secs_f64() * 1e3);
            }
        }
        RankMode::HybridFresh => {
            for _ in 0..repeats {
                let t = Instant::now();
                std::hint::black_box(rank_agents(scene, mode, models, None)?);
                ms.push(t.elapsed().as_secs_f64() * 1e3);
            }
        }
    }
    Ok(LatencyStats::from_samples(mode.as_str(), ids.len(), ms))
}

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "agentrank-models";
const MANIFEST_VERSION: u32 = 1;

/// Index of a saved model directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    /// Approach name to GBDT file.
    pub gbdt: BTreeMap<String, String>,
    /// Loss name to CNN file.
    pub cnn: BTreeMap<String, String>,
    pub config: ExperimentConfig,
}

impl ModelSet {
    /// Writes every model plus a manifest into `dir`.
    pub fn save(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<Manifest> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            gbdt: BTreeMap::new(),
            cnn: BTreeMap::new(),
            config: cfg.clone(),
        };
        for (a, model) in &self.gbdt {
            let file = format!("gbdt-{}.json", a.as_str());
            std::fs::write(dir.join(&file), model.to_bytes()?)?;
            manifest.gbdt.insert(a.as_str().into(), file);
        }
        for (loss, model) in [(LossKind::Pointwise, &self.pointwise_cnn), (LossKind::Pairwise, &self.pairwise_cnn)] {
            if let Some(m) = model {
                let file = format!("cnn-{}.bin", loss.as_str());
                std::fs::write(dir.join(&file), m.to_bytes()?)?;
                manifest.cnn.insert(loss.as_str().into(), file);
            }
        }
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(manifest)
    }

    /// Loads a directory written by [`ModelSet::save`].
    pub fn load(dir: &Path) -> Result<(ModelSet, ExperimentConfig)> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad model manifest: {e}")))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Format(format!("not a model manifest: format `{}`", manifest.format)));
        }
        if manifest.version > MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion {
                found: manifest.version,
                supported: MANIFEST_VERSION,
            });
        }
        let mut set = ModelSet::default();
        for (name, file) in &manifest.gbdt {
            let a: Approach = name.parse()?;
            set.gbdt.insert(a, GbdtModel::from_bytes(&std::fs::read(dir.join(file))?)?);
        }
        for (name, file) in &manifest.cnn {
            let loss: LossKind = name.parse()?;
            *set.cnn_slot(loss) = Some(CnnModel::from_bytes(&std::fs::read(dir.join(file))?)?);
        }
        Ok((set, manifest.config))
    }

    /// The GBDT and CNN an approach ranks with, for single-scene ranking.
    pub fn ranking_models(&self, approach: Approach, raster: &RasterConfig) -> Result<RankingModels> {
        let gbdt = self
            .gbdt
            .get(&approach)
            .ok_or_else(|| Error::Config(format!("no gbdt model for `{}`", approach.as_str())))?
            .clone();
        let cnn = approach.cnn_loss().and_then(|l| self.cnn(l)).cloned();
        Ok(RankingModels {
            gbdt,
            cnn,
            raster: raster.clone(),
        })
    }
}
