use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use agentrank::config::parse_kv;
use agentrank::experiment::{
    crowd_scene, dataset_with_features, evaluate, generate_scenes, generate_split, measure_latency, prepare,
    prepare_from_dataset, train_models, SplitKind,
};
use agentrank::label::{agreement_report, generate_dataset, label_scene};
use agentrank::raster::{render_label_image, render_stack, CHANNEL_NAMES};
use agentrank::scene::{read_scenes, write_scenes};
use agentrank::{
    Approach, EvalScope, ExperimentConfig, LabelMethod, ModelSet, RankMode, RankingDataset, Scene, ScriptedName,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "agentrank", version, about = "Agent relevance ranking: data, training, evaluation, timing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate scenarios, label them and write a ranking dataset.
    GenData(GenData),
    /// Train ranking models from a generated dataset.
    Train(Train),
    /// Score trained models on a held-out dataset.
    Eval(Eval),
    /// Time per-tick ranking on a crowded scene.
    Bench(Bench),
    /// Dump raster channels and the label image of one scene as PGM files.
    InspectRaster(InspectRaster),
}

/// Options shared by every subcommand. Later sources win:
/// defaults, then `--config`, then `--set`, then explicit flags.
#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set gbdt.max_depth=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Raster side length in pixels.
    #[arg(long)]
    grid: Option<usize>,
}

impl Common {
    fn resolve(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.set_all(&parse_kv(&text)?)?;
        }
        let pairs = self
            .set
            .iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))
            })
            .collect::<Result<Vec<_>>>()?;
        cfg.set_all(&pairs)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(grid) = self.grid {
            cfg.set("raster.grid", &grid.to_string())?;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

impl Split {
    fn kind(self) -> SplitKind {
        match self {
            Split::Train => SplitKind::Train,
            Split::Test => SplitKind::Test,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Active,
    Blackbox,
    Both,
}

#[derive(Args)]
struct GenData {
    #[command(flatten)]
    common: Common,
    /// Number of planning iterations; defaults to the whole split.
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long, value_enum, default_value = "train")]
    split: Split,
    /// Agents per scenario.
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long, value_enum, default_value = "active")]
    method: Method,
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[command(flatten)]
    common: Common,
    /// Directory written by `gen-data` (reads the train split).
    #[arg(long, default_value = "data")]
    data: PathBuf,
    /// Approach name, or `all`.
    #[arg(long, default_value = "all")]
    approach: String,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value = "models")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    All,
    CnnRange,
}

#[derive(Args)]
struct Eval {
    /// Directory written by `train`.
    #[arg(long, default_value = "models")]
    models: PathBuf,
    /// Directory written by `gen-data` (reads the test split).
    #[arg(long, default_value = "data")]
    data: PathBuf,
    /// Approach name, or `all` for every saved model.
    #[arg(long, default_value = "all")]
    approach: String,
    #[arg(long, value_enum, default_value = "all")]
    scope: Scope,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Args)]
struct Bench {
    #[arg(long, default_value = "models")]
    models: PathBuf,
    #[arg(long, default_value = "hybrid-pairwise")]
    approach: String,
    #[arg(long, default_value_t = 2000)]
    agents: usize,
    /// gbdt_only, hybrid_fresh, hybrid_pipelined, or all.
    #[arg(long, default_value = "all")]
    mode: String,
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct InspectRaster {
    #[command(flatten)]
    common: Common,
    /// Scenes file written by `gen-data`.
    #[arg(long, conflicts_with = "scripted")]
    scenes: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// One of the scripted scenarios, e.g. `lead_brake`; uses its last scene.
    #[arg(long)]
    scripted: Option<String>,
    #[arg(long, default_value = "raster")]
    out: PathBuf,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::InspectRaster(a) => inspect_raster(a),
    }
}

fn approaches(name: &str) -> Result<Vec<Approach>> {
    if name == "all" {
        return Ok(Approach::ALL.to_vec());
    }
    name.split(',').map(|n| Ok(n.trim().parse::<Approach>()?)).collect()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn write_dataset(path: &Path, ds: &RankingDataset) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    ds.write_jsonl(&mut f)?;
    f.flush()?;
    Ok(())
}

fn read_split(dir: &Path, split: &str) -> Result<(Vec<Scene>, RankingDataset)> {
    let scenes_path = dir.join(format!("{split}.scenes.jsonl"));
    let ranking_path = dir.join(format!("{split}.ranking.jsonl"));
    let scenes = read_scenes(BufReader::new(
        File::open(&scenes_path).with_context(|| format!("opening {}", scenes_path.display()))?,
    ))?;
    let ds = RankingDataset::read_jsonl(BufReader::new(
        File::open(&ranking_path).with_context(|| format!("opening {}", ranking_path.display()))?,
    ))?;
    Ok((scenes, ds))
}

fn gen_data(a: GenData) -> Result<()> {
    let mut cfg = a.common.resolve(ExperimentConfig::default())?;
    if let Some(n) = a.agents {
        cfg.scenario.n_agents = n;
    }
    match a.method {
        Method::Active | Method::Both => cfg.labeler.method = LabelMethod::ActiveConstraints,
        Method::Blackbox => cfg.labeler.method = LabelMethod::Blackbox,
    }
    let kind = a.split.kind();
    let scenes = match a.scenes {
        Some(n) => generate_scenes(&cfg, kind, n)?,
        None => {
            let n = match kind {
                SplitKind::Train => cfg.train_scenarios,
                SplitKind::Test => cfg.test_scenarios,
            };
            generate_split(&cfg, kind, n)?
        }
    };
    if scenes.is_empty() {
        bail!("no scenes requested");
    }
    let data = prepare(scenes, &cfg.labeler, &cfg.raster)?;
    let ds = dataset_with_features(&data);

    fs::create_dir_all(&a.out)?;
    let split = a.split.name();
    let mut f = BufWriter::new(File::create(a.out.join(format!("{split}.scenes.jsonl")))?);
    write_scenes(&mut f, &data.scenes)?;
    f.flush()?;
    write_dataset(&a.out.join(format!("{split}.ranking.jsonl")), &ds)?;

    let scenarios: std::collections::BTreeSet<u64> = data.scenes.iter().map(|s| s.scenario_id).collect();
    let mut summary = serde_json::json!({
        "split": split,
        "seed": cfg.seed,
        "scenarios": scenarios.len(),
        "iterations": data.scenes.len(),
        "records": ds.len(),
        "grade_histogram": ds.grade_histogram(),
        "config": cfg,
    });
    if a.method == Method::Both {
        let blackbox_cfg = agentrank::LabelerConfig {
            method: LabelMethod::Blackbox,
            ..cfg.labeler.clone()
        };
        let blackbox = generate_dataset(&data.scenes, &blackbox_cfg)?;
        write_dataset(&a.out.join(format!("{split}.blackbox.ranking.jsonl")), &blackbox)?;
        let report = agreement_report(&data.scenes, &cfg.labeler)?;
        write_json(&a.out.join("agreement.json"), &report)?;
        summary["agreement"] = serde_json::json!({
            "overall": report.overall_agreement(),
            "blackbox_grade_histogram": blackbox.grade_histogram(),
        });
    }
    write_json(&a.out.join(format!("{split}.summary.json")), &summary)?;
    summary.as_object_mut().unwrap().remove("config");
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn train(a: Train) -> Result<()> {
    let base = match fs::read_to_string(a.data.join("train.summary.json")) {
        Ok(text) => {
            let v: serde_json::Value = serde_json::from_str(&text).context("reading train.summary.json")?;
            serde_json::from_value(v["config"].clone()).context("config in train.summary.json")?
        }
        Err(_) => ExperimentConfig::default(),
    };
    let mut cfg = a.common.resolve(base)?;
    if let Some(t) = a.trees {
        cfg.gbdt.n_trees = t;
    }
    if let Some(d) = a.depth {
        cfg.gbdt.max_depth = d;
    }
    let list = approaches(&a.approach)?;
    let (scenes, ds) = read_split(&a.data, "train")?;
    if ds.is_empty() || scenes.is_empty() {
        bail!("training dataset in {} is empty", a.data.display());
    }
    let data = prepare_from_dataset(scenes, &ds, &cfg.raster)?;
    let models = train_models(&list, &data, &cfg)?;
    let manifest = models.save(&a.out, &cfg)?;

    let mut log = serde_json::Map::new();
    for (approach, m) in &models.gbdt {
        log.insert(approach.as_str().into(), serde_json::to_value(&m.training)?);
    }
    for loss in [agentrank::LossKind::Pointwise, agentrank::LossKind::Pairwise] {
        if let Some(m) = models.cnn(loss) {
            log.insert(format!("{}_cnn", loss.as_str()), serde_json::to_value(&m.training)?);
        }
    }
    write_json(&a.out.join("training-log.json"), &log)?;
    println!(
        "trained {} gbdt and {} cnn models on {} iterations into {}",
        manifest.gbdt.len(),
        manifest.cnn.len(),
        data.scenes.len(),
        a.out.display()
    );
    Ok(())
}

fn eval(a: Eval) -> Result<()> {
    let (models, cfg) =
        ModelSet::load(&a.models).with_context(|| format!("loading models from {}", a.models.display()))?;
    let available = |ap: &Approach| {
        (ap.gbdt_loss().is_none() || models.gbdt.contains_key(ap)) && ap.cnn_loss().is_none_or(|l| models.cnn(l).is_some())
    };
    let list: Vec<Approach> = if a.approach == "all" {
        Approach::ALL.into_iter().filter(available).collect()
    } else {
        approaches(&a.approach)?
    };
    for ap in &list {
        if !available(ap) {
            bail!("model directory {} has no trained model for `{}`", a.models.display(), ap.as_str());
        }
        if let Some(m) = models.gbdt.get(ap) {
            if m.feature_dim != agentrank::FEATURE_DIM {
                bail!(
                    "model `{}` expects {} features, this build produces {}",
                    ap.as_str(),
                    m.feature_dim,
                    agentrank::FEATURE_DIM
                );
            }
        }
    }
    let (scenes, ds) = read_split(&a.data, "test")?;
    if scenes.is_empty() {
        bail!("test dataset in {} is empty", a.data.display());
    }
    let data = prepare_from_dataset(scenes, &ds, &cfg.raster)?;
    let scope = match a.scope {
        Scope::All => EvalScope::AllAgents,
        Scope::CnnRange => EvalScope::CnnRange,
    };
    let report = evaluate(&list, &models, &data, &cfg, scope)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("report.txt"), report.to_table())?;
    fs::write(a.out.join("report.csv"), report.to_csv())?;
    write_json(&a.out.join("report.json"), &report)?;
    print!("{}", report.to_table());
    Ok(())
}

fn bench(a: Bench) -> Result<()> {
    let (models, cfg) =
        ModelSet::load(&a.models).with_context(|| format!("loading models from {}", a.models.display()))?;
    let approach: Approach = a.approach.parse()?;
    let ranking = models.ranking_models(approach, &cfg.raster)?;
    let modes: Vec<RankMode> = if a.mode == "all" {
        if ranking.cnn.is_some() {
            vec![RankMode::GbdtOnly, RankMode::HybridPipelined, RankMode::HybridFresh]
        } else {
            vec![RankMode::GbdtOnly]
        }
    } else {
        vec![a.mode.parse()?]
    };
    let scene = crowd_scene(a.seed, a.agents)?;
    println!("{:<18} {:>7} {:>7} {:>10} {:>10} {:>10}", "mode", "agents", "runs", "p50 ms", "p95 ms", "worst ms");
    for mode in modes {
        let s = measure_latency(&ranking, &scene, mode, a.repeats)?;
        println!(
            "{:<18} {:>7} {:>7} {:>10.3} {:>10.3} {:>10.3}",
            s.mode, s.agents, s.samples, s.p50_ms, s.p95_ms, s.worst_ms
        );
    }
    Ok(())
}

fn write_pgm(path: &Path, grid: usize, pixels: &[u8]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write!(f, "P5\n{grid} {grid}\n255\n")?;
    f.write_all(pixels)?;
    f.flush()?;
    Ok(())
}

fn inspect_raster(a: InspectRaster) -> Result<()> {
    let cfg = a.common.resolve(ExperimentConfig::default())?;
    let scene = match (&a.scenes, &a.scripted) {
        (Some(path), _) => {
            let scenes = read_scenes(BufReader::new(
                File::open(path).with_context(|| format!("opening {}", path.display()))?,
            ))?;
            let n = scenes.len();
            scenes
                .into_iter()
                .nth(a.index)
                .with_context(|| format!("{} has {n} scenes, no index {}", path.display(), a.index))?
        }
        (None, Some(name)) => {
            let name: ScriptedName = name.parse()?;
            agentrank::sim::scripted_scenario(name).pop().context("scripted scenario has no scenes")?
        }
        (None, None) => bail!("pass --scenes FILE or --scripted NAME"),
    };
    let stack = render_stack(&scene, &cfg.raster);
    let labels = label_scene(&scene, &cfg.labeler)?;
    let image = render_label_image(&labels, &scene, &cfg.raster)?;
    fs::create_dir_all(&a.out)?;
    for (c, name) in CHANNEL_NAMES.iter().enumerate() {
        write_pgm(&a.out.join(format!("ch{c:02}-{name}.pgm")), stack.grid, stack.channel(c))?;
    }
    write_pgm(&a.out.join("labels.pgm"), image.grid, &image.data)?;
    println!(
        "scene {} ({} agents): {} channels and label image written to {}",
        scene.key(),
        scene.agents.len(),
        CHANNEL_NAMES.len(),
        a.out.display()
    );
    Ok(())
}
