//! Command-line pipeline: `synth`, `train`, `infer`, `bake` and `eval`, with
//! files as the boundaries between stages.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure, 64 usage.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bake::{bake_views, export_model, BakeView, ViewLabels};
use crate::classes::{fused_palette, Task, N_FUSED};
use crate::error::{Error, Result};
use crate::evalkit::{ConfusionMatrix, EvalReport};
use crate::fusion::{fuse, FusedLabelMap, FusionConfig};
use crate::geometry::{load_cameras, load_mesh, AtlasSize};
use crate::imageio::{read_labels, read_probabilities, read_rgb, write_labels, write_probabilities};
use crate::raster::{rasterize_view, texel_view_correspondence};
use crate::segnet::{
    image_tensor, load_checkpoint, load_dataset, png_files, save_checkpoint, train, Network, NetworkSpec,
    TrainOptions, TrainSample, TrainSchedule,
};
use crate::synth::{generate_scene, render_views, write_scene_bundle, SceneSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "condition-aware", version, about = "Condition-aware 3D model pipeline")]
struct Cli {
    /// Pipeline configuration (JSON); relative paths resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalTask {
    Sb,
    Dp,
    Dt,
    Fused,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle.
    Synth {
        /// Scene spec JSON; the built-in demo scene when omitted.
        spec: Option<PathBuf>,
    },
    /// Train one network on a dataset directory.
    Train {
        #[arg(long, value_enum)]
        network: Task,
        /// Directory with `images/` and `labels_<network>/` or `labels/`.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the three networks and fuse their outputs per image.
    Infer {
        #[arg(long)]
        images: Option<PathBuf>,
        /// Directory holding `sb.ckpt`, `dp.ckpt` and `dt.ckpt`.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Also write raw posteriors.
        #[arg(long)]
        probabilities: bool,
    },
    /// Average per-view labels onto the mesh atlas and export the model.
    Bake {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        cameras: Option<PathBuf>,
        /// Fused label PNGs named after each camera's image stem.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Average soft posteriors from `--probabilities` instead of labels.
        #[arg(long)]
        soft: bool,
        #[arg(long)]
        probabilities: Option<PathBuf>,
    },
    /// Confusion matrices and accuracies over matching file stems.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value = "fused")]
        task: EvalTask,
        /// Ground-truth label excluded from the counts.
        #[arg(long)]
        ignore: Option<u8>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelinePaths {
    pub mesh: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub probabilities: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub checkpoints: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: PipelinePaths,
    /// Square atlas side; a power of two in [64, 8192].
    pub atlas_resolution: u32,
    pub fusion: FusionConfig,
    pub train: TrainSchedule,
    pub class_weighting: bool,
    /// `full` or `tiny`.
    pub network: String,
    pub soft_labels: bool,
    pub threads: Option<usize>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PipelinePaths::default(),
            atlas_resolution: 1024,
            fusion: FusionConfig::default(),
            train: TrainSchedule::default(),
            class_weighting: false,
            network: "full".into(),
            soft_labels: false,
            threads: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Parses, resolves relative paths against the file's directory and
    /// validates. Every configured input path must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        let slots = [
            &mut p.mesh,
            &mut p.cameras,
            &mut p.images,
            &mut p.labels,
            &mut p.probabilities,
            &mut p.dataset,
            &mut p.checkpoints,
            &mut p.output,
        ];
        for v in slots.into_iter().flatten() {
            if v.is_relative() {
                *v = base.join(&*v);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.atlas_resolution;
        if !a.is_power_of_two() || !(64..=8192).contains(&a) {
            return Err(Error::Config(format!(
                "atlas_resolution {a} must be a power of two between 64 and 8192"
            )));
        }
        self.fusion.validate()?;
        self.train.validate()?;
        NetworkSpec::for_task(&self.network, Task::Sb)?;
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        let p = &self.paths;
        for (name, v) in [
            ("mesh", &p.mesh),
            ("cameras", &p.cameras),
            ("images", &p.images),
            ("labels", &p.labels),
            ("probabilities", &p.probabilities),
            ("dataset", &p.dataset),
            ("checkpoints", &p.checkpoints),
        ] {
            if let Some(v) = v {
                if !v.exists() {
                    return Err(Error::Config(format!("paths.{name}: {} does not exist", v.display())));
                }
            }
        }
        Ok(())
    }
}

/// Error to exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFiniteLoss { .. } => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

/// Parses arguments, runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        cfg.threads = Some(t);
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.paths.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let threads = cfg.threads;
    let job = move || match cli.command {
        Command::Synth { spec } => cmd_synth(spec.as_deref(), cli.seed, &out),
        Command::Train { network, dataset } => cmd_train(&cfg, network, dataset, &out),
        Command::Infer {
            images,
            checkpoints,
            probabilities,
        } => cmd_infer(&cfg, images, checkpoints, probabilities, &out),
        Command::Bake {
            mesh,
            cameras,
            labels,
            soft,
            probabilities,
        } => cmd_bake(&cfg, mesh, cameras, labels, soft, probabilities, &out),
        Command::Eval { pred, gt, task, ignore } => cmd_eval(&pred, &gt, task, ignore, &out),
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

fn require(arg: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    let p = arg
        .or_else(|| configured.clone())
        .ok_or_else(|| Error::Config(format!("no {name} path given (flag or paths.{name} in the config)")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{name}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write_text(path, &s)
}

fn stem(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn cmd_synth(spec_path: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec = match spec_path {
        Some(p) => SceneSpec::from_json(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => SceneSpec::demo(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let scene = generate_scene(&spec)?;
    let views = render_views(&scene);
    write_scene_bundle(&scene, &views, out)?;
    log::info!(
        "scene with {} faces and {} views written to {}",
        scene.mesh.face_count(),
        views.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    network: &'static str,
    architecture: String,
    seed: u64,
    train_images: Vec<String>,
    validation_images: Vec<String>,
    schedule: TrainSchedule,
    iterations: usize,
    final_loss: Option<f64>,
    validation: Option<EvalReport>,
}

fn cmd_train(cfg: &PipelineConfig, task: Task, dataset: Option<PathBuf>, out: &Path) -> Result<()> {
    let root = require(dataset, &cfg.paths.dataset, "dataset")?;
    let data = load_dataset(&root, task)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    order.shuffle(&mut rng);
    let n_train = ((data.len() as f64 * 0.8).round() as usize).clamp(1, data.len());
    let mut train_idx = order[..n_train].to_vec();
    let mut val_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let names = |idx: &[usize]| idx.iter().map(|&i| data[i].stem.clone()).collect::<Vec<_>>();
    let (train_names, val_names) = (names(&train_idx), names(&val_idx));
    let train_set: Vec<TrainSample> = train_idx.iter().map(|&i| data[i].sample.clone()).collect();
    let val_set: Vec<TrainSample> = val_idx.iter().map(|&i| data[i].sample.clone()).collect();

    let spec = NetworkSpec::for_task(&cfg.network, task)?;
    for p in &cfg.train.phases {
        log::info!("phase: {} iterations at learning rate {:e}", p.iterations, p.learning_rate);
    }
    let options = TrainOptions {
        schedule: cfg.train.clone(),
        seed: cfg.seed,
        class_weighting: cfg.class_weighting,
    };
    let outcome = train(spec, &train_set, &options)?;

    create_dir(out)?;
    save_checkpoint(&out.join(format!("{}.ckpt", task.name())), &outcome.network)?;
    let mut csv = String::from("iteration,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    write_text(&out.join(format!("{}_loss.csv", task.name())), &csv)?;

    let validation = if val_set.is_empty() {
        None
    } else {
        let mut cm = ConfusionMatrix::new(task.class_names());
        let preds: Vec<Result<crate::labels::LabelMap>> =
            val_set.par_iter().map(|s| Ok(outcome.network.predict(&s.image)?.argmax())).collect();
        for (s, p) in val_set.iter().zip(preds) {
            let p = p?;
            let gt = crate::labels::LabelMap::new(p.width(), p.height(), s.labels.clone())?;
            cm.accumulate(&p, &gt, None)?;
        }
        Some(EvalReport::new(val_set.len(), cm)?)
    };
    if let Some(v) = &validation {
        log::info!("validation:\n{}", v.to_text());
    }
    write_json(
        &out.join(format!("{}_report.json", task.name())),
        &TrainReport {
            network: task.name(),
            architecture: cfg.network.clone(),
            seed: cfg.seed,
            train_images: train_names,
            validation_images: val_names,
            schedule: cfg.train.clone(),
            iterations: outcome.losses.len(),
            final_loss: outcome.losses.last().copied(),
            validation,
        },
    )
}

fn load_network(dir: &Path, task: Task, variant: &str) -> Result<Network<f32>> {
    let path = dir.join(format!("{}.ckpt", task.name()));
    let net = load_checkpoint(&path)?;
    let expected = NetworkSpec::for_task(variant, task)?;
    if net.spec().hash() != expected.hash() {
        return Err(Error::Checkpoint(format!(
            "{}: architecture does not match the `{variant}` {} network",
            path.display(),
            task.name()
        )));
    }
    Ok(net)
}

fn cmd_infer(
    cfg: &PipelineConfig,
    images: Option<PathBuf>,
    checkpoints: Option<PathBuf>,
    probabilities: bool,
    out: &Path,
) -> Result<()> {
    let images = require(images, &cfg.paths.images, "images")?;
    let ckpt = require(checkpoints, &cfg.paths.checkpoints, "checkpoints")?;
    let nets = [
        load_network(&ckpt, Task::Sb, &cfg.network)?,
        load_network(&ckpt, Task::Dp, &cfg.network)?,
        load_network(&ckpt, Task::Dt, &cfg.network)?,
    ];
    let files = png_files(&images)?;
    let mut dirs = vec!["fused", "labels_sb", "labels_dp", "labels_dt"];
    if probabilities {
        dirs.push("probabilities");
    }
    for d in &dirs {
        create_dir(&out.join(d))?;
    }
    files.par_iter().try_for_each(|path| -> Result<()> {
        let name = stem(path);
        let x = image_tensor(&read_rgb(path)?);
        let [sb, dp, dt] = [0, 1, 2].map(|i| nets[i].predict(&x));
        let (sb, dp, dt) = (sb?, dp?, dt?);
        let fused = fuse(&sb, &dp, &dt, &cfg.fusion)?;
        let png = format!("{name}.png");
        write_labels(&out.join("fused").join(&png), &fused.to_indexed(), &fused_palette())?;
        for (map, task) in [(&sb, Task::Sb), (&dp, Task::Dp), (&dt, Task::Dt)] {
            write_labels(
                &out.join(format!("labels_{}", task.name())).join(&png),
                &map.argmax(),
                task.palette(),
            )?;
            if probabilities {
                let file = out.join("probabilities").join(format!("{name}.{}.prob", task.name()));
                write_probabilities(&file, map)?;
            }
        }
        log::info!("{name}: inferred");
        Ok(())
    })?;
    log::info!("{} images inferred", files.len());
    Ok(())
}

#[derive(Serialize)]
struct BakeEcho<'a> {
    atlas_resolution: u32,
    soft_labels: bool,
    fusion: &'a FusionConfig,
    views: Vec<String>,
}

fn cmd_bake(
    cfg: &PipelineConfig,
    mesh: Option<PathBuf>,
    cameras: Option<PathBuf>,
    labels: Option<PathBuf>,
    soft: bool,
    probabilities: Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let soft = soft || cfg.soft_labels;
    let mesh = load_mesh(
        &require(mesh, &cfg.paths.mesh, "mesh")?,
        AtlasSize::square(cfg.atlas_resolution),
    )?;
    let views = load_cameras(&require(cameras, &cfg.paths.cameras, "cameras")?)?;
    let label_dir = if soft {
        require(probabilities, &cfg.paths.probabilities, "probabilities")?
    } else {
        require(labels, &cfg.paths.labels, "labels")?
    };

    enum Loaded {
        Hard(FusedLabelMap),
        Soft(crate::labels::ProbabilityMap, crate::labels::ProbabilityMap),
    }
    let stems: Vec<String> = views.iter().map(|v| v.image.clone()).collect();
    if !soft {
        let on_disk: Vec<String> = png_files(&label_dir)?.iter().map(|p| stem(p)).collect();
        let mut want = stems.clone();
        want.sort();
        if on_disk != want {
            return Err(Error::Config(format!(
                "{} cameras but {} label maps in {}, or their names differ",
                stems.len(),
                on_disk.len(),
                label_dir.display()
            )));
        }
    }
    let loaded: Vec<Loaded> = stems
        .par_iter()
        .map(|s| {
            if soft {
                let ctx = read_probabilities(&label_dir.join(format!("{s}.sb.prob")))?;
                let dmg = read_probabilities(&label_dir.join(format!("{s}.dt.prob")))?;
                Ok(Loaded::Soft(ctx, dmg))
            } else {
                let map = read_labels(&label_dir.join(format!("{s}.png")))?;
                Ok(Loaded::Hard(FusedLabelMap::from_indexed(&map)?))
            }
        })
        .collect::<Result<_>>()?;
    let correspondences: Vec<_> = views
        .par_iter()
        .map(|v| texel_view_correspondence(&mesh, &v.camera, &rasterize_view(&mesh, &v.camera)))
        .collect();
    for (v, c) in views.iter().zip(&correspondences) {
        log::info!("{}: {} visible texels", v.image, c.len());
    }
    let bake: Vec<BakeView> = views
        .iter()
        .zip(&correspondences)
        .zip(&loaded)
        .map(|((v, c), l)| BakeView {
            camera: &v.camera,
            correspondence: c,
            labels: match l {
                Loaded::Hard(m) => ViewLabels::Hard(m),
                Loaded::Soft(ctx, dmg) => ViewLabels::Soft { context: ctx, damage: dmg },
            },
        })
        .collect();
    let model = bake_views(&mesh, &bake)?;
    let echo = BakeEcho {
        atlas_resolution: cfg.atlas_resolution,
        soft_labels: soft,
        fusion: &cfg.fusion,
        views: stems,
    };
    export_model(&model, out, serde_json::to_value(&echo).expect("serializable"))?;
    log::info!(
        "{} of {} texels observed; model written to {}",
        model.observed_texels(),
        mesh.atlas().texel_count(),
        out.display()
    );
    Ok(())
}

fn eval_classes(task: EvalTask) -> Vec<String> {
    match task {
        EvalTask::Sb => Task::Sb.class_names().iter().map(|s| s.to_string()).collect(),
        EvalTask::Dp => Task::Dp.class_names().iter().map(|s| s.to_string()).collect(),
        EvalTask::Dt => Task::Dt.class_names().iter().map(|s| s.to_string()).collect(),
        EvalTask::Fused => (0..N_FUSED as u8)
            .map(|i| {
                let (c, d) = crate::classes::split_fused_index(i);
                format!("{}+{}", Task::Sb.class_names()[c as usize], Task::Dt.class_names()[d as usize])
            })
            .collect(),
    }
}

fn cmd_eval(pred: &Path, gt: &Path, task: EvalTask, ignore: Option<u8>, out: &Path) -> Result<()> {
    let index = |dir: &Path| -> Result<BTreeMap<String, PathBuf>> {
        Ok(png_files(dir)?.into_iter().map(|p| (stem(&p), p)).collect())
    };
    let (p, g) = (index(pred)?, index(gt)?);
    let unmatched: Vec<&String> = p.keys().filter(|k| !g.contains_key(*k)).chain(g.keys().filter(|k| !p.contains_key(*k))).collect();
    if !unmatched.is_empty() {
        return Err(Error::Config(format!("unmatched file stems: {unmatched:?}")));
    }
    if p.is_empty() {
        return Err(Error::Config(format!("no label maps in {}", pred.display())));
    }
    let names = eval_classes(task);
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut cm = ConfusionMatrix::new(&refs);
    for (k, pp) in &p {
        cm.accumulate(&read_labels(pp)?, &read_labels(&g[k])?, ignore)?;
    }
    let report = EvalReport::new(p.len(), cm)?;
    create_dir(out)?;
    write_text(&out.join("confusion.csv"), &report.confusion.to_csv())?;
    write_json(&out.join("metrics.json"), &report)?;
    let text = report.to_text();
    write_text(&out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}
