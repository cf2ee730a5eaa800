//! Command-line interface: one executable exposing the whole pipeline
//! (`synth`, `encode`, `priors`, `train`, `detect`, `eval`), configured by a
//! single JSON file with per-section defaults. Every subcommand is
//! deterministic given its inputs and `--seed`.

use crate::boxes::{generate_priors, gt_segment_to_box, BBox};
use crate::checkpoint::{self, Checkpoint};
use crate::encoding::{
    compute_dataset_stats, encode_global, encode_invariant, resample_width, ActionImage,
    JointOrder,
};
use crate::error::{Error, Result};
use crate::eval::{
    average_precision, build_class_queries, decode_detections, mean_average_precision, nms,
    parse_detections_csv, render_detections_csv, Detection,
};
use crate::net::NetConfig;
use crate::skeleton::{
    parse_label_file, parse_skeleton_file, render_label_file, render_skeleton_file,
    GroundTruthSegment, SkeletonSequence,
};
use crate::synth::{generate_synthetic, SynthConfig};
use crate::train::{train, TrainConfig, TrainSample};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Synthetic-dataset section of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub num_classes: usize,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub seq_len_range: (usize, usize),
    pub segment_len_range: (usize, usize),
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            num_classes: 3,
            train_sequences: 200,
            test_sequences: 50,
            seq_len_range: (60, 120),
            segment_len_range: (12, 40),
            noise_amplitude: 0.01,
            seed: 42,
        }
    }
}

impl SynthSection {
    /// The generator config covering both splits; train sequences come
    /// first, test sequences after, all from one seeded pool.
    fn generator_config(&self) -> SynthConfig {
        SynthConfig {
            num_classes: self.num_classes,
            num_sequences: self.train_sequences + self.test_sequences,
            seq_len_range: self.seq_len_range,
            segment_len_range: self.segment_len_range,
            noise_amplitude: self.noise_amplitude,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mapping {
    /// Dataset-wide min/max quantization.
    Global,
    /// Per-person translation/scale-invariant quantization.
    Invariant,
}

/// Settings for the `encode` subcommand's PNG export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeSection {
    pub width: usize,
    pub mapping: Mapping,
}

impl Default for EncodeSection {
    fn default() -> Self {
        EncodeSection { width: 512, mapping: Mapping::Invariant }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub conf_threshold: f64,
    pub top_k: usize,
    pub nms_iou: f64,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection { conf_threshold: 0.01, top_k: 200, nms_iou: 0.45 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub thetas: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { thetas: vec![0.1, 0.3, 0.5, 0.7] }
    }
}

/// The complete run configuration. Every field has a default, so a config
/// file only needs the sections it changes; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthSection,
    pub encode: EncodeSection,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub inference: InferenceSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthSection::default(),
            encode: EncodeSection::default(),
            net: NetConfig::tiny(3),
            // The stock optimizer settings target the full-scale recipe; the
            // defaults here are recalibrated for the small synthetic run.
            // Single-sample batches maximize the update count, and the
            // patience is set past max_epochs because the loss plateaus for
            // many epochs before the detector starts separating classes —
            // a rate drop inside that plateau would freeze it there.
            train: TrainConfig {
                learning_rate: 0.01,
                batch_size: 1,
                max_epochs: 30,
                plateau_patience: 30,
                augment_prob: 0.0,
                seed: 42,
                ..TrainConfig::default()
            },
            inference: InferenceSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.generator_config().validate()?;
        self.net.validate()?;
        self.train.validate()?;
        if self.encode.width == 0 {
            return Err(Error::Config("encode.width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.inference.conf_threshold) {
            return Err(Error::Config("inference.conf_threshold must be in [0, 1)".into()));
        }
        if self.inference.top_k == 0 {
            return Err(Error::Config("inference.top_k must be positive".into()));
        }
        if !(self.inference.nms_iou > 0.0 && self.inference.nms_iou < 1.0) {
            return Err(Error::Config("inference.nms_iou must be in (0, 1)".into()));
        }
        if self.eval.thetas.is_empty() {
            return Err(Error::Config("eval.thetas must not be empty".into()));
        }
        for &t in &self.eval.thetas {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("eval theta {} outside (0, 1)", t)));
            }
        }
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "skeldet",
    version,
    about = "Temporal action detection on skeleton sequences via color-image encodings"
)]
struct Cli {
    /// JSON run configuration; missing sections take built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the data-generation and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled dataset with train/ and test/ splits.
    Synth {
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Encode skeleton files as action-image PNGs with JSON sidecars.
    Encode {
        /// Directory of skeleton .txt files.
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
        /// Output directory for .png/.json pairs.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Show the prior-box layout; optionally dump every prior to CSV.
    Priors {
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train a detector on a dataset directory (skeleton/ + label/).
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Checkpoint output path.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Per-epoch loss log CSV.
        #[arg(long, value_name = "FILE")]
        loss_log: Option<PathBuf>,
    },
    /// Run a trained detector over a dataset and write a detections CSV.
    Detect {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Detections CSV output path.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Score a detections CSV against a directory of label files.
    Eval {
        #[arg(long, value_name = "FILE")]
        detections: PathBuf,
        /// Directory of ground-truth label .txt files.
        #[arg(long, value_name = "DIR")]
        labels: PathBuf,
        /// AP table CSV output path (the table always prints to stdout).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

/// Entry point shared by the binary and in-process tests. Returns the
/// process exit code: 0 success, 1 validation/usage error, 2 I/O error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Error::Io(e)) => {
            eprintln!("skeldet: I/O error: {}", e);
            2
        }
        Err(e) => {
            eprintln!("skeldet: {}", e);
            1
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut config: RunConfig = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| {
                Error::Config(format!("{}: {}", path.display(), e))
            })?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.synth.seed = seed;
        config.train.seed = seed;
    }
    config.validate()?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Validation("--jobs must be positive".to_string()));
        }
        if rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().is_err() {
            log::warn!("worker pool already started; --jobs ignored");
        }
    }
    if cli.dump_config {
        println!(
            "{}",
            serde_json::to_string_pretty(&config)
                .map_err(|e| Error::Config(format!("cannot serialize config: {}", e)))?
        );
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Validation(
            "no subcommand given; run with --help for usage".to_string(),
        ));
    };
    match command {
        Command::Synth { out } => cmd_synth(&config, &out),
        Command::Encode { input, out } => cmd_encode(&config, &input, &out),
        Command::Priors { out } => cmd_priors(&config, out.as_deref()),
        Command::Train { data, out, loss_log } => {
            cmd_train(&config, &data, &out, loss_log.as_deref())
        }
        Command::Detect { data, checkpoint, out } => {
            cmd_detect(&config, &data, &checkpoint, &out)
        }
        Command::Eval { detections, labels, out } => {
            cmd_eval(&config, &detections, &labels, out.as_deref())
        }
    }
}

fn cmd_synth(config: &RunConfig, out: &Path) -> Result<()> {
    let section = &config.synth;
    let all = generate_synthetic(&section.generator_config())?;
    let splits = [
        ("train", 0..section.train_sequences),
        ("test", section.train_sequences..all.len()),
    ];
    for (name, range) in splits {
        let skel_dir = out.join(name).join("skeleton");
        let label_dir = out.join(name).join("label");
        fs::create_dir_all(&skel_dir)?;
        fs::create_dir_all(&label_dir)?;
        for (seq, segments) in &all[range] {
            let file = format!("{}.txt", seq.source_id);
            fs::write(skel_dir.join(&file), render_skeleton_file(seq))?;
            fs::write(label_dir.join(&file), render_label_file(segments))?;
        }
    }
    log::info!(
        "wrote {} train and {} test sequences under {}",
        section.train_sequences,
        section.test_sequences,
        out.display()
    );
    Ok(())
}

/// Sorted .txt files in a directory, with their stem names.
fn list_txt_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().map_or(false, |e| e == "txt") {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            files.push((stem, path));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Validation(format!(
            "no .txt files found in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn read_sequences(dir: &Path) -> Result<Vec<SkeletonSequence>> {
    list_txt_files(dir)?
        .into_iter()
        .map(|(stem, path)| {
            let text = fs::read_to_string(&path)?;
            parse_skeleton_file(&text, &stem)
                .map_err(|e| Error::Validation(format!("{}: {}", path.display(), e)))
        })
        .collect()
}

/// JSON sidecar written next to each encoded PNG.
#[derive(Serialize, Deserialize)]
struct Sidecar {
    source_id: String,
    width: usize,
    height: usize,
    rows_per_person: usize,
    persons_encoded: usize,
    source_len: usize,
    col_to_frame: crate::encoding::ColToFrame,
    mapping: Mapping,
}

fn save_png(path: &Path, img: &ActionImage) -> Result<()> {
    let buf =
        image::RgbImage::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
            .ok_or_else(|| {
                Error::Shape("pixel buffer does not match image dimensions".to_string())
            })?;
    buf.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Validation(format!("cannot encode PNG: {}", other)),
    })
}

fn cmd_encode(config: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let seqs = read_sequences(input)?;
    let order = JointOrder::kinect_v2();
    let stats = match config.encode.mapping {
        Mapping::Global => Some(compute_dataset_stats(&seqs)?),
        Mapping::Invariant => None,
    };
    let images: Vec<ActionImage> = seqs
        .par_iter()
        .map(|seq| {
            let native = match config.encode.mapping {
                Mapping::Invariant => encode_invariant(seq, &order)?,
                Mapping::Global => encode_global(seq, &order, stats.as_ref().unwrap())?,
            };
            resample_width(&native, config.encode.width)
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(out)?;
    for (seq, img) in seqs.iter().zip(&images) {
        save_png(&out.join(format!("{}.png", seq.source_id)), img)?;
        let sidecar = Sidecar {
            source_id: seq.source_id.clone(),
            width: img.width,
            height: img.height,
            rows_per_person: img.rows_per_person,
            persons_encoded: img.persons_encoded,
            source_len: img.source_len,
            col_to_frame: img.col_to_frame,
            mapping: config.encode.mapping,
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::Validation(format!("cannot serialize sidecar: {}", e)))?;
        fs::write(out.join(format!("{}.json", seq.source_id)), json + "\n")?;
    }
    log::info!("encoded {} sequences into {}", seqs.len(), out.display());
    Ok(())
}

fn cmd_priors(config: &RunConfig, out: Option<&Path>) -> Result<()> {
    let prior_cfg = config.net.prior_config()?;
    let priors = generate_priors(&prior_cfg);
    let ratios = prior_cfg.aspect_ratios.len();
    println!("head  rows  cols  scale  priors");
    for (i, &(rows, cols)) in prior_cfg.feature_map_shapes.iter().enumerate() {
        println!(
            "{:<4}  {:<4}  {:<4}  {:<5}  {}",
            i,
            rows,
            cols,
            prior_cfg.layer_scales[i],
            rows * cols * ratios
        );
    }
    println!("total {} priors ({} aspect ratios)", priors.len(), ratios);
    if let Some(path) = out {
        let mut csv = String::from("index,cx,cy,w,h\n");
        for (i, p) in priors.iter().enumerate() {
            csv.push_str(&format!("{},{},{},{},{}\n", i, p.cx, p.cy, p.w, p.h));
        }
        fs::write(path, csv)?;
    }
    Ok(())
}

/// Load a dataset directory (skeleton/ and label/ subdirectories) and
/// encode every sequence at the network's input width using the invariant
/// mapping. Returns (video id, image, segments) per sequence.
fn load_encoded_dataset(
    dir: &Path,
    width: usize,
    with_labels: bool,
) -> Result<Vec<(String, ActionImage, Vec<GroundTruthSegment>)>> {
    let files = list_txt_files(&dir.join("skeleton"))?;
    let order = JointOrder::kinect_v2();
    files
        .into_par_iter()
        .map(|(stem, path)| {
            let text = fs::read_to_string(&path)?;
            let seq = parse_skeleton_file(&text, &stem)
                .map_err(|e| Error::Validation(format!("{}: {}", path.display(), e)))?;
            let segments = if with_labels {
                let label_path = dir.join("label").join(format!("{}.txt", stem));
                let label_text = fs::read_to_string(&label_path)?;
                let segments = parse_label_file(&label_text).map_err(|e| {
                    Error::Validation(format!("{}: {}", label_path.display(), e))
                })?;
                for seg in &segments {
                    seg.validate(seq.len()).map_err(|e| {
                        Error::Validation(format!("{}: {}", label_path.display(), e))
                    })?;
                }
                segments
            } else {
                Vec::new()
            };
            let img = resample_width(&encode_invariant(&seq, &order)?, width)?;
            Ok((stem, img, segments))
        })
        .collect()
}

fn cmd_train(
    config: &RunConfig,
    data: &Path,
    out: &Path,
    loss_log: Option<&Path>,
) -> Result<()> {
    let width = config.net.input.1;
    let dataset = load_encoded_dataset(data, width, true)?;
    let samples: Vec<TrainSample> = dataset
        .into_iter()
        .map(|(_, image, segments)| {
            let gts = segments
                .iter()
                .map(|seg| Ok((gt_segment_to_box(seg, &image)?, seg.label)))
                .collect::<Result<Vec<(BBox, usize)>>>()?;
            Ok(TrainSample { image, gts })
        })
        .collect::<Result<_>>()?;
    log::info!("training on {} sequences", samples.len());
    let trained = train(&samples, &config.net, &config.train)?;
    let ckpt = Checkpoint {
        net: trained.net,
        velocity: Some(trained.velocity),
        epoch: trained.log.len(),
        schedule: None,
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    checkpoint::save(out, &ckpt)?;
    if let Some(path) = loss_log {
        let mut csv = String::from("epoch,loss,conf,loc,lr\n");
        for row in &trained.log {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                row.epoch, row.loss, row.conf, row.loc, row.lr
            ));
        }
        fs::write(path, csv)?;
    }
    if let Some(last) = trained.log.last() {
        log::info!("finished at epoch {} with loss {:.6}", last.epoch, last.loss);
    }
    Ok(())
}

fn cmd_detect(config: &RunConfig, data: &Path, ckpt_path: &Path, out: &Path) -> Result<()> {
    let ckpt = checkpoint::load(ckpt_path)?;
    let net = ckpt.net;
    let priors = generate_priors(&net.config().prior_config()?);
    let num_classes = net.config().num_classes;
    let dataset = load_encoded_dataset(data, net.config().input.1, false)?;
    let inf = &config.inference;
    let per_video: Vec<(String, Vec<Detection>)> = dataset
        .par_iter()
        .map(|(stem, img, _)| {
            let input = net.image_to_input(img)?;
            let fwd = net.forward(&input)?;
            let dets = decode_detections(
                &fwd.loc,
                &fwd.conf,
                &priors,
                img,
                num_classes,
                inf.conf_threshold,
                inf.top_k,
            )?;
            Ok((stem.clone(), nms(&dets, inf.nms_iou)))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (stem, dets) in per_video {
        for d in dets {
            rows.push((stem.clone(), d));
        }
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(out, render_detections_csv(&rows))?;
    log::info!("wrote {} detections to {}", rows.len(), out.display());
    Ok(())
}

fn cmd_eval(
    config: &RunConfig,
    detections: &Path,
    labels: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let det_rows = parse_detections_csv(&fs::read_to_string(detections)?)?;
    let label_files = list_txt_files(labels)?;
    let mut video_index = std::collections::HashMap::new();
    let mut gts: Vec<(usize, GroundTruthSegment)> = Vec::new();
    for (vi, (stem, path)) in label_files.iter().enumerate() {
        video_index.insert(stem.clone(), vi);
        let segments = parse_label_file(&fs::read_to_string(path)?)
            .map_err(|e| Error::Validation(format!("{}: {}", path.display(), e)))?;
        gts.extend(segments.into_iter().map(|s| (vi, s)));
    }
    let mut dets: Vec<(usize, Detection)> = Vec::with_capacity(det_rows.len());
    for (video, det) in det_rows {
        let vi = *video_index.get(&video).ok_or_else(|| {
            Error::Validation(format!("detections reference unknown video {:?}", video))
        })?;
        dets.push((vi, det));
    }
    let num_classes = gts
        .iter()
        .map(|(_, g)| g.label + 1)
        .chain(dets.iter().map(|(_, d)| d.label + 1))
        .max()
        .unwrap_or(0);
    if num_classes == 0 {
        return Err(Error::Validation("no ground truth and no detections".to_string()));
    }
    let queries = build_class_queries(&dets, &gts, num_classes);

    let mut csv = String::from("theta,class,ap\n");
    println!("{:>6}  {:>6}  {}", "theta", "class", "AP");
    for &theta in &config.eval.thetas {
        for (label, query) in queries.iter().enumerate() {
            if let Some(ap) = average_precision(query, theta) {
                println!("{:>6}  {:>6}  {:.4}", theta, label + 1, ap);
                csv.push_str(&format!("{},{},{}\n", theta, label + 1, ap));
            }
        }
        let map = mean_average_precision(&queries, theta)?;
        println!("{:>6}  {:>6}  {:.4}", theta, "mean", map);
        csv.push_str(&format!("{},mean,{}\n", theta, map));
    }
    if let Some(path) = out {
        fs::write(path, csv)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let config = RunConfig::default();
        config.validate().unwrap();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"synht": {}}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<RunConfig>(r#"{"synth": {"num_claases": 3}}"#);
        assert!(err.is_err());
    }

    #[test]
    fn partial_config_takes_defaults() {
        let config: RunConfig =
            serde_json::from_str(r#"{"synth": {"num_classes": 5}}"#).unwrap();
        assert_eq!(config.synth.num_classes, 5);
        assert_eq!(config.synth.train_sequences, 200);
        assert_eq!(config.inference.top_k, 200);
    }

    #[test]
    fn bad_config_values_fail_validation() {
        let mut config = RunConfig::default();
        config.eval.thetas = vec![1.5];
        assert!(config.validate().is_err());
        let mut config = RunConfig::default();
        config.inference.nms_iou = 0.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn usage_errors_and_help_exit_codes() {
        assert_eq!(run(["skeldet", "--help"]), 0);
        assert_eq!(run(["skeldet", "no-such-command"]), 1);
        assert_eq!(run(["skeldet"]), 1);
        // Config file that does not exist: I/O error.
        assert_eq!(
            run(["skeldet", "--config", "/nonexistent/config.json", "priors"]),
            2
        );
    }
}
