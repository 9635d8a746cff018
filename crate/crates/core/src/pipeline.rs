//! Checkpoints, configured training runs, and text annotation.
//!
//! Checkpoint directory layout:
//!
//! ```text
//! model.json        format version, crate version, encoder and head settings, tasks
//! params.bin        parameter container (see `params`)
//! vocab.txt         character vocabulary
//! labels/<task>.txt label inventory per task
//! config.json       normalized training configuration (when trained from one)
//! metrics.jsonl     one record per epoch: mean loss per task, dev metric per task
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::data::{read_corpus, render, Format};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::model::{infer_labels, HeadsConfig, MultiTaskModel};
use crate::params::ParamStore;
use crate::sentence::AnnotatedSentence;
use crate::task::{LabelSet, Task};
use crate::train::{train_joint, train_single, TaskDataset, TeacherEnsemble, TrainOptions, TrainReport};
use crate::vocab::Vocab;

/// Version of the checkpoint layout this build reads and writes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    crate_version: String,
    encoder: EncoderConfig,
    heads: HeadsConfig,
    tasks: Vec<Task>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `model` to `dir`, with the configuration and per-epoch records of
/// the run that produced it when given.
pub fn save_model(
    model: &MultiTaskModel,
    dir: &Path,
    config: Option<&PipelineConfig>,
    report: Option<&TrainReport>,
) -> Result<()> {
    create_dir(&dir.join("labels"))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        encoder: model.encoder_config.clone(),
        heads: model.heads_config.clone(),
        tasks: model.tasks(),
    };
    write(
        &dir.join("model.json"),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    model.store.save(&dir.join("params.bin"))?;
    model.vocab.save(&dir.join("vocab.txt"))?;
    for (task, labels) in &model.labels {
        labels.save(&dir.join("labels").join(format!("{task}.txt")))?;
    }
    if let Some(c) = config {
        c.save(&dir.join("config.json"))?;
    }
    if let Some(r) = report {
        let mut lines = String::new();
        for e in &r.epochs {
            lines.push_str(&serde_json::to_string(e)?);
            lines.push('\n');
        }
        write(&dir.join("metrics.jsonl"), &lines)?;
    }
    Ok(())
}

/// Loads a checkpoint written by [`save_model`].
pub fn load_model(dir: &Path) -> Result<MultiTaskModel> {
    let manifest_path = dir.join("model.json");
    if !manifest_path.is_file() {
        return Err(Error::Model(format!(
            "{} is not a model directory (model.json missing)",
            dir.display()
        )));
    }
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Model(format!("{}: unreadable manifest: {e}", manifest_path.display())))?;
    let found = raw.get("format_version").and_then(serde_json::Value::as_u64);
    let writer = raw
        .get("crate_version")
        .and_then(serde_json::Value::as_str)
        .unwrap_or("unknown");
    if found != Some(FORMAT_VERSION as u64) {
        return Err(Error::Model(format!(
            "{}: checkpoint format version {} written by version {writer}; this build (version {}) reads format version {FORMAT_VERSION}",
            dir.display(),
            found.map_or("missing".to_string(), |v| v.to_string()),
            env!("CARGO_PKG_VERSION"),
        )));
    }
    let manifest: Manifest = serde_json::from_value(raw)
        .map_err(|e| Error::Model(format!("{}: invalid manifest: {e}", manifest_path.display())))?;
    let vocab = Vocab::load(&dir.join("vocab.txt"))?;
    let mut labels = BTreeMap::new();
    for task in &manifest.tasks {
        labels.insert(*task, LabelSet::load(&dir.join("labels").join(format!("{task}.txt")))?);
    }
    let mut model = MultiTaskModel::new(manifest.encoder, manifest.heads, vocab, labels)?;
    let stored = ParamStore::load(&dir.join("params.bin"))?;
    model
        .store
        .load_values(&stored)
        .map_err(|e| Error::Model(format!("{}: {e}", dir.display())))?;
    Ok(model)
}

/// True when `s` carries the annotation `task` learns from.
fn has_layer(task: Task, s: &AnnotatedSentence) -> bool {
    match task {
        Task::Cws => s.words.is_some(),
        Task::Pos => s.pos.is_some(),
        Task::Ner => s.entities.is_some(),
        Task::Dep => s.dep.is_some(),
        Task::Sdp => s.sdp.is_some(),
        Task::Srl => s.srl.is_some(),
    }
}

fn load_split(task: Task, path: &Path, format: Format) -> Result<TaskDataset> {
    let sentences = read_corpus(path, format)?;
    for (i, s) in sentences.iter().enumerate() {
        if !has_layer(task, s) {
            return Err(Error::Data(format!(
                "{}: sentence {} has no {task} annotation",
                path.display(),
                i + 1
            )));
        }
        s.validate()
            .map_err(|e| Error::Data(format!("{}: sentence {}: {e}", path.display(), i + 1)))?;
    }
    if sentences.is_empty() {
        return Err(Error::Data(format!("{}: no sentences", path.display())));
    }
    TaskDataset::new(task, sentences)
}

/// Training and development datasets of every configured task.
#[derive(Clone, Debug)]
pub struct Datasets {
    pub train: Vec<TaskDataset>,
    pub dev: Vec<TaskDataset>,
}

impl Datasets {
    pub fn load(config: &PipelineConfig) -> Result<Self> {
        let mut train = Vec::new();
        let mut dev = Vec::new();
        for t in &config.tasks {
            train.push(load_split(t.name, &config.resolve(&t.train), t.format)?);
            if let Some(d) = &t.dev {
                dev.push(load_split(t.name, &config.resolve(d), t.format)?);
            }
        }
        Ok(Datasets { train, dev })
    }

    /// The datasets of one task only.
    pub fn only(&self, task: Task) -> Datasets {
        let keep = |v: &[TaskDataset]| v.iter().filter(|d| d.task == task).cloned().collect();
        Datasets {
            train: keep(&self.train),
            dev: keep(&self.dev),
        }
    }
}

/// Freshly initialized model for the `tasks` of `config`. The vocabulary
/// always covers the training text of every configured task, so teachers
/// and students built from one configuration share it.
pub fn build_model(config: &PipelineConfig, all: &Datasets, tasks: &[Task]) -> Result<MultiTaskModel> {
    let vocab = Vocab::build(
        all.train
            .iter()
            .flat_map(|d| d.sentences.iter().map(|s| s.text.as_str())),
        config.training.min_count,
    );
    let mut labels = BTreeMap::new();
    for &task in tasks {
        let t = config
            .task(task)
            .ok_or_else(|| Error::Data(format!("task {task} is not configured")))?;
        let set = match &t.labels {
            Some(path) => LabelSet::load(&config.resolve(path))?,
            None => {
                let data = all
                    .train
                    .iter()
                    .find(|d| d.task == task)
                    .ok_or_else(|| Error::Data(format!("no training data for {task}")))?;
                infer_labels(task, &data.sentences)?
            }
        };
        labels.insert(task, set);
    }
    let encoder = config.encoder.to_config(vocab.len(), config.seed);
    MultiTaskModel::new(encoder, config.heads.clone(), vocab, labels)
}

fn options(config: &PipelineConfig) -> TrainOptions {
    TrainOptions {
        epochs: config.training.epochs,
        batch_size: config.training.batch_size,
        optimizer: config.optimizer.clone(),
        seed: config.seed,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// One teacher for one task.
    Single(Task),
    /// Every configured task, gold targets only.
    Joint,
    /// Every configured task, annealed from teacher to gold targets.
    Distill,
}

impl Mode {
    /// Checkpoint directory of this mode under the configured output.
    pub fn output_dir(self, config: &PipelineConfig) -> PathBuf {
        match self {
            Mode::Single(task) => config.output_dir().join("teachers").join(task.name()),
            Mode::Joint => config.output_dir().join("joint"),
            Mode::Distill => config.output_dir().join("distill"),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Single(t) => write!(f, "single:{t}"),
            Mode::Joint => f.write_str("joint"),
            Mode::Distill => f.write_str("distill"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Mode::Joint),
            "distill" => Ok(Mode::Distill),
            _ => match s.strip_prefix("single:") {
                Some(t) => Ok(Mode::Single(t.parse()?)),
                None => Err(Error::Data(format!(
                    "unknown mode {s:?} (expected single:<task>, joint or distill)"
                ))),
            },
        }
    }
}

/// Loads the teacher of every task of `tasks` from `dir/<task>`. Fails
/// naming every task whose checkpoint is absent.
pub fn load_teachers(dir: &Path, tasks: &[Task]) -> Result<TeacherEnsemble> {
    let missing: Vec<&str> = tasks
        .iter()
        .filter(|t| !dir.join(t.name()).join("model.json").is_file())
        .map(|t| t.name())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Model(format!(
            "missing teacher checkpoints for {} (looked in {})",
            missing.join(", "),
            dir.display()
        )));
    }
    let mut teachers = BTreeMap::new();
    for &task in tasks {
        teachers.insert(task, load_model(&dir.join(task.name()))?);
    }
    TeacherEnsemble::new(teachers)
}

pub struct TrainOutcome {
    pub model: MultiTaskModel,
    pub report: TrainReport,
    pub dir: PathBuf,
}

/// Trains in `mode` on already loaded data and writes the checkpoint.
pub fn train_with(config: &PipelineConfig, data: &Datasets, mode: Mode) -> Result<TrainOutcome> {
    let opts = options(config);
    let all: Vec<Task> = data.train.iter().map(|d| d.task).collect();
    let (model, report) = match mode {
        Mode::Single(task) => {
            let own = data.only(task);
            let dataset = own
                .train
                .first()
                .ok_or_else(|| Error::Data(format!("task {task} is not configured")))?;
            let mut model = build_model(config, data, &[task])?;
            let report = train_single(&mut model, dataset, &own.dev, &opts)?;
            (model, report)
        }
        Mode::Joint => {
            let mut model = build_model(config, data, &all)?;
            let report = train_joint(&mut model, &data.train, None, &data.dev, &opts)?;
            (model, report)
        }
        Mode::Distill => {
            let teachers = load_teachers(&config.teacher_dir(), &all)?;
            let targets = teachers.soft_targets(&data.train)?;
            let mut model = build_model(config, data, &all)?;
            let report = train_joint(&mut model, &data.train, Some(&targets), &data.dev, &opts)?;
            (model, report)
        }
    };
    let dir = mode.output_dir(config);
    save_model(&model, &dir, Some(config), Some(&report))?;
    Ok(TrainOutcome { model, report, dir })
}

/// Loads the configured data, trains in `mode`, and writes the checkpoint.
pub fn train(config: &PipelineConfig, mode: Mode) -> Result<TrainOutcome> {
    if let Mode::Distill = mode {
        let tasks: Vec<Task> = config.tasks.iter().map(|t| t.name).collect();
        load_teachers(&config.teacher_dir(), &tasks)?;
    }
    let data = Datasets::load(config)?;
    train_with(config, &data, mode)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    /// One JSON object per sentence per line, all six layers.
    Json,
    /// CoNLL-U blocks with a `# text = ` comment: segmentation, tags,
    /// tree and semantic graph. Entities and roles appear only in JSON.
    Conllu,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "conllu" => Ok(OutputFormat::Conllu),
            other => Err(Error::Data(format!(
                "unknown output format {other:?} (expected json or conllu)"
            ))),
        }
    }
}

/// Analyzes every non-blank line of `text` as one sentence. Work is split
/// across threads; output order follows input order.
pub fn annotate(model: &MultiTaskModel, text: &str) -> Result<Vec<AnnotatedSentence>> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect();
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(lines.len().max(1));
    let chunk = lines.len().div_ceil(threads).max(1);
    let results: Vec<Result<Vec<AnnotatedSentence>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = lines
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&(i, line)| {
                            let s = model
                                .analyze(line)
                                .map_err(|e| Error::Data(format!("line {}: {e}", i + 1)))?;
                            debug_assert!(s.validate().is_ok(), "annotation violates its invariants");
                            Ok(s)
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("annotation thread panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(lines.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Serializes annotations in the requested format.
pub fn render_annotations(sentences: &[AnnotatedSentence], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => {
            let mut out = String::new();
            for s in sentences {
                out.push_str(&serde_json::to_string(s)?);
                out.push('\n');
            }
            Ok(out)
        }
        OutputFormat::Conllu => {
            let with_text: Vec<AnnotatedSentence> = sentences
                .iter()
                .map(|s| {
                    let mut s = s.clone();
                    s.comments.insert(0, format!("text = {}", s.text));
                    s
                })
                .collect();
            render(&with_text, Format::Conllu)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::toy_corpus;

    fn tiny_config(dir: &Path) -> PipelineConfig {
        let text = r#"{"tasks": [{"name": "cws", "train": "t.conllu"}, {"name": "pos", "train": "t.conllu"}],
            "encoder": {"width": 8, "layers": 1, "heads": 2, "ffn_width": 8, "max_len": 32},
            "heads": {"mlp_width": 8}, "training": {"epochs": 1, "batch_size": 4}}"#;
        PipelineConfig::from_json(text, dir).unwrap()
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [Mode::Single(Task::Sdp), Mode::Joint, Mode::Distill] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("single:xyz".parse::<Mode>().is_err());
        assert!("both".parse::<Mode>().is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        crate::data::write_corpus(&toy_corpus(8, 3), &dir.path().join("t.conllu"), Format::Conllu).unwrap();
        let config = tiny_config(dir.path());
        let data = Datasets::load(&config).unwrap();
        let model = build_model(&config, &data, &[Task::Cws, Task::Pos]).unwrap();
        let out = dir.path().join("ckpt");
        save_model(&model, &out, Some(&config), None).unwrap();
        let back = load_model(&out).unwrap();
        assert_eq!(back.store.to_bytes(), model.store.to_bytes());
        assert_eq!(back.labels, model.labels);
        assert_eq!(
            back.analyze("张伟喜欢音乐。").unwrap(),
            model.analyze("张伟喜欢音乐。").unwrap()
        );
    }

    #[test]
    fn version_mismatch_is_diagnosed() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("model.json"),
            r#"{"format_version": 99, "crate_version": "9.9.9"}"#,
        )
        .unwrap();
        let err = load_model(dir.path()).unwrap_err().to_string();
        assert!(err.contains("format version 99") && err.contains("9.9.9"), "{err}");
        let err = load_model(&dir.path().join("absent")).unwrap_err().to_string();
        assert!(err.contains("model.json missing"), "{err}");
    }

    #[test]
    fn distill_without_teachers_lists_every_task() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_teachers(dir.path(), &Task::ALL).unwrap_err().to_string();
        for t in Task::ALL {
            assert!(err.contains(t.name()), "{err}");
        }
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let dir = tempfile::tempdir().unwrap();
        crate::data::write_corpus(&toy_corpus(4, 3), &dir.path().join("t.conllu"), Format::Conllu).unwrap();
        let config = tiny_config(dir.path());
        let data = Datasets::load(&config).unwrap();
        let model = build_model(&config, &data, &[Task::Cws]).unwrap();
        let out = annotate(&model, "\n  \n").unwrap();
        assert!(out.is_empty());
        assert_eq!(render_annotations(&out, OutputFormat::Json).unwrap(), "");
        assert_eq!(render_annotations(&out, OutputFormat::Conllu).unwrap(), "");
    }
}
