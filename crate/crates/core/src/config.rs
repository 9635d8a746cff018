//! Pipeline configuration: a JSON document checked against a fixed schema.
//!
//! Validation collects every violation (unknown keys, missing required
//! keys, wrong types, out-of-range values) with its JSON path before
//! failing. Defaults are filled in, and saving writes the complete
//! normalized document, so `save(load(c))` is a fixed point. Relative file
//! paths resolve against the directory holding the configuration file.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::data::Format;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result, Violation};
use crate::model::HeadsConfig;
use crate::task::Task;
use crate::train::OptimizerConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: Task,
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSettings {
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_width: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl EncoderSettings {
    pub fn to_config(&self, vocab_size: usize, seed: u64) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            width: self.width,
            layers: self.layers,
            heads: self.heads,
            ffn_width: self.ffn_width,
            max_len: self.max_len,
            dropout: self.dropout,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub min_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub tasks: Vec<TaskConfig>,
    pub encoder: EncoderSettings,
    pub heads: HeadsConfig,
    pub optimizer: OptimizerConfig,
    pub training: TrainingSettings,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    /// Integer with a lower bound.
    Int(u64),
    /// Number in a range; the flags mark exclusive bounds.
    Float {
        min: f64,
        min_open: bool,
        max: f64,
        max_open: bool,
    },
    Bool,
    Str,
}

#[derive(Clone, Copy)]
enum Presence {
    Default(fn() -> Value),
    Required,
    Optional,
}

struct Field {
    key: &'static str,
    kind: Kind,
    presence: Presence,
    doc: &'static str,
}

const POSITIVE: Kind = Kind::Float {
    min: 0.0,
    min_open: true,
    max: f64::INFINITY,
    max_open: true,
};
const UNIT: Kind = Kind::Float {
    min: 0.0,
    min_open: false,
    max: 1.0,
    max_open: true,
};

macro_rules! field {
    ($key:expr, $kind:expr, required, $doc:expr) => {
        Field {
            key: $key,
            kind: $kind,
            presence: Presence::Required,
            doc: $doc,
        }
    };
    ($key:expr, $kind:expr, optional, $doc:expr) => {
        Field {
            key: $key,
            kind: $kind,
            presence: Presence::Optional,
            doc: $doc,
        }
    };
    ($key:expr, $kind:expr, $default:expr, $doc:expr) => {
        Field {
            key: $key,
            kind: $kind,
            presence: Presence::Default(|| json!($default)),
            doc: $doc,
        }
    };
}

fn top_fields() -> Vec<Field> {
    vec![
        field!(
            "seed",
            Kind::Int(0),
            42,
            "Seed for initialization, dropout, shuffling and task sampling."
        ),
        field!(
            "output_dir",
            Kind::Str,
            "runs",
            "Directory receiving checkpoints (`teachers/<task>`, `joint`, `distill`)."
        ),
    ]
}

fn task_fields() -> Vec<Field> {
    vec![
        field!(
            "name",
            Kind::Str,
            required,
            "One of `cws`, `pos`, `ner`, `dep`, `sdp`, `srl`; each task at most once."
        ),
        field!("train", Kind::Str, required, "Training corpus."),
        field!(
            "dev",
            Kind::Str,
            optional,
            "Optional development corpus, scored after every epoch."
        ),
        field!(
            "format",
            Kind::Str,
            optional,
            "`conllu`, `bio` or `srl`. Defaults to `bio` for ner, `srl` for srl, `conllu` otherwise."
        ),
        field!(
            "labels",
            Kind::Str,
            optional,
            "Optional label inventory file (one label per line); inferred from the training corpus when absent."
        ),
    ]
}

fn section_fields(section: &str) -> Vec<Field> {
    match section {
        "encoder" => vec![
            field!("width", Kind::Int(1), 64, "Hidden width; must be divisible by `heads`."),
            field!("layers", Kind::Int(1), 2, "Transformer layers."),
            field!("heads", Kind::Int(1), 4, "Attention heads."),
            field!(
                "ffn_width",
                Kind::Int(1),
                128,
                "Inner width of the feed-forward blocks."
            ),
            field!(
                "max_len",
                Kind::Int(3),
                128,
                "Longest input in characters, plus 2 for the boundary symbols."
            ),
            field!("dropout", UNIT, 0.1, "Dropout rate during training."),
        ],
        "heads" => vec![
            field!(
                "mlp_width",
                Kind::Int(1),
                64,
                "Width of the biaffine head and dependent projections."
            ),
            field!(
                "ner_adapted_layers",
                Kind::Int(0),
                1,
                "Relative-position attention layers in the entity head; 0 disables them."
            ),
            field!(
                "single_root",
                Kind::Bool,
                false,
                "Decode dependency trees with exactly one child of the root."
            ),
        ],
        "optimizer" => vec![
            field!(
                "lr_teacher",
                POSITIVE,
                1e-4,
                "Peak learning rate for single-task teachers."
            ),
            field!("lr_student", POSITIVE, 1e-4, "Peak learning rate for the joint model."),
            field!(
                "lr_crf",
                POSITIVE,
                1e-3,
                "Peak learning rate for CRF transition and boundary scores."
            ),
            field!("grad_clip", POSITIVE, 1.0, "Maximum global gradient norm."),
            field!(
                "warmup_proportion",
                Kind::Float {
                    min: 0.0,
                    min_open: true,
                    max: 1.0,
                    max_open: true
                },
                0.02,
                "Fraction of steps with a linearly rising learning rate; the rate then decays linearly to 0."
            ),
            field!("beta1", UNIT, 0.9, "First-moment decay."),
            field!("beta2", UNIT, 0.999, "Second-moment decay."),
            field!("epsilon", POSITIVE, 1e-6, "Denominator stabilizer."),
            field!(
                "weight_decay",
                Kind::Float {
                    min: 0.0,
                    min_open: false,
                    max: f64::INFINITY,
                    max_open: true
                },
                0.01,
                "Decoupled weight decay on matrices."
            ),
        ],
        "training" => vec![
            field!(
                "epochs",
                Kind::Int(1),
                30,
                "Passes over the data; one pass is `ceil(total sentences / batch_size)` steps."
            ),
            field!("batch_size", Kind::Int(1), 8, "Sentences per step."),
            field!(
                "min_count",
                Kind::Int(1),
                1,
                "Minimum character frequency for a vocabulary entry."
            ),
            field!(
                "teacher_dir",
                Kind::Str,
                optional,
                "Directory holding `<task>` teacher checkpoints for distillation; defaults to `<output_dir>/teachers`."
            ),
        ],
        _ => Vec::new(),
    }
}

const SECTIONS: [&str; 4] = ["encoder", "heads", "optimizer", "training"];

fn type_name(kind: Kind) -> &'static str {
    match kind {
        Kind::Int(_) => "integer",
        Kind::Float { .. } => "number",
        Kind::Bool => "boolean",
        Kind::Str => "string",
    }
}

fn check_value(path: &str, kind: Kind, v: &Value, out: &mut Vec<Violation>) {
    let mut fail = |message: String| {
        out.push(Violation {
            path: path.to_string(),
            message,
        })
    };
    match kind {
        Kind::Int(min) => match v.as_u64() {
            Some(n) if n >= min => {}
            Some(n) => fail(format!("{n} is below the minimum {min}")),
            None => fail(format!("expected a non-negative integer, found {v}")),
        },
        Kind::Float {
            min,
            min_open,
            max,
            max_open,
        } => match v.as_f64() {
            Some(x) => {
                let low = if min_open { x > min } else { x >= min };
                let high = if max_open { x < max } else { x <= max };
                if !(low && high) {
                    fail(format!("{x} is outside {}", range_text(kind)));
                }
            }
            None => fail(format!("expected a number, found {v}")),
        },
        Kind::Bool => {
            if !v.is_boolean() {
                fail(format!("expected a boolean, found {v}"));
            }
        }
        Kind::Str => {
            if !v.as_str().is_some_and(|s| !s.is_empty()) {
                fail(format!("expected a non-empty string, found {v}"));
            }
        }
    }
}

fn range_text(kind: Kind) -> String {
    match kind {
        Kind::Int(min) => format!(">= {min}"),
        Kind::Float {
            min,
            min_open,
            max,
            max_open,
        } => {
            let lo = if min_open { '(' } else { '[' };
            let hi = if max_open { ')' } else { ']' };
            let max = if max.is_infinite() {
                "inf".to_string()
            } else {
                max.to_string()
            };
            format!("{lo}{min}, {max}{hi}")
        }
        Kind::Bool | Kind::Str => "-".into(),
    }
}

/// Checks one object against its fields, filling defaults in place.
fn check_object(path: &str, obj: &mut Map<String, Value>, fields: &[Field], out: &mut Vec<Violation>) {
    let known: BTreeSet<&str> = fields.iter().map(|f| f.key).collect();
    for key in obj.keys() {
        if !known.contains(key.as_str()) {
            out.push(Violation {
                path: format!("{path}.{key}"),
                message: "unknown key".into(),
            });
        }
    }
    for f in fields {
        let p = format!("{path}.{}", f.key);
        match obj.get(f.key) {
            Some(Value::Null) if matches!(f.presence, Presence::Optional) => {
                obj.remove(f.key);
            }
            Some(v) => check_value(&p, f.kind, v, out),
            None => match f.presence {
                Presence::Default(d) => {
                    obj.insert(f.key.to_string(), d());
                }
                Presence::Optional => {}
                Presence::Required => out.push(Violation {
                    path: p,
                    message: "required key is missing".into(),
                }),
            },
        }
    }
}

/// Validates a raw configuration and returns it with every default filled.
pub fn normalize(mut raw: Value) -> Result<Value> {
    let mut out = Vec::new();
    let Some(root) = raw.as_object_mut() else {
        return Err(Error::Config(vec![Violation {
            path: "$".into(),
            message: "configuration must be a JSON object".into(),
        }]));
    };
    let mut known: BTreeSet<&str> = top_fields().iter().map(|f| f.key).collect();
    known.insert("tasks");
    known.extend(SECTIONS);
    for key in root.keys() {
        if !known.contains(key.as_str()) {
            out.push(Violation {
                path: format!("$.{key}"),
                message: "unknown key".into(),
            });
        }
    }
    let mut top = Map::new();
    for f in top_fields() {
        if let Some(v) = root.remove(f.key) {
            top.insert(f.key.to_string(), v);
        }
    }
    check_object("$", &mut top, &top_fields(), &mut out);
    root.extend(top);

    match root.get_mut("tasks") {
        Some(Value::Array(tasks)) if !tasks.is_empty() => {
            let mut seen = BTreeSet::new();
            for (i, t) in tasks.iter_mut().enumerate() {
                let p = format!("$.tasks[{i}]");
                let Some(obj) = t.as_object_mut() else {
                    out.push(Violation {
                        path: p,
                        message: "expected an object".into(),
                    });
                    continue;
                };
                check_object(&p, obj, &task_fields(), &mut out);
                let name = obj.get("name").and_then(Value::as_str).map(str::parse::<Task>);
                match name {
                    Some(Ok(task)) => {
                        if !seen.insert(task) {
                            out.push(Violation {
                                path: format!("{p}.name"),
                                message: format!("task {task} listed twice"),
                            });
                        }
                        if !obj.contains_key("format") {
                            obj.insert("format".into(), json!(Format::for_task(task).name()));
                        }
                    }
                    Some(Err(e)) => out.push(Violation {
                        path: format!("{p}.name"),
                        message: e.to_string(),
                    }),
                    None => {}
                }
                if let Some(f) = obj.get("format").and_then(Value::as_str) {
                    if let Err(e) = f.parse::<Format>() {
                        out.push(Violation {
                            path: format!("{p}.format"),
                            message: e.to_string(),
                        });
                    }
                }
            }
        }
        Some(Value::Array(_)) => out.push(Violation {
            path: "$.tasks".into(),
            message: "at least one task is required".into(),
        }),
        Some(other) => out.push(Violation {
            path: "$.tasks".into(),
            message: format!("expected an array, found {other}"),
        }),
        None => out.push(Violation {
            path: "$.tasks".into(),
            message: "required key is missing".into(),
        }),
    }

    for s in SECTIONS {
        let p = format!("$.{s}");
        let entry = root.entry(s.to_string()).or_insert_with(|| json!({}));
        match entry.as_object_mut() {
            Some(obj) => check_object(&p, obj, &section_fields(s), &mut out),
            None => out.push(Violation {
                path: p,
                message: format!("expected an object, found {entry}"),
            }),
        }
    }

    let enc = &root["encoder"];
    if let (Some(w), Some(h)) = (
        enc.get("width").and_then(Value::as_u64),
        enc.get("heads").and_then(Value::as_u64),
    ) {
        if h > 0 && w % h != 0 {
            out.push(Violation {
                path: "$.encoder.width".into(),
                message: format!("{w} is not divisible by encoder.heads = {h}"),
            });
        }
    }

    if out.is_empty() {
        Ok(raw)
    } else {
        Err(Error::Config(out))
    }
}

impl PipelineConfig {
    /// Parses and validates JSON text; `base_dir` anchors relative paths.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: Value = serde_json::from_str(text)?;
        let normalized = normalize(raw)?;
        let mut config: PipelineConfig = serde_json::from_value(normalized)?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_json(&text, &base)
    }

    /// The normalized document, every default included.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("configuration serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// `path` interpreted relative to the configuration file.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn task(&self, task: Task) -> Option<&TaskConfig> {
        self.tasks.iter().find(|t| t.name == task)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn teacher_dir(&self) -> PathBuf {
        match &self.training.teacher_dir {
            Some(d) => self.resolve(d),
            None => self.output_dir().join("teachers"),
        }
    }
}

/// Markdown reference of every key, type, default and valid range.
pub fn schema_markdown() -> String {
    let mut out = String::new();
    out.push_str("# Configuration reference\n\n");
    out.push_str("Training is driven by one JSON file. Unknown keys are rejected and every\n");
    out.push_str("problem is reported with its JSON path. Missing optional keys take the\n");
    out.push_str("defaults below; the checkpoint's `config.json` echoes the complete\n");
    out.push_str("normalized document. Relative paths resolve against the directory of the\n");
    out.push_str("configuration file.\n");
    let table = |out: &mut String, prefix: &str, fields: &[Field]| {
        out.push_str("\n| key | type | default | valid range | description |\n|---|---|---|---|---|\n");
        for f in fields {
            let default = match f.presence {
                Presence::Default(d) => format!("`{}`", d()),
                Presence::Optional => "none".into(),
                Presence::Required => "required".into(),
            };
            writeln!(
                out,
                "| `{prefix}{}` | {} | {default} | {} | {} |",
                f.key,
                type_name(f.kind),
                range_text(f.kind),
                f.doc
            )
            .unwrap();
        }
    };
    out.push_str("\n## Top level\n");
    table(&mut out, "", &top_fields());
    out.push_str("\n## `tasks[]`\n\nA non-empty array; each entry is an object:\n");
    table(&mut out, "", &task_fields());
    for s in SECTIONS {
        writeln!(out, "\n## `{s}`").unwrap();
        table(&mut out, &format!("{s}."), &section_fields(s));
    }
    out
}
