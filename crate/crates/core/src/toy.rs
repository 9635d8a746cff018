//! Synthetic corpus with all six annotation layers, small enough to train
//! on in seconds. Sentences come from a few clause templates filled from a
//! fixed lexicon, so every layer is consistent with the others.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::data::{write_corpus, Format};
use crate::error::{Error, Result};
use crate::sentence::{AnnotatedSentence, Argument, DependencyGraph, DependencyTree, Entity, Frame, SdpEdge, Span};
use crate::task::Task;

const SURNAMES: [&str; 16] = [
    "张", "李", "王", "刘", "陈", "杨", "赵", "黄", "周", "吴", "徐", "孙", "马", "朱", "胡", "林",
];
const GIVEN: [&str; 20] = [
    "伟", "娜", "芳", "洋", "静", "帆", "磊", "敏", "强", "丽", "军", "杰", "涛", "明", "超", "霞", "平", "刚", "华",
    "玲",
];
const PLACES: [&str; 16] = [
    "北京", "上海", "广州", "深圳", "南京", "杭州", "成都", "西安", "武汉", "天津", "重庆", "苏州", "长沙", "青岛",
    "大连", "厦门",
];
const INSTITUTIONS: [&str; 5] = ["大学", "银行", "医院", "公司", "图书馆"];
const VERBS: [&str; 12] = [
    "喜欢", "访问", "参观", "研究", "支持", "认识", "帮助", "学习", "介绍", "报道", "讨论", "了解",
];
const NOUNS: [&str; 12] = [
    "音乐", "历史", "电影", "经济", "文化", "数学", "新闻", "艺术", "法律", "科学", "体育", "技术",
];
const TIMES: [&str; 5] = ["昨天", "今天", "明天", "去年", "上午"];
const ADVERBS: [&str; 4] = ["经常", "也", "一直", "已经"];

fn person(rng: &mut impl Rng) -> String {
    let mut name = SURNAMES.choose(rng).unwrap().to_string();
    for _ in 0..rng.gen_range(1..=2) {
        name.push_str(GIVEN.choose(rng).unwrap());
    }
    name
}

fn org(rng: &mut impl Rng) -> String {
    format!("{}{}", PLACES.choose(rng).unwrap(), INSTITUTIONS.choose(rng).unwrap())
}

#[derive(Clone, Copy)]
enum Filler {
    Person,
    Place,
    Org,
    Noun,
}

/// One word under construction: form, tag and entity type.
struct Word {
    form: String,
    pos: &'static str,
    entity: Option<&'static str>,
}

#[derive(Default)]
struct Draft {
    words: Vec<Word>,
    heads: Vec<usize>,
    labels: Vec<&'static str>,
    edges: Vec<(usize, usize, &'static str)>,
    frames: Vec<Frame>,
}

impl Draft {
    /// Appends a word and returns its 1-based index.
    fn push(&mut self, form: &str, pos: &'static str, entity: Option<&'static str>) -> usize {
        self.words.push(Word {
            form: form.to_string(),
            pos,
            entity,
        });
        self.heads.push(0);
        self.labels.push("");
        self.words.len()
    }

    fn fill(&mut self, filler: Filler, rng: &mut impl Rng) -> usize {
        match filler {
            Filler::Person => self.push(&person(rng), "NR", Some("PER")),
            Filler::Place => self.push(PLACES.choose(rng).unwrap(), "NR", Some("LOC")),
            Filler::Org => self.push(&org(rng), "NN", Some("ORG")),
            Filler::Noun => self.push(NOUNS.choose(rng).unwrap(), "NN", None),
        }
    }

    fn arc(&mut self, head: usize, dep: usize, label: &'static str) {
        self.heads[dep - 1] = head;
        self.labels[dep - 1] = label;
    }

    fn edge(&mut self, head: usize, dep: usize, relation: &'static str) {
        self.edges.push((head, dep, relation));
    }

    /// Frame over 1-based word indices; arguments are inclusive ranges.
    fn frame(&mut self, predicate: usize, args: &[(usize, usize, &str)]) {
        let mut arguments: Vec<Argument> = args
            .iter()
            .map(|&(first, last, role)| Argument {
                start: first - 1,
                end: last,
                role: role.to_string(),
            })
            .collect();
        arguments.sort();
        self.frames.push(Frame {
            predicate: predicate - 1,
            arguments,
        });
    }

    fn finish(self) -> AnnotatedSentence {
        let mut text = String::new();
        let mut spans = Vec::new();
        let mut entities = Vec::new();
        let mut pos = 0;
        for w in &self.words {
            let len = w.form.chars().count();
            spans.push(Span::new(pos, pos + len));
            if let Some(kind) = w.entity {
                entities.push(Entity {
                    start: pos,
                    end: pos + len,
                    kind: kind.to_string(),
                });
            }
            text.push_str(&w.form);
            pos += len;
        }
        let mut sdp = DependencyGraph {
            edges: self
                .edges
                .iter()
                .map(|&(head, dependent, relation)| SdpEdge {
                    head,
                    dependent,
                    relation: relation.to_string(),
                    prob: 1.0,
                })
                .collect(),
        };
        sdp.sort();
        let mut frames = self.frames;
        frames.sort_by_key(|f| f.predicate);
        AnnotatedSentence {
            text,
            words: Some(spans),
            pos: Some(self.words.iter().map(|w| w.pos.to_string()).collect()),
            entities: Some(entities),
            dep: Some(DependencyTree {
                heads: self.heads,
                labels: self.labels.iter().map(|l| l.to_string()).collect(),
            }),
            sdp: Some(sdp),
            srl: Some(frames),
            comments: Vec::new(),
        }
    }
}

fn object(rng: &mut impl Rng) -> Filler {
    *[Filler::Place, Filler::Org, Filler::Noun, Filler::Noun]
        .choose(rng)
        .unwrap()
}

fn agent(rng: &mut impl Rng) -> Filler {
    *[Filler::Person, Filler::Person, Filler::Person, Filler::Org]
        .choose(rng)
        .unwrap()
}

/// 张伟经常访问了北京。
fn simple_clause(rng: &mut impl Rng) -> Draft {
    let mut d = Draft::default();
    let subj = d.fill(agent(rng), rng);
    let adv = rng
        .gen_bool(0.5)
        .then(|| d.push(ADVERBS.choose(rng).unwrap(), "AD", None));
    let verb = d.push(VERBS.choose(rng).unwrap(), "VV", None);
    let aspect = rng.gen_bool(0.4).then(|| d.push("了", "AS", None));
    let obj = d.fill(object(rng), rng);
    let punct = d.push("。", "PU", None);
    d.arc(verb, subj, "SBV");
    d.arc(0, verb, "HED");
    d.arc(verb, obj, "VOB");
    d.arc(verb, punct, "WP");
    d.edge(verb, subj, "Agt");
    d.edge(0, verb, "Root");
    d.edge(verb, obj, "Pat");
    d.edge(verb, punct, "mPunc");
    if let Some(a) = adv {
        d.arc(verb, a, "ADV");
        d.edge(verb, a, "mDepd");
    }
    if let Some(a) = aspect {
        d.arc(verb, a, "RAD");
        d.edge(verb, a, "mTime");
    }
    let mut args = vec![(subj, subj, "A0"), (obj, obj, "A1")];
    if let Some(a) = adv {
        args.push((a, a, "ARGM-ADV"));
    }
    d.frame(verb, &args);
    d
}

/// 昨天李娜在上海研究历史。
fn located_clause(rng: &mut impl Rng) -> Draft {
    let mut d = Draft::default();
    let time = d.push(TIMES.choose(rng).unwrap(), "NT", None);
    let subj = d.fill(Filler::Person, rng);
    let prep = d.push("在", "P", None);
    let place = d.fill(Filler::Place, rng);
    let verb = d.push(VERBS.choose(rng).unwrap(), "VV", None);
    let obj = d.fill(Filler::Noun, rng);
    let punct = d.push("。", "PU", None);
    d.arc(verb, time, "ADV");
    d.arc(verb, subj, "SBV");
    d.arc(verb, prep, "ADV");
    d.arc(prep, place, "POB");
    d.arc(0, verb, "HED");
    d.arc(verb, obj, "VOB");
    d.arc(verb, punct, "WP");
    d.edge(verb, time, "Time");
    d.edge(verb, subj, "Agt");
    d.edge(place, prep, "mRela");
    d.edge(verb, place, "Loc");
    d.edge(0, verb, "Root");
    d.edge(verb, obj, "Cont");
    d.edge(verb, punct, "mPunc");
    d.frame(
        verb,
        &[
            (time, time, "ARGM-TMP"),
            (subj, subj, "A0"),
            (prep, place, "ARGM-LOC"),
            (obj, obj, "A1"),
        ],
    );
    d
}

/// 张伟帮助王芳研究经济。 The middle person is both patient of the
/// first verb and agent of the second, so it has two semantic heads.
fn pivot_clause(rng: &mut impl Rng) -> Draft {
    let mut d = Draft::default();
    let subj = d.fill(Filler::Person, rng);
    let v1 = d.push(["帮助", "支持", "让"].choose(rng).unwrap(), "VV", None);
    let mid = d.fill(Filler::Person, rng);
    let v2 = d.push(VERBS.choose(rng).unwrap(), "VV", None);
    let obj = d.fill(object(rng), rng);
    let punct = d.push("。", "PU", None);
    d.arc(v1, subj, "SBV");
    d.arc(0, v1, "HED");
    d.arc(v1, mid, "DBL");
    d.arc(v1, v2, "VOB");
    d.arc(v2, obj, "VOB");
    d.arc(v1, punct, "WP");
    d.edge(v1, subj, "Agt");
    d.edge(0, v1, "Root");
    d.edge(v1, mid, "Datv");
    d.edge(v2, mid, "Agt");
    d.edge(v1, v2, "eSucc");
    d.edge(v2, obj, "Pat");
    d.edge(v1, punct, "mPunc");
    d.frame(v1, &[(subj, subj, "A0"), (mid, mid, "A1"), (v2, obj, "A2")]);
    d.frame(v2, &[(mid, mid, "A0"), (obj, obj, "A1")]);
    d
}

/// `n` sentences drawn deterministically from `seed`.
pub fn toy_corpus(n: usize, seed: u64) -> Vec<AnnotatedSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let draft = match rng.gen_range(0..3) {
                0 => simple_clause(&mut rng),
                1 => located_clause(&mut rng),
                _ => pivot_clause(&mut rng),
            };
            draft.finish()
        })
        .collect()
}

/// Seed of the corpus generator.
pub const TOY_SEED: u64 = 20201130;
/// Seed written into the bundled configuration (initialization, dropout,
/// task sampling and batching).
pub const TOY_TRAIN_SEED: u64 = 5;
pub const TOY_DEV: usize = 20;

/// Training sentences per task. NER, SDP and SRL get smaller corpora, as
/// they usually do.
pub const TOY_SIZES: [(Task, usize); 6] = [
    (Task::Cws, 100),
    (Task::Pos, 100),
    (Task::Ner, 15),
    (Task::Dep, 100),
    (Task::Sdp, 30),
    (Task::Srl, 15),
];

pub const TOY_TRAIN: usize = 100;

/// Writes the toy train/dev corpora and a matching `config.json` into
/// `dir`, returning the configuration path. Every task's training file is
/// a prefix of the same generated sentences.
pub fn write_toy(dir: &Path) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let all = toy_corpus(TOY_TRAIN + TOY_DEV, TOY_SEED);
    let (train, dev) = all.split_at(TOY_TRAIN);
    let mut tasks = Vec::new();
    for (task, size) in TOY_SIZES {
        let format = Format::for_task(task);
        let ext = match format {
            Format::Conllu => "conllu",
            Format::Bio => "ner",
            Format::Srl => "srl",
        };
        let train_file = format!("train.{task}.{ext}");
        let dev_file = format!("dev.{task}.{ext}");
        write_corpus(&train[..size], &dir.join(&train_file), format)?;
        write_corpus(dev, &dir.join(&dev_file), format)?;
        tasks.push(json!({"name": task.to_string(), "train": train_file, "dev": dev_file}));
    }
    let config = json!({
        "seed": TOY_TRAIN_SEED,
        "output_dir": "runs",
        "tasks": tasks,
        "encoder": {"width": 32, "layers": 1, "heads": 2, "ffn_width": 64, "max_len": 32, "dropout": 0.1},
        "heads": {"mlp_width": 32},
        "optimizer": {"lr_teacher": 3e-3, "lr_student": 3e-3, "lr_crf": 1e-2},
        "training": {"epochs": 15, "batch_size": 8},
    });
    let normalized = crate::config::PipelineConfig::from_json(&config.to_string(), dir)?;
    let path = dir.join("config.json");
    normalized.save(&path)?;
    Ok(path)
}
