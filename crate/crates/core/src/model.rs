//! The multi-task model: one shared encoder and any subset of the six heads.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, softmax, Graph, Var};
use crate::decode::{
    assign_labels, bio_to_entities, bmes_to_spans, eisner, entities_to_bio, sdp_decode, spans_to_bmes, ArcScoreMatrix,
    Bmes, LabeledArcScores,
};
use crate::encoder::{EncodedSequence, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::heads::{
    binary_nll, char_rows, class_nll, sdp_edge_probs, word_rows, NerHead, ParserHead, SrlHead, TagDistribution, TagHead,
};
use crate::params::{ParamId, ParamStore};
use crate::sentence::{AnnotatedSentence, Argument, Frame, Span};
use crate::task::{LabelSet, Task};
use crate::tensor::Tensor;
use crate::vocab::Vocab;

/// Added to the diagonal of dependent-by-head score rows so a word never
/// heads itself.
const SELF_ARC: f64 = -1e9;

/// Role tag marking the predicate itself on its own row.
pub const PREDICATE_TAG: &str = "B-V";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadsConfig {
    /// Width of the biaffine projections.
    pub mlp_width: usize,
    /// Relative-position attention layers in the entity head; 0 disables it.
    pub ner_adapted_layers: usize,
    /// Force exactly one child of the root when decoding trees.
    pub single_root: bool,
}

impl Default for HeadsConfig {
    fn default() -> Self {
        HeadsConfig {
            mlp_width: 64,
            ner_adapted_layers: 1,
            single_root: false,
        }
    }
}

/// How a head's scores turn into a distribution for soft targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SoftKind {
    /// Softmax over the last dimension.
    Categorical,
    /// Independent sigmoid per cell.
    Bernoulli,
}

/// One component of a task loss: the gold loss, plus the scores a teacher's
/// soft targets are matched against.
#[derive(Clone, Copy, Debug)]
pub struct LossPart {
    pub gold_loss: Var,
    pub logits: Var,
    pub kind: SoftKind,
}

impl LossPart {
    /// The distribution these scores define, used as soft targets when the
    /// scores come from a teacher.
    pub fn soft_targets(&self, g: &Graph) -> Tensor {
        match self.kind {
            SoftKind::Categorical => softmax(g.value(self.logits)),
            SoftKind::Bernoulli => g.value(self.logits).map(sigmoid),
        }
    }
}

/// Label inventory of a task, derived from its training sentences.
pub fn infer_labels(task: Task, sentences: &[AnnotatedSentence]) -> Result<LabelSet> {
    let mut seen = std::collections::BTreeSet::new();
    let missing = |what: &str| Error::Data(format!("{task} training sentence without {what}"));
    let labels: Vec<String> = match task {
        Task::Cws => Bmes::ALL.iter().map(|b| b.to_string()).collect(),
        Task::Pos => {
            for s in sentences {
                seen.extend(s.pos.as_ref().ok_or_else(|| missing("tags"))?.iter().cloned());
            }
            seen.into_iter().collect()
        }
        Task::Ner => {
            for s in sentences {
                seen.extend(
                    s.entities
                        .as_ref()
                        .ok_or_else(|| missing("entities"))?
                        .iter()
                        .map(|e| e.kind.clone()),
                );
            }
            std::iter::once("O".to_string())
                .chain(seen.into_iter().flat_map(|t| [format!("B-{t}"), format!("I-{t}")]))
                .collect()
        }
        Task::Dep => {
            for s in sentences {
                seen.extend(s.dep.as_ref().ok_or_else(|| missing("a tree"))?.labels.iter().cloned());
            }
            seen.into_iter().collect()
        }
        Task::Sdp => {
            for s in sentences {
                seen.extend(
                    s.sdp
                        .as_ref()
                        .ok_or_else(|| missing("a graph"))?
                        .edges
                        .iter()
                        .map(|e| e.relation.clone()),
                );
            }
            seen.into_iter().collect()
        }
        Task::Srl => {
            for s in sentences {
                for f in s.srl.as_ref().ok_or_else(|| missing("frames"))? {
                    seen.extend(f.arguments.iter().map(|a| a.role.clone()));
                }
            }
            seen.remove("V");
            ["O".to_string(), PREDICATE_TAG.to_string()]
                .into_iter()
                .chain(seen.into_iter().flat_map(|t| [format!("B-{t}"), format!("I-{t}")]))
                .collect()
        }
    };
    LabelSet::new(labels)
}

/// Role tags of every word row: predicate rows carry `B-V` on the
/// predicate and BIO tags on its arguments, other rows are all `O`.
pub fn srl_rows(frames: &[Frame], words: usize) -> Vec<Vec<String>> {
    let mut rows = vec![vec!["O".to_string(); words]; words];
    for f in frames {
        let row = &mut rows[f.predicate];
        for a in &f.arguments {
            for (i, tag) in row.iter_mut().enumerate().take(a.end).skip(a.start) {
                let prefix = if i == a.start { "B" } else { "I" };
                *tag = format!("{prefix}-{}", a.role);
            }
        }
        row[f.predicate] = PREDICATE_TAG.to_string();
    }
    rows
}

/// Frames from decoded role rows: a row is a predicate when it tags its own
/// position `B-V`.
pub fn frames_from_rows<S: AsRef<str>>(rows: &[Vec<S>]) -> Vec<Frame> {
    rows.iter()
        .enumerate()
        .filter(|(p, row)| row[*p].as_ref() == PREDICATE_TAG)
        .map(|(p, row)| Frame {
            predicate: p,
            arguments: bio_to_entities(row)
                .into_iter()
                .filter(|e| e.kind != "V")
                .map(|e| Argument {
                    start: e.start,
                    end: e.end,
                    role: e.kind,
                })
                .collect(),
        })
        .collect()
}

fn indices(labels: &LabelSet, tags: &[String]) -> Result<Vec<usize>> {
    tags.iter().map(|t| labels.require(t)).collect()
}

#[derive(Clone, Debug)]
pub struct MultiTaskModel {
    pub encoder_config: EncoderConfig,
    pub heads_config: HeadsConfig,
    pub vocab: Vocab,
    pub labels: BTreeMap<Task, LabelSet>,
    pub store: ParamStore,
    encoder: Encoder,
    cws: Option<TagHead>,
    pos: Option<TagHead>,
    ner: Option<NerHead>,
    dep: Option<ParserHead>,
    sdp: Option<ParserHead>,
    srl: Option<SrlHead>,
}

impl MultiTaskModel {
    /// Builds a randomly initialized model with a head for every task in
    /// `labels`. Each head draws from its own seeded stream, so its initial
    /// weights do not depend on which other heads exist.
    pub fn new(
        mut encoder_config: EncoderConfig,
        heads_config: HeadsConfig,
        vocab: Vocab,
        labels: BTreeMap<Task, LabelSet>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::contract("a model needs at least one task"));
        }
        encoder_config.vocab_size = vocab.len();
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, encoder_config.clone())?;
        let d = encoder_config.width;
        let k = heads_config.mlp_width;
        let p = encoder_config.dropout;
        let mut model = MultiTaskModel {
            encoder_config: encoder_config.clone(),
            heads_config: heads_config.clone(),
            vocab,
            labels: labels.clone(),
            store,
            encoder,
            cws: None,
            pos: None,
            ner: None,
            dep: None,
            sdp: None,
            srl: None,
        };
        for (&task, set) in &labels {
            let index = Task::ALL.iter().position(|&t| t == task).unwrap_or(0) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(encoder_config.seed.wrapping_add(1 + index));
            let store = &mut model.store;
            let name = task.name();
            let l = set.len();
            match task {
                Task::Cws => model.cws = Some(TagHead::new(store, name, d, l, &mut rng)?),
                Task::Pos => model.pos = Some(TagHead::new(store, name, d, l, &mut rng)?),
                Task::Ner => {
                    model.ner = Some(NerHead::new(
                        store,
                        name,
                        &encoder_config,
                        heads_config.ner_adapted_layers,
                        l,
                        &mut rng,
                    )?)
                }
                Task::Dep => model.dep = Some(ParserHead::new(store, name, d, k, l, p, &mut rng)?),
                Task::Sdp => model.sdp = Some(ParserHead::new(store, name, d, k, l, p, &mut rng)?),
                Task::Srl => model.srl = Some(SrlHead::new(store, name, d, k, l, p, &mut rng)?),
            }
        }
        Ok(model)
    }

    pub fn tasks(&self) -> Vec<Task> {
        self.labels.keys().copied().collect()
    }

    pub fn has_task(&self, task: Task) -> bool {
        self.labels.contains_key(&task)
    }

    pub fn label_set(&self, task: Task) -> Result<&LabelSet> {
        self.labels
            .get(&task)
            .ok_or_else(|| Error::Model(format!("model has no {task} head")))
    }

    /// Parameters of the shared encoder.
    pub fn encoder_params(&self) -> Vec<ParamId> {
        self.encoder.param_ids(&self.store)
    }

    /// Parameters of one task head.
    pub fn head_params(&self, task: Task) -> Vec<ParamId> {
        let prefix = format!("{}.", task.name());
        self.store
            .iter()
            .filter(|(_, p)| p.name.starts_with(&prefix))
            .map(|(id, _)| id)
            .collect()
    }

    /// Encodes a sentence; whitespace is dropped.
    pub fn encode(&self, g: &mut Graph, text: &str) -> Result<EncodedSequence> {
        let ids = self.vocab.encode(text);
        self.encoder.encode(g, &self.store, &ids)
    }

    fn missing(&self, task: Task) -> Error {
        Error::Model(format!("model has no {task} head"))
    }

    fn gold_words<'a>(&self, task: Task, s: &'a AnnotatedSentence) -> Result<&'a [Span]> {
        s.words
            .as_deref()
            .ok_or_else(|| Error::Data(format!("{task} needs word segmentation")))
    }

    /// Loss components of one task on one gold sentence. Word-level heads
    /// pool over the gold segmentation.
    pub fn loss_parts(&self, g: &mut Graph, task: Task, s: &AnnotatedSentence) -> Result<Vec<LossPart>> {
        let labels = self.label_set(task)?;
        let enc = self.encode(g, &s.text)?;
        if enc.len() != s.num_chars() {
            return Err(Error::Data(format!("sentence {:?} contains whitespace", s.text)));
        }
        let store = &self.store;
        let categorical = |g: &mut Graph, logits: Var, gold: &[usize]| -> Result<LossPart> {
            Ok(LossPart {
                gold_loss: class_nll(g, logits, gold)?,
                logits,
                kind: SoftKind::Categorical,
            })
        };
        match task {
            Task::Cws => {
                let head = self.cws.as_ref().ok_or_else(|| self.missing(task))?;
                let words = self.gold_words(task, s)?;
                let tags: Vec<String> = spans_to_bmes(words).iter().map(|b| b.to_string()).collect();
                let rows = char_rows(g, &enc)?;
                let logits = head.logits(g, store, rows)?;
                Ok(vec![categorical(g, logits, &indices(labels, &tags)?)?])
            }
            Task::Pos => {
                let head = self.pos.as_ref().ok_or_else(|| self.missing(task))?;
                let words = self.gold_words(task, s)?;
                let tags = s.pos.as_ref().ok_or_else(|| Error::Data("missing tags".into()))?;
                let rows = word_rows(g, &enc, words, false)?;
                let logits = head.logits(g, store, rows)?;
                Ok(vec![categorical(g, logits, &indices(labels, tags)?)?])
            }
            Task::Ner => {
                let head = self.ner.as_ref().ok_or_else(|| self.missing(task))?;
                let ents = s
                    .entities
                    .as_ref()
                    .ok_or_else(|| Error::Data("missing entities".into()))?;
                let tags = entities_to_bio(s.num_chars(), ents);
                let logits = head.logits(g, store, &enc)?;
                Ok(vec![categorical(g, logits, &indices(labels, &tags)?)?])
            }
            Task::Dep => {
                let head = self.dep.as_ref().ok_or_else(|| self.missing(task))?;
                let words = self.gold_words(task, s)?;
                let tree = s.dep.as_ref().ok_or_else(|| Error::Data("missing tree".into()))?;
                let m = words.len() + 1;
                let rows = word_rows(g, &enc, words, true)?;
                let arcs = head.arc_scores(g, store, rows)?;
                let by_dep = g.transpose(arcs)?;
                let mask = g.constant(Tensor::from_fn(
                    &[m, m],
                    |k| if k / m == k % m { SELF_ARC } else { 0.0 },
                ));
                let by_dep = g.add(by_dep, mask)?;
                let head_logits = g.slice_rows(by_dep, 1, m - 1)?;
                let arc_part = categorical(g, head_logits, &tree.heads)?;
                let rels = head.label_scores(g, store, rows)?;
                let cells: Vec<usize> = tree.heads.iter().enumerate().map(|(i, &h)| h * m + i + 1).collect();
                let rel_logits = g.select_rows(rels, &cells)?;
                let rel_part = categorical(g, rel_logits, &indices(labels, &tree.labels)?)?;
                Ok(vec![arc_part, rel_part])
            }
            Task::Sdp => {
                let head = self.sdp.as_ref().ok_or_else(|| self.missing(task))?;
                let words = self.gold_words(task, s)?;
                let graph = s.sdp.as_ref().ok_or_else(|| Error::Data("missing graph".into()))?;
                let m = words.len() + 1;
                let rows = word_rows(g, &enc, words, true)?;
                let arcs = head.arc_scores(g, store, rows)?;
                let mut gold = Tensor::zeros(&[m, m]);
                for e in &graph.edges {
                    gold.set(e.head, e.dependent, 1.0);
                }
                let cells: Vec<usize> = (0..m * m).filter(|k| k % m != 0 && k / m != k % m).collect();
                let targets = Tensor::new(&[cells.len()], cells.iter().map(|&k| gold.data()[k]).collect())?;
                let n_cells = cells.len();
                let edge_logits = g.gather(arcs, cells, &[n_cells])?;
                let edge_part = LossPart {
                    gold_loss: binary_nll(g, edge_logits, &targets)?,
                    logits: edge_logits,
                    kind: SoftKind::Bernoulli,
                };
                let mut parts = vec![edge_part];
                if !graph.edges.is_empty() {
                    let rels = head.label_scores(g, store, rows)?;
                    let cells: Vec<usize> = graph.edges.iter().map(|e| e.head * m + e.dependent).collect();
                    let rel_logits = g.select_rows(rels, &cells)?;
                    let gold: Vec<String> = graph.edges.iter().map(|e| e.relation.clone()).collect();
                    parts.push(categorical(g, rel_logits, &indices(labels, &gold)?)?);
                }
                Ok(parts)
            }
            Task::Srl => {
                let head = self.srl.as_ref().ok_or_else(|| self.missing(task))?;
                let words = self.gold_words(task, s)?;
                let frames = s.srl.as_ref().ok_or_else(|| Error::Data("missing frames".into()))?;
                let rows = word_rows(g, &enc, words, false)?;
                let emissions = head.emissions(g, store, rows)?;
                let gold = srl_rows(frames, words.len())
                    .iter()
                    .map(|r| indices(labels, r))
                    .collect::<Result<Vec<_>>>()?;
                let ll = head.log_likelihood(g, store, emissions, &gold)?;
                // Per position, like the other tasks' losses.
                Ok(vec![LossPart {
                    gold_loss: g.scale(ll, -1.0 / words.len() as f64),
                    logits: emissions,
                    kind: SoftKind::Categorical,
                }])
            }
        }
    }

    /// Full pipeline analysis of one sentence: segmentation first, then
    /// every word-level head over the predicted words. Without a
    /// segmentation head every character is a word.
    pub fn analyze(&self, text: &str) -> Result<AnnotatedSentence> {
        self.analyze_inner(text, None)
    }

    /// Analysis with a given segmentation; the segmentation head is not run.
    pub fn analyze_with_words(&self, text: &str, words: &[Span]) -> Result<AnnotatedSentence> {
        self.analyze_inner(text, Some(words))
    }

    fn analyze_inner(&self, text: &str, given: Option<&[Span]>) -> Result<AnnotatedSentence> {
        let text: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let mut out = AnnotatedSentence::new(text.clone());
        let n = out.num_chars();
        if n == 0 {
            out.words = Some(Vec::new());
            return Ok(out);
        }
        let mut g = Graph::new();
        let enc = self.encode(&mut g, &text)?;
        let store = &self.store;

        let words: Vec<Span> = match (given, &self.cws) {
            (Some(w), _) => {
                if !crate::sentence::is_partition(w, n) {
                    return Err(Error::Data("given words do not partition the sentence".into()));
                }
                w.to_vec()
            }
            (None, Some(head)) => {
                let rows = char_rows(&mut g, &enc)?;
                let dist = head.distribution(&mut g, store, rows)?;
                let set = self.label_set(Task::Cws)?;
                let tags = dist
                    .argmax()
                    .into_iter()
                    .map(|i| set.label(i).parse())
                    .collect::<Result<Vec<Bmes>>>()?;
                bmes_to_spans(&tags)
            }
            (None, None) => (0..n).map(|i| Span::new(i, i + 1)).collect(),
        };
        let m = words.len();
        out.words = Some(words.clone());

        if let Some(head) = &self.pos {
            let rows = word_rows(&mut g, &enc, &words, false)?;
            let dist = head.distribution(&mut g, store, rows)?;
            let set = self.label_set(Task::Pos)?;
            out.pos = Some(dist.argmax().into_iter().map(|i| set.label(i).to_string()).collect());
        }
        if let Some(head) = &self.ner {
            let logits = head.logits(&mut g, store, &enc)?;
            let dist = TagDistribution::from_logits(g.value(logits));
            let set = self.label_set(Task::Ner)?;
            let tags: Vec<&str> = dist.argmax().into_iter().map(|i| set.label(i)).collect();
            out.entities = Some(bio_to_entities(&tags));
        }
        if let Some(head) = &self.dep {
            let rows = word_rows(&mut g, &enc, &words, true)?;
            let arcs = head.arc_scores(&mut g, store, rows)?;
            let arcs = ArcScoreMatrix::new(g.value(arcs).clone())?;
            let heads = eisner(&arcs, self.heads_config.single_root)?;
            let rels = head.label_scores(&mut g, store, rows)?;
            let labeled = LabeledArcScores::new(g.value(rels).clone().reshape(&[
                m + 1,
                m + 1,
                self.label_set(Task::Dep)?.len(),
            ])?)?;
            out.dep = Some(assign_labels(&heads, &labeled, self.label_set(Task::Dep)?)?);
        }
        if let Some(head) = &self.sdp {
            let rows = word_rows(&mut g, &enc, &words, true)?;
            let arcs = head.arc_scores(&mut g, store, rows)?;
            let probs = sdp_edge_probs(g.value(arcs));
            let rels = head.label_scores(&mut g, store, rows)?;
            let set = self.label_set(Task::Sdp)?;
            let labeled = LabeledArcScores::new(g.value(rels).clone().reshape(&[m + 1, m + 1, set.len()])?)?;
            out.sdp = Some(sdp_decode(&probs, &labeled, set)?);
        }
        if let Some(head) = &self.srl {
            let rows = word_rows(&mut g, &enc, &words, false)?;
            let emissions = head.emissions(&mut g, store, rows)?;
            let set = self.label_set(Task::Srl)?;
            let decoded: Vec<Vec<&str>> = head
                .decode(store, g.value(emissions))?
                .into_iter()
                .map(|row| row.into_iter().map(|i| set.label(i)).collect())
                .collect();
            out.srl = Some(frames_from_rows(&decoded));
        }
        Ok(out)
    }
}
