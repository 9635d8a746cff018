//! Evaluation metrics over aligned gold and predicted sentences.
//!
//! Words are identified by their character spans, so predictions made over
//! a different segmentation are scored against the gold words they match
//! exactly. Precision is 0 when there are no predictions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::MultiTaskModel;
use crate::sentence::{AnnotatedSentence, Span};
use crate::task::Task;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

/// Accumulates set-overlap counts across sentences.
#[derive(Default)]
struct Counts {
    correct: usize,
    predicted: usize,
    gold: usize,
}

impl Counts {
    fn add<T: Eq + Hash>(&mut self, gold: HashSet<T>, pred: HashSet<T>) {
        self.correct += gold.intersection(&pred).count();
        self.predicted += pred.len();
        self.gold += gold.len();
    }

    fn prf(&self) -> Prf {
        Prf::from_counts(self.correct, self.predicted, self.gold)
    }
}

/// Metric name whose value summarizes a task.
pub fn primary_metric(task: Task) -> &'static str {
    match task {
        Task::Pos => "accuracy",
        Task::Dep => "las",
        _ => "f1",
    }
}

fn insert_prf(out: &mut BTreeMap<String, f64>, prf: Prf) {
    out.insert("precision".into(), prf.precision);
    out.insert("recall".into(), prf.recall);
    out.insert("f1".into(), prf.f1);
}

fn words_of(s: &AnnotatedSentence) -> &[Span] {
    s.words.as_deref().unwrap_or(&[])
}

/// Span of word `i` (1-based) or `None` for the root.
fn word_span(words: &[Span], i: usize) -> Option<Span> {
    if i == 0 {
        None
    } else {
        words.get(i - 1).copied()
    }
}

fn require<T>(layer: Option<&T>, task: Task, index: usize) -> Result<&T> {
    layer.ok_or_else(|| Error::Data(format!("gold sentence {index} has no {task} annotation")))
}

/// Scores `pred` against `gold` for one task.
pub fn evaluate(task: Task, gold: &[AnnotatedSentence], pred: &[AnnotatedSentence]) -> Result<BTreeMap<String, f64>> {
    if gold.len() != pred.len() {
        return Err(Error::Data(format!(
            "gold has {} sentences, prediction has {}",
            gold.len(),
            pred.len()
        )));
    }
    if let Some(i) = (0..gold.len()).find(|&i| gold[i].text != pred[i].text) {
        return Err(Error::Data(format!("sentence {i} differs between gold and prediction")));
    }
    let mut out = BTreeMap::new();
    let mut counts = Counts::default();
    match task {
        Task::Cws => {
            for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
                let gw = require(g.words.as_ref(), task, i)?;
                counts.add(gw.iter().copied().collect(), words_of(p).iter().copied().collect());
            }
            insert_prf(&mut out, counts.prf());
        }
        Task::Pos => {
            let (mut right, mut total) = (0, 0);
            for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
                let gt = require(g.pos.as_ref(), task, i)?;
                let gold_set: HashSet<(Span, &str)> =
                    words_of(g).iter().copied().zip(gt.iter().map(String::as_str)).collect();
                let pred_set: HashSet<(Span, &str)> = match &p.pos {
                    Some(pt) => words_of(p).iter().copied().zip(pt.iter().map(String::as_str)).collect(),
                    None => HashSet::new(),
                };
                right += gold_set.intersection(&pred_set).count();
                total += gt.len();
                counts.add(gold_set, pred_set);
            }
            out.insert(
                "accuracy".into(),
                if total == 0 { 0.0 } else { right as f64 / total as f64 },
            );
            insert_prf(&mut out, counts.prf());
        }
        Task::Ner => {
            for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
                let ge = require(g.entities.as_ref(), task, i)?;
                counts.add(
                    ge.iter().cloned().collect(),
                    p.entities.iter().flatten().cloned().collect(),
                );
            }
            insert_prf(&mut out, counts.prf());
        }
        Task::Dep => {
            let (mut unlabeled, mut labeled, mut total) = (0, 0, 0);
            for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
                let gt = require(g.dep.as_ref(), task, i)?;
                let gw = words_of(g);
                let pw = words_of(p);
                let predicted: HashMap<Span, (Option<Span>, &str)> = match &p.dep {
                    Some(pt) => pw
                        .iter()
                        .enumerate()
                        .map(|(j, &w)| (w, (word_span(pw, pt.heads[j]), pt.labels[j].as_str())))
                        .collect(),
                    None => HashMap::new(),
                };
                for (j, &w) in gw.iter().enumerate() {
                    total += 1;
                    if let Some(&(head, label)) = predicted.get(&w) {
                        if head == word_span(gw, gt.heads[j]) {
                            unlabeled += 1;
                            if label == gt.labels[j] {
                                labeled += 1;
                            }
                        }
                    }
                }
            }
            let ratio = |a: usize| if total == 0 { 0.0 } else { a as f64 / total as f64 };
            out.insert("uas".into(), ratio(unlabeled));
            out.insert("las".into(), ratio(labeled));
        }
        Task::Sdp => {
            for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
                let gg = require(g.sdp.as_ref(), task, i)?;
                let edges = |s: &AnnotatedSentence, es: &[crate::sentence::SdpEdge]| {
                    es.iter()
                        .map(|e| {
                            (
                                word_span(words_of(s), e.head),
                                word_span(words_of(s), e.dependent),
                                e.relation.clone(),
                            )
                        })
                        .collect::<HashSet<_>>()
                };
                let pred_edges = p.sdp.as_ref().map(|pg| edges(p, &pg.edges)).unwrap_or_default();
                counts.add(edges(g, &gg.edges), pred_edges);
            }
            insert_prf(&mut out, counts.prf());
        }
        Task::Srl => {
            for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
                let gf = require(g.srl.as_ref(), task, i)?;
                let tuples = |s: &AnnotatedSentence, frames: &[crate::sentence::Frame]| {
                    let w = words_of(s);
                    let mut set = HashSet::new();
                    for f in frames {
                        let pred_span = w[f.predicate];
                        set.insert((pred_span, pred_span, "V".to_string()));
                        for a in &f.arguments {
                            let span = Span::new(w[a.start].start, w[a.end - 1].end);
                            set.insert((pred_span, span, a.role.clone()));
                        }
                    }
                    set
                };
                let pred_set = p.srl.as_ref().map(|pf| tuples(p, pf)).unwrap_or_default();
                counts.add(tuples(g, gf), pred_set);
            }
            insert_prf(&mut out, counts.prf());
        }
    }
    Ok(out)
}

/// Predictions of `model` on gold sentences for scoring one task. The
/// segmentation task runs the full pipeline; other tasks reuse the gold
/// segmentation when it is present.
pub fn predict_for(model: &MultiTaskModel, task: Task, gold: &[AnnotatedSentence]) -> Result<Vec<AnnotatedSentence>> {
    gold.iter()
        .map(|s| match (&s.words, task) {
            (Some(w), t) if t != Task::Cws => model.analyze_with_words(&s.text, w),
            _ => model.analyze(&s.text),
        })
        .collect()
}

/// Primary metric of `task` for `model` on `gold`.
pub fn score_model(model: &MultiTaskModel, task: Task, gold: &[AnnotatedSentence]) -> Result<f64> {
    let pred = predict_for(model, task, gold)?;
    let report = evaluate(task, gold, &pred)?;
    Ok(report[primary_metric(task)])
}
