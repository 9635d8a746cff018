//! Acceptance criteria 1 to 8. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::path::Path;
use std::time::Instant;

use common::*;
use miniltp::autodiff::Graph;
use miniltp::config::PipelineConfig;
use miniltp::decode::crf::{log_partition, viterbi};
use miniltp::decode::spans::is_well_formed_bio;
use miniltp::decode::{eisner, entities_to_bio, ArcScoreMatrix};
use miniltp::metrics::score_model;
use miniltp::pipeline::{annotate, render_annotations, train, train_with, Datasets, Mode, OutputFormat};
use miniltp::sentence::{is_partition, AnnotatedSentence};
use miniltp::toy::write_toy;
use miniltp::train::{distill_loss, lambda_at, sampling_probabilities, teacher_loss, TaskSampler};
use miniltp::{MultiTaskModel, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn eisner_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for n in 1..=8 {
        let trees = projective_trees(n);
        for _ in 0..200 {
            let scores = random_tensor(&[n + 1, n + 1], 4.0, &mut rng);
            let best = trees
                .iter()
                .map(|t| tree_total(&scores, t))
                .fold(f64::NEG_INFINITY, f64::max);
            let heads = eisner(&ArcScoreMatrix::new(scores.clone()).map_err(|e| e.to_string())?, false)
                .map_err(|e| e.to_string())?;
            let got = tree_total(&scores, &heads);
            ensure(got == best, || format!("n = {n}: decoded {got}, enumeration {best}"))?;
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{checked} matrices, n <= 8, {secs:.1} s"))
}

fn crf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_z, mut worst_mass) = (0f64, 0f64);
    for i in 0..200 {
        let n = 1 + i % 6;
        let l = 1 + (i / 6) % 4;
        let emissions = random_tensor(&[n, l], 3.0, &mut rng);
        let crf = random_crf(l, &mut rng);
        let scores: Vec<f64> = sequences(n, l)
            .iter()
            .map(|s| chain_score(&emissions, &crf, s))
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        let log_z = log_partition(&emissions, &crf).map_err(|e| e.to_string())?;
        worst_z = worst_z.max((log_z - z).abs());
        ensure((log_z - z).abs() <= 1e-8, || {
            format!("n {n} L {l}: log Z {log_z} vs {z}")
        })?;
        let path = viterbi(&emissions, &crf).map_err(|e| e.to_string())?;
        let got = chain_score(&emissions, &crf, &path);
        ensure(got == max, || format!("n {n} L {l}: Viterbi {got} vs max {max}"))?;
        let mass: f64 = scores.iter().map(|s| (s - log_z).exp()).sum();
        worst_mass = worst_mass.max((mass - 1.0).abs());
        ensure((mass - 1.0).abs() <= 1e-8, || {
            format!("n {n} L {l}: total probability {mass}")
        })?;
    }
    Ok(format!(
        "200 instances, max |log Z error| {worst_z:.1e}, max |mass - 1| {worst_mass:.1e}"
    ))
}

fn gradient_integrity() -> Outcome {
    let (mut model, corpus) = toy_model(7);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = corpus.iter().max_by_key(|s| s.num_words()).unwrap().clone();
    let mut worst = 0f64;
    let mut count = 0;
    for task in Task::ALL {
        let head = model.head_params(task);
        let encoder = model.encoder_params();
        let mut checks = check_gradients(&mut model, task, &s, &head, 5, &mut rng);
        checks.extend(check_gradients(&mut model, task, &s, &encoder, 1, &mut rng));
        for c in checks {
            worst = worst.max(c.relative_error());
            count += 1;
            ensure(c.relative_error() <= 1e-4, || {
                format!("{task} {}: analytic {} numeric {}", c.name, c.analytic, c.numeric)
            })?;
        }
    }
    Ok(format!(
        "{count} parameters over 6 heads, max relative error {worst:.1e}"
    ))
}

fn sampling_law() -> Outcome {
    let sizes = [10_000, 1_000, 100];
    let p = sampling_probabilities(&sizes).map_err(|e| e.to_string())?;
    let sampler = TaskSampler::new(&sizes).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut counts = [0usize; 3];
    for _ in 0..100_000 {
        counts[sampler.sample(&mut rng)] += 1;
    }
    let mut worst = 0f64;
    for k in 0..3 {
        let expected = (sizes[k] as f64).powf(0.75) / sizes.iter().map(|&s| (s as f64).powf(0.75)).sum::<f64>();
        ensure((expected - p[k]).abs() < 1e-12, || {
            format!("probability {k}: {} vs {expected}", p[k])
        })?;
        let freq = counts[k] as f64 / 100_000.0;
        worst = worst.max((freq - expected).abs());
        ensure((freq - expected).abs() <= 0.01, || {
            format!("task {k}: frequency {freq} vs {expected}")
        })?;
    }
    Ok(format!("max deviation {:.2} points", worst * 100.0))
}

fn annealing_contract() -> Outcome {
    let total = 1000;
    ensure(lambda_at(0, total).map_err(|e| e.to_string())? == 0.0, || {
        "lambda(0) != 0".into()
    })?;
    ensure(lambda_at(total, total).map_err(|e| e.to_string())? == 1.0, || {
        "lambda(T) != 1".into()
    })?;
    for k in 0..=total {
        let l = lambda_at(k, total).map_err(|e| e.to_string())?;
        ensure((l - k as f64 / total as f64).abs() <= 1e-12, || {
            format!("lambda({k}) = {l}")
        })?;
    }
    let (student, corpus) = toy_model(5);
    let mut teacher = student.clone();
    let mut noise = ChaCha8Rng::seed_from_u64(6);
    let ids: Vec<_> = teacher.store.ids().collect();
    for id in ids {
        for v in teacher.store.value_mut(id).data_mut() {
            *v += noise.gen_range(-0.5..0.5);
        }
    }
    let mut parts_checked = 0;
    for task in Task::ALL {
        for s in &corpus[..3] {
            let mut tg = Graph::new();
            let soft: Vec<_> = teacher
                .loss_parts(&mut tg, task, s)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|p| p.soft_targets(&tg))
                .collect();
            let mut g = Graph::new();
            let parts = student.loss_parts(&mut g, task, s).map_err(|e| e.to_string())?;
            for (part, targets) in parts.iter().zip(&soft) {
                let gold = g.value(part.gold_loss).item();
                let t = teacher_loss(&mut g, part, targets).map_err(|e| e.to_string())?;
                let t = g.value(t).item();
                let one = distill_loss(&mut g, part, Some(targets), 1.0).map_err(|e| e.to_string())?;
                let zero = distill_loss(&mut g, part, Some(targets), 0.0).map_err(|e| e.to_string())?;
                let (one, zero) = (g.value(one).item(), g.value(zero).item());
                ensure((one - gold).abs() <= 1e-12, || {
                    format!("{task}: lambda 1 gives {one}, gold {gold}")
                })?;
                ensure((zero - t).abs() <= 1e-12, || {
                    format!("{task}: lambda 0 gives {zero}, teacher {t}")
                })?;
                parts_checked += 1;
            }
        }
    }
    Ok(format!(
        "{} schedule points, {parts_checked} loss parts over 6 tasks",
        total + 1
    ))
}

struct Distilled {
    student: MultiTaskModel,
    line: Outcome,
}

fn distillation_claim(dir: &Path) -> Result<Distilled, String> {
    let start = Instant::now();
    let path = write_toy(dir).map_err(|e| e.to_string())?;
    let config = PipelineConfig::load(&path).map_err(|e| e.to_string())?;
    let data = Datasets::load(&config).map_err(|e| e.to_string())?;
    let mut teachers = Vec::new();
    for d in &data.train {
        let out = train_with(&config, &data, Mode::Single(d.task)).map_err(|e| e.to_string())?;
        teachers.push(score_model(&out.model, d.task, &d.sentences).map_err(|e| e.to_string())?);
    }
    let student = train_with(&config, &data, Mode::Distill)
        .map_err(|e| e.to_string())?
        .model;
    let mut wins = 0;
    let mut lost = Vec::new();
    let mut table = Vec::new();
    for (d, &t) in data.train.iter().zip(&teachers) {
        let s = score_model(&student, d.task, &d.sentences).map_err(|e| e.to_string())?;
        let (t, s) = (100.0 * t, 100.0 * s);
        if s > t {
            wins += 1;
        }
        if s < t - 1.0 {
            lost.push(d.task.to_string());
        }
        table.push(format!("{} {t:.2}/{s:.2}", d.task));
    }
    let secs = start.elapsed().as_secs_f64();
    let summary = format!("seed {}, teacher/student {}, {secs:.0} s", config.seed, table.join(" "));
    let line = if !lost.is_empty() {
        Err(format!(
            "student more than 1 point below teacher on {}; {summary}",
            lost.join(", ")
        ))
    } else if wins < 2 {
        Err(format!("student beats its teacher on {wins} task(s); {summary}"))
    } else if secs >= 600.0 {
        Err(format!("runtime over 10 minutes; {summary}"))
    } else {
        Ok(format!("{wins} wins; {summary}"))
    };
    Ok(Distilled { student, line })
}

fn random_line(rng: &mut impl Rng, alphabet: &[char]) -> String {
    let n = rng.gen_range(1..=30);
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.1) {
                char::from_u32(rng.gen_range(0x4E00..0x9FA5)).unwrap()
            } else {
                alphabet[rng.gen_range(0..alphabet.len())]
            }
        })
        .collect()
}

fn violations(s: &AnnotatedSentence) -> Vec<String> {
    let mut out = Vec::new();
    if let Err(e) = s.validate() {
        out.push(e.to_string());
    }
    let n = s.num_chars();
    let Some(words) = &s.words else {
        return vec!["no segmentation".into()];
    };
    if !is_partition(words, n) {
        out.push("words do not partition the text".into());
    }
    let m = words.len();
    match &s.dep {
        Some(tree) if tree.heads.len() == m => {
            if tree.validate().is_err() || !tree.is_projective() || tree.heads.iter().all(|&h| h != 0) {
                out.push(format!("invalid tree {:?}", tree.heads));
            }
        }
        _ => out.push("missing or misaligned tree".into()),
    }
    match &s.sdp {
        Some(graph) => {
            for e in &graph.edges {
                if !(e.prob > 0.0 && e.prob <= 1.0) {
                    out.push(format!("edge probability {}", e.prob));
                }
            }
            for d in 1..=m {
                if !graph.edges.iter().any(|e| e.dependent == d) {
                    out.push(format!("word {d} has no semantic head"));
                }
            }
        }
        None => out.push("missing semantic graph".into()),
    }
    match &s.entities {
        Some(entities) => {
            let tags = entities_to_bio(n, entities);
            if !is_well_formed_bio(&tags) {
                out.push(format!("ill-formed BIO {tags:?}"));
            }
        }
        None => out.push("missing entities".into()),
    }
    if s.pos.as_ref().map(Vec::len) != Some(m) {
        out.push("missing or misaligned tags".into());
    }
    if s.srl.is_none() {
        out.push("missing roles".into());
    }
    out
}

fn structural_invariants(trained: &MultiTaskModel) -> Outcome {
    let (untrained, corpus) = toy_model(8);
    let alphabet: Vec<char> = {
        let mut cs: Vec<char> = corpus.iter().flat_map(|s| s.text.chars()).collect();
        cs.sort();
        cs.dedup();
        cs
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let lines: Vec<String> = (0..1000).map(|_| random_line(&mut rng, &alphabet)).collect();
    let mut total = 0;
    for (name, model, chunk) in [
        ("trained", trained, &lines[..500]),
        ("untrained", &untrained, &lines[500..]),
    ] {
        let sentences = annotate(model, &chunk.join("\n")).map_err(|e| format!("{name}: {e}"))?;
        ensure(sentences.len() == chunk.len(), || {
            format!("{name}: {} outputs", sentences.len())
        })?;
        for s in &sentences {
            let v = violations(s);
            ensure(v.is_empty(), || {
                format!("{name} model on {:?}: {}", s.text, v.join("; "))
            })?;
            total += 1;
        }
    }
    Ok(format!("{total} annotations, 0 violations"))
}

fn determinism(root: &Path) -> Outcome {
    let text = "张伟在北京读书。\n李娜明天去上海\n学生";
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let dir = root.join(run);
        let path = write_toy(&dir).map_err(|e| e.to_string())?;
        let mut config = PipelineConfig::load(&path).map_err(|e| e.to_string())?;
        config.training.epochs = 2;
        let out = train(&config, Mode::Joint).map_err(|e| e.to_string())?;
        let mut files = Vec::new();
        let mut stack = vec![out.dir.clone()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
                let p = entry.map_err(|e| e.to_string())?.path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(&out.dir).unwrap().to_path_buf();
                    files.push((rel, std::fs::read(&p).map_err(|e| e.to_string())?));
                }
            }
        }
        files.sort();
        let loaded = miniltp::pipeline::load_model(&out.dir).map_err(|e| e.to_string())?;
        let annotated = annotate(&loaded, text).map_err(|e| e.to_string())?;
        let json = render_annotations(&annotated, OutputFormat::Json).map_err(|e| e.to_string())?;
        let conllu = render_annotations(&annotated, OutputFormat::Conllu).map_err(|e| e.to_string())?;
        runs.push((files, json, conllu));
    }
    let (a, b) = (&runs[0], &runs[1]);
    ensure(a.0.len() == b.0.len(), || "checkpoints hold different files".into())?;
    for ((pa, da), (pb, db)) in a.0.iter().zip(&b.0) {
        ensure(pa == pb && da == db, || {
            format!("{} differs between runs", pa.display())
        })?;
    }
    ensure(a.1 == b.1 && a.2 == b.2, || {
        "annotation bytes differ between runs".into()
    })?;
    let bytes: usize = a.0.iter().map(|f| f.1.len()).sum();
    Ok(format!(
        "{} checkpoint files ({bytes} bytes) and annotations identical",
        a.0.len()
    ))
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let mut lines: Vec<(usize, &str, Outcome)> = vec![
        (1, "Eisner oracle equivalence", eisner_oracle()),
        (2, "CRF correctness", crf_oracle()),
        (3, "gradient integrity", gradient_integrity()),
        (4, "sampling law", sampling_law()),
        (5, "teacher annealing contract", annealing_contract()),
    ];
    match distillation_claim(&scratch.path().join("toy")) {
        Ok(d) => {
            lines.push((6, "desk-scale distillation", d.line));
            lines.push((7, "structural invariants", structural_invariants(&d.student)));
        }
        Err(e) => {
            lines.push((6, "desk-scale distillation", Err(e.clone())));
            lines.push((7, "structural invariants", Err(format!("no trained model: {e}"))));
        }
    }
    lines.push((8, "determinism", determinism(&scratch.path().join("det"))));
    let mut failed = 0;
    for (n, name, outcome) in &lines {
        match outcome {
            Ok(detail) => println!("criterion {n} {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL ({why})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
