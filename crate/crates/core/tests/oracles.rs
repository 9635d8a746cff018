//! Decoders and tensor kernels against brute-force references.

mod common;

use common::*;
use miniltp::decode::crf::{log_likelihood, log_partition, sequence_score, viterbi};
use miniltp::decode::{assign_labels, eisner, sdp_decode, tree_score, ArcScoreMatrix, LabeledArcScores};
use miniltp::task::LabelSet;
use miniltp::tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn projective_tree_counts() {
    // Projective trees over n words with any number of root children:
    // binomial(3n, n) / (2n + 1).
    let expected = [1, 1, 3, 12, 55, 273, 1428, 7752, 43263];
    for (n, &count) in expected.iter().enumerate().skip(1) {
        assert_eq!(projective_trees(n).len(), count, "n = {n}");
    }
}

#[test]
fn eisner_single_root_is_best_single_root_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=6 {
        let trees: Vec<_> = projective_trees(n)
            .into_iter()
            .filter(|t| t.iter().filter(|&&h| h == 0).count() == 1)
            .collect();
        for _ in 0..40 {
            let scores = random_tensor(&[n + 1, n + 1], 3.0, &mut rng);
            let best = trees
                .iter()
                .map(|t| tree_total(&scores, t))
                .fold(f64::NEG_INFINITY, f64::max);
            let m = ArcScoreMatrix::new(scores).unwrap();
            let heads = eisner(&m, true).unwrap();
            assert_eq!(heads.iter().filter(|&&h| h == 0).count(), 1);
            assert_eq!(tree_score(&m, &heads), best);
        }
    }
}

#[test]
fn eisner_prefers_gold_tree_under_large_margin() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in 1..=6 {
        let trees = projective_trees(n);
        for _ in 0..10 {
            let gold = &trees[rng.gen_range(0..trees.len())];
            let mut scores = random_tensor(&[n + 1, n + 1], 1.0, &mut rng);
            for (i, &h) in gold.iter().enumerate() {
                scores.set(h, i + 1, 100.0);
            }
            let heads = eisner(&ArcScoreMatrix::new(scores).unwrap(), false).unwrap();
            assert_eq!(&heads, gold);
        }
    }
}

#[test]
fn crf_marginals_and_likelihoods() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let n = rng.gen_range(1..=5);
        let l = rng.gen_range(1..=4);
        let emissions = random_tensor(&[n, l], 2.0, &mut rng);
        let crf = random_crf(l, &mut rng);
        let log_z = log_partition(&emissions, &crf).unwrap();
        for seq in sequences(n, l) {
            let direct = chain_score(&emissions, &crf, &seq);
            assert!((sequence_score(&emissions, &crf, &seq) - direct).abs() < 1e-12);
            let ll = log_likelihood(&emissions, &crf, &seq).unwrap();
            assert!((ll - (direct - log_z)).abs() < 1e-10);
        }
    }
}

#[test]
fn viterbi_breaks_ties_lexicographically() {
    let emissions = Tensor::zeros(&[3, 3]);
    let crf = miniltp::decode::CrfParams::zeros(3);
    assert_eq!(viterbi(&emissions, &crf).unwrap(), vec![0, 0, 0]);
}

fn labels(names: &[&str]) -> LabelSet {
    LabelSet::new(names.iter().map(|s| s.to_string()).collect()).unwrap()
}

#[test]
fn sdp_decode_matches_set_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let inventory = labels(&["A0", "A1", "Poss"]);
    for _ in 0..200 {
        let n = rng.gen_range(1..=7);
        let probs = Tensor::from_fn(&[n + 1, n + 1], |_| rng.gen_range(0.0..1.0));
        let relations = LabeledArcScores::new(random_tensor(&[n + 1, n + 1, 3], 2.0, &mut rng)).unwrap();
        let graph = sdp_decode(&probs, &relations, &inventory).unwrap();
        graph.validate(n).unwrap();
        let mut expected = Vec::new();
        for d in 1..=n {
            let mut heads: Vec<usize> = (0..=n).filter(|&h| h != d && probs.at(h, d) > 0.5).collect();
            if heads.is_empty() {
                let top = (0..=n)
                    .filter(|&h| h != d)
                    .map(|h| probs.at(h, d))
                    .fold(f64::MIN, f64::max);
                heads.push((0..=n).find(|&h| h != d && probs.at(h, d) == top).unwrap());
            }
            expected.extend(heads.into_iter().map(|h| (h, d)));
        }
        let got: Vec<_> = graph.edges.iter().map(|e| (e.head, e.dependent)).collect();
        assert_eq!(got, expected);
        for e in &graph.edges {
            let best = (0..3)
                .max_by(|&a, &b| {
                    relations
                        .score(e.head, e.dependent, a)
                        .partial_cmp(&relations.score(e.head, e.dependent, b))
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .unwrap();
            assert_eq!(e.relation, inventory.label(best));
            assert_eq!(e.prob, probs.at(e.head, e.dependent));
        }
    }
}

#[test]
fn raising_a_probability_never_removes_its_edge() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let inventory = labels(&["R"]);
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let mut probs = Tensor::from_fn(&[n + 1, n + 1], |_| rng.gen_range(0.0..1.0));
        let relations = LabeledArcScores::new(Tensor::zeros(&[n + 1, n + 1, 1])).unwrap();
        let has = |p: &Tensor, h: usize, d: usize| {
            sdp_decode(p, &relations, &inventory)
                .unwrap()
                .edges
                .iter()
                .any(|e| e.head == h && e.dependent == d)
        };
        let d = rng.gen_range(1..=n);
        let h = (d + rng.gen_range(1..=n)) % (n + 1);
        if has(&probs, h, d) {
            let v = probs.at(h, d);
            probs.set(h, d, (v + rng.gen_range(0.0..1.0)).min(1.0));
            assert!(has(&probs, h, d));
        }
    }
}

#[test]
fn assign_labels_takes_the_best_relation_per_arc() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let inventory = labels(&["SBV", "VOB", "HED", "WP"]);
    for _ in 0..100 {
        let n = rng.gen_range(1..=5);
        let trees = projective_trees(n);
        let heads = &trees[rng.gen_range(0..trees.len())];
        let relations = LabeledArcScores::new(random_tensor(&[n + 1, n + 1, 4], 1.0, &mut rng)).unwrap();
        let tree = assign_labels(heads, &relations, &inventory).unwrap();
        assert_eq!(&tree.heads, heads);
        for (i, &h) in heads.iter().enumerate() {
            let scores: Vec<f64> = (0..4).map(|k| relations.score(h, i + 1, k)).collect();
            let top = scores.iter().cloned().fold(f64::MIN, f64::max);
            let k = scores.iter().position(|&s| s == top).unwrap();
            assert_eq!(tree.labels[i], inventory.label(k));
        }
    }
}

fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a.at(i, t) * b.at(t, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_matches_triple_loop(n in 1usize..6, k in 1usize..6, m in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_tensor(&[n, k], 1.0, &mut rng);
        let b = random_tensor(&[k, m], 1.0, &mut rng);
        let fast = a.matmul(&b).unwrap();
        let slow = naive_matmul(&a, &b);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn eisner_output_is_a_projective_tree(n in 1usize..12, seed in any::<u64>(), single in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = ArcScoreMatrix::new(random_tensor(&[n + 1, n + 1], 5.0, &mut rng)).unwrap();
        let heads = eisner(&m, single).unwrap();
        let tree = miniltp::sentence::DependencyTree { labels: vec!["x".into(); n], heads: heads.clone() };
        prop_assert!(tree.validate().is_ok());
        prop_assert!(tree.is_projective());
        if single {
            prop_assert_eq!(heads.iter().filter(|&&h| h == 0).count(), 1);
        }
    }

    #[test]
    fn viterbi_beats_random_sequences(n in 1usize..10, l in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_tensor(&[n, l], 2.0, &mut rng);
        let crf = random_crf(l, &mut rng);
        let best = viterbi(&e, &crf).unwrap();
        let best_score = sequence_score(&e, &crf, &best);
        for _ in 0..20 {
            let seq: Vec<usize> = (0..n).map(|_| rng.gen_range(0..l)).collect();
            prop_assert!(sequence_score(&e, &crf, &seq) <= best_score + 1e-12);
        }
        prop_assert!(best_score <= log_partition(&e, &crf).unwrap() + 1e-12);
    }
}
