//! Word-per-line semantic role format with one column per predicate.

use std::fmt::Write;
use std::path::Path;

use crate::data::{blocks, forms, parse_error, plain_form};
use crate::decode::spans::{bio_to_entities, is_well_formed_bio};
use crate::error::{Error, Result};
use crate::model::PREDICATE_TAG;
use crate::sentence::{AnnotatedSentence, Argument, Frame, Span};

pub fn parse(text: &str, path: &Path) -> Result<Vec<AnnotatedSentence>> {
    let mut out = Vec::new();
    for (first, lines) in blocks(text) {
        let rows: Vec<Vec<&str>> = lines.iter().map(|l| l.split('\t').collect()).collect();
        let predicates: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.get(1) == Some(&"Y"))
            .map(|(i, _)| i)
            .collect();
        let width = 2 + predicates.len();
        for (k, r) in rows.iter().enumerate() {
            let no = first + k;
            if r.len() != width {
                return Err(parse_error(
                    path,
                    no,
                    format!(
                        "expected {width} columns for {} predicates, found {}",
                        predicates.len(),
                        r.len()
                    ),
                ));
            }
            if !plain_form(r[0]) {
                return Err(parse_error(path, no, format!("invalid word form {:?}", r[0])));
            }
            if r[1] != "Y" && r[1] != "_" {
                return Err(parse_error(
                    path,
                    no,
                    format!("predicate flag {:?} is not Y or _", r[1]),
                ));
            }
        }
        let mut s = AnnotatedSentence::new(rows.iter().map(|r| r[0]).collect::<String>());
        let mut pos = 0;
        s.words = Some(
            rows.iter()
                .map(|r| {
                    let len = r[0].chars().count();
                    pos += len;
                    Span::new(pos - len, pos)
                })
                .collect(),
        );
        let mut frames = Vec::with_capacity(predicates.len());
        for (c, &p) in predicates.iter().enumerate() {
            let tags: Vec<&str> = rows.iter().map(|r| r[2 + c]).collect();
            if !is_well_formed_bio(&tags) {
                return Err(parse_error(
                    path,
                    first,
                    format!("role column {} is not well-formed BIO", c + 1),
                ));
            }
            if tags[p] != PREDICATE_TAG || tags.iter().filter(|&&t| t.ends_with("-V")).count() != 1 {
                return Err(parse_error(
                    path,
                    first + p,
                    format!("role column {} must tag only its predicate {PREDICATE_TAG}", c + 1),
                ));
            }
            frames.push(Frame {
                predicate: p,
                arguments: bio_to_entities(&tags)
                    .into_iter()
                    .filter(|e| e.kind != "V")
                    .map(|e| Argument {
                        start: e.start,
                        end: e.end,
                        role: e.kind,
                    })
                    .collect(),
            });
        }
        s.srl = Some(frames);
        out.push(s);
    }
    Ok(out)
}

pub fn render(sentences: &[AnnotatedSentence]) -> Result<String> {
    let mut out = String::new();
    for s in sentences {
        let forms = forms(s)?;
        let mut frames = s.srl.clone().unwrap_or_default();
        frames.sort_by_key(|f| f.predicate);
        if frames.windows(2).any(|w| w[0].predicate == w[1].predicate) {
            return Err(Error::Data(format!(
                "sentence {:?} has two frames for one predicate",
                s.text
            )));
        }
        let columns: Vec<Vec<String>> = frames
            .iter()
            .map(|f| {
                let mut col = vec!["O".to_string(); forms.len()];
                for a in &f.arguments {
                    for (i, tag) in col.iter_mut().enumerate().take(a.end).skip(a.start) {
                        *tag = format!("{}-{}", if i == a.start { "B" } else { "I" }, a.role);
                    }
                }
                col[f.predicate] = PREDICATE_TAG.to_string();
                col
            })
            .collect();
        for (i, form) in forms.iter().enumerate() {
            let flag = if frames.iter().any(|f| f.predicate == i) {
                "Y"
            } else {
                "_"
            };
            write!(out, "{form}\t{flag}").unwrap();
            for col in &columns {
                write!(out, "\t{}", col[i]).unwrap();
            }
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("test.srl")
    }

    #[test]
    fn parses_frames() {
        let text = "我\t_\tB-A0\n爱\tY\tB-V\n北京\t_\tB-A1\n";
        let s = &parse(text, p()).unwrap()[0];
        assert_eq!(s.words.as_ref().unwrap().len(), 3);
        let f = &s.srl.as_ref().unwrap()[0];
        assert_eq!(f.predicate, 1);
        assert_eq!(f.arguments.len(), 2);
        assert_eq!(render(&parse(text, p()).unwrap()).unwrap(), format!("{text}\n"));
    }

    #[test]
    fn wrong_column_count_is_located() {
        assert!(matches!(
            parse("我\t_\n爱\tY\n", p()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse("我\t_\tB-A0\n爱\tY\tO\n", p()),
            Err(Error::Parse { .. })
        ));
    }

    fn sentence_strategy() -> impl Strategy<Value = AnnotatedSentence> {
        (1usize..6)
            .prop_flat_map(|n| {
                (
                    proptest::collection::vec(proptest::sample::select(vec!["我", "北京", "去", "a"]), n),
                    proptest::collection::btree_set(0..n, 0..=n.min(2)),
                    proptest::collection::vec(proptest::sample::select(vec!["O", "B-A0", "I-A0", "B-A1"]), n * 2),
                )
            })
            .prop_map(|(words, preds, raw)| {
                let n = words.len();
                let mut s = AnnotatedSentence::new(words.concat());
                let mut pos = 0;
                s.words = Some(
                    words
                        .iter()
                        .map(|w| {
                            let l = w.chars().count();
                            pos += l;
                            Span::new(pos - l, pos)
                        })
                        .collect(),
                );
                let frames = preds
                    .iter()
                    .enumerate()
                    .map(|(c, &p)| {
                        let mut tags: Vec<&str> = raw[(c % 2) * n..(c % 2 + 1) * n].to_vec();
                        tags[p] = "O";
                        Frame {
                            predicate: p,
                            arguments: bio_to_entities(&tags)
                                .into_iter()
                                .map(|e| Argument {
                                    start: e.start,
                                    end: e.end,
                                    role: e.kind,
                                })
                                .collect(),
                        }
                    })
                    .collect();
                s.srl = Some(frames);
                s
            })
    }

    proptest! {
        #[test]
        fn roundtrip(sentences in proptest::collection::vec(sentence_strategy(), 0..4)) {
            let text = render(&sentences).unwrap();
            let back = parse(&text, p()).unwrap();
            prop_assert_eq!(&back, &sentences);
        }
    }
}
