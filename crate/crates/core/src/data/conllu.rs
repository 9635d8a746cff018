//! Ten-column dependency format carrying segmentation, tags, trees and
//! semantic graphs.

use std::fmt::Write;
use std::path::Path;

use crate::data::{blocks, forms, parse_error, plain_form};
use crate::error::{Error, Result};
use crate::sentence::{AnnotatedSentence, DependencyGraph, DependencyTree, SdpEdge, Span};

const EMPTY: &str = "_";

struct Row<'a> {
    line: usize,
    form: &'a str,
    upos: &'a str,
    head: &'a str,
    deprel: &'a str,
    deps: &'a str,
}

/// `Some(values)` when every row fills the column, `None` when every row
/// leaves it empty.
fn column<'a>(
    rows: &[Row<'a>],
    get: impl Fn(&Row<'a>) -> &'a str,
    name: &str,
    path: &Path,
) -> Result<Option<Vec<&'a str>>> {
    let filled = rows.iter().filter(|r| get(r) != EMPTY).count();
    if filled == 0 {
        return Ok(None);
    }
    if let Some(r) = rows.iter().find(|r| get(r) == EMPTY) {
        return Err(parse_error(
            path,
            r.line,
            format!("{name} is empty here but filled elsewhere in the sentence"),
        ));
    }
    Ok(Some(rows.iter().map(get).collect()))
}

fn parse_head(value: &str, n: usize, line: usize, path: &Path) -> Result<usize> {
    let h: usize = value
        .parse()
        .map_err(|_| parse_error(path, line, format!("head {value:?} is not a number")))?;
    if h > n {
        return Err(parse_error(
            path,
            line,
            format!("head {h} outside sentence of {n} words"),
        ));
    }
    Ok(h)
}

pub fn parse(text: &str, path: &Path) -> Result<Vec<AnnotatedSentence>> {
    let mut out = Vec::new();
    for (first, lines) in blocks(text) {
        let mut comments = Vec::new();
        let mut rows = Vec::new();
        for (k, line) in lines.iter().enumerate() {
            let no = first + k;
            if let Some(c) = line.strip_prefix('#') {
                if !rows.is_empty() {
                    return Err(parse_error(path, no, "comment inside a sentence"));
                }
                comments.push(c.strip_prefix(' ').unwrap_or(c).to_string());
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 10 {
                return Err(parse_error(
                    path,
                    no,
                    format!("expected 10 tab-separated columns, found {}", cols.len()),
                ));
            }
            let expected = rows.len() + 1;
            if cols[0] != expected.to_string() {
                return Err(parse_error(
                    path,
                    no,
                    format!("expected word id {expected}, found {:?}", cols[0]),
                ));
            }
            if !plain_form(cols[1]) || cols[1] == EMPTY {
                return Err(parse_error(path, no, format!("invalid word form {:?}", cols[1])));
            }
            rows.push(Row {
                line: no,
                form: cols[1],
                upos: cols[3],
                head: cols[6],
                deprel: cols[7],
                deps: cols[8],
            });
        }
        if rows.is_empty() {
            return Err(parse_error(path, first, "sentence has comments but no words"));
        }
        let n = rows.len();
        let mut s = AnnotatedSentence::new(rows.iter().map(|r| r.form).collect::<String>());
        s.comments = comments;
        let mut pos = 0;
        s.words = Some(
            rows.iter()
                .map(|r| {
                    let len = r.form.chars().count();
                    pos += len;
                    Span::new(pos - len, pos)
                })
                .collect(),
        );
        s.pos = column(&rows, |r| r.upos, "UPOS", path)?.map(|v| v.into_iter().map(String::from).collect());

        let heads = column(&rows, |r| r.head, "HEAD", path)?;
        let rels = column(&rows, |r| r.deprel, "DEPREL", path)?;
        match (heads, rels) {
            (Some(h), Some(l)) => {
                let heads = h
                    .iter()
                    .zip(&rows)
                    .map(|(v, r)| parse_head(v, n, r.line, path))
                    .collect::<Result<Vec<_>>>()?;
                let tree = DependencyTree {
                    heads,
                    labels: l.into_iter().map(String::from).collect(),
                };
                tree.validate().map_err(|e| parse_error(path, first, e.to_string()))?;
                s.dep = Some(tree);
            }
            (None, None) => {}
            _ => return Err(parse_error(path, first, "HEAD and DEPREL must be given together")),
        }

        if rows.iter().any(|r| r.deps != EMPTY) {
            let mut graph = DependencyGraph::default();
            for (i, r) in rows.iter().enumerate() {
                if r.deps == EMPTY {
                    continue;
                }
                for item in r.deps.split('|') {
                    let (h, rel) = item.split_once(':').filter(|(_, rel)| !rel.is_empty()).ok_or_else(|| {
                        parse_error(path, r.line, format!("DEPS entry {item:?} is not head:relation"))
                    })?;
                    graph.edges.push(SdpEdge {
                        head: parse_head(h, n, r.line, path)?,
                        dependent: i + 1,
                        relation: rel.to_string(),
                        prob: 1.0,
                    });
                }
                let mine = &mut graph.edges;
                let start = mine.iter().position(|e| e.dependent == i + 1).unwrap_or(mine.len());
                mine[start..].sort_by_key(|e| e.head);
            }
            graph.validate(n).map_err(|e| parse_error(path, first, e.to_string()))?;
            s.sdp = Some(graph);
        }
        out.push(s);
    }
    Ok(out)
}

pub fn render(sentences: &[AnnotatedSentence]) -> Result<String> {
    let mut out = String::new();
    for s in sentences {
        let forms = forms(s)?;
        if let Some(bad) = forms.iter().find(|f| !plain_form(f) || *f == EMPTY) {
            return Err(Error::Data(format!("word {bad:?} cannot be written as a column")));
        }
        for c in &s.comments {
            writeln!(out, "# {c}").unwrap();
        }
        for (i, form) in forms.iter().enumerate() {
            let upos = s.pos.as_ref().map_or(EMPTY, |p| p[i].as_str());
            let (head, rel) = match &s.dep {
                Some(t) => (t.heads[i].to_string(), t.labels[i].as_str()),
                None => (EMPTY.to_string(), EMPTY),
            };
            let deps = s
                .sdp
                .as_ref()
                .map(|g| {
                    g.edges
                        .iter()
                        .filter(|e| e.dependent == i + 1)
                        .map(|e| format!("{}:{}", e.head, e.relation))
                        .collect::<Vec<_>>()
                        .join("|")
                })
                .filter(|d| !d.is_empty())
                .unwrap_or_else(|| EMPTY.to_string());
            writeln!(out, "{}\t{form}\t_\t{upos}\t_\t_\t{head}\t{rel}\t{deps}\t_", i + 1).unwrap();
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
        Path::new("test.conllu")
    }

    #[test]
    fn heads_and_deps_are_mapped() {
        let text = "# id = 1\n1\t我\t_\tr\t_\t_\t2\tSBV\t2:Agt\t_\n2\t爱\t_\tv\t_\t_\t0\tHED\t0:Root|1:eSucc\t_\n";
        let s = &parse(text, p()).unwrap()[0];
        assert_eq!(s.text, "我爱");
        assert_eq!(s.comments, vec!["id = 1"]);
        assert_eq!(s.dep.as_ref().unwrap().heads, vec![2, 0]);
        let edges: Vec<_> = s
            .sdp
            .as_ref()
            .unwrap()
            .edges
            .iter()
            .map(|e| (e.head, e.dependent, e.relation.as_str()))
            .collect();
        assert_eq!(edges, vec![(2, 1, "Agt"), (0, 2, "Root"), (1, 2, "eSucc")]);
        assert_eq!(render(&parse(text, p()).unwrap()).unwrap(), format!("{text}\n"));
    }

    #[test]
    fn segmentation_only_uses_placeholders() {
        let mut s = AnnotatedSentence::new("我爱你");
        s.words = Some(vec![Span::new(0, 1), Span::new(1, 2), Span::new(2, 3)]);
        let text = render(&[s.clone()]).unwrap();
        assert!(text.starts_with("1\t我\t_\t_\t_\t_\t_\t_\t_\t_\n"));
        assert_eq!(parse(&text, p()).unwrap(), vec![s]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "1\t我\t_\tr\t_\t_\t2\tSBV\t_\t_\n2\t爱\t_\tv\t_\t_\tx\tHED\t_\t_\n";
        match parse(text, p()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
        let text = "\n\n1\t我\t_\n";
        assert!(matches!(parse(text, p()).unwrap_err(), Error::Parse { line: 3, .. }));
        let text = "1\t我\t_\tr\t_\t_\t_\t_\t1:A\t_\n";
        assert!(matches!(parse(text, p()).unwrap_err(), Error::Parse { .. }));
    }

    fn sentence_strategy() -> impl Strategy<Value = AnnotatedSentence> {
        (1usize..7)
            .prop_flat_map(|n| {
                (
                    proptest::collection::vec(
                        proptest::collection::vec(proptest::sample::select(vec!['甲', '乙', '丙', 'a']), 1..3),
                        n,
                    ),
                    proptest::collection::vec(proptest::sample::select(vec!["n", "v", "r"]), n),
                    proptest::collection::vec(0..n, n),
                    proptest::collection::vec(proptest::collection::btree_set(0..=n, 1..3), n),
                    any::<bool>(),
                )
            })
            .prop_map(|(chars, tags, parents, sdp_heads, with_tags)| {
                let n = chars.len();
                let mut s = AnnotatedSentence::new(chars.iter().flatten().collect::<String>());
                let mut pos = 0;
                s.words = Some(
                    chars
                        .iter()
                        .map(|c| {
                            pos += c.len();
                            Span::new(pos - c.len(), pos)
                        })
                        .collect(),
                );
                if with_tags {
                    s.pos = Some(tags.iter().map(|t| t.to_string()).collect());
                }
                // word d attaches to an earlier word or the root: always a tree
                let heads = (0..n).map(|d| if d == 0 { 0 } else { parents[d] % (d + 1) }).collect();
                s.dep = Some(DependencyTree {
                    heads,
                    labels: vec!["R".into(); n],
                });
                let mut edges = Vec::new();
                for (d, hs) in sdp_heads.iter().enumerate() {
                    for &h in hs {
                        if h != d + 1 {
                            edges.push(SdpEdge {
                                head: h,
                                dependent: d + 1,
                                relation: format!("S{h}"),
                                prob: 1.0,
                            });
                        }
                    }
                }
                s.sdp = (!edges.is_empty()).then_some(DependencyGraph { edges });
                s
            })
    }

    proptest! {
        #[test]
        fn roundtrip(sentences in proptest::collection::vec(sentence_strategy(), 0..4)) {
            let text = render(&sentences).unwrap();
            let back = parse(&text, p()).unwrap();
            prop_assert_eq!(&back, &sentences);
            prop_assert_eq!(render(&back).unwrap(), text);
        }
    }
}
