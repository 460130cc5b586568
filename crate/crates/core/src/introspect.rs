//! Attention export for a single molecule string, with a bracket-closure
//! diagnostic and static SVG heatmaps.
//!
//! ```
//! use chemberta_core::introspect::{export_attention, HeadSelector};
//! use chemberta_core::model::{Model, ModelConfig};
//! use chemberta_core::tokenize::Tokenizer;
//!
//! let tok = Tokenizer::train_regex(["C(C)(C)C", "CCO"], 100).unwrap();
//! let model = Model::new(ModelConfig::tiny(tok.vocab().len()), 0).unwrap();
//! let doc = export_attention(&model, &tok, "C(C)(C)C", &HeadSelector::all()).unwrap();
//! assert_eq!(doc.tokens.len(), 10);
//! assert_eq!(doc.attention.len(), 4);
//! ```

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::model::{Batch, Model, ModelError};
use crate::tokenize::{encode_for_model, TokenizeError, Tokenizer, BOS_TOKEN, EOS_TOKEN};

#[derive(Debug, thiserror::Error)]
pub enum IntrospectError {
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("token spans leave a gap or overlap at byte {0}")]
    TokenizationGap(usize),
    #[error("{tokens} tokens exceed the model's {limit} positions")]
    TooLong { tokens: usize, limit: usize },
    #[error("tokenizer has {tokenizer} entries but the model expects {model}")]
    VocabMismatch { tokenizer: usize, model: usize },
    #[error("{what} {index} out of range (model has {count})")]
    Selector {
        what: &'static str,
        index: usize,
        count: usize,
    },
}

/// Which layers and heads to export. `None` keeps all of them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSelector {
    pub layers: Option<Vec<usize>>,
    pub heads: Option<Vec<usize>>,
}

impl HeadSelector {
    pub fn all() -> HeadSelector {
        HeadSelector::default()
    }

    fn check(&self, n_layers: usize, n_heads: usize) -> Result<(), IntrospectError> {
        let lists = [("layer", &self.layers, n_layers), ("head", &self.heads, n_heads)];
        for (what, list, count) in lists {
            if let Some(&index) = list.iter().flatten().find(|&&i| i >= count) {
                return Err(IntrospectError::Selector { what, index, count });
            }
        }
        Ok(())
    }

    pub fn keeps(&self, layer: usize, head: usize) -> bool {
        self.layers.as_ref().is_none_or(|l| l.contains(&layer)) && self.heads.as_ref().is_none_or(|h| h.contains(&head))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadMatrix {
    pub layer: usize,
    pub head: usize,
    pub matrix: Vec<Vec<f64>>,
}

/// One molecule's tokens, their byte spans in `input`, and the selected
/// attention matrices. Tokens include the `<s>` and `</s>` markers, which
/// carry empty spans at the start and end of the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionExport {
    pub input: String,
    pub tokens: Vec<String>,
    pub spans: Vec<[usize; 2]>,
    pub attention: Vec<HeadMatrix>,
}

fn check_tiling(spans: &[Range<usize>], len: usize) -> Result<(), IntrospectError> {
    let mut at = 0;
    for r in spans {
        if r.start != at || r.end < r.start {
            return Err(IntrospectError::TokenizationGap(at));
        }
        at = r.end;
    }
    if at != len {
        return Err(IntrospectError::TokenizationGap(at));
    }
    Ok(())
}

pub fn export_attention(
    model: &Model,
    tokenizer: &Tokenizer,
    input: &str,
    selector: &HeadSelector,
) -> Result<AttentionExport, IntrospectError> {
    let cfg = &model.config;
    if tokenizer.vocab().len() != cfg.vocab_size {
        return Err(IntrospectError::VocabMismatch {
            tokenizer: tokenizer.vocab().len(),
            model: cfg.vocab_size,
        });
    }
    selector.check(cfg.n_layers, cfg.n_heads)?;
    let pieces = tokenizer.tokenize_spans(input)?;
    let ranges: Vec<Range<usize>> = pieces.iter().map(|(_, r)| r.clone()).collect();
    check_tiling(&ranges, input.len())?;
    let len = pieces.len() + 2;
    if len > cfg.max_positions {
        return Err(IntrospectError::TooLong {
            tokens: len,
            limit: cfg.max_positions,
        });
    }
    let toks: Vec<&str> = pieces.iter().map(|(t, _)| t.as_str()).collect();
    let seq = encode_for_model(&toks, tokenizer.vocab(), len);
    let batch = Batch::from_sequences(&[&seq])?;
    let attention = model
        .attention(&batch)?
        .into_iter()
        .filter(|r| selector.keeps(r.layer, r.head))
        .map(|r| HeadMatrix {
            layer: r.layer,
            head: r.head,
            matrix: r.matrix,
        })
        .collect();

    let mut tokens = vec![BOS_TOKEN.to_owned()];
    let mut spans = vec![[0, 0]];
    for (t, r) in pieces {
        tokens.push(t);
        spans.push([r.start, r.end]);
    }
    tokens.push(EOS_TOKEN.to_owned());
    spans.push([input.len(), input.len()]);
    Ok(AttentionExport {
        input: input.to_owned(),
        tokens,
        spans,
        attention,
    })
}

/// Index pairs `(close, open)` of matching parentheses in a token list.
/// Unbalanced parentheses are skipped.
pub fn matching_parens<S: AsRef<str>>(tokens: &[S]) -> Vec<(usize, usize)> {
    let mut stack = Vec::new();
    let mut pairs = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        match t.as_ref() {
            "(" => stack.push(i),
            ")" => {
                if let Some(open) = stack.pop() {
                    pairs.push((i, open));
                }
            }
            _ => {}
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketScore {
    pub layer: usize,
    pub head: usize,
    /// Mean attention from each `)` to its matching `(`.
    pub mean_mass: f64,
    pub pairs: usize,
}

/// Per exported head, how strongly closing parentheses attend to their
/// opening partner. Empty when the input has no matched pair.
pub fn bracket_diagnostic(doc: &AttentionExport) -> Vec<BracketScore> {
    let pairs = matching_parens(&doc.tokens);
    if pairs.is_empty() {
        return Vec::new();
    }
    doc.attention
        .iter()
        .map(|h| BracketScore {
            layer: h.layer,
            head: h.head,
            mean_mass: pairs.iter().map(|&(c, o)| h.matrix[c][o]).sum::<f64>() / pairs.len() as f64,
            pairs: pairs.len(),
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone SVG of one head: rows are queries, columns are keys, darker
/// cells carry more weight. Tokens label both axes.
pub fn heatmap_svg(tokens: &[String], head: &HeadMatrix) -> String {
    const CELL: usize = 24;
    let n = tokens.len();
    let margin = 12 + 8 * tokens.iter().map(|t| t.chars().count()).max().unwrap_or(1);
    let side = margin + n * CELL + 8;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{h}" font-family="monospace" font-size="12">"#,
        h = side + 20
    );
    let _ = writeln!(out, "<title>layer {} head {}</title>", head.layer, head.head);
    let _ = writeln!(
        out,
        r#"<text x="{margin}" y="{y}">layer {} head {}</text>"#,
        head.layer,
        head.head,
        y = side + 14
    );
    for (i, row) in head.matrix.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            let shade = (255.0 * (1.0 - w.clamp(0.0, 1.0))).round() as u8;
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)"><title>{:.4}</title></rect>"#,
                margin + j * CELL,
                margin + i * CELL,
                w
            );
        }
    }
    for (i, t) in tokens.iter().enumerate() {
        let t = escape(t);
        let mid = margin + i * CELL + CELL / 2;
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{t}</text>"#, margin - 4, mid + 4);
        let _ = writeln!(
            out,
            r#"<text transform="translate({},{}) rotate(-90)">{t}</text>"#,
            mid + 4,
            margin - 4
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn setup() -> (Model, Tokenizer) {
        let tok = Tokenizer::train_regex(["C(C)(C)C", "CC(=O)O", "c1ccccc1Cl"], 100).unwrap();
        let model = Model::new(ModelConfig::tiny(tok.vocab().len()), 3).unwrap();
        (model, tok)
    }

    #[test]
    fn export_shapes_and_spans() {
        let (model, tok) = setup();
        let doc = export_attention(&model, &tok, "CC(=O)O", &HeadSelector::all()).unwrap();
        assert_eq!(doc.tokens, ["<s>", "C", "C", "(", "=", "O", ")", "O", "</s>"]);
        assert_eq!(doc.spans.first(), Some(&[0, 0]));
        assert_eq!(doc.spans.last(), Some(&[7, 7]));
        let joined: String = doc.spans.iter().map(|&[a, b]| &doc.input[a..b]).collect();
        assert_eq!(joined, doc.input);
        assert_eq!(doc.attention.len(), 4);
        for h in &doc.attention {
            assert_eq!(h.matrix.len(), doc.tokens.len());
            for row in &h.matrix {
                assert_eq!(row.len(), doc.tokens.len());
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn selector_filters_and_validates() {
        let (model, tok) = setup();
        let sel = HeadSelector {
            layers: Some(vec![1]),
            heads: None,
        };
        let doc = export_attention(&model, &tok, "CCO", &sel).unwrap();
        assert!(doc.attention.iter().all(|h| h.layer == 1));
        assert_eq!(doc.attention.len(), 2);
        let bad = HeadSelector {
            layers: None,
            heads: Some(vec![2]),
        };
        assert!(matches!(
            export_attention(&model, &tok, "CCO", &bad),
            Err(IntrospectError::Selector { what: "head", index: 2, count: 2 })
        ));
    }

    #[test]
    fn rejects_mismatched_vocab_and_long_input() {
        let (_, tok) = setup();
        let other = Model::new(ModelConfig::tiny(tok.vocab().len() + 1), 0).unwrap();
        assert!(matches!(
            export_attention(&other, &tok, "CC", &HeadSelector::all()),
            Err(IntrospectError::VocabMismatch { .. })
        ));
        let (model, tok) = setup();
        assert!(matches!(
            export_attention(&model, &tok, &"C".repeat(15), &HeadSelector::all()),
            Err(IntrospectError::TooLong { tokens: 17, limit: 16 })
        ));
    }

    // Depth-labelling oracle: a ")" closes the nearest earlier "(" at the same depth.
    fn oracle_pairs(tokens: &[&str]) -> Vec<(usize, usize)> {
        let mut depth = 0i32;
        let mut depths = Vec::new();
        for t in tokens {
            if *t == ")" {
                depth -= 1;
            }
            depths.push(depth);
            if *t == "(" {
                depth += 1;
            }
        }
        let mut out = Vec::new();
        for (c, t) in tokens.iter().enumerate() {
            if *t == ")" {
                let open = (0..c).rev().find(|&o| tokens[o] == "(" && depths[o] == depths[c]).unwrap();
                out.push((c, open));
            }
        }
        out
    }

    #[test]
    fn matching_parens_agrees_with_depth_oracle() {
        for s in ["C(C)(C)C", "CC(C(C)(O)N)C(=O)O", "C(C(C(C)))"] {
            let toks: Vec<&str> = s.split("").filter(|t| !t.is_empty()).collect();
            let mut got = matching_parens(&toks);
            got.sort();
            let mut want = oracle_pairs(&toks);
            want.sort();
            assert_eq!(got, want, "{s}");
        }
    }

    #[test]
    fn bracket_diagnostic_reads_matching_cells() {
        let (model, tok) = setup();
        let doc = export_attention(&model, &tok, "C(C)(C)C", &HeadSelector::all()).unwrap();
        let scores = bracket_diagnostic(&doc);
        assert_eq!(scores.len(), 4);
        // tokens: <s> C ( C ) ( C ) C </s>
        for (s, h) in scores.iter().zip(&doc.attention) {
            assert_eq!(s.pairs, 2);
            let want = (h.matrix[4][2] + h.matrix[7][5]) / 2.0;
            assert_eq!(s.mean_mass, want);
        }
        let plain = export_attention(&model, &tok, "CC", &HeadSelector::all()).unwrap();
        assert!(bracket_diagnostic(&plain).is_empty());
    }

    #[test]
    fn heatmap_has_cells_and_escaped_labels() {
        let (model, tok) = setup();
        let doc = export_attention(&model, &tok, "CCO", &HeadSelector::all()).unwrap();
        let svg = heatmap_svg(&doc.tokens, &doc.attention[0]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 25);
        assert!(svg.contains("&lt;s&gt;"));
        assert!(!svg.contains("<s>"));
    }

    #[test]
    fn tiling_check_finds_gaps() {
        assert!(check_tiling(&[0..1, 1..3], 3).is_ok());
        assert!(matches!(check_tiling(&[0..1, 2..3], 3), Err(IntrospectError::TokenizationGap(1))));
        assert!(matches!(check_tiling(&[0..1], 3), Err(IntrospectError::TokenizationGap(1))));
    }
}
