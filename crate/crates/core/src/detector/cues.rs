use serde::{Deserialize, Serialize};

use crate::stage::SignalKind;
use crate::text::fold_chars;

use super::lexicon::CueLexicon;

/// One lexicon match in an utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueHit {
    pub signal: SignalKind,
    pub pattern: String,
    /// Character offsets into the utterance, end exclusive.
    pub span: (usize, usize),
    pub weight: f64,
}

/// All lexicon matches in `utterance`.
///
/// Within each signal kind, matches are chosen leftmost-longest and never
/// overlap. The result is ordered by span start, then by kind.
pub fn detect_cues(utterance: &str, lexicon: &CueLexicon) -> Vec<CueHit> {
    let folded = fold_chars(utterance);
    let mut out = Vec::new();
    for kind in SignalKind::ALL {
        let mut found: Vec<CueHit> = lexicon
            .patterns(kind)
            .iter()
            .flat_map(|p| {
                p.find_all(&folded).into_iter().map(move |span| CueHit {
                    signal: kind,
                    pattern: p.text.clone(),
                    span,
                    weight: p.weight,
                })
            })
            .collect();
        found.sort_by(|a, b| {
            a.span
                .0
                .cmp(&b.span.0)
                .then((b.span.1 - b.span.0).cmp(&(a.span.1 - a.span.0)))
                .then(b.weight.total_cmp(&a.weight))
        });
        let mut last_end = 0;
        for hit in found {
            if hit.span.0 >= last_end {
                last_end = hit.span.1;
                out.push(hit);
            }
        }
    }
    out.sort_by_key(|h| (h.span.0, h.signal));
    out
}
