use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;

use crate::stage::SignalKind;
use crate::text::fold_chars;

/// The lexicon bundled with the crate.
pub const BUNDLED_LEXICON: &str = include_str!("../../assets/lexicon.toml");

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("reading lexicon: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing lexicon: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown signal section {0:?}")]
    UnknownSignal(String),
    #[error("signal {0} has no patterns")]
    MissingPatterns(SignalKind),
    #[error("the continue signal is the absence default and takes no patterns")]
    ContinueHasPatterns,
    #[error("crisis patterns go in the [crisis] section, not under signals")]
    CrisisUnderSignals,
    #[error("pattern {pattern:?} has weight {weight} outside (0, 1]")]
    BadWeight { pattern: String, weight: f64 },
    #[error("empty pattern")]
    EmptyPattern,
    #[error("crisis pattern {0:?} also appears under another signal")]
    CrisisOverlap(String),
}

/// One trigger pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    /// Pattern text as written (without the substring marker).
    pub text: String,
    /// Match only on word boundaries.
    pub word_boundary: bool,
    pub weight: f64,
    folded: Vec<char>,
}

impl Pattern {
    pub fn parse(raw: &str, weight: f64) -> Result<Self, LexiconError> {
        let (word_boundary, text) = match raw.strip_prefix('~') {
            Some(rest) => (false, rest),
            None => (true, raw),
        };
        let text = text.trim();
        if text.is_empty() {
            return Err(LexiconError::EmptyPattern);
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(LexiconError::BadWeight {
                pattern: raw.to_string(),
                weight,
            });
        }
        Ok(Pattern {
            text: text.to_string(),
            word_boundary,
            weight,
            folded: fold_chars(text),
        })
    }

    /// All match spans (char offsets, end exclusive) in already-folded text.
    pub fn find_all(&self, haystack: &[char]) -> Vec<(usize, usize)> {
        let n = self.folded.len();
        if n == 0 || n > haystack.len() {
            return Vec::new();
        }
        (0..=haystack.len() - n)
            .filter(|&i| haystack[i..i + n] == self.folded[..])
            .filter(|&i| !self.word_boundary || on_boundaries(haystack, i, i + n))
            .map(|i| (i, i + n))
            .collect()
    }

    pub fn is_match(&self, haystack: &[char]) -> bool {
        !self.find_all(haystack).is_empty()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn on_boundaries(hay: &[char], start: usize, end: usize) -> bool {
    let left = start == 0 || !is_word_char(hay[start - 1]) || !is_word_char(hay[start]);
    let right = end == hay.len() || !is_word_char(hay[end]) || !is_word_char(hay[end - 1]);
    left && right
}

/// Sentence-level suggestion lexicon, shared by reply gating and the
/// suggestion metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SuggestionLexicon {
    pub openers: Vec<Pattern>,
    pub generic: Vec<Pattern>,
}

impl SuggestionLexicon {
    /// Sentence contains an opener or a generic phrase.
    pub fn is_suggestion(&self, sentence: &str) -> bool {
        let folded = fold_chars(sentence);
        self.openers.iter().chain(&self.generic).any(|p| p.is_match(&folded))
    }

    /// Sentence contains a generic, non-specific phrase.
    pub fn is_generic(&self, sentence: &str) -> bool {
        let folded = fold_chars(sentence);
        self.generic.iter().any(|p| p.is_match(&folded))
    }
}

/// Cues for reading a user's answer to a proposed plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanFeedbackLexicon {
    pub accept: Vec<Pattern>,
    pub reject: Vec<Pattern>,
}

/// Per-signal trigger patterns plus the crisis list and suggestion lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct CueLexicon {
    pub version: u32,
    pub signals: BTreeMap<SignalKind, Vec<Pattern>>,
    pub crisis: Vec<Pattern>,
    pub suggestion: SuggestionLexicon,
    pub plan_feedback: PlanFeedbackLexicon,
}

#[derive(Deserialize)]
struct RawLexicon {
    version: u32,
    signals: BTreeMap<String, RawSection>,
    crisis: RawSection,
    suggestion: RawSuggestion,
    #[serde(default)]
    plan_feedback: RawFeedback,
}

#[derive(Deserialize)]
struct RawSection {
    patterns: Vec<RawPattern>,
}

#[derive(Deserialize)]
struct RawPattern {
    p: String,
    w: f64,
}

#[derive(Deserialize)]
struct RawSuggestion {
    openers: Vec<String>,
    generic: Vec<String>,
}

#[derive(Deserialize, Default)]
struct RawFeedback {
    #[serde(default)]
    accept: Vec<String>,
    #[serde(default)]
    reject: Vec<String>,
}

fn plain(list: &[String]) -> Result<Vec<Pattern>, LexiconError> {
    list.iter().map(|p| Pattern::parse(p, 1.0)).collect()
}

fn weighted(section: &RawSection) -> Result<Vec<Pattern>, LexiconError> {
    section.patterns.iter().map(|p| Pattern::parse(&p.p, p.w)).collect()
}

impl CueLexicon {
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml(src: &str) -> Result<Self, LexiconError> {
        let raw: RawLexicon = toml::from_str(src)?;
        let mut signals = BTreeMap::new();
        for (name, section) in &raw.signals {
            let kind: SignalKind = name.parse().map_err(|_| LexiconError::UnknownSignal(name.clone()))?;
            match kind {
                SignalKind::Continue => return Err(LexiconError::ContinueHasPatterns),
                SignalKind::CrisisTrigger => return Err(LexiconError::CrisisUnderSignals),
                _ => {}
            }
            signals.insert(kind, weighted(section)?);
        }
        let crisis = weighted(&raw.crisis)?;

        for kind in SignalKind::ALL {
            let count = match kind {
                SignalKind::Continue => continue,
                SignalKind::CrisisTrigger => crisis.len(),
                k => signals.get(&k).map_or(0, Vec::len),
            };
            if count == 0 {
                return Err(LexiconError::MissingPatterns(kind));
            }
        }

        let others: BTreeSet<String> = signals.values().flatten().map(|p| p.text.to_lowercase()).collect();
        if let Some(p) = crisis.iter().find(|p| others.contains(&p.text.to_lowercase())) {
            return Err(LexiconError::CrisisOverlap(p.text.clone()));
        }

        Ok(CueLexicon {
            version: raw.version,
            signals,
            crisis,
            suggestion: SuggestionLexicon {
                openers: plain(&raw.suggestion.openers)?,
                generic: plain(&raw.suggestion.generic)?,
            },
            plan_feedback: PlanFeedbackLexicon {
                accept: plain(&raw.plan_feedback.accept)?,
                reject: plain(&raw.plan_feedback.reject)?,
            },
        })
    }

    /// Patterns for a kind; the crisis list for `CrisisTrigger`, nothing for `Continue`.
    pub fn patterns(&self, kind: SignalKind) -> &[Pattern] {
        match kind {
            SignalKind::CrisisTrigger => &self.crisis,
            k => self.signals.get(&k).map_or(&[], Vec::as_slice),
        }
    }
}
