//! Small text utilities shared by the detector, the prompt engine and the
//! metrics.

/// Lowercases char-by-char, keeping a 1:1 mapping between input and output
/// characters so offsets found in the folded text index the original.
pub fn fold_chars(text: &str) -> Vec<char> {
    text.chars().map(|c| c.to_lowercase().next().unwrap_or(c)).collect()
}

/// Lowercased alphanumeric tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// True when every token of `needle` occurs among the tokens of `haystack`.
pub fn contains_all_tokens(haystack: &str, needle: &str) -> bool {
    let hay = tokens(haystack);
    let need = tokens(needle);
    !need.is_empty() && need.iter().all(|t| hay.contains(t))
}

/// True when the tokens of `needle` appear contiguously in `haystack`.
pub fn contains_token_run(haystack: &str, needle: &str) -> bool {
    let hay = tokens(haystack);
    let need = tokens(needle);
    if need.is_empty() || need.len() > hay.len() {
        return false;
    }
    hay.windows(need.len()).any(|w| w == need.as_slice())
}

/// Case-insensitive substring test.
pub fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// Splits text into sentences, keeping each sentence's original text
/// (terminal punctuation included, surrounding whitespace trimmed).
///
/// A sentence ends at `.`, `!` or `?` followed by whitespace or end of text,
/// or at a line break.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        let end = match c {
            '\n' => Some(i),
            '.' | '!' | '?' => match iter.peek() {
                None => Some(i + c.len_utf8()),
                Some((_, next)) if next.is_whitespace() => Some(i + c.len_utf8()),
                _ => None,
            },
            _ => None,
        };
        if let Some(end) = end {
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = if c == '\n' { i + 1 } else { end };
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Splits a reasoning chain line into its `→`-linked nodes. Lines without an
/// arrow yield a single node.
pub fn chain_nodes(line: &str) -> Vec<String> {
    line.split(['→'])
        .flat_map(|part| part.split("->"))
        .map(|n| n.trim().trim_end_matches(['.', ';']).trim().to_string())
        .filter(|n| !n.is_empty())
        .collect()
}

/// Every causal chain (two or more linked nodes) found in `text`, one per line.
pub fn causal_chains(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| l.contains('→') || l.contains("->"))
        .map(chain_nodes)
        .filter(|nodes| nodes.len() >= 2)
        .collect()
}
