//! Tokenization and word-boundary phrase matching shared by queries and rows.

use std::collections::BTreeSet;

/// Lowercases `s` and splits it into word tokens.
///
/// Anything that is not alphanumeric separates tokens, except `-` and `.`
/// sitting between two alphanumerics, so "x.509" and "end-to-end" survive
/// as single tokens while a sentence-final period does not.
pub fn words(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().flat_map(char::to_lowercase).collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let joins = (c == '-' || c == '.') && !cur.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || joins {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Canonical phrase form: lowercase word tokens joined by single spaces.
pub fn normalize_phrase(s: &str) -> String {
    words(s).join(" ")
}

/// Word-boundary containment over two normalized (single-spaced) strings.
pub fn contains_phrase(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let hb = haystack.as_bytes();
    let mut from = 0;
    // overlapping scan: a boundary-failing hit must not shadow a later one
    while let Some(off) = haystack[from..].find(needle) {
        let at = from + off;
        let end = at + needle.len();
        if (at == 0 || hb[at - 1] == b' ') && (end == hb.len() || hb[end] == b' ') {
            return true;
        }
        from = at + haystack[at..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Length of the longest contiguous run of tokens shared by `a` and `b`.
pub fn longest_common_run(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // rolling row of the suffix-match table
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// A set of words removed from token lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords(BTreeSet<String>);

impl Stopwords {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stopwords(
            words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Word tokens of `s` with stopwords dropped.
    pub fn content_tokens(&self, s: &str) -> Vec<String> {
        words(s).into_iter().filter(|w| !self.contains(w)).collect()
    }
}

/// Parses a line-oriented lexicon: one entry per line, `#` starts a comment.
pub fn parse_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(normalize_phrase)
        .filter(|l| !l.is_empty())
        .collect()
}
