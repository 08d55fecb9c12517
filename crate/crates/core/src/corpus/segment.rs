//! Rule-based sentence splitter.
//!
//! A sentence ends at a run of `.`, `!` or `?` (plus any closing quotes or
//! brackets) that is followed by whitespace and an uppercase letter, or by
//! the end of the text. A blank line always ends a sentence. A single `.`
//! does not end a sentence when the word before it is a single uppercase
//! letter (an initial) or one of [`ABBREVIATIONS`]. Sentences longer than
//! the limit are wrapped at the last whitespace before it.

use super::{Document, Sentence};

pub const DEFAULT_MAX_SENTENCE_CHARS: usize = 1000;

/// Lowercased words that do not end a sentence when followed by a period.
/// Dotted forms (`e.g`) are matched against the whole dotted word.
pub const ABBREVIATIONS: &[&str] = &[
    "al", "approx", "apr", "aug", "capt", "cf", "co", "col", "corp", "dec", "dept", "dr", "e.g",
    "est", "etc", "feb", "fig", "ft", "gen", "gov", "i.e", "inc", "jan", "jr", "jul", "jun", "lt",
    "ltd", "mr", "mrs", "ms", "mt", "nov", "oct", "prof", "rep", "rev", "sen", "sep", "sept",
    "sgt", "sr", "st", "vol", "vs",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}', '\u{bb}'];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Sentence splitter with a configurable length limit (in characters).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segmenter {
    pub max_chars: usize,
}

impl Default for Segmenter {
    fn default() -> Self {
        Self {
            max_chars: DEFAULT_MAX_SENTENCE_CHARS,
        }
    }
}

impl Segmenter {
    pub fn new(max_chars: usize) -> Self {
        assert!(max_chars > 0, "max_chars must be positive");
        Self { max_chars }
    }

    /// Split `text` into trimmed, non-empty sentence slices of `text`.
    pub fn split<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        for (start, end) in raw_boundaries(text) {
            let piece = text[start..end].trim();
            if !piece.is_empty() {
                wrap(piece, self.max_chars, &mut out);
            }
        }
        out
    }

    pub fn segment(&self, doc: &Document) -> Vec<Sentence> {
        self.split(&doc.text)
            .into_iter()
            .enumerate()
            .map(|(i, s)| Sentence {
                doc_id: doc.doc_id,
                sent_idx: i as u32,
                text: s.to_string(),
            })
            .collect()
    }
}

/// Split a document with the default 1000-character limit.
pub fn segment_sentences(doc: &Document) -> Vec<Sentence> {
    Segmenter::default().segment(doc)
}

/// Split text with the default limit.
pub fn split_sentences(text: &str) -> Vec<&str> {
    Segmenter::default().split(text)
}

/// Byte ranges between boundaries, untrimmed.
fn raw_boundaries(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let n = chars.len();
    let mut ranges = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < n {
        let c = chars[i].1;
        if c == '\n' {
            // blank line: newline, optional horizontal whitespace, newline
            let mut j = i + 1;
            while j < n && chars[j].1 != '\n' && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j < n && chars[j].1 == '\n' {
                ranges.push((start, byte_at(i)));
                while j < n && chars[j].1.is_whitespace() {
                    j += 1;
                }
                start = byte_at(j);
                i = j;
                continue;
            }
            i += 1;
            continue;
        }
        if !is_terminal(c) {
            i += 1;
            continue;
        }

        let run_start = i;
        let mut j = i;
        while j < n && is_terminal(chars[j].1) {
            j += 1;
        }
        let single_period = j - run_start == 1 && c == '.';
        while j < n && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let end = byte_at(j);

        let boundary = if j == n {
            true
        } else if chars[j].1.is_whitespace() {
            let mut k = j;
            while k < n && chars[k].1.is_whitespace() {
                k += 1;
            }
            k == n || chars[k].1.is_uppercase()
        } else {
            false
        };

        if boundary && !(single_period && guarded(&chars, run_start)) {
            ranges.push((start, end));
            start = end;
        }
        i = j;
    }
    if start < text.len() {
        ranges.push((start, text.len()));
    }
    ranges
}

/// True when the word ending right before `period_at` is an initial or a
/// listed abbreviation.
fn guarded(chars: &[(usize, char)], period_at: usize) -> bool {
    let mut k = period_at;
    while k > 0 && (chars[k - 1].1.is_alphabetic() || chars[k - 1].1 == '.') {
        k -= 1;
    }
    let word: String = chars[k..period_at].iter().map(|&(_, c)| c).collect();
    let word = word.trim_start_matches('.');
    if word.is_empty() {
        return false;
    }
    let mut letters = word.chars();
    if let (Some(first), None) = (letters.next(), letters.next()) {
        return first.is_uppercase();
    }
    // dotted initialisms such as "U.S"
    if word.contains('.') && word.split('.').all(|seg| seg.chars().count() == 1) {
        return true;
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.binary_search(&lower.as_str()).is_ok()
}

fn wrap<'a>(mut piece: &'a str, max_chars: usize, out: &mut Vec<&'a str>) {
    loop {
        let Some((limit, _)) = piece.char_indices().nth(max_chars) else {
            out.push(piece);
            return;
        };
        // last whitespace strictly before the limit, not at position 0
        let cut = piece[..limit]
            .char_indices()
            .filter(|&(b, c)| b > 0 && c.is_whitespace())
            .map(|(b, _)| b)
            .next_back()
            .unwrap_or(limit);
        let head = piece[..cut].trim_end();
        out.push(head);
        piece = piece[cut..].trim_start();
        if piece.is_empty() {
            return;
        }
    }
}
