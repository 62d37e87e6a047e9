//! Language-agnostic document quality heuristics and rule-based removal of
//! metadata fragments (hashtags, links, timestamps, e-mails, repeated
//! header/footer lines).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, FilterVerdict};
use crate::error::{Error, Result};

pub const MIN_WORD_COUNT: &str = "min_word_count";
pub const MAX_WORD_COUNT: &str = "max_word_count";
pub const MEAN_WORD_LENGTH: &str = "mean_word_length";
pub const SYMBOL_WORD_RATIO: &str = "symbol_word_ratio";
pub const BULLET_LINE_RATIO: &str = "bullet_line_ratio";
pub const ELLIPSIS_LINE_RATIO: &str = "ellipsis_line_ratio";
pub const ALPHA_WORD_RATIO: &str = "alpha_word_ratio";
pub const STOPWORD_HITS: &str = "stopword_hits";

/// Every rule identifier, in evaluation order.
pub const ALL_RULES: [&str; 8] = [
    MIN_WORD_COUNT,
    MAX_WORD_COUNT,
    MEAN_WORD_LENGTH,
    SYMBOL_WORD_RATIO,
    BULLET_LINE_RATIO,
    ELLIPSIS_LINE_RATIO,
    ALPHA_WORD_RATIO,
    STOPWORD_HITS,
];

const BULLETS: [char; 11] = ['•', '●', '○', '◦', '‣', '▪', '■', '□', '-', '*', '–'];

static STOPWORD_RESOURCES: [(&str, &str); 12] = [
    ("ar", include_str!("../resources/stopwords/ar.txt")),
    ("bg", include_str!("../resources/stopwords/bg.txt")),
    ("de", include_str!("../resources/stopwords/de.txt")),
    ("en", include_str!("../resources/stopwords/en.txt")),
    ("es", include_str!("../resources/stopwords/es.txt")),
    ("fr", include_str!("../resources/stopwords/fr.txt")),
    ("it", include_str!("../resources/stopwords/it.txt")),
    ("pl", include_str!("../resources/stopwords/pl.txt")),
    ("pt", include_str!("../resources/stopwords/pt.txt")),
    ("ru", include_str!("../resources/stopwords/ru.txt")),
    ("th", include_str!("../resources/stopwords/th.txt")),
    ("zh", include_str!("../resources/stopwords/zh.txt")),
];

pub fn default_stopwords() -> BTreeMap<String, Vec<String>> {
    STOPWORD_RESOURCES
        .iter()
        .map(|(lang, text)| {
            let words = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            (lang.to_string(), words)
        })
        .collect()
}

/// Thresholds for every heuristic rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicConfig {
    pub min_words: usize,
    pub max_words: usize,
    pub mean_word_len_range: (f64, f64),
    pub max_symbol_word_ratio: f64,
    pub max_bullet_line_ratio: f64,
    pub max_ellipsis_line_ratio: f64,
    pub min_alpha_word_ratio: f64,
    pub min_stopword_hits: usize,
    pub stopword_lists: BTreeMap<String, Vec<String>>,
    /// Languages written without spaces; their stopwords are counted as
    /// substring occurrences instead of whole words.
    pub substring_stopword_langs: BTreeSet<String>,
    pub disabled_rules: BTreeSet<String>,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            min_words: 50,
            max_words: 100_000,
            mean_word_len_range: (3.0, 10.0),
            max_symbol_word_ratio: 0.1,
            max_bullet_line_ratio: 0.9,
            max_ellipsis_line_ratio: 0.3,
            min_alpha_word_ratio: 0.8,
            min_stopword_hits: 2,
            stopword_lists: default_stopwords(),
            substring_stopword_langs: ["th", "zh"].iter().map(|s| s.to_string()).collect(),
            disabled_rules: BTreeSet::new(),
        }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<()> {
        let ratios = [
            ("max_symbol_word_ratio", self.max_symbol_word_ratio),
            ("max_bullet_line_ratio", self.max_bullet_line_ratio),
            ("max_ellipsis_line_ratio", self.max_ellipsis_line_ratio),
            ("min_alpha_word_ratio", self.min_alpha_word_ratio),
        ];
        for (name, v) in ratios {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.min_words > self.max_words {
            return Err(Error::config("min_words exceeds max_words"));
        }
        let (low, high) = self.mean_word_len_range;
        if !(low <= high) {
            return Err(Error::config("mean_word_len_range low exceeds high"));
        }
        for rule in &self.disabled_rules {
            if !ALL_RULES.contains(&rule.as_str()) {
                return Err(Error::config(format!("unknown rule \"{rule}\"")));
            }
        }
        Ok(())
    }

    fn enabled(&self, rule: &str) -> bool {
        !self.disabled_rules.contains(rule)
    }
}

/// Counts gathered from one document; every rule is a predicate over these.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextStats {
    pub words: usize,
    pub word_chars: usize,
    pub hash_symbols: usize,
    pub ellipses: usize,
    pub lines: usize,
    pub bullet_lines: usize,
    pub ellipsis_lines: usize,
    pub alpha_words: usize,
}

impl TextStats {
    pub fn of(text: &str) -> Self {
        let mut s = TextStats::default();
        for word in text.split_whitespace() {
            s.words += 1;
            s.word_chars += word.chars().count();
            if word.chars().any(char::is_alphabetic) {
                s.alpha_words += 1;
            }
        }
        s.hash_symbols = text.matches('#').count();
        s.ellipses = text.matches("...").count() + text.matches('…').count();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            s.lines += 1;
            if line.starts_with(BULLETS) {
                s.bullet_lines += 1;
            }
            if line.ends_with("...") || line.ends_with('…') {
                s.ellipsis_lines += 1;
            }
        }
        s
    }

    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }
}

fn stopword_hits(doc: &Document, config: &HeuristicConfig) -> Option<usize> {
    let list = config.stopword_lists.get(&doc.lang)?;
    if config.substring_stopword_langs.contains(&doc.lang) {
        return Some(list.iter().map(|w| doc.text.matches(w.as_str()).count()).sum());
    }
    let set: BTreeSet<&str> = list.iter().map(String::as_str).collect();
    Some(
        doc.text
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|w| set.contains(w.as_str()))
            .count(),
    )
}

/// Evaluates every enabled rule and lists the violated ones.
pub fn apply_heuristics(doc: &Document, config: &HeuristicConfig) -> FilterVerdict {
    let s = TextStats::of(&doc.text);
    let mut reasons = Vec::new();
    let mut fail = |rule: &str, violated: bool| {
        if violated && config.enabled(rule) {
            reasons.push(rule.to_string());
        }
    };
    fail(MIN_WORD_COUNT, s.words < config.min_words);
    fail(MAX_WORD_COUNT, s.words > config.max_words);
    let (low, high) = config.mean_word_len_range;
    let mean_len = TextStats::ratio(s.word_chars, s.words);
    fail(MEAN_WORD_LENGTH, s.words == 0 || mean_len < low || mean_len > high);
    let symbol_ratio = TextStats::ratio(s.hash_symbols.max(s.ellipses), s.words);
    fail(
        SYMBOL_WORD_RATIO,
        (s.words == 0 && s.hash_symbols + s.ellipses > 0) || symbol_ratio > config.max_symbol_word_ratio,
    );
    fail(
        BULLET_LINE_RATIO,
        TextStats::ratio(s.bullet_lines, s.lines) > config.max_bullet_line_ratio,
    );
    fail(
        ELLIPSIS_LINE_RATIO,
        TextStats::ratio(s.ellipsis_lines, s.lines) > config.max_ellipsis_line_ratio,
    );
    fail(
        ALPHA_WORD_RATIO,
        s.words == 0 || TextStats::ratio(s.alpha_words, s.words) < config.min_alpha_word_ratio,
    );
    if let Some(hits) = stopword_hits(doc, config) {
        fail(STOPWORD_HITS, hits < config.min_stopword_hits);
    }
    FilterVerdict::from_reasons(reasons)
}

/// One line of the heuristics audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub id: String,
    pub passed: bool,
    pub reasons: Vec<String>,
}

/// Header/footer lines to drop, per source.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineBlacklist {
    pub lines: BTreeMap<String, BTreeSet<String>>,
}

impl LineBlacklist {
    fn contains(&self, source: &str, line: &str) -> bool {
        self.lines
            .get(source)
            .is_some_and(|set| set.contains(line.trim()))
    }
}

/// Finds first/last lines repeated verbatim across documents of one source.
///
/// Documents are grouped per source in corpus order and cut into consecutive
/// windows of `window` documents; a first or last line occurring in at least
/// `min_repeats` documents of a window is blacklisted for that source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoilerplateDetector {
    pub window: usize,
    pub min_repeats: usize,
}

impl Default for BoilerplateDetector {
    fn default() -> Self {
        BoilerplateDetector {
            window: 100,
            min_repeats: 3,
        }
    }
}

impl BoilerplateDetector {
    pub fn detect<'a, I>(&self, docs: I) -> LineBlacklist
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let window = self.window.max(1);
        let mut state: HashMap<&str, (usize, HashMap<String, usize>)> = HashMap::new();
        let mut out = LineBlacklist::default();
        let flush = |source: &str, counts: &mut HashMap<String, usize>, out: &mut LineBlacklist| {
            for (line, n) in counts.drain() {
                if n >= self.min_repeats {
                    out.lines.entry(source.to_string()).or_default().insert(line);
                }
            }
        };
        for doc in docs {
            let (seen, counts) = state.entry(doc.source.as_str()).or_default();
            let mut lines = doc.text.lines().map(str::trim).filter(|l| !l.is_empty());
            let first = lines.next();
            let last = lines.last();
            for line in first.into_iter().chain(last) {
                *counts.entry(line.to_string()).or_insert(0) += 1;
            }
            *seen += 1;
            if *seen % window == 0 {
                flush(&doc.source, counts, &mut out);
            }
        }
        for (source, (_, counts)) in state.iter_mut() {
            flush(source, counts, &mut out);
        }
        out
    }
}

struct Patterns {
    url: Regex,
    email: Regex,
    hashtag: Regex,
    timestamp: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        url: Regex::new(r"(?i)(?:https?://|ftp://|www\.)\S+").unwrap(),
        email: Regex::new(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+").unwrap(),
        hashtag: Regex::new(r"#\w+").unwrap(),
        timestamp: Regex::new(
            r"\b\d{4}-\d{2}-\d{2}(?:[T ]\d{2}:\d{2}(?::\d{2}(?:\.\d+)?)?(?:Z|[+-]\d{2}:?\d{2})?)?\b",
        )
        .unwrap(),
    })
}

fn metadata_spans(text: &str) -> Vec<(usize, usize)> {
    let p = patterns();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for re in [&p.url, &p.email, &p.timestamp] {
        spans.extend(re.find_iter(text).map(|m| (m.start(), m.end())));
    }
    spans.extend(
        p.hashtag
            .find_iter(text)
            .filter(|m| {
                text[..m.start()]
                    .chars()
                    .next_back()
                    .map_or(true, char::is_whitespace)
            })
            .map(|m| (m.start(), m.end())),
    );
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

fn remove_spans(text: &str, spans: &[(usize, usize)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for &(start, end) in spans {
        if start < pos {
            continue;
        }
        out.push_str(&text[pos..start]);
        let kept = out.trim_end_matches(char::is_whitespace).len();
        let before_ws = out[kept..].to_string();
        out.truncate(kept);
        let rest = &text[end..];
        let after_len = rest.len() - rest.trim_start_matches(char::is_whitespace).len();
        let after_ws = &rest[..after_len];
        pos = end + after_len;
        let at_edge = out.is_empty() || pos == text.len();
        if !at_edge {
            if before_ws.contains('\n') || after_ws.contains('\n') {
                out.push('\n');
            } else if !before_ws.is_empty() || !after_ws.is_empty() {
                out.push(' ');
            }
        }
    }
    out.push_str(&text[pos..]);
    out
}

fn strip_boilerplate(text: &str, source: &str, blacklist: &LineBlacklist) -> String {
    if blacklist.lines.get(source).map_or(true, BTreeSet::is_empty) {
        return text.to_string();
    }
    let lines: Vec<&str> = text.split('\n').collect();
    let is_bp = |l: &&str| !l.trim().is_empty() && blacklist.contains(source, l);
    let is_blank = |l: &&str| l.trim().is_empty();
    let mut start = 0;
    while let Some(i) = (start..lines.len()).find(|&i| !is_blank(&lines[i])) {
        if !is_bp(&lines[i]) {
            break;
        }
        start = i + 1;
    }
    if start > 0 {
        while start < lines.len() && is_blank(&lines[start]) {
            start += 1;
        }
    }
    let mut end = lines.len();
    while let Some(i) = (start..end).rev().find(|&i| !is_blank(&lines[i])) {
        if !is_bp(&lines[i]) {
            break;
        }
        end = i;
    }
    if end < lines.len() {
        while end > start && is_blank(&lines[end - 1]) {
            end -= 1;
        }
    }
    lines[start..end].join("\n")
}

/// Removes metadata fragments and blacklisted header/footer lines.
#[derive(Debug, Clone, Default)]
pub struct MetadataStripper {
    pub blacklist: LineBlacklist,
}

impl MetadataStripper {
    pub fn new(blacklist: LineBlacklist) -> Self {
        MetadataStripper { blacklist }
    }

    pub fn strip_text(&self, text: &str, source: &str) -> String {
        let mut current = strip_boilerplate(text, source, &self.blacklist);
        // Iterate to a fixpoint so that a removal never exposes a new match.
        loop {
            let spans = metadata_spans(&current);
            if spans.is_empty() {
                return current;
            }
            let next = remove_spans(&current, &spans);
            if next == current {
                return current;
            }
            current = next;
        }
    }

    pub fn strip(&self, doc: &Document) -> Document {
        let mut out = doc.clone();
        out.text = self.strip_text(&doc.text, &doc.source);
        out
    }
}

/// [`MetadataStripper::strip`] with no header/footer blacklist.
pub fn strip_metadata(doc: &Document) -> Document {
    MetadataStripper::default().strip(doc)
}
