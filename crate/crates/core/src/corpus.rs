//! Document and manifest data model, streaming JSONL I/O and the small
//! shared utilities (token counting, training-compute estimate).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Language tag used for records whose language is outside the configured set.
pub const UNKNOWN_LANG: &str = "unknown";

/// Meta key holding the original tag of a record remapped to [`UNKNOWN_LANG`].
pub const ORIGINAL_LANG_KEY: &str = "lang_original";

/// The twelve pre-training languages.
pub const DEFAULT_LANGUAGES: [&str; 12] = [
    "ar", "bg", "de", "en", "es", "fr", "it", "pl", "pt", "ru", "th", "zh",
];

/// One text record flowing through the filters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub lang: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        lang: impl Into<String>,
        source: impl Into<String>,
    ) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            lang: lang.into(),
            source: source.into(),
            token_count: None,
            meta: BTreeMap::new(),
        }
    }
}

/// The set of admitted language codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageSet(BTreeSet<String>);

impl Default for LanguageSet {
    fn default() -> Self {
        LanguageSet(DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect())
    }
}

impl LanguageSet {
    pub fn new<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LanguageSet(codes.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, code: &str) -> bool {
        self.0.contains(code)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// Remaps a document outside the set to [`UNKNOWN_LANG`], keeping the
    /// original tag in `meta`.
    pub fn admit(&self, doc: &mut Document) {
        if doc.lang != UNKNOWN_LANG && !self.contains(&doc.lang) {
            let original = std::mem::replace(&mut doc.lang, UNKNOWN_LANG.to_string());
            doc.meta.insert(ORIGINAL_LANG_KEY.to_string(), original);
        }
    }
}

/// Outcome of a rule-based filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub passed: bool,
    pub reasons: Vec<String>,
}

impl FilterVerdict {
    pub fn from_reasons(reasons: Vec<String>) -> Self {
        FilterVerdict {
            passed: reasons.is_empty(),
            reasons,
        }
    }
}

#[derive(Deserialize)]
struct RawDocument {
    id: Option<String>,
    text: Option<String>,
    lang: Option<String>,
    source: Option<String>,
    #[serde(default)]
    token_count: Option<u64>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// Streams validated documents from a JSONL file in file order.
pub struct DocumentReader<R> {
    path: PathBuf,
    lines: std::io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
    languages: LanguageSet,
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>, languages: LanguageSet) -> Self {
        DocumentReader {
            path: path.into(),
            lines: reader.lines(),
            line_no: 0,
            seen: HashSet::new(),
            languages,
        }
    }

    fn parse(&mut self, line: &str) -> Result<Document> {
        let raw: RawDocument = serde_json::from_str(line)
            .map_err(|e| Error::at_line(&self.path, self.line_no, format!("malformed JSON: {e}")))?;
        let missing = |field: &str| {
            Error::at_line(
                &self.path,
                self.line_no,
                format!("missing required field \"{field}\""),
            )
        };
        let id = raw.id.ok_or_else(|| missing("id"))?;
        let text = raw.text.ok_or_else(|| missing("text"))?;
        let lang = raw.lang.ok_or_else(|| missing("lang"))?;
        let source = raw.source.ok_or_else(|| missing("source"))?;
        if id.is_empty() {
            return Err(Error::at_line(&self.path, self.line_no, "empty id"));
        }
        if !self.seen.insert(id.clone()) {
            return Err(Error::at_line(
                &self.path,
                self.line_no,
                format!("duplicate id \"{id}\""),
            ));
        }
        let mut doc = Document {
            id,
            text,
            lang,
            source,
            token_count: raw.token_count,
            meta: raw.meta,
        };
        self.languages.admit(&mut doc);
        Ok(doc)
    }
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line_no += 1;
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&line));
        }
    }
}

/// Opens a JSONL corpus file with the default language set.
pub fn stream_documents(path: impl AsRef<Path>) -> Result<DocumentReader<BufReader<File>>> {
    stream_documents_with(path, LanguageSet::default())
}

pub fn stream_documents_with(
    path: impl AsRef<Path>,
    languages: LanguageSet,
) -> Result<DocumentReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(DocumentReader::new(BufReader::new(file), path, languages))
}

/// Reads a whole corpus file into memory.
pub fn read_documents(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    stream_documents(path)?.collect()
}

/// Writes documents as JSONL, one object per line.
pub fn write_documents<'a, I>(path: impl AsRef<Path>, docs: I) -> Result<usize>
where
    I: IntoIterator<Item = &'a Document>,
{
    write_jsonl(path, docs)
}

/// Serializes each item as one JSON line.
pub fn write_jsonl<T, I>(path: impl AsRef<Path>, items: I) -> Result<usize>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut n = 0;
    for item in items {
        serde_json::to_writer(&mut out, &item).map_err(|e| Error::data(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        n += 1;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

/// Reads a JSONL file of arbitrary records, reporting the failing line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::at_line(path, i + 1, format!("malformed record: {e}")))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::data(e.to_string()))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// A subword tokenizer as seen by counting code.
pub trait Tokenizer: Send + Sync {
    /// Stable identifier recorded in manifests and reports.
    fn id(&self) -> &str;

    fn count_tokens(&self, text: &str) -> Result<usize>;
}

/// One token per maximal run of non-whitespace characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn id(&self) -> &str {
        "whitespace"
    }

    fn count_tokens(&self, text: &str) -> Result<usize> {
        Ok(text.split_whitespace().count())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub lang: String,
    pub source: String,
    pub document_count: u64,
    pub token_count: u64,
    /// Files contributing to this entry, in input order.
    pub paths: Vec<String>,
}

/// Per-language/per-source token and document accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub created_at: String,
    pub tokenizer_id: String,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_VERSION: u32 = 1;

impl CorpusManifest {
    pub fn new(tokenizer_id: impl Into<String>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let manifest = CorpusManifest {
            version: MANIFEST_VERSION,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tokenizer_id: tokenizer_id.into(),
            entries,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::data(format!(
                "unsupported manifest version {}",
                self.version
            )));
        }
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert((e.lang.as_str(), e.source.as_str())) {
                return Err(Error::data(format!(
                    "duplicate manifest entry ({}, {})",
                    e.lang, e.source
                )));
            }
        }
        Ok(())
    }

    /// Aggregate token counts n_l per language, excluding `unknown`.
    pub fn language_tokens(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for e in self.entries.iter().filter(|e| e.lang != UNKNOWN_LANG) {
            *out.entry(e.lang.clone()).or_insert(0) += e.token_count;
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: CorpusManifest = read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }
}

/// Per-document token counts grouped by (lang, source), in corpus order.
///
/// This is the document-level view the mix scheduler walks; its aggregate
/// is exactly a [`CorpusManifest`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusIndex {
    pub groups: BTreeMap<(String, String), SourceDocs>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceDocs {
    pub doc_tokens: Vec<u64>,
    pub paths: Vec<String>,
}

impl CorpusIndex {
    /// Streams every file, recounting tokens with `tokenizer`.
    pub fn build<P: AsRef<Path> + Sync>(paths: &[P], tokenizer: &dyn Tokenizer) -> Result<Self> {
        let per_file: Vec<Result<CorpusIndex>> = paths
            .par_iter()
            .map(|p| {
                let p = p.as_ref();
                let mut index = CorpusIndex::default();
                for doc in stream_documents(p)? {
                    let doc = doc?;
                    let tokens = tokenizer.count_tokens(&doc.text).map_err(|e| {
                        Error::data(format!("{}: tokenizer failed on {}: {e}", p.display(), doc.id))
                    })?;
                    index.push(&doc.lang, &doc.source, tokens as u64, &p.display().to_string());
                }
                Ok(index)
            })
            .collect();
        let mut merged = CorpusIndex::default();
        for index in per_file {
            merged.extend(index?);
        }
        Ok(merged)
    }

    pub fn push(&mut self, lang: &str, source: &str, tokens: u64, path: &str) {
        let group = self
            .groups
            .entry((lang.to_string(), source.to_string()))
            .or_default();
        group.doc_tokens.push(tokens);
        if group.paths.last().map(String::as_str) != Some(path) {
            group.paths.push(path.to_string());
        }
    }

    /// Appends `other` after `self`, group by group.
    pub fn extend(&mut self, other: CorpusIndex) {
        for (key, docs) in other.groups {
            let group = self.groups.entry(key).or_default();
            group.doc_tokens.extend(docs.doc_tokens);
            group.paths.extend(docs.paths);
        }
    }

    pub fn entries(&self) -> Vec<ManifestEntry> {
        self.groups
            .iter()
            .map(|((lang, source), docs)| ManifestEntry {
                lang: lang.clone(),
                source: source.clone(),
                document_count: docs.doc_tokens.len() as u64,
                token_count: docs.doc_tokens.iter().sum(),
                paths: docs.paths.clone(),
            })
            .collect()
    }

    pub fn manifest(&self, tokenizer_id: &str) -> Result<CorpusManifest> {
        CorpusManifest::new(tokenizer_id, self.entries())
    }
}

/// Builds the manifest for a set of corpus files; token counts are always
/// recomputed with `tokenizer`.
pub fn build_manifest<P: AsRef<Path> + Sync>(
    paths: &[P],
    tokenizer: &dyn Tokenizer,
) -> Result<CorpusManifest> {
    CorpusIndex::build(paths, tokenizer)?.manifest(tokenizer.id())
}

/// Training compute C = 6·T·P, exact in integers.
pub fn estimate_training_flops(tokens: u64, params: u64) -> u128 {
    6 * tokens as u128 * params as u128
}
