//! Tokenizer fertility (tokens per word) over treebank sentences.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conllu::{parse_conllu, TreebankSentence};
use crate::corpus::Tokenizer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageFertility {
    pub sentences: u64,
    pub words: u64,
    pub tokens: u64,
    pub fertility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FertilityReport {
    pub tokenizer_id: String,
    pub languages: BTreeMap<String, LanguageFertility>,
    /// Unweighted mean over languages.
    pub average: f64,
}

/// Tokens of each full surface sentence over its word count, summed per
/// language.
pub fn fertility_of_sentences(
    tok: &dyn Tokenizer,
    sentences: &[TreebankSentence],
) -> Result<FertilityReport> {
    let counted: Vec<(&str, u64, u64)> = sentences
        .par_iter()
        .map(|s| Ok((s.lang.as_str(), tok.count_tokens(&s.surface)? as u64, s.words.len() as u64)))
        .collect::<Result<_>>()?;
    let mut totals: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    for (lang, tokens, words) in counted {
        let t = totals.entry(lang.to_string()).or_default();
        t.0 += 1;
        t.1 += words;
        t.2 += tokens;
    }
    let mut languages = BTreeMap::new();
    for (lang, (sentences, words, tokens)) in totals {
        if words == 0 {
            return Err(Error::data(format!("{lang}: treebank has zero words")));
        }
        languages.insert(
            lang,
            LanguageFertility {
                sentences,
                words,
                tokens,
                fertility: tokens as f64 / words as f64,
            },
        );
    }
    if languages.is_empty() {
        return Err(Error::data("no treebank sentences"));
    }
    let average = languages.values().map(|l| l.fertility).sum::<f64>() / languages.len() as f64;
    Ok(FertilityReport {
        tokenizer_id: tok.id().to_string(),
        languages,
        average,
    })
}

pub fn compute_fertility(
    tok: &dyn Tokenizer,
    treebanks: &BTreeMap<String, Vec<PathBuf>>,
) -> Result<FertilityReport> {
    let mut sentences = Vec::new();
    for (lang, files) in treebanks {
        let before = sentences.len();
        for f in files {
            for s in parse_conllu(f, lang)? {
                sentences.push(s?);
            }
        }
        if sentences.len() == before {
            return Err(Error::data(format!("{lang}: treebank has no sentences")));
        }
    }
    fertility_of_sentences(tok, &sentences)
}

/// Rows are tokenizers, columns the union of languages plus the average.
pub fn format_fertility_table(reports: &[FertilityReport]) -> String {
    let mut langs: Vec<&str> = reports
        .iter()
        .flat_map(|r| r.languages.keys().map(String::as_str))
        .collect();
    langs.sort_unstable();
    langs.dedup();
    let name_w = reports
        .iter()
        .map(|r| r.tokenizer_id.chars().count())
        .chain(["tokenizer".len()])
        .max()
        .unwrap_or(9);
    let col_w = 6;
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "tokenizer");
    for l in &langs {
        let _ = write!(out, " {l:>col_w$}");
    }
    let _ = writeln!(out, " {:>col_w$}", "avg");
    for r in reports {
        let _ = write!(out, "{:<name_w$}", r.tokenizer_id);
        for l in &langs {
            match r.languages.get(*l) {
                Some(f) => {
                    let _ = write!(out, " {:>col_w$.2}", f.fertility);
                }
                None => {
                    let _ = write!(out, " {:>col_w$}", "-");
                }
            }
        }
        let _ = writeln!(out, " {:>col_w$.2}", r.average);
    }
    out
}
