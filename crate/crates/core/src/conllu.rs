//! CoNLL-U treebank reading.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreebankSentence {
    pub lang: String,
    pub surface: String,
    pub words: Vec<String>,
}

struct Row {
    id: String,
    form: String,
    space_after: bool,
}

enum RowKind {
    Word(usize),
    Range(usize),
    Empty,
}

fn kind(id: &str) -> Option<RowKind> {
    if let Some((a, b)) = id.split_once('-') {
        a.parse::<usize>().ok()?;
        return Some(RowKind::Range(b.parse().ok()?));
    }
    if id.contains('.') {
        return Some(RowKind::Empty);
    }
    id.parse().ok().map(RowKind::Word)
}

/// Forms joined by single spaces except after tokens marked SpaceAfter=No;
/// a multiword range row stands in for its member words.
fn reconstruct(rows: &[Row]) -> String {
    let mut out = String::new();
    let mut skip_to = 0usize;
    for row in rows {
        match kind(&row.id) {
            Some(RowKind::Range(b)) => {
                skip_to = b;
            }
            Some(RowKind::Word(n)) if n <= skip_to => continue,
            Some(RowKind::Word(_)) => {}
            _ => continue,
        }
        out.push_str(&row.form);
        if row.space_after {
            out.push(' ');
        }
    }
    out.truncate(out.trim_end().len());
    out
}

/// Streaming sentence reader over CoNLL-U text.
pub struct ConlluReader<R> {
    lines: std::io::Lines<R>,
    path: PathBuf,
    lang: String,
    line_no: usize,
    done: bool,
}

impl<R: BufRead> ConlluReader<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>, lang: impl Into<String>) -> Self {
        ConlluReader {
            lines: reader.lines(),
            path: path.into(),
            lang: lang.into(),
            line_no: 0,
            done: false,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::at_line(&self.path, self.line_no, msg)
    }

    fn next_sentence(&mut self) -> Result<Option<TreebankSentence>> {
        let mut text: Option<String> = None;
        let mut rows: Vec<Row> = Vec::new();
        let mut words = Vec::new();
        let mut started = false;
        loop {
            let line = match self.lines.next() {
                Some(l) => l.map_err(|e| Error::io(&self.path, e))?,
                None => {
                    self.done = true;
                    break;
                }
            };
            self.line_no += 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                if started {
                    break;
                }
                continue;
            }
            started = true;
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(t) = comment.trim_start().strip_prefix("text =") {
                    text = Some(t.trim().to_string());
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 10 {
                return Err(self.err(format!("expected 10 tab-separated columns, found {}", cols.len())));
            }
            let k = kind(cols[0]).ok_or_else(|| self.err(format!("bad token id {:?}", cols[0])))?;
            if let RowKind::Word(_) = k {
                words.push(cols[1].to_string());
            }
            rows.push(Row {
                id: cols[0].to_string(),
                form: cols[1].to_string(),
                space_after: !cols[9].split('|').any(|m| m == "SpaceAfter=No"),
            });
        }
        if !started {
            return Ok(None);
        }
        if words.is_empty() {
            return Err(self.err("sentence has no words"));
        }
        let surface = text.unwrap_or_else(|| reconstruct(&rows));
        Ok(Some(TreebankSentence {
            lang: self.lang.clone(),
            surface,
            words,
        }))
    }
}

impl<R: BufRead> Iterator for ConlluReader<R> {
    type Item = Result<TreebankSentence>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_sentence() {
            Ok(Some(s)) => Some(Ok(s)),
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub fn parse_conllu(
    path: impl AsRef<Path>,
    lang: &str,
) -> Result<ConlluReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(ConlluReader::new(BufReader::new(file), path, lang))
}

pub fn parse_conllu_str(text: &str, lang: &str) -> Result<Vec<TreebankSentence>> {
    ConlluReader::new(text.as_bytes(), "<memory>", lang).collect()
}
