//! Multiple-choice format (MCF) rendering and SFT mixture assembly.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OPTION_COUNT: usize = 4;
pub const FORMAT_COUNT: usize = 18;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McfItem {
    pub question: String,
    pub options: Vec<String>,
    pub gold_index: usize,
    pub source_doc_id: String,
}

impl McfItem {
    pub fn validate(&self) -> Result<()> {
        if self.options.len() != OPTION_COUNT {
            return Err(Error::data(format!(
                "item from {}: expected {OPTION_COUNT} options, got {}",
                self.source_doc_id,
                self.options.len()
            )));
        }
        if self.gold_index >= OPTION_COUNT {
            return Err(Error::data(format!(
                "item from {}: gold_index {} out of range",
                self.source_doc_id, self.gold_index
            )));
        }
        let distinct: HashSet<&str> = self.options.iter().map(String::as_str).collect();
        if distinct.len() != OPTION_COUNT {
            return Err(Error::data(format!("item from {}: options repeat", self.source_doc_id)));
        }
        if self.options.iter().any(|o| o.contains(['\n', '\r'])) || self.question.is_empty() {
            return Err(Error::data(format!(
                "item from {}: empty question or multi-line option",
                self.source_doc_id
            )));
        }
        Ok(())
    }

    pub fn gold_text(&self) -> &str {
        &self.options[self.gold_index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexStyle {
    UpperLetters,
    LowerLetters,
    ArabicNumerals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Separator {
    #[serde(rename = ".")]
    Period,
    #[serde(rename = ")")]
    Paren,
    #[serde(rename = ",")]
    Comma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerStyle {
    IndexOnly,
    IndexPlusText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FormatSpec {
    pub index_style: IndexStyle,
    pub separator: Separator,
    pub answer_style: AnswerStyle,
}

const STYLES: [IndexStyle; 3] = [IndexStyle::UpperLetters, IndexStyle::LowerLetters, IndexStyle::ArabicNumerals];
const SEPARATORS: [Separator; 3] = [Separator::Period, Separator::Paren, Separator::Comma];
const ANSWERS: [AnswerStyle; 2] = [AnswerStyle::IndexOnly, AnswerStyle::IndexPlusText];

impl Separator {
    pub fn as_str(self) -> &'static str {
        match self {
            Separator::Period => ".",
            Separator::Paren => ")",
            Separator::Comma => ",",
        }
    }
}

impl IndexStyle {
    pub fn label(self, i: usize) -> String {
        match self {
            IndexStyle::UpperLetters => char::from(b'A' + i as u8).to_string(),
            IndexStyle::LowerLetters => char::from(b'a' + i as u8).to_string(),
            IndexStyle::ArabicNumerals => (i + 1).to_string(),
        }
    }
}

impl FormatSpec {
    /// The i-th of the 18 formats (style-major, then separator, then answer).
    pub fn from_index(i: usize) -> FormatSpec {
        let i = i % FORMAT_COUNT;
        FormatSpec {
            index_style: STYLES[i / 6],
            separator: SEPARATORS[(i / 2) % 3],
            answer_style: ANSWERS[i % 2],
        }
    }

    pub fn index(&self) -> usize {
        fn pos<T: PartialEq>(v: &[T], x: T) -> usize {
            v.iter().position(|y| *y == x).expect("enumerated")
        }
        pos(&STYLES, self.index_style) * 6
            + pos(&SEPARATORS, self.separator) * 2
            + pos(&ANSWERS, self.answer_style)
    }

    pub fn all() -> impl Iterator<Item = FormatSpec> {
        (0..FORMAT_COUNT).map(FormatSpec::from_index)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Deterministic draw from the 18 formats keyed by (seed, item index).
pub fn sample_format(seed: u64, item_index: u64) -> FormatSpec {
    FormatSpec::from_index((mix_seed(seed, item_index) % FORMAT_COUNT as u64) as usize)
}

/// The n-th permutation of 0..4 in lexicographic order, n in 0..24.
fn nth_permutation(mut n: usize) -> [usize; OPTION_COUNT] {
    let mut pool: Vec<usize> = (0..OPTION_COUNT).collect();
    let mut out = [0; OPTION_COUNT];
    let mut fact = 6;
    for (k, slot) in out.iter_mut().enumerate() {
        let i = n / fact;
        n %= fact;
        *slot = pool.remove(i);
        if k + 1 < OPTION_COUNT {
            fact /= OPTION_COUNT - 1 - k;
        }
    }
    out
}

/// Reorders options by a seeded permutation; the gold text is preserved.
pub fn shuffle_options(item: &McfItem, seed: u64) -> McfItem {
    let n = ChaCha8Rng::seed_from_u64(seed).gen_range(0..24);
    let perm = nth_permutation(n);
    McfItem {
        question: item.question.clone(),
        options: perm.iter().map(|&i| item.options[i].clone()).collect(),
        gold_index: perm.iter().position(|&i| i == item.gold_index).expect("permutation"),
        source_doc_id: item.source_doc_id.clone(),
    }
}

pub fn render_mcf(item: &McfItem, spec: &FormatSpec) -> (String, String) {
    let sep = spec.separator.as_str();
    let mut prompt = item.question.clone();
    for (i, opt) in item.options.iter().enumerate() {
        prompt.push('\n');
        prompt.push_str(&format!("{}{sep} {opt}", spec.index_style.label(i)));
    }
    let gold = spec.index_style.label(item.gold_index);
    let answer = match spec.answer_style {
        AnswerStyle::IndexOnly => gold,
        AnswerStyle::IndexPlusText => format!("{gold}{sep} {}", item.gold_text()),
    };
    (prompt, answer)
}

/// Recovers the gold index from a rendered (prompt, answer) pair.
pub fn parse_rendered(prompt: &str, answer: &str, spec: &FormatSpec) -> Result<usize> {
    let sep = spec.separator.as_str();
    let lines: Vec<&str> = prompt.split('\n').collect();
    if lines.len() < OPTION_COUNT + 1 {
        return Err(Error::data("prompt has fewer than four option lines"));
    }
    let option_lines = &lines[lines.len() - OPTION_COUNT..];
    let mut options = Vec::with_capacity(OPTION_COUNT);
    for (i, line) in option_lines.iter().enumerate() {
        let prefix = format!("{}{sep} ", spec.index_style.label(i));
        let text = line
            .strip_prefix(&prefix)
            .ok_or_else(|| Error::data(format!("option line {:?} does not match the format", line)))?;
        options.push(text);
    }
    for i in 0..OPTION_COUNT {
        let label = spec.index_style.label(i);
        let matched = match spec.answer_style {
            AnswerStyle::IndexOnly => answer == label,
            AnswerStyle::IndexPlusText => answer == format!("{label}{sep} {}", options[i]),
        };
        if matched {
            return Ok(i);
        }
    }
    Err(Error::data(format!("answer {answer:?} does not match any option")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRecord {
    pub system: String,
    pub user: String,
    pub assistant: String,
}

/// Renders items as chat records: item i gets format `sample_format(seed, i)`
/// and, when `balance` is set, options shuffled with a seed derived from
/// (seed, i).
pub fn render_items(items: &[McfItem], seed: u64, balance: bool) -> Result<Vec<ChatRecord>> {
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            item.validate()?;
            let item = if balance {
                shuffle_options(item, mix_seed(seed ^ 0x5eed, i as u64))
            } else {
                item.clone()
            };
            let (user, assistant) = render_mcf(&item, &sample_format(seed, i as u64));
            Ok(ChatRecord {
                system: String::new(),
                user,
                assistant,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureDataset {
    pub name: String,
    pub path: String,
    pub count: u64,
    #[serde(default)]
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixturePlan {
    pub datasets: Vec<MixtureDataset>,
    #[serde(default)]
    pub seed: u64,
}

impl MixturePlan {
    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for d in &self.datasets {
            if !names.insert(d.name.as_str()) {
                return Err(Error::config(format!("dataset name {} repeats", d.name)));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let plan: MixturePlan = crate::corpus::read_json(path)?;
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRow {
    pub name: String,
    pub language: String,
    pub count: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub seed: u64,
    pub total: u64,
    pub datasets: Vec<MixtureRow>,
}

/// Takes the first `count` records of each dataset and shuffles the
/// concatenation with a seeded Fisher–Yates pass. Records are opaque lines.
pub fn assemble_sft_mixture_from(
    plan: &MixturePlan,
    datasets: &[Vec<String>],
) -> Result<(Vec<String>, MixtureReport)> {
    plan.validate()?;
    if datasets.len() != plan.datasets.len() {
        return Err(Error::config("one record list per planned dataset is required"));
    }
    let mut merged = Vec::new();
    for (d, records) in plan.datasets.iter().zip(datasets) {
        if (records.len() as u64) < d.count {
            return Err(Error::data(format!(
                "dataset {} has {} records, {} requested",
                d.name,
                records.len(),
                d.count
            )));
        }
        merged.extend(records[..d.count as usize].iter().cloned());
    }
    merged.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
    let total: u64 = plan.datasets.iter().map(|d| d.count).sum();
    let rows = plan
        .datasets
        .iter()
        .map(|d| MixtureRow {
            name: d.name.clone(),
            language: d.language.clone(),
            count: d.count,
            fraction: if total == 0 { 0.0 } else { d.count as f64 / total as f64 },
        })
        .collect();
    Ok((
        merged,
        MixtureReport {
            seed: plan.seed,
            total,
            datasets: rows,
        },
    ))
}

/// Reads each dataset's non-blank JSONL lines (validated as JSON) and
/// assembles the mixture.
pub fn assemble_sft_mixture(plan: &MixturePlan) -> Result<(Vec<String>, MixtureReport)> {
    plan.validate()?;
    let mut all = Vec::with_capacity(plan.datasets.len());
    for d in &plan.datasets {
        let path = Path::new(&d.path);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            serde_json::from_str::<serde_json::Value>(line)
                .map_err(|e| Error::at_line(path, i + 1, e.to_string()))?;
            records.push(line.to_string());
            if records.len() as u64 == d.count {
                break;
            }
        }
        all.push(records);
    }
    assemble_sft_mixture_from(plan, &all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item() -> McfItem {
        McfItem {
            question: "Q?".into(),
            options: vec!["x".into(), "y".into(), "z".into(), "w".into()],
            gold_index: 1,
            source_doc_id: "d".into(),
        }
    }

    #[test]
    fn render_examples() {
        let spec = FormatSpec {
            index_style: IndexStyle::UpperLetters,
            separator: Separator::Paren,
            answer_style: AnswerStyle::IndexOnly,
        };
        let (p, a) = render_mcf(&item(), &spec);
        assert_eq!(p, "Q?\nA) x\nB) y\nC) z\nD) w");
        assert_eq!(a, "B");
        let spec = FormatSpec {
            index_style: IndexStyle::ArabicNumerals,
            separator: Separator::Period,
            answer_style: AnswerStyle::IndexPlusText,
        };
        assert_eq!(render_mcf(&item(), &spec).1, "2. y");
    }

    #[test]
    fn format_space_enumerates() {
        let all: HashSet<FormatSpec> = FormatSpec::all().collect();
        assert_eq!(all.len(), 18);
        for (i, f) in FormatSpec::all().enumerate() {
            assert_eq!(f.index(), i);
        }
        assert_eq!(sample_format(7, 3), sample_format(7, 3));
    }

    #[test]
    fn permutations_cover_all_orders() {
        let all: HashSet<[usize; 4]> = (0..24).map(nth_permutation).collect();
        assert_eq!(all.len(), 24);
        assert_eq!(nth_permutation(0), [0, 1, 2, 3]);
    }

    #[test]
    fn roundtrip_all_formats() {
        for spec in FormatSpec::all() {
            let (p, a) = render_mcf(&item(), &spec);
            assert_eq!(parse_rendered(&p, &a, &spec).unwrap(), 1);
        }
        let spec = FormatSpec::from_index(0);
        assert!(parse_rendered("Q?\nA. x\nB. y\nC. z\nD. w", "E", &spec).is_err());
    }

    #[test]
    fn invalid_items() {
        let mut i = item();
        i.options.pop();
        assert!(i.validate().is_err());
        let mut i = item();
        i.options[0] = "y".into();
        assert!(i.validate().is_err());
        let mut i = item();
        i.gold_index = 4;
        assert!(i.validate().is_err());
    }

    #[test]
    fn mixture_counts_and_errors() {
        let plan = MixturePlan {
            datasets: vec![
                MixtureDataset { name: "mcf".into(), path: String::new(), count: 2, language: "ru".into() },
                MixtureDataset { name: "inst".into(), path: String::new(), count: 3, language: "en".into() },
            ],
            seed: 1,
        };
        let data = vec![
            vec!["1".to_string(), "2".into(), "3".into()],
            vec!["a".to_string(), "b".into(), "c".into()],
        ];
        let (merged, report) = assemble_sft_mixture_from(&plan, &data).unwrap();
        let mut sorted = merged.clone();
        sorted.sort();
        assert_eq!(sorted, ["1", "2", "a", "b", "c"]);
        assert_eq!(report.datasets[0].fraction, 0.4);
        let short = vec![vec!["1".to_string()], data[1].clone()];
        assert!(matches!(assemble_sft_mixture_from(&plan, &short), Err(Error::Data(m)) if m.contains("mcf")));
    }
}
