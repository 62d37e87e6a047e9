//! Long-context annealing data: document selection, sequence packing and the
//! RoPE wavelength coverage check.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Keeps documents whose token count reaches `min_doc_tokens`, in order.
/// Documents without a token count are treated as having zero tokens.
pub fn select_long_documents<I>(docs: I, min_doc_tokens: u64) -> impl Iterator<Item = Document>
where
    I: IntoIterator<Item = Document>,
{
    docs.into_iter()
        .filter(move |d| d.token_count.unwrap_or(0) >= min_doc_tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FracMode {
    /// Fraction of output sequences that are exactly max_length.
    #[default]
    Sequences,
    /// Fraction of output tokens that sit in max_length sequences.
    Tokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackingConfig {
    pub max_length: usize,
    pub frac_at_max: f64,
    pub min_doc_tokens: u64,
    /// Token placed between documents in a packed sequence; `None` packs
    /// without a separator.
    pub separator: Option<u32>,
    pub seed: u64,
    /// Shuffle document order with `seed` before packing.
    pub shuffle: bool,
    pub frac_mode: FracMode,
    /// Pack several documents into each shorter sequence instead of one.
    pub pack_short: bool,
}

impl Default for PackingConfig {
    fn default() -> Self {
        PackingConfig {
            max_length: 16_384,
            frac_at_max: 0.30,
            min_doc_tokens: 2_048,
            separator: Some(128_001),
            seed: 0,
            shuffle: false,
            frac_mode: FracMode::Sequences,
            pack_short: false,
        }
    }
}

impl PackingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_length == 0 {
            return Err(Error::config("max_length must be positive"));
        }
        if !(0.0..=1.0).contains(&self.frac_at_max) {
            return Err(Error::config(format!(
                "frac_at_max must be in [0, 1], got {}",
                self.frac_at_max
            )));
        }
        Ok(())
    }

    fn sep_width(&self) -> usize {
        usize::from(self.separator.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub id: String,
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub doc_id: String,
    /// Token offsets into the source document.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedSequence {
    pub tokens: Vec<u32>,
    pub spans: Vec<Span>,
    pub at_max: bool,
}

struct Unit<'a> {
    doc: &'a TokenizedDocument,
    start: usize,
    end: usize,
}

impl Unit<'_> {
    fn len(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Default)]
struct Builder {
    tokens: Vec<u32>,
    spans: Vec<Span>,
}

impl Builder {
    fn push(&mut self, unit: &Unit, upto: usize, sep: Option<u32>) {
        if !self.spans.is_empty() {
            if let Some(s) = sep {
                self.tokens.push(s);
            }
        }
        self.tokens.extend_from_slice(&unit.doc.tokens[unit.start..upto]);
        self.spans.push(Span {
            doc_id: unit.doc.id.clone(),
            start: unit.start,
            end: upto,
        });
    }

    fn finish(self, at_max: bool) -> PackedSequence {
        PackedSequence {
            tokens: self.tokens,
            spans: self.spans,
            at_max,
        }
    }
}

/// Packs documents into sequences of at most `max_length` tokens.
///
/// Documents longer than `max_length` are first cut into `max_length`
/// pieces. Sequence k is a max-length sequence iff fewer than
/// ⌈frac·(k+1)⌉ of the first k were (by sequence count), so after N
/// sequences exactly ⌈frac·N⌉ are at maximum length, except that a final
/// max sequence may fall short when the input runs out, and a single unit
/// (or packed run) of exactly `max_length` tokens counts as one even when
/// it was not designated so. Max sequences
/// concatenate units with separators and carry the cut-off remainder of the
/// last unit into the next sequence; the others hold a single unit (or, with
/// `pack_short`, as many whole units as fit).
pub fn pack_sequences(docs: &[TokenizedDocument], cfg: &PackingConfig) -> Result<Vec<PackedSequence>> {
    cfg.validate()?;
    let l = cfg.max_length;
    let sep_w = cfg.sep_width();
    let mut order: Vec<&TokenizedDocument> = docs.iter().filter(|d| !d.tokens.is_empty()).collect();
    if cfg.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    }
    let mut units: std::collections::VecDeque<Unit> = order
        .into_iter()
        .flat_map(|d| {
            (0..d.tokens.len()).step_by(l).map(move |s| Unit {
                doc: d,
                start: s,
                end: (s + l).min(d.tokens.len()),
            })
        })
        .collect();

    let mut out = Vec::new();
    let (mut n_max, mut tok_max, mut tok_total) = (0usize, 0usize, 0usize);
    while let Some(first) = units.pop_front() {
        let k = out.len();
        let want_max = match cfg.frac_mode {
            FracMode::Sequences => (n_max as f64) < (cfg.frac_at_max * (k + 1) as f64).ceil(),
            FracMode::Tokens => cfg.frac_at_max > 0.0 && (tok_max as f64) < cfg.frac_at_max * (tok_total + l) as f64,
        };
        let mut b = Builder::default();
        let seq = if want_max {
            let mut next = Some(first);
            while let Some(unit) = next.take() {
                let used = b.tokens.len();
                let sep = if b.spans.is_empty() { 0 } else { sep_w };
                let room = l - used;
                if room <= sep {
                    // only the separator fits: close the sequence at exactly l
                    if room == sep && sep > 0 {
                        b.tokens.push(cfg.separator.expect("sep width 1"));
                    }
                    units.push_front(unit);
                    break;
                }
                let take = unit.len().min(room - sep);
                b.push(&unit, unit.start + take, cfg.separator);
                if take < unit.len() {
                    units.push_front(Unit {
                        doc: unit.doc,
                        start: unit.start + take,
                        end: unit.end,
                    });
                    break;
                }
                if b.tokens.len() < l {
                    next = units.pop_front();
                }
            }
            let full = b.tokens.len() == l;
            b.finish(full)
        } else {
            b.push(&first, first.end, cfg.separator);
            if cfg.pack_short {
                while let Some(unit) = units.front() {
                    if b.tokens.len() + sep_w + unit.len() > l {
                        break;
                    }
                    let unit = units.pop_front().expect("front exists");
                    b.push(&unit, unit.end, cfg.separator);
                }
            }
            let full = b.tokens.len() == l;
            b.finish(full)
        };
        if seq.at_max {
            n_max += 1;
            tok_max += seq.tokens.len();
        }
        tok_total += seq.tokens.len();
        out.push(seq);
    }
    Ok(out)
}

const INDEX_MAGIC: &[u8; 8] = b"MXPKIDX1";

/// Writes `<stem>.bin` (all token ids as little-endian u32, back to back)
/// and `<stem>.idx`: magic, u64 sequence count, then per sequence a u64
/// token offset, a u32 length and a u8 max-length flag, all little-endian.
pub fn write_packed_binary(seqs: &[PackedSequence], bin: &Path, idx: &Path) -> Result<()> {
    let create = |p: &Path| -> Result<BufWriter<File>> {
        if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?))
    };
    let mut tokens = create(bin)?;
    let mut index = create(idx)?;
    let io_bin = |e| Error::io(bin, e);
    let io_idx = |e| Error::io(idx, e);
    index.write_all(INDEX_MAGIC).map_err(io_idx)?;
    index.write_all(&(seqs.len() as u64).to_le_bytes()).map_err(io_idx)?;
    let mut offset = 0u64;
    for s in seqs {
        for t in &s.tokens {
            tokens.write_all(&t.to_le_bytes()).map_err(io_bin)?;
        }
        index.write_all(&offset.to_le_bytes()).map_err(io_idx)?;
        index.write_all(&(s.tokens.len() as u32).to_le_bytes()).map_err(io_idx)?;
        index.write_all(&[u8::from(s.at_max)]).map_err(io_idx)?;
        offset += s.tokens.len() as u64;
    }
    tokens.flush().map_err(io_bin)?;
    index.flush().map_err(io_idx)
}

/// Reads back (offset, length, at_max) entries of an index sidecar.
pub fn read_packed_index(idx: &Path) -> Result<Vec<(u64, u32, bool)>> {
    let bytes = std::fs::read(idx).map_err(|e| Error::io(idx, e))?;
    if bytes.len() < 16 || &bytes[..8] != INDEX_MAGIC {
        return Err(Error::data(format!("{}: not a packed index", idx.display())));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != n * 13 {
        return Err(Error::data(format!("{}: truncated index", idx.display())));
    }
    Ok(body
        .chunks_exact(13)
        .map(|c| {
            (
                u64::from_le_bytes(c[..8].try_into().unwrap()),
                u32::from_le_bytes(c[8..12].try_into().unwrap()),
                c[12] != 0,
            )
        })
        .collect())
}

/// λ_i = 2π·b^(2i/d) for i in 0..d/2.
pub fn rope_wavelengths<T: Scalar>(base: T, head_dim: usize) -> Result<Vec<T>> {
    if !(base > T::one()) || !base.is_finite() {
        return Err(Error::config(format!("RoPE base must exceed 1, got {base}")));
    }
    if head_dim == 0 || head_dim % 2 != 0 {
        return Err(Error::config(format!("head_dim must be even and positive, got {head_dim}")));
    }
    let two_pi = T::lit(std::f64::consts::TAU);
    let ln_b = base.ln();
    let d = T::lit(head_dim as f64);
    Ok((0..head_dim / 2)
        .map(|i| two_pi * (T::lit(2.0 * i as f64) / d * ln_b).exp())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub base: f64,
    pub head_dim: usize,
    pub target_context: u64,
    pub lambda_max: f64,
    pub ratio: f64,
    pub covered: bool,
}

/// Whether the longest RoPE wavelength spans the target context.
pub fn check_context_coverage(base: f64, head_dim: usize, target_context: u64) -> Result<CoverageReport> {
    if target_context == 0 {
        return Err(Error::config("target context must be positive"));
    }
    let lambda_max = *rope_wavelengths(base, head_dim)?.last().expect("d/2 >= 1");
    Ok(CoverageReport {
        base,
        head_dim,
        target_context,
        lambda_max,
        ratio: lambda_max / target_context as f64,
        covered: lambda_max >= target_context as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, n: usize) -> TokenizedDocument {
        TokenizedDocument {
            id: id.into(),
            tokens: (0..n as u32).collect(),
        }
    }

    fn cfg(l: usize, frac: f64, sep: Option<u32>) -> PackingConfig {
        PackingConfig {
            max_length: l,
            frac_at_max: frac,
            separator: sep,
            ..PackingConfig::default()
        }
    }

    #[test]
    fn thirty_percent_at_max() {
        let docs: Vec<_> = (0..100).map(|i| doc(&format!("d{i}"), 1000)).collect();
        let seqs = pack_sequences(&docs, &cfg(4000, 0.3, None)).unwrap();
        let at_max = seqs.iter().filter(|s| s.tokens.len() == 4000).count();
        let want = (0.3 * seqs.len() as f64).ceil() as usize;
        assert!(at_max.abs_diff(want) <= 1, "{at_max} vs {want} of {}", seqs.len());
        assert!(seqs.iter().all(|s| s.tokens.len() <= 4000));
        let total: usize = seqs.iter().map(|s| s.tokens.len()).sum();
        assert_eq!(total, 100_000);
    }

    #[test]
    fn zero_fraction_is_one_unit_per_sequence() {
        let docs = vec![doc("a", 10), doc("b", 25)];
        let seqs = pack_sequences(&docs, &cfg(10, 0.0, Some(9))).unwrap();
        let lens: Vec<usize> = seqs.iter().map(|s| s.tokens.len()).collect();
        assert_eq!(lens, [10, 10, 10, 5]);
        assert!(seqs.iter().all(|s| s.spans.len() == 1));
    }

    #[test]
    fn separators_between_spans_and_exact_length() {
        let docs = vec![doc("a", 3), doc("b", 3), doc("c", 3)];
        let seqs = pack_sequences(&docs, &cfg(5, 1.0, Some(99))).unwrap();
        assert_eq!(seqs[0].tokens, [0, 1, 2, 99, 0]);
        assert_eq!(seqs[0].spans[1], Span { doc_id: "b".into(), start: 0, end: 1 });
        assert_eq!(seqs[1].tokens, [1, 2, 99, 0, 1]);
        assert!(seqs.iter().all(|s| s.tokens.len() <= 5));
    }

    #[test]
    fn select_threshold() {
        let mut a = Document::new("a", "x", "en", "s");
        a.token_count = Some(10);
        let mut b = Document::new("b", "y", "en", "s");
        b.token_count = Some(1);
        let kept: Vec<_> = select_long_documents(vec![a.clone(), b.clone()], 0).collect();
        assert_eq!(kept.len(), 2);
        let kept: Vec<_> = select_long_documents(vec![a, b], 5).map(|d| d.id).collect();
        assert_eq!(kept, ["a"]);
    }

    #[test]
    fn rope_basics() {
        let w = rope_wavelengths(10_000.0f64, 128).unwrap();
        assert_eq!(w.len(), 64);
        assert!((w[0] - std::f64::consts::TAU).abs() < 1e-12);
        assert!(w.windows(2).all(|p| p[1] > p[0]));
        assert!(rope_wavelengths(1.0f64, 128).is_err());
        assert!(rope_wavelengths(10.0f32, 3).is_err());
        assert!(!check_context_coverage(2.0, 2, 1_000_000_000).unwrap().covered);
    }
}
