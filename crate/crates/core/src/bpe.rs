//! Byte-level BPE runtime (vocab.json + merges.txt).

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::Tokenizer;
use crate::error::{Error, Result};

const GPT2_PATTERN: &str =
    r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";
const LLAMA3_PATTERN: &str = r"(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\r\n\p{L}\p{N}]?\p{L}+|\p{N}{1,3}| ?[^\s\p{L}\p{N}]+[\r\n]*|\s*[\r\n]+|\s+(?!\S)|\s+";
const WHITESPACE_PATTERN: &str = r"\s*\S+|\s+";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pretokenizer {
    #[default]
    Gpt2,
    Llama3,
    Whitespace,
}

impl Pretokenizer {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gpt2" => Ok(Pretokenizer::Gpt2),
            "llama3" => Ok(Pretokenizer::Llama3),
            "whitespace" => Ok(Pretokenizer::Whitespace),
            other => Err(Error::config(format!(
                "unknown pretokenizer {other:?} (expected gpt2, llama3 or whitespace)"
            ))),
        }
    }

    fn regex(self) -> &'static fancy_regex::Regex {
        static CELLS: [OnceLock<fancy_regex::Regex>; 3] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        let (i, pattern) = match self {
            Pretokenizer::Gpt2 => (0, GPT2_PATTERN),
            Pretokenizer::Llama3 => (1, LLAMA3_PATTERN),
            Pretokenizer::Whitespace => (2, WHITESPACE_PATTERN),
        };
        CELLS[i].get_or_init(|| fancy_regex::Regex::new(pattern).expect("valid pattern"))
    }

    /// Splits text into pieces; merges never cross piece boundaries.
    pub fn split<'t>(self, text: &'t str) -> Vec<&'t str> {
        let mut out = Vec::new();
        let mut last = 0;
        for m in self.regex().find_iter(text) {
            // backtrack limit errors cannot occur for these patterns on valid UTF-8
            let m = m.expect("pretokenizer regex");
            if m.start() > last {
                out.push(&text[last..m.start()]);
            }
            out.push(m.as_str());
            last = m.end();
        }
        if last < text.len() {
            out.push(&text[last..]);
        }
        out
    }
}

/// The GPT-2 reversible byte → printable character table.
pub fn byte_to_unicode() -> &'static [char; 256] {
    static TABLE: OnceLock<[char; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let printable = |b: u32| (33..=126).contains(&b) || (161..=172).contains(&b) || (174..=255).contains(&b);
        let mut table = ['\0'; 256];
        let mut n = 0;
        for b in 0..256u32 {
            table[b as usize] = if printable(b) {
                char::from_u32(b).unwrap()
            } else {
                n += 1;
                char::from_u32(255 + n).unwrap()
            };
        }
        table
    })
}

fn unicode_to_byte() -> &'static HashMap<char, u8> {
    static TABLE: OnceLock<HashMap<char, u8>> = OnceLock::new();
    TABLE.get_or_init(|| {
        byte_to_unicode()
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, b as u8))
            .collect()
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TokenizerConfig {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    pretokenizer: Pretokenizer,
}

#[derive(Debug, Clone)]
pub struct BpeTokenizer {
    id: String,
    pretokenizer: Pretokenizer,
    tokens: Vec<Vec<u8>>,
    byte_ids: [u32; 256],
    /// (left, right) → (rank, merged id)
    merges: HashMap<(u32, u32), (u32, u32)>,
}

fn parse_vocab(json: &str) -> Result<Vec<String>> {
    let map: HashMap<String, u32> =
        serde_json::from_str(json).map_err(|e| Error::data(format!("vocab: {e}")))?;
    let mut tokens = vec![None; map.len()];
    for (tok, id) in map {
        let slot = tokens
            .get_mut(id as usize)
            .ok_or_else(|| Error::data(format!("vocab ids are not dense: {id}")))?;
        if slot.is_some() {
            return Err(Error::data(format!("vocab id {id} assigned twice")));
        }
        *slot = Some(tok);
    }
    Ok(tokens.into_iter().map(|t| t.expect("dense ids")).collect())
}

impl BpeTokenizer {
    /// Builds a tokenizer from vocab JSON text and merges text. Merge ranks
    /// are line positions (an optional leading `#` header line is skipped).
    pub fn from_parts(
        id: impl Into<String>,
        vocab_json: &str,
        merges_txt: &str,
        pretokenizer: Pretokenizer,
    ) -> Result<Self> {
        let strings = parse_vocab(vocab_json)?;
        let lookup: HashMap<&str, u32> = strings
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as u32))
            .collect();
        let rev = unicode_to_byte();
        let tokens: Vec<Vec<u8>> = strings
            .iter()
            .map(|s| {
                s.chars()
                    .map(|c| {
                        rev.get(&c).copied().ok_or_else(|| {
                            Error::data(format!("vocab token {s:?} is outside the byte alphabet"))
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let table = byte_to_unicode();
        let mut byte_ids = [0u32; 256];
        for (b, c) in table.iter().enumerate() {
            byte_ids[b] = *lookup.get(c.to_string().as_str()).ok_or_else(|| {
                Error::data(format!("vocab lacks the single-byte token for 0x{b:02x}"))
            })?;
        }
        let mut merges = HashMap::new();
        let mut rank = 0u32;
        for (i, line) in merges_txt.lines().enumerate() {
            if (i == 0 && line.starts_with('#')) || line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::data(format!("merges line {}: expected two symbols", i + 1)));
            };
            let resolve = |s: &str| {
                lookup.get(s).copied().ok_or_else(|| {
                    Error::data(format!("merges line {}: symbol {s:?} not in vocab", i + 1))
                })
            };
            let (left, right) = (resolve(a)?, resolve(b)?);
            let merged = resolve(&format!("{a}{b}"))?;
            if merges.insert((left, right), (rank, merged)).is_some() {
                return Err(Error::data(format!("merges line {}: duplicate merge {a} {b}", i + 1)));
            }
            rank += 1;
        }
        Ok(BpeTokenizer {
            id: id.into(),
            pretokenizer,
            tokens,
            byte_ids,
            merges,
        })
    }

    pub fn load(
        id: impl Into<String>,
        vocab: impl AsRef<Path>,
        merges: impl AsRef<Path>,
        pretokenizer: Pretokenizer,
    ) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        Self::from_parts(id, &read(vocab.as_ref())?, &read(merges.as_ref())?, pretokenizer)
    }

    /// Loads `vocab.json` and `merges.txt` from a directory, plus an optional
    /// `config.json` naming the id and pretokenizer.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let cfg_path: PathBuf = dir.join("config.json");
        let cfg = if cfg_path.exists() {
            crate::corpus::read_json::<TokenizerConfig>(&cfg_path)?
        } else {
            TokenizerConfig {
                id: None,
                pretokenizer: Pretokenizer::default(),
            }
        };
        let id = cfg.id.unwrap_or_else(|| {
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "bpe".to_string())
        });
        Self::load(id, dir.join("vocab.json"), dir.join("merges.txt"), cfg.pretokenizer)
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn merge_count(&self) -> usize {
        self.merges.len()
    }

    pub fn pretokenizer(&self) -> Pretokenizer {
        self.pretokenizer
    }

    fn encode_piece(&self, piece: &[u8], out: &mut Vec<u32>) {
        let mut ids: Vec<u32> = piece.iter().map(|&b| self.byte_ids[b as usize]).collect();
        while ids.len() > 1 {
            let best = ids
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.merges.get(&(w[0], w[1])).map(|&(r, m)| (r, i, m)))
                .min();
            let Some((_, i, merged)) = best else { break };
            ids[i] = merged;
            ids.remove(i + 1);
        }
        out.extend_from_slice(&ids);
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for piece in self.pretokenizer.split(text) {
            self.encode_piece(piece.as_bytes(), &mut out);
        }
        out
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            let tok = self
                .tokens
                .get(id as usize)
                .ok_or_else(|| Error::data(format!("token id {id} out of range")))?;
            out.extend_from_slice(tok);
        }
        Ok(out)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        String::from_utf8(self.decode_bytes(ids)?)
            .map_err(|_| Error::data("decoded bytes are not valid UTF-8"))
    }
}

impl Tokenizer for BpeTokenizer {
    fn id(&self) -> &str {
        &self.id
    }

    fn count_tokens(&self, text: &str) -> Result<usize> {
        Ok(self.encode(text).len())
    }
}

/// vocab.json text for the 256 byte tokens, ids 0..256 in byte order.
pub fn byte_vocab_json() -> String {
    let map: serde_json::Map<String, serde_json::Value> = byte_to_unicode()
        .iter()
        .enumerate()
        .map(|(b, c)| (c.to_string(), serde_json::Value::from(b)))
        .collect();
    serde_json::Value::Object(map).to_string()
}

/// A byte-level tokenizer with no merges: one token per UTF-8 byte.
pub fn byte_level_tokenizer() -> BpeTokenizer {
    BpeTokenizer::from_parts("bytes", &byte_vocab_json(), "", Pretokenizer::Gpt2)
        .expect("byte vocab is complete")
}

/// Resolves a tokenizer spec: `bytes` or a vocab/merges directory.
pub fn load_bpe_spec(spec: &str) -> Result<BpeTokenizer> {
    match spec {
        "bytes" => Ok(byte_level_tokenizer()),
        dir => BpeTokenizer::load_dir(dir),
    }
}

/// Like [`load_bpe_spec`], also accepting `whitespace`.
pub fn load_tokenizer(spec: &str) -> Result<Box<dyn Tokenizer>> {
    match spec {
        "whitespace" => Ok(Box::new(crate::corpus::WhitespaceTokenizer)),
        other => Ok(Box::new(load_bpe_spec(other)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn byte_level(merges: &str, extra: &[&str]) -> BpeTokenizer {
        let mut v: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&byte_vocab_json()).unwrap();
        for (i, t) in extra.iter().enumerate() {
            v.insert(t.to_string(), (256 + i).into());
        }
        BpeTokenizer::from_parts("t", &serde_json::Value::Object(v).to_string(), merges, Pretokenizer::Gpt2)
            .unwrap()
    }

    #[test]
    fn byte_table_matches_gpt2() {
        let t = byte_to_unicode();
        assert_eq!(t[b' ' as usize], 'Ġ');
        assert_eq!(t[b'\n' as usize], 'Ċ');
        assert_eq!(t[b'a' as usize], 'a');
        assert_eq!(unicode_to_byte().len(), 256);
    }

    #[test]
    fn byte_only_tokenizer() {
        let t = byte_level("#version: 0.2\n", &[]);
        assert!(t.encode("").is_empty());
        assert_eq!(t.encode("ab").len(), 2);
        assert_eq!(t.decode(&t.encode("héllo ✓")).unwrap(), "héllo ✓");
    }

    #[test]
    fn merges_apply_by_rank() {
        let t = byte_level("b c\na b\nab c\n", &["bc", "ab", "abc"]);
        // "b c" outranks "a b", so abc → a + bc, and "a bc" is not a merge
        assert_eq!(t.encode("abc").len(), 2);
        let t = byte_level("a b\nab c\nb c\n", &["ab", "abc", "bc"]);
        assert_eq!(t.encode("abc"), vec![257]);
    }

    #[test]
    fn invalid_merges_rejected() {
        let v = byte_vocab_json();
        assert!(BpeTokenizer::from_parts("t", &v, "a b\n", Pretokenizer::Gpt2).is_err());
        let mut m: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&v).unwrap();
        m.insert("ab".into(), 256.into());
        let v = serde_json::Value::Object(m).to_string();
        assert!(BpeTokenizer::from_parts("t", &v, "a b\na b\n", Pretokenizer::Gpt2).is_err());
        assert!(BpeTokenizer::from_parts("t", &v, "a b\n", Pretokenizer::Gpt2).is_ok());
        assert!(BpeTokenizer::from_parts("t", r#"{"a":0}"#, "", Pretokenizer::Gpt2).is_err());
    }

    #[test]
    fn pretokenizer_pieces() {
        assert_eq!(Pretokenizer::Gpt2.split("Hello world's  x"), ["Hello", " world", "'s", " ", " x"]);
        assert_eq!(Pretokenizer::Llama3.split("abc 12345"), ["abc", " ", "123", "45"]);
        assert_eq!(Pretokenizer::Whitespace.split("a  b "), ["a", "  b", " "]);
        assert!(Pretokenizer::parse("bert").is_err());
    }
}
