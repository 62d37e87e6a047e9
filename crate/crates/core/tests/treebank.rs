use std::collections::BTreeMap;
use std::path::PathBuf;

use mixcurate::bpe::{byte_vocab_json, BpeTokenizer, Pretokenizer};
use mixcurate::conllu::parse_conllu_str;
use mixcurate::corpus::{Tokenizer, WhitespaceTokenizer};
use mixcurate::fertility::{compute_fertility, fertility_of_sentences, format_fertility_table};
use mixcurate::Error;

fn row(id: &str, form: &str, misc: &str) -> String {
    format!("{id}\t{form}\t{form}\tX\t_\t_\t0\tdep\t_\t{misc}\n")
}

fn en_bank() -> String {
    let mut s = String::new();
    s += "# sent_id = 1\n# text = the cat sat.\n";
    s += &row("1", "the", "_");
    s += &row("2", "cat", "_");
    s += &row("3", "sat", "SpaceAfter=No");
    s += &row("4", ".", "_");
    s += "\n";
    s += &row("1", "the", "_");
    s += &row("2", "the", "_");
    s += "\n";
    s += &row("1", "a", "_");
    s += &row("2", "dog", "_");
    s += "\n";
    s
}

fn de_bank() -> String {
    let mut s = String::new();
    s += &row("1-2", "zum", "_");
    s += &row("1", "zu", "_");
    s += &row("2", "dem", "_");
    s += &row("3", "haus", "_");
    s += "\n";
    s += &row("1", "the", "_");
    s += &row("1.1", "ghost", "_");
    s += "\n";
    s
}

/// Byte alphabet plus three merges: t+h, th+e, Ġ+the.
fn three_merge_tokenizer() -> BpeTokenizer {
    let mut vocab: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&byte_vocab_json()).unwrap();
    for (i, t) in ["th", "the", "Ġthe"].iter().enumerate() {
        vocab.insert(t.to_string(), (256 + i).into());
    }
    let vocab = serde_json::to_string(&vocab).unwrap();
    BpeTokenizer::from_parts("toy", &vocab, "#version: 0.2\nt h\nth e\nĠ the\n", Pretokenizer::Whitespace)
        .unwrap()
}

#[test]
fn surfaces_and_words() {
    let en = parse_conllu_str(&en_bank(), "en").unwrap();
    assert_eq!(en.len(), 3);
    assert_eq!(en[0].surface, "the cat sat.");
    assert_eq!(en[0].words, ["the", "cat", "sat", "."]);
    let de = parse_conllu_str(&de_bank(), "de").unwrap();
    assert_eq!(de[0].surface, "zum haus");
    assert_eq!(de[0].words, ["zu", "dem", "haus"]);
    assert_eq!(de[1].words, ["the"]);
}

#[test]
fn toy_tokenizer_counts() {
    let t = three_merge_tokenizer();
    let counts: Vec<usize> = ["the cat sat.", "the the", "a dog", "zum haus", "the"]
        .iter()
        .map(|s| t.count_tokens(s).unwrap())
        .collect();
    assert_eq!(counts, [10, 2, 5, 8, 1]);
}

#[test]
fn hand_counted_fertility() {
    let mut sentences = parse_conllu_str(&en_bank(), "en").unwrap();
    sentences.extend(parse_conllu_str(&de_bank(), "de").unwrap());
    let r = fertility_of_sentences(&three_merge_tokenizer(), &sentences).unwrap();
    let en = &r.languages["en"];
    assert_eq!((en.sentences, en.words, en.tokens), (3, 8, 17));
    assert!((en.fertility - 17.0 / 8.0).abs() < 1e-12);
    let de = &r.languages["de"];
    assert_eq!((de.sentences, de.words, de.tokens), (2, 4, 9));
    assert!((r.average - (17.0 / 8.0 + 9.0 / 4.0) / 2.0).abs() < 1e-12);
    let table = format_fertility_table(&[r]);
    assert!(table.lines().next().unwrap().contains("avg"));
    assert!(table.contains("toy"));
}

#[test]
fn fertility_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let en = dir.path().join("en.conllu");
    std::fs::write(&en, en_bank()).unwrap();
    let banks: BTreeMap<String, Vec<PathBuf>> = [("en".to_string(), vec![en])].into();
    let r = compute_fertility(&WhitespaceTokenizer, &banks).unwrap();
    // whitespace counting sees "sat." as one token
    assert_eq!(r.languages["en"].tokens, 7);
}

#[test]
fn malformed_row_reports_its_line() {
    let bad = format!("{}1\tonly\tthree\n\n", row("1", "ok", "_"));
    match parse_conllu_str(&bad, "en") {
        Err(Error::DataAt { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a located data error, got {other:?}"),
    }
}
