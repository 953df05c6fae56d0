use std::collections::BTreeMap;
use std::path::PathBuf;

use structoscope::corpus::{load_corpus, CorpusFormat, Deprel, Upos};
use structoscope::features::{extract_features, Lexicons};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/conllu")
}

fn tally<'a>(tags: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    let mut out = BTreeMap::new();
    for t in tags {
        *out.entry(t).or_default() += 1;
    }
    out
}

#[test]
fn story_splits_into_two_annotated_segments() {
    let corpus = load_corpus(&fixture_dir(), CorpusFormat::ConlluDir).unwrap();
    assert_eq!(corpus.documents.len(), 1);
    let doc = &corpus.documents[0];
    assert_eq!(doc.id, "story");
    assert_eq!(doc.eval_score, 42.0);
    assert_eq!(doc.domain, "novel");
    assert_eq!(doc.genre_tags, ["drama"]);
    assert_eq!(doc.segments.len(), 2);
    assert_eq!(doc.segments.iter().map(|s| s.tokens.len()).collect::<Vec<_>>(), [14, 19]);
    assert!(doc.segments.iter().flat_map(|s| &s.tokens).all(|t| t.is_annotated()));

    let upos = |i: usize| tally(doc.segments[i].tokens.iter().map(|t| t.upos.unwrap().as_str()));
    let deprel = |i: usize| tally(doc.segments[i].tokens.iter().map(|t| t.deprel.unwrap().as_str()));
    assert_eq!(
        upos(0),
        BTreeMap::from([("ADV", 1), ("DET", 1), ("NOUN", 3), ("PRON", 1), ("PUNCT", 4), ("VERB", 4)])
    );
    assert_eq!(
        upos(1),
        BTreeMap::from([("ADV", 1), ("INTJ", 1), ("NOUN", 3), ("PRON", 3), ("PUNCT", 6), ("VERB", 5)])
    );
    assert_eq!(
        deprel(0),
        BTreeMap::from([("advmod", 1), ("det", 1), ("nsubj", 4), ("punct", 4), ("root", 4)])
    );
    assert_eq!(
        deprel(1),
        BTreeMap::from([("advmod", 1), ("nsubj", 5), ("obl", 1), ("punct", 6), ("root", 6)])
    );
}

#[test]
fn story_feature_proportions() {
    let corpus = load_corpus(&fixture_dir(), CorpusFormat::ConlluDir).unwrap();
    let lex = Lexicons::builtin();
    let seg = |i: usize| extract_features(&corpus.documents[0].segments[i], &lex);
    let noun = Upos::parse("NOUN").unwrap().index();
    let verb = Upos::parse("VERB").unwrap().index();
    let obl = Deprel::parse("obl").unwrap().index();
    assert_eq!(seg(0).pos[noun], 3.0 / 14.0);
    assert_eq!(seg(0).pos[verb], 4.0 / 14.0);
    assert_eq!(seg(1).pos[verb], 5.0 / 19.0);
    assert_eq!(seg(1).deprel[obl], 1.0 / 19.0);
    assert_eq!(seg(0).deprel[obl], 0.0);
}
