use std::path::{Path, PathBuf};

use proptest::prelude::*;
use wnduma_core::data::Instance;
use wnduma_core::wordnet::{enrich_instance, parse_index_line, split_gloss, PosTag, WordNet, WordNetError};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/wordnet")
}

fn load() -> WordNet {
    WordNet::load(&fixture()).expect("fixture parses")
}

#[test]
fn fixture_offsets_resolve_and_glosses_are_nonempty() {
    let wn = load();
    for (pos, entries) in &wn.index {
        for e in entries {
            assert!(!e.synset_offsets.is_empty(), "{}", e.lemma);
            for off in &e.synset_offsets {
                let s = wn.synset(*pos, *off).expect("offset is a data key");
                assert_eq!(s.offset, *off);
                assert!(!s.gloss.is_empty());
            }
        }
    }
}

#[test]
fn bank_noun_senses_in_order() {
    let wn = load();
    let g = wn.lookup.glosses("bank", PosTag::Noun);
    assert_eq!(g.len(), 10);
    assert_eq!(g[0], "sloping land (especially the slope beside a body of water)");
    assert_eq!(g[1], "a financial institution that accepts deposits and channels the money into lending activities");
    assert!(wn.lookup.glosses("bank", PosTag::Verb).len() >= 7);
}

#[test]
fn morphology_and_exceptions() {
    let wn = load();
    let l = &wn.lookup;
    assert_eq!(l.morphy("banks", PosTag::Noun)[0], "bank");
    assert_eq!(l.morphy("mice", PosTag::Noun), ["mouse"]);
    assert_eq!(l.morphy("children", PosTag::Noun), ["child"]);
    assert_eq!(l.morphy("went", PosTag::Verb), ["go"]);
    assert_eq!(l.morphy("ran", PosTag::Verb), ["run"]);
    assert_eq!(l.morphy("banked", PosTag::Verb), ["bank"]);
    assert_eq!(l.morphy("better", PosTag::Adjective), ["good", "well"]);
    assert_eq!(l.morphy("happier", PosTag::Adjective), ["happy"]);
    assert!(l.morphy("zorvex", PosTag::Noun).is_empty());
    assert_eq!(l.senses("mice", PosTag::Noun), l.glosses("mouse", PosTag::Noun));
}

#[test]
fn loading_twice_is_identical() {
    let a = load();
    let b = load();
    assert_eq!(a.index, b.index);
    assert_eq!(a.data, b.data);
    let la: Vec<_> = a.lookup.iter().collect();
    let lb: Vec<_> = b.lookup.iter().collect();
    assert_eq!(la, lb);
}

#[test]
fn enrichment_picks_pos_from_context() {
    let wn = load();
    let inst = Instance {
        id: "x".into(),
        passage: "The river rose.".into(),
        question: "They walked along the @placeholder of the river .".into(),
        candidates: ["bank", "run", "quickly", "mouse", "zorvex"].map(String::from).to_vec(),
        label: Some(0),
        definitions: None,
        pos: None,
    };
    let e = enrich_instance(&inst, &wn.lookup, 3, 60);
    let defs = e.definitions.unwrap();
    assert!(defs[0].starts_with("sloping land"));
    assert!(defs[0].matches("; ").count() >= 2);
    assert_eq!(e.pos.unwrap(), vec![PosTag::Noun; 5]);
    assert!(defs[2].is_empty(), "quickly has no noun senses: {:?}", defs[2]);
    assert!(defs[4].is_empty());

    let verb = Instance {
        question: "They had to @placeholder home .".into(),
        ..inst
    };
    let e = enrich_instance(&verb, &wn.lookup, 1, 60);
    assert_eq!(e.pos.as_ref().unwrap()[1], PosTag::Verb);
    assert_eq!(e.definitions.unwrap()[1], wn.lookup.glosses("run", PosTag::Verb)[0]);
}

#[test]
fn missing_directory_is_io_error() {
    let err = WordNet::load(Path::new("/nonexistent/wordnet")).unwrap_err();
    assert!(matches!(err, WordNetError::Io { .. }), "{err}");
}

#[test]
fn truncated_data_line_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    for f in std::fs::read_dir(fixture()).unwrap() {
        let f = f.unwrap().path();
        std::fs::copy(&f, dir.path().join(f.file_name().unwrap())).unwrap();
    }
    let data = dir.path().join("data.adv");
    let text = std::fs::read_to_string(&data).unwrap();
    let broken: String = text
        .lines()
        .map(|l| if l.starts_with("  ") { l.to_string() } else { l.split('|').next().unwrap().to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&data, broken).unwrap();
    let err = WordNet::load(dir.path()).unwrap_err();
    match err {
        WordNetError::Parse { path, line, .. } => {
            assert!(path.ends_with("data.adv"));
            assert!(line > 29);
        }
        other => panic!("unexpected {other}"),
    }
}

proptest! {
    #[test]
    fn index_line_offsets_roundtrip(
        lemma in "[a-z][a-z_]{0,12}",
        offsets in prop::collection::vec(0u64..99_999_999, 1..6),
        ptrs in prop::collection::vec(prop::sample::select(vec!["!", "@", "~", "+", ";c"]), 0..4),
    ) {
        let line = format!(
            "{lemma} n {} {} {} {} 0 {}",
            offsets.len(),
            ptrs.len(),
            ptrs.join(" "),
            offsets.len(),
            offsets.iter().map(|o| format!("{o:08}")).collect::<Vec<_>>().join(" "),
        );
        let line = line.split_whitespace().collect::<Vec<_>>().join(" ");
        let e = parse_index_line(&line, Path::new("index.noun"), 1).unwrap();
        prop_assert_eq!(e.lemma, lemma);
        prop_assert_eq!(e.synset_offsets, offsets);
    }

    #[test]
    fn gloss_split_keeps_definition_before_examples(
        def in "[a-z][a-z ,()]{0,30}[a-z]",
        examples in prop::collection::vec("[a-z][a-z ]{0,15}[a-z]", 0..3),
    ) {
        let mut raw = def.clone();
        for ex in &examples {
            raw.push_str(&format!("; \"{ex}\""));
        }
        let (d, ex) = split_gloss(&format!("{raw}  "));
        prop_assert_eq!(d, def.trim().to_string());
        prop_assert_eq!(ex, examples);
    }
}
