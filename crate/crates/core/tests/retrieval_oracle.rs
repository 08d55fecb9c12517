mod common;

use common::{build_store, synthetic_docs, BruteForceBm25};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rws_core::corpus::{ingest_corpus, CorpusFormat};

#[test]
fn ingesting_twice_gives_identical_store() {
    let (docs, _) = synthetic_docs(100, 300, 1);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (sa, _) = build_store(a.path(), &docs);
    let (sb, _) = build_store(b.path(), &docs);
    assert_eq!(sa.len(), 100);
    assert_eq!(sa.digest().unwrap(), sb.digest().unwrap());
    assert_eq!(
        std::fs::read(a.path().join("store/index.bin")).unwrap(),
        std::fs::read(b.path().join("store/index.bin")).unwrap()
    );
}

#[test]
fn plain_dir_and_jsonl_agree_on_text() {
    let (docs, _) = synthetic_docs(5, 50, 2);
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir(&src).unwrap();
    for (i, d) in docs.iter().enumerate() {
        std::fs::write(src.join(format!("{i:02}.txt")), d).unwrap();
    }
    let (plain, report) = ingest_corpus(&src, CorpusFormat::PlainDir, &dir.path().join("p")).unwrap();
    assert_eq!(report.documents, 5);
    let (json, _) = build_store(&dir.path().join("j"), &docs);
    let texts = |s: &rws_core::DocStore| s.iter().map(|d| d.text.clone()).collect::<Vec<_>>();
    assert_eq!(texts(&plain), texts(&json));
    assert_eq!(plain.get(3).unwrap().source_id, "03.txt");
}

#[test]
fn postings_equal_brute_force_term_map() {
    let (docs, _) = synthetic_docs(300, 500, 3);
    let dir = tempfile::tempdir().unwrap();
    let (_, index) = build_store(dir.path(), &docs);
    let oracle = BruteForceBm25::new(&docs).term_postings();
    let got: std::collections::BTreeMap<String, Vec<(u32, u32)>> = index
        .terms()
        .map(|p| (p.term.clone(), p.entries.iter().map(|e| (e.doc_id, e.tf)).collect()))
        .collect();
    let mut oracle = oracle;
    for v in oracle.values_mut() {
        v.sort();
    }
    assert_eq!(got, oracle);
}

#[test]
fn top_k_equals_brute_force_ranking() {
    let (docs, words) = synthetic_docs(500, 800, 4);
    let dir = tempfile::tempdir().unwrap();
    let (_, index) = build_store(dir.path(), &docs);
    let oracle = BruteForceBm25::new(&docs);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(40);
    for _ in 0..30 {
        let n = rng.random_range(1..=6);
        let mut q: Vec<String> = (0..n).map(|_| words.choose(&mut rng).unwrap().clone()).collect();
        if rng.random_bool(0.2) {
            q.push("unseenterm".into());
        }
        let query = q.join(" ");
        for k in [1, 10, 50, 1000] {
            let got = index.retrieve_topk(&query, k);
            let want = oracle.rank(&query, k);
            assert_eq!(got.len(), want.len(), "{query} k={k}");
            for (g, (d, s)) in got.iter().zip(&want) {
                assert_eq!(g.doc_id, *d, "{query}");
                assert!((g.score - s).abs() <= 1e-9, "{query}: {} vs {s}", g.score);
            }
        }
    }
}

#[test]
fn query_without_known_terms_retrieves_nothing() {
    let (docs, _) = synthetic_docs(20, 50, 5);
    let dir = tempfile::tempdir().unwrap();
    let (_, index) = build_store(dir.path(), &docs);
    assert!(index.retrieve_topk("zzz qqq", 10).is_empty());
    assert!(index.retrieve_topk("", 10).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Replacing a filler word by another occurrence of the query term keeps
    // the length fixed and must raise that document's score.
    #[test]
    fn more_occurrences_score_higher(
        filler in proptest::collection::vec(0usize..6, 3..20),
        tf in 1usize..5,
        pos in any::<prop::sample::Index>(),
    ) {
        let vocab = ["ab", "cd", "ef", "gh", "ij", "kl"];
        let mut base: Vec<&str> = filler.iter().map(|&i| vocab[i]).collect();
        base.extend(std::iter::repeat_n("target", tf));
        let mut more = base.clone();
        let replace = pos.index(filler.len());
        more[replace] = "target";
        let docs = vec![base.join(" "), more.join(" "), "other words only".to_string()];
        let dir = tempfile::tempdir().unwrap();
        let (_, index) = build_store(dir.path(), &docs);
        let s0 = index.bm25_score(&["target"], 0).unwrap();
        let s1 = index.bm25_score(&["target"], 1).unwrap();
        prop_assert!(s1 > s0, "{s1} <= {s0}");
    }
}
