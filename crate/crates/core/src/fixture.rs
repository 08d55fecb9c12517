//! Synthetic "planted" corpora for end-to-end checks.
//!
//! Each question gets a reference answer whose shuffled paraphrase is planted
//! in one document, plus distractor sentences planted in other documents.
//! Distractors share one cue word with their question but no token with any
//! reference, so a working pipeline must label plants positive and
//! distractors negative. Everything else is filler made of pseudo-words that
//! never occur in a question.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::DocId;
use crate::datasets::{write_reference_pairs, DatasetError};
use crate::evaluator::ReferencePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureParams {
    pub questions: usize,
    pub documents: usize,
    pub distractors_per_question: usize,
    pub seed: u64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            questions: 50,
            documents: 1000,
            distractors_per_question: 10,
            seed: 7,
        }
    }
}

/// A sentence inserted at a known position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedSentence {
    pub qid: String,
    pub doc_id: DocId,
    pub sent_idx: u32,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct PlantedFixture {
    pub documents: Vec<String>,
    pub pairs: Vec<ReferencePair>,
    pub plants: Vec<PlantedSentence>,
    pub distractors: Vec<PlantedSentence>,
}

struct Words {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Words {
    const ONSETS: &'static [&'static str] = &[
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gl",
        "kr", "pl", "st", "tr", "sk",
    ];
    const VOWELS: &'static [&'static str] = &["a", "e", "i", "o", "u", "ai", "ou"];

    /// A fresh pseudo-word of 2-3 syllables, never repeated.
    fn fresh(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(Self::ONSETS.choose(&mut self.rng).unwrap());
                w.push_str(Self::VOWELS.choose(&mut self.rng).unwrap());
            }
            if self.rng.random_bool(0.5) {
                w.push(['n', 'r', 's', 'x'][self.rng.random_range(0..4)]);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn fresh_n(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.fresh()).collect()
    }
}

fn sentence(words: &[String]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(0..1) {
        let upper = first.to_uppercase();
        s.replace_range(0..1, &upper);
    }
    s.push('.');
    s
}

/// Build the fixture deterministically from `params.seed`.
pub fn planted_fixture(params: FixtureParams) -> PlantedFixture {
    let needed = params.questions * (1 + params.distractors_per_question);
    assert!(
        needed <= params.documents,
        "{needed} planted sentences need at least as many documents"
    );
    let mut words = Words {
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        used: ["which".to_string()].into_iter().collect(),
    };
    let filler = words.fresh_n(400);
    let distractor_vocab = words.fresh_n(200);

    // doc -> sentences
    let mut docs: Vec<Vec<String>> = (0..params.documents)
        .map(|_| {
            let n = words.rng.random_range(4..=12);
            (0..n)
                .map(|_| {
                    let len = words.rng.random_range(6..=12);
                    let ws: Vec<String> = (0..len)
                        .map(|_| filler.choose(&mut words.rng).unwrap().clone())
                        .collect();
                    sentence(&ws)
                })
                .collect()
        })
        .collect();

    let mut slots: Vec<usize> = (0..params.documents).collect();
    slots.shuffle(&mut words.rng);
    let mut slots = slots.into_iter();

    let mut pairs = Vec::new();
    let mut planned: Vec<(String, usize, String, bool)> = Vec::new();
    for q in 0..params.questions {
        let qid = format!("q{q:03}");
        let (n_topic, n_answer) = (words.rng.random_range(3..=5), words.rng.random_range(1..=3));
        let topic = words.fresh_n(n_topic);
        let answer = words.fresh_n(n_answer);
        let cue = words.fresh();

        let mut question = vec!["which".to_string()];
        question.extend(topic.iter().cloned());
        question.push(cue.clone());
        let mut reference = topic.clone();
        reference.insert(1, "which".to_string());
        reference.extend(answer.iter().cloned());

        let mut paraphrase = reference.clone();
        while paraphrase == reference {
            paraphrase.shuffle(&mut words.rng);
        }
        planned.push((qid.clone(), slots.next().unwrap(), sentence(&paraphrase), true));

        for _ in 0..params.distractors_per_question {
            let len = words.rng.random_range(5..=9);
            let mut ws: Vec<String> = (0..len)
                .map(|_| distractor_vocab.choose(&mut words.rng).unwrap().clone())
                .collect();
            ws.push(cue.clone());
            ws.shuffle(&mut words.rng);
            planned.push((qid.clone(), slots.next().unwrap(), sentence(&ws), false));
        }

        let mut q_text = sentence(&question);
        q_text.pop();
        q_text.push('?');
        pairs.push(ReferencePair {
            qid,
            question: q_text,
            reference: sentence(&reference),
        });
    }

    let mut plants = Vec::new();
    let mut distractors = Vec::new();
    for (qid, doc, text, is_plant) in planned {
        let at = words.rng.random_range(0..=docs[doc].len());
        docs[doc].insert(at, text.clone());
        let planted = PlantedSentence {
            qid,
            doc_id: doc as DocId,
            sent_idx: at as u32,
            text,
        };
        if is_plant {
            plants.push(planted);
        } else {
            distractors.push(planted);
        }
    }

    PlantedFixture {
        documents: docs.into_iter().map(|s| s.join(" ")).collect(),
        pairs,
        plants,
        distractors,
    }
}

impl PlantedFixture {
    /// Corpus as jsonl (`{"text": ..., "url": "fixture://<n>"}`).
    pub fn write_corpus_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (i, text) in self.documents.iter().enumerate() {
            let line = serde_json::json!({ "text": text, "url": format!("fixture://{i}") });
            writeln!(w, "{line}")?;
        }
        w.flush()
    }

    pub fn write_pairs(&self, path: &Path) -> Result<usize, DatasetError> {
        write_reference_pairs(&self.pairs, path)
    }

    /// Write `corpus.jsonl`, `pairs.tsv`, `plants.tsv` and `distractors.tsv`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_corpus_jsonl(&dir.join("corpus.jsonl"))?;
        self.write_pairs(&dir.join("pairs.tsv"))
            .map_err(std::io::Error::other)?;
        for (name, list) in [("plants.tsv", &self.plants), ("distractors.tsv", &self.distractors)] {
            let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
            for p in list {
                writeln!(w, "{}\t{}\t{}\t{}", p.qid, p.doc_id, p.sent_idx, p.text)?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{normalize_text, split_sentences};
    use crate::index::tokenize;

    #[test]
    fn deterministic_and_positioned() {
        let a = planted_fixture(FixtureParams::default());
        let b = planted_fixture(FixtureParams::default());
        assert_eq!(a.documents, b.documents);
        assert_eq!(a.documents.len(), 1000);
        assert_eq!(a.pairs.len(), 50);
        assert_eq!(a.plants.len(), 50);
        assert_eq!(a.distractors.len(), 500);
        for p in a.plants.iter().chain(&a.distractors) {
            let doc = normalize_text(&a.documents[p.doc_id as usize]);
            let sents = split_sentences(&doc);
            assert_eq!(sents[p.sent_idx as usize], p.text);
        }
    }

    #[test]
    fn distractors_are_token_disjoint_from_references() {
        let f = planted_fixture(FixtureParams::default());
        let refs: HashSet<String> = f.pairs.iter().flat_map(|p| tokenize(&p.reference)).collect();
        for d in &f.distractors {
            assert!(tokenize(&d.text).iter().all(|t| !refs.contains(t)));
        }
    }
}
