//! Deterministic synthetic task fixture.
//!
//! Generates a labeled bank and query set where each input belongs to one of
//! ten operation classes. Questions are built to confuse raw-text retrieval
//! (a shared stub plus entity nouns tied to the database, not the class)
//! while the class is perfectly recoverable from the skill description, and
//! targets compose a fixed keyword algebra: one base item, two class items,
//! one db item, so sketch overlaps are exact small integers with a known
//! ordering.
//!
//! Layout is chosen for exact arithmetic in tests: bank index i holds class
//! i % 10, member m = i / 10, database m % 10. The four best same-class
//! examples by index therefore sit in four different databases, while the
//! sketch oracle's top four concentrate on three. Each database owns a
//! three-entity cluster and every input draws two of its three entities from
//! its database's cluster, so raw question similarity tracks the database
//! and says nothing about the class.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backend::MockCompletion;
use crate::bank::{save_bank, Example, ExampleBank};
use crate::error::Result;
use crate::jsonl;
use crate::rewriter::{AnnotatedDemonstration, DemonstrationSet};

pub const CLASS_COUNT: usize = 10;
pub const BANK_SIZE: usize = 200;
pub const QUERY_COUNT: usize = 50;

const VERBS: [&str; CLASS_COUNT] = [
    "list", "count", "cluster", "arrange", "average", "merge", "exclude", "match", "bound",
    "overlap",
];

const SKILL_SUFFIXES: [&str; CLASS_COUNT] = [
    "keep only distinct values in one column",
    "join two tables and count matching rows",
    "group rows and filter groups by a condition",
    "sort rows in descending order of one column",
    "average one column and cap the result list",
    "merge two result sets and take the largest value",
    "exclude rows that appear in a second set",
    "match values against a pattern and take the smallest",
    "keep values inside a closed interval",
    "intersect two result sets and add up one column",
];

/// Two vocabulary items per class, disjoint across classes and from the
/// base/database items.
const CLASS_SQL: [&str; CLASS_COUNT] = [
    "DISTINCT value WHERE flag",
    "JOIN parts COUNT total",
    "GROUP label HAVING cond",
    "ORDER rank DESC",
    "AVG price LIMIT 5",
    "UNION others MAX peak",
    "EXCEPT NOT old",
    "LIKE pattern MIN floor",
    "BETWEEN low AND high",
    "INTERSECT extra SUM amount",
];

/// One vocabulary item per database.
const DB_SQL: [&str; CLASS_COUNT] = [
    "col = 1",
    "col > 1",
    "col < 1",
    "mark ! here",
    "col + 1",
    "col - 1",
    "pick *",
    "slot IN list",
    "one OR two",
    "EXISTS probe",
];

/// Three entities per database cluster, in database order.
const ENTITIES: [&str; 30] = [
    "apple", "baker", "cedar", "dune", "ember", "fjord", "grove", "harbor", "island", "jasper",
    "kiln", "lagoon", "meadow", "nectar", "orchard", "pine", "quartz", "ridge", "summit",
    "tundra", "umber", "violet", "willow", "zephyr", "aspen", "brook", "canyon", "delta", "elm",
    "fern",
];

pub struct SyntheticFixture {
    pub bank: ExampleBank,
    /// Full gold records; queries carry targets so runs can be scored.
    pub queries: Vec<Example>,
    /// Skill sentence per class.
    pub skills: Vec<String>,
    /// Class index per bank-example or query id.
    pub class_of: HashMap<String, usize>,
}

/// Paths written by [`SyntheticFixture::write_files`].
pub struct SyntheticPaths {
    pub bank: PathBuf,
    pub queries: PathBuf,
    pub demos: PathBuf,
    pub canned_rewrites: PathBuf,
    pub canned_answers: PathBuf,
}

fn skill_text(class: usize) -> String {
    format!("to solve this task we need to {}", SKILL_SUFFIXES[class])
}

fn target_text(class: usize, db: usize) -> String {
    format!("SELECT name FROM records {} {}", CLASS_SQL[class], DB_SQL[db])
}

fn schema_text(db: usize) -> String {
    let tables = 2 + db % 4;
    (0..tables)
        .map(|t| format!("table_{db}_{t} [ident, payload, extra]"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn question_text(class: usize, entities: &[&str]) -> String {
    format!(
        "please {} the {} {} {} records",
        VERBS[class], entities[0], entities[1], entities[2]
    )
}

fn draw_entities(rng: &mut ChaCha8Rng, db: usize) -> Vec<&'static str> {
    // two entities from the database's own cluster plus one stray; heavy
    // overlap among same-db questions is the point
    let cluster = &ENTITIES[3 * db..3 * db + 3];
    let mut picked: Vec<&str> = Vec::with_capacity(3);
    let skip = rng.gen_range(0..3);
    for (i, e) in cluster.iter().enumerate() {
        if i != skip {
            picked.push(e);
        }
    }
    loop {
        let e = ENTITIES[rng.gen_range(0..ENTITIES.len())];
        if !picked.contains(&e) {
            picked.push(e);
            break;
        }
    }
    picked
}

impl SyntheticFixture {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut class_of = HashMap::new();

        let mut examples = Vec::with_capacity(BANK_SIZE);
        for i in 0..BANK_SIZE {
            let class = i % CLASS_COUNT;
            let member = i / CLASS_COUNT;
            let db = member % CLASS_COUNT;
            let id = format!("ex{i:03}");
            let entities = draw_entities(&mut rng, db);
            class_of.insert(id.clone(), class);
            examples.push(Example {
                id,
                question: question_text(class, &entities),
                schema: Some(schema_text(db)),
                target: target_text(class, db),
                db_id: Some(format!("db{db}")),
            });
        }
        let bank = ExampleBank::new(examples, "text_to_sql").expect("fixture bank is valid");

        let mut queries = Vec::with_capacity(QUERY_COUNT);
        for qi in 0..QUERY_COUNT {
            let class = qi % CLASS_COUNT;
            let db = (3 * qi + 1) % CLASS_COUNT;
            let id = format!("q{qi:02}");
            let entities = draw_entities(&mut rng, db);
            // the case suffix keeps query questions distinct from every bank
            // question and from each other
            let question = format!("{} for case {qi}", question_text(class, &entities));
            class_of.insert(id.clone(), class);
            queries.push(Example {
                id,
                question,
                schema: Some(schema_text(db)),
                target: target_text(class, db),
                db_id: Some(format!("db{db}")),
            });
        }

        SyntheticFixture {
            bank,
            queries,
            skills: (0..CLASS_COUNT).map(skill_text).collect(),
            class_of,
        }
    }

    pub fn class_of(&self, id: &str) -> usize {
        self.class_of[id]
    }

    fn rewrite_entries(&self) -> Vec<(String, String)> {
        let mut entries = Vec::new();
        for ex in self.bank.examples() {
            entries.push((
                format!("Input: {}\n", ex.question),
                format!(" {}\nInput: ghost follow-on", self.skills[self.class_of[&ex.id]]),
            ));
        }
        for q in &self.queries {
            entries.push((
                format!("Input: {}\n", q.question),
                format!(" {}\nInput: ghost follow-on", self.skills[self.class_of[&q.id]]),
            ));
        }
        entries
    }

    fn answer_entries(&self) -> Vec<(String, String)> {
        // every seventh query gets a deliberately wrong answer so end-to-end
        // reports have a non-trivial exact-match rate
        self.queries
            .iter()
            .enumerate()
            .map(|(qi, q)| {
                let answer = if qi % 7 == 3 {
                    format!("SELECT name FROM records stray_{qi}")
                } else {
                    q.target.clone()
                };
                (
                    format!("Question: {}\n", q.question),
                    format!(" {answer}\nQuestion: ghost\nSQL: SELECT junk"),
                )
            })
            .collect()
    }

    /// Backend answering rewrite prompts: every known question maps to its
    /// class skill, with deliberate run-on text to exercise trimming.
    pub fn rewrite_backend(&self) -> MockCompletion {
        let mut mock = MockCompletion::new("synthetic-rewriter");
        for (needle, completion) in self.rewrite_entries() {
            mock = mock.with_needle(needle, completion);
        }
        mock
    }

    /// Backend answering final prompts: every query question maps to its
    /// gold target, again with run-on text.
    pub fn answer_backend(&self) -> MockCompletion {
        let mut mock = MockCompletion::new("synthetic-backbone");
        for (needle, completion) in self.answer_entries() {
            mock = mock.with_needle(needle, completion);
        }
        mock
    }

    /// A small demonstration set drawn from the fixture itself.
    pub fn demonstrations(&self) -> DemonstrationSet {
        let demos = self
            .bank
            .examples()
            .iter()
            .take(4)
            .map(|ex| AnnotatedDemonstration {
                question: ex.question.clone(),
                schema: ex.schema.clone(),
                skill: self.skills[self.class_of[&ex.id]].clone(),
            })
            .collect();
        DemonstrationSet::new(demos, self.bank.task_tag.clone()).expect("fixture demos are valid")
    }

    /// Write bank, gold queries, demonstrations, and the two canned-backend
    /// files under `dir` for file-driven entry points.
    pub fn write_files(&self, dir: &Path) -> Result<SyntheticPaths> {
        let paths = SyntheticPaths {
            bank: dir.join("bank.jsonl"),
            queries: dir.join("queries.jsonl"),
            demos: dir.join("demos.jsonl"),
            canned_rewrites: dir.join("canned_rewrites.jsonl"),
            canned_answers: dir.join("canned_answers.jsonl"),
        };
        save_bank(&self.bank, &paths.bank)?;
        jsonl::write_records(&paths.queries, &self.queries)?;
        jsonl::write_records(&paths.demos, &self.demonstrations().demos)?;

        #[derive(serde::Serialize)]
        struct Canned<'a> {
            needle: &'a str,
            completion: &'a str,
        }
        let rewrites = self.rewrite_entries();
        jsonl::write_records(
            &paths.canned_rewrites,
            &rewrites
                .iter()
                .map(|(n, c)| Canned { needle: n, completion: c })
                .collect::<Vec<_>>(),
        )?;
        let answers = self.answer_entries();
        jsonl::write_records(
            &paths.canned_answers,
            &answers
                .iter()
                .map(|(n, c)| Canned { needle: n, completion: c })
                .collect::<Vec<_>>(),
        )?;
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::CompletionBackend;
    use crate::selector::sketch_similarity;

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = SyntheticFixture::generate(7);
        let b = SyntheticFixture::generate(7);
        assert_eq!(a.bank.examples(), b.bank.examples());
        assert_eq!(a.queries, b.queries);
        let c = SyntheticFixture::generate(8);
        assert_ne!(a.bank.examples(), c.bank.examples());
    }

    #[test]
    fn layout_spreads_classes_and_dbs() {
        let f = SyntheticFixture::generate(1);
        assert_eq!(f.bank.len(), BANK_SIZE);
        assert_eq!(f.queries.len(), QUERY_COUNT);
        assert_eq!(f.bank.distinct_dbs(), CLASS_COUNT);
        // first four members of class 0 sit in four different dbs
        let dbs: Vec<&str> = ["ex000", "ex010", "ex020", "ex030"]
            .iter()
            .map(|id| f.bank.get(id).unwrap().db_key())
            .collect();
        assert_eq!(dbs, vec!["db0", "db1", "db2", "db3"]);
        for id in ["ex000", "ex010", "ex020", "ex030"] {
            assert_eq!(f.class_of(id), 0);
        }
    }

    #[test]
    fn sketch_overlaps_follow_the_keyword_algebra() {
        let f = SyntheticFixture::generate(1);
        let q = &f.queries[0]; // class 0, db 1
        assert_eq!(f.class_of("q00"), 0);
        assert_eq!(q.db_id.as_deref(), Some("db1"));

        let same_class_same_db = f.bank.get("ex010").unwrap(); // class 0, db 1
        let same_class_other_db = f.bank.get("ex000").unwrap(); // class 0, db 0
        let other_class_same_db = f.bank.get("ex011").unwrap(); // class 1, db 1
        let unrelated = f.bank.get("ex002").unwrap(); // class 2, db 0

        assert_eq!(sketch_similarity(&q.target, &same_class_same_db.target), 4);
        assert_eq!(sketch_similarity(&q.target, &same_class_other_db.target), 3);
        assert_eq!(sketch_similarity(&q.target, &other_class_same_db.target), 2);
        assert_eq!(sketch_similarity(&q.target, &unrelated.target), 1);
    }

    #[test]
    fn rewrite_backend_recovers_the_class_skill() {
        use crate::prompting::DecodingParams;
        use crate::rewriter::generate_skill;

        let f = SyntheticFixture::generate(1);
        let demos = f.demonstrations();
        let backend = f.rewrite_backend();
        let identity: Vec<usize> = (0..demos.len()).collect();
        for id in ["ex000", "ex005", "q00", "q17"] {
            let input: &Example = f
                .bank
                .get(id)
                .or_else(|| f.queries.iter().find(|q| q.id == id))
                .unwrap();
            let skill =
                generate_skill(input, &demos, &identity, &backend, &DecodingParams::default())
                    .unwrap();
            assert_eq!(skill, f.skills[f.class_of(id)], "input {id}");
        }
    }

    #[test]
    fn written_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = SyntheticFixture::generate(3);
        let paths = f.write_files(dir.path()).unwrap();
        let bank = crate::bank::load_bank(&paths.bank, "text_to_sql").unwrap();
        assert_eq!(bank.examples(), f.bank.examples());
        let queries: Vec<Example> = crate::jsonl::read_records(&paths.queries).unwrap();
        assert_eq!(queries, f.queries);
        let canned = MockCompletion::from_canned_file("m", &paths.canned_rewrites).unwrap();
        let params = crate::prompting::DecodingParams::default();
        let out = canned
            .complete(&format!("Input: {}\nSkill:", f.bank.examples()[0].question), &params)
            .unwrap();
        assert!(out[0].contains(&f.skills[f.class_of("ex000")]));
    }
}
