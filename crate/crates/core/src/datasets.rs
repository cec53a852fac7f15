//! Labeled tree corpora: the synthetic Strings dataset, random trees, and
//! a TSV file format (`label<TAB>bracket-tree` per line, `#` comments).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tree::{parse_tree, Tree};

/// A tree with a class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTree {
    pub tree: Tree,
    pub label: usize,
}

impl LabeledTree {
    pub fn new(tree: Tree, label: usize) -> LabeledTree {
        LabeledTree { tree, label }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    items: Vec<LabeledTree>,
    label_names: Vec<String>,
    source: String,
}

fn check_label_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(['\t', '\n', '\r']) || name.starts_with('#') {
        return Err(Error::InvalidConfig(format!(
            "class name {name:?} cannot be stored in a TSV corpus"
        )));
    }
    Ok(())
}

impl LabeledCorpus {
    pub fn new(
        items: Vec<LabeledTree>,
        label_names: Vec<String>,
        source: impl Into<String>,
    ) -> Result<LabeledCorpus> {
        if items.is_empty() {
            return Err(Error::EmptyCollection);
        }
        for name in &label_names {
            check_label_name(name)?;
        }
        if let Some(bad) = items.iter().find(|it| it.label >= label_names.len()) {
            return Err(Error::InvalidConfig(format!(
                "class id {} has no name ({} names given)",
                bad.label,
                label_names.len()
            )));
        }
        Ok(LabeledCorpus {
            items,
            label_names,
            source: source.into(),
        })
    }

    pub fn items(&self) -> &[LabeledTree] {
        &self.items
    }

    pub fn into_items(self) -> Vec<LabeledTree> {
        self.items
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn mean_tree_size(&self) -> f64 {
        self.items.iter().map(|it| it.tree.size()).sum::<usize>() as f64 / self.items.len() as f64
    }

    /// TSV text of the corpus, one line per item.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for it in &self.items {
            let _ = writeln!(out, "{}\t{}", self.label_names[it.label], it.tree);
        }
        out
    }
}

const CLASS1_AB: [char; 2] = ['A', 'B'];
const CLASS1_CD: [char; 2] = ['C', 'D'];
const CLASS2: [char; 4] = ['A', 'B', 'C', 'D'];
const STRING_LEN: usize = 9;

/// The Strings dataset: class `1` strings follow `((A|B)(C|D)(A|B))^3`,
/// class `2` strings are uniform over `(A|B|C|D)^9`. Each string becomes a
/// 9-node chain with the first character at the root.
pub fn gen_strings(n_per_class: usize, seed: u64) -> Result<LabeledCorpus> {
    if n_per_class == 0 {
        return Err(Error::InvalidConfig("n_per_class must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        let s: Vec<String> = (0..STRING_LEN)
            .map(|i| {
                let pool: &[char] = if i % 3 == 1 { &CLASS1_CD } else { &CLASS1_AB };
                pool[rng.gen_range(0..pool.len())].to_string()
            })
            .collect();
        items.push(LabeledTree::new(Tree::chain(&s)?, 0));
    }
    for _ in 0..n_per_class {
        let s: Vec<String> = (0..STRING_LEN)
            .map(|_| CLASS2[rng.gen_range(0..CLASS2.len())].to_string())
            .collect();
        items.push(LabeledTree::new(Tree::chain(&s)?, 1));
    }
    LabeledCorpus::new(
        items,
        vec!["1".to_owned(), "2".to_owned()],
        format!("strings n_per_class={n_per_class} seed={seed}"),
    )
}

/// Random recursive tree: node `i` attaches as the last child of a
/// uniformly chosen earlier node; labels are uniform over `alphabet`.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, size: usize, alphabet: &[&str]) -> Result<Tree> {
    if size == 0 || alphabet.is_empty() {
        return Err(Error::InvalidConfig(
            "random trees need a positive size and a non-empty alphabet".into(),
        ));
    }
    let mut children = vec![Vec::new(); size];
    for i in 1..size {
        let parent = rng.gen_range(0..i);
        children[parent].push(i);
    }
    let labels = (0..size)
        .map(|_| alphabet.choose(rng).expect("non-empty").to_string())
        .collect();
    Ok(Tree::from_parts(labels, children, 0)?)
}

/// A corpus of random trees with random class labels, for benchmarks.
pub fn gen_random(count: usize, size: usize, alphabet: &[&str], classes: usize, seed: u64) -> Result<LabeledCorpus> {
    if classes == 0 {
        return Err(Error::InvalidConfig("need at least one class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (0..count)
        .map(|i| Ok(LabeledTree::new(random_tree(&mut rng, size, alphabet)?, i % classes)))
        .collect::<Result<Vec<_>>>()?;
    LabeledCorpus::new(
        items,
        (1..=classes).map(|c| c.to_string()).collect(),
        format!("random count={count} size={size} seed={seed}"),
    )
}

/// Parses TSV text. Blank lines and lines starting with `#` are skipped;
/// class names are numbered in first-occurrence order.
pub fn parse_tsv(text: &str, source: &str) -> Result<LabeledCorpus> {
    let mut items = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((name, tree_text)) = line.split_once('\t') else {
            return Err(Error::Corpus {
                line: line_no,
                message: "expected `label<TAB>tree`".into(),
            });
        };
        check_label_name(name).map_err(|e| Error::Corpus {
            line: line_no,
            message: e.to_string(),
        })?;
        let tree = parse_tree(tree_text).map_err(|e| Error::Corpus {
            line: line_no,
            message: e.to_string(),
        })?;
        let label = match names.iter().position(|n| n == name) {
            Some(l) => l,
            None => {
                names.push(name.to_owned());
                names.len() - 1
            }
        };
        items.push(LabeledTree::new(tree, label));
    }
    if items.is_empty() {
        return Err(Error::Corpus {
            line: 0,
            message: "no labeled trees".into(),
        });
    }
    LabeledCorpus::new(items, names, source)
}

pub fn load_tsv(path: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&text, &path.display().to_string())
}

pub fn save_tsv(corpus: &LabeledCorpus, path: impl AsRef<Path>) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let path = path.as_ref();
    fs::write(path, corpus.to_tsv()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn string_of(t: &Tree) -> String {
        t.nodes().iter().map(|n| n.label()).collect()
    }

    #[test]
    fn strings_corpus_statistics() {
        let c = gen_strings(100, 7).unwrap();
        assert_eq!(c.len(), 200);
        assert_eq!(c.mean_tree_size(), 9.0);
        assert!(c.items().iter().all(|it| it.tree.size() == 9 && it.tree.max_fanout() <= 1));
        assert_eq!(c.items().iter().filter(|it| it.label == 0).count(), 100);
    }

    #[test]
    fn strings_chains_are_root_first() {
        let c = gen_strings(3, 1).unwrap();
        for it in c.items() {
            let s = string_of(&it.tree);
            assert_eq!(s.len(), 9);
            assert_eq!(it.tree.to_bracket().chars().next(), s.chars().next());
        }
    }

    #[test]
    fn strings_are_deterministic() {
        assert_eq!(gen_strings(20, 3).unwrap(), gen_strings(20, 3).unwrap());
        assert_ne!(gen_strings(20, 3).unwrap(), gen_strings(20, 4).unwrap());
        assert!(gen_strings(0, 1).is_err());
    }

    #[test]
    fn random_trees_have_requested_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for size in [1, 2, 17, 40] {
            let t = random_tree(&mut rng, size, &["a", "b", "c"]).unwrap();
            assert_eq!(t.size(), size);
        }
        assert!(random_tree(&mut rng, 0, &["a"]).is_err());
    }

    #[test]
    fn tsv_single_line() {
        let c = parse_tsv("pos\ta(b,c)\n", "mem").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.label_names(), ["pos"]);
        assert_eq!(c.items()[0].tree.to_bracket(), "a(b,c)");
    }

    #[test]
    fn tsv_skips_comments_and_blank_lines() {
        let text = "# header\n\nx\ta\r\ny\tb( c )\n#x\tq\nx\td\n";
        let c = parse_tsv(text, "mem").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.label_names(), ["x", "y"]);
        let labels: Vec<usize> = c.items().iter().map(|it| it.label).collect();
        assert_eq!(labels, [0, 1, 0]);
    }

    #[test]
    fn tsv_errors_name_the_line() {
        let err = parse_tsv("a\tx(y)\nb\tx(y\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Corpus { line: 2, .. }), "{err}");
        let err = parse_tsv("a\tx\nno-tab-here\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Corpus { line: 2, .. }));
        assert!(parse_tsv("# only comments\n\n", "mem").is_err());
        assert!(parse_tsv("", "mem").is_err());
    }

    #[test]
    fn tsv_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        let c = gen_strings(100, 11).unwrap();
        save_tsv(&c, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 200);
        let back = load_tsv(&path).unwrap();
        assert_eq!(back.items(), c.items());
        assert_eq!(back.label_names(), c.label_names());
    }

    #[test]
    fn corpus_construction_rejects_bad_inputs() {
        let t = parse_tree("a").unwrap();
        assert!(matches!(
            LabeledCorpus::new(vec![], vec!["x".into()], "s"),
            Err(Error::EmptyCollection)
        ));
        let item = vec![LabeledTree::new(t.clone(), 0)];
        assert!(LabeledCorpus::new(item.clone(), vec!["has\ttab".into()], "s").is_err());
        assert!(LabeledCorpus::new(item, vec![], "s").is_err());
    }

    #[test]
    fn load_reports_missing_file() {
        let err = load_tsv("/nonexistent/dir/x.tsv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
