//! pq-gram extraction and count-vector profiles.
//!
//! A pq-gram anchored at node `v` consists of a stem (the `p` nodes on the
//! path ending at `v`) and a base (`q` consecutive children of `v`), taken
//! from the pq-extended tree in which dummy `*` nodes pad the tree above
//! the root, around each child list and below each leaf. The extended tree
//! is never built: extraction walks the original tree once, keeping the
//! stem in a register and sliding a `q`-wide window over each child list
//! with the dummy padding implied.

use std::collections::hash_map::{DefaultHasher, Entry};
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::tree::{NodeId, Tree, DUMMY_LABEL};

/// The pair `(p, q)`: stem length and base width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GramShape {
    p: usize,
    q: usize,
}

impl GramShape {
    pub fn new(p: usize, q: usize) -> Result<GramShape> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidShape { p, q });
        }
        Ok(GramShape { p, q })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of labels in a gram's label tuple.
    pub fn width(&self) -> usize {
        self.p + self.q
    }
}

impl fmt::Display for GramShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={} q={}", self.p, self.q)
    }
}

/// Calls `emit` once per pq-gram of `t`, in anchor preorder and left to
/// right within an anchor. Each slot of the slice is a node of `t`, or
/// `None` for a dummy.
pub(crate) fn for_each_gram<F>(t: &Tree, shape: GramShape, mut emit: F)
where
    F: FnMut(&[Option<NodeId>]),
{
    let (p, q) = (shape.p, shape.q);
    let mut gram: Vec<Option<NodeId>> = vec![None; p + q];
    // Ancestor path of the current node, root first. Nodes are in preorder,
    // so the path is maintained by popping until the parent is on top.
    let parents = t.parents();
    let mut path: Vec<NodeId> = Vec::new();

    for (v, &parent) in parents.iter().enumerate() {
        while let Some(&top) = path.last() {
            if Some(top) == parent {
                break;
            }
            path.pop();
        }
        path.push(v);

        let depth = path.len();
        for (slot, stem) in gram[..p].iter_mut().enumerate() {
            // slot p-1 is v itself, slot 0 is the (p-1)-th ancestor
            let back = p - 1 - slot;
            *stem = if back < depth { Some(path[depth - 1 - back]) } else { None };
        }

        let children = t.children(v);
        if children.is_empty() {
            gram[p..].fill(None);
            emit(&gram);
            continue;
        }
        // Extended child list: (q-1) dummies, children, (q-1) dummies.
        let windows = children.len() + q - 1;
        for start in 0..windows {
            for (offset, base) in gram[p..].iter_mut().enumerate() {
                let pos = start + offset;
                *base = if pos + 1 >= q && pos + 1 - q < children.len() {
                    Some(children[pos + 1 - q])
                } else {
                    None
                };
            }
            emit(&gram);
        }
    }
}

/// Label tuple of a pq-gram: `p` stem labels root-most first, then `q`
/// base labels left to right. Dummies carry the label `*`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelTuple(Vec<String>);

impl LabelTuple {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> LabelTuple {
        LabelTuple(labels.into_iter().map(Into::into).collect())
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for LabelTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.0.join(","))
    }
}

/// The pq-gram index of a tree: a multiset of label tuples.
///
/// Iteration order is first occurrence during extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GramMultiset {
    shape: GramShape,
    order: Vec<LabelTuple>,
    counts: HashMap<LabelTuple, usize>,
}

impl GramMultiset {
    pub fn shape(&self) -> GramShape {
        self.shape
    }

    pub fn count(&self, tuple: &LabelTuple) -> usize {
        self.counts.get(tuple).copied().unwrap_or(0)
    }

    /// Number of distinct tuples.
    pub fn distinct(&self) -> usize {
        self.order.len()
    }

    /// Total multiplicity.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LabelTuple, usize)> {
        self.order.iter().map(move |t| (t, self.counts[t]))
    }

    /// Size of the multiset union `|A ∪ B|`, i.e. the sum of both totals.
    pub fn union_size(&self, other: &GramMultiset) -> usize {
        self.total() + other.total()
    }

    /// Size of the multiset intersection: per tuple, the smaller count.
    pub fn intersection_size(&self, other: &GramMultiset) -> usize {
        self.counts
            .iter()
            .map(|(t, &c)| c.min(other.count(t)))
            .sum()
    }
}

fn tuple_of(t: &Tree, gram: &[Option<NodeId>]) -> LabelTuple {
    LabelTuple(
        gram.iter()
            .map(|slot| slot.map_or(DUMMY_LABEL, |id| t.label(id)).to_owned())
            .collect(),
    )
}

pub fn extract_grams(t: &Tree, shape: GramShape) -> GramMultiset {
    let mut order = Vec::new();
    let mut counts: HashMap<LabelTuple, usize> = HashMap::new();
    for_each_gram(t, shape, |gram| match counts.entry(tuple_of(t, gram)) {
        Entry::Occupied(mut e) => *e.get_mut() += 1,
        Entry::Vacant(e) => {
            order.push(e.key().clone());
            e.insert(1);
        }
    });
    GramMultiset { shape, order, counts }
}

/// Number of pq-grams of `t`, from the closed form: one per leaf and
/// `fanout + q - 1` per inner node.
pub fn gram_count(t: &Tree, shape: GramShape) -> usize {
    t.nodes()
        .iter()
        .map(|n| {
            if n.is_leaf() {
                1
            } else {
                n.children().len() + shape.q - 1
            }
        })
        .sum()
}

const DUMMY_ID: u32 = 0;

/// Distinct label tuples of a training collection, each with a dense index.
/// One extra index, [`Vocabulary::oov_index`], collects every tuple not in
/// the list.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    shape: GramShape,
    tuples: Vec<LabelTuple>,
    // Label interning: id 0 is the dummy.
    label_ids: HashMap<String, u32>,
    index: HashMap<Box<[u32]>, usize>,
    fingerprint: u64,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.tuples == other.tuples
    }
}

impl Vocabulary {
    /// Builds a vocabulary from tuples in the given order. Duplicates keep
    /// their first position.
    pub fn from_tuples(
        shape: GramShape,
        tuples: impl IntoIterator<Item = LabelTuple>,
    ) -> Result<Vocabulary> {
        let mut vocab = Vocabulary {
            shape,
            tuples: Vec::new(),
            label_ids: HashMap::new(),
            index: HashMap::new(),
            fingerprint: 0,
        };
        vocab.label_ids.insert(DUMMY_LABEL.to_owned(), DUMMY_ID);
        for tuple in tuples {
            if tuple.len() != shape.width() {
                return Err(Error::TupleWidth {
                    expected: shape.width(),
                    found: tuple.len(),
                });
            }
            vocab.insert(tuple);
        }
        vocab.fingerprint = vocab.compute_fingerprint();
        Ok(vocab)
    }

    fn insert(&mut self, tuple: LabelTuple) {
        let mut key = Vec::with_capacity(tuple.len());
        for label in tuple.labels() {
            let next = self.label_ids.len() as u32;
            key.push(*self.label_ids.entry(label.clone()).or_insert(next));
        }
        if let Entry::Vacant(e) = self.index.entry(key.into_boxed_slice()) {
            e.insert(self.tuples.len());
            self.tuples.push(tuple);
        }
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.shape.hash(&mut h);
        self.tuples.hash(&mut h);
        h.finish()
    }

    pub fn shape(&self) -> GramShape {
        self.shape
    }

    /// Listed tuples, in index order.
    pub fn tuples(&self) -> &[LabelTuple] {
        &self.tuples
    }

    /// Number of listed tuples (excluding the OOV slot).
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Dimension of profiles over this vocabulary, including the OOV slot.
    pub fn dim(&self) -> usize {
        self.tuples.len() + 1
    }

    pub fn oov_index(&self) -> usize {
        self.tuples.len()
    }

    /// Index of `tuple`, or the OOV index when absent.
    pub fn lookup(&self, tuple: &LabelTuple) -> usize {
        let mut key = Vec::with_capacity(tuple.len());
        for label in tuple.labels() {
            match self.label_ids.get(label) {
                Some(&id) => key.push(id),
                None => return self.oov_index(),
            }
        }
        self.index
            .get(key.as_slice())
            .copied()
            .unwrap_or(self.oov_index())
    }

    /// Content hash used to detect profiles built against another vocabulary.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn check_shape(&self, shape: GramShape) -> Result<()> {
        if shape != self.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                found: shape,
            });
        }
        Ok(())
    }
}

/// Distinct tuples of `trees` in first-occurrence order.
pub fn build_vocabulary<'a>(
    trees: impl IntoIterator<Item = &'a Tree>,
    shape: GramShape,
) -> Result<Vocabulary> {
    let mut vocab = Vocabulary::from_tuples(shape, std::iter::empty())?;
    let mut seen_any = false;
    for t in trees {
        seen_any = true;
        for_each_gram(t, shape, |gram| vocab.insert(tuple_of(t, gram)));
    }
    if !seen_any {
        return Err(Error::EmptyCollection);
    }
    vocab.fingerprint = vocab.compute_fingerprint();
    Ok(vocab)
}

/// Sparse non-negative integer vector, entries sorted by index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparseCounts {
    dim: usize,
    entries: Vec<(usize, u64)>,
}

impl SparseCounts {
    /// Builds from `(index, count)` pairs; duplicates are summed and zeros
    /// dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, u64)>) -> SparseCounts {
        let mut entries: Vec<(usize, u64)> = pairs.into_iter().filter(|e| e.1 > 0).collect();
        entries.sort_unstable_by_key(|e| e.0);
        entries.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        debug_assert!(entries.last().is_none_or(|e| e.0 < dim));
        SparseCounts { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Non-zero entries in increasing index order.
    pub fn entries(&self) -> &[(usize, u64)] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> u64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0, |pos| self.entries[pos].1)
    }

    pub fn sum(&self) -> u64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self) -> Vec<u64> {
        let mut out = vec![0; self.dim];
        for &(i, c) in &self.entries {
            out[i] = c;
        }
        out
    }
}

/// Visits every index where `x` or `y` is non-zero, in increasing order,
/// with both counts.
pub(crate) fn merge_sparse(x: &SparseCounts, y: &SparseCounts, mut f: impl FnMut(usize, u64, u64)) {
    let (a, b) = (x.entries(), y.entries());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(ia, ca)), Some(&(ib, cb))) if ia == ib => {
                f(ia, ca, cb);
                i += 1;
                j += 1;
            }
            (Some(&(ia, ca)), Some(&(ib, _))) if ia < ib => {
                f(ia, ca, 0);
                i += 1;
            }
            (Some(&(ia, ca)), None) => {
                f(ia, ca, 0);
                i += 1;
            }
            (_, Some(&(ib, cb))) => {
                f(ib, 0, cb);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
}

/// A tree's pq-gram count vector over a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    shape: GramShape,
    vocab: u64,
    counts: SparseCounts,
}

impl Profile {
    pub fn shape(&self) -> GramShape {
        self.shape
    }

    pub fn counts(&self) -> &SparseCounts {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.counts.dim()
    }

    /// Fingerprint of the vocabulary this profile was built against.
    pub fn vocabulary_fingerprint(&self) -> u64 {
        self.vocab
    }

    /// Total number of grams of the source tree.
    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub(crate) fn check_compatible(&self, other: &Profile) -> Result<()> {
        if self.vocab != other.vocab || self.dim() != other.dim() {
            return Err(Error::VocabularyMismatch);
        }
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                found: other.shape,
            });
        }
        Ok(())
    }
}

pub fn profile(t: &Tree, vocab: &Vocabulary, shape: GramShape) -> Result<Profile> {
    vocab.check_shape(shape)?;
    let oov = vocab.oov_index();
    let mut pairs = Vec::with_capacity(gram_count(t, shape));
    let mut key: Vec<u32> = Vec::with_capacity(shape.width());
    for_each_gram(t, shape, |gram| {
        key.clear();
        for slot in gram {
            match slot {
                None => key.push(DUMMY_ID),
                Some(id) => match vocab.label_ids.get(t.label(*id)) {
                    Some(&lid) => key.push(lid),
                    None => {
                        pairs.push((oov, 1));
                        return;
                    }
                },
            }
        }
        let index = vocab.index.get(key.as_slice()).copied().unwrap_or(oov);
        pairs.push((index, 1));
    });
    Ok(Profile {
        shape,
        vocab: vocab.fingerprint(),
        counts: SparseCounts::from_pairs(vocab.dim(), pairs),
    })
}

/// Per-component `x + y - 2 min(x, y)`, i.e. `|x - y|`.
pub fn sym_diff(x: &Profile, y: &Profile) -> Result<SparseCounts> {
    x.check_compatible(y)?;
    let mut entries = Vec::with_capacity(x.counts.entries.len() + y.counts.entries.len());
    merge_sparse(&x.counts, &y.counts, |i, a, b| {
        let d = a + b - 2 * a.min(b);
        if d > 0 {
            entries.push((i, d));
        }
    });
    Ok(SparseCounts {
        dim: x.dim(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::parse_tree;

    fn t(s: &str) -> Tree {
        parse_tree(s).unwrap()
    }

    fn tup(s: &str) -> LabelTuple {
        LabelTuple::new(s.split(','))
    }

    fn shape(p: usize, q: usize) -> GramShape {
        GramShape::new(p, q).unwrap()
    }

    fn as_set(m: &GramMultiset) -> Vec<(String, usize)> {
        let mut v: Vec<_> = m.iter().map(|(t, c)| (t.to_string(), c)).collect();
        v.sort();
        v
    }

    #[test]
    fn example_one_index() {
        let m = extract_grams(&t("a(b,c)"), shape(1, 2));
        let listed: Vec<String> = m.iter().map(|(t, _)| t.to_string()).collect();
        assert_eq!(listed, ["(a,*,b)", "(a,b,c)", "(a,c,*)", "(b,*,*)", "(c,*,*)"]);
        assert!(m.iter().all(|(_, c)| c == 1));

        let other = extract_grams(&t("a(c,b)"), shape(1, 2));
        assert_eq!(m.union_size(&other), 10);
        assert_eq!(m.intersection_size(&other), 2);
    }

    #[test]
    fn single_leaf() {
        let m = extract_grams(&t("a"), shape(1, 1));
        assert_eq!(as_set(&m), [("(a,*)".to_owned(), 1)]);
    }

    #[test]
    fn two_by_two_on_short_chain() {
        let m = extract_grams(&t("a(b)"), shape(2, 2));
        assert_eq!(
            as_set(&m),
            [
                ("(*,a,*,b)".to_owned(), 1),
                ("(*,a,b,*)".to_owned(), 1),
                ("(a,b,*,*)".to_owned(), 1)
            ]
        );
    }

    #[test]
    fn repeated_tuples_are_counted() {
        let m = extract_grams(&t("a(b,b,b)"), shape(1, 1));
        assert_eq!(m.count(&tup("a,b")), 3);
        assert_eq!(m.count(&tup("b,*")), 3);
        assert_eq!(m.total(), 6);
        assert_eq!(m.distinct(), 2);
    }

    #[test]
    fn gram_counts() {
        assert_eq!(gram_count(&t("a(b,c)"), shape(1, 2)), 5);
        for (p, q) in [(1, 1), (2, 3), (3, 2)] {
            assert_eq!(gram_count(&t("a"), shape(p, q)), 1);
        }
        let chain = t("a(b(c(d(e(f(g(h(i))))))))");
        assert_eq!(gram_count(&chain, shape(2, 2)), 17);
        assert_eq!(extract_grams(&chain, shape(2, 2)).total(), 17);
    }

    #[test]
    fn shape_rejects_zero() {
        assert!(matches!(GramShape::new(0, 2), Err(Error::InvalidShape { .. })));
        assert!(matches!(GramShape::new(2, 0), Err(Error::InvalidShape { .. })));
    }

    #[test]
    fn vocabulary_sizes_and_order() {
        let s = shape(1, 2);
        let v = build_vocabulary([&t("a(b,c)")], s).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.dim(), 6);
        assert_eq!(v.tuples()[0], tup("a,*,b"));

        let v = build_vocabulary([&t("a"), &t("a")], s).unwrap();
        assert_eq!(v.len(), 1);

        let v = build_vocabulary([&t("a(b,c)"), &t("a(c,b)")], s).unwrap();
        assert_eq!(v.len(), 8);
        for (i, tuple) in v.tuples().iter().enumerate() {
            assert_eq!(v.lookup(tuple), i);
        }
        assert_eq!(v.lookup(&tup("z,*,*")), v.oov_index());

        assert!(matches!(
            build_vocabulary(std::iter::empty::<&Tree>(), s),
            Err(Error::EmptyCollection)
        ));
    }

    #[test]
    fn vocabulary_from_tuples_checks_width() {
        let err = Vocabulary::from_tuples(shape(1, 2), [tup("a,b")]).unwrap_err();
        assert!(matches!(err, Error::TupleWidth { expected: 3, found: 2 }));
    }

    #[test]
    fn profiles() {
        let s = shape(1, 2);
        let base = t("a(b,c)");
        let v = build_vocabulary([&base], s).unwrap();

        let own = profile(&base, &v, s).unwrap();
        assert_eq!(own.counts().to_dense(), [1, 1, 1, 1, 1, 0]);

        let unseen = profile(&t("d"), &v, s).unwrap();
        assert_eq!(unseen.counts().to_dense(), [0, 0, 0, 0, 0, 1]);

        // known labels, unknown combination
        let mixed = profile(&t("b(a)"), &v, s).unwrap();
        assert_eq!(mixed.counts().get(v.oov_index()), 3);
        assert_eq!(mixed.total(), 3);

        assert!(matches!(
            profile(&base, &v, shape(2, 2)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn sym_diff_example_one() {
        let s = shape(1, 2);
        let (x, y) = (t("a(b,c)"), t("a(c,b)"));
        let v = build_vocabulary([&x, &y], s).unwrap();
        let (px, py) = (profile(&x, &v, s).unwrap(), profile(&y, &v, s).unwrap());
        let d = sym_diff(&px, &py).unwrap();
        assert_eq!(d.sum(), 6);
        assert_eq!(d.dim(), 9);
        assert!(sym_diff(&px, &px).unwrap().is_zero());
        assert_eq!(d, sym_diff(&py, &px).unwrap());
    }

    #[test]
    fn sym_diff_of_disjoint_profiles() {
        let s = shape(2, 2);
        let (x, y) = (t("a(b,c(d))"), t("e(f)"));
        let v = build_vocabulary([&x, &y], s).unwrap();
        let (px, py) = (profile(&x, &v, s).unwrap(), profile(&y, &v, s).unwrap());
        let d = sym_diff(&px, &py).unwrap();
        assert_eq!(d.sum() as usize, gram_count(&x, s) + gram_count(&y, s));
    }

    #[test]
    fn sym_diff_rejects_foreign_vocabulary() {
        let s = shape(1, 2);
        let x = t("a(b,c)");
        let v1 = build_vocabulary([&x], s).unwrap();
        let v2 = build_vocabulary([&t("a(c,b)")], s).unwrap();
        let p1 = profile(&x, &v1, s).unwrap();
        let p2 = profile(&x, &v2, s).unwrap();
        assert!(matches!(sym_diff(&p1, &p2), Err(Error::VocabularyMismatch)));
    }

    #[test]
    fn sparse_counts_merge_duplicates() {
        let s = SparseCounts::from_pairs(5, [(3, 1), (1, 2), (3, 4), (0, 0)]);
        assert_eq!(s.entries(), &[(1, 2), (3, 5)]);
        assert_eq!(s.get(3), 5);
        assert_eq!(s.get(0), 0);
    }
}
