//! k-nearest-neighbor classification under an arbitrary tree distance,
//! stratified cross-validation, and inference timing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::LabeledTree;
use crate::error::{Error, Result};
use crate::metric::WeightModel;
use crate::pqgram::{profile, Profile, Vocabulary};
use crate::ted::{ted_preprocessed, EditCostTable, TedTree};
use crate::tree::Tree;

/// A symmetric tree distance with a per-tree encoding step.
///
/// `encode` runs once per tree (pq-gram profiles, postorder tables);
/// `distance` compares two encodings.
pub trait TreeDistance: Sync {
    type Encoded: Send + Sync;

    fn name(&self) -> String;
    fn encode(&self, tree: &Tree) -> Self::Encoded;
    fn distance(&self, a: &Self::Encoded, b: &Self::Encoded) -> f64;

    fn tree_distance(&self, a: &Tree, b: &Tree) -> f64 {
        self.distance(&self.encode(a), &self.encode(b))
    }
}

/// Unweighted pq-gram distance over a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct PqGramDistance {
    vocab: Arc<Vocabulary>,
}

impl PqGramDistance {
    pub fn new(vocab: Arc<Vocabulary>) -> PqGramDistance {
        PqGramDistance { vocab }
    }
}

impl TreeDistance for PqGramDistance {
    type Encoded = Profile;

    fn name(&self) -> String {
        format!("pq-gram ({})", self.vocab.shape())
    }

    fn encode(&self, tree: &Tree) -> Profile {
        profile(tree, &self.vocab, self.vocab.shape()).expect("shape taken from the vocabulary")
    }

    fn distance(&self, a: &Profile, b: &Profile) -> f64 {
        crate::metric::pq_distance(a, b).expect("profiles share the vocabulary") as f64
    }
}

/// Learned weighted pq-gram distance.
#[derive(Debug, Clone)]
pub struct WeightedPqGramDistance {
    model: WeightModel,
}

impl WeightedPqGramDistance {
    pub fn new(model: WeightModel) -> WeightedPqGramDistance {
        WeightedPqGramDistance { model }
    }

    pub fn model(&self) -> &WeightModel {
        &self.model
    }
}

impl TreeDistance for WeightedPqGramDistance {
    type Encoded = Profile;

    fn name(&self) -> String {
        format!("weighted pq-gram ({})", self.model.shape())
    }

    fn encode(&self, tree: &Tree) -> Profile {
        let vocab = self.model.vocabulary();
        profile(tree, vocab, vocab.shape()).expect("shape taken from the vocabulary")
    }

    fn distance(&self, a: &Profile, b: &Profile) -> f64 {
        self.model.distance_unchecked(a, b)
    }
}

/// Tree edit distance baseline.
#[derive(Debug, Clone, Default)]
pub struct TedDistance {
    costs: EditCostTable,
}

impl TedDistance {
    pub fn new(costs: EditCostTable) -> TedDistance {
        TedDistance { costs }
    }
}

impl TreeDistance for TedDistance {
    type Encoded = TedTree;

    fn name(&self) -> String {
        "tree edit distance".to_owned()
    }

    fn encode(&self, tree: &Tree) -> TedTree {
        TedTree::new(tree)
    }

    fn distance(&self, a: &TedTree, b: &TedTree) -> f64 {
        ted_preprocessed(a, b, &self.costs)
    }
}

/// Majority label among the `k` nearest of `(distance, index)` candidates.
///
/// Distance ties go to the lower index. Vote ties go to the label of the
/// single nearest neighbor if it is among the tied labels, otherwise to
/// the smallest class id.
pub fn vote(mut candidates: Vec<(f64, usize)>, labels: &[usize], k: usize) -> Option<usize> {
    if candidates.is_empty() || k == 0 {
        return None;
    }
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(candidates.len());
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, order);
        candidates.truncate(k);
    }
    candidates.sort_by(order);

    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &(_, i) in &candidates {
        *counts.entry(labels[i]).or_insert(0) += 1;
    }
    let best = counts.values().copied().max()?;
    let nearest = labels[candidates[0].1];
    if counts[&nearest] == best {
        return Some(nearest);
    }
    counts.into_iter().find(|&(_, c)| c == best).map(|(l, _)| l)
}

/// Encoded training set ready for queries.
pub struct KnnClassifier<'a, D: TreeDistance> {
    dist: &'a D,
    train: Vec<D::Encoded>,
    labels: Vec<usize>,
    k: usize,
}

impl<'a, D: TreeDistance> KnnClassifier<'a, D> {
    pub fn new(dist: &'a D, train: &[LabeledTree], k: usize, parallel: bool) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyCollection);
        }
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        let encoded = if parallel {
            train.par_iter().map(|it| dist.encode(&it.tree)).collect()
        } else {
            train.iter().map(|it| dist.encode(&it.tree)).collect()
        };
        Ok(KnnClassifier {
            dist,
            train: encoded,
            labels: train.iter().map(|it| it.label).collect(),
            k,
        })
    }

    pub fn classify_encoded(&self, query: &D::Encoded) -> usize {
        let candidates = self
            .train
            .iter()
            .enumerate()
            .map(|(i, t)| (self.dist.distance(query, t), i))
            .collect();
        vote(candidates, &self.labels, self.k).expect("training set is non-empty")
    }

    pub fn classify(&self, query: &Tree) -> usize {
        self.classify_encoded(&self.dist.encode(query))
    }

    /// Predictions for every query, in order.
    pub fn classify_all(&self, queries: &[Tree], parallel: bool) -> Vec<usize> {
        if parallel {
            queries.par_iter().map(|q| self.classify(q)).collect()
        } else {
            queries.iter().map(|q| self.classify(q)).collect()
        }
    }
}

pub fn knn_classify<D: TreeDistance>(
    train: &[LabeledTree],
    query: &Tree,
    dist: &D,
    k: usize,
) -> Result<usize> {
    Ok(KnnClassifier::new(dist, train, k, false)?.classify(query))
}

/// Stratified fold assignment: each class is shuffled and dealt across
/// folds in turn, continuing from where the previous class stopped.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".into()));
    }
    if labels.len() < folds {
        return Err(Error::InvalidConfig(format!(
            "{} items cannot fill {folds} folds",
            labels.len()
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            out[next % folds].push(i);
            next += 1;
        }
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub error: f64,
    /// Wall-clock seconds for encoding, distances and votes on this fold.
    pub seconds: f64,
    /// `(item index, predicted class)` for every test item of the fold.
    pub predictions: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub setting: String,
    pub folds: Vec<FoldResult>,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    /// Mean and (population) standard deviation of the fold errors.
    pub fn error(&self) -> (f64, f64) {
        mean_std(self.folds.iter().map(|f| f.error))
    }

    pub fn seconds(&self) -> (f64, f64) {
        mean_std(self.folds.iter().map(|f| f.seconds))
    }

    /// Predictions of all folds, sorted by item index.
    pub fn predictions(&self) -> Vec<(usize, usize)> {
        let mut all: Vec<_> = self.folds.iter().flat_map(|f| f.predictions.clone()).collect();
        all.sort_unstable();
        all
    }

    /// CSV rows `dataset,setting,fold,error,seconds`, with a header. When
    /// `timing` is false the seconds column is left empty so the output is
    /// reproducible byte for byte.
    pub fn to_csv(&self, dataset: &str, timing: bool) -> String {
        let mut out = String::from(CSV_HEADER);
        for (i, f) in self.folds.iter().enumerate() {
            let _ = write!(out, "{dataset},{},{},{}", self.setting, i + 1, f.error);
            if timing {
                let _ = write!(out, ",{}", f.seconds);
            } else {
                out.push(',');
            }
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8} {:>6} {:>10} {:>10}\n", "setting", "fold", "error", "seconds");
        for (i, f) in self.folds.iter().enumerate() {
            let _ = writeln!(out, "{:<8} {:>6} {:>10.4} {:>10.4}", self.setting, i + 1, f.error, f.seconds);
        }
        let (e, es) = self.error();
        let (s, ss) = self.seconds();
        let _ = writeln!(out, "{:<8} {:>6} {:>10} {:>10}", self.setting, "mean", format!("{e:.4}±{es:.4}"), format!("{s:.4}±{ss:.4}"));
        out
    }
}

pub const CSV_HEADER: &str = "dataset,setting,fold,error,seconds\n";

/// k-fold cross-validation. `build` receives each training split and
/// returns the distance to classify the held-out fold with.
pub fn cross_validate<D, B>(
    data: &[LabeledTree],
    mut build: B,
    setting: &str,
    k: usize,
    folds: usize,
    seed: u64,
    parallel: bool,
) -> Result<EvalReport>
where
    D: TreeDistance,
    B: FnMut(&[LabeledTree]) -> Result<D>,
{
    let labels: Vec<usize> = data.iter().map(|it| it.label).collect();
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    let assignment = stratified_folds(&labels, folds, seed)?;
    let mut results = Vec::with_capacity(folds);
    for test_idx in &assignment {
        let held: BTreeSet<usize> = test_idx.iter().copied().collect();
        let train: Vec<LabeledTree> = (0..data.len())
            .filter(|i| !held.contains(i))
            .map(|i| data[i].clone())
            .collect();
        let present: BTreeSet<usize> = train.iter().map(|it| it.label).collect();
        if let Some(&missing) = classes.difference(&present).next() {
            return Err(Error::InvalidConfig(format!(
                "class {missing} is absent from a training split"
            )));
        }
        let dist = build(&train)?;
        let queries: Vec<Tree> = test_idx.iter().map(|&i| data[i].tree.clone()).collect();

        let start = Instant::now();
        let clf = KnnClassifier::new(&dist, &train, k, parallel)?;
        let predicted = clf.classify_all(&queries, parallel);
        let seconds = start.elapsed().as_secs_f64();

        let wrong = test_idx
            .iter()
            .zip(&predicted)
            .filter(|(&i, &p)| labels[i] != p)
            .count();
        results.push(FoldResult {
            error: wrong as f64 / test_idx.len().max(1) as f64,
            seconds,
            predictions: test_idx.iter().copied().zip(predicted).collect(),
        });
    }
    Ok(EvalReport {
        setting: setting.to_owned(),
        folds: results,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub name: String,
    /// Wall-clock seconds of each repetition.
    pub runs: Vec<f64>,
    pub predictions: Vec<usize>,
    pub error: f64,
}

impl BenchResult {
    pub fn mean_std(&self) -> (f64, f64) {
        mean_std(self.runs.iter().copied())
    }

    pub fn min(&self) -> f64 {
        self.runs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Times full k-NN inference: encoding both sets, every train x test
/// distance, and the votes. Repeated `repeats` times.
pub fn benchmark_inference<D: TreeDistance>(
    train: &[LabeledTree],
    test: &[LabeledTree],
    dist: &D,
    k: usize,
    repeats: usize,
    parallel: bool,
) -> Result<BenchResult> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("need at least one repetition".into()));
    }
    let queries: Vec<Tree> = test.iter().map(|it| it.tree.clone()).collect();
    let mut runs = Vec::with_capacity(repeats);
    let mut predictions = Vec::new();
    for _ in 0..repeats {
        let start = Instant::now();
        let clf = KnnClassifier::new(dist, train, k, parallel)?;
        predictions = clf.classify_all(&queries, parallel);
        runs.push(start.elapsed().as_secs_f64());
    }
    let wrong = test
        .iter()
        .zip(&predictions)
        .filter(|(it, &p)| it.label != p)
        .count();
    Ok(BenchResult {
        name: dist.name(),
        runs,
        error: if test.is_empty() { 0.0 } else { wrong as f64 / test.len() as f64 },
        predictions,
    })
}
