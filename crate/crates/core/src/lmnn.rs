//! Large-margin nearest-neighbor training of pq-gram weights.
//!
//! Every training point is paired with its `k` nearest same-class points
//! (targets, fixed before training) and with every differently-labeled
//! point closer than its farthest target (impostors, recomputed
//! periodically with the current weights). The loss
//!
//! ```text
//! beta * |w|^2 + sum_targets [d - mu1]_+ + sum_impostors [mu2 - d]_+
//! ```
//!
//! is minimized over the raw weights `w` with full-batch Adam.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::LabeledTree;
use crate::error::{Error, Result};
use crate::metric::WeightModel;
use crate::pqgram::{build_vocabulary, profile, GramShape, Profile, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Targets per point.
    pub k: usize,
    /// Margin below which target pairs stop contributing.
    pub mu1: f64,
    /// Margin above which impostor pairs stop contributing.
    pub mu2: f64,
    /// L2 coefficient on the raw weights.
    pub beta: f64,
    /// Adam step size.
    pub eta: f64,
    pub epochs: usize,
    pub impostor_refresh_every: usize,
    /// Training points used for pair construction; larger sets are
    /// subsampled.
    pub subsample_cap: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 3,
            mu1: 5.0,
            mu2: 5.0,
            beta: 1e-4,
            eta: 1e-2,
            epochs: 600,
            impostor_refresh_every: 50,
            subsample_cap: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// `epochs == 0` is allowed and means "evaluate the initial model".
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.mu1 >= 0.0 && self.mu1.is_finite() && self.mu2 >= 0.0 && self.mu2.is_finite()) {
            return bad("margins must be finite and non-negative");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and non-negative");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be finite and positive");
        }
        if self.impostor_refresh_every == 0 {
            return bad("impostor refresh interval must be at least 1");
        }
        if self.subsample_cap < 2 * (self.k + 1) {
            return bad("subsample cap must leave room for k+1 points in two classes");
        }
        Ok(())
    }
}

/// Target (positive) and impostor (negative) index pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSet {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

impl PairSet {
    /// Checks the label and self-pair invariants against `labels`.
    pub fn is_valid_for(&self, labels: &[usize]) -> bool {
        let ok = |&(i, j): &(usize, usize)| i != j && i < labels.len() && j < labels.len();
        self.positives.iter().all(|p| ok(p) && labels[p.0] == labels[p.1])
            && self.negatives.iter().all(|p| ok(p) && labels[p.0] != labels[p.1])
    }
}

/// Profiles and class ids of a training set, aligned by index.
#[derive(Debug, Clone)]
pub struct EncodedData {
    pub profiles: Vec<Profile>,
    pub labels: Vec<usize>,
}

impl EncodedData {
    pub fn new(data: &[LabeledTree], vocab: &Vocabulary) -> Result<EncodedData> {
        let profiles = data
            .par_iter()
            .map(|it| profile(&it.tree, vocab, vocab.shape()))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedData {
            profiles,
            labels: data.iter().map(|it| it.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self, model: &WeightModel) -> Result<()> {
        let fp = model.vocabulary().fingerprint();
        if self.profiles.iter().any(|p| p.vocabulary_fingerprint() != fp) {
            return Err(Error::VocabularyMismatch);
        }
        Ok(())
    }
}

fn class_sizes(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut sizes = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_insert(0) += 1;
    }
    sizes
}

fn check_class_sizes(labels: &[usize], k: usize) -> Result<()> {
    for (&label, &size) in &class_sizes(labels) {
        if size < k + 1 {
            return Err(Error::DegenerateClass {
                label,
                size,
                needed: k + 1,
            });
        }
    }
    Ok(())
}

/// For every point, the `k` nearest same-class points under `model`,
/// ties going to the lower index. Pairs are grouped by their first index.
pub fn build_targets(data: &EncodedData, model: &WeightModel, k: usize) -> Result<Vec<(usize, usize)>> {
    data.check(model)?;
    check_class_sizes(&data.labels, k)?;
    let per_point: Vec<Vec<(usize, usize)>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let mut same: Vec<(f64, usize)> = (0..data.len())
                .filter(|&j| j != i && data.labels[j] == data.labels[i])
                .map(|j| (model.distance_unchecked(&data.profiles[i], &data.profiles[j]), j))
                .collect();
            same.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            same.iter().take(k).map(|&(_, j)| (i, j)).collect()
        })
        .collect();
    Ok(per_point.into_iter().flatten().collect())
}

/// For every point, all differently-labeled points strictly closer than
/// its farthest target under the current `model`.
pub fn find_impostors(
    data: &EncodedData,
    model: &WeightModel,
    targets: &[(usize, usize)],
) -> Result<Vec<(usize, usize)>> {
    data.check(model)?;
    let mut radius = vec![f64::NEG_INFINITY; data.len()];
    for &(i, j) in targets {
        let d = model.distance_unchecked(&data.profiles[i], &data.profiles[j]);
        radius[i] = radius[i].max(d);
    }
    let per_point: Vec<Vec<(usize, usize)>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            (0..data.len())
                .filter(|&j| data.labels[j] != data.labels[i])
                .filter(|&j| model.distance_unchecked(&data.profiles[i], &data.profiles[j]) < radius[i])
                .map(|j| (i, j))
                .collect()
        })
        .collect();
    Ok(per_point.into_iter().flatten().collect())
}

fn pair_distances(data: &EncodedData, model: &WeightModel, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .par_iter()
        .map(|&(i, j)| model.distance_unchecked(&data.profiles[i], &data.profiles[j]))
        .collect()
}

fn check_pairs(data: &EncodedData, pairs: &PairSet) -> Result<()> {
    let n = data.len();
    let in_range = |&(i, j): &(usize, usize)| i < n && j < n;
    if pairs.positives.iter().chain(&pairs.negatives).all(in_range) {
        Ok(())
    } else {
        Err(Error::InvalidConfig("pair index out of range".into()))
    }
}

/// Loss value and, when `grad` is given, its gradient written into it.
fn loss_and_gradient(
    model: &WeightModel,
    data: &EncodedData,
    pairs: &PairSet,
    cfg: &TrainConfig,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let w = model.raw();
    let mut total = cfg.beta * w.iter().map(|x| x * x).sum::<f64>();
    if let Some(g) = grad.as_deref_mut() {
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi = 2.0 * cfg.beta * wi;
        }
    }
    let pos = pair_distances(data, model, &pairs.positives);
    for (&(i, j), d) in pairs.positives.iter().zip(pos) {
        if d > cfg.mu1 {
            total += d - cfg.mu1;
            if let Some(g) = grad.as_deref_mut() {
                model.add_gradient_unchecked(&data.profiles[i], &data.profiles[j], 1.0, g);
            }
        }
    }
    let neg = pair_distances(data, model, &pairs.negatives);
    for (&(i, j), d) in pairs.negatives.iter().zip(neg) {
        if d < cfg.mu2 {
            total += cfg.mu2 - d;
            if let Some(g) = grad.as_deref_mut() {
                model.add_gradient_unchecked(&data.profiles[i], &data.profiles[j], -1.0, g);
            }
        }
    }
    total
}

pub fn loss(model: &WeightModel, data: &EncodedData, pairs: &PairSet, cfg: &TrainConfig) -> Result<f64> {
    data.check(model)?;
    check_pairs(data, pairs)?;
    Ok(loss_and_gradient(model, data, pairs, cfg, None))
}

/// Gradient of [`loss`] with respect to the raw weights. Hinges exactly at
/// their margin count as inactive.
pub fn loss_gradient(
    model: &WeightModel,
    data: &EncodedData,
    pairs: &PairSet,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    data.check(model)?;
    check_pairs(data, pairs)?;
    let mut grad = vec![0.0; model.dim()];
    loss_and_gradient(model, data, pairs, cfg, Some(&mut grad));
    Ok(grad)
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, dim: usize) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub weights: WeightModel,
    pub config: TrainConfig,
    pub final_loss: f64,
    /// Loss before each epoch's update, then the final loss; empty for
    /// models read from disk.
    pub loss_trace: Vec<f64>,
}

impl TrainedModel {
    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        self.weights.vocabulary()
    }

    pub fn shape(&self) -> GramShape {
        self.weights.shape()
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.loss_trace.first().copied()
    }
}

/// Indices of a class-stratified uniform subsample of size `cap`, in
/// increasing order. Every class keeps at least `min_per_class` members
/// (or all of them, if smaller).
pub fn stratified_subsample(labels: &[usize], cap: usize, min_per_class: usize, seed: u64) -> Vec<usize> {
    if labels.len() <= cap {
        return (0..labels.len()).collect();
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let n = labels.len();
    // proportional quotas, largest remainder first, then the floor guarantee
    let mut quotas: Vec<(usize, usize, usize)> = by_class
        .iter()
        .map(|(&l, members)| {
            let exact = members.len() * cap;
            (l, exact / n, exact % n)
        })
        .collect();
    let mut assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.cmp(&quotas[a].2).then(a.cmp(&b)));
    for &c in order.iter().cycle().take(quotas.len() * 2) {
        if assigned >= cap {
            break;
        }
        if quotas[c].1 < by_class[&quotas[c].0].len() {
            quotas[c].1 += 1;
            assigned += 1;
        }
    }
    for q in &mut quotas {
        q.1 = q.1.max(min_per_class.min(by_class[&q.0].len()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(cap);
    for (l, quota, _) in quotas {
        let mut members = by_class[&l].clone();
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..quota]);
    }
    chosen.sort_unstable();
    chosen
}

/// Trains weights on `data`.
///
/// The vocabulary covers every training tree. Pair construction and the
/// loss use a stratified subsample of at most `cfg.subsample_cap` points.
pub fn train(data: &[LabeledTree], shape: GramShape, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let labels: Vec<usize> = data.iter().map(|it| it.label).collect();
    let classes = class_sizes(&labels).len();
    if classes < 2 {
        return Err(Error::TooFewClasses(classes));
    }
    check_class_sizes(&labels, cfg.k)?;

    let vocab = Arc::new(build_vocabulary(data.iter().map(|it| &it.tree), shape)?);
    let chosen = stratified_subsample(&labels, cfg.subsample_cap, cfg.k + 1, cfg.seed);
    let subset: Vec<LabeledTree> = chosen.iter().map(|&i| data[i].clone()).collect();
    let encoded = EncodedData::new(&subset, &vocab)?;

    let mut model = WeightModel::unit(vocab);
    let positives = build_targets(&encoded, &model, cfg.k)?;
    let negatives = find_impostors(&encoded, &model, &positives)?;
    let mut pairs = PairSet { positives, negatives };

    let mut adam = Adam::new(cfg.eta, model.dim());
    let mut params = model.raw().to_vec();
    let mut grad = vec![0.0; model.dim()];
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        if epoch > 0 && epoch % cfg.impostor_refresh_every == 0 {
            pairs.negatives = find_impostors(&encoded, &model, &pairs.positives)?;
        }
        trace.push(loss_and_gradient(&model, &encoded, &pairs, cfg, Some(&mut grad)));
        adam.step(&mut params, &grad);
        model.set_raw(&params)?;
    }
    let final_loss = loss_and_gradient(&model, &encoded, &pairs, cfg, None);
    trace.push(final_loss);

    Ok(TrainedModel {
        weights: model,
        config: cfg.clone(),
        final_loss,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::unit_weight;
    use crate::tree::parse_tree;

    fn lt(s: &str, label: usize) -> LabeledTree {
        LabeledTree::new(parse_tree(s).unwrap(), label)
    }

    fn setup(items: &[LabeledTree], p: usize, q: usize) -> (WeightModel, EncodedData) {
        let shape = GramShape::new(p, q).unwrap();
        let vocab = Arc::new(build_vocabulary(items.iter().map(|it| &it.tree), shape).unwrap());
        let enc = EncodedData::new(items, &vocab).unwrap();
        (WeightModel::unit(vocab), enc)
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            k: 1,
            beta: 0.0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn two_points_pair_each_way() {
        let items = [lt("a(b)", 0), lt("a(c)", 0)];
        let (model, enc) = setup(&items, 1, 1);
        assert_eq!(build_targets(&enc, &model, 1).unwrap(), [(0, 1), (1, 0)]);
    }

    #[test]
    fn identical_trees_tie_to_lowest_index() {
        let items = [lt("a", 0), lt("a", 0), lt("a", 0)];
        let (model, enc) = setup(&items, 1, 1);
        assert_eq!(build_targets(&enc, &model, 1).unwrap(), [(0, 1), (1, 0), (2, 0)]);
    }

    #[test]
    fn small_classes_are_rejected() {
        let items = [lt("a", 0), lt("b", 1), lt("c", 1)];
        let (model, enc) = setup(&items, 1, 1);
        assert!(matches!(
            build_targets(&enc, &model, 1),
            Err(Error::DegenerateClass { label: 0, size: 1, needed: 2 })
        ));
    }

    #[test]
    fn impostors() {
        // far apart classes: no impostors
        let items = [
            lt("a(b)", 0),
            lt("a(c)", 0),
            lt("x(y(z,w))", 1),
            lt("x(y(z,v))", 1),
        ];
        let (model, enc) = setup(&items, 1, 2);
        let t = build_targets(&enc, &model, 1).unwrap();
        assert!(find_impostors(&enc, &model, &t).unwrap().is_empty());

        // a differently labeled duplicate is always an impostor
        let items = [lt("a(b)", 0), lt("a(c)", 0), lt("a(b)", 1), lt("q", 1)];
        let (model, enc) = setup(&items, 1, 2);
        let t = build_targets(&enc, &model, 1).unwrap();
        let imp = find_impostors(&enc, &model, &t).unwrap();
        assert!(imp.contains(&(0, 2)));
        assert!(imp.contains(&(2, 0)));
    }

    #[test]
    fn loss_examples() {
        // 6 + 2 grams, nothing shared
        let items = [lt("a(b,c,d)", 0), lt("x(y)", 0), lt("p", 1), lt("q", 1)];
        let (model, enc) = setup(&items, 1, 1);
        let single = PairSet {
            positives: vec![(0, 1)],
            negatives: vec![],
        };
        assert_eq!(model.distance_unchecked(&enc.profiles[0], &enc.profiles[1]), 8.0);
        let c = TrainConfig { mu1: 5.0, ..cfg() };
        assert_eq!(loss(&model, &enc, &single, &c).unwrap(), 3.0);

        // inactive hinges with w = 0 give zero loss
        let zero = WeightModel::from_raw(model.vocabulary().clone(), vec![0.0; model.dim()]).unwrap();
        let c = TrainConfig {
            mu1: 100.0,
            mu2: 0.0,
            beta: 1.0,
            ..cfg()
        };
        let pairs = PairSet {
            positives: vec![(0, 1), (2, 3)],
            negatives: vec![(0, 2)],
        };
        assert_eq!(loss(&zero, &enc, &pairs, &c).unwrap(), 0.0);
        assert!(loss_gradient(&zero, &enc, &pairs, &TrainConfig { beta: 0.0, ..c.clone() })
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
    }

    #[test]
    fn single_active_pair_gradient_is_distance_gradient() {
        let items = [lt("a(b,c)", 0), lt("a(c,b)", 0), lt("x", 1), lt("y", 1)];
        let (model, enc) = setup(&items, 1, 2);
        let pairs = PairSet {
            positives: vec![(0, 1)],
            negatives: vec![],
        };
        let c = TrainConfig { mu1: 1.0, ..cfg() };
        let g = loss_gradient(&model, &enc, &pairs, &c).unwrap();
        let expected =
            crate::metric::distance_gradient(&model, &enc.profiles[0], &enc.profiles[1]).unwrap();
        assert_eq!(g, expected);
    }

    #[test]
    fn regularizer_uses_raw_weights() {
        let items = [lt("a", 0), lt("a", 0), lt("b", 1), lt("b", 1)];
        let (model, enc) = setup(&items, 1, 1);
        let c = TrainConfig { beta: 0.5, ..cfg() };
        let l = loss(&model, &enc, &PairSet::default(), &c).unwrap();
        let w = unit_weight();
        assert!((l - 0.5 * w * w * model.dim() as f64).abs() < 1e-12);
        let g = loss_gradient(&model, &enc, &PairSet::default(), &c).unwrap();
        assert!(g.iter().all(|&gi| (gi - w).abs() < 1e-15));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(0.1, 2);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut adam = Adam::new(0.05, 1);
        let mut x = vec![4.0];
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 1.5)];
            adam.step(&mut x, &g);
        }
        assert!((x[0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn subsample_is_stratified_and_seeded() {
        let labels: Vec<usize> = (0..300).map(|i| usize::from(i % 3 == 0)).collect();
        let s = stratified_subsample(&labels, 200, 2, 9);
        assert_eq!(s.len(), 200);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        let ones = s.iter().filter(|&&i| labels[i] == 1).count();
        assert!((66..=67).contains(&ones));
        assert_eq!(s, stratified_subsample(&labels, 200, 2, 9));
        assert_ne!(s, stratified_subsample(&labels, 200, 2, 10));

        // tiny class keeps its floor
        let mut labels = vec![0; 500];
        labels[7] = 1;
        labels[400] = 1;
        let s = stratified_subsample(&labels, 100, 2, 1);
        assert!(s.contains(&7) && s.contains(&400));

        assert_eq!(stratified_subsample(&[0, 1, 0], 10, 2, 0), [0, 1, 2]);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let items = [lt("a(b)", 0), lt("a(c)", 0), lt("x(y)", 1), lt("x(z)", 1)];
        let c = TrainConfig { epochs: 0, ..cfg() };
        let m = train(&items, GramShape::new(1, 2).unwrap(), &c).unwrap();
        assert!(m.weights.raw().iter().all(|&w| w == unit_weight()));
        assert_eq!(m.loss_trace.len(), 1);
        assert_eq!(m.initial_loss(), Some(m.final_loss));
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let shape = GramShape::new(1, 1).unwrap();
        assert!(matches!(train(&[], shape, &cfg()), Err(Error::EmptyCollection)));
        let one_class = [lt("a", 0), lt("b", 0)];
        assert!(matches!(train(&one_class, shape, &cfg()), Err(Error::TooFewClasses(1))));
        let small = [lt("a", 0), lt("b", 0), lt("c", 1)];
        assert!(matches!(train(&small, shape, &cfg()), Err(Error::DegenerateClass { .. })));
        let bad = TrainConfig { eta: 0.0, ..cfg() };
        assert!(matches!(train(&one_class, shape, &bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn pair_validity_check() {
        let labels = [0, 0, 1];
        let good = PairSet {
            positives: vec![(0, 1)],
            negatives: vec![(0, 2)],
        };
        assert!(good.is_valid_for(&labels));
        let bad = PairSet {
            positives: vec![(0, 2)],
            negatives: vec![],
        };
        assert!(!bad.is_valid_for(&labels));
        let selfpair = PairSet {
            positives: vec![(1, 1)],
            negatives: vec![],
        };
        assert!(!selfpair.is_valid_for(&labels));
    }
}
