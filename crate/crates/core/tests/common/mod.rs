#![allow(dead_code)]

//! Independent reference implementations used by the integration tests.
//! None of these call into the code under test beyond the `Tree` container.

use std::collections::HashMap;

use pqgram::Tree;
use rand::Rng;

pub const ALPHABET: [&str; 4] = ["a", "b", "c", "d"];

/// Random tree of exactly `size` nodes: the non-root nodes are split into
/// a random composition of child subtree sizes, recursively.
pub fn random_tree<R: Rng>(rng: &mut R, size: usize, alphabet: &[&str]) -> Tree {
    assert!(size >= 1);
    let label = alphabet[rng.gen_range(0..alphabet.len())];
    let mut rest = size - 1;
    let mut kids = Vec::new();
    while rest > 0 {
        let s = rng.gen_range(1..=rest);
        kids.push(random_tree(rng, s, alphabet));
        rest -= s;
    }
    Tree::node(label, kids).unwrap()
}

pub fn random_tree_upto<R: Rng>(rng: &mut R, max: usize, alphabet: &[&str]) -> Tree {
    let size = rng.gen_range(1..=max);
    random_tree(rng, size, alphabet)
}

/// All ordered trees with `n` nodes over `alphabet`.
pub fn all_trees(n: usize, alphabet: &[&str]) -> Vec<Tree> {
    let mut out = Vec::new();
    for label in alphabet {
        for kids in all_forests(n - 1, alphabet) {
            out.push(Tree::node(*label, kids).unwrap());
        }
    }
    out
}

fn all_forests(n: usize, alphabet: &[&str]) -> Vec<Vec<Tree>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for head in all_trees(first, alphabet) {
            for tail in all_forests(n - first, alphabet) {
                let mut f = vec![head.clone()];
                f.extend(tail);
                out.push(f);
            }
        }
    }
    out
}

/// pq-gram label tuples by materializing the extended tree and reading off
/// every anchor with p-1 ancestors and every window of q children.
pub fn brute_grams(t: &Tree, p: usize, q: usize) -> HashMap<Vec<String>, usize> {
    struct Ext {
        label: String,
        parent: Option<usize>,
        children: Vec<usize>,
    }
    let mut ext: Vec<Ext> = Vec::new();
    let mut add = |ext: &mut Vec<Ext>, label: &str, parent: Option<usize>| {
        let id = ext.len();
        ext.push(Ext { label: label.to_owned(), parent, children: Vec::new() });
        if let Some(pa) = parent {
            ext[pa].children.push(id);
        }
        id
    };
    let mut top = None;
    for _ in 0..p - 1 {
        top = Some(add(&mut ext, "*", top));
    }
    type AddNode<'a> = dyn FnMut(&mut Vec<Ext>, &str, Option<usize>) -> usize + 'a;
    fn copy(t: &Tree, v: usize, parent: Option<usize>, q: usize, ext: &mut Vec<Ext>, add: &mut AddNode) {
        let me = add(ext, t.label(v), parent);
        let kids = t.children(v);
        if kids.is_empty() {
            for _ in 0..q {
                add(ext, "*", Some(me));
            }
        } else {
            for _ in 0..q - 1 {
                add(ext, "*", Some(me));
            }
            for &c in kids {
                copy(t, c, Some(me), q, ext, add);
            }
            for _ in 0..q - 1 {
                add(ext, "*", Some(me));
            }
        }
    }
    copy(t, t.root(), top, q, &mut ext, &mut add);

    let mut out = HashMap::new();
    for v in 0..ext.len() {
        let mut stem = vec![ext[v].label.clone()];
        let mut cur = ext[v].parent;
        while let Some(a) = cur {
            if stem.len() == p {
                break;
            }
            stem.push(ext[a].label.clone());
            cur = ext[a].parent;
        }
        if stem.len() < p || ext[v].children.len() < q {
            continue;
        }
        stem.reverse();
        for window in ext[v].children.windows(q) {
            let mut tuple = stem.clone();
            tuple.extend(window.iter().map(|&c| ext[c].label.clone()));
            *out.entry(tuple).or_insert(0) += 1;
        }
    }
    out
}

/// Multiset union and intersection sizes.
pub fn multiset_union_intersection(
    a: &HashMap<Vec<String>, usize>,
    b: &HashMap<Vec<String>, usize>,
) -> (usize, usize) {
    let union = a.values().sum::<usize>() + b.values().sum::<usize>();
    let inter = a
        .iter()
        .map(|(k, &n)| n.min(b.get(k).copied().unwrap_or(0)))
        .sum();
    (union, inter)
}

/// Plain ln(1 + e^x); fine for the moderate weights used in tests.
pub fn softplus_ref(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

/// Dense weighted distance from gram multisets and a tuple-keyed weight
/// table; tuples missing from the table share `oov`.
pub fn dense_weighted(
    a: &HashMap<Vec<String>, usize>,
    b: &HashMap<Vec<String>, usize>,
    weight: &HashMap<Vec<String>, f64>,
    oov: f64,
) -> f64 {
    let mut keys: Vec<&Vec<String>> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut oov_a = 0i64;
    let mut oov_b = 0i64;
    let mut total = 0.0;
    for k in keys {
        let x = a.get(k).copied().unwrap_or(0) as i64;
        let y = b.get(k).copied().unwrap_or(0) as i64;
        match weight.get(k) {
            Some(w) => total += softplus_ref(*w) * (x - y).abs() as f64,
            None => {
                oov_a += x;
                oov_b += y;
            }
        }
    }
    total + softplus_ref(oov) * (oov_a - oov_b).abs() as f64
}

/// Tree edit distance by exhaustive search over Tai mappings: one-to-one
/// node pairs preserving ancestry and preorder. Unit costs.
pub fn ted_oracle(t1: &Tree, t2: &Tree) -> usize {
    let a = Flat::new(t1);
    let b = Flat::new(t2);
    let mut best = a.n + b.n;
    let mut used = vec![false; b.n];
    let mut pairs = Vec::new();
    search(&a, &b, 0, &mut used, &mut pairs, &mut best);
    best
}

struct Flat {
    n: usize,
    labels: Vec<String>,
    /// Preorder index range `[i, end[i])` is the subtree of `i`.
    end: Vec<usize>,
}

impl Flat {
    fn new(t: &Tree) -> Flat {
        let mut labels = Vec::new();
        let mut end = Vec::new();
        fn walk(t: &Tree, v: usize, labels: &mut Vec<String>, end: &mut Vec<usize>) {
            let me = labels.len();
            labels.push(t.label(v).to_owned());
            end.push(0);
            for &c in t.children(v) {
                walk(t, c, labels, end);
            }
            end[me] = labels.len();
        }
        walk(t, t.root(), &mut labels, &mut end);
        Flat { n: labels.len(), labels, end }
    }

    fn is_ancestor(&self, x: usize, y: usize) -> bool {
        x < y && y < self.end[x]
    }
}

fn search(
    a: &Flat,
    b: &Flat,
    i: usize,
    used: &mut [bool],
    pairs: &mut Vec<(usize, usize)>,
    best: &mut usize,
) {
    if i == a.n {
        let relabel = pairs.iter().filter(|&&(x, y)| a.labels[x] != b.labels[y]).count();
        let cost = relabel + (a.n - pairs.len()) + (b.n - pairs.len());
        *best = (*best).min(cost);
        return;
    }
    search(a, b, i + 1, used, pairs, best);
    for j in 0..b.n {
        if used[j] {
            continue;
        }
        let ok = pairs.iter().all(|&(x, y)| {
            (x < i) == (y < j) && a.is_ancestor(x, i) == b.is_ancestor(y, j)
        });
        if ok {
            used[j] = true;
            pairs.push((i, j));
            search(a, b, i + 1, used, pairs, best);
            pairs.pop();
            used[j] = false;
        }
    }
}
