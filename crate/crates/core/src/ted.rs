//! Exact tree edit distance with the Zhang-Shasha keyroot dynamic program.

use crate::error::{Error, Result};
use crate::tree::Tree;

/// Costs of the three node edit operations. Relabeling a node to its own
/// label is free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditCostTable {
    insert: f64,
    delete: f64,
    relabel: f64,
}

impl Default for EditCostTable {
    fn default() -> Self {
        EditCostTable::unit()
    }
}

impl EditCostTable {
    pub fn unit() -> EditCostTable {
        EditCostTable {
            insert: 1.0,
            delete: 1.0,
            relabel: 1.0,
        }
    }

    pub fn new(insert: f64, delete: f64, relabel: f64) -> Result<EditCostTable> {
        for (name, c) in [("insert", insert), ("delete", delete), ("relabel", relabel)] {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} cost must be finite and >= 0, got {c}")));
            }
        }
        Ok(EditCostTable { insert, delete, relabel })
    }

    pub fn insert(&self) -> f64 {
        self.insert
    }

    pub fn delete(&self) -> f64 {
        self.delete
    }

    pub fn relabel(&self, a: &str, b: &str) -> f64 {
        if a == b {
            0.0
        } else {
            self.relabel
        }
    }
}

/// Postorder view of a tree with leftmost-leaf descendants and keyroots,
/// computed once per tree.
#[derive(Debug, Clone)]
pub struct TedTree {
    labels: Vec<String>,
    // 1-based postorder positions; index 0 unused.
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

impl TedTree {
    pub fn new(t: &Tree) -> TedTree {
        let post = t.postorder();
        let n = post.len();
        let mut rank = vec![0usize; n];
        for (i, &id) in post.iter().enumerate() {
            rank[id] = i + 1;
        }
        let mut labels = Vec::with_capacity(n + 1);
        labels.push(String::new());
        let mut leftmost = vec![0usize; n + 1];
        for (i, &id) in post.iter().enumerate() {
            labels.push(t.label(id).to_owned());
            // children precede their parent in postorder
            leftmost[i + 1] = match t.children(id).first() {
                Some(&c) => leftmost[rank[c]],
                None => i + 1,
            };
        }
        // A keyroot is the highest-numbered node for its leftmost leaf.
        let mut last = vec![0usize; n + 1];
        for i in 1..=n {
            last[leftmost[i]] = i;
        }
        let mut keyroots: Vec<usize> = (1..=n).filter(|&i| last[leftmost[i]] == i).collect();
        keyroots.sort_unstable();
        TedTree {
            labels,
            leftmost,
            keyroots,
        }
    }

    pub fn size(&self) -> usize {
        self.labels.len() - 1
    }
}

/// Minimum-cost edit script length between two preprocessed trees.
pub fn ted_preprocessed(a: &TedTree, b: &TedTree, costs: &EditCostTable) -> f64 {
    let (n, m) = (a.size(), b.size());
    let cols = m + 1;
    let mut treedist = vec![0.0f64; (n + 1) * cols];
    let mut forest = vec![0.0f64; (n + 1) * cols];
    let (ins, del) = (costs.insert, costs.delete);

    for &i in &a.keyroots {
        for &j in &b.keyroots {
            let (li, lj) = (a.leftmost[i], b.leftmost[j]);
            // forest indices are shifted so that (li-1, lj-1) maps to (0, 0)
            let fw = j - lj + 2;
            let at = |x: usize, y: usize| (x + 1 - li) * fw + (y + 1 - lj);
            forest[at(li - 1, lj - 1)] = 0.0;
            for x in li..=i {
                forest[at(x, lj - 1)] = forest[at(x - 1, lj - 1)] + del;
            }
            for y in lj..=j {
                forest[at(li - 1, y)] = forest[at(li - 1, y - 1)] + ins;
            }
            for x in li..=i {
                for y in lj..=j {
                    let delete = forest[at(x - 1, y)] + del;
                    let insert = forest[at(x, y - 1)] + ins;
                    if a.leftmost[x] == li && b.leftmost[y] == lj {
                        let relabel =
                            forest[at(x - 1, y - 1)] + costs.relabel(&a.labels[x], &b.labels[y]);
                        let best = delete.min(insert).min(relabel);
                        forest[at(x, y)] = best;
                        treedist[x * cols + y] = best;
                    } else {
                        let subtree = forest[at(a.leftmost[x] - 1, b.leftmost[y] - 1)]
                            + treedist[x * cols + y];
                        forest[at(x, y)] = delete.min(insert).min(subtree);
                    }
                }
            }
        }
    }
    treedist[n * cols + m]
}

pub fn tree_edit_distance(t1: &Tree, t2: &Tree, costs: &EditCostTable) -> f64 {
    ted_preprocessed(&TedTree::new(t1), &TedTree::new(t2), costs)
}
