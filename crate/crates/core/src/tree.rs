//! Ordered labeled trees and their bracket notation.
//!
//! The textual form is `label` or `label(child, child, ...)`. Labels are
//! maximal runs of characters other than `(`, `)`, `,` and whitespace;
//! whitespace between tokens is ignored. The label `*` is reserved for the
//! dummy nodes of pq-extended trees and is rejected on input.

use std::fmt;

use thiserror::Error;

/// Label reserved for dummy nodes.
pub const DUMMY_LABEL: &str = "*";

/// Index of a node inside one [`Tree`].
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    label: String,
    children: Vec<NodeId>,
}

impl Node {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// A rooted, ordered, labeled tree.
///
/// Nodes are stored in preorder, so the root is always node 0 and two trees
/// are structurally equal exactly when their node vectors are equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unbalanced parentheses at byte {pos}")]
    Unbalanced { pos: usize },
    #[error("empty label at byte {pos}")]
    EmptyLabel { pos: usize },
    #[error("reserved label `*` at byte {pos}")]
    ReservedLabel { pos: usize },
    #[error("trailing input at byte {pos}")]
    TrailingInput { pos: usize },
    #[error("unexpected character {found:?} at byte {pos}")]
    Unexpected { found: char, pos: usize },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match *self {
            ParseError::Unbalanced { pos }
            | ParseError::EmptyLabel { pos }
            | ParseError::ReservedLabel { pos }
            | ParseError::TrailingInput { pos }
            | ParseError::Unexpected { pos, .. } => pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("label is empty")]
    Empty,
    #[error("label `*` is reserved for dummy nodes")]
    Reserved,
    #[error("label {0:?} contains a delimiter or whitespace")]
    Delimiter(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeShapeError {
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("child lists do not form a single rooted tree")]
    Malformed,
}

fn is_delimiter(c: char) -> bool {
    c == '(' || c == ')' || c == ',' || c.is_whitespace()
}

/// Checks that `label` can appear in a tree and survive a round-trip
/// through bracket notation.
pub fn validate_label(label: &str) -> Result<(), LabelError> {
    if label.is_empty() {
        return Err(LabelError::Empty);
    }
    if label == DUMMY_LABEL {
        return Err(LabelError::Reserved);
    }
    if label.chars().any(is_delimiter) {
        return Err(LabelError::Delimiter(label.to_owned()));
    }
    Ok(())
}

impl Tree {
    /// Single-node tree.
    pub fn leaf(label: impl Into<String>) -> Result<Tree, LabelError> {
        Tree::node(label, Vec::new())
    }

    /// Tree whose root has the given label and subtrees, in order.
    pub fn node(label: impl Into<String>, children: Vec<Tree>) -> Result<Tree, LabelError> {
        let label = label.into();
        validate_label(&label)?;
        let total = 1 + children.iter().map(Tree::size).sum::<usize>();
        let mut nodes = Vec::with_capacity(total);
        nodes.push(Node {
            label,
            children: Vec::with_capacity(children.len()),
        });
        for child in children {
            let offset = nodes.len();
            nodes[0].children.push(offset);
            nodes.extend(child.nodes.into_iter().map(|mut n| {
                for c in &mut n.children {
                    *c += offset;
                }
                n
            }));
        }
        Ok(Tree { nodes })
    }

    /// A path `labels[0] -> labels[1] -> ...`, first label at the root.
    pub fn chain<S: AsRef<str>>(labels: &[S]) -> Result<Tree, LabelError> {
        if labels.is_empty() {
            return Err(LabelError::Empty);
        }
        let mut nodes = Vec::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            validate_label(l.as_ref())?;
            let children = if i + 1 < labels.len() { vec![i + 1] } else { Vec::new() };
            nodes.push(Node {
                label: l.as_ref().to_owned(),
                children,
            });
        }
        Ok(Tree { nodes })
    }

    /// Builds a tree from per-node labels and ordered child lists under any
    /// numbering. Fails if the lists do not describe a single tree rooted
    /// at `root` that covers every node.
    pub fn from_parts(
        labels: Vec<String>,
        children: Vec<Vec<NodeId>>,
        root: NodeId,
    ) -> Result<Tree, TreeShapeError> {
        let n = labels.len();
        if n == 0 || children.len() != n || root >= n {
            return Err(TreeShapeError::Malformed);
        }
        for l in &labels {
            validate_label(l)?;
        }
        let mut labels: Vec<Option<String>> = labels.into_iter().map(Some).collect();
        let mut nodes: Vec<Node> = Vec::with_capacity(n);
        let mut new_id = vec![usize::MAX; n];
        // (old id, parent's new id)
        let mut stack = vec![(root, None::<NodeId>)];
        while let Some((old, parent)) = stack.pop() {
            if old >= n || new_id[old] != usize::MAX {
                return Err(TreeShapeError::Malformed);
            }
            let id = nodes.len();
            new_id[old] = id;
            if let Some(p) = parent {
                nodes[p].children.push(id);
            }
            nodes.push(Node {
                label: labels[old].take().unwrap_or_default(),
                children: Vec::with_capacity(children[old].len()),
            });
            for &c in children[old].iter().rev() {
                stack.push((c, Some(id)));
            }
        }
        if nodes.len() != n {
            return Err(TreeShapeError::Malformed);
        }
        Ok(Tree { nodes })
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node_ref(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id].label
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    /// Nodes in preorder.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn max_fanout(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).max().unwrap_or(0)
    }

    /// Parent of every node; `None` for the root.
    pub fn parents(&self) -> Vec<Option<NodeId>> {
        let mut parents = vec![None; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            for &c in &node.children {
                parents[c] = Some(id);
            }
        }
        parents
    }

    /// Node ids in postorder.
    pub fn postorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root(), 0usize)];
        while let Some((id, next)) = stack.pop() {
            let children = &self.nodes[id].children;
            if next < children.len() {
                stack.push((id, next + 1));
                stack.push((children[next], 0));
            } else {
                out.push(id);
            }
        }
        out
    }

    /// Canonical bracket notation, without whitespace.
    pub fn to_bracket(&self) -> String {
        let mut out = String::new();
        // (node, index of next child to emit)
        let mut stack = vec![(self.root(), 0usize)];
        while let Some((id, next)) = stack.pop() {
            let node = &self.nodes[id];
            if next == 0 {
                out.push_str(&node.label);
                if !node.children.is_empty() {
                    out.push('(');
                }
            }
            if next < node.children.len() {
                if next > 0 {
                    out.push(',');
                }
                stack.push((id, next + 1));
                stack.push((node.children[next], 0));
            } else if !node.children.is_empty() {
                out.push(')');
            }
        }
        out
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bracket())
    }
}

impl std::str::FromStr for Tree {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_tree(s)
    }
}

/// Parses bracket notation into a [`Tree`]. Positions in errors are byte
/// offsets into `text`.
pub fn parse_tree(text: &str) -> Result<Tree, ParseError> {
    let mut parser = Parser { text, pos: 0 };
    let mut nodes: Vec<Node> = Vec::new();
    // Nodes whose child list is still open, innermost last.
    let mut open: Vec<(NodeId, usize)> = Vec::new();

    loop {
        let label = parser.label()?;
        let id = nodes.len();
        if let Some(&(parent, _)) = open.last() {
            nodes[parent].children.push(id);
        }
        nodes.push(Node {
            label,
            children: Vec::new(),
        });

        parser.skip_ws();
        if parser.eat('(') {
            open.push((id, parser.pos - 1));
            continue;
        }

        // Close as many child lists as the input closes, then expect either
        // a sibling or the end of input.
        loop {
            parser.skip_ws();
            if open.is_empty() {
                return match parser.peek() {
                    None => Ok(Tree { nodes }),
                    Some(')') => Err(ParseError::Unbalanced { pos: parser.pos }),
                    Some(_) => Err(ParseError::TrailingInput { pos: parser.pos }),
                };
            }
            match parser.peek() {
                Some(',') => {
                    parser.pos += 1;
                    break;
                }
                Some(')') => {
                    parser.pos += 1;
                    open.pop();
                }
                None => {
                    let (_, at) = open.last().copied().unwrap_or_default();
                    return Err(ParseError::Unbalanced { pos: at });
                }
                Some(found) => return Err(ParseError::Unexpected { found, pos: parser.pos }),
            }
        }
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.text[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn label(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = self.rest();
        let len = rest.find(is_delimiter).unwrap_or(rest.len());
        let label = rest[..len].to_owned();
        if label.is_empty() {
            return Err(ParseError::EmptyLabel { pos: start });
        }
        if label == DUMMY_LABEL {
            return Err(ParseError::ReservedLabel { pos: start });
        }
        self.pos += len;
        Ok(label)
    }
}

/// Canonical bracket notation of `t`.
pub fn serialize_tree(t: &Tree) -> String {
    t.to_bracket()
}

pub fn tree_size(t: &Tree) -> usize {
    t.size()
}
