//! XML trees as maps from Dewey paths to node labels, ordered by refinement.

mod content;
mod lattice;
pub mod partial;
mod xml;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use thiserror::Error;

pub use content::{ContentSpec, Pattern, HOLE_ATTR};
pub(crate) use lattice::join_label;
pub use lattice::{
    join, join_with, meet, meet_with, refines, refines_with, LatticeConfig, LggMode,
};
pub use xml::{
    parse_document, serialize, serialize_partial, serialize_with_status, SerializeStatus,
};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("malformed XML at byte {position}: {reason}")]
    MalformedXml { position: usize, reason: String },
    #[error("tree is not concrete at path {0}")]
    NotConcrete(DeweyPath),
    #[error("the top element cannot be serialized")]
    TopUnserializable,
    #[error("invalid content pattern: {0}")]
    InvalidPattern(String),
    #[error("node set is not prefix- and sibling-closed at path {0}")]
    NotClosed(DeweyPath),
    #[error("invalid tag name {0:?}")]
    InvalidName(String),
}

/// Position of a node: 1-based child indices from the root.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct DeweyPath(Vec<u32>);

impl DeweyPath {
    pub fn root() -> Self {
        DeweyPath(Vec::new())
    }

    /// Panics if any index is zero.
    pub fn new(indices: impl Into<Vec<u32>>) -> Self {
        let v = indices.into();
        assert!(v.iter().all(|&i| i >= 1), "Dewey indices are 1-based");
        DeweyPath(v)
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, i: u32) -> DeweyPath {
        assert!(i >= 1, "Dewey indices are 1-based");
        let mut v = self.0.clone();
        v.push(i);
        DeweyPath(v)
    }

    pub fn parent(&self) -> Option<DeweyPath> {
        let (_, init) = self.0.split_last()?;
        Some(DeweyPath(init.to_vec()))
    }

    pub fn last(&self) -> Option<u32> {
        self.0.last().copied()
    }

    pub fn prev_sibling(&self) -> Option<DeweyPath> {
        match self.0.split_last() {
            Some((&i, init)) if i > 1 => {
                let mut v = init.to_vec();
                v.push(i - 1);
                Some(DeweyPath(v))
            }
            _ => None,
        }
    }

    pub fn is_prefix_of(&self, other: &DeweyPath) -> bool {
        other.0.starts_with(&self.0)
    }

    /// Appends `suffix` below `self`.
    pub fn join(&self, suffix: &DeweyPath) -> DeweyPath {
        let mut v = self.0.clone();
        v.extend_from_slice(&suffix.0);
        DeweyPath(v)
    }
}

impl fmt::Display for DeweyPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "/");
        }
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ".")?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for DeweyPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DeweyPath({self})")
    }
}

impl FromStr for DeweyPath {
    type Err = String;

    /// Accepts `/` or the empty string for the root, otherwise `1.2.3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "/" {
            return Ok(DeweyPath::root());
        }
        s.split('.')
            .map(|p| match p.parse::<u32>() {
                Ok(i) if i >= 1 => Ok(i),
                _ => Err(format!("bad path component {p:?} in {s:?}")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(DeweyPath)
    }
}

/// The label of a single node: tag, attributes and text content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLabel {
    pub tag: String,
    /// Compared as a map; insertion order is kept for serialization only.
    pub attrs: IndexMap<String, ContentSpec>,
    pub content: ContentSpec,
}

impl NodeLabel {
    /// A label with no attributes and unknown (hole) content.
    pub fn new(tag: impl Into<String>) -> Self {
        NodeLabel {
            tag: tag.into(),
            attrs: IndexMap::new(),
            content: ContentSpec::Hole,
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: ContentSpec) -> Self {
        self.attrs.insert(name.into(), value);
        self
    }

    pub fn with_content(mut self, content: ContentSpec) -> Self {
        self.content = content;
        self
    }

    pub fn with_text(self, text: impl Into<String>) -> Self {
        self.with_content(ContentSpec::Literal(text.into()))
    }

    pub fn attr(&self, name: &str) -> Option<&ContentSpec> {
        self.attrs.get(name)
    }

    /// The literal value of an attribute, if it is concrete.
    pub fn attr_text(&self, name: &str) -> Option<&str> {
        match self.attrs.get(name) {
            Some(ContentSpec::Literal(s)) => Some(s),
            _ => None,
        }
    }

    pub fn is_concrete(&self) -> bool {
        self.content.is_literal() && self.attrs.values().all(ContentSpec::is_literal)
    }
}

/// A tree written as nested nodes; convenient for templates and fixtures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub label: NodeLabel,
    pub children: Vec<Node>,
}

impl Node {
    pub fn new(label: NodeLabel) -> Self {
        Node {
            label,
            children: Vec::new(),
        }
    }

    pub fn child(mut self, node: Node) -> Self {
        self.children.push(node);
        self
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Node::size).sum::<usize>()
    }
}

/// An element of the refinement lattice.
///
/// The empty non-top tree is the bottom element. The top element is a
/// sentinel with no nodes, produced by joins that cannot be reconciled.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct XmlTree {
    nodes: BTreeMap<DeweyPath, NodeLabel>,
    top: bool,
}

pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl XmlTree {
    pub fn bottom() -> Self {
        XmlTree::default()
    }

    pub fn top() -> Self {
        XmlTree {
            nodes: BTreeMap::new(),
            top: true,
        }
    }

    pub fn is_top(&self) -> bool {
        self.top
    }

    pub fn is_bottom(&self) -> bool {
        !self.top && self.nodes.is_empty()
    }

    /// Builds a tree from explicit path/label pairs, checking closure.
    pub fn from_nodes(
        nodes: impl IntoIterator<Item = (DeweyPath, NodeLabel)>,
    ) -> Result<Self, TreeError> {
        let tree = XmlTree {
            nodes: nodes.into_iter().collect(),
            top: false,
        };
        tree.check_closed()?;
        Ok(tree)
    }

    pub(crate) fn from_map_unchecked(nodes: BTreeMap<DeweyPath, NodeLabel>) -> Self {
        debug_assert!(XmlTree {
            nodes: nodes.clone(),
            top: false
        }
        .check_closed()
        .is_ok());
        XmlTree { nodes, top: false }
    }

    pub fn from_root(root: Node) -> Self {
        let mut nodes = BTreeMap::new();
        fn walk(node: Node, path: DeweyPath, out: &mut BTreeMap<DeweyPath, NodeLabel>) {
            for (i, c) in node.children.into_iter().enumerate() {
                walk(c, path.child(i as u32 + 1), out);
            }
            out.insert(path, node.label);
        }
        walk(root, DeweyPath::root(), &mut nodes);
        XmlTree { nodes, top: false }
    }

    fn check_closed(&self) -> Result<(), TreeError> {
        for p in self.nodes.keys() {
            if let Some(parent) = p.parent() {
                if !self.nodes.contains_key(&parent) {
                    return Err(TreeError::NotClosed(p.clone()));
                }
            }
            if let Some(prev) = p.prev_sibling() {
                if !self.nodes.contains_key(&prev) {
                    return Err(TreeError::NotClosed(p.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &BTreeMap<DeweyPath, NodeLabel> {
        &self.nodes
    }

    pub fn into_nodes(self) -> BTreeMap<DeweyPath, NodeLabel> {
        self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, path: &DeweyPath) -> Option<&NodeLabel> {
        self.nodes.get(path)
    }

    pub fn contains(&self, path: &DeweyPath) -> bool {
        self.nodes.contains_key(path)
    }

    pub fn root(&self) -> Option<&NodeLabel> {
        self.nodes.get(&DeweyPath::root())
    }

    /// Paths in document (pre-)order.
    pub fn paths(&self) -> impl Iterator<Item = &DeweyPath> {
        self.nodes.keys()
    }

    pub fn child_count(&self, path: &DeweyPath) -> u32 {
        let mut n = 0;
        while self.nodes.contains_key(&path.child(n + 1)) {
            n += 1;
        }
        n
    }

    pub fn children(&self, path: &DeweyPath) -> Vec<DeweyPath> {
        (1..=self.child_count(path))
            .map(|i| path.child(i))
            .collect()
    }

    /// Paths strictly below `path`, in document order.
    pub fn descendants<'a>(
        &'a self,
        path: &'a DeweyPath,
    ) -> impl Iterator<Item = &'a DeweyPath> + 'a {
        self.nodes
            .range(path.clone()..)
            .skip(1)
            .take_while(move |(p, _)| path.is_prefix_of(p))
            .map(|(p, _)| p)
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.keys().map(DeweyPath::depth).max().unwrap_or(0)
    }

    pub fn is_concrete(&self) -> bool {
        !self.top && self.nodes.values().all(NodeLabel::is_concrete)
    }

    /// The subtree rooted at `path` in nested form.
    pub fn subtree(&self, path: &DeweyPath) -> Option<Node> {
        let label = self.nodes.get(path)?.clone();
        let children = self
            .children(path)
            .iter()
            .filter_map(|c| self.subtree(c))
            .collect();
        Some(Node { label, children })
    }

    /// Number of children of `path` whose tag is `tag`.
    pub fn count_children_tagged(&self, path: &DeweyPath, tag: &str) -> usize {
        self.children(path)
            .iter()
            .filter(|c| self.nodes.get(c).is_some_and(|l| l.tag == tag))
            .count()
    }

    /// Finds the first path in document order whose tag is `tag`.
    pub fn find_tag(&self, tag: &str) -> Option<&DeweyPath> {
        self.nodes
            .iter()
            .find(|(_, l)| l.tag == tag)
            .map(|(p, _)| p)
    }

    /// Inserts `node` as the new last child of `parent`; returns its path.
    ///
    /// This only ever adds nodes, so the result refines `self`.
    pub fn append_child(&mut self, parent: &DeweyPath, node: Node) -> Option<DeweyPath> {
        if self.top || !self.nodes.contains_key(parent) {
            return None;
        }
        let path = parent.child(self.child_count(parent) + 1);
        self.graft(&path, node);
        Some(path)
    }

    /// Writes `node` at `path`, overwriting labels it covers. Callers keep closure.
    pub(crate) fn graft(&mut self, path: &DeweyPath, node: Node) {
        for (i, c) in node.children.into_iter().enumerate() {
            self.graft(&path.child(i as u32 + 1), c);
        }
        self.nodes.insert(path.clone(), node.label);
    }

    pub fn set_label(&mut self, path: &DeweyPath, label: NodeLabel) -> bool {
        match self.nodes.get_mut(path) {
            Some(l) => {
                *l = label;
                true
            }
            None => false,
        }
    }

    pub fn label_mut(&mut self, path: &DeweyPath) -> Option<&mut NodeLabel> {
        self.nodes.get_mut(path)
    }

    /// Removes `path` and its subtree, shifting later siblings left.
    ///
    /// Deletion does not refine; this exists for building test counterexamples
    /// and for the explicit rewrite escape hatch.
    pub fn remove_subtree(&mut self, path: &DeweyPath) {
        let Some(parent) = path.parent() else {
            self.nodes.clear();
            return;
        };
        let depth = path.depth();
        let idx = path.last().unwrap_or(1);
        let old = std::mem::take(&mut self.nodes);
        for (p, l) in old {
            if parent.is_prefix_of(&p) && p.depth() >= depth {
                let i = p.0[depth - 1];
                if i == idx {
                    continue;
                }
                if i > idx {
                    let mut v = p.0.clone();
                    v[depth - 1] = i - 1;
                    self.nodes.insert(DeweyPath(v), l);
                    continue;
                }
            }
            self.nodes.insert(p, l);
        }
    }
}
