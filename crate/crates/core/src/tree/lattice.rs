use std::collections::BTreeMap;

use indexmap::IndexMap;

use super::{ContentSpec, DeweyPath, NodeLabel, XmlTree};

/// How two incomparable texts are generalized by a meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LggMode {
    /// Fall back to a hole.
    #[default]
    Coarse,
    /// Use the union of the two languages as a pattern.
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeConfig {
    pub lgg: LggMode,
    /// Automaton state budget for pattern inclusion, union and intersection.
    pub state_cap: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            lgg: LggMode::Coarse,
            state_cap: 10_000,
        }
    }
}

fn label_le(a: &NodeLabel, b: &NodeLabel, cap: usize) -> bool {
    a.tag == b.tag
        && a.content.le(&b.content, cap)
        && a.attrs
            .iter()
            .all(|(k, v)| b.attrs.get(k).is_some_and(|w| v.le(w, cap)))
}

/// `t1 ⪯ t2` under the default configuration.
pub fn refines(t1: &XmlTree, t2: &XmlTree) -> bool {
    refines_with(&LatticeConfig::default(), t1, t2)
}

/// `t1 ⪯ t2`: every node of `t1` exists in `t2` at the same position with the
/// same tag, and its content and attributes are at most as specific.
pub fn refines_with(cfg: &LatticeConfig, t1: &XmlTree, t2: &XmlTree) -> bool {
    if t2.is_top() {
        return true;
    }
    if t1.is_top() {
        return false;
    }
    t1.nodes.len() <= t2.nodes.len()
        && t1.nodes.iter().all(|(p, l1)| {
            t2.nodes
                .get(p)
                .is_some_and(|l2| label_le(l1, l2, cfg.state_cap))
        })
}

fn meet_label(a: &NodeLabel, b: &NodeLabel, cfg: &LatticeConfig) -> NodeLabel {
    let attrs: IndexMap<String, ContentSpec> = a
        .attrs
        .iter()
        .filter_map(|(k, v)| b.attrs.get(k).map(|w| (k.clone(), v.meet(w, cfg))))
        .collect();
    NodeLabel {
        tag: a.tag.clone(),
        attrs,
        content: a.content.meet(&b.content, cfg),
    }
}

pub(crate) fn join_label(a: &NodeLabel, b: &NodeLabel, cfg: &LatticeConfig) -> Option<NodeLabel> {
    if a.tag != b.tag {
        return None;
    }
    let mut attrs = a.attrs.clone();
    for (k, w) in &b.attrs {
        let merged = match attrs.get(k) {
            Some(v) => v.join(w, cfg)?,
            None => w.clone(),
        };
        attrs.insert(k.clone(), merged);
    }
    Some(NodeLabel {
        tag: a.tag.clone(),
        attrs,
        content: a.content.join(&b.content, cfg)?,
    })
}

fn meet2(a: &XmlTree, b: &XmlTree, cfg: &LatticeConfig) -> XmlTree {
    if a.is_top() {
        return b.clone();
    }
    if b.is_top() {
        return a.clone();
    }
    let mut out: BTreeMap<DeweyPath, NodeLabel> = BTreeMap::new();
    // Document order visits parents and earlier siblings first.
    for (p, la) in &a.nodes {
        let Some(lb) = b.nodes.get(p) else { continue };
        if la.tag != lb.tag {
            continue;
        }
        let parent_ok = p.parent().is_none_or(|q| out.contains_key(&q));
        let sibling_ok = p.prev_sibling().is_none_or(|q| out.contains_key(&q));
        if parent_ok && sibling_ok {
            out.insert(p.clone(), meet_label(la, lb, cfg));
        }
    }
    XmlTree::from_map_unchecked(out)
}

/// Joins two trees; returns the first conflicting path when they have no
/// common refinement.
pub(crate) fn join2_explain(
    a: &XmlTree,
    b: &XmlTree,
    cfg: &LatticeConfig,
) -> Result<XmlTree, Option<DeweyPath>> {
    if a.is_top() || b.is_top() {
        return Err(None);
    }
    let mut out = a.nodes.clone();
    for (p, lb) in &b.nodes {
        let merged = match out.get(p) {
            Some(la) => join_label(la, lb, cfg).ok_or_else(|| Some(p.clone()))?,
            None => lb.clone(),
        };
        out.insert(p.clone(), merged);
    }
    Ok(XmlTree::from_map_unchecked(out))
}

fn join2(a: &XmlTree, b: &XmlTree, cfg: &LatticeConfig) -> XmlTree {
    join2_explain(a, b, cfg).unwrap_or_else(|_| XmlTree::top())
}

/// Greatest lower bound under the default configuration.
pub fn meet(ts: &[XmlTree]) -> XmlTree {
    meet_with(&LatticeConfig::default(), ts)
}

/// Greatest lower bound. The meet of no trees is the top element.
pub fn meet_with(cfg: &LatticeConfig, ts: &[XmlTree]) -> XmlTree {
    ts.iter().fold(XmlTree::top(), |acc, t| meet2(&acc, t, cfg))
}

/// Least upper bound under the default configuration.
pub fn join(ts: &[XmlTree]) -> XmlTree {
    join_with(&LatticeConfig::default(), ts)
}

/// Least upper bound. The join of no trees is the bottom element; any tag or
/// content conflict yields the top element.
pub fn join_with(cfg: &LatticeConfig, ts: &[XmlTree]) -> XmlTree {
    let mut acc = XmlTree::bottom();
    for t in ts {
        acc = join2(&acc, t, cfg);
        if acc.is_top() {
            break;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::parse_document;

    fn doc(s: &str) -> XmlTree {
        parse_document(s).unwrap()
    }

    #[test]
    fn bottom_and_top() {
        let t = doc("<a><b/></a>");
        assert!(refines(&XmlTree::bottom(), &t));
        assert!(refines(&t, &XmlTree::top()));
        assert!(!refines(&XmlTree::top(), &t));
        assert_eq!(meet(&[t.clone(), XmlTree::bottom()]), XmlTree::bottom());
        assert_eq!(join(&[t.clone(), XmlTree::bottom()]), t);
        assert_eq!(meet(&[t.clone(), XmlTree::top()]), t);
    }

    #[test]
    fn filling_a_hole_refines() {
        let t1 = doc(r#"<plan><step index="1"><hole/></step></plan>"#);
        let t2 = doc(r#"<plan><step index="1">Draft answer A.</step></plan>"#);
        assert!(refines(&t1, &t2));
        assert!(!refines(&t2, &t1));
    }

    #[test]
    fn root_tag_conflict_joins_to_top() {
        assert!(join(&[doc("<a/>"), doc("<b/>")]).is_top());
        assert_eq!(meet(&[doc("<a/>"), doc("<b/>")]), XmlTree::bottom());
    }

    #[test]
    fn join_takes_the_larger_support() {
        let a = doc("<turn><plan/></turn>");
        let b = doc("<turn><plan/><answer/></turn>");
        assert_eq!(join(&[a.clone(), b.clone()]), b);
        assert_eq!(meet(&[a.clone(), b]), a);
    }

    #[test]
    fn meet_generalizes_differing_text() {
        let a = doc("<turn><step>one</step></turn>");
        let b = doc("<turn><step>two</step></turn>");
        let m = meet(&[a, b]);
        assert_eq!(
            m.get(&DeweyPath::new([1])).unwrap().content,
            ContentSpec::Hole
        );
    }

    #[test]
    fn meet_drops_subtrees_after_a_tag_mismatch() {
        let a = doc("<r><x/><y/><z/></r>");
        let b = doc("<r><x/><q/><z/></r>");
        let m = meet(&[a, b]);
        assert_eq!(m.len(), 2);
        assert!(m.get(&DeweyPath::new([3])).is_none());
    }
}
