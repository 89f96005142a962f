//! Trees read from an unfinished document, as seen during decoding.

use std::collections::BTreeMap;

use super::xml::{hole_content, label_from_tag, malformed, Body, Reader, HOLE_TAG};
use super::{ContentSpec, DeweyPath, NodeLabel, TreeError, XmlTree};

/// A document prefix: the elements seen so far plus the chain of elements
/// whose end tag has not arrived yet.
///
/// Open elements carry hole content because their text may still grow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialTree {
    pub tree: XmlTree,
    /// Open elements from the root downwards.
    pub open: Vec<DeweyPath>,
}

impl PartialTree {
    /// A finished tree with nothing left open.
    pub fn closed(tree: XmlTree) -> Self {
        PartialTree {
            tree,
            open: Vec::new(),
        }
    }

    pub fn is_open(&self, path: &DeweyPath) -> bool {
        self.open.contains(path)
    }

    /// True once the root element has been closed.
    pub fn is_complete(&self) -> bool {
        self.open.is_empty() && !self.tree.is_bottom()
    }
}

/// Reads as much structure as `prefix` determines. A trailing incomplete tag,
/// comment or entity is ignored; anything already malformed is an error.
pub fn parse_prefix(prefix: &str) -> Result<PartialTree, TreeError> {
    let mut r = Reader::new(prefix.strip_prefix('\u{feff}').unwrap_or(prefix));
    let mut nodes: BTreeMap<DeweyPath, NodeLabel> = BTreeMap::new();
    let mut stack: Vec<(DeweyPath, NodeLabel, Body, String)> = Vec::new();
    let mut root_done = false;

    r.skip_ws();
    if r.rest().starts_with("<?xml") {
        match r.rest().find("?>") {
            Some(i) => r.pos += i + 2,
            None => return Ok(finish(nodes, stack)),
        }
    }

    loop {
        if stack.is_empty() {
            r.skip_ws();
            if r.rest().starts_with("<!--") && !r.rest().contains("-->") {
                return Ok(finish(nodes, stack));
            }
            if r.skip_comment()? {
                continue;
            }
            if r.at_end() || (r.rest().starts_with('<') && !r.rest().contains('>')) {
                return Ok(finish(nodes, stack));
            }
            if root_done {
                return Err(malformed(r.pos, "content after the root element"));
            }
            if r.peek() != Some('<') {
                return Err(malformed(r.pos, "expected a root element"));
            }
            let at = r.pos;
            let tag = r.start_tag()?;
            if tag.name == HOLE_TAG {
                return Err(malformed(at, "<hole/> cannot be the root"));
            }
            let label = label_from_tag(&tag);
            if tag.self_closing {
                nodes.insert(DeweyPath::root(), label);
                root_done = true;
            } else {
                stack.push((DeweyPath::root(), label, Body::default(), tag.name));
            }
            continue;
        }

        // Inside an open element: text up to the next markup.
        let len = r.rest().find('<').unwrap_or(r.rest().len());
        let raw = &r.rest()[..len];
        let complete_text = match raw.rfind('&') {
            Some(i) if !raw[i..].contains(';') && len == r.rest().len() => &raw[..i],
            _ => raw,
        };
        let text_at = r.pos;
        if let Some(i) = complete_text.find('>') {
            return Err(malformed(text_at + i, "illegal character '>' in text"));
        }
        let text = super::xml::decode_entities(complete_text, text_at)?;
        r.pos += complete_text.len();
        if !text.is_empty() {
            stack.last_mut().unwrap().2.segments.push(text);
        }
        let rest = r.rest();
        if r.at_end() || len == rest.len() || !rest.contains('>') {
            return Ok(finish(nodes, stack));
        }
        if rest.starts_with("<!--") {
            if !rest.contains("-->") {
                return Ok(finish(nodes, stack));
            }
            r.skip_comment()?;
            continue;
        }
        if rest.starts_with("</") {
            let name = stack.last().unwrap().3.clone();
            r.end_tag(&name)?;
            let (path, mut label, body, _) = stack.pop().unwrap();
            label.content = body.content();
            nodes.insert(path, label);
            if stack.is_empty() {
                root_done = true;
            }
            continue;
        }
        if rest.starts_with("<!") || rest.starts_with("<?") {
            return Err(malformed(r.pos, "unsupported markup"));
        }
        let at = r.pos;
        let tag = r.start_tag()?;
        let top = stack.last_mut().unwrap();
        if tag.name == HOLE_TAG {
            if !tag.self_closing {
                if !r.rest().contains('>') {
                    return Ok(finish(nodes, stack));
                }
                r.end_tag(HOLE_TAG)?;
            }
            if top.2.children > 0 || top.2.hole.is_some() {
                return Err(malformed(
                    at,
                    "<hole/> must be the only content of its element",
                ));
            }
            top.2.hole = Some(hole_content(&tag, at)?);
            continue;
        }
        if top.2.hole.is_some() {
            return Err(malformed(
                at,
                "<hole/> must be the only content of its element",
            ));
        }
        top.2.children += 1;
        let path = top.0.child(top.2.children);
        let label = label_from_tag(&tag);
        if tag.self_closing {
            nodes.insert(path, label);
        } else {
            stack.push((path, label, Body::default(), tag.name));
        }
    }
}

fn finish(
    mut nodes: BTreeMap<DeweyPath, NodeLabel>,
    stack: Vec<(DeweyPath, NodeLabel, Body, String)>,
) -> PartialTree {
    let mut open = Vec::with_capacity(stack.len());
    for (path, mut label, _, _) in stack {
        label.content = ContentSpec::Hole;
        nodes.insert(path.clone(), label);
        open.push(path);
    }
    PartialTree {
        tree: XmlTree::from_map_unchecked(nodes),
        open,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::parse_document;

    #[test]
    fn open_chain_and_truncated_tag() {
        let p =
            parse_prefix(r#"<turn><answer format="xml">Yes<evidence ref="a" conf="0.9"/><evid"#)
                .unwrap();
        assert_eq!(p.open, vec![DeweyPath::root(), DeweyPath::new([1])]);
        assert_eq!(p.tree.len(), 3);
        assert_eq!(
            p.tree.get(&DeweyPath::new([1])).unwrap().content,
            ContentSpec::Hole
        );
        assert!(!p.is_complete());
    }

    #[test]
    fn complete_prefix_equals_document() {
        let src = r#"<a x="1">hi<b>t</b><c/></a>"#;
        let p = parse_prefix(src).unwrap();
        assert!(p.is_complete());
        assert_eq!(p.tree, parse_document(src).unwrap());
    }

    #[test]
    fn every_prefix_parses() {
        let src = r#"<?xml version="1.0"?><a x="1">hi &amp; <!-- c --><b>t</b><c><hole/></c></a>"#;
        for i in 0..=src.len() {
            if src.is_char_boundary(i) {
                parse_prefix(&src[..i]).unwrap_or_else(|e| panic!("{i}: {e}"));
            }
        }
    }

    #[test]
    fn malformed_prefix_is_an_error() {
        assert!(parse_prefix("<a></b>").is_err());
        assert!(parse_prefix("<a/><b").is_ok());
        assert!(parse_prefix("<a/><b/>").is_err());
    }
}
