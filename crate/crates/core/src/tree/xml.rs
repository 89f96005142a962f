//! A deliberately small XML reader and writer.
//!
//! Supported: elements, attributes, character and entity references, comments
//! and an optional `<?xml ...?>` declaration. CDATA, DTDs, processing
//! instructions and namespaces are rejected or treated as plain names.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use indexmap::IndexMap;

use super::{is_valid_name, ContentSpec, DeweyPath, NodeLabel, TreeError, XmlTree, HOLE_ATTR};

const MAX_NESTING: usize = 256;

/// The reserved element marking unknown content.
pub(crate) const HOLE_TAG: &str = "hole";

pub(crate) struct Reader<'a> {
    pub(crate) src: &'a str,
    pub(crate) pos: usize,
}

pub(crate) fn malformed(position: usize, reason: impl Into<String>) -> TreeError {
    TreeError::MalformedXml {
        position,
        reason: reason.into(),
    }
}

/// A parsed start tag.
pub(crate) struct StartTag {
    pub(crate) name: String,
    pub(crate) attrs: IndexMap<String, String>,
    pub(crate) self_closing: bool,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Reader { src, pos: 0 }
    }

    pub(crate) fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    pub(crate) fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    pub(crate) fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), TreeError> {
        if self.rest().starts_with(s) {
            self.pos += s.len();
            Ok(())
        } else {
            Err(malformed(self.pos, format!("expected {s:?}")))
        }
    }

    /// Skips a comment if one starts here. Returns whether anything was skipped.
    pub(crate) fn skip_comment(&mut self) -> Result<bool, TreeError> {
        if !self.rest().starts_with("<!--") {
            return Ok(false);
        }
        let start = self.pos;
        match self.rest()[4..].find("-->") {
            Some(i) => {
                self.pos += 4 + i + 3;
                Ok(true)
            }
            None => Err(malformed(start, "unterminated comment")),
        }
    }

    pub(crate) fn skip_misc(&mut self) -> Result<(), TreeError> {
        loop {
            self.skip_ws();
            if !self.skip_comment()? {
                return Ok(());
            }
        }
    }

    fn name(&mut self) -> Result<String, TreeError> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':'))
        {
            self.bump();
        }
        let name = &self.src[start..self.pos];
        if !is_valid_name(name) {
            return Err(malformed(start, format!("invalid name {name:?}")));
        }
        Ok(name.to_string())
    }

    /// Parses `<name attr="v" ...>` or `<name .../>` starting at `<`.
    pub(crate) fn start_tag(&mut self) -> Result<StartTag, TreeError> {
        self.expect("<")?;
        let name = self.name()?;
        let mut attrs = IndexMap::new();
        loop {
            let before_ws = self.pos;
            self.skip_ws();
            match self.peek() {
                Some('/') => {
                    self.bump();
                    self.expect(">")?;
                    return Ok(StartTag {
                        name,
                        attrs,
                        self_closing: true,
                    });
                }
                Some('>') => {
                    self.bump();
                    return Ok(StartTag {
                        name,
                        attrs,
                        self_closing: false,
                    });
                }
                None => return Err(malformed(self.pos, "unexpected end inside a tag")),
                _ => {}
            }
            if self.pos == before_ws {
                return Err(malformed(self.pos, "expected whitespace before attribute"));
            }
            let at = self.pos;
            let key = self.name()?;
            self.skip_ws();
            self.expect("=")?;
            self.skip_ws();
            let quote = match self.bump() {
                Some(q @ ('"' | '\'')) => q,
                _ => return Err(malformed(self.pos, "expected a quoted attribute value")),
            };
            let vstart = self.pos;
            let Some(len) = self.rest().find(quote) else {
                return Err(malformed(vstart, "unterminated attribute value"));
            };
            let raw = &self.src[vstart..vstart + len];
            if let Some(i) = raw.find(['<', '>']) {
                return Err(malformed(
                    vstart + i,
                    "illegal character in attribute value",
                ));
            }
            let value = decode_entities(raw, vstart)?;
            self.pos = vstart + len + 1;
            if attrs.insert(key.clone(), value).is_some() {
                return Err(malformed(at, format!("duplicate attribute {key:?}")));
            }
        }
    }

    /// Parses `</name>` and checks it against `expected`.
    pub(crate) fn end_tag(&mut self, expected: &str) -> Result<(), TreeError> {
        let at = self.pos;
        self.expect("</")?;
        let name = self.name()?;
        self.skip_ws();
        self.expect(">")?;
        if name != expected {
            return Err(malformed(
                at,
                format!("mismatched end tag: expected </{expected}>, found </{name}>"),
            ));
        }
        Ok(())
    }

    /// Reads character data up to the next `<` (or end), decoded.
    pub(crate) fn text(&mut self) -> Result<(String, usize), TreeError> {
        let start = self.pos;
        let len = self.rest().find('<').unwrap_or(self.rest().len());
        let raw = &self.src[start..start + len];
        if let Some(i) = raw.find('>') {
            return Err(malformed(start + i, "illegal character '>' in text"));
        }
        self.pos = start + len;
        Ok((decode_entities(raw, start)?, start))
    }
}

pub(crate) fn decode_entities(raw: &str, base: usize) -> Result<String, TreeError> {
    if !raw.contains('&') {
        return Ok(raw.to_string());
    }
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    let mut offset = base;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        let after = &rest[i + 1..];
        let Some(semi) = after.find(';') else {
            return Err(malformed(offset + i, "unterminated entity reference"));
        };
        let name = &after[..semi];
        let ch = match name {
            "lt" => '<',
            "gt" => '>',
            "amp" => '&',
            "quot" => '"',
            "apos" => '\'',
            _ => {
                let code = if let Some(hex) = name.strip_prefix("#x") {
                    u32::from_str_radix(hex, 16).ok()
                } else if let Some(dec) = name.strip_prefix('#') {
                    dec.parse::<u32>().ok()
                } else {
                    None
                };
                code.and_then(char::from_u32)
                    .ok_or_else(|| malformed(offset + i, format!("unknown entity &{name};")))?
            }
        };
        if ch == '<' || ch == '>' {
            return Err(malformed(
                offset + i,
                "angle brackets cannot appear in content",
            ));
        }
        out.push(ch);
        let consumed = i + 1 + semi + 1;
        rest = &rest[consumed..];
        offset += consumed;
    }
    out.push_str(rest);
    Ok(out)
}

fn attr_spec(value: String) -> ContentSpec {
    if value == HOLE_ATTR {
        ContentSpec::Hole
    } else {
        ContentSpec::Literal(value)
    }
}

pub(crate) fn label_from_tag(tag: &StartTag) -> NodeLabel {
    NodeLabel {
        tag: tag.name.clone(),
        attrs: tag
            .attrs
            .iter()
            .map(|(k, v)| (k.clone(), attr_spec(v.clone())))
            .collect(),
        content: ContentSpec::Literal(String::new()),
    }
}

/// Content of a `<hole/>` marker: a hole, or a pattern if it carries one.
pub(crate) fn hole_content(tag: &StartTag, at: usize) -> Result<ContentSpec, TreeError> {
    match tag.attrs.get("pattern") {
        Some(src) => ContentSpec::pattern(src, 10_000).map_err(|e| malformed(at, e.to_string())),
        None => Ok(ContentSpec::Hole),
    }
}

/// What a finished element contributes to its label.
#[derive(Default)]
pub(crate) struct Body {
    pub(crate) segments: Vec<String>,
    pub(crate) children: u32,
    pub(crate) hole: Option<ContentSpec>,
}

impl Body {
    /// Leaf text is kept verbatim; text around child elements drops
    /// whitespace-only runs (indentation).
    pub(crate) fn content(self) -> ContentSpec {
        if let Some(h) = self.hole {
            return h;
        }
        if self.children == 0 {
            return ContentSpec::Literal(self.segments.concat());
        }
        ContentSpec::Literal(
            self.segments
                .into_iter()
                .filter(|s| !s.trim().is_empty())
                .collect(),
        )
    }
}

struct DocParser<'a> {
    r: Reader<'a>,
    nodes: BTreeMap<DeweyPath, NodeLabel>,
}

impl DocParser<'_> {
    fn element(&mut self, path: DeweyPath) -> Result<(), TreeError> {
        if path.depth() > MAX_NESTING {
            return Err(malformed(self.r.pos, "elements nested too deeply"));
        }
        let at = self.r.pos;
        let tag = self.r.start_tag()?;
        if tag.name == HOLE_TAG {
            return Err(malformed(
                at,
                "<hole/> may only appear as the sole child of an element",
            ));
        }
        let mut label = label_from_tag(&tag);
        if tag.self_closing {
            self.nodes.insert(path, label);
            return Ok(());
        }
        let mut body = Body::default();
        loop {
            let (text, text_at) = self.r.text()?;
            if !text.is_empty() {
                if body.hole.is_some() && !text.trim().is_empty() {
                    return Err(malformed(text_at, "text next to a <hole/> marker"));
                }
                body.segments.push(text);
            }
            if self.r.at_end() {
                return Err(malformed(
                    self.r.pos,
                    format!("unclosed element <{}>", tag.name),
                ));
            }
            if self.r.skip_comment()? {
                continue;
            }
            let rest = self.r.rest();
            if rest.starts_with("</") {
                self.r.end_tag(&tag.name)?;
                break;
            }
            if rest.starts_with("<!") || rest.starts_with("<?") {
                return Err(malformed(self.r.pos, "unsupported markup"));
            }
            if rest.starts_with("<hole") && rest[5..].starts_with(['/', '>', ' ', '\t', '\n', '\r'])
            {
                let hat = self.r.pos;
                let htag = self.r.start_tag()?;
                if !htag.self_closing {
                    self.r.end_tag(HOLE_TAG)?;
                }
                if body.children > 0
                    || body.hole.is_some()
                    || body.segments.iter().any(|s| !s.trim().is_empty())
                {
                    return Err(malformed(
                        hat,
                        "<hole/> must be the only content of its element",
                    ));
                }
                body.hole = Some(hole_content(&htag, hat)?);
                continue;
            }
            if body.hole.is_some() {
                return Err(malformed(
                    self.r.pos,
                    "<hole/> must be the only content of its element",
                ));
            }
            body.children += 1;
            self.element(path.child(body.children))?;
        }
        label.content = body.content();
        self.nodes.insert(path, label);
        Ok(())
    }
}

/// Parses a document into a tree. Never returns the top element.
pub fn parse_document(text: &str) -> Result<XmlTree, TreeError> {
    let mut p = DocParser {
        r: Reader::new(text.strip_prefix('\u{feff}').unwrap_or(text)),
        nodes: BTreeMap::new(),
    };
    p.r.skip_ws();
    if p.r.rest().starts_with("<?xml") {
        match p.r.rest().find("?>") {
            Some(i) => p.r.pos += i + 2,
            None => return Err(malformed(p.r.pos, "unterminated XML declaration")),
        }
    }
    p.r.skip_misc()?;
    if p.r.peek() != Some('<') {
        return Err(malformed(p.r.pos, "expected a root element"));
    }
    p.element(DeweyPath::root())?;
    p.r.skip_misc()?;
    if !p.r.at_end() {
        return Err(malformed(p.r.pos, "content after the root element"));
    }
    Ok(XmlTree::from_map_unchecked(p.nodes))
}

/// Outcome flag for serialization of the bottom element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SerializeStatus {
    Ok,
    /// The tree was the bottom element and produced no text.
    EmptyDocument,
}

fn escape_into(out: &mut String, s: &str, attr: bool) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attr => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
}

fn write_node(
    t: &XmlTree,
    path: &DeweyPath,
    partial: bool,
    out: &mut String,
) -> Result<(), TreeError> {
    let label = &t.nodes[path];
    if !partial && !label.is_concrete() {
        return Err(TreeError::NotConcrete(path.clone()));
    }
    out.push('<');
    out.push_str(&label.tag);
    for (k, v) in &label.attrs {
        let _ = write!(out, " {k}=\"");
        match v {
            ContentSpec::Literal(s) => escape_into(out, s, true),
            _ => out.push_str(HOLE_ATTR),
        }
        out.push('"');
    }
    let children = t.child_count(path);
    let text_empty = matches!(&label.content, ContentSpec::Literal(s) if s.is_empty());
    if children == 0 && text_empty {
        out.push_str("/>");
        return Ok(());
    }
    out.push('>');
    match &label.content {
        ContentSpec::Literal(s) => escape_into(out, s, false),
        ContentSpec::Hole => out.push_str("<hole/>"),
        ContentSpec::Pattern(p) => {
            out.push_str("<hole pattern=\"");
            escape_into(out, p.source(), true);
            out.push_str("\"/>");
        }
    }
    for i in 1..=children {
        write_node(t, &path.child(i), partial, out)?;
    }
    let _ = write!(out, "</{}>", label.tag);
    Ok(())
}

/// Serializes a concrete tree compactly, reporting an empty bottom.
pub fn serialize_with_status(t: &XmlTree) -> Result<(String, SerializeStatus), TreeError> {
    if t.is_top() {
        return Err(TreeError::TopUnserializable);
    }
    if t.is_bottom() {
        return Ok((String::new(), SerializeStatus::EmptyDocument));
    }
    let mut out = String::new();
    write_node(t, &DeweyPath::root(), false, &mut out)?;
    Ok((out, SerializeStatus::Ok))
}

/// Serializes a concrete tree compactly: text content precedes children and no
/// whitespace is inserted. The bottom element serializes to the empty string.
pub fn serialize(t: &XmlTree) -> Result<String, TreeError> {
    serialize_with_status(t).map(|(s, _)| s)
}

/// Serializes any non-top tree, writing holes as `<hole/>` and patterns as
/// `<hole pattern="..."/>`. Attribute patterns are written as holes.
pub fn serialize_partial(t: &XmlTree) -> Result<String, TreeError> {
    if t.is_top() {
        return Err(TreeError::TopUnserializable);
    }
    let mut out = String::new();
    if !t.is_bottom() {
        write_node(t, &DeweyPath::root(), true, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Node;

    #[test]
    fn smallest_document() {
        let t = parse_document("<dialog/>").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.root().unwrap().content, ContentSpec::literal(""));
        assert_eq!(t, parse_document("<dialog></dialog>").unwrap());
    }

    #[test]
    fn attributes_and_children() {
        let t = parse_document(r#"<dialog><turn role="user"/></dialog>"#).unwrap();
        let expected = XmlTree::from_root(
            Node::new(NodeLabel::new("dialog").with_text("")).child(Node::new(
                NodeLabel::new("turn")
                    .with_attr("role", ContentSpec::literal("user"))
                    .with_text(""),
            )),
        );
        assert_eq!(t, expected);
    }

    #[test]
    fn errors() {
        let cases = [
            "<a><b></a>",
            "<a x=\"1\" x=\"2\"/>",
            "<a>1 > 0</a>",
            "<a>&lt;</a>",
            "<a/><b/>",
            "<a>",
            "<1a/>",
            "<a><hole/><b/></a>",
            "<a x='<'/>",
            "<a><![CDATA[x]]></a>",
        ];
        for c in cases {
            assert!(
                matches!(parse_document(c), Err(TreeError::MalformedXml { .. })),
                "{c}"
            );
        }
    }

    #[test]
    fn mismatch_position_points_at_end_tag() {
        match parse_document("<a><b></a>") {
            Err(TreeError::MalformedXml { position, .. }) => assert_eq!(position, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn holes_and_patterns() {
        let t = parse_document(r#"<s i="__HOLE__"><hole/></s>"#).unwrap();
        let root = t.root().unwrap();
        assert_eq!(root.content, ContentSpec::Hole);
        assert_eq!(root.attrs["i"], ContentSpec::Hole);
        assert_eq!(
            serialize(&t),
            Err(TreeError::NotConcrete(DeweyPath::root()))
        );
        let p = parse_document(r#"<s><hole pattern="[0-9]+"/></s>"#).unwrap();
        assert!(matches!(p.root().unwrap().content, ContentSpec::Pattern(_)));
        assert_eq!(parse_document(&serialize_partial(&p).unwrap()).unwrap(), p);
        assert_eq!(parse_document(&serialize_partial(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn pretty_documents_ignore_indentation() {
        let t = parse_document(
            "<?xml version=\"1.0\"?>\n<!-- c -->\n<plan>\n  <step index=\"1\">Draft answer A.</step>\n</plan>\n",
        )
        .unwrap();
        assert_eq!(t.root().unwrap().content, ContentSpec::literal(""));
        assert_eq!(
            t.get(&DeweyPath::new([1])).unwrap().content,
            ContentSpec::literal("Draft answer A.")
        );
        assert_eq!(
            serialize(&t).unwrap(),
            r#"<plan><step index="1">Draft answer A.</step></plan>"#
        );
    }

    #[test]
    fn entities_round_trip() {
        let t = parse_document(r#"<a q="&quot;x&amp;y&quot;">Tom &amp; Jerry&#33;</a>"#).unwrap();
        assert_eq!(
            t.root().unwrap().content,
            ContentSpec::literal("Tom & Jerry!")
        );
        assert_eq!(parse_document(&serialize(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn bottom_and_top_serialization() {
        assert_eq!(
            serialize_with_status(&XmlTree::bottom()).unwrap(),
            (String::new(), SerializeStatus::EmptyDocument)
        );
        assert_eq!(
            serialize(&XmlTree::top()),
            Err(TreeError::TopUnserializable)
        );
    }
}
