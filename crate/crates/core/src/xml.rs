//! Minimal owned XML tree used by both MEI writers.
//!
//! Attributes keep insertion order and names are unique per node. The
//! serializer is deterministic: 3-space indentation, one element per line,
//! text-only elements kept on a single line.

use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XmlChild {
    Node(XmlNode),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XmlNode {
    pub name: String,
    pub attributes: Vec<(String, String)>,
    pub children: Vec<XmlChild>,
}

impl XmlNode {
    pub fn new(name: impl Into<String>) -> Self {
        XmlNode { name: name.into(), attributes: Vec::new(), children: Vec::new() }
    }

    /// Builder form of [`XmlNode::set_attr`].
    pub fn attr(mut self, name: impl Into<String>, value: impl ToString) -> Self {
        self.set_attr(name, value);
        self
    }

    /// Sets an attribute, replacing the value in place if it already exists.
    pub fn set_attr(&mut self, name: impl Into<String>, value: impl ToString) {
        let name = name.into();
        let value = value.to_string();
        match self.attributes.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.attributes.push((name, value)),
        }
    }

    pub fn get_attr(&self, name: &str) -> Option<&str> {
        self.attributes.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }

    pub fn remove_attr(&mut self, name: &str) -> Option<String> {
        let idx = self.attributes.iter().position(|(n, _)| n == name)?;
        Some(self.attributes.remove(idx).1)
    }

    pub fn child(mut self, node: XmlNode) -> Self {
        self.children.push(XmlChild::Node(node));
        self
    }

    pub fn push(&mut self, node: XmlNode) {
        self.children.push(XmlChild::Node(node));
    }

    pub fn text(mut self, text: impl Into<String>) -> Self {
        self.children.push(XmlChild::Text(text.into()));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    pub fn element_children(&self) -> impl Iterator<Item = &XmlNode> {
        self.children.iter().filter_map(|c| match c {
            XmlChild::Node(n) => Some(n),
            XmlChild::Text(_) => None,
        })
    }

    pub fn text_content(&self) -> String {
        let mut s = String::new();
        for c in &self.children {
            match c {
                XmlChild::Text(t) => s.push_str(t),
                XmlChild::Node(n) => s.push_str(&n.text_content()),
            }
        }
        s
    }

    /// Depth-first visit of every element, with the slash-separated path
    /// from the root.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&str, &'a XmlNode)) {
        fn go<'a>(node: &'a XmlNode, path: &mut String, f: &mut impl FnMut(&str, &'a XmlNode)) {
            let len = path.len();
            path.push('/');
            path.push_str(&node.name);
            f(path, node);
            for c in node.element_children() {
                go(c, path, f);
            }
            path.truncate(len);
        }
        let mut path = String::new();
        go(self, &mut path, f);
    }

    /// All descendant elements (including self) with the given name.
    pub fn find_all<'a>(&'a self, name: &str) -> Vec<&'a XmlNode> {
        let mut out = Vec::new();
        self.walk(&mut |_, n| {
            if n.name == name {
                out.push(n);
            }
        });
        out
    }

    /// Serializes the tree as a UTF-8 document with an XML declaration.
    pub fn to_document(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        self.write_into(&mut out, 0);
        out
    }

    pub fn to_xml_string(&self) -> String {
        let mut out = String::new();
        self.write_into(&mut out, 0);
        out
    }

    fn write_into(&self, out: &mut String, depth: usize) {
        const INDENT: &str = "   ";
        for _ in 0..depth {
            out.push_str(INDENT);
        }
        out.push('<');
        out.push_str(&self.name);
        for (k, v) in &self.attributes {
            let _ = write!(out, " {k}=\"{}\"", escape(v, true));
        }
        if self.children.is_empty() {
            out.push_str("/>\n");
            return;
        }
        let only_text = self.children.iter().all(|c| matches!(c, XmlChild::Text(_)));
        if only_text {
            out.push('>');
            for c in &self.children {
                if let XmlChild::Text(t) = c {
                    out.push_str(&escape(t, false));
                }
            }
            let _ = writeln!(out, "</{}>", self.name);
            return;
        }
        out.push_str(">\n");
        for c in &self.children {
            match c {
                XmlChild::Node(n) => n.write_into(out, depth + 1),
                XmlChild::Text(t) => {
                    for _ in 0..=depth {
                        out.push_str(INDENT);
                    }
                    out.push_str(&escape(t, false));
                    out.push('\n');
                }
            }
        }
        for _ in 0..depth {
            out.push_str(INDENT);
        }
        let _ = writeln!(out, "</{}>", self.name);
    }
}

fn escape(s: &str, attr: bool) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attr => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_with_three_space_indent() {
        let doc = XmlNode::new("a")
            .attr("x", 1)
            .child(XmlNode::new("b").attr("y", "q\"<"))
            .child(XmlNode::new("c").text("R&D"));
        assert_eq!(
            doc.to_xml_string(),
            "<a x=\"1\">\n   <b y=\"q&quot;&lt;\"/>\n   <c>R&amp;D</c>\n</a>\n"
        );
    }

    #[test]
    fn set_attr_keeps_position_and_uniqueness() {
        let mut n = XmlNode::new("n").attr("a", 1).attr("b", 2);
        n.set_attr("a", 3);
        assert_eq!(n.attributes, vec![("a".into(), "3".into()), ("b".into(), "2".into())]);
    }

    #[test]
    fn walk_reports_paths() {
        let doc = XmlNode::new("a").child(XmlNode::new("b").child(XmlNode::new("c")));
        let mut paths = Vec::new();
        doc.walk(&mut |p, _| paths.push(p.to_string()));
        assert_eq!(paths, ["/a", "/a/b", "/a/b/c"]);
    }

    #[test]
    fn output_reparses() {
        let doc = XmlNode::new("root").child(XmlNode::new("t").text("a < b & c"));
        let s = doc.to_document();
        let parsed = roxmltree::Document::parse(&s).unwrap();
        assert_eq!(parsed.root_element().first_element_child().unwrap().text(), Some("a < b & c"));
    }
}
