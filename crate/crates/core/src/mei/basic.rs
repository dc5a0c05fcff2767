//! MEI-Basic subset check against the vendored whitelist.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use crate::xml::XmlNode;

const WHITELIST: &str = include_str!("../../data/mei_basic.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Whitelist {
    elements: BTreeMap<&'static str, BTreeSet<&'static str>>,
    global: BTreeSet<&'static str>,
}

impl Whitelist {
    fn parse(text: &'static str) -> Self {
        let mut elements = BTreeMap::new();
        let mut global = BTreeSet::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let mut words = line.split_whitespace();
            let name = words.next().expect("non-empty line");
            let attrs: BTreeSet<&str> = words.collect();
            if name == "*" {
                global.extend(attrs);
            } else {
                elements.insert(name, attrs);
            }
        }
        Whitelist { elements, global }
    }

    pub fn allows_element(&self, name: &str) -> bool {
        self.elements.contains_key(name)
    }

    pub fn allows_attribute(&self, element: &str, attr: &str) -> bool {
        self.global.contains(attr) || self.elements.get(element).is_some_and(|a| a.contains(attr))
    }
}

pub fn whitelist() -> &'static Whitelist {
    static LIST: OnceLock<Whitelist> = OnceLock::new();
    LIST.get_or_init(|| Whitelist::parse(WHITELIST))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Slash-separated element path from the root.
    pub path: String,
    pub element: String,
    /// Offending attribute; `None` when the element itself is not allowed.
    pub attribute: Option<String>,
}

/// Every element and attribute of `doc` outside the MEI-Basic whitelist.
pub fn validate_basic_subset(doc: &XmlNode) -> Vec<Violation> {
    let list = whitelist();
    let mut out = Vec::new();
    doc.walk(&mut |path, node| {
        if !list.allows_element(&node.name) {
            out.push(Violation { path: path.to_string(), element: node.name.clone(), attribute: None });
            return;
        }
        for (attr, _) in &node.attributes {
            if !list.allows_attribute(&node.name, attr) {
                out.push(Violation {
                    path: path.to_string(),
                    element: node.name.clone(),
                    attribute: Some(attr.clone()),
                });
            }
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mensural_element_is_flagged() {
        let doc = XmlNode::new("mei").child(XmlNode::new("layer").child(XmlNode::new("mensur").attr("sign", "O")));
        let v = validate_basic_subset(&doc);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].element, "mensur");
        assert_eq!(v[0].path, "/mei/layer/mensur");
    }

    #[test]
    fn unknown_attribute_on_note() {
        let doc = XmlNode::new("mei").child(XmlNode::new("note").attr("dur", "2").attr("colored", "true"));
        let v = validate_basic_subset(&doc);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].attribute.as_deref(), Some("colored"));
        assert_eq!(v[0].path, "/mei/note");
    }

    #[test]
    fn brackets_are_outside_the_subset() {
        assert!(!whitelist().allows_element("bracketSpan"));
        assert!(whitelist().allows_attribute("note", "xml:id"));
    }
}
