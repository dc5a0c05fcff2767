//! MEI serialization: the mensural writer, the barred CMN writer and the
//! MEI-Basic subset validator.

pub mod basic;
pub mod cmn;
pub mod mensural;

use crate::cmme::SourceDecl;
use crate::xml::XmlNode;

pub const MEI_NS: &str = "http://www.music-encoding.org/ns/mei";
pub const MEI_VERSION: &str = "5.1";

fn mei_root(version: &str) -> XmlNode {
    XmlNode::new("mei").attr("xmlns", MEI_NS).attr("meiversion", version)
}

/// Sanitizes free text into an `xml:id` fragment.
pub(crate) fn id_fragment(s: &str) -> String {
    let frag: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if frag.is_empty() {
        "_".to_string()
    } else {
        frag
    }
}

pub(crate) fn source_xml_id(prefix: &str, source: &str) -> String {
    format!("{prefix}-src-{}", id_fragment(source))
}

/// `meiHead` with title, composer and editor. Sources are listed when given.
fn mei_head(title: &str, composer: &str, editor: &str, sources: &[SourceDecl], prefix: &str) -> XmlNode {
    let mut title_stmt = XmlNode::new("titleStmt").child(XmlNode::new("title").text(title));
    let mut resp = XmlNode::new("respStmt");
    for (role, name) in [("composer", composer), ("editor", editor)] {
        if !name.is_empty() {
            resp.push(XmlNode::new("persName").attr("role", role).text(name));
        }
    }
    if !resp.is_empty() {
        title_stmt.push(resp);
    }
    let mut file_desc = XmlNode::new("fileDesc").child(title_stmt).child(XmlNode::new("pubStmt"));
    if !sources.is_empty() {
        let mut desc = XmlNode::new("sourceDesc");
        for s in sources {
            desc.push(
                XmlNode::new("source")
                    .attr("xml:id", source_xml_id(prefix, &s.id))
                    .attr("label", &s.id)
                    .child(XmlNode::new("bibl").child(XmlNode::new("title").text(&s.name))),
            );
        }
        file_desc.push(desc);
    }
    XmlNode::new("meiHead").child(file_desc)
}
