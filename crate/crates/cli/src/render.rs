//! ASCII drawing of a discourse tree.
//!
//! ```text
//! [1-2] elaboration  N <- S
//! |-- N [1] the cat sat
//! `-- S [2] because it was tired
//! ```
//!
//! The arrow points from satellite to nucleus; `<->` marks NN.

use toprst::{Document, Nuclearity, RstTree};

fn arrow(n: Nuclearity) -> &'static str {
    match n {
        Nuclearity::NS => "N <- S",
        Nuclearity::SN => "S -> N",
        Nuclearity::NN => "N <-> N",
    }
}

fn edu_text(doc: &Document, i: usize) -> String {
    doc.edus.get(i - 1).map(|e| e.tokens.join(" ")).unwrap_or_default()
}

pub fn render_tree(doc: &Document, tree: &RstTree) -> String {
    let mut out = String::new();
    match tree {
        RstTree::Leaf(i) => out.push_str(&format!("[{i}] {}\n", edu_text(doc, *i))),
        _ => draw(doc, tree, None, "", "", &mut out),
    }
    out
}

fn draw(doc: &Document, node: &RstTree, status: Option<&str>, lead: &str, rest: &str, out: &mut String) {
    let tag = status.map(|s| format!("{s} ")).unwrap_or_default();
    match node {
        RstTree::Leaf(i) => out.push_str(&format!("{lead}{tag}[{i}] {}\n", edu_text(doc, *i))),
        RstTree::Internal { left, right, label, .. } => {
            let span = node.span();
            out.push_str(&format!(
                "{lead}{tag}[{}-{}] {}  {}\n",
                span.start,
                span.end,
                label.relation,
                arrow(label.nuclearity)
            ));
            let (ls, rs) = label.nuclearity.statuses();
            draw(doc, left, Some(ls.as_str()), &format!("{rest}|-- "), &format!("{rest}|   "), out);
            draw(doc, right, Some(rs.as_str()), &format!("{rest}`-- "), &format!("{rest}    "), out);
        }
    }
}
