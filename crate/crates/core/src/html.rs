//! Document tree to a single self-contained HTML page.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::diag::{Code, Diagnostic, Stage};
use crate::doc::{DocNode, Document, Inline, InlineStyle, ListKind, RefStyle};
use crate::math::{escape_html, render_math, to_mathml, MathRender};

/// Text shown before the list of unsupported packages.
pub const BANNER_TEXT: &str =
    "This paper uses packages the converter does not support yet. Some content may be missing or shown as LaTeX source:";

pub const EXPERIMENTAL_LABEL: &str = "Experimental HTML";

/// Embedded stylesheet. Colours are custom properties so the reader
/// chrome can switch themes by setting `data-theme` on the root element.
pub const STYLESHEET: &str = r#":root {
  color-scheme: light dark;
  --bg: #ffffff;
  --fg: #1b1b1b;
  --muted: #5c5c5c;
  --link: #0b57d0;
  --rule: #d0d0d0;
  --code-bg: #f3f3f3;
  --banner-bg: #fff4ce;
  --banner-fg: #3d2c00;
  --unknown-bg: #fde8e8;
  --unknown-fg: #8a1c1c;
  --font-scale: 1;
}
@media (prefers-color-scheme: dark) {
  :root:not([data-theme="light"]) {
    --bg: #16181c;
    --fg: #e4e4e4;
    --muted: #a8a8a8;
    --link: #8ab4f8;
    --rule: #3a3d42;
    --code-bg: #24272c;
    --banner-bg: #3d3200;
    --banner-fg: #fff4ce;
    --unknown-bg: #4a1f1f;
    --unknown-fg: #ffd2d2;
  }
}
html[data-theme="dark"] {
  --bg: #16181c;
  --fg: #e4e4e4;
  --muted: #a8a8a8;
  --link: #8ab4f8;
  --rule: #3a3d42;
  --code-bg: #24272c;
  --banner-bg: #3d3200;
  --banner-fg: #fff4ce;
  --unknown-bg: #4a1f1f;
  --unknown-fg: #ffd2d2;
}
html[data-theme="light"] { color-scheme: light; }
html[data-theme="dark"] { color-scheme: dark; }
body {
  margin: 0;
  background: var(--bg);
  color: var(--fg);
  font-family: Georgia, "Times New Roman", serif;
  line-height: 1.6;
}
header.paper-chrome {
  display: flex;
  flex-wrap: wrap;
  gap: 0.75rem;
  align-items: center;
  padding: 0.5rem 1rem;
  border-bottom: 1px solid var(--rule);
  font-family: system-ui, sans-serif;
  font-size: 0.9rem;
}
.experimental-label {
  border: 1px solid var(--muted);
  border-radius: 0.25rem;
  padding: 0 0.4rem;
  color: var(--muted);
}
.unknown-packages-banner {
  background: var(--banner-bg);
  color: var(--banner-fg);
  padding: 0.75rem 1rem;
  font-family: system-ui, sans-serif;
}
main {
  max-width: 48rem;
  margin: 0 auto;
  padding: 1rem;
  font-size: calc(var(--font-scale) * 1.05rem);
  overflow-wrap: break-word;
}
a { color: var(--link); }
img, svg, video { max-width: 100%; height: auto; }
figure { margin: 1.5rem 0; }
figcaption, caption { color: var(--muted); font-size: 0.95em; }
table { border-collapse: collapse; display: block; overflow-x: auto; max-width: 100%; }
td, th { border: 1px solid var(--rule); padding: 0.25rem 0.5rem; }
pre, code { background: var(--code-bg); font-family: ui-monospace, monospace; }
pre { padding: 0.75rem; overflow-x: auto; white-space: pre-wrap; }
blockquote { border-left: 3px solid var(--rule); margin-left: 0; padding-left: 1rem; }
.authors { color: var(--muted); }
.abstract { border-top: 1px solid var(--rule); border-bottom: 1px solid var(--rule); padding: 0.5rem 0; }
.abstract-title, .bibliography-title { font-weight: bold; }
.equation { display: flex; align-items: center; justify-content: center; gap: 1rem; overflow-x: auto; }
.eqnum { margin-left: auto; }
math[display="block"] { overflow-x: auto; }
.unknown-command, .unknown-environment, .math-fallback {
  background: var(--unknown-bg);
  color: var(--unknown-fg);
  border-radius: 0.2rem;
}
.unknown-command, .math-fallback code { font-family: ui-monospace, monospace; padding: 0 0.2rem; }
.smallcaps { font-variant: small-caps; }
.secnum { margin-right: 0.5em; }
.footnotes { border-top: 1px solid var(--rule); margin-top: 2rem; font-size: 0.9em; }
"#;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmitOptions {
    pub paper_id: String,
    pub lang: String,
    /// Fail instead of emitting an empty page.
    pub require_content: bool,
    /// Reader chrome script, referenced with `defer` when present.
    pub chrome_script: Option<String>,
    pub chrome_stylesheet: Option<String>,
    /// Base URL of the issue-intake service, exposed to the reader chrome.
    pub intake_url: Option<String>,
}

impl EmitOptions {
    pub fn new(paper_id: impl Into<String>) -> Self {
        EmitOptions {
            paper_id: paper_id.into(),
            ..Self::default()
        }
    }
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            paper_id: "paper".into(),
            lang: "en".into(),
            require_content: false,
            chrome_script: None,
            chrome_stylesheet: None,
            intake_url: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum AssetRole {
    Figure,
    InlineImage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Asset {
    pub path: String,
    pub role: AssetRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HtmlArtifact {
    pub html: String,
    pub warnings: Vec<Diagnostic>,
    pub includes_banner: bool,
    pub assets: Vec<Asset>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmitterFailure {
    #[error("document produced no content")]
    NoContent,
}

pub fn emit(doc: &Document, options: &EmitOptions) -> Result<HtmlArtifact, EmitterFailure> {
    if options.require_content && doc.is_empty() {
        return Err(EmitterFailure::NoContent);
    }
    let mut w = Writer::default();
    let includes_banner = !doc.unknown_packages.is_empty();

    w.out.push_str("<!DOCTYPE html>\n");
    let _ = write!(
        w.out,
        "<html lang=\"{}\" data-paper-id=\"{}\"",
        escape_html(&options.lang),
        escape_html(&options.paper_id)
    );
    if let Some(url) = &options.intake_url {
        let _ = write!(w.out, " data-intake-url=\"{}\"", escape_html(url));
    }
    w.out.push_str(">\n<head>\n<meta charset=\"utf-8\">\n");
    w.out.push_str("<meta name=\"viewport\" content=\"width=device-width, initial-scale=1\">\n");
    let _ = writeln!(
        w.out,
        "<meta name=\"generator\" content=\"structex {}\">",
        crate::CONVERTER_VERSION
    );
    let title = doc
        .metadata
        .title
        .as_deref()
        .map(plain)
        .filter(|t| !t.trim().is_empty())
        .unwrap_or_else(|| options.paper_id.clone());
    let _ = writeln!(w.out, "<title>{}</title>", escape_html(title.trim()));
    w.out.push_str("<style>\n");
    w.out.push_str(STYLESHEET);
    w.out.push_str("</style>\n");
    if let Some(href) = &options.chrome_stylesheet {
        let _ = writeln!(w.out, "<link rel=\"stylesheet\" href=\"{}\">", escape_html(&safe_url(href)));
    }
    w.out.push_str("</head>\n<body>\n");

    if includes_banner {
        let names: Vec<&str> = doc.unknown_packages.iter().map(String::as_str).collect();
        let _ = writeln!(
            w.out,
            "<div class=\"unknown-packages-banner\" role=\"note\">{} <span class=\"package-list\">{}</span></div>",
            escape_html(BANNER_TEXT),
            escape_html(&names.join(", "))
        );
    }
    let _ = writeln!(
        w.out,
        "<header class=\"paper-chrome\"><span class=\"experimental-label\">{EXPERIMENTAL_LABEL}</span>\
         <button type=\"button\" class=\"report-issue\" disabled=\"disabled\" aria-label=\"Report an issue with this page\">Report issue</button></header>"
    );

    w.out.push_str("<main>");
    if let Some(title) = &doc.metadata.title {
        w.out.push_str("<h1 class=\"title\">");
        w.inlines(title);
        w.out.push_str("</h1>");
    }
    if !doc.metadata.authors.is_empty() {
        w.out.push_str("<p class=\"authors\">");
        for (i, author) in doc.metadata.authors.iter().enumerate() {
            if i > 0 {
                w.out.push_str(", ");
            }
            w.out.push_str("<span class=\"author\">");
            w.inlines(author);
            w.out.push_str("</span>");
        }
        w.out.push_str("</p>");
    }
    if let Some(blocks) = &doc.metadata.abstract_blocks {
        w.out.push_str("<div class=\"abstract\" role=\"doc-abstract\"><p class=\"abstract-title\">Abstract</p>");
        w.blocks(blocks);
        w.out.push_str("</div>");
    }
    w.blocks(&doc.body);
    w.footnotes();
    w.out.push_str("</main>\n");
    if let Some(src) = &options.chrome_script {
        let _ = writeln!(w.out, "<script src=\"{}\" defer></script>", escape_html(&safe_url(src)));
    }
    w.out.push_str("</body>\n</html>\n");

    Ok(HtmlArtifact {
        html: w.out,
        warnings: w.warnings,
        includes_banner,
        assets: w.assets,
    })
}

/// Neutralise script-bearing URL schemes.
pub fn safe_url(url: &str) -> String {
    let compact: String = url
        .chars()
        .filter(|c| !c.is_whitespace() && !c.is_control())
        .collect::<String>()
        .to_ascii_lowercase();
    if ["javascript:", "vbscript:", "data:text/html"].iter().any(|s| compact.starts_with(s)) {
        "#".into()
    } else {
        url.to_string()
    }
}

fn plain(inlines: &[Inline]) -> String {
    let mut s = String::new();
    for i in inlines {
        match i {
            Inline::Text { text } | Inline::Code { text } => s.push_str(text),
            Inline::Styled { children, .. } | Inline::Link { text: children, .. } => s.push_str(&plain(children)),
            Inline::MathInline { tex } => s.push_str(tex),
            Inline::UnknownCommand { raw } => s.push_str(raw),
            Inline::Ref { resolved, key, .. } => s.push_str(resolved.as_deref().unwrap_or(key)),
            Inline::LineBreak => s.push(' '),
            _ => {}
        }
    }
    s
}

#[derive(Default)]
struct Writer {
    out: String,
    warnings: Vec<Diagnostic>,
    assets: Vec<Asset>,
    footnotes: Vec<String>,
}

impl Writer {
    fn id_attr(&mut self, id: Option<&str>) {
        if let Some(id) = id {
            let _ = write!(self.out, " id=\"{}\"", escape_html(id));
        }
    }

    fn blocks(&mut self, nodes: &[DocNode]) {
        for node in nodes {
            self.block(node);
        }
    }

    fn block(&mut self, node: &DocNode) {
        match node {
            DocNode::Section { level, title, label, number, children } => {
                let h = (*level).clamp(1, 4) + 1;
                self.out.push_str("<section");
                self.id_attr(label.as_deref());
                let _ = write!(self.out, "><h{h}>");
                if let Some(n) = number {
                    let _ = write!(self.out, "<span class=\"secnum\">{}</span>", escape_html(n));
                }
                self.inlines(title);
                let _ = write!(self.out, "</h{h}>");
                self.blocks(children);
                self.out.push_str("</section>");
            }
            DocNode::Paragraph { inlines } => {
                self.out.push_str("<p>");
                self.inlines(inlines);
                self.out.push_str("</p>");
            }
            DocNode::List { kind, items } => {
                let tag = match kind {
                    ListKind::Unordered => "ul",
                    ListKind::Ordered => "ol",
                    ListKind::Description => "dl",
                };
                let _ = write!(self.out, "<{tag}>");
                for item in items {
                    if *kind == ListKind::Description {
                        self.out.push_str("<dt>");
                        if let Some(label) = &item.label {
                            self.inlines(label);
                        }
                        self.out.push_str("</dt><dd>");
                        self.blocks(&item.children);
                        self.out.push_str("</dd>");
                    } else {
                        self.out.push_str("<li>");
                        if let Some(label) = &item.label {
                            self.out.push_str("<span class=\"item-label\">");
                            self.inlines(label);
                            self.out.push_str("</span> ");
                        }
                        self.blocks(&item.children);
                        self.out.push_str("</li>");
                    }
                }
                let _ = write!(self.out, "</{tag}>");
            }
            DocNode::Figure { graphic_path, alt_text, caption, label, number, body } => {
                self.out.push_str("<figure");
                self.id_attr(label.as_deref());
                self.out.push('>');
                if let Some(path) = graphic_path {
                    self.image(path, alt_text.as_deref(), AssetRole::Figure);
                }
                self.blocks(body);
                if caption.is_some() || number.is_some() {
                    self.out.push_str("<figcaption>");
                    if let Some(n) = number {
                        let _ = write!(self.out, "<span class=\"fignum\">Figure {}:</span> ", escape_html(n));
                    }
                    if let Some(c) = caption {
                        self.inlines(c);
                    }
                    self.out.push_str("</figcaption>");
                }
                self.out.push_str("</figure>");
            }
            DocNode::Table { rows, caption, label, number } => {
                self.out.push_str("<table");
                self.id_attr(label.as_deref());
                self.out.push('>');
                if caption.is_some() || number.is_some() {
                    self.out.push_str("<caption>");
                    if let Some(n) = number {
                        let _ = write!(self.out, "<span class=\"tabnum\">Table {}:</span> ", escape_html(n));
                    }
                    if let Some(c) = caption {
                        self.inlines(c);
                    }
                    self.out.push_str("</caption>");
                }
                self.out.push_str("<tbody>");
                for row in rows {
                    self.out.push_str("<tr>");
                    for cell in row {
                        self.out.push_str("<td>");
                        self.inlines(cell);
                        self.out.push_str("</td>");
                    }
                    self.out.push_str("</tr>");
                }
                self.out.push_str("</tbody></table>");
            }
            DocNode::MathDisplay { tex, labels, number } => {
                self.out.push_str("<div class=\"equation\"");
                self.id_attr(labels.first().map(String::as_str));
                self.out.push('>');
                for extra in labels.iter().skip(1) {
                    let _ = write!(self.out, "<span id=\"{}\"></span>", escape_html(extra));
                }
                self.math(tex, true);
                if let Some(n) = number {
                    let _ = write!(self.out, "<span class=\"eqnum\">({})</span>", escape_html(n));
                }
                self.out.push_str("</div>");
            }
            DocNode::Quote { children } => {
                self.out.push_str("<blockquote>");
                self.blocks(children);
                self.out.push_str("</blockquote>");
            }
            DocNode::Verbatim { text } => {
                let _ = write!(self.out, "<pre><code>{}</code></pre>", escape_html(text));
            }
            DocNode::UnknownEnvironment { name, raw } => {
                let _ = write!(
                    self.out,
                    "<div class=\"unknown-environment\" data-environment=\"{0}\"><pre>\\begin{{{0}}}{1}\\end{{{0}}}</pre></div>",
                    escape_html(name),
                    escape_html(raw)
                );
            }
            DocNode::Bibliography { entries } => {
                self.out.push_str("<div class=\"bibliography\" role=\"doc-bibliography\"><p class=\"bibliography-title\">References</p><ol>");
                for e in entries {
                    let _ = write!(self.out, "<li id=\"bib-{}\">", escape_html(&e.key));
                    self.inlines(&e.children);
                    self.out.push_str("</li>");
                }
                self.out.push_str("</ol></div>");
            }
        }
    }

    fn image(&mut self, path: &str, alt: Option<&str>, role: AssetRole) {
        let _ = write!(
            self.out,
            "<img src=\"{}\" alt=\"{}\" loading=\"lazy\">",
            escape_html(&safe_url(path)),
            escape_html(alt.unwrap_or(""))
        );
        self.assets.push(Asset { path: path.to_string(), role });
    }

    fn math(&mut self, tex: &str, display: bool) {
        match render_math(tex) {
            MathRender::Structured(node) => self.out.push_str(&to_mathml(&node, tex, display)),
            MathRender::Fallback { tex, diagnostic } => {
                self.warnings.push(diagnostic);
                let escaped = escape_html(&tex);
                let _ = write!(
                    self.out,
                    "<span class=\"math-fallback\" role=\"math\" aria-label=\"{escaped}\" data-tex=\"{escaped}\"><code>{escaped}</code></span>"
                );
            }
        }
    }

    fn inlines(&mut self, items: &[Inline]) {
        for item in items {
            self.inline(item);
        }
    }

    fn inline(&mut self, item: &Inline) {
        match item {
            Inline::Text { text } => self.out.push_str(&escape_html(text)),
            Inline::Styled { style, children } => {
                let (open, close) = match style {
                    InlineStyle::Emphasis => ("<em>", "</em>"),
                    InlineStyle::Bold => ("<strong>", "</strong>"),
                    InlineStyle::Italic => ("<i>", "</i>"),
                    InlineStyle::Monospace => ("<code>", "</code>"),
                    InlineStyle::SmallCaps => ("<span class=\"smallcaps\">", "</span>"),
                    InlineStyle::Underline => ("<u>", "</u>"),
                    InlineStyle::Superscript => ("<sup>", "</sup>"),
                    InlineStyle::Subscript => ("<sub>", "</sub>"),
                };
                self.out.push_str(open);
                self.inlines(children);
                self.out.push_str(close);
            }
            Inline::MathInline { tex } => self.math(tex, false),
            Inline::Ref { key, style, resolved } => {
                let text = resolved.as_deref().unwrap_or("??");
                let text = match style {
                    RefStyle::Equation => format!("({text})"),
                    RefStyle::Plain => text.to_string(),
                };
                let _ = write!(
                    self.out,
                    "<a class=\"ref\" href=\"#{}\">{}</a>",
                    escape_html(key),
                    escape_html(&text)
                );
            }
            Inline::Cite { keys } => {
                self.out.push_str("<span class=\"cite\">[");
                for (i, key) in keys.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    let k = escape_html(key);
                    let _ = write!(self.out, "<a href=\"#bib-{k}\">{k}</a>");
                }
                self.out.push_str("]</span>");
            }
            Inline::Link { url, text } => {
                let _ = write!(self.out, "<a href=\"{}\">", escape_html(&safe_url(url)));
                self.inlines(text);
                self.out.push_str("</a>");
            }
            Inline::UnknownCommand { raw } => {
                let _ = write!(
                    self.out,
                    "<span class=\"unknown-command\" title=\"Unsupported LaTeX command\">{}</span>",
                    escape_html(raw)
                );
            }
            Inline::Code { text } => {
                let _ = write!(self.out, "<code>{}</code>", escape_html(text));
            }
            Inline::Footnote { children } => {
                let mut inner = Writer::default();
                inner.inlines(children);
                self.warnings.append(&mut inner.warnings);
                self.assets.append(&mut inner.assets);
                self.footnotes.append(&mut inner.footnotes);
                self.footnotes.push(inner.out);
                let n = self.footnotes.len();
                let _ = write!(
                    self.out,
                    "<sup class=\"footnote-ref\"><a href=\"#fn{n}\" id=\"fnref{n}\">{n}</a></sup>"
                );
            }
            Inline::Image { path, alt } => {
                if alt.is_none() {
                    self.warnings.push(Diagnostic::warning(
                        Stage::Emit,
                        Code::MissingAltText,
                        format!("image {path} has no alt text"),
                    ));
                }
                self.image(path, alt.as_deref(), AssetRole::InlineImage);
            }
            Inline::Anchor { key } => {
                let _ = write!(self.out, "<span class=\"anchor\" id=\"{}\"></span>", escape_html(key));
            }
            Inline::LineBreak => self.out.push_str("<br>"),
        }
    }

    fn footnotes(&mut self) {
        if self.footnotes.is_empty() {
            return;
        }
        self.out.push_str("<aside class=\"footnotes\" role=\"doc-endnotes\"><ol>");
        for (i, note) in std::mem::take(&mut self.footnotes).iter().enumerate() {
            let n = i + 1;
            let _ = write!(
                self.out,
                "<li id=\"fn{n}\">{note} <a href=\"#fnref{n}\" aria-label=\"Back to text\">\u{21a9}</a></li>"
            );
        }
        self.out.push_str("</ol></aside>");
    }
}

// --- well-formedness ---------------------------------------------------------

const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "track", "wbr",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WellFormedError {
    #[error("byte {0}: unterminated tag")]
    UnterminatedTag(usize),
    #[error("byte {0}: bad tag name")]
    BadTagName(usize),
    #[error("byte {0}: attribute {1} is not quoted")]
    UnquotedAttribute(usize, String),
    #[error("byte {0}: </{1}> does not match <{2}>")]
    Mismatch(usize, String, String),
    #[error("byte {0}: </{1}> without an open element")]
    StrayClose(usize, String),
    #[error("unclosed <{0}>")]
    Unclosed(String),
    #[error("byte {0}: content outside the root element")]
    OutsideRoot(usize),
    #[error("more than one root element")]
    MultipleRoots,
    #[error("no root element")]
    NoRoot,
    #[error("byte {0}: unescaped {1}")]
    Unescaped(usize, char),
    #[error("byte {0}: void element <{1}> has a closing tag")]
    ClosedVoid(usize, String),
}

/// Structural HTML check: one root element, balanced and properly nested
/// tags, quoted attribute values, escaped text, and raw-text handling for
/// `style` and `script`.
pub fn check_well_formed(html: &str) -> Result<(), WellFormedError> {
    let bytes = html.as_bytes();
    let mut i = 0;
    let mut stack: Vec<String> = Vec::new();
    let mut roots = 0usize;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'<' {
            if html[i..].starts_with("<!--") {
                let end = html[i..].find("-->").ok_or(WellFormedError::UnterminatedTag(i))?;
                i += end + 3;
                continue;
            }
            if html[i..].starts_with("<!") {
                if !stack.is_empty() || roots > 0 {
                    return Err(WellFormedError::OutsideRoot(i));
                }
                let end = html[i..].find('>').ok_or(WellFormedError::UnterminatedTag(i))?;
                i += end + 1;
                continue;
            }
            let closing = bytes.get(i + 1) == Some(&b'/');
            let name_start = i + 1 + usize::from(closing);
            let mut j = name_start;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'-') {
                j += 1;
            }
            if j == name_start {
                return Err(WellFormedError::Unescaped(i, '<'));
            }
            let name = html[name_start..j].to_ascii_lowercase();
            let (end, self_closing) = scan_attributes(html, j)?;
            if closing {
                if VOID_ELEMENTS.contains(&name.as_str()) {
                    return Err(WellFormedError::ClosedVoid(i, name));
                }
                match stack.pop() {
                    Some(open) if open == name => {}
                    Some(open) => return Err(WellFormedError::Mismatch(i, name, open)),
                    None => return Err(WellFormedError::StrayClose(i, name)),
                }
                i = end;
                continue;
            }
            if stack.is_empty() {
                roots += 1;
                if roots > 1 {
                    return Err(WellFormedError::MultipleRoots);
                }
            }
            i = end;
            if self_closing || VOID_ELEMENTS.contains(&name.as_str()) {
                continue;
            }
            if name == "style" || name == "script" {
                let close = format!("</{name}");
                let rel = html[i..]
                    .to_ascii_lowercase()
                    .find(&close)
                    .ok_or(WellFormedError::Unclosed(name.clone()))?;
                i += rel;
                stack.push(name);
                continue;
            }
            stack.push(name);
            continue;
        }
        if stack.is_empty() && !b.is_ascii_whitespace() {
            return Err(WellFormedError::OutsideRoot(i));
        }
        if b == b'>' {
            return Err(WellFormedError::Unescaped(i, '>'));
        }
        if b == b'&' {
            check_entity(html, i)?;
        }
        i += 1;
    }
    if let Some(open) = stack.pop() {
        return Err(WellFormedError::Unclosed(open));
    }
    if roots == 0 {
        return Err(WellFormedError::NoRoot);
    }
    Ok(())
}

fn check_entity(html: &str, i: usize) -> Result<(), WellFormedError> {
    let rest = &html[i + 1..];
    let end = rest.find(';').filter(|&e| e > 0 && e <= 32).ok_or(WellFormedError::Unescaped(i, '&'))?;
    let body = &rest[..end];
    let ok = if let Some(num) = body.strip_prefix('#') {
        if let Some(hex) = num.strip_prefix('x').or_else(|| num.strip_prefix('X')) {
            !hex.is_empty() && hex.chars().all(|c| c.is_ascii_hexdigit())
        } else {
            !num.is_empty() && num.chars().all(|c| c.is_ascii_digit())
        }
    } else {
        body.chars().all(|c| c.is_ascii_alphanumeric())
    };
    if ok {
        Ok(())
    } else {
        Err(WellFormedError::Unescaped(i, '&'))
    }
}

/// Scan attributes from `i` to the end of the tag. Returns the index after
/// `>` and whether the tag was self-closing.
fn scan_attributes(html: &str, mut i: usize) -> Result<(usize, bool), WellFormedError> {
    let bytes = html.as_bytes();
    let start = i;
    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        match bytes.get(i) {
            None => return Err(WellFormedError::UnterminatedTag(start)),
            Some(b'>') => return Ok((i + 1, false)),
            Some(b'/') if bytes.get(i + 1) == Some(&b'>') => return Ok((i + 2, true)),
            _ => {}
        }
        let name_start = i;
        while i < bytes.len() && !matches!(bytes[i], b'=' | b'>' | b'/' | b'"' | b'\'' | b'<') && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i == name_start {
            return Err(WellFormedError::BadTagName(i));
        }
        let attr = html[name_start..i].to_string();
        if bytes.get(i) != Some(&b'=') {
            // Boolean attribute (`defer`).
            continue;
        }
        i += 1;
        let quote = match bytes.get(i) {
            Some(q @ (b'"' | b'\'')) => *q,
            _ => return Err(WellFormedError::UnquotedAttribute(i, attr)),
        };
        i += 1;
        let value_start = i;
        while i < bytes.len() && bytes[i] != quote {
            if bytes[i] == b'<' {
                return Err(WellFormedError::Unescaped(i, '<'));
            }
            i += 1;
        }
        if i >= bytes.len() {
            return Err(WellFormedError::UnterminatedTag(start));
        }
        for (k, _) in html[value_start..i].match_indices('&') {
            check_entity(html, value_start + k)?;
        }
        i += 1;
    }
}

/// Number of `prefers-color-scheme: dark` media rules in `css`.
pub fn dark_media_rule_count(css: &str) -> usize {
    css.match_indices("@media")
        .filter(|(i, _)| {
            let head = &css[*i..];
            let head = &head[..head.find('{').unwrap_or(head.len())];
            head.replace(' ', "").contains("prefers-color-scheme:dark")
        })
        .count()
}
