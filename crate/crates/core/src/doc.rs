//! Semantic document tree built from the expanded token stream.
//!
//! Parsing never fails. Malformed input (mismatched environments, stray
//! braces, unterminated math) is repaired locally and reported, so every
//! token stream yields a [`Document`].

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::diag::{Code, Diagnostic, Stage};
use crate::lexer::{detokenize, Category, Location, Token, TokenKind};
use crate::macros::MacroKind;
use crate::registry::{EnvRole, EnvironmentHint, HandlerKind, PackageHandler, PackageRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum InlineStyle {
    Emphasis,
    Bold,
    Italic,
    Monospace,
    SmallCaps,
    Underline,
    Superscript,
    Subscript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum RefStyle {
    Plain,
    Equation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum Inline {
    Text { text: String },
    Styled { style: InlineStyle, children: Vec<Inline> },
    MathInline { tex: String },
    Ref { key: String, style: RefStyle, resolved: Option<String> },
    Cite { keys: Vec<String> },
    Link { url: String, text: Vec<Inline> },
    UnknownCommand { raw: String },
    Code { text: String },
    Footnote { children: Vec<Inline> },
    Image { path: String, alt: Option<String> },
    Anchor { key: String },
    LineBreak,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ListItem {
    pub label: Option<Vec<Inline>>,
    pub children: Vec<DocNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BibEntry {
    pub key: String,
    pub children: Vec<Inline>,
}

/// Block-level node. Inline content lives in [`Inline`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum DocNode {
    Section {
        level: u8,
        title: Vec<Inline>,
        label: Option<String>,
        number: Option<String>,
        children: Vec<DocNode>,
    },
    Paragraph {
        inlines: Vec<Inline>,
    },
    List {
        kind: ListKind,
        items: Vec<ListItem>,
    },
    Figure {
        graphic_path: Option<String>,
        alt_text: Option<String>,
        caption: Option<Vec<Inline>>,
        label: Option<String>,
        number: Option<String>,
        body: Vec<DocNode>,
    },
    Table {
        rows: Vec<Vec<Vec<Inline>>>,
        caption: Option<Vec<Inline>>,
        label: Option<String>,
        number: Option<String>,
    },
    MathDisplay {
        tex: String,
        labels: Vec<String>,
        number: Option<String>,
    },
    Quote {
        children: Vec<DocNode>,
    },
    Verbatim {
        text: String,
    },
    UnknownEnvironment {
        name: String,
        raw: String,
    },
    Bibliography {
        entries: Vec<BibEntry>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum ListKind {
    Unordered,
    Ordered,
    Description,
}

impl DocNode {
    pub fn paragraph(text: &str) -> DocNode {
        DocNode::Paragraph {
            inlines: vec![Inline::text(text)],
        }
    }

    pub fn section(level: u8, title: &str, children: Vec<DocNode>) -> DocNode {
        DocNode::Section {
            level,
            title: vec![Inline::text(title)],
            label: None,
            number: None,
            children,
        }
    }
}

impl Inline {
    pub fn text(s: &str) -> Inline {
        Inline::Text { text: s.to_string() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Metadata {
    pub title: Option<Vec<Inline>>,
    pub authors: Vec<Vec<Inline>>,
    #[serde(rename = "abstract")]
    pub abstract_blocks: Option<Vec<DocNode>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Document {
    pub metadata: Metadata,
    pub body: Vec<DocNode>,
    pub diagnostics: Vec<Diagnostic>,
    pub unknown_packages: BTreeSet<String>,
    pub packages: BTreeSet<String>,
    /// Label key to the number it refers to, in document order.
    pub labels: BTreeMap<String, String>,
}

impl Document {
    /// Stable JSON rendering of the tree for debugging.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document is always serializable")
    }

    pub fn is_empty(&self) -> bool {
        self.body.is_empty() && self.metadata.title.is_none() && self.metadata.abstract_blocks.is_none()
    }
}

/// Deeper nesting of environments or brace groups is kept as source text
/// instead of being parsed recursively.
pub const MAX_NESTING: usize = 48;

pub const SECTIONING: &[(&str, u8)] = &[
    ("part", 1),
    ("chapter", 1),
    ("section", 1),
    ("subsection", 2),
    ("subsubsection", 3),
    ("paragraph", 4),
    ("subparagraph", 4),
];

pub fn section_level(name: &str) -> Option<u8> {
    SECTIONING.iter().find(|(n, _)| *n == name).map(|(_, l)| *l)
}

/// Parse an expanded token stream into a document.
pub fn parse(tokens: &[Token], registry: &PackageRegistry) -> Document {
    let mut parser = Parser::new(tokens, registry);
    let body = parser.run();
    let mut doc = parser.finish();
    doc.body = body;
    doc
}

// ---------------------------------------------------------------------------

#[derive(Default)]
struct InlineBuf {
    items: Vec<Inline>,
}

impl InlineBuf {
    fn push_str(&mut self, s: &str) {
        if let Some(Inline::Text { text }) = self.items.last_mut() {
            text.push_str(s);
        } else {
            self.items.push(Inline::Text { text: s.to_string() });
        }
    }

    fn push_char(&mut self, c: char) {
        let mut b = [0u8; 4];
        self.push_str(c.encode_utf8(&mut b));
    }

    fn space(&mut self) {
        match self.items.last() {
            None => {}
            Some(Inline::Text { text }) if text.ends_with(' ') => {}
            _ => self.push_char(' '),
        }
    }

    fn push(&mut self, inline: Inline) {
        self.items.push(inline);
    }

    fn is_blank(&self) -> bool {
        self.items.iter().all(|i| matches!(i, Inline::Text { text } if text.trim().is_empty()))
    }

    fn take(&mut self) -> Vec<Inline> {
        finish_inlines(std::mem::take(&mut self.items))
    }
}

fn ligatures(s: &str) -> String {
    s.replace("---", "\u{2014}")
        .replace("--", "\u{2013}")
        .replace("``", "\u{201C}")
        .replace("''", "\u{201D}")
}

/// Trim outer whitespace and apply text ligatures.
fn finish_inlines(mut items: Vec<Inline>) -> Vec<Inline> {
    for item in items.iter_mut() {
        if let Inline::Text { text } = item {
            *text = ligatures(text);
        }
    }
    if let Some(Inline::Text { text }) = items.first_mut() {
        *text = text.trim_start().to_string();
    }
    if let Some(Inline::Text { text }) = items.last_mut() {
        *text = text.trim_end().to_string();
    }
    items.retain(|i| !matches!(i, Inline::Text { text } if text.is_empty()));
    items
}

fn plain_text(inlines: &[Inline]) -> String {
    let mut out = String::new();
    for i in inlines {
        match i {
            Inline::Text { text } | Inline::Code { text } => out.push_str(text),
            Inline::Styled { children, .. } | Inline::Link { text: children, .. } => out.push_str(&plain_text(children)),
            Inline::MathInline { tex } => out.push_str(tex),
            Inline::UnknownCommand { raw } => out.push_str(raw),
            Inline::Ref { resolved, key, .. } => out.push_str(resolved.as_deref().unwrap_or(key)),
            Inline::Cite { keys } => out.push_str(&format!("[{}]", keys.join(", "))),
            Inline::LineBreak => out.push(' '),
            Inline::Footnote { .. } | Inline::Image { .. } | Inline::Anchor { .. } => {}
        }
    }
    out
}

struct SectionFrame {
    level: u8,
    title: Vec<Inline>,
    label: Option<String>,
    number: Option<String>,
    children: Vec<DocNode>,
}

impl SectionFrame {
    fn into_node(self) -> DocNode {
        DocNode::Section {
            level: self.level,
            title: self.title,
            label: self.label,
            number: self.number,
            children: self.children,
        }
    }
}

#[derive(Default)]
struct BlockBuilder {
    root: Vec<DocNode>,
    open: Vec<SectionFrame>,
}

impl BlockBuilder {
    fn push(&mut self, node: DocNode) {
        match self.open.last_mut() {
            Some(frame) => frame.children.push(node),
            None => self.root.push(node),
        }
    }

    fn current_level(&self) -> u8 {
        self.open.last().map_or(0, |f| f.level)
    }

    fn open_section(&mut self, frame: SectionFrame) {
        while self.open.last().is_some_and(|f| f.level >= frame.level) {
            self.close_one();
        }
        self.open.push(frame);
    }

    fn close_one(&mut self) {
        if let Some(frame) = self.open.pop() {
            let node = frame.into_node();
            self.push(node);
        }
    }

    fn fresh_section(&mut self) -> Option<&mut SectionFrame> {
        self.open
            .last_mut()
            .filter(|f| f.children.is_empty() && f.label.is_none())
    }

    fn finish(mut self) -> Vec<DocNode> {
        while !self.open.is_empty() {
            self.close_one();
        }
        self.root
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stop {
    /// Bound reached.
    Eof,
    /// This context's `\end` was consumed (possibly as a recovery).
    Closed,
    /// An `\end` for an outer environment; left in place.
    Outer,
    /// An `\item` at list level; left in place.
    Item,
}

#[derive(Default)]
struct FloatCtx {
    caption: Option<Vec<Inline>>,
    label: Option<String>,
    number: Option<String>,
}

#[derive(Default)]
struct Counters {
    sections: [u32; 5],
    figures: u32,
    tables: u32,
    equations: u32,
}

struct Parser<'a> {
    toks: &'a [Token],
    close_of: Vec<Option<usize>>,
    pos: usize,
    bound: usize,
    registry: &'a PackageRegistry,
    known: HashMap<String, (MacroKind, u8)>,
    env_hints: HashMap<String, EnvironmentHint>,
    diags: Vec<Diagnostic>,
    unknown_packages: BTreeSet<String>,
    packages: BTreeSet<String>,
    labels: BTreeMap<String, String>,
    metadata: Metadata,
    open_envs: Vec<String>,
    floats: Vec<FloatCtx>,
    counters: Counters,
    current_label_value: String,
    inline_depth: usize,
}

fn match_braces(toks: &[Token]) -> Vec<Option<usize>> {
    let mut close_of = vec![None; toks.len()];
    let mut stack = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if t.is_begin_group() {
            stack.push(i);
        } else if t.is_end_group() {
            if let Some(open) = stack.pop() {
                close_of[open] = Some(i);
            }
        }
    }
    close_of
}

impl<'a> Parser<'a> {
    fn new(toks: &'a [Token], registry: &'a PackageRegistry) -> Self {
        let mut parser = Parser {
            toks,
            close_of: match_braces(toks),
            pos: 0,
            bound: toks.len(),
            registry,
            known: HashMap::new(),
            env_hints: HashMap::new(),
            diags: Vec::new(),
            unknown_packages: BTreeSet::new(),
            packages: BTreeSet::new(),
            labels: BTreeMap::new(),
            metadata: Metadata::default(),
            open_envs: Vec::new(),
            floats: Vec::new(),
            counters: Counters::default(),
            current_label_value: String::new(),
            inline_depth: 0,
        };
        parser.activate(registry.kernel());
        parser
    }

    fn activate(&mut self, handler: &PackageHandler) {
        for m in &handler.macros {
            self.known.insert(m.name.clone(), (m.kind, m.arity));
        }
        for e in &handler.environments {
            self.env_hints.insert(e.name.clone(), e.clone());
        }
    }

    fn finish(self) -> Document {
        Document {
            metadata: self.metadata,
            body: Vec::new(),
            diagnostics: self.diags,
            unknown_packages: self.unknown_packages,
            packages: self.packages,
            labels: self.labels,
        }
    }

    // --- token access -----------------------------------------------------

    fn peek(&self) -> Option<&'a Token> {
        if self.pos < self.bound {
            self.toks.get(self.pos)
        } else {
            None
        }
    }

    fn loc(&self) -> Location {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|t| t.loc)
            .unwrap_or_default()
    }

    fn diag(&mut self, d: Diagnostic) {
        self.diags.push(d);
    }

    fn skip_spaces(&mut self) {
        while self.peek().is_some_and(Token::is_space) {
            self.pos += 1;
        }
    }

    fn skip_star(&mut self) -> bool {
        if self.peek().is_some_and(|t| t.is_char('*')) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Range of the next argument: a brace group's interior or one token.
    fn read_arg(&mut self) -> Option<(usize, usize)> {
        self.skip_spaces();
        let tok = self.peek()?;
        if tok.is_end_group() || tok.kind == TokenKind::ParBreak {
            return None;
        }
        if tok.is_begin_group() {
            let open = self.pos;
            match self.close_of[open].filter(|&c| c < self.bound) {
                Some(close) => {
                    self.pos = close + 1;
                    Some((open + 1, close))
                }
                None => {
                    self.diag(
                        Diagnostic::error(Stage::Parse, Code::UnbalancedGroup, "argument group is never closed")
                            .at(tok.loc),
                    );
                    self.pos = self.bound;
                    Some((open + 1, self.bound))
                }
            }
        } else {
            self.pos += 1;
            Some((self.pos - 1, self.pos))
        }
    }

    /// Range inside `[...]` if an optional argument follows.
    fn read_optional(&mut self) -> Option<(usize, usize)> {
        let save = self.pos;
        self.skip_spaces();
        if !self.peek().is_some_and(|t| t.is_char('[')) {
            self.pos = save;
            return None;
        }
        let start = self.pos + 1;
        let mut i = start;
        while i < self.bound {
            let t = &self.toks[i];
            if t.is_begin_group() {
                match self.close_of[i] {
                    Some(c) => i = c + 1,
                    None => break,
                }
                continue;
            }
            if t.is_char(']') {
                self.pos = i + 1;
                return Some((start, i));
            }
            i += 1;
        }
        self.pos = save;
        None
    }

    fn text_of(&self, range: (usize, usize)) -> String {
        detokenize(&self.toks[range.0..range.1]).trim().to_string()
    }

    fn arg_text(&mut self) -> Option<String> {
        self.read_arg().map(|r| self.text_of(r))
    }

    fn with_range<T>(&mut self, range: (usize, usize), f: impl FnOnce(&mut Self) -> T) -> T {
        let (pos, bound) = (self.pos, self.bound);
        self.pos = range.0;
        self.bound = range.1.min(bound.max(range.1));
        let out = f(self);
        self.pos = pos;
        self.bound = bound;
        out
    }

    fn inlines_of(&mut self, range: (usize, usize)) -> Vec<Inline> {
        if self.inline_depth >= MAX_NESTING {
            let end = range.1.min(self.toks.len());
            return vec![Inline::Text { text: detokenize(&self.toks[range.0.min(end)..end]) }];
        }
        self.inline_depth += 1;
        let out = self.with_range(range, |p| {
            let mut buf = InlineBuf::default();
            while p.peek().is_some() {
                p.inline_token(&mut buf);
            }
            buf.take()
        });
        self.inline_depth -= 1;
        out
    }

    fn arg_inlines(&mut self) -> Option<Vec<Inline>> {
        self.read_arg().map(|r| self.inlines_of(r))
    }

    /// Index of the `\end{name}` matching a `\begin{name}` whose body starts
    /// at `from`, honouring nesting of the same name.
    fn find_env_end(&self, name: &str, from: usize) -> Option<usize> {
        let mut depth = 0usize;
        let mut i = from;
        while i < self.bound {
            let t = &self.toks[i];
            if t.is_cs("begin") || t.is_cs("end") {
                if let Some(n) = self.group_name_at(i + 1) {
                    if n == name {
                        if t.is_cs("begin") {
                            depth += 1;
                        } else if depth == 0 {
                            return Some(i);
                        } else {
                            depth -= 1;
                        }
                    }
                }
            }
            i += 1;
        }
        None
    }

    /// Text of the brace group starting at `i` (after optional spaces).
    fn group_name_at(&self, mut i: usize) -> Option<String> {
        while i < self.bound && self.toks[i].is_space() {
            i += 1;
        }
        if i >= self.bound || !self.toks[i].is_begin_group() {
            return None;
        }
        let close = self.close_of[i].filter(|&c| c < self.bound)?;
        Some(detokenize(&self.toks[i + 1..close]).trim().to_string())
    }

    /// Skip past `\end{name}` at `end_idx`.
    fn skip_end_at(&mut self, end_idx: usize) {
        self.pos = end_idx + 1;
        self.read_arg();
    }

    // --- labels -----------------------------------------------------------

    fn register_label(&mut self, key: &str, value: String, loc: Location) -> bool {
        if self.labels.contains_key(key) {
            self.diag(
                Diagnostic::warning(Stage::Parse, Code::DuplicateLabel, format!("label {key} defined more than once"))
                    .at(loc),
            );
            return false;
        }
        self.labels.insert(key.to_string(), value);
        true
    }

    /// Inline `\label`: goes to the innermost float or becomes an anchor.
    fn inline_label(&mut self, key: String, buf: &mut InlineBuf, loc: Location) {
        if let Some(ctx) = self.floats.last_mut() {
            if ctx.label.is_none() {
                ctx.label = Some(key);
                return;
            }
        }
        let value = self.current_label_value.clone();
        if self.register_label(&key, value, loc) {
            buf.push(Inline::Anchor { key });
        }
    }


    // --- top level --------------------------------------------------------

    fn run(&mut self) -> Vec<DocNode> {
        let begin_doc = (0..self.toks.len())
            .find(|&i| self.toks[i].is_cs("begin") && self.group_name_at(i + 1).as_deref() == Some("document"));
        let Some(idx) = begin_doc else {
            return self.blocks(None, false).0;
        };
        self.bound = idx;
        self.preamble();
        self.bound = self.toks.len();
        self.pos = idx + 1;
        self.read_arg();
        self.open_envs.push("document".into());
        let (body, stop) = self.blocks(Some("document"), false);
        self.open_envs.pop();
        if stop == Stop::Eof {
            self.diag(Diagnostic::error(
                Stage::Parse,
                Code::UnterminatedEnvironment,
                "document environment is never closed",
            ));
        }
        body
    }

    /// Everything before `\begin{document}`: only packages and metadata
    /// matter, free text is dropped.
    fn preamble(&mut self) {
        while let Some(tok) = self.peek() {
            let Some(name) = tok.control_name() else {
                self.pos += 1;
                continue;
            };
            let loc = tok.loc;
            self.pos += 1;
            match name {
                "usepackage" | "RequirePackage" => self.use_package(loc),
                "documentclass" => {
                    self.read_optional();
                    self.read_arg();
                }
                "title" | "author" => self.metadata_command(name),
                _ => self.skip_command_args(name),
            }
        }
    }

    fn use_package(&mut self, loc: Location) {
        self.read_optional();
        let Some(list) = self.arg_text() else {
            return;
        };
        let registry = self.registry;
        for name in list.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            self.packages.insert(name.to_string());
            match registry.resolve(name) {
                Some(handler) => {
                    if handler.kind == HandlerKind::Implemented {
                        self.activate(handler);
                    }
                }
                None => {
                    if self.unknown_packages.insert(name.to_string()) {
                        self.diag(
                            Diagnostic::warning(
                                Stage::Parse,
                                Code::UnknownPackage,
                                format!("package {name} is not supported"),
                            )
                            .at(loc),
                        );
                    }
                }
            }
        }
    }

    fn metadata_command(&mut self, name: &str) {
        self.read_optional();
        let Some(range) = self.read_arg() else {
            return;
        };
        if name == "title" {
            self.metadata.title = Some(self.inlines_of(range));
            return;
        }
        // Split authors on \and.
        let mut start = range.0;
        let mut parts = Vec::new();
        for i in range.0..range.1 {
            if self.toks[i].is_cs("and") {
                parts.push((start, i));
                start = i + 1;
            }
        }
        parts.push((start, range.1));
        for part in parts {
            let author = self.inlines_of(part);
            if !author.is_empty() {
                self.metadata.authors.push(author);
            }
        }
    }

    /// Skip an ignored or preamble-only command together with its
    /// arguments, when the arity is known.
    fn skip_command_args(&mut self, name: &str) {
        if let Some(&(MacroKind::Ignored, arity)) = self.known.get(name) {
            self.skip_star();
            self.read_optional();
            for _ in 0..arity {
                self.read_arg();
            }
        }
    }

    // --- blocks -----------------------------------------------------------

    /// Parse blocks until the bound, an `\end`, or (in lists) an `\item`.
    fn blocks(&mut self, env: Option<&str>, stop_at_item: bool) -> (Vec<DocNode>, Stop) {
        let mut builder = BlockBuilder::default();
        let mut para = InlineBuf::default();
        let mut groups = 0usize;
        let stop = loop {
            let Some(tok) = self.peek() else {
                break Stop::Eof;
            };
            let loc = tok.loc;
            match &tok.kind {
                TokenKind::ParBreak => {
                    self.pos += 1;
                    flush(&mut para, &mut builder);
                }
                TokenKind::Char(_, Category::BeginGroup) => {
                    self.pos += 1;
                    groups += 1;
                }
                TokenKind::Char(_, Category::EndGroup) => {
                    self.pos += 1;
                    if groups == 0 {
                        self.diag(
                            Diagnostic::error(Stage::Parse, Code::UnbalancedGroup, "unmatched closing brace").at(loc),
                        );
                    } else {
                        groups -= 1;
                    }
                }
                TokenKind::Char('$', Category::MathShift)
                    if self.toks.get(self.pos + 1).is_some_and(|t| t.is_char('$')) && self.pos + 1 < self.bound =>
                {
                    flush(&mut para, &mut builder);
                    let tex = self.collect_math_until(2, |p, i| {
                        p.toks[i].is_char('$') && p.toks.get(i + 1).is_some_and(|t| t.is_char('$'))
                    });
                    self.pos += 2;
                    let node = self.math_display(tex, false, loc);
                    builder.push(node);
                }
                TokenKind::ControlSeq(name) => {
                    let name = name.as_str();
                    if let Some(level) = section_level(name) {
                        flush(&mut para, &mut builder);
                        self.pos += 1;
                        self.section(name, level, &mut builder, loc);
                        continue;
                    }
                    match name {
                        "par" => {
                            self.pos += 1;
                            flush(&mut para, &mut builder);
                        }
                        "[" => {
                            flush(&mut para, &mut builder);
                            self.pos += 1;
                            let tex = self.collect_math_until(1, |p, i| p.toks[i].is_cs("]"));
                            let node = self.math_display(tex, false, loc);
                            builder.push(node);
                        }
                        "item" if stop_at_item => break Stop::Item,
                        "label" => {
                            self.pos += 1;
                            let Some(key) = self.arg_text() else { continue };
                            if self.floats.is_empty() && para.is_blank() {
                                if let Some(frame) = builder.fresh_section() {
                                    let value = frame.number.clone().unwrap_or_else(|| self.current_label_value.clone());
                                    frame.label = Some(key.clone());
                                    if !self.register_label(&key, value, loc) {
                                        if let Some(frame) = builder.fresh_section() {
                                            frame.label = None;
                                        }
                                    }
                                    continue;
                                }
                            }
                            self.inline_label(key, &mut para, loc);
                        }
                        "end" => {
                            let end_name = self.group_name_at(self.pos + 1).unwrap_or_default();
                            if env == Some(end_name.as_str()) {
                                self.pos += 1;
                                self.read_arg();
                                break Stop::Closed;
                            }
                            if self.open_envs.contains(&end_name) {
                                self.diag(
                                    Diagnostic::error(
                                        Stage::Parse,
                                        Code::EnvironmentMismatch,
                                        format!(
                                            "\\end{{{end_name}}} closes {} early",
                                            env.unwrap_or("the current block")
                                        ),
                                    )
                                    .at(loc),
                                );
                                break Stop::Outer;
                            }
                            self.pos += 1;
                            self.read_arg();
                            if let Some(open) = env {
                                self.diag(
                                    Diagnostic::error(
                                        Stage::Parse,
                                        Code::EnvironmentMismatch,
                                        format!("\\begin{{{open}}} ended by \\end{{{end_name}}}"),
                                    )
                                    .at(loc),
                                );
                                break Stop::Closed;
                            }
                            self.diag(
                                Diagnostic::error(
                                    Stage::Parse,
                                    Code::EnvironmentMismatch,
                                    format!("\\end{{{end_name}}} without a matching \\begin"),
                                )
                                .at(loc),
                            );
                        }
                        "begin" => {
                            self.pos += 1;
                            let env_name = self.arg_text().unwrap_or_default();
                            self.environment(&env_name, loc, &mut para, &mut builder);
                        }
                        "usepackage" | "RequirePackage" => {
                            self.pos += 1;
                            self.use_package(loc);
                        }
                        "documentclass" => {
                            self.pos += 1;
                            self.read_optional();
                            self.read_arg();
                        }
                        "title" | "author" => {
                            self.pos += 1;
                            self.metadata_command(name);
                        }
                        _ => self.inline_token(&mut para),
                    }
                }
                _ => self.inline_token(&mut para),
            }
        };
        flush(&mut para, &mut builder);
        if groups > 0 {
            self.diag(
                Diagnostic::error(Stage::Parse, Code::UnbalancedGroup, "group opened but never closed").at(self.loc()),
            );
        }
        if stop == Stop::Eof {
            if let Some(open) = env {
                if open != "document" {
                    self.diag(
                        Diagnostic::error(
                            Stage::Parse,
                            Code::UnterminatedEnvironment,
                            format!("environment {open} is never closed"),
                        )
                        .at(self.loc()),
                    );
                }
            }
        }
        (builder.finish(), stop)
    }

    fn section(&mut self, name: &str, mut level: u8, builder: &mut BlockBuilder, loc: Location) {
        if name == "chapter" || name == "part" {
            self.diag(
                Diagnostic::warning(
                    Stage::Parse,
                    Code::UnsupportedSectioning,
                    format!("\\{name} is not supported in articles; treated as a section"),
                )
                .at(loc),
            );
        }
        let starred = self.skip_star();
        self.read_optional();
        let title = self.arg_inlines().unwrap_or_default();
        let max = builder.current_level() + 1;
        if level > max {
            self.diag(
                Diagnostic::warning(
                    Stage::Parse,
                    Code::SectionLevelSkip,
                    format!("\\{name} skips a heading level; nested one level down instead"),
                )
                .at(loc),
            );
            level = max;
        }
        let number = (!starred).then(|| {
            let idx = level as usize;
            self.counters.sections[idx] += 1;
            for deeper in &mut self.counters.sections[idx + 1..] {
                *deeper = 0;
            }
            let n = self.counters.sections[1..=idx]
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(".");
            self.current_label_value = n.clone();
            n
        });
        builder.open_section(SectionFrame {
            level,
            title,
            label: None,
            number,
            children: Vec::new(),
        });
    }

    /// Collect math tokens from the current position until `is_end` holds at
    /// some index; the position ends on the terminator (not consumed) or at
    /// the bound.
    fn collect_math_until(&mut self, opener_len: usize, is_end: impl Fn(&Self, usize) -> bool) -> (usize, usize) {
        let loc = self.loc();
        let start = self.pos + opener_len - 1 + usize::from(opener_len == 2);
        let start = start.min(self.bound);
        let mut i = start;
        while i < self.bound {
            if is_end(self, i) {
                let range = (start, i);
                self.pos = i;
                // Caller consumes the terminator; single-token ones here.
                if opener_len == 1 {
                    self.pos += 1;
                }
                return range;
            }
            i += 1;
        }
        self.diag(Diagnostic::error(Stage::Parse, Code::UnterminatedMath, "math is never closed").at(loc));
        self.pos = self.bound;
        if opener_len == 2 {
            // Nothing left to consume; keep the caller's `+= 2` harmless.
            self.pos = self.bound.saturating_sub(2).max(start);
        }
        (start, self.bound)
    }

    fn math_display(&mut self, range: (usize, usize), numbered: bool, loc: Location) -> DocNode {
        let (tex, labels) = self.math_source(range);
        let number = numbered.then(|| {
            self.counters.equations += 1;
            self.counters.equations.to_string()
        });
        let value = number.clone().unwrap_or_else(|| self.current_label_value.clone());
        let labels = labels
            .into_iter()
            .filter(|key| self.register_label(key, value.clone(), loc))
            .collect();
        DocNode::MathDisplay { tex, labels, number }
    }

    /// Math source with `\label{..}` removed, plus the removed keys.
    fn math_source(&self, range: (usize, usize)) -> (String, Vec<String>) {
        let mut kept = Vec::new();
        let mut labels = Vec::new();
        let mut i = range.0;
        let end = range.1.min(self.toks.len());
        while i < end {
            let t = &self.toks[i];
            if t.is_cs("label") {
                let mut j = i + 1;
                while j < end && self.toks[j].is_space() {
                    j += 1;
                }
                if j < end && self.toks[j].is_begin_group() {
                    if let Some(close) = self.close_of[j].filter(|&c| c < end) {
                        labels.push(detokenize(&self.toks[j + 1..close]).trim().to_string());
                        i = close + 1;
                        continue;
                    }
                }
            }
            kept.push(t.clone());
            i += 1;
        }
        (detokenize(&kept).trim().to_string(), labels)
    }

    fn environment(&mut self, name: &str, loc: Location, para: &mut InlineBuf, builder: &mut BlockBuilder) {
        let too_deep = self.open_envs.len() + self.inline_depth >= MAX_NESTING;
        let hint = self.env_hints.get(name).cloned().filter(|_| !too_deep);
        let Some(hint) = hint else {
            flush(para, builder);
            let node = self.unknown_environment(name, loc);
            builder.push(node);
            return;
        };
        if hint.role == EnvRole::MathInline {
            let start = self.pos;
            let end = self.find_env_end(name, start).unwrap_or(self.bound);
            let (tex, _) = self.math_source((start, end));
            para.push(Inline::MathInline { tex });
            self.finish_env_at(name, end, loc);
            return;
        }
        flush(para, builder);
        match hint.role {
            EnvRole::MathDisplay | EnvRole::MathNumbered => {
                let start = self.pos;
                let end = self.find_env_end(name, start);
                let node = self.math_display((start, end.unwrap_or(self.bound)), hint.role == EnvRole::MathNumbered, loc);
                builder.push(node);
                self.finish_env_at(name, end.unwrap_or(self.bound), loc);
            }
            EnvRole::Verbatim => {
                let start = self.pos;
                let end = self.find_env_end(name, start).unwrap_or(self.bound);
                let mut text: String = self.toks[start..end]
                    .iter()
                    .map(|t| match &t.kind {
                        TokenKind::Char(c, _) => c.to_string(),
                        other => other.to_string(),
                    })
                    .collect();
                if text.starts_with('\n') {
                    text.remove(0);
                }
                if text.ends_with('\n') {
                    text.pop();
                }
                builder.push(DocNode::Verbatim { text });
                self.finish_env_at(name, end, loc);
            }
            EnvRole::Itemize | EnvRole::Enumerate | EnvRole::Description => {
                let kind = match hint.role {
                    EnvRole::Itemize => ListKind::Unordered,
                    EnvRole::Enumerate => ListKind::Ordered,
                    _ => ListKind::Description,
                };
                self.read_optional();
                let node = self.list(name, kind);
                builder.push(node);
            }
            EnvRole::Figure => {
                self.read_optional();
                let nodes = self.figure(name, loc);
                builder.push(nodes);
            }
            EnvRole::Table => {
                self.read_optional();
                for node in self.table_float(name) {
                    builder.push(node);
                }
            }
            EnvRole::Tabular => {
                self.read_optional();
                let node = self.tabular(name, hint.arity.max(1), loc);
                builder.push(node);
            }
            EnvRole::Quote => {
                let children = self.nested_blocks(name);
                builder.push(DocNode::Quote { children });
            }
            EnvRole::Transparent | EnvRole::Document => {
                self.read_optional();
                for _ in 0..hint.arity {
                    self.read_arg();
                }
                for node in self.nested_blocks(name) {
                    builder.push(node);
                }
            }
            EnvRole::Abstract => {
                let children = self.nested_blocks(name);
                self.metadata.abstract_blocks = Some(children);
            }
            EnvRole::Bibliography => {
                for _ in 0..hint.arity {
                    self.read_arg();
                }
                let node = self.bibliography(name);
                builder.push(node);
            }
            EnvRole::MathInline => unreachable!("handled above"),
        }
    }

    /// Consume `\end{name}` at `end`, or diagnose when it is missing.
    fn finish_env_at(&mut self, name: &str, end: usize, loc: Location) {
        if end < self.bound {
            self.skip_end_at(end);
        } else {
            self.pos = self.bound;
            self.diag(
                Diagnostic::error(
                    Stage::Parse,
                    Code::UnterminatedEnvironment,
                    format!("environment {name} is never closed"),
                )
                .at(loc),
            );
        }
    }

    fn nested_blocks(&mut self, name: &str) -> Vec<DocNode> {
        self.open_envs.push(name.to_string());
        let (nodes, _) = self.blocks(Some(name), false);
        self.open_envs.pop();
        nodes
    }

    fn unknown_environment(&mut self, name: &str, loc: Location) -> DocNode {
        let start = self.pos;
        let end = self.find_env_end(name, start);
        let raw = detokenize(&self.toks[start..end.unwrap_or(self.bound)]).trim().to_string();
        self.diag(
            Diagnostic::warning(
                Stage::Parse,
                Code::UnknownEnvironment,
                format!("environment {name} is not supported; shown as source"),
            )
            .at(loc),
        );
        self.finish_env_at(name, end.unwrap_or(self.bound), loc);
        DocNode::UnknownEnvironment {
            name: name.to_string(),
            raw,
        }
    }

    fn list(&mut self, name: &str, kind: ListKind) -> DocNode {
        self.open_envs.push(name.to_string());
        let mut items = Vec::new();
        let (leading, mut stop) = self.blocks(Some(name), true);
        if !leading.is_empty() {
            items.push(ListItem {
                label: None,
                children: leading,
            });
        }
        while stop == Stop::Item {
            self.pos += 1;
            let label = self.read_optional().map(|r| self.inlines_of(r));
            let (children, next) = self.blocks(Some(name), true);
            items.push(ListItem { label, children });
            stop = next;
        }
        self.open_envs.pop();
        DocNode::List { kind, items }
    }

    fn figure(&mut self, name: &str, _loc: Location) -> DocNode {
        let saved_value = self.current_label_value.clone();
        self.floats.push(FloatCtx::default());
        let mut body = self.nested_blocks(name);
        let ctx = self.floats.pop().unwrap_or_default();
        let image = take_first_image(&mut body);
        let caption_text = ctx.caption.as_deref().map(plain_text).filter(|t| !t.trim().is_empty());
        let (graphic_path, alt_option) = match image {
            Some((path, alt)) => (Some(path), alt),
            None => (None, None),
        };
        let alt_text = alt_option.or(caption_text);
        if alt_text.is_none() {
            self.diag(
                Diagnostic::warning(
                    Stage::Parse,
                    Code::MissingAltText,
                    "figure has neither alt text nor a caption",
                )
                .at(_loc),
            );
        }
        if let Some(key) = &ctx.label {
            let value = ctx.number.clone().unwrap_or_else(|| saved_value.clone());
            if !self.register_label(key, value, _loc) {
                self.current_label_value = saved_value;
                return DocNode::Figure {
                    graphic_path,
                    alt_text,
                    caption: ctx.caption,
                    label: None,
                    number: ctx.number,
                    body,
                };
            }
        }
        self.current_label_value = saved_value;
        DocNode::Figure {
            graphic_path,
            alt_text,
            caption: ctx.caption,
            label: ctx.label,
            number: ctx.number,
            body,
        }
    }

    fn table_float(&mut self, name: &str) -> Vec<DocNode> {
        let saved_value = self.current_label_value.clone();
        self.floats.push(FloatCtx::default());
        let mut body = self.nested_blocks(name);
        let ctx = self.floats.pop().unwrap_or_default();
        self.current_label_value = saved_value.clone();
        let label = match &ctx.label {
            Some(key) => {
                let value = ctx.number.clone().unwrap_or(saved_value);
                let loc = self.loc();
                self.register_label(key, value, loc).then(|| key.clone())
            }
            None => None,
        };
        let idx = body.iter().position(|n| matches!(n, DocNode::Table { .. }));
        let table = match idx {
            Some(i) => body.remove(i),
            None => DocNode::Table {
                rows: Vec::new(),
                caption: None,
                label: None,
                number: None,
            },
        };
        let DocNode::Table { rows, .. } = table else {
            unreachable!("position matched a table")
        };
        let mut out = vec![DocNode::Table {
            rows,
            caption: ctx.caption,
            label,
            number: ctx.number,
        }];
        out.extend(body);
        out
    }

    fn tabular(&mut self, name: &str, spec_args: u8, loc: Location) -> DocNode {
        // tabular* takes a width before the column spec.
        let mut spec = String::new();
        for _ in 0..spec_args {
            spec = self.arg_text().unwrap_or_default();
        }
        let columns = count_columns(&spec);
        let start = self.pos;
        let end = self.find_env_end(name, start);
        let stop = end.unwrap_or(self.bound);
        let rows = self.table_rows((start, stop), columns, loc);
        self.finish_env_at(name, stop, loc);
        DocNode::Table {
            rows,
            caption: None,
            label: None,
            number: None,
        }
    }

    fn table_rows(&mut self, range: (usize, usize), columns: usize, loc: Location) -> Vec<Vec<Vec<Inline>>> {
        let mut rows = Vec::new();
        let mut cells: Vec<(usize, usize)> = Vec::new();
        let mut cell_start = range.0;
        let mut i = range.0;
        let mut depth_envs = 0usize;
        let mut raw_rows: Vec<Vec<(usize, usize)>> = Vec::new();
        while i < range.1 {
            let t = &self.toks[i];
            if t.is_begin_group() {
                i = self.close_of[i].map_or(range.1, |c| (c + 1).min(range.1));
                continue;
            }
            if t.is_cs("begin") {
                depth_envs += 1;
            } else if t.is_cs("end") {
                depth_envs = depth_envs.saturating_sub(1);
            } else if depth_envs == 0 {
                if t.category() == Some(Category::Alignment) {
                    cells.push((cell_start, i));
                    cell_start = i + 1;
                } else if t.is_cs("\\") || t.is_cs("tabularnewline") {
                    cells.push((cell_start, i));
                    raw_rows.push(std::mem::take(&mut cells));
                    i += 1;
                    // Optional spacing after \\.
                    let save = self.pos;
                    self.pos = i;
                    let bound = self.bound;
                    self.bound = range.1;
                    if self.read_optional().is_some() {
                        i = self.pos;
                    }
                    self.pos = save;
                    self.bound = bound;
                    cell_start = i;
                    continue;
                }
            }
            i += 1;
        }
        cells.push((cell_start, range.1));
        raw_rows.push(cells);
        let mut shape_warned = false;
        for raw in raw_rows {
            let mut row = Vec::new();
            for cell in raw {
                let (content, span) = self.table_cell(cell, loc);
                row.push(content);
                for _ in 1..span {
                    row.push(Vec::new());
                }
            }
            if row.iter().all(Vec::is_empty) {
                continue;
            }
            if row.len() > columns && columns > 0 && !shape_warned {
                shape_warned = true;
                self.diag(
                    Diagnostic::warning(
                        Stage::Parse,
                        Code::TableShape,
                        format!("table row has {} cells but the column spec declares {columns}", row.len()),
                    )
                    .at(loc),
                );
            }
            while row.len() < columns {
                row.push(Vec::new());
            }
            rows.push(row);
        }
        rows
    }

    fn table_cell(&mut self, range: (usize, usize), loc: Location) -> (Vec<Inline>, usize) {
        self.with_range(range, |p| {
            let mut span = 1;
            let mut buf = InlineBuf::default();
            while let Some(tok) = p.peek() {
                match tok.control_name() {
                    Some("hline" | "toprule" | "midrule" | "bottomrule") => p.pos += 1,
                    Some("cline" | "cmidrule") => {
                        p.pos += 1;
                        while p.peek().is_some_and(|t| t.is_char('(')) {
                            while let Some(t) = p.peek() {
                                p.pos += 1;
                                if t.is_char(')') {
                                    break;
                                }
                            }
                        }
                        p.read_arg();
                    }
                    Some("multicolumn") => {
                        p.pos += 1;
                        span = p.arg_text().and_then(|n| n.parse::<usize>().ok()).unwrap_or(1).clamp(1, 64);
                        p.read_arg();
                        if let Some(inner) = p.arg_inlines() {
                            for i in inner {
                                buf.push(i);
                            }
                        }
                        p.diag(
                            Diagnostic::warning(
                                Stage::Parse,
                                Code::MulticolumnCollapsed,
                                "\\multicolumn collapsed into a single cell",
                            )
                            .at(loc),
                        );
                    }
                    _ => p.inline_token(&mut buf),
                }
            }
            (buf.take(), span)
        })
    }

    fn bibliography(&mut self, name: &str) -> DocNode {
        self.open_envs.push(name.to_string());
        let end = self.find_env_end(name, self.pos).unwrap_or(self.bound);
        let mut entries = Vec::new();
        let mut starts = Vec::new();
        for i in self.pos..end {
            if self.toks[i].is_cs("bibitem") {
                starts.push(i);
            }
        }
        for (n, &start) in starts.iter().enumerate() {
            let stop = starts.get(n + 1).copied().unwrap_or(end);
            self.pos = start + 1;
            self.read_optional();
            let key = self.arg_text().unwrap_or_default();
            let body_start = self.pos;
            let children = self.inlines_of((body_start, stop));
            entries.push(BibEntry { key, children });
        }
        self.open_envs.pop();
        let loc = self.loc();
        self.finish_env_at(name, end, loc);
        DocNode::Bibliography { entries }
    }

    // --- inline -----------------------------------------------------------

    /// Consume one inline construct starting at the current token.
    fn inline_token(&mut self, buf: &mut InlineBuf) {
        let Some(tok) = self.peek() else {
            return;
        };
        let loc = tok.loc;
        self.pos += 1;
        match &tok.kind {
            TokenKind::ParBreak | TokenKind::Char(_, Category::Space) => buf.space(),
            TokenKind::Char('~', _) => buf.push_char('\u{a0}'),
            TokenKind::Char('$', Category::MathShift) => {
                let range = self.collect_math_until(1, |p, i| p.toks[i].is_char('$') && p.toks[i].category() == Some(Category::MathShift));
                let (tex, _) = self.math_source(range);
                buf.push(Inline::MathInline { tex });
            }
            TokenKind::Char(_, Category::BeginGroup) => {
                let open = self.pos - 1;
                let close = self.close_of[open].filter(|&c| c < self.bound);
                let stop = close.unwrap_or(self.bound);
                if close.is_none() {
                    self.diag(Diagnostic::error(Stage::Parse, Code::UnbalancedGroup, "group is never closed").at(loc));
                }
                let inner = if self.inline_depth >= MAX_NESTING {
                    vec![Inline::Text { text: detokenize(&self.toks[open + 1..stop]) }]
                } else {
                    self.inline_depth += 1;
                    let items = self.with_range((open + 1, stop), |p| {
                        let mut inner = InlineBuf::default();
                        while p.peek().is_some() {
                            p.inline_token(&mut inner);
                        }
                        inner.items
                    });
                    self.inline_depth -= 1;
                    items
                };
                for i in inner {
                    match i {
                        Inline::Text { text } => buf.push_str(&text),
                        other => buf.push(other),
                    }
                }
                self.pos = (stop + 1).min(self.bound.max(stop));
            }
            TokenKind::Char(_, Category::EndGroup) => {
                self.diag(Diagnostic::error(Stage::Parse, Code::UnbalancedGroup, "unmatched closing brace").at(loc));
            }
            TokenKind::Char(c, _) => buf.push_char(*c),
            TokenKind::Param(n) => buf.push_str(&format!("#{n}")),
            TokenKind::ControlSeq(name) => self.inline_command(name, buf, loc),
        }
    }

    fn inline_command(&mut self, name: &str, buf: &mut InlineBuf, loc: Location) {
        if let Some(style) = style_for(name) {
            let children = self.arg_inlines().unwrap_or_default();
            match style {
                Some(style) => buf.push(Inline::Styled { style, children }),
                None => children.into_iter().for_each(|c| match c {
                    Inline::Text { text } => buf.push_str(&text),
                    other => buf.push(other),
                }),
            }
            return;
        }
        if let Some(sym) = text_symbol(name) {
            buf.push_str(sym);
            return;
        }
        if let Some(mark) = accent_mark(name) {
            let base = self.arg_text().unwrap_or_default();
            let base = match base.as_str() {
                "\\i" => "\u{131}".to_string(),
                "\\j" => "\u{237}".to_string(),
                other => other.to_string(),
            };
            let mut chars = base.chars();
            if let Some(first) = chars.next() {
                buf.push_char(first);
                buf.push_char(mark);
                buf.push_str(chars.as_str());
            } else {
                buf.push_char(mark);
            }
            return;
        }
        match name {
            "(" => {
                let range = self.collect_math_until(1, |p, i| p.toks[i].is_cs(")"));
                let (tex, _) = self.math_source(range);
                buf.push(Inline::MathInline { tex });
            }
            "\\" | "newline" => {
                self.skip_star();
                self.read_optional();
                buf.push(Inline::LineBreak);
            }
            "ref" | "pageref" | "autoref" | "nameref" | "eqref" => {
                self.skip_star();
                let key = self.arg_text().unwrap_or_default();
                let style = if name == "eqref" { RefStyle::Equation } else { RefStyle::Plain };
                buf.push(Inline::Ref {
                    key,
                    style,
                    resolved: None,
                });
            }
            "cite" | "citep" | "citet" | "citealp" | "citealt" | "citeauthor" | "citeyear" | "nocite" => {
                self.skip_star();
                self.read_optional();
                self.read_optional();
                let keys: Vec<String> = self
                    .arg_text()
                    .unwrap_or_default()
                    .split(',')
                    .map(str::trim)
                    .filter(|k| !k.is_empty())
                    .map(str::to_string)
                    .collect();
                if name != "nocite" {
                    buf.push(Inline::Cite { keys });
                }
            }
            "url" => {
                let url = unescape_url(&self.arg_text().unwrap_or_default());
                buf.push(Inline::Link {
                    text: vec![Inline::text(&url)],
                    url,
                });
            }
            "href" => {
                let url = unescape_url(&self.arg_text().unwrap_or_default());
                let text = self.arg_inlines().unwrap_or_default();
                buf.push(Inline::Link { url, text });
            }
            "footnote" | "thanks" => {
                self.read_optional();
                let children = self.arg_inlines().unwrap_or_default();
                buf.push(Inline::Footnote { children });
            }
            "verb" => {
                self.skip_star();
                let text = self.verb_text();
                buf.push(Inline::Code { text });
            }
            "includegraphics" if self.is_known(name) => {
                self.skip_star();
                let options = self.read_optional().map(|r| self.text_of(r)).unwrap_or_default();
                let path = self.arg_text().unwrap_or_default();
                let alt = graphic_option(&options, "alt");
                buf.push(Inline::Image { path, alt });
            }
            "label" => {
                if let Some(key) = self.arg_text() {
                    self.inline_label(key, buf, loc);
                }
            }
            "caption" => {
                self.read_optional();
                let caption = self.arg_inlines().unwrap_or_default();
                if self.floats.is_empty() {
                    buf.push_str(&plain_text(&caption));
                    return;
                }
                let counter = {
                    let in_table = self.open_envs.iter().rev().any(|e| e.starts_with("table"));
                    if in_table {
                        self.counters.tables += 1;
                        self.counters.tables
                    } else {
                        self.counters.figures += 1;
                        self.counters.figures
                    }
                };
                let number = counter.to_string();
                self.current_label_value = number.clone();
                if let Some(ctx) = self.floats.last_mut() {
                    ctx.caption = Some(caption);
                    ctx.number = Some(number);
                }
            }
            "setcounter" | "addtocounter" => {
                let counter = self.arg_text().unwrap_or_default();
                self.read_arg();
                self.diag(
                    Diagnostic::info(
                        Stage::Parse,
                        Code::IgnoredCounter,
                        format!("\\{name}{{{counter}}} ignored; numbering follows document order"),
                    )
                    .at(loc),
                );
            }
            "begin" => {
                // Environment inside inline content: keep its text inline.
                let env_name = self.arg_text().unwrap_or_default();
                let start = self.pos;
                let end = self.find_env_end(&env_name, start).unwrap_or(self.bound);
                let role = self.env_hints.get(&env_name).map(|h| h.role);
                match role {
                    Some(EnvRole::MathInline | EnvRole::MathDisplay | EnvRole::MathNumbered) => {
                        let (tex, _) = self.math_source((start, end));
                        buf.push(Inline::MathInline { tex });
                    }
                    Some(_) => {
                        let inner = self.inlines_of((start, end));
                        for i in inner {
                            buf.push(i);
                        }
                    }
                    None => {
                        let raw = detokenize(&self.toks[start..end]).trim().to_string();
                        self.diag(
                            Diagnostic::warning(
                                Stage::Parse,
                                Code::UnknownEnvironment,
                                format!("environment {env_name} is not supported; shown as source"),
                            )
                            .at(loc),
                        );
                        buf.push(Inline::UnknownCommand {
                            raw: format!("\\begin{{{env_name}}}{raw}\\end{{{env_name}}}"),
                        });
                    }
                }
                self.finish_env_at(&env_name, end, loc);
            }
            "end" => {
                self.read_arg();
                self.diag(
                    Diagnostic::error(Stage::Parse, Code::EnvironmentMismatch, "\\end inside inline content")
                        .at(loc),
                );
            }
            "maketitle" | "par" => {}
            _ => {
                if let Some(&(MacroKind::Ignored, _)) = self.known.get(name) {
                    self.skip_command_args(name);
                    return;
                }
                let raw = self.unknown_command_raw(name);
                buf.push(Inline::UnknownCommand { raw });
            }
        }
    }

    fn is_known(&self, name: &str) -> bool {
        self.known.contains_key(name)
    }

    /// `\name` plus any directly attached `[..]` and `{..}` arguments.
    fn unknown_command_raw(&mut self, name: &str) -> String {
        let start = self.pos - 1;
        loop {
            match self.peek() {
                Some(t) if t.is_begin_group() => match self.close_of[self.pos].filter(|&c| c < self.bound) {
                    Some(c) => self.pos = c + 1,
                    None => break,
                },
                Some(t) if t.is_char('[') => {
                    if self.read_optional().is_none() {
                        break;
                    }
                }
                _ => break,
            }
        }
        let mut raw = detokenize(&self.toks[start..self.pos]);
        if raw.is_empty() {
            raw = format!("\\{name}");
        }
        raw
    }

    fn verb_text(&mut self) -> String {
        let Some(delim) = self.peek().and_then(|t| match t.kind {
            TokenKind::Char(c, Category::Other) => Some(c),
            _ => None,
        }) else {
            return String::new();
        };
        self.pos += 1;
        let mut text = String::new();
        while let Some(t) = self.peek() {
            match t.kind {
                TokenKind::Char(c, Category::Other) => {
                    self.pos += 1;
                    if c == delim {
                        return text;
                    }
                    text.push(c);
                }
                _ => break,
            }
        }
        text
    }
}

fn flush(para: &mut InlineBuf, builder: &mut BlockBuilder) {
    let inlines = para.take();
    if !inlines.is_empty() {
        builder.push(DocNode::Paragraph { inlines });
    }
}

fn take_first_image(body: &mut Vec<DocNode>) -> Option<(String, Option<String>)> {
    for (bi, node) in body.iter_mut().enumerate() {
        if let DocNode::Paragraph { inlines } = node {
            if let Some(i) = inlines.iter().position(|x| matches!(x, Inline::Image { .. })) {
                let Inline::Image { path, alt } = inlines.remove(i) else {
                    unreachable!("position matched an image")
                };
                let now_empty = finish_inlines(std::mem::take(inlines));
                if now_empty.is_empty() {
                    body.remove(bi);
                } else {
                    *inlines = now_empty;
                }
                return Some((path, alt));
            }
        }
    }
    None
}

fn style_for(name: &str) -> Option<Option<InlineStyle>> {
    Some(Some(match name {
        "emph" => InlineStyle::Emphasis,
        "textbf" => InlineStyle::Bold,
        "textit" | "textsl" => InlineStyle::Italic,
        "texttt" => InlineStyle::Monospace,
        "textsc" => InlineStyle::SmallCaps,
        "underline" => InlineStyle::Underline,
        "textsuperscript" => InlineStyle::Superscript,
        "textsubscript" => InlineStyle::Subscript,
        "textrm" | "textsf" | "textup" | "textmd" | "textnormal" | "mbox" => return Some(None),
        _ => return None,
    }))
}

fn text_symbol(name: &str) -> Option<&'static str> {
    Some(match name {
        "LaTeX" => "LaTeX",
        "LaTeXe" => "LaTeX2\u{3b5}",
        "TeX" => "TeX",
        "ldots" | "dots" => "\u{2026}",
        "textbackslash" => "\\",
        "S" => "\u{a7}",
        "P" => "\u{b6}",
        "copyright" => "\u{a9}",
        "dag" => "\u{2020}",
        "ddag" => "\u{2021}",
        "textasciitilde" => "~",
        "textasciicircum" => "^",
        "textbar" => "|",
        "textless" => "<",
        "textgreater" => ">",
        "textbullet" => "\u{2022}",
        "textemdash" => "\u{2014}",
        "textendash" => "\u{2013}",
        "textquoteleft" => "\u{2018}",
        "textquoteright" => "\u{2019}",
        "textquotedblleft" => "\u{201C}",
        "textquotedblright" => "\u{201D}",
        "textregistered" => "\u{ae}",
        "texttrademark" => "\u{2122}",
        "textdegree" => "\u{b0}",
        "i" => "\u{131}",
        "j" => "\u{237}",
        "ae" => "\u{e6}",
        "AE" => "\u{c6}",
        "oe" => "\u{153}",
        "OE" => "\u{152}",
        "ss" => "\u{df}",
        "aa" => "\u{e5}",
        "AA" => "\u{c5}",
        "o" => "\u{f8}",
        "O" => "\u{d8}",
        "l" => "\u{142}",
        "L" => "\u{141}",
        "%" => "%",
        "&" => "&",
        "$" => "$",
        "#" => "#",
        "_" => "_",
        "{" => "{",
        "}" => "}",
        " " => " ",
        "," => "\u{2009}",
        ";" | ":" | ">" => " ",
        "!" | "/" | "@" | "-" | "+" | "<" => "",
        "today" => "",
        _ => return None,
    })
}

fn accent_mark(name: &str) -> Option<char> {
    Some(match name {
        "'" => '\u{301}',
        "`" => '\u{300}',
        "^" => '\u{302}',
        "\"" => '\u{308}',
        "~" => '\u{303}',
        "=" => '\u{304}',
        "." => '\u{307}',
        "u" => '\u{306}',
        "v" => '\u{30C}',
        "H" => '\u{30B}',
        "c" => '\u{327}',
        "d" => '\u{323}',
        "b" => '\u{331}',
        "r" => '\u{30A}',
        "k" => '\u{328}',
        "t" => '\u{361}',
        _ => return None,
    })
}

fn unescape_url(url: &str) -> String {
    url.replace("\\%", "%")
        .replace("\\#", "#")
        .replace("\\&", "&")
        .replace("\\_", "_")
        .replace("\\~", "~")
        .replace(' ', "")
}

/// Value of `key=` in an `\includegraphics` option list.
fn graphic_option(options: &str, key: &str) -> Option<String> {
    let mut depth = 0i32;
    let mut parts = Vec::new();
    let mut current = String::new();
    for c in options.chars() {
        match c {
            '{' => depth += 1,
            '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(std::mem::take(&mut current));
                continue;
            }
            _ => {}
        }
        current.push(c);
    }
    parts.push(current);
    parts.iter().find_map(|part| {
        let (k, v) = part.split_once('=')?;
        if k.trim() != key {
            return None;
        }
        let v = v.trim();
        let v = v.strip_prefix('{').and_then(|x| x.strip_suffix('}')).unwrap_or(v);
        Some(v.trim().to_string())
    })
}

/// Number of columns declared by a tabular column spec.
pub fn count_columns(spec: &str) -> usize {
    let chars: Vec<char> = spec.chars().collect();
    let mut i = 0;
    let mut count = 0;
    while i < chars.len() {
        match chars[i] {
            'l' | 'c' | 'r' | 'X' | 'S' => count += 1,
            'p' | 'm' | 'b' => {
                count += 1;
                i = skip_brace_group(&chars, i + 1);
                continue;
            }
            '@' | '!' | '>' | '<' => {
                i = skip_brace_group(&chars, i + 1);
                continue;
            }
            '*' => {
                let after_n = skip_brace_group(&chars, i + 1);
                let n: usize = chars[(i + 1).min(chars.len())..after_n]
                    .iter()
                    .filter(|c| c.is_ascii_digit())
                    .collect::<String>()
                    .parse()
                    .unwrap_or(1);
                let body_end = skip_brace_group(&chars, after_n);
                let body: String = chars[after_n.min(body_end)..body_end].iter().collect();
                count += n.min(64) * count_columns(body.trim_matches(|c| c == '{' || c == '}'));
                i = body_end;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    count
}

fn skip_brace_group(chars: &[char], mut i: usize) -> usize {
    while i < chars.len() && chars[i] == ' ' {
        i += 1;
    }
    if i >= chars.len() || chars[i] != '{' {
        return i;
    }
    let mut depth = 0;
    while i < chars.len() {
        match chars[i] {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return i + 1;
                }
            }
            _ => {}
        }
        i += 1;
    }
    i
}

/// Annotate every `Ref` with the number of its target.
///
/// Numbers are assigned during parsing, so this pass only reads
/// `doc.labels`. References without a target become `??` and are diagnosed
/// once per occurrence.
pub fn resolve_refs(mut doc: Document) -> Document {
    let mut resolver = RefResolver {
        labels: &doc.labels,
        diags: Vec::new(),
    };
    if let Some(title) = doc.metadata.title.as_mut() {
        resolver.inlines(title);
    }
    for author in doc.metadata.authors.iter_mut() {
        resolver.inlines(author);
    }
    if let Some(blocks) = doc.metadata.abstract_blocks.as_mut() {
        resolver.blocks(blocks);
    }
    resolver.blocks(&mut doc.body);
    let diags = resolver.diags;
    doc.diagnostics.extend(diags);
    doc
}

struct RefResolver<'a> {
    labels: &'a BTreeMap<String, String>,
    diags: Vec<Diagnostic>,
}

impl RefResolver<'_> {
    fn blocks(&mut self, nodes: &mut [DocNode]) {
        for node in nodes {
            match node {
                DocNode::Section { title, children, .. } => {
                    self.inlines(title);
                    self.blocks(children);
                }
                DocNode::Paragraph { inlines } => self.inlines(inlines),
                DocNode::List { items, .. } => {
                    for item in items {
                        if let Some(label) = item.label.as_mut() {
                            self.inlines(label);
                        }
                        self.blocks(&mut item.children);
                    }
                }
                DocNode::Figure { caption, body, .. } => {
                    if let Some(c) = caption.as_mut() {
                        self.inlines(c);
                    }
                    self.blocks(body);
                }
                DocNode::Table { rows, caption, .. } => {
                    for cell in rows.iter_mut().flatten() {
                        self.inlines(cell);
                    }
                    if let Some(c) = caption.as_mut() {
                        self.inlines(c);
                    }
                }
                DocNode::Quote { children } => self.blocks(children),
                DocNode::Bibliography { entries } => {
                    for e in entries {
                        self.inlines(&mut e.children);
                    }
                }
                DocNode::MathDisplay { .. } | DocNode::Verbatim { .. } | DocNode::UnknownEnvironment { .. } => {}
            }
        }
    }

    fn inlines(&mut self, items: &mut [Inline]) {
        for item in items {
            match item {
                Inline::Ref { key, resolved, .. } => {
                    let value = match self.labels.get(key.as_str()) {
                        Some(v) if !v.is_empty() => v.clone(),
                        Some(_) => key.clone(),
                        None => {
                            self.diags.push(Diagnostic::warning(
                                Stage::Refs,
                                Code::UnresolvedRef,
                                format!("reference to undefined label {key}"),
                            ));
                            "??".to_string()
                        }
                    };
                    *resolved = Some(value);
                }
                Inline::Styled { children, .. } | Inline::Footnote { children } | Inline::Link { text: children, .. } => {
                    self.inlines(children)
                }
                _ => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::tokenize_default;
    use crate::macros::{expand, ExpansionBudget, MacroEnvironment};

    fn parse_src(src: &str) -> Document {
        let registry = PackageRegistry::with_defaults();
        let lexed = tokenize_default(src);
        let mut env = MacroEnvironment::with_kernel(&registry);
        let mut budget = ExpansionBudget::default();
        let expanded = expand(lexed.tokens, &mut env, &mut budget).expect("no loops in tests");
        parse(&expanded.tokens, &registry)
    }

    fn codes(doc: &Document) -> Vec<Code> {
        doc.diagnostics.iter().map(|d| d.code).collect()
    }

    #[test]
    fn section_with_paragraph() {
        let doc = parse_src(r"\section{Intro} Hello.");
        assert_eq!(doc.body.len(), 1);
        match &doc.body[0] {
            DocNode::Section { level, title, children, number, .. } => {
                assert_eq!(*level, 1);
                assert_eq!(title, &vec![Inline::text("Intro")]);
                assert_eq!(children, &vec![DocNode::paragraph("Hello.")]);
                assert_eq!(number.as_deref(), Some("1"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(doc.diagnostics.is_empty());
    }

    #[test]
    fn itemize_golden() {
        let doc = parse_src(r"\begin{itemize}\item a\item b\end{itemize}");
        let expected = DocNode::List {
            kind: ListKind::Unordered,
            items: vec![
                ListItem { label: None, children: vec![DocNode::paragraph("a")] },
                ListItem { label: None, children: vec![DocNode::paragraph("b")] },
            ],
        };
        assert_eq!(doc.body, vec![expected]);
        assert!(doc.diagnostics.is_empty(), "{:?}", doc.diagnostics);
    }

    #[test]
    fn empty_input() {
        let doc = parse_src("");
        assert!(doc.body.is_empty());
        assert!(doc.diagnostics.is_empty());
    }

    #[test]
    fn mismatched_end_recovers() {
        let doc = parse_src(r"\begin{itemize} x \end{enumerate}");
        assert!(matches!(doc.body.as_slice(), [DocNode::List { kind: ListKind::Unordered, .. }]));
        assert!(codes(&doc).contains(&Code::EnvironmentMismatch));
    }

    #[test]
    fn end_of_outer_environment_closes_inner() {
        let doc = parse_src(r"\begin{quote}\begin{itemize}\item a\end{quote} after");
        assert!(matches!(doc.body.first(), Some(DocNode::Quote { .. })));
        assert_eq!(doc.body.last(), Some(&DocNode::paragraph("after")));
        assert!(codes(&doc).contains(&Code::EnvironmentMismatch));
    }

    #[test]
    fn unterminated_environment_is_error() {
        let doc = parse_src(r"\begin{quote} never closed");
        assert!(codes(&doc).contains(&Code::UnterminatedEnvironment));
    }

    #[test]
    fn nesting_and_level_skip() {
        let doc = parse_src(r"\section{A}\subsection{B}\section{C}\subsubsection{D}");
        assert_eq!(doc.body.len(), 2);
        let DocNode::Section { children, .. } = &doc.body[1] else { panic!() };
        let DocNode::Section { level, number, .. } = &children[0] else { panic!() };
        assert_eq!(*level, 2);
        assert_eq!(number.as_deref(), Some("2.1"));
        assert!(codes(&doc).contains(&Code::SectionLevelSkip));
    }

    #[test]
    fn chapter_is_level_one_with_warning() {
        let doc = parse_src(r"\chapter{X}");
        assert!(matches!(doc.body[0], DocNode::Section { level: 1, .. }));
        assert_eq!(codes(&doc), vec![Code::UnsupportedSectioning]);
    }

    #[test]
    fn math_inline_and_display() {
        let doc = parse_src(r"Let $x^2$ and \(y\). \[ a+b \] $$c$$");
        let DocNode::Paragraph { inlines } = &doc.body[0] else { panic!() };
        assert!(inlines.contains(&Inline::MathInline { tex: "x^2".into() }));
        assert!(inlines.contains(&Inline::MathInline { tex: "y".into() }));
        assert_eq!(
            doc.body[1],
            DocNode::MathDisplay { tex: "a+b".into(), labels: vec![], number: None }
        );
        assert_eq!(
            doc.body[2],
            DocNode::MathDisplay { tex: "c".into(), labels: vec![], number: None }
        );
    }

    #[test]
    fn equation_numbering_and_label() {
        let doc = parse_src(r"\begin{equation}E=mc^2\label{eq:e}\end{equation} see \eqref{eq:e}");
        assert_eq!(
            doc.body[0],
            DocNode::MathDisplay { tex: "E=mc^2".into(), labels: vec!["eq:e".into()], number: Some("1".into()) }
        );
        assert_eq!(doc.labels.get("eq:e").map(String::as_str), Some("1"));
    }

    #[test]
    fn unterminated_inline_math() {
        let doc = parse_src("text $x+1");
        assert!(codes(&doc).contains(&Code::UnterminatedMath));
    }

    #[test]
    fn unknown_environment_kept_raw() {
        let doc = parse_src(r"\begin{tikzpicture}\draw (0,0);\end{tikzpicture}");
        let DocNode::UnknownEnvironment { name, raw } = &doc.body[0] else { panic!("{:?}", doc.body) };
        assert_eq!(name, "tikzpicture");
        assert!(raw.contains(r"\draw"));
        assert_eq!(codes(&doc), vec![Code::UnknownEnvironment]);
    }

    #[test]
    fn verbatim_is_byte_identical() {
        let body = "  x = {a}  % not a comment\n\\foo";
        let doc = parse_src(&format!("\\begin{{verbatim}}{body}\\end{{verbatim}}"));
        assert_eq!(doc.body, vec![DocNode::Verbatim { text: body.into() }]);
    }

    #[test]
    fn figure_alt_from_option_then_caption() {
        let doc = parse_src(
            r"\usepackage{graphicx}\begin{figure}\includegraphics[alt={A cat}]{cat.png}\caption{Cat}\label{fig:c}\end{figure}",
        );
        let DocNode::Figure { graphic_path, alt_text, caption, label, number, .. } = &doc.body[0] else {
            panic!("{:?}", doc.body)
        };
        assert_eq!(graphic_path.as_deref(), Some("cat.png"));
        assert_eq!(alt_text.as_deref(), Some("A cat"));
        assert_eq!(caption.as_ref().unwrap(), &vec![Inline::text("Cat")]);
        assert_eq!(label.as_deref(), Some("fig:c"));
        assert_eq!(number.as_deref(), Some("1"));

        let doc = parse_src(r"\usepackage{graphicx}\begin{figure}\includegraphics{d.png}\caption{Dog}\end{figure}");
        let DocNode::Figure { alt_text, .. } = &doc.body[0] else { panic!() };
        assert_eq!(alt_text.as_deref(), Some("Dog"));

        let doc = parse_src(r"\usepackage{graphicx}\begin{figure}\includegraphics{d.png}\end{figure}");
        let DocNode::Figure { alt_text, .. } = &doc.body[0] else { panic!() };
        assert_eq!(alt_text, &None);
        assert!(codes(&doc).contains(&Code::MissingAltText));
    }

    #[test]
    fn tabular_rows_and_multicolumn() {
        let doc = parse_src(r"\begin{tabular}{lcr}a & b & c\\ \multicolumn{2}{c}{wide} & z\\\end{tabular}");
        let DocNode::Table { rows, .. } = &doc.body[0] else { panic!("{:?}", doc.body) };
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.len() == 3), "{rows:?}");
        assert_eq!(rows[1][0], vec![Inline::text("wide")]);
        assert!(codes(&doc).contains(&Code::MulticolumnCollapsed));
    }

    #[test]
    fn unknown_packages_recorded() {
        let doc = parse_src("\\documentclass{article}\\usepackage{tikz,geometry}\\usepackage{amsmath}\\begin{document}x\\end{document}");
        assert_eq!(doc.unknown_packages.iter().collect::<Vec<_>>(), vec!["tikz"]);
        assert_eq!(codes(&doc), vec![Code::UnknownPackage]);
    }

    #[test]
    fn metadata_and_abstract() {
        let doc = parse_src(
            "\\documentclass{article}\\title{T}\\author{A \\and B}\\begin{document}\\maketitle\\begin{abstract}Sum.\\end{abstract}\\section{S}x\\end{document}",
        );
        assert_eq!(doc.metadata.title, Some(vec![Inline::text("T")]));
        assert_eq!(doc.metadata.authors.len(), 2);
        assert_eq!(doc.metadata.abstract_blocks, Some(vec![DocNode::paragraph("Sum.")]));
        assert_eq!(doc.body.len(), 1);
    }

    #[test]
    fn unknown_command_passthrough() {
        let doc = parse_src(r"a \foo[o]{x} b");
        let DocNode::Paragraph { inlines } = &doc.body[0] else { panic!() };
        assert!(inlines.contains(&Inline::UnknownCommand { raw: r"\foo[o]{x}".into() }));
    }

    #[test]
    fn resolve_section_ref() {
        let doc = resolve_refs(parse_src(r"\section{A}\label{sec:a} see \ref{sec:a}"));
        let DocNode::Section { label, children, .. } = &doc.body[0] else { panic!() };
        assert_eq!(label.as_deref(), Some("sec:a"));
        let DocNode::Paragraph { inlines } = &children[0] else { panic!() };
        assert!(inlines.iter().any(|i| matches!(i, Inline::Ref { resolved: Some(v), .. } if v == "1")));
    }

    #[test]
    fn resolve_missing_ref() {
        let doc = resolve_refs(parse_src(r"see \ref{missing}"));
        let DocNode::Paragraph { inlines } = &doc.body[0] else { panic!() };
        assert!(inlines.iter().any(|i| matches!(i, Inline::Ref { resolved: Some(v), .. } if v == "??")));
        assert_eq!(codes(&doc), vec![Code::UnresolvedRef]);
    }

    #[test]
    fn resolve_without_refs_is_identity() {
        let doc = parse_src(r"\section{A}\label{a} text \begin{itemize}\item q\end{itemize}");
        assert_eq!(resolve_refs(doc.clone()), doc);
    }

    #[test]
    fn duplicate_label_first_wins() {
        let doc = parse_src(r"\section{A}\label{x}\section{B}\label{x}");
        assert_eq!(doc.labels.get("x").map(String::as_str), Some("1"));
        assert!(codes(&doc).contains(&Code::DuplicateLabel));
    }

    #[test]
    fn ligatures_and_styles() {
        let doc = parse_src(r"a--b \emph{c} ``q''");
        let DocNode::Paragraph { inlines } = &doc.body[0] else { panic!() };
        assert_eq!(inlines[0], Inline::text("a\u{2013}b "));
        assert!(matches!(inlines[1], Inline::Styled { style: InlineStyle::Emphasis, .. }));
    }

    #[test]
    fn setcounter_is_info() {
        let doc = parse_src(r"\setcounter{section}{3}\section{A}");
        assert_eq!(codes(&doc), vec![Code::IgnoredCounter]);
        assert!(matches!(&doc.body[0], DocNode::Section { number: Some(n), .. } if n == "1"));
    }
}
