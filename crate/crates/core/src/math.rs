//! TeX math to MathML.
//!
//! The grammar covers what shows up in most papers: identifiers, numbers,
//! operators and relations, scripts, fractions, roots, Greek letters,
//! font switches, accents, `\left`/`\right` fences, `\text`, and the
//! matrix/cases/aligned families. Input outside that grammar is not guessed
//! at; it comes back as [`MathRender::Fallback`] so the emitter can show the
//! source verbatim.

use serde::Serialize;
use thiserror::Error;

use crate::diag::{Code, Diagnostic, Stage};
use crate::lexer::{detokenize, tokenize_default, Category, Token, TokenKind};

const MAX_DEPTH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MathVariant {
    Normal,
    Bold,
    Italic,
    BoldItalic,
    SansSerif,
    Monospace,
    Script,
    DoubleStruck,
    Fraktur,
}

impl MathVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            MathVariant::Normal => "normal",
            MathVariant::Bold => "bold",
            MathVariant::Italic => "italic",
            MathVariant::BoldItalic => "bold-italic",
            MathVariant::SansSerif => "sans-serif",
            MathVariant::Monospace => "monospace",
            MathVariant::Script => "script",
            MathVariant::DoubleStruck => "double-struck",
            MathVariant::Fraktur => "fraktur",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum MathNode {
    Row { children: Vec<MathNode> },
    Ident { name: String, upright: bool },
    Number { value: String },
    /// `limits` marks operators whose scripts sit above and below in
    /// display style (`\sum`, `\lim`).
    Operator { op: String, limits: bool },
    Text { text: String },
    Space { width: String },
    Sup { base: Box<MathNode>, sup: Box<MathNode> },
    Sub { base: Box<MathNode>, sub: Box<MathNode> },
    SubSup { base: Box<MathNode>, sub: Box<MathNode>, sup: Box<MathNode> },
    Frac { num: Box<MathNode>, den: Box<MathNode>, bar: bool },
    Sqrt { radicand: Box<MathNode>, index: Option<Box<MathNode>> },
    Styled { variant: MathVariant, child: Box<MathNode> },
    Over { base: Box<MathNode>, over: Box<MathNode>, accent: bool },
    Under { base: Box<MathNode>, under: Box<MathNode> },
    Table { rows: Vec<Vec<MathNode>> },
}

impl MathNode {
    pub fn ident(name: &str) -> MathNode {
        MathNode::Ident { name: name.into(), upright: false }
    }

    pub fn number(value: &str) -> MathNode {
        MathNode::Number { value: value.into() }
    }

    pub fn op(op: &str) -> MathNode {
        MathNode::Operator { op: op.into(), limits: false }
    }

    fn row(mut children: Vec<MathNode>) -> MathNode {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            MathNode::Row { children }
        }
    }

    fn has_limits(&self) -> bool {
        match self {
            MathNode::Operator { limits, .. } => *limits,
            MathNode::Styled { child, .. } => child.has_limits(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MathError {
    #[error("unsupported math command \\{0}")]
    UnsupportedCommand(String),
    #[error("unsupported math environment {0}")]
    UnsupportedEnvironment(String),
    #[error("missing argument for \\{0}")]
    MissingArgument(String),
    #[error("double {0}")]
    DoubleScript(&'static str),
    #[error("unbalanced {0}")]
    Unbalanced(&'static str),
    #[error("unexpected {0} in math")]
    Unexpected(String),
    #[error("math nested too deeply")]
    TooDeep,
}

/// Result of [`render_math`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MathRender {
    Structured(MathNode),
    Fallback { tex: String, diagnostic: Diagnostic },
}

/// Parse `tex` into a math tree, or explain why it is outside the grammar.
pub fn parse_math(tex: &str) -> Result<MathNode, MathError> {
    let lexed = tokenize_default(tex);
    let toks = drop_spaces(lexed.tokens);
    let mut p = MathParser { toks: &toks, pos: 0, depth: 0 };
    let node = p.table_or_row(&[])?;
    if let Some(t) = p.peek() {
        return Err(MathError::Unexpected(describe(t)));
    }
    Ok(node)
}

pub fn render_math(tex: &str) -> MathRender {
    match parse_math(tex) {
        Ok(node) => MathRender::Structured(node),
        Err(e) => MathRender::Fallback {
            tex: tex.to_string(),
            diagnostic: Diagnostic::warning(
                Stage::Emit,
                Code::MathFallback,
                format!("math shown as source: {e}"),
            ),
        },
    }
}

const TEXT_COMMANDS: &[&str] = &["text", "textrm", "textnormal", "mbox", "textit", "textbf", "texttt", "textsf", "hbox"];

/// Spaces are insignificant in math except inside text arguments.
fn drop_spaces(tokens: Vec<Token>) -> Vec<Token> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut keep_depth = 0usize;
    let mut arm = false;
    for t in tokens {
        if keep_depth > 0 {
            if t.is_begin_group() {
                keep_depth += 1;
            } else if t.is_end_group() {
                keep_depth -= 1;
            }
            out.push(t);
            continue;
        }
        if arm && t.is_begin_group() {
            keep_depth = 1;
            arm = false;
            out.push(t);
            continue;
        }
        if t.is_space() {
            continue;
        }
        arm = t.control_name().is_some_and(|n| TEXT_COMMANDS.contains(&n));
        out.push(t);
    }
    out
}

fn describe(t: &Token) -> String {
    match &t.kind {
        TokenKind::ControlSeq(n) => format!("\\{n}"),
        TokenKind::Char(c, _) => c.to_string(),
        TokenKind::Param(n) => format!("#{n}"),
        TokenKind::ParBreak => "paragraph break".into(),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Stop {
    EndGroup,
    Right,
    End,
    RightBracket,
}

struct MathParser<'a> {
    toks: &'a [Token],
    pos: usize,
    depth: usize,
}

impl<'a> MathParser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn at_stop(&self, stops: &[Stop]) -> bool {
        let Some(t) = self.peek() else { return true };
        stops.iter().any(|s| match s {
            Stop::EndGroup => t.is_end_group(),
            Stop::Right => t.is_cs("right"),
            Stop::End => t.is_cs("end"),
            Stop::RightBracket => t.is_char(']'),
        })
    }

    fn at_cell_break(&self) -> bool {
        self.peek().is_some_and(|t| t.is_cs("\\") || t.is_cs("cr") || t.category() == Some(Category::Alignment))
    }

    fn enter(&mut self) -> Result<(), MathError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(MathError::TooDeep);
        }
        Ok(())
    }

    /// Rows separated by `\\`, cells by `&`. Without any separator this is
    /// a plain row.
    fn table_or_row(&mut self, stops: &[Stop]) -> Result<MathNode, MathError> {
        let mut rows: Vec<Vec<MathNode>> = Vec::new();
        let mut cells = Vec::new();
        let mut tabular = false;
        loop {
            let cell = self.row(stops, true)?;
            cells.push(cell);
            match self.peek() {
                Some(t) if t.category() == Some(Category::Alignment) => {
                    tabular = true;
                    self.pos += 1;
                }
                Some(t) if t.is_cs("\\") || t.is_cs("cr") => {
                    tabular = true;
                    self.pos += 1;
                    self.skip_optional_raw();
                    rows.push(std::mem::take(&mut cells));
                }
                _ => break,
            }
        }
        if !tabular {
            return Ok(cells.pop().unwrap_or(MathNode::Row { children: vec![] }));
        }
        let trailing_empty = cells.len() == 1 && cells[0] == MathNode::Row { children: vec![] };
        if !trailing_empty {
            rows.push(cells);
        }
        Ok(MathNode::Table { rows })
    }

    /// `[..]` after `\\` (row spacing); ignored.
    fn skip_optional_raw(&mut self) {
        if self.peek().is_some_and(|t| t.is_char('[')) {
            if let Some(close) = self.toks[self.pos..].iter().position(|t| t.is_char(']')) {
                self.pos += close + 1;
            }
        }
    }

    fn row(&mut self, stops: &[Stop], in_table: bool) -> Result<MathNode, MathError> {
        self.enter()?;
        let mut items = Vec::new();
        while !self.at_stop(stops) {
            if in_table && self.at_cell_break() {
                break;
            }
            if let Some(t) = self.peek() {
                if t.category() == Some(Category::Alignment) || t.is_cs("\\") {
                    return Err(MathError::Unexpected(describe(t)));
                }
            }
            if let Some(atom) = self.atom()? {
                items.push(atom);
            }
        }
        self.depth -= 1;
        Ok(MathNode::row(items))
    }

    /// One base with its scripts. `None` for tokens that render as nothing.
    fn atom(&mut self) -> Result<Option<MathNode>, MathError> {
        let tok = self.peek().expect("caller checked");
        let base = match tok.category() {
            Some(Category::Superscript) | Some(Category::Subscript) => MathNode::Row { children: vec![] },
            _ => match self.base()? {
                Some(b) => b,
                None => return Ok(None),
            },
        };
        self.scripts(base).map(Some)
    }

    fn scripts(&mut self, base: MathNode) -> Result<MathNode, MathError> {
        let mut sup: Option<MathNode> = None;
        let mut sub: Option<MathNode> = None;
        while let Some(t) = self.peek() {
            if t.is_char('\'') {
                let mut primes = String::new();
                while self.peek().is_some_and(|t| t.is_char('\'')) {
                    self.pos += 1;
                    primes.push('\u{2032}');
                }
                if sup.is_some() {
                    return Err(MathError::DoubleScript("superscript"));
                }
                sup = Some(MathNode::op(&primes));
                continue;
            }
            match t.category() {
                Some(Category::Superscript) => {
                    self.pos += 1;
                    let arg = self.script_arg("^")?;
                    sup = match sup.take() {
                        None => Some(arg),
                        // x'^2: primes and the superscript share one slot.
                        Some(MathNode::Operator { op, .. }) if op.starts_with('\u{2032}') => {
                            Some(MathNode::row(vec![MathNode::op(&op), arg]))
                        }
                        Some(_) => return Err(MathError::DoubleScript("superscript")),
                    };
                }
                Some(Category::Subscript) => {
                    self.pos += 1;
                    if sub.is_some() {
                        return Err(MathError::DoubleScript("subscript"));
                    }
                    sub = Some(self.script_arg("_")?);
                }
                _ => break,
            }
        }
        let base = Box::new(base);
        Ok(match (sub, sup) {
            (None, None) => *base,
            (None, Some(sup)) => MathNode::Sup { base, sup: Box::new(sup) },
            (Some(sub), None) => MathNode::Sub { base, sub: Box::new(sub) },
            (Some(sub), Some(sup)) => MathNode::SubSup {
                base,
                sub: Box::new(sub),
                sup: Box::new(sup),
            },
        })
    }

    fn script_arg(&mut self, what: &str) -> Result<MathNode, MathError> {
        match self.peek() {
            None => Err(MathError::MissingArgument(what.into())),
            Some(t) if t.is_begin_group() => self.group(),
            Some(_) => self.base()?.ok_or_else(|| MathError::MissingArgument(what.into())),
        }
    }

    /// `{ ... }` as a row.
    fn group(&mut self) -> Result<MathNode, MathError> {
        self.pos += 1;
        let inner = self.table_or_row(&[Stop::EndGroup])?;
        match self.peek() {
            Some(t) if t.is_end_group() => {
                self.pos += 1;
                Ok(inner)
            }
            _ => Err(MathError::Unbalanced("brace")),
        }
    }

    /// Mandatory argument: a group or a single base.
    fn arg(&mut self, cmd: &str) -> Result<MathNode, MathError> {
        match self.peek() {
            Some(t) if t.is_begin_group() => self.group(),
            Some(t) if t.is_end_group() || t.category() == Some(Category::Alignment) => {
                Err(MathError::MissingArgument(cmd.into()))
            }
            Some(_) => self.base()?.ok_or_else(|| MathError::MissingArgument(cmd.into())),
            None => Err(MathError::MissingArgument(cmd.into())),
        }
    }

    /// Raw text of a brace group argument.
    fn raw_arg(&mut self, cmd: &str) -> Result<String, MathError> {
        let Some(t) = self.peek() else {
            return Err(MathError::MissingArgument(cmd.into()));
        };
        if !t.is_begin_group() {
            self.pos += 1;
            return Ok(detokenize(std::slice::from_ref(t)));
        }
        let start = self.pos + 1;
        let mut depth = 0usize;
        for i in self.pos..self.toks.len() {
            let t = &self.toks[i];
            if t.is_begin_group() {
                depth += 1;
            } else if t.is_end_group() {
                depth -= 1;
                if depth == 0 {
                    self.pos = i + 1;
                    return Ok(detokenize(&self.toks[start..i]));
                }
            }
        }
        Err(MathError::Unbalanced("brace"))
    }

    fn base(&mut self) -> Result<Option<MathNode>, MathError> {
        let tok = self.peek().expect("caller checked").clone();
        self.pos += 1;
        match &tok.kind {
            TokenKind::Char(c, cat) => self.char_base(*c, *cat),
            TokenKind::ControlSeq(name) => self.command(name),
            TokenKind::Param(_) | TokenKind::ParBreak => Err(MathError::Unexpected(describe(&tok))),
        }
    }

    fn char_base(&mut self, c: char, cat: Category) -> Result<Option<MathNode>, MathError> {
        match cat {
            Category::BeginGroup => {
                self.pos -= 1;
                self.group().map(Some)
            }
            Category::EndGroup => Err(MathError::Unbalanced("brace")),
            Category::Letter => Ok(Some(MathNode::ident(&c.to_string()))),
            Category::MathShift => Err(MathError::Unexpected("$".into())),
            Category::Parameter => Err(MathError::Unexpected("#".into())),
            Category::Alignment => Err(MathError::Unexpected("&".into())),
            Category::Space => Ok(None),
            _ if c.is_ascii_digit() => {
                let mut value = c.to_string();
                while let Some(TokenKind::Char(d, _)) = self.peek().map(|t| &t.kind) {
                    let next_is_digit = self
                        .toks
                        .get(self.pos + 1)
                        .is_some_and(|t| matches!(t.kind, TokenKind::Char(x, _) if x.is_ascii_digit()));
                    if d.is_ascii_digit() || (*d == '.' && next_is_digit) {
                        value.push(*d);
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                Ok(Some(MathNode::number(&value)))
            }
            _ => Ok(Some(match c {
                '-' => MathNode::op("\u{2212}"),
                '~' => MathNode::Space { width: "0.333em".into() },
                '+' | '=' | '<' | '>' | '/' | '(' | ')' | '[' | ']' | '|' | ',' | ';' | ':' | '!' | '?' | '*'
                | '.' | '@' | '"' | '`' => MathNode::op(&c.to_string()),
                c if c.is_alphabetic() => MathNode::ident(&c.to_string()),
                c => MathNode::op(&c.to_string()),
            })),
        }
    }

    fn command(&mut self, name: &str) -> Result<Option<MathNode>, MathError> {
        if let Some(sym) = identifier_symbol(name) {
            let upright = name.chars().next().is_some_and(|c| c.is_ascii_uppercase());
            return Ok(Some(MathNode::Ident { name: sym.into(), upright }));
        }
        if let Some(sym) = operator_symbol(name) {
            return Ok(Some(MathNode::op(sym)));
        }
        if let Some((sym, limits)) = large_operator(name) {
            return Ok(Some(MathNode::Operator { op: sym.into(), limits }));
        }
        if FUNCTIONS.contains(&name) {
            return Ok(Some(MathNode::Ident { name: name.into(), upright: true }));
        }
        if let Some(width) = space_width(name) {
            return Ok(Some(MathNode::Space { width: width.into() }));
        }
        if let Some(variant) = font_variant(name) {
            let child = self.arg(name)?;
            return Ok(Some(MathNode::Styled { variant, child: Box::new(child) }));
        }
        if let Some(mark) = over_accent(name) {
            let base = self.arg(name)?;
            return Ok(Some(MathNode::Over { base: Box::new(base), over: Box::new(MathNode::op(mark)), accent: true }));
        }
        if let Some(mark) = under_accent(name) {
            let base = self.arg(name)?;
            return Ok(Some(MathNode::Under { base: Box::new(base), under: Box::new(MathNode::op(mark)) }));
        }
        if IGNORED.contains(&name) {
            return Ok(None);
        }
        if BIG_DELIMS.contains(&name) {
            return self.delimiter(name).map(Some);
        }
        let node = match name {
            "frac" | "dfrac" | "tfrac" | "cfrac" => {
                let num = self.arg(name)?;
                let den = self.arg(name)?;
                MathNode::Frac { num: Box::new(num), den: Box::new(den), bar: true }
            }
            "binom" | "dbinom" | "tbinom" => {
                let num = self.arg(name)?;
                let den = self.arg(name)?;
                MathNode::Row {
                    children: vec![
                        MathNode::op("("),
                        MathNode::Frac { num: Box::new(num), den: Box::new(den), bar: false },
                        MathNode::op(")"),
                    ],
                }
            }
            "sqrt" => {
                let index = if self.peek().is_some_and(|t| t.is_char('[')) {
                    self.pos += 1;
                    let idx = self.row(&[Stop::RightBracket], false)?;
                    if !self.peek().is_some_and(|t| t.is_char(']')) {
                        return Err(MathError::Unbalanced("bracket"));
                    }
                    self.pos += 1;
                    Some(Box::new(idx))
                } else {
                    None
                };
                let radicand = self.arg(name)?;
                MathNode::Sqrt { radicand: Box::new(radicand), index }
            }
            _ if TEXT_COMMANDS.contains(&name) => MathNode::Text { text: self.raw_arg(name)? },
            "operatorname" | "mathop" => {
                if self.peek().is_some_and(|t| t.is_char('*')) {
                    self.pos += 1;
                }
                let text = self.raw_arg(name)?;
                MathNode::Ident { name: text.trim().to_string(), upright: true }
            }
            "overset" | "stackrel" => {
                let over = self.arg(name)?;
                let base = self.arg(name)?;
                MathNode::Over { base: Box::new(base), over: Box::new(over), accent: false }
            }
            "underset" => {
                let under = self.arg(name)?;
                let base = self.arg(name)?;
                MathNode::Under { base: Box::new(base), under: Box::new(under) }
            }
            "bmod" => MathNode::op("mod"),
            "pmod" => {
                let arg = self.arg(name)?;
                MathNode::Row {
                    children: vec![MathNode::op("("), MathNode::op("mod"), arg, MathNode::op(")")],
                }
            }
            "tag" => {
                self.raw_arg(name)?;
                return Ok(None);
            }
            "left" => return self.fenced().map(Some),
            "middle" => return self.delimiter(name).map(Some),
            "right" => return Err(MathError::Unbalanced("\\right")),
            "begin" => return self.environment().map(Some),
            "end" => return Err(MathError::Unbalanced("\\end")),
            _ => return Err(MathError::UnsupportedCommand(name.into())),
        };
        Ok(Some(node))
    }

    fn delimiter(&mut self, cmd: &str) -> Result<MathNode, MathError> {
        let Some(t) = self.peek().cloned() else {
            return Err(MathError::MissingArgument(cmd.into()));
        };
        self.pos += 1;
        match &t.kind {
            TokenKind::Char('.', _) => Ok(MathNode::Row { children: vec![] }),
            TokenKind::Char(c, _) => Ok(MathNode::op(&c.to_string())),
            TokenKind::ControlSeq(n) => operator_symbol(n)
                .map(MathNode::op)
                .ok_or_else(|| MathError::UnsupportedCommand(n.clone())),
            _ => Err(MathError::MissingArgument(cmd.into())),
        }
    }

    fn fenced(&mut self) -> Result<MathNode, MathError> {
        self.enter()?;
        let open = self.delimiter("left")?;
        let body = self.table_or_row(&[Stop::Right])?;
        if !self.peek().is_some_and(|t| t.is_cs("right")) {
            return Err(MathError::Unbalanced("\\left"));
        }
        self.pos += 1;
        let close = self.delimiter("right")?;
        self.depth -= 1;
        let children = [open, body, close]
            .into_iter()
            .filter(|n| *n != MathNode::Row { children: vec![] })
            .collect();
        Ok(MathNode::Row { children })
    }

    fn environment(&mut self) -> Result<MathNode, MathError> {
        let name = self.raw_arg("begin")?.trim().to_string();
        let (open, close) = match name.as_str() {
            "matrix" | "smallmatrix" | "aligned" | "alignedat" | "gathered" | "split" | "array" | "subarray" => {
                ("", "")
            }
            "pmatrix" => ("(", ")"),
            "bmatrix" => ("[", "]"),
            "Bmatrix" => ("{", "}"),
            "vmatrix" => ("|", "|"),
            "Vmatrix" => ("\u{2016}", "\u{2016}"),
            "cases" => ("{", ""),
            _ => return Err(MathError::UnsupportedEnvironment(name)),
        };
        if matches!(name.as_str(), "array" | "alignedat" | "subarray") {
            self.raw_arg(&name)?;
        }
        self.enter()?;
        let body = self.table_or_row(&[Stop::End])?;
        self.depth -= 1;
        if !self.peek().is_some_and(|t| t.is_cs("end")) {
            return Err(MathError::Unbalanced("\\begin"));
        }
        self.pos += 1;
        let end_name = self.raw_arg("end")?;
        if end_name.trim() != name {
            return Err(MathError::Unbalanced("\\begin"));
        }
        let table = match body {
            t @ MathNode::Table { .. } => t,
            other => MathNode::Table { rows: vec![vec![other]] },
        };
        if open.is_empty() && close.is_empty() {
            return Ok(table);
        }
        let mut children = Vec::new();
        if !open.is_empty() {
            children.push(MathNode::op(open));
        }
        children.push(table);
        if !close.is_empty() {
            children.push(MathNode::op(close));
        }
        Ok(MathNode::Row { children })
    }
}

// --- symbol tables ---------------------------------------------------------

fn identifier_symbol(name: &str) -> Option<&'static str> {
    Some(match name {
        "alpha" => "\u{3b1}",
        "beta" => "\u{3b2}",
        "gamma" => "\u{3b3}",
        "delta" => "\u{3b4}",
        "epsilon" => "\u{3f5}",
        "varepsilon" => "\u{3b5}",
        "zeta" => "\u{3b6}",
        "eta" => "\u{3b7}",
        "theta" => "\u{3b8}",
        "vartheta" => "\u{3d1}",
        "iota" => "\u{3b9}",
        "kappa" => "\u{3ba}",
        "lambda" => "\u{3bb}",
        "mu" => "\u{3bc}",
        "nu" => "\u{3bd}",
        "xi" => "\u{3be}",
        "pi" => "\u{3c0}",
        "varpi" => "\u{3d6}",
        "rho" => "\u{3c1}",
        "varrho" => "\u{3f1}",
        "sigma" => "\u{3c3}",
        "varsigma" => "\u{3c2}",
        "tau" => "\u{3c4}",
        "upsilon" => "\u{3c5}",
        "phi" => "\u{3d5}",
        "varphi" => "\u{3c6}",
        "chi" => "\u{3c7}",
        "psi" => "\u{3c8}",
        "omega" => "\u{3c9}",
        "Gamma" => "\u{393}",
        "Delta" => "\u{394}",
        "Theta" => "\u{398}",
        "Lambda" => "\u{39b}",
        "Xi" => "\u{39e}",
        "Pi" => "\u{3a0}",
        "Sigma" => "\u{3a3}",
        "Upsilon" => "\u{3a5}",
        "Phi" => "\u{3a6}",
        "Psi" => "\u{3a8}",
        "Omega" => "\u{3a9}",
        "infty" => "\u{221e}",
        "partial" => "\u{2202}",
        "nabla" => "\u{2207}",
        "ell" => "\u{2113}",
        "hbar" => "\u{210f}",
        "emptyset" | "varnothing" => "\u{2205}",
        "aleph" => "\u{2135}",
        "Re" => "\u{211c}",
        "Im" => "\u{2111}",
        "wp" => "\u{2118}",
        "imath" => "\u{131}",
        "jmath" => "\u{237}",
        _ => return None,
    })
}

fn operator_symbol(name: &str) -> Option<&'static str> {
    Some(match name {
        "pm" => "\u{b1}",
        "mp" => "\u{2213}",
        "times" => "\u{d7}",
        "div" => "\u{f7}",
        "cdot" => "\u{22c5}",
        "ast" => "\u{2217}",
        "star" => "\u{22c6}",
        "circ" => "\u{2218}",
        "bullet" => "\u{2219}",
        "oplus" => "\u{2295}",
        "ominus" => "\u{2296}",
        "otimes" => "\u{2297}",
        "odot" => "\u{2299}",
        "cap" => "\u{2229}",
        "cup" => "\u{222a}",
        "setminus" | "backslash" => "\u{2216}",
        "wedge" | "land" => "\u{2227}",
        "vee" | "lor" => "\u{2228}",
        "neg" | "lnot" => "\u{ac}",
        "forall" => "\u{2200}",
        "exists" => "\u{2203}",
        "nexists" => "\u{2204}",
        "leq" | "le" => "\u{2264}",
        "geq" | "ge" => "\u{2265}",
        "leqslant" => "\u{2a7d}",
        "geqslant" => "\u{2a7e}",
        "neq" | "ne" => "\u{2260}",
        "ll" => "\u{226a}",
        "gg" => "\u{226b}",
        "lesssim" => "\u{2272}",
        "gtrsim" => "\u{2273}",
        "approx" => "\u{2248}",
        "sim" => "\u{223c}",
        "simeq" => "\u{2243}",
        "cong" => "\u{2245}",
        "equiv" => "\u{2261}",
        "propto" => "\u{221d}",
        "prec" => "\u{227a}",
        "succ" => "\u{227b}",
        "preceq" => "\u{2aaf}",
        "succeq" => "\u{2ab0}",
        "subset" => "\u{2282}",
        "supset" => "\u{2283}",
        "subseteq" => "\u{2286}",
        "supseteq" => "\u{2287}",
        "in" => "\u{2208}",
        "notin" => "\u{2209}",
        "ni" => "\u{220b}",
        "mid" => "\u{2223}",
        "parallel" => "\u{2225}",
        "perp" | "bot" => "\u{22a5}",
        "top" => "\u{22a4}",
        "models" => "\u{22a8}",
        "vdash" => "\u{22a2}",
        "to" | "rightarrow" => "\u{2192}",
        "leftarrow" | "gets" => "\u{2190}",
        "leftrightarrow" => "\u{2194}",
        "Rightarrow" => "\u{21d2}",
        "Leftarrow" => "\u{21d0}",
        "Leftrightarrow" => "\u{21d4}",
        "implies" | "Longrightarrow" => "\u{27f9}",
        "iff" | "Longleftrightarrow" => "\u{27fa}",
        "longrightarrow" => "\u{27f6}",
        "longleftarrow" => "\u{27f5}",
        "mapsto" => "\u{21a6}",
        "longmapsto" => "\u{27fc}",
        "uparrow" => "\u{2191}",
        "downarrow" => "\u{2193}",
        "hookrightarrow" => "\u{21aa}",
        "langle" => "\u{27e8}",
        "rangle" => "\u{27e9}",
        "lfloor" => "\u{230a}",
        "rfloor" => "\u{230b}",
        "lceil" => "\u{2308}",
        "rceil" => "\u{2309}",
        "vert" | "lvert" | "rvert" => "|",
        "Vert" | "lVert" | "rVert" | "|" => "\u{2016}",
        "{" | "lbrace" => "{",
        "}" | "rbrace" => "}",
        "lbrack" => "[",
        "rbrack" => "]",
        "ldots" | "dots" | "dotsc" | "dotsb" => "\u{2026}",
        "cdots" => "\u{22ef}",
        "vdots" => "\u{22ee}",
        "ddots" => "\u{22f1}",
        "colon" => ":",
        "coloneqq" => "\u{2254}",
        "angle" => "\u{2220}",
        "triangle" => "\u{25b3}",
        "prime" => "\u{2032}",
        "dagger" => "\u{2020}",
        "%" => "%",
        "#" => "#",
        "&" => "&",
        "_" => "_",
        "$" => "$",
        _ => return None,
    })
}

fn large_operator(name: &str) -> Option<(&'static str, bool)> {
    Some(match name {
        "sum" => ("\u{2211}", true),
        "prod" => ("\u{220f}", true),
        "coprod" => ("\u{2210}", true),
        "bigcup" => ("\u{22c3}", true),
        "bigcap" => ("\u{22c2}", true),
        "bigoplus" => ("\u{2a01}", true),
        "bigotimes" => ("\u{2a02}", true),
        "bigvee" => ("\u{22c1}", true),
        "bigwedge" => ("\u{22c0}", true),
        "int" => ("\u{222b}", false),
        "iint" => ("\u{222c}", false),
        "iiint" => ("\u{222d}", false),
        "oint" => ("\u{222e}", false),
        "lim" => ("lim", true),
        "limsup" => ("lim sup", true),
        "liminf" => ("lim inf", true),
        "max" => ("max", true),
        "min" => ("min", true),
        "sup" => ("sup", true),
        "inf" => ("inf", true),
        "det" => ("det", true),
        "gcd" => ("gcd", true),
        "Pr" => ("Pr", true),
        "argmax" => ("arg max", true),
        "argmin" => ("arg min", true),
        _ => return None,
    })
}

const FUNCTIONS: &[&str] = &[
    "sin", "cos", "tan", "cot", "sec", "csc", "arcsin", "arccos", "arctan", "sinh", "cosh", "tanh", "coth", "log",
    "ln", "lg", "exp", "deg", "dim", "ker", "hom", "arg",
];

const IGNORED: &[&str] = &[
    "displaystyle",
    "textstyle",
    "scriptstyle",
    "scriptscriptstyle",
    "limits",
    "nolimits",
    "nonumber",
    "notag",
    "allowbreak",
    "mathstrut",
    "strut",
    "relax",
];

const BIG_DELIMS: &[&str] = &["big", "Big", "bigg", "Bigg", "bigl", "bigr", "Bigl", "Bigr", "biggl", "biggr", "Biggl", "Biggr"];

fn space_width(name: &str) -> Option<&'static str> {
    Some(match name {
        "," | "thinspace" => "0.167em",
        ":" | ">" | "medspace" => "0.222em",
        ";" | "thickspace" => "0.278em",
        " " => "0.25em",
        "enspace" => "0.5em",
        "quad" => "1em",
        "qquad" => "2em",
        "!" | "negthinspace" => "-0.167em",
        _ => return None,
    })
}

fn font_variant(name: &str) -> Option<MathVariant> {
    Some(match name {
        "mathbf" => MathVariant::Bold,
        "mathit" => MathVariant::Italic,
        "mathrm" | "mathup" => MathVariant::Normal,
        "mathsf" => MathVariant::SansSerif,
        "mathtt" => MathVariant::Monospace,
        "mathcal" | "mathscr" => MathVariant::Script,
        "mathbb" => MathVariant::DoubleStruck,
        "mathfrak" => MathVariant::Fraktur,
        "boldsymbol" | "bm" => MathVariant::BoldItalic,
        _ => return None,
    })
}

fn over_accent(name: &str) -> Option<&'static str> {
    Some(match name {
        "hat" => "^",
        "widehat" => "^",
        "bar" => "\u{af}",
        "overline" => "\u{203e}",
        "vec" => "\u{2192}",
        "overrightarrow" => "\u{2192}",
        "tilde" => "~",
        "widetilde" => "~",
        "dot" => "\u{2d9}",
        "ddot" => "\u{a8}",
        "check" => "\u{2c7}",
        "breve" => "\u{2d8}",
        "acute" => "\u{b4}",
        "grave" => "`",
        "overbrace" => "\u{23de}",
        _ => return None,
    })
}

fn under_accent(name: &str) -> Option<&'static str> {
    Some(match name {
        "underline" => "_",
        "underbrace" => "\u{23df}",
        _ => return None,
    })
}

// --- MathML output ---------------------------------------------------------

/// Escape text for HTML content and double-quoted attribute values.
pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Serialize `node` as a complete `<math>` element carrying its source.
pub fn to_mathml(node: &MathNode, tex: &str, display: bool) -> String {
    let mut out = String::new();
    out.push_str("<math xmlns=\"http://www.w3.org/1998/Math/MathML\" display=\"");
    out.push_str(if display { "block" } else { "inline" });
    out.push_str("\" data-tex=\"");
    out.push_str(&escape_html(tex));
    out.push_str("\" alttext=\"");
    out.push_str(&escape_html(tex));
    out.push_str("\">");
    let wrap = !matches!(node, MathNode::Row { .. });
    if wrap {
        out.push_str("<mrow>");
    }
    write_node(node, &mut out);
    if wrap {
        out.push_str("</mrow>");
    }
    out.push_str("</math>");
    out
}

fn leaf(out: &mut String, tag: &str, attrs: &str, text: &str) {
    out.push('<');
    out.push_str(tag);
    out.push_str(attrs);
    out.push('>');
    out.push_str(&escape_html(text));
    out.push_str("</");
    out.push_str(tag);
    out.push('>');
}

fn wrap(out: &mut String, tag: &str, attrs: &str, children: &[&MathNode]) {
    out.push('<');
    out.push_str(tag);
    out.push_str(attrs);
    out.push('>');
    for child in children {
        write_node(child, out);
    }
    out.push_str("</");
    out.push_str(tag);
    out.push('>');
}

fn write_node(node: &MathNode, out: &mut String) {
    match node {
        MathNode::Row { children } => {
            out.push_str("<mrow>");
            for c in children {
                write_node(c, out);
            }
            out.push_str("</mrow>");
        }
        MathNode::Ident { name, upright } => {
            let attrs = if *upright && name.chars().count() == 1 { " mathvariant=\"normal\"" } else { "" };
            leaf(out, "mi", attrs, name)
        }
        MathNode::Number { value } => leaf(out, "mn", "", value),
        MathNode::Operator { op, limits } => {
            let attrs = if *limits { " movablelimits=\"true\"" } else { "" };
            leaf(out, "mo", attrs, op)
        }
        MathNode::Text { text } => leaf(out, "mtext", "", text),
        MathNode::Space { width } => {
            out.push_str("<mspace width=\"");
            out.push_str(&escape_html(width));
            out.push_str("\"></mspace>");
        }
        MathNode::Sup { base, sup } => {
            let tag = if base.has_limits() { "mover" } else { "msup" };
            wrap(out, tag, "", &[base, sup])
        }
        MathNode::Sub { base, sub } => {
            let tag = if base.has_limits() { "munder" } else { "msub" };
            wrap(out, tag, "", &[base, sub])
        }
        MathNode::SubSup { base, sub, sup } => {
            let tag = if base.has_limits() { "munderover" } else { "msubsup" };
            wrap(out, tag, "", &[base, sub, sup])
        }
        MathNode::Frac { num, den, bar } => {
            let attrs = if *bar { "" } else { " linethickness=\"0\"" };
            wrap(out, "mfrac", attrs, &[num, den])
        }
        MathNode::Sqrt { radicand, index } => match index {
            Some(index) => wrap(out, "mroot", "", &[radicand, index]),
            None => wrap(out, "msqrt", "", &[radicand]),
        },
        MathNode::Styled { variant, child } => {
            let attrs = format!(" mathvariant=\"{}\"", variant.as_str());
            wrap(out, "mstyle", &attrs, &[child])
        }
        MathNode::Over { base, over, accent } => {
            let attrs = if *accent { " accent=\"true\"" } else { "" };
            wrap(out, "mover", attrs, &[base, over])
        }
        MathNode::Under { base, under } => wrap(out, "munder", "", &[base, under]),
        MathNode::Table { rows } => {
            out.push_str("<mtable>");
            for row in rows {
                out.push_str("<mtr>");
                for cell in row {
                    wrap(out, "mtd", "", &[cell]);
                }
                out.push_str("</mtr>");
            }
            out.push_str("</mtable>");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(tex: &str) -> MathNode {
        match render_math(tex) {
            MathRender::Structured(n) => n,
            MathRender::Fallback { diagnostic, .. } => panic!("{tex}: {diagnostic}"),
        }
    }

    #[test]
    fn superscript_structure() {
        assert_eq!(
            tree("x^2"),
            MathNode::Sup { base: Box::new(MathNode::ident("x")), sup: Box::new(MathNode::number("2")) }
        );
    }

    #[test]
    fn fraction_structure() {
        assert_eq!(
            tree(r"\frac{a}{b}"),
            MathNode::Frac {
                num: Box::new(MathNode::ident("a")),
                den: Box::new(MathNode::ident("b")),
                bar: true
            }
        );
    }

    #[test]
    fn unsupported_command_falls_back() {
        match render_math(r"\undefinedthing{q}") {
            MathRender::Fallback { tex, diagnostic } => {
                assert_eq!(tex, r"\undefinedthing{q}");
                assert_eq!(diagnostic.code, Code::MathFallback);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sub_and_sup_in_either_order() {
        let a = tree("x_i^2");
        let b = tree("x^2_i");
        assert_eq!(a, b);
        assert!(matches!(a, MathNode::SubSup { .. }));
    }

    #[test]
    fn double_superscript_falls_back() {
        assert!(matches!(render_math("x^2^3"), MathRender::Fallback { .. }));
    }

    #[test]
    fn numbers_group_digits_and_decimal_point() {
        assert_eq!(tree("3.14"), MathNode::number("3.14"));
        assert_eq!(
            tree("1+2"),
            MathNode::Row { children: vec![MathNode::number("1"), MathNode::op("+"), MathNode::number("2")] }
        );
    }

    #[test]
    fn greek_and_styles() {
        assert_eq!(tree(r"\alpha"), MathNode::ident("\u{3b1}"));
        assert!(matches!(tree(r"\mathbf{v}"), MathNode::Styled { variant: MathVariant::Bold, .. }));
        assert!(matches!(tree(r"\sqrt[3]{x}"), MathNode::Sqrt { index: Some(_), .. }));
    }

    #[test]
    fn aligned_rows_become_table() {
        let MathNode::Table { rows } = tree(r"a &= b \\ c &= d \\") else { panic!() };
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].len(), 2);
    }

    #[test]
    fn matrix_and_fences() {
        let MathNode::Row { children } = tree(r"\begin{pmatrix} 1 & 0 \\ 0 & 1 \end{pmatrix}") else { panic!() };
        assert_eq!(children.len(), 3);
        assert!(matches!(tree(r"\left( x \right)"), MathNode::Row { .. }));
        assert!(matches!(render_math(r"\left( x"), MathRender::Fallback { .. }));
    }

    #[test]
    fn text_keeps_spaces() {
        assert_eq!(tree(r"\text{if } x"), MathNode::Row {
            children: vec![MathNode::Text { text: "if ".into() }, MathNode::ident("x")]
        });
    }

    #[test]
    fn mathml_carries_source() {
        let html = to_mathml(&tree("a<b"), "a<b", false);
        assert!(html.contains("data-tex=\"a&lt;b\""));
        assert!(html.contains("<mo>&lt;</mo>"));
        assert!(html.starts_with("<math"));
    }

    #[test]
    fn limits_use_under_over() {
        let html = to_mathml(&tree(r"\sum_{i=1}^n i"), "", true);
        assert!(html.contains("<munderover>"));
    }

    #[test]
    fn deep_nesting_is_bounded() {
        let tex = "{".repeat(5000) + &"}".repeat(5000);
        assert!(matches!(render_math(&tex), MathRender::Fallback { .. }));
    }
}
