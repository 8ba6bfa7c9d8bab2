//! Category-code driven tokenizer for the supported LaTeX subset.
//!
//! The lexer follows TeX's three reading states (new line, mid line,
//! skipping blanks) so whitespace behaves the way authors expect: a control
//! word eats the blanks after it, a run of spaces is one space token, and a
//! blank line is a paragraph break. The category table is fixed for the whole
//! run; `\catcode` assignments are reported but never honoured.
//!
//! Two constructs are captured raw because their content must survive
//! untouched: the body of a `verbatim` environment and the argument of
//! `\verb`. Raw characters come out as [`Category::Other`] tokens, so later
//! stages never see control sequences inside them.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::{Code, Diagnostic, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Escape,
    BeginGroup,
    EndGroup,
    MathShift,
    Alignment,
    Parameter,
    Superscript,
    Subscript,
    Space,
    Letter,
    Other,
    Comment,
}

/// Character to category mapping. Characters without an explicit entry fall
/// back to the default rules, so the table is total.
#[derive(Debug, Clone, Default)]
pub struct CatcodeTable {
    overrides: HashMap<char, Category>,
}

impl CatcodeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, c: char, category: Category) -> Self {
        self.overrides.insert(c, category);
        self
    }

    pub fn category(&self, c: char) -> Category {
        if let Some(cat) = self.overrides.get(&c) {
            return *cat;
        }
        default_category(c)
    }
}

fn default_category(c: char) -> Category {
    match c {
        '\\' => Category::Escape,
        '{' => Category::BeginGroup,
        '}' => Category::EndGroup,
        '$' => Category::MathShift,
        '&' => Category::Alignment,
        '#' => Category::Parameter,
        '^' => Category::Superscript,
        '_' => Category::Subscript,
        '%' => Category::Comment,
        ' ' | '\t' | '\n' | '\r' => Category::Space,
        c if c.is_ascii_alphabetic() => Category::Letter,
        _ => Category::Other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Location {
    pub line: u32,
    pub column: u32,
}

impl Location {
    pub fn new(line: u32, column: u32) -> Self {
        Location { line, column }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TokenKind {
    ControlSeq(String),
    Char(char, Category),
    Param(u8),
    ParBreak,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub loc: Location,
}

impl Token {
    pub fn new(kind: TokenKind, loc: Location) -> Self {
        Token { kind, loc }
    }

    pub fn cs(name: &str) -> Self {
        Token::new(TokenKind::ControlSeq(name.to_string()), Location::default())
    }

    pub fn ch(c: char, category: Category) -> Self {
        Token::new(TokenKind::Char(c, category), Location::default())
    }

    pub fn control_name(&self) -> Option<&str> {
        match &self.kind {
            TokenKind::ControlSeq(name) => Some(name),
            _ => None,
        }
    }

    pub fn is_cs(&self, name: &str) -> bool {
        self.control_name() == Some(name)
    }

    pub fn category(&self) -> Option<Category> {
        match self.kind {
            TokenKind::Char(_, cat) => Some(cat),
            _ => None,
        }
    }

    pub fn is_char(&self, c: char) -> bool {
        matches!(self.kind, TokenKind::Char(x, _) if x == c)
    }

    pub fn is_begin_group(&self) -> bool {
        self.category() == Some(Category::BeginGroup)
    }

    pub fn is_end_group(&self) -> bool {
        self.category() == Some(Category::EndGroup)
    }

    pub fn is_space(&self) -> bool {
        self.category() == Some(Category::Space)
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::ControlSeq(name) => write!(f, "\\{name}"),
            TokenKind::Char(c, _) => write!(f, "{c}"),
            TokenKind::Param(n) => write!(f, "#{n}"),
            TokenKind::ParBreak => f.write_str("\\par"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    NewLine,
    MidLine,
    SkipBlanks,
}

struct Lexer<'t> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    column: u32,
    state: State,
    table: &'t CatcodeTable,
    out: Lexed,
}

/// Tokenize `source` with the given category table.
///
/// Never fails: malformed input produces diagnostics alongside whatever
/// tokens could be recovered.
pub fn tokenize(source: &str, table: &CatcodeTable) -> Lexed {
    let normalized = source.replace("\r\n", "\n").replace('\r', "\n");
    let mut lexer = Lexer {
        chars: normalized.chars().collect(),
        pos: 0,
        line: 1,
        column: 1,
        state: State::NewLine,
        table,
        out: Lexed::default(),
    };
    lexer.run();
    lexer.out
}

/// Tokenize with the default category table.
pub fn tokenize_default(source: &str) -> Lexed {
    tokenize(source, &CatcodeTable::default())
}

impl Lexer<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn loc(&self) -> Location {
        Location::new(self.line, self.column)
    }

    fn push(&mut self, kind: TokenKind, loc: Location) {
        self.out.tokens.push(Token::new(kind, loc));
    }

    fn push_par(&mut self, loc: Location) {
        if self.out.tokens.last().is_some_and(Token::is_space) {
            self.out.tokens.pop();
        }
        match self.out.tokens.last() {
            Some(t) if t.kind == TokenKind::ParBreak => {}
            // A paragraph break before any content carries no structure.
            None => {}
            Some(_) => self.push(TokenKind::ParBreak, loc),
        }
    }

    fn run(&mut self) {
        while let Some(c) = self.peek() {
            let loc = self.loc();
            if c == '\n' {
                self.bump();
                match self.state {
                    State::NewLine => self.push_par(loc),
                    State::MidLine => {
                        self.push(TokenKind::Char(' ', Category::Space), loc);
                    }
                    State::SkipBlanks => {}
                }
                self.state = State::NewLine;
                continue;
            }
            match self.table.category(c) {
                Category::Escape => {
                    self.bump();
                    self.control_sequence(loc);
                }
                Category::Comment => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                    self.state = State::NewLine;
                }
                Category::Space => {
                    self.bump();
                    if self.state == State::MidLine {
                        self.push(TokenKind::Char(' ', Category::Space), loc);
                        self.state = State::SkipBlanks;
                    }
                }
                Category::Parameter => {
                    self.bump();
                    self.state = State::MidLine;
                    match self.peek() {
                        Some(d @ '1'..='9') => {
                            self.bump();
                            self.push(TokenKind::Param(d as u8 - b'0'), loc);
                        }
                        Some(n) if self.table.category(n) == Category::Parameter => {
                            self.bump();
                            self.push(TokenKind::Char(c, Category::Parameter), loc);
                        }
                        _ => {
                            self.out.diagnostics.push(
                                Diagnostic::warning(
                                    Stage::Lex,
                                    Code::StrayParameter,
                                    "parameter character not followed by a digit",
                                )
                                .at(loc),
                            );
                            self.push(TokenKind::Char(c, Category::Parameter), loc);
                        }
                    }
                }
                cat => {
                    self.bump();
                    self.state = State::MidLine;
                    self.push(TokenKind::Char(c, cat), loc);
                    if cat == Category::EndGroup {
                        self.maybe_enter_verbatim();
                    }
                }
            }
        }
    }

    fn control_sequence(&mut self, loc: Location) {
        let Some(first) = self.peek() else {
            self.out.diagnostics.push(
                Diagnostic::warning(Stage::Lex, Code::EscapeAtEof, "escape character at end of input")
                    .at(loc),
            );
            return;
        };
        if self.table.category(first) == Category::Letter {
            let mut name = String::new();
            while let Some(c) = self.peek() {
                if self.table.category(c) != Category::Letter {
                    break;
                }
                name.push(c);
                self.bump();
            }
            if name == "catcode" {
                self.out.diagnostics.push(
                    Diagnostic::warning(
                        Stage::Lex,
                        Code::CatcodeChange,
                        "\\catcode changes are not supported; the category table is fixed",
                    )
                    .at(loc),
                );
            }
            let is_verb = name == "verb";
            self.push(TokenKind::ControlSeq(name), loc);
            if is_verb {
                self.state = State::MidLine;
                self.verb_argument();
            } else {
                self.state = State::SkipBlanks;
            }
        } else {
            self.bump();
            let (name, state) = match first {
                '\n' | ' ' | '\t' => (' ', State::SkipBlanks),
                c => (c, State::MidLine),
            };
            self.push(TokenKind::ControlSeq(name.to_string()), loc);
            self.state = state;
        }
    }

    fn verb_argument(&mut self) {
        if self.peek() == Some('*') {
            let loc = self.loc();
            self.bump();
            self.push(TokenKind::Char('*', Category::Other), loc);
        }
        let delim = match self.peek() {
            Some(d) if d != '\n' && !d.is_whitespace() && self.table.category(d) != Category::Letter => d,
            _ => {
                self.out.diagnostics.push(
                    Diagnostic::warning(Stage::Lex, Code::UnterminatedVerbatim, "\\verb without a delimiter")
                        .at(self.loc()),
                );
                return;
            }
        };
        let loc = self.loc();
        self.bump();
        self.push(TokenKind::Char(delim, Category::Other), loc);
        loop {
            let loc = self.loc();
            match self.peek() {
                Some(c) if c == delim => {
                    self.bump();
                    self.push(TokenKind::Char(delim, Category::Other), loc);
                    return;
                }
                Some('\n') | None => {
                    self.out.diagnostics.push(
                        Diagnostic::warning(Stage::Lex, Code::UnterminatedVerbatim, "\\verb argument ends at line end")
                            .at(loc),
                    );
                    return;
                }
                Some(c) => {
                    self.bump();
                    self.push(TokenKind::Char(c, Category::Other), loc);
                }
            }
        }
    }

    /// After a closing brace, check whether the tail of the token stream is
    /// `\begin{verbatim}` (or `verbatim*`) and if so capture the body raw.
    fn maybe_enter_verbatim(&mut self) {
        let Some(env) = trailing_begin_name(&self.out.tokens) else {
            return;
        };
        if env != "verbatim" && env != "verbatim*" {
            return;
        }
        let terminator: Vec<char> = format!("\\end{{{env}}}").chars().collect();
        let start = self.pos;
        let end = find_subslice(&self.chars[start..], &terminator).map(|i| start + i);
        let stop = end.unwrap_or(self.chars.len());
        while self.pos < stop {
            let loc = self.loc();
            let c = self.bump().expect("position within bounds");
            self.push(TokenKind::Char(c, Category::Other), loc);
        }
        if end.is_none() {
            self.out.diagnostics.push(
                Diagnostic::error(
                    Stage::Lex,
                    Code::UnterminatedVerbatim,
                    format!("{env} environment is never closed"),
                )
                .at(self.loc()),
            );
        }
        self.state = State::MidLine;
    }
}

fn trailing_begin_name(tokens: &[Token]) -> Option<String> {
    let close = tokens.len().checked_sub(1)?;
    // `{verbatim*}` is the longest name we care about.
    let window = close.saturating_sub(12);
    let open = window + tokens[window..close].iter().rposition(Token::is_begin_group)?;
    if open == 0 || !tokens[open - 1].is_cs("begin") {
        return None;
    }
    let mut name = String::new();
    for t in &tokens[open + 1..close] {
        match t.kind {
            TokenKind::Char(c, Category::Letter | Category::Other) => name.push(c),
            _ => return None,
        }
    }
    Some(name)
}

fn find_subslice(hay: &[char], needle: &[char]) -> Option<usize> {
    if needle.is_empty() || hay.len() < needle.len() {
        return None;
    }
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Render tokens back to source text.
///
/// A control word is followed by a space only when the next token is a
/// letter, which is the one case where re-tokenizing would otherwise merge
/// the two.
pub fn detokenize(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        match &tok.kind {
            TokenKind::ControlSeq(name) => {
                out.push('\\');
                out.push_str(name);
                let is_word = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic());
                let next_is_letter = tokens
                    .get(i + 1)
                    .is_some_and(|t| t.category() == Some(Category::Letter));
                if is_word && next_is_letter {
                    out.push(' ');
                }
            }
            TokenKind::Char(c, Category::Parameter) => {
                out.push(*c);
                out.push(*c);
            }
            TokenKind::Char(c, _) => out.push(*c),
            TokenKind::Param(n) => {
                out.push('#');
                out.push(char::from(b'0' + n));
            }
            TokenKind::ParBreak => out.push_str("\n\n"),
        }
    }
    out
}
