//! Fuel-bounded macro expansion.
//!
//! Only macros of kind [`MacroKind::Expandable`] are ever substituted.
//! Structural and ignored macros flow through untouched for the document
//! parser, and control sequences the environment has never heard of flow
//! through too, so an unsupported command ends up visible in the output
//! instead of silently vanishing.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{Code, Diagnostic, Stage};
use crate::lexer::{Category, Location, Token, TokenKind};
use crate::registry::PackageRegistry;

/// Default number of substitutions allowed per document.
pub const DEFAULT_FUEL: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacroKind {
    Expandable,
    Structural,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacroDef {
    pub name: String,
    pub arity: u8,
    pub body: Vec<Token>,
    pub kind: MacroKind,
    /// Default for an optional first argument (`\newcommand\x[2][d]{..}`).
    pub optional_default: Option<Vec<Token>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DefineError {
    #[error("macro \\{name}: arity {arity} exceeds 9")]
    ArityTooLarge { name: String, arity: u8 },
    #[error("macro \\{name}: body uses #{index} but arity is {arity}")]
    ParamOutOfRange { name: String, index: u8, arity: u8 },
    #[error("macro name must not be empty")]
    EmptyName,
}

impl MacroDef {
    pub fn new(name: impl Into<String>, arity: u8, body: Vec<Token>, kind: MacroKind) -> Result<Self, DefineError> {
        let name = name.into();
        if name.is_empty() {
            return Err(DefineError::EmptyName);
        }
        if arity > 9 {
            return Err(DefineError::ArityTooLarge { name, arity });
        }
        if let Some(index) = body.iter().find_map(|t| match t.kind {
            TokenKind::Param(i) if i > arity => Some(i),
            _ => None,
        }) {
            return Err(DefineError::ParamOutOfRange { name, index, arity });
        }
        Ok(MacroDef {
            name,
            arity,
            body,
            kind,
            optional_default: None,
        })
    }

    pub fn expandable(name: impl Into<String>, arity: u8, body: Vec<Token>) -> Result<Self, DefineError> {
        Self::new(name, arity, body, MacroKind::Expandable)
    }

    pub fn structural(name: impl Into<String>) -> Self {
        Self::new(name, 0, Vec::new(), MacroKind::Structural).expect("structural macro is valid")
    }

    pub fn ignored(name: impl Into<String>, arity: u8) -> Result<Self, DefineError> {
        Self::new(name, arity, Vec::new(), MacroKind::Ignored)
    }

    pub fn with_optional_default(mut self, default: Vec<Token>) -> Self {
        self.optional_default = Some(default);
        self
    }
}

/// How a definition interacts with an existing binding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefineMode {
    /// `\newcommand`: redefinition is diagnosed but still applied.
    New,
    /// `\renewcommand`: replaces silently.
    Renew,
    /// `\providecommand`: only binds if the name is free.
    Provide,
    /// `\def`: replaces silently.
    Def,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvironmentMacro {
    pub begin: MacroDef,
    pub end: MacroDef,
}

#[derive(Debug, Clone, Default)]
pub struct MacroEnvironment {
    macros: HashMap<String, MacroDef>,
    environments: HashMap<String, EnvironmentMacro>,
}

impl MacroEnvironment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Environment preloaded with the kernel vocabulary of `registry`.
    pub fn with_kernel(registry: &PackageRegistry) -> Self {
        let mut env = Self::new();
        env.load(registry.kernel().macros.iter().cloned());
        env
    }

    pub fn lookup(&self, name: &str) -> Option<&MacroDef> {
        self.macros.get(name)
    }

    pub fn environment(&self, name: &str) -> Option<&EnvironmentMacro> {
        self.environments.get(name)
    }

    pub fn len(&self) -> usize {
        self.macros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.macros.is_empty() && self.environments.is_empty()
    }

    /// Bind macros without any redefinition checks (package loading).
    pub fn load(&mut self, defs: impl IntoIterator<Item = MacroDef>) {
        for def in defs {
            self.macros.insert(def.name.clone(), def);
        }
    }

    /// Bind `def` under `mode`. Returns a diagnostic when the binding is
    /// accepted but noteworthy.
    pub fn define(&mut self, def: MacroDef, mode: DefineMode) -> Option<Diagnostic> {
        let exists = self.macros.contains_key(&def.name);
        match mode {
            DefineMode::Provide if exists => None,
            DefineMode::New if exists => {
                let diag = Diagnostic::warning(
                    Stage::Expand,
                    Code::Redefinition,
                    format!("\\newcommand redefines existing \\{}", def.name),
                );
                self.macros.insert(def.name.clone(), def);
                Some(diag)
            }
            _ => {
                self.macros.insert(def.name.clone(), def);
                None
            }
        }
    }

    pub fn undefine(&mut self, name: &str) {
        self.macros.remove(name);
    }

    pub fn define_environment(&mut self, name: impl Into<String>, env: EnvironmentMacro, mode: DefineMode) -> Option<Diagnostic> {
        let name = name.into();
        let exists = self.environments.contains_key(&name);
        if mode == DefineMode::Provide && exists {
            return None;
        }
        let diag = (mode == DefineMode::New && exists).then(|| {
            Diagnostic::warning(
                Stage::Expand,
                Code::Redefinition,
                format!("\\newenvironment redefines existing {{{name}}}"),
            )
        });
        self.environments.insert(name, env);
        diag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpansionBudget {
    fuel: u64,
    limit: u64,
}

impl ExpansionBudget {
    pub fn new(fuel: u64) -> Self {
        ExpansionBudget { fuel, limit: fuel }
    }

    pub fn remaining(&self) -> u64 {
        self.fuel
    }

    pub fn used(&self) -> u64 {
        self.limit - self.fuel
    }

    fn spend(&mut self) -> Result<(), ExpandError> {
        if self.fuel == 0 {
            return Err(ExpandError::FuelExhausted { limit: self.limit });
        }
        self.fuel -= 1;
        Ok(())
    }
}

impl Default for ExpansionBudget {
    fn default() -> Self {
        Self::new(DEFAULT_FUEL)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpandError {
    #[error("macro expansion exceeded {limit} substitutions")]
    FuelExhausted { limit: u64 },
    #[error("macro expansion exceeded the time budget")]
    Timeout,
}

#[derive(Debug, Clone, Default)]
pub struct Expansion {
    pub tokens: Vec<Token>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Expansion driver. Holds the per-document state: the macro environment
/// grows as definitions are encountered in the token stream.
pub struct Expander<'a> {
    env: &'a mut MacroEnvironment,
    budget: &'a mut ExpansionBudget,
    registry: Option<&'a PackageRegistry>,
    deadline: Option<Instant>,
    input: Vec<Token>,
    out: Vec<Token>,
    diagnostics: Vec<Diagnostic>,
    reported_unknown: HashSet<String>,
    steps: u64,
}

/// Expand `tokens` against `env`. `\usepackage` is passed through without
/// loading anything; use [`Expander::with_registry`] for that.
pub fn expand(tokens: Vec<Token>, env: &mut MacroEnvironment, budget: &mut ExpansionBudget) -> Result<Expansion, ExpandError> {
    Expander::new(env, budget).run(tokens)
}

impl<'a> Expander<'a> {
    pub fn new(env: &'a mut MacroEnvironment, budget: &'a mut ExpansionBudget) -> Self {
        Expander {
            env,
            budget,
            registry: None,
            deadline: None,
            input: Vec::new(),
            out: Vec::new(),
            diagnostics: Vec::new(),
            reported_unknown: HashSet::new(),
            steps: 0,
        }
    }

    /// Load package macro bundles when `\usepackage` is seen.
    pub fn with_registry(mut self, registry: &'a PackageRegistry) -> Self {
        self.registry = Some(registry);
        self
    }

    pub fn with_deadline(mut self, deadline: Instant) -> Self {
        self.deadline = Some(deadline);
        self
    }

    pub fn run(mut self, tokens: Vec<Token>) -> Result<Expansion, ExpandError> {
        self.input = tokens;
        self.input.reverse();
        while let Some(tok) = self.input.pop() {
            self.steps += 1;
            if self.steps.is_multiple_of(4096) {
                if let Some(deadline) = self.deadline {
                    if Instant::now() >= deadline {
                        return Err(ExpandError::Timeout);
                    }
                }
            }
            match &tok.kind {
                TokenKind::ControlSeq(name) => {
                    let name = name.clone();
                    self.control_sequence(&name, tok)?;
                }
                _ => self.out.push(tok),
            }
        }
        Ok(Expansion {
            tokens: self.out,
            diagnostics: self.diagnostics,
        })
    }

    fn control_sequence(&mut self, name: &str, tok: Token) -> Result<(), ExpandError> {
        match name {
            "newcommand" => self.newcommand(DefineMode::New, tok.loc),
            "renewcommand" => self.newcommand(DefineMode::Renew, tok.loc),
            "providecommand" => self.newcommand(DefineMode::Provide, tok.loc),
            "DeclareMathOperator" => self.declare_math_operator(tok.loc),
            "def" | "gdef" | "edef" | "xdef" => self.def(tok.loc),
            "let" => self.let_(tok.loc),
            "newenvironment" => self.newenvironment(DefineMode::New, tok.loc),
            "renewenvironment" => self.newenvironment(DefineMode::Renew, tok.loc),
            "usepackage" | "RequirePackage" => {
                self.usepackage(tok);
                return Ok(());
            }
            "begin" | "end" => return self.environment_boundary(tok),
            _ => return self.ordinary(name, tok),
        }
        Ok(())
    }

    fn ordinary(&mut self, name: &str, tok: Token) -> Result<(), ExpandError> {
        match self.env.lookup(name) {
            Some(def) if def.kind == MacroKind::Expandable => {
                let def = def.clone();
                self.substitute(&def, tok.loc)
            }
            Some(_) => {
                self.out.push(tok);
                Ok(())
            }
            None => {
                if self.reported_unknown.insert(name.to_string()) {
                    self.diagnostics.push(
                        Diagnostic::info(Stage::Expand, Code::UnknownCommand, format!("unknown command \\{name}"))
                            .at(tok.loc),
                    );
                }
                self.out.push(tok);
                Ok(())
            }
        }
    }

    fn substitute(&mut self, def: &MacroDef, loc: Location) -> Result<(), ExpandError> {
        let mut args: Vec<Vec<Token>> = Vec::with_capacity(def.arity as usize);
        let mut remaining = def.arity;
        if let Some(default) = &def.optional_default {
            if remaining > 0 {
                args.push(self.read_optional().unwrap_or_else(|| default.clone()));
                remaining -= 1;
            }
        }
        for _ in 0..remaining {
            match self.read_argument() {
                Some(arg) => args.push(arg),
                None => {
                    self.diagnostics.push(
                        Diagnostic::error(
                            Stage::Expand,
                            Code::MissingArgument,
                            format!("\\{} expects {} argument(s)", def.name, def.arity),
                        )
                        .at(loc),
                    );
                    // Put back what was grabbed so nothing is lost.
                    for arg in args.into_iter().rev() {
                        self.push_front_group(arg, loc);
                    }
                    self.out.push(Token::new(TokenKind::ControlSeq(def.name.clone()), loc));
                    return Ok(());
                }
            }
        }
        self.budget.spend()?;
        let replacement = instantiate(&def.body, &args, loc);
        self.push_front(replacement);
        Ok(())
    }

    fn push_front(&mut self, tokens: Vec<Token>) {
        self.input.extend(tokens.into_iter().rev());
    }

    fn push_front_group(&mut self, tokens: Vec<Token>, loc: Location) {
        self.input.push(Token::new(TokenKind::Char('}', Category::EndGroup), loc));
        self.input.extend(tokens.into_iter().rev());
        self.input.push(Token::new(TokenKind::Char('{', Category::BeginGroup), loc));
    }

    fn skip_spaces(&mut self) {
        while self.input.last().is_some_and(Token::is_space) {
            self.input.pop();
        }
    }

    /// Undelimited argument: a balanced group (braces stripped) or a single
    /// token. `None` at end of input, a paragraph break, or a closing brace.
    fn read_argument(&mut self) -> Option<Vec<Token>> {
        self.skip_spaces();
        let next = self.input.last()?;
        if next.kind == TokenKind::ParBreak || next.is_end_group() {
            return None;
        }
        if next.is_begin_group() {
            let open = self.input.pop()?;
            match self.read_balanced() {
                Some(group) => Some(group),
                None => {
                    self.input.push(open);
                    None
                }
            }
        } else {
            self.input.pop().map(|t| vec![t])
        }
    }

    /// Tokens up to the matching close brace (consumed, not returned). On
    /// end of input the consumed tokens are restored and `None` returned.
    fn read_balanced(&mut self) -> Option<Vec<Token>> {
        let mut depth = 0usize;
        let mut group = Vec::new();
        while let Some(tok) = self.input.pop() {
            if tok.is_begin_group() {
                depth += 1;
            } else if tok.is_end_group() {
                if depth == 0 {
                    return Some(group);
                }
                depth -= 1;
            }
            group.push(tok);
        }
        self.input.extend(group.into_iter().rev());
        None
    }

    /// `[ ... ]` at brace depth zero, if present. Nothing is consumed when
    /// the bracket is never closed.
    fn read_optional(&mut self) -> Option<Vec<Token>> {
        let mut top = self.input.len();
        while top > 0 && self.input[top - 1].is_space() {
            top -= 1;
        }
        if top == 0 || !self.input[top - 1].is_char('[') {
            return None;
        }
        let mut depth = 0usize;
        let close = (0..top - 1).rev().find(|&i| {
            let tok = &self.input[i];
            if tok.is_begin_group() {
                depth += 1;
            } else if tok.is_end_group() {
                depth = depth.saturating_sub(1);
            } else if depth == 0 && tok.is_char(']') {
                return true;
            }
            false
        })?;
        let content: Vec<Token> = self.input[close + 1..top - 1].iter().rev().cloned().collect();
        self.input.truncate(close);
        Some(content)
    }

    fn read_star(&mut self) -> bool {
        if self.input.last().is_some_and(|t| t.is_char('*')) {
            self.input.pop();
            true
        } else {
            false
        }
    }

    /// `\foo` or `{\foo}`.
    fn read_macro_name(&mut self) -> Option<String> {
        self.skip_spaces();
        let next = self.input.last()?;
        if let Some(name) = next.control_name() {
            let name = name.to_string();
            self.input.pop();
            return Some(name);
        }
        if next.is_begin_group() {
            self.input.pop();
            let group = self.read_balanced()?;
            let mut names = group.iter().filter(|t| !t.is_space());
            if let (Some(t), None) = (names.next(), names.next()) {
                return t.control_name().map(str::to_string);
            }
        }
        None
    }

    fn bad_definition(&mut self, message: String, loc: Location) {
        self.diagnostics
            .push(Diagnostic::error(Stage::Expand, Code::BadDefinition, message).at(loc));
    }

    fn newcommand(&mut self, mode: DefineMode, loc: Location) {
        self.read_star();
        let Some(name) = self.read_macro_name() else {
            self.bad_definition("definition without a macro name".into(), loc);
            return;
        };
        let arity = match self.read_optional() {
            None => 0,
            Some(spec) => match parse_arity(&spec) {
                Some(n) => n,
                None => {
                    self.bad_definition(format!("\\{name}: invalid argument count"), loc);
                    self.read_argument();
                    return;
                }
            },
        };
        let default = self.read_optional();
        let Some(body) = self.read_argument() else {
            self.bad_definition(format!("\\{name}: missing definition body"), loc);
            return;
        };
        self.install(name, arity, body, default, mode, loc);
    }

    fn install(&mut self, name: String, arity: u8, body: Vec<Token>, default: Option<Vec<Token>>, mode: DefineMode, loc: Location) {
        match MacroDef::expandable(name, arity, body) {
            Ok(mut def) => {
                if arity > 0 {
                    def.optional_default = default;
                }
                if let Some(d) = self.env.define(def, mode) {
                    self.diagnostics.push(d.at(loc));
                }
            }
            Err(e) => self.bad_definition(e.to_string(), loc),
        }
    }

    fn declare_math_operator(&mut self, loc: Location) {
        self.read_star();
        let Some(name) = self.read_macro_name() else {
            self.bad_definition("\\DeclareMathOperator without a name".into(), loc);
            return;
        };
        let Some(text) = self.read_argument() else {
            self.bad_definition(format!("\\{name}: missing operator text"), loc);
            return;
        };
        let mut body = vec![Token::new(TokenKind::ControlSeq("operatorname".into()), loc)];
        body.push(Token::new(TokenKind::Char('{', Category::BeginGroup), loc));
        body.extend(text);
        body.push(Token::new(TokenKind::Char('}', Category::EndGroup), loc));
        self.install(name, 0, body, None, DefineMode::New, loc);
    }

    fn def(&mut self, loc: Location) {
        let Some(name) = self.input.pop().and_then(|t| t.control_name().map(str::to_string)) else {
            self.bad_definition("\\def without a control sequence".into(), loc);
            return;
        };
        let mut params = Vec::new();
        while let Some(tok) = self.input.last() {
            if tok.is_begin_group() || tok.kind == TokenKind::ParBreak {
                break;
            }
            params.push(self.input.pop().expect("peeked"));
        }
        let Some(body) = self.read_argument() else {
            self.bad_definition(format!("\\{name}: missing definition body"), loc);
            return;
        };
        let undelimited = params
            .iter()
            .enumerate()
            .all(|(i, t)| t.kind == TokenKind::Param(i as u8 + 1));
        if !undelimited {
            self.env.undefine(&name);
            self.diagnostics.push(
                Diagnostic::warning(
                    Stage::Expand,
                    Code::UnsupportedDefinition,
                    format!("\\{name}: delimited parameters are not supported; calls are left as written"),
                )
                .at(loc),
            );
            return;
        }
        self.install(name, params.len() as u8, body, None, DefineMode::Def, loc);
    }

    fn let_(&mut self, loc: Location) {
        let Some(name) = self.input.pop().and_then(|t| t.control_name().map(str::to_string)) else {
            self.bad_definition("\\let without a control sequence".into(), loc);
            return;
        };
        self.skip_spaces();
        if self.input.last().is_some_and(|t| t.is_char('=')) {
            self.input.pop();
            self.skip_spaces();
        }
        let Some(target) = self.input.pop() else {
            self.bad_definition(format!("\\let\\{name} without a target"), loc);
            return;
        };
        let def = match &target.kind {
            TokenKind::ControlSeq(t) => match self.env.lookup(t) {
                Some(existing) => MacroDef {
                    name: name.clone(),
                    ..existing.clone()
                },
                // Aliasing something unknown: make the alias expand to it so
                // the original name still surfaces downstream.
                None => MacroDef::expandable(name.clone(), 0, vec![target]).expect("arity 0 body"),
            },
            _ => MacroDef::expandable(name.clone(), 0, vec![target]).expect("arity 0 body"),
        };
        self.env.define(def, DefineMode::Def);
    }

    fn newenvironment(&mut self, mode: DefineMode, loc: Location) {
        self.read_star();
        let name = self.read_argument().map(|g| plain_text(&g)).unwrap_or_default();
        if name.is_empty() {
            self.bad_definition("\\newenvironment without a name".into(), loc);
            return;
        }
        let arity = match self.read_optional() {
            None => 0,
            Some(spec) => match parse_arity(&spec) {
                Some(n) => n,
                None => {
                    self.bad_definition(format!("environment {name}: invalid argument count"), loc);
                    return;
                }
            },
        };
        let default = self.read_optional();
        let (Some(begin), Some(end)) = (self.read_argument(), self.read_argument()) else {
            self.bad_definition(format!("environment {name}: missing begin or end code"), loc);
            return;
        };
        let begin = match MacroDef::expandable(format!("begin:{name}"), arity, begin) {
            Ok(mut def) => {
                if arity > 0 {
                    def.optional_default = default;
                }
                def
            }
            Err(e) => return self.bad_definition(e.to_string(), loc),
        };
        let end = match MacroDef::expandable(format!("end:{name}"), 0, end) {
            Ok(def) => def,
            Err(e) => return self.bad_definition(e.to_string(), loc),
        };
        if let Some(d) = self.env.define_environment(name, EnvironmentMacro { begin, end }, mode) {
            self.diagnostics.push(d.at(loc));
        }
    }

    fn environment_boundary(&mut self, tok: Token) -> Result<(), ExpandError> {
        let is_begin = tok.is_cs("begin");
        let name = self.peek_group_text();
        let Some(env) = name.as_deref().and_then(|n| self.env.environment(n)) else {
            self.out.push(tok);
            return Ok(());
        };
        let def = if is_begin { env.begin.clone() } else { env.end.clone() };
        self.skip_spaces();
        self.input.pop();
        self.read_balanced();
        self.substitute(&def, tok.loc)
    }

    /// Text of the next brace group without consuming it.
    fn peek_group_text(&self) -> Option<String> {
        let mut i = self.input.len();
        while i > 0 && self.input[i - 1].is_space() {
            i -= 1;
        }
        if i == 0 || !self.input[i - 1].is_begin_group() {
            return None;
        }
        let mut name = String::new();
        for tok in self.input[..i - 1].iter().rev() {
            match tok.kind {
                TokenKind::Char(_, Category::EndGroup) => return Some(name),
                TokenKind::Char(c, _) => name.push(c),
                _ => return None,
            }
        }
        None
    }

    fn usepackage(&mut self, tok: Token) {
        self.out.push(tok);
        let mut names = String::new();
        // Options and the name list are emitted unchanged for the parser.
        while let Some(next) = self.input.last() {
            if next.is_space() {
                self.out.push(self.input.pop().expect("peeked"));
            } else if next.is_char('[') {
                while let Some(t) = self.input.pop() {
                    let done = t.is_char(']');
                    self.out.push(t);
                    if done {
                        break;
                    }
                }
            } else {
                break;
            }
        }
        if self.input.last().is_some_and(Token::is_begin_group) {
            let open = self.input.pop().expect("peeked");
            self.out.push(open);
            while let Some(t) = self.input.pop() {
                let done = t.is_end_group();
                if let TokenKind::Char(c, _) = t.kind {
                    if !done {
                        names.push(c);
                    }
                }
                self.out.push(t);
                if done {
                    break;
                }
            }
        }
        let Some(registry) = self.registry else {
            return;
        };
        for name in names.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            if let Some(handler) = registry.resolve(name) {
                self.env.load(handler.macros.iter().cloned());
            }
        }
    }
}

fn parse_arity(spec: &[Token]) -> Option<u8> {
    let text = plain_text(spec);
    let n: u8 = text.trim().parse().ok()?;
    (n <= 9).then_some(n)
}

/// Concatenated character content of `tokens`, ignoring control sequences.
pub fn plain_text(tokens: &[Token]) -> String {
    tokens
        .iter()
        .filter_map(|t| match t.kind {
            TokenKind::Char(c, _) => Some(c),
            _ => None,
        })
        .collect()
}

/// Replace parameters in `body` with `args`. A doubled `#` followed by a
/// digit becomes a parameter of the next nesting level.
fn instantiate(body: &[Token], args: &[Vec<Token>], loc: Location) -> Vec<Token> {
    let mut out = Vec::with_capacity(body.len());
    let mut iter = body.iter().peekable();
    while let Some(tok) = iter.next() {
        match tok.kind {
            TokenKind::Param(i) => {
                if let Some(arg) = args.get(i as usize - 1) {
                    out.extend(arg.iter().cloned());
                }
            }
            TokenKind::Char('#', Category::Parameter) => {
                let digit = iter.peek().and_then(|t| match t.kind {
                    TokenKind::Char(d @ '1'..='9', _) => Some(d as u8 - b'0'),
                    _ => None,
                });
                match digit {
                    Some(d) => {
                        iter.next();
                        out.push(Token::new(TokenKind::Param(d), loc));
                    }
                    None => out.push(Token::new(tok.kind.clone(), loc)),
                }
            }
            _ => out.push(Token::new(tok.kind.clone(), loc)),
        }
    }
    out
}
