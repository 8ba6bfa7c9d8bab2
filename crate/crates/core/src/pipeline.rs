//! One source bundle in, one classified conversion result out.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{max_severity, Code, Diagnostic, Severity, Stage};
use crate::doc::{parse, resolve_refs, DocNode, Document, Inline};
use crate::html::{emit, EmitOptions, EmitterFailure, HtmlArtifact};
use crate::lexer::{detokenize, tokenize_default, Category, Token, TokenKind};
use crate::macros::{ExpandError, Expander, ExpansionBudget, MacroEnvironment, DEFAULT_FUEL};
use crate::registry::PackageRegistry;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// How deep `\input` may nest before further inputs are left unresolved.
pub const MAX_INPUT_DEPTH: usize = 16;

const GRAPHIC_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "svg", "gif", "webp", "pdf", "eps"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Success,
    SuccessWithWarnings,
    ErrorsButReadable,
    Failed,
}

impl Status {
    pub const ALL: [Status; 4] = [
        Status::Success,
        Status::SuccessWithWarnings,
        Status::ErrorsButReadable,
        Status::Failed,
    ];

    /// Classify from the diagnostics and whether a page was produced.
    pub fn classify(diagnostics: &[Diagnostic], has_html: bool) -> Status {
        if !has_html {
            return Status::Failed;
        }
        match max_severity(diagnostics) {
            Some(Severity::Error) => Status::ErrorsButReadable,
            Some(Severity::Warning) => Status::SuccessWithWarnings,
            _ => Status::Success,
        }
    }

    /// Process exit code for single-document CLI mode.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success | Status::SuccessWithWarnings => 0,
            Status::ErrorsButReadable => 1,
            Status::Failed => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Success => "Success",
            Status::SuccessWithWarnings => "SuccessWithWarnings",
            Status::ErrorsButReadable => "ErrorsButReadable",
            Status::Failed => "Failed",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Exit code for a bundle that could not be converted at all.
pub const EXIT_BUNDLE_INVALID: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BundleError {
    #[error("bundle has no files")]
    Empty,
    #[error("no file contains \\documentclass")]
    NoMainFile,
    #[error("main file {0} is not in the bundle")]
    MainFileMissing(String),
    #[error("main file {0} does not contain \\documentclass")]
    MainFileInvalid(String),
    #[error("cannot read bundle: {0}")]
    Io(String),
}

impl BundleError {
    pub fn diagnostic(&self) -> Diagnostic {
        Diagnostic::error(Stage::Bundle, Code::NoMainFile, self.to_string())
    }
}

/// Author-submitted files for one paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceBundle {
    pub paper_id: String,
    pub files: BTreeMap<String, Vec<u8>>,
    pub main_file: String,
    /// Notes from bundle assembly, such as an ambiguous main file.
    pub diagnostics: Vec<Diagnostic>,
}

impl SourceBundle {
    /// Build a bundle, detecting the main file unless one is given.
    pub fn from_files(
        paper_id: impl Into<String>,
        files: BTreeMap<String, Vec<u8>>,
        main_file: Option<&str>,
    ) -> Result<Self, BundleError> {
        let files: BTreeMap<String, Vec<u8>> = files.into_iter().map(|(k, v)| (normalize_path(&k), v)).collect();
        if files.is_empty() {
            return Err(BundleError::Empty);
        }
        let (main_file, diagnostics) = match main_file {
            Some(main) => {
                let main = normalize_path(main);
                let bytes = files.get(&main).ok_or_else(|| BundleError::MainFileMissing(main.clone()))?;
                if !has_documentclass(bytes) {
                    return Err(BundleError::MainFileInvalid(main));
                }
                (main, Vec::new())
            }
            None => {
                let (main, diag) = detect_main_file(&files)?;
                (main, diag.into_iter().collect())
            }
        };
        Ok(SourceBundle {
            paper_id: paper_id.into(),
            files,
            main_file,
            diagnostics,
        })
    }

    /// Bundle from a single in-memory source file.
    pub fn single(paper_id: impl Into<String>, source: &str) -> Result<Self, BundleError> {
        let files = BTreeMap::from([("main.tex".to_string(), source.as_bytes().to_vec())]);
        Self::from_files(paper_id, files, None)
    }

    /// Read every regular file under `dir`. Generated `.html` pages and
    /// hidden files are skipped. The paper id defaults to the directory name.
    pub fn from_dir(dir: &Path, paper_id: Option<&str>) -> Result<Self, BundleError> {
        Self::from_dir_with_main(dir, paper_id, None)
    }

    /// Like [`SourceBundle::from_dir`] with an explicit main file.
    pub fn from_dir_with_main(dir: &Path, paper_id: Option<&str>, main_file: Option<&str>) -> Result<Self, BundleError> {
        let paper_id = paper_id
            .map(str::to_string)
            .or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "paper".to_string());
        let mut files = BTreeMap::new();
        for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
            let entry = entry.map_err(|e| BundleError::Io(e.to_string()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(dir).unwrap_or(entry.path());
            let rel = rel.to_string_lossy().replace('\\', "/");
            let hidden = rel.split('/').any(|c| c.starts_with('.'));
            if hidden || rel.ends_with(".html") {
                continue;
            }
            let bytes = std::fs::read(entry.path()).map_err(|e| BundleError::Io(format!("{rel}: {e}")))?;
            files.insert(rel, bytes);
        }
        Self::from_files(paper_id, files, main_file)
    }

    /// Find a bundle file for a graphic reference, trying common extensions.
    pub fn resolve_graphic(&self, path: &str) -> Option<String> {
        let path = normalize_path(path);
        if self.files.contains_key(&path) {
            return Some(path);
        }
        GRAPHIC_EXTENSIONS
            .iter()
            .map(|ext| format!("{path}.{ext}"))
            .find(|p| self.files.contains_key(p))
    }

    fn resolve_input(&self, name: &str) -> Option<String> {
        let name = normalize_path(name);
        if self.files.contains_key(&name) {
            return Some(name);
        }
        let with_ext = format!("{name}.tex");
        self.files.contains_key(&with_ext).then_some(with_ext)
    }
}

fn normalize_path(p: &str) -> String {
    let p = p.trim().replace('\\', "/");
    let mut parts: Vec<&str> = Vec::new();
    for part in p.split('/') {
        match part {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            other => parts.push(other),
        }
    }
    parts.join("/")
}

/// True if some line contains `\documentclass` before any comment.
fn has_documentclass(bytes: &[u8]) -> bool {
    let text = String::from_utf8_lossy(bytes);
    text.lines().any(|line| {
        let Some(at) = line.find("\\documentclass") else {
            return false;
        };
        let mut escaped = false;
        for c in line[..at].chars() {
            match c {
                '\\' => escaped = !escaped,
                '%' if !escaped => return false,
                _ => escaped = false,
            }
        }
        true
    })
}

/// The file that holds `\documentclass`. Several candidates resolve to the
/// lexicographically smallest path, with a warning.
pub fn detect_main_file(files: &BTreeMap<String, Vec<u8>>) -> Result<(String, Option<Diagnostic>), BundleError> {
    if files.is_empty() {
        return Err(BundleError::Empty);
    }
    let candidates: Vec<&String> = files
        .iter()
        .filter(|(_, bytes)| has_documentclass(bytes))
        .map(|(path, _)| path)
        .collect();
    match candidates.as_slice() {
        [] => Err(BundleError::NoMainFile),
        [only] => Ok(((*only).clone(), None)),
        [first, rest @ ..] => {
            let others: Vec<&str> = rest.iter().map(|s| s.as_str()).collect();
            let diag = Diagnostic::warning(
                Stage::Bundle,
                Code::AmbiguousMainFile,
                format!("several files contain \\documentclass; using {first} over {}", others.join(", ")),
            );
            Ok(((*first).clone(), Some(diag)))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    pub fuel: u64,
    pub timeout: Duration,
    pub emit: EmitOptions,
    /// Keep the parsed document on the result (for AST dumps).
    pub keep_document: bool,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        ConvertOptions {
            fuel: DEFAULT_FUEL,
            timeout: DEFAULT_TIMEOUT,
            emit: EmitOptions {
                require_content: true,
                ..EmitOptions::default()
            },
            keep_document: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConversionResult {
    pub paper_id: String,
    pub status: Status,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub html: Option<HtmlArtifact>,
    pub unknown_packages: BTreeSet<String>,
    pub timing_ms: u64,
    #[serde(skip)]
    pub document: Option<Document>,
}

impl ConversionResult {
    /// Result for a bundle that never reached the converter.
    pub fn bundle_invalid(paper_id: impl Into<String>, error: &BundleError) -> Self {
        ConversionResult {
            paper_id: paper_id.into(),
            status: Status::Failed,
            diagnostics: vec![error.diagnostic()],
            html: None,
            unknown_packages: BTreeSet::new(),
            timing_ms: 0,
            document: None,
        }
    }

    pub fn count(&self, severity: Severity) -> usize {
        self.diagnostics.iter().filter(|d| d.severity == severity).count()
    }
}

/// Run lex, expand, parse, resolve and emit for one bundle.
pub fn convert(bundle: &SourceBundle, registry: &PackageRegistry, options: &ConvertOptions) -> ConversionResult {
    let started = Instant::now();
    let deadline = started + options.timeout;
    let mut diagnostics = bundle.diagnostics.clone();

    let mut loader = Loader {
        bundle,
        diagnostics: Vec::new(),
        chain: Vec::new(),
    };
    let tokens = loader.load(&bundle.main_file);
    diagnostics.append(&mut loader.diagnostics);

    let finish = |diagnostics: Vec<Diagnostic>, html: Option<HtmlArtifact>, doc: Option<Document>| {
        let status = Status::classify(&diagnostics, html.is_some());
        ConversionResult {
            paper_id: bundle.paper_id.clone(),
            status,
            diagnostics,
            html,
            unknown_packages: doc.as_ref().map(|d| d.unknown_packages.clone()).unwrap_or_default(),
            timing_ms: started.elapsed().as_millis() as u64,
            document: doc.filter(|_| options.keep_document),
        }
    };

    let mut env = MacroEnvironment::with_kernel(registry);
    let mut budget = ExpansionBudget::new(options.fuel);
    let expanded = Expander::new(&mut env, &mut budget)
        .with_registry(registry)
        .with_deadline(deadline)
        .run(tokens);
    let expanded = match expanded {
        Ok(e) => e,
        Err(err) => {
            let code = match err {
                ExpandError::FuelExhausted { .. } => Code::FuelExhausted,
                ExpandError::Timeout => Code::Timeout,
            };
            diagnostics.push(Diagnostic::error(Stage::Expand, code, err.to_string()));
            return finish(diagnostics, None, None);
        }
    };
    diagnostics.extend(expanded.diagnostics);

    let doc = parse(&expanded.tokens, registry);
    let mut doc = resolve_refs(doc);
    diagnostics.append(&mut doc.diagnostics);
    resolve_graphics(&mut doc, bundle, &mut diagnostics);

    if Instant::now() >= deadline {
        diagnostics.push(Diagnostic::error(
            Stage::Pipeline,
            Code::Timeout,
            format!("conversion exceeded {} s", options.timeout.as_secs_f64()),
        ));
        return finish(diagnostics, None, Some(doc));
    }

    let mut emit_options = options.emit.clone();
    emit_options.paper_id = bundle.paper_id.clone();
    match emit(&doc, &emit_options) {
        Ok(artifact) => {
            diagnostics.extend(artifact.warnings.iter().cloned());
            finish(diagnostics, Some(artifact), Some(doc))
        }
        Err(EmitterFailure::NoContent) => {
            diagnostics.push(Diagnostic::error(
                Stage::Emit,
                Code::EmptyDocument,
                "document has no content to render",
            ));
            finish(diagnostics, None, Some(doc))
        }
    }
}

/// Reads files and splices `\input`/`\include` at token level.
struct Loader<'a> {
    bundle: &'a SourceBundle,
    diagnostics: Vec<Diagnostic>,
    chain: Vec<String>,
}

impl Loader<'_> {
    fn load(&mut self, path: &str) -> Vec<Token> {
        let bytes = &self.bundle.files[path];
        let text = match std::str::from_utf8(bytes) {
            Ok(t) => t.to_string(),
            Err(_) => {
                self.diagnostics.push(Diagnostic::warning(
                    Stage::Bundle,
                    Code::InvalidUtf8,
                    format!("{path} is not valid UTF-8; invalid bytes replaced"),
                ));
                String::from_utf8_lossy(bytes).into_owned()
            }
        };
        let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
        let lexed = tokenize_default(text);
        self.diagnostics.extend(lexed.diagnostics);
        self.chain.push(path.to_string());
        let out = self.splice(lexed.tokens);
        self.chain.pop();
        out
    }

    fn splice(&mut self, tokens: Vec<Token>) -> Vec<Token> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        while i < tokens.len() {
            let is_input = tokens[i].is_cs("input") || tokens[i].is_cs("include");
            if !is_input {
                out.push(tokens[i].clone());
                i += 1;
                continue;
            }
            let Some((name, next)) = input_name(&tokens, i + 1) else {
                out.push(tokens[i].clone());
                i += 1;
                continue;
            };
            let resolved = self.bundle.resolve_input(&name);
            match resolved {
                Some(path) if self.chain.len() <= MAX_INPUT_DEPTH && !self.chain.contains(&path) => {
                    out.extend(self.load(&path));
                    i = next;
                }
                Some(path) => {
                    self.diagnostics.push(
                        Diagnostic::warning(
                            Stage::Bundle,
                            Code::MissingInput,
                            format!("\\input{{{path}}} is recursive or nested too deeply; left as is"),
                        )
                        .at(tokens[i].loc),
                    );
                    out.extend_from_slice(&tokens[i..next]);
                    i = next;
                }
                None => {
                    self.diagnostics.push(
                        Diagnostic::warning(
                            Stage::Bundle,
                            Code::MissingInput,
                            format!("input file {name} is not in the bundle"),
                        )
                        .at(tokens[i].loc),
                    );
                    out.extend_from_slice(&tokens[i..next]);
                    i = next;
                }
            }
        }
        out
    }
}

/// File name after `\input`: a brace group, or a bare name up to a space.
fn input_name(tokens: &[Token], mut i: usize) -> Option<(String, usize)> {
    while tokens.get(i).is_some_and(Token::is_space) {
        i += 1;
    }
    let first = tokens.get(i)?;
    if first.is_begin_group() {
        let mut depth = 0usize;
        for (j, t) in tokens.iter().enumerate().skip(i) {
            if t.is_begin_group() {
                depth += 1;
            } else if t.is_end_group() {
                depth -= 1;
                if depth == 0 {
                    let name = detokenize(&tokens[i + 1..j]).trim().to_string();
                    return (!name.is_empty()).then_some((name, j + 1));
                }
            }
        }
        return None;
    }
    let mut name = String::new();
    let mut j = i;
    while let Some(TokenKind::Char(c, Category::Letter | Category::Other)) = tokens.get(j).map(|t| &t.kind) {
        name.push(*c);
        j += 1;
    }
    (!name.is_empty()).then_some((name, j))
}

fn resolve_graphics(doc: &mut Document, bundle: &SourceBundle, diagnostics: &mut Vec<Diagnostic>) {
    let mut fix = |path: &mut String| match bundle.resolve_graphic(path) {
        Some(found) => *path = found,
        None => diagnostics.push(Diagnostic::warning(
            Stage::Pipeline,
            Code::MissingGraphic,
            format!("graphic {path} is not in the bundle"),
        )),
    };
    if let Some(blocks) = doc.metadata.abstract_blocks.as_mut() {
        walk_graphics(blocks, &mut fix);
    }
    walk_graphics(&mut doc.body, &mut fix);
}

fn walk_graphics(nodes: &mut [DocNode], fix: &mut impl FnMut(&mut String)) {
    for node in nodes {
        match node {
            DocNode::Figure { graphic_path, body, caption, .. } => {
                if let Some(p) = graphic_path.as_mut() {
                    fix(p);
                }
                walk_graphics(body, fix);
                if let Some(c) = caption.as_mut() {
                    walk_inline_graphics(c, fix);
                }
            }
            DocNode::Section { children, title, .. } => {
                walk_inline_graphics(title, fix);
                walk_graphics(children, fix);
            }
            DocNode::Quote { children } => walk_graphics(children, fix),
            DocNode::List { items, .. } => {
                for item in items {
                    walk_graphics(&mut item.children, fix);
                }
            }
            DocNode::Paragraph { inlines } => walk_inline_graphics(inlines, fix),
            DocNode::Table { rows, .. } => {
                for cell in rows.iter_mut().flatten() {
                    walk_inline_graphics(cell, fix);
                }
            }
            _ => {}
        }
    }
}

fn walk_inline_graphics(items: &mut [Inline], fix: &mut impl FnMut(&mut String)) {
    for item in items {
        match item {
            Inline::Image { path, .. } => fix(path),
            Inline::Styled { children, .. } | Inline::Footnote { children } | Inline::Link { text: children, .. } => {
                walk_inline_graphics(children, fix)
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn files(entries: &[(&str, &str)]) -> BTreeMap<String, Vec<u8>> {
        entries.iter().map(|(k, v)| (k.to_string(), v.as_bytes().to_vec())).collect()
    }

    fn run(src: &str) -> ConversionResult {
        let bundle = SourceBundle::single("p", src).unwrap();
        convert(&bundle, &PackageRegistry::with_defaults(), &ConvertOptions::default())
    }

    #[test]
    fn detect_unique_main() {
        let f = files(&[("a.tex", "\\documentclass{article}"), ("b.tex", "text")]);
        assert_eq!(detect_main_file(&f).unwrap(), ("a.tex".to_string(), None));
    }

    #[test]
    fn detect_tie_prefers_smallest_path() {
        let f = files(&[("z.tex", "\\documentclass{article}"), ("m.tex", "\\documentclass{article}")]);
        let (main, diag) = detect_main_file(&f).unwrap();
        assert_eq!(main, "m.tex");
        assert_eq!(diag.unwrap().code, Code::AmbiguousMainFile);
    }

    #[test]
    fn detect_none() {
        let f = files(&[("a.tex", "% \\documentclass{article}\nhello")]);
        assert_eq!(detect_main_file(&f), Err(BundleError::NoMainFile));
    }

    #[test]
    fn clean_article_succeeds() {
        let r = run("\\documentclass{article}\\begin{document}\\section{A}x\\section{B}y\\end{document}");
        assert_eq!(r.status, Status::Success, "{:?}", r.diagnostics);
        assert!(r.html.is_some());
    }

    #[test]
    fn tikz_article_has_banner() {
        let r = run("\\documentclass{article}\\usepackage{tikz}\\begin{document}\\section{A}x\\end{document}");
        assert_eq!(r.status, Status::SuccessWithWarnings);
        assert!(r.html.as_ref().unwrap().includes_banner);
    }

    #[test]
    fn infinite_loop_fails() {
        let r = run("\\documentclass{article}\\newcommand{\\loop}{\\loop}\\begin{document}\\loop\\end{document}");
        assert_eq!(r.status, Status::Failed);
        assert!(r.html.is_none());
        assert!(r.diagnostics.iter().any(|d| d.code == Code::FuelExhausted));
    }

    #[test]
    fn missing_documentclass_is_invalid() {
        assert_eq!(SourceBundle::single("p", "hello").unwrap_err(), BundleError::NoMainFile);
    }

    #[test]
    fn inputs_are_spliced() {
        let f = files(&[
            ("main.tex", "\\documentclass{article}\\begin{document}\\input{sec/intro}\\end{document}"),
            ("sec/intro.tex", "\\section{Intro}Hello"),
        ]);
        let bundle = SourceBundle::from_files("p", f, None).unwrap();
        let r = convert(&bundle, &PackageRegistry::with_defaults(), &ConvertOptions::default());
        assert_eq!(r.status, Status::Success, "{:?}", r.diagnostics);
        assert!(r.html.unwrap().html.contains("<h2><span class=\"secnum\">1</span>Intro</h2>"));
    }

    #[test]
    fn missing_input_stays_visible() {
        let r = run("\\documentclass{article}\\begin{document}\\input{gone}\\end{document}");
        assert_eq!(r.status, Status::SuccessWithWarnings);
        assert!(r.diagnostics.iter().any(|d| d.code == Code::MissingInput));
        assert!(r.html.unwrap().html.contains("\\input{gone}"));
    }

    #[test]
    fn recursive_input_terminates() {
        let f = files(&[("main.tex", "\\documentclass{article}\\begin{document}\\input{main}x\\end{document}")]);
        let bundle = SourceBundle::from_files("p", f, None).unwrap();
        let r = convert(&bundle, &PackageRegistry::with_defaults(), &ConvertOptions::default());
        assert!(r.diagnostics.iter().any(|d| d.code == Code::MissingInput));
    }

    #[test]
    fn graphics_resolved_by_extension() {
        let f = BTreeMap::from([
            (
                "main.tex".to_string(),
                b"\\documentclass{article}\\usepackage{graphicx}\\begin{document}\\begin{figure}\\includegraphics{fig}\\caption{C}\\end{figure}\\end{document}".to_vec(),
            ),
            ("fig.png".to_string(), vec![0x89, b'P', b'N', b'G']),
        ]);
        let bundle = SourceBundle::from_files("p", f, None).unwrap();
        let r = convert(&bundle, &PackageRegistry::with_defaults(), &ConvertOptions::default());
        assert_eq!(r.status, Status::Success, "{:?}", r.diagnostics);
        assert!(r.html.unwrap().html.contains("src=\"fig.png\""));
    }

    #[test]
    fn invalid_utf8_is_a_warning() {
        let mut bytes = b"\\documentclass{article}\\begin{document}caf".to_vec();
        bytes.push(0xff);
        bytes.extend_from_slice(b"\\end{document}");
        let bundle = SourceBundle::from_files("p", BTreeMap::from([("m.tex".to_string(), bytes)]), None).unwrap();
        let r = convert(&bundle, &PackageRegistry::with_defaults(), &ConvertOptions::default());
        assert_eq!(r.status, Status::SuccessWithWarnings);
    }

    #[test]
    fn empty_document_fails() {
        let r = run("\\documentclass{article}\\begin{document}\\end{document}");
        assert_eq!(r.status, Status::Failed);
    }

    #[test]
    fn status_exit_codes() {
        assert_eq!(Status::Success.exit_code(), 0);
        assert_eq!(Status::SuccessWithWarnings.exit_code(), 0);
        assert_eq!(Status::ErrorsButReadable.exit_code(), 1);
        assert_eq!(Status::Failed.exit_code(), 2);
    }
}
