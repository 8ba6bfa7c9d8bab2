//! Shared fixtures for the integration and acceptance targets: a reference
//! tokenizer, the hand-expanded program suite, the fixture corpus and the
//! document generators.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use structex::lexer::{tokenize_default, Category, Token, TokenKind};
use structex::macros::{expand, ExpansionBudget, MacroEnvironment};
use structex::pipeline::Status;
use structex::registry::PackageRegistry;

// ---------------------------------------------------------------------------
// Token notation
//
// `\name` followed by one space is a control sequence (the space is a
// terminator, other whitespace in the notation is ignored). `␣` is a space
// token, `¶` a paragraph break, `⟨n⟩` parameter n, and `⟦c⟧` a character
// whose category is Other although its default category is not. Any other
// character stands for itself with its default category.
// ---------------------------------------------------------------------------

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

fn char_notation(c: char, cat: Category) -> String {
    match cat {
        Category::Space if c == ' ' => "␣".into(),
        _ if cat == default_category(c) && !c.is_whitespace() => c.to_string(),
        Category::Other => format!("⟦{c}⟧"),
        _ => format!("⟦{c}:{cat:?}⟧"),
    }
}

fn render_kind(kind: &TokenKind) -> String {
    match kind {
        TokenKind::ControlSeq(name) => format!("\\{name} "),
        TokenKind::ParBreak => "¶".into(),
        TokenKind::Param(n) => format!("⟨{n}⟩"),
        TokenKind::Char(c, cat) => char_notation(*c, *cat),
    }
}

fn other(c: char) -> String {
    char_notation(c, Category::Other)
}

pub fn render(tokens: &[Token]) -> String {
    tokens.iter().map(|t| render_kind(&t.kind)).collect()
}

/// Canonical form of a hand-written notation string.
pub fn normalize_notation(notation: &str) -> String {
    let chars: Vec<char> = notation.chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\\' => {
                i += 1;
                let mut name = String::new();
                if chars.get(i).is_some_and(|c| c.is_ascii_alphabetic()) {
                    while let Some(&c) = chars.get(i).filter(|c| c.is_ascii_alphabetic()) {
                        name.push(c);
                        i += 1;
                    }
                } else if let Some(&c) = chars.get(i) {
                    name.push(c);
                    i += 1;
                }
                out.push_str(&format!("\\{name} "));
                continue;
            }
            '⟦' => {
                let close = chars[i..].iter().position(|&c| c == '⟧').expect("unclosed ⟦") + i;
                let inner: Vec<char> = chars[i + 1..close].to_vec();
                match inner.as_slice() {
                    [c] => out.push_str(&other(*c)),
                    _ => out.push_str(&format!("⟦{}⟧", inner.iter().collect::<String>())),
                }
                i = close + 1;
                continue;
            }
            '⟨' => {
                let close = chars[i..].iter().position(|&c| c == '⟩').expect("unclosed ⟨") + i;
                let inner: String = chars[i + 1..close].iter().collect();
                out.push_str(&format!("⟨{inner}⟩"));
                i = close + 1;
                continue;
            }
            c if c.is_whitespace() => {}
            c => out.push(c),
        }
        i += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Reference tokenizer: a direct, unoptimised reading of the tokenization
// rules, producing the notation above.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    N,
    M,
    S,
}

pub fn reference_tokenize(source: &str) -> String {
    let src: Vec<char> = source.replace("\r\n", "\n").replace('\r', "\n").chars().collect();
    let mut out: Vec<String> = Vec::new();
    let mut mode = Mode::N;
    let mut i = 0;
    let letter = |c: char| c.is_ascii_alphabetic();
    while i < src.len() {
        let c = src[i];
        i += 1;
        match c {
            '\n' => {
                match mode {
                    Mode::N => {
                        if out.last().is_some_and(|t| t == "␣") {
                            out.pop();
                        }
                        if out.last().is_some_and(|t| t != "¶") {
                            out.push("¶".into());
                        }
                    }
                    Mode::M => out.push("␣".into()),
                    Mode::S => {}
                }
                mode = Mode::N;
            }
            '\\' => {
                let Some(&first) = src.get(i) else { break };
                if letter(first) {
                    let start = i;
                    while i < src.len() && letter(src[i]) {
                        i += 1;
                    }
                    let name: String = src[start..i].iter().collect();
                    out.push(format!("\\{name} "));
                    if name == "verb" {
                        mode = Mode::M;
                        if src.get(i) == Some(&'*') {
                            out.push(other('*'));
                            i += 1;
                        }
                        let delim = match src.get(i) {
                            Some(&d) if !d.is_whitespace() && !letter(d) => d,
                            _ => continue,
                        };
                        out.push(other(delim));
                        i += 1;
                        while let Some(&d) = src.get(i) {
                            if d == '\n' {
                                break;
                            }
                            out.push(other(d));
                            i += 1;
                            if d == delim {
                                break;
                            }
                        }
                    } else {
                        mode = Mode::S;
                    }
                } else {
                    i += 1;
                    if first == ' ' || first == '\t' || first == '\n' {
                        out.push("\\  ".into());
                        mode = Mode::S;
                    } else {
                        out.push(format!("\\{first} "));
                        mode = Mode::M;
                    }
                }
            }
            '%' => {
                while i < src.len() {
                    i += 1;
                    if src[i - 1] == '\n' {
                        break;
                    }
                }
                mode = Mode::N;
            }
            ' ' | '\t' => {
                if mode == Mode::M {
                    out.push("␣".into());
                    mode = Mode::S;
                }
            }
            '#' => {
                mode = Mode::M;
                match src.get(i) {
                    Some(&d) if ('1'..='9').contains(&d) => {
                        out.push(format!("⟨{d}⟩"));
                        i += 1;
                    }
                    Some('#') => {
                        out.push("#".into());
                        i += 1;
                    }
                    _ => out.push("#".into()),
                }
            }
            c => {
                mode = Mode::M;
                out.push(char_notation(c, default_category(c)));
                if c == '}' {
                    let tail = out.concat();
                    for env in ["verbatim", "verbatim*"] {
                        if tail.ends_with(&format!("\\begin {{{env}}}")) {
                            let end: Vec<char> = format!("\\end{{{env}}}").chars().collect();
                            let stop = (i..=src.len().saturating_sub(end.len()))
                                .find(|&k| src[k..].starts_with(&end))
                                .unwrap_or(src.len());
                            for &r in &src[i..stop] {
                                out.push(other(r));
                            }
                            i = stop;
                            break;
                        }
                    }
                }
            }
        }
    }
    out.concat()
}

/// Lexer output in the notation.
pub fn lex_notation(source: &str) -> String {
    render(&tokenize_default(source).tokens)
}

/// Expander output (kernel vocabulary loaded) in the notation.
pub fn expand_notation(source: &str) -> String {
    let registry = PackageRegistry::with_defaults();
    let mut env = MacroEnvironment::with_kernel(&registry);
    let mut budget = ExpansionBudget::default();
    let expanded = expand(tokenize_default(source).tokens, &mut env, &mut budget).expect("within budget");
    render(&expanded.tokens)
}

/// Twenty programs with their expansions worked out by hand.
pub const PROGRAMS: [(&str, &str, &str); 20] = [
    ("simple macro", r"\newcommand{\x}{abc}\x", "abc"),
    ("two arguments", r"\newcommand{\pair}[2]{(#1,#2)}\pair{a}{b}", "(a,b)"),
    ("optional argument", r"\newcommand{\greet}[1][world]{hi #1}\greet \greet[you]", "hi␣world hi␣you"),
    ("chained defs", r"\def\a{x}\def\b{\a\a}\b", "xx"),
    ("argument order", r"\def\swap#1#2{#2#1}\swap ab", "ba"),
    ("nested definition", r"\newcommand{\outer}[1]{\newcommand{\inner}[1]{#1-##1}}\outer{a}\inner{b}", "a-b"),
    ("unknown passthrough", r"a \foo{b} c", r"a␣\foo {b}␣c"),
    ("structural passthrough", r"\section{Intro}\label{s}", r"\section {Intro}\label {s}"),
    ("let snapshot", r"\def\a{1}\let\b=\a\def\a{2}\b\a", "12"),
    ("environment pair", r"\newenvironment{box}{[}{]}\begin{box}x\end{box}", "[x]"),
    ("whitespace and comments", "a  b\n\n\nc % comment\n  d", "a␣b¶c␣d"),
    ("control symbols", r"\%\&x\ y", r"\% \& x \  y"),
    ("verbatim body", "\\begin{verbatim}\n\\x  {\n\\end{verbatim}", "\\begin {verbatim}⟦\n⟧⟦\\⟧⟦x⟧⟦ ⟧⟦ ⟧⟦{⟧⟦\n⟧\\end {verbatim}"),
    ("verb argument", r"\verb|\x y|z", r"\verb ⟦|⟧⟦\⟧⟦x⟧⟦ ⟧⟦y⟧⟦|⟧z"),
    ("macro in math", r"\newcommand{\R}{\mathbb{R}}$x\in\R$", r"$x\in \mathbb {R}$"),
    ("missing argument", r"\newcommand{\two}[2]{#1#2}\two{a}", r"\two {a}"),
    ("provide and renew", r"\newcommand{\a}{1}\providecommand{\a}{2}\renewcommand{\b}{3}\a\b", "13"),
    ("nested braces", r"\newcommand{\wrap}[1]{<#1>}\wrap{a{b}c}", "<a{b}c>"),
    ("single token argument", r"\newcommand{\sq}[1]{#1#1}\sq x \sq {y}", "xx␣yy"),
    ("paragraphs around definitions", "x\n\n\\newcommand{\\p}{y}\\p\n\nz", "x¶y¶z"),
];

// ---------------------------------------------------------------------------
// Fixture corpus
// ---------------------------------------------------------------------------

pub const FIXTURE_COUNTS: [(Status, usize); 4] = [
    (Status::Success, 53),
    (Status::SuccessWithWarnings, 22),
    (Status::ErrorsButReadable, 22),
    (Status::Failed, 3),
];

fn wrap(preamble: &str, body: &str) -> String {
    format!("\\documentclass{{article}}\n{preamble}\\title{{Fixture}}\n\\author{{A. Writer}}\n\\begin{{document}}\n\\maketitle\n{body}\n\\end{{document}}\n")
}

fn clean_body(i: usize) -> String {
    let topics = ["Graphs", "Lattices", "Sparse Solvers", "Type Systems", "Optics", "Queues"];
    let topic = topics[i % topics.len()];
    let mut body = format!("\\section{{{topic}}}\\label{{sec:main}}\nWe study {topic} in case {i}.\n\n");
    match i % 5 {
        0 => body.push_str("\\begin{itemize}\n\\item first\n\\item second\n\\end{itemize}\n"),
        1 => body.push_str("\\begin{equation}\\label{eq:a}\nx^2 + y^2 = z^2\n\\end{equation}\nSee \\eqref{eq:a}.\n"),
        2 => body.push_str("\\subsection{Detail}\nInline $\\frac{a}{b} + \\alpha_i$ math.\n"),
        3 => body.push_str("\\newcommand{\\R}{\\mathbf{R}}\nA vector in $\\R^n$ and \\emph{emphasis}.\n"),
        _ => body.push_str("\\begin{enumerate}\n\\item one\n\\end{enumerate}\n\\begin{verbatim}\nraw \\text\n\\end{verbatim}\n"),
    }
    body.push_str("As shown in Section~\\ref{sec:main}.\n");
    body
}

fn warning_bundle(i: usize) -> BTreeMap<String, Vec<u8>> {
    let src = match i % 4 {
        0 => wrap("\\usepackage{tikz}\n", &clean_body(i)),
        1 => wrap("", &format!("{}See \\ref{{missing:{i}}}.\n", clean_body(i))),
        2 => wrap("\\usepackage{graphicx}\n", &format!("{}\\begin{{figure}}\\includegraphics{{nowhere{i}}}\\caption{{Lost}}\\end{{figure}}\n", clean_body(i))),
        _ => wrap("\\usepackage{pgfplots,siunitx}\n", &clean_body(i)),
    };
    BTreeMap::from([("main.tex".to_string(), src.into_bytes())])
}

fn error_bundle(i: usize) -> BTreeMap<String, Vec<u8>> {
    let broken = match i % 3 {
        0 => "Unclosed math $x + y here.\n".to_string(),
        1 => "\\begin{itemize}\n\\item a\n\\end{enumerate}\n".to_string(),
        _ => "A stray brace } in text.\n".to_string(),
    };
    let src = wrap("", &format!("{}{broken}", clean_body(i)));
    BTreeMap::from([("main.tex".to_string(), src.into_bytes())])
}

fn failed_bundle(i: usize) -> BTreeMap<String, Vec<u8>> {
    match i % 3 {
        0 => BTreeMap::from([(
            "main.tex".to_string(),
            b"\\documentclass{article}\n\\begin{document}\n\\vspace{1em}\\clearpage\n\\end{document}\n".to_vec(),
        )]),
        1 => BTreeMap::from([("notes.txt".to_string(), b"no sources here".to_vec())]),
        _ => BTreeMap::from([("main.tex".to_string(), b"\\documentclass{article}\n\\begin{document}\n% nothing\n\\end{document}\n".to_vec())]),
    }
}

/// Bundles for the fixture corpus, keyed by paper id, with the status each
/// one is built to produce.
pub fn fixture_bundles() -> Vec<(String, Status, BTreeMap<String, Vec<u8>>)> {
    let mut out = Vec::new();
    let mut n = 0;
    for (status, count) in FIXTURE_COUNTS {
        for i in 0..count {
            let files = match status {
                Status::Success => BTreeMap::from([("main.tex".to_string(), wrap("\\usepackage{amsmath}\n", &clean_body(i)).into_bytes())]),
                Status::SuccessWithWarnings => warning_bundle(i),
                Status::ErrorsButReadable => error_bundle(i),
                Status::Failed => failed_bundle(i),
            };
            out.push((format!("fx{n:03}"), status, files));
            n += 1;
        }
    }
    out
}

/// Write the fixture corpus under `dir`; returns the expected statuses.
pub fn write_fixture_corpus(dir: &Path) -> BTreeMap<String, Status> {
    let mut expected = BTreeMap::new();
    for (id, status, files) in fixture_bundles() {
        let bundle = dir.join(&id);
        std::fs::create_dir_all(&bundle).unwrap();
        for (name, bytes) in files {
            std::fs::write(bundle.join(name), bytes).unwrap();
        }
        expected.insert(id, status);
    }
    expected
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

const WORDS: &[&str] = &[
    "graph", "vertex", "bound", "model", "proof", "result", "kernel", "method", "sample", "error", "signal", "theorem",
];

fn sentence(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(3..9);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    format!("{}.", words.join(" "))
}

/// Lowercase letters spelling `n` in base 26, for unique command names.
pub fn letters(mut n: usize) -> String {
    let mut s = String::new();
    loop {
        s.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    s
}

/// A well-formed document; returns the source and the sectioning commands
/// it uses, in order.
pub fn structured_document(rng: &mut impl Rng) -> (String, Vec<&'static str>) {
    const LEVELS: [&str; 4] = ["section", "subsection", "subsubsection", "paragraph"];
    let mut body = String::new();
    let mut commands = Vec::new();
    let mut depth = 0usize;
    for _ in 0..rng.gen_range(1..12) {
        // Move at most one level deeper than the current one.
        let deepest = if commands.is_empty() { 0 } else { (depth + 1).min(3) };
        let level = rng.gen_range(0..=deepest);
        depth = level;
        commands.push(LEVELS[level]);
        body.push_str(&format!("\\{}{{{}}}\n", LEVELS[level], sentence(rng).trim_end_matches('.')));
        for _ in 0..rng.gen_range(0..3) {
            match rng.gen_range(0..4) {
                0 => body.push_str(&format!("{} $x_{{{}}}$\n\n", sentence(rng), rng.gen_range(0..9))),
                1 => body.push_str(&format!("\\begin{{itemize}}\n\\item {}\n\\end{{itemize}}\n", sentence(rng))),
                2 => body.push_str(&format!("\\emph{{{}}} {}\n\n", sentence(rng), sentence(rng))),
                _ => body.push_str(&format!("{}\n\n", sentence(rng))),
            }
        }
    }
    (wrap("", &body), commands)
}

/// Document whose body uses a control word nothing defines. Returns the
/// source and the command as written (with backslash).
pub fn passthrough_document(rng: &mut impl Rng, index: usize) -> (String, String) {
    let command = format!("\\zq{}", letters(index));
    let mut body = format!("\\section{{{}}}\n{} ", sentence(rng).trim_end_matches('.'), sentence(rng));
    match rng.gen_range(0..3) {
        0 => body.push_str(&format!("{command} {}\n", sentence(rng))),
        1 => body.push_str(&format!("{command}{{{}}} {}\n", WORDS.choose(rng).unwrap(), sentence(rng))),
        _ => body.push_str(&format!("\\emph{{{command}}} {}\n", sentence(rng))),
    }
    (wrap("", &body), command)
}

const PACKAGES: &[&str] = &[
    "amsmath", "graphicx", "hyperref", "booktabs", "xcolor", "geometry", "tikz", "pgfplots", "siunitx", "algorithm2e",
    "natbib", "url",
];

/// Document with a random package list.
pub fn package_document(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(0..4);
    let pkgs: Vec<&str> = PACKAGES.choose_multiple(rng, n).copied().collect();
    let preamble = if pkgs.is_empty() { String::new() } else { format!("\\usepackage{{{}}}\n", pkgs.join(",")) };
    wrap(&preamble, &format!("\\section{{Body}}\n{}\n", sentence(rng)))
}

const FRAGMENTS: &[&str] = &[
    "\\section{", "\\begin{itemize}", "\\end{itemize}", "\\item ", "$", "$$", "\\[", "\\]", "{", "}", "\\newcommand{\\x}[1]{#1#1}",
    "\\x{\\x{a}}", "\\def\\loop{\\loop}", "\\loop", "\\begin{equation}", "\\end{equation}", "\\frac{", "^", "_", "&", "\\\\",
    "\\begin{tabular}{|c|c|}", "\\end{tabular}", "\\label{a}", "\\ref{a}", "\\verb|", "\\begin{verbatim}", "\\end{verbatim}",
    "\\input{other}", "\\includegraphics{img}", "\\usepackage{tikz}", "\\caption{", "%", "\n", "\n\n", "#", "\\",
    "\\begin{figure}", "\\end{figure}", "\\footnote{", "\\title{", "\\end{document}", "\\begin{document}", "\\cite{k}",
    "\\multicolumn{2}{c}{", "\\sqrt[3]{", "\\left(", "\\right)", "\\begin{matrix}", "\\end{matrix}", "text ", "é",
];

/// Random bundle: well-known fragments mixed with arbitrary bytes, optionally
/// with a document class so the main-file detection succeeds.
pub fn random_bundle(rng: &mut impl Rng) -> BTreeMap<String, Vec<u8>> {
    let mut bytes = Vec::new();
    if rng.gen_bool(0.8) {
        bytes.extend_from_slice(b"\\documentclass{article}\n");
    }
    if rng.gen_bool(0.6) {
        bytes.extend_from_slice(b"\\begin{document}\n");
    }
    for _ in 0..rng.gen_range(0..60) {
        if rng.gen_bool(0.75) {
            bytes.extend_from_slice(FRAGMENTS.choose(rng).unwrap().as_bytes());
        } else {
            for _ in 0..rng.gen_range(1..6) {
                bytes.push(rng.gen());
            }
        }
    }
    let mut files = BTreeMap::from([("main.tex".to_string(), bytes)]);
    if rng.gen_bool(0.2) {
        files.insert("other.tex".into(), b"\\input{main} nested".to_vec());
    }
    files
}

// ---------------------------------------------------------------------------
// Invariant checks
// ---------------------------------------------------------------------------

/// Status, diagnostics and page agree with each other.
pub fn check_result(result: &structex::pipeline::ConversionResult) -> Result<(), String> {
    use structex::html::{check_well_formed, dark_media_rule_count};
    let expected = Status::classify(&result.diagnostics, result.html.is_some());
    if result.status != expected {
        return Err(format!("status {} but diagnostics say {expected}", result.status));
    }
    match &result.html {
        None => {
            if result.status != Status::Failed {
                return Err("no page but not failed".into());
            }
        }
        Some(page) => {
            check_well_formed(&page.html).map_err(|e| format!("malformed page: {e}"))?;
            if dark_media_rule_count(&page.html) != 1 {
                return Err("page must carry exactly one dark-scheme rule".into());
            }
            if page.includes_banner == result.unknown_packages.is_empty() {
                return Err(format!("banner {} with unknown packages {:?}", page.includes_banner, result.unknown_packages));
            }
            let attr = format!("data-paper-id=\"{}\"", structex::math::escape_html(&result.paper_id));
            if !page.html.contains(&attr) {
                return Err("page root lacks data-paper-id".into());
            }
        }
    }
    Ok(())
}

/// Levels of the section headings in a page, in document order.
pub fn heading_levels(html: &str) -> Vec<u8> {
    let bytes = html.as_bytes();
    let mut levels = Vec::new();
    let mut i = 0;
    while let Some(pos) = html[i..].find("<h") {
        let at = i + pos;
        if let (Some(d), Some(b'>')) = (bytes.get(at + 2), bytes.get(at + 3)) {
            if d.is_ascii_digit() {
                levels.push(d - b'0');
            }
        }
        i = at + 2;
    }
    levels
}

/// Convert a single in-memory source with default options.
pub fn convert_source(paper_id: &str, source: &str) -> structex::pipeline::ConversionResult {
    let bundle = structex::pipeline::SourceBundle::single(paper_id, source).expect("source has a document class");
    structex::pipeline::convert(&bundle, &PackageRegistry::with_defaults(), &structex::pipeline::ConvertOptions::default())
}

/// Convert an arbitrary file map, falling back to the invalid-bundle result.
pub fn convert_files(paper_id: &str, files: BTreeMap<String, Vec<u8>>, registry: &PackageRegistry) -> structex::pipeline::ConversionResult {
    use structex::pipeline::{convert, ConversionResult, ConvertOptions, SourceBundle};
    match SourceBundle::from_files(paper_id, files, None) {
        Ok(bundle) => convert(&bundle, registry, &ConvertOptions::default()),
        Err(e) => ConversionResult::bundle_invalid(paper_id, &e),
    }
}
