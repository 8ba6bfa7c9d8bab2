//! Emit a page for a parsed document and check it.

use structex::doc::{parse, resolve_refs};
use structex::html::{check_well_formed, emit, EmitOptions};
use structex::lexer::tokenize_default;
use structex::macros::{ExpansionBudget, Expander, MacroEnvironment};
use structex::registry::PackageRegistry;

fn main() {
    let source = r"\documentclass{article}\usepackage{graphicx,tikz}
\begin{document}
\section{Intro}
Hi, see \cite{knuth} and $\alpha + \beta$.
\begin{figure}\includegraphics{plot}\caption{Measured throughput}\end{figure}
\end{document}";
    let registry = PackageRegistry::with_defaults();
    let mut env = MacroEnvironment::with_kernel(&registry);
    let mut budget = ExpansionBudget::default();
    let expanded = Expander::new(&mut env, &mut budget)
        .with_registry(&registry)
        .run(tokenize_default(source).tokens)
        .unwrap();
    let doc = resolve_refs(parse(&expanded.tokens, &registry));
    let page = emit(&doc, &EmitOptions::new("demo-0001")).expect("document has content");
    check_well_formed(&page.html).expect("well-formed");
    println!("banner: {}", page.includes_banner);
    for w in doc.diagnostics.iter().chain(&page.warnings) {
        println!("{w}");
    }
    let body = &page.html[page.html.find("<body").unwrap()..];
    println!("{body}");
}
