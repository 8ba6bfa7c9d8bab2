//! Parse a document and print its tree as JSON.

use structex::doc::{parse, resolve_refs};
use structex::lexer::tokenize_default;
use structex::macros::{ExpansionBudget, Expander, MacroEnvironment};
use structex::registry::PackageRegistry;

const SOURCE: &str = r"\documentclass{article}
\title{A Small Paper}
\begin{document}
\maketitle
\section{Introduction}\label{sec:intro}
We refer to Equation~\ref{eq:main}.
\begin{equation}\label{eq:main}
E = mc^2
\end{equation}
\subsection{Lists}
\begin{itemize}
\item one
\item two
\end{itemize}
\end{document}
";

fn main() {
    let registry = PackageRegistry::with_defaults();
    let mut env = MacroEnvironment::with_kernel(&registry);
    let mut budget = ExpansionBudget::default();
    let expanded = Expander::new(&mut env, &mut budget)
        .with_registry(&registry)
        .run(tokenize_default(SOURCE).tokens)
        .expect("fits the budget");
    let doc = resolve_refs(parse(&expanded.tokens, &registry));
    println!("{}", serde_json::to_string_pretty(&doc).unwrap());
}
