//! Tokenize a snippet and print one token per line.
//!
//! `cargo run --example tokenize -- 'Hello \emph{world}!'`

use structex::lexer::tokenize_default;

fn main() {
    let source = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "Text with \\emph{style} and $x^2$.\n\nA second paragraph % comment\n".into());
    let lexed = tokenize_default(&source);
    for token in &lexed.tokens {
        println!("{:>3}:{:<3} {:?}", token.loc.line, token.loc.column, token.kind);
    }
    for d in &lexed.diagnostics {
        eprintln!("{d}");
    }
}
