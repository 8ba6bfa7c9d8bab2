//! Expand user macros with a fuel budget, then print the result as source.

use structex::lexer::{detokenize, tokenize_default};
use structex::macros::{expand, ExpansionBudget, MacroEnvironment};
use structex::registry::PackageRegistry;

fn main() {
    let source = r"\newcommand{\norm}[1]{\left\| #1 \right\|}
\newcommand{\greet}[1][reader]{Hello, #1!}
\greet \greet[world] $\norm{x}$ and \unknowncmd stays.";
    let registry = PackageRegistry::with_defaults();
    let mut env = MacroEnvironment::with_kernel(&registry);
    let mut budget = ExpansionBudget::default();
    let expansion = expand(tokenize_default(source).tokens, &mut env, &mut budget).expect("fits the budget");
    println!("{}", detokenize(&expansion.tokens));
    println!("substitutions used: {}", budget.used());
    for d in &expansion.diagnostics {
        println!("{d}");
    }

    // A self-referential macro runs out of fuel instead of looping.
    let mut env = MacroEnvironment::new();
    let mut small = ExpansionBudget::new(1_000);
    let err = expand(tokenize_default(r"\def\loop{\loop}\loop").tokens, &mut env, &mut small).unwrap_err();
    println!("runaway macro: {err}");
}
