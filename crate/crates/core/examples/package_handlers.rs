//! Look up package handlers and register a new one from TOML.

use structex::pipeline::{convert, ConvertOptions, SourceBundle};
use structex::registry::{PackageHandler, PackageRegistry};

fn main() {
    let mut registry = PackageRegistry::with_defaults();
    let outcome = registry.resolve_all(["amsmath", "geometry", "tikz", "siunitx"]);
    println!("implemented: {:?}", outcome.implemented);
    println!("ignored:     {:?}", outcome.ignored);
    println!("unknown:     {:?}", outcome.unknown);

    let source = r"\documentclass{article}\usepackage{siunitx}
\begin{document}A length of \SI{3}{m}.\end{document}";
    let bundle = SourceBundle::single("si", source).unwrap();
    let before = convert(&bundle, &registry, &ConvertOptions::default());
    println!("before: {} unknown={:?}", before.status, before.unknown_packages);

    let handler = PackageHandler::from_toml(
        r##"
name = "siunitx"
kind = "implemented"

[[macros]]
name = "SI"
kind = "expandable"
arity = 2
body = "#1\\,#2"
"##,
        None,
    )
    .expect("valid handler");
    println!("{}", handler.to_toml());
    registry.register(handler);
    let after = convert(&bundle, &registry, &ConvertOptions::default());
    println!("after: {} unknown={:?}", after.status, after.unknown_packages);
}
