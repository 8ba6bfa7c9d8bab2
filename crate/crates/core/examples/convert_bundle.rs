//! Run the full pipeline over an in-memory bundle with two files and an
//! image, then print the status and diagnostics.

use std::collections::BTreeMap;

use structex::pipeline::{convert, ConvertOptions, SourceBundle};
use structex::registry::PackageRegistry;

fn main() {
    let files = BTreeMap::from([
        (
            "paper.tex".to_string(),
            br"\documentclass{article}
\usepackage{graphicx}
\begin{document}
\input{sections/intro}
\begin{figure}
\includegraphics[alt={Bar chart of results}]{figs/results}
\caption{Results}
\end{figure}
\end{document}"
                .to_vec(),
        ),
        ("sections/intro.tex".to_string(), br"\section{Introduction} Text from another file.".to_vec()),
        ("figs/results.png".to_string(), vec![0x89, b'P', b'N', b'G']),
    ]);
    let bundle = SourceBundle::from_files("2401.12345", files, None).expect("valid bundle");
    println!("main file: {}", bundle.main_file);
    let result = convert(&bundle, &PackageRegistry::with_defaults(), &ConvertOptions::default());
    println!("status: {} (exit code {})", result.status, result.status.exit_code());
    for d in &result.diagnostics {
        println!("  {d}");
    }
    if let Some(page) = &result.html {
        for asset in &page.assets {
            println!("asset to copy: {}", asset.path);
        }
        println!("{} bytes of HTML", page.html.len());
    }
}
