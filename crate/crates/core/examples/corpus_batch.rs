//! Build a tiny corpus on disk, convert it with four workers and print the
//! report.

use structex::corpus::{run_batch, BatchOptions};
use structex::registry::PackageRegistry;

fn main() {
    let dir = std::env::temp_dir().join(format!("structex-corpus-{}", std::process::id()));
    let papers = [
        ("p1", r"\documentclass{article}\begin{document}\section{A}Fine.\end{document}"),
        ("p2", r"\documentclass{article}\usepackage{tikz}\begin{document}Drawing.\end{document}"),
        ("p3", r"\documentclass{article}\begin{document}Broken $x\end{document}"),
        ("p4", r"\documentclass{article}\begin{document}\end{document}"),
    ];
    for (id, src) in papers {
        std::fs::create_dir_all(dir.join(id)).unwrap();
        std::fs::write(dir.join(id).join("main.tex"), src).unwrap();
    }
    let options = BatchOptions {
        jobs: 4,
        report_path: Some(dir.join("report.json")),
        ..BatchOptions::default()
    };
    let report = run_batch(&dir, &PackageRegistry::with_defaults(), &options).expect("corpus readable");
    print!("{}", report.to_text());
    println!("report written to {}", dir.join("report.json").display());
}
