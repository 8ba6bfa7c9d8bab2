//! Render TeX math to MathML, or show the fallback for unsupported input.

use structex::math::{render_math, to_mathml, MathRender};

fn main() {
    let inputs: Vec<String> = match std::env::args().nth(1) {
        Some(arg) => vec![arg],
        None => [r"\frac{a+b}{\sqrt{c}}", r"\sum_{i=1}^{n} x_i^2", r"\begin{pmatrix}1&0\\0&1\end{pmatrix}", r"\mathbb{R}^n", r"\frac{1}{"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    for tex in inputs {
        match render_math(&tex) {
            MathRender::Structured(node) => println!("{tex}\n  {}\n", to_mathml(&node, &tex, false)),
            MathRender::Fallback { diagnostic, .. } => println!("{tex}\n  fallback: {}\n", diagnostic.message),
        }
    }
}
