mod support;

use proptest::prelude::*;
use structex::lexer::{detokenize, tokenize_default};
use support::{expand_notation, lex_notation, normalize_notation, reference_tokenize, PROGRAMS};

#[test]
fn lexer_matches_reference_on_program_suite() {
    for (name, source, _) in PROGRAMS {
        assert_eq!(lex_notation(source), reference_tokenize(source), "program: {name}");
    }
}

#[test]
fn expander_matches_hand_expansion() {
    for (name, source, expected) in PROGRAMS {
        assert_eq!(expand_notation(source), normalize_notation(expected), "program: {name}");
    }
}

#[test]
fn notation_round_trip() {
    for (_, _, expected) in PROGRAMS {
        let once = normalize_notation(expected);
        assert_eq!(normalize_notation(&once), once);
    }
}

const RAW_ATOMS: &[&str] = &["\\verb", "\\verb*", "\\begin{verbatim}", "\\end{verbatim}"];

fn tex_like() -> impl Strategy<Value = String> {
    atoms_with(RAW_ATOMS)
}

/// Without the raw-capture constructs, whose unterminated forms cannot
/// survive a round trip through source text.
fn tex_like_cooked() -> impl Strategy<Value = String> {
    atoms_with(&[])
}

fn atoms_with(extra: &[&'static str]) -> impl Strategy<Value = String> {
    let mut atoms = vec![
        "\\", "\\a", "\\ab", "\\ ", "\\%", "{", "}", "$",
        "&", "#", "#1", "##", "^", "_", "%", " ", "  ", "\t", "\n", "\n\n", "\r\n", "\r", "a", "b", "z", "1", "|", "*",
        "[", "]", "é", "~",
    ];
    atoms.extend_from_slice(extra);
    prop::collection::vec(prop::sample::select(atoms), 0..40).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn lexer_agrees_with_reference(src in tex_like()) {
        prop_assert_eq!(lex_notation(&src), reference_tokenize(&src));
    }

    #[test]
    fn lexer_agrees_on_arbitrary_text(src in "\\PC{0,80}") {
        prop_assert_eq!(lex_notation(&src), reference_tokenize(&src));
    }

    /// Rendering tokens back to source and re-reading them is stable after
    /// one round.
    #[test]
    fn detokenize_is_a_fixed_point(src in tex_like_cooked()) {
        let once = detokenize(&tokenize_default(&src).tokens);
        let twice = detokenize(&tokenize_default(&once).tokens);
        prop_assert_eq!(once, twice);
    }
}
