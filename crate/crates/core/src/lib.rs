pub mod corpus;
pub mod diag;
pub mod doc;
pub mod html;
pub mod intake;
pub mod lexer;
pub mod macros;
pub mod math;
pub mod pipeline;
pub mod registry;

/// Version recorded in reports and emitted pages.
pub const CONVERTER_VERSION: &str = env!("CARGO_PKG_VERSION");
