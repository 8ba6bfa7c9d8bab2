//! Diagnostics shared by every stage of the pipeline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lexer::Location;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

/// Pipeline stage that produced a diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Bundle,
    Lex,
    Expand,
    Parse,
    Refs,
    Emit,
    Pipeline,
    Registry,
}

/// Machine-readable diagnostic kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Code {
    EscapeAtEof,
    StrayParameter,
    CatcodeChange,
    UnterminatedVerbatim,
    UnknownCommand,
    MissingArgument,
    FuelExhausted,
    Timeout,
    Redefinition,
    BadDefinition,
    UnsupportedDefinition,
    UnknownPackage,
    UnknownEnvironment,
    EnvironmentMismatch,
    UnterminatedEnvironment,
    UnbalancedGroup,
    UnterminatedMath,
    DuplicateLabel,
    UnresolvedRef,
    SectionLevelSkip,
    UnsupportedSectioning,
    IgnoredCounter,
    MissingAltText,
    MathFallback,
    TableShape,
    MulticolumnCollapsed,
    MissingInput,
    MissingGraphic,
    InvalidUtf8,
    AmbiguousMainFile,
    NoMainFile,
    EmptyDocument,
    DuplicateHandler,
    WriteFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub stage: Stage,
    pub code: Code,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
}

impl Diagnostic {
    pub fn new(severity: Severity, stage: Stage, code: Code, message: impl Into<String>) -> Self {
        Diagnostic {
            severity,
            stage,
            code,
            message: message.into(),
            location: None,
        }
    }

    pub fn info(stage: Stage, code: Code, message: impl Into<String>) -> Self {
        Self::new(Severity::Info, stage, code, message)
    }

    pub fn warning(stage: Stage, code: Code, message: impl Into<String>) -> Self {
        Self::new(Severity::Warning, stage, code, message)
    }

    pub fn error(stage: Stage, code: Code, message: impl Into<String>) -> Self {
        Self::new(Severity::Error, stage, code, message)
    }

    pub fn at(mut self, location: Location) -> Self {
        self.location = Some(location);
        self
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{:?}]", self.severity, self.stage)?;
        if let Some(loc) = self.location {
            write!(f, " {}:{}", loc.line, loc.column)?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Highest severity in a set of diagnostics, if any.
pub fn max_severity<'a>(diags: impl IntoIterator<Item = &'a Diagnostic>) -> Option<Severity> {
    diags.into_iter().map(|d| d.severity).max()
}
