//! Package handlers: what `\usepackage{name}` brings into a document.
//!
//! Handlers are plain data (macro bundles plus environment hints for the
//! parser) loaded from TOML. One file describes one package:
//!
//! ```toml
//! name = "mypkg"            # optional, defaults to the file stem
//! kind = "implemented"      # or "ignored-safe"
//! structural = ["foo"]      # arity-0 names preserved for the parser
//! ignored = ["bar"]         # arity-0 names dropped by the parser
//!
//! [[macros]]
//! name = "R"
//! kind = "expandable"       # expandable | structural | ignored
//! arity = 0
//! body = '\mathbb{R}'
//! default = "x"             # optional first-argument default
//!
//! [[environments]]
//! name = "align"
//! role = "math-numbered"
//! arity = 0                 # required arguments after \begin{..}
//! ```
//!
//! The kernel vocabulary (what every document gets without loading
//! anything) uses the same format.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{Code, Diagnostic, Stage};
use crate::lexer::{detokenize, tokenize_default};
use crate::macros::{DefineError, MacroDef, MacroKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HandlerKind {
    Implemented,
    IgnoredSafe,
}

/// How the parser should treat an environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvRole {
    Document,
    MathInline,
    MathDisplay,
    MathNumbered,
    Itemize,
    Enumerate,
    Description,
    Figure,
    Table,
    Tabular,
    Quote,
    Transparent,
    Abstract,
    Bibliography,
    Verbatim,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentHint {
    pub name: String,
    pub role: EnvRole,
    #[serde(default)]
    pub arity: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackageHandler {
    pub name: String,
    pub kind: HandlerKind,
    pub macros: Vec<MacroDef>,
    pub environments: Vec<EnvironmentHint>,
}

#[derive(Debug, Error)]
pub enum HandlerError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing handler {name}: {source}")]
    Toml {
        name: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("handler {handler}: macro \\{name} is declared more than once")]
    DuplicateMacro { handler: String, name: String },
    #[error("handler {handler}: expandable macro \\{name} has no body")]
    MissingBody { handler: String, name: String },
    #[error("handler {handler}: {source}")]
    InvalidMacro {
        handler: String,
        #[source]
        source: DefineError,
    },
    #[error("handler file has no name and none could be derived")]
    Unnamed,
}

#[derive(Debug, Deserialize, Serialize)]
struct HandlerFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    kind: HandlerKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    structural: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    ignored: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    macros: Vec<MacroEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    environments: Vec<EnvironmentHint>,
}

#[derive(Debug, Deserialize, Serialize)]
struct MacroEntry {
    name: String,
    kind: MacroKind,
    #[serde(default)]
    arity: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default: Option<String>,
}

impl PackageHandler {
    pub fn new(name: impl Into<String>, kind: HandlerKind) -> Self {
        PackageHandler {
            name: name.into(),
            kind,
            macros: Vec::new(),
            environments: Vec::new(),
        }
    }

    pub fn with_macro(mut self, def: MacroDef) -> Self {
        self.macros.push(def);
        self
    }

    pub fn with_environment(mut self, name: impl Into<String>, role: EnvRole, arity: u8) -> Self {
        self.environments.push(EnvironmentHint {
            name: name.into(),
            role,
            arity,
        });
        self
    }

    /// Parse a handler from its TOML text. `fallback_name` is used when the
    /// file does not carry a `name` key.
    pub fn from_toml(text: &str, fallback_name: Option<&str>) -> Result<Self, HandlerError> {
        let file: HandlerFile = toml::from_str(text).map_err(|source| HandlerError::Toml {
            name: fallback_name.unwrap_or("<inline>").to_string(),
            source,
        })?;
        let name = file
            .name
            .or_else(|| fallback_name.map(str::to_string))
            .ok_or(HandlerError::Unnamed)?;
        let invalid = |source| HandlerError::InvalidMacro {
            handler: name.clone(),
            source,
        };
        let mut macros = Vec::new();
        for n in &file.structural {
            macros.push(MacroDef::new(n.clone(), 0, Vec::new(), MacroKind::Structural).map_err(invalid)?);
        }
        for n in &file.ignored {
            macros.push(MacroDef::ignored(n.clone(), 0).map_err(invalid)?);
        }
        for entry in file.macros {
            let body = match (&entry.body, entry.kind) {
                (Some(text), _) => tokenize_default(text).tokens,
                (None, MacroKind::Expandable) => {
                    return Err(HandlerError::MissingBody {
                        handler: name.clone(),
                        name: entry.name,
                    })
                }
                (None, _) => Vec::new(),
            };
            let mut def = MacroDef::new(entry.name, entry.arity, body, entry.kind).map_err(invalid)?;
            if let Some(default) = entry.default {
                def.optional_default = Some(tokenize_default(&default).tokens);
            }
            macros.push(def);
        }
        let handler = PackageHandler {
            name,
            kind: file.kind,
            macros,
            environments: file.environments,
        };
        handler.validate()?;
        Ok(handler)
    }

    pub fn to_toml(&self) -> String {
        let file = HandlerFile {
            name: Some(self.name.clone()),
            kind: self.kind,
            structural: Vec::new(),
            ignored: Vec::new(),
            macros: self
                .macros
                .iter()
                .map(|m| MacroEntry {
                    name: m.name.clone(),
                    kind: m.kind,
                    arity: m.arity,
                    body: (m.kind == MacroKind::Expandable).then(|| detokenize(&m.body)),
                    default: m.optional_default.as_deref().map(detokenize),
                })
                .collect(),
            environments: self.environments.clone(),
        };
        toml::to_string(&file).expect("handler data is always representable")
    }

    fn validate(&self) -> Result<(), HandlerError> {
        let mut seen = HashSet::new();
        for m in &self.macros {
            if !seen.insert(m.name.as_str()) {
                return Err(HandlerError::DuplicateMacro {
                    handler: self.name.clone(),
                    name: m.name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn environment(&self, name: &str) -> Option<&EnvironmentHint> {
        self.environments.iter().find(|e| e.name == name)
    }
}

/// Resolution of every package a document requested.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegistryOutcome {
    pub implemented: BTreeSet<String>,
    pub ignored: BTreeSet<String>,
    pub unknown: BTreeSet<String>,
}

impl RegistryOutcome {
    pub fn requested(&self) -> BTreeSet<String> {
        self.implemented
            .iter()
            .chain(&self.ignored)
            .chain(&self.unknown)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PackageRegistry {
    kernel: PackageHandler,
    handlers: BTreeMap<String, PackageHandler>,
    strict: bool,
}

const KERNEL: &str = include_str!("../packages/kernel.toml");

const DEFAULT_HANDLERS: &[(&str, &str)] = &[
    ("graphicx", include_str!("../packages/graphicx.toml")),
    ("amsmath", include_str!("../packages/amsmath.toml")),
    ("amssymb", include_str!("../packages/amssymb.toml")),
    ("url", include_str!("../packages/url.toml")),
    ("xcolor", include_str!("../packages/xcolor.toml")),
    ("enumitem", include_str!("../packages/enumitem.toml")),
    ("hyperref", include_str!("../packages/hyperref.toml")),
    ("natbib", include_str!("../packages/natbib.toml")),
    ("booktabs", include_str!("../packages/booktabs.toml")),
];

/// Pure-layout packages: accepted, bind nothing, never reported.
pub const IGNORE_LIST: &[&str] = &["geometry", "babel", "inputenc", "fontenc", "microtype", "setspace"];

impl PackageRegistry {
    /// Registry with the kernel vocabulary only.
    pub fn empty() -> Self {
        PackageRegistry {
            kernel: PackageHandler::from_toml(KERNEL, Some("kernel")).expect("kernel handler is valid"),
            handlers: BTreeMap::new(),
            strict: false,
        }
    }

    /// Registry with the shipped handlers and ignore list.
    pub fn with_defaults() -> Self {
        let mut registry = Self::empty();
        for (name, text) in DEFAULT_HANDLERS {
            let handler = PackageHandler::from_toml(text, Some(name)).expect("shipped handler is valid");
            registry.register(handler);
        }
        for name in IGNORE_LIST {
            registry.register(PackageHandler::new(*name, HandlerKind::IgnoredSafe));
        }
        registry
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn kernel(&self) -> &PackageHandler {
        &self.kernel
    }

    /// Add or replace a handler. Replacing is diagnosed in strict mode.
    pub fn register(&mut self, handler: PackageHandler) -> Option<Diagnostic> {
        let name = handler.name.clone();
        let replaced = self.handlers.insert(name.clone(), handler).is_some();
        (replaced && self.strict).then(|| {
            Diagnostic::warning(
                Stage::Registry,
                Code::DuplicateHandler,
                format!("handler for package {name} replaced"),
            )
        })
    }

    pub fn resolve(&self, name: &str) -> Option<&PackageHandler> {
        self.handlers.get(name)
    }

    pub fn resolve_all<'n>(&self, names: impl IntoIterator<Item = &'n str>) -> RegistryOutcome {
        let mut outcome = RegistryOutcome::default();
        for name in names {
            let bucket = match self.resolve(name).map(|h| h.kind) {
                Some(HandlerKind::Implemented) => &mut outcome.implemented,
                Some(HandlerKind::IgnoredSafe) => &mut outcome.ignored,
                None => &mut outcome.unknown,
            };
            bucket.insert(name.to_string());
        }
        outcome
    }

    pub fn package_names(&self) -> impl Iterator<Item = &str> {
        self.handlers.keys().map(String::as_str)
    }

    /// Load every `*.toml` file in `dir` as a handler named after its stem.
    pub fn load_dir(&mut self, dir: &Path) -> Result<Vec<Diagnostic>, HandlerError> {
        let io = |source| HandlerError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        let mut diags = Vec::new();
        for path in paths {
            let text = fs::read_to_string(&path).map_err(|source| HandlerError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let stem = path.file_stem().and_then(|s| s.to_str());
            let handler = PackageHandler::from_toml(&text, stem)?;
            diags.extend(self.register(handler));
        }
        Ok(diags)
    }
}

impl Default for PackageRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
