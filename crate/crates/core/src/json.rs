//! Strict/lenient JSON decoding shared by every resource file.

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// How unknown fields in resource files are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Unknown fields are a validation error.
    Strict,
    /// Unknown fields are ignored with a logged warning.
    #[default]
    Lenient,
}

impl Strictness {
    pub fn from_flag(strict: bool) -> Self {
        if strict {
            Strictness::Strict
        } else {
            Strictness::Lenient
        }
    }

    pub fn is_strict(self) -> bool {
        self == Strictness::Strict
    }
}

pub(crate) fn from_slice<T: DeserializeOwned>(bytes: &[u8], source_name: &str, mode: Strictness) -> Result<T> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let mut unknown = Vec::new();
    let value: T = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))
        .map_err(|e| Error::parse(source_name, e))?;
    de.end().map_err(|e| Error::parse(source_name, e))?;
    if !unknown.is_empty() {
        if mode.is_strict() {
            return Err(Error::validation(
                source_name,
                format!("unknown field(s): {}", unknown.join(", ")),
            ));
        }
        for path in &unknown {
            log::warn!("{source_name}: ignoring unknown field `{path}`");
        }
    }
    Ok(value)
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
