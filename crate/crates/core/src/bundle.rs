//! Versioned JSON model bundles: `{"kind": ..., "version": 1, "model": {...}}`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BUNDLE_VERSION: u32 = 1;

/// A model type that can be stored in a bundle.
pub trait Bundled: Serialize + DeserializeOwned {
    const KIND: &'static str;

    /// Rebuilds derived state after deserialization.
    fn restore(&mut self) {}
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bundle json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected a `{expected}` bundle, found `{found}`")]
    Kind { expected: String, found: String },
    #[error("unsupported bundle version {0}")]
    Version(u32),
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    kind: String,
    version: u32,
    model: T,
}

pub fn to_bundle_string<T: Bundled>(model: &T) -> Result<String, BundleError> {
    #[derive(Serialize)]
    struct Borrowed<'a, T> {
        kind: &'a str,
        version: u32,
        model: &'a T,
    }
    Ok(serde_json::to_string_pretty(&Borrowed { kind: T::KIND, version: BUNDLE_VERSION, model })?)
}

pub fn from_bundle_str<T: Bundled>(text: &str) -> Result<T, BundleError> {
    let env: Envelope<serde_json::Value> = serde_json::from_str(text)?;
    if env.kind != T::KIND {
        return Err(BundleError::Kind { expected: T::KIND.to_string(), found: env.kind });
    }
    if env.version != BUNDLE_VERSION {
        return Err(BundleError::Version(env.version));
    }
    let mut model: T = serde_json::from_value(env.model)?;
    model.restore();
    Ok(model)
}

pub fn save_bundle<T: Bundled>(model: &T, path: impl AsRef<Path>) -> Result<(), BundleError> {
    std::fs::write(path, to_bundle_string(model)?)?;
    Ok(())
}

pub fn load_bundle<T: Bundled>(path: impl AsRef<Path>) -> Result<T, BundleError> {
    from_bundle_str(&std::fs::read_to_string(path)?)
}

/// Reads only the `kind` field of a bundle file.
pub fn bundle_kind(text: &str) -> Result<String, BundleError> {
    #[derive(Deserialize)]
    struct Kind {
        kind: String,
    }
    Ok(serde_json::from_str::<Kind>(text)?.kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Toy {
        w: Vec<f64>,
    }

    impl Bundled for Toy {
        const KIND: &'static str = "toy";
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Other;

    impl Bundled for Other {
        const KIND: &'static str = "other";
    }

    #[test]
    fn roundtrip_and_kind_check() {
        let text = to_bundle_string(&Toy { w: vec![0.5, -1.0] }).unwrap();
        assert_eq!(bundle_kind(&text).unwrap(), "toy");
        assert_eq!(from_bundle_str::<Toy>(&text).unwrap(), Toy { w: vec![0.5, -1.0] });
        assert!(matches!(from_bundle_str::<Other>(&text), Err(BundleError::Kind { .. })));
        let future = text.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(from_bundle_str::<Toy>(&future), Err(BundleError::Version(9))));
    }
}
