//! Reproducibility manifests written next to command outputs.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::{io, Failure};

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: C,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(command: &'a str, config: C) -> Self {
        Self {
            tool: "drunet",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| io(path, e))
    }
}
