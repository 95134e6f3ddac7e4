use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use targetkit_core::{Error, Result};

use crate::config::Format;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Report header shared by every command.
#[derive(Debug, Clone, Serialize)]
pub struct Audit {
    pub command: String,
    pub version: &'static str,
    pub config_sha256: String,
    /// Hash of the input CSV, when the command read one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
    pub seed: u64,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    #[serde(flatten)]
    audit: &'a Audit,
    result: &'a T,
}

/// Output files collected in memory and written only once the command has
/// finished, so failures leave nothing behind.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Adds `<stem>.json` and/or `<stem>.md` for the requested formats.
    pub fn report<T: Serialize>(
        &mut self,
        stem: &str,
        formats: &[Format],
        audit: &Audit,
        result: &T,
        markdown: String,
    ) {
        if formats.contains(&Format::Json) {
            let mut json =
                serde_json::to_vec_pretty(&Envelope { audit, result }).expect("report serializes");
            json.push(b'\n');
            self.add(format!("{stem}.json"), json);
        }
        if formats.contains(&Format::Md) {
            let mut md = format!(
                "# targetkit {}\n\nconfig sha256 `{}`, seed {}",
                audit.command, audit.config_sha256, audit.seed
            );
            if let Some(h) = &audit.input_sha256 {
                md.push_str(&format!(", input sha256 `{h}`"));
            }
            md.push_str("\n\n");
            md.push_str(&markdown);
            if !md.ends_with('\n') {
                md.push('\n');
            }
            self.add(format!("{stem}.md"), md.into_bytes());
        }
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut json = serde_json::to_vec_pretty(value).expect("artifact serializes");
        json.push(b'\n');
        self.add(name, json);
    }

    /// Writes every file into `dir`; on any failure removes what was written.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::Computation(format!("cannot create {}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = std::fs::write(&path, bytes) {
                for p in &written {
                    let _ = std::fs::remove_file(p);
                }
                let _ = std::fs::remove_file(&path);
                return Err(Error::Computation(format!(
                    "cannot write {}: {e}",
                    path.display()
                )));
            }
            written.push(path);
        }
        Ok(written)
    }
}
