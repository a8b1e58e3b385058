//! CSV output. Every file starts with one `#` metadata line carrying the
//! crate version, the seed and a hash of the run configuration.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// First 16 hex digits of the SHA-256 of the configuration's JSON form.
pub fn config_hash<C: Serialize + ?Sized>(config: &C) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&json);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

pub fn metadata_line<C: Serialize + ?Sized>(command: &str, seed: u64, config: &C) -> Result<String> {
    Ok(format!(
        "# srbm {VERSION} command={command} seed={seed} config={}",
        config_hash(config)?
    ))
}

/// Writes `metadata` and returns a CSV writer positioned after it.
pub fn csv_writer<W: Write>(mut out: W, metadata: &str) -> Result<csv::Writer<W>> {
    writeln!(out, "{metadata}")?;
    Ok(csv::Writer::from_writer(out))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes a whole table: metadata, header, rows.
pub fn write_table<W: Write>(out: W, metadata: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(out, metadata)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
