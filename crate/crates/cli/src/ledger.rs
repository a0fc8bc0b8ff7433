//! Append-only JSON-lines results ledger shared by `eval` and `report`.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use dinids::eval::EvalRecord;
use serde::{Deserialize, Serialize};

use crate::commands::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// `self` or `cross`.
    pub direction: String,
    /// `data:1,dann:1,osvm:1`
    pub seeds: String,
    pub record: EvalRecord,
}

pub fn append(path: &Path, entry: &LedgerEntry) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let line = serde_json::to_string(entry).expect("ledger entries serialize");
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<LedgerEntry>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let entry = serde_json::from_str(line)
            .map_err(|e| CliError::Ledger(format!("{}:{}: {e}", path.display(), i + 1)))?;
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(CliError::Ledger(format!("{} holds no results", path.display())));
    }
    Ok(entries)
}
