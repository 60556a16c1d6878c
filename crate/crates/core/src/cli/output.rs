//! Result tables and run summaries.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result};

/// Decimal text with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Rows collected in memory and written once by a single writer.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl ResultTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

/// Key-value summary, serialized as TOML with sorted keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    root: Table,
}

impl Summary {
    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.root.insert(key.to_string(), value.into());
    }

    pub fn section(&mut self, key: &str, table: Table) {
        self.root.insert(key.to_string(), Value::Table(table));
    }

    /// Appends to an array of tables.
    pub fn push_entry(&mut self, key: &str, table: Table) {
        let slot = self
            .root
            .entry(key.to_string())
            .or_insert_with(|| Value::Array(Vec::new()));
        if let Value::Array(items) = slot {
            items.push(Value::Table(table));
        }
    }

    pub fn table(&self) -> &Table {
        &self.root
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(&self.root).map_err(|e| Error::Io(e.to_string()))?;
        let mut f =
            File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        f.write_all(text.as_bytes())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

/// Small builder for summary entries.
#[derive(Debug, Default)]
pub struct Entry(pub Table);

impl Entry {
    pub fn new() -> Self {
        Self(Table::new())
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn opt(self, key: &str, value: Option<f64>) -> Self {
        match value {
            Some(v) => self.with(key, v),
            None => self,
        }
    }

    pub fn build(self) -> Table {
        self.0
    }
}
