use std::io::Read;
use std::path::Path;

use super::FeatureSchema;
use crate::{Error, Result};

/// CSV contents projected onto schema column order.
///
/// Rows with an empty cell are dropped at load time; `dropped()` reports how
/// many.
#[derive(Debug, Clone)]
pub struct RawTable {
    rows: Vec<Vec<String>>,
    dropped: usize,
}

impl RawTable {
    pub fn load(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::from_reader(file, schema)
    }

    pub fn from_reader<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();

        for name in &header {
            if !schema.column_names().any(|c| c == name) {
                return Err(Error::Schema(format!("CSV column {name:?} is not in the schema")));
            }
        }
        let order = schema
            .column_names()
            .map(|name| {
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Schema(format!("schema column {name:?} is missing from the CSV")))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut rows = Vec::new();
        let mut dropped = 0;
        for record in csv.records() {
            let record = record?;
            let row: Vec<String> = order
                .iter()
                .map(|&i| record.get(i).unwrap_or("").to_string())
                .collect();
            if row.iter().any(String::is_empty) {
                dropped += 1;
            } else {
                rows.push(row);
            }
        }
        Ok(RawTable { rows, dropped })
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }
}
