//! Schema-driven ingestion: CSV loading, encoding and the 70/15/15 split.

mod schema;
mod split;
mod table;

pub use schema::{
    encode, fit_encoding, parse_schema, Column, ColumnKind, ColumnStats, ContinuousStats,
    FeatureSchema,
};
pub use split::{split, split_indices, SplitDataset, SplitIndices, SPLIT_RATIOS};
pub use table::RawTable;

use crate::{Result, Scalar};

/// A pre-encoding feature value, kept for Gower similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawValue {
    /// Index into the column's fitted level list.
    Categorical(u32),
    Continuous(f64),
}

/// One individual: encoded features, sensitive group and label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub features: Vec<T>,
    pub sensitive: u8,
    pub label: u8,
    /// Feature columns (categorical and continuous) in schema order.
    pub raw: Vec<RawValue>,
}

/// Output of [`prepare`]: the fitted schema, the split manifest and the
/// encoded parts.
#[derive(Debug, Clone)]
pub struct Prepared<T> {
    pub schema: FeatureSchema,
    pub indices: SplitIndices,
    pub data: SplitDataset<T>,
}

/// Split the table's rows, fit encoding statistics on the training rows only,
/// then encode all three parts.
pub fn prepare<T: Scalar>(table: &RawTable, schema: &FeatureSchema, seed: u64) -> Result<Prepared<T>> {
    let indices = split_indices(table.rows().len(), seed)?;
    let fitted = fit_encoding(indices.train.iter().map(|&i| table.rows()[i].as_slice()), schema)?;
    let data = assemble(table, &fitted, &indices)?;
    Ok(Prepared {
        schema: fitted,
        indices,
        data,
    })
}

/// Rebuild a split dataset from a fitted schema and a stored manifest.
pub fn assemble<T: Scalar>(
    table: &RawTable,
    schema: &FeatureSchema,
    indices: &SplitIndices,
) -> Result<SplitDataset<T>> {
    let n = table.rows().len();
    let part = |idx: &[usize]| -> Result<Vec<Example<T>>> {
        idx.iter()
            .map(|&i| {
                let row = table.rows().get(i).ok_or_else(|| {
                    crate::Error::Data(format!("manifest row {i} out of range ({n} rows)"))
                })?;
                encode(row, schema)
            })
            .collect()
    };
    Ok(SplitDataset {
        train: part(&indices.train)?,
        validation: part(&indices.validation)?,
        test: part(&indices.test)?,
        seed: indices.seed,
    })
}
