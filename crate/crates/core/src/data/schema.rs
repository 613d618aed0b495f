//! Column schema: which columns are categorical, continuous, sensitive or the
//! label, and the encoding statistics fitted on the training split.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Example, RawValue};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Continuous,
    Sensitive,
    Label,
}

impl ColumnKind {
    pub fn is_feature(self) -> bool {
        matches!(self, ColumnKind::Categorical | ColumnKind::Continuous)
    }
}

impl std::str::FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "categorical" => Ok(ColumnKind::Categorical),
            "continuous" => Ok(ColumnKind::Continuous),
            "sensitive" => Ok(ColumnKind::Sensitive),
            "label" => Ok(ColumnKind::Label),
            other => Err(Error::Schema(format!("unknown column kind {other:?}"))),
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColumnKind::Categorical => "categorical",
            ColumnKind::Continuous => "continuous",
            ColumnKind::Sensitive => "sensitive",
            ColumnKind::Label => "label",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Training-split statistics of a continuous column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousStats {
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    /// Set when `stddev == 0`; such a column always encodes to 0.
    pub constant: bool,
}

impl ContinuousStats {
    /// Range `max - min`, the Gower normaliser.
    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnStats {
    None,
    Levels(Vec<String>),
    Continuous(ContinuousStats),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<Column>,
    positive_label: String,
    sensitive_group_1: String,
    stats: Vec<ColumnStats>,
    fitted: bool,
}

const POSITIVE_LABEL: &str = "positive_label";
const SENSITIVE_GROUP_1: &str = "sensitive_group_1";

/// Parse the `column = kind` schema format.
///
/// Blank lines and lines starting with `#` are ignored. Besides one line per
/// CSV column, `positive_label = <raw>` and `sensitive_group_1 = <raw>` name
/// the raw values mapped to 1.
pub fn parse_schema(text: &str) -> Result<FeatureSchema> {
    let mut columns = Vec::new();
    let mut seen = HashSet::new();
    let mut positive_label = None;
    let mut sensitive_group_1 = None;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Schema(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::Schema(format!("line {}: empty key", lineno + 1)));
        }
        match key {
            POSITIVE_LABEL => positive_label = Some(value.to_string()),
            SENSITIVE_GROUP_1 => sensitive_group_1 = Some(value.to_string()),
            name => {
                let kind: ColumnKind = value.parse()?;
                if !seen.insert(name.to_string()) {
                    return Err(Error::Schema(format!("duplicate column name {name:?}")));
                }
                columns.push(Column {
                    name: name.to_string(),
                    kind,
                });
            }
        }
    }

    for (kind, what) in [(ColumnKind::Sensitive, "sensitive"), (ColumnKind::Label, "label")] {
        match columns.iter().filter(|c| c.kind == kind).count() {
            0 => return Err(Error::Schema(format!("no {what} column"))),
            1 => {}
            _ => return Err(Error::Schema(format!("multiple {what} columns"))),
        }
    }
    let positive_label = positive_label
        .ok_or_else(|| Error::Schema(format!("missing `{POSITIVE_LABEL}`")))?;
    let sensitive_group_1 = sensitive_group_1
        .ok_or_else(|| Error::Schema(format!("missing `{SENSITIVE_GROUP_1}`")))?;

    let stats = vec![ColumnStats::None; columns.len()];
    Ok(FeatureSchema {
        columns,
        positive_label,
        sensitive_group_1,
        stats,
        fitted: false,
    })
}

impl FeatureSchema {
    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn positive_label(&self) -> &str {
        &self.positive_label
    }

    pub fn sensitive_group_1(&self) -> &str {
        &self.sensitive_group_1
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn stats(&self, column: usize) -> &ColumnStats {
        &self.stats[column]
    }

    /// Indices of the categorical and continuous columns, in schema order.
    /// These are the columns that make up `Example::raw`.
    pub fn feature_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind.is_feature())
            .map(|(i, _)| i)
    }

    pub fn num_feature_columns(&self) -> usize {
        self.feature_columns().count()
    }

    /// Width of the encoded feature vector, if it is already determined.
    ///
    /// Continuous columns contribute one entry each; categorical columns
    /// contribute their level count, which is only known after fitting.
    pub fn encoded_dim(&self) -> Option<usize> {
        let mut dim = 0;
        for (column, stats) in self.columns.iter().zip(&self.stats) {
            match (column.kind, stats) {
                (ColumnKind::Continuous, _) => dim += 1,
                (ColumnKind::Categorical, ColumnStats::Levels(levels)) => dim += levels.len(),
                (ColumnKind::Categorical, _) => return None,
                _ => {}
            }
        }
        Some(dim)
    }

    /// Continuous statistics of every continuous column, `None` for others.
    pub fn continuous_stats(&self) -> Vec<Option<ContinuousStats>> {
        self.stats
            .iter()
            .map(|s| match s {
                ColumnStats::Continuous(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    fn column_index(&self, kind: ColumnKind) -> usize {
        self.columns
            .iter()
            .position(|c| c.kind == kind)
            .expect("schema has exactly one sensitive and one label column")
    }

    pub fn sensitive_index(&self) -> usize {
        self.column_index(ColumnKind::Sensitive)
    }

    pub fn label_index(&self) -> usize {
        self.column_index(ColumnKind::Label)
    }
}

/// Fit encoding statistics on training rows (given in schema column order).
///
/// Categorical levels are recorded in first-appearance order; continuous
/// columns get mean, population standard deviation, min and max.
pub fn fit_encoding<'a, I>(rows: I, schema: &FeatureSchema) -> Result<FeatureSchema>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let ncols = schema.columns.len();
    let mut levels: Vec<Vec<String>> = vec![Vec::new(); ncols];
    let mut level_sets: Vec<HashSet<String>> = vec![HashSet::new(); ncols];
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); ncols];
    let mut nrows = 0usize;

    for row in rows {
        check_width(row, ncols)?;
        nrows += 1;
        for (i, column) in schema.columns.iter().enumerate() {
            let cell = row[i].as_str();
            match column.kind {
                ColumnKind::Categorical => {
                    if !level_sets[i].contains(cell) {
                        level_sets[i].insert(cell.to_string());
                        levels[i].push(cell.to_string());
                    }
                }
                ColumnKind::Continuous => values[i].push(parse_number(cell, &column.name)?),
                ColumnKind::Sensitive | ColumnKind::Label => {}
            }
        }
    }
    if nrows == 0 {
        return Err(Error::Data("empty training set".into()));
    }

    let stats = schema
        .columns
        .iter()
        .enumerate()
        .map(|(i, column)| match column.kind {
            ColumnKind::Categorical => ColumnStats::Levels(std::mem::take(&mut levels[i])),
            ColumnKind::Continuous => ColumnStats::Continuous(continuous_stats(&values[i])),
            _ => ColumnStats::None,
        })
        .collect();

    Ok(FeatureSchema {
        stats,
        fitted: true,
        ..schema.clone()
    })
}

fn continuous_stats(values: &[f64]) -> ContinuousStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let stddev = var.sqrt();
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    ContinuousStats {
        mean,
        stddev,
        min,
        max,
        constant: stddev == 0.0,
    }
}

/// Encode one raw row (schema column order) with fitted statistics.
pub fn encode<T: Scalar>(raw_row: &[String], schema: &FeatureSchema) -> Result<Example<T>> {
    if !schema.fitted {
        return Err(Error::Schema("schema statistics are not fitted".into()));
    }
    check_width(raw_row, schema.columns.len())?;

    let mut features = Vec::with_capacity(schema.encoded_dim().unwrap_or(0));
    let mut raw = Vec::with_capacity(schema.num_feature_columns());
    let mut sensitive = 0u8;
    let mut label = 0u8;

    for (i, (column, stats)) in schema.columns.iter().zip(&schema.stats).enumerate() {
        let cell = raw_row[i].as_str();
        match (column.kind, stats) {
            (ColumnKind::Categorical, ColumnStats::Levels(levels)) => {
                let level = levels.iter().position(|l| l == cell).ok_or_else(|| {
                    Error::Data(format!(
                        "unseen level {cell:?} in categorical column {:?}",
                        column.name
                    ))
                })?;
                features.extend((0..levels.len()).map(|j| if j == level { T::one() } else { T::zero() }));
                raw.push(RawValue::Categorical(level as u32));
            }
            (ColumnKind::Continuous, ColumnStats::Continuous(st)) => {
                let v = parse_number(cell, &column.name)?;
                let z = if st.constant { 0.0 } else { (v - st.mean) / st.stddev };
                features.push(T::of(z));
                raw.push(RawValue::Continuous(v));
            }
            (ColumnKind::Sensitive, _) => sensitive = u8::from(cell == schema.sensitive_group_1),
            (ColumnKind::Label, _) => label = u8::from(cell == schema.positive_label),
            _ => unreachable!("fitted schema carries stats for every feature column"),
        }
    }

    if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("encoded feature {bad} is not finite")));
    }
    Ok(Example {
        features,
        sensitive,
        label,
        raw,
    })
}

fn check_width(row: &[String], ncols: usize) -> Result<()> {
    if row.len() != ncols {
        return Err(Error::Data(format!(
            "missing column: row has {} values, schema has {ncols} columns",
            row.len()
        )));
    }
    Ok(())
}

fn parse_number(cell: &str, column: &str) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Data(format!("non-numeric value {cell:?} in continuous column {column:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(data: &[&[&str]]) -> Vec<Vec<String>> {
        data.iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    fn fit(schema: &FeatureSchema, data: &[Vec<String>]) -> FeatureSchema {
        fit_encoding(data.iter().map(Vec::as_slice), schema).unwrap()
    }

    const TINY: &str = "age = continuous\nsex = sensitive\nincome = label\n\
                        positive_label = >50K\nsensitive_group_1 = Female\n";

    #[test]
    fn single_continuous_column_has_dim_one() {
        let schema = parse_schema(TINY).unwrap();
        assert_eq!(schema.columns().len(), 3);
        assert_eq!(schema.encoded_dim(), Some(1));
        assert!(!schema.is_fitted());
        let names: Vec<_> = schema.column_names().collect();
        assert_eq!(names, ["age", "sex", "income"]);
    }

    #[test]
    fn rejects_bad_schemas() {
        let two_labels = "a = label\nb = label\nc = sensitive\npositive_label = 1\nsensitive_group_1 = 1";
        let err = parse_schema(two_labels).unwrap_err().to_string();
        assert!(err.contains("multiple label columns"), "{err}");

        let dup = "a = continuous\na = categorical\nc = sensitive\nd = label\npositive_label = 1\nsensitive_group_1 = 1";
        assert!(parse_schema(dup).unwrap_err().to_string().contains("duplicate"));

        let unknown = "a = ordinal\nc = sensitive\nd = label\npositive_label = 1\nsensitive_group_1 = 1";
        assert!(parse_schema(unknown).unwrap_err().to_string().contains("unknown column kind"));

        let no_sensitive = "a = continuous\nd = label\npositive_label = 1\nsensitive_group_1 = 1";
        assert!(parse_schema(no_sensitive).unwrap_err().to_string().contains("no sensitive"));

        let no_positive = "a = continuous\nc = sensitive\nd = label\nsensitive_group_1 = 1";
        assert!(parse_schema(no_positive).is_err());
    }

    #[test]
    fn adult_schema_needs_fitting_for_dim() {
        let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/adult.schema")).unwrap();
        let schema = parse_schema(&text).unwrap();
        assert_eq!(schema.columns().len(), 15);
        assert_eq!(schema.num_feature_columns(), 13);
        assert_eq!(schema.encoded_dim(), None);
    }

    #[test]
    fn continuous_statistics() {
        let schema = parse_schema(TINY).unwrap();
        let data = rows(&[&["2", "Male", "<=50K"], &["4", "Female", ">50K"], &["6", "Male", "<=50K"]]);
        let fitted = fit(&schema, &data);
        let ColumnStats::Continuous(st) = fitted.stats(0) else { panic!() };
        assert_eq!(st.mean, 4.0);
        // sqrt(8/3), population estimator
        assert!((st.stddev - 1.632993161855452).abs() < 1e-12);
        assert_eq!(st.range(), 4.0);
        assert!(!st.constant);
    }

    #[test]
    fn constant_column_is_flagged_and_encodes_to_zero() {
        let schema = parse_schema(TINY).unwrap();
        let data = rows(&[&["5", "Male", "<=50K"], &["5", "Female", ">50K"], &["5", "Male", "<=50K"]]);
        let fitted = fit(&schema, &data);
        let ColumnStats::Continuous(st) = fitted.stats(0) else { panic!() };
        assert_eq!(st.stddev, 0.0);
        assert!(st.constant);
        let ex: Example<f64> = encode(&data[0], &fitted).unwrap();
        assert_eq!(ex.features, vec![0.0]);
    }

    #[test]
    fn categorical_levels_in_first_appearance_order() {
        let text = "c = categorical\ns = sensitive\ny = label\npositive_label = 1\nsensitive_group_1 = f";
        let schema = parse_schema(text).unwrap();
        let data = rows(&[&["a", "m", "0"], &["b", "f", "1"], &["a", "m", "1"]]);
        let fitted = fit(&schema, &data);
        assert_eq!(fitted.stats(0), &ColumnStats::Levels(vec!["a".into(), "b".into()]));
        assert_eq!(fitted.encoded_dim(), Some(2));
    }

    #[test]
    fn z_score_and_one_hot_encoding() {
        let text = "v = continuous\nc = categorical\ns = sensitive\ny = label\n\
                    positive_label = yes\nsensitive_group_1 = f";
        let schema = parse_schema(text).unwrap();
        // mean 5, population stddev 5
        let data = rows(&[
            &["0", "a", "m", "no"],
            &["10", "b", "f", "yes"],
            &["0", "c", "m", "no"],
            &["10", "a", "f", "no"],
        ]);
        let fitted = fit(&schema, &data);
        let ex: Example<f64> = encode(&data[1], &fitted).unwrap();
        assert_eq!(ex.features, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!((ex.sensitive, ex.label), (1, 1));
        assert_eq!(ex.raw, vec![RawValue::Continuous(10.0), RawValue::Categorical(1)]);
    }

    #[test]
    fn encoding_errors() {
        let text = "v = continuous\nc = categorical\ns = sensitive\ny = label\n\
                    positive_label = yes\nsensitive_group_1 = f";
        let schema = parse_schema(text).unwrap();
        let data = rows(&[&["1", "a", "m", "no"], &["2", "b", "f", "yes"]]);
        assert!(encode::<f64>(&data[0], &schema).is_err(), "unfitted schema");
        let fitted = fit(&schema, &data);

        let unseen = rows(&[&["1", "z", "m", "no"]]);
        let err = encode::<f64>(&unseen[0], &fitted).unwrap_err().to_string();
        assert!(err.contains("unseen level"), "{err}");

        let short = rows(&[&["1", "a", "m"]]);
        assert!(encode::<f64>(&short[0], &fitted).unwrap_err().to_string().contains("missing column"));

        let bad = rows(&[&["x", "a", "m", "no"]]);
        assert!(fit_encoding(bad.iter().map(Vec::as_slice), &schema).is_err());

        let empty: Vec<Vec<String>> = Vec::new();
        let err = fit_encoding(empty.iter().map(Vec::as_slice), &schema).unwrap_err();
        assert!(err.to_string().contains("empty training set"));
    }

    #[test]
    fn encoding_does_not_touch_statistics() {
        let schema = parse_schema(TINY).unwrap();
        let data = rows(&[&["1", "Male", "<=50K"], &["3", "Female", ">50K"]]);
        let fitted = fit(&schema, &data);
        let before = fitted.clone();
        let outside = rows(&[&["100", "Male", ">50K"]]);
        let ex: Example<f32> = encode(&outside[0], &fitted).unwrap();
        assert_eq!(ex.features, vec![98.0f32]);
        assert_eq!(fitted, before);
    }
}
