use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, ColumnSpec, FeatureSchema};
use crate::error::{Error, Result};

/// File names of an encoded cohort inside a cohort directory.
pub const ENCODED_CSV: &str = "cohort.encoded.csv";
pub const ENCODED_SIDECAR: &str = "cohort.encoded.json";
/// File names of a raw cohort (schema plus unencoded table).
pub const RAW_CSV: &str = "cohort.csv";
pub const SCHEMA_JSON: &str = "schema.json";

const SPLIT_COLUMN: &str = "split";
const MISSING_MARKERS: [&str; 5] = ["", "NA", "NaN", "nan", "null"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(value: &str) -> Option<Self> {
        match value.trim() {
            "train" => Some(Split::Train),
            "val" | "valid" | "validation" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Unencoded table as read from (or written to) a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Empty("CSV input has no header".into()));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(text.as_bytes());
        let header = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Per-column z-score parameters fitted on the train split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.collect();
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.std
    }

    pub fn invert(&self, standardized: f64) -> f64 {
        standardized * self.std + self.mean
    }
}

/// Group membership of every row under one sensitive attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveAttribute {
    pub name: String,
    pub group_names: Vec<String>,
    pub codes: Vec<usize>,
}

impl SensitiveAttribute {
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            group_names: self.group_names.clone(),
            codes: rows.iter().map(|&r| self.codes[r]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CohortSidecar {
    format_version: u32,
    schema: FeatureSchema,
    feature_names: Vec<String>,
    sensitive_columns: Vec<usize>,
    scaling: Vec<Option<Standardization>>,
    split: Vec<Split>,
    dropped_rows: usize,
}

/// Encoded, standardized cohort with split assignments.
///
/// Immutable after construction; operations that change splits return a new
/// cohort with standardization refitted on the new train rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    schema: FeatureSchema,
    feature_names: Vec<String>,
    x: Array2<f64>,
    y: Vec<usize>,
    sensitive_columns: Vec<usize>,
    scaling: Vec<Option<Standardization>>,
    split: Vec<Split>,
    dropped_rows: usize,
}

impl Cohort {
    /// Encodes a raw table: one-hot categorical columns, z-scored numeric
    /// columns, rows with missing schema values dropped.
    pub fn from_raw(schema: &FeatureSchema, raw: &RawTable) -> Result<Self> {
        schema.validate()?;
        if raw.rows.is_empty() {
            return Err(Error::Empty("table has no data rows".into()));
        }
        for name in &raw.header {
            if name != SPLIT_COLUMN && !schema.columns.iter().any(|c| &c.name == name) {
                return Err(Error::Schema {
                    column: name.clone(),
                    message: "column not declared in schema".into(),
                });
            }
        }
        let position = |column: &ColumnSpec| -> Result<usize> {
            raw.header.iter().position(|h| h == &column.name).ok_or_else(|| Error::Schema {
                column: column.name.clone(),
                message: "column missing from header".into(),
            })
        };
        let positions = schema
            .columns
            .iter()
            .map(position)
            .collect::<Result<Vec<_>>>()?;
        let split_pos = raw.header.iter().position(|h| h == SPLIT_COLUMN);

        let feature_names = schema.encoded_names();
        let width = feature_names.len();
        let mut data = Vec::with_capacity(raw.rows.len() * width);
        let mut y = Vec::with_capacity(raw.rows.len());
        let mut split = Vec::with_capacity(raw.rows.len());
        let mut dropped_rows = 0;

        'rows: for row in &raw.rows {
            for &p in &positions {
                if MISSING_MARKERS.contains(&row[p].trim()) {
                    dropped_rows += 1;
                    continue 'rows;
                }
            }
            let mut encoded = Vec::with_capacity(width);
            let mut label = 0;
            for (column, &p) in schema.columns.iter().zip(&positions) {
                let value = row[p].trim();
                match column.kind {
                    ColumnKind::Label => {
                        label = value
                            .parse::<usize>()
                            .ok()
                            .filter(|&l| l < schema.num_classes)
                            .ok_or_else(|| Error::Schema {
                                column: column.name.clone(),
                                message: format!(
                                    "label `{value}` is not an integer in 0..{}",
                                    schema.num_classes
                                ),
                            })?;
                    }
                    k if k.is_categorical() => {
                        let index = column
                            .vocabulary
                            .iter()
                            .position(|v| v == value)
                            .ok_or_else(|| Error::UnseenCategory {
                                column: column.name.clone(),
                                value: value.to_owned(),
                            })?;
                        encoded.extend((0..column.vocabulary.len()).map(|i| f64::from(u8::from(i == index))));
                    }
                    _ => {
                        let parsed: f64 = value.parse().map_err(|_| Error::Schema {
                            column: column.name.clone(),
                            message: format!("`{value}` is not a number"),
                        })?;
                        if !parsed.is_finite() {
                            return Err(Error::NonFinite(format!("column `{}`", column.name)));
                        }
                        encoded.push(parsed);
                    }
                }
            }
            let tag = match split_pos {
                Some(p) => Split::parse(&row[p]).ok_or_else(|| Error::Schema {
                    column: SPLIT_COLUMN.into(),
                    message: format!("unknown split tag `{}`", row[p]),
                })?,
                None => Split::Train,
            };
            data.extend(encoded);
            y.push(label);
            split.push(tag);
        }
        if y.is_empty() {
            return Err(Error::Empty(format!("all {dropped_rows} rows had missing values")));
        }
        if dropped_rows > 0 {
            log::info!("dropped {dropped_rows} rows with missing values");
        }
        let x = Array2::from_shape_vec((y.len(), width), data).expect("row width matches schema");

        let mut scaling = Vec::with_capacity(width);
        let mut sensitive_columns = Vec::new();
        for column in schema.feature_columns() {
            let span = column.encoded_names().len();
            if column.kind.is_sensitive() {
                sensitive_columns.extend(scaling.len()..scaling.len() + span);
            }
            let placeholder = column.kind.is_numeric().then_some(Standardization { mean: 0.0, std: 1.0 });
            scaling.extend(std::iter::repeat_n(placeholder, span));
        }

        let unscaled = Self {
            schema: schema.clone(),
            feature_names,
            x,
            y,
            sensitive_columns,
            scaling,
            split,
            dropped_rows,
        };
        unscaled.restandardized()
    }

    /// Builds an all-train cohort from an already numeric matrix. Columns are
    /// treated as plain numeric features with identity scaling.
    pub fn from_matrix(x: Array2<f64>, y: Vec<usize>, num_classes: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "labels".into(),
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        let mut columns: Vec<ColumnSpec> =
            (0..x.ncols()).map(|j| ColumnSpec::numeric(&format!("f{j}"))).collect();
        columns.push(ColumnSpec::label("label"));
        let schema = FeatureSchema::new(columns, num_classes)?;
        if let Some(&bad) = y.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Schema {
                column: "label".into(),
                message: format!("label {bad} outside 0..{num_classes}"),
            });
        }
        let n = y.len();
        Ok(Self {
            feature_names: schema.encoded_names(),
            scaling: vec![Some(Standardization { mean: 0.0, std: 1.0 }); x.ncols()],
            schema,
            x,
            y,
            sensitive_columns: Vec::new(),
            split: vec![Split::Train; n],
            dropped_rows: 0,
        })
    }

    /// Marks encoded columns as sensitive (the `S` sub-matrix).
    pub fn with_sensitive_columns(mut self, columns: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.x.ncols()) {
            return Err(Error::DimensionMismatch {
                context: "sensitive column index".into(),
                expected: self.x.ncols(),
                found: bad,
            });
        }
        self.sensitive_columns = columns;
        Ok(self)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn scaling(&self) -> &[Option<Standardization>] {
        &self.scaling
    }

    pub fn sensitive_columns(&self) -> &[usize] {
        &self.sensitive_columns
    }

    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn num_classes(&self) -> usize {
        self.schema.num_classes
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn rows(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn select_x(&self, rows: &[usize]) -> Array2<f64> {
        self.x.select(Axis(0), rows)
    }

    pub fn select_y(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&i| self.y[i]).collect()
    }

    /// The sensitive sub-matrix `S` over all rows.
    pub fn sensitive_matrix(&self) -> Array2<f64> {
        self.x.select(Axis(1), &self.sensitive_columns)
    }

    /// Undoes standardization; one-hot columns pass through unchanged.
    pub fn destandardize(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut raw = x.clone();
        for (j, mut column) in raw.columns_mut().into_iter().enumerate() {
            if let Some(s) = self.scaling[j] {
                column.mapv_inplace(|v| s.invert(v));
            }
        }
        raw
    }

    /// Replaces split tags and refits standardization on the new train rows.
    pub fn with_split(&self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "split tags".into(),
                expected: self.len(),
                found: split.len(),
            });
        }
        let raw_x = self.destandardize(&self.x);
        let mut next = Self {
            x: raw_x,
            split,
            scaling: self
                .scaling
                .iter()
                .map(|s| s.map(|_| Standardization { mean: 0.0, std: 1.0 }))
                .collect(),
            ..self.clone()
        };
        next = next.restandardized()?;
        Ok(next)
    }

    /// Assumes `self.x` is on the scale described by `self.scaling` and
    /// rewrites it using statistics of the current train rows.
    fn restandardized(mut self) -> Result<Self> {
        let train = self.rows(Split::Train);
        if train.is_empty() {
            return Err(Error::Empty("no rows tagged `train` to fit standardization".into()));
        }
        for j in 0..self.x.ncols() {
            let Some(current) = self.scaling[j] else { continue };
            let mut column = self.x.column_mut(j);
            column.mapv_inplace(|v| current.invert(v));
            let fitted = Standardization::fit(train.iter().map(|&i| column[i]));
            column.mapv_inplace(|v| fitted.apply(v));
            self.scaling[j] = Some(fitted);
        }
        Ok(self)
    }

    /// Every class present in the cohort must also be present among train rows.
    pub fn check_train_classes(&self) -> Result<()> {
        let mut present = vec![false; self.num_classes()];
        for &label in &self.y {
            present[label] = true;
        }
        let mut seen = vec![false; self.num_classes()];
        for i in self.rows(Split::Train) {
            seen[self.y[i]] = true;
        }
        match (0..self.num_classes()).find(|&c| present[c] && !seen[c]) {
            Some(c) => Err(Error::Schema {
                column: self.schema.label_column().map(|l| l.name.clone()).unwrap_or_default(),
                message: format!("class {c} does not appear in the train split"),
            }),
            None => Ok(()),
        }
    }

    /// Per-row groups for each sensitive schema column. Categorical columns
    /// group by category; numeric columns group by their declared bins.
    pub fn sensitive_attributes(&self) -> Vec<SensitiveAttribute> {
        let mut offset = 0;
        let mut attributes = Vec::new();
        for column in self.schema.feature_columns() {
            let span = column.encoded_names().len();
            if column.kind.is_sensitive() {
                let attribute = if column.kind.is_categorical() {
                    let block = self.x.slice(ndarray::s![.., offset..offset + span]);
                    SensitiveAttribute {
                        name: column.name.clone(),
                        group_names: column.vocabulary.clone(),
                        codes: block.rows().into_iter().map(|r| crate::nn::argmax(r.iter())).collect(),
                    }
                } else {
                    let scale = self.scaling[offset].expect("numeric column has scaling");
                    let bins = column.group_bins();
                    SensitiveAttribute {
                        name: column.name.clone(),
                        group_names: bin_names(bins),
                        codes: self
                            .x
                            .column(offset)
                            .iter()
                            .map(|&v| bin_index(bins, scale.invert(v)))
                            .collect(),
                    }
                };
                attributes.push(attribute);
            }
            offset += span;
        }
        attributes
    }

    /// Writes the encoded matrix as CSV plus a JSON sidecar into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut writer = csv::Writer::from_path(dir.join(ENCODED_CSV))?;
        let mut header = self.feature_names.clone();
        header.push("label".into());
        header.push(SPLIT_COLUMN.into());
        writer.write_record(&header)?;
        for (i, row) in self.x.rows().into_iter().enumerate() {
            let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            record.push(self.y[i].to_string());
            record.push(self.split[i].as_str().into());
            writer.write_record(&record)?;
        }
        writer.flush()?;
        let sidecar = CohortSidecar {
            format_version: 1,
            schema: self.schema.clone(),
            feature_names: self.feature_names.clone(),
            sensitive_columns: self.sensitive_columns.clone(),
            scaling: self.scaling.clone(),
            split: self.split.clone(),
            dropped_rows: self.dropped_rows,
        };
        fs::write(dir.join(ENCODED_SIDECAR), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Reads a cohort written by [`Cohort::write`].
    pub fn read(dir: &Path) -> Result<Self> {
        let sidecar: CohortSidecar = serde_json::from_str(&fs::read_to_string(dir.join(ENCODED_SIDECAR))?)?;
        let table = RawTable::read_csv(&dir.join(ENCODED_CSV))?;
        let width = sidecar.feature_names.len();
        if table.header.len() != width + 2 || table.header[..width] != sidecar.feature_names[..] {
            return Err(Error::Schema {
                column: ENCODED_CSV.into(),
                message: "encoded header does not match sidecar feature names".into(),
            });
        }
        let mut data = Vec::with_capacity(table.rows.len() * width);
        let mut y = Vec::with_capacity(table.rows.len());
        let mut split = Vec::with_capacity(table.rows.len());
        for row in &table.rows {
            for (j, cell) in row[..width].iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::Schema {
                    column: sidecar.feature_names[j].clone(),
                    message: format!("`{cell}` is not a number"),
                })?;
                data.push(v);
            }
            y.push(row[width].parse::<usize>().map_err(|_| Error::Schema {
                column: "label".into(),
                message: format!("`{}` is not a label", row[width]),
            })?);
            split.push(Split::parse(&row[width + 1]).ok_or_else(|| Error::Schema {
                column: SPLIT_COLUMN.into(),
                message: format!("unknown split tag `{}`", row[width + 1]),
            })?);
        }
        if split != sidecar.split {
            return Err(Error::Schema {
                column: SPLIT_COLUMN.into(),
                message: "split tags disagree with sidecar".into(),
            });
        }
        let x = Array2::from_shape_vec((y.len(), width), data).expect("row width checked");
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(ENCODED_CSV.into()));
        }
        Ok(Self {
            schema: sidecar.schema,
            feature_names: sidecar.feature_names,
            x,
            y,
            sensitive_columns: sidecar.sensitive_columns,
            scaling: sidecar.scaling,
            split,
            dropped_rows: sidecar.dropped_rows,
        })
    }
}

/// Loads a raw CSV file and encodes it against `schema`.
pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<Cohort> {
    let raw = RawTable::read_csv(path)?;
    Cohort::from_raw(schema, &raw)
}

pub fn bin_index(bins: &[f64], value: f64) -> usize {
    bins.iter().take_while(|&&edge| value > edge).count()
}

fn bin_names(bins: &[f64]) -> Vec<String> {
    let mut names = Vec::with_capacity(bins.len() + 1);
    for (i, edge) in bins.iter().enumerate() {
        if i == 0 {
            names.push(format!("<={edge}"));
        } else {
            names.push(format!("({},{edge}]", bins[i - 1]));
        }
    }
    names.push(format!(">{}", bins.last().copied().unwrap_or(f64::NEG_INFINITY)));
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                ColumnSpec::numeric("x"),
                ColumnSpec::categorical("sex", &["M", "F"]).sensitive(),
                ColumnSpec::numeric("age").sensitive(),
                ColumnSpec::label("y"),
            ],
            4,
        )
        .unwrap()
    }

    #[test]
    fn standardizes_with_population_std() {
        let raw = RawTable::parse_csv("x,sex,age,y\n1,M,10,0\n2,F,20,1\n3,M,60,3\n").unwrap();
        let cohort = Cohort::from_raw(&schema(), &raw).unwrap();
        let expected = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (got, want) in cohort.x().column(0).iter().zip(expected) {
            assert!((got - want).abs() < 1e-4);
        }
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let raw = RawTable::parse_csv("x,sex,age,y\n1,M,10,0\n2,F,20,1\n3,M,60,3\n").unwrap();
        let cohort = Cohort::from_raw(&schema(), &raw).unwrap();
        for row in cohort.x().rows() {
            assert_eq!(row[1] + row[2], 1.0);
            assert!(row[1] == 0.0 || row[1] == 1.0);
        }
        assert_eq!(cohort.sensitive_columns(), &[1, 2, 3]);
    }

    #[test]
    fn out_of_range_label_is_schema_error() {
        let raw = RawTable::parse_csv("x,sex,age,y\n1,M,10,5\n").unwrap();
        let err = Cohort::from_raw(&schema(), &raw).unwrap_err();
        assert!(matches!(err, Error::Schema { column, .. } if column == "y"));
    }

    #[test]
    fn unseen_category_names_value_and_column() {
        let raw = RawTable::parse_csv("x,sex,age,y\n1,X,10,0\n").unwrap();
        match Cohort::from_raw(&schema(), &raw).unwrap_err() {
            Error::UnseenCategory { column, value } => {
                assert_eq!(column, "sex");
                assert_eq!(value, "X");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_header_column_is_named() {
        let raw = RawTable::parse_csv("x,sex,y\n1,M,0\n").unwrap();
        let err = Cohort::from_raw(&schema(), &raw).unwrap_err();
        assert!(matches!(err, Error::Schema { column, .. } if column == "age"));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(RawTable::parse_csv(""), Err(Error::Empty(_))));
        let raw = RawTable::parse_csv("x,sex,age,y\n").unwrap();
        assert!(matches!(Cohort::from_raw(&schema(), &raw), Err(Error::Empty(_))));
    }

    #[test]
    fn rows_with_missing_values_are_dropped_and_counted() {
        let raw = RawTable::parse_csv("x,sex,age,y\n1,M,10,0\n,F,20,1\n3,M,NA,3\n4,F,40,2\n").unwrap();
        let cohort = Cohort::from_raw(&schema(), &raw).unwrap();
        assert_eq!(cohort.len(), 2);
        assert_eq!(cohort.dropped_rows(), 2);
    }

    #[test]
    fn age_groups_follow_bins() {
        assert_eq!(bin_index(&[18.0, 35.0, 50.0], 18.0), 0);
        assert_eq!(bin_index(&[18.0, 35.0, 50.0], 18.5), 1);
        assert_eq!(bin_index(&[18.0, 35.0, 50.0], 50.0), 2);
        assert_eq!(bin_index(&[18.0, 35.0, 50.0], 80.0), 3);
        let raw = RawTable::parse_csv("x,sex,age,y\n1,M,10,0\n2,F,20,1\n3,M,60,3\n").unwrap();
        let cohort = Cohort::from_raw(&schema(), &raw).unwrap();
        let attrs = cohort.sensitive_attributes();
        assert_eq!(attrs[0].name, "sex");
        assert_eq!(attrs[0].codes, vec![0, 1, 0]);
        assert_eq!(attrs[1].codes, vec![0, 1, 3]);
        assert_eq!(attrs[1].group_names.len(), 4);
    }

    #[test]
    fn split_column_controls_standardization_rows() {
        let raw = RawTable::parse_csv(
            "x,sex,age,y,split\n1,M,10,0,train\n3,F,20,1,train\n100,M,60,3,test\n",
        )
        .unwrap();
        let cohort = Cohort::from_raw(&schema(), &raw).unwrap();
        assert_eq!(cohort.scaling()[0].unwrap().mean, 2.0);
        assert_eq!(cohort.split()[2], Split::Test);
    }
}
